use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};
use stabrisk::riskmc::HistogramBin;

/// Collects the files of one run directory. Each file goes through a
/// temporary in the same directory and is renamed into place when complete.
pub struct RunDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(RunDir { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write_with(&mut self, name: &str, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)
            .with_context(|| format!("creating a temporary file in {}", self.dir.display()))?;
        {
            let mut w = std::io::BufWriter::new(tmp.as_file_mut());
            fill(&mut w).with_context(|| format!("writing {}", path.display()))?;
            w.flush()?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(&path).with_context(|| format!("moving {} into place", path.display()))?;
        log::info!("wrote {}", path.display());
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn write_str(&mut self, name: &str, text: &str) -> anyhow::Result<PathBuf> {
        self.write_with(name, |w| w.write_all(text.as_bytes()))
    }

    /// Writes `manifest.json` listing the config hash, seed and every file
    /// produced so far.
    pub fn finish<C: Serialize>(mut self, command: &str, config: &C, seed: Option<u64>) -> anyhow::Result<()> {
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: config_hash(config)?,
            seed,
            files: self.files.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        self.write_str("manifest.json", &text)?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    version: String,
    config_sha256: String,
    seed: Option<u64>,
    files: Vec<String>,
}

pub fn config_hash<C: Serialize>(config: &C) -> anyhow::Result<String> {
    let bytes = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

/// Minimal bar chart of a histogram.
pub fn histogram_svg(bins: &[HistogramBin], label: &str) -> String {
    let (w, h, pad) = (640.0, 360.0, 40.0);
    let max = bins.iter().map(|b| b.count).max().unwrap_or(0).max(1) as f64;
    let bar = (w - 2.0 * pad) / bins.len().max(1) as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (i, b) in bins.iter().enumerate() {
        let bh = (h - 2.0 * pad) * b.count as f64 / max;
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"steelblue\"><title>{:.4}: {}</title></rect>",
            pad + i as f64 * bar,
            h - pad - bh,
            (bar - 1.0).max(0.5),
            bh,
            b.center,
            b.count
        );
    }
    let _ = writeln!(s, "<line x1=\"{pad}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>", h - pad, w - pad);
    if let (Some(first), Some(last)) = (bins.first(), bins.last()) {
        let _ = writeln!(s, "<text x=\"{pad}\" y=\"{}\" font-size=\"12\">{:.3}</text>", h - pad / 3.0, first.center);
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{:.3}</text>",
            w - pad,
            h - pad / 3.0,
            last.center
        );
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">{label}</text>", w / 2.0, pad / 2.0);
    s.push_str("</svg>\n");
    s
}
