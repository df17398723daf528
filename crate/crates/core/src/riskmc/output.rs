//! Text exports of Monte Carlo results.

use std::io::{self, Write};

use super::engine::{RiskSummary, SampleRecord};
use super::stats::HistogramBin;

pub const SAMPLES_HEADER: &str = "sample_id,line,type,location_pct,fct_s,sev_a,sev_v,sev_f,g_sample,termination";

/// One row per sample. Failed samples keep their fault columns and leave
/// the severities empty.
pub fn write_samples_csv<W: Write>(records: &[SampleRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "{SAMPLES_HEADER}")?;
    for r in records {
        let f = &r.fault;
        write!(w, "{},{},{},{},{},", r.sample_id, f.line, f.fault_type, f.location_pct, f.clearing_time())?;
        if r.is_failed() {
            writeln!(w, ",,,,{}", r.status.as_str())?;
        } else {
            writeln!(w, "{},{},{},{},{}", r.sev_a, r.sev_v, r.sev_f, r.g_sample, r.status.as_str())?;
        }
    }
    Ok(())
}

pub fn summary_json(summary: &RiskSummary) -> String {
    serde_json::to_string_pretty(summary).expect("summary fields are finite numbers")
}

pub fn write_histogram_csv<W: Write>(bins: &[HistogramBin], mut w: W) -> io::Result<()> {
    writeln!(w, "bin_center,count")?;
    for b in bins {
        writeln!(w, "{},{}", b.center, b.count)?;
    }
    Ok(())
}
