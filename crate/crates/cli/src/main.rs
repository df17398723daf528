mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use config::{FileConfig, RunConfig};
use output::RunDir;
use stabrisk::dynsim::{init_dynamics, FaultEvent, FaultType};
use stabrisk::metrics::evaluate_trajectory;
use stabrisk::netmodel::{load_case, BranchId, PowerSystemCase};
use stabrisk::powerflow::{solve_power_flow_with, PowerFlowOptions};
use stabrisk::riskmc::{
    histogram, run_monte_carlo, summary_json, write_histogram_csv, write_samples_csv, FaultDistributions, McResult,
    RiskMode,
};
use stabrisk::scenario::{compute_penetration, ScenarioSpec};

#[derive(Parser, Debug)]
#[command(name = "stabrisk", version, about = "Transient-stability risk assessment under random faults")]
struct Cli {
    /// TOML run configuration; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the AC power flow and write the bus solution table.
    Powerflow {
        #[command(flatten)]
        common: CommonArgs,
        /// Largest accepted power mismatch (pu).
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 20)]
        max_iter: usize,
    },
    /// Run one deterministic simulation and report its stability metrics.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        fault: FaultArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Estimate the risk indices by Monte Carlo fault sampling.
    Mc {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// One Monte Carlo run per point along a scenario axis.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated points: penetration levels in percent, or scale factors.
        #[arg(long, value_delimiter = ',', required = true)]
        points: Vec<f64>,
    },
    /// Parse and check a case file.
    ValidateCase {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Case file; the bundled 39-bus case when omitted.
    #[arg(long)]
    case: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct SimArgs {
    /// Integration step (s).
    #[arg(long)]
    dt: Option<f64>,
    /// Simulated time (s).
    #[arg(long)]
    t_end: Option<f64>,
    /// Voltage deviation threshold (pu).
    #[arg(long)]
    voltage_threshold: Option<f64>,
    /// Frequency deviation threshold (Hz).
    #[arg(long)]
    frequency_threshold: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct McArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Sample budget.
    #[arg(long)]
    n_max: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_parser = parse_risk_mode)]
    risk_mode: Option<RiskMode>,
    #[arg(long)]
    checkpoint_interval: Option<usize>,
    #[arg(long)]
    convergence_window: Option<usize>,
    #[arg(long)]
    convergence_threshold: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    /// Also draw the histogram as an SVG image.
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug, Default)]
struct ScenarioArgs {
    /// Replace the tabulated unit set for this wind penetration (0, 25, 50 or 80).
    #[arg(long, group = "scenario")]
    penetration: Option<u32>,
    /// Replace these units by wind (comma-separated ids).
    #[arg(long, value_delimiter = ',', group = "scenario")]
    replace: Option<Vec<String>>,
    /// Scale every unit rating by this factor.
    #[arg(long, group = "scenario")]
    generation_scale: Option<f64>,
    /// Scale every load by this factor.
    #[arg(long, group = "scenario")]
    load_scale: Option<f64>,
}

impl ScenarioArgs {
    fn spec(&self) -> Option<ScenarioSpec> {
        if let Some(p) = self.penetration {
            return Some(ScenarioSpec::WindPenetration { penetration_pct: Some(p), replaced: vec![] });
        }
        if let Some(r) = &self.replace {
            return Some(ScenarioSpec::WindPenetration { penetration_pct: None, replaced: r.clone() });
        }
        if let Some(f) = self.generation_scale {
            return Some(ScenarioSpec::GenerationScale { factor: f });
        }
        self.load_scale.map(|f| ScenarioSpec::LoadScale { factor: f })
    }
}

#[derive(Args, Debug)]
struct FaultArgs {
    /// Simulate without a fault.
    #[arg(long, conflicts_with_all = ["line", "fault_type", "location", "fct"])]
    no_fault: bool,
    /// Faulted line: branch id, or `FROM-TO` bus pair.
    #[arg(long, required_unless_present = "no_fault")]
    line: Option<String>,
    /// LLL, LLG, LL or LG.
    #[arg(long = "type", value_parser = parse_fault_type, default_value = "LLL")]
    fault_type: FaultType,
    /// Distance from the from-bus, percent of the line (1-100).
    #[arg(long, default_value_t = 50)]
    location: u8,
    /// Fault clearing time (s).
    #[arg(long, default_value_t = 0.2)]
    fct: f64,
    /// Fault inception time (s).
    #[arg(long, default_value_t = 1.0)]
    t_apply: f64,
    /// Leave the line in service after clearing.
    #[arg(long)]
    no_trip: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum Axis {
    Penetration,
    Generation,
    Load,
}

fn parse_fault_type(s: &str) -> Result<FaultType, String> {
    s.to_ascii_uppercase().parse().map_err(|e: stabrisk::Error| e.to_string())
}

fn parse_risk_mode(s: &str) -> Result<RiskMode, String> {
    s.parse().map_err(|e: stabrisk::Error| e.to_string())
}

/// Failure classes and their exit codes.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<stabrisk::Error>() {
            Some(inner) if is_numerical(inner) => Failure::Numerical(e),
            _ => Failure::Usage(e),
        }
    }
}

impl From<stabrisk::Error> for Failure {
    fn from(e: stabrisk::Error) -> Self {
        Failure::from(anyhow::Error::new(e))
    }
}

fn is_numerical(e: &stabrisk::Error) -> bool {
    use stabrisk::Error as E;
    matches!(
        e,
        E::PowerFlowDiverged { .. }
            | E::SingularJacobian { .. }
            | E::Initialization { .. }
            | E::SingularNetwork(_)
            | E::DegenerateSequence(_)
            | E::MonteCarlo(_)
            | E::LoadScalePowerFlow { .. }
    )
}

const UNCONVERGED: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let (Failure::Usage(e) | Failure::Numerical(e)) = &f;
            eprintln!("error: {}", describe(e));
            ExitCode::from(f.code())
        }
    }
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Powerflow { common, tol, max_iter } => {
            let cfg = RunConfig::resolve(&flags(&common, None, None, None), &file)?;
            cmd_powerflow(&cfg, tol, max_iter)
        }
        Command::Simulate { common, fault, sim, scenario } => {
            let cfg = RunConfig::resolve(&flags(&common, Some(&sim), None, Some(&scenario)), &file)?;
            cmd_simulate(&cfg, &fault)
        }
        Command::Mc { common, mc, sim, scenario } => {
            let cfg = RunConfig::resolve(&flags(&common, Some(&sim), Some(&mc), Some(&scenario)), &file)?;
            cmd_mc(&cfg, mc.svg)
        }
        Command::Sweep { common, mc, sim, axis, points } => {
            let cfg = RunConfig::resolve(&flags(&common, Some(&sim), Some(&mc), None), &file)?;
            cmd_sweep(&cfg, axis, &points)
        }
        Command::ValidateCase { common } => {
            let cfg = RunConfig::resolve(&flags(&common, None, None, None), &file)?;
            cmd_validate(&cfg)
        }
    }
}

fn flags(common: &CommonArgs, sim: Option<&SimArgs>, mc: Option<&McArgs>, sc: Option<&ScenarioArgs>) -> FileConfig {
    let sim_d = SimArgs::default();
    let mc_d = McArgs::default();
    let (sim, mc) = (sim.unwrap_or(&sim_d), mc.unwrap_or(&mc_d));
    FileConfig {
        case: common.case.clone(),
        output_dir: common.out.clone(),
        seed: mc.seed,
        n_max: mc.n_max,
        dt: sim.dt,
        t_end: sim.t_end,
        risk_mode: mc.risk_mode,
        voltage_threshold: sim.voltage_threshold,
        frequency_threshold: sim.frequency_threshold,
        workers: mc.workers,
        checkpoint_interval: mc.checkpoint_interval,
        convergence_window: mc.convergence_window,
        convergence_threshold: mc.convergence_threshold,
        histogram_bins: mc.bins,
        scenario: sc.and_then(ScenarioArgs::spec),
    }
}

fn base_case(cfg: &RunConfig) -> Result<PowerSystemCase, Failure> {
    match &cfg.case {
        Some(p) => Ok(load_case(p)?),
        None => Ok(PowerSystemCase::ieee39()),
    }
}

fn scenario_case(cfg: &RunConfig) -> Result<PowerSystemCase, Failure> {
    let case = base_case(cfg)?;
    match &cfg.scenario {
        Some(s) => Ok(s.apply(&case)?),
        None => Ok(case),
    }
}

fn cmd_powerflow(cfg: &RunConfig, tol: f64, max_iter: usize) -> Result<u8, Failure> {
    let case = base_case(cfg)?;
    let sol = solve_power_flow_with(&case, &PowerFlowOptions { tol, max_iter, ..Default::default() })?;
    let mut out = RunDir::create(&cfg.output_dir)?;
    out.write_str("powerflow.csv", &sol.to_table())?;
    out.finish("powerflow", &(cfg, tol, max_iter), None)?;
    println!(
        "converged in {} iterations, max mismatch {:.3e} pu, losses {:.2} MW, {} buses",
        sol.iterations,
        sol.max_mismatch,
        sol.losses_pu() * case.system.mva_base,
        sol.bus_ids.len()
    );
    Ok(0)
}

fn resolve_line(case: &PowerSystemCase, spec: &str) -> anyhow::Result<BranchId> {
    let id = if let Some((a, b)) = spec.split_once('-') {
        let (a, b): (u32, u32) = (a.trim().parse()?, b.trim().parse()?);
        case.branches
            .iter()
            .find(|br| br.is_line() && ((br.from, br.to) == (a, b) || (br.from, br.to) == (b, a)))
            .map(|br| br.id)
            .ok_or_else(|| anyhow!("no line between buses {a} and {b}"))?
    } else {
        spec.trim().parse().with_context(|| format!("'{spec}' is neither a branch id nor FROM-TO"))?
    };
    match case.branch(id) {
        Some(br) if br.is_line() => Ok(id),
        Some(_) => Err(anyhow!("branch {id} is a transformer; faults are placed on lines")),
        None => Err(anyhow!("no branch with id {id}")),
    }
}

#[derive(Serialize)]
struct SimReport {
    termination: String,
    diverged_at_s: Option<f64>,
    lost_synchronism: bool,
    delta_max_deg: f64,
    tsi: f64,
    sev_a: f64,
    sev_v: f64,
    sev_f: f64,
    g: f64,
    voltage_settled: bool,
    frequency_settled: bool,
    max_network_residual: f64,
    unconverged_steps: usize,
}

fn cmd_simulate(cfg: &RunConfig, args: &FaultArgs) -> Result<u8, Failure> {
    let case = scenario_case(cfg)?;
    let fault = if args.no_fault {
        None
    } else {
        let line = resolve_line(&case, args.line.as_deref().unwrap_or_default())?;
        let f = FaultEvent {
            line,
            location_pct: args.location,
            fault_type: args.fault_type,
            t_apply: args.t_apply,
            t_clear: args.t_apply + args.fct,
            trip_line: !args.no_trip,
        };
        f.check()?;
        Some(f)
    };
    let pf = solve_power_flow_with(&case, &PowerFlowOptions::default())?;
    let model = init_dynamics(&case, &pf)?;
    let tr = model.simulate(fault.as_ref(), &cfg.sim())?;
    let m = evaluate_trajectory(&tr, &cfg.metrics())?;
    let s = m.severities();
    let report = SimReport {
        termination: tr.termination.label().to_string(),
        diverged_at_s: match &tr.termination {
            stabrisk::dynsim::Termination::Diverged { t, .. } => Some(*t),
            _ => None,
        },
        lost_synchronism: tr.lost_synchronism,
        delta_max_deg: m.angle.delta_max_deg,
        tsi: m.angle.tsi,
        sev_a: s.sev_a,
        sev_v: s.sev_v,
        sev_f: s.sev_f,
        g: s.g(),
        voltage_settled: m.voltage.settled,
        frequency_settled: m.frequency.settled,
        max_network_residual: tr.max_network_residual,
        unconverged_steps: tr.unconverged_steps,
    };
    let mut out = RunDir::create(&cfg.output_dir)?;
    out.write_with("trajectory.csv", |w| tr.write_csv(w))?;
    out.write_str("metrics.json", &(serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)? + "\n"))?;
    out.finish("simulate", &(cfg, &fault), None)?;
    println!("termination   {}", report.termination);
    if let stabrisk::dynsim::Termination::Diverged { t, cause } = &tr.termination {
        println!("diverged at   {t} s ({cause})");
    }
    println!("delta_max     {:.3} deg", report.delta_max_deg);
    println!("tsi           {:.6}", report.tsi);
    println!("sev_a         {}", report.sev_a);
    println!("sev_v         {}", report.sev_v);
    println!("sev_f         {}", report.sev_f);
    Ok(0)
}

fn write_mc(out: &mut RunDir, r: &McResult, bins: usize, svg: bool, prefix: &str) -> anyhow::Result<()> {
    out.write_with(&format!("{prefix}samples.csv"), |w| write_samples_csv(&r.records, w))?;
    out.write_str(&format!("{prefix}summary.json"), &(summary_json(&r.summary) + "\n"))?;
    let g: Vec<f64> = r.records.iter().filter(|x| !x.is_failed()).map(|x| x.g_sample).collect();
    let h = histogram(&g, bins);
    out.write_with(&format!("{prefix}histogram.csv"), |w| write_histogram_csv(&h, w))?;
    if svg {
        out.write_str(&format!("{prefix}histogram.svg"), &output::histogram_svg(&h, "per-sample G"))?;
    }
    Ok(())
}

fn cmd_mc(cfg: &RunConfig, svg: bool) -> Result<u8, Failure> {
    let case = scenario_case(cfg)?;
    let t = Instant::now();
    let r = run_monte_carlo(&case, &FaultDistributions::default(), &cfg.mc())?;
    let mut out = RunDir::create(&cfg.output_dir)?;
    write_mc(&mut out, &r, cfg.histogram_bins, svg, "")?;
    out.finish("mc", cfg, Some(cfg.seed))?;
    let s = &r.summary;
    println!("samples       {} ({} failed) in {:.1?}", s.n_attempted, s.n_failed, t.elapsed());
    println!("R_AM          {}", s.r_am);
    println!("R_VM          {}", s.r_vm);
    println!("R_FM          {}", s.r_fm);
    println!("G             {}", s.g);
    println!("per-sample G  Normal(mean {}, std {})", s.g_sample_mean, s.g_sample_std);
    println!("converged     {}", s.converged);
    Ok(if s.converged { 0 } else { UNCONVERGED })
}

fn sweep_spec(axis: Axis, point: f64) -> anyhow::Result<ScenarioSpec> {
    Ok(match axis {
        Axis::Penetration => {
            anyhow::ensure!(point >= 0.0 && point.fract() == 0.0, "penetration point {point} is not a whole percent");
            ScenarioSpec::WindPenetration { penetration_pct: Some(point as u32), replaced: vec![] }
        }
        Axis::Generation => ScenarioSpec::GenerationScale { factor: point },
        Axis::Load => ScenarioSpec::LoadScale { factor: point },
    })
}

fn cmd_sweep(cfg: &RunConfig, axis: Axis, points: &[f64]) -> Result<u8, Failure> {
    let base = base_case(cfg)?;
    let mut rows = String::from("point,penetration_pct,g,r_am,r_vm,r_fm,n,converged\n");
    let mut out = RunDir::create(&cfg.output_dir)?;
    let mut all_converged = true;
    for &p in points {
        let spec = sweep_spec(axis, p)?;
        let case = spec.apply(&base).map_err(|e| anyhow::Error::new(e).context(format!("sweep point {p}")))?;
        let r = run_monte_carlo(&case, &FaultDistributions::default(), &cfg.mc())
            .map_err(|e| anyhow::Error::new(e).context(format!("sweep point {p}")))?;
        let s = &r.summary;
        let pen = compute_penetration(&case)?;
        rows += &format!("{p},{pen},{},{},{},{},{},{}\n", s.g, s.r_am, s.r_vm, s.r_fm, s.n, s.converged);
        println!("{p:>8}  G {:.6}  R_AM {:.6}  R_VM {:.6}  R_FM {:.6}", s.g, s.r_am, s.r_vm, s.r_fm);
        all_converged &= s.converged;
        write_mc(&mut out, &r, cfg.histogram_bins, false, &format!("point_{p}_"))?;
    }
    out.write_str("curve.csv", &rows)?;
    out.finish("sweep", &(cfg, axis, points), Some(cfg.seed))?;
    Ok(if all_converged { 0 } else { UNCONVERGED })
}

fn cmd_validate(cfg: &RunConfig) -> Result<u8, Failure> {
    let case = base_case(cfg)?;
    let report = case.validate()?;
    println!(
        "{}: {} buses, {} lines, {} transformers, {} loads ({:.1} MW), {} generators",
        if case.system.name.is_empty() { "case" } else { &case.system.name },
        case.buses.len(),
        case.line_count(),
        case.transformer_count(),
        case.loads.len(),
        case.total_load_mw(),
        case.generators.len()
    );
    // "branch 7: z defaulted" repeated per branch collapses to one line
    let mut groups: Vec<(String, Vec<String>)> = Vec::new();
    for w in &report.warnings {
        let (subject, text) = w.split_once(": ").unwrap_or(("", w));
        match groups.iter_mut().find(|(t, _)| t == text) {
            Some((_, subjects)) => subjects.push(subject.to_string()),
            None => groups.push((text.to_string(), vec![subject.to_string()])),
        }
    }
    for (text, subjects) in groups {
        match subjects.as_slice() {
            [one] if one.is_empty() => println!("warning: {text}"),
            [one] => println!("warning: {one}: {text}"),
            many => println!("warning: {text} ({} items: {} ... {})", many.len(), many[0], many[many.len() - 1]),
        }
    }
    Ok(0)
}
