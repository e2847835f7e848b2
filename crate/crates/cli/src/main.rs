//! `harmonic`: run photon-statistics experiments from JSON configs or flags.
//!
//! Exit status is 0 on success, 2 for configuration errors and 3 for
//! numerical failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use harmonic_core::experiment::{
    reproduce_tables_to, run_experiment, scan_global_fano_to, ExperimentConfig, RunArtifact, ScanRun, TableRun,
};
use harmonic_core::fock::{DEFAULT_TAIL_TOL, MAX_BLOCK_DIM};
use harmonic_core::Error;

#[derive(Parser)]
#[command(name = "harmonic", version, about = "Photon statistics of N-th harmonic generation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Random seed for the semiclassical ensemble.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Poissonian tail mass dropped per mode when truncating Fock space.
    #[arg(long, global = true)]
    tail_tol: Option<f64>,
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Include the expensive N = 4, 5 rows in reproduce-table.
    #[arg(long, global = true)]
    slow: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Exact quantum propagation of photon-number moments.
    Evolve(RunArgs),
    /// Single classical trajectory.
    Classical(RunArgs),
    /// Ensemble of classical trajectories with Gaussian input noise.
    Ensemble(RunArgs),
    /// Closed-form predictions for the configured input.
    Analytic(RunArgs),
    /// Husimi Q functions of both modes at the given times.
    Qfunc(QfuncArgs),
    /// Time-averaged Fano factors over a grid of real input amplitudes.
    ScanGlobalFano(ScanArgs),
    /// Stationary Fano factors against the semiclassical fractions.
    ReproduceTable(TableArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Harmonic order N.
    #[arg(long)]
    order: Option<u32>,
    #[arg(long)]
    coupling: Option<f64>,
    /// Fundamental amplitude as `re` or `re,im`.
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
    alpha1: Option<[f64; 2]>,
    /// Harmonic amplitude as `re` or `re,im`.
    #[arg(long = "alphaN", value_parser = parse_complex, allow_hyphen_values = true)]
    alpha_n: Option<[f64; 2]>,
    /// End of a uniform grid in units of gt.
    #[arg(long)]
    gt_end: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Scaled-time window `lo,hi` for mean ± RMS statistics.
    #[arg(long, value_parser = parse_pair)]
    window: Option<[f64; 2]>,
    /// Comma-separated observables: fano, quadrature, qfunc, clouds.
    #[arg(long, value_delimiter = ',')]
    observables: Vec<String>,
    /// Trajectory count for the ensemble.
    #[arg(long)]
    count: Option<usize>,
    /// Comma-separated times (gt) for cloud snapshots.
    #[arg(long, value_delimiter = ',')]
    snapshots: Vec<f64>,
}

#[derive(Args)]
struct QfuncArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated times (gt).
    #[arg(long, value_delimiter = ',', required = true)]
    times: Vec<f64>,
    /// Grid points per axis.
    #[arg(long)]
    resolution: Option<usize>,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long, default_value_t = 2)]
    order: u32,
    /// Fundamental amplitudes: `a,b,c` or `start:stop:count`.
    #[arg(long, value_parser = parse_list)]
    alpha1: AmpList,
    /// Harmonic amplitudes: `a,b,c` or `start:stop:count`.
    #[arg(long = "alphaN", alias = "alpha2", value_parser = parse_list)]
    alpha_n: AmpList,
    /// Average over [0, horizon] in gt instead of the infinite-time limit.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value_t = MAX_BLOCK_DIM)]
    max_dim: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Fundamental,
    Harmonic,
    Both,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, value_enum, default_value_t = Which::Both)]
    table: Which,
    /// Comma-separated orders; defaults to 1,2,3 (plus 4,5 with --slow).
    #[arg(long, value_delimiter = ',')]
    orders: Vec<u32>,
    #[arg(long, default_value_t = 5.0)]
    r: f64,
    /// Largest admissible block dimension; larger rows are reported, not run.
    #[arg(long, default_value_t = MAX_BLOCK_DIM)]
    max_dim: usize,
    #[arg(long, default_value_t = 2001)]
    samples: usize,
}

fn parse_complex(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}"));
    match parts.as_slice() {
        [re] => Ok([num(re)?, 0.0]),
        [re, im] => Ok([num(re)?, num(im)?]),
        _ => Err("expected `re` or `re,im`".into()),
    }
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    match parse_complex(s)? {
        p if s.contains(',') => Ok(p),
        _ => Err("expected `lo,hi`".into()),
    }
}

#[derive(Clone, Debug, PartialEq)]
struct AmpList(Vec<f64>);

fn parse_list(s: &str) -> Result<AmpList, String> {
    let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}"));
    if let [a, b, n] = s.split(':').collect::<Vec<_>>().as_slice() {
        let n: usize = n.trim().parse().map_err(|e| format!("`{n}`: {e}"))?;
        if n < 1 {
            return Err("count must be >= 1".into());
        }
        let (a, b) = (num(a)?, num(b)?);
        let step = if n > 1 { (b - a) / (n - 1) as f64 } else { 0.0 };
        return Ok(AmpList((0..n).map(|i| if i + 1 == n { b } else { a + step * i as f64 }).collect()));
    }
    s.split(',').map(num).collect::<Result<_, _>>().map(AmpList)
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn read_config(path: &PathBuf) -> Result<Map<String, Value>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Failure::Config(format!("{}: top level must be an object", path.display()))),
        Err(e) => Err(Failure::Config(format!("{}: {e}", path.display()))),
    }
}

fn nested<'a>(m: &'a mut Map<String, Value>, key: &str) -> &'a mut Map<String, Value> {
    let slot = m.entry(key.to_string()).or_insert_with(|| json!({}));
    if !slot.is_object() {
        *slot = json!({});
    }
    slot.as_object_mut().expect("object just ensured")
}

/// Merges the config file, the flags and the global options into one JSON
/// document, then parses it so that every field is validated in one place.
fn build_config(engine: &str, args: &RunArgs, g: &Global) -> Result<ExperimentConfig, Failure> {
    build_config_with(engine, args, g, Map::new())
}

fn build_config_with(engine: &str, args: &RunArgs, g: &Global, extra: Map<String, Value>) -> Result<ExperimentConfig, Failure> {
    let mut m = match &args.config {
        Some(p) => read_config(p)?,
        None => Map::new(),
    };
    m.extend(extra);
    m.insert("engine".into(), json!(engine));
    if let Some(n) = args.order {
        nested(&mut m, "model").insert("order".into(), json!(n));
    }
    if let Some(c) = args.coupling {
        nested(&mut m, "model").insert("coupling".into(), json!(c));
    }
    if let Some(a) = args.alpha1 {
        nested(&mut m, "input").insert("alpha1".into(), json!(a));
    }
    if let Some(a) = args.alpha_n {
        nested(&mut m, "input").insert("alphaN".into(), json!(a));
    }
    if args.gt_end.is_some() || args.samples.is_some() {
        let grid = nested(&mut m, "grid");
        if args.gt_end.is_some() || grid.get("kind").is_none() {
            grid.insert("kind".into(), json!("time"));
            grid.remove("tau_start");
            grid.remove("tau_end");
        }
        if let Some(t) = args.gt_end {
            grid.insert("gt_end".into(), json!(t));
        }
        grid.insert("samples".into(), json!(args.samples.unwrap_or(1001)));
    }
    if let Some(w) = args.window {
        m.insert("window".into(), json!(w));
    }
    if !args.observables.is_empty() {
        m.insert("observables".into(), json!(args.observables));
    }
    if let Some(c) = args.count {
        nested(&mut m, "noise").insert("count".into(), json!(c));
    }
    if !args.snapshots.is_empty() {
        m.insert("snapshot_times".into(), json!(args.snapshots));
        let obs = m.entry("observables").or_insert_with(|| json!(["fano"]));
        if let Some(list) = obs.as_array_mut() {
            if !list.iter().any(|v| v == "clouds") {
                list.push(json!("clouds"));
            }
        }
    }
    if let Some(s) = g.seed {
        nested(&mut m, "noise").insert("seed".into(), json!(s));
    }
    if let Some(o) = &g.out {
        m.insert("output_dir".into(), json!(o));
    }
    if let Some(t) = g.tail_tol {
        m.insert("tail_tol".into(), json!(t));
    }
    let text = serde_json::to_string(&Value::Object(m)).map_err(|e| Failure::Config(e.to_string()))?;
    Ok(ExperimentConfig::from_json_str(&text)?)
}

fn report(artifact: &RunArtifact) -> Result<(), Failure> {
    eprintln!("wrote {} files to {}", artifact.files.len(), artifact.output_dir.display());
    let text = serde_json::to_string_pretty(&artifact.summary).map_err(|e| Failure::Numerical(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn out_dir(g: &Global, default: &str) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    let artifact = match &cli.command {
        Command::Evolve(a) => run_experiment(&build_config("quantum", a, g)?)?,
        Command::Classical(a) => run_experiment(&build_config("classical", a, g)?)?,
        Command::Ensemble(a) => run_experiment(&build_config("semiclassical", a, g)?)?,
        Command::Analytic(a) => run_experiment(&build_config("analytic", a, g)?)?,
        Command::Qfunc(q) => {
            let mut run = q.run.clone();
            if !run.observables.iter().any(|o| o == "qfunc") {
                run.observables.push("qfunc".into());
            }
            let mut extra = Map::new();
            extra.insert("qfunc_times".into(), json!(q.times));
            if let Some(res) = q.resolution {
                extra.insert("qfunc_resolution".into(), json!(res));
            }
            let cfg = build_config_with("quantum", &run, g, extra)?;
            run_experiment(&cfg)?
        }
        Command::ScanGlobalFano(s) => {
            let run = ScanRun {
                order: s.order,
                alpha1: s.alpha1.0.clone(),
                alpha2: s.alpha_n.0.clone(),
                horizon: s.horizon,
                tail_tol: g.tail_tol.unwrap_or(DEFAULT_TAIL_TOL),
                max_block_dim: s.max_dim,
            };
            scan_global_fano_to(&run, &out_dir(g, "scan"))?
        }
        Command::ReproduceTable(t) => {
            let orders = if t.orders.is_empty() {
                if g.slow {
                    vec![1, 2, 3, 4, 5]
                } else {
                    vec![1, 2, 3]
                }
            } else {
                t.orders.clone()
            };
            let run = TableRun {
                orders,
                r: t.r,
                tail_tol: g.tail_tol.unwrap_or(DEFAULT_TAIL_TOL),
                max_block_dim: t.max_dim,
                samples: t.samples,
                ..TableRun::default()
            };
            let artifact = reproduce_tables_to(&run, &out_dir(g, "tables"))?;
            print_tables(&artifact, t.table);
            eprintln!("wrote {} files to {}", artifact.files.len(), artifact.output_dir.display());
            return Ok(());
        }
    };
    report(&artifact)
}

fn print_tables(artifact: &RunArtifact, which: Which) {
    let pick: &[&str] = match which {
        Which::Fundamental => &["fundamental"],
        Which::Harmonic => &["harmonic"],
        Which::Both => &["fundamental", "harmonic"],
    };
    for key in pick {
        println!("{key}");
        println!("{:>3} {:>12} {:>10} {:>10} {:>10} {:>9}", "N", "quantum", "rms", "closed", "value", "rel.dev");
        for row in artifact.summary[key].as_array().into_iter().flatten() {
            let f = |k: &str| row[k].as_f64().map_or("-".to_string(), |v| format!("{v:.5}"));
            println!(
                "{:>3} {:>12} {:>10} {:>10} {:>10} {:>9}{}",
                row["order"],
                f("quantum"),
                f("quantum_rms"),
                row["closed_form"].as_str().unwrap_or(""),
                f("closed_value"),
                f("relative_deviation"),
                row["skipped"].as_str().map(|s| format!("  ({s})")).unwrap_or_default()
            );
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error (numerical): {msg}");
            ExitCode::from(3)
        }
    }
}
