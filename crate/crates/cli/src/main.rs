use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use csma_aoi::simulator::{
    record_aoi_path, simulate_with_trace, write_aoi_path, DEFAULT_STAGE_CAP,
};
use csma_aoi::sweep::{self, Format, SweepSpec};
use csma_aoi::{
    max_node_count, max_packet_rate, simulate, solve_fixed_point, Error, NetworkParams, Result,
    SimulationConfig, SolverConfig,
};

/// Closed-form and simulated Age of Information for unsaturated slotted
/// CSMA/CA networks.
///
/// Exit codes: 0 success, 2 invalid input, 3 infeasible model, 4 I/O error.
#[derive(Parser)]
#[command(name = "csma-aoi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Solve the network fixed point and print the operating point.
    Solve(SolveArgs),
    /// Run the slot-level simulator and print its statistics as JSON.
    Simulate(SimulateArgs),
    /// Run a parameter sweep and write a CSV or JSON table.
    Sweep(SweepArgs),
    /// Print the largest feasible packet rate (--n) or node count (--p).
    Capacity(CapacityArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Number of nodes.
    #[arg(long)]
    n: u32,
    /// Per-node packet arrival probability per slot.
    #[arg(long)]
    p: f64,
    /// Minimum contention window.
    #[arg(long, default_value_t = 8)]
    w0: u32,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: u32,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 8)]
    w0: u32,
    /// Slots to simulate.
    #[arg(long, default_value_t = 1_000_000)]
    horizon: u64,
    /// Leading slots excluded from the statistics.
    #[arg(long, default_value_t = 100_000)]
    warmup: u64,
    /// RNG seed.
    #[arg(long, env = "CSMA_AOI_SEED", default_value_t = 1)]
    seed: u64,
    /// Stage at which the contention window stops doubling.
    #[arg(long, default_value_t = DEFAULT_STAGE_CAP)]
    stage_cap: u32,
    /// Write a `slot,event,queue_total` line per slot to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Record the age sample path of this node.
    #[arg(long, value_name = "NODE")]
    aoi_path: Option<usize>,
    /// Destination of the age sample path.
    #[arg(long, default_value = "aoi_path.csv", requires = "aoi_path")]
    aoi_out: PathBuf,
    /// Write the statistics here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Every flag mirrors a key of the spec file and overrides it.
#[derive(Args)]
struct SweepArgs {
    /// Spec file of `key = value` lines.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output table; stdout when absent from both flags and spec.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Swept variable: p or N.
    #[arg(long)]
    var: Option<String>,
    /// Explicit grid, comma separated.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    grid_start: Option<String>,
    /// Last grid value, or `max` for the capacity limit.
    #[arg(long)]
    grid_stop: Option<String>,
    #[arg(long)]
    grid_points: Option<String>,
    /// linear or log.
    #[arg(long)]
    grid_scale: Option<String>,
    /// Node count(s) of a packet-rate sweep, comma separated.
    #[arg(long)]
    n: Option<String>,
    /// Packet rate(s) of a node-count sweep, comma separated.
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    w0: Option<String>,
    /// analytic, simulate, or both, comma separated.
    #[arg(long)]
    modes: Option<String>,
    #[arg(long)]
    horizon: Option<String>,
    #[arg(long)]
    warmup: Option<String>,
    /// Base seed; row k uses seed + k. Falls back to $CSMA_AOI_SEED, then 1.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    stage_cap: Option<String>,
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "target")]
struct CapacityArgs {
    /// Print p_max for this many nodes.
    #[arg(long, group = "target")]
    n: Option<u32>,
    /// Print N_max for this packet rate.
    #[arg(long, group = "target")]
    p: Option<f64>,
    #[arg(long, default_value_t = 8)]
    w0: u32,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Simulate(a) => run_simulation(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Capacity(a) => capacity(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        4
    } else if e.is_infeasible() {
        3
    } else {
        2
    }
}

fn solve(a: SolveArgs) -> Result<()> {
    let params = NetworkParams::new(a.n, a.p, a.w0)?;
    let s = solve_fixed_point(&params, &SolverConfig::default())?;
    let num = |x: Option<f64>| x.map_or_else(|| "unbounded".to_string(), sweep::format_number);
    let mut out = io::stdout().lock();
    writeln!(out, "p_tx   {}", sweep::format_number(s.p_tx))?;
    writeln!(out, "p_cl   {}", sweep::format_number(s.p_cl))?;
    writeln!(out, "p_idle {}", sweep::format_number(s.p_idle))?;
    writeln!(out, "mu     {}", sweep::format_number(s.mu))?;
    writeln!(out, "beta   {}", num(s.beta))?;
    writeln!(out, "aoi    {}", num(s.avg_aoi))?;
    writeln!(out, "stable {}", s.stable)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run_simulation(a: SimulateArgs) -> Result<()> {
    let params = NetworkParams::new(a.n, a.p, a.w0)?;
    let mut cfg = SimulationConfig::new(params, a.horizon, a.warmup, a.seed);
    cfg.stage_cap = a.stage_cap;
    cfg.validate()?;

    let stats = match &a.trace {
        Some(path) => simulate_with_trace(&cfg, &mut create(path)?)?,
        None => simulate(&cfg)?,
    };
    if let Some(node) = a.aoi_path {
        let path = record_aoi_path(&cfg, node)?;
        write_aoi_path(&path, &mut create(&a.aoi_out)?)?;
    }
    let text = serde_json::to_string_pretty(&stats).map_err(Error::from)?;
    match &a.out {
        Some(path) => {
            let mut f = create(path)?;
            writeln!(f, "{text}")?;
            f.flush()?;
        }
        None => writeln!(io::stdout().lock(), "{text}")?,
    }
    if !stats.stable {
        eprintln!("warning: backlog kept growing; the operating point looks unstable");
    }
    Ok(())
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = match &a.spec {
        Some(path) => sweep::parse_config(&std::fs::read_to_string(path)?)?,
        None => BTreeMap::new(),
    };
    let overrides = [
        ("out", a.out.as_ref().map(|p| p.display().to_string())),
        ("format", a.format),
        ("var", a.var),
        ("grid", a.grid),
        ("grid_start", a.grid_start),
        ("grid_stop", a.grid_stop),
        ("grid_points", a.grid_points),
        ("grid_scale", a.grid_scale),
        ("n", a.n),
        ("p", a.p),
        ("w0", a.w0),
        ("modes", a.modes),
        ("horizon", a.horizon),
        ("warmup", a.warmup),
        ("seed", a.seed),
        ("stage_cap", a.stage_cap),
    ];
    const RANGE: [&str; 4] = ["grid_start", "grid_stop", "grid_points", "grid_scale"];
    for (key, value) in overrides {
        if let Some(v) = value {
            if key == "grid" {
                RANGE.iter().for_each(|k| drop(cfg.remove(*k)));
            } else if RANGE.contains(&key) {
                cfg.remove("grid");
            }
            cfg.insert(key.to_string(), v);
        }
    }
    if !cfg.contains_key("seed") {
        if let Ok(seed) = std::env::var("CSMA_AOI_SEED") {
            cfg.insert("seed".into(), seed);
        }
    }
    let spec = SweepSpec::from_config(&cfg)?;
    let rows = sweep::run_sweep(&spec)?;
    match &spec.output {
        Some(path) => sweep::emit(&rows, spec.format, path)?,
        None => {
            let out = io::stdout().lock();
            match spec.format {
                Format::Csv => sweep::write_csv(&rows, out)?,
                Format::Json => sweep::write_json(&rows, out)?,
            }
        }
    }
    for r in rows.iter().filter(|r| r.status == "flagged") {
        eprintln!(
            "warning: N = {}, p = {}: simulation and analysis differ by {:.1}%",
            r.n,
            r.p,
            100.0 * r.max_relative_gap().unwrap_or(f64::NAN)
        );
    }
    for v in sweep::shape_violations(&rows) {
        eprintln!("warning: {v}");
    }
    Ok(())
}

fn capacity(a: CapacityArgs) -> Result<()> {
    let cfg = SolverConfig::default();
    match (a.n, a.p) {
        (Some(n), _) => writeln!(
            io::stdout().lock(),
            "{}",
            sweep::format_number(max_packet_rate(n, a.w0, &cfg)?)
        )?,
        (_, Some(p)) => writeln!(io::stdout().lock(), "{}", max_node_count(p, a.w0, &cfg)?)?,
        _ => unreachable!("clap enforces one target"),
    }
    Ok(())
}
