//! Command-line front end.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::channel::ScenarioConfig;
use crate::config::{apply_overrides, load_config};
use crate::error::{Error, Result};
use crate::experiments::{preset, run_sweep, Scale};
use crate::follower::AccessMode;
use crate::sim::{overhead_report, read_overhead_inputs, run_with, trace_run_ids, write_summary, SimOptions};
use crate::verify::{oracle_suite, Status};

#[derive(Parser, Debug)]
#[command(name = "femtoshare", version, about = "Interference pricing and overlapping coalition formation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one scenario and write its trace and summary.
    Run(RunArgs),
    /// Run a named parameter sweep.
    Preset(PresetArgs),
    /// Check the solver against brute-force oracles.
    Verify(VerifyArgs),
    /// Signalling and time overhead of a finished run.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Flat key = value scenario file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// key=value, applied after the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Restrict every UU to one sub-band.
    #[arg(long)]
    pub single_subband: bool,
}

#[derive(Args, Debug)]
pub struct PresetArgs {
    /// Preset name, e.g. fig7 or fig7_price_vs_q.
    pub name: String,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Seed list: `0..50` or `1,2,3`.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Applied to the preset's base scenario.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// 64 UUs and up to 128 sub-bands.
    #[arg(long)]
    pub large_scale: bool,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Trace CSV written by `run`.
    #[arg(long)]
    pub trace: PathBuf,
    /// Summary CSV; defaults to `summary.csv` beside the trace.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Run to report; defaults to the first run in the trace.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Bits per control message.
    #[arg(long, default_value_t = 32)]
    pub bits: u64,
    /// Length of one negotiation slot.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Length of the data transmission phase.
    #[arg(long, default_value_t = 1000.0)]
    pub t_data: f64,
}

/// Parses a seed list of the form `a..b` (half open) or `a,b,c`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Parse(format!("invalid seed list `{text}`"));
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        (a..b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let mut config = match &args.config {
        Some(path) => load_config(path)?,
        None => ScenarioConfig::default(),
    };
    apply_overrides(&mut config, &args.overrides)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    let options = SimOptions {
        access: if args.single_subband {
            AccessMode::SingleSubband
        } else {
            AccessMode::Overlapping
        },
        record_trace: true,
        run_id: None,
    };
    let outcome = run_with(&config, &options)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let trace = args.out.join("trace.csv");
    outcome.write_trace(create(&trace)?)?;
    let summary = args.out.join("summary.csv");
    write_summary([&outcome], create(&summary)?)?;
    println!(
        "{}: {} outer iterations, converged = {}, mean price {:.6e}, UU payoff sum {:.6}, MCO payoff {:.6}",
        outcome.run_id,
        outcome.outer_iterations,
        outcome.converged,
        outcome.mean_price(),
        outcome.uu_payoff_sum(),
        outcome.mco_payoff
    );
    println!("wrote {} and {}", trace.display(), summary.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_preset(args: &PresetArgs) -> Result<ExitCode> {
    let seeds = args.seeds.as_deref().map(parse_seeds).transpose()?;
    let scale = if args.large_scale { Scale::Large } else { Scale::Desk };
    let mut spec = preset(&args.name, scale, seeds)?;
    apply_overrides(&mut spec.base, &args.overrides)?;
    let dir = args.out.join(&spec.preset_name);
    let result = with_jobs(args.jobs, || run_sweep(&spec))?;
    let written = result.write(&dir)?;
    println!(
        "{}: {} runs over {} = {:?}",
        spec.preset_name,
        result.runs.len(),
        spec.swept_name,
        spec.swept_values
    );
    println!("wrote {} files under {}", written.len(), dir.display());
    Ok(ExitCode::SUCCESS)
}

#[cfg(feature = "parallel")]
fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start {n} workers: {e}")))?
            .install(f),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_jobs<T>(_jobs: Option<usize>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f()
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode> {
    let checks = oracle_suite(args.seed, args.k, args.m)?;
    let mut failed = false;
    for c in &checks {
        println!("{c}");
        failed |= c.status == Status::Fail;
    }
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn cmd_report(args: &ReportArgs) -> Result<ExitCode> {
    let trace = File::open(&args.trace).map_err(|e| Error::io(&args.trace, e))?;
    let run_id = match &args.run_id {
        Some(id) => id.clone(),
        None => trace_run_ids(trace)
            .map_err(|e| Error::Parse(format!("{}: {e}", args.trace.display())))?
            .into_iter()
            .next()
            .ok_or_else(|| Error::Parse(format!("{}: trace has no rows", args.trace.display())))?,
    };
    let summary_path = args
        .summary
        .clone()
        .unwrap_or_else(|| args.trace.with_file_name("summary.csv"));
    let summary = File::open(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
    let inputs = read_overhead_inputs(summary, &run_id)?;
    let r = overhead_report(inputs, args.bits, args.tau, args.t_data)?;
    println!("run_id,{run_id}");
    println!("control_bits,{}", r.control_bits);
    println!("bound_bits,{}", r.bound_bits);
    println!("time_overhead_paper,{}", r.time_overhead_paper);
    println!("time_overhead_measured,{}", r.time_overhead_measured);
    println!("complexity_ops,{}", r.complexity_ops);
    println!("complexity_scale,{}", r.complexity_scale);
    Ok(ExitCode::SUCCESS)
}

pub fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Preset(a) => cmd_preset(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Exit status 0 on success, 1 when a verification fails, 2 on usage or I/O errors.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
