// `!(x > 0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use spinchain::analysis::{run_cn, sweep, write_sweep_csv, write_trace_csv, write_unwanted_csv, ReportDocument};
use spinchain::checks::{oracle_suite, Fault};
use spinchain::io::write_json;
use spinchain::sequence::compile_cn_remote;

mod config;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "spinchain", version, about = "Remote CONTROL-NOT on an Ising spin chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write sequence.json and print the pulse count.
    Compile(Common),
    /// Simulate the gate from the ground state and write the report files.
    Run(Common),
    /// Run one experiment per grid value and write sweep.csv.
    Sweep {
        /// omega_sweep, block_offset, random_magnitude, random_block_length or block_position.
        experiment: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Cross-check the engine against the oracles.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        /// Scale every propagator's diagonal by this factor (checks must fail).
        #[arg(long, hide = true)]
        inject_fault: Option<f64>,
    },
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Args, Default)]
struct Common {
    /// `key = value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Rabi frequency in units of J.
    #[arg(long)]
    rabi: Option<f64>,
    /// Larmor frequency spacing in units of J.
    #[arg(long)]
    delta_omega: Option<f64>,
    /// Normalized probability threshold for pruning and reporting.
    #[arg(long)]
    threshold: Option<f64>,
    /// normalized or paper_doubled.
    #[arg(long)]
    convention: Option<String>,
    /// none, fixed_offset or uniform_random.
    #[arg(long)]
    distort_mode: Option<String>,
    /// π-pulse range K1:K2, inclusive.
    #[arg(long)]
    distort_range: Option<String>,
    #[arg(long)]
    epsilon0: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma list or START:STOP:STEP.
    #[arg(long)]
    grid: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags: [(&str, Option<String>); 11] = [
            ("n", self.n.map(|v| v.to_string())),
            ("rabi", self.rabi.map(|v| v.to_string())),
            ("delta_omega", self.delta_omega.map(|v| v.to_string())),
            ("threshold", self.threshold.map(|v| v.to_string())),
            ("convention", self.convention.clone()),
            ("distort_mode", self.distort_mode.clone()),
            ("distort_range", self.distort_range.clone()),
            ("epsilon0", self.epsilon0.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("grid", self.grid.clone()),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v).with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn compile(cfg: &RunConfig) -> Result<()> {
    let seq = compile_cn_remote(&cfg.chain()?, cfg.rabi)?;
    seq.write_json(create(&cfg.out, "sequence.json")?)?;
    println!("L={}", seq.pi_count());
    let first: Vec<String> = seq.pi_train().iter().take(3).map(|p| format!("{}", p.omega)).collect();
    println!("first π frequencies: {}", first.join(", "));
    Ok(())
}

fn run(cfg: &RunConfig) -> Result<()> {
    let setup = cfg.setup()?;
    let start = Instant::now();
    let out = run_cn(&setup, cfg.distortion()?.as_ref())?;
    let wall = start.elapsed();
    out.sequence.write_json(create(&cfg.out, "sequence.json")?)?;
    write_json(create(&cfg.out, "report.json")?, &ReportDocument::new(&out.report)?)?;
    write_unwanted_csv(create(&cfg.out, "unwanted.csv")?, &out.report)?;
    write_trace_csv(create(&cfg.out, "trace.csv")?, &out.trace)?;
    let r = &out.report;
    println!(
        "p_ground={:.6e} p_target={:.6e} unwanted={} pruned_mass={:.3e} convention={} wall_time={:.3}s",
        r.p_ground,
        r.p_target,
        r.unwanted_count(),
        r.pruned_mass,
        r.convention.as_str(),
        wall.as_secs_f64()
    );
    Ok(())
}

fn run_sweep(cfg: &RunConfig, experiment: Option<&str>) -> Result<()> {
    let kind = match (experiment, cfg.experiment) {
        (Some(name), _) => name.parse()?,
        (None, Some(kind)) => kind,
        (None, None) => bail!("sweep needs an experiment name"),
    };
    let grid = cfg.grid.as_ref().context("sweep needs --grid")?;
    let rows = sweep(&cfg.experiment(kind), grid, &cfg.setup()?)?;
    write_sweep_csv(create(&cfg.out, "sweep.csv")?, &rows)?;
    let failed: Vec<_> = rows.iter().filter(|r| r.error.is_some()).collect();
    for r in &failed {
        eprintln!("{}={}: {}", r.knob_name, r.knob_value, r.error.as_deref().unwrap_or(""));
    }
    println!("{} points written to {}", rows.len(), cfg.out.join("sweep.csv").display());
    if !failed.is_empty() {
        bail!("{} of {} sweep points failed", failed.len(), rows.len());
    }
    Ok(())
}

fn oracle_check(cfg: &RunConfig, fault: Option<f64>) -> Result<()> {
    let results = oracle_suite(&cfg.chain()?, cfg.rabi, fault.map(Fault::CorruptPropagator));
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        bail!("{failed} of {} checks failed", results.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Compile(c) => c.resolve().and_then(|cfg| compile(&cfg)),
        Command::Run(c) => c.resolve().and_then(|cfg| run(&cfg)),
        Command::Sweep { experiment, common } => common.resolve().and_then(|cfg| run_sweep(&cfg, experiment.as_deref())),
        Command::OracleCheck { common, inject_fault } => common.resolve().and_then(|cfg| oracle_check(&cfg, *inject_fault)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
