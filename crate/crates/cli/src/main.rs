//! `sechyp run <command> --config PATH`: runs numerical checks on a vector
//! field and writes JSON reports, CSV tables, gnuplot scripts and a manifest.

mod commands;
mod config;
mod output;
mod plots;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use commands::{pretty, Command, Context, Failure};
use config::{parse_grid, Overrides, RunConfig};
use output::{write_atomic, CommandRecord, RunManifest};

const EXIT_PASS: u8 = 0;
const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(
    name = "sechyp",
    version,
    about = "Numerical checks for sectional-hyperbolic flows"
)]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(Subcommand)]
enum Action {
    /// Run one check, or `all` of the single-model checks.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(value_enum)]
    command: Command,
    /// Model and probe configuration (JSON), or a manifest from an earlier run.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "d-s")]
    d_s: Option<usize>,
    /// Expansiveness time-shift tolerance.
    #[arg(long)]
    eps: Option<f64>,
    /// Comma-separated δ values for the expansiveness probe.
    #[arg(long = "delta-grid")]
    delta_grid: Option<String>,
    /// Pair count for the expansive, growth and quotient probes.
    #[arg(long)]
    pairs: Option<usize>,
    /// Horizon for the expansive and chaos probes.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads, 0 = one per core. Defaults to SECHYP_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Action::Run(args) = cli.action;
    ExitCode::from(run(&args))
}

fn config_error(msg: impl std::fmt::Display) -> u8 {
    eprintln!("sechyp: {msg}");
    EXIT_CONFIG
}

fn load_config(args: &RunArgs) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    let mut cfg = RunConfig::parse(&text)?;
    let delta_grid = args.delta_grid.as_deref().map(parse_grid).transpose()?;
    cfg.apply(&Overrides {
        seed: args.seed,
        d_s: args.d_s,
        eps: args.eps,
        delta_grid,
        pairs: args.pairs,
        horizon: args.horizon,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn thread_count(args: &RunArgs) -> Result<usize, String> {
    if let Some(n) = args.threads {
        return Ok(n);
    }
    match std::env::var("SECHYP_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("SECHYP_THREADS must be an integer, got \"{v}\"")),
        Err(_) => Ok(0),
    }
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Result<(), String> {
    write_atomic(&dir.join(name), contents.as_bytes())
        .map_err(|e| format!("cannot write {name}: {e}"))
}

fn run(args: &RunArgs) -> u8 {
    let started = Instant::now();
    let steps0 = sechyp::flow::accepted_steps();
    let cfg = match load_config(args) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let threads = match thread_count(args) {
        Ok(n) => n,
        Err(e) => return config_error(e),
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
    {
        return config_error(format!("thread pool: {e}"));
    }
    let config_value = serde_json::to_value(&cfg).expect("config serializes");
    let ctx = match Context::new(cfg) {
        Ok(c) => c,
        Err(Failure::Config(e)) => return config_error(e),
        Err(Failure::Numeric(e)) => {
            eprintln!("sechyp: {e}");
            return EXIT_NUMERIC;
        }
    };
    let mut records = Vec::new();
    let mut exit = EXIT_PASS;
    for command in args.command.expand(&ctx.cfg) {
        let t0 = Instant::now();
        let s0 = sechyp::flow::accepted_steps();
        let name = command.name();
        let (status, error, outputs) = match ctx.run(command) {
            Ok(done) => {
                let mut outputs = vec![format!("{name}.json")];
                let mut written = write_output(&args.out, &outputs[0], &pretty(&done.report));
                for (file, contents) in &done.files {
                    if written.is_ok() {
                        written = write_output(&args.out, file, contents);
                        outputs.push(file.clone());
                    }
                }
                if let Err(e) = written {
                    return config_error(e);
                }
                let status = if done.pass { "pass" } else { "fail" };
                eprintln!("{name}: {status}");
                if !done.pass {
                    exit = exit.max(EXIT_FAIL);
                }
                (status, None, outputs)
            }
            Err(Failure::Config(e)) => {
                eprintln!("{name}: configuration error: {e}");
                exit = EXIT_CONFIG;
                ("config-error", Some(e), Vec::new())
            }
            Err(Failure::Numeric(e)) => {
                eprintln!("{name}: numeric failure: {e}");
                if exit != EXIT_CONFIG {
                    exit = EXIT_NUMERIC;
                }
                ("numeric-failure", Some(e), Vec::new())
            }
        };
        records.push(CommandRecord {
            command: name.into(),
            status: status.into(),
            error,
            outputs,
            wall_clock_seconds: t0.elapsed().as_secs_f64(),
            integration_steps: sechyp::flow::accepted_steps() - s0,
        });
    }
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: args.command.name().into(),
        seed: ctx.cfg.seed,
        config_sha256: RunManifest::config_hash(&config_value),
        config: config_value,
        threads: rayon::current_num_threads(),
        commands: records,
        exit_code: exit as i32,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        integration_steps: sechyp::flow::accepted_steps() - steps0,
    };
    let text = pretty(&serde_json::to_value(&manifest).expect("manifest serializes"));
    if let Err(e) = write_output(
        &args.out,
        &format!("{}.manifest.json", args.command.name()),
        &text,
    ) {
        return config_error(e);
    }
    exit
}
