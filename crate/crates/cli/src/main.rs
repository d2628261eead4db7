//! `conic-flow`: run regularized conical Kähler–Ricci flow experiments.
//!
//! Exit status: 0 ok, 2 invalid configuration, 3 run directory already
//! present (use `--force`), 4 numerical failure or failed verification.
//! `suite` also exits 4 when any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use conic_flow::flow::LadderStart;
use conic_flow_cli::config::{parse_class_config, parse_config, Plan};
use conic_flow_cli::rundir::{
    add_periodic_checkpoints, execute, max_existence_time, verify, Command, ExecError, ExecOptions,
};
use conic_flow_cli::suite::{run_suite, SuiteOptions, Verdict};

#[derive(Parser)]
#[command(name = "conic-flow", version, about = "Regularized conical Kähler–Ricci flow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Maximal existence time from the class data alone.
    Maxtime {
        #[arg(long)]
        config: PathBuf,
    },
    /// A single flow.
    Run(RunArgs),
    /// The ε-continuation ladder.
    Ladder {
        #[command(flatten)]
        run: RunArgs,
        /// Start each rung from the previous rung's final state (normalized only).
        #[arg(long)]
        warm: bool,
    },
    /// Rebuild the diagnostics of a saved run from its checkpoints.
    Verify {
        /// Run directory (the one holding manifest.json).
        dir: PathBuf,
    },
    /// The acceptance suite.
    Suite {
        #[arg(long, default_value = "out/suite")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replace an existing run directory with the same hash.
    #[arg(long)]
    force: bool,
    /// Worker threads for independent ladder rungs.
    #[arg(long)]
    threads: Option<usize>,
    /// Also save a checkpoint every T time units.
    #[arg(long, value_name = "T")]
    checkpoint_every: Option<f64>,
}

fn default_threads(requested: Option<usize>) -> usize {
    requested
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .max(1)
}

fn read(path: &Path) -> Result<String, ExecError> {
    fs::read_to_string(path).map_err(|source| ExecError::Io {
        context: path.display().to_string(),
        source,
    })
}

fn load_plan(args: &RunArgs) -> Result<Plan, ExecError> {
    let mut plan = parse_config(&read(&args.config)?)?;
    if let Some(every) = args.checkpoint_every {
        add_periodic_checkpoints(&mut plan, every)?;
    }
    Ok(plan)
}

fn run_command(args: &RunArgs, command: Command) -> Result<(), ExecError> {
    let plan = load_plan(args)?;
    let rec = execute(
        &plan,
        command,
        &ExecOptions {
            out: args.out.clone(),
            force: args.force,
            threads: default_threads(args.threads),
        },
    )?;
    let m = &rec.manifest;
    println!("run directory: {}", rec.dir.display());
    println!("status: {:?}", m.status);
    if let Some(t) = m.t_num {
        println!("t_num: {t}");
    }
    for entry in &rec.diagnostics.cauchy {
        println!(
            "ε {} → {}: sup_K0.1 {:.3e}, sup_K0.2 {:.3e}",
            entry.coarse, entry.fine, entry.sup_k01, entry.sup_k02
        );
    }
    for mon in &rec.diagnostics.monitors {
        println!(
            "monitor {}: {:.3e} ({} {:e}) {}",
            mon.name,
            mon.value,
            mon.pass_when,
            mon.threshold,
            if mon.pass { "ok" } else { "VIOLATED" }
        );
    }
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    let result = match cli.command {
        Cmd::Maxtime { config } => (|| {
            let classes = parse_class_config(&read(&config)?)?;
            let t0 = max_existence_time(&classes)?;
            println!("max_existence_time = {t0}");
            Ok(())
        })(),
        Cmd::Run(args) => run_command(&args, Command::Run),
        Cmd::Ladder { run, warm } => {
            let start = if warm { LadderStart::Warm } else { LadderStart::Cold };
            run_command(&run, Command::ladder(start))
        }
        Cmd::Verify { dir } => verify(&dir).map(|r| {
            println!(
                "verified {} checkpoints against {} series rows and diagnostics.json",
                r.checkpoints, r.series_rows
            );
        }),
        Cmd::Suite { out, force, threads } => {
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let opts = SuiteOptions {
                out,
                force,
                threads: default_threads(threads),
            };
            let results = run_suite(&opts, &mut |r| println!("{r}"));
            let failed = results.iter().any(|r| matches!(r.verdict, Verdict::Fail | Verdict::Error));
            return Ok(if failed { 4 } else { 0 });
        }
    };
    match result {
        Ok(()) => Ok(0),
        Err(e) => {
            eprintln!("error: {e}");
            Ok(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
