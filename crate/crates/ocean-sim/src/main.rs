use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ocean_sim::config::{Mode, ScenarioConfig};
use ocean_sim::harness::{
    run_scenario, run_summary, run_sweep, write_sweep_artifacts, HarnessError, SweepSpec,
};
use ocean_sim::oracle::run_self_check;

/// Deterministic MANET misbehavior simulator and experiment harness.
#[derive(Parser)]
#[command(name = "ocean-sim", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute one scenario and write metrics.json + summary.txt.
    Run {
        /// Scenario TOML; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the mitigation mode: defenseless, ocean, or sechand.
        #[arg(long)]
        mode: Option<String>,
        /// Output directory (default: current directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a trace.jsonl packet trace.
        #[arg(long)]
        trace: bool,
        /// Suppress the stdout summary.
        #[arg(long)]
        quiet: bool,
    },
    /// Execute a sweep spec and write data.csv + summary.txt.
    Sweep {
        /// Sweep spec TOML.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one packet trace per run into the output directory.
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        quiet: bool,
    },
    /// Cross-check the production rating and discovery rules against the
    /// independent oracles on randomized micro-topologies.
    Oracle {
        /// Seed for the randomized cases.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
}

fn main() -> ExitCode {
    // Fold clap's usage errors into the validation exit code; help and
    // version output stay successes.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn parse_mode(s: &str) -> Result<Mode, HarnessError> {
    match s {
        "defenseless" => Ok(Mode::Defenseless),
        "ocean" => Ok(Mode::Ocean),
        "sechand" => Ok(Mode::Sechand),
        other => Err(HarnessError::Spec(format!(
            "unknown mode `{other}` (expected defenseless, ocean, or sechand)"
        ))),
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode, HarnessError> {
    match cmd {
        Cmd::Run { config, seed, mode, out, trace, quiet } => {
            let mut cfg = match config {
                Some(path) => ScenarioConfig::from_toml_str(&fs::read_to_string(path)?)?,
                None => ScenarioConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(m) = mode {
                cfg.mode = parse_mode(&m)?;
            }
            let out_dir = out.unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&out_dir)?;
            let trace_path = trace.then(|| out_dir.join("trace.jsonl"));
            let metrics = run_scenario(&cfg, trace_path.as_deref())?;
            fs::write(out_dir.join("metrics.json"), metrics.to_canonical_json())?;
            let summary = run_summary(&cfg, &metrics);
            fs::write(out_dir.join("summary.txt"), &summary)?;
            if !quiet {
                print!("{summary}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Sweep { config, out, trace, quiet } => {
            let spec = SweepSpec::from_toml_str(&fs::read_to_string(config)?)?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&out_dir)?;
            let result = run_sweep(&spec, trace.then_some(out_dir.as_path()))?;
            write_sweep_artifacts(&out_dir, &result)?;
            if !quiet {
                print!("{}", result.to_summary());
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Oracle { seed, quiet } => {
            let report = run_self_check(10_000, 200, seed.unwrap_or(1));
            if !quiet {
                println!(
                    "rating replay: {}/{} cases match",
                    report.rating_cases - report.rating_mismatches,
                    report.rating_cases
                );
                println!(
                    "route enumeration: {}/{} cases match",
                    report.route_cases - report.route_mismatches,
                    report.route_cases
                );
            }
            if report.all_match() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("error: oracle disagreement");
                Ok(ExitCode::from(2))
            }
        }
    }
}
