//! `cbi`: classify branching-with-immigration models, tabulate their
//! passage/occupation transforms, cross-check by simulation, and run the
//! verification suite.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 numeric failure.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cbi_cli::commands::{self, CmdError, LaplaceKind};
use cbi_cli::config::RunConfig;
use cbi_cli::suite;

/// Environment override for the directory that relative output paths
/// resolve under; takes precedence over `[output] dir`.
const OUT_DIR_VAR: &str = "CBI_OUT_DIR";

#[derive(Parser)]
#[command(name = "cbi", version, about = "Branching processes with immigration: transforms, classification, simulation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the report here instead of stdout; relative paths resolve
    /// under CBI_OUT_DIR or [output] dir
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override [sim] seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo batches (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Override [quad] tol
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Criticality, long-run behaviour, and boundary polarity as JSON
    Classify {
        #[command(flatten)]
        common: Common,
    },
    /// Transform tables as CSV: hitting | joint | total | marginal | minimum
    Laplace {
        kind: String,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo estimates for the configured estimands as CSV
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the verification suite
    Verify {
        #[command(flatten)]
        common: Common,
        /// Only run checks whose name contains this substring
        #[arg(long)]
        filter: Option<String>,
        /// Perturb a pinned oracle and require the targeted failure
        #[arg(long)]
        self_test: bool,
    },
}

fn fail(code: u8, msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.cmd {
        Cmd::Classify { common }
        | Cmd::Laplace { common, .. }
        | Cmd::Simulate { common }
        | Cmd::Verify { common, .. } => common,
    };

    if let Some(n) = common.workers {
        if n == 0 {
            return fail(2, "--workers must be at least 1");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(2, &format!("worker pool: {e}"));
        }
    }

    let config = match load_config(common) {
        Ok(cfg) => cfg,
        Err(msg) => return fail(2, &msg),
    };

    match &cli.cmd {
        Cmd::Classify { common } => {
            let config = match require(config) {
                Ok(c) => c,
                Err(msg) => return fail(2, &msg),
            };
            emit(commands::cmd_classify(&config), common, &config)
        }
        Cmd::Laplace { kind, common } => {
            let config = match require(config) {
                Ok(c) => c,
                Err(msg) => return fail(2, &msg),
            };
            let kind: LaplaceKind = match kind.parse() {
                Ok(k) => k,
                Err(msg) => return fail(2, &msg),
            };
            emit(commands::cmd_laplace(&config, kind), common, &config)
        }
        Cmd::Simulate { common } => {
            let config = match require(config) {
                Ok(c) => c,
                Err(msg) => return fail(2, &msg),
            };
            match commands::cmd_simulate(&config) {
                Ok((summary, dump)) => {
                    if let Some(text) = dump {
                        let target = config
                            .output
                            .path_dump
                            .as_ref()
                            .expect("dump implies a configured path");
                        if let Err(msg) = write_report(Path::new(target), &text, &config) {
                            return fail(2, &msg);
                        }
                    }
                    emit(Ok(summary), common, &config)
                }
                Err(e) => fail(e.exit_code() as u8, e.message()),
            }
        }
        Cmd::Verify {
            common: _,
            filter,
            self_test,
        } => {
            // Ignore any model config: the suite is built in. A config on
            // the command line still participates in flag validation above.
            let _ = config;
            let filter = match (filter, *self_test) {
                (Some(f), _) => Some(f.clone()),
                // Self-test only needs the check whose oracle it perturbs.
                (None, true) => Some("total_population".to_string()),
                (None, false) => None,
            };
            let outcomes = suite::run_suite(filter.as_deref(), *self_test);
            if outcomes.is_empty() {
                return fail(2, "no checks match the filter");
            }
            let mut report = String::new();
            for o in &outcomes {
                let verdict = if o.passed { "PASS" } else { "FAIL" };
                report.push_str(&format!(
                    "{verdict} {} ({:.1}s): {}\n",
                    o.name, o.seconds, o.detail
                ));
            }
            let ok = if *self_test {
                let target = "total_population_cb";
                let tripped = outcomes.iter().any(|o| o.name == target && !o.passed);
                let rest_ok = outcomes.iter().all(|o| o.name == target || o.passed);
                report.push_str(if tripped && rest_ok {
                    "self-test: perturbed oracle tripped its check as expected\n"
                } else {
                    "self-test: perturbed oracle did NOT produce the targeted failure\n"
                });
                tripped && rest_ok
            } else {
                let passed = outcomes.iter().filter(|o| o.passed).count();
                report.push_str(&format!("passed {passed}/{} checks\n", outcomes.len()));
                passed == outcomes.len()
            };
            print!("{report}");
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn load_config(common: &Common) -> Result<Option<RunConfig>, String> {
    let Some(path) = &common.config else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg =
        RunConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(seed) = common.seed {
        cfg.sim.seed = seed;
    }
    if let Some(tol) = common.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(format!("--tol must be positive, got {tol}"));
        }
        cfg.quad.tol = tol;
    }
    Ok(Some(cfg))
}

fn require(config: Option<RunConfig>) -> Result<RunConfig, String> {
    config.ok_or_else(|| "this command needs --config <path>".to_string())
}

fn emit(result: Result<String, CmdError>, common: &Common, config: &RunConfig) -> ExitCode {
    match result {
        Ok(text) => match &common.out {
            Some(path) => match write_report(path, &text, config) {
                Ok(()) => ExitCode::SUCCESS,
                Err(msg) => fail(2, &msg),
            },
            None => {
                let mut stdout = std::io::stdout().lock();
                if stdout.write_all(text.as_bytes()).is_err() {
                    return ExitCode::from(2);
                }
                ExitCode::SUCCESS
            }
        },
        Err(e) => fail(e.exit_code() as u8, e.message()),
    }
}

/// Relative output paths resolve under CBI_OUT_DIR, falling back to
/// `[output] dir`, falling back to the working directory.
fn write_report(path: &Path, text: &str, config: &RunConfig) -> Result<(), String> {
    let resolved = if path.is_absolute() {
        path.to_path_buf()
    } else {
        match std::env::var_os(OUT_DIR_VAR)
            .map(PathBuf::from)
            .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        {
            Some(dir) => dir.join(path),
            None => path.to_path_buf(),
        }
    };
    if let Some(parent) = resolved.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| format!("{}: {e}", parent.display()))?;
        }
    }
    std::fs::write(&resolved, text).map_err(|e| format!("{}: {e}", resolved.display()))
}
