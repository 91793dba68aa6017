//! Argument parsing for the `recdev` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use serde_json::{json, Value};

use crate::commands::{run, Invocation};
use crate::config::{parse_f64_list, parse_t_grid, parse_u64_list};
use crate::runner::RayonRunner;
use crate::validate::Subcommand;

#[derive(Debug, Parser)]
#[command(name = "recdev", version, about = "Recursive kernel estimators and their deviation rates")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file (flat, dotted keys).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed of the random streams.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Override a configuration key, `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, ClapSubcommand)]
pub enum Command {
    /// Evaluate the recursive estimator on a grid.
    Estimate {
        /// Observation file (CSV or whitespace separated); without it a
        /// sample is drawn from the configured density.
        #[arg(long)]
        observations: Option<PathBuf>,
        /// Sample sizes at which to report, e.g. `100,1000`.
        #[arg(long)]
        n: Option<String>,
    },
    /// Tabulate I, I_x, J, g_U and g̃_U over a grid of thresholds.
    Rate {
        /// `start:stop:step`.
        #[arg(long = "t-grid", allow_hyphen_values = true)]
        t_grid: Option<String>,
    },
    /// Finite-n normalized CGF against its limit.
    Cgf {
        /// Arguments u, e.g. `0.5,1`.
        #[arg(long, allow_hyphen_values = true)]
        u: Option<String>,
        #[arg(long)]
        n: Option<String>,
    },
    /// Monte Carlo tail probabilities against the rate.
    Simulate {
        #[arg(long)]
        n: Option<String>,
        #[arg(long)]
        delta: Option<String>,
        #[arg(long)]
        replications: Option<u64>,
        /// `pointwise` or `uniform`.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Bias of the estimator against the kernel-order scale.
    Bias {
        #[arg(long)]
        n: Option<String>,
    },
    /// Finite-n Chernoff bounds, with an optional Monte Carlo comparison.
    Chernoff {
        #[arg(long)]
        n: Option<String>,
        #[arg(long)]
        delta: Option<String>,
        /// `0` computes the bounds only.
        #[arg(long)]
        replications: Option<u64>,
    },
}

fn u64_list(flag: &str, s: &str) -> anyhow::Result<Value> {
    let v = parse_u64_list(s).map_err(|m| anyhow::anyhow!("--{flag}: {m}"))?;
    Ok(json!(v))
}

fn f64_list(flag: &str, s: &str) -> anyhow::Result<Value> {
    let v = parse_f64_list(s).map_err(|m| anyhow::anyhow!("--{flag}: {m}"))?;
    Ok(json!(v))
}

impl Cli {
    /// The subcommand and its flag overrides as config key/values.
    pub fn flags(&self) -> anyhow::Result<(Subcommand, Vec<(String, Value)>)> {
        let mut flags = Vec::new();
        if let Some(seed) = self.common.seed {
            flags.push(("seed".to_string(), json!(seed)));
        }
        let n_flag = |n: &Option<String>, flags: &mut Vec<(String, Value)>| -> anyhow::Result<()> {
            if let Some(n) = n {
                flags.push(("n_list".into(), u64_list("n", n)?));
            }
            Ok(())
        };
        let command = match &self.command {
            Command::Estimate { observations, n } => {
                if let Some(p) = observations {
                    flags.push(("observations".into(), json!(p.display().to_string())));
                }
                n_flag(n, &mut flags)?;
                Subcommand::Estimate
            }
            Command::Rate { t_grid } => {
                if let Some(g) = t_grid {
                    parse_t_grid(g).map_err(|m| anyhow::anyhow!("--t-grid: {m}"))?;
                    flags.push(("t_grid".into(), json!(g)));
                }
                Subcommand::Rate
            }
            Command::Cgf { u, n } => {
                if let Some(u) = u {
                    flags.push(("u".into(), f64_list("u", u)?));
                }
                n_flag(n, &mut flags)?;
                Subcommand::Cgf
            }
            Command::Simulate {
                n,
                delta,
                replications,
                mode,
            } => {
                n_flag(n, &mut flags)?;
                if let Some(d) = delta {
                    flags.push(("delta".into(), f64_list("delta", d)?));
                }
                if let Some(r) = replications {
                    flags.push(("replications".into(), json!(r)));
                }
                if let Some(m) = mode {
                    flags.push(("simulate.mode".into(), json!(m)));
                }
                Subcommand::Simulate
            }
            Command::Bias { n } => {
                n_flag(n, &mut flags)?;
                Subcommand::Bias
            }
            Command::Chernoff { n, delta, replications } => {
                n_flag(n, &mut flags)?;
                if let Some(d) = delta {
                    flags.push(("delta".into(), f64_list("delta", d)?));
                }
                if let Some(r) = replications {
                    flags.push(("replications".into(), json!(r)));
                }
                Subcommand::Chernoff
            }
        };
        Ok((command, flags))
    }
}

/// Exit code for configuration, hypothesis and runtime errors.
pub const EXIT_ERROR: i32 = 2;

/// Parses `args`, runs the subcommand and returns the process exit code:
/// `0` when every verdict passes, `1` when one fails, `2` on errors.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<i32> {
    let (command, flags) = cli.flags()?;
    let inv = Invocation::build(command, cli.common.config.as_deref(), &cli.common.set, flags, cli.common.out.clone())?;
    let outcome = run(&inv, &RayonRunner::from_env())?;
    for f in &outcome.files {
        eprintln!("wrote {}", f.display());
    }
    for v in outcome.verdicts.iter().filter(|v| !v.passed) {
        eprintln!("FAIL {}: {}", v.name, v.detail);
    }
    Ok(outcome.exit_code())
}
