//! `sc3` — experiment runner for secure coded cooperative computation.
//!
//! Subcommands mirror the library's experiment module: `run` simulates the
//! configured algorithms, `sweep` repeats a run across values of one config
//! key, `bounds` prints the closed-form delay bounds, `mc-detect` measures
//! empirical attack-detection probabilities against the formulas, and
//! `gen-params` prints a fresh homomorphic-hash parameter set.
//!
//! CSV goes to stdout (or `--out`); diagnostics go to stderr. Exit codes:
//! 0 success, 2 config error, 3 simulation/analysis failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sc3_core::experiment::{
    bounds_csv, mc_detect, run_csv, sweep_csv, ExperimentConfig, ExperimentError, McChecker,
    McDetectOpts, McPattern,
};
use sc3_core::hashing::gen_params;

#[derive(Parser)]
#[command(name = "sc3", version, about = "Secure coded cooperative computation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key = value config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set rho_c=0.5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Override base_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured algorithms; one CSV row per replication plus
    /// mean/ci95 summaries per algorithm.
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Rerun the config for each value of one key; rows gain a leading
    /// sweep-value column and sc3 mean rows carry the measured hw_only-sc3
    /// gap next to its analytic lower bound.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Config key to sweep (any key accepted by --set).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Closed-form bounds for the configured fleet (replication 0):
    /// upper_bound_sc3, t_hw_only, gap_lower_bound, unverified_bound.
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Empirical vs analytic detection probability for an attack pattern.
    McDetect {
        /// Attack pattern: sym-pair, sym-general, triple, random.
        #[arg(long)]
        pattern: String,
        /// Checker: lw, hw, multiround.
        #[arg(long, default_value = "lw")]
        checker: String,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Batch size per trial.
        #[arg(long, default_value_t = 16)]
        z: usize,
        /// Corrupted count for sym-general.
        #[arg(long)]
        z_tilde: Option<usize>,
        /// Per-packet corruption probability for the random pattern.
        #[arg(long, default_value_t = 0.3)]
        rho_c: f64,
        /// Exact prime modulus (overrides --q-bits).
        #[arg(long)]
        q: Option<u64>,
        #[arg(long, default_value_t = 31)]
        q_bits: u32,
        /// Payload width of the synthetic packets.
        #[arg(long, default_value_t = 4)]
        cols: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate hash parameters; prints q, r, g, b as decimal, one per line.
    GenParams {
        #[arg(long, default_value_t = 31)]
        q_bits: u32,
        #[arg(long, default_value_t = 62)]
        r_bits: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn experiment_exit(err: &ExperimentError) -> u8 {
    match err {
        ExperimentError::Config(_) => EXIT_CONFIG,
        // bad q_bits/r_bits reach the hash layer through the config
        ExperimentError::Hash(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig, (u8, String)> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| (EXIT_CONFIG, format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text).map_err(|e| (EXIT_CONFIG, e.to_string()))?
        }
        None => ExperimentConfig::default(),
    };
    for pair in &common.set {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| (EXIT_CONFIG, format!("--set expects KEY=VALUE, got {pair:?}")))?;
        cfg.apply_set(key.trim(), value.trim())
            .map_err(|e| (EXIT_CONFIG, e.to_string()))?;
    }
    if let Some(seed) = common.seed {
        cfg.base_seed = seed;
    }
    if let Some(reps) = common.reps {
        cfg.replications = reps;
    }
    cfg.validate().map_err(|e| (EXIT_CONFIG, e.to_string()))?;
    Ok(cfg)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), (u8, String)> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| (1, format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_pattern(
    name: &str,
    z_tilde: Option<usize>,
    rho_c: f64,
) -> Result<McPattern, (u8, String)> {
    match name {
        "sym-pair" => Ok(McPattern::SymPair),
        "sym-general" => {
            let z_tilde = z_tilde
                .ok_or((EXIT_CONFIG, "sym-general requires --z-tilde".to_string()))?;
            Ok(McPattern::SymGeneral { z_tilde })
        }
        "triple" => Ok(McPattern::Triple),
        "random" => Ok(McPattern::Random { rho_c }),
        other => Err((EXIT_CONFIG, format!("unknown pattern '{other}'"))),
    }
}

fn parse_checker(name: &str) -> Result<McChecker, (u8, String)> {
    match name {
        "lw" => Ok(McChecker::Lw),
        "hw" => Ok(McChecker::Hw),
        "multiround" => Ok(McChecker::MultiRound),
        other => Err((EXIT_CONFIG, format!("unknown checker '{other}'"))),
    }
}

fn dispatch(command: Command) -> Result<(), (u8, String)> {
    match command {
        Command::Run { common } => {
            let cfg = load_config(&common)?;
            let csv = run_csv(&cfg).map_err(|e| (experiment_exit(&e), e.to_string()))?;
            emit(&common.out, &csv)
        }
        Command::Sweep { common, param, values } => {
            let cfg = load_config(&common)?;
            let csv = sweep_csv(&cfg, &param, &values)
                .map_err(|e| (experiment_exit(&e), e.to_string()))?;
            emit(&common.out, &csv)
        }
        Command::Bounds { common } => {
            let cfg = load_config(&common)?;
            let csv = bounds_csv(&cfg).map_err(|e| (experiment_exit(&e), e.to_string()))?;
            emit(&common.out, &csv)
        }
        Command::McDetect {
            pattern,
            checker,
            trials,
            seed,
            z,
            z_tilde,
            rho_c,
            q,
            q_bits,
            cols,
            out,
        } => {
            let opts = McDetectOpts {
                pattern: parse_pattern(&pattern, z_tilde, rho_c)?,
                checker: parse_checker(&checker)?,
                trials,
                seed,
                z,
                q,
                q_bits,
                cols,
            };
            let report = mc_detect(&opts).map_err(|e| (experiment_exit(&e), e.to_string()))?;
            emit(&out, &report.csv())
        }
        Command::GenParams { q_bits, r_bits, seed } => {
            let params =
                gen_params(q_bits, r_bits, seed).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
            println!("{}\n{}\n{}\n{}", params.q, params.r, params.g, params.b);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => fail(code, message),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn pattern_and_checker_parsing() {
        assert!(matches!(parse_pattern("sym-pair", None, 0.0), Ok(McPattern::SymPair)));
        assert!(matches!(
            parse_pattern("sym-general", Some(4), 0.0),
            Ok(McPattern::SymGeneral { z_tilde: 4 })
        ));
        assert!(parse_pattern("sym-general", None, 0.0).is_err());
        assert!(matches!(parse_pattern("random", None, 0.25), Ok(McPattern::Random { .. })));
        assert!(parse_pattern("bogus", None, 0.0).is_err());
        assert!(matches!(parse_checker("multiround"), Ok(McChecker::MultiRound)));
        assert!(parse_checker("xl").is_err());
    }
}
