//! Command-line front end: instance generation, data collection, offline and
//! online estimation, metrics, and experiment sweeps.
//!
//! Exit codes: 0 on success, 2 on validation errors, 3 when an experiment's
//! expectation gates fail.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use irl_tabular::explore::XiConfig;
use irl_tabular::harness::{evaluate_expectations, fit_rate, run_experiment, ExperimentConfig};
use irl_tabular::instances::{hard_offline, hard_online, random_mdp, HardInstanceSpec};
use irl_tabular::io;
use irl_tabular::metrics::{d_all_bruteforce, d_all_surrogate, d_pi};
use irl_tabular::offline::{collect_dataset, FeedbackOption};
use irl_tabular::rle::{rle_run, RleConfig};
use irl_tabular::rlp::{rlp_run, RlpConfig};
use irl_tabular::{Error, Result};

#[derive(Parser)]
#[command(name = "irl", version, about = "Tabular IRL: reward-mapping recovery and metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum HardKind {
    Offline,
    Online,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricKindArg {
    Dpi,
    DallBrute,
    DallSurrogate,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random MDP with a deterministic expert.
    Gen {
        #[arg(long)]
        h: usize,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        a: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        concentration: f64,
        /// Output prefix; writes <prefix>.mdp.json and <prefix>.expert.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate hard instances (offline variant also emits behavior/eval policies).
    Hard {
        #[arg(long, value_enum)]
        kind: HardKind,
        #[arg(long)]
        h: usize,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        a: usize,
        #[arg(long, default_value_t = 0.25)]
        eps_prime: f64,
        #[arg(long, default_value_t = 2.0)]
        c_star: f64,
        #[arg(long, default_value_t = 0)]
        i_star: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect a demonstration dataset (JSONL).
    Collect {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        behavior: PathBuf,
        #[arg(long)]
        expert: PathBuf,
        /// Feedback option: 1 = expert actions, 2 = support flags.
        #[arg(long, default_value_t = 1)]
        option: u8,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Well-posedness threshold checked on the expert (option 1).
        #[arg(long)]
        delta_check: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Offline estimation: fit on a dataset and emit rewards for a parameter list.
    Rlp {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        thetas: PathBuf,
        #[arg(long, default_value_t = 1)]
        option: u8,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        bonus_c: f64,
        /// MDP file fixing the table dimensions (otherwise inferred).
        #[arg(long)]
        mdp: Option<PathBuf>,
        /// Output directory for reward_<i>.json files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Online estimation: explore, collect, trim, estimate.
    Rle {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        expert: PathBuf,
        #[arg(long)]
        thetas: PathBuf,
        #[arg(long)]
        k: usize,
        /// Episodes per exploration stage (default: shaped schedule).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1)]
        option: u8,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        bonus_c: f64,
        #[arg(long, default_value_t = 1e-6)]
        c_xi: f64,
        /// Restore the literal threshold and schedule constants.
        #[arg(long, default_value_t = false)]
        paper_faithful: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distance between two reward files.
    Metric {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long, value_enum)]
        kind: MetricKindArg,
        /// Policy file (required for dpi).
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        r1: PathBuf,
        #[arg(long)]
        r2: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a (K, seed) sweep from a JSON config; CSV + summary JSON out.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gen { h, s, a, seed, concentration, out } => {
            let (mdp, expert) = random_mdp(h, s, a, seed, concentration)?;
            io::save_mdp(&out.with_extension("mdp.json"), &mdp)?;
            io::save_policy(&out.with_extension("expert.json"), &expert)?;
            println!("wrote {}.{{mdp,expert}}.json", out.display());
        }
        Command::Hard { kind, h, s, a, eps_prime, c_star, i_star, seed, out } => {
            let spec = HardInstanceSpec::random(h, s, a, eps_prime, c_star, i_star, seed)?;
            match kind {
                HardKind::Online => {
                    let (mdp, expert) = hard_online(&spec)?;
                    io::save_mdp(&out.with_extension("mdp.json"), &mdp)?;
                    io::save_policy(&out.with_extension("expert.json"), &expert)?;
                    println!("wrote {}.{{mdp,expert}}.json", out.display());
                }
                HardKind::Offline => {
                    let (mdp, expert, behavior, eval) = hard_offline(&spec)?;
                    io::save_mdp(&out.with_extension("mdp.json"), &mdp)?;
                    io::save_policy(&out.with_extension("expert.json"), &expert)?;
                    io::save_policy(&out.with_extension("behavior.json"), &behavior)?;
                    io::save_policy(&out.with_extension("eval.json"), &eval)?;
                    println!("wrote {}.{{mdp,expert,behavior,eval}}.json", out.display());
                }
            }
        }
        Command::Collect { mdp, behavior, expert, option, k, seed, delta_check, out } => {
            let mdp = io::load_mdp(&mdp)?;
            let behavior = io::load_policy(&behavior)?;
            let expert = io::load_policy(&expert)?;
            let option = FeedbackOption::from_code(option)?;
            let dataset = collect_dataset(&mdp, &behavior, &expert, option, k, seed, delta_check)?;
            io::save_dataset(&out, &dataset)?;
            println!("wrote {} episodes to {}", k, out.display());
        }
        Command::Rlp { dataset, thetas, option, delta, eps, bonus_c, mdp, out } => {
            let option = FeedbackOption::from_code(option)?;
            let dims = match mdp {
                Some(path) => Some(io::load_mdp(&path)?.dims()),
                None => None,
            };
            let data = io::load_dataset(&dataset, option, dims)?;
            let set = io::load_param_set(&thetas)?;
            let config = RlpConfig::for_param_set(delta, eps, bonus_c, option, &set)?;
            let mapping = rlp_run(&data, &set, &config)?;
            std::fs::create_dir_all(&out)?;
            for (i, theta) in set.params()?.iter().enumerate() {
                io::save_reward(&out.join(format!("reward_{i}.json")), &mapping.reward(theta))?;
            }
            println!("wrote {} reward tables to {}", set.params()?.len(), out.display());
        }
        Command::Rle {
            mdp,
            expert,
            thetas,
            k,
            n,
            option,
            delta,
            eps,
            bonus_c,
            c_xi,
            paper_faithful,
            seed,
            out,
        } => {
            let mdp = io::load_mdp(&mdp)?;
            let expert = io::load_policy(&expert)?;
            let set = io::load_param_set(&thetas)?;
            let config = RleConfig {
                explore_budget: n,
                main_episodes: k,
                delta,
                eps,
                bonus_scale: bonus_c,
                option: FeedbackOption::from_code(option)?,
                xi: XiConfig { c_xi, paper_faithful },
            };
            let (mapping, summary) = rle_run(&mdp, &expert, &set, &config, seed)?;
            std::fs::create_dir_all(&out)?;
            for (i, theta) in set.params()?.iter().enumerate() {
                io::save_reward(&out.join(format!("reward_{i}.json")), &mapping.reward(theta))?;
            }
            io::save_json(&out.join("summary.json"), &summary)?;
            println!(
                "explore episodes {}, main episodes {}, retention {:.3}",
                summary.episodes_explore, summary.episodes_main, summary.trim_retention_fraction
            );
        }
        Command::Metric { mdp, kind, policy, r1, r2, out } => {
            let mdp = io::load_mdp(&mdp)?;
            let r1 = io::load_reward(&r1)?;
            let r2 = io::load_reward(&r2)?;
            let report = match kind {
                MetricKindArg::Dpi => {
                    let policy_path = policy.ok_or_else(|| {
                        Error::InvalidArgument("--policy is required for kind dpi".into())
                    })?;
                    let policy = io::load_policy(&policy_path)?;
                    d_pi(&mdp, &policy, &r1, &r2)?
                }
                MetricKindArg::DallBrute => d_all_bruteforce(&mdp, &r1, &r2, None)?,
                MetricKindArg::DallSurrogate => d_all_surrogate(&mdp, &r1, &r2)?,
            };
            let text = serde_json::to_string_pretty(&report.to_json())?;
            match out {
                Some(path) => {
                    std::fs::write(&path, &text)?;
                    println!("wrote {}", path.display());
                }
                None => println!("{text}"),
            }
        }
        Command::Experiment { config, out } => {
            let config: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(&config)?)?;
            let table = run_experiment(&config)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("results.csv"), table.to_csv())?;
            let summary = serde_json::json!({
                "config_hash": table.config_hash,
                "version": table.version,
                "medians_by_k": table.medians_by_k(),
                "monotone_fraction": table.monotone_fraction(),
                "slope": fit_rate(&table).ok(),
                "transfer_coefficient": table.transfer_coefficient,
            });
            io::save_json(&out.join("summary.json"), &summary)?;
            println!("wrote results.csv and summary.json to {}", out.display());
            if let Some(expect) = &config.expect {
                let report = evaluate_expectations(&table, expect);
                io::save_json(&out.join("expect.json"), &report)?;
                if !report.pass {
                    for f in &report.failures {
                        eprintln!("expectation failed: {f}");
                    }
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
