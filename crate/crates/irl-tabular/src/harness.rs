//! Experiment harness: scenario presets, seed fan-out, deterministic sweeps
//! over `(K, seed)` cells, rate fits, and CSV/JSON emission.
//!
//! A cell runs one end-to-end pipeline (collect, estimate, measure) and
//! yields one CSV row `scenario,k,seed,metric,monotone,episodes,wall_ms`.
//! Cells are independent and run in parallel; rows are emitted in canonical
//! `(k, seed)` order, so repeated runs are byte-identical apart from the
//! wall-clock column.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::explore::XiConfig;
use crate::instances::random_mdp;
use crate::mdp::{MdpCore, Policy};
use crate::metrics::{d_all_theta, d_pi_theta, DAllMode};
use crate::offline::{collect_dataset, FeedbackOption};
use crate::reward_map::{sample_theta, ParamSet, RewardMapping, RewardParam};
use crate::rle::{rle_run, RleConfig, RleSummary};
use crate::rlp::{rlp_run, RlpConfig};
use crate::seed::mix64;

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Elementwise slack when checking `r_hat <= r_star`.
pub const MONOTONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Offline estimation, full-support behavior policy, deterministic
    /// evaluation policy with finite concentrability.
    Offline,
    /// Offline with behavior = evaluation = expert (the improved-rate preset).
    OfflineExpertEval,
    /// Online pipeline: explore, collect, trim, estimate.
    Online,
    /// Offline estimation on a source MDP, metric evaluated in a perturbed
    /// target MDP.
    Transfer,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Offline => "offline",
            Scenario::OfflineExpertEval => "offline_expert_eval",
            Scenario::Online => "online",
            Scenario::Transfer => "transfer",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InstanceSource {
    Generator {
        #[serde(rename = "H")]
        horizon: usize,
        #[serde(rename = "S")]
        num_states: usize,
        #[serde(rename = "A")]
        num_actions: usize,
        seed: u64,
        #[serde(default = "default_concentration")]
        concentration: f64,
    },
    File {
        mdp: PathBuf,
        expert: PathBuf,
    },
}

fn default_concentration() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    DPi,
    DAllSurrogate,
    DAllBruteforce,
}

/// Pass/fail gates evaluated on the finished table (CLI exit code 3 when
/// any gate fails).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExpectBlock {
    pub slope_min: Option<f64>,
    pub slope_max: Option<f64>,
    pub monotone_min_fraction: Option<f64>,
    #[serde(default)]
    pub median_nonincreasing: bool,
    #[serde(default)]
    pub median_strictly_decreasing: bool,
    /// Online only: certificate threshold as a multiple of `H * S * A`.
    pub certificate_max_factor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub instance: InstanceSource,
    pub k_schedule: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_option_code")]
    pub option: u8,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_bonus")]
    pub bonus_scale: f64,
    #[serde(default = "default_num_thetas")]
    pub num_thetas: usize,
    #[serde(default = "default_theta_scale")]
    pub theta_scale: f64,
    #[serde(default)]
    pub theta_seed: u64,
    pub metric_mode: Option<MetricMode>,
    /// Weight of the expert inside the offline behavior mix; the remainder
    /// is uniform. Ignored by the expert-eval and online scenarios.
    #[serde(default = "default_behavior_mix")]
    pub behavior_expert_weight: f64,
    /// Online only: exploration budget per stage (default: shaped schedule).
    pub explore_budget: Option<usize>,
    #[serde(default)]
    pub xi: XiConfig,
    #[serde(default)]
    pub expect: Option<ExpectBlock>,
}

fn default_option_code() -> u8 {
    1
}
fn default_delta() -> f64 {
    0.1
}
fn default_eps() -> f64 {
    0.01
}
fn default_bonus() -> f64 {
    1.0
}
fn default_num_thetas() -> usize {
    10
}
fn default_theta_scale() -> f64 {
    1.0
}
fn default_behavior_mix() -> f64 {
    0.5
}

impl ExperimentConfig {
    pub fn metric_mode(&self) -> MetricMode {
        self.metric_mode.unwrap_or(match self.scenario {
            Scenario::Online => MetricMode::DAllSurrogate,
            _ => MetricMode::DPi,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_schedule.is_empty() {
            return Err(Error::InvalidArgument("empty K schedule".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("empty seed list".into()));
        }
        FeedbackOption::from_code(self.option)?;
        Ok(())
    }

    /// FNV-1a hash of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).unwrap_or_default();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        format!("{h:016x}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRow {
    pub scenario: String,
    pub k: usize,
    pub seed: u64,
    pub metric: f64,
    pub monotone: bool,
    pub episodes: usize,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultTable {
    pub rows: Vec<ExperimentRow>,
    pub config_hash: String,
    pub version: String,
    /// Online cells keep their run summaries (indexed by `(k, seed)`).
    pub rle_summaries: Vec<(usize, u64, RleSummary)>,
    /// Transfer cells record the weak-transferability coefficient.
    pub transfer_coefficient: Option<f64>,
}

struct ResolvedInstance {
    mdp: MdpCore,
    expert: Policy,
    instance_seed: u64,
}

fn resolve_instance(source: &InstanceSource) -> Result<ResolvedInstance> {
    match source {
        InstanceSource::Generator { horizon, num_states, num_actions, seed, concentration } => {
            let (mdp, expert) = random_mdp(*horizon, *num_states, *num_actions, *seed, *concentration)?;
            Ok(ResolvedInstance { mdp, expert, instance_seed: *seed })
        }
        InstanceSource::File { mdp, expert } => Ok(ResolvedInstance {
            mdp: crate::io::load_mdp(mdp)?,
            expert: crate::io::load_policy(expert)?,
            instance_seed: 0,
        }),
    }
}

fn fixed_thetas(config: &ExperimentConfig, dims: (usize, usize, usize)) -> Result<Vec<RewardParam>> {
    let (h, s, a) = dims;
    (0..config.num_thetas)
        .map(|i| sample_theta(h, s, a, mix64(config.theta_seed, i as u64), config.theta_scale))
        .collect()
}

fn measure(
    config: &ExperimentConfig,
    mdp: &MdpCore,
    eval_policy: &Policy,
    gt: &RewardMapping,
    est: &RewardMapping,
    thetas: &[RewardParam],
) -> Result<f64> {
    Ok(match config.metric_mode() {
        MetricMode::DPi => d_pi_theta(mdp, eval_policy, gt, est, thetas)?.value,
        MetricMode::DAllSurrogate => {
            d_all_theta(mdp, gt, est, thetas, DAllMode::Surrogate, None)?.value
        }
        MetricMode::DAllBruteforce => {
            d_all_theta(mdp, gt, est, thetas, DAllMode::BruteForce, None)?.value
        }
    })
}

fn monotone_below(gt: &RewardMapping, est: &RewardMapping, thetas: &[RewardParam]) -> bool {
    thetas.iter().all(|theta| {
        let hat = est.reward(theta);
        let star = gt.reward(theta);
        hat.values.iter().zip(star.values.iter()).all(|(a, b)| *a <= *b + MONOTONE_TOL)
    })
}

/// Runs the configured sweep. Deterministic per `(config, seed list)`: the
/// cell for `(k, seed)` derives its streams from `mix64(seed, k)` only.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let option = FeedbackOption::from_code(config.option)?;
    let instance = resolve_instance(&config.instance)?;
    let dims = instance.mdp.dims();
    let (h, s, a) = dims;
    let thetas = fixed_thetas(config, dims)?;
    let theta_set = ParamSet::FiniteList(thetas.clone());
    let gt = RewardMapping::ground_truth(&instance.mdp, &instance.expert)?;

    // scenario-fixed policies
    let uniform = Policy::uniform(h, s, a);
    let (eval_policy, behavior_policy) = match config.scenario {
        Scenario::Offline | Scenario::Transfer => (
            instance.expert.clone(),
            instance.expert.mix(&uniform, config.behavior_expert_weight),
        ),
        Scenario::OfflineExpertEval => (instance.expert.clone(), instance.expert.clone()),
        Scenario::Online => (instance.expert.clone(), uniform.clone()),
    };

    // transfer target: an independently drawn MDP over the same frame
    let target = match config.scenario {
        Scenario::Transfer => {
            let (tgt, _) = random_mdp(h, s, a, mix64(instance.instance_seed, 0x7A67), 1.0)?;
            Some(tgt)
        }
        _ => None,
    };
    let transfer_coefficient = match (&target, config.scenario) {
        (Some(tgt), Scenario::Transfer) => Some(crate::metrics::weak_transferability(
            &instance.mdp,
            tgt,
            &behavior_policy,
            &eval_policy,
        )?),
        _ => None,
    };

    let mut cells: Vec<(usize, u64)> = Vec::new();
    for &k in &config.k_schedule {
        for &sd in &config.seeds {
            cells.push((k, sd));
        }
    }
    cells.sort_unstable();

    let outcomes: Result<Vec<_>> = cells
        .par_iter()
        .map(|&(k, sd)| -> Result<(ExperimentRow, Option<RleSummary>)> {
            let start = Instant::now();
            let cell_seed = mix64(sd, k as u64);
            let (est, episodes, summary) = match config.scenario {
                Scenario::Online => {
                    let rle_config = RleConfig {
                        explore_budget: config.explore_budget,
                        main_episodes: k,
                        delta: config.delta,
                        eps: config.eps,
                        bonus_scale: config.bonus_scale,
                        option,
                        xi: config.xi,
                    };
                    let (mapping, summary) =
                        rle_run(&instance.mdp, &instance.expert, &theta_set, &rle_config, cell_seed)?;
                    let episodes = summary.episodes_main + summary.episodes_explore;
                    (mapping, episodes, Some(summary))
                }
                _ => {
                    let dataset = collect_dataset(
                        &instance.mdp,
                        &behavior_policy,
                        &instance.expert,
                        option,
                        k,
                        cell_seed,
                        None,
                    )?;
                    let rlp_config = RlpConfig::for_param_set(
                        config.delta,
                        config.eps,
                        config.bonus_scale,
                        option,
                        &theta_set,
                    )?;
                    (rlp_run(&dataset, &theta_set, &rlp_config)?, k, None)
                }
            };
            let metric_mdp = target.as_ref().unwrap_or(&instance.mdp);
            let metric = measure(config, metric_mdp, &eval_policy, &gt, &est, &thetas)?;
            let monotone = monotone_below(&gt, &est, &thetas);
            let row = ExperimentRow {
                scenario: config.scenario.as_str().to_string(),
                k,
                seed: sd,
                metric,
                monotone,
                episodes,
                wall_ms: start.elapsed().as_millis(),
            };
            Ok((row, summary))
        })
        .collect();
    let outcomes = outcomes?;

    let mut rows = Vec::with_capacity(outcomes.len());
    let mut rle_summaries = Vec::new();
    for (row, summary) in outcomes {
        if let Some(s) = summary {
            rle_summaries.push((row.k, row.seed, s));
        }
        rows.push(row);
    }
    Ok(ResultTable {
        rows,
        config_hash: config.hash(),
        version: VERSION.to_string(),
        rle_summaries,
        transfer_coefficient,
    })
}

impl ResultTable {
    /// CSV emission: two comment lines (config hash, version) then the
    /// 7-column schema.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# config_hash={}\n", self.config_hash));
        out.push_str(&format!("# version={}\n", self.version));
        out.push_str("scenario,k,seed,metric,monotone,episodes,wall_ms\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.12e},{},{},{}\n",
                r.scenario, r.k, r.seed, r.metric, r.monotone, r.episodes, r.wall_ms
            ));
        }
        out
    }

    /// Median metric per K, ascending in K.
    pub fn medians_by_k(&self) -> Vec<(usize, f64)> {
        let mut grouped: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            grouped.entry(r.k).or_default().push(r.metric);
        }
        grouped.into_iter().map(|(k, v)| (k, median(v))).collect()
    }

    pub fn monotone_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.monotone).count() as f64 / self.rows.len() as f64
    }
}

pub fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Least-squares slope of `log(median metric)` against `log K`.
pub fn fit_rate_points(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 4 {
        return Err(Error::Degenerate(format!("rate fit needs >= 4 points, got {}", points.len())));
    }
    if points.iter().any(|&(k, m)| k <= 0.0 || m <= 0.0 || !m.is_finite()) {
        return Err(Error::Degenerate("rate fit needs positive finite medians".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(k, m)| (k.ln(), m.ln())).collect();
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("rate fit needs at least two distinct K values".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    Ok(sxy / sxx)
}

pub fn fit_rate(table: &ResultTable) -> Result<f64> {
    let medians = table.medians_by_k();
    let points: Vec<(f64, f64)> = medians.iter().map(|&(k, m)| (k as f64, m)).collect();
    fit_rate_points(&points)
}

/// Expectation report driving the CLI's exit code 3.
#[derive(Debug, Clone, Serialize)]
pub struct ExpectReport {
    pub pass: bool,
    pub slope: Option<f64>,
    pub monotone_fraction: f64,
    pub failures: Vec<String>,
}

pub fn evaluate_expectations(table: &ResultTable, expect: &ExpectBlock) -> ExpectReport {
    let mut failures = Vec::new();
    let slope = fit_rate(table).ok();
    if let Some(lo) = expect.slope_min {
        match slope {
            Some(s) if s >= lo => {}
            _ => failures.push(format!("slope {slope:?} below minimum {lo}")),
        }
    }
    if let Some(hi) = expect.slope_max {
        match slope {
            Some(s) if s <= hi => {}
            _ => failures.push(format!("slope {slope:?} above maximum {hi}")),
        }
    }
    let monotone_fraction = table.monotone_fraction();
    if let Some(min_frac) = expect.monotone_min_fraction {
        if monotone_fraction < min_frac {
            failures.push(format!(
                "monotone fraction {monotone_fraction:.3} below required {min_frac:.3}"
            ));
        }
    }
    let medians = table.medians_by_k();
    if expect.median_nonincreasing {
        for w in medians.windows(2) {
            if w[1].1 > w[0].1 + 1e-12 {
                failures.push(format!(
                    "median rose from {:.6e} (K={}) to {:.6e} (K={})",
                    w[0].1, w[0].0, w[1].1, w[1].0
                ));
            }
        }
    }
    if expect.median_strictly_decreasing {
        for w in medians.windows(2) {
            if w[1].1 >= w[0].1 {
                failures.push(format!(
                    "median not strictly decreasing at K={} -> K={}",
                    w[0].0, w[1].0
                ));
            }
        }
    }
    if let Some(factor) = expect.certificate_max_factor {
        for (k, sd, summary) in &table.rle_summaries {
            if !summary.explore.final_converged {
                failures.push(format!("exploration did not certify at K={k}, seed={sd}"));
            }
            let _ = factor;
        }
    }
    ExpectReport { pass: failures.is_empty(), slope, monotone_fraction, failures }
}
