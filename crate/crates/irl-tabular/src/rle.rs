//! Online IRL pipeline: reward-free exploration for a behavior mixture,
//! main data collection, per-cell subsampling to the certified density, and
//! offline estimation on the trimmed data.
//!
//! Trimmed data is consumed counts-first: the estimators only read per-cell
//! tallies, so the trim emits independent per-`(h, s, a)` transition pools
//! rather than whole episodes.

use ndarray::Array3;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::explore::{explore_run, occupancy_hat_mixture, ExploreSummary, OccupancyOracle, PolicyMixture, XiConfig};
use crate::mdp::MdpCore;
use crate::offline::{
    roll_episode, EpisodeDataset, FeedbackOption, Provenance, TransitionRecord, TransitionSource,
};
use crate::reward_map::ParamSet;
use crate::rlp::{rlp_run, RlpConfig};
use crate::seed;

#[derive(Debug, Clone)]
pub struct RleConfig {
    /// Episodes per exploration stage (`N`); `None` selects the schedule
    /// `min(sqrt(H^9 S^7 A^7 K), K H)` with a unit constant.
    pub explore_budget: Option<usize>,
    /// Main collection episodes (`K`).
    pub main_episodes: usize,
    pub delta: f64,
    pub eps: f64,
    pub bonus_scale: f64,
    pub option: FeedbackOption,
    pub xi: XiConfig,
}

impl RleConfig {
    pub fn resolve_explore_budget(&self, dims: (usize, usize, usize)) -> usize {
        let (h, s, a) = dims;
        let cap = self.main_episodes * h;
        match self.explore_budget {
            Some(n) => n.min(cap).max(1),
            None => {
                let (hf, sf, af) = (h as f64, s as f64, a as f64);
                let shaped =
                    (hf.powi(9) * sf.powi(7) * af.powi(7) * self.main_episodes as f64).sqrt();
                (shaped.ceil() as usize).clamp(1, cap)
            }
        }
    }

    pub fn validate(&self, dims: (usize, usize, usize)) -> Result<()> {
        if self.main_episodes == 0 {
            return Err(Error::InvalidArgument("K must be >= 1".into()));
        }
        let n = self.resolve_explore_budget(dims);
        if n > self.main_episodes * dims.0 {
            return Err(Error::InvalidArgument(format!(
                "exploration budget N = {n} exceeds K * H = {}",
                self.main_episodes * dims.0
            )));
        }
        Ok(())
    }
}

/// Per-cell subsampling targets
/// `floor(max(0, min(K/4, K * E_mu[d_hat] - K xi / (8N) - 3 log(10HSA/delta))))`.
pub fn trim_target(
    oracle: &OccupancyOracle,
    mixture: &PolicyMixture,
    k_main: usize,
    xi: f64,
    n_per_stage: usize,
    delta: f64,
) -> Array3<u64> {
    let (h, s, a) = oracle.dims();
    let mix_occ = occupancy_hat_mixture(oracle, mixture);
    let log_term = 3.0 * (10.0 * (h * s * a) as f64 / delta).ln();
    let xi_term = k_main as f64 * xi / (8.0 * n_per_stage as f64);
    let quarter = k_main as f64 / 4.0;
    let mut out = Array3::zeros((h, s, a));
    for ((idx, &occ), target) in mix_occ.indexed_iter().zip(out.iter_mut()) {
        let _ = idx;
        let raw = (k_main as f64 * occ - xi_term - log_term).min(quarter);
        *target = raw.max(0.0).floor() as u64;
    }
    out
}

/// Trimmed transition pools, grouped logically per `(h, s, a)` and flattened
/// in canonical `(h, s, a, collection-order)` order.
#[derive(Debug, Clone)]
pub struct TrimmedDataset {
    pub option: FeedbackOption,
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub records: Vec<TransitionRecord>,
}

impl TransitionSource for TrimmedDataset {
    fn option(&self) -> FeedbackOption {
        self.option
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.horizon, self.num_states, self.num_actions)
    }

    fn records(&self) -> Box<dyn Iterator<Item = TransitionRecord> + '_> {
        Box::new(self.records.iter().copied())
    }
}

/// Uniform without-replacement subsample: per `(h, s, a)` keep
/// `min(target, available)` of the dataset's records, deterministically in
/// the seed.
pub fn subsample(dataset: &EpisodeDataset, targets: &Array3<u64>, seed_value: u64) -> TrimmedDataset {
    let (h, s, a) = dataset.dims();
    let mut pools: BTreeMap<(usize, usize, usize), Vec<TransitionRecord>> = BTreeMap::new();
    for record in dataset.records() {
        pools.entry((record.step, record.state, record.action)).or_default().push(record);
    }
    let mut records = Vec::new();
    let _ = (h, s, a);
    for ((hh, ss, aa), mut pool) in pools {
        let keep = (targets[[hh, ss, aa]] as usize).min(pool.len());
        if keep == 0 {
            continue;
        }
        let mut rng = seed::derived_rng(seed_value, ((hh as u64) << 40) | ((ss as u64) << 20) | aa as u64);
        // partial Fisher-Yates: the first `keep` slots are a uniform sample
        for i in 0..keep {
            let j = i + rand::Rng::random_range(&mut rng, 0..pool.len() - i);
            pool.swap(i, j);
        }
        records.extend_from_slice(&pool[..keep]);
    }
    TrimmedDataset {
        option: dataset.option,
        horizon: dataset.horizon,
        num_states: dataset.num_states,
        num_actions: dataset.num_actions,
        records,
    }
}

/// Online run summary.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RleSummary {
    pub episodes_explore: usize,
    pub episodes_main: usize,
    pub trim_retention_fraction: f64,
    pub explore: ExploreSummary,
    /// Filled by callers that evaluate recovery metrics on the result.
    pub metric_estimates: BTreeMap<String, f64>,
}

/// Full online pipeline. Returns the estimated mapping (built by the offline
/// estimator on trimmed data with parameters `(Theta, delta/10, eps/10)`)
/// plus accounting.
pub fn rle_run(
    mdp: &MdpCore,
    expert: &crate::mdp::Policy,
    thetas: &ParamSet,
    config: &RleConfig,
    seed_value: u64,
) -> Result<(crate::reward_map::RewardMapping, RleSummary)> {
    let dims = mdp.dims();
    let (h, s, a) = dims;
    config.validate(dims)?;
    let n = config.resolve_explore_budget(dims);
    let k = config.main_episodes;
    let xi = config.xi.threshold(h, s, a, config.delta);

    let (oracle, mixture, explore_summary) = explore_run(mdp, n, k, xi, seed::mix64(seed_value, 1))?;

    // main collection: sample a mixture atom per episode, then roll it
    let mut episodes = Vec::with_capacity(k);
    for kk in 0..k {
        let mut rng = seed::derived_rng(seed::mix64(seed_value, 2), kk as u64);
        let atom = mixture.sample_atom(&mut rng);
        let policy = mixture.atom_policy(atom, a);
        episodes.push(roll_episode(mdp, &policy, expert, config.option, &mut rng));
    }
    let dataset = EpisodeDataset {
        option: config.option,
        horizon: h,
        num_states: s,
        num_actions: a,
        episodes,
        provenance: Provenance {
            seed: seed_value,
            num_episodes: k,
            behavior_id: "explore-mixture".into(),
            expert_id: "expert".into(),
        },
    };

    let targets = trim_target(&oracle, &mixture, k, xi, n, config.delta);
    let trimmed = subsample(&dataset, &targets, seed::mix64(seed_value, 3));
    let retention = trimmed.records.len() as f64 / (k * h) as f64;

    let rlp_config = RlpConfig::for_param_set(
        config.delta / 10.0,
        config.eps / 10.0,
        config.bonus_scale,
        config.option,
        thetas,
    )?;
    let mapping = rlp_run(&trimmed, thetas, &rlp_config)?;
    let summary = RleSummary {
        episodes_explore: explore_summary.total_episodes,
        episodes_main: k,
        trim_retention_fraction: retention,
        explore: explore_summary,
        metric_estimates: BTreeMap::new(),
    };
    Ok((mapping, summary))
}
