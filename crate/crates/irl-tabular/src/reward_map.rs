//! Reward mappings: parameter spaces, the ground-truth generator of feasible
//! rewards, covering-number surrogates, and the feasibility checker.
//!
//! A parameter `theta = (V, A)` with `||V_h||_inf <= H - h` and
//! `0 <= A_h <= H - h` (0-based steps) induces the reward
//!
//! ```text
//! r_h(s, a) = -A_h(s, a) * 1{a not in supp(expert_h(.|s))}
//!             + V_h(s) - [P_h V_{h+1}](s, a)
//! ```
//!
//! with `V_H = 0`. The expert is optimal under every such reward and the
//! image is bounded by `3H`; every `[-1, 1]`-bounded feasible reward lies in
//! the image.

use ndarray::{Array2, Array3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{is_optimal, MdpCore, Policy, RewardTable};
use crate::seed;

/// Value-like and advantage-like tables parameterizing the reward mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardParam {
    /// Shape `(H, S)`, `||V[h]||_inf <= H - h`.
    pub value: Array2<f64>,
    /// Shape `(H, S, A)`, nonnegative, `||A[h]||_inf <= H - h`.
    pub advantage: Array3<f64>,
}

impl RewardParam {
    pub fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            value: Array2::zeros((horizon, num_states)),
            advantage: Array3::zeros((horizon, num_states, num_actions)),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let (h, s) = self.value.dim();
        let (_, _, a) = self.advantage.dim();
        (h, s, a)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, s) = self.value.dim();
        let (ha, sa, _aa) = self.advantage.dim();
        if ha != h || sa != s {
            return Err(Error::ShapeMismatch(format!(
                "value table is {:?} but advantage table is {:?}",
                self.value.dim(),
                self.advantage.dim()
            )));
        }
        for hh in 0..h {
            let cap = (h - hh) as f64 + 1e-12;
            for ss in 0..s {
                if self.value[[hh, ss]].abs() > cap {
                    return Err(Error::InvalidParam(format!(
                        "|V[{hh}][{ss}]| = {} exceeds {}",
                        self.value[[hh, ss]].abs(),
                        h - hh
                    )));
                }
            }
            for ((hi, ss, aa), &v) in self.advantage.indexed_iter() {
                if hi != hh {
                    continue;
                }
                if v < 0.0 {
                    return Err(Error::InvalidParam(format!("A[{hh}][{ss}][{aa}] = {v} < 0")));
                }
                if v > cap {
                    return Err(Error::InvalidParam(format!(
                        "A[{hh}][{ss}][{aa}] = {v} exceeds {}",
                        h - hh
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parameter set: an explicit finite list, or the full box `Vbar x Abar`.
#[derive(Debug, Clone)]
pub enum ParamSet {
    FiniteList(Vec<RewardParam>),
    FullBox { horizon: usize, num_states: usize },
}

impl ParamSet {
    pub fn validate(&self) -> Result<()> {
        match self {
            ParamSet::FiniteList(list) => {
                if list.is_empty() {
                    return Err(Error::EmptySet("parameter list"));
                }
                for theta in list {
                    theta.validate()?;
                }
                Ok(())
            }
            ParamSet::FullBox { horizon, num_states } => {
                if *horizon == 0 || *num_states == 0 {
                    return Err(Error::InvalidArgument("fullbox with empty dimensions".into()));
                }
                Ok(())
            }
        }
    }

    pub fn params(&self) -> Result<&[RewardParam]> {
        match self {
            ParamSet::FiniteList(list) => Ok(list),
            ParamSet::FullBox { .. } => Err(Error::InvalidArgument(
                "operation requires a finite parameter list, got fullbox".into(),
            )),
        }
    }
}

/// Log covering-number surrogate at resolution `eps`, clipped below at 1.
///
/// Finite lists use `log |Theta|`; the full box uses the standard inf-norm
/// ball bound `S * log(3H / eps)`. The clip keeps `log N * iota >= 1` in the
/// bonus, which is degenerate for singleton sets otherwise.
pub fn log_cover(set: &ParamSet, eps: f64) -> Result<f64> {
    if eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("covering resolution eps = {eps} <= 0")));
    }
    let raw = match set {
        ParamSet::FiniteList(list) => {
            if list.is_empty() {
                return Err(Error::EmptySet("parameter list"));
            }
            (list.len() as f64).ln()
        }
        ParamSet::FullBox { horizon, num_states } => {
            *num_states as f64 * (3.0 * *horizon as f64 / eps).ln()
        }
    };
    Ok(raw.max(1.0))
}

/// Exact-zero support mask `{(h,s,a) : pi_h(a|s) > 0}`.
///
/// Support membership is structural: ground-truth experts are produced by
/// generators with exact zeros, so no tolerance is applied.
pub fn support_mask(policy: &Policy) -> Array3<bool> {
    policy.probs.mapv(|p| p > 0.0)
}

/// Mapping tag: the ground-truth object or an estimate of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingTag {
    GroundTruth,
    Estimated,
}

/// A reward mapping: deterministic evaluator from parameters to rewards.
pub struct RewardMapping {
    tag: MappingTag,
    eval: Box<dyn Fn(&RewardParam) -> RewardTable + Send + Sync>,
}

impl RewardMapping {
    pub fn new(tag: MappingTag, eval: Box<dyn Fn(&RewardParam) -> RewardTable + Send + Sync>) -> Self {
        Self { tag, eval }
    }

    /// Ground-truth mapping of the IRL problem `(mdp, expert)`.
    pub fn ground_truth(mdp: &MdpCore, expert: &Policy) -> Result<Self> {
        crate::mdp::validate_mdp(mdp)?;
        expert.validate()?;
        let mdp = mdp.clone();
        let support = support_mask(expert);
        Ok(Self {
            tag: MappingTag::GroundTruth,
            eval: Box::new(move |theta| {
                ground_truth_from_support(&mdp, &support, theta)
                    .expect("mapping inputs validated at construction")
            }),
        })
    }

    pub fn tag(&self) -> MappingTag {
        self.tag
    }

    pub fn reward(&self, theta: &RewardParam) -> RewardTable {
        (self.eval)(theta)
    }
}

impl std::fmt::Debug for RewardMapping {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RewardMapping").field("tag", &self.tag).finish()
    }
}

fn ground_truth_from_support(
    mdp: &MdpCore,
    support: &Array3<bool>,
    theta: &RewardParam,
) -> Result<RewardTable> {
    theta.validate()?;
    let (h, s, a) = mdp.dims();
    if theta.dims() != (h, s, a) {
        return Err(Error::ShapeMismatch(format!(
            "theta has dims {:?}, mdp expects {:?}",
            theta.dims(),
            mdp.dims()
        )));
    }
    let mut values = Array3::zeros((h, s, a));
    for hh in 0..h {
        for ss in 0..s {
            let v_here = theta.value[[hh, ss]];
            for aa in 0..a {
                let mut pv = 0.0;
                if hh + 1 < h {
                    for sp in 0..s {
                        pv += mdp.transitions[[hh, ss, aa, sp]] * theta.value[[hh + 1, sp]];
                    }
                }
                let penalty = if support[[hh, ss, aa]] { 0.0 } else { theta.advantage[[hh, ss, aa]] };
                values[[hh, ss, aa]] = -penalty + v_here - pv;
            }
        }
    }
    RewardTable::new(values, 3.0 * h as f64)
}

/// Ground-truth reward for one parameter.
pub fn ground_truth_reward(mdp: &MdpCore, expert: &Policy, theta: &RewardParam) -> Result<RewardTable> {
    ground_truth_from_support(mdp, &support_mask(expert), theta)
}

/// Uniform test-fixture sampler over the parameter box, scaled by
/// `scale in [0, 1]`; deterministic in the seed.
pub fn sample_theta(
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    seed_value: u64,
    scale: f64,
) -> Result<RewardParam> {
    if !(0.0..=1.0).contains(&scale) {
        return Err(Error::InvalidArgument(format!("scale {scale} outside [0, 1]")));
    }
    let mut rng = seed::rng(seed_value);
    let mut theta = RewardParam::zeros(horizon, num_states, num_actions);
    for hh in 0..horizon {
        let cap = scale * (horizon - hh) as f64;
        for ss in 0..num_states {
            theta.value[[hh, ss]] = (2.0 * rng.random::<f64>() - 1.0) * cap;
            for aa in 0..num_actions {
                theta.advantage[[hh, ss, aa]] = rng.random::<f64>() * cap;
            }
        }
    }
    Ok(theta)
}

/// Lemma-1 forward check: the mapped reward keeps the expert optimal at
/// `1e-9` and stays within the `3H` bound.
pub fn check_feasible_bounded(mdp: &MdpCore, expert: &Policy, theta: &RewardParam) -> Result<bool> {
    let reward = ground_truth_reward(mdp, expert, theta)?;
    let bounded = reward.max_abs() <= 3.0 * mdp.horizon as f64;
    Ok(bounded && is_optimal(mdp, &reward, expert, 1e-9)?)
}
