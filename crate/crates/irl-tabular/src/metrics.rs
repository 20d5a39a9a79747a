//! Distances between rewards and between reward mappings, plus
//! concentrability and transferability coefficients.
//!
//! The base semimetric `d^pi` weights per-state value gaps by the policy's
//! visitation distribution and takes the worst step. `d^all` is its supremum
//! over policies: brute force enumerates deterministic policies (the sup is
//! attained there; the integrand is convex in each action-distribution
//! block), and the surrogate plans in the MDP endowed with `|r - r'|`, whose
//! optimal initial value upper-bounds `d^all`.

use ndarray::Array2;
use serde_json::json;

use crate::error::{Error, Result};
use crate::mdp::{evaluate_policy, occupancy, optimal_policy, MdpCore, Occupancy, Policy, RewardTable};
use crate::reward_map::{RewardMapping, RewardParam};

/// Default cap on brute-force policy enumeration.
pub const DEFAULT_ENUM_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Exact,
    BruteForce,
    UpperBound,
    SampledLowerBound,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Exact => "exact",
            MetricKind::BruteForce => "bruteforce",
            MetricKind::UpperBound => "upper_bound",
            MetricKind::SampledLowerBound => "sampled_lower_bound",
        }
    }
}

/// Argmax certificate: the step, deterministic policy (as an action table),
/// and/or parameter index achieving the reported value.
#[derive(Debug, Clone, Default)]
pub struct MetricWitness {
    pub step: Option<usize>,
    pub policy: Option<Array2<usize>>,
    pub theta_index: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct MetricReport {
    pub value: f64,
    pub kind: MetricKind,
    pub witness: Option<MetricWitness>,
}

impl MetricReport {
    pub fn to_json(&self) -> serde_json::Value {
        let witness = self.witness.as_ref().map(|w| {
            json!({
                "step": w.step,
                "policy": w.policy.as_ref().map(|p| p.outer_iter().map(|row| row.to_vec()).collect::<Vec<_>>()),
                "theta_index": w.theta_index,
            })
        });
        json!({ "value": self.value, "kind": self.kind.as_str(), "witness": witness })
    }
}

fn ensure_reward_dims(mdp: &MdpCore, r: &RewardTable, what: &str) -> Result<()> {
    if r.dims() != mdp.dims() {
        return Err(Error::ShapeMismatch(format!(
            "{what} has dims {:?}, mdp expects {:?}",
            r.dims(),
            mdp.dims()
        )));
    }
    Ok(())
}

fn d_pi_with_occupancy(
    mdp: &MdpCore,
    policy: &Policy,
    occ: &Occupancy,
    r1: &RewardTable,
    r2: &RewardTable,
) -> Result<(f64, usize)> {
    ensure_reward_dims(mdp, r1, "first reward")?;
    ensure_reward_dims(mdp, r2, "second reward")?;
    let v1 = evaluate_policy(mdp, r1, policy)?.v;
    let v2 = evaluate_policy(mdp, r2, policy)?.v;
    let (h, s, _) = mdp.dims();
    let mut best = f64::NEG_INFINITY;
    let mut best_h = 0;
    for hh in 0..h {
        let mut acc = 0.0;
        for ss in 0..s {
            acc += occ.state[[hh, ss]] * (v1[[hh, ss]] - v2[[hh, ss]]).abs();
        }
        if acc > best {
            best = acc;
            best_h = hh;
        }
    }
    Ok((best, best_h))
}

/// Base metric `d^pi`: worst step of the visitation-weighted absolute value
/// gap between the two rewards under `policy`.
pub fn d_pi(mdp: &MdpCore, policy: &Policy, r1: &RewardTable, r2: &RewardTable) -> Result<MetricReport> {
    let occ = occupancy(mdp, policy)?;
    let (value, step) = d_pi_with_occupancy(mdp, policy, &occ, r1, r2)?;
    Ok(MetricReport {
        value,
        kind: MetricKind::Exact,
        witness: Some(MetricWitness { step: Some(step), ..Default::default() }),
    })
}

/// Iterator over all deterministic policies of an `(H, S, A)` problem,
/// encoded as action tables in lexicographic order.
pub struct DetPolicyIter {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    next: u128,
    total: u128,
}

impl DetPolicyIter {
    pub fn new(horizon: usize, num_states: usize, num_actions: usize, cap: u128) -> Result<Self> {
        let cells = (horizon * num_states) as u32;
        let total = (num_actions as u128)
            .checked_pow(cells)
            .ok_or(Error::CapExceeded { required: u128::MAX, cap })?;
        if total > cap {
            return Err(Error::CapExceeded { required: total, cap });
        }
        Ok(Self { horizon, num_states, num_actions, next: 0, total })
    }

    pub fn len(&self) -> u128 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}

impl Iterator for DetPolicyIter {
    type Item = Array2<usize>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.total {
            return None;
        }
        let mut code = self.next;
        self.next += 1;
        let mut actions = Array2::zeros((self.horizon, self.num_states));
        for hh in 0..self.horizon {
            for ss in 0..self.num_states {
                actions[[hh, ss]] = (code % self.num_actions as u128) as usize;
                code /= self.num_actions as u128;
            }
        }
        Some(actions)
    }
}

/// `d^all` by exhaustive enumeration of deterministic policies.
pub fn d_all_bruteforce(
    mdp: &MdpCore,
    r1: &RewardTable,
    r2: &RewardTable,
    cap: Option<u128>,
) -> Result<MetricReport> {
    ensure_reward_dims(mdp, r1, "first reward")?;
    ensure_reward_dims(mdp, r2, "second reward")?;
    let (h, s, a) = mdp.dims();
    let iter = DetPolicyIter::new(h, s, a, cap.unwrap_or(DEFAULT_ENUM_CAP))?;
    let mut best = f64::NEG_INFINITY;
    let mut best_witness = None;
    for actions in iter {
        let policy = Policy::deterministic(&actions, a);
        let occ = occupancy(mdp, &policy)?;
        let (value, step) = d_pi_with_occupancy(mdp, &policy, &occ, r1, r2)?;
        if value > best {
            best = value;
            best_witness = Some(MetricWitness {
                step: Some(step),
                policy: Some(actions),
                theta_index: None,
            });
        }
    }
    Ok(MetricReport { value: best, kind: MetricKind::BruteForce, witness: best_witness })
}

/// Upper bound on `d^all`: optimal initial value of the MDP rewarded with
/// `|r1 - r2|`.
pub fn d_all_surrogate(mdp: &MdpCore, r1: &RewardTable, r2: &RewardTable) -> Result<MetricReport> {
    ensure_reward_dims(mdp, r1, "first reward")?;
    ensure_reward_dims(mdp, r2, "second reward")?;
    let gap = RewardTable::new((&r1.values - &r2.values).mapv(f64::abs), r1.bound + r2.bound)?;
    let (policy, tables) = optimal_policy(mdp, &gap)?;
    Ok(MetricReport {
        value: tables.v[[0, mdp.init_state]],
        kind: MetricKind::UpperBound,
        witness: policy.as_action_table().map(|p| MetricWitness {
            policy: Some(p),
            ..Default::default()
        }),
    })
}

/// Mapping metric `D^pi_Theta`: sup over the parameter list of `d^pi`
/// between the two mappings' rewards at the same parameter.
pub fn d_pi_theta(
    mdp: &MdpCore,
    policy: &Policy,
    map1: &RewardMapping,
    map2: &RewardMapping,
    thetas: &[RewardParam],
) -> Result<MetricReport> {
    if thetas.is_empty() {
        return Err(Error::EmptySet("theta list"));
    }
    let occ = occupancy(mdp, policy)?;
    let mut best = f64::NEG_INFINITY;
    let mut witness = MetricWitness::default();
    for (i, theta) in thetas.iter().enumerate() {
        let (value, step) = d_pi_with_occupancy(mdp, policy, &occ, &map1.reward(theta), &map2.reward(theta))?;
        if value > best {
            best = value;
            witness = MetricWitness { step: Some(step), policy: None, theta_index: Some(i) };
        }
    }
    Ok(MetricReport { value: best, kind: MetricKind::Exact, witness: Some(witness) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DAllMode {
    BruteForce,
    Surrogate,
}

/// Mapping metric `D^all_Theta` with the chosen `d^all` backend.
pub fn d_all_theta(
    mdp: &MdpCore,
    map1: &RewardMapping,
    map2: &RewardMapping,
    thetas: &[RewardParam],
    mode: DAllMode,
    cap: Option<u128>,
) -> Result<MetricReport> {
    if thetas.is_empty() {
        return Err(Error::EmptySet("theta list"));
    }
    let mut best = f64::NEG_INFINITY;
    let mut witness = MetricWitness::default();
    let mut kind = MetricKind::Exact;
    for (i, theta) in thetas.iter().enumerate() {
        let r1 = map1.reward(theta);
        let r2 = map2.reward(theta);
        let report = match mode {
            DAllMode::BruteForce => d_all_bruteforce(mdp, &r1, &r2, cap)?,
            DAllMode::Surrogate => d_all_surrogate(mdp, &r1, &r2)?,
        };
        kind = report.kind;
        if report.value > best {
            best = report.value;
            witness = report.witness.unwrap_or_default();
            witness.theta_index = Some(i);
        }
    }
    Ok(MetricReport { value: best, kind, witness: Some(witness) })
}

/// Hausdorff distance between two finite reward sets under base metric
/// `d^pi` with the supplied policy.
pub fn hausdorff(
    mdp: &MdpCore,
    policy: &Policy,
    set1: &[RewardTable],
    set2: &[RewardTable],
) -> Result<MetricReport> {
    if set1.is_empty() || set2.is_empty() {
        return Err(Error::EmptySet("reward set"));
    }
    let occ = occupancy(mdp, policy)?;
    let directed = |from: &[RewardTable], to: &[RewardTable]| -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for r in from {
            let mut nearest = f64::INFINITY;
            for rp in to {
                let (value, _) = d_pi_with_occupancy(mdp, policy, &occ, r, rp)?;
                nearest = nearest.min(value);
            }
            worst = worst.max(nearest);
        }
        Ok(worst)
    };
    let value = directed(set1, set2)?.max(directed(set2, set1)?);
    Ok(MetricReport { value, kind: MetricKind::Exact, witness: None })
}

/// Unnormalized concentrability sum
/// `sum_{h,s,a} d^eval_h(s,a) / d^b_h(s,a)` with `0/0 = 0` and
/// `x/0 = +inf` for `x > 0`.
pub fn concentrability_sum(mdp: &MdpCore, pi_eval: &Policy, pi_b: &Policy) -> Result<f64> {
    let d_eval = occupancy(mdp, pi_eval)?.state_action;
    let d_b = occupancy(mdp, pi_b)?.state_action;
    let mut sum = 0.0;
    for (de, db) in d_eval.iter().zip(d_b.iter()) {
        if *de == 0.0 {
            continue;
        }
        if *db == 0.0 {
            return Ok(f64::INFINITY);
        }
        sum += de / db;
    }
    Ok(sum)
}

/// Average-form single-policy concentrability: the unnormalized sum divided
/// by `H * S`.
pub fn concentrability(mdp: &MdpCore, pi_eval: &Policy, pi_b: &Policy) -> Result<f64> {
    let (h, s, _) = mdp.dims();
    Ok(concentrability_sum(mdp, pi_eval, pi_b)? / (h * s) as f64)
}

fn ensure_same_frame(src: &MdpCore, tgt: &MdpCore) -> Result<()> {
    if src.dims() != tgt.dims() {
        return Err(Error::ShapeMismatch(format!(
            "source dims {:?} differ from target dims {:?}",
            src.dims(),
            tgt.dims()
        )));
    }
    Ok(())
}

/// Weak transferability: worst-case occupancy ratio of the target pair over
/// the source pair, over all `(h, s, a)`; `0/0 = 0`, positive over zero is
/// `+inf`.
pub fn weak_transferability(
    mdp_src: &MdpCore,
    mdp_tgt: &MdpCore,
    pi_src: &Policy,
    pi_tgt: &Policy,
) -> Result<f64> {
    ensure_same_frame(mdp_src, mdp_tgt)?;
    let d_src = occupancy(mdp_src, pi_src)?.state_action;
    let d_tgt = occupancy(mdp_tgt, pi_tgt)?.state_action;
    let mut sup = 0.0f64;
    for (dt, ds) in d_tgt.iter().zip(d_src.iter()) {
        if *dt == 0.0 {
            continue;
        }
        if *ds == 0.0 {
            return Ok(f64::INFINITY);
        }
        sup = sup.max(dt / ds);
    }
    Ok(sup)
}

/// Transferability: infimum of [`weak_transferability`] over deterministic
/// source policies, by enumeration.
pub fn transferability_bruteforce(
    mdp_src: &MdpCore,
    mdp_tgt: &MdpCore,
    pi_tgt: &Policy,
    cap: Option<u128>,
) -> Result<f64> {
    ensure_same_frame(mdp_src, mdp_tgt)?;
    let (h, s, a) = mdp_src.dims();
    let iter = DetPolicyIter::new(h, s, a, cap.unwrap_or(DEFAULT_ENUM_CAP))?;
    let mut best = f64::INFINITY;
    for actions in iter {
        let policy = Policy::deterministic(&actions, a);
        best = best.min(weak_transferability(mdp_src, mdp_tgt, &policy, pi_tgt)?);
    }
    Ok(best)
}
