//! Tabular episodic MDP without reward: validation, exact dynamic
//! programming, occupancy measures, optimal-policy oracles, and trajectory
//! sampling.
//!
//! Steps are indexed `0..H-1` internally (the classic `1..H` shifted down by
//! one). Terminal values are fixed to zero: every recursion that reads
//! `V[H]` reads an all-zero row.

use ndarray::{Array2, Array3, Array4, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

/// Row-sum / probability tolerance for validation.
pub const PROB_TOL: f64 = 1e-9;
/// Tolerance for exact-DP value identities.
pub const VALUE_TOL: f64 = 1e-9;

/// Episodic MDP without reward: sizes, transition tensor, fixed initial state.
#[derive(Debug, Clone)]
pub struct MdpCore {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    /// Transition tensor of shape `(H, S, A, S)`.
    pub transitions: Array4<f64>,
    pub init_state: usize,
}

impl MdpCore {
    pub fn new(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        transitions: Array4<f64>,
        init_state: usize,
    ) -> Result<Self> {
        let mdp = Self { horizon, num_states, num_actions, transitions, init_state };
        validate_mdp(&mdp)?;
        Ok(mdp)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.horizon, self.num_states, self.num_actions)
    }

    /// Transition row `P[h][s][a][.]`.
    pub fn row(&self, h: usize, s: usize, a: usize) -> ArrayView1<'_, f64> {
        self.transitions.slice(ndarray::s![h, s, a, ..])
    }
}

/// Checks all [`MdpCore`] invariants, reporting the first violated row.
pub fn validate_mdp(mdp: &MdpCore) -> Result<()> {
    let (h, s, a) = mdp.dims();
    if h == 0 || s == 0 || a == 0 {
        return Err(Error::InvalidMdp(format!("empty dimensions (H,S,A)=({h},{s},{a})")));
    }
    if mdp.transitions.dim() != (h, s, a, s) {
        return Err(Error::ShapeMismatch(format!(
            "transition tensor is {:?}, expected {:?}",
            mdp.transitions.dim(),
            (h, s, a, s)
        )));
    }
    if mdp.init_state >= s {
        return Err(Error::InvalidMdp(format!(
            "initial state {} out of range 0..{}",
            mdp.init_state, s
        )));
    }
    for hh in 0..h {
        for ss in 0..s {
            for aa in 0..a {
                let row = mdp.row(hh, ss, aa);
                let mut sum = 0.0;
                for (sp, &p) in row.iter().enumerate() {
                    if p < 0.0 {
                        return Err(Error::InvalidMdp(format!(
                            "negative probability {p} at P[{hh}][{ss}][{aa}][{sp}]"
                        )));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::InvalidMdp(format!(
                        "row P[{hh}][{ss}][{aa}] sums to {sum}, expected 1 within {PROB_TOL}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Per-step state-conditional action distributions, shape `(H, S, A)`.
///
/// A deterministic policy has exactly one entry equal to 1 per `(h, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub probs: Array3<f64>,
}

impl Policy {
    pub fn new(probs: Array3<f64>) -> Result<Self> {
        let policy = Self { probs };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, s, _a) = self.probs.dim();
        for hh in 0..h {
            for ss in 0..s {
                let row = self.probs.slice(ndarray::s![hh, ss, ..]);
                let mut sum = 0.0;
                for &p in row.iter() {
                    if p < 0.0 {
                        return Err(Error::InvalidPolicy(format!(
                            "negative probability {p} at pi[{hh}][{ss}]"
                        )));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::InvalidPolicy(format!(
                        "row pi[{hh}][{ss}] sums to {sum}, expected 1 within {PROB_TOL}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.probs.dim()
    }

    /// Uniform policy over all actions.
    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self { probs: Array3::from_elem((horizon, num_states, num_actions), 1.0 / num_actions as f64) }
    }

    /// Deterministic policy from an `(H, S)` action table.
    pub fn deterministic(actions: &Array2<usize>, num_actions: usize) -> Self {
        let (h, s) = actions.dim();
        let mut probs = Array3::zeros((h, s, num_actions));
        for hh in 0..h {
            for ss in 0..s {
                probs[[hh, ss, actions[[hh, ss]]]] = 1.0;
            }
        }
        Self { probs }
    }

    /// Action table if this policy is deterministic (one entry exactly 1 per row).
    pub fn as_action_table(&self) -> Option<Array2<usize>> {
        let (h, s, a) = self.probs.dim();
        let mut out = Array2::zeros((h, s));
        for hh in 0..h {
            for ss in 0..s {
                let mut hit = None;
                for aa in 0..a {
                    let p = self.probs[[hh, ss, aa]];
                    if p == 1.0 {
                        hit = Some(aa);
                    } else if p != 0.0 {
                        return None;
                    }
                }
                out[[hh, ss]] = hit?;
            }
        }
        Some(out)
    }

    pub fn is_deterministic(&self) -> bool {
        self.as_action_table().is_some()
    }

    /// Statewise convex mix `w * self + (1 - w) * other`.
    pub fn mix(&self, other: &Policy, w: f64) -> Policy {
        Policy { probs: &self.probs * w + &other.probs * (1.0 - w) }
    }

    pub fn sample_action<R: Rng>(&self, h: usize, s: usize, rng: &mut R) -> usize {
        sample_index(self.probs.slice(ndarray::s![h, s, ..]), rng)
    }

    /// Minimum nonzero action probability (well-posedness Delta).
    pub fn min_nonzero_prob(&self) -> f64 {
        self.probs.iter().copied().filter(|&p| p > 0.0).fold(f64::INFINITY, f64::min)
    }
}

/// A reward function `r_h(s, a)` as a dense `(H, S, A)` array with a declared
/// sup-norm bound.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    pub values: Array3<f64>,
    pub bound: f64,
}

impl RewardTable {
    pub fn new(values: Array3<f64>, bound: f64) -> Result<Self> {
        if bound < 0.0 {
            return Err(Error::InvalidArgument(format!("reward bound {bound} < 0")));
        }
        if let Some(v) = values.iter().find(|v| v.abs() > bound) {
            return Err(Error::InvalidArgument(format!(
                "reward entry {v} exceeds declared bound {bound}"
            )));
        }
        Ok(Self { values, bound })
    }

    pub fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self { values: Array3::zeros((horizon, num_states, num_actions)), bound: 0.0 }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.values.dim()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Exact DP values of a policy: `V` of shape `(H+1, S)` with `V[H] = 0`,
/// `Q` and the advantage `Q - V` of shape `(H, S, A)`.
#[derive(Debug, Clone)]
pub struct ValueTables {
    pub v: Array2<f64>,
    pub q: Array3<f64>,
    pub advantage: Array3<f64>,
}

impl ValueTables {
    /// Largest advantage over all `(h, s, a)`.
    pub fn max_advantage(&self) -> f64 {
        self.advantage.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Visitation distributions of a policy: `d_sa` of shape `(H, S, A)` and the
/// state marginal `d_s` of shape `(H, S)`.
#[derive(Debug, Clone)]
pub struct Occupancy {
    pub state_action: Array3<f64>,
    pub state: Array2<f64>,
}

fn ensure_dims(mdp: &MdpCore, got: (usize, usize, usize), what: &str) -> Result<()> {
    if got != mdp.dims() {
        return Err(Error::ShapeMismatch(format!(
            "{what} has shape {:?}, mdp expects {:?}",
            got,
            mdp.dims()
        )));
    }
    Ok(())
}

/// Backward recursion `Q_h = r_h + P_h V_{h+1}`, `V_h = <pi_h, Q_h>`.
pub fn evaluate_policy(mdp: &MdpCore, reward: &RewardTable, policy: &Policy) -> Result<ValueTables> {
    ensure_dims(mdp, reward.dims(), "reward")?;
    ensure_dims(mdp, policy.dims(), "policy")?;
    let (h, s, a) = mdp.dims();
    let mut v = Array2::zeros((h + 1, s));
    let mut q = Array3::zeros((h, s, a));
    let mut advantage = Array3::zeros((h, s, a));
    for hh in (0..h).rev() {
        for ss in 0..s {
            let mut v_sum = 0.0;
            for aa in 0..a {
                let mut expected = 0.0;
                for sp in 0..s {
                    expected += mdp.transitions[[hh, ss, aa, sp]] * v[[hh + 1, sp]];
                }
                let q_val = reward.values[[hh, ss, aa]] + expected;
                q[[hh, ss, aa]] = q_val;
                v_sum += policy.probs[[hh, ss, aa]] * q_val;
            }
            v[[hh, ss]] = v_sum;
            for aa in 0..a {
                advantage[[hh, ss, aa]] = q[[hh, ss, aa]] - v_sum;
            }
        }
    }
    Ok(ValueTables { v, q, advantage })
}

/// Forward recursion `d_0(s) = 1{s = s_init}`,
/// `d_{h+1}(s') = sum_{s,a} d_h(s, a) P_h(s'|s, a)`.
pub fn occupancy(mdp: &MdpCore, policy: &Policy) -> Result<Occupancy> {
    ensure_dims(mdp, policy.dims(), "policy")?;
    let (h, s, a) = mdp.dims();
    let mut state = Array2::zeros((h, s));
    let mut state_action = Array3::zeros((h, s, a));
    state[[0, mdp.init_state]] = 1.0;
    for hh in 0..h {
        for ss in 0..s {
            let ds = state[[hh, ss]];
            if ds == 0.0 {
                continue;
            }
            for aa in 0..a {
                state_action[[hh, ss, aa]] = ds * policy.probs[[hh, ss, aa]];
            }
        }
        if hh + 1 < h {
            for ss in 0..s {
                for aa in 0..a {
                    let dsa = state_action[[hh, ss, aa]];
                    if dsa == 0.0 {
                        continue;
                    }
                    for sp in 0..s {
                        state[[hh + 1, sp]] += dsa * mdp.transitions[[hh, ss, aa, sp]];
                    }
                }
            }
        }
    }
    Ok(Occupancy { state_action, state })
}

/// Greedy action table of backward value iteration; ties break to the lowest
/// action index.
pub fn greedy_actions(mdp: &MdpCore, reward: &RewardTable) -> Result<(Array2<usize>, Array2<f64>)> {
    ensure_dims(mdp, reward.dims(), "reward")?;
    let (h, s, a) = mdp.dims();
    let mut v = Array2::zeros((h + 1, s));
    let mut actions = Array2::zeros((h, s));
    for hh in (0..h).rev() {
        for ss in 0..s {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for aa in 0..a {
                let mut expected = 0.0;
                for sp in 0..s {
                    expected += mdp.transitions[[hh, ss, aa, sp]] * v[[hh + 1, sp]];
                }
                let q_val = reward.values[[hh, ss, aa]] + expected;
                if q_val > best {
                    best = q_val;
                    best_a = aa;
                }
            }
            v[[hh, ss]] = best;
            actions[[hh, ss]] = best_a;
        }
    }
    Ok((actions, v))
}

/// Backward value iteration with argmax. The returned policy is
/// deterministic and its value tables are the Bellman-optimal ones.
pub fn optimal_policy(mdp: &MdpCore, reward: &RewardTable) -> Result<(Policy, ValueTables)> {
    let (actions, _) = greedy_actions(mdp, reward)?;
    let policy = Policy::deterministic(&actions, mdp.num_actions);
    let tables = evaluate_policy(mdp, reward, &policy)?;
    Ok((policy, tables))
}

/// True iff `max_{h,s,a} A^pi_h(s, a; r) <= tol` — optimality at every
/// `(h, s, a)`, including states the policy never visits.
pub fn is_optimal(mdp: &MdpCore, reward: &RewardTable, policy: &Policy, tol: f64) -> Result<bool> {
    let tables = evaluate_policy(mdp, reward, policy)?;
    Ok(tables.max_advantage() <= tol)
}

/// One step of a sampled trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub step: usize,
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
}

/// Samples a length-`H` trajectory; a pure function of the seed.
pub fn sample_episode(mdp: &MdpCore, policy: &Policy, seed_value: u64) -> Vec<Transition> {
    let mut rng = seed::rng(seed_value);
    sample_episode_with_rng(mdp, policy, &mut rng)
}

pub fn sample_episode_with_rng<R: Rng>(mdp: &MdpCore, policy: &Policy, rng: &mut R) -> Vec<Transition> {
    let (h, _s, _a) = mdp.dims();
    let mut out = Vec::with_capacity(h);
    let mut state = mdp.init_state;
    for hh in 0..h {
        let action = policy.sample_action(hh, state, rng);
        let next_state = sample_index(mdp.row(hh, state, action), rng);
        out.push(Transition { step: hh, state, action, next_state });
        state = next_state;
    }
    out
}

/// Inverse-CDF draw from a probability row. A point mass is hit regardless
/// of the uniform draw, so deterministic rows never depend on the RNG value.
pub fn sample_index<R: Rng>(weights: ArrayView1<'_, f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            cum += w;
            last_positive = i;
            if u < cum {
                return i;
            }
        }
    }
    last_positive
}
