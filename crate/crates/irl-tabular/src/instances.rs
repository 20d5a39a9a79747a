//! Instance generators: random MDPs with experts, balanced packing sets, and
//! the offline/online hard-instance families.

use ndarray::{Array2, Array3, Array4};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::mdp::{optimal_policy, MdpCore, Policy, RewardTable};
use crate::seed;

/// Random MDP with symmetric-Dirichlet transition rows plus a deterministic
/// expert (the optimal policy of a random bounded reward, hence 1-well-posed).
pub fn random_mdp(
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    seed_value: u64,
    concentration: f64,
) -> Result<(MdpCore, Policy)> {
    if concentration <= 0.0 {
        return Err(Error::InvalidArgument(format!("concentration {concentration} <= 0")));
    }
    let mut rng = seed::rng(seed_value);
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::InvalidArgument(format!("bad concentration: {e}")))?;
    let mut p = Array4::zeros((horizon, num_states, num_actions, num_states));
    for hh in 0..horizon {
        for ss in 0..num_states {
            for aa in 0..num_actions {
                let mut total = 0.0;
                for sp in 0..num_states {
                    let g: f64 = gamma.sample(&mut rng) + 1e-12;
                    p[[hh, ss, aa, sp]] = g;
                    total += g;
                }
                for sp in 0..num_states {
                    p[[hh, ss, aa, sp]] /= total;
                }
            }
        }
    }
    let mdp = MdpCore::new(horizon, num_states, num_actions, p, 0)?;
    let mut values = Array3::zeros((horizon, num_states, num_actions));
    values.mapv_inplace(|_| rng.random::<f64>() * 2.0 - 1.0);
    let reward = RewardTable::new(values, 1.0)?;
    let (expert, _) = optimal_policy(&mdp, &reward)?;
    Ok((mdp, expert))
}

/// Random full-support stochastic policy (test fixture).
pub fn random_stochastic_policy(
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    seed_value: u64,
) -> Policy {
    let mut rng = seed::rng(seed_value);
    let mut probs = Array3::zeros((horizon, num_states, num_actions));
    for hh in 0..horizon {
        for ss in 0..num_states {
            let mut total = 0.0;
            for aa in 0..num_actions {
                let w = rng.random::<f64>() + 1e-6;
                probs[[hh, ss, aa]] = w;
                total += w;
            }
            for aa in 0..num_actions {
                probs[[hh, ss, aa]] /= total;
            }
        }
    }
    Policy { probs }
}

/// Random deterministic policy (test fixture).
pub fn random_deterministic_policy(
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    seed_value: u64,
) -> Array2<usize> {
    let mut rng = seed::rng(seed_value);
    let mut actions = Array2::zeros((horizon, num_states));
    actions.mapv_inplace(|_| rng.random_range(0..num_actions));
    actions
}

/// Balanced sign vectors with pairwise squared distance at least `S / 8`.
#[derive(Debug, Clone)]
pub struct PackingSet {
    pub members: Vec<Vec<i8>>,
}

impl PackingSet {
    /// Exhaustive audit of the balance and pairwise-distance invariants.
    pub fn validate(&self, num_coords: usize) -> Result<()> {
        for (i, w) in self.members.iter().enumerate() {
            if w.len() != num_coords {
                return Err(Error::ShapeMismatch(format!(
                    "member {i} has {} coordinates, expected {num_coords}",
                    w.len()
                )));
            }
            let sum: i64 = w.iter().map(|&x| x as i64).sum();
            if sum != 0 || w.iter().any(|&x| x != 1 && x != -1) {
                return Err(Error::InvalidArgument(format!("member {i} is not a balanced sign vector")));
            }
        }
        let floor = num_coords as f64 / 8.0;
        for i in 0..self.members.len() {
            for j in (i + 1)..self.members.len() {
                let d = pair_sq_distance(&self.members[i], &self.members[j]);
                if d < floor {
                    return Err(Error::InvalidArgument(format!(
                        "members {i},{j} at squared distance {d} < {floor}"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn pair_sq_distance(w: &[i8], v: &[i8]) -> f64 {
    w.iter().zip(v).map(|(&a, &b)| ((a - b) as f64).powi(2)).sum()
}

/// Rejection-samples balanced sign vectors keeping pairwise squared distance
/// at least `S / 8`. May return fewer than `count` members when the try
/// budget runs out; the caller inspects the length.
pub fn packing_set(num_coords: usize, count: usize, seed_value: u64, max_tries: usize) -> Result<PackingSet> {
    if num_coords < 8 || num_coords % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "packing needs even S >= 8, got {num_coords}"
        )));
    }
    let mut rng = seed::rng(seed_value);
    let mut template: Vec<i8> = vec![1; num_coords / 2];
    template.extend(std::iter::repeat(-1).take(num_coords / 2));
    let floor = num_coords as f64 / 8.0;
    let mut members: Vec<Vec<i8>> = Vec::with_capacity(count);
    let mut tries = 0;
    while members.len() < count && tries < max_tries {
        tries += 1;
        let mut cand = template.clone();
        cand.shuffle(&mut rng);
        if members.iter().all(|m| pair_sq_distance(m, &cand) >= floor) {
            members.push(cand);
        }
    }
    Ok(PackingSet { members })
}

/// Parameters of the 2S+1-state, A+1-action, 2H+2-stage hard instances.
///
/// `perturbations` has shape `(H, K, A, S)` with `K = min(S, A)`; each
/// `(h, i, k)` slice is a balanced sign vector over the absorbing states.
#[derive(Debug, Clone)]
pub struct HardInstanceSpec {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub eps_prime: f64,
    pub c_star: f64,
    /// Distinguished branch index in `0..K`.
    pub branch_index: usize,
    pub perturbations: Array4<f64>,
}

impl HardInstanceSpec {
    pub fn branch_count(&self) -> usize {
        self.num_states.min(self.num_actions)
    }

    /// Samples the perturbation tensor from balanced sign vectors.
    pub fn random(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        eps_prime: f64,
        c_star: f64,
        branch_index: usize,
        seed_value: u64,
    ) -> Result<Self> {
        let k = num_states.min(num_actions);
        if num_states % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "hard instance needs even S for balanced perturbations, got {num_states}"
            )));
        }
        let mut rng = seed::rng(seed_value);
        let mut template: Vec<i8> = vec![1; num_states / 2];
        template.extend(std::iter::repeat(-1).take(num_states / 2));
        let mut w = Array4::zeros((horizon, k, num_actions, num_states));
        for hh in 0..horizon {
            for ii in 0..k {
                for kk in 0..num_actions {
                    let mut slice = template.clone();
                    slice.shuffle(&mut rng);
                    for (jj, &x) in slice.iter().enumerate() {
                        w[[hh, ii, kk, jj]] = x as f64;
                    }
                }
            }
        }
        let spec = Self {
            horizon,
            num_states,
            num_actions,
            eps_prime,
            c_star,
            branch_index,
            perturbations: w,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_prime > 0.0 && self.eps_prime <= 0.5) {
            return Err(Error::InvalidArgument(format!(
                "eps_prime {} outside (0, 1/2]",
                self.eps_prime
            )));
        }
        if self.c_star < 2.0 {
            return Err(Error::InvalidArgument(format!("c_star {} < 2", self.c_star)));
        }
        let k = self.branch_count();
        if self.branch_index >= k {
            return Err(Error::InvalidArgument(format!(
                "branch index {} out of range 0..{k}",
                self.branch_index
            )));
        }
        if self.perturbations.dim() != (self.horizon, k, self.num_actions, self.num_states) {
            return Err(Error::ShapeMismatch(format!(
                "perturbation tensor is {:?}, expected {:?}",
                self.perturbations.dim(),
                (self.horizon, k, self.num_actions, self.num_states)
            )));
        }
        for hh in 0..self.horizon {
            for ii in 0..k {
                for kk in 0..self.num_actions {
                    let mut sum = 0.0;
                    for jj in 0..self.num_states {
                        let x = self.perturbations[[hh, ii, kk, jj]];
                        if x != 1.0 && x != -1.0 {
                            return Err(Error::InvalidArgument(format!(
                                "perturbation entry {x} at ({hh},{ii},{kk},{jj}) is not +-1"
                            )));
                        }
                        sum += x;
                    }
                    if sum != 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "perturbation slice ({hh},{ii},{kk}) sums to {sum}, expected 0"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

// State layout of the hard instances: index 0 is the start state, 1..=S the
// branch states, S+1..=2S the absorbing states. Action 0 is the expert's
// neutral action; actions 1..=A carry the perturbations.
//
// Stage layout (0-based, 2H+2 stages total). The source construction
// overlaps its stage groups at H+1; we resolve the overlap by giving stage
// H+1 (1-based) to the perturbed group, since the perturbation slice at
// index H is consumed exactly there:
//   t = 0          start: a_0 self-loop, a_i -> branch i, high actions uniform;
//   t in 1..=H     same start rows; branch rows spread to absorbing states,
//                  action k in 1..=A perturbed by slice t-1, action 0 uniform;
//   t in H+1..     start: a_0 uniform over branches; branch rows uniform.
// Absorbing states self-loop everywhere.
fn hard_mdp(spec: &HardInstanceSpec) -> Result<MdpCore> {
    spec.validate()?;
    let (hb, sb, ab) = (spec.horizon, spec.num_states, spec.num_actions);
    let k = spec.branch_count();
    let stages = 2 * hb + 2;
    let states = 2 * sb + 1;
    let actions = ab + 1;
    let start = 0usize;
    let branch = |i: usize| 1 + i; // i in 0..sb
    let absorbing = |j: usize| 1 + sb + j; // j in 0..sb

    let mut p = Array4::zeros((stages, states, actions, states));
    let unit = 1.0 / sb as f64;
    for t in 0..stages {
        let perturbed_stage = (1..=hb).contains(&t);
        let late_stage = t > hb;

        // start state
        if late_stage {
            for j in 0..sb {
                p[[t, start, 0, branch(j)]] = unit;
            }
        } else {
            p[[t, start, 0, start]] = 1.0;
        }
        for i in 0..k {
            p[[t, start, 1 + i, branch(i)]] = 1.0;
        }
        for kk in k..ab {
            for j in 0..sb {
                p[[t, start, 1 + kk, branch(j)]] = unit;
            }
        }

        // branch states
        for i in 0..sb {
            for act in 0..actions {
                let w_slice = if perturbed_stage && i < k && act >= 1 {
                    Some((t - 1, i, act - 1))
                } else {
                    None
                };
                for j in 0..sb {
                    let mass = match w_slice {
                        Some((wh, wi, wk)) => {
                            (1.0 + spec.eps_prime * spec.perturbations[[wh, wi, wk, j]]) * unit
                        }
                        None => unit,
                    };
                    p[[t, branch(i), act, absorbing(j)]] = mass;
                }
            }
        }

        // absorbing states
        for j in 0..sb {
            for act in 0..actions {
                p[[t, absorbing(j), act, absorbing(j)]] = 1.0;
            }
        }
    }

    // Repair sub-1e-15 float drift from non-dyadic eps_prime.
    for t in 0..stages {
        for ss in 0..states {
            for act in 0..actions {
                let sum: f64 = p.slice(ndarray::s![t, ss, act, ..]).sum();
                if sum != 1.0 {
                    for sp in 0..states {
                        p[[t, ss, act, sp]] /= sum;
                    }
                }
            }
        }
    }

    MdpCore::new(stages, states, actions, p, start)
}

fn all_action_zero(stages: usize, states: usize, actions: usize) -> Array2<usize> {
    let _ = actions;
    Array2::zeros((stages, states))
}

/// Online hard instance: the perturbed family plus its action-0 expert.
pub fn hard_online(spec: &HardInstanceSpec) -> Result<(MdpCore, Policy)> {
    let mdp = hard_mdp(spec)?;
    let expert = Policy::deterministic(
        &all_action_zero(mdp.horizon, mdp.num_states, mdp.num_actions),
        mdp.num_actions,
    );
    Ok((mdp, expert))
}

/// Offline hard instance: the perturbed family plus expert, behavior, and
/// evaluation policies. The behavior policy spreads over the branch arms and
/// places mass `1/C*` on the distinguished arm's probe action; the
/// evaluation policy commits to that arm.
pub fn hard_offline(spec: &HardInstanceSpec) -> Result<(MdpCore, Policy, Policy, Policy)> {
    let mdp = hard_mdp(spec)?;
    let expert = Policy::deterministic(
        &all_action_zero(mdp.horizon, mdp.num_states, mdp.num_actions),
        mdp.num_actions,
    );
    let (hb, sb) = (spec.horizon, spec.num_states);
    let k = spec.branch_count();
    let istar = spec.branch_index;
    let start = 0usize;
    let branch = |i: usize| 1 + i;
    let _ = sb;

    // default everything to action 0, then override the two decision stages
    let mut behavior = expert.clone();
    let mut eval = expert.clone();

    // stage H (1-based) = index hb-1: leave the start state
    if hb >= 1 {
        let t = hb - 1;
        for aa in 0..mdp.num_actions {
            behavior.probs[[t, start, aa]] = 0.0;
            eval.probs[[t, start, aa]] = 0.0;
        }
        for i in 0..k {
            behavior.probs[[t, start, 1 + i]] = 1.0 / k as f64;
        }
        eval.probs[[t, start, 1 + istar]] = 1.0;
    }

    // stage H+1 (1-based) = index hb: probe from the branch states
    {
        let t = hb;
        let s_star = branch(istar);
        for aa in 0..mdp.num_actions {
            behavior.probs[[t, s_star, aa]] = 0.0;
            eval.probs[[t, s_star, aa]] = 0.0;
        }
        behavior.probs[[t, s_star, 0]] = 1.0 - 1.0 / spec.c_star;
        behavior.probs[[t, s_star, 1]] = 1.0 / spec.c_star;
        eval.probs[[t, s_star, 1]] = 1.0;
    }

    behavior.validate()?;
    eval.validate()?;
    Ok((mdp, expert, behavior, eval))
}
