//! Reward-free exploration: occupancy estimation through truncated empirical
//! kernels, Frank-Wolfe over policy mixtures on augmented absorbing-state
//! MDPs, and the coverage certificate.
//!
//! The per-stage solver covers one stage's occupancy; the final solver
//! covers all stages jointly. Both maximize a log-barrier objective
//! `sum log(1/(KH) + E_mu[d_hat(s,a)])` by repeatedly planning in an
//! augmented MDP whose reward is the inverse smoothed mixture occupancy, and
//! stop once the coverage functional `g` of the best response drops to twice
//! the cell count.

use ndarray::{Array1, Array2, Array3, Array4};
use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{greedy_actions, sample_episode_with_rng, MdpCore, Policy, RewardTable};
use crate::seed;

/// Truncation threshold `xi = c_xi * H^3 S^3 A^3 * log(10 HSA / delta)`.
///
/// The literal constant (`paper_faithful`) makes the threshold astronomically
/// conservative at desk scale, truncating everything; the default scales it
/// down by `c_xi = 1e-6` and is exercised both ways in tests.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct XiConfig {
    pub c_xi: f64,
    pub paper_faithful: bool,
}

impl Default for XiConfig {
    fn default() -> Self {
        Self { c_xi: 1e-6, paper_faithful: false }
    }
}

impl XiConfig {
    pub fn threshold(&self, horizon: usize, num_states: usize, num_actions: usize, delta: f64) -> f64 {
        let scale = if self.paper_faithful { 1.0 } else { self.c_xi };
        let (h, s, a) = (horizon as f64, num_states as f64, num_actions as f64);
        scale * h.powi(3) * s.powi(3) * a.powi(3) * (10.0 * h * s * a / delta).ln()
    }
}

/// Estimated occupancy machinery: empirical initial distribution plus
/// truncated per-stage kernels (rows zeroed at cells with at most `xi`
/// visits, so estimated occupancies may leak mass).
#[derive(Debug, Clone)]
pub struct OccupancyOracle {
    pub initial_hat: Array1<f64>,
    pub transitions_trunc: Array4<f64>,
    pub xi: f64,
    pub samples_per_stage: usize,
}

impl OccupancyOracle {
    pub fn dims(&self) -> (usize, usize, usize) {
        let (h, s, a, _) = self.transitions_trunc.dim();
        (h, s, a)
    }

    /// Oracle backed by the exact kernels (no truncation, exact initial
    /// distribution); estimated occupancies then coincide with true ones.
    pub fn exact(mdp: &MdpCore) -> Self {
        let mut initial_hat = Array1::zeros(mdp.num_states);
        initial_hat[mdp.init_state] = 1.0;
        Self {
            initial_hat,
            transitions_trunc: mdp.transitions.clone(),
            xi: 0.0,
            samples_per_stage: 0,
        }
    }

    /// Fraction of `(s, a)` cells whose row is all-zero, per stage.
    pub fn truncation_fractions(&self) -> Vec<f64> {
        let (h, s, a) = self.dims();
        (0..h)
            .map(|hh| {
                let mut dead = 0usize;
                for ss in 0..s {
                    for aa in 0..a {
                        if self
                            .transitions_trunc
                            .slice(ndarray::s![hh, ss, aa, ..])
                            .iter()
                            .all(|&p| p == 0.0)
                        {
                            dead += 1;
                        }
                    }
                }
                dead as f64 / (s * a) as f64
            })
            .collect()
    }
}

/// Estimated state-action occupancy of a policy through the truncated
/// kernels; forward recursion from the empirical initial distribution.
pub fn occupancy_hat(oracle: &OccupancyOracle, policy: &Policy) -> Array3<f64> {
    let (h, s, a) = oracle.dims();
    let mut state = oracle.initial_hat.clone();
    let mut out = Array3::zeros((h, s, a));
    for hh in 0..h {
        for ss in 0..s {
            let ds = state[ss];
            if ds == 0.0 {
                continue;
            }
            for aa in 0..a {
                out[[hh, ss, aa]] = ds * policy.probs[[hh, ss, aa]];
            }
        }
        if hh + 1 < h {
            let mut next = Array1::zeros(s);
            for ss in 0..s {
                for aa in 0..a {
                    let dsa = out[[hh, ss, aa]];
                    if dsa == 0.0 {
                        continue;
                    }
                    for sp in 0..s {
                        next[sp] += dsa * oracle.transitions_trunc[[hh, ss, aa, sp]];
                    }
                }
            }
            state = next;
        }
    }
    out
}

/// Mixture of deterministic policies over the original state space.
#[derive(Debug, Clone)]
pub struct PolicyMixture {
    /// Deterministic atoms as `(H, S)` action tables.
    pub atoms: Vec<Array2<usize>>,
    pub weights: Vec<f64>,
}

impl PolicyMixture {
    pub fn singleton(actions: Array2<usize>) -> Self {
        Self { atoms: vec![actions], weights: vec![1.0] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() || self.atoms.len() != self.weights.len() {
            return Err(Error::InvalidArgument("mixture atoms/weights length mismatch".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 || self.weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}")));
        }
        Ok(())
    }

    pub fn atom_policy(&self, index: usize, num_actions: usize) -> Policy {
        Policy::deterministic(&self.atoms[index], num_actions)
    }

    /// Samples an atom index by weight.
    pub fn sample_atom<R: Rng>(&self, rng: &mut R) -> usize {
        let view = Array1::from_vec(self.weights.clone());
        crate::mdp::sample_index(view.view(), rng)
    }

    /// Statewise average policy `E_{pi ~ mu}[pi]` (reference object; data
    /// collection samples an atom per episode instead, which realizes the
    /// mixture occupancy `E_mu[d^pi]`).
    pub fn average_policy(&self, num_actions: usize) -> Policy {
        let (h, s) = self.atoms[0].dim();
        let mut probs = Array3::zeros((h, s, num_actions));
        for (atom, &w) in self.atoms.iter().zip(&self.weights) {
            for hh in 0..h {
                for ss in 0..s {
                    probs[[hh, ss, atom[[hh, ss]]]] += w;
                }
            }
        }
        Policy { probs }
    }

    fn push(&mut self, actions: Array2<usize>, alpha: f64) {
        for w in &mut self.weights {
            *w *= 1.0 - alpha;
        }
        if let Some(i) = self.atoms.iter().position(|a| a == &actions) {
            self.weights[i] += alpha;
        } else {
            self.atoms.push(actions);
            self.weights.push(alpha);
        }
    }
}

/// Mixture occupancy `E_{pi ~ mu}[d_hat^pi]`: the weighted sum of atom
/// occupancies (estimation is linear in the policy mixture).
pub fn occupancy_hat_mixture(oracle: &OccupancyOracle, mixture: &PolicyMixture) -> Array3<f64> {
    let (_, _, a) = oracle.dims();
    let mut acc: Option<Array3<f64>> = None;
    for (atom, &w) in mixture.atoms.iter().zip(&mixture.weights) {
        let occ = occupancy_hat(oracle, &Policy::deterministic(atom, a));
        acc = Some(match acc {
            None => occ * w,
            Some(mut total) => {
                total.scaled_add(w, &occ);
                total
            }
        });
    }
    acc.expect("mixture has at least one atom")
}

/// Frank-Wolfe target: cover one stage's occupancy, or all stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FwMode {
    PerStage(usize),
    Final,
}

impl FwMode {
    fn cell_count(self, dims: (usize, usize, usize)) -> f64 {
        let (h, s, a) = dims;
        match self {
            FwMode::PerStage(_) => (s * a) as f64,
            FwMode::Final => (h * s * a) as f64,
        }
    }

    fn stages(self, horizon: usize) -> std::ops::Range<usize> {
        match self {
            FwMode::PerStage(t) => t..t + 1,
            FwMode::Final => 0..horizon,
        }
    }
}

/// Coverage functional
/// `g(pi, mu) = sum_cells (1/(KH) + d_hat^pi) / (1/(KH) + E_mu[d_hat])`
/// over the mode's cells.
fn g_value(
    oracle: &OccupancyOracle,
    k_main: usize,
    mode: FwMode,
    policy_occ: &Array3<f64>,
    mix_occ: &Array3<f64>,
) -> f64 {
    let (h, s, a) = oracle.dims();
    let c0 = 1.0 / (k_main * h) as f64;
    let mut total = 0.0;
    for hh in mode.stages(h) {
        for ss in 0..s {
            for aa in 0..a {
                total += (c0 + policy_occ[[hh, ss, aa]]) / (c0 + mix_occ[[hh, ss, aa]]);
            }
        }
    }
    total
}

/// Log-barrier objective over the mode's cells.
fn fw_objective(oracle: &OccupancyOracle, k_main: usize, mode: FwMode, mix_occ: &Array3<f64>) -> f64 {
    let (h, s, a) = oracle.dims();
    let c0 = 1.0 / (k_main * h) as f64;
    let mut total = 0.0;
    for hh in mode.stages(h) {
        for ss in 0..s {
            for aa in 0..a {
                total += (c0 + mix_occ[[hh, ss, aa]]).ln();
            }
        }
    }
    total
}

/// Exact Frank-Wolfe step `alpha = (g / M - 1) / (g - 1)`.
fn fw_step_size(g: f64, cells: f64) -> f64 {
    (g / cells - 1.0) / (g - 1.0)
}

/// Builds the augmented absorbing-state planning problem for a mixture: the
/// extra state swallows the kernels' truncated mass, and real cells of the
/// mode's stages pay `1 / (1/(KH) + E_mu[d_hat])`, in `[0, KH]`.
pub fn build_augmented(
    oracle: &OccupancyOracle,
    mode: FwMode,
    mixture: &PolicyMixture,
    k_main: usize,
) -> Result<(MdpCore, RewardTable)> {
    let mix_occ = occupancy_hat_mixture(oracle, mixture);
    build_augmented_from_occ(oracle, mode, &mix_occ, k_main)
}

fn build_augmented_from_occ(
    oracle: &OccupancyOracle,
    mode: FwMode,
    mix_occ: &Array3<f64>,
    k_main: usize,
) -> Result<(MdpCore, RewardTable)> {
    let (h, s, a) = oracle.dims();
    if k_main == 0 {
        return Err(Error::InvalidArgument("main episode budget K must be >= 1".into()));
    }
    if let FwMode::PerStage(t) = mode {
        if t >= h {
            return Err(Error::InvalidArgument(format!("stage {t} out of range 0..{h}")));
        }
    }
    let aug = s; // absorbing state index
    let mut p = Array4::zeros((h, s + 1, a, s + 1));
    let live_through = match mode {
        FwMode::PerStage(t) => t,
        FwMode::Final => h - 1,
    };
    for hh in 0..h {
        for ss in 0..s {
            for aa in 0..a {
                if hh <= live_through {
                    let mut mass = 0.0;
                    for sp in 0..s {
                        let q = oracle.transitions_trunc[[hh, ss, aa, sp]];
                        p[[hh, ss, aa, sp]] = q;
                        mass += q;
                    }
                    p[[hh, ss, aa, aug]] = (1.0 - mass).max(0.0);
                } else {
                    p[[hh, ss, aa, aug]] = 1.0;
                }
            }
        }
        for aa in 0..a {
            p[[hh, aug, aa, aug]] = 1.0;
        }
    }
    let c0 = 1.0 / (k_main * h) as f64;
    let cap = (k_main * h) as f64;
    let mut r = Array3::zeros((h, s + 1, a));
    for hh in mode.stages(h) {
        for ss in 0..s {
            for aa in 0..a {
                r[[hh, ss, aa]] = 1.0 / (c0 + mix_occ[[hh, ss, aa]]);
            }
        }
    }
    let mdp = MdpCore::new(h, s + 1, a, p, oracle_init_state(oracle))?;
    let reward = RewardTable::new(r, cap)?;
    Ok((mdp, reward))
}

fn oracle_init_state(oracle: &OccupancyOracle) -> usize {
    // the planner only needs a valid index; occupancies of the original
    // problem are driven by initial_hat, which is a point mass in this crate
    oracle
        .initial_hat
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// One Frank-Wolfe run.
#[derive(Debug, Clone)]
pub struct FwOutcome {
    pub mixture: PolicyMixture,
    /// True when the `g <= 2M` exit test fired (rather than the iteration cap).
    pub converged: bool,
    pub iterations: usize,
    pub final_g: f64,
    pub objective_trace: Vec<f64>,
}

/// Frank-Wolfe over policy mixtures. The initial atom plays action 0
/// everywhere; each step plans a best response in the augmented MDP, exits
/// once its `g` is at most twice the cell count, and otherwise mixes it in
/// with the exact line-search step.
pub fn fw_solve(oracle: &OccupancyOracle, k_main: usize, mode: FwMode) -> Result<FwOutcome> {
    let (h, s, a) = oracle.dims();
    if k_main == 0 {
        return Err(Error::InvalidArgument("main episode budget K must be >= 1".into()));
    }
    let cells = mode.cell_count((h, s, a));
    let t_max = (50.0 * cells * ((k_main * h) as f64).ln()).floor() as usize;

    let mut mixture = PolicyMixture::singleton(Array2::zeros((h, s)));
    let mut mix_occ = occupancy_hat_mixture(oracle, &mixture);
    let mut trace = vec![fw_objective(oracle, k_main, mode, &mix_occ)];
    let mut final_g = f64::NAN;
    let mut converged = false;
    let mut iterations = 0;

    for t in 0..=t_max {
        iterations = t;
        let (aug_mdp, aug_reward) = build_augmented_from_occ(oracle, mode, &mix_occ, k_main)?;
        let (aug_actions, _) = greedy_actions(&aug_mdp, &aug_reward)?;
        // restrict the planner's table to the original state space
        let best = aug_actions.slice(ndarray::s![.., ..s]).to_owned();
        let best_occ = occupancy_hat(oracle, &Policy::deterministic(&best, a));
        let g = g_value(oracle, k_main, mode, &best_occ, &mix_occ);
        final_g = g;
        if g <= 2.0 * cells {
            converged = true;
            break;
        }
        let alpha = fw_step_size(g, cells);
        mixture.push(best, alpha);
        mix_occ = {
            let mut next = mix_occ;
            next.mapv_inplace(|x| x * (1.0 - alpha));
            next.scaled_add(alpha, &best_occ);
            next
        };
        trace.push(fw_objective(oracle, k_main, mode, &mix_occ));
    }
    Ok(FwOutcome { mixture, converged, iterations, final_g, objective_trace: trace })
}

/// Exploration run summary (serialized as the run's JSON report).
#[derive(Debug, Clone, serde::Serialize)]
pub struct ExploreSummary {
    pub episodes_initial: usize,
    pub episodes_per_stage: Vec<usize>,
    pub per_stage_g: Vec<f64>,
    pub per_stage_converged: Vec<bool>,
    pub final_g: f64,
    pub final_converged: bool,
    pub truncation_fractions: Vec<f64>,
    pub total_episodes: usize,
}

/// Full exploration pipeline: for each stage, per-stage Frank-Wolfe, a batch
/// of `n_per_stage` episodes under the exploration mixture, and a truncated
/// kernel fit; then the final Frank-Wolfe for the behavior mixture.
///
/// The initial draws count as `n_per_stage` length-1 episodes, so the total
/// environment budget is exactly `n_per_stage * H` episode starts.
pub fn explore_run(
    mdp: &MdpCore,
    n_per_stage: usize,
    k_main: usize,
    xi: f64,
    seed_value: u64,
) -> Result<(OccupancyOracle, PolicyMixture, ExploreSummary)> {
    if n_per_stage == 0 {
        return Err(Error::InvalidArgument("exploration budget N must be >= 1".into()));
    }
    let (h, s, a) = mdp.dims();

    // initial draws: N length-1 episodes (the initial state is deterministic)
    let mut initial_hat = Array1::zeros(s);
    for _ in 0..n_per_stage {
        initial_hat[mdp.init_state] += 1.0 / n_per_stage as f64;
    }
    let mut oracle = OccupancyOracle {
        initial_hat,
        transitions_trunc: Array4::zeros((h, s, a, s)),
        xi,
        samples_per_stage: n_per_stage,
    };

    let mut per_stage_g = Vec::new();
    let mut per_stage_converged = Vec::new();
    let mut episodes_per_stage = Vec::new();

    for t in 0..h.saturating_sub(1) {
        let outcome = fw_solve(&oracle, k_main, FwMode::PerStage(t))?;
        per_stage_g.push(outcome.final_g);
        per_stage_converged.push(outcome.converged);

        let mut visit = Array2::<u64>::zeros((s, a));
        let mut succ = Array3::<u64>::zeros((s, a, s));
        for n in 0..n_per_stage {
            let mut rng = seed::derived_rng(seed_value, ((t as u64) << 32) | n as u64);
            let atom = outcome.mixture.sample_atom(&mut rng);
            let policy = outcome.mixture.atom_policy(atom, a);
            let episode = sample_episode_with_rng(mdp, &policy, &mut rng);
            let step = episode[t];
            visit[[step.state, step.action]] += 1;
            succ[[step.state, step.action, step.next_state]] += 1;
        }
        episodes_per_stage.push(n_per_stage);
        for ss in 0..s {
            for aa in 0..a {
                let n = visit[[ss, aa]];
                if (n as f64) > xi {
                    for sp in 0..s {
                        oracle.transitions_trunc[[t, ss, aa, sp]] = succ[[ss, aa, sp]] as f64 / n as f64;
                    }
                }
            }
        }
    }

    let final_outcome = fw_solve(&oracle, k_main, FwMode::Final)?;
    let summary = ExploreSummary {
        episodes_initial: n_per_stage,
        episodes_per_stage,
        per_stage_g,
        per_stage_converged,
        final_g: final_outcome.final_g,
        final_converged: final_outcome.converged,
        truncation_fractions: oracle.truncation_fractions(),
        total_episodes: n_per_stage * h,
    };
    Ok((oracle, final_outcome.mixture, summary))
}

/// Coverage certificate: the maximum of the regularized `g` functional over
/// the sampled deterministic policies. At most `2HSA` whenever the final
/// Frank-Wolfe exited through its `g` test.
pub fn coverage_certificate(
    oracle: &OccupancyOracle,
    mixture: &PolicyMixture,
    sample_policies: &[Array2<usize>],
    k_main: usize,
) -> Result<f64> {
    if sample_policies.is_empty() {
        return Err(Error::EmptySet("certificate policy sample"));
    }
    let (_, _, a) = oracle.dims();
    let mix_occ = occupancy_hat_mixture(oracle, mixture);
    let mut worst = f64::NEG_INFINITY;
    for actions in sample_policies {
        let occ = occupancy_hat(oracle, &Policy::deterministic(actions, a));
        worst = worst.max(g_value(oracle, k_main, FwMode::Final, &occ, &mix_occ));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{random_deterministic_policy, random_mdp, random_stochastic_policy};
    use crate::mdp::occupancy;

    #[test]
    fn exact_oracle_reproduces_true_occupancy() {
        let (mdp, _) = random_mdp(3, 3, 2, 51, 1.0).unwrap();
        let oracle = OccupancyOracle::exact(&mdp);
        let policy = random_stochastic_policy(3, 3, 2, 52);
        let hat = occupancy_hat(&oracle, &policy);
        let exact = occupancy(&mdp, &policy).unwrap().state_action;
        for (a, b) in hat.iter().zip(exact.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_truncated_oracle_dies_after_first_stage() {
        let (mdp, _) = random_mdp(3, 3, 2, 53, 1.0).unwrap();
        let mut oracle = OccupancyOracle::exact(&mdp);
        oracle.transitions_trunc.fill(0.0);
        let policy = random_stochastic_policy(3, 3, 2, 54);
        let hat = occupancy_hat(&oracle, &policy);
        let first: f64 = hat.slice(ndarray::s![0, .., ..]).sum();
        assert!((first - 1.0).abs() < 1e-12);
        assert_eq!(hat.slice(ndarray::s![1.., .., ..]).sum(), 0.0);
        assert_eq!(oracle.truncation_fractions(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn mixture_occupancy_is_linear() {
        let (mdp, _) = random_mdp(3, 3, 2, 55, 1.0).unwrap();
        let oracle = OccupancyOracle::exact(&mdp);
        let a1 = random_deterministic_policy(3, 3, 2, 56);
        let a2 = random_deterministic_policy(3, 3, 2, 57);
        let mixture =
            PolicyMixture { atoms: vec![a1.clone(), a2.clone()], weights: vec![0.5, 0.5] };
        mixture.validate().unwrap();
        let mixed = occupancy_hat_mixture(&oracle, &mixture);
        let o1 = occupancy_hat(&oracle, &Policy::deterministic(&a1, 2));
        let o2 = occupancy_hat(&oracle, &Policy::deterministic(&a2, 2));
        for ((m, x), y) in mixed.iter().zip(o1.iter()).zip(o2.iter()) {
            assert!((m - 0.5 * (x + y)).abs() < 1e-12);
        }
    }

    #[test]
    fn augmented_rows_sum_to_one_and_reward_caps_at_kh() {
        let (mdp, _) = random_mdp(3, 3, 2, 58, 1.0).unwrap();
        let oracle = OccupancyOracle::exact(&mdp);
        let k = 100;
        // zero-occupancy mixture: park everything in a corner by truncating
        let mut dead = oracle.clone();
        dead.transitions_trunc.fill(0.0);
        let mixture = PolicyMixture::singleton(Array2::zeros((3, 3)));
        let (aug, reward) = build_augmented(&dead, FwMode::PerStage(1), &mixture, k).unwrap();
        crate::mdp::validate_mdp(&aug).unwrap();
        // stage-1 real cells pay the cap when the mixture occupancy is zero
        let cap = (k * 3) as f64;
        for ss in 0..3 {
            for aa in 0..2 {
                assert!((reward.values[[1, ss, aa]] - cap).abs() < 1e-9);
            }
        }
        // off-stage and absorbing rewards vanish
        assert_eq!(reward.values[[0, 0, 0]], 0.0);
        assert_eq!(reward.values[[1, 3, 0]], 0.0);

        // exact kernels leave the absorbing state unreachable before the stage
        let (aug, _) = build_augmented(&oracle, FwMode::PerStage(1), &mixture, k).unwrap();
        crate::mdp::validate_mdp(&aug).unwrap();
        for hh in 0..=1 {
            for ss in 0..3 {
                for aa in 0..2 {
                    assert!(aug.transitions[[hh, ss, aa, 3]].abs() < 1e-12);
                }
            }
        }
        // after the stage everything is absorbed
        for ss in 0..4 {
            for aa in 0..2 {
                assert_eq!(aug.transitions[[2, ss, aa, 3]], 1.0);
            }
        }
    }

    #[test]
    fn step_size_formula() {
        assert!((fw_step_size(8.0, 4.0) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn fw_exits_immediately_when_covered() {
        // single action: the initial singleton mixture is every policy, so
        // g = M <= 2M at t = 0 and the loop exits untouched
        let (mdp, _) = random_mdp(2, 2, 1, 59, 1.0).unwrap();
        let oracle = OccupancyOracle::exact(&mdp);
        let outcome = fw_solve(&oracle, 64, FwMode::PerStage(0)).unwrap();
        assert!(outcome.converged);
        assert_eq!(outcome.iterations, 0);
        assert_eq!(outcome.mixture.atoms.len(), 1);
    }

    #[test]
    fn fw_terminates_with_certified_g_on_100_seeds() {
        for i in 0..100u64 {
            let (mdp, _) = random_mdp(2, 2, 2, crate::seed::mix64(8000, i), 1.0).unwrap();
            let oracle = OccupancyOracle::exact(&mdp);
            let outcome = fw_solve(&oracle, 128, FwMode::Final).unwrap();
            assert!(outcome.converged, "seed {i} hit the iteration cap");
            // re-evaluating g on the returned mixture reproduces the exit test
            let mix_occ = occupancy_hat_mixture(&oracle, &outcome.mixture);
            let (aug_mdp, aug_reward) =
                build_augmented_from_occ(&oracle, FwMode::Final, &mix_occ, 128).unwrap();
            let (actions, _) = greedy_actions(&aug_mdp, &aug_reward).unwrap();
            let best = actions.slice(ndarray::s![.., ..2]).to_owned();
            let g = g_value(
                &oracle,
                128,
                FwMode::Final,
                &occupancy_hat(&oracle, &Policy::deterministic(&best, 2)),
                &mix_occ,
            );
            assert!(g <= 2.0 * 8.0 + 1e-6);
        }
    }

    #[test]
    fn fw_objective_is_nondecreasing() {
        let (mdp, _) = random_mdp(3, 4, 3, 61, 0.3).unwrap();
        let oracle = OccupancyOracle::exact(&mdp);
        let outcome = fw_solve(&oracle, 256, FwMode::Final).unwrap();
        for w in outcome.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "objective dropped: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn self_coverage_certificate_equals_cell_count() {
        let (mdp, _) = random_mdp(2, 3, 2, 62, 1.0).unwrap();
        let oracle = OccupancyOracle::exact(&mdp);
        let actions = random_deterministic_policy(2, 3, 2, 63);
        let mixture = PolicyMixture::singleton(actions.clone());
        let g = coverage_certificate(&oracle, &mixture, &[actions], 64).unwrap();
        assert!((g - (2 * 3 * 2) as f64).abs() < 1e-9);
    }

    #[test]
    fn adversarial_mixture_fails_certificate() {
        // two-state chain: action 0 stays at s0, action 1 moves to s1;
        // a mixture that never plays action 1 cannot cover the mover
        let mut p = Array4::zeros((2, 2, 2, 2));
        for hh in 0..2 {
            p[[hh, 0, 0, 0]] = 1.0;
            p[[hh, 0, 1, 1]] = 1.0;
            p[[hh, 1, 0, 1]] = 1.0;
            p[[hh, 1, 1, 1]] = 1.0;
        }
        let mdp = MdpCore::new(2, 2, 2, p, 0).unwrap();
        let oracle = OccupancyOracle::exact(&mdp);
        let stay = PolicyMixture::singleton(Array2::zeros((2, 2)));
        let mut mover = Array2::zeros((2, 2));
        mover[[0, 0]] = 1;
        mover[[1, 1]] = 1;
        let k = 1000;
        let g = coverage_certificate(&oracle, &stay, &[mover], k).unwrap();
        assert!(g > 2.0 * 8.0, "certificate {g} should exceed 2HSA");
    }

    #[test]
    fn explore_pipeline_single_state_and_threshold_behavior() {
        let (mdp, _) = random_mdp(3, 1, 2, 64, 1.0).unwrap();
        let (oracle, mixture, summary) = explore_run(&mdp, 16, 64, 0.0, 5).unwrap();
        mixture.validate().unwrap();
        assert_eq!(summary.total_episodes, 48);
        let det = random_deterministic_policy(3, 1, 2, 65);
        let g = coverage_certificate(&oracle, &mixture, &[det], 64).unwrap();
        assert!(g <= 2.0 * 6.0 + 1e-6);

        // xi above N truncates every kernel
        let (mdp, _) = random_mdp(3, 3, 2, 66, 1.0).unwrap();
        let (oracle, _, summary) = explore_run(&mdp, 8, 64, 1e9, 6).unwrap();
        assert!(oracle.transitions_trunc.iter().all(|&p| p == 0.0));
        assert_eq!(summary.truncation_fractions, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn explore_pipeline_three_state_certificate() {
        let (mdp, _) = random_mdp(3, 3, 2, 67, 1.0).unwrap();
        let xi = XiConfig::default().threshold(3, 3, 2, 0.1);
        let (oracle, mixture, summary) = explore_run(&mdp, 512, 1024, xi, 7).unwrap();
        assert!(summary.final_converged);
        let policies: Vec<_> = (0..100)
            .map(|i| random_deterministic_policy(3, 3, 2, crate::seed::mix64(9000, i)))
            .collect();
        let g = coverage_certificate(&oracle, &mixture, &policies, 1024).unwrap();
        assert!(g <= 2.0 * (3 * 3 * 2) as f64, "certificate {g}");
    }

    #[test]
    fn explore_is_seed_deterministic() {
        let (mdp, _) = random_mdp(3, 3, 2, 68, 1.0).unwrap();
        let (o1, m1, _) = explore_run(&mdp, 64, 128, 0.0, 9).unwrap();
        let (o2, m2, _) = explore_run(&mdp, 64, 128, 0.0, 9).unwrap();
        assert_eq!(o1.transitions_trunc, o2.transitions_trunc);
        assert_eq!(m1.atoms, m2.atoms);
        assert_eq!(m1.weights, m2.weights);
    }
}
