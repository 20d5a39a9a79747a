//! Offline IRL with pessimism: empirical transition/expert estimators, the
//! Bernstein-style bonus, and the estimated reward mapping.
//!
//! Given a dataset of `(h, s, a, e)` tuples, the estimated reward at a
//! parameter `theta = (V, A)` is
//!
//! ```text
//! r_hat_h(s, a) = -A_h(s, a) * 1{a not in supp(pi_hat_h(.|s))}
//!                 + V_h(s) - [P_hat_h V_{h+1}](s, a) - b_h(s, a)
//! ```
//!
//! where the bonus
//!
//! ```text
//! b = C * min{ sqrt(logN * iota * Var_hat(V_{h+1}) / (N v 1))
//!              + H * logN * iota / (N v 1)
//!              + (eps / H) * (1 + sqrt(logN * iota / (N v 1))), H }
//! ```
//!
//! subtracts enough to keep `r_hat <= r_star` elementwise with high
//! probability (`iota = log(HSA / delta)`, `logN` the covering surrogate of
//! the parameter set at resolution `eps / H`).

use ndarray::{Array3, Array4};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::offline::{tally, CountTables, FeedbackOption, TransitionSource};
use crate::reward_map::{log_cover, MappingTag, ParamSet, RewardMapping, RewardParam};

#[derive(Debug, Clone)]
pub struct RlpConfig {
    /// Confidence level in (0, 1).
    pub delta: f64,
    /// Target accuracy, strictly positive.
    pub eps: f64,
    /// Bonus multiplier `C`. The guarantee holds for some absolute constant;
    /// 1.0 is the crate default and drives the monotonicity acceptance gate.
    pub bonus_scale: f64,
    pub option: FeedbackOption,
    /// Covering surrogate `log N(Theta; eps / H)`, clipped at 1.
    pub log_cover: f64,
}

impl RlpConfig {
    pub fn new(
        delta: f64,
        eps: f64,
        bonus_scale: f64,
        option: FeedbackOption,
        log_cover: f64,
    ) -> Result<Self> {
        if !(0.0 < delta && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta {delta} outside (0, 1)")));
        }
        if eps <= 0.0 {
            return Err(Error::InvalidArgument(format!("eps {eps} <= 0")));
        }
        if bonus_scale < 0.0 {
            return Err(Error::InvalidArgument(format!("bonus scale {bonus_scale} < 0")));
        }
        if log_cover < 1.0 {
            return Err(Error::InvalidArgument(format!("log cover {log_cover} < 1 (clip floor)")));
        }
        Ok(Self { delta, eps, bonus_scale, option, log_cover })
    }

    /// Convenience constructor computing the covering surrogate of `thetas`
    /// at resolution `eps / H`.
    pub fn for_param_set(
        delta: f64,
        eps: f64,
        bonus_scale: f64,
        option: FeedbackOption,
        thetas: &ParamSet,
    ) -> Result<Self> {
        if eps <= 0.0 {
            return Err(Error::InvalidArgument(format!("eps {eps} <= 0")));
        }
        let horizon = match thetas {
            ParamSet::FiniteList(list) => {
                list.first().ok_or(Error::EmptySet("parameter list"))?.dims().0
            }
            ParamSet::FullBox { horizon, .. } => *horizon,
        };
        let cover = log_cover(thetas, eps / horizon as f64)?;
        Self::new(delta, eps, bonus_scale, option, cover)
    }

    /// `iota = log(HSA / delta)`.
    pub fn iota(&self, dims: (usize, usize, usize)) -> f64 {
        let (h, s, a) = dims;
        ((h * s * a) as f64 / self.delta).ln()
    }
}

/// Empirical model fitted on a dataset: transition kernel (all-zero rows at
/// unvisited cells), expert policy estimate and its support, and counts.
#[derive(Debug, Clone)]
pub struct RlpModel {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub transitions_hat: Array4<f64>,
    pub expert_policy_hat: Array3<f64>,
    pub expert_support_hat: Array3<bool>,
    pub counts: CountTables,
    pub config: RlpConfig,
}

/// Fits the empirical transition kernel and expert policy.
///
/// `P_hat_h(s'|s,a) = count / (N v 1)`; unvisited `(h, s, a)` keep an
/// all-zero row. The expert estimate normalizes expert-evidence counts by
/// state visits (option 1) or by positively-flagged visits (option 2); only
/// its support is consumed downstream.
pub fn fit_empirical(source: &dyn TransitionSource, config: &RlpConfig) -> Result<RlpModel> {
    if source.option() != config.option {
        return Err(Error::OptionMismatch {
            dataset: source.option().code(),
            config: config.option.code(),
        });
    }
    let (h, s, a) = source.dims();
    let tallies = tally(source);
    let counts = tallies.counts;
    let mut transitions_hat = Array4::zeros((h, s, a, s));
    for hh in 0..h {
        for ss in 0..s {
            for aa in 0..a {
                let n = counts.behavior_sa[[hh, ss, aa]];
                if n == 0 {
                    continue;
                }
                for sp in 0..s {
                    transitions_hat[[hh, ss, aa, sp]] =
                        tallies.transitions[[hh, ss, aa, sp]] as f64 / n as f64;
                }
            }
        }
    }
    // expert evidence per (h, s, a): sampled expert actions (option 1) or
    // positively-flagged visits (option 2), normalized by state visits
    // resp. flagged visits
    let mut evidence = Array3::<u64>::zeros((h, s, a));
    match config.option {
        FeedbackOption::ExpertAction => evidence.assign(&counts.expert_sa),
        FeedbackOption::SupportFlag => {
            for r in source.records() {
                if r.feedback == 1 {
                    evidence[[r.step, r.state, r.action]] += 1;
                }
            }
        }
    }
    let mut expert_policy_hat = Array3::zeros((h, s, a));
    let mut expert_support_hat = Array3::from_elem((h, s, a), false);
    for hh in 0..h {
        for ss in 0..s {
            let denom = match config.option {
                FeedbackOption::ExpertAction => counts.behavior_s[[hh, ss]],
                FeedbackOption::SupportFlag => counts.positive_s[[hh, ss]],
            }
            .max(1) as f64;
            for aa in 0..a {
                let e = evidence[[hh, ss, aa]];
                expert_policy_hat[[hh, ss, aa]] = e as f64 / denom;
                expert_support_hat[[hh, ss, aa]] = e > 0;
            }
        }
    }
    Ok(RlpModel {
        horizon: h,
        num_states: s,
        num_actions: a,
        transitions_hat,
        expert_policy_hat,
        expert_support_hat,
        counts,
        config: config.clone(),
    })
}

impl RlpModel {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.horizon, self.num_states, self.num_actions)
    }

    /// `[P_hat_h V_{h+1}](s, a)` with the terminal convention `V_H = 0`.
    fn p_hat_next_value(&self, theta: &RewardParam, hh: usize, ss: usize, aa: usize) -> f64 {
        if hh + 1 >= self.horizon {
            return 0.0;
        }
        let mut acc = 0.0;
        for sp in 0..self.num_states {
            acc += self.transitions_hat[[hh, ss, aa, sp]] * theta.value[[hh + 1, sp]];
        }
        acc
    }

    /// Empirical variance of `V_{h+1}` under the `P_hat` row; zero on
    /// all-zero rows, clamped against float negatives.
    pub fn empirical_variance(&self, theta: &RewardParam, hh: usize, ss: usize, aa: usize) -> f64 {
        if hh + 1 >= self.horizon {
            return 0.0;
        }
        let mut mean = 0.0;
        let mut second = 0.0;
        for sp in 0..self.num_states {
            let p = self.transitions_hat[[hh, ss, aa, sp]];
            let v = theta.value[[hh + 1, sp]];
            mean += p * v;
            second += p * v * v;
        }
        (second - mean * mean).max(0.0)
    }
}

/// Bernstein-style pessimism bonus table for one parameter.
pub fn bonus(model: &RlpModel, theta: &RewardParam, eps: f64) -> Array3<f64> {
    let (h, s, a) = model.dims();
    let iota = model.config.iota(model.dims());
    let lni = model.config.log_cover * iota;
    let cap = h as f64;
    let mut out = Array3::zeros((h, s, a));
    for hh in 0..h {
        for ss in 0..s {
            for aa in 0..a {
                let n = model.counts.behavior_sa[[hh, ss, aa]].max(1) as f64;
                let var = model.empirical_variance(theta, hh, ss, aa);
                let inner = (lni * var / n).sqrt()
                    + cap * lni / n
                    + eps / cap * (1.0 + (lni / n).sqrt());
                out[[hh, ss, aa]] = model.config.bonus_scale * inner.min(cap);
            }
        }
    }
    out
}

/// Estimated reward at one parameter: the empirical mapping minus the bonus.
pub fn estimated_reward(model: &RlpModel, theta: &RewardParam, eps: f64) -> crate::mdp::RewardTable {
    let (h, s, a) = model.dims();
    let b = bonus(model, theta, eps);
    let mut values = Array3::zeros((h, s, a));
    for hh in 0..h {
        for ss in 0..s {
            let v_here = theta.value[[hh, ss]];
            for aa in 0..a {
                let penalty = if model.expert_support_hat[[hh, ss, aa]] {
                    0.0
                } else {
                    theta.advantage[[hh, ss, aa]]
                };
                values[[hh, ss, aa]] =
                    -penalty + v_here - model.p_hat_next_value(theta, hh, ss, aa) - b[[hh, ss, aa]];
            }
        }
    }
    let bound = 3.0 * h as f64 + model.config.bonus_scale * h as f64;
    crate::mdp::RewardTable::new(values, bound).expect("estimate stays within declared bound")
}

/// Runs the offline pipeline: fit once, return a lazy estimated mapping.
pub fn rlp_run(
    source: &dyn TransitionSource,
    thetas: &ParamSet,
    config: &RlpConfig,
) -> Result<RewardMapping> {
    thetas.validate()?;
    thetas.params()?; // reject fullbox: evaluation needs an explicit list
    let model = Arc::new(fit_empirical(source, config)?);
    let eps = config.eps;
    Ok(RewardMapping::new(
        MappingTag::Estimated,
        Box::new(move |theta| estimated_reward(&model, theta, eps)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{random_mdp, random_stochastic_policy};
    use crate::mdp::Policy;
    use crate::offline::{collect_dataset, counts, EpisodeDataset};
    use crate::reward_map::{ground_truth_reward, sample_theta};
    use crate::seed;
    use ndarray::Array4 as NdArray4;

    fn base_config(option: FeedbackOption) -> RlpConfig {
        RlpConfig::new(0.1, 0.01, 1.0, option, 1.0).unwrap()
    }

    #[test]
    fn fit_counts_simple_ratios() {
        // hand dataset with a 3:1 split between two successors
        let mut data = EpisodeDataset {
            option: FeedbackOption::ExpertAction,
            horizon: 2,
            num_states: 2,
            num_actions: 1,
            episodes: vec![],
            provenance: crate::offline::Provenance {
                seed: 0,
                num_episodes: 4,
                behavior_id: String::new(),
                expert_id: String::new(),
            },
        };
        for next in [0usize, 0, 0, 1] {
            data.episodes.push(crate::offline::Episode {
                steps: vec![
                    crate::offline::EpisodeStep { step: 0, state: 0, action: 0, feedback: 0 },
                    crate::offline::EpisodeStep { step: 1, state: next, action: 0, feedback: 0 },
                ],
            });
        }
        let model = fit_empirical(&data, &base_config(FeedbackOption::ExpertAction)).unwrap();
        assert!((model.transitions_hat[[0, 0, 0, 0]] - 0.75).abs() < 1e-15);
        assert!((model.transitions_hat[[0, 0, 0, 1]] - 0.25).abs() < 1e-15);
        // unvisited row stays all-zero
        assert!(model
            .transitions_hat
            .slice(ndarray::s![0, 1, 0, ..])
            .iter()
            .all(|&p| p == 0.0));
    }

    #[test]
    fn fit_concentrates_on_large_samples() {
        let (mdp, expert) = random_mdp(3, 3, 2, 31, 1.0).unwrap();
        let behavior = Policy::uniform(3, 3, 2);
        let data = collect_dataset(
            &mdp,
            &behavior,
            &expert,
            FeedbackOption::ExpertAction,
            100_000,
            77,
            None,
        )
        .unwrap();
        let model = fit_empirical(&data, &base_config(FeedbackOption::ExpertAction)).unwrap();
        let mut checked = 0;
        for hh in 0..2 {
            // last-step kernels are unobservable by construction; cells
            // without data keep their all-zero rows and are skipped
            for ss in 0..3 {
                for aa in 0..2 {
                    if model.counts.behavior_sa[[hh, ss, aa]] < 1_000 {
                        continue;
                    }
                    checked += 1;
                    let tv: f64 = (0..3)
                        .map(|sp| {
                            (model.transitions_hat[[hh, ss, aa, sp]]
                                - mdp.transitions[[hh, ss, aa, sp]])
                            .abs()
                        })
                        .sum::<f64>()
                        / 2.0;
                    assert!(tv <= 0.05, "TV distance {tv} at ({hh},{ss},{aa})");
                }
            }
        }
        assert!(checked >= 8, "only {checked} cells had enough data");
    }

    #[test]
    fn option_mismatch_is_rejected() {
        let (mdp, expert) = random_mdp(2, 2, 2, 1, 1.0).unwrap();
        let data =
            collect_dataset(&mdp, &expert, &expert, FeedbackOption::SupportFlag, 10, 5, None).unwrap();
        let err = fit_empirical(&data, &base_config(FeedbackOption::ExpertAction));
        assert!(matches!(err, Err(Error::OptionMismatch { .. })));
    }

    #[test]
    fn bonus_zero_count_saturates_at_ch() {
        let (mdp, expert) = random_mdp(3, 3, 2, 41, 1.0).unwrap();
        let behavior = Policy::deterministic(&ndarray::Array2::zeros((3, 3)), 2);
        let data =
            collect_dataset(&mdp, &behavior, &expert, FeedbackOption::ExpertAction, 50, 3, None).unwrap();
        let config = RlpConfig::new(0.1, 0.01, 1.0, FeedbackOption::ExpertAction, 2.0).unwrap();
        let model = fit_empirical(&data, &config).unwrap();
        let theta = sample_theta(3, 3, 2, 5, 1.0).unwrap();
        let b = bonus(&model, &theta, config.eps);
        // action 1 is never taken: count 0 forces the cap C * H
        assert!(model.counts.behavior_sa[[0, mdp.init_state, 1]] == 0);
        assert!((b[[0, mdp.init_state, 1]] - 3.0).abs() < 1e-12);
        // bonuses stay within [0, C*H]
        assert!(b.iter().all(|&x| (0.0..=3.0 + 1e-12).contains(&x)));
    }

    #[test]
    fn bonus_hand_arithmetic() {
        // N=100, Var=4, logN*iota=2, H=5, eps=0.5, C=1
        let n: f64 = 100.0;
        let lni: f64 = 2.0;
        let var: f64 = 4.0;
        let h: f64 = 5.0;
        let eps: f64 = 0.5;
        let want = ((lni * var / n).sqrt() + h * lni / n + eps / h * (1.0 + (lni / n).sqrt())).min(h);
        assert!((want - 0.496984848098349_94).abs() < 1e-12);

        // reproduce through the bonus path with a crafted model
        let mut model = RlpModel {
            horizon: 5,
            num_states: 2,
            num_actions: 1,
            transitions_hat: NdArray4::zeros((5, 2, 1, 2)),
            expert_policy_hat: Array3::zeros((5, 2, 1)),
            expert_support_hat: Array3::from_elem((5, 2, 1), true),
            counts: crate::offline::CountTables {
                behavior_sa: Array3::from_elem((5, 2, 1), 100),
                behavior_s: ndarray::Array2::from_elem((5, 2), 100),
                positive_s: ndarray::Array2::zeros((5, 2)),
                expert_sa: Array3::from_elem((5, 2, 1), 100),
            },
            config: RlpConfig {
                delta: 0.1,
                eps,
                bonus_scale: 1.0,
                option: FeedbackOption::ExpertAction,
                log_cover: 1.0,
            },
        };
        // pick iota * log_cover = 2 by inverting iota for these dims
        let iota = model.config.iota(model.dims());
        model.config.log_cover = lni / iota;
        // variance 4: P splits 1/2 between V = 0 and V = 4 at step 1
        model.transitions_hat[[0, 0, 0, 0]] = 0.5;
        model.transitions_hat[[0, 0, 0, 1]] = 0.5;
        let mut theta = crate::reward_map::RewardParam::zeros(5, 2, 1);
        theta.value[[1, 0]] = 0.0;
        theta.value[[1, 1]] = 4.0;
        let b = bonus(&model, &theta, eps);
        assert!((b[[0, 0, 0]] - want).abs() < 1e-12, "{} vs {want}", b[[0, 0, 0]]);
    }

    #[test]
    fn bonus_large_n_approaches_eps_over_h() {
        let mut model = RlpModel {
            horizon: 4,
            num_states: 1,
            num_actions: 1,
            transitions_hat: NdArray4::zeros((4, 1, 1, 1)),
            expert_policy_hat: Array3::zeros((4, 1, 1)),
            expert_support_hat: Array3::from_elem((4, 1, 1), true),
            counts: crate::offline::CountTables {
                behavior_sa: Array3::from_elem((4, 1, 1), 100_000_000),
                behavior_s: ndarray::Array2::from_elem((4, 1), 100_000_000),
                positive_s: ndarray::Array2::zeros((4, 1)),
                expert_sa: Array3::from_elem((4, 1, 1), 100_000_000),
            },
            config: base_config(FeedbackOption::ExpertAction),
        };
        model.transitions_hat.fill(1.0);
        let theta = crate::reward_map::RewardParam::zeros(4, 1, 1); // V = 0
        let eps = 0.4;
        let b = bonus(&model, &theta, eps);
        let floor = eps / 4.0;
        assert!((b[[0, 0, 0]] - floor).abs() < floor * 0.01, "{} vs {floor}", b[[0, 0, 0]]);
    }

    #[test]
    fn bonus_nonincreasing_in_count_for_fixed_variance() {
        let (mdp, expert) = random_mdp(3, 2, 2, 4, 1.0).unwrap();
        let data = collect_dataset(
            &mdp,
            &Policy::uniform(3, 2, 2),
            &expert,
            FeedbackOption::ExpertAction,
            500,
            11,
            None,
        )
        .unwrap();
        let mut model = fit_empirical(&data, &base_config(FeedbackOption::ExpertAction)).unwrap();
        let theta = sample_theta(3, 2, 2, 9, 1.0).unwrap();
        let mut last = f64::INFINITY;
        for n in [0u64, 1, 2, 8, 64, 512, 4096] {
            model.counts.behavior_sa.fill(n);
            let b = bonus(&model, &theta, 0.01);
            let here = b[[0, 0, 0]];
            assert!(here <= last + 1e-15, "bonus increased from {last} to {here} at N={n}");
            last = here;
        }
    }

    #[test]
    fn variance_identity_two_routes() {
        let (mdp, expert) = random_mdp(3, 3, 2, 6, 1.0).unwrap();
        let data = collect_dataset(
            &mdp,
            &Policy::uniform(3, 3, 2),
            &expert,
            FeedbackOption::ExpertAction,
            2_000,
            13,
            None,
        )
        .unwrap();
        let model = fit_empirical(&data, &base_config(FeedbackOption::ExpertAction)).unwrap();
        let theta = sample_theta(3, 3, 2, 10, 1.0).unwrap();
        for hh in 0..2 {
            for ss in 0..3 {
                for aa in 0..2 {
                    let var = model.empirical_variance(&theta, hh, ss, aa);
                    let mut mean = 0.0;
                    let mut second = 0.0;
                    for sp in 0..3 {
                        let p = model.transitions_hat[[hh, ss, aa, sp]];
                        mean += p * theta.value[[hh + 1, sp]];
                        second += p * theta.value[[hh + 1, sp]].powi(2);
                    }
                    assert!((var - (second - mean * mean).max(0.0)).abs() < 1e-9);
                    assert!(var >= 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_theta_estimate_is_minus_bonus() {
        let (mdp, expert) = random_mdp(3, 3, 2, 8, 1.0).unwrap();
        let data = collect_dataset(
            &mdp,
            &Policy::uniform(3, 3, 2),
            &expert,
            FeedbackOption::ExpertAction,
            20_000,
            21,
            None,
        )
        .unwrap();
        let config = base_config(FeedbackOption::ExpertAction);
        let model = fit_empirical(&data, &config).unwrap();
        let theta = crate::reward_map::RewardParam::zeros(3, 3, 2);
        let r_hat = estimated_reward(&model, &theta, config.eps);
        let b = bonus(&model, &theta, config.eps);
        for ((idx, &r), &bb) in r_hat.values.indexed_iter().zip(b.iter()) {
            let _ = idx;
            assert!((r + bb).abs() < 1e-15);
            assert!(r <= 0.0);
        }
    }

    #[test]
    fn rlp_run_is_idempotent_and_reduces_on_singleton() {
        let (mdp, expert) = random_mdp(2, 2, 2, 3, 1.0).unwrap();
        let data = collect_dataset(
            &mdp,
            &Policy::uniform(2, 2, 2),
            &expert,
            FeedbackOption::ExpertAction,
            500,
            5,
            None,
        )
        .unwrap();
        let theta = crate::reward_map::RewardParam::zeros(2, 2, 2);
        let set = ParamSet::FiniteList(vec![theta.clone()]);
        let config =
            RlpConfig::for_param_set(0.1, 0.01, 1.0, FeedbackOption::ExpertAction, &set).unwrap();
        let mapping = rlp_run(&data, &set, &config).unwrap();
        assert_eq!(mapping.tag(), MappingTag::Estimated);
        assert_eq!(mapping.reward(&theta).values, mapping.reward(&theta).values);

        // singleton zero theta: D^pi_Theta(R*, R_hat) equals d_pi(0, -bonus)
        let gt = RewardMapping::ground_truth(&mdp, &expert).unwrap();
        let eval = random_stochastic_policy(2, 2, 2, 6);
        let d_theta =
            crate::metrics::d_pi_theta(&mdp, &eval, &gt, &mapping, std::slice::from_ref(&theta))
                .unwrap();
        let d_direct =
            crate::metrics::d_pi(&mdp, &eval, &gt.reward(&theta), &mapping.reward(&theta)).unwrap();
        assert_eq!(d_theta.value, d_direct.value);

        let fullbox = ParamSet::FullBox { horizon: 2, num_states: 2 };
        assert!(rlp_run(&data, &fullbox, &config).is_err());
    }

    #[test]
    fn pessimism_holds_on_most_seeds() {
        // scaled-down version of the acceptance gate: 20 seeds, 5 thetas
        let mut good = 0;
        let seeds = 20u64;
        for sd in 0..seeds {
            let (mdp, expert) = random_mdp(3, 3, 2, seed::mix64(7000, sd), 1.0).unwrap();
            let behavior = Policy::uniform(3, 3, 2);
            let data = collect_dataset(
                &mdp,
                &behavior,
                &expert,
                FeedbackOption::ExpertAction,
                2_000,
                seed::mix64(7001, sd),
                None,
            )
            .unwrap();
            let thetas: Vec<_> = (0..5)
                .map(|i| sample_theta(3, 3, 2, seed::mix64(7002, sd * 10 + i), 1.0).unwrap())
                .collect();
            let set = ParamSet::FiniteList(thetas.clone());
            let config =
                RlpConfig::for_param_set(0.1, 0.01, 1.0, FeedbackOption::ExpertAction, &set).unwrap();
            let mapping = rlp_run(&data, &set, &config).unwrap();
            let all_below = thetas.iter().all(|theta| {
                let r_hat = mapping.reward(theta);
                let r_star = ground_truth_reward(&mdp, &expert, theta).unwrap();
                r_hat
                    .values
                    .iter()
                    .zip(r_star.values.iter())
                    .all(|(a, b)| *a <= *b + 1e-9)
            });
            if all_below {
                good += 1;
            }
        }
        assert!(good * 10 >= seeds * 9, "monotonicity held on {good}/{seeds} seeds");
    }
}
