//! Offline demonstration datasets: trajectory collection under a behavior
//! policy with expert feedback, plus the count statistics the estimators
//! consume.
//!
//! Per-step RNG draw order inside an episode is fixed: behavior action,
//! expert feedback (option 1 only), next state. Episode `k` uses the derived
//! stream `mix64(seed, k)`, so collection may run episodes in parallel and
//! still produce byte-identical output ordered by episode index.

use ndarray::{Array2, Array3, Array4};

use crate::error::{Error, Result};
use crate::mdp::{sample_index, MdpCore, Policy};
use crate::seed;

/// Expert-feedback channel attached to each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackOption {
    /// Option 1: an expert action sampled at the visited state.
    ExpertAction,
    /// Option 2: a bit flagging whether the taken action is in the expert's
    /// support.
    SupportFlag,
}

impl FeedbackOption {
    pub fn code(self) -> u8 {
        match self {
            FeedbackOption::ExpertAction => 1,
            FeedbackOption::SupportFlag => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(FeedbackOption::ExpertAction),
            2 => Ok(FeedbackOption::SupportFlag),
            other => Err(Error::InvalidArgument(format!("feedback option {other} not in {{1, 2}}"))),
        }
    }
}

/// One dataset step: `(h, s, a, e)` where `e` is an action index under
/// option 1 and a bit under option 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeStep {
    pub step: usize,
    pub state: usize,
    pub action: usize,
    pub feedback: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub steps: Vec<EpisodeStep>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub num_episodes: usize,
    pub behavior_id: String,
    pub expert_id: String,
}

/// `K` trajectories of `(h, s, a, e)` tuples.
#[derive(Debug, Clone)]
pub struct EpisodeDataset {
    pub option: FeedbackOption,
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub episodes: Vec<Episode>,
    pub provenance: Provenance,
}

/// Flattened dataset record; `next_state` is the following step's state and
/// is absent at the last step of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionRecord {
    pub step: usize,
    pub state: usize,
    pub action: usize,
    pub feedback: usize,
    pub next_state: Option<usize>,
}

/// Anything the empirical estimators can be fit on: a feedback option, the
/// table dimensions, and a stream of records.
pub trait TransitionSource {
    fn option(&self) -> FeedbackOption;
    fn dims(&self) -> (usize, usize, usize);
    fn records(&self) -> Box<dyn Iterator<Item = TransitionRecord> + '_>;
}

impl EpisodeDataset {
    pub fn validate(&self) -> Result<()> {
        for (k, episode) in self.episodes.iter().enumerate() {
            if episode.steps.len() != self.horizon {
                return Err(Error::ShapeMismatch(format!(
                    "episode {k} has {} steps, expected {}",
                    episode.steps.len(),
                    self.horizon
                )));
            }
            for st in &episode.steps {
                if st.state >= self.num_states || st.action >= self.num_actions {
                    return Err(Error::InvalidArgument(format!(
                        "episode {k} step {} out of range: state {}, action {}",
                        st.step, st.state, st.action
                    )));
                }
                let feedback_ok = match self.option {
                    FeedbackOption::ExpertAction => st.feedback < self.num_actions,
                    FeedbackOption::SupportFlag => st.feedback <= 1,
                };
                if !feedback_ok {
                    return Err(Error::InvalidArgument(format!(
                        "episode {k} step {} has feedback {} invalid for option {}",
                        st.step,
                        st.feedback,
                        self.option.code()
                    )));
                }
            }
        }
        Ok(())
    }
}

impl TransitionSource for EpisodeDataset {
    fn option(&self) -> FeedbackOption {
        self.option
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.horizon, self.num_states, self.num_actions)
    }

    fn records(&self) -> Box<dyn Iterator<Item = TransitionRecord> + '_> {
        Box::new(self.episodes.iter().flat_map(|e| {
            e.steps.iter().enumerate().map(move |(i, st)| TransitionRecord {
                step: st.step,
                state: st.state,
                action: st.action,
                feedback: st.feedback,
                next_state: e.steps.get(i + 1).map(|n| n.state),
            })
        }))
    }
}

/// Rolls one episode under `behavior`, attaching expert feedback.
pub fn roll_episode<R: rand::Rng>(
    mdp: &MdpCore,
    behavior: &Policy,
    expert: &Policy,
    option: FeedbackOption,
    rng: &mut R,
) -> Episode {
    let (h, _s, _a) = mdp.dims();
    let mut steps = Vec::with_capacity(h);
    let mut state = mdp.init_state;
    for hh in 0..h {
        let action = behavior.sample_action(hh, state, rng);
        let feedback = match option {
            FeedbackOption::ExpertAction => expert.sample_action(hh, state, rng),
            FeedbackOption::SupportFlag => usize::from(expert.probs[[hh, state, action]] > 0.0),
        };
        let next = sample_index(mdp.row(hh, state, action), rng);
        steps.push(EpisodeStep { step: hh, state, action, feedback });
        state = next;
    }
    Episode { steps }
}

/// Collects `K` iid trajectories under the behavior policy with expert
/// feedback per the chosen option.
///
/// With `delta_check = Some(delta)` and option 1, the expert must be
/// `delta`-well-posed (minimum nonzero action probability at least `delta`).
pub fn collect_dataset(
    mdp: &MdpCore,
    behavior: &Policy,
    expert: &Policy,
    option: FeedbackOption,
    num_episodes: usize,
    seed_value: u64,
    delta_check: Option<f64>,
) -> Result<EpisodeDataset> {
    behavior.validate()?;
    expert.validate()?;
    if let (FeedbackOption::ExpertAction, Some(delta)) = (option, delta_check) {
        let min_prob = expert.min_nonzero_prob();
        if min_prob < delta {
            return Err(Error::InvalidPolicy(format!(
                "expert is not {delta}-well-posed: minimum nonzero probability {min_prob}"
            )));
        }
    }
    let (h, s, a) = mdp.dims();
    let episodes = (0..num_episodes)
        .map(|k| {
            let mut rng = seed::derived_rng(seed_value, k as u64);
            roll_episode(mdp, behavior, expert, option, &mut rng)
        })
        .collect();
    Ok(EpisodeDataset {
        option,
        horizon: h,
        num_states: s,
        num_actions: a,
        episodes,
        provenance: Provenance {
            seed: seed_value,
            num_episodes,
            behavior_id: "behavior".into(),
            expert_id: "expert".into(),
        },
    })
}

/// Visitation and expert-evidence tallies.
///
/// `expert_sa` counts `(s_h, e_h) = (s, a)` under option 1 and coincides
/// with `behavior_sa` under option 2; `positive_s` counts positively-flagged
/// visits and is all-zero under option 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTables {
    pub behavior_sa: Array3<u64>,
    pub behavior_s: Array2<u64>,
    pub positive_s: Array2<u64>,
    pub expert_sa: Array3<u64>,
}

/// Per-cell tallies including successor counts (the estimator input).
#[derive(Debug, Clone)]
pub struct Tallies {
    pub counts: CountTables,
    pub transitions: Array4<u64>,
}

pub fn tally(source: &dyn TransitionSource) -> Tallies {
    let (h, s, a) = source.dims();
    let mut behavior_sa = Array3::zeros((h, s, a));
    let mut behavior_s = Array2::zeros((h, s));
    let mut positive_s = Array2::zeros((h, s));
    let mut expert_sa = Array3::zeros((h, s, a));
    let mut transitions = Array4::zeros((h, s, a, s));
    let option = source.option();
    for r in source.records() {
        behavior_sa[[r.step, r.state, r.action]] += 1;
        behavior_s[[r.step, r.state]] += 1;
        match option {
            FeedbackOption::ExpertAction => {
                expert_sa[[r.step, r.state, r.feedback]] += 1;
            }
            FeedbackOption::SupportFlag => {
                if r.feedback == 1 {
                    positive_s[[r.step, r.state]] += 1;
                    expert_sa[[r.step, r.state, r.action]] += 1;
                }
            }
        }
        if let Some(next) = r.next_state {
            transitions[[r.step, r.state, r.action, next]] += 1;
        }
    }
    if option == FeedbackOption::SupportFlag {
        // under option 2 the expert-evidence count is the visit count
        expert_sa = behavior_sa.clone();
    }
    Tallies { counts: CountTables { behavior_sa, behavior_s, positive_s, expert_sa }, transitions }
}

/// Exact count tables of a dataset.
pub fn counts(dataset: &EpisodeDataset) -> CountTables {
    tally(dataset).counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{random_mdp, random_stochastic_policy};
    use proptest::prelude::*;

    #[test]
    fn deterministic_matching_policies_echo_actions() {
        let (mdp, expert) = random_mdp(3, 3, 2, 1, 1.0).unwrap();
        let data = collect_dataset(&mdp, &expert, &expert, FeedbackOption::ExpertAction, 50, 9, Some(1.0))
            .unwrap();
        for e in &data.episodes {
            for st in &e.steps {
                assert_eq!(st.feedback, st.action);
            }
        }
    }

    #[test]
    fn full_support_expert_flags_everything() {
        let (mdp, _) = random_mdp(3, 3, 2, 2, 1.0).unwrap();
        let expert = random_stochastic_policy(3, 3, 2, 3);
        let behavior = Policy::uniform(3, 3, 2);
        let data =
            collect_dataset(&mdp, &behavior, &expert, FeedbackOption::SupportFlag, 40, 4, None).unwrap();
        for e in &data.episodes {
            for st in &e.steps {
                assert_eq!(st.feedback, 1);
            }
        }
    }

    #[test]
    fn option1_feedback_frequency_is_binomial() {
        // expert uniform over two actions; expert-action draws hit action 0
        // about half the time at every visited state
        let (mdp, _) = random_mdp(2, 2, 2, 5, 1.0).unwrap();
        let expert = Policy::uniform(2, 2, 2);
        let behavior = Policy::uniform(2, 2, 2);
        let k = 10_000;
        let data =
            collect_dataset(&mdp, &behavior, &expert, FeedbackOption::ExpertAction, k, 6, Some(0.5))
                .unwrap();
        let t = counts(&data);
        for hh in 0..2 {
            for ss in 0..2 {
                let n = t.behavior_s[[hh, ss]] as f64;
                if n < 100.0 {
                    continue;
                }
                let freq = t.expert_sa[[hh, ss, 0]] as f64 / n;
                let se = (0.25 / n).sqrt();
                assert!((freq - 0.5).abs() <= 3.0 * se, "freq {freq} at ({hh},{ss})");
            }
        }
    }

    #[test]
    fn well_posedness_gate_trips() {
        let (mdp, _) = random_mdp(2, 2, 2, 7, 1.0).unwrap();
        let mut expert = Policy::uniform(2, 2, 2);
        expert.probs[[0, 0, 0]] = 0.999;
        expert.probs[[0, 0, 1]] = 0.001;
        let behavior = Policy::uniform(2, 2, 2);
        let err = collect_dataset(&mdp, &behavior, &expert, FeedbackOption::ExpertAction, 5, 8, Some(0.1));
        assert!(matches!(err, Err(Error::InvalidPolicy(_))));
        // option 2 ignores the gate
        collect_dataset(&mdp, &behavior, &expert, FeedbackOption::SupportFlag, 5, 8, Some(0.1)).unwrap();
    }

    #[test]
    fn counts_zero_and_hand_written() {
        let empty = EpisodeDataset {
            option: FeedbackOption::ExpertAction,
            horizon: 2,
            num_states: 2,
            num_actions: 2,
            episodes: vec![],
            provenance: Provenance {
                seed: 0,
                num_episodes: 0,
                behavior_id: String::new(),
                expert_id: String::new(),
            },
        };
        let t = counts(&empty);
        assert!(t.behavior_sa.iter().all(|&c| c == 0));
        assert!(t.expert_sa.iter().all(|&c| c == 0));

        let mut one = empty.clone();
        one.episodes = vec![Episode {
            steps: vec![
                EpisodeStep { step: 0, state: 0, action: 1, feedback: 0 },
                EpisodeStep { step: 1, state: 1, action: 0, feedback: 1 },
            ],
        }];
        let t = counts(&one);
        assert_eq!(t.behavior_sa[[0, 0, 1]], 1);
        assert_eq!(t.behavior_sa[[1, 1, 0]], 1);
        assert_eq!(t.behavior_s[[0, 0]], 1);
        assert_eq!(t.expert_sa[[0, 0, 0]], 1);
        assert_eq!(t.expert_sa[[1, 1, 1]], 1);
        let tallies = tally(&one);
        assert_eq!(tallies.transitions[[0, 0, 1, 1]], 1);
    }

    #[test]
    fn counts_match_reversed_recount() {
        let (mdp, expert) = random_mdp(3, 3, 2, 11, 1.0).unwrap();
        let behavior = random_stochastic_policy(3, 3, 2, 12);
        for i in 0..10u64 {
            let data = collect_dataset(
                &mdp,
                &behavior,
                &expert,
                if i % 2 == 0 { FeedbackOption::ExpertAction } else { FeedbackOption::SupportFlag },
                200,
                i,
                None,
            )
            .unwrap();
            let fast = counts(&data);
            // independent recount iterating episodes in reverse
            let mut behavior_sa = Array3::<u64>::zeros((3, 3, 2));
            let mut expert_sa = Array3::<u64>::zeros((3, 3, 2));
            let mut positive_s = Array2::<u64>::zeros((3, 3));
            for e in data.episodes.iter().rev() {
                for st in e.steps.iter().rev() {
                    behavior_sa[[st.step, st.state, st.action]] += 1;
                    match data.option {
                        FeedbackOption::ExpertAction => expert_sa[[st.step, st.state, st.feedback]] += 1,
                        FeedbackOption::SupportFlag => positive_s[[st.step, st.state]] += st.feedback as u64,
                    }
                }
            }
            assert_eq!(fast.behavior_sa, behavior_sa);
            if data.option == FeedbackOption::ExpertAction {
                assert_eq!(fast.expert_sa, expert_sa);
            } else {
                assert_eq!(fast.positive_s, positive_s);
                assert_eq!(fast.expert_sa, fast.behavior_sa);
            }
            // every episode contributes one visit per step
            for hh in 0..3 {
                let total: u64 = fast.behavior_sa.slice(ndarray::s![hh, .., ..]).iter().sum();
                assert_eq!(total, 200);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 24, .. ProptestConfig::default() })]

        #[test]
        fn collection_is_deterministic(inst in 0u64..200, sd in 0u64..200, opt in 1u8..3) {
            let (mdp, expert) = random_mdp(2, 3, 2, inst, 1.0).unwrap();
            let behavior = random_stochastic_policy(2, 3, 2, inst ^ 7);
            let option = FeedbackOption::from_code(opt).unwrap();
            let a = collect_dataset(&mdp, &behavior, &expert, option, 30, sd, None).unwrap();
            let b = collect_dataset(&mdp, &behavior, &expert, option, 30, sd, None).unwrap();
            prop_assert_eq!(a.episodes, b.episodes);
        }
    }
}
