//! JSON / JSONL interchange formats.
//!
//! Tensors are written as plain nested lists so files stay readable and
//! language-neutral:
//!
//! - MDP: `{"H":int,"S":int,"A":int,"s_init":int,"P":[h][s][a][s']}`
//! - reward: `{"B":float,"r":[h][s][a]}`
//! - policy: `{"probs":[h][s][a]}`
//! - parameter: `{"V":[h][s],"A":[h][s][a]}`
//! - parameter set: `{"kind":"list","params":[...]}` or
//!   `{"kind":"fullbox","H":int,"S":int}`
//! - dataset: JSON lines, one episode per line:
//!   `{"k":int,"steps":[[h,s,a,e],...]}`

use ndarray::{Array2, Array3, Array4};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mdp::{MdpCore, Policy, RewardTable};
use crate::offline::{Episode, EpisodeDataset, EpisodeStep, FeedbackOption, Provenance};
use crate::reward_map::{ParamSet, RewardParam};

type Nested2 = Vec<Vec<f64>>;
type Nested3 = Vec<Vec<Vec<f64>>>;
type Nested4 = Vec<Vec<Vec<Vec<f64>>>>;

fn array2_to_nested(a: &Array2<f64>) -> Nested2 {
    a.outer_iter().map(|row| row.to_vec()).collect()
}

fn array3_to_nested(a: &Array3<f64>) -> Nested3 {
    a.outer_iter().map(|m| m.outer_iter().map(|row| row.to_vec()).collect()).collect()
}

fn array4_to_nested(a: &Array4<f64>) -> Nested4 {
    a.outer_iter()
        .map(|c| c.outer_iter().map(|m| m.outer_iter().map(|row| row.to_vec()).collect()).collect())
        .collect()
}

fn nested_to_array2(v: &Nested2, what: &str) -> Result<Array2<f64>> {
    let rows = v.len();
    let cols = v.first().map_or(0, |r| r.len());
    let mut out = Array2::zeros((rows, cols));
    for (i, row) in v.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::ShapeMismatch(format!("{what}: ragged row {i}")));
        }
        for (j, &x) in row.iter().enumerate() {
            out[[i, j]] = x;
        }
    }
    Ok(out)
}

fn nested_to_array3(v: &Nested3, what: &str) -> Result<Array3<f64>> {
    let d0 = v.len();
    let d1 = v.first().map_or(0, |m| m.len());
    let d2 = v.first().and_then(|m| m.first()).map_or(0, |r| r.len());
    let mut out = Array3::zeros((d0, d1, d2));
    for (i, m) in v.iter().enumerate() {
        if m.len() != d1 {
            return Err(Error::ShapeMismatch(format!("{what}: ragged plane {i}")));
        }
        for (j, row) in m.iter().enumerate() {
            if row.len() != d2 {
                return Err(Error::ShapeMismatch(format!("{what}: ragged row {i},{j}")));
            }
            for (k, &x) in row.iter().enumerate() {
                out[[i, j, k]] = x;
            }
        }
    }
    Ok(out)
}

fn nested_to_array4(v: &Nested4, what: &str) -> Result<Array4<f64>> {
    let d0 = v.len();
    let d1 = v.first().map_or(0, |c| c.len());
    let d2 = v.first().and_then(|c| c.first()).map_or(0, |m| m.len());
    let d3 = v.first().and_then(|c| c.first()).and_then(|m| m.first()).map_or(0, |r| r.len());
    let mut out = Array4::zeros((d0, d1, d2, d3));
    for (i, c) in v.iter().enumerate() {
        if c.len() != d1 {
            return Err(Error::ShapeMismatch(format!("{what}: ragged cube {i}")));
        }
        for (j, m) in c.iter().enumerate() {
            if m.len() != d2 {
                return Err(Error::ShapeMismatch(format!("{what}: ragged plane {i},{j}")));
            }
            for (k, row) in m.iter().enumerate() {
                if row.len() != d3 {
                    return Err(Error::ShapeMismatch(format!("{what}: ragged row {i},{j},{k}")));
                }
                for (l, &x) in row.iter().enumerate() {
                    out[[i, j, k, l]] = x;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct MdpJson {
    #[serde(rename = "H")]
    horizon: usize,
    #[serde(rename = "S")]
    num_states: usize,
    #[serde(rename = "A")]
    num_actions: usize,
    s_init: usize,
    #[serde(rename = "P")]
    transitions: Nested4,
}

#[derive(Serialize, Deserialize)]
struct RewardJson {
    #[serde(rename = "B")]
    bound: f64,
    r: Nested3,
}

#[derive(Serialize, Deserialize)]
struct PolicyJson {
    probs: Nested3,
}

#[derive(Serialize, Deserialize)]
struct ThetaJson {
    #[serde(rename = "V")]
    value: Nested2,
    #[serde(rename = "A")]
    advantage: Nested3,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ParamSetJson {
    List { params: Vec<ThetaJson> },
    Fullbox {
        #[serde(rename = "H")]
        horizon: usize,
        #[serde(rename = "S")]
        num_states: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct EpisodeJson {
    k: usize,
    steps: Vec<[usize; 4]>,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, contents)?;
    Ok(())
}

pub fn save_mdp(path: &Path, mdp: &MdpCore) -> Result<()> {
    let wire = MdpJson {
        horizon: mdp.horizon,
        num_states: mdp.num_states,
        num_actions: mdp.num_actions,
        s_init: mdp.init_state,
        transitions: array4_to_nested(&mdp.transitions),
    };
    write_file(path, &serde_json::to_string_pretty(&wire)?)
}

pub fn load_mdp(path: &Path) -> Result<MdpCore> {
    let wire: MdpJson = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let transitions = nested_to_array4(&wire.transitions, "P")?;
    MdpCore::new(wire.horizon, wire.num_states, wire.num_actions, transitions, wire.s_init)
}

pub fn save_reward(path: &Path, reward: &RewardTable) -> Result<()> {
    let wire = RewardJson { bound: reward.bound, r: array3_to_nested(&reward.values) };
    write_file(path, &serde_json::to_string_pretty(&wire)?)
}

pub fn load_reward(path: &Path) -> Result<RewardTable> {
    let wire: RewardJson = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    RewardTable::new(nested_to_array3(&wire.r, "r")?, wire.bound)
}

pub fn save_policy(path: &Path, policy: &Policy) -> Result<()> {
    let wire = PolicyJson { probs: array3_to_nested(&policy.probs) };
    write_file(path, &serde_json::to_string_pretty(&wire)?)
}

pub fn load_policy(path: &Path) -> Result<Policy> {
    let wire: PolicyJson = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Policy::new(nested_to_array3(&wire.probs, "probs")?)
}

fn theta_to_wire(theta: &RewardParam) -> ThetaJson {
    ThetaJson { value: array2_to_nested(&theta.value), advantage: array3_to_nested(&theta.advantage) }
}

fn theta_from_wire(wire: &ThetaJson) -> Result<RewardParam> {
    let theta = RewardParam {
        value: nested_to_array2(&wire.value, "V")?,
        advantage: nested_to_array3(&wire.advantage, "A")?,
    };
    theta.validate()?;
    Ok(theta)
}

pub fn save_theta(path: &Path, theta: &RewardParam) -> Result<()> {
    write_file(path, &serde_json::to_string_pretty(&theta_to_wire(theta))?)
}

pub fn load_theta(path: &Path) -> Result<RewardParam> {
    let wire: ThetaJson = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    theta_from_wire(&wire)
}

pub fn save_param_set(path: &Path, set: &ParamSet) -> Result<()> {
    let wire = match set {
        ParamSet::FiniteList(list) => {
            ParamSetJson::List { params: list.iter().map(theta_to_wire).collect() }
        }
        ParamSet::FullBox { horizon, num_states } => {
            ParamSetJson::Fullbox { horizon: *horizon, num_states: *num_states }
        }
    };
    write_file(path, &serde_json::to_string_pretty(&wire)?)
}

pub fn load_param_set(path: &Path) -> Result<ParamSet> {
    let wire: ParamSetJson = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let set = match wire {
        ParamSetJson::List { params } => ParamSet::FiniteList(
            params.iter().map(theta_from_wire).collect::<Result<Vec<_>>>()?,
        ),
        ParamSetJson::Fullbox { horizon, num_states } => ParamSet::FullBox { horizon, num_states },
    };
    set.validate()?;
    Ok(set)
}

/// Writes a dataset as JSON lines, one episode per line.
pub fn save_dataset(path: &Path, dataset: &EpisodeDataset) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut out = std::fs::File::create(path)?;
    for (k, episode) in dataset.episodes.iter().enumerate() {
        let wire = EpisodeJson {
            k,
            steps: episode.steps.iter().map(|s| [s.step, s.state, s.action, s.feedback]).collect(),
        };
        writeln!(out, "{}", serde_json::to_string(&wire)?)?;
    }
    Ok(())
}

/// Reads a JSONL dataset. Dimensions are inferred from the data unless
/// supplied; the feedback option must be stated by the caller (the wire
/// format does not distinguish an action index from a flag).
pub fn load_dataset(
    path: &Path,
    option: FeedbackOption,
    dims: Option<(usize, usize, usize)>,
) -> Result<EpisodeDataset> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut episodes = Vec::new();
    let mut max_state = 0usize;
    let mut max_action = 0usize;
    let mut horizon = 0usize;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: EpisodeJson = serde_json::from_str(&line)?;
        let steps: Vec<EpisodeStep> = wire
            .steps
            .iter()
            .map(|&[step, state, action, feedback]| EpisodeStep { step, state, action, feedback })
            .collect();
        horizon = horizon.max(steps.len());
        for s in &steps {
            max_state = max_state.max(s.state);
            max_action = max_action.max(s.action);
            if option == FeedbackOption::ExpertAction {
                max_action = max_action.max(s.feedback);
            }
        }
        episodes.push(Episode { steps });
    }
    let (h, s, a) = dims.unwrap_or((horizon, max_state + 1, max_action + 1));
    let dataset = EpisodeDataset {
        option,
        horizon: h,
        num_states: s,
        num_actions: a,
        episodes,
        provenance: Provenance {
            seed: 0,
            num_episodes: 0,
            behavior_id: format!("loaded:{}", path.display()),
            expert_id: String::new(),
        },
    };
    dataset.validate()?;
    Ok(dataset)
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, &serde_json::to_string_pretty(value)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::random_mdp;
    use crate::offline::collect_dataset;
    use crate::reward_map::sample_theta;
    use tempfile::tempdir;

    #[test]
    fn round_trips() {
        let dir = tempdir().unwrap();
        let (mdp, expert) = random_mdp(3, 3, 2, 81, 1.0).unwrap();

        let p = dir.path().join("m.mdp.json");
        save_mdp(&p, &mdp).unwrap();
        let back = load_mdp(&p).unwrap();
        assert_eq!(back.transitions, mdp.transitions);
        assert_eq!(back.init_state, mdp.init_state);

        let p = dir.path().join("pi.json");
        save_policy(&p, &expert).unwrap();
        assert_eq!(load_policy(&p).unwrap().probs, expert.probs);

        let theta = sample_theta(3, 3, 2, 5, 1.0).unwrap();
        let p = dir.path().join("theta.json");
        save_theta(&p, &theta).unwrap();
        assert_eq!(load_theta(&p).unwrap(), theta);

        let reward = crate::reward_map::ground_truth_reward(&mdp, &expert, &theta).unwrap();
        let p = dir.path().join("r.json");
        save_reward(&p, &reward).unwrap();
        assert_eq!(load_reward(&p).unwrap().values, reward.values);

        let set = ParamSet::FiniteList(vec![theta.clone()]);
        let p = dir.path().join("set.json");
        save_param_set(&p, &set).unwrap();
        match load_param_set(&p).unwrap() {
            ParamSet::FiniteList(list) => assert_eq!(list[0], theta),
            _ => panic!("wrong kind"),
        }

        let fullbox = ParamSet::FullBox { horizon: 4, num_states: 3 };
        save_param_set(&p, &fullbox).unwrap();
        assert!(matches!(
            load_param_set(&p).unwrap(),
            ParamSet::FullBox { horizon: 4, num_states: 3 }
        ));

        let data =
            collect_dataset(&mdp, &expert, &expert, FeedbackOption::ExpertAction, 20, 3, None).unwrap();
        let p = dir.path().join("d.jsonl");
        save_dataset(&p, &data).unwrap();
        let back = load_dataset(&p, FeedbackOption::ExpertAction, Some((3, 3, 2))).unwrap();
        assert_eq!(back.episodes, data.episodes);
    }
}
