//! Tabular inverse reinforcement learning toolkit.
//!
//! Recovers reward *mappings* — generating functions from value/advantage
//! parameters to feasible rewards — from offline demonstration data (with
//! pessimism bonuses) or online interaction (reward-free exploration plus
//! subsampling), and measures recovery quality with visitation-weighted
//! metrics between rewards and mappings.
//!
//! Modules follow the pipeline:
//!
//! - [`mdp`] — episodic MDPs without reward, exact DP, occupancies, sampling;
//! - [`reward_map`] — parameter spaces and the ground-truth reward mapping;
//! - [`metrics`] — `d^pi` / `d^all` base metrics, mapping metrics, Hausdorff,
//!   concentrability, transferability;
//! - [`offline`] — demonstration datasets and count statistics;
//! - [`rlp`] — offline estimation with Bernstein-style pessimism;
//! - [`explore`] — reward-free exploration via Frank-Wolfe over policy
//!   mixtures on truncated empirical models;
//! - [`rle`] — the online pipeline: explore, collect, trim, estimate;
//! - [`instances`] — random and hard-instance generators;
//! - [`harness`] — experiment sweeps, rate fits, CSV/JSON emission.

pub mod error;
pub mod explore;
pub mod harness;
pub mod instances;
pub mod io;
pub mod mdp;
pub mod metrics;
pub mod offline;
pub mod reward_map;
pub mod rle;
pub mod rlp;
pub mod seed;

pub use error::{Error, Result};
