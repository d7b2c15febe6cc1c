//! Bayesian additive regression trees with a Dirichlet process mixture
//! model for the errors (DPMBART), with plain BART as the special case of
//! iid normal errors.
//!
//! The crate is organised bottom-up:
//! - [`data`], [`tree`]: datasets, cutpoints, decision trees and ensembles
//! - [`prior`], [`model`]: prior families and their data-based calibration
//! - [`bart`]: the heteroscedastic backfitting sweep
//! - [`dpm`]: Escobar–West draws, the cluster-count law and the alpha draw
//! - [`sampler`], [`summary`]: the Gibbs chain and posterior summaries
//! - [`scenario`], [`io`], [`harness`]: simulation, files, and experiment runs

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bart;
pub mod data;
pub mod dist;
pub mod dpm;
pub mod error;
pub mod harness;
pub mod io;
pub mod model;
pub mod prior;
pub mod rng;
pub mod sampler;
pub mod scenario;
pub mod summary;
pub mod tree;

pub use data::{CutpointGrid, Dataset, LeastSquaresFit, PerObsErrorParams};
pub use dpm::{Baseline, ClusterState, Theta};
pub use error::{Error, Result};
pub use model::{CalibratedModel, ModelSettings};
pub use prior::{AlphaPrior, BaselineG0, MuPrior, SigmaPrior, TreePrior};
pub use sampler::{run_chain, ChainConfig, ChainOutput, DrawRecord, Mode};
pub use scenario::{simulate, Scenario, ScenarioKind};
pub use tree::{Ensemble, Tree};
