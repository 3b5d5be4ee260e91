//! Optimal single-shot Bayesian phase estimation for two-mode interferometry,
//! together with the repeated-measurement MSE simulator, Fisher information
//! tools and a single-arm photon-loss model.

pub mod bayes;
pub mod error;
pub mod fisher;
pub mod fock;
pub mod linalg;
pub mod loss;
pub mod personick;
pub mod povm;
pub mod prior;

pub use bayes::{mse_repeated, mu_tau, Budget, Checkpoints, LikelihoodModel, MseCurve};
pub use error::{MetroError, MetroResult};
pub use fock::{make_probe, FockDims, ModeOperator, Probe, ProbeKind, TwoModeState};
pub use personick::{optimal_strategy, OptimalStrategy, PersonickSolution};
pub use povm::{build_scheme, PhaseLikelihood, Povm, SchemeKind};
pub use prior::FlatPrior;
