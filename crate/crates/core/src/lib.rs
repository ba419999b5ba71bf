//! Random Machines: bagged SVM ensembles with a randomly sampled kernel
//! per bootstrap, plus the simulation and evaluation harness used to
//! compare them with single-kernel bagging and plain SVMs.

pub mod bench;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod kernel;
pub mod metrics;
pub mod rng;
pub mod solver;

pub use data::{Dataset, Label};
pub use ensemble::{fit_bagged_svm, fit_random_machines, BaggedSvmModel, EnsembleConfig, RandomMachinesModel};
pub use error::{Error, Result};
pub use kernel::{KernelKind, KernelSpec};
pub use solver::{train_svm, SolverSettings, TrainedSvm};
