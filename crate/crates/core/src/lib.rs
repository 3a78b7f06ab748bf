//! Reconstruction of transverse-field Ising ground states with restricted
//! Boltzmann machines, plus magnitude pruning and sparse-mask training.
//!
//! The crate is organised as an exact oracle ([`tfim`]), the model and its
//! training ([`rbm`]), masks and pruning ([`pruning`]), quality measures
//! ([`metrics`]) and an experiment harness ([`experiment`]).

pub mod checkpoint;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod pruning;
pub mod rbm;
pub mod spin;
pub mod tfim;

pub use error::{Error, Result};
pub use metrics::{MetricsRecord, ObservableEstimate};
pub use pruning::{PruneMask, PruneSchedule};
pub use rbm::{RbmModel, TrainConfig};
pub use spin::{Dataset, SpinConfiguration};
pub use tfim::{TfimSpec, Wavefunction};
