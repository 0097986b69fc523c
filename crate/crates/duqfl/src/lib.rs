//! Deep-unfolded quantum federated learning.
//!
//! A dense-statevector simulator for small variational quantum classifiers,
//! trained locally with a custom SPSA whose learning rate and perturbation are
//! themselves learned online ("deep unfolding"), and coordinated by a
//! federated server that aggregates by arithmetic mean or best-client
//! selection. A fairness suite (FFM, EFS, FETI, accuracy variance) scores the
//! best-client selection history, and convergence diagnostics fit the decay
//! exponent of gradient norms.
//!
//! The crate is organized bottom-up:
//!
//! - [`statevector`]: n-qubit state, gate kernels, parity observable, shots
//! - [`vqc`]: ZZ feature map + real-amplitudes ansatz classifier, losses,
//!   parameter-shift gradients
//! - [`unfold`]: the meta-learned SPSA local training loop
//! - [`federation`]: data partitioning, rounds, aggregation strategies
//! - [`fairness`]: FFM / EFS / FETI and selection heatmaps
//! - [`dataset`], [`preprocess`]: WDBC + synthetic genomic data, PCA pipeline
//! - [`diagnostics`]: power-law decay fits for gradient-norm trajectories
//! - [`experiment`]: end-to-end experiment runner and artifact emission

pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod federation;
pub mod preprocess;
pub mod statevector;
pub mod unfold;
pub mod vqc;

pub use error::{Error, Result};
