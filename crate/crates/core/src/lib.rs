//! Photon statistics of the N-th harmonic generation Hamiltonian
//! `H = g (a1^N aN† + a1†^N aN)`.
//!
//! The crate covers the exact Fock-space propagation, the classical
//! trajectories of the same model, a semiclassical ensemble of noisy
//! classical trajectories, and closed-form approximations used to check them.

pub mod analytic;
pub mod classical;
pub mod elliptic;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod fock;
pub mod observables;
pub mod ode;
pub mod quantum;
pub mod tridiag;
pub mod util;

pub use error::{Error, Result};
pub use fock::{CoherentInput, ComplexAmplitude, Mode, ModelSpec, TwoModeFockState};
pub use observables::{fano, PhotonMoments};
