//! Photon-pair analysis of polarization-squeezed light.
//!
//! The crate is organized along the experiment's data flow:
//!
//! * [`forward`] models the beam (coherent H field plus V squeezed vacuum)
//!   and produces the two-photon density matrix versus arrival-time delay.
//! * [`measurement`] describes the waveplate tomography: Jones matrices,
//!   the 10-outcome POVM, detector efficiencies and accidental coincidences.
//! * [`simulator`] draws Poisson coincidence counts for each setting.
//! * [`reconstruction`] fits a permutation-invariant state to counts by
//!   weighted maximum likelihood and bootstraps its uncertainty.
//! * [`state`] holds the density-matrix type and entanglement measures.
//!
//! Heavy batch work goes through [`exec::Execution`], which is rayon-backed
//! when the `parallel` feature is enabled.

pub mod error;
pub mod exec;
pub mod forward;
pub mod measurement;
mod optim;
pub mod quad;
pub mod reconstruction;
pub mod rng;
pub mod simulator;
pub mod state;

pub use error::{Error, Result};
pub use exec::Execution;
pub use forward::{CorrelationTensor, FieldMoments, SourceParams};
pub use measurement::{CalibrationData, MeasurementSetting};
pub use reconstruction::{CholeskyParams, FitResult};
pub use simulator::CountRecord;
pub use state::{Basis, TwoPhotonState};
