//! Spectral Galerkin laboratory for strongly damped, non-autonomous
//! Kirchhoff wave equations with a vanishing-mass coefficient.

pub mod attractor;
pub mod energy;
pub mod error;
pub mod integrator;
pub mod model;
pub mod quadrature;
pub mod spectral;

pub use attractor::{AttractorCloud, EnsembleSpec, Sampling};
pub use energy::{EnergyLedger, EnergyParams, FeasibilityProblem, FeasibilityReport, GridSpec};
pub use error::{Error, Result};
pub use integrator::{Checkpoint, DecompositionPair, Scheme, Solver, StepConfig, Trajectory};
pub use model::{EpsilonProfile, ForcingSpec, ModelSpec, NonlinearitySpec};
pub use spectral::{Basis, Collocation, ModalField, ModalState};
