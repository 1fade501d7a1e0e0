//! Compartment models with delayed removal processes.
//!
//! A removal channel whose waiting time follows the delay exponential
//! distribution produces delay terms in the governing equations of a
//! compartment model. This crate implements that machinery end to end:
//!
//! - [`dexp`]: the delay exponential function, its density, moments,
//!   transforms, Lambert W branches and characteristic roots;
//! - [`sampler`]: reproducible random streams and waiting-time draws by
//!   numerical inversion of the survival function;
//! - [`model`]: a declarative description of compartments, Markovian rate
//!   laws and delayed removal, with pharmacokinetic and SIS presets;
//! - [`ssa`]: exact event-driven stochastic simulation with per-particle
//!   delay clocks and Gillespie handling of the Markovian channels;
//! - [`dde`]: the matching deterministic delay-differential system, a
//!   method-of-steps integrator and steady-state analysis.

mod dd;
pub mod dde;
pub mod dexp;
pub mod model;
pub mod sampler;
pub mod ssa;

pub use dde::{DdeError, DdeSolution, DdeSystem, SteadyStateFailure};
pub use dexp::{Branch, CharacteristicRoots, DexpError, DexpParams};
pub use model::{CompartmentId, DelayProcess, Diagnostic, MarkovianProcess, ModelError, ModelSpec, RateLaw, Source, Target};
pub use sampler::{DexpQuantileTable, RngStream, SamplerError};
pub use ssa::{EnsembleSummary, EventKind, EventRecord, SsaError, SystemState, Trajectory};
