//! Quasi-periodic frequency-domain scattering for diffraction gratings and
//! stratified acoustic waveguides: modal bases and thresholds, layered Green
//! function application, a finite-difference forward solver with exact
//! discrete radiation closures, scattering-amplitude extraction and audits,
//! rational continuation of amplitudes in frequency, and Dirichlet-to-Neumann
//! maps assembled directly, from modal data, or synthesized in time.

pub mod blocktri;
pub mod continuation;
pub mod dtn;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod green;
pub mod grid;
pub mod scatdata;
pub mod scenarios;
pub mod spectral;
pub mod timedomain;

pub use error::{Error, Result};
