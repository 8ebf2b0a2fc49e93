//! Numerical laboratory for phase randomness in gain-switched semiconductor
//! lasers.
//!
//! * [`sde`] integrates the stochastic rate equations and estimates the phase
//!   spread σ_φ accumulated between adjacent pulses.
//! * [`interference`] gives the statistics of the normalized interference
//!   signal of two pulses: densities, thresholds, moments and sampling.
//! * [`entropy`] turns those statistics into min-entropy, statistical
//!   distances and the quantum reduction factor.
//! * [`fringefit`] recovers σ_φ and σ_s from measured fringes.
//! * [`cascade`] propagates a pulse through the on-chip interferometer cascade.
//! * [`ingest`] normalizes raw oscilloscope areas and loads histograms.

// `!(x > 0.0)` is how the validators reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod entropy;
pub mod cascade;
pub mod error;
pub mod fringefit;
pub mod ingest;
pub mod interference;
pub mod params;
pub mod quad;
pub mod rng;
pub mod sde;

pub use cascade::{CascadeConfig, DelayLine, FieldTrace, TimeGrid};
pub use entropy::{EntropyReport, GammaPoint, QrfOutcome, Regime};
pub use error::{Error, Result};
pub use fringefit::{ConventionalFit, Extrapolation, FitResult, FringeDataset, JointFitOptions};
pub use ingest::{Histogram, NormalizationRef};
pub use interference::{FringeMoments, GaussianPhaseDensity, InterferenceParams, PdfCurve, QuantumDensity, SignalDensity};
pub use params::{threshold_current, LaserParams, PumpWaveform, SimGrid};
pub use sde::{LaserState, SigmaPhiEstimate};
