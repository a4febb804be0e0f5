//! Classical capacity of a polarization-modulated single-photon channel.
//!
//! A source emits `N` unentangled photons per sample, all polarized at an
//! angle `θ`. A photon passes a (possibly misaligned) horizontal polarizer
//! with probability `t`, so the photon count is binomial in `N` and `t`.
//! This crate provides:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`channel`] | detection probability, noise moments, `[t_min, t_max]`, binomial rows |
//! | [`capacity`] | Blahut–Arimoto, support refinement, KKT certificate |
//! | [`bounds`] | asymptotic capacity, mixture lower bound, dual upper bound |
//! | [`simulate`] | per-photon Monte Carlo, threshold-noise model, plug-in MI |
//!
//! All information quantities are reported in bits per source sample
//! unless a name says otherwise.
//!
//! ```
//! use polcap::{capacity, DetectorNoiseModel, SolverConfig};
//!
//! let noise = DetectorNoiseModel::Deterministic;
//! let result = capacity::capacity(1, &noise, &SolverConfig::for_photons(1)).unwrap();
//! assert!((result.capacity_bits - 1.0).abs() < 1e-9);
//! ```

pub mod bounds;
pub mod capacity;
pub mod channel;
mod error;
pub mod numeric;
pub mod simulate;

pub use bounds::{BoundsReport, DualOutputDistribution};
pub use capacity::{
    CapacityReport, CapacityResult, InputDistribution, KktCertificate, OutputDistribution,
    SolverConfig,
};
pub use channel::{
    BinomialChannel, DetectionProbability, DetectorNoiseModel, NoiseMoments, PolarizationAngle,
    TabulatedDensity, TransitionRow,
};
pub use error::{Error, Result};
pub use simulate::{PhiRedraw, SimConfig, SimulationReport};
