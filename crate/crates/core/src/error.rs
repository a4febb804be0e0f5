use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    /// Both trigonometric moments of the detector angle vanish.
    #[error("detector noise is fully depolarizing (F_c = F_s = 0); no preferred angle exists")]
    DegenerateNoise,

    #[error("detection probability {t} is outside [{t_min}, {t_max}]")]
    OutOfRange { t: f64, t_min: f64, t_max: f64 },

    #[error("Blahut-Arimoto did not converge in {iterations} iterations (bracket {bracket_bits:.3e} bits)")]
    Convergence { iterations: usize, bracket_bits: f64 },

    #[error(
        "optimality certificate failed: grid slack {slack_bits:.3e} bits, support deviation \
         {support_deviation_bits:.3e} bits (tolerance {tolerance_bits:.1e}, capacity {capacity_bits:.9} bits, M = {support_size})"
    )]
    Certificate {
        capacity_bits: f64,
        slack_bits: f64,
        support_deviation_bits: f64,
        tolerance_bits: f64,
        support_size: usize,
    },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
