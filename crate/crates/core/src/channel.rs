//! The physical channel.
//!
//! A photon polarized at `θ` passes a polarizer at angle `φ` with
//! probability `cos²(θ − φ)`. The polarizer angle `Φ` is random on `[0, a]`;
//! averaging over it gives the per-photon detection probability
//!
//! ```text
//! t(θ) = ½ (1 + cos(2θ)·E[cos 2Φ] + sin(2θ)·E[sin 2Φ])
//! ```
//!
//! and `N` independent photons give a binomial count. `t(θ)` has a single
//! maximum on `[0, π/2]`, so the usable inputs form the interval
//! `[t_min, t_max]` and the channel can be described entirely in terms of `t`.

use std::f64::consts::FRAC_PI_2;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::numeric::{adaptive_simpson, bisect_decreasing, ln_choose};
use crate::{Error, Result};

/// Slack allowed when validating angles and probabilities that came out of
/// floating-point arithmetic.
const ROUNDING_SLACK: f64 = 1e-12;

/// Below this half-width the uniform-noise moments switch to their series.
const SMALL_ANGLE: f64 = 1e-4;

const MOMENT_QUADRATURE_TOL: f64 = 1e-10;
const NORMALIZATION_TOL: f64 = 1e-8;

/// An angle in `[0, π/2]` radians.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct PolarizationAngle(f64);

impl PolarizationAngle {
    pub const HORIZONTAL: Self = Self(0.0);
    pub const VERTICAL: Self = Self(FRAC_PI_2);

    pub fn new(radians: f64) -> Result<Self> {
        if !(-ROUNDING_SLACK..=FRAC_PI_2 + ROUNDING_SLACK).contains(&radians) {
            return Err(Error::Domain {
                name: "angle",
                value: radians,
                domain: "[0, π/2]",
            });
        }
        Ok(Self(radians.clamp(0.0, FRAC_PI_2)))
    }

    pub fn from_degrees(degrees: f64) -> Result<Self> {
        Self::new(degrees.to_radians())
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }
}

/// Per-photon detection probability `t ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct DetectionProbability(f64);

impl DetectionProbability {
    pub fn new(t: f64) -> Result<Self> {
        if !(-ROUNDING_SLACK..=1.0 + ROUNDING_SLACK).contains(&t) {
            return Err(Error::Domain {
                name: "t",
                value: t,
                domain: "[0, 1]",
            });
        }
        Ok(Self(t.clamp(0.0, 1.0)))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `E[cos 2Φ]` and `E[sin 2Φ]` for the detector angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseMoments {
    pub mean_cos2: f64,
    pub mean_sin2: f64,
}

impl NoiseMoments {
    pub const ALIGNED: Self = Self {
        mean_cos2: 1.0,
        mean_sin2: 0.0,
    };

    /// Length of the moment vector; `2·t_max − 1`.
    pub fn magnitude(&self) -> f64 {
        self.mean_cos2.hypot(self.mean_sin2)
    }

    pub fn is_degenerate(&self) -> bool {
        self.mean_cos2 == 0.0 && self.mean_sin2 == 0.0
    }

    /// Mean detection probability at polarization angle `theta` (radians).
    #[inline]
    pub fn detection_probability(&self, theta: f64) -> f64 {
        let (s, c) = (2.0 * theta).sin_cos();
        (0.5 * (1.0 + c * self.mean_cos2 + s * self.mean_sin2)).clamp(0.0, 1.0)
    }
}

/// Piecewise-linear density for the detector angle, given at increasing nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    phi: Vec<f64>,
    density: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(phi: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if phi.len() != density.len() {
            return Err(Error::Validation(format!(
                "density table has {} nodes but {} values",
                phi.len(),
                density.len()
            )));
        }
        if phi.len() < 2 {
            return Err(Error::Validation(
                "density table needs at least two nodes".into(),
            ));
        }
        if phi.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(
                "density table nodes must be strictly increasing".into(),
            ));
        }
        let (first, last) = (phi[0], phi[phi.len() - 1]);
        if first < 0.0 || last > FRAC_PI_2 + ROUNDING_SLACK {
            return Err(Error::Validation(format!(
                "density table spans [{first}, {last}], must lie within [0, π/2]"
            )));
        }
        if let Some(bad) = density.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::Validation(format!(
                "density values must be finite and nonnegative, found {bad}"
            )));
        }

        let mut cumulative = Vec::with_capacity(phi.len());
        cumulative.push(0.0);
        for i in 1..phi.len() {
            let seg = 0.5 * (density[i - 1] + density[i]) * (phi[i] - phi[i - 1]);
            cumulative.push(cumulative[i - 1] + seg);
        }
        let table = Self {
            phi,
            density,
            cumulative,
        };
        let mass = table.integrate(|_| 1.0);
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Validation(format!(
                "density integrates to {mass:.12}, expected 1 ± {NORMALIZATION_TOL:e}"
            )));
        }
        Ok(table)
    }

    /// Reads a two-column CSV (`phi_radians, density`) with a header row.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut phi = Vec::new();
        let mut density = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::Validation(format!(
                    "row {}: expected 2 columns, found {}",
                    line + 2,
                    record.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| {
                    Error::Validation(format!("row {}: cannot parse {s:?}: {e}", line + 2))
                })
            };
            phi.push(parse(&record[0])?);
            density.push(parse(&record[1])?);
        }
        Self::new(phi, density)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    /// Uniform density on `[0, a]` sampled at `nodes` points.
    pub fn uniform(a: f64, nodes: usize) -> Result<Self> {
        let phi = crate::numeric::linspace(0.0, a, nodes.max(2));
        let density = vec![1.0 / a; phi.len()];
        Self::new(phi, density)
    }

    pub fn support_end(&self) -> f64 {
        self.phi[self.phi.len() - 1]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.phi.iter().copied().zip(self.density.iter().copied())
    }

    pub fn density_at(&self, phi: f64) -> f64 {
        if phi < self.phi[0] || phi > self.support_end() {
            return 0.0;
        }
        let i = self.phi.partition_point(|&p| p <= phi).clamp(1, self.phi.len() - 1);
        let (x0, x1) = (self.phi[i - 1], self.phi[i]);
        let (y0, y1) = (self.density[i - 1], self.density[i]);
        y0 + (y1 - y0) * (phi - x0) / (x1 - x0)
    }

    /// `∫ f(φ)·g(φ) dφ`, adaptive Simpson within each linear segment.
    fn integrate<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        let segments = (self.phi.len() - 1) as f64;
        self.phi
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| {
                let slope = (y[1] - y[0]) / (x[1] - x[0]);
                let f = |p: f64| (y[0] + slope * (p - x[0])) * g(p);
                adaptive_simpson(&f, x[0], x[1], MOMENT_QUADRATURE_TOL / segments)
            })
            .sum()
    }

    /// Inverse-CDF draw from the piecewise-linear density.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = self.cumulative[self.cumulative.len() - 1];
        let target = rng.gen::<f64>() * total;
        let i = self
            .cumulative
            .partition_point(|&c| c <= target)
            .clamp(1, self.phi.len() - 1);
        let (x0, x1) = (self.phi[i - 1], self.phi[i]);
        let (y0, y1) = (self.density[i - 1], self.density[i]);
        let r = target - self.cumulative[i - 1];
        let slope = (y1 - y0) / (x1 - x0);
        // Solve y0·dx + slope·dx²/2 = r on the segment.
        let dx = if slope.abs() < 1e-14 {
            if y0 > 0.0 {
                r / y0
            } else {
                0.0
            }
        } else {
            let disc = (y0 * y0 + 2.0 * slope * r).max(0.0);
            2.0 * r / (y0 + disc.sqrt())
        };
        (x0 + dx).clamp(x0, x1)
    }
}

/// Distribution of the detector polarizer angle `Φ` on `[0, a]`.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorNoiseModel {
    /// `Φ ≡ 0`; same as `Uniform { a: 0 }`.
    Deterministic,
    Uniform { a: f64 },
    Tabulated(TabulatedDensity),
}

impl DetectorNoiseModel {
    pub fn uniform(a: f64) -> Result<Self> {
        let noise = Self::Uniform { a };
        noise.validate()?;
        Ok(noise)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Uniform { a } if !(0.0..=FRAC_PI_2 + ROUNDING_SLACK).contains(a) => {
                Err(Error::Domain {
                    name: "a",
                    value: *a,
                    domain: "[0, π/2]",
                })
            }
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Deterministic => "deterministic",
            Self::Uniform { .. } => "uniform",
            Self::Tabulated(_) => "tabulated",
        }
    }

    /// Upper end `a` of the support of `Φ`.
    pub fn max_angle(&self) -> f64 {
        match self {
            Self::Deterministic => 0.0,
            Self::Uniform { a } => *a,
            Self::Tabulated(t) => t.support_end(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Self::Deterministic) || matches!(self, Self::Uniform { a } if *a == 0.0)
    }

    pub fn moments(&self) -> Result<NoiseMoments> {
        self.validate()?;
        Ok(match self {
            Self::Deterministic => NoiseMoments::ALIGNED,
            Self::Uniform { a } => uniform_moments(a.min(FRAC_PI_2)),
            Self::Tabulated(table) => NoiseMoments {
                mean_cos2: table.integrate(|p| (2.0 * p).cos()),
                mean_sin2: table.integrate(|p| (2.0 * p).sin()),
            },
        })
    }

    /// Draws one detector angle.
    pub fn sample_angle<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Deterministic => 0.0,
            Self::Uniform { a } => a * rng.gen::<f64>(),
            Self::Tabulated(table) => table.sample(rng),
        }
    }
}

impl Serialize for DetectorNoiseModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("DetectorNoiseModel", 2)?;
        s.serialize_field("kind", self.kind())?;
        s.serialize_field("a", &self.max_angle())?;
        s.end()
    }
}

fn uniform_moments(a: f64) -> NoiseMoments {
    let x = 2.0 * a;
    if a < SMALL_ANGLE {
        let x2 = x * x;
        NoiseMoments {
            mean_cos2: 1.0 - x2 / 6.0 + x2 * x2 / 120.0,
            mean_sin2: x * (0.5 - x2 / 24.0 + x2 * x2 / 720.0),
        }
    } else {
        NoiseMoments {
            mean_cos2: x.sin() / x,
            mean_sin2: (1.0 - x.cos()) / x,
        }
    }
}

/// `cos²(θ − φ)`: detection probability through a polarizer at `phi`.
pub fn detect_prob_conditional(
    theta: PolarizationAngle,
    phi: PolarizationAngle,
) -> DetectionProbability {
    let c = (theta.0 - phi.0).cos();
    DetectionProbability((c * c).min(1.0))
}

pub fn noise_moments(noise: &DetectorNoiseModel) -> Result<NoiseMoments> {
    noise.moments()
}

/// Detection probability averaged over the detector angle.
pub fn mean_detect_prob(
    theta: PolarizationAngle,
    noise: &DetectorNoiseModel,
) -> Result<DetectionProbability> {
    Ok(DetectionProbability(
        noise.moments()?.detection_probability(theta.0),
    ))
}

/// The polarization angle maximizing the mean detection probability.
pub fn optimal_angle(noise: &DetectorNoiseModel) -> Result<PolarizationAngle> {
    optimal_angle_for(&noise.moments()?)
}

fn optimal_angle_for(m: &NoiseMoments) -> Result<PolarizationAngle> {
    if m.is_degenerate() {
        return Err(Error::DegenerateNoise);
    }
    let theta = 0.5 * m.mean_sin2.atan2(m.mean_cos2);
    PolarizationAngle::new(theta)
}

/// `(t_min, t_max)`: the range of detection probabilities reachable by
/// choosing the polarization angle.
pub fn t_bounds(
    noise: &DetectorNoiseModel,
) -> Result<(DetectionProbability, DetectionProbability)> {
    let m = noise.moments()?;
    Ok(t_bounds_for(&m))
}

fn t_bounds_for(m: &NoiseMoments) -> (DetectionProbability, DetectionProbability) {
    let t_max = 0.5 * (1.0 + m.magnitude());
    let t_min = (0.5 * (1.0 + m.mean_cos2)).min(0.5 * (1.0 - m.mean_cos2));
    (
        DetectionProbability(t_min.clamp(0.0, 1.0)),
        DetectionProbability(t_max.clamp(0.0, 1.0)),
    )
}

/// Inverse of [`mean_detect_prob`] on the monotone branch `[θ°, π/2]`.
///
/// When `E[cos 2Φ] < 0` the values below `t(π/2)` are only reachable on
/// `[0, θ°]`, and that branch is used instead.
pub fn theta_from_t(
    t: DetectionProbability,
    noise: &DetectorNoiseModel,
) -> Result<PolarizationAngle> {
    let m = noise.moments()?;
    theta_from_t_for(t.0, &m)
}

pub(crate) fn theta_from_t_for(t: f64, m: &NoiseMoments) -> Result<PolarizationAngle> {
    let (lo, hi) = t_bounds_for(m);
    if t < lo.0 - ROUNDING_SLACK || t > hi.0 + ROUNDING_SLACK {
        return Err(Error::OutOfRange {
            t,
            t_min: lo.0,
            t_max: hi.0,
        });
    }
    if m.is_degenerate() {
        return Ok(PolarizationAngle::VERTICAL);
    }
    let t = t.clamp(lo.0, hi.0);
    let peak = optimal_angle_for(m)?.0;
    let p = |theta: f64| m.detection_probability(theta);
    let theta = if t >= p(FRAC_PI_2) || p(0.0) >= p(FRAC_PI_2) {
        bisect_decreasing(p, t, peak, FRAC_PI_2, 1e-13)
    } else {
        bisect_decreasing(|x| -p(x), -t, 0.0, peak, 1e-13)
    };
    PolarizationAngle::new(theta)
}

/// Binomial count distribution for `n` photons, one row of the channel matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionRow {
    pub probs: Vec<f64>,
}

impl TransitionRow {
    pub fn photons(&self) -> u32 {
        (self.probs.len() - 1) as u32
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }
}

/// The `N`-photon binomial channel with its log-binomial coefficients cached.
#[derive(Debug, Clone)]
pub struct BinomialChannel {
    photons: u32,
    ln_choose: Vec<f64>,
}

impl BinomialChannel {
    pub fn new(photons: u32) -> Result<Self> {
        if photons == 0 {
            return Err(Error::Domain {
                name: "N",
                value: 0.0,
                domain: "N ≥ 1",
            });
        }
        Ok(Self {
            photons,
            ln_choose: (0..=photons).map(|k| ln_choose(photons, k)).collect(),
        })
    }

    pub fn photons(&self) -> u32 {
        self.photons
    }

    /// Number of output symbols, `N + 1`.
    pub fn outputs(&self) -> usize {
        self.photons as usize + 1
    }

    /// Writes `P(n | t)` for `n = 0..=N` into `out`.
    pub fn fill_row(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.outputs());
        if t <= 0.0 || t >= 1.0 {
            out.fill(0.0);
            let hit = if t <= 0.0 { 0 } else { self.photons as usize };
            out[hit] = 1.0;
            return;
        }
        let ln_t = t.ln();
        let ln_1mt = (-t).ln_1p();
        let n = f64::from(self.photons);
        for (k, (slot, lc)) in out.iter_mut().zip(&self.ln_choose).enumerate() {
            let k = k as f64;
            *slot = (lc + k * ln_t + (n - k) * ln_1mt).exp();
        }
    }

    pub fn row(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs()];
        self.fill_row(t, &mut out);
        out
    }
}

pub fn binomial_row(photons: u32, t: DetectionProbability) -> Result<TransitionRow> {
    let channel = BinomialChannel::new(photons)?;
    Ok(TransitionRow {
        probs: channel.row(t.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn angle(x: f64) -> PolarizationAngle {
        PolarizationAngle::new(x).unwrap()
    }

    fn prob(x: f64) -> DetectionProbability {
        DetectionProbability::new(x).unwrap()
    }

    #[test]
    fn conditional_detection_special_angles() {
        let z = angle(0.0);
        assert_abs_diff_eq!(detect_prob_conditional(z, z).value(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            detect_prob_conditional(angle(FRAC_PI_2), z).value(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            detect_prob_conditional(angle(FRAC_PI_4), z).value(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn angle_domain_errors() {
        assert!(matches!(
            PolarizationAngle::new(-0.1),
            Err(Error::Domain { .. })
        ));
        assert!(PolarizationAngle::new(2.0).is_err());
        assert!(DetectorNoiseModel::uniform(1.6).is_err());
        assert!(DetectionProbability::new(1.01).is_err());
    }

    #[test]
    fn moments_examples() {
        let m = noise_moments(&DetectorNoiseModel::Deterministic).unwrap();
        assert_eq!(m, NoiseMoments::ALIGNED);

        // uniform a=π/4: sin(π/2)/(π/2) = (1 - cos(π/2))/(π/2) = 2/π
        let m = noise_moments(&DetectorNoiseModel::uniform(FRAC_PI_4).unwrap()).unwrap();
        assert_abs_diff_eq!(m.mean_cos2, 2.0 / PI, epsilon = 1e-15);
        assert_abs_diff_eq!(m.mean_sin2, 2.0 / PI, epsilon = 1e-15);

        let m = noise_moments(&DetectorNoiseModel::uniform(FRAC_PI_2).unwrap()).unwrap();
        assert_abs_diff_eq!(m.mean_cos2, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.mean_sin2, 2.0 / PI, epsilon = 1e-15);
    }

    #[test]
    fn small_angle_series_is_continuous() {
        let a = SMALL_ANGLE;
        let series = uniform_moments(a * (1.0 - 1e-9));
        let closed = uniform_moments(a * (1.0 + 1e-9));
        assert_abs_diff_eq!(series.mean_cos2, closed.mean_cos2, epsilon = 1e-12);
        assert_abs_diff_eq!(series.mean_sin2, closed.mean_sin2, epsilon = 1e-12);
        assert_eq!(uniform_moments(0.0), NoiseMoments::ALIGNED);
    }

    #[test]
    fn uniform_closed_form_matches_tabulated_quadrature() {
        for i in 1..=60 {
            let a = FRAC_PI_2 * i as f64 / 60.0;
            let closed = DetectorNoiseModel::uniform(a).unwrap().moments().unwrap();
            let table = DetectorNoiseModel::Tabulated(TabulatedDensity::uniform(a, 3).unwrap());
            let quad = table.moments().unwrap();
            assert_abs_diff_eq!(closed.mean_cos2, quad.mean_cos2, epsilon = 1e-10);
            assert_abs_diff_eq!(closed.mean_sin2, quad.mean_sin2, epsilon = 1e-10);
        }
    }

    #[test]
    fn mean_detection_examples() {
        let det = DetectorNoiseModel::Deterministic;
        assert_abs_diff_eq!(mean_detect_prob(angle(0.0), &det).unwrap().value(), 1.0);
        assert_abs_diff_eq!(
            mean_detect_prob(angle(FRAC_PI_4), &det).unwrap().value(),
            0.5,
            epsilon = 1e-15
        );
        let wide = DetectorNoiseModel::uniform(FRAC_PI_2).unwrap();
        assert_abs_diff_eq!(
            mean_detect_prob(angle(0.0), &wide).unwrap().value(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn optimal_angle_examples() {
        assert_eq!(
            optimal_angle(&DetectorNoiseModel::Deterministic).unwrap().radians(),
            0.0
        );
        let q = optimal_angle(&DetectorNoiseModel::uniform(FRAC_PI_4).unwrap()).unwrap();
        assert_abs_diff_eq!(q.radians(), PI / 8.0, epsilon = 1e-15);
        let h = optimal_angle(&DetectorNoiseModel::uniform(FRAC_PI_2).unwrap()).unwrap();
        assert_abs_diff_eq!(h.radians(), FRAC_PI_4, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_noise_has_no_optimal_angle() {
        // No density on [0, π/2] has E[sin 2Φ] = 0, so exercise the moment level.
        let m = NoiseMoments {
            mean_cos2: 0.0,
            mean_sin2: 0.0,
        };
        assert!(matches!(optimal_angle_for(&m), Err(Error::DegenerateNoise)));
    }

    #[test]
    fn t_bounds_examples() {
        let (lo, hi) = t_bounds(&DetectorNoiseModel::Deterministic).unwrap();
        assert_eq!((lo.value(), hi.value()), (0.0, 1.0));

        let (lo, hi) = t_bounds(&DetectorNoiseModel::uniform(FRAC_PI_2).unwrap()).unwrap();
        assert_abs_diff_eq!(lo.value(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(hi.value(), 0.5 * (1.0 + 2.0 / PI), epsilon = 1e-15);
        assert_abs_diff_eq!(hi.value(), 0.818_309_886_183_790_7, epsilon = 1e-12);

        let (_, hi) = t_bounds(&DetectorNoiseModel::uniform(FRAC_PI_4).unwrap()).unwrap();
        assert_abs_diff_eq!(hi.value(), 0.950_158_158_078_553, epsilon = 1e-12);
    }

    #[test]
    fn t_bounds_match_uniform_closed_forms() {
        for i in 0..=200 {
            let a = FRAC_PI_2 * i as f64 / 200.0;
            let (lo, hi) = t_bounds(&DetectorNoiseModel::uniform(a).unwrap()).unwrap();
            let (want_lo, want_hi) = if a == 0.0 {
                (0.0, 1.0)
            } else {
                (
                    0.5 * (1.0 - (2.0 * a).sin() / (2.0 * a)),
                    0.5 * (1.0 + a.sin() / a),
                )
            };
            assert_abs_diff_eq!(lo.value(), want_lo, epsilon = 1e-10);
            assert_abs_diff_eq!(hi.value(), want_hi, epsilon = 1e-10);
        }
    }

    #[test]
    fn inversion_examples() {
        let det = DetectorNoiseModel::Deterministic;
        assert_abs_diff_eq!(
            theta_from_t(prob(0.5), &det).unwrap().radians(),
            FRAC_PI_4,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            theta_from_t(prob(0.75), &det).unwrap().radians(),
            PI / 6.0,
            epsilon = 1e-12
        );
        for noise in [
            det.clone(),
            DetectorNoiseModel::uniform(0.3).unwrap(),
            DetectorNoiseModel::uniform(FRAC_PI_2).unwrap(),
        ] {
            let (_, hi) = t_bounds(&noise).unwrap();
            let theta = theta_from_t(hi, &noise).unwrap();
            assert_abs_diff_eq!(
                theta.radians(),
                optimal_angle(&noise).unwrap().radians(),
                epsilon = 1e-7
            );
        }
        for i in 1..=40 {
            let noise = DetectorNoiseModel::uniform(FRAC_PI_2 * f64::from(i) / 40.0).unwrap();
            let (lo, _) = t_bounds(&noise).unwrap();
            let theta = theta_from_t(lo, &noise).unwrap();
            assert_abs_diff_eq!(theta.radians(), FRAC_PI_2, epsilon = 1e-7);
        }
        let wide = DetectorNoiseModel::uniform(FRAC_PI_2).unwrap();
        assert!(matches!(
            theta_from_t(prob(0.2), &wide),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn inversion_uses_lower_branch_when_cos_moment_is_negative() {
        // mass concentrated near φ = π/2 makes E[cos 2Φ] < 0
        let table = TabulatedDensity::new(vec![1.2, FRAC_PI_2], vec![0.0, 2.0 / (FRAC_PI_2 - 1.2)])
            .unwrap();
        let noise = DetectorNoiseModel::Tabulated(table);
        let m = noise.moments().unwrap();
        assert!(m.mean_cos2 < 0.0);
        let (lo, hi) = t_bounds(&noise).unwrap();
        for i in 0..=50 {
            let t = lo.value() + (hi.value() - lo.value()) * i as f64 / 50.0;
            let theta = theta_from_t(prob(t), &noise).unwrap();
            assert_abs_diff_eq!(m.detection_probability(theta.radians()), t, epsilon = 1e-10);
        }
    }

    #[test]
    fn binomial_examples() {
        let row = binomial_row(2, prob(0.5)).unwrap();
        for (got, want) in row.probs.iter().zip([0.25, 0.5, 0.25]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        assert_eq!(binomial_row(3, prob(0.0)).unwrap().probs, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(binomial_row(3, prob(1.0)).unwrap().probs, vec![0.0, 0.0, 0.0, 1.0]);
        assert!(binomial_row(0, prob(0.5)).is_err());
    }

    #[test]
    fn binomial_matches_product_form() {
        // naive oracle: C(n,k) by repeated multiplication, powers by powi
        let (n, t) = (20u32, 0.3f64);
        let row = binomial_row(n, prob(t)).unwrap();
        for k in 0..=n {
            let mut c = 1.0f64;
            for j in 0..k {
                c = c * f64::from(n - j) / f64::from(j + 1);
            }
            let want = c * t.powi(k as i32) * (1.0 - t).powi((n - k) as i32);
            assert_abs_diff_eq!(row.probs[k as usize], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn tabulated_validation() {
        assert!(TabulatedDensity::new(vec![0.0, 0.5], vec![1.0, 1.0]).is_err());
        assert!(TabulatedDensity::new(vec![0.0, 0.0, 0.5], vec![2.0, 2.0, 2.0]).is_err());
        assert!(TabulatedDensity::new(vec![0.0, 1.0], vec![-1.0, 3.0]).is_err());
        assert!(TabulatedDensity::new(vec![0.0, 0.5], vec![2.0, 2.0]).is_ok());
    }

    #[test]
    fn tabulated_csv() {
        let csv = "phi_radians,density\n0.0,0.0\n0.5,2.0\n1.0,2.0\n";
        // trapezoid mass: 0.5 + 1.0 = 1.5 -> not normalized
        assert!(TabulatedDensity::from_csv_reader(csv.as_bytes()).is_err());
        let csv = "phi_radians,density\n0.0,0.5\n0.5,1.0\n1.0,1.5\n";
        let t = TabulatedDensity::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(t.support_end(), 1.0);
        assert_abs_diff_eq!(t.density_at(0.25), 0.75, epsilon = 1e-15);
        assert!(TabulatedDensity::from_csv_reader("phi,density\n0.0,x\n".as_bytes()).is_err());
        assert!(TabulatedDensity::from_csv_reader("phi,density\n1.0,1\n0.5,1\n".as_bytes()).is_err());
    }

    #[test]
    fn single_maximum_and_endpoints() {
        for a in [0.0, 0.2, 0.7, 1.2, FRAC_PI_2] {
            let noise = DetectorNoiseModel::uniform(a).unwrap();
            let m = noise.moments().unwrap();
            let grid = 10_000;
            let step = FRAC_PI_2 / grid as f64;
            let (arg, _) = (0..=grid)
                .map(|i| {
                    let th = i as f64 * step;
                    (th, m.detection_probability(th))
                })
                .fold((0.0, f64::MIN), |b, x| if x.1 > b.1 { x } else { b });
            let peak = optimal_angle(&noise).unwrap().radians();
            assert!((arg - peak).abs() <= step, "a={a}: grid {arg} vs {peak}");

            // strictly decreasing on [θ°, π/2]
            let mut prev = m.detection_probability(peak);
            let k = 2000;
            for i in 1..=k {
                let th = peak + (FRAC_PI_2 - peak) * i as f64 / k as f64;
                let cur = m.detection_probability(th);
                assert!(cur < prev, "a={a} not decreasing at θ={th}");
                prev = cur;
            }

            assert_abs_diff_eq!(
                m.detection_probability(0.0),
                0.5 * (1.0 + m.mean_cos2),
                epsilon = 1e-16
            );
            assert_abs_diff_eq!(
                m.detection_probability(FRAC_PI_2),
                0.5 * (1.0 - m.mean_cos2),
                epsilon = 1e-16
            );
        }
    }

    proptest! {
        #[test]
        fn rows_are_normalized_with_correct_mean(n in 1u32..=128, t in 0.0f64..=1.0) {
            let row = binomial_row(n, prob(t)).unwrap();
            let total: f64 = row.probs.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12, "sum {}", total);
            prop_assert!(row.probs.iter().all(|p| *p >= 0.0));
            prop_assert!((row.mean() - f64::from(n) * t).abs() <= 1e-9);
        }

        #[test]
        fn inversion_round_trip(a in 0.0f64..=FRAC_PI_2, u in 0.0f64..=1.0) {
            let noise = DetectorNoiseModel::uniform(a).unwrap();
            let (lo, hi) = t_bounds(&noise).unwrap();
            let t = lo.value() + u * (hi.value() - lo.value());
            let theta = theta_from_t(prob(t), &noise).unwrap();
            let back = mean_detect_prob(theta, &noise).unwrap().value();
            prop_assert!((back - t).abs() <= 1e-10);
        }

        #[test]
        fn moments_lie_in_unit_disc(a in 0.0f64..=FRAC_PI_2) {
            let m = DetectorNoiseModel::uniform(a).unwrap().moments().unwrap();
            prop_assert!(m.magnitude() <= 1.0 + 1e-15);
        }
    }
}
