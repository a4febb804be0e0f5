//! Reference curves for the noiseless channel: the large-`N` capacity
//! asymptote, a lower bound from an analog (mixture) input, and a dual upper
//! bound from a fixed output distribution.
//!
//! The mixture input puts mass `Q` on each of `θ = 0` and `θ = π/2` and
//! spreads `1 − 2Q` uniformly over the angle. A uniform angle induces the
//! arcsine law on `t = cos²θ`, whose output marginal is
//! `C(N,n)·B(n+½, N−n+½)/π`. The dual bound replaces the two end entries of
//! that marginal by a heavier weight `R` and renormalizes; the maximum over
//! `t` of the relative entropy of a channel row against it bounds the
//! capacity from above.

use std::f64::consts::{E, FRAC_PI_2, LN_2, PI};

use serde::Serialize;

use crate::channel::{t_bounds, BinomialChannel, DetectorNoiseModel};
use crate::numeric::{golden_section_max, linspace, ln_beta, ln_choose, ln_gamma, CompositeGaussLegendre};
use crate::{Error, Result};

/// Upper end of the endpoint-mass search; `Q` itself must stay below ½.
const MAX_ENDPOINT_MASS: f64 = 0.5 - 1e-9;
const Q_SEARCH_TOL: f64 = 1e-6;
const DUAL_REFINE_TOL: f64 = 1e-10;

pub const DEFAULT_QUAD_POINTS: usize = 512;
pub const DEFAULT_DUAL_GRID: usize = 4001;

/// `½·log₂(Nπ / 2e)`. Negative for `N ≤ 1`.
pub fn asymptotic_capacity(photons: u32) -> f64 {
    0.5 * (f64::from(photons) * PI / (2.0 * E)).log2()
}

/// `Γ(N+½) / (√π·Γ(N+1))`, the probability that a uniform-angle input
/// yields a zero count.
pub fn endpoint_coefficient(photons: u32) -> f64 {
    let n = f64::from(photons);
    (ln_gamma(n + 0.5) - ln_gamma(n + 1.0) - 0.5 * PI.ln()).exp()
}

/// `√(2e / (Nπ))`.
pub fn dual_endpoint_weight(photons: u32) -> f64 {
    (2.0 * E / (f64::from(photons) * PI)).sqrt()
}

/// `ln[C(N,n)·B(n+½, N−n+½)/π]`: the arcsine (uniform-angle) output law.
fn ln_arcsine_output(photons: u32, n: u32) -> f64 {
    let k = f64::from(n);
    let m = f64::from(photons - n);
    ln_choose(photons, n) + ln_beta(k + 0.5, m + 0.5) - PI.ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualOutputDistribution {
    #[serde(rename = "N")]
    pub photons: u32,
    pub probs: Vec<f64>,
    pub q: f64,
    pub r: f64,
}

pub fn dual_output_distribution(photons: u32) -> Result<DualOutputDistribution> {
    if photons == 0 {
        return Err(Error::Domain {
            name: "N",
            value: 0.0,
            domain: "N ≥ 1",
        });
    }
    let q = endpoint_coefficient(photons);
    let r = dual_endpoint_weight(photons);
    let ln_norm = (1.0 + 2.0 * (r - q)).ln();
    let probs = (0..=photons)
        .map(|n| {
            if n == 0 || n == photons {
                r / (1.0 + 2.0 * (r - q))
            } else {
                (ln_arcsine_output(photons, n) - ln_norm).exp()
            }
        })
        .collect();
    Ok(DualOutputDistribution {
        photons,
        probs,
        q,
        r,
    })
}

/// `max_t D(P(·|t) ‖ P_y^U)` over `[t_min, t_max]`, in bits.
pub fn upper_bound_iu(photons: u32, noise: &DetectorNoiseModel, grid_points: usize) -> Result<f64> {
    let dual = dual_output_distribution(photons)?;
    let channel = BinomialChannel::new(photons)?;
    let (lo, hi) = t_bounds(noise)?;
    let (lo, hi) = (lo.value(), hi.value());
    let ln_dual: Vec<f64> = dual.probs.iter().map(|q| q.ln()).collect();
    let mut row = vec![0.0; channel.outputs()];
    let mut divergence = |t: f64| {
        channel.fill_row(t, &mut row);
        row.iter()
            .zip(&ln_dual)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, lq)| p * (p.ln() - lq))
            .sum::<f64>()
    };
    if hi - lo <= 1e-12 {
        return Ok(divergence(lo) / LN_2);
    }

    let grid = linspace(lo, hi, grid_points.max(2001));
    let values: Vec<f64> = grid.iter().map(|&t| divergence(t)).collect();
    let mut best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let last = grid.len() - 1;
    for k in 0..=last {
        let left = if k == 0 { f64::NEG_INFINITY } else { values[k - 1] };
        let right = if k == last { f64::NEG_INFINITY } else { values[k + 1] };
        if values[k] >= left && values[k] >= right {
            let a = grid[k.saturating_sub(1)];
            let b = grid[(k + 1).min(last)];
            let (_, v) = golden_section_max(&mut divergence, a, b, DUAL_REFINE_TOL);
            best = best.max(v);
        }
    }
    Ok(best / LN_2)
}

/// Mixture-input information with fixed endpoint mass `q`, given the
/// precomputed average row entropy of the arcsine part.
fn mixture_information_bits(photons: u32, q: f64, arcsine_output: &[f64], arcsine_entropy: f64) -> f64 {
    let last = photons as usize;
    let output_entropy: f64 = arcsine_output
        .iter()
        .enumerate()
        .map(|(n, a)| {
            let mut p = (1.0 - 2.0 * q) * a;
            if n == 0 {
                p += q;
            }
            if n == last {
                p += q;
            }
            if p > 0.0 {
                -p * p.log2()
            } else {
                0.0
            }
        })
        .sum();
    output_entropy - (1.0 - 2.0 * q) * arcsine_entropy
}

/// Average of the binomial row entropy (bits) under a uniform angle on
/// `(0, π/2)`, by composite Gauss–Legendre quadrature in the angle.
fn arcsine_row_entropy(channel: &BinomialChannel, quad_points: usize) -> f64 {
    let rule = CompositeGaussLegendre::with_total_nodes(0.0, FRAC_PI_2, quad_points);
    let mut row = vec![0.0; channel.outputs()];
    let integral = rule.integrate(|theta| {
        let c = theta.cos();
        channel.fill_row(c * c, &mut row);
        row.iter().filter(|p| **p > 0.0).map(|p| -p * p.log2()).sum()
    });
    integral / FRAC_PI_2
}

struct MixtureInput {
    photons: u32,
    arcsine_output: Vec<f64>,
    arcsine_entropy: f64,
}

impl MixtureInput {
    fn new(photons: u32, quad_points: usize) -> Result<Self> {
        let channel = BinomialChannel::new(photons)?;
        Ok(Self {
            photons,
            arcsine_output: (0..=photons)
                .map(|n| ln_arcsine_output(photons, n).exp())
                .collect(),
            arcsine_entropy: arcsine_row_entropy(&channel, quad_points),
        })
    }

    fn information(&self, q: f64) -> f64 {
        mixture_information_bits(self.photons, q, &self.arcsine_output, self.arcsine_entropy)
    }
}

fn require_noiseless(noise: &DetectorNoiseModel) -> Result<()> {
    if noise.is_deterministic() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "the mixture lower bound is defined for an aligned detector, got {} noise with a = {}",
            noise.kind(),
            noise.max_angle()
        )))
    }
}

/// Information of the mixture input with endpoint mass `q` in `[0, ½]`.
pub fn mixture_information(
    photons: u32,
    noise: &DetectorNoiseModel,
    q: f64,
    quad_points: usize,
) -> Result<f64> {
    require_noiseless(noise)?;
    if !(0.0..=0.5).contains(&q) {
        return Err(Error::Domain {
            name: "Q",
            value: q,
            domain: "[0, 0.5]",
        });
    }
    Ok(MixtureInput::new(photons, quad_points)?.information(q))
}

/// Lower bound from the best mixture input; returns `(bits, q_star)`.
pub fn lower_bound_il(
    photons: u32,
    noise: &DetectorNoiseModel,
    quad_points: usize,
) -> Result<(f64, f64)> {
    require_noiseless(noise)?;
    let mixture = MixtureInput::new(photons, quad_points)?;
    let (q, bits) = golden_section_max(|q| mixture.information(q), 0.0, MAX_ENDPOINT_MASS, Q_SEARCH_TOL);
    Ok((bits, q))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    #[serde(rename = "N")]
    pub photons: u32,
    pub c_infinity_bits: f64,
    pub i_lower_bits: f64,
    pub i_upper_bits: f64,
    pub q_star: f64,
}

/// All three reference quantities for the aligned detector.
pub fn bounds_report(photons: u32, quad_points: usize, dual_grid: usize) -> Result<BoundsReport> {
    let noise = DetectorNoiseModel::Deterministic;
    let (i_lower_bits, q_star) = lower_bound_il(photons, &noise, quad_points)?;
    Ok(BoundsReport {
        photons,
        c_infinity_bits: asymptotic_capacity(photons),
        i_lower_bits,
        i_upper_bits: upper_bound_iu(photons, &noise, dual_grid)?,
        q_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::{mutual_information, InputDistribution};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const DET: DetectorNoiseModel = DetectorNoiseModel::Deterministic;

    #[test]
    fn asymptote_values() {
        // 0.5·log2(Nπ/2e), evaluated independently
        for (n, want) in [(1u32, -0.395_599_f64), (8, 1.104_401), (63, 2.593_041)] {
            let direct = 0.5 * ((n as f64) * std::f64::consts::PI / (2.0 * std::f64::consts::E)).log2();
            assert_abs_diff_eq!(asymptotic_capacity(n), direct, epsilon = 1e-15);
            assert_abs_diff_eq!(asymptotic_capacity(n), want, epsilon = 1e-6);
        }
    }

    #[test]
    fn dual_distribution_small_cases() {
        let d = dual_output_distribution(1).unwrap();
        assert_abs_diff_eq!(d.q, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.r, 1.315_489_246_958_914, epsilon = 1e-12);
        assert_abs_diff_eq!(d.probs[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d.probs[1], 0.5, epsilon = 1e-12);

        // N=2, interior numerator C(2,1)·B(1.5,1.5)/π = 1/4
        let d = dual_output_distribution(2).unwrap();
        let scale = 1.0 + 2.0 * (d.r - d.q);
        assert_abs_diff_eq!(d.probs[1] * scale, 0.25, epsilon = 1e-14);
        assert!(dual_output_distribution(0).is_err());
    }

    #[test]
    fn dual_distribution_normalized_to_large_n() {
        for n in [1, 2, 3, 10, 100, 513, 1024] {
            let d = dual_output_distribution(n).unwrap();
            let total: f64 = d.probs.iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
            assert!(d.probs.iter().all(|p| *p > 0.0));
        }
    }

    #[test]
    fn endpoint_coefficient_identity() {
        for n in [1u32, 2, 7, 50, 300] {
            let q = endpoint_coefficient(n);
            let lhs = q * PI.sqrt() * ln_gamma(f64::from(n) + 1.0).exp();
            let rhs = ln_gamma(f64::from(n) + 0.5).exp();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
        }
    }

    #[test]
    fn arcsine_marginal_matches_quadrature() {
        // The closed-form marginal against direct angle quadrature.
        let n = 9;
        let channel = BinomialChannel::new(n).unwrap();
        let rule = CompositeGaussLegendre::with_total_nodes(0.0, FRAC_PI_2, 1024);
        let mut acc = [0.0; 10];
        for (theta, w) in rule.nodes() {
            let row = channel.row(theta.cos().powi(2));
            for (a, r) in acc.iter_mut().zip(row) {
                *a += w * r / FRAC_PI_2;
            }
        }
        for (k, a) in acc.iter().enumerate() {
            assert_abs_diff_eq!(ln_arcsine_output(n, k as u32).exp(), *a, epsilon = 1e-9);
        }
    }

    #[test]
    fn mixture_information_limits() {
        let near_half = mixture_information(1, &DET, 0.49, DEFAULT_QUAD_POINTS).unwrap();
        assert!(near_half <= 1.0);
        let closer = mixture_information(1, &DET, 0.4999, DEFAULT_QUAD_POINTS).unwrap();
        assert!(closer > near_half);
        assert_abs_diff_eq!(mixture_information(1, &DET, 0.5, 64).unwrap(), 1.0, epsilon = 1e-15);
        let (il, q) = lower_bound_il(1, &DET, DEFAULT_QUAD_POINTS).unwrap();
        assert!(q < 0.5 && q > 0.499);
        assert!(il < 1.0 && il > 0.999);
    }

    #[test]
    fn arcsine_input_matches_discretized_oracle() {
        // Q = 0: uniform angle. Oracle: 10^4 equal masses at angle midpoints.
        let n = 4;
        let bound = mixture_information(n, &DET, 0.0, DEFAULT_QUAD_POINTS).unwrap();
        let k = 10_000;
        let mut t: Vec<f64> = (0..k)
            .map(|i| ((i as f64 + 0.5) * FRAC_PI_2 / k as f64).cos().powi(2))
            .collect();
        t.reverse();
        let d = InputDistribution::uniform(t).unwrap();
        let oracle = mutual_information(&d, n).unwrap();
        assert_abs_diff_eq!(bound, oracle, epsilon = 1e-4);
    }

    #[test]
    fn quadrature_is_converged() {
        for n in [1u32, 8, 63] {
            let (a, _) = lower_bound_il(n, &DET, 512).unwrap();
            let (b, _) = lower_bound_il(n, &DET, 1024).unwrap();
            assert!((a - b).abs() < 1e-6, "N={n}: {a} vs {b}");
        }
    }

    #[test]
    fn lower_bound_rejects_detector_noise() {
        let noise = DetectorNoiseModel::uniform(0.3).unwrap();
        assert!(matches!(lower_bound_il(4, &noise, 64), Err(Error::Unsupported(_))));
        assert!(lower_bound_il(4, &DetectorNoiseModel::uniform(0.0).unwrap(), 64).is_ok());
    }

    #[test]
    fn upper_bound_for_one_photon() {
        let iu = upper_bound_iu(1, &DET, 2001).unwrap();
        assert_abs_diff_eq!(iu, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bounds_are_ordered() {
        for n in [2u32, 5, 12, 40] {
            let r = bounds_report(n, DEFAULT_QUAD_POINTS, DEFAULT_DUAL_GRID).unwrap();
            assert!(r.c_infinity_bits < r.i_lower_bits);
            assert!(r.i_lower_bits <= r.i_upper_bits + 1e-9);
            assert!((0.0..0.5).contains(&r.q_star));
        }
    }
}
