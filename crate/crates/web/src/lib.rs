//! WebAssembly bindings for the demo page in `www/`.
//!
//! Every export returns a JSON string. The `*_json` functions hold the logic
//! and are plain Rust so they can be tested natively.

use polcap::capacity::{capacity, marginal_information_density, SolverConfig};
use polcap::channel::{mean_detect_prob, optimal_angle, t_bounds};
use polcap::simulate::simulate_counts;
use polcap::{DetectorNoiseModel, PolarizationAngle, SimConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub const MAX_PHOTONS: u32 = 128;
pub const MAX_SAMPLES: usize = 2_000_000;
const MAX_CURVE_POINTS: usize = 4096;

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error(transparent)]
    Model(#[from] polcap::Error),
    #[error("{0}")]
    Input(String),
}

type Result<T> = std::result::Result<T, DemoError>;

fn noise(a: f64) -> Result<DetectorNoiseModel> {
    if a == 0.0 {
        Ok(DetectorNoiseModel::Deterministic)
    } else {
        Ok(DetectorNoiseModel::uniform(a)?)
    }
}

fn photons(n: u32) -> Result<u32> {
    if (1..=MAX_PHOTONS).contains(&n) {
        Ok(n)
    } else {
        Err(DemoError::Input(format!("N must be between 1 and {MAX_PHOTONS}")))
    }
}

fn curve_points(points: usize) -> Result<usize> {
    if (2..=MAX_CURVE_POINTS).contains(&points) {
        Ok(points)
    } else {
        Err(DemoError::Input(format!("curve needs 2 to {MAX_CURVE_POINTS} points")))
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

#[derive(Serialize)]
struct CapacityView {
    #[serde(rename = "N")]
    photons: u32,
    a: f64,
    capacity_bits: f64,
    bits_per_photon: f64,
    kkt_slack_bits: f64,
    support: Vec<f64>,
    masses: Vec<f64>,
    t_min: f64,
    t_max: f64,
    curve_t: Vec<f64>,
    /// `i(t)` in bits for the optimal input; flat at the capacity on the support.
    curve_info: Vec<f64>,
}

/// Capacity for `n` photons and uniform detector noise of width `a`, plus
/// the information density over `[t_min, t_max]` at `points` values.
pub fn capacity_json(n: u32, a: f64, points: usize) -> Result<String> {
    let n = photons(n)?;
    let points = curve_points(points)?;
    let noise = noise(a)?;
    let r = capacity(n, &noise, &SolverConfig::for_photons(n))?;
    let (lo, hi) = t_bounds(&noise)?;
    let curve_t = grid(lo.value(), hi.value(), points);
    let curve_info = curve_t
        .iter()
        .map(|&t| marginal_information_density(t, &r.distribution, n))
        .collect::<polcap::Result<_>>()?;
    Ok(to_json(&CapacityView {
        photons: n,
        a,
        capacity_bits: r.capacity_bits,
        bits_per_photon: r.bits_per_photon(),
        kkt_slack_bits: r.kkt_slack_bits,
        support: r.distribution.support().to_vec(),
        masses: r.distribution.masses().to_vec(),
        t_min: lo.value(),
        t_max: hi.value(),
        curve_t,
        curve_info,
    }))
}

#[derive(Serialize)]
struct DetectionView {
    a: f64,
    theta: Vec<f64>,
    t: Vec<f64>,
    t_min: f64,
    t_max: f64,
    theta_opt: f64,
}

/// Mean detection probability over `θ ∈ [0, π/2]` for noise width `a`.
pub fn detection_json(a: f64, points: usize) -> Result<String> {
    let points = curve_points(points)?;
    let noise = noise(a)?;
    let theta = grid(0.0, std::f64::consts::FRAC_PI_2, points);
    let t = theta
        .iter()
        .map(|&x| Ok(mean_detect_prob(PolarizationAngle::new(x)?, &noise)?.value()))
        .collect::<Result<_>>()?;
    let (lo, hi) = t_bounds(&noise)?;
    let theta_opt = if noise.is_deterministic() {
        0.0
    } else {
        optimal_angle(&noise)?.radians()
    };
    Ok(to_json(&DetectionView {
        a,
        theta,
        t,
        t_min: lo.value(),
        t_max: hi.value(),
        theta_opt,
    }))
}

/// Photon-count histogram for `samples` windows at polarization `theta`.
pub fn simulate_json(theta: f64, n: u32, a: f64, samples: usize, seed: u64) -> Result<String> {
    let n = photons(n)?;
    if !(1..=MAX_SAMPLES).contains(&samples) {
        return Err(DemoError::Input(format!("samples must be between 1 and {MAX_SAMPLES}")));
    }
    let cfg = SimConfig::new(n, noise(a)?, samples, seed);
    Ok(to_json(&simulate_counts(PolarizationAngle::new(theta)?, &cfg)?))
}

fn js<T>(r: Result<T>) -> std::result::Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = solveCapacity)]
pub fn solve_capacity(n: u32, a: f64, points: usize) -> std::result::Result<String, JsError> {
    js(capacity_json(n, a, points))
}

#[wasm_bindgen(js_name = detectionCurve)]
pub fn detection_curve(a: f64, points: usize) -> std::result::Result<String, JsError> {
    js(detection_json(a, points))
}

#[wasm_bindgen(js_name = simulateCounts)]
pub fn simulate(
    theta: f64,
    n: u32,
    a: f64,
    samples: usize,
    seed: u64,
) -> std::result::Result<String, JsError> {
    js(simulate_json(theta, n, a, samples, seed))
}
