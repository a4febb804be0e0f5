//! Monte Carlo checks of the channel model.
//!
//! Random streams: sample `i` of a run belongs to chunk `i / CHUNK_SAMPLES`,
//! and chunk `k` draws from ChaCha8 seeded with the run seed on stream `k`.
//! Results are therefore identical whether chunks run serially or in
//! parallel.
//!
//! The threshold formulation replaces photon detection by additive noise
//! `η` on `[−π/4, π/4]` with density `cos 2η` followed by the comparison
//! `θ + η < π/4`; the detection probability is `F_η(π/4 − θ) = cos²θ`.

use std::f64::consts::{FRAC_PI_4, LN_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::capacity::InputDistribution;
use crate::channel::{theta_from_t, BinomialChannel, DetectionProbability, DetectorNoiseModel, PolarizationAngle};
use crate::{Error, Result};

pub const CHUNK_SAMPLES: usize = 1 << 16;

/// When the detector angle is redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiRedraw {
    /// Independently for every photon; gives the binomial count law.
    #[default]
    PerPhoton,
    /// Once per sample window (experimental): a mixture of binomials with
    /// larger count variance.
    PerWindow,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    pub samples: usize,
    pub photons: u32,
    pub noise: DetectorNoiseModel,
    pub redraw: PhiRedraw,
}

impl SimConfig {
    pub fn new(photons: u32, noise: DetectorNoiseModel, samples: usize, seed: u64) -> Self {
        Self {
            seed,
            samples,
            photons,
            noise,
            redraw: PhiRedraw::PerPhoton,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Validation("samples must be at least 1".into()));
        }
        if self.photons == 0 {
            return Err(Error::Domain {
                name: "N",
                value: 0.0,
                domain: "N ≥ 1",
            });
        }
        self.noise.validate()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub theta: f64,
    #[serde(rename = "N")]
    pub photons: u32,
    pub samples: usize,
    pub seed: u64,
    pub noise: DetectorNoiseModel,
    pub redraw: PhiRedraw,
    /// Fraction of all emitted photons that were detected.
    pub empirical_rate: f64,
    pub analytic_rate: f64,
    /// Binomial standard error of `empirical_rate` under per-photon independence.
    pub standard_error: f64,
    pub z_score: f64,
    pub count_histogram: Vec<u64>,
    /// `samples · P(n | t)` from the binomial law.
    pub expected_histogram: Vec<f64>,
}

/// The random stream for chunk `chunk` of a run seeded with `seed`.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Photon count for one sample window with a fresh detector angle per photon.
pub fn sample_photon_count<R: Rng + ?Sized>(
    theta: PolarizationAngle,
    photons: u32,
    noise: &DetectorNoiseModel,
    rng: &mut R,
) -> u32 {
    sample_window(theta.radians(), photons, noise, PhiRedraw::PerPhoton, rng)
}

fn sample_window<R: Rng + ?Sized>(
    theta: f64,
    photons: u32,
    noise: &DetectorNoiseModel,
    redraw: PhiRedraw,
    rng: &mut R,
) -> u32 {
    let mut window_phi = None;
    let mut count = 0;
    for _ in 0..photons {
        let phi = match redraw {
            PhiRedraw::PerPhoton => noise.sample_angle(rng),
            PhiRedraw::PerWindow => *window_phi.get_or_insert_with(|| noise.sample_angle(rng)),
        };
        let c = (theta - phi).cos();
        if rng.gen::<f64>() < c * c {
            count += 1;
        }
    }
    count
}

/// Runs `f` once per chunk (sample range) and collects the results in
/// chunk order.
fn map_chunks<T, F>(samples: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, usize) -> T + Sync + Send,
{
    let chunks = samples.div_ceil(CHUNK_SAMPLES);
    let len = |k: usize| CHUNK_SAMPLES.min(samples - k * CHUNK_SAMPLES);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(|k| f(k as u64, len(k))).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..chunks).map(|k| f(k as u64, len(k))).collect()
    }
}

/// Count histogram for `config.samples` windows at polarization `theta`.
pub fn simulate_counts(theta: PolarizationAngle, config: &SimConfig) -> Result<SimulationReport> {
    config.validate()?;
    let n = config.photons;
    let outputs = n as usize + 1;
    let partials = map_chunks(config.samples, |chunk, len| {
        let mut rng = chunk_rng(config.seed, chunk);
        let mut hist = vec![0u64; outputs];
        for _ in 0..len {
            let c = sample_window(theta.radians(), n, &config.noise, config.redraw, &mut rng);
            hist[c as usize] += 1;
        }
        hist
    });
    let mut histogram = vec![0u64; outputs];
    for part in partials {
        for (h, p) in histogram.iter_mut().zip(part) {
            *h += p;
        }
    }

    let t = config.noise.moments()?.detection_probability(theta.radians());
    let trials = f64::from(n) * config.samples as f64;
    let detected: f64 = histogram
        .iter()
        .enumerate()
        .map(|(k, c)| k as f64 * *c as f64)
        .sum();
    let empirical_rate = detected / trials;
    let standard_error = (t * (1.0 - t) / trials).sqrt();
    let z_score = if standard_error > 0.0 {
        (empirical_rate - t) / standard_error
    } else if empirical_rate == t {
        0.0
    } else {
        f64::INFINITY
    };
    let expected_histogram = BinomialChannel::new(n)?
        .row(t)
        .into_iter()
        .map(|p| p * config.samples as f64)
        .collect();

    Ok(SimulationReport {
        theta: theta.radians(),
        photons: n,
        samples: config.samples,
        seed: config.seed,
        noise: config.noise.clone(),
        redraw: config.redraw,
        empirical_rate,
        analytic_rate: t,
        standard_error,
        z_score,
        count_histogram: histogram,
        expected_histogram,
    })
}

/// Inverse CDF of the threshold noise: `η = ½·asin(2u − 1)`.
pub fn ssr_noise_from_uniform(u: f64) -> f64 {
    0.5 * (2.0 * u - 1.0).clamp(-1.0, 1.0).asin()
}

/// One draw of `η` with density `cos 2η` on `[−π/4, π/4]`.
pub fn ssr_noise_sample<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ssr_noise_from_uniform(rng.gen::<f64>())
}

/// `F_η(x) = (sin 2x + 1)/2` on `[−π/4, π/4]`.
pub fn ssr_noise_cdf(x: f64) -> f64 {
    if x <= -FRAC_PI_4 {
        0.0
    } else if x >= FRAC_PI_4 {
        1.0
    } else {
        0.5 * ((2.0 * x).sin() + 1.0)
    }
}

/// Horizontal outcome iff `θ + η < π/4`.
#[inline]
pub fn ssr_threshold_detect(theta: PolarizationAngle, eta: f64) -> bool {
    theta.radians() + eta < FRAC_PI_4
}

/// Fraction of `samples` threshold-model trials that are detected.
pub fn ssr_detection_frequency(theta: PolarizationAngle, samples: usize, seed: u64) -> f64 {
    let hits: u64 = map_chunks(samples, |chunk, len| {
        let mut rng = chunk_rng(seed, chunk);
        (0..len)
            .filter(|_| ssr_threshold_detect(theta, ssr_noise_sample(&mut rng)))
            .count() as u64
    })
    .into_iter()
    .sum();
    hits as f64 / samples as f64
}

/// Plug-in mutual information (bits) of a joint count table.
pub fn plug_in_mutual_information(joint: &[Vec<u64>]) -> f64 {
    let total: u64 = joint.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let cols = joint.iter().map(Vec::len).max().unwrap_or(0);
    let row_sums: Vec<f64> = joint.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> = (0..cols)
        .map(|j| joint.iter().map(|r| r.get(j).copied().unwrap_or(0)).sum::<u64>() as f64)
        .collect();
    let mut acc = 0.0;
    for (row, rs) in joint.iter().zip(&row_sums) {
        for (c, cs) in row.iter().zip(&col_sums) {
            if *c > 0 {
                let c = *c as f64;
                acc += c / total * (c * total / (rs * cs)).ln();
            }
        }
    }
    (acc / LN_2).max(0.0)
}

/// Samples inputs from `dist`, maps them to angles and counts photons;
/// returns the plug-in estimate of `I(t; y)` in bits.
pub fn empirical_mutual_information<R: Rng + ?Sized>(
    dist: &InputDistribution,
    photons: u32,
    noise: &DetectorNoiseModel,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let angles: Vec<f64> = dist
        .support()
        .iter()
        .map(|&t| Ok(theta_from_t(DetectionProbability::new(t)?, noise)?.radians()))
        .collect::<Result<_>>()?;
    let mut cumulative: Vec<f64> = dist
        .masses()
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    if let Some(last) = cumulative.last_mut() {
        *last = f64::INFINITY;
    }
    let mut joint = vec![vec![0u64; photons as usize + 1]; dist.len()];
    for _ in 0..samples {
        let u = rng.gen::<f64>();
        let m = cumulative.partition_point(|&c| c <= u);
        let count = sample_window(angles[m], photons, noise, PhiRedraw::PerPhoton, rng);
        joint[m][count as usize] += 1;
    }
    Ok(plug_in_mutual_information(&joint))
}
