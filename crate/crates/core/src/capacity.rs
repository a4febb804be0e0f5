//! Capacity of the binomial channel over the reachable interval
//! `[t_min, t_max]`.
//!
//! The solver runs Blahut–Arimoto on a dense grid of detection
//! probabilities and collapses each mass peak of the grid solution into one
//! point. It then alternates Blahut–Arimoto on the masses with coordinate
//! ascent on the positions, and finishes with Newton's method on the
//! optimality system (`i(t_m) = C`, `i'(t_m) = 0` at interior points,
//! `Σ p_m = 1`). The loop ends once the Kuhn–Tucker conditions hold on a
//! dense verification grid:
//!
//! * `i(t_m) = C` at every support point with positive mass;
//! * `i(t) ≤ C` everywhere else.
//!
//! If the verification finds `i(t) > C` somewhere, the nearby local maximum
//! of `i(t)` joins the support and the loop repeats.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::channel::{t_bounds, BinomialChannel, DetectorNoiseModel};
use crate::numeric::{golden_section_max, linspace, solve_linear};
use crate::{Error, Result};

/// Finite-support input distribution over detection probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDistribution {
    support: Vec<f64>,
    masses: Vec<f64>,
}

impl InputDistribution {
    /// Validates and renormalizes. The support must be strictly increasing
    /// within `[0, 1]` and the masses must sum to one within `1e-9`.
    pub fn new(support: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != masses.len() {
            return Err(Error::Validation(format!(
                "distribution needs matching nonempty support and masses ({} vs {})",
                support.len(),
                masses.len()
            )));
        }
        if support.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Validation("support points must lie in [0, 1]".into()));
        }
        if support.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(
                "support points must be strictly increasing".into(),
            ));
        }
        if masses.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Validation("masses must be nonnegative".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("masses sum to {total}, expected 1")));
        }
        let masses = masses.into_iter().map(|p| p / total).collect();
        Ok(Self { support, masses })
    }

    pub fn point_mass(t: f64) -> Result<Self> {
        Self::new(vec![t], vec![1.0])
    }

    /// Equal masses on the given points.
    pub fn uniform(support: Vec<f64>) -> Result<Self> {
        let m = support.len().max(1);
        Self::new(support, vec![1.0 / m as f64; m])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.masses.iter().copied())
    }
}

/// Output marginal `P_y(n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputDistribution {
    pub probs: Vec<f64>,
}

impl OutputDistribution {
    pub fn induced_by(dist: &InputDistribution, channel: &BinomialChannel) -> Self {
        let mut probs = vec![0.0; channel.outputs()];
        let mut row = vec![0.0; channel.outputs()];
        for (t, p) in dist.iter() {
            channel.fill_row(t, &mut row);
            for (acc, r) in probs.iter_mut().zip(&row) {
                *acc += p * r;
            }
        }
        Self { probs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Points in the initial uniform grid over `[t_min, t_max]`.
    pub grid_points: usize,
    /// Stop the grid-stage iteration once its bracket is this narrow.
    pub grid_tolerance_bits: f64,
    pub ba_tolerance_bits: f64,
    pub kkt_tolerance_bits: f64,
    pub max_iterations: usize,
    pub prune_mass_threshold: f64,
    /// `None` means `(t_max − t_min) / (4 · grid_points)`.
    pub merge_distance: Option<f64>,
    pub verification_points: usize,
    pub max_refinement_rounds: usize,
}

impl SolverConfig {
    pub fn for_photons(photons: u32) -> Self {
        Self {
            grid_points: 1001.max(8 * (photons as usize + 1)),
            grid_tolerance_bits: 1e-3,
            ba_tolerance_bits: 1e-9,
            kkt_tolerance_bits: 1e-5,
            max_iterations: 100_000,
            prune_mass_threshold: 1e-7,
            merge_distance: None,
            verification_points: 10_000,
            max_refinement_rounds: 200,
        }
    }

    pub fn validate(&self, photons: u32) -> Result<()> {
        let positive = [
            ("grid_tolerance_bits", self.grid_tolerance_bits),
            ("ba_tolerance_bits", self.ba_tolerance_bits),
            ("kkt_tolerance_bits", self.kkt_tolerance_bits),
            ("prune_mass_threshold", self.prune_mass_threshold),
            ("merge_distance", self.merge_distance.unwrap_or(1.0)),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::Validation(format!("{name} must be positive, got {v}")));
        }
        if self.grid_points < photons as usize + 1 {
            return Err(Error::Validation(format!(
                "grid_points = {} must be at least N + 1 = {}",
                self.grid_points,
                photons + 1
            )));
        }
        if self.max_iterations == 0 || self.verification_points < 2 {
            return Err(Error::Validation(
                "max_iterations must be positive and verification_points at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityResult {
    pub photons: u32,
    pub capacity_bits: f64,
    pub distribution: InputDistribution,
    pub kkt_slack_bits: f64,
    pub support_deviation_bits: f64,
    pub iterations: usize,
    pub grid_size: usize,
    pub refinement_rounds: usize,
}

impl CapacityResult {
    pub fn bits_per_photon(&self) -> f64 {
        self.capacity_bits / f64::from(self.photons)
    }
}

/// Serialized form of a capacity run.
#[derive(Debug, Clone, Serialize)]
pub struct CapacityReport {
    #[serde(rename = "N")]
    pub photons: u32,
    pub noise: DetectorNoiseModel,
    pub capacity_bits: f64,
    pub bits_per_photon: f64,
    pub support: Vec<f64>,
    pub masses: Vec<f64>,
    pub kkt_slack_bits: f64,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bits_per_second: Option<f64>,
}

impl CapacityReport {
    pub fn new(result: &CapacityResult, noise: &DetectorNoiseModel) -> Self {
        Self {
            photons: result.photons,
            noise: noise.clone(),
            capacity_bits: result.capacity_bits,
            bits_per_photon: result.bits_per_photon(),
            support: result.distribution.support().to_vec(),
            masses: result.distribution.masses().to_vec(),
            kkt_slack_bits: result.kkt_slack_bits,
            iterations: result.iterations,
            bits_per_second: None,
        }
    }

    /// Adds the bits-per-second figure for a sample period in seconds.
    pub fn with_sample_period(mut self, seconds: f64) -> Self {
        self.bits_per_second = Some(self.capacity_bits / seconds);
        self
    }
}

/// Outcome of checking the optimality conditions for a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktCertificate {
    pub capacity_bits: f64,
    /// `max(0, max_t i(t) − C)` over the verification grid and support.
    pub slack_bits: f64,
    /// `max_m |i(t_m) − C|` over positive-mass support points.
    pub support_deviation_bits: f64,
    /// Where the maximum of `i(t)` was found.
    pub argmax_t: f64,
}

impl KktCertificate {
    pub fn holds(&self, tolerance_bits: f64) -> bool {
        self.slack_bits <= tolerance_bits && self.support_deviation_bits <= tolerance_bits
    }
}

/// Channel rows for a fixed support, with cached row entropies.
struct Kernel<'a> {
    channel: &'a BinomialChannel,
    rows: Vec<f64>,
    /// `Σ_n P(n|t) ln P(n|t)` per row.
    neg_entropy: Vec<f64>,
}

impl<'a> Kernel<'a> {
    fn new(channel: &'a BinomialChannel, support: &[f64]) -> Self {
        let k = channel.outputs();
        let mut rows = vec![0.0; support.len() * k];
        let mut neg_entropy = Vec::with_capacity(support.len());
        for (t, row) in support.iter().zip(rows.chunks_exact_mut(k)) {
            channel.fill_row(*t, row);
            neg_entropy.push(row.iter().map(|&p| xlnx(p)).sum());
        }
        Self {
            channel,
            rows,
            neg_entropy,
        }
    }

    fn outputs(&self) -> usize {
        self.channel.outputs()
    }

    fn output_into(&self, masses: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (p, row) in masses.iter().zip(self.rows.chunks_exact(self.outputs())) {
            if *p > 0.0 {
                for (o, r) in out.iter_mut().zip(row) {
                    *o += p * r;
                }
            }
        }
    }

    /// `D(P(·|t_m) ‖ P_y)` in nats for every support point.
    fn divergences_into(&self, output: &[f64], ln_output: &mut [f64], out: &mut [f64]) {
        for (l, q) in ln_output.iter_mut().zip(output) {
            *l = if *q > 0.0 { q.ln() } else { f64::NEG_INFINITY };
        }
        for ((d, row), h) in out
            .iter_mut()
            .zip(self.rows.chunks_exact(self.outputs()))
            .zip(&self.neg_entropy)
        {
            let mut cross = 0.0;
            for (r, l) in row.iter().zip(ln_output.iter()) {
                if *r > 0.0 {
                    cross += r * l;
                }
            }
            *d = if cross.is_finite() { h - cross } else { f64::INFINITY };
        }
    }
}

#[inline]
fn xlnx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// `i(t)` in nats against a fixed output distribution, reusing `row`.
fn information_density_nats(
    channel: &BinomialChannel,
    t: f64,
    output: &[f64],
    ln_output: &[f64],
    row: &mut [f64],
) -> f64 {
    channel.fill_row(t, row);
    let mut acc = 0.0;
    for ((p, q), lq) in row.iter().zip(output).zip(ln_output) {
        if *p > 0.0 {
            if *q <= 0.0 {
                return f64::INFINITY;
            }
            acc += p * (p.ln() - lq);
        }
    }
    acc.max(0.0)
}

fn ln_vec(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|q| if *q > 0.0 { q.ln() } else { f64::NEG_INFINITY })
        .collect()
}

struct BaOutcome {
    masses: Vec<f64>,
    info_nats: f64,
    bracket_nats: f64,
    iterations: usize,
    converged: bool,
}

/// Blahut–Arimoto from the given strictly positive starting masses.
fn run_blahut_arimoto(
    kernel: &Kernel,
    mut masses: Vec<f64>,
    tolerance_nats: f64,
    max_iterations: usize,
    mut observe: impl FnMut(f64),
) -> BaOutcome {
    let m = masses.len();
    let mut output = vec![0.0; kernel.outputs()];
    let mut ln_output = vec![0.0; kernel.outputs()];
    let mut div = vec![0.0; m];
    let mut iterations = 0;
    loop {
        kernel.output_into(&masses, &mut output);
        kernel.divergences_into(&output, &mut ln_output, &mut div);
        let info: f64 = masses.iter().zip(&div).map(|(p, d)| p * d).sum();
        let upper = div.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bracket = (upper - info).max(0.0);
        observe(info);
        if bracket <= tolerance_nats || iterations >= max_iterations {
            return BaOutcome {
                masses,
                info_nats: info.max(0.0),
                bracket_nats: bracket,
                iterations,
                converged: bracket <= tolerance_nats,
            };
        }
        let mut total = 0.0;
        for (p, d) in masses.iter_mut().zip(&div) {
            *p *= (d - upper).exp();
            total += *p;
        }
        for p in masses.iter_mut() {
            *p /= total;
        }
        iterations += 1;
    }
}

/// Mutual information `I(t; y)` in bits for a discrete input.
pub fn mutual_information(dist: &InputDistribution, photons: u32) -> Result<f64> {
    let channel = BinomialChannel::new(photons)?;
    Ok(mutual_information_with(dist, &channel))
}

fn mutual_information_with(dist: &InputDistribution, channel: &BinomialChannel) -> f64 {
    let kernel = Kernel::new(channel, dist.support());
    let mut output = vec![0.0; channel.outputs()];
    let mut ln_output = vec![0.0; channel.outputs()];
    let mut div = vec![0.0; dist.len()];
    kernel.output_into(dist.masses(), &mut output);
    kernel.divergences_into(&output, &mut ln_output, &mut div);
    let nats: f64 = dist
        .masses()
        .iter()
        .zip(&div)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, d)| p * d)
        .sum();
    nats.max(0.0) / LN_2
}

/// `i(t) = D(P(·|t) ‖ P_y)` in bits, with `P_y` induced by `dist`.
///
/// Infinite when the row puts mass on a count the output marginal never
/// produces.
pub fn marginal_information_density(
    t: f64,
    dist: &InputDistribution,
    photons: u32,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain {
            name: "t",
            value: t,
            domain: "[0, 1]",
        });
    }
    let channel = BinomialChannel::new(photons)?;
    let output = OutputDistribution::induced_by(dist, &channel).probs;
    let ln_output = ln_vec(&output);
    let mut row = vec![0.0; channel.outputs()];
    Ok(information_density_nats(&channel, t, &output, &ln_output, &mut row) / LN_2)
}

/// Capacity-achieving masses on a fixed support, and the resulting
/// information in bits.
pub fn blahut_arimoto(
    support: &[f64],
    photons: u32,
    config: &SolverConfig,
) -> Result<(Vec<f64>, f64)> {
    if support.is_empty() {
        return Err(Error::Validation("support must be nonempty".into()));
    }
    if let Some(t) = support.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Domain {
            name: "t",
            value: *t,
            domain: "[0, 1]",
        });
    }
    let channel = BinomialChannel::new(photons)?;
    let kernel = Kernel::new(&channel, support);
    let start = vec![1.0 / support.len() as f64; support.len()];
    let out = run_blahut_arimoto(
        &kernel,
        start,
        config.ba_tolerance_bits * LN_2,
        config.max_iterations,
        |_| {},
    );
    if !out.converged {
        return Err(Error::Convergence {
            iterations: out.iterations,
            bracket_bits: out.bracket_nats / LN_2,
        });
    }
    Ok((out.masses, out.info_nats / LN_2))
}

/// Optimality check for `dist` over `[t_min, t_max]` of `noise`, on an
/// evenly spaced grid of `verification_grid` points plus the support.
pub fn kkt_certificate(
    dist: &InputDistribution,
    photons: u32,
    noise: &DetectorNoiseModel,
    verification_grid: usize,
) -> Result<KktCertificate> {
    let channel = BinomialChannel::new(photons)?;
    let (lo, hi) = t_bounds(noise)?;
    Ok(certify(&channel, dist, lo.value(), hi.value(), verification_grid))
}

fn certify(
    channel: &BinomialChannel,
    dist: &InputDistribution,
    lo: f64,
    hi: f64,
    grid: usize,
) -> KktCertificate {
    let output = OutputDistribution::induced_by(dist, channel).probs;
    let ln_output = ln_vec(&output);
    let mut row = vec![0.0; channel.outputs()];
    let mut density = |t: f64| information_density_nats(channel, t, &output, &ln_output, &mut row);

    let support_density: Vec<f64> = dist.support().iter().map(|&t| density(t)).collect();
    let capacity_nats: f64 = dist
        .masses()
        .iter()
        .zip(&support_density)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, d)| p * d)
        .sum::<f64>()
        .max(0.0);

    let mut best = (f64::NEG_INFINITY, lo);
    for t in linspace(lo, hi, grid).into_iter().chain(dist.support().iter().copied()) {
        let d = density(t);
        if d > best.0 {
            best = (d, t);
        }
    }
    let deviation = dist
        .masses()
        .iter()
        .zip(&support_density)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, d)| (d - capacity_nats).abs())
        .fold(0.0, f64::max);

    KktCertificate {
        capacity_bits: capacity_nats / LN_2,
        slack_bits: ((best.0 - capacity_nats) / LN_2).max(0.0),
        support_deviation_bits: deviation / LN_2,
        argmax_t: best.1,
    }
}

/// Channel capacity in bits per sample for `photons` photons under `noise`.
pub fn capacity(
    photons: u32,
    noise: &DetectorNoiseModel,
    config: &SolverConfig,
) -> Result<CapacityResult> {
    config.validate(photons)?;
    let channel = BinomialChannel::new(photons)?;
    let (lo, hi) = t_bounds(noise)?;
    let (lo, hi) = (lo.value(), hi.value());

    if hi - lo <= 1e-12 {
        return Ok(CapacityResult {
            photons,
            capacity_bits: 0.0,
            distribution: InputDistribution::point_mass(lo)?,
            kkt_slack_bits: 0.0,
            support_deviation_bits: 0.0,
            iterations: 0,
            grid_size: 0,
            refinement_rounds: 0,
        });
    }

    let grid_size = config.grid_points;
    let merge_distance = config
        .merge_distance
        .unwrap_or((hi - lo) / (4.0 * grid_size as f64));
    let ba_tol = config.ba_tolerance_bits * LN_2;
    let kkt_tol = config.kkt_tolerance_bits;

    // Grid stage: only a starting point for the refinement, so running out
    // of iterations here is not an error.
    let grid = linspace(lo, hi, grid_size);
    let kernel = Kernel::new(&channel, &grid);
    let start = vec![1.0 / grid_size as f64; grid_size];
    let grid_tol = config.grid_tolerance_bits.max(config.ba_tolerance_bits) * LN_2;
    let out = run_blahut_arimoto(&kernel, start, grid_tol, config.max_iterations, |_| {});
    let mut iterations = out.iterations;
    let (mut support, mut masses) = collapse_basins(&grid, &out.masses, config.prune_mass_threshold);
    let mut output = vec![0.0; channel.outputs()];
    let mut row = vec![0.0; channel.outputs()];
    let verify_step = (hi - lo) / (config.verification_points - 1) as f64;
    let min_gap = 1e-9 * (hi - lo);
    let mut rounds = 0;
    let mut cert;
    loop {
        rounds += 1;

        // Joint ascent on masses and positions until nearly stationary;
        // the Newton polish below then converges from inside its basin.
        for _ in 0..ASCENT_SWEEPS {
            let kernel = Kernel::new(&channel, &support);
            let out = run_blahut_arimoto(&kernel, masses, ba_tol, ASCENT_BA_ITERATIONS, |_| {});
            iterations += out.iterations;
            masses = out.masses;
            drop_below(&mut support, &mut masses, config.prune_mass_threshold);
            let moved = ascend_positions(&channel, lo, hi, min_gap, &mut support, &masses);
            (support, masses) = merge(support, masses, merge_distance);
            if moved <= ASCENT_STEP * (hi - lo) && out.bracket_nats <= ASCENT_BRACKET_BITS * LN_2 {
                break;
            }
        }

        // Newton polish. Near-coincident points make the system singular, so
        // on failure retry with the closest pair merged.
        let before = mutual_information_nats(&channel, &support, &masses);
        let mut trial = (support.clone(), masses.clone());
        let mut polished = false;
        for _ in 0..MERGE_RETRIES {
            let (mut s, mut p) = trial.clone();
            if let Some(steps) = polish_support(&channel, lo, hi, min_gap, &mut s, &mut p) {
                iterations += steps;
                if mutual_information_nats(&channel, &s, &p) >= before - 1e-12 {
                    (support, masses) = (s, p);
                    polished = true;
                }
                break;
            }
            if trial.0.len() < 2 {
                break;
            }
            let closest = trial
                .0
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
            trial = merge(trial.0, trial.1, closest);
        }
        if !polished {
            let kernel = Kernel::new(&channel, &support);
            let out = run_blahut_arimoto(&kernel, masses, ba_tol, config.max_iterations, |_| {});
            iterations += out.iterations;
            masses = out.masses;
            drop_below(&mut support, &mut masses, config.prune_mass_threshold);
        }

        let dist = InputDistribution::new(support.clone(), masses.clone())?;
        cert = certify(&channel, &dist, lo, hi, config.verification_points);
        if cert.holds(kkt_tol) || rounds >= config.max_refinement_rounds {
            break;
        }
        if cert.slack_bits > kkt_tol {
            // Cutting plane: add the local maximum of i(t) near the violation.
            let kernel = Kernel::new(&channel, &support);
            kernel.output_into(&masses, &mut output);
            let ln_output = ln_vec(&output);
            let (t, _) = golden_section_max(
                |x| information_density_nats(&channel, x, &output, &ln_output, &mut row),
                (cert.argmax_t - verify_step).max(lo),
                (cert.argmax_t + verify_step).min(hi),
                1e-12,
            );
            let at = support.partition_point(|&s| s < t);
            let clear = |i: usize| support.get(i).is_none_or(|s| (s - t).abs() > min_gap);
            if clear(at) && (at == 0 || clear(at - 1)) {
                support.insert(at, t);
                masses.insert(at, 0.1 / support.len() as f64);
                let total: f64 = masses.iter().sum();
                masses.iter_mut().for_each(|p| *p /= total);
            }
        }
    }

    let distribution = InputDistribution::new(support, masses)?;
    if !cert.holds(kkt_tol) {
        return Err(Error::Certificate {
            capacity_bits: cert.capacity_bits,
            slack_bits: cert.slack_bits,
            support_deviation_bits: cert.support_deviation_bits,
            tolerance_bits: kkt_tol,
            support_size: distribution.len(),
        });
    }
    Ok(CapacityResult {
        photons,
        capacity_bits: cert.capacity_bits,
        distribution,
        kkt_slack_bits: cert.slack_bits,
        support_deviation_bits: cert.support_deviation_bits,
        iterations,
        grid_size,
        refinement_rounds: rounds,
    })
}

const ASCENT_SWEEPS: usize = 500;
const ASCENT_BA_ITERATIONS: usize = 200;
const ASCENT_STEP: f64 = 1e-6;
const ASCENT_BRACKET_BITS: f64 = 1e-4;

/// Removes points with mass below `threshold`, keeping at least the
/// heaviest one, and renormalizes.
fn drop_below(support: &mut Vec<f64>, masses: &mut Vec<f64>, threshold: f64) {
    let peak = masses.iter().copied().fold(0.0, f64::max);
    let cut = threshold.min(peak);
    let mut i = 0;
    while i < masses.len() {
        if masses[i] < cut {
            support.remove(i);
            masses.remove(i);
        } else {
            i += 1;
        }
    }
    let total: f64 = masses.iter().sum();
    masses.iter_mut().for_each(|p| *p /= total);
}

/// Coordinate ascent on `I` over the positions, each point confined to the
/// gap between its neighbours. Returns the largest move.
fn ascend_positions(
    channel: &BinomialChannel,
    lo: f64,
    hi: f64,
    min_gap: f64,
    support: &mut [f64],
    masses: &[f64],
) -> f64 {
    let mut moved = 0.0f64;
    let k = channel.outputs();
    let mut output = vec![0.0; k];
    let mut rest = vec![0.0; k];
    let mut row = vec![0.0; k];
    let kernel = Kernel::new(channel, support);
    kernel.output_into(masses, &mut output);
    for m in 0..support.len() {
        let p = masses[m];
        channel.fill_row(support[m], &mut row);
        for ((r, o), w) in rest.iter_mut().zip(&output).zip(&row) {
            *r = (o - p * w).max(0.0);
        }
        let a = if m == 0 { lo } else { support[m - 1] + min_gap };
        let b = if m + 1 == support.len() { hi } else { support[m + 1] - min_gap };
        if b <= a {
            continue;
        }
        let mut objective = |x: f64| -> f64 {
            channel.fill_row(x, &mut row);
            row.iter()
                .zip(&rest)
                .map(|(w, r)| p * xlnx(*w) - xlnx(r + p * w))
                .sum()
        };
        let current = objective(support[m]);
        let (t, best) = golden_section_max(&mut objective, a, b, 1e-12);
        if best > current {
            moved = moved.max((t - support[m]).abs());
            support[m] = t;
        }
        let t = support[m];
        channel.fill_row(t, &mut row);
        for ((o, r), w) in output.iter_mut().zip(&rest).zip(&row) {
            *o = r + p * w;
        }
    }
    moved
}

const MERGE_RETRIES: usize = 4;

fn mutual_information_nats(channel: &BinomialChannel, support: &[f64], masses: &[f64]) -> f64 {
    let kernel = Kernel::new(channel, support);
    let mut output = vec![0.0; channel.outputs()];
    let mut ln_output = vec![0.0; channel.outputs()];
    let mut div = vec![0.0; support.len()];
    kernel.output_into(masses, &mut output);
    kernel.divergences_into(&output, &mut ln_output, &mut div);
    masses.iter().zip(&div).filter(|(p, _)| **p > 0.0).map(|(p, d)| p * d).sum()
}

/// Runs [`polish`] to completion, applying its drop, pin and merge
/// requests. Returns the Newton step count on convergence.
fn polish_support(
    channel: &BinomialChannel,
    lo: f64,
    hi: f64,
    min_gap: f64,
    support: &mut Vec<f64>,
    masses: &mut Vec<f64>,
) -> Option<usize> {
    for steps in 0..4 * support.len() + 8 {
        match polish(channel, lo, hi, min_gap, support, masses) {
            Polish::Converged(n) => return Some(steps + n),
            Polish::Drop(k) => {
                support.remove(k);
                masses.remove(k);
                let total: f64 = masses.iter().sum();
                masses.iter_mut().for_each(|p| *p /= total);
            }
            Polish::Pin(k, bound) => {
                support[k] = bound;
                (*support, *masses) = merge(std::mem::take(support), std::mem::take(masses), 0.0);
            }
            Polish::Merge(k) => {
                let gap = (support[k + 1] - support[k]).max(0.0);
                (*support, *masses) = merge(std::mem::take(support), std::mem::take(masses), gap);
            }
            Polish::Failed => return None,
        }
    }
    None
}

enum Polish {
    Converged(usize),
    /// The Newton step wants this point's mass negative.
    Drop(usize),
    /// The Newton step pushes this point past an end of the interval.
    Pin(usize, f64),
    /// Points `k` and `k + 1` collide.
    Merge(usize),
    Failed,
}

/// Residuals of the optimality system and, optionally, its Jacobian.
///
/// Unknowns are the masses, the interior positions and the value `c`;
/// equations are `i(t_m) = c` for every point, `i'(t_m) = 0` for interior
/// points and `Σ p = 1`.
fn kkt_system(
    channel: &BinomialChannel,
    support: &[f64],
    masses: &[f64],
    c: f64,
    free: &[usize],
    jacobian: bool,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let k = channel.outputs();
    let m = support.len();
    let f = free.len();
    let dim = m + f + 1;
    let photons = f64::from(channel.photons());

    let mut w = vec![0.0; m * k];
    for (t, row) in support.iter().zip(w.chunks_exact_mut(k)) {
        channel.fill_row(*t, row);
    }
    let mut dw = vec![0.0; f * k];
    let mut d2w = vec![0.0; f * k];
    for (j, &idx) in free.iter().enumerate() {
        let t = support[idx];
        for n in 0..k {
            let x = n as f64;
            let p = w[idx * k + n];
            let a = x / t - (photons - x) / (1.0 - t);
            dw[j * k + n] = p * a;
            d2w[j * k + n] = p * (a * a - x / (t * t) - (photons - x) / ((1.0 - t) * (1.0 - t)));
        }
    }
    let mut q = vec![0.0; k];
    for (p, row) in masses.iter().zip(w.chunks_exact(k)) {
        for (o, r) in q.iter_mut().zip(row) {
            *o += p * r;
        }
    }
    let ln_q = ln_vec(&q);

    let mut res = vec![0.0; dim];
    let mut first = vec![0.0; m];
    let mut second = vec![0.0; f];
    for i in 0..m {
        let row = &w[i * k..(i + 1) * k];
        let mut d = 0.0;
        for n in 0..k {
            if row[n] > 0.0 {
                if q[n] <= 0.0 {
                    return None;
                }
                d += row[n] * (row[n].ln() - ln_q[n]);
            }
        }
        res[i] = d - c;
    }
    for (j, &idx) in free.iter().enumerate() {
        let (mut d1, mut d2) = (0.0, 0.0);
        for n in 0..k {
            let p = w[idx * k + n];
            if p > 0.0 {
                let l = p.ln() - ln_q[n];
                d1 += dw[j * k + n] * l;
                d2 += d2w[j * k + n] * l + dw[j * k + n] * dw[j * k + n] / p;
            }
        }
        res[m + j] = d1;
        first[idx] = d1;
        second[j] = d2;
    }
    res[dim - 1] = masses.iter().sum::<f64>() - 1.0;
    if res.iter().any(|r| !r.is_finite()) {
        return None;
    }
    if !jacobian {
        return Some((res, Vec::new()));
    }

    // Equation rows are g·(ln w − ln q); variable columns move q by dq.
    let inv_q: Vec<f64> = q.iter().map(|v| if *v > 0.0 { 1.0 / v } else { 0.0 }).collect();
    let g_row = |e: usize| -> &[f64] {
        if e < m {
            &w[e * k..(e + 1) * k]
        } else {
            &dw[(e - m) * k..(e - m + 1) * k]
        }
    };
    let mut dq = vec![0.0; (m + f) * k];
    dq[..m * k].copy_from_slice(&w);
    for (j, &idx) in free.iter().enumerate() {
        for n in 0..k {
            dq[(m + j) * k + n] = masses[idx] * dw[j * k + n];
        }
    }
    let mut jac = vec![0.0; dim * dim];
    for e in 0..m + f {
        let g = g_row(e);
        for v in 0..m + f {
            let col = &dq[v * k..(v + 1) * k];
            let s: f64 = (0..k).map(|n| g[n] * col[n] * inv_q[n]).sum();
            jac[e * dim + v] = -s;
        }
        if e < m {
            jac[e * dim + dim - 1] = -1.0;
        }
    }
    for (j, &idx) in free.iter().enumerate() {
        jac[idx * dim + m + j] += first[idx];
        jac[(m + j) * dim + m + j] += second[j];
    }
    for v in 0..m {
        jac[(dim - 1) * dim + v] = 1.0;
    }
    Some((res, jac))
}

/// Damped Newton iteration on [`kkt_system`]. Endpoints of `[lo, hi]` stay
/// fixed; everything else moves.
fn polish(
    channel: &BinomialChannel,
    lo: f64,
    hi: f64,
    min_gap: f64,
    support: &mut [f64],
    masses: &mut [f64],
) -> Polish {
    const MAX_STEPS: usize = 200;
    const MASS_FLOOR: f64 = 1e-10;
    const PIN_DISTANCE: f64 = 1e-10;
    let m = support.len();
    let free: Vec<usize> = (0..m).filter(|&i| support[i] > lo && support[i] < hi).collect();
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |a, x| a.max(x.abs()));

    let Some((res0, _)) = kkt_system(channel, support, masses, 0.0, &free, false) else {
        return Polish::Failed;
    };
    let mut c: f64 = masses.iter().zip(&res0).map(|(p, d)| p * d).sum();
    for step in 0..MAX_STEPS {
        let Some((res, jac)) = kkt_system(channel, support, masses, c, &free, true) else {
            return Polish::Failed;
        };
        let r0 = norm(&res);
        if r0 <= 1e-13 {
            return Polish::Converged(step);
        }
        let Some(delta) = solve_linear(jac, res.iter().map(|r| -r).collect()) else {
            return Polish::Failed;
        };

        // Keep masses positive and interior points inside the interval by
        // going at most halfway to any bound; points that end up pressed
        // against one are dropped or pinned.
        let mut alpha: f64 = 1.0;
        for i in 0..m {
            if delta[i] < 0.0 {
                if masses[i] <= MASS_FLOOR {
                    return Polish::Drop(i);
                }
                alpha = alpha.min(0.5 * masses[i] / -delta[i]);
            }
        }
        for (j, &idx) in free.iter().enumerate() {
            let (t, d) = (support[idx], delta[m + j]);
            let room = if d < 0.0 { t - lo } else { hi - t };
            if room <= PIN_DISTANCE * (hi - lo) && d != 0.0 {
                return Polish::Pin(idx, if d < 0.0 { lo } else { hi });
            }
            if d != 0.0 {
                alpha = alpha.min(0.5 * room / d.abs());
            }
        }
        loop {
            let mut t_try = support.to_vec();
            let mut p_try = masses.to_vec();
            for i in 0..m {
                p_try[i] += alpha * delta[i];
            }
            for (j, &idx) in free.iter().enumerate() {
                t_try[idx] += alpha * delta[m + j];
            }
            let c_try = c + alpha * delta[m + free.len()];
            if let Some(i) = t_try.windows(2).position(|w| w[1] - w[0] < min_gap) {
                return Polish::Merge(i);
            }
            let accepted = kkt_system(channel, &t_try, &p_try, c_try, &free, false)
                .map(|(r, _)| norm(&r))
                .filter(|r| *r < (1.0 - 1e-4 * alpha) * r0);
            if accepted.is_some() {
                support.copy_from_slice(&t_try);
                masses.copy_from_slice(&p_try);
                c = c_try;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                return if r0 <= 1e-10 {
                    Polish::Converged(step)
                } else {
                    Polish::Failed
                };
            }
        }
    }
    Polish::Failed
}

/// Splits the grid at local minima of the mass profile and replaces each
/// basin by its mass-weighted centroid. Basins lighter than `threshold`
/// are discarded.
fn collapse_basins(grid: &[f64], masses: &[f64], threshold: f64) -> (Vec<f64>, Vec<f64>) {
    let mut support = Vec::new();
    let mut weights = Vec::new();
    let mut start = 0;
    let mut flush = |lo: usize, hi: usize| {
        let sum_p: f64 = masses[lo..hi].iter().sum();
        if sum_p >= threshold {
            let sum_tp: f64 = grid[lo..hi].iter().zip(&masses[lo..hi]).map(|(t, p)| t * p).sum();
            let at = lo + (lo..hi).map(|i| masses[i]).enumerate().fold((0, 0.0), |b, (i, p)| {
                if p > b.1 {
                    (i, p)
                } else {
                    b
                }
            }).0;
            // keep the interval endpoints exact when they carry the basin peak
            let t = if at == 0 || at == grid.len() - 1 { grid[at] } else { sum_tp / sum_p };
            support.push(t);
            weights.push(sum_p);
        }
    };
    for i in 1..masses.len().saturating_sub(1) {
        if masses[i] < masses[i - 1] && masses[i] <= masses[i + 1] {
            flush(start, i + 1);
            start = i + 1;
        }
    }
    flush(start, masses.len());
    if support.is_empty() {
        let at = masses.iter().enumerate().fold(0, |b, (i, p)| if *p > masses[b] { i } else { b });
        support.push(grid[at]);
        weights.push(1.0);
    }
    let total: f64 = weights.iter().sum();
    (support, weights.into_iter().map(|p| p / total).collect())
}

/// Combines sorted neighbours closer than `distance` at their mass-weighted
/// centroid.
fn merge(support: Vec<f64>, masses: Vec<f64>, distance: f64) -> (Vec<f64>, Vec<f64>) {
    let mut pairs: Vec<(f64, f64)> = support.into_iter().zip(masses).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out_t: Vec<f64> = Vec::with_capacity(pairs.len());
    let mut out_p: Vec<f64> = Vec::with_capacity(pairs.len());
    // Cluster anchor, so chains of close points do not drift.
    let mut anchor = f64::NEG_INFINITY;
    for (t, p) in pairs {
        match (out_t.last_mut(), out_p.last_mut()) {
            (Some(lt), Some(lp)) if t - anchor <= distance || t <= *lt => {
                let total = *lp + p;
                if total > 0.0 {
                    *lt = (*lt * *lp + t * p) / total;
                }
                *lp = total;
            }
            _ => {
                anchor = t;
                out_t.push(t);
                out_p.push(p);
            }
        }
    }
    (out_t, out_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn det() -> DetectorNoiseModel {
        DetectorNoiseModel::Deterministic
    }

    /// Direct double sum with the marginal built by hand.
    fn direct_mi(support: &[f64], masses: &[f64], n: u32) -> f64 {
        let rows: Vec<Vec<f64>> = support
            .iter()
            .map(|&t| {
                (0..=n)
                    .map(|k| {
                        let mut c = 1.0;
                        for j in 0..k {
                            c = c * f64::from(n - j) / f64::from(j + 1);
                        }
                        c * t.powi(k as i32) * (1.0 - t).powi((n - k) as i32)
                    })
                    .collect()
            })
            .collect();
        let py: Vec<f64> = (0..=n as usize)
            .map(|k| rows.iter().zip(masses).map(|(r, p)| p * r[k]).sum())
            .collect();
        let mut acc = 0.0;
        for (r, p) in rows.iter().zip(masses) {
            for k in 0..=n as usize {
                if r[k] > 0.0 {
                    acc += p * r[k] * (r[k] / py[k]).log2();
                }
            }
        }
        acc
    }

    #[test]
    fn mutual_information_examples() {
        let d = InputDistribution::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(mutual_information(&d, 1).unwrap(), 1.0, epsilon = 1e-15);

        for n in [1, 5, 40] {
            let d = InputDistribution::point_mass(0.3).unwrap();
            assert_abs_diff_eq!(mutual_information(&d, n).unwrap(), 0.0, epsilon = 1e-14);
        }

        let s = vec![0.0, 0.5, 1.0];
        let m = vec![1.0 / 3.0; 3];
        let d = InputDistribution::new(s.clone(), m.clone()).unwrap();
        assert_abs_diff_eq!(
            mutual_information(&d, 2).unwrap(),
            direct_mi(&s, &m, 2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn density_examples() {
        let d = InputDistribution::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(marginal_information_density(0.0, &d, 1).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(marginal_information_density(0.5, &d, 1).unwrap(), 0.0, epsilon = 1e-15);

        // N=2, support {0,1}: count 1 never occurs, so interior t is infinite
        assert!(marginal_information_density(0.5, &d, 2).unwrap().is_infinite());

        let grid = linspace(0.0, 1.0, 5);
        let d = InputDistribution::uniform(grid.clone()).unwrap();
        let got = marginal_information_density(0.37, &d, 4).unwrap();
        // oracle: relative entropy summed by hand
        let n = 4u32;
        let row = |t: f64| -> Vec<f64> {
            (0..=n)
                .map(|k| {
                    let c = [1.0, 4.0, 6.0, 4.0, 1.0][k as usize];
                    c * t.powi(k as i32) * (1.0 - t).powi((n - k) as i32)
                })
                .collect()
        };
        let py: Vec<f64> = (0..5)
            .map(|k| grid.iter().map(|&t| 0.2 * row(t)[k]).sum())
            .collect();
        let want: f64 = row(0.37)
            .iter()
            .zip(&py)
            .map(|(p, q)| p * (p / q).log2())
            .sum();
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn ba_examples() {
        let cfg = SolverConfig::for_photons(1);
        let (m, i) = blahut_arimoto(&[0.0, 1.0], 1, &cfg).unwrap();
        assert_abs_diff_eq!(m[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(i, 1.0, epsilon = 1e-12);

        let (m, i) = blahut_arimoto(&[0.5], 7, &cfg).unwrap();
        assert_eq!(m, vec![1.0]);
        assert_abs_diff_eq!(i, 0.0, epsilon = 1e-15);

        assert!(blahut_arimoto(&[], 2, &cfg).is_err());
        assert!(blahut_arimoto(&[1.5], 2, &cfg).is_err());
    }

    #[test]
    fn ba_reports_non_convergence() {
        let cfg = SolverConfig {
            max_iterations: 3,
            ..SolverConfig::for_photons(4)
        };
        let err = blahut_arimoto(&linspace(0.0, 1.0, 200), 4, &cfg).unwrap_err();
        assert!(matches!(err, Error::Convergence { iterations: 3, .. }));
    }

    #[test]
    fn ba_information_is_nondecreasing() {
        let channel = BinomialChannel::new(6).unwrap();
        let grid = linspace(0.0, 1.0, 301);
        let kernel = Kernel::new(&channel, &grid);
        let mut history = Vec::new();
        run_blahut_arimoto(&kernel, vec![1.0 / 301.0; 301], 1e-12, 2000, |i| history.push(i));
        assert!(history.len() > 10);
        for w in history.windows(2) {
            assert!(w[1] >= w[0] - 1e-14, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn fine_grid_ba_matches_structured_solver_for_two_photons() {
        let cfg = SolverConfig {
            ba_tolerance_bits: 5e-5,
            ..SolverConfig::for_photons(2)
        };
        let (_, grid_info) = blahut_arimoto(&linspace(0.0, 1.0, 2001), 2, &cfg).unwrap();
        let c = capacity(2, &det(), &SolverConfig::for_photons(2)).unwrap();
        assert!((grid_info - c.capacity_bits).abs() <= 1e-4);
    }

    #[test]
    fn one_photon_is_a_noiseless_bit() {
        let r = capacity(1, &det(), &SolverConfig::for_photons(1)).unwrap();
        assert_abs_diff_eq!(r.capacity_bits, 1.0, epsilon = 1e-9);
        assert_eq!(r.distribution.support(), &[0.0, 1.0]);
        assert_abs_diff_eq!(r.distribution.masses()[0], 0.5, epsilon = 1e-9);
        assert!(r.kkt_slack_bits <= 1e-9);
    }

    #[test]
    fn certificate_detects_suboptimal_masses() {
        let d = InputDistribution::new(vec![0.0, 1.0], vec![0.9, 0.1]).unwrap();
        let cert = kkt_certificate(&d, 1, &det(), 1000).unwrap();
        assert!(cert.slack_bits > 0.1);
        assert!(!cert.holds(1e-5));

        let d = InputDistribution::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let cert = kkt_certificate(&d, 1, &det(), 1000).unwrap();
        assert!(cert.slack_bits <= 1e-9);
    }

    #[test]
    fn eight_photon_certificate() {
        let r = capacity(8, &det(), &SolverConfig::for_photons(8)).unwrap();
        let cert = kkt_certificate(&r.distribution, 8, &det(), 10_000).unwrap();
        assert!(cert.slack_bits <= 1e-4);
        assert!(cert.support_deviation_bits <= 1e-4);
        assert!(r.distribution.len() <= 9);
    }

    #[test]
    fn symmetric_without_detector_noise() {
        for n in [3, 6, 11] {
            let r = capacity(n, &det(), &SolverConfig::for_photons(n)).unwrap();
            let s = r.distribution.support();
            let m = r.distribution.masses();
            let k = s.len();
            assert_abs_diff_eq!(s[0], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(s[k - 1], 1.0, epsilon = 1e-12);
            for i in 0..k {
                assert_abs_diff_eq!(s[i], 1.0 - s[k - 1 - i], epsilon = 1e-4);
                assert_abs_diff_eq!(m[i], m[k - 1 - i], epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn capacity_bounds_and_support_size() {
        for n in [1u32, 2, 5, 9, 17] {
            for a in [0.0, 0.6, FRAC_PI_2] {
                let noise = DetectorNoiseModel::uniform(a).unwrap();
                let r = capacity(n, &noise, &SolverConfig::for_photons(n)).unwrap();
                assert!(r.capacity_bits >= 0.0);
                assert!(r.capacity_bits <= f64::from(n + 1).log2() + 1e-12);
                assert!(r.distribution.len() <= n as usize + 1);
                let (lo, hi) = t_bounds(&noise).unwrap();
                assert!(r.distribution.support()[0] >= lo.value());
                assert!(*r.distribution.support().last().unwrap() <= hi.value());
            }
        }
    }

    #[test]
    fn more_photons_never_hurt() {
        let mut prev = 0.0;
        for n in 1..=32u32 {
            let c = capacity(n, &det(), &SolverConfig::for_photons(n)).unwrap().capacity_bits;
            assert!(c >= prev - 1e-6, "N={n}: {c} < {prev}");
            prev = c;
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = SolverConfig {
            grid_points: 3,
            ..SolverConfig::for_photons(8)
        };
        assert!(matches!(capacity(8, &det(), &cfg), Err(Error::Validation(_))));
        let cfg = SolverConfig {
            kkt_tolerance_bits: 0.0,
            ..SolverConfig::for_photons(8)
        };
        assert!(capacity(8, &det(), &cfg).is_err());
    }

    #[test]
    fn merge_uses_weighted_centroid() {
        let (t, p) = merge(vec![0.1, 0.1001, 0.5], vec![0.25, 0.75, 0.0], 1e-3);
        assert_eq!(t.len(), 2);
        assert_abs_diff_eq!(t[0], 0.1 * 0.25 + 0.1001 * 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn report_json_shape() {
        let r = capacity(1, &det(), &SolverConfig::for_photons(1)).unwrap();
        let v = serde_json::to_value(CapacityReport::new(&r, &det())).unwrap();
        assert_eq!(v["N"], 1);
        assert_eq!(v["noise"]["kind"], "deterministic");
        assert_eq!(v["noise"]["a"], 0.0);
        assert!((v["bits_per_photon"].as_f64().unwrap() - 1.0).abs() < 1e-9);
        for key in ["capacity_bits", "support", "masses", "kkt_slack_bits", "iterations"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v.get("bits_per_second").is_none());
    }
}
