use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use polcap::bounds::{self, BoundsReport};
use polcap::capacity::{capacity, CapacityReport, SolverConfig};
use polcap::channel::t_bounds;
use polcap::simulate::simulate_counts;
use polcap::{DetectorNoiseModel, PhiRedraw, PolarizationAngle, SimConfig, TabulatedDensity};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{
    BoundsArgs, CapacityArgs, Format, NoiseArgs, NoiseKind, Redraw, SimulateArgs, SolverArgs,
    SweepAArgs, SweepNArgs,
};
use crate::error::CliError;
use crate::output::{self, sig12, Row};

fn angle(value: f64, degrees: bool) -> f64 {
    if degrees {
        value.to_radians()
    } else {
        value
    }
}

fn noise_model(args: &NoiseArgs, degrees: bool) -> Result<DetectorNoiseModel, CliError> {
    let model = match args.noise {
        NoiseKind::Deterministic => {
            if args.a != 0.0 {
                return Err(CliError::Usage("--a needs --noise uniform".into()));
            }
            DetectorNoiseModel::Deterministic
        }
        NoiseKind::Uniform => DetectorNoiseModel::uniform(angle(args.a, degrees))?,
        NoiseKind::Tabulated => {
            let path = args
                .density
                .as_ref()
                .ok_or_else(|| CliError::Usage("--noise tabulated needs --density".into()))?;
            DetectorNoiseModel::Tabulated(TabulatedDensity::from_csv_path(path)?)
        }
    };
    Ok(model)
}

fn solver_config(photons: u32, args: &SolverArgs) -> SolverConfig {
    let mut cfg = SolverConfig::for_photons(photons);
    if let Some(v) = args.grid_points {
        cfg.grid_points = v;
    }
    if let Some(v) = args.ba_tolerance {
        cfg.ba_tolerance_bits = v;
    }
    if let Some(v) = args.kkt_tolerance {
        cfg.kkt_tolerance_bits = v;
    }
    if let Some(v) = args.max_iterations {
        cfg.max_iterations = v;
    }
    if let Some(v) = args.verification_points {
        cfg.verification_points = v;
    }
    cfg
}

fn check_period(period: Option<f64>) -> Result<(), CliError> {
    match period {
        Some(p) if !(p > 0.0 && p.is_finite()) => Err(CliError::Usage(format!(
            "--sample-period must be a positive number of seconds, got {p}"
        ))),
        _ => Ok(()),
    }
}

/// Comma-separated integers and inclusive ranges (`1-8,16,32`), sorted and
/// deduplicated.
pub fn parse_n_list(text: &str) -> Result<Vec<u32>, CliError> {
    let bad = |item: &str| CliError::Usage(format!("bad N list entry `{item}`"));
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once('-') {
            Some((a, b)) => {
                let a: u32 = a.trim().parse().map_err(|_| bad(item))?;
                let b: u32 = b.trim().parse().map_err(|_| bad(item))?;
                if a > b {
                    return Err(bad(item));
                }
                out.extend(a..=b);
            }
            None => out.push(item.parse().map_err(|_| bad(item))?),
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(CliError::Usage("N list is empty".into()));
    }
    if out[0] == 0 {
        return Err(CliError::Usage("N values must be at least 1".into()));
    }
    Ok(out)
}

fn parse_a_values(args: &SweepAArgs) -> Result<Vec<f64>, CliError> {
    let mut values = match &args.a_list {
        Some(text) => text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map(|v| angle(v, args.degrees))
                    .map_err(|_| CliError::Usage(format!("bad a list entry `{s}`")))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => {
            if args.a_points < 2 {
                return Err(CliError::Usage("--a-points must be at least 2".into()));
            }
            let last = (args.a_points - 1) as f64;
            (0..args.a_points).map(|i| FRAC_PI_2 * i as f64 / last).collect()
        }
    };
    if values.is_empty() {
        return Err(CliError::Usage("a list is empty".into()));
    }
    if let Some(a) = values.iter().find(|a| !(0.0..=FRAC_PI_2 + 1e-12).contains(*a)) {
        return Err(CliError::Usage(format!("a = {a} rad is outside [0, π/2]")));
    }
    values.iter_mut().for_each(|a| *a = a.min(FRAC_PI_2));
    values.sort_by(f64::total_cmp);
    values.dedup();
    Ok(values)
}

/// Rows in input order up to the first failure.
fn until_failure<R>(results: Vec<(String, polcap::Result<R>)>) -> (Vec<R>, Option<CliError>) {
    let mut rows = Vec::with_capacity(results.len());
    for (cell, r) in results {
        match r {
            Ok(row) => rows.push(row),
            Err(source) => return (rows, Some(CliError::Partial { cell, source })),
        }
    }
    (rows, None)
}

fn finish<R: Row>(
    out: &mut dyn Write,
    format: Format,
    header: Vec<&'static str>,
    rows: &[R],
    failure: Option<CliError>,
) -> Result<(), CliError> {
    output::write_table(out, format, header, rows, failure.as_ref())?;
    failure.map_or(Ok(()), Err)
}

// ---- capacity ----

#[derive(Serialize)]
struct SupportRow {
    #[serde(rename = "N")]
    photons: u32,
    capacity_bits: f64,
    bits_per_photon: f64,
    kkt_slack_bits: f64,
    t: f64,
    mass: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bits_per_second: Option<f64>,
}

impl Row for SupportRow {
    fn cells(&self) -> Vec<String> {
        let mut c = vec![
            self.photons.to_string(),
            sig12(self.capacity_bits),
            sig12(self.bits_per_photon),
            sig12(self.kkt_slack_bits),
            sig12(self.t),
            sig12(self.mass),
        ];
        c.extend(self.bits_per_second.map(sig12));
        c
    }
}

pub fn run_capacity(args: &CapacityArgs) -> Result<(), CliError> {
    check_period(args.sample_period)?;
    let noise = noise_model(&args.noise, args.degrees)?;
    let result = capacity(args.photons, &noise, &solver_config(args.photons, &args.solver))?;
    let mut out = output::open(args.output.out.as_deref())?;
    match args.output.format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut report = CapacityReport::new(&result, &noise);
            if let Some(p) = args.sample_period {
                report = report.with_sample_period(p);
            }
            output::write_json(&mut out, &report)
        }
        Format::Csv => {
            let rows: Vec<SupportRow> = result
                .distribution
                .iter()
                .map(|(t, mass)| SupportRow {
                    photons: result.photons,
                    capacity_bits: result.capacity_bits,
                    bits_per_photon: result.bits_per_photon(),
                    kkt_slack_bits: result.kkt_slack_bits,
                    t,
                    mass,
                    bits_per_second: args.sample_period.map(|p| result.capacity_bits / p),
                })
                .collect();
            let mut header = vec!["N", "capacity_bits", "bits_per_photon", "kkt_slack_bits", "t", "mass"];
            if args.sample_period.is_some() {
                header.push("bits_per_second");
            }
            output::write_table(&mut out, Format::Csv, header, &rows, None)
        }
    }
}

// ---- sweep-n ----

#[derive(Serialize)]
struct SweepNRow {
    #[serde(rename = "N")]
    photons: u32,
    capacity_bits: f64,
    c_infinity_bits: f64,
    i_lower_bits: f64,
    i_upper_bits: f64,
    bits_per_photon: f64,
    kkt_slack_bits: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bits_per_second: Option<f64>,
}

impl Row for SweepNRow {
    fn cells(&self) -> Vec<String> {
        let mut c = vec![
            self.photons.to_string(),
            sig12(self.capacity_bits),
            sig12(self.c_infinity_bits),
            sig12(self.i_lower_bits),
            sig12(self.i_upper_bits),
            sig12(self.bits_per_photon),
            sig12(self.kkt_slack_bits),
        ];
        c.extend(self.bits_per_second.map(sig12));
        c
    }
}

pub fn run_sweep_n(args: &SweepNArgs) -> Result<(), CliError> {
    check_period(args.sample_period)?;
    let ns = parse_n_list(&args.n_list)?;
    let noise = DetectorNoiseModel::Deterministic;
    let results: Vec<_> = ns
        .par_iter()
        .map(|&n| {
            let row = capacity(n, &noise, &solver_config(n, &args.solver)).and_then(|r| {
                let b = bounds::bounds_report(n, args.quad_points, args.dual_grid)?;
                Ok(SweepNRow {
                    photons: n,
                    capacity_bits: r.capacity_bits,
                    c_infinity_bits: b.c_infinity_bits,
                    i_lower_bits: b.i_lower_bits,
                    i_upper_bits: b.i_upper_bits,
                    bits_per_photon: r.bits_per_photon(),
                    kkt_slack_bits: r.kkt_slack_bits,
                    bits_per_second: args.sample_period.map(|p| r.capacity_bits / p),
                })
            });
            (format!("N={n}"), row)
        })
        .collect();
    let (rows, failure) = until_failure(results);
    let mut header = vec![
        "N",
        "capacity_bits",
        "c_infinity_bits",
        "i_lower_bits",
        "i_upper_bits",
        "bits_per_photon",
        "kkt_slack_bits",
    ];
    if args.sample_period.is_some() {
        header.push("bits_per_second");
    }
    let mut out = output::open(args.output.out.as_deref())?;
    finish(&mut out, args.output.format.unwrap_or(Format::Csv), header, &rows, failure)
}

// ---- sweep-a ----

#[derive(Serialize)]
struct SweepARow {
    a: f64,
    #[serde(rename = "N")]
    photons: u32,
    t_min: f64,
    t_max: f64,
    capacity_bits: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bits_per_second: Option<f64>,
}

impl Row for SweepARow {
    fn cells(&self) -> Vec<String> {
        let mut c = vec![
            sig12(self.a),
            self.photons.to_string(),
            sig12(self.t_min),
            sig12(self.t_max),
            sig12(self.capacity_bits),
        ];
        c.extend(self.bits_per_second.map(sig12));
        c
    }
}

pub fn run_sweep_a(args: &SweepAArgs) -> Result<(), CliError> {
    check_period(args.sample_period)?;
    let ns = parse_n_list(&args.n_list)?;
    let a_values = parse_a_values(args)?;
    let cells: Vec<(u32, f64)> = ns
        .iter()
        .flat_map(|&n| a_values.iter().map(move |&a| (n, a)))
        .collect();
    let results: Vec<_> = cells
        .par_iter()
        .map(|&(n, a)| {
            let row = DetectorNoiseModel::uniform(a).and_then(|noise| {
                let (lo, hi) = t_bounds(&noise)?;
                let r = capacity(n, &noise, &solver_config(n, &args.solver))?;
                Ok(SweepARow {
                    a,
                    photons: n,
                    t_min: lo.value(),
                    t_max: hi.value(),
                    capacity_bits: r.capacity_bits,
                    bits_per_second: args.sample_period.map(|p| r.capacity_bits / p),
                })
            });
            (format!("N={n}, a={a}"), row)
        })
        .collect();
    let (rows, failure) = until_failure(results);
    let mut header = vec!["a", "N", "t_min", "t_max", "capacity_bits"];
    if args.sample_period.is_some() {
        header.push("bits_per_second");
    }
    let mut out = output::open(args.output.out.as_deref())?;
    finish(&mut out, args.output.format.unwrap_or(Format::Csv), header, &rows, failure)
}

// ---- bounds ----

impl Row for BoundsReport {
    fn cells(&self) -> Vec<String> {
        vec![
            self.photons.to_string(),
            sig12(self.c_infinity_bits),
            sig12(self.i_lower_bits),
            sig12(self.i_upper_bits),
            sig12(self.q_star),
        ]
    }
}

pub fn run_bounds(args: &BoundsArgs) -> Result<(), CliError> {
    let ns = parse_n_list(&args.n_list)?;
    let results: Vec<_> = ns
        .par_iter()
        .map(|&n| {
            (
                format!("N={n}"),
                bounds::bounds_report(n, args.quad_points, args.dual_grid),
            )
        })
        .collect();
    let (rows, failure) = until_failure(results);
    let header = vec!["N", "c_infinity_bits", "i_lower_bits", "i_upper_bits", "q_star"];
    let mut out = output::open(args.output.out.as_deref())?;
    finish(&mut out, args.output.format.unwrap_or(Format::Csv), header, &rows, failure)
}

// ---- simulate ----

#[derive(Serialize)]
struct CountRow {
    n: usize,
    count: u64,
    expected_count: f64,
}

impl Row for CountRow {
    fn cells(&self) -> Vec<String> {
        vec![self.n.to_string(), self.count.to_string(), sig12(self.expected_count)]
    }
}

pub fn run_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let noise = noise_model(&args.noise, args.degrees)?;
    let theta = PolarizationAngle::new(angle(args.theta, args.degrees))?;
    let mut config = SimConfig::new(args.photons, noise, args.samples, args.seed);
    config.redraw = match args.redraw {
        Redraw::PerPhoton => PhiRedraw::PerPhoton,
        Redraw::PerWindow => PhiRedraw::PerWindow,
    };
    let report = simulate_counts(theta, &config)?;
    let mut out = output::open(args.output.out.as_deref())?;
    match args.output.format.unwrap_or(Format::Json) {
        Format::Json => output::write_json(&mut out, &report),
        Format::Csv => {
            let rows: Vec<CountRow> = report
                .count_histogram
                .iter()
                .zip(&report.expected_histogram)
                .enumerate()
                .map(|(n, (&count, &expected_count))| CountRow {
                    n,
                    count,
                    expected_count,
                })
                .collect();
            output::write_table(&mut out, Format::Csv, vec!["n", "count", "expected_count"], &rows, None)
        }
    }
}
