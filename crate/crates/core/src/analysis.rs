//! Reconfiguration rate and scaling collapse.
//!
//! The rate of a trajectory is the mean fraction of sites that change sign
//! between consecutive snapshots:
//!
//! ```text
//! R = 1/N_steps * sum_t 1/(2N) * sum_i |s_i(t+1) - s_i(t)|
//! ```
//!
//! Rate curves `R(T)` at several `h_x` are collapsed by `T -> h_x^n T`. The
//! collapse objective is the mean cross-curve variance of `ln R` on a common
//! `ln T'` grid spanning the overlap of all rescaled curves, divided by the
//! variance of all interpolated values (0 = perfect collapse). `R = 0` points
//! are dropped before taking logs.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::LatticeGeom;
use crate::model::{ModelParams, SpinConfig};
use crate::qmc::{QmcError, Relaxation, Trajectory};

/// Grid points in the collapse objective.
pub const COLLAPSE_GRID: usize = 64;
/// Coarse scan step for the exponent.
pub const COARSE_STEP: f64 = 0.01;
/// Golden-section stopping width.
pub const REFINE_TOL: f64 = 1e-3;
pub const DEFAULT_EXPONENT_INTERVAL: (f64, f64) = (0.0, 3.0);

pub const CSV_HEADER: &str = "h_x,T,R,R_stderr,n_seeds,n_steps";

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("rate needs at least two snapshots, got {0}")]
    UndefinedRate(usize),
    #[error("snapshot {0} has a different size than the first snapshot")]
    InconsistentSnapshots(usize),
    #[error("temperature grid is empty")]
    EmptyGrid,
    #[error("temperature grid must be positive and strictly increasing")]
    UnsortedGrid,
    #[error("seed list is empty")]
    NoSeeds,
    #[error("curve at h_x = {0} cannot be rescaled (h_x must be positive)")]
    ZeroField(f64),
    #[error("need at least {need} curves, got {got}")]
    TooFewCurves { need: usize, got: usize },
    #[error("curves need distinct h_x values")]
    DuplicateField,
    #[error("curve at h_x = {0} has fewer than two positive-rate points")]
    SparseCurve(f64),
    #[error("rescaled curves do not overlap at n = {0}")]
    NoOverlap(f64),
    #[error("no exponent in [{0}, {1}] gives overlapping curves")]
    FitImpossible(f64, f64),
    #[error("invalid exponent interval [{0}, {1}]")]
    BadInterval(f64, f64),
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Qmc(#[from] QmcError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Accumulates flips between consecutive snapshots.
#[derive(Clone, Debug, Default)]
pub struct FlipCounter {
    prev: Option<Vec<i8>>,
    flips: u64,
    steps: u64,
    sites: usize,
}

impl FlipCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, snapshot: &SpinConfig) -> Result<(), AnalysisError> {
        let spins = snapshot.spins();
        match &mut self.prev {
            None => {
                self.sites = spins.len();
                self.prev = Some(spins.to_vec());
            }
            Some(prev) => {
                if prev.len() != spins.len() {
                    return Err(AnalysisError::InconsistentSnapshots(self.steps as usize + 1));
                }
                self.flips += prev.iter().zip(spins).filter(|(a, b)| a != b).count() as u64;
                self.steps += 1;
                prev.copy_from_slice(spins);
            }
        }
        Ok(())
    }

    pub fn flips(&self) -> u64 {
        self.flips
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn rate(&self) -> Result<f64, AnalysisError> {
        if self.steps == 0 {
            return Err(AnalysisError::UndefinedRate(usize::from(self.prev.is_some())));
        }
        Ok(self.flips as f64 / (self.sites as f64 * self.steps as f64))
    }
}

pub fn rate_from_snapshots(snapshots: &[SpinConfig]) -> Result<f64, AnalysisError> {
    let mut counter = FlipCounter::new();
    for s in snapshots {
        counter.push(s)?;
    }
    counter.rate()
}

/// Mean fraction of flipped sites per recorded step.
pub fn reconfiguration_rate(traj: &Trajectory) -> Result<f64, AnalysisError> {
    rate_from_snapshots(&traj.snapshots)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub temperature: f64,
    pub rate: f64,
    pub stderr: f64,
    pub n_seeds: usize,
}

/// `R(T)` at fixed transverse field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub transverse: f64,
    pub points: Vec<RatePoint>,
    pub n_steps: usize,
}

impl RateCurve {
    /// `(ln T, ln R)` for points with positive rate.
    fn log_points(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.rate > 0.0)
            .map(|p| (p.temperature.ln(), p.rate.ln()))
            .collect()
    }

    /// Number of points dropped from log-space analysis for `R = 0`.
    pub fn zero_rate_points(&self) -> usize {
        self.points.iter().filter(|p| p.rate == 0.0).count()
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for p in &self.points {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                self.transverse, p.temperature, p.rate, p.stderr, p.n_seeds, self.n_steps
            )?;
        }
        Ok(())
    }

    /// Parses one or more curves; rows are grouped by `h_x` in order of first
    /// appearance.
    pub fn read_csv(input: impl BufRead) -> Result<Vec<RateCurve>, AnalysisError> {
        let mut curves: Vec<RateCurve> = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if idx == 0 {
                if line.trim() != CSV_HEADER {
                    return Err(AnalysisError::Csv {
                        line: lineno,
                        message: format!("expected header `{CSV_HEADER}`"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 6 {
                return Err(AnalysisError::Csv {
                    line: lineno,
                    message: format!("expected 6 fields, got {}", fields.len()),
                });
            }
            let num = |i: usize| -> Result<f64, AnalysisError> {
                fields[i].parse().map_err(|e| AnalysisError::Csv {
                    line: lineno,
                    message: format!("field {}: {e}", i + 1),
                })
            };
            let int = |i: usize| -> Result<usize, AnalysisError> {
                fields[i].parse().map_err(|e| AnalysisError::Csv {
                    line: lineno,
                    message: format!("field {}: {e}", i + 1),
                })
            };
            let hx = num(0)?;
            let point = RatePoint {
                temperature: num(1)?,
                rate: num(2)?,
                stderr: num(3)?,
                n_seeds: int(4)?,
            };
            let n_steps = int(5)?;
            match curves.iter_mut().find(|c| c.transverse == hx) {
                Some(c) => c.points.push(point),
                None => curves.push(RateCurve {
                    transverse: hx,
                    points: vec![point],
                    n_steps,
                }),
            }
        }
        Ok(curves)
    }
}

/// Seed-averaged rate for each temperature, all `(T, seed)` chains run in
/// parallel on the current rayon pool. Every chain for a given seed uses the
/// same random stream, whatever its temperature.
pub fn rate_vs_temperature(
    geom: &LatticeGeom,
    init: &SpinConfig,
    params: ModelParams<f64>,
    temperatures: &[f64],
    slices: usize,
    n_steps: usize,
    seeds: &[u64],
) -> Result<RateCurve, AnalysisError> {
    if temperatures.is_empty() {
        return Err(AnalysisError::EmptyGrid);
    }
    if temperatures[0] <= 0.0 || temperatures.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AnalysisError::UnsortedGrid);
    }
    if seeds.is_empty() {
        return Err(AnalysisError::NoSeeds);
    }
    if n_steps == 0 {
        return Err(AnalysisError::UndefinedRate(1));
    }

    let jobs: Vec<(usize, u64)> = (0..temperatures.len())
        .flat_map(|t| seeds.iter().map(move |&s| (t, s)))
        .collect();
    let rates: Vec<f64> = jobs
        .par_iter()
        .map(|&(t, seed)| chain_rate(geom, init, params, temperatures[t], slices, n_steps, seed))
        .collect::<Result<_, _>>()?;

    let points = temperatures
        .iter()
        .zip(rates.chunks_exact(seeds.len()))
        .map(|(&temperature, rs)| {
            let (mean, stderr) = mean_and_stderr(rs);
            RatePoint {
                temperature,
                rate: mean,
                stderr,
                n_seeds: rs.len(),
            }
        })
        .collect();

    Ok(RateCurve {
        transverse: params.transverse,
        points,
        n_steps,
    })
}

/// Rate of one chain without storing its snapshots.
pub fn chain_rate(
    geom: &LatticeGeom,
    init: &SpinConfig,
    params: ModelParams<f64>,
    temperature: f64,
    slices: usize,
    n_steps: usize,
    seed: u64,
) -> Result<f64, AnalysisError> {
    let run = Relaxation::new(geom, init, params, temperature, slices, n_steps, seed)?;
    let mut counter = FlipCounter::new();
    counter.push(init)?;
    for snap in run {
        counter.push(&snap)?;
    }
    counter.rate()
}

pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `(T, R) -> (h_x^n T, R)` on every curve.
pub fn rescale_curves(curves: &[RateCurve], n: f64) -> Result<Vec<RateCurve>, AnalysisError> {
    curves
        .iter()
        .map(|c| {
            if !(c.transverse > 0.0) {
                return Err(AnalysisError::ZeroField(c.transverse));
            }
            let factor = c.transverse.powf(n);
            let mut out = c.clone();
            for p in &mut out.points {
                p.temperature *= factor;
            }
            Ok(out)
        })
        .collect()
}

/// Normalized cross-curve variance after rescaling by `n`.
pub fn collapse_residual(curves: &[RateCurve], n: f64) -> Result<f64, AnalysisError> {
    if curves.len() < 2 {
        return Err(AnalysisError::TooFewCurves {
            need: 2,
            got: curves.len(),
        });
    }
    let mut logs = Vec::with_capacity(curves.len());
    for c in curves {
        if !(c.transverse > 0.0) {
            return Err(AnalysisError::ZeroField(c.transverse));
        }
        let shift = n * c.transverse.ln();
        let pts: Vec<(f64, f64)> = c.log_points().into_iter().map(|(x, y)| (x + shift, y)).collect();
        if pts.len() < 2 {
            return Err(AnalysisError::SparseCurve(c.transverse));
        }
        logs.push(pts);
    }

    let lo = logs.iter().map(|p| p[0].0).fold(f64::NEG_INFINITY, f64::max);
    let hi = logs.iter().map(|p| p[p.len() - 1].0).fold(f64::INFINITY, f64::min);
    if !(hi > lo) {
        return Err(AnalysisError::NoOverlap(n));
    }

    let k = logs.len() as f64;
    let mut values = Vec::with_capacity(COLLAPSE_GRID * logs.len());
    let mut cross_var = 0.0;
    for g in 0..COLLAPSE_GRID {
        let x = lo + (hi - lo) * g as f64 / (COLLAPSE_GRID - 1) as f64;
        let ys: Vec<f64> = logs.iter().map(|p| interpolate(p, x)).collect();
        let mean = ys.iter().sum::<f64>() / k;
        cross_var += ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / k;
        values.extend(ys);
    }
    cross_var /= COLLAPSE_GRID as f64;

    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let pooled = values.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / m;
    if pooled == 0.0 {
        return Ok(0.0);
    }
    Ok(cross_var / pooled)
}

/// Piecewise-linear interpolation on points sorted by `x`; `x` must lie
/// within the point range.
fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let idx = points.partition_point(|p| p.0 < x);
    if idx == 0 {
        return points[0].1;
    }
    if idx >= points.len() {
        return points[points.len() - 1].1;
    }
    let (x0, y0) = points[idx - 1];
    let (x1, y1) = points[idx];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseResult {
    pub n: f64,
    pub residual: f64,
    /// Coarse scan `(n, residual)` pairs where the curves overlap.
    pub trace: Vec<(f64, f64)>,
    #[serde(skip)]
    pub rescaled: Vec<RateCurve>,
}

impl CollapseResult {
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            n: f64,
            residual: f64,
            trace: &'a [(f64, f64)],
        }
        serde_json::to_string(&Out {
            n: self.n,
            residual: self.residual,
            trace: &self.trace,
        })
        .expect("collapse result serializes")
    }
}

/// Exponent minimizing [`collapse_residual`]: coarse scan with step
/// [`COARSE_STEP`], then golden-section refinement around the best point.
pub fn fit_collapse_exponent(curves: &[RateCurve], interval: (f64, f64)) -> Result<CollapseResult, AnalysisError> {
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(AnalysisError::BadInterval(lo, hi));
    }
    if curves.len() < 3 {
        return Err(AnalysisError::TooFewCurves {
            need: 3,
            got: curves.len(),
        });
    }
    for (i, a) in curves.iter().enumerate() {
        if curves[..i].iter().any(|b| b.transverse == a.transverse) {
            return Err(AnalysisError::DuplicateField);
        }
    }

    let steps = ((hi - lo) / COARSE_STEP).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| (lo + k as f64 * COARSE_STEP).min(hi)).collect();
    let evals: Vec<Result<f64, AnalysisError>> = grid.par_iter().map(|&n| collapse_residual(curves, n)).collect();
    let mut trace = Vec::new();
    for (&n, r) in grid.iter().zip(evals) {
        match r {
            Ok(r) => trace.push((n, r)),
            Err(AnalysisError::NoOverlap(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let &(mut best_n, mut best_r) = trace
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(AnalysisError::FitImpossible(lo, hi))?;

    let objective = |n: f64| collapse_residual(curves, n).unwrap_or(f64::INFINITY);
    let (gn, gr) = golden_section(
        objective,
        (best_n - COARSE_STEP).max(lo),
        (best_n + COARSE_STEP).min(hi),
        REFINE_TOL,
    );
    if gr < best_r {
        best_n = gn;
        best_r = gr;
    }

    Ok(CollapseResult {
        n: best_n,
        residual: best_r,
        trace,
        rescaled: rescale_curves(curves, best_n)?,
    })
}

/// Golden-section minimization on `[a, b]` until the bracket is narrower
/// than `tol`. Returns `(x, f(x))`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}
