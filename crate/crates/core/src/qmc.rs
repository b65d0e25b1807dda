//! Discrete-time path-integral Monte Carlo (Suzuki-Trotter) for the
//! transverse-field model.
//!
//! The quantum partition function at inverse temperature `beta` maps onto `M`
//! classical replicas (Trotter slices) with action
//!
//! ```text
//! S = dtau * sum_k E_cl(s_k) - k_tau * sum_k sum_i s_{i,k} s_{i,k+1}
//! dtau = beta / M,   k_tau = ln coth(dtau * h_x) / 2
//! ```
//!
//! periodic in `k`. One sweep visits every `(site, slice)` pair once in
//! site-major, slice-minor order and applies a Metropolis single-spin update
//! with probability `min(1, exp(-dS))`. With `h_x = 0` and `M = 1` this is
//! plain classical Metropolis at temperature `T`.
//!
//! # Random stream
//!
//! A chain owns one `ChaCha8Rng` seeded with `seed_from_u64(seed)`. Every
//! proposal draws exactly one `u64`, accepted or not, so the proposal at
//! `(sweep t, site i, slice k)` consumes stream value number
//! `(t * N + i) * M + k`, i.e. ChaCha word position twice that. Replays are
//! therefore independent of how chains are scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::lattice::LatticeGeom;
use crate::model::{self, ModelError, ModelParams, SpinConfig};

pub const DEFAULT_SLICES: usize = 32;

/// Upper bound on `dtau * max(6 J + |h_z|, h_x)` before slices are added.
pub const MAX_TROTTER_STEP: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QmcError {
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("h_x = {0}: classical limit, no imaginary-time coupling defined")]
    ClassicalLimit(f64),
    #[error("{slices} Trotter slices with h_x = {transverse}: need M >= 2 for h_x > 0 and M = 1 for h_x = 0")]
    SliceCount { slices: usize, transverse: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Imaginary-time coupling `k_tau = ln coth(beta h_x / M) / 2`.
pub fn trotter_coupling(transverse: f64, beta: f64, slices: usize) -> Result<f64, QmcError> {
    if !(transverse > 0.0) {
        return Err(QmcError::ClassicalLimit(transverse));
    }
    if slices < 2 {
        return Err(QmcError::SliceCount { slices, transverse });
    }
    Ok(half_ln_coth(beta * transverse / slices as f64))
}

fn half_ln_coth(x: f64) -> f64 {
    // ln coth x = ln(1 + e^{-2x}) - ln(1 - e^{-2x}), stable for large and small x
    let q = (-2.0 * x).exp();
    0.5 * (q.ln_1p() - (-q).ln_1p())
}

/// Slice count actually used: `requested` raised until the Trotter step
/// bound holds, or 1 in the classical limit.
pub fn effective_slices(requested: usize, beta: f64, params: &ModelParams<f64>) -> usize {
    if params.transverse == 0.0 {
        return 1;
    }
    let scale = (6.0 * params.coupling + params.longitudinal.abs()).max(params.transverse);
    let needed = (beta * scale / MAX_TROTTER_STEP).ceil() as usize;
    requested.max(needed).max(2)
}

/// Number of distinct local environments: spin (2) x neighbor sum (7) x
/// imaginary-time neighbor sum (3).
const TABLE_LEN: usize = 42;

/// Trotterized configuration: `slices` replicas of a lattice state.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldLine {
    width: usize,
    height: usize,
    slices: usize,
    /// `spins[site * slices + slice]`.
    spins: Vec<i8>,
    beta: f64,
    dtau: f64,
    k_tau: f64,
    params: ModelParams<f64>,
    thresholds: [u64; TABLE_LEN],
}

/// Accepted flips per slice during one sweep.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweepRecord {
    pub accepted: Vec<u64>,
}

impl SweepRecord {
    pub fn total(&self) -> u64 {
        self.accepted.iter().sum()
    }
}

impl WorldLine {
    /// All slices start as copies of `config`.
    pub fn new(config: &SpinConfig, slices: usize, beta: f64, params: ModelParams<f64>) -> Result<Self, QmcError> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(QmcError::BadTemperature(1.0 / beta));
        }
        let classical = params.transverse == 0.0;
        if (classical && slices != 1) || (!classical && slices < 2) {
            return Err(QmcError::SliceCount {
                slices,
                transverse: params.transverse,
            });
        }
        let dtau = beta / slices as f64;
        let k_tau = if classical {
            0.0
        } else {
            trotter_coupling(params.transverse, beta, slices)?
        };

        let n = config.len();
        let mut spins = Vec::with_capacity(n * slices);
        for &s in config.spins() {
            spins.extend(std::iter::repeat(s).take(slices));
        }

        let mut wl = Self {
            width: config.width(),
            height: config.height(),
            slices,
            spins,
            beta,
            dtau,
            k_tau,
            params,
            thresholds: [0; TABLE_LEN],
        };
        wl.thresholds = wl.acceptance_table();
        Ok(wl)
    }

    /// Metropolis threshold per environment: accept iff `u64 draw <= thr`.
    fn acceptance_table(&self) -> [u64; TABLE_LEN] {
        let mut table = [0u64; TABLE_LEN];
        for (si, s) in [-1.0f64, 1.0].into_iter().enumerate() {
            for ni in 0..7 {
                let nsum = 2.0 * ni as f64 - 6.0;
                for ti in 0..3 {
                    let tsum = 2.0 * ti as f64 - 2.0;
                    let action = self.dtau * (-2.0 * s * (self.params.coupling * nsum + self.params.longitudinal))
                        + 2.0 * self.k_tau * s * tsum;
                    table[table_index(si, ni, ti)] = probability_threshold((-action).exp());
                }
            }
        }
        table
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn num_sites(&self) -> usize {
        self.width * self.height
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dtau(&self) -> f64 {
        self.dtau
    }

    pub fn k_tau(&self) -> f64 {
        self.k_tau
    }

    pub fn params(&self) -> &ModelParams<f64> {
        &self.params
    }

    pub fn spin(&self, site: usize, slice: usize) -> i8 {
        self.spins[site * self.slices + slice]
    }

    pub fn set_spin(&mut self, site: usize, slice: usize, value: i8) {
        assert!(value == 1 || value == -1);
        self.spins[site * self.slices + slice] = value;
    }

    /// Copy of one imaginary-time slice.
    pub fn slice(&self, k: usize) -> SpinConfig {
        let spins = (0..self.num_sites()).map(|i| self.spin(i, k)).collect();
        SpinConfig::new(self.width, self.height, spins).expect("slice is a valid config")
    }

    /// Change in the reduced action from flipping `(site, slice)`.
    pub fn action_change(&self, geom: &LatticeGeom, site: usize, slice: usize) -> f64 {
        let (si, ni, ti) = self.environment(geom.neighbor_table(), site, slice);
        let s = if si == 1 { 1.0 } else { -1.0 };
        let nsum = 2.0 * ni as f64 - 6.0;
        let tsum = 2.0 * ti as f64 - 2.0;
        self.dtau * (-2.0 * s * (self.params.coupling * nsum + self.params.longitudinal)) + 2.0 * self.k_tau * s * tsum
    }

    #[inline]
    fn environment(&self, table: &[[usize; 6]], site: usize, slice: usize) -> (usize, usize, usize) {
        let m = self.slices;
        let base = site * m;
        let s = self.spins[base + slice];
        let nsum: i32 = table[site].iter().map(|&j| i32::from(self.spins[j * m + slice])).sum();
        let tsum = if m == 1 {
            0
        } else {
            let prev = self.spins[base + (slice + m - 1) % m];
            let next = self.spins[base + (slice + 1) % m];
            i32::from(prev) + i32::from(next)
        };
        (usize::from(s == 1), ((nsum + 6) / 2) as usize, ((tsum + 2) / 2) as usize)
    }

    /// One Metropolis pass over all `(site, slice)` pairs.
    pub fn sweep(&mut self, geom: &LatticeGeom, rng: &mut impl RngCore) -> SweepRecord {
        debug_assert_eq!(geom.num_sites(), self.num_sites());
        let table = geom.neighbor_table();
        let mut accepted = vec![0u64; self.slices];
        for site in 0..self.num_sites() {
            for slice in 0..self.slices {
                let (si, ni, ti) = self.environment(table, site, slice);
                let draw = rng.next_u64();
                if draw <= self.thresholds[table_index(si, ni, ti)] {
                    let idx = site * self.slices + slice;
                    self.spins[idx] = -self.spins[idx];
                    accepted[slice] += 1;
                }
            }
        }
        SweepRecord { accepted }
    }

    /// Per-site majority over slices; ties resolve to slice 0.
    pub fn project(&self) -> SpinConfig {
        let m = self.slices;
        let spins = self
            .spins
            .chunks_exact(m)
            .map(|line| {
                let total: i32 = line.iter().map(|&s| i32::from(s)).sum();
                match total.signum() {
                    1 => 1,
                    -1 => -1,
                    _ => line[0],
                }
            })
            .collect();
        SpinConfig::new(self.width, self.height, spins).expect("projection is a valid config")
    }
}

#[inline]
fn table_index(si: usize, ni: usize, ti: usize) -> usize {
    si * 21 + ni * 3 + ti
}

/// Largest `u64` threshold with `P(draw <= thr) ~= p`.
fn probability_threshold(p: f64) -> u64 {
    if p >= 1.0 {
        u64::MAX
    } else if p <= 0.0 || p.is_nan() {
        0
    } else {
        // 2^64 * p, saturating below u64::MAX
        let scaled = p * 18_446_744_073_709_551_616.0;
        if scaled >= u64::MAX as f64 {
            u64::MAX
        } else {
            scaled as u64
        }
    }
}

/// Chain RNG for a seed.
pub fn chain_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Streaming relaxation: yields the projected configuration after each sweep.
pub struct Relaxation<'g> {
    geom: &'g LatticeGeom,
    worldline: WorldLine,
    rng: ChaCha8Rng,
    done: usize,
    n_steps: usize,
}

impl<'g> Relaxation<'g> {
    pub fn new(
        geom: &'g LatticeGeom,
        init: &SpinConfig,
        params: ModelParams<f64>,
        temperature: f64,
        slices: usize,
        n_steps: usize,
        seed: u64,
    ) -> Result<Self, QmcError> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(QmcError::BadTemperature(temperature));
        }
        init.matches(geom)?;
        let beta = 1.0 / temperature;
        let m = effective_slices(slices, beta, &params);
        Ok(Self {
            geom,
            worldline: WorldLine::new(init, m, beta, params)?,
            rng: chain_rng(seed),
            done: 0,
            n_steps,
        })
    }

    pub fn worldline(&self) -> &WorldLine {
        &self.worldline
    }

    pub fn slices(&self) -> usize {
        self.worldline.slices()
    }
}

impl Iterator for Relaxation<'_> {
    type Item = SpinConfig;

    fn next(&mut self) -> Option<SpinConfig> {
        if self.done == self.n_steps {
            return None;
        }
        self.worldline.sweep(self.geom, &mut self.rng);
        self.done += 1;
        Some(self.worldline.project())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.n_steps - self.done;
        (left, Some(left))
    }
}

/// Projected snapshots of one relaxation run. `snapshots[0]` is the initial
/// state; `snapshots[t]` is the projection after sweep `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<SpinConfig>,
    pub params: ModelParams<f64>,
    pub temperature: f64,
    pub seed: u64,
    /// Slice count after the Trotter-step adjustment.
    pub slices: usize,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.snapshots.len().saturating_sub(1)
    }

    /// One JSON object per snapshot: the spin-config fields plus `sweep`,
    /// `energy` and `density`.
    pub fn write_jsonl(&self, geom: &LatticeGeom, mut out: impl std::io::Write) -> std::io::Result<()> {
        for (sweep, snap) in self.snapshots.iter().enumerate() {
            let line = SnapshotLine {
                width: snap.width(),
                height: snap.height(),
                spins: snap.spins(),
                sweep,
                energy: model::classical_energy(geom, snap, &self.params).map_err(std::io::Error::other)?,
                density: model::polaron_density(snap),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct SnapshotLine<'a> {
    width: usize,
    height: usize,
    spins: &'a [i8],
    sweep: usize,
    energy: f64,
    density: f64,
}

/// Runs `n_steps` sweeps from `init` and records every projected snapshot.
pub fn run_relaxation(
    geom: &LatticeGeom,
    init: &SpinConfig,
    params: ModelParams<f64>,
    temperature: f64,
    slices: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Trajectory, QmcError> {
    let run = Relaxation::new(geom, init, params, temperature, slices, n_steps, seed)?;
    let m = run.slices();
    let mut snapshots = Vec::with_capacity(n_steps + 1);
    snapshots.push(init.clone());
    snapshots.extend(run);
    Ok(Trajectory {
        snapshots,
        params,
        temperature,
        seed,
        slices: m,
    })
}
