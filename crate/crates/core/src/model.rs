//! Classical sector of the transverse-field Ising Hamiltonian
//!
//! `H = J sum_<ij> s_i s_j - h_x sum_i sigma^x_i + h_z sum_i s_i`
//!
//! A `+1` spin marks an occupied polaron site. Only the diagonal part is
//! evaluated here; the transverse term enters through [`crate::ed`] and
//! [`crate::qmc`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{LatticeError, LatticeGeom, Sublattice};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("coupling J must be positive (antiferromagnetic), got {0}")]
    NonPositiveCoupling(f64),
    #[error("transverse field h_x must be non-negative, got {0}")]
    NegativeTransverseField(f64),
    #[error("configuration is {got_w}x{got_h} but geometry is {want_w}x{want_h}")]
    GeometryMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("spin at site {site} is {value}, expected -1 or +1")]
    InvalidSpin { site: usize, value: i8 },
    #[error("spin vector has {got} entries, expected {want}")]
    WrongLength { got: usize, want: usize },
    #[error("domain wall needs two different orderings, got {0} on both sides")]
    DegenerateWall(Sublattice),
    #[error("wall column {column} must lie strictly inside 0..{width}")]
    WallColumnOutOfRange { column: usize, width: usize },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Coupling constants of the model, all in the same energy unit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    /// Antiferromagnetic Ising coupling `J > 0`.
    pub coupling: T,
    /// Transverse field `h_x >= 0`.
    pub transverse: T,
    /// Longitudinal field `h_z`.
    pub longitudinal: T,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(coupling: T, transverse: T, longitudinal: T) -> Result<Self, ModelError> {
        if coupling <= T::zero() {
            return Err(ModelError::NonPositiveCoupling(coupling.as_f64()));
        }
        if transverse < T::zero() {
            return Err(ModelError::NegativeTransverseField(transverse.as_f64()));
        }
        Ok(Self {
            coupling,
            transverse,
            longitudinal,
        })
    }

    pub fn with_transverse(self, transverse: T) -> Result<Self, ModelError> {
        Self::new(self.coupling, transverse, self.longitudinal)
    }
}

impl ModelParams<f64> {
    /// J = 1, h_z = 2J: inside the window 0 < h_z < 6J where the 1/3-filled
    /// ordered state is the classical ground state.
    pub fn default_point(transverse: f64) -> Result<Self, ModelError> {
        Self::new(1.0, transverse, 2.0)
    }
}

/// Classical Ising state. Serializes as `{"width", "height", "spins"}` with
/// sites in row-major skew-coordinate order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinConfig {
    width: usize,
    height: usize,
    spins: Vec<i8>,
}

impl SpinConfig {
    pub fn new(width: usize, height: usize, spins: Vec<i8>) -> Result<Self, ModelError> {
        let cfg = Self {
            width,
            height,
            spins,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn uniform(geom: &LatticeGeom, value: i8) -> Self {
        assert!(value == 1 || value == -1);
        Self {
            width: geom.width(),
            height: geom.height(),
            spins: vec![value; geom.num_sites()],
        }
    }

    /// Checks invariants; useful after deserialization.
    pub fn validate(&self) -> Result<(), ModelError> {
        let want = self.width * self.height;
        if self.spins.len() != want {
            return Err(ModelError::WrongLength {
                got: self.spins.len(),
                want,
            });
        }
        if let Some((site, &value)) = self.spins.iter().enumerate().find(|(_, &s)| s != 1 && s != -1) {
            return Err(ModelError::InvalidSpin { site, value });
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn spin(&self, i: usize) -> i8 {
        self.spins[i]
    }

    pub fn flip(&mut self, i: usize) {
        self.spins[i] = -self.spins[i];
    }

    pub fn set(&mut self, i: usize, value: i8) {
        assert!(value == 1 || value == -1);
        self.spins[i] = value;
    }

    pub fn polaron_count(&self) -> usize {
        self.spins.iter().filter(|&&s| s == 1).count()
    }

    pub fn matches(&self, geom: &LatticeGeom) -> Result<(), ModelError> {
        if self.width == geom.width() && self.height == geom.height() {
            Ok(())
        } else {
            Err(ModelError::GeometryMismatch {
                got_w: self.width,
                got_h: self.height,
                want_w: geom.width(),
                want_h: geom.height(),
            })
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spin config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate().map_err(serde::de::Error::custom)?;
        Ok(cfg)
    }
}

/// Interaction (J) and chemical-potential (h_z) parts of the classical energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergySplit<T> {
    pub interaction: T,
    pub chemical: T,
}

impl<T: Scalar> EnergySplit<T> {
    pub fn total(&self) -> T {
        self.interaction + self.chemical
    }
}

/// Integer bond and field sums `(sum_<ij> s_i s_j, sum_i s_i)`.
pub fn spin_sums(geom: &LatticeGeom, config: &SpinConfig) -> Result<(i64, i64), ModelError> {
    config.matches(geom)?;
    let s = config.spins();
    let bond: i64 = geom.bonds().map(|(i, j)| i64::from(s[i] * s[j])).sum();
    let field: i64 = s.iter().map(|&v| i64::from(v)).sum();
    Ok((bond, field))
}

pub fn energy_split<T: Scalar>(
    geom: &LatticeGeom,
    config: &SpinConfig,
    params: &ModelParams<T>,
) -> Result<EnergySplit<T>, ModelError> {
    let (bond, field) = spin_sums(geom, config)?;
    Ok(EnergySplit {
        interaction: params.coupling * T::from_int(bond),
        chemical: params.longitudinal * T::from_int(field),
    })
}

/// `J sum_<ij> s_i s_j + h_z sum_i s_i`, each unordered bond counted once.
pub fn classical_energy<T: Scalar>(
    geom: &LatticeGeom,
    config: &SpinConfig,
    params: &ModelParams<T>,
) -> Result<T, ModelError> {
    Ok(energy_split(geom, config, params)?.total())
}

/// Sum of the six neighbor spins of site `i`.
pub fn neighbor_sum(geom: &LatticeGeom, config: &SpinConfig, i: usize) -> Result<i32, ModelError> {
    let s = config.spins();
    Ok(geom.neighbors(i)?.iter().map(|&j| i32::from(s[j])).sum())
}

/// Energy change of flipping site `i`: `-2 s_i (J sum_j s_j + h_z)`.
pub fn flip_cost<T: Scalar>(
    geom: &LatticeGeom,
    config: &SpinConfig,
    i: usize,
    params: &ModelParams<T>,
) -> Result<T, ModelError> {
    config.matches(geom)?;
    let nsum = neighbor_sum(geom, config, i)?;
    let s = T::from_int(i64::from(config.spin(i)));
    let two = T::from_int(2);
    Ok(-(two * s) * (params.coupling * T::from_int(i64::from(nsum)) + params.longitudinal))
}

/// One of the three degenerate ordered states: sublattice `which` occupied.
pub fn ground_state(geom: &LatticeGeom, which: Sublattice) -> SpinConfig {
    let spins = geom
        .sublattices()
        .iter()
        .map(|&s| if s == which { 1 } else { -1 })
        .collect();
    SpinConfig {
        width: geom.width(),
        height: geom.height(),
        spins,
    }
}

/// Two ordered domains separated by straight vertical walls.
///
/// Columns `x < wall_column` carry the `left` ordering and the rest carry
/// `right`; the periodic wrap adds a second wall at column 0. Where two
/// polarons from different domains would touch across a wall, the one on the
/// `right` side is removed, so walls are polaron-depleted and the state has a
/// lower density than the uniform 1/3 filling.
pub fn domain_wall_config(
    geom: &LatticeGeom,
    left: Sublattice,
    right: Sublattice,
    wall_column: usize,
) -> Result<SpinConfig, ModelError> {
    if left == right {
        return Err(ModelError::DegenerateWall(left));
    }
    if wall_column == 0 || wall_column >= geom.width() {
        return Err(ModelError::WallColumnOutOfRange {
            column: wall_column,
            width: geom.width(),
        });
    }
    let in_left = |i: usize| geom.coords(i).0 < wall_column;
    let mut spins: Vec<i8> = (0..geom.num_sites())
        .map(|i| {
            let target = if in_left(i) { left } else { right };
            if geom.sublattices()[i] == target {
                1
            } else {
                -1
            }
        })
        .collect();

    let table = geom.neighbor_table();
    let frustrated: Vec<usize> = (0..geom.num_sites())
        .filter(|&i| {
            !in_left(i) && spins[i] == 1 && table[i].iter().any(|&j| in_left(j) && spins[j] == 1)
        })
        .collect();
    for i in frustrated {
        spins[i] = -1;
    }

    Ok(SpinConfig {
        width: geom.width(),
        height: geom.height(),
        spins,
    })
}

/// Fraction of occupied (+1) sites.
pub fn polaron_density(config: &SpinConfig) -> f64 {
    config.polaron_count() as f64 / config.len() as f64
}
