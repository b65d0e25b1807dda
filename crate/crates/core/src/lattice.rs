//! Triangular lattice on a rhombic torus.
//!
//! Sites live on a `width x height` grid in skew coordinates `(x, y)` with
//! row-major index `i = y * width + x`. The six neighbors of `(x, y)` are, in
//! this fixed order:
//!
//! | slot | name | offset    |
//! |------|------|-----------|
//! | 0    | E    | `(+1, 0)` |
//! | 1    | W    | `(-1, 0)` |
//! | 2    | NE   | `(0, +1)` |
//! | 3    | SW   | `(0, -1)` |
//! | 4    | NW   | `(-1, +1)`|
//! | 5    | SE   | `(+1, -1)`|
//!
//! all taken modulo the torus dimensions. The three-coloring is
//! `(x + 2y) mod 3`, which is proper on every bond and advances `A -> B -> C`
//! under a shift by `(+1, 0)`. Both dimensions must be multiples of three so
//! that the coloring survives the periodic wrap.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Neighbor offsets in slot order: E, W, NE, SW, NW, SE.
pub const NEIGHBOR_OFFSETS: [(isize, isize); 6] = [(1, 0), (-1, 0), (0, 1), (0, -1), (-1, 1), (1, -1)];

pub const COORDINATION: usize = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("lattice dimension {name} = {value} is smaller than 3")]
    TooSmall { name: &'static str, value: usize },
    #[error("lattice dimension {name} = {value} is not a multiple of 3")]
    Incommensurate { name: &'static str, value: usize },
    #[error("site index {index} out of range for {sites} sites")]
    SiteOutOfRange { index: usize, sites: usize },
}

/// One of the three sublattices of the tripartite decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sublattice {
    A,
    B,
    C,
}

impl Sublattice {
    pub const ALL: [Sublattice; 3] = [Sublattice::A, Sublattice::B, Sublattice::C];

    pub fn index(self) -> usize {
        match self {
            Sublattice::A => 0,
            Sublattice::B => 1,
            Sublattice::C => 2,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i % 3]
    }

    /// Cyclic successor, A -> B -> C -> A.
    pub fn next(self) -> Self {
        Self::from_index(self.index() + 1)
    }
}

impl std::fmt::Display for Sublattice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = match self {
            Sublattice::A => 'A',
            Sublattice::B => 'B',
            Sublattice::C => 'C',
        };
        write!(f, "{c}")
    }
}

impl std::str::FromStr for Sublattice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Sublattice::A),
            "B" | "b" => Ok(Sublattice::B),
            "C" | "c" => Ok(Sublattice::C),
            other => Err(format!("unknown sublattice label `{other}`")),
        }
    }
}

/// Immutable triangular-lattice geometry with precomputed neighbor table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeGeom {
    width: usize,
    height: usize,
    neighbors: Vec<[usize; COORDINATION]>,
    sublattice: Vec<Sublattice>,
}

impl LatticeGeom {
    pub fn new(width: usize, height: usize) -> Result<Self, LatticeError> {
        for (name, value) in [("W", width), ("H", height)] {
            if value < 3 {
                return Err(LatticeError::TooSmall { name, value });
            }
            if value % 3 != 0 {
                return Err(LatticeError::Incommensurate { name, value });
            }
        }

        let n = width * height;
        let mut neighbors = Vec::with_capacity(n);
        let mut sublattice = Vec::with_capacity(n);
        for y in 0..height {
            for x in 0..width {
                let mut row = [0usize; COORDINATION];
                for (slot, &(dx, dy)) in NEIGHBOR_OFFSETS.iter().enumerate() {
                    row[slot] = wrap_index(width, height, x, y, dx, dy);
                }
                neighbors.push(row);
                sublattice.push(Sublattice::from_index(x + 2 * y));
            }
        }

        Ok(Self {
            width,
            height,
            neighbors,
            sublattice,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_sites(&self) -> usize {
        self.width * self.height
    }

    pub fn num_bonds(&self) -> usize {
        3 * self.num_sites()
    }

    pub fn neighbors(&self, i: usize) -> Result<&[usize; COORDINATION], LatticeError> {
        self.check(i)?;
        Ok(&self.neighbors[i])
    }

    /// Full neighbor table, indexed by site.
    pub fn neighbor_table(&self) -> &[[usize; COORDINATION]] {
        &self.neighbors
    }

    pub fn sublattice_of(&self, i: usize) -> Result<Sublattice, LatticeError> {
        self.check(i)?;
        Ok(self.sublattice[i])
    }

    pub fn sublattices(&self) -> &[Sublattice] {
        &self.sublattice
    }

    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i % self.width, i / self.width)
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        (y % self.height) * self.width + (x % self.width)
    }

    /// Site reached from `i` by the lattice translation `(dx, dy)`.
    pub fn translate(&self, i: usize, dx: isize, dy: isize) -> usize {
        let (x, y) = self.coords(i);
        wrap_index(self.width, self.height, x, y, dx, dy)
    }

    /// Every unordered bond once, as `(i, j)` with `i < j`.
    pub fn bonds(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .copied()
                .filter(move |&j| i < j)
                .map(move |j| (i, j))
        })
    }

    fn check(&self, i: usize) -> Result<(), LatticeError> {
        if i < self.num_sites() {
            Ok(())
        } else {
            Err(LatticeError::SiteOutOfRange {
                index: i,
                sites: self.num_sites(),
            })
        }
    }
}

fn wrap_index(width: usize, height: usize, x: usize, y: usize, dx: isize, dy: isize) -> usize {
    let xx = (x as isize + dx).rem_euclid(width as isize) as usize;
    let yy = (y as isize + dy).rem_euclid(height as isize) as usize;
    yy * width + xx
}
