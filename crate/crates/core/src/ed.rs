//! Dense exact diagonalization of the full quantum model on small clusters.
//!
//! Basis states are `sigma^z` product states indexed by bit pattern: bit `i`
//! set means site `i` carries spin `+1`. Clusters are explicit bond lists, so
//! tori from [`LatticeGeom`] and hand-built environments (such as the two-spin
//! domain-wall pair) share one code path. Frozen neighbors outside the
//! cluster enter as static field shifts on the active sites.

use nalgebra::{DMatrix, DVector, RealField};
use thiserror::Error;

use crate::lattice::LatticeGeom;
use crate::model::{ModelParams, SpinConfig};
use crate::scalar::Scalar;
use crate::swtheory::SwSubspace;

/// Largest cluster accepted for dense storage (4096 x 4096 matrix).
pub const MAX_SITES: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EdError {
    #[error("cluster has {0} sites; dense diagonalization is capped at {MAX_SITES}")]
    TooLarge(usize),
    #[error("bond ({0}, {1}) references a site outside the cluster")]
    BadBond(usize, usize),
    #[error("requested {requested} eigenpairs from a {dim}-dimensional space")]
    TooManyEigenpairs { requested: usize, dim: usize },
    #[error("basis state {0} outside the Hilbert space")]
    BadState(usize),
    #[error("states are not classically degenerate (energies differ by {0})")]
    NotDegenerate(f64),
    #[error("states do not differ by a +1/-1 exchange across a cluster bond")]
    NotAnExchange,
    #[error("gap {gap} to the nearest other classical state is not large compared to h_x = {transverse}")]
    NoGap { gap: f64, transverse: f64 },
    #[error("found {0} eigenvectors dominated by the target pair, expected 2")]
    SectorNotIsolated(usize),
    #[error("hopping fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("hopping amplitude at index {0} is not positive; log fit undefined")]
    DegenerateFit(usize),
}

/// Scalar usable by the eigensolver.
pub trait EdScalar: RealField + Scalar {}
impl<T: RealField + Scalar> EdScalar for T {}

fn lift<T: EdScalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 representable")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterBond<T> {
    pub a: usize,
    pub b: usize,
    /// Bond strength in units of `J`.
    pub scale: T,
}

/// Active sites, their bonds, and frozen-environment field shifts.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster<T> {
    n_sites: usize,
    bonds: Vec<ClusterBond<T>>,
    /// Per-site sum of frozen neighbor spins (multiplies `J`).
    frozen_sums: Vec<T>,
}

impl<T: EdScalar> Cluster<T> {
    pub fn new(n_sites: usize, bonds: Vec<ClusterBond<T>>, frozen_sums: Vec<T>) -> Result<Self, EdError> {
        if n_sites > MAX_SITES {
            return Err(EdError::TooLarge(n_sites));
        }
        assert_eq!(frozen_sums.len(), n_sites, "one frozen sum per site");
        if let Some(b) = bonds.iter().find(|b| b.a >= n_sites || b.b >= n_sites || b.a == b.b) {
            return Err(EdError::BadBond(b.a, b.b));
        }
        Ok(Self {
            n_sites,
            bonds,
            frozen_sums,
        })
    }

    /// Unit-strength bonds, no frozen environment.
    pub fn from_bonds(n_sites: usize, bonds: &[(usize, usize)]) -> Result<Self, EdError> {
        let bonds = bonds
            .iter()
            .map(|&(a, b)| ClusterBond { a, b, scale: T::one() })
            .collect();
        Self::new(n_sites, bonds, vec![T::zero(); n_sites])
    }

    /// The full periodic lattice as a cluster.
    pub fn from_lattice(geom: &LatticeGeom) -> Result<Self, EdError> {
        let bonds: Vec<_> = geom.bonds().collect();
        Self::from_bonds(geom.num_sites(), &bonds)
    }

    /// Two active sites whose four classical energies reproduce the
    /// domain-wall subspace `H0` up to a constant: bond strength
    /// `(Z_h - Z_p) / 2` and frozen sum `-(Z_h + Z_p) / 2` on each site.
    ///
    /// Site 0 is the first spin of the subspace kets.
    pub fn domain_wall_pair(hole_coordination: u32, particle_coordination: u32) -> Self {
        let zh: T = lift(f64::from(hole_coordination));
        let zp: T = lift(f64::from(particle_coordination));
        let half: T = lift(0.5);
        let scale = (zh - zp) * half;
        let frozen = -(zh + zp) * half;
        Self {
            n_sites: 2,
            bonds: vec![ClusterBond { a: 0, b: 1, scale }],
            frozen_sums: vec![frozen, frozen],
        }
    }

    pub fn num_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dimension(&self) -> usize {
        1 << self.n_sites
    }

    pub fn bonds(&self) -> &[ClusterBond<T>] {
        &self.bonds
    }

    pub fn has_bond(&self, a: usize, b: usize) -> bool {
        self.bonds
            .iter()
            .any(|bond| (bond.a == a && bond.b == b) || (bond.a == b && bond.b == a))
    }

    /// Classical (diagonal) energy of a basis state.
    pub fn classical_energy(&self, state: usize, params: &ModelParams<T>) -> T {
        let spin = |i: usize| -> T {
            if state >> i & 1 == 1 {
                T::one()
            } else {
                -T::one()
            }
        };
        let mut bond_part = T::zero();
        for b in &self.bonds {
            bond_part += b.scale * spin(b.a) * spin(b.b);
        }
        let mut field_part = T::zero();
        for i in 0..self.n_sites {
            field_part += (params.longitudinal + params.coupling * self.frozen_sums[i]) * spin(i);
        }
        params.coupling * bond_part + field_part
    }
}

/// Bit-pattern basis index of a lattice spin configuration.
pub fn basis_index(config: &SpinConfig) -> usize {
    config
        .spins()
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 1)
        .fold(0usize, |acc, (i, _)| acc | 1 << i)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseHamiltonian<T: EdScalar> {
    n_sites: usize,
    matrix: DMatrix<T>,
}

impl<T: EdScalar> DenseHamiltonian<T> {
    /// Full model on a cluster. Off-diagonal `-h_x` between every pair of
    /// states differing in one bit.
    pub fn build(cluster: &Cluster<T>, params: &ModelParams<T>) -> Result<Self, EdError> {
        let n = cluster.num_sites();
        if n > MAX_SITES {
            return Err(EdError::TooLarge(n));
        }
        let dim = cluster.dimension();
        let mut matrix = DMatrix::zeros(dim, dim);
        for state in 0..dim {
            matrix[(state, state)] = cluster.classical_energy(state, params);
            for i in 0..n {
                matrix[(state ^ (1 << i), state)] = -params.transverse;
            }
        }
        Ok(Self { n_sites: n, matrix })
    }

    /// Wraps an arbitrary symmetric matrix (dimension must be a power of two).
    pub fn from_matrix(matrix: DMatrix<T>) -> Self {
        let dim = matrix.nrows();
        assert!(dim.is_power_of_two() && matrix.is_square());
        Self {
            n_sites: dim.trailing_zeros() as usize,
            matrix,
        }
    }

    /// The subspace `H0 + V` as a four-state Hamiltonian, reordered from the
    /// subspace ket order into bit-pattern order (bit 0 = first spin).
    pub fn from_sw_subspace(sub: &SwSubspace<T>) -> Self {
        let h = sub.full_hamiltonian();
        Self::from_matrix(DMatrix::from_fn(4, 4, |i, j| h[(SW_ORDER[i], SW_ORDER[j])]))
    }

    pub fn num_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn diagonal(&self, state: usize) -> T {
        self.matrix[(state, state)]
    }

    /// `k` lowest eigenpairs, ascending.
    pub fn low_spectrum(&self, k: usize) -> Result<Spectrum<T>, EdError> {
        let dim = self.dimension();
        if k > dim {
            return Err(EdError::TooManyEigenpairs { requested: k, dim });
        }
        let eig = self.matrix.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        order.truncate(k);
        Ok(Spectrum {
            energies: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
            states: order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect(),
        })
    }
}

/// Bit-pattern index -> subspace ket index. Ket `|s0, s1>` has bit 0 = s0.
/// `|-1,-1> = 0b00`, `|-1,+1> = 0b10`, `|+1,-1> = 0b01`, `|+1,+1> = 0b11`.
const SW_ORDER: [usize; 4] = [0, 2, 1, 3];

/// Basis indices (bit-pattern order) of the two domain-wall kets.
pub const SW_PAIR: [usize; 2] = [0b10, 0b01];

#[derive(Clone, Debug)]
pub struct Spectrum<T: EdScalar> {
    pub energies: Vec<T>,
    pub states: Vec<DVector<T>>,
}

impl<T: EdScalar> Spectrum<T> {
    pub fn ground_energy(&self) -> T {
        self.energies[0]
    }
}

/// Half the splitting of the two eigenstates dominated by a degenerate pair
/// of classical states connected by a single exchange across a bond.
pub fn tunneling_splitting<T: EdScalar>(
    cluster: &Cluster<T>,
    params: &ModelParams<T>,
    pair: [usize; 2],
) -> Result<T, EdError> {
    let dim = cluster.dimension();
    for &s in &pair {
        if s >= dim {
            return Err(EdError::BadState(s));
        }
    }
    let e0 = cluster.classical_energy(pair[0], params);
    let e1 = cluster.classical_energy(pair[1], params);
    let diff = (e0 - e1).abs().as_f64();
    if diff > 1e-9 {
        return Err(EdError::NotDegenerate(diff));
    }

    let changed = pair[0] ^ pair[1];
    if changed.count_ones() != 2 || (pair[0] & changed).count_ones() != 1 {
        return Err(EdError::NotAnExchange);
    }
    let a = changed.trailing_zeros() as usize;
    let b = (usize::BITS - 1 - changed.leading_zeros()) as usize;
    if !cluster.has_bond(a, b) {
        return Err(EdError::NotAnExchange);
    }

    let gap = (0..dim)
        .filter(|s| !pair.contains(s))
        .map(|s| (cluster.classical_energy(s, params) - e0).abs().as_f64())
        .fold(f64::INFINITY, f64::min);
    let hx = params.transverse.as_f64();
    if gap < 5.0 * hx {
        return Err(EdError::NoGap { gap, transverse: hx });
    }

    let ham = DenseHamiltonian::build(cluster, params)?;
    splitting_in_pair_sector(&ham, pair)
}

/// Sector identification on an already-built Hamiltonian: keep eigenvectors
/// with more than half their weight on the two target basis states.
pub fn splitting_in_pair_sector<T: EdScalar>(ham: &DenseHamiltonian<T>, pair: [usize; 2]) -> Result<T, EdError> {
    let spec = ham.low_spectrum(ham.dimension())?;
    let half: T = lift(0.5);
    let picked: Vec<T> = spec
        .energies
        .iter()
        .zip(&spec.states)
        .filter(|(_, v)| v[pair[0]] * v[pair[0]] + v[pair[1]] * v[pair[1]] > half)
        .map(|(&e, _)| e)
        .collect();
    if picked.len() != 2 {
        return Err(EdError::SectorNotIsolated(picked.len()));
    }
    Ok((picked[1] - picked[0]).abs() * half)
}

/// Least-squares slope of `ln t` against `ln h_x`.
pub fn fit_hopping_exponent(transverse: &[f64], hopping: &[f64]) -> Result<f64, EdError> {
    assert_eq!(transverse.len(), hopping.len());
    if transverse.len() < 3 {
        return Err(EdError::TooFewPoints(transverse.len()));
    }
    if let Some(i) = hopping.iter().position(|&t| t <= 0.0 || !t.is_finite()) {
        return Err(EdError::DegenerateFit(i));
    }
    let xs: Vec<f64> = transverse.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = hopping.iter().map(|t| t.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// `t_eff` of the two-spin domain-wall pair for each `h_x`, by dense
/// diagonalization of the embedded four-state problem.
pub fn domain_wall_hopping_family(
    coupling: f64,
    longitudinal: f64,
    hole_coordination: u32,
    particle_coordination: u32,
    transverse: &[f64],
) -> Result<Vec<f64>, EdError> {
    let cluster = Cluster::<f64>::domain_wall_pair(hole_coordination, particle_coordination);
    transverse
        .iter()
        .map(|&hx| {
            let params = ModelParams {
                coupling,
                transverse: hx,
                longitudinal,
            };
            tunneling_splitting(&cluster, &params, SW_PAIR)
        })
        .collect()
}

/// Limit of `f(h)` as `h -> 0` for samples at `h, h/2, h/4, ...` with an
/// even error series (`f = f0 + c h^2 + d h^4 + ...`). Input ordered from the
/// largest `h` down.
pub fn richardson_even(values: &[f64]) -> f64 {
    let mut table = values.to_vec();
    let mut factor = 4.0;
    while table.len() > 1 {
        table = table
            .windows(2)
            .map(|w| (factor * w[1] - w[0]) / (factor - 1.0))
            .collect();
        factor *= 4.0;
    }
    table[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Sublattice;
    use crate::model::{classical_energy, ground_state};

    fn params(j: f64, hx: f64, hz: f64) -> ModelParams<f64> {
        ModelParams::new(j, hx, hz).unwrap()
    }

    #[test]
    fn two_site_matrix_by_hand() {
        let c = Cluster::<f64>::from_bonds(2, &[(0, 1)]).unwrap();
        let h = DenseHamiltonian::build(&c, &params(1.0, 0.1, 0.0)).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, -0.1, -0.1, 0.0, //
                -0.1, -1.0, 0.0, -0.1, //
                -0.1, 0.0, -1.0, -0.1, //
                0.0, -0.1, -0.1, 1.0,
            ],
        );
        assert_eq!(h.matrix(), &expected);
    }

    #[test]
    fn two_site_classical_spectrum() {
        let c = Cluster::<f64>::from_bonds(2, &[(0, 1)]).unwrap();
        let h = DenseHamiltonian::build(&c, &params(1.0, 0.0, 0.0)).unwrap();
        let spec = h.low_spectrum(4).unwrap();
        assert_eq!(spec.energies, vec![-1.0, -1.0, 1.0, 1.0]);
        assert!(h.low_spectrum(5).is_err());
    }

    #[test]
    fn off_diagonal_row_sums() {
        let g = LatticeGeom::new(3, 3).unwrap();
        let c = Cluster::<f64>::from_lattice(&g).unwrap();
        let h = DenseHamiltonian::build(&c, &params(1.0, 0.07, 2.0)).unwrap();
        assert!(h.matrix().clone().transpose() == *h.matrix());
        for r in 0..h.dimension() {
            let s: f64 = (0..h.dimension()).filter(|&c| c != r).map(|c| h.matrix()[(r, c)].abs()).sum();
            assert!((s - 9.0 * 0.07).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_reproduces_model_energies() {
        let g = LatticeGeom::new(3, 3).unwrap();
        let c = Cluster::<f64>::from_lattice(&g).unwrap();
        let p = params(1.0, 0.0, 2.0);
        let h = DenseHamiltonian::build(&c, &p).unwrap();
        for state in 0..512 {
            let spins = (0..9).map(|i| if state >> i & 1 == 1 { 1 } else { -1 }).collect();
            let cfg = SpinConfig::new(3, 3, spins).unwrap();
            assert_eq!(basis_index(&cfg), state);
            let e = classical_energy(&g, &cfg, &p).unwrap();
            assert!((h.diagonal(state) - e).abs() <= 1e-12 * e.abs().max(1.0));
        }
    }

    #[test]
    fn classical_ground_state_threefold() {
        let g = LatticeGeom::new(3, 3).unwrap();
        let c = Cluster::<f64>::from_lattice(&g).unwrap();
        let p = params(1.0, 0.0, 2.0);
        let spec = DenseHamiltonian::build(&c, &p).unwrap().low_spectrum(4).unwrap();
        let e_gs = classical_energy(&g, &ground_state(&g, Sublattice::A), &p).unwrap();
        assert_eq!(e_gs, -15.0);
        for k in 0..3 {
            assert!((spec.energies[k] - e_gs).abs() < 1e-12);
        }
        assert!(spec.energies[3] > e_gs + 1.0);
    }

    #[test]
    fn eigenpairs_are_accurate_and_orthonormal() {
        let g = LatticeGeom::new(3, 3).unwrap();
        let c = Cluster::<f64>::from_lattice(&g).unwrap();
        let h = DenseHamiltonian::build(&c, &params(1.0, 0.3, 2.0)).unwrap();
        let spec = h.low_spectrum(6).unwrap();
        let norm = h.matrix().norm();
        for (e, v) in spec.energies.iter().zip(&spec.states) {
            let r = h.matrix() * v - v * *e;
            assert!(r.norm() < 1e-10 * norm);
        }
        for a in 0..6 {
            for b in 0..6 {
                let dot = spec.states[a].dot(&spec.states[b]);
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
        assert!(spec.energies.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn degeneracy_splitting_is_tiny() {
        let g = LatticeGeom::new(3, 3).unwrap();
        let c = Cluster::<f64>::from_lattice(&g).unwrap();
        let spec = DenseHamiltonian::build(&c, &params(1.0, 0.05, 2.0))
            .unwrap()
            .low_spectrum(3)
            .unwrap();
        assert!(spec.energies[2] - spec.energies[0] < 1e-6);
    }

    #[test]
    fn pair_cluster_matches_subspace_up_to_constant() {
        let sub = SwSubspace::new(1.0, 2.0, 0.1, 1, 3).unwrap();
        let from_sub = DenseHamiltonian::from_sw_subspace(&sub);
        let c = Cluster::<f64>::domain_wall_pair(1, 3);
        let built = DenseHamiltonian::build(&c, &params(1.0, 0.1, 2.0)).unwrap();
        let shift = built.diagonal(SW_PAIR[0]) - from_sub.diagonal(SW_PAIR[0]);
        let diff = built.matrix() - from_sub.matrix() - DMatrix::identity(4, 4) * shift;
        assert!(diff.amax() < 1e-14);
    }

    #[test]
    fn subspace_splitting_approaches_lambda() {
        let c = Cluster::<f64>::domain_wall_pair(1, 3);
        let t = tunneling_splitting(&c, &params(1.0, 0.02, 2.0), SW_PAIR).unwrap();
        // exact: (sqrt(1 + 4 h^2) - 1) / 2
        let exact = ((1.0f64 + 4.0 * 0.02 * 0.02).sqrt() - 1.0) / 2.0;
        assert!((t - exact).abs() < 1e-14);
        let t0 = tunneling_splitting(&c, &params(1.0, 0.0, 2.0), SW_PAIR).unwrap();
        assert_eq!(t0, 0.0);
    }

    #[test]
    fn splitting_preconditions() {
        let c = Cluster::<f64>::domain_wall_pair(1, 3);
        let p = params(1.0, 0.02, 2.0);
        assert!(matches!(tunneling_splitting(&c, &p, [0b00, 0b10]), Err(EdError::NotDegenerate(_))));
        assert!(matches!(tunneling_splitting(&c, &p, [0b10, 0b10]), Err(EdError::NotAnExchange)));
        assert!(matches!(tunneling_splitting(&c, &p, [0b10, 0b100]), Err(EdError::BadState(_))));
        let big = params(1.0, 0.5, 2.0);
        assert!(matches!(tunneling_splitting(&c, &big, SW_PAIR), Err(EdError::NoGap { .. })));
    }

    #[test]
    fn exponent_fit_on_constructed_data() {
        let hs = [0.01, 0.02, 0.04, 0.08];
        let quad: Vec<f64> = hs.iter().map(|h| 3.0 * h * h).collect();
        assert!((fit_hopping_exponent(&hs, &quad).unwrap() - 2.0).abs() < 1e-12);
        let twenty: Vec<f64> = hs.iter().map(|h: &f64| 0.5 * h.powi(20)).collect();
        assert!((fit_hopping_exponent(&hs, &twenty).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(fit_hopping_exponent(&hs[..2], &quad[..2]), Err(EdError::TooFewPoints(2)));
        assert_eq!(
            fit_hopping_exponent(&hs, &[1.0, 0.0, 1.0, 1.0]),
            Err(EdError::DegenerateFit(1))
        );
    }

    #[test]
    fn richardson_removes_even_terms() {
        let f = |h: f64| 1.0 + 0.3 * h * h - 2.0 * h.powi(4);
        let vals = [f(0.02), f(0.01), f(0.005)];
        assert!((richardson_even(&vals) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn too_large_rejected() {
        let bonds: Vec<(usize, usize)> = (0..12).map(|i| (i, i + 1)).collect();
        assert_eq!(Cluster::<f64>::from_bonds(13, &bonds).unwrap_err(), EdError::TooLarge(13));
    }

    #[test]
    fn single_precision_build() {
        let c = Cluster::<f32>::from_bonds(2, &[(0, 1)]).unwrap();
        let p = ModelParams::new(1.0f32, 0.0, 0.0).unwrap();
        let spec = DenseHamiltonian::build(&c, &p).unwrap().low_spectrum(2).unwrap();
        assert_eq!(spec.energies, vec![-1.0f32, -1.0]);
    }
}
