//! Second-order effective Hamiltonian for a two-spin domain-wall subspace.
//!
//! Basis order is fixed to `(|-1,-1>, |-1,+1>, |+1,-1>, |+1,+1>)`. The two
//! middle states are the degenerate domain-wall configurations (energy zero
//! after subtracting the reference); the outer states are the virtual
//! hole and particle states with energies
//!
//! ```text
//! dE_h = -2 h_z + 2 J Z_h        dE_p = 2 h_z - 2 J Z_p
//! ```
//!
//! where `Z_h` and `Z_p` describe the local spin environment. The transverse
//! field couples every single-spin-flip pair with `-h_x`.
//!
//! The generator `S` solves `V + [S, H0] = 0` off the degenerate block and the
//! effective Hamiltonian is `H' = H0 + [S, V] / 2`. Everything here needs only
//! field arithmetic, so [`crate::Rational`] gives bit-exact answers.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use thiserror::Error;

use crate::scalar::Scalar;

pub const MAX_COORDINATION: u32 = 6;

/// Basis index of `|-1,-1>` (hole state).
pub const HOLE: usize = 0;
/// Basis index of `|-1,+1>`.
pub const LEFT_EMPTY: usize = 1;
/// Basis index of `|+1,-1>`.
pub const RIGHT_EMPTY: usize = 2;
/// Basis index of `|+1,+1>` (particle state).
pub const PARTICLE: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwError {
    #[error("coupling J must be positive, got {0}")]
    NonPositiveCoupling(f64),
    #[error("transverse field must be non-negative, got {0}")]
    NegativeTransverseField(f64),
    #[error("coordination {name} = {value} outside 0..=6")]
    CoordinationOutOfRange { name: &'static str, value: u32 },
    #[error("resonant denominator: h_z = J * {name} makes a virtual state degenerate with the domain states")]
    Resonant { name: &'static str },
    #[error("V couples degenerate states {0} and {1}; no generator exists")]
    ResonantCoupling(usize, usize),
}

/// Dense 4x4 matrix over any [`Scalar`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat4<T>(pub [[T; 4]; 4]);

impl<T: Scalar> Mat4<T> {
    pub fn zero() -> Self {
        Mat4([[T::zero(); 4]; 4])
    }

    pub fn identity() -> Self {
        Self::diagonal([T::one(); 4])
    }

    pub fn diagonal(d: [T; 4]) -> Self {
        let mut m = Self::zero();
        for (i, v) in d.into_iter().enumerate() {
            m.0[i][i] = v;
        }
        m
    }

    pub fn diag(&self) -> [T; 4] {
        [self.0[0][0], self.0[1][1], self.0[2][2], self.0[3][3]]
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                m.0[j][i] = self.0[i][j];
            }
        }
        m
    }

    pub fn scale(&self, k: T) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|v| *v = *v * k);
        m
    }

    /// `[self, other] = self * other - other * self`.
    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }

    pub fn max_abs(&self) -> T {
        self.0
            .iter()
            .flatten()
            .fold(T::zero(), |acc, v| acc.max_of(v.abs()))
    }

    pub fn is_symmetric(&self) -> bool {
        *self == self.transpose()
    }

    pub fn is_antisymmetric(&self) -> bool {
        *self == self.transpose().scale(-T::one())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Mat4<U> {
        let mut m = Mat4::<U>::zero();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = f(self.0[i][j]);
            }
        }
        m
    }

    pub fn to_f64(&self) -> Mat4<f64> {
        self.map(|v| v.as_f64())
    }
}

impl<T: Scalar> Add for Mat4<T> {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        let mut m = self;
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = m.0[i][j] + rhs.0[i][j];
            }
        }
        m
    }
}

impl<T: Scalar> Sub for Mat4<T> {
    type Output = Self;

    fn sub(self, rhs: Self) -> Self {
        let mut m = self;
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = m.0[i][j] - rhs.0[i][j];
            }
        }
        m
    }
}

impl<T: Scalar> Mul for Mat4<T> {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = T::zero();
                for k in 0..4 {
                    acc = acc + self.0[i][k] * rhs.0[k][j];
                }
                m.0[i][j] = acc;
            }
        }
        m
    }
}

impl<T> Index<(usize, usize)> for Mat4<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.0[i][j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat4<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.0[i][j]
    }
}

/// The two-spin subspace with its unperturbed and perturbing parts.
#[derive(Clone, Debug, PartialEq)]
pub struct SwSubspace<T> {
    pub coupling: T,
    pub longitudinal: T,
    pub transverse: T,
    pub hole_coordination: u32,
    pub particle_coordination: u32,
    /// Absolute energy of the domain-wall states, subtracted from `h0`.
    pub reference_energy: T,
    pub h0: Mat4<T>,
    pub v: Mat4<T>,
}

/// Generator, effective Hamiltonian and derived scalars for one subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct SwResult<T> {
    pub alpha: T,
    pub beta: T,
    pub lambda: T,
    pub generator: Mat4<T>,
    /// `H0 + [S, V] / 2` with `S` from the numeric solve.
    pub h_prime: Mat4<T>,
    /// Effective hopping `t = lambda * h_x^2`.
    pub hopping: T,
    /// Closed-form `H'` (with `H0` added back). `None` when `Z_h == Z_p`,
    /// where the printed closed form divides by zero.
    pub closed_form_h_prime: Option<Mat4<T>>,
}

/// Positions where `V` carries `-h_x`.
pub const V_PATTERN: [(usize, usize); 8] = [(0, 1), (0, 2), (1, 0), (1, 3), (2, 0), (2, 3), (3, 1), (3, 2)];

impl<T: Scalar> SwSubspace<T> {
    pub fn new(
        coupling: T,
        longitudinal: T,
        transverse: T,
        hole_coordination: u32,
        particle_coordination: u32,
    ) -> Result<Self, SwError> {
        if coupling <= T::zero() {
            return Err(SwError::NonPositiveCoupling(coupling.as_f64()));
        }
        if transverse < T::zero() {
            return Err(SwError::NegativeTransverseField(transverse.as_f64()));
        }
        for (name, value) in [("Z_h", hole_coordination), ("Z_p", particle_coordination)] {
            if value > MAX_COORDINATION {
                return Err(SwError::CoordinationOutOfRange { name, value });
            }
        }
        let zh = T::from_int(i64::from(hole_coordination));
        let zp = T::from_int(i64::from(particle_coordination));
        if longitudinal == coupling * zh {
            return Err(SwError::Resonant { name: "Z_h" });
        }
        if longitudinal == coupling * zp {
            return Err(SwError::Resonant { name: "Z_p" });
        }

        let two = T::from_int(2);
        let hole = -two * longitudinal + two * coupling * zh;
        let particle = two * longitudinal - two * coupling * zp;
        let h0 = Mat4::diagonal([hole, T::zero(), T::zero(), particle]);
        let mut v = Mat4::zero();
        for &(i, j) in &V_PATTERN {
            v[(i, j)] = -transverse;
        }

        Ok(Self {
            coupling,
            longitudinal,
            transverse,
            hole_coordination,
            particle_coordination,
            reference_energy: T::zero(),
            h0,
            v,
        })
    }

    pub fn with_reference_energy(mut self, reference: T) -> Self {
        self.reference_energy = reference;
        self
    }

    fn zh(&self) -> T {
        T::from_int(i64::from(self.hole_coordination))
    }

    fn zp(&self) -> T {
        T::from_int(i64::from(self.particle_coordination))
    }

    /// Virtual hole-state energy `-2 h_z + 2 J Z_h`.
    pub fn hole_cost(&self) -> T {
        self.h0[(HOLE, HOLE)]
    }

    /// Virtual particle-state energy `2 h_z - 2 J Z_p`.
    pub fn particle_cost(&self) -> T {
        self.h0[(PARTICLE, PARTICLE)]
    }

    /// `H0 + V` in the shifted (reference-subtracted) convention.
    pub fn full_hamiltonian(&self) -> Mat4<T> {
        self.h0 + self.v
    }

    /// `H0` with the reference energy restored.
    pub fn absolute_h0(&self) -> Mat4<T> {
        self.h0 + Mat4::identity().scale(self.reference_energy)
    }

    /// `V` with entries between energy-degenerate states removed.
    pub fn off_block_perturbation(&self) -> Mat4<T> {
        let e = self.h0.diag();
        let mut v = self.v;
        for a in 0..4 {
            for b in 0..4 {
                if e[a] == e[b] {
                    v[(a, b)] = T::zero();
                }
            }
        }
        v
    }

    /// Elementwise solve of `V + [S, H0] = 0`.
    ///
    /// `[S, H0]_ab = S_ab (E_b - E_a)`, so `S_ab = V_ab / (E_a - E_b)` between
    /// non-degenerate states and `S_ab = 0` inside degenerate blocks.
    pub fn solve_generator_numeric(&self) -> Result<Mat4<T>, SwError> {
        let e = self.h0.diag();
        let mut s = Mat4::zero();
        for a in 0..4 {
            for b in 0..4 {
                let gap = e[a] - e[b];
                if gap == T::zero() {
                    if a != b && self.v[(a, b)] != T::zero() {
                        return Err(SwError::ResonantCoupling(a, b));
                    }
                    continue;
                }
                s[(a, b)] = self.v[(a, b)] / gap;
            }
        }
        Ok(s)
    }

    /// `max |V_off + [S, H0]|`.
    pub fn commutator_residual(&self, generator: &Mat4<T>) -> T {
        (self.off_block_perturbation() + generator.commutator(&self.h0)).max_abs()
    }

    /// `alpha = h_x / (2 (h_z - J Z_h))`.
    pub fn alpha(&self) -> T {
        self.transverse / (T::from_int(2) * (self.longitudinal - self.coupling * self.zh()))
    }

    /// `beta = h_x / (2 (h_z - J Z_p))`.
    pub fn beta(&self) -> T {
        self.transverse / (T::from_int(2) * (self.longitudinal - self.coupling * self.zp()))
    }

    /// `lambda = (1 / (h_z - J Z_h) + 1 / (-h_z + J Z_p)) / 2`.
    pub fn lambda(&self) -> T {
        let a = T::one() / (self.longitudinal - self.coupling * self.zh());
        let b = T::one() / (-self.longitudinal + self.coupling * self.zp());
        (a + b) / T::from_int(2)
    }

    /// Generator assembled from `alpha` and `beta` in the closed-form sign
    /// pattern.
    pub fn closed_form_generator(&self) -> Mat4<T> {
        let (a, b, z) = (self.alpha(), self.beta(), T::zero());
        Mat4([[z, a, a, z], [-a, z, z, b], [-a, z, z, b], [z, -b, -b, z]])
    }

    /// Closed-form `H' - H0`: `lambda h_x^2` times the fixed pattern. `None`
    /// when `Z_h == Z_p`.
    pub fn closed_form_correction(&self) -> Option<Mat4<T>> {
        if self.hole_coordination == self.particle_coordination {
            return None;
        }
        let j = self.coupling;
        let hz = self.longitudinal;
        let denom = j * (self.zh() - self.zp());
        let two = T::from_int(2);
        let top = two * (-hz + j * self.zp()) / denom;
        let bottom = two * (hz - j * self.zh()) / denom;
        let (o, z, m) = (T::one(), T::zero(), -T::one());
        let pattern = Mat4([[top, z, z, m], [z, o, o, z], [z, o, o, z], [m, z, z, bottom]]);
        Some(pattern.scale(self.lambda() * self.transverse * self.transverse))
    }

    /// Closed-form `H'` in the same convention as [`SwResult::h_prime`].
    pub fn closed_form_h_prime(&self) -> Option<Mat4<T>> {
        self.closed_form_correction().map(|c| self.h0 + c)
    }

    /// `H0 + [S, V] / 2` from the numeric generator.
    pub fn effective_hamiltonian(&self) -> Result<SwResult<T>, SwError> {
        let generator = self.solve_generator_numeric()?;
        let h_prime = self.h0 + generator.commutator(&self.v).scale(T::one() / T::from_int(2));
        let lambda = self.lambda();
        Ok(SwResult {
            alpha: generator[(HOLE, LEFT_EMPTY)],
            beta: generator[(LEFT_EMPTY, PARTICLE)],
            lambda,
            generator,
            h_prime,
            hopping: lambda * self.transverse * self.transverse,
            closed_form_h_prime: self.closed_form_h_prime(),
        })
    }
}

impl<T: Scalar> SwResult<T> {
    /// Tunneling matrix element `H'(|-1,+1>, |+1,-1>)`.
    pub fn tunneling_element(&self) -> T {
        self.h_prime[(LEFT_EMPTY, RIGHT_EMPTY)]
    }

    /// Largest deviation between numeric and closed-form `H'`.
    pub fn closed_form_deviation(&self) -> Option<T> {
        self.closed_form_h_prime
            .as_ref()
            .map(|c| (self.h_prime - *c).max_abs())
    }
}

/// `t = lambda h_x^2` for the given environment.
pub fn effective_hopping<T: Scalar>(
    coupling: T,
    longitudinal: T,
    hole_coordination: u32,
    particle_coordination: u32,
    transverse: T,
) -> Result<T, SwError> {
    let sub = SwSubspace::new(
        coupling,
        longitudinal,
        transverse,
        hole_coordination,
        particle_coordination,
    )?;
    Ok(sub.lambda() * transverse * transverse)
}

impl SwSubspace<f64> {
    /// `exp(S) (H0 + V) exp(-S)` without truncation; useful to expose the
    /// order in `h_x` of what the second-order truncation drops.
    pub fn rotated_hamiltonian(&self) -> Result<Mat4<f64>, SwError> {
        let s = to_na(&self.solve_generator_numeric()?);
        let h = to_na(&self.full_hamiltonian());
        let u = s.exp();
        let u_inv = (-s).exp();
        Ok(from_na(&(u * h * u_inv)))
    }

    /// Ascending eigenvalues of a symmetric 4x4 matrix.
    pub fn eigenvalues(m: &Mat4<f64>) -> [f64; 4] {
        let mut ev: Vec<f64> = to_na(m).symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        [ev[0], ev[1], ev[2], ev[3]]
    }
}

fn to_na(m: &Mat4<f64>) -> nalgebra::Matrix4<f64> {
    nalgebra::Matrix4::from_fn(|i, j| m[(i, j)])
}

fn from_na(m: &nalgebra::Matrix4<f64>) -> Mat4<f64> {
    let mut out = Mat4::zero();
    for i in 0..4 {
        for j in 0..4 {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    fn reference() -> SwSubspace<f64> {
        SwSubspace::new(1.0, 2.0, 0.1, 1, 3).unwrap()
    }

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn h0_and_v_layout() {
        let sub = reference();
        assert_eq!(sub.h0, Mat4::diagonal([-2.0, 0.0, 0.0, -2.0]));
        assert_eq!(sub.hole_cost(), -2.0);
        assert_eq!(sub.particle_cost(), -2.0);
        for i in 0..4 {
            for j in 0..4 {
                let expected = if V_PATTERN.contains(&(i, j)) { -0.1 } else { 0.0 };
                assert_eq!(sub.v[(i, j)], expected);
            }
        }
        assert!(sub.v.is_symmetric());
    }

    #[test]
    fn zero_field_has_zero_perturbation() {
        let sub = SwSubspace::new(1.0, 2.0, 0.0, 1, 3).unwrap();
        assert_eq!(sub.v, Mat4::zero());
        assert_eq!(sub.solve_generator_numeric().unwrap(), Mat4::zero());
        assert_eq!(sub.alpha(), 0.0);
        assert_eq!(sub.effective_hamiltonian().unwrap().h_prime, sub.h0);
    }

    #[test]
    fn resonances_rejected() {
        assert_eq!(
            SwSubspace::new(1.0, 1.0, 0.1, 1, 3),
            Err(SwError::Resonant { name: "Z_h" })
        );
        assert_eq!(
            SwSubspace::new(1.0, 3.0, 0.1, 1, 3),
            Err(SwError::Resonant { name: "Z_p" })
        );
        assert!(SwSubspace::new(0.0, 3.0, 0.1, 1, 3).is_err());
        assert!(SwSubspace::new(1.0, 3.5, 0.1, 7, 3).is_err());
    }

    #[test]
    fn reference_point_scalars() {
        let sub = reference();
        assert!((sub.alpha() - 0.05).abs() < 1e-15);
        assert!((sub.beta() + 0.05).abs() < 1e-15);
        assert_eq!(sub.lambda(), 1.0);
        let s = sub.solve_generator_numeric().unwrap();
        assert!((s[(0, 1)] - 0.05).abs() < 1e-15);
        assert!((s[(1, 3)] + 0.05).abs() < 1e-15);
        assert!((s - sub.closed_form_generator()).max_abs() < 1e-12);
        assert!(s.is_antisymmetric());
    }

    #[test]
    fn reference_point_effective_hamiltonian() {
        let res = reference().effective_hamiltonian().unwrap();
        // second-order perturbation theory through either virtual state
        // gives +lambda h_x^2 = +0.01 for the tunneling element
        assert!((res.tunneling_element() - 0.01).abs() < 1e-15);
        assert!((res.hopping - 0.01).abs() < 1e-15);
        assert!((res.hopping - res.tunneling_element().abs()).abs() < 1e-12);
        assert!(res.h_prime.is_symmetric());
        assert!(res.closed_form_deviation().unwrap() < 1e-15);
        for (a, b) in [(0, 1), (0, 2), (1, 0), (2, 0), (1, 3), (3, 1), (2, 3), (3, 2)] {
            assert_eq!(res.h_prime[(a, b)], 0.0);
        }
    }

    #[test]
    fn exact_rational_agreement() {
        let sub = SwSubspace::new(q(3, 2), q(7, 3), q(1, 10), 2, 5).unwrap();
        let res = sub.effective_hamiltonian().unwrap();
        assert_eq!(res.generator, sub.closed_form_generator());
        assert_eq!(res.closed_form_h_prime.unwrap(), res.h_prime);
        assert_eq!(sub.commutator_residual(&res.generator), q(0, 1));
        assert_eq!(res.alpha, sub.alpha());
        assert_eq!(res.beta, sub.beta());
        assert_eq!(res.tunneling_element(), sub.lambda() * q(1, 100));
    }

    #[test]
    fn degenerate_environment_skips_closed_form() {
        let sub = SwSubspace::new(1.0f64, 2.5, 0.1, 2, 2).unwrap();
        let res = sub.effective_hamiltonian().unwrap();
        assert!(res.closed_form_h_prime.is_none());
        assert!(res.closed_form_deviation().is_none());
        assert!((res.tunneling_element() - sub.lambda() * 0.01).abs() < 1e-15);
    }

    #[test]
    fn hopping_is_quadratic() {
        let t1: f64 = effective_hopping(1.0, 2.0, 1, 3, 0.1).unwrap();
        let t2: f64 = effective_hopping(1.0, 2.0, 1, 3, 0.2).unwrap();
        assert!((t1 - 0.01).abs() < 1e-15);
        assert!((t2 / t1 - 4.0).abs() < 1e-12);
        let exact = effective_hopping(q(1, 1), q(2, 1), 1, 3, q(1, 10)).unwrap();
        assert_eq!(exact, q(1, 100));
    }

    #[test]
    fn reference_energy_is_explicit() {
        let sub = reference().with_reference_energy(-60.0);
        assert_eq!(sub.absolute_h0().diag(), [-62.0, -60.0, -60.0, -62.0]);
        assert_eq!(sub.h0.diag(), [-2.0, 0.0, 0.0, -2.0]);
    }

    #[test]
    fn rotated_hamiltonian_drops_first_order() {
        // the leftover coupling to virtual states is third order in h_x
        let leak = |hx: f64| {
            let full = SwSubspace::new(1.0, 2.0, hx, 1, 3).unwrap().rotated_hamiltonian().unwrap();
            full[(0, 1)].abs()
        };
        let (a, b) = (leak(0.1), leak(0.05));
        assert!(a < 0.1 * 0.1);
        assert!((a / b - 8.0).abs() < 0.5, "ratio {}", a / b);
    }

    #[test]
    fn single_precision_runs() {
        let sub = SwSubspace::<f32>::new(1.0, 2.0, 0.1, 1, 3).unwrap();
        let res = sub.effective_hamiltonian().unwrap();
        assert!((res.tunneling_element() - 0.01).abs() < 1e-6);
    }
}
