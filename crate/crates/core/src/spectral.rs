//! Sine-basis Galerkin discretization of the Dirichlet Laplacian on the unit box.
//!
//! Modes are `phi_m(x) = 2^{d/2} prod_i sin(k_i pi x_i)`, orthonormal in L2,
//! so `||u||^2 = sum a_m^2` and `||grad u||^2 = sum mu_m a_m^2` with
//! `mu_m = pi^2 |k|^2`. Multi-indices are enumerated row-major, the last
//! component running fastest.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{EpsilonProfile, NonlinearitySpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Basis {
    pub dim: usize,
    pub modes_per_dim: usize,
    eigenvalues: Vec<f64>,
}

impl Basis {
    pub fn new(dim: usize, modes_per_dim: usize) -> Self {
        assert!((1..=3).contains(&dim), "dimension must be 1, 2 or 3");
        assert!(modes_per_dim >= 1, "need at least one mode per dimension");
        let len = modes_per_dim.pow(dim as u32);
        let eigenvalues = (0..len)
            .map(|i| {
                let k2: usize = multi_index(i, dim, modes_per_dim).iter().map(|k| k * k).sum();
                PI * PI * k2 as f64
            })
            .collect();
        Self {
            dim,
            modes_per_dim,
            eigenvalues,
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// First Dirichlet eigenvalue `d pi^2` (Poincare constant).
    pub fn lambda1(&self) -> f64 {
        self.dim as f64 * PI * PI
    }

    pub fn mode(&self, index: usize) -> Vec<usize> {
        multi_index(index, self.dim, self.modes_per_dim)
    }

    /// Flat index of a 1-based multi-index, if it lies in the basis.
    pub fn index_of(&self, mode: &[usize]) -> Option<usize> {
        if mode.len() != self.dim || mode.iter().any(|&k| k == 0 || k > self.modes_per_dim) {
            return None;
        }
        Some(mode.iter().fold(0, |acc, &k| acc * self.modes_per_dim + (k - 1)))
    }

    /// Mode label for CSV headers, e.g. `1_2_1`.
    pub fn label(&self, index: usize) -> String {
        self.mode(index)
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join("_")
    }

    /// Sum of `mu_m a_m^2`.
    pub fn grad_norm_sq(&self, u: &ModalField) -> f64 {
        self.weighted_norm_sq(u, 1.0)
    }

    /// `||Delta u||^2 = sum mu_m^2 a_m^2`.
    pub fn laplacian_norm_sq(&self, u: &ModalField) -> f64 {
        self.weighted_norm_sq(u, 2.0)
    }

    /// `||(-Delta)^{-1/2} u||^2`, the squared dual (H^{-1}) norm.
    pub fn dual_norm_sq(&self, u: &ModalField) -> f64 {
        self.weighted_norm_sq(u, -1.0)
    }

    fn weighted_norm_sq(&self, u: &ModalField, power: f64) -> f64 {
        debug_assert_eq!(u.len(), self.len());
        u.0.iter()
            .zip(&self.eigenvalues)
            .map(|(a, mu)| mu.powf(power) * a * a)
            .sum()
    }

    /// `(grad u, grad w) = sum mu_m a_m b_m`.
    pub fn grad_dot(&self, u: &ModalField, w: &ModalField) -> f64 {
        u.0.iter()
            .zip(&w.0)
            .zip(&self.eigenvalues)
            .map(|((a, b), mu)| mu * a * b)
            .sum()
    }

    pub fn apply_neg_laplacian(&self, u: &ModalField) -> ModalField {
        self.scale_by(u, |mu| mu)
    }

    pub fn apply_inv_neg_laplacian(&self, u: &ModalField) -> ModalField {
        self.scale_by(u, |mu| 1.0 / mu)
    }

    pub fn apply_inv_sqrt_neg_laplacian(&self, u: &ModalField) -> ModalField {
        self.scale_by(u, |mu| 1.0 / mu.sqrt())
    }

    fn scale_by(&self, u: &ModalField, f: impl Fn(f64) -> f64) -> ModalField {
        ModalField(u.0.iter().zip(&self.eigenvalues).map(|(a, &mu)| a * f(mu)).collect())
    }

    /// `||grad u||^2 + eps(t) ||v||^2`.
    pub fn xt_norm_sq(&self, state: &ModalState, eps: &EpsilonProfile) -> Result<f64> {
        let (e, _) = eps.eval(state.t)?;
        Ok(self.xt_norm_sq_with(state, e))
    }

    pub fn xt_norm_sq_with(&self, state: &ModalState, eps: f64) -> f64 {
        self.grad_norm_sq(&state.u) + eps * state.v.norm_sq()
    }
}

fn multi_index(mut index: usize, dim: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0; dim];
    for slot in out.iter_mut().rev() {
        *slot = index % n + 1;
        index /= n;
    }
    out
}

/// Galerkin coefficients of a scalar field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModalField(pub Vec<f64>);

impl ModalField {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum()
    }

    pub fn dot(&self, other: &ModalField) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|a| a.is_finite())
    }

    pub fn sub(&self, other: &ModalField) -> ModalField {
        ModalField(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &ModalField) -> ModalField {
        ModalField(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scaled(&self, s: f64) -> ModalField {
        ModalField(self.0.iter().map(|a| a * s).collect())
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &ModalField) -> ModalField {
        ModalField(self.0.iter().zip(&other.0).map(|(a, b)| a + s * b).collect())
    }
}

/// Coefficients of `(u, du/dt)` at time `t`: a point of the phase space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModalState {
    pub t: f64,
    pub u: ModalField,
    pub v: ModalField,
}

impl ModalState {
    pub fn zeros(len: usize, t: f64) -> Self {
        Self {
            t,
            u: ModalField::zeros(len),
            v: ModalField::zeros(len),
        }
    }

    pub fn sub(&self, other: &ModalState) -> ModalState {
        ModalState {
            t: self.t,
            u: self.u.sub(&other.u),
            v: self.v.sub(&other.v),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// Discrete sine transform pair between modal coefficients and values on the
/// interior nodes `x_j = j / (M + 1)`, `j = 1..=M`, of each axis.
#[derive(Debug, Clone)]
pub struct Collocation {
    pub basis: Basis,
    pub nodes_per_dim: usize,
    /// `[M x N]` synthesis matrix, `sqrt(2) sin(k pi x_j)`.
    synth: Vec<f64>,
    /// `[N x M]` analysis matrix, the synthesis transpose divided by `M + 1`.
    analysis: Vec<f64>,
}

impl Collocation {
    pub fn new(basis: &Basis, nodes_per_dim: usize) -> Result<Self> {
        let n = basis.modes_per_dim;
        let m = nodes_per_dim;
        if m < n + 1 {
            return Err(Error::Aliasing {
                modes: n,
                grid: m,
                needed: n + 1,
            });
        }
        let h = 1.0 / (m + 1) as f64;
        let mut synth = vec![0.0; m * n];
        let mut analysis = vec![0.0; n * m];
        for j in 0..m {
            for k in 0..n {
                let s = 2f64.sqrt() * (PI * ((k + 1) * (j + 1)) as f64 * h).sin();
                synth[j * n + k] = s;
                analysis[k * m + j] = s * h;
            }
        }
        Ok(Self {
            basis: basis.clone(),
            nodes_per_dim,
            synth,
            analysis,
        })
    }

    /// The dealiasing grid `M = 2N` used for the nonlinear terms.
    pub fn dealiased(basis: &Basis) -> Self {
        Self::new(basis, 2 * basis.modes_per_dim).expect("2N >= N + 1")
    }

    pub fn grid_len(&self) -> usize {
        self.nodes_per_dim.pow(self.basis.dim as u32)
    }

    /// Node coordinates along one axis.
    pub fn nodes(&self) -> Vec<f64> {
        let h = 1.0 / (self.nodes_per_dim + 1) as f64;
        (1..=self.nodes_per_dim).map(|j| j as f64 * h).collect()
    }

    /// Cell volume of the interior-node rectangle rule.
    pub fn weight(&self) -> f64 {
        (1.0 / (self.nodes_per_dim + 1) as f64).powi(self.basis.dim as i32)
    }

    pub fn to_grid(&self, u: &ModalField) -> Vec<f64> {
        self.transform(&u.0, self.basis.modes_per_dim, self.nodes_per_dim, &self.synth)
    }

    pub fn from_grid(&self, values: &[f64]) -> ModalField {
        ModalField(self.transform(values, self.nodes_per_dim, self.basis.modes_per_dim, &self.analysis))
    }

    /// `int_Omega f` for nodal values of `f`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weight() * values.iter().sum::<f64>()
    }

    fn transform(&self, input: &[f64], n_in: usize, n_out: usize, mat: &[f64]) -> Vec<f64> {
        let dim = self.basis.dim;
        let mut shape = vec![n_in; dim];
        let mut data = input.to_vec();
        for axis in 0..dim {
            data = apply_axis(&data, &shape, axis, mat, n_out);
            shape[axis] = n_out;
        }
        data
    }

    /// Projection of `g(u)` on the basis, with `g` evaluated on the nodes.
    pub fn eval_nonlinearity(&self, g: &NonlinearitySpec, u: &ModalField) -> Result<ModalField> {
        if g.is_zero() {
            return Ok(ModalField::zeros(u.len()));
        }
        let mut nodal = self.to_grid(u);
        for x in nodal.iter_mut() {
            *x = g.g(*x)?;
        }
        Ok(self.from_grid(&nodal))
    }

    /// `(G(u), 1)` by the nodal rule.
    pub fn potential_integral(&self, g: &NonlinearitySpec, u: &ModalField) -> Result<f64> {
        if g.is_zero() {
            return Ok(0.0);
        }
        let nodal = self.to_grid(u);
        let mut sum = 0.0;
        for x in nodal {
            sum += g.eval(x)?.2;
        }
        Ok(sum * self.weight())
    }

    /// `(g(u), u)` by the nodal rule.
    pub fn work_integral(&self, g: &NonlinearitySpec, u: &ModalField) -> Result<f64> {
        if g.is_zero() {
            return Ok(0.0);
        }
        let nodal = self.to_grid(u);
        let mut sum = 0.0;
        for x in nodal {
            sum += g.g(x)? * x;
        }
        Ok(sum * self.weight())
    }
}

/// Applies `mat` (`[n_out x n_in]`, row-major) along `axis` of a row-major array.
fn apply_axis(input: &[f64], shape: &[usize], axis: usize, mat: &[f64], n_out: usize) -> Vec<f64> {
    let n_in = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * n_out * inner];
    for o in 0..outer {
        let src = &input[o * n_in * inner..(o + 1) * n_in * inner];
        let dst = &mut out[o * n_out * inner..(o + 1) * n_out * inner];
        for q in 0..n_out {
            let row = &mat[q * n_in..(q + 1) * n_in];
            let d = &mut dst[q * inner..(q + 1) * inner];
            for (p, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let s = &src[p * inner..(p + 1) * inner];
                for (di, si) in d.iter_mut().zip(s) {
                    *di += w * si;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(rng: &mut ChaCha8Rng, len: usize) -> ModalField {
        ModalField((0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Quadrature oracle for `int_0^1 |d/dx (c sqrt2 sin(k pi x))|^2 dx`.
    fn grad_quadrature(k: usize, c: f64) -> f64 {
        let kp = k as f64 * PI;
        integrate(&|x| (c * 2f64.sqrt() * kp * (kp * x).cos()).powi(2), 0.0, 1.0, 1e-13)
    }

    #[test]
    fn enumeration_and_lambda1() {
        let b = Basis::new(3, 4);
        assert_eq!(b.len(), 64);
        assert_eq!(b.mode(0), vec![1, 1, 1]);
        assert_eq!(b.mode(1), vec![1, 1, 2]);
        assert_eq!(b.index_of(&[2, 3, 4]), Some(16 + 2 * 4 + 3));
        assert_eq!(b.index_of(&[5, 1, 1]), None);
        let min = b.eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(min, b.lambda1());
        assert!(b.eigenvalues().iter().all(|&mu| mu > 0.0));
        for i in 0..b.len() {
            assert_eq!(b.index_of(&b.mode(i)), Some(i));
        }
    }

    #[test]
    fn gradient_norm_matches_quadrature() {
        let b = Basis::new(1, 4);
        assert_eq!(b.grad_norm_sq(&ModalField::zeros(4)), 0.0);
        let mut u = ModalField::zeros(4);
        u.0[0] = 1.0;
        let expected = grad_quadrature(1, 1.0);
        assert!((expected - PI * PI).abs() < 1e-10);
        assert!((b.grad_norm_sq(&u) - expected).abs() < 1e-10);
        let mut u = ModalField::zeros(4);
        u.0[2] = 2.0;
        let expected = grad_quadrature(3, 2.0);
        assert!((expected - 36.0 * PI * PI).abs() < 1e-8);
        assert!((b.grad_norm_sq(&u) - expected).abs() < 1e-8);
    }

    #[test]
    fn xt_norm_examples() {
        let b = Basis::new(1, 3);
        let eps = EpsilonProfile::constant(2.0);
        let mut s = ModalState::zeros(3, 0.0);
        assert_eq!(b.xt_norm_sq(&s, &eps).unwrap(), 0.0);
        s.v.0[0] = 1.0;
        assert_eq!(b.xt_norm_sq(&s, &eps).unwrap(), 2.0);
        let mut s = ModalState::zeros(3, 0.0);
        s.u.0[0] = 1.0;
        assert!((b.xt_norm_sq(&s, &eps).unwrap() - PI * PI).abs() < 1e-12);
    }

    #[test]
    fn inverse_laplacians() {
        let b = Basis::new(1, 3);
        let mut u = ModalField::zeros(3);
        u.0[0] = 1.0;
        assert!((b.apply_inv_sqrt_neg_laplacian(&u).0[0] - 1.0 / PI).abs() < 1e-15);
        assert_eq!(b.apply_neg_laplacian(&ModalField::zeros(3)), ModalField::zeros(3));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = Basis::new(2, 5);
        let f = random_field(&mut rng, b.len());
        let back = b.apply_inv_neg_laplacian(&b.apply_neg_laplacian(&f));
        assert!(back.0.iter().zip(&f.0).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn aliasing_guard() {
        let b = Basis::new(1, 8);
        assert!(matches!(Collocation::new(&b, 8), Err(Error::Aliasing { .. })));
        assert!(Collocation::new(&b, 9).is_ok());
    }

    #[test]
    fn round_trip_and_nodal_values() {
        let b = Basis::new(1, 8);
        let c = Collocation::new(&b, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_field(&mut rng, 8);
        let back = c.from_grid(&c.to_grid(&f));
        assert!(back.0.iter().zip(&f.0).all(|(x, y)| (x - y).abs() < 1e-10));

        assert!(c.to_grid(&ModalField::zeros(8)).iter().all(|&x| x == 0.0));

        let mut single = ModalField::zeros(8);
        single.0[2] = 1.0;
        for (x, v) in c.nodes().iter().zip(c.to_grid(&single)) {
            assert!((v - 2f64.sqrt() * (3.0 * PI * x).sin()).abs() < 1e-13);
        }
    }

    #[test]
    fn round_trip_three_dimensions() {
        let b = Basis::new(3, 4);
        let c = Collocation::dealiased(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = random_field(&mut rng, b.len());
        let back = c.from_grid(&c.to_grid(&f));
        assert!(back.0.iter().zip(&f.0).all(|(x, y)| (x - y).abs() < 1e-10));
    }

    #[test]
    fn linear_nonlinearity_commutes() {
        let b = Basis::new(2, 5);
        let c = Collocation::dealiased(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_field(&mut rng, b.len());
        let out = c.eval_nonlinearity(&NonlinearitySpec::linear(-1.5), &f).unwrap();
        assert!(out.0.iter().zip(&f.0).all(|(x, y)| (x + 1.5 * y).abs() < 1e-12));
        let zero = c.eval_nonlinearity(&NonlinearitySpec::zero(), &f).unwrap();
        assert!(zero.0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cubic_projection_matches_quadrature() {
        // -(sqrt2 sin(pi x))^3 projected on sqrt2 sin(k pi x)
        let b = Basis::new(1, 6);
        let c = Collocation::dealiased(&b);
        let mut u = ModalField::zeros(6);
        u.0[0] = 1.0;
        let out = c.eval_nonlinearity(&NonlinearitySpec::cubic_soft(1.0), &u).unwrap();
        for k in 1..=6 {
            let kp = k as f64 * PI;
            let oracle = integrate(
                &|x| -(2f64.sqrt() * (PI * x).sin()).powi(3) * 2f64.sqrt() * (kp * x).sin(),
                0.0,
                1.0,
                1e-14,
            );
            assert!((out.0[k - 1] - oracle).abs() < 1e-12, "mode {k}");
        }
    }

    #[test]
    fn cubic_is_dealiased_in_three_dimensions() {
        // the 2N grid and a 3N+ reference grid give the same projection
        let b = Basis::new(3, 3);
        let coarse = Collocation::dealiased(&b);
        let fine = Collocation::new(&b, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_field(&mut rng, b.len());
        let g = NonlinearitySpec::cubic_soft(1.0);
        let a = coarse.eval_nonlinearity(&g, &f).unwrap();
        let r = fine.eval_nonlinearity(&g, &f).unwrap();
        assert!(a.0.iter().zip(&r.0).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for (dim, n) in [(1, 16), (2, 6), (3, 4)] {
            let b = Basis::new(dim, n);
            let c = Collocation::dealiased(&b);
            let f = random_field(&mut rng, b.len());
            let nodal: Vec<f64> = c.to_grid(&f).iter().map(|x| x * x).collect();
            let quad = c.integrate(&nodal);
            assert!(((quad - f.norm_sq()) / f.norm_sq()).abs() < 1e-8);
        }
    }

    #[test]
    fn poincare_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let b = Basis::new(2, 6);
        for _ in 0..1000 {
            let f = random_field(&mut rng, b.len());
            assert!(b.lambda1() * f.norm_sq() <= b.grad_norm_sq(&f) * (1.0 + 1e-15));
        }
    }

    proptest! {
        #[test]
        fn laplacian_operators_commute(coeffs in prop::collection::vec(-10.0f64..10.0, 27)) {
            let b = Basis::new(3, 3);
            let f = ModalField(coeffs);
            let ops: [fn(&Basis, &ModalField) -> ModalField; 3] = [
                Basis::apply_neg_laplacian,
                Basis::apply_inv_neg_laplacian,
                Basis::apply_inv_sqrt_neg_laplacian,
            ];
            for a in ops {
                for c in ops {
                    let ab = a(&b, &c(&b, &f));
                    let ba = c(&b, &a(&b, &f));
                    for (x, y) in ab.0.iter().zip(&ba.0) {
                        prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
                    }
                }
            }
        }
    }
}
