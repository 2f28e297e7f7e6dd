//! Small-strain elasticity in Mandel notation, the Green operator of a
//! homogeneous reference medium and its periodisation onto a space of
//! translates.
//!
//! Mandel vectors use the component order `(11, 22[, 33], √2·12[, √2·13,
//! √2·23])`, so tensor contractions are plain dot products and stiffness
//! tensors are symmetric `D×D` matrices with `D = d(d+1)/2`.
//!
//! Frequencies are integer vectors `k`. The operator `Γ̂⁰_k` is invariant
//! under `k ↦ t·k`, so any `2π` factor between `k` and the physical wave
//! vector cancels.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::numerics::solve_small;
use crate::translates::{CoefficientRule, GeneratorSpec, ORTHONORMAL_TOLERANCE};
use std::sync::Arc;

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Number of Mandel components for dimension `d`.
pub const fn mandel_size(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Tensor index pairs in Mandel order.
pub fn mandel_pairs(d: usize) -> &'static [(usize, usize)] {
    match d {
        1 => &[(0, 0)],
        2 => &[(0, 0), (1, 1), (0, 1)],
        3 => &[(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)],
        _ => panic!("unsupported dimension {d}"),
    }
}

#[inline]
fn mandel_weight(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        SQRT_2
    }
}

/// Symmetric second-order tensor as a Mandel vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymTensor2 {
    dim: usize,
    v: [f64; 6],
}

impl SymTensor2 {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, v: [0.0; 6] }
    }

    pub fn from_mandel(dim: usize, comps: &[f64]) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Dimension(dim));
        }
        let n = mandel_size(dim);
        if comps.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: comps.len(),
            });
        }
        let mut v = [0.0; 6];
        v[..n].copy_from_slice(comps);
        Ok(Self { dim, v })
    }

    /// From a full symmetric `d×d` matrix (row-major).
    pub fn from_matrix(dim: usize, a: &[f64]) -> Self {
        let mut v = [0.0; 6];
        for (idx, &(i, j)) in mandel_pairs(dim).iter().enumerate() {
            v[idx] = mandel_weight(i, j) * 0.5 * (a[i * dim + j] + a[j * dim + i]);
        }
        Self { dim, v }
    }

    pub fn to_matrix(&self) -> Vec<f64> {
        let d = self.dim;
        let mut a = vec![0.0; d * d];
        for (idx, &(i, j)) in mandel_pairs(d).iter().enumerate() {
            let x = self.v[idx] / mandel_weight(i, j);
            a[i * d + j] = x;
            a[j * d + i] = x;
        }
        a
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v[..mandel_size(self.dim)]
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

impl Index<usize> for SymTensor2 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.as_slice()[i]
    }
}

impl Add for SymTensor2 {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        for i in 0..6 {
            self.v[i] += o.v[i];
        }
        self
    }
}

impl Sub for SymTensor2 {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        for i in 0..6 {
            self.v[i] -= o.v[i];
        }
        self
    }
}

impl Mul<f64> for SymTensor2 {
    type Output = Self;
    fn mul(mut self, s: f64) -> Self {
        for x in &mut self.v {
            *x *= s;
        }
        self
    }
}

/// Fourth-order tensor with minor symmetries as a `D×D` Mandel matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tensor4 {
    dim: usize,
    a: [[f64; 6]; 6],
}

impl Tensor4 {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            a: [[0.0; 6]; 6],
        }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let n = mandel_size(dim);
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape {
                expected: n,
                got: rows.len(),
            });
        }
        let mut t = Self::zeros(dim);
        for i in 0..n {
            t.a[i][..n].copy_from_slice(&rows[i]);
        }
        Ok(t)
    }

    /// From a full `C_ijkl` callback.
    pub fn from_full(dim: usize, c: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        let pairs = mandel_pairs(dim);
        let mut t = Self::zeros(dim);
        for (p, &(i, j)) in pairs.iter().enumerate() {
            for (q, &(k, l)) in pairs.iter().enumerate() {
                t.a[p][q] = mandel_weight(i, j) * mandel_weight(k, l) * c(i, j, k, l);
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        mandel_size(self.dim)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        let n = self.size();
        (0..n).map(|i| self.a[i][..n].to_vec()).collect()
    }

    pub fn apply(&self, e: &SymTensor2) -> SymTensor2 {
        let mut out = SymTensor2::zeros(self.dim);
        self.apply_slice(e.as_slice(), &mut out.v[..self.size()]);
        out
    }

    /// `out = A·x` on raw Mandel slices.
    #[inline]
    pub fn apply_slice(&self, x: &[f64], out: &mut [f64]) {
        let n = self.size();
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += self.a[i][j] * x[j];
            }
            out[i] = s;
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.size();
        (0..n).all(|i| (0..n).all(|j| (self.a[i][j] - self.a[j][i]).abs() <= tol))
    }

    /// Positive definiteness by Cholesky.
    pub fn is_positive_definite(&self) -> bool {
        let n = self.size();
        if !self.is_symmetric(1e-12 * self.max_abs().max(1e-300)) {
            return false;
        }
        let mut l = [[0.0f64; 6]; 6];
        for j in 0..n {
            let mut s = self.a[j][j];
            for k in 0..j {
                s -= l[j][k] * l[j][k];
            }
            if s <= 0.0 {
                return false;
            }
            l[j][j] = s.sqrt();
            for i in j + 1..n {
                let mut s = self.a[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                l[i][j] = s / l[j][j];
            }
        }
        true
    }

    pub fn max_abs(&self) -> f64 {
        let n = self.size();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .fold(0.0, |m, (i, j)| m.max(self.a[i][j].abs()))
    }

    pub fn scale(mut self, s: f64) -> Self {
        for row in &mut self.a {
            for x in row {
                *x *= s;
            }
        }
        self
    }
}

impl Index<(usize, usize)> for Tensor4 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.a[i][j]
    }
}

impl IndexMut<(usize, usize)> for Tensor4 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.a[i][j]
    }
}

impl Add for Tensor4 {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        for i in 0..6 {
            for j in 0..6 {
                self.a[i][j] += o.a[i][j];
            }
        }
        self
    }
}

impl Sub for Tensor4 {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        for i in 0..6 {
            for j in 0..6 {
                self.a[i][j] -= o.a[i][j];
            }
        }
        self
    }
}

/// Isotropic Lamé pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lame {
    pub lambda: f64,
    pub mu: f64,
}

impl Lame {
    pub fn new(lambda: f64, mu: f64) -> Self {
        Self { lambda, mu }
    }

    pub fn stiffness(&self, dim: usize) -> Result<Tensor4> {
        iso_stiffness(self.lambda, self.mu, dim)
    }
}

/// `C_ijkl = λ δ_ij δ_kl + μ (δ_ik δ_jl + δ_il δ_jk)`.
pub fn iso_stiffness(lambda: f64, mu: f64, dim: usize) -> Result<Tensor4> {
    if !(1..=3).contains(&dim) {
        return Err(Error::Dimension(dim));
    }
    if !(mu > 0.0) || !(dim as f64 * lambda + 2.0 * mu > 0.0) {
        return Err(Error::Domain(format!(
            "Lamé parameters (λ={lambda}, μ={mu}) are not elliptic in {dim}-D"
        )));
    }
    let mut t = Tensor4::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            t.a[i][j] = lambda;
        }
    }
    for i in 0..mandel_size(dim) {
        t.a[i][i] += 2.0 * mu;
    }
    Ok(t)
}

/// `D×d` matrix `B(k)` with `Mandel(sym(k⊗u)) = B(k)·u`.
pub(crate) fn grad_matrix(k: &[f64]) -> ([[f64; 3]; 6], usize) {
    let d = k.len();
    let mut b = [[0.0; 3]; 6];
    for (p, &(i, j)) in mandel_pairs(d).iter().enumerate() {
        let w = mandel_weight(i, j);
        if i == j {
            b[p][i] = k[i];
        } else {
            b[p][j] += 0.5 * w * k[i];
            b[p][i] += 0.5 * w * k[j];
        }
    }
    (b, d)
}

/// Mandel form of `(i/2)(k·ûᵀ + û·kᵀ)`.
pub fn sym_grad_hat(k: &[i64], u_hat: &[Complex64]) -> Vec<Complex64> {
    let kf: Vec<f64> = k.iter().map(|&x| x as f64).collect();
    let (b, d) = grad_matrix(&kf);
    (0..mandel_size(d))
        .map(|p| {
            let s: Complex64 = (0..d).map(|l| u_hat[l] * b[p][l]).sum();
            s * Complex64::i()
        })
        .collect()
}

/// `Γ̂⁰_k` for a real frequency vector; zero at `k = 0`.
pub fn green_coeff_f64(c0: &Tensor4, k: &[f64]) -> Result<Tensor4> {
    let d = c0.dim();
    if k.len() != d {
        return Err(Error::Shape {
            expected: d,
            got: k.len(),
        });
    }
    let n = mandel_size(d);
    if k.iter().all(|&x| x == 0.0) {
        return Ok(Tensor4::zeros(d));
    }
    let (b, _) = grad_matrix(k);
    // CB = C0·B (n×d)
    let mut cb = [[0.0; 3]; 6];
    for p in 0..n {
        for l in 0..d {
            cb[p][l] = (0..n).map(|q| c0.a[p][q] * b[q][l]).sum();
        }
    }
    // acoustic A = Bᵀ·C0·B (d×d), rhs = Bᵀ (d×n)
    let mut acoustic = vec![0.0; d * d];
    for i in 0..d {
        for l in 0..d {
            acoustic[i * d + l] = (0..n).map(|p| b[p][i] * cb[p][l]).sum();
        }
    }
    let mut x = vec![0.0; d * n];
    for i in 0..d {
        for p in 0..n {
            x[i * n + p] = b[p][i];
        }
    }
    if !solve_small(d, &mut acoustic, &mut x, n, 1e-13) {
        return Err(Error::SingularSystem { condition: f64::INFINITY });
    }
    // Γ = B·A⁻¹·Bᵀ
    let mut g = Tensor4::zeros(d);
    for p in 0..n {
        for q in 0..n {
            g.a[p][q] = (0..d).map(|l| b[p][l] * x[l * n + q]).sum();
        }
    }
    // exact symmetry
    for p in 0..n {
        for q in p + 1..n {
            let s = 0.5 * (g.a[p][q] + g.a[q][p]);
            g.a[p][q] = s;
            g.a[q][p] = s;
        }
    }
    Ok(g)
}

/// Green operator coefficient `Γ̂⁰_k = ∇_k (∇_kᴴ : C⁰ : ∇_k)⁻¹ ∇_kᴴ`.
///
/// The factors `i` and `-i` of the two gradients cancel, so the result is a
/// real symmetric positive semidefinite Mandel matrix.
pub fn green_coeff(c0: &Tensor4, k: &[i64]) -> Result<Tensor4> {
    let kf: Vec<f64> = k.iter().map(|&x| x as f64).collect();
    green_coeff_f64(c0, &kf)
}

/// Periodised Green operator on `G(Mᵀ)`.
#[derive(Clone, Debug)]
pub struct GreenTable {
    lattice: Arc<Lattice>,
    reference: Tensor4,
    generator: GeneratorSpec,
    truncation: usize,
    /// `m` blocks of `D×D`, row-major, in frequency order.
    blocks: Vec<f64>,
}

impl GreenTable {
    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn reference(&self) -> &Tensor4 {
        &self.reference
    }

    pub fn generator(&self) -> &GeneratorSpec {
        &self.generator
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn ncomp(&self) -> usize {
        self.reference.size()
    }

    pub fn len(&self) -> usize {
        self.lattice.m()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Block at frequency index `i` as a `D×D` row-major slice.
    pub fn block(&self, i: usize) -> &[f64] {
        let nn = self.ncomp() * self.ncomp();
        &self.blocks[i * nn..(i + 1) * nn]
    }

    pub fn block_tensor(&self, i: usize) -> Tensor4 {
        let n = self.ncomp();
        let mut t = Tensor4::zeros(self.reference.dim());
        for (p, row) in self.block(i).chunks(n).enumerate() {
            t.a[p][..n].copy_from_slice(row);
        }
        t
    }
}

/// `Γ̂ᵖ_h = m·Σ_z Γ̂⁰_{h+Mᵀz}·|c_{h+Mᵀz}(f)|²` on every `h ∈ G(Mᵀ)`, with the
/// zero-frequency block set to zero.
///
/// The generator must be orthonormalised; the coset weights are checked to
/// sum to one as they are accumulated.
pub fn periodized_green(c0: &Tensor4, rule: &CoefficientRule) -> Result<GreenTable> {
    let lattice = rule.lattice().clone();
    let d = lattice.dim();
    if c0.dim() != d {
        return Err(Error::Shape {
            expected: d,
            got: c0.dim(),
        });
    }
    if !c0.is_positive_definite() {
        return Err(Error::Domain("reference stiffness is not positive definite".into()));
    }
    let n = mandel_size(d);
    let m = lattice.m();
    let mf = m as f64;
    let shifts = rule.shifts();
    let freqs = lattice.frequencies();

    let block = |i: usize| -> Result<[f64; 36]> {
        let h = freqs.get(i);
        let mut k = vec![0i64; d];
        let mut acc = [0.0f64; 36];
        let mut weight = 0.0;
        let zero = h.iter().all(|&x| x == 0);
        for s in &shifts {
            for ((kj, hj), sj) in k.iter_mut().zip(h).zip(s) {
                *kj = hj + sj;
            }
            let c = rule.coefficient(&k);
            if c == 0.0 {
                continue;
            }
            let w = c * c;
            weight += w;
            if zero {
                continue;
            }
            let g = green_coeff(c0, &k)?;
            for p in 0..n {
                for q in 0..n {
                    acc[p * n + q] += w * g.a[p][q];
                }
            }
        }
        let total = mf * weight;
        if (total - 1.0).abs() > ORTHONORMAL_TOLERANCE.max(2.0 * rule.truncation_error()) {
            return Err(Error::NotOrthonormal {
                h: h.to_vec(),
                value: total,
            });
        }
        for v in acc.iter_mut().take(n * n) {
            *v *= mf;
        }
        Ok(acc)
    };

    #[cfg(feature = "parallel")]
    let computed: Vec<Result<[f64; 36]>> = {
        use rayon::prelude::*;
        (0..m).into_par_iter().map(block).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let computed: Vec<Result<[f64; 36]>> = (0..m).map(block).collect();

    let mut blocks = Vec::with_capacity(m * n * n);
    for b in computed {
        blocks.extend_from_slice(&b?[..n * n]);
    }
    Ok(GreenTable {
        lattice,
        reference: *c0,
        generator: rule.spec().clone(),
        truncation: rule.truncation(),
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::PatternMatrix;
    use crate::translates::{dirichlet_rule, dlvp_rule, orthonormalize, bspline_rule};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Closed-form isotropic Green operator, written directly from the
    /// textbook index expression.
    fn iso_green_oracle(lambda: f64, mu: f64, k: &[f64]) -> Tensor4 {
        let d = k.len();
        let k2: f64 = k.iter().map(|x| x * x).sum();
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let c = (lambda + mu) / (mu * (lambda + 2.0 * mu));
        Tensor4::from_full(d, |i, j, kk, l| {
            (delta(kk, i) * k[l] * k[j]
                + delta(l, i) * k[kk] * k[j]
                + delta(kk, j) * k[l] * k[i]
                + delta(l, j) * k[kk] * k[i])
                / (4.0 * mu * k2)
                - c * k[i] * k[j] * k[kk] * k[l] / (k2 * k2)
        })
    }

    fn max_diff(a: &Tensor4, b: &Tensor4) -> f64 {
        (a.clone() - *b).max_abs()
    }

    #[test]
    fn iso_stiffness_examples() {
        let c = iso_stiffness(0.0, 0.5, 2).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
        let c = iso_stiffness(1.0, 1.0, 2).unwrap();
        assert_eq!(
            c.rows(),
            vec![vec![3.0, 1.0, 0.0], vec![1.0, 3.0, 0.0], vec![0.0, 0.0, 2.0]]
        );
        assert!(iso_stiffness(1.0, 0.0, 2).is_err());
        assert!(iso_stiffness(-2.0, 1.0, 3).is_err());
        // matches the full-index construction
        let full = Tensor4::from_full(3, |i, j, k, l| {
            let dl = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
            2.0 * dl(i, j) * dl(k, l) + 0.7 * (dl(i, k) * dl(j, l) + dl(i, l) * dl(j, k))
        });
        assert!(max_diff(&full, &iso_stiffness(2.0, 0.7, 3).unwrap()) < 1e-15);
    }

    #[test]
    fn mandel_contraction_is_tensor_contraction() {
        let a = [1.0, 0.3, 0.3, -2.0];
        let b = [0.5, -1.0, -1.0, 4.0];
        let ta = SymTensor2::from_matrix(2, &a);
        let tb = SymTensor2::from_matrix(2, &b);
        let full: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((ta.dot(&tb) - full).abs() < 1e-15);
        assert_eq!(ta.to_matrix(), a.to_vec());
    }

    #[test]
    fn sym_grad_examples() {
        let z = sym_grad_hat(&[0, 0], &[Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)]);
        assert!(z.iter().all(|v| v.norm() == 0.0));
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::default();
        let g = sym_grad_hat(&[1, 0], &[one, zero]);
        assert!((g[0] - Complex64::i()).norm() < 1e-15);
        assert!(g[1].norm() < 1e-15 && g[2].norm() < 1e-15);
        let g = sym_grad_hat(&[0, 1], &[one, zero]);
        assert!(g[0].norm() < 1e-15 && g[1].norm() < 1e-15);
        assert!((g[2] - Complex64::i() * (SQRT_2 / 2.0)).norm() < 1e-15);
    }

    #[test]
    fn green_matches_isotropic_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for d in [2usize, 3] {
            for _ in 0..200 {
                let lambda = rng.gen_range(0.1..5.0);
                let mu = rng.gen_range(0.1..5.0);
                let k: Vec<i64> = (0..d).map(|_| rng.gen_range(-20..=20)).collect();
                if k.iter().all(|&x| x == 0) {
                    continue;
                }
                let c0 = iso_stiffness(lambda, mu, d).unwrap();
                let g = green_coeff(&c0, &k).unwrap();
                let kf: Vec<f64> = k.iter().map(|&x| x as f64).collect();
                let o = iso_green_oracle(lambda, mu, &kf);
                assert!(max_diff(&g, &o) < 1e-12 * o.max_abs().max(1.0));
            }
        }
    }

    #[test]
    fn green_zero_frequency_and_homogeneity() {
        let c0 = iso_stiffness(1.3, 0.8, 2).unwrap();
        assert_eq!(green_coeff(&c0, &[0, 0]).unwrap(), Tensor4::zeros(2));
        // Γ̂⁰ is invariant under k ↦ t·k
        for t in [2i64, 3, -1] {
            let a = green_coeff(&c0, &[3, -2]).unwrap();
            let b = green_coeff(&c0, &[3 * t, -2 * t]).unwrap();
            assert!(max_diff(&a, &b) < 1e-14);
        }
    }

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> Tensor4 {
        let n = mandel_size(d);
        let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let s = &a * a.transpose() + DMatrix::<f64>::identity(n, n) * 0.5;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| s[(i, j)]).collect()).collect();
        Tensor4::from_rows(d, &rows).unwrap()
    }

    #[test]
    fn green_projector_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in [2usize, 3] {
            let c0 = random_spd(&mut rng, d);
            let n = mandel_size(d);
            for _ in 0..20 {
                let k: Vec<i64> = (0..d).map(|_| rng.gen_range(-5..=5)).collect();
                if k.iter().all(|&x| x == 0) {
                    continue;
                }
                let u: Vec<Complex64> =
                    (0..d).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0)).collect();
                let e = sym_grad_hat(&k, &u);
                // compatible strain is purely imaginary; use its imaginary part
                let e_im: Vec<f64> = e.iter().map(|v| v.im).collect();
                let mut s = vec![0.0; n];
                c0.apply_slice(&e_im, &mut s);
                let mut back = vec![0.0; n];
                green_coeff(&c0, &k).unwrap().apply_slice(&s, &mut back);
                for (x, y) in back.iter().zip(&e_im) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    fn lattice(rows: &[Vec<i64>]) -> Arc<Lattice> {
        Arc::new(Lattice::new(&PatternMatrix::from_rows(rows).unwrap()).unwrap())
    }

    fn is_psd(t: &Tensor4) -> bool {
        let n = t.size();
        let m = DMatrix::<f64>::from_fn(n, n, |i, j| t[(i, j)]);
        let e = m.symmetric_eigen();
        e.eigenvalues.iter().all(|&v| v > -1e-12)
    }

    #[test]
    fn dirichlet_periodisation_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let l = lattice(&[vec![5, 2], vec![-1, 4]]);
        let c0 = random_spd(&mut rng, 2);
        let rule = orthonormalize(&dirichlet_rule(l.clone())).unwrap();
        let table = periodized_green(&c0, &rule).unwrap();
        for (i, h) in l.frequencies().iter().enumerate() {
            let g = green_coeff(&c0, h).unwrap();
            assert!(max_diff(&table.block_tensor(i), &g) < 1e-12);
        }
    }

    #[test]
    fn non_orthonormal_generator_is_rejected() {
        let l = lattice(&[vec![4, 0], vec![0, 4]]);
        let c0 = iso_stiffness(1.0, 1.0, 2).unwrap();
        assert!(matches!(
            periodized_green(&c0, &dirichlet_rule(l)),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn dlvp_periodisation_matches_wide_sum_and_is_psd() {
        let l = lattice(&[vec![8, 17], vec![0, 8]]);
        let c0 = iso_stiffness(2.0, 1.5, 2).unwrap();
        let rule = orthonormalize(&dlvp_rule(l.clone(), &[0.4, 0.0]).unwrap()).unwrap();
        let table = periodized_green(&c0, &rule).unwrap();
        let wide = periodized_green(&c0, &rule.clone().with_truncation(4)).unwrap();
        let m = l.m() as f64;
        let mt = l.matrix().transpose();
        for (i, h) in l.frequencies().iter().enumerate() {
            let t = table.block_tensor(i);
            assert!(max_diff(&t, &wide.block_tensor(i)) < 1e-13);
            assert!(t.is_symmetric(1e-14));
            assert!(is_psd(&t));
            // brute force sum written out
            if i != 0 {
                let mut acc = Tensor4::zeros(2);
                for z0 in -4i64..=4 {
                    for z1 in -4i64..=4 {
                        let s = mt.mul_vec(&[z0, z1]);
                        let k = [h[0] + s[0], h[1] + s[1]];
                        let c = rule.coefficient(&k);
                        if c != 0.0 {
                            acc = acc + green_coeff(&c0, &k).unwrap().scale(m * c * c);
                        }
                    }
                }
                assert!(max_diff(&acc, &t) < 1e-13);
            }
        }
        assert_eq!(table.block_tensor(0), Tensor4::zeros(2));
    }

    #[test]
    fn bspline_table_is_psd_and_conjugate_symmetric() {
        let l = lattice(&[vec![4, 1], vec![0, 4]]);
        let c0 = iso_stiffness(1.0, 1.0, 2).unwrap();
        // order 4 keeps the truncated coset boxes of h and -h within 1e-14
        let rule = orthonormalize(&bspline_rule(l.clone(), 4).unwrap()).unwrap();
        let table = periodized_green(&c0, &rule).unwrap();
        for (i, h) in l.frequencies().iter().enumerate() {
            let t = table.block_tensor(i);
            assert!(is_psd(&t));
            let neg: Vec<i64> = h.iter().map(|x| -x).collect();
            let j = l.frequency_index(&neg);
            assert!(max_diff(&t, &table.block_tensor(j)) < 1e-12);
        }
    }
}
