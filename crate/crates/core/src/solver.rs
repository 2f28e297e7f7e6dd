//! Nodal Lippmann–Schwinger and variational schemes on a space of
//! translates, a dense verification solver, effective stiffness and error
//! metrics.
//!
//! Fields live on the pattern: a strain field holds one Mandel vector per
//! pattern point (point-major storage). The periodised Green operator acts on
//! such a field by transforming every component, multiplying by the `D×D`
//! block `Γ̂ᵖ_h` per frequency and transforming back.


use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::elasticity::{GreenTable, Lame, SymTensor2, Tensor4};
use crate::error::{Error, Result};
use crate::numerics::{dot, norm2, pairwise_sum_by};
use crate::pfft::PatternFft;

/// Largest `m·D` accepted by [`dense_oracle`].
pub const DENSE_ORACLE_LIMIT: usize = 2048;

/// Stiffness sampled on the pattern.
#[derive(Clone, Debug)]
pub struct StiffnessField {
    dim: usize,
    values: Vec<Tensor4>,
}

impl StiffnessField {
    pub fn new(dim: usize, values: Vec<Tensor4>) -> Result<Self> {
        for (i, c) in values.iter().enumerate() {
            if c.dim() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    got: c.dim(),
                });
            }
            if !c.is_positive_definite() {
                return Err(Error::Domain(format!(
                    "stiffness at pattern point {i} is not positive definite"
                )));
            }
        }
        Ok(Self { dim, values })
    }

    pub fn uniform(c: Tensor4, m: usize) -> Result<Self> {
        Self::new(c.dim(), vec![c; m])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> &Tensor4 {
        &self.values[i]
    }

    pub fn values(&self) -> &[Tensor4] {
        &self.values
    }
}

/// Real strain field on the pattern (point-major Mandel components).
#[derive(Clone, Debug, PartialEq)]
pub struct StrainField {
    ncomp: usize,
    data: Vec<f64>,
}

impl StrainField {
    pub fn zeros(m: usize, ncomp: usize) -> Self {
        Self {
            ncomp,
            data: vec![0.0; m * ncomp],
        }
    }

    pub fn from_data(ncomp: usize, data: Vec<f64>) -> Result<Self> {
        if ncomp == 0 || !data.len().is_multiple_of(ncomp) {
            return Err(Error::Shape {
                expected: ncomp,
                got: data.len(),
            });
        }
        Ok(Self { ncomp, data })
    }

    pub fn constant(m: usize, e: &SymTensor2) -> Self {
        let ncomp = e.as_slice().len();
        let mut data = Vec::with_capacity(m * ncomp);
        for _ in 0..m {
            data.extend_from_slice(e.as_slice());
        }
        Self { ncomp, data }
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.ncomp
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncomp..(i + 1) * self.ncomp]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.data)
    }

    /// Pattern mean of each component.
    pub fn mean(&self) -> Vec<f64> {
        let m = self.len();
        let n = self.ncomp;
        (0..n)
            .map(|c| pairwise_sum_by(m, &|i| self.data[i * n + c]) / m as f64)
            .collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            ncomp: self.ncomp,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn relative_gap(&self, other: &Self) -> f64 {
        let diff: Vec<f64> = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        let base = norm2(&other.data).max(norm2(&self.data));
        if base == 0.0 {
            0.0
        } else {
            norm2(&diff) / base
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Neumann-series fixed point of the nodal Lippmann–Schwinger equation.
    LsFixedPoint,
    /// Krylov solve of the nodal variational equation.
    VeKrylov,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KrylovMethod {
    /// Conjugate gradients, falling back to GMRES on breakdown.
    #[default]
    Auto,
    /// Restarted GMRES only.
    MinimalResidual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub scheme: Scheme,
    pub krylov: KrylovMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 10_000,
            scheme: Scheme::LsFixedPoint,
            krylov: KrylovMethod::Auto,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Domain("tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Domain("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    /// Fluctuation strain `E` on the pattern.
    pub strain: StrainField,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
    pub converged: bool,
    /// `C^eff : ε⁰`.
    pub effective_action: SymTensor2,
    /// Krylov variant actually used (`"cg"`, `"gmres"`) or `"fixed_point"`.
    pub method: &'static str,
    pub wall_time_s: f64,
}

/// Reference stiffness from phase Lamé parameters: midpoint of the smallest
/// and largest `λ` and `μ` (the arithmetic mean for two phases).
pub fn midpoint_reference(phases: &[Lame]) -> Option<Lame> {
    let lo_l = phases.iter().map(|p| p.lambda).reduce(f64::min)?;
    let hi_l = phases.iter().map(|p| p.lambda).reduce(f64::max)?;
    let lo_m = phases.iter().map(|p| p.mu).reduce(f64::min)?;
    let hi_m = phases.iter().map(|p| p.mu).reduce(f64::max)?;
    Some(Lame::new(0.5 * (lo_l + hi_l), 0.5 * (lo_m + hi_m)))
}

/// Action of the periodised Green operator on nodal fields.
pub struct GreenOperator<'a> {
    table: &'a GreenTable,
    plan: PatternFft,
    /// Symmetric square roots of the blocks, for `r·Γᵖr` as a sum of squares.
    roots: Option<Vec<f64>>,
}

impl<'a> GreenOperator<'a> {
    pub fn new(table: &'a GreenTable) -> Self {
        Self {
            plan: PatternFft::new(table.lattice()),
            table,
            roots: None,
        }
    }

    /// Also precomputes `(Γ̂ᵖ_h)^{1/2}` so that [`GreenOperator::apply_energy`]
    /// returns a non-negative energy.
    pub fn with_roots(table: &'a GreenTable) -> Self {
        let n = table.ncomp();
        let mut roots = vec![0.0; table.len() * n * n];
        let work = |(i, dst): (usize, &mut [f64])| {
            let g = DMatrix::from_row_slice(n, n, table.block(i));
            let eig = g.symmetric_eigen();
            for p in 0..n {
                for q in 0..n {
                    dst[p * n + q] = (0..n)
                        .map(|k| {
                            eig.eigenvectors[(p, k)]
                                * eig.eigenvalues[k].max(0.0).sqrt()
                                * eig.eigenvectors[(q, k)]
                        })
                        .sum();
                }
            }
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            roots.par_chunks_mut(n * n).enumerate().for_each(work);
        }
        #[cfg(not(feature = "parallel"))]
        roots.chunks_mut(n * n).enumerate().for_each(work);
        Self {
            roots: Some(roots),
            ..Self::new(table)
        }
    }

    pub fn table(&self) -> &GreenTable {
        self.table
    }

    /// `out = Γᵖ(tau)`; both point-major with `D` components.
    pub fn apply(&self, tau: &[f64], out: &mut [f64]) {
        self.apply_inner(tau, out, false);
    }

    /// `out = Γᵖ(tau)` and returns `tau·Γᵖ(tau)`. With precomputed roots the
    /// energy is evaluated as `Σ_h ‖(Γ̂ᵖ_h)^{1/2} τ̂_h‖²`.
    pub fn apply_energy(&self, tau: &[f64], out: &mut [f64]) -> f64 {
        match self.apply_inner(tau, out, true) {
            Some(e) => e,
            None => dot(tau, out),
        }
    }

    fn apply_inner(&self, tau: &[f64], out: &mut [f64], energy: bool) -> Option<f64> {
        let n = self.table.ncomp();
        let m = self.table.len();
        debug_assert_eq!(tau.len(), m * n);
        let mut comps: Vec<Vec<Complex64>> = (0..n)
            .map(|c| (0..m).map(|i| Complex64::new(tau[i * n + c], 0.0)).collect())
            .collect();
        for_each_mut(&mut comps, |v| {
            self.plan.forward_in_place(v).expect("length checked");
        });
        let roots = if energy { self.roots.as_deref() } else { None };
        // per-frequency block multiply, written point-major; the last slot
        // of each chunk holds the frequency's energy contribution
        let stride = n + 1;
        let mut prod = vec![Complex64::default(); m * stride];
        let table = self.table;
        let work = |(i, dst): (usize, &mut [Complex64])| {
            let g = table.block(i);
            for p in 0..n {
                let mut s = Complex64::default();
                for q in 0..n {
                    s += comps[q][i] * g[p * n + q];
                }
                dst[p] = s;
            }
            if let Some(r) = roots {
                let r = &r[i * n * n..(i + 1) * n * n];
                let mut e = 0.0;
                for p in 0..n {
                    let mut s = Complex64::default();
                    for q in 0..n {
                        s += comps[q][i] * r[p * n + q];
                    }
                    e += s.norm_sqr();
                }
                dst[n] = Complex64::new(e, 0.0);
            }
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            prod.par_chunks_mut(stride).enumerate().for_each(work);
        }
        #[cfg(not(feature = "parallel"))]
        prod.chunks_mut(stride).enumerate().for_each(work);

        let e = roots.map(|_| pairwise_sum_by(m, &|i| prod[i * stride + n].re));
        for (c, comp) in comps.iter_mut().enumerate() {
            for i in 0..m {
                comp[i] = prod[i * stride + c];
            }
        }
        for_each_mut(&mut comps, |v| {
            self.plan.inverse_in_place(v).expect("length checked");
        });
        for c in 0..n {
            for i in 0..m {
                out[i * n + c] = comps[c][i].re;
            }
        }
        e
    }

    pub fn apply_new(&self, tau: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; tau.len()];
        self.apply(tau, &mut out);
        out
    }
}

fn for_each_mut<T: Send>(items: &mut [T], f: impl Fn(&mut T) + Sync + Send) {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter_mut().for_each(f);
    }
    #[cfg(not(feature = "parallel"))]
    items.iter_mut().for_each(f);
}

fn check_shapes(c: &StiffnessField, c0: &Tensor4, eps0: &SymTensor2, g: &GreenTable) -> Result<()> {
    if c.len() != g.len() {
        return Err(Error::Shape {
            expected: g.len(),
            got: c.len(),
        });
    }
    for d in [c.dim(), c0.dim(), eps0.dim()] {
        if d != g.lattice().dim() {
            return Err(Error::Shape {
                expected: g.lattice().dim(),
                got: d,
            });
        }
    }
    Ok(())
}

/// `out_i = A_i · (x_i + shift)` for each pattern point.
fn pointwise(
    tensors: &[Tensor4],
    x: &[f64],
    shift: Option<&[f64]>,
    n: usize,
    out: &mut [f64],
) {
    let mut tmp = [0.0f64; 6];
    for (i, a) in tensors.iter().enumerate() {
        let xi = &x[i * n..(i + 1) * n];
        match shift {
            Some(s) => {
                for c in 0..n {
                    tmp[c] = xi[c] + s[c];
                }
                a.apply_slice(&tmp[..n], &mut out[i * n..(i + 1) * n]);
            }
            None => a.apply_slice(xi, &mut out[i * n..(i + 1) * n]),
        }
    }
}

/// `(1/m)·Σ_y C(y) : (E_y + ε⁰)`.
pub fn effective_stiffness(c: &StiffnessField, e: &StrainField, eps0: &SymTensor2) -> SymTensor2 {
    let n = e.ncomp();
    let mut stress = vec![0.0; e.data().len()];
    pointwise(c.values(), e.data(), Some(eps0.as_slice()), n, &mut stress);
    let m = c.len();
    let mean: Vec<f64> = (0..n)
        .map(|k| pairwise_sum_by(m, &|i| stress[i * n + k]) / m as f64)
        .collect();
    SymTensor2::from_mandel(c.dim(), &mean).expect("consistent dimension")
}

/// Nodal residual `E + Γᵖ((C − C⁰):(E + ε⁰))` relative to `‖ε⁰‖` over the
/// pattern.
pub fn ls_residual(
    c: &StiffnessField,
    c0: &Tensor4,
    eps0: &SymTensor2,
    g: &GreenTable,
    e: &StrainField,
) -> f64 {
    let op = GreenOperator::new(g);
    let n = e.ncomp();
    let dc: Vec<Tensor4> = c.values().iter().map(|ci| *ci - *c0).collect();
    let mut tau = vec![0.0; e.data().len()];
    pointwise(&dc, e.data(), Some(eps0.as_slice()), n, &mut tau);
    let gt = op.apply_new(&tau);
    let r: Vec<f64> = e.data().iter().zip(&gt).map(|(a, b)| a + b).collect();
    norm2(&r) / ((c.len() as f64).sqrt() * eps0.norm())
}

/// Neumann-series iteration `E ← −Γᵖ((C − C⁰):(E + ε⁰))` from `E = 0`.
///
/// Returns the last iterate whose residual was evaluated.
pub fn ls_fixed_point(
    c: &StiffnessField,
    c0: &Tensor4,
    eps0: &SymTensor2,
    g: &GreenTable,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    check_shapes(c, c0, eps0, g)?;
    let start = Stopwatch::start();
    let m = c.len();
    let n = g.ncomp();
    let op = GreenOperator::new(g);
    let dc: Vec<Tensor4> = c.values().iter().map(|ci| *ci - *c0).collect();
    let scale = (m as f64).sqrt() * eps0.norm();

    let mut e = vec![0.0; m * n];
    let mut tau = vec![0.0; m * n];
    let mut gt = vec![0.0; m * n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    if scale == 0.0 {
        converged = true;
        history.push(0.0);
    }
    while !converged && iterations < cfg.max_iterations {
        pointwise(&dc, &e, Some(eps0.as_slice()), n, &mut tau);
        op.apply(&tau, &mut gt);
        iterations += 1;
        let res = norm2_sum(&e, &gt) / scale;
        history.push(res);
        if res <= cfg.tolerance {
            converged = true;
            break;
        }
        for (ei, gi) in e.iter_mut().zip(&gt) {
            *ei = -gi;
        }
    }
    let strain = StrainField { ncomp: n, data: e };
    let effective_action = effective_stiffness(c, &strain, eps0);
    Ok(SolveReport {
        final_residual: *history.last().unwrap_or(&f64::NAN),
        strain,
        iterations,
        residual_history: history,
        converged,
        effective_action,
        method: "fixed_point",
        wall_time_s: start.seconds(),
    })
}

fn norm2_sum(a: &[f64], b: &[f64]) -> f64 {
    pairwise_sum_by(a.len(), &|i| {
        let s = a[i] + b[i];
        s * s
    })
    .sqrt()
}

/// Relative residual of the nodal variational equation,
/// `‖C⁰Γᵖ C:(E + ε⁰)‖ / ‖C⁰Γᵖ C:ε⁰‖`. Returns `0` when the right-hand side
/// vanishes and `E = 0`.
pub fn ve_residual(
    c: &StiffnessField,
    c0: &Tensor4,
    eps0: &SymTensor2,
    g: &GreenTable,
    e: &StrainField,
) -> f64 {
    let op = GreenOperator::new(g);
    let n = e.ncomp();
    let zero = vec![0.0; e.data().len()];
    let num = ve_norm(&op, c, c0, e.data(), eps0, n);
    let den = ve_norm(&op, c, c0, &zero, eps0, n);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

fn ve_norm(
    op: &GreenOperator,
    c: &StiffnessField,
    c0: &Tensor4,
    e: &[f64],
    eps0: &SymTensor2,
    n: usize,
) -> f64 {
    let mut s = vec![0.0; e.len()];
    pointwise(c.values(), e, Some(eps0.as_slice()), n, &mut s);
    let z = op.apply_new(&s);
    c0_norm(c0, &z, n)
}

fn c0_norm(c0: &Tensor4, z: &[f64], n: usize) -> f64 {
    let mut w = vec![0.0; z.len()];
    for (src, dst) in z.chunks(n).zip(w.chunks_mut(n)) {
        c0.apply_slice(src, dst);
    }
    norm2(&w)
}

/// Solves `C⁰Γᵖ C:(E + ε⁰) = 0` for `E` in the range of `Γᵖ`.
///
/// The default path is conjugate gradients for `C·E = −C·ε⁰` preconditioned
/// by the positive semidefinite `Γᵖ`: iterates stay in the range of `Γᵖ`
/// and the stationarity condition is exactly `Γᵖ C:(E + ε⁰) = 0`. For the
/// Dirichlet generator this coincides with CG in the `C⁰`-weighted inner
/// product on compatible fields. A non-positive curvature or preconditioned
/// residual product switches to restarted GMRES on `E ↦ Γᵖ(C:E)`.
pub fn ve_krylov(
    c: &StiffnessField,
    c0: &Tensor4,
    eps0: &SymTensor2,
    g: &GreenTable,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    check_shapes(c, c0, eps0, g)?;
    let start = Stopwatch::start();
    let n = g.ncomp();
    let mut history = Vec::new();
    let (x, iterations, converged, method) = match cfg.krylov {
        KrylovMethod::Auto => {
            let op = GreenOperator::with_roots(g);
            match pcg(&op, c, c0, eps0, cfg, &mut history) {
                Ok((x, it, conv)) => (x, it, conv, "cg"),
                Err((x0, used)) => {
                    let budget = cfg.max_iterations.saturating_sub(used).max(1);
                    let (x, it, conv) = gmres(&op, c, c0, eps0, x0, budget, cfg.tolerance, &mut history);
                    (x, used + it, conv, "gmres")
                }
            }
        }
        KrylovMethod::MinimalResidual => {
            let op = GreenOperator::new(g);
            let x0 = vec![0.0; c.len() * n];
            let (x, it, conv) = gmres(&op, c, c0, eps0, x0, cfg.max_iterations, cfg.tolerance, &mut history);
            (x, it, conv, "gmres")
        }
    };
    let strain = StrainField { ncomp: n, data: x };
    let final_residual = ve_residual(c, c0, eps0, g, &strain);
    let effective_action = effective_stiffness(c, &strain, eps0);
    Ok(SolveReport {
        strain,
        iterations,
        residual_history: history,
        final_residual,
        converged,
        effective_action,
        method,
        wall_time_s: start.seconds(),
    })
}

/// Wall clock for reports; reads zero where the target has no clock.
struct Stopwatch(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Stopwatch {
    fn start() -> Self {
        Stopwatch(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.0.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        0.0
    }
}

/// Iterations without halving the residual before CG hands over to GMRES.
const PCG_STAGNATION: usize = 20;

/// On breakdown or stagnation returns the current iterate and the
/// iterations spent.
fn pcg(
    op: &GreenOperator,
    c: &StiffnessField,
    c0: &Tensor4,
    eps0: &SymTensor2,
    cfg: &SolverConfig,
    history: &mut Vec<f64>,
) -> std::result::Result<(Vec<f64>, usize, bool), (Vec<f64>, usize)> {
    let m = c.len();
    let n = op.table().ncomp();
    let mut x = vec![0.0; m * n];
    let mut r = vec![0.0; m * n];
    pointwise(c.values(), &x, Some(eps0.as_slice()), n, &mut r);
    for v in &mut r {
        *v = -*v;
    }
    let mut z = vec![0.0; m * n];
    let mut rho = op.apply_energy(&r, &mut z);
    let res0 = c0_norm(c0, &z, n);
    if res0 == 0.0 {
        history.push(0.0);
        return Ok((x, 0, true));
    }
    let mut p = z.clone();
    let mut q = vec![0.0; m * n];
    let (mut best, mut best_it) = (1.0, 0);
    for it in 1..=cfg.max_iterations {
        pointwise(c.values(), &p, None, n, &mut q);
        let curv = dot(&p, &q);
        if !(curv > 0.0) || !(rho > 0.0) {
            return Err((x, it - 1));
        }
        // exact line search; `rho` alone loses accuracy once `Γᵖr` is tiny
        // next to the equilibrated part of `r`
        let a = dot(&r, &p) / curv;
        for i in 0..x.len() {
            x[i] += a * p[i];
            r[i] -= a * q[i];
        }
        let rho_new = op.apply_energy(&r, &mut z);
        let res = c0_norm(c0, &z, n) / res0;
        history.push(res);
        if res <= cfg.tolerance {
            return Ok((x, it, true));
        }
        if res < 0.5 * best {
            best = res;
            best_it = it;
        } else if it - best_it >= PCG_STAGNATION {
            return Err((x, it));
        }
        let beta = rho_new / rho;
        rho = rho_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok((x, cfg.max_iterations, false))
}

const GMRES_RESTART: usize = 40;

/// Restarted GMRES on `E ↦ Γᵖ(C:E)` from `x`. Convergence is judged by the
/// `C⁰`-weighted residual recomputed at every restart.
#[allow(clippy::too_many_arguments)]
fn gmres(
    op: &GreenOperator,
    c: &StiffnessField,
    c0: &Tensor4,
    eps0: &SymTensor2,
    mut x: Vec<f64>,
    budget: usize,
    tolerance: f64,
    history: &mut Vec<f64>,
) -> (Vec<f64>, usize, bool) {
    let n = op.table().ncomp();
    let len = x.len();
    let apply_t = |v: &[f64]| {
        let mut s = vec![0.0; len];
        pointwise(c.values(), v, None, n, &mut s);
        op.apply_new(&s)
    };
    let mut b = vec![0.0; len];
    let zero = vec![0.0; len];
    pointwise(c.values(), &zero, Some(eps0.as_slice()), n, &mut b);
    let b: Vec<f64> = op.apply_new(&b).into_iter().map(|v| -v).collect();
    let bnorm = c0_norm(c0, &b, n);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        history.push(0.0);
        return (x, 0, true);
    }
    let b_eucl = norm2(&b);
    let mut total = 0;
    let mut target = 0.1 * tolerance;
    loop {
        let tx = apply_t(&x);
        let r: Vec<f64> = b.iter().zip(&tx).map(|(a, t)| a - t).collect();
        let true_res = c0_norm(c0, &r, n) / bnorm;
        if true_res <= tolerance {
            return (x, total, true);
        }
        if total >= budget {
            return (x, total, false);
        }
        let beta = norm2(&r);
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess: Vec<Vec<f64>> = Vec::new();
        let mut rot: Vec<(f64, f64)> = Vec::new();
        let mut gvec = vec![beta];
        for j in 0..GMRES_RESTART {
            if total >= budget {
                break;
            }
            total += 1;
            let mut w = apply_t(&basis[j]);
            let mut col = vec![0.0; j + 2];
            for (i, v) in basis.iter().enumerate() {
                let h = dot(&w, v);
                col[i] = h;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= h * vk;
                }
            }
            let wn = norm2(&w);
            col[j + 1] = wn;
            for (i, &(cc, ss)) in rot.iter().enumerate() {
                let t = cc * col[i] + ss * col[i + 1];
                col[i + 1] = -ss * col[i] + cc * col[i + 1];
                col[i] = t;
            }
            let rr = col[j].hypot(col[j + 1]);
            let (cc, ss) = if rr == 0.0 {
                (1.0, 0.0)
            } else {
                (col[j] / rr, col[j + 1] / rr)
            };
            col[j] = rr;
            col[j + 1] = 0.0;
            rot.push((cc, ss));
            gvec.push(-ss * gvec[j]);
            gvec[j] *= cc;
            hess.push(col);
            let est = gvec[j + 1].abs() / b_eucl;
            history.push(est);
            if est <= target || wn <= 1e-300 * beta {
                break;
            }
            basis.push(w.into_iter().map(|v| v / wn).collect());
        }
        let k = hess.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = gvec[i];
            for l in i + 1..k {
                s -= hess[l][i] * y[l];
            }
            y[i] = if hess[i][i] == 0.0 { 0.0 } else { s / hess[i][i] };
        }
        for (yi, v) in y.iter().zip(&basis) {
            for (xk, vk) in x.iter_mut().zip(v) {
                *xk += yi * vk;
            }
        }
        // the Euclidean estimate and the weighted residual can disagree
        target *= 0.1;
    }
}

/// Direct solve of the nodal Lippmann–Schwinger system by assembling its
/// `(m·D)×(m·D)` matrix column by column.
pub fn dense_oracle(
    c: &StiffnessField,
    c0: &Tensor4,
    eps0: &SymTensor2,
    g: &GreenTable,
) -> Result<StrainField> {
    check_shapes(c, c0, eps0, g)?;
    let n = g.ncomp();
    let size = c.len() * n;
    if size > DENSE_ORACLE_LIMIT {
        return Err(Error::Capacity {
            what: "dense oracle",
            size,
            limit: DENSE_ORACLE_LIMIT,
        });
    }
    let op = GreenOperator::new(g);
    let dc: Vec<Tensor4> = c.values().iter().map(|ci| *ci - *c0).collect();
    let mut a = DMatrix::<f64>::zeros(size, size);
    let mut unit = vec![0.0; size];
    let mut tau = vec![0.0; size];
    for j in 0..size {
        unit[j] = 1.0;
        pointwise(&dc, &unit, None, n, &mut tau);
        let col = op.apply_new(&tau);
        for i in 0..size {
            a[(i, j)] = col[i] + if i == j { 1.0 } else { 0.0 };
        }
        unit[j] = 0.0;
    }
    let zero = vec![0.0; size];
    pointwise(&dc, &zero, Some(eps0.as_slice()), n, &mut tau);
    let rhs = nalgebra::DVector::from_vec(op.apply_new(&tau).into_iter().map(|v| -v).collect());
    let lu = a.lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..size).map(|i| u[(i, i)].abs()).collect();
    let hi = diag.iter().cloned().fold(0.0, f64::max);
    let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition < 1e14) {
        return Err(Error::SingularSystem { condition });
    }
    let x = lu.solve(&rhs).ok_or(Error::SingularSystem { condition })?;
    StrainField::from_data(n, x.iter().copied().collect())
}

/// Error measures against a reference solution.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    /// `‖ε − ε̃‖ / ‖ε̃‖` over pattern points and Mandel components.
    pub e_l2: Option<f64>,
    /// `‖C̃^eff:ε⁰ − C^eff:ε⁰‖ / ‖C̃^eff:ε⁰‖`.
    pub e_eff: Option<f64>,
    /// Largest entry of the pointwise log error.
    pub e_log_max: Option<f64>,
    /// `log(1 + |ε ∓ ε̃|)` per pattern point.
    #[serde(skip)]
    pub e_log: Option<Vec<f64>>,
}

/// Compares a strain field and/or effective action with reference values.
///
/// `printed_sign` switches the pointwise log error from the difference
/// `ε − ε̃` to the sum `ε + ε̃`.
pub fn error_metrics(
    strain: Option<(&StrainField, &StrainField)>,
    effective: Option<(&SymTensor2, &SymTensor2)>,
    printed_sign: bool,
) -> Result<ErrorMetrics> {
    let mut out = ErrorMetrics::default();
    if let Some((e, r)) = strain {
        if e.data().len() != r.data().len() || e.ncomp() != r.ncomp() {
            return Err(Error::Shape {
                expected: r.data().len(),
                got: e.data().len(),
            });
        }
        let diff: Vec<f64> = e.data().iter().zip(r.data()).map(|(a, b)| a - b).collect();
        let rn = r.norm();
        out.e_l2 = Some(if rn == 0.0 { norm2(&diff) } else { norm2(&diff) / rn });
        let n = e.ncomp();
        let log: Vec<f64> = (0..e.len())
            .map(|i| {
                let s: f64 = (0..n)
                    .map(|c| {
                        let v = if printed_sign {
                            e.data()[i * n + c] + r.data()[i * n + c]
                        } else {
                            diff[i * n + c]
                        };
                        v * v
                    })
                    .sum();
                s.sqrt().ln_1p()
            })
            .collect();
        out.e_log_max = Some(log.iter().cloned().fold(0.0, f64::max));
        out.e_log = Some(log);
    }
    if let Some((a, r)) = effective {
        if a.dim() != r.dim() {
            return Err(Error::Shape {
                expected: r.dim(),
                got: a.dim(),
            });
        }
        let rn = r.norm();
        let dn = (*a - *r).norm();
        out.e_eff = Some(if rn == 0.0 { dn } else { dn / rn });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elasticity::{iso_stiffness, periodized_green};
    use crate::lattice::{Lattice, PatternMatrix};
    use crate::translates::{dirichlet_rule, dlvp_rule, orthonormalize};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn setup(rows: &[Vec<i64>], alpha: Option<&[f64]>, c0: &Tensor4) -> GreenTable {
        let l = Arc::new(Lattice::new(&PatternMatrix::from_rows(rows).unwrap()).unwrap());
        let rule = match alpha {
            None => dirichlet_rule(l),
            Some(a) => dlvp_rule(l, a).unwrap(),
        };
        periodized_green(c0, &orthonormalize(&rule).unwrap()).unwrap()
    }

    fn two_phase(rng: &mut ChaCha8Rng, m: usize, a: Tensor4, b: Tensor4) -> StiffnessField {
        let values = (0..m).map(|_| if rng.gen_bool(0.5) { a } else { b }).collect();
        StiffnessField::new(a.dim(), values).unwrap()
    }

    fn eps() -> SymTensor2 {
        SymTensor2::from_mandel(2, &[1.0, -0.3, 0.2]).unwrap()
    }

    #[test]
    fn homogeneous_reference_converges_immediately() {
        let c0 = iso_stiffness(1.0, 1.0, 2).unwrap();
        let g = setup(&[vec![4, 1], vec![0, 4]], None, &c0);
        let c = StiffnessField::uniform(c0, 16).unwrap();
        let r = ls_fixed_point(&c, &c0, &eps(), &g, &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.strain.norm(), 0.0);
        let v = ve_krylov(&c, &c0, &eps(), &g, &SolverConfig::default()).unwrap();
        assert!(v.converged);
        assert!(v.strain.norm() < 1e-12);
    }

    #[test]
    fn constant_stiffness_gives_zero_fluctuation() {
        let c0 = iso_stiffness(1.0, 1.0, 2).unwrap();
        let c1 = iso_stiffness(3.0, 2.0, 2).unwrap();
        let g = setup(&[vec![4, 1], vec![0, 4]], Some(&[0.4, 0.0]), &c0);
        let c = StiffnessField::uniform(c1, 16).unwrap();
        let r = ls_fixed_point(&c, &c0, &eps(), &g, &SolverConfig::default()).unwrap();
        assert!(r.strain.norm() < 1e-12);
        let want = c1.apply(&eps());
        assert!((r.effective_action - want).norm() < 1e-12);
    }

    #[test]
    fn fixed_point_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = iso_stiffness(1.0, 1.0, 2).unwrap();
        let b = iso_stiffness(5.0, 4.0, 2).unwrap();
        let c0 = iso_stiffness(3.0, 2.5, 2).unwrap();
        for alpha in [None, Some(&[0.5, 0.3][..])] {
            let g = setup(&[vec![8, 0], vec![0, 8]], alpha, &c0);
            let c = two_phase(&mut rng, 64, a, b);
            let cfg = SolverConfig {
                tolerance: 1e-11,
                ..Default::default()
            };
            let r = ls_fixed_point(&c, &c0, &eps(), &g, &cfg).unwrap();
            assert!(r.converged);
            let d = dense_oracle(&c, &c0, &eps(), &g).unwrap();
            assert!(r.strain.relative_gap(&d) < 1e-8);
            // linearity in the loading
            let d2 = dense_oracle(&c, &c0, &(eps() * 2.0), &g).unwrap();
            assert!(d2.relative_gap(&d.scaled(2.0)) < 1e-12);
            // re-evaluated residual
            assert!(ls_residual(&c, &c0, &eps(), &g, &r.strain) <= cfg.tolerance);
        }
    }

    #[test]
    fn dense_oracle_capacity_guard() {
        let c0 = iso_stiffness(1.0, 1.0, 2).unwrap();
        let g = setup(&[vec![32, 0], vec![0, 32]], None, &c0);
        let c = StiffnessField::uniform(c0, 1024).unwrap();
        assert!(matches!(
            dense_oracle(&c, &c0, &eps(), &g),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn dirichlet_ls_and_ve_agree_and_gmres_matches_cg() {
        // odd m: no half-open boundary classes in the Dirichlet index set
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = iso_stiffness(1.0, 1.0, 2).unwrap();
        let b = iso_stiffness(8.0, 6.0, 2).unwrap();
        let c0 = iso_stiffness(4.5, 3.5, 2).unwrap();
        let g = setup(&[vec![7, 3], vec![0, 7]], None, &c0);
        let c = two_phase(&mut rng, 49, a, b);
        let cfg = SolverConfig::default();
        let ls = ls_fixed_point(&c, &c0, &eps(), &g, &cfg).unwrap();
        let ve = ve_krylov(&c, &c0, &eps(), &g, &cfg).unwrap();
        assert_eq!(ve.method, "cg");
        assert!(ve.converged);
        assert!(ve.final_residual <= cfg.tolerance);
        assert!(ls.strain.relative_gap(&ve.strain) < 10.0 * cfg.tolerance);
        let tight = SolverConfig {
            tolerance: 1e-12,
            ..cfg.clone()
        };
        let gm = ve_krylov(
            &c,
            &c0,
            &eps(),
            &g,
            &SolverConfig {
                krylov: KrylovMethod::MinimalResidual,
                ..tight.clone()
            },
        )
        .unwrap();
        assert_eq!(gm.method, "gmres");
        assert!(gm.converged);
        let auto = ve_krylov(&c, &c0, &eps(), &g, &tight).unwrap();
        assert!(auto.converged);
        assert!(gm.strain.relative_gap(&auto.strain) < 1e-10);
        assert!(gm.strain.relative_gap(&ve.strain) < 1e-7);
    }

    #[test]
    fn converged_fields_have_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = iso_stiffness(1.0, 1.0, 2).unwrap();
        let b = iso_stiffness(3.0, 3.0, 2).unwrap();
        let c0 = iso_stiffness(2.0, 2.0, 2).unwrap();
        let g = setup(&[vec![6, 1], vec![2, 6]], Some(&[0.4, 0.0]), &c0);
        let c = two_phase(&mut rng, 34, a, b);
        for scheme in [Scheme::LsFixedPoint, Scheme::VeKrylov] {
            let cfg = SolverConfig {
                scheme,
                ..Default::default()
            };
            let r = match scheme {
                Scheme::LsFixedPoint => ls_fixed_point(&c, &c0, &eps(), &g, &cfg),
                Scheme::VeKrylov => ve_krylov(&c, &c0, &eps(), &g, &cfg),
            }
            .unwrap();
            for v in r.strain.mean() {
                assert!(v.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn metrics() {
        let e = StrainField::from_data(3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let r = e.clone();
        let s = SymTensor2::from_mandel(2, &[1.0, 2.0, 0.0]).unwrap();
        let out = error_metrics(Some((&e, &r)), Some((&s, &s)), false).unwrap();
        assert_eq!(out.e_l2, Some(0.0));
        assert_eq!(out.e_eff, Some(0.0));
        assert_eq!(out.e_log_max, Some(0.0));
        let printed = error_metrics(Some((&e, &r)), None, true).unwrap();
        assert!((printed.e_log_max.unwrap() - 3f64.ln()).abs() < 1e-15);
        let bad = StrainField::from_data(3, vec![0.0; 3]).unwrap();
        assert!(error_metrics(Some((&bad, &r)), None, false).is_err());
    }

    #[test]
    fn midpoint_reference_of_two_phases_is_the_mean() {
        let r = midpoint_reference(&[Lame::new(1.0, 1.0), Lame::new(2.0, 3.0)]).unwrap();
        assert_eq!(r, Lame::new(1.5, 2.0));
        assert!(midpoint_reference(&[]).is_none());
    }
}
