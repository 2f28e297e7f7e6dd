//! Generators of translation-invariant spaces, described by their Fourier
//! coefficients `c_k(f)`, `k ∈ ℤ^d`.
//!
//! Every `k` splits uniquely as `k = h + Mᵀz` with `h ∈ G(Mᵀ)`; a function in
//! the span of the pattern translates of `f` has coefficients `â_h·c_k(f)`.
//! Sums over a coset `h + Mᵀℤ^d` are bracket sums.
//!
//! Three generator families are provided:
//!
//! * Dirichlet kernel: indicator of `G(Mᵀ)`.
//! * de la Vallée Poussin means: `m^{-1/2}·B(M^{-T}k)` with `B` the tensor
//!   product of centred trapezoids of slope widths `αⱼ`.
//! * Tensor-product B-splines of order `p`: `m^{-1/2}·∏ sinc^p(π(M^{-T}k)ⱼ)`.
//!
//! All three are real and even, so `c_{-k} = c_k` and the coefficients are
//! stored as `f64`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, PatternMatrix};
use crate::pfft::FrequencySamples;

/// Target for the B-spline bracket-sum tail.
pub const BSPLINE_TAIL_TOLERANCE: f64 = 1e-12;

/// Largest number of periodic shifts `(2Z+1)^d` used by default for
/// space-compact generators.
pub const MAX_DEFAULT_SHIFTS: usize = 4096;

/// Tolerance on `m·[|c|²]^M_h = 1` accepted as orthonormal.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// Generator choice, in its JSON form
/// `{"kind":"dirichlet"} | {"kind":"dlvp","alpha":[0.4,0]} | {"kind":"bspline","order":1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Dirichlet,
    Dlvp { alpha: Vec<f64> },
    Bspline { order: u32 },
}

impl GeneratorSpec {
    pub fn label(&self) -> String {
        match self {
            GeneratorSpec::Dirichlet => "dirichlet".into(),
            GeneratorSpec::Dlvp { alpha } => format!("dlvp{alpha:?}"),
            GeneratorSpec::Bspline { order } => format!("bspline{order}"),
        }
    }
}

/// Extent of the coefficient sequence.
#[derive(Clone, Debug, PartialEq)]
pub enum Support {
    /// Nonzero only within `|z|∞ ≤ periods` of the base cell.
    Finite { periods: usize },
    /// Algebraic decay `|c_k| = O(‖M^{-T}k‖^{-order})`.
    Decay { order: u32 },
}

/// Coefficient rule `k ↦ c_k(f)` attached to a lattice.
#[derive(Clone, Debug)]
pub struct CoefficientRule {
    lattice: Arc<Lattice>,
    spec: GeneratorSpec,
    base: f64,
    class_scale: Option<Arc<Vec<f64>>>,
    support: Support,
    truncation: usize,
    truncation_error: f64,
    orthonormal: bool,
}

pub fn dirichlet_rule(lattice: Arc<Lattice>) -> CoefficientRule {
    CoefficientRule {
        lattice,
        spec: GeneratorSpec::Dirichlet,
        base: 1.0,
        class_scale: None,
        support: Support::Finite { periods: 0 },
        truncation: 0,
        truncation_error: 0.0,
        orthonormal: false,
    }
}

pub fn dlvp_rule(lattice: Arc<Lattice>, alpha: &[f64]) -> Result<CoefficientRule> {
    if alpha.len() != lattice.dim() {
        return Err(Error::Domain(format!(
            "alpha has {} entries for dimension {}",
            alpha.len(),
            lattice.dim()
        )));
    }
    if alpha.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::Domain(format!("alpha {alpha:?} outside [0,1]^d")));
    }
    let base = 1.0 / (lattice.m() as f64).sqrt();
    let periods = if alpha.iter().all(|&a| a == 0.0) { 0 } else { 1 };
    Ok(CoefficientRule {
        lattice,
        spec: GeneratorSpec::Dlvp {
            alpha: alpha.to_vec(),
        },
        base,
        class_scale: None,
        support: Support::Finite { periods },
        truncation: periods,
        truncation_error: 0.0,
        orthonormal: false,
    })
}

pub fn bspline_rule(lattice: Arc<Lattice>, order: u32) -> Result<CoefficientRule> {
    if order == 0 {
        return Err(Error::Domain("B-spline order must be at least 1".into()));
    }
    let d = lattice.dim();
    let base = 1.0 / (lattice.m() as f64).sqrt();
    let z = default_bspline_truncation(d, order);
    Ok(CoefficientRule {
        lattice,
        spec: GeneratorSpec::Bspline { order },
        base,
        class_scale: None,
        support: Support::Decay { order },
        truncation: z,
        truncation_error: bspline_tail_bound(d, order, z),
        orthonormal: false,
    })
}

pub fn rule_from_spec(lattice: Arc<Lattice>, spec: &GeneratorSpec) -> Result<CoefficientRule> {
    match spec {
        GeneratorSpec::Dirichlet => Ok(dirichlet_rule(lattice)),
        GeneratorSpec::Dlvp { alpha } => dlvp_rule(lattice, alpha),
        GeneratorSpec::Bspline { order } => bspline_rule(lattice, *order),
    }
}

/// Upper bound on `m·Σ_{|z|∞>Z} |c_{h+Mᵀz}|²` for the unnormalised B-spline.
pub fn bspline_tail_bound(d: usize, order: u32, z: usize) -> f64 {
    if z == 0 {
        return f64::INFINITY;
    }
    let p2 = 2.0 * order as f64;
    // Σ_{n>Z} (π(n-1/2))^{-2p} ≤ π^{-2p}·(Z-1/2)^{1-2p}/(2p-1), both signs
    let one_side = PI.powf(-p2) * (z as f64 - 0.5).powf(1.0 - p2) / (p2 - 1.0);
    d as f64 * 2.0 * one_side
}

fn default_bspline_truncation(d: usize, order: u32) -> usize {
    let cap = (1..)
        .take_while(|z: &usize| (2 * z + 1).pow(d as u32) <= MAX_DEFAULT_SHIFTS)
        .last()
        .unwrap_or(1);
    (1..=cap)
        .find(|&z| bspline_tail_bound(d, order, z) < BSPLINE_TAIL_TOLERANCE)
        .unwrap_or(cap)
}

#[inline]
fn trapezoid(xi: f64, alpha: f64) -> f64 {
    let a = xi.abs();
    if a <= (1.0 - alpha) / 2.0 {
        1.0
    } else if a < (1.0 + alpha) / 2.0 {
        ((1.0 + alpha) / 2.0 - a) / alpha
    } else {
        0.0
    }
}

#[inline]
fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

impl CoefficientRule {
    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    /// Bracket truncation radius `Z` (`|z|∞ ≤ Z`).
    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// Bound on the neglected bracket-sum mass; zero for finite support.
    pub fn truncation_error(&self) -> f64 {
        self.truncation_error
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    /// Overrides `Z`. Finitely supported rules never go below their support.
    pub fn with_truncation(mut self, z: usize) -> Self {
        match self.support {
            Support::Finite { periods } => self.truncation = z.max(periods),
            Support::Decay { order } => {
                self.truncation = z;
                self.truncation_error = bspline_tail_bound(self.lattice.dim(), order, z);
            }
        }
        self
    }

    /// Coefficient before any class normalisation.
    fn raw(&self, k: &[i64]) -> f64 {
        let mt = self.lattice.matrix().transpose();
        let m = self.lattice.m() as i64;
        let num = mt.inverse_numerators(k);
        match &self.spec {
            GeneratorSpec::Dirichlet => {
                let inside = num.iter().all(|&n| -m <= 2 * n && 2 * n < m);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            GeneratorSpec::Dlvp { alpha } => {
                let mut v = 1.0;
                for (&n, &a) in num.iter().zip(alpha) {
                    if a == 0.0 {
                        if !(-m <= 2 * n && 2 * n < m) {
                            return 0.0;
                        }
                    } else {
                        v *= trapezoid(n as f64 / m as f64, a);
                        if v == 0.0 {
                            return 0.0;
                        }
                    }
                }
                v
            }
            GeneratorSpec::Bspline { order } => num
                .iter()
                .map(|&n| sinc(PI * n as f64 / m as f64).powi(*order as i32))
                .product(),
        }
    }

    /// `c_k(f)`.
    pub fn coefficient(&self, k: &[i64]) -> f64 {
        let c = self.raw(k) * self.base;
        match &self.class_scale {
            Some(s) if c != 0.0 => c * s[self.lattice.frequency_index(k)],
            _ => c,
        }
    }

    /// Shifts `Mᵀz` for `|z|∞ ≤ Z`, in lexicographic order of `z`.
    pub fn shifts(&self) -> Vec<Vec<i64>> {
        periodic_shifts(&self.lattice.matrix().transpose(), self.truncation)
    }

    /// Fills `out[i]` with `Σ_z f(c_k)` over the coset of frequency `i`.
    fn bracket_map(&self, f: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
        let shifts = self.shifts();
        let freqs = self.lattice.frequencies();
        let eval = |i: usize| {
            let h = freqs.get(i);
            let mut k = vec![0i64; h.len()];
            let mut acc = 0.0;
            for s in &shifts {
                for ((kj, hj), sj) in k.iter_mut().zip(h).zip(s) {
                    *kj = hj + sj;
                }
                let c = self.coefficient(&k);
                if c != 0.0 {
                    acc += f(c);
                }
            }
            acc
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..freqs.len()).into_par_iter().map(eval).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..freqs.len()).map(eval).collect()
        }
    }
}

/// Shifts `mᵀ`-images `A·z` for `|z|∞ ≤ z_max`.
pub fn periodic_shifts(a: &PatternMatrix, z_max: usize) -> Vec<Vec<i64>> {
    let d = a.dim();
    let r = z_max as i64;
    let side = 2 * z_max + 1;
    let total = side.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut z = vec![0i64; d];
            for j in (0..d).rev() {
                z[j] = (idx % side) as i64 - r;
                idx /= side;
            }
            a.mul_vec(&z)
        })
        .collect()
}

/// `Σ_{|z|∞ ≤ Z} a_{h + Mᵀz}`.
pub fn bracket_sum(
    a: impl Fn(&[i64]) -> Complex64,
    mat: &PatternMatrix,
    h: &[i64],
    z_max: usize,
) -> Complex64 {
    let mut k = vec![0i64; h.len()];
    periodic_shifts(&mat.transpose(), z_max)
        .iter()
        .map(|s| {
            for ((kj, hj), sj) in k.iter_mut().zip(h).zip(s) {
                *kj = hj + sj;
            }
            a(&k)
        })
        .sum()
}

/// Bracket sums evaluated on all of `G(Mᵀ)`.
#[derive(Clone, Debug)]
pub struct BracketTable {
    pub values: Vec<f64>,
    pub truncation: usize,
    pub truncation_error: f64,
}

/// `m·[|c(f)|²]^M_h` for every `h ∈ G(Mᵀ)`; equals one everywhere iff the
/// translates are orthonormal.
pub fn orthonormality_table(rule: &CoefficientRule) -> BracketTable {
    let m = rule.lattice.m() as f64;
    BracketTable {
        values: rule.bracket_map(|c| c * c).into_iter().map(|v| v * m).collect(),
        truncation: rule.truncation,
        truncation_error: rule.truncation_error,
    }
}

/// `[c(f)]^M_h` for every `h ∈ G(Mᵀ)`.
pub fn coefficient_bracket_table(rule: &CoefficientRule) -> BracketTable {
    BracketTable {
        values: rule.bracket_map(|c| c),
        truncation: rule.truncation,
        truncation_error: rule.truncation_error,
    }
}

/// Rescales each coset so that `m·[|c|²]^M_h = 1`.
pub fn orthonormalize(rule: &CoefficientRule) -> Result<CoefficientRule> {
    let table = orthonormality_table(rule);
    let freqs = rule.lattice.frequencies();
    let mut scale = Vec::with_capacity(table.values.len());
    for (i, &s) in table.values.iter().enumerate() {
        if !(s > 1e-300) {
            return Err(Error::DegenerateGenerator {
                h: freqs.get(i).to_vec(),
            });
        }
        let prev = rule.class_scale.as_ref().map_or(1.0, |c| c[i]);
        scale.push(prev / s.sqrt());
    }
    let mut out = rule.clone();
    out.class_scale = Some(Arc::new(scale));
    out.orthonormal = true;
    Ok(out)
}

/// Coefficients `â` of the fundamental interpolant: `â_h·[c(f)]^M_h = 1/m`.
pub fn fundamental_interpolant(rule: &CoefficientRule) -> Result<FrequencySamples> {
    let table = coefficient_bracket_table(rule);
    let m = rule.lattice.m() as f64;
    let freqs = rule.lattice.frequencies();
    table
        .values
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            if b.abs() * m.sqrt() < 1e-13 {
                Err(Error::InterpolationDegenerate {
                    h: freqs.get(i).to_vec(),
                })
            } else {
                Ok(Complex64::new(1.0 / (m * b), 0.0))
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(FrequencySamples)
}

/// Evaluates `g(x) = Σ_h Σ_z â_h·c_{h+Mᵀz}(f)·exp(i(h+Mᵀz)ᵀx)` for
/// `|z|∞ ≤ z_max`.
pub fn synthesize(
    rule: &CoefficientRule,
    coeffs: &FrequencySamples,
    x: &[f64],
    z_max: usize,
) -> Complex64 {
    let lat = &rule.lattice;
    let shifts = periodic_shifts(&lat.matrix().transpose(), z_max);
    let mut k = vec![0i64; lat.dim()];
    let mut acc = Complex64::default();
    for (i, h) in lat.frequencies().iter().enumerate() {
        let a = coeffs.0[i];
        if a == Complex64::default() {
            continue;
        }
        for s in &shifts {
            for ((kj, hj), sj) in k.iter_mut().zip(h).zip(s) {
                *kj = hj + sj;
            }
            let c = rule.coefficient(&k);
            if c != 0.0 {
                let phase: f64 = k.iter().zip(x).map(|(&kj, &xj)| kj as f64 * xj).sum();
                acc += a * c * Complex64::from_polar(1.0, phase);
            }
        }
    }
    acc
}
