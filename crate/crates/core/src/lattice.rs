//! Integer pattern matrices and the index sets they induce.
//!
//! A regular matrix `M ∈ ℤ^{d×d}` defines the lattice `M⁻¹ℤ^d`. Its residues
//! modulo 1, taken in the symmetric cell `[-1/2, 1/2)^d`, form the pattern
//! `P(M)`; the generating set is `G(M) = M·P(M)`. Both contain exactly
//! `m = |det M|` elements.
//!
//! Pattern points are rational with denominator `m` (since `m·M⁻¹` is an
//! integer matrix), so they are stored as integer numerators and every
//! congruence test is exact.
//!
//! All enumeration goes through the Smith normal form `U·M·V = D`: the group
//! `ℤ^d / Mℤ^d` is isomorphic to `ℤ_{d₁} ⊕ … ⊕ ℤ_{d_d}` and its elements are
//! listed lexicographically in these Smith coordinates (last coordinate
//! fastest). The same ordering drives the fast transform in [`crate::pfft`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 3;

/// Regular integer `d×d` matrix defining a pattern.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<i64>>", into = "Vec<Vec<i64>>")]
pub struct PatternMatrix {
    dim: usize,
    entries: Vec<i64>,
    det: i64,
    /// `sign(det)·adj(M)`, so that `M⁻¹ = inv_num / m`.
    inv_num: Vec<i64>,
}

impl PatternMatrix {
    /// Builds a matrix from row-major entries.
    pub fn new(dim: usize, entries: Vec<i64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Dimension(dim));
        }
        if entries.len() != dim * dim {
            return Err(Error::Malformed(format!(
                "{} entries for a {dim}x{dim} matrix",
                entries.len()
            )));
        }
        let det = determinant(dim, &entries)?;
        if det == 0 {
            return Err(Error::Singular);
        }
        let adj = adjugate(dim, &entries)?;
        let sign = det.signum();
        let inv_num = adj.into_iter().map(|a| a * sign).collect();
        Ok(Self {
            dim,
            entries,
            det,
            inv_num,
        })
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Malformed("rows of unequal length".into()));
        }
        Self::new(dim, rows.iter().flatten().copied().collect())
    }

    pub fn diagonal(diag: &[i64]) -> Result<Self> {
        let d = diag.len();
        let mut e = vec![0; d * d];
        for (i, &v) in diag.iter().enumerate() {
            e[i * d + i] = v;
        }
        Self::new(d, e)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::diagonal(&vec![1; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn det(&self) -> i64 {
        self.det
    }

    /// Pattern size `m = |det M|`.
    pub fn m(&self) -> usize {
        self.det.unsigned_abs() as usize
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        self.entries.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut e = vec![0; d * d];
        let mut inv = vec![0; d * d];
        for i in 0..d {
            for j in 0..d {
                e[j * d + i] = self.entries[i * d + j];
                inv[j * d + i] = self.inv_num[i * d + j];
            }
        }
        Self {
            dim: d,
            entries: e,
            det: self.det,
            inv_num: inv,
        }
    }

    /// `M·k` in exact arithmetic.
    pub fn mul_vec(&self, k: &[i64]) -> Vec<i64> {
        mat_vec(self.dim, &self.entries, k)
    }

    /// Numerators of `M⁻¹·k`, i.e. `m·M⁻¹·k`.
    pub fn inverse_numerators(&self, k: &[i64]) -> Vec<i64> {
        mat_vec(self.dim, &self.inv_num, k)
    }

    /// `M⁻¹·k` as floating point.
    pub fn solve_f64(&self, k: &[i64]) -> Vec<f64> {
        let m = self.m() as f64;
        self.inverse_numerators(k)
            .into_iter()
            .map(|n| n as f64 / m)
            .collect()
    }

    /// Real-valued `M·x`.
    pub fn mul_f64(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|j| self.entries[i * d + j] as f64 * x[j]).sum())
            .collect()
    }

    /// Real-valued `M⁻¹·x`.
    pub fn inverse_mul_f64(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let m = self.m() as f64;
        (0..d)
            .map(|i| (0..d).map(|j| self.inv_num[i * d + j] as f64 * x[j]).sum::<f64>() / m)
            .collect()
    }
}

impl TryFrom<Vec<Vec<i64>>> for PatternMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<i64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<PatternMatrix> for Vec<Vec<i64>> {
    fn from(m: PatternMatrix) -> Self {
        m.rows()
    }
}

impl FromStr for PatternMatrix {
    type Err = Error;

    /// Parses the row-major list form `"[[128,272],[0,128]]"`.
    fn from_str(s: &str) -> Result<Self> {
        let rows: Vec<Vec<i64>> =
            serde_json::from_str(s).map_err(|e| Error::Malformed(e.to_string()))?;
        Self::from_rows(&rows)
    }
}

impl fmt::Display for PatternMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, row) in self.entries.chunks(self.dim).enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "[")?;
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{v}")?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

fn mat_vec(d: usize, a: &[i64], k: &[i64]) -> Vec<i64> {
    (0..d)
        .map(|i| {
            let s: i128 = (0..d).map(|j| a[i * d + j] as i128 * k[j] as i128).sum();
            i64::try_from(s).expect("lattice product exceeds i64")
        })
        .collect()
}

fn determinant(d: usize, a: &[i64]) -> Result<i64> {
    let v = |i: usize, j: usize| a[i * d + j] as i128;
    let det = match d {
        1 => v(0, 0),
        2 => v(0, 0) * v(1, 1) - v(0, 1) * v(1, 0),
        3 => {
            v(0, 0) * (v(1, 1) * v(2, 2) - v(1, 2) * v(2, 1))
                - v(0, 1) * (v(1, 0) * v(2, 2) - v(1, 2) * v(2, 0))
                + v(0, 2) * (v(1, 0) * v(2, 1) - v(1, 1) * v(2, 0))
        }
        _ => return Err(Error::Dimension(d)),
    };
    i64::try_from(det).map_err(|_| Error::Overflow("determinant"))
}

fn adjugate(d: usize, a: &[i64]) -> Result<Vec<i64>> {
    let v = |i: usize, j: usize| a[i * d + j] as i128;
    let adj: Vec<i128> = match d {
        1 => vec![1],
        2 => vec![v(1, 1), -v(0, 1), -v(1, 0), v(0, 0)],
        3 => {
            let mut out = vec![0i128; 9];
            for i in 0..3 {
                for j in 0..3 {
                    // cofactor of (j, i)
                    let r: Vec<usize> = (0..3).filter(|&r| r != j).collect();
                    let c: Vec<usize> = (0..3).filter(|&c| c != i).collect();
                    let minor = v(r[0], c[0]) * v(r[1], c[1]) - v(r[0], c[1]) * v(r[1], c[0]);
                    out[i * 3 + j] = if (i + j) % 2 == 0 { minor } else { -minor };
                }
            }
            out
        }
        _ => return Err(Error::Dimension(d)),
    };
    adj.into_iter()
        .map(|x| i64::try_from(x).map_err(|_| Error::Overflow("adjugate")))
        .collect()
}

/// Reduces an integer numerator `n` (over denominator `m`) into the
/// symmetric cell, i.e. returns `r ≡ n (mod m)` with `-m ≤ 2r < m`.
#[inline]
pub(crate) fn reduce_symmetric(n: i64, m: i64) -> i64 {
    let r = n.rem_euclid(m);
    if 2 * r >= m {
        r - m
    } else {
        r
    }
}

/// Smith decomposition `U·M·V = D` with unimodular `U`, `V`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmithDecomposition {
    pub dim: usize,
    pub u: Vec<i64>,
    pub v: Vec<i64>,
    /// Positive diagonal of `D`, satisfying `d₁ | d₂ | … | d_d`.
    pub diag: Vec<i64>,
}

impl SmithDecomposition {
    /// Decomposition of `Mᵀ` derived from this one: `Vᵀ·Mᵀ·Uᵀ = D`.
    pub fn transpose(&self) -> Self {
        Self {
            dim: self.dim,
            u: transpose(self.dim, &self.v),
            v: transpose(self.dim, &self.u),
            diag: self.diag.clone(),
        }
    }

    /// Number of group elements `∏ dᵢ`.
    pub fn order(&self) -> usize {
        self.diag.iter().map(|&d| d as usize).product()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.diag.iter().map(|&d| d as usize).collect()
    }

    /// Smith coordinates of the class of `k ∈ ℤ^d` in `ℤ^d / Mℤ^d`.
    pub fn coordinates(&self, k: &[i64]) -> Vec<i64> {
        let uk = mat_vec(self.dim, &self.u, k);
        uk.iter()
            .zip(&self.diag)
            .map(|(&x, &d)| x.rem_euclid(d))
            .collect()
    }

    /// Lexicographic position of the class of `k`.
    pub fn class_index(&self, k: &[i64]) -> usize {
        let d = self.dim;
        let u = &self.u;
        let mut idx = 0usize;
        for i in 0..d {
            let mut s: i128 = 0;
            for j in 0..d {
                s += u[i * d + j] as i128 * k[j] as i128;
            }
            let di = self.diag[i] as i128;
            idx = idx * self.diag[i] as usize + s.rem_euclid(di) as usize;
        }
        idx
    }

    pub fn unravel(&self, mut index: usize) -> Vec<i64> {
        let mut j = vec![0i64; self.dim];
        for i in (0..self.dim).rev() {
            let di = self.diag[i] as usize;
            j[i] = (index % di) as i64;
            index /= di;
        }
        j
    }
}

fn transpose(d: usize, a: &[i64]) -> Vec<i64> {
    let mut t = vec![0; d * d];
    for i in 0..d {
        for j in 0..d {
            t[j * d + i] = a[i * d + j];
        }
    }
    t
}

/// Smith normal form by pivoted elimination.
///
/// Pivots are the entry of least absolute value in the active block, which
/// keeps intermediate entries small; every update is overflow-checked.
pub fn smith_normal_form(mat: &PatternMatrix) -> Result<SmithDecomposition> {
    let d = mat.dim();
    let mut a = mat.entries().to_vec();
    let mut u = identity(d);
    let mut v = identity(d);

    for t in 0..d {
        loop {
            let (pi, pj) = min_pivot(d, &a, t).ok_or(Error::Singular)?;
            if pi != t {
                swap_rows(d, &mut a, t, pi);
                swap_rows(d, &mut u, t, pi);
            }
            if pj != t {
                swap_cols(d, &mut a, t, pj);
                swap_cols(d, &mut v, t, pj);
            }
            let p = a[t * d + t];
            let mut clean = true;
            for i in t + 1..d {
                let q = a[i * d + t] / p;
                if q != 0 {
                    row_axpy(d, &mut a, i, t, -q)?;
                    row_axpy(d, &mut u, i, t, -q)?;
                }
                clean &= a[i * d + t] == 0;
            }
            for j in t + 1..d {
                let q = a[t * d + j] / p;
                if q != 0 {
                    col_axpy(d, &mut a, j, t, -q)?;
                    col_axpy(d, &mut v, j, t, -q)?;
                }
                clean &= a[t * d + j] == 0;
            }
            if !clean {
                continue;
            }
            // divisibility: fold an offending row into the pivot row
            let offending = (t + 1..d).find(|&i| (t + 1..d).any(|j| a[i * d + j] % p != 0));
            match offending {
                Some(i) => {
                    row_axpy(d, &mut a, t, i, 1)?;
                    row_axpy(d, &mut u, t, i, 1)?;
                }
                None => break,
            }
        }
        if a[t * d + t] < 0 {
            for j in 0..d {
                a[t * d + j] = -a[t * d + j];
                u[t * d + j] = -u[t * d + j];
            }
        }
    }
    let diag = (0..d).map(|i| a[i * d + i]).collect();
    Ok(SmithDecomposition { dim: d, u, v, diag })
}

fn identity(d: usize) -> Vec<i64> {
    let mut e = vec![0; d * d];
    for i in 0..d {
        e[i * d + i] = 1;
    }
    e
}

fn min_pivot(d: usize, a: &[i64], t: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for i in t..d {
        for j in t..d {
            let x = a[i * d + j];
            if x != 0 {
                match best {
                    Some((bi, bj)) if a[bi * d + bj].abs() <= x.abs() => {}
                    _ => best = Some((i, j)),
                }
            }
        }
    }
    best
}

fn swap_rows(d: usize, a: &mut [i64], r: usize, s: usize) {
    for j in 0..d {
        a.swap(r * d + j, s * d + j);
    }
}

fn swap_cols(d: usize, a: &mut [i64], c: usize, e: usize) {
    for i in 0..d {
        a.swap(i * d + c, i * d + e);
    }
}

/// `row[dst] += q·row[src]`
fn row_axpy(d: usize, a: &mut [i64], dst: usize, src: usize, q: i64) -> Result<()> {
    for j in 0..d {
        let add = a[src * d + j]
            .checked_mul(q)
            .ok_or(Error::Overflow("smith normal form"))?;
        a[dst * d + j] = a[dst * d + j]
            .checked_add(add)
            .ok_or(Error::Overflow("smith normal form"))?;
    }
    Ok(())
}

/// `col[dst] += q·col[src]`
fn col_axpy(d: usize, a: &mut [i64], dst: usize, src: usize, q: i64) -> Result<()> {
    for i in 0..d {
        let add = a[i * d + src]
            .checked_mul(q)
            .ok_or(Error::Overflow("smith normal form"))?;
        a[i * d + dst] = a[i * d + dst]
            .checked_add(add)
            .ok_or(Error::Overflow("smith normal form"))?;
    }
    Ok(())
}

/// The pattern `P(M)`: `m` rational points in `[-1/2, 1/2)^d`.
#[derive(Clone, Debug)]
pub struct Pattern {
    matrix: PatternMatrix,
    smith: SmithDecomposition,
    /// Row-major `m×d` numerators; point `i` is `numerators[i]/m`.
    numerators: Vec<i64>,
}

impl Pattern {
    /// Enumerates the pattern in the Smith ordering of `smith`, which must
    /// decompose `matrix`.
    pub fn from_smith(matrix: &PatternMatrix, smith: SmithDecomposition) -> Self {
        let d = matrix.dim();
        let m = matrix.m();
        let mi = m as i64;
        // y = V·D⁻¹·j, numerators m·y = V·(m/dᵢ·jᵢ)
        let scale: Vec<i64> = smith.diag.iter().map(|&di| mi / di).collect();
        let mut numerators = Vec::with_capacity(m * d);
        for idx in 0..m {
            let j = smith.unravel(idx);
            let w: Vec<i64> = j.iter().zip(&scale).map(|(a, b)| a * b).collect();
            for r in 0..d {
                let s: i128 = (0..d).map(|c| smith.v[r * d + c] as i128 * w[c] as i128).sum();
                let n = (s.rem_euclid(mi as i128)) as i64;
                numerators.push(reduce_symmetric(n, mi));
            }
        }
        Self {
            matrix: matrix.clone(),
            smith,
            numerators,
        }
    }

    pub fn matrix(&self) -> &PatternMatrix {
        &self.matrix
    }

    pub fn smith(&self) -> &SmithDecomposition {
        &self.smith
    }

    pub fn len(&self) -> usize {
        self.matrix.m()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Integer numerators of point `i` (denominator `m`).
    pub fn numerator(&self, i: usize) -> &[i64] {
        let d = self.dim();
        &self.numerators[i * d..(i + 1) * d]
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        let m = self.len() as f64;
        self.numerator(i).iter().map(|&n| n as f64 / m).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Position of the pattern point congruent (mod 1) to `numerator / m`.
    pub fn index_of(&self, numerator: &[i64]) -> usize {
        let m = self.len() as i64;
        let k: Vec<i64> = self
            .matrix
            .mul_vec(numerator)
            .into_iter()
            .map(|x| x / m)
            .collect();
        self.smith.class_index(&k)
    }
}

/// The generating set `G(M) = M·P(M)`, in the same order as the pattern.
#[derive(Clone, Debug)]
pub struct GeneratingSet {
    matrix: PatternMatrix,
    smith: SmithDecomposition,
    /// Row-major `m×d` integer vectors.
    freqs: Vec<i64>,
}

impl GeneratingSet {
    pub fn from_pattern(pattern: &Pattern) -> Self {
        let d = pattern.dim();
        let m = pattern.len() as i64;
        let mut freqs = Vec::with_capacity(pattern.len() * d);
        for i in 0..pattern.len() {
            let k = pattern.matrix.mul_vec(pattern.numerator(i));
            freqs.extend(k.into_iter().map(|x| {
                debug_assert_eq!(x % m, 0);
                x / m
            }));
        }
        Self {
            matrix: pattern.matrix.clone(),
            smith: pattern.smith.clone(),
            freqs,
        }
    }

    pub fn len(&self) -> usize {
        self.matrix.m()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &PatternMatrix {
        &self.matrix
    }

    pub fn get(&self, i: usize) -> &[i64] {
        let d = self.dim();
        &self.freqs[i * d..(i + 1) * d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i64]> {
        self.freqs.chunks(self.dim())
    }

    /// Position of the element congruent to `k` modulo `M`.
    pub fn index_of(&self, k: &[i64]) -> usize {
        self.smith.class_index(k)
    }
}

pub fn pattern(mat: &PatternMatrix) -> Result<Pattern> {
    Ok(Pattern::from_smith(mat, smith_normal_form(mat)?))
}

pub fn generating_set(mat: &PatternMatrix) -> Result<GeneratingSet> {
    Ok(GeneratingSet::from_pattern(&pattern(mat)?))
}

/// The unique `h ∈ G(M)` with `h ≡ k (mod M)`.
pub fn canonical_residue(k: &[i64], mat: &PatternMatrix) -> Vec<i64> {
    let m = mat.m() as i64;
    let num: Vec<i64> = mat
        .inverse_numerators(k)
        .into_iter()
        .map(|n| reduce_symmetric(n, m))
        .collect();
    mat.mul_vec(&num).into_iter().map(|x| x / m).collect()
}

/// A pattern together with its dual frequency set `G(Mᵀ)`, both enumerated
/// from a single Smith decomposition so that the Fourier matrix factorises
/// along Smith coordinates.
#[derive(Clone, Debug)]
pub struct Lattice {
    matrix: PatternMatrix,
    pattern: Pattern,
    frequencies: GeneratingSet,
}

impl Lattice {
    pub fn new(matrix: &PatternMatrix) -> Result<Self> {
        let smith = smith_normal_form(matrix)?;
        let pattern = Pattern::from_smith(matrix, smith.clone());
        let dual = Pattern::from_smith(&matrix.transpose(), smith.transpose());
        let frequencies = GeneratingSet::from_pattern(&dual);
        Ok(Self {
            matrix: matrix.clone(),
            pattern,
            frequencies,
        })
    }

    pub fn matrix(&self) -> &PatternMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn m(&self) -> usize {
        self.matrix.m()
    }

    pub fn smith(&self) -> &SmithDecomposition {
        self.pattern.smith()
    }

    pub fn pattern(&self) -> &Pattern {
        &self.pattern
    }

    /// `G(Mᵀ)`, the frequency index set of the transform.
    pub fn frequencies(&self) -> &GeneratingSet {
        &self.frequencies
    }

    /// Index in `G(Mᵀ)` of the class of `k` modulo `Mᵀ`.
    pub fn frequency_index(&self, k: &[i64]) -> usize {
        self.frequencies.index_of(k)
    }

    /// Index of the zero frequency.
    pub fn zero_frequency(&self) -> usize {
        0
    }
}
