//! Discrete Fourier transform on patterns.
//!
//! The unitary Fourier matrix `F(M)` has rows indexed by `h ∈ G(Mᵀ)` and
//! columns by `y ∈ P(M)`, with entries `m^{-1/2}·exp(-2πi hᵀy)`. Through the
//! Smith decomposition `U·M·V = D` a pattern point with Smith coordinates `j`
//! and a frequency with dual coordinates `j'` satisfy
//! `hᵀy ≡ Σᵢ j'ᵢ·jᵢ / dᵢ (mod 1)`, so `F(M)` is the tensor product of cyclic
//! DFTs of lengths `d₁, …, d_d` once both index sets are listed in Smith order.
//! The cyclic transforms are delegated to `rustfft` (mixed radix with a
//! Bluestein path for large primes).

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, PatternMatrix};

/// Largest `m` for which the dense matrix is formed.
pub const DENSE_LIMIT: usize = 4096;

/// Values on the pattern, in pattern order.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternSamples(pub Vec<Complex64>);

/// Values on `G(Mᵀ)`, in frequency order.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencySamples(pub Vec<Complex64>);

/// Dense `m×m` Fourier matrix (row-major), built from the exact phases
/// `hᵀy mod 1` so that no rounding accumulates in the exponent.
pub fn fourier_matrix(lattice: &Lattice) -> Result<Vec<Complex64>> {
    let m = lattice.m();
    if m > DENSE_LIMIT {
        return Err(Error::Capacity {
            what: "dense Fourier matrix",
            size: m,
            limit: DENSE_LIMIT,
        });
    }
    let scale = 1.0 / (m as f64).sqrt();
    let mi = m as i64;
    let freqs = lattice.frequencies();
    let pat = lattice.pattern();
    let mut out = Vec::with_capacity(m * m);
    for h in freqs.iter() {
        for c in 0..m {
            let y = pat.numerator(c);
            let phase: i128 = h.iter().zip(y).map(|(&a, &b)| a as i128 * b as i128).sum();
            let r = phase.rem_euclid(mi as i128) as f64 / m as f64;
            out.push(Complex64::from_polar(scale, -2.0 * PI * r));
        }
    }
    Ok(out)
}

/// Reusable plan for the fast pattern transform.
#[derive(Clone)]
pub struct PatternFft {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    scale: f64,
}

impl std::fmt::Debug for PatternFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PatternFft").field("shape", &self.shape).finish()
    }
}

impl PatternFft {
    pub fn new(lattice: &Lattice) -> Self {
        let shape = lattice.smith().shape();
        let mut planner = FftPlanner::new();
        let forward = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Self {
            scale: 1.0 / (lattice.m() as f64).sqrt(),
            shape,
            forward,
            inverse,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cyclic factor lengths `d₁ | … | d_d`.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Forward transform in place (pattern order in, frequency order out).
    pub fn forward_in_place(&self, data: &mut [Complex64]) -> Result<()> {
        self.run(data, &self.forward)
    }

    /// Inverse (conjugate-transpose) transform in place.
    pub fn inverse_in_place(&self, data: &mut [Complex64]) -> Result<()> {
        self.run(data, &self.inverse)
    }

    pub fn forward(&self, a: &PatternSamples) -> Result<FrequencySamples> {
        let mut v = a.0.clone();
        self.forward_in_place(&mut v)?;
        Ok(FrequencySamples(v))
    }

    pub fn inverse(&self, ahat: &FrequencySamples) -> Result<PatternSamples> {
        let mut v = ahat.0.clone();
        self.inverse_in_place(&mut v)?;
        Ok(PatternSamples(v))
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) -> Result<()> {
        let m = self.len();
        if data.len() != m {
            return Err(Error::Shape {
                expected: m,
                got: data.len(),
            });
        }
        let mut stride = 1;
        for axis in (0..self.shape.len()).rev() {
            let n = self.shape[axis];
            if n > 1 {
                transform_axis(data, n, stride, plans[axis].as_ref());
            }
            stride *= n;
        }
        for v in data.iter_mut() {
            *v *= self.scale;
        }
        Ok(())
    }
}

fn transform_axis(data: &mut [Complex64], n: usize, stride: usize, plan: &dyn Fft<f64>) {
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
    if stride == 1 {
        plan.process_with_scratch(data, &mut scratch);
        return;
    }
    let block = n * stride;
    let mut line = vec![Complex64::default(); n];
    for chunk in data.chunks_mut(block) {
        for i in 0..stride {
            for (t, v) in line.iter_mut().enumerate() {
                *v = chunk[i + t * stride];
            }
            plan.process_with_scratch(&mut line, &mut scratch);
            for (t, v) in line.iter().enumerate() {
                chunk[i + t * stride] = *v;
            }
        }
    }
}

/// One-shot forward transform.
pub fn fft(mat: &PatternMatrix, a: &PatternSamples) -> Result<FrequencySamples> {
    let lattice = Lattice::new(mat)?;
    PatternFft::new(&lattice).forward(a)
}

/// One-shot inverse transform.
pub fn ifft(mat: &PatternMatrix, ahat: &FrequencySamples) -> Result<PatternSamples> {
    let lattice = Lattice::new(mat)?;
    PatternFft::new(&lattice).inverse(ahat)
}
