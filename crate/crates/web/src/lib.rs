use std::sync::Arc;

use latticehom::elasticity::{periodized_green, Lame, SymTensor2};
use latticehom::geometry::{sample_stiffness, InclusionShape, Microstructure, Sampling};
use latticehom::lattice::{Lattice, PatternMatrix};
use latticehom::solver::{ls_fixed_point, midpoint_reference, SolverConfig};
use latticehom::translates::{fundamental_interpolant, orthonormalize, rule_from_spec, synthesize, GeneratorSpec};
use wasm_bindgen::prelude::*;

const MAX_DEMO_POINTS: usize = 128 * 128;

fn generator(alpha: f64) -> GeneratorSpec {
    if alpha == 0.0 {
        GeneratorSpec::Dirichlet
    } else {
        GeneratorSpec::Dlvp {
            alpha: vec![alpha, alpha],
        }
    }
}

fn checked_pattern(matrix: &str) -> Result<Lattice, String> {
    let m: PatternMatrix = matrix.parse().map_err(|e| format!("{e}"))?;
    if m.dim() != 2 {
        return Err("the demo draws 2-D patterns only".into());
    }
    if m.m() > MAX_DEMO_POINTS {
        return Err(format!("|det M| = {} is too large for the demo", m.m()));
    }
    Lattice::new(&m).map_err(|e| e.to_string())
}

/// Pattern points `P(M)` in `[-1/2, 1/2)²`, flattened as `x0, y0, x1, y1, ...`.
pub fn pattern_points_inner(matrix: &str) -> Result<Vec<f64>, String> {
    let l = checked_pattern(matrix)?;
    Ok((0..l.m()).flat_map(|i| l.pattern().point(i)).collect())
}

/// Fundamental interpolant of `M = diag(n, n)` sampled along the first axis
/// on `[-π, π)`; `alpha = 0` is the Dirichlet kernel.
pub fn interpolant_profile_inner(n: u32, alpha: f64, samples: u32) -> Result<Vec<f64>, String> {
    if !(2..=64).contains(&n) || !(0.0..1.0).contains(&alpha) || !(2..=2048).contains(&samples) {
        return Err("need 2 ≤ n ≤ 64, 0 ≤ alpha < 1 and 2 ≤ samples ≤ 2048".into());
    }
    let m = PatternMatrix::diagonal(&[n as i64, n as i64]).map_err(|e| e.to_string())?;
    let l = Arc::new(Lattice::new(&m).map_err(|e| e.to_string())?);
    let rule = rule_from_spec(l, &generator(alpha)).map_err(|e| e.to_string())?;
    let coeffs = fundamental_interpolant(&rule).map_err(|e| e.to_string())?;
    let z = rule.truncation();
    Ok((0..samples)
        .map(|s| {
            let x = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * s as f64 / samples as f64;
            synthesize(&rule, &coeffs, &[x, 0.0], z).re
        })
        .collect())
}

/// Elliptic inclusion in a unit matrix on `diag(n, n)` under uniaxial
/// loading. Holds the total strain `ε₁₁` on an `n × n` raster.
#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct InclusionSolve {
    n: usize,
    strain: Vec<f64>,
    effective: Vec<f64>,
    iterations: usize,
    converged: bool,
}

#[wasm_bindgen]
impl InclusionSolve {
    pub fn size(&self) -> usize {
        self.n
    }

    /// Row-major, row 0 at the bottom of the cell.
    pub fn strain(&self) -> Vec<f64> {
        self.strain.clone()
    }

    /// `C^eff : ε⁰` in Mandel components.
    pub fn effective(&self) -> Vec<f64> {
        self.effective.clone()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn converged(&self) -> bool {
        self.converged
    }
}

pub fn inclusion_solve_inner(n: u32, contrast: f64, alpha: f64) -> Result<InclusionSolve, String> {
    if !(4..=128).contains(&n) || !(contrast > 0.0 && contrast <= 100.0) || !(0.0..1.0).contains(&alpha) {
        return Err("need 4 ≤ n ≤ 128, 0 < contrast ≤ 100 and 0 ≤ alpha < 1".into());
    }
    let n = n as usize;
    let m = PatternMatrix::diagonal(&[n as i64, n as i64]).map_err(|e| e.to_string())?;
    let matrix = Lame::new(1.0, 1.0);
    let ms = Microstructure::Inclusion {
        shape: InclusionShape::Ellipse,
        semi_axes: vec![1.6, 0.9],
        center: None,
        rotation: 0.5,
        inclusion: Lame::new(contrast, contrast),
        matrix,
    };
    let c = sample_stiffness(&ms, &m, Sampling::Node).map_err(|e| e.to_string())?;
    let c0 = midpoint_reference(&ms.phases())
        .ok_or("no phases")?
        .stiffness(2)
        .map_err(|e| e.to_string())?;
    let l = Arc::new(Lattice::new(&m).map_err(|e| e.to_string())?);
    let rule = rule_from_spec(l.clone(), &generator(alpha)).map_err(|e| e.to_string())?;
    let rule = orthonormalize(&rule).map_err(|e| e.to_string())?;
    let table = periodized_green(&c0, &rule).map_err(|e| e.to_string())?;
    let eps0 = SymTensor2::from_mandel(2, &[1.0, 0.0, 0.0]).map_err(|e| e.to_string())?;
    let cfg = SolverConfig {
        tolerance: 1e-6,
        max_iterations: 2000,
        ..SolverConfig::default()
    };
    let r = ls_fixed_point(&c, &c0, &eps0, &table, &cfg).map_err(|e| e.to_string())?;
    let mut strain = vec![0.0; n * n];
    for i in 0..l.m() {
        let p = l.pattern().point(i);
        let col = ((p[0] + 0.5) * n as f64).round() as usize % n;
        let row = ((p[1] + 0.5) * n as f64).round() as usize % n;
        strain[row * n + col] = r.strain.point(i)[0] + 1.0;
    }
    Ok(InclusionSolve {
        n,
        strain,
        effective: r.effective_action.as_slice().to_vec(),
        iterations: r.iterations,
        converged: r.converged,
    })
}

#[wasm_bindgen]
pub fn pattern_points(matrix: &str) -> Result<Vec<f64>, JsValue> {
    pattern_points_inner(matrix).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn interpolant_profile(n: u32, alpha: f64, samples: u32) -> Result<Vec<f64>, JsValue> {
    interpolant_profile_inner(n, alpha, samples).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn inclusion_solve(n: u32, contrast: f64, alpha: f64) -> Result<InclusionSolve, JsValue> {
    inclusion_solve_inner(n, contrast, alpha).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_points_lie_in_the_unit_cell() {
        let p = pattern_points_inner("[[2,1],[0,2]]").unwrap();
        assert_eq!(p.len(), 8);
        assert!(p.iter().all(|&v| (-0.5..0.5).contains(&v)));
        assert!(pattern_points_inner("[[1,2],[2,4]]").is_err());
        assert!(pattern_points_inner("[[2,0,0],[0,2,0],[0,0,2]]").is_err());
    }

    #[test]
    fn interpolant_is_one_at_the_origin_and_zero_at_other_nodes() {
        let n = 8;
        for alpha in [0.0, 0.4] {
            // 4 samples per node spacing
            let v = interpolant_profile_inner(n, alpha, 4 * n).unwrap();
            let origin = 2 * n as usize;
            assert!((v[origin] - 1.0).abs() < 1e-9, "{alpha}: {}", v[origin]);
            for node in (0..v.len()).step_by(4).filter(|&i| i != origin) {
                assert!(v[node].abs() < 1e-9, "{alpha}: {node} {}", v[node]);
            }
        }
        assert!(interpolant_profile_inner(1, 0.0, 10).is_err());
    }

    #[test]
    fn inclusion_solve_fills_the_raster() {
        let s = inclusion_solve_inner(16, 5.0, 0.3).unwrap();
        assert!(s.converged());
        assert_eq!(s.strain().len(), 256);
        // the stiff inclusion carries less strain than the soft matrix
        let centre = s.strain()[8 * 16 + 8];
        let corner = s.strain()[0];
        assert!(centre < corner, "{centre} {corner}");
        let mean: f64 = s.strain().iter().sum::<f64>() / 256.0;
        assert!((mean - 1.0).abs() < 1e-9);
        assert!(inclusion_solve_inner(16, 0.0, 0.0).is_err());
    }
}
