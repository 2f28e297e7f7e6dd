//! Golden-section coordinate search over the de la Vallée Poussin slopes.

use anyhow::{bail, Result};
use latticehom::translates::GeneratorSpec;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::Experiment;

/// `1/φ`.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoldenResult {
    /// Midpoint of the final bracket.
    pub estimate: f64,
    /// Final bracket, of length `(hi − lo)·φ^{-(n−1)}` after `n` evaluations.
    pub bracket: [f64; 2],
    /// Best evaluated point and value.
    pub best_x: f64,
    pub best_f: f64,
    /// Evaluations `(x, f(x))` in order.
    pub trace: Vec<(f64, f64)>,
}

/// Minimises a unimodal `f` on `[lo, hi]` with `budget ≥ 2` evaluations.
/// The two initial probes are evaluated concurrently.
pub fn golden_section(
    f: &(dyn Fn(f64) -> Result<f64> + Sync),
    lo: f64,
    hi: f64,
    budget: usize,
) -> Result<GoldenResult> {
    if budget < 2 || !(lo < hi) {
        bail!("golden section needs budget ≥ 2 and lo < hi");
    }
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (f1, f2) = rayon::join(|| f(x1), || f(x2));
    let (mut f1, mut f2) = (f1?, f2?);
    let mut trace = vec![(x1, f1), (x2, f2)];
    for _ in 2..budget {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1)?;
            trace.push((x1, f1));
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2)?;
            trace.push((x2, f2));
        }
    }
    // the final interior pair leaves either half as the bracket
    let (a, b) = if f1 <= f2 { (a, x2) } else { (x1, b) };
    let (best_x, best_f) = trace
        .iter()
        .copied()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .expect("at least two evaluations");
    Ok(GoldenResult {
        estimate: 0.5 * (a + b),
        bracket: [a, b],
        best_x,
        best_f,
        trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepEvaluation {
    pub axis: usize,
    pub alpha: Vec<f64>,
    pub e_eff: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxisResult {
    /// 1-based axis.
    pub axis: usize,
    pub chosen: f64,
    pub bracket: [f64; 2],
    /// `e_eff` did not vary along this axis.
    pub constant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub best_alpha: Vec<f64>,
    pub best_e_eff: f64,
    /// `e_eff` of the Dirichlet generator on the same pattern.
    pub dirichlet_e_eff: f64,
    /// `1 − best/dirichlet`.
    pub improvement: f64,
    pub improved: bool,
    pub axes: Vec<AxisResult>,
    pub trace: Vec<SweepEvaluation>,
    pub all_converged: bool,
    pub wall_time_s: f64,
}

/// Relative spread below which the objective counts as constant.
const FLAT: f64 = 1e-12;

/// Coordinate-wise golden-section minimisation of `e_eff` over the dlVP
/// slopes, one pass per configured axis.
pub fn sweep_alpha(config: ExperimentConfig) -> Result<SweepOutcome> {
    let Some(sweep) = config.sweep.clone() else {
        bail!("configuration has no sweep block");
    };
    let start = std::time::Instant::now();
    let exp = Experiment::prepare(config)?;
    if exp.reference.as_ref().and_then(|r| r.effective_action).is_none() {
        bail!("sweep-alpha needs a reference effective action (config key \"reference\")");
    }
    let d = exp.config.dim();
    let mut alpha = match &exp.config.generator {
        GeneratorSpec::Dlvp { alpha } => alpha.clone(),
        _ => vec![0.0; d],
    };
    let eval = |a: &[f64]| -> Result<(f64, bool, usize)> {
        let ev = exp.evaluate(&GeneratorSpec::Dlvp { alpha: a.to_vec() })?;
        Ok((ev.metrics.e_eff.expect("reference checked"), ev.solve.converged, ev.solve.iterations))
    };
    let baseline = exp.evaluate(&GeneratorSpec::Dirichlet)?;
    let dirichlet_e_eff = baseline.metrics.e_eff.expect("reference checked");
    let mut all_converged = baseline.solve.converged;
    let mut trace = Vec::new();
    let mut axes = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &axis in &sweep.axes {
        let log = std::sync::Mutex::new(Vec::new());
        let objective = |t: f64| -> Result<f64> {
            let mut a = alpha.clone();
            a[axis - 1] = t;
            let (e, conv, it) = eval(&a)?;
            log.lock().unwrap().push(SweepEvaluation {
                axis,
                alpha: a,
                e_eff: e,
                converged: conv,
                iterations: it,
            });
            Ok(e)
        };
        let g = golden_section(&objective, sweep.interval[0], sweep.interval[1], sweep.budget)?;
        let mut evals = log.into_inner().unwrap();
        // concurrent first probes: order by the golden trace
        evals.sort_by(|p, q| {
            let pos = |e: &SweepEvaluation| g.trace.iter().position(|t| t.0 == e.alpha[axis - 1]);
            pos(p).cmp(&pos(q))
        });
        all_converged &= evals.iter().all(|e| e.converged);
        let fmax = g.trace.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
        let fmin = g.best_f;
        let constant = fmax - fmin <= FLAT * fmax.abs().max(f64::MIN_POSITIVE);
        let chosen = if constant {
            0.5 * (sweep.interval[0] + sweep.interval[1])
        } else {
            g.best_x
        };
        alpha[axis - 1] = chosen;
        if best.as_ref().map_or(true, |b| fmin < b.1) || constant {
            best = Some((alpha.clone(), fmin));
        }
        axes.push(AxisResult {
            axis,
            chosen,
            bracket: g.bracket,
            constant,
        });
        trace.extend(evals);
    }
    let (best_alpha, best_e_eff) = best.expect("at least one axis");
    let improvement = if dirichlet_e_eff > 0.0 {
        1.0 - best_e_eff / dirichlet_e_eff
    } else {
        0.0
    };
    let improved = axes.iter().any(|a| !a.constant) && best_e_eff < dirichlet_e_eff;
    let outcome = SweepOutcome {
        best_alpha,
        best_e_eff,
        dirichlet_e_eff,
        improvement: if improved { improvement } else { 0.0 },
        improved,
        axes,
        trace,
        all_converged,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let out = &exp.config.output;
    if let Some(p) = &out.report {
        crate::output::write_json(&exp.config.resolve(p), &outcome)?;
    }
    if let Some(p) = &out.sweep_trace {
        let mut s = String::from("axis,alpha,e_eff,converged,iterations\n");
        for e in &outcome.trace {
            let a: Vec<String> = e.alpha.iter().map(|v| format!("{v}")).collect();
            s.push_str(&format!("{},{},{:e},{},{}\n", e.axis, a.join(" "), e.e_eff, e.converged, e.iterations));
        }
        std::fs::write(exp.config.resolve(p), s)?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_contracts() {
        let target = 0.3141;
        let f = |x: f64| Ok((x - target).powi(2) + 1.0);
        for budget in [3usize, 8, 16, 30] {
            let g = golden_section(&f, 0.0, 1.0, budget).unwrap();
            assert_eq!(g.trace.len(), budget);
            let width = INV_PHI.powi(budget as i32 - 1);
            assert!((g.bracket[1] - g.bracket[0] - width).abs() < 1e-12);
            assert!(g.bracket[0] <= target && target <= g.bracket[1]);
            assert!((g.estimate - target).abs() <= width / 2.0);
        }
    }

    #[test]
    fn golden_section_handles_boundary_minimum() {
        let f = |x: f64| Ok(x);
        let g = golden_section(&f, 0.0, 1.0, 16).unwrap();
        assert_eq!(g.bracket[0], 0.0);
        assert!(g.best_x < 0.01);
        assert!(golden_section(&f, 1.0, 0.0, 16).is_err());
    }
}
