//! Experiment driver: configuration, solve orchestration, α-sweeps, metrics
//! and artifact export.

pub mod config;
pub mod output;
pub mod sweep;

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use latticehom::elasticity::{periodized_green, SymTensor2, Tensor4};
use latticehom::geometry::{
    laminate_reference, load_reference_values, sample_stiffness, Microstructure, ReferenceSolution,
};
use latticehom::lattice::{Lattice, PatternMatrix};
use latticehom::solver::{
    error_metrics, ls_fixed_point, midpoint_reference, ve_krylov, ErrorMetrics, Scheme, SolveReport,
    StiffnessField, StrainField,
};
use latticehom::translates::{orthonormalize, rule_from_spec, GeneratorSpec};
use serde::Serialize;

pub use config::{ExperimentConfig, ReferenceSpec};

/// Everything that does not depend on the generator: pattern, sampled
/// stiffness, reference medium, loading and reference values.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub lattice: Arc<Lattice>,
    pub stiffness: StiffnessField,
    pub c0: Tensor4,
    pub eps0: SymTensor2,
    pub reference: Option<ReferenceSolution>,
    /// Reference strain sampled on this pattern, when available.
    pub reference_strain: Option<StrainField>,
}

/// A solve with its metrics.
pub struct Evaluation {
    pub generator: GeneratorSpec,
    pub solve: SolveReport,
    pub metrics: ErrorMetrics,
    pub truncation: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub e_l2: Option<f64>,
    pub e_eff: Option<f64>,
    pub e_log_max: Option<f64>,
}

/// Report written by `solve` (JSON).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveSummary {
    pub pattern_matrix: PatternMatrix,
    pub m: usize,
    pub smith_factors: Vec<usize>,
    pub generator: GeneratorSpec,
    pub truncation: usize,
    pub scheme: Scheme,
    pub method: String,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub reference_stiffness: [f64; 2],
    pub loading: Vec<f64>,
    pub effective_action: Vec<f64>,
    pub metrics: MetricsSummary,
    pub reference_note: Option<String>,
    pub wall_time_s: f64,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let lattice = Arc::new(Lattice::new(&config.pattern_matrix).context("stage pattern")?);
        let stiffness = sample_stiffness(&config.microstructure, &config.pattern_matrix, config.sampling)
            .context("stage stiffness sampling")?;
        let lame = match config.reference_stiffness {
            Some(l) => l,
            None => midpoint_reference(&config.microstructure.phases())
                .ok_or_else(|| anyhow!("microstructure has no phases"))?,
        };
        let c0 = lame.stiffness(config.dim()).context("stage reference stiffness")?;
        let eps0 = config.eps0()?;
        let reference = match &config.reference {
            None => None,
            Some(ReferenceSpec::File(p)) => Some(
                load_reference_values(config.resolve(p), Some(&config.pattern_matrix), config.dim())
                    .context("stage reference values")?,
            ),
            Some(ReferenceSpec::Analytic { .. }) => match &config.microstructure {
                Microstructure::Laminate {
                    normal,
                    fraction,
                    phases,
                } => Some(laminate_reference(normal, *fraction, *phases, &eps0).context("stage laminate reference")?),
                _ => unreachable!("validated"),
            },
        };
        let reference_strain = match &reference {
            Some(r) => r.strain_on(&config.pattern_matrix).context("stage reference values")?,
            None => None,
        };
        Ok(Self {
            config,
            lattice,
            stiffness,
            c0,
            eps0,
            reference,
            reference_strain,
        })
    }

    pub fn reference_lame(&self) -> [f64; 2] {
        let c = &self.c0;
        // λ = C₁₂, μ = (C₁₁ − C₁₂)/2 for the isotropic C⁰
        [c[(0, 1)], 0.5 * (c[(0, 0)] - c[(0, 1)])]
    }

    /// Builds the Green table for `generator` and runs the configured scheme.
    pub fn evaluate(&self, generator: &GeneratorSpec) -> Result<Evaluation> {
        let mut rule = rule_from_spec(self.lattice.clone(), generator).context("stage generator")?;
        if let Some(z) = self.config.truncation {
            rule = rule.with_truncation(z);
        }
        let rule = orthonormalize(&rule).context("stage orthonormalization")?;
        let table = periodized_green(&self.c0, &rule).context("stage green table")?;
        let solve = match self.config.solver.scheme {
            Scheme::LsFixedPoint => ls_fixed_point(&self.stiffness, &self.c0, &self.eps0, &table, &self.config.solver),
            Scheme::VeKrylov => ve_krylov(&self.stiffness, &self.c0, &self.eps0, &table, &self.config.solver),
        }
        .context("stage solve")?;
        let eff_ref = self.reference.as_ref().and_then(|r| r.effective_action);
        let metrics = error_metrics(
            self.reference_strain.as_ref().map(|r| (&solve.strain, r)),
            eff_ref.as_ref().map(|r| (&solve.effective_action, r)),
            self.config.elog_printed_sign,
        )
        .context("stage metrics")?;
        Ok(Evaluation {
            generator: generator.clone(),
            truncation: rule.truncation(),
            solve,
            metrics,
        })
    }

    pub fn summary(&self, ev: &Evaluation) -> SolveSummary {
        SolveSummary {
            pattern_matrix: self.config.pattern_matrix.clone(),
            m: self.lattice.m(),
            smith_factors: self.lattice.smith().shape(),
            generator: ev.generator.clone(),
            truncation: ev.truncation,
            scheme: self.config.solver.scheme,
            method: ev.solve.method.to_string(),
            converged: ev.solve.converged,
            iterations: ev.solve.iterations,
            final_residual: ev.solve.final_residual,
            reference_stiffness: self.reference_lame(),
            loading: self.config.loading.clone(),
            effective_action: ev.solve.effective_action.as_slice().to_vec(),
            metrics: MetricsSummary {
                e_l2: ev.metrics.e_l2,
                e_eff: ev.metrics.e_eff,
                e_log_max: ev.metrics.e_log_max,
            },
            reference_note: self.reference.as_ref().map(|r| r.note.clone()),
            wall_time_s: ev.solve.wall_time_s,
        }
    }
}

/// Result of [`run_solve`].
pub struct SolveOutcome {
    pub summary: SolveSummary,
    pub evaluation: Evaluation,
    pub artifacts: Vec<PathBuf>,
}

/// Runs the configured experiment and writes the requested artifacts. The
/// artifacts are written also when the solve did not converge.
pub fn run_solve(config: ExperimentConfig) -> Result<SolveOutcome> {
    let exp = Experiment::prepare(config)?;
    let ev = exp.evaluate(&exp.config.generator)?;
    let summary = exp.summary(&ev);
    let artifacts = output::write_artifacts(&exp, &ev, &summary)?;
    Ok(SolveOutcome {
        summary,
        evaluation: ev,
        artifacts,
    })
}
