//! Experiment configuration (one JSON document).

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use latticehom::elasticity::{mandel_size, Lame, SymTensor2};
use latticehom::geometry::{Microstructure, Sampling};
use latticehom::lattice::PatternMatrix;
use latticehom::solver::SolverConfig;
use latticehom::translates::GeneratorSpec;
use serde::{Deserialize, Serialize};

/// Source of reference values for error metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceSpec {
    /// Reference file (`.pfld`, JSON vector or JSON manifest), relative to
    /// the config file.
    File(PathBuf),
    /// Closed-form reference; only `"laminate"` is available.
    Analytic { analytic: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// 1-based axes to optimise, in order.
    pub axes: Vec<usize>,
    #[serde(default = "default_interval")]
    pub interval: [f64; 2],
    /// Objective evaluations per axis.
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_interval() -> [f64; 2] {
    [0.0, 1.0]
}

fn default_budget() -> usize {
    16
}

/// Output file names; relative paths resolve against the config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub report: Option<PathBuf>,
    pub strain: Option<PathBuf>,
    pub elog_image: Option<PathBuf>,
    pub residuals: Option<PathBuf>,
    /// Per-evaluation trace of `sweep-alpha` (CSV).
    pub sweep_trace: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pattern_matrix: PatternMatrix,
    #[serde(default = "default_generator")]
    pub generator: GeneratorSpec,
    pub microstructure: Microstructure,
    /// Isotropic `C⁰`; defaults to the midpoint of the phase Lamé ranges.
    #[serde(default)]
    pub reference_stiffness: Option<Lame>,
    /// Mean strain `ε⁰` in Mandel components.
    pub loading: Vec<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sampling: Sampling,
    /// Periodic shifts per axis for generators with unbounded support.
    #[serde(default)]
    pub truncation: Option<usize>,
    #[serde(default)]
    pub reference: Option<ReferenceSpec>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub elog_printed_sign: bool,
    /// Directory used to resolve relative paths (the config file's).
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_generator() -> GeneratorSpec {
    GeneratorSpec::Dirichlet
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_json(&text).with_context(|| format!("config {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn dim(&self) -> usize {
        self.pattern_matrix.dim()
    }

    pub fn eps0(&self) -> Result<SymTensor2> {
        Ok(SymTensor2::from_mandel(self.dim(), &self.loading)?)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        ensure!(
            self.loading.len() == mandel_size(d),
            "loading has {} components, a {d}-D problem needs {}",
            self.loading.len(),
            mandel_size(d)
        );
        ensure!(
            self.microstructure.dim() == d,
            "microstructure is {}-D, pattern matrix is {d}-D",
            self.microstructure.dim()
        );
        self.microstructure.validate().context("microstructure")?;
        self.solver.validate().context("solver")?;
        if let GeneratorSpec::Dlvp { alpha } = &self.generator {
            ensure!(alpha.len() == d, "generator alpha needs {d} entries");
        }
        if let Some(l) = &self.reference_stiffness {
            l.stiffness(d).context("reference_stiffness")?;
        }
        match &self.reference {
            Some(ReferenceSpec::File(p)) => {
                let full = self.resolve(p);
                ensure!(full.exists(), "reference file {} does not exist", full.display());
            }
            Some(ReferenceSpec::Analytic { analytic }) => {
                if analytic != "laminate" {
                    bail!("unknown analytic reference {analytic:?} (only \"laminate\")");
                }
                ensure!(
                    matches!(self.microstructure, Microstructure::Laminate { .. }),
                    "the laminate reference needs a laminate microstructure"
                );
            }
            None => {}
        }
        if let Some(s) = &self.sweep {
            ensure!(!s.axes.is_empty(), "sweep needs at least one axis");
            for &a in &s.axes {
                ensure!((1..=d).contains(&a), "sweep axis {a} outside 1..={d}");
            }
            let [lo, hi] = s.interval;
            ensure!(
                0.0 <= lo && lo < hi && hi <= 1.0,
                "sweep interval [{lo}, {hi}] must lie in [0, 1] and be non-empty"
            );
            ensure!(s.budget >= 3, "sweep budget must be at least 3 evaluations");
        }
        Ok(())
    }
}
