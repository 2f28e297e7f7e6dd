//! Microstructures on the periodic cell `[-π, π)^d`, stiffness sampling on
//! patterns and reference solutions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::elasticity::{grad_matrix, mandel_size, Lame, SymTensor2, Tensor4};
use crate::error::{Error, Result};
use crate::field::{Domain, FieldFile};
use crate::lattice::{Lattice, PatternMatrix};
use crate::numerics::solve_small;
use crate::solver::{StiffnessField, StrainField};

use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InclusionShape {
    Ellipse,
    Box,
}

/// Phase layout of the cell. Coordinates are physical, `x ∈ [-π, π)^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Microstructure {
    /// Phase `a` on the slab `|x·n| < π·fraction`, phase `b` elsewhere.
    Laminate {
        normal: Vec<f64>,
        fraction: f64,
        phases: [Lame; 2],
    },
    /// Confocal core and coating ellipses in a matrix (2-D).
    HashinEllipses {
        core: [f64; 2],
        coating: [f64; 2],
        #[serde(default)]
        center: [f64; 2],
        #[serde(default)]
        rotation: f64,
        core_phase: Lame,
        coating_phase: Lame,
        matrix_phase: Lame,
    },
    /// Single ellipsoidal or box-shaped inclusion; `rotation` applies in 2-D.
    Inclusion {
        shape: InclusionShape,
        semi_axes: Vec<f64>,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default)]
        rotation: f64,
        inclusion: Lame,
        matrix: Lame,
    },
    /// Regular grid of phase ids over the cell, first axis slowest.
    VoxelMap {
        shape: Vec<usize>,
        ids: Vec<usize>,
        phases: Vec<Lame>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Sampling {
    /// Stiffness at the node `x = 2πy`.
    #[default]
    Node,
    /// Mean over `s^d` subsamples of the lattice cell `2π·M⁻¹[-1/2,1/2)^d`
    /// around each node.
    CellAverage { subsamples: usize },
}

/// Wraps a coordinate difference into `[-π, π)`.
fn wrap(t: f64) -> f64 {
    let r = (t + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        -PI
    } else {
        r
    }
}

fn in_ellipse(dx: &[f64], axes: &[f64], rotation: f64) -> bool {
    let q: f64 = if dx.len() == 2 {
        let (s, c) = rotation.sin_cos();
        let u = c * dx[0] + s * dx[1];
        let v = -s * dx[0] + c * dx[1];
        (u / axes[0]).powi(2) + (v / axes[1]).powi(2)
    } else {
        dx.iter().zip(axes).map(|(x, a)| (x / a).powi(2)).sum()
    };
    q <= 1.0
}

fn in_box(dx: &[f64], axes: &[f64], rotation: f64) -> bool {
    if dx.len() == 2 {
        let (s, c) = rotation.sin_cos();
        let u = c * dx[0] + s * dx[1];
        let v = -s * dx[0] + c * dx[1];
        u.abs() <= axes[0] && v.abs() <= axes[1]
    } else {
        dx.iter().zip(axes).all(|(x, a)| x.abs() <= *a)
    }
}

/// Index of the single non-zero entry of an axis-aligned normal.
fn normal_axis(normal: &[f64]) -> Result<usize> {
    let nz: Vec<usize> = (0..normal.len()).filter(|&i| normal[i] != 0.0).collect();
    match nz.as_slice() {
        [i] => Ok(*i),
        _ => Err(Error::Geometry(format!(
            "laminate normal {normal:?} is not axis-aligned (unsupported)"
        ))),
    }
}

impl Microstructure {
    pub fn dim(&self) -> usize {
        match self {
            Microstructure::Laminate { normal, .. } => normal.len(),
            Microstructure::HashinEllipses { .. } => 2,
            Microstructure::Inclusion { semi_axes, .. } => semi_axes.len(),
            Microstructure::VoxelMap { shape, .. } => shape.len(),
        }
    }

    /// Phase table; `phase_at` returns indices into it.
    pub fn phases(&self) -> Vec<Lame> {
        match self {
            Microstructure::Laminate { phases, .. } => phases.to_vec(),
            Microstructure::HashinEllipses {
                core_phase,
                coating_phase,
                matrix_phase,
                ..
            } => vec![*core_phase, *coating_phase, *matrix_phase],
            Microstructure::Inclusion {
                inclusion, matrix, ..
            } => vec![*inclusion, *matrix],
            Microstructure::VoxelMap { phases, .. } => phases.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if !(1..=3).contains(&d) {
            return Err(Error::Dimension(d));
        }
        for p in self.phases() {
            p.stiffness(d)
                .map_err(|e| Error::Geometry(format!("phase {p:?}: {e}")))?;
        }
        let positive = |v: &[f64]| v.iter().all(|a| a.is_finite() && *a > 0.0);
        match self {
            Microstructure::Laminate { normal, fraction, .. } => {
                normal_axis(normal)?;
                if !(0.0..=1.0).contains(fraction) {
                    return Err(Error::Geometry(format!("fraction {fraction} outside [0, 1]")));
                }
            }
            Microstructure::HashinEllipses {
                core,
                coating,
                center,
                rotation,
                ..
            } => {
                if !positive(core) || !positive(coating) {
                    return Err(Error::Geometry("semi-axes must be positive".into()));
                }
                if !(coating[0] > core[0] && coating[1] > core[1]) {
                    return Err(Error::Geometry(
                        "coating ellipse must strictly contain the core".into(),
                    ));
                }
                let fc = core[0].powi(2) - core[1].powi(2);
                let fe = coating[0].powi(2) - coating[1].powi(2);
                let scale = coating[0].powi(2).max(coating[1].powi(2));
                if (fc - fe).abs() > 1e-9 * scale {
                    return Err(Error::Geometry(format!(
                        "ellipses are not confocal: a²−b² = {fc} (core) vs {fe} (coating)"
                    )));
                }
                if !center.iter().all(|c| c.is_finite()) || !rotation.is_finite() {
                    return Err(Error::Geometry("non-finite center or rotation".into()));
                }
            }
            Microstructure::Inclusion {
                semi_axes, center, ..
            } => {
                if !positive(semi_axes) {
                    return Err(Error::Geometry("semi-axes must be positive".into()));
                }
                if let Some(c) = center {
                    if c.len() != d {
                        return Err(Error::Geometry(format!(
                            "center has {} entries, expected {d}",
                            c.len()
                        )));
                    }
                }
            }
            Microstructure::VoxelMap { shape, ids, phases } => {
                if shape.contains(&0) {
                    return Err(Error::Geometry("empty voxel grid".into()));
                }
                let n: usize = shape.iter().product();
                if ids.len() != n {
                    return Err(Error::Geometry(format!(
                        "voxel grid has {} ids, shape needs {n}",
                        ids.len()
                    )));
                }
                if let Some(bad) = ids.iter().find(|&&i| i >= phases.len()) {
                    return Err(Error::Geometry(format!("phase id {bad} has no table entry")));
                }
            }
        }
        Ok(())
    }

    /// Phase index at the physical point `x` (any representative).
    pub fn phase_at(&self, x: &[f64]) -> usize {
        match self {
            Microstructure::Laminate { normal, fraction, .. } => {
                let axis = normal_axis(normal).expect("validated");
                let t = wrap(x[axis]);
                let h = PI * fraction;
                if -h <= t && t < h {
                    0
                } else {
                    1
                }
            }
            Microstructure::HashinEllipses {
                core,
                coating,
                center,
                rotation,
                ..
            } => {
                let dx = [wrap(x[0] - center[0]), wrap(x[1] - center[1])];
                if in_ellipse(&dx, core, *rotation) {
                    0
                } else if in_ellipse(&dx, coating, *rotation) {
                    1
                } else {
                    2
                }
            }
            Microstructure::Inclusion {
                shape,
                semi_axes,
                center,
                rotation,
                ..
            } => {
                let dx: Vec<f64> = (0..x.len())
                    .map(|i| wrap(x[i] - center.as_ref().map_or(0.0, |c| c[i])))
                    .collect();
                let inside = match shape {
                    InclusionShape::Ellipse => in_ellipse(&dx, semi_axes, *rotation),
                    InclusionShape::Box => in_box(&dx, semi_axes, *rotation),
                };
                if inside {
                    0
                } else {
                    1
                }
            }
            Microstructure::VoxelMap { shape, ids, .. } => {
                let mut flat = 0;
                for (i, &n) in shape.iter().enumerate() {
                    let t = (wrap(x[i]) + PI) / (2.0 * PI);
                    let c = ((t * n as f64).floor() as usize).min(n - 1);
                    flat = flat * n + c;
                }
                ids[flat]
            }
        }
    }
}

/// Phase index at every pattern node.
pub fn phase_map(ms: &Microstructure, matrix: &PatternMatrix) -> Result<Vec<usize>> {
    ms.validate()?;
    check_dim(ms, matrix)?;
    let lattice = Lattice::new(matrix)?;
    let pat = lattice.pattern();
    Ok(map_points(pat.len(), |i| {
        let x: Vec<f64> = pat.point(i).iter().map(|y| 2.0 * PI * y).collect();
        ms.phase_at(&x)
    }))
}

fn check_dim(ms: &Microstructure, matrix: &PatternMatrix) -> Result<()> {
    if ms.dim() != matrix.dim() {
        return Err(Error::Geometry(format!(
            "microstructure is {}-D but the pattern matrix is {}-D",
            ms.dim(),
            matrix.dim()
        )));
    }
    Ok(())
}

fn map_points<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    (0..n).map(f).collect()
}

/// Samples the stiffness on `P(M)`.
pub fn sample_stiffness(
    ms: &Microstructure,
    matrix: &PatternMatrix,
    sampling: Sampling,
) -> Result<StiffnessField> {
    ms.validate()?;
    check_dim(ms, matrix)?;
    let d = ms.dim();
    let table = ms
        .phases()
        .iter()
        .map(|p| p.stiffness(d))
        .collect::<Result<Vec<_>>>()?;
    let lattice = Lattice::new(matrix)?;
    let pat = lattice.pattern();
    let values = match sampling {
        Sampling::Node => map_points(pat.len(), |i| {
            let x: Vec<f64> = pat.point(i).iter().map(|y| 2.0 * PI * y).collect();
            table[ms.phase_at(&x)]
        }),
        Sampling::CellAverage { subsamples: s } => {
            if s == 0 {
                return Err(Error::Domain("subsamples must be at least 1".into()));
            }
            let count = s.checked_pow(d as u32).ok_or(Error::Overflow("subsamples"))?;
            // offsets t ∈ [-1/2, 1/2)^d mapped through M⁻¹
            let offsets: Vec<Vec<f64>> = (0..count)
                .map(|mut j| {
                    let mut t = vec![0.0; d];
                    for k in (0..d).rev() {
                        t[k] = ((j % s) as f64 + 0.5) / s as f64 - 0.5;
                        j /= s;
                    }
                    matrix.inverse_mul_f64(&t)
                })
                .collect();
            map_points(pat.len(), |i| {
                let y = pat.point(i);
                let mut acc = Tensor4::zeros(d);
                for off in &offsets {
                    let x: Vec<f64> = (0..d).map(|k| 2.0 * PI * (y[k] + off[k])).collect();
                    acc = acc + table[ms.phase_at(&x)];
                }
                acc.scale(1.0 / count as f64)
            })
        }
    };
    StiffnessField::new(d, values)
}

/// Exact two-phase laminate strains in Mandel form.
#[derive(Clone, Debug, PartialEq)]
pub struct LaminateStrain {
    pub axis: usize,
    pub fraction: f64,
    /// Fluctuation `ε − ε⁰` in phase `a` (the slab) and phase `b`.
    pub fluctuation: [SymTensor2; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReferenceStrain {
    /// Fluctuation strain sampled on the pattern of `matrix`.
    Sampled {
        matrix: PatternMatrix,
        field: StrainField,
    },
    Laminate(LaminateStrain),
}

/// Reference data for error metrics; at least one part is present.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution {
    pub strain: Option<ReferenceStrain>,
    pub effective_action: Option<SymTensor2>,
    pub note: String,
}

impl ReferenceSolution {
    pub fn new(
        strain: Option<ReferenceStrain>,
        effective_action: Option<SymTensor2>,
        note: impl Into<String>,
    ) -> Result<Self> {
        if strain.is_none() && effective_action.is_none() {
            return Err(Error::Format(
                "reference needs a strain field or an effective action".into(),
            ));
        }
        Ok(Self {
            strain,
            effective_action,
            note: note.into(),
        })
    }

    /// Reference fluctuation strain on the pattern of `matrix`, if available.
    pub fn strain_on(&self, matrix: &PatternMatrix) -> Result<Option<StrainField>> {
        match &self.strain {
            None => Ok(None),
            Some(ReferenceStrain::Sampled { matrix: m, field }) => {
                if m != matrix {
                    return Err(Error::Format(format!(
                        "reference field is on pattern {m}, solution on {matrix}"
                    )));
                }
                Ok(Some(field.clone()))
            }
            Some(ReferenceStrain::Laminate(lam)) => {
                let lattice = Lattice::new(matrix)?;
                let pat = lattice.pattern();
                let n = mandel_size(matrix.dim());
                let h = PI * lam.fraction;
                let mut data = Vec::with_capacity(pat.len() * n);
                for i in 0..pat.len() {
                    let t = wrap(2.0 * PI * pat.point(i)[lam.axis]);
                    let phase = if -h <= t && t < h { 0 } else { 1 };
                    data.extend_from_slice(lam.fluctuation[phase].as_slice());
                }
                Ok(Some(StrainField::from_data(n, data)?))
            }
        }
    }
}

/// Closed-form solution of the axis-aligned two-phase laminate under mean
/// strain `ε⁰`. Phase `a` occupies the volume fraction `fraction`.
///
/// The jump `ε_a − ε_b` is `sym(n⊗w)` (tangential continuity); the mean
/// condition gives `ε_a = ε⁰ + (1−f)·B w`, `ε_b = ε⁰ − f·B w`, and traction
/// continuity `Bᵀ(C_a ε_a − C_b ε_b) = 0` yields
/// `[(1−f)·BᵀC_aB + f·BᵀC_bB]·w = Bᵀ(C_b − C_a)·ε⁰`.
pub fn laminate_reference(
    normal: &[f64],
    fraction: f64,
    phases: [Lame; 2],
    eps0: &SymTensor2,
) -> Result<ReferenceSolution> {
    let axis = normal_axis(normal)?;
    let d = normal.len();
    if eps0.dim() != d {
        return Err(Error::Shape {
            expected: d,
            got: eps0.dim(),
        });
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Geometry(format!("fraction {fraction} outside [0, 1]")));
    }
    let ca = phases[0].stiffness(d)?;
    let cb = phases[1].stiffness(d)?;
    let mut n = vec![0.0; d];
    n[axis] = 1.0;
    let (b, _) = grad_matrix(&n);
    let nc = mandel_size(d);
    let btcb = |c: &Tensor4| {
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                for p in 0..nc {
                    for q in 0..nc {
                        a[i * d + j] += b[p][i] * c[(p, q)] * b[q][j];
                    }
                }
            }
        }
        a
    };
    let (aa, ab) = (btcb(&ca), btcb(&cb));
    let mut lhs: Vec<f64> = aa
        .iter()
        .zip(&ab)
        .map(|(x, y)| (1.0 - fraction) * x + fraction * y)
        .collect();
    let dc = (cb - ca).apply(eps0);
    let mut w: Vec<f64> = (0..d)
        .map(|i| (0..nc).map(|p| b[p][i] * dc[p]).sum())
        .collect();
    if !solve_small(d, &mut lhs, &mut w, 1, 1e-14) {
        return Err(Error::SingularSystem {
            condition: f64::INFINITY,
        });
    }
    let bw: Vec<f64> = (0..nc)
        .map(|p| (0..d).map(|i| b[p][i] * w[i]).sum())
        .collect();
    let bw = SymTensor2::from_mandel(d, &bw)?;
    let fa = bw * (1.0 - fraction);
    let fb = bw * (-fraction);
    let sa = ca.apply(&(*eps0 + fa));
    let sb = cb.apply(&(*eps0 + fb));
    let effective = sa * fraction + sb * (1.0 - fraction);
    ReferenceSolution::new(
        Some(ReferenceStrain::Laminate(LaminateStrain {
            axis,
            fraction,
            fluctuation: [fa, fb],
        })),
        Some(effective),
        format!("laminate, normal axis {}, fraction {fraction}", axis + 1),
    )
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ReferenceManifest {
    Vector(Vec<f64>),
    Object {
        #[serde(default)]
        effective_action: Option<Vec<f64>>,
        #[serde(default)]
        strain_field: Option<String>,
        #[serde(default)]
        note: Option<String>,
    },
}

/// Reads reference values: a `PFLD` strain field, a JSON effective-action
/// vector, or a JSON object `{"effective_action": [...], "strain_field":
/// "file.pfld", "note": "..."}` (field path relative to the manifest).
/// `matrix` and `dim` are checked against the file contents when given.
pub fn load_reference_values(
    path: impl AsRef<Path>,
    matrix: Option<&PatternMatrix>,
    dim: usize,
) -> Result<ReferenceSolution> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(crate::field::MAGIC) {
        let strain = read_strain(&FieldFile::from_bytes(&bytes)?, matrix, dim)?;
        return ReferenceSolution::new(Some(strain), None, path.display().to_string());
    }
    let manifest: ReferenceManifest = serde_json::from_slice(&bytes)?;
    let (eff, field, note) = match manifest {
        ReferenceManifest::Vector(v) => (Some(v), None, None),
        ReferenceManifest::Object {
            effective_action,
            strain_field,
            note,
        } => (effective_action, strain_field, note),
    };
    let effective_action = eff
        .map(|v| {
            if v.len() != mandel_size(dim) {
                return Err(Error::Format(format!(
                    "effective action has {} components, expected {}",
                    v.len(),
                    mandel_size(dim)
                )));
            }
            SymTensor2::from_mandel(dim, &v)
        })
        .transpose()?;
    let strain = field
        .map(|f| {
            let p = path.parent().unwrap_or(Path::new(".")).join(f);
            read_strain(&FieldFile::read(p)?, matrix, dim)
        })
        .transpose()?;
    ReferenceSolution::new(
        strain,
        effective_action,
        note.unwrap_or_else(|| path.display().to_string()),
    )
}

fn read_strain(file: &FieldFile, matrix: Option<&PatternMatrix>, dim: usize) -> Result<ReferenceStrain> {
    if file.domain != Domain::Space {
        return Err(Error::Format("reference strain must be a space-domain field".into()));
    }
    if let Some(m) = matrix {
        if &file.matrix != m {
            return Err(Error::Format(format!(
                "reference pattern matrix {} does not match {m}",
                file.matrix
            )));
        }
    }
    if file.matrix.dim() != dim || file.ncomp != mandel_size(dim) {
        return Err(Error::Format(format!(
            "reference field has d = {}, D = {}; expected d = {dim}",
            file.matrix.dim(),
            file.ncomp
        )));
    }
    Ok(ReferenceStrain::Sampled {
        matrix: file.matrix.clone(),
        field: StrainField::from_data(file.ncomp, file.values.clone())?,
    })
}

/// Writes a space-domain strain field.
pub fn strain_file(matrix: &PatternMatrix, field: &StrainField) -> Result<FieldFile> {
    FieldFile::new(matrix.clone(), field.ncomp(), Domain::Space, field.data().to_vec())
}
