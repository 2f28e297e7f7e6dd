//! Report, field, image and trace export.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use latticehom::geometry::strain_file;
use latticehom::lattice::{Lattice, PatternMatrix};
use serde::Serialize;

use crate::{Evaluation, Experiment, SolveSummary};

/// Grayscale image stored as binary PPM (`P6`, equal RGB channels).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for &p in &self.pixels {
            out.extend_from_slice(&[p, p, p]);
        }
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            ensure!(start < pos, "truncated PPM header");
            fields.push(std::str::from_utf8(&bytes[start..pos])?.to_string());
        }
        pos += 1;
        ensure!(fields[0] == "P6", "not a binary PPM");
        let width: usize = fields[1].parse()?;
        let height: usize = fields[2].parse()?;
        ensure!(fields[3] == "255", "only 8-bit PPM is supported");
        let body = bytes.get(pos..).unwrap_or_default();
        ensure!(body.len() == width * height * 3, "PPM body has {} bytes", body.len());
        let mut pixels = Vec::with_capacity(width * height);
        for px in body.chunks(3) {
            if px[0] != px[1] || px[1] != px[2] {
                bail!("PPM is not grayscale");
            }
            pixels.push(px[0]);
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }
}

/// Renders per-point values on the Smith-coordinate raster: width is the
/// last Smith factor, rows run over the remaining coordinates. Values are
/// scaled to the field maximum.
pub fn render_pattern(lattice: &Lattice, values: &[f64]) -> Result<GrayImage> {
    ensure!(values.len() == lattice.m(), "one value per pattern point expected");
    let shape = lattice.smith().shape();
    let width = *shape.last().unwrap_or(&1);
    let height = lattice.m() / width;
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    let pixels = values
        .iter()
        .map(|&v| {
            if max > 0.0 {
                (v.max(0.0) / max * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}

pub fn residual_csv(history: &[f64]) -> String {
    let mut s = String::from("iteration,residual\n");
    for (i, r) in history.iter().enumerate() {
        writeln!(s, "{},{:e}", i + 1, r).unwrap();
    }
    s
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Report JSON without wall-clock fields, for reproducibility checks.
pub fn strip_wall_time(json: &str) -> Result<String> {
    let mut v: serde_json::Value = serde_json::from_str(json)?;
    fn strip(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(map) => {
                map.remove("wall_time_s");
                map.values_mut().for_each(strip);
            }
            serde_json::Value::Array(a) => a.iter_mut().for_each(strip),
            _ => {}
        }
    }
    strip(&mut v);
    Ok(serde_json::to_string_pretty(&v)?)
}

pub(crate) fn write_artifacts(exp: &Experiment, ev: &Evaluation, summary: &SolveSummary) -> Result<Vec<PathBuf>> {
    let out = &exp.config.output;
    let mut written = Vec::new();
    if let Some(p) = &out.report {
        let p = exp.config.resolve(p);
        write_json(&p, summary)?;
        written.push(p);
    }
    if let Some(p) = &out.strain {
        let p = exp.config.resolve(p);
        strain_file(&exp.config.pattern_matrix, &ev.solve.strain)?
            .write(&p)
            .with_context(|| format!("writing {}", p.display()))?;
        written.push(p);
    }
    if let Some(p) = &out.residuals {
        let p = exp.config.resolve(p);
        std::fs::write(&p, residual_csv(&ev.solve.residual_history))
            .with_context(|| format!("writing {}", p.display()))?;
        written.push(p);
    }
    if let Some(p) = &out.elog_image {
        let p = exp.config.resolve(p);
        let Some(elog) = &ev.metrics.e_log else {
            bail!("elog_image requested but no reference strain field is available");
        };
        std::fs::write(&p, render_pattern(&exp.lattice, elog)?.to_ppm())
            .with_context(|| format!("writing {}", p.display()))?;
        written.push(p);
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Extent {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

fn extent(d: usize, points: impl Iterator<Item = Vec<f64>>) -> Extent {
    let mut e = Extent {
        min: vec![f64::INFINITY; d],
        max: vec![f64::NEG_INFINITY; d],
    };
    for p in points {
        for i in 0..d {
            e.min[i] = e.min[i].min(p[i]);
            e.max[i] = e.max[i].max(p[i]);
        }
    }
    e
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PatternInfo {
    pub matrix: PatternMatrix,
    pub m: usize,
    pub smith_factors: Vec<usize>,
    /// Extent of `P(M)` in `[-1/2, 1/2)^d`.
    pub pattern_extent: Extent,
    /// Extent of the frequency set `G(Mᵀ)`.
    pub frequency_extent: Extent,
    /// Cyclic transform lengths applied along the Smith axes.
    pub fft_axes: Vec<usize>,
}

pub fn pattern_info(matrix: &PatternMatrix) -> Result<PatternInfo> {
    let l = Lattice::new(matrix)?;
    let d = matrix.dim();
    let shape = l.smith().shape();
    Ok(PatternInfo {
        matrix: matrix.clone(),
        m: l.m(),
        smith_factors: shape.clone(),
        pattern_extent: extent(d, (0..l.m()).map(|i| l.pattern().point(i))),
        frequency_extent: extent(d, l.frequencies().iter().map(|k| k.iter().map(|&x| x as f64).collect())),
        fft_axes: shape.into_iter().filter(|&n| n > 1).collect(),
    })
}

impl std::fmt::Display for PatternInfo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "pattern matrix   {}", self.matrix)?;
        writeln!(f, "m = |det M|      {}", self.m)?;
        writeln!(f, "Smith factors    {:?}", self.smith_factors)?;
        writeln!(
            f,
            "pattern extent   {:?} .. {:?}",
            self.pattern_extent.min, self.pattern_extent.max
        )?;
        writeln!(
            f,
            "frequency extent {:?} .. {:?}",
            self.frequency_extent.min, self.frequency_extent.max
        )?;
        write!(f, "FFT              {} axis transform(s) of length {:?}", self.fft_axes.len(), self.fft_axes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let img = GrayImage {
            width: 3,
            height: 2,
            pixels: vec![0, 10, 255, 3, 4, 5],
        };
        let bytes = img.to_ppm();
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        assert_eq!(GrayImage::from_ppm(&bytes).unwrap(), img);
        assert!(GrayImage::from_ppm(&bytes[..bytes.len() - 1]).is_err());
        assert!(GrayImage::from_ppm(b"P3\n1 1\n255\n0 0 0").is_err());
    }

    #[test]
    fn render_normalises_to_max() {
        let l = Lattice::new(&PatternMatrix::from_rows(&[vec![2, 1], vec![0, 2]]).unwrap()).unwrap();
        let img = render_pattern(&l, &[0.0, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!((img.width, img.height), (4, 1));
        assert_eq!(img.pixels, vec![0, 64, 128, 255]);
        let zero = render_pattern(&l, &[0.0; 4]).unwrap();
        assert!(zero.pixels.iter().all(|&p| p == 0));
    }

    #[test]
    fn pattern_info_examples() {
        let info = pattern_info(&PatternMatrix::from_rows(&[vec![128, 272], vec![0, 128]]).unwrap()).unwrap();
        assert_eq!(info.m, 16384);
        let info = pattern_info(&PatternMatrix::identity(2).unwrap()).unwrap();
        assert_eq!(info.m, 1);
        assert!(info.fft_axes.is_empty());
        let info = pattern_info(&PatternMatrix::from_rows(&[vec![2, 1], vec![0, 2]]).unwrap()).unwrap();
        assert_eq!(info.smith_factors.iter().product::<usize>(), 4);
        assert_eq!(info.smith_factors, vec![1, 4]);
        assert!(PatternMatrix::from_rows(&[vec![1, 2], vec![2, 4]]).is_err());
    }

    #[test]
    fn csv_and_strip() {
        assert_eq!(residual_csv(&[0.5, 0.25]), "iteration,residual\n1,5e-1\n2,2.5e-1\n");
        let a = strip_wall_time(r#"{"a": 1, "wall_time_s": 3.2, "b": [{"wall_time_s": 1}]}"#).unwrap();
        let b = strip_wall_time(r#"{"a": 1, "wall_time_s": 9.9, "b": [{"wall_time_s": 7}]}"#).unwrap();
        assert_eq!(a, b);
    }
}
