use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{FrameSequence, MechError};

/// Polynomial degree in force.
const N_DEG: usize = 2;
/// Polynomial degree in pixel sum.
const M_DEG: usize = 1;
const N_COEF: usize = (N_DEG + 1) * (M_DEG + 1);

/// One calibration observation: force, pixel sum and true diameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub force: f64,
    pub pixel_sum: f64,
    pub diameter: f64,
}

/// Affine map x -> (x - mean) / scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub scale: f64,
}

impl Standardizer {
    fn fit(xs: impl Iterator<Item = f64> + Clone) -> Self {
        let n = xs.clone().count() as f64;
        let mean = xs.clone().sum::<f64>() / n;
        let sd = (xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { mean, scale: if sd > 0.0 { sd } else { 1.0 } }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.scale
    }
}

/// D(F, I_p) = sum_{i<=2, j<=1} q_ij f^i g^j with f, g the standardised
/// force and pixel sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSurface {
    pub n: usize,
    pub m: usize,
    /// Coefficients in standardised inputs, row-major in (i, j).
    pub coefficients: Vec<f64>,
    pub force_scaling: Standardizer,
    pub intensity_scaling: Standardizer,
    /// Samples the surface was fitted to.
    pub samples: Vec<CalibrationSample>,
}

fn monomials(f: f64, g: f64) -> [f64; N_COEF] {
    let mut out = [0.0; N_COEF];
    for i in 0..=N_DEG {
        for j in 0..=M_DEG {
            out[i * (M_DEG + 1) + j] = f.powi(i as i32) * g.powi(j as i32);
        }
    }
    out
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, t| acc * (n - t) as f64 / (t + 1) as f64)
}

impl CalibrationSurface {
    /// Surface returning `c` everywhere.
    pub fn constant(c: f64) -> Self {
        let mut coefficients = vec![0.0; N_COEF];
        coefficients[0] = c;
        let id = Standardizer { mean: 0.0, scale: 1.0 };
        Self { n: N_DEG, m: M_DEG, coefficients, force_scaling: id, intensity_scaling: id, samples: Vec::new() }
    }

    pub fn evaluate(&self, force: f64, pixel_sum: f64) -> f64 {
        let z = monomials(self.force_scaling.apply(force), self.intensity_scaling.apply(pixel_sum));
        z.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }

    /// Coefficients p_ij of the same polynomial in raw F and I_p.
    pub fn unscaled_coefficients(&self) -> Vec<f64> {
        let (fs, is) = (self.force_scaling, self.intensity_scaling);
        let mut p = vec![0.0; N_COEF];
        for i in 0..=N_DEG {
            for j in 0..=M_DEG {
                let q = self.coefficients[i * (M_DEG + 1) + j];
                for k in 0..=i {
                    let a = binom(i, k) * (-fs.mean).powi((i - k) as i32) / fs.scale.powi(i as i32);
                    for l in 0..=j {
                        let b = binom(j, l) * (-is.mean).powi((j - l) as i32) / is.scale.powi(j as i32);
                        p[k * (M_DEG + 1) + l] += q * a * b;
                    }
                }
            }
        }
        p
    }

    pub fn is_finite(&self) -> bool {
        self.coefficients.iter().all(|c| c.is_finite())
    }

    pub fn save_json(&self, path: &Path) -> Result<(), MechError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| MechError::Io(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| MechError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load_json(path: &Path) -> Result<Self, MechError> {
        let text = std::fs::read_to_string(path).map_err(|e| MechError::Io(format!("{}: {e}", path.display())))?;
        let s: Self = serde_json::from_str(&text).map_err(|e| MechError::Io(format!("{}: {e}", path.display())))?;
        if s.n != N_DEG || s.m != M_DEG || s.coefficients.len() != N_COEF {
            return Err(MechError::Io(format!("{}: expected a degree ({N_DEG}, {M_DEG}) surface", path.display())));
        }
        Ok(s)
    }
}

/// Ordinary least squares on the six monomials F^i I_p^j (i <= 2, j <= 1)
/// after standardising both inputs.
pub fn fit_size_surface(samples: &[CalibrationSample]) -> Result<CalibrationSurface, MechError> {
    let rank_err = |rank| MechError::RankDeficient { rank, samples: samples.len() };
    if samples.len() < N_COEF {
        return Err(rank_err(samples.len()));
    }
    let force_scaling = Standardizer::fit(samples.iter().map(|s| s.force));
    let intensity_scaling = Standardizer::fit(samples.iter().map(|s| s.pixel_sum));
    let rows: Vec<[f64; N_COEF]> = samples
        .iter()
        .map(|s| monomials(force_scaling.apply(s.force), intensity_scaling.apply(s.pixel_sum)))
        .collect();
    let a = DMatrix::from_fn(samples.len(), N_COEF, |r, c| rows[r][c]);
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.diameter));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < N_COEF {
        return Err(rank_err(rank));
    }
    let q = svd.solve(&y, tol).map_err(|_| rank_err(rank))?;
    let surface = CalibrationSurface {
        n: N_DEG,
        m: M_DEG,
        coefficients: q.iter().copied().collect(),
        force_scaling,
        intensity_scaling,
        samples: samples.to_vec(),
    };
    if !surface.is_finite() {
        return Err(rank_err(rank));
    }
    Ok(surface)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeEstimate {
    pub d_mm: f64,
    /// Surface evaluations for each in-window frame, in sequence order.
    pub per_frame: Vec<f64>,
    pub aggregation: String,
}

/// Evaluates the surface on every in-window frame and takes the median.
pub fn estimate_size(seq: &FrameSequence, surface: &CalibrationSurface) -> Result<SizeEstimate, MechError> {
    let per_frame: Vec<f64> = seq.in_window().map(|s| surface.evaluate(s.force, s.pixel_sum)).collect();
    if per_frame.is_empty() {
        return Err(MechError::EmptyWindow { lo: seq.window.0, hi: seq.window.1 });
    }
    let mut sorted = per_frame.clone();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let d_mm = if k % 2 == 1 { sorted[k / 2] } else { 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]) };
    Ok(SizeEstimate { d_mm, per_frame, aggregation: "median".into() })
}
