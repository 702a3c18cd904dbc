//! Image-quality metrics between a reconstruction and its ground truth.

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::FieldMap;

pub const DATA_RANGE: f64 = 1.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check(truth: &FieldMap, pred: &FieldMap) -> Result<()> {
    if !truth.same_shape(pred) {
        return Err(Error::ShapeMismatch(format!(
            "{}×{} truth vs {}×{} prediction",
            truth.width, truth.height, pred.width, pred.height
        )));
    }
    Ok(())
}

fn mse(truth: &FieldMap, pred: &FieldMap) -> f64 {
    let n = truth.values.len() as f64;
    truth.values.iter().zip(&pred.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n
}

pub fn mae(truth: &FieldMap, pred: &FieldMap) -> Result<f64> {
    check(truth, pred)?;
    let n = truth.values.len() as f64;
    Ok(truth.values.iter().zip(&pred.values).map(|(a, b)| (a - b).abs()).sum::<f64>() / n)
}

pub fn rmse(truth: &FieldMap, pred: &FieldMap) -> Result<f64> {
    check(truth, pred)?;
    Ok(mse(truth, pred).sqrt())
}

/// `10 log₁₀(L² / MSE)`; `+∞` for identical maps.
pub fn psnr(truth: &FieldMap, pred: &FieldMap, data_range: f64) -> Result<f64> {
    check(truth, pred)?;
    if !(data_range > 0.0) {
        return Err(Error::InvalidParameter(format!("data range must be positive, got {data_range}")));
    }
    let m = mse(truth, pred);
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / m).log10())
}

pub fn r2(truth: &FieldMap, pred: &FieldMap) -> Result<f64> {
    check(truth, pred)?;
    let n = truth.values.len() as f64;
    let mean = truth.values.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.values.iter().map(|v| (v - mean) * (v - mean)).sum();
    if truth.values.iter().all(|&v| v == truth.values[0]) || ss_tot == 0.0 {
        return Err(Error::Degenerate("R² is undefined for a constant ground truth".into()));
    }
    let ss_res: f64 = truth.values.iter().zip(&pred.values).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Normalized 1-D Gaussian weights of the SSIM window.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (k, v) in w.iter_mut().enumerate() {
        let d = k as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable valid-mode filter: output is `(w − 10) × (h − 10)`, row-major.
fn filter_valid(values: &[f64], width: usize, height: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width + 1 - SSIM_WINDOW;
    let oh = height + 1 - SSIM_WINDOW;
    let mut rows = vec![0.0; ow * height];
    for j in 0..height {
        for i in 0..ow {
            rows[j * ow + i] = (0..SSIM_WINDOW).map(|k| w[k] * values[j * width + i + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for j in 0..oh {
        for i in 0..ow {
            out[j * ow + i] = (0..SSIM_WINDOW).map(|k| w[k] * rows[(j + k) * ow + i]).sum();
        }
    }
    out
}

/// Mean local SSIM over all fully contained 11×11 Gaussian windows.
pub fn ssim(truth: &FieldMap, pred: &FieldMap, data_range: f64) -> Result<f64> {
    check(truth, pred)?;
    if truth.width < SSIM_WINDOW || truth.height < SSIM_WINDOW {
        return Err(Error::InvalidParameter(format!(
            "SSIM needs maps of at least {SSIM_WINDOW}×{SSIM_WINDOW}, got {}×{}",
            truth.width, truth.height
        )));
    }
    if !(data_range > 0.0) {
        return Err(Error::InvalidParameter(format!("data range must be positive, got {data_range}")));
    }
    if truth.values == pred.values {
        return Ok(1.0);
    }
    let (w, h) = (truth.width, truth.height);
    let win = gaussian_window();
    let x = &truth.values;
    let y = &pred.values;
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = filter_valid(x, w, h, &win);
    let my = filter_valid(y, w, h, &win);
    let sxx = filter_valid(&xx, w, h, &win);
    let syy = filter_valid(&yy, w, h, &win);
    let sxy = filter_valid(&xy, w, h, &win);
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let total: f64 = (0..mx.len())
        .map(|k| {
            let (ux, uy) = (mx[k], my[k]);
            let vx = sxx[k] - ux * ux;
            let vy = syy[k] - uy * uy;
            let cov = sxy[k] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub psnr: f64,
    pub r2: f64,
    pub ssim: f64,
    pub data_range: f64,
    pub pixels: usize,
}

impl MetricsReport {
    pub fn compute(truth: &FieldMap, pred: &FieldMap) -> Result<Self> {
        Self::with_range(truth, pred, DATA_RANGE)
    }

    pub fn with_range(truth: &FieldMap, pred: &FieldMap, data_range: f64) -> Result<Self> {
        if pred.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prediction"));
        }
        Ok(Self {
            mae: mae(truth, pred)?,
            rmse: rmse(truth, pred)?,
            psnr: psnr(truth, pred, data_range)?,
            r2: r2(truth, pred)?,
            ssim: ssim(truth, pred, data_range)?,
            data_range,
            pixels: truth.values.len(),
        })
    }

    /// `"inf"` stands in for a non-finite PSNR.
    pub fn psnr_text(&self) -> String {
        if self.psnr.is_finite() {
            format!("{}", self.psnr)
        } else {
            "inf".to_string()
        }
    }
}

impl Serialize for MetricsReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("MetricsReport", 7)?;
        st.serialize_field("mae", &self.mae)?;
        st.serialize_field("rmse", &self.rmse)?;
        if self.psnr.is_finite() {
            st.serialize_field("psnr_db", &self.psnr)?;
        } else {
            st.serialize_field("psnr_db", "inf")?;
        }
        st.serialize_field("r2", &self.r2)?;
        st.serialize_field("ssim", &self.ssim)?;
        st.serialize_field("data_range", &self.data_range)?;
        st.serialize_field("pixels", &self.pixels)?;
        st.end()
    }
}

/// Assigns every pixel the value of the nearest sample (first sample wins ties).
pub fn nearest_neighbor_map(coords: &[(f64, f64)], values: &[f64], width: usize, height: usize) -> Result<FieldMap> {
    if coords.is_empty() || coords.len() != values.len() {
        return Err(Error::ShapeMismatch(format!("{} coordinates, {} values", coords.len(), values.len())));
    }
    let mut map = FieldMap::filled(width, height, 0.0)?;
    for j in 0..height {
        for i in 0..width {
            let p = ((i as f64 + 0.5) / width as f64, (j as f64 + 0.5) / height as f64);
            let mut best = (f64::INFINITY, 0);
            for (k, c) in coords.iter().enumerate() {
                let d = (c.0 - p.0).powi(2) + (c.1 - p.1).powi(2);
                if d < best.0 {
                    best = (d, k);
                }
            }
            map.values[j * width + i] = values[best.1];
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> FieldMap {
        let mut m = FieldMap::filled(w, h, 0.0).unwrap();
        for j in 0..h {
            for i in 0..w {
                m.values[j * w + i] = f(i, j);
            }
        }
        m
    }

    fn ramp(w: usize, h: usize) -> FieldMap {
        map(w, h, |i, j| ((i * 7 + j * 3) % 17) as f64 / 16.0)
    }

    #[test]
    fn identical_maps() {
        let t = ramp(16, 16);
        assert_eq!(mae(&t, &t).unwrap(), 0.0);
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert_eq!(psnr(&t, &t, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(r2(&t, &t).unwrap(), 1.0);
        assert_eq!(ssim(&t, &t, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn constant_offset() {
        let t = ramp(12, 12);
        let p = map(12, 12, |i, j| t.get(i, j) + 0.5);
        assert!((mae(&t, &p).unwrap() - 0.5).abs() < 1e-15);
        assert!((rmse(&t, &p).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_three_by_three() {
        let t = map(3, 3, |i, j| [0.1, 0.4, 0.9, 0.3, 0.5, 0.2, 0.8, 0.7, 0.6][j * 3 + i]);
        let p = map(3, 3, |i, j| [0.2, 0.4, 0.5, 0.3, 0.9, 0.1, 0.8, 0.6, 0.6][j * 3 + i]);
        // |d| = .1 0 .4 0 .4 .1 0 .1 0
        assert!((mae(&t, &p).unwrap() - 1.1 / 9.0).abs() < 1e-15);
        assert!((rmse(&t, &p).unwrap() - (0.35f64 / 9.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn psnr_reference_points() {
        let t = map(4, 4, |_, _| 0.0);
        let p = map(4, 4, |_, _| 1.0);
        assert!(psnr(&t, &p, 1.0).unwrap().abs() < 1e-12);
        let a = psnr(&t, &map(4, 4, |_, _| 0.2), 1.0).unwrap();
        let b = psnr(&t, &map(4, 4, |_, _| 0.1), 1.0).unwrap();
        assert!((b - a - 6.0206).abs() < 1e-4);
    }

    #[test]
    fn r2_reference_points() {
        let t = ramp(8, 8);
        let mean = t.values.iter().sum::<f64>() / 64.0;
        assert!(r2(&t, &map(8, 8, |_, _| mean)).unwrap().abs() < 1e-12);
        assert!(r2(&t, &map(8, 8, |i, j| 1.0 - t.get(i, j))).unwrap() < 0.0);
        assert!(r2(&map(8, 8, |_, _| 0.3), &t).is_err());
    }

    #[test]
    fn ssim_penalizes_inversion_and_affine_change() {
        let t = ramp(16, 16);
        assert!(ssim(&t, &map(16, 16, |i, j| 1.0 - t.get(i, j)), 1.0).unwrap() < 1.0);
        assert!(ssim(&t, &map(16, 16, |i, j| 0.8 * t.get(i, j) + 0.1), 1.0).unwrap() < 1.0);
        assert!(ssim(&ramp(10, 10), &ramp(10, 10), 1.0).is_err());
    }

    #[test]
    fn report_json_keys() {
        let t = ramp(12, 12);
        let r = MetricsReport::compute(&t, &t).unwrap();
        let v: serde_json::Value = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        for k in ["mae", "rmse", "psnr_db", "r2", "ssim"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["psnr_db"], "inf");
    }

    #[test]
    fn nearest_neighbor_assignment() {
        let m = nearest_neighbor_map(&[(0.1, 0.1), (0.9, 0.9)], &[1.0, 2.0], 4, 4).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(3, 3), 2.0);
        assert_eq!(m.get(3, 0), 1.0); // tie goes to the first sample
    }
}
