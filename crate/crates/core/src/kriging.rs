//! Kriging with a separable power-exponential correlation, fitted by maximum
//! concentrated likelihood, plus reference-point calibration of the inputs.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldMap, ReferenceSet};
use crate::noise::stream_rng;
use crate::optim::{nelder_mead, NelderMeadOptions};

pub const LN_ALPHA_MIN: f64 = -4.605_170_185_988_091; // ln 1e-2
pub const LN_ALPHA_MAX: f64 = 6.907_755_278_982_137; // ln 1e3
pub const POWER_MIN: f64 = 1.0;
pub const POWER_MAX: f64 = 2.0;
pub const NUGGET_START: f64 = 1e-10;
pub const NUGGET_MAX: f64 = 1e-4;
pub const DEFAULT_STARTS: usize = 8;
pub const DEFAULT_EVALS_PER_START: usize = 300;

/// Correlation hyperparameters: `exp(−Σ_h α_h |Δ_h|^{P_h})` plus a diagonal nugget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrigingHyper {
    pub alpha: [f64; 2],
    pub power: [f64; 2],
    pub nugget: f64,
}

impl KrigingHyper {
    pub fn new(alpha: [f64; 2], power: [f64; 2], nugget: f64) -> Self {
        Self { alpha, power, nugget }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha[0], self.alpha[1], self.power[0], self.power[1], self.nugget];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kriging hyperparameters"));
        }
        if self.alpha.iter().any(|&a| a < 0.0) || self.nugget < 0.0 {
            return Err(Error::InvalidParameter("α and nugget must be non-negative".into()));
        }
        if self.power.iter().any(|p| !(POWER_MIN..=POWER_MAX).contains(p)) {
            return Err(Error::InvalidParameter(format!("powers must lie in [1, 2], got {:?}", self.power)));
        }
        Ok(())
    }

    fn from_search(theta: &[f64], nugget: f64) -> Self {
        Self { alpha: [theta[0].exp(), theta[1].exp()], power: [theta[2], theta[3]], nugget }
    }
}

#[inline]
pub fn correlation(a: (f64, f64), b: (f64, f64), hyper: &KrigingHyper) -> f64 {
    let dx = (a.0 - b.0).abs();
    let dy = (a.1 - b.1).abs();
    let term = |d: f64, alpha: f64, p: f64| {
        if d == 0.0 {
            0.0
        } else if p == 2.0 {
            alpha * d * d
        } else {
            alpha * d.powf(p)
        }
    };
    (-(term(dx, hyper.alpha[0], hyper.power[0]) + term(dy, hyper.alpha[1], hyper.power[1]))).exp()
}

/// Lower-triangular Cholesky factor `R = L Lᵀ`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

/// Pivots at or below this fraction of the diagonal scale count as singular.
const PIVOT_TOLERANCE: f64 = 1e-13;

impl Cholesky {
    pub fn factor(n: usize, a: &[f64]) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::ShapeMismatch(format!("{} entries for a {n}×{n} matrix", a.len())));
        }
        let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(sum > PIVOT_TOLERANCE * scale) {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: sum });
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `ln |R| = 2 Σ ln L_ii`.
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| 2.0 * self.l[i * self.n + i].ln()).sum()
    }

    /// Solves `R x = b`.
    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[i * n + k] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }
}

/// Dense correlation matrix with the nugget on the diagonal.
pub fn correlation_matrix(coords: &[(f64, f64)], hyper: &KrigingHyper) -> Vec<f64> {
    let n = coords.len();
    let mut r = vec![0.0; n * n];
    for i in 0..n {
        r[i * n + i] = 1.0 + hyper.nugget;
        for j in 0..i {
            let c = correlation(coords[i], coords[j], hyper);
            r[i * n + j] = c;
            r[j * n + i] = c;
        }
    }
    r
}

pub fn build_r(coords: &[(f64, f64)], hyper: &KrigingHyper) -> Result<Cholesky> {
    if coords.is_empty() {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    hyper.validate()?;
    Cholesky::factor(coords.len(), &correlation_matrix(coords, hyper))
}

/// Generalized-least-squares mean `μ̂` and profiled variance `σ̂²`.
pub fn gls_mean_var(chol: &Cholesky, y: &[f64]) -> Result<(f64, f64)> {
    if y.len() != chol.dim() {
        return Err(Error::ShapeMismatch(format!("{} values for {} samples", y.len(), chol.dim())));
    }
    let ones = vec![1.0; y.len()];
    let r_inv_1 = chol.solve(&ones);
    let mu = r_inv_1.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / r_inv_1.iter().sum::<f64>();
    let res: Vec<f64> = y.iter().map(|v| v - mu).collect();
    let r_inv_res = chol.solve(&res);
    let sigma2 = res.iter().zip(&r_inv_res).map(|(a, b)| a * b).sum::<f64>() / y.len() as f64;
    Ok((mu, sigma2.max(0.0)))
}

/// Concentrated log-likelihood `−(n/2) ln σ̂² − ½ ln|R|`; `−∞` when `σ̂² = 0`
/// or `R` cannot be factored.
pub fn log_likelihood(hyper: &KrigingHyper, coords: &[(f64, f64)], y: &[f64]) -> f64 {
    let Ok(chol) = build_r(coords, hyper) else {
        return f64::NEG_INFINITY;
    };
    concentrated(&chol, y).unwrap_or(f64::NEG_INFINITY)
}

fn concentrated(chol: &Cholesky, y: &[f64]) -> Option<f64> {
    let (_, sigma2) = gls_mean_var(chol, y).ok()?;
    if !(sigma2 > 0.0) {
        return None;
    }
    let ll = -0.5 * y.len() as f64 * sigma2.ln() - 0.5 * chol.log_det();
    ll.is_finite().then_some(ll)
}

/// Factors `R` with the smallest nugget in `hyper.nugget, ×10, …, NUGGET_MAX` that works.
fn factor_adaptive(coords: &[(f64, f64)], hyper: &KrigingHyper) -> Result<(Cholesky, f64)> {
    let mut nugget = hyper.nugget.max(NUGGET_START);
    loop {
        let h = KrigingHyper { nugget, ..*hyper };
        match build_r(coords, &h) {
            Ok(chol) => return Ok((chol, nugget)),
            Err(e) if nugget >= NUGGET_MAX => return Err(e),
            Err(_) => nugget = (nugget * 10.0).min(NUGGET_MAX),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KrigingModel {
    pub coords: Vec<(f64, f64)>,
    pub values: Vec<f64>,
    pub hyper: KrigingHyper,
    pub mu: f64,
    pub sigma2: f64,
    pub log_likelihood: f64,
    /// Constant data: the model predicts `mu` everywhere.
    pub degenerate: bool,
    chol: Option<Cholesky>,
    /// `R⁻¹ (y − 1 μ̂)`.
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    coords: Vec<(f64, f64)>,
    values: Vec<f64>,
    alpha: [f64; 2],
    power: [f64; 2],
    nugget: f64,
    mu: f64,
    sigma2: f64,
    log_likelihood: Option<f64>,
    degenerate: bool,
}

fn check_samples(coords: &[(f64, f64)], y: &[f64]) -> Result<()> {
    if coords.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} coordinates but {} values", coords.len(), y.len())));
    }
    if coords.is_empty() {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    if y.iter().any(|v| !v.is_finite()) || coords.iter().any(|c| !(c.0.is_finite() && c.1.is_finite())) {
        return Err(Error::NonFinite("samples"));
    }
    Ok(())
}

fn is_constant(y: &[f64]) -> bool {
    y.iter().all(|&v| v == y[0])
}

impl KrigingModel {
    /// Conditions the predictor on the data with fixed hyperparameters.
    pub fn with_hyper(coords: &[(f64, f64)], y: &[f64], hyper: KrigingHyper) -> Result<Self> {
        check_samples(coords, y)?;
        hyper.validate()?;
        if is_constant(y) {
            return Ok(Self::constant(coords, y, hyper));
        }
        let chol = build_r(coords, &hyper)?;
        Self::assemble(coords, y, hyper, chol)
    }

    fn constant(coords: &[(f64, f64)], y: &[f64], hyper: KrigingHyper) -> Self {
        Self {
            coords: coords.to_vec(),
            values: y.to_vec(),
            hyper,
            mu: y[0],
            sigma2: 0.0,
            log_likelihood: f64::NEG_INFINITY,
            degenerate: true,
            chol: None,
            weights: vec![0.0; y.len()],
        }
    }

    fn assemble(coords: &[(f64, f64)], y: &[f64], hyper: KrigingHyper, chol: Cholesky) -> Result<Self> {
        let (mu, sigma2) = gls_mean_var(&chol, y)?;
        let res: Vec<f64> = y.iter().map(|v| v - mu).collect();
        let weights = chol.solve(&res);
        let log_likelihood = concentrated(&chol, y).unwrap_or(f64::NEG_INFINITY);
        Ok(Self {
            coords: coords.to_vec(),
            values: y.to_vec(),
            hyper,
            mu,
            sigma2,
            log_likelihood,
            degenerate: false,
            chol: Some(chol),
            weights,
        })
    }

    /// `ŷ(x) = μ̂ + r(x)ᵀ R⁻¹ (y − 1 μ̂)`.
    pub fn predict(&self, x: (f64, f64)) -> f64 {
        self.mu
            + self
                .coords
                .iter()
                .zip(&self.weights)
                .map(|(&s, w)| w * correlation(x, s, &self.hyper))
                .sum::<f64>()
    }

    /// Predictions at every pixel centre of a `width × height` map.
    pub fn predict_grid(&self, width: usize, height: usize) -> Result<FieldMap> {
        let mut map = FieldMap::filled(width, height, 0.0)?;
        let rows: Vec<Vec<f64>> = (0..height)
            .into_par_iter()
            .map(|j| {
                (0..width)
                    .map(|i| {
                        self.predict(((i as f64 + 0.5) / width as f64, (j as f64 + 0.5) / height as f64))
                    })
                    .collect()
            })
            .collect();
        map.values = rows.into_iter().flatten().collect();
        Ok(map)
    }

    pub fn factor(&self) -> Option<&Cholesky> {
        self.chol.as_ref()
    }

    pub fn to_json(&self) -> String {
        let doc = ModelJson {
            coords: self.coords.clone(),
            values: self.values.clone(),
            alpha: self.hyper.alpha,
            power: self.hyper.power,
            nugget: self.hyper.nugget,
            mu: self.mu,
            sigma2: self.sigma2,
            log_likelihood: self.log_likelihood.is_finite().then_some(self.log_likelihood),
            degenerate: self.degenerate,
        };
        serde_json::to_string_pretty(&doc).expect("model document always serializes")
    }

    /// Rebuilds a model from [`Self::to_json`] output by refactoring `R`.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelJson = serde_json::from_str(text).map_err(|e| Error::Parse(format!("kriging model: {e}")))?;
        Self::with_hyper(&doc.coords, &doc.values, KrigingHyper::new(doc.alpha, doc.power, doc.nugget))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub starts: usize,
    pub evaluations_per_start: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { starts: DEFAULT_STARTS, evaluations_per_start: DEFAULT_EVALS_PER_START, seed: 0 }
    }
}

/// Maximum-likelihood fit over `(ln α₁, ln α₂, P₁, P₂)` by multi-start
/// Nelder–Mead inside the search box. The first start sits at the box centre,
/// the rest are drawn from `seed`. Ties keep the earliest start.
pub fn fit(coords: &[(f64, f64)], y: &[f64], opts: FitOptions) -> Result<KrigingModel> {
    check_samples(coords, y)?;
    if coords.len() < 2 {
        return Err(Error::InvalidParameter("fitting needs at least two samples".into()));
    }
    if is_constant(y) {
        return Ok(KrigingModel::constant(coords, y, KrigingHyper::new([1.0, 1.0], [2.0, 2.0], 0.0)));
    }
    let lo = [LN_ALPHA_MIN, LN_ALPHA_MIN, POWER_MIN, POWER_MIN];
    let hi = [LN_ALPHA_MAX, LN_ALPHA_MAX, POWER_MAX, POWER_MAX];
    let mut rng = stream_rng(opts.seed, 0);
    let starts: Vec<Vec<f64>> = (0..opts.starts.max(1))
        .map(|s| {
            if s == 0 {
                lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect()
            } else {
                lo.iter().zip(&hi).map(|(&a, &b)| rng.gen_range(a..=b)).collect()
            }
        })
        .collect();

    let objective = |theta: &[f64]| -> f64 {
        let hyper = KrigingHyper::from_search(theta, NUGGET_START);
        match factor_adaptive(coords, &hyper) {
            Ok((chol, _)) => concentrated(&chol, y).map_or(f64::INFINITY, |ll| -ll),
            Err(_) => f64::INFINITY,
        }
    };
    let step = [1.0, 1.0, 0.25, 0.25];
    let results: Vec<(Vec<f64>, f64)> = starts
        .par_iter()
        .map(|x0| {
            let m = nelder_mead(
                objective,
                x0,
                &step,
                Some((&lo, &hi)),
                NelderMeadOptions { max_evaluations: opts.evaluations_per_start, f_tol: 1e-9, x_tol: 1e-6 },
            );
            (m.x, m.value)
        })
        .collect();

    let mut best: Option<&(Vec<f64>, f64)> = None;
    for r in &results {
        if r.1.is_finite() && best.is_none_or(|b| r.1 < b.1) {
            best = Some(r);
        }
    }
    let Some((theta, _)) = best else {
        return Err(Error::Degenerate("no hyperparameters gave a factorable correlation matrix".into()));
    };
    let (chol, nugget) = factor_adaptive(coords, &KrigingHyper::from_search(theta, NUGGET_START))?;
    KrigingModel::assemble(coords, y, KrigingHyper::from_search(theta, nugget), chol)
}

/// Input correction applied before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Calibration {
    None,
    Bias,
    Proportional,
}

impl Calibration {
    pub fn name(self) -> &'static str {
        match self {
            Calibration::None => "none",
            Calibration::Bias => "bias",
            Calibration::Proportional => "proportional",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "none" => Ok(Calibration::None),
            "bias" => Ok(Calibration::Bias),
            "proportional" => Ok(Calibration::Proportional),
            _ => Err(Error::Parse(format!("unknown calibration '{name}' (none, bias, proportional)"))),
        }
    }

    pub fn apply(self, values: &[f64], refs: &ReferenceSet) -> Result<Vec<f64>> {
        match self {
            Calibration::None => Ok(values.to_vec()),
            Calibration::Bias => calibrate_bias(values, refs),
            Calibration::Proportional => calibrate_proportional(values, refs),
        }
    }
}

fn check_refs(refs: &ReferenceSet) -> Result<()> {
    if refs.is_empty() || refs.measured.len() != refs.nominal.len() {
        return Err(Error::InvalidParameter(
            "calibration needs references with matching nominal and measured values".into(),
        ));
    }
    Ok(())
}

/// `y + (mean nominal − mean measured)` over the references.
pub fn calibrate_bias(values: &[f64], refs: &ReferenceSet) -> Result<Vec<f64>> {
    check_refs(refs)?;
    let shift = refs.mean_nominal() - refs.mean_measured();
    Ok(values.iter().map(|v| v + shift).collect())
}

/// `y · mean nominal / mean measured` over the references.
pub fn calibrate_proportional(values: &[f64], refs: &ReferenceSet) -> Result<Vec<f64>> {
    check_refs(refs)?;
    let measured = refs.mean_measured();
    if measured == 0.0 || !measured.is_finite() {
        return Err(Error::Degenerate("mean measured reference value is zero".into()));
    }
    let ratio = refs.mean_nominal() / measured;
    Ok(values.iter().map(|v| v * ratio).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs(nominal: Vec<f64>, measured: Vec<f64>) -> ReferenceSet {
        ReferenceSet { coords: vec![(0.5, 0.5); nominal.len()], nominal, measured }
    }

    #[test]
    fn correlation_values() {
        let h = KrigingHyper::new([1.0, 1.0], [1.0, 1.0], 0.0);
        assert_eq!(correlation((0.3, 0.3), (0.3, 0.3), &h), 1.0);
        assert!((correlation((0.0, 0.0), (0.5, 0.5), &h) - (-1.0f64).exp()).abs() < 1e-15);
        let h = KrigingHyper::new([2.0, 5.0], [1.3, 1.9], 0.0);
        assert_eq!(correlation((0.1, 0.7), (0.4, 0.2), &h), correlation((0.4, 0.2), (0.1, 0.7), &h));
    }

    #[test]
    fn single_point_matrix() {
        let h = KrigingHyper::new([1.0, 1.0], [2.0, 2.0], 0.25);
        let chol = build_r(&[(0.2, 0.2)], &h).unwrap();
        assert!((chol.log_det() - 1.25f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn huge_alpha_gives_identity() {
        let h = KrigingHyper::new([1e12, 1e12], [2.0, 2.0], 0.0);
        let r = correlation_matrix(&[(0.1, 0.1), (0.2, 0.3), (0.9, 0.5)], &h);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(r[i * 3 + j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn duplicate_points_are_singular() {
        let h = KrigingHyper::new([1.0, 1.0], [2.0, 2.0], 0.0);
        assert!(matches!(
            build_r(&[(0.3, 0.3), (0.3, 0.3)], &h),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let h = KrigingHyper::new([1.0, 1.0], [2.0, 2.0], 1e-6);
        assert!(build_r(&[(0.3, 0.3), (0.3, 0.3)], &h).is_ok());
    }

    #[test]
    fn identity_correlation_gives_plain_moments() {
        let h = KrigingHyper::new([1e12, 1e12], [2.0, 2.0], 0.0);
        let coords = [(0.1, 0.1), (0.5, 0.5), (0.9, 0.2), (0.3, 0.8)];
        let y = [1.0, 2.0, 4.0, 7.0];
        let (mu, s2) = gls_mean_var(&build_r(&coords, &h).unwrap(), &y).unwrap();
        assert!((mu - 3.5).abs() < 1e-14);
        assert!((s2 - 5.25).abs() < 1e-14);
        let (mu, s2) = gls_mean_var(&build_r(&[(0.4, 0.4)], &h).unwrap(), &[2.5]).unwrap();
        assert_eq!((mu, s2), (2.5, 0.0));
    }

    #[test]
    fn two_sample_prediction_closed_form() {
        let h = KrigingHyper::new([3.0, 2.0], [2.0, 1.5], 0.0);
        let (s1, s2) = ((0.2, 0.3), (0.7, 0.6));
        let (y1, y2) = (0.4, 1.3);
        let m = KrigingModel::with_hyper(&[s1, s2], &[y1, y2], h).unwrap();
        let rho = correlation(s1, s2, &h);
        // with R = [[1, ρ], [ρ, 1]], μ̂ is the plain mean
        let mu = 0.5 * (y1 + y2);
        let (e1, e2) = (y1 - mu, y2 - mu);
        let w1 = (e1 - rho * e2) / (1.0 - rho * rho);
        let w2 = (e2 - rho * e1) / (1.0 - rho * rho);
        let x = (0.45, 0.1);
        let expected = mu + correlation(x, s1, &h) * w1 + correlation(x, s2, &h) * w2;
        assert!((m.predict(x) - expected).abs() < 1e-12);
    }

    #[test]
    fn far_prediction_tends_to_mean() {
        let h = KrigingHyper::new([50.0, 50.0], [2.0, 2.0], 0.0);
        let m = KrigingModel::with_hyper(&[(0.0, 0.0), (0.1, 0.05)], &[1.0, 3.0], h).unwrap();
        assert!((m.predict((1.0, 1.0)) - m.mu).abs() < 1e-12);
    }

    #[test]
    fn constant_data_predicts_constant() {
        let coords = [(0.1, 0.2), (0.6, 0.6), (0.9, 0.1)];
        let m = fit(&coords, &[0.7; 3], FitOptions::default()).unwrap();
        assert!(m.degenerate);
        let map = m.predict_grid(12, 12).unwrap();
        assert!(map.values.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn json_roundtrip_preserves_predictions() {
        let coords = [(0.1, 0.2), (0.6, 0.6), (0.9, 0.1), (0.3, 0.9)];
        let y = [0.1, 0.5, 0.2, 0.9];
        let m = fit(&coords, &y, FitOptions { starts: 2, evaluations_per_start: 50, seed: 1 }).unwrap();
        let back = KrigingModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back.hyper, m.hyper);
        assert!((back.predict((0.4, 0.4)) - m.predict((0.4, 0.4))).abs() < 1e-12);
    }

    #[test]
    fn bias_calibration() {
        let r = refs(vec![0.2, 0.6], vec![0.2, 0.6]);
        assert_eq!(calibrate_bias(&[0.1, 0.9], &r).unwrap(), vec![0.1, 0.9]);
        let r = refs(vec![0.2, 0.6], vec![0.45, 0.85]);
        let out = calibrate_bias(&[0.35, 1.0], &r).unwrap();
        assert!((out[0] - 0.1).abs() < 1e-15 && (out[1] - 0.75).abs() < 1e-15);
        let r = refs(vec![0.2, 0.6], vec![0.4, 1.2]);
        let out = calibrate_bias(&[0.2, 1.6], &r).unwrap();
        assert!((out[0] - 0.1).abs() > 1e-3 || (out[1] - 0.8).abs() > 1e-3);
    }

    #[test]
    fn proportional_calibration() {
        let r = refs(vec![0.2, 0.6], vec![0.2, 0.6]);
        assert_eq!(calibrate_proportional(&[0.1, 0.9], &r).unwrap(), vec![0.1, 0.9]);
        let r = refs(vec![0.2, 0.6], vec![0.3, 0.9]);
        let out = calibrate_proportional(&[0.15, 1.2], &r).unwrap();
        assert!((out[0] - 0.1).abs() < 1e-15 && (out[1] - 0.8).abs() < 1e-15);
        let r = refs(vec![0.2, 0.6], vec![-0.3, 0.3]);
        assert!(calibrate_proportional(&[0.1], &r).is_err());
    }
}
