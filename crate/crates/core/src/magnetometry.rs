//! Ensemble response curves, slopes, sensitivity and field inversion.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{detuning_grid, ou_trajectory, stream_rng, NoiseConfig, NoiseRealization, DEFAULT_OU_GRID};
use crate::spin::{run_protocol, run_protocol_trace, PulseSequence};

/// NV gyromagnetic ratio `2π × 28 Hz/nT`, in rad/ns per nT.
pub const GAMMA: f64 = 2.0 * PI * 28.0e-9;

/// Ensemble dimensions: static detunings on the weighted grid × OU trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSize {
    pub detunings: usize,
    pub trajectories: usize,
}

impl EnsembleSize {
    pub fn new(detunings: usize, trajectories: usize) -> Self {
        Self { detunings, trajectories }
    }

    pub fn realizations(&self) -> usize {
        self.detunings * self.trajectories
    }
}

/// A fixed set of weighted noise realizations spanning one sequence.
#[derive(Debug, Clone)]
pub struct NoiseEnsemble {
    pub members: Vec<(NoiseRealization, f64)>,
    pub size: EnsembleSize,
}

impl NoiseEnsemble {
    /// Detunings come from the weighted grid on `[−W, W]`; each is paired with
    /// `trajectories` OU traces drawn from streams `seed`/`0..`. Without OU noise a
    /// single trajectory slot is used.
    pub fn draw(cfg: &NoiseConfig, size: EnsembleSize, duration: f64, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if size.detunings == 0 || size.trajectories == 0 {
            return Err(Error::InvalidParameter("ensemble counts must be at least 1".into()));
        }
        let grid = detuning_grid(size.detunings, cfg.fwhm)?;
        let traces = if cfg.has_dynamic_noise() {
            (0..size.trajectories as u64)
                .map(|i| {
                    let mut rng = stream_rng(seed, i);
                    ou_trajectory(duration, DEFAULT_OU_GRID, cfg, &mut rng).map(|t| Some(std::sync::Arc::new(t)))
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![None]
        };
        let per_trace = 1.0 / traces.len() as f64;
        let mut members = Vec::with_capacity(grid.len() * traces.len());
        for (index, &(detuning, weight)) in grid.iter().enumerate() {
            for (j, trace) in traces.iter().enumerate() {
                members.push((
                    NoiseRealization {
                        static_detuning: detuning,
                        trace: trace.clone(),
                        provenance: Some((seed, (index * traces.len() + j) as u64)),
                    },
                    weight * per_trace,
                ));
            }
        }
        Ok(Self { members, size })
    }

    pub fn noiseless() -> Self {
        Self { members: vec![(NoiseRealization::noiseless(), 1.0)], size: EnsembleSize::new(1, 1) }
    }
}

/// Weighted ensemble mean of `P₀` at field `b_nt`, without readout noise.
pub fn mean_population(b_nt: f64, seq: &PulseSequence, ensemble: &NoiseEnsemble, dt: f64) -> Result<f64> {
    if !b_nt.is_finite() {
        return Err(Error::NonFinite("field"));
    }
    let g = GAMMA * b_nt;
    let w = seq.matched_ac_frequency();
    let values: Vec<f64> = ensemble
        .members
        .par_iter()
        .map(|(noise, weight)| run_protocol(seq, g, w, noise, dt).map(|p| p * weight))
        .collect::<Result<_>>()?;
    Ok(values.iter().sum::<f64>().clamp(0.0, 1.0))
}

/// Ensemble-mean population after every XY-8 block at fixed field `b_nt`,
/// as `(elapsed ns, P₀)` pairs.
pub fn population_trace(b_nt: f64, seq: &PulseSequence, ensemble: &NoiseEnsemble, dt: f64) -> Result<Vec<(f64, f64)>> {
    if !b_nt.is_finite() {
        return Err(Error::NonFinite("field"));
    }
    let g = GAMMA * b_nt;
    let w = seq.matched_ac_frequency();
    let traces: Vec<Vec<(f64, f64)>> = ensemble
        .members
        .par_iter()
        .map(|(noise, _)| run_protocol_trace(seq, g, w, noise, dt))
        .collect::<Result<_>>()?;
    let mut out: Vec<(f64, f64)> = traces[0].iter().map(|&(t, _)| (t, 0.0)).collect();
    for (trace, (_, weight)) in traces.iter().zip(&ensemble.members) {
        for (acc, &(_, p)) in out.iter_mut().zip(trace) {
            acc.1 += weight * p;
        }
    }
    for point in &mut out {
        point.1 = point.1.clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Peak-to-trough amplitude of a population series.
pub fn contrast(values: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// One measurement: ensemble mean plus an additive `N(0, σ²)` readout draw.
pub fn ensemble_population<R: Rng + ?Sized>(
    b_nt: f64,
    seq: &PulseSequence,
    ensemble: &NoiseEnsemble,
    readout_noise: f64,
    dt: f64,
    rng: &mut R,
) -> Result<f64> {
    let mean = mean_population(b_nt, seq, ensemble, dt)?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(mean + readout_noise * z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurve {
    pub label: String,
    pub evolution_time_ns: f64,
    pub b_nt: Vec<f64>,
    pub p0: Vec<f64>,
    pub ensemble: EnsembleSize,
}

impl ResponseCurve {
    /// Linear interpolation of the curve at `b_nt` (clamped to the grid ends).
    pub fn interpolate(&self, b_nt: f64) -> f64 {
        let b = &self.b_nt;
        if b_nt <= b[0] {
            return self.p0[0];
        }
        let last = b.len() - 1;
        if b_nt >= b[last] {
            return self.p0[last];
        }
        let i = b.partition_point(|&x| x <= b_nt) - 1;
        let t = (b_nt - b[i]) / (b[i + 1] - b[i]);
        self.p0[i] + t * (self.p0[i + 1] - self.p0[i])
    }

    /// Peak-to-trough amplitude.
    pub fn contrast(&self) -> f64 {
        contrast(self.p0.iter().copied())
    }

    /// Index range `start..=end` of the first decreasing stretch: from the
    /// first local maximum down to the next local minimum. Noise shifts the
    /// fringe, so the maximum need not sit exactly at `B = 0`.
    pub fn first_branch(&self) -> (usize, usize) {
        let p = &self.p0;
        let mut start = 0;
        while start + 1 < p.len() && p[start + 1] >= p[start] {
            start += 1;
        }
        let mut end = start;
        while end + 1 < p.len() && p[end + 1] <= p[end] {
            end += 1;
        }
        (start, end)
    }
}

/// Evaluates the noiseless ensemble mean at every grid field.
pub fn response_curve(
    label: &str,
    seq: &PulseSequence,
    ensemble: &NoiseEnsemble,
    b_grid: &[f64],
    dt: f64,
) -> Result<ResponseCurve> {
    if b_grid.len() < 2 {
        return Err(Error::InvalidParameter("response curve needs at least two fields".into()));
    }
    if b_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("field grid must be strictly increasing".into()));
    }
    let p0 = b_grid
        .iter()
        .map(|&b| mean_population(b, seq, ensemble, dt))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResponseCurve {
        label: label.to_string(),
        evolution_time_ns: seq.total_time(),
        b_nt: b_grid.to_vec(),
        p0,
        ensemble: ensemble.size,
    })
}

/// `n` equally spaced fields on `[0, b_max]`.
pub fn field_grid(b_max: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| b_max * i as f64 / (n - 1) as f64).collect()
}

/// Field at which the ideal fringe `½[1 + cos(4γBt/π)]` first reaches zero.
pub fn ideal_branch_end(evolution_time_ns: f64) -> f64 {
    PI * PI / (4.0 * GAMMA * evolution_time_ns)
}

/// Analytic maximum slope `½ (4/π) γ t` of the ideal fringe, per nT.
pub fn ideal_max_slope(evolution_time_ns: f64) -> f64 {
    0.5 * 4.0 / PI * GAMMA * evolution_time_ns
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slope {
    pub b_star_nt: f64,
    /// `|∂P/∂B|` in 1/nT.
    pub k: f64,
}

/// Largest central-difference `|∂P/∂B|` on the first monotonic branch.
pub fn max_slope(curve: &ResponseCurve) -> Result<Slope> {
    if curve.b_nt.len() < 3 {
        return Err(Error::InvalidParameter("slope needs at least three points".into()));
    }
    let (start, end) = curve.first_branch();
    let (b, p) = (&curve.b_nt, &curve.p0);
    let mut best = Slope { b_star_nt: b[0], k: 0.0 };
    for i in start.max(1)..end.min(b.len() - 1) {
        let k = ((p[i + 1] - p[i - 1]) / (b[i + 1] - b[i - 1])).abs();
        if k > best.k {
            best = Slope { b_star_nt: b[i], k };
        }
    }
    if !(best.k > 0.0) {
        return Err(Error::Degenerate("response curve is flat".into()));
    }
    Ok(best)
}

/// `η = σ √T / k`, with `T` in seconds and `k` per nT; result in nT/√Hz.
pub fn sensitivity(readout_noise: f64, k: f64, measurement_time_s: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!("slope must be positive, got {k}")));
    }
    if !(measurement_time_s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "measurement time must be positive, got {measurement_time_s}"
        )));
    }
    Ok(readout_noise * measurement_time_s.sqrt() / k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub readout_noise: f64,
    pub k: f64,
    pub measurement_time_s: f64,
    pub eta_nt_per_sqrt_hz: f64,
    pub b_star_nt: f64,
}

impl SensitivityReport {
    pub fn from_curve(curve: &ResponseCurve, readout_noise: f64) -> Result<Self> {
        let slope = max_slope(curve)?;
        let t = curve.evolution_time_ns * 1e-9;
        Ok(Self {
            readout_noise,
            k: slope.k,
            measurement_time_s: t,
            eta_nt_per_sqrt_hz: sensitivity(readout_noise, slope.k, t)?,
            b_star_nt: slope.b_star_nt,
        })
    }
}

/// Working branch used to turn populations into fields.
///
/// Measured populations are first stretched from the characterized branch
/// extremes `[p_bottom, p_top]` onto `[0, 1]` and then run through the inverse
/// of the ideal fringe. The characterized fringe accumulates phase more slowly
/// than the ideal one, so the recovered field carries a systematic,
/// mostly multiplicative, underestimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingBranch {
    pub evolution_time_ns: f64,
    pub p_top: f64,
    pub p_bottom: f64,
}

impl WorkingBranch {
    pub fn ideal(evolution_time_ns: f64) -> Self {
        Self { evolution_time_ns, p_top: 1.0, p_bottom: 0.0 }
    }

    pub fn from_curve(curve: &ResponseCurve) -> Result<Self> {
        let (start, end) = curve.first_branch();
        if end == start {
            return Err(Error::Degenerate("response curve has no decreasing branch".into()));
        }
        let (p_top, p_bottom) = (curve.p0[start], curve.p0[end]);
        if !(p_top > p_bottom) {
            return Err(Error::Degenerate("response curve branch is flat".into()));
        }
        Ok(Self { evolution_time_ns: curve.evolution_time_ns, p_top, p_bottom })
    }

    pub fn b_end(&self) -> f64 {
        ideal_branch_end(self.evolution_time_ns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub b_nt: f64,
    /// The population fell outside the branch and was clamped.
    pub clamped: bool,
}

/// Field on the working branch that the ideal fringe maps to `p`.
pub fn field_from_population(p: f64, branch: &WorkingBranch) -> Result<Inversion> {
    if !p.is_finite() {
        return Err(Error::NonFinite("population"));
    }
    if !(branch.p_top > branch.p_bottom) || !(branch.evolution_time_ns > 0.0) {
        return Err(Error::Degenerate("empty working branch".into()));
    }
    let q = (p - branch.p_bottom) / (branch.p_top - branch.p_bottom);
    let clamped = !(0.0..=1.0).contains(&q);
    let q = q.clamp(0.0, 1.0);
    let phase = (2.0 * q - 1.0).acos();
    Ok(Inversion { b_nt: phase * PI / (4.0 * GAMMA * branch.evolution_time_ns), clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{build_xy8, ideal_population, PulseKind, DEFAULT_DT};

    #[test]
    fn gamma_value() {
        assert!((GAMMA - 1.7593e-7).abs() < 1e-11);
    }

    #[test]
    fn reported_sensitivities() {
        let rect = sensitivity(0.01, 0.00012, 1.28e-4).unwrap();
        let pm = sensitivity(0.01, 0.00025, 1.28e-4).unwrap();
        assert!((rect - 0.9428).abs() < 1e-4);
        assert!((pm - 0.4526).abs() < 1e-4);
        let half = sensitivity(0.01, 0.0005, 1.28e-4).unwrap();
        assert_eq!(half * 2.0, pm);
        assert!(sensitivity(0.01, 0.0, 1.0).is_err());
        assert!(sensitivity(0.01, -1.0, 1.0).is_err());
    }

    #[test]
    fn noiseless_measurement_at_zero_field() {
        let seq = build_xy8(2, 50.0, 950.0, PulseKind::Rectangular).unwrap();
        let ens = NoiseEnsemble::noiseless();
        let p = ensemble_population(0.0, &seq, &ens, 0.0, DEFAULT_DT, &mut stream_rng(0, 0)).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    fn ideal_curve(n: usize, points: usize) -> ResponseCurve {
        let seq = build_xy8(n, 50.0, 950.0, PulseKind::Ideal).unwrap();
        let t = seq.total_time();
        let grid = field_grid(1.2 * ideal_branch_end(t), points);
        response_curve("ideal", &seq, &NoiseEnsemble::noiseless(), &grid, DEFAULT_DT).unwrap()
    }

    #[test]
    fn ideal_curve_follows_closed_form() {
        let c = ideal_curve(16, 41);
        for (b, p) in c.b_nt.iter().zip(&c.p0) {
            assert!((p - ideal_population(GAMMA * b, c.evolution_time_ns)).abs() < 0.02);
        }
        assert_eq!(c.p0[0], c.p0[..=c.first_branch().1].iter().copied().fold(0.0, f64::max));
    }

    #[test]
    fn longer_sequence_halves_first_zero() {
        let c16 = ideal_curve(16, 241);
        let c32 = ideal_curve(32, 241);
        let zero = |c: &ResponseCurve| c.b_nt[c.first_branch().1];
        let ratio = zero(&c32) / zero(&c16);
        let cell = c16.b_nt[1] / zero(&c16);
        assert!((ratio - 0.5).abs() < 2.0 * cell, "{ratio}");
    }

    #[test]
    fn ideal_slope_matches_analytic() {
        let c = ideal_curve(16, 401);
        let s = max_slope(&c).unwrap();
        let expected = ideal_max_slope(c.evolution_time_ns);
        assert!((expected - 0.5 * (4.0 / PI) * 1.7593e-7 * 1.28e5).abs() < 1e-6);
        assert!((s.k / expected - 1.0).abs() < 0.01, "{} vs {expected}", s.k);
        // steepest point sits at the quarter phase, half way along the branch
        assert!((s.b_star_nt / ideal_branch_end(c.evolution_time_ns) - 0.5).abs() < 0.02);
    }

    #[test]
    fn flat_curve_has_no_slope() {
        let c = ResponseCurve {
            label: "flat".into(),
            evolution_time_ns: 1000.0,
            b_nt: vec![0.0, 1.0, 2.0, 3.0],
            p0: vec![0.5; 4],
            ensemble: EnsembleSize::new(1, 1),
        };
        assert!(max_slope(&c).is_err());
    }

    #[test]
    fn inversion_roundtrip() {
        let t = 128_000.0;
        let branch = WorkingBranch::ideal(t);
        for frac in [0.05, 0.3, 0.5, 0.77, 0.95] {
            let b = frac * branch.b_end();
            let p = ideal_population(GAMMA * b, t);
            let inv = field_from_population(p, &branch).unwrap();
            assert!((inv.b_nt - b).abs() < 1e-9 * branch.b_end());
            assert!(!inv.clamped);
        }
        let mid = field_from_population(0.5, &branch).unwrap();
        assert!((mid.b_nt - 0.5 * branch.b_end()).abs() < 1e-9);
        assert!(field_from_population(1.2, &branch).unwrap().clamped);
    }
}
