//! Static Gaussian detuning and Ornstein–Uhlenbeck dynamical noise.

use std::f64::consts::{LN_2, PI};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid spacing for pre-sampled OU trajectories (ns).
pub const DEFAULT_OU_GRID: f64 = 2.0;

/// `2π × 26.5 MHz` in rad/ns.
pub const DEFAULT_FWHM: f64 = 2.0 * PI * 26.5e-3;
/// OU correlation time (ns).
pub const DEFAULT_CORRELATION_TIME: f64 = 20_000.0;
/// Stationary OU standard deviation `√(cτ/2) = 2π × 50 kHz` in rad/ns.
pub const DEFAULT_OU_STD: f64 = 2.0 * PI * 50e-6;
/// Readout noise on the population.
pub const DEFAULT_READOUT_NOISE: f64 = 0.01;

/// `σ_g = W / (2√(2 ln 2))`.
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * LN_2).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// FWHM of the static detuning distribution (rad/ns).
    pub fwhm: f64,
    /// OU correlation time τ (ns).
    pub correlation_time: f64,
    /// OU diffusion constant c (rad²/ns³).
    pub diffusion: f64,
    /// Standard deviation of additive readout noise on P₀.
    pub readout_noise: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::with_ou_std(DEFAULT_FWHM, DEFAULT_CORRELATION_TIME, DEFAULT_OU_STD, DEFAULT_READOUT_NOISE)
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self { fwhm: 0.0, correlation_time: DEFAULT_CORRELATION_TIME, diffusion: 0.0, readout_noise: 0.0 }
    }

    /// Builds a config from the stationary OU std `√(cτ/2)` instead of `c`.
    pub fn with_ou_std(fwhm: f64, correlation_time: f64, ou_std: f64, readout_noise: f64) -> Self {
        let diffusion = if correlation_time > 0.0 { 2.0 * ou_std * ou_std / correlation_time } else { 0.0 };
        Self { fwhm, correlation_time, diffusion, readout_noise }
    }

    pub fn sigma_static(&self) -> f64 {
        fwhm_to_sigma(self.fwhm)
    }

    /// Stationary OU variance `cτ/2`.
    pub fn ou_variance(&self) -> f64 {
        0.5 * self.diffusion * self.correlation_time
    }

    pub fn ou_std(&self) -> f64 {
        self.ou_variance().sqrt()
    }

    pub fn has_dynamic_noise(&self) -> bool {
        self.diffusion > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.fwhm, self.correlation_time, self.diffusion, self.readout_noise];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("noise config"));
        }
        if fields.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter("noise parameters must be non-negative".into()));
        }
        if self.diffusion > 0.0 && self.correlation_time == 0.0 {
            return Err(Error::InvalidParameter("OU noise needs a positive correlation time".into()));
        }
        Ok(())
    }
}

/// OU trajectory on a uniform grid starting at `t = 0`, held constant between
/// grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct DetuningTrace {
    spacing: f64,
    values: Vec<f64>,
    /// `cumulative[i] = ∫_0^{i·spacing} δ_d dt`.
    cumulative: Vec<f64>,
}

impl DetuningTrace {
    pub fn new(spacing: f64, values: Vec<f64>) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidParameter(format!("trace spacing must be positive, got {spacing}")));
        }
        if values.is_empty() {
            return Err(Error::InvalidParameter("trace needs at least one value".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("detuning trace"));
        }
        let mut cumulative = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        for v in &values {
            cumulative.push(acc);
            acc += v * spacing;
        }
        Ok(Self { spacing, values, cumulative })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn duration(&self) -> f64 {
        self.spacing * self.values.len().saturating_sub(1) as f64
    }

    #[inline]
    fn index(&self, t: f64) -> usize {
        ((t / self.spacing).floor().max(0.0) as usize).min(self.values.len() - 1)
    }

    /// Zero-order hold: the value at the last grid point not after `t`.
    #[inline]
    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.index(t)]
    }

    /// `∫_0^t δ_d dt'` of the held trace.
    #[inline]
    pub fn integral_to(&self, t: f64) -> f64 {
        let i = self.index(t);
        self.cumulative[i] + (t - i as f64 * self.spacing) * self.values[i]
    }
}

/// One noise draw: a static detuning plus an optional OU trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseRealization {
    pub static_detuning: f64,
    pub trace: Option<Arc<DetuningTrace>>,
    /// (master seed, stream index) the realization was drawn from, if any.
    pub provenance: Option<(u64, u64)>,
}

impl NoiseRealization {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn static_only(detuning: f64) -> Self {
        Self { static_detuning: detuning, ..Self::default() }
    }
}

/// Independent RNG stream `index` under `master` seed.
pub fn stream_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

pub fn sample_static_detuning<R: Rng + ?Sized>(cfg: &NoiseConfig, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    cfg.sigma_static() * z
}

/// Exact OU update over `dt`.
pub fn ou_step<R: Rng + ?Sized>(value: f64, dt: f64, cfg: &NoiseConfig, rng: &mut R) -> Result<f64> {
    if cfg.correlation_time <= 0.0 {
        return Err(Error::InvalidParameter("OU correlation time must be positive".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("OU step must be positive, got {dt}")));
    }
    let decay = (-dt / cfg.correlation_time).exp();
    let z: f64 = rng.sample(StandardNormal);
    Ok(value * decay + (cfg.ou_variance() * (1.0 - decay * decay)).sqrt() * z)
}

/// OU trajectory of `⌈duration/grid_dt⌉ + 1` points, started from the
/// stationary distribution.
pub fn ou_trajectory<R: Rng + ?Sized>(
    duration: f64,
    grid_dt: f64,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> Result<DetuningTrace> {
    if !(grid_dt > 0.0) || !grid_dt.is_finite() {
        return Err(Error::InvalidParameter(format!("grid spacing must be positive, got {grid_dt}")));
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::InvalidParameter(format!("duration must be non-negative, got {duration}")));
    }
    let steps = (duration / grid_dt - 1e-9).ceil().max(0.0) as usize;
    let mut values = Vec::with_capacity(steps + 1);
    if !cfg.has_dynamic_noise() {
        values.resize(steps + 1, 0.0);
        return DetuningTrace::new(grid_dt, values);
    }
    if cfg.correlation_time <= 0.0 {
        return Err(Error::InvalidParameter("OU correlation time must be positive".into()));
    }
    let std = cfg.ou_std();
    let decay = (-grid_dt / cfg.correlation_time).exp();
    let kick = std * (1.0 - decay * decay).sqrt();
    let z: f64 = rng.sample(StandardNormal);
    let mut x = std * z;
    values.push(x);
    for _ in 0..steps {
        let z: f64 = rng.sample(StandardNormal);
        x = x * decay + kick * z;
        values.push(x);
    }
    DetuningTrace::new(grid_dt, values)
}

/// Draws a full realization covering `duration` ns from stream `index`.
pub fn realization(cfg: &NoiseConfig, duration: f64, master: u64, index: u64) -> Result<NoiseRealization> {
    cfg.validate()?;
    let mut rng = stream_rng(master, index);
    let static_detuning = sample_static_detuning(cfg, &mut rng);
    let trace = if cfg.has_dynamic_noise() {
        Some(Arc::new(ou_trajectory(duration, DEFAULT_OU_GRID, cfg, &mut rng)?))
    } else {
        None
    };
    Ok(NoiseRealization { static_detuning, trace, provenance: Some((master, index)) })
}

/// `m` equally spaced detunings on `[−W, W]` with normalized Gaussian weights.
pub fn detuning_grid(m: usize, fwhm: f64) -> Result<Vec<(f64, f64)>> {
    if m == 0 {
        return Err(Error::InvalidParameter("detuning grid needs at least one point".into()));
    }
    if !(fwhm >= 0.0) || !fwhm.is_finite() {
        return Err(Error::InvalidParameter(format!("FWHM must be non-negative, got {fwhm}")));
    }
    if m == 1 {
        return Ok(vec![(0.0, 1.0)]);
    }
    let step = 2.0 * fwhm / (m - 1) as f64;
    let half = (m - 1) as f64 / 2.0;
    // built symmetrically about the centre so mirrored weights are bit-equal
    let nodes: Vec<f64> = (0..m).map(|k| (k as f64 - half) * step).collect();
    if fwhm == 0.0 {
        return Ok(nodes.into_iter().map(|d| (d, 1.0 / m as f64)).collect());
    }
    let sigma = fwhm_to_sigma(fwhm);
    let raw: Vec<f64> = nodes.iter().map(|d| (-0.5 * (d / sigma).powi(2)).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(nodes.into_iter().zip(raw).map(|(d, w)| (d, w / total)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_from_fwhm() {
        assert!((DEFAULT_FWHM - 0.16650).abs() < 1e-5);
        assert!((fwhm_to_sigma(DEFAULT_FWHM) - 0.070702).abs() < 1e-5);
    }

    #[test]
    fn default_ou_std() {
        let cfg = NoiseConfig::default();
        assert!((cfg.ou_std() - 3.1416e-4).abs() < 1e-8);
    }

    #[test]
    fn zero_width_gives_zero_detuning() {
        let cfg = NoiseConfig::noiseless();
        let mut rng = stream_rng(1, 0);
        for _ in 0..10 {
            assert_eq!(sample_static_detuning(&cfg, &mut rng), 0.0);
        }
    }

    #[test]
    fn sample_fwhm_matches() {
        let cfg = NoiseConfig::default();
        let mut rng = stream_rng(7, 0);
        let mut draws: Vec<f64> = (0..100_000).map(|_| sample_static_detuning(&cfg, &mut rng)).collect();
        draws.sort_by(f64::total_cmp);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        let fwhm = 2.0 * (2.0 * LN_2).sqrt() * var.sqrt();
        assert!((fwhm / cfg.fwhm - 1.0).abs() < 0.03);
        // half-maximum points of the density sit at the 0.1195 / 0.8805 quantiles
        let lo = draws[(0.11950 * n) as usize];
        let hi = draws[(0.88050 * n) as usize];
        assert!(((hi - lo) / cfg.fwhm - 1.0).abs() < 0.03);
    }

    #[test]
    fn ou_step_limits() {
        let cfg = NoiseConfig::default();
        let mut rng = stream_rng(3, 0);
        let x = 1e-3;
        let y = ou_step(x, 1e-9, &cfg, &mut rng).unwrap();
        assert!((y - x).abs() < 1e-9);
        let mut rng = stream_rng(3, 1);
        let draws: Vec<f64> = (0..20_000).map(|_| ou_step(1.0, 1e9, &cfg, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 1e-5);
        assert!((var / cfg.ou_variance() - 1.0).abs() < 0.05);
    }

    #[test]
    fn ou_step_rejects_zero_tau() {
        let cfg = NoiseConfig { correlation_time: 0.0, ..NoiseConfig::default() };
        assert!(ou_step(0.0, 1.0, &cfg, &mut stream_rng(0, 0)).is_err());
        assert!(ou_step(0.0, 0.0, &NoiseConfig::default(), &mut stream_rng(0, 0)).is_err());
    }

    #[test]
    fn trajectory_length() {
        let cfg = NoiseConfig::default();
        let tr = ou_trajectory(400_000.0, 2.0, &cfg, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(tr.values().len(), 200_001);
        assert!((tr.duration() - 400_000.0).abs() < 1e-9);
        let tr = ou_trajectory(5.0, 2.0, &cfg, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(tr.values().len(), 4);
    }

    #[test]
    fn held_trace_integral() {
        let tr = DetuningTrace::new(2.0, vec![1.0, -3.0, 0.5]).unwrap();
        assert_eq!(tr.integral_to(0.0), 0.0);
        assert_eq!(tr.integral_to(1.0), 1.0);
        assert_eq!(tr.integral_to(3.0), 2.0 - 3.0);
        assert_eq!(tr.integral_to(4.0), 2.0 - 6.0);
        assert_eq!(tr.integral_to(5.0), 2.0 - 6.0 + 0.5);
        assert_eq!(tr.value_at(3.9), -3.0);
        assert!(DetuningTrace::new(0.0, vec![1.0]).is_err());
    }

    #[test]
    fn zero_diffusion_is_flat() {
        let cfg = NoiseConfig { diffusion: 0.0, ..NoiseConfig::default() };
        let tr = ou_trajectory(1000.0, 2.0, &cfg, &mut stream_rng(0, 0)).unwrap();
        assert!(tr.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trajectory_statistics() {
        // dt = τ/100 so lag τ is 100 steps
        let cfg = NoiseConfig::with_ou_std(0.0, 100.0, 1.0, 0.0);
        let tr = ou_trajectory(1e6, 1.0, &cfg, &mut stream_rng(11, 0)).unwrap();
        let v = tr.values();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 0.05, "{var}");
        let lag = 100;
        let cov = v.windows(lag + 1).map(|w| (w[0] - mean) * (w[lag] - mean)).sum::<f64>()
            / (v.len() - lag) as f64;
        let rho = cov / var;
        assert!((rho / (-1.0f64).exp() - 1.0).abs() < 0.1, "{rho}");
    }

    #[test]
    fn identical_seeds_identical_realizations() {
        let cfg = NoiseConfig::default();
        let a = realization(&cfg, 10_000.0, 42, 5).unwrap();
        let b = realization(&cfg, 10_000.0, 42, 5).unwrap();
        assert_eq!(a, b);
        let c = realization(&cfg, 10_000.0, 42, 6).unwrap();
        assert_ne!(a.static_detuning, c.static_detuning);
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(detuning_grid(1, DEFAULT_FWHM).unwrap(), vec![(0.0, 1.0)]);
        let g = detuning_grid(15, DEFAULT_FWHM).unwrap();
        assert_eq!(g.len(), 15);
        assert!((g[1].0 - g[0].0 - 2.0 * DEFAULT_FWHM / 14.0).abs() < 1e-15);
        assert!((g[0].0 + DEFAULT_FWHM).abs() < 1e-15);
        assert!((g[14].0 - DEFAULT_FWHM).abs() < 1e-15);
        assert_eq!(g[7].0, 0.0);
        for k in 0..15 {
            assert_eq!(g[k].1, g[14 - k].1);
        }
        let total: f64 = g.iter().map(|p| p.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(detuning_grid(0, 1.0).is_err());
    }
}
