//! Phase-modulated π pulses, gate fidelity and robustness optimization.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::stream_rng;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::spin::{propagate, AcField, Drive, HamiltonianTrack, Segment, Unitary2};

/// Upper bound on the summed PM amplitude, `2π × 10 MHz` rounded as `0.0628` rad/ns.
pub const MAX_TOTAL_AMPLITUDE: f64 = 0.0628;

/// Adopted single-term parameter set.
pub const DEFAULT_PM_A: f64 = 0.0628;
pub const DEFAULT_PM_B: f64 = 0.0830;
pub const DEFAULT_PM_NU: f64 = 0.0316;
/// Duration of the phase-modulated π pulse (ns).
pub const DEFAULT_PM_DURATION: f64 = 100.0;
/// Duration of the rectangular π pulse (ns).
pub const DEFAULT_RECT_DURATION: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmTerm {
    pub a: f64,
    pub b: f64,
    pub nu: f64,
}

/// Phase-modulated waveform `Σ_j (a_j/2)[cos θ_j σx + sin θ_j σy]`,
/// `θ_j(t) = (b_j/ν_j) sin(ν_j t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PmParams {
    pub terms: Vec<PmTerm>,
    /// Pulse length (ns).
    pub duration: f64,
}

impl Default for PmParams {
    fn default() -> Self {
        Self::single(DEFAULT_PM_A, DEFAULT_PM_B, DEFAULT_PM_NU, DEFAULT_PM_DURATION)
    }
}

#[derive(Serialize, Deserialize)]
struct SingleTermJson {
    a: f64,
    b: f64,
    nu: f64,
    t_pulse_ns: f64,
}

#[derive(Serialize, Deserialize)]
struct MultiTermJson {
    terms: Vec<PmTerm>,
    t_pulse_ns: f64,
}

impl PmParams {
    pub fn single(a: f64, b: f64, nu: f64, duration: f64) -> Self {
        Self { terms: vec![PmTerm { a, b, nu }], duration }
    }

    pub fn total_amplitude(&self) -> f64 {
        self.terms.iter().map(|t| t.a).sum()
    }

    pub fn satisfies_amplitude_bound(&self) -> bool {
        self.total_amplitude() <= MAX_TOTAL_AMPLITUDE + 1e-12
    }

    /// Structural validity: finite values, at least one term, `ν_j ≠ 0`,
    /// positive duration. The amplitude bound is checked separately.
    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidParameter("PM waveform needs at least one term".into()));
        }
        if !self.duration.is_finite()
            || self.terms.iter().any(|t| !(t.a.is_finite() && t.b.is_finite() && t.nu.is_finite()))
        {
            return Err(Error::NonFinite("PM parameters"));
        }
        if self.duration <= 0.0 {
            return Err(Error::InvalidParameter("PM pulse duration must be positive".into()));
        }
        if self.terms.iter().any(|t| t.nu == 0.0) {
            return Err(Error::InvalidParameter("PM modulation frequency ν must be non-zero".into()));
        }
        Ok(())
    }

    /// σx and σy coefficients at `t`; assumes [`Self::validate`] passed.
    #[inline]
    pub(crate) fn coefficients(&self, t: f64) -> (f64, f64) {
        let mut cx = 0.0;
        let mut cy = 0.0;
        for term in &self.terms {
            let theta = term.b / term.nu * (term.nu * t).sin();
            let (s, c) = theta.sin_cos();
            cx += 0.5 * term.a * c;
            cy += 0.5 * term.a * s;
        }
        (cx, cy)
    }

    fn to_vec(&self) -> Vec<f64> {
        self.terms.iter().flat_map(|t| [t.a, t.b, t.nu]).collect()
    }

    fn from_vec(v: &[f64], duration: f64) -> Self {
        let terms = v.chunks_exact(3).map(|c| PmTerm { a: c[0], b: c[1], nu: c[2] }).collect();
        Self { terms, duration }
    }

    /// JSON document. Single-term sets use the flat `{a, b, nu, t_pulse_ns}` form.
    pub fn to_json(&self) -> String {
        let text = if let [t] = self.terms.as_slice() {
            serde_json::to_string_pretty(&SingleTermJson { a: t.a, b: t.b, nu: t.nu, t_pulse_ns: self.duration })
        } else {
            serde_json::to_string_pretty(&MultiTermJson { terms: self.terms.clone(), t_pulse_ns: self.duration })
        };
        text.expect("plain numeric struct always serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params = if let Ok(s) = serde_json::from_str::<SingleTermJson>(text) {
            Self::single(s.a, s.b, s.nu, s.t_pulse_ns)
        } else {
            let m: MultiTermJson =
                serde_json::from_str(text).map_err(|e| Error::Parse(format!("PM parameters: {e}")))?;
            Self { terms: m.terms, duration: m.t_pulse_ns }
        };
        params.validate()?;
        Ok(params)
    }
}

/// Hamiltonian σx, σy coefficients of the π_x PM waveform at `t` (half the Rabi frequencies).
pub fn pm_waveform(params: &PmParams, t: f64) -> Result<(f64, f64)> {
    params.validate()?;
    if !(0.0..=params.duration).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "t = {t} ns outside the pulse [0, {}]",
            params.duration
        )));
    }
    Ok(params.coefficients(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateTarget {
    X,
    Y,
}

impl GateTarget {
    pub fn axis_phase(self) -> f64 {
        match self {
            GateTarget::X => 0.0,
            GateTarget::Y => FRAC_PI_2,
        }
    }

    pub fn pauli(self) -> Unitary2 {
        match self {
            GateTarget::X => Unitary2::pauli_x(),
            GateTarget::Y => Unitary2::pauli_y(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    /// Constant drive of Rabi frequency `π / duration`.
    Rectangular { duration: f64 },
    PhaseModulated(PmParams),
}

impl Waveform {
    pub fn duration(&self) -> f64 {
        match self {
            Waveform::Rectangular { duration } => *duration,
            Waveform::PhaseModulated(p) => p.duration,
        }
    }
}

/// A π gate: target axis plus the waveform realizing it. The π_y version of a
/// waveform is the π_x one with its drive vector turned by π/2.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSpec {
    pub target: GateTarget,
    pub waveform: Waveform,
}

impl GateSpec {
    pub fn new(target: GateTarget, waveform: Waveform) -> Self {
        Self { target, waveform }
    }

    fn drive(&self) -> Result<Drive> {
        let phase = self.target.axis_phase();
        Ok(match &self.waveform {
            Waveform::Rectangular { duration } => {
                if !(*duration > 0.0) || !duration.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "rectangular pulse duration must be positive, got {duration}"
                    )));
                }
                let rabi = PI / duration;
                let (s, c) = phase.sin_cos();
                Drive::Constant { rabi_x: rabi * c, rabi_y: rabi * s }
            }
            Waveform::PhaseModulated(p) => {
                p.validate()?;
                Drive::PhaseModulated { params: Arc::new(p.clone()), axis_phase: phase }
            }
        })
    }
}

fn sigma_half() -> [Unitary2; 3] {
    [Unitary2::pauli_x(), Unitary2::pauli_y(), Unitary2::pauli_z()].map(|p| p.scale(Complex64::new(0.5, 0.0)))
}

/// Average gate fidelity
/// `½ + ⅓ Σ_κ Tr[U_tar (σκ/2) U_tar† · U (σκ/2) U†]`.
pub fn gate_fidelity(actual: &Unitary2, target: &Unitary2) -> Result<f64> {
    for u in [actual, target] {
        if !u.is_finite() {
            return Err(Error::NonFinite("gate"));
        }
        let err = u.unitarity_error();
        if err > 1e-6 {
            return Err(Error::NotUnitary(err));
        }
    }
    let (ta, aa) = (target.adjoint(), actual.adjoint());
    let sum: f64 = sigma_half()
        .iter()
        .map(|s| (*target * *s * ta * *actual * *s * aa).trace().re)
        .sum();
    Ok((0.5 + sum / 3.0).clamp(0.0, 1.0))
}

/// Propagator of the gate waveform under a constant detuning `δ`.
pub fn gate_under_detuning(spec: &GateSpec, detuning: f64, dt: f64) -> Result<Unitary2> {
    if !detuning.is_finite() {
        return Err(Error::NonFinite("detuning"));
    }
    let mut track = HamiltonianTrack::new();
    track.push_segment(Segment {
        length: spec.waveform.duration(),
        detuning,
        drive: spec.drive()?,
        ac: AcField::default(),
    });
    propagate(&track, dt)
}

/// Per-detuning fidelities of `spec` against its Pauli target.
pub fn fidelity_profile(spec: &GateSpec, grid: &[(f64, f64)], dt: f64) -> Result<Vec<f64>> {
    let target = spec.target.pauli();
    grid.iter()
        .map(|&(d, _)| gate_fidelity(&gate_under_detuning(spec, d, dt)?, &target))
        .collect()
}

/// Weighted mean fidelity over the detuning grid.
pub fn ensemble_objective(spec: &GateSpec, grid: &[(f64, f64)], dt: f64) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty detuning grid".into()));
    }
    let f = fidelity_profile(spec, grid, dt)?;
    Ok(grid.iter().zip(f).map(|(&(_, w), f)| w * f).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub params: PmParams,
    pub objective: f64,
    pub initial_objective: f64,
    pub evaluations: usize,
    /// Set when no candidate beat the initial parameters, which are returned unchanged.
    pub no_improvement: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    pub budget: usize,
    pub restarts: usize,
    /// Relative jitter applied to the initial point of every restart after the first.
    pub jitter: f64,
    pub penalty: f64,
    pub dt: f64,
    pub seed: u64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { budget: 600, restarts: 5, jitter: 0.1, penalty: 1e4, dt: 0.5, seed: 0 }
    }
}

fn project(v: &[f64]) -> Vec<f64> {
    let mut p = v.to_vec();
    for a in p.iter_mut().step_by(3) {
        *a = a.max(0.0);
    }
    let total: f64 = p.iter().step_by(3).sum();
    if total > MAX_TOTAL_AMPLITUDE {
        let scale = MAX_TOTAL_AMPLITUDE / total;
        for a in p.iter_mut().step_by(3) {
            *a *= scale;
        }
    }
    p
}

/// Maximizes [`ensemble_objective`] of the π_x gate over all PM parameters,
/// keeping the pulse duration fixed.
///
/// Candidates are projected onto `a_j ≥ 0, Σ a_j ≤` [`MAX_TOTAL_AMPLITUDE`]
/// before evaluation and the raw violation is penalized quadratically, so the
/// search is steered back inside while every returned set is feasible.
pub fn optimize_pm(initial: &PmParams, grid: &[(f64, f64)], opts: OptimizeOptions) -> Result<OptimizeOutcome> {
    initial.validate()?;
    if !initial.satisfies_amplitude_bound() {
        return Err(Error::InvalidParameter(format!(
            "initial amplitude {} exceeds {MAX_TOTAL_AMPLITUDE}",
            initial.total_amplitude()
        )));
    }
    let spec_of = |p: PmParams| GateSpec::new(GateTarget::X, Waveform::PhaseModulated(p));
    let initial_objective = ensemble_objective(&spec_of(initial.clone()), grid, opts.dt)?;
    let duration = initial.duration;

    let mut evaluations = 0usize;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let restarts = opts.restarts.max(1);
    let per_restart = opts.budget / restarts;
    let mut extra = opts.budget % restarts;
    let mut rng = stream_rng(opts.seed, 0);
    let x0 = initial.to_vec();

    for r in 0..restarts {
        let mut budget = per_restart;
        if extra > 0 {
            budget += 1;
            extra -= 1;
        }
        let start: Vec<f64> = if r == 0 {
            x0.clone()
        } else {
            project(
                &x0.iter()
                    .map(|v| v * (1.0 + opts.jitter * rng.gen_range(-1.0..=1.0)))
                    .collect::<Vec<_>>(),
            )
        };
        if budget == 0 {
            continue;
        }
        let step: Vec<f64> = start.iter().map(|v| 0.1 * v.abs().max(1e-3)).collect();
        let cost = |x: &[f64]| {
            let feasible = project(x);
            let violation: f64 = x.iter().zip(&feasible).map(|(a, b)| (a - b).powi(2)).sum();
            let params = PmParams::from_vec(&feasible, duration);
            if params.validate().is_err() {
                return f64::INFINITY;
            }
            match ensemble_objective(&spec_of(params), grid, opts.dt) {
                Ok(f) => -f + opts.penalty * violation,
                Err(_) => f64::INFINITY,
            }
        };
        let m = nelder_mead(
            cost,
            &start,
            &step,
            None,
            NelderMeadOptions { max_evaluations: budget, f_tol: 1e-12, x_tol: 1e-10 },
        );
        evaluations += m.evaluations;
        let x = project(&m.x);
        let params = PmParams::from_vec(&x, duration);
        if params.validate().is_err() {
            continue;
        }
        let value = ensemble_objective(&spec_of(params), grid, opts.dt)?;
        if best.as_ref().is_none_or(|b| value > b.1) {
            best = Some((x, value));
        }
    }

    match best {
        Some((x, value)) if value > initial_objective => Ok(OptimizeOutcome {
            params: PmParams::from_vec(&x, duration),
            objective: value,
            initial_objective,
            evaluations,
            no_improvement: false,
        }),
        _ => Ok(OptimizeOutcome {
            params: initial.clone(),
            objective: initial_objective,
            initial_objective,
            evaluations,
            no_improvement: true,
        }),
    }
}
