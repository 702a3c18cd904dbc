//! Two-level spin dynamics under piecewise control, and XY-8 sequence construction.
//!
//! The Hamiltonian convention throughout is
//!
//! ```text
//! H(t) = (δ(t)/2) σz + g cos(ω t + φ) σz + (Ωx(t)/2) σx + (Ωy(t)/2) σy
//! ```
//!
//! with every frequency in rad/ns and time in ns. `Ωx`, `Ωy` are Rabi
//! frequencies, so a constant `Ω` held for `π/Ω` ns is a π rotation. The
//! phase-modulated waveform helper [`crate::pulse::pm_waveform`] returns the
//! σ coefficients (half the Rabi frequency); tracks store twice that value.

mod unitary;

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{DetuningTrace, NoiseRealization};
use crate::pulse::PmParams;

pub use unitary::Unitary2;

/// Default integrator step inside driven segments (ns).
pub const DEFAULT_DT: f64 = 0.5;

/// XY-8 axis pattern: X Y X Y Y X Y X.
pub const XY8_PHASES: [f64; 8] = [0.0, FRAC_PI_2, 0.0, FRAC_PI_2, FRAC_PI_2, 0.0, FRAC_PI_2, 0.0];

/// Longitudinal ac signal `g cos(ω t + φ) σz`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AcField {
    pub amplitude: f64,
    pub angular_frequency: f64,
    pub phase: f64,
}

impl AcField {
    pub fn new(amplitude: f64, angular_frequency: f64) -> Self {
        Self { amplitude, angular_frequency, phase: 0.0 }
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * (self.angular_frequency * t + self.phase).cos()
    }

    /// `∫_{t0}^{t1} g cos(ω t + φ) dt`.
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let w = self.angular_frequency;
        if w == 0.0 {
            return self.amplitude * self.phase.cos() * (t1 - t0);
        }
        self.amplitude * ((w * t1 + self.phase).sin() - (w * t0 + self.phase).sin()) / w
    }

    fn is_finite(&self) -> bool {
        self.amplitude.is_finite() && self.angular_frequency.is_finite() && self.phase.is_finite()
    }
}

/// Transverse drive applied during a segment.
#[derive(Debug, Clone, PartialEq)]
pub enum Drive {
    Free,
    /// Constant Rabi frequencies along x and y.
    Constant { rabi_x: f64, rabi_y: f64 },
    /// Phase-modulated waveform, rotated in the xy plane by `axis_phase`.
    PhaseModulated { params: Arc<PmParams>, axis_phase: f64 },
}

impl Drive {
    /// Rabi frequencies at time `local_t` after the segment start.
    #[cfg(test)]
    pub(crate) fn rabi_at(&self, local_t: f64) -> (f64, f64) {
        match self {
            Drive::Free => (0.0, 0.0),
            Drive::Constant { rabi_x, rabi_y } => (*rabi_x, *rabi_y),
            Drive::PhaseModulated { params, axis_phase } => {
                let (cx, cy) = params.coefficients(local_t);
                let (s, c) = axis_phase.sin_cos();
                (2.0 * (c * cx - s * cy), 2.0 * (s * cx + c * cy))
            }
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Drive::Free => true,
            Drive::Constant { rabi_x, rabi_y } => rabi_x.is_finite() && rabi_y.is_finite(),
            Drive::PhaseModulated { params, axis_phase } => {
                axis_phase.is_finite() && params.validate().is_ok()
            }
        }
    }
}

/// A stretch of time with constant static detuning and a fixed drive law.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub length: f64,
    pub detuning: f64,
    pub drive: Drive,
    pub ac: AcField,
}

/// Element of a [`HamiltonianTrack`].
#[derive(Debug, Clone, PartialEq)]
pub enum TrackItem {
    Evolve(Segment),
    /// Instantaneous rotation, taking no time.
    Kick { angle: f64, axis_phase: f64 },
}

/// Piecewise description of `H(t)` over a finite window starting at `t = 0`.
#[derive(Debug, Clone, Default)]
pub struct HamiltonianTrack {
    pub items: Vec<TrackItem>,
    /// Time-dependent detuning added to every segment's static detuning.
    pub dynamic_detuning: Option<Arc<DetuningTrace>>,
}

impl HamiltonianTrack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_segment(&mut self, segment: Segment) -> &mut Self {
        self.items.push(TrackItem::Evolve(segment));
        self
    }

    pub fn push_kick(&mut self, angle: f64, axis_phase: f64) -> &mut Self {
        self.items.push(TrackItem::Kick { angle, axis_phase });
        self
    }

    pub fn duration(&self) -> f64 {
        self.items
            .iter()
            .map(|item| match item {
                TrackItem::Evolve(s) => s.length,
                TrackItem::Kick { .. } => 0.0,
            })
            .sum()
    }

    fn segments(&self) -> impl Iterator<Item = &Segment> {
        self.items.iter().filter_map(|item| match item {
            TrackItem::Evolve(s) => Some(s),
            TrackItem::Kick { .. } => None,
        })
    }

    fn validate(&self) -> Result<()> {
        for item in &self.items {
            match item {
                TrackItem::Evolve(s) => {
                    if !(s.length > 0.0) || !s.length.is_finite() {
                        return Err(Error::InvalidParameter(format!(
                            "segment length must be positive, got {}",
                            s.length
                        )));
                    }
                    if !s.detuning.is_finite() || !s.ac.is_finite() || !s.drive.is_finite() {
                        return Err(Error::NonFinite("hamiltonian segment"));
                    }
                }
                TrackItem::Kick { angle, axis_phase } => {
                    if !angle.is_finite() || !axis_phase.is_finite() {
                        return Err(Error::NonFinite("kick"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn validate_dt(dt: f64) -> Result<()> {
    if !dt.is_finite() {
        return Err(Error::NonFinite("step size"));
    }
    if dt <= 0.0 {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {dt}")));
    }
    Ok(())
}

/// Time-ordered propagator of `track`.
///
/// Driven segments are cut into equal steps no longer than `dt`, with the
/// Hamiltonian frozen at every step midpoint. Free segments are diagonal, so
/// their steps commute and collapse into a single phase; the ac term and the
/// held noise trace are integrated exactly there. `dt` must not exceed the
/// shortest segment.
pub fn propagate(track: &HamiltonianTrack, dt: f64) -> Result<Unitary2> {
    validate_dt(dt)?;
    if let Some(shortest) = track.segments().map(|s| s.length).reduce(f64::min) {
        if dt > shortest * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "dt = {dt} exceeds the shortest segment ({shortest} ns)"
            )));
        }
    }
    let mut out = Unitary2::identity();
    propagate_checkpoints(track, dt, &[], |_, u| out = u)?;
    Ok(out)
}

/// Propagates `track` and reports the running propagator after each item index
/// listed in `checkpoints` (sorted), plus once more at the end.
pub(crate) fn propagate_checkpoints(
    track: &HamiltonianTrack,
    dt: f64,
    checkpoints: &[usize],
    mut report: impl FnMut(Option<usize>, Unitary2),
) -> Result<()> {
    validate_dt(dt)?;
    track.validate()?;
    let trace = track.dynamic_detuning.as_deref();
    let mut u = Unitary2::identity();
    let mut t = 0.0;
    let mut next_check = checkpoints.iter().peekable();
    let mut cache = WaveformCache::default();
    for (index, item) in track.items.iter().enumerate() {
        match item {
            TrackItem::Kick { angle, axis_phase } => {
                u = Unitary2::rotation(*angle, *axis_phase) * u;
            }
            TrackItem::Evolve(seg) => {
                let step = segment_propagator(seg, t, trace, dt, &mut cache);
                u = step * u;
                t += seg.length;
            }
        }
        while next_check.peek().is_some_and(|&&c| c == index) {
            next_check.next();
            report(Some(index), u);
        }
    }
    report(None, u);
    Ok(())
}

/// Sampled phase-modulated waveform, reused across the identical pulses of a sequence.
#[derive(Default)]
struct WaveformCache {
    key: Option<(*const PmParams, usize)>,
    coefficients: Vec<(f64, f64)>,
}

impl WaveformCache {
    fn table(&mut self, params: &Arc<PmParams>, n: usize, h: f64) -> &[(f64, f64)] {
        let key = (Arc::as_ptr(params), n);
        if self.key != Some(key) {
            self.coefficients.clear();
            self.coefficients.extend((0..n).map(|k| params.coefficients((k as f64 + 0.5) * h)));
            self.key = Some(key);
        }
        &self.coefficients
    }
}

fn segment_propagator(
    seg: &Segment,
    t0: f64,
    trace: Option<&DetuningTrace>,
    dt: f64,
    cache: &mut WaveformCache,
) -> Unitary2 {
    if matches!(seg.drive, Drive::Free) {
        let mut phase = 0.5 * seg.detuning * seg.length + seg.ac.integral(t0, t0 + seg.length);
        if let Some(trace) = trace {
            phase += 0.5 * (trace.integral_to(t0 + seg.length) - trace.integral_to(t0));
        }
        return Unitary2::z_phase(phase);
    }

    let n = ((seg.length / dt) - 1e-9).ceil().max(1.0) as usize;
    let h = seg.length / n as f64;

    // cos(ω t_k + φ) at the step midpoints by angle addition
    let (mut s_ac, mut c_ac) = (seg.ac.angular_frequency * (t0 + 0.5 * h) + seg.ac.phase).sin_cos();
    let (s_step, c_step) = (seg.ac.angular_frequency * h).sin_cos();
    let (s_axis, c_axis) = match &seg.drive {
        Drive::PhaseModulated { axis_phase, .. } => axis_phase.sin_cos(),
        _ => (0.0, 1.0),
    };
    let half_rabi = |k: usize, cache: &mut WaveformCache| -> (f64, f64) {
        match &seg.drive {
            Drive::Free => (0.0, 0.0),
            Drive::Constant { rabi_x, rabi_y } => (0.5 * rabi_x, 0.5 * rabi_y),
            Drive::PhaseModulated { params, .. } => {
                let (cx, cy) = cache.table(params, n, h)[k];
                (c_axis * cx - s_axis * cy, s_axis * cx + c_axis * cy)
            }
        }
    };

    let mut u = Unitary2::identity();
    for k in 0..n {
        let tm = t0 + (k as f64 + 0.5) * h;
        let mut hz = 0.5 * seg.detuning + seg.ac.amplitude * c_ac;
        if let Some(trace) = trace {
            hz += 0.5 * trace.value_at(tm);
        }
        let (hx, hy) = half_rabi(k, cache);
        u = Unitary2::exp_su2(hx, hy, hz, h) * u;
        (s_ac, c_ac) = (s_ac * c_step + c_ac * s_step, c_ac * c_step - s_ac * s_step);
    }
    u
}

/// Pulse waveform used for every π pulse of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum PulseKind {
    /// Instantaneous π rotations at the pulse centres.
    Ideal,
    /// Constant drive with Rabi frequency `π / T_pulse`.
    Rectangular,
    /// Phase-modulated waveform; its duration must equal `T_pulse`.
    PhaseModulated(PmParams),
}

/// One π pulse of a sequence together with the free evolution around it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSlot {
    pub axis_phase: f64,
    pub gap_before: f64,
    pub duration: f64,
    pub gap_after: f64,
}

/// A dynamical-decoupling sequence of π pulses.
#[derive(Debug, Clone)]
pub struct PulseSequence {
    pub kind: PulseKind,
    pub repetitions: usize,
    pub pulse_duration: f64,
    pub interval: f64,
    pub slots: Vec<PulseSlot>,
    pm: Option<Arc<PmParams>>,
}

impl PulseSequence {
    pub fn total_time(&self) -> f64 {
        self.slots.iter().map(|s| s.gap_before + s.duration + s.gap_after).sum()
    }

    pub fn pulse_count(&self) -> usize {
        self.slots.len()
    }

    /// Spacing between consecutive pulse centres.
    pub fn pulse_spacing(&self) -> f64 {
        self.pulse_duration + self.interval
    }

    /// Signal angular frequency whose zero crossings coincide with the pulse centres.
    pub fn matched_ac_frequency(&self) -> f64 {
        PI / self.pulse_spacing()
    }

    /// Lays the sequence out as a Hamiltonian track carrying the given signal and noise.
    pub fn to_track(&self, ac: AcField, noise: &NoiseRealization) -> HamiltonianTrack {
        let detuning = noise.static_detuning;
        let mut track = HamiltonianTrack {
            items: Vec::with_capacity(self.slots.len() * 3 + 2),
            dynamic_detuning: noise.trace.clone(),
        };
        let free = |length: f64| Segment { length, detuning, drive: Drive::Free, ac };
        for slot in &self.slots {
            match &self.kind {
                PulseKind::Ideal => {
                    let half = 0.5 * slot.duration;
                    track.push_segment(free(slot.gap_before + half));
                    track.push_kick(PI, slot.axis_phase);
                    track.push_segment(free(half + slot.gap_after));
                }
                PulseKind::Rectangular | PulseKind::PhaseModulated(_) => {
                    let drive = match &self.pm {
                        Some(params) => Drive::PhaseModulated {
                            params: Arc::clone(params),
                            axis_phase: slot.axis_phase,
                        },
                        None => {
                            let rabi = PI / slot.duration;
                            let (s, c) = slot.axis_phase.sin_cos();
                            Drive::Constant { rabi_x: rabi * c, rabi_y: rabi * s }
                        }
                    };
                    track.push_segment(free(slot.gap_before));
                    track.push_segment(Segment { length: slot.duration, detuning, drive, ac });
                    track.push_segment(free(slot.gap_after));
                }
            }
        }
        track
    }

    /// Item index in the track produced by [`Self::to_track`] that closes pulse `pulse_index`'s slot.
    fn slot_end_item(pulse_index: usize) -> usize {
        3 * pulse_index + 2
    }
}

/// Builds an XY-8 sequence of `n` blocks.
///
/// Every inter-pulse interval `τ_p` is split evenly around the pulses, so pulse
/// centres sit at `(k + ½)(T_pulse + τ_p)`.
pub fn build_xy8(n: usize, pulse_duration: f64, interval: f64, kind: PulseKind) -> Result<PulseSequence> {
    if n == 0 {
        return Err(Error::InvalidParameter("XY-8 needs at least one block".into()));
    }
    if !pulse_duration.is_finite() || !interval.is_finite() {
        return Err(Error::NonFinite("XY-8 timing"));
    }
    if pulse_duration <= 0.0 || interval <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "pulse duration and interval must be positive (got {pulse_duration}, {interval})"
        )));
    }
    let pm = match &kind {
        PulseKind::PhaseModulated(params) => {
            params.validate()?;
            if (params.duration - pulse_duration).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "phase-modulated pulse lasts {} ns but the sequence expects {pulse_duration} ns",
                    params.duration
                )));
            }
            Some(Arc::new(params.clone()))
        }
        _ => None,
    };
    let slots = (0..8 * n)
        .map(|k| PulseSlot {
            axis_phase: XY8_PHASES[k % 8],
            gap_before: 0.5 * interval,
            duration: pulse_duration,
            gap_after: 0.5 * interval,
        })
        .collect();
    Ok(PulseSequence { kind, repetitions: n, pulse_duration, interval, slots, pm })
}

/// Sign of `sin(ω t + offset)`, with zero mapped to +1.
pub fn modulation_function(t: f64, angular_frequency: f64, offset: f64) -> f64 {
    if (angular_frequency * t + offset).sin() < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Offset that puts the modulation sign flips on the zeros of `cos(ω t)`.
pub const COSINE_MATCHED_OFFSET: f64 = FRAC_PI_2;

/// Closed-form `|0⟩` population `½[1 + cos(4 g t / π)]` for ideal pulses.
pub fn ideal_population(ac_amplitude: f64, t: f64) -> f64 {
    0.5 * (1.0 + (4.0 * ac_amplitude * t / PI).cos())
}

fn readout(u: &Unitary2) -> f64 {
    let zero = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    let prep = Unitary2::rotation(FRAC_PI_2, 0.0);
    let read = Unitary2::rotation(-FRAC_PI_2, 0.0);
    let psi = (read * *u * prep).apply(zero);
    psi[0].norm_sqr().clamp(0.0, 1.0)
}

fn check_noise_span(seq: &PulseSequence, noise: &NoiseRealization) -> Result<()> {
    if let Some(trace) = &noise.trace {
        let total = seq.total_time();
        if trace.duration() + 1e-9 < total {
            return Err(Error::DurationMismatch { sequence_ns: total, noise_ns: trace.duration() });
        }
    }
    Ok(())
}

/// Ramsey-type readout of a sequence: ideal π/2 about x, the sequence, then
/// −π/2 about x. Returns the final `|0⟩` population.
pub fn run_protocol(
    seq: &PulseSequence,
    ac_amplitude: f64,
    ac_frequency: f64,
    noise: &NoiseRealization,
    dt: f64,
) -> Result<f64> {
    check_noise_span(seq, noise)?;
    let track = seq.to_track(AcField::new(ac_amplitude, ac_frequency), noise);
    let u = propagate(&track, dt)?;
    Ok(readout(&u))
}

/// Like [`run_protocol`] but reads the population after every complete XY-8
/// block, returning `(elapsed ns, P0)` pairs.
pub fn run_protocol_trace(
    seq: &PulseSequence,
    ac_amplitude: f64,
    ac_frequency: f64,
    noise: &NoiseRealization,
    dt: f64,
) -> Result<Vec<(f64, f64)>> {
    check_noise_span(seq, noise)?;
    let track = seq.to_track(AcField::new(ac_amplitude, ac_frequency), noise);
    let per_block = 8;
    let checkpoints: Vec<usize> = (1..=seq.repetitions)
        .map(|b| PulseSequence::slot_end_item(b * per_block - 1))
        .collect();
    let block_time = per_block as f64 * seq.pulse_spacing();
    let mut out = Vec::with_capacity(seq.repetitions);
    propagate_checkpoints(&track, dt, &checkpoints, |at, u| {
        if at.is_some() {
            out.push(((out.len() + 1) as f64 * block_time, readout(&u)));
        }
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_track(length: f64, detuning: f64, rabi_x: f64) -> HamiltonianTrack {
        let mut track = HamiltonianTrack::new();
        track.push_segment(Segment {
            length,
            detuning,
            drive: Drive::Constant { rabi_x, rabi_y: 0.0 },
            ac: AcField::default(),
        });
        track
    }

    #[test]
    fn zero_hamiltonian_gives_identity() {
        let mut track = HamiltonianTrack::new();
        track.push_segment(Segment {
            length: 123.0,
            detuning: 0.0,
            drive: Drive::Constant { rabi_x: 0.0, rabi_y: 0.0 },
            ac: AcField::default(),
        });
        let u = propagate(&track, 0.5).unwrap();
        assert!(u.max_abs_diff(&Unitary2::identity()) < 1e-15);
    }

    #[test]
    fn resonant_pi_pulse_transfers_population() {
        let u = propagate(&constant_track(50.0, 0.0, 0.0628), 0.5).unwrap();
        let p = u.m[1][0].norm_sqr();
        // 0.0628 * 50 = 3.14, just short of π
        let expected = (0.0628f64 * 50.0 / 2.0).sin().powi(2);
        assert!((p - expected).abs() < 1e-12);
        assert!(p > 0.99999);
    }

    #[test]
    fn detuned_rotation_matches_rabi_formula() {
        let (omega, delta, t) = (0.0628f64, 0.0628f64, 50.0f64);
        let u = propagate(&constant_track(t, delta, omega), 0.5).unwrap();
        let gen = (omega * omega + delta * delta).sqrt();
        let expected = omega * omega / (gen * gen) * (gen * t / 2.0).sin().powi(2);
        assert!((u.m[1][0].norm_sqr() - expected).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_steps() {
        let track = constant_track(10.0, 0.0, 0.1);
        assert!(propagate(&track, 0.0).is_err());
        assert!(propagate(&track, -1.0).is_err());
        assert!(propagate(&track, 20.0).is_err());
        assert!(propagate(&constant_track(10.0, f64::NAN, 0.1), 1.0).is_err());
    }

    #[test]
    fn xy8_counts_and_timing() {
        let seq = build_xy8(50, 50.0, 950.0, PulseKind::Rectangular).unwrap();
        assert_eq!(seq.pulse_count(), 400);
        assert!((seq.total_time() - 400_000.0).abs() < 1e-6);
        let seq = build_xy8(16, 50.0, 950.0, PulseKind::Rectangular).unwrap();
        assert!((seq.total_time() - 128_000.0).abs() < 1e-6);
        let seq = build_xy8(1, 50.0, 950.0, PulseKind::Ideal).unwrap();
        let phases: Vec<f64> = seq.slots.iter().map(|s| s.axis_phase).collect();
        assert_eq!(phases, XY8_PHASES.to_vec());
        assert!(build_xy8(0, 50.0, 950.0, PulseKind::Rectangular).is_err());
    }

    #[test]
    fn pulse_centres_are_evenly_spaced() {
        let seq = build_xy8(2, 50.0, 950.0, PulseKind::Rectangular).unwrap();
        let mut t = 0.0;
        for (k, slot) in seq.slots.iter().enumerate() {
            let centre = t + slot.gap_before + slot.duration / 2.0;
            assert!((centre - (k as f64 + 0.5) * 1000.0).abs() < 1e-9);
            t += slot.gap_before + slot.duration + slot.gap_after;
        }
    }

    #[test]
    fn modulation_signs() {
        let w = 0.01;
        assert_eq!(modulation_function(PI / 4.0 / w, w, 0.0), 1.0);
        assert_eq!(modulation_function(5.0 * PI / 4.0 / w, w, 0.0), -1.0);
    }

    #[test]
    fn ideal_population_values() {
        assert_eq!(ideal_population(0.0, 1000.0), 1.0);
        // 4 g t / π = π
        let t = 1000.0;
        let g = PI * PI / (4.0 * t);
        assert!(ideal_population(g, t).abs() < 1e-15);
        assert!((ideal_population(g / 2.0, t) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn no_signal_no_noise_returns_full_population() {
        let noise = NoiseRealization::noiseless();
        for kind in [PulseKind::Ideal, PulseKind::Rectangular] {
            let seq = build_xy8(2, 50.0, 950.0, kind).unwrap();
            let p = run_protocol(&seq, 0.0, seq.matched_ac_frequency(), &noise, DEFAULT_DT)
                .unwrap();
            assert!((p - 1.0).abs() < 1e-12, "{p}");
        }
    }

    #[test]
    fn trace_ends_at_final_population() {
        let seq = build_xy8(3, 50.0, 950.0, PulseKind::Rectangular).unwrap();
        let w = seq.matched_ac_frequency();
        let noise = NoiseRealization::noiseless();
        let g = 2e-4;
        let trace = run_protocol_trace(&seq, g, w, &noise, DEFAULT_DT).unwrap();
        assert_eq!(trace.len(), 3);
        assert!((trace[2].0 - 24_000.0).abs() < 1e-9);
        let last = run_protocol(&seq, g, w, &noise, DEFAULT_DT).unwrap();
        assert!((trace[2].1 - last).abs() < 1e-12);
        for (t, p) in trace {
            assert!((p - ideal_population(g, t)).abs() < 0.01);
        }
    }
}
