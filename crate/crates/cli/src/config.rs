//! Experiment configuration: a TOML file plus command-line overrides.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sparsemag_core::field::{FieldPreset, Perturbation, Strategy, DEFAULT_PERTURBATION, DEFAULT_REFERENCE_COUNT, DEFAULT_SIDE};
use sparsemag_core::kriging::{Calibration, DEFAULT_EVALS_PER_START, DEFAULT_STARTS};
use sparsemag_core::noise::{NoiseConfig, DEFAULT_CORRELATION_TIME, DEFAULT_FWHM, DEFAULT_OU_STD, DEFAULT_READOUT_NOISE};
use sparsemag_core::pulse::{PmParams, DEFAULT_PM_DURATION, DEFAULT_RECT_DURATION};
use sparsemag_core::sensing::DEFAULT_WINDOW_FRACTION;
use sparsemag_core::spin::DEFAULT_DT;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PulseChoice {
    Rect,
    Pm,
}

impl PulseChoice {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "rect" => Ok(PulseChoice::Rect),
            "pm" => Ok(PulseChoice::Pm),
            _ => Err(CliError::Config(format!("unknown pulse '{s}' (rect, pm)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceConfig {
    /// XY-8 blocks.
    pub repetitions: usize,
    pub pulse: PulseChoice,
    /// Pulse-centre spacing `T_pulse + τ_p` in ns.
    pub spacing_ns: f64,
    pub rect_duration_ns: f64,
    /// `"default"`, `"optimize"`, or a path to a parameter JSON file.
    pub pm: String,
    pub dt_ns: f64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            repetitions: 16,
            pulse: PulseChoice::Pm,
            spacing_ns: 1000.0,
            rect_duration_ns: DEFAULT_RECT_DURATION,
            pm: "default".into(),
            dt_ns: DEFAULT_DT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Static-detuning FWHM in MHz (angular frequency 2π × value).
    pub fwhm_mhz: f64,
    pub correlation_time_ns: f64,
    /// Stationary OU std in MHz (angular 2π × value).
    pub ou_std_mhz: f64,
    pub readout_noise: f64,
    pub detunings: usize,
    pub trajectories: usize,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            fwhm_mhz: DEFAULT_FWHM / (2.0 * PI) * 1e3,
            correlation_time_ns: DEFAULT_CORRELATION_TIME,
            ou_std_mhz: DEFAULT_OU_STD / (2.0 * PI) * 1e3,
            readout_noise: DEFAULT_READOUT_NOISE,
            detunings: 15,
            trajectories: 4,
        }
    }
}

impl NoiseSection {
    pub fn to_core(&self) -> NoiseConfig {
        NoiseConfig::with_ou_std(
            2.0 * PI * self.fwhm_mhz * 1e-3,
            self.correlation_time_ns,
            2.0 * PI * self.ou_std_mhz * 1e-3,
            self.readout_noise,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    pub preset: String,
    pub side: usize,
    pub window_fraction: f64,
}

impl Default for FieldSection {
    fn default() -> Self {
        Self { preset: "triple".into(), side: DEFAULT_SIDE, window_fraction: DEFAULT_WINDOW_FRACTION }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub strategy: String,
    pub n: usize,
    pub perturbation: f64,
    pub distribution: Perturbation,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self { strategy: "grid".into(), n: 25, perturbation: DEFAULT_PERTURBATION, distribution: Perturbation::Uniform }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionSection {
    pub references: usize,
    pub calibration: String,
    pub starts: usize,
    pub evaluations_per_start: usize,
}

impl Default for ReconstructionSection {
    fn default() -> Self {
        Self {
            references: DEFAULT_REFERENCE_COUNT,
            calibration: "proportional".into(),
            starts: DEFAULT_STARTS,
            evaluations_per_start: DEFAULT_EVALS_PER_START,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    pub budget: usize,
    pub restarts: usize,
    pub grid_points: usize,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self { budget: 600, restarts: 5, grid_points: 15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharacterizeSection {
    pub points: usize,
    /// Sweep extent in units of the ideal first-branch end.
    pub span: f64,
    /// Field of the population-vs-time trace, in units of the ideal branch end.
    pub trace_field: f64,
}

impl Default for CharacterizeSection {
    fn default() -> Self {
        Self { points: 201, span: 1.5, trace_field: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// `"n"` or `"strategy"`.
    pub variable: String,
    pub n_values: Vec<usize>,
    pub strategies: Vec<String>,
    pub repetitions: usize,
    /// Sample the ground truth directly instead of simulating each measurement.
    pub noiseless: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            variable: "n".into(),
            n_values: vec![25, 36, 64, 81, 100],
            strategies: Strategy::ALL.iter().map(|s| s.name().to_string()).collect(),
            repetitions: 20,
            noiseless: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out: PathBuf,
    /// `"p5"` (binary) or `"p2"` (plain text) 16-bit PGM.
    pub image_format: String,
    pub sequence: SequenceConfig,
    pub noise: NoiseSection,
    pub field: FieldSection,
    pub sampling: SamplingSection,
    pub reconstruction: ReconstructionSection,
    pub optimize: OptimizeSection,
    pub characterize: CharacterizeSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: PathBuf::from("out"),
            image_format: "p5".into(),
            sequence: SequenceConfig::default(),
            noise: NoiseSection::default(),
            field: FieldSection::default(),
            sampling: SamplingSection::default(),
            reconstruction: ReconstructionSection::default(),
            optimize: OptimizeSection::default(),
            characterize: CharacterizeSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

/// Flag values that win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub strategy: Option<String>,
    pub n: Option<usize>,
    pub calibration: Option<String>,
    pub field_preset: Option<String>,
    pub pulse: Option<String>,
    pub budget: Option<usize>,
    pub variable: Option<String>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str::<ExperimentConfig>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => ExperimentConfig::default(),
        };
        cfg.apply(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if let Some(s) = &o.strategy {
            self.sampling.strategy = s.clone();
        }
        if let Some(n) = o.n {
            self.sampling.n = n;
        }
        if let Some(c) = &o.calibration {
            self.reconstruction.calibration = c.clone();
        }
        if let Some(p) = &o.field_preset {
            self.field.preset = p.clone();
        }
        if let Some(p) = &o.pulse {
            self.sequence.pulse = PulseChoice::parse(p)?;
        }
        if let Some(b) = o.budget {
            self.optimize.budget = b;
        }
        if let Some(v) = &o.variable {
            self.sweep.variable = v.clone();
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.seed.is_none() {
            return bad("a seed is required (set `seed` in the config or pass --seed)".into());
        }
        self.preset()?;
        self.strategy()?;
        self.calibration()?;
        for s in &self.sweep.strategies {
            Strategy::parse(s).map_err(|e| CliError::Config(e.to_string()))?;
        }
        if !matches!(self.sweep.variable.as_str(), "n" | "strategy") {
            return bad(format!("sweep variable must be 'n' or 'strategy', got '{}'", self.sweep.variable));
        }
        if !matches!(self.image_format.as_str(), "p5" | "p2") {
            return bad(format!("image_format must be 'p5' or 'p2', got '{}'", self.image_format));
        }
        let s = &self.sequence;
        if s.repetitions == 0 || !(s.spacing_ns > self.pulse_duration()) || !(s.dt_ns > 0.0) {
            return bad("sequence needs repetitions ≥ 1, spacing longer than the pulse, and dt > 0".into());
        }
        if self.noise.detunings == 0 || self.noise.trajectories == 0 {
            return bad("noise ensemble sizes must be positive".into());
        }
        self.noise.to_core().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.field.side < 11 || !(self.field.window_fraction > 0.0 && self.field.window_fraction <= 1.0) {
            return bad("field side must be ≥ 11 and window_fraction in (0, 1]".into());
        }
        if self.sampling.n < 2 || !(self.sampling.perturbation >= 0.0) {
            return bad("sampling needs n ≥ 2 and a non-negative perturbation".into());
        }
        if self.reconstruction.references == 0 || self.reconstruction.starts == 0 {
            return bad("references and starts must be positive".into());
        }
        if self.characterize.points < 3 || !(self.characterize.span > 0.0) {
            return bad("characterize needs ≥ 3 points and a positive span".into());
        }
        if self.sweep.repetitions == 0 || self.sweep.n_values.iter().any(|&n| n < 2) {
            return bad("sweep needs repetitions ≥ 1 and n values ≥ 2".into());
        }
        if self.optimize.grid_points == 0 {
            return bad("optimize.grid_points must be positive".into());
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config has a seed")
    }

    pub fn preset(&self) -> Result<FieldPreset, CliError> {
        FieldPreset::parse(&self.field.preset).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn strategy(&self) -> Result<Strategy, CliError> {
        Strategy::parse(&self.sampling.strategy).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn calibration(&self) -> Result<Calibration, CliError> {
        Calibration::parse(&self.reconstruction.calibration).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn pulse_duration(&self) -> f64 {
        match self.sequence.pulse {
            PulseChoice::Rect => self.sequence.rect_duration_ns,
            PulseChoice::Pm => DEFAULT_PM_DURATION,
        }
    }

    /// PM parameters named by `sequence.pm`, except `"optimize"`, which the caller resolves.
    pub fn pm_file_params(&self) -> Result<Option<PmParams>, CliError> {
        match self.sequence.pm.as_str() {
            "default" => Ok(Some(PmParams::default())),
            "optimize" => Ok(None),
            path => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read PM parameters {path}: {e}")))?;
                PmParams::from_json(&text).map(Some).map_err(|e| CliError::Config(e.to_string()))
            }
        }
    }

    /// SHA-256 of [`Self::to_toml`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Resolved configuration as TOML, output directory excluded.
    pub fn to_toml(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        toml::to_string(&canonical).expect("config always serializes")
    }
}
