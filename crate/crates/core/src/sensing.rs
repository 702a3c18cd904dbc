//! Simulated point measurements: normalized field value to physical field,
//! ensemble-averaged population with readout noise, and back through the
//! working branch.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{choose_references, sample_field, FieldMap, ReferenceSet};
use crate::kriging::Calibration;
use crate::magnetometry::{field_from_population, ideal_branch_end, mean_population, NoiseEnsemble, WorkingBranch};
use crate::spin::PulseSequence;

/// Fraction of the ideal first branch covered by the physical window.
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.6;

/// Affine map between normalized field values and nT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalWindow {
    pub b_min_nt: f64,
    pub b_max_nt: f64,
}

impl PhysicalWindow {
    pub fn new(b_min_nt: f64, b_max_nt: f64) -> Result<Self> {
        if !(b_min_nt.is_finite() && b_max_nt.is_finite()) || !(b_max_nt > b_min_nt) {
            return Err(Error::InvalidParameter(format!("empty physical window [{b_min_nt}, {b_max_nt}] nT")));
        }
        Ok(Self { b_min_nt, b_max_nt })
    }

    /// Central `fraction` of `[0, π²/(4γt)]`.
    pub fn central(evolution_time_ns: f64, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!("window fraction must lie in (0, 1], got {fraction}")));
        }
        let end = ideal_branch_end(evolution_time_ns);
        let margin = 0.5 * (1.0 - fraction) * end;
        Self::new(margin, end - margin)
    }

    pub fn to_physical(&self, normalized: f64) -> f64 {
        self.b_min_nt + normalized * (self.b_max_nt - self.b_min_nt)
    }

    pub fn to_normalized(&self, b_nt: f64) -> f64 {
        (b_nt - self.b_min_nt) / (self.b_max_nt - self.b_min_nt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub population: f64,
    pub b_nt: f64,
    /// Recovered field in normalized units.
    pub value: f64,
    pub clamped: bool,
}

pub struct Sensor<'a> {
    pub sequence: &'a PulseSequence,
    pub ensemble: &'a NoiseEnsemble,
    pub branch: WorkingBranch,
    pub window: PhysicalWindow,
    pub readout_noise: f64,
    pub dt: f64,
}

impl Sensor<'_> {
    /// Measures every normalized value. Readout draws are taken in input order.
    pub fn measure_all<R: Rng + ?Sized>(&self, normalized: &[f64], rng: &mut R) -> Result<Vec<Reading>> {
        if !(self.readout_noise >= 0.0) {
            return Err(Error::InvalidParameter("readout noise must be non-negative".into()));
        }
        let means = normalized
            .iter()
            .map(|&v| mean_population(self.window.to_physical(v), self.sequence, self.ensemble, self.dt))
            .collect::<Result<Vec<_>>>()?;
        means
            .into_iter()
            .map(|mean| {
                let z: f64 = rng.sample(StandardNormal);
                let population = mean + self.readout_noise * z;
                let inv = field_from_population(population, &self.branch)?;
                Ok(Reading { population, b_nt: inv.b_nt, value: self.window.to_normalized(inv.b_nt), clamped: inv.clamped })
            })
            .collect()
    }
}

/// Applies `calibration` to normalized values in physical units: values and
/// references are mapped to nT, corrected, and mapped back.
pub fn calibrate_physical(
    calibration: Calibration,
    values: &[f64],
    refs: &ReferenceSet,
    window: &PhysicalWindow,
) -> Result<Vec<f64>> {
    let phys = |v: &[f64]| v.iter().map(|&x| window.to_physical(x)).collect::<Vec<_>>();
    let refs_nt = ReferenceSet { coords: refs.coords.clone(), nominal: phys(&refs.nominal), measured: phys(&refs.measured) };
    let out = calibration.apply(&phys(values), &refs_nt)?;
    Ok(out.into_iter().map(|b| window.to_normalized(b)).collect())
}

/// Sample and reference measurements of one ground-truth map.
#[derive(Debug, Clone, PartialEq)]
pub struct SensedData {
    pub coords: Vec<(f64, f64)>,
    pub truth: Vec<f64>,
    pub readings: Vec<Reading>,
    pub references: ReferenceSet,
    pub reference_readings: Vec<Reading>,
}

impl SensedData {
    pub fn values(&self) -> Vec<f64> {
        self.readings.iter().map(|r| r.value).collect()
    }
}

/// Measures the map at `coords`, then picks `reference_count` reference pixels
/// spanning the measured range and measures those too.
pub fn sense<R: Rng + ?Sized>(
    truth: &FieldMap,
    coords: &[(f64, f64)],
    reference_count: usize,
    sensor: &Sensor<'_>,
    rng: &mut R,
) -> Result<SensedData> {
    let truth_values = sample_field(truth, coords)?;
    let readings = sensor.measure_all(&truth_values, rng)?;
    let values: Vec<f64> = readings.iter().map(|r| r.value).collect();
    let mut references = choose_references(&values, truth, reference_count)?;
    let reference_readings = sensor.measure_all(&references.nominal, rng)?;
    references.measured = reference_readings.iter().map(|r| r.value).collect();
    Ok(SensedData { coords: coords.to_vec(), truth: truth_values, readings, references, reference_readings })
}
