use sparsemag_core::magnetometry::{EnsembleSize, NoiseEnsemble, WorkingBranch};
use sparsemag_core::noise::{stream_rng, NoiseConfig};
use sparsemag_core::pulse::PmParams;
use sparsemag_core::sensing::{PhysicalWindow, Sensor};
use sparsemag_core::spin::{build_xy8, PulseKind};

// Decoherence shrinks the fringe toward P = 1/2, so inverting through the
// full-contrast curve pulls every estimate toward the branch midpoint.
#[test]
fn ideal_inversion_of_damped_fringe_is_compressive() {
    let seq = build_xy8(16, 100.0, 900.0, PulseKind::PhaseModulated(PmParams::default())).unwrap();
    let t = seq.total_time();
    let ens = NoiseEnsemble::draw(&NoiseConfig::default(), EnsembleSize::new(15, 4), t, 3).unwrap();
    let window = PhysicalWindow::central(t, 0.6).unwrap();
    let sensor = Sensor { sequence: &seq, ensemble: &ens, branch: WorkingBranch::ideal(t), window, readout_noise: 0.0, dt: 0.5 };
    let truth: Vec<f64> = (0..=6).map(|k| k as f64 / 6.0).collect();
    let readings = sensor.measure_all(&truth, &mut stream_rng(0, 0)).unwrap();
    let ratio: Vec<f64> = readings.iter().zip(&truth).map(|(r, &v)| r.b_nt / window.to_physical(v)).collect();

    assert!(ratio[0] > 1.0 && ratio[6] < 1.0, "{ratio:?}");
    for w in ratio.windows(2) {
        assert!(w[1] < w[0], "ratio not decreasing: {ratio:?}");
    }
    // ordering of field values survives
    for w in readings.windows(2) {
        assert!(w[1].b_nt > w[0].b_nt);
    }
}
