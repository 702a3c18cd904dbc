use proptest::prelude::*;
use sparsemag_core::noise::*;
use sparsemag_core::pulse::*;
use sparsemag_core::spin::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_exponential_is_unitary(hx in -1.0f64..1.0, hy in -1.0f64..1.0, hz in -1.0f64..1.0, t in 0.0f64..500.0) {
        prop_assert!(Unitary2::exp_su2(hx, hy, hz, t).unitarity_error() <= 1e-9);
    }

    #[test]
    fn propagators_stay_unitary(
        detuning in -0.2f64..0.2,
        rabi in 0.0f64..0.1,
        amp in 0.0f64..0.01,
        len in 1.0f64..300.0,
        axis in 0.0f64..6.3,
    ) {
        let mut track = HamiltonianTrack::new();
        track.push_segment(Segment { length: len, detuning, drive: Drive::Constant { rabi_x: rabi, rabi_y: 0.5 * rabi }, ac: AcField::new(amp, 0.003) });
        track.push_kick(1.3, axis);
        track.push_segment(Segment {
            length: 100.0,
            detuning,
            drive: Drive::PhaseModulated { params: std::sync::Arc::new(PmParams::default()), axis_phase: axis },
            ac: AcField::new(amp, 0.003),
        });
        track.push_segment(Segment { length: len, detuning, drive: Drive::Free, ac: AcField::new(amp, 0.003) });
        let u = propagate(&track, DEFAULT_DT).unwrap();
        prop_assert!(u.unitarity_error() <= 1e-9);
    }

    #[test]
    fn fidelity_ignores_global_phase(hx in -0.05f64..0.05, hz in -0.05f64..0.05, phase in 0.0f64..6.3) {
        let u = Unitary2::exp_su2(hx, 0.02, hz, 30.0);
        let target = Unitary2::pauli_x();
        let shifted = u.scale(num_complex::Complex64::from_polar(1.0, phase));
        let a = gate_fidelity(&u, &target).unwrap();
        let b = gate_fidelity(&shifted, &target).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
    }

    #[test]
    fn detuning_grid_weights_sum_to_one(m in 1usize..40, fwhm in 0.001f64..1.0) {
        let grid = detuning_grid(m, fwhm).unwrap();
        prop_assert_eq!(grid.len(), m);
        prop_assert!((grid.iter().map(|g| g.1).sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn ou_stationary_variance() {
    let cfg = NoiseConfig::default();
    let mut rng = stream_rng(42, 0);
    let mut x = 0.0;
    let n = 100_000;
    let (mut s, mut s2) = (0.0, 0.0);
    // step of τ/10 keeps the 10⁵ samples well decorrelated
    let dt = cfg.correlation_time / 10.0;
    for _ in 0..n {
        x = ou_step(x, dt, &cfg, &mut rng).unwrap();
        s += x;
        s2 += x * x;
    }
    let mean = s / n as f64;
    let var = s2 / n as f64 - mean * mean;
    assert!((var / cfg.ou_variance() - 1.0).abs() < 0.05, "{var} vs {}", cfg.ou_variance());
}
