use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use sparsemag_core::field::FieldMap;
use sparsemag_core::metrics::*;
use sparsemag_core::noise::stream_rng;

fn random_map(w: usize, h: usize, seed: u64) -> FieldMap {
    let mut rng = stream_rng(seed, 0);
    FieldMap::new(w, h, (0..w * h).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

/// Direct windowed SSIM with full 2-D Gaussian weights at each window position.
fn ssim_direct(x: &FieldMap, y: &FieldMap) -> f64 {
    let r = 5i64;
    let mut w2 = vec![0.0; 121];
    for a in -r..=r {
        for b in -r..=r {
            w2[((a + r) * 11 + b + r) as usize] = (-((a * a + b * b) as f64) / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let s: f64 = w2.iter().sum();
    w2.iter_mut().for_each(|v| *v /= s);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for j in 5..x.height - 5 {
        for i in 5..x.width - 5 {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for a in 0..11 {
                for b in 0..11 {
                    let wt = w2[a * 11 + b];
                    let (p, q) = (x.get(i + b - 5, j + a - 5), y.get(i + b - 5, j + a - 5));
                    mx += wt * p;
                    my += wt * q;
                    sxx += wt * p * p;
                    syy += wt * q * q;
                    sxy += wt * p * q;
                }
            }
            let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn ssim_matches_direct_window_sum() {
    let t = random_map(16, 16, 1);
    let p = FieldMap::new(16, 16, t.values.iter().map(|v| 0.7 * v + 0.2).collect()).unwrap();
    let got = ssim(&t, &p, 1.0).unwrap();
    assert!((got - ssim_direct(&t, &p)).abs() < 1e-12);
    assert!(got < 1.0);
    let q = random_map(16, 16, 2);
    assert!((ssim(&t, &q, 1.0).unwrap() - ssim_direct(&t, &q)).abs() < 1e-12);
}

#[test]
fn window_weights_are_normalized() {
    let w = gaussian_window();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert_eq!(w[0], w[10]);
}

fn permuted(m: &FieldMap, perm: &[usize]) -> FieldMap {
    FieldMap::new(m.width, m.height, perm.iter().map(|&k| m.values[k]).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn global_metric_invariants(seed in 0u64..100_000) {
        let t = random_map(12, 12, seed);
        let p = random_map(12, 12, seed + 1_000_000);
        let (a, r) = (mae(&t, &p).unwrap(), rmse(&t, &p).unwrap());
        prop_assert!(r >= a && a >= 0.0);
        prop_assert_eq!(a, mae(&p, &t).unwrap());
        prop_assert_eq!(r, rmse(&p, &t).unwrap());
        prop_assert_eq!(psnr(&t, &p, 1.0).unwrap(), psnr(&p, &t, 1.0).unwrap());
        prop_assert!(r2(&t, &p).unwrap() <= 1.0);
        let s = ssim(&t, &p, 1.0).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!((s - ssim(&p, &t, 1.0).unwrap()).abs() < 1e-12);
        prop_assert_eq!(ssim(&t, &t, 1.0).unwrap(), 1.0);

        let mut perm: Vec<usize> = (0..144).collect();
        perm.shuffle(&mut stream_rng(seed, 9));
        let (tp, pp) = (permuted(&t, &perm), permuted(&p, &perm));
        prop_assert!((mae(&tp, &pp).unwrap() - a).abs() < 1e-12);
        prop_assert!((rmse(&tp, &pp).unwrap() - r).abs() < 1e-12);
        prop_assert!((psnr(&tp, &pp, 1.0).unwrap() - psnr(&t, &p, 1.0).unwrap()).abs() < 1e-9);
        prop_assert!((r2(&tp, &pp).unwrap() - r2(&t, &p).unwrap()).abs() < 1e-9);
    }
}
