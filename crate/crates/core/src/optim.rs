//! Bounded Nelder–Mead direct search.

/// Outcome of a [`nelder_mead`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    /// Stop once the simplex spread in function value drops below this.
    pub f_tol: f64,
    /// ... and every vertex is within this distance of the best one.
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evaluations: 1000, f_tol: 1e-10, x_tol: 1e-8 }
    }
}

fn clamp_into(x: &mut [f64], bounds: Option<(&[f64], &[f64])>) {
    if let Some((lo, hi)) = bounds {
        for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
            *v = v.clamp(l, h);
        }
    }
}

/// Minimizes `f` starting from `x0` with initial simplex offsets `step`.
///
/// Points are clamped into `bounds` before every evaluation, so `f` is never
/// called outside the box. Non-finite values are treated as `+∞`.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    bounds: Option<(&[f64], &[f64])>,
    opts: NelderMeadOptions,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(step.len(), n, "step length must match dimension");
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut start = x0.to_vec();
    clamp_into(&mut start, bounds);
    if opts.max_evaluations == 0 || n == 0 {
        let value = if opts.max_evaluations == 0 { f64::INFINITY } else { eval(&start, &mut evals) };
        return Minimum { x: start, value, evaluations: evals };
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(&start, &mut evals);
    simplex.push((start.clone(), v0));
    for i in 0..n {
        if evals >= opts.max_evaluations {
            break;
        }
        let mut p = start.clone();
        p[i] += step[i];
        clamp_into(&mut p, bounds);
        if p[i] == start[i] {
            // pinned against a bound: step inward instead
            p[i] = start[i] - step[i];
            clamp_into(&mut p, bounds);
        }
        let v = eval(&p, &mut evals);
        simplex.push((p, v));
    }
    if simplex.len() < n + 1 {
        return best_of(simplex, evals);
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    while evals < opts.max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = simplex
            .iter()
            .skip(1)
            .flat_map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (worst - best).abs() <= opts.f_tol && spread <= opts.x_tol {
            break;
        }

        let mut centroid = vec![0.0; n];
        for (p, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect();
            clamp_into(&mut p, bounds);
            p
        };

        let xr = along(-alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            if evals >= opts.max_evaluations {
                simplex[n] = (xr, fr);
                break;
            }
            let xe = along(-alpha * gamma);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        if evals >= opts.max_evaluations {
            break;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(-alpha * rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < fr.min(simplex[n].1) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            if evals >= opts.max_evaluations {
                break;
            }
            let mut p: Vec<f64> = anchor
                .iter()
                .zip(&vertex.0)
                .map(|(a, v)| a + sigma * (v - a))
                .collect();
            clamp_into(&mut p, bounds);
            let v = eval(&p, &mut evals);
            *vertex = (p, v);
        }
    }
    best_of(simplex, evals)
}

fn best_of(simplex: Vec<(Vec<f64>, f64)>, evaluations: usize) -> Minimum {
    let (x, value) = simplex
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("simplex is never empty");
    Minimum { x, value, evaluations }
}
