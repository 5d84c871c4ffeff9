//! Derivative-free minimizers used by the fitting and tomography code.

/// Settings for [`nelder_mead`].
#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    /// Initial simplex edge length along each coordinate.
    pub step: f64,
    /// Stop once the spread of objective values across the simplex drops below this.
    pub f_tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder–Mead simplex minimization with dimension-adaptive coefficients
/// (Gao & Han), which behave better than the textbook ones above ~5 dimensions.
pub fn nelder_mead(
    f: &mut impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: SimplexOptions,
) -> SimplexResult {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| sanitize(f(v))).collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];

    while iterations < opts.max_iterations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if (values[n] - values[0]).abs() <= opts.f_tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / nf;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64, out: &mut Vec<f64>| {
            for ((o, c), w) in out.iter_mut().zip(&centroid).zip(&worst) {
                *o = c + t * (c - w);
            }
        };

        along(alpha, &mut trial);
        let fr = sanitize(f(&trial));
        if fr < values[0] {
            let reflected = trial.clone();
            along(gamma, &mut trial);
            let fe = sanitize(f(&trial));
            if fe < fr {
                simplex[n] = trial.clone();
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = trial.clone();
            values[n] = fr;
            continue;
        }
        // contraction, outside or inside
        let (t, bound) = if fr < values[n] { (rho * alpha, fr) } else { (-rho, values[n]) };
        along(t, &mut trial);
        let fc = sanitize(f(&trial));
        if fc <= bound {
            simplex[n] = trial.clone();
            values[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            for (x, b) in simplex[i].iter_mut().zip(&best) {
                *x = b + sigma * (*x - b);
            }
            values[i] = sanitize(f(&simplex[i]));
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    SimplexResult {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Repeated simplex runs restarted around the incumbent until a restart
/// improves the objective by less than `opts.f_tolerance`. The iteration cap
/// applies to the total over all restarts.
pub fn nelder_mead_restarting(
    f: &mut impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: SimplexOptions,
) -> SimplexResult {
    let mut best = nelder_mead(f, x0, opts);
    let mut total = best.iterations;
    let mut step = opts.step;
    loop {
        if !best.converged || total >= opts.max_iterations {
            best.iterations = total;
            return best;
        }
        step = (step * 0.5).max(opts.step * 1e-3);
        let remaining = opts.max_iterations - total;
        let next = nelder_mead(
            f,
            &best.x,
            SimplexOptions {
                step,
                max_iterations: remaining,
                ..opts
            },
        );
        total += next.iterations;
        let improvement = best.value - next.value;
        let done = next.converged && improvement < opts.f_tolerance;
        if next.value <= best.value {
            best = next;
        } else {
            best.converged = next.converged;
        }
        if done {
            best.iterations = total;
            best.converged = true;
            return best;
        }
    }
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, x_tolerance: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    while (hi - lo).abs() > x_tolerance * (1.0 + lo.abs().max(hi.abs())) {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Central-difference gradient norm, for optimizer diagnostics.
pub fn gradient_norm(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64]) -> f64 {
    let mut probe = x.to_vec();
    let mut acc = 0.0;
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        let g = (up - down) / (2.0 * h);
        acc += g * g;
    }
    acc.sqrt()
}
