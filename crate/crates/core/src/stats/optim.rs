//! Box-bounded Nelder–Mead minimizer.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Simplex diameter (max-norm) at which the search stops.
    pub xtol: f64,
    /// Relative spread of simplex values at which the search stops.
    pub ftol_rel: f64,
    pub initial_step: f64,
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iter: 500, xtol: 1e-8, ftol_rel: 1e-13, initial_step: 1.0, restarts: 2 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn clamp_to(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(lo, hi);
    }
}

pub fn minimize<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: NelderMeadOptions,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut best_x = x0.to_vec();
    clamp_to(&mut best_x, lower, upper);
    let mut best_f = eval(&best_x);
    if dim == 0 {
        return Minimum { x: best_x, f: best_f, iterations: 0, converged: true };
    }

    let mut iterations = 0;
    let mut converged = false;
    let mut step = opts.initial_step;
    for _round in 0..=opts.restarts {
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
        simplex.push((best_x.clone(), best_f));
        for i in 0..dim {
            let mut x = best_x.clone();
            x[i] = if x[i] + step <= upper[i] { x[i] + step } else { x[i] - step };
            clamp_to(&mut x, lower, upper);
            let fx = eval(&x);
            simplex.push((x, fx));
        }
        let start_f = best_f;
        converged = false;
        while iterations < opts.max_iter {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let f_lo = simplex[0].1;
            let f_hi = simplex[dim].1;
            let diameter = simplex[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if diameter <= opts.xtol || (f_hi - f_lo).abs() <= opts.ftol_rel * (1.0 + f_lo.abs()) {
                converged = true;
                break;
            }
            iterations += 1;

            let mut centroid = vec![0.0; dim];
            for (x, _) in &simplex[..dim] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / dim as f64;
                }
            }
            let toward = |t: f64| {
                let mut p: Vec<f64> =
                    centroid.iter().zip(&simplex[dim].0).map(|(c, w)| c + t * (c - w)).collect();
                clamp_to(&mut p, lower, upper);
                p
            };
            let xr = toward(1.0);
            let fr = eval(&xr);
            if fr < simplex[0].1 {
                let xe = toward(2.0);
                let fe = eval(&xe);
                simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[dim - 1].1 {
                simplex[dim] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[dim].1 {
                    let xc = toward(0.5);
                    let fc = eval(&xc);
                    (xc, fc)
                } else {
                    let xc = toward(-0.5);
                    let fc = eval(&xc);
                    (xc, fc)
                };
                if fc < simplex[dim].1.min(fr) {
                    simplex[dim] = (xc, fc);
                } else {
                    let x_best = simplex[0].0.clone();
                    for (x, fx) in simplex[1..].iter_mut() {
                        for (v, b) in x.iter_mut().zip(&x_best) {
                            *v = b + 0.5 * (*v - b);
                        }
                        *fx = eval(x);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 <= best_f {
            best_x = simplex[0].0.clone();
            best_f = simplex[0].1;
        }
        if !converged {
            break;
        }
        // Converged restarts that no longer improve end the search.
        if (start_f - best_f).abs() <= opts.ftol_rel * (1.0 + best_f.abs()) && _round > 0 {
            break;
        }
        step = (step * 0.1).max(1e3 * opts.xtol);
    }
    Minimum { x: best_x, f: best_f, iterations, converged }
}
