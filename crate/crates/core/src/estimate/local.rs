//! Local refinement: BFGS with central-difference gradients, and a
//! Levenberg–Marquardt polish for cheap least-squares tuning.

use nalgebra::{DMatrix, DVector};

pub(crate) struct LocalResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

fn clean(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn fd_step(x: f64) -> f64 {
    1e-7 * (1.0 + x.abs())
}

fn gradient<F: Fn(&[f64]) -> f64 + ?Sized>(f: &F, x: &[f64], evals: &mut usize) -> Option<Vec<f64>> {
    let mut xp = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = fd_step(x[i]);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        *evals += 2;
        let gi = (fp - fm) / (2.0 * h);
        if !gi.is_finite() {
            return None;
        }
        g.push(gi);
    }
    Some(g)
}

/// Quasi-Newton minimization from `x0` (with known value `f0`). Never
/// returns a point worse than the start.
pub(crate) fn bfgs<F>(f: &F, x0: &[f64], f0: f64, max_iters: usize, max_evals: usize) -> LocalResult
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut x = DVector::from_column_slice(x0);
    let mut fx = clean(f0);
    if n == 0 || !fx.is_finite() {
        return LocalResult { x: x0.to_vec(), value: fx, evaluations: 0 };
    }
    let Some(g0) = gradient(f, x.as_slice(), &mut evals) else {
        return LocalResult { x: x0.to_vec(), value: fx, evaluations: evals };
    };
    let mut g = DVector::from_vec(g0);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut first = true;
    let mut stalls = 0;

    for _ in 0..max_iters {
        if evals >= max_evals {
            break;
        }
        let gnorm = g.amax();
        if gnorm <= 1e-12 * (1.0 + fx.abs()) {
            break;
        }
        let mut dir = -(&h_inv * &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            h_inv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = -g.dot(&g);
        }
        if first {
            // keep the very first trial step modest relative to the point
            let scale = (0.1 * (1.0 + x.amax()) / dir.amax()).min(1.0);
            dir *= scale;
            slope *= scale;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = &x + alpha * &dir;
            let ft = clean(f(trial.as_slice()));
            evals += 1;
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
            if evals >= max_evals {
                break;
            }
        }
        let Some((x_new, f_new)) = accepted else {
            if first {
                break;
            }
            // retry once along steepest descent with a fresh metric
            h_inv = DMatrix::identity(n, n);
            first = true;
            continue;
        };
        let Some(g_new) = gradient(f, x_new.as_slice(), &mut evals) else {
            x = x_new;
            fx = f_new;
            break;
        };
        let g_new = DVector::from_vec(g_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first {
                h_inv *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (s hy' + hy s') + (rho^2 y'Hy + rho) s s'
            h_inv -= rho * (&s * hy.transpose() + &hy * s.transpose());
            h_inv += (rho * rho * yhy + rho) * (&s * s.transpose());
        }
        first = false;
        let improvement = fx - f_new;
        if improvement <= 1e-15 * (1.0 + fx.abs()) {
            stalls += 1;
        } else {
            stalls = 0;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        if stalls >= 3 {
            break;
        }
    }
    LocalResult { x: x.as_slice().to_vec(), value: fx, evaluations: evals }
}

/// Levenberg–Marquardt on a residual vector. `residuals` fills `out` and
/// returns false when the model cannot be evaluated at that point.
pub(crate) fn levenberg_marquardt<R>(residuals: &R, x0: &[f64], max_evals: usize) -> LocalResult
where
    R: Fn(&[f64], &mut Vec<f64>) -> bool + ?Sized,
{
    let n = x0.len();
    let mut evals = 1usize;
    let mut r = Vec::new();
    let sum_sq = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    if !residuals(x0, &mut r) || r.iter().any(|v| !v.is_finite()) {
        return LocalResult { x: x0.to_vec(), value: f64::INFINITY, evaluations: evals };
    }
    let mut x = x0.to_vec();
    let mut fx = sum_sq(&r);
    if n == 0 {
        return LocalResult { x, value: fx, evaluations: evals };
    }
    let m = r.len();
    let mut lambda = 1e-3;
    let mut rp = Vec::with_capacity(m);
    let mut xp = x.clone();

    'outer: while evals + n + 1 <= max_evals {
        let mut jac = DMatrix::<f64>::zeros(m, n);
        for j in 0..n {
            let h = fd_step(x[j]);
            xp.copy_from_slice(&x);
            xp[j] += h;
            evals += 1;
            if !residuals(&xp, &mut rp) || rp.len() != m {
                break 'outer;
            }
            for i in 0..m {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        if jac.iter().any(|v| !v.is_finite()) {
            break;
        }
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * rv;
        loop {
            if evals >= max_evals {
                break 'outer;
            }
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * (jtj[(k, k)] + 1e-12);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                if lambda > 1e12 {
                    break 'outer;
                }
                continue;
            };
            let step = chol.solve(&(-&jtr));
            for k in 0..n {
                xp[k] = x[k] + step[k];
            }
            evals += 1;
            if residuals(&xp, &mut rp) && rp.iter().all(|v| v.is_finite()) {
                let fp = sum_sq(&rp);
                if fp < fx {
                    let gain = fx - fp;
                    x.copy_from_slice(&xp);
                    std::mem::swap(&mut r, &mut rp);
                    fx = fp;
                    lambda = (lambda * 0.3).max(1e-12);
                    if gain <= 1e-14 * (1.0 + fx) {
                        break 'outer;
                    }
                    continue 'outer;
                }
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                break 'outer;
            }
        }
    }
    LocalResult { x, value: fx, evaluations: evals }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bfgs_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let x0 = [-1.2, 1.0];
        let r = bfgs(&f, &x0, f(&x0), 500, 100_000);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn bfgs_never_worse_than_start() {
        let f = |x: &[f64]| if x[0].abs() < 1e-3 { 0.0 } else { f64::INFINITY };
        let r = bfgs(&f, &[0.0], 0.0, 10, 100);
        assert_eq!(r.value, 0.0);
        let g = |x: &[f64]| x[0].abs();
        let r = bfgs(&g, &[0.5], 0.5, 50, 1000);
        assert!(r.value <= 0.5);
    }

    #[test]
    fn lm_exponential_fit() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 * (-0.4 * t).exp()).collect();
        let res = |p: &[f64], out: &mut Vec<f64>| {
            out.clear();
            out.extend(t.iter().zip(&y).map(|(t, y)| p[0] * (p[1] * t).exp() - y));
            true
        };
        let r = levenberg_marquardt(&res, &[1.0, -1.0], 500);
        assert!(r.value < 1e-16, "{}", r.value);
        assert!((r.x[0] - 3.0).abs() < 1e-6 && (r.x[1] + 0.4).abs() < 1e-6);
    }

    #[test]
    fn lm_respects_budget() {
        let res = |p: &[f64], out: &mut Vec<f64>| {
            out.clear();
            out.push(p[0].sin() + 2.0);
            out.push(p[1] * p[0]);
            true
        };
        let r = levenberg_marquardt(&res, &[1.0, 1.0], 50);
        assert!(r.evaluations <= 50);
    }
}
