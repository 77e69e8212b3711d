//! Dormand–Prince 5(4) integrator with dense output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Error tolerances and step limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorSettings {
    /// Tight tolerances used for data generation.
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 1e-10, max_steps: 100_000 }
    }
}

impl IntegratorSettings {
    /// Looser settings for the inner loop of dynamic parameter estimation.
    pub fn fitting() -> Self {
        Self { rel_tol: 1e-6, abs_tol: 1e-8, max_steps: 5_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FailureReason {
    StepSizeUnderflow,
    NonFiniteDerivative,
    TooManySteps,
    InvalidInput,
}

/// Integration stopped early. `states` holds the solution at every
/// requested time reached before `last_time`.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("integration failed at t = {last_time}: {reason:?}")]
pub struct IntegrationFailure {
    pub last_time: f64,
    pub reason: FailureReason,
    pub states: Vec<Vec<f64>>,
}

/// Integrates `dy/dt = f(t, y)` from `(output_times[0], y0)` and returns the
/// state at each of `output_times`, which must be non-decreasing.
pub fn integrate<F>(
    mut f: F,
    y0: &[f64],
    output_times: &[f64],
    settings: &IntegratorSettings,
) -> Result<Vec<Vec<f64>>, IntegrationFailure>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(output_times.len());
    let fail = |t: f64, reason, out: Vec<Vec<f64>>| IntegrationFailure { last_time: t, reason, states: out };

    if output_times.is_empty() {
        return Ok(out);
    }
    if !(settings.rel_tol > 0.0 && settings.abs_tol > 0.0)
        || output_times.windows(2).any(|w| !(w[1] >= w[0]))
        || y0.iter().any(|v| !v.is_finite())
    {
        return Err(fail(output_times[0], FailureReason::InvalidInput, out));
    }

    let t_end = *output_times.last().unwrap();
    let mut t = output_times[0];
    let mut y = y0.to_vec();
    let mut next_out = 0;
    while next_out < output_times.len() && output_times[next_out] <= t {
        out.push(y.clone());
        next_out += 1;
    }
    if next_out == output_times.len() {
        return Ok(out);
    }

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut cont = vec![[0.0f64; 5]; n];

    f(t, &y, &mut k1);
    if k1.iter().any(|v| !v.is_finite()) {
        return Err(fail(t, FailureReason::NonFiniteDerivative, out));
    }

    let span = t_end - t;
    let mut h = initial_step(&mut f, t, &y, &k1, span, settings, &mut tmp, &mut k2);
    let h_min = 1e-12 * span.max(t.abs()).max(1e-300);
    let mut fac_old = 1e-4f64;
    let mut steps = 0usize;

    while next_out < output_times.len() {
        steps += 1;
        if steps > settings.max_steps {
            return Err(fail(t, FailureReason::TooManySteps, out));
        }
        if h < h_min {
            return Err(fail(t, FailureReason::StepSizeUnderflow, out));
        }
        if t + h > t_end {
            h = t_end - t;
        }

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &tmp, &mut k5);
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, &tmp, &mut k6);
        for i in 0..n {
            y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + h, &y_new, &mut k7);

        let mut err = 0.0;
        let mut finite = true;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = settings.abs_tol + settings.rel_tol * y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
            finite &= y_new[i].is_finite() && k7[i].is_finite();
        }
        err = (err / n.max(1) as f64).sqrt();

        if !finite || !err.is_finite() {
            // shrink hard and retry; the derivative may only be singular far out
            h *= 0.1;
            if h < h_min {
                return Err(fail(t, FailureReason::NonFiniteDerivative, out));
            }
            continue;
        }

        // PI step-size control as in Hairer & Wanner's DOPRI5
        let fac11 = err.powf(0.2 - 0.04 * 0.75);
        let mut fac = fac11 / fac_old.powf(0.04);
        fac = (fac / 0.9).clamp(1.0 / 10.0, 1.0 / 0.2);
        let h_new = h / fac;

        if err <= 1.0 {
            fac_old = err.max(1e-4);
            let t_new = t + h;
            for i in 0..n {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                cont[i] = [
                    y[i],
                    ydiff,
                    bspl,
                    ydiff - h * k7[i] - bspl,
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]),
                ];
            }
            while next_out < output_times.len() && output_times[next_out] <= t_new {
                let s = (output_times[next_out] - t) / h;
                let s1 = 1.0 - s;
                out.push(
                    cont.iter()
                        .map(|c| c[0] + s * (c[1] + s1 * (c[2] + s * (c[3] + s1 * c[4]))))
                        .collect(),
                );
                next_out += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            h = h_new;
        } else {
            h /= (fac11 / 0.9).min(1.0 / 0.2);
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    f: &mut F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    span: f64,
    s: &IntegratorSettings,
    y1: &mut [f64],
    f1: &mut [f64],
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len().max(1) as f64;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..y.len() {
        let sc = s.abs_tol + s.rel_tol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (f0[i] / sc).powi(2);
    }
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    for i in 0..y.len() {
        y1[i] = y[i] + h0 * f0[i];
    }
    f(t + h0, y1, f1);
    let mut d2 = 0.0;
    for i in 0..y.len() {
        let sc = s.abs_tol + s.rel_tol * y[i].abs();
        d2 += ((f1[i] - f0[i]) / sc).powi(2);
    }
    let d2 = (d2 / n).sqrt() / h0;
    let h1 = if !d2.is_finite() {
        h0
    } else if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Classical fixed-step RK4, used as an independent reference.
pub fn rk4_fixed<F>(mut f: F, y0: &[f64], output_times: &[f64], h: f64) -> Vec<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = output_times.first().copied().unwrap_or(0.0);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut out = Vec::with_capacity(output_times.len());
    for &target in output_times {
        while t < target - 1e-14 {
            let step = h.min(target - t);
            f(t, &y, &mut k1);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * step * k1[i];
            }
            f(t + 0.5 * step, &tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * step * k2[i];
            }
            f(t + 0.5 * step, &tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + step * k3[i];
            }
            f(t + step, &tmp, &mut k4);
            for i in 0..n {
                y[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += step;
        }
        out.push(y.clone());
    }
    out
}
