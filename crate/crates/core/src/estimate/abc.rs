//! Artificial bee colony global search over a box.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub(crate) struct Colony {
    pub sources: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub evaluations: usize,
    pub best: (Vec<f64>, f64),
    pub trace: Vec<(usize, f64)>,
}

fn fitness(v: f64) -> f64 {
    if !v.is_finite() {
        0.0
    } else if v >= 0.0 {
        1.0 / (1.0 + v)
    } else {
        1.0 + v.abs()
    }
}

/// Runs employed, onlooker and scout phases until `max_evals` objective
/// evaluations are spent. `starts` seed the first food sources.
pub(crate) fn search<F>(
    objective: &F,
    bounds: &[(f64, f64)],
    colony_size: usize,
    max_evals: usize,
    starts: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Colony
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let dim = bounds.len();
    let size = colony_size.max(2);
    let limit = (size * dim).max(10);
    let mut evals = 0usize;
    let eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let random_point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        bounds.iter().map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo }).collect()
    };

    let mut sources: Vec<Vec<f64>> = Vec::with_capacity(size);
    for s in starts.iter().filter(|s| s.len() == dim).take(size) {
        sources.push(s.clone());
    }
    while sources.len() < size {
        sources.push(random_point(rng));
    }
    let mut values: Vec<f64> = sources.iter().map(|s| eval(s, &mut evals)).collect();
    let mut trials = vec![0usize; size];

    let mut best_idx = argmin(&values);
    let mut best = (sources[best_idx].clone(), values[best_idx]);
    let mut trace = vec![(evals, best.1)];

    let neighbour = |sources: &[Vec<f64>], i: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let j = rng.random_range(0..dim);
        let mut k = rng.random_range(0..size - 1);
        if k >= i {
            k += 1;
        }
        let phi: f64 = rng.random_range(-1.0..=1.0);
        let mut v = sources[i].clone();
        v[j] = sources[i][j] + phi * (sources[i][j] - sources[k][j]);
        let (lo, hi) = bounds[j];
        v[j] = v[j].clamp(lo.min(hi), hi.max(lo));
        v
    };

    while evals < max_evals && dim > 0 {
        // employed bees
        for i in 0..size {
            if evals >= max_evals {
                break;
            }
            let v = neighbour(&sources, i, rng);
            let fv = eval(&v, &mut evals);
            if fv < values[i] {
                sources[i] = v;
                values[i] = fv;
                trials[i] = 0;
            } else {
                trials[i] += 1;
            }
        }
        // onlookers, roulette on fitness
        let fit: Vec<f64> = values.iter().map(|&v| fitness(v)).collect();
        let total: f64 = fit.iter().sum();
        for _ in 0..size {
            if evals >= max_evals {
                break;
            }
            let i = if total > 0.0 {
                let mut pick = rng.random_range(0.0..total);
                let mut idx = size - 1;
                for (k, f) in fit.iter().enumerate() {
                    if pick < *f {
                        idx = k;
                        break;
                    }
                    pick -= f;
                }
                idx
            } else {
                rng.random_range(0..size)
            };
            let v = neighbour(&sources, i, rng);
            let fv = eval(&v, &mut evals);
            if fv < values[i] {
                sources[i] = v;
                values[i] = fv;
                trials[i] = 0;
            } else {
                trials[i] += 1;
            }
        }
        let idx = argmin(&values);
        if values[idx] < best.1 {
            best_idx = idx;
            best = (sources[idx].clone(), values[idx]);
            trace.push((evals, best.1));
        }
        // one scout per cycle: the most exhausted source, unless it holds the best
        if let Some((i, _)) = trials.iter().enumerate().filter(|(_, &t)| t > limit).max_by_key(|(_, &t)| t) {
            if evals < max_evals && i != best_idx {
                sources[i] = random_point(rng);
                values[i] = eval(&sources[i], &mut evals);
                trials[i] = 0;
            } else {
                trials[i] = 0;
            }
        }
    }
    let idx = argmin(&values);
    if values[idx] < best.1 {
        best = (sources[idx].clone(), values[idx]);
        trace.push((evals, best.1));
    }
    Colony { sources, values, evaluations: evals, best, trace }
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn finds_rastrigin_basin() {
        let f = |x: &[f64]| {
            x.iter().map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos() + 10.0).sum::<f64>()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = search(&f, &[(-5.12, 5.12); 2], 40, 20_000, &[], &mut rng);
        assert!(c.best.1 < 1e-2, "{}", c.best.1);
        assert!(c.evaluations <= 20_000);
    }

    #[test]
    fn infinite_objective_everywhere() {
        let f = |_: &[f64]| f64::INFINITY;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = search(&f, &[(-1.0, 1.0)], 10, 200, &[], &mut rng);
        assert!(c.best.1.is_infinite());
    }
}
