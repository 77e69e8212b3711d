//! Discriminating experiment design between two rival rate laws.
//!
//! The next initial condition maximizes the integrated squared difference
//! between the two models' predicted trajectories.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimate::FittedModel;
use crate::rng::substream;
use crate::simulate::{integrate_rate, CaseStudy, IntegratorSettings};

#[derive(Debug, Error, PartialEq)]
pub enum DesignError {
    #[error("initial condition has {got} entries, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid design space: {0}")]
    Space(String),
    #[error("no design point could be integrated by both models")]
    NoProposal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpace {
    /// Closed interval for each species' initial concentration.
    pub bounds: Vec<(f64, f64)>,
    pub window: (f64, f64),
    pub quadrature_points: usize,
}

impl DesignSpace {
    pub const DEFAULT_QUADRATURE: usize = 101;

    pub fn new(bounds: Vec<(f64, f64)>, window: (f64, f64), quadrature_points: usize) -> Result<Self, DesignError> {
        let space = Self { bounds, window, quadrature_points };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        if self.bounds.is_empty() {
            return Err(DesignError::Space("no species".into()));
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
                return Err(DesignError::Space(format!("species {i}: need 0 <= lower < upper, got [{lo}, {hi}]")));
            }
        }
        if !(self.window.1 > self.window.0) || !self.window.0.is_finite() || !self.window.1.is_finite() {
            return Err(DesignError::Space("empty time window".into()));
        }
        if self.quadrature_points < 2 {
            return Err(DesignError::Space("need at least 2 quadrature points".into()));
        }
        Ok(())
    }

    /// `[0, 1.25 · max]` per species over the case study's initial conditions.
    pub fn for_case_study(cs: &CaseStudy) -> Self {
        let n = cs.system.species.len();
        let overall = cs.experiments.iter().flat_map(|e| e.initial.iter().copied()).fold(0.0, f64::max);
        let bounds = (0..n)
            .map(|s| {
                let m = cs.experiments.iter().map(|e| e.initial[s]).fold(0.0, f64::max);
                let m = if m > 0.0 { m } else { overall.max(1.0) };
                (0.0, 1.25 * m)
            })
            .collect();
        let window = cs.experiments.first().map(|e| e.window).unwrap_or((0.0, 10.0));
        Self { bounds, window, quadrature_points: Self::DEFAULT_QUADRATURE }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.bounds.len() && x.iter().zip(&self.bounds).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.bounds).map(|(v, &(lo, hi))| v.clamp(lo, hi)).collect()
    }

    fn grid(&self) -> Vec<f64> {
        let (a, b) = self.window;
        let m = self.quadrature_points - 1;
        (0..=m).map(|i| if i == m { b } else { a + (b - a) * i as f64 / m as f64 }).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartResult {
    pub start: Vec<f64>,
    pub x0: Vec<f64>,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignProposal {
    pub x0: Vec<f64>,
    pub objective: f64,
    /// The two models predict the same trajectories everywhere tried.
    pub degenerate: bool,
    pub trace: Vec<StartResult>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSettings {
    pub lhs_starts: usize,
    pub seed: u64,
    /// Pattern search stops once the step is below this fraction of each range.
    pub min_step: f64,
    pub max_evals_per_start: usize,
}

impl Default for DesignSettings {
    fn default() -> Self {
        Self { lhs_starts: 32, seed: 0, min_step: 1e-4, max_evals_per_start: 400 }
    }
}

/// Discrepancy value plus whether either integration stopped early.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Discrepancy {
    pub value: f64,
    pub truncated: bool,
    /// Quadrature nodes both models reached.
    pub nodes: usize,
}

fn predict(model: &FittedModel, stoich: &[f64], x0: &[f64], grid: &[f64], settings: &IntegratorSettings) -> (Vec<Vec<f64>>, bool) {
    match integrate_rate(&model.template.compile(), &model.theta, stoich, x0, grid, settings) {
        Ok(states) => (states, false),
        Err(f) => (f.states, true),
    }
}

/// Trapezoidal integral of `Σ_s (a_s(t) − b_s(t))²` over the space's window.
/// If an integration fails, only the part of the grid both models reached counts.
pub fn discrepancy_detail(
    model_a: &FittedModel,
    model_b: &FittedModel,
    stoich: &[f64],
    x0: &[f64],
    space: &DesignSpace,
) -> Result<Discrepancy, DesignError> {
    if x0.len() != stoich.len() {
        return Err(DesignError::Dimension { expected: stoich.len(), got: x0.len() });
    }
    let grid = space.grid();
    let settings = IntegratorSettings::default();
    let (a, fa) = predict(model_a, stoich, x0, &grid, &settings);
    let (b, fb) = predict(model_b, stoich, x0, &grid, &settings);
    let nodes = a.len().min(b.len());
    let sq: Vec<f64> = (0..nodes)
        .map(|i| a[i].iter().zip(&b[i]).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
        .collect();
    let mut value = 0.0;
    for i in 1..nodes {
        value += 0.5 * (grid[i] - grid[i - 1]) * (sq[i] + sq[i - 1]);
    }
    if !value.is_finite() {
        value = 0.0;
    }
    let truncated = fa || fb;
    if truncated {
        log::debug!("discrepancy truncated at node {nodes} of {} for x0 = {x0:?}", grid.len());
    }
    Ok(Discrepancy { value, truncated, nodes })
}

pub fn discrepancy(
    model_a: &FittedModel,
    model_b: &FittedModel,
    stoich: &[f64],
    x0: &[f64],
    space: &DesignSpace,
) -> Result<f64, DesignError> {
    discrepancy_detail(model_a, model_b, stoich, x0, space).map(|d| d.value)
}

/// Latin-hypercube sample of `n` points in the space.
fn latin_hypercube(space: &DesignSpace, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = substream(seed, &[0x1A7]);
    let dim = space.bounds.len();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for &(lo, hi) in &space.bounds {
        let mut strata: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            strata.swap(i, rng.random_range(0..=i));
        }
        columns.push(
            strata
                .into_iter()
                .map(|k| lo + (hi - lo) * (k as f64 + rng.random::<f64>()) / n as f64)
                .collect(),
        );
    }
    (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect()
}

/// Coordinate pattern search for a maximum, starting at `x`.
fn pattern_search<F: Fn(&[f64]) -> f64>(f: &F, space: &DesignSpace, x: Vec<f64>, settings: &DesignSettings) -> (Vec<f64>, f64, usize) {
    let widths: Vec<f64> = space.bounds.iter().map(|(lo, hi)| hi - lo).collect();
    let mut x = x;
    let mut fx = f(&x);
    let mut evals = 1;
    let mut step = 0.25;
    while step >= settings.min_step && evals < settings.max_evals_per_start {
        let mut improved = false;
        for j in 0..x.len() {
            for dir in [1.0, -1.0] {
                if evals >= settings.max_evals_per_start {
                    break;
                }
                let mut y = x.clone();
                let (lo, hi) = space.bounds[j];
                y[j] = (x[j] + dir * step * widths[j]).clamp(lo, hi);
                if y[j] == x[j] {
                    continue;
                }
                let fy = f(&y);
                evals += 1;
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx, evals)
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            _ => {}
        }
    }
    false
}

/// Multistart maximization of [`discrepancy`]. `extra_starts` (typically the
/// dataset's initial conditions) are clamped into the space and polished
/// alongside the Latin-hypercube starts.
pub fn propose_experiment(
    model_a: &FittedModel,
    model_b: &FittedModel,
    stoich: &[f64],
    space: &DesignSpace,
    extra_starts: &[Vec<f64>],
    settings: &DesignSettings,
) -> Result<DesignProposal, DesignError> {
    space.validate()?;
    if space.bounds.len() != stoich.len() {
        return Err(DesignError::Dimension { expected: stoich.len(), got: space.bounds.len() });
    }
    for s in extra_starts {
        if s.len() != stoich.len() {
            return Err(DesignError::Dimension { expected: stoich.len(), got: s.len() });
        }
    }
    let mut starts: Vec<Vec<f64>> = extra_starts.iter().map(|s| space.clamp(s)).collect();
    starts.extend(latin_hypercube(space, settings.lhs_starts, settings.seed));

    let reached = std::sync::atomic::AtomicBool::new(false);
    let objective = |x: &[f64]| {
        let d = discrepancy_detail(model_a, model_b, stoich, x, space).expect("dimension checked");
        if d.nodes >= 2 {
            reached.store(true, std::sync::atomic::Ordering::Relaxed);
        }
        d.value
    };
    let trace: Vec<StartResult> = starts
        .par_iter()
        .map(|s| {
            let (x0, objective, _) = pattern_search(&objective, space, s.clone(), settings);
            StartResult { start: s.clone(), x0, objective }
        })
        .collect();
    if !reached.load(std::sync::atomic::Ordering::Relaxed) {
        return Err(DesignError::NoProposal);
    }

    let mut best = &trace[0];
    for r in &trace[1..] {
        if r.objective > best.objective || (r.objective == best.objective && lex_less(&r.x0, &best.x0)) {
            best = r;
        }
    }
    let degenerate = best.objective <= 0.0;
    let x0 = if degenerate { trace[0].start.clone() } else { best.x0.clone() };
    Ok(DesignProposal { x0, objective: best.objective.max(0.0), degenerate, trace })
}
