//! Loss, likelihood and two-stage parameter estimation.
//!
//! [`fit`] runs an artificial-bee-colony search over a box followed by BFGS
//! refinement (central-difference gradients) from the best colony member and
//! a few further elites. The typed entry points [`fit_profile`],
//! [`fit_rate_strong`] and [`fit_rate_weak`] wrap it for the three kinds of
//! model fit and return a scored [`FittedModel`].

mod abc;
pub(crate) mod local;
mod problem;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use problem::{FitKind, ProfileProblem, Problem, StrongProblem, WeakProblem};

use crate::expr::{Expr, ParamTemplate};
use crate::rng::substream;
use crate::select::Criteria;
use crate::simulate::{Dataset, IntegratorSettings};

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("model could not be evaluated at any parameter vector")]
    Unfittable,
}

/// Evaluation limits and seed for one call to [`fit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitBudget {
    pub global_evals: usize,
    pub local_max_iters: usize,
    pub restarts: usize,
    /// Minimum colony size; the colony grows to `10·d` for larger templates.
    pub population: usize,
    pub seed: u64,
}

impl Default for FitBudget {
    fn default() -> Self {
        Self { global_evals: 5000, local_max_iters: 200, restarts: 3, population: 40, seed: 0 }
    }
}

impl FitBudget {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Result of [`fit`].
#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub theta: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// `(evaluation index, best objective so far)` after each improvement.
    pub trace: Vec<(usize, f64)>,
}

impl FitOutcome {
    pub fn trace_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .trace
            .iter()
            .map(|(i, v)| vec![i.to_string(), crate::io::fmt_sig(*v, 12)])
            .collect();
        crate::io::csv_string(&["evaluation", "best_objective"], &rows)
    }
}

pub const DEFAULT_INIT_BOX: (f64, f64) = (-10.0, 10.0);

/// Minimizes `objective` over `init_box.len()` parameters.
///
/// `starts` are extra initial points for the colony. The objective must
/// return `+∞` (or NaN) where the model is invalid.
pub fn fit<F>(
    objective: F,
    init_box: &[(f64, f64)],
    budget: &FitBudget,
    starts: &[Vec<f64>],
) -> Result<FitOutcome, EstimateError>
where
    F: Fn(&[f64]) -> f64,
{
    let dim = init_box.len();
    let clean = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    if dim == 0 {
        let v = clean(objective(&[]));
        if !v.is_finite() {
            return Err(EstimateError::Unfittable);
        }
        return Ok(FitOutcome { theta: vec![], value: v, evaluations: 1, trace: vec![(1, v)] });
    }

    let mut rng = substream(budget.seed, &[0xABC]);
    let colony_size = budget.population.max(10 * dim).min((budget.global_evals / 2).max(2));
    let colony = abc::search(&objective, init_box, colony_size, budget.global_evals.max(colony_size), starts, &mut rng);
    let mut evaluations = colony.evaluations;
    let mut trace = colony.trace.clone();

    // best colony point first, then distinct elites
    let mut order: Vec<usize> = (0..colony.sources.len()).filter(|&i| colony.values[i].is_finite()).collect();
    order.sort_by(|&a, &b| colony.values[a].total_cmp(&colony.values[b]).then(a.cmp(&b)));
    let mut seeds: Vec<(Vec<f64>, f64)> = Vec::new();
    if colony.best.1.is_finite() {
        seeds.push(colony.best.clone());
    }
    for i in order {
        if seeds.len() > budget.restarts {
            break;
        }
        let candidate = &colony.sources[i];
        let distinct = seeds.iter().all(|(s, _)| {
            s.iter().zip(candidate).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs()))
        });
        if distinct {
            seeds.push((candidate.clone(), colony.values[i]));
        }
    }
    if seeds.is_empty() {
        return Err(EstimateError::Unfittable);
    }

    let local_evals = budget.local_max_iters * (2 * dim + 12);
    let mut best = seeds[0].clone();
    for (x0, f0) in &seeds {
        let r = local::bfgs(&objective, x0, *f0, budget.local_max_iters, local_evals);
        evaluations += r.evaluations;
        if r.value < best.1 {
            best = (r.x, r.value);
            trace.push((evaluations, best.1));
        }
    }
    Ok(FitOutcome { theta: best.0, value: best.1, evaluations, trace })
}

/// Sum of squared differences over all entries; any non-finite prediction
/// yields `+∞`.
pub fn rss(predicted: &[Vec<f64>], observed: &[Vec<f64>]) -> Result<f64, EstimateError> {
    if predicted.len() != observed.len() || predicted.iter().zip(observed).any(|(p, o)| p.len() != o.len()) {
        return Err(EstimateError::Shape("predicted and observed differ in shape".into()));
    }
    let mut s = 0.0;
    for (p, o) in predicted.iter().flatten().zip(observed.iter().flatten()) {
        if !p.is_finite() {
            return Ok(f64::INFINITY);
        }
        s += (p - o) * (p - o);
    }
    Ok(s)
}

pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Gaussian negative log-likelihood with the variance of each block set to
/// its maximum-likelihood value `RSS_s / n`:
/// `Σ_s n/2 · ln(2π σ̂²_s) + n/2`.
pub fn nll(block_rss: &[f64], n: usize) -> f64 {
    let nf = n as f64;
    block_rss
        .iter()
        .map(|r| {
            let var = (r / nf).max(VARIANCE_FLOOR);
            0.5 * nf * (2.0 * std::f64::consts::PI * var).ln() + 0.5 * nf
        })
        .sum()
}

/// A template with optimized parameters and its goodness-of-fit scores.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedModel {
    pub template: ParamTemplate,
    pub theta: Vec<f64>,
    pub variables: Vec<String>,
    pub rss: f64,
    pub block_rss: Vec<f64>,
    pub nll: f64,
    pub n: usize,
    pub criteria: Criteria,
    pub kind: FitKind,
}

impl FittedModel {
    /// A model with given parameters and no data behind it. Scores are NaN.
    pub fn from_parts(template: ParamTemplate, theta: Vec<f64>, variables: Vec<String>) -> Self {
        assert_eq!(template.dim(), theta.len(), "theta length must match template");
        Self {
            template,
            theta,
            variables,
            rss: f64::NAN,
            block_rss: Vec::new(),
            nll: f64::NAN,
            n: 0,
            criteria: Criteria { aic: f64::NAN, aicc: None, hqc: f64::NAN, bic: f64::NAN },
            kind: FitKind::Weak,
        }
    }

    pub fn dim(&self) -> usize {
        self.template.dim()
    }

    pub fn expr(&self) -> Expr {
        self.template.substitute(&self.theta).expect("theta matches template")
    }

    /// Canonical text of the fitted expression.
    pub fn expression(&self) -> String {
        crate::expr::format(&self.expr(), &self.variables)
    }

    /// Canonical text of the structure with `p1, p2, ...` slots.
    pub fn structure(&self) -> String {
        crate::expr::format(self.template.skeleton(), &self.variables)
    }

    pub fn evaluate(&self, vars: &[f64]) -> f64 {
        self.template.evaluate(vars, &self.theta)
    }

    /// Rescores an already-optimized parameter vector.
    pub fn score<P: Problem + ?Sized>(
        problem: &P,
        template: &ParamTemplate,
        theta: Vec<f64>,
    ) -> Result<Self, EstimateError> {
        let program = template.compile();
        let blocks = problem.block_rss(&program, &theta).ok_or(EstimateError::Unfittable)?;
        let n = problem.n_samples();
        let nll = nll(&blocks, n);
        Ok(Self {
            template: template.clone(),
            theta,
            variables: problem.variables().to_vec(),
            rss: blocks.iter().sum(),
            block_rss: blocks,
            nll,
            n,
            criteria: Criteria::compute(nll, template.dim(), n),
            kind: problem.kind(),
        })
    }
}

/// Optimizes `template` against `problem` and scores the result.
pub fn fit_template<P: Problem + ?Sized>(
    problem: &P,
    template: &ParamTemplate,
    budget: &FitBudget,
    starts: &[Vec<f64>],
) -> Result<FittedModel, EstimateError> {
    let program = template.compile();
    let objective = |theta: &[f64]| problem.rss(&program, theta);
    let init_box = vec![DEFAULT_INIT_BOX; template.dim()];
    let outcome = fit(objective, &init_box, budget, starts)?;
    if !outcome.value.is_finite() {
        return Err(EstimateError::Unfittable);
    }
    FittedModel::score(problem, template, outcome.theta)
}

/// Fits a function of time to one species' concentration series.
pub fn fit_profile(
    template: &ParamTemplate,
    times: &[f64],
    values: &[f64],
    budget: &FitBudget,
) -> Result<FittedModel, EstimateError> {
    if times.len() != values.len() || times.is_empty() {
        return Err(EstimateError::Shape(format!("{} times, {} values", times.len(), values.len())));
    }
    fit_template(&ProfileProblem::new(times.to_vec(), values.to_vec()), template, budget, &[])
}

/// Fits a rate law to rate targets at known concentrations, pooled over
/// experiments.
pub fn fit_rate_strong(
    template: &ParamTemplate,
    species: &[String],
    states: &[Vec<f64>],
    targets: &[f64],
    budget: &FitBudget,
) -> Result<FittedModel, EstimateError> {
    if states.len() != targets.len() || states.is_empty() {
        return Err(EstimateError::Shape(format!("{} states, {} targets", states.len(), targets.len())));
    }
    if states.iter().any(|s| s.len() != species.len()) {
        return Err(EstimateError::Shape("state width differs from species count".into()));
    }
    let problem = StrongProblem::new(species.to_vec(), states.to_vec(), targets.to_vec());
    fit_template(&problem, template, budget, &[])
}

/// Fits a rate law by integrating `dC/dt = stoich · r(C)` from each
/// experiment's first measurement and comparing whole trajectories.
pub fn fit_rate_weak(
    template: &ParamTemplate,
    stoich: &[f64],
    dataset: &Dataset,
    settings: &IntegratorSettings,
    budget: &FitBudget,
) -> Result<FittedModel, EstimateError> {
    if stoich.len() != dataset.n_species() {
        return Err(EstimateError::Shape(format!(
            "{} stoichiometric coefficients for {} species",
            stoich.len(),
            dataset.n_species()
        )));
    }
    if dataset.is_empty() {
        return Err(EstimateError::Shape("dataset has no experiments".into()));
    }
    let problem = WeakProblem::new(stoich.to_vec(), dataset.clone(), *settings);
    fit_template(&problem, template, budget, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ExprGrammar;

    #[test]
    fn rss_contract() {
        let a = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(rss(&a, &a).unwrap(), 0.0);
        let b = vec![vec![2.0, 3.0], vec![4.0, 5.0]];
        assert_eq!(rss(&b, &a).unwrap(), 4.0);
        let c = vec![vec![f64::NAN, 3.0], vec![4.0, 5.0]];
        assert_eq!(rss(&c, &a).unwrap(), f64::INFINITY);
        assert!(rss(&a[..1], &a).is_err());
    }

    #[test]
    fn nll_values() {
        let v = nll(&[4.0], 4);
        assert!((v - (2.0 * (2.0 * std::f64::consts::PI).ln() + 2.0)).abs() < 1e-12);
        assert!((v - 5.675754).abs() < 1e-6);
        let floor = nll(&[0.0], 4);
        assert!(floor.is_finite() && floor < -40.0);
        assert_eq!(nll(&[4.0, 4.0], 4), 2.0 * v);
    }

    #[test]
    fn quadratic_minimum() {
        let out = fit(|x: &[f64]| (x[0] - 3.0).powi(2), &[(-10.0, 10.0)], &FitBudget::default(), &[]).unwrap();
        assert!((out.theta[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn zero_dimensional_fit() {
        let out = fit(|_: &[f64]| 2.5, &[], &FitBudget::default(), &[]).unwrap();
        assert!(out.theta.is_empty());
        assert_eq!(out.value, 2.5);
        assert_eq!(out.evaluations, 1);
    }

    #[test]
    fn all_infinite_is_unfittable() {
        let err = fit(|_: &[f64]| f64::INFINITY, &[(-1.0, 1.0)], &FitBudget::default(), &[]).unwrap_err();
        assert_eq!(err, EstimateError::Unfittable);
    }

    #[test]
    fn deterministic_given_seed() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(4) + (3.0 * x[0]).sin();
        let b = FitBudget::default().with_seed(42);
        let a = fit(f, &[(-10.0, 10.0); 2], &b, &[]).unwrap();
        let c = fit(f, &[(-10.0, 10.0); 2], &b, &[]).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn profile_mean() {
        let t = ParamTemplate::extract(&Expr::Const(0.0));
        let m = fit_profile(&t, &[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0], &FitBudget::default()).unwrap();
        assert!((m.theta[0] - 2.0).abs() < 1e-6);
        assert_eq!(m.n, 3);
        assert_eq!(m.kind, FitKind::Profile);
    }

    #[test]
    fn profile_rational_decay() {
        let g = ExprGrammar::profile(15);
        let t = ParamTemplate::from_skeleton(g.parse("p1/(p2+t)").unwrap());
        let times: Vec<f64> = (0..30).map(|i| i as f64 * 10.0 / 29.0).collect();
        let values: Vec<f64> = times.iter().map(|t| 10.0 / (1.0 + t)).collect();
        let m = fit_profile(&t, &times, &values, &FitBudget::default()).unwrap();
        assert!((m.theta[0] - 10.0).abs() < 1e-3 && (m.theta[1] - 1.0).abs() < 1e-3, "{:?}", m.theta);
    }

    #[test]
    fn strong_constant_rate() {
        let species = vec!["C_A".to_string()];
        let states: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let t = ParamTemplate::extract(&Expr::Const(1.0));
        let m = fit_rate_strong(&t, &species, &states, &[0.5; 5], &FitBudget::default()).unwrap();
        assert!((m.theta[0] - 0.5).abs() < 1e-8);
        assert!(fit_rate_strong(&t, &species, &states, &[0.5; 4], &FitBudget::default()).is_err());
    }
}
