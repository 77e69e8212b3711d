//! Discovery iterations and the experiment-design loop around them.

mod family;
mod report;

pub use family::{match_family, FamilyMatch};
pub use report::{iteration_report, profiles_csv, rates_csv, response_csv};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimate::{FitBudget, FittedModel, ProfileProblem, StrongProblem, WeakProblem};
use crate::expr::{Expr, ExprGrammar};
use crate::gpsearch::{self, FitnessKind, GpConfig, GpError};
use crate::mbdoe::{self, DesignError, DesignProposal, DesignSettings, DesignSpace};
use crate::rng::derive_seed;
use crate::select::{rank, CriterionKind};
use crate::simulate::{simulate_experiment, Dataset, Experiment, IntegratorSettings, NoiseSpec, ReactionSystem, SimulateError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dataset has no experiments")]
    EmptyDataset,
    #[error("{0}")]
    Invalid(String),
    #[error("no candidate model could be fitted")]
    NoModels,
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "adok-s")]
    AdokS,
    #[serde(rename = "adok-w")]
    AdokW,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::AdokS => "adok-s",
            Method::AdokW => "adok-w",
        }
    }
}

/// How species derivatives become rate estimates in ADoK-S.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatePolicy {
    /// Average of `(dC_s/dt)/ν_s` over every species with `ν_s ≠ 0`.
    #[default]
    Pooled,
    /// `(dC_s/dt)/ν_s` of the named species only.
    Reference(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodConfig {
    #[serde(deserialize_with = "gpsearch::preset::profile")]
    pub profile_gp: GpConfig,
    #[serde(deserialize_with = "gpsearch::preset::strong")]
    pub strong_gp: GpConfig,
    #[serde(deserialize_with = "gpsearch::preset::weak")]
    pub weak_gp: GpConfig,
    pub fit: FitBudget,
    pub rate_policy: RatePolicy,
    /// Integrator tolerances used inside weak fitting.
    pub integrator: IntegratorSettings,
    pub seed: u64,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            profile_gp: GpConfig::profile(),
            strong_gp: GpConfig::strong(),
            weak_gp: GpConfig::weak(),
            fit: FitBudget::default(),
            rate_policy: RatePolicy::default(),
            integrator: IntegratorSettings::fitting(),
            seed: 0,
        }
    }
}

/// Rate estimates pooled over experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimates {
    pub experiment: Vec<usize>,
    pub times: Vec<f64>,
    /// Smoothed concentrations at each instant.
    pub states: Vec<Vec<f64>>,
    pub rates: Vec<f64>,
}

impl RateEstimates {
    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Root-mean-square error of the estimates per experiment against a
    /// known rate law. Experiments with no estimates get NaN.
    pub fn error_by_experiment(&self, truth: &ReactionSystem, n_experiments: usize) -> Vec<f64> {
        let mut sum = vec![0.0; n_experiments];
        let mut count = vec![0usize; n_experiments];
        for i in 0..self.len() {
            let e = self.experiment[i];
            let d = self.rates[i] - truth.rate_at(&self.states[i]);
            sum[e] += d * d;
            count[e] += 1;
        }
        sum.iter().zip(&count).map(|(s, &c)| if c == 0 { f64::NAN } else { (s / c as f64).sqrt() }).collect()
    }
}

/// How well the selected rate law, integrated from each experiment's first
/// measurement, reproduces the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rss: f64,
    /// Over every measured value after the first row of each experiment.
    pub rmse: f64,
    /// `rmse / σ` when the noise level is known.
    pub relative_rmse: Option<f64>,
    pub rmse_by_experiment: Vec<f64>,
    pub integrated: bool,
}

impl Diagnostics {
    pub fn compute(model: &FittedModel, stoich: &[f64], dataset: &Dataset, noise_std: Option<f64>) -> Self {
        let problem = WeakProblem::new(stoich.to_vec(), dataset.clone(), IntegratorSettings::default());
        let program = model.template.compile();
        let Some(pred) = problem.predict(&program, &model.theta) else {
            return Self {
                rss: f64::INFINITY,
                rmse: f64::INFINITY,
                relative_rmse: noise_std.map(|_| f64::INFINITY),
                rmse_by_experiment: vec![f64::INFINITY; dataset.experiments.len()],
                integrated: false,
            };
        };
        let mut rss = 0.0;
        let mut count = 0usize;
        let mut by_exp = Vec::with_capacity(pred.len());
        for (e, p) in dataset.experiments.iter().zip(&pred) {
            let mut r = 0.0;
            let mut c = 0usize;
            for (i, row) in p.iter().enumerate().skip(1) {
                for (s, v) in row.iter().enumerate() {
                    let d = v - e.values[[i, s]];
                    r += d * d;
                    c += 1;
                }
            }
            by_exp.push(if c == 0 { 0.0 } else { (r / c as f64).sqrt() });
            rss += r;
            count += c;
        }
        let rmse = if count == 0 { 0.0 } else { (rss / count as f64).sqrt() };
        Self {
            rss,
            rmse,
            relative_rmse: noise_std.filter(|s| *s > 0.0).map(|s| rmse / s),
            rmse_by_experiment: by_exp,
            integrated: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationResult {
    pub method: Method,
    pub best: FittedModel,
    pub runner_up: Option<FittedModel>,
    /// Every fitted finalist, best first by AIC.
    pub finalists: Vec<FittedModel>,
    /// `profiles[e][s]`, ADoK-S only.
    pub profiles: Option<Vec<Vec<Option<FittedModel>>>>,
    pub rate_estimates: Option<RateEstimates>,
    pub diagnostics: Diagnostics,
    pub n_experiments: usize,
    pub n_rows: usize,
}

fn check_dataset(dataset: &Dataset, stoich: &[f64]) -> Result<(), PipelineError> {
    if dataset.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    if stoich.len() != dataset.n_species() {
        return Err(PipelineError::Invalid(format!(
            "{} stoichiometric coefficients for {} species",
            stoich.len(),
            dataset.n_species()
        )));
    }
    if stoich.iter().all(|v| *v == 0.0) {
        return Err(PipelineError::Invalid("all stoichiometric coefficients are zero".into()));
    }
    Ok(())
}

/// Sorts finalists by AIC and splits off the best two.
fn select(mut finalists: Vec<FittedModel>) -> Result<(FittedModel, Option<FittedModel>, Vec<FittedModel>), PipelineError> {
    if finalists.is_empty() {
        return Err(PipelineError::NoModels);
    }
    let order = rank(&finalists, CriterionKind::Aic).expect("nonempty");
    let mut slots: Vec<Option<FittedModel>> = finalists.drain(..).map(Some).collect();
    let sorted: Vec<FittedModel> = order.iter().map(|&i| slots[i].take().expect("permutation")).collect();
    Ok((sorted[0].clone(), sorted.get(1).cloned(), sorted))
}

/// Runs a GP search plus finalist estimation and returns the finalists.
fn search_and_fit(
    grammar: &ExprGrammar,
    fitness: &FitnessKind,
    gp: &GpConfig,
    fit: &FitBudget,
    injected: &[Expr],
) -> Result<Vec<FittedModel>, PipelineError> {
    let run = gpsearch::evolve_seeded(grammar, fitness, gp, injected)?;
    Ok(gpsearch::finalists(&run.hall_of_fame, fitness, fit))
}

/// Selected concentration profile for one species series.
pub fn fit_profile_model(
    times: &[f64],
    values: &[f64],
    gp: &GpConfig,
    fit: &FitBudget,
) -> Result<FittedModel, PipelineError> {
    let grammar = ExprGrammar::profile(gp.complexity_cap);
    let fitness = FitnessKind::Profile(ProfileProblem::new(times.to_vec(), values.to_vec()));
    let finalists = search_and_fit(&grammar, &fitness, gp, fit, &[])?;
    let (smooth, rough): (Vec<_>, Vec<_>) = finalists.into_iter().partition(|m| resolvable(m, times, values));
    if smooth.is_empty() {
        log::warn!("no profile candidate is resolvable at the sampling rate, keeping the best rough one");
        return select(rough).map(|(best, _, _)| best);
    }
    select(smooth).map(|(best, _, _)| best)
}

/// True if the profile and its slope are finite between samples and the slope
/// never exceeds the data range per sampling interval.
pub fn resolvable(model: &FittedModel, times: &[f64], values: &[f64]) -> bool {
    const SUBSTEPS: usize = 16;
    if times.len() < 2 {
        return true;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spacing = times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if !(spacing > 0.0) {
        return true;
    }
    let max_slope = (hi - lo).max(f64::EPSILON) / spacing;
    let deriv = model.expr().differentiate(0);
    times.windows(2).all(|w| {
        (0..=SUBSTEPS).all(|k| {
            let t = w[0] + (w[1] - w[0]) * k as f64 / SUBSTEPS as f64;
            let d = deriv.evaluate(&[t]);
            model.evaluate(&[t]).is_finite() && d.is_finite() && d.abs() <= max_slope
        })
    })
}

/// Differentiates selected profiles and turns species derivatives into rate
/// estimates at every sampling instant.
pub fn estimate_rates(
    dataset: &Dataset,
    stoich: &[f64],
    profiles: &[Vec<Option<FittedModel>>],
    policy: &RatePolicy,
) -> Result<RateEstimates, PipelineError> {
    let reference = match policy {
        RatePolicy::Pooled => None,
        RatePolicy::Reference(name) => {
            let s = dataset
                .species
                .iter()
                .position(|x| x == name)
                .ok_or_else(|| PipelineError::Invalid(format!("unknown reference species {name:?}")))?;
            if stoich[s] == 0.0 {
                return Err(PipelineError::Invalid(format!("reference species {name:?} does not react")));
            }
            Some(s)
        }
    };
    let mut out = RateEstimates { experiment: vec![], times: vec![], states: vec![], rates: vec![] };
    for (e, (data, prof)) in dataset.experiments.iter().zip(profiles).enumerate() {
        let derivs: Vec<Option<Expr>> = prof.iter().map(|p| p.as_ref().map(|m| m.expr().differentiate(0))).collect();
        let contributing: Vec<usize> = match reference {
            Some(s) => vec![s],
            None => (0..stoich.len()).filter(|&s| stoich[s] != 0.0).collect(),
        };
        let usable: Vec<usize> = contributing.iter().copied().filter(|&s| derivs[s].is_some()).collect();
        if usable.is_empty() {
            log::warn!("experiment {}: no usable profile, excluded from rate estimation", e + 1);
            continue;
        }
        for (i, &t) in data.times.iter().enumerate() {
            let state: Vec<f64> = (0..stoich.len())
                .map(|s| match &prof[s] {
                    Some(m) => m.evaluate(&[t]),
                    None => data.values[[i, s]],
                })
                .collect();
            let rate = usable
                .iter()
                .map(|&s| derivs[s].as_ref().expect("filtered").evaluate(&[t]) / stoich[s])
                .sum::<f64>()
                / usable.len() as f64;
            if !rate.is_finite() || state.iter().any(|v| !v.is_finite()) {
                continue;
            }
            out.experiment.push(e);
            out.times.push(t);
            out.states.push(state);
            out.rates.push(rate);
        }
    }
    if out.is_empty() {
        return Err(PipelineError::NoModels);
    }
    Ok(out)
}

/// One strong-formulation iteration: profiles, rate estimates, rate-law search.
pub fn adok_s_iteration(
    dataset: &Dataset,
    stoich: &[f64],
    config: &MethodConfig,
    noise_std: Option<f64>,
) -> Result<IterationResult, PipelineError> {
    check_dataset(dataset, stoich)?;
    let n_species = dataset.n_species();
    let jobs: Vec<(usize, usize)> =
        (0..dataset.experiments.len()).flat_map(|e| (0..n_species).map(move |s| (e, s))).collect();
    use rayon::prelude::*;
    let fitted: Vec<Option<FittedModel>> = jobs
        .par_iter()
        .map(|&(e, s)| {
            let data = &dataset.experiments[e];
            let gp = config.profile_gp.clone().with_seed(derive_seed(config.seed, &[1, e as u64, s as u64]));
            let fit = config.fit.clone().with_seed(derive_seed(config.seed, &[2, e as u64, s as u64]));
            match fit_profile_model(&data.times, &data.species_series(s), &gp, &fit) {
                Ok(m) => Some(m),
                Err(err) => {
                    log::warn!("experiment {}, species {}: no profile ({err})", e + 1, dataset.species[s]);
                    None
                }
            }
        })
        .collect();
    let mut profiles: Vec<Vec<Option<FittedModel>>> = vec![Vec::with_capacity(n_species); dataset.experiments.len()];
    for ((e, _), m) in jobs.iter().zip(fitted) {
        profiles[*e].push(m);
    }
    let estimates = estimate_rates(dataset, stoich, &profiles, &config.rate_policy)?;

    let grammar = ExprGrammar::rate(&dataset.species, config.strong_gp.complexity_cap)
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    let fitness = FitnessKind::Strong(StrongProblem::new(
        dataset.species.clone(),
        estimates.states.clone(),
        estimates.rates.clone(),
    ));
    let gp = config.strong_gp.clone().with_seed(derive_seed(config.seed, &[3]));
    let fit = config.fit.clone().with_seed(derive_seed(config.seed, &[4]));
    let finalists = search_and_fit(&grammar, &fitness, &gp, &fit, &[])?;
    let (best, runner_up, finalists) = select(finalists)?;
    let diagnostics = Diagnostics::compute(&best, stoich, dataset, noise_std);
    Ok(IterationResult {
        method: Method::AdokS,
        best,
        runner_up,
        finalists,
        profiles: Some(profiles),
        rate_estimates: Some(estimates),
        diagnostics,
        n_experiments: dataset.experiments.len(),
        n_rows: dataset.total_samples(),
    })
}

/// One weak-formulation iteration: rate-law search scored by integration.
pub fn adok_w_iteration(
    dataset: &Dataset,
    stoich: &[f64],
    config: &MethodConfig,
    noise_std: Option<f64>,
) -> Result<IterationResult, PipelineError> {
    adok_w_iteration_seeded(dataset, stoich, config, noise_std, &[])
}

/// As [`adok_w_iteration`], with `injected` expressions in the initial population.
pub fn adok_w_iteration_seeded(
    dataset: &Dataset,
    stoich: &[f64],
    config: &MethodConfig,
    noise_std: Option<f64>,
    injected: &[Expr],
) -> Result<IterationResult, PipelineError> {
    check_dataset(dataset, stoich)?;
    let grammar = ExprGrammar::rate(&dataset.species, config.weak_gp.complexity_cap)
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    let problem = WeakProblem::new(stoich.to_vec(), dataset.clone(), config.integrator);
    let fitness = FitnessKind::Weak(problem);
    let gp = config.weak_gp.clone().with_seed(derive_seed(config.seed, &[5]));
    let fit = config.fit.clone().with_seed(derive_seed(config.seed, &[6]));
    let finalists = search_and_fit(&grammar, &fitness, &gp, &fit, injected)?;
    let (best, runner_up, finalists) = select(finalists)?;
    let diagnostics = Diagnostics::compute(&best, stoich, dataset, noise_std);
    Ok(IterationResult {
        method: Method::AdokW,
        best,
        runner_up,
        finalists,
        profiles: None,
        rate_estimates: None,
        diagnostics,
        n_experiments: dataset.experiments.len(),
        n_rows: dataset.total_samples(),
    })
}

pub fn run_iteration(
    method: Method,
    dataset: &Dataset,
    stoich: &[f64],
    config: &MethodConfig,
    noise_std: Option<f64>,
) -> Result<IterationResult, PipelineError> {
    match method {
        Method::AdokS => adok_s_iteration(dataset, stoich, config, noise_std),
        Method::AdokW => adok_w_iteration(dataset, stoich, config, noise_std),
    }
}

/// Ground truth that runs proposed experiments.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub system: ReactionSystem,
    pub noise: NoiseSpec,
    /// Noise seed. New experiments draw from the stream of their dataset index.
    pub seed: u64,
    pub n_samples: usize,
}

impl Simulator {
    pub fn run(&self, x0: &[f64], window: (f64, f64), index: usize) -> Result<crate::simulate::ExperimentData, SimulateError> {
        let exp = Experiment::new(x0.to_vec(), window, self.n_samples)?;
        simulate_experiment(&self.system, &exp, &self.noise, self.seed, index)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub max_iterations: usize,
    /// Stop once the selected model's `rmse / σ` is at or below this.
    pub accept_threshold: f64,
    /// Noise level used for the relative RMSE; taken from the dataset if absent.
    pub noise_std: Option<f64>,
    pub design: DesignSettings,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self { max_iterations: 3, accept_threshold: 1.5, noise_std: None, design: DesignSettings::default() }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.max_iterations < 1 {
            return Err(PipelineError::Invalid("max_iterations must be at least 1".into()));
        }
        if !(self.accept_threshold >= 0.0) {
            return Err(PipelineError::Invalid("accept_threshold must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopStep {
    pub iteration: IterationResult,
    pub proposal: Option<DesignProposal>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopHistory {
    pub steps: Vec<LoopStep>,
    pub accepted: bool,
    /// The dataset after every appended experiment.
    pub dataset: Dataset,
}

impl LoopHistory {
    pub fn last(&self) -> &IterationResult {
        &self.steps.last().expect("at least one iteration").iteration
    }
}

fn accepts(diag: &Diagnostics, threshold: f64) -> bool {
    if threshold == f64::INFINITY {
        return true;
    }
    matches!(diag.relative_rmse, Some(r) if r <= threshold)
}

/// Iterates discovery, appending one designed experiment per round until the
/// selected model is accepted or the iteration budget runs out.
pub fn run_loop(
    simulator: Option<&Simulator>,
    dataset: Dataset,
    stoich: &[f64],
    method: Method,
    config: &MethodConfig,
    loop_config: &LoopConfig,
    space: &DesignSpace,
) -> Result<LoopHistory, PipelineError> {
    loop_config.validate()?;
    let noise_std = loop_config.noise_std.or(dataset.provenance.as_ref().map(|p| p.std_dev));
    let mut dataset = dataset;
    let mut steps = Vec::new();
    for k in 0..loop_config.max_iterations {
        let cfg = MethodConfig { seed: derive_seed(config.seed, &[k as u64]), ..config.clone() };
        let iteration = run_iteration(method, &dataset, stoich, &cfg, noise_std)?;
        let last = k + 1 == loop_config.max_iterations;
        if accepts(&iteration.diagnostics, loop_config.accept_threshold) {
            steps.push(LoopStep { iteration, proposal: None });
            return Ok(LoopHistory { steps, accepted: true, dataset });
        }
        let (Some(sim), Some(runner_up), false) = (simulator, iteration.runner_up.as_ref(), last) else {
            if !last {
                log::warn!("stopping after iteration {}: no simulator or no runner-up model", k + 1);
            }
            steps.push(LoopStep { iteration, proposal: None });
            break;
        };
        let ics: Vec<Vec<f64>> = dataset.experiments.iter().map(|e| e.experiment.initial.clone()).collect();
        let design = DesignSettings { seed: derive_seed(loop_config.design.seed, &[k as u64]), ..loop_config.design };
        let proposal = mbdoe::propose_experiment(&iteration.best, runner_up, stoich, space, &ics, &design)?;
        let index = dataset.experiments.len();
        let data = sim.run(&proposal.x0, space.window, index)?;
        dataset.push(data);
        steps.push(LoopStep { iteration, proposal: Some(proposal) });
    }
    Ok(LoopHistory { steps, accepted: false, dataset })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_with_variables, ParamTemplate};
    use crate::simulate::{generate_dataset, make_case_study};

    fn decay_dataset() -> (Dataset, Vec<f64>) {
        let system = ReactionSystem::new(
            "decay",
            vec!["C".into(), "D".into()],
            vec![-1.0, 1.0],
            ParamTemplate::extract(&parse_with_variables("C", &["C", "D"]).unwrap()),
            vec![],
        )
        .unwrap();
        let exps = vec![Experiment::new(vec![2.0, 0.0], (0.0, 4.0), 30).unwrap()];
        (generate_dataset(&system, &exps, &NoiseSpec { std_dev: 0.0 }, 0).unwrap(), vec![-1.0, 1.0])
    }

    fn tiny() -> MethodConfig {
        let gp = |cap| GpConfig { population: 80, generations: 8, complexity_cap: cap, ..GpConfig::strong() };
        MethodConfig {
            profile_gp: gp(7),
            strong_gp: gp(5),
            weak_gp: gp(5),
            fit: FitBudget { global_evals: 400, local_max_iters: 60, restarts: 1, ..FitBudget::default() },
            ..MethodConfig::default()
        }
    }

    #[test]
    fn exact_profile_gives_exact_rates() {
        let (data, stoich) = decay_dataset();
        let prof = parse_with_variables("2*exp((-1)*t)", &["t"]).unwrap();
        let m = FittedModel::from_parts(ParamTemplate::extract(&prof), prof.constants(), vec!["t".into()]);
        let est = estimate_rates(&data, &stoich, &[vec![Some(m), None]], &RatePolicy::Pooled).unwrap();
        assert_eq!(est.len(), 30);
        for (s, r) in est.states.iter().zip(&est.rates) {
            assert!((r - s[0]).abs() < 1e-12 * (1.0 + s[0]));
        }
    }

    #[test]
    fn decay_profile_rates_within_one_percent() {
        let (data, stoich) = decay_dataset();
        let cfg = tiny();
        let m = fit_profile_model(&data.experiments[0].times, &data.experiments[0].species_series(0), &cfg.profile_gp, &cfg.fit)
            .unwrap();
        let est = estimate_rates(&data, &stoich, &[vec![Some(m), None]], &RatePolicy::Pooled).unwrap();
        for (s, r) in est.states.iter().zip(&est.rates) {
            assert!((r - s[0]).abs() <= 0.01 * s[0].abs().max(0.05), "{r} vs {}", s[0]);
        }
    }

    #[test]
    fn spiky_profiles_are_not_resolvable() {
        let times: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| 2.0 * (-0.3 * t).exp()).collect();
        let model = |src: &str| {
            let e = parse_with_variables(src, &["t"]).unwrap();
            FittedModel::from_parts(ParamTemplate::extract(&e), e.constants(), vec!["t".into()])
        };
        assert!(resolvable(&model("2*exp((-0.3)*t)"), &times, &values));
        assert!(!resolvable(&model("2*exp((-0.3)*t)+0.001/(t-4.5)"), &times, &values));
        assert!(!resolvable(&model("2*exp((-0.3)*t)-0.5/(1+100*(t-3)*(t-3))"), &times, &values));
    }

    #[test]
    fn reference_policy_checks_species() {
        let (data, stoich) = decay_dataset();
        let r = estimate_rates(&data, &stoich, &[vec![None, None]], &RatePolicy::Reference("X".into()));
        assert!(matches!(r, Err(PipelineError::Invalid(_))));
        let r = estimate_rates(&data, &stoich, &[vec![None, None]], &RatePolicy::Pooled);
        assert!(matches!(r, Err(PipelineError::NoModels)));
    }

    #[test]
    fn empty_dataset_rejected() {
        let (mut data, stoich) = decay_dataset();
        data.experiments.clear();
        assert!(matches!(adok_w_iteration(&data, &stoich, &tiny(), None), Err(PipelineError::EmptyDataset)));
        assert!(matches!(adok_s_iteration(&data, &stoich, &tiny(), None), Err(PipelineError::EmptyDataset)));
    }

    #[test]
    fn weak_iteration_selects_min_aic() {
        let (data, stoich) = decay_dataset();
        let r = adok_w_iteration(&data, &stoich, &tiny(), Some(0.2)).unwrap();
        for f in &r.finalists {
            assert!(r.best.criteria.aic <= f.criteria.aic);
        }
        if let Some(ru) = &r.runner_up {
            assert!(r.best.criteria.aic <= ru.criteria.aic);
        }
        assert!(r.diagnostics.rmse < 0.05, "{:?}", r.diagnostics);
    }

    #[test]
    fn infinite_threshold_stops_after_one() {
        let cs = make_case_study("isomerization").unwrap();
        let data = generate_dataset(&cs.system, &cs.experiments[..2], &cs.noise, 1).unwrap();
        let sim = Simulator { system: cs.system.clone(), noise: cs.noise, seed: 1, n_samples: 30 };
        let lc = LoopConfig { max_iterations: 3, accept_threshold: f64::INFINITY, ..LoopConfig::default() };
        let h = run_loop(Some(&sim), data, &cs.system.stoich, Method::AdokW, &tiny(), &lc, &DesignSpace::for_case_study(&cs))
            .unwrap();
        assert_eq!(h.steps.len(), 1);
        assert!(h.accepted);
    }

    #[test]
    fn loop_appends_designed_experiments() {
        let cs = make_case_study("isomerization").unwrap();
        let data = generate_dataset(&cs.system, &cs.experiments[..2], &cs.noise, 1).unwrap();
        let sim = Simulator { system: cs.system.clone(), noise: cs.noise, seed: 1, n_samples: 30 };
        let lc = LoopConfig {
            max_iterations: 2,
            accept_threshold: 0.0,
            design: DesignSettings { lhs_starts: 4, max_evals_per_start: 20, ..DesignSettings::default() },
            ..LoopConfig::default()
        };
        let h = run_loop(Some(&sim), data, &cs.system.stoich, Method::AdokW, &tiny(), &lc, &DesignSpace::for_case_study(&cs))
            .unwrap();
        assert_eq!(h.steps.len(), 2);
        assert!(h.steps[0].proposal.is_some());
        assert!(h.steps[1].proposal.is_none());
        assert!(h.steps[1].iteration.n_rows > h.steps[0].iteration.n_rows);
        assert_eq!(h.dataset.experiments.len(), 3);
        assert_eq!(h.dataset.experiments[2].experiment.initial, h.steps[0].proposal.as_ref().unwrap().x0);
    }
}
