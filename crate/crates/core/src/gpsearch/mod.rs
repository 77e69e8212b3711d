//! Genetic-programming search that keeps the best expression found at each
//! complexity level.

mod ops;

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimate::{self, local, EstimateError, FitBudget, FittedModel, Problem, ProfileProblem, StrongProblem, WeakProblem};
use crate::expr::{Expr, ExprGrammar, ParamTemplate};
use crate::io::{csv_string, fmt_sig};
use crate::rng::{derive_seed, substream};

#[derive(Debug, Error, PartialEq)]
pub enum GpError {
    #[error("invalid GP configuration: {0}")]
    Config(String),
    #[error("grammar has {grammar} variables but the data provides {data}")]
    VariableMismatch { grammar: usize, data: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub p_crossover: f64,
    pub p_subtree_mutation: f64,
    pub p_point_mutation: f64,
    pub p_constant_jitter: f64,
    pub complexity_cap: usize,
    /// Upper bound on objective evaluations for the per-individual constant polish.
    pub polish_evals: usize,
    /// Tournament score is `rss · (1 + parsimony · complexity)`.
    pub parsimony: f64,
    /// Best individuals copied unchanged into the next generation.
    pub elites: usize,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self::strong()
    }
}

impl GpConfig {
    /// Concentration-profile search.
    pub fn profile() -> Self {
        Self { complexity_cap: 15, ..Self::strong() }
    }

    /// Rate-law search against estimated rates.
    pub fn strong() -> Self {
        Self {
            population: 500,
            generations: 100,
            tournament_size: 5,
            p_crossover: 0.7,
            p_subtree_mutation: 0.15,
            p_point_mutation: 0.1,
            p_constant_jitter: 0.05,
            complexity_cap: 25,
            polish_evals: 50,
            parsimony: 0.01,
            elites: 5,
            seed: 0,
        }
    }

    /// Rate-law search with ODE integration in the loop.
    pub fn weak() -> Self {
        Self { population: 200, generations: 40, ..Self::strong() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), GpError> {
        let probs = [self.p_crossover, self.p_subtree_mutation, self.p_point_mutation, self.p_constant_jitter];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(GpError::Config("probabilities must lie in [0, 1]".into()));
        }
        if probs.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(GpError::Config("operator probabilities sum to more than 1".into()));
        }
        if self.population < 2 {
            return Err(GpError::Config("population must be at least 2".into()));
        }
        if self.complexity_cap < 1 {
            return Err(GpError::Config("complexity cap must be at least 1".into()));
        }
        if self.tournament_size < 1 {
            return Err(GpError::Config("tournament size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Deserializers for partially given configs that fill the missing fields
/// from a named preset rather than from `Default`.
pub mod preset {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer};

    use super::GpConfig;

    fn overlay<'de, D: Deserializer<'de>>(d: D, base: GpConfig) -> Result<GpConfig, D::Error> {
        let patch = serde_json::Map::deserialize(d)?;
        let mut v = serde_json::to_value(base).map_err(D::Error::custom)?;
        for (k, x) in patch {
            v[k.as_str()] = x;
        }
        serde_json::from_value(v).map_err(D::Error::custom)
    }

    pub fn profile<'de, D: Deserializer<'de>>(d: D) -> Result<GpConfig, D::Error> {
        overlay(d, GpConfig::profile())
    }

    pub fn strong<'de, D: Deserializer<'de>>(d: D) -> Result<GpConfig, D::Error> {
        overlay(d, GpConfig::strong())
    }

    pub fn weak<'de, D: Deserializer<'de>>(d: D) -> Result<GpConfig, D::Error> {
        overlay(d, GpConfig::weak())
    }
}

/// The data an individual is scored against.
#[derive(Clone, Debug)]
pub enum FitnessKind {
    Profile(ProfileProblem),
    Strong(StrongProblem),
    Weak(WeakProblem),
}

impl FitnessKind {
    pub fn problem(&self) -> &dyn Problem {
        match self {
            FitnessKind::Profile(p) => p,
            FitnessKind::Strong(p) => p,
            FitnessKind::Weak(p) => p,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HofEntry {
    pub expr: Expr,
    pub fitness: f64,
}

/// Best expression seen at each exact complexity.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HallOfFame {
    entries: BTreeMap<usize, HofEntry>,
}

impl HallOfFame {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `expr` if it beats the current entry at its complexity.
    /// Non-finite fitness is never recorded.
    pub fn offer(&mut self, expr: &Expr, fitness: f64) -> bool {
        if !fitness.is_finite() {
            return false;
        }
        let k = expr.complexity();
        match self.entries.get(&k) {
            Some(e) if e.fitness <= fitness => false,
            _ => {
                self.entries.insert(k, HofEntry { expr: expr.clone(), fitness });
                true
            }
        }
    }

    pub fn get(&self, complexity: usize) -> Option<&HofEntry> {
        self.entries.get(&complexity)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &HofEntry)> {
        self.entries.iter().map(|(k, e)| (*k, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// JSON object: complexity → `{expression, fitness}`.
    pub fn to_json(&self, variables: &[String]) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .entries
            .iter()
            .map(|(k, e)| {
                (
                    k.to_string(),
                    serde_json::json!({
                        "expression": crate::expr::format(&e.expr, variables),
                        "fitness": e.fitness,
                    }),
                )
            })
            .collect();
        serde_json::Value::Object(map)
    }
}

/// Hall of fame plus the per-generation log.
#[derive(Clone, Debug, PartialEq)]
pub struct GpRun {
    pub hall_of_fame: HallOfFame,
    /// `(generation, complexity, best rss)` after each generation.
    pub log: Vec<(usize, usize, f64)>,
}

impl GpRun {
    pub fn log_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .log
            .iter()
            .map(|(g, k, f)| vec![g.to_string(), k.to_string(), fmt_sig(*f, 12)])
            .collect();
        csv_string(&["generation", "complexity", "best_rss"], &rows)
    }
}

#[derive(Clone)]
struct Individual {
    expr: Expr,
    fitness: f64,
}

/// Polishes the constants of `expr` with a few Levenberg–Marquardt steps and
/// returns the tuned tree with its RSS.
fn evaluate(expr: &Expr, problem: &dyn Problem, polish_evals: usize) -> Individual {
    let template = ParamTemplate::extract(expr);
    let program = template.compile();
    let theta0 = expr.constants();
    if template.dim() == 0 || polish_evals == 0 {
        let fitness = problem.rss(&program, &theta0);
        return Individual { expr: expr.clone(), fitness };
    }
    let residuals = |theta: &[f64], out: &mut Vec<f64>| problem.residuals(&program, theta, out);
    let r = local::levenberg_marquardt(&residuals, &theta0, polish_evals);
    if !r.value.is_finite() {
        return Individual { expr: expr.clone(), fitness: f64::INFINITY };
    }
    // weak residuals skip the (exact) first row, so rescore on the full blocks
    let fitness = problem.rss(&program, &r.x);
    let expr = template.substitute(&r.x).expect("dimension preserved");
    Individual { expr, fitness }
}

fn check_variables(grammar: &ExprGrammar, fitness: &FitnessKind) -> Result<(), GpError> {
    let data = fitness.problem().variables().len();
    if data != grammar.variables.len() {
        return Err(GpError::VariableMismatch { grammar: grammar.variables.len(), data });
    }
    Ok(())
}

/// Runs the search and returns the per-complexity hall of fame.
pub fn evolve(grammar: &ExprGrammar, fitness: &FitnessKind, config: &GpConfig) -> Result<GpRun, GpError> {
    evolve_seeded(grammar, fitness, config, &[])
}

/// As [`evolve`], with `injected` expressions placed in the initial population.
pub fn evolve_seeded(
    grammar: &ExprGrammar,
    fitness: &FitnessKind,
    config: &GpConfig,
    injected: &[Expr],
) -> Result<GpRun, GpError> {
    config.validate()?;
    check_variables(grammar, fitness)?;
    let grammar = ExprGrammar { complexity_cap: config.complexity_cap.min(grammar.complexity_cap), ..grammar.clone() };
    let problem = fitness.problem();
    let mut hof = HallOfFame::new();
    let mut log = Vec::new();

    let mut init_rng = substream(config.seed, &[0, u64::MAX]);
    let mut initial: Vec<Expr> = injected.iter().filter(|e| grammar.admits(e)).take(config.population).cloned().collect();
    let fill = config.population - initial.len();
    initial.extend(ops::ramped_half_and_half(&grammar, &mut init_rng, fill));

    let mut population: Vec<Individual> =
        initial.par_iter().map(|e| evaluate(e, problem, config.polish_evals)).collect();
    for ind in &population {
        hof.offer(&ind.expr, ind.fitness);
    }
    record(&mut log, 0, &hof);

    for generation in 1..=config.generations {
        let score = |ind: &Individual| {
            let f = if ind.fitness.is_finite() { ind.fitness } else { f64::INFINITY };
            f * (1.0 + config.parsimony * ind.expr.complexity() as f64)
        };
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| {
            score(&population[a])
                .total_cmp(&score(&population[b]))
                .then(population[a].expr.complexity().cmp(&population[b].expr.complexity()))
                .then(a.cmp(&b))
        });
        let n_elite = config.elites.min(population.len());

        let tournament = |rng: &mut ChaCha8Rng| -> usize {
            let mut best = rng.random_range(0..population.len());
            for _ in 1..config.tournament_size {
                let c = rng.random_range(0..population.len());
                if score(&population[c]) < score(&population[best]) {
                    best = c;
                }
            }
            best
        };

        // children are bred from per-slot substreams so the result does not
        // depend on evaluation order
        let children: Vec<Expr> = (n_elite..config.population)
            .map(|slot| {
                let mut rng = substream(config.seed, &[generation as u64, slot as u64]);
                let parent = &population[tournament(&mut rng)].expr;
                let roll: f64 = rng.random();
                let mut edge = config.p_crossover;
                if roll < edge {
                    let other = &population[tournament(&mut rng)].expr;
                    return ops::crossover(parent, other, grammar.complexity_cap, &mut rng)
                        .unwrap_or_else(|| parent.clone());
                }
                edge += config.p_subtree_mutation;
                if roll < edge {
                    return ops::subtree_mutation(parent, &grammar, &mut rng).unwrap_or_else(|| parent.clone());
                }
                edge += config.p_point_mutation;
                if roll < edge {
                    return ops::point_mutation(parent, &grammar, &mut rng);
                }
                edge += config.p_constant_jitter;
                if roll < edge {
                    return ops::jitter_constants(parent, &mut rng);
                }
                parent.clone()
            })
            .collect();

        let evaluated: Vec<Individual> =
            children.par_iter().map(|e| evaluate(e, problem, config.polish_evals)).collect();
        let mut next: Vec<Individual> = order[..n_elite].iter().map(|&i| population[i].clone()).collect();
        for ind in evaluated {
            hof.offer(&ind.expr, ind.fitness);
            next.push(ind);
        }
        population = next;
        record(&mut log, generation, &hof);
    }
    Ok(GpRun { hall_of_fame: hof, log })
}

fn record(log: &mut Vec<(usize, usize, f64)>, generation: usize, hof: &HallOfFame) {
    for (k, e) in hof.iter() {
        log.push((generation, k, e.fitness));
    }
}

/// Full two-stage estimation of every hall-of-fame structure, one finalist
/// per complexity level. Structures that cannot be fitted are dropped.
pub fn finalists(hof: &HallOfFame, fitness: &FitnessKind, budget: &FitBudget) -> Vec<FittedModel> {
    let problem = fitness.problem();
    let entries: Vec<(usize, &HofEntry)> = hof.iter().collect();
    let fitted: Vec<Option<FittedModel>> = entries
        .par_iter()
        .map(|(k, entry)| {
            let template = ParamTemplate::extract(&entry.expr);
            let b = FitBudget { seed: derive_seed(budget.seed, &[*k as u64]), ..budget.clone() };
            match estimate::fit_template(problem, &template, &b, &[entry.expr.constants()]) {
                Ok(m) => Some(m),
                Err(EstimateError::Unfittable) | Err(EstimateError::Shape(_)) => {
                    log::warn!(
                        "dropping complexity-{k} finalist {}: unfittable",
                        crate::expr::format(&entry.expr, problem.variables())
                    );
                    None
                }
            }
        })
        .collect();
    fitted.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_strong(k: f64) -> (ExprGrammar, FitnessKind) {
        let species = vec!["C_A".to_string()];
        let states: Vec<Vec<f64>> = (0..20).map(|i| vec![0.5 + i as f64 * 0.5]).collect();
        let targets = states.iter().map(|s| k * s[0]).collect();
        let g = ExprGrammar::rate(&species, 3).unwrap();
        (g, FitnessKind::Strong(StrongProblem::new(species, states, targets)))
    }

    fn small_config(seed: u64) -> GpConfig {
        GpConfig { population: 60, generations: 10, complexity_cap: 3, ..GpConfig::strong() }.with_seed(seed)
    }

    #[test]
    fn recovers_linear_rate() {
        let (g, fit) = linear_strong(0.4);
        let run = evolve(&g, &fit, &small_config(1)).unwrap();
        let e = run.hall_of_fame.get(3).expect("complexity-3 entry");
        assert!(e.fitness < 1e-8, "{}", e.fitness);
        assert!(e.expr.uses_variable(0));
    }

    #[test]
    fn clones_land_in_hall_of_fame() {
        let (g, fit) = linear_strong(0.4);
        let clone = g.parse("0.4*C_A").unwrap();
        let cfg = GpConfig { generations: 0, ..small_config(2) };
        let injected = vec![clone.clone(); cfg.population];
        let run = evolve_seeded(&g, &fit, &cfg, &injected).unwrap();
        assert_eq!(run.hall_of_fame.len(), 1);
        assert!(run.hall_of_fame.get(3).unwrap().fitness < 1e-20);
    }

    #[test]
    fn reproducible_and_monotone() {
        let (g, fit) = linear_strong(0.7);
        let a = evolve(&g, &fit, &small_config(9)).unwrap();
        let b = evolve(&g, &fit, &small_config(9)).unwrap();
        assert_eq!(a, b);
        let mut last: BTreeMap<usize, f64> = BTreeMap::new();
        for (_, k, f) in &a.log {
            if let Some(prev) = last.insert(*k, *f) {
                assert!(*f <= prev);
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let (g, fit) = linear_strong(1.0);
        let cfg = GpConfig { p_crossover: 1.5, ..small_config(0) };
        assert!(matches!(evolve(&g, &fit, &cfg), Err(GpError::Config(_))));
        let g2 = ExprGrammar::rate(&["a", "b"], 5).unwrap();
        assert!(matches!(evolve(&g2, &fit, &small_config(0)), Err(GpError::VariableMismatch { .. })));
    }

    #[test]
    fn hall_of_fame_ignores_non_finite() {
        let mut h = HallOfFame::new();
        assert!(!h.offer(&Expr::Const(1.0), f64::INFINITY));
        assert!(h.offer(&Expr::Const(1.0), 2.0));
        assert!(!h.offer(&Expr::Const(2.0), 3.0));
        assert!(h.offer(&Expr::Const(3.0), 1.0));
        assert_eq!(h.get(1).unwrap().expr, Expr::Const(3.0));
    }

    #[test]
    fn single_constant_finalist_is_mean() {
        let species = vec!["C_A".to_string()];
        let states: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let fit = FitnessKind::Strong(StrongProblem::new(species, states, vec![1.0, 2.0, 3.0, 6.0]));
        let mut h = HallOfFame::new();
        h.offer(&Expr::Const(0.0), 50.0);
        let f = finalists(&h, &fit, &FitBudget::default());
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].dim(), 1);
        assert!((f[0].theta[0] - 3.0).abs() < 1e-6, "{:?}", f[0].theta);
    }

    #[test]
    fn unfittable_finalists_dropped() {
        let (g, fit) = linear_strong(1.0);
        let mut h = HallOfFame::new();
        h.offer(&g.parse("1/(C_A-C_A)").unwrap(), 1.0);
        h.offer(&g.parse("2*C_A").unwrap(), 1.0);
        let f = finalists(&h, &fit, &FitBudget::default());
        assert_eq!(f.len(), 1);
    }
}
