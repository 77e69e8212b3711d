//! Iteration reports and figure-data tables.

use serde_json::{json, Value};

use super::IterationResult;
use crate::estimate::FittedModel;
use crate::io::{csv_string, fmt_sig};
use crate::mbdoe::DesignProposal;
use crate::simulate::{integrate_rate, Dataset, IntegratorSettings, ReactionSystem};

const DIGITS: usize = 12;

fn model_json(m: &FittedModel) -> Value {
    json!({
        "expression": m.expression(),
        "structure": m.structure(),
        "theta": m.theta,
        "parameters": m.dim(),
        "complexity": m.template.complexity(),
        "rss": m.rss,
        "nll": m.nll,
        "n": m.n,
        "criteria": m.criteria,
    })
}

pub fn iteration_report(result: &IterationResult, proposal: Option<&DesignProposal>) -> Value {
    let finalists: Vec<Value> = result.finalists.iter().map(model_json).collect();
    json!({
        "method": result.method.name(),
        "experiments": result.n_experiments,
        "rows": result.n_rows,
        "selected": model_json(&result.best),
        "runner_up": result.runner_up.as_ref().map(model_json),
        "finalists": finalists,
        "diagnostics": result.diagnostics,
        "proposal": proposal,
    })
}

/// `experiment, species, t, measured, fitted` for every selected profile.
pub fn profiles_csv(result: &IterationResult, dataset: &Dataset) -> Option<String> {
    let profiles = result.profiles.as_ref()?;
    let mut rows = Vec::new();
    for (e, prof) in profiles.iter().enumerate() {
        let data = &dataset.experiments[e];
        for (s, m) in prof.iter().enumerate() {
            let Some(m) = m else { continue };
            for (i, &t) in data.times.iter().enumerate() {
                rows.push(vec![
                    (e + 1).to_string(),
                    dataset.species[s].clone(),
                    fmt_sig(t, DIGITS),
                    fmt_sig(data.values[[i, s]], DIGITS),
                    fmt_sig(m.evaluate(&[t]), DIGITS),
                ]);
            }
        }
    }
    Some(csv_string(&["experiment", "species", "t", "measured", "fitted"], &rows))
}

/// `experiment, t, estimated, selected, true` rates. The last column is empty
/// without a known ground truth.
pub fn rates_csv(result: &IterationResult, truth: Option<&ReactionSystem>) -> Option<String> {
    let est = result.rate_estimates.as_ref()?;
    let rows: Vec<Vec<String>> = (0..est.len())
        .map(|i| {
            vec![
                (est.experiment[i] + 1).to_string(),
                fmt_sig(est.times[i], DIGITS),
                fmt_sig(est.rates[i], DIGITS),
                fmt_sig(result.best.evaluate(&est.states[i]), DIGITS),
                truth.map(|t| fmt_sig(t.rate_at(&est.states[i]), DIGITS)).unwrap_or_default(),
            ]
        })
        .collect();
    Some(csv_string(&["experiment", "t", "estimated", "selected", "true"], &rows))
}

/// `experiment, species, t, measured, predicted` with the selected rate law
/// integrated from each experiment's first measurement.
pub fn response_csv(result: &IterationResult, stoich: &[f64], dataset: &Dataset) -> String {
    let program = result.best.template.compile();
    let mut rows = Vec::new();
    for (e, data) in dataset.experiments.iter().take(result.n_experiments).enumerate() {
        let pred = integrate_rate(
            &program,
            &result.best.theta,
            stoich,
            &data.first_measurement(),
            &data.times,
            &IntegratorSettings::default(),
        );
        let pred = match pred {
            Ok(p) => p,
            Err(f) => f.states,
        };
        for s in 0..dataset.n_species() {
            for (i, &t) in data.times.iter().enumerate() {
                let p = pred.get(i).map(|row| fmt_sig(row[s], DIGITS)).unwrap_or_default();
                rows.push(vec![
                    (e + 1).to_string(),
                    dataset.species[s].clone(),
                    fmt_sig(t, DIGITS),
                    fmt_sig(data.values[[i, s]], DIGITS),
                    p,
                ]);
            }
        }
    }
    csv_string(&["experiment", "species", "t", "measured", "predicted"], &rows)
}
