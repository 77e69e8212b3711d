//! Function-level test of whether a fitted rate law belongs to a structure family.

use serde::{Deserialize, Serialize};

use crate::estimate::{fit_template, FitBudget, FittedModel, StrongProblem};
use crate::expr::ParamTemplate;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyMatch {
    pub matched: bool,
    /// RMS misfit of the best family member over the probes, relative to the
    /// RMS of the candidate's values.
    pub relative_misfit: f64,
    /// Family parameters of the best member.
    pub theta: Vec<f64>,
    /// `min |θ_i| / max |θ_i|`.
    pub smallest_ratio: f64,
}

/// Fits `family` to the candidate's values at `probes`. The candidate is in
/// the family when some member reproduces it to within `tolerance` (relative
/// RMS) and every family parameter stays above `1e-3` of the largest one, so
/// that no term has been dropped.
pub fn match_family(
    candidate: &FittedModel,
    family: &ParamTemplate,
    probes: &[Vec<f64>],
    tolerance: f64,
    budget: &FitBudget,
) -> FamilyMatch {
    let failed = FamilyMatch { matched: false, relative_misfit: f64::INFINITY, theta: vec![], smallest_ratio: 0.0 };
    let targets: Vec<f64> = probes.iter().map(|p| candidate.evaluate(p)).collect();
    if targets.is_empty() || targets.iter().any(|v| !v.is_finite()) {
        return failed;
    }
    let scale = (targets.iter().map(|v| v * v).sum::<f64>() / targets.len() as f64).sqrt();
    if scale == 0.0 {
        return failed;
    }
    let problem = StrongProblem::new(candidate.variables.clone(), probes.to_vec(), targets);
    let Ok(fit) = fit_template(&problem, family, budget, &[]) else {
        return failed;
    };
    let misfit = (fit.rss / probes.len() as f64).sqrt() / scale;
    let largest = fit.theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let smallest = fit.theta.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let ratio = if fit.theta.is_empty() { 1.0 } else if largest > 0.0 { smallest / largest } else { 0.0 };
    FamilyMatch { matched: misfit <= tolerance && ratio >= 1e-3, relative_misfit: misfit, theta: fit.theta, smallest_ratio: ratio }
}
