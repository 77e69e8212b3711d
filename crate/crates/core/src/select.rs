//! Information criteria and model ranking.
//!
//! All four criteria share the form `2·NLL + penalty(d, n)`:
//!
//! | criterion | penalty |
//! |-----------|---------|
//! | AIC  | `2d` |
//! | AICc | `d · 2n/(n−d−1)` |
//! | HQC  | `2c·d·ln(ln n)` |
//! | BIC  | `d·ln n` |
//!
//! The AICc row is the per-parameter-coefficient form; the additive
//! small-sample correction `AIC + 2(d+1)(d+2)/(n−d−2)` is available as
//! [`AiccForm::SampleCorrection`] but does not reproduce the usual
//! `k = −2.14` gap between four- and five-parameter models at `n = 150`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimate::FittedModel;

#[derive(Debug, Error, PartialEq)]
pub enum SelectError {
    #[error("{kind} is undefined for d = {d}, n = {n}")]
    Undefined { kind: &'static str, d: usize, n: usize },
    #[error("cannot rank an empty model list")]
    Empty,
    #[error("HQC constant must be >= 1, got {0}")]
    BadHqcConstant(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AiccForm {
    /// `2n/(n−d−1)` per parameter.
    #[default]
    Coefficient,
    /// `AIC + 2(d+1)(d+2)/(n−d−2)`.
    SampleCorrection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CriterionKind {
    Aic,
    Aicc(AiccForm),
    Hqc { c: f64 },
    Bic,
}

impl CriterionKind {
    pub const AICC: CriterionKind = CriterionKind::Aicc(AiccForm::Coefficient);
    pub const HQC: CriterionKind = CriterionKind::Hqc { c: 1.0 };
    /// The four criteria in their default parameterizations.
    pub const ALL: [CriterionKind; 4] = [CriterionKind::Aic, Self::AICC, Self::HQC, CriterionKind::Bic];

    pub fn name(&self) -> &'static str {
        match self {
            CriterionKind::Aic => "aic",
            CriterionKind::Aicc(_) => "aicc",
            CriterionKind::Hqc { .. } => "hqc",
            CriterionKind::Bic => "bic",
        }
    }

    /// Complexity penalty for `d` parameters and `n` samples.
    pub fn penalty(&self, d: usize, n: usize) -> Result<f64, SelectError> {
        let (df, nf) = (d as f64, n as f64);
        let undefined = || SelectError::Undefined { kind: self.name(), d, n };
        if n == 0 {
            return Err(undefined());
        }
        match *self {
            CriterionKind::Aic => Ok(2.0 * df),
            CriterionKind::Aicc(AiccForm::Coefficient) => {
                if n <= d + 1 {
                    return Err(undefined());
                }
                Ok(df * 2.0 * nf / (nf - df - 1.0))
            }
            CriterionKind::Aicc(AiccForm::SampleCorrection) => {
                if n <= d + 2 {
                    return Err(undefined());
                }
                Ok(2.0 * df + 2.0 * (df + 1.0) * (df + 2.0) / (nf - df - 2.0))
            }
            CriterionKind::Hqc { c } => {
                if !(c >= 1.0) {
                    return Err(SelectError::BadHqcConstant(c));
                }
                Ok(2.0 * c * df * nf.ln().ln())
            }
            CriterionKind::Bic => Ok(df * nf.ln()),
        }
    }
}

impl std::fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `2·nll + penalty(d, n)`.
pub fn criterion(kind: CriterionKind, nll: f64, d: usize, n: usize) -> Result<f64, SelectError> {
    Ok(2.0 * nll + kind.penalty(d, n)?)
}

/// `penalty(d1, n) − penalty(d2, n)`; independent of the data.
pub fn penalty_delta(kind: CriterionKind, d1: usize, d2: usize, n: usize) -> Result<f64, SelectError> {
    Ok(kind.penalty(d1, n)? - kind.penalty(d2, n)?)
}

/// All four criterion values for one fit. `aicc` is `None` where undefined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub aic: f64,
    pub aicc: Option<f64>,
    pub hqc: f64,
    pub bic: f64,
}

impl Criteria {
    pub fn compute(nll: f64, d: usize, n: usize) -> Self {
        let get = |k| criterion(k, nll, d, n).unwrap_or(f64::NAN);
        Self {
            aic: get(CriterionKind::Aic),
            aicc: criterion(CriterionKind::AICC, nll, d, n).ok(),
            hqc: get(CriterionKind::HQC),
            bic: get(CriterionKind::Bic),
        }
    }

    pub fn get(&self, kind: CriterionKind) -> Option<f64> {
        match kind {
            CriterionKind::Aic => Some(self.aic),
            CriterionKind::Aicc(_) => self.aicc,
            CriterionKind::Hqc { .. } => Some(self.hqc),
            CriterionKind::Bic => Some(self.bic),
        }
    }
}

/// Indices of `models` sorted by ascending criterion value. Ties go to fewer
/// parameters, then lower complexity, then input order. Models for which the
/// criterion is undefined or non-finite sort last.
pub fn rank(models: &[FittedModel], kind: CriterionKind) -> Result<Vec<usize>, SelectError> {
    if models.is_empty() {
        return Err(SelectError::Empty);
    }
    let score = |m: &FittedModel| {
        criterion(kind, m.nll, m.dim(), m.n).ok().filter(|v| v.is_finite()).unwrap_or(f64::INFINITY)
    };
    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&models[i], &models[j]);
        score(a)
            .total_cmp(&score(b))
            .then(a.dim().cmp(&b.dim()))
            .then(a.template.complexity().cmp(&b.template.complexity()))
            .then(i.cmp(&j))
    });
    Ok(order)
}
