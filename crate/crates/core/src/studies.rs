//! Information-criterion behaviour on a fixed set of rival rate laws for the
//! isomerization system, as the noise level or the sample count varies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimate::{self, FitBudget, FittedModel, WeakProblem};
use crate::expr::{parse_with_variables, ParamTemplate};
use crate::io::{csv_string, fmt_sig};
use crate::rng::derive_seed;
use crate::select::{criterion, CriterionKind};
use crate::simulate::{generate_dataset, make_case_study, CaseStudy, Dataset, Experiment, IntegratorSettings, NoiseSpec, SimulateError};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid study grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
}

const RIVALS: [&str; 7] = [
    "p1*C_A",
    "p1*C_A-p2*C_B",
    "(p1*C_A-p2*C_B)/(p3*C_A)",
    "(p1*C_A-p2*C_B)/(p3*C_A+p4*C_B)",
    "(p1*C_A-p2*C_B)/(p3*C_A+p4*C_B+p5)",
    "(p1*C_A*C_A-p2*C_B-p3*C_A)/(p4*C_A+p5*C_B+p6)",
    "(p1*C_A*C_A-p2*C_B*C_B-p3*C_A-p4*C_B)/(p5*C_A+p6*C_B+p7)",
];

/// `(smaller, larger, map)`: parameter `k` of the larger rival is
/// `sign · θ_small[i]` for `map[k] = Some((i, sign))`, zero for `None`. The
/// larger rival then reproduces the smaller one exactly.
type Embedding = (usize, usize, &'static [Option<(usize, f64)>]);

const EMBEDDINGS: [Embedding; 6] = [
    (0, 1, &[Some((0, 1.0)), None]),
    (2, 3, &[Some((0, 1.0)), Some((1, 1.0)), Some((2, 1.0)), None]),
    (3, 4, &[Some((0, 1.0)), Some((1, 1.0)), Some((2, 1.0)), Some((3, 1.0)), None]),
    (4, 5, &[None, Some((1, 1.0)), Some((0, -1.0)), Some((2, 1.0)), Some((3, 1.0)), Some((4, 1.0))]),
    (4, 6, &[None, None, Some((0, -1.0)), Some((1, 1.0)), Some((2, 1.0)), Some((3, 1.0)), Some((4, 1.0))]),
    (5, 6, &[Some((0, 1.0)), None, Some((2, 1.0)), Some((1, 1.0)), Some((3, 1.0)), Some((4, 1.0)), Some((5, 1.0))]),
];

/// Seven candidate rate laws of increasing size; `r5` generated the data.
#[derive(Clone, Debug, PartialEq)]
pub struct RivalSet {
    pub names: Vec<String>,
    pub templates: Vec<ParamTemplate>,
    pub data_generating: usize,
    embeddings: Vec<Embedding>,
}

impl RivalSet {
    pub fn isomerization() -> Self {
        let vars = ["C_A", "C_B"];
        let templates: Vec<ParamTemplate> = RIVALS
            .iter()
            .map(|t| ParamTemplate::from_skeleton(parse_with_variables(t, &vars).expect("built-in rival parses")))
            .collect();
        Self { names: (1..=7).map(|i| format!("r{i}")).collect(), templates, data_generating: 4, embeddings: EMBEDDINGS.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Parameter vectors for rival `target` that reproduce already fitted
    /// smaller rivals.
    pub fn nested_starts(&self, target: usize, fitted: &[Option<FittedModel>]) -> Vec<Vec<f64>> {
        self.embeddings
            .iter()
            .filter(|(_, to, _)| *to == target)
            .filter_map(|(from, _, map)| {
                let theta = &fitted.get(*from)?.as_ref()?.theta;
                Some(map.iter().map(|m| m.map(|(i, sign)| sign * theta[i]).unwrap_or(0.0)).collect())
            })
            .collect()
    }
}

/// How a noise level is given.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseParam {
    Variance,
    StdDev,
}

impl NoiseParam {
    pub fn spec(self, value: f64) -> NoiseSpec {
        match self {
            NoiseParam::Variance => NoiseSpec::from_variance(value),
            NoiseParam::StdDev => NoiseSpec { std_dev: value },
        }
    }
}

/// Δ for one criterion at one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelDelta {
    /// `IC(m1) − IC(m2)`; positive when the data-generating model wins.
    pub delta: Option<f64>,
    /// Best rival other than the data-generating one.
    pub m1: Option<usize>,
    /// Rivals left out at this level, either unfittable or outside the
    /// criterion's domain.
    pub excluded: Vec<usize>,
}

/// Δ for `kind` from fitted rivals. `None` entries are unfittable.
pub fn level_deltas(fits: &[Option<FittedModel>], data_generating: usize, kind: CriterionKind) -> LevelDelta {
    let mut excluded = Vec::new();
    let values: Vec<Option<f64>> = fits
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let v = f
                .as_ref()
                .and_then(|m| criterion(kind, m.nll, m.dim(), m.n).ok())
                .filter(|v| v.is_finite());
            if v.is_none() {
                excluded.push(i);
            }
            v
        })
        .collect();
    let m2 = values.get(data_generating).copied().flatten();
    let mut m1: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if i == data_generating {
            continue;
        }
        if let Some(v) = v {
            if m1.is_none_or(|(_, b)| *v < b) {
                m1 = Some((i, *v));
            }
        }
    }
    let delta = match (m1, m2) {
        (Some((_, a)), Some(b)) => Some(a - b),
        _ => None,
    };
    LevelDelta { delta, m1: m1.map(|(i, _)| i), excluded }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyLevel {
    /// σ² (or σ) for the noise study, samples per experiment for the size study.
    pub x: f64,
    pub n: usize,
    pub fits: Vec<Option<FittedModel>>,
    /// One entry per criterion in [`CriterionKind::ALL`] order.
    pub deltas: Vec<LevelDelta>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Study {
    pub x_label: &'static str,
    pub rivals: RivalSet,
    pub levels: Vec<StudyLevel>,
}

impl Study {
    /// Δ curve for one criterion.
    pub fn curve(&self, kind: CriterionKind) -> Vec<(f64, Option<f64>)> {
        let k = CriterionKind::ALL.iter().position(|c| c.name() == kind.name()).expect("known criterion");
        self.levels.iter().map(|l| (l.x, l.deltas[k].delta)).collect()
    }

    /// `x, n, delta, m1, excluded, nll_r1..nll_r7` for one criterion.
    pub fn csv(&self, kind: CriterionKind) -> String {
        let k = CriterionKind::ALL.iter().position(|c| c.name() == kind.name()).expect("known criterion");
        let mut header: Vec<String> = vec![self.x_label.into(), "n".into(), "delta".into(), "m1".into(), "excluded".into()];
        header.extend(self.rivals.names.iter().map(|r| format!("nll_{r}")));
        let rows: Vec<Vec<String>> = self
            .levels
            .iter()
            .map(|l| {
                let d = &l.deltas[k];
                let mut row = vec![
                    fmt_sig(l.x, 12),
                    l.n.to_string(),
                    d.delta.map(|v| fmt_sig(v, 12)).unwrap_or_default(),
                    d.m1.map(|i| self.rivals.names[i].clone()).unwrap_or_default(),
                    d.excluded.iter().map(|&i| self.rivals.names[i].as_str()).collect::<Vec<_>>().join(" "),
                ];
                row.extend(l.fits.iter().map(|f| f.as_ref().map(|m| fmt_sig(m.nll, 12)).unwrap_or_default()));
                row
            })
            .collect();
        csv_string(&header, &rows)
    }
}

/// Weak-form fit of every rival to `dataset`, smallest first. Each rival's
/// search also starts from the embeddings of the smaller rivals it contains,
/// so a larger model never fits worse than one nested in it. Unfittable
/// rivals are `None`.
pub fn fit_rivals(rivals: &RivalSet, dataset: &Dataset, stoich: &[f64], budget: &FitBudget) -> Vec<Option<FittedModel>> {
    let problem = WeakProblem::new(stoich.to_vec(), dataset.clone(), IntegratorSettings::fitting());
    let mut fits: Vec<Option<FittedModel>> = Vec::with_capacity(rivals.len());
    for (i, t) in rivals.templates.iter().enumerate() {
        let b = budget.clone().with_seed(derive_seed(budget.seed, &[i as u64]));
        let starts = rivals.nested_starts(i, &fits);
        match estimate::fit_template(&problem, t, &b, &starts) {
            Ok(m) => fits.push(Some(m)),
            Err(e) => {
                log::warn!("rival {} excluded: {e}", rivals.names[i]);
                fits.push(None);
            }
        }
    }
    fits
}

fn run_level(cs: &CaseStudy, rivals: &RivalSet, experiments: &[Experiment], noise: NoiseSpec, seed: u64, budget: &FitBudget, x: f64) -> Result<StudyLevel, StudyError> {
    let data = generate_dataset(&cs.system, experiments, &noise, seed)?;
    let fits = fit_rivals(rivals, &data, &cs.system.stoich, &budget.clone().with_seed(seed));
    let deltas = CriterionKind::ALL.iter().map(|&k| level_deltas(&fits, rivals.data_generating, k)).collect();
    let n = data.total_samples();
    let aic = level_deltas(&fits, rivals.data_generating, CriterionKind::Aic);
    log::info!("{x}: m1 = {:?}, aic delta = {:?}", aic.m1.map(|i| &rivals.names[i]), aic.delta);
    Ok(StudyLevel { x, n, fits, deltas })
}

/// `count` equally spaced values from `lo` to `hi`.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count).map(|i| if i + 1 == count { hi } else { lo + (hi - lo) * i as f64 / (count - 1) as f64 }).collect(),
    }
}

pub const DEFAULT_NOISE_GRID: (f64, f64, usize) = (0.04, 0.25, 13);
pub const DEFAULT_SAMPLE_SIZES: [usize; 18] = [2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 15, 20, 25, 30, 40, 50, 75, 100];

/// Noise-dependency study: one isomerization dataset per noise level, each
/// from its own seed substream, all seven rivals fitted per level.
pub fn ic_noise_study(levels: &[f64], param: NoiseParam, seed: u64, budget: &FitBudget) -> Result<Study, StudyError> {
    if levels.is_empty() {
        return Err(StudyError::Grid("no noise levels".into()));
    }
    if let Some(v) = levels.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(StudyError::Grid(format!("noise level {v} is not positive")));
    }
    let cs = make_case_study("isomerization")?;
    let rivals = RivalSet::isomerization();
    let levels = levels
        .par_iter()
        .enumerate()
        .map(|(i, &x)| run_level(&cs, &rivals, &cs.experiments, param.spec(x), derive_seed(seed, &[i as u64]), budget, x))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Study { x_label: match param { NoiseParam::Variance => "variance", NoiseParam::StdDev => "std_dev" }, rivals, levels })
}

/// Sample-size study: the five isomerization experiments resampled with
/// `sizes[i]` points each.
pub fn ic_sample_study(sizes: &[usize], noise: NoiseSpec, seed: u64, budget: &FitBudget) -> Result<Study, StudyError> {
    if sizes.is_empty() {
        return Err(StudyError::Grid("no sample sizes".into()));
    }
    let cs = make_case_study("isomerization")?;
    let rivals = RivalSet::isomerization();
    let d_max = rivals.templates.iter().map(|t| t.dim()).max().unwrap_or(0);
    let n_exp = cs.experiments.len();
    if let Some(s) = sizes.iter().find(|&&s| s < 2 || s * n_exp <= d_max + 1) {
        return Err(StudyError::Grid(format!("{s} samples per experiment is too few for every criterion")));
    }
    if !(noise.std_dev.is_finite() && noise.std_dev > 0.0) {
        return Err(StudyError::Grid("noise must be positive".into()));
    }
    let levels = sizes
        .par_iter()
        .enumerate()
        .map(|(i, &size)| {
            let exps: Vec<Experiment> =
                cs.experiments.iter().map(|e| Experiment { n_samples: size, ..e.clone() }).collect();
            run_level(&cs, &rivals, &exps, noise, derive_seed(seed, &[i as u64]), budget, size as f64)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Study { x_label: "samples_per_experiment", rivals, levels })
}
