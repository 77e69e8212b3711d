use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ode::{integrate, IntegrationFailure, IntegratorSettings};
use super::NoiseSpec;
use crate::expr::{parse_with_variables, Expr, ParamTemplate, Program};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("unknown case study {0:?} (expected one of isomerization, n2o, toluene)")]
    UnknownCaseStudy(String),
    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),
    #[error("invalid reaction system: {0}")]
    InvalidSystem(String),
    #[error(transparent)]
    Integration(#[from] IntegrationFailure),
}

/// A single reaction `dC_s/dt = stoich[s] * r(C)`.
#[derive(Clone, Debug)]
pub struct ReactionSystem {
    pub name: String,
    pub species: Vec<String>,
    pub stoich: Vec<f64>,
    pub rate: ParamTemplate,
    pub rate_params: Vec<f64>,
}

impl ReactionSystem {
    pub fn new(
        name: impl Into<String>,
        species: Vec<String>,
        stoich: Vec<f64>,
        rate: ParamTemplate,
        rate_params: Vec<f64>,
    ) -> Result<Self, SimulateError> {
        if species.len() != stoich.len() {
            return Err(SimulateError::InvalidSystem(format!(
                "{} species but {} stoichiometric coefficients",
                species.len(),
                stoich.len()
            )));
        }
        if !stoich.iter().any(|&v| v < 0.0) || !stoich.iter().any(|&v| v > 0.0) {
            return Err(SimulateError::InvalidSystem(
                "stoichiometry needs at least one reactant and one product".into(),
            ));
        }
        if rate.dim() != rate_params.len() {
            return Err(SimulateError::InvalidSystem(format!(
                "rate has {} parameter slots but {} values were given",
                rate.dim(),
                rate_params.len()
            )));
        }
        if rate.skeleton().variable_span() > species.len() {
            return Err(SimulateError::InvalidSystem("rate refers to an unknown species".into()));
        }
        Ok(Self { name: name.into(), species, stoich, rate, rate_params })
    }

    /// The rate law with its parameters substituted.
    pub fn rate_expr(&self) -> Expr {
        self.rate.substitute(&self.rate_params).expect("parameter count checked at construction")
    }

    pub fn rate_at(&self, c: &[f64]) -> f64 {
        self.rate.evaluate(c, &self.rate_params)
    }

    /// Noiseless concentrations at `times`, starting from `initial` at `times[0]`.
    pub fn trajectory(
        &self,
        initial: &[f64],
        times: &[f64],
        settings: &IntegratorSettings,
    ) -> Result<Vec<Vec<f64>>, IntegrationFailure> {
        integrate_rate(&self.rate.compile(), &self.rate_params, &self.stoich, initial, times, settings)
    }
}

/// Integrates `dC/dt = stoich * rate(C)` for a compiled rate law.
pub fn integrate_rate(
    rate: &Program,
    params: &[f64],
    stoich: &[f64],
    initial: &[f64],
    times: &[f64],
    settings: &IntegratorSettings,
) -> Result<Vec<Vec<f64>>, IntegrationFailure> {
    integrate(
        |_, c, dc| {
            let r = rate.eval(c, params);
            for (d, nu) in dc.iter_mut().zip(stoich) {
                *d = nu * r;
            }
        },
        initial,
        times,
        settings,
    )
}

/// One batch run: initial concentrations and an evenly sampled window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub initial: Vec<f64>,
    pub window: (f64, f64),
    pub n_samples: usize,
}

impl Experiment {
    pub fn new(initial: Vec<f64>, window: (f64, f64), n_samples: usize) -> Result<Self, SimulateError> {
        let e = Self { initial, window, n_samples };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        if self.initial.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(SimulateError::InvalidExperiment("initial concentrations must be finite and >= 0".into()));
        }
        if !(self.window.0 < self.window.1) {
            return Err(SimulateError::InvalidExperiment(format!(
                "window [{}, {}] is empty",
                self.window.0, self.window.1
            )));
        }
        if self.n_samples < 2 {
            return Err(SimulateError::InvalidExperiment("at least two samples are required".into()));
        }
        Ok(())
    }

    /// Evenly spaced instants including both window endpoints.
    pub fn sample_times(&self) -> Vec<f64> {
        let (t0, tf) = self.window;
        let step = (tf - t0) / (self.n_samples - 1) as f64;
        (0..self.n_samples)
            .map(|i| if i + 1 == self.n_samples { tf } else { t0 + step * i as f64 })
            .collect()
    }
}

/// A ground-truth system together with its designed experiments.
#[derive(Clone, Debug)]
pub struct CaseStudy {
    pub system: ReactionSystem,
    pub experiments: Vec<Experiment>,
    pub noise: NoiseSpec,
}

pub const CASE_STUDIES: [&str; 3] = ["isomerization", "n2o", "toluene"];

const WINDOW: (f64, f64) = (0.0, 10.0);
const N_SAMPLES: usize = 30;
const SIGMA: f64 = 0.2;

/// Builds one of the three catalytic benchmark systems with its five
/// initial conditions, a [0, 10] h window sampled 30 times, and sigma = 0.2 M.
pub fn make_case_study(name: &str) -> Result<CaseStudy, SimulateError> {
    let (species, stoich, rate, params, ics): (&[&str], Vec<f64>, &str, Vec<f64>, Vec<Vec<f64>>) = match name {
        "isomerization" => (
            &["C_A", "C_B"],
            vec![-1.0, 1.0],
            "(p1*C_A-p2*C_B)/(p3*C_A+p4*C_B+p5)",
            vec![7.0, 3.0, 4.0, 2.0, 6.0],
            vec![vec![2.0, 0.0], vec![10.0, 2.0], vec![2.0, 2.0], vec![10.0, 2.0], vec![10.0, 1.0]],
        ),
        "n2o" => (
            &["C_N2O", "C_N2", "C_O2"],
            vec![-0.5, 0.5, 1.0],
            "p1*C_N2O*C_N2O/(1+p2*C_N2O)",
            vec![2.0, 5.0],
            vec![
                vec![5.0, 0.0, 0.0],
                vec![10.0, 0.0, 0.0],
                vec![5.0, 2.0, 0.0],
                vec![5.0, 0.0, 3.0],
                vec![0.0, 2.0, 3.0],
            ],
        ),
        "toluene" => (
            &["C_T", "C_H", "C_B", "C_M"],
            vec![-1.0, -1.0, 1.0, 1.0],
            "p1*C_T*C_H/(1+p2*C_B+p3*C_T)",
            vec![2.0, 9.0, 5.0],
            vec![
                vec![1.0, 8.0, 2.0, 3.0],
                vec![5.0, 8.0, 0.0, 0.5],
                vec![5.0, 3.0, 0.0, 0.5],
                vec![1.0, 3.0, 0.0, 3.0],
                vec![1.0, 8.0, 2.0, 0.5],
            ],
        ),
        other => return Err(SimulateError::UnknownCaseStudy(other.to_string())),
    };
    let skeleton = parse_with_variables(rate, species).expect("built-in rate law parses");
    let system = ReactionSystem::new(
        name,
        species.iter().map(|s| s.to_string()).collect(),
        stoich,
        ParamTemplate::from_skeleton(skeleton),
        params,
    )?;
    let experiments = ics
        .into_iter()
        .map(|ic| Experiment::new(ic, WINDOW, N_SAMPLES))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CaseStudy { system, experiments, noise: NoiseSpec { std_dev: SIGMA } })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toluene_constants() {
        let cs = make_case_study("toluene").unwrap();
        assert_eq!(cs.system.rate_params, vec![2.0, 9.0, 5.0]);
        assert_eq!(cs.system.stoich, vec![-1.0, -1.0, 1.0, 1.0]);
        assert_eq!(cs.experiments[1].initial, vec![5.0, 8.0, 0.0, 0.5]);
        // r = K_A C_T C_H / (1 + K_B C_B + K_C C_T)
        let r = cs.system.rate_at(&[1.0, 1.0, 1.0, 0.0]);
        assert!((r - 2.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn isomerization_experiments() {
        let cs = make_case_study("isomerization").unwrap();
        let ics: Vec<_> = cs.experiments.iter().map(|e| e.initial.clone()).collect();
        assert_eq!(ics, vec![vec![2.0, 0.0], vec![10.0, 2.0], vec![2.0, 2.0], vec![10.0, 2.0], vec![10.0, 1.0]]);
        assert!(cs.experiments.iter().all(|e| e.n_samples == 30 && e.window == (0.0, 10.0)));
        assert_eq!(cs.noise.std_dev, 0.2);
        assert_eq!(cs.system.rate_at(&[2.0, 0.0]), 1.0);
    }

    #[test]
    fn n2o_stoichiometry() {
        let cs = make_case_study("n2o").unwrap();
        assert_eq!(cs.system.stoich, vec![-0.5, 0.5, 1.0]);
        assert_eq!(cs.system.rate_params, vec![2.0, 5.0]);
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(make_case_study("methanol"), Err(SimulateError::UnknownCaseStudy(_))));
    }

    #[test]
    fn sampling_grid_includes_endpoints() {
        let e = Experiment::new(vec![1.0], (0.0, 10.0), 30).unwrap();
        let t = e.sample_times();
        assert_eq!(t.len(), 30);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[29], 10.0);
        assert!((t[1] - 10.0 / 29.0).abs() < 1e-15);
    }

    #[test]
    fn experiment_validation() {
        assert!(Experiment::new(vec![-1.0], (0.0, 1.0), 3).is_err());
        assert!(Experiment::new(vec![1.0], (1.0, 1.0), 3).is_err());
        assert!(Experiment::new(vec![1.0], (0.0, 1.0), 1).is_err());
    }

    #[test]
    fn system_validation() {
        let rate = ParamTemplate::from_skeleton(Expr::Param(0));
        let bad = ReactionSystem::new("x", vec!["a".into(), "b".into()], vec![1.0, 1.0], rate.clone(), vec![1.0]);
        assert!(bad.is_err());
        let bad = ReactionSystem::new("x", vec!["a".into()], vec![-1.0, 1.0], rate, vec![1.0]);
        assert!(bad.is_err());
    }
}
