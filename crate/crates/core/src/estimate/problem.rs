//! Least-squares problems for the three fit kinds.

use serde::{Deserialize, Serialize};

use crate::expr::Program;
use crate::simulate::{integrate_rate, Dataset, IntegratorSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitKind {
    /// Concentration of one species against time.
    Profile,
    /// Rate law against estimated rates.
    Strong,
    /// Rate law integrated as an ODE against measured concentrations.
    Weak,
}

/// A data set that a compiled template can be scored against.
pub trait Problem: Sync + Send {
    fn kind(&self) -> FitKind;
    /// Names of the template's variables.
    fn variables(&self) -> &[String];
    /// Sample count used in the likelihood.
    fn n_samples(&self) -> usize;
    /// Residual sum of squares per likelihood block, or `None` when the model
    /// produces a non-finite value or cannot be integrated.
    fn block_rss(&self, program: &Program, theta: &[f64]) -> Option<Vec<f64>>;
    /// Flat residual vector (prediction minus observation).
    fn residuals(&self, program: &Program, theta: &[f64], out: &mut Vec<f64>) -> bool;

    fn rss(&self, program: &Program, theta: &[f64]) -> f64 {
        match self.block_rss(program, theta) {
            Some(b) => {
                let s: f64 = b.iter().sum();
                if s.is_finite() {
                    s
                } else {
                    f64::INFINITY
                }
            }
            None => f64::INFINITY,
        }
    }
}

/// One species' concentration series; the template is a function of `t`.
#[derive(Clone, Debug)]
pub struct ProfileProblem {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    variables: Vec<String>,
}

impl ProfileProblem {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(times.len(), values.len(), "one value per time");
        Self { times, values, variables: vec!["t".to_string()] }
    }
}

impl Problem for ProfileProblem {
    fn kind(&self) -> FitKind {
        FitKind::Profile
    }

    fn variables(&self) -> &[String] {
        &self.variables
    }

    fn n_samples(&self) -> usize {
        self.times.len()
    }

    fn block_rss(&self, program: &Program, theta: &[f64]) -> Option<Vec<f64>> {
        let mut s = 0.0;
        for (t, y) in self.times.iter().zip(&self.values) {
            let p = program.eval(std::slice::from_ref(t), theta);
            if !p.is_finite() {
                return None;
            }
            s += (p - y) * (p - y);
        }
        Some(vec![s])
    }

    fn residuals(&self, program: &Program, theta: &[f64], out: &mut Vec<f64>) -> bool {
        out.clear();
        for (t, y) in self.times.iter().zip(&self.values) {
            let p = program.eval(std::slice::from_ref(t), theta);
            if !p.is_finite() {
                return false;
            }
            out.push(p - y);
        }
        true
    }
}

/// Rate targets at known states; the template is a function of the species.
#[derive(Clone, Debug)]
pub struct StrongProblem {
    pub states: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    variables: Vec<String>,
}

impl StrongProblem {
    pub fn new(species: Vec<String>, states: Vec<Vec<f64>>, targets: Vec<f64>) -> Self {
        assert_eq!(states.len(), targets.len(), "one rate target per state");
        Self { states, targets, variables: species }
    }
}

impl Problem for StrongProblem {
    fn kind(&self) -> FitKind {
        FitKind::Strong
    }

    fn variables(&self) -> &[String] {
        &self.variables
    }

    fn n_samples(&self) -> usize {
        self.targets.len()
    }

    fn block_rss(&self, program: &Program, theta: &[f64]) -> Option<Vec<f64>> {
        let mut s = 0.0;
        for (c, r) in self.states.iter().zip(&self.targets) {
            let p = program.eval(c, theta);
            if !p.is_finite() {
                return None;
            }
            s += (p - r) * (p - r);
        }
        Some(vec![s])
    }

    fn residuals(&self, program: &Program, theta: &[f64], out: &mut Vec<f64>) -> bool {
        out.clear();
        for (c, r) in self.states.iter().zip(&self.targets) {
            let p = program.eval(c, theta);
            if !p.is_finite() {
                return false;
            }
            out.push(p - r);
        }
        true
    }
}

/// Measured concentrations; each candidate rate law is integrated from the
/// first measurement of every experiment.
#[derive(Clone, Debug)]
pub struct WeakProblem {
    pub stoich: Vec<f64>,
    pub dataset: Dataset,
    pub settings: IntegratorSettings,
}

impl WeakProblem {
    pub fn new(stoich: Vec<f64>, dataset: Dataset, settings: IntegratorSettings) -> Self {
        assert_eq!(stoich.len(), dataset.n_species(), "one stoichiometric coefficient per species");
        Self { stoich, dataset, settings }
    }

    /// Predicted trajectories, one matrix (rows = sampling instants) per experiment.
    pub fn predict(&self, program: &Program, theta: &[f64]) -> Option<Vec<Vec<Vec<f64>>>> {
        self.dataset
            .experiments
            .iter()
            .map(|e| {
                integrate_rate(program, theta, &self.stoich, &e.first_measurement(), &e.times, &self.settings).ok()
            })
            .collect()
    }
}

impl Problem for WeakProblem {
    fn kind(&self) -> FitKind {
        FitKind::Weak
    }

    fn variables(&self) -> &[String] {
        &self.dataset.species
    }

    fn n_samples(&self) -> usize {
        self.dataset.total_samples()
    }

    fn block_rss(&self, program: &Program, theta: &[f64]) -> Option<Vec<f64>> {
        let mut blocks = vec![0.0; self.dataset.n_species()];
        for e in &self.dataset.experiments {
            let pred =
                integrate_rate(program, theta, &self.stoich, &e.first_measurement(), &e.times, &self.settings).ok()?;
            for (i, row) in pred.iter().enumerate() {
                for (s, p) in row.iter().enumerate() {
                    let d = p - e.values[[i, s]];
                    blocks[s] += d * d;
                }
            }
        }
        blocks.iter().all(|b| b.is_finite()).then_some(blocks)
    }

    fn residuals(&self, program: &Program, theta: &[f64], out: &mut Vec<f64>) -> bool {
        out.clear();
        for e in &self.dataset.experiments {
            let Ok(pred) =
                integrate_rate(program, theta, &self.stoich, &e.first_measurement(), &e.times, &self.settings)
            else {
                return false;
            };
            // the first row matches by construction and carries no information
            for (i, row) in pred.iter().enumerate().skip(1) {
                for (s, p) in row.iter().enumerate() {
                    out.push(p - e.values[[i, s]]);
                }
            }
        }
        out.iter().all(|v| v.is_finite())
    }
}
