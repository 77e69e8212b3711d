use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ode::IntegratorSettings;
use super::system::{Experiment, ReactionSystem, SimulateError};
use crate::io::{fmt_sig, IoError};
use crate::rng::substream;

/// Additive Gaussian measurement noise, identical for every species.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub std_dev: f64,
}

impl NoiseSpec {
    pub fn from_variance(variance: f64) -> Self {
        Self { std_dev: variance.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub system: String,
    pub std_dev: f64,
    pub seed: u64,
}

/// Measurements of one experiment: `values[[i, s]]` is species `s` at `times[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentData {
    pub experiment: Experiment,
    pub times: Vec<f64>,
    pub values: Array2<f64>,
}

impl ExperimentData {
    pub fn n_samples(&self) -> usize {
        self.times.len()
    }

    /// First measured row, used as the initial state for dynamic fits.
    pub fn first_measurement(&self) -> Vec<f64> {
        self.values.row(0).to_vec()
    }

    pub fn species_series(&self, s: usize) -> Vec<f64> {
        self.values.column(s).to_vec()
    }

    /// RFC-4180 CSV with header `t,<species...>`, 9 significant digits.
    pub fn to_csv(&self, species: &[String]) -> String {
        let mut out = String::from("t");
        for s in species {
            out.push(',');
            out.push_str(s);
        }
        out.push_str("\r\n");
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&fmt_sig(*t, 9));
            for v in self.values.row(i) {
                out.push(',');
                out.push_str(&fmt_sig(*v, 9));
            }
            out.push_str("\r\n");
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub species: Vec<String>,
    pub experiments: Vec<ExperimentData>,
    pub provenance: Option<Provenance>,
}

/// Manifest written next to the per-experiment CSV files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub system: String,
    pub species: Vec<String>,
    pub experiments: Vec<Experiment>,
    pub files: Vec<String>,
    pub std_dev: Option<f64>,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn is_empty(&self) -> bool {
        self.experiments.is_empty()
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    /// Sampling instants summed over experiments.
    pub fn total_samples(&self) -> usize {
        self.experiments.iter().map(|e| e.n_samples()).sum()
    }

    pub fn push(&mut self, data: ExperimentData) {
        self.experiments.push(data);
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            system: self.provenance.as_ref().map(|p| p.system.clone()).unwrap_or_default(),
            species: self.species.clone(),
            experiments: self.experiments.iter().map(|e| e.experiment.clone()).collect(),
            files: (0..self.experiments.len()).map(experiment_file_name).collect(),
            std_dev: self.provenance.as_ref().map(|p| p.std_dev),
            seed: self.provenance.as_ref().map(|p| p.seed),
        }
    }

    /// Writes `manifest.json` and one CSV per experiment into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), IoError> {
        fs::create_dir_all(dir)?;
        let manifest = self.manifest();
        for (e, name) in self.experiments.iter().zip(&manifest.files) {
            fs::write(dir.join(name), e.to_csv(&self.species))?;
        }
        fs::write(dir.join("manifest.json"), crate::io::to_json_pretty(&manifest)?)?;
        Ok(())
    }

    /// Reads a directory produced by [`Dataset::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.files.len() != manifest.experiments.len() {
            return Err(IoError::Format("manifest lists a different number of files and experiments".into()));
        }
        let mut experiments = Vec::new();
        for (file, experiment) in manifest.files.iter().zip(&manifest.experiments) {
            let (times, values) = read_csv(&dir.join(file), &manifest.species)?;
            if times.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(IoError::Format(format!("{file}: times must be strictly increasing")));
            }
            experiments.push(ExperimentData { experiment: experiment.clone(), times, values });
        }
        let provenance = match (manifest.std_dev, manifest.seed) {
            (Some(std_dev), Some(seed)) => Some(Provenance { system: manifest.system.clone(), std_dev, seed }),
            _ => None,
        };
        Ok(Self { species: manifest.species, experiments, provenance })
    }
}

pub fn experiment_file_name(index: usize) -> String {
    format!("experiment_{:02}.csv", index + 1)
}

fn read_csv(path: &Path, species: &[String]) -> Result<(Vec<f64>, Array2<f64>), IoError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| IoError::Format(e.to_string()))?;
    let header = reader.headers().map_err(|e| IoError::Format(e.to_string()))?.clone();
    let expected: Vec<&str> = std::iter::once("t").chain(species.iter().map(String::as_str)).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(IoError::Format(format!("{}: header does not match species list", path.display())));
    }
    let mut times = Vec::new();
    let mut flat = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IoError::Format(e.to_string()))?;
        let mut fields = record.iter().map(|f| {
            f.trim().parse::<f64>().map_err(|_| IoError::Format(format!("{}: bad number {f:?}", path.display())))
        });
        times.push(fields.next().transpose()?.unwrap_or(f64::NAN));
        for v in fields {
            flat.push(v?);
        }
    }
    let values = Array2::from_shape_vec((times.len(), species.len()), flat)
        .map_err(|e| IoError::Format(format!("{}: {e}", path.display())))?;
    Ok((times, values))
}

/// Simulates every experiment of `system` and adds iid Gaussian noise.
///
/// The noise for experiment `e`, species `s` comes from its own stream
/// derived from `(seed, e, s)`, so the result is a pure function of the
/// arguments. Negative noisy values are kept as they are.
pub fn generate_dataset(
    system: &ReactionSystem,
    experiments: &[Experiment],
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Dataset, SimulateError> {
    let mut dataset = Dataset {
        species: system.species.clone(),
        experiments: Vec::with_capacity(experiments.len()),
        provenance: Some(Provenance { system: system.name.clone(), std_dev: noise.std_dev, seed }),
    };
    for (index, experiment) in experiments.iter().enumerate() {
        dataset.push(simulate_experiment(system, experiment, noise, seed, index)?);
    }
    Ok(dataset)
}

/// Runs one noisy experiment; `index` selects the noise substream.
pub fn simulate_experiment(
    system: &ReactionSystem,
    experiment: &Experiment,
    noise: &NoiseSpec,
    seed: u64,
    index: usize,
) -> Result<ExperimentData, SimulateError> {
    experiment.validate()?;
    if experiment.initial.len() != system.species.len() {
        return Err(SimulateError::InvalidExperiment(format!(
            "{} initial values for {} species",
            experiment.initial.len(),
            system.species.len()
        )));
    }
    let times = experiment.sample_times();
    let states = system.trajectory(&experiment.initial, &times, &IntegratorSettings::default())?;
    let n_species = system.species.len();
    let mut values = Array2::zeros((times.len(), n_species));
    for (i, row) in states.iter().enumerate() {
        for (s, v) in row.iter().enumerate() {
            values[[i, s]] = *v;
        }
    }
    if noise.std_dev > 0.0 {
        for s in 0..n_species {
            let mut rng = substream(seed, &[index as u64, s as u64]);
            for i in 0..times.len() {
                let z: f64 = StandardNormal.sample(&mut rng);
                values[[i, s]] += noise.std_dev * z;
            }
        }
    }
    Ok(ExperimentData { experiment: experiment.clone(), times, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::make_case_study;

    #[test]
    fn zero_noise_reproduces_trajectory() {
        let cs = make_case_study("isomerization").unwrap();
        let ds = generate_dataset(&cs.system, &cs.experiments, &NoiseSpec { std_dev: 0.0 }, 1).unwrap();
        let e = &ds.experiments[0];
        let exact = cs.system.trajectory(&[2.0, 0.0], &e.times, &IntegratorSettings::default()).unwrap();
        for (i, row) in exact.iter().enumerate() {
            assert_eq!(e.values[[i, 0]], row[0]);
            assert_eq!(e.values[[i, 1]], row[1]);
        }
    }

    #[test]
    fn toluene_shape() {
        let cs = make_case_study("toluene").unwrap();
        let ds = generate_dataset(&cs.system, &cs.experiments, &cs.noise, 3).unwrap();
        assert_eq!(ds.experiments[1].values.dim(), (30, 4));
        assert_eq!(ds.experiments[1].experiment.initial, vec![5.0, 8.0, 0.0, 0.5]);
        assert_eq!(ds.total_samples(), 150);
    }

    #[test]
    fn seeded_csv_is_stable() {
        let cs = make_case_study("n2o").unwrap();
        let a = generate_dataset(&cs.system, &cs.experiments, &cs.noise, 11).unwrap();
        let b = generate_dataset(&cs.system, &cs.experiments, &cs.noise, 11).unwrap();
        let c = generate_dataset(&cs.system, &cs.experiments, &cs.noise, 12).unwrap();
        assert_eq!(a.experiments[2].to_csv(&a.species), b.experiments[2].to_csv(&b.species));
        assert_ne!(a.experiments[2].to_csv(&a.species), c.experiments[2].to_csv(&c.species));
    }

    #[test]
    fn noise_is_not_clipped() {
        let cs = make_case_study("isomerization").unwrap();
        let ds = generate_dataset(&cs.system, &cs.experiments, &cs.noise, 5).unwrap();
        // experiment 1 starts with C_B = 0, so roughly half the early draws are negative
        assert!(ds.experiments[0].values.column(1).iter().any(|&v| v < 0.0));
    }

    #[test]
    fn directory_round_trip() {
        let cs = make_case_study("toluene").unwrap();
        let ds = generate_dataset(&cs.system, &cs.experiments, &cs.noise, 9).unwrap();
        let dir = std::env::temp_dir().join(format!("kinfer-ds-{}", std::process::id()));
        ds.write_dir(&dir).unwrap();
        let back = Dataset::read_dir(&dir).unwrap();
        assert_eq!(back.species, ds.species);
        assert_eq!(back.experiments.len(), 5);
        for (a, b) in back.experiments.iter().zip(&ds.experiments) {
            for (x, y) in a.values.iter().zip(b.values.iter()) {
                assert!((x - y).abs() <= 1e-8 * y.abs().max(1e-300));
            }
        }
        assert_eq!(back.provenance, ds.provenance);
        std::fs::remove_dir_all(dir).ok();
    }
}
