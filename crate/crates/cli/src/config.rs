//! Run configuration: JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use kinfer::estimate::FitBudget;
use kinfer::expr::{parse_with_variables, ParamTemplate};
use kinfer::mbdoe::DesignSpace;
use kinfer::pipeline::{LoopConfig, Method, MethodConfig};
use kinfer::simulate::{make_case_study, CaseStudy, Experiment, NoiseSpec, ReactionSystem};
use kinfer::studies::{linear_grid, NoiseParam, DEFAULT_NOISE_GRID, DEFAULT_SAMPLE_SIZES};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub name: String,
    pub species: Vec<String>,
    pub stoich: Vec<f64>,
    /// Rate law with parameters written `p1, p2, ...`.
    pub rate: String,
    pub params: Vec<f64>,
    pub experiments: Vec<Experiment>,
    pub noise_std: f64,
}

impl SystemFile {
    pub fn into_case_study(self) -> Result<CaseStudy, CliError> {
        let skeleton = parse_with_variables(&self.rate, &self.species)
            .map_err(|e| CliError::Usage(format!("rate law {:?}: {e}", self.rate)))?;
        let system = ReactionSystem::new(
            self.name,
            self.species,
            self.stoich,
            ParamTemplate::from_skeleton(skeleton),
            self.params,
        )
        .map_err(|e| CliError::Usage(e.to_string()))?;
        for e in &self.experiments {
            e.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(CaseStudy { system, experiments: self.experiments, noise: NoiseSpec { std_dev: self.noise_std } })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub noise_levels: Vec<f64>,
    pub noise_param: NoiseParam,
    /// Samples per experiment.
    pub sample_sizes: Vec<usize>,
    pub sample_noise: f64,
    pub sample_noise_param: NoiseParam,
    pub fit: FitBudget,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let (lo, hi, n) = DEFAULT_NOISE_GRID;
        Self {
            noise_levels: linear_grid(lo, hi, n),
            noise_param: NoiseParam::Variance,
            sample_sizes: DEFAULT_SAMPLE_SIZES.to_vec(),
            sample_noise: 0.2,
            sample_noise_param: NoiseParam::Variance,
            fit: FitBudget::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Built-in case study name.
    pub system: Option<String>,
    /// Custom system definition, used instead of `system`.
    pub system_file: Option<PathBuf>,
    /// Existing dataset directory; simulated from the system when absent.
    pub data_dir: Option<PathBuf>,
    /// Stoichiometry for datasets without a known system.
    pub stoich: Option<Vec<f64>>,
    /// Overrides the system's noise level for simulation.
    pub noise_std: Option<f64>,
    /// Run proposed experiments on the system's simulator.
    pub simulate_in_loop: bool,
    pub method: Method,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub method_config: MethodConfig,
    #[serde(rename = "loop")]
    pub loop_config: LoopConfig,
    pub design_space: Option<DesignSpace>,
    pub study: StudyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: None,
            system_file: None,
            data_dir: None,
            stoich: None,
            noise_std: None,
            simulate_in_loop: true,
            method: Method::AdokW,
            seed: 0,
            output_dir: None,
            method_config: MethodConfig::default(),
            loop_config: LoopConfig::default(),
            design_space: None,
            study: StudyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::MissingInput(format!("config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.system.is_some() && self.system_file.is_some() {
            return bad("give either system or system_file, not both".into());
        }
        if let Some(s) = self.noise_std {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("noise_std must be non-negative, got {s}"));
            }
        }
        self.loop_config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        for gp in [&self.method_config.profile_gp, &self.method_config.strong_gp, &self.method_config.weak_gp] {
            gp.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if let Some(space) = &self.design_space {
            space.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        let st = &self.study;
        if let Some(v) = st.noise_levels.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return bad(format!("noise level {v} must be positive"));
        }
        if !(st.sample_noise.is_finite() && st.sample_noise > 0.0) {
            return bad(format!("sample_noise must be positive, got {}", st.sample_noise));
        }
        Ok(())
    }

    /// The system named or described by the config, if any.
    pub fn case_study(&self) -> Result<Option<CaseStudy>, CliError> {
        let mut cs = match (&self.system, &self.system_file) {
            (Some(name), None) => Some(make_case_study(name).map_err(|e| CliError::Usage(e.to_string()))?),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::MissingInput(format!("system file {}: {e}", path.display())))?;
                let file: SystemFile = serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("system file {}: {e}", path.display())))?;
                Some(file.into_case_study()?)
            }
            (None, None) => None,
            (Some(_), Some(_)) => return Err(CliError::Usage("give either system or system_file, not both".into())),
        };
        if let (Some(cs), Some(s)) = (cs.as_mut(), self.noise_std) {
            cs.noise = NoiseSpec { std_dev: s };
        }
        Ok(cs)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("kinfer-out"))
    }
}
