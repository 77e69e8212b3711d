use std::fs;
use std::path::Path;

use kinfer::io::to_json_pretty;
use kinfer::mbdoe::{DesignSettings, DesignSpace};
use kinfer::pipeline::{self, iteration_report, profiles_csv, rates_csv, response_csv, LoopConfig, MethodConfig, Simulator};
use kinfer::rng::derive_seed;
use kinfer::select::CriterionKind;
use kinfer::simulate::{generate_dataset, CaseStudy, Dataset};
use kinfer::studies;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

fn json_text(v: &Value) -> String {
    to_json_pretty(v).expect("JSON values always serialize")
}

fn header(config: &RunConfig, command: &str) -> Value {
    json!({ "version": VERSION, "command": command, "config": config })
}

fn require_system(config: &RunConfig) -> Result<CaseStudy, CliError> {
    config.case_study()?.ok_or_else(|| CliError::Usage("no system given (use --system or --system-file)".into()))
}

pub fn simulate(config: &RunConfig) -> Result<(), CliError> {
    config.validate()?;
    let cs = require_system(config)?;
    let data = generate_dataset(&cs.system, &cs.experiments, &cs.noise, config.seed)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let out = config.output_dir();
    data.write_dir(&out)?;
    write(&out.join("run.json"), &json_text(&header(config, "simulate")))?;
    log::info!("wrote {} experiments to {}", data.experiments.len(), out.display());
    Ok(())
}

/// `[0, 1.25 · max first-row value]` per species over a measured dataset.
fn space_from_data(data: &Dataset) -> DesignSpace {
    let n = data.n_species();
    let firsts: Vec<Vec<f64>> = data.experiments.iter().map(|e| e.first_measurement()).collect();
    let overall = firsts.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
    let bounds = (0..n)
        .map(|s| {
            let m = firsts.iter().map(|f| f[s]).fold(0.0f64, f64::max);
            (0.0, 1.25 * if m > 0.0 { m } else { overall.max(1.0) })
        })
        .collect();
    let window = data.experiments.first().map(|e| e.experiment.window).unwrap_or((0.0, 10.0));
    DesignSpace { bounds, window, quadrature_points: DesignSpace::DEFAULT_QUADRATURE }
}

pub fn discover(config: &RunConfig) -> Result<(), CliError> {
    config.validate()?;
    let cs = config.case_study()?;
    let data = match (&config.data_dir, &cs) {
        (Some(dir), _) => {
            if !dir.join("manifest.json").is_file() {
                return Err(CliError::MissingInput(format!("no dataset at {}", dir.display())));
            }
            Dataset::read_dir(dir).map_err(|e| CliError::MissingInput(format!("{}: {e}", dir.display())))?
        }
        (None, Some(cs)) => generate_dataset(&cs.system, &cs.experiments, &cs.noise, config.seed)
            .map_err(|e| CliError::Numerical(e.to_string()))?,
        (None, None) => {
            return Err(CliError::MissingInput("no dataset and no system to simulate one".into()));
        }
    };
    let stoich = match (&config.stoich, &cs) {
        (Some(s), _) => s.clone(),
        (None, Some(cs)) => cs.system.stoich.clone(),
        (None, None) => return Err(CliError::Usage("stoich is required when no system is given".into())),
    };
    if stoich.len() != data.n_species() {
        return Err(CliError::Usage(format!(
            "{} stoichiometric coefficients for {} species",
            stoich.len(),
            data.n_species()
        )));
    }
    let space = match (&config.design_space, &cs) {
        (Some(s), _) => s.clone(),
        (None, Some(cs)) => DesignSpace::for_case_study(cs),
        (None, None) => space_from_data(&data),
    };
    let simulator = cs.as_ref().filter(|_| config.simulate_in_loop).map(|cs| Simulator {
        system: cs.system.clone(),
        noise: cs.noise,
        seed: config.seed,
        n_samples: cs.experiments.first().map(|e| e.n_samples).unwrap_or(30),
    });
    let method_config = MethodConfig {
        seed: derive_seed(config.seed, &[1, config.method_config.seed]),
        ..config.method_config.clone()
    };
    let loop_config = LoopConfig {
        noise_std: config.loop_config.noise_std.or(cs.as_ref().map(|c| c.noise.std_dev)),
        design: DesignSettings {
            seed: derive_seed(config.seed, &[2, config.loop_config.design.seed]),
            ..config.loop_config.design
        },
        ..config.loop_config.clone()
    };

    let history =
        pipeline::run_loop(simulator.as_ref(), data, &stoich, config.method, &method_config, &loop_config, &space)?;

    let out = config.output_dir();
    fs::create_dir_all(&out)?;
    history.dataset.write_dir(&out.join("data"))?;
    let truth = cs.as_ref().map(|c| &c.system);
    for (k, step) in history.steps.iter().enumerate() {
        let it = &step.iteration;
        let stem = format!("iteration_{:02}", k + 1);
        let mut report = header(config, "discover");
        report["iteration"] = json!(k + 1);
        report["result"] = iteration_report(it, step.proposal.as_ref());
        write(&out.join(format!("{stem}.json")), &json_text(&report))?;
        write(&out.join(format!("{stem}_response.csv")), &response_csv(it, &stoich, &history.dataset))?;
        if let Some(p) = profiles_csv(it, &history.dataset) {
            write(&out.join(format!("{stem}_profiles.csv")), &p)?;
        }
        if let Some(r) = rates_csv(it, truth) {
            write(&out.join(format!("{stem}_rates.csv")), &r)?;
        }
    }
    let last = history.last();
    let mut summary = header(config, "discover");
    summary["iterations"] = json!(history.steps.len());
    summary["accepted"] = json!(history.accepted);
    summary["selected"] = json!(last.best.expression());
    summary["structure"] = json!(last.best.structure());
    summary["diagnostics"] = serde_json::to_value(&last.diagnostics).expect("serializable");
    write(&out.join("run.json"), &json_text(&summary))?;
    write(&out.join("final_model.txt"), &format!("{}\n", last.best.expression()))?;
    println!("{}", last.best.expression());
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum StudyKind {
    IcNoise,
    IcSamples,
}

impl StudyKind {
    fn stem(self) -> &'static str {
        match self {
            StudyKind::IcNoise => "ic_noise",
            StudyKind::IcSamples => "ic_samples",
        }
    }
}

pub fn study(kind: StudyKind, config: &RunConfig) -> Result<(), CliError> {
    config.validate()?;
    let st = &config.study;
    let budget = st.fit.clone();
    let result = match kind {
        StudyKind::IcNoise => studies::ic_noise_study(&st.noise_levels, st.noise_param, config.seed, &budget)?,
        StudyKind::IcSamples => studies::ic_sample_study(
            &st.sample_sizes,
            st.sample_noise_param.spec(st.sample_noise),
            config.seed,
            &budget,
        )?,
    };
    let out = config.output_dir();
    fs::create_dir_all(&out)?;
    for k in CriterionKind::ALL {
        write(&out.join(format!("{}_{}.csv", kind.stem(), k.name())), &result.csv(k))?;
    }
    let mut summary = header(config, kind.stem());
    summary["levels"] = json!(result.levels.len());
    write(&out.join(format!("{}.json", kind.stem())), &json_text(&summary))?;
    Ok(())
}
