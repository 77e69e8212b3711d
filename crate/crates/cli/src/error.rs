use std::fmt;

use kinfer::pipeline::PipelineError;
use kinfer::studies::StudyError;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration. Exit code 2.
    Usage(String),
    /// A required input file or dataset is missing. Exit code 3.
    MissingInput(String),
    /// Fitting, integration or design failed. Exit code 4.
    Numerical(String),
    /// Could not write outputs. Exit code 1.
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Output(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "invalid input: {m}"),
            CliError::MissingInput(m) => write!(f, "missing input: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Output(m) => write!(f, "cannot write output: {m}"),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::EmptyDataset => CliError::MissingInput(e.to_string()),
            PipelineError::Invalid(_) | PipelineError::Gp(_) => CliError::Usage(e.to_string()),
            PipelineError::Design(kinfer::mbdoe::DesignError::Space(_))
            | PipelineError::Design(kinfer::mbdoe::DesignError::Dimension { .. }) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Grid(_) => CliError::Usage(e.to_string()),
            StudyError::Simulate(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<kinfer::io::IoError> for CliError {
    fn from(e: kinfer::io::IoError) -> Self {
        CliError::Output(e.to_string())
    }
}
