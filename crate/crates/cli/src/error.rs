use mutind::exact::ExactError;
use mutind::models::ModelError;
use mutind::partition::PartitionError;
use mutind::sampler::SamplerError;
use mutind::synth::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Resource(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Resource(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(format!("json: {e}"))
    }
}

impl From<PartitionError> for CliError {
    fn from(e: PartitionError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl From<ExactError> for CliError {
    fn from(e: ExactError) -> Self {
        match &e {
            ExactError::Scorer { source, .. } if source.is_numerical() => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        fn classify(e: &SamplerError) -> i32 {
            match e {
                SamplerError::ResourceLimit { .. } => 3,
                SamplerError::Scorer { source, .. } if source.is_numerical() => 4,
                SamplerError::NoValidStart | SamplerError::Internal(_) => 4,
                SamplerError::Chain { source, .. } => classify(source),
                _ => 2,
            }
        }
        match classify(&e) {
            3 => CliError::Resource(e.to_string()),
            4 => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Model(m) => m.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}
