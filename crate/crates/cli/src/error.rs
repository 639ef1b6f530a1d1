use std::path::PathBuf;

use gridscreen::extract::ExtractError;
use gridscreen::imageio::ImageError;
use gridscreen::model::ModelError;
use gridscreen::montage::MontageError;
use gridscreen::score::LabelError;
use gridscreen::synth::SynthError;
use gridscreen::train::TrainError;
use gridscreen::MrcError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: ImageError },
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Mrc(#[from] MrcError),
    #[error(transparent)]
    Montage(#[from] MontageError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Labels(#[from] LabelError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }

    /// 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Extract(ExtractError::InvalidParameter(_)) => 1,
            CliError::Synth(SynthError::InvalidParams(_)) => 1,
            CliError::Model(ModelError::BadChannelCount(_) | ModelError::BadInputSize(_)) => 1,
            CliError::Montage(MontageError::BadGridShape { .. }) => 1,
            CliError::Train(TrainError::InvalidConfig(_)) => 1,
            CliError::Train(TrainError::NonFiniteLoss { .. }) => 3,
            _ => 2,
        }
    }
}
