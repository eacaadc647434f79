use std::path::PathBuf;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Exit code for invalid input: bad arguments, configs, manifests or
/// incompatible artifacts.
pub const EXIT_VALIDATION: i32 = 1;
/// Exit code for failures while running a valid request.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<CliError>,
    },
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<CliError>,
    },
    #[error(transparent)]
    Core(#[from] vpr_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn at(path: impl Into<PathBuf>, source: impl Into<CliError>) -> Self {
        CliError::File {
            path: path.into(),
            source: Box::new(source.into()),
        }
    }

    pub fn stage(stage: impl Into<String>, source: impl Into<CliError>) -> Self {
        CliError::Stage {
            stage: stage.into(),
            source: Box::new(source.into()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        use vpr_core::Error as E;
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::File { source, .. } | CliError::Stage { source, .. } => source.exit_code(),
            CliError::Core(e) => match e {
                E::UnknownExtractor(_)
                | E::KindMismatch { .. }
                | E::DimensionMismatch { .. }
                | E::InvalidParameter(_)
                | E::Empty(_)
                | E::MapMismatch(_)
                | E::MissingGroundTruth(_)
                | E::UnknownGroundTruthIds(_)
                | E::TooFewDescriptors { .. }
                | E::TooFewDistinct { .. }
                | E::Format { .. }
                | E::UnsupportedFormat { .. }
                | E::ZeroDimension { .. }
                | E::InvalidImage(_) => EXIT_VALIDATION,
                _ => EXIT_RUNTIME,
            },
            CliError::Json(_) | CliError::Csv(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_RUNTIME,
        }
    }
}
