use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing frame {frame} of video `{video}` (expected {})", path.display())]
    MissingFrame {
        video: String,
        frame: usize,
        path: PathBuf,
    },
    #[error(
        "video inventories differ{}{}",
        list(" | missing from predictions: ", missing_pred),
        list(" | missing from ground truth: ", missing_gt)
    )]
    Inventory {
        missing_pred: Vec<String>,
        missing_gt: Vec<String>,
    },
    #[error("{}: {message}", path.display())]
    Malformed { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] deva_fuse::Error),
}

fn list(prefix: &str, names: &[String]) -> String {
    if names.is_empty() {
        String::new()
    } else {
        format!("{prefix}{}", names.join(", "))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingFrame { .. } => 2,
            CliError::Inventory { .. } => 3,
            CliError::Usage(_) => 64,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn malformed(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        CliError::Malformed {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
