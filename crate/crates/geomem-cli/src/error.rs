//! Error and exit-code model shared by every subcommand.
//!
//! The process contract is: exit 0 on success, 1 when the inputs were read
//! but rejected (bad configuration, malformed records, impossible geometry,
//! inconsistent streams), 2 when a file could not be read or written at all.
//! Every failure prints a single machine-readable JSON object on stderr.

use std::fmt;
use std::path::Path;

/// A subcommand failure, classified by exit code.
#[derive(Debug)]
pub enum CmdError {
    /// The inputs were reachable but invalid. Exit code 1.
    Validation(String),
    /// A file or directory could not be read or written. Exit code 2.
    Io(String),
}

impl CmdError {
    /// Stable machine-readable discriminator used in the stderr report.
    pub fn kind(&self) -> &'static str {
        match self {
            CmdError::Validation(_) => "validation",
            CmdError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CmdError::Validation(m) | CmdError::Io(m) => m,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Validation(_) => 1,
            CmdError::Io(_) => 2,
        }
    }

    /// The stderr report: `{"error":{"kind":…,"message":…}}`.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.message() } })
            .to_string()
    }

    /// Wraps a raw filesystem error with the path it concerned.
    pub fn io_at(path: &Path, err: std::io::Error) -> CmdError {
        CmdError::Io(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CmdError {}

/// File-format errors already carry a transport/format distinction.
impl From<geomem::io::IoError> for CmdError {
    fn from(e: geomem::io::IoError) -> Self {
        if e.is_transport() {
            CmdError::Io(e.to_string())
        } else {
            CmdError::Validation(e.to_string())
        }
    }
}

macro_rules! validation_from {
    ($($ty:ty),* $(,)?) => {
        $(impl From<$ty> for CmdError {
            fn from(e: $ty) -> Self {
                CmdError::Validation(e.to_string())
            }
        })*
    };
}

validation_from!(
    geomem::config::ConfigError,
    geomem::camera::ProjectionError,
    geomem::geodesy::GeoError,
    geomem::map::MapError,
    geomem::size_filter::SizeError,
    geomem::vod::PipelineError,
    geomem::anomaly::AnomalyError,
    geomem::fusion::FusionError,
    geomem::sim::SimError,
);
