//! One module per subcommand. Each exposes a clap `Args` struct and a
//! `run` function returning [`crate::error::CmdError`] on failure.

pub mod anomaly;
pub mod bench;
pub mod dump_map;
pub mod eval;
pub mod fit_size_model;
pub mod fuse;
pub mod geolocate;
pub mod simulate;
pub mod track;
pub mod vod;

use std::path::Path;

use crate::error::CmdError;

/// Writes pretty JSON with a trailing newline, the shared format for every
/// JSON artifact the commands produce.
pub fn write_pretty_json(path: &Path, value: &serde_json::Value) -> Result<(), CmdError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CmdError::Validation(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CmdError::io_at(path, e))
}

/// Prints a command's summary object on stdout. Write failures (for
/// example a reader that closed the pipe early) are ignored: the files a
/// command produced are its real output, the summary is a courtesy.
pub fn print_summary(value: &serde_json::Value) {
    use std::io::Write;
    let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
    text.push('\n');
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}
