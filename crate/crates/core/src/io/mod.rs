//! Readers and writers for images, flow, disparity, configuration and
//! optimization traces.

pub mod color;
pub mod config;
pub mod disparity;
pub mod flow;
pub mod image;

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::optimize::HistoryEntry;

pub use color::flow_to_color;
pub use config::ConfigFile;
pub use disparity::{read_disparity, write_disparity, DisparityFormat, DisparityMap};
pub use flow::{read_flow, write_flow, FlowFile, FlowFormat};
pub use image::{read_image, write_image};

pub const HISTORY_HEADER: &str = "iter,level,rec,sm,lr,twowarp,total";

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default()
}

/// Loss trace as CSV, one row per optimizer step.
pub fn history_csv(history: &[HistoryEntry]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for h in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            h.iteration, h.level, h.rec, h.sm, h.lr, h.two_warp, h.total
        );
    }
    out
}

pub fn write_history(path: impl AsRef<Path>, history: &[HistoryEntry]) -> Result<()> {
    write_bytes(path.as_ref(), history_csv(history).as_bytes())
}
