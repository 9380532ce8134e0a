//! On-disk formats: dataset CSV, binary checkpoints, PNG renders, run
//! configuration, training logs and evaluation reports.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod render;
pub mod report;

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::wgan::EpochLog;

pub use checkpoint::{checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint};
pub use config::RunConfig;
pub use dataset::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use render::{heatmap_image, render_png};
pub use report::{format_report, parse_report};

/// Writes `epoch,em_estimate,penalty,gen_loss` lines with a header.
pub fn write_training_log(log: &[EpochLog], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", EpochLog::HEADER)?;
    for e in log {
        writeln!(f, "{}", e.to_csv_line())?;
    }
    f.flush()?;
    Ok(())
}
