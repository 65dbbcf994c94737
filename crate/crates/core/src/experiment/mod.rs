//! Config-driven simulation grids: parse a `section.key = value` file, run
//! every cell (in parallel, rows kept in config order) and report CSV or an
//! aligned table.

mod config;
mod report;

pub use config::{Cell, ExperimentConfig, OffsetSource};
pub use report::{format_sig, write_csv, write_table, ReportRow, CSV_HEADER};

use std::path::PathBuf;

use rayon::prelude::*;
use thiserror::Error;

use crate::accel::{simulate, SimError};
use crate::ops::{OffsetField, OffsetLayout};
use crate::tensor::{read_tensor, SeedSpec, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("incompatible configuration: {0}")]
    Incompatible(String),
    #[error("offsets: {0}")]
    Offsets(#[from] TensorError),
    #[error("cell '{label}': {source}")]
    Sim {
        label: String,
        #[source]
        source: SimError,
    },
}

impl ConfigError {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        ConfigError::Parse { line, msg: msg.into() }
    }

    /// 2 for anything wrong with the config text, 3 for a combination the
    /// model cannot run.
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Parse { .. } | ConfigError::Io { .. } => 2,
            ConfigError::Incompatible(_) | ConfigError::Offsets(_) | ConfigError::Sim { .. } => 3,
        }
    }
}

impl Cell {
    /// Materializes the cell's offset field (`None` for non-deformable cells).
    pub fn offset_field(&self) -> Result<Option<OffsetField>, ConfigError> {
        let Some(layout) = self.spec.variant.offset_layout() else {
            return Ok(None);
        };
        let random = |layout, seed, lo, hi| -> Result<OffsetField, ConfigError> {
            let shape = OffsetField::zeros(&self.spec, layout)
                .map_err(|e| ConfigError::Incompatible(e.to_string()))?
                .tensor()
                .shape();
            let t = Tensor::random(shape, SeedSpec::integers(seed, lo, hi))?;
            OffsetField::new(layout, t).map_err(|e| ConfigError::Incompatible(e.to_string()))
        };
        let field = match &self.offsets {
            OffsetSource::Zeros => {
                OffsetField::zeros(&self.spec, layout).map_err(|e| ConfigError::Incompatible(e.to_string()))?
            }
            OffsetSource::Uniform { seed, lo, hi } => random(OffsetLayout::Full, *seed, *lo, *hi)?,
            OffsetSource::SquareUniform { seed, lo, hi } => random(OffsetLayout::Square, *seed, *lo, *hi)?,
            OffsetSource::File(p) => {
                let f =
                    OffsetField::from_tensor(read_tensor(p)?).map_err(|e| ConfigError::Incompatible(e.to_string()))?;
                f.check(&self.spec, layout)
                    .map_err(|e| ConfigError::Incompatible(e.to_string()))?;
                f
            }
        };
        Ok(Some(field))
    }

    pub fn run(&self) -> Result<ReportRow, ConfigError> {
        let off = self.offset_field()?;
        let report = simulate(&self.spec, off.as_ref(), &self.engine, &self.memory).map_err(|source| match source {
            SimError::RequiresBoundedVariant { .. } => ConfigError::Incompatible(source.to_string()),
            _ => ConfigError::Sim {
                label: self.label.clone(),
                source,
            },
        })?;
        Ok(ReportRow::new(self, report))
    }
}

/// Runs every cell `repeats` times. Rows come back in config order, each
/// cell's repeats adjacent.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, ConfigError> {
    let jobs: Vec<&Cell> = cfg
        .cells
        .iter()
        .flat_map(|c| std::iter::repeat_n(c, cfg.repeats))
        .collect();
    jobs.par_iter().map(|c| c.run()).collect()
}
