//! Static-path ETL: raw gauge logs in, normalized CSV tables out.
//!
//! Each raw file is parsed, run through the [`crate::dsp`] chain for its
//! sensor kind and reduced to data rows. Files are then registered in a
//! FILE_INFO table with dense ids in first-seen order, and data tables carry
//! only the `filename_id` foreign key.
//!
//! # Raw format
//!
//! UTF-8 text. Leading `#` lines hold `key: value` metadata; the first other
//! line is the column header `seconds,<channel>[,<channel>...]`; every later
//! line is a data row.
//!
//! ```text
//! # kind: ASG
//! # gage: 104,105
//! # placement: 0.5,1.0
//! # cal_coeff: 1.02,0.98
//! # rated_output: 5890
//! # project: I-69
//! # test_section: TSI
//! seconds,ch104,ch105
//! 0.000,12.5,11.9
//! ```
//!
//! Per-channel keys (`gage`, `placement`, `cal_coeff`, `rated_output`) take
//! comma lists; a single value applies to every channel. File-level keys are
//! `kind`, `unit`, `project`, `test_section`, `sensor_type`, `location`,
//! `survey_date` (ISO date), `description`, plus optional DSP overrides
//! `window`, `polyorder`, `min_separation_s` and `prominence_fraction`.
//! Laser files use the columns `seconds,laser_reading_mm,beam_location_mm`
//! and a `start_time` key (`HH:MM:SS[.fff]`).

mod filename;
mod kind;
mod normalize;
mod process;
mod rawlog;

use std::path::PathBuf;

use thiserror::Error;

use crate::dsp::DspError;

pub use filename::{parse_filename, FileMeta};
pub use kind::SensorKind;
pub use normalize::{
    build_file_info, denormalize, emit_laser, emit_normalized, format_number, join_by_filename_id, FileInfoRow,
    JoinedRow, DATA_HEADER, FILE_INFO_HEADER, LASER_HEADER,
};
pub use process::{laser_horizontal, process_dir, process_file, DataRow, LaserRow, ProcessedFile};
pub use rawlog::{parse_raw_log, parse_raw_str, Channel, RawLog};

#[derive(Debug, Error)]
pub enum EtlError {
    #[error("{path}:{line}: {why}")]
    Format { path: String, line: usize, why: String },
    #[error("unknown sensor kind '{0}'")]
    UnknownKind(String),
    #[error("row references unknown file '{0}'")]
    DanglingReference(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("{path}: {source}")]
    Dsp { path: String, source: DspError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl EtlError {
    /// Errors caused by inconsistent tables rather than bad input files.
    pub fn is_integrity(&self) -> bool {
        matches!(self, EtlError::DanglingReference(_) | EtlError::Integrity(_))
    }
}
