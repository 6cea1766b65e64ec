//! Dataset ingestion, label alignment and participant-level splits.

mod align;
mod io;
mod split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{SignalError, Unit};

pub use align::{align_labs, align_vitals, TaskSpec, DEFAULT_LOOKBACK_S};
pub use io::{
    ingest_jsonl, ingest_reader, parse_jsonl, read_labs_csv, read_vitals_csv, to_jsonl_line, write_jsonl,
    LabelKind, SegmentRecord,
};
pub use split::{loo_folds, ratio_split, record_split, Fold, SplitPlan, SplitProtocol, SubjectKey};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: missing field '{field}'")]
    Schema { line: usize, field: String },
    #[error("line {line}: {source}")]
    InvalidSegment {
        line: usize,
        #[source]
        source: SignalError,
    },
    #[error("task '{task}' mixes units '{first}' and '{second}'")]
    UnitMismatch {
        task: String,
        first: String,
        second: String,
    },
    #[error("subject mismatch: signal '{signal}' vs labels '{labels}'")]
    SubjectMismatch { signal: String, labels: String },
    #[error("need at least {needed} distinct subjects, found {found}")]
    TooFewSubjects { needed: usize, found: usize },
    #[error("invalid split configuration: {0}")]
    InvalidSplit(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Analyte {
    Potassium,
    Sodium,
    Glucose,
    A1c,
    Troponin,
    Lactate,
    Hdl,
    Ldl,
    Lvef,
    Lvmass,
    Pr,
    Qrs,
    Qt,
    Sbp,
    Dbp,
    Generic,
}

impl Analyte {
    pub fn as_str(self) -> &'static str {
        match self {
            Analyte::Potassium => "potassium",
            Analyte::Sodium => "sodium",
            Analyte::Glucose => "glucose",
            Analyte::A1c => "a1c",
            Analyte::Troponin => "troponin",
            Analyte::Lactate => "lactate",
            Analyte::Hdl => "hdl",
            Analyte::Ldl => "ldl",
            Analyte::Lvef => "lvef",
            Analyte::Lvmass => "lvmass",
            Analyte::Pr => "pr",
            Analyte::Qrs => "qrs",
            Analyte::Qt => "qt",
            Analyte::Sbp => "sbp",
            Analyte::Dbp => "dbp",
            Analyte::Generic => "generic",
        }
    }

    /// Unknown names map to `Generic`.
    pub fn parse(s: &str) -> Analyte {
        match s.trim().to_ascii_lowercase().as_str() {
            "potassium" | "k" => Analyte::Potassium,
            "sodium" | "na" => Analyte::Sodium,
            "glucose" => Analyte::Glucose,
            "a1c" | "hba1c" => Analyte::A1c,
            "troponin" => Analyte::Troponin,
            "lactate" => Analyte::Lactate,
            "hdl" => Analyte::Hdl,
            "ldl" => Analyte::Ldl,
            "lvef" => Analyte::Lvef,
            "lvmass" => Analyte::Lvmass,
            "pr" => Analyte::Pr,
            "qrs" => Analyte::Qrs,
            "qt" => Analyte::Qt,
            "sbp" => Analyte::Sbp,
            "dbp" => Analyte::Dbp,
            _ => Analyte::Generic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabEvent {
    pub subject_id: String,
    pub t: f64,
    pub analyte: Analyte,
    pub value: f64,
    pub unit: Unit,
}

/// A regularly sampled vital-sign series. `None` marks a gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalStream {
    pub subject_id: String,
    pub t0: f64,
    pub rate: f64,
    pub values: Vec<Option<f64>>,
    pub unit: Unit,
}

impl VitalStream {
    pub fn end_time(&self) -> f64 {
        self.t0 + self.values.len() as f64 / self.rate
    }
}
