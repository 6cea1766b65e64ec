use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Analyte, DatasetError, LabEvent, VitalStream};
use crate::signal::{Label, LabeledSegment, Segment, SignalError, Unit};
use crate::Direction;

const REQUIRED_FIELDS: [&str; 10] = [
    "subject_id",
    "task_id",
    "fs",
    "duration_s",
    "samples",
    "label",
    "label_kind",
    "unit",
    "direction",
    "start_time",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Class,
    Real,
}

/// One line of the segment JSONL format. `channel_count` is optional and
/// defaults to 1; multi-channel samples are channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub subject_id: String,
    pub task_id: String,
    pub fs: f64,
    pub duration_s: f64,
    pub samples: Vec<f64>,
    pub label: f64,
    pub label_kind: LabelKind,
    pub unit: String,
    pub direction: Direction,
    pub start_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_count: Option<usize>,
}

impl SegmentRecord {
    pub fn channels(&self) -> usize {
        self.channel_count.unwrap_or(1)
    }

    pub fn label(&self) -> Result<Label, String> {
        match self.label_kind {
            LabelKind::Real => Ok(Label::Real {
                value: self.label,
                unit: Unit::from(self.unit.clone()),
            }),
            LabelKind::Class => {
                if self.label >= 0.0 && self.label.fract() == 0.0 && self.label.is_finite() {
                    Ok(Label::Class(self.label as usize))
                } else {
                    Err(format!("class label must be a non-negative integer, got {}", self.label))
                }
            }
        }
    }

    /// Extracts channel `channel` (zero-based) as a labeled segment.
    /// `line` is only used for error reporting.
    pub fn to_labeled(&self, channel: usize, line: usize) -> Result<LabeledSegment, DatasetError> {
        let invalid = |source| DatasetError::InvalidSegment { line, source };
        let channels = self.channels();
        if channel >= channels {
            return Err(invalid(SignalError::ChannelOutOfRange {
                index: channel,
                count: channels,
            }));
        }
        if channels == 0 || self.samples.len() % channels != 0 {
            return Err(invalid(SignalError::ChannelLayout {
                len: self.samples.len(),
                channels,
            }));
        }
        let n = self.samples.len() / channels;
        let samples = self.samples[channel * n..(channel + 1) * n].to_vec();
        let segment = Segment::new(
            samples,
            self.fs,
            self.duration_s,
            self.subject_id.clone(),
            self.start_time,
        )
        .map_err(invalid)?;
        let label = self
            .label()
            .map_err(|message| DatasetError::Parse { line, message })?;
        Ok(LabeledSegment {
            segment,
            label,
            task_id: self.task_id.clone(),
            direction: self.direction,
        })
    }

    pub fn from_labeled(ls: &LabeledSegment) -> Self {
        let (label, label_kind, unit) = match &ls.label {
            Label::Class(c) => (*c as f64, LabelKind::Class, String::new()),
            Label::Real { value, unit } => (*value, LabelKind::Real, unit.as_str().to_string()),
        };
        Self {
            subject_id: ls.segment.subject_id.clone(),
            task_id: ls.task_id.clone(),
            fs: ls.segment.fs(),
            duration_s: ls.segment.duration_s(),
            samples: ls.segment.samples().to_vec(),
            label,
            label_kind,
            unit,
            direction: ls.direction,
            start_time: ls.segment.start_time,
            channel_count: None,
        }
    }
}

fn parse_record(line_no: usize, line: &str) -> Result<SegmentRecord, DatasetError> {
    let value: Value = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| DatasetError::Parse {
        line: line_no,
        message: "expected a JSON object".into(),
    })?;
    if let Some(field) = REQUIRED_FIELDS.iter().find(|f| !obj.contains_key(**f)) {
        return Err(DatasetError::Schema {
            line: line_no,
            field: field.to_string(),
        });
    }
    serde_json::from_value(value).map_err(|e| DatasetError::Parse {
        line: line_no,
        message: e.to_string(),
    })
}

/// Parses raw JSONL records without converting them to segments. Blank
/// lines are skipped.
pub fn parse_jsonl<R: Read>(reader: R) -> Result<Vec<(usize, SegmentRecord)>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, parse_record(i + 1, &line)?));
    }
    Ok(out)
}

/// Reads the segment JSONL contract, validating every record and checking
/// that each task uses a single unit.
pub fn ingest_jsonl(path: impl AsRef<Path>) -> Result<Vec<LabeledSegment>, DatasetError> {
    ingest_reader(std::fs::File::open(path)?, 0)
}

/// Like [`ingest_jsonl`] over any reader, selecting channel `channel` (zero-based).
pub fn ingest_reader<R: Read>(
    reader: R,
    channel: usize,
) -> Result<Vec<LabeledSegment>, DatasetError> {
    let mut units: HashMap<String, String> = HashMap::new();
    let mut out = Vec::new();
    for (line, rec) in parse_jsonl(reader)? {
        match units.get(&rec.task_id) {
            Some(u) if *u != rec.unit => {
                return Err(DatasetError::UnitMismatch {
                    task: rec.task_id.clone(),
                    first: u.clone(),
                    second: rec.unit.clone(),
                })
            }
            Some(_) => {}
            None => {
                units.insert(rec.task_id.clone(), rec.unit.clone());
            }
        }
        out.push(rec.to_labeled(channel, line)?);
    }
    Ok(out)
}

pub fn to_jsonl_line(record: &SegmentRecord) -> String {
    serde_json::to_string(record).expect("segment record serializes")
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[SegmentRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}", to_jsonl_line(r))?;
    }
    Ok(())
}

fn csv_err(line: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(line: usize, field: &str, s: &str) -> Result<f64, DatasetError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| csv_err(line, format!("field '{field}': '{s}' is not a finite number")))
}

fn csv_records<R: Read>(
    reader: R,
    expected: &[&str],
) -> Result<Vec<(usize, csv::StringRecord)>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(1, e.to_string()))?.clone();
    for field in expected {
        if !headers.iter().any(|h| h == *field) {
            return Err(DatasetError::Schema {
                line: 1,
                field: field.to_string(),
            });
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            csv_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        // Reorder to the expected column order.
        let ordered: csv::StringRecord = expected
            .iter()
            .map(|f| {
                let idx = headers.iter().position(|h| h == *f).unwrap();
                rec.get(idx).unwrap_or("")
            })
            .collect();
        out.push((line, ordered));
    }
    Ok(out)
}

/// Lab events CSV: `subject_id,t,analyte,value,unit`.
pub fn read_labs_csv<R: Read>(reader: R) -> Result<Vec<LabEvent>, DatasetError> {
    csv_records(reader, &["subject_id", "t", "analyte", "value", "unit"])?
        .into_iter()
        .map(|(line, r)| {
            Ok(LabEvent {
                subject_id: r[0].to_string(),
                t: parse_f64(line, "t", &r[1])?,
                analyte: Analyte::parse(&r[2]),
                value: parse_f64(line, "value", &r[3])?,
                unit: Unit::from(r[4].to_string()),
            })
        })
        .collect()
}

/// Vitals CSV: `subject_id,t0,rate,values` with semicolon-joined values.
/// Empty entries or `nan`/`NA` mark gaps.
pub fn read_vitals_csv<R: Read>(reader: R, unit: Unit) -> Result<Vec<VitalStream>, DatasetError> {
    csv_records(reader, &["subject_id", "t0", "rate", "values"])?
        .into_iter()
        .map(|(line, r)| {
            let rate = parse_f64(line, "rate", &r[2])?;
            if rate <= 0.0 {
                return Err(csv_err(line, "rate must be > 0"));
            }
            let values = r[3]
                .split(';')
                .map(|v| {
                    let v = v.trim();
                    if v.is_empty() || v.eq_ignore_ascii_case("nan") || v.eq_ignore_ascii_case("na")
                    {
                        Ok(None)
                    } else {
                        parse_f64(line, "values", v).map(Some)
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(VitalStream {
                subject_id: r[0].to_string(),
                t0: parse_f64(line, "t0", &r[1])?,
                rate,
                values,
                unit: unit.clone(),
            })
        })
        .collect()
}
