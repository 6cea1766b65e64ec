//! Label alignment. Vitals become the median over each fully covered PPG
//! window; lab values attach to every window ending inside the lookback
//! interval before the draw, so the waveform always precedes the label.

use super::{DatasetError, LabEvent, VitalStream};
use crate::signal::{segment, Label, LabeledSegment, Signal, Unit};
use crate::Direction;

/// One hour of PPG before each lab draw.
pub const DEFAULT_LOOKBACK_S: f64 = 3600.0;

// Absorbs rounding when window edges are computed from sample counts.
const TIME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub task_id: String,
    pub unit: Unit,
    pub direction: Direction,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Pairs each `window_s` PPG window with the median of the vitals samples
/// inside it. Windows the vitals do not fully cover, or that contain a gap,
/// are dropped.
pub fn align_vitals(
    ppg: &Signal,
    vitals: &VitalStream,
    window_s: f64,
    task: &TaskSpec,
) -> Result<Vec<LabeledSegment>, DatasetError> {
    if ppg.subject_id != vitals.subject_id {
        return Err(DatasetError::SubjectMismatch {
            signal: ppg.subject_id.clone(),
            labels: vitals.subject_id.clone(),
        });
    }
    let mut out = Vec::new();
    for seg in segment(ppg, window_s)? {
        let start = (seg.start_time - vitals.t0) * vitals.rate;
        let end = (seg.end_time() - vitals.t0) * vitals.rate;
        if start < -TIME_TOL || end > vitals.values.len() as f64 + TIME_TOL {
            continue;
        }
        let lo = (start - TIME_TOL).ceil().max(0.0) as usize;
        let hi = ((end - TIME_TOL).ceil() as usize).min(vitals.values.len());
        if hi <= lo {
            continue;
        }
        let Some(mut window) = vitals.values[lo..hi].iter().copied().collect::<Option<Vec<f64>>>()
        else {
            continue;
        };
        let value = median(&mut window);
        out.push(LabeledSegment {
            segment: seg,
            label: Label::Real {
                value,
                unit: task.unit.clone(),
            },
            task_id: task.task_id.clone(),
            direction: task.direction,
        });
    }
    Ok(out)
}

/// Pairs every `window_s` PPG window whose end time `e` satisfies
/// `t - lookback_s <= e <= t` with the lab drawn at `t`. A window inside two
/// labs' lookbacks is emitted once per lab.
pub fn align_labs(
    ppg: &Signal,
    labs: &[LabEvent],
    lookback_s: f64,
    window_s: f64,
) -> Result<Vec<LabeledSegment>, DatasetError> {
    if let Some(lab) = labs.iter().find(|l| l.subject_id != ppg.subject_id) {
        return Err(DatasetError::SubjectMismatch {
            signal: ppg.subject_id.clone(),
            labels: lab.subject_id.clone(),
        });
    }
    let segs = segment(ppg, window_s)?;
    let mut out = Vec::new();
    for lab in labs {
        for seg in &segs {
            let end = seg.end_time();
            if lab.t - lookback_s <= end && end <= lab.t {
                out.push(LabeledSegment {
                    segment: seg.clone(),
                    label: Label::Real {
                        value: lab.value,
                        unit: lab.unit.clone(),
                    },
                    task_id: lab.analyte.as_str().to_string(),
                    direction: Direction::Lower,
                });
            }
        }
    }
    Ok(out)
}
