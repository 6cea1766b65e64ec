use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Head,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    F1,
    Accuracy,
    Mae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricFamily {
    Classification,
    Regression,
}

impl Metric {
    pub fn family(self) -> MetricFamily {
        match self {
            Metric::F1 | Metric::Accuracy => MetricFamily::Classification,
            Metric::Mae => MetricFamily::Regression,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    In,
    Out,
}

/// One published or measured cell: a model of a given size, tuned with a
/// given strategy, scored on one task of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub task_id: String,
    pub dataset_id: String,
    pub model_id: String,
    /// Parameter count.
    pub model_size: f64,
    pub strategy: Strategy,
    pub metric: Metric,
    pub value: f64,
    pub direction: Direction,
    pub domain: Domain,
    pub data_hours: Option<f64>,
}

/// Accepts plain counts or `K`/`M`/`B` suffixes (`40M` = 4e7).
pub fn parse_model_size(s: &str) -> Option<f64> {
    let s = s.trim();
    let (num, mult) = match s.chars().last()? {
        'k' | 'K' => (&s[..s.len() - 1], 1e3),
        'm' | 'M' => (&s[..s.len() - 1], 1e6),
        'b' | 'B' | 'g' | 'G' => (&s[..s.len() - 1], 1e9),
        _ => (s, 1.0),
    };
    let v: f64 = num.trim().parse().ok()?;
    (v.is_finite() && v > 0.0).then_some(v * mult)
}

const COLUMNS: [&str; 10] = [
    "task_id",
    "dataset_id",
    "model_id",
    "model_size",
    "strategy",
    "metric",
    "value",
    "direction",
    "domain",
    "data_hours",
];

fn parse_enum<T: for<'de> Deserialize<'de>>(s: &str) -> Option<T> {
    serde_json::from_value(serde_json::Value::String(s.trim().to_ascii_lowercase())).ok()
}

/// Reads the results CSV. Lines starting with `#` are comments. Rows are
/// numbered from 1 at the header, matching what a spreadsheet shows.
pub fn read_results_csv<R: Read>(reader: R) -> Result<Vec<ResultRecord>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| EvalError::BadRow {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut pos = BTreeMap::new();
    for name in COLUMNS {
        match headers.iter().position(|h| h == name) {
            Some(i) => {
                pos.insert(name, i);
            }
            None if name == "data_hours" => {}
            None => {
                return Err(EvalError::BadRow {
                    row: 1,
                    message: format!("missing column '{name}'"),
                })
            }
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| EvalError::BadRow {
            row: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |message: String| EvalError::BadRow { row, message };
        let field = |name: &str| -> Result<&str, EvalError> {
            pos.get(name)
                .and_then(|&i| rec.get(i))
                .ok_or_else(|| bad(format!("missing field '{name}'")))
        };
        let model_size = parse_model_size(field("model_size")?)
            .ok_or_else(|| bad(format!("invalid model_size '{}'", field("model_size").unwrap_or(""))))?;
        let value: f64 = field("value")?
            .parse()
            .map_err(|_| bad(format!("invalid value '{}'", field("value").unwrap_or(""))))?;
        if !value.is_finite() {
            return Err(bad(format!("value must be finite, got {value}")));
        }
        let strategy = parse_enum(field("strategy")?)
            .ok_or_else(|| bad(format!("invalid strategy '{}'", field("strategy").unwrap_or(""))))?;
        let metric = parse_enum(field("metric")?)
            .ok_or_else(|| bad(format!("invalid metric '{}'", field("metric").unwrap_or(""))))?;
        let direction: Direction = field("direction")?.parse().map_err(bad)?;
        let domain = parse_enum(field("domain")?)
            .ok_or_else(|| bad(format!("invalid domain '{}'", field("domain").unwrap_or(""))))?;
        let data_hours = match pos.get("data_hours").and_then(|&i| rec.get(i)) {
            None | Some("") => None,
            Some(s) => {
                let h: f64 = s.parse().map_err(|_| bad(format!("invalid data_hours '{s}'")))?;
                if !(h >= 0.0) {
                    return Err(bad(format!("data_hours must be >= 0, got {h}")));
                }
                Some(h)
            }
        };
        let task_id = field("task_id")?.to_string();
        let dataset_id = field("dataset_id")?.to_string();
        let model_id = field("model_id")?.to_string();
        if task_id.is_empty() || dataset_id.is_empty() || model_id.is_empty() {
            return Err(bad("task_id, dataset_id and model_id must be non-empty".into()));
        }
        out.push(ResultRecord {
            task_id,
            dataset_id,
            model_id,
            model_size,
            strategy,
            metric,
            value,
            direction,
            domain,
            data_hours,
        });
    }
    check_directions(&out)?;
    Ok(out)
}

fn check_directions(records: &[ResultRecord]) -> Result<(), EvalError> {
    let mut seen: BTreeMap<&str, Direction> = BTreeMap::new();
    for r in records {
        if let Some(d) = seen.insert(&r.task_id, r.direction) {
            if d != r.direction {
                return Err(EvalError::InconsistentDirection {
                    task: r.task_id.clone(),
                });
            }
        }
    }
    Ok(())
}

fn enum_str<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn write_results_csv<W: Write>(records: &[ResultRecord], writer: W) -> Result<(), EvalError> {
    let io = |e: csv::Error| EvalError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS).map_err(io)?;
    for r in records {
        w.write_record([
            r.task_id.clone(),
            r.dataset_id.clone(),
            r.model_id.clone(),
            format!("{}", r.model_size),
            enum_str(&r.strategy),
            enum_str(&r.metric),
            format!("{}", r.value),
            r.direction.as_str().to_string(),
            enum_str(&r.domain),
            r.data_hours.map(|h| h.to_string()).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| EvalError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# comment line
task_id,dataset_id,model_id,model_size,strategy,metric,value,direction,domain,data_hours
hr,dalia,moment,40M,full,mae,7.5,lower,out,36.5
af,stanford,ppg-gpt,19000000,head,f1,0.8,higher,in,
";

    #[test]
    fn reads_and_round_trips() {
        let recs = read_results_csv(SAMPLE.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].model_size, 4e7);
        assert_eq!(recs[0].data_hours, Some(36.5));
        assert_eq!(recs[1].data_hours, None);
        assert_eq!(recs[1].strategy, Strategy::Head);
        let mut buf = Vec::new();
        write_results_csv(&recs, &mut buf).unwrap();
        assert_eq!(read_results_csv(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn bad_row_is_named() {
        let bad = SAMPLE.replace("7.5", "seven");
        match read_results_csv(bad.as_bytes()) {
            Err(EvalError::BadRow { row, message }) => {
                assert_eq!(row, 3);
                assert!(message.contains("seven"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inconsistent_direction_rejected() {
        let bad = format!("{SAMPLE}hr,bidmc,moment,40M,full,mae,3,higher,in,\n");
        assert!(matches!(
            read_results_csv(bad.as_bytes()),
            Err(EvalError::InconsistentDirection { .. })
        ));
    }

    #[test]
    fn model_sizes() {
        assert_eq!(parse_model_size("385M"), Some(3.85e8));
        assert_eq!(parse_model_size("1.5B"), Some(1.5e9));
        assert_eq!(parse_model_size("0"), None);
        assert_eq!(parse_model_size("x"), None);
    }
}
