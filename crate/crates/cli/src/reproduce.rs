//! Recomputes published win-score rows from transcribed per-cell fixtures.
//!
//! Fixture tables are wide CSVs: `task_id,dataset_id,strategy,metric,
//! direction,domain,data_hours` followed by one `family@size` column per
//! model. `published_scores.csv` lists the rows to check as
//! `row,sources,model,value,denominator`, where `sources` names one or more
//! fixture stems joined by `;`.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use ppgbench_core::eval::{
    combined_scores, parse_model_size, win_scores, EvalError, ModelKey, ResultRecord, TiePrecision,
};
use serde::Serialize;
use thiserror::Error;

pub const PUBLISHED_FILE: &str = "published_scores.csv";
/// Agreement needed between a recomputed and a printed score.
pub const SCORE_TOLERANCE: f64 = 0.01;
/// Printed cells carry two decimals, so ties are judged at that precision.
pub const FIXTURE_TIES: TiePrecision = TiePrecision::Decimals(2);

const META: [&str; 7] = ["task_id", "dataset_id", "strategy", "metric", "direction", "domain", "data_hours"];

#[derive(Debug, Error)]
pub enum ReproduceError {
    #[error("missing fixture: {0}")]
    MissingFixture(String),
    #[error("{file} row {row}: {message}")]
    BadFixture { file: String, row: usize, message: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowCheck {
    pub row: String,
    pub sources: String,
    pub model: String,
    pub published: f64,
    pub computed: f64,
    pub denominator: usize,
    pub tasks: usize,
    pub matches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproReport {
    pub tolerance: f64,
    pub rows: Vec<RowCheck>,
}

impl ReproReport {
    pub fn mismatches(&self) -> impl Iterator<Item = &RowCheck> {
        self.rows.iter().filter(|r| !r.matches)
    }

    pub fn all_match(&self) -> bool {
        self.mismatches().next().is_none()
    }
}

fn open(path: &Path) -> Result<File, ReproduceError> {
    File::open(path).map_err(|e| ReproduceError::MissingFixture(format!("{}: {e}", path.display())))
}

fn reader(path: &Path) -> Result<csv::Reader<File>, ReproduceError> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(open(path)?))
}

fn model_column(name: &str) -> Option<ModelKey> {
    let (family, size) = name.split_once('@')?;
    Some(ModelKey::new(family, parse_model_size(size)?))
}

/// Loads one wide fixture table into long-format records. An empty model
/// cell is reported as a missing fixture naming the cell.
pub fn load_fixture_table(path: &Path) -> Result<Vec<ResultRecord>, ReproduceError> {
    let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let bad = |row: usize, message: String| ReproduceError::BadFixture {
        file: file.clone(),
        row,
        message,
    };
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if headers.len() <= META.len() || headers.iter().zip(META).any(|(h, m)| h != m) {
        return Err(bad(1, format!("header must start with {}", META.join(","))));
    }
    let models: Vec<(String, ModelKey)> = headers
        .iter()
        .skip(META.len())
        .map(|h| model_column(h).map(|k| (h.to_string(), k)).ok_or_else(|| bad(1, format!("bad model column '{h}'"))))
        .collect::<Result<_, _>>()?;

    // Re-use the long-format parser for field validation.
    let mut long = String::from("task_id,dataset_id,model_id,model_size,strategy,metric,value,direction,domain,data_hours\n");
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.position().map(|p| p.line() as usize).unwrap_or(0), e.to_string()))?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        for (j, (name, key)) in models.iter().enumerate() {
            let cell = rec.get(META.len() + j).unwrap_or("");
            if cell.is_empty() {
                return Err(ReproduceError::MissingFixture(format!(
                    "{file}: task '{}' dataset '{}' has no value for {name}",
                    &rec[0], &rec[1]
                )));
            }
            long.push_str(&format!(
                "{},\"{}\",{},{},{},{},{},{},{},{}\n",
                &rec[0], &rec[1], key.model_id, key.size, &rec[2], &rec[3], cell, &rec[4], &rec[5], &rec[6]
            ));
            rows.push(row);
        }
    }
    ppgbench_core::eval::read_results_csv(long.as_bytes()).map_err(|e| match e {
        EvalError::BadRow { row, message } => bad(rows.get(row.saturating_sub(2)).copied().unwrap_or(0), message),
        other => other.into(),
    })
}

#[derive(Debug)]
struct Published {
    row: String,
    sources: String,
    model: String,
    value: f64,
    denominator: usize,
}

fn load_published(path: &Path) -> Result<Vec<Published>, ReproduceError> {
    let bad = |row: usize, message: String| ReproduceError::BadFixture {
        file: PUBLISHED_FILE.into(),
        row,
        message,
    };
    let mut out = Vec::new();
    for rec in reader(path)?.records() {
        let rec = rec.map_err(|e| bad(e.position().map(|p| p.line() as usize).unwrap_or(0), e.to_string()))?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 5 {
            return Err(bad(row, format!("expected 5 fields, got {}", rec.len())));
        }
        out.push(Published {
            row: rec[0].to_string(),
            sources: rec[1].to_string(),
            model: rec[2].to_string(),
            value: rec[3].parse().map_err(|_| bad(row, format!("bad value '{}'", &rec[3])))?,
            denominator: rec[4].parse().map_err(|_| bad(row, format!("bad denominator '{}'", &rec[4])))?,
        });
    }
    Ok(out)
}

/// Checks every published row in `dir` against scores recomputed from the
/// fixture tables it names.
pub fn reproduce_scores(dir: &Path) -> Result<ReproReport, ReproduceError> {
    let published = load_published(&dir.join(PUBLISHED_FILE))?;
    let mut tables: BTreeMap<String, Vec<ResultRecord>> = BTreeMap::new();
    let mut rows = Vec::new();
    for p in published {
        let mut records = Vec::new();
        for stem in p.sources.split(';').map(str::trim) {
            if !tables.contains_key(stem) {
                let path: PathBuf = dir.join(format!("{stem}.csv"));
                tables.insert(stem.to_string(), load_fixture_table(&path)?);
            }
            records.extend(tables[stem].iter().cloned());
        }
        let scores = win_scores(&records, FIXTURE_TIES).map_err(|e| match e {
            EvalError::MissingCell { task, dataset, model } => ReproduceError::MissingFixture(format!(
                "{}: task '{task}' dataset '{dataset}' has no value for {model}",
                p.sources
            )),
            other => other.into(),
        })?;
        let computed = match model_column(&p.model) {
            Some(key) => {
                if !scores.per_model.contains_key(&key) {
                    return Err(ReproduceError::MissingFixture(format!("{}: no column for {}", p.sources, p.model)));
                }
                scores.get(&key)
            }
            None => *combined_scores(&scores)
                .get(&p.model)
                .ok_or_else(|| ReproduceError::MissingFixture(format!("{}: no family '{}'", p.sources, p.model)))?,
        };
        rows.push(RowCheck {
            matches: (computed - p.value).abs() <= SCORE_TOLERANCE && scores.tasks == p.denominator,
            row: p.row,
            sources: p.sources,
            model: p.model,
            published: p.value,
            computed,
            denominator: p.denominator,
            tasks: scores.tasks,
        });
    }
    Ok(ReproReport {
        tolerance: SCORE_TOLERANCE,
        rows,
    })
}

pub fn default_fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("paper_tables")
}
