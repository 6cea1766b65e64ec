use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use ppgbench_core::baselines::{
    beat_features, histories_by_subject, hr_ibi, locf_predict, ridge_fit, rr_baseline_wander, BaselineError,
    MorphFeatures,
};
use ppgbench_core::dataset::{
    ingest_reader, loo_folds, ratio_split, read_labs_csv, record_split, write_jsonl, Analyte, DatasetError,
    LabelKind, SegmentRecord, SplitPlan,
};
use ppgbench_core::eval::{
    classification_metrics, dimension_report, mae, read_results_csv, regime_pairs, regime_summary, DimensionReport,
    EvalError, MetricFamily, RegimeRow, ResultRecord, Strategy, TiePrecision, DIMENSIONS,
};
use ppgbench_core::model::{
    load_checkpoint, patch_len_for, save_checkpoint, tokenize, train, AttentionMode, Example, FreezeMode,
    ModelConfig, ModelParams, Objective, TaskTarget, TrainObjective, TrainerConfig,
};
use ppgbench_core::signal::{minmax_normalize, repeat_pad, resample, segment, Label, LabeledSegment, Signal};
use ppgbench_core::synth::{synth_ppg, SynthSpec};
use ppgbench_core::Direction;
use serde::Serialize;

use crate::manifest::{guard_outputs, write_manifest, write_output};
use crate::reproduce::{default_fixture_dir, reproduce_scores, ReproduceError};
use crate::*;

pub(crate) fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Preprocess(a) => preprocess(cli, a),
        Command::Split(a) => split(cli, a),
        Command::Baseline(b) => match b {
            BaselineCommand::Hr(a) => segment_baseline(cli, a, "baseline hr"),
            BaselineCommand::Rr(a) => segment_baseline(cli, a, "baseline rr"),
            BaselineCommand::Morph(a) => segment_baseline(cli, a, "baseline morph"),
            BaselineCommand::Ridge(a) => ridge(cli, a),
            BaselineCommand::Locf(a) => locf(cli, a),
        },
        Command::Train(a) => train_cmd(cli, a),
        Command::Evaluate(a) => evaluate(cli, a),
        Command::Report(a) => report(cli, a),
        Command::Reproduce(a) => reproduce(cli, a),
    }
}

fn open(stage: &'static str, path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::runtime(stage, format!("{}: {e}", path.display())))
}

fn dataset_err(stage: &'static str, e: DatasetError) -> CliError {
    match e {
        DatasetError::Io(_) => CliError::runtime(stage, e),
        other => CliError::input(stage, other),
    }
}

fn load_segments(stage: &'static str, path: &Path, channel: usize) -> Result<Vec<LabeledSegment>, CliError> {
    ingest_reader(open(stage, path)?, channel).map_err(|e| dataset_err(stage, e))
}

fn jsonl_bytes(records: &[SegmentRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, records).expect("writing to memory");
    buf
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::runtime("output", e))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::runtime("output", e))?;
    }
    w.into_inner().map_err(|e| CliError::runtime("output", e))
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_vec_pretty(v).map_err(|e| CliError::runtime("output", e))?;
    s.push(b'\n');
    Ok(s)
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<(), CliError> {
    guard_outputs(&[&a.out], cli.force)?;
    let mut records = Vec::with_capacity(a.count);
    for i in 0..a.count {
        let spec = SynthSpec {
            hr_bpm: a.hr,
            rr_brpm: a.rr,
            wander_amp: a.wander,
            noise_std: a.noise,
            fs: a.fs,
            duration_s: a.duration,
            seed: cli.seed.wrapping_add(i as u64),
            ..Default::default()
        };
        let subject = if a.count == 1 { a.subject.clone() } else { format!("{}-{i}", a.subject) };
        let (signal, truth) = synth_ppg(&spec, subject.clone()).map_err(|e| CliError::input("synth", e))?;
        let (task, label, unit) = match a.label {
            SynthLabel::Hr => ("hr", truth.hr_bpm, "bpm"),
            SynthLabel::Rr => ("rr", truth.rr_brpm, "brpm"),
        };
        records.push(SegmentRecord {
            subject_id: subject,
            task_id: task.into(),
            fs: signal.fs(),
            duration_s: signal.duration_s(),
            samples: signal.samples().to_vec(),
            label,
            label_kind: LabelKind::Real,
            unit: unit.into(),
            direction: Direction::Lower,
            start_time: signal.start_time,
            channel_count: None,
        });
    }
    write_output(&a.out, &jsonl_bytes(&records))?;
    write_manifest("synth", cli.seed, a, &[], &[&a.out])
}

fn preprocess(cli: &Cli, a: &PreprocessArgs) -> Result<(), CliError> {
    guard_outputs(&[&a.out], cli.force)?;
    let stage = "preprocess";
    let mut out = Vec::new();
    for ls in load_segments(stage, &a.input, a.channel)? {
        let seg = &ls.segment;
        let signal = Signal::new(seg.samples().to_vec(), seg.fs(), seg.subject_id.clone(), seg.start_time)
            .map_err(|e| CliError::input(stage, e))?;
        let signal = resample(&signal, a.fs).map_err(|e| CliError::input(stage, e))?;
        let windows = if signal.duration_s() < a.window {
            let whole = segment(&signal, signal.duration_s()).map_err(|e| CliError::input(stage, e))?;
            whole
                .iter()
                .map(|w| repeat_pad(w, a.window))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::input(stage, e))?
        } else {
            segment(&signal, a.window).map_err(|e| CliError::input(stage, e))?
        };
        for w in windows {
            let w = if a.raw { w } else { minmax_normalize(&w) };
            out.push(SegmentRecord::from_labeled(&LabeledSegment {
                segment: w,
                label: ls.label.clone(),
                task_id: ls.task_id.clone(),
                direction: ls.direction,
            }));
        }
    }
    write_output(&a.out, &jsonl_bytes(&out))?;
    eprintln!("preprocess: wrote {} windows", out.len());
    write_manifest(stage, cli.seed, a, &[&a.input], &[&a.out])
}

fn parse_ratios(s: &str) -> Result<[f64; 3], CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--ratios expects three comma-separated numbers, got '{s}'")))?;
    v.try_into()
        .map_err(|_| CliError::Usage(format!("--ratios expects three comma-separated numbers, got '{s}'")))
}

fn split(cli: &Cli, a: &SplitArgs) -> Result<(), CliError> {
    guard_outputs(&[&a.out], cli.force)?;
    let stage = "split";
    let segs = load_segments(stage, &a.input, 0)?;
    let plan = match a.protocol {
        ProtocolArg::Loo => loo_folds(&segs, a.val_ratio, cli.seed),
        ProtocolArg::Ratio => ratio_split(&segs, parse_ratios(&a.ratios)?, cli.seed),
        ProtocolArg::Record => record_split(&segs, parse_ratios(&a.ratios)?, cli.seed),
    }
    .map_err(|e| dataset_err(stage, e))?;
    plan.validate(&segs).map_err(|e| CliError::runtime(stage, e))?;
    write_output(&a.out, &json_bytes(&plan)?)?;
    write_manifest(stage, cli.seed, a, &[&a.input], &[&a.out])
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn segment_baseline(cli: &Cli, a: &SegmentBaselineArgs, command: &'static str) -> Result<(), CliError> {
    guard_outputs(&[&a.out], cli.force)?;
    let segs = load_segments(command, &a.input, a.channel)?;
    let mut header: Vec<String> = ["subject_id", "start_time", "label"].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    let mut failed = 0usize;
    let (mut preds, mut labels) = (Vec::new(), Vec::new());
    match command {
        "baseline hr" | "baseline rr" => {
            header.push("prediction".into());
            if command == "baseline rr" {
                header.push("low_confidence".into());
            }
            for ls in &segs {
                let label = ls.label.as_f64();
                let mut row = vec![ls.segment.subject_id.clone(), fmt(ls.segment.start_time), fmt(label)];
                let result = if command == "baseline hr" {
                    hr_ibi(&ls.segment).map(|v| (v, None))
                } else {
                    rr_baseline_wander(&ls.segment).map(|e| (e.brpm, Some(e.low_confidence)))
                };
                match result {
                    Ok((v, conf)) => {
                        row.push(fmt(v));
                        if let Some(c) = conf {
                            row.push(c.to_string());
                        }
                        preds.push(v);
                        labels.push(label);
                    }
                    Err(e) => {
                        failed += 1;
                        eprintln!("{command}: {} @ {}: {e}", ls.segment.subject_id, ls.segment.start_time);
                        row.push(String::new());
                        if command == "baseline rr" {
                            row.push(String::new());
                        }
                    }
                }
                rows.push(row);
            }
        }
        _ => {
            header.extend(MorphFeatures::vector_names());
            for ls in &segs {
                match beat_features(&ls.segment) {
                    Ok(f) => {
                        let mut row =
                            vec![ls.segment.subject_id.clone(), fmt(ls.segment.start_time), fmt(ls.label.as_f64())];
                        row.extend(f.vector().into_iter().map(fmt));
                        rows.push(row);
                    }
                    Err(e) => {
                        failed += 1;
                        eprintln!("{command}: {} @ {}: {e}", ls.segment.subject_id, ls.segment.start_time);
                    }
                }
            }
        }
    }
    write_output(&a.out, &csv_bytes(&header, &rows)?)?;
    if !preds.is_empty() {
        let m = mae(&preds, &labels).map_err(|e| CliError::runtime(command, e))?;
        println!("{command}: mae {m:.4} over {} segments ({failed} without an estimate)", preds.len());
    } else if failed > 0 {
        eprintln!("{command}: {failed} segments skipped");
    }
    write_manifest(command, cli.seed, a, &[&a.input], &[&a.out])
}

fn features_for(segs: &[LabeledSegment], idx: &[usize]) -> (Vec<usize>, Vec<Vec<f64>>, Vec<f64>) {
    let mut kept = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for &i in idx {
        if let Ok(f) = beat_features(&segs[i].segment) {
            kept.push(i);
            x.push(f.vector());
            y.push(segs[i].label.as_f64());
        }
    }
    (kept, x, y)
}

fn ridge(cli: &Cli, a: &RidgeArgs) -> Result<(), CliError> {
    guard_outputs(&[&a.out], cli.force)?;
    let stage = "baseline ridge";
    let segs = load_segments(stage, &a.input, a.channel)?;
    let plan: SplitPlan =
        serde_json::from_reader(open(stage, &a.split)?).map_err(|e| CliError::input(stage, format!("split plan: {e}")))?;
    plan.validate(&segs).map_err(|e| CliError::input(stage, format!("split plan does not fit input: {e}")))?;
    let fold = plan
        .folds
        .get(a.fold)
        .ok_or_else(|| CliError::Usage(format!("--fold {} but the plan has {} folds", a.fold, plan.folds.len())))?;
    let (_, x, y) = features_for(&segs, &fold.train);
    let model = ridge_fit(&x, &y, a.lambda).map_err(|e| CliError::runtime(stage, e))?;
    let (kept, xt, yt) = features_for(&segs, &fold.test);
    let preds = model.predict(&xt).map_err(|e| CliError::runtime(stage, e))?;
    let header: Vec<String> =
        ["index", "subject_id", "start_time", "label", "prediction"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = kept
        .iter()
        .zip(&preds)
        .map(|(&i, &p)| {
            vec![
                i.to_string(),
                segs[i].segment.subject_id.clone(),
                fmt(segs[i].segment.start_time),
                fmt(segs[i].label.as_f64()),
                fmt(p),
            ]
        })
        .collect();
    write_output(&a.out, &csv_bytes(&header, &rows)?)?;
    if !preds.is_empty() {
        let m = mae(&preds, &yt).map_err(|e| CliError::runtime(stage, e))?;
        println!("{stage}: test mae {m:.4} over {} segments (train {})", preds.len(), x.len());
    }
    write_manifest(stage, cli.seed, a, &[&a.input, &a.split], &[&a.out])
}

fn locf(cli: &Cli, a: &LocfArgs) -> Result<(), CliError> {
    guard_outputs(&[&a.out], cli.force)?;
    let stage = "baseline locf";
    let events = read_labs_csv(open(stage, &a.labs)?).map_err(|e| dataset_err(stage, e))?;
    let analyte = Analyte::parse(&a.analyte);
    let histories = histories_by_subject(&events, analyte).map_err(|e| CliError::input(stage, e))?;
    let header: Vec<String> = ["subject_id", "t", "value", "prediction"].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    let (mut preds, mut labels) = (Vec::new(), Vec::new());
    for (subject, h) in &histories {
        for &(t, v) in h.observations() {
            match locf_predict(h, t) {
                Ok(p) => {
                    rows.push(vec![subject.clone(), fmt(t), fmt(v), fmt(p)]);
                    preds.push(p);
                    labels.push(v);
                }
                Err(BaselineError::NoHistory { .. }) => {}
                Err(e) => return Err(CliError::runtime(stage, e)),
            }
        }
    }
    write_output(&a.out, &csv_bytes(&header, &rows)?)?;
    if !preds.is_empty() {
        let m = mae(&preds, &labels).map_err(|e| CliError::runtime(stage, e))?;
        println!("{stage}: mae {m:.4} over {} draws", preds.len());
    }
    write_manifest(stage, cli.seed, a, &[&a.labs], &[&a.out])
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<(), CliError> {
    let mut outs: Vec<&Path> = vec![&a.out];
    if let Some(t) = &a.trace {
        outs.push(t);
    }
    guard_outputs(&outs, cli.force)?;
    let stage = "train";
    let segs = load_segments(stage, &a.input, a.channel)?;
    let Some(first) = segs.first() else {
        return Err(CliError::input(stage, "input has no segments"));
    };
    let task_outputs = segs
        .iter()
        .map(|s| match s.label {
            Label::Class(c) => c + 1,
            Label::Real { .. } => 1,
        })
        .max()
        .unwrap_or(1);
    let mut params = match &a.init {
        Some(path) => load_checkpoint(open(stage, path)?).map_err(|e| CliError::input(stage, e))?,
        None => {
            let objective = match a.objective {
                ObjectiveArg::NextPatchLaplace => Objective::NextPatchLaplace,
                ObjectiveArg::MaskedMse => Objective::MaskedMse,
                ObjectiveArg::NextPatchMse | ObjectiveArg::Task => Objective::NextPatchMse,
            };
            let cfg = ModelConfig {
                d_model: a.d_model,
                n_heads: a.heads,
                n_layers: a.layers,
                mlp_hidden: a.mlp_hidden,
                patch_len: patch_len_for(first.segment.fs()),
                mode: match a.mode {
                    ModeArg::Causal => AttentionMode::Causal,
                    ModeArg::Bidirectional => AttentionMode::Bidirectional,
                },
                objective,
                mask_fraction: a.mask_fraction,
                task_outputs,
                seed: cli.seed,
                ..Default::default()
            };
            ModelParams::init(cfg).map_err(|e| CliError::input(stage, e))?
        }
    };
    let task = a.objective == ObjectiveArg::Task;
    let data = segs
        .iter()
        .map(|s| {
            let patches = tokenize(s.segment.samples(), params.config.patch_len)?;
            let target = task.then(|| match s.label {
                Label::Class(c) => TaskTarget::Class(c),
                Label::Real { value, .. } => TaskTarget::Regression(vec![value]),
            });
            Ok(Example { patches, target })
        })
        .collect::<Result<Vec<_>, ppgbench_core::model::ModelError>>()
        .map_err(|e| CliError::input(stage, e))?;
    let trainer = TrainerConfig {
        lr: a.lr,
        steps: a.steps,
        batch: a.batch,
        seed: cli.seed,
        freeze: match a.freeze {
            FreezeArg::Head => FreezeMode::HeadOnly,
            FreezeArg::Full => FreezeMode::Full,
        },
        objective: if task { TrainObjective::Task } else { TrainObjective::Pretrain },
    };
    params.set_freeze(trainer.freeze);
    let (trained, report) = train(params, &data, &trainer).map_err(|e| CliError::runtime(stage, e))?;
    let mut buf = Vec::new();
    save_checkpoint(&trained, &mut buf).map_err(|e| CliError::runtime(stage, e))?;
    write_output(&a.out, &buf)?;
    if let Some(t) = &a.trace {
        let header = vec!["step".to_string(), "loss".to_string()];
        let rows: Vec<Vec<String>> =
            report.loss_trace.iter().enumerate().map(|(i, l)| vec![i.to_string(), fmt(*l)]).collect();
        write_output(t, &csv_bytes(&header, &rows)?)?;
    }
    if let (Some(f), Some(l)) = (report.loss_trace.first(), report.loss_trace.last()) {
        println!("train: loss {f:.6} -> {l:.6} over {} steps", report.loss_trace.len());
    }
    let mut inputs: Vec<&Path> = vec![&a.input];
    if let Some(i) = &a.init {
        inputs.push(i);
    }
    write_manifest(stage, cli.seed, a, &inputs, &outs)
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<(), CliError> {
    guard_outputs(&[&a.out], cli.force)?;
    let stage = "evaluate";
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(stage, &a.preds)?);
    let headers = rdr.headers().map_err(|e| CliError::input(stage, format!("row 1: {e}")))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::input(stage, format!("row 1: missing column '{name}'")))
    };
    let (li, pi) = (col("label")?, col("prediction")?);
    let (mut labels, mut preds) = (Vec::new(), Vec::new());
    let mut skipped = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::input(stage, e))?;
        let row = rec.position().map(|p| p.line()).unwrap_or(0);
        let (l, p) = (rec.get(li).unwrap_or(""), rec.get(pi).unwrap_or(""));
        if p.is_empty() {
            skipped += 1;
            continue;
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::input(stage, format!("row {row}: '{s}' is not a finite number")))
        };
        labels.push(parse(l)?);
        preds.push(parse(p)?);
    }
    let json = match a.kind {
        TaskKind::Regression => serde_json::json!({
            "kind": "regression",
            "n": preds.len(),
            "skipped": skipped,
            "mae": mae(&preds, &labels).map_err(|e| CliError::input(stage, e))?,
        }),
        TaskKind::Classification => {
            let to_class = |v: &f64| -> Result<i64, CliError> {
                if v.fract() == 0.0 {
                    Ok(*v as i64)
                } else {
                    Err(CliError::input(stage, format!("class values must be integers, got {v}")))
                }
            };
            let p: Vec<i64> = preds.iter().map(to_class).collect::<Result<_, _>>()?;
            let l: Vec<i64> = labels.iter().map(to_class).collect::<Result<_, _>>()?;
            let m = classification_metrics(&p, &l).map_err(|e| CliError::input(stage, e))?;
            serde_json::json!({
                "kind": "classification",
                "n": p.len(),
                "skipped": skipped,
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "accuracy": m.accuracy,
            })
        }
    };
    write_output(&a.out, &json_bytes(&json)?)?;
    write_manifest(stage, cli.seed, a, &[&a.preds], &[&a.out])
}

fn eval_err(stage: &'static str, e: EvalError) -> CliError {
    match e {
        EvalError::BadRow { .. } | EvalError::InconsistentDirection { .. } => CliError::input(stage, e),
        EvalError::Io(_) => CliError::runtime(stage, e),
        other => CliError::runtime(stage, other),
    }
}

#[derive(Serialize)]
struct ReportFile {
    reports: Vec<DimensionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    regimes: Option<Vec<RegimeRow>>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn markdown(file: &ReportFile) -> String {
    let mut s = String::new();
    for rep in &file.reports {
        let family = match rep.family {
            MetricFamily::Classification => "Classification",
            MetricFamily::Regression => "Regression",
        };
        let models: Vec<&String> = rep.models.keys().collect();
        let _ = writeln!(s, "## {family}\n");
        let _ = writeln!(s, "| Dimension | Better | {} |", models.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(" | "));
        let _ = writeln!(s, "|---|---|{}", "---|".repeat(models.len()));
        for (j, dim) in DIMENSIONS.iter().enumerate() {
            let vals: Vec<String> = models
                .iter()
                .map(|m| {
                    let raw = rep.models[*m].values()[j];
                    let radar = rep.radar[*m][j];
                    match (raw, radar) {
                        (Some(r), Some(n)) => format!("{} ({n:.2})", cell(Some(r))),
                        _ => "-".into(),
                    }
                })
                .collect();
            let better = match rep.directions[j] {
                Direction::Higher => "higher",
                Direction::Lower => "lower",
            };
            let _ = writeln!(s, "| {dim} | {better} | {} |", vals.join(" | "));
        }
        s.push('\n');
    }
    if let Some(rows) = &file.regimes {
        let _ = writeln!(s, "## Domain and data-size regimes\n");
        let _ = writeln!(s, "| Domain | Hours | Count | Mean improvement (%) | r |\n|---|---|---|---|---|");
        for r in rows {
            let domain = if r.domain == ppgbench_core::eval::Domain::In { "in" } else { "out" };
            let _ = writeln!(
                s,
                "| {domain} | {} | {} | {:.1} | {} |",
                r.band.label(),
                r.count,
                r.mean_improvement,
                r.pearson_r.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())
            );
        }
    }
    s
}

fn report(cli: &Cli, a: &ReportArgs) -> Result<(), CliError> {
    let mut outs: Vec<&Path> = vec![&a.out];
    if let Some(m) = &a.markdown {
        outs.push(m);
    }
    guard_outputs(&outs, cli.force)?;
    let stage = "report";
    let records = read_results_csv(open(stage, &a.results)?).map_err(|e| eval_err(stage, e))?;
    if records.is_empty() {
        return Err(CliError::input(stage, "results file has no rows"));
    }
    let tie = a.tie_decimals.map(TiePrecision::Decimals).unwrap_or(TiePrecision::Exact);
    let mut by_family: BTreeMap<&str, Vec<ResultRecord>> = BTreeMap::new();
    for r in &records {
        let key = match r.metric.family() {
            MetricFamily::Classification => "classification",
            MetricFamily::Regression => "regression",
        };
        by_family.entry(key).or_default().push(r.clone());
    }
    let reports = by_family
        .values()
        .map(|recs| dimension_report(recs, tie).map_err(|e| eval_err(stage, e)))
        .collect::<Result<Vec<_>, _>>()?;
    let regimes = match (&a.regime_reference, &a.regime_candidate) {
        (Some(r), Some(c)) => {
            let pairs = regime_pairs(&records, r, c, Strategy::Full).map_err(|e| eval_err(stage, e))?;
            Some(regime_summary(&pairs).map_err(|e| eval_err(stage, e))?)
        }
        _ => None,
    };
    let file = ReportFile { reports, regimes };
    write_output(&a.out, &json_bytes(&file)?)?;
    if let Some(m) = &a.markdown {
        write_output(m, markdown(&file).as_bytes())?;
    }
    write_manifest(stage, cli.seed, a, &[&a.results], &outs)
}

fn reproduce(cli: &Cli, a: &ReproduceArgs) -> Result<(), CliError> {
    let stage = "reproduce";
    if let Some(out) = &a.out {
        guard_outputs(&[out], cli.force)?;
    }
    let dir = a.fixtures.clone().unwrap_or_else(default_fixture_dir);
    let rep = reproduce_scores(&dir).map_err(|e| match e {
        ReproduceError::MissingFixture(_) | ReproduceError::BadFixture { .. } => CliError::input(stage, e),
        other => CliError::runtime(stage, other),
    })?;
    for r in &rep.rows {
        println!(
            "{} {} [{}] {}: computed {:.2}/{} published {}/{}",
            if r.matches { "MATCH   " } else { "MISMATCH" },
            r.row,
            r.sources,
            r.model,
            r.computed,
            r.tasks,
            r.published,
            r.denominator
        );
    }
    let bad = rep.mismatches().count();
    println!("{} of {} rows match within {}", rep.rows.len() - bad, rep.rows.len(), rep.tolerance);
    if let Some(out) = &a.out {
        write_output(out, &json_bytes(&rep)?)?;
        write_manifest(stage, cli.seed, a, &[], &[out])?;
    }
    if a.strict && bad > 0 {
        return Err(CliError::runtime(stage, format!("{bad} rows differ from the published values")));
    }
    Ok(())
}
