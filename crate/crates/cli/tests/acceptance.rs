//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Uses its own `main` so that a failing
//! criterion does not hide the others.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use ppgbench_cli::reproduce::default_fixture_dir;
use ppgbench_cli::reproduce_scores;
use ppgbench_core::baselines::{hr_ibi, locf_predict, ridge_fit, rr_baseline_wander, LabHistory};
use ppgbench_core::dataset::{align_labs, loo_folds, ratio_split, Analyte, LabEvent};
use ppgbench_core::eval::{
    inverse_frequency_weights, nsd, pearson, relative_improvement, scalability_slope, tuning_gain,
};
use ppgbench_core::model::{
    default_spec, forward, grad_check, row_entropy, tokenize, train, AttentionMode, Example, FreezeMode,
    ModelConfig, ModelParams, Objective, PatchSeq, TrainerConfig,
};
use ppgbench_core::signal::{minmax_normalize, Label, Segment, Signal, Unit};
use ppgbench_core::synth::{synth_ppg, SynthSpec};
use ppgbench_core::Direction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn seg(spec: &SynthSpec) -> Segment {
    let (s, _) = synth_ppg(spec, "s").unwrap();
    Segment::from_samples(s.samples().to_vec(), s.fs(), "s", 0.0).unwrap()
}

fn patches(hr: f64, seconds: f64, seed: u64) -> PatchSeq {
    let spec = SynthSpec { hr_bpm: hr, duration_s: seconds, noise_std: 0.01, seed, ..Default::default() };
    let s = minmax_normalize(&seg(&spec));
    tokenize(s.samples(), 40).unwrap()
}

fn c1_score_reproduction() -> Outcome {
    let start = Instant::now();
    let report = reproduce_scores(&default_fixture_dir()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let bad: Vec<String> = report
        .mismatches()
        .map(|r| format!("{} {} computed {:.2} published {:.2}", r.row, r.model, r.computed, r.published))
        .collect();
    ensure!(
        bad.is_empty(),
        "{} of {} rows mismatch: {}",
        bad.len(),
        report.rows.len(),
        bad.join("; ")
    );
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("{} rows within 0.01 in {elapsed:.2?}", report.rows.len()))
}

fn c2_hr_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for hr in [60.0, 72.0, 96.0] {
        let mut cases = vec![(SynthSpec { hr_bpm: hr, ..Default::default() }, 2.0)];
        for seed in 0..5 {
            cases.push((SynthSpec { hr_bpm: hr, noise_std: 0.05, seed, ..Default::default() }, 4.0));
        }
        for (spec, tol) in cases {
            let s = seg(&spec);
            let start = Instant::now();
            let est = hr_ibi(&s).map_err(|e| e.to_string())?;
            slowest = slowest.max(start.elapsed());
            ensure!(
                within(est, hr, tol),
                "hr {hr} noise {} seed {}: estimate {est:.3}",
                spec.noise_std,
                spec.seed
            );
            worst = worst.max((est - hr).abs());
        }
    }
    ensure!(slowest < Duration::from_secs(1), "slowest segment {slowest:?}");
    Ok(format!("max error {worst:.3} bpm, slowest segment {slowest:.2?}"))
}

fn c3_rr_oracle() -> Outcome {
    let mut got = Vec::new();
    for (hz, brpm) in [(0.10, 6.0), (0.25, 15.0), (0.45, 27.0)] {
        let est = rr_baseline_wander(&seg(&SynthSpec { rr_brpm: hz * 60.0, ..Default::default() }))
            .map_err(|e| e.to_string())?;
        ensure!(within(est.brpm, brpm, 1.0), "{hz} Hz: estimate {:.3} brpm", est.brpm);
        got.push(format!("{:.2}", est.brpm));
    }
    Ok(format!("estimates {} brpm", got.join("/")))
}

fn c4_ridge_exactness() -> Outcome {
    let x: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            let t = i as f64;
            vec![t.sin(), (0.7 * t).cos() * 3.0, 0.01 * t * t, (1.9 * t).sin() - 0.5]
        })
        .collect();
    let w = [1.5, -0.25, 2.0, 0.75];
    let b = -3.0;
    let y: Vec<f64> = x.iter().map(|r| r.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b).collect();
    let m = ridge_fit(&x, &y, 1e-12).map_err(|e| e.to_string())?;
    let (coef, icpt) = m.coefficients();
    for (k, (c, t)) in coef.iter().zip(&w).enumerate() {
        ensure!(within(*c, *t, 1e-6), "coefficient {k}: {c} vs {t}");
    }
    ensure!(within(icpt, b, 1e-6), "intercept {icpt} vs {b}");
    let pred = m.predict(&x).map_err(|e| e.to_string())?;
    for (p, t) in pred.iter().zip(&y) {
        ensure!(within(*p, *t, 1e-6), "prediction {p} vs {t}");
    }

    // Noisy target, every column rescaled.
    let y2: Vec<f64> = y.iter().enumerate().map(|(i, v)| v + (i as f64 * 0.37).sin()).collect();
    let factors = [1e3, -2e-3, 7.5, 0.1];
    let x2: Vec<Vec<f64>> = x.iter().map(|r| r.iter().zip(&factors).map(|(a, f)| a * f).collect()).collect();
    let mut worst: f64 = 0.0;
    for lambda in [1e-12, 0.1, 1.0, 10.0] {
        let p1 = ridge_fit(&x, &y2, lambda).and_then(|m| m.predict(&x)).map_err(|e| e.to_string())?;
        let p2 = ridge_fit(&x2, &y2, lambda).and_then(|m| m.predict(&x2)).map_err(|e| e.to_string())?;
        for (a, c) in p1.iter().zip(&p2) {
            worst = worst.max((a - c).abs());
        }
    }
    ensure!(worst <= 1e-8, "rescaling moved predictions by {worst:e}");
    Ok(format!("planted model recovered; rescaling drift {worst:.1e}"))
}

fn c5_gradient_check() -> Outcome {
    let start = Instant::now();
    let x = patches(72.0, 8.0, 1);
    let mut worst: f64 = 0.0;
    for mode in [AttentionMode::Causal, AttentionMode::Bidirectional] {
        for objective in [Objective::NextPatchMse, Objective::NextPatchLaplace, Objective::MaskedMse] {
            let p = ModelParams::init(ModelConfig { mode, objective, seed: 3, ..Default::default() })
                .map_err(|e| e.to_string())?;
            let spec = default_spec(&p, &x).map_err(|e| e.to_string())?;
            let r = grad_check(&p, &x, &spec, 100, 1e-4, 9).map_err(|e| e.to_string())?;
            ensure!(r.min_probes() >= 100, "{mode:?} {objective:?}: only {} probes", r.min_probes());
            ensure!(
                r.max_rel_error() <= 1e-4,
                "{mode:?} {objective:?}: relative error {:e}",
                r.max_rel_error()
            );
            worst = worst.max(r.max_rel_error());
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("max relative error {worst:.1e} in {elapsed:.2?}"))
}

fn c6_training_sanity() -> Outcome {
    let start = Instant::now();
    let data: Vec<Example> =
        (0..8).map(|i| Example { patches: patches(72.0, 8.0, i), target: None }).collect();
    let p = ModelParams::init(ModelConfig { seed: 1, ..Default::default() }).map_err(|e| e.to_string())?;
    let cfg = TrainerConfig { lr: 3e-3, steps: 300, batch: 4, seed: 7, ..Default::default() };

    let (trained, a) = train(p.clone(), &data, &cfg).map_err(|e| e.to_string())?;
    let first = a.loss_trace[0];
    let tail = a.loss_trace[290..].iter().sum::<f64>() / 10.0;
    ensure!(tail <= 0.5 * first, "loss {first:.4} -> {tail:.4}");

    let (_, b) = train(p.clone(), &data, &cfg).map_err(|e| e.to_string())?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure!(bits(&a.loss_trace) == bits(&b.loss_trace), "loss traces differ between identical runs");

    let before = p.weights.backbone_checksum();
    let head = TrainerConfig { freeze: FreezeMode::HeadOnly, ..cfg };
    let (h, _) = train(p.clone(), &data, &head).map_err(|e| e.to_string())?;
    ensure!(h.weights.backbone_checksum() == before, "head-only training changed the backbone");
    ensure!(trained.weights.backbone_checksum() != before, "full training left the backbone untouched");

    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!("loss {first:.4} -> {tail:.4}, deterministic, backbone frozen, {elapsed:.2?}"))
}

fn c7_attention_properties() -> Outcome {
    let mut worst: f64 = 0.0;
    for mode in [AttentionMode::Causal, AttentionMode::Bidirectional] {
        let p = ModelParams::init(ModelConfig { mode, seed: 6, ..Default::default() }).map_err(|e| e.to_string())?;
        let x = patches(72.0, 10.0, 5);
        let base = forward(&p, &x).map_err(|e| e.to_string())?;
        for layer in &base.attn.maps {
            for a in layer {
                for i in 0..10 {
                    worst = worst.max((a.row(i).iter().sum::<f64>() - 1.0).abs());
                    if mode == AttentionMode::Causal {
                        ensure!(a.row(i)[i + 1..].iter().all(|v| *v == 0.0), "query {i} attends ahead");
                    }
                }
            }
        }
        ensure!(worst <= 1e-6, "{mode:?}: row sum off by {worst:e}");
        if mode == AttentionMode::Causal {
            for t in 0..9 {
                let mut y = x.clone();
                for r in t + 1..10 {
                    y.patches.row_mut(r).iter_mut().for_each(|v| *v = *v * -3.0 + 0.7);
                }
                let alt = forward(&p, &y).map_err(|e| e.to_string())?;
                ensure!(base.predictions.row(t) == alt.predictions.row(t), "position {t} sees later patches");
            }
        }
    }
    for l in [1usize, 2, 7, 64] {
        let h = row_entropy(&vec![1.0 / l as f64; l]);
        ensure!(within(h, (l as f64).ln(), 1e-9), "uniform length {l}: {h}");
        let mut one_hot = vec![0.0; l];
        one_hot[l - 1] = 1.0;
        ensure!(row_entropy(&one_hot) == 0.0, "one-hot length {l}");
    }
    Ok(format!("row sums within {worst:.1e}, no lookahead, entropy bounds exact"))
}

fn c8_metric_formulas() -> Outcome {
    const TOL: f64 = 1e-9;
    let err = |e: ppgbench_core::eval::EvalError| e.to_string();
    // Head 0.5 -> full 0.6 on a higher-is-better metric is a 20% gain.
    ensure!(within(tuning_gain(&[0.5], &[0.6], Direction::Higher).map_err(err)?, 0.2, TOL), "tuning_gain higher");
    ensure!(within(tuning_gain(&[2.0], &[1.0], Direction::Lower).map_err(err)?, 1.0, TOL), "tuning_gain lower");
    // Population std of {1, 3} is 1, mean 2.
    ensure!(within(nsd(&[1.0, 3.0]).map_err(err)?, 0.5, TOL), "nsd");
    let x = [1.0, 2.0, 4.0, 7.0];
    let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
    ensure!(within(pearson(&x, &y).map_err(err)?, 1.0, TOL), "pearson +1");
    let neg: Vec<f64> = x.iter().map(|v| 5.0 - 2.0 * v).collect();
    ensure!(within(pearson(&x, &neg).map_err(err)?, -1.0, TOL), "pearson -1");
    ensure!(within(relative_improvement(10.0, 9.0).map_err(err)?, 10.0, TOL), "relative_improvement");
    let w = inverse_frequency_weights(&["A", "A", "A", "B"]).map_err(err)?;
    ensure!(w[..3].iter().all(|v| within(*v, 4.0 / 6.0, TOL)) && within(w[3], 2.0, TOL), "weights {w:?}");
    let sizes = [1.9e7, 4e7, 8.5e7, 1.25e8, 3.45e8, 3.85e8];
    let perf: Vec<f64> = sizes.iter().map(|s: &f64| 2.0 * s.ln() + 5.0).collect();
    let (a, _) = scalability_slope(&sizes, &perf).map_err(err)?;
    ensure!(within(a, 2.0, TOL), "slope {a}");
    Ok(format!("closed forms within 1e-9, planted slope {a:.12}"))
}

fn c9_causality_audit() -> Outcome {
    let ppg = Signal::new(vec![0.5; 40 * 600], 40.0, "p", 100.0).map_err(|e| e.to_string())?;
    let times = [130.0, 129.999_999, 130.000_001, 100.0, 99.0, 700.0, 700.5, 455.0, 250.0];
    let labs: Vec<LabEvent> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| LabEvent {
            subject_id: "p".into(),
            t,
            analyte: Analyte::Sodium,
            value: i as f64,
            unit: Unit::MmolPerL,
        })
        .collect();
    let pairs = align_labs(&ppg, &labs, 120.0, 30.0).map_err(|e| e.to_string())?;
    ensure!(!pairs.is_empty(), "no pairs emitted");
    for p in &pairs {
        let Label::Real { value, .. } = p.label else {
            return Err("non-real lab label".into());
        };
        let t = times[value as usize];
        ensure!(p.segment.end_time() <= t, "window ending {} paired with draw at {t}", p.segment.end_time());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut queries = 0;
    for _ in 0..500 {
        let mut obs: Vec<(f64, f64)> =
            (0..rng.random_range(1..20)).map(|_| (rng.random_range(0..1000) as f64, 0.0)).collect();
        obs.sort_by(|a, b| a.0.total_cmp(&b.0));
        obs.dedup_by(|a, b| a.0 == b.0);
        for (i, o) in obs.iter_mut().enumerate() {
            o.1 = i as f64;
        }
        let h = LabHistory::new(obs.clone()).map_err(|e| e.to_string())?;
        let mut qs: Vec<f64> = obs.iter().flat_map(|o| [o.0, o.0 + 1e-9, o.0 - 1e-9]).collect();
        qs.push(rng.random_range(0.0..1000.0));
        for t in qs {
            queries += 1;
            let expect = obs.iter().rev().find(|o| o.0 < t).map(|o| o.1);
            match (locf_predict(&h, t), expect) {
                (Ok(v), Some(e)) => ensure!(v == e, "query {t}: used {v}, expected {e}"),
                (Err(_), None) => {}
                (got, want) => return Err(format!("query {t}: got {got:?}, expected {want:?}")),
            }
        }
    }
    Ok(format!("{} aligned pairs and {queries} locf queries causal", pairs.len()))
}

fn roster(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut recs = Vec::new();
    for s in 0..rng.random_range(6..60) {
        for _ in 0..rng.random_range(1..8) {
            recs.push(format!("subj-{s}"));
        }
    }
    for i in (1..recs.len()).rev() {
        let j = rng.random_range(0..=i);
        recs.swap(i, j);
    }
    recs
}

fn subjects<'a>(recs: &'a [String], idx: &[usize]) -> BTreeSet<&'a str> {
    idx.iter().map(|&i| recs[i].as_str()).collect()
}

fn c10_split_integrity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..1000 {
        let recs = roster(&mut rng);
        let plan = ratio_split(&recs, [0.6, 0.2, 0.2], rng.random()).map_err(|e| e.to_string())?;
        let f = &plan.folds[0];
        let (tr, va, te) = (subjects(&recs, &f.train), subjects(&recs, &f.val), subjects(&recs, &f.test));
        ensure!(
            tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te),
            "roster {trial}: subjects leak across partitions"
        );
        let mut all: Vec<usize> = f.train.iter().chain(&f.val).chain(&f.test).copied().collect();
        all.sort_unstable();
        ensure!(all == (0..recs.len()).collect::<Vec<_>>(), "roster {trial}: records lost or duplicated");
    }
    for trial in 0..100 {
        let recs = roster(&mut rng);
        let plan = loo_folds(&recs, 0.2, rng.random()).map_err(|e| e.to_string())?;
        let mut tested: BTreeMap<&str, usize> = BTreeMap::new();
        for f in &plan.folds {
            let te = subjects(&recs, &f.test);
            ensure!(te.len() == 1, "roster {trial}: fold tests {} subjects", te.len());
            let s = *te.iter().next().unwrap();
            ensure!(
                !subjects(&recs, &f.train).contains(s) && !subjects(&recs, &f.val).contains(s),
                "roster {trial}: {s} also trains"
            );
            *tested.entry(s).or_default() += 1;
        }
        let everyone: BTreeSet<&str> = recs.iter().map(String::as_str).collect();
        ensure!(
            tested.len() == everyone.len() && tested.values().all(|&c| c == 1),
            "roster {trial}: coverage {tested:?}"
        );
    }
    Ok("1000 ratio rosters disjoint, 100 loo rosters covered once".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("score reproduction", c1_score_reproduction),
        ("hr oracle", c2_hr_oracle),
        ("rr oracle", c3_rr_oracle),
        ("ridge exactness", c4_ridge_exactness),
        ("gradient check", c5_gradient_check),
        ("training sanity", c6_training_sanity),
        ("attention properties", c7_attention_properties),
        ("metric formulas", c8_metric_formulas),
        ("causality audit", c9_causality_audit),
        ("split integrity", c10_split_integrity),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
