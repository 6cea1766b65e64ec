use ppgbench_core::eval::{
    classification_metrics, combined_scores, inverse_frequency_weights, mae, nsd, pearson, radar_normalize,
    read_results_csv, relative_improvement, scalability_slope, tuning_gain, win_scores, Domain, EvalError, Metric,
    ModelKey, ResultRecord, Strategy, TiePrecision,
};
use ppgbench_core::Direction;
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

#[test]
fn tuning_gain_closed_forms() {
    assert!(close(tuning_gain(&[0.5], &[0.6], Direction::Higher).unwrap(), 0.2));
    assert!(close(tuning_gain(&[2.0], &[1.0], Direction::Lower).unwrap(), 1.0));
    assert_eq!(tuning_gain(&[0.7, 3.0], &[0.7, 3.0], Direction::Higher).unwrap(), 0.0);
    assert_eq!(
        tuning_gain(&[0.0], &[1.0], Direction::Higher),
        Err(EvalError::ZeroHeadPerformance(0))
    );
}

#[test]
fn nsd_closed_forms() {
    assert_eq!(nsd(&[2.0, 2.0, 2.0]).unwrap(), 0.0);
    assert!(close(nsd(&[1.0, 3.0]).unwrap(), 0.5));
    assert_eq!(nsd(&[-1.0, 1.0]), Err(EvalError::ZeroMean));
    assert!(matches!(nsd(&[1.0]), Err(EvalError::TooFew { .. })));
}

#[test]
fn scalability_closed_forms() {
    let sizes = [1.9e7, 4e7, 8.5e7, 1.25e8, 3.45e8, 3.85e8];
    let perf: Vec<f64> = sizes.iter().map(|s: &f64| 2.0 * s.ln() + 5.0).collect();
    let (a, b) = scalability_slope(&sizes, &perf).unwrap();
    assert!((a - 2.0).abs() <= 1e-9, "slope {a}");
    assert!((b - 5.0).abs() <= 1e-7, "intercept {b}");
    let (a, _) = scalability_slope(&sizes, &[0.7; 6]).unwrap();
    assert!(a.abs() <= 1e-12);
    assert_eq!(scalability_slope(&[1e6], &[1.0]), Err(EvalError::InsufficientPoints(1)));
    assert_eq!(scalability_slope(&[1e6, 1e6], &[1.0, 2.0]), Err(EvalError::DegenerateSizes));
}

#[test]
fn pearson_closed_forms() {
    let x = [1.0, 2.0, 4.0, 7.0];
    let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
    assert!(close(pearson(&x, &y).unwrap(), 1.0));
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    assert!(close(pearson(&x, &neg).unwrap(), -1.0));
    assert_eq!(pearson(&[2.0; 4], &y), Err(EvalError::ConstantInput));
}

#[test]
fn relative_improvement_closed_forms() {
    assert!(close(relative_improvement(10.0, 9.0).unwrap(), 10.0));
    assert_eq!(relative_improvement(4.2, 4.2).unwrap(), 0.0);
    assert_eq!(relative_improvement(0.0, 1.0), Err(EvalError::ZeroReference));
}

#[test]
fn inverse_frequency_closed_forms() {
    let w = inverse_frequency_weights(&["A", "A", "A", "B"]).unwrap();
    for &wa in &w[..3] {
        assert!(close(wa, 4.0 / 6.0));
    }
    assert!(close(w[3], 2.0));
    assert_eq!(inverse_frequency_weights(&[1, 2, 1, 2]).unwrap(), vec![1.0; 4]);
    let empty: [u8; 0] = [];
    assert_eq!(inverse_frequency_weights(&empty), Err(EvalError::Empty));
}

#[test]
fn mae_and_classification_examples() {
    let p = [1.0, 5.0, -2.0];
    let t = [0.0, 4.0, -3.0];
    assert_eq!(mae(&p, &t).unwrap(), 1.0);
    assert_eq!(mae(&p, &t).unwrap(), mae(&t, &p).unwrap());
    let m = classification_metrics(&[1, 1, 1, 1], &[1, 0, 1, 0]).unwrap();
    assert!(close(m.f1, 2.0 / 3.0));
}

#[test]
fn csv_bad_row_names_the_row() {
    let csv = "task_id,dataset_id,model_id,model_size,strategy,metric,value,direction,domain,data_hours\n\
               hr,a,m,40M,full,mae,1.0,lower,in,\n\
               hr,b,m,40M,partial,mae,1.0,lower,in,\n";
    match read_results_csv(csv.as_bytes()) {
        Err(EvalError::BadRow { row, message }) => {
            assert_eq!(row, 3);
            assert!(message.contains("partial"));
        }
        other => panic!("{other:?}"),
    }
}

fn record(task: usize, model: usize, value: f64, direction: Direction) -> ResultRecord {
    ResultRecord {
        task_id: format!("t{task}"),
        dataset_id: "d".into(),
        model_id: if model % 2 == 0 { "gen".into() } else { "spec".into() },
        model_size: 1e6 * (model + 1) as f64,
        strategy: Strategy::Full,
        metric: Metric::Mae,
        value,
        direction,
        domain: Domain::In,
        data_hours: None,
    }
}

proptest! {
    #[test]
    fn win_scores_sum_to_one_per_task(
        grid in prop::collection::vec(prop::collection::vec(0u8..4, 4), 1..12),
        higher in any::<bool>(),
    ) {
        // Small integer values force frequent ties.
        let dir = if higher { Direction::Higher } else { Direction::Lower };
        let recs: Vec<ResultRecord> = grid
            .iter()
            .enumerate()
            .flat_map(|(t, row)| row.iter().enumerate().map(move |(m, &v)| record(t, m, v as f64, dir)))
            .collect();
        let s = win_scores(&recs, TiePrecision::Exact).unwrap();
        let total: f64 = s.per_model.values().sum();
        prop_assert!((total - grid.len() as f64).abs() < 1e-9);
        let comb: f64 = combined_scores(&s).values().sum();
        prop_assert!((comb - grid.len() as f64).abs() < 1e-9);
        // Each single task also sums to one.
        for t in 0..grid.len() {
            let one: Vec<ResultRecord> = recs.iter().filter(|r| r.task_id == format!("t{t}")).cloned().collect();
            let st = win_scores(&one, TiePrecision::Exact).unwrap();
            prop_assert!((st.per_model.values().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(st.per_model.contains_key(&ModelKey::new("gen", 1e6)));
        }
    }

    #[test]
    fn tuning_gain_is_scale_invariant(
        pairs in prop::collection::vec((0.1f64..10.0, 0.1f64..10.0), 1..10),
        c in 0.01f64..100.0,
        higher in any::<bool>(),
    ) {
        let dir = if higher { Direction::Higher } else { Direction::Lower };
        let (h, f): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let hs: Vec<f64> = h.iter().map(|v| v * c).collect();
        let fs: Vec<f64> = f.iter().map(|v| v * c).collect();
        let g = tuning_gain(&h, &f, dir).unwrap();
        let gs = tuning_gain(&hs, &fs, dir).unwrap();
        prop_assert!((g - gs).abs() <= 1e-9 * g.abs().max(1.0));
    }

    #[test]
    fn slope_ignores_common_size_factor(
        pts in prop::collection::vec((1e5f64..1e9, -5.0f64..5.0), 2..8),
        k in 1e-3f64..1e3,
    ) {
        let (sizes, perf): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let spread = sizes.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            / sizes.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1.01);
        let scaled: Vec<f64> = sizes.iter().map(|s| s * k).collect();
        let (a, b) = scalability_slope(&sizes, &perf).unwrap();
        let (a2, b2) = scalability_slope(&scaled, &perf).unwrap();
        prop_assert!((a - a2).abs() <= 1e-6 * a.abs().max(1.0));
        // Only the intercept moves, by -a ln k.
        prop_assert!((b2 - (b - a * k.ln())).abs() <= 1e-6 * b.abs().max(a.abs()).max(1.0) * 10.0);
    }

    #[test]
    fn radar_preserves_argmax(
        table in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 2..6),
        dirs in prop::collection::vec(any::<bool>(), 3),
    ) {
        let directions: Vec<Direction> = dirs.iter().map(|&h| if h { Direction::Higher } else { Direction::Lower }).collect();
        let norm = radar_normalize(&table, &directions).unwrap();
        for (j, d) in directions.iter().enumerate() {
            for (a, b) in (0..table.len()).flat_map(|a| (0..table.len()).map(move |b| (a, b))) {
                if d.better(table[a][j], table[b][j]) {
                    prop_assert!(norm[a][j] > norm[b][j]);
                }
            }
            let best = (0..table.len()).max_by(|&a, &b| norm[a][j].total_cmp(&norm[b][j])).unwrap();
            prop_assert!(table.iter().all(|r| !d.better(r[j], table[best][j])));
            prop_assert!(norm.iter().all(|r| (0.0..=1.0).contains(&r[j])));
        }
    }

    #[test]
    fn nsd_is_scale_invariant(
        xs in prop::collection::vec(0.1f64..100.0, 2..20),
        c in 0.001f64..1000.0,
    ) {
        let scaled: Vec<f64> = xs.iter().map(|v| v * c).collect();
        let a = nsd(&xs).unwrap();
        let b = nsd(&scaled).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn inverse_frequency_groups_carry_equal_weight(groups in prop::collection::vec(0u8..5, 1..50)) {
        let w = inverse_frequency_weights(&groups).unwrap();
        let mut sums = std::collections::BTreeMap::new();
        for (g, wi) in groups.iter().zip(&w) {
            *sums.entry(*g).or_insert(0.0) += wi;
        }
        let target = groups.len() as f64 / sums.len() as f64;
        prop_assert!(sums.values().all(|s| (s - target).abs() < 1e-9));
    }
}
