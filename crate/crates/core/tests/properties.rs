use proptest::prelude::*;
use seqmargin_core::data::*;
use seqmargin_core::geometry::*;
use seqmargin_core::linalg;
use seqmargin_core::loss::*;
use seqmargin_core::metrics::*;
use seqmargin_core::train::*;
use std::path::Path;

fn build(rows: Vec<(Vec<f64>, bool, usize)>, m: usize) -> JointDataset<f64> {
    let mut assign: Vec<usize> = rows.iter().map(|r| r.2 % m).collect();
    // every task needs at least one point
    for t in 0..m {
        assign[t] = t;
    }
    let pts = rows
        .into_iter()
        .map(|(x, pos, _)| if pos { DataPoint::positive(&x) } else { DataPoint::negative(&x) })
        .collect();
    JointDataset::new(pts, TaskPartition::from_assignment(&assign, m).unwrap()).unwrap()
}

/// Arbitrary labelled data: d ∈ 1..=3, M ∈ 1..=3, N ∈ M..=8.
fn dataset() -> impl Strategy<Value = JointDataset<f64>> {
    (1usize..=3, 1usize..=3).prop_flat_map(|(d, m)| {
        prop::collection::vec((prop::collection::vec(-3.0..3.0f64, d), any::<bool>(), 0usize..3), m..=8)
            .prop_map(move |rows| build(rows, m))
    })
}

/// Absorbed data with every point strictly on the positive side of `u`.
fn separable() -> impl Strategy<Value = JointDataset<f64>> {
    (1usize..=3, 1usize..=3).prop_flat_map(|(d, m)| {
        (
            prop::collection::vec(-1.0..1.0f64, d),
            prop::collection::vec((prop::collection::vec(-3.0..3.0f64, d), 0usize..3), m..=7),
        )
            .prop_filter_map("direction too short", move |(u, rows)| {
                let nu = linalg::norm(&u);
                if nu < 0.3 {
                    return None;
                }
                let rows = rows
                    .into_iter()
                    .map(|(mut x, t)| {
                        let s = linalg::dot(&x, &u) / nu;
                        // push along u so the margin is at least 0.2
                        let shift = 0.2 + s.abs() - s;
                        linalg::axpy(shift / nu, &u, &mut x);
                        (x, true, t)
                    })
                    .collect();
                Some(build(rows, m).into_absorbed())
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn absorption_preserves_loss(ds in dataset(), w in prop::collection::vec(-2.0..2.0f64, 3)) {
        let spec = LossSpec::logistic();
        let w = &w[..ds.dim()];
        let direct: f64 = ds.points().iter().map(|p| spec.value(p.y.sign::<f64>() * linalg::dot(&p.x, w))).sum();
        let absorbed = joint_loss(&spec, &ds.clone().into_absorbed(), w).unwrap();
        prop_assert!((direct - absorbed).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn text_round_trip_is_exact(ds in dataset()) {
        let back = JointDataset::<f64>::from_text(&ds.to_text(), Path::new("mem")).unwrap();
        prop_assert_eq!(back, ds.clone());
        let absorbed = ds.into_absorbed();
        let back = JointDataset::<f64>::from_text(&absorbed.to_text(), Path::new("mem")).unwrap();
        prop_assert_eq!(back, absorbed);
    }

    #[test]
    fn gradient_matches_central_differences(ds in dataset(), w in prop::collection::vec(-2.0..2.0f64, 3)) {
        let ds = ds.into_absorbed();
        let spec = LossSpec::logistic();
        let w = w[..ds.dim()].to_vec();
        let g = joint_gradient(&spec, &ds, &w).unwrap();
        let h = 1e-6;
        for i in 0..w.len() {
            let mut a = w.clone();
            let mut b = w.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (joint_loss(&spec, &ds, &a).unwrap() - joint_loss(&spec, &ds, &b).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()), "{} vs {}", fd, g[i]);
        }
    }

    #[test]
    fn partition_covers_every_index_once(assign in prop::collection::vec(0usize..4, 4..20)) {
        let mut assign = assign;
        for t in 0..4 { assign[t] = t; }
        let p = TaskPartition::from_assignment(&assign, 4).unwrap();
        let mut seen = vec![0; assign.len()];
        for m in 0..p.num_tasks() {
            for &i in p.task(m) {
                seen[i] += 1;
                prop_assert_eq!(assign[i], m);
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        prop_assert_eq!(p.task_of(), assign);
    }

    #[test]
    fn alignment_is_symmetric(ds in dataset()) {
        let a = alignment_sums(&ds.into_absorbed()).unwrap();
        let m = a.plus.len();
        let mut tp = 0.0;
        for p in 0..m {
            for q in 0..m {
                prop_assert!((a.plus[p][q] - a.plus[q][p]).abs() <= 1e-12 * (1.0 + a.plus[p][q]));
                prop_assert!((a.minus[p][q] - a.minus[q][p]).abs() <= 1e-12 * (1.0 + a.minus[p][q]));
                prop_assert!(a.plus[p][q] >= 0.0 && a.minus[p][q] >= 0.0);
                if p < q { tp += a.plus[p][q]; }
            }
        }
        prop_assert!((tp - a.total_plus).abs() <= 1e-12 * (1.0 + tp));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn certificate_invariants(ds in separable()) {
        let c = max_margin_certificate(&ds).unwrap();
        let tol = 1e-8;
        let margins: Vec<f64> = (0..ds.len()).map(|i| linalg::dot(ds.x(i), &c.w_hat)).collect();
        prop_assert!(margins.iter().all(|&v| v >= 1.0 - tol));
        prop_assert!(!c.support.is_empty());
        for &i in &c.support {
            prop_assert!((margins[i] - 1.0).abs() <= tol);
        }
        prop_assert!(c.alpha.iter().all(|&a| a >= -tol));
        let mut rebuilt = vec![0.0; ds.dim()];
        for (i, &a) in c.alpha.iter().enumerate() {
            linalg::axpy(a, ds.x(i), &mut rebuilt);
        }
        prop_assert!(linalg::dist_sq(&rebuilt, &c.w_hat).sqrt() <= 1e-7 * (1.0 + c.w_hat_norm()));
        prop_assert!((c.phi * c.w_hat_norm() - 1.0).abs() <= 1e-10);
        if let Some(theta) = c.theta {
            prop_assert!(theta > 1.0);
        }
        let covered: usize = c.task_support.iter().map(Vec::len).sum();
        prop_assert_eq!(covered, c.support.len());
    }

    #[test]
    fn smm_is_fejer_monotone(ds in separable()) {
        let c = max_margin_certificate(&ds).unwrap();
        let cfg = TrainConfig::new(Algorithm::Smm, 1, StepSize::Fixed(1.0), Horizon::Cycles(6));
        let run = run_smm(&ds, &cfg, &LossSpec::logistic()).unwrap();
        // any point of the intersection works as an anchor
        for anchor in [c.w_hat.clone(), linalg::scaled(2.5, &c.w_hat)] {
            let mut prev = linalg::dist_sq(&run.w0, &anchor);
            for t in 0..run.stages() {
                let d = linalg::dist_sq(run.weight_after_stage(t).unwrap(), &anchor);
                prop_assert!(d <= prev + 1e-8 * (1.0 + prev));
                prev = d;
            }
        }
    }

    #[test]
    fn cyclic_bound_decreases_in_cycles(ds in separable()) {
        let c = max_margin_certificate(&ds).unwrap();
        let spec = LossSpec::logistic();
        let w0 = vec![0.0; ds.dim()];
        let inputs = GuardInputs { margin: Some(&c), nonsep: None };
        let eta = 0.5 * guard_eta(GuardKind::Cyclic, &ds, &spec, 5, 1, &w0, &inputs).unwrap();
        let b = CyclicBoundConstants::new(&ds, &c, &spec, eta, 5, &w0).unwrap();
        // ln²(MJ)/J decreases once MJ > e²
        let mut prev = f64::INFINITY;
        for j in (8..200).step_by(7) {
            let v = b.cyclic_loss_bound(j, 0, 0).unwrap();
            prop_assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn cycle_forgetting_is_mean_of_stage_forgetting(ds in dataset(), eta in 0.01..0.5f64) {
        let ds = ds.into_absorbed();
        let m = ds.num_tasks();
        let cfg = TrainConfig::new(Algorithm::SeqGd, 3, StepSize::Fixed(eta), Horizon::Cycles(4));
        let run = run_sequential_gd(TaskSource::Fixed(&ds), &cfg, &LossSpec::logistic()).unwrap();
        for j in 0..4 {
            let mean: f64 = (0..m).map(|t| forgetting(&run, j * m + t, j * m + m - 1).unwrap()).sum::<f64>() / m as f64;
            let f = cycle_averaged_forgetting(&run, j).unwrap();
            prop_assert!((mean - f).abs() <= 1e-12 * (1.0 + f.abs()));
        }
    }

    #[test]
    fn single_task_sequential_equals_joint(ds in dataset(), eta in 0.01..0.5f64) {
        let n = ds.len();
        let ds = ds.into_absorbed().repartitioned(TaskPartition::single(n).unwrap()).unwrap();
        let spec = LossSpec::logistic();
        let cfg = TrainConfig::new(Algorithm::SeqGd, 7, StepSize::Fixed(eta), Horizon::Stages(5));
        let a = run_sequential_gd(TaskSource::Fixed(&ds), &cfg, &spec).unwrap();
        let b = run_joint_gd(&ds, &cfg, &spec).unwrap();
        prop_assert_eq!(a.final_w, b.final_w);
        prop_assert_eq!(a.stage_task_losses, b.stage_task_losses);
    }

    #[test]
    fn runs_are_deterministic(ds in dataset(), seed in any::<u64>()) {
        let ds = ds.into_absorbed();
        let spec = LossSpec::logistic();
        let cfg = TrainConfig::new(Algorithm::SeqGd, 4, StepSize::Fixed(0.1), Horizon::Stages(12))
            .with_schedule(OrderingSchedule::Random { seed });
        let a = run_sequential_gd(TaskSource::Fixed(&ds), &cfg, &spec).unwrap();
        let b = run_sequential_gd(TaskSource::Fixed(&ds), &cfg, &spec).unwrap();
        prop_assert_eq!(a.tasks, b.tasks);
        prop_assert_eq!(a.final_w, b.final_w);
        prop_assert_eq!(a.stage_task_losses, b.stage_task_losses);
    }

    #[test]
    fn guarded_cycles_do_not_increase_loss(ds in separable()) {
        let spec = LossSpec::logistic();
        let cfg = TrainConfig::new(Algorithm::SeqGd, 5, StepSize::Auto { fraction: 0.9 }, Horizon::Cycles(20))
            .with_guard(GuardKind::Cyclic);
        let run = run_sequential_gd(TaskSource::Fixed(&ds), &cfg, &spec).unwrap();
        for j in 1..=run.cycles() {
            let (a, b) = (run.cycle_start_joint_loss(j - 1), run.cycle_start_joint_loss(j));
            prop_assert!(b <= a * (1.0 + 1e-12), "cycle {}: {} -> {}", j, a, b);
        }
        // step lengths shrink: the last cycle moves less than the first
        let m = ds.num_tasks();
        let first: f64 = run.stage_step_sq[..m].iter().sum();
        let last: f64 = run.stage_step_sq[run.stages() - m..].iter().sum();
        prop_assert!(last <= first * (1.0 + 1e-12));
    }
}

#[test]
fn dataset_file_round_trip_and_error_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pair.txt");
    let ds = make_pair_dataset::<f64>(PairSplit::Aligned);
    save_dataset(&ds, &path).unwrap();
    assert_eq!(load_dataset::<f64>(&path).unwrap(), ds);

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "2 2 1\n0 1 1.0 2.0\n0 3 1.0 2.0\n").unwrap();
    match load_dataset::<f64>(&bad) {
        Err(seqmargin_core::Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
}
