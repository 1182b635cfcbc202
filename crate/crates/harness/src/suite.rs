//! Acceptance experiments, each addressable by name.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use seqmargin_core::data::*;
use seqmargin_core::geometry::*;
use seqmargin_core::linalg;
use seqmargin_core::loss::{joint_gradient, joint_loss, LossSpec};
use seqmargin_core::metrics::*;
use seqmargin_core::qp::{active_set_oracle, min_norm_in_polyhedron, project_onto_polyhedron, OracleObjective, Polyhedron, QpSolution};
use seqmargin_core::train::*;
use seqmargin_core::{Dataset, Run};

use crate::config::{BoundCheck, ExperimentConfig};
use crate::experiment::execute;

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("[{tag}] {:>2} {:<14} {}", self.id, self.name, self.detail)
    }
}

type Check = fn() -> Result<String, String>;

pub const CRITERIA: [(usize, &str, Check); 10] = [
    (1, "maxmargin", maxmargin),
    (2, "smm", smm),
    (3, "implicit-bias", implicit_bias),
    (4, "loss-bound", loss_bound),
    (5, "forgetting", forgetting_sandwich),
    (6, "loss-bump", loss_bump),
    (7, "random", random_ordering),
    (8, "nonsep", nonseparable),
    (9, "oracle", oracle),
    (10, "hygiene", hygiene),
];

pub fn names() -> Vec<&'static str> {
    CRITERIA.iter().map(|c| c.1).collect()
}

/// Runs the named criteria (all when `only` is `None`) in parallel and
/// returns the results in criterion order.
pub fn run_suite(only: Option<&str>) -> Option<Vec<CriterionResult>> {
    let selected: Vec<_> = CRITERIA
        .iter()
        .filter(|c| only.is_none_or(|n| n == c.1 || n == c.0.to_string()))
        .collect();
    if selected.is_empty() {
        return None;
    }
    Some(
        selected
            .par_iter()
            .map(|(id, name, f)| {
                let (passed, detail) = match f() {
                    Ok(d) => (true, d),
                    Err(d) => (false, d),
                };
                CriterionResult {
                    id: *id,
                    name,
                    passed,
                    detail,
                }
            })
            .collect(),
    )
}

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn core<T>(r: seqmargin_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn logistic() -> LossSpec<f64> {
    LossSpec::logistic()
}

fn seq(ds: &Dataset, cfg: &TrainConfig<f64>) -> Result<Run, String> {
    core(run_sequential_gd(TaskSource::Fixed(ds), cfg, &logistic()))
}

fn planar() -> Dataset {
    match sample_2d_tasks::<f64>(&Generator2D::three_task_benchmark(0), false) {
        Ok(DatasetProvider::Fixed(ds)) => ds.into_absorbed(),
        _ => unreachable!("fixed mode of a valid generator"),
    }
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn unit(v: &[f64]) -> Vec<f64> {
    linalg::scaled(1.0 / linalg::norm(v), v)
}

fn maxmargin() -> Result<String, String> {
    let ds = make_span_toy::<f64>().into_absorbed();
    let joint = core(max_margin_certificate(&ds))?.direction();
    let t0 = core(task_max_margin(&ds, 0))?.direction();
    let t1 = core(task_max_margin(&ds, 1))?.direction();
    let dev = [
        max_dev(&joint, &[1.0, 0.0, 0.0]),
        max_dev(&t0, &unit(&[10.0, 1.0, 3.0])),
        max_dev(&t1, &unit(&[10.0, 3.0, 1.0])),
    ];
    let worst = dev.iter().copied().fold(0.0, f64::max);
    ensure(worst <= 1e-6, format!("max direction deviation {worst:.2e} (tol 1e-6)"))
}

fn smm() -> Result<String, String> {
    let ds = make_span_toy::<f64>().into_absorbed();
    let cfg = TrainConfig::new(Algorithm::Smm, 1, StepSize::Fixed(1.0), Horizon::Cycles(10));
    let run = core(run_smm(&ds, &cfg, &logistic()))?;
    let d = linalg::dist_sq(&run.final_w, &[12.0 / 11.0, 1.0 / 11.0, 1.0 / 11.0]).sqrt();
    ensure(d <= 1e-4, format!("distance to (12,1,1)/11 after 10 cycles {d:.2e} (tol 1e-4)"))
}

/// Angle and norm checks of cyclic seqgd at 0.9 of the descent guard.
fn implicit_bias_on(label: &str, ds: &Dataset) -> Result<(bool, String), String> {
    let cert = core(max_margin_certificate(ds))?;
    let cfg = TrainConfig::new(Algorithm::SeqGd, 1000, StepSize::Auto { fraction: 0.9 }, Horizon::Stages(300))
        .with_guard(GuardKind::Descent);
    let run = seq(ds, &cfg)?;
    let sine = |t: usize| -> Result<f64, String> { core(direction_angle(core(run.weight_after_stage(t))?, &cert.w_hat)) };
    let last = run.stages() - 1;
    let (s_final, s10) = (sine(last)?, sine(9)?);
    let wn = cert.w_hat_norm();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for t in run.stages() / 2..run.stages() {
        let r = linalg::norm(core(run.weight_after_stage(t))?) / (((t + 1) as f64).ln() * wn);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let ok = s_final < 0.05 && s_final < s10 && lo >= 0.5 && hi <= 2.0;
    Ok((
        ok,
        format!(
            "{label}: eta={:.3e} sine final {s_final:.3e} (stage 10: {s10:.3e}), ‖w‖/(ln t‖ŵ‖) in [{lo:.3}, {hi:.3}]",
            run.eta
        ),
    ))
}

fn implicit_bias() -> Result<String, String> {
    let span = make_span_toy::<f64>().into_absorbed();
    let planar = planar();
    let parts: Vec<Result<(bool, String), String>> =
        [("span", &span), ("planar", &planar)].par_iter().map(|(l, d)| implicit_bias_on(l, d)).collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for p in parts {
        let (o, d) = p?;
        ok &= o;
        detail.push(d);
    }
    ensure(ok, detail.join("; "))
}

fn cyclic_config(name: &str, dataset: &str, cycles: usize, checks: Vec<BoundCheck>) -> ExperimentConfig {
    let train = TrainConfig::new(Algorithm::SeqGd, 10, StepSize::Auto { fraction: 0.9 }, Horizon::Cycles(cycles))
        .with_guard(GuardKind::Cyclic);
    ExperimentConfig {
        name: name.into(),
        dataset: dataset.into(),
        loss: seqmargin_core::loss::LossKind::Logistic,
        train,
        metrics: vec!["loss_joint".into(), "forget_cycle".into(), "bound_loss".into()],
        checks,
        output_dir: "out".into(),
        distance_constant: DEFAULT_DISTANCE_CONSTANT,
        burn_in: 0.2,
    }
}

fn loss_bound() -> Result<String, String> {
    let mut detail = Vec::new();
    let mut violations = 0;
    for split in ["pair-contradicting", "pair-aligned"] {
        let out = execute(&cyclic_config(split, split, 100, vec![BoundCheck::Loss])).map_err(|e| e.to_string())?;
        let r = &out.reports[0];
        violations += r.violations;
        detail.push(format!(
            "{split}: {} violations over J=1..{}, min slack {:.3e}",
            r.violations,
            r.index.len(),
            r.min_slack()
        ));
    }
    ensure(violations == 0, detail.join("; "))
}

fn forgetting_sandwich() -> Result<String, String> {
    let mut ok = true;
    let mut detail = Vec::new();
    for (split, contradicting) in [("pair-contradicting", true), ("pair-aligned", false)] {
        let out = execute(&cyclic_config(split, split, 51, vec![BoundCheck::Forgetting])).map_err(|e| e.to_string())?;
        let f: Vec<f64> = (1..=50)
            .map(|j| core(cycle_averaged_forgetting(&out.run, j)))
            .collect::<Result<_, _>>()?;
        let tail = &f[25..];
        let (sign, trend) = if contradicting {
            (f.iter().all(|&v| v > 0.0), tail.windows(2).all(|w| w[1].abs() <= w[0].abs()))
        } else {
            (f.iter().all(|&v| v < 0.0), tail.windows(2).all(|w| w[1] >= w[0]))
        };
        let inside = out.reports.iter().all(|r| r.violations == 0);
        ok &= sign && trend && inside;
        detail.push(format!(
            "{split}: F(1)={:.3e} F(50)={:.3e} sign {} trend {} sandwich {}",
            f[0],
            f[49],
            if sign { "ok" } else { "wrong" },
            if trend { "ok" } else { "wrong" },
            if inside { "holds" } else { "violated" }
        ));
    }
    ensure(ok, detail.join("; "))
}

fn loss_bump() -> Result<String, String> {
    let ds = make_bump_toy::<f64>().into_absorbed();
    let cycles = 50;
    let cfg = TrainConfig::new(Algorithm::SeqGd, 10, StepSize::Fixed(1e-6), Horizon::Cycles(cycles)).with_step_trace();
    let run = seq(&ds, &cfg)?;
    let steps = run.step_joint_losses.as_ref().expect("step trace requested");
    let m = ds.num_tasks();
    let bump = (0..7 * m).find(|&t| steps[t].windows(2).any(|w| w[1] > w[0]));
    let descent = (1..=cycles).all(|j| run.cycle_start_joint_loss(j) <= run.cycle_start_joint_loss(j - 1));
    let detail = format!(
        "first rising stage {}, end-of-cycle loss non-increasing over {cycles} cycles: {descent}",
        bump.map_or("none".into(), |t| format!("{t} (task {})", run.tasks[t]))
    );
    ensure(bump.is_some() && descent, detail)
}

/// Steps per stage for the random-ordering run. The guard is about 6e-7 on
/// this data, so the loss target sits far beyond any desk-scale budget;
/// this K keeps the experiment inside its one-minute allowance.
pub const RANDOM_ORDERING_K: usize = 10_000;

fn random_ordering() -> Result<String, String> {
    let ds = planar();
    let cert = core(max_margin_certificate(&ds))?;
    let results: Vec<Result<(f64, f64, f64), String>> = [0u64, 1, 2]
        .par_iter()
        .map(|&seed| {
            let cfg = TrainConfig::new(Algorithm::SeqGd, RANDOM_ORDERING_K, StepSize::Auto { fraction: 0.9 }, Horizon::Stages(300))
                .with_guard(GuardKind::Random)
                .with_schedule(OrderingSchedule::Random { seed });
            let run = seq(&ds, &cfg)?;
            let loss = core(joint_loss(&logistic(), &ds, &run.final_w))?;
            Ok((loss, core(direction_angle(&run.final_w, &cert.w_hat))?, run.eta))
        })
        .collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for (seed, r) in results.into_iter().enumerate() {
        let (loss, sine, eta) = r?;
        ok &= loss < 1e-2 && sine < 0.1;
        detail.push(format!("seed {seed}: loss {loss:.3e} sine {sine:.3e}"));
        if seed == 0 {
            detail.insert(0, format!("K={RANDOM_ORDERING_K} eta={eta:.3e}"));
        }
    }
    ensure(ok, detail.join("; "))
}

fn nonseparable() -> Result<String, String> {
    let spec = logistic();
    let ds = core(make_nonseparable::<f64>(&NonseparableSpec::new(1.0, 0)))?.into_absorbed();
    let (k, cycles) = (10, 500);
    let w0 = vec![0.0; ds.dim()];
    let cap_cert = core(nonsep_for_guard(&ds, &spec, k))?;
    let eta = nonsep_step(&cap_cert, k, cycles, &w0);
    let cert = core(nonsep_certificate(&ds, &spec, eta, k))?;
    let cfg = TrainConfig::new(Algorithm::SeqGd, k, StepSize::Fixed(eta), Horizon::Cycles(cycles));
    let run = seq(&ds, &cfg)?;
    let d2: Vec<f64> = (0..=cycles)
        .map(|j| Ok(linalg::dist_sq(core(run.cycle_start_weight(j))?, &cert.w_star)))
        .collect::<Result<_, String>>()?;
    let dist = d2[cycles].sqrt();
    let monotone = (5..cycles).all(|j| d2[j + 1] <= d2[j]);
    let js: Vec<usize> = (2..=cycles).collect();
    let cmin = minimal_sufficient_constant(&cert, &w0, &js, &d2[2..]);
    let dominated = cmin <= DEFAULT_DISTANCE_CONSTANT;
    let ok = cert.b >= 0.1 && dist < 1e-3 && monotone && cmin <= 1e3;
    ensure(
        ok,
        format!(
            "N={} b={:.3} eta={eta:.3e} ‖w−w★‖ at J={cycles}: {dist:.3e} (tol 1e-3), monotone after cycle 5: {monotone}, \
             bound with C={DEFAULT_DISTANCE_CONSTANT} dominates: {dominated} (minimal C {cmin:.3e})",
            ds.len(),
            cert.b
        ),
    )
}

fn builtin_toys() -> Vec<Dataset> {
    vec![
        make_span_toy::<f64>().into_absorbed(),
        make_pair_dataset::<f64>(PairSplit::Contradicting).into_absorbed(),
        make_pair_dataset::<f64>(PairSplit::Aligned).into_absorbed(),
        make_bump_toy::<f64>().into_absorbed(),
    ]
}

/// Random separable point sets with N ≤ 6 and d ≤ 3.
fn random_separable(rng: &mut ChaCha8Rng) -> Polyhedron<f64> {
    loop {
        let d = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=6);
        let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if linalg::norm(&u) < 0.2 {
            continue;
        }
        let rows = (0..n)
            .map(|_| loop {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
                if linalg::dot(&x, &u) > 0.3 {
                    break x;
                }
            })
            .collect();
        return Polyhedron::new(d, rows).expect("consistent dimensions");
    }
}

fn agree(a: &QpSolution<f64>, b: &QpSolution<f64>) -> (f64, bool) {
    (max_dev(&a.w, &b.w), a.active == b.active)
}

fn oracle() -> Result<String, String> {
    let mut worst = 0.0f64;
    let mut mismatched = 0;
    let mut cases = 0;
    let mut check = |p: &Polyhedron<f64>, w0: &[f64]| -> Result<(), String> {
        for (s, o) in [
            (core(min_norm_in_polyhedron(p, 1e-10))?, core(active_set_oracle(p, OracleObjective::MinNorm))?),
            (core(project_onto_polyhedron(p, w0, 1e-10))?, core(active_set_oracle(p, OracleObjective::MinDist(w0)))?),
        ] {
            let (dev, same) = agree(&s, &o);
            worst = worst.max(dev);
            mismatched += usize::from(!same);
            cases += 1;
        }
        Ok(())
    };
    for ds in builtin_toys() {
        let p = core(Polyhedron::from_rows(&ds.vectors()))?;
        check(&p, &vec![0.5; ds.dim()])?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..30 {
        let p = random_separable(&mut rng);
        let w0: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        check(&p, &w0)?;
    }
    ensure(
        worst <= 1e-8 && mismatched == 0,
        format!("{cases} solves, max deviation {worst:.2e} (tol 1e-8), active-set mismatches {mismatched}"),
    )
}

fn random_dataset(rng: &mut ChaCha8Rng) -> Dataset {
    let d = rng.gen_range(1..=3);
    let m = rng.gen_range(1..=3);
    let n = rng.gen_range(m..=8);
    let pts = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
            if rng.gen() {
                DataPoint::positive(&x)
            } else {
                DataPoint::negative(&x)
            }
        })
        .collect();
    let assign: Vec<usize> = (0..n).map(|i| if i < m { i } else { rng.gen_range(0..m) }).collect();
    let part = TaskPartition::from_assignment(&assign, m).expect("every task is non-empty");
    JointDataset::new(pts, part).expect("finite points").into_absorbed()
}

fn hygiene() -> Result<String, String> {
    let spec = logistic();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst_fd = 0.0f64;
    for _ in 0..200 {
        let ds = random_dataset(&mut rng);
        let w: Vec<f64> = (0..ds.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let g = core(joint_gradient(&spec, &ds, &w))?;
        let h = 1e-6;
        let mut err = 0.0f64;
        for i in 0..w.len() {
            let (mut a, mut b) = (w.clone(), w.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (core(joint_loss(&spec, &ds, &a))? - core(joint_loss(&spec, &ds, &b))?) / (2.0 * h);
            err += (fd - g[i]).powi(2);
        }
        worst_fd = worst_fd.max(err.sqrt() / linalg::norm(&g).max(1.0));
    }

    let mut worst_phi = 0.0f64;
    let mut certs = 0;
    let mut sets: Vec<Dataset> = builtin_toys();
    sets.push(planar());
    for _ in 0..30 {
        let p = random_separable(&mut rng);
        let pts = p.rows().iter().map(|r| DataPoint::positive(r)).collect();
        sets.push(JointDataset::new(pts, TaskPartition::single(p.len()).expect("non-empty")).expect("finite").into_absorbed());
    }
    for ds in &sets {
        let mut all = vec![core(max_margin_certificate(ds))?];
        for m in 0..ds.num_tasks() {
            all.push(core(task_max_margin(ds, m))?);
        }
        for c in all {
            worst_phi = worst_phi.max((c.phi * c.w_hat_norm() - 1.0).abs());
            certs += 1;
        }
    }

    let identical = determinism()?;
    ensure(
        worst_fd < 1e-5 && worst_phi <= 1e-9 && identical,
        format!(
            "finite-difference error {worst_fd:.2e} (tol 1e-5), |φ‖ŵ‖−1| {worst_phi:.2e} over {certs} certificates (tol 1e-9), \
             repeated runs byte-identical: {identical}"
        ),
    )
}

/// Every engine and ordering twice; traces and summaries must match byte for byte.
fn determinism() -> Result<bool, String> {
    let mut configs = vec![cyclic_config("det-cyclic", "pair-aligned", 20, vec![BoundCheck::Loss, BoundCheck::Forgetting])];
    let mut random = cyclic_config("det-random", "planar:seed=3", 0, vec![]);
    random.train = TrainConfig::new(Algorithm::SeqGd, 5, StepSize::Fixed(1e-4), Horizon::Stages(30))
        .with_schedule(OrderingSchedule::Random { seed: 11 })
        .with_step_trace();
    random.metrics = vec!["loss_joint".into(), "loss_task".into(), "angle_sine".into(), "rho_norm".into()];
    configs.push(random);
    let mut resampled = cyclic_config("det-resample", "planar:seed=4,resample=true", 0, vec![]);
    resampled.train = TrainConfig::new(Algorithm::SeqGd, 3, StepSize::Fixed(1e-4), Horizon::Cycles(4));
    configs.push(resampled);
    let mut smm = cyclic_config("det-smm", "span", 5, vec![]);
    smm.train.algorithm = Algorithm::Smm;
    configs.push(smm);
    let mut nonsep = cyclic_config("det-nonsep", "nonsep", 10, vec![BoundCheck::Distance]);
    nonsep.train.eta = StepSize::Fixed(1e-2);
    nonsep.metrics = vec!["loss_joint".into(), "dist_wstar_sq".into(), "bound_dist".into()];
    configs.push(nonsep);
    for cfg in &configs {
        let a = execute(cfg).map_err(|e| format!("{}: {e}", cfg.name))?;
        let b = execute(cfg).map_err(|e| format!("{}: {e}", cfg.name))?;
        if a.trace_text() != b.trace_text() || a.summary != b.summary {
            return Ok(false);
        }
    }
    Ok(true)
}
