//! Sequential GD, the joint full-batch GD baseline and the sequential
//! max-margin projection baseline, with task-ordering schedules and
//! step-size guards.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{JointDataset, ResamplingProvider};
use crate::error::{Error, Result};
use crate::geometry::{self, MarginCertificate, NonSepCertificate};
use crate::linalg;
use crate::loss::{self, LossSpec};
use crate::qp::{self, Polyhedron};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OrderingSchedule {
    #[default]
    Cyclic,
    Random { seed: u64 },
}

impl OrderingSchedule {
    /// Task trained at stage `t`. Random draws depend only on `(seed, t)`.
    pub fn task_at(&self, t: usize, m: usize) -> usize {
        match *self {
            OrderingSchedule::Cyclic => t % m,
            OrderingSchedule::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                rng.gen_range(0..m)
            }
        }
    }

    pub fn is_cyclic(&self) -> bool {
        matches!(self, OrderingSchedule::Cyclic)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    SeqGd,
    JointGd,
    Smm,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::SeqGd => "seqgd",
            Algorithm::JointGd => "jointgd",
            Algorithm::Smm => "smm",
        }
    }
}

/// Serialized as a bare number or the string `auto:<fraction>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize<T> {
    Fixed(T),
    /// This fraction of the configured guard.
    Auto { fraction: T },
}

impl<T: Scalar> StepSize<T> {
    /// Parses `0.01` or `auto:0.9`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Precondition(format!("step size {s:?} is neither a number nor auto:<fraction>"));
        if let Some(f) = s.strip_prefix("auto:") {
            let v: f64 = f.parse().map_err(|_| bad())?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad());
            }
            return Ok(StepSize::Auto { fraction: T::lit(v) });
        }
        let v: f64 = s.parse().map_err(|_| bad())?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(bad());
        }
        Ok(StepSize::Fixed(T::lit(v)))
    }
}

impl<T: Scalar> Serialize for StepSize<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StepSize::Fixed(v) => s.serialize_f64(v.to_f64_lossy()),
            StepSize::Auto { fraction } => s.serialize_str(&format!("auto:{}", fraction.to_f64_lossy())),
        }
    }
}

impl<'de, T: Scalar> Deserialize<'de> for StepSize<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        let parsed = match Repr::deserialize(d)? {
            Repr::Number(v) => StepSize::parse(&v.to_string()),
            Repr::Text(t) => StepSize::parse(&t),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Horizon {
    Stages(usize),
    Cycles(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuardKind {
    /// Loss convergence under cyclic ordering.
    Descent,
    /// Loss and forgetting bounds under cyclic ordering.
    Cyclic,
    /// Random ordering.
    Random,
    /// Non-separable cyclic step-size choice.
    Nonsep,
}

impl GuardKind {
    pub fn name(&self) -> &'static str {
        match self {
            GuardKind::Descent => "descent",
            GuardKind::Cyclic => "cyclic",
            GuardKind::Random => "random",
            GuardKind::Nonsep => "nonsep",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotPolicy {
    /// Every stage for runs up to 10⁴ stages, else geometric thinning.
    #[default]
    Auto,
    All,
    /// Geometrically spaced stages plus every end of cycle.
    Geometric,
}

impl SnapshotPolicy {
    const AUTO_LIMIT: usize = 10_000;

    fn keep(&self, t: usize, stages: usize, m: usize) -> bool {
        let all = match self {
            SnapshotPolicy::All => true,
            SnapshotPolicy::Auto => stages <= Self::AUTO_LIMIT,
            SnapshotPolicy::Geometric => false,
        };
        if all || t + 1 == stages || (t + 1).is_multiple_of(m) || t < 16 {
            return true;
        }
        // keep t when floor(log_{1.05}) changes
        let a = ((t as f64).ln() / 1.05f64.ln()).floor();
        let b = (((t + 1) as f64).ln() / 1.05f64.ln()).floor();
        a != b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct TrainConfig<T> {
    pub algorithm: Algorithm,
    /// Gradient steps per stage.
    pub k: usize,
    pub eta: StepSize<T>,
    /// Guard used to resolve `StepSize::Auto`.
    #[serde(default = "default_guard")]
    pub guard: GuardKind,
    pub horizon: Horizon,
    #[serde(default)]
    pub schedule: OrderingSchedule,
    /// Defaults to the zero vector.
    #[serde(default)]
    pub w0: Option<Vec<T>>,
    #[serde(default)]
    pub snapshots: SnapshotPolicy,
    /// Record the joint loss after every gradient step.
    #[serde(default)]
    pub trace_steps: bool,
    #[serde(default = "default_abort_norm")]
    pub abort_norm: T,
}

fn default_guard() -> GuardKind {
    GuardKind::Descent
}

fn default_abort_norm<T: Scalar>() -> T {
    T::lit(1e12)
}

impl<T: Scalar> TrainConfig<T> {
    pub fn new(algorithm: Algorithm, k: usize, eta: StepSize<T>, horizon: Horizon) -> Self {
        Self {
            algorithm,
            k,
            eta,
            guard: default_guard(),
            horizon,
            schedule: OrderingSchedule::Cyclic,
            w0: None,
            snapshots: SnapshotPolicy::Auto,
            trace_steps: false,
            abort_norm: default_abort_norm(),
        }
    }

    pub fn with_schedule(mut self, s: OrderingSchedule) -> Self {
        self.schedule = s;
        self
    }

    pub fn with_guard(mut self, g: GuardKind) -> Self {
        self.guard = g;
        self
    }

    pub fn with_w0(mut self, w0: Vec<T>) -> Self {
        self.w0 = Some(w0);
        self
    }

    pub fn with_step_trace(mut self) -> Self {
        self.trace_steps = true;
        self
    }

    pub fn stages(&self, m: usize) -> Result<usize> {
        match (self.horizon, self.schedule) {
            (Horizon::Stages(t), _) => Ok(t),
            (Horizon::Cycles(j), OrderingSchedule::Cyclic) => Ok(j * m),
            (Horizon::Cycles(_), OrderingSchedule::Random { .. }) => Err(Error::Precondition(
                "random ordering takes a stage count, not cycles".into(),
            )),
        }
    }

    /// Number of cycles `J` used by guards that depend on it.
    pub fn cycles(&self, m: usize) -> Result<usize> {
        Ok(self.stages(m)?.div_ceil(m))
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Precondition("K must be at least 1".into()));
        }
        if let Some(w0) = &self.w0 {
            if w0.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: w0.len(),
                });
            }
        }
        Ok(())
    }
}

/// Quantities a guard may need, computed on demand.
pub struct GuardInputs<'a, T> {
    pub margin: Option<&'a MarginCertificate<T>>,
    pub nonsep: Option<&'a NonSepCertificate<T>>,
}

/// Threshold (T3.1, T3.3, T4.1) or step-size choice (T5.2) for the given
/// dataset, loss, `K`, `M` and cycle count `J`.
pub fn guard_eta<T: Scalar>(
    kind: GuardKind,
    ds: &JointDataset<T>,
    spec: &LossSpec<T>,
    k: usize,
    j: usize,
    w0: &[T],
    inputs: &GuardInputs<'_, T>,
) -> Result<T> {
    let beta = spec.beta()?;
    let kk = T::lit(k as f64);
    let m = T::lit(ds.num_tasks() as f64);
    let two = T::lit(2.0);
    let separable = |c: Option<&MarginCertificate<T>>| -> Result<(T, T)> {
        let owned;
        let c = match c {
            Some(c) => c,
            None => {
                owned = geometry::max_margin_certificate(ds)?;
                &owned
            }
        };
        Ok((c.phi, c.sigma_max))
    };
    match kind {
        GuardKind::Descent | GuardKind::Cyclic => {
            let (phi, s) = separable(inputs.margin)?;
            let c = if kind == GuardKind::Descent { two } else { T::lit(4.0) };
            Ok(phi * phi / (c * kk * beta * s * s * s * (m * phi + s)))
        }
        GuardKind::Random => {
            let (phi, s) = separable(inputs.margin)?;
            Ok(two * phi * phi / (beta * s * s * s * s))
        }
        GuardKind::Nonsep => {
            let owned;
            let c = match inputs.nonsep {
                Some(c) => c,
                None => {
                    owned = nonsep_for_guard(ds, spec, k)?;
                    &owned
                }
            };
            Ok(nonsep_step(c, k, j, w0))
        }
    }
}

/// Step-size choice of the non-separable analysis for a given certificate.
pub fn nonsep_step<T: Scalar>(c: &NonSepCertificate<T>, k: usize, j: usize, w0: &[T]) -> T {
    let kk = T::lit(k as f64);
    let jj = T::lit(j.max(1) as f64);
    let s2 = T::SQRT_2();
    let two = T::lit(2.0);
    let cap = T::one() / (two * s2 * kk * c.big_b);
    let d0 = linalg::dist_sq(w0, &c.w_star);
    let ratio = d0 * c.mu.powi(3) / (c.big_b * c.big_b * c.v_star);
    let inner = jj * jj * T::one().max(ratio);
    let choice = (T::one() + two * s2) / (two * s2 * kk * jj) * inner.ln();
    if choice > T::zero() {
        cap.min(choice)
    } else {
        cap
    }
}

/// Non-separable certificate evaluated at the largest admissible step
/// `1/(2√2KB)`, whose compact set contains the sets of all smaller steps.
pub fn nonsep_for_guard<T: Scalar>(ds: &JointDataset<T>, spec: &LossSpec<T>, k: usize) -> Result<NonSepCertificate<T>> {
    let sm = loss::smoothness_constants(spec, ds)?;
    let cap = T::one() / (T::lit(2.0) * T::SQRT_2() * T::lit(k as f64) * sm.big_b);
    geometry::nonsep_certificate(ds, spec, cap, k)
}

/// Resolves the configured step size against its guard.
pub fn resolve_eta<T: Scalar>(cfg: &TrainConfig<T>, ds: &JointDataset<T>, spec: &LossSpec<T>) -> Result<T> {
    match cfg.eta {
        StepSize::Fixed(e) => {
            if !(e > T::zero()) {
                return Err(Error::Precondition("step size must be positive".into()));
            }
            Ok(e)
        }
        StepSize::Auto { fraction } => {
            let w0 = cfg.w0.clone().unwrap_or_else(|| vec![T::zero(); ds.dim()]);
            let j = cfg.cycles(ds.num_tasks())?;
            let g = guard_eta(
                cfg.guard,
                ds,
                spec,
                cfg.k,
                j,
                &w0,
                &GuardInputs { margin: None, nonsep: None },
            )?;
            Ok(fraction * g)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    /// The iterate left the finite range or exceeded the abort norm at
    /// this stage and step; the run holds the last finite state.
    Diverged { stage: usize, step: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRun<T> {
    pub algorithm: Algorithm,
    pub schedule: OrderingSchedule,
    pub k: usize,
    pub eta: T,
    pub num_tasks: usize,
    /// Task trained at each completed stage.
    pub tasks: Vec<usize>,
    pub w0: Vec<T>,
    pub final_w: Vec<T>,
    /// End-of-stage weights `w_K^{(t)}` for snapshotted stages.
    pub stage_weights: BTreeMap<usize, Vec<T>>,
    /// `L_m(w_K^{(t)})` for every completed stage `t` and task `m`.
    pub stage_task_losses: Vec<Vec<T>>,
    pub initial_task_losses: Vec<T>,
    /// Σ_k ‖w_{k+1} − w_k‖² within each stage.
    pub stage_step_sq: Vec<T>,
    /// Joint loss at every step of each stage (K+1 values), when traced.
    pub step_joint_losses: Option<Vec<Vec<T>>>,
    pub status: RunStatus,
}

impl<T: Scalar> TrainRun<T> {
    pub fn stages(&self) -> usize {
        self.tasks.len()
    }

    /// Full cycles completed by a cyclic run.
    pub fn cycles(&self) -> usize {
        self.stages() / self.num_tasks
    }

    /// `w_K^{(t)}`.
    pub fn weight_after_stage(&self, t: usize) -> Result<&[T]> {
        self.stage_weights
            .get(&t)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingSnapshot(format!("no weight stored for stage {t}")))
    }

    /// `w_0^{(jM)}`: the weight at the start of cycle `j`.
    pub fn cycle_start_weight(&self, j: usize) -> Result<&[T]> {
        if j == 0 {
            Ok(&self.w0)
        } else {
            self.weight_after_stage(j * self.num_tasks - 1)
        }
    }

    /// Joint loss (sum over tasks) at the end of stage `t`.
    pub fn stage_joint_loss(&self, t: usize) -> T {
        self.stage_task_losses[t].iter().copied().sum()
    }

    /// Joint loss at the start of cycle `j`.
    pub fn cycle_start_joint_loss(&self, j: usize) -> T {
        if j == 0 {
            self.initial_task_losses.iter().copied().sum()
        } else {
            self.stage_joint_loss(j * self.num_tasks - 1)
        }
    }

    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// Training data: one fixed dataset or a fresh sample per stage.
#[derive(Clone, Copy, Debug)]
pub enum TaskSource<'a, T> {
    Fixed(&'a JointDataset<T>),
    Resampling(&'a ResamplingProvider<T>),
}

impl<'a, T: Scalar> TaskSource<'a, T> {
    /// Dataset used for every recorded loss.
    pub fn evaluation(&self) -> &'a JointDataset<T> {
        match *self {
            TaskSource::Fixed(ds) => ds,
            TaskSource::Resampling(p) => p.reference(),
        }
    }
}

struct Recorder<T> {
    run: TrainRun<T>,
    stages: usize,
}

impl<T: Scalar> Recorder<T> {
    fn new(cfg: &TrainConfig<T>, eta: T, eval: &JointDataset<T>, spec: &LossSpec<T>, w0: Vec<T>, stages: usize) -> Result<Self> {
        let initial_task_losses = loss::task_losses(spec, eval, &w0)?;
        Ok(Self {
            run: TrainRun {
                algorithm: cfg.algorithm,
                schedule: cfg.schedule,
                k: cfg.k,
                eta,
                num_tasks: eval.num_tasks(),
                tasks: Vec::with_capacity(stages),
                final_w: w0.clone(),
                w0,
                stage_weights: BTreeMap::new(),
                stage_task_losses: Vec::with_capacity(stages),
                initial_task_losses,
                stage_step_sq: Vec::with_capacity(stages),
                step_joint_losses: cfg.trace_steps.then(Vec::new),
                status: RunStatus::Completed,
            },
            stages,
        })
    }

    fn end_stage(
        &mut self,
        t: usize,
        task: usize,
        w: &[T],
        step_sq: T,
        steps: Option<Vec<T>>,
        eval: &JointDataset<T>,
        spec: &LossSpec<T>,
        policy: SnapshotPolicy,
    ) {
        self.run.tasks.push(task);
        self.run.stage_task_losses.push(loss::task_losses(spec, eval, w).expect("validated dimensions"));
        self.run.stage_step_sq.push(step_sq);
        if let (Some(all), Some(s)) = (self.run.step_joint_losses.as_mut(), steps) {
            all.push(s);
        }
        if policy.keep(t, self.stages, self.run.num_tasks) {
            self.run.stage_weights.insert(t, w.to_vec());
        }
        self.run.final_w = w.to_vec();
    }
}

fn initial_weight<T: Scalar>(cfg: &TrainConfig<T>, d: usize) -> Vec<T> {
    cfg.w0.clone().unwrap_or_else(|| vec![T::zero(); d])
}

fn gd_run<T: Scalar>(
    source: TaskSource<'_, T>,
    cfg: &TrainConfig<T>,
    spec: &LossSpec<T>,
    eta: T,
    joint: bool,
) -> Result<TrainRun<T>> {
    let eval = source.evaluation();
    eval.require_absorbed()?;
    cfg.validate(eval.dim())?;
    if !(eta > T::zero() && eta.is_finite()) {
        return Err(Error::Precondition("step size must be positive and finite".into()));
    }
    let m = eval.num_tasks();
    let d = eval.dim();
    let stages = cfg.stages(m)?;
    let w0 = initial_weight(cfg, d);
    let mut rec = Recorder::new(cfg, eta, eval, spec, w0.clone(), stages)?;
    let mut w = w0;
    let mut g = vec![T::zero(); d];
    let mut prev = w.clone();
    for t in 0..stages {
        let task = if joint { 0 } else { cfg.schedule.task_at(t, m) };
        let fresh;
        let data = match source {
            TaskSource::Fixed(ds) => ds,
            TaskSource::Resampling(p) => {
                fresh = p.sample_for_stage(t);
                &fresh
            }
        };
        let rows: Vec<&[T]> = if joint {
            data.points().iter().map(|p| p.x.as_slice()).collect()
        } else {
            data.task(task).iter().map(|&i| data.x(i)).collect()
        };
        let mut step_sq = T::zero();
        let mut steps = cfg
            .trace_steps
            .then(|| vec![loss::joint_loss(spec, eval, &w).expect("validated")]);
        for k in 0..cfg.k {
            prev.copy_from_slice(&w);
            loss::gradient_over(spec, rows.iter().copied(), &w, &mut g);
            linalg::axpy(-eta, &g, &mut w);
            let n = linalg::norm(&w);
            if !n.is_finite() || n > cfg.abort_norm {
                rec.run.status = RunStatus::Diverged { stage: t, step: k };
                rec.run.final_w = prev.clone();
                return Ok(rec.run);
            }
            step_sq += linalg::dist_sq(&w, &prev);
            if let Some(s) = steps.as_mut() {
                s.push(loss::joint_loss(spec, eval, &w).expect("validated"));
            }
        }
        rec.end_stage(t, task, &w, step_sq, steps, eval, spec, cfg.snapshots);
    }
    Ok(rec.run)
}

/// Sequential GD: `K` steps on the current task's loss per stage, carrying
/// the weight from stage to stage.
pub fn run_sequential_gd<T: Scalar>(
    source: TaskSource<'_, T>,
    cfg: &TrainConfig<T>,
    spec: &LossSpec<T>,
) -> Result<TrainRun<T>> {
    let eta = resolve_eta(cfg, source.evaluation(), spec)?;
    gd_run(source, cfg, spec, eta, false)
}

/// Full-batch GD on the joint loss; a "stage" is `K` steps.
pub fn run_joint_gd<T: Scalar>(ds: &JointDataset<T>, cfg: &TrainConfig<T>, spec: &LossSpec<T>) -> Result<TrainRun<T>> {
    let eta = resolve_eta(cfg, ds, spec)?;
    let mut cfg = cfg.clone();
    cfg.schedule = OrderingSchedule::Cyclic;
    let mut run = gd_run(TaskSource::Fixed(ds), &cfg, spec, eta, true)?;
    run.algorithm = Algorithm::JointGd;
    Ok(run)
}

/// Sequential max-margin: each stage projects the iterate onto the current
/// task's margin polyhedron. Losses are recorded with `spec`.
pub fn run_smm<T: Scalar>(ds: &JointDataset<T>, cfg: &TrainConfig<T>, spec: &LossSpec<T>) -> Result<TrainRun<T>> {
    ds.require_absorbed()?;
    cfg.validate(ds.dim())?;
    let m = ds.num_tasks();
    let stages = cfg.stages(m)?;
    let polys: Vec<Polyhedron<T>> = (0..m)
        .map(|task| Polyhedron::new(ds.dim(), ds.task(task).iter().map(|&i| ds.x(i).to_vec()).collect()))
        .collect::<Result<_>>()?;
    let w0 = initial_weight(cfg, ds.dim());
    let mut rec = Recorder::new(cfg, T::zero(), ds, spec, w0.clone(), stages)?;
    rec.run.algorithm = Algorithm::Smm;
    rec.run.k = 1;
    let mut w = w0;
    for t in 0..stages {
        let task = cfg.schedule.task_at(t, m);
        let sol = qp::project_onto_polyhedron(&polys[task], &w, T::kkt_tol())?;
        let step_sq = linalg::dist_sq(&sol.w, &w);
        w = sol.w;
        rec.end_stage(t, task, &w, step_sq, None, ds, spec, cfg.snapshots);
    }
    Ok(rec.run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_span_toy, DataPoint, TaskPartition};
    use approx::assert_abs_diff_eq;

    fn unit_point() -> JointDataset<f64> {
        JointDataset::new(vec![DataPoint::positive(&[1.0, 0.0])], TaskPartition::single(1).unwrap())
            .unwrap()
            .into_absorbed()
    }

    #[test]
    fn one_step_matches_closed_form() {
        let ds = unit_point();
        let cfg = TrainConfig::new(Algorithm::SeqGd, 1, StepSize::Fixed(1.0), Horizon::Stages(1));
        let spec = LossSpec::logistic();
        let run = run_sequential_gd(TaskSource::Fixed(&ds), &cfg, &spec).unwrap();
        assert_eq!(run.final_w, vec![0.5, 0.0]);
        let j = run_joint_gd(&ds, &cfg, &spec).unwrap();
        assert_eq!(j.final_w, vec![0.5, 0.0]);
    }

    #[test]
    fn guard_plug_in_values() {
        let ds = unit_point();
        let spec = LossSpec::logistic();
        let none = GuardInputs { margin: None, nonsep: None };
        let w0 = [0.0, 0.0];
        assert_abs_diff_eq!(guard_eta(GuardKind::Descent, &ds, &spec, 1, 1, &w0, &none).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(guard_eta(GuardKind::Cyclic, &ds, &spec, 1, 1, &w0, &none).unwrap(), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(guard_eta(GuardKind::Random, &ds, &spec, 1, 1, &w0, &none).unwrap(), 8.0, epsilon = 1e-13);
    }

    #[test]
    fn smm_single_task_fixed_point() {
        let ds = unit_point();
        let cfg = TrainConfig::new(Algorithm::Smm, 1, StepSize::Fixed(1.0), Horizon::Cycles(3));
        let run = run_smm(&ds, &cfg, &LossSpec::logistic()).unwrap();
        assert_eq!(run.weight_after_stage(0).unwrap(), &[1.0, 0.0]);
        assert_eq!(run.final_w, vec![1.0, 0.0]);
    }

    #[test]
    fn random_schedule_is_keyed_by_stage() {
        let s = OrderingSchedule::Random { seed: 5 };
        let a: Vec<usize> = (0..50).map(|t| s.task_at(t, 3)).collect();
        let b: Vec<usize> = (0..50).rev().map(|t| s.task_at(t, 3)).collect::<Vec<_>>().into_iter().rev().collect();
        assert_eq!(a, b);
        assert!((0..3).all(|m| a.contains(&m)));
        assert_eq!(OrderingSchedule::Cyclic.task_at(7, 3), 1);
    }

    #[test]
    fn divergence_keeps_last_finite_state() {
        let ds = make_span_toy::<f64>().into_absorbed();
        let mut cfg = TrainConfig::new(Algorithm::SeqGd, 5, StepSize::Fixed(1.0), Horizon::Cycles(10));
        cfg.abort_norm = 2.0;
        let run = run_sequential_gd(TaskSource::Fixed(&ds), &cfg, &LossSpec::logistic()).unwrap();
        assert!(matches!(run.status, RunStatus::Diverged { .. }));
        assert!(linalg::norm(&run.final_w) <= 2.0);
    }

    #[test]
    fn step_size_parsing() {
        assert_eq!(StepSize::<f64>::parse("0.5").unwrap(), StepSize::Fixed(0.5));
        assert_eq!(StepSize::<f64>::parse("auto:0.9").unwrap(), StepSize::Auto { fraction: 0.9 });
        assert!(StepSize::<f64>::parse("auto:x").is_err());
        assert!(StepSize::<f64>::parse("-1").is_err());
    }

    #[test]
    fn config_json_defaults_and_round_trip() {
        let cfg: TrainConfig<f64> = serde_json::from_str(
            r#"{"algorithm": "seqgd", "k": 10, "eta": "auto:0.9", "horizon": {"cycles": 5}}"#,
        )
        .unwrap();
        assert_eq!(cfg, TrainConfig::new(Algorithm::SeqGd, 10, StepSize::Auto { fraction: 0.9 }, Horizon::Cycles(5)));
        let text = serde_json::to_string(&cfg.clone().with_schedule(OrderingSchedule::Random { seed: 3 })).unwrap();
        let back: TrainConfig<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back.schedule, OrderingSchedule::Random { seed: 3 });
        assert_eq!(back.eta, cfg.eta);
        assert!(serde_json::from_str::<TrainConfig<f64>>(r#"{"algorithm": "seqgd", "k": 1, "eta": 0.1, "horizon": {"cycles": 1}, "kk": 1}"#).is_err());
        let fixed: TrainConfig<f64> = serde_json::from_str(r#"{"algorithm": "smm", "k": 1, "eta": 0.25, "horizon": {"stages": 2}}"#).unwrap();
        assert_eq!(fixed.eta, StepSize::Fixed(0.25));
    }
}
