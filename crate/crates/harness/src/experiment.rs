//! Runs one configured experiment: certificates, training, traces, bound
//! checks and the summary.

use serde_json::{json, Value};
use seqmargin_core::geometry::{max_margin_certificate, nonsep_certificate, separability_check};
use seqmargin_core::linalg;
use seqmargin_core::loss::LossSpec;
use seqmargin_core::metrics::{
    alignment_sums, distance_bound, cycle_averaged_forgetting, direction_angle, loglog_slope, minimal_sufficient_constant,
    rho_of, Alignment, BoundReport, CyclicBoundConstants, Metric, TraceRecord,
};
use seqmargin_core::train::{resolve_eta, run_joint_gd, run_sequential_gd, run_smm, Algorithm};
use seqmargin_core::{Certificate, Dataset, NonSep, Run};

use crate::config::{BoundCheck, ExperimentConfig, MetricSel};
use crate::error::{HarnessError, Result};
use crate::source::{resolve_dataset, Loaded};
use crate::trace::{render_trace, write_summary, write_trace};

pub struct Outcome {
    pub run: Run,
    pub records: Vec<TraceRecord>,
    pub reports: Vec<BoundReport>,
    pub summary: Value,
    pub failed_checks: usize,
}

impl Outcome {
    pub fn trace_text(&self) -> String {
        render_trace(&self.records)
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    eval: &'a Dataset,
    margin: Option<&'a Certificate>,
    nonsep: Option<&'a NonSep>,
    cyclic: Option<&'a CyclicBoundConstants<f64>>,
    align: Option<&'a Alignment<f64>>,
}

/// Runs `cfg` in memory. Nothing is written to disk.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    let loaded = resolve_dataset(&cfg.dataset, None)?;
    let spec = LossSpec::from_kind(cfg.loss);
    let eval = loaded.evaluation();
    let tc = &cfg.train;
    let metrics = cfg.metric_selection()?;
    let wants = |m: Metric| metrics.contains(&MetricSel::One(m));

    let separable = separability_check(&eval)?.is_separable();
    let margin = if separable { Some(max_margin_certificate(&eval)?) } else { None };
    let eta = if tc.algorithm == Algorithm::Smm { 0.0 } else { resolve_eta(tc, &eval, &spec)? };
    let w0 = tc.w0.clone().unwrap_or_else(|| vec![0.0; eval.dim()]);

    let cyclic_checks = cfg.checks.iter().any(|c| matches!(c, BoundCheck::Loss | BoundCheck::Forgetting));
    if (cyclic_checks || cfg.checks.contains(&BoundCheck::Distance))
        && (tc.algorithm != Algorithm::SeqGd || !tc.schedule.is_cyclic()) {
            return Err(HarnessError::Usage("bound checks apply to cyclic sequential GD runs".into()));
        }
    let cyclic = match &margin {
        Some(c) if cyclic_checks => Some(CyclicBoundConstants::new(&eval, c, &spec, eta, tc.k, &w0)?),
        Some(c) if wants(Metric::BoundLoss) || wants(Metric::BoundForgetLo) || wants(Metric::BoundForgetHi) => {
            CyclicBoundConstants::new(&eval, c, &spec, eta, tc.k, &w0).ok()
        }
        None if cyclic_checks => return Err(seqmargin_core::Error::NotSeparable.into()),
        _ => None,
    };
    let align = if cyclic.is_some() { Some(alignment_sums(&eval)?) } else { None };
    let nonsep_needed =
        cfg.checks.contains(&BoundCheck::Distance) || wants(Metric::DistWstarSq) || wants(Metric::BoundDist);
    let nonsep = match (separable, nonsep_needed) {
        (true, _) if cfg.checks.contains(&BoundCheck::Distance) => return Err(seqmargin_core::Error::Separable.into()),
        (false, true) => Some(nonsep_certificate(&eval, &spec, eta, tc.k)?),
        _ => None,
    };

    let run = match (tc.algorithm, &loaded) {
        (Algorithm::SeqGd, _) => run_sequential_gd(loaded.task_source(&eval), tc, &spec)?,
        (Algorithm::JointGd, Loaded::Fixed(_)) => run_joint_gd(&eval, tc, &spec)?,
        (Algorithm::Smm, Loaded::Fixed(_)) => run_smm(&eval, tc, &spec)?,
        (_, Loaded::Resampling(_)) => {
            return Err(HarnessError::Usage(format!(
                "{} needs a fixed dataset, not a resampling generator",
                tc.algorithm.name()
            )))
        }
    };

    let ctx = Context {
        cfg,
        eval: &eval,
        margin: margin.as_ref(),
        nonsep: nonsep.as_ref(),
        cyclic: cyclic.as_ref(),
        align: align.as_ref(),
    };
    let (records, skipped) = records(&ctx, &run, &metrics, &w0)?;
    let reports = checks(&ctx, &run, &w0)?;
    let failed_checks = reports.iter().filter(|r| r.violations > 0).count();
    let summary = summary(&ctx, &run, &reports, &skipped, separable);
    Ok(Outcome {
        run,
        records,
        reports,
        summary,
        failed_checks,
    })
}

/// Runs `cfg` and writes `trace.csv` and `summary.json` into its run directory.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<Outcome> {
    let out = execute(cfg)?;
    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    write_trace(&out.records, &dir.join("trace.csv"))?;
    write_summary(&out.summary, &dir.join("summary.json"))?;
    Ok(out)
}

fn records(ctx: &Context<'_>, run: &Run, metrics: &[MetricSel], w0: &[f64]) -> Result<(Vec<TraceRecord>, Vec<String>)> {
    let m = run.num_tasks;
    let cyclic = run.schedule.is_cyclic();
    let wants = |x: Metric| metrics.contains(&MetricSel::One(x));
    let mut skipped = Vec::new();
    let mut skip_unless = |x: Metric, ok: bool| {
        if wants(x) && !ok {
            skipped.push(x.name());
        }
        wants(x) && ok
    };
    let loss_joint = wants(Metric::LossJoint);
    let task_losses = metrics.contains(&MetricSel::AllTaskLosses);
    let task_subset: Vec<usize> = metrics
        .iter()
        .filter_map(|s| match s {
            MetricSel::One(Metric::LossTask(t)) if *t < m => Some(*t),
            _ => None,
        })
        .collect();
    let norm_w = wants(Metric::NormW);
    let angle = skip_unless(Metric::AngleSine, ctx.margin.is_some());
    let rho = skip_unless(Metric::RhoNorm, ctx.margin.is_some());
    let forget = skip_unless(Metric::ForgetCycle, cyclic);
    let b_loss = skip_unless(Metric::BoundLoss, cyclic && ctx.cyclic.is_some());
    let b_forget_lo = skip_unless(Metric::BoundForgetLo, cyclic && ctx.cyclic.is_some());
    let b_forget_hi = skip_unless(Metric::BoundForgetHi, cyclic && ctx.cyclic.is_some());
    let dist = skip_unless(Metric::DistWstarSq, ctx.nonsep.is_some());
    let b_dist = skip_unless(Metric::BoundDist, cyclic && ctx.nonsep.is_some());

    let mut out = Vec::new();
    let algorithm = run.algorithm.name();
    for t in 0..run.stages() {
        let cycle = if cyclic { (t / m) as i64 } else { -1 };
        let mut push = |step: usize, metric: String, value: f64| {
            out.push(TraceRecord {
                run_id: ctx.cfg.name.clone(),
                algorithm: algorithm.into(),
                stage: t,
                cycle,
                step,
                metric,
                value,
            })
        };
        let k = run.k;
        if let Some(steps) = &run.step_joint_losses {
            let upto = if loss_joint { k } else { k + 1 };
            for (s, v) in steps[t].iter().take(upto).enumerate() {
                push(s, Metric::LossJoint.name(), *v);
            }
        }
        if loss_joint {
            push(k, Metric::LossJoint.name(), run.stage_joint_loss(t));
        }
        for task in 0..m {
            if task_losses || task_subset.contains(&task) {
                push(k, Metric::LossTask(task).name(), run.stage_task_losses[t][task]);
            }
        }
        if let Ok(w) = run.weight_after_stage(t) {
            if norm_w {
                push(k, Metric::NormW.name(), linalg::norm(w));
            }
            if let Some(c) = ctx.margin {
                if angle && linalg::norm(w) > 0.0 {
                    push(k, Metric::AngleSine.name(), direction_angle(w, &c.w_hat)?);
                }
                if rho {
                    push(k, Metric::RhoNorm.name(), rho_of(w, &c.w_hat, t + 1)?.1);
                }
            }
            if let (true, Some(c)) = (dist, ctx.nonsep) {
                push(k, Metric::DistWstarSq.name(), linalg::dist_sq(w, &c.w_star));
            }
        }
        if cyclic && (t + 1) % m == 0 {
            let j = (t + 1) / m;
            if forget {
                push(k, Metric::ForgetCycle.name(), cycle_averaged_forgetting(run, j - 1)?);
            }
            if let Some(b) = ctx.cyclic {
                if b_loss {
                    push(k, Metric::BoundLoss.name(), b.cyclic_loss_bound(j, 0, 0)?);
                }
                if j >= 2 && (b_forget_lo || b_forget_hi) {
                    let (lo, hi) = b.forgetting_bounds(ctx.align.expect("built with the constants"), j - 1)?;
                    if b_forget_lo {
                        push(k, Metric::BoundForgetLo.name(), lo);
                    }
                    if b_forget_hi {
                        push(k, Metric::BoundForgetHi.name(), hi);
                    }
                }
            }
            if let (true, Some(c)) = (b_dist, ctx.nonsep) {
                push(k, Metric::BoundDist.name(), distance_bound(c, w0, j, ctx.cfg.distance_constant));
            }
        }
    }
    skipped.sort();
    skipped.dedup();
    Ok((out, skipped))
}

fn checks(ctx: &Context<'_>, run: &Run, w0: &[f64]) -> Result<Vec<BoundReport>> {
    let mut reports = Vec::new();
    let cycles = run.cycles();
    for check in &ctx.cfg.checks {
        match check {
            BoundCheck::Loss => {
                let b = ctx.cyclic.expect("constants exist for cyclic checks");
                let js: Vec<usize> = (1..=cycles).collect();
                let measured = js.iter().map(|&j| run.cycle_start_joint_loss(j)).collect();
                let bound = js.iter().map(|&j| b.cyclic_loss_bound(j, 0, 0)).collect::<seqmargin_core::Result<_>>()?;
                reports.push(BoundReport::upper("loss", js, measured, bound, b.constants()));
            }
            BoundCheck::Forgetting => {
                let b = ctx.cyclic.expect("constants exist for cyclic checks");
                let align = ctx.align.expect("alignment exists for cyclic checks");
                let js: Vec<usize> = (1..cycles).collect();
                let measured: Vec<f64> = js
                    .iter()
                    .map(|&j| cycle_averaged_forgetting(run, j))
                    .collect::<seqmargin_core::Result<_>>()?;
                let bounds: Vec<(f64, f64)> = js
                    .iter()
                    .map(|&j| b.forgetting_bounds(align, j))
                    .collect::<seqmargin_core::Result<_>>()?;
                let mut constants = b.constants();
                constants.insert("A_plus".into(), align.total_plus);
                constants.insert("A_minus".into(), align.total_minus);
                reports.push(BoundReport::upper(
                    "forgetting_upper",
                    js.clone(),
                    measured.clone(),
                    bounds.iter().map(|b| b.1).collect(),
                    constants.clone(),
                ));
                reports.push(BoundReport::lower(
                    "forgetting_lower",
                    js,
                    measured,
                    bounds.iter().map(|b| b.0).collect(),
                    constants,
                ));
            }
            BoundCheck::Distance => {
                let c = ctx.nonsep.expect("certificate exists for the non-separable check");
                let js: Vec<usize> = (2..=cycles).collect();
                let measured: Vec<f64> = js
                    .iter()
                    .map(|&j| Ok(linalg::dist_sq(run.cycle_start_weight(j)?, &c.w_star)))
                    .collect::<seqmargin_core::Result<_>>()?;
                let bound = js.iter().map(|&j| distance_bound(c, w0, j, ctx.cfg.distance_constant)).collect();
                let mut constants = std::collections::BTreeMap::new();
                constants.insert("C".into(), ctx.cfg.distance_constant);
                constants.insert("B".into(), c.big_b);
                constants.insert("V_star".into(), c.v_star);
                constants.insert("mu".into(), c.mu);
                constants.insert("b".into(), c.b);
                constants.insert("minimal_constant".into(), minimal_sufficient_constant(c, w0, &js, &measured));
                reports.push(BoundReport::upper("distance", js, measured, bound, constants));
            }
        }
    }
    Ok(reports)
}

fn summary(ctx: &Context<'_>, run: &Run, reports: &[BoundReport], skipped: &[String], separable: bool) -> Value {
    let final_loss = match run.stages() {
        0 => run.initial_task_losses.iter().sum(),
        t => run.stage_joint_loss(t - 1),
    };
    let burn = (ctx.cfg.burn_in * run.stages() as f64).floor() as usize;
    let xs: Vec<f64> = (burn..run.stages()).map(|t| (t + 1) as f64).collect();
    let ys: Vec<f64> = (burn..run.stages()).map(|t| run.stage_joint_loss(t)).collect();
    let mut slopes = json!({ "loss_joint_vs_stage": loglog_slope(&xs, &ys) });
    if run.schedule.is_cyclic() && run.cycles() > 1 {
        let first = ((ctx.cfg.burn_in * run.cycles() as f64).floor() as usize).max(1);
        let js: Vec<usize> = (first..run.cycles()).collect();
        let f: Vec<f64> = js
            .iter()
            .filter_map(|&j| cycle_averaged_forgetting(run, j).ok().map(f64::abs))
            .collect();
        let jx: Vec<f64> = js.iter().map(|&j| j as f64).collect();
        slopes["abs_forget_cycle_vs_cycle"] = json!(loglog_slope(&jx, &f));
    }
    let checks: Vec<Value> = reports
        .iter()
        .map(|r| {
            let mut v = serde_json::to_value(r).expect("reports serialize");
            v["min_slack"] = json!(r.min_slack());
            v["max_slack"] = json!(r.max_slack());
            v
        })
        .collect();
    json!({
        "name": ctx.cfg.name,
        "config": ctx.cfg,
        "dataset": {
            "source": ctx.cfg.dataset,
            "dim": ctx.eval.dim(),
            "points": ctx.eval.len(),
            "tasks": ctx.eval.num_tasks(),
            "separable": separable,
        },
        "algorithm": run.algorithm.name(),
        "eta": run.eta,
        "k": run.k,
        "status": run.status,
        "stages": run.stages(),
        "final_w": run.final_w,
        "final_joint_loss": final_loss,
        "margin_certificate": ctx.margin,
        "nonsep_certificate": ctx.nonsep,
        "checks": checks,
        "failed_checks": reports.iter().filter(|r| r.violations > 0).count(),
        "slopes": slopes,
        "skipped_metrics": skipped,
    })
}
