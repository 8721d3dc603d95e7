//! Multi-run experiments: paired arms, aggregation and result files.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::cv::{run_cv, CvRunRecord};
use crate::error::{Error, Result};
use crate::planner::{periodic_for_budget, up_front_for_budget};
use crate::policy::{baseline_schedule, BaselineKind, FixedSchedulePolicy, SamplePolicy};
use crate::rng::run_seed;
use crate::run::{run_sequence, RunRecord, RunSetup, StepRecord};

/// All runs of one policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Arm {
    pub name: String,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub arms: Vec<Arm>,
    /// Per-run selection details when cross-validation is on.
    pub cv: Option<Vec<CvRunRecord>>,
}

impl ExperimentResult {
    pub fn arm(&self, name: &str) -> Option<&Arm> {
        self.arms.iter().find(|a| a.name == name)
    }
}

/// Runs `runs` seeded replications of the primary policy and every
/// configured baseline. Baselines reuse the primary run's seed; without a
/// cost section they receive the primary run's total sample count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let setup = cfg.build_setup()?;
    let horizon = setup.sequence.horizon;
    cfg.build_policy(horizon)?;
    let seeds: Vec<u64> = (0..cfg.run.runs as u64).map(|r| run_seed(cfg.run.seed, r)).collect();

    type PerRun = (RunRecord, Option<CvRunRecord>, Vec<RunRecord>);
    let per_run: Vec<Result<PerRun>> = seeds
        .par_iter()
        .map(|&seed| {
            let (primary, cv) = match &cfg.cv {
                Some(cv) => {
                    let make = || cfg.build_policy(horizon);
                    let rec = run_cv(&setup, cv, &make, seed)?;
                    (rec.run.clone(), Some(rec))
                }
                None => {
                    let mut policy = cfg.build_policy(horizon)?;
                    (run_sequence(&setup, policy.as_mut(), seed)?, None)
                }
            };
            let mut baselines = Vec::new();
            for &kind in &cfg.policy.baselines {
                let schedule = baseline_for(cfg, &setup, kind, primary.total_samples())?;
                let mut policy = FixedSchedulePolicy::new(baseline_name(kind), schedule);
                baselines.push(run_sequence(&setup, &mut policy as &mut dyn SamplePolicy, seed)?);
            }
            Ok((primary, cv, baselines))
        })
        .collect();

    let mut primary = Vec::new();
    let mut cv_runs = Vec::new();
    let mut baseline_runs: Vec<Vec<RunRecord>> = vec![Vec::new(); cfg.policy.baselines.len()];
    for r in per_run {
        let (p, cv, b) = r?;
        primary.push(p);
        if let Some(c) = cv {
            cv_runs.push(c);
        }
        for (slot, rec) in baseline_runs.iter_mut().zip(b) {
            slot.push(rec);
        }
    }
    let mut arms = vec![Arm {
        name: primary[0].policy.clone(),
        runs: primary,
    }];
    for (kind, runs) in cfg.policy.baselines.iter().zip(baseline_runs) {
        arms.push(Arm {
            name: baseline_name(*kind).to_string(),
            runs,
        });
    }
    Ok(ExperimentResult {
        config: cfg.clone(),
        arms,
        cv: cfg.cv.as_ref().map(|_| cv_runs),
    })
}

fn baseline_name(kind: BaselineKind) -> &'static str {
    match kind {
        BaselineKind::UpFront => "up-front",
        BaselineKind::Periodic => "periodic",
    }
}

fn baseline_for(cfg: &ExperimentConfig, setup: &RunSetup, kind: BaselineKind, total: u64) -> Result<Vec<u64>> {
    let horizon = setup.sequence.horizon;
    match (&cfg.cost, setup.cost) {
        (Some(c), Some(cm)) => match kind {
            BaselineKind::UpFront => Ok(up_front_for_budget(&cm, c.budget, horizon)),
            BaselineKind::Periodic => periodic_for_budget(&cm, c.budget, horizon, cfg.delta_t()),
        },
        _ => baseline_schedule(kind, total, horizon, cfg.delta_t().min(horizon)),
    }
}

/// Per-step CSV columns, in order.
pub const STEP_COLUMNS: [&str; 11] = [
    "run", "n", "K_n", "rho_hat", "t_n", "eps_hat", "xi", "excess_exact", "test_loss", "auc", "cum_cost",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn step_values(s: &StepRecord) -> [Option<f64>; 9] {
    [
        Some(s.k as f64),
        s.rho_hat,
        s.slack,
        Some(s.eps_hat),
        Some(s.xi),
        s.excess_exact,
        Some(s.test_loss).filter(|v| v.is_finite()),
        s.auc,
        s.cum_cost,
    ]
}

/// Per-step CSV of one run. Floats use the shortest representation that
/// parses back to the same value.
pub fn run_csv(run_index: usize, rec: &RunRecord) -> String {
    let mut out = STEP_COLUMNS.join(",");
    out.push('\n');
    for s in &rec.steps {
        let _ = write!(out, "{},{},{}", run_index, s.n, s.k);
        for v in &step_values(s)[1..] {
            out.push(',');
            out.push_str(&cell(*v));
        }
        out.push('\n');
    }
    out
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.len() >= 2)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), sd)
}

/// Mean and sample standard deviation across runs for every step and
/// metric; missing entries are skipped.
pub fn aggregate_csv(arm: &Arm) -> String {
    let metrics = &STEP_COLUMNS[2..];
    let mut out = String::from("n");
    for m in metrics {
        let _ = write!(out, ",{m}_mean,{m}_sd");
    }
    out.push('\n');
    let horizon = arm.runs.iter().map(|r| r.steps.len()).max().unwrap_or(0);
    for i in 0..horizon {
        let _ = write!(out, "{}", i + 1);
        for j in 0..metrics.len() {
            let vals: Vec<f64> = arm
                .runs
                .iter()
                .filter_map(|r| r.steps.get(i))
                .filter_map(|s| step_values(s)[j])
                .collect();
            let (m, sd) = mean_sd(&vals);
            let _ = write!(out, ",{},{}", cell(m), cell(sd));
        }
        out.push('\n');
    }
    out
}

/// Headline numbers of one arm.
pub fn arm_summary(arm: &Arm, true_rho: Option<f64>, eps: f64) -> serde_json::Value {
    let per_run = |f: &dyn Fn(&RunRecord) -> Option<f64>| -> Vec<f64> { arm.runs.iter().filter_map(f).collect() };
    let mean_of = |xs: Vec<f64>| mean_sd(&xs);
    let avg = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let excess = mean_of(per_run(&|r| avg(r.steps.iter().filter_map(|s| s.excess_exact).collect())));
    let test = mean_of(per_run(&|r| avg(r.steps.iter().map(|s| s.test_loss).filter(|v| v.is_finite()).collect())));
    let auc_final = mean_of(per_run(&|r| r.steps.last().and_then(|s| s.auc)));
    let samples = mean_of(per_run(&|r| Some(r.total_samples() as f64)));
    let rho_final = mean_of(per_run(&|r| r.steps.last().and_then(|s| s.rho_hat)));
    let cost_max = arm
        .runs
        .iter()
        .filter_map(|r| r.steps.last().and_then(|s| s.cum_cost))
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))));
    let all_xi: Vec<f64> = arm.runs.iter().flat_map(|r| r.steps.iter().map(|s| s.xi)).collect();
    let coverage = true_rho.map(|rho| {
        let hits = arm
            .runs
            .iter()
            .filter(|r| {
                r.steps
                    .iter()
                    .filter(|s| s.n >= 5)
                    .all(|s| matches!((s.rho_hat, s.slack), (Some(h), Some(t)) if h + t >= rho))
            })
            .count();
        hits as f64 / arm.runs.len().max(1) as f64
    });
    json!({
        "policy": arm.name,
        "runs": arm.runs.len(),
        "eps_target": eps,
        "mean_excess_risk": excess.0,
        "sd_excess_risk": excess.1,
        "mean_test_loss": test.0,
        "sd_test_loss": test.1,
        "mean_final_auc": auc_final.0,
        "mean_total_samples": samples.0,
        "mean_final_rho_hat": rho_final.0,
        "max_total_cost": cost_max,
        "max_xi": all_xi.iter().copied().fold(None, |a: Option<f64>, x| Some(a.map_or(x, |b| b.max(x)))),
        "coverage_from_n5": coverage,
        "warnings": arm.runs.iter().map(|r| r.warnings.len()).sum::<usize>(),
    })
}

pub fn summary_json(res: &ExperimentResult) -> serde_json::Value {
    let cfg = &res.config;
    let rho = cfg.true_rho();
    let mut v = json!({
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "true_rho": rho,
        "arms": res.arms.iter().map(|a| arm_summary(a, rho, cfg.policy.eps_target)).collect::<Vec<_>>(),
    });
    if let Some(cv) = &res.cv {
        v["cv"] = json!({
            "sample_sharing": "shared draws across tracks",
            "chosen": cv.iter().map(|c| c.chosen.clone()).collect::<Vec<_>>(),
        });
    }
    v
}

/// Writes `<out>/<arm>/run_XXX.csv`, `<out>/<arm>/aggregate.csv` and
/// `<out>/summary.json`. An existing non-empty directory is an error unless
/// `force` is set.
pub fn write_results(res: &ExperimentResult, out: &Path, force: bool) -> Result<()> {
    if out.exists() {
        let non_empty = std::fs::read_dir(out)?.next().is_some();
        if non_empty && !force {
            return Err(Error::config(
                "--out",
                format!("{} exists and is not empty (use --force)", out.display()),
            ));
        }
    }
    std::fs::create_dir_all(out)?;
    for arm in &res.arms {
        let dir = out.join(&arm.name);
        std::fs::create_dir_all(&dir)?;
        for (i, run) in arm.runs.iter().enumerate() {
            std::fs::write(dir.join(format!("run_{:03}.csv", i + 1)), run_csv(i + 1, run))?;
        }
        std::fs::write(dir.join("aggregate.csv"), aggregate_csv(arm))?;
    }
    let text = serde_json::to_string_pretty(&summary_json(res)).expect("summary serializes");
    std::fs::write(out.join("summary.json"), text + "\n")?;
    Ok(())
}
