//! Experiment configuration (TOML) and built-in presets.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bound::BoundModel;
use crate::cv::CvConfig;
use crate::domain::{ConvexityConstants, ProblemSequence, SampleSource};
use crate::drift::DriftConfig;
use crate::error::{Error, Result};
use crate::losses::{Loss, QuadraticRegressionLoss, SmoothedHingeLoss};
use crate::planner::{CostModel, CostPlannedPolicy, PhiKind, SolverConfig};
use crate::policy::{
    baseline_schedule, FixedSchedulePolicy, KnownRhoPolicy, NoUpdatePolicy, PolicyConfig, PolicyKind,
    SamplePolicy, UpdatePastPolicy,
};
use crate::run::RunSetup;
use crate::scenarios::{ClassificationDrift, CsvStream, RegressionDrift};
use crate::sgd::SgdConfig;

/// Prefix of the data sets compiled into the binary.
pub const BUILTIN_PREFIX: &str = "builtin:";

const DRIFT_PANEL: &str = include_str!("../data/drift_panel.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScenarioConfig {
    Regression(RegressionScenario),
    Classification(ClassificationScenario),
    Csv(CsvScenario),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionScenario {
    #[serde(default = "defaults::reg_d")]
    pub d: usize,
    #[serde(default = "defaults::one")]
    pub sigma_x2: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "defaults::r_norm")]
    pub r_norm: f64,
    pub rho: f64,
    #[serde(default = "defaults::one")]
    pub noise_var: f64,
    #[serde(default = "defaults::radius")]
    pub domain_radius: f64,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationScenario {
    #[serde(default = "defaults::cls_d")]
    pub d: usize,
    #[serde(default = "defaults::half")]
    pub sigma2: f64,
    #[serde(default = "defaults::tenth")]
    pub lambda: f64,
    /// Target minimizer drift; the angular step is derived from it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Angular step in radians; overrides `rho`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default = "defaults::cls_radius")]
    pub domain_radius: f64,
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Quadratic,
    SmoothedHinge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvScenario {
    /// File path, relative paths resolved against the config file; or
    /// `builtin:drift-panel`.
    pub path: String,
    pub loss: LossKind,
    #[serde(default)]
    pub lambda: f64,
    /// Feature variance used for the quadratic loss modulus.
    #[serde(default = "defaults::one")]
    pub sigma_x2: f64,
    #[serde(default)]
    pub holdout: f64,
    pub domain_radius: f64,
    /// Defaults to the number of steps in the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSection {
    pub c_alpha: f64,
    pub c_beta: f64,
    #[serde(default = "defaults::k_cap")]
    pub k_cap: u64,
    /// Strong-convexity modulus; defaults to the loss modulus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    /// Gradient Lipschitz constant; defaults to a scenario-specific value.
    #[serde(default, rename = "M", skip_serializing_if = "Option::is_none")]
    pub big_m: Option<f64>,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub g: f64,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub m_noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdSection {
    /// Defaults to `1 / m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default = "defaults::one")]
    pub k0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub p0: f64,
    pub p1: f64,
    #[serde(default = "defaults::half")]
    pub k0: f64,
    pub budget: f64,
    #[serde(default = "defaults::phi")]
    pub phi: PhiKind,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::runs")]
    pub runs: usize,
    #[serde(default = "defaults::test_size")]
    pub test_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_init: Option<Vec<f64>>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            runs: defaults::runs(),
            test_size: defaults::test_size(),
            w_init: None,
        }
    }
}

mod defaults {
    use crate::planner::PhiKind;

    pub fn one() -> f64 {
        1.0
    }
    pub fn half() -> f64 {
        0.5
    }
    pub fn tenth() -> f64 {
        0.1
    }
    pub fn reg_d() -> usize {
        3
    }
    pub fn cls_d() -> usize {
        2
    }
    pub fn r_norm() -> f64 {
        2.0
    }
    pub fn radius() -> f64 {
        5.0
    }
    pub fn cls_radius() -> f64 {
        3.0
    }
    pub fn k_cap() -> u64 {
        crate::bound::DEFAULT_K_CAP
    }
    pub fn phi() -> PhiKind {
        PhiKind::MaxIncreasingRun
    }
    pub fn runs() -> usize {
        20
    }
    pub fn test_size() -> usize {
        500
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub bound: BoundSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sgd: Option<SgdSection>,
    pub policy: PolicyConfig,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvConfig>,
    #[serde(default)]
    pub run: RunSection,
    /// Directory that relative data paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// Built-in presets: name and one-line description.
pub const PRESETS: &[(&str, &str)] = &[
    ("synth-regression", "drifting Gaussian regression, rho = 1, eps = 0.1, T = 25, no-update policy"),
    ("synth-regression-cost", "same regression with a sampling budget and the receding-horizon planner"),
    ("synth-classification", "rotating two-class Gaussians, smoothed hinge, adaptive vs. all up front"),
    ("csv-stream", "bundled drifting regression panel read as a CSV stream, 20% held out"),
];

pub fn preset_toml(name: &str) -> Option<&'static str> {
    Some(match name {
        "synth-regression" => include_str!("../presets/synth-regression.toml"),
        "synth-regression-cost" => include_str!("../presets/synth-regression-cost.toml"),
        "synth-classification" => include_str!("../presets/synth-classification.toml"),
        "csv-stream" => include_str!("../presets/csv-stream.toml"),
        _ => return None,
    })
}

/// Dotted path of a failing field. A missing field is reported at its
/// parent (`.` at the root), so its name is taken from the message.
fn field_path(prefix: Option<&str>, path: &str, msg: &str) -> String {
    let missing = msg
        .strip_prefix("missing field `")
        .and_then(|r| r.split('`').next());
    prefix
        .into_iter()
        .chain((path != ".").then_some(path))
        .chain(missing)
        .collect::<Vec<_>>()
        .join(".")
}

/// The tagged scenario enum buffers its content, which hides the failing
/// field; re-parse the selected variant alone to recover it.
fn scenario_error(text: &str) -> Option<Error> {
    fn probe<T: serde::de::DeserializeOwned>(table: toml::Table) -> Option<Error> {
        serde_path_to_error::deserialize::<_, T>(toml::Value::Table(table))
            .err()
            .map(|e| {
                let path = e.path().to_string();
                let msg = e.into_inner().to_string();
                Error::config(field_path(Some("scenario"), &path, &msg), msg)
            })
    }
    let mut root: toml::Table = text.parse().ok()?;
    let mut table = match root.remove("scenario")? {
        toml::Value::Table(t) => t,
        _ => return None,
    };
    let kind = table.remove("kind")?;
    match kind.as_str()? {
        "regression" => probe::<RegressionScenario>(table),
        "classification" => probe::<ClassificationScenario>(table),
        "csv" => probe::<CsvScenario>(table),
        _ => None,
    }
}

/// Source, loss, domain radius, horizon and default gradient modulus.
type ScenarioParts = (Arc<dyn SampleSource>, Loss, f64, usize, f64);

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<toml>", e.to_string()))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let msg = e.into_inner().message().to_string();
            let err = Error::config(field_path(None, &path, &msg), msg);
            if path == "scenario" {
                scenario_error(text).unwrap_or(err)
            } else {
                err
            }
        })?;
        cfg.validated()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_toml(name).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
            Error::config("--preset", format!("unknown preset `{name}`; expected one of {}", names.join(", ")))
        })?;
        Self::from_toml_str(text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validated(self) -> Result<Self> {
        let wrap = |e: Error, section: &str| match e {
            Error::InvalidParameter { name, reason } => {
                let path = if name.contains('.') { name.to_string() } else { format!("{section}.{name}") };
                Error::config(path, reason)
            }
            other => other,
        };
        let policy = self.policy.clone().validated()?;
        let drift = self.drift.validated().map_err(|e| wrap(e, "drift"))?;
        if let Some(cv) = &self.cv {
            cv.clone().validated()?;
        }
        if self.run.runs == 0 {
            return Err(Error::config("run.runs", "must be >= 1"));
        }
        if self.run.test_size == 0 {
            return Err(Error::config("run.test_size", "must be >= 1"));
        }
        if let Some(c) = &self.cost {
            CostModel::new(c.p0, c.p1, c.k0).map_err(|e| wrap(e, "cost"))?;
            if !(c.budget >= 0.0) || !c.budget.is_finite() {
                return Err(Error::config("cost.budget", "must be finite and >= 0"));
            }
            if c.solver.iterations == 0 || !(c.solver.temperature > 0.0) || !(c.solver.fd_step > 0.0) {
                return Err(Error::config("cost.solver", "iterations, temperature and fd_step must be positive"));
            }
        }
        if policy.kind == PolicyKind::CostPlanned && self.cost.is_none() {
            return Err(Error::config("cost", "section required for policy kind cost-planned"));
        }
        Ok(Self { policy, drift, ..self })
    }

    pub fn horizon(&self) -> Option<usize> {
        match &self.scenario {
            ScenarioConfig::Regression(r) => Some(r.horizon),
            ScenarioConfig::Classification(c) => Some(c.horizon),
            ScenarioConfig::Csv(c) => c.horizon,
        }
    }

    /// True per-step drift of the synthetic scenarios.
    pub fn true_rho(&self) -> Option<f64> {
        match &self.scenario {
            ScenarioConfig::Regression(r) => Some(r.rho),
            ScenarioConfig::Classification(c) => {
                ClassificationDrift::with_theta(c.d, c.sigma2, c.lambda, 0.0).ok().map(|base| {
                    let a = base.minimizer_norm();
                    match (c.theta, c.rho) {
                        (Some(t), _) => 2.0 * a * (t / 2.0).sin().abs(),
                        (None, Some(r)) => r,
                        (None, None) => 0.0,
                    }
                })
            }
            ScenarioConfig::Csv(_) => None,
        }
    }

    fn scenario_parts(&self) -> Result<ScenarioParts> {
        let e = |e: Error| match e {
            Error::InvalidParameter { name, reason } => {
                let path = if name.starts_with("scenario.") { name.to_string() } else { format!("scenario.{name}") };
                Error::config(path, reason)
            }
            Error::InvalidCovariance(r) => Error::config("scenario", r),
            other => other,
        };
        Ok(match &self.scenario {
            ScenarioConfig::Regression(r) => {
                let src = RegressionDrift::new(r.d, r.sigma_x2, r.lambda, r.r_norm, r.rho, r.noise_var).map_err(e)?;
                let loss = Loss::Quadratic(QuadraticRegressionLoss::new(r.lambda, r.sigma_x2, r.d).map_err(e)?);
                let w_norm = r.r_norm / (r.sigma_x2 + r.lambda);
                if w_norm > r.domain_radius {
                    return Err(Error::config(
                        "scenario.domain_radius",
                        format!("minimizers have norm {w_norm}, outside the domain"),
                    ));
                }
                let big_m = r.sigma_x2 + r.lambda;
                (Arc::new(src), loss, r.domain_radius, r.horizon, big_m)
            }
            ScenarioConfig::Classification(c) => {
                let src = match (c.theta, c.rho) {
                    (Some(t), _) => ClassificationDrift::with_theta(c.d, c.sigma2, c.lambda, t),
                    (None, Some(r)) => ClassificationDrift::with_rho(c.d, c.sigma2, c.lambda, r),
                    (None, None) => Err(Error::param("scenario.rho", "set either rho or theta")),
                }
                .map_err(e)?;
                if src.minimizer_norm() > c.domain_radius {
                    return Err(Error::config("scenario.domain_radius", "minimizers lie outside the domain"));
                }
                let loss = Loss::SmoothedHinge(SmoothedHingeLoss::new(c.lambda, c.d).map_err(e)?);
                // E||x||^2 + lambda bounds the Hessian of the smoothed hinge risk.
                let big_m = 1.0 + c.d as f64 * c.sigma2 + c.lambda;
                (Arc::new(src), loss, c.domain_radius, c.horizon, big_m)
            }
            ScenarioConfig::Csv(c) => {
                let stream = if let Some(name) = c.path.strip_prefix(BUILTIN_PREFIX) {
                    match name {
                        "drift-panel" => CsvStream::from_reader(DRIFT_PANEL.as_bytes(), c.holdout),
                        _ => Err(Error::param("scenario.path", format!("unknown builtin data set `{name}`"))),
                    }
                } else {
                    let p = Path::new(&c.path);
                    let p = match &self.base_dir {
                        Some(dir) if p.is_relative() => dir.join(p),
                        _ => p.to_path_buf(),
                    };
                    CsvStream::from_path(p, c.holdout)
                }
                .map_err(|err| match err {
                    Error::Csv(r) => Error::config("scenario.path", r),
                    other => e(other),
                })?;
                let d = stream.dim();
                let horizon = c.horizon.unwrap_or(stream.horizon());
                if horizon > stream.horizon() {
                    return Err(Error::config(
                        "scenario.horizon",
                        format!("file has only {} steps", stream.horizon()),
                    ));
                }
                let loss = match c.loss {
                    LossKind::Quadratic => Loss::Quadratic(QuadraticRegressionLoss::new(c.lambda, c.sigma_x2, d).map_err(e)?),
                    LossKind::SmoothedHinge => Loss::SmoothedHinge(SmoothedHingeLoss::new(c.lambda, d).map_err(e)?),
                };
                let big_m = match c.loss {
                    LossKind::Quadratic => c.sigma_x2 + c.lambda,
                    LossKind::SmoothedHinge => 1.0 + c.lambda,
                };
                (Arc::new(stream), loss, c.domain_radius, horizon, big_m)
            }
        })
    }

    /// Resolves the config into a runnable setup.
    pub fn build_setup(&self) -> Result<RunSetup> {
        let (source, loss, radius, horizon, default_big_m) = self.scenario_parts()?;
        let sequence = ProblemSequence::new(source, radius, horizon).map_err(|e| match e {
            Error::InvalidParameter { name, reason } => Error::config(format!("scenario.{name}"), reason),
            other => other,
        })?;
        let loss_m = match &loss {
            Loss::Quadratic(q) => q.modulus(),
            Loss::SmoothedHinge(h) => h.lambda,
        };
        let b = &self.bound;
        let m = b.m.unwrap_or(loss_m);
        let big_m = b.big_m.unwrap_or(default_big_m.max(m));
        let constants = ConvexityConstants {
            m,
            big_m,
            g: b.g,
            a: b.a,
            b: b.b,
            sigma: b.sigma,
            m_noise: b.m_noise,
        };
        let bound = BoundModel::new(b.c_alpha, b.c_beta, constants, b.k_cap).map_err(|e| match e {
            Error::InvalidParameter { name, reason } => {
                let name = name.strip_prefix("bound.").unwrap_or(name);
                let name = name.strip_prefix("constants.").unwrap_or(name);
                Error::config(format!("bound.{name}"), reason)
            }
            other => other,
        })?;
        let sgd = match self.sgd {
            Some(s) => SgdConfig::new(s.c.unwrap_or(1.0 / m), s.k0),
            None => SgdConfig::for_modulus(m),
        }
        .map_err(|e| match e {
            Error::InvalidParameter { reason, .. } => Error::config("sgd", reason),
            other => other,
        })?;
        if let Some(w0) = &self.run.w_init {
            if w0.len() != sequence.dim() {
                return Err(Error::config("run.w_init", format!("expected {} entries", sequence.dim())));
            }
        }
        Ok(RunSetup {
            sequence,
            loss,
            bound,
            sgd,
            drift: self.drift,
            eps_target: self.policy.eps_target,
            test_size: self.run.test_size,
            cost: self.cost_model(),
            rho_known: self.policy.rho_known,
            w_init: self.run.w_init.clone(),
        })
    }

    pub fn cost_model(&self) -> Option<CostModel> {
        self.cost.as_ref().and_then(|c| CostModel::new(c.p0, c.p1, c.k0).ok())
    }

    pub fn delta_t(&self) -> usize {
        self.policy.delta_t.unwrap_or(5)
    }

    /// Primary policy for one run.
    pub fn build_policy(&self, horizon: usize) -> Result<Box<dyn SamplePolicy>> {
        let p = &self.policy;
        Ok(match p.kind {
            PolicyKind::KnownRho => Box::new(KnownRhoPolicy {
                rho: p.rho_known.unwrap_or(0.0),
            }),
            PolicyKind::NoUpdate => Box::new(NoUpdatePolicy),
            PolicyKind::UpdatePast => Box::new(UpdatePastPolicy::default()),
            PolicyKind::Fixed => Box::new(FixedSchedulePolicy::new(
                "fixed",
                p.schedule.clone().unwrap_or_default(),
            )),
            PolicyKind::UpFront | PolicyKind::Periodic => {
                let kind = if p.kind == PolicyKind::UpFront {
                    crate::policy::BaselineKind::UpFront
                } else {
                    crate::policy::BaselineKind::Periodic
                };
                let schedule = match (&self.cost, p.schedule.as_ref().and_then(|s| s.first())) {
                    (_, Some(&total)) => baseline_schedule(kind, total, horizon, self.delta_t())?,
                    (Some(c), None) => {
                        let cm = self.cost_model().expect("validated");
                        match kind {
                            crate::policy::BaselineKind::UpFront => {
                                crate::planner::up_front_for_budget(&cm, c.budget, horizon)
                            }
                            crate::policy::BaselineKind::Periodic => {
                                crate::planner::periodic_for_budget(&cm, c.budget, horizon, self.delta_t())?
                            }
                        }
                    }
                    (None, None) => {
                        return Err(Error::config(
                            "policy.schedule",
                            "up-front / periodic need a total in schedule[0] or a [cost] section",
                        ))
                    }
                };
                let label = if kind == crate::policy::BaselineKind::UpFront { "up-front" } else { "periodic" };
                Box::new(FixedSchedulePolicy::new(label, schedule))
            }
            PolicyKind::CostPlanned => {
                let c = self.cost.as_ref().expect("validated");
                Box::new(CostPlannedPolicy::new(
                    self.cost_model().expect("validated"),
                    c.budget,
                    c.phi,
                    c.solver,
                ))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_fields_name_their_path() {
        let no_bound = "[scenario]\nkind = \"regression\"\nrho = 0.5\ndomain_radius = 5.0\nhorizon = 5\n\
                        [policy]\nkind = \"no-update\"\neps_target = 0.1\n";
        let no_horizon = no_bound.replace("horizon = 5\n", "") + "[bound]\nc_alpha = 1.0\nc_beta = 1.0\n";
        for (text, want) in [(no_bound.to_string(), "bound"), (no_horizon, "scenario.horizon")] {
            match ExperimentConfig::from_toml_str(&text) {
                Err(Error::Config { path, .. }) => assert_eq!(path, want),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn all_presets_parse_and_build() {
        for (name, _) in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            let setup = cfg.build_setup().unwrap();
            cfg.build_policy(setup.sequence.horizon).unwrap();
            // round trip through the serialized form
            let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
            assert_eq!(cfg, again, "{name}");
        }
        assert!(ExperimentConfig::preset("nope").unwrap_err().is_config());
    }

    #[test]
    fn errors_carry_field_paths() {
        let text = preset_toml("synth-regression").unwrap().replace("rho = 1.0", "rho = \"x\"");
        match ExperimentConfig::from_toml_str(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "scenario.rho"),
            other => panic!("{other:?}"),
        }
        let text = preset_toml("synth-regression").unwrap().replace("c_beta = 3.0", "c_beta = -3.0");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        match cfg.build_setup() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "bound.c_beta"),
            other => panic!("{other:?}"),
        }
        let text = format!("{}\n[extra]\nx = 1\n", preset_toml("synth-regression").unwrap());
        assert!(ExperimentConfig::from_toml_str(&text).unwrap_err().is_config());
    }
}
