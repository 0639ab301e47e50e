//! JSON scenario files: a collector, a simulator, two party scripts and
//! the audit parameters.
//!
//! ```json
//! {
//!   "name": "board_basic",
//!   "witnesses": ["board state is simulatable from the environment view"],
//!   "collector": "board",
//!   "simulator": "board",
//!   "lambda": 16,
//!   "trials": 1000,
//!   "master_seed": 7,
//!   "requester": [{"op": "post", "key": "y1", "msg": "hello"}],
//!   "environment": [{"op": "post", "key": "z1", "msg": "hi"}, {"op": "fetch"}],
//!   "thresholds": {"weak": 0.0}
//! }
//! ```
//!
//! `trials`, `master_seed`, `lambda` and the threshold can be overridden
//! at run time with [`Overrides`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::audit::{
    self, battery, default_battery, AdvantageReport, AuditError, AuditKind, AuditOptions, Distinguisher,
    ExperimentReport,
};
use crate::collectors::CollectorSpec;
use crate::execution::{Action, Party, PartyScript, DEFAULT_MAX_SESSIONS};
use crate::simulators::{ParallelSimulator, SequentialSimulator, Simulator, SimulatorSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl From<ScenarioError> for AuditError {
    fn from(e: ScenarioError) -> Self {
        AuditError::Config(e.to_string())
    }
}

fn default_lambda() -> u32 {
    16
}

fn default_trials() -> u64 {
    1000
}

fn default_y_bias() -> f64 {
    0.5
}

fn default_max_sessions() -> usize {
    DEFAULT_MAX_SESSIONS
}

/// Requesters of growing size for the k-session experiment. Every `{i}`
/// in the template is replaced with the copy number, starting at 1.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Family {
    pub k_list: Vec<usize>,
    pub requester_template: PartyScript,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// What the scenario demonstrates; copied into reports.
    #[serde(default)]
    pub witnesses: Vec<String>,
    pub collector: String,
    #[serde(default)]
    pub simulator: Option<String>,
    #[serde(default = "default_lambda")]
    pub lambda: u32,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub master_seed: u64,
    /// Probability that the interleaver schedules Y next.
    #[serde(default = "default_y_bias")]
    pub y_bias: f64,
    #[serde(default = "default_max_sessions")]
    pub max_sessions: usize,
    #[serde(default)]
    pub requester: PartyScript,
    #[serde(default)]
    pub environment: PartyScript,
    #[serde(default)]
    pub distinguishers: Option<Vec<String>>,
    /// Pass thresholds keyed by audit kind (`weak`, `strong`, `privacy`).
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    #[serde(default)]
    pub family: Option<Family>,
}

/// Run-time overrides of scenario parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub lambda: Option<u32>,
    pub threshold: Option<f64>,
    pub jobs: Option<usize>,
}

fn substitute(template: &str, i: usize) -> String {
    template.replace("{i}", &i.to_string())
}

fn instantiate(action: &Action, i: usize) -> Action {
    match action {
        Action::Post { key, msg, via } => Action::Post { key: substitute(key, i), msg: substitute(msg, i), via: via.clone() },
        Action::Delete { token } => Action::Delete { token: substitute(token, i) },
        Action::Capture { name } => Action::Capture { name: substitute(name, i) },
        Action::SendToZ { payload } => Action::SendToZ { payload: substitute(payload, i) },
        other => other.clone(),
    }
}

impl Family {
    pub fn requester_for(&self, k: usize) -> PartyScript {
        let actions = (1..=k)
            .flat_map(|i| self.requester_template.actions.iter().map(move |a| instantiate(a, i)))
            .collect();
        PartyScript::new(actions)
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn collector_spec(&self) -> Result<CollectorSpec, ScenarioError> {
        CollectorSpec::parse(&self.collector).map_err(|e| ScenarioError::Invalid(e.to_string()))
    }

    pub fn simulator_spec(&self) -> Result<SimulatorSpec, ScenarioError> {
        match &self.simulator {
            Some(name) => SimulatorSpec::parse(name).map_err(|e| ScenarioError::Invalid(e.to_string())),
            None => SimulatorSpec::default_for(&self.collector_spec()?)
                .ok_or_else(|| ScenarioError::Invalid(format!("no default simulator for {}", self.collector))),
        }
    }

    pub fn build_simulator(&self) -> Result<Box<dyn Simulator>, ScenarioError> {
        self.simulator_spec()?
            .build(&self.collector_spec()?)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))
    }

    pub fn battery(&self) -> Result<Vec<Box<dyn Distinguisher>>, ScenarioError> {
        match &self.distinguishers {
            Some(names) => battery(names).map_err(|e| ScenarioError::Invalid(e.to_string())),
            None => Ok(default_battery()),
        }
    }

    /// Structural checks that do not depend on the audit kind.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));
        if self.name.trim().is_empty() {
            return invalid("name must not be empty".into());
        }
        if self.trials == 0 {
            return invalid("trials must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.y_bias) {
            return invalid(format!("y_bias must be in [0, 1], got {}", self.y_bias));
        }
        for (kind, t) in &self.thresholds {
            if !matches!(kind.as_str(), "weak" | "strong" | "privacy") {
                return invalid(format!("unknown threshold kind {kind:?}"));
            }
            if !(0.0..=1.0).contains(t) {
                return invalid(format!("threshold {kind} must be in [0, 1], got {t}"));
            }
        }
        let collector = self.collector_spec()?;
        self.simulator_spec()?.build(&collector).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.battery()?;
        let protocols = collector.protocol_names();
        let check = |script: &PartyScript, who| {
            script.validate(who, &protocols).map_err(|e| ScenarioError::Invalid(e.to_string()))
        };
        check(&self.requester, Party::Requester)?;
        check(&self.environment, Party::Environment)?;
        if let Some(family) = &self.family {
            if family.k_list.is_empty() || family.k_list.contains(&0) {
                return invalid("family k_list must hold positive sizes".into());
            }
            let largest = family.k_list.iter().copied().max().unwrap_or(1);
            check(&family.requester_for(largest), Party::Requester)?;
        }
        self.options(&Overrides::default(), None).config(0).validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Checks specific to an audit kind.
    pub fn validate_for(&self, kind: AuditKind) -> Result<(), ScenarioError> {
        if kind != AuditKind::Weak && self.requester.sends_to_environment() {
            return Err(ScenarioError::Invalid(
                "send_to_z is only allowed in weak audits".into(),
            ));
        }
        Ok(())
    }

    pub fn options(&self, overrides: &Overrides, kind: Option<AuditKind>) -> AuditOptions {
        let key = match kind {
            Some(AuditKind::Weak) => Some("weak"),
            Some(AuditKind::Strong) => Some("strong"),
            Some(AuditKind::Privacy) => Some("privacy"),
            None => None,
        };
        let threshold = overrides.threshold.or_else(|| key.and_then(|k| self.thresholds.get(k).copied()));
        let mut opts = AuditOptions::new(
            overrides.lambda.unwrap_or(self.lambda),
            overrides.trials.unwrap_or(self.trials),
            overrides.seed.unwrap_or(self.master_seed),
        )
        .with_y_bias(self.y_bias)
        .with_jobs(overrides.jobs.unwrap_or(0))
        .with_threshold(threshold);
        opts.max_sessions = self.max_sessions;
        opts
    }

    fn stamp(&self, mut report: AdvantageReport) -> AdvantageReport {
        report.scenario = self.name.clone();
        report.witnesses = self.witnesses.clone();
        report
    }

    pub fn run_audit(&self, kind: AuditKind, overrides: &Overrides) -> Result<AdvantageReport, AuditError> {
        self.validate_for(kind)?;
        let collector = self.collector_spec()?;
        let opts = self.options(overrides, Some(kind));
        let report = match kind {
            AuditKind::Weak => {
                let simulator = self.build_simulator()?;
                audit::estimate_weak_advantage(&collector, simulator.as_ref(), &self.requester, &self.environment, &opts)?
            }
            AuditKind::Strong => audit::estimate_strong_advantage(
                &collector,
                &self.requester,
                &self.environment,
                &self.battery()?,
                &opts,
            )?,
            AuditKind::Privacy => audit::estimate_privacy_advantage(
                &collector,
                &self.requester,
                &self.environment,
                &self.battery()?,
                &opts,
            )?,
        };
        Ok(self.stamp(report))
    }

    /// Runs one of the bound experiments: `thm3`, `thm5`, `thm6` or `thm7`.
    pub fn run_experiment(&self, name: &str, overrides: &Overrides) -> Result<ExperimentReport, AuditError> {
        let collector = self.collector_spec()?;
        let opts = self.options(overrides, None);
        let sim_spec = self.simulator_spec()?;
        let checks = match name {
            "thm3" => {
                self.validate_for(AuditKind::Strong)?;
                let simulator = sim_spec.build(&collector)?;
                vec![audit::verify_bound_thm3(
                    &collector,
                    simulator.as_ref(),
                    &self.requester,
                    &self.environment,
                    &self.battery()?,
                    &opts,
                )?]
            }
            "thm5" => {
                let family = self
                    .family
                    .as_ref()
                    .ok_or_else(|| AuditError::Config("this experiment needs a requester family".into()))?;
                let simulator = sim_spec.build(&collector)?;
                audit::verify_bound_thm5(
                    &collector,
                    simulator.as_ref(),
                    &family.k_list,
                    &|k| family.requester_for(k),
                    &self.environment,
                    &opts,
                )?
            }
            "thm6" => {
                let (SimulatorSpec::Parallel(a, b), CollectorSpec::Parallel(c1, c2)) = (&sim_spec, &collector) else {
                    return Err(AuditError::Config("this experiment needs parallel collector and simulator".into()));
                };
                let simulator = ParallelSimulator::new(a.build(c1)?, b.build(c2)?);
                vec![audit::verify_bound_thm6(&collector, &simulator, &self.requester, &self.environment, &opts)?]
            }
            "thm7" => {
                let (SimulatorSpec::Sequential(a, b), CollectorSpec::Sequential(c1, c2)) = (&sim_spec, &collector)
                else {
                    return Err(AuditError::Config(
                        "this experiment needs sequential collector and simulator".into(),
                    ));
                };
                let simulator = SequentialSimulator::verbatim(a.build(c1)?, b.build(c2)?);
                vec![audit::verify_bound_thm7(&collector, &simulator, &self.requester, &self.environment, &opts)?]
            }
            other => return Err(AuditError::Config(format!("unknown experiment {other:?}"))),
        };
        let mut report = ExperimentReport::new(name, &collector, &opts, checks);
        report.scenario = self.name.clone();
        report.witnesses = self.witnesses.clone();
        Ok(report)
    }
}
