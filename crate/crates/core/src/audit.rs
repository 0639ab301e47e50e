//! Estimators for the three compliance notions and the experiments that
//! check the composition bounds against measured errors.
//!
//! Every estimator runs `trials` independent executions, each keyed by its
//! trial index, so a report depends only on the master seed and never on
//! how many worker threads evaluated it.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::collectors::CollectorSpec;
use crate::execution::{
    run_execution, run_ideal_execution, CollectorState, ExecError, ExecutionConfig, ExecutionResult, Initiator,
    Party, PartyScript, Protocol, SessionRecord, View, DEFAULT_MAX_SESSIONS,
};
use crate::registry::RegistryError;
use crate::seed::Role;
use crate::simulators::{ParallelSimulator, SequentialSimulator, SimError, Simulator};
use crate::wire;

pub const DEFAULT_CONFIDENCE: f64 = 0.95;

/// Two-sided Hoeffding deviation for `trials` Bernoulli samples at the
/// given confidence, clamped to 1.
pub fn hoeffding_bound(trials: u64, confidence: f64) -> f64 {
    if trials == 0 {
        return 1.0;
    }
    let slack = ((2.0 / (1.0 - confidence)).ln() / (2.0 * trials as f64)).sqrt();
    slack.min(1.0)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("invalid audit: {0}")]
    Config(String),
}

/// A test that looks at a collector state (absent in privacy audits) and
/// the environment's view, and outputs one bit.
pub trait Distinguisher: Send + Sync {
    fn name(&self) -> String;
    fn evaluate(&self, state: Option<&CollectorState>, view: &View) -> bool;
}

fn low_bit(bytes: &[u8]) -> bool {
    Sha256::digest(bytes)[0] & 1 == 1
}

fn pi_records(view: &View) -> impl Iterator<Item = &SessionRecord> {
    view.records.iter().filter(|r| matches!(r.protocol, Protocol::Pi(_)))
}

/// Low bit of the last field of the latest interaction response.
struct ResponseParity;

impl Distinguisher for ResponseParity {
    fn name(&self) -> String {
        "response_parity".into()
    }

    fn evaluate(&self, _state: Option<&CollectorState>, view: &View) -> bool {
        pi_records(view)
            .last()
            .and_then(|r| wire::decode(&r.response).ok())
            .and_then(|fields| fields.last().and_then(|f| f.last().copied()))
            .is_some_and(|b| b & 1 == 1)
    }
}

/// Hash bit over all interaction responses in order.
struct ResponseHash;

impl Distinguisher for ResponseHash {
    fn name(&self) -> String {
        "response_hash".into()
    }

    fn evaluate(&self, _state: Option<&CollectorState>, view: &View) -> bool {
        low_bit(&wire::encode(pi_records(view).map(|r| &r.response)))
    }
}

struct StateHash;

impl Distinguisher for StateHash {
    fn name(&self) -> String {
        "state_hash".into()
    }

    fn evaluate(&self, state: Option<&CollectorState>, _view: &View) -> bool {
        state.is_some_and(|s| low_bit(&s.0))
    }
}

struct StateSize(usize);

impl Distinguisher for StateSize {
    fn name(&self) -> String {
        format!("state_size:{}", self.0)
    }

    fn evaluate(&self, state: Option<&CollectorState>, _view: &View) -> bool {
        state.is_some_and(|s| s.0.len() > self.0)
    }
}

struct ViewLength(usize);

impl Distinguisher for ViewLength {
    fn name(&self) -> String {
        format!("view_length:{}", self.0)
    }

    fn evaluate(&self, _state: Option<&CollectorState>, view: &View) -> bool {
        view.len() > self.0
    }
}

/// Whether any response in the view contains a marker byte string.
struct Contains(Vec<u8>);

impl Distinguisher for Contains {
    fn name(&self) -> String {
        format!("contains:{}", String::from_utf8_lossy(&self.0))
    }

    fn evaluate(&self, _state: Option<&CollectorState>, view: &View) -> bool {
        !self.0.is_empty()
            && view.records.iter().any(|r| r.response.windows(self.0.len()).any(|w| w == self.0.as_slice()))
    }
}

pub const DEFAULT_BATTERY: [&str; 5] = ["response_parity", "response_hash", "view_length", "state_size", "state_hash"];

/// Builds a distinguisher from `name` or `name:argument`.
pub fn distinguisher_by_name(spec: &str) -> Result<Box<dyn Distinguisher>, RegistryError> {
    let unknown = || RegistryError::Unknown { kind: "distinguisher", name: spec.to_string() };
    let (name, arg) = match spec.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (spec, None),
    };
    let count = |arg: Option<&str>| -> Result<usize, RegistryError> {
        arg.map_or(Ok(0), |a| a.parse().map_err(|_| unknown()))
    };
    Ok(match (name, arg) {
        ("response_parity", None) => Box::new(ResponseParity),
        ("response_hash", None) => Box::new(ResponseHash),
        ("state_hash", None) => Box::new(StateHash),
        ("state_size", arg) => Box::new(StateSize(count(arg)?)),
        ("view_length", arg) => Box::new(ViewLength(count(arg)?)),
        ("contains", Some(marker)) if !marker.is_empty() => Box::new(Contains(marker.as_bytes().to_vec())),
        _ => return Err(unknown()),
    })
}

pub fn battery(names: &[String]) -> Result<Vec<Box<dyn Distinguisher>>, RegistryError> {
    names.iter().map(|n| distinguisher_by_name(n)).collect()
}

pub fn default_battery() -> Vec<Box<dyn Distinguisher>> {
    DEFAULT_BATTERY.iter().map(|n| distinguisher_by_name(n).expect("built-in name")).collect()
}

/// Shared knobs of every estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditOptions {
    pub lambda: u32,
    pub trials: u64,
    pub master_seed: u64,
    pub y_bias: f64,
    pub max_sessions: usize,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    /// Pass threshold on the point estimate. Defaults to the Hoeffding
    /// slack for the trial count.
    pub threshold: Option<f64>,
}

impl AuditOptions {
    pub fn new(lambda: u32, trials: u64, master_seed: u64) -> Self {
        Self {
            lambda,
            trials,
            master_seed,
            y_bias: 0.5,
            max_sessions: DEFAULT_MAX_SESSIONS,
            jobs: 0,
            threshold: None,
        }
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs;
        self
    }

    pub fn with_y_bias(mut self, y_bias: f64) -> Self {
        self.y_bias = y_bias;
        self
    }

    pub fn with_threshold(mut self, threshold: Option<f64>) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn config(&self, trial: u64) -> ExecutionConfig {
        ExecutionConfig::new(self.lambda, self.master_seed)
            .with_trial(trial)
            .with_y_bias(self.y_bias)
            .with_max_sessions(self.max_sessions)
    }

    pub fn slack(&self) -> f64 {
        hoeffding_bound(self.trials, DEFAULT_CONFIDENCE)
    }

    fn effective_threshold(&self) -> f64 {
        self.threshold.unwrap_or_else(|| self.slack())
    }

    fn validate(&self) -> Result<(), AuditError> {
        if self.trials == 0 {
            return Err(AuditError::Config("trials must be at least 1".into()));
        }
        if let Some(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(AuditError::Config(format!("threshold must be in [0, 1], got {t}")));
            }
        }
        self.config(0).validate()?;
        Ok(())
    }
}

/// Evaluates `f` on every trial index. Results come back in trial order
/// whatever the degree of parallelism.
fn run_trials<T, F>(opts: &AuditOptions, f: F) -> Result<Vec<T>, AuditError>
where
    T: Send,
    F: Fn(u64) -> Result<T, AuditError> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| AuditError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..opts.trials).into_par_iter().map(&f).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    Weak,
    Strong,
    Privacy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistinguisherStats {
    pub real_ones: u64,
    pub ideal_ones: u64,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdvantageReport {
    pub audit: AuditKind,
    pub scenario: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<String>,
    pub collector: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulator: Option<String>,
    pub lambda: u32,
    pub master_seed: u64,
    pub trials: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mismatches: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulator_errors: Option<BTreeMap<String, u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_distinguisher: Option<BTreeMap<String, DistinguisherStats>>,
    pub point_estimate: f64,
    pub confidence_bound_95: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    pub flavor: &'static str,
    pub summary: String,
}

impl AdvantageReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    fn finish(
        audit: AuditKind,
        collector: &CollectorSpec,
        opts: &AuditOptions,
        point_estimate: f64,
        summary: impl FnOnce(bool) -> String,
    ) -> Self {
        let threshold = opts.effective_threshold();
        let pass = point_estimate <= threshold;
        AdvantageReport {
            audit,
            scenario: String::new(),
            witnesses: Vec::new(),
            collector: collector.to_string(),
            simulator: None,
            lambda: opts.lambda,
            master_seed: opts.master_seed,
            trials: opts.trials,
            mismatches: None,
            simulator_errors: None,
            per_distinguisher: None,
            point_estimate,
            confidence_bound_95: (point_estimate + opts.slack()).min(1.0),
            threshold,
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            flavor: "statistical",
            summary: summary(pass),
        }
    }
}

#[derive(Debug, Default)]
struct WeakTally {
    mismatches: u64,
    errors: BTreeMap<String, u64>,
}

impl WeakTally {
    fn record(&mut self, outcome: Result<bool, SimError>) {
        match outcome {
            Ok(true) => {}
            Ok(false) => self.mismatches += 1,
            Err(e) => {
                self.mismatches += 1;
                *self.errors.entry(e.kind().to_string()).or_default() += 1;
            }
        }
    }

    fn rate(&self, trials: u64) -> f64 {
        self.mismatches as f64 / trials as f64
    }
}

fn fresh_seed(cfg: &ExecutionConfig) -> u64 {
    cfg.role_seed(Role::Simulator)
}

/// Coupled weak audit: on each trial the simulator sees the environment's
/// view of one execution, and its output is compared bytewise with the
/// real final state of that same execution. The mismatch rate bounds the
/// advantage of every distinguisher on this coupling.
pub fn estimate_weak_advantage(
    collector: &CollectorSpec,
    simulator: &dyn Simulator,
    requester: &PartyScript,
    environment: &PartyScript,
    opts: &AuditOptions,
) -> Result<AdvantageReport, AuditError> {
    opts.validate()?;
    let outcomes = run_trials(opts, |trial| {
        let cfg = opts.config(trial);
        let result = run_execution(collector, requester, environment, &cfg)?;
        Ok(simulator
            .simulate(&result.view_z_x, cfg.lambda, fresh_seed(&cfg))
            .map(|sim| sim == result.state_x))
    })?;
    let mut tally = WeakTally::default();
    for outcome in outcomes {
        tally.record(outcome);
    }
    let rate = tally.rate(opts.trials);
    let mut report = AdvantageReport::finish(AuditKind::Weak, collector, opts, rate, |pass| {
        if pass {
            "simulated state matched the real state up to the threshold".into()
        } else {
            "simulated state differs from the real state too often".into()
        }
    });
    report.simulator = Some(simulator.name());
    report.mismatches = Some(tally.mismatches);
    report.simulator_errors = Some(tally.errors);
    Ok(report)
}

fn require_no_messages(requester: &PartyScript, audit: &str) -> Result<(), AuditError> {
    if requester.sends_to_environment() {
        return Err(AuditError::Config(format!(
            "{audit} audits do not allow the requester to message the environment"
        )));
    }
    Ok(())
}

fn real_vs_ideal(
    kind: AuditKind,
    collector: &CollectorSpec,
    requester: &PartyScript,
    environment: &PartyScript,
    distinguishers: &[Box<dyn Distinguisher>],
    opts: &AuditOptions,
) -> Result<AdvantageReport, AuditError> {
    opts.validate()?;
    if distinguishers.is_empty() {
        return Err(AuditError::Config("distinguisher battery is empty".into()));
    }
    let with_state = kind == AuditKind::Strong;
    let bits = run_trials(opts, |trial| {
        // both worlds share every seed, so their only difference is Y
        let cfg = opts.config(trial);
        let real = run_execution(collector, requester, environment, &cfg)?;
        let ideal = run_ideal_execution(collector, environment, &cfg)?;
        let eval = |r: &ExecutionResult, d: &dyn Distinguisher| {
            d.evaluate(with_state.then_some(&r.state_x), &r.view_z_x)
        };
        Ok(distinguishers.iter().map(|d| (eval(&real, d.as_ref()), eval(&ideal, d.as_ref()))).collect::<Vec<_>>())
    })?;
    let mut per = BTreeMap::new();
    let mut best = 0.0f64;
    let mut best_name = String::new();
    for (i, d) in distinguishers.iter().enumerate() {
        let real_ones = bits.iter().filter(|b| b[i].0).count() as u64;
        let ideal_ones = bits.iter().filter(|b| b[i].1).count() as u64;
        let advantage = real_ones.abs_diff(ideal_ones) as f64 / opts.trials as f64;
        if advantage > best {
            best = advantage;
            best_name = d.name();
        }
        per.insert(d.name(), DistinguisherStats { real_ones, ideal_ones, advantage });
    }
    let mut report = AdvantageReport::finish(kind, collector, opts, best, |pass| {
        if pass {
            "no distinguisher in the battery exceeded the threshold".into()
        } else {
            format!("{best_name} separates real from ideal; the estimate lower-bounds the best advantage")
        }
    });
    report.per_distinguisher = Some(per);
    Ok(report)
}

/// Real against ideal on the pair (final state, environment view).
pub fn estimate_strong_advantage(
    collector: &CollectorSpec,
    requester: &PartyScript,
    environment: &PartyScript,
    distinguishers: &[Box<dyn Distinguisher>],
    opts: &AuditOptions,
) -> Result<AdvantageReport, AuditError> {
    require_no_messages(requester, "strong")?;
    real_vs_ideal(AuditKind::Strong, collector, requester, environment, distinguishers, opts)
}

/// Real against ideal on the environment view alone.
pub fn estimate_privacy_advantage(
    collector: &CollectorSpec,
    requester: &PartyScript,
    environment: &PartyScript,
    distinguishers: &[Box<dyn Distinguisher>],
    opts: &AuditOptions,
) -> Result<AdvantageReport, AuditError> {
    require_no_messages(requester, "privacy")?;
    real_vs_ideal(AuditKind::Privacy, collector, requester, environment, distinguishers, opts)
}

/// A measured error against a predicted bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub label: String,
    pub measured: f64,
    pub bound: f64,
    pub slack: f64,
    pub holds: bool,
    pub components: BTreeMap<String, f64>,
}

impl BoundCheck {
    pub fn new(label: impl Into<String>, measured: f64, bound: f64, slack: f64) -> Self {
        Self {
            label: label.into(),
            measured,
            bound,
            slack,
            holds: measured <= bound + slack,
            components: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.components.insert(name.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub scenario: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<String>,
    pub collector: String,
    pub lambda: u32,
    pub master_seed: u64,
    pub trials: u64,
    pub checks: Vec<BoundCheck>,
    pub all_hold: bool,
}

impl ExperimentReport {
    pub fn new(experiment: &str, collector: &CollectorSpec, opts: &AuditOptions, checks: Vec<BoundCheck>) -> Self {
        Self {
            experiment: experiment.to_string(),
            scenario: String::new(),
            witnesses: Vec::new(),
            collector: collector.to_string(),
            lambda: opts.lambda,
            master_seed: opts.master_seed,
            trials: opts.trials,
            all_hold: checks.iter().all(|c| c.holds),
            checks,
        }
    }
}

/// Privacy plus weak compliance against strong compliance: the strong
/// error should not exceed twice the sum of the other two.
pub fn verify_bound_thm3(
    collector: &CollectorSpec,
    simulator: &dyn Simulator,
    requester: &PartyScript,
    environment: &PartyScript,
    distinguishers: &[Box<dyn Distinguisher>],
    opts: &AuditOptions,
) -> Result<BoundCheck, AuditError> {
    let weak = estimate_weak_advantage(collector, simulator, requester, environment, opts)?;
    let privacy = estimate_privacy_advantage(collector, requester, environment, distinguishers, opts)?;
    let strong = estimate_strong_advantage(collector, requester, environment, distinguishers, opts)?;
    let (e1, e2) = (weak.point_estimate, privacy.point_estimate);
    Ok(BoundCheck::new("strong <= 2(weak + privacy)", strong.point_estimate, 2.0 * (e1 + e2), opts.slack())
        .with("weak", e1)
        .with("privacy", e2)
        .with("strong", strong.point_estimate))
}

/// Weak error with `k` requester sessions against `2k` times the error
/// with a single session. `requester_for(k)` builds the requester that
/// opens exactly `k` interaction sessions.
pub fn verify_bound_thm5(
    collector: &CollectorSpec,
    simulator: &dyn Simulator,
    k_list: &[usize],
    requester_for: &dyn Fn(usize) -> PartyScript,
    environment: &PartyScript,
    opts: &AuditOptions,
) -> Result<Vec<BoundCheck>, AuditError> {
    let eps1 = estimate_weak_advantage(collector, simulator, &requester_for(1), environment, opts)?.point_estimate;
    k_list
        .iter()
        .map(|&k| {
            let eps_k = if k == 1 {
                eps1
            } else {
                estimate_weak_advantage(collector, simulator, &requester_for(k), environment, opts)?.point_estimate
            };
            Ok(BoundCheck::new(format!("k={k}"), eps_k, 2.0 * k as f64 * eps1, opts.slack())
                .with("eps_1", eps1)
                .with("k", k as f64))
        })
        .collect()
}

fn rate(count: u64, trials: u64) -> f64 {
    count as f64 / trials as f64
}

/// Parallel composition: composed error against the sum of the
/// sub-collector errors, all measured on the same trials.
pub fn verify_bound_thm6(
    collector: &CollectorSpec,
    simulator: &ParallelSimulator,
    requester: &PartyScript,
    environment: &PartyScript,
    opts: &AuditOptions,
) -> Result<BoundCheck, AuditError> {
    opts.validate()?;
    if !matches!(collector, CollectorSpec::Parallel(..)) {
        return Err(AuditError::Config(format!("{collector} is not a parallel composition")));
    }
    let outcomes = run_trials(opts, |trial| {
        let cfg = opts.config(trial);
        let result = run_execution(collector, requester, environment, &cfg)?;
        let (r1, r2) = result
            .state_x
            .split_pair()
            .map_err(|e| AuditError::Config(format!("composed state is not a pair: {e}")))?;
        let [a, b] = simulator.simulate_each(&result.view_z_x, cfg.lambda, fresh_seed(&cfg));
        let m1 = a.as_ref().map_or(true, |s| *s != r1);
        let m2 = b.as_ref().map_or(true, |s| *s != r2);
        let composed = simulator
            .simulate(&result.view_z_x, cfg.lambda, fresh_seed(&cfg))
            .map_or(true, |s| s != result.state_x);
        Ok([m1, m2, composed])
    })?;
    let count = |i: usize| outcomes.iter().filter(|o| o[i]).count() as u64;
    let (e1, e2, measured) = (rate(count(0), opts.trials), rate(count(1), opts.trials), rate(count(2), opts.trials));
    Ok(BoundCheck::new("composed <= eps_1 + eps_2", measured, e1 + e2, opts.slack())
        .with("eps_1", e1)
        .with("eps_2", e2))
}

/// Internal records caused by the given client sessions, split into
/// interaction and deletion traffic.
fn internal_for(transcript: &[SessionRecord], view: &View) -> (Vec<SessionRecord>, Vec<SessionRecord>) {
    let parents: std::collections::BTreeSet<u64> = view.records.iter().map(|r| r.sid).collect();
    transcript
        .iter()
        .filter(|r| r.initiator == Initiator::Internal && r.parent_sid.is_some_and(|p| parents.contains(&p)))
        .cloned()
        .partition(|r| matches!(r.protocol, Protocol::Pi(_)))
}

/// Sequential composition: composed error against the sub-collector
/// errors plus twice the extractor error. The extractor error is the rate
/// at which the reconstructed internal traffic differs from the internal
/// records actually caused by the environment's sessions.
pub fn verify_bound_thm7(
    collector: &CollectorSpec,
    simulator: &SequentialSimulator,
    requester: &PartyScript,
    environment: &PartyScript,
    opts: &AuditOptions,
) -> Result<BoundCheck, AuditError> {
    opts.validate()?;
    if !matches!(collector, CollectorSpec::Sequential(..)) {
        return Err(AuditError::Config(format!("{collector} is not a sequential composition")));
    }
    let outcomes = run_trials(opts, |trial| {
        let cfg = opts.config(trial);
        let seed = fresh_seed(&cfg);
        let result = run_execution(collector, requester, environment, &cfg)?;
        let (r1, r2) = result
            .state_x
            .split_pair()
            .map_err(|e| AuditError::Config(format!("composed state is not a pair: {e}")))?;
        let view = &result.view_z_x;
        let (true_pi, true_pid) = internal_for(&result.transcript, view);
        let (v1_wrong, v2_wrong) = match simulator.extract_parts(view) {
            Ok((fwd, del)) => (fwd.records != true_pi, del.records != true_pid),
            Err(_) => (true, true),
        };
        let m1 = simulator.simulate_front(view, cfg.lambda, seed).map_or(true, |s| s != r1);
        let mut actual = true_pi;
        actual.extend(true_pid);
        actual.sort_by_key(|r| r.order_index);
        let internal = View { owner: Party::Sub(1), counterparty: Party::Sub(2), records: actual };
        let m2 = simulator.simulate_back(&internal, cfg.lambda, seed).map_or(true, |s| s != r2);
        let composed = simulator.simulate(view, cfg.lambda, seed).map_or(true, |s| s != result.state_x);
        Ok([m1, m2, v1_wrong, v2_wrong, composed])
    })?;
    let r = |i: usize| rate(outcomes.iter().filter(|o| o[i]).count() as u64, opts.trials);
    let (e1, e2, ev1, ev2, measured) = (r(0), r(1), r(2), r(3), r(4));
    let eps = ev1.max(ev2);
    Ok(BoundCheck::new("composed <= eps_1 + eps_2 + 2 eps", measured, e1 + e2 + 2.0 * eps, opts.slack())
        .with("eps_1", e1)
        .with("eps_2", e2)
        .with("eps_forward", ev1)
        .with("eps_delete", ev2)
        .with("eps", eps))
}
