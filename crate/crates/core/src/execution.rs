//! Two-phase execution of a collector against a scripted deletion-requester
//! (Y) and a scripted environment (Z).
//!
//! The alive phase interleaves Y and Z sessions, one activated machine at a
//! time. Z either activates Y explicitly with `activate_y`, or, when its
//! script contains no such action, a seeded interleaver picks Y with
//! probability `y_bias` at every step. The terminate phase then issues a
//! deletion session for every Y session whose deletion was never requested.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collectors::{Collector, CollectorError, CollectorFactory, SessionCtx};
use crate::hexfmt;
use crate::seed::{derive_seed, rng_from_seed, Role};
use crate::wire::{self, WireError};

pub const MIN_LAMBDA: u32 = 8;
pub const MAX_LAMBDA: u32 = 256;
pub const DEFAULT_MAX_SESSIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("script error: {0}")]
    Script(String),
    #[error("session limit of {0} exceeded")]
    SessionLimitExceeded(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Collector(#[from] CollectorError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown party {0:?}")]
pub struct UnknownParty(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    /// The data collector as seen from outside.
    Collector,
    Requester,
    Environment,
    /// Sub-collector `i` (1-based) of a composed collector.
    Sub(u8),
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Collector => f.write_str("X"),
            Party::Requester => f.write_str("Y"),
            Party::Environment => f.write_str("Z"),
            Party::Sub(i) => write!(f, "X{i}"),
        }
    }
}

impl std::str::FromStr for Party {
    type Err = UnknownParty;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "X" => Ok(Party::Collector),
            "Y" => Ok(Party::Requester),
            "Z" => Ok(Party::Environment),
            "X1" => Ok(Party::Sub(1)),
            "X2" => Ok(Party::Sub(2)),
            _ => Err(UnknownParty(s.to_string())),
        }
    }
}

impl Serialize for Party {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Initiator {
    Requester,
    Environment,
    /// A session one sub-collector opened with another.
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// The interaction protocol, by name (`post`, `1.query`, ...).
    Pi(String),
    /// The deletion protocol.
    PiD,
    /// A direct requester-to-environment message; never touches the collector.
    Message,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SessionRecord {
    pub sid: u64,
    pub order_index: u64,
    pub initiator: Initiator,
    pub from: Party,
    pub to: Party,
    pub protocol: Protocol,
    #[serde(serialize_with = "hexfmt::bytes")]
    pub request: Vec<u8>,
    #[serde(serialize_with = "hexfmt::bytes")]
    pub response: Vec<u8>,
    /// Issued token for `Pi`, invoked token for `PiD`.
    #[serde(serialize_with = "hexfmt::opt_bytes")]
    pub deletion_token: Option<Vec<u8>>,
    /// Client session that caused an internal session.
    pub parent_sid: Option<u64>,
}

impl SessionRecord {
    fn touches(&self, party: Party) -> bool {
        self.from == party || self.to == party
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct View {
    pub owner: Party,
    pub counterparty: Party,
    pub records: Vec<SessionRecord>,
}

impl View {
    pub fn empty(owner: Party, counterparty: Party) -> Self {
        Self { owner, counterparty, records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Records exchanged between `a` and `b`, in activation order.
pub fn restrict_view(transcript: &[SessionRecord], a: Party, b: Party) -> Result<View, UnknownParty> {
    for party in [a, b] {
        if let Party::Sub(i) = party {
            if !(1..=2).contains(&i) {
                return Err(UnknownParty(party.to_string()));
            }
        }
    }
    let records = transcript
        .iter()
        .filter(|r| r.touches(a) && r.touches(b) && (a != b || r.from == r.to))
        .cloned()
        .collect();
    Ok(View { owner: a, counterparty: b, records })
}

/// Canonical serialization of a collector's work tape.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CollectorState(pub Vec<u8>);

impl CollectorState {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn pair(first: &CollectorState, second: &CollectorState) -> CollectorState {
        CollectorState(wire::encode([&first.0, &second.0]))
    }

    pub fn split_pair(&self) -> Result<(CollectorState, CollectorState), WireError> {
        let [a, b] = wire::decode_exact::<2>(&self.0)?;
        Ok((CollectorState(a), CollectorState(b)))
    }
}

impl Serialize for CollectorState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        hexfmt::bytes(&self.0, serializer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExecutionResult {
    pub state_x: CollectorState,
    pub view_z_x: View,
    pub view_y_x: View,
    pub transcript: Vec<SessionRecord>,
}

impl ExecutionResult {
    /// Stable byte rendering used for determinism checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("execution result serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionConfig {
    /// Bit length of sampled identifiers.
    pub lambda: u32,
    pub master_seed: u64,
    pub trial: u64,
    pub max_sessions: usize,
    /// Probability that the interleaver activates Y next.
    pub y_bias: f64,
}

impl ExecutionConfig {
    pub fn new(lambda: u32, master_seed: u64) -> Self {
        Self {
            lambda,
            master_seed,
            trial: 0,
            max_sessions: DEFAULT_MAX_SESSIONS,
            y_bias: 0.5,
        }
    }

    pub fn with_trial(mut self, trial: u64) -> Self {
        self.trial = trial;
        self
    }

    pub fn with_y_bias(mut self, y_bias: f64) -> Self {
        self.y_bias = y_bias;
        self
    }

    pub fn with_max_sessions(mut self, max_sessions: usize) -> Self {
        self.max_sessions = max_sessions;
        self
    }

    pub fn role_seed(&self, role: Role) -> u64 {
        derive_seed(self.master_seed, role.label(), self.trial)
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        if !(MIN_LAMBDA..=MAX_LAMBDA).contains(&self.lambda) {
            return Err(ExecError::Config(format!(
                "lambda must be in [{MIN_LAMBDA}, {MAX_LAMBDA}], got {}",
                self.lambda
            )));
        }
        if self.max_sessions == 0 {
            return Err(ExecError::Config("max_sessions must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.y_bias) {
            return Err(ExecError::Config(format!("y_bias must be in [0, 1], got {}", self.y_bias)));
        }
        Ok(())
    }
}

/// One scripted party action. `via` routes a session to a sub-collector
/// of a parallel composition (outermost index first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Post {
        key: String,
        msg: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        via: Vec<u8>,
    },
    Fetch {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        via: Vec<u8>,
    },
    Query {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        via: Vec<u8>,
    },
    Delete {
        token: String,
    },
    ActivateY {
        n: u32,
    },
    /// Binds the deletion token of the party's previous session to a name.
    Capture {
        name: String,
    },
    SendToZ {
        payload: String,
    },
}

/// Replaced with λ fresh random bits (hex) from the acting party's tape.
pub const RAND_PLACEHOLDER: &str = "{rand}";

fn routed(via: &[u8], base: &str) -> String {
    let mut name = String::new();
    for idx in via {
        name.push_str(&idx.to_string());
        name.push('.');
    }
    name.push_str(base);
    name
}

impl Action {
    /// Collector protocol this action opens, if it opens an interaction
    /// session.
    pub fn protocol_name(&self) -> Option<String> {
        match self {
            Action::Post { via, .. } => Some(routed(via, "post")),
            Action::Fetch { via } => Some(routed(via, "fetch")),
            Action::Query { via } => Some(routed(via, "query")),
            _ => None,
        }
    }

    fn may_issue_token(&self) -> bool {
        matches!(self, Action::Post { .. } | Action::Query { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyScript {
    pub actions: Vec<Action>,
}

impl PartyScript {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions }
    }

    /// The silent requester of the ideal execution.
    pub fn silent() -> Self {
        Self::default()
    }

    pub fn activates_requester(&self) -> bool {
        self.actions.iter().any(|a| matches!(a, Action::ActivateY { .. }))
    }

    pub fn sends_to_environment(&self) -> bool {
        self.actions.iter().any(|a| matches!(a, Action::SendToZ { .. }))
    }

    /// Static checks: protocol names exist, captures follow a token-issuing
    /// session, deletions reference earlier captures.
    pub fn validate(&self, who: Party, protocols: &[String]) -> Result<(), ExecError> {
        let err = |i: usize, msg: String| ExecError::Script(format!("{who} action {i}: {msg}"));
        let mut names: Vec<&str> = Vec::new();
        let mut previous: Option<&Action> = None;
        for (i, action) in self.actions.iter().enumerate() {
            if let Some(name) = action.protocol_name() {
                if !protocols.contains(&name) {
                    return Err(err(i, format!("collector has no protocol {name:?}")));
                }
            }
            match action {
                Action::Capture { name } => {
                    if !previous.is_some_and(Action::may_issue_token) {
                        return Err(err(i, format!("capture {name:?} does not follow a post or query")));
                    }
                    names.push(name);
                }
                Action::Delete { token } if !names.contains(&token.as_str()) => {
                    return Err(err(i, format!("delete references uncaptured token {token:?}")));
                }
                Action::ActivateY { .. } if who != Party::Environment => {
                    return Err(err(i, "only the environment activates the requester".into()));
                }
                Action::SendToZ { .. } if who != Party::Requester => {
                    return Err(err(i, "only the requester sends to the environment".into()));
                }
                _ => {}
            }
            if !matches!(action, Action::Capture { .. }) {
                previous = Some(action);
            }
        }
        Ok(())
    }

    /// Groups the script into activation steps: each non-capture action
    /// together with the captures that immediately follow it.
    fn steps(&self) -> Vec<(&Action, Vec<&str>)> {
        let mut steps: Vec<(&Action, Vec<&str>)> = Vec::new();
        for action in &self.actions {
            match action {
                Action::Capture { name } => {
                    if let Some(last) = steps.last_mut() {
                        last.1.push(name);
                    }
                }
                other => steps.push((other, Vec::new())),
            }
        }
        steps
    }
}

#[derive(Debug, Clone)]
struct Captured {
    sid: u64,
    token: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
struct OpenSession {
    sid: u64,
    token: Vec<u8>,
    delete_requested: bool,
}

struct Executor {
    collector: Box<dyn Collector>,
    lambda: u32,
    max_sessions: usize,
    sessions: usize,
    transcript: Vec<SessionRecord>,
    last_issued: [Option<Captured>; 2],
    captures: [HashMap<String, Captured>; 2],
    requester_open: Vec<OpenSession>,
    rngs: [ChaCha20Rng; 2],
}

fn slot(party: Party) -> usize {
    match party {
        Party::Requester => 0,
        _ => 1,
    }
}

fn initiator_of(party: Party) -> Initiator {
    match party {
        Party::Requester => Initiator::Requester,
        _ => Initiator::Environment,
    }
}

impl Executor {
    fn next_index(&self) -> u64 {
        self.transcript.len() as u64
    }

    fn count_session(&mut self) -> Result<(), ExecError> {
        self.sessions += 1;
        if self.sessions > self.max_sessions {
            return Err(ExecError::SessionLimitExceeded(self.max_sessions));
        }
        Ok(())
    }

    fn expand(&mut self, party: Party, template: &str) -> Vec<u8> {
        if !template.contains(RAND_PLACEHOLDER) {
            return template.as_bytes().to_vec();
        }
        let mut out = String::new();
        let mut rest = template;
        while let Some(pos) = rest.find(RAND_PLACEHOLDER) {
            out.push_str(&rest[..pos]);
            let bits = random_bits(&mut self.rngs[slot(party)], self.lambda);
            out.push_str(&hex::encode(bits));
            rest = &rest[pos + RAND_PLACEHOLDER.len()..];
        }
        out.push_str(rest);
        out.into_bytes()
    }

    fn push_internal(&mut self, parent: u64, ctx: SessionCtx) {
        for exchange in ctx.internal {
            let idx = self.next_index();
            self.transcript.push(SessionRecord {
                sid: idx,
                order_index: idx,
                initiator: Initiator::Internal,
                from: exchange.from,
                to: exchange.to,
                protocol: exchange.protocol,
                request: exchange.request,
                response: exchange.response,
                deletion_token: exchange.token,
                parent_sid: Some(parent),
            });
        }
    }

    fn interact(&mut self, party: Party, protocol: String, request: Vec<u8>) -> Result<(), ExecError> {
        self.count_session()?;
        let mut ctx = SessionCtx::default();
        let outcome = self.collector.handle_pi(&protocol, &request, &mut ctx)?;
        let sid = self.next_index();
        self.transcript.push(SessionRecord {
            sid,
            order_index: sid,
            initiator: initiator_of(party),
            from: party,
            to: Party::Collector,
            protocol: Protocol::Pi(protocol),
            request,
            response: outcome.response,
            deletion_token: outcome.token.clone(),
            parent_sid: None,
        });
        self.push_internal(sid, ctx);
        if party == Party::Requester {
            if let Some(token) = &outcome.token {
                self.requester_open.push(OpenSession {
                    sid,
                    token: token.clone(),
                    delete_requested: false,
                });
            }
        }
        self.last_issued[slot(party)] = Some(Captured { sid, token: outcome.token });
        Ok(())
    }

    fn delete(&mut self, party: Party, token: Vec<u8>) -> Result<(), ExecError> {
        self.count_session()?;
        let mut ctx = SessionCtx::default();
        let response = self.collector.handle_pid(&token, &mut ctx)?;
        let sid = self.next_index();
        self.transcript.push(SessionRecord {
            sid,
            order_index: sid,
            initiator: initiator_of(party),
            from: party,
            to: Party::Collector,
            protocol: Protocol::PiD,
            request: token.clone(),
            response,
            deletion_token: Some(token),
            parent_sid: None,
        });
        self.push_internal(sid, ctx);
        self.last_issued[slot(party)] = None;
        Ok(())
    }

    fn step(&mut self, party: Party, action: &Action, captures: &[&str]) -> Result<(), ExecError> {
        match action {
            Action::Post { key, msg, .. } => {
                let key = self.expand(party, key);
                let msg = self.expand(party, msg);
                let name = action.protocol_name().unwrap();
                self.interact(party, name, wire::encode([key, msg]))?;
            }
            Action::Fetch { .. } | Action::Query { .. } => {
                let name = action.protocol_name().unwrap();
                self.interact(party, name, Vec::new())?;
            }
            Action::Delete { token } => {
                let captured = self.captures[slot(party)]
                    .get(token)
                    .cloned()
                    .ok_or_else(|| ExecError::Script(format!("{party}: no capture named {token:?}")))?;
                let bytes = captured.token.ok_or_else(|| {
                    ExecError::Script(format!("{party}: session captured as {token:?} issued no token"))
                })?;
                if party == Party::Requester {
                    for open in self.requester_open.iter_mut().filter(|o| o.sid == captured.sid) {
                        open.delete_requested = true;
                    }
                }
                self.delete(party, bytes)?;
            }
            Action::SendToZ { payload } => {
                let idx = self.next_index();
                self.transcript.push(SessionRecord {
                    sid: idx,
                    order_index: idx,
                    initiator: Initiator::Requester,
                    from: Party::Requester,
                    to: Party::Environment,
                    protocol: Protocol::Message,
                    request: payload.as_bytes().to_vec(),
                    response: Vec::new(),
                    deletion_token: None,
                    parent_sid: None,
                });
                self.last_issued[slot(party)] = None;
            }
            Action::ActivateY { .. } | Action::Capture { .. } => {
                unreachable!("handled by the scheduler")
            }
        }
        for name in captures {
            let captured = self.last_issued[slot(party)].clone().ok_or_else(|| {
                ExecError::Script(format!("{party}: nothing to capture as {name:?}"))
            })?;
            self.captures[slot(party)].insert(name.to_string(), captured);
        }
        Ok(())
    }

    fn terminate(&mut self) -> Result<(), ExecError> {
        let pending: Vec<Vec<u8>> = self
            .requester_open
            .iter()
            .filter(|o| !o.delete_requested)
            .map(|o| o.token.clone())
            .collect();
        for open in &mut self.requester_open {
            open.delete_requested = true;
        }
        for token in pending {
            self.delete(Party::Requester, token)?;
        }
        Ok(())
    }
}

/// λ uniformly random bits, big endian, with the unused high bits of the
/// first byte cleared.
pub fn random_bits<R: RngCore>(rng: &mut R, lambda: u32) -> Vec<u8> {
    let len = lambda.div_ceil(8) as usize;
    let mut bytes = vec![0u8; len];
    rng.fill_bytes(&mut bytes);
    let excess = len as u32 * 8 - lambda;
    if let Some(first) = bytes.first_mut() {
        *first &= 0xffu8 >> excess;
    }
    bytes
}

/// Runs the alive and terminate phases and returns the collector's state
/// together with the views of Y and Z.
pub fn run_execution(
    collector: &dyn CollectorFactory,
    requester: &PartyScript,
    environment: &PartyScript,
    config: &ExecutionConfig,
) -> Result<ExecutionResult, ExecError> {
    config.validate()?;
    let protocols = collector.protocols();
    requester.validate(Party::Requester, &protocols)?;
    environment.validate(Party::Environment, &protocols)?;

    let mut exec = Executor {
        collector: collector.instantiate(config.lambda, config.role_seed(Role::Collector)),
        lambda: config.lambda,
        max_sessions: config.max_sessions,
        sessions: 0,
        transcript: Vec::new(),
        last_issued: [None, None],
        captures: [HashMap::new(), HashMap::new()],
        requester_open: Vec::new(),
        rngs: [
            rng_from_seed(config.role_seed(Role::Requester)),
            rng_from_seed(config.role_seed(Role::Environment)),
        ],
    };

    let y_steps = requester.steps();
    let z_steps = environment.steps();
    let mut y_next = 0;

    if environment.activates_requester() {
        for (action, captures) in &z_steps {
            if let Action::ActivateY { n } = action {
                for _ in 0..*n {
                    // an exhausted requester halts immediately when activated
                    if let Some((y_action, y_captures)) = y_steps.get(y_next) {
                        exec.step(Party::Requester, y_action, y_captures)?;
                        y_next += 1;
                    }
                }
            } else {
                exec.step(Party::Environment, action, captures)?;
            }
        }
    } else {
        let mut scheduler = rng_from_seed(config.role_seed(Role::Scheduler));
        let mut z_next = 0;
        while y_next < y_steps.len() || z_next < z_steps.len() {
            let y_turn = if y_next == y_steps.len() {
                false
            } else if z_next == z_steps.len() {
                true
            } else {
                scheduler.gen_bool(config.y_bias)
            };
            if y_turn {
                let (action, captures) = &y_steps[y_next];
                exec.step(Party::Requester, action, captures)?;
                y_next += 1;
            } else {
                let (action, captures) = &z_steps[z_next];
                exec.step(Party::Environment, action, captures)?;
                z_next += 1;
            }
        }
    }

    exec.terminate()?;

    let transcript = exec.transcript;
    let view_z_x = restrict_view(&transcript, Party::Environment, Party::Collector)
        .expect("fixed parties are known");
    let view_y_x = restrict_view(&transcript, Party::Requester, Party::Collector)
        .expect("fixed parties are known");
    Ok(ExecutionResult {
        state_x: exec.collector.state(),
        view_z_x,
        view_y_x,
        transcript,
    })
}

/// The ideal execution: the requester is replaced with one that never acts.
pub fn run_ideal_execution(
    collector: &dyn CollectorFactory,
    environment: &PartyScript,
    config: &ExecutionConfig,
) -> Result<ExecutionResult, ExecError> {
    run_execution(collector, &PartyScript::silent(), environment, config)
}
