//! Simulators that rebuild a collector's state from the environment's view
//! of it, and the extractors used to recover internal traffic of a
//! sequential composition.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::collectors::compose::{route_protocol, route_token};
use crate::collectors::{
    ack, read_ack, CollectorError, CollectorSpec, CounterCollector, IndexFrontend, SessionCtx,
};
use crate::execution::{CollectorState, Initiator, Party, Protocol, SessionRecord, View};
use crate::hi::{CompactList, SortedSet};
use crate::registry::{RegistryError, SpecExpr};
use crate::seed::derive_seed;
use crate::wire;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("malformed view at session {sid}: {reason}")]
    MalformedView { sid: u64, reason: String },
    #[error("replay diverged at session {sid}: recorded {recorded}, replayed {replayed}")]
    ReplayDivergence { sid: u64, recorded: String, replayed: String },
    #[error("extractor failed at session {sid}: {reason}")]
    ExtractorFailure { sid: u64, reason: String },
    #[error(transparent)]
    Collector(#[from] CollectorError),
}

impl SimError {
    /// Short stable label, used to tally errors in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::MalformedView { .. } => "malformed_view",
            SimError::ReplayDivergence { .. } => "replay_divergence",
            SimError::ExtractorFailure { .. } => "extractor_failure",
            SimError::Collector(_) => "collector_error",
        }
    }
}

fn malformed(record: &SessionRecord, reason: impl Into<String>) -> SimError {
    SimError::MalformedView { sid: record.sid, reason: reason.into() }
}

fn render(bytes: &Option<Vec<u8>>) -> String {
    match bytes {
        Some(b) => hex::encode(b),
        None => "none".into(),
    }
}

pub trait Simulator: Send + Sync {
    fn name(&self) -> String;

    /// Rebuilds the collector state from a view. `private_seed` is a fresh
    /// tape for simulators that need randomness.
    fn simulate(&self, view: &View, lambda: u32, private_seed: u64) -> Result<CollectorState, SimError>;
}

/// Tracks issued identifiers and the live-session counter.
#[derive(Debug, Clone, Copy, Default)]
pub struct CounterSimulator;

impl Simulator for CounterSimulator {
    fn name(&self) -> String {
        "counter".into()
    }

    fn simulate(&self, view: &View, _lambda: u32, _seed: u64) -> Result<CollectorState, SimError> {
        let mut xs = SortedSet::new();
        let mut q: i64 = 0;
        for record in &view.records {
            match &record.protocol {
                Protocol::Pi(name) if name == "query" => {
                    let [x, _parity] = wire::decode_exact::<2>(&record.response)
                        .map_err(|e| malformed(record, e.to_string()))?;
                    xs.insert(x);
                    q += 1;
                }
                Protocol::PiD => {
                    if xs.remove(&record.request) {
                        q -= 1;
                    }
                }
                Protocol::Message => {}
                Protocol::Pi(other) => return Err(malformed(record, format!("unexpected protocol {other:?}"))),
            }
        }
        let held: Vec<&[u8]> = xs.iter().map(Vec::as_slice).collect();
        Ok(CounterCollector::encode_state(q, held))
    }
}

/// Replays accepted posts and deletions into a compacting list; fetches
/// change nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct BoardSimulator;

impl Simulator for BoardSimulator {
    fn name(&self) -> String {
        "board".into()
    }

    fn simulate(&self, view: &View, _lambda: u32, _seed: u64) -> Result<CollectorState, SimError> {
        let mut list = CompactList::new();
        for record in &view.records {
            match &record.protocol {
                Protocol::Pi(name) if name == "post" => {
                    let [k, m] = wire::decode_exact::<2>(&record.request)
                        .map_err(|e| malformed(record, e.to_string()))?;
                    if read_ack(&record.response) == Some(true) {
                        list.insert(k, m).map_err(|e| malformed(record, e.to_string()))?;
                    }
                }
                Protocol::Pi(name) if name == "fetch" => {}
                Protocol::PiD => {
                    list.remove(&record.request);
                }
                Protocol::Message => {}
                Protocol::Pi(other) => return Err(malformed(record, format!("unexpected protocol {other:?}"))),
            }
        }
        Ok(CollectorState(list.to_rep().0))
    }
}

/// Rebuilds the key index of an [`IndexFrontend`].
#[derive(Debug, Clone, Copy, Default)]
pub struct FrontendSimulator;

impl Simulator for FrontendSimulator {
    fn name(&self) -> String {
        "frontend".into()
    }

    fn simulate(&self, view: &View, _lambda: u32, _seed: u64) -> Result<CollectorState, SimError> {
        let mut keys = BTreeSet::new();
        for record in &view.records {
            match &record.protocol {
                Protocol::Pi(name) if name == "post" => {
                    let [k, _m] = wire::decode_exact::<2>(&record.request)
                        .map_err(|e| malformed(record, e.to_string()))?;
                    if read_ack(&record.response) == Some(true) {
                        keys.insert(k);
                    }
                }
                Protocol::Pi(name) if name == "fetch" => {}
                Protocol::PiD => {
                    keys.remove(&record.request);
                }
                Protocol::Message => {}
                Protocol::Pi(other) => return Err(malformed(record, format!("unexpected protocol {other:?}"))),
            }
        }
        Ok(IndexFrontend::encode_state(keys.iter().map(Vec::as_slice)))
    }
}

/// Runs a fresh instance of the collector on the requests in the view.
///
/// Replayed interaction sessions must issue the recorded deletion token and
/// replayed deletions must return the recorded acknowledgement; anything
/// else is a [`SimError::ReplayDivergence`]. Read responses are not
/// compared, because in the real execution they may include data of other
/// clients that the view does not account for.
#[derive(Debug, Clone)]
pub struct ReplaySimulator {
    collector: CollectorSpec,
}

impl ReplaySimulator {
    pub fn new(collector: CollectorSpec) -> Self {
        Self { collector }
    }
}

impl Simulator for ReplaySimulator {
    fn name(&self) -> String {
        "replay".into()
    }

    fn simulate(&self, view: &View, lambda: u32, private_seed: u64) -> Result<CollectorState, SimError> {
        let mut collector = self.collector.build(lambda, private_seed);
        for record in &view.records {
            let mut ctx = SessionCtx::default();
            match &record.protocol {
                Protocol::Pi(name) => {
                    let out = collector.handle_pi(name, &record.request, &mut ctx)?;
                    if out.token != record.deletion_token {
                        return Err(SimError::ReplayDivergence {
                            sid: record.sid,
                            recorded: render(&record.deletion_token),
                            replayed: render(&out.token),
                        });
                    }
                }
                Protocol::PiD => {
                    let response = collector.handle_pid(&record.request, &mut ctx)?;
                    if response != record.response {
                        return Err(SimError::ReplayDivergence {
                            sid: record.sid,
                            recorded: hex::encode(&record.response),
                            replayed: hex::encode(&response),
                        });
                    }
                }
                Protocol::Message => {}
            }
        }
        Ok(collector.state())
    }
}

/// Splits a view of a parallel composition into the views of its two
/// sub-collectors, undoing protocol and token prefixes. Deletions with an
/// unroutable token touch neither sub-collector and are dropped.
pub fn split_parallel_view(view: &View) -> Result<[View; 2], SimError> {
    let mut parts = [
        View::empty(view.owner, Party::Sub(1)),
        View::empty(view.owner, Party::Sub(2)),
    ];
    for record in &view.records {
        match &record.protocol {
            Protocol::Pi(name) => {
                let (slot, inner) = route_protocol(name)
                    .ok_or_else(|| malformed(record, format!("protocol {name:?} has no sub-collector index")))?;
                let token = match &record.deletion_token {
                    Some(t) => match route_token(t) {
                        Some((s, inner_token)) if s == slot => Some(inner_token.to_vec()),
                        _ => return Err(malformed(record, "token prefix does not match protocol index")),
                    },
                    None => None,
                };
                let mut sub = record.clone();
                sub.protocol = Protocol::Pi(inner.to_string());
                sub.to = Party::Sub(slot as u8 + 1);
                sub.deletion_token = token;
                parts[slot].records.push(sub);
            }
            Protocol::PiD => {
                if let Some((slot, inner_token)) = route_token(&record.request) {
                    let mut sub = record.clone();
                    sub.to = Party::Sub(slot as u8 + 1);
                    sub.request = inner_token.to_vec();
                    sub.deletion_token = Some(inner_token.to_vec());
                    parts[slot].records.push(sub);
                }
            }
            Protocol::Message => {}
        }
    }
    Ok(parts)
}

pub struct ParallelSimulator {
    first: Box<dyn Simulator>,
    second: Box<dyn Simulator>,
}

impl ParallelSimulator {
    pub fn new(first: Box<dyn Simulator>, second: Box<dyn Simulator>) -> Self {
        Self { first, second }
    }

    /// Simulated state of each sub-collector, with errors kept apart so a
    /// failure on one side does not hide the other.
    pub fn simulate_each(&self, view: &View, lambda: u32, private_seed: u64) -> [Result<CollectorState, SimError>; 2] {
        match split_parallel_view(view) {
            Ok([v1, v2]) => [
                self.first.simulate(&v1, lambda, derive_seed(private_seed, "sub", 1)),
                self.second.simulate(&v2, lambda, derive_seed(private_seed, "sub", 2)),
            ],
            Err(e) => [Err(e.clone()), Err(e)],
        }
    }

    pub fn simulate_parts(
        &self,
        view: &View,
        lambda: u32,
        private_seed: u64,
    ) -> Result<(CollectorState, CollectorState), SimError> {
        let [s1, s2] = self.simulate_each(view, lambda, private_seed);
        Ok((s1?, s2?))
    }
}

impl Simulator for ParallelSimulator {
    fn name(&self) -> String {
        format!("parallel({},{})", self.first.name(), self.second.name())
    }

    fn simulate(&self, view: &View, lambda: u32, private_seed: u64) -> Result<CollectorState, SimError> {
        let (s1, s2) = self.simulate_parts(view, lambda, private_seed)?;
        Ok(CollectorState::pair(&s1, &s2))
    }
}

/// Recovers the internal traffic a client's sessions caused between the
/// two halves of a sequential composition, from the client's view of the
/// front collector alone.
pub trait IndependenceExtractor: Send + Sync {
    fn name(&self) -> String;
    fn extract(&self, view: &View) -> Result<View, SimError>;
}

fn internal_record(parent: &SessionRecord, protocol: Protocol, request: Vec<u8>, response: Vec<u8>,
    token: Option<Vec<u8>>) -> SessionRecord {
    SessionRecord {
        sid: parent.sid + 1,
        order_index: parent.order_index + 1,
        initiator: Initiator::Internal,
        from: Party::Sub(1),
        to: Party::Sub(2),
        protocol,
        request,
        response,
        deletion_token: token,
        parent_sid: Some(parent.sid),
    }
}

/// Internal interaction sessions of the verbatim forwarder: accepted posts
/// go to the back collector unchanged and every fetch is forwarded as a
/// read whose answer the client receives.
#[derive(Debug, Clone, Copy, Default)]
pub struct VerbatimForwardExtractor;

impl IndependenceExtractor for VerbatimForwardExtractor {
    fn name(&self) -> String {
        "verbatim_forward".into()
    }

    fn extract(&self, view: &View) -> Result<View, SimError> {
        let mut out = View::empty(Party::Sub(1), Party::Sub(2));
        for record in &view.records {
            let Protocol::Pi(name) = &record.protocol else { continue };
            match name.as_str() {
                "post" => {
                    if read_ack(&record.response) != Some(true) {
                        continue;
                    }
                    let [k, _m] = wire::decode_exact::<2>(&record.request).map_err(|e| {
                        SimError::ExtractorFailure { sid: record.sid, reason: e.to_string() }
                    })?;
                    out.records.push(internal_record(
                        record,
                        Protocol::Pi("post".into()),
                        record.request.clone(),
                        ack(true),
                        Some(k),
                    ));
                }
                "fetch" => out.records.push(internal_record(
                    record,
                    Protocol::Pi("fetch".into()),
                    Vec::new(),
                    record.response.clone(),
                    None,
                )),
                other => {
                    return Err(SimError::ExtractorFailure {
                        sid: record.sid,
                        reason: format!("no forwarding rule for {other:?}"),
                    })
                }
            }
        }
        Ok(out)
    }
}

/// Internal deletion sessions of the verbatim forwarder: a deletion the
/// front collector acknowledged is repeated at the back collector.
#[derive(Debug, Clone, Copy, Default)]
pub struct VerbatimDeleteExtractor;

impl IndependenceExtractor for VerbatimDeleteExtractor {
    fn name(&self) -> String {
        "verbatim_delete".into()
    }

    fn extract(&self, view: &View) -> Result<View, SimError> {
        let mut out = View::empty(Party::Sub(1), Party::Sub(2));
        for record in &view.records {
            if record.protocol == Protocol::PiD && read_ack(&record.response) == Some(true) {
                out.records.push(internal_record(
                    record,
                    Protocol::PiD,
                    record.request.clone(),
                    ack(true),
                    Some(record.request.clone()),
                ));
            }
        }
        Ok(out)
    }
}

/// Merges two extracted views by activation order.
pub fn merge_views(a: View, b: View) -> View {
    let mut records = a.records;
    records.extend(b.records);
    records.sort_by_key(|r| r.order_index);
    View { owner: a.owner, counterparty: a.counterparty, records }
}

pub struct SequentialSimulator {
    front: Box<dyn Simulator>,
    back: Box<dyn Simulator>,
    forward: Box<dyn IndependenceExtractor>,
    delete: Box<dyn IndependenceExtractor>,
}

impl SequentialSimulator {
    pub fn new(
        front: Box<dyn Simulator>,
        back: Box<dyn Simulator>,
        forward: Box<dyn IndependenceExtractor>,
        delete: Box<dyn IndependenceExtractor>,
    ) -> Self {
        Self { front, back, forward, delete }
    }

    pub fn verbatim(front: Box<dyn Simulator>, back: Box<dyn Simulator>) -> Self {
        Self::new(front, back, Box::new(VerbatimForwardExtractor), Box::new(VerbatimDeleteExtractor))
    }

    /// Internal traffic reconstructed by each extractor, in that order.
    pub fn extract_parts(&self, view: &View) -> Result<(View, View), SimError> {
        Ok((self.forward.extract(view)?, self.delete.extract(view)?))
    }

    pub fn extract_internal(&self, view: &View) -> Result<View, SimError> {
        let (a, b) = self.extract_parts(view)?;
        Ok(merge_views(a, b))
    }

    pub fn simulate_front(&self, view: &View, lambda: u32, private_seed: u64) -> Result<CollectorState, SimError> {
        self.front.simulate(view, lambda, derive_seed(private_seed, "sub", 1))
    }

    pub fn simulate_back(&self, internal: &View, lambda: u32, private_seed: u64)
        -> Result<CollectorState, SimError> {
        self.back.simulate(internal, lambda, derive_seed(private_seed, "sub", 2))
    }
}

impl Simulator for SequentialSimulator {
    fn name(&self) -> String {
        format!("sequential({},{})", self.front.name(), self.back.name())
    }

    fn simulate(&self, view: &View, lambda: u32, private_seed: u64) -> Result<CollectorState, SimError> {
        let internal = self.extract_internal(view)?;
        let s1 = self.simulate_front(view, lambda, private_seed)?;
        let s2 = self.simulate_back(&internal, lambda, private_seed)?;
        Ok(CollectorState::pair(&s1, &s2))
    }
}

/// Registry of the shipped simulators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimulatorSpec {
    Counter,
    Board,
    Frontend,
    Replay,
    Parallel(Box<SimulatorSpec>, Box<SimulatorSpec>),
    Sequential(Box<SimulatorSpec>, Box<SimulatorSpec>),
}

impl SimulatorSpec {
    pub fn parse(name: &str) -> Result<Self, RegistryError> {
        Self::from_expr(&SpecExpr::parse(name)?)
    }

    fn from_expr(expr: &SpecExpr) -> Result<Self, RegistryError> {
        let unknown = || RegistryError::Unknown { kind: "simulator", name: expr.to_string() };
        match (expr.name.as_str(), expr.args.as_slice()) {
            ("counter", []) => Ok(Self::Counter),
            ("board", []) => Ok(Self::Board),
            ("frontend", []) => Ok(Self::Frontend),
            ("replay", []) => Ok(Self::Replay),
            ("parallel", [a, b]) => Ok(Self::Parallel(Box::new(Self::from_expr(a)?), Box::new(Self::from_expr(b)?))),
            ("sequential", [a, b]) => {
                Ok(Self::Sequential(Box::new(Self::from_expr(a)?), Box::new(Self::from_expr(b)?)))
            }
            _ => Err(unknown()),
        }
    }

    /// Instantiates the simulator for `collector`. Composed simulators need
    /// a collector of the same shape so that replay leaves know what to run.
    pub fn build(&self, collector: &CollectorSpec) -> Result<Box<dyn Simulator>, RegistryError> {
        let mismatch = || RegistryError::Unknown {
            kind: "simulator for this collector",
            name: format!("{self} for {collector}"),
        };
        Ok(match self {
            Self::Counter => Box::new(CounterSimulator),
            Self::Board => Box::new(BoardSimulator),
            Self::Frontend => Box::new(FrontendSimulator),
            Self::Replay => Box::new(ReplaySimulator::new(collector.clone())),
            Self::Parallel(a, b) => match collector {
                CollectorSpec::Parallel(c1, c2) => Box::new(ParallelSimulator::new(a.build(c1)?, b.build(c2)?)),
                _ => return Err(mismatch()),
            },
            Self::Sequential(a, b) => match collector {
                CollectorSpec::Sequential(c1, c2) => {
                    Box::new(SequentialSimulator::verbatim(a.build(c1)?, b.build(c2)?))
                }
                _ => return Err(mismatch()),
            },
        })
    }

    /// Bespoke simulator for a collector, where one exists.
    pub fn default_for(collector: &CollectorSpec) -> Option<Self> {
        Some(match collector {
            CollectorSpec::Counter => Self::Counter,
            CollectorSpec::Board | CollectorSpec::TombstoneBoard => Self::Board,
            CollectorSpec::Frontend => Self::Frontend,
            CollectorSpec::Vault => Self::Replay,
            CollectorSpec::Parallel(a, b) => {
                Self::Parallel(Box::new(Self::default_for(a)?), Box::new(Self::default_for(b)?))
            }
            CollectorSpec::Sequential(a, b) => {
                Self::Sequential(Box::new(Self::default_for(a)?), Box::new(Self::default_for(b)?))
            }
        })
    }
}

impl fmt::Display for SimulatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Counter => f.write_str("counter"),
            Self::Board => f.write_str("board"),
            Self::Frontend => f.write_str("frontend"),
            Self::Replay => f.write_str("replay"),
            Self::Parallel(a, b) => write!(f, "parallel({a},{b})"),
            Self::Sequential(a, b) => write!(f, "sequential({a},{b})"),
        }
    }
}
