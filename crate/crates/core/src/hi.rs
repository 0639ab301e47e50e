//! History-independent storage structures and an exhaustive checker for
//! history independence and deletion operations over small universes.
//!
//! An abstract data structure (ADS) is a graph whose nodes are abstract
//! states ([`AdsState`]) and whose edges are operations ([`AdsOp`]). An
//! implementation ([`HiImpl`]) maps each abstract state reached by some
//! operation sequence to a physical [`MemoryRep`]. The shipped
//! implementations are deterministic, so history independence reduces to
//! the memory representation being a function of the abstract state alone.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::wire::{self, WireError};

pub type Key = Vec<u8>;
pub type Message = Vec<u8>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HiError {
    #[error("invalid operation {op} in state")]
    InvalidOp { op: String },
    #[error("duplicate key {}", String::from_utf8_lossy(.0))]
    DuplicateKey(Key),
    #[error("enumeration needs {needed} sequences, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
    #[error("malformed memory representation: {0}")]
    MalformedRep(#[from] WireError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AdsOp {
    Insert { key: Key, msg: Message },
    Remove { key: Key },
    Read,
}

impl AdsOp {
    pub fn insert(key: impl Into<Key>, msg: impl Into<Message>) -> Self {
        AdsOp::Insert { key: key.into(), msg: msg.into() }
    }

    pub fn remove(key: impl Into<Key>) -> Self {
        AdsOp::Remove { key: key.into() }
    }

    fn key(&self) -> Option<&[u8]> {
        match self {
            AdsOp::Insert { key, .. } | AdsOp::Remove { key } => Some(key),
            AdsOp::Read => None,
        }
    }
}

impl fmt::Display for AdsOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdsOp::Insert { key, msg } => write!(
                f,
                "insert({},{})",
                String::from_utf8_lossy(key),
                String::from_utf8_lossy(msg)
            ),
            AdsOp::Remove { key } => write!(f, "remove({})", String::from_utf8_lossy(key)),
            AdsOp::Read => f.write_str("read"),
        }
    }
}

impl Serialize for AdsOp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Operation shapes, instantiated against a key of the universe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Insert,
    Remove,
    Read,
}

impl OpKind {
    pub fn instantiate(self, key: &[u8]) -> AdsOp {
        match self {
            OpKind::Insert => AdsOp::insert(key, message_for(key)),
            OpKind::Remove => AdsOp::remove(key),
            OpKind::Read => AdsOp::Read,
        }
    }
}

/// The message inserted alongside `key` during enumeration.
pub fn message_for(key: &[u8]) -> Message {
    let mut msg = b"m:".to_vec();
    msg.extend_from_slice(key);
    msg
}

/// Abstract content of an ADS, independent of memory layout.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AdsState {
    /// Surviving keyed entries in insertion order.
    KeyedList(Vec<(Key, Message)>),
    Set(BTreeSet<Key>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdsKind {
    KeyedList,
    Set,
}

impl AdsKind {
    pub fn empty(self) -> AdsState {
        match self {
            AdsKind::KeyedList => AdsState::KeyedList(Vec::new()),
            AdsKind::Set => AdsState::Set(BTreeSet::new()),
        }
    }

    /// Reference transition function of the abstract graph.
    pub fn step(self, state: &AdsState, op: &AdsOp) -> Result<AdsState, HiError> {
        let mut next = state.clone();
        match (&mut next, op) {
            (_, AdsOp::Read) => {}
            (AdsState::KeyedList(entries), AdsOp::Insert { key, msg }) => {
                if entries.iter().any(|(k, _)| k == key) {
                    return Err(HiError::InvalidOp { op: op.to_string() });
                }
                entries.push((key.clone(), msg.clone()));
            }
            (AdsState::KeyedList(entries), AdsOp::Remove { key }) => {
                entries.retain(|(k, _)| k != key);
            }
            (AdsState::Set(items), AdsOp::Insert { key, .. }) => {
                if !items.insert(key.clone()) {
                    return Err(HiError::InvalidOp { op: op.to_string() });
                }
            }
            (AdsState::Set(items), AdsOp::Remove { key }) => {
                items.remove(key);
            }
        }
        Ok(next)
    }
}

/// Physical representation of an ADS state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MemoryRep(pub Vec<u8>);

impl Serialize for MemoryRep {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(&self.0))
    }
}

/// Keys kept in canonical sorted order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SortedSet {
    items: BTreeSet<Key>,
}

impl SortedSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false if the key was already present.
    pub fn insert(&mut self, key: Key) -> bool {
        self.items.insert(key)
    }

    pub fn remove(&mut self, key: &[u8]) -> bool {
        self.items.remove(key)
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        self.items.contains(key)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Key> {
        self.items.iter()
    }

    pub fn to_rep(&self) -> MemoryRep {
        MemoryRep(wire::encode(&self.items))
    }

    pub fn from_rep(rep: &MemoryRep) -> Result<Self, HiError> {
        Ok(Self { items: wire::decode(&rep.0)?.into_iter().collect() })
    }
}

/// Ordered keyed list that removes entries in place and keeps the
/// remaining entries contiguous.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CompactList {
    entries: Vec<(Key, Message)>,
}

impl CompactList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: Key, msg: Message) -> Result<(), HiError> {
        if self.position(&key).is_some() {
            return Err(HiError::DuplicateKey(key));
        }
        self.entries.push((key, msg));
        Ok(())
    }

    pub fn remove(&mut self, key: &[u8]) -> bool {
        match self.position(key) {
            Some(idx) => {
                self.entries.remove(idx);
                true
            }
            None => false,
        }
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        self.position(key).is_some()
    }

    pub fn entries(&self) -> &[(Key, Message)] {
        &self.entries
    }

    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.entries.iter().map(|(_, m)| m)
    }

    fn position(&self, key: &[u8]) -> Option<usize> {
        self.entries.iter().position(|(k, _)| k.as_slice() == key)
    }

    pub fn to_rep(&self) -> MemoryRep {
        MemoryRep(wire::encode(
            self.entries.iter().map(|(k, m)| wire::encode([k, m])),
        ))
    }

    pub fn from_rep(rep: &MemoryRep) -> Result<Self, HiError> {
        let mut entries = Vec::new();
        for entry in wire::decode(&rep.0)? {
            let [k, m] = wire::decode_exact::<2>(&entry)?;
            entries.push((k, m));
        }
        Ok(Self { entries })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct TombstoneEntry {
    key: Key,
    msg: Message,
    dead: bool,
}

/// Keyed list whose removals only flag the entry. Not history independent:
/// the flagged entry stays in the representation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TombstoneList {
    entries: Vec<TombstoneEntry>,
}

impl TombstoneList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: Key, msg: Message) -> Result<(), HiError> {
        if self.live_position(&key).is_some() {
            return Err(HiError::DuplicateKey(key));
        }
        self.entries.push(TombstoneEntry { key, msg, dead: false });
        Ok(())
    }

    pub fn remove(&mut self, key: &[u8]) -> bool {
        match self.live_position(key) {
            Some(idx) => {
                self.entries[idx].dead = true;
                true
            }
            None => false,
        }
    }

    pub fn live(&self) -> impl Iterator<Item = (&Key, &Message)> {
        self.entries.iter().filter(|e| !e.dead).map(|e| (&e.key, &e.msg))
    }

    fn live_position(&self, key: &[u8]) -> Option<usize> {
        self.entries.iter().position(|e| !e.dead && e.key.as_slice() == key)
    }

    /// Live entries encode exactly like [`CompactList`]; flagged entries
    /// carry a third field.
    pub fn to_rep(&self) -> MemoryRep {
        MemoryRep(wire::encode(self.entries.iter().map(|e| {
            if e.dead {
                wire::encode([e.key.as_slice(), e.msg.as_slice(), &[1u8]])
            } else {
                wire::encode([&e.key, &e.msg])
            }
        })))
    }

    pub fn from_rep(rep: &MemoryRep) -> Result<Self, HiError> {
        let mut entries = Vec::new();
        for raw in wire::decode(&rep.0)? {
            let mut fields = wire::decode(&raw)?.into_iter();
            let (key, msg) = match (fields.next(), fields.next()) {
                (Some(k), Some(m)) => (k, m),
                _ => return Err(WireError::Arity { expected: 2, found: 0 }.into()),
            };
            let dead = fields.next().is_some();
            entries.push(TombstoneEntry { key, msg, dead });
        }
        Ok(Self { entries })
    }
}

/// An implementation of an ADS, driven through its memory representation.
pub trait HiImpl: Sync {
    fn name(&self) -> &'static str;
    fn kind(&self) -> AdsKind;
    fn empty(&self) -> MemoryRep;
    fn apply(&self, rep: &MemoryRep, op: &AdsOp) -> Result<MemoryRep, HiError>;
    /// Abstract content encoded by `rep`.
    fn content(&self, rep: &MemoryRep) -> Result<AdsState, HiError>;
}

#[derive(Debug, Clone, Copy)]
pub struct SortedSetImpl;

#[derive(Debug, Clone, Copy)]
pub struct CompactListImpl;

#[derive(Debug, Clone, Copy)]
pub struct TombstoneListImpl;

impl HiImpl for SortedSetImpl {
    fn name(&self) -> &'static str {
        "sorted_set"
    }

    fn kind(&self) -> AdsKind {
        AdsKind::Set
    }

    fn empty(&self) -> MemoryRep {
        SortedSet::new().to_rep()
    }

    fn apply(&self, rep: &MemoryRep, op: &AdsOp) -> Result<MemoryRep, HiError> {
        let mut set = SortedSet::from_rep(rep)?;
        match op {
            AdsOp::Insert { key, .. } => {
                if !set.insert(key.clone()) {
                    return Err(HiError::InvalidOp { op: op.to_string() });
                }
            }
            AdsOp::Remove { key } => {
                set.remove(key);
            }
            AdsOp::Read => {}
        }
        Ok(set.to_rep())
    }

    fn content(&self, rep: &MemoryRep) -> Result<AdsState, HiError> {
        Ok(AdsState::Set(SortedSet::from_rep(rep)?.items))
    }
}

impl HiImpl for CompactListImpl {
    fn name(&self) -> &'static str {
        "compact_list"
    }

    fn kind(&self) -> AdsKind {
        AdsKind::KeyedList
    }

    fn empty(&self) -> MemoryRep {
        CompactList::new().to_rep()
    }

    fn apply(&self, rep: &MemoryRep, op: &AdsOp) -> Result<MemoryRep, HiError> {
        let mut list = CompactList::from_rep(rep)?;
        match op {
            AdsOp::Insert { key, msg } => list
                .insert(key.clone(), msg.clone())
                .map_err(|_| HiError::InvalidOp { op: op.to_string() })?,
            AdsOp::Remove { key } => {
                list.remove(key);
            }
            AdsOp::Read => {}
        }
        Ok(list.to_rep())
    }

    fn content(&self, rep: &MemoryRep) -> Result<AdsState, HiError> {
        Ok(AdsState::KeyedList(CompactList::from_rep(rep)?.entries))
    }
}

impl HiImpl for TombstoneListImpl {
    fn name(&self) -> &'static str {
        "tombstone_list"
    }

    fn kind(&self) -> AdsKind {
        AdsKind::KeyedList
    }

    fn empty(&self) -> MemoryRep {
        TombstoneList::new().to_rep()
    }

    fn apply(&self, rep: &MemoryRep, op: &AdsOp) -> Result<MemoryRep, HiError> {
        let mut list = TombstoneList::from_rep(rep)?;
        match op {
            AdsOp::Insert { key, msg } => list
                .insert(key.clone(), msg.clone())
                .map_err(|_| HiError::InvalidOp { op: op.to_string() })?,
            AdsOp::Remove { key } => {
                list.remove(key);
            }
            AdsOp::Read => {}
        }
        Ok(list.to_rep())
    }

    fn content(&self, rep: &MemoryRep) -> Result<AdsState, HiError> {
        let list = TombstoneList::from_rep(rep)?;
        Ok(AdsState::KeyedList(
            list.live().map(|(k, m)| (k.clone(), m.clone())).collect(),
        ))
    }
}

pub fn impl_by_name(name: &str) -> Option<&'static dyn HiImpl> {
    match name {
        "sorted_set" => Some(&SortedSetImpl),
        "compact_list" => Some(&CompactListImpl),
        "tombstone_list" => Some(&TombstoneListImpl),
        _ => None,
    }
}

pub fn apply(imp: &dyn HiImpl, rep: &MemoryRep, op: &AdsOp) -> Result<MemoryRep, HiError> {
    imp.apply(rep, op)
}

/// Runs `ops` from the empty representation.
pub fn run_ops(imp: &dyn HiImpl, ops: &[AdsOp]) -> Result<MemoryRep, HiError> {
    ops.iter().try_fold(imp.empty(), |rep, op| imp.apply(&rep, op))
}

/// Default cap on enumerated sequences.
pub const DEFAULT_BUDGET: u128 = 5_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum HiVerdict {
    Ok {
        sequences_checked: u64,
    },
    Counterexample {
        s: Vec<AdsOp>,
        t: Vec<AdsOp>,
        rep_s: MemoryRep,
        rep_t: MemoryRep,
    },
}

impl HiVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, HiVerdict::Ok { .. })
    }
}

/// Every operation over `universe`: inserts, removes, then a read.
pub fn alphabet(universe: &[Key]) -> Vec<AdsOp> {
    let mut ops: Vec<AdsOp> = universe.iter().map(|k| OpKind::Insert.instantiate(k)).collect();
    ops.extend(universe.iter().map(|k| OpKind::Remove.instantiate(k)));
    ops.push(AdsOp::Read);
    ops
}

fn sequence_count(alphabet_len: usize, max_len: usize) -> u128 {
    (0..=max_len as u32)
        .map(|i| (alphabet_len as u128).saturating_pow(i))
        .fold(0u128, u128::saturating_add)
}

/// Exhaustively checks strong history independence from the empty state.
///
/// Sequences are visited breadth first, so a reported counterexample has
/// the shortest `s` reaching a state already reached with a different
/// representation, and `t` is the shortest sequence reaching that state.
pub fn check_history_independence(
    imp: &dyn HiImpl,
    universe: &[Key],
    max_len: usize,
    budget: u128,
) -> Result<HiVerdict, HiError> {
    let ops = alphabet(universe);
    let needed = sequence_count(ops.len(), max_len);
    if needed > budget {
        return Err(HiError::BudgetExceeded { needed, budget });
    }

    let kind = imp.kind();
    let mut seen: HashMap<AdsState, (Vec<AdsOp>, MemoryRep)> = HashMap::new();
    let mut frontier = vec![(Vec::new(), kind.empty(), imp.empty())];
    let mut checked = 0u64;

    for depth in 0..=max_len {
        let mut next = Vec::new();
        for (seq, state, rep) in frontier {
            checked += 1;
            match seen.get(&state) {
                Some((first, first_rep)) if *first_rep != rep => {
                    return Ok(HiVerdict::Counterexample {
                        s: seq,
                        t: first.clone(),
                        rep_s: rep,
                        rep_t: first_rep.clone(),
                    });
                }
                Some(_) => {}
                None => {
                    seen.insert(state.clone(), (seq.clone(), rep.clone()));
                }
            }
            if depth == max_len {
                continue;
            }
            for op in &ops {
                let Ok(next_state) = kind.step(&state, op) else {
                    continue;
                };
                let next_rep = imp.apply(&rep, op)?;
                let mut next_seq = seq.clone();
                next_seq.push(op.clone());
                next.push((next_seq, next_state, next_rep));
            }
        }
        frontier = next;
    }
    Ok(HiVerdict::Ok { sequences_checked: checked })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeletionVerdict {
    Ok {
        cases_checked: u64,
    },
    Counterexample {
        r: Vec<AdsOp>,
        p: AdsOp,
        s: Vec<AdsOp>,
        p_d: AdsOp,
        t: Vec<AdsOp>,
        with_pair: AdsState,
        without_pair: AdsState,
    },
}

impl DeletionVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, DeletionVerdict::Ok { .. })
    }
}

fn sequences(alphabet: &[AdsOp], len: usize) -> Vec<Vec<AdsOp>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                alphabet.iter().map(move |op| {
                    let mut seq = prefix.clone();
                    seq.push(op.clone());
                    seq
                })
            })
            .collect();
    }
    out
}

/// Checks that `p_d` is a deletion operation of `p`: for every key `k`
/// and all `R, S, T` with `|R| + |S| + |T| + 2 <= max_len`, the sequences
/// `R p(k) S p_d(k) T` and `R S T` reach the same abstract state whenever
/// both are valid. `S` ranges over operations not naming `k`.
pub fn check_deletion_op(
    imp: &dyn HiImpl,
    p: OpKind,
    p_d: OpKind,
    universe: &[Key],
    max_len: usize,
    budget: u128,
) -> Result<DeletionVerdict, HiError> {
    let ops = alphabet(universe);
    let rest = max_len.saturating_sub(2);
    let needed = (universe.len().max(1) as u128)
        .saturating_mul(sequence_count(ops.len(), rest))
        .saturating_mul(((rest + 1) * (rest + 2) / 2) as u128);
    if needed > budget {
        return Err(HiError::BudgetExceeded { needed, budget });
    }

    let by_len: Vec<Vec<Vec<AdsOp>>> = (0..=rest).map(|n| sequences(&ops, n)).collect();
    let mut checked = 0u64;
    for key in universe {
        let p_op = p.instantiate(key);
        let pd_op = p_d.instantiate(key);
        let others: Vec<AdsOp> = ops
            .iter()
            .filter(|op| op.key() != Some(key.as_slice()))
            .cloned()
            .collect();
        let s_by_len: Vec<Vec<Vec<AdsOp>>> = (0..=rest).map(|n| sequences(&others, n)).collect();

        for r_len in 0..=rest {
            for s_len in 0..=rest - r_len {
                for t_len in 0..=rest - r_len - s_len {
                    for r in &by_len[r_len] {
                        for s in &s_by_len[s_len] {
                            for t in &by_len[t_len] {
                                let with: Vec<AdsOp> = r
                                    .iter()
                                    .chain([&p_op])
                                    .chain(s)
                                    .chain([&pd_op])
                                    .chain(t)
                                    .cloned()
                                    .collect();
                                let without: Vec<AdsOp> =
                                    r.iter().chain(s).chain(t).cloned().collect();
                                let (Ok(a), Ok(b)) = (run_ops(imp, &with), run_ops(imp, &without))
                                else {
                                    continue;
                                };
                                checked += 1;
                                let (sa, sb) = (imp.content(&a)?, imp.content(&b)?);
                                if sa != sb {
                                    return Ok(DeletionVerdict::Counterexample {
                                        r: r.clone(),
                                        p: p_op,
                                        s: s.clone(),
                                        p_d: pd_op,
                                        t: t.clone(),
                                        with_pair: sa,
                                        without_pair: sb,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(DeletionVerdict::Ok { cases_checked: checked })
}
