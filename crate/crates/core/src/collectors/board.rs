//! Public message boards. Clients post `(key, message)` pairs, fetch all
//! messages in insertion order, and delete a post by presenting its key.

use super::{ack, Collector, CollectorError, PiOutcome, SessionCtx};
use crate::execution::CollectorState;
use crate::hi::{CompactList, HiError, Key, Message, TombstoneList};
use crate::wire;

fn parse_post(request: &[u8]) -> Result<(Key, Message), CollectorError> {
    let [k, m] = wire::decode_exact::<2>(request)?;
    Ok((k, m))
}

/// Board backed by a compacting list: a deleted entry leaves no trace.
#[derive(Debug, Clone, Default)]
pub struct MessageBoard {
    list: CompactList,
}

impl MessageBoard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn post(&mut self, key: Key, msg: Message) -> Result<(), CollectorError> {
        self.list.insert(key, msg).map_err(|e| match e {
            HiError::DuplicateKey(k) => CollectorError::DuplicateKey(k),
            other => unreachable!("compact list insert: {other}"),
        })
    }

    pub fn fetch(&self) -> Vec<Message> {
        self.list.messages().cloned().collect()
    }

    pub fn delete(&mut self, key: &[u8]) -> bool {
        self.list.remove(key)
    }

    pub fn entries(&self) -> &[(Key, Message)] {
        self.list.entries()
    }

    /// Canonical state bytes of a board holding `entries` in this order.
    pub fn encode_state<'a>(entries: impl IntoIterator<Item = (&'a [u8], &'a [u8])>) -> CollectorState {
        let mut list = CompactList::new();
        for (k, m) in entries {
            list.insert(k.to_vec(), m.to_vec()).expect("keys are unique");
        }
        CollectorState(list.to_rep().0)
    }
}

impl Collector for MessageBoard {
    fn handle_pi(&mut self, protocol: &str, request: &[u8], _ctx: &mut SessionCtx)
        -> Result<PiOutcome, CollectorError> {
        match protocol {
            "post" => {
                let (k, m) = parse_post(request)?;
                Ok(match self.post(k.clone(), m) {
                    Ok(()) => PiOutcome { response: ack(true), token: Some(k) },
                    Err(_) => PiOutcome { response: ack(false), token: None },
                })
            }
            "fetch" => Ok(PiOutcome { response: wire::encode(self.fetch()), token: None }),
            other => Err(CollectorError::UnknownProtocol(other.to_string())),
        }
    }

    fn handle_pid(&mut self, token: &[u8], _ctx: &mut SessionCtx) -> Result<Vec<u8>, CollectorError> {
        Ok(ack(self.delete(token)))
    }

    fn state(&self) -> CollectorState {
        CollectorState(self.list.to_rep().0)
    }
}

/// Board whose deletions only flag entries. Fetch hides flagged entries,
/// but they stay in the state.
#[derive(Debug, Clone, Default)]
pub struct TombstoneBoard {
    list: TombstoneList,
}

impl TombstoneBoard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn post(&mut self, key: Key, msg: Message) -> Result<(), CollectorError> {
        self.list.insert(key, msg).map_err(|e| match e {
            HiError::DuplicateKey(k) => CollectorError::DuplicateKey(k),
            other => unreachable!("tombstone list insert: {other}"),
        })
    }

    pub fn fetch(&self) -> Vec<Message> {
        self.list.live().map(|(_, m)| m.clone()).collect()
    }

    pub fn delete(&mut self, key: &[u8]) -> bool {
        self.list.remove(key)
    }
}

impl Collector for TombstoneBoard {
    fn handle_pi(&mut self, protocol: &str, request: &[u8], _ctx: &mut SessionCtx)
        -> Result<PiOutcome, CollectorError> {
        match protocol {
            "post" => {
                let (k, m) = parse_post(request)?;
                Ok(match self.post(k.clone(), m) {
                    Ok(()) => PiOutcome { response: ack(true), token: Some(k) },
                    Err(_) => PiOutcome { response: ack(false), token: None },
                })
            }
            "fetch" => Ok(PiOutcome { response: wire::encode(self.fetch()), token: None }),
            other => Err(CollectorError::UnknownProtocol(other.to_string())),
        }
    }

    fn handle_pid(&mut self, token: &[u8], _ctx: &mut SessionCtx) -> Result<Vec<u8>, CollectorError> {
        Ok(ack(self.delete(token)))
    }

    fn state(&self) -> CollectorState {
        CollectorState(self.list.to_rep().0)
    }
}
