//! Store-only collector. Entries are kept sorted by key, every
//! acknowledgement is the same constant, and nothing can be read back, so
//! the environment learns nothing about other clients.

use std::collections::BTreeMap;

use super::{ack, Collector, CollectorError, PiOutcome, SessionCtx};
use crate::execution::CollectorState;
use crate::hi::{Key, Message};
use crate::wire;

#[derive(Debug, Clone, Default)]
pub struct VaultCollector {
    entries: BTreeMap<Key, Message>,
}

impl VaultCollector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `msg` under `key` unless the key is taken. The caller is not
    /// told which happened.
    pub fn store(&mut self, key: Key, msg: Message) {
        self.entries.entry(key).or_insert(msg);
    }

    pub fn delete(&mut self, key: &[u8]) {
        self.entries.remove(key);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Collector for VaultCollector {
    fn handle_pi(&mut self, protocol: &str, request: &[u8], _ctx: &mut SessionCtx)
        -> Result<PiOutcome, CollectorError> {
        if protocol != "post" {
            return Err(CollectorError::UnknownProtocol(protocol.to_string()));
        }
        let [k, m] = wire::decode_exact::<2>(request)?;
        self.store(k.clone(), m);
        Ok(PiOutcome { response: ack(true), token: Some(k) })
    }

    fn handle_pid(&mut self, token: &[u8], _ctx: &mut SessionCtx) -> Result<Vec<u8>, CollectorError> {
        self.delete(token);
        Ok(ack(true))
    }

    fn state(&self) -> CollectorState {
        CollectorState(wire::encode(self.entries.iter().map(|(k, m)| wire::encode([k, m]))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acks_are_constant() {
        let mut v = VaultCollector::new();
        let mut ctx = SessionCtx::default();
        let first = v.handle_pi("post", &wire::encode([b"a", b"1"]), &mut ctx).unwrap();
        let dup = v.handle_pi("post", &wire::encode([b"a", b"2"]), &mut ctx).unwrap();
        assert_eq!(first.response, dup.response);
        assert_eq!(v.handle_pid(b"a", &mut ctx).unwrap(), v.handle_pid(b"a", &mut ctx).unwrap());
        assert!(v.is_empty());
    }

    #[test]
    fn state_is_sorted_by_key() {
        let mut a = VaultCollector::new();
        a.store(b"b".to_vec(), b"2".to_vec());
        a.store(b"a".to_vec(), b"1".to_vec());
        let mut b = VaultCollector::new();
        b.store(b"a".to_vec(), b"1".to_vec());
        b.store(b"b".to_vec(), b"2".to_vec());
        assert_eq!(a.state(), b.state());
    }

    #[test]
    fn has_no_read_protocol() {
        let mut v = VaultCollector::new();
        assert!(v.handle_pi("fetch", &[], &mut SessionCtx::default()).is_err());
    }
}
