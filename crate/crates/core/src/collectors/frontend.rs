//! Front end that indexes the keys of accepted posts. Meant to sit in
//! front of a board in a sequential composition; on its own it answers
//! `fetch` with an empty list.

use super::{ack, Collector, CollectorError, PiOutcome, SessionCtx};
use crate::execution::CollectorState;
use crate::hi::{Key, SortedSet};
use crate::wire;

#[derive(Debug, Clone, Default)]
pub struct IndexFrontend {
    index: SortedSet,
}

impl IndexFrontend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn encode_state<'a>(keys: impl IntoIterator<Item = &'a [u8]>) -> CollectorState {
        let mut index = SortedSet::new();
        for k in keys {
            index.insert(k.to_vec());
        }
        CollectorState(index.to_rep().0)
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        self.index.contains(key)
    }

    fn record(&mut self, key: Key) -> bool {
        self.index.insert(key)
    }
}

impl Collector for IndexFrontend {
    fn handle_pi(&mut self, protocol: &str, request: &[u8], _ctx: &mut SessionCtx)
        -> Result<PiOutcome, CollectorError> {
        match protocol {
            "post" => {
                let [k, _m] = wire::decode_exact::<2>(request)?;
                Ok(if self.record(k.clone()) {
                    PiOutcome { response: ack(true), token: Some(k) }
                } else {
                    PiOutcome { response: ack(false), token: None }
                })
            }
            "fetch" => Ok(PiOutcome { response: wire::encode(Vec::<Vec<u8>>::new()), token: None }),
            other => Err(CollectorError::UnknownProtocol(other.to_string())),
        }
    }

    fn handle_pid(&mut self, token: &[u8], _ctx: &mut SessionCtx) -> Result<Vec<u8>, CollectorError> {
        Ok(ack(self.index.remove(token)))
    }

    fn state(&self) -> CollectorState {
        CollectorState(self.index.to_rep().0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collectors::post_request;

    #[test]
    fn indexes_keys_not_messages() {
        let mut f = IndexFrontend::new();
        let mut ctx = SessionCtx::default();
        let out = f.handle_pi("post", &post_request(b"k", b"secret"), &mut ctx).unwrap();
        assert_eq!(out.token.as_deref(), Some(&b"k"[..]));
        assert_eq!(f.state(), IndexFrontend::encode_state([&b"k"[..]]));
        let dup = f.handle_pi("post", &post_request(b"k", b"x"), &mut ctx).unwrap();
        assert_eq!(dup.token, None);
        assert_eq!(f.handle_pid(b"k", &mut ctx).unwrap(), ack(true));
        assert!(!f.contains(b"k"));
    }
}
