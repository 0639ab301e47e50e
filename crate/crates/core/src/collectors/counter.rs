//! Collector that leaks one bit about past sessions: each `query` returns
//! a fresh λ-bit identifier together with the parity of the number of
//! identifiers currently held.

use rand_chacha::ChaCha20Rng;

use super::{ack, Collector, CollectorError, PiOutcome, SessionCtx};
use crate::execution::{random_bits, CollectorState};
use crate::hi::SortedSet;
use crate::seed::rng_from_seed;
use crate::wire;

pub struct CounterCollector {
    lambda: u32,
    rng: ChaCha20Rng,
    xs: SortedSet,
    q: i64,
}

impl CounterCollector {
    pub fn new(lambda: u32, private_seed: u64) -> Self {
        Self {
            lambda,
            rng: rng_from_seed(private_seed),
            xs: SortedSet::new(),
            q: 0,
        }
    }

    /// Samples an identifier not currently held, stores it and returns it
    /// with the new parity of `q`. The identifier is also the deletion
    /// token.
    pub fn query(&mut self) -> Result<(Vec<u8>, bool), CollectorError> {
        let capacity = 1u128.checked_shl(self.lambda).unwrap_or(u128::MAX);
        if self.xs.len() as u128 >= capacity {
            return Err(CollectorError::DomainExhausted { lambda: self.lambda });
        }
        let x = loop {
            let candidate = random_bits(&mut self.rng, self.lambda);
            if !self.xs.contains(&candidate) {
                break candidate;
            }
        };
        self.xs.insert(x.clone());
        self.q += 1;
        Ok((x, self.q.rem_euclid(2) == 1))
    }

    pub fn delete(&mut self, x: &[u8]) -> bool {
        if self.xs.remove(x) {
            self.q -= 1;
            debug_assert!(self.q >= 0);
            true
        } else {
            false
        }
    }

    pub fn q(&self) -> i64 {
        self.q
    }

    pub fn held(&self) -> impl Iterator<Item = &Vec<u8>> {
        self.xs.iter()
    }

    /// Canonical state bytes for a counter value and a set of identifiers.
    pub fn encode_state<'a>(q: i64, xs: impl IntoIterator<Item = &'a [u8]>) -> CollectorState {
        let mut set = SortedSet::new();
        for x in xs {
            set.insert(x.to_vec());
        }
        Self::encode(q, &set)
    }

    fn encode(q: i64, xs: &SortedSet) -> CollectorState {
        CollectorState(wire::encode([q.to_le_bytes().to_vec(), xs.to_rep().0]))
    }

    /// Response frame of a `query` session.
    pub fn response(x: &[u8], parity: bool) -> Vec<u8> {
        wire::encode([x, &[parity as u8]])
    }
}

impl Collector for CounterCollector {
    fn handle_pi(&mut self, protocol: &str, _request: &[u8], _ctx: &mut SessionCtx)
        -> Result<PiOutcome, CollectorError> {
        if protocol != "query" {
            return Err(CollectorError::UnknownProtocol(protocol.to_string()));
        }
        let (x, parity) = self.query()?;
        Ok(PiOutcome { response: Self::response(&x, parity), token: Some(x) })
    }

    fn handle_pid(&mut self, token: &[u8], _ctx: &mut SessionCtx) -> Result<Vec<u8>, CollectorError> {
        Ok(ack(self.delete(token)))
    }

    fn state(&self) -> CollectorState {
        Self::encode(self.q, &self.xs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_query_has_odd_parity() {
        let mut c = CounterCollector::new(16, 1);
        let (x, parity) = c.query().unwrap();
        assert!(parity);
        assert_eq!(c.state(), CounterCollector::encode_state(1, [x.as_slice()]));
    }

    #[test]
    fn second_query_has_even_parity() {
        let mut c = CounterCollector::new(16, 1);
        c.query().unwrap();
        assert!(!c.query().unwrap().1);
        assert_eq!(c.q(), 2);
    }

    #[test]
    fn query_after_delete_restores_odd_parity() {
        // q: 1 after the first query, 0 after the delete, 1 after the next query
        let mut c = CounterCollector::new(16, 1);
        let (x, _) = c.query().unwrap();
        assert!(c.delete(&x));
        assert!(c.query().unwrap().1);
    }

    #[test]
    fn deletes_of_unknown_or_repeated_ids_fail() {
        let mut c = CounterCollector::new(16, 1);
        let (x, _) = c.query().unwrap();
        let before = c.state();
        assert!(!c.delete(b"\x00\x00\x00"));
        assert_eq!(c.state(), before);
        assert!(c.delete(&x));
        assert!(!c.delete(&x));
        assert_eq!(c.held().count(), 0);
    }

    #[test]
    fn domain_exhaustion_is_reported() {
        let mut c = CounterCollector::new(8, 3);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..256 {
            seen.insert(c.query().unwrap().0);
        }
        assert_eq!(seen.len(), 256);
        assert_eq!(c.query(), Err(CollectorError::DomainExhausted { lambda: 8 }));
    }

    #[test]
    fn sampling_is_seeded() {
        let mut a = CounterCollector::new(32, 5);
        let mut b = CounterCollector::new(32, 5);
        let mut c = CounterCollector::new(32, 6);
        let xa = a.query().unwrap().0;
        assert_eq!(xa, b.query().unwrap().0);
        assert_ne!(xa, c.query().unwrap().0);
    }

    proptest! {
        #[test]
        fn parity_tracks_live_sessions(ops in proptest::collection::vec(0u8..3, 1..40), seed in any::<u64>()) {
            let mut c = CounterCollector::new(16, seed);
            let mut issued: Vec<Vec<u8>> = Vec::new();
            let mut queries = 0i64;
            let mut deleted = 0i64;
            for op in ops {
                match op {
                    0 => {
                        let (x, parity) = c.query().unwrap();
                        prop_assert_eq!(parity, (queries - deleted + 1).rem_euclid(2) == 1);
                        queries += 1;
                        issued.push(x);
                    }
                    1 if !issued.is_empty() => {
                        let x = issued.remove(0);
                        if c.delete(&x) {
                            deleted += 1;
                        }
                    }
                    _ => {
                        prop_assert!(!c.delete(b"not-an-id"));
                    }
                }
                prop_assert!(c.q() >= 0);
                prop_assert_eq!(c.q(), queries - deleted);
            }
        }
    }
}
