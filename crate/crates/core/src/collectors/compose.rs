//! Parallel and sequential composition of collectors.
//!
//! In a parallel composition each sub-collector runs independently; its
//! protocols are exposed as `1.<name>` and `2.<name>` and its deletion
//! tokens are prefixed with the sub-collector index. In a sequential
//! composition every client session is answered by the front collector,
//! which opens a session with the back collector through a [`Forwarder`].
//! Both compositions report the pair of sub-states as their state.

use super::{read_ack, Collector, CollectorError, InternalExchange, PiOutcome, SessionCtx};
use crate::execution::{CollectorState, Party, Protocol};

pub struct ParallelCollector {
    subs: [Box<dyn Collector>; 2],
}

impl ParallelCollector {
    pub fn new(first: Box<dyn Collector>, second: Box<dyn Collector>) -> Self {
        Self { subs: [first, second] }
    }
}

/// Splits `i.rest` into a 0-based sub-collector slot and the inner name.
pub fn route_protocol(protocol: &str) -> Option<(usize, &str)> {
    let (idx, inner) = protocol.split_once('.')?;
    match idx {
        "1" => Some((0, inner)),
        "2" => Some((1, inner)),
        _ => None,
    }
}

/// Splits a prefixed deletion token into a 0-based slot and the inner token.
pub fn route_token(token: &[u8]) -> Option<(usize, &[u8])> {
    match token.split_first()? {
        (1, rest) => Some((0, rest)),
        (2, rest) => Some((1, rest)),
        _ => None,
    }
}

pub fn prefix_token(slot: usize, token: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(token.len() + 1);
    out.push(slot as u8 + 1);
    out.extend_from_slice(token);
    out
}

impl Collector for ParallelCollector {
    fn handle_pi(&mut self, protocol: &str, request: &[u8], ctx: &mut SessionCtx)
        -> Result<PiOutcome, CollectorError> {
        let (slot, inner) = route_protocol(protocol)
            .ok_or_else(|| CollectorError::UnknownProtocolIndex(protocol.to_string()))?;
        let outcome = self.subs[slot].handle_pi(inner, request, ctx)?;
        Ok(PiOutcome {
            response: outcome.response,
            token: outcome.token.map(|t| prefix_token(slot, &t)),
        })
    }

    fn handle_pid(&mut self, token: &[u8], ctx: &mut SessionCtx) -> Result<Vec<u8>, CollectorError> {
        match route_token(token) {
            Some((slot, inner)) => self.subs[slot].handle_pid(inner, ctx),
            None => Ok(super::ack(false)),
        }
    }

    fn state(&self) -> CollectorState {
        CollectorState::pair(&self.subs[0].state(), &self.subs[1].state())
    }
}

/// Decides what the front collector sends to the back collector.
pub trait Forwarder: Send + Sync {
    /// Internal `(protocol, request)` for a client session, given the
    /// front collector's own reply.
    fn forward(&self, protocol: &str, request: &[u8], front: &PiOutcome)
        -> Result<Option<(String, Vec<u8>)>, CollectorError>;

    /// Client response once both collectors have answered.
    fn respond(&self, protocol: &str, front: &PiOutcome, back: Option<&PiOutcome>)
        -> Result<Vec<u8>, CollectorError>;

    /// Token to delete at the back collector, given the front collector's
    /// acknowledgement.
    fn forward_delete(&self, token: &[u8], front_ack: &[u8]) -> Option<Vec<u8>>;
}

/// Forwards accepted posts and fetches unchanged, and deletions that the
/// front collector acknowledged. Holds no state of its own.
#[derive(Debug, Clone, Copy, Default)]
pub struct VerbatimForwarder;

impl Forwarder for VerbatimForwarder {
    fn forward(&self, protocol: &str, request: &[u8], front: &PiOutcome)
        -> Result<Option<(String, Vec<u8>)>, CollectorError> {
        match protocol {
            "post" => Ok(front.token.as_ref().map(|_| ("post".to_string(), request.to_vec()))),
            "fetch" => Ok(Some(("fetch".to_string(), Vec::new()))),
            other => Err(CollectorError::ForwarderFailure(format!("cannot forward {other:?}"))),
        }
    }

    fn respond(&self, protocol: &str, front: &PiOutcome, back: Option<&PiOutcome>)
        -> Result<Vec<u8>, CollectorError> {
        if protocol == "fetch" {
            back.map(|b| b.response.clone())
                .ok_or_else(|| CollectorError::ForwarderFailure("fetch was not forwarded".into()))
        } else {
            Ok(front.response.clone())
        }
    }

    fn forward_delete(&self, token: &[u8], front_ack: &[u8]) -> Option<Vec<u8>> {
        (read_ack(front_ack) == Some(true)).then(|| token.to_vec())
    }
}

pub struct SequentialCollector {
    front: Box<dyn Collector>,
    back: Box<dyn Collector>,
    forwarder: Box<dyn Forwarder>,
}

impl SequentialCollector {
    pub fn new(front: Box<dyn Collector>, back: Box<dyn Collector>, forwarder: Box<dyn Forwarder>) -> Self {
        Self { front, back, forwarder }
    }
}

impl Collector for SequentialCollector {
    fn handle_pi(&mut self, protocol: &str, request: &[u8], ctx: &mut SessionCtx)
        -> Result<PiOutcome, CollectorError> {
        let front = self.front.handle_pi(protocol, request, ctx)?;
        let back = match self.forwarder.forward(protocol, request, &front)? {
            Some((inner, inner_request)) => {
                let mut back_ctx = SessionCtx::default();
                let out = self.back.handle_pi(&inner, &inner_request, &mut back_ctx)?;
                ctx.internal.push(InternalExchange {
                    from: Party::Sub(1),
                    to: Party::Sub(2),
                    protocol: Protocol::Pi(inner),
                    request: inner_request,
                    response: out.response.clone(),
                    token: out.token.clone(),
                });
                ctx.internal.extend(back_ctx.internal);
                Some(out)
            }
            None => None,
        };
        let response = self.forwarder.respond(protocol, &front, back.as_ref())?;
        Ok(PiOutcome { response, token: front.token })
    }

    fn handle_pid(&mut self, token: &[u8], ctx: &mut SessionCtx) -> Result<Vec<u8>, CollectorError> {
        let front_ack = self.front.handle_pid(token, ctx)?;
        if let Some(inner) = self.forwarder.forward_delete(token, &front_ack) {
            let mut back_ctx = SessionCtx::default();
            let response = self.back.handle_pid(&inner, &mut back_ctx)?;
            ctx.internal.push(InternalExchange {
                from: Party::Sub(1),
                to: Party::Sub(2),
                protocol: Protocol::PiD,
                request: inner.clone(),
                response,
                token: Some(inner),
            });
            ctx.internal.extend(back_ctx.internal);
        }
        Ok(front_ack)
    }

    fn state(&self) -> CollectorState {
        CollectorState::pair(&self.front.state(), &self.back.state())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collectors::{ack, post_request, CollectorSpec, IndexFrontend, MessageBoard};
    use crate::wire;

    fn parallel(spec: &str) -> Box<dyn Collector> {
        CollectorSpec::parse(spec).unwrap().build(16, 7)
    }

    #[test]
    fn parallel_routes_by_index() {
        let mut c = parallel("parallel(board,counter)");
        let mut ctx = SessionCtx::default();
        let post = c.handle_pi("1.post", &post_request(b"k", b"m"), &mut ctx).unwrap();
        assert_eq!(post.token, Some(b"\x01k".to_vec()));
        let query = c.handle_pi("2.query", &[], &mut ctx).unwrap();
        assert_eq!(query.token.as_ref().unwrap()[0], 2);
        assert!(matches!(
            c.handle_pi("3.post", &[], &mut ctx),
            Err(CollectorError::UnknownProtocolIndex(_))
        ));
        assert!(matches!(c.handle_pi("post", &[], &mut ctx), Err(CollectorError::UnknownProtocolIndex(_))));
    }

    #[test]
    fn parallel_state_is_the_pair_of_sub_states() {
        let mut c = parallel("parallel(board,board)");
        let mut ctx = SessionCtx::default();
        c.handle_pi("1.post", &post_request(b"a", b"1"), &mut ctx).unwrap();
        c.handle_pi("2.post", &post_request(b"b", b"2"), &mut ctx).unwrap();
        let (s1, s2) = c.state().split_pair().unwrap();
        assert_eq!(s1, MessageBoard::encode_state([(&b"a"[..], &b"1"[..])]));
        assert_eq!(s2, MessageBoard::encode_state([(&b"b"[..], &b"2"[..])]));
    }

    #[test]
    fn deleting_on_one_side_leaves_the_other_untouched() {
        let mut c = parallel("parallel(board,counter)");
        let mut ctx = SessionCtx::default();
        c.handle_pi("1.post", &post_request(b"a", b"1"), &mut ctx).unwrap();
        c.handle_pi("2.query", &[], &mut ctx).unwrap();
        let (_, before) = c.state().split_pair().unwrap();
        assert_eq!(c.handle_pid(b"\x01a", &mut ctx).unwrap(), ack(true));
        let (first, after) = c.state().split_pair().unwrap();
        assert_eq!(before, after);
        assert_eq!(first, MessageBoard::encode_state([]));
        assert_eq!(c.handle_pid(b"\x09a", &mut ctx).unwrap(), ack(false));
    }

    #[test]
    fn sequential_forwards_posts_fetches_and_deletes() {
        let mut c = CollectorSpec::parse("sequential(frontend,board)").unwrap().build(16, 0);
        let mut ctx = SessionCtx::default();
        let out = c.handle_pi("post", &post_request(b"k", b"m"), &mut ctx).unwrap();
        assert_eq!(out.token.as_deref(), Some(&b"k"[..]));
        assert_eq!(ctx.internal.len(), 1);
        assert_eq!(ctx.internal[0].protocol, Protocol::Pi("post".into()));
        assert_eq!(ctx.internal[0].request, post_request(b"k", b"m"));
        let (front, back) = c.state().split_pair().unwrap();
        assert_eq!(front, IndexFrontend::encode_state([&b"k"[..]]));
        assert_eq!(back, MessageBoard::encode_state([(&b"k"[..], &b"m"[..])]));

        let mut ctx = SessionCtx::default();
        let fetched = c.handle_pi("fetch", &[], &mut ctx).unwrap();
        assert_eq!(wire::decode(&fetched.response).unwrap(), vec![b"m".to_vec()]);

        let mut ctx = SessionCtx::default();
        assert_eq!(c.handle_pid(b"k", &mut ctx).unwrap(), ack(true));
        assert_eq!(ctx.internal[0].protocol, Protocol::PiD);
        let (front, back) = c.state().split_pair().unwrap();
        assert_eq!(front, IndexFrontend::encode_state([]));
        assert_eq!(back, MessageBoard::encode_state([]));
    }

    #[test]
    fn sequential_does_not_forward_rejected_work() {
        let mut c = CollectorSpec::parse("sequential(frontend,board)").unwrap().build(16, 0);
        let mut ctx = SessionCtx::default();
        c.handle_pi("post", &post_request(b"k", b"m"), &mut ctx).unwrap();
        let mut ctx = SessionCtx::default();
        let dup = c.handle_pi("post", &post_request(b"k", b"n"), &mut ctx).unwrap();
        assert_eq!(dup.response, ack(false));
        assert!(ctx.internal.is_empty());
        let mut ctx = SessionCtx::default();
        assert_eq!(c.handle_pid(b"absent", &mut ctx).unwrap(), ack(false));
        assert!(ctx.internal.is_empty());
    }

    #[test]
    fn verbatim_forwarder_rejects_unknown_protocols() {
        let front = PiOutcome { response: ack(true), token: None };
        assert!(matches!(
            VerbatimForwarder.forward("query", &[], &front),
            Err(CollectorError::ForwarderFailure(_))
        ));
    }
}
