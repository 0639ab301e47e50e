//! Data collectors: the machines under audit.
//!
//! A collector answers interaction sessions (`handle_pi`) and deletion
//! sessions (`handle_pid`) and exposes its work tape as a canonical
//! [`CollectorState`]. Collectors are built by a [`CollectorFactory`] from
//! the security parameter and a private initialization seed; after that,
//! everything they do is a function of the inbound payloads and of a
//! private random stream seeded at initialization.

pub mod board;
pub mod compose;
pub mod counter;
pub mod frontend;
pub mod vault;

use std::fmt;

use thiserror::Error;

use crate::execution::{CollectorState, Party, Protocol};
use crate::hi::Key;
use crate::registry::{RegistryError, SpecExpr};
use crate::seed::derive_seed;
use crate::wire::{self, WireError};

pub use board::{MessageBoard, TombstoneBoard};
pub use compose::{Forwarder, ParallelCollector, SequentialCollector, VerbatimForwarder};
pub use counter::CounterCollector;
pub use frontend::IndexFrontend;
pub use vault::VaultCollector;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CollectorError {
    #[error("identifier domain of {lambda} bits is exhausted")]
    DomainExhausted { lambda: u32 },
    #[error("duplicate key {}", String::from_utf8_lossy(.0))]
    DuplicateKey(Key),
    #[error("collector has no protocol {0:?}")]
    UnknownProtocol(String),
    #[error("no sub-collector for protocol {0:?}")]
    UnknownProtocolIndex(String),
    #[error("forwarder failed: {0}")]
    ForwarderFailure(String),
    #[error("malformed request: {0}")]
    MalformedRequest(#[from] WireError),
}

/// Reply to one interaction session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiOutcome {
    pub response: Vec<u8>,
    /// Token authorizing deletion of this session's data, if it stored any.
    pub token: Option<Vec<u8>>,
}

/// A session between two sub-collectors, triggered by a client session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InternalExchange {
    pub from: Party,
    pub to: Party,
    pub protocol: Protocol,
    pub request: Vec<u8>,
    pub response: Vec<u8>,
    pub token: Option<Vec<u8>>,
}

#[derive(Debug, Default)]
pub struct SessionCtx {
    pub internal: Vec<InternalExchange>,
}

pub trait Collector: Send {
    fn handle_pi(&mut self, protocol: &str, request: &[u8], ctx: &mut SessionCtx)
        -> Result<PiOutcome, CollectorError>;
    fn handle_pid(&mut self, token: &[u8], ctx: &mut SessionCtx) -> Result<Vec<u8>, CollectorError>;
    fn state(&self) -> CollectorState;
}

pub trait CollectorFactory: Sync {
    fn name(&self) -> String;
    fn protocols(&self) -> Vec<String>;
    fn instantiate(&self, lambda: u32, private_seed: u64) -> Box<dyn Collector>;
}

/// Single-field acknowledgement frame.
pub fn ack(ok: bool) -> Vec<u8> {
    wire::encode([[ok as u8]])
}

/// Reads an acknowledgement frame; anything else is `None`.
pub fn read_ack(bytes: &[u8]) -> Option<bool> {
    match wire::decode_exact::<1>(bytes).ok()? {
        [flag] if flag == [1] => Some(true),
        [flag] if flag == [0] => Some(false),
        _ => None,
    }
}

/// Request frame of a `post` session.
pub fn post_request(key: &[u8], msg: &[u8]) -> Vec<u8> {
    wire::encode([key, msg])
}

/// Registry of the shipped collectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CollectorSpec {
    Counter,
    Board,
    TombstoneBoard,
    Vault,
    Frontend,
    Parallel(Box<CollectorSpec>, Box<CollectorSpec>),
    Sequential(Box<CollectorSpec>, Box<CollectorSpec>),
}

impl CollectorSpec {
    pub fn parse(name: &str) -> Result<Self, RegistryError> {
        Self::from_expr(&SpecExpr::parse(name)?)
    }

    fn from_expr(expr: &SpecExpr) -> Result<Self, RegistryError> {
        let unknown = || RegistryError::Unknown { kind: "collector", name: expr.to_string() };
        let pair = || -> Result<(Box<Self>, Box<Self>), RegistryError> {
            match expr.args.as_slice() {
                [a, b] => Ok((Box::new(Self::from_expr(a)?), Box::new(Self::from_expr(b)?))),
                _ => Err(unknown()),
            }
        };
        if !expr.args.is_empty() && !matches!(expr.name.as_str(), "parallel" | "sequential") {
            return Err(unknown());
        }
        Ok(match expr.name.as_str() {
            "counter" => Self::Counter,
            "board" => Self::Board,
            "tombstone_board" => Self::TombstoneBoard,
            "vault" => Self::Vault,
            "frontend" => Self::Frontend,
            "parallel" => {
                let (a, b) = pair()?;
                Self::Parallel(a, b)
            }
            "sequential" => {
                let (a, b) = pair()?;
                Self::Sequential(a, b)
            }
            _ => return Err(unknown()),
        })
    }

    pub fn build(&self, lambda: u32, private_seed: u64) -> Box<dyn Collector> {
        let sub_seed = |i: u64| derive_seed(private_seed, "sub", i);
        match self {
            Self::Counter => Box::new(CounterCollector::new(lambda, private_seed)),
            Self::Board => Box::new(MessageBoard::new()),
            Self::TombstoneBoard => Box::new(TombstoneBoard::new()),
            Self::Vault => Box::new(VaultCollector::new()),
            Self::Frontend => Box::new(IndexFrontend::new()),
            Self::Parallel(a, b) => Box::new(ParallelCollector::new(
                a.build(lambda, sub_seed(1)),
                b.build(lambda, sub_seed(2)),
            )),
            Self::Sequential(a, b) => Box::new(SequentialCollector::new(
                a.build(lambda, sub_seed(1)),
                b.build(lambda, sub_seed(2)),
                Box::new(VerbatimForwarder),
            )),
        }
    }

    pub fn protocol_names(&self) -> Vec<String> {
        let own = |names: &[&str]| names.iter().map(|s| s.to_string()).collect();
        match self {
            Self::Counter => own(&["query"]),
            Self::Board | Self::TombstoneBoard | Self::Frontend => own(&["post", "fetch"]),
            Self::Vault => own(&["post"]),
            Self::Parallel(a, b) => {
                let mut names = Vec::new();
                for (i, sub) in [(1, a), (2, b)] {
                    names.extend(sub.protocol_names().into_iter().map(|p| format!("{i}.{p}")));
                }
                names
            }
            Self::Sequential(a, _) => a.protocol_names(),
        }
    }

    /// Whether the collector is deterministic after initialization.
    pub fn is_deterministic(&self) -> bool {
        match self {
            Self::Counter => false,
            Self::Parallel(a, b) | Self::Sequential(a, b) => a.is_deterministic() && b.is_deterministic(),
            _ => true,
        }
    }
}

impl fmt::Display for CollectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Counter => f.write_str("counter"),
            Self::Board => f.write_str("board"),
            Self::TombstoneBoard => f.write_str("tombstone_board"),
            Self::Vault => f.write_str("vault"),
            Self::Frontend => f.write_str("frontend"),
            Self::Parallel(a, b) => write!(f, "parallel({a},{b})"),
            Self::Sequential(a, b) => write!(f, "sequential({a},{b})"),
        }
    }
}

impl CollectorFactory for CollectorSpec {
    fn name(&self) -> String {
        self.to_string()
    }

    fn protocols(&self) -> Vec<String> {
        self.protocol_names()
    }

    fn instantiate(&self, lambda: u32, private_seed: u64) -> Box<dyn Collector> {
        self.build(lambda, private_seed)
    }
}
