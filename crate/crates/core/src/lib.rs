//! Execution harness and auditors for deletion-compliance of data
//! collectors.
//!
//! A collector is run against a scripted deletion-requester and a scripted
//! environment; the resulting states and views feed the auditors in
//! [`audit`], which estimate how far the collector is from strong
//! compliance, weak compliance and privacy, and check history independence
//! of the underlying data structures.

pub mod audit;
pub mod collectors;
pub mod execution;
pub mod hi;
pub mod registry;
pub mod scenario;
pub mod seed;
pub mod simulators;
pub mod wire;

mod hexfmt;

pub use collectors::{Collector, CollectorError, CollectorFactory, CollectorSpec};
pub use execution::{
    restrict_view, run_execution, run_ideal_execution, Action, CollectorState, ExecError, ExecutionConfig,
    ExecutionResult, Initiator, Party, PartyScript, Protocol, SessionRecord, View,
};
pub use audit::{AdvantageReport, AuditError, AuditKind, AuditOptions, BoundCheck, ExperimentReport, Verdict};
pub use scenario::{Overrides, Scenario, ScenarioError};
pub use simulators::{SimError, Simulator, SimulatorSpec};
