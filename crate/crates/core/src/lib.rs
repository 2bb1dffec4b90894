//! Library for simulating SDN-managed QKD networks under two integration
//! models — a hierarchical controller tree and distributed peer controllers —
//! over multi-domain topologies with trusted-node key relay.

pub mod control;
pub mod dist;
pub mod engine;
pub mod hier;
pub mod ids;
pub mod net;
pub mod qkd;
pub mod report;
pub mod scenario;
pub mod time;
pub mod trace;

pub use control::{ControllerRole, LinkState, Message, NetworkView, RequestScope};
pub use engine::{run_scenario, Actor, Engine, EngineError, Outcome, RunOutput};
pub use ids::{ControllerId, DomainId, KeyId, LinkId, NodeId, RequestId};
pub use net::{Domain, Link, Medium, Node, NodeKind, Topology, TopologyKind, Violation};
pub use qkd::{secret_key_rate, KeyBlock, KeyBuffer, KeyFabric, RateModel};
pub use report::{compare, summarize, Comparison, ReportError, RequestReport, RunReport};
pub use scenario::{ModelKind, Scenario, ScenarioError};
pub use time::SimTime;
pub use trace::{read_jsonl, write_jsonl, Plane, TraceRecord};
