//! Hierarchical integration model: the controller tree, lowest-common-
//! ancestor escalation, and interdomain session state.

use crate::ids::{ControllerId, DomainId, NodeId, RequestId};
use crate::time::SimTime;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

/// The controller tree of a hierarchical run. `parent` edges form a tree
/// rooted at the unique L3; deeper hierarchies chain L2s under other L2s.
#[derive(Debug, Clone, Default)]
pub struct Hierarchy {
    pub root: ControllerId,
    pub parent: BTreeMap<ControllerId, ControllerId>,
    pub standby: BTreeMap<ControllerId, ControllerId>,
}

#[derive(Debug, Error, PartialEq)]
pub enum HierError {
    #[error("coordinator {0} unavailable and no standby configured")]
    CoordinatorUnavailable(ControllerId),
    #[error("session in invalid state for this transition")]
    InvalidState,
}

impl Hierarchy {
    /// Controllers from `c` up to the root, inclusive.
    pub fn root_path(&self, c: ControllerId) -> Vec<ControllerId> {
        let mut path = vec![c];
        let mut cur = c;
        while let Some(&p) = self.parent.get(&cur) {
            path.push(p);
            cur = p;
        }
        path
    }

    /// Lowest common ancestor of two controllers; the minimal coordinator
    /// for a cross-domain request.
    pub fn lca(&self, a: ControllerId, b: ControllerId) -> ControllerId {
        let pa = self.root_path(a);
        let pb = self.root_path(b);
        for c in &pa {
            if pb.contains(c) {
                return *c;
            }
        }
        self.root
    }

    /// Tree path from `a` to `b`: up to the LCA, then down.
    pub fn tree_path(&self, a: ControllerId, b: ControllerId) -> Vec<ControllerId> {
        let lca = self.lca(a, b);
        let mut up: Vec<ControllerId> = self
            .root_path(a)
            .into_iter()
            .take_while(|&c| c != lca)
            .collect();
        up.push(lca);
        let down: Vec<ControllerId> = self
            .root_path(b)
            .into_iter()
            .take_while(|&c| c != lca)
            .collect();
        up.extend(down.into_iter().rev());
        up
    }

    /// Number of hops from `c` up to `coordinator`.
    pub fn depth_below(&self, c: ControllerId, coordinator: ControllerId) -> usize {
        self.root_path(c)
            .iter()
            .position(|&x| x == coordinator)
            .unwrap_or(0)
    }
}

/// Forward-only session lifecycle (Failed reachable from any non-closed
/// state).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum SessionState {
    Routing,
    Establishing,
    Delivering,
    Closed,
    Failed(String),
}

impl SessionState {
    fn rank(&self) -> u8 {
        match self {
            SessionState::Routing => 0,
            SessionState::Establishing => 1,
            SessionState::Delivering => 2,
            SessionState::Closed => 3,
            SessionState::Failed(_) => 4,
        }
    }
}

/// One interdomain key-service session, coordinated at the LCA controller.
#[derive(Debug, Clone)]
pub struct InterdomainSession {
    pub request_id: RequestId,
    pub app_src: NodeId,
    pub app_dst: NodeId,
    pub bits: u64,
    pub issued_at: SimTime,
    pub source_domain: DomainId,
    pub dest_domain: DomainId,
    pub coordinator: ControllerId,
    pub backbone_path: Vec<NodeId>,
    pub intradomain_paths: BTreeMap<DomainId, Vec<NodeId>>,
    pub state: SessionState,
}

impl InterdomainSession {
    /// Advance the lifecycle; transitions only move forward.
    pub fn transition(&mut self, next: SessionState) -> Result<(), HierError> {
        let ok = match (&self.state, &next) {
            (SessionState::Closed, _) => false,
            (_, SessionState::Failed(_)) => !matches!(self.state, SessionState::Closed),
            (cur, nxt) => nxt.rank() > cur.rank(),
        };
        if !ok {
            return Err(HierError::InvalidState);
        }
        self.state = next;
        Ok(())
    }
}
