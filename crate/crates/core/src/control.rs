//! Generic SDN controller machinery shared by both integration models:
//! controller roles, network views with freshness, the typed message
//! vocabulary, and feasibility-constrained minimum-hop routing.

use crate::ids::{ControllerId, DomainId, KeyId, LinkId, NodeId, RequestId};
use crate::net::Topology;
use crate::qkd::KeyFabric;
use crate::time::SimTime;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Controller role. L1 governs one domain; L2/L3 coordinate in the
/// hierarchical model; Peer appears only in distributed runs. Deeper
/// hierarchies chain L2s under other L2s, with a single L3 root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ControllerRole {
    L1 { parent: ControllerId },
    L2 { parent: ControllerId },
    L3,
    Peer,
}

/// An SDN agent sits on a quantum node and answers its controller.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SdnAgent {
    pub node: NodeId,
    pub controller: ControllerId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkState {
    pub up: bool,
    pub bits_available: u64,
    pub last_updated: SimTime,
}

/// A controller's knowledge of the network. L1 views are scoped to the
/// domain plus incident backbone links; L3 and Peer views span everything.
#[derive(Debug, Clone, Default)]
pub struct NetworkView {
    pub known_domains: BTreeSet<DomainId>,
    pub link_states: BTreeMap<LinkId, LinkState>,
    /// When set, updates for links outside this set are ignored.
    pub scope: Option<BTreeSet<LinkId>>,
}

impl NetworkView {
    /// Last-writer-wins merge of one link entry; stale updates are discarded
    /// and out-of-scope links ignored.
    pub fn apply_state_update(&mut self, link: LinkId, state: LinkState) {
        if let Some(scope) = &self.scope {
            if !scope.contains(&link) {
                return;
            }
        }
        match self.link_states.get(&link) {
            Some(existing) if state.last_updated < existing.last_updated => {}
            _ => {
                self.link_states.insert(link, state);
            }
        }
    }

    pub fn merge(&mut self, entries: &BTreeMap<LinkId, LinkState>) {
        for (lid, st) in entries {
            self.apply_state_update(*lid, *st);
        }
    }

    /// Greatest freshness stamp over the links of a path segment.
    pub fn freshness(&self, links: &[LinkId]) -> SimTime {
        links
            .iter()
            .filter_map(|l| self.link_states.get(l))
            .map(|s| s.last_updated)
            .max()
            .unwrap_or(SimTime::ZERO)
    }
}

/// Typed protocol messages exchanged over NBI/SBI/EWBI and the hierarchy.
#[derive(Debug, Clone, Serialize)]
pub enum Message {
    KeyServiceRequest {
        app_src: NodeId,
        app_dst: NodeId,
        bits: u64,
        request_id: RequestId,
        issued_at: SimTime,
    },
    AvailabilityQuery {
        request_id: RequestId,
        node: NodeId,
    },
    AvailabilityReply {
        request_id: RequestId,
        node: NodeId,
        ok: bool,
        bits_available: u64,
    },
    /// Hierarchical: forward a request one hop along the controller tree.
    Escalate {
        request_id: RequestId,
        app_src: NodeId,
        app_dst: NodeId,
        bits: u64,
        issued_at: SimTime,
    },
    /// Distributed EWBI: request coordination, carrying the origin proposal.
    PeerCoordinate {
        request_id: RequestId,
        app_src: NodeId,
        app_dst: NodeId,
        bits: u64,
        issued_at: SimTime,
        proposal: Option<Vec<NodeId>>,
        proposal_freshness: SimTime,
    },
    InterdomainRoute {
        request_id: RequestId,
        backbone_path: Vec<NodeId>,
    },
    IntradomainRouteSet {
        request_id: RequestId,
        path: Vec<NodeId>,
    },
    KeyReady {
        request_id: RequestId,
        key_id: KeyId,
        bits: u64,
    },
    ConnectionEnd {
        request_id: RequestId,
    },
    StateSync {
        entries: BTreeMap<LinkId, LinkState>,
    },
    ReserveRequest {
        request_id: RequestId,
        links: Vec<LinkId>,
        priority: (SimTime, DomainId),
    },
    ReserveGrant {
        request_id: RequestId,
    },
    ReserveDeny {
        request_id: RequestId,
    },
    /// Data-plane record of an end-to-end key establishment.
    KeyRelay {
        request_id: RequestId,
        key_id: KeyId,
        path: Vec<NodeId>,
        bits: u64,
    },
    Error {
        request_id: RequestId,
        code: String,
    },
}

impl Message {
    pub fn variant_name(&self) -> &'static str {
        match self {
            Message::KeyServiceRequest { .. } => "KeyServiceRequest",
            Message::AvailabilityQuery { .. } => "AvailabilityQuery",
            Message::AvailabilityReply { .. } => "AvailabilityReply",
            Message::Escalate { .. } => "Escalate",
            Message::PeerCoordinate { .. } => "PeerCoordinate",
            Message::InterdomainRoute { .. } => "InterdomainRoute",
            Message::IntradomainRouteSet { .. } => "IntradomainRouteSet",
            Message::KeyReady { .. } => "KeyReady",
            Message::ConnectionEnd { .. } => "ConnectionEnd",
            Message::StateSync { .. } => "StateSync",
            Message::ReserveRequest { .. } => "ReserveRequest",
            Message::ReserveGrant { .. } => "ReserveGrant",
            Message::ReserveDeny { .. } => "ReserveDeny",
            Message::KeyRelay { .. } => "KeyRelay",
            Message::Error { .. } => "Error",
        }
    }

    pub fn request_id(&self) -> Option<RequestId> {
        match self {
            Message::KeyServiceRequest { request_id, .. }
            | Message::AvailabilityQuery { request_id, .. }
            | Message::AvailabilityReply { request_id, .. }
            | Message::Escalate { request_id, .. }
            | Message::PeerCoordinate { request_id, .. }
            | Message::InterdomainRoute { request_id, .. }
            | Message::IntradomainRouteSet { request_id, .. }
            | Message::KeyReady { request_id, .. }
            | Message::ConnectionEnd { request_id }
            | Message::ReserveRequest { request_id, .. }
            | Message::ReserveGrant { request_id }
            | Message::ReserveDeny { request_id }
            | Message::KeyRelay { request_id, .. }
            | Message::Error { request_id, .. } => Some(*request_id),
            Message::StateSync { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestScope {
    Local,
    Interdomain,
}

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no feasible route from {0} to {1}")]
    NoRoute(NodeId, NodeId),
}

/// Local iff both request endpoints lie inside the controller's domain.
pub fn classify_request(
    topo: &Topology,
    controller_domain: DomainId,
    app_src: NodeId,
    app_dst: NodeId,
) -> Result<RequestScope, ControlError> {
    for n in [app_src, app_dst] {
        if !topo.nodes.contains_key(&n) {
            return Err(ControlError::UnknownNode(n));
        }
    }
    if topo.domain_of(app_src) == controller_domain && topo.domain_of(app_dst) == controller_domain
    {
        Ok(RequestScope::Local)
    } else {
        Ok(RequestScope::Interdomain)
    }
}

/// Feasibility-filtered routing graph: only links a key relay could use.
#[derive(Debug, Clone, Default)]
pub struct RouteGraph {
    pub adjacency: BTreeMap<NodeId, Vec<NodeId>>,
}

impl RouteGraph {
    pub fn add_edge(&mut self, a: NodeId, b: NodeId) {
        self.adjacency.entry(a).or_default().push(b);
        self.adjacency.entry(b).or_default().push(a);
    }
}

/// Build the feasible routing graph from live fabric state at time `now`:
/// links must be up, inside an availability window, and hold at least `bits`;
/// interior relay nodes must host a KMS.
pub fn feasible_graph(
    topo: &Topology,
    fabric: &KeyFabric,
    links: impl IntoIterator<Item = LinkId>,
    bits: u64,
    now: SimTime,
    exclude_links: &BTreeSet<LinkId>,
) -> RouteGraph {
    let mut g = RouteGraph::default();
    for lid in links {
        if exclude_links.contains(&lid) {
            continue;
        }
        let link = &topo.links[&lid];
        if !fabric.link_up(lid) || !link.in_window(now) {
            continue;
        }
        if fabric.bits_available(lid, now) < bits {
            continue;
        }
        g.add_edge(link.endpoints.0, link.endpoints.1);
    }
    g
}

/// Minimum-hop path on the feasible graph; ties broken by the
/// lexicographically smallest node-id sequence. `src` and `dst` (and every
/// interior node) must be able to hold key material, which the caller
/// enforces by only inserting KMS-capable interior nodes into the graph.
pub fn compute_route(
    graph: &RouteGraph,
    src: NodeId,
    dst: NodeId,
    kms_ok: impl Fn(NodeId) -> bool,
) -> Result<Vec<NodeId>, ControlError> {
    assert_ne!(src, dst, "degenerate route");
    // Relax until fixpoint with (hops, path) as the order; graphs are small.
    let mut best: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    best.insert(src, vec![src]);
    loop {
        let mut changed = false;
        let snapshot: Vec<(NodeId, Vec<NodeId>)> =
            best.iter().map(|(k, v)| (*k, v.clone())).collect();
        for (u, path) in snapshot {
            let Some(neighbors) = graph.adjacency.get(&u) else {
                continue;
            };
            if u != src && u != dst && !kms_ok(u) {
                continue; // cannot relay through a KMS-less node
            }
            for &v in neighbors {
                if path.contains(&v) {
                    continue;
                }
                let mut cand = path.clone();
                cand.push(v);
                let better = match best.get(&v) {
                    None => true,
                    Some(cur) => cand.len() < cur.len() || (cand.len() == cur.len() && cand < *cur),
                };
                if better {
                    best.insert(v, cand);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    best.remove(&dst).ok_or(ControlError::NoRoute(src, dst))
}

/// Availability of a quantum node as reported by its SDN agent: reachability
/// plus the total key bits buffered on its incident links.
pub fn availability_of(
    topo: &Topology,
    fabric: &KeyFabric,
    node: NodeId,
    now: SimTime,
    reachable: bool,
) -> (bool, u64) {
    if !reachable {
        return (false, 0);
    }
    let total = topo
        .incident_links(node)
        .into_iter()
        .map(|l| fabric.bits_available(l, now))
        .sum();
    (true, total)
}
