//! Multi-domain network model: nodes, links, domains, backbone, plus
//! generators for the standard single-domain topologies and a structural
//! validator.

use crate::ids::{ControllerId, DomainId, LinkId, NodeId};
use crate::time::SimTime;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Role of a node inside the network graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    /// Hosts applications and a KMS.
    Endpoint,
    /// Passive or active intermediate element (e.g. an optical switch).
    Relay,
    /// Endpoint of an interdomain (backbone) link.
    Border,
}

/// Transmission medium of a quantum channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Medium {
    Fiber,
    FreeSpace,
    Satellite,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub domain: DomainId,
    pub kind: NodeKind,
    pub has_kms: bool,
}

/// Availability window in simulated time. An empty window list on a link
/// means the link is always available.
pub type Window = (SimTime, SimTime);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub endpoints: (NodeId, NodeId),
    pub medium: Medium,
    pub length_km: f64,
    pub loss_db: f64,
    /// Sorted, non-overlapping availability windows; empty = always up.
    pub availability: Vec<Window>,
    pub has_classical_channel: bool,
}

impl Link {
    pub fn other_end(&self, n: NodeId) -> Option<NodeId> {
        if self.endpoints.0 == n {
            Some(self.endpoints.1)
        } else if self.endpoints.1 == n {
            Some(self.endpoints.0)
        } else {
            None
        }
    }

    /// True when `t` falls inside an availability window (or no windows set).
    pub fn in_window(&self, t: SimTime) -> bool {
        if self.availability.is_empty() {
            return true;
        }
        self.availability.iter().any(|&(a, b)| a <= t && t < b)
    }

    /// Microseconds of availability overlapping `[from, to)`.
    pub fn active_micros_between(&self, from: SimTime, to: SimTime) -> u64 {
        if to <= from {
            return 0;
        }
        if self.availability.is_empty() {
            return to.0 - from.0;
        }
        self.availability
            .iter()
            .map(|&(a, b)| {
                let lo = a.0.max(from.0);
                let hi = b.0.min(to.0);
                hi.saturating_sub(lo)
            })
            .sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Domain {
    pub id: DomainId,
    pub nodes: BTreeSet<NodeId>,
    /// Intradomain links only.
    pub links: BTreeSet<LinkId>,
    pub controller: ControllerId,
}

/// The composed multi-domain graph.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Topology {
    pub domains: Vec<Domain>,
    pub backbone_links: BTreeSet<LinkId>,
    pub nodes: BTreeMap<NodeId, Node>,
    pub links: BTreeMap<LinkId, Link>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Ring,
    Star,
    Mesh,
    Bus,
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("invalid parameter for {kind:?} topology: n={n} (minimum {min})")]
    InvalidTopologyParam {
        kind: TopologyKind,
        n: u32,
        min: u32,
    },
    #[error("backbone does not connect all domains into one component")]
    DisconnectedBackbone,
    #[error("backbone link {0}-{1} has both endpoints in domain {2}")]
    NotInterdomain(NodeId, NodeId, DomainId),
    #[error("unknown node {0} in backbone spec")]
    UnknownNode(NodeId),
}

/// A violated structural invariant; violations are data, not errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    BorderMissing(NodeId),
    NotInterdomain(LinkId),
    WindowOverlap(LinkId),
    WindowUnsorted(LinkId),
    MissingClassicalChannel(LinkId),
    ForeignEndpoint(LinkId, NodeId),
    DomainDisconnected(DomainId),
    QuotientDisconnected,
    DuplicateNode(NodeId),
    NegativeLoss(LinkId),
}

/// Generator state handing out fresh node/link ids across domains.
#[derive(Debug, Default)]
pub struct IdAllocator {
    next_node: u32,
    next_link: u32,
}

impl IdAllocator {
    pub fn node(&mut self) -> NodeId {
        let id = NodeId(self.next_node);
        self.next_node += 1;
        id
    }

    pub fn link(&mut self) -> LinkId {
        let id = LinkId(self.next_link);
        self.next_link += 1;
        id
    }
}

/// Standard fiber attenuation in dB/km.
pub const DEFAULT_ALPHA_DB_PER_KM: f64 = 0.2;

/// Loss budget of a link. Fiber scales linearly in dB with distance;
/// free-space and satellite links carry a configured fixed budget.
pub fn link_loss(medium: Medium, length_km: f64, alpha_db_per_km: f64, fixed_db: f64) -> f64 {
    debug_assert!(length_km >= 0.0 && alpha_db_per_km >= 0.0 && fixed_db >= 0.0);
    match medium {
        Medium::Fiber => alpha_db_per_km * length_km + fixed_db,
        Medium::FreeSpace | Medium::Satellite => fixed_db,
    }
}

/// A generated single-domain graph, before composition into a topology.
#[derive(Debug, Clone)]
pub struct DomainGraph {
    pub domain: Domain,
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
}

fn minimum_n(kind: TopologyKind) -> u32 {
    match kind {
        TopologyKind::Ring => 3,
        _ => 2,
    }
}

fn mk_link(ids: &mut IdAllocator, a: NodeId, b: NodeId, length_km: f64) -> Link {
    Link {
        id: ids.link(),
        endpoints: (a, b),
        medium: Medium::Fiber,
        length_km,
        loss_db: link_loss(Medium::Fiber, length_km, DEFAULT_ALPHA_DB_PER_KM, 0.0),
        availability: Vec::new(),
        has_classical_channel: true,
    }
}

/// Generate one of the standard topologies as a fresh domain.
///
/// Ring: n nodes in a cycle. Star: n endpoint leaves plus a passive relay
/// hub (no KMS). Mesh: complete graph on n nodes. Bus: n nodes in a path.
pub fn build_topology(
    kind: TopologyKind,
    n: u32,
    domain: DomainId,
    controller: ControllerId,
    ids: &mut IdAllocator,
    link_km: f64,
) -> Result<DomainGraph, TopologyError> {
    let min = minimum_n(kind);
    if n < min {
        return Err(TopologyError::InvalidTopologyParam { kind, n, min });
    }
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    let endpoint = |id| Node {
        id,
        domain,
        kind: NodeKind::Endpoint,
        has_kms: true,
    };
    match kind {
        TopologyKind::Ring => {
            let ns: Vec<NodeId> = (0..n).map(|_| ids.node()).collect();
            nodes.extend(ns.iter().map(|&id| endpoint(id)));
            for i in 0..n as usize {
                links.push(mk_link(ids, ns[i], ns[(i + 1) % n as usize], link_km));
            }
        }
        TopologyKind::Star => {
            let hub = ids.node();
            nodes.push(Node {
                id: hub,
                domain,
                kind: NodeKind::Relay,
                has_kms: false,
            });
            for _ in 0..n {
                let leaf = ids.node();
                nodes.push(endpoint(leaf));
                links.push(mk_link(ids, hub, leaf, link_km));
            }
        }
        TopologyKind::Mesh => {
            let ns: Vec<NodeId> = (0..n).map(|_| ids.node()).collect();
            nodes.extend(ns.iter().map(|&id| endpoint(id)));
            for i in 0..n as usize {
                for j in i + 1..n as usize {
                    links.push(mk_link(ids, ns[i], ns[j], link_km));
                }
            }
        }
        TopologyKind::Bus => {
            let ns: Vec<NodeId> = (0..n).map(|_| ids.node()).collect();
            nodes.extend(ns.iter().map(|&id| endpoint(id)));
            for w in ns.windows(2) {
                links.push(mk_link(ids, w[0], w[1], link_km));
            }
        }
    }
    Ok(DomainGraph {
        domain: Domain {
            id: domain,
            nodes: nodes.iter().map(|n| n.id).collect(),
            links: links.iter().map(|l| l.id).collect(),
            controller,
        },
        nodes,
        links,
    })
}

/// One backbone link request for [`compose`].
#[derive(Debug, Clone)]
pub struct BackboneSpec {
    pub a: NodeId,
    pub b: NodeId,
    pub medium: Medium,
    pub length_km: f64,
    pub loss_db: f64,
    pub availability: Vec<Window>,
}

/// Join generated domains with backbone links into a full topology.
/// Backbone endpoints are re-labeled `Border`; the relabeling is idempotent.
pub fn compose(
    domains: Vec<DomainGraph>,
    backbone: Vec<BackboneSpec>,
    ids: &mut IdAllocator,
) -> Result<Topology, TopologyError> {
    let mut topo = Topology::default();
    for dg in domains {
        for n in dg.nodes {
            topo.nodes.insert(n.id, n);
        }
        for l in dg.links {
            topo.links.insert(l.id, l);
        }
        topo.domains.push(dg.domain);
    }
    for spec in backbone {
        let da = topo
            .nodes
            .get(&spec.a)
            .ok_or(TopologyError::UnknownNode(spec.a))?
            .domain;
        let db = topo
            .nodes
            .get(&spec.b)
            .ok_or(TopologyError::UnknownNode(spec.b))?
            .domain;
        if da == db {
            return Err(TopologyError::NotInterdomain(spec.a, spec.b, da));
        }
        for end in [spec.a, spec.b] {
            let node = topo.nodes.get_mut(&end).expect("endpoint checked");
            node.kind = NodeKind::Border;
            node.has_kms = true;
        }
        let id = ids.link();
        topo.links.insert(
            id,
            Link {
                id,
                endpoints: (spec.a, spec.b),
                medium: spec.medium,
                length_km: spec.length_km,
                loss_db: spec.loss_db,
                availability: spec.availability,
                has_classical_channel: true,
            },
        );
        topo.backbone_links.insert(id);
    }
    if !quotient_connected(&topo) {
        return Err(TopologyError::DisconnectedBackbone);
    }
    Ok(topo)
}

fn quotient_connected(topo: &Topology) -> bool {
    if topo.domains.len() <= 1 {
        return true;
    }
    let mut adj: BTreeMap<DomainId, BTreeSet<DomainId>> = BTreeMap::new();
    for lid in &topo.backbone_links {
        let link = &topo.links[lid];
        let da = topo.nodes[&link.endpoints.0].domain;
        let db = topo.nodes[&link.endpoints.1].domain;
        adj.entry(da).or_default().insert(db);
        adj.entry(db).or_default().insert(da);
    }
    let start = topo.domains[0].id;
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(d) = stack.pop() {
        if let Some(neigh) = adj.get(&d) {
            for &nd in neigh {
                if seen.insert(nd) {
                    stack.push(nd);
                }
            }
        }
    }
    topo.domains.iter().all(|d| seen.contains(&d.id))
}

fn domain_connected(topo: &Topology, dom: &Domain) -> bool {
    let Some(&start) = dom.nodes.iter().next() else {
        return true;
    };
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(n) = stack.pop() {
        for lid in &dom.links {
            if let Some(other) = topo.links[lid].other_end(n) {
                if dom.nodes.contains(&other) && seen.insert(other) {
                    stack.push(other);
                }
            }
        }
    }
    seen.len() == dom.nodes.len()
}

/// Check every structural invariant; returns an empty list iff all hold.
pub fn validate(topo: &Topology) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen_nodes = BTreeSet::new();
    for d in &topo.domains {
        for &n in &d.nodes {
            if !seen_nodes.insert(n) {
                out.push(Violation::DuplicateNode(n));
            }
        }
        for &lid in &d.links {
            let link = &topo.links[&lid];
            for end in [link.endpoints.0, link.endpoints.1] {
                if !d.nodes.contains(&end) {
                    out.push(Violation::ForeignEndpoint(lid, end));
                }
            }
        }
        if !domain_connected(topo, d) {
            out.push(Violation::DomainDisconnected(d.id));
        }
    }
    for (lid, link) in &topo.links {
        if !link.has_classical_channel {
            out.push(Violation::MissingClassicalChannel(*lid));
        }
        if link.loss_db < 0.0 {
            out.push(Violation::NegativeLoss(*lid));
        }
        for w in link.availability.windows(2) {
            if w[1].0 < w[0].0 {
                out.push(Violation::WindowUnsorted(*lid));
            } else if w[1].0 < w[0].1 {
                out.push(Violation::WindowOverlap(*lid));
            }
        }
    }
    for lid in &topo.backbone_links {
        let link = &topo.links[lid];
        let da = topo.nodes[&link.endpoints.0].domain;
        let db = topo.nodes[&link.endpoints.1].domain;
        if da == db {
            out.push(Violation::NotInterdomain(*lid));
        }
        for end in [link.endpoints.0, link.endpoints.1] {
            if topo.nodes[&end].kind != NodeKind::Border {
                out.push(Violation::BorderMissing(end));
            }
        }
    }
    if !quotient_connected(topo) {
        out.push(Violation::QuotientDisconnected);
    }
    out
}

impl Topology {
    pub fn domain(&self, id: DomainId) -> Option<&Domain> {
        self.domains.iter().find(|d| d.id == id)
    }

    pub fn domain_of(&self, node: NodeId) -> DomainId {
        self.nodes[&node].domain
    }

    pub fn controller_of_domain(&self, id: DomainId) -> ControllerId {
        self.domain(id).expect("known domain").controller
    }

    /// Links incident to `node` (intradomain and backbone).
    pub fn incident_links(&self, node: NodeId) -> Vec<LinkId> {
        self.links
            .values()
            .filter(|l| l.endpoints.0 == node || l.endpoints.1 == node)
            .map(|l| l.id)
            .collect()
    }

    /// The link joining two adjacent nodes, if any.
    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<LinkId> {
        self.links
            .values()
            .find(|l| {
                (l.endpoints.0 == a && l.endpoints.1 == b)
                    || (l.endpoints.0 == b && l.endpoints.1 == a)
            })
            .map(|l| l.id)
    }

    pub fn border_nodes(&self, domain: DomainId) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.domain == domain && n.kind == NodeKind::Border)
            .map(|n| n.id)
            .collect()
    }
}
