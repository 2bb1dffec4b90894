//! Deterministic discrete-event engine driving both integration models:
//! event queue, message latency, lazy key accrual, fault injection and the
//! protocol orchestration for hierarchical and distributed runs.

use crate::control::{
    availability_of, classify_request, compute_route, feasible_graph, ControlError,
    ControllerRole, LinkState, Message, NetworkView, RequestScope,
};
use crate::dist::{peer_negotiate, PeerTable, ReservationBook, ReservationState};
use crate::hier::{Hierarchy, SessionState};
use crate::ids::{ControllerId, DomainId, KeyId, LinkId, NodeId, RequestId};
use crate::qkd::KeyFabric;
use crate::scenario::{
    Arrival, FaultAction, FaultEntry, FaultTarget, ModelKind, Scenario,
};
use crate::trace::{Plane, TraceRecord};
use crate::time::SimTime;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("event scheduled in the past ({at} < clock {clock})")]
    SchedulingError { at: SimTime, clock: SimTime },
    #[error("unknown entity targeted by fault")]
    UnknownEntity,
}

/// Parties that can send or receive messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Actor {
    App(NodeId),
    Ctrl(ControllerId),
    Agent(NodeId),
}

#[derive(Debug, Clone)]
enum Ctl {
    /// Destination-side availability confirmed; wakes the coordinator.
    AvailabilityConfirmed,
    /// One intradomain route segment installed on its agent.
    RoutesInstalled,
    /// Source app signalled end-of-connection to its controller.
    EndNotice,
    /// Retry escalation after a coordinator failover.
    Retry,
}

#[derive(Debug, Clone)]
enum EventKind {
    Deliver {
        from: Actor,
        to: Actor,
        msg: Message,
    },
    Arrival(Arrival),
    Fault(FaultEntry),
    SyncTick(ControllerId),
    FailoverActivate(ControllerId),
    Ctl(RequestId, Ctl),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    AwaitSrcAvail,
    Escalating,
    AwaitDstAvail,
    AwaitRoutes,
    WaitingFailover,
    Teardown,
    Done,
}

#[derive(Debug, Clone)]
struct Session {
    request_id: RequestId,
    src: NodeId,
    dst: NodeId,
    bits: u64,
    issued_at: SimTime,
    scope: RequestScope,
    coordinator: Option<ControllerId>,
    state: SessionState,
    phase: Phase,
    backbone_path: Vec<NodeId>,
    intradomain_paths: BTreeMap<DomainId, Vec<NodeId>>,
    peer_proposal: Option<(Vec<NodeId>, SimTime)>,
    routes_pending: u32,
    retried: bool,
    rereserved: bool,
    key: Option<KeyId>,
    relay_hops: u32,
}

#[derive(Debug, Clone)]
struct CtrlState {
    role: ControllerRole,
    domain: Option<DomainId>,
    down: bool,
    standby: Option<ControllerId>,
    standby_active: bool,
    failover_pending: bool,
}

/// Final disposition of one key-service request.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Delivered { key: KeyId, bits: u64, hops: u32 },
    Failed(String),
    Unfinished,
}

#[derive(Debug)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub outcomes: BTreeMap<RequestId, Outcome>,
    pub delivered_messages: u64,
    pub fingerprint: String,
    pub model: ModelKind,
}

pub struct Engine {
    pub scenario: Scenario,
    pub fabric: KeyFabric,
    hierarchy: Option<Hierarchy>,
    peers: Option<PeerTable>,
    pub reservations: ReservationBook,
    controllers: BTreeMap<ControllerId, CtrlState>,
    pub views: BTreeMap<ControllerId, NetworkView>,
    clock: SimTime,
    queue: BTreeMap<(SimTime, u64), EventKind>,
    seq: u64,
    next_request: u64,
    trace: Vec<TraceRecord>,
    sessions: BTreeMap<RequestId, Session>,
    delivered_messages: u64,
    isolated: BTreeSet<DomainId>,
    /// Links taken down by a domain isolation, per domain (for restore).
    isolation_links: BTreeMap<DomainId, Vec<LinkId>>,
    waiting_failover: BTreeMap<ControllerId, Vec<RequestId>>,
    /// Requests rejected before any message was sent.
    pub rejected: Vec<(RequestId, String)>,
}

impl Engine {
    pub fn new(scenario: Scenario) -> Self {
        let fabric = KeyFabric::new(
            &scenario.topology,
            &scenario.rate,
            scenario.seed,
            &scenario.initial_bits,
        );
        let mut controllers = BTreeMap::new();
        let mut views = BTreeMap::new();
        for (cid, role) in &scenario.roles {
            let domain = scenario
                .topology
                .domains
                .iter()
                .find(|d| d.controller == *cid)
                .map(|d| d.id);
            controllers.insert(
                *cid,
                CtrlState {
                    role: *role,
                    domain,
                    down: false,
                    standby: scenario.standbys.get(cid).copied(),
                    standby_active: false,
                    failover_pending: false,
                },
            );
            let scope = match role {
                ControllerRole::L1 { .. } => {
                    let d = domain.expect("L1 has a domain");
                    let mut links: BTreeSet<LinkId> =
                        scenario.topology.domain(d).expect("domain").links.clone();
                    for lid in &scenario.topology.backbone_links {
                        let l = &scenario.topology.links[lid];
                        let da = scenario.topology.domain_of(l.endpoints.0);
                        let db = scenario.topology.domain_of(l.endpoints.1);
                        if da == d || db == d {
                            links.insert(*lid);
                        }
                    }
                    Some(links)
                }
                _ => None,
            };
            let mut view = NetworkView {
                scope,
                ..Default::default()
            };
            // Everyone starts from the commissioning-time snapshot.
            for lid in scenario.topology.links.keys() {
                view.apply_state_update(
                    *lid,
                    LinkState {
                        up: true,
                        bits_available: scenario.initial_bits.get(lid).copied().unwrap_or(0),
                        last_updated: SimTime::ZERO,
                    },
                );
            }
            for d in &scenario.topology.domains {
                view.known_domains.insert(d.id);
            }
            views.insert(*cid, view);
        }
        let hierarchy = match scenario.model {
            ModelKind::Hierarchical => {
                let mut h = Hierarchy {
                    standby: scenario.standbys.clone(),
                    ..Default::default()
                };
                for (cid, role) in &scenario.roles {
                    match role {
                        ControllerRole::L1 { parent } | ControllerRole::L2 { parent } => {
                            h.parent.insert(*cid, *parent);
                        }
                        ControllerRole::L3 => h.root = *cid,
                        ControllerRole::Peer => {}
                    }
                }
                Some(h)
            }
            ModelKind::Distributed => None,
        };
        let peers = match scenario.model {
            ModelKind::Distributed => Some(PeerTable::from_topology(&scenario.topology)),
            ModelKind::Hierarchical => None,
        };
        let mut engine = Engine {
            fabric,
            hierarchy,
            peers,
            reservations: ReservationBook::default(),
            controllers,
            views,
            clock: SimTime::ZERO,
            queue: BTreeMap::new(),
            seq: 0,
            next_request: 0,
            trace: Vec::new(),
            sessions: BTreeMap::new(),
            delivered_messages: 0,
            isolated: BTreeSet::new(),
            isolation_links: BTreeMap::new(),
            waiting_failover: BTreeMap::new(),
            rejected: Vec::new(),
            scenario,
        };
        engine.seed_events();
        engine
    }

    fn seed_events(&mut self) {
        let arrivals: Vec<Arrival> = self.scenario.arrivals.clone();
        for a in arrivals {
            self.push(a.at, EventKind::Arrival(a));
        }
        let faults: Vec<FaultEntry> = self.scenario.faults.clone();
        for f in faults {
            self.push(f.at, EventKind::Fault(f));
        }
        let period = self.scenario.sync_period;
        if period > SimTime::ZERO {
            let ctrls: Vec<ControllerId> = self
                .controllers
                .iter()
                .filter(|(_, st)| !matches!(st.role, ControllerRole::L3))
                .map(|(c, _)| *c)
                .collect();
            for c in ctrls {
                self.push(period, EventKind::SyncTick(c));
            }
        }
    }

    fn push(&mut self, at: SimTime, kind: EventKind) {
        debug_assert!(at >= self.clock);
        let key = (at, self.seq);
        self.seq += 1;
        self.queue.insert(key, kind);
    }

    /// Schedule an external event; past times and unknown targets are
    /// rejected.
    pub fn schedule_fault(&mut self, entry: FaultEntry) -> Result<(), EngineError> {
        if entry.at < self.clock {
            return Err(EngineError::SchedulingError {
                at: entry.at,
                clock: self.clock,
            });
        }
        let known = match entry.target {
            FaultTarget::Controller(c) => self.controllers.contains_key(&c),
            FaultTarget::Link(l) => self.scenario.topology.links.contains_key(&l),
            FaultTarget::Domain(d) => self.scenario.topology.domains.iter().any(|x| x.id == d),
        };
        if !known {
            return Err(EngineError::UnknownEntity);
        }
        self.push(entry.at, EventKind::Fault(entry));
        Ok(())
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    fn control_latency(&self) -> SimTime {
        SimTime::from_millis_f64(self.scenario.latency.base_ms.max(1e-3))
    }

    fn latency_hops(&self, hops: u64) -> SimTime {
        SimTime(self.control_latency().0 * hops.max(1))
    }

    // ---- actor helpers -------------------------------------------------

    fn actor_name(&self, a: Actor) -> String {
        match a {
            Actor::App(n) => format!("app:{n}"),
            Actor::Agent(n) => format!("qn:{n}"),
            Actor::Ctrl(c) => format!(
                "sdnc:{}",
                self.scenario
                    .controller_names
                    .get(&c)
                    .cloned()
                    .unwrap_or_else(|| c.to_string())
            ),
        }
    }

    fn ctrl_of_node(&self, n: NodeId) -> ControllerId {
        let d = self.scenario.topology.domain_of(n);
        self.scenario.topology.controller_of_domain(d)
    }

    fn ctrl_down(&self, c: ControllerId) -> bool {
        let st = &self.controllers[&c];
        if st.down {
            return true;
        }
        match st.domain {
            Some(d) => self.isolated.contains(&d),
            None => false,
        }
    }

    /// Down with no prospect of a standby taking over.
    fn ctrl_unavailable(&self, c: ControllerId) -> bool {
        let st = &self.controllers[&c];
        self.ctrl_down(c) && !(st.standby.is_some() && st.failover_pending)
    }

    fn agent_reachable(&self, n: NodeId) -> bool {
        !self.isolated.contains(&self.scenario.topology.domain_of(n))
    }

    // ---- messaging -----------------------------------------------------

    fn plane_of(to: &Actor, msg: &Message) -> Plane {
        match msg {
            Message::KeyRelay { .. } => Plane::DP,
            Message::KeyServiceRequest { .. } | Message::KeyReady { .. } | Message::Error { .. } => {
                match to {
                    Actor::App(_) | Actor::Agent(_) => Plane::AP,
                    Actor::Ctrl(_) => Plane::AP,
                }
            }
            _ => Plane::CP,
        }
    }

    fn path_str(path: &[NodeId]) -> String {
        path.iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(">")
    }

    fn detail_of(msg: &Message) -> String {
        match msg {
            Message::KeyServiceRequest {
                app_src,
                app_dst,
                bits,
                ..
            } => format!("src={app_src};dst={app_dst};bits={bits}"),
            Message::AvailabilityQuery { node, .. } => format!("node={node}"),
            Message::AvailabilityReply {
                node,
                ok,
                bits_available,
                ..
            } => format!("node={node};ok={ok};bits={bits_available}"),
            Message::Escalate {
                app_src,
                app_dst,
                bits,
                ..
            } => format!("src={app_src};dst={app_dst};bits={bits}"),
            Message::PeerCoordinate {
                app_src,
                app_dst,
                bits,
                proposal,
                ..
            } => {
                let p = proposal
                    .as_ref()
                    .map(|p| Self::path_str(p))
                    .unwrap_or_else(|| "-".into());
                format!("src={app_src};dst={app_dst};bits={bits};proposal={p}")
            }
            Message::InterdomainRoute { backbone_path, .. } => {
                format!("path={}", Self::path_str(backbone_path))
            }
            Message::IntradomainRouteSet { path, .. } => {
                format!("path={}", Self::path_str(path))
            }
            Message::KeyReady { key_id, bits, .. } => format!("key={key_id};bits={bits}"),
            Message::ConnectionEnd { .. } => String::new(),
            Message::StateSync { entries } => format!("links={}", entries.len()),
            Message::ReserveRequest {
                links, priority, ..
            } => format!(
                "links={};prio={},{}",
                links
                    .iter()
                    .map(|l| l.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
                priority.0.as_micros(),
                priority.1
            ),
            Message::ReserveGrant { .. } | Message::ReserveDeny { .. } => String::new(),
            Message::KeyRelay {
                key_id, path, bits, ..
            } => format!(
                "key={key_id};bits={bits};hops={};path={}",
                path.len().saturating_sub(1),
                Self::path_str(path)
            ),
            Message::Error { code, .. } => format!("code={code}"),
        }
    }

    fn send(&mut self, from: Actor, to: Actor, msg: Message) {
        self.send_delayed(from, to, msg, 1);
    }

    fn send_delayed(&mut self, from: Actor, to: Actor, msg: Message, hops: u64) {
        let at = self.clock + self.latency_hops(hops);
        self.push(at, EventKind::Deliver { from, to, msg });
    }

    fn ctl(&mut self, req: RequestId, c: Ctl, hops: u64) {
        let at = if hops == 0 {
            self.clock
        } else {
            self.clock + self.latency_hops(hops)
        };
        self.push(at, EventKind::Ctl(req, c));
    }

    // ---- run loop --------------------------------------------------------

    pub fn run_until(&mut self, t_end: SimTime) -> Result<(), EngineError> {
        if t_end < self.clock {
            return Err(EngineError::SchedulingError {
                at: t_end,
                clock: self.clock,
            });
        }
        while let Some((&(at, seq), _)) = self.queue.iter().next() {
            if at > t_end {
                break;
            }
            let kind = self.queue.remove(&(at, seq)).expect("present");
            debug_assert!(at >= self.clock, "clock monotonicity");
            self.clock = at;
            self.handle(kind);
        }
        self.clock = t_end;
        Ok(())
    }

    pub fn run_to_end(&mut self) -> RunOutput {
        let end = self.scenario.duration;
        self.run_until(end).expect("end is in the future");
        let outcomes = self
            .sessions
            .values()
            .map(|s| {
                let outcome = match &s.state {
                    SessionState::Closed | SessionState::Delivering => Outcome::Delivered {
                        key: s.key.expect("delivered sessions hold a key"),
                        bits: s.bits,
                        hops: s.relay_hops,
                    },
                    SessionState::Failed(code) => Outcome::Failed(code.clone()),
                    _ => Outcome::Unfinished,
                };
                (s.request_id, outcome)
            })
            .collect();
        RunOutput {
            trace: std::mem::take(&mut self.trace),
            outcomes,
            delivered_messages: self.delivered_messages,
            fingerprint: self.scenario.fingerprint.clone(),
            model: self.scenario.model,
        }
    }

    fn handle(&mut self, kind: EventKind) {
        match kind {
            EventKind::Deliver { from, to, msg } => self.on_deliver(from, to, msg),
            EventKind::Arrival(a) => self.on_arrival(a),
            EventKind::Fault(f) => self.apply_fault(f),
            EventKind::SyncTick(c) => self.on_sync_tick(c),
            EventKind::FailoverActivate(c) => self.on_failover_activate(c),
            EventKind::Ctl(req, c) => self.on_ctl(req, c),
        }
    }

    fn on_deliver(&mut self, from: Actor, to: Actor, msg: Message) {
        // Faulted controllers drop everything until they come back.
        if let Actor::Ctrl(c) = to {
            if self.ctrl_down(c) {
                return;
            }
        }
        self.trace.push(TraceRecord::new(
            self.clock,
            self.actor_name(from),
            self.actor_name(to),
            msg.variant_name(),
            msg.request_id(),
            Self::plane_of(&to, &msg),
            Self::detail_of(&msg),
        ));
        self.delivered_messages += 1;
        match to {
            Actor::Ctrl(c) => self.ctrl_handle(c, msg),
            Actor::Agent(n) => self.agent_handle(n, from, msg),
            Actor::App(n) => self.app_handle(n, msg),
        }
    }

    // ---- workload -------------------------------------------------------

    fn on_arrival(&mut self, a: Arrival) {
        let req = RequestId(self.next_request);
        self.next_request += 1;
        if a.bits == 0 || a.src == a.dst {
            self.rejected.push((req, "InvalidRequest".into()));
            return;
        }
        let l1 = self.ctrl_of_node(a.src);
        self.send(
            Actor::App(a.src),
            Actor::Ctrl(l1),
            Message::KeyServiceRequest {
                app_src: a.src,
                app_dst: a.dst,
                bits: a.bits,
                request_id: req,
                issued_at: self.clock,
            },
        );
    }

    // ---- controller handlers ---------------------------------------------

    fn ctrl_handle(&mut self, c: ControllerId, msg: Message) {
        match msg {
            Message::KeyServiceRequest {
                app_src,
                app_dst,
                bits,
                request_id,
                issued_at,
            } => self.on_ksr(c, request_id, app_src, app_dst, bits, issued_at),
            Message::AvailabilityReply {
                request_id,
                node,
                ok,
                ..
            } => self.on_avail_reply(c, request_id, node, ok),
            Message::Escalate { request_id, .. } => self.on_escalate(c, request_id),
            Message::PeerCoordinate {
                request_id,
                proposal,
                proposal_freshness,
                ..
            } => self.on_peer_coordinate(c, request_id, proposal, proposal_freshness),
            Message::InterdomainRoute {
                request_id,
                backbone_path,
            } => self.on_interdomain_route(c, request_id, backbone_path),
            Message::ConnectionEnd { request_id } => self.on_connection_end(c, request_id),
            Message::StateSync { entries } => {
                if let Some(view) = self.views.get_mut(&c) {
                    view.merge(&entries);
                }
            }
            // Reservation messages document the arbitration; the outcome is
            // already decided by priority in the reservation book.
            Message::ReserveRequest { .. }
            | Message::ReserveGrant { .. }
            | Message::ReserveDeny { .. } => {}
            _ => {}
        }
    }

    fn on_ksr(
        &mut self,
        c: ControllerId,
        req: RequestId,
        src: NodeId,
        dst: NodeId,
        bits: u64,
        issued_at: SimTime,
    ) {
        let domain = self.controllers[&c].domain.expect("L1/peer owns a domain");
        let scope = match classify_request(&self.scenario.topology, domain, src, dst) {
            Ok(s) => s,
            Err(ControlError::UnknownNode(_)) => {
                self.rejected.push((req, "UnknownNode".into()));
                return;
            }
            Err(_) => unreachable!(),
        };
        self.sessions.insert(
            req,
            Session {
                request_id: req,
                src,
                dst,
                bits,
                issued_at,
                scope,
                coordinator: None,
                state: SessionState::Routing,
                phase: Phase::AwaitSrcAvail,
                backbone_path: Vec::new(),
                intradomain_paths: BTreeMap::new(),
                peer_proposal: None,
                routes_pending: 0,
                retried: false,
                rereserved: false,
                key: None,
                relay_hops: 0,
            },
        );
        self.send(
            Actor::Ctrl(c),
            Actor::Agent(src),
            Message::AvailabilityQuery {
                request_id: req,
                node: src,
            },
        );
    }

    fn on_avail_reply(&mut self, c: ControllerId, req: RequestId, node: NodeId, ok: bool) {
        let Some(session) = self.sessions.get(&req).cloned() else {
            return;
        };
        if matches!(session.state, SessionState::Failed(_)) {
            return;
        }
        if !ok {
            self.fail_session(req, "Unavailable", c);
            return;
        }
        if node == session.src {
            match session.scope {
                RequestScope::Local => self.start_local(c, req),
                RequestScope::Interdomain => match self.scenario.model {
                    ModelKind::Hierarchical => self.start_escalation(c, req),
                    ModelKind::Distributed => self.start_peer_coordination(c, req),
                },
            }
        } else {
            // Destination-side confirmation.
            match self.scenario.model {
                ModelKind::Hierarchical => {
                    let session = self.sessions.get_mut(&req).expect("session exists");
                    session.phase = Phase::AwaitRoutes;
                    let coordinator = session.coordinator.expect("escalated");
                    let hops = self
                        .hierarchy
                        .as_ref()
                        .expect("hierarchical run")
                        .depth_below(c, coordinator) as u64;
                    self.ctl(req, Ctl::AvailabilityConfirmed, hops.max(1));
                }
                ModelKind::Distributed => self.dist_negotiate(c, req),
            }
        }
    }

    // ---- local (single-domain) flow --------------------------------------

    fn start_local(&mut self, c: ControllerId, req: RequestId) {
        let session = self.sessions.get(&req).expect("session exists").clone();
        let domain = self.controllers[&c].domain.expect("L1 owns a domain");
        match self.intra_route(domain, session.src, session.dst, session.bits) {
            Ok(path) => {
                let s = self.sessions.get_mut(&req).expect("session exists");
                s.intradomain_paths.insert(domain, path.clone());
                s.state = SessionState::Establishing;
                s.phase = Phase::AwaitRoutes;
                s.routes_pending = 1;
                let src = s.src;
                self.send(
                    Actor::Ctrl(c),
                    Actor::Agent(src),
                    Message::IntradomainRouteSet {
                        request_id: req,
                        path,
                    },
                );
            }
            Err(_) => self.fail_session(req, "NoRoute", c),
        }
    }

    // ---- hierarchical flow ------------------------------------------------

    fn controller_chain(&self, req: RequestId) -> Vec<ControllerId> {
        let session = &self.sessions[&req];
        let src_l1 = self.ctrl_of_node(session.src);
        let dst_l1 = self.ctrl_of_node(session.dst);
        self.hierarchy
            .as_ref()
            .expect("hierarchical run")
            .tree_path(src_l1, dst_l1)
    }

    fn start_escalation(&mut self, c: ControllerId, req: RequestId) {
        let session = self.sessions.get(&req).expect("session exists");
        let dst_l1 = self.ctrl_of_node(session.dst);
        let coordinator = self
            .hierarchy
            .as_ref()
            .expect("hierarchical run")
            .lca(c, dst_l1);
        {
            let s = self.sessions.get_mut(&req).expect("session exists");
            s.coordinator = Some(coordinator);
            s.phase = Phase::Escalating;
        }
        self.escalate_hop(c, req);
    }

    /// Forward the request one hop along the controller tree toward the
    /// destination L1 (up to the coordinator, then down).
    fn escalate_hop(&mut self, at: ControllerId, req: RequestId) {
        let chain = self.controller_chain(req);
        let pos = chain
            .iter()
            .position(|&x| x == at)
            .expect("controller on chain");
        let next = chain[pos + 1];
        if self.ctrl_down(next) {
            if self.ctrl_unavailable(next) {
                self.fail_session(req, "CoordinatorUnavailable", at);
            } else {
                // Standby activation pending: park and retry once.
                let s = self.sessions.get_mut(&req).expect("session exists");
                if s.retried {
                    self.fail_session(req, "CoordinatorUnavailable", at);
                    return;
                }
                s.phase = Phase::WaitingFailover;
                self.waiting_failover.entry(next).or_default().push(req);
            }
            return;
        }
        let session = &self.sessions[&req];
        self.send(
            Actor::Ctrl(at),
            Actor::Ctrl(next),
            Message::Escalate {
                request_id: req,
                app_src: session.src,
                app_dst: session.dst,
                bits: session.bits,
                issued_at: session.issued_at,
            },
        );
    }

    fn on_escalate(&mut self, c: ControllerId, req: RequestId) {
        if !self.sessions.contains_key(&req) {
            return;
        }
        let dst_l1 = self.ctrl_of_node(self.sessions[&req].dst);
        if c == dst_l1 {
            let dst = self.sessions[&req].dst;
            let s = self.sessions.get_mut(&req).expect("session exists");
            s.phase = Phase::AwaitDstAvail;
            self.send(
                Actor::Ctrl(c),
                Actor::Agent(dst),
                Message::AvailabilityQuery {
                    request_id: req,
                    node: dst,
                },
            );
        } else {
            self.escalate_hop(c, req);
        }
    }

    /// Coordinator wakes once both sides confirmed: compute the backbone
    /// segment and order the route set-up down both chains.
    fn on_availability_confirmed(&mut self, req: RequestId) {
        let session = self.sessions.get(&req).expect("session exists").clone();
        let coordinator = session.coordinator.expect("escalated");
        if self.ctrl_down(coordinator) {
            return; // failover retry will re-drive the session
        }
        let src_dom = self.scenario.topology.domain_of(session.src);
        let dst_dom = self.scenario.topology.domain_of(session.dst);
        let backbone = match self.backbone_route(src_dom, dst_dom, session.bits) {
            Ok(p) => p,
            Err(_) => {
                self.fail_session(req, "NoRoute", coordinator);
                return;
            }
        };
        {
            let s = self.sessions.get_mut(&req).expect("session exists");
            s.backbone_path = backbone.clone();
            s.state = SessionState::Establishing;
            s.routes_pending = 2;
        }
        let src_l1 = self.ctrl_of_node(session.src);
        let dst_l1 = self.ctrl_of_node(session.dst);
        for l1 in [src_l1, dst_l1] {
            self.forward_route_down(coordinator, l1, req, backbone.clone());
        }
    }

    /// Send InterdomainRoute one hop down the tree toward `target_l1`.
    fn forward_route_down(
        &mut self,
        from: ControllerId,
        target_l1: ControllerId,
        req: RequestId,
        backbone_path: Vec<NodeId>,
    ) {
        let next = if from == target_l1 {
            target_l1
        } else {
            let chain = self
                .hierarchy
                .as_ref()
                .expect("hierarchical run")
                .tree_path(from, target_l1);
            chain[1]
        };
        self.send(
            Actor::Ctrl(from),
            Actor::Ctrl(next),
            Message::InterdomainRoute {
                request_id: req,
                backbone_path,
            },
        );
    }

    fn on_interdomain_route(
        &mut self,
        c: ControllerId,
        req: RequestId,
        backbone_path: Vec<NodeId>,
    ) {
        let Some(session) = self.sessions.get(&req).cloned() else {
            return;
        };
        if matches!(session.state, SessionState::Failed(_)) {
            return;
        }
        let my_domain = self.controllers[&c].domain;
        match my_domain {
            None => {
                // Transit L2: relay toward whichever endpoint L1 sits below us.
                let src_l1 = self.ctrl_of_node(session.src);
                let dst_l1 = self.ctrl_of_node(session.dst);
                let h = self.hierarchy.as_ref().expect("hierarchical run");
                let target = if h.root_path(src_l1).contains(&c) {
                    src_l1
                } else {
                    dst_l1
                };
                self.forward_route_down(c, target, req, backbone_path);
            }
            Some(domain) => {
                if self.scenario.model == ModelKind::Distributed {
                    self.sessions
                        .get_mut(&req)
                        .expect("session exists")
                        .backbone_path = backbone_path.clone();
                }
                // Endpoint L1: pick the intradomain segment to our border.
                // Segments are oriented src -> border and border -> dst so
                // they concatenate with the backbone into one relay path.
                let src_side = self.scenario.topology.domain_of(session.src) == domain;
                let (endpoint, border) = if src_side {
                    (session.src, backbone_path.first().copied())
                } else {
                    (session.dst, backbone_path.last().copied())
                };
                let Some(border) = border else {
                    self.fail_session(req, "NoRoute", c);
                    return;
                };
                let segment = if src_side {
                    self.intra_path_to_border(domain, endpoint, border, session.bits)
                } else {
                    self.intra_path_to_border_rev(domain, border, endpoint, session.bits)
                };
                match segment {
                    Ok(path) => {
                        {
                            let s = self.sessions.get_mut(&req).expect("session exists");
                            s.intradomain_paths.insert(domain, path.clone());
                        }
                        self.send(
                            Actor::Ctrl(c),
                            Actor::Agent(endpoint),
                            Message::IntradomainRouteSet {
                                request_id: req,
                                path,
                            },
                        );
                    }
                    Err(_) => self.fail_session(req, "NoRoute", c),
                }
            }
        }
    }

    // ---- distributed flow --------------------------------------------------

    fn start_peer_coordination(&mut self, c: ControllerId, req: RequestId) {
        let session = self.sessions.get(&req).expect("session exists").clone();
        let src_dom = self.scenario.topology.domain_of(session.src);
        let dst_dom = self.scenario.topology.domain_of(session.dst);
        let dst_ctrl = self.scenario.topology.controller_of_domain(dst_dom);
        if self.ctrl_down(dst_ctrl) {
            self.fail_session(req, "PeerUnavailable", c);
            return;
        }
        let proposal = self
            .backbone_route(src_dom, dst_dom, session.bits)
            .ok()
            .map(|p| (p, self.clock));
        {
            let s = self.sessions.get_mut(&req).expect("session exists");
            s.coordinator = Some(dst_ctrl);
            s.phase = Phase::AwaitDstAvail;
            s.peer_proposal = proposal.clone();
        }
        self.send(
            Actor::Ctrl(c),
            Actor::Ctrl(dst_ctrl),
            Message::PeerCoordinate {
                request_id: req,
                app_src: session.src,
                app_dst: session.dst,
                bits: session.bits,
                issued_at: session.issued_at,
                proposal: proposal.as_ref().map(|(p, _)| p.clone()),
                proposal_freshness: proposal.map(|(_, f)| f).unwrap_or(SimTime::ZERO),
            },
        );
    }

    fn on_peer_coordinate(
        &mut self,
        c: ControllerId,
        req: RequestId,
        proposal: Option<Vec<NodeId>>,
        freshness: SimTime,
    ) {
        let Some(session) = self.sessions.get_mut(&req) else {
            return;
        };
        session.peer_proposal = proposal.map(|p| (p, freshness));
        let dst = session.dst;
        self.send(
            Actor::Ctrl(c),
            Actor::Agent(dst),
            Message::AvailabilityQuery {
                request_id: req,
                node: dst,
            },
        );
    }

    /// Destination peer: negotiate the backbone segment, reserve it, then
    /// hand the agreed route back and set up the local segment.
    fn dist_negotiate(&mut self, c: ControllerId, req: RequestId) {
        let session = self.sessions.get(&req).expect("session exists").clone();
        let src_dom = self.scenario.topology.domain_of(session.src);
        let dst_dom = self.scenario.topology.domain_of(session.dst);
        let own = self
            .backbone_route(src_dom, dst_dom, session.bits)
            .ok()
            .map(|p| (p, self.clock));
        if session.peer_proposal.is_none() && own.is_none() {
            // Neither peer sees a feasible interdomain segment.
            self.fail_session(req, "NoRoute", c);
            return;
        }
        let agreed = match peer_negotiate(session.peer_proposal.clone(), own) {
            Ok(p) => p,
            Err(_) => {
                self.fail_session(req, "NegotiationFailed", c);
                return;
            }
        };
        {
            let s = self.sessions.get_mut(&req).expect("session exists");
            s.backbone_path = agreed.clone();
        }
        if !self.dist_reserve(c, req) {
            return;
        }
        self.dist_send_routes(c, req);
    }

    fn backbone_links_of(&self, path: &[NodeId]) -> BTreeSet<LinkId> {
        path.windows(2)
            .filter_map(|w| self.scenario.topology.link_between(w[0], w[1]))
            .collect()
    }

    /// Two-phase reservation against concurrent claims on shared backbone
    /// links. Returns false when the session was failed or re-routed away.
    fn dist_reserve(&mut self, c: ControllerId, req: RequestId) -> bool {
        let session = self.sessions.get(&req).expect("session exists").clone();
        let links = self.backbone_links_of(&session.backbone_path);
        let priority = (
            session.issued_at,
            self.scenario.topology.domain_of(session.src),
        );
        let conflicts = self.reservations.conflicting(req, &links);
        // Surface the arbitration on the wire when claims actually collide.
        for other in &conflicts {
            if let Some(origin) = self.sessions.get(other).map(|s| self.ctrl_of_node(s.src)) {
                if origin != c && !self.ctrl_down(origin) {
                    self.send(
                        Actor::Ctrl(c),
                        Actor::Ctrl(origin),
                        Message::ReserveRequest {
                            request_id: req,
                            links: links.iter().copied().collect(),
                            priority,
                        },
                    );
                }
            }
        }
        let now = self.clock;
        let granted_before: BTreeSet<RequestId> = self.reservations.granted().into_iter().collect();
        let state = {
            let fabric = &self.fabric;
            let capacity = move |l: LinkId| fabric.bits_available(l, now);
            self.reservations
                .reserve(req, links.clone(), session.bits, priority, &capacity)
        };
        // Anyone we preempted must re-route or fail.
        let granted_after: BTreeSet<RequestId> = self.reservations.granted().into_iter().collect();
        let preempted: Vec<RequestId> = granted_before
            .difference(&granted_after)
            .copied()
            .collect();
        for other in &conflicts {
            if let Some(origin) = self.sessions.get(other).map(|s| self.ctrl_of_node(s.src)) {
                if origin != c && !self.ctrl_down(origin) {
                    let reply = if preempted.contains(other) {
                        Message::ReserveDeny { request_id: *other }
                    } else {
                        Message::ReserveGrant { request_id: *other }
                    };
                    self.send(Actor::Ctrl(origin), Actor::Ctrl(c), reply);
                }
            }
        }
        for other in preempted {
            self.dist_handle_preemption(other);
        }
        match state {
            ReservationState::Granted => true,
            _ => self.dist_reroute_after_denial(c, req),
        }
    }

    /// Try once to route around links claimed by higher-priority grants.
    fn dist_reroute_after_denial(&mut self, c: ControllerId, req: RequestId) -> bool {
        let session = self.sessions.get(&req).expect("session exists").clone();
        if session.rereserved {
            self.reservations.release(req);
            self.fail_session(req, "ReservationDenied", c);
            return false;
        }
        self.sessions
            .get_mut(&req)
            .expect("session exists")
            .rereserved = true;
        let src_dom = self.scenario.topology.domain_of(session.src);
        let dst_dom = self.scenario.topology.domain_of(session.dst);
        let alt = self.backbone_route_reserved_aware(src_dom, dst_dom, session.bits, req);
        match alt {
            Ok(path) => {
                self.sessions
                    .get_mut(&req)
                    .expect("session exists")
                    .backbone_path = path;
                self.dist_reserve(c, req)
            }
            Err(_) => {
                self.reservations.release(req);
                self.fail_session(req, "ReservationDenied", c);
                false
            }
        }
    }

    fn dist_handle_preemption(&mut self, req: RequestId) {
        let Some(session) = self.sessions.get(&req).cloned() else {
            return;
        };
        if matches!(session.state, SessionState::Failed(_) | SessionState::Closed) {
            return;
        }
        let dst_ctrl = session.coordinator.unwrap_or_else(|| self.ctrl_of_node(session.dst));
        if self.dist_reroute_after_denial(dst_ctrl, req) {
            self.dist_send_routes(dst_ctrl, req);
        }
    }

    fn dist_send_routes(&mut self, c: ControllerId, req: RequestId) {
        let session = self.sessions.get(&req).expect("session exists").clone();
        let dst_dom = self.scenario.topology.domain_of(session.dst);
        let src_ctrl = self.ctrl_of_node(session.src);
        let border = *session.backbone_path.last().expect("non-empty backbone");
        let dst_path = match self.intra_path_to_border_rev(dst_dom, border, session.dst, session.bits)
        {
            Ok(p) => p,
            Err(_) => {
                self.reservations.release(req);
                self.fail_session(req, "NoRoute", c);
                return;
            }
        };
        {
            let s = self.sessions.get_mut(&req).expect("session exists");
            s.intradomain_paths.insert(dst_dom, dst_path.clone());
            s.state = SessionState::Establishing;
            s.phase = Phase::AwaitRoutes;
            s.routes_pending = 2;
        }
        self.send(
            Actor::Ctrl(c),
            Actor::Ctrl(src_ctrl),
            Message::InterdomainRoute {
                request_id: req,
                backbone_path: session.backbone_path.clone(),
            },
        );
        self.send(
            Actor::Ctrl(c),
            Actor::Agent(session.dst),
            Message::IntradomainRouteSet {
                request_id: req,
                path: dst_path,
            },
        );
    }

    fn on_connection_end(&mut self, c: ControllerId, req: RequestId) {
        let Some(session) = self.sessions.get(&req).cloned() else {
            return;
        };
        match self.scenario.model {
            ModelKind::Distributed => {
                let src_ctrl = self.ctrl_of_node(session.src);
                let dst_ctrl = self.ctrl_of_node(session.dst);
                if c == dst_ctrl {
                    // Agree the teardown, then provide the key to our app.
                    self.send(
                        Actor::Ctrl(c),
                        Actor::Ctrl(src_ctrl),
                        Message::ConnectionEnd { request_id: req },
                    );
                    self.send(
                        Actor::Ctrl(c),
                        Actor::App(session.dst),
                        Message::KeyReady {
                            request_id: req,
                            key_id: session.key.expect("delivered"),
                            bits: session.bits,
                        },
                    );
                } else if c == src_ctrl {
                    self.send(
                        Actor::Ctrl(c),
                        Actor::App(session.src),
                        Message::KeyReady {
                            request_id: req,
                            key_id: session.key.expect("delivered"),
                            bits: session.bits,
                        },
                    );
                    let s = self.sessions.get_mut(&req).expect("session exists");
                    let _ = s_close(s);
                }
            }
            ModelKind::Hierarchical => {
                let dst_l1 = self.ctrl_of_node(session.dst);
                if c == dst_l1 {
                    let s = self.sessions.get_mut(&req).expect("session exists");
                    let _ = s_close(s);
                } else {
                    // Forward one hop along the teardown chain.
                    let chain = self.controller_chain(req);
                    let pos = chain.iter().position(|&x| x == c).expect("on chain");
                    let next = chain[pos + 1];
                    self.send(
                        Actor::Ctrl(c),
                        Actor::Ctrl(next),
                        Message::ConnectionEnd { request_id: req },
                    );
                }
            }
        }
    }

    // ---- agents and apps ---------------------------------------------------

    fn agent_handle(&mut self, n: NodeId, from: Actor, msg: Message) {
        match msg {
            Message::AvailabilityQuery { request_id, node } => {
                let reachable = self.agent_reachable(n);
                let (ok, bits) = availability_of(
                    &self.scenario.topology,
                    &self.fabric,
                    node,
                    self.clock,
                    reachable,
                );
                let reply_to = match from {
                    Actor::Ctrl(c) => c,
                    _ => self.ctrl_of_node(n),
                };
                self.send(
                    Actor::Agent(n),
                    Actor::Ctrl(reply_to),
                    Message::AvailabilityReply {
                        request_id,
                        node,
                        ok,
                        bits_available: bits,
                    },
                );
            }
            Message::IntradomainRouteSet { request_id, .. } => {
                self.ctl(request_id, Ctl::RoutesInstalled, 0);
            }
            _ => {}
        }
    }

    fn app_handle(&mut self, n: NodeId, msg: Message) {
        if let Message::KeyReady { request_id, .. } = msg {
            if self.scenario.model == ModelKind::Hierarchical {
                let Some(session) = self.sessions.get(&request_id) else {
                    return;
                };
                if session.src == n && session.scope == RequestScope::Interdomain {
                    self.ctl(request_id, Ctl::EndNotice, 1);
                }
            }
        }
    }

    // ---- internal continuations ---------------------------------------------

    fn on_ctl(&mut self, req: RequestId, c: Ctl) {
        if !self.sessions.contains_key(&req) {
            return;
        }
        match c {
            Ctl::AvailabilityConfirmed => self.on_availability_confirmed(req),
            Ctl::RoutesInstalled => {
                let s = self.sessions.get_mut(&req).expect("session exists");
                if matches!(s.state, SessionState::Failed(_)) {
                    return;
                }
                s.routes_pending = s.routes_pending.saturating_sub(1);
                if s.routes_pending == 0 && s.phase == Phase::AwaitRoutes {
                    self.perform_delivery(req);
                }
            }
            Ctl::EndNotice => {
                let session = self.sessions.get(&req).expect("session exists").clone();
                if session.phase != Phase::Teardown {
                    return;
                }
                let src_l1 = self.ctrl_of_node(session.src);
                let chain = self.controller_chain(req);
                self.send(
                    Actor::Ctrl(src_l1),
                    Actor::Ctrl(chain[1]),
                    Message::ConnectionEnd { request_id: req },
                );
            }
            Ctl::Retry => {
                let src = {
                    let session = self.sessions.get_mut(&req).expect("session exists");
                    if session.retried || session.phase != Phase::WaitingFailover {
                        return;
                    }
                    session.retried = true;
                    session.phase = Phase::Escalating;
                    session.src
                };
                let src_l1 = self.ctrl_of_node(src);
                self.escalate_hop(src_l1, req);
            }
        }
    }

    /// All route segments installed: run the trusted-node relay on the data
    /// plane and notify the application plane.
    fn perform_delivery(&mut self, req: RequestId) {
        let session = self.sessions.get(&req).expect("session exists").clone();
        let path = match self.full_path(&session) {
            Some(p) => p,
            None => {
                self.fail_session(req, "NoRoute", self.ctrl_of_node(session.src));
                return;
            }
        };
        // A segment may have faulted since route computation; recompute once.
        let path = if self.path_feasible(&path, session.bits) {
            path
        } else {
            match self.recompute_path(&session) {
                Some(p) => p,
                None => {
                    self.fail_session(req, "NoRoute", self.ctrl_of_node(session.src));
                    return;
                }
            }
        };
        match self.fabric.deliver_end_to_end(
            &self.scenario.topology,
            &path,
            session.bits,
            req,
            self.clock,
        ) {
            Ok(block) => {
                self.reservations.mark_consumed(req);
                {
                    let s = self.sessions.get_mut(&req).expect("session exists");
                    s.key = Some(block.key_id);
                    s.relay_hops = (path.len() - 1) as u32;
                    s.state = SessionState::Delivering;
                    s.phase = Phase::Teardown;
                }
                self.trace.push(TraceRecord::new(
                    self.clock,
                    self.actor_name(Actor::Agent(session.src)),
                    self.actor_name(Actor::Agent(session.dst)),
                    "KeyRelay",
                    Some(req),
                    Plane::DP,
                    Self::detail_of(&Message::KeyRelay {
                        request_id: req,
                        key_id: block.key_id,
                        path: path.clone(),
                        bits: session.bits,
                    }),
                ));
                self.after_delivery(req, block.key_id);
            }
            Err(_) => {
                self.reservations.release(req);
                self.fail_session(req, "KeyDepleted", self.ctrl_of_node(session.src));
            }
        }
    }

    fn after_delivery(&mut self, req: RequestId, key: KeyId) {
        let session = self.sessions.get(&req).expect("session exists").clone();
        match (self.scenario.model, session.scope) {
            (_, RequestScope::Local) => {
                let l1 = self.ctrl_of_node(session.src);
                for app in [session.src, session.dst] {
                    self.send(
                        Actor::Ctrl(l1),
                        Actor::App(app),
                        Message::KeyReady {
                            request_id: req,
                            key_id: key,
                            bits: session.bits,
                        },
                    );
                }
                let s = self.sessions.get_mut(&req).expect("session exists");
                let _ = s_close(s);
            }
            (ModelKind::Hierarchical, RequestScope::Interdomain) => {
                let src_l1 = self.ctrl_of_node(session.src);
                let dst_l1 = self.ctrl_of_node(session.dst);
                self.send(
                    Actor::Ctrl(src_l1),
                    Actor::App(session.src),
                    Message::KeyReady {
                        request_id: req,
                        key_id: key,
                        bits: session.bits,
                    },
                );
                self.send(
                    Actor::Ctrl(dst_l1),
                    Actor::App(session.dst),
                    Message::KeyReady {
                        request_id: req,
                        key_id: key,
                        bits: session.bits,
                    },
                );
            }
            (ModelKind::Distributed, RequestScope::Interdomain) => {
                // End-of-connection agreement precedes key provision.
                let src_ctrl = self.ctrl_of_node(session.src);
                let dst_ctrl = self.ctrl_of_node(session.dst);
                self.send(
                    Actor::Ctrl(src_ctrl),
                    Actor::Ctrl(dst_ctrl),
                    Message::ConnectionEnd { request_id: req },
                );
            }
        }
    }

    fn fail_session(&mut self, req: RequestId, code: &str, reporting_ctrl: ControllerId) {
        let Some(session) = self.sessions.get_mut(&req) else {
            return;
        };
        if matches!(session.state, SessionState::Failed(_) | SessionState::Closed) {
            return;
        }
        session.state = SessionState::Failed(code.to_string());
        session.phase = Phase::Done;
        let src = session.src;
        self.reservations.release(req);
        let from = if self.ctrl_down(reporting_ctrl) {
            Actor::Ctrl(self.ctrl_of_node(src))
        } else {
            Actor::Ctrl(reporting_ctrl)
        };
        self.send(
            from,
            Actor::App(src),
            Message::Error {
                request_id: req,
                code: code.to_string(),
            },
        );
    }

    // ---- routing helpers ------------------------------------------------------

    fn kms_ok(&self) -> impl Fn(NodeId) -> bool + '_ {
        |n| self.scenario.topology.nodes[&n].has_kms
    }

    fn intra_route(
        &self,
        domain: DomainId,
        src: NodeId,
        dst: NodeId,
        bits: u64,
    ) -> Result<Vec<NodeId>, ControlError> {
        let d = self.scenario.topology.domain(domain).expect("domain");
        let graph = feasible_graph(
            &self.scenario.topology,
            &self.fabric,
            d.links.iter().copied(),
            bits,
            self.clock,
            &BTreeSet::new(),
        );
        compute_route(&graph, src, dst, self.kms_ok())
    }

    fn intra_path_to_border(
        &self,
        domain: DomainId,
        endpoint: NodeId,
        border: NodeId,
        bits: u64,
    ) -> Result<Vec<NodeId>, ControlError> {
        if endpoint == border {
            return Ok(vec![endpoint]);
        }
        self.intra_route(domain, endpoint, border, bits)
    }

    fn intra_path_to_border_rev(
        &self,
        domain: DomainId,
        border: NodeId,
        endpoint: NodeId,
        bits: u64,
    ) -> Result<Vec<NodeId>, ControlError> {
        if endpoint == border {
            return Ok(vec![endpoint]);
        }
        self.intra_route(domain, border, endpoint, bits)
    }

    /// Minimum-hop feasible path over backbone links between any border pair
    /// of the two domains; ties broken by (length, lexicographic path).
    fn backbone_route(
        &self,
        src_dom: DomainId,
        dst_dom: DomainId,
        bits: u64,
    ) -> Result<Vec<NodeId>, ControlError> {
        let now = self.clock;
        let fabric = &self.fabric;
        self.backbone_route_with(src_dom, dst_dom, move |l| fabric.bits_available(l, now) >= bits)
    }

    /// Backbone routing that also discounts other sessions' unconsumed grants.
    fn backbone_route_reserved_aware(
        &self,
        src_dom: DomainId,
        dst_dom: DomainId,
        bits: u64,
        me: RequestId,
    ) -> Result<Vec<NodeId>, ControlError> {
        let now = self.clock;
        let fabric = &self.fabric;
        let book = &self.reservations;
        self.backbone_route_with(src_dom, dst_dom, move |l| {
            let mut avail = fabric.bits_available(l, now);
            for other in book.granted() {
                if other == me {
                    continue;
                }
                let r = book.get(other).expect("granted implies present");
                if !r.consumed && r.links.contains(&l) {
                    avail = avail.saturating_sub(r.bits);
                }
            }
            avail >= bits
        })
    }

    fn backbone_route_with(
        &self,
        src_dom: DomainId,
        dst_dom: DomainId,
        capacity_ok: impl Fn(LinkId) -> bool,
    ) -> Result<Vec<NodeId>, ControlError> {
        let topo = &self.scenario.topology;
        // The interdomain segment runs border to border but may transit the
        // interior of third domains, so all feasible links participate.
        let mut graph = crate::control::RouteGraph::default();
        for link in topo.links.values() {
            if !self.fabric.link_up(link.id) || !link.in_window(self.clock) || !capacity_ok(link.id)
            {
                continue;
            }
            graph.add_edge(link.endpoints.0, link.endpoints.1);
        }
        let mut best: Option<Vec<NodeId>> = None;
        for bs in topo.border_nodes(src_dom) {
            for bd in topo.border_nodes(dst_dom) {
                if let Ok(p) = compute_route(&graph, bs, bd, self.kms_ok()) {
                    let better = match &best {
                        None => true,
                        Some(cur) => p.len() < cur.len() || (p.len() == cur.len() && p < *cur),
                    };
                    if better {
                        best = Some(p);
                    }
                }
            }
        }
        best.ok_or(ControlError::NoRoute(
            NodeId(u32::MAX),
            NodeId(u32::MAX),
        ))
    }

    fn full_path(&self, session: &Session) -> Option<Vec<NodeId>> {
        if session.scope == RequestScope::Local {
            let domain = self.scenario.topology.domain_of(session.src);
            return session.intradomain_paths.get(&domain).cloned();
        }
        let src_dom = self.scenario.topology.domain_of(session.src);
        let dst_dom = self.scenario.topology.domain_of(session.dst);
        let src_seg = session.intradomain_paths.get(&src_dom)?;
        let dst_seg = session.intradomain_paths.get(&dst_dom)?;
        let backbone = &session.backbone_path;
        if backbone.is_empty() {
            return None;
        }
        let mut path = src_seg.clone();
        if path.last() != backbone.first() {
            return None;
        }
        path.extend_from_slice(&backbone[1..]);
        if path.last() != dst_seg.first() {
            return None;
        }
        path.extend_from_slice(&dst_seg[1..]);
        Some(path)
    }

    fn path_feasible(&self, path: &[NodeId], bits: u64) -> bool {
        path.windows(2).all(|w| {
            match self.scenario.topology.link_between(w[0], w[1]) {
                Some(lid) => {
                    let link = &self.scenario.topology.links[&lid];
                    self.fabric.link_up(lid)
                        && link.in_window(self.clock)
                        && self.fabric.bits_available(lid, self.clock) >= bits
                }
                None => false,
            }
        })
    }

    /// Re-route all segments around failed entities (routes reorganize to
    /// avoid the damaged segment when an alternative exists).
    fn recompute_path(&self, session: &Session) -> Option<Vec<NodeId>> {
        if session.scope == RequestScope::Local {
            let domain = self.scenario.topology.domain_of(session.src);
            return self
                .intra_route(domain, session.src, session.dst, session.bits)
                .ok();
        }
        let src_dom = self.scenario.topology.domain_of(session.src);
        let dst_dom = self.scenario.topology.domain_of(session.dst);
        let backbone = self.backbone_route(src_dom, dst_dom, session.bits).ok()?;
        let src_seg = self
            .intra_path_to_border(src_dom, session.src, *backbone.first()?, session.bits)
            .ok()?;
        let dst_seg = self
            .intra_path_to_border_rev(dst_dom, *backbone.last()?, session.dst, session.bits)
            .ok()?;
        let mut path = src_seg;
        path.extend_from_slice(&backbone[1..]);
        path.extend_from_slice(&dst_seg[1..]);
        Some(path)
    }

    // ---- faults and synchronization -----------------------------------------

    fn apply_fault(&mut self, entry: FaultEntry) {
        match (entry.action, entry.target) {
            (FaultAction::ControllerDown, FaultTarget::Controller(c)) => {
                let heartbeat = self.scenario.heartbeat;
                let st = self.controllers.get_mut(&c).expect("known controller");
                st.down = true;
                if st.standby.is_some() && !st.standby_active {
                    st.failover_pending = true;
                    // Detection via missed heartbeats: 3 periods.
                    let at = self.clock + SimTime(heartbeat.0 * 3);
                    self.push(at, EventKind::FailoverActivate(c));
                }
            }
            (FaultAction::ControllerUp, FaultTarget::Controller(c)) => {
                let st = self.controllers.get_mut(&c).expect("known controller");
                st.down = false;
                st.failover_pending = false;
            }
            (FaultAction::LinkDown, FaultTarget::Link(l)) => {
                self.fabric.set_link_up(l, false, self.clock);
                self.broadcast_link_change(l);
            }
            (FaultAction::LinkUp, FaultTarget::Link(l)) => {
                self.fabric.set_link_up(l, true, self.clock);
                self.broadcast_link_change(l);
            }
            (FaultAction::DomainIsolate, FaultTarget::Domain(d)) => {
                self.isolated.insert(d);
                let mut taken = Vec::new();
                let links: Vec<LinkId> = self
                    .scenario
                    .topology
                    .links
                    .values()
                    .filter(|l| {
                        self.scenario.topology.domain_of(l.endpoints.0) == d
                            || self.scenario.topology.domain_of(l.endpoints.1) == d
                    })
                    .map(|l| l.id)
                    .collect();
                for lid in links {
                    if self.fabric.link_up(lid) {
                        self.fabric.set_link_up(lid, false, self.clock);
                        taken.push(lid);
                    }
                }
                self.isolation_links.insert(d, taken);
            }
            (FaultAction::DomainRestore, FaultTarget::Domain(d)) => {
                self.isolated.remove(&d);
                for lid in self.isolation_links.remove(&d).unwrap_or_default() {
                    self.fabric.set_link_up(lid, true, self.clock);
                }
            }
            _ => { /* mismatched action/target pairs are loader-rejected */ }
        }
    }

    fn on_failover_activate(&mut self, c: ControllerId) {
        let st = self.controllers.get_mut(&c).expect("known controller");
        if !st.down || !st.failover_pending {
            return; // primary recovered first; standby never activates
        }
        // The standby adopts the primary's identity and view.
        st.down = false;
        st.standby_active = true;
        st.failover_pending = false;
        for req in self.waiting_failover.remove(&c).unwrap_or_default() {
            self.ctl(req, Ctl::Retry, 1);
        }
    }

    /// Immediate state dissemination on link transitions (event-driven
    /// refresh); periodic sync covers anything missed.
    fn broadcast_link_change(&mut self, l: LinkId) {
        let now = self.clock;
        let st = LinkState {
            up: self.fabric.link_up(l),
            bits_available: self.fabric.bits_available(l, now),
            last_updated: now,
        };
        for view in self.views.values_mut() {
            view.apply_state_update(l, st);
        }
        if self.scenario.model == ModelKind::Distributed {
            let owners: BTreeSet<ControllerId> = {
                let link = &self.scenario.topology.links[&l];
                [link.endpoints.0, link.endpoints.1]
                    .iter()
                    .map(|n| self.ctrl_of_node(*n))
                    .collect()
            };
            for c in owners {
                if !self.ctrl_down(c) {
                    self.gossip_from(c);
                }
            }
        }
    }

    fn domain_snapshot(&self, c: ControllerId) -> BTreeMap<LinkId, LinkState> {
        let mut entries = BTreeMap::new();
        let Some(d) = self.controllers[&c].domain else {
            // Upper-tier controllers sync their whole merged view upward.
            return self.views[&c]
                .link_states
                .iter()
                .map(|(k, v)| (*k, *v))
                .collect();
        };
        let topo = &self.scenario.topology;
        let mut links: BTreeSet<LinkId> = topo.domain(d).expect("domain").links.clone();
        for lid in &topo.backbone_links {
            let l = &topo.links[lid];
            if topo.domain_of(l.endpoints.0) == d || topo.domain_of(l.endpoints.1) == d {
                links.insert(*lid);
            }
        }
        for lid in links {
            entries.insert(
                lid,
                LinkState {
                    up: self.fabric.link_up(lid),
                    bits_available: self.fabric.bits_available(lid, self.clock),
                    last_updated: self.clock,
                },
            );
        }
        entries
    }

    fn gossip_from(&mut self, c: ControllerId) {
        let entries = self.domain_snapshot(c);
        if let Some(view) = self.views.get_mut(&c) {
            view.merge(&entries);
        }
        let peers = self
            .peers
            .as_ref()
            .map(|p| p.others(c))
            .unwrap_or_default();
        for peer in peers {
            if self.ctrl_down(peer) {
                continue; // skipped; the periodic tick retries
            }
            self.send(
                Actor::Ctrl(c),
                Actor::Ctrl(peer),
                Message::StateSync {
                    entries: entries.clone(),
                },
            );
        }
    }

    fn on_sync_tick(&mut self, c: ControllerId) {
        let period = self.scenario.sync_period;
        let next = self.clock + period;
        if next <= self.scenario.duration {
            self.push(next, EventKind::SyncTick(c));
        }
        if self.ctrl_down(c) {
            return;
        }
        match self.scenario.model {
            ModelKind::Distributed => self.gossip_from(c),
            ModelKind::Hierarchical => {
                let entries = self.domain_snapshot(c);
                if let Some(view) = self.views.get_mut(&c) {
                    view.merge(&entries);
                }
                let parent = match self.controllers[&c].role {
                    ControllerRole::L1 { parent } | ControllerRole::L2 { parent } => parent,
                    _ => return,
                };
                if !self.ctrl_down(parent) {
                    self.send(Actor::Ctrl(c), Actor::Ctrl(parent), Message::StateSync { entries });
                }
            }
        }
    }
}

fn s_close(s: &mut Session) -> Result<(), ()> {
    if matches!(s.state, SessionState::Delivering) {
        s.state = SessionState::Closed;
        s.phase = Phase::Done;
        Ok(())
    } else {
        Err(())
    }
}

/// Run a resolved scenario to completion. Identical (scenario, seed) inputs
/// produce identical traces.
pub fn run_scenario(scenario: Scenario) -> RunOutput {
    Engine::new(scenario).run_to_end()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::LinkId;
    use crate::scenario::{parse_str, resolve};

    const MINIMAL: &str = r#"
        model = "distributed"
        seed = 1

        [[domains]]
        id = 1
        kind = "bus"
        n = 2

        [[domains]]
        id = 2
        kind = "bus"
        n = 2

        [[backbone]]
        a = [1, 0]
        b = [2, 0]
        medium = "fiber"
        length_km = 10.0
    "#;

    fn engine() -> Engine {
        Engine::new(resolve(&parse_str(MINIMAL).unwrap()).unwrap())
    }

    #[test]
    fn run_until_without_work_advances_the_clock_only() {
        let mut e = engine();
        e.queue.clear(); // drop periodic sync ticks; nothing else is pending
        e.run_until(SimTime::from_secs_f64(100.0)).unwrap();
        assert_eq!(e.clock(), SimTime::from_secs_f64(100.0));
        assert!(e.trace.is_empty());
    }

    #[test]
    fn run_until_rejects_times_in_the_past() {
        let mut e = engine();
        e.run_until(SimTime::from_secs_f64(10.0)).unwrap();
        assert_eq!(
            e.run_until(SimTime::from_secs_f64(5.0)),
            Err(EngineError::SchedulingError {
                at: SimTime::from_secs_f64(5.0),
                clock: SimTime::from_secs_f64(10.0),
            })
        );
    }

    #[test]
    fn same_time_events_apply_in_insertion_order() {
        let lid = *engine().scenario.topology.backbone_links.iter().next().unwrap();
        let fault = |action, at| FaultEntry {
            at: SimTime::from_secs_f64(at),
            action,
            target: FaultTarget::Link(lid),
        };
        // Down then up at the same instant: the link ends up.
        let mut e = engine();
        e.schedule_fault(fault(FaultAction::LinkDown, 5.0)).unwrap();
        e.schedule_fault(fault(FaultAction::LinkUp, 5.0)).unwrap();
        e.run_until(SimTime::from_secs_f64(6.0)).unwrap();
        assert!(e.fabric.link_up(lid));
        // Reversed insertion order: the link ends down.
        let mut e = engine();
        e.schedule_fault(fault(FaultAction::LinkUp, 5.0)).unwrap();
        e.schedule_fault(fault(FaultAction::LinkDown, 5.0)).unwrap();
        e.run_until(SimTime::from_secs_f64(6.0)).unwrap();
        assert!(!e.fabric.link_up(lid));
    }

    #[test]
    fn schedule_fault_rejects_past_times_and_unknown_targets() {
        let mut e = engine();
        e.run_until(SimTime::from_secs_f64(10.0)).unwrap();
        let past = FaultEntry {
            at: SimTime::from_secs_f64(1.0),
            action: FaultAction::LinkDown,
            target: FaultTarget::Link(*e.scenario.topology.backbone_links.iter().next().unwrap()),
        };
        assert!(matches!(
            e.schedule_fault(past),
            Err(EngineError::SchedulingError { .. })
        ));
        let unknown = FaultEntry {
            at: SimTime::from_secs_f64(20.0),
            action: FaultAction::LinkDown,
            target: FaultTarget::Link(LinkId(9999)),
        };
        assert_eq!(e.schedule_fault(unknown), Err(EngineError::UnknownEntity));
    }
}
