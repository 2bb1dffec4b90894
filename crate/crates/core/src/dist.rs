//! Distributed integration model: peer tables over the EWBI, route
//! negotiation, and priority-based reservation arbitration for concurrent
//! key requests on shared backbone links.

use crate::ids::{ControllerId, DomainId, LinkId, NodeId, RequestId};
use crate::net::Topology;
use crate::time::SimTime;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Peer controllers and the EWBI edges between them; mirrors the domain
/// quotient graph.
#[derive(Debug, Clone, Default)]
pub struct PeerTable {
    pub peers: BTreeMap<ControllerId, DomainId>,
    pub ewbi_links: BTreeSet<(ControllerId, ControllerId)>,
}

impl PeerTable {
    pub fn from_topology(topo: &Topology) -> Self {
        let mut table = PeerTable::default();
        for d in &topo.domains {
            table.peers.insert(d.controller, d.id);
        }
        for lid in &topo.backbone_links {
            let link = &topo.links[lid];
            let ca = topo.controller_of_domain(topo.domain_of(link.endpoints.0));
            let cb = topo.controller_of_domain(topo.domain_of(link.endpoints.1));
            let edge = if ca < cb { (ca, cb) } else { (cb, ca) };
            table.ewbi_links.insert(edge);
        }
        table
    }

    pub fn others(&self, me: ControllerId) -> Vec<ControllerId> {
        self.peers.keys().copied().filter(|&c| c != me).collect()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("route negotiation failed: no feasible proposal on either view")]
    NegotiationFailed,
}

/// Pick the agreed backbone path from the two peers' proposals. Equal
/// proposals agree immediately; otherwise the proposal computed on the
/// fresher view wins, with the initiator winning ties.
pub fn peer_negotiate(
    src_proposal: Option<(Vec<NodeId>, SimTime)>,
    dst_proposal: Option<(Vec<NodeId>, SimTime)>,
) -> Result<Vec<NodeId>, DistError> {
    match (src_proposal, dst_proposal) {
        (None, None) => Err(DistError::NegotiationFailed),
        (Some((p, _)), None) | (None, Some((p, _))) => Ok(p),
        (Some((ps, fs)), Some((pd, fd))) => {
            if ps == pd || fs >= fd {
                Ok(ps)
            } else {
                Ok(pd)
            }
        }
    }
}

/// Static priority: earlier issue time wins, ties go to the smaller origin
/// domain id. Total order.
pub type Priority = (SimTime, DomainId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReservationState {
    Pending,
    Granted,
    Denied,
    Released,
}

/// A claim on backbone link capacity for one request. Buffer decrements are
/// applied only at relay time; until then a grant can be preempted by a
/// higher-priority conflicting claim.
#[derive(Debug, Clone)]
pub struct Reservation {
    pub request_id: RequestId,
    pub links: BTreeSet<LinkId>,
    pub bits: u64,
    pub priority: Priority,
    pub state: ReservationState,
    /// Set once the relay consumed the bits; consumed grants are immutable.
    pub consumed: bool,
}

/// Arbitrates all outstanding reservations. The grant set is recomputed on
/// every arrival so the outcome depends on priorities only, never on message
/// interleaving.
#[derive(Debug, Clone, Default)]
pub struct ReservationBook {
    reservations: BTreeMap<RequestId, Reservation>,
}

impl ReservationBook {
    pub fn get(&self, id: RequestId) -> Option<&Reservation> {
        self.reservations.get(&id)
    }

    /// Requests whose active reservations intersect `links`, excluding `me`.
    pub fn conflicting(&self, me: RequestId, links: &BTreeSet<LinkId>) -> Vec<RequestId> {
        self.reservations
            .values()
            .filter(|r| {
                r.request_id != me
                    && !matches!(r.state, ReservationState::Released | ReservationState::Denied)
                    && !r.links.is_disjoint(links)
            })
            .map(|r| r.request_id)
            .collect()
    }

    /// Insert (or replace) a reservation and re-arbitrate. Returns the state
    /// assigned to `id`.
    pub fn reserve(
        &mut self,
        id: RequestId,
        links: BTreeSet<LinkId>,
        bits: u64,
        priority: Priority,
        capacity: &dyn Fn(LinkId) -> u64,
    ) -> ReservationState {
        self.reservations.insert(
            id,
            Reservation {
                request_id: id,
                links,
                bits,
                priority,
                state: ReservationState::Pending,
                consumed: false,
            },
        );
        self.arbitrate(capacity);
        self.reservations[&id].state
    }

    pub fn mark_consumed(&mut self, id: RequestId) {
        if let Some(r) = self.reservations.get_mut(&id) {
            r.consumed = true;
        }
    }

    pub fn release(&mut self, id: RequestId) {
        if let Some(r) = self.reservations.get_mut(&id) {
            r.state = ReservationState::Released;
        }
    }

    /// Recompute grant/deny for all unconsumed reservations. Consumed grants
    /// are charged against capacity first; the rest are walked in priority
    /// order and granted greedily while every claimed link still fits.
    pub fn arbitrate(&mut self, capacity: &dyn Fn(LinkId) -> u64) {
        let mut remaining: BTreeMap<LinkId, u64> = BTreeMap::new();
        let all_links: BTreeSet<LinkId> = self
            .reservations
            .values()
            .flat_map(|r| r.links.iter().copied())
            .collect();
        for lid in all_links {
            remaining.insert(lid, capacity(lid));
        }
        let mut order: Vec<RequestId> = self
            .reservations
            .values()
            .filter(|r| r.state != ReservationState::Released)
            .map(|r| r.request_id)
            .collect();
        order.sort_by_key(|id| (self.reservations[id].priority, *id));
        // Consumed grants already hit the buffers; capacity() reflects that.
        for id in order {
            let res = self.reservations.get_mut(&id).expect("present");
            if res.consumed {
                continue;
            }
            let fits = res
                .links
                .iter()
                .all(|l| remaining.get(l).copied().unwrap_or(0) >= res.bits);
            if fits {
                for l in &res.links {
                    *remaining.get_mut(l).expect("seeded") -= res.bits;
                }
                res.state = ReservationState::Granted;
            } else {
                res.state = ReservationState::Denied;
            }
        }
    }

    pub fn granted(&self) -> Vec<RequestId> {
        self.reservations
            .values()
            .filter(|r| r.state == ReservationState::Granted)
            .map(|r| r.request_id)
            .collect()
    }
}
