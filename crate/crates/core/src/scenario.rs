//! Declarative scenario files (TOML): topology, rates, latency, controller
//! layout, workload, faults. Loading resolves everything into a [`Scenario`]
//! the engine can run directly.

use crate::control::ControllerRole;
use crate::ids::{ControllerId, DomainId, LinkId, NodeId};
use crate::net::{
    self, build_topology, compose, BackboneSpec, IdAllocator, Medium, Topology, TopologyKind,
    DEFAULT_ALPHA_DB_PER_KM,
};
use crate::qkd::{RateModel, DEFAULT_MAX_LOSS_DB};
use crate::time::SimTime;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Hierarchical,
    Distributed,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Hierarchical => write!(f, "hierarchical"),
            ModelKind::Distributed => write!(f, "distributed"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scenario io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("topology error: {0}")]
    Topology(#[from] net::TopologyError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn default_link_km() -> f64 {
    10.0
}
fn default_true() -> bool {
    true
}
fn default_heartbeat() -> f64 {
    5.0
}
fn default_sync_period() -> f64 {
    10.0
}
fn default_base_ms() -> f64 {
    5.0
}
fn default_per_km_ms() -> f64 {
    0.005
}
fn default_duration() -> f64 {
    60.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    /// Zero-loss secret key rate; defaults to the 45 km / 81.7 kbps anchor.
    pub r0_bps: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha_db_per_km: f64,
    #[serde(default = "default_max_loss")]
    pub max_loss_db: f64,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA_DB_PER_KM
}
fn default_max_loss() -> f64 {
    DEFAULT_MAX_LOSS_DB
}

impl Default for RateSection {
    fn default() -> Self {
        RateSection {
            r0_bps: None,
            alpha_db_per_km: default_alpha(),
            max_loss_db: default_max_loss(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencySection {
    #[serde(default = "default_base_ms")]
    pub base_ms: f64,
    #[serde(default = "default_per_km_ms")]
    pub per_km_ms: f64,
}

impl Default for LatencySection {
    fn default() -> Self {
        LatencySection {
            base_ms: default_base_ms(),
            per_km_ms: default_per_km_ms(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub id: u32,
    pub kind: TopologyKind,
    pub n: u32,
    #[serde(default = "default_link_km")]
    pub link_km: f64,
}

/// `[domain_id, local_node_index]` in generation order.
pub type NodeRef = [u32; 2];

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowRepeat {
    #[serde(default)]
    pub offset_s: f64,
    pub duration_s: f64,
    pub period_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneSection {
    pub a: NodeRef,
    pub b: NodeRef,
    pub medium: Medium,
    pub length_km: f64,
    /// Fixed loss budget for satellite/free-space; added to fiber loss.
    #[serde(default)]
    pub loss_db: Option<f64>,
    #[serde(default)]
    pub windows: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub window_repeat: Option<WindowRepeat>,
    #[serde(default)]
    pub initial_bits: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkOverride {
    /// Backbone link by position in the backbone list...
    #[serde(default)]
    pub backbone: Option<usize>,
    /// ...or intradomain link as [domain_id, link_index] in generation order.
    #[serde(default)]
    pub link: Option<[u32; 2]>,
    #[serde(default)]
    pub loss_db: Option<f64>,
    #[serde(default)]
    pub windows: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub window_repeat: Option<WindowRepeat>,
    #[serde(default)]
    pub initial_bits: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeOverride {
    pub node: NodeRef,
    pub has_kms: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct L2Section {
    pub name: String,
    pub domains: Vec<u32>,
    /// Parent controller name; defaults to the root for 3-level trees.
    #[serde(default)]
    pub parent: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchySection {
    #[serde(default)]
    pub l2: Vec<L2Section>,
    /// Controller names with a configured standby, e.g. ["l3", "l2a", "d1"].
    #[serde(default)]
    pub standbys: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributedSection {
    #[serde(default = "default_sync_period")]
    pub gossip_period_s: f64,
}

impl Default for DistributedSection {
    fn default() -> Self {
        DistributedSection {
            gossip_period_s: default_sync_period(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestSpec {
    pub at: f64,
    pub src: NodeRef,
    pub dst: NodeRef,
    pub bits: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonSpec {
    pub rate_per_s: f64,
    pub bits: u64,
    pub pairs: Vec<[NodeRef; 2]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    #[serde(default)]
    pub requests: Vec<RequestSpec>,
    #[serde(default)]
    pub poisson: Option<PoissonSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultAction {
    ControllerDown,
    ControllerUp,
    LinkDown,
    LinkUp,
    DomainIsolate,
    DomainRestore,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSection {
    pub at: f64,
    pub action: FaultAction,
    #[serde(default)]
    pub controller: Option<String>,
    #[serde(default)]
    pub domain: Option<u32>,
    #[serde(default)]
    pub backbone: Option<usize>,
    #[serde(default)]
    pub link: Option<[u32; 2]>,
}

/// The on-disk scenario schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub model: ModelKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    /// Whether satellite segments are treated as trusted relays. Recorded
    /// for reporting; satellites are modeled as single interdomain links
    /// either way.
    #[serde(default = "default_true")]
    pub satellite_trusted: bool,
    #[serde(default = "default_heartbeat")]
    pub heartbeat_s: f64,
    #[serde(default)]
    pub rate: RateSection,
    #[serde(default)]
    pub latency: LatencySection,
    pub domains: Vec<DomainSection>,
    #[serde(default)]
    pub backbone: Vec<BackboneSection>,
    #[serde(default)]
    pub link_overrides: Vec<LinkOverride>,
    #[serde(default)]
    pub node_overrides: Vec<NodeOverride>,
    #[serde(default)]
    pub hierarchy: Option<HierarchySection>,
    #[serde(default)]
    pub distributed: Option<DistributedSection>,
    #[serde(default)]
    pub workload: WorkloadSection,
    #[serde(default)]
    pub faults: Vec<FaultSection>,
}

/// A scheduled key-service arrival.
#[derive(Debug, Clone, Copy)]
pub struct Arrival {
    pub at: SimTime,
    pub src: NodeId,
    pub dst: NodeId,
    pub bits: u64,
}

#[derive(Debug, Clone, Copy)]
pub enum FaultTarget {
    Controller(ControllerId),
    Link(LinkId),
    Domain(DomainId),
}

#[derive(Debug, Clone, Copy)]
pub struct FaultEntry {
    pub at: SimTime,
    pub action: FaultAction,
    pub target: FaultTarget,
}

/// Fully resolved run inputs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: ModelKind,
    pub seed: u64,
    pub duration: SimTime,
    pub satellite_trusted: bool,
    pub heartbeat: SimTime,
    pub sync_period: SimTime,
    pub rate: RateModel,
    pub latency: LatencySection,
    pub topology: Topology,
    pub initial_bits: BTreeMap<LinkId, u64>,
    pub roles: BTreeMap<ControllerId, ControllerRole>,
    pub standbys: BTreeMap<ControllerId, ControllerId>,
    pub controller_names: BTreeMap<ControllerId, String>,
    pub arrivals: Vec<Arrival>,
    pub faults: Vec<FaultEntry>,
    /// Hash of topology + workload + seed; used to gate comparisons.
    pub fingerprint: String,
}

fn expand_windows(
    explicit: &Option<Vec<[f64; 2]>>,
    repeat: &Option<WindowRepeat>,
    horizon_s: f64,
) -> Result<Vec<(SimTime, SimTime)>, ScenarioError> {
    if let Some(ws) = explicit {
        let mut out: Vec<(SimTime, SimTime)> = ws
            .iter()
            .map(|w| (SimTime::from_secs_f64(w[0]), SimTime::from_secs_f64(w[1])))
            .collect();
        out.sort();
        for pair in out.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(ScenarioError::Invalid(
                    "availability windows overlap".into(),
                ));
            }
        }
        return Ok(out);
    }
    if let Some(r) = repeat {
        if r.period_s <= 0.0 || r.duration_s <= 0.0 || r.duration_s > r.period_s {
            return Err(ScenarioError::Invalid(
                "window_repeat needs 0 < duration_s <= period_s".into(),
            ));
        }
        let mut out = Vec::new();
        let mut start = r.offset_s;
        while start < horizon_s + r.period_s {
            out.push((
                SimTime::from_secs_f64(start),
                SimTime::from_secs_f64(start + r.duration_s),
            ));
            start += r.period_s;
        }
        return Ok(out);
    }
    Ok(Vec::new())
}

/// Default LEO visibility pattern: 5-minute windows every 90 minutes.
pub fn default_satellite_windows(horizon_s: f64) -> Vec<(SimTime, SimTime)> {
    expand_windows(
        &None,
        &Some(WindowRepeat {
            offset_s: 0.0,
            duration_s: 300.0,
            period_s: 5400.0,
        }),
        horizon_s,
    )
    .expect("static pattern is valid")
}

struct NodeIndex {
    by_ref: BTreeMap<(u32, u32), NodeId>,
    domain_links: BTreeMap<u32, Vec<LinkId>>,
}

impl NodeIndex {
    fn resolve(&self, r: NodeRef) -> Result<NodeId, ScenarioError> {
        self.by_ref.get(&(r[0], r[1])).copied().ok_or_else(|| {
            ScenarioError::Invalid(format!("unknown node reference [{}, {}]", r[0], r[1]))
        })
    }

    fn resolve_link(&self, r: [u32; 2]) -> Result<LinkId, ScenarioError> {
        self.domain_links
            .get(&r[0])
            .and_then(|v| v.get(r[1] as usize))
            .copied()
            .ok_or_else(|| {
                ScenarioError::Invalid(format!("unknown link reference [{}, {}]", r[0], r[1]))
            })
    }
}

fn poisson_arrivals(
    spec: &PoissonSpec,
    seed: u64,
    duration_s: f64,
    index: &NodeIndex,
) -> Result<Vec<Arrival>, ScenarioError> {
    if spec.pairs.is_empty() || spec.rate_per_s <= 0.0 {
        return Err(ScenarioError::Invalid(
            "poisson workload needs rate_per_s > 0 and at least one pair".into(),
        ));
    }
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(b"workload");
    let mut rng = ChaCha20Rng::from_seed(h.finalize().into());
    let mut uniform = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        let u: f64 = uniform().max(f64::MIN_POSITIVE);
        t += -u.ln() / spec.rate_per_s;
        if t >= duration_s {
            break;
        }
        let pair = spec.pairs[(uniform() * spec.pairs.len() as f64) as usize % spec.pairs.len()];
        out.push(Arrival {
            at: SimTime::from_secs_f64(t),
            src: index.resolve(pair[0])?,
            dst: index.resolve(pair[1])?,
            bits: spec.bits,
        });
    }
    Ok(out)
}

pub fn parse_str(text: &str) -> Result<ScenarioFile, ScenarioError> {
    Ok(toml::from_str(text)?)
}

pub fn load_file(path: &std::path::Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    resolve(&parse_str(&text)?)
}

/// Resolve a parsed scenario file into runnable inputs, with its seed and
/// model possibly overridden by the caller.
pub fn resolve(file: &ScenarioFile) -> Result<Scenario, ScenarioError> {
    let horizon = file.duration_s;
    let mut ids = IdAllocator::default();
    let mut graphs = Vec::new();
    let mut index = NodeIndex {
        by_ref: BTreeMap::new(),
        domain_links: BTreeMap::new(),
    };
    let mut names = BTreeMap::new();
    let mut roles = BTreeMap::new();
    if file.domains.is_empty() {
        return Err(ScenarioError::Invalid("at least one domain required".into()));
    }
    // L1/peer controllers take ids 0..n_domains in listing order.
    for (i, d) in file.domains.iter().enumerate() {
        let ctrl = ControllerId(i as u32);
        names.insert(ctrl, format!("d{}", d.id));
        let g = build_topology(d.kind, d.n, DomainId(d.id), ctrl, &mut ids, d.link_km)?;
        for (local, node) in g.nodes.iter().enumerate() {
            index.by_ref.insert((d.id, local as u32), node.id);
        }
        index
            .domain_links
            .insert(d.id, g.links.iter().map(|l| l.id).collect());
        graphs.push(g);
    }
    let n_domains = file.domains.len() as u32;

    let mut backbone_specs = Vec::new();
    for (bi, b) in file.backbone.iter().enumerate() {
        let a = index.resolve(b.a)?;
        let bb = index.resolve(b.b)?;
        let loss = match b.medium {
            Medium::Fiber => net::link_loss(
                Medium::Fiber,
                b.length_km,
                file.rate.alpha_db_per_km,
                b.loss_db.unwrap_or(0.0),
            ),
            _ => b.loss_db.ok_or_else(|| {
                ScenarioError::Invalid(format!(
                    "backbone[{bi}]: satellite/freespace links need an explicit loss_db budget"
                ))
            })?,
        };
        let windows = if b.windows.is_none() && b.window_repeat.is_none() {
            match b.medium {
                Medium::Satellite => default_satellite_windows(horizon),
                _ => Vec::new(),
            }
        } else {
            expand_windows(&b.windows, &b.window_repeat, horizon)?
        };
        backbone_specs.push(BackboneSpec {
            a,
            b: bb,
            medium: b.medium,
            length_km: b.length_km,
            loss_db: loss,
            availability: windows,
        });
    }
    let mut topology = compose(graphs, backbone_specs, &mut ids)?;
    let backbone_ids: Vec<LinkId> = topology.backbone_links.iter().copied().collect();

    let mut initial_bits = BTreeMap::new();
    for (bi, b) in file.backbone.iter().enumerate() {
        if let Some(bits) = b.initial_bits {
            initial_bits.insert(backbone_ids[bi], bits);
        }
    }
    for (oi, ov) in file.link_overrides.iter().enumerate() {
        let lid = match (ov.backbone, ov.link) {
            (Some(i), None) => *backbone_ids.get(i).ok_or_else(|| {
                ScenarioError::Invalid(format!("link_overrides[{oi}]: no backbone link {i}"))
            })?,
            (None, Some(r)) => index.resolve_link(r)?,
            _ => {
                return Err(ScenarioError::Invalid(format!(
                    "link_overrides[{oi}]: set exactly one of `backbone` or `link`"
                )))
            }
        };
        let link = topology.links.get_mut(&lid).expect("resolved link");
        if let Some(db) = ov.loss_db {
            link.loss_db = db;
        }
        if ov.windows.is_some() || ov.window_repeat.is_some() {
            link.availability = expand_windows(&ov.windows, &ov.window_repeat, horizon)?;
        }
        if let Some(bits) = ov.initial_bits {
            initial_bits.insert(lid, bits);
        }
    }
    for ov in &file.node_overrides {
        let nid = index.resolve(ov.node)?;
        topology.nodes.get_mut(&nid).expect("resolved").has_kms = ov.has_kms;
    }

    // Controller layout.
    let mut name_to_id: BTreeMap<String, ControllerId> =
        names.iter().map(|(k, v)| (v.clone(), *k)).collect();
    let mut standbys = BTreeMap::new();
    match file.model {
        ModelKind::Distributed => {
            for d in &topology.domains {
                roles.insert(d.controller, ControllerRole::Peer);
            }
            if file.hierarchy.is_some() {
                return Err(ScenarioError::Invalid(
                    "hierarchy section not allowed in distributed model".into(),
                ));
            }
        }
        ModelKind::Hierarchical => {
            let hier = file.hierarchy.clone().unwrap_or_default();
            let root = ControllerId(n_domains + hier.l2.len() as u32);
            names.insert(root, "l3".to_string());
            name_to_id.insert("l3".to_string(), root);
            roles.insert(root, ControllerRole::L3);
            for (i, l2) in hier.l2.iter().enumerate() {
                let cid = ControllerId(n_domains + i as u32);
                names.insert(cid, l2.name.clone());
                name_to_id.insert(l2.name.clone(), cid);
            }
            for l2 in &hier.l2 {
                let cid = name_to_id[&l2.name];
                let parent = match &l2.parent {
                    Some(p) => *name_to_id.get(p).ok_or_else(|| {
                        ScenarioError::Invalid(format!("unknown parent controller {p}"))
                    })?,
                    None => root,
                };
                roles.insert(cid, ControllerRole::L2 { parent });
                for dom in &l2.domains {
                    let d = topology.domain(DomainId(*dom)).ok_or_else(|| {
                        ScenarioError::Invalid(format!("hierarchy references unknown domain {dom}"))
                    })?;
                    roles.insert(d.controller, ControllerRole::L1 { parent: cid });
                }
            }
            // Domains not listed under any L2 hang directly off the root.
            for d in &topology.domains {
                roles
                    .entry(d.controller)
                    .or_insert(ControllerRole::L1 { parent: root });
            }
            let first_free = n_domains + hier.l2.len() as u32 + 1;
            for (next, name) in (first_free..).zip(hier.standbys.iter()) {
                let primary = *name_to_id.get(name).ok_or_else(|| {
                    ScenarioError::Invalid(format!("standby for unknown controller {name}"))
                })?;
                let sid = ControllerId(next);
                names.insert(sid, format!("{name}-standby"));
                standbys.insert(primary, sid);
            }
        }
    }

    // Workload.
    let mut arrivals = Vec::new();
    for (ri, r) in file.workload.requests.iter().enumerate() {
        if r.bits == 0 {
            return Err(ScenarioError::Invalid(format!(
                "workload.requests[{ri}]: bits must be positive"
            )));
        }
        arrivals.push(Arrival {
            at: SimTime::from_secs_f64(r.at),
            src: index.resolve(r.src)?,
            dst: index.resolve(r.dst)?,
            bits: r.bits,
        });
    }
    if let Some(p) = &file.workload.poisson {
        arrivals.extend(poisson_arrivals(p, file.seed, horizon, &index)?);
    }
    arrivals.sort_by_key(|a| (a.at, a.src, a.dst));

    // Faults.
    let mut faults = Vec::new();
    for (fi, f) in file.faults.iter().enumerate() {
        let target = match (f.controller.as_ref(), f.domain, f.backbone, f.link) {
            (Some(name), None, None, None) => {
                FaultTarget::Controller(*name_to_id.get(name).ok_or_else(|| {
                    ScenarioError::Invalid(format!("faults[{fi}]: unknown controller {name}"))
                })?)
            }
            (None, Some(d), None, None) => {
                if topology.domain(DomainId(d)).is_none() {
                    return Err(ScenarioError::Invalid(format!(
                        "faults[{fi}]: unknown domain {d}"
                    )));
                }
                FaultTarget::Domain(DomainId(d))
            }
            (None, None, Some(i), None) => FaultTarget::Link(*backbone_ids.get(i).ok_or_else(
                || ScenarioError::Invalid(format!("faults[{fi}]: no backbone link {i}")),
            )?),
            (None, None, None, Some(r)) => FaultTarget::Link(index.resolve_link(r)?),
            _ => {
                return Err(ScenarioError::Invalid(format!(
                    "faults[{fi}]: set exactly one of controller/domain/backbone/link"
                )))
            }
        };
        faults.push(FaultEntry {
            at: SimTime::from_secs_f64(f.at),
            action: f.action,
            target,
        });
    }
    faults.sort_by_key(|f| f.at);

    let rate = RateModel {
        r0_bps: file
            .rate
            .r0_bps
            .unwrap_or_else(|| RateModel::default().r0_bps),
        max_loss_db: file.rate.max_loss_db,
    };

    let fingerprint = fingerprint_of(file);

    let violations = net::validate(&topology);
    if !violations.is_empty() {
        return Err(ScenarioError::Invalid(format!(
            "topology invariant violations: {violations:?}"
        )));
    }

    Ok(Scenario {
        model: file.model,
        seed: file.seed,
        duration: SimTime::from_secs_f64(file.duration_s),
        satellite_trusted: file.satellite_trusted,
        heartbeat: SimTime::from_secs_f64(file.heartbeat_s),
        sync_period: SimTime::from_secs_f64(
            file.distributed
                .clone()
                .unwrap_or_default()
                .gossip_period_s,
        ),
        rate,
        latency: file.latency.clone(),
        topology,
        initial_bits,
        roles,
        standbys,
        controller_names: names,
        arrivals,
        faults,
        fingerprint,
    })
}

/// Scenario identity for comparisons: everything that shapes the run except
/// the control model.
pub fn fingerprint_of(file: &ScenarioFile) -> String {
    #[derive(Serialize)]
    struct Identity<'a> {
        seed: u64,
        duration_s: f64,
        rate: &'a RateSection,
        latency: &'a LatencySection,
        domains: &'a Vec<DomainSection>,
        backbone: &'a Vec<BackboneSection>,
        link_overrides: &'a Vec<LinkOverride>,
        node_overrides: &'a Vec<NodeOverride>,
        workload: &'a WorkloadSection,
        faults: &'a Vec<FaultSection>,
    }
    let identity = Identity {
        seed: file.seed,
        duration_s: file.duration_s,
        rate: &file.rate,
        latency: &file.latency,
        domains: &file.domains,
        backbone: &file.backbone,
        link_overrides: &file.link_overrides,
        node_overrides: &file.node_overrides,
        workload: &file.workload,
        faults: &file.faults,
    };
    let json = serde_json::to_vec(&identity).expect("serializable");
    let mut h = Sha256::new();
    h.update(&json);
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
