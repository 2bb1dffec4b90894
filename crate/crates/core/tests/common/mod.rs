//! Shared helpers for integration tests: reference-scenario loading and a
//! seeded random scenario generator.

#![allow(dead_code)]

use qsdn_core::scenario::{
    load_file, parse_str, resolve, BackboneSection, DomainSection, ModelKind, RequestSpec,
    Scenario, ScenarioFile, WorkloadSection,
};
use qsdn_core::{Medium, TopologyKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::path::PathBuf;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

pub fn load_reference(name: &str) -> Scenario {
    load_file(&scenario_path(name)).expect("reference scenario loads")
}

pub fn parse_reference(name: &str) -> ScenarioFile {
    let text = std::fs::read_to_string(scenario_path(name)).expect("readable");
    parse_str(&text).expect("reference scenario parses")
}

/// Random multi-domain scenario: <= 4 domains, <= 16 nodes, chain backbone
/// with an occasional extra link, a handful of fixed-time requests.
pub fn random_scenario_file(seed: u64) -> ScenarioFile {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut domains = Vec::new();
    let mut node_budget = 16u32;
    let n_domains = rng.gen_range(1..=4u32);
    for id in 1..=n_domains {
        let kind = match rng.gen_range(0..4) {
            0 => TopologyKind::Ring,
            1 => TopologyKind::Star,
            2 => TopologyKind::Mesh,
            _ => TopologyKind::Bus,
        };
        let (min_n, max_n) = match kind {
            TopologyKind::Ring | TopologyKind::Mesh => (3, 5),
            TopologyKind::Star => (2, 4),
            TopologyKind::Bus => (2, 5),
        };
        let cost = |n: u32| if kind == TopologyKind::Star { n + 1 } else { n };
        if cost(min_n) > node_budget {
            break;
        }
        let mut n = rng.gen_range(min_n..=max_n);
        while cost(n) > node_budget {
            n -= 1;
        }
        node_budget -= cost(n);
        domains.push(DomainSection {
            id,
            kind,
            n,
            link_km: rng.gen_range(5.0..20.0),
        });
    }
    let node_count =
        |d: &DomainSection| if d.kind == TopologyKind::Star { d.n + 1 } else { d.n };
    // Star hubs (local index 0) are passive relays; keep apps and borders
    // off them so random workloads stay well-formed.
    let pick_node = |rng: &mut ChaCha20Rng, d: &DomainSection| {
        let lo = if d.kind == TopologyKind::Star { 1 } else { 0 };
        [d.id, rng.gen_range(lo..node_count(d))]
    };
    let mut backbone = Vec::new();
    for w in 0..domains.len().saturating_sub(1) {
        backbone.push(BackboneSection {
            a: pick_node(&mut rng, &domains[w]),
            b: pick_node(&mut rng, &domains[w + 1]),
            medium: Medium::Fiber,
            length_km: rng.gen_range(10.0..80.0),
            loss_db: None,
            windows: None,
            window_repeat: None,
            initial_bits: Some(rng.gen_range(0..5_000)),
        });
    }
    if domains.len() >= 3 && rng.gen_bool(0.5) {
        // Extra edge: gives the quotient graph an alternative path.
        backbone.push(BackboneSection {
            a: pick_node(&mut rng, &domains[0]),
            b: pick_node(&mut rng, domains.last().unwrap()),
            medium: Medium::Fiber,
            length_km: rng.gen_range(10.0..80.0),
            loss_db: None,
            windows: None,
            window_repeat: None,
            initial_bits: None,
        });
    }
    let mut requests = Vec::new();
    for _ in 0..rng.gen_range(3..=8) {
        let sd = &domains[rng.gen_range(0..domains.len())];
        let dd = &domains[rng.gen_range(0..domains.len())];
        let src = pick_node(&mut rng, sd);
        let dst = pick_node(&mut rng, dd);
        if src == dst {
            continue;
        }
        requests.push(RequestSpec {
            at: rng.gen_range(0.5..20.0),
            src,
            dst,
            bits: [64, 128, 256][rng.gen_range(0..3)],
        });
    }
    let model = if seed.is_multiple_of(2) {
        ModelKind::Hierarchical
    } else {
        ModelKind::Distributed
    };
    ScenarioFile {
        model,
        seed,
        duration_s: 30.0,
        satellite_trusted: true,
        heartbeat_s: 5.0,
        rate: Default::default(),
        latency: Default::default(),
        domains,
        backbone,
        link_overrides: vec![],
        node_overrides: vec![],
        hierarchy: None,
        distributed: None,
        workload: WorkloadSection {
            requests,
            poisson: None,
        },
        faults: vec![],
    }
}

pub fn random_scenario(seed: u64) -> Scenario {
    resolve(&random_scenario_file(seed)).expect("generated scenario resolves")
}

/// Brute-force minimum-hop path with lexicographic tie-break; `kms` is the
/// set of nodes allowed as intermediate relays.
pub fn brute_force_route(
    edges: &std::collections::BTreeSet<(u32, u32)>,
    n: u32,
    src: u32,
    dst: u32,
    kms: &std::collections::BTreeSet<u32>,
) -> Option<Vec<u32>> {
    let mut best: Option<Vec<u32>> = None;
    let mut stack = vec![vec![src]];
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap();
        if last == dst {
            let better = match &best {
                None => true,
                Some(b) => path.len() < b.len() || (path.len() == b.len() && path < *b),
            };
            if better {
                best = Some(path);
            }
            continue;
        }
        if last != src && !kms.contains(&last) {
            continue;
        }
        for next in 0..n {
            let e = (last.min(next), last.max(next));
            if next != last && edges.contains(&e) && !path.contains(&next) {
                let mut p = path.clone();
                p.push(next);
                stack.push(p);
            }
        }
    }
    best
}

/// All permutations of `0..n` (small n only).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}
