//! Message-sequence conformance for the two reference runs: the exact
//! per-request message order each integration model must produce for one
//! cross-domain request.

use qsdn_core::scenario::load_file;
use qsdn_core::{run_scenario, RequestId, RunOutput};
use std::path::PathBuf;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

pub fn run_reference(name: &str) -> RunOutput {
    let sc = load_file(&scenario_path(name)).expect("reference scenario loads");
    run_scenario(sc)
}

pub fn msg_sequence(out: &RunOutput, req: RequestId) -> Vec<String> {
    out.trace
        .iter()
        .filter(|r| r.req == Some(req))
        .map(|r| r.msg.clone())
        .collect()
}

pub const HIERARCHICAL_SEQUENCE: &[&str] = &[
    "KeyServiceRequest",
    "AvailabilityQuery",
    "AvailabilityReply",
    "Escalate",
    "Escalate",
    "AvailabilityQuery",
    "AvailabilityReply",
    "InterdomainRoute",
    "InterdomainRoute",
    "IntradomainRouteSet",
    "IntradomainRouteSet",
    "KeyRelay",
    "KeyReady",
    "KeyReady",
    "ConnectionEnd",
    "ConnectionEnd",
];

pub const DISTRIBUTED_SEQUENCE: &[&str] = &[
    "KeyServiceRequest",
    "AvailabilityQuery",
    "AvailabilityReply",
    "PeerCoordinate",
    "AvailabilityQuery",
    "AvailabilityReply",
    "InterdomainRoute",
    "IntradomainRouteSet",
    "IntradomainRouteSet",
    "KeyRelay",
    "ConnectionEnd",
    "ConnectionEnd",
    "KeyReady",
    "KeyReady",
];

#[test]
fn hierarchical_reference_sequence() {
    let out = run_reference("fig3_hierarchical.toml");
    let seq = msg_sequence(&out, RequestId(0));
    assert_eq!(seq, HIERARCHICAL_SEQUENCE, "full trace: {:#?}", out.trace);
    assert!(matches!(
        out.outcomes[&RequestId(0)],
        qsdn_core::Outcome::Delivered { bits: 256, .. }
    ));
}

#[test]
fn distributed_reference_sequence() {
    let out = run_reference("fig5_distributed.toml");
    let seq = msg_sequence(&out, RequestId(0));
    assert_eq!(seq, DISTRIBUTED_SEQUENCE, "full trace: {:#?}", out.trace);
    assert!(matches!(
        out.outcomes[&RequestId(0)],
        qsdn_core::Outcome::Delivered { bits: 256, .. }
    ));
}

#[test]
fn escalation_stays_on_controller_chain() {
    let out = run_reference("fig3_hierarchical.toml");
    // Shared-L2 request: only d1, l2a, d2 ever appear as controllers.
    for rec in out.trace.iter().filter(|r| r.req == Some(RequestId(0))) {
        for party in [&rec.sender, &rec.receiver] {
            if let Some(name) = party.strip_prefix("sdnc:") {
                assert!(
                    ["d1", "l2a", "d2"].contains(&name),
                    "unexpected controller {name} in {rec:?}"
                );
            }
        }
    }
}

#[test]
fn planes_are_classified() {
    use qsdn_core::Plane;
    let out = run_reference("fig3_hierarchical.toml");
    for rec in &out.trace {
        let expected = match rec.msg.as_str() {
            "KeyRelay" => Plane::DP,
            "KeyServiceRequest" | "KeyReady" | "Error" => Plane::AP,
            _ => Plane::CP,
        };
        assert_eq!(rec.plane, expected, "{rec:?}");
    }
}
