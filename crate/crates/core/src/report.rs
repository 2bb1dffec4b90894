//! Run reports: a pure fold over a trace, plus model-to-model comparison.

use crate::ids::RequestId;
use crate::trace::{Plane, TraceRecord};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("runs executed different scenarios and cannot be compared")]
    IncomparableRuns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestOutcome {
    Delivered,
    Failed(String),
    Unfinished,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RequestReport {
    pub request_id: RequestId,
    pub outcome: RequestOutcome,
    /// Application- and control-plane messages carrying this request id.
    pub control_messages: u64,
    /// Request record to key provision at the source application, in ms.
    pub setup_latency_ms: Option<f64>,
    pub relay_hops: Option<u32>,
    pub bits: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub requests: BTreeMap<RequestId, RequestReport>,
    pub total_requests: u64,
    pub delivered_requests: u64,
    pub success_ratio: f64,
    pub delivered_key_bits: u64,
    pub total_control_messages: u64,
    pub setup_latency_p50_ms: Option<f64>,
    pub setup_latency_p95_ms: Option<f64>,
    /// Messages sent or received per controller.
    pub controller_message_load: BTreeMap<String, u64>,
}

fn percentile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    // Nearest-rank.
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Derive the run report purely from the trace.
pub fn summarize(trace: &[TraceRecord]) -> RunReport {
    struct Acc {
        requested_at: Option<f64>,
        src: Option<String>,
        key_at_src: Option<f64>,
        failed: Option<String>,
        control_messages: u64,
        relay_hops: Option<u32>,
        bits: Option<u64>,
    }
    let mut acc: BTreeMap<RequestId, Acc> = BTreeMap::new();
    let mut controller_load: BTreeMap<String, u64> = BTreeMap::new();
    for rec in trace {
        for party in [&rec.sender, &rec.receiver] {
            if let Some(name) = party.strip_prefix("sdnc:") {
                *controller_load.entry(name.to_string()).or_default() += 1;
            }
        }
        let Some(req) = rec.req else { continue };
        let a = acc.entry(req).or_insert(Acc {
            requested_at: None,
            src: None,
            key_at_src: None,
            failed: None,
            control_messages: 0,
            relay_hops: None,
            bits: None,
        });
        if rec.plane != Plane::DP {
            a.control_messages += 1;
        }
        match rec.msg.as_str() {
            "KeyServiceRequest" => {
                a.requested_at = Some(rec.t);
                a.src = rec.sender.strip_prefix("app:").map(str::to_string);
            }
            "KeyReady" => {
                let to_src = a
                    .src
                    .as_deref()
                    .is_some_and(|s| rec.receiver == format!("app:{s}"));
                if to_src && a.key_at_src.is_none() {
                    a.key_at_src = Some(rec.t);
                    a.bits = rec.detail_field("bits").and_then(|v| v.parse().ok());
                }
            }
            "KeyRelay" => {
                a.relay_hops = rec.detail_field("hops").and_then(|v| v.parse().ok());
            }
            "Error" => {
                a.failed = Some(
                    rec.detail_field("code")
                        .unwrap_or("Unknown")
                        .to_string(),
                );
            }
            _ => {}
        }
    }
    let mut requests = BTreeMap::new();
    let mut latencies = Vec::new();
    let mut delivered = 0u64;
    let mut delivered_bits = 0u64;
    let mut total_control = 0u64;
    for (req, a) in acc {
        let outcome = match (&a.key_at_src, &a.failed) {
            (Some(_), _) => RequestOutcome::Delivered,
            (None, Some(code)) => RequestOutcome::Failed(code.clone()),
            (None, None) => RequestOutcome::Unfinished,
        };
        let setup_latency_ms = match (a.requested_at, a.key_at_src) {
            (Some(t0), Some(t1)) => Some((t1 - t0) * 1e3),
            _ => None,
        };
        if outcome == RequestOutcome::Delivered {
            delivered += 1;
            delivered_bits += a.bits.unwrap_or(0);
            if let Some(l) = setup_latency_ms {
                latencies.push(l);
            }
        }
        total_control += a.control_messages;
        requests.insert(
            req,
            RequestReport {
                request_id: req,
                outcome,
                control_messages: a.control_messages,
                setup_latency_ms,
                relay_hops: a.relay_hops,
                bits: a.bits,
            },
        );
    }
    latencies.sort_by(|a, b| a.partial_cmp(b).expect("finite latencies"));
    let total = requests.len() as u64;
    RunReport {
        total_requests: total,
        delivered_requests: delivered,
        success_ratio: if total == 0 {
            0.0
        } else {
            delivered as f64 / total as f64
        },
        delivered_key_bits: delivered_bits,
        total_control_messages: total_control,
        setup_latency_p50_ms: percentile(&latencies, 50.0),
        setup_latency_p95_ms: percentile(&latencies, 95.0),
        controller_message_load: controller_load,
        requests,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub hierarchical: RunReport,
    pub distributed: RunReport,
    /// distributed minus hierarchical, per shared request id.
    pub control_message_delta: BTreeMap<RequestId, i64>,
    pub latency_delta_p50_ms: Option<f64>,
}

/// Side-by-side comparison; refuses runs of different scenarios.
pub fn compare(
    hier: (&RunReport, &str),
    dist: (&RunReport, &str),
) -> Result<Comparison, ReportError> {
    if hier.1 != dist.1 {
        return Err(ReportError::IncomparableRuns);
    }
    let mut delta = BTreeMap::new();
    for (req, h) in &hier.0.requests {
        if let Some(d) = dist.0.requests.get(req) {
            delta.insert(*req, d.control_messages as i64 - h.control_messages as i64);
        }
    }
    let latency_delta_p50_ms = match (hier.0.setup_latency_p50_ms, dist.0.setup_latency_p50_ms) {
        (Some(h), Some(d)) => Some(d - h),
        _ => None,
    };
    Ok(Comparison {
        hierarchical: hier.0.clone(),
        distributed: dist.0.clone(),
        control_message_delta: delta,
        latency_delta_p50_ms,
    })
}
