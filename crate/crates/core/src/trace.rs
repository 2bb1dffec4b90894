//! Append-only message audit trail. One record per delivered message, one
//! line per record, stable field order so trace files hash byte-stably.

use crate::ids::RequestId;
use crate::time::SimTime;
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plane {
    AP,
    CP,
    DP,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Delivery time in simulated seconds.
    pub t: f64,
    pub sender: String,
    pub receiver: String,
    pub msg: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub req: Option<RequestId>,
    pub plane: Plane,
    pub detail: String,
}

impl TraceRecord {
    pub fn new(
        at: SimTime,
        sender: String,
        receiver: String,
        msg: &str,
        req: Option<RequestId>,
        plane: Plane,
        detail: String,
    ) -> Self {
        TraceRecord {
            t: at.as_secs_f64(),
            sender,
            receiver,
            msg: msg.to_string(),
            req,
            plane,
            detail,
        }
    }

    /// Fetch one `k=v` field from the detail string.
    pub fn detail_field(&self, key: &str) -> Option<&str> {
        self.detail
            .split(';')
            .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
    }
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[TraceRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> io::Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(io::Error::other)?);
    }
    Ok(out)
}
