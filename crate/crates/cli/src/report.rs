//! Report assembly: one top-level JSON object per run, with input digests
//! and a self-digest that ignores wall-clock timings. Floats go through
//! serde_json's shortest round-trip encoding, which is lossless.

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
pub struct Report {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    /// sha256 of every resolved input (config file contents, tensor specs).
    pub input_digests: Vec<InputDigest>,
    pub results: Value,
    pub anomalies: Vec<String>,
    /// Wall-clock milliseconds; excluded from the report digest.
    pub timings_ms: Map<String, Value>,
    /// sha256 of this report with `timings_ms` emptied and this field blank.
    pub report_digest: String,
}

#[derive(Serialize, Clone)]
pub struct InputDigest {
    pub label: String,
    pub sha256: String,
}

pub fn digest_str(label: &str, content: &str) -> InputDigest {
    let mut h = Sha256::new();
    h.update(content.as_bytes());
    InputDigest {
        label: label.to_string(),
        sha256: format!("{:x}", h.finalize()),
    }
}

impl Report {
    pub fn new(command: &str, seed: u64) -> Self {
        Report {
            tool_version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            seed,
            input_digests: Vec::new(),
            results: Value::Null,
            anomalies: Vec::new(),
            timings_ms: Map::new(),
            report_digest: String::new(),
        }
    }

    pub fn finalize(&mut self) {
        let mut v = serde_json::to_value(&*self).expect("report serializes");
        if let Value::Object(ref mut o) = v {
            o.insert("timings_ms".into(), Value::Object(Map::new()));
            o.insert("report_digest".into(), Value::String(String::new()));
        }
        let canonical = serde_json::to_string(&v).expect("report serializes");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        self.report_digest = format!("{:x}", h.finalize());
    }

    pub fn render(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
