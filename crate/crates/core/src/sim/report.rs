use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::autonomic::{HealReport, Transition};
use crate::fabric::ProtocolSwitch;
use crate::marf::ReplicationStats;
use crate::tier::TransportMode;

use super::Fault;

pub const REPORT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub version: String,
    pub seed: u64,
    pub workload: String,
    pub transport: TransportMode,
    pub replication: bool,
    pub nodes: usize,
}

/// One answer: the program value, or one classified sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Store counters summed over every demand store.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandLine {
    pub issued: u64,
    pub enqueued: u64,
    pub deduplicated: u64,
    pub already_computed: u64,
    pub computed: u64,
    pub requeued: u64,
    pub retried: u64,
    pub deferred: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarehouseLine {
    pub hits: u64,
    pub misses: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportLine {
    pub client: String,
    pub dst: String,
    pub name: String,
    pub mean_latency_us: Option<f64>,
    pub round_trips: u64,
    pub failures: u64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FaultLine {
    pub fault: Fault,
    pub node: Option<String>,
    pub at_us: u64,
    pub watermark: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryLine {
    pub steps: u64,
    pub simulated_ms: u64,
    pub fabric_errors: u64,
    pub healed: usize,
    pub heal_failures: usize,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("report does not start with a header line")]
    MissingHeader,
    #[error("unsupported report version {0:?}")]
    Version(String),
    #[error("counter identity violated: {0}")]
    Identity(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Everything a simulated run reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub header: Header,
    pub results: Vec<ResultLine>,
    pub demands: DemandLine,
    pub warehouse: WarehouseLine,
    pub transports: Vec<TransportLine>,
    pub replication: Option<ReplicationStats>,
    pub switches: Vec<ProtocolSwitch>,
    pub faults: Vec<FaultLine>,
    pub health: Vec<Transition>,
    pub heals: Vec<HealReport>,
    pub summary: SummaryLine,
}

fn tagged<T: Serialize>(kind: &str, v: &T) -> Value {
    let mut v = serde_json::to_value(v).expect("report lines serialize");
    if let Value::Object(m) = &mut v {
        m.insert("type".into(), Value::String(kind.into()));
    }
    v
}

impl DemandLine {
    pub fn check(&self) -> Result<(), ReportError> {
        if self.issued != self.deduplicated + self.enqueued {
            return Err(ReportError::Identity(format!(
                "issued {} != deduplicated {} + enqueued {}",
                self.issued, self.deduplicated, self.enqueued
            )));
        }
        if self.computed > self.enqueued {
            return Err(ReportError::Identity(format!(
                "computed {} > enqueued {}",
                self.computed, self.enqueued
            )));
        }
        Ok(())
    }
}

impl RunReport {
    /// One JSON object per line, header first.
    pub fn lines(&self) -> Vec<Value> {
        let mut out = vec![tagged("header", &self.header)];
        out.extend(self.results.iter().map(|r| tagged("result", r)));
        out.push(tagged("demands", &self.demands));
        out.push(tagged("warehouse", &self.warehouse));
        out.extend(self.transports.iter().map(|t| tagged("transport", t)));
        if let Some(r) = &self.replication {
            out.push(tagged("replication", r));
        }
        out.extend(self.switches.iter().map(|s| tagged("switch", s)));
        out.extend(self.faults.iter().map(|f| tagged("fault", f)));
        out.extend(self.health.iter().map(|t| tagged("health", t)));
        out.extend(self.heals.iter().map(|h| tagged("heal", h)));
        out.push(tagged("summary", &self.summary));
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for l in self.lines() {
            s.push_str(&l.to_string());
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_jsonl())
    }

    pub fn check(&self) -> Result<(), ReportError> {
        self.demands.check()
    }

    /// Reads a report back as JSON values, checking the header and the
    /// counter identities.
    pub fn parse(text: &str) -> Result<Vec<Value>, ReportError> {
        let mut lines = Vec::new();
        for (i, l) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let v: Value = serde_json::from_str(l).map_err(|e| ReportError::Json {
                line: i + 1,
                message: e.to_string(),
            })?;
            lines.push(v);
        }
        let first = lines.first().ok_or(ReportError::MissingHeader)?;
        if first["type"] != "header" {
            return Err(ReportError::MissingHeader);
        }
        let header: Header = serde_json::from_value(first.clone()).map_err(|e| ReportError::Json {
            line: 1,
            message: e.to_string(),
        })?;
        if header.version != REPORT_VERSION {
            return Err(ReportError::Version(header.version));
        }
        for (i, v) in lines.iter().enumerate().filter(|(_, v)| v["type"] == "demands") {
            let d: DemandLine = serde_json::from_value(v.clone()).map_err(|e| ReportError::Json {
                line: i + 1,
                message: e.to_string(),
            })?;
            d.check()?;
        }
        Ok(lines)
    }

    /// Lines of one type from a parsed report.
    pub fn of_type<'a>(lines: &'a [Value], kind: &'a str) -> impl Iterator<Item = &'a Value> + 'a {
        lines.iter().filter(move |v| v["type"] == kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> RunReport {
        RunReport {
            header: Header {
                version: REPORT_VERSION.into(),
                seed: 7,
                workload: "program".into(),
                transport: TransportMode::Auto,
                replication: true,
                nodes: 1,
            },
            results: vec![ResultLine {
                name: "result".into(),
                value: Some(55),
                speaker_id: None,
                distance: None,
                source: None,
                error: None,
            }],
            demands: DemandLine {
                issued: 12,
                enqueued: 11,
                deduplicated: 1,
                computed: 11,
                ..Default::default()
            },
            warehouse: WarehouseLine::default(),
            transports: Vec::new(),
            replication: None,
            switches: Vec::new(),
            faults: Vec::new(),
            health: Vec::new(),
            heals: Vec::new(),
            summary: SummaryLine::default(),
        }
    }

    #[test]
    fn round_trips_through_jsonl() {
        let r = report();
        let text = r.to_jsonl();
        let lines = RunReport::parse(&text).unwrap();
        assert_eq!(lines[0]["type"], "header");
        assert_eq!(lines[0]["version"], "1");
        assert_eq!(RunReport::of_type(&lines, "result").next().unwrap()["value"], 55);
        assert_eq!(lines.last().unwrap()["type"], "summary");
    }

    #[test]
    fn identity_violation_rejected() {
        let mut r = report();
        r.demands.issued = 13;
        assert!(matches!(r.check(), Err(ReportError::Identity(_))));
        assert!(matches!(RunReport::parse(&r.to_jsonl()), Err(ReportError::Identity(_))));
    }

    #[test]
    fn header_must_come_first() {
        assert!(matches!(RunReport::parse(""), Err(ReportError::MissingHeader)));
        assert!(matches!(
            RunReport::parse("{\"type\":\"summary\"}\n"),
            Err(ReportError::MissingHeader)
        ));
        let bad = report().to_jsonl().replacen("\"version\":\"1\"", "\"version\":\"2\"", 1);
        assert!(matches!(RunReport::parse(&bad), Err(ReportError::Version(_))));
    }
}
