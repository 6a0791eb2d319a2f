//! Append-only episodic memory and trajectory event files.

use std::io::{BufRead, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::decision::AgentDecision;
use super::{AgentError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub timestamp: DateTime<Utc>,
    pub event: String,
    pub decision: AgentDecision,
    pub reasoning_trace: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MemoryHeader {
    agent_id: String,
    records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicMemory {
    agent_id: String,
    records: Vec<MemoryRecord>,
}

impl EpisodicMemory {
    pub fn new(agent_id: impl Into<String>) -> Self {
        Self { agent_id: agent_id.into(), records: Vec::new() }
    }

    pub fn agent_id(&self) -> &str {
        &self.agent_id
    }

    pub fn records(&self) -> &[MemoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends one record. Equal timestamps are kept in insertion order.
    pub fn append(
        &mut self,
        event: &str,
        decision: AgentDecision,
        reasoning_trace: String,
        timestamp: DateTime<Utc>,
    ) -> Result<&MemoryRecord> {
        if let Some(last) = self.records.last() {
            if timestamp < last.timestamp {
                return Err(AgentError::Memory(format!(
                    "timestamp {} precedes last record at {}",
                    timestamp.to_rfc3339(),
                    last.timestamp.to_rfc3339()
                )));
            }
        }
        if !(0.0..=1.0).contains(&decision.probability) {
            return Err(AgentError::Memory(format!("decision probability {} outside [0,1]", decision.probability)));
        }
        self.records.push(MemoryRecord { timestamp, event: event.to_string(), decision, reasoning_trace });
        Ok(self.records.last().expect("just pushed"))
    }

    /// JSON lines: a header object, then one record per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = MemoryHeader { agent_id: self.agent_id.clone(), records: self.records.len() };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header: MemoryHeader = match lines.next() {
            Some(line) => serde_json::from_str(&line?)?,
            None => return Err(AgentError::Memory("empty memory log".into())),
        };
        let mut memory = Self::new(header.agent_id);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: MemoryRecord = serde_json::from_str(&line)?;
            memory.append(&r.event, r.decision, r.reasoning_trace, r.timestamp)?;
        }
        if memory.len() != header.records {
            return Err(AgentError::Memory(format!(
                "header announces {} records, found {}",
                header.records,
                memory.len()
            )));
        }
        Ok(memory)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::read_jsonl(crate::artifact::ArtifactHeader::strip(&text).as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub timestamp: DateTime<Utc>,
    pub text: String,
}

/// One event per line: an RFC 3339 timestamp, whitespace, then the event text.
/// Blank lines and lines starting with `#` are skipped. Events must be sorted.
pub fn parse_events(text: &str) -> Result<Vec<TimedEvent>> {
    let mut events: Vec<TimedEvent> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (ts, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| AgentError::Memory(format!("line {}: expected `<timestamp> <event>`", lineno + 1)))?;
        let timestamp = DateTime::parse_from_rfc3339(ts)
            .map_err(|e| AgentError::Memory(format!("line {}: bad timestamp `{ts}`: {e}", lineno + 1)))?
            .with_timezone(&Utc);
        let text = rest.trim();
        if text.is_empty() {
            return Err(AgentError::Memory(format!("line {}: empty event text", lineno + 1)));
        }
        if let Some(prev) = events.last() {
            if timestamp < prev.timestamp {
                return Err(AgentError::Memory(format!("line {}: events out of order", lineno + 1)));
            }
        }
        events.push(TimedEvent { timestamp, text: text.to_string() });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn decision(p: f64) -> AgentDecision {
        AgentDecision { probability: p, rationale: "r".into(), raw_response: "raw".into(), evidence_used: vec![] }
    }

    fn at(day: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 5, day, 12, 0, 0).unwrap()
    }

    #[test]
    fn append_to_empty() {
        let mut m = EpisodicMemory::new("a");
        m.append("e", decision(0.3), String::new(), at(1)).unwrap();
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn equal_timestamps_keep_insertion_order() {
        let mut m = EpisodicMemory::new("a");
        m.append("first", decision(0.3), String::new(), at(2)).unwrap();
        m.append("second", decision(0.4), String::new(), at(2)).unwrap();
        assert_eq!(m.records()[0].event, "first");
        assert_eq!(m.records()[1].event, "second");
    }

    #[test]
    fn earlier_timestamp_rejected() {
        let mut m = EpisodicMemory::new("a");
        m.append("x", decision(0.3), String::new(), at(3)).unwrap();
        assert!(matches!(m.append("y", decision(0.3), String::new(), at(2)), Err(AgentError::Memory(_))));
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn events_file_parses_and_checks_order() {
        let ev = parse_events("# comment\n2024-01-01T00:00:00Z first thing\n\n2024-02-01T00:00:00+02:00 second thing\n").unwrap();
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[1].text, "second thing");
        assert!(parse_events("2024-02-01T00:00:00Z b\n2024-01-01T00:00:00Z a\n").is_err());
        assert!(parse_events("yesterday something\n").is_err());
    }

    #[test]
    fn bundled_events_parse() {
        let ev = parse_events(crate::fixtures::ROLLER_COASTER_EVENTS).unwrap();
        assert_eq!(ev.len(), 6);
    }

    proptest! {
        #[test]
        fn jsonl_round_trip(steps in proptest::collection::vec((0u32..1000, 0.0f64..=1.0, "[a-z ,.%\n]{0,40}"), 0..12)) {
            let mut m = EpisodicMemory::new("agent-7");
            let mut t = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
            for (dt, p, text) in steps {
                t += chrono::Duration::seconds(dt as i64);
                m.append(&text, decision(p), text.clone(), t).unwrap();
            }
            let mut buf = Vec::new();
            m.write_jsonl(&mut buf).unwrap();
            let back = EpisodicMemory::read_jsonl(buf.as_slice()).unwrap();
            prop_assert_eq!(&back, &m);
            let mut buf2 = Vec::new();
            back.write_jsonl(&mut buf2).unwrap();
            prop_assert_eq!(buf, buf2);
        }
    }
}
