//! JSON-lines readers and writers for event-record and raw-action files.
//!
//! An event-record file holds one event per line:
//!
//! ```text
//! {"student_id":"s001","timestamp":"2015-03-02T10:00:00Z","kind":"do","action":"f1t1","error_kind":"none"}
//! {"student_id":"s001","timestamp":"2015-03-02T10:01:10Z","kind":"fail","action":"f1t20","error_kind":"simple_dependence","blamed":"f1t14"}
//! {"student_id":"s001","grade":7.5}
//! ```
//!
//! Lines without a `kind` are per-student summary lines carrying the grade
//! and, optionally, explicit `started_at` / `finished_at` times.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::RawAction;
use crate::domain::{ErrorKind, EventKind, StudentEvent, StudentLog};
use crate::error::Result;

/// A malformed or rejected input line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.source {
            Some(src) => write!(f, "{src}:{}: {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub logs: Vec<StudentLog>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub student_id: String,
    pub timestamp: DateTime<Utc>,
    pub kind: String,
    pub action: String,
    #[serde(default = "none_kind")]
    pub error_kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blamed: Option<String>,
}

fn none_kind() -> String {
    ErrorKind::None.as_str().to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub student_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub student_id: String,
    pub timestamp: DateTime<Utc>,
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world_error: Option<String>,
}

impl EventRecord {
    fn into_event(self) -> std::result::Result<StudentEvent, String> {
        let kind: EventKind = self.kind.parse().map_err(|_| format!("unknown event kind {:?}", self.kind))?;
        let error_kind: ErrorKind = self.error_kind.parse().map_err(|_| format!("unknown error kind {:?}", self.error_kind))?;
        let event = StudentEvent {
            student_id: self.student_id,
            timestamp: self.timestamp,
            kind,
            action_code: self.action,
            error_kind,
            blamed_action: self.blamed,
        };
        event.check()?;
        Ok(event)
    }

    pub fn from_event(e: &StudentEvent) -> Self {
        EventRecord {
            student_id: e.student_id.clone(),
            timestamp: e.timestamp,
            kind: e.kind.as_str().to_string(),
            action: e.action_code.clone(),
            error_kind: e.error_kind.as_str().to_string(),
            blamed: e.blamed_action.clone(),
        }
    }
}

#[derive(Default)]
struct Accumulator {
    events: BTreeMap<String, Vec<StudentEvent>>,
    summaries: BTreeMap<String, SummaryRecord>,
    diagnostics: Vec<Diagnostic>,
}

impl Accumulator {
    fn feed<R: BufRead>(&mut self, reader: R, source: Option<&str>) -> Result<()> {
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let number = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let diag = |message: String| Diagnostic { source: source.map(str::to_string), line: number, message };
            let value: Value = match serde_json::from_str(trimmed) {
                Ok(v) => v,
                Err(e) => {
                    self.diagnostics.push(diag(format!("invalid JSON: {e}")));
                    continue;
                }
            };
            if value.get("kind").is_some() {
                let parsed = serde_json::from_value::<EventRecord>(value)
                    .map_err(|e| format!("invalid event record: {e}"))
                    .and_then(EventRecord::into_event);
                match parsed {
                    Ok(event) => self.events.entry(event.student_id.clone()).or_default().push(event),
                    Err(msg) => self.diagnostics.push(diag(msg)),
                }
            } else {
                match serde_json::from_value::<SummaryRecord>(value) {
                    Ok(summary) => {
                        self.summaries.insert(summary.student_id.clone(), summary);
                    }
                    Err(e) => self.diagnostics.push(diag(format!("neither an event nor a summary record: {e}"))),
                }
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Corpus {
        let mut logs = Vec::with_capacity(self.events.len());
        for (student, events) in std::mem::take(&mut self.events) {
            let Some(mut log) = StudentLog::from_events(&student, events) else { continue };
            if let Some(summary) = self.summaries.remove(&student) {
                log.grade = summary.grade;
                if let Some(start) = summary.started_at {
                    log.started_at = start;
                }
                if let Some(end) = summary.finished_at {
                    log.finished_at = end;
                }
            }
            logs.push(log);
        }
        for student in self.summaries.keys() {
            self.diagnostics.push(Diagnostic {
                source: None,
                line: 0,
                message: format!("summary for student {student:?} who has no events"),
            });
        }
        Corpus { logs, diagnostics: self.diagnostics }
    }
}

/// Parses one event-record stream. Logs come out sorted by student id.
pub fn parse_corpus<R: BufRead>(reader: R, source: Option<&str>) -> Result<Corpus> {
    let mut acc = Accumulator::default();
    acc.feed(reader, source)?;
    Ok(acc.finish())
}

/// Parses a file, or every regular file of a directory in name order.
pub fn parse_corpus_path(path: &Path) -> Result<Corpus> {
    parse_corpus_paths(&[path])
}

/// Parses several files or directories as one corpus; a student's events may
/// be spread over several files.
pub fn parse_corpus_paths<P: AsRef<Path>>(paths: &[P]) -> Result<Corpus> {
    let mut acc = Accumulator::default();
    for path in paths {
        for file in files_under(path.as_ref())? {
            let name = file.display().to_string();
            acc.feed(BufReader::new(fs::File::open(&file)?), Some(&name))?;
        }
    }
    Ok(acc.finish())
}

/// A file as given, or every `.jsonl` file below a directory (hidden entries
/// skipped), sorted by path.
pub fn files_under(path: &Path) -> Result<Vec<std::path::PathBuf>> {
    if !path.is_dir() {
        fs::metadata(path)?;
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    let mut pending = vec![path.to_path_buf()];
    while let Some(dir) = pending.pop() {
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            if entry.file_name().to_string_lossy().starts_with('.') {
                continue;
            }
            let kind = entry.file_type()?;
            let p = entry.path();
            if kind.is_dir() {
                pending.push(p);
            } else if kind.is_file() && p.extension().is_some_and(|e| e == "jsonl") {
                files.push(p);
            }
        }
    }
    files.sort();
    Ok(files)
}

/// Writes logs as event records followed by one summary line per student.
pub fn write_corpus<W: Write>(logs: &[StudentLog], mut out: W) -> Result<()> {
    for log in logs {
        for e in &log.events {
            serde_json::to_writer(&mut out, &EventRecord::from_event(e))?;
            out.write_all(b"\n")?;
        }
        let summary = SummaryRecord {
            student_id: log.student_id.clone(),
            grade: log.grade,
            started_at: Some(log.started_at),
            finished_at: Some(log.finished_at),
        };
        serde_json::to_writer(&mut out, &summary)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses a raw-action stream; malformed lines become diagnostics.
pub fn parse_raw_actions<R: BufRead>(reader: R, source: Option<&str>) -> Result<(Vec<RawAction>, Vec<Diagnostic>)> {
    let mut actions = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let diag = |message: String| Diagnostic { source: source.map(str::to_string), line: i + 1, message };
        match serde_json::from_str::<RawRecord>(line.trim()) {
            Ok(r) if r.action.is_empty() => diagnostics.push(diag("empty action code".into())),
            Ok(r) => actions.push(RawAction {
                student_id: r.student_id,
                timestamp: r.timestamp,
                action_code: r.action,
                world_error: r.world_error,
            }),
            Err(e) => diagnostics.push(diag(format!("invalid raw action: {e}"))),
        }
    }
    Ok((actions, diagnostics))
}
