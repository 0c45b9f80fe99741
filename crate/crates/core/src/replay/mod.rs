//! Reproduces the intelligent tutor's classification of raw student actions
//! into do / try / fail events.

mod parse;
mod synth;

pub use parse::{
    files_under, parse_corpus, parse_corpus_path, parse_corpus_paths, parse_raw_actions, write_corpus, Corpus, Diagnostic, EventRecord,
    RawRecord, SummaryRecord,
};
pub use synth::{generate_corpus, generate_raw_actions, Profile};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{AssignmentConfig, ConfigIndex, ErrorKind, EventKind, StudentEvent, StudentLog};
use crate::error::{Error, Result};

/// One action as captured by the virtual environment, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawAction {
    pub student_id: String,
    pub timestamp: DateTime<Utc>,
    #[serde(rename = "action")]
    pub action_code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world_error: Option<String>,
}

impl RawAction {
    pub fn new(student_id: &str, timestamp: DateTime<Utc>, action_code: &str) -> Self {
        RawAction { student_id: student_id.to_string(), timestamp, action_code: action_code.to_string(), world_error: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Performed {
    pub code: String,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayState {
    pub performed: Vec<Performed>,
    /// Index into the correct flow of the next expected right action.
    pub flow_cursor: usize,
    /// Set once any result-affecting error occurred.
    pub tainted: bool,
}

impl ReplayState {
    pub fn has_performed(&self, code: &str) -> bool {
        self.performed.iter().any(|p| p.code == code)
    }

    fn performed_at(&self, code: &str) -> Option<DateTime<Utc>> {
        self.performed.iter().find(|p| p.code == code).map(|p| p.at)
    }
}

/// Classifies raw actions against one assignment.
#[derive(Debug)]
pub struct Replayer<'a> {
    index: ConfigIndex<'a>,
}

impl<'a> Replayer<'a> {
    pub fn new(config: &'a AssignmentConfig) -> Self {
        Replayer { index: config.index() }
    }

    /// Errors the tutor would report when validating `code` now, in emission
    /// order: dependence, incompatibility, then time.
    fn violations(&self, code: &str, at: DateTime<Utc>, state: &ReplayState) -> Vec<(ErrorKind, String)> {
        let Some(spec) = self.index.action(code) else { return Vec::new() };
        let flow = &self.index.config.correct_flow;

        let mut unmet: Vec<&str> = Vec::new();
        if let Some(pos) = self.index.flow_position(code) {
            for skipped in flow.iter().take(pos).skip(state.flow_cursor) {
                if !state.has_performed(skipped) {
                    unmet.push(skipped);
                }
            }
        }
        for dep in &spec.dependencies {
            if !state.has_performed(dep) && !unmet.contains(&dep.as_str()) {
                unmet.push(dep);
            }
        }
        let dep_kind = if unmet.len() >= 2 { ErrorKind::ComplexDependence } else { ErrorKind::SimpleDependence };
        let mut out: Vec<(ErrorKind, String)> = unmet.into_iter().map(|c| (dep_kind, c.to_string())).collect();

        for done in &state.performed {
            if spec.incompatibilities.contains(&done.code) {
                out.push((ErrorKind::Incompatibility, done.code.clone()));
            }
        }
        for tc in &spec.time_constraints {
            if let Some(then) = state.performed_at(&tc.other) {
                let elapsed = (at - then).num_milliseconds() as f64 / 1000.0;
                if tc.is_violated_by(elapsed) {
                    out.push((ErrorKind::Time, tc.other.clone()));
                }
            }
        }
        out
    }

    fn phase_mismatch(&self, code: &str, state: &ReplayState) -> bool {
        match (self.index.action(code), self.index.phase_at(state.flow_cursor)) {
            (Some(spec), Some(current)) => spec.phase != current,
            _ => false,
        }
    }

    pub fn classify(&self, raw: &RawAction, state: &ReplayState) -> (Vec<StudentEvent>, ReplayState) {
        let code = raw.action_code.as_str();
        let event = |kind, error| StudentEvent::new(&raw.student_id, raw.timestamp, kind, code, error);

        if self.index.action(code).is_none() {
            return (vec![event(EventKind::Try, ErrorKind::NotFound)], state.clone());
        }

        let repeated = state.has_performed(code);
        let wrong_phase = self.phase_mismatch(code, state);
        let violations = self.violations(code, raw.timestamp, state);

        if self.index.is_blocked(code) && (repeated || wrong_phase || !violations.is_empty()) {
            return (vec![event(EventKind::Try, ErrorKind::None)], state.clone());
        }
        if repeated {
            return (vec![event(EventKind::Try, ErrorKind::AlreadyPerformed)], state.clone());
        }
        if wrong_phase {
            return (vec![event(EventKind::Try, ErrorKind::NotFound)], state.clone());
        }

        let spec = self.index.action(code).expect("checked above");
        let mut events = vec![event(EventKind::Do, ErrorKind::None)];
        let mut next = state.clone();
        for (kind, blamed) in violations {
            next.tainted = true;
            events.push(event(EventKind::Fail, kind).blaming(&blamed));
        }
        if raw.world_error.is_some() {
            next.tainted |= spec.world_errors_relevant;
            events.push(event(EventKind::Fail, ErrorKind::World));
        }
        next.performed.push(Performed { code: code.to_string(), at: raw.timestamp });
        if let Some(pos) = self.index.flow_position(code) {
            next.flow_cursor = next.flow_cursor.max(pos + 1);
        }
        (events, next)
    }

    pub fn replay(&self, actions: &[RawAction]) -> Result<StudentLog> {
        let first = actions.first().ok_or_else(|| Error::InvalidReplay("no actions to replay".into()))?;
        let student = first.student_id.as_str();
        let mut state = ReplayState::default();
        let mut events = Vec::new();
        let mut last = first.timestamp;
        for raw in actions {
            if raw.student_id != student {
                return Err(Error::InvalidReplay(format!("stream mixes students {student} and {}", raw.student_id)));
            }
            if raw.timestamp < last {
                return Err(Error::InvalidReplay(format!("actions of {student} are not time-ordered at {}", raw.timestamp)));
            }
            if raw.action_code.is_empty() {
                return Err(Error::InvalidReplay(format!("empty action code for {student}")));
            }
            last = raw.timestamp;
            let (emitted, next) = self.classify(raw, &state);
            events.extend(emitted);
            state = next;
        }
        Ok(StudentLog { student_id: student.to_string(), events, started_at: first.timestamp, finished_at: last, grade: None })
    }
}

pub fn classify_action(raw: &RawAction, state: &ReplayState, config: &AssignmentConfig) -> (Vec<StudentEvent>, ReplayState) {
    Replayer::new(config).classify(raw, state)
}

pub fn replay_student(actions: &[RawAction], config: &AssignmentConfig) -> Result<StudentLog> {
    Replayer::new(config).replay(actions)
}

/// Replays a mixed stream, grouping by student in order of first appearance.
pub fn replay_all(actions: &[RawAction], config: &AssignmentConfig) -> Result<Vec<StudentLog>> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_student: std::collections::HashMap<&str, Vec<RawAction>> = Default::default();
    for raw in actions {
        let entry = by_student.entry(raw.student_id.as_str()).or_insert_with(|| {
            order.push(raw.student_id.as_str());
            Vec::new()
        });
        entry.push(raw.clone());
    }
    let replayer = Replayer::new(config);
    order
        .into_iter()
        .map(|sid| {
            let mut stream = by_student.remove(sid).unwrap_or_default();
            stream.sort_by_key(|r| r.timestamp);
            replayer.replay(&stream)
        })
        .collect()
}
