//! Assignment configuration and the event / error / zone vocabulary.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::Error;

fn default_weight() -> f64 {
    1.0
}

/// Bounds on the time elapsed since another action was performed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeConstraint {
    pub other: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_seconds: Option<f64>,
}

impl TimeConstraint {
    pub fn is_violated_by(&self, elapsed_seconds: f64) -> bool {
        self.min_seconds.is_some_and(|min| elapsed_seconds < min) || self.max_seconds.is_some_and(|max| elapsed_seconds > max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub code: String,
    pub phase: String,
    #[serde(default)]
    pub description: String,
    /// Actions that must have been performed before this one.
    #[serde(default)]
    pub dependencies: Vec<String>,
    /// Actions that must not have been performed before this one.
    #[serde(default)]
    pub incompatibilities: Vec<String>,
    #[serde(default)]
    pub time_constraints: Vec<TimeConstraint>,
    /// Pedagogical importance of errors on this action.
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tutoring_message: Option<String>,
    /// World errors on this action affect the final result.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub world_errors_relevant: bool,
}

impl ActionSpec {
    pub fn new(code: impl Into<String>, phase: impl Into<String>) -> Self {
        ActionSpec {
            code: code.into(),
            phase: phase.into(),
            description: String::new(),
            dependencies: Vec::new(),
            incompatibilities: Vec::new(),
            time_constraints: Vec::new(),
            weight: 1.0,
            tutoring_message: None,
            world_errors_relevant: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentConfig {
    pub assignment_id: String,
    pub phases: Vec<String>,
    pub correct_flow: Vec<String>,
    #[serde(default)]
    pub blocked_actions: BTreeSet<String>,
    pub actions: Vec<ActionSpec>,
}

impl AssignmentConfig {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        Ok(serde_json::from_str(text)?)
    }

    /// Linear-flow assignment where every action is on the flow, all in one phase.
    pub fn linear(assignment_id: &str, codes: &[&str]) -> Self {
        AssignmentConfig {
            assignment_id: assignment_id.to_string(),
            phases: vec!["p1".to_string()],
            correct_flow: codes.iter().map(|c| c.to_string()).collect(),
            blocked_actions: BTreeSet::new(),
            actions: codes.iter().map(|c| ActionSpec::new(*c, "p1")).collect(),
        }
    }

    pub fn action(&self, code: &str) -> Option<&ActionSpec> {
        self.actions.iter().find(|a| a.code == code)
    }

    pub fn index(&self) -> ConfigIndex<'_> {
        ConfigIndex::new(self)
    }
}

/// Hash lookups over an [`AssignmentConfig`], built once per pass.
#[derive(Debug)]
pub struct ConfigIndex<'a> {
    pub config: &'a AssignmentConfig,
    actions: HashMap<&'a str, &'a ActionSpec>,
    flow_pos: HashMap<&'a str, usize>,
}

impl<'a> ConfigIndex<'a> {
    pub fn new(config: &'a AssignmentConfig) -> Self {
        let actions = config.actions.iter().map(|a| (a.code.as_str(), a)).collect();
        let mut flow_pos = HashMap::new();
        for (i, code) in config.correct_flow.iter().enumerate() {
            flow_pos.entry(code.as_str()).or_insert(i);
        }
        ConfigIndex { config, actions, flow_pos }
    }

    pub fn action(&self, code: &str) -> Option<&'a ActionSpec> {
        self.actions.get(code).copied()
    }

    pub fn flow_position(&self, code: &str) -> Option<usize> {
        self.flow_pos.get(code).copied()
    }

    pub fn flow_len(&self) -> usize {
        self.config.correct_flow.len()
    }

    pub fn is_blocked(&self, code: &str) -> bool {
        self.config.blocked_actions.contains(code)
    }

    /// Error weight of an action; unknown actions weigh 1.
    pub fn weight(&self, code: &str) -> f64 {
        self.action(code).map_or(1.0, |a| a.weight)
    }

    /// Phase expected while `flow_cursor` points at the next right action.
    pub fn phase_at(&self, flow_cursor: usize) -> Option<&'a str> {
        let flow = &self.config.correct_flow;
        let code = flow.get(flow_cursor).or_else(|| flow.last())?;
        self.action(code).map(|a| a.phase.as_str())
    }
}

/// A single rule violation found by [`validate_config`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub rule: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.code, self.rule, self.message)
    }
}

/// Checks every configuration invariant and returns the violations, sorted.
pub fn validate_config(config: &AssignmentConfig) -> Vec<Violation> {
    let mut out = BTreeSet::new();
    let mut push = |code: &str, rule: &str, message: String| {
        out.insert(Violation { code: code.to_string(), rule: rule.to_string(), message });
    };

    let mut seen = HashSet::new();
    for a in &config.actions {
        if !seen.insert(a.code.as_str()) {
            push(&a.code, "unique-code", format!("action code {:?} is declared more than once", a.code));
        }
    }
    let known: HashSet<&str> = config.actions.iter().map(|a| a.code.as_str()).collect();
    let phases: HashSet<&str> = config.phases.iter().map(String::as_str).collect();

    for a in &config.actions {
        if a.code.is_empty() {
            push(&a.code, "non-empty-code", "action code is empty".into());
        }
        for dep in &a.dependencies {
            if !known.contains(dep.as_str()) {
                push(&a.code, "known-dependency", format!("{} depends on undeclared action {dep:?}", a.code));
            }
        }
        for inc in &a.incompatibilities {
            if !known.contains(inc.as_str()) {
                push(&a.code, "known-incompatibility", format!("{} is incompatible with undeclared action {inc:?}", a.code));
            }
        }
        for tc in &a.time_constraints {
            if !known.contains(tc.other.as_str()) {
                push(&a.code, "known-time-reference", format!("{} has a time constraint on undeclared action {:?}", a.code, tc.other));
            }
            if let (Some(min), Some(max)) = (tc.min_seconds, tc.max_seconds) {
                if min > max {
                    push(&a.code, "time-bounds", format!("{}: min_seconds {min} exceeds max_seconds {max}", a.code));
                }
            }
        }
        if !(a.weight >= 0.0 && a.weight.is_finite()) {
            push(&a.code, "non-negative-weight", format!("{} has weight {}", a.code, a.weight));
        }
        if !phases.contains(a.phase.as_str()) {
            push(&a.code, "known-phase", format!("{} belongs to undeclared phase {:?}", a.code, a.phase));
        }
    }

    let mut in_flow = HashSet::new();
    for code in &config.correct_flow {
        if !known.contains(code.as_str()) {
            push(code, "flow-has-spec", format!("correct flow action {code:?} has no action spec"));
        }
        if !in_flow.insert(code.as_str()) {
            push(code, "flow-unique", format!("correct flow lists {code:?} more than once"));
        }
    }
    for code in &config.blocked_actions {
        if !known.contains(code.as_str()) {
            push(code, "known-blocked", format!("blocked action {code:?} has no action spec"));
        }
    }
    out.into_iter().collect()
}

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Error> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(Error::UnknownName { what: stringify!($name), value: s.to_string() }),
                }
            }
        }
    };
}

named_enum!(
    /// How the tutor logged an event.
    EventKind {
        Do => "do",
        Try => "try",
        Fail => "fail",
    }
);

named_enum!(
    ErrorKind {
        SimpleDependence => "simple_dependence",
        ComplexDependence => "complex_dependence",
        Incompatibility => "incompatibility",
        Time => "time",
        World => "world",
        AlreadyPerformed => "already_performed",
        NotFound => "not_found",
        None => "none",
    }
);

named_enum!(
    Zone {
        CorrectFlow => "correct_flow",
        IrrelevantErrors => "irrelevant_errors",
        RelevantErrors => "relevant_errors",
    }
);

impl ErrorKind {
    pub fn is_dependence(self) -> bool {
        matches!(self, ErrorKind::SimpleDependence | ErrorKind::ComplexDependence)
    }

    /// Dependence, incompatibility and time errors always affect the result.
    pub fn is_always_relevant(self) -> bool {
        matches!(self, ErrorKind::SimpleDependence | ErrorKind::ComplexDependence | ErrorKind::Incompatibility | ErrorKind::Time)
    }
}

impl Zone {
    /// Parses the canonical names plus the short forms used by the search box
    /// ("correct", "irrelevant", "relevant").
    pub fn parse_loose(s: &str) -> Option<Zone> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "correct" | "correct_flow" => Some(Zone::CorrectFlow),
            "irrelevant" | "irrelevant_errors" => Some(Zone::IrrelevantErrors),
            "relevant" | "relevant_errors" => Some(Zone::RelevantErrors),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentEvent {
    pub student_id: String,
    pub timestamp: DateTime<Utc>,
    pub kind: EventKind,
    pub action_code: String,
    pub error_kind: ErrorKind,
    /// For FAIL events: the skipped, missing or conflicting action.
    pub blamed_action: Option<String>,
}

impl StudentEvent {
    pub fn new(student_id: &str, timestamp: DateTime<Utc>, kind: EventKind, action_code: &str, error_kind: ErrorKind) -> Self {
        StudentEvent {
            student_id: student_id.to_string(),
            timestamp,
            kind,
            action_code: action_code.to_string(),
            error_kind,
            blamed_action: None,
        }
    }

    pub fn blaming(mut self, blamed: &str) -> Self {
        self.blamed_action = Some(blamed.to_string());
        self
    }

    /// Checks the kind / error-kind pairing.
    pub fn check(&self) -> Result<(), String> {
        match self.kind {
            EventKind::Fail if self.error_kind == ErrorKind::None => Err(format!("fail event on {} has no error kind", self.action_code)),
            EventKind::Do | EventKind::Try
                if !matches!(self.error_kind, ErrorKind::None | ErrorKind::AlreadyPerformed | ErrorKind::NotFound) =>
            {
                Err(format!("{} event on {} cannot carry error kind {}", self.kind, self.action_code, self.error_kind))
            }
            _ if self.action_code.is_empty() => Err("event has an empty action code".to_string()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentLog {
    pub student_id: String,
    pub events: Vec<StudentEvent>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade: Option<f64>,
}

impl StudentLog {
    /// Builds a log from events, sorting them stably by timestamp and taking
    /// start and finish from the first and last event.
    pub fn from_events(student_id: &str, mut events: Vec<StudentEvent>) -> Option<Self> {
        events.sort_by_key(|e| e.timestamp);
        let started_at = events.first()?.timestamp;
        let finished_at = events.last()?.timestamp;
        Some(StudentLog { student_id: student_id.to_string(), events, started_at, finished_at, grade: None })
    }

    pub fn duration_seconds(&self) -> f64 {
        (self.finished_at - self.started_at).num_milliseconds() as f64 / 1000.0
    }
}
