//! The extended automaton: zoned states merged across students, with the
//! set of students that passed through every state and transition.
//!
//! A state is identified by its zone, the validated action, the blamed
//! action, the error kind and an anchor. The anchor is the number of
//! correct-flow actions passed when the state was reached, which is the
//! column of the correct state the error hangs from. When validating an
//! action produces relevant errors, the action's own state and its errors
//! share the anchor of the state the student came from, so the errors stack
//! under the right column and the untainted flow stays monotone.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{AssignmentConfig, ConfigIndex, ErrorKind, EventKind, StudentEvent, StudentLog, Zone};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateId {
    pub zone: Zone,
    pub anchor: usize,
    pub action: String,
    pub blamed: Option<String>,
    pub error: ErrorKind,
    /// Number of merged states for a super-state, 0 otherwise.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub grouped: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

impl StateId {
    pub fn initial() -> Self {
        StateId { zone: Zone::CorrectFlow, anchor: 0, action: String::new(), blamed: None, error: ErrorKind::None, grouped: 0 }
    }

    pub fn is_initial(&self) -> bool {
        *self == StateId::initial()
    }

    /// Colon-separated form used in URLs and documents.
    pub fn key(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}:{}", self.zone, self.anchor, self.action, self.blamed.as_deref().unwrap_or("-"), self.error)?;
        if self.grouped > 0 {
            write!(f, ":{}", self.grouped)?;
        }
        Ok(())
    }
}

impl FromStr for StateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownState(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        if !(5..=6).contains(&parts.len()) {
            return Err(bad());
        }
        Ok(StateId {
            zone: parts[0].parse().map_err(|_| bad())?,
            anchor: parts[1].parse().map_err(|_| bad())?,
            action: parts[2].to_string(),
            blamed: (parts[3] != "-").then(|| parts[3].to_string()),
            error: parts[4].parse().map_err(|_| bad())?,
            grouped: match parts.get(5) {
                Some(n) => n.parse().map_err(|_| bad())?,
                None => 0,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Correct,
    /// Reached by an attempt the tutor blocked.
    Blocked,
    SimpleDependence,
    ComplexDependence,
    Incompatibility,
    Time,
    World,
    AlreadyPerformed,
    NotFound,
    SuperAlreadyPerformed,
    SuperNotFound,
}

impl StateKind {
    pub fn of(kind: EventKind, error: ErrorKind) -> StateKind {
        match (kind, error) {
            (_, ErrorKind::SimpleDependence) => StateKind::SimpleDependence,
            (_, ErrorKind::ComplexDependence) => StateKind::ComplexDependence,
            (_, ErrorKind::Incompatibility) => StateKind::Incompatibility,
            (_, ErrorKind::Time) => StateKind::Time,
            (_, ErrorKind::World) => StateKind::World,
            (_, ErrorKind::AlreadyPerformed) => StateKind::AlreadyPerformed,
            (_, ErrorKind::NotFound) => StateKind::NotFound,
            (EventKind::Try, ErrorKind::None) => StateKind::Blocked,
            (_, ErrorKind::None) => StateKind::Correct,
        }
    }

    pub fn is_dependence(self) -> bool {
        matches!(self, StateKind::SimpleDependence | StateKind::ComplexDependence)
    }

    pub fn is_fail(self) -> bool {
        matches!(
            self,
            StateKind::SimpleDependence | StateKind::ComplexDependence | StateKind::Incompatibility | StateKind::Time | StateKind::World
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateNode {
    pub id: StateId,
    pub kind: StateKind,
    pub label: String,
    pub students: BTreeSet<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tutoring_message: Option<String>,
}

impl StateNode {
    pub fn count(&self) -> usize {
        self.students.len()
    }
}

pub type EdgeKey = (StateId, StateId, EventKind);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRec {
    pub from: StateId,
    pub to: StateId,
    pub event: EventKind,
    /// Display label such as `do 3` or `fail 4`.
    pub label: String,
    pub students: BTreeSet<String>,
}

impl EdgeRec {
    pub fn key(&self) -> EdgeKey {
        (self.from.clone(), self.to.clone(), self.event)
    }

    pub fn count(&self) -> usize {
        self.students.len()
    }
}

/// Percentage of `n` students represented by `count`.
pub fn frequency_of(count: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::ZeroPopulation);
    }
    Ok(100.0 * count as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "AutomatonDoc", try_from = "AutomatonDoc")]
pub struct Automaton {
    pub cluster_id: Option<usize>,
    pub n_students: usize,
    pub initial: StateId,
    pub states: BTreeMap<StateId, StateNode>,
    pub edges: BTreeMap<EdgeKey, EdgeRec>,
}

impl Automaton {
    pub fn state(&self, id: &StateId) -> Option<&StateNode> {
        self.states.get(id)
    }

    pub fn state_frequency(&self, node: &StateNode) -> f64 {
        frequency_of(node.count(), self.n_students).unwrap_or(0.0)
    }

    pub fn edge_frequency(&self, edge: &EdgeRec) -> f64 {
        frequency_of(edge.count(), self.n_students).unwrap_or(0.0)
    }

    pub fn incoming<'a>(&'a self, id: &'a StateId) -> impl Iterator<Item = &'a EdgeRec> + 'a {
        self.edges.values().filter(move |e| &e.to == id)
    }

    pub fn outgoing<'a>(&'a self, id: &'a StateId) -> impl Iterator<Item = &'a EdgeRec> + 'a {
        self.edges.values().filter(move |e| &e.from == id)
    }

    /// Structural invariants; returns the first broken one.
    pub fn check(&self) -> std::result::Result<(), String> {
        if !self.states.contains_key(&self.initial) {
            return Err("initial state missing".into());
        }
        for node in self.states.values() {
            let f = self.state_frequency(node);
            if !(f > 0.0 && f <= 100.0) {
                return Err(format!("state {} has frequency {f}", node.id));
            }
            if node.kind == StateKind::Correct && node.id.zone == Zone::IrrelevantErrors {
                return Err(format!("correct state {} in the irrelevant zone", node.id));
            }
            if node.kind.is_fail() && node.id.zone == Zone::CorrectFlow {
                return Err(format!("fail state {} in the correct flow", node.id));
            }
        }
        let mut out_union: HashMap<&StateId, BTreeSet<&String>> = HashMap::new();
        for edge in self.edges.values() {
            let (Some(from), Some(to)) = (self.states.get(&edge.from), self.states.get(&edge.to)) else {
                return Err(format!("edge {} -> {} has a missing endpoint", edge.from, edge.to));
            };
            let f = self.edge_frequency(edge);
            if !(f > 0.0 && f <= 100.0) {
                return Err(format!("edge {} -> {} has frequency {f}", edge.from, edge.to));
            }
            if !edge.students.is_subset(&to.students) {
                return Err(format!("edge {} -> {} carries students outside its target", edge.from, edge.to));
            }
            out_union.entry(&from.id).or_default().extend(edge.students.iter());
        }
        for (id, students) in out_union {
            let node = &self.states[id];
            if !students.iter().all(|s| node.students.contains(*s)) {
                return Err(format!("outgoing students of {id} exceed its own"));
            }
        }
        let reached = self.weakly_reachable();
        if reached.len() != self.states.len() {
            return Err(format!("{} states not connected to the initial state", self.states.len() - reached.len()));
        }
        Ok(())
    }

    fn weakly_reachable(&self) -> HashSet<&StateId> {
        let mut adj: HashMap<&StateId, Vec<&StateId>> = HashMap::new();
        for e in self.edges.values() {
            adj.entry(&e.from).or_default().push(&e.to);
            adj.entry(&e.to).or_default().push(&e.from);
        }
        let mut seen = HashSet::from([&self.initial]);
        let mut stack = vec![&self.initial];
        while let Some(id) = stack.pop() {
            for next in adj.get(id).into_iter().flatten() {
                if seen.insert(*next) {
                    stack.push(next);
                }
            }
        }
        seen
    }
}

/// One event of a log mapped onto the automaton.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStep {
    pub state: StateId,
    pub kind: StateKind,
    pub event: EventKind,
    pub edge_label: String,
}

fn is_relevant_fail(e: &StudentEvent, index: &ConfigIndex<'_>) -> bool {
    e.kind == EventKind::Fail
        && (e.error_kind.is_always_relevant()
            || (e.error_kind == ErrorKind::World && index.action(&e.action_code).is_some_and(|a| a.world_errors_relevant)))
}

fn check_event(log: &StudentLog, i: usize, e: &StudentEvent, index: &ConfigIndex<'_>) -> Result<()> {
    let unknown = |action: &str| Error::UnknownAction { student: log.student_id.clone(), index: i, action: action.to_string() };
    if e.error_kind != ErrorKind::NotFound && index.action(&e.action_code).is_none() {
        return Err(unknown(&e.action_code));
    }
    if let Some(blamed) = &e.blamed_action {
        if index.action(blamed).is_none() {
            return Err(unknown(blamed));
        }
    }
    Ok(())
}

fn step_for(e: &StudentEvent, zone: Zone, anchor: usize) -> PathStep {
    let kind = StateKind::of(e.kind, e.error_kind);
    let shown = match e.kind {
        EventKind::Fail => e.blamed_action.as_deref().unwrap_or(&e.action_code),
        _ => &e.action_code,
    };
    PathStep {
        state: StateId { zone, anchor, action: e.action_code.clone(), blamed: e.blamed_action.clone(), error: e.error_kind, grouped: 0 },
        kind,
        event: e.kind,
        edge_label: format!("{} {}", e.kind, shown),
    }
}

/// Maps every event of a log to the state it reaches, applying the zone rules.
pub fn log_path(log: &StudentLog, config: &AssignmentConfig) -> Result<Vec<PathStep>> {
    path_with_index(log, &config.index())
}

fn path_with_index(log: &StudentLog, index: &ConfigIndex<'_>) -> Result<Vec<PathStep>> {
    let events = &log.events;
    let mut steps = Vec::with_capacity(events.len());
    let mut cursor = 0usize;
    let mut tainted = false;
    let mut i = 0;
    while i < events.len() {
        let e = &events[i];
        check_event(log, i, e, index)?;
        match (e.kind, e.error_kind) {
            (EventKind::Do, ErrorKind::None) => {
                let mut end = i + 1;
                while end < events.len() && events[end].kind == EventKind::Fail && events[end].action_code == e.action_code {
                    check_event(log, end, &events[end], index)?;
                    end += 1;
                }
                let fails = &events[i + 1..end];
                let relevant = fails.iter().any(|f| is_relevant_fail(f, index));
                let after = index.flow_position(&e.action_code).map_or(cursor, |p| cursor.max(p + 1));
                let anchor = if relevant { cursor } else { after };
                let zone = if tainted || relevant { Zone::RelevantErrors } else { Zone::CorrectFlow };
                steps.push(step_for(e, zone, anchor));
                for f in fails {
                    let zone = if is_relevant_fail(f, index) { Zone::RelevantErrors } else { Zone::IrrelevantErrors };
                    steps.push(step_for(f, zone, anchor));
                }
                tainted |= relevant;
                cursor = after;
                i = end;
            }
            (EventKind::Fail, _) => {
                let relevant = is_relevant_fail(e, index);
                let zone = if relevant { Zone::RelevantErrors } else { Zone::IrrelevantErrors };
                steps.push(step_for(e, zone, cursor));
                tainted |= relevant;
                i += 1;
            }
            _ => {
                steps.push(step_for(e, Zone::IrrelevantErrors, cursor));
                i += 1;
            }
        }
    }
    Ok(steps)
}

fn label_for(id: &StateId, kind: StateKind) -> String {
    if id.is_initial() {
        return "start".to_string();
    }
    match kind {
        StateKind::World => format!("{}_world", id.action),
        k if k.is_fail() => match &id.blamed {
            Some(b) => format!("{}_{}", id.action, b),
            None => id.action.clone(),
        },
        _ => id.action.clone(),
    }
}

fn describe(id: &StateId, kind: StateKind, index: &ConfigIndex<'_>) -> (String, Option<String>) {
    if id.is_initial() {
        return ("Start of the practical assignment".to_string(), None);
    }
    let spec = index.action(&id.action);
    let what = spec.map_or_else(|| format!("action {} (not in this assignment)", id.action), |a| a.description.clone());
    let blamed = id.blamed.as_deref().map(|b| index.action(b).map_or_else(|| b.to_string(), |a| format!("{b} ({})", a.description)));
    let text = match (kind, blamed) {
        (StateKind::SimpleDependence | StateKind::ComplexDependence, Some(b)) => format!("{what}: required action {b} was not done before"),
        (StateKind::Incompatibility, Some(b)) => format!("{what}: incompatible with previously performed {b}"),
        (StateKind::Time, Some(b)) => format!("{what}: time constraint relative to {b} not respected"),
        (StateKind::World, _) => format!("{what}: failure handling an object"),
        (StateKind::AlreadyPerformed, _) => format!("{what}: action already performed"),
        (StateKind::NotFound, _) => format!("{what}: action not expected in the current phase"),
        (StateKind::Blocked, _) => format!("{what}: attempt blocked by the tutor"),
        _ => what,
    };
    (text, spec.and_then(|a| a.tutoring_message.clone()))
}

/// Folds student logs into one automaton.
pub fn build_automaton(logs: &[StudentLog], config: &AssignmentConfig) -> Result<Automaton> {
    if logs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let index = config.index();
    let mut seen = HashSet::new();
    for log in logs {
        if !seen.insert(log.student_id.as_str()) {
            return Err(Error::InvalidReplay(format!("student {} appears in more than one log", log.student_id)));
        }
    }

    let initial = StateId::initial();
    let mut states: BTreeMap<StateId, StateNode> = BTreeMap::new();
    let mut edges: BTreeMap<EdgeKey, EdgeRec> = BTreeMap::new();
    let mut touch_state = |id: &StateId, kind: StateKind, student: &str| {
        states
            .entry(id.clone())
            .or_insert_with(|| {
                let (description, tutoring_message) = describe(id, kind, &index);
                StateNode { id: id.clone(), kind, label: label_for(id, kind), students: BTreeSet::new(), description, tutoring_message }
            })
            .students
            .insert(student.to_string());
    };

    for log in logs {
        let path = path_with_index(log, &index)?;
        let sid = log.student_id.as_str();
        touch_state(&initial, StateKind::Correct, sid);
        let mut prev = initial.clone();
        for step in path {
            touch_state(&step.state, step.kind, sid);
            let key = (prev.clone(), step.state.clone(), step.event);
            edges
                .entry(key)
                .or_insert_with(|| EdgeRec {
                    from: prev.clone(),
                    to: step.state.clone(),
                    event: step.event,
                    label: step.edge_label.clone(),
                    students: BTreeSet::new(),
                })
                .students
                .insert(sid.to_string());
            prev = step.state;
        }
    }

    Ok(Automaton { cluster_id: None, n_students: logs.len(), initial, states, edges })
}

fn super_kind(kind: StateKind) -> Option<StateKind> {
    match kind {
        StateKind::AlreadyPerformed => Some(StateKind::SuperAlreadyPerformed),
        StateKind::NotFound => Some(StateKind::SuperNotFound),
        _ => None,
    }
}

/// Collapses every connected run of two or more already-performed states (and,
/// separately, not-found states) into one super-state. Edges are re-attached
/// to the super-state; edges inside a run disappear.
pub fn group_super_states(a: &Automaton) -> Automaton {
    group_super_states_with_map(a).0
}

/// Like [`group_super_states`], also returning which super-state each
/// collapsed state went into.
pub fn group_super_states_with_map(a: &Automaton) -> (Automaton, HashMap<StateId, StateId>) {
    let mut member_of: HashMap<StateId, StateId> = HashMap::new();
    let mut new_states: BTreeMap<StateId, StateNode> = BTreeMap::new();

    for kind in [StateKind::AlreadyPerformed, StateKind::NotFound] {
        let mut adj: HashMap<&StateId, Vec<&StateId>> = HashMap::new();
        for e in a.edges.values() {
            if e.from == e.to {
                continue;
            }
            let (Some(f), Some(t)) = (a.states.get(&e.from), a.states.get(&e.to)) else { continue };
            if f.kind == kind && t.kind == kind {
                adj.entry(&e.from).or_default().push(&e.to);
                adj.entry(&e.to).or_default().push(&e.from);
            }
        }
        let mut visited: HashSet<&StateId> = HashSet::new();
        for start in a.states.values().filter(|n| n.kind == kind).map(|n| &n.id) {
            if !visited.insert(start) {
                continue;
            }
            let mut component = vec![start];
            let mut stack = vec![start];
            while let Some(id) = stack.pop() {
                for next in adj.get(id).into_iter().flatten() {
                    if visited.insert(*next) {
                        component.push(next);
                        stack.push(next);
                    }
                }
            }
            if component.len() < 2 {
                continue;
            }
            let members: Vec<&StateNode> = component.iter().map(|id| &a.states[*id]).collect();
            let mut labels: Vec<&str> = members.iter().map(|m| m.label.as_str()).collect();
            labels.sort_unstable();
            labels.dedup();
            let sk = super_kind(kind).expect("groupable kind");
            let id = StateId {
                zone: members[0].id.zone,
                anchor: members.iter().map(|m| m.id.anchor).min().unwrap_or(0),
                action: labels.join("+"),
                blamed: None,
                error: members[0].id.error,
                grouped: members.len(),
            };
            let what = if sk == StateKind::SuperAlreadyPerformed { "already performed" } else { "not found" };
            let node = StateNode {
                id: id.clone(),
                kind: sk,
                label: format!("{what} ({})", members.len()),
                students: members.iter().flat_map(|m| m.students.iter().cloned()).collect(),
                description: format!("{} consecutive \"{what}\" states: {}", members.len(), labels.join(", ")),
                tutoring_message: None,
            };
            for m in &members {
                member_of.insert(m.id.clone(), id.clone());
            }
            new_states.insert(id, node);
        }
    }

    if member_of.is_empty() {
        return (a.clone(), member_of);
    }
    for (id, node) in &a.states {
        if !member_of.contains_key(id) {
            new_states.insert(id.clone(), node.clone());
        }
    }
    let map = |id: &StateId| member_of.get(id).cloned().unwrap_or_else(|| id.clone());
    let mut new_edges: BTreeMap<EdgeKey, EdgeRec> = BTreeMap::new();
    for e in a.edges.values() {
        let (from, to) = (map(&e.from), map(&e.to));
        if from == to && from.grouped > 0 {
            continue;
        }
        let key = (from.clone(), to.clone(), e.event);
        new_edges
            .entry(key)
            .or_insert_with(|| EdgeRec { from, to, event: e.event, label: e.label.clone(), students: BTreeSet::new() })
            .students
            .extend(e.students.iter().cloned());
    }
    let grouped =
        Automaton { cluster_id: a.cluster_id, n_students: a.n_students, initial: a.initial.clone(), states: new_states, edges: new_edges };
    (grouped, member_of)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StateDoc {
    key: String,
    #[serde(flatten)]
    id: StateId,
    kind: StateKind,
    label: String,
    count: usize,
    frequency: f64,
    students: BTreeSet<String>,
    #[serde(default)]
    description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tutoring_message: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EdgeDoc {
    from: String,
    to: String,
    event: EventKind,
    label: String,
    count: usize,
    frequency: f64,
    students: BTreeSet<String>,
}

/// Persistent form: states and edges in a stable (zone, anchor, label) order.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct AutomatonDoc {
    #[serde(default)]
    cluster_id: Option<usize>,
    n_students: usize,
    initial: String,
    states: Vec<StateDoc>,
    edges: Vec<EdgeDoc>,
}

impl From<Automaton> for AutomatonDoc {
    fn from(a: Automaton) -> Self {
        let n = a.n_students;
        let freq = |c: usize| frequency_of(c, n).unwrap_or(0.0);
        let mut states: Vec<StateDoc> = a
            .states
            .into_values()
            .map(|s| StateDoc {
                key: s.id.key(),
                frequency: freq(s.count()),
                count: s.count(),
                id: s.id,
                kind: s.kind,
                label: s.label,
                students: s.students,
                description: s.description,
                tutoring_message: s.tutoring_message,
            })
            .collect();
        states.sort_by(|x, y| (x.id.zone, x.id.anchor, &x.label, &x.key).cmp(&(y.id.zone, y.id.anchor, &y.label, &y.key)));
        let edges = a
            .edges
            .into_values()
            .map(|e| EdgeDoc {
                from: e.from.key(),
                to: e.to.key(),
                event: e.event,
                label: e.label,
                count: e.students.len(),
                frequency: freq(e.students.len()),
                students: e.students,
            })
            .collect();
        AutomatonDoc { cluster_id: a.cluster_id, n_students: n, initial: a.initial.key(), states, edges }
    }
}

impl TryFrom<AutomatonDoc> for Automaton {
    type Error = Error;

    fn try_from(doc: AutomatonDoc) -> Result<Self> {
        let mut states = BTreeMap::new();
        for s in doc.states {
            states.insert(
                s.id.clone(),
                StateNode {
                    id: s.id,
                    kind: s.kind,
                    label: s.label,
                    students: s.students,
                    description: s.description,
                    tutoring_message: s.tutoring_message,
                },
            );
        }
        let mut edges = BTreeMap::new();
        for e in doc.edges {
            let rec = EdgeRec { from: e.from.parse()?, to: e.to.parse()?, event: e.event, label: e.label, students: e.students };
            edges.insert(rec.key(), rec);
        }
        Ok(Automaton { cluster_id: doc.cluster_id, n_students: doc.n_students, initial: doc.initial.parse()?, states, edges })
    }
}
