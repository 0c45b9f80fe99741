//! Instructor-facing views over a built model: threshold filtering, search,
//! per-date and per-student views, details on demand, and the comparison of
//! two periods.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::automaton::{
    build_automaton, group_super_states_with_map, log_path, Automaton, EdgeKey, EdgeRec, StateId, StateKind, StateNode,
};
use crate::domain::{AssignmentConfig, EventKind, StudentLog, Zone};
use crate::error::{Error, Result};
use crate::layout::LayoutGraph;
use crate::stats::{mann_whitney_u, welch_t_test, TTest, UTest};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterSpec {
    #[serde(default)]
    pub min_node_freq: f64,
    #[serde(default)]
    pub min_edge_freq: f64,
}

impl FilterSpec {
    pub fn new(min_node_freq: f64, min_edge_freq: f64) -> Result<Self> {
        for v in [min_node_freq, min_edge_freq] {
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::InvalidParams(format!("threshold {v} is outside [0, 100]")));
            }
        }
        Ok(FilterSpec { min_node_freq, min_edge_freq })
    }
}

/// Drops states and edges below the thresholds, and edges whose endpoints
/// were dropped. The initial state always stays.
pub fn filter_graph(a: &Automaton, f: &FilterSpec) -> Automaton {
    let states: BTreeMap<StateId, StateNode> = a
        .states
        .iter()
        .filter(|(id, n)| id.is_initial() || a.state_frequency(n) >= f.min_node_freq)
        .map(|(id, n)| (id.clone(), n.clone()))
        .collect();
    let edges = a
        .edges
        .iter()
        .filter(|(_, e)| a.edge_frequency(e) >= f.min_edge_freq && states.contains_key(&e.from) && states.contains_key(&e.to))
        .map(|(k, e)| (k.clone(), e.clone()))
        .collect();
    Automaton { cluster_id: a.cluster_id, n_students: a.n_students, initial: a.initial.clone(), states, edges }
}

/// A precomputed layout restricted to what [`filter_graph`] keeps; positions
/// are not recomputed.
pub fn filtered_layout(layout: &LayoutGraph, a: &Automaton, f: &FilterSpec) -> LayoutGraph {
    let kept = filter_graph(a, f);
    let node_ids: HashSet<String> = kept.states.keys().map(StateId::key).collect();
    let edge_ids: HashSet<(String, String, EventKind)> = kept.edges.values().map(|e| (e.from.key(), e.to.key(), e.event)).collect();
    let mut out = layout.clone();
    out.nodes.retain(|n| node_ids.contains(&n.id));
    out.edges.retain(|e| edge_ids.contains(&(e.from.clone(), e.to.clone(), e.event)));
    out
}

pub fn logs_in_range(logs: &[StudentLog], from: DateTime<Utc>, to: DateTime<Utc>) -> Result<Vec<&StudentLog>> {
    if from > to {
        return Err(Error::InvertedRange { from: from.to_rfc3339(), to: to.to_rfc3339() });
    }
    Ok(logs.iter().filter(|l| l.started_at >= from && l.started_at <= to).collect())
}

/// Automaton of the students who started within `[from, to]`.
pub fn date_view(logs: &[StudentLog], from: DateTime<Utc>, to: DateTime<Utc>, config: &AssignmentConfig) -> Result<Automaton> {
    let selected: Vec<StudentLog> = logs_in_range(logs, from, to)?.into_iter().cloned().collect();
    if selected.is_empty() {
        return Err(Error::EmptyRange { from: from.to_rfc3339(), to: to.to_rfc3339() });
    }
    build_automaton(&selected, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub state: StateNode,
    /// Transition into `state`.
    pub edge: EdgeRec,
    /// Log events represented by this step; more than one when consecutive
    /// events fell into the same super-state.
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentTrace {
    pub student_id: String,
    /// Single-log automaton with super-states grouped.
    pub automaton: Automaton,
    pub steps: Vec<TraceStep>,
}

/// The path of one student's log through its own automaton.
pub fn student_trace(logs: &[StudentLog], student_id: &str, config: &AssignmentConfig) -> Result<StudentTrace> {
    let log = logs.iter().find(|l| l.student_id == student_id).ok_or_else(|| Error::UnknownStudent(student_id.to_string()))?;
    let single = build_automaton(std::slice::from_ref(log), config)?;
    let (grouped, member_of) = group_super_states_with_map(&single);
    let map = |id: StateId| member_of.get(&id).cloned().unwrap_or(id);

    let mut steps: Vec<TraceStep> = Vec::new();
    let mut prev = grouped.initial.clone();
    for step in log_path(log, config)? {
        let id = map(step.state);
        if id == prev && id.grouped > 0 {
            steps.last_mut().expect("a super-state is entered by an edge").events += 1;
            continue;
        }
        let edge = grouped
            .edges
            .get(&(prev.clone(), id.clone(), step.event))
            .cloned()
            .ok_or_else(|| Error::UnknownEdge(format!("{prev} -> {id}")))?;
        let state = grouped.states.get(&id).cloned().ok_or_else(|| Error::UnknownState(id.key()))?;
        steps.push(TraceStep { state, edge, events: 1 });
        prev = id;
    }
    Ok(StudentTrace { student_id: student_id.to_string(), automaton: grouped, steps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub label: String,
    pub zone: Zone,
    pub kind: StateKind,
    pub frequency: f64,
    pub count: usize,
}

/// Splits a search box entry such as `f3t61 correct` into the code prefix and
/// an optional trailing zone name.
pub fn parse_search_query(text: &str) -> (String, Option<Zone>) {
    let mut words: Vec<&str> = text.split_whitespace().collect();
    if words.len() > 1 {
        if let Some(zone) = words.last().and_then(|w| Zone::parse_loose(w)) {
            words.pop();
            return (words.join(" "), Some(zone));
        }
    }
    (words.join(" "), None)
}

/// States whose label starts with `query` (case-insensitive), most frequent
/// first.
pub fn search_state(a: &Automaton, query: &str, zone: Option<Zone>) -> Vec<SearchHit> {
    let q = query.trim().to_lowercase();
    let mut hits: Vec<SearchHit> = a
        .states
        .values()
        .filter(|n| zone.is_none_or(|z| n.id.zone == z) && n.label.to_lowercase().starts_with(&q))
        .map(|n| SearchHit {
            id: n.id.key(),
            label: n.label.clone(),
            zone: n.id.zone,
            kind: n.kind,
            frequency: a.state_frequency(n),
            count: n.count(),
        })
        .collect();
    hits.sort_by(|x, y| y.count.cmp(&x.count).then_with(|| x.label.cmp(&y.label)).then_with(|| x.id.cmp(&y.id)));
    hits
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSummary {
    pub from: String,
    pub to: String,
    pub event: EventKind,
    pub label: String,
    pub count: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDetails {
    pub id: String,
    pub label: String,
    pub zone: Zone,
    pub kind: StateKind,
    pub count: usize,
    pub n_students: usize,
    pub frequency: f64,
    pub description: String,
    pub tutoring_message: Option<String>,
    pub incoming: Vec<EdgeSummary>,
    pub outgoing: Vec<EdgeSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDetails {
    #[serde(flatten)]
    pub edge: EdgeSummary,
    pub n_students: usize,
    pub from_label: String,
    pub to_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Details {
    State(StateDetails),
    Edge(EdgeDetails),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    State(StateId),
    Edge(EdgeKey),
}

fn summary(a: &Automaton, e: &EdgeRec) -> EdgeSummary {
    EdgeSummary {
        from: e.from.key(),
        to: e.to.key(),
        event: e.event,
        label: e.label.clone(),
        count: e.count(),
        frequency: a.edge_frequency(e),
    }
}

pub fn details_of(a: &Automaton, target: &Target) -> Result<Details> {
    match target {
        Target::State(id) => {
            let n = a.states.get(id).ok_or_else(|| Error::UnknownState(id.key()))?;
            Ok(Details::State(StateDetails {
                id: id.key(),
                label: n.label.clone(),
                zone: id.zone,
                kind: n.kind,
                count: n.count(),
                n_students: a.n_students,
                frequency: a.state_frequency(n),
                description: n.description.clone(),
                tutoring_message: n.tutoring_message.clone(),
                incoming: a.incoming(id).map(|e| summary(a, e)).collect(),
                outgoing: a.outgoing(id).map(|e| summary(a, e)).collect(),
            }))
        }
        Target::Edge(key) => {
            let e = a.edges.get(key).ok_or_else(|| Error::UnknownEdge(format!("{} -> {} ({})", key.0, key.1, key.2)))?;
            Ok(Details::Edge(EdgeDetails {
                edge: summary(a, e),
                n_students: a.n_students,
                from_label: a.states[&e.from].label.clone(),
                to_label: a.states[&e.to].label.clone(),
            }))
        }
    }
}

/// Rows below this frequency in both periods are flagged as suppressed.
pub const SUPPRESSION_THRESHOLD: f64 = 0.30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub change_id: Option<String>,
    pub action: String,
    /// Blamed action, or the error kind when nothing is blamed.
    pub error: String,
    pub label: String,
    pub count_a: usize,
    pub count_b: usize,
    /// Share of students of each period who made the error, in [0, 1].
    pub freq_a: f64,
    pub freq_b: f64,
    pub difference: f64,
    pub suppressed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodComparison {
    pub n_a: usize,
    pub n_b: usize,
    pub rows: Vec<ComparisonRow>,
    /// Differences of changed errors against those of unchanged ones.
    pub t_test: Option<TTest>,
    /// Grades of period A against period B.
    pub u_test: Option<UTest>,
}

fn error_students(logs: &[StudentLog]) -> BTreeMap<(String, String), BTreeSet<&str>> {
    let mut out: BTreeMap<(String, String), BTreeSet<&str>> = BTreeMap::new();
    for log in logs {
        for e in log.events.iter().filter(|e| e.kind == EventKind::Fail) {
            let error = e.blamed_action.clone().unwrap_or_else(|| e.error_kind.to_string());
            out.entry((e.action_code.clone(), error)).or_default().insert(&log.student_id);
        }
    }
    out
}

/// Difference `a/n - b/m` with a single rounding, so swapping the periods
/// negates it exactly.
fn exact_difference(a: usize, n: usize, b: usize, m: usize) -> f64 {
    let num = a as i128 * m as i128 - b as i128 * n as i128;
    num as f64 / (n as i128 * m as i128) as f64
}

/// Per-error frequencies in two periods, their differences, and the tests.
/// `change_map` maps error labels such as `f1t20_f1t16` to the id of the
/// tutoring change that targeted them.
pub fn compare_periods(logs_a: &[StudentLog], logs_b: &[StudentLog], change_map: &BTreeMap<String, String>) -> Result<PeriodComparison> {
    if logs_a.is_empty() || logs_b.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (n_a, n_b) = (logs_a.len(), logs_b.len());
    let errors_a = error_students(logs_a);
    let errors_b = error_students(logs_b);
    let keys: BTreeSet<&(String, String)> = errors_a.keys().chain(errors_b.keys()).collect();
    let rows: Vec<ComparisonRow> = keys
        .into_iter()
        .map(|key| {
            let (action, error) = key;
            let count_a = errors_a.get(key).map_or(0, BTreeSet::len);
            let count_b = errors_b.get(key).map_or(0, BTreeSet::len);
            let label = format!("{action}_{error}");
            let freq_a = count_a as f64 / n_a as f64;
            let freq_b = count_b as f64 / n_b as f64;
            ComparisonRow {
                change_id: change_map.get(&label).cloned(),
                action: action.clone(),
                error: error.clone(),
                label,
                count_a,
                count_b,
                freq_a,
                freq_b,
                difference: exact_difference(count_a, n_a, count_b, n_b),
                suppressed: freq_a < SUPPRESSION_THRESHOLD && freq_b < SUPPRESSION_THRESHOLD,
            }
        })
        .collect();

    let (changed, unchanged): (Vec<&ComparisonRow>, Vec<&ComparisonRow>) = rows.iter().partition(|r| r.change_id.is_some());
    let diffs = |rs: &[&ComparisonRow]| rs.iter().map(|r| r.difference).collect::<Vec<f64>>();
    let t_test = welch_t_test(&diffs(&changed), &diffs(&unchanged)).ok();
    let grades = |logs: &[StudentLog]| logs.iter().filter_map(|l| l.grade).collect::<Vec<f64>>();
    let u_test = mann_whitney_u(&grades(logs_a), &grades(logs_b)).ok();
    Ok(PeriodComparison { n_a, n_b, rows, t_test, u_test })
}
