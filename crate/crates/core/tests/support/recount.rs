//! Brute-force recount of state and edge frequencies. It reads the JSON lines
//! itself and applies the zone rules from scratch, sharing no code with the
//! automaton builder.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde_json::Value;
use tutorviz_core::Automaton;

use super::fixture;

struct Ev {
    at: DateTime<Utc>,
    kind: String,
    action: String,
    error: String,
    blamed: Option<String>,
}

struct Rules {
    flow: HashMap<String, usize>,
    world_relevant: BTreeSet<String>,
}

impl Rules {
    fn load() -> Rules {
        let cfg: Value = serde_json::from_str(&std::fs::read_to_string(fixture("demo_config.json")).unwrap()).unwrap();
        let flow = cfg["correct_flow"].as_array().unwrap().iter().enumerate().map(|(i, c)| (c.as_str().unwrap().to_string(), i)).collect();
        let world_relevant = cfg["actions"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|a| a["world_errors_relevant"].as_bool() == Some(true))
            .map(|a| a["code"].as_str().unwrap().to_string())
            .collect();
        Rules { flow, world_relevant }
    }

    fn relevant(&self, e: &Ev) -> bool {
        e.kind == "fail"
            && match e.error.as_str() {
                "simple_dependence" | "complex_dependence" | "incompatibility" | "time" => true,
                "world" => self.world_relevant.contains(&e.action),
                _ => false,
            }
    }
}

fn key(zone: &str, anchor: usize, e: &Ev) -> String {
    format!("{zone}:{anchor}:{}:{}:{}", e.action, e.blamed.as_deref().unwrap_or("-"), e.error)
}

/// Sequence of state keys visited by one student, initial state first.
fn walk(events: &[Ev], rules: &Rules) -> Vec<(String, String)> {
    let mut out = vec![("correct_flow:0::-:none".to_string(), String::new())];
    let (mut cursor, mut tainted, mut i) = (0usize, false, 0usize);
    while i < events.len() {
        let e = &events[i];
        if e.kind == "do" && e.error == "none" {
            let mut j = i + 1;
            while j < events.len() && events[j].kind == "fail" && events[j].action == e.action {
                j += 1;
            }
            let group = &events[i + 1..j];
            let relevant = group.iter().any(|f| rules.relevant(f));
            let next = match rules.flow.get(&e.action) {
                Some(&p) if p + 1 > cursor => p + 1,
                _ => cursor,
            };
            let anchor = if relevant { cursor } else { next };
            let zone = if relevant || tainted { "relevant_errors" } else { "correct_flow" };
            out.push((key(zone, anchor, e), "do".into()));
            for f in group {
                let zone = if rules.relevant(f) { "relevant_errors" } else { "irrelevant_errors" };
                out.push((key(zone, anchor, f), "fail".into()));
            }
            tainted = tainted || relevant;
            cursor = next;
            i = j;
        } else {
            let r = rules.relevant(e);
            out.push((key(if r { "relevant_errors" } else { "irrelevant_errors" }, cursor, e), e.kind.clone()));
            tainted = tainted || r;
            i += 1;
        }
    }
    out
}

fn read_events(events: &Path) -> BTreeMap<String, Vec<Ev>> {
    let text = std::fs::read_to_string(events).unwrap();
    let mut by_student: BTreeMap<String, Vec<Ev>> = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).unwrap();
        let Some(kind) = v.get("kind").and_then(Value::as_str) else { continue };
        by_student.entry(v["student_id"].as_str().unwrap().to_string()).or_default().push(Ev {
            at: v["timestamp"].as_str().unwrap().parse().unwrap(),
            kind: kind.to_string(),
            action: v["action"].as_str().unwrap().to_string(),
            error: v["error_kind"].as_str().unwrap().to_string(),
            blamed: v.get("blamed").and_then(Value::as_str).map(str::to_string),
        });
    }
    for evs in by_student.values_mut() {
        evs.sort_by_key(|e| e.at);
    }
    by_student
}

pub struct Recount {
    pub n_students: usize,
    pub states: BTreeMap<String, BTreeSet<String>>,
    /// (from, to, event kind) to students.
    pub edges: BTreeMap<(String, String, String), BTreeSet<String>>,
}

pub fn recount(events: &Path) -> Recount {
    let rules = Rules::load();
    let by_student = read_events(events);
    let mut states: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut edges: BTreeMap<(String, String, String), BTreeSet<String>> = BTreeMap::new();
    for (sid, evs) in &by_student {
        let path = walk(evs, &rules);
        for (k, _) in &path {
            states.entry(k.clone()).or_default().insert(sid.clone());
        }
        for w in path.windows(2) {
            edges.entry((w[0].0.clone(), w[1].0.clone(), w[1].1.clone())).or_default().insert(sid.clone());
        }
    }
    Recount { n_students: by_student.len(), states, edges }
}

/// Panics on the first state or edge whose students, count or frequency
/// differ from the recount.
pub fn assert_agrees(a: &Automaton, r: &Recount) {
    let n = r.n_students as f64;
    assert_eq!(a.n_students, r.n_students);
    assert_eq!(a.states.len(), r.states.len());
    for (k, students) in &r.states {
        let node = a.state(&k.parse().unwrap()).unwrap_or_else(|| panic!("missing state {k}"));
        assert_eq!(&node.students, students, "students of {k}");
        let expected = 100.0 * students.len() as f64 / n;
        assert!((a.state_frequency(node) - expected).abs() <= 1e-9, "frequency of {k}");
    }
    assert_eq!(a.edges.len(), r.edges.len());
    for e in a.edges.values() {
        let k = (e.from.key(), e.to.key(), e.event.to_string());
        let students = r.edges.get(&k).unwrap_or_else(|| panic!("unexpected edge {k:?}"));
        assert_eq!(e.count(), students.len(), "count of {k:?}");
        assert_eq!(&e.students, students, "students of {k:?}");
        assert!((a.edge_frequency(e) - 100.0 * students.len() as f64 / n).abs() <= 1e-9);
    }
}
