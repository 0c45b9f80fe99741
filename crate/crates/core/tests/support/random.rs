//! Random student logs over a small two-phase assignment, and an
//! independent finder for the runs that super-state grouping should collapse.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Duration, Utc};
use proptest::prelude::*;
use tutorviz_core::replay::{replay_student, RawAction};
use tutorviz_core::{build_automaton, ActionSpec, AssignmentConfig, Automaton, StateId, StateKind, StudentLog};

pub const CODES: [&str; 8] = ["a1", "a2", "a3", "a4", "b1", "b2", "b3", "zz"];

/// Two phases so that early phase-2 actions are not found, plus an unknown
/// code and an incompatibility.
pub fn config() -> AssignmentConfig {
    let mut cfg = AssignmentConfig::linear("prop", &["a1", "a2", "a3", "a4", "b1", "b2", "b3"]);
    cfg.phases.push("p2".into());
    for a in cfg.actions.iter_mut().filter(|a| a.code.starts_with('b')) {
        a.phase = "p2".into();
    }
    cfg.actions.push(ActionSpec::new("x1", "p1"));
    cfg.actions[3].incompatibilities.push("x1".into());
    cfg
}

pub fn t0() -> DateTime<Utc> {
    "2015-01-01T00:00:00Z".parse().unwrap()
}

pub fn logs_strategy(max_students: usize) -> impl Strategy<Value = Vec<StudentLog>> {
    let code = prop_oneof![4 => (0..CODES.len()).prop_map(|i| CODES[i]), 1 => Just("x1")];
    prop::collection::vec((prop::collection::vec(code, 1..16), 0i64..40), 1..=max_students).prop_map(|students| {
        let cfg = config();
        students
            .iter()
            .enumerate()
            .map(|(i, (codes, day))| {
                let sid = format!("p{i:02}");
                let start = t0() + Duration::days(*day);
                let raw: Vec<RawAction> =
                    codes.iter().enumerate().map(|(j, c)| RawAction::new(&sid, start + Duration::seconds(30 * j as i64), c)).collect();
                replay_student(&raw, &cfg).unwrap()
            })
            .collect()
    })
}

pub fn automaton_strategy() -> impl Strategy<Value = Automaton> {
    logs_strategy(8).prop_map(|logs| build_automaton(&logs, &config()).unwrap())
}

pub fn groupable(k: StateKind) -> bool {
    matches!(k, StateKind::AlreadyPerformed | StateKind::NotFound)
}

/// Weakly connected same-kind components of already-performed and not-found
/// states, found by union-find.
pub fn runs(a: &Automaton) -> Vec<BTreeSet<StateId>> {
    let ids: Vec<&StateId> = a.states.keys().collect();
    let pos: HashMap<&StateId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for e in a.edges.values() {
        let (f, t) = (&a.states[&e.from], &a.states[&e.to]);
        if e.from != e.to && groupable(f.kind) && f.kind == t.kind {
            let (x, y) = (root(&mut parent, pos[&e.from]), root(&mut parent, pos[&e.to]));
            parent[x] = y;
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<StateId>> = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        if groupable(a.states[*id].kind) {
            let r = root(&mut parent, i);
            groups.entry(r).or_default().insert((*id).clone());
        }
    }
    groups.into_values().filter(|g| g.len() >= 2).collect()
}

/// Students on edges crossing into (or out of) a set of states.
pub fn boundary_students(a: &Automaton, set: &BTreeSet<StateId>, incoming: bool) -> BTreeSet<String> {
    a.edges
        .values()
        .filter(|e| if incoming { set.contains(&e.to) && !set.contains(&e.from) } else { set.contains(&e.from) && !set.contains(&e.to) })
        .flat_map(|e| e.students.iter().cloned())
        .collect()
}
