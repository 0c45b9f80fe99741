//! Layout invariants, and random automata of a given size.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tutorviz_core::layout::{fill_color, outline_color, LayoutGraph, LayoutNode};
use tutorviz_core::{Automaton, EdgeRec, ErrorKind, EventKind, StateId, StateKind, StateNode, Zone};

pub fn rects_overlap(a: &LayoutNode, b: &LayoutNode) -> bool {
    (a.x - b.x).abs() * 2.0 < a.w + b.w && (a.y - b.y).abs() * 2.0 < a.h + b.h
}

pub fn assert_invariants(a: &Automaton, g: &LayoutGraph) {
    assert_eq!(g.nodes.len(), a.states.len());
    assert_eq!(g.edges.len(), a.edges.len());
    for (i, x) in g.nodes.iter().enumerate() {
        for y in &g.nodes[i + 1..] {
            assert!(!rects_overlap(x, y), "{} overlaps {}", x.id, y.id);
        }
    }

    let b = &g.bands;
    assert!(b.irrelevant_errors.top >= 0.0);
    assert!(b.irrelevant_errors.bottom < b.correct_flow.top);
    assert!(b.correct_flow.bottom < b.relevant_errors.top);
    for n in &g.nodes {
        let band = b.of(n.zone);
        assert!(n.top() >= band.top && n.bottom() <= band.bottom, "{} leaves its band", n.id);
        assert_eq!(n.fill, fill_color(n.kind));
        assert_eq!(n.outline, outline_color(n.zone));
    }

    // within each relevant column: dependence above incompatibility above time
    let mut by_column: BTreeMap<usize, Vec<&LayoutNode>> = BTreeMap::new();
    for n in g.nodes.iter().filter(|n| n.zone == Zone::RelevantErrors) {
        by_column.entry(n.column).or_default().push(n);
    }
    let rank = |k: StateKind| match k {
        StateKind::SimpleDependence | StateKind::ComplexDependence => Some(0),
        StateKind::Incompatibility => Some(1),
        StateKind::Time => Some(2),
        _ => None,
    };
    for column in by_column.values() {
        for x in column {
            for y in column {
                if let (Some(rx), Some(ry)) = (rank(x.kind), rank(y.kind)) {
                    if rx < ry {
                        assert!(x.y < y.y, "{} should sit above {}", x.id, y.id);
                    }
                }
            }
        }
    }
}

/// Random automaton with exactly the given numbers of states and edges, far
/// denser than real logs produce.
pub fn dense(n_states: usize, n_edges: usize, seed: u64) -> Automaton {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_students = 87;
    let students = |rng: &mut ChaCha8Rng| -> BTreeSet<String> {
        let k = rng.random_range(1..=n_students);
        (0..k).map(|i| format!("s{i:03}")).collect()
    };
    let kinds = [
        (Zone::RelevantErrors, ErrorKind::None, StateKind::Correct),
        (Zone::RelevantErrors, ErrorKind::SimpleDependence, StateKind::SimpleDependence),
        (Zone::RelevantErrors, ErrorKind::ComplexDependence, StateKind::ComplexDependence),
        (Zone::RelevantErrors, ErrorKind::Incompatibility, StateKind::Incompatibility),
        (Zone::RelevantErrors, ErrorKind::Time, StateKind::Time),
        (Zone::RelevantErrors, ErrorKind::World, StateKind::World),
        (Zone::IrrelevantErrors, ErrorKind::AlreadyPerformed, StateKind::AlreadyPerformed),
        (Zone::IrrelevantErrors, ErrorKind::NotFound, StateKind::NotFound),
        (Zone::IrrelevantErrors, ErrorKind::None, StateKind::Blocked),
        (Zone::IrrelevantErrors, ErrorKind::World, StateKind::World),
    ];
    let mut states = BTreeMap::new();
    let add = |states: &mut BTreeMap<StateId, StateNode>, id: StateId, kind: StateKind, label: String, students: BTreeSet<String>| {
        states.insert(id.clone(), StateNode { id, kind, label, students, description: String::new(), tutoring_message: None });
    };
    add(&mut states, StateId::initial(), StateKind::Correct, "start".into(), (0..n_students).map(|i| format!("s{i:03}")).collect());
    for i in 1..=99 {
        let id = StateId { zone: Zone::CorrectFlow, anchor: i, action: format!("f{i}"), blamed: None, error: ErrorKind::None, grouped: 0 };
        let s = students(&mut rng);
        add(&mut states, id, StateKind::Correct, format!("f{i}"), s);
    }
    while states.len() < n_states {
        let (zone, error, kind) = kinds[rng.random_range(0..kinds.len())];
        let anchor = rng.random_range(0..=99);
        let action = format!("f{}", rng.random_range(1..=120));
        let blamed = kind.is_dependence() || matches!(kind, StateKind::Incompatibility | StateKind::Time);
        let blamed = blamed.then(|| format!("f{}", rng.random_range(1..=120)));
        let label = match &blamed {
            Some(b) => format!("{action}_{b}"),
            None => action.clone(),
        };
        let s = students(&mut rng);
        add(&mut states, StateId { zone, anchor, action, blamed, error, grouped: 0 }, kind, label, s);
    }
    let ids: Vec<StateId> = states.keys().cloned().collect();
    let mut edges = BTreeMap::new();
    while edges.len() < n_edges {
        let from = ids[rng.random_range(0..ids.len())].clone();
        let to = ids[rng.random_range(0..ids.len())].clone();
        let event = [EventKind::Do, EventKind::Try, EventKind::Fail][rng.random_range(0..3)];
        let s: BTreeSet<String> = states[&to].students.iter().take(rng.random_range(1..=states[&to].students.len())).cloned().collect();
        let label = format!("{event} {}", to.action);
        edges.insert((from.clone(), to.clone(), event), EdgeRec { from, to, event, label, students: s });
    }
    Automaton { cluster_id: None, n_students, initial: StateId::initial(), states, edges }
}
