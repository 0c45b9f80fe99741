//! Three-band placement of an automaton with the instructor color coding.
//!
//! The canvas is split into bands stacked top to bottom: irrelevant errors,
//! correct flow, relevant errors. Each anchor gets a column; the correct
//! state of the column sits in the middle band and the errors hanging from
//! it stack away from the flow, upwards for irrelevant errors and downwards
//! for relevant ones. y grows downwards.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::automaton::{Automaton, StateId, StateKind, StateNode};
use crate::domain::{EventKind, Zone};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub fn hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }

    pub fn gray(level: u8) -> Rgb {
        Rgb(level, level, level)
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0, self.1, self.2)
    }
}

pub fn fill_color(kind: StateKind) -> Rgb {
    match kind {
        StateKind::Correct => Rgb(4, 255, 117),
        StateKind::SimpleDependence => Rgb(255, 128, 0),
        StateKind::ComplexDependence => Rgb(255, 153, 0),
        StateKind::Incompatibility => Rgb(215, 104, 89),
        StateKind::Time | StateKind::Blocked => Rgb(255, 255, 0),
        StateKind::World => Rgb(204, 204, 0),
        StateKind::AlreadyPerformed | StateKind::NotFound | StateKind::SuperAlreadyPerformed | StateKind::SuperNotFound => {
            Rgb(241, 106, 239)
        }
    }
}

pub fn outline_color(zone: Zone) -> Rgb {
    match zone {
        Zone::CorrectFlow => Rgb(4, 255, 117),
        Zone::IrrelevantErrors => Rgb(255, 255, 3),
        Zone::RelevantErrors => Rgb(255, 0, 1),
    }
}

/// Gray level of an edge: darker for more frequent transitions, never lighter
/// than 230 so faint edges stay visible on white.
pub fn edge_shade(frequency: f64) -> Result<u8> {
    if !(frequency > 0.0 && frequency <= 100.0) {
        return Err(Error::FrequencyOutOfRange(frequency));
    }
    Ok((230.0 * (1.0 - frequency / 100.0)).round() as u8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    /// Horizontal gap between columns.
    pub column_gap: f64,
    /// Vertical alternation of the flow row.
    pub stagger: f64,
    /// Horizontal alternation inside error stacks.
    pub stack_stagger: f64,
    pub row_gap: f64,
    pub node_height: f64,
    pub padding: f64,
    pub band_gap: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            column_gap: 40.0,
            stagger: 18.0,
            stack_stagger: 6.0,
            row_gap: 12.0,
            node_height: 28.0,
            padding: 16.0,
            band_gap: 40.0,
        }
    }
}

/// Default text measure: 7 px per character.
pub fn default_text_width(label: &str) -> f64 {
    7.0 * label.chars().count() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutNode {
    pub id: String,
    /// Centre of the rectangle.
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub fill: Rgb,
    pub outline: Rgb,
    pub label: String,
    pub zone: Zone,
    pub kind: StateKind,
    pub column: usize,
    pub frequency: f64,
    pub count: usize,
}

impl LayoutNode {
    pub fn overlaps(&self, other: &LayoutNode) -> bool {
        (self.x - other.x).abs() * 2.0 < self.w + other.w && (self.y - other.y).abs() * 2.0 < self.h + other.h
    }

    pub fn top(&self) -> f64 {
        self.y - self.h / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEdge {
    pub from: String,
    pub to: String,
    pub event: EventKind,
    pub event_label: String,
    pub shade: u8,
    pub frequency: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub top: f64,
    pub bottom: f64,
}

impl Band {
    pub fn contains(&self, node: &LayoutNode) -> bool {
        node.top() >= self.top && node.bottom() <= self.bottom
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub irrelevant_errors: Band,
    pub correct_flow: Band,
    pub relevant_errors: Band,
}

impl Bands {
    pub fn of(&self, zone: Zone) -> Band {
        match zone {
            Zone::IrrelevantErrors => self.irrelevant_errors,
            Zone::CorrectFlow => self.correct_flow,
            Zone::RelevantErrors => self.relevant_errors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutGraph {
    #[serde(default)]
    pub cluster_id: Option<usize>,
    pub n_students: usize,
    pub width: f64,
    pub height: f64,
    pub bands: Bands,
    pub nodes: Vec<LayoutNode>,
    pub edges: Vec<LayoutEdge>,
}

impl LayoutGraph {
    pub fn node(&self, id: &str) -> Option<&LayoutNode> {
        self.nodes.iter().find(|n| n.id == id)
    }
}

/// Top-down order of a relevant stack: correct states closest to the flow,
/// then dependence, incompatibility, time and world errors.
fn relevant_rank(kind: StateKind) -> u8 {
    match kind {
        StateKind::Correct => 0,
        StateKind::SimpleDependence => 1,
        StateKind::ComplexDependence => 2,
        StateKind::Incompatibility => 3,
        StateKind::Time => 4,
        StateKind::World => 5,
        _ => 6,
    }
}

fn irrelevant_rank(kind: StateKind) -> u8 {
    match kind {
        StateKind::Blocked => 0,
        StateKind::AlreadyPerformed | StateKind::SuperAlreadyPerformed => 1,
        StateKind::NotFound | StateKind::SuperNotFound => 2,
        StateKind::World => 3,
        _ => 4,
    }
}

#[derive(Default)]
struct Column<'a> {
    irrelevant: Vec<&'a StateNode>,
    flow: Vec<&'a StateNode>,
    relevant: Vec<&'a StateNode>,
}

/// Places every state of `a`. `text_width` measures a label in pixels.
pub fn compute_layout(a: &Automaton, flow: &[String], text_width: &dyn Fn(&str) -> f64, cfg: &LayoutConfig) -> LayoutGraph {
    let mut columns: BTreeMap<usize, Column<'_>> = BTreeMap::new();
    for node in a.states.values() {
        let col = columns.entry(node.id.anchor).or_default();
        match node.id.zone {
            Zone::IrrelevantErrors => col.irrelevant.push(node),
            Zone::CorrectFlow => col.flow.push(node),
            Zone::RelevantErrors => col.relevant.push(node),
        }
    }
    let on_flow = |id: &StateId| {
        id.is_initial() || (id.error == crate::domain::ErrorKind::None && id.anchor >= 1 && flow.get(id.anchor - 1) == Some(&id.action))
    };
    let by_label = |x: &&StateNode, y: &&StateNode| (&x.label, &x.id).cmp(&(&y.label, &y.id));
    for col in columns.values_mut() {
        col.flow.sort_by(|x, y| on_flow(&y.id).cmp(&on_flow(&x.id)).then_with(|| by_label(x, y)));
        col.irrelevant.sort_by(|x, y| irrelevant_rank(x.kind).cmp(&irrelevant_rank(y.kind)).then_with(|| by_label(x, y)));
        col.relevant.sort_by(|x, y| relevant_rank(x.kind).cmp(&relevant_rank(y.kind)).then_with(|| by_label(x, y)));
    }

    let width_of = |n: &StateNode| text_width(&n.label) + cfg.padding;
    let pitch = cfg.node_height + cfg.row_gap;
    let rows = |f: fn(&Column<'_>) -> usize| columns.values().map(f).max().unwrap_or(0);
    let band_height = |r: usize| r as f64 * pitch + cfg.stagger;

    let top_rows = rows(|c| c.irrelevant.len());
    let mid_rows = rows(|c| c.flow.len()).max(1);
    let bottom_rows = rows(|c| c.relevant.len());
    let irrelevant = Band { top: 0.0, bottom: band_height(top_rows) };
    let correct = Band { top: irrelevant.bottom + cfg.band_gap, bottom: irrelevant.bottom + cfg.band_gap + band_height(mid_rows) };
    let relevant = Band { top: correct.bottom + cfg.band_gap, bottom: correct.bottom + cfg.band_gap + band_height(bottom_rows) };

    let mut nodes = Vec::with_capacity(a.states.len());
    let mut x_right = 0.0;
    for (&anchor, col) in &columns {
        let widest = col.irrelevant.iter().chain(&col.flow).chain(&col.relevant).map(|n| width_of(n)).fold(0.0, f64::max);
        let x = x_right + cfg.stack_stagger + widest / 2.0;
        x_right += widest + 2.0 * cfg.stack_stagger + cfg.column_gap;
        let shift = |r: usize| if r.is_multiple_of(2) { -cfg.stack_stagger } else { cfg.stack_stagger };
        let flow_offset = match anchor {
            0 => 0.0,
            c if c % 2 == 1 => -cfg.stagger / 2.0,
            _ => cfg.stagger / 2.0,
        };
        let mut place = |n: &StateNode, x: f64, y: f64| {
            nodes.push(LayoutNode {
                id: n.id.key(),
                x,
                y,
                w: width_of(n),
                h: cfg.node_height,
                fill: fill_color(n.kind),
                outline: outline_color(n.id.zone),
                label: n.label.clone(),
                zone: n.id.zone,
                kind: n.kind,
                column: anchor,
                frequency: a.state_frequency(n),
                count: n.count(),
            })
        };
        for (r, n) in col.irrelevant.iter().enumerate() {
            place(n, x + shift(r), irrelevant.bottom - cfg.stagger / 2.0 - (r as f64 + 0.5) * pitch);
        }
        for (r, n) in col.flow.iter().enumerate() {
            let row_y = correct.top + cfg.stagger / 2.0 + (r as f64 + 0.5) * pitch;
            if r == 0 && on_flow(&n.id) {
                place(n, x, row_y + flow_offset);
            } else {
                place(n, x + shift(r), row_y);
            }
        }
        for (r, n) in col.relevant.iter().enumerate() {
            place(n, x + shift(r), relevant.top + cfg.stagger / 2.0 + (r as f64 + 0.5) * pitch);
        }
    }

    let edges = a
        .edges
        .values()
        .map(|e| {
            let frequency = a.edge_frequency(e);
            LayoutEdge {
                from: e.from.key(),
                to: e.to.key(),
                event: e.event,
                event_label: e.label.clone(),
                shade: edge_shade(frequency).unwrap_or(230),
                frequency,
                count: e.count(),
            }
        })
        .collect();

    LayoutGraph {
        cluster_id: a.cluster_id,
        n_students: a.n_students,
        width: (x_right - cfg.column_gap).max(0.0),
        height: relevant.bottom,
        bands: Bands { irrelevant_errors: irrelevant, correct_flow: correct, relevant_errors: relevant },
        nodes,
        edges,
    }
}

/// Layout with the default metrics and spacing.
pub fn default_layout(a: &Automaton, flow: &[String]) -> LayoutGraph {
    compute_layout(a, flow, &default_text_width, &LayoutConfig::default())
}

/// First pair of overlapping rectangles, if any.
pub fn find_overlap(g: &LayoutGraph) -> Option<(&LayoutNode, &LayoutNode)> {
    let mut sorted: Vec<&LayoutNode> = g.nodes.iter().collect();
    sorted.sort_by(|a, b| (a.x - a.w / 2.0).total_cmp(&(b.x - b.w / 2.0)));
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            if b.x - b.w / 2.0 >= a.x + a.w / 2.0 {
                break;
            }
            if a.overlaps(b) {
                return Some((a, b));
            }
        }
    }
    None
}
