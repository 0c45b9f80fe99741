//! Static SVG and Graphviz DOT output of a layout.

use std::collections::HashMap;
use std::fmt::Write;

use crate::layout::{LayoutGraph, LayoutNode, Rgb};

const MARGIN: f64 = 20.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Point where the segment from the centre of `n` towards (tx, ty) leaves
/// its rectangle.
fn border_point(n: &LayoutNode, tx: f64, ty: f64) -> (f64, f64) {
    let (dx, dy) = (tx - n.x, ty - n.y);
    if dx == 0.0 && dy == 0.0 {
        return (n.x, n.y);
    }
    let sx = if dx != 0.0 { (n.w / 2.0) / dx.abs() } else { f64::INFINITY };
    let sy = if dy != 0.0 { (n.h / 2.0) / dy.abs() } else { f64::INFINITY };
    let s = sx.min(sy).min(1.0);
    (n.x + dx * s, n.y + dy * s)
}

/// SVG document; edge frequencies live in `<title>` tooltips so they only
/// show on hover.
pub fn to_svg(g: &LayoutGraph) -> String {
    let width = g.width + 2.0 * MARGIN;
    let height = g.height + 2.0 * MARGIN;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="{:.0} {:.0} {width:.0} {height:.0}" font-family="monospace" font-size="12">"#,
        -MARGIN, -MARGIN
    );
    out.push_str(
        r#"<defs><marker id="arrow" viewBox="0 0 10 10" refX="10" refY="5" markerWidth="6" markerHeight="6" orient="auto-start-reverse"><path d="M0,0 L10,5 L0,10 z" fill="context-stroke"/></marker></defs>"#,
    );
    out.push('\n');
    for (name, band) in [
        ("irrelevant errors", g.bands.irrelevant_errors),
        ("correct flow", g.bands.correct_flow),
        ("relevant errors", g.bands.relevant_errors),
    ] {
        let _ = writeln!(
            out,
            r##"<rect class="band" x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#f7f7f7"><title>{name}</title></rect>"##,
            -MARGIN / 2.0,
            band.top,
            g.width + MARGIN,
            band.bottom - band.top
        );
    }
    let by_id: HashMap<&str, &LayoutNode> = g.nodes.iter().map(|n| (n.id.as_str(), n)).collect();
    for e in &g.edges {
        let (Some(a), Some(b)) = (by_id.get(e.from.as_str()), by_id.get(e.to.as_str())) else { continue };
        let (x1, y1) = border_point(a, b.x, b.y);
        let (x2, y2) = border_point(b, a.x, a.y);
        let _ = writeln!(
            out,
            r#"<line class="edge" x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="{}" marker-end="url(#arrow)"><title>{} Frequency={:.2}</title></line>"#,
            Rgb::gray(e.shade).hex(),
            escape(&e.event_label),
            e.frequency
        );
    }
    for n in &g.nodes {
        let _ = writeln!(
            out,
            r#"<g class="node" id="{}"><rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}" stroke="{}" stroke-width="2"/><text x="{:.1}" y="{:.1}" text-anchor="middle" dominant-baseline="central">{}</text><title>{} {:.2}%</title></g>"#,
            escape(&n.id),
            n.x - n.w / 2.0,
            n.y - n.h / 2.0,
            n.w,
            n.h,
            n.fill.hex(),
            n.outline.hex(),
            n.x,
            n.y,
            escape(&n.label),
            escape(&n.label),
            n.frequency
        );
    }
    out.push_str("</svg>\n");
    out
}

/// DOT with pinned positions (`neato -n` keeps them); y is flipped because
/// Graphviz grows upwards.
pub fn to_dot(g: &LayoutGraph) -> String {
    let quote = |s: &str| format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""));
    let mut out = String::from("digraph automaton {\n  node [shape=box, style=filled, penwidth=2];\n");
    for n in &g.nodes {
        let _ = writeln!(
            out,
            "  {} [label={}, pos=\"{:.1},{:.1}!\", width={:.3}, height={:.3}, fillcolor=\"{}\", color=\"{}\", tooltip=\"{:.2}%\"];",
            quote(&n.id),
            quote(&n.label),
            n.x,
            g.height - n.y,
            n.w / 72.0,
            n.h / 72.0,
            n.fill.hex(),
            n.outline.hex(),
            n.frequency
        );
    }
    for e in &g.edges {
        let _ = writeln!(
            out,
            "  {} -> {} [color=\"{}\", tooltip={}];",
            quote(&e.from),
            quote(&e.to),
            Rgb::gray(e.shade).hex(),
            quote(&format!("{} Frequency={:.2}", e.event_label, e.frequency))
        );
    }
    out.push_str("}\n");
    out
}
