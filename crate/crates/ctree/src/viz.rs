//! Deterministic SVG renderings of tree representations: circle chord plots,
//! hierarchy diagrams with optional percent-difference annotations, and the
//! trait-correlation scatter. Output bytes are a pure function of the inputs.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::atlas::{AtlasHierarchy, NodeId};
use crate::tree::{ConnectomeTree, TreeError};

#[derive(Debug, Error)]
pub enum VizError {
    #[error("trees were built against different hierarchies")]
    HierarchyMismatch,
    #[error("input lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

const CANVAS: f64 = 640.0;
const JITTER_SEED: u64 = 0x63_63_61_2d_79;

/// Stable per-node color: golden-angle hue keyed by node id.
pub fn node_color(id: NodeId) -> String {
    let hue = (id as u64 * 137) % 360;
    let lightness = 35 + (id as u64 * 53) % 20;
    format!("hsl({hue},65%,{lightness}%)")
}

/// Layout and scaling knobs for chord plots. Leaf order around the circle is
/// file order and colors are keyed by node id; both are fixed by contract.
#[derive(Debug, Clone)]
pub struct ChordPlotSpec {
    /// Stroke width per sqrt(weight), before the 1/level scale.
    pub thickness_scale: f64,
    /// Upper bound on any chord's stroke width.
    pub thickness_cap: f64,
}

impl Default for ChordPlotSpec {
    fn default() -> Self {
        Self {
            thickness_scale: 3.0,
            thickness_cap: 18.0,
        }
    }
}

fn svg_header(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>"
    );
}

/// Circle chord plot: one group of chords per internal node, chord thickness
/// proportional to the square root of the node weight and scaled inversely
/// with the node's level, colors keyed by node id. Chord endpoints sit on
/// arcs of leaves descending from the node.
pub fn render_chord(
    h: &AtlasHierarchy,
    t: &ConnectomeTree,
    spec: &ChordPlotSpec,
) -> Result<String, VizError> {
    let center = CANVAS / 2.0;
    let radius = CANVAS / 2.0 - 70.0;

    // Leaves around the circle in file order.
    let leaves: Vec<NodeId> = h
        .nodes()
        .iter()
        .filter(|n| n.roi_index.is_some())
        .map(|n| n.node_id)
        .collect();
    let slice = std::f64::consts::TAU / leaves.len() as f64;
    let angle_of = |circle_pos: usize| -> f64 { circle_pos as f64 * slice - std::f64::consts::FRAC_PI_2 };
    let point = |angle: f64, r: f64| -> (f64, f64) {
        (center + r * angle.cos(), center + r * angle.sin())
    };
    // node id -> circle position of each descendant leaf
    let circle_pos_of_leaf = |leaf: NodeId| leaves.iter().position(|&l| l == leaf).expect("leaf");

    let mut out = String::new();
    svg_header(&mut out, CANVAS, CANVAS);

    // Leaf arcs and labels.
    for (pos, &leaf) in leaves.iter().enumerate() {
        let a0 = angle_of(pos) + 0.06 * slice;
        let a1 = angle_of(pos) + 0.94 * slice;
        let (x0, y0) = point(a0, radius);
        let (x1, y1) = point(a1, radius);
        let name = &h.node(leaf).expect("leaf").name;
        let _ = writeln!(
            out,
            "<path d=\"M {x0:.2} {y0:.2} A {radius:.2} {radius:.2} 0 0 1 {x1:.2} {y1:.2}\" \
             fill=\"none\" stroke=\"{}\" stroke-width=\"4\"/>",
            node_color(leaf)
        );
        let mid = (a0 + a1) / 2.0;
        let (lx, ly) = point(mid, radius + 10.0);
        let rotate = mid.to_degrees() + if mid.cos() < 0.0 { 180.0 } else { 0.0 };
        let anchor = if mid.cos() < 0.0 { "end" } else { "start" };
        let _ = writeln!(
            out,
            "<text x=\"{lx:.2}\" y=\"{ly:.2}\" font-size=\"6\" text-anchor=\"{anchor}\" \
             transform=\"rotate({rotate:.2} {lx:.2} {ly:.2})\">{name}</text>"
        );
    }

    // Chords, one group per internal node in level order.
    for &node in h.internal_nodes() {
        let weight = t.weight(h, node)?;
        let level = h.node(node).expect("internal").level;
        let _ = writeln!(out, "<g data-node=\"{}\">", h.node(node).expect("internal").name);
        if weight > 0 {
            let width = (spec.thickness_scale * (weight as f64).sqrt() / level as f64)
                .min(spec.thickness_cap);
            let color = node_color(node);
            let children = h.children(node).expect("internal");
            // Anchor each child at the median circle position of its leaves.
            let anchors: Vec<f64> = children
                .iter()
                .map(|&child| {
                    let mut positions: Vec<usize> = h
                        .descendant_rois(child)
                        .expect("child")
                        .iter()
                        .map(|&roi| circle_pos_of_leaf(h.leaf_by_roi(roi).expect("roi")))
                        .collect();
                    positions.sort_unstable();
                    let median = positions[positions.len() / 2];
                    angle_of(median) + 0.5 * slice
                })
                .collect();
            for a in 0..anchors.len() {
                for b in (a + 1)..anchors.len() {
                    let (x0, y0) = point(anchors[a], radius - 4.0);
                    let (x1, y1) = point(anchors[b], radius - 4.0);
                    let _ = writeln!(
                        out,
                        "<path d=\"M {x0:.2} {y0:.2} Q {center:.2} {center:.2} {x1:.2} {y1:.2}\" \
                         fill=\"none\" stroke=\"{color}\" stroke-width=\"{width:.2}\" \
                         stroke-opacity=\"0.55\"/>"
                    );
                }
            }
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Hierarchy diagram with node weights; in comparison mode each node is
/// annotated with the percent difference `100 (w_a - w_b) / w_b`, rendered as
/// `n/a` where the reference weight is zero.
pub fn render_tree_diagram(
    h: &AtlasHierarchy,
    t: &ConnectomeTree,
    comparison: Option<&ConnectomeTree>,
) -> Result<String, VizError> {
    let width = CANVAS * 1.6;
    let height = 120.0 * h.max_level() as f64 + 60.0;

    // x: leaves evenly spaced in file order, internals at the mean of their
    // descendant leaves.
    let leaves: Vec<NodeId> = h
        .nodes()
        .iter()
        .filter(|n| n.roi_index.is_some())
        .map(|n| n.node_id)
        .collect();
    let step = (width - 80.0) / leaves.len() as f64;
    let leaf_x = |leaf: NodeId| {
        40.0 + step / 2.0 + step * leaves.iter().position(|&l| l == leaf).expect("leaf") as f64
    };
    let node_x = |id: NodeId| -> f64 {
        let rois = h.descendant_rois(id).expect("node");
        let total: f64 = rois
            .iter()
            .map(|&roi| leaf_x(h.leaf_by_roi(roi).expect("roi")))
            .sum();
        total / rois.len() as f64
    };
    let node_y = |id: NodeId| 50.0 + 120.0 * (h.node(id).expect("node").level - 1) as f64;

    let mut out = String::new();
    svg_header(&mut out, width, height);

    // Edges first, then nodes.
    for node in h.nodes() {
        if let Some(parent) = node.parent_id {
            let _ = writeln!(
                out,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#999\" stroke-width=\"1\"/>",
                node_x(parent),
                node_y(parent),
                node_x(node.node_id),
                node_y(node.node_id)
            );
        }
    }
    for node in h.nodes() {
        let id = node.node_id;
        let x = node_x(id);
        let y = node_y(id);
        let weight = t.weight(h, id)?;
        let _ = writeln!(
            out,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"5\" fill=\"{}\"/>",
            node_color(id)
        );
        let annotation = match comparison {
            None => format!("{weight}"),
            Some(other) => {
                let reference = other.weight(h, id)?;
                if reference == 0 {
                    format!("{weight} (n/a)")
                } else {
                    let pct =
                        100.0 * (weight as f64 - reference as f64) / reference as f64;
                    format!("{weight} ({pct:+.1}%)")
                }
            }
        };
        let _ = writeln!(
            out,
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"8\" text-anchor=\"middle\">{}: {annotation}</text>",
            y - 9.0,
            node.name
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Trait scatter against the first canonical variate: x is the correlation,
/// y is a seeded deterministic jitter that keeps labels from overlapping,
/// font size scales with the loading magnitude, and color encodes the
/// optional desirability class.
pub fn render_cca_scatter(
    correlations: &[f64],
    loadings: &[f64],
    labels: &[String],
    desirability: Option<&[String]>,
) -> Result<String, VizError> {
    if correlations.len() != loadings.len() {
        return Err(VizError::LengthMismatch {
            a: correlations.len(),
            b: loadings.len(),
        });
    }
    if correlations.len() != labels.len() {
        return Err(VizError::LengthMismatch {
            a: correlations.len(),
            b: labels.len(),
        });
    }
    if let Some(classes) = desirability {
        if classes.len() != labels.len() {
            return Err(VizError::LengthMismatch {
                a: classes.len(),
                b: labels.len(),
            });
        }
    }
    let q = correlations.len();
    let width = CANVAS;
    let height = (24.0 * q as f64 + 120.0).max(240.0);

    let mut out = String::new();
    svg_header(&mut out, width, height);
    // Axis from -1 to 1.
    let x_of = |corr: f64| 60.0 + (corr + 1.0) / 2.0 * (width - 120.0);
    let axis_y = height - 40.0;
    let _ = writeln!(
        out,
        "<line x1=\"{:.2}\" y1=\"{axis_y:.2}\" x2=\"{:.2}\" y2=\"{axis_y:.2}\" stroke=\"black\"/>",
        x_of(-1.0),
        x_of(1.0)
    );
    for tick in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let x = x_of(tick);
        let _ = writeln!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{axis_y:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n\
             <text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"middle\">{tick}</text>",
            axis_y + 6.0,
            axis_y + 18.0
        );
    }

    // Deterministic jitter: a seeded shuffle of evenly spaced slots.
    let mut slots: Vec<usize> = (0..q).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(JITTER_SEED);
    for i in (1..q).rev() {
        let j = rng.random_range(0..=i);
        slots.swap(i, j);
    }
    let max_loading = loadings.iter().fold(0.0f64, |m, l| m.max(l.abs())).max(1e-12);

    // Distinct desirability classes in first-appearance order.
    let palette = ["#1b7837", "#c51b7d", "#2166ac", "#b2182b", "#762a83"];
    let mut classes: Vec<&str> = Vec::new();
    if let Some(values) = desirability {
        for v in values {
            if !classes.contains(&v.as_str()) {
                classes.push(v.as_str());
            }
        }
    }

    for i in 0..q {
        let x = x_of(correlations[i].clamp(-1.0, 1.0));
        let y = 30.0 + slots[i] as f64 * ((height - 100.0) / q.max(1) as f64);
        let size = 8.0 + 12.0 * loadings[i].abs() / max_loading;
        let color = match desirability {
            Some(values) => {
                let class = classes
                    .iter()
                    .position(|&c| c == values[i].as_str())
                    .expect("class registered");
                palette[class % palette.len()]
            }
            None => "#333333",
        };
        let _ = writeln!(
            out,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2\" fill=\"{color}\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"{size:.2}\" fill=\"{color}\">{}</text>",
            x + 4.0,
            y + 3.0,
            labels[i]
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
