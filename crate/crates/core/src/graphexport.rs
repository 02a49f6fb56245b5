//! Interaction-graph export: per activity class, the summed L1 activation
//! of the pairwise relation between object classes, normalized by how
//! often each class pair co-occurred in the enumerated pairs, thresholded,
//! and written as DOT plus a machine-readable adjacency listing.

use crate::evaluate::draw_clip;
use crate::model::OrnModel;
use crate::reasoning::PairingMode;
use crate::synthetic::{mix_seeds, GeneratedVideo, VideoLabel, WorldConfig};
use crate::tensor::{Graph, Result as TResult, TensorError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InteractionEdge {
    pub from: String,
    pub to: String,
    pub from_class: usize,
    pub to_class: usize,
    /// Co-occurrence-normalized summed L1 activation.
    pub weight: f64,
    pub co_occurrences: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InteractionGraph {
    pub activity_class: usize,
    pub threshold: f64,
    pub classes: Vec<String>,
    /// Edges at or above threshold, heaviest first.
    pub edges: Vec<InteractionEdge>,
}

pub fn class_name(world: &WorldConfig, class: usize) -> String {
    let shape = format!("{:?}", world.object_classes[class].shape).to_lowercase();
    format!("c{class}_{shape}")
}

fn video_has_class(label: &VideoLabel, activity_class: usize) -> bool {
    match label {
        VideoLabel::Single(l) => *l == activity_class,
        VideoLabel::Multi(bits) => bits.get(activity_class).copied().unwrap_or(0) == 1,
    }
}

/// Accumulates pairwise relation activations over every clip of the given
/// activity class. Requires inter-frame pairwise reasoning.
pub fn export_interaction_graph(
    model: &OrnModel<f32>,
    world: &WorldConfig,
    videos: &[GeneratedVideo],
    activity_class: usize,
    threshold: f64,
    eval_seed: u64,
) -> TResult<InteractionGraph> {
    if model.cfg.pairing.mode != PairingMode::InterFrame || model.cfg.pairing.clique_size != 2 {
        return Err(TensorError::BadShape {
            op: "export_interaction_graph",
            shape: vec![model.cfg.pairing.clique_size],
            reason: "requires inter-frame pairwise reasoning".into(),
        });
    }
    let mut sums: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut counts: BTreeMap<(usize, usize), u64> = BTreeMap::new();

    let selected: Vec<&GeneratedVideo> = videos
        .iter()
        .filter(|v| video_has_class(&v.label, activity_class))
        .collect();
    if selected.is_empty() {
        eprintln!(
            "warning: activity class {activity_class} absent from dataset; emitting empty graph"
        );
    }

    for video in selected {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seeds(&[eval_seed, video.id, 0]));
        let clip = draw_clip(
            video,
            model.cfg.clip_length,
            model.cfg.pairing.t_prime_policy,
            &mut rng,
        );
        let mut g = Graph::<f32>::new();
        let traces =
            model.trace_interactions(&mut g, &clip.frames, &clip.annotations, &clip.t_primes)?;
        for ((cj, ck), l1) in traces {
            *sums.entry((cj, ck)).or_default() += l1;
            *counts.entry((cj, ck)).or_default() += 1;
        }
    }

    let mut edges: Vec<InteractionEdge> = sums
        .iter()
        .map(|(&(cj, ck), &sum)| {
            let n = counts[&(cj, ck)];
            InteractionEdge {
                from: class_name(world, cj),
                to: class_name(world, ck),
                from_class: cj,
                to_class: ck,
                weight: sum / n as f64,
                co_occurrences: n,
            }
        })
        .filter(|e| e.weight >= threshold)
        .collect();
    edges.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((a.from_class, a.to_class).cmp(&(b.from_class, b.to_class)))
    });

    Ok(InteractionGraph {
        activity_class,
        threshold,
        classes: (0..world.num_classes())
            .map(|c| class_name(world, c))
            .collect(),
        edges,
    })
}

/// DOT rendering, edge thickness scaled by relative weight.
pub fn to_dot(graph: &InteractionGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph activity_{} {{", graph.activity_class);
    let _ = writeln!(out, "  rankdir=LR;");
    for name in &graph.classes {
        let _ = writeln!(out, "  \"{name}\";");
    }
    let max_w = graph
        .edges
        .first()
        .map(|e| e.weight)
        .unwrap_or(1.0)
        .max(1e-12);
    for e in &graph.edges {
        let pen = 1.0 + 4.0 * e.weight / max_w;
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\" [label=\"{:.4}\", penwidth={:.2}];",
            e.from, e.to, e.weight, pen
        );
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::Archetype;
    use crate::synthetic::ShapeKind;

    fn dummy_graph() -> InteractionGraph {
        InteractionGraph {
            activity_class: 0,
            threshold: 0.0,
            classes: vec!["c0_square".into(), "c1_disc".into()],
            edges: vec![
                InteractionEdge {
                    from: "c0_square".into(),
                    to: "c1_disc".into(),
                    from_class: 0,
                    to_class: 1,
                    weight: 2.0,
                    co_occurrences: 10,
                },
                InteractionEdge {
                    from: "c1_disc".into(),
                    to: "c0_square".into(),
                    from_class: 1,
                    to_class: 0,
                    weight: 1.0,
                    co_occurrences: 10,
                },
            ],
        }
    }

    #[test]
    fn dot_output_is_valid_and_ordered() {
        let dot = to_dot(&dummy_graph());
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("\"c0_square\" -> \"c1_disc\""));
        let first = dot.find("c0_square\" -> \"c1_disc").unwrap();
        let second = dot.find("c1_disc\" -> \"c0_square").unwrap();
        assert!(first < second, "heaviest edge first");
    }

    #[test]
    fn scaling_preserves_edge_ranking() {
        let g = dummy_graph();
        let mut doubled = g.clone();
        for e in doubled.edges.iter_mut() {
            e.weight *= 2.0;
        }
        let order_a: Vec<(usize, usize)> =
            g.edges.iter().map(|e| (e.from_class, e.to_class)).collect();
        let order_b: Vec<(usize, usize)> = doubled
            .edges
            .iter()
            .map(|e| (e.from_class, e.to_class))
            .collect();
        assert_eq!(order_a, order_b);
    }

    #[test]
    fn class_names_include_shape() {
        let world = WorldConfig {
            object_classes: vec![Archetype {
                shape: ShapeKind::Ring,
                color: [0.0, 0.0, 0.0],
            }],
            ..WorldConfig::default()
        };
        assert_eq!(class_name(&world, 0), "c0_ring");
    }
}
