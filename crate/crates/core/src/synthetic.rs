//! Deterministic generator of toy videos of interacting 2-D objects.
//!
//! Objects are solid geometric archetypes in flat colors over a static
//! noise background, rendered with exact instance masks. Labels are
//! functions of object interactions over time, and every video carries an
//! event log from which its label is recomputable by an independent
//! oracle.
//!
//! The ordered_swap task is built so that frame-global cues are
//! uninformative: both labels show one object moving onto the other's
//! former position while that object moves elsewhere, simultaneously and
//! at matched speeds, with positions drawn from the same distribution.
//! Only the binding of classes to roles across time separates the labels.

use crate::descriptors::InstanceAnnotation;
use crate::rle::Mask;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("no feasible placement after {attempts} attempts (seed {seed}, video {video_index})")]
    PlacementInfeasible {
        seed: u64,
        video_index: u64,
        attempts: usize,
    },
    #[error("task needs at least {needed} object classes, config has {got}")]
    TooFewClasses { needed: usize, got: usize },
    #[error("grid {0}x{1} too small; need at least 32x32")]
    GridTooSmall(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Square,
    Disc,
    Triangle,
    Bar,
    Cross,
    Ring,
}

/// Renderable object class: a shape drawn in a flat color.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub shape: ShapeKind,
    pub color: [f32; 3],
}

pub fn default_archetypes() -> Vec<Archetype> {
    vec![
        Archetype {
            shape: ShapeKind::Square,
            color: [0.95, 0.15, 0.15],
        },
        Archetype {
            shape: ShapeKind::Disc,
            color: [0.15, 0.9, 0.2],
        },
        Archetype {
            shape: ShapeKind::Triangle,
            color: [0.25, 0.4, 1.0],
        },
        Archetype {
            shape: ShapeKind::Bar,
            color: [0.95, 0.9, 0.1],
        },
        Archetype {
            shape: ShapeKind::Cross,
            color: [0.9, 0.2, 0.9],
        },
        Archetype {
            shape: ShapeKind::Ring,
            color: [0.1, 0.85, 0.9],
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    OrderedSwap,
    Touch,
    StateChange,
    AppearDisappear,
}

/// Simulated detector degradation: drop annotations and erode mask
/// boundaries. Ground-truth mode leaves this `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyDetector {
    pub drop_prob: f64,
    pub boundary_erode_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub grid: (usize, usize),
    pub num_frames: usize,
    pub object_classes: Vec<Archetype>,
    pub task: TaskKind,
    pub seed: u64,
    #[serde(default = "default_radius")]
    pub object_radius: usize,
    #[serde(default = "default_distractors")]
    pub num_distractors: usize,
    #[serde(default)]
    pub noisy_detector: Option<NoisyDetector>,
}

fn default_radius() -> usize {
    3
}
fn default_distractors() -> usize {
    1
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            grid: (32, 32),
            num_frames: 8,
            object_classes: default_archetypes(),
            task: TaskKind::OrderedSwap,
            seed: 0,
            object_radius: 3,
            num_distractors: 1,
            noisy_detector: None,
        }
    }
}

impl WorldConfig {
    pub fn num_classes(&self) -> usize {
        self.object_classes.len()
    }

    /// Number of activity classes the task defines (bits for multi-label).
    pub fn num_activities(&self) -> usize {
        match self.task {
            TaskKind::OrderedSwap => 2,
            TaskKind::Touch => self.num_classes(),
            TaskKind::StateChange => self.num_classes(),
            TaskKind::AppearDisappear => 2 * self.num_classes(),
        }
    }

    pub fn is_multi_label(&self) -> bool {
        self.task == TaskKind::Touch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EventKind {
    Contact { a: usize, b: usize },
    Swap { actor: usize, patient: usize },
    Touch { agent: usize, object: usize },
    StateChange { object: usize },
    Appear { object: usize },
    Disappear { object: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    #[serde(flatten)]
    pub kind: EventKind,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VideoLabel {
    Single(usize),
    Multi(Vec<u8>),
}

/// Dense frame block, `[3, T, H, W]`, u8 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBlock {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl FrameBlock {
    pub fn pixel(&self, c: usize, t: usize, y: usize, x: usize) -> u8 {
        self.data[((c * self.frames + t) * self.height + y) * self.width + x]
    }

    /// Normalized float frames for the model, same layout.
    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|v| *v as f32 / 255.0).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedVideo {
    pub id: u64,
    pub frames: FrameBlock,
    /// Per-frame instance annotations: exact masks, one-hot classes,
    /// score 1.0 (unless a noisy detector is simulated).
    pub annotations: Vec<Vec<InstanceAnnotation>>,
    pub label: VideoLabel,
    pub event_log: Vec<Event>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Per-video RNG seed derived from the dataset seed and video index.
pub fn video_seed(seed: u64, video_index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(video_index.wrapping_add(1)))
}

/// Stable combination of several seed components.
pub fn mix_seeds(parts: &[u64]) -> u64 {
    let mut acc = 0x6A09E667F3BCC909u64;
    for p in parts {
        acc = splitmix64(acc ^ splitmix64(*p));
    }
    acc
}

#[derive(Debug, Clone, Copy)]
struct Pos {
    y: f64,
    x: f64,
}

impl Pos {
    fn lerp(a: Pos, b: Pos, s: f64) -> Pos {
        Pos {
            y: a.y + (b.y - a.y) * s,
            x: a.x + (b.x - a.x) * s,
        }
    }

    fn dist(a: Pos, b: Pos) -> f64 {
        ((a.y - b.y).powi(2) + (a.x - b.x).powi(2)).sqrt()
    }
}

/// One object's life in a scene: class, radius, per-frame position,
/// presence flags, and the frame from which its appearance is altered.
#[derive(Debug, Clone)]
struct SceneObject {
    class: usize,
    radius: usize,
    track: Vec<Pos>,
    present: Vec<bool>,
    altered_from: Option<usize>,
}

fn in_shape(kind: ShapeKind, dy: f64, dx: f64, r: f64) -> bool {
    let thin = (r / 3.0).max(1.0);
    match kind {
        ShapeKind::Square => dy.abs() <= r && dx.abs() <= r,
        ShapeKind::Disc => dy * dy + dx * dx <= r * r,
        ShapeKind::Triangle => dy.abs() <= r && dx.abs() <= (dy + r) / 2.0,
        ShapeKind::Bar => dy.abs() <= thin && dx.abs() <= r,
        ShapeKind::Cross => {
            (dy.abs() <= thin && dx.abs() <= r) || (dx.abs() <= thin && dy.abs() <= r)
        }
        ShapeKind::Ring => {
            let d2 = dy * dy + dx * dx;
            d2 <= r * r && d2 >= ((r - 2.0).max(1.0)).powi(2)
        }
    }
}

fn rasterize(kind: ShapeKind, center: Pos, r: usize, h: usize, w: usize) -> Mask {
    let mut m = Mask::zeros(h, w);
    let rf = r as f64;
    let y0 = (center.y - rf - 1.0).floor().max(0.0) as usize;
    let y1 = ((center.y + rf + 1.0).ceil() as usize).min(h - 1);
    let x0 = (center.x - rf - 1.0).floor().max(0.0) as usize;
    let x1 = ((center.x + rf + 1.0).ceil() as usize).min(w - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if in_shape(kind, y as f64 - center.y, x as f64 - center.x, rf) {
                m.set(y, x, true);
            }
        }
    }
    m
}

const PLACEMENT_ATTEMPTS: usize = 1000;

/// Minimum center separation that keeps two rasterized objects disjoint
/// with a one-pixel gap.
fn min_separation(r1: usize, r2: usize) -> f64 {
    (r1 + r2 + 2) as f64
}

fn sample_pos(h: usize, w: usize, margin: f64, rng: &mut impl Rng) -> Pos {
    Pos {
        y: rng.random_range(margin..h as f64 - 1.0 - margin),
        x: rng.random_range(margin..w as f64 - 1.0 - margin),
    }
}

/// All-pairs all-frames clearance check.
fn tracks_clear(objects: &[SceneObject]) -> bool {
    let frames = objects.first().map(|o| o.track.len()).unwrap_or(0);
    for t in 0..frames {
        for i in 0..objects.len() {
            if !objects[i].present[t] {
                continue;
            }
            for j in i + 1..objects.len() {
                if !objects[j].present[t] {
                    continue;
                }
                let need = min_separation(objects[i].radius, objects[j].radius);
                if Pos::dist(objects[i].track[t], objects[j].track[t]) < need {
                    return false;
                }
            }
        }
    }
    true
}

fn linear_track(from: Pos, to: Pos, frames: usize) -> Vec<Pos> {
    (0..frames)
        .map(|t| {
            let s = if frames > 1 {
                t as f64 / (frames - 1) as f64
            } else {
                0.0
            };
            Pos::lerp(from, to, s)
        })
        .collect()
}

struct Scene {
    objects: Vec<SceneObject>,
    label: VideoLabel,
    events: Vec<Event>,
}

fn build_scene(cfg: &WorldConfig, video_index: u64, rng: &mut ChaCha8Rng) -> Result<Scene, SyntheticError> {
    let (h, w) = cfg.grid;
    if h < 32 || w < 32 {
        return Err(SyntheticError::GridTooSmall(h, w));
    }
    match cfg.task {
        TaskKind::OrderedSwap => build_ordered_swap(cfg, video_index, rng),
        TaskKind::Touch => build_touch(cfg, video_index, rng),
        TaskKind::StateChange => build_state_change(cfg, video_index, rng),
        TaskKind::AppearDisappear => build_appear_disappear(cfg, video_index, rng),
    }
}

fn distractor_track(
    cfg: &WorldConfig,
    margin: f64,
    rng: &mut impl Rng,
) -> Vec<Pos> {
    let (h, w) = cfg.grid;
    let from = sample_pos(h, w, margin, rng);
    let to = sample_pos(h, w, margin, rng);
    linear_track(from, to, cfg.num_frames)
}

fn pick_distractor_classes(cfg: &WorldConfig, exclude: &[usize], rng: &mut impl Rng) -> Vec<usize> {
    let pool: Vec<usize> = (0..cfg.num_classes()).filter(|c| !exclude.contains(c)).collect();
    if pool.is_empty() {
        return Vec::new();
    }
    (0..cfg.num_distractors)
        .map(|_| pool[rng.random_range(0..pool.len())])
        .collect()
}

/// label 0 ("a-acts-on-b"): a travels onto b's starting position while b
/// moves to a free spot; label 1 is the mirror with roles exchanged. Both
/// objects move simultaneously, each covering its own path at constant
/// speed, so per-frame and motion statistics match across labels.
fn build_ordered_swap(
    cfg: &WorldConfig,
    video_index: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Scene, SyntheticError> {
    if cfg.num_classes() < 2 {
        return Err(SyntheticError::TooFewClasses {
            needed: 2,
            got: cfg.num_classes(),
        });
    }
    let (h, w) = cfg.grid;
    let r = cfg.object_radius;
    let margin = (r + 2) as f64;
    let label = rng.random_range(0..2usize);
    let (class_a, class_b) = (0usize, 1usize);

    // stage 1: mover geometry
    let mut movers: Option<(Vec<SceneObject>, Pos)> = None;
    for _ in 0..PLACEMENT_ATTEMPTS {
        let p = sample_pos(h, w, margin, rng);
        let q = sample_pos(h, w, margin, rng);
        let escape = sample_pos(h, w, margin, rng);
        // actor ends exactly on the patient's start; patient must have room
        if Pos::dist(p, q) < min_separation(r, r) + 1.0
            || Pos::dist(q, escape) < min_separation(r, r) + 1.0
            || Pos::dist(p, escape) < min_separation(r, r) + 1.0
        {
            continue;
        }
        let (track_a, track_b) = if label == 0 {
            (linear_track(p, q, cfg.num_frames), linear_track(q, escape, cfg.num_frames))
        } else {
            (linear_track(p, escape, cfg.num_frames), linear_track(q, p, cfg.num_frames))
        };
        let pair = vec![
            SceneObject {
                class: class_a,
                radius: r,
                track: track_a,
                present: vec![true; cfg.num_frames],
                altered_from: None,
            },
            SceneObject {
                class: class_b,
                radius: r,
                track: track_b,
                present: vec![true; cfg.num_frames],
                altered_from: None,
            },
        ];
        if tracks_clear(&pair) {
            // the acted-upon position: where the actor ends up
            let target = if label == 0 { q } else { p };
            movers = Some((pair, target));
            break;
        }
    }
    let (movers, target) = movers.ok_or(SyntheticError::PlacementInfeasible {
        seed: cfg.seed,
        video_index,
        attempts: PLACEMENT_ATTEMPTS,
    })?;

    // stage 2: distractors, conditioned on the mover geometry
    for _ in 0..PLACEMENT_ATTEMPTS {
        let mut objects = movers.clone();
        for c in pick_distractor_classes(cfg, &[class_a, class_b], rng) {
            objects.push(SceneObject {
                class: c,
                radius: r,
                track: distractor_track(cfg, margin, rng),
                present: vec![true; cfg.num_frames],
                altered_from: None,
            });
        }
        if !tracks_clear(&objects) {
            continue;
        }
        let (actor, patient) = if label == 0 {
            (class_a, class_b)
        } else {
            (class_b, class_a)
        };
        // contact: the actor first comes within reach of the patient's
        // former position
        let contact_frame = objects[if label == 0 { 0 } else { 1 }]
            .track
            .iter()
            .position(|pos| Pos::dist(*pos, target) <= min_separation(r, r))
            .unwrap_or(cfg.num_frames - 1);
        let events = vec![
            Event {
                kind: EventKind::Contact {
                    a: actor,
                    b: patient,
                },
                frame: contact_frame,
            },
            Event {
                kind: EventKind::Swap { actor, patient },
                frame: cfg.num_frames - 1,
            },
        ];
        return Ok(Scene {
            objects,
            label: VideoLabel::Single(label),
            events,
        });
    }
    Err(SyntheticError::PlacementInfeasible {
        seed: cfg.seed,
        video_index,
        attempts: PLACEMENT_ATTEMPTS,
    })
}

/// Multi-label: the agent (class 0) visits a random subset of static
/// objects; the label has one bit per class the agent touched.
fn build_touch(
    cfg: &WorldConfig,
    video_index: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Scene, SyntheticError> {
    if cfg.num_classes() < 3 {
        return Err(SyntheticError::TooFewClasses {
            needed: 3,
            got: cfg.num_classes(),
        });
    }
    let (h, w) = cfg.grid;
    let r = cfg.object_radius;
    let margin = (r + 2) as f64;
    let agent_class = 0usize;
    let candidates: Vec<usize> = (1..cfg.num_classes()).collect();

    'attempt: for _ in 0..PLACEMENT_ATTEMPTS {
        let n_objects = rng.random_range(2..=3.min(candidates.len()));
        let mut classes = candidates.clone();
        // deterministic partial shuffle
        for i in 0..n_objects {
            let j = rng.random_range(i..classes.len());
            classes.swap(i, j);
        }
        let classes = &classes[..n_objects];
        let n_touched = rng.random_range(0..=n_objects);

        let mut positions = Vec::new();
        for _ in 0..=n_objects {
            positions.push(sample_pos(h, w, margin, rng));
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if Pos::dist(positions[i], positions[j]) < min_separation(r, r) + 2.0 {
                    continue 'attempt;
                }
            }
        }
        let agent_start = positions[0];
        let targets = &positions[1..];

        // waypoints: approach points just outside each touched object
        let contact_gap = min_separation(r, r) + 0.5;
        let mut waypoints = vec![agent_start];
        for tpos in targets.iter().take(n_touched) {
            let last = *waypoints.last().unwrap();
            let d = Pos::dist(last, *tpos).max(1e-6);
            let s = (d - contact_gap) / d;
            waypoints.push(Pos::lerp(last, *tpos, s));
        }
        if waypoints.len() == 1 {
            // no touches: wander to a free spot
            waypoints.push(sample_pos(h, w, margin, rng));
        }

        // distribute frames across segments; anchor frames land exactly on
        // waypoints so every intended touch registers at a sampled frame
        let segs = waypoints.len() - 1;
        let last_frame = cfg.num_frames - 1;
        let anchor = |i: usize| -> usize {
            ((i * last_frame) as f64 / segs as f64).round() as usize
        };
        let mut track = Vec::with_capacity(cfg.num_frames);
        for t in 0..cfg.num_frames {
            let seg = (0..segs)
                .find(|&i| t <= anchor(i + 1))
                .unwrap_or(segs - 1);
            let (a0, a1) = (anchor(seg), anchor(seg + 1));
            let frac = if a1 > a0 {
                (t.saturating_sub(a0)) as f64 / (a1 - a0) as f64
            } else {
                1.0
            };
            track.push(Pos::lerp(waypoints[seg], waypoints[seg + 1], frac.min(1.0)));
        }

        let mut objects = vec![SceneObject {
            class: agent_class,
            radius: r,
            track: track.clone(),
            present: vec![true; cfg.num_frames],
            altered_from: None,
        }];
        for (i, &c) in classes.iter().enumerate() {
            objects.push(SceneObject {
                class: c,
                radius: r,
                track: vec![targets[i]; cfg.num_frames],
                present: vec![true; cfg.num_frames],
                altered_from: None,
            });
        }
        if !tracks_clear(&objects) {
            continue;
        }

        // events: first frame the agent is within touch range of an object
        let touch_range = min_separation(r, r) + 1.0;
        let mut events = Vec::new();
        let mut bits = vec![0u8; cfg.num_classes()];
        for (i, &c) in classes.iter().enumerate() {
            if let Some(f) = track
                .iter()
                .position(|p| Pos::dist(*p, targets[i]) <= touch_range)
            {
                events.push(Event {
                    kind: EventKind::Touch {
                        agent: agent_class,
                        object: c,
                    },
                    frame: f,
                });
                bits[c] = 1;
            }
        }
        events.sort_by_key(|e| e.frame);
        // intended touches must all have registered
        let intended: usize = n_touched;
        if events.len() != intended {
            continue;
        }
        return Ok(Scene {
            objects,
            label: VideoLabel::Multi(bits),
            events,
        });
    }
    Err(SyntheticError::PlacementInfeasible {
        seed: cfg.seed,
        video_index,
        attempts: PLACEMENT_ATTEMPTS,
    })
}

/// The agent approaches one target; on contact the target's appearance
/// flips to a dimmed variant. Label: the changed object's class.
fn build_state_change(
    cfg: &WorldConfig,
    video_index: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Scene, SyntheticError> {
    if cfg.num_classes() < 2 {
        return Err(SyntheticError::TooFewClasses {
            needed: 2,
            got: cfg.num_classes(),
        });
    }
    let (h, w) = cfg.grid;
    let r = cfg.object_radius;
    let margin = (r + 2) as f64;
    let agent_class = 0usize;
    let target_class = rng.random_range(1..cfg.num_classes());

    for _ in 0..PLACEMENT_ATTEMPTS {
        let agent_start = sample_pos(h, w, margin, rng);
        let target_pos = sample_pos(h, w, margin, rng);
        let contact_gap = min_separation(r, r) + 0.5;
        if Pos::dist(agent_start, target_pos) < contact_gap + 2.0 {
            continue;
        }
        let d = Pos::dist(agent_start, target_pos);
        let approach = Pos::lerp(agent_start, target_pos, (d - contact_gap) / d);

        let tc = cfg.num_frames / 2;
        let mut track = Vec::with_capacity(cfg.num_frames);
        for t in 0..cfg.num_frames {
            if t <= tc {
                track.push(Pos::lerp(agent_start, approach, t as f64 / tc.max(1) as f64));
            } else {
                track.push(approach);
            }
        }
        let mut objects = vec![
            SceneObject {
                class: agent_class,
                radius: r,
                track,
                present: vec![true; cfg.num_frames],
                altered_from: None,
            },
            SceneObject {
                class: target_class,
                radius: r,
                track: vec![target_pos; cfg.num_frames],
                present: vec![true; cfg.num_frames],
                altered_from: Some(tc),
            },
        ];
        for c in pick_distractor_classes(cfg, &[agent_class, target_class], rng) {
            objects.push(SceneObject {
                class: c,
                radius: r,
                track: distractor_track(cfg, margin, rng),
                present: vec![true; cfg.num_frames],
                altered_from: None,
            });
        }
        if !tracks_clear(&objects) {
            continue;
        }
        let events = vec![
            Event {
                kind: EventKind::Contact {
                    a: agent_class,
                    b: target_class,
                },
                frame: tc,
            },
            Event {
                kind: EventKind::StateChange {
                    object: target_class,
                },
                frame: tc,
            },
        ];
        return Ok(Scene {
            objects,
            label: VideoLabel::Single(target_class),
            events,
        });
    }
    Err(SyntheticError::PlacementInfeasible {
        seed: cfg.seed,
        video_index,
        attempts: PLACEMENT_ATTEMPTS,
    })
}

/// One object of a random class either appears or vanishes mid-video.
/// Label encodes (class, appeared-vs-vanished).
fn build_appear_disappear(
    cfg: &WorldConfig,
    video_index: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Scene, SyntheticError> {
    let (h, w) = cfg.grid;
    let r = cfg.object_radius;
    let margin = (r + 2) as f64;
    let target_class = rng.random_range(0..cfg.num_classes());
    let appears = rng.random_bool(0.5);
    let tc = cfg.num_frames / 2;

    for _ in 0..PLACEMENT_ATTEMPTS {
        let target_pos = sample_pos(h, w, margin, rng);
        let present: Vec<bool> = (0..cfg.num_frames)
            .map(|t| if appears { t >= tc } else { t < tc })
            .collect();
        let mut objects = vec![SceneObject {
            class: target_class,
            radius: r,
            track: vec![target_pos; cfg.num_frames],
            present,
            altered_from: None,
        }];
        for c in pick_distractor_classes(cfg, &[target_class], rng) {
            objects.push(SceneObject {
                class: c,
                radius: r,
                track: distractor_track(cfg, margin, rng),
                present: vec![true; cfg.num_frames],
                altered_from: None,
            });
        }
        if !tracks_clear(&objects) {
            continue;
        }
        let events = vec![Event {
            kind: if appears {
                EventKind::Appear {
                    object: target_class,
                }
            } else {
                EventKind::Disappear {
                    object: target_class,
                }
            },
            frame: tc,
        }];
        let label = 2 * target_class + if appears { 0 } else { 1 };
        return Ok(Scene {
            objects,
            label: VideoLabel::Single(label),
            events,
        });
    }
    Err(SyntheticError::PlacementInfeasible {
        seed: cfg.seed,
        video_index,
        attempts: PLACEMENT_ATTEMPTS,
    })
}

fn altered_color(c: [f32; 3]) -> [f32; 3] {
    [
        c[0] * 0.45 + 0.35,
        c[1] * 0.45 + 0.35,
        c[2] * 0.45 + 0.35,
    ]
}

fn render(cfg: &WorldConfig, scene: &Scene, rng: &mut ChaCha8Rng) -> (FrameBlock, Vec<Vec<InstanceAnnotation>>) {
    let (h, w) = cfg.grid;
    let t_n = cfg.num_frames;
    // static textured noise background, per video
    let bg: Vec<u8> = (0..3 * h * w)
        .map(|_| (rng.random_range(0.0..0.22) * 255.0) as u8)
        .collect();

    let mut data = vec![0u8; 3 * t_n * h * w];
    for c in 0..3 {
        for t in 0..t_n {
            for y in 0..h {
                for x in 0..w {
                    data[((c * t_n + t) * h + y) * w + x] = bg[(c * h + y) * w + x];
                }
            }
        }
    }

    let mut annotations: Vec<Vec<InstanceAnnotation>> = vec![Vec::new(); t_n];
    for t in 0..t_n {
        for obj in &scene.objects {
            if !obj.present[t] {
                continue;
            }
            let arch = cfg.object_classes[obj.class];
            let color = match obj.altered_from {
                Some(tc) if t >= tc => altered_color(arch.color),
                _ => arch.color,
            };
            let mask = rasterize(arch.shape, obj.track[t], obj.radius, h, w);
            debug_assert!(mask.foreground_count() > 0);
            for y in 0..h {
                for x in 0..w {
                    if mask.get(y, x) {
                        for c in 0..3 {
                            data[((c * t_n + t) * h + y) * w + x] =
                                (color[c].clamp(0.0, 1.0) * 255.0) as u8;
                        }
                    }
                }
            }
            let mut dist = vec![0.0f32; cfg.num_classes()];
            dist[obj.class] = 1.0;
            annotations[t].push(InstanceAnnotation {
                class_distribution: dist,
                score: 1.0,
                mask,
            });
        }
    }

    if let Some(noise) = cfg.noisy_detector {
        apply_detector_noise(&mut annotations, noise, rng);
    }

    (
        FrameBlock {
            frames: t_n,
            height: h,
            width: w,
            data,
        },
        annotations,
    )
}

/// Drops annotations and erodes mask boundaries. Erosion-only so instance
/// masks stay pixel-disjoint; masks never drop below one pixel.
fn apply_detector_noise(
    annotations: &mut [Vec<InstanceAnnotation>],
    noise: NoisyDetector,
    rng: &mut ChaCha8Rng,
) {
    for frame in annotations.iter_mut() {
        let mut kept = Vec::new();
        for mut ann in frame.drain(..) {
            if rng.random_bool(noise.drop_prob) {
                continue;
            }
            if noise.boundary_erode_prob > 0.0 {
                let m = &ann.mask;
                let mut to_clear = Vec::new();
                for y in 0..m.height {
                    for x in 0..m.width {
                        if !m.get(y, x) {
                            continue;
                        }
                        let boundary = y == 0
                            || x == 0
                            || y + 1 == m.height
                            || x + 1 == m.width
                            || !m.get(y - 1, x)
                            || !m.get(y + 1, x)
                            || !m.get(y, x - 1)
                            || !m.get(y, x + 1);
                        if boundary && rng.random_bool(noise.boundary_erode_prob) {
                            to_clear.push((y, x));
                        }
                    }
                }
                for (y, x) in to_clear {
                    if ann.mask.foreground_count() > 1 {
                        ann.mask.set(y, x, false);
                    }
                }
            }
            ann.score = (1.0 - rng.random_range(0.0..0.3)) as f32;
            kept.push(ann);
        }
        *frame = kept;
    }
}

/// Generates one video deterministically from (cfg.seed, video_index).
pub fn generate_video(cfg: &WorldConfig, video_index: u64) -> Result<GeneratedVideo, SyntheticError> {
    let mut rng = ChaCha8Rng::seed_from_u64(video_seed(cfg.seed, video_index));
    let scene = build_scene(cfg, video_index, &mut rng)?;
    let (frames, annotations) = render(cfg, &scene, &mut rng);
    Ok(GeneratedVideo {
        id: video_index,
        frames,
        annotations,
        label: scene.label,
        event_log: scene.events,
    })
}

/// Generates `n` videos (parallel over videos, deterministic order).
pub fn generate(cfg: &WorldConfig, n: usize) -> Result<Vec<GeneratedVideo>, SyntheticError> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| generate_video(cfg, i))
        .collect()
}

/// Recomputes a video's label from its event log alone.
pub fn oracle_label(cfg: &WorldConfig, events: &[Event]) -> VideoLabel {
    match cfg.task {
        TaskKind::OrderedSwap => {
            let label = events
                .iter()
                .rev()
                .find_map(|e| match e.kind {
                    EventKind::Swap { actor, patient } => {
                        Some(if actor == 0 && patient == 1 { 0 } else { 1 })
                    }
                    _ => None,
                })
                .expect("ordered_swap log must contain a swap event");
            VideoLabel::Single(label)
        }
        TaskKind::Touch => {
            let mut bits = vec![0u8; cfg.num_classes()];
            for e in events {
                if let EventKind::Touch { object, .. } = e.kind {
                    bits[object] = 1;
                }
            }
            VideoLabel::Multi(bits)
        }
        TaskKind::StateChange => {
            let class = events
                .iter()
                .find_map(|e| match e.kind {
                    EventKind::StateChange { object } => Some(object),
                    _ => None,
                })
                .expect("state_change log must contain a state change");
            VideoLabel::Single(class)
        }
        TaskKind::AppearDisappear => {
            let label = events
                .iter()
                .find_map(|e| match e.kind {
                    EventKind::Appear { object } => Some(2 * object),
                    EventKind::Disappear { object } => Some(2 * object + 1),
                    _ => None,
                })
                .expect("appear_disappear log must contain the event");
            VideoLabel::Single(label)
        }
    }
}

/// Label of the time-reversed video, per task semantics.
pub fn mirror_label(cfg: &WorldConfig, label: &VideoLabel) -> VideoLabel {
    match (cfg.task, label) {
        (TaskKind::OrderedSwap, VideoLabel::Single(l)) => VideoLabel::Single(1 - l),
        (TaskKind::AppearDisappear, VideoLabel::Single(l)) => {
            let class = l / 2;
            let bit = l % 2;
            VideoLabel::Single(2 * class + (1 - bit))
        }
        _ => label.clone(),
    }
}

/// Reverses frame and annotation order, remaps the event log, and mirrors
/// the label where the task is direction-sensitive.
pub fn time_reverse(cfg: &WorldConfig, video: &GeneratedVideo) -> GeneratedVideo {
    let t_n = video.frames.frames;
    let (h, w) = (video.frames.height, video.frames.width);
    let mut data = vec![0u8; video.frames.data.len()];
    for c in 0..3 {
        for t in 0..t_n {
            let src = t_n - 1 - t;
            for i in 0..h * w {
                data[(c * t_n + t) * h * w + i] = video.frames.data[(c * t_n + src) * h * w + i];
            }
        }
    }
    let mut annotations = video.annotations.clone();
    annotations.reverse();

    let mut event_log: Vec<Event> = video
        .event_log
        .iter()
        .map(|e| {
            let frame = t_n - 1 - e.frame;
            let kind = match e.kind {
                EventKind::Swap { actor, patient } => EventKind::Swap {
                    actor: patient,
                    patient: actor,
                },
                EventKind::Contact { a, b } => EventKind::Contact { a: b, b: a },
                EventKind::Appear { object } => EventKind::Disappear { object },
                EventKind::Disappear { object } => EventKind::Appear { object },
                other => other,
            };
            Event { kind, frame }
        })
        .collect();
    event_log.sort_by_key(|e| e.frame);

    GeneratedVideo {
        id: video.id,
        frames: FrameBlock {
            frames: t_n,
            height: h,
            width: w,
            data,
        },
        annotations,
        label: mirror_label(cfg, &video.label),
        event_log,
    }
}

/// Mean per-frame foreground pixel count per class over a set of videos;
/// the histogram oracle used to verify that frame-global statistics are
/// matched across labels.
pub fn class_pixel_histogram(cfg: &WorldConfig, videos: &[&GeneratedVideo]) -> Vec<f64> {
    let mut sums = vec![0.0f64; cfg.num_classes()];
    let mut frames = 0usize;
    for v in videos {
        for frame in &v.annotations {
            frames += 1;
            for ann in frame {
                sums[ann.class_index()] += ann.mask.foreground_count() as f64;
            }
        }
    }
    if frames > 0 {
        for s in sums.iter_mut() {
            *s /= frames as f64;
        }
    }
    sums
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_cfg(task: TaskKind, seed: u64) -> WorldConfig {
        WorldConfig {
            task,
            seed,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = test_cfg(TaskKind::OrderedSwap, 42);
        let a = generate(&cfg, 5).unwrap();
        let b = generate(&cfg, 5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.frames, y.frames);
            assert_eq!(x.label, y.label);
            assert_eq!(x.event_log, y.event_log);
        }
        let cfg2 = test_cfg(TaskKind::OrderedSwap, 43);
        let c = generate(&cfg2, 5).unwrap();
        assert_ne!(a[0].frames.data, c[0].frames.data);
    }

    #[test]
    fn masks_are_disjoint_and_nonempty() {
        for task in [
            TaskKind::OrderedSwap,
            TaskKind::Touch,
            TaskKind::StateChange,
            TaskKind::AppearDisappear,
        ] {
            let cfg = test_cfg(task, 7);
            for v in generate(&cfg, 10).unwrap() {
                for frame in &v.annotations {
                    let mut seen = Mask::zeros(cfg.grid.0, cfg.grid.1);
                    for ann in frame {
                        assert!(ann.mask.foreground_count() > 0);
                        ann.validate().unwrap();
                        for y in 0..cfg.grid.0 {
                            for x in 0..cfg.grid.1 {
                                if ann.mask.get(y, x) {
                                    assert!(!seen.get(y, x), "overlap at ({y},{x}) in task {task:?}");
                                    seen.set(y, x, true);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn oracle_agrees_with_stored_labels() {
        for task in [
            TaskKind::OrderedSwap,
            TaskKind::Touch,
            TaskKind::StateChange,
            TaskKind::AppearDisappear,
        ] {
            let cfg = test_cfg(task, 11);
            for v in generate(&cfg, 50).unwrap() {
                assert_eq!(oracle_label(&cfg, &v.event_log), v.label, "task {task:?}");
            }
        }
    }

    #[test]
    fn empty_touch_log_is_all_zero() {
        let cfg = test_cfg(TaskKind::Touch, 0);
        assert_eq!(
            oracle_label(&cfg, &[]),
            VideoLabel::Multi(vec![0; cfg.num_classes()])
        );
    }

    #[test]
    fn swap_log_maps_to_actor_label() {
        let cfg = test_cfg(TaskKind::OrderedSwap, 0);
        let log = vec![
            Event {
                kind: EventKind::Contact { a: 0, b: 1 },
                frame: 3,
            },
            Event {
                kind: EventKind::Swap {
                    actor: 0,
                    patient: 1,
                },
                frame: 7,
            },
        ];
        assert_eq!(oracle_label(&cfg, &log), VideoLabel::Single(0));
    }

    #[test]
    fn double_reversal_is_identity() {
        let cfg = test_cfg(TaskKind::OrderedSwap, 13);
        let v = generate_video(&cfg, 0).unwrap();
        let twice = time_reverse(&cfg, &time_reverse(&cfg, &v));
        assert_eq!(v.frames, twice.frames);
        assert_eq!(v.label, twice.label);
        assert_eq!(v.event_log, twice.event_log);
    }

    #[test]
    fn reversed_swap_has_mirror_oracle_label() {
        let cfg = test_cfg(TaskKind::OrderedSwap, 17);
        for v in generate(&cfg, 20).unwrap() {
            let rev = time_reverse(&cfg, &v);
            let mirrored = mirror_label(&cfg, &v.label);
            assert_eq!(rev.label, mirrored);
            assert_eq!(oracle_label(&cfg, &rev.event_log), mirrored);
        }
    }

    #[test]
    fn histograms_match_across_labels() {
        let cfg = test_cfg(TaskKind::OrderedSwap, 23);
        let videos = generate(&cfg, 300).unwrap();
        let l0: Vec<&GeneratedVideo> = videos
            .iter()
            .filter(|v| v.label == VideoLabel::Single(0))
            .collect();
        let l1: Vec<&GeneratedVideo> = videos
            .iter()
            .filter(|v| v.label == VideoLabel::Single(1))
            .collect();
        assert!(l0.len() > 50 && l1.len() > 50);
        let h0 = class_pixel_histogram(&cfg, &l0);
        let h1 = class_pixel_histogram(&cfg, &l1);
        // classes 0 and 1 always present; distractor classes vary
        for c in 0..2 {
            let rel = (h0[c] - h1[c]).abs() / h0[c].max(1e-9);
            assert!(rel < 0.03, "class {c}: {} vs {}", h0[c], h1[c]);
        }
    }

    #[test]
    fn appear_disappear_varies_object_count() {
        let cfg = WorldConfig {
            num_distractors: 0,
            ..test_cfg(TaskKind::AppearDisappear, 29)
        };
        let v = generate_video(&cfg, 1).unwrap();
        let counts: Vec<usize> = v.annotations.iter().map(|f| f.len()).collect();
        assert!(counts.contains(&0) && counts.contains(&1), "{counts:?}");
    }

    #[test]
    fn noisy_detector_erodes_but_keeps_disjoint_masks() {
        let cfg = WorldConfig {
            noisy_detector: Some(NoisyDetector {
                drop_prob: 0.3,
                boundary_erode_prob: 0.5,
            }),
            ..test_cfg(TaskKind::OrderedSwap, 31)
        };
        let clean_cfg = WorldConfig {
            noisy_detector: None,
            ..cfg.clone()
        };
        let noisy = generate_video(&cfg, 2).unwrap();
        let clean = generate_video(&clean_cfg, 2).unwrap();
        let n_noisy: usize = noisy.annotations.iter().map(|f| f.len()).sum();
        let n_clean: usize = clean.annotations.iter().map(|f| f.len()).sum();
        assert!(n_noisy < n_clean);
        for frame in &noisy.annotations {
            for ann in frame {
                assert!(ann.mask.foreground_count() > 0);
            }
        }
    }
}
