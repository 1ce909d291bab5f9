//! Seeded random scenes, episodes and simulator trajectories.
//!
//! Used by the property tests, the acceptance suite and the examples. Scenes
//! are strongly connected (a two-way spanning tree plus extra edges, some of
//! them one-way), and episode gold paths are geodesics.

use std::ops::RangeInclusive;

use rand::seq::IndexedRandom;
use rand::Rng as _;

use crate::alfred::{InstructionText, SimAction, SimStep, SimTrajectory, GOTO_TAG};
use crate::episode::{Episode, SceneSet};
use crate::scene::{euclidean_distance, geodesic, Position, SceneGraph, ViewDescriptor, Viewpoint};
use crate::seeding::{rng_from, Rng};

const ROOMS: &[&str] = &[
    "kitchen", "hallway", "bedroom", "bathroom", "living room", "dining room", "office", "staircase", "laundry room",
    "den", "entryway", "closet",
];
const ADJECTIVES: &[&str] = &["bright", "small", "large", "dark", "narrow", "wooden", "carpeted", "modern", "cozy", "white"];
const OBJECTS: &[&str] = &[
    "chair", "table", "lamp", "sofa", "bed", "sink", "mirror", "rug", "door", "window", "plant", "painting",
    "shelf", "oven", "bowl", "towel", "television", "stairs",
];

/// Quantized bearing from `a` to `b`: heading 0 is +y, clockwise.
pub fn bearing(a: Position, b: Position) -> (i32, i32) {
    let dx = b.0[0] - a.0[0];
    let dy = b.0[1] - a.0[1];
    let dz = b.0[2] - a.0[2];
    let heading = (dx.atan2(dy).to_degrees() / 30.0).round() as i32 * 30;
    let pitch = dz.atan2(dx.hypot(dy)).to_degrees();
    let elevation = if pitch > 15.0 {
        30
    } else if pitch < -15.0 {
        -30
    } else {
        0
    };
    (heading.rem_euclid(360), elevation)
}

fn caption(rng: &mut Rng) -> String {
    format!(
        "a {} {} with a {}",
        ADJECTIVES.choose(rng).unwrap(),
        ROOMS.choose(rng).unwrap(),
        OBJECTS.choose(rng).unwrap()
    )
}

fn objects(rng: &mut Rng) -> Vec<String> {
    let n = rng.random_range(0..=3);
    OBJECTS.choose_multiple(rng, n).map(|s| s.to_string()).collect()
}

/// A connected scene of `n` viewpoints. Each node links to its nearest
/// earlier node (a spanning tree, both directions), plus a few extra edges,
/// some of them one-way, plus decorative non-navigable views.
pub fn random_scene(rng: &mut Rng, scan_id: &str, n: usize) -> SceneGraph {
    let side = 2.5 * (n as f64).sqrt();
    let positions: Vec<Position> = (0..n)
        .map(|_| {
            let z = if rng.random_bool(0.15) { 2.5 } else { 0.0 };
            Position::new(rng.random_range(0.0..side), rng.random_range(0.0..side), z)
        })
        .collect();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for i in 1..n {
        let j = (0..i)
            .min_by(|&a, &b| {
                euclidean_distance(positions[i], positions[a]).total_cmp(&euclidean_distance(positions[i], positions[b]))
            })
            .expect("i >= 1");
        edges.push((i, j));
        edges.push((j, i));
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && !edges.contains(&(i, j)) && euclidean_distance(positions[i], positions[j]) < 3.5 && rng.random_bool(0.4) {
                edges.push((i, j));
                if rng.random_bool(0.8) && !edges.contains(&(j, i)) {
                    edges.push((j, i));
                }
            }
        }
    }
    let id = |i: usize| format!("{scan_id}_vp{i:02}");
    let viewpoints = (0..n)
        .map(|i| {
            let mut views: Vec<ViewDescriptor> = edges
                .iter()
                .filter(|(a, _)| *a == i)
                .map(|&(_, b)| {
                    let (heading_deg, elevation_deg) = bearing(positions[i], positions[b]);
                    ViewDescriptor {
                        heading_deg,
                        elevation_deg,
                        caption: caption(rng),
                        objects: objects(rng),
                        leads_to: Some(id(b)),
                    }
                })
                .collect();
            for _ in 0..rng.random_range(0..=2) {
                views.push(ViewDescriptor {
                    heading_deg: 30 * rng.random_range(0..12),
                    elevation_deg: [-30, 0, 30][rng.random_range(0..3)],
                    caption: caption(rng),
                    objects: objects(rng),
                    leads_to: None,
                });
            }
            Viewpoint { id: id(i), position: positions[i], views }
        })
        .collect();
    SceneGraph::new(scan_id, viewpoints).expect("generated scenes are valid")
}

/// Episodes whose gold path is the geodesic between a random start and goal.
pub fn random_episodes(rng: &mut Rng, graph: &SceneGraph, count: usize, min_hops: usize) -> Vec<Episode> {
    let ids: Vec<String> = graph.viewpoints().map(|v| v.id.clone()).collect();
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count && tries < count * 100 {
        tries += 1;
        let start = ids.choose(rng).unwrap();
        let goal = ids.choose(rng).unwrap();
        let Some(route) = geodesic(graph, start, goal).expect("ids exist") else { continue };
        if route.path.len() - 1 < min_hops {
            continue;
        }
        let goal_caption = graph.viewpoint(goal).ok().and_then(|v| v.views.first()).map_or("the goal".into(), |v| v.caption.clone());
        let n_instr = rng.random_range(1..=3);
        let instructions = (0..n_instr)
            .map(|k| format!("Walk {} steps and stop near {goal_caption} ({k}).", route.path.len() - 1))
            .collect();
        out.push(Episode {
            id: format!("{}_ep{:03}", graph.scan_id(), out.len()),
            scan_id: graph.scan_id().to_string(),
            instructions,
            path: route.path,
            heading_deg: 30 * rng.random_range(0..12),
        });
    }
    out
}

/// `n_scenes` scenes with sizes drawn from `nodes`, each with `per_scene` episodes.
pub fn random_world(seed: u64, n_scenes: usize, nodes: RangeInclusive<usize>, per_scene: usize) -> (SceneSet, Vec<Episode>) {
    let mut rng = rng_from(seed, &[]);
    let mut scenes = SceneSet::new();
    let mut episodes = Vec::new();
    for s in 0..n_scenes {
        let n = rng.random_range(nodes.clone());
        let g = random_scene(&mut rng, &format!("scan{s:03}"), n);
        episodes.extend(random_episodes(&mut rng, &g, per_scene, 1.min(n - 1)));
        scenes.insert(g).expect("unique scan ids");
    }
    (scenes, episodes)
}

/// A household trajectory: alternating navigation and interaction runs,
/// headings on multiples of 90.
pub fn random_sim_trajectory(rng: &mut Rng, runs: usize) -> SimTrajectory {
    let mut heading = 90 * rng.random_range(0..4);
    let mut steps = Vec::new();
    let mut subgoals = Vec::new();
    for r in 0..runs {
        if r % 2 == 0 {
            let room = ROOMS.choose(rng).unwrap();
            subgoals.push(format!("Go to the {room}."));
            for _ in 0..rng.random_range(1..=12) {
                let action = match rng.random_range(0..10) {
                    0 => SimAction::RotateLeft,
                    1 => SimAction::RotateRight,
                    2 => SimAction::LookDown,
                    _ => SimAction::MoveAhead,
                };
                heading = match action {
                    SimAction::RotateLeft => (heading + 270) % 360,
                    SimAction::RotateRight => (heading + 90) % 360,
                    _ => heading,
                };
                steps.push(SimStep { action, tag: GOTO_TAG.into(), heading_deg: heading, caption: caption(rng), objects: objects(rng) });
            }
        } else {
            let kind = ["PickupObject", "PutObject", "OpenObject", "ToggleObject"].choose(rng).unwrap().to_string();
            subgoals.push(format!("Use the {}.", OBJECTS.choose(rng).unwrap()));
            for _ in 0..rng.random_range(1..=3) {
                steps.push(SimStep {
                    action: SimAction::Interact(kind.clone()),
                    tag: kind.clone(),
                    heading_deg: heading,
                    caption: caption(rng),
                    objects: objects(rng),
                });
            }
        }
    }
    SimTrajectory { goal: "tidy up".into(), instruction: InstructionText::PerSubgoal(subgoals), steps }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bearings() {
        let o = Position::new(0.0, 0.0, 0.0);
        assert_eq!(bearing(o, Position::new(0.0, 1.0, 0.0)), (0, 0));
        assert_eq!(bearing(o, Position::new(1.0, 0.0, 0.0)), (90, 0));
        assert_eq!(bearing(o, Position::new(0.0, -1.0, 0.0)), (180, 0));
        assert_eq!(bearing(o, Position::new(-1.0, 0.0, 2.0)), (270, 30));
    }

    #[test]
    fn worlds_are_valid_and_reproducible() {
        let (scenes, eps) = random_world(5, 3, 5..=12, 4);
        scenes.validate(&eps).unwrap();
        assert_eq!(eps.len(), 12);
        let (_, again) = random_world(5, 3, 5..=12, 4);
        assert_eq!(eps, again);
        for g in ["scan000", "scan001", "scan002"].map(|s| scenes.get(s).unwrap()) {
            let ids: Vec<_> = g.viewpoints().map(|v| v.id.clone()).collect();
            assert!(ids.iter().all(|a| ids.iter().all(|b| geodesic(g, a, b).unwrap().is_some())));
        }
    }
}
