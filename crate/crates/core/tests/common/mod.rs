//! Graph builders and independent oracles shared by the integration tests.
#![allow(dead_code)]

use textnav::scene::{Position, SceneGraph, ViewDescriptor, Viewpoint};
use textnav::worldgen::bearing;

pub fn id(i: usize) -> String {
    format!("n{i}")
}

/// A graph over `positions` with the given directed edges (self-loops and
/// repeats dropped). Every edge gets its own view.
pub fn graph_from(positions: &[[f64; 3]], edges: &[(usize, usize)]) -> SceneGraph {
    let mut seen = std::collections::BTreeSet::new();
    let viewpoints = positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let views = edges
                .iter()
                .filter(|&&(a, b)| a == i && a != b && seen.insert((a, b)))
                .map(|&(_, b)| {
                    let (heading_deg, elevation_deg) = bearing(Position(*p), Position(positions[b]));
                    ViewDescriptor {
                        heading_deg,
                        elevation_deg,
                        caption: format!("a doorway towards room {b}"),
                        objects: vec![format!("object{b}")],
                        leads_to: Some(id(b)),
                    }
                })
                .collect();
            Viewpoint { id: id(i), position: Position(*p), views }
        })
        .collect();
    SceneGraph::new("oracle", viewpoints).expect("builder produces valid graphs")
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Plain straight-line distance between two viewpoints, from raw coordinates.
pub fn straight(g: &SceneGraph, a: &str, b: &str) -> f64 {
    dist(g.viewpoint(a).unwrap().position.0, g.viewpoint(b).unwrap().position.0)
}

fn edges_of(g: &SceneGraph, a: &str) -> Vec<String> {
    g.viewpoint(a).unwrap().views.iter().filter_map(|v| v.leads_to.clone()).collect()
}

/// Shortest distance by enumerating every simple path.
pub fn enumerate_shortest(g: &SceneGraph, a: &str, b: &str) -> Option<f64> {
    fn go(g: &SceneGraph, at: &str, b: &str, so_far: f64, on_path: &mut Vec<String>, best: &mut Option<f64>) {
        if at == b {
            if best.is_none_or(|x| so_far < x) {
                *best = Some(so_far);
            }
            return;
        }
        for next in edges_of(g, at) {
            if on_path.contains(&next) {
                continue;
            }
            let d = so_far + straight(g, at, &next);
            on_path.push(next.clone());
            go(g, &next, b, d, on_path, best);
            on_path.pop();
        }
    }
    let mut best = None;
    go(g, a, b, 0.0, &mut vec![a.to_string()], &mut best);
    best
}

/// All-pairs shortest distances (Floyd-Warshall), keyed by viewpoint id.
pub struct AllPairs {
    ids: Vec<String>,
    d: Vec<Vec<f64>>,
}

impl AllPairs {
    pub fn new(g: &SceneGraph) -> Self {
        let ids: Vec<String> = g.viewpoints().map(|v| v.id.clone()).collect();
        let n = ids.len();
        let ix = |s: &str| ids.iter().position(|x| x == s).unwrap();
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for i in 0..n {
            d[i][i] = 0.0;
            for to in edges_of(g, &ids[i]) {
                let j = ix(&to);
                d[i][j] = d[i][j].min(straight(g, &ids[i], &to));
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        AllPairs { ids, d }
    }

    pub fn get(&self, a: &str, b: &str) -> f64 {
        let ix = |s: &str| self.ids.iter().position(|x| x == s).unwrap();
        self.d[ix(a)][ix(b)]
    }
}

/// (TL, NE, SR, OSR, SPL) recomputed from coordinates.
pub fn metrics_oracle(g: &SceneGraph, path: &[String], goal: &str, shortest: f64, stopped: bool) -> [f64; 5] {
    let mut tl = 0.0;
    for i in 1..path.len() {
        tl += straight(g, &path[i - 1], &path[i]);
    }
    let ne = straight(g, path.last().unwrap(), goal);
    let sr = f64::from(u8::from(stopped && ne <= 3.0));
    let osr = f64::from(u8::from(path.iter().any(|p| straight(g, p, goal) <= 3.0)));
    let spl = if tl == 0.0 && shortest == 0.0 { sr } else { sr * shortest / tl.max(shortest) };
    [tl, ne, sr, osr, spl]
}

/// Index of the most cosine-similar row; first index wins ties.
pub fn cosine_scan(rows: &[Vec<f32>], q: &[f32]) -> usize {
    let cos = |a: &[f32], b: &[f32]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
        let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let mut best = 0;
    for i in 1..rows.len() {
        if cos(&rows[i], q) > cos(&rows[best], q) {
            best = i;
        }
    }
    best
}

/// Files for driving the command line on a generated world.
pub struct WorldFiles {
    pub scenes: Vec<std::path::PathBuf>,
    pub episodes: std::path::PathBuf,
    pub scripts: std::path::PathBuf,
    pub sim: std::path::PathBuf,
}

pub fn write_world(dir: &std::path::Path, seed: u64) -> WorldFiles {
    use textnav::agents::{ReplayScript, ScriptedAction};
    use textnav::runner::{run_all, RunConfig};

    let (scenes, episodes) = textnav::worldgen::random_world(seed, 3, 8..=14, 4);
    let mut scene_paths = Vec::new();
    for g in scenes.graphs() {
        let p = dir.join(format!("{}.json", g.scan_id()));
        std::fs::write(&p, g.to_json_string()).unwrap();
        scene_paths.push(p);
    }
    let ep_path = dir.join("episodes.jsonl");
    let lines: String = episodes.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect();
    std::fs::write(&ep_path, lines).unwrap();

    let results = run_all(&scenes, &episodes, |_, _| Box::new(textnav::agents::OracleAgent), &RunConfig::default(), None).unwrap();
    let scripts: String = results
        .iter()
        .map(|r| {
            let actions = r.decisions.iter().map(|d| ScriptedAction::from(d.action)).collect();
            serde_json::to_string(&ReplayScript { episode_id: r.episode_id.clone(), actions }).unwrap() + "\n"
        })
        .collect();
    let script_path = dir.join("scripts.jsonl");
    std::fs::write(&script_path, scripts).unwrap();

    let mut rng = textnav::seeding::rng_from(seed, &[]);
    let sims: String = (0..6)
        .map(|_| serde_json::to_string(&textnav::worldgen::random_sim_trajectory(&mut rng, 5)).unwrap() + "\n")
        .collect();
    let sim_path = dir.join("sim.jsonl");
    std::fs::write(&sim_path, sims).unwrap();
    WorldFiles { scenes: scene_paths, episodes: ep_path, scripts: script_path, sim: sim_path }
}
