//! Navigation episodes, scene collections and few-shot sampling.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{load_scene, AgentPose, SceneError, SceneGraph};
use crate::seeding::rng_from;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("episode file line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("episode `{0}` has no instructions")]
    NoInstructions(String),
    #[error("episode `{0}` has more than 3 instructions")]
    TooManyInstructions(String),
    #[error("episode `{0}` has an empty path")]
    EmptyPath(String),
    #[error("episode `{episode}` references unknown scan `{scan}`")]
    UnknownScan { episode: String, scan: String },
    #[error("episode `{episode}`: path step {from} -> {to} is not an edge")]
    Disconnected { episode: String, from: String, to: String },
    #[error("duplicate scan id `{0}`")]
    DuplicateScan(String),
    #[error("cannot sample {shots} episodes from {scenes} scene(s): {reason}")]
    Sampling { shots: usize, scenes: usize, reason: String },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// One instruction-following episode. The goal is the last path node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Episode {
    pub id: String,
    pub scan_id: String,
    pub instructions: Vec<String>,
    pub path: Vec<String>,
    pub heading_deg: i32,
}

impl Episode {
    pub fn start(&self) -> &str {
        &self.path[0]
    }

    pub fn goal(&self) -> &str {
        self.path.last().expect("validated episodes have a path")
    }

    pub fn hops(&self) -> usize {
        self.path.len() - 1
    }

    /// Starting heading snapped to the nearest multiple of 30.
    pub fn start_heading(&self) -> i32 {
        ((self.heading_deg as f64 / 30.0).round() as i32 * 30).rem_euclid(360)
    }

    pub fn initial_pose(&self) -> AgentPose {
        AgentPose { viewpoint_id: self.start().to_string(), heading_deg: self.start_heading(), elevation_deg: 0 }
    }

    pub fn instruction(&self, index: usize) -> &str {
        &self.instructions[index % self.instructions.len()]
    }

    /// Schema-level checks (no graph needed).
    pub fn check_shape(&self) -> Result<(), EpisodeError> {
        if self.instructions.is_empty() {
            return Err(EpisodeError::NoInstructions(self.id.clone()));
        }
        if self.instructions.len() > 3 {
            return Err(EpisodeError::TooManyInstructions(self.id.clone()));
        }
        if self.path.is_empty() {
            return Err(EpisodeError::EmptyPath(self.id.clone()));
        }
        Ok(())
    }

    /// Path nodes exist and consecutive nodes are connected.
    pub fn validate(&self, graph: &SceneGraph) -> Result<(), EpisodeError> {
        self.check_shape()?;
        for id in &self.path {
            graph.viewpoint(id)?;
        }
        for pair in self.path.windows(2) {
            if !graph.is_connected(&pair[0], &pair[1]) {
                return Err(EpisodeError::Disconnected {
                    episode: self.id.clone(),
                    from: pair[0].clone(),
                    to: pair[1].clone(),
                });
            }
        }
        Ok(())
    }
}

pub fn parse_episodes(text: &str) -> Result<Vec<Episode>, EpisodeError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ep: Episode = serde_json::from_str(line).map_err(|source| EpisodeError::Parse { line: i + 1, source })?;
        ep.check_shape()?;
        out.push(ep);
    }
    Ok(out)
}

pub fn load_episodes(path: impl AsRef<Path>) -> Result<Vec<Episode>, EpisodeError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| EpisodeError::Io { path: path.display().to_string(), source })?;
    parse_episodes(&text)
}

/// Scenes keyed by scan id.
#[derive(Debug, Clone, Default)]
pub struct SceneSet {
    scenes: BTreeMap<String, SceneGraph>,
}

impl SceneSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, graph: SceneGraph) -> Result<(), EpisodeError> {
        let id = graph.scan_id().to_string();
        if self.scenes.contains_key(&id) {
            return Err(EpisodeError::DuplicateScan(id));
        }
        self.scenes.insert(id, graph);
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(paths: &[P]) -> Result<Self, EpisodeError> {
        let mut set = SceneSet::new();
        for p in paths {
            set.insert(load_scene(p)?)?;
        }
        Ok(set)
    }

    pub fn get(&self, scan_id: &str) -> Option<&SceneGraph> {
        self.scenes.get(scan_id)
    }

    pub fn graphs(&self) -> impl Iterator<Item = &SceneGraph> + Clone {
        self.scenes.values()
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn graph_for(&self, episode: &Episode) -> Result<&SceneGraph, EpisodeError> {
        self.get(&episode.scan_id).ok_or_else(|| EpisodeError::UnknownScan {
            episode: episode.id.clone(),
            scan: episode.scan_id.clone(),
        })
    }

    pub fn validate(&self, episodes: &[Episode]) -> Result<(), EpisodeError> {
        for ep in episodes {
            ep.validate(self.graph_for(ep)?)?;
        }
        Ok(())
    }
}

impl From<SceneGraph> for SceneSet {
    fn from(graph: SceneGraph) -> Self {
        let mut set = SceneSet::new();
        set.insert(graph).expect("a single scene cannot clash");
        set
    }
}

/// Draw `shots` episodes spread evenly over `n_scenes` distinct scans
/// (10-shot from one scene, 100-shot from two, and so on). Scenes are chosen
/// at random among those holding enough episodes; output is sorted by id.
pub fn sample_few_shot(
    episodes: &[Episode],
    shots: usize,
    n_scenes: usize,
    seed: u64,
) -> Result<Vec<Episode>, EpisodeError> {
    let fail = |reason: &str| EpisodeError::Sampling { shots, scenes: n_scenes, reason: reason.to_string() };
    if n_scenes == 0 || shots < n_scenes {
        return Err(fail("need at least one episode per scene"));
    }
    let mut by_scan: BTreeMap<&str, Vec<&Episode>> = BTreeMap::new();
    for ep in episodes {
        by_scan.entry(ep.scan_id.as_str()).or_default().push(ep);
    }
    let quota = |i: usize| shots / n_scenes + usize::from(i < shots % n_scenes);
    let mut rng = rng_from(seed, &[shots as u64, n_scenes as u64]);
    let mut scans: Vec<&str> = by_scan.keys().copied().collect();
    scans.shuffle(&mut rng);
    // largest quota first, so any scene able to hold it is taken first
    let mut chosen: Vec<&str> = Vec::with_capacity(n_scenes);
    for i in 0..n_scenes {
        let need = quota(i);
        let pick = scans.iter().position(|s| !chosen.contains(s) && by_scan[s].len() >= need);
        match pick {
            Some(p) => chosen.push(scans[p]),
            None => return Err(fail("not enough scenes with enough episodes")),
        }
    }
    let mut out = Vec::with_capacity(shots);
    for (i, scan) in chosen.iter().enumerate() {
        let mut pool = by_scan[scan].clone();
        pool.shuffle(&mut rng);
        out.extend(pool.into_iter().take(quota(i)).cloned());
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}
