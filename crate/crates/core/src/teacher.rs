//! Shortest-path teacher and perturbed imitation-learning demonstrations.
//!
//! A demonstration follows the teacher, except that at each step before the
//! goal a random navigable move is taken with probability `rho`. After a
//! random move the teacher replans from wherever the agent ended up, so the
//! data contains recoveries from off-path states.

use rand::{Rng as _, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{Episode, EpisodeError, SceneSet};
use crate::observation::{Action, ObservationSnapshot};
use crate::render::{render_trajectory_text, Source, StepText, TrajectoryRecord, TASK_DESCRIPTION};
use crate::scene::{geodesic, navigable_candidates, AgentPose, SceneError, SceneGraph};
use crate::seeding::rng_from;

/// Resamples allowed per (episode, repeat) before giving up.
pub const DEFAULT_RETRIES: usize = 5;
pub const FULL_TRAIN_RHO: f64 = 0.2;

#[derive(Debug, Error)]
pub enum TeacherError {
    #[error("goal `{goal}` is unreachable from `{from}`")]
    Unreachable { from: String, goal: String },
    #[error("rho must lie in [0, 1], got {0}")]
    BadRho(f64),
    #[error("max_steps {max_steps} is shorter than the gold path ({needed} decisions)")]
    BudgetBelowGold { max_steps: usize, needed: usize },
    #[error("episode `{episode}` rejected: {reason}")]
    Rejected { episode: String, reason: String },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
}

/// The teacher's move: stop at the goal, otherwise head for the next node on
/// the geodesic. When several views lead there, the first in presentation
/// order wins.
pub fn teacher_action(graph: &SceneGraph, pose: &AgentPose, goal: &str) -> Result<Action, TeacherError> {
    if pose.viewpoint_id == goal {
        return Ok(Action::Stop);
    }
    let route = geodesic(graph, &pose.viewpoint_id, goal)?
        .ok_or_else(|| TeacherError::Unreachable { from: pose.viewpoint_id.clone(), goal: goal.to_string() })?;
    let next = &route.path[1];
    navigable_candidates(graph, pose)?
        .into_iter()
        .find(|c| c.view.leads_to.as_deref() == Some(next.as_str()))
        .map(|c| Action::Move(c.view_index))
        .ok_or_else(|| TeacherError::Unreachable { from: pose.viewpoint_id.clone(), goal: goal.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoStep {
    pub observation: ObservationSnapshot,
    pub chosen: Action,
    pub is_random: bool,
    pub teacher_choice: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub episode_id: String,
    pub instruction: String,
    pub start: String,
    pub steps: Vec<DemoStep>,
    pub executed_path: Vec<String>,
    pub rho_used: f64,
    pub seed_used: u64,
}

impl Demonstration {
    pub fn random_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.is_random).count()
    }

    pub fn step_texts(&self) -> Vec<StepText> {
        self.steps
            .iter()
            .map(|s| StepText {
                candidates: s.observation.texts(),
                chosen: s.observation.action_text(s.chosen).expect("chosen action is among candidates").to_string(),
                is_random: s.is_random,
            })
            .collect()
    }

    pub fn to_record(&self, include_objects: bool) -> TrajectoryRecord {
        let rendered = render_trajectory_text(TASK_DESCRIPTION, &self.instruction, &self.step_texts(), include_objects);
        TrajectoryRecord::new(rendered, self.episode_id.clone(), Source::Real)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoConfig {
    pub rho: f64,
    /// Decision budget including the final stop; `None` means 2 x hops + 5.
    pub max_steps: Option<usize>,
    pub instruction_index: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig { rho: 0.0, max_steps: None, instruction_index: 0 }
    }
}

pub fn default_max_steps(episode: &Episode) -> usize {
    2 * episode.hops() + 5
}

/// Roll out one demonstration with the given RNG.
pub fn build_demonstration_with(
    graph: &SceneGraph,
    episode: &Episode,
    config: &DemoConfig,
    rng: &mut impl RngCore,
    seed_used: u64,
) -> Result<Demonstration, TeacherError> {
    if !(0.0..=1.0).contains(&config.rho) {
        return Err(TeacherError::BadRho(config.rho));
    }
    let max_steps = config.max_steps.unwrap_or_else(|| default_max_steps(episode));
    if max_steps < episode.path.len() {
        return Err(TeacherError::BudgetBelowGold { max_steps, needed: episode.path.len() });
    }
    let goal = episode.goal();
    let reject = |reason: String| TeacherError::Rejected { episode: episode.id.clone(), reason };

    let mut pose = episode.initial_pose();
    graph.viewpoint(&pose.viewpoint_id)?;
    let mut steps = Vec::new();
    let mut executed = vec![pose.viewpoint_id.clone()];
    loop {
        let t = steps.len() + 1;
        if t > max_steps {
            return Err(reject(format!("step budget {max_steps} exhausted before reaching the goal")));
        }
        let observation = ObservationSnapshot::observe(graph, &pose, t, None)?;
        let teacher = match teacher_action(graph, &pose, goal) {
            Ok(a) => a,
            Err(TeacherError::Unreachable { from, .. }) => {
                return Err(reject(format!("stranded at `{from}` with the goal unreachable")));
            }
            Err(e) => return Err(e),
        };
        let (chosen, is_random) = if teacher != Action::Stop
            && !observation.candidates.is_empty()
            && rng.random_bool(config.rho)
        {
            let pick = rng.random_range(0..observation.candidates.len());
            (Action::Move(observation.candidates[pick].view_index), true)
        } else {
            (teacher, false)
        };
        steps.push(DemoStep { observation, chosen, is_random, teacher_choice: teacher });
        match chosen {
            Action::Stop => break,
            Action::Move(i) => {
                let view = &graph.viewpoint(&pose.viewpoint_id)?.views[i];
                pose = pose.after_move(view).expect("candidates are navigable");
                executed.push(pose.viewpoint_id.clone());
            }
        }
    }
    Ok(Demonstration {
        episode_id: episode.id.clone(),
        instruction: episode.instruction(config.instruction_index).to_string(),
        start: episode.start().to_string(),
        steps,
        executed_path: executed,
        rho_used: config.rho,
        seed_used,
    })
}

pub fn build_demonstration(
    graph: &SceneGraph,
    episode: &Episode,
    config: &DemoConfig,
    seed: u64,
) -> Result<Demonstration, TeacherError> {
    let mut rng = rng_from(seed, &[]);
    build_demonstration_with(graph, episode, config, &mut rng, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub rho: f64,
    pub seed: u64,
    pub repeats: usize,
    pub max_steps: Option<usize>,
    pub retries: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { rho: 0.0, seed: 0, repeats: 1, max_steps: None, retries: DEFAULT_RETRIES }
    }
}

/// `repeats` seeded builds per episode, in (episode, repeat) order. Repeat
/// `r` uses instruction `r mod n_instructions`. A rejected sample is redrawn
/// with a new derived seed up to `retries` times.
pub fn build_dataset(
    scenes: &SceneSet,
    episodes: &[Episode],
    config: &DatasetConfig,
) -> Result<Vec<Demonstration>, TeacherError> {
    scenes.validate(episodes)?;
    let jobs: Vec<(usize, usize)> =
        (0..episodes.len()).flat_map(|e| (0..config.repeats).map(move |r| (e, r))).collect();
    jobs.par_iter()
        .map(|&(e, r)| {
            let episode = &episodes[e];
            let graph = scenes.graph_for(episode)?;
            let demo_config = DemoConfig { rho: config.rho, max_steps: config.max_steps, instruction_index: r };
            let mut last = None;
            for attempt in 0..=config.retries {
                let seed = crate::seeding::derive_seed(config.seed, &[e as u64, r as u64, attempt as u64]);
                match build_demonstration(graph, episode, &demo_config, seed) {
                    Ok(d) => return Ok(d),
                    Err(err @ TeacherError::Rejected { .. }) => last = Some(err),
                    Err(err) => return Err(err),
                }
            }
            Err(last.expect("at least one attempt ran"))
        })
        .collect()
}
