//! Running agents through episodes and scoring them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentDecision, AgentError, DecisionContext, MatchedBy};
use crate::episode::{Episode, EpisodeError, SceneSet};
use crate::observation::{Action, CaptionOverrides, ObservationSnapshot, OverrideError, STOP_TEXT};
use crate::render::{assemble_prompt, HistoryEntry, HistoryLog, PromptProfile, RenderError, TokenCounter, WhitespaceCounter};
use crate::scene::{euclidean_distance, geodesic, SceneError, SceneGraph};

pub const SUCCESS_THRESHOLD_M: f64 = 3.0;
pub const DEFAULT_MAX_STEPS: usize = 15;
pub const DEFAULT_TOKEN_BUDGET: usize = 2048;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("episode `{episode}`: {source}")]
    Agent {
        episode: String,
        #[source]
        source: AgentError,
    },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Override(#[from] OverrideError),
    #[error("goal of episode `{0}` is unreachable from its start")]
    Unreachable(String),
    #[error("executed path is empty or does not begin at the episode start")]
    BadPath,
    #[error("max_steps must be at least 1")]
    ZeroSteps,
    #[error("nothing to aggregate")]
    Empty,
}

impl RunError {
    /// The gateway failure underneath, if any.
    pub fn is_gateway(&self) -> bool {
        matches!(self, RunError::Agent { source: AgentError::Gateway(_), .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoMatchPolicy {
    Abort,
    ForceStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Stopped,
    MaxSteps,
    NoMatchAbort,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    #[serde(rename = "TL")]
    pub tl: f64,
    #[serde(rename = "NE")]
    pub ne: f64,
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "OSR")]
    pub osr: f64,
    #[serde(rename = "SPL")]
    pub spl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub executed_path: Vec<String>,
    pub decisions: Vec<AgentDecision>,
    pub termination: Termination,
    pub metrics: MetricSet,
    /// Prompt shown at each step. Not part of reports.
    #[serde(skip)]
    pub prompts: Vec<String>,
}

pub struct RunConfig {
    pub max_steps: usize,
    pub include_objects: bool,
    pub token_budget: usize,
    pub profile: PromptProfile,
    pub instruction_index: usize,
    pub no_match: NoMatchPolicy,
    pub success_threshold: f64,
    pub counter: Box<dyn TokenCounter>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_steps: DEFAULT_MAX_STEPS,
            include_objects: true,
            token_budget: DEFAULT_TOKEN_BUDGET,
            profile: PromptProfile::finetune(),
            instruction_index: 0,
            no_match: NoMatchPolicy::ForceStop,
            success_threshold: SUCCESS_THRESHOLD_M,
            counter: Box::new(WhitespaceCounter),
        }
    }
}

/// Observe, prompt, decide, act; until Stop, the step limit, or an
/// unmatched answer under the abort policy.
pub fn run_episode(
    graph: &SceneGraph,
    episode: &Episode,
    agent: &mut dyn Agent,
    config: &RunConfig,
    overrides: Option<&CaptionOverrides>,
) -> Result<EpisodeResult, RunError> {
    if config.max_steps == 0 {
        return Err(RunError::ZeroSteps);
    }
    episode.validate(graph)?;
    if let Some(o) = overrides {
        o.validate_local(graph)?;
    }
    let instruction = episode.instruction(config.instruction_index);
    let mut pose = episode.initial_pose();
    let mut path = vec![pose.viewpoint_id.clone()];
    let mut decisions = Vec::new();
    let mut prompts = Vec::new();
    let mut history = HistoryLog::new();
    let mut termination = Termination::MaxSteps;

    for t in 1..=config.max_steps {
        let observation = ObservationSnapshot::observe(graph, &pose, t, overrides)?;
        let prompt = assemble_prompt(
            &config.profile,
            instruction,
            &history,
            &observation,
            config.include_objects,
            config.counter.as_ref(),
            config.token_budget,
        )?;
        let ctx = DecisionContext { graph, episode, pose: &pose, observation: &observation, prompt: &prompt };
        let decision = match agent.decide(&ctx) {
            Ok(d) => d,
            Err(AgentError::NoMatch { text }) => match config.no_match {
                NoMatchPolicy::Abort => {
                    prompts.push(prompt);
                    termination = Termination::NoMatchAbort;
                    break;
                }
                NoMatchPolicy::ForceStop => AgentDecision { action: Action::Stop, raw_text: text, matched_by: MatchedBy::Forced },
            },
            Err(source) => return Err(RunError::Agent { episode: episode.id.clone(), source }),
        };
        prompts.push(prompt);
        let chosen = observation.action_text(decision.action).unwrap_or(STOP_TEXT).to_string();
        history.push(HistoryEntry::from_observation(&observation, chosen));
        let action = decision.action;
        decisions.push(decision);
        match action {
            Action::Stop => {
                termination = Termination::Stopped;
                break;
            }
            Action::Move(i) => {
                let view = graph.viewpoint(&pose.viewpoint_id)?.views.get(i);
                pose = view.and_then(|v| pose.after_move(v)).ok_or_else(|| RunError::Agent {
                    episode: episode.id.clone(),
                    source: AgentError::ReplayInvalid { index: decisions.len() - 1, step: t, action },
                })?;
                path.push(pose.viewpoint_id.clone());
            }
        }
    }
    let metrics =
        compute_metrics_with(graph, episode, &path, termination == Termination::Stopped, config.success_threshold)?;
    Ok(EpisodeResult { episode_id: episode.id.clone(), executed_path: path, decisions, termination, metrics, prompts })
}

pub fn compute_metrics(
    graph: &SceneGraph,
    episode: &Episode,
    executed_path: &[String],
    stopped: bool,
) -> Result<MetricSet, RunError> {
    compute_metrics_with(graph, episode, executed_path, stopped, SUCCESS_THRESHOLD_M)
}

pub fn compute_metrics_with(
    graph: &SceneGraph,
    episode: &Episode,
    executed_path: &[String],
    stopped: bool,
    threshold: f64,
) -> Result<MetricSet, RunError> {
    if executed_path.first().map(String::as_str) != Some(episode.start()) {
        return Err(RunError::BadPath);
    }
    let goal = graph.position(episode.goal())?;
    let positions = executed_path.iter().map(|id| graph.position(id)).collect::<Result<Vec<_>, _>>()?;
    let tl: f64 = positions.windows(2).map(|w| euclidean_distance(w[0], w[1])).sum();
    let ne = euclidean_distance(*positions.last().expect("non-empty"), goal);
    let closest = positions.iter().map(|p| euclidean_distance(*p, goal)).fold(f64::INFINITY, f64::min);
    let sr = if stopped && ne <= threshold { 1.0 } else { 0.0 };
    let osr = if closest <= threshold { 1.0 } else { 0.0 };
    let shortest = geodesic(graph, episode.start(), episode.goal())?
        .ok_or_else(|| RunError::Unreachable(episode.id.clone()))?
        .distance;
    let denom = tl.max(shortest);
    let spl = if denom > 0.0 { sr * shortest / denom } else { sr };
    Ok(MetricSet { tl, ne, sr, osr, spl })
}

/// Means over episodes; rates as percentages. All values to one decimal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub episodes: usize,
    #[serde(rename = "TL")]
    pub tl: f64,
    #[serde(rename = "NE")]
    pub ne: f64,
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "OSR")]
    pub osr: f64,
    #[serde(rename = "SPL")]
    pub spl: f64,
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

pub fn aggregate(results: &[EpisodeResult]) -> Result<Aggregate, RunError> {
    if results.is_empty() {
        return Err(RunError::Empty);
    }
    let n = results.len() as f64;
    let mean = |f: fn(&MetricSet) -> f64| results.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
    Ok(Aggregate {
        episodes: results.len(),
        tl: round1(mean(|m| m.tl)),
        ne: round1(mean(|m| m.ne)),
        sr: round1(100.0 * mean(|m| m.sr)),
        osr: round1(100.0 * mean(|m| m.osr)),
        spl: round1(100.0 * mean(|m| m.spl)),
    })
}

/// Run every episode in parallel. `make_agent` gets the episode and its
/// index. Results come back sorted by episode id.
pub fn run_all<F>(
    scenes: &SceneSet,
    episodes: &[Episode],
    make_agent: F,
    config: &RunConfig,
    overrides: Option<&CaptionOverrides>,
) -> Result<Vec<EpisodeResult>, RunError>
where
    F: Fn(&Episode, usize) -> Box<dyn Agent> + Sync,
{
    scenes.validate(episodes)?;
    if let Some(o) = overrides {
        o.validate_in(scenes.graphs())?;
    }
    let mut results = episodes
        .par_iter()
        .enumerate()
        .map(|(i, ep)| {
            let graph = scenes.graph_for(ep)?;
            let mut agent = make_agent(ep, i);
            run_episode(graph, ep, agent.as_mut(), config, overrides)
        })
        .collect::<Result<Vec<_>, _>>()?;
    results.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Configuration text the run was started with, verbatim.
    pub config: String,
    /// Effective settings after command-line flags were applied.
    #[serde(default)]
    pub settings: String,
    pub agent: String,
    pub per_episode: Vec<EpisodeResult>,
    pub aggregate: Aggregate,
}

impl EvalReport {
    pub fn new(config: impl Into<String>, agent: impl Into<String>, results: Vec<EpisodeResult>) -> Result<Self, RunError> {
        let aggregate = aggregate(&results)?;
        Ok(EvalReport { config: config.into(), settings: String::new(), agent: agent.into(), per_episode: results, aggregate })
    }

    pub fn with_settings(mut self, settings: impl Into<String>) -> Self {
        self.settings = settings.into();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible") + "\n"
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["episode_id", "termination", "steps", "TL", "NE", "SR", "OSR", "SPL"])?;
        for r in &self.per_episode {
            let term = match r.termination {
                Termination::Stopped => "stopped",
                Termination::MaxSteps => "max_steps",
                Termination::NoMatchAbort => "no_match_abort",
            };
            let m = r.metrics;
            w.write_record([
                r.episode_id.clone(),
                term.to_string(),
                r.decisions.len().to_string(),
                format!("{:.6}", m.tl),
                format!("{:.6}", m.ne),
                m.sr.to_string(),
                m.osr.to_string(),
                format!("{:.6}", m.spl),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{OracleAgent, RandomAgent, ReplayAgent};
    use crate::scene::{Position, ViewDescriptor, Viewpoint};

    fn view(heading: i32, to: &str) -> ViewDescriptor {
        ViewDescriptor {
            heading_deg: heading,
            elevation_deg: 0,
            caption: format!("towards {to}"),
            objects: vec![],
            leads_to: Some(to.into()),
        }
    }

    /// A(0,0) - B(0,2) - C(0,6) - D(0,8), plus a detour A - X(4,0) - C.
    fn graph() -> SceneGraph {
        let vp = |id: &str, x: f64, y: f64, views| Viewpoint { id: id.into(), position: Position::new(x, y, 0.0), views };
        SceneGraph::new(
            "s",
            vec![
                vp("A", 0.0, 0.0, vec![view(0, "B"), view(90, "X")]),
                vp("B", 0.0, 2.0, vec![view(0, "C"), view(180, "A")]),
                vp("C", 0.0, 6.0, vec![view(0, "D"), view(180, "B")]),
                vp("D", 0.0, 8.0, vec![view(180, "C")]),
                vp("X", 4.0, 0.0, vec![view(0, "C")]),
            ],
        )
        .unwrap()
    }

    fn episode(path: &[&str]) -> Episode {
        Episode {
            id: "e".into(),
            scan_id: "s".into(),
            instructions: vec!["go north".into()],
            path: path.iter().map(|s| s.to_string()).collect(),
            heading_deg: 0,
        }
    }

    fn ids(p: &[&str]) -> Vec<String> {
        p.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn oracle_follows_geodesic() {
        let g = graph();
        let ep = episode(&["A", "B", "C", "D"]);
        let r = run_episode(&g, &ep, &mut OracleAgent, &RunConfig::default(), None).unwrap();
        assert_eq!(r.executed_path, ids(&["A", "B", "C", "D"]));
        assert_eq!(r.termination, Termination::Stopped);
        assert_eq!(r.decisions.len(), 4);
        assert_eq!(r.metrics, MetricSet { tl: 8.0, ne: 0.0, sr: 1.0, osr: 1.0, spl: 1.0 });
        assert_eq!(r.prompts.len(), 4);
        assert!(r.prompts[1].contains("Step 1: To your straight ahead is towards B; To your 90 degree right is towards X; You chose: towards B."));
    }

    #[test]
    fn stop_at_start_equals_goal() {
        let g = graph();
        let r = run_episode(&g, &episode(&["A"]), &mut ReplayAgent::new([Action::Stop]), &RunConfig::default(), None)
            .unwrap();
        assert_eq!(r.metrics, MetricSet { tl: 0.0, ne: 0.0, sr: 1.0, osr: 1.0, spl: 1.0 });
    }

    #[test]
    fn metric_definitions() {
        let g = graph();
        let ep = episode(&["A", "B", "C"]);
        // detour A-X-C: p = 4 + sqrt(16+36), l = 6
        let m = compute_metrics(&g, &ep, &ids(&["A", "X", "C"]), true).unwrap();
        let p = 4.0 + 52f64.sqrt();
        assert_eq!(m.sr, 1.0);
        assert!((m.spl - 6.0 / p).abs() < 1e-12);
        // walked past the goal to D (2 m away) without stopping
        let m = compute_metrics(&g, &ep, &ids(&["A", "B", "C", "D"]), false).unwrap();
        assert_eq!((m.sr, m.osr, m.spl), (0.0, 1.0, 0.0));
        assert!(compute_metrics(&g, &ep, &ids(&["B"]), true).is_err());
    }

    #[test]
    fn max_steps_is_not_success() {
        let g = graph();
        let ep = episode(&["A", "B"]);
        let cfg = RunConfig { max_steps: 1, ..RunConfig::default() };
        let r = run_episode(&g, &ep, &mut ReplayAgent::new([Action::Move(0)]), &cfg, None).unwrap();
        assert_eq!(r.termination, Termination::MaxSteps);
        assert_eq!(r.metrics.sr, 0.0);
        assert_eq!(r.metrics.osr, 1.0);
    }

    #[test]
    fn aggregation() {
        let g = graph();
        let ep = episode(&["A", "B"]);
        let good = run_episode(&g, &ep, &mut OracleAgent, &RunConfig::default(), None).unwrap();
        let bad = run_episode(&g, &episode(&["A", "B", "C", "D"]), &mut ReplayAgent::new([Action::Stop]), &RunConfig::default(), None)
            .unwrap();
        assert_eq!(aggregate(std::slice::from_ref(&good)).unwrap().sr, 100.0);
        let a = aggregate(&[good, bad]).unwrap();
        assert_eq!((a.sr, a.osr, a.spl, a.ne, a.tl), (50.0, 50.0, 50.0, 4.0, 1.0));
        assert!(matches!(aggregate(&[]), Err(RunError::Empty)));
    }

    #[test]
    fn random_agent_is_reproducible() {
        let g = graph();
        let ep = episode(&["A", "B", "C", "D"]);
        let run = |seed| run_episode(&g, &ep, &mut RandomAgent::new(seed), &RunConfig::default(), None).unwrap();
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn report_formats() {
        let g = graph();
        let r = run_episode(&g, &episode(&["A", "B"]), &mut OracleAgent, &RunConfig::default(), None).unwrap();
        let report = EvalReport::new("seed = 0\n", "oracle", vec![r]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(v["aggregate"]["SR"], 100.0);
        assert_eq!(v["config"], "seed = 0\n");
        let csv = report.to_csv().unwrap();
        assert_eq!(csv.lines().nth(1).unwrap(), "e,stopped,2,2.000000,0.000000,1,1,1.000000");
    }
}
