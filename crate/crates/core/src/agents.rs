//! Agents: something that looks at an observation and picks an action.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::Episode;
use crate::gateway::{CompletionRequest, GatewayError, LmGateway};
use crate::observation::{Action, ObservationSnapshot, STOP_TEXT};
use crate::scene::{AgentPose, SceneGraph};
use crate::seeding::Rng;
use crate::teacher::{teacher_action, TeacherError};

/// Overlap below this is not a match.
pub const MIN_OVERLAP: f64 = 0.2;
pub const LM_MAX_TOKENS: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchedBy {
    Exact,
    Overlap,
    Forced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDecision {
    pub action: Action,
    /// What the agent said (for non-LM agents, the canonical action text).
    pub raw_text: String,
    pub matched_by: MatchedBy,
}

impl AgentDecision {
    fn canonical(action: Action, obs: &ObservationSnapshot) -> Self {
        AgentDecision {
            action,
            raw_text: obs.action_text(action).unwrap_or(STOP_TEXT).to_string(),
            matched_by: MatchedBy::Exact,
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("generated text `{text}` matches no candidate")]
    NoMatch { text: String },
    #[error("replay script exhausted after {0} actions")]
    ReplayExhausted(usize),
    #[error("replay action {index} ({action}) is not navigable at step {step}")]
    ReplayInvalid { index: usize, step: usize, action: Action },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
}

/// Everything an agent may look at when deciding.
pub struct DecisionContext<'a> {
    pub graph: &'a SceneGraph,
    pub episode: &'a Episode,
    pub pose: &'a AgentPose,
    pub observation: &'a ObservationSnapshot,
    /// The fully assembled prompt for this step.
    pub prompt: &'a str,
}

pub trait Agent: Send {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<AgentDecision, AgentError>;
}

/// Follows the shortest-path teacher.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleAgent;

impl Agent for OracleAgent {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<AgentDecision, AgentError> {
        let action = teacher_action(ctx.graph, ctx.pose, ctx.episode.goal())?;
        Ok(AgentDecision::canonical(action, ctx.observation))
    }
}

/// Random walk. By default every candidate and Stop are equally likely.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    rng: Rng,
    stop_probability: Option<f64>,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        RandomAgent { rng: Rng::seed_from_u64(seed), stop_probability: None }
    }

    /// Fixed stop probability whenever at least one move is available.
    pub fn with_stop_probability(seed: u64, p: f64) -> Self {
        RandomAgent { rng: Rng::seed_from_u64(seed), stop_probability: Some(p.clamp(0.0, 1.0)) }
    }
}

impl Agent for RandomAgent {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<AgentDecision, AgentError> {
        let cands = &ctx.observation.candidates;
        let p_stop = self.stop_probability.unwrap_or(1.0 / (cands.len() as f64 + 1.0));
        let action = if cands.is_empty() || self.rng.random_bool(p_stop) {
            Action::Stop
        } else {
            Action::Move(cands[self.rng.random_range(0..cands.len())].view_index)
        };
        Ok(AgentDecision::canonical(action, ctx.observation))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptedAction {
    Move(usize),
    Stop,
}

impl From<ScriptedAction> for Action {
    fn from(a: ScriptedAction) -> Self {
        match a {
            ScriptedAction::Move(i) => Action::Move(i),
            ScriptedAction::Stop => Action::Stop,
        }
    }
}

impl From<Action> for ScriptedAction {
    fn from(a: Action) -> Self {
        match a {
            Action::Move(i) => ScriptedAction::Move(i),
            Action::Stop => ScriptedAction::Stop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayScript {
    pub episode_id: String,
    pub actions: Vec<ScriptedAction>,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

pub fn parse_replay_scripts(text: &str) -> Result<Vec<ReplayScript>, ScriptError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| ScriptError::Parse { line: i + 1, source }))
        .collect()
}

pub fn load_replay_scripts(path: impl AsRef<Path>) -> Result<Vec<ReplayScript>, ScriptError> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|source| ScriptError::Io { path: path.display().to_string(), source })?;
    parse_replay_scripts(&text)
}

/// Plays back a fixed action list.
#[derive(Debug, Clone)]
pub struct ReplayAgent {
    actions: Vec<Action>,
    cursor: usize,
}

impl ReplayAgent {
    pub fn new(actions: impl IntoIterator<Item = Action>) -> Self {
        ReplayAgent { actions: actions.into_iter().collect(), cursor: 0 }
    }

    pub fn from_script(script: &ReplayScript) -> Self {
        Self::new(script.actions.iter().copied().map(Action::from))
    }
}

impl Agent for ReplayAgent {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<AgentDecision, AgentError> {
        let action = *self.actions.get(self.cursor).ok_or(AgentError::ReplayExhausted(self.actions.len()))?;
        if ctx.observation.action_text(action).is_none() {
            return Err(AgentError::ReplayInvalid { index: self.cursor, step: ctx.observation.step, action });
        }
        self.cursor += 1;
        Ok(AgentDecision::canonical(action, ctx.observation))
    }
}

/// Greedy single-line completion, mapped back onto a candidate.
pub struct LmAgent<G> {
    gateway: G,
    max_tokens: u32,
}

impl<G: LmGateway> LmAgent<G> {
    pub fn new(gateway: G) -> Self {
        LmAgent { gateway, max_tokens: LM_MAX_TOKENS }
    }
}

impl<G: LmGateway> Agent for LmAgent<G> {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<AgentDecision, AgentError> {
        let raw = self.gateway.complete(&CompletionRequest::greedy_line(ctx.prompt, self.max_tokens))?;
        let (action, matched_by) = match_generated_action(&raw, ctx.observation)?;
        Ok(AgentDecision { action, raw_text: raw, matched_by })
    }
}

/// Lowercase, trim, collapse whitespace, drop terminal punctuation and
/// surrounding quotes.
pub fn normalize_text(text: &str) -> String {
    let mut s = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    loop {
        let t = s
            .trim()
            .trim_end_matches(['.', ',', '!', '?', ';', ':'])
            .trim_matches(['"', '\'', '`', '“', '”', '‘', '’'])
            .trim();
        if t.len() == s.len() {
            return s;
        }
        s = t.to_string();
    }
}

fn token_set(text: &str) -> BTreeSet<&str> {
    text.split(' ').filter(|t| !t.is_empty()).collect()
}

/// Jaccard similarity of the word sets of two normalized strings.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let (a, b) = (token_set(a), token_set(b));
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Map generated text onto an action: "stop", an exact caption, or the
/// caption with the largest word overlap (ties to the lowest view index).
pub fn match_generated_action(text: &str, obs: &ObservationSnapshot) -> Result<(Action, MatchedBy), AgentError> {
    let norm = normalize_text(text);
    if norm == STOP_TEXT {
        return Ok((Action::Stop, MatchedBy::Exact));
    }
    let mut by_index: Vec<_> = obs.candidates.iter().collect();
    by_index.sort_by_key(|c| c.view_index);
    if let Some(c) = by_index.iter().find(|c| normalize_text(&c.caption) == norm) {
        return Ok((Action::Move(c.view_index), MatchedBy::Exact));
    }
    let mut best: Option<(usize, f64)> = None;
    for c in &by_index {
        let score = jaccard(&norm, &normalize_text(&c.caption));
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((c.view_index, score));
        }
    }
    match best {
        Some((i, s)) if s >= MIN_OVERLAP => Ok((Action::Move(i), MatchedBy::Overlap)),
        _ => Err(AgentError::NoMatch { text: text.to_string() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direction::RelativeDirection;
    use crate::observation::ObservedCandidate;

    fn obs(captions: &[(usize, &str)]) -> ObservationSnapshot {
        ObservationSnapshot {
            step: 1,
            candidates: captions
                .iter()
                .map(|(i, c)| ObservedCandidate {
                    view_index: *i,
                    caption: c.to_string(),
                    objects: vec![],
                    direction: RelativeDirection::new(0, 0).unwrap(),
                })
                .collect(),
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_text("  \"A  Kitchen.\" "), "a kitchen");
        assert_eq!(normalize_text("Stop!"), "stop");
        assert_eq!(normalize_text("'stop'."), "stop");
    }

    #[test]
    fn matching() {
        let o = obs(&[(3, "a living room filled with furniture and a fire place"), (1, "a kitchen with white cabinets")]);
        assert_eq!(match_generated_action("Stop", &o).unwrap(), (Action::Stop, MatchedBy::Exact));
        assert_eq!(match_generated_action("A kitchen with white cabinets.", &o).unwrap(), (Action::Move(1), MatchedBy::Exact));
        assert_eq!(
            match_generated_action("a living room with couch and a fire place", &o).unwrap(),
            (Action::Move(3), MatchedBy::Overlap)
        );
        assert!(matches!(match_generated_action("purple elephant", &o), Err(AgentError::NoMatch { .. })));
    }

    #[test]
    fn overlap_tie_goes_to_lowest_index() {
        let o = obs(&[(5, "red door"), (2, "red window")]);
        assert_eq!(match_generated_action("red", &o).unwrap().0, Action::Move(2));
    }

    #[test]
    fn script_format() {
        let s = parse_replay_scripts("{\"episode_id\":\"e\",\"actions\":[{\"move\":2},\"stop\"]}\n").unwrap();
        assert_eq!(s[0].actions, [ScriptedAction::Move(2), ScriptedAction::Stop]);
        assert_eq!(serde_json::to_string(&s[0]).unwrap(), "{\"episode_id\":\"e\",\"actions\":[{\"move\":2},\"stop\"]}");
    }
}
