//! What the agent perceives at one step, and what it can do about it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::direction::{phrase_direction, RelativeDirection};
use crate::scene::{navigable_candidates, normalize_whitespace, AgentPose, Result as SceneResult, SceneGraph};

/// A panoramic action: go towards one navigable view, or stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// Index into the current viewpoint's `views`.
    Move(usize),
    Stop,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Move(i) => write!(f, "move({i})"),
            Action::Stop => f.write_str("stop"),
        }
    }
}

pub const STOP_TEXT: &str = "stop";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedCandidate {
    pub view_index: usize,
    pub caption: String,
    pub objects: Vec<String>,
    pub direction: RelativeDirection,
}

/// A rendered-ready candidate: direction phrase, caption, objects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateText {
    pub phrase: String,
    pub caption: String,
    pub objects: Vec<String>,
}

/// The navigable views at step `step` (1-based), in presentation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSnapshot {
    pub step: usize,
    pub candidates: Vec<ObservedCandidate>,
}

impl ObservationSnapshot {
    pub fn observe(
        graph: &SceneGraph,
        pose: &AgentPose,
        step: usize,
        overrides: Option<&CaptionOverrides>,
    ) -> SceneResult<Self> {
        let candidates = navigable_candidates(graph, pose)?
            .into_iter()
            .map(|c| {
                let caption = overrides
                    .and_then(|o| o.get(&pose.viewpoint_id, c.view_index))
                    .unwrap_or(&c.view.caption);
                ObservedCandidate {
                    view_index: c.view_index,
                    caption: normalize_whitespace(caption),
                    objects: c.view.objects.clone(),
                    direction: c.direction,
                }
            })
            .collect();
        Ok(ObservationSnapshot { step, candidates })
    }

    pub fn candidate(&self, view_index: usize) -> Option<&ObservedCandidate> {
        self.candidates.iter().find(|c| c.view_index == view_index)
    }

    /// Text of an action as it appears after "You chose:".
    pub fn action_text(&self, action: Action) -> Option<&str> {
        match action {
            Action::Stop => Some(STOP_TEXT),
            Action::Move(i) => self.candidate(i).map(|c| c.caption.as_str()),
        }
    }

    pub fn texts(&self) -> Vec<CandidateText> {
        self.candidates
            .iter()
            .map(|c| CandidateText {
                phrase: phrase_direction(c.direction).expect("observed directions are on the grid"),
                caption: c.caption.clone(),
                objects: c.objects.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum OverrideError {
    #[error("failed to read override file: {0}")]
    Io(#[from] std::io::Error),
    #[error("override file parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("override key `{0}` is not of the form viewpoint_id/view_index")]
    BadKey(String),
    #[error("override target {0}/{1} does not exist in the scene")]
    MissingTarget(String, usize),
    #[error("override caption for {0}/{1} is empty")]
    EmptyCaption(String, usize),
}

/// Replacement captions keyed by (viewpoint, view index).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaptionOverrides {
    entries: BTreeMap<(String, usize), String>,
}

impl CaptionOverrides {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, viewpoint_id: impl Into<String>, view_index: usize, caption: impl Into<String>) {
        self.entries.insert((viewpoint_id.into(), view_index), caption.into());
    }

    pub fn get(&self, viewpoint_id: &str, view_index: usize) -> Option<&String> {
        self.entries.get(&(viewpoint_id.to_string(), view_index))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parse the `{"viewpoint_id/view_index": "caption"}` file format.
    /// The key splits on its last `/`, so viewpoint ids may contain slashes.
    pub fn from_json_str(json: &str) -> Result<Self, OverrideError> {
        let raw: BTreeMap<String, String> = serde_json::from_str(json)?;
        let mut out = CaptionOverrides::new();
        for (key, caption) in raw {
            let (vp, idx) = key.rsplit_once('/').ok_or_else(|| OverrideError::BadKey(key.clone()))?;
            let idx: usize = idx.parse().map_err(|_| OverrideError::BadKey(key.clone()))?;
            if vp.is_empty() {
                return Err(OverrideError::BadKey(key));
            }
            if normalize_whitespace(&caption).is_empty() {
                return Err(OverrideError::EmptyCaption(vp.to_string(), idx));
            }
            out.insert(vp, idx, caption);
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OverrideError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Every target must name an existing view.
    pub fn validate(&self, graph: &SceneGraph) -> Result<(), OverrideError> {
        self.validate_in([graph])
    }

    /// Every target must name an existing view in one of `graphs`.
    pub fn validate_in<'g>(&self, graphs: impl IntoIterator<Item = &'g SceneGraph> + Clone) -> Result<(), OverrideError> {
        for (vp, idx) in self.entries.keys() {
            let exists =
                graphs.clone().into_iter().any(|g| g.viewpoint(vp).map(|v| *idx < v.views.len()).unwrap_or(false));
            if !exists {
                return Err(OverrideError::MissingTarget(vp.clone(), *idx));
            }
        }
        Ok(())
    }

    /// Targets inside `graph` must name an existing view; others are ignored.
    pub fn validate_local(&self, graph: &SceneGraph) -> Result<(), OverrideError> {
        for (vp, idx) in self.entries.keys() {
            if let Ok(v) = graph.viewpoint(vp) {
                if *idx >= v.views.len() {
                    return Err(OverrideError::MissingTarget(vp.clone(), *idx));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_keys() {
        let o = CaptionOverrides::from_json_str(r#"{"a/b/2": "x", "vp1/0": "y"}"#).unwrap();
        assert_eq!(o.get("a/b", 2).map(String::as_str), Some("x"));
        assert_eq!(o.get("vp1", 0).map(String::as_str), Some("y"));
        assert!(matches!(CaptionOverrides::from_json_str(r#"{"vp1": "x"}"#), Err(OverrideError::BadKey(_))));
        assert!(matches!(CaptionOverrides::from_json_str(r#"{"vp1/z": "x"}"#), Err(OverrideError::BadKey(_))));
        assert!(matches!(CaptionOverrides::from_json_str(r#"{"vp1/0": " "}"#), Err(OverrideError::EmptyCaption(..))));
    }
}
