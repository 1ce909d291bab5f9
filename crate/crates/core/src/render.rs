//! Text templates: observations, history, prompts and training records.
//!
//! Every function here is pure; identical inputs give identical bytes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::direction::phrase_direction;
use crate::observation::{CandidateText, ObservationSnapshot};

/// Task description used for finetuning records.
pub const TASK_DESCRIPTION: &str = "You are a navigation agent who must navigate according to instructions given only descriptions of your current position via natural language. The natural language description is sometimes incorrect.";

const ACTION_FORMAT_GUIDE: &str = "At each step, you will be given several directions and captions for each direction. You must choose one direction by printing only the [caption_of_the_direction] or choose \"Stop\" if you think the goal is reached.

For example:

Input:

To your [direction_1] is, [caption of the direction_1].
......
To your [direction_N] is, [caption of the direction_N].

You choose:

Output: [caption of the direction_3]";

const HINT: &str = "Hint: You should use the information inside the instructions, history steps, and current observations to make the decision.";

pub const INSTRUCTION_HEADER: &str = "### Instruction:";
pub const TRAJECTORY_HEADER: &str = "### Trajectory:";
pub const CHOICE_CUE: &str = "You chose:";
pub const DETAILS_PREFIX: &str = "Details:  ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Finetune,
    ZeroShot,
    FewShot,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("few-shot prompting needs a demonstration trajectory")]
    MissingDemonstration,
    #[error("token budget {budget} is below the {needed} tokens needed without any history")]
    BudgetTooSmall { needed: usize, budget: usize },
}

/// The task-description block (D) and how it was built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptProfile {
    pub mode: PromptMode,
    pub task_description: String,
    pub demonstration: Option<String>,
}

impl PromptProfile {
    pub fn finetune() -> Self {
        PromptProfile { mode: PromptMode::Finetune, task_description: TASK_DESCRIPTION.to_string(), demonstration: None }
    }

    pub fn zero_shot() -> Self {
        PromptProfile {
            mode: PromptMode::ZeroShot,
            task_description: format!("{TASK_DESCRIPTION}\n\n{ACTION_FORMAT_GUIDE}\n\n{HINT}"),
            demonstration: None,
        }
    }

    /// `demonstration` is a rendered example (see [`render_example`]).
    pub fn few_shot(demonstration: impl Into<String>) -> Self {
        let demonstration = demonstration.into();
        PromptProfile {
            mode: PromptMode::FewShot,
            task_description: format!(
                "{TASK_DESCRIPTION}\n\n{ACTION_FORMAT_GUIDE}\n\nAnd here is an example trajectory:\n\n{}\n\n{HINT}\n\nNow let's start!",
                demonstration.trim_end()
            ),
            demonstration: Some(demonstration),
        }
    }

    pub fn for_mode(mode: PromptMode, demonstration: Option<String>) -> Result<Self, RenderError> {
        match mode {
            PromptMode::Finetune => Ok(Self::finetune()),
            PromptMode::ZeroShot => Ok(Self::zero_shot()),
            PromptMode::FewShot => demonstration.map(Self::few_shot).ok_or(RenderError::MissingDemonstration),
        }
    }
}

/// Maps text to a token count. Must be monotone under concatenation.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Counts whitespace-separated words.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

pub fn render_blocks(blocks: &[CandidateText], include_objects: bool) -> String {
    blocks
        .iter()
        .map(|b| {
            let mut block = format!("To your {} is,\n{}", b.phrase, b.caption);
            if include_objects && !b.objects.is_empty() {
                block.push('\n');
                block.push_str(DETAILS_PREFIX);
                block.push_str(&b.objects.join(", "));
            }
            block
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// One block per candidate, blank line between blocks, no trailing newline.
pub fn render_observation(obs: &ObservationSnapshot, include_objects: bool) -> String {
    render_blocks(&obs.texts(), include_objects)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    /// "To your {dir} is {caption}; ..." without the choice.
    pub summary: String,
    /// Chosen caption or "stop".
    pub chosen: String,
}

impl HistoryEntry {
    pub fn from_observation(obs: &ObservationSnapshot, chosen: impl Into<String>) -> Self {
        let summary = obs
            .candidates
            .iter()
            .map(|c| format!("To your {} is {}", phrase_direction(c.direction).expect("grid direction"), c.caption))
            .collect::<Vec<_>>()
            .join("; ");
        HistoryEntry { step: obs.step, summary, chosen: chosen.into() }
    }

    pub fn render(&self) -> String {
        if self.summary.is_empty() {
            format!("Step {}: You chose: {}.", self.step, self.chosen)
        } else {
            format!("Step {}: {}; You chose: {}.", self.step, self.summary, self.chosen)
        }
    }
}

/// Step indices run consecutively from 1 as entries are pushed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HistoryLog {
    entries: Vec<HistoryEntry>,
}

impl HistoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, mut entry: HistoryEntry) {
        entry.step = self.entries.len() + 1;
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn render_history(log: &HistoryLog) -> String {
    render_history_entries(log.entries())
}

fn render_history_entries(entries: &[HistoryEntry]) -> String {
    entries.iter().map(HistoryEntry::render).collect::<Vec<_>>().join("\n")
}

fn prompt_with_history(
    profile: &PromptProfile,
    instruction: &str,
    history: &[HistoryEntry],
    observation: &str,
    step: usize,
) -> String {
    let mut trajectory = String::from(TRAJECTORY_HEADER);
    trajectory.push('\n');
    if !history.is_empty() {
        trajectory.push_str(&render_history_entries(history));
        trajectory.push_str("\n\n");
    }
    trajectory.push_str(&format!("Step {step}:\n\n"));
    if !observation.is_empty() {
        trajectory.push_str(observation);
        trajectory.push_str("\n\n");
    }
    trajectory.push_str(CHOICE_CUE);
    trajectory.push('\n');
    format!("{}\n\n{INSTRUCTION_HEADER}\n{}\n\n{trajectory}", profile.task_description.trim_end(), instruction.trim())
}

/// Task description, instruction, history, current observation, then the
/// choice cue. Oldest history steps are dropped whole until the prompt fits.
pub fn assemble_prompt(
    profile: &PromptProfile,
    instruction: &str,
    history: &HistoryLog,
    observation: &ObservationSnapshot,
    include_objects: bool,
    counter: &dyn TokenCounter,
    budget_tokens: usize,
) -> Result<String, RenderError> {
    let obs_text = render_observation(observation, include_objects);
    let floor = prompt_with_history(profile, instruction, &[], &obs_text, observation.step);
    let needed = counter.count(&floor);
    if needed > budget_tokens {
        return Err(RenderError::BudgetTooSmall { needed, budget: budget_tokens });
    }
    let entries = history.entries();
    for skip in 0..entries.len() {
        let prompt = prompt_with_history(profile, instruction, &entries[skip..], &obs_text, observation.step);
        if counter.count(&prompt) <= budget_tokens {
            return Ok(prompt);
        }
    }
    Ok(floor)
}

/// Byte range of one chosen action inside a rendered record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, bool)", into = "(usize, usize, bool)")]
pub struct ActionSpan {
    pub start: usize,
    pub end: usize,
    pub is_random: bool,
}

impl From<(usize, usize, bool)> for ActionSpan {
    fn from((start, end, is_random): (usize, usize, bool)) -> Self {
        ActionSpan { start, end, is_random }
    }
}

impl From<ActionSpan> for (usize, usize, bool) {
    fn from(s: ActionSpan) -> Self {
        (s.start, s.end, s.is_random)
    }
}

/// One step of a trajectory as text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepText {
    pub candidates: Vec<CandidateText>,
    pub chosen: String,
    pub is_random: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedTrajectory {
    pub text: String,
    pub action_spans: Vec<ActionSpan>,
}

/// Append "Step 1: ... You chose:\n{chosen}" blocks to `out`, recording spans.
fn push_steps(out: &mut String, steps: &[StepText], include_objects: bool) -> Vec<ActionSpan> {
    let mut spans = Vec::with_capacity(steps.len());
    for (i, step) in steps.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("Step {}:\n\n", i + 1));
        let obs = render_blocks(&step.candidates, include_objects);
        if !obs.is_empty() {
            out.push_str(&obs);
            out.push_str("\n\n");
        }
        out.push_str(CHOICE_CUE);
        out.push('\n');
        let start = out.len();
        out.push_str(&step.chosen);
        spans.push(ActionSpan { start, end: out.len(), is_random: step.is_random });
        out.push('\n');
    }
    spans
}

/// "### Instruction:" / "### Trajectory:" sections without a task description.
/// This is the form used for in-context examples.
pub fn render_example(instruction: &str, steps: &[StepText], include_objects: bool) -> RenderedTrajectory {
    let mut text = format!("{INSTRUCTION_HEADER}\n{}\n\n{TRAJECTORY_HEADER}\n", instruction.trim());
    let action_spans = push_steps(&mut text, steps, include_objects);
    RenderedTrajectory { text, action_spans }
}

/// Just the "Step N:" blocks.
pub fn render_steps(steps: &[StepText], include_objects: bool) -> RenderedTrajectory {
    let mut text = String::new();
    let action_spans = push_steps(&mut text, steps, include_objects);
    RenderedTrajectory { text, action_spans }
}

/// A full training record: task description, instruction, every step.
pub fn render_trajectory_text(
    task_description: &str,
    instruction: &str,
    steps: &[StepText],
    include_objects: bool,
) -> RenderedTrajectory {
    let prefix = format!("{}\n\n", task_description.trim_end());
    let example = render_example(instruction, steps, include_objects);
    let offset = prefix.len();
    RenderedTrajectory {
        text: prefix + &example.text,
        action_spans: example
            .action_spans
            .into_iter()
            .map(|s| ActionSpan { start: s.start + offset, end: s.end + offset, ..s })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Real,
    Synthetic,
    Alfred,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub model: String,
    pub seed_id: String,
    pub attempt: u32,
}

/// One line of the trajectory-record JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub text: String,
    pub action_spans: Vec<ActionSpan>,
    pub episode_id: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl TrajectoryRecord {
    pub fn new(rendered: RenderedTrajectory, episode_id: impl Into<String>, source: Source) -> Self {
        TrajectoryRecord {
            text: rendered.text,
            action_spans: rendered.action_spans,
            episode_id: episode_id.into(),
            source,
            provenance: None,
        }
    }

    pub fn span_text(&self, span: &ActionSpan) -> Option<&str> {
        self.text.get(span.start..span.end)
    }

    /// Spans that contribute to the training loss. Random (perturbed) steps
    /// stay in the text as history but are excluded unless asked for.
    pub fn loss_spans(&self, include_random: bool) -> impl Iterator<Item = &ActionSpan> {
        self.action_spans.iter().filter(move |s| include_random || !s.is_random)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }
}

/// Serialize records as JSONL (one per line, trailing newline when non-empty).
pub fn records_to_jsonl(records: &[TrajectoryRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}

pub fn records_from_jsonl(text: &str) -> Result<Vec<TrajectoryRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direction::RelativeDirection;
    use crate::observation::ObservedCandidate;

    fn cand(view_index: usize, h: i32, e: i32, caption: &str, objects: &[&str]) -> ObservedCandidate {
        ObservedCandidate {
            view_index,
            caption: caption.into(),
            objects: objects.iter().map(|s| s.to_string()).collect(),
            direction: RelativeDirection::new(h, e).unwrap(),
        }
    }

    fn obs(step: usize, candidates: Vec<ObservedCandidate>) -> ObservationSnapshot {
        ObservationSnapshot { step, candidates }
    }

    #[test]
    fn observation_blocks() {
        assert_eq!(render_observation(&obs(1, vec![]), true), "");
        let o = obs(1, vec![cand(0, 30, 0, "a kitchen with a stove", &["oven", "bowl"])]);
        assert_eq!(render_observation(&o, true), "To your 30 degree right is,\na kitchen with a stove\nDetails:  oven, bowl");
        assert_eq!(render_observation(&o, false), "To your 30 degree right is,\na kitchen with a stove");
        let two = obs(1, vec![cand(0, 0, 0, "a", &[]), cand(1, 180, 0, "b", &[])]);
        assert_eq!(render_observation(&two, true), "To your straight ahead is,\na\n\nTo your back is,\nb");
    }

    #[test]
    fn history_lines() {
        assert_eq!(render_history(&HistoryLog::new()), "");
        let mut log = HistoryLog::new();
        let o = obs(1, vec![cand(0, 0, 0, "a hallway", &[])]);
        log.push(HistoryEntry::from_observation(&o, "a hallway"));
        assert_eq!(render_history(&log), "Step 1: To your straight ahead is a hallway; You chose: a hallway.");
        let o2 = obs(2, vec![cand(0, -30, 0, "x", &[]), cand(1, 90, 0, "y", &[])]);
        log.push(HistoryEntry::from_observation(&o2, "stop"));
        assert_eq!(
            render_history(&log).lines().nth(1).unwrap(),
            "Step 2: To your 30 degree left is x; To your 90 degree right is y; You chose: stop."
        );
    }

    #[test]
    fn prompt_order_with_empty_history() {
        let o = obs(1, vec![cand(0, 0, 0, "a hallway", &[])]);
        let p = assemble_prompt(&PromptProfile::finetune(), "go", &HistoryLog::new(), &o, true, &WhitespaceCounter, 2048).unwrap();
        assert_eq!(
            p,
            format!("{TASK_DESCRIPTION}\n\n### Instruction:\ngo\n\n### Trajectory:\nStep 1:\n\nTo your straight ahead is,\na hallway\n\nYou chose:\n")
        );
    }

    #[test]
    fn budget_drops_oldest_step_first() {
        let mut log = HistoryLog::new();
        for _ in 0..3 {
            let o = obs(0, vec![cand(0, 0, 0, "one two three", &[])]);
            log.push(HistoryEntry::from_observation(&o, "one two three"));
        }
        let cur = obs(4, vec![cand(0, 0, 0, "here", &[])]);
        let profile = PromptProfile { mode: PromptMode::Finetune, task_description: "D".into(), demonstration: None };
        let counter = WhitespaceCounter;
        // Word counts, computed independently:
        // "D" 1 + "### Instruction:" 2 + "go" 1 + "### Trajectory:" 2 + "Step 4:" 2
        // + "To your straight ahead is, here" 6 + "You chose:" 2 = 16 words without history.
        // Each history line: "Step k: To your straight ahead is one two three; You chose: one two three." = 15 words.
        let floor = assemble_prompt(&profile, "go", &HistoryLog::new(), &cur, true, &counter, 16).unwrap();
        assert_eq!(counter.count(&floor), 16);
        let full = assemble_prompt(&profile, "go", &log, &cur, true, &counter, 61).unwrap();
        assert!(full.contains("Step 1:") && full.contains("Step 3:"));
        let trimmed = assemble_prompt(&profile, "go", &log, &cur, true, &counter, 60).unwrap();
        assert!(!trimmed.contains("Step 1:"));
        assert!(trimmed.contains("Step 2:") && trimmed.contains("Step 3:"));
        assert_eq!(counter.count(&trimmed), 46);
        assert_eq!(
            assemble_prompt(&profile, "go", &log, &cur, true, &counter, 15),
            Err(RenderError::BudgetTooSmall { needed: 16, budget: 15 })
        );
    }

    #[test]
    fn few_shot_requires_demo() {
        assert_eq!(PromptProfile::for_mode(PromptMode::FewShot, None), Err(RenderError::MissingDemonstration));
        let p = PromptProfile::for_mode(PromptMode::FewShot, Some("### Instruction:\nx".into())).unwrap();
        assert!(p.task_description.contains("And here is an example trajectory:\n\n### Instruction:\nx\n\nHint:"));
        assert!(p.task_description.ends_with("Now let's start!"));
        assert!(PromptProfile::zero_shot().task_description.starts_with(TASK_DESCRIPTION));
    }

    #[test]
    fn record_spans() {
        let steps = vec![StepText { candidates: vec![], chosen: "stop".into(), is_random: false }];
        let r = render_trajectory_text("D", "go", &steps, true);
        assert_eq!(r.text, "D\n\n### Instruction:\ngo\n\n### Trajectory:\nStep 1:\n\nYou chose:\nstop\n");
        assert_eq!(r.action_spans.len(), 1);
        let s = r.action_spans[0];
        assert_eq!(&r.text[s.start..s.end], "stop");
        let rec = TrajectoryRecord::new(r, "e1", Source::Real);
        let line = rec.to_json_line();
        assert!(line.contains(r#""action_spans":[["#), "{line}");
        assert!(line.contains(r#""source":"real""#));
        assert_eq!(records_from_jsonl(&line).unwrap(), vec![rec]);
        assert!(records_from_jsonl(r#"{"text":"","action_spans":[],"episode_id":"e","source":"real","x":1}"#).is_err());
    }
}
