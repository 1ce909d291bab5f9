//! Two-phase synthetic trajectory generation.
//!
//! Phase I expands a handful of real instructions into many new ones.
//! Phase II asks the model to write a whole trajectory for each new
//! instruction, conditioned on the real demonstration whose instruction
//! embeds closest to it. Generated text is parsed, validated and only then
//! emitted as a training record.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::normalize_text;
use crate::episode::{Episode, SceneSet};
use crate::gateway::{dot, CompletionRequest, EmbeddingRequest, GatewayError, LmGateway};
use crate::observation::{CandidateText, STOP_TEXT};
use crate::render::{
    render_steps, render_trajectory_text, Provenance, Source, StepText, TrajectoryRecord, INSTRUCTION_HEADER,
    TASK_DESCRIPTION, TRAJECTORY_HEADER,
};
use crate::seeding::rng_from;
use crate::teacher::{build_demonstration, DemoConfig, TeacherError};

pub const PHASE_ONE_SYSTEM: &str = "I am going to give you example instructions written by humans to train a deep learning-based navigation agent acting inside a home. These example instructions are intended to be completed by the navigation agent in 5-7 steps.";

pub const PHASE_ONE_USER: &str = "Your goal is to write 10 more instructions like the above that can be used to train a navigation agent. Since the navigation agent will be navigating in different home environments, your instructions should also be diverse and cover a wide range of home environments and rooms. You should make sure that the instruction can be completed by an agent in 5 to 7 steps.";

pub const PHASE_TWO_SYSTEM: &str = "Here is an example of a large language model acting as a blind navigation agent in an indoor environment through text descriptions. The agent is given an instruction at the start and must follow the instruction. At each time step, the agent is given descriptions of its field of view via the following template:

To your [VIEW] is [CAPTION]
- [VIEW] consists of the agent's visible field of view (e.g., 30 degrees right, 120 degrees left, etc.)
- [CAPTION] is the text description of that view obtained from an image captioning model";

pub const PHASE_TWO_USER: &str =
    "Now I will give you another instruction. Please generate a trajectory of 5-7 steps that would complete the instruction.";

/// Substrings that identify each prompt kind (used by the simulated gateway).
pub const PHASE_ONE_MARKER: &str = "10 more instructions like the above";
pub const PHASE_TWO_MARKER: &str = "Please generate a trajectory of";

pub const DEFAULT_K_EXAMPLES: usize = 3;
pub const DEFAULT_N_PER_CALL: usize = 10;
pub const DEFAULT_RETRIES: usize = 3;
pub const MIN_STEPS: usize = 5;
pub const MAX_STEPS: usize = 7;
const INSTRUCTION_MAX_TOKENS: u32 = 1024;
const TRAJECTORY_MAX_TOKENS: u32 = 2048;
const MAX_ROUNDS: usize = 20;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("seed bank has {have} instructions, {need} needed")]
    TooFewSeeds { have: usize, need: usize },
    #[error("instruction generation stalled: {produced} of {target} after {calls} calls")]
    CallBudget { produced: usize, target: usize, calls: usize },
    #[error("embedding service returned {got} vectors for {expected} texts")]
    EmbeddingCount { expected: usize, got: usize },
    #[error("trajectory for `{instruction}` rejected after {attempts} attempts: {}", reasons.join("; "))]
    Rejected { instruction: String, attempts: usize, reasons: Vec<String> },
    #[error("only {accepted} of {target} trajectories validated after {rounds} rounds")]
    Incomplete { accepted: usize, target: usize, rounds: usize },
    #[error("seed bank line {line}: {message}")]
    BankFormat { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Teacher(#[from] TeacherError),
}

/// One real instruction with its serialized demonstration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedEntry {
    pub id: String,
    pub episode_id: String,
    pub instruction: String,
    /// "Step 1: ..." blocks of the real trajectory.
    pub trajectory: String,
}

/// Seed instructions plus their unit-norm embeddings.
#[derive(Debug, Clone)]
pub struct SeedBank {
    entries: Vec<SeedEntry>,
    embeddings: Vec<Vec<f32>>,
}

impl SeedBank {
    pub fn new(entries: Vec<SeedEntry>, gateway: &dyn LmGateway) -> Result<Self, SynthError> {
        if entries.is_empty() {
            return Err(SynthError::TooFewSeeds { have: 0, need: 1 });
        }
        let embeddings = gateway.embed(&EmbeddingRequest::new(entries.iter().map(|e| e.instruction.clone())))?;
        if embeddings.len() != entries.len() {
            return Err(SynthError::EmbeddingCount { expected: entries.len(), got: embeddings.len() });
        }
        Ok(SeedBank { entries, embeddings })
    }

    pub fn entries(&self) -> &[SeedEntry] {
        &self.entries
    }

    pub fn embeddings(&self) -> &[Vec<f32>] {
        &self.embeddings
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SeedEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

/// One entry per (episode, instruction), demonstrated by the teacher.
pub fn seed_entries_from_episodes(
    scenes: &SceneSet,
    episodes: &[Episode],
    include_objects: bool,
) -> Result<Vec<SeedEntry>, SynthError> {
    scenes.validate(episodes).map_err(TeacherError::from)?;
    let mut out = Vec::new();
    for ep in episodes {
        let graph = scenes.graph_for(ep).map_err(TeacherError::from)?;
        for (k, instruction) in ep.instructions.iter().enumerate() {
            let cfg = DemoConfig { instruction_index: k, ..DemoConfig::default() };
            let demo = build_demonstration(graph, ep, &cfg, 0)?;
            out.push(SeedEntry {
                id: format!("{}#{k}", ep.id),
                episode_id: ep.id.clone(),
                instruction: instruction.trim().to_string(),
                trajectory: render_steps(&demo.step_texts(), include_objects).text,
            });
        }
    }
    Ok(out)
}

pub fn parse_seed_entries(text: &str) -> Result<Vec<SeedEntry>, SynthError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| SynthError::BankFormat { line: i + 1, message: e.to_string() })
        })
        .collect()
}

pub fn load_seed_entries(path: impl AsRef<Path>) -> Result<Vec<SeedEntry>, SynthError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| SynthError::Io { path: path.display().to_string(), source })?;
    parse_seed_entries(&text)
}

pub fn seed_entries_to_jsonl(entries: &[SeedEntry]) -> String {
    entries.iter().map(|e| serde_json::to_string(e).expect("serializable") + "\n").collect()
}

pub fn render_phase_one(examples: &[&str]) -> String {
    let list: Vec<String> = examples.iter().map(|e| format!("- {}", e.trim())).collect();
    format!("{PHASE_ONE_SYSTEM}\n\n{}\n\n{PHASE_ONE_USER}", list.join("\n\n"))
}

pub fn render_phase_two(demo: &SeedEntry, synthetic_instruction: &str) -> String {
    format!(
        "{PHASE_TWO_SYSTEM}\n\n# Example 1\n{INSTRUCTION_HEADER}\n{}\n{TRAJECTORY_HEADER}\n{}\n\n{PHASE_TWO_USER}\n\n# Example 2\n{INSTRUCTION_HEADER}\n{}\n",
        demo.instruction.trim(),
        demo.trajectory.trim_end(),
        synthetic_instruction.trim()
    )
}

/// Whitespace-collapsed, trimmed, surrounding quotes removed.
pub fn clean_instruction(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_matches(|c| c == '"' || c == '\'' || c == '“' || c == '”').trim().to_string()
}

/// Dedup key: two instructions are the same if their keys are equal.
pub fn instruction_key(text: &str) -> String {
    normalize_text(text)
}

/// List items written as "- item", "• item" or "N. item". Other lines are ignored.
pub fn parse_instruction_list(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|line| {
            let line = line.trim();
            let item = if let Some(rest) = line.strip_prefix("- ").or_else(|| line.strip_prefix("• ")) {
                rest
            } else {
                let digits = line.chars().take_while(char::is_ascii_digit).count();
                if digits == 0 {
                    return None;
                }
                line[digits..].strip_prefix(". ")?
            };
            let item = clean_instruction(item);
            (!item.is_empty()).then_some(item)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstructionGenConfig {
    pub k_examples: usize,
    pub n_per_call: usize,
    pub seed: u64,
}

impl Default for InstructionGenConfig {
    fn default() -> Self {
        InstructionGenConfig { k_examples: DEFAULT_K_EXAMPLES, n_per_call: DEFAULT_N_PER_CALL, seed: 0 }
    }
}

/// Stateful Phase I driver; remembers everything produced so far so later
/// batches never repeat earlier ones or the seeds.
pub struct InstructionGenerator<'b> {
    bank: &'b SeedBank,
    config: InstructionGenConfig,
    seen: BTreeSet<String>,
    calls: usize,
}

impl<'b> InstructionGenerator<'b> {
    pub fn new(bank: &'b SeedBank, config: InstructionGenConfig) -> Result<Self, SynthError> {
        if bank.len() < config.k_examples {
            return Err(SynthError::TooFewSeeds { have: bank.len(), need: config.k_examples });
        }
        let seen = bank.entries.iter().map(|e| instruction_key(&e.instruction)).collect();
        Ok(InstructionGenerator { bank, config, seen, calls: 0 })
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    /// Produce exactly `count` new instructions. Calls that add nothing new
    /// count against a budget of 3 x ceil(count / n_per_call).
    pub fn generate(&mut self, gateway: &dyn LmGateway, count: usize) -> Result<Vec<String>, SynthError> {
        let budget = 3 * count.div_ceil(self.config.n_per_call.max(1));
        let mut barren = 0;
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            if barren >= budget {
                return Err(SynthError::CallBudget { produced: out.len(), target: count, calls: self.calls });
            }
            let mut rng = rng_from(self.config.seed, &[1, self.calls as u64]);
            self.calls += 1;
            let examples: Vec<&str> = self
                .bank
                .entries
                .choose_multiple(&mut rng, self.config.k_examples)
                .map(|e| e.instruction.as_str())
                .collect();
            let reply = gateway.complete(&CompletionRequest::sampling(render_phase_one(&examples), INSTRUCTION_MAX_TOKENS))?;
            let before = out.len();
            for item in parse_instruction_list(&reply) {
                if out.len() == count {
                    break;
                }
                if self.seen.insert(instruction_key(&item)) {
                    out.push(item);
                }
            }
            if out.len() == before {
                barren += 1;
            }
        }
        Ok(out)
    }
}

pub fn gen_instructions(
    gateway: &dyn LmGateway,
    bank: &SeedBank,
    config: InstructionGenConfig,
    target_count: usize,
) -> Result<Vec<String>, SynthError> {
    InstructionGenerator::new(bank, config)?.generate(gateway, target_count)
}

/// Index of the bank entry most similar to `vector`; ties go to the smallest id.
pub fn nearest_by_vector(bank: &SeedBank, vector: &[f32]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, emb) in bank.embeddings.iter().enumerate() {
        let score = dot(emb, vector);
        if score > best_score || (score == best_score && bank.entries[i].id < bank.entries[best].id) {
            best = i;
            best_score = score;
        }
    }
    best
}

pub fn nearest_seed<'b>(
    bank: &'b SeedBank,
    synthetic_instruction: &str,
    gateway: &dyn LmGateway,
) -> Result<&'b SeedEntry, SynthError> {
    let v = gateway.embed(&EmbeddingRequest::new([synthetic_instruction]))?;
    let v = v.first().ok_or(SynthError::EmbeddingCount { expected: 1, got: 0 })?;
    Ok(&bank.entries[nearest_by_vector(bank, v)])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthStep {
    pub blocks: Vec<CandidateText>,
    /// As written by the model.
    pub chosen: String,
}

impl SynthStep {
    pub fn chose_stop(&self) -> bool {
        normalize_text(&self.chosen) == STOP_TEXT
    }

    /// The block whose caption equals the chosen text after normalization.
    pub fn chosen_block(&self) -> Option<&CandidateText> {
        let want = normalize_text(&self.chosen);
        self.blocks.iter().find(|b| normalize_text(&b.caption) == want)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthTrajectory {
    pub instruction: String,
    pub steps: Vec<SynthStep>,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn strip_markup(line: &str) -> &str {
    line.trim().trim_matches(|c| c == '*' || c == '_' || c == '`').trim()
}

fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    let head = s.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &s[prefix.len()..])
}

fn step_header(line: &str) -> Option<usize> {
    let rest = strip_prefix_ci(line, "step")?.trim_start();
    let rest = rest.strip_suffix(':')?.trim_end().trim_end_matches(['*', '_']);
    rest.parse().ok()
}

/// Tolerant reader for "Step N:" / "To your X is," / "You chose:" text.
pub fn parse_trajectory(text: &str) -> Result<Vec<SynthStep>, ParseError> {
    #[derive(PartialEq)]
    enum State {
        Outside,
        InStep,
        Caption(String),
        Choice,
    }
    let err = |line: usize, message: &str| ParseError { line, message: message.to_string() };
    let mut steps: Vec<SynthStep> = Vec::new();
    let mut blocks: Vec<CandidateText> = Vec::new();
    let mut state = State::Outside;
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        last_line = n;
        let line = strip_markup(raw);
        if line.is_empty() {
            continue;
        }
        match std::mem::replace(&mut state, State::Outside) {
            State::Caption(phrase) => {
                blocks.push(CandidateText { phrase, caption: line.to_string(), objects: vec![] });
                state = State::InStep;
            }
            State::Choice => {
                steps.push(SynthStep { blocks: std::mem::take(&mut blocks), chosen: line.to_string() });
                state = State::Outside;
            }
            State::Outside => {
                if step_header(line).is_some() {
                    state = State::InStep;
                }
                // anything else between steps is chatter
            }
            State::InStep => {
                state = State::InStep;
                if step_header(line).is_some() {
                    return Err(err(n, "new step began before a choice was made"));
                } else if let Some(rest) = strip_prefix_ci(line, "to your ") {
                    let (phrase, caption) = match rest.find(" is,").map(|p| (p, 4)).or_else(|| rest.find(" is ").map(|p| (p, 4))) {
                        Some((p, w)) => (rest[..p].trim(), rest[p + w..].trim()),
                        None if rest.ends_with(" is") => (rest[..rest.len() - 3].trim(), ""),
                        None => return Err(err(n, "direction line lacks `is`")),
                    };
                    if phrase.is_empty() {
                        return Err(err(n, "empty direction"));
                    }
                    if caption.is_empty() {
                        state = State::Caption(phrase.to_string());
                    } else {
                        blocks.push(CandidateText { phrase: phrase.to_string(), caption: caption.to_string(), objects: vec![] });
                    }
                } else if let Some(rest) = strip_prefix_ci(line, "details:") {
                    let block = blocks.last_mut().ok_or_else(|| err(n, "details before any view"))?;
                    block.objects = rest.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
                } else if let Some(rest) = strip_prefix_ci(line, "you chose:") {
                    let rest = strip_markup(rest);
                    if rest.is_empty() {
                        state = State::Choice;
                    } else {
                        steps.push(SynthStep { blocks: std::mem::take(&mut blocks), chosen: rest.to_string() });
                        state = State::Outside;
                    }
                } else {
                    return Err(err(n, &format!("unexpected line `{line}`")));
                }
            }
        }
    }
    match state {
        State::Outside if steps.is_empty() => Err(err(last_line.max(1), "no steps found")),
        State::Outside => Ok(steps),
        State::Caption(_) => Err(err(last_line, "text ended before a caption")),
        _ => Err(err(last_line, "text ended before `You chose:`")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    StepCount { found: usize, min: usize, max: usize },
    NoCandidates { step: usize },
    EmptyCaption { step: usize },
    ChosenNotAmongCandidates { step: usize },
    FinalNotStop,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::StepCount { found, min, max } => write!(f, "step count out of range: {found} not in [{min}, {max}]"),
            Violation::NoCandidates { step } => write!(f, "step {step} has no candidates"),
            Violation::EmptyCaption { step } => write!(f, "step {step} has an empty caption"),
            Violation::ChosenNotAmongCandidates { step } => write!(f, "step {step}: chosen not among candidates"),
            Violation::FinalNotStop => f.write_str("final choice is not stop"),
        }
    }
}

pub fn validate_trajectory(steps: &[SynthStep], min_steps: usize, max_steps: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    if steps.len() < min_steps || steps.len() > max_steps {
        out.push(Violation::StepCount { found: steps.len(), min: min_steps, max: max_steps });
    }
    for (i, step) in steps.iter().enumerate() {
        let n = i + 1;
        if step.blocks.is_empty() {
            out.push(Violation::NoCandidates { step: n });
        }
        if step.blocks.iter().any(|b| normalize_text(&b.caption).is_empty()) {
            out.push(Violation::EmptyCaption { step: n });
        }
        if i + 1 < steps.len() && step.chosen_block().is_none() {
            out.push(Violation::ChosenNotAmongCandidates { step: n });
        }
    }
    if steps.last().is_some_and(|s| !s.chose_stop()) {
        out.push(Violation::FinalNotStop);
    }
    out
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "with", "and", "of", "in", "on", "to", "is", "are", "that", "has", "room", "view", "some",
];

fn content_words(text: &str) -> BTreeSet<String> {
    normalize_text(text).split(' ').filter(|w| w.len() > 2 && !STOPWORDS.contains(w)).map(String::from).collect()
}

/// Heuristic spatial-consistency lint: flags steps where nothing from the
/// view just walked towards shows up in any caption afterwards. Never fatal.
pub fn consistency_warnings(steps: &[SynthStep]) -> Vec<String> {
    let mut warnings = Vec::new();
    for (i, pair) in steps.windows(2).enumerate() {
        let Some(prev) = pair[0].chosen_block() else { continue };
        let before = content_words(&prev.caption);
        let after: BTreeSet<String> = pair[1].blocks.iter().flat_map(|b| content_words(&b.caption)).collect();
        if !before.is_empty() && before.is_disjoint(&after) {
            warnings.push(format!("step {}: nothing from the chosen view reappears", i + 2));
        }
    }
    warnings
}

impl SynthTrajectory {
    /// Steps with the chosen text replaced by its canonical caption or "stop".
    pub fn step_texts(&self) -> Vec<StepText> {
        self.steps
            .iter()
            .map(|s| StepText {
                candidates: s.blocks.clone(),
                chosen: if s.chose_stop() {
                    STOP_TEXT.to_string()
                } else {
                    s.chosen_block().map_or_else(|| s.chosen.clone(), |b| b.caption.clone())
                },
                is_random: false,
            })
            .collect()
    }

    pub fn to_record(&self, episode_id: impl Into<String>) -> TrajectoryRecord {
        let rendered = render_trajectory_text(TASK_DESCRIPTION, &self.instruction, &self.step_texts(), true);
        let mut record = TrajectoryRecord::new(rendered, episode_id, Source::Synthetic);
        record.provenance = self.provenance.clone();
        record
    }
}

/// Parse a stored synthetic record back into a trajectory.
pub fn trajectory_from_record(record: &TrajectoryRecord) -> Result<SynthTrajectory, ParseError> {
    let body = record.text.split_once(&format!("{TRAJECTORY_HEADER}\n")).map_or(record.text.as_str(), |(_, b)| b);
    let instruction = record
        .text
        .split_once(&format!("{INSTRUCTION_HEADER}\n"))
        .and_then(|(_, rest)| rest.split_once("\n\n"))
        .map(|(i, _)| i.to_string())
        .unwrap_or_default();
    Ok(SynthTrajectory { instruction, steps: parse_trajectory(body)?, provenance: record.provenance.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectoryGenConfig {
    pub retries: usize,
    pub min_steps: usize,
    pub max_steps: usize,
}

impl Default for TrajectoryGenConfig {
    fn default() -> Self {
        TrajectoryGenConfig { retries: DEFAULT_RETRIES, min_steps: MIN_STEPS, max_steps: MAX_STEPS }
    }
}

/// Ask for a trajectory up to 1 + `retries` times; the first one that parses
/// and validates wins.
pub fn gen_trajectory(
    gateway: &dyn LmGateway,
    synthetic_instruction: &str,
    demo: &SeedEntry,
    config: &TrajectoryGenConfig,
) -> Result<SynthTrajectory, SynthError> {
    let prompt = render_phase_two(demo, synthetic_instruction);
    let mut reasons = Vec::new();
    let attempts = config.retries + 1;
    for attempt in 0..attempts {
        let reply = gateway.complete(&CompletionRequest::sampling(prompt.clone(), TRAJECTORY_MAX_TOKENS))?;
        let steps = match parse_trajectory(&reply) {
            Ok(s) => s,
            Err(e) => {
                reasons.push(format!("attempt {}: parse error at {e}", attempt + 1));
                continue;
            }
        };
        let violations = validate_trajectory(&steps, config.min_steps, config.max_steps);
        if violations.is_empty() {
            for w in consistency_warnings(&steps) {
                tracing::warn!(instruction = synthetic_instruction, "{w}");
            }
            return Ok(SynthTrajectory {
                instruction: synthetic_instruction.to_string(),
                steps,
                provenance: Some(Provenance {
                    model: gateway.model_id(),
                    seed_id: demo.id.clone(),
                    attempt: attempt as u32 + 1,
                }),
            });
        }
        let listed: Vec<String> = violations.iter().map(ToString::to_string).collect();
        reasons.push(format!("attempt {}: {}", attempt + 1, listed.join(", ")));
    }
    Err(SynthError::Rejected { instruction: synthetic_instruction.to_string(), attempts, reasons })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    pub target: usize,
    pub seed: u64,
    pub instructions: InstructionGenConfig,
    pub trajectories: TrajectoryGenConfig,
}

impl PipelineConfig {
    pub fn new(target: usize, seed: u64) -> Self {
        PipelineConfig {
            target,
            seed,
            instructions: InstructionGenConfig { seed, ..InstructionGenConfig::default() },
            trajectories: TrajectoryGenConfig::default(),
        }
    }
}

/// A generated instruction whose trajectory never validated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectRecord {
    pub instruction: String,
    pub seed_id: String,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub records: Vec<TrajectoryRecord>,
    pub rejects: Vec<RejectRecord>,
}

/// Generate until exactly `target` validated records exist. Phase II runs in
/// parallel; results are kept in instruction order.
pub fn run_pipeline(
    gateway: &dyn LmGateway,
    bank: &SeedBank,
    config: &PipelineConfig,
) -> Result<PipelineOutput, SynthError> {
    let mut generator = InstructionGenerator::new(bank, config.instructions)?;
    let mut records = Vec::with_capacity(config.target);
    let mut rejects = Vec::new();
    let mut rounds = 0;
    while records.len() < config.target {
        if rounds == MAX_ROUNDS {
            return Err(SynthError::Incomplete { accepted: records.len(), target: config.target, rounds });
        }
        rounds += 1;
        let batch = generator.generate(gateway, config.target - records.len())?;
        let results: Vec<(String, String, Result<SynthTrajectory, SynthError>)> = batch
            .into_par_iter()
            .map(|instruction| {
                let seed = match nearest_seed(bank, &instruction, gateway) {
                    Ok(s) => s,
                    Err(e) => return (instruction, String::new(), Err(e)),
                };
                let result = gen_trajectory(gateway, &instruction, seed, &config.trajectories);
                (instruction, seed.id.clone(), result)
            })
            .collect();
        for (instruction, seed_id, result) in results {
            match result {
                Ok(t) => {
                    let id = format!("synth_{:06}", records.len());
                    records.push(t.to_record(id));
                }
                Err(SynthError::Rejected { reasons, .. }) => rejects.push(RejectRecord { instruction, seed_id, reasons }),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(PipelineOutput { records, rejects })
}

pub fn rejects_to_jsonl(rejects: &[RejectRecord]) -> String {
    rejects.iter().map(|r| serde_json::to_string(r).expect("serializable") + "\n").collect()
}

/// Concatenate and shuffle. Synthetic-side records that claim to be real are
/// retagged synthetic; real-side records are tagged real.
pub fn mix_datasets(synthetic: Vec<TrajectoryRecord>, real: Vec<TrajectoryRecord>, seed: u64) -> Vec<TrajectoryRecord> {
    let mut all: Vec<TrajectoryRecord> = synthetic
        .into_iter()
        .map(|mut r| {
            if r.source == Source::Real {
                r.source = Source::Synthetic;
            }
            r
        })
        .chain(real.into_iter().map(|mut r| {
            r.source = Source::Real;
            r
        }))
        .collect();
    all.shuffle(&mut rng_from(seed, &[2]));
    all
}
