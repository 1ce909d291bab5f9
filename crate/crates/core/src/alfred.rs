//! Turning household-simulator trajectories into navigation demonstrations.
//!
//! Input trajectories move in 0.25 m steps and 90 degree turns, with one
//! forward view per step and interaction steps mixed in. The transforms
//! keep only the navigation segments, merge short moves, perturb headings,
//! and spread views over a 12-slot panorama so the result reads like a
//! panoramic navigation episode.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::direction::{phrase_direction, normalize_heading_offset, RelativeDirection};
use crate::observation::{CandidateText, STOP_TEXT};
use crate::render::{render_trajectory_text, Source, StepText, TrajectoryRecord, TASK_DESCRIPTION};
use crate::seeding::{derive_seed, rng_from, Rng};

pub const GOTO_TAG: &str = "GotoLocation";
pub const STEP_SIZE_M: f64 = 0.25;
/// MoveAhead steps merged into one macro step.
pub const MOVES_PER_MACRO: u32 = 4;
pub const JITTER_OFFSETS: [i32; 3] = [-30, 0, 30];
pub const SLOTS: usize = 12;
pub const DEFAULT_MASK_MIN: usize = 0;
pub const DEFAULT_MASK_MAX: usize = 8;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("mask range [{min}, {max}] is empty")]
    MaskRange { min: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SimAction {
    MoveAhead,
    RotateLeft,
    RotateRight,
    LookUp,
    LookDown,
    /// Any other simulator action (pick up, open, toggle, ...).
    Interact(String),
}

impl SimAction {
    pub fn name(&self) -> &str {
        match self {
            SimAction::MoveAhead => "MoveAhead",
            SimAction::RotateLeft => "RotateLeft",
            SimAction::RotateRight => "RotateRight",
            SimAction::LookUp => "LookUp",
            SimAction::LookDown => "LookDown",
            SimAction::Interact(kind) => kind,
        }
    }

    pub fn from_name(name: &str) -> Self {
        match name {
            "MoveAhead" => SimAction::MoveAhead,
            "RotateLeft" => SimAction::RotateLeft,
            "RotateRight" => SimAction::RotateRight,
            "LookUp" => SimAction::LookUp,
            "LookDown" => SimAction::LookDown,
            other => SimAction::Interact(other.to_string()),
        }
    }
}

impl Serialize for SimAction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for SimAction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(SimAction::from_name(&String::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimStep {
    pub action: SimAction,
    pub tag: String,
    pub heading_deg: i32,
    pub caption: String,
    #[serde(default)]
    pub objects: Vec<String>,
}

/// Either one instruction for the whole trajectory or one per subgoal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstructionText {
    Whole(String),
    PerSubgoal(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimTrajectory {
    pub goal: String,
    pub instruction: InstructionText,
    pub steps: Vec<SimStep>,
}

pub fn parse_sim_trajectories(text: &str) -> Result<Vec<SimTrajectory>, TransferError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| TransferError::Parse { line: i + 1, source }))
        .collect()
}

pub fn load_sim_trajectories(path: impl AsRef<Path>) -> Result<Vec<SimTrajectory>, TransferError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| TransferError::Io { path: path.display().to_string(), source })?;
    parse_sim_trajectories(&text)
}

/// One navigation-only piece of a trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub goal: String,
    pub instruction: String,
    pub steps: Vec<SimStep>,
}

/// Maximal runs tagged `GotoLocation`, interaction steps removed. With a
/// per-subgoal instruction list, entry `i` belongs to the `i`-th run of
/// equal tags; if the counts disagree the entries are joined.
pub fn split_goto_segments(traj: &SimTrajectory) -> Vec<Segment> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (i, step) in traj.steps.iter().enumerate() {
        match runs.last_mut() {
            Some((start, end)) if traj.steps[*start].tag == step.tag && *end == i => *end = i + 1,
            _ => runs.push((i, i + 1)),
        }
    }
    let fallback = match &traj.instruction {
        InstructionText::Whole(s) => s.trim().to_string(),
        InstructionText::PerSubgoal(v) => v.iter().map(|s| s.trim()).collect::<Vec<_>>().join(" "),
    };
    runs.iter()
        .enumerate()
        .filter(|(_, (s, _))| traj.steps[*s].tag == GOTO_TAG)
        .filter_map(|(k, &(s, e))| {
            let steps: Vec<SimStep> =
                traj.steps[s..e].iter().filter(|st| !matches!(st.action, SimAction::Interact(_))).cloned().collect();
            if steps.is_empty() {
                return None;
            }
            let instruction = match &traj.instruction {
                InstructionText::PerSubgoal(v) if v.len() == runs.len() => v[k].trim().to_string(),
                _ => fallback.clone(),
            };
            Some(Segment { goal: traj.goal.clone(), instruction, steps })
        })
        .collect()
}

/// A step after consolidation. Moves carry their length in quarter meters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroStep {
    pub action: SimAction,
    pub heading_deg: i32,
    /// Number of 0.25 m steps merged (0 for non-moves).
    pub quarters: u32,
    pub caption: String,
    pub objects: Vec<String>,
}

impl MacroStep {
    pub fn displacement_m(&self) -> f64 {
        self.quarters as f64 * STEP_SIZE_M
    }

    pub fn is_move(&self) -> bool {
        self.action == SimAction::MoveAhead
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroSegment {
    pub goal: String,
    pub instruction: String,
    pub steps: Vec<MacroStep>,
}

/// Each run of k MoveAhead steps becomes ceil(k/4) macro steps of at most
/// 1 m; a macro step keeps the view of its last constituent.
pub fn consolidate_moves(segment: &Segment) -> MacroSegment {
    let mut steps = Vec::new();
    let mut pending: Option<MacroStep> = None;
    for s in &segment.steps {
        if s.action != SimAction::MoveAhead {
            steps.extend(pending.take());
            steps.push(MacroStep {
                action: s.action.clone(),
                heading_deg: s.heading_deg,
                quarters: 0,
                caption: s.caption.clone(),
                objects: s.objects.clone(),
            });
            continue;
        }
        let group = pending.get_or_insert_with(|| MacroStep {
            action: SimAction::MoveAhead,
            heading_deg: s.heading_deg,
            quarters: 0,
            caption: String::new(),
            objects: vec![],
        });
        group.quarters += 1;
        group.heading_deg = s.heading_deg;
        group.caption.clone_from(&s.caption);
        group.objects.clone_from(&s.objects);
        if group.quarters == MOVES_PER_MACRO {
            steps.extend(pending.take());
        }
    }
    steps.extend(pending);
    MacroSegment { goal: segment.goal.clone(), instruction: segment.instruction.clone(), steps }
}

/// Add an independent offset from {-30, 0, +30} to every step's heading.
pub fn jitter_headings(segment: &MacroSegment, rng: &mut Rng) -> MacroSegment {
    let mut out = segment.clone();
    for s in &mut out.steps {
        let offset = JITTER_OFFSETS[rng.random_range(0..JITTER_OFFSETS.len())];
        s.heading_deg = (s.heading_deg + offset).rem_euclid(360);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Empty,
    Masked,
    View { caption: String, objects: Vec<String> },
}

/// One decision: what is visible in each of the 12 heading slots, where the
/// agent is facing, and which slot it moved towards (`None` = stop).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanoStep {
    pub facing_deg: i32,
    pub slots: Vec<Slot>,
    pub ground_truth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanoSegment {
    pub goal: String,
    pub instruction: String,
    pub steps: Vec<PanoStep>,
}

pub fn slot_of(heading_deg: i32) -> usize {
    (heading_deg.rem_euclid(360) / 30) as usize
}

/// Build one decision per move plus a final stop. Views seen at the current
/// location (after turns) fill their heading slots; the move's own view
/// fills the slot it heads into. Then a uniform number of non-ground-truth
/// slots in `[mask_min, mask_max]` is masked.
pub fn panoramize(
    segment: &MacroSegment,
    rng: &mut Rng,
    mask_min: usize,
    mask_max: usize,
) -> Result<PanoSegment, TransferError> {
    if mask_min > mask_max {
        return Err(TransferError::MaskRange { min: mask_min, max: mask_max });
    }
    let mut steps = Vec::new();
    let mut seen: BTreeMap<usize, (String, Vec<String>)> = BTreeMap::new();
    let mut facing = segment.steps.first().map_or(0, |s| s.heading_deg);
    let emit = |seen: &BTreeMap<usize, (String, Vec<String>)>, facing: i32, gt: Option<usize>, rng: &mut Rng| {
        let mut slots: Vec<Slot> = (0..SLOTS)
            .map(|i| {
                seen.get(&i)
                    .map_or(Slot::Empty, |(c, o)| Slot::View { caption: c.clone(), objects: o.clone() })
            })
            .collect();
        let pool: Vec<usize> = (0..SLOTS).filter(|&i| Some(i) != gt).collect();
        let count = rng.random_range(mask_min..=mask_max).min(pool.len());
        for k in sample(rng, pool.len(), count) {
            slots[pool[k]] = Slot::Masked;
        }
        PanoStep { facing_deg: facing, slots, ground_truth: gt }
    };
    for s in &segment.steps {
        let slot = slot_of(s.heading_deg);
        if s.is_move() {
            seen.insert(slot, (s.caption.clone(), s.objects.clone()));
            steps.push(emit(&seen, facing, Some(slot), rng));
            seen.clear();
        }
        seen.insert(slot, (s.caption.clone(), s.objects.clone()));
        facing = s.heading_deg;
    }
    steps.push(emit(&seen, facing, None, rng));
    Ok(PanoSegment { goal: segment.goal.clone(), instruction: segment.instruction.clone(), steps })
}

impl PanoStep {
    /// Visible slots as candidates, most-left first.
    pub fn step_text(&self) -> StepText {
        let mut visible: Vec<(i32, usize, &String, &Vec<String>)> = self
            .slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match s {
                Slot::View { caption, objects } => {
                    Some((normalize_heading_offset(i as i32 * 30 - self.facing_deg), i, caption, objects))
                }
                _ => None,
            })
            .collect();
        visible.sort();
        let candidates = visible
            .iter()
            .map(|(off, _, caption, objects)| CandidateText {
                phrase: phrase_direction(RelativeDirection { heading_offset_deg: *off, elevation_offset_deg: 0 })
                    .expect("slot offsets are multiples of 30"),
                caption: caption.to_string(),
                objects: objects.to_vec(),
            })
            .collect();
        let chosen = match self.ground_truth.map(|g| &self.slots[g]) {
            Some(Slot::View { caption, .. }) => caption.clone(),
            _ => STOP_TEXT.to_string(),
        };
        StepText { candidates, chosen, is_random: false }
    }
}

pub fn to_demonstrations(segments: &[(String, PanoSegment)], include_objects: bool) -> Vec<TrajectoryRecord> {
    segments
        .iter()
        .map(|(id, seg)| {
            let steps: Vec<StepText> = seg.steps.iter().map(PanoStep::step_text).collect();
            let rendered = render_trajectory_text(TASK_DESCRIPTION, &seg.instruction, &steps, include_objects);
            TrajectoryRecord::new(rendered, id.clone(), Source::Alfred)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferConfig {
    pub seed: u64,
    pub mask_min: usize,
    pub mask_max: usize,
    pub jitter: bool,
    pub include_objects: bool,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig { seed: 0, mask_min: DEFAULT_MASK_MIN, mask_max: DEFAULT_MASK_MAX, jitter: true, include_objects: true }
    }
}

/// split, consolidate, jitter, panoramize, for every trajectory. Segment
/// `j` of trajectory `i` is seeded from (seed, i, j) and named
/// `alfred_{i}_{j}`.
pub fn transfer_all(trajs: &[SimTrajectory], config: &TransferConfig) -> Result<Vec<(String, PanoSegment)>, TransferError> {
    let nested = trajs
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            split_goto_segments(t)
                .iter()
                .enumerate()
                .map(|(j, seg)| {
                    let mut rng = rng_from(derive_seed(config.seed, &[i as u64, j as u64]), &[]);
                    let merged = consolidate_moves(seg);
                    let merged = if config.jitter { jitter_headings(&merged, &mut rng) } else { merged };
                    let pano = panoramize(&merged, &mut rng, config.mask_min, config.mask_max)?;
                    Ok((format!("alfred_{i:06}_{j}"), pano))
                })
                .collect::<Result<Vec<_>, TransferError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(nested.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn step(action: &str, tag: &str, heading: i32, caption: &str) -> SimStep {
        SimStep {
            action: SimAction::from_name(action),
            tag: tag.into(),
            heading_deg: heading,
            caption: caption.into(),
            objects: vec![],
        }
    }

    fn traj(steps: Vec<SimStep>) -> SimTrajectory {
        SimTrajectory { goal: "g".into(), instruction: InstructionText::Whole("do it".into()), steps }
    }

    fn moves(n: usize) -> Segment {
        Segment {
            goal: "g".into(),
            instruction: "i".into(),
            steps: (0..n).map(|k| step("MoveAhead", GOTO_TAG, 0, &format!("v{k}"))).collect(),
        }
    }

    #[test]
    fn action_names_round_trip() {
        let s: SimStep =
            serde_json::from_str(r#"{"action":"PickupObject","tag":"PickupObject","heading_deg":90,"caption":"c"}"#).unwrap();
        assert_eq!(s.action, SimAction::Interact("PickupObject".into()));
        assert_eq!(serde_json::to_value(&s.action).unwrap(), "PickupObject");
    }

    #[test]
    fn splitting() {
        let all_interact = traj(vec![step("PickupObject", "PickupObject", 0, "a")]);
        assert!(split_goto_segments(&all_interact).is_empty());
        let t = traj(vec![
            step("MoveAhead", GOTO_TAG, 0, "a"),
            step("RotateLeft", GOTO_TAG, 270, "b"),
            step("OpenObject", "OpenObject", 270, "c"),
            step("MoveAhead", GOTO_TAG, 270, "d"),
        ]);
        let segs = split_goto_segments(&t);
        assert_eq!(segs.iter().map(|s| s.steps.len()).collect::<Vec<_>>(), [2, 1]);
        let per = SimTrajectory { instruction: InstructionText::PerSubgoal(vec!["x".into(), "y".into(), "z".into()]), ..t };
        let segs = split_goto_segments(&per);
        assert_eq!((segs[0].instruction.as_str(), segs[1].instruction.as_str()), ("x", "z"));
    }

    #[test]
    fn consolidation_counts() {
        let four = consolidate_moves(&moves(4));
        assert_eq!(four.steps.len(), 1);
        assert_eq!(four.steps[0].displacement_m(), 1.0);
        assert_eq!(four.steps[0].caption, "v3");
        let six = consolidate_moves(&moves(6));
        assert_eq!(six.steps.iter().map(MacroStep::displacement_m).collect::<Vec<_>>(), [1.0, 0.5]);
        let rot = Segment { steps: vec![step("RotateLeft", GOTO_TAG, 270, "r")], ..moves(0) };
        assert_eq!(consolidate_moves(&rot).steps.len(), 1);
    }

    #[test]
    fn jitter_turns_ninety_into_sixty() {
        let seg = MacroSegment {
            goal: "g".into(),
            instruction: "i".into(),
            steps: vec![
                MacroStep { action: SimAction::MoveAhead, heading_deg: 0, quarters: 4, caption: "a".into(), objects: vec![] },
                MacroStep { action: SimAction::MoveAhead, heading_deg: 90, quarters: 4, caption: "b".into(), objects: vec![] },
            ],
        };
        // find a seed whose offsets are (+30, 0)
        let seed = (0..10_000u64)
            .find(|s| {
                let j = jitter_headings(&seg, &mut rng_from(*s, &[]));
                j.steps[0].heading_deg == 30 && j.steps[1].heading_deg == 90
            })
            .unwrap();
        let j = jitter_headings(&seg, &mut rng_from(seed, &[]));
        assert_eq!(j.steps[1].heading_deg - j.steps[0].heading_deg, 60);
    }

    #[test]
    fn three_moves_give_four_spans() {
        let seg = Segment {
            goal: "g".into(),
            instruction: "walk to the fridge".into(),
            steps: vec![
                step("MoveAhead", GOTO_TAG, 0, "a table"),
                step("RotateRight", GOTO_TAG, 90, "a fridge far away"),
                step("MoveAhead", GOTO_TAG, 90, "a fridge"),
                step("MoveAhead", GOTO_TAG, 90, "a closer fridge"),
                step("MoveAhead", GOTO_TAG, 90, "a closer fridge"),
                step("MoveAhead", GOTO_TAG, 90, "a closer fridge"),
                step("MoveAhead", GOTO_TAG, 90, "the fridge door"),
            ],
        };
        let merged = consolidate_moves(&seg);
        assert_eq!(merged.steps.iter().filter(|s| s.is_move()).count(), 3);
        let pano = panoramize(&merged, &mut rng_from(1, &[]), 0, 0).unwrap();
        let recs = to_demonstrations(&[("x".into(), pano.clone())], true);
        assert_eq!(recs.len(), 1);
        let spans: Vec<&str> = recs[0].action_spans.iter().map(|s| recs[0].span_text(s).unwrap()).collect();
        assert_eq!(spans, ["a table", "a closer fridge", "the fridge door", "stop"]);
        // after turning right, the fridge view sits straight ahead and the table behind-left
        let st = pano.steps[1].step_text();
        assert_eq!(st.candidates.iter().map(|c| c.phrase.as_str()).collect::<Vec<_>>(), ["90 degree left", "straight ahead"]);
        assert_eq!(recs[0].source, Source::Alfred);
        assert!(to_demonstrations(&[], true).is_empty());
    }

    #[test]
    fn bad_mask_range() {
        assert!(panoramize(&consolidate_moves(&moves(1)), &mut rng_from(0, &[]), 3, 2).is_err());
    }
}
