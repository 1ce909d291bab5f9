//! Walk the fixture episode with the teacher and print the prompt the agent
//! would see at the third step, in fine-tuning and zero-shot form.
//!
//!     cargo run --example render_prompt [-- --no-objects]

use textnav::episode::{load_episodes, SceneSet};
use textnav::observation::ObservationSnapshot;
use textnav::render::{assemble_prompt, HistoryEntry, HistoryLog, PromptProfile, WhitespaceCounter};
use textnav::teacher::teacher_action;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let include_objects = !std::env::args().any(|a| a == "--no-objects");
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let scenes = SceneSet::load(&[format!("{dir}/kitchen_scene.json")])?;
    let episode = load_episodes(format!("{dir}/kitchen_episode.jsonl"))?.remove(0);
    let graph = scenes.graph_for(&episode)?;

    let mut pose = episode.initial_pose();
    let mut history = HistoryLog::new();
    for t in 1..=2 {
        let obs = ObservationSnapshot::observe(graph, &pose, t, None)?;
        let action = teacher_action(graph, &pose, episode.goal())?;
        history.push(HistoryEntry::from_observation(&obs, obs.action_text(action).unwrap_or("stop")));
        if let textnav::observation::Action::Move(i) = action {
            pose = pose.after_move(&graph.viewpoint(&pose.viewpoint_id)?.views[i]).expect("teacher moves are navigable");
        }
    }
    let obs = ObservationSnapshot::observe(graph, &pose, 3, None)?;
    for profile in [PromptProfile::finetune(), PromptProfile::zero_shot()] {
        let prompt = assemble_prompt(&profile, episode.instruction(0), &history, &obs, include_objects, &WhitespaceCounter, 2048)?;
        println!("==== {:?} ({} words) ====\n{prompt}", profile.mode, prompt.split_whitespace().count());
    }
    Ok(())
}
