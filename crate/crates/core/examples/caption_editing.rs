//! Replay a fixed action script twice, once with a caption rewritten, and
//! show how the prompt changes while the path does not.
//!
//!     cargo run --example caption_editing

use textnav::agents::{load_replay_scripts, ReplayAgent};
use textnav::episode::{load_episodes, SceneSet};
use textnav::observation::CaptionOverrides;
use textnav::runner::{run_episode, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let scenes = SceneSet::load(&[format!("{dir}/kitchen_scene.json")])?;
    let episode = load_episodes(format!("{dir}/kitchen_episode.jsonl"))?.remove(0);
    let script = load_replay_scripts(format!("{dir}/kitchen_replay.jsonl"))?.remove(0);
    let graph = scenes.graph_for(&episode)?;

    let mut overrides = CaptionOverrides::new();
    overrides.insert("vp1", 2, "a hallway with a large pizza oven in the corner");

    let config = RunConfig::default();
    let plain = run_episode(graph, &episode, &mut ReplayAgent::from_script(&script), &config, None)?;
    let edited = run_episode(graph, &episode, &mut ReplayAgent::from_script(&script), &config, Some(&overrides))?;

    assert_eq!(plain.executed_path, edited.executed_path);
    println!("path (unchanged): {}", plain.executed_path.join(" -> "));
    println!("step 1 choice before: {}", plain.decisions[0].raw_text);
    println!("step 1 choice after:  {}", edited.decisions[0].raw_text);
    for (t, (a, b)) in plain.prompts.iter().zip(&edited.prompts).enumerate() {
        let changed = a.lines().zip(b.lines()).filter(|(x, y)| x != y).count();
        println!("prompt {}: {changed} line(s) differ", t + 1);
    }
    Ok(())
}
