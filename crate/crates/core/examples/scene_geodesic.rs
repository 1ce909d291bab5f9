//! Load a scene graph, find the shortest path between two viewpoints and
//! describe what the agent sees from the start.
//!
//!     cargo run --example scene_geodesic

use textnav::scene::{geodesic, load_scene, navigable_candidates, AgentPose};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/kitchen_scene.json");
    let graph = load_scene(path)?;
    println!("{}: {} viewpoints, {} directed edges", graph.scan_id(), graph.len(), graph.edge_count());

    let route = geodesic(&graph, "vp1", "vp5")?.ok_or("vp5 unreachable")?;
    println!("vp1 -> vp5: {:.2} m via {}", route.distance, route.path.join(" -> "));

    let pose = AgentPose::new(&graph, "vp1", 0, 0)?;
    for c in navigable_candidates(&graph, &pose)? {
        let phrase = c.direction.phrase()?;
        println!("  [{}] to your {phrase}: {}", c.view_index, c.view.caption);
    }
    Ok(())
}
