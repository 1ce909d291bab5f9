//! Caption-annotated viewpoint graphs.
//!
//! A [`SceneGraph`] is a set of viewpoints, each with a 3D position and an
//! ordered list of panoramic views. A view that carries `leads_to` is a
//! navigable edge to another viewpoint. Edges are directed.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::direction::{relative_direction, RelativeDirection};

/// The discrete elevation set of the panoramic action space.
pub const ELEVATIONS: [i32; 3] = [-30, 0, 30];

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("failed to read scene file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scene parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate viewpoint id `{0}`")]
    DuplicateViewpoint(String),
    #[error("viewpoint `{from}` view {view} leads to unknown viewpoint `{to}`")]
    DanglingLeadsTo { from: String, view: usize, to: String },
    #[error("viewpoint `{viewpoint}` view {view}: heading {heading} is not a multiple of 30 in [0, 330]")]
    BadHeading { viewpoint: String, view: usize, heading: i32 },
    #[error("viewpoint `{viewpoint}` view {view}: elevation {elevation} is not one of -30, 0, 30")]
    BadElevation { viewpoint: String, view: usize, elevation: i32 },
    #[error("viewpoint `{viewpoint}` view {view}: caption is empty")]
    EmptyCaption { viewpoint: String, view: usize },
    #[error("viewpoint `{viewpoint}`: views {first} and {second} share heading, elevation and destination")]
    DuplicateEdge { viewpoint: String, first: usize, second: usize },
    #[error("unknown viewpoint `{0}`")]
    UnknownViewpoint(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
}

pub type Result<T, E = SceneError> = std::result::Result<T, E>;

/// A point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position(pub [f64; 3]);

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Position([x, y, z])
    }

    pub fn translated(self, by: [f64; 3]) -> Self {
        let [x, y, z] = self.0;
        Position([x + by[0], y + by[1], z + by[2]])
    }
}

/// Straight-line distance in meters.
pub fn euclidean_distance(a: Position, b: Position) -> f64 {
    let [ax, ay, az] = a.0;
    let [bx, by, bz] = b.0;
    ((ax - bx).powi(2) + (ay - by).powi(2) + (az - bz).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewDescriptor {
    pub heading_deg: i32,
    pub elevation_deg: i32,
    pub caption: String,
    #[serde(default)]
    pub objects: Vec<String>,
    #[serde(default)]
    pub leads_to: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Viewpoint {
    pub id: String,
    pub position: Position,
    #[serde(default)]
    pub views: Vec<ViewDescriptor>,
}

/// On-disk layout: viewpoints as an ordered list.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    scan_id: String,
    viewpoints: Vec<Viewpoint>,
}

/// Immutable after construction; all invariants are checked in [`SceneGraph::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    scan_id: String,
    viewpoints: BTreeMap<String, Viewpoint>,
    /// File order, kept so the canonical writer is byte-stable.
    order: Vec<String>,
}

pub fn is_valid_heading(heading: i32) -> bool {
    (0..360).contains(&heading) && heading % 30 == 0
}

pub fn is_valid_elevation(elevation: i32) -> bool {
    ELEVATIONS.contains(&elevation)
}

pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl SceneGraph {
    pub fn new(scan_id: impl Into<String>, viewpoints: Vec<Viewpoint>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut order = Vec::with_capacity(viewpoints.len());
        for vp in viewpoints {
            if map.contains_key(&vp.id) {
                return Err(SceneError::DuplicateViewpoint(vp.id));
            }
            order.push(vp.id.clone());
            map.insert(vp.id.clone(), vp);
        }
        for vp in map.values() {
            for (i, view) in vp.views.iter().enumerate() {
                if !is_valid_heading(view.heading_deg) {
                    return Err(SceneError::BadHeading {
                        viewpoint: vp.id.clone(),
                        view: i,
                        heading: view.heading_deg,
                    });
                }
                if !is_valid_elevation(view.elevation_deg) {
                    return Err(SceneError::BadElevation {
                        viewpoint: vp.id.clone(),
                        view: i,
                        elevation: view.elevation_deg,
                    });
                }
                if normalize_whitespace(&view.caption).is_empty() {
                    return Err(SceneError::EmptyCaption { viewpoint: vp.id.clone(), view: i });
                }
                if let Some(to) = &view.leads_to {
                    if !map.contains_key(to) {
                        return Err(SceneError::DanglingLeadsTo {
                            from: vp.id.clone(),
                            view: i,
                            to: to.clone(),
                        });
                    }
                    let clash = vp.views[..i].iter().position(|other| {
                        other.heading_deg == view.heading_deg
                            && other.elevation_deg == view.elevation_deg
                            && other.leads_to.as_ref() == Some(to)
                    });
                    if let Some(first) = clash {
                        return Err(SceneError::DuplicateEdge {
                            viewpoint: vp.id.clone(),
                            first,
                            second: i,
                        });
                    }
                }
            }
        }
        Ok(SceneGraph { scan_id: scan_id.into(), viewpoints: map, order })
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let file: SceneFile = serde_json::from_str(json)?;
        SceneGraph::new(file.scan_id, file.viewpoints)
    }

    /// Canonical writer: pretty JSON, viewpoints in original order, trailing newline.
    pub fn to_json_string(&self) -> String {
        let file = SceneFile {
            scan_id: self.scan_id.clone(),
            viewpoints: self.order.iter().map(|id| self.viewpoints[id].clone()).collect(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("scene serialization is infallible");
        out.push('\n');
        out
    }

    pub fn scan_id(&self) -> &str {
        &self.scan_id
    }

    pub fn len(&self) -> usize {
        self.viewpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.viewpoints.is_empty()
    }

    pub fn viewpoint(&self, id: &str) -> Result<&Viewpoint> {
        self.viewpoints.get(id).ok_or_else(|| SceneError::UnknownViewpoint(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.viewpoints.contains_key(id)
    }

    /// Viewpoints in file order.
    pub fn viewpoints(&self) -> impl Iterator<Item = &Viewpoint> {
        self.order.iter().map(move |id| &self.viewpoints[id])
    }

    pub fn position(&self, id: &str) -> Result<Position> {
        Ok(self.viewpoint(id)?.position)
    }

    /// Total number of directed candidate edges.
    pub fn edge_count(&self) -> usize {
        self.viewpoints.values().flat_map(|vp| &vp.views).filter(|v| v.leads_to.is_some()).count()
    }

    /// Destinations reachable in one hop, deduplicated and sorted.
    pub fn neighbors(&self, id: &str) -> Result<Vec<&str>> {
        let mut out: Vec<&str> =
            self.viewpoint(id)?.views.iter().filter_map(|v| v.leads_to.as_deref()).collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn edge_length(&self, from: &str, to: &str) -> Result<f64> {
        Ok(euclidean_distance(self.position(from)?, self.position(to)?))
    }

    /// Whether `to` is the target of some view of `from`.
    pub fn is_connected(&self, from: &str, to: &str) -> bool {
        self.viewpoints
            .get(from)
            .is_some_and(|vp| vp.views.iter().any(|v| v.leads_to.as_deref() == Some(to)))
    }

    /// Copy with every position shifted by `by`.
    pub fn translated(&self, by: [f64; 3]) -> SceneGraph {
        let mut out = self.clone();
        for vp in out.viewpoints.values_mut() {
            vp.position = vp.position.translated(by);
        }
        out
    }
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| SceneError::Io { path: path.display().to_string(), source })?;
    SceneGraph::from_json_str(&text)
}

/// Shortest path result.
#[derive(Debug, Clone, PartialEq)]
pub struct Geodesic {
    pub distance: f64,
    pub path: Vec<String>,
}

#[derive(Debug)]
struct Frontier {
    distance: f64,
    path: Vec<String>,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // Reversed: BinaryHeap is a max-heap and we want (distance, path) ascending.
    fn cmp(&self, other: &Self) -> Ordering {
        other.distance.total_cmp(&self.distance).then_with(|| other.path.cmp(&self.path))
    }
}

fn better(distance: f64, path: &[String], than: &(f64, Vec<String>)) -> bool {
    match distance.total_cmp(&than.0) {
        Ordering::Less => true,
        Ordering::Equal => path < than.1.as_slice(),
        Ordering::Greater => false,
    }
}

/// Dijkstra over Euclidean edge lengths. Among equal-cost paths the
/// lexicographically smallest id sequence wins. Distances accumulate
/// left-to-right along the path. Returns `Ok(None)` when `dst` is unreachable.
pub fn geodesic(graph: &SceneGraph, src: &str, dst: &str) -> Result<Option<Geodesic>> {
    graph.viewpoint(src)?;
    graph.viewpoint(dst)?;
    let mut best: BTreeMap<&str, (f64, Vec<String>)> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    best.insert(src, (0.0, vec![src.to_string()]));
    heap.push(Frontier { distance: 0.0, path: vec![src.to_string()] });

    while let Some(Frontier { distance, path }) = heap.pop() {
        let here = path.last().expect("frontier paths are non-empty").clone();
        // stale entry
        if best.get(here.as_str()).is_some_and(|b| b.0 != distance || b.1 != path) {
            continue;
        }
        if here == dst {
            return Ok(Some(Geodesic { distance, path }));
        }
        let vp = graph.viewpoint(&here)?;
        for next in graph.neighbors(&here)? {
            // Simple paths only; zero-length edges could otherwise cycle.
            if path.iter().any(|p| p == next) {
                continue;
            }
            let d = distance + euclidean_distance(vp.position, graph.position(next)?);
            let mut candidate = path.clone();
            candidate.push(next.to_string());
            let improves = best.get(next).is_none_or(|b| better(d, &candidate, b));
            if improves {
                let key = graph.viewpoints.get_key_value(next).expect("neighbor exists").0.as_str();
                best.insert(key, (d, candidate.clone()));
                heap.push(Frontier { distance: d, path: candidate });
            }
        }
    }
    Ok(None)
}

/// The agent's discrete state: where it stands and which way it faces.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentPose {
    pub viewpoint_id: String,
    pub heading_deg: i32,
    pub elevation_deg: i32,
}

impl AgentPose {
    pub fn new(graph: &SceneGraph, viewpoint_id: &str, heading_deg: i32, elevation_deg: i32) -> Result<Self> {
        graph.viewpoint(viewpoint_id)?;
        if !is_valid_heading(heading_deg) {
            return Err(SceneError::InvalidPose(format!("heading {heading_deg}")));
        }
        if !is_valid_elevation(elevation_deg) {
            return Err(SceneError::InvalidPose(format!("elevation {elevation_deg}")));
        }
        Ok(AgentPose { viewpoint_id: viewpoint_id.to_string(), heading_deg, elevation_deg })
    }

    /// Pose after moving through `view`: stand at its destination, face its direction.
    pub fn after_move(&self, view: &ViewDescriptor) -> Option<AgentPose> {
        view.leads_to.as_ref().map(|to| AgentPose {
            viewpoint_id: to.clone(),
            heading_deg: view.heading_deg,
            elevation_deg: view.elevation_deg,
        })
    }
}

impl fmt::Display for AgentPose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}/{}", self.viewpoint_id, self.heading_deg, self.elevation_deg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<'g> {
    pub view_index: usize,
    pub view: &'g ViewDescriptor,
    pub direction: RelativeDirection,
}

/// Navigable views from `pose`, most-left first: signed heading offset
/// ascending, then elevation offset ascending, then view index.
pub fn navigable_candidates<'g>(graph: &'g SceneGraph, pose: &AgentPose) -> Result<Vec<Candidate<'g>>> {
    let vp = graph.viewpoint(&pose.viewpoint_id)?;
    let mut out: Vec<Candidate<'g>> = vp
        .views
        .iter()
        .enumerate()
        .filter(|(_, v)| v.leads_to.is_some())
        .map(|(view_index, view)| Candidate { view_index, view, direction: relative_direction(pose, view) })
        .collect();
    out.sort_by_key(|c| (c.direction.heading_offset_deg, c.direction.elevation_offset_deg, c.view_index));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(heading: i32, to: Option<&str>) -> ViewDescriptor {
        ViewDescriptor {
            heading_deg: heading,
            elevation_deg: 0,
            caption: format!("view at {heading}"),
            objects: vec![],
            leads_to: to.map(str::to_string),
        }
    }

    fn vp(id: &str, pos: [f64; 3], views: Vec<ViewDescriptor>) -> Viewpoint {
        Viewpoint { id: id.into(), position: Position(pos), views }
    }

    fn line_graph() -> SceneGraph {
        SceneGraph::new(
            "line",
            vec![
                vp("A", [0.0, 0.0, 0.0], vec![view(0, Some("B"))]),
                vp("B", [0.0, 2.0, 0.0], vec![view(180, Some("A")), view(0, Some("C"))]),
                vp("C", [0.0, 5.0, 0.0], vec![view(180, Some("B"))]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn euclidean_examples() {
        let o = Position::new(0.0, 0.0, 0.0);
        assert_eq!(euclidean_distance(o, o), 0.0);
        assert_eq!(euclidean_distance(o, Position::new(3.0, 4.0, 0.0)), 5.0);
        assert_eq!(euclidean_distance(Position::new(1.0, 2.0, 2.0), o), 3.0);
    }

    #[test]
    fn minimal_scene_loads() {
        let g = SceneGraph::from_json_str(
            r#"{"scan_id":"s","viewpoints":[{"id":"a","position":[0,0,0],"views":[]}]}"#,
        )
        .unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn dangling_reference_rejected() {
        let err = SceneGraph::from_json_str(
            r#"{"scan_id":"s","viewpoints":[{"id":"a","position":[0,0,0],"views":[
                {"heading_deg":0,"elevation_deg":0,"caption":"c","objects":[],"leads_to":"vp_missing"}]}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, SceneError::DanglingLeadsTo { ref to, .. } if to == "vp_missing"));
    }

    #[test]
    fn load_errors() {
        let dup = r#"{"scan_id":"s","viewpoints":[{"id":"a","position":[0,0,0],"views":[]},{"id":"a","position":[1,0,0],"views":[]}]}"#;
        assert!(matches!(SceneGraph::from_json_str(dup), Err(SceneError::DuplicateViewpoint(_))));
        let angle = r#"{"scan_id":"s","viewpoints":[{"id":"a","position":[0,0,0],"views":[
            {"heading_deg":45,"elevation_deg":0,"caption":"c","objects":[],"leads_to":null}]}]}"#;
        assert!(matches!(SceneGraph::from_json_str(angle), Err(SceneError::BadHeading { .. })));
        let elev = r#"{"scan_id":"s","viewpoints":[{"id":"a","position":[0,0,0],"views":[
            {"heading_deg":30,"elevation_deg":60,"caption":"c","objects":[],"leads_to":null}]}]}"#;
        assert!(matches!(SceneGraph::from_json_str(elev), Err(SceneError::BadElevation { .. })));
        let blank = r#"{"scan_id":"s","viewpoints":[{"id":"a","position":[0,0,0],"views":[
            {"heading_deg":30,"elevation_deg":0,"caption":"  \n ","objects":[],"leads_to":null}]}]}"#;
        assert!(matches!(SceneGraph::from_json_str(blank), Err(SceneError::EmptyCaption { .. })));
        let unknown = r#"{"scan_id":"s","extra":1,"viewpoints":[]}"#;
        assert!(matches!(SceneGraph::from_json_str(unknown), Err(SceneError::Parse(_))));
        assert!(matches!(SceneGraph::from_json_str("{not json"), Err(SceneError::Parse(_))));
    }

    #[test]
    fn geodesic_line_graph() {
        let g = line_graph();
        let r = geodesic(&g, "A", "C").unwrap().unwrap();
        assert_eq!(r.distance, 5.0);
        assert_eq!(r.path, ["A", "B", "C"]);
        let same = geodesic(&g, "B", "B").unwrap().unwrap();
        assert_eq!(same.distance, 0.0);
        assert_eq!(same.path, ["B"]);
        assert!(matches!(geodesic(&g, "A", "Z"), Err(SceneError::UnknownViewpoint(_))));
    }

    #[test]
    fn geodesic_unreachable() {
        let g = SceneGraph::new(
            "d",
            vec![vp("A", [0.0; 3], vec![]), vp("B", [1.0, 0.0, 0.0], vec![view(90, Some("A"))])],
        )
        .unwrap();
        assert_eq!(geodesic(&g, "A", "B").unwrap(), None);
        assert!(geodesic(&g, "B", "A").unwrap().is_some());
    }

    #[test]
    fn geodesic_tie_breaks_lexicographically() {
        // Square: S -> {Y, X} -> T, both legs length 1 + 1.
        let g = SceneGraph::new(
            "sq",
            vec![
                vp("S", [0.0, 0.0, 0.0], vec![view(0, Some("Y")), view(90, Some("X"))]),
                vp("Y", [0.0, 1.0, 0.0], vec![view(90, Some("T"))]),
                vp("X", [1.0, 0.0, 0.0], vec![view(0, Some("T"))]),
                vp("T", [1.0, 1.0, 0.0], vec![]),
            ],
        )
        .unwrap();
        let r = geodesic(&g, "S", "T").unwrap().unwrap();
        assert_eq!(r.path, ["S", "X", "T"]);
    }

    #[test]
    fn candidate_order_most_left_first() {
        let g = SceneGraph::new(
            "c",
            vec![
                vp(
                    "A",
                    [0.0; 3],
                    vec![view(120, Some("B")), view(60, Some("B")), view(270, Some("B")), view(0, None)],
                ),
                vp("B", [1.0, 0.0, 0.0], vec![]),
            ],
        )
        .unwrap();
        let pose = AgentPose::new(&g, "A", 90, 0).unwrap();
        let headings: Vec<i32> =
            navigable_candidates(&g, &pose).unwrap().iter().map(|c| c.view.heading_deg).collect();
        assert_eq!(headings, [60, 120, 270]);
    }

    #[test]
    fn equal_direction_candidates_by_view_index() {
        let g = SceneGraph::new(
            "c",
            vec![
                vp("A", [0.0; 3], vec![view(30, Some("C")), view(30, Some("B"))]),
                vp("B", [1.0, 0.0, 0.0], vec![]),
                vp("C", [2.0, 0.0, 0.0], vec![]),
            ],
        )
        .unwrap();
        let pose = AgentPose::new(&g, "A", 0, 0).unwrap();
        let idx: Vec<usize> = navigable_candidates(&g, &pose).unwrap().iter().map(|c| c.view_index).collect();
        assert_eq!(idx, [0, 1]);
        let lonely = AgentPose::new(&g, "B", 0, 0).unwrap();
        assert!(navigable_candidates(&g, &lonely).unwrap().is_empty());
    }

    #[test]
    fn canonical_writer_round_trips() {
        let g = line_graph();
        let text = g.to_json_string();
        let back = SceneGraph::from_json_str(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json_string(), text);
    }
}
