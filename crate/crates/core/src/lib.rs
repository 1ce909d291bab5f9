//! Text-based vision-and-language navigation.
//!
//! Agents navigate caption-annotated viewpoint graphs through a purely
//! textual interface: every panoramic candidate view is described by a
//! caption (and optionally detected objects), and an action is the caption
//! of the view to walk towards, or `stop`.

pub mod agents;
pub mod alfred;
pub mod cli;
pub mod config;
pub mod direction;
pub mod episode;
pub mod gateway;
pub mod observation;
pub mod render;
pub mod runner;
pub mod scene;
pub mod seeding;
pub mod synth;
pub mod teacher;
pub mod worldgen;
