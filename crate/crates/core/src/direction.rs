//! Egocentric directions and their phrasing ("30 degree right", "back and 60 degree up").

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{AgentPose, ViewDescriptor};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DirectionError {
    #[error("heading offset {0} is not a multiple of 30 in (-180, 180]")]
    Heading(i32),
    #[error("elevation offset {0} is not a multiple of 30 in [-60, 60]")]
    Elevation(i32),
}

/// A view's direction relative to the agent's pose.
///
/// `heading_offset_deg` lies in (-180, 180]; negative is to the left.
/// `elevation_offset_deg` is one of -60, -30, 0, 30, 60 (60 occurs when the
/// agent looks down and the view is up, or the reverse).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelativeDirection {
    pub heading_offset_deg: i32,
    pub elevation_offset_deg: i32,
}

/// Wrap any angle into (-180, 180]; -180 becomes +180.
pub fn normalize_heading_offset(deg: i32) -> i32 {
    let wrapped = deg.rem_euclid(360);
    if wrapped > 180 {
        wrapped - 360
    } else {
        wrapped
    }
}

impl RelativeDirection {
    pub fn new(heading_offset_deg: i32, elevation_offset_deg: i32) -> Result<Self, DirectionError> {
        if heading_offset_deg % 30 != 0 || heading_offset_deg <= -180 || heading_offset_deg > 180 {
            return Err(DirectionError::Heading(heading_offset_deg));
        }
        if elevation_offset_deg % 30 != 0 || elevation_offset_deg.abs() > 60 {
            return Err(DirectionError::Elevation(elevation_offset_deg));
        }
        Ok(RelativeDirection { heading_offset_deg, elevation_offset_deg })
    }

    pub fn phrase(&self) -> Result<String, DirectionError> {
        phrase_direction(*self)
    }
}

pub fn relative_direction(pose: &AgentPose, view: &ViewDescriptor) -> RelativeDirection {
    RelativeDirection {
        heading_offset_deg: normalize_heading_offset(view.heading_deg - pose.heading_deg),
        elevation_offset_deg: view.elevation_deg - pose.elevation_deg,
    }
}

/// Render a direction: "straight ahead", "back", "{n} degree left|right",
/// optionally followed by " and {n} degree up|down".
pub fn phrase_direction(rel: RelativeDirection) -> Result<String, DirectionError> {
    let RelativeDirection { heading_offset_deg: h, elevation_offset_deg: e } = rel;
    RelativeDirection::new(h, e)?;
    let mut out = match h {
        0 => "straight ahead".to_string(),
        180 => "back".to_string(),
        h if h > 0 => format!("{h} degree right"),
        h => format!("{} degree left", -h),
    };
    match e {
        0 => {}
        e if e > 0 => out.push_str(&format!(" and {e} degree up")),
        e => out.push_str(&format!(" and {} degree down", -e)),
    }
    Ok(out)
}

/// Inverse of [`phrase_direction`]. Accepts "degrees" as well as "degree".
pub fn parse_direction_phrase(text: &str) -> Option<RelativeDirection> {
    let lower = text.trim().to_lowercase().replace("degrees", "degree");
    let (heading_part, elevation_part) = match lower.split_once(" and ") {
        Some((h, e)) => (h.trim(), Some(e.trim())),
        None => (lower.as_str(), None),
    };
    let heading = match heading_part {
        "straight ahead" | "front" | "ahead" => 0,
        "back" | "behind" => 180,
        other => {
            let (n, side) = parse_degree_side(other)?;
            match side {
                "right" => n,
                "left" => -n,
                _ => return None,
            }
        }
    };
    let elevation = match elevation_part {
        None => 0,
        Some(e) => {
            let (n, side) = parse_degree_side(e)?;
            match side {
                "up" => n,
                "down" => -n,
                _ => return None,
            }
        }
    };
    RelativeDirection::new(normalize_heading_offset(heading), elevation).ok()
}

fn parse_degree_side(text: &str) -> Option<(i32, &str)> {
    let mut parts = text.split_whitespace();
    let n = parts.next()?.parse::<i32>().ok()?;
    if parts.next()? != "degree" {
        return None;
    }
    let side = parts.next()?;
    parts.next().is_none().then_some((n, side))
}

impl fmt::Display for RelativeDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match phrase_direction(*self) {
            Ok(p) => f.write_str(&p),
            Err(_) => write!(f, "<{} / {}>", self.heading_offset_deg, self.elevation_offset_deg),
        }
    }
}
