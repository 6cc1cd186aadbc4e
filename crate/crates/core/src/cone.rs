//! Colored boundary cones and the shared cone-list JSON schema.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConeColor {
    /// Left-hand boundary.
    Blue,
    /// Right-hand boundary.
    Yellow,
    /// Start/finish line marker.
    OrangeLarge,
}

impl ConeColor {
    pub const ALL: [ConeColor; 3] = [ConeColor::Blue, ConeColor::Yellow, ConeColor::OrangeLarge];

    pub fn is_boundary(self) -> bool {
        matches!(self, ConeColor::Blue | ConeColor::Yellow)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub x: f64,
    pub y: f64,
    pub color: ConeColor,
}

impl Cone {
    pub fn new(x: f64, y: f64, color: ConeColor) -> Self {
        Self { x, y, color }
    }

    pub fn at(p: Vec2, color: ConeColor) -> Self {
        Self::new(p.x, p.y, color)
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// `{name, cones:[...]}`: the track file schema without start pose or centerline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeMapFile {
    #[serde(default)]
    pub name: String,
    pub cones: Vec<Cone>,
}

impl ConeMapFile {
    pub fn new(name: impl Into<String>, cones: Vec<Cone>) -> Self {
        Self { name: name.into(), cones }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cone list serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cone_json_schema() {
        let file = ConeMapFile::new("t", vec![Cone::new(1.0, 2.0, ConeColor::OrangeLarge)]);
        let json = file.to_json();
        assert!(json.contains("\"color\": \"OrangeLarge\""));
        assert_eq!(ConeMapFile::from_json(&json).unwrap(), file);
        assert!(serde_json::from_str::<Cone>(r#"{"x":0,"y":0,"color":"Red"}"#).is_err());
    }
}
