//! Simultaneous localization and mapping back-ends.

pub mod grid;
pub mod landmark;
