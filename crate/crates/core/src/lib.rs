pub mod cone;
pub mod cone_map;
pub mod coordinator;
pub mod estimator;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod guidance;
pub mod harness;
pub mod par;
pub mod path;
pub mod planners;
pub mod sensors;
pub mod sim;
pub mod slam;
pub mod track;
pub mod vehicle;
