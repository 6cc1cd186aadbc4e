//! Behavior-tree mission coordinator.

pub mod bt;
pub mod mission;

pub use bt::{navigation_tree, BehaviorNode, NodeKind, Status, TreeError, TreeSpec};
pub use mission::{
    detect_lap, lap_crossings, mission_log_from_jsonl, mission_log_to_jsonl, Mission, MissionConfig, MissionEvent,
    MissionState, Phase, PlannerKind, SlamMode, TickOutput,
};
