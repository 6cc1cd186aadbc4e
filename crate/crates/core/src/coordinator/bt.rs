//! Minimal behavior tree: Sequence, Fallback, RateLimiter and named actions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_DEPTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Success,
    Failure,
    Running,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Sequence,
    Fallback,
    RateLimiter,
    Action,
}

/// Serialized tree shape: `{kind, period?, action?, children: [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default)]
    pub children: Vec<TreeSpec>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("tree depth {0} exceeds {MAX_DEPTH}")]
    TooDeep(usize),
    #[error("rate limiter needs exactly one child, got {0}")]
    RateLimiterChildren(usize),
    #[error("rate limiter period must be positive")]
    BadPeriod,
    #[error("action node without a name")]
    MissingAction,
    #[error("action node {0:?} has children")]
    ActionChildren(String),
    #[error("{0:?} node has no children")]
    Empty(NodeKind),
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("invalid tree json: {0}")]
    Json(String),
}

impl TreeSpec {
    pub fn action(name: &str) -> Self {
        Self { kind: NodeKind::Action, period: None, action: Some(name.to_string()), children: Vec::new() }
    }

    pub fn sequence(children: Vec<TreeSpec>) -> Self {
        Self { kind: NodeKind::Sequence, period: None, action: None, children }
    }

    pub fn fallback(children: Vec<TreeSpec>) -> Self {
        Self { kind: NodeKind::Fallback, period: None, action: None, children }
    }

    pub fn rate_limiter(period: f64, child: TreeSpec) -> Self {
        Self { kind: NodeKind::RateLimiter, period: Some(period), action: None, children: vec![child] }
    }

    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        serde_json::from_str(text).map_err(|e| TreeError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tree spec serializes")
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(TreeSpec::depth).max().unwrap_or(0)
    }
}

/// Replan-then-follow: the limiter gates compute_path, and keeping the old
/// path covers both "not due" and planner failure.
pub fn navigation_tree(replan_period: f64) -> TreeSpec {
    TreeSpec::sequence(vec![
        TreeSpec::fallback(vec![
            TreeSpec::rate_limiter(replan_period, TreeSpec::action("compute_path")),
            TreeSpec::action("keep_previous_path"),
        ]),
        TreeSpec::action("follow_path"),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub enum BehaviorNode {
    Sequence(Vec<BehaviorNode>),
    Fallback(Vec<BehaviorNode>),
    RateLimiter { period: f64, last: Option<f64>, child: Box<BehaviorNode> },
    Action(String),
}

impl BehaviorNode {
    /// Build from a spec, rejecting actions not in `known`.
    pub fn build(spec: &TreeSpec, known: &[&str]) -> Result<Self, TreeError> {
        let d = spec.depth();
        if d > MAX_DEPTH {
            return Err(TreeError::TooDeep(d));
        }
        Self::build_node(spec, known)
    }

    fn build_node(spec: &TreeSpec, known: &[&str]) -> Result<Self, TreeError> {
        let kids = || spec.children.iter().map(|c| Self::build_node(c, known)).collect::<Result<Vec<_>, _>>();
        match spec.kind {
            NodeKind::Sequence | NodeKind::Fallback if spec.children.is_empty() => Err(TreeError::Empty(spec.kind)),
            NodeKind::Sequence => Ok(BehaviorNode::Sequence(kids()?)),
            NodeKind::Fallback => Ok(BehaviorNode::Fallback(kids()?)),
            NodeKind::RateLimiter => {
                if spec.children.len() != 1 {
                    return Err(TreeError::RateLimiterChildren(spec.children.len()));
                }
                let period = spec.period.filter(|p| *p > 0.0 && p.is_finite()).ok_or(TreeError::BadPeriod)?;
                Ok(BehaviorNode::RateLimiter { period, last: None, child: Box::new(Self::build_node(&spec.children[0], known)?) })
            }
            NodeKind::Action => {
                let name = spec.action.clone().ok_or(TreeError::MissingAction)?;
                if !spec.children.is_empty() {
                    return Err(TreeError::ActionChildren(name));
                }
                if !known.is_empty() && !known.contains(&name.as_str()) {
                    return Err(TreeError::UnknownAction(name));
                }
                Ok(BehaviorNode::Action(name))
            }
        }
    }

    /// Tick at time `now`; actions are dispatched through `run`. Sequence and
    /// Fallback are reactive (no memory of a running child).
    pub fn tick(&mut self, now: f64, run: &mut dyn FnMut(&str) -> Status) -> Status {
        match self {
            BehaviorNode::Sequence(children) => {
                for c in children {
                    let s = c.tick(now, run);
                    if s != Status::Success {
                        return s;
                    }
                }
                Status::Success
            }
            BehaviorNode::Fallback(children) => {
                for c in children {
                    let s = c.tick(now, run);
                    if s != Status::Failure {
                        return s;
                    }
                }
                Status::Failure
            }
            BehaviorNode::RateLimiter { period, last, child } => {
                // tolerance absorbs accumulated tick-time rounding
                let due = last.is_none_or(|l| now - l >= *period - 1e-6);
                if !due {
                    return Status::Failure;
                }
                *last = Some(now);
                child.tick(now, run)
            }
            BehaviorNode::Action(name) => run(name),
        }
    }

    /// Clear limiter clocks so every limiter fires on the next tick.
    pub fn reset(&mut self) {
        match self {
            BehaviorNode::Sequence(c) | BehaviorNode::Fallback(c) => c.iter_mut().for_each(BehaviorNode::reset),
            BehaviorNode::RateLimiter { last, child, .. } => {
                *last = None;
                child.reset();
            }
            BehaviorNode::Action(_) => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let t = navigation_tree(2.0);
        let j = t.to_json();
        assert_eq!(TreeSpec::from_json(&j).unwrap(), t);
        assert!(j.contains("\"period\":2.0"));
        assert_eq!(t.depth(), 4);
    }

    #[test]
    fn structural_errors() {
        let rl = TreeSpec { kind: NodeKind::RateLimiter, period: Some(1.0), action: None, children: vec![] };
        assert_eq!(BehaviorNode::build(&rl, &[]), Err(TreeError::RateLimiterChildren(0)));
        let rl = TreeSpec::rate_limiter(0.0, TreeSpec::action("a"));
        assert_eq!(BehaviorNode::build(&rl, &[]), Err(TreeError::BadPeriod));
        assert_eq!(BehaviorNode::build(&TreeSpec::action("x"), &["a"]), Err(TreeError::UnknownAction("x".into())));
        let mut deep = TreeSpec::action("a");
        for _ in 0..8 {
            deep = TreeSpec::sequence(vec![deep]);
        }
        assert_eq!(BehaviorNode::build(&deep, &[]), Err(TreeError::TooDeep(9)));
        assert!(TreeSpec::from_json("{\"kind\":\"Loop\"}").is_err());
    }

    #[test]
    fn sequence_and_fallback_semantics() {
        let spec = navigation_tree(1.0);
        let mut tree = BehaviorNode::build(&spec, &["compute_path", "keep_previous_path", "follow_path"]).unwrap();
        let mut calls = Vec::new();
        let s = tree.tick(0.0, &mut |a| {
            calls.push(a.to_string());
            if a == "compute_path" { Status::Failure } else { Status::Success }
        });
        assert_eq!(s, Status::Success);
        assert_eq!(calls, ["compute_path", "keep_previous_path", "follow_path"]);
        calls.clear();
        tree.tick(0.5, &mut |a| {
            calls.push(a.to_string());
            Status::Running
        });
        // limiter not due: falls through to keep_previous_path, which is Running
        assert_eq!(calls, ["keep_previous_path"]);
    }
}
