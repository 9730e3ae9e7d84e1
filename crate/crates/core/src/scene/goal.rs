//! Goal predicate and optimal path lengths over `(x, y, heading)` states.

use std::collections::VecDeque;

use thiserror::Error;

use super::{step, Action, AgentPose, Cell, Scene};
use crate::sensor::{Detection, ObservationCache};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NavError {
    #[error("no success pose for target class '{target_class}' is reachable from {start}")]
    Unreachable { target_class: String, start: AgentPose },
}

/// Success holds when a detection of `target_class` has mean depth within `d_success`.
pub fn success_check(detections: &[Detection], target_class: &str, d_success: f64) -> bool {
    detections
        .iter()
        .any(|d| d.class == target_class && d.mean_depth <= d_success)
}

const MOVES: [Action; 3] = [Action::MoveAhead, Action::RotateLeft, Action::RotateRight];

/// Minimum number of actions (moves and rotations, `Done` excluded) from
/// `start` to any pose where [`success_check`] holds. Breadth-first search.
pub fn shortest_path_length(
    scene: &Scene,
    cache: &ObservationCache,
    start: AgentPose,
    target_class: &str,
    d_success: f64,
) -> Result<u32, NavError> {
    let is_goal = |p: AgentPose| success_check(cache.detections(scene, p), target_class, d_success);
    let mut dist = vec![u32::MAX; scene.pose_count()];
    dist[scene.pose_index(start)] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(p) = queue.pop_front() {
        let d = dist[scene.pose_index(p)];
        if is_goal(p) {
            return Ok(d);
        }
        for a in MOVES {
            let q = step(scene, p, a);
            let slot = &mut dist[scene.pose_index(q)];
            if *slot == u32::MAX {
                *slot = d + 1;
                queue.push_back(q);
            }
        }
    }
    Err(NavError::Unreachable {
        target_class: target_class.to_string(),
        start,
    })
}

/// Distance-to-goal for every pose, from one multi-source backward search.
#[derive(Debug, Clone)]
pub struct GoalMap {
    pub target_class: String,
    dist: Vec<u32>,
}

impl GoalMap {
    pub fn build(scene: &Scene, cache: &ObservationCache, target_class: &str, d_success: f64) -> GoalMap {
        let mut dist = vec![u32::MAX; scene.pose_count()];
        let mut queue = VecDeque::new();
        for p in scene.poses() {
            if success_check(cache.detections(scene, p), target_class, d_success) {
                dist[scene.pose_index(p)] = 0;
                queue.push_back(p);
            }
        }
        while let Some(p) = queue.pop_front() {
            let d = dist[scene.pose_index(p)];
            for q in predecessors(scene, p) {
                let slot = &mut dist[scene.pose_index(q)];
                if *slot == u32::MAX {
                    *slot = d + 1;
                    queue.push_back(q);
                }
            }
        }
        GoalMap {
            target_class: target_class.to_string(),
            dist,
        }
    }

    pub fn distance(&self, scene: &Scene, pose: AgentPose) -> Option<u32> {
        match self.dist[scene.pose_index(pose)] {
            u32::MAX => None,
            d => Some(d),
        }
    }

    pub fn has_goal(&self) -> bool {
        self.dist.contains(&0)
    }
}

fn predecessors(scene: &Scene, p: AgentPose) -> impl Iterator<Item = AgentPose> {
    let (dx, dy) = p.heading.delta();
    let bx = p.x as isize - dx;
    let by = p.y as isize - dy;
    let behind = (scene.cell_at(bx, by) == Cell::Free)
        .then(|| AgentPose::new(bx as usize, by as usize, p.heading));
    [
        Some(AgentPose::new(p.x, p.y, p.heading.right())),
        Some(AgentPose::new(p.x, p.y, p.heading.left())),
        behind,
    ]
    .into_iter()
    .flatten()
}
