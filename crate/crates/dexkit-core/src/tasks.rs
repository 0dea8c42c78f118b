//! Task definitions: stage tracking, staged reward terms, success criteria.
//!
//! Every task decomposes into three latched stages — reach the functional
//! part, construct a palm-plus-two-finger grasp, then move the part. Reward
//! terms are pure functions of (state, contacts, stage); their sum over an
//! episode telescopes, so total progress is independent of step partitioning.

use alloc::vec::Vec;

use crate::assets::{ArticulatedObjectInstance, Category};
use crate::geometry::Vec3;
use crate::sim::{ContactReport, RobotModel, SimState};

/// Which reward terms an environment pays out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RewardMode {
    /// All four terms, staged.
    Full,
    /// Stage-1 reach shaping only; success = palm within `d_reach`.
    ReachOnly,
}

/// Per-task constants: success threshold, reach radius, camera annotation,
/// reset randomization ranges.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TaskSpec {
    pub category: Category,
    /// Success threshold: radians of part motion, or meters of lift.
    pub success_threshold: f64,
    /// Stage 1 -> 2 distance (m).
    pub d_reach: f64,
    pub camera_eye: Vec3,
    pub camera_target: Vec3,
    /// Reset randomization: yaw about z (± rad) and planar offset (± m).
    pub yaw_range: f64,
    pub xy_range: f64,
    pub reward_mode: RewardMode,
    /// Multiplier converting raw progress into reward units (Bucket lift).
    pub progress_scale: f64,
}

impl TaskSpec {
    /// Standard spec for one of the four task categories.
    pub fn for_category(category: Category) -> Option<TaskSpec> {
        let (threshold, camera_eye, camera_target, progress_scale) = match category {
            Category::Faucet => {
                (1.3, Vec3::new(0.45, -0.45, 0.55), Vec3::new(0.0, 0.0, 0.25), 1.0)
            }
            Category::Bucket => {
                (0.20, Vec3::new(0.50, -0.50, 0.50), Vec3::new(0.0, 0.0, 0.20), 5.0)
            }
            Category::Laptop => {
                (1.0, Vec3::new(0.45, -0.50, 0.45), Vec3::new(0.0, 0.0, 0.10), 1.0)
            }
            Category::Toilet => {
                (1.0, Vec3::new(0.50, -0.55, 0.55), Vec3::new(0.0, 0.0, 0.20), 1.0)
            }
            _ => return None,
        };
        Some(TaskSpec {
            category,
            success_threshold: threshold,
            d_reach: 0.10,
            camera_eye,
            camera_target,
            yaw_range: 0.30,
            xy_range: 0.04,
            reward_mode: RewardMode::Full,
            progress_scale,
        })
    }
}

/// Reward term weights. `lambda` is the (negative) reach cap of the stage-1
/// term: with lambda < 0 the reward stops growing once the palm is within
/// |lambda| of the grasp point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RewardWeights {
    pub w_reach: f64,
    pub w_contact: f64,
    pub w_progress: f64,
    pub w_penalty_action: f64,
    pub w_penalty_jerk: f64,
    pub lambda: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w_reach: 1.0,
            w_contact: 0.5,
            w_progress: 5.0,
            w_penalty_action: 0.01,
            w_penalty_jerk: 0.01,
            lambda: -0.05,
        }
    }
}

/// Latched episode stage: 1 reach, 2 contact, 3 manipulate. Never decreases
/// within an episode; reset returns it to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTracker {
    stage: u8,
    /// (step index, stage entered) transition log.
    pub transitions: Vec<(u64, u8)>,
}

impl Default for StageTracker {
    fn default() -> Self {
        StageTracker { stage: 1, transitions: Vec::new() }
    }
}

impl StageTracker {
    pub fn stage(&self) -> u8 {
        self.stage
    }

    pub fn reset(&mut self) {
        self.stage = 1;
        self.transitions.clear();
    }

    /// Restore a latched stage (training resume); the transition log is not
    /// carried across snapshots.
    pub fn restore(&mut self, stage: u8) {
        debug_assert!((1..=3).contains(&stage));
        self.stage = stage;
        self.transitions.clear();
    }

    /// Advance the latched stage from the current distance and contacts.
    /// 1 -> 2 once the palm is within `d_reach` of the grasp point; 2 -> 3
    /// once the grasp predicate holds. Both can fire on the same step.
    pub fn update(&mut self, palm_to_grasp: f64, contacts: &ContactReport, d_reach: f64, step: u64) -> u8 {
        if self.stage == 1 && palm_to_grasp <= d_reach {
            self.stage = 2;
            self.transitions.push((step, 2));
        }
        if self.stage == 2 && contacts.grasp_object() {
            self.stage = 3;
            self.transitions.push((step, 3));
        }
        self.stage
    }
}

/// Distance from palm center to the annotated grasp point.
pub fn palm_to_grasp(model: &RobotModel, instance: &ArticulatedObjectInstance, state: &SimState) -> f64 {
    state.palm_pose(model).translation.dist(state.grasp_point(instance))
}

/// Stage-1 reach term: `min(-distance, lambda)`, zero outside stage 1.
pub fn reward_reach(stage: u8, palm_to_grasp: f64, weights: &RewardWeights) -> f64 {
    if stage == 1 {
        (-palm_to_grasp).min(weights.lambda)
    } else {
        0.0
    }
}

/// Contact indicator: 1 when stage >= 2 and the palm plus at least two
/// fingers touch the object.
pub fn reward_contact(stage: u8, contacts: &ContactReport) -> f64 {
    if stage >= 2 && contacts.grasp_object() {
        1.0
    } else {
        0.0
    }
}

/// Raw task progress of a state: part motion from its initial joint value
/// (rad) or scaled lift height (Bucket).
pub fn task_progress(instance: &ArticulatedObjectInstance, spec: &TaskSpec, state: &SimState) -> f64 {
    match spec.category {
        Category::Bucket => state.lift_height * spec.progress_scale,
        _ => state.functional_q(instance) - instance.init_joint_value,
    }
}

/// Stage-3 progress term: signed per-step progress delta.
pub fn reward_progress(stage: u8, progress: f64, prev_progress: f64) -> f64 {
    if stage == 3 {
        progress - prev_progress
    } else {
        0.0
    }
}

/// Action-magnitude and hand-joint-velocity penalty; never positive.
pub fn reward_penalty(action: &[f64], hand_qd: &[f64], weights: &RewardWeights) -> f64 {
    let a2: f64 = action.iter().map(|a| a * a).sum();
    let j2: f64 = hand_qd.iter().map(|v| v * v).sum();
    -(weights.w_penalty_action * a2) - (weights.w_penalty_jerk * j2)
}

/// Weighted sum of the four terms. The penalty arrives already weighted.
pub fn total_reward(
    r_reach: f64,
    r_contact: f64,
    r_progress: f64,
    r_penalty: f64,
    weights: &RewardWeights,
) -> f64 {
    weights.w_reach * r_reach
        + weights.w_contact * r_contact
        + weights.w_progress * r_progress
        + r_penalty
}

/// Task success: raw progress (part angle or lift height) at or past the
/// threshold.
pub fn check_success(instance: &ArticulatedObjectInstance, spec: &TaskSpec, state: &SimState) -> bool {
    match spec.category {
        Category::Bucket => state.lift_height >= spec.success_threshold,
        _ => state.functional_q(instance) - instance.init_joint_value >= spec.success_threshold,
    }
}
