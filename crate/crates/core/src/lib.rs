//! Curriculum reinforcement-learning engine for 2D point mazes.
//!
//! The engine learns to reach a handful of desired outcome locations without
//! any environment reward. A diversified ensemble of goal-conditioned
//! classifiers scores how similar a state looks to a conditioned goal while
//! disagreeing on unexplored regions; a min-cost-max-flow bipartite matcher
//! turns those scores into per-outcome curriculum goals; and a goal-conditioned
//! soft actor-critic trains on the classifier-derived intrinsic reward with
//! hindsight goal relabeling.
//!
//! Crate layout mirrors the pipeline:
//!
//! - [`ndnet`] — dense MLPs, manual reverse-mode gradients, Adam.
//! - [`envs`] — point-maze simulator family and maze file loader.
//! - [`diversify`] — the conditional classifier ensemble and its losses.
//! - [`curriculum`] — cost matrix construction and the assignment solver.
//! - [`agent`] — soft actor-critic, replay buffer, hindsight relabeling.
//! - [`orchestrator`] — the full training loop, configuration, evaluation.
//! - [`metrics`] — CSV metrics log, SVG plots and maze snapshots.
//! - [`checkpoint`] — bit-exact run-state bundles for resume.
//! - [`verify`] — independent oracles (brute-force matcher, finite
//!   differences, closed-form mutual information) shared by tests and the
//!   `verify` CLI subcommand.

pub mod agent;
pub mod binio;
pub mod checkpoint;
pub mod curriculum;
pub mod diversify;
pub mod envs;
pub mod error;
pub mod metrics;
pub mod ndnet;
pub mod orchestrator;
pub mod verify;

pub use error::{FrontierError, Result};

/// A point in goal space. Mazes project the full state onto the agent's xy
/// position, so goal space is 2D everywhere in this crate.
pub type GoalPoint = [f64; 2];

/// Euclidean distance between two goal-space points.
#[inline]
pub fn goal_distance(a: GoalPoint, b: GoalPoint) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Axis-aligned bounding box of the goal space, centred on the origin.
/// This is all the classifier ensemble needs to know about an environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalBounds {
    pub half_width: f64,
    pub half_height: f64,
}

impl GoalBounds {
    /// Uniform sample over the box, walls included.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> GoalPoint {
        [
            rng.gen_range(-self.half_width..self.half_width),
            rng.gen_range(-self.half_height..self.half_height),
        ]
    }

    /// Per-coordinate factor that maps the box onto roughly [-1, 1] for
    /// network inputs.
    pub fn input_scale(&self) -> [f64; 2] {
        [1.0 / self.half_width, 1.0 / self.half_height]
    }
}
