//! 2D point-maze simulator family.
//!
//! A maze is a boolean occupancy grid over a rectangular world centred on the
//! origin. The agent is a kinematic point with heading: each step first turns
//! by the commanded angular velocity, then advances along the new heading.
//! Wall collisions are resolved per axis — the blocked component of motion is
//! cancelled, the other is kept — which is deterministic and cannot tunnel as
//! long as the per-step displacement stays at or below the cell size.
//!
//! Maze layouts ship as ASCII grid files (`'#'` wall, `'.'` free, `'S'` start,
//! first line `cols rows cell_size`); the named presets embed their layouts
//! and the default desired-outcome points.

use rand::Rng;

use crate::error::{FrontierError, Result};
use crate::GoalPoint;

/// Static description of one maze environment.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeSpec {
    pub name: String,
    pub cols: usize,
    pub rows: usize,
    pub cell_size: f64,
    /// Row-major occupancy, row 0 at the top (largest y). `true` = wall.
    pub walls: Vec<bool>,
    pub start: GoalPoint,
    pub desired_outcomes: Vec<GoalPoint>,
    pub horizon: usize,
    pub success_radius: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub dt: f64,
}

/// Full simulator state. Positions are world units, the heading is radians
/// in (-pi, pi], velocities are the last commanded values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub pos: GoalPoint,
    pub heading: f64,
    pub vel: f64,
    pub ang_vel: f64,
    pub step: usize,
}

/// Commanded linear and angular velocity; clipped to the spec maxima inside
/// [`step`], never rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub v: f64,
    pub omega: f64,
}

impl Action {
    pub fn clamped(self, spec: &MazeSpec) -> Action {
        Action {
            v: self.v.clamp(-spec.v_max, spec.v_max),
            omega: self.omega.clamp(-spec.omega_max, spec.omega_max),
        }
    }
}

pub const OBS_DIM: usize = 5;
pub const ACTION_DIM: usize = 2;

/// Raw observation vector: xy position, heading, velocity, angular velocity.
pub fn observation(state: &EnvState) -> [f64; OBS_DIM] {
    [state.pos[0], state.pos[1], state.heading, state.vel, state.ang_vel]
}

impl MazeSpec {
    pub fn half_width(&self) -> f64 {
        self.cols as f64 * self.cell_size / 2.0
    }

    pub fn half_height(&self) -> f64 {
        self.rows as f64 * self.cell_size / 2.0
    }

    pub fn goal_bounds(&self) -> crate::GoalBounds {
        crate::GoalBounds { half_width: self.half_width(), half_height: self.half_height() }
    }

    pub fn in_bounds(&self, p: GoalPoint) -> bool {
        p[0].abs() <= self.half_width() && p[1].abs() <= self.half_height()
    }

    /// Grid cell containing a point; indices clamp at the boundary so points
    /// exactly on the rim resolve to the outermost cell.
    pub fn cell_of(&self, p: GoalPoint) -> (usize, usize) {
        let col = ((p[0] + self.half_width()) / self.cell_size).floor() as isize;
        let row = ((self.half_height() - p[1]) / self.cell_size).floor() as isize;
        let col = col.clamp(0, self.cols as isize - 1) as usize;
        let row = row.clamp(0, self.rows as isize - 1) as usize;
        (col, row)
    }

    pub fn cell_center(&self, col: usize, row: usize) -> GoalPoint {
        [
            -self.half_width() + (col as f64 + 0.5) * self.cell_size,
            self.half_height() - (row as f64 + 0.5) * self.cell_size,
        ]
    }

    pub fn is_wall_cell(&self, col: usize, row: usize) -> bool {
        self.walls[row * self.cols + col]
    }

    pub fn is_wall_at(&self, p: GoalPoint) -> bool {
        let (col, row) = self.cell_of(p);
        self.is_wall_cell(col, row)
    }

    fn blocked(&self, p: GoalPoint) -> bool {
        !self.in_bounds(p) || self.is_wall_at(p)
    }

    /// Parses the ASCII grid format. Desired outcomes, horizon and motion
    /// limits are not part of the file; the caller fills them in (the preset
    /// loaders do this, custom runs take them from the config).
    pub fn from_grid_str(name: &str, text: &str) -> Result<MazeSpec> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| FrontierError::MazeFormat("empty maze file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(FrontierError::MazeFormat(format!(
                "header must be `cols rows cell_size`, got `{header}`"
            )));
        }
        let cols: usize = fields[0]
            .parse()
            .map_err(|_| FrontierError::MazeFormat(format!("bad cols `{}`", fields[0])))?;
        let rows: usize = fields[1]
            .parse()
            .map_err(|_| FrontierError::MazeFormat(format!("bad rows `{}`", fields[1])))?;
        let cell_size: f64 = fields[2]
            .parse()
            .map_err(|_| FrontierError::MazeFormat(format!("bad cell_size `{}`", fields[2])))?;
        if cols == 0 || rows == 0 || !(cell_size > 0.0) {
            return Err(FrontierError::MazeFormat("cols, rows and cell_size must be positive".into()));
        }

        let mut walls = vec![false; cols * rows];
        let mut start_cell: Option<(usize, usize)> = None;
        let mut row_count = 0;
        for (row, line) in lines.enumerate() {
            if line.is_empty() && row >= rows {
                continue; // trailing blank line
            }
            if row >= rows {
                return Err(FrontierError::MazeFormat(format!("more than {rows} grid rows")));
            }
            if line.chars().count() != cols {
                return Err(FrontierError::MazeFormat(format!(
                    "row {row} has {} cells, expected {cols} (grid must be rectangular)",
                    line.chars().count()
                )));
            }
            for (col, ch) in line.chars().enumerate() {
                match ch {
                    '#' => walls[row * cols + col] = true,
                    '.' => {}
                    'S' => {
                        if start_cell.replace((col, row)).is_some() {
                            return Err(FrontierError::MazeFormat("more than one 'S' start cell".into()));
                        }
                    }
                    other => {
                        return Err(FrontierError::MazeFormat(format!(
                            "unexpected character `{other}` at row {row}, col {col}"
                        )))
                    }
                }
            }
            row_count += 1;
        }
        if row_count != rows {
            return Err(FrontierError::MazeFormat(format!(
                "expected {rows} grid rows, found {row_count}"
            )));
        }
        let (start_col, start_row) = start_cell
            .ok_or_else(|| FrontierError::MazeFormat("no 'S' start cell".into()))?;

        let mut spec = MazeSpec {
            name: name.to_string(),
            cols,
            rows,
            cell_size,
            walls,
            start: [0.0, 0.0],
            desired_outcomes: Vec::new(),
            horizon: 100,
            success_radius: 1.5,
            v_max: 1.0,
            omega_max: std::f64::consts::FRAC_PI_4,
            dt: 1.0,
        };
        spec.start = spec.cell_center(start_col, start_row);
        Ok(spec)
    }

    pub fn from_grid_file(path: &std::path::Path) -> Result<MazeSpec> {
        let text = std::fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".into());
        MazeSpec::from_grid_str(&name, &text)
    }

    /// Checks the structural invariants: start and every desired outcome must
    /// sit in free cells inside the bounds.
    pub fn validate(&self) -> Result<()> {
        if self.blocked(self.start) {
            return Err(FrontierError::MazeFormat(format!(
                "start {:?} is inside a wall or out of bounds",
                self.start
            )));
        }
        for (k, &g) in self.desired_outcomes.iter().enumerate() {
            if self.blocked(g) {
                return Err(FrontierError::MazeFormat(format!(
                    "desired outcome {k} at {g:?} is inside a wall or out of bounds"
                )));
            }
        }
        if self.horizon == 0 {
            return Err(FrontierError::MazeFormat("horizon must be positive".into()));
        }
        Ok(())
    }
}

/// Named maze presets with their default desired-outcome points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MazePreset {
    ComplexMaze,
    MediumMaze,
    SpiralMaze,
    TestUmaze,
}

impl MazePreset {
    pub fn from_name(name: &str) -> Option<MazePreset> {
        match name {
            "complex-maze" | "complex" => Some(MazePreset::ComplexMaze),
            "medium-maze" | "medium" => Some(MazePreset::MediumMaze),
            "spiral-maze" | "spiral" => Some(MazePreset::SpiralMaze),
            "test-umaze" | "umaze" => Some(MazePreset::TestUmaze),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MazePreset::ComplexMaze => "complex-maze",
            MazePreset::MediumMaze => "medium-maze",
            MazePreset::SpiralMaze => "spiral-maze",
            MazePreset::TestUmaze => "test-umaze",
        }
    }

    pub fn load(self) -> MazeSpec {
        let (grid, goals, horizon): (&str, &[GoalPoint], usize) = match self {
            MazePreset::ComplexMaze => (
                include_str!("../assets/mazes/complex.maze"),
                &[[8.0, 16.0], [-8.0, -16.0], [16.0, -8.0], [-16.0, 8.0]],
                100,
            ),
            MazePreset::MediumMaze => (
                include_str!("../assets/mazes/medium.maze"),
                &[[16.0, 16.0], [-16.0, -16.0], [16.0, -16.0], [-16.0, 16.0]],
                100,
            ),
            MazePreset::SpiralMaze => (
                include_str!("../assets/mazes/spiral.maze"),
                &[[12.0, 16.0], [-12.0, -16.0]],
                100,
            ),
            MazePreset::TestUmaze => (
                include_str!("../assets/mazes/test_umaze.maze"),
                &[[-4.0, -4.0], [4.0, -4.0]],
                60,
            ),
        };
        let mut spec = MazeSpec::from_grid_str(self.name(), grid).expect("embedded preset parses");
        spec.desired_outcomes = goals.to_vec();
        spec.horizon = horizon;
        if self == MazePreset::TestUmaze {
            spec.success_radius = 1.0;
        }
        // Paper presets start exactly at the origin; snap the f64 dust from
        // the cell-center computation.
        if spec.start[0].abs() < 1e-9 && spec.start[1].abs() < 1e-9 {
            spec.start = [0.0, 0.0];
        }
        spec.validate().expect("embedded preset is valid");
        spec
    }
}

/// Fresh state at the spec's start position with zero velocities.
pub fn reset(spec: &MazeSpec) -> EnvState {
    EnvState { pos: spec.start, heading: 0.0, vel: 0.0, ang_vel: 0.0, step: 0 }
}

fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped == -PI {
        PI
    } else {
        wrapped
    }
}

/// One kinematic step: heading first, then axis-separated translation with
/// per-axis wall blocking. Returns the next state and whether the episode is
/// over (step counter reached the horizon).
pub fn step(state: &EnvState, action: Action, spec: &MazeSpec) -> (EnvState, bool) {
    let a = action.clamped(spec);
    let heading = wrap_angle(state.heading + a.omega * spec.dt);
    let dx = a.v * spec.dt * heading.cos();
    let dy = a.v * spec.dt * heading.sin();

    let mut pos = state.pos;
    if !spec.blocked([pos[0] + dx, pos[1]]) {
        pos[0] += dx;
    }
    if !spec.blocked([pos[0], pos[1] + dy]) {
        pos[1] += dy;
    }

    let next = EnvState { pos, heading, vel: a.v, ang_vel: a.omega, step: state.step + 1 };
    let terminal = next.step >= spec.horizon;
    (next, terminal)
}

/// Goal projection: abstracts the full state to its xy position.
#[inline]
pub fn goal_projection(state: &EnvState) -> GoalPoint {
    state.pos
}

/// A state achieves a goal when its projection lies within the success radius.
pub fn is_success(state: &EnvState, goal: GoalPoint, spec: &MazeSpec) -> bool {
    crate::goal_distance(goal_projection(state), goal) <= spec.success_radius
}

/// Uniform sample over the bounding box of the state space. Deliberately
/// ignores walls: the target pool must cover every candidate point, feasible
/// or not.
pub fn sample_uniform_state_space<R: Rng + ?Sized>(spec: &MazeSpec, rng: &mut R) -> GoalPoint {
    let hw = spec.half_width();
    let hh = spec.half_height();
    [rng.gen_range(-hw..hw), rng.gen_range(-hh..hh)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn complex_preset_resets_at_origin() {
        let spec = MazePreset::ComplexMaze.load();
        let s = reset(&spec);
        assert_eq!(s.pos, [0.0, 0.0]);
        assert_eq!(s.vel, 0.0);
        assert_eq!(s.step, 0);
        assert_eq!(reset(&spec), reset(&spec));
    }

    #[test]
    fn custom_start_is_respected() {
        let mut spec = MazePreset::MediumMaze.load();
        spec.start = [2.0, 3.0];
        assert_eq!(reset(&spec).pos, [2.0, 3.0]);
    }

    #[test]
    fn preset_goal_lists_match_defaults() {
        assert_eq!(
            MazePreset::ComplexMaze.load().desired_outcomes,
            vec![[8.0, 16.0], [-8.0, -16.0], [16.0, -8.0], [-16.0, 8.0]]
        );
        assert_eq!(
            MazePreset::MediumMaze.load().desired_outcomes,
            vec![[16.0, 16.0], [-16.0, -16.0], [16.0, -16.0], [-16.0, 16.0]]
        );
        assert_eq!(MazePreset::SpiralMaze.load().desired_outcomes, vec![[12.0, 16.0], [-12.0, -16.0]]);
    }

    #[test]
    fn preset_bounds_match_published_sizes() {
        let complex = MazePreset::ComplexMaze.load();
        assert_eq!((complex.half_width() * 2.0, complex.half_height() * 2.0), (36.0, 36.0));
        let spiral = MazePreset::SpiralMaze.load();
        assert_eq!((spiral.half_width() * 2.0, spiral.half_height() * 2.0), (28.0, 36.0));
    }

    #[test]
    fn zero_action_keeps_position() {
        let spec = MazePreset::ComplexMaze.load();
        let s = reset(&spec);
        let (next, _) = step(&s, Action { v: 0.0, omega: 0.0 }, &spec);
        assert_eq!(next.pos, s.pos);
        assert_eq!(next.step, 1);
    }

    #[test]
    fn open_corridor_advances_by_velocity() {
        let spec = MazePreset::ComplexMaze.load();
        let s = reset(&spec);
        let (next, _) = step(&s, Action { v: 1.0, omega: 0.0 }, &spec);
        assert!((next.pos[0] - 1.0).abs() < 1e-12);
        assert!(next.pos[1].abs() < 1e-12);
    }

    #[test]
    fn wall_blocks_normal_component_keeps_lateral() {
        // Stand at the west face of the start pocket of the complex maze and
        // push into the wall: x motion cancelled, y motion preserved.
        let spec = MazePreset::ComplexMaze.load();
        let face = [-2.0, 0.0];
        // Geometric oracle: the cell west of the face must be occupied and the
        // face cell itself free.
        let (c, r) = spec.cell_of([face[0] - 1.0, face[1]]);
        assert!(spec.is_wall_cell(c, r), "fixture expects a wall west of {face:?}");
        let (fc, fr) = spec.cell_of(face);
        assert!(!spec.is_wall_cell(fc, fr));

        let state = EnvState { pos: face, heading: std::f64::consts::PI, vel: 0.0, ang_vel: 0.0, step: 0 };
        let (next, _) = step(&state, Action { v: 1.0, omega: 0.0 }, &spec);
        assert_eq!(next.pos[0], face[0], "motion into the wall must be cancelled");

        // Diagonal into the same wall: y component survives.
        let diag = EnvState {
            pos: face,
            heading: 3.0 * std::f64::consts::FRAC_PI_4, // north-west
            vel: 0.0,
            ang_vel: 0.0,
            step: 0,
        };
        let (next, _) = step(&diag, Action { v: 1.0, omega: 0.0 }, &spec);
        assert_eq!(next.pos[0], face[0]);
        assert!(next.pos[1] > face[1]);
        let (nc, nr) = spec.cell_of(next.pos);
        assert!(!spec.is_wall_cell(nc, nr), "agent never ends inside a wall");
    }

    #[test]
    fn terminal_exactly_at_horizon() {
        let mut spec = MazePreset::TestUmaze.load();
        spec.horizon = 3;
        let mut s = reset(&spec);
        for expect_terminal in [false, false, true] {
            let (next, terminal) = step(&s, Action { v: 0.0, omega: 0.0 }, &spec);
            assert_eq!(terminal, expect_terminal);
            s = next;
        }
    }

    #[test]
    fn goal_projection_returns_xy_and_is_idempotent() {
        let state = EnvState { pos: [1.0, 2.0], heading: 0.3, vel: 0.5, ang_vel: -0.1, step: 7 };
        assert_eq!(goal_projection(&state), [1.0, 2.0]);
        // Projecting a goal-shaped state (a state synthesised from a goal
        // point) returns the same point.
        let g = [4.5, -3.25];
        let goal_shaped = EnvState { pos: g, heading: 0.0, vel: 0.0, ang_vel: 0.0, step: 0 };
        assert_eq!(goal_projection(&goal_shaped), g);
        let spec = MazePreset::ComplexMaze.load();
        assert_eq!(goal_projection(&reset(&spec)), [0.0, 0.0]);
    }

    #[test]
    fn success_threshold_is_inclusive_and_strict() {
        let spec = MazePreset::ComplexMaze.load();
        let at_goal = EnvState { pos: [8.0, 16.0], heading: 0.0, vel: 0.0, ang_vel: 0.0, step: 0 };
        assert!(is_success(&at_goal, [8.0, 16.0], &spec));
        let r = spec.success_radius;
        let just_outside =
            EnvState { pos: [8.0 + r + 1e-9, 16.0], heading: 0.0, vel: 0.0, ang_vel: 0.0, step: 0 };
        assert!(!is_success(&just_outside, [8.0, 16.0], &spec));
        let halfway = EnvState { pos: [8.0 + 0.5 * r, 16.0], heading: 0.0, vel: 0.0, ang_vel: 0.0, step: 0 };
        assert!(is_success(&halfway, [8.0, 16.0], &spec));
    }

    #[test]
    fn uniform_samples_stay_in_box_and_center() {
        let spec = MazePreset::ComplexMaze.load();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let mut sum = [0.0, 0.0];
        let mut left = 0usize;
        for _ in 0..n {
            let p = sample_uniform_state_space(&spec, &mut rng);
            assert!(spec.in_bounds(p));
            sum[0] += p[0];
            sum[1] += p[1];
            if p[0] < 0.0 {
                left += 1;
            }
        }
        assert!((sum[0] / n as f64).abs() < 0.5);
        assert!((sum[1] / n as f64).abs() < 0.5);
        let frac_left = left as f64 / n as f64;
        assert!((frac_left - 0.5).abs() < 0.01, "left-half fraction {frac_left}");
    }

    #[test]
    fn every_preset_goal_is_reachable_from_start() {
        // BFS over free cells; the layouts are hand-drawn, so check them.
        for preset in [
            MazePreset::ComplexMaze,
            MazePreset::MediumMaze,
            MazePreset::SpiralMaze,
            MazePreset::TestUmaze,
        ] {
            let spec = preset.load();
            let start = spec.cell_of(spec.start);
            let mut seen = vec![false; spec.cols * spec.rows];
            let mut queue = std::collections::VecDeque::from([start]);
            seen[start.1 * spec.cols + start.0] = true;
            while let Some((c, r)) = queue.pop_front() {
                let mut push = |c: isize, r: isize| {
                    if c < 0 || r < 0 || c >= spec.cols as isize || r >= spec.rows as isize {
                        return;
                    }
                    let (c, r) = (c as usize, r as usize);
                    let idx = r * spec.cols + c;
                    if !seen[idx] && !spec.is_wall_cell(c, r) {
                        seen[idx] = true;
                        queue.push_back((c, r));
                    }
                };
                push(c as isize - 1, r as isize);
                push(c as isize + 1, r as isize);
                push(c as isize, r as isize - 1);
                push(c as isize, r as isize + 1);
            }
            for &g in &spec.desired_outcomes {
                let (c, r) = spec.cell_of(g);
                assert!(
                    seen[r * spec.cols + c],
                    "goal {g:?} unreachable in preset {}",
                    spec.name
                );
            }
        }
    }

    #[test]
    fn loader_rejects_malformed_grids() {
        assert!(MazeSpec::from_grid_str("t", "").is_err());
        assert!(MazeSpec::from_grid_str("t", "2 2 1\n..\n.").is_err()); // ragged
        assert!(MazeSpec::from_grid_str("t", "2 2 1\n..\n..").is_err()); // no S
        assert!(MazeSpec::from_grid_str("t", "2 2 1\nSS\n..").is_err()); // two S
        assert!(MazeSpec::from_grid_str("t", "2 2 1\nS?\n..").is_err()); // bad char
        assert!(MazeSpec::from_grid_str("t", "2 2 1\nS.\n..").is_ok());
    }
}
