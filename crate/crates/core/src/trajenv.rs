//! Analytic planar stand-ins for the robot.
//!
//! A trajectory is a `T x 2` block of velocity commands, stored flattened
//! row-major (`index = t * 2 + m`). Executing it yields a 2-D end state:
//! the integrated position for [`ExeKind::LinearIntegrator`], or the
//! end-effector position after integrating joint velocities for
//! [`ExeKind::TwoLinkArm`].
//!
//! Nothing here exposes intermediate states: reward is a function of the goal
//! and the full trajectory only.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numkit::{Matrix, RngStream};

/// Motor channels per timestep.
pub const CHANNELS: usize = 2;
/// End-state dimension.
pub const END_STATE_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ExeKind {
    LinearIntegrator,
    TwoLinkArm { l1: f64, l2: f64 },
}

/// Axis-aligned rectangle in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Region {
    /// Hockey-table target area.
    fn default() -> Self {
        Self {
            x_min: 0.65,
            x_max: 1.3,
            y_min: -0.4,
            y_max: 0.4,
        }
    }
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("degenerate goal region {self:?}")))
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        ]
    }

    pub fn half_widths(&self) -> [f64; 2] {
        [
            0.5 * (self.x_max - self.x_min),
            0.5 * (self.y_max - self.y_min),
        ]
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        [
            [self.x_min, self.y_min],
            [self.x_min, self.y_max],
            [self.x_max, self.y_min],
            [self.x_max, self.y_max],
        ]
    }

    pub fn sample(&self, rng: &mut crate::numkit::StreamRng) -> [f64; 2] {
        [
            rng.uniform(self.x_min, self.x_max),
            rng.uniform(self.y_min, self.y_max),
        ]
    }

    /// Cell index of `p` in a `cells x cells` grid, if inside.
    pub fn grid_cell(&self, p: &[f64], cells: usize) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let fx = (p[0] - self.x_min) / (self.x_max - self.x_min);
        let fy = (p[1] - self.y_min) / (self.y_max - self.y_min);
        let cx = ((fx * cells as f64) as usize).min(cells - 1);
        let cy = ((fy * cells as f64) as usize).min(cells - 1);
        Some((cx, cy))
    }

    /// Number of occupied cells of a `cells x cells` grid.
    pub fn coverage(&self, points: &Matrix, cells: usize) -> usize {
        let mut hit = vec![false; cells * cells];
        for p in points.iter_rows() {
            if let Some((cx, cy)) = self.grid_cell(p, cells) {
                hit[cx * cells + cy] = true;
            }
        }
        hit.iter().filter(|h| **h).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub kind: ExeKind,
    /// Seconds per step.
    pub dt: f64,
    /// Timesteps per trajectory (T).
    pub steps: usize,
    pub goal_region: Region,
    /// Bound on every action entry.
    pub action_limit: f64,
}

impl Environment {
    pub fn linear() -> Self {
        Self {
            kind: ExeKind::LinearIntegrator,
            dt: 0.1,
            steps: 20,
            goal_region: Region::default(),
            action_limit: 1.5,
        }
    }

    pub fn arm() -> Self {
        Self {
            kind: ExeKind::TwoLinkArm { l1: 0.8, l2: 0.8 },
            dt: 0.1,
            steps: 20,
            goal_region: Region::default(),
            action_limit: 3.0,
        }
    }

    pub fn traj_len(&self) -> usize {
        self.steps * CHANNELS
    }

    pub fn validate(&self) -> Result<()> {
        self.goal_region.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) || self.steps == 0 {
            return Err(Error::Config("dt and steps must be positive".into()));
        }
        if !(self.action_limit > 0.0) {
            return Err(Error::Config("action_limit must be positive".into()));
        }
        if let ExeKind::TwoLinkArm { l1, l2 } = self.kind {
            if !(l1 > 0.0 && l2 > 0.0) {
                return Err(Error::Config("link lengths must be positive".into()));
            }
            let inner = (l1 - l2).abs();
            let outer = l1 + l2;
            for c in self.goal_region.corners() {
                let r = c[0].hypot(c[1]);
                if r > outer {
                    return Err(Error::Config(format!(
                        "goal region corner {c:?} outside reach {outer}"
                    )));
                }
            }
            // closest point of the rectangle to the origin
            let cx = 0.0f64.clamp(self.goal_region.x_min, self.goal_region.x_max);
            let cy = 0.0f64.clamp(self.goal_region.y_min, self.goal_region.y_max);
            if cx.hypot(cy) < inner {
                return Err(Error::Config(format!(
                    "goal region intersects the unreachable disc of radius {inner}"
                )));
            }
        }
        Ok(())
    }

    /// End state of a flattened trajectory.
    pub fn exe(&self, actions: &[f64]) -> Result<[f64; 2]> {
        ensure!(
            actions.len() == self.traj_len(),
            "trajectory length {} != {} steps x {} channels",
            actions.len(),
            self.steps,
            CHANNELS
        );
        let mut acc = [0.0, 0.0];
        for u in actions.chunks_exact(CHANNELS) {
            acc[0] += u[0];
            acc[1] += u[1];
        }
        let q = [self.dt * acc[0], self.dt * acc[1]];
        Ok(match self.kind {
            ExeKind::LinearIntegrator => q,
            ExeKind::TwoLinkArm { l1, l2 } => forward_kinematics(l1, l2, q),
        })
    }

    /// Rows of `trajs` executed to a `n x 2` end-state matrix.
    pub fn exe_batch(&self, trajs: &Matrix) -> Result<Matrix> {
        ensure!(
            trajs.cols() == self.traj_len(),
            "trajectory width {} != {}",
            trajs.cols(),
            self.traj_len()
        );
        let mut out = Matrix::zeros(trajs.rows(), END_STATE_DIM);
        for (i, r) in trajs.iter_rows().enumerate() {
            let s = self.exe(r)?;
            out.row_mut(i).copy_from_slice(&s);
        }
        Ok(out)
    }

    pub fn terminal_reward(&self, goal: &GoalState, actions: &[f64]) -> Result<f64> {
        let s = self.exe(actions)?;
        Ok(reward_from_end_state(&s, goal))
    }

    pub fn sample_goal(&self, rng: &mut crate::numkit::StreamRng) -> GoalState {
        GoalState {
            target: self.goal_region.sample(rng),
        }
    }

    /// Bell-shaped per-step weights `sin²(π(t+½)/T)`; they sum to `T/2`.
    pub fn bell_profile(&self) -> Vec<f64> {
        let t_f = self.steps as f64;
        (0..self.steps)
            .map(|t| (std::f64::consts::PI * (t as f64 + 0.5) / t_f).sin().powi(2))
            .collect()
    }

    /// Smooth trajectory whose integrated coordinates equal `q` exactly.
    pub fn bell_trajectory(&self, q: [f64; 2]) -> Vec<f64> {
        let w = self.bell_profile();
        let total: f64 = w.iter().sum();
        let mut out = Vec::with_capacity(self.traj_len());
        for wt in &w {
            let f = wt / (self.dt * total);
            out.push(q[0] * f);
            out.push(q[1] * f);
        }
        out
    }

    /// Integrated coordinates that reach `goal`: the goal itself for the
    /// integrator, elbow-down inverse kinematics for the arm.
    pub fn coordinates_for(&self, goal: [f64; 2]) -> Option<[f64; 2]> {
        match self.kind {
            ExeKind::LinearIntegrator => Some(goal),
            ExeKind::TwoLinkArm { l1, l2 } => inverse_kinematics(l1, l2, goal),
        }
    }
}

pub fn forward_kinematics(l1: f64, l2: f64, q: [f64; 2]) -> [f64; 2] {
    let a = q[0];
    let b = q[0] + q[1];
    [l1 * a.cos() + l2 * b.cos(), l1 * a.sin() + l2 * b.sin()]
}

/// Elbow-down branch (`θ₂ ∈ [0, π]`); `None` outside the reachable annulus.
pub fn inverse_kinematics(l1: f64, l2: f64, p: [f64; 2]) -> Option<[f64; 2]> {
    let d2 = p[0] * p[0] + p[1] * p[1];
    let c2 = (d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    if !(-1.0..=1.0).contains(&c2) {
        return None;
    }
    let t2 = c2.acos();
    let t1 = p[1].atan2(p[0]) - (l2 * t2.sin()).atan2(l1 + l2 * t2.cos());
    Some([t1, t2])
}

pub fn reward_from_end_state(s: &[f64], goal: &GoalState) -> f64 {
    -(s[0] - goal.target[0]).hypot(s[1] - goal.target[1])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalState {
    pub target: [f64; 2],
}

/// Single trajectory with its shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: usize,
    pub actions: Vec<f64>,
}

impl Trajectory {
    pub fn new(steps: usize, actions: Vec<f64>) -> Result<Self> {
        ensure!(
            actions.len() == steps * CHANNELS,
            "trajectory length {} != {}x{}",
            actions.len(),
            steps,
            CHANNELS
        );
        Ok(Self { steps, actions })
    }

    pub fn action(&self, t: usize, m: usize) -> f64 {
        self.actions[t * CHANNELS + m]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub noise_scale: f64,
    pub count: usize,
    pub env: Environment,
}

/// Demonstrations with cached end states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetFile", into = "DatasetFile")]
pub struct TrajectoryDataset {
    pub manifest: DatasetManifest,
    /// `count x (T·M)`, flattened.
    pub trajectories: Matrix,
    /// `count x 2`.
    pub end_states: Matrix,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    manifest: DatasetManifest,
    /// `[count][T][M]`
    trajectories: Vec<Vec<Vec<f64>>>,
    end_states: Matrix,
}

impl From<TrajectoryDataset> for DatasetFile {
    fn from(d: TrajectoryDataset) -> Self {
        let trajectories = d
            .trajectories
            .iter_rows()
            .map(|r| r.chunks_exact(CHANNELS).map(<[f64]>::to_vec).collect())
            .collect();
        DatasetFile {
            manifest: d.manifest,
            trajectories,
            end_states: d.end_states,
        }
    }
}

impl TryFrom<DatasetFile> for TrajectoryDataset {
    type Error = Error;
    fn try_from(f: DatasetFile) -> Result<Self> {
        let flat: Vec<Vec<f64>> = f.trajectories.into_iter().map(|t| t.concat()).collect();
        let trajectories = if flat.is_empty() {
            Matrix::zeros(0, f.manifest.env.traj_len())
        } else {
            Matrix::from_rows(&flat)?
        };
        let d = TrajectoryDataset {
            manifest: f.manifest,
            trajectories,
            end_states: f.end_states,
        };
        d.check_consistency(1e-9)?;
        Ok(d)
    }
}

impl TrajectoryDataset {
    /// Builds a dataset from trajectories, computing end states.
    pub fn from_trajectories(manifest: DatasetManifest, trajectories: Matrix) -> Result<Self> {
        let end_states = manifest.env.exe_batch(&trajectories)?;
        Ok(Self {
            manifest,
            trajectories,
            end_states,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn env(&self) -> &Environment {
        &self.manifest.env
    }

    /// Verifies cached end states against re-execution.
    pub fn check_consistency(&self, tol: f64) -> Result<()> {
        let env = &self.manifest.env;
        ensure!(
            self.trajectories.cols() == env.traj_len(),
            "dataset trajectory width {} != {}",
            self.trajectories.cols(),
            env.traj_len()
        );
        ensure!(
            self.end_states.rows() == self.trajectories.rows(),
            "dataset has {} end states for {} trajectories",
            self.end_states.rows(),
            self.trajectories.rows()
        );
        for (i, r) in self.trajectories.iter_rows().enumerate() {
            let s = env.exe(r)?;
            let c = self.end_states.row(i);
            ensure!(
                (s[0] - c[0]).abs() <= tol && (s[1] - c[1]).abs() <= tol,
                "cached end state {} disagrees with execution",
                i
            );
        }
        Ok(())
    }

    /// Subset by row indices (manifest count updated).
    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut manifest = self.manifest.clone();
        manifest.count = idx.len();
        Self {
            manifest,
            trajectories: self.trajectories.select_rows(idx),
            end_states: self.end_states.select_rows(idx),
        }
    }

    pub fn end_states_csv(&self) -> String {
        let mut s = String::from("index,x,y\n");
        for (i, r) in self.end_states.iter_rows().enumerate() {
            s.push_str(&format!("{},{},{}\n", i, r[0], r[1]));
        }
        s
    }
}

/// Number of cosine basis terms perturbed in demonstrations.
pub const NOISE_BASIS: usize = 3;

/// Region-covering demonstrations.
///
/// For each demo a goal is drawn uniformly from the goal region, mapped to
/// integrated coordinates (the goal itself, or joint angles via IK), and
/// realized with the bell profile. Each channel is then perturbed by
/// `Σ_k c_k cos(πk(t+½)/T)` for `k < 3`, `c_k ~ N(0, noise_scale²)`, and
/// clipped to `±action_limit`. Demo `i` only consumes stream `rng.child(i)`.
pub fn gen_demos(
    env: &Environment,
    count: usize,
    rng: &RngStream,
    noise_scale: f64,
) -> Result<TrajectoryDataset> {
    env.validate()?;
    if count == 0 {
        return Err(Error::Config("count must be at least 1".into()));
    }
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::Config("noise_scale must be non-negative".into()));
    }
    let t_f = env.steps as f64;
    let mut rows = Vec::with_capacity(count);
    for i in 0..count {
        let mut r = rng.child(i as u64).rng();
        let q = loop {
            let goal = env.goal_region.sample(&mut r);
            if let Some(q) = env.coordinates_for(goal) {
                break q;
            }
        };
        let mut traj = env.bell_trajectory(q);
        if noise_scale > 0.0 {
            for m in 0..CHANNELS {
                let coeffs: Vec<f64> = (0..NOISE_BASIS).map(|_| noise_scale * r.normal()).collect();
                for t in 0..env.steps {
                    let phase = std::f64::consts::PI * (t as f64 + 0.5) / t_f;
                    let delta: f64 = coeffs
                        .iter()
                        .enumerate()
                        .map(|(k, c)| c * (k as f64 * phase).cos())
                        .sum();
                    traj[t * CHANNELS + m] += delta;
                }
            }
        }
        for a in &mut traj {
            *a = a.clamp(-env.action_limit, env.action_limit);
        }
        rows.push(traj);
    }
    let trajectories = Matrix::from_rows(&rows)?;
    let manifest = DatasetManifest {
        seed: rng.seed,
        noise_scale,
        count,
        env: env.clone(),
    };
    TrajectoryDataset::from_trajectories(manifest, trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_zero_and_constant() {
        let env = Environment::linear();
        assert_eq!(env.exe(&vec![0.0; 40]).unwrap(), [0.0, 0.0]);
        let u: Vec<f64> = (0..20).flat_map(|_| [0.5, -0.25]).collect();
        let s = env.exe(&u).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12 && (s[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn straight_arm() {
        let mut env = Environment::arm();
        env.kind = ExeKind::TwoLinkArm { l1: 0.5, l2: 0.5 };
        let s = env.exe(&vec![0.0; 40]).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15 && s[1].abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        assert!(Environment::linear().exe(&[0.0; 39]).is_err());
    }

    #[test]
    fn reward_examples() {
        let g = GoalState { target: [1.0, 1.0] };
        assert_eq!(reward_from_end_state(&[1.0, 0.0], &g), -1.0);
        let env = Environment::linear();
        let hit = env.bell_trajectory([1.0, 0.25]);
        let g2 = GoalState { target: [1.0, 0.25] };
        assert!(env.terminal_reward(&g2, &hit).unwrap().abs() < 1e-12);
    }

    #[test]
    fn ik_round_trip() {
        for p in Region::default().corners() {
            let q = inverse_kinematics(0.8, 0.8, p).unwrap();
            let back = forward_kinematics(0.8, 0.8, q);
            assert!((back[0] - p[0]).abs() < 1e-12 && (back[1] - p[1]).abs() < 1e-12);
            assert!(q[1] >= 0.0);
        }
        assert!(inverse_kinematics(0.5, 0.5, [2.0, 0.0]).is_none());
    }

    #[test]
    fn arm_region_must_be_reachable() {
        let mut env = Environment::arm();
        env.kind = ExeKind::TwoLinkArm { l1: 0.5, l2: 0.5 };
        assert!(env.validate().is_err());
        assert!(Environment::arm().validate().is_ok());
    }

    #[test]
    fn noiseless_demos_hit_goals() {
        for env in [Environment::linear(), Environment::arm()] {
            let d = gen_demos(&env, 50, &RngStream::new(3), 0.0).unwrap();
            for i in 0..50 {
                let mut r = RngStream::new(3).child(i as u64).rng();
                let g = loop {
                    let g = env.goal_region.sample(&mut r);
                    if env.coordinates_for(g).is_some() {
                        break g;
                    }
                };
                let s = d.end_states.row(i);
                assert!((s[0] - g[0]).abs() < 1e-9 && (s[1] - g[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn demos_respect_action_limit() {
        let env = Environment::arm();
        let d = gen_demos(&env, 200, &RngStream::new(5), 0.3).unwrap();
        assert!(d
            .trajectories
            .as_slice()
            .iter()
            .all(|a| a.abs() <= env.action_limit));
        d.check_consistency(1e-9).unwrap();
    }

    #[test]
    fn bad_inputs() {
        assert!(gen_demos(&Environment::linear(), 0, &RngStream::new(0), 0.1).is_err());
        let mut env = Environment::linear();
        env.goal_region.x_max = env.goal_region.x_min;
        assert!(gen_demos(&env, 5, &RngStream::new(0), 0.1).is_err());
    }
}
