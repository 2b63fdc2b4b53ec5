//! Scenario generator with ground-truth groups and activities.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activity::Activity;
use crate::error::{Error, Result};
use crate::grouping::GroupPartition;
use crate::scalar::Scalar;
use crate::tracks::{distance, AgentId, Frame, TrackSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Stationary,
    Walking,
    Approaching,
    Splitting,
}

impl Pattern {
    pub fn activity(self) -> Activity {
        match self {
            Pattern::Stationary => Activity::Stationary,
            Pattern::Walking => Activity::Walking,
            Pattern::Approaching => Activity::Approaching,
            Pattern::Splitting => Activity::Splitting,
        }
    }
}

fn default_spacing() -> f64 {
    1.0
}

fn default_axis() -> [f64; 2] {
    [1.0, 0.0]
}

/// One group of a scenario.
///
/// Members start on a square grid with `spacing` around `anchor`. Walking
/// groups translate by `velocity` per frame. In an approaching group member 0
/// stays at `anchor` and the others close their offset to it by the factor
/// `rate` per frame. A splitting group lies on a line along `axis` through
/// `anchor` and its offsets grow by `rate` per frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub size: usize,
    pub pattern: Pattern,
    pub anchor: [f64; 2],
    #[serde(default)]
    pub velocity: [f64; 2],
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default = "default_axis")]
    pub axis: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub groups: Vec<GroupSpec>,
    pub frames: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// When set, agents of different groups must stay at least this far apart
    /// (before noise) in every frame.
    #[serde(default)]
    pub isolation_radius: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupTruth {
    pub members: Vec<AgentId>,
    pub label: Activity,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundTruth {
    pub partition: GroupPartition,
    pub activities: Vec<GroupTruth>,
}

#[derive(Clone, Debug)]
pub struct LabeledScene<T: Scalar> {
    pub tracks: TrackSet<T>,
    /// Noise-free positions, indexed `[agent][frame]` in agent-id order.
    pub clean: Vec<Vec<[f64; 2]>>,
    pub truth: GroundTruth,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() || self.groups.iter().any(|g| g.size == 0) {
            return Err(Error::Scenario("every scenario needs at least one non-empty group".into()));
        }
        if self.frames < 2 {
            return Err(Error::Scenario("at least 2 frames are required".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Scenario("noise_sigma must be finite and non-negative".into()));
        }
        for (i, g) in self.groups.iter().enumerate() {
            let finite = g.anchor.iter().chain(&g.velocity).chain(&g.axis).all(|v| v.is_finite()) && g.spacing.is_finite();
            if !finite || g.spacing <= 0.0 {
                return Err(Error::Scenario(format!("group {i}: positions and spacing must be finite, spacing > 0")));
            }
            match (g.pattern, g.rate) {
                (Pattern::Approaching, Some(r)) if r > 0.0 && r < 1.0 => {}
                (Pattern::Approaching, r) => {
                    return Err(Error::Scenario(format!("group {i}: approaching rate must lie in (0, 1), got {r:?}")))
                }
                (Pattern::Splitting, Some(r)) if r > 1.0 && r.is_finite() => {}
                (Pattern::Splitting, r) => {
                    return Err(Error::Scenario(format!("group {i}: splitting rate must exceed 1, got {r:?}")))
                }
                _ => {}
            }
            if g.pattern == Pattern::Splitting && g.axis[0].hypot(g.axis[1]) == 0.0 {
                return Err(Error::Scenario(format!("group {i}: splitting axis must be non-zero")));
            }
        }
        Ok(())
    }
}

fn grid_slot(i: usize, size: usize, spacing: f64) -> [f64; 2] {
    let cols = (size as f64).sqrt().ceil() as usize;
    [(i % cols) as f64 * spacing, (i / cols) as f64 * spacing]
}

/// Noise-free position of member `i` of `g` at frame `k`.
pub fn member_position(g: &GroupSpec, i: usize, k: usize) -> [f64; 2] {
    let kf = k as f64;
    let [ax, ay] = g.anchor;
    match g.pattern {
        Pattern::Stationary => {
            let s = grid_slot(i, g.size, g.spacing);
            [ax + s[0], ay + s[1]]
        }
        Pattern::Walking => {
            let s = grid_slot(i, g.size, g.spacing);
            [ax + s[0] + kf * g.velocity[0], ay + s[1] + kf * g.velocity[1]]
        }
        Pattern::Approaching => {
            let rho = g.rate.unwrap_or(0.5).powi(k as i32);
            // member 0 is the fixed target; the rest start on the grid around it
            let s = grid_slot(i, g.size, g.spacing);
            let start = [ax + s[0] + g.spacing, ay + s[1] + g.spacing];
            if i == 0 {
                [ax, ay]
            } else {
                [ax - (ax - start[0]) * rho, ay - (ay - start[1]) * rho]
            }
        }
        Pattern::Splitting => {
            let rho = g.rate.unwrap_or(1.0).powi(k as i32);
            let norm = g.axis[0].hypot(g.axis[1]);
            let dir = [g.axis[0] / norm, g.axis[1] / norm];
            let offset = (i as f64 - (g.size as f64 - 1.0) / 2.0) * g.spacing * rho;
            [ax + dir[0] * offset, ay + dir[1] * offset]
        }
    }
}

/// Builds a scene. Agent ids run from 1 in group order; all agents span every frame.
pub fn generate<T: Scalar>(spec: &ScenarioSpec) -> Result<LabeledScene<T>> {
    spec.validate()?;
    let mut clean = Vec::new();
    let mut groups = Vec::new();
    let mut activities = Vec::new();
    let mut owner = Vec::new();
    for (gi, g) in spec.groups.iter().enumerate() {
        let mut members = Vec::new();
        for i in 0..g.size {
            let id = AgentId(clean.len() as u32 + 1);
            clean.push((0..spec.frames).map(|k| member_position(g, i, k)).collect::<Vec<_>>());
            owner.push(gi);
            members.push(id);
        }
        activities.push(GroupTruth { members: members.clone(), label: g.pattern.activity() });
        groups.push(members);
    }
    if let Some(radius) = spec.isolation_radius {
        for a in 0..clean.len() {
            for b in a + 1..clean.len() {
                if owner[a] == owner[b] {
                    continue;
                }
                for k in 0..spec.frames {
                    if distance(clean[a][k], clean[b][k]) < radius {
                        return Err(Error::Scenario(format!(
                            "agents {} and {} come within {radius} at frame {k}",
                            a + 1,
                            b + 1
                        )));
                    }
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Scenario(e.to_string()))?;
    let mut observations = Vec::with_capacity(clean.len() * spec.frames);
    for (a, path) in clean.iter().enumerate() {
        for (k, p) in path.iter().enumerate() {
            let (nx, ny) = if spec.noise_sigma > 0.0 { (noise.sample(&mut rng), noise.sample(&mut rng)) } else { (0.0, 0.0) };
            observations.push((k as Frame, AgentId(a as u32 + 1), T::lit(p[0] + nx), T::lit(p[1] + ny)));
        }
    }
    let tracks = TrackSet::from_observations(observations)?;
    let partition = GroupPartition::from_groups(spec.frames as Frame - 1, &groups)?;
    Ok(LabeledScene { tracks, clean, truth: GroundTruth { partition, activities } })
}
