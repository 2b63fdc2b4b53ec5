//! Scene builders shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use crowd_core::synthesis::{generate, GroupSpec, LabeledScene, Pattern, ScenarioSpec};
use crowd_core::tracks::TrackSet;
use crowd_core::{AgentId, Frame};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn group(pattern: Pattern, size: usize, anchor: [f64; 2]) -> GroupSpec {
    GroupSpec { size, pattern, anchor, velocity: [0.0, 0.0], rate: None, spacing: 1.0, axis: [1.0, 0.0] }
}

/// `k` groups of mixed stationary, walking and approaching members, one per
/// horizontal lane 20 units apart so no two groups ever come within the
/// default neighbor radius. At most 15 agents in total.
pub fn mixed_scene(seed: u64, k: usize, sigma: f64, frames: usize) -> LabeledScene<f64> {
    let mut r = rng(seed ^ 0x5eed);
    let mut groups = Vec::new();
    let budget = 15 / k;
    for g in 0..k {
        let size = r.gen_range(2..=budget.min(5));
        let anchor = [r.gen_range(-2.0..2.0), 20.0 * g as f64];
        let pattern = match r.gen_range(0..3) {
            0 => Pattern::Stationary,
            1 => Pattern::Walking,
            _ => Pattern::Approaching,
        };
        let mut spec = group(pattern, size, anchor);
        match pattern {
            Pattern::Walking => {
                let speed = r.gen_range(0.5..1.5) * if r.gen_bool(0.5) { 1.0 } else { -1.0 };
                spec.velocity = [speed, 0.0];
            }
            Pattern::Approaching => spec.rate = Some(r.gen_range(0.7..0.85)),
            _ => {}
        }
        groups.push(spec);
    }
    let spec = ScenarioSpec { groups, frames, noise_sigma: sigma, seed, isolation_radius: Some(6.0) };
    generate(&spec).expect("lanes keep groups apart")
}

/// Iterates `x(k+1) = A x(k) + a` from `x0` for both axes and packs the result as tracks.
pub fn tracks_from_models(
    models: [(&DMatrix<f64>, &DVector<f64>, &DVector<f64>); 2],
    frames: usize,
) -> TrackSet<f64> {
    let n = models[0].0.nrows();
    let mut paths: Vec<Vec<[f64; 2]>> = vec![Vec::with_capacity(frames); n];
    let mut states = [models[0].2.clone(), models[1].2.clone()];
    for _ in 0..frames {
        for (i, path) in paths.iter_mut().enumerate() {
            path.push([states[0][i], states[1][i]]);
        }
        for ax in 0..2 {
            states[ax] = models[ax].0 * &states[ax] + models[ax].1;
        }
    }
    let map: BTreeMap<AgentId, (Frame, Vec<[f64; 2]>)> =
        paths.into_iter().enumerate().map(|(i, p)| (AgentId(i as u32 + 1), (0, p))).collect();
    TrackSet::from_tracks(map).unwrap()
}

/// Adds i.i.d. Gaussian noise to every coordinate.
pub fn with_noise(tracks: &TrackSet<f64>, sigma: f64, seed: u64) -> TrackSet<f64> {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut r = rng(seed);
    let obs: Vec<_> = tracks
        .observations()
        .into_iter()
        .map(|o| (o.frame, AgentId(o.agent_id), o.x + normal.sample(&mut r), o.y + normal.sample(&mut r)))
        .collect();
    TrackSet::from_observations(obs).unwrap()
}

/// Adds an independent Gaussian random walk to every clean path, so the
/// perturbations accumulate over time instead of being redrawn each frame.
pub fn with_drift(clean: &[Vec<[f64; 2]>], sigma: f64, seed: u64) -> TrackSet<f64> {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut r = rng(seed);
    let mut obs = Vec::new();
    for (i, path) in clean.iter().enumerate() {
        let mut offset = [0.0, 0.0];
        for (k, p) in path.iter().enumerate() {
            obs.push((k as Frame, AgentId(i as u32 + 1), p[0] + offset[0], p[1] + offset[1]));
            offset[0] += normal.sample(&mut r);
            offset[1] += normal.sample(&mut r);
        }
    }
    TrackSet::from_observations(obs).unwrap()
}
