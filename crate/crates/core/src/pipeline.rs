//! End-to-end analysis of a track set at regularly spaced instants.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activity::{classify_groups, Activity, ActivityBands, ActivityReport, AtomicActivity};
use crate::dynamics::DynamicsConfig;
use crate::error::{Error, Result};
use crate::estimator::{estimate_scene, EstimatorConfig, SceneModel};
use crate::features::{extract_features, mean_features, CrowdFeatures, FeatureConfig};
use crate::forest::ForestConfig;
use crate::grouping::{detect_groups, GroupPartition, GroupingConfig};
use crate::scalar::Scalar;
use crate::tracks::{AgentId, Frame, TrackSet};

/// Every tunable of the pipeline. Estimator keys (`L`, `r1`, `r2`, neighbor
/// settings and the `[solver]` table) sit at the top level of the TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct PipelineConfig<T> {
    #[serde(flatten)]
    pub estimator: EstimatorConfig<T>,
    pub grouping: GroupingConfig<T>,
    pub bands: ActivityBands<T>,
    pub dynamics: DynamicsConfig<T>,
    pub features: FeatureConfig<T>,
    pub forest: ForestConfig,
    /// Frames between consecutive evaluation instants.
    pub stride: usize,
}

impl<T: Scalar> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self {
            estimator: EstimatorConfig::default(),
            grouping: GroupingConfig::default(),
            bands: ActivityBands::default(),
            dynamics: DynamicsConfig::default(),
            features: FeatureConfig::default(),
            forest: ForestConfig::default(),
            stride: 10,
        }
    }
}

impl<T: Scalar> PipelineConfig<T> {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let config: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        self.grouping.validate()?;
        self.bands.validate()?;
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        self.forest.validate(crate::features::FEATURE_LEN)
    }
}

/// Instants `first + k * stride - 1` (k >= 1) that have a full window of history.
pub fn evaluation_frames<T: Scalar>(tracks: &TrackSet<T>, window: usize, stride: usize) -> Vec<Frame> {
    let first = tracks.first_frame() as usize;
    let last = tracks.last_frame() as usize;
    let earliest = first + window.max(1) - 1;
    (1..)
        .map(|k| first + k * stride.max(1) - 1)
        .take_while(|&n| n <= last)
        .filter(|&n| n >= earliest)
        .map(|n| n as Frame)
        .collect()
}

/// Everything computed for one instant.
#[derive(Clone, Debug)]
pub struct Instant<T: Scalar> {
    pub scene: SceneModel<T>,
    pub partition: GroupPartition,
    pub report: ActivityReport<T>,
    pub features: CrowdFeatures<T>,
}

pub fn analyze_instant<T: Scalar>(
    tracks: &TrackSet<T>,
    frame: Frame,
    prev: Option<&SceneModel<T>>,
    config: &PipelineConfig<T>,
) -> Result<Instant<T>> {
    let scene = estimate_scene(tracks, frame, prev, &config.estimator)?;
    let partition = detect_groups(&scene, &config.grouping, &config.dynamics)?;
    let report = classify_groups(tracks, &partition, &config.estimator, &config.bands, &config.dynamics)?;
    let features = extract_features(tracks, &partition, &report, &config.features)?;
    Ok(Instant { scene, partition, report, features })
}

/// Runs every evaluation instant in order, chaining each scene model into the
/// next estimate, and hands each result to `sink`. Stops at the first error.
pub fn analyze<T, F>(tracks: &TrackSet<T>, config: &PipelineConfig<T>, mut sink: F) -> Result<usize>
where
    T: Scalar,
    F: FnMut(Instant<T>) -> Result<()>,
{
    config.validate()?;
    let frames = evaluation_frames(tracks, config.estimator.window, config.stride);
    if frames.is_empty() {
        return Err(Error::InsufficientData("no evaluation instants".into()));
    }
    let mut prev: Option<SceneModel<T>> = None;
    for &n in &frames {
        let instant = analyze_instant(tracks, n, prev.as_ref(), config)?;
        prev = Some(instant.scene.clone());
        sink(instant)?;
    }
    Ok(frames.len())
}

/// Mean feature vector over all evaluation instants of a scene.
pub fn scene_features<T: Scalar>(tracks: &TrackSet<T>, config: &PipelineConfig<T>) -> Result<Vec<T>> {
    let mut all = Vec::new();
    analyze(tracks, config, |i| {
        all.push(i.features);
        Ok(())
    })?;
    mean_features(&all)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub members: Vec<AgentId>,
    pub mu_x: Option<f64>,
    pub mu_y: Option<f64>,
    pub label: Activity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicRecord {
    pub agent: AgentId,
    pub label: AtomicActivity,
}

/// One JSON Lines record of `analyze` output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstantRecord {
    pub frame: Frame,
    pub excluded: Vec<AgentId>,
    pub groups: Vec<GroupRecord>,
    pub atomic: Vec<AtomicRecord>,
}

impl<T: Scalar> From<&Instant<T>> for InstantRecord {
    fn from(i: &Instant<T>) -> Self {
        InstantRecord {
            frame: i.report.frame,
            excluded: i.scene.excluded.clone(),
            groups: i
                .report
                .groups
                .iter()
                .map(|g| GroupRecord {
                    members: g.members.clone(),
                    mu_x: g.mu[0].map(|m| m.as_f64()),
                    mu_y: g.mu[1].map(|m| m.as_f64()),
                    label: g.label,
                })
                .collect(),
            atomic: i.report.atomic.iter().map(|a| AtomicRecord { agent: a.agent, label: a.label }).collect(),
        }
    }
}
