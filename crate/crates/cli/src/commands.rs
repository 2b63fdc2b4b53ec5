use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use crowd_core::estimator::{validation_curve, ErrorAxis};
use crowd_core::features::{read_dataset, CrowdClass, FEATURE_LEN, NUM_CLASSES};
use crowd_core::forest::{train, Forest};
use crowd_core::metrics::{nmi, purity, rand_index, score_activities, ActivityScore};
use crowd_core::pipeline::{analyze, scene_features, InstantRecord, PipelineConfig};
use crowd_core::synthesis::{generate, GroundTruth, ScenarioSpec};
use crowd_core::tracks::{TrackFormat, TrackSet};
use crowd_core::{Activity, AgentId, GroupPartition};
use serde::Serialize;

use crate::{AxisArg, Cli, Command, Format};

pub fn run(cli: Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref())?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Analyze { tracks } => cmd_analyze(&tracks, &config, out),
        Command::Classify { forest, features, tracks } => {
            cmd_classify(features.as_deref(), &tracks, &forest, &config, out)
        }
        Command::TrainForest { dataset } => cmd_train_forest(&dataset, &config, cli.seed.unwrap_or(0), out),
        Command::Synth { scenario, format } => {
            let out = out.context("synth needs --out (the ground truth goes next to it)")?;
            cmd_synth(&scenario, cli.seed, format, out)
        }
        Command::Eval { tracks, truth } => cmd_eval(&tracks, &truth, &config, out),
        Command::Validate { tracks, k_max, axis } => cmd_validate(&tracks, &config, k_max, axis, out),
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig<f64>> {
    match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(PipelineConfig::default()),
    }
}

fn track_format(path: &Path) -> TrackFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("json") => TrackFormat::Json,
        _ => TrackFormat::Csv,
    }
}

fn load_tracks(path: &Path) -> Result<TrackSet<f64>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    TrackSet::load(io::BufReader::new(file), track_format(path)).with_context(|| format!("reading {}", path.display()))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Writes a fully rendered document in one go, so a failed command leaves no output file behind.
fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    let mut w = open_output(path)?;
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

/// Final line of an `analyze` stream that stopped early.
#[derive(Serialize)]
struct Truncated {
    truncated: bool,
    error: String,
}

fn cmd_analyze(tracks: &Path, config: &PipelineConfig<f64>, out: Option<&Path>) -> Result<()> {
    let tracks = load_tracks(tracks)?;
    let mut w = open_output(out)?;
    let result = analyze(&tracks, config, |instant| {
        serde_json::to_writer(&mut w, &InstantRecord::from(&instant))?;
        w.write_all(b"\n")?;
        Ok(())
    });
    if let Err(e) = result {
        serde_json::to_writer(&mut w, &Truncated { truncated: true, error: e.to_string() })?;
        w.write_all(b"\n")?;
        w.flush()?;
        return Err(e.into());
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ClassifyRecord {
    source: String,
    class: CrowdClass,
    votes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<CrowdClass>,
}

fn load_forest(path: &Path) -> Result<Forest<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading forest {}", path.display()))?;
    let forest = Forest::from_json(&text).with_context(|| format!("parsing forest {}", path.display()))?;
    if forest.num_features != FEATURE_LEN {
        bail!("forest was trained on {} features, expected {FEATURE_LEN}", forest.num_features);
    }
    Ok(forest)
}

fn cmd_classify(
    features: Option<&Path>,
    tracks: &[PathBuf],
    forest: &Path,
    config: &PipelineConfig<f64>,
    out: Option<&Path>,
) -> Result<()> {
    let forest = load_forest(forest)?;
    let mut inputs: Vec<(String, Vec<f64>, Option<CrowdClass>)> = Vec::new();
    if let Some(path) = features {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let rows = read_dataset::<f64, _>(io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
        inputs.extend(rows.into_iter().enumerate().map(|(i, (x, label))| (format!("row {}", i + 1), x, label)));
    }
    for path in tracks {
        let x = scene_features(&load_tracks(path)?, config).with_context(|| format!("analyzing {}", path.display()))?;
        inputs.push((path.display().to_string(), x, None));
    }
    let mut buf = Vec::new();
    for (source, x, truth) in inputs {
        let p = forest.predict(&x).with_context(|| format!("classifying {source}"))?;
        let class = CrowdClass::new(p.class)?;
        serde_json::to_writer(&mut buf, &ClassifyRecord { source, class, votes: p.votes, truth })?;
        buf.push(b'\n');
    }
    write_output(out, &buf)
}

fn cmd_train_forest(dataset: &Path, config: &PipelineConfig<f64>, seed: u64, out: Option<&Path>) -> Result<()> {
    let file = File::open(dataset).with_context(|| format!("opening {}", dataset.display()))?;
    let rows = read_dataset::<f64, _>(io::BufReader::new(file)).with_context(|| format!("reading {}", dataset.display()))?;
    let mut samples = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (i, (x, label)) in rows.into_iter().enumerate() {
        let label = label.with_context(|| format!("row {} has no class label", i + 1))?;
        samples.push(x);
        labels.push(label.index());
    }
    let forest = train(&samples, &labels, NUM_CLASSES, &config.forest, seed)?;
    if let Some(e) = forest.oob_error {
        eprintln!("out-of-bag error: {e:.4}");
    }
    let mut text = serde_json::to_string_pretty(&forest)?;
    text.push('\n');
    write_output(out, text.as_bytes())
}

fn truth_path(out: &Path) -> PathBuf {
    let mut name = OsString::from(out.as_os_str());
    name.push(".truth.json");
    PathBuf::from(name)
}

fn cmd_synth(scenario: &Path, seed: Option<u64>, format: Format, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(scenario).with_context(|| format!("reading {}", scenario.display()))?;
    let mut spec: ScenarioSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing scenario {}", scenario.display()))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let scene = generate::<f64>(&spec)?;
    let format = match format {
        Format::Csv => TrackFormat::Csv,
        Format::Json => TrackFormat::Json,
    };
    let mut tracks = Vec::new();
    scene.tracks.save(&mut tracks, format)?;
    let mut truth = serde_json::to_string_pretty(&scene.truth)?;
    truth.push('\n');
    write_output(Some(out), &tracks)?;
    write_output(Some(&truth_path(out)), truth.as_bytes())
}

#[derive(Serialize)]
struct InstantScore {
    frame: u32,
    nmi: f64,
    purity: f64,
    rand_index: f64,
}

#[derive(Serialize)]
struct Means {
    nmi: f64,
    purity: f64,
    rand_index: f64,
}

#[derive(Serialize)]
struct EvalReport {
    instants: Vec<InstantScore>,
    mean: Means,
    /// Per-agent activity agreement over agents that belong to a detected group.
    #[serde(skip_serializing_if = "Option::is_none")]
    activity: Option<ActivityScore>,
}

/// Ground truth limited to the agents that the detector saw.
fn restrict(truth: &GroupPartition, agents: &[AgentId], frame: u32) -> Result<GroupPartition> {
    let keep: BTreeSet<AgentId> = agents.iter().copied().collect();
    let groups: Vec<Vec<AgentId>> = truth
        .groups()
        .into_iter()
        .map(|g| g.into_iter().filter(|a| keep.contains(a)).collect::<Vec<_>>())
        .filter(|g| !g.is_empty())
        .collect();
    let restricted = GroupPartition::from_groups(frame, &groups)?;
    if restricted.agents() != agents {
        bail!("frame {frame}: tracks contain agents missing from the ground truth");
    }
    Ok(restricted)
}

fn cmd_eval(tracks: &Path, truth: &Path, config: &PipelineConfig<f64>, out: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(truth).with_context(|| format!("reading {}", truth.display()))?;
    let truth: GroundTruth = serde_json::from_str(&text).with_context(|| format!("parsing {}", truth.display()))?;
    let true_activity: std::collections::BTreeMap<AgentId, Activity> =
        truth.activities.iter().flat_map(|g| g.members.iter().map(move |&a| (a, g.label))).collect();
    let tracks = load_tracks(tracks)?;

    let mut instants = Vec::new();
    let (mut predicted, mut expected) = (Vec::new(), Vec::new());
    analyze(&tracks, config, |instant| {
        let frame = instant.report.frame;
        let t = restrict(&truth.partition, instant.partition.agents(), frame)
            .map_err(|e| crowd_core::Error::Config(e.to_string()))?;
        instants.push(InstantScore {
            frame,
            nmi: nmi(&instant.partition, &t)?,
            purity: purity(&instant.partition, &t)?,
            rand_index: rand_index(&instant.partition, &t)?,
        });
        for g in &instant.report.groups {
            for a in &g.members {
                if let Some(&label) = true_activity.get(a) {
                    predicted.push(g.label);
                    expected.push(label);
                }
            }
        }
        Ok(())
    })?;
    let n = instants.len() as f64;
    let mean = Means {
        nmi: instants.iter().map(|s| s.nmi).sum::<f64>() / n,
        purity: instants.iter().map(|s| s.purity).sum::<f64>() / n,
        rand_index: instants.iter().map(|s| s.rand_index).sum::<f64>() / n,
    };
    let activity = if predicted.is_empty() { None } else { Some(score_activities(&predicted, &expected)?) };
    let mut text = serde_json::to_string_pretty(&EvalReport { instants, mean, activity })?;
    text.push('\n');
    write_output(out, text.as_bytes())
}

fn cmd_validate(
    tracks: &Path,
    config: &PipelineConfig<f64>,
    k_max: usize,
    axis: AxisArg,
    out: Option<&Path>,
) -> Result<()> {
    let tracks = load_tracks(tracks)?;
    let selector = match axis {
        AxisArg::X => ErrorAxis::X,
        AxisArg::Y => ErrorAxis::Y,
        AxisArg::Combined => ErrorAxis::Combined,
    };
    let curve = validation_curve(&tracks, &config.estimator, k_max)?;
    let mut text = String::from("k,mean_abs_error\n");
    for p in curve {
        text.push_str(&format!("{},{}\n", p.k, p.error.get(selector)));
    }
    write_output(out, text.as_bytes())
}
