use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn crowd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowd")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = crowd(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, contents: &str) -> String {
        let p = self.path(name);
        std::fs::write(&p, contents).unwrap();
        s(&p)
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_owned()
}

const PAIRS: &str = r#"{
  "groups": [
    {"size": 2, "pattern": "walking", "anchor": [0, 0], "velocity": [1.0, 0.3]},
    {"size": 2, "pattern": "walking", "anchor": [0, 40], "velocity": [-0.8, 0.5]},
    {"size": 3, "pattern": "stationary", "anchor": [40, 0]}
  ],
  "frames": 70,
  "noise_sigma": 0.0
}"#;

/// Synthesizes `scenario` into `tracks.csv` (plus its truth sidecar).
fn synth(ws: &Workspace, scenario: &str, frames: Option<usize>, noise: Option<f64>) -> String {
    let mut spec: serde_json::Value = serde_json::from_str(scenario).unwrap();
    if let Some(f) = frames {
        spec["frames"] = f.into();
    }
    if let Some(n) = noise {
        spec["noise_sigma"] = n.into();
    }
    let spec_path = ws.write("scenario.json", &spec.to_string());
    let tracks = s(&ws.path("tracks.csv"));
    ok(&["synth", &spec_path, "--seed", "5", "--out", &tracks]);
    tracks
}

fn groups_of(record: &serde_json::Value) -> Vec<Vec<u64>> {
    let mut g: Vec<Vec<u64>> = record["groups"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g["members"].as_array().unwrap().iter().map(|m| m.as_u64().unwrap()).collect())
        .collect();
    g.sort();
    g
}

#[test]
fn analyze_recovers_the_true_partition_at_every_instant() {
    let ws = Workspace::new();
    let tracks = synth(&ws, PAIRS, None, None);
    let truth: serde_json::Value = serde_json::from_str(&ws.read("tracks.csv.truth.json")).unwrap();
    let mut expected: Vec<Vec<u64>> = truth["partition"]["groups"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g.as_array().unwrap().iter().map(|m| m.as_u64().unwrap()).collect())
        .collect();
    expected.sort();

    let out = s(&ws.path("a.jsonl"));
    ok(&["analyze", &tracks, "--out", &out]);
    let text = ws.read("a.jsonl");
    let records: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let frames: Vec<u64> = records.iter().map(|r| r["frame"].as_u64().unwrap()).collect();
    assert_eq!(frames, vec![29, 39, 49, 59, 69]);
    for r in &records {
        assert_eq!(groups_of(r), expected);
        assert!(r.get("truncated").is_none());
    }

    ok(&["analyze", &tracks, "--out", &out]);
    assert_eq!(ws.read("a.jsonl"), text, "rerun must be byte-identical");
}

#[test]
fn empty_track_file_reports_no_agents() {
    let ws = Workspace::new();
    let tracks = ws.write("empty.csv", "frame,agent_id,x,y\n");
    let out = crowd(&["analyze", &tracks, "--out", &s(&ws.path("a.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no agents"), "{}", stderr(&out));
}

#[test]
fn oversized_stride_truncates_the_stream() {
    let ws = Workspace::new();
    let tracks = synth(&ws, PAIRS, Some(40), None);
    let config = ws.write("c.toml", "stride = 100\n");
    let out = crowd(&["analyze", &tracks, "--config", &config, "--out", &s(&ws.path("a.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no evaluation instants"));
    let last: serde_json::Value = serde_json::from_str(ws.read("a.jsonl").lines().last().unwrap()).unwrap();
    assert_eq!(last["truncated"], true);
}

#[test]
fn invalid_config_is_rejected() {
    let ws = Workspace::new();
    let tracks = synth(&ws, PAIRS, None, None);
    let config = ws.write("c.toml", "L = 45\n");
    let out = crowd(&["analyze", &tracks, "--config", &config]);
    assert_eq!(out.status.code(), Some(1));
}

/// Eight well-separated classes in the 15-feature layout.
fn feature_csv(rows_per_class: usize, with_label: bool) -> String {
    let mut text = String::from("gd,lam_x0,lam_x1,lam_x2,lam_y0,lam_y1,lam_y2,dir0,dir1,dir2,dir3,dir4,dir5,dir6,dir7,class\n");
    for c in 0..8 {
        for i in 0..rows_per_class {
            let jitter = (i % 5) as f64 * 0.01;
            let mut x = vec![0.1 + jitter; 15];
            x[1 + c] = 10.0 + jitter;
            x[0] = c as f64 / 8.0 + jitter;
            let cells: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            let label = if with_label { format!("C{}", c + 1) } else { String::new() };
            text.push_str(&format!("{},{label}\n", cells.join(",")));
        }
    }
    text
}

#[test]
fn trained_forest_classifies_separable_features() {
    let ws = Workspace::new();
    let data = ws.write("train.csv", &feature_csv(20, true));
    let forest = s(&ws.path("forest.json"));
    ok(&["train-forest", &data, "--seed", "11", "--out", &forest]);
    let first = ws.read("forest.json");
    ok(&["train-forest", &data, "--seed", "11", "--out", &forest]);
    assert_eq!(ws.read("forest.json"), first, "same seed must give the same forest");

    let test = ws.write("test.csv", &feature_csv(3, true));
    let out = ok(&["classify", "--forest", &forest, "--features", &test]);
    let lines: Vec<serde_json::Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 24);
    for l in &lines {
        assert_eq!(l["class"], l["truth"]);
        assert_eq!(l["votes"].as_array().unwrap().len(), 8);
    }
}

#[test]
fn classify_runs_the_pipeline_on_raw_tracks() {
    let ws = Workspace::new();
    let data = ws.write("train.csv", &feature_csv(10, true));
    let forest = s(&ws.path("forest.json"));
    ok(&["train-forest", &data, "--out", &forest]);
    let tracks = synth(&ws, PAIRS, None, None);
    let out = ok(&["classify", "--forest", &forest, "--tracks", &tracks]);
    let line: serde_json::Value = serde_json::from_str(String::from_utf8(out.stdout).unwrap().trim()).unwrap();
    assert_eq!(line["source"], tracks.as_str());
    assert!(line["class"].as_str().unwrap().starts_with('C'));
}

#[test]
fn classify_rejects_bad_inputs() {
    let ws = Workspace::new();
    let data = ws.write("train.csv", &feature_csv(10, true));
    let forest = s(&ws.path("forest.json"));
    ok(&["train-forest", &data, "--out", &forest]);

    let broken = ws.write("broken.json", "{\"trees\": [");
    let out = crowd(&["classify", "--forest", &broken, "--features", &data]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("parsing forest"), "{}", stderr(&out));

    let short = ws.write("short.csv", "a,b,c\n1,2,3\n");
    let out = crowd(&["classify", "--forest", &forest, "--features", &short]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("expected 15 features"), "{}", stderr(&out));

    let unlabeled = ws.write("unlabeled.csv", &feature_csv(2, false));
    let out = crowd(&["train-forest", &unlabeled]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_is_deterministic_and_seed_sensitive() {
    let ws = Workspace::new();
    let spec = ws.write("s.json", &PAIRS.replace("\"noise_sigma\": 0.0", "\"noise_sigma\": 0.3"));
    let a = s(&ws.path("a.csv"));
    let b = s(&ws.path("b.csv"));
    ok(&["synth", &spec, "--seed", "9", "--out", &a]);
    ok(&["synth", &spec, "--seed", "9", "--out", &b]);
    assert_eq!(ws.read("a.csv"), ws.read("b.csv"));
    assert_eq!(ws.read("a.csv.truth.json"), ws.read("b.csv.truth.json"));
    ok(&["synth", &spec, "--seed", "10", "--out", &b]);
    assert_ne!(ws.read("a.csv"), ws.read("b.csv"));

    let j = s(&ws.path("a.json"));
    ok(&["synth", &spec, "--seed", "9", "--format", "json", "--out", &j]);
    let rows: serde_json::Value = serde_json::from_str(&ws.read("a.json")).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 7 * 70);
}

#[test]
fn eval_scores_a_clean_scene_perfectly() {
    let ws = Workspace::new();
    let tracks = synth(&ws, PAIRS, None, None);
    let truth = s(&ws.path("tracks.csv.truth.json"));
    let out = ok(&["eval", &tracks, "--truth", &truth]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["nmi", "purity", "rand_index"] {
        assert_eq!(report["mean"][key], 1.0, "{key}");
    }
    assert_eq!(report["activity"]["accuracy"], 1.0);
}

const EXACT: &str = "r1 = 0\nr2 = 0\n";

fn curve(text: &str) -> Vec<(usize, f64)> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,mean_abs_error"));
    lines
        .map(|l| {
            let (k, e) = l.split_once(',').unwrap();
            (k.parse().unwrap(), e.parse().unwrap())
        })
        .collect()
}

#[test]
fn validate_is_zero_on_clean_scenes() {
    let ws = Workspace::new();
    let tracks = synth(&ws, PAIRS, Some(31 + 30), None);
    let config = ws.write("c.toml", EXACT);
    let out = s(&ws.path("v.csv"));
    ok(&["validate", &tracks, "--config", &config, "--k-max", "30", "--out", &out]);
    let c = curve(&ws.read("v.csv"));
    assert_eq!(c.len(), 30);
    assert_eq!(c.iter().map(|p| p.0).collect::<Vec<_>>(), (1..=30).collect::<Vec<_>>());
    assert!(c.iter().all(|p| p.1.abs() < 1e-6), "{c:?}");
}

#[test]
fn validate_is_positive_on_noisy_scenes() {
    let ws = Workspace::new();
    let tracks = synth(&ws, PAIRS, None, Some(0.2));
    for axis in ["x", "y", "combined"] {
        let out = ok(&["validate", &tracks, "--k-max", "10", "--axis", axis]);
        let c = curve(&String::from_utf8(out.stdout).unwrap());
        assert_eq!(c.len(), 10);
        assert!(c.iter().all(|p| p.1 > 0.0 && p.1.is_finite()), "{axis}: {c:?}");
    }
}

#[test]
fn validate_needs_enough_frames() {
    let ws = Workspace::new();
    let tracks = synth(&ws, PAIRS, Some(35), None);
    let out = crowd(&["validate", &tracks, "--k-max", "30"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("insufficient data"));
}
