//! Track data model: ingestion, per-axis windows and spatial neighborhoods.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type Frame = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X, Axis::Y];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrackFormat {
    Csv,
    Json,
}

/// One row of the interchange formats.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub frame: Frame,
    pub agent_id: u32,
    pub x: f64,
    pub y: f64,
}

/// A single agent's positions over a contiguous frame interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Track<T> {
    start: Frame,
    points: Vec<[T; 2]>,
}

impl<T: Scalar> Track<T> {
    pub fn start(&self) -> Frame {
        self.start
    }

    /// Last frame with a position (inclusive).
    pub fn end(&self) -> Frame {
        self.start + self.points.len() as Frame - 1
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn covers(&self, first: Frame, last: Frame) -> bool {
        first >= self.start && last <= self.end()
    }

    pub fn position(&self, frame: Frame) -> Option<[T; 2]> {
        if frame < self.start {
            return None;
        }
        self.points.get((frame - self.start) as usize).copied()
    }

    pub fn coordinate(&self, frame: Frame, axis: Axis) -> Option<T> {
        self.position(frame).map(|p| p[axis.index()])
    }
}

/// Per-agent time-indexed 2-D positions for one scene.
///
/// Every agent occupies a contiguous frame interval; there is at least one
/// agent and at least two distinct frames.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackSet<T> {
    tracks: BTreeMap<AgentId, Track<T>>,
    frames: Vec<Frame>,
}

impl<T: Scalar> TrackSet<T> {
    /// Builds a track set from observations in any order.
    pub fn from_observations<I>(observations: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Frame, AgentId, T, T)>,
    {
        let mut raw: BTreeMap<AgentId, BTreeMap<Frame, [T; 2]>> = BTreeMap::new();
        for (frame, agent, x, y) in observations {
            if !x.is_finite_value() || !y.is_finite_value() {
                return Err(Error::NonFinite("track position"));
            }
            if raw.entry(agent).or_default().insert(frame, [x, y]).is_some() {
                return Err(Error::Duplicate { agent, frame });
            }
        }
        Self::from_map(raw)
    }

    fn from_map(raw: BTreeMap<AgentId, BTreeMap<Frame, [T; 2]>>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::NoAgents);
        }
        let mut frames = BTreeSet::new();
        let mut tracks = BTreeMap::new();
        for (agent, positions) in raw {
            let start = *positions.keys().next().expect("agent entry is non-empty");
            let mut points = Vec::with_capacity(positions.len());
            for (expected, (&frame, &p)) in (start..).zip(positions.iter()) {
                if frame != expected {
                    return Err(Error::Gap { agent, frame: expected });
                }
                frames.insert(frame);
                points.push(p);
            }
            tracks.insert(agent, Track { start, points });
        }
        if frames.len() < 2 {
            return Err(Error::TooFewFrames(frames.len()));
        }
        Ok(Self { tracks, frames: frames.into_iter().collect() })
    }

    pub fn from_tracks(tracks: BTreeMap<AgentId, (Frame, Vec<[T; 2]>)>) -> Result<Self> {
        let raw = tracks
            .into_iter()
            .filter(|(_, (_, pts))| !pts.is_empty())
            .map(|(agent, (start, pts))| {
                let m = (start..).zip(pts).collect::<BTreeMap<_, _>>();
                (agent, m)
            })
            .collect();
        Self::from_map(raw)
    }

    pub fn load<R: Read>(reader: R, format: TrackFormat) -> Result<Self> {
        let rows = match format {
            TrackFormat::Csv => read_csv_rows(reader)?,
            TrackFormat::Json => read_json_rows(reader)?,
        };
        let mut obs = Vec::with_capacity(rows.len());
        for (line, row) in rows {
            if !row.x.is_finite() || !row.y.is_finite() {
                return Err(Error::Parse { line, message: "non-finite coordinate".into() });
            }
            obs.push((row.frame, AgentId(row.agent_id), T::lit(row.x), T::lit(row.y)));
        }
        Self::from_observations(obs)
    }

    /// Writes rows sorted by frame, then agent id.
    pub fn save<W: Write>(&self, writer: W, format: TrackFormat) -> Result<()> {
        let rows = self.observations();
        match format {
            TrackFormat::Csv => {
                let mut w = csv::Writer::from_writer(writer);
                for row in &rows {
                    w.serialize(row).map_err(csv_error)?;
                }
                w.flush()?;
            }
            TrackFormat::Json => {
                let mut writer = writer;
                serde_json::to_writer_pretty(&mut writer, &rows)?;
                writeln!(writer)?;
            }
        }
        Ok(())
    }

    pub fn observations(&self) -> Vec<Observation> {
        let mut rows: Vec<Observation> = self
            .tracks
            .iter()
            .flat_map(|(agent, track)| {
                track.points.iter().enumerate().map(move |(i, p)| Observation {
                    frame: track.start + i as Frame,
                    agent_id: agent.0,
                    x: p[0].as_f64(),
                    y: p[1].as_f64(),
                })
            })
            .collect();
        rows.sort_by_key(|r| (r.frame, r.agent_id));
        rows
    }

    pub fn num_agents(&self) -> usize {
        self.tracks.len()
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.tracks.keys().copied()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn first_frame(&self) -> Frame {
        self.frames[0]
    }

    pub fn last_frame(&self) -> Frame {
        *self.frames.last().expect("at least two frames")
    }

    pub fn track(&self, agent: AgentId) -> Option<&Track<T>> {
        self.tracks.get(&agent)
    }

    pub fn tracks(&self) -> impl Iterator<Item = (AgentId, &Track<T>)> {
        self.tracks.iter().map(|(a, t)| (*a, t))
    }

    pub fn position(&self, agent: AgentId, frame: Frame) -> Option<[T; 2]> {
        self.tracks.get(&agent).and_then(|t| t.position(frame))
    }

    /// Agents with a position at `frame`, in id order.
    pub fn agents_at(&self, frame: Frame) -> Vec<AgentId> {
        self.tracks
            .iter()
            .filter(|(_, t)| t.position(frame).is_some())
            .map(|(a, _)| *a)
            .collect()
    }

    /// Applies `f` to every position; used for translation/scale checks.
    pub fn map_positions(&self, f: impl Fn([T; 2]) -> [T; 2]) -> Self {
        let tracks = self
            .tracks
            .iter()
            .map(|(a, t)| {
                let points = t.points.iter().map(|p| f(*p)).collect();
                (*a, Track { start: t.start, points })
            })
            .collect();
        Self { tracks, frames: self.frames.clone() }
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse { line, message: e.to_string() }
}

fn read_csv_rows<R: Read>(reader: R) -> Result<Vec<(u64, Observation)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    for col in ["frame", "agent_id", "x", "y"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Parse { line: 1, message: format!("missing column `{col}`") });
        }
    }
    let mut rows = Vec::new();
    for result in rdr.deserialize::<Observation>() {
        let row = result.map_err(csv_error)?;
        // header is line 1
        rows.push((rows.len() as u64 + 2, row));
    }
    Ok(rows)
}

fn read_json_rows<R: Read>(reader: R) -> Result<Vec<(u64, Observation)>> {
    let rows: Vec<Observation> = serde_json::from_reader(reader)
        .map_err(|e| Error::Parse { line: e.line() as u64, message: e.to_string() })?;
    Ok(rows.into_iter().enumerate().map(|(i, r)| (i as u64 + 1, r)).collect())
}

/// An (agents x frames) matrix of one axis over `len` frames ending at `end_frame`.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisWindow<T: Scalar> {
    pub agents: Vec<AgentId>,
    pub axis: Axis,
    pub matrix: DMatrix<T>,
    pub end_frame: Frame,
    pub len: usize,
}

impl<T: Scalar> AxisWindow<T> {
    pub fn first_frame(&self) -> Frame {
        self.end_frame + 1 - self.len as Frame
    }
}

pub fn make_window<T: Scalar>(
    tracks: &TrackSet<T>,
    agents: &[AgentId],
    end_frame: Frame,
    len: usize,
    axis: Axis,
) -> Result<AxisWindow<T>> {
    if len < 2 {
        return Err(Error::InsufficientData(format!("window length {len} < 2")));
    }
    let first = window_start(end_frame, len)?;
    let mut matrix = DMatrix::zeros(agents.len(), len);
    for (row, &agent) in agents.iter().enumerate() {
        let track = tracks.track(agent).ok_or(Error::UnknownAgent(agent))?;
        for (col, frame) in (first..=end_frame).enumerate() {
            matrix[(row, col)] =
                track.coordinate(frame, axis).ok_or(Error::MissingData { agent, frame })?;
        }
    }
    Ok(AxisWindow { agents: agents.to_vec(), axis, matrix, end_frame, len })
}

pub(crate) fn window_start(end_frame: Frame, len: usize) -> Result<Frame> {
    (end_frame + 1)
        .checked_sub(len as Frame)
        .ok_or_else(|| Error::InsufficientData(format!("window of {len} frames ending at {end_frame}")))
}

/// Neighborhood selection parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct NeighborConfig<T> {
    /// Frames of history required per estimated coefficient.
    pub frames_per_unknown: T,
    /// Agents at or beyond this distance are never neighbors (`None`: unbounded).
    pub max_radius: Option<T>,
    /// Radius reported for an agent with no neighbors.
    pub default_radius: T,
}

impl<T: Scalar> Default for NeighborConfig<T> {
    fn default() -> Self {
        Self {
            frames_per_unknown: T::lit(2.5),
            max_radius: Some(T::lit(5.0)),
            default_radius: T::lit(5.0),
        }
    }
}

/// Largest neighbor count whose row problem (self + neighbors + bias) fits in `l_max` frames.
pub fn max_neighbors<T: Scalar>(l_max: usize, frames_per_unknown: T) -> usize {
    let slots = (T::from_count(l_max) / frames_per_unknown).as_f64();
    ((slots + 1e-9).floor() as usize).saturating_sub(2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood<T> {
    pub neighbors: Vec<AgentId>,
    pub radius: T,
}

/// Picks the nearest agents present at `frame` that fit the frame budget.
pub fn select_neighbors<T: Scalar>(
    tracks: &TrackSet<T>,
    agent: AgentId,
    frame: Frame,
    l_max: usize,
    config: &NeighborConfig<T>,
) -> Result<Neighborhood<T>> {
    let candidates = tracks.agents_at(frame);
    select_neighbors_among(tracks, agent, frame, &candidates, l_max, config)
}

pub(crate) fn select_neighbors_among<T: Scalar>(
    tracks: &TrackSet<T>,
    agent: AgentId,
    frame: Frame,
    candidates: &[AgentId],
    l_max: usize,
    config: &NeighborConfig<T>,
) -> Result<Neighborhood<T>> {
    let here = tracks.position(agent, frame).ok_or(Error::MissingData { agent, frame })?;
    let mut by_distance: Vec<(T, AgentId)> = candidates
        .iter()
        .filter(|&&other| other != agent)
        .filter_map(|&other| tracks.position(other, frame).map(|p| (distance(here, p), other)))
        .filter(|(d, _)| config.max_radius.map_or(true, |r| *d < r))
        .collect();
    by_distance.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
    by_distance.truncate(max_neighbors(l_max, config.frames_per_unknown));
    let radius = by_distance.last().map_or(config.default_radius, |(d, _)| *d);
    Ok(Neighborhood { neighbors: by_distance.into_iter().map(|(_, a)| a).collect(), radius })
}

pub(crate) fn distance<T: Scalar>(p: [T; 2], q: [T; 2]) -> T {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    (dx * dx + dy * dy).sqrt()
}

/// Directed neighbor lists for a set of agents at one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborGraph<T> {
    pub frame: Frame,
    pub lists: BTreeMap<AgentId, Neighborhood<T>>,
}

impl<T: Scalar> NeighborGraph<T> {
    pub fn build(
        tracks: &TrackSet<T>,
        agents: &[AgentId],
        frame: Frame,
        l_max: usize,
        config: &NeighborConfig<T>,
    ) -> Result<Self> {
        let lists = agents
            .iter()
            .map(|&a| Ok((a, select_neighbors_among(tracks, a, frame, agents, l_max, config)?)))
            .collect::<Result<_>>()?;
        Ok(Self { frame, lists })
    }

    pub fn neighbors(&self, agent: AgentId) -> &[AgentId] {
        self.lists.get(&agent).map_or(&[], |n| n.neighbors.as_slice())
    }

    /// Weakly connected components (an edge in either direction links two
    /// agents), restricted to `members`. Components are sorted by smallest id.
    pub fn components_within(&self, members: &[AgentId]) -> Vec<Vec<AgentId>> {
        let set: BTreeSet<AgentId> = members.iter().copied().collect();
        let mut parent: BTreeMap<AgentId, AgentId> = set.iter().map(|&a| (a, a)).collect();
        fn find(parent: &mut BTreeMap<AgentId, AgentId>, a: AgentId) -> AgentId {
            let p = parent[&a];
            if p == a {
                return a;
            }
            let root = find(parent, p);
            parent.insert(a, root);
            root
        }
        for &a in &set {
            for &b in self.neighbors(a) {
                if set.contains(&b) {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent.insert(ra.max(rb), ra.min(rb));
                    }
                }
            }
        }
        let mut groups: BTreeMap<AgentId, Vec<AgentId>> = BTreeMap::new();
        for &a in &set {
            let root = find(&mut parent, a);
            groups.entry(root).or_default().push(a);
        }
        let mut out: Vec<Vec<AgentId>> = groups.into_values().collect();
        out.sort_by_key(|g| g[0]);
        out
    }
}
