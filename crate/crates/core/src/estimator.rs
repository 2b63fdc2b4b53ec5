//! Row-wise estimation of the interaction model from a short window of frames,
//! and k-step prediction error for validating it.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::InteractionModel;
use crate::error::{Error, Result};
use crate::lasso::{QuadraticL1, SolverConfig};
use crate::scalar::Scalar;
use crate::tracks::{make_window, AgentId, Axis, Frame, NeighborConfig, NeighborGraph, TrackSet};

/// Longest window for which the first-order model is trusted.
pub const MAX_WINDOW: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct EstimatorConfig<T> {
    /// Window length in frames.
    #[serde(rename = "L")]
    pub window: usize,
    /// Weight of the temporal smoothness term.
    pub r1: T,
    /// Weight of the L1 sparsity term.
    pub r2: T,
    #[serde(flatten)]
    pub neighbors: NeighborConfig<T>,
    pub solver: SolverConfig<T>,
}

impl<T: Scalar> Default for EstimatorConfig<T> {
    fn default() -> Self {
        Self {
            window: 25,
            r1: T::one(),
            r2: T::lit(0.05),
            neighbors: NeighborConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl<T: Scalar> EstimatorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_WINDOW).contains(&self.window) {
            return Err(Error::Config(format!("L must be between 2 and {MAX_WINDOW}, got {}", self.window)));
        }
        for (name, v) in [("r1", self.r1), ("r2", self.r2)] {
            if !(v >= T::zero()) || !v.is_finite_value() {
                return Err(Error::Config(format!("{name} must be a finite non-negative number")));
            }
        }
        let n = &self.neighbors;
        if !(n.frames_per_unknown > T::zero()) || !n.frames_per_unknown.is_finite_value() {
            return Err(Error::Config("frames_per_unknown must be positive".into()));
        }
        if n.max_radius.is_some_and(|r| !(r > T::zero())) || !(n.default_radius >= T::zero()) {
            return Err(Error::Config("neighbor radii must be positive".into()));
        }
        self.solver.validate()
    }
}

/// Result of one row problem.
#[derive(Clone, Debug)]
pub struct RowFit<T: Scalar> {
    /// Coefficients for the design rows, bias last.
    pub row: DVector<T>,
    pub iterations: usize,
    /// Objective value at the start point and after each accepted iterate.
    pub objective_trace: Vec<T>,
    pub converged: bool,
}

/// Fits one row of `[A | a]`.
///
/// `x_prev` holds one row per regressor (the agent itself, then its
/// neighbors) followed by a row of ones; its columns are consecutive frames.
/// `x_next` holds the agent's positions one frame later. The objective is
///
/// ```text
/// ||row * x_prev - x_next||^2 + r1 ||row - prev_row||^2 + r2 ||w||_1
/// ```
///
/// where `w` is `row` without the bias. The r1 term is dropped without a
/// previous row. The bias is minimized in closed form for every `w`, which
/// leaves a quadratic-plus-L1 problem in the interaction weights alone.
pub fn estimate_row<T: Scalar>(
    x_prev: &DMatrix<T>,
    x_next: &DVector<T>,
    prev_row: Option<&DVector<T>>,
    r1: T,
    r2: T,
    solver: &SolverConfig<T>,
) -> Result<RowFit<T>> {
    let rows = x_prev.nrows();
    let m = x_prev.ncols();
    if rows == 0 {
        return Err(Error::Dimension { expected: 1, found: 0 });
    }
    if x_next.len() != m {
        return Err(Error::Dimension { expected: m, found: x_next.len() });
    }
    if m == 0 {
        return Err(Error::InsufficientData("row problem has no transitions".into()));
    }
    if let Some(p) = prev_row {
        if p.len() != rows {
            return Err(Error::Dimension { expected: rows, found: p.len() });
        }
    }
    let finite = x_prev.iter().chain(x_next.iter()).chain(prev_row.into_iter().flat_map(|p| p.iter())).all(|v| v.is_finite_value());
    if !finite || !r1.is_finite_value() || !r2.is_finite_value() {
        return Err(Error::NonFinite("row problem"));
    }
    if x_prev.row(rows - 1).iter().any(|&v| v != T::one()) {
        return Err(Error::Config("last design row must be all ones".into()));
    }

    let n = rows - 1;
    let mt = T::from_count(m);
    let regressors = x_prev.rows(0, n);
    let mean_x: DVector<T> = regressors.column_mean();
    let mean_y = x_next.mean();
    // Deviations at the rounding level of the mean are snapped to zero, so a
    // constant coordinate contributes an exactly zero column.
    let snap = |v: T, scale: T| {
        let floor = T::lit(4.0) * T::machine_epsilon() * mt * scale.abs();
        if v.abs() <= floor { T::zero() } else { v }
    };
    let xc = DMatrix::from_fn(n, m, |i, t| snap(regressors[(i, t)] - mean_x[i], regressors.row(i).amax()));
    let y_scale = x_next.amax();
    let yc = x_next.map(|v| snap(v - mean_y, y_scale));

    let rho = if prev_row.is_some() { r1 } else { T::zero() };
    let (w_prev, b_prev) = match prev_row {
        Some(p) => (p.rows(0, n).into_owned(), p[n]),
        None => (DVector::zeros(n), T::zero()),
    };
    let kappa = if rho > T::zero() { mt * rho / (mt + rho) } else { T::zero() };
    let shift = mean_y - b_prev;

    let mut gram = &xc * xc.transpose() + &mean_x * mean_x.transpose() * kappa;
    for i in 0..n {
        gram[(i, i)] += rho;
    }
    let linear = &xc * &yc + &w_prev * rho + &mean_x * (kappa * shift);
    let offset = yc.norm_squared() + kappa * shift * shift + w_prev.norm_squared() * rho;

    let problem = QuadraticL1 { gram, linear, offset, l1_weight: r2, penalized: vec![true; n] };
    let sol = problem.solve(solver)?;
    let w = sol.coefficients;
    let bias = (mt * (mean_y - w.dot(&mean_x)) + rho * b_prev) / (mt + rho);

    let mut row = DVector::zeros(rows);
    row.rows_mut(0, n).copy_from(&w);
    row[n] = bias;
    Ok(RowFit { row, iterations: sol.iterations, objective_trace: sol.objective_trace, converged: sol.converged })
}

/// Interaction models for both axes at one instant.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SceneModel<T: Scalar> {
    pub x: InteractionModel<T>,
    pub y: InteractionModel<T>,
    /// Last frame of the estimation window.
    pub end_frame: Frame,
    /// Number of frames actually used.
    pub window: usize,
    /// Neighbor lists the rows were restricted to.
    pub neighbors: NeighborGraph<T>,
    /// Agents present at `end_frame` whose history does not cover the window.
    pub excluded: Vec<AgentId>,
}

impl<T: Scalar> SceneModel<T> {
    pub fn model(&self, axis: Axis) -> &InteractionModel<T> {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
        }
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.x.agents
    }

    pub fn first_frame(&self) -> Frame {
        self.end_frame + 1 - self.window as Frame
    }
}

/// Estimates the scene model from the window ending at `end_frame`.
///
/// The window is `config.window` frames, shortened when the data starts later.
/// Agents present at `end_frame` that do not cover the window are excluded
/// and listed in the result.
pub fn estimate_scene<T: Scalar>(
    tracks: &TrackSet<T>,
    end_frame: Frame,
    prev: Option<&SceneModel<T>>,
    config: &EstimatorConfig<T>,
) -> Result<SceneModel<T>> {
    config.validate()?;
    let history = end_frame.checked_sub(tracks.first_frame()).map_or(0, |d| d as usize + 1);
    let len = config.window.min(history);
    if len < 2 {
        return Err(Error::InsufficientData(format!(
            "frame {end_frame} has {history} frame(s) of history, need at least 2"
        )));
    }
    let first = end_frame + 1 - len as Frame;
    let (agents, excluded): (Vec<AgentId>, Vec<AgentId>) = tracks
        .agents_at(end_frame)
        .into_iter()
        .partition(|&a| tracks.track(a).is_some_and(|t| t.covers(first, end_frame)));
    if agents.is_empty() {
        return Err(Error::InsufficientData(format!("no agent covers frames {first}..={end_frame}")));
    }
    let graph = NeighborGraph::build(tracks, &agents, end_frame, len, &config.neighbors)?;
    let index: BTreeMap<AgentId, usize> = agents.iter().enumerate().map(|(i, &a)| (a, i)).collect();

    let windows = [
        make_window(tracks, &agents, end_frame, len, Axis::X)?,
        make_window(tracks, &agents, end_frame, len, Axis::Y)?,
    ];
    let tasks: Vec<(Axis, usize)> =
        Axis::BOTH.iter().flat_map(|&ax| (0..agents.len()).map(move |i| (ax, i))).collect();
    let rows: Vec<(Axis, usize, Vec<usize>, DVector<T>)> = tasks
        .par_iter()
        .map(|&(axis, i)| {
            let agent = agents[i];
            let local: Vec<usize> = std::iter::once(i)
                .chain(graph.neighbors(agent).iter().map(|a| index[a]))
                .collect();
            let data = &windows[axis.index()].matrix;
            let x_prev = DMatrix::from_fn(local.len() + 1, len - 1, |r, t| {
                if r < local.len() {
                    data[(local[r], t)]
                } else {
                    T::one()
                }
            });
            let x_next = DVector::from_fn(len - 1, |t, _| data[(i, t + 1)]);
            let prev_row = prev.and_then(|p| aligned_prev_row(p.model(axis), agent, &local, &agents));
            let fit = estimate_row(&x_prev, &x_next, prev_row.as_ref(), config.r1, config.r2, &config.solver)?;
            Ok((axis, i, local, fit.row))
        })
        .collect::<Result<_>>()?;

    let n = agents.len();
    let mut mats = [DMatrix::zeros(n, n), DMatrix::zeros(n, n)];
    let mut biases = [DVector::zeros(n), DVector::zeros(n)];
    for (axis, i, local, row) in rows {
        let k = axis.index();
        for (pos, &j) in local.iter().enumerate() {
            mats[k][(i, j)] = row[pos];
        }
        biases[k][i] = row[local.len()];
    }
    let [ax, ay] = mats;
    let [bx, by] = biases;
    Ok(SceneModel {
        x: InteractionModel::new(Axis::X, agents.clone(), ax, bx)?,
        y: InteractionModel::new(Axis::Y, agents, ay, by)?,
        end_frame,
        window: len,
        neighbors: graph,
        excluded,
    })
}

/// Previous coefficients for `agent` aligned to the current regressor order.
/// Regressors the previous row did not use start at zero.
fn aligned_prev_row<T: Scalar>(
    prev: &InteractionModel<T>,
    agent: AgentId,
    local: &[usize],
    agents: &[AgentId],
) -> Option<DVector<T>> {
    let pi = prev.index_of(agent)?;
    let mut row = DVector::zeros(local.len() + 1);
    for (pos, &j) in local.iter().enumerate() {
        if let Some(pj) = prev.index_of(agents[j]) {
            row[pos] = prev.a[(pi, pj)];
        }
    }
    row[local.len()] = prev.bias[pi];
    Some(row)
}

/// Mean absolute deviation between two `agents x steps` matrices.
pub fn prediction_error<T: Scalar>(actual: &DMatrix<T>, predicted: &DMatrix<T>) -> Result<T> {
    if actual.shape() != predicted.shape() {
        return Err(Error::Dimension { expected: actual.len(), found: predicted.len() });
    }
    if actual.is_empty() {
        return Err(Error::InsufficientData("empty prediction horizon".into()));
    }
    let total = actual.iter().zip(predicted.iter()).fold(T::zero(), |s, (a, p)| s + (*a - *p).abs());
    Ok(total / T::from_count(actual.len()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisErrors<T> {
    pub x: T,
    pub y: T,
    /// Mean of the two axes.
    pub combined: T,
}

impl<T: Scalar> AxisErrors<T> {
    fn new(x: T, y: T) -> Self {
        Self { x, y, combined: (x + y) * T::lit(0.5) }
    }

    pub fn get(&self, selector: ErrorAxis) -> T {
        match selector {
            ErrorAxis::X => self.x,
            ErrorAxis::Y => self.y,
            ErrorAxis::Combined => self.combined,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorAxis {
    X,
    Y,
    Combined,
}

/// Predicted positions for frames `n+1 ..= n+k` (one column per step),
/// iterating the model from the observed state at `n`.
pub fn predict<T: Scalar>(
    tracks: &TrackSet<T>,
    model: &InteractionModel<T>,
    n: Frame,
    k: usize,
) -> Result<DMatrix<T>> {
    let mut state = DVector::zeros(model.dim());
    for (i, &agent) in model.agents.iter().enumerate() {
        state[i] = tracks
            .track(agent)
            .and_then(|t| t.coordinate(n, model.axis))
            .ok_or(Error::Horizon { agent, frame: n })?;
    }
    let mut out = DMatrix::zeros(model.dim(), k);
    for step in 0..k {
        state = &model.a * &state + &model.bias;
        out.set_column(step, &state);
    }
    Ok(out)
}

fn observed<T: Scalar>(tracks: &TrackSet<T>, agents: &[AgentId], axis: Axis, n: Frame, k: usize) -> Result<DMatrix<T>> {
    let mut out = DMatrix::zeros(agents.len(), k);
    for (i, &agent) in agents.iter().enumerate() {
        for step in 0..k {
            let frame = n + 1 + step as Frame;
            out[(i, step)] = tracks
                .track(agent)
                .and_then(|t| t.coordinate(frame, axis))
                .ok_or(Error::Horizon { agent, frame })?;
        }
    }
    Ok(out)
}

/// Mean absolute k-step prediction error from frame `n`, per axis and combined.
pub fn k_step_error<T: Scalar>(
    tracks: &TrackSet<T>,
    model: &SceneModel<T>,
    n: Frame,
    k: usize,
) -> Result<AxisErrors<T>> {
    let curve = k_step_errors(tracks, model, n, k)?;
    Ok(curve[k - 1])
}

/// `E_n(1) ..= E_n(k_max)` from a single prediction run.
pub fn k_step_errors<T: Scalar>(
    tracks: &TrackSet<T>,
    model: &SceneModel<T>,
    n: Frame,
    k_max: usize,
) -> Result<Vec<AxisErrors<T>>> {
    if k_max == 0 {
        return Err(Error::Config("prediction horizon must be at least 1".into()));
    }
    let mut per_axis = Vec::with_capacity(2);
    for axis in Axis::BOTH {
        let m = model.model(axis);
        let truth = observed(tracks, &m.agents, axis, n, k_max)?;
        let pred = predict(tracks, m, n, k_max)?;
        let errs = (1..=k_max)
            .map(|k| prediction_error(&truth.columns(0, k).into_owned(), &pred.columns(0, k).into_owned()))
            .collect::<Result<Vec<T>>>()?;
        per_axis.push(errs);
    }
    Ok((0..k_max).map(|i| AxisErrors::new(per_axis[0][i], per_axis[1][i])).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint<T> {
    pub k: usize,
    pub error: AxisErrors<T>,
}

/// Average k-step error over every admissible starting frame.
///
/// A frame `n` is admissible when a full window ends at `n` and ground truth
/// exists up to `n + k_max` for every modeled agent. Consecutive estimates are
/// chained so the smoothness term sees the previous model.
pub fn validation_curve<T: Scalar>(
    tracks: &TrackSet<T>,
    config: &EstimatorConfig<T>,
    k_max: usize,
) -> Result<Vec<ValidationPoint<T>>> {
    config.validate()?;
    if k_max == 0 {
        return Err(Error::Config("k_max must be at least 1".into()));
    }
    let first_n = tracks.first_frame() + config.window as Frame - 1;
    let last = tracks.last_frame();
    if last < first_n + k_max as Frame {
        return Err(Error::InsufficientData(format!(
            "{} frames available, need L + k_max = {}",
            last - tracks.first_frame() + 1,
            config.window + k_max
        )));
    }
    let mut sums = vec![(T::zero(), T::zero()); k_max];
    let mut count = 0usize;
    let mut prev: Option<SceneModel<T>> = None;
    for n in first_n..=last - k_max as Frame {
        let model = match estimate_scene(tracks, n, prev.as_ref(), config) {
            Ok(m) => m,
            Err(Error::InsufficientData(_)) => {
                prev = None;
                continue;
            }
            Err(e) => return Err(e),
        };
        match k_step_errors(tracks, &model, n, k_max) {
            Ok(errs) => {
                for (s, e) in sums.iter_mut().zip(&errs) {
                    s.0 += e.x;
                    s.1 += e.y;
                }
                count += 1;
            }
            Err(Error::Horizon { .. }) => {}
            Err(e) => return Err(e),
        }
        prev = Some(model);
    }
    if count == 0 {
        return Err(Error::InsufficientData("no admissible starting frame".into()));
    }
    let c = T::from_count(count);
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, (x, y))| ValidationPoint { k: i + 1, error: AxisErrors::new(x / c, y / c) })
        .collect())
}
