//! Group and individual activity recognition from the modal velocity expansion.

use nalgebra::{ComplexField, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{decompose, DynamicsConfig, InteractionModel, ModalDecomposition};
use crate::eigen::{eigen_decompose, C};
use crate::error::{Error, Result};
use crate::estimator::{estimate_row, EstimatorConfig};
use crate::grouping::GroupPartition;
use crate::lasso::SolverConfig;
use crate::scalar::Scalar;
use crate::tracks::{make_window, window_start, AgentId, Axis, Frame, TrackSet};

/// Group activity, ordered by merge priority (lowest first).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Activity {
    Stationary,
    Approaching,
    Walking,
    Splitting,
}

impl Activity {
    pub const ALL: [Activity; 4] = [Activity::Stationary, Activity::Approaching, Activity::Walking, Activity::Splitting];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Individual activity, ordered by merge priority (lowest first).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AtomicActivity {
    Stationary,
    Stopping,
    Walking,
}

/// Eigenvalue-modulus bands used to snap estimates to 0 and 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct ActivityBands<T> {
    pub one_low: T,
    pub one_high: T,
    /// Moduli below this count as zero.
    pub zero_high: T,
    /// Coefficients below `coefficient_tolerance * ||x0||` count as zero.
    pub coefficient_tolerance: T,
}

impl<T: Scalar> Default for ActivityBands<T> {
    fn default() -> Self {
        Self { one_low: T::lit(0.995), one_high: T::lit(1.005), zero_high: T::lit(0.5), coefficient_tolerance: T::lit(1e-6) }
    }
}

impl<T: Scalar> ActivityBands<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.zero_high > T::zero()
            && self.zero_high < self.one_low
            && self.one_low <= T::one()
            && self.one_high >= T::one()
            && self.coefficient_tolerance >= T::zero()
            && self.one_high.is_finite_value()
            && self.coefficient_tolerance.is_finite_value();
        if ok {
            Ok(())
        } else {
            Err(Error::Config("activity bands must satisfy 0 < zero_high < one_low <= 1 <= one_high".into()))
        }
    }

    pub fn in_one_band(&self, m: T) -> bool {
        m > self.one_low && m < self.one_high
    }

    pub fn in_zero_band(&self, m: T) -> bool {
        m < self.zero_high
    }
}

/// Fits an unregularized-in-L1 model in which every member interacts with every
/// other member. `prev` (aligned by agent id) enables the smoothness term.
pub fn estimate_group_model<T: Scalar>(
    tracks: &TrackSet<T>,
    group: &[AgentId],
    end_frame: Frame,
    window: usize,
    r1: T,
    prev: Option<&[InteractionModel<T>; 2]>,
    solver: &SolverConfig<T>,
) -> Result<[InteractionModel<T>; 2]> {
    let m = group.len();
    if m == 0 {
        return Err(Error::NoAgents);
    }
    if window < m + 2 {
        return Err(Error::InsufficientData(format!(
            "a group of {m} needs a window of at least {} frames, got {window}",
            m + 2
        )));
    }
    let fit_axis = |axis: Axis| -> Result<InteractionModel<T>> {
        let data = make_window(tracks, group, end_frame, window, axis)?.matrix;
        let mut a = DMatrix::zeros(m, m);
        let mut bias = DVector::zeros(m);
        for i in 0..m {
            let order: Vec<usize> = std::iter::once(i).chain((0..m).filter(|&j| j != i)).collect();
            let x_prev = DMatrix::from_fn(m + 1, window - 1, |r, t| if r < m { data[(order[r], t)] } else { T::one() });
            let x_next = DVector::from_fn(window - 1, |t, _| data[(i, t + 1)]);
            let prev_row = prev.and_then(|p| {
                let model = &p[axis.index()];
                let pi = model.index_of(group[i])?;
                let mut row = DVector::zeros(m + 1);
                for (pos, &j) in order.iter().enumerate() {
                    if let Some(pj) = model.index_of(group[j]) {
                        row[pos] = model.a[(pi, pj)];
                    }
                }
                row[m] = model.bias[pi];
                Some(row)
            });
            let fit = estimate_row(&x_prev, &x_next, prev_row.as_ref(), r1, T::zero(), solver)?;
            for (pos, &j) in order.iter().enumerate() {
                a[(i, j)] = fit.row[pos];
            }
            bias[i] = fit.row[m];
        }
        InteractionModel::new(axis, group.to_vec(), a, bias)
    };
    Ok([fit_axis(Axis::X)?, fit_axis(Axis::Y)?])
}

/// Largest-modulus eigenvalue whose mode contributes velocity, if any.
///
/// A mode in the one-band contributes only through its bias coefficient; any
/// other mode contributes through either coefficient.
pub fn deciding_eigenvalue<T: Scalar>(
    decomp: &ModalDecomposition<T>,
    bands: &ActivityBands<T>,
) -> Result<Option<C<T>>> {
    if decomp.defective {
        return Err(Error::Defective { condition: decomp.condition.as_f64() });
    }
    let x0_norm = (&decomp.eigenvectors * &decomp.c).norm();
    let coef_scale = decomp.c.norm().max(decomp.d.norm());
    let roundoff = coef_scale * T::machine_epsilon() * T::lit(1e3);
    let tol = (bands.coefficient_tolerance * x0_norm).max(roundoff);
    let mut order: Vec<usize> = (0..decomp.dim()).collect();
    order.sort_by(|&i, &j| {
        decomp.eigenvalues[j].modulus().as_f64().total_cmp(&decomp.eigenvalues[i].modulus().as_f64())
    });
    for i in order {
        let mu = decomp.eigenvalues[i];
        let (c, d) = (decomp.c[i].modulus(), decomp.d[i].modulus());
        let contributes = if bands.in_one_band(mu.modulus()) { d > tol } else { c > tol || d > tol };
        if contributes {
            return Ok(Some(mu));
        }
    }
    Ok(None)
}

/// Label for one axis from the deciding eigenvalue's modulus.
pub fn classify_group_axis<T: Scalar>(mu: Option<T>, bands: &ActivityBands<T>) -> Activity {
    match mu {
        None => Activity::Stationary,
        Some(m) if bands.in_zero_band(m) => Activity::Stationary,
        Some(m) if bands.in_one_band(m) => Activity::Walking,
        Some(m) if m <= bands.one_low => Activity::Approaching,
        Some(_) => Activity::Splitting,
    }
}

pub fn merge_axis_activity(ax: Activity, ay: Activity) -> Activity {
    ax.max(ay)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GroupActivity<T: Scalar> {
    pub members: Vec<AgentId>,
    /// Modulus of the deciding eigenvalue per axis (`None` when no mode moves).
    pub mu: [Option<T>; 2],
    /// Largest eigenvalue modulus of the group model per axis.
    pub lambda_max: [T; 2],
    pub axis_labels: [Activity; 2],
    pub label: Activity,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AtomicResult<T: Scalar> {
    pub agent: AgentId,
    pub mu: [T; 2],
    pub b: [T; 2],
    pub axis_labels: [AtomicActivity; 2],
    pub label: AtomicActivity,
}

fn atomic_axis_label<T: Scalar>(mu: T, b: T, x0: T, bands: &ActivityBands<T>) -> AtomicActivity {
    let m = mu.abs();
    let b_tol = (bands.coefficient_tolerance * x0.abs()).max(T::machine_epsilon() * T::lit(1e3) * (x0.abs() + b.abs()));
    if bands.in_zero_band(m) {
        AtomicActivity::Stationary
    } else if bands.in_one_band(m) {
        if b.abs() > b_tol {
            AtomicActivity::Walking
        } else {
            AtomicActivity::Stationary
        }
    } else if m <= bands.one_low {
        AtomicActivity::Stopping
    } else {
        AtomicActivity::Walking
    }
}

/// Fits `x(k+1) = mu x(k) + b` per axis over the window and labels the agent.
pub fn classify_atomic<T: Scalar>(
    tracks: &TrackSet<T>,
    agent: AgentId,
    end_frame: Frame,
    window: usize,
    r1: T,
    bands: &ActivityBands<T>,
    solver: &SolverConfig<T>,
) -> Result<AtomicResult<T>> {
    let [mx, my] = estimate_group_model(tracks, &[agent], end_frame, window, r1, None, solver)?;
    let first = window_start(end_frame, window)?;
    let x0 = tracks.position(agent, first).ok_or(Error::MissingData { agent, frame: first })?;
    let mu = [mx.a[(0, 0)], my.a[(0, 0)]];
    let b = [mx.bias[0], my.bias[0]];
    let axis_labels = [atomic_axis_label(mu[0], b[0], x0[0], bands), atomic_axis_label(mu[1], b[1], x0[1], bands)];
    Ok(AtomicResult { agent, mu, b, axis_labels, label: axis_labels[0].max(axis_labels[1]) })
}

/// Classifies one multi-member group.
pub fn classify_group<T: Scalar>(
    tracks: &TrackSet<T>,
    members: &[AgentId],
    end_frame: Frame,
    window: usize,
    r1: T,
    bands: &ActivityBands<T>,
    dynamics: &DynamicsConfig<T>,
    solver: &SolverConfig<T>,
) -> Result<GroupActivity<T>> {
    let models = estimate_group_model(tracks, members, end_frame, window, r1, None, solver)?;
    let first = window_start(end_frame, window)?;
    let mut mu = [None, None];
    let mut lambda_max = [T::zero(), T::zero()];
    let mut axis_labels = [Activity::Stationary; 2];
    for axis in Axis::BOTH {
        let k = axis.index();
        let model = &models[k];
        let x0 = make_window(tracks, members, first + 1, 2, axis)?.matrix.column(0).into_owned();
        let decomp = decompose(model, &x0, dynamics)?;
        let deciding = deciding_eigenvalue(&decomp, bands)?.map(|m| m.modulus());
        mu[k] = deciding;
        lambda_max[k] = eigen_decompose(&model.a).values.first().map_or(T::zero(), |v| v.modulus());
        axis_labels[k] = classify_group_axis(deciding, bands);
    }
    Ok(GroupActivity {
        members: members.to_vec(),
        mu,
        lambda_max,
        axis_labels,
        label: merge_axis_activity(axis_labels[0], axis_labels[1]),
    })
}

/// Activities of every group in a partition.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ActivityReport<T: Scalar> {
    pub frame: Frame,
    pub window: usize,
    pub groups: Vec<GroupActivity<T>>,
    pub atomic: Vec<AtomicResult<T>>,
}

impl<T: Scalar> ActivityReport<T> {
    pub fn first_frame(&self) -> Frame {
        self.frame + 1 - self.window as Frame
    }
}

/// Multi-member groups get group labels; singletons get atomic labels.
pub fn classify_groups<T: Scalar>(
    tracks: &TrackSet<T>,
    partition: &GroupPartition,
    estimator: &EstimatorConfig<T>,
    bands: &ActivityBands<T>,
    dynamics: &DynamicsConfig<T>,
) -> Result<ActivityReport<T>> {
    bands.validate()?;
    let frame = partition.frame;
    let history = frame.checked_sub(tracks.first_frame()).map_or(0, |d| d as usize + 1);
    let window = estimator.window.min(history);
    let groups = partition.groups();
    let results: Vec<std::result::Result<GroupActivity<T>, AtomicResult<T>>> = groups
        .par_iter()
        .map(|members| {
            if members.len() == 1 {
                classify_atomic(tracks, members[0], frame, window, estimator.r1, bands, &estimator.solver).map(Err)
            } else {
                classify_group(tracks, members, frame, window, estimator.r1, bands, dynamics, &estimator.solver)
                    .map(Ok)
            }
        })
        .collect::<Result<_>>()?;
    let mut report = ActivityReport { frame, window, groups: Vec::new(), atomic: Vec::new() };
    for r in results {
        match r {
            Ok(g) => report.groups.push(g),
            Err(a) => report.atomic.push(a),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Complex;

    fn bands() -> ActivityBands<f64> {
        ActivityBands::default()
    }

    fn scalar_track(f: impl Fn(f64) -> f64, frames: u32) -> TrackSet<f64> {
        TrackSet::from_observations((0..frames).map(|k| (k, AgentId(1), f(k as f64), 0.0))).unwrap()
    }

    fn decomp(a: &[f64], x0: &[f64], bias: &[f64]) -> ModalDecomposition<f64> {
        let n = x0.len();
        let model = InteractionModel::new(
            Axis::X,
            (0..n as u32).map(AgentId).collect(),
            DMatrix::from_row_slice(n, n, a),
            DVector::from_row_slice(bias),
        )
        .unwrap();
        decompose(&model, &DVector::from_row_slice(x0), &DynamicsConfig::default()).unwrap()
    }

    #[test]
    fn unit_mode_without_bias_is_skipped() {
        let d = decomp(&[0.5, 0.5, 0.5, 0.5], &[100.0, 120.0], &[0.0, 0.0]);
        let mu = deciding_eigenvalue(&d, &bands()).unwrap().unwrap();
        assert!(mu.modulus() < 1e-12);
        assert_eq!(classify_group_axis(Some(mu.modulus()), &bands()), Activity::Stationary);
    }

    #[test]
    fn approaching_construction() {
        let d = decomp(&[1.0, 0.0, 0.2, 0.8], &[120.0, 100.0], &[0.0, 0.0]);
        // the unit mode does not move
        let w = crate::dynamics::modal_velocity_weights(&d, 3);
        let unit = d.eigenvalues.iter().position(|l| (l.re - 1.0).abs() < 1e-12).unwrap();
        assert!(w[unit].modulus() < 1e-9);
        let mu = deciding_eigenvalue(&d, &bands()).unwrap().unwrap();
        assert_relative_eq!(mu.re, 0.8, epsilon = 1e-12);
        assert_eq!(classify_group_axis(Some(mu.modulus()), &bands()), Activity::Approaching);
    }

    #[test]
    fn unit_mode_with_bias_decides() {
        let d = decomp(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], &[0.7, 0.7]);
        let mu = deciding_eigenvalue(&d, &bands()).unwrap().unwrap();
        assert_eq!(mu, Complex::new(1.0, 0.0));
        let still = decomp(&[1.0, 0.0, 0.0, 1.0], &[3.0, 4.0], &[0.0, 0.0]);
        assert_eq!(deciding_eigenvalue(&still, &bands()).unwrap(), None);
        assert_eq!(classify_group_axis(None, &bands()), Activity::Stationary);
    }

    #[test]
    fn defective_decomposition_is_an_error() {
        let d = decomp(&[1.0, 1.0, 0.0, 1.0], &[1.0, 2.0], &[0.0, 0.0]);
        assert!(matches!(deciding_eigenvalue(&d, &bands()), Err(Error::Defective { .. })));
    }

    #[test]
    fn axis_band_examples() {
        let b = bands();
        assert_eq!(classify_group_axis(Some(0.0), &b), Activity::Stationary);
        assert_eq!(classify_group_axis(Some(1.001), &b), Activity::Walking);
        assert_eq!(classify_group_axis(Some(1.2), &b), Activity::Splitting);
        assert_eq!(classify_group_axis(Some(0.97), &b), Activity::Approaching);
        assert_eq!(classify_group_axis(Some(0.5), &b), Activity::Approaching);
        assert_eq!(classify_group_axis(Some(1.005), &b), Activity::Splitting);
    }

    #[test]
    fn merge_priority() {
        assert_eq!(merge_axis_activity(Activity::Splitting, Activity::Approaching), Activity::Splitting);
        assert_eq!(merge_axis_activity(Activity::Stationary, Activity::Stationary), Activity::Stationary);
        assert_eq!(merge_axis_activity(Activity::Walking, Activity::Approaching), Activity::Walking);
    }

    #[test]
    fn atomic_examples() {
        let cfg = SolverConfig::default();
        let constant = scalar_track(|_| 5.0, 30);
        let r = classify_atomic(&constant, AgentId(1), 29, 25, 1.0, &bands(), &cfg).unwrap();
        assert_eq!(r.axis_labels[0], AtomicActivity::Stationary);
        assert_eq!(r.label, AtomicActivity::Stationary);

        let linear = scalar_track(|k| 10.0 + 2.0 * k, 30);
        let r = classify_atomic(&linear, AgentId(1), 29, 25, 1.0, &bands(), &cfg).unwrap();
        assert_relative_eq!(r.mu[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(r.b[0], 2.0, epsilon = 1e-7);
        assert_eq!(r.label, AtomicActivity::Walking);

        let geometric = scalar_track(|k| 120.0 - 20.0 * 0.8f64.powf(k), 30);
        let r = classify_atomic(&geometric, AgentId(1), 24, 25, 1.0, &bands(), &cfg).unwrap();
        assert_relative_eq!(r.mu[0], 0.8, epsilon = 1e-8);
        assert_relative_eq!(r.b[0], 24.0, epsilon = 1e-6);
        assert_eq!(r.label, AtomicActivity::Stopping);
    }

    #[test]
    fn group_model_needs_enough_frames() {
        let ts = TrackSet::from_observations(
            (0..10u32).flat_map(|k| (1..=3).map(move |a| (k, AgentId(a), a as f64 + k as f64, 0.0))),
        )
        .unwrap();
        let group = [AgentId(1), AgentId(2), AgentId(3)];
        let err = estimate_group_model(&ts, &group, 9, 4, 0.0, None, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
        assert!(estimate_group_model(&ts, &group, 9, 5, 0.0, None, &SolverConfig::default()).is_ok());
    }

    #[test]
    fn lockstep_pair_walks() {
        let v = 0.7;
        let ts = TrackSet::from_observations((0..30u32).flat_map(|k| {
            [(k, AgentId(1), v * k as f64, 0.0), (k, AgentId(2), 1.0 + v * k as f64, 0.5)]
        }))
        .unwrap();
        let group = [AgentId(1), AgentId(2)];
        let [mx, _] = estimate_group_model(&ts, &group, 29, 25, 0.0, None, &SolverConfig::default()).unwrap();
        let x = DVector::from_row_slice(&[v * 28.0, 1.0 + v * 28.0]);
        let next = crate::dynamics::step(&mx, &x).unwrap();
        assert!((next[0] - v * 29.0).abs() < 1e-6 && (next[1] - 1.0 - v * 29.0).abs() < 1e-6);
        let x0 = DVector::from_row_slice(&[v * 5.0, 1.0 + v * 5.0]);
        let d = decompose(&mx, &x0, &DynamicsConfig::default()).unwrap();
        let unit = d.eigenvalues.iter().position(|l| bands().in_one_band(l.modulus())).unwrap();
        // projection of the bias on the unit mode carries the common velocity
        let u = d.eigenvectors.column(unit);
        let drift = (u * d.d[unit]).map(|c| c.re);
        assert!((drift[0] - v).abs() < 1e-6 && (drift[1] - v).abs() < 1e-6);
        let act = classify_group(&ts, &group, 29, 25, 0.0, &bands(), &DynamicsConfig::default(), &SolverConfig::default())
            .unwrap();
        assert_eq!(act.label, Activity::Walking);
    }
}
