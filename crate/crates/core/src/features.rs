//! Scene-level feature vector for crowd classification.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::activity::ActivityReport;
use crate::error::{Error, Result};
use crate::grouping::GroupPartition;
use crate::scalar::Scalar;
use crate::tracks::{AgentId, TrackSet};

pub const FEATURE_LEN: usize = 15;
pub const NUM_CLASSES: usize = 8;

/// Crowd categories `C1` through `C8`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CrowdClass(u8);

impl CrowdClass {
    pub fn new(index: usize) -> Result<Self> {
        if index < NUM_CLASSES {
            Ok(Self(index as u8))
        } else {
            Err(Error::Config(format!("class index {index} out of range")))
        }
    }

    /// Zero-based index (`C1` is 0).
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = CrowdClass> {
        (0..NUM_CLASSES as u8).map(CrowdClass)
    }
}

impl fmt::Display for CrowdClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.0 + 1)
    }
}

impl FromStr for CrowdClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n: usize = s
            .trim()
            .strip_prefix(['C', 'c'])
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| Error::Config(format!("invalid class label {s:?}")))?;
        if n == 0 {
            return Err(Error::Config(format!("invalid class label {s:?}")));
        }
        CrowdClass::new(n - 1)
    }
}

impl Serialize for CrowdClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CrowdClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CrowdFeatures<T: Scalar> {
    /// Groups per agent.
    pub gd: T,
    pub lam_hist_x: [u32; 3],
    pub lam_hist_y: [u32; 3],
    pub dir_hist: [u32; 8],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<CrowdClass>,
}

impl<T: Scalar> CrowdFeatures<T> {
    pub fn to_vec(&self) -> Vec<T> {
        let count = |c: u32| T::from_count(c as usize);
        std::iter::once(self.gd)
            .chain(self.lam_hist_x.iter().map(|&c| count(c)))
            .chain(self.lam_hist_y.iter().map(|&c| count(c)))
            .chain(self.dir_hist.iter().map(|&c| count(c)))
            .collect()
    }

    /// Inverse of [`to_vec`](Self::to_vec); counts are rounded to the nearest integer.
    pub fn from_slice(values: &[T], label: Option<CrowdClass>) -> Result<Self> {
        if values.len() != FEATURE_LEN {
            return Err(Error::FeatureLength { expected: FEATURE_LEN, found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite_value()) {
            return Err(Error::NonFinite("feature vector"));
        }
        let c = |i: usize| values[i].as_f64().round().max(0.0) as u32;
        Ok(Self {
            gd: values[0],
            lam_hist_x: [c(1), c(2), c(3)],
            lam_hist_y: [c(4), c(5), c(6)],
            dir_hist: std::array::from_fn(|i| c(7 + i)),
            label,
        })
    }
}

pub const FEATURE_NAMES: [&str; FEATURE_LEN] = [
    "gd", "lam_x0", "lam_x1", "lam_x2", "lam_y0", "lam_y1", "lam_y2", "dir0", "dir1", "dir2", "dir3", "dir4", "dir5",
    "dir6", "dir7",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct FeatureConfig<T> {
    /// Mean displacements shorter than this are left out of the direction histogram.
    pub min_displacement: T,
    /// Upper edge of the near-zero eigenvalue bin.
    pub zero_high: T,
}

impl<T: Scalar> Default for FeatureConfig<T> {
    fn default() -> Self {
        Self { min_displacement: T::lit(1e-6), zero_high: T::lit(0.5) }
    }
}

/// Bin of a largest eigenvalue modulus: `[0, zero_high)`, `[zero_high, 1)`, `[1, inf)`.
pub fn lambda_bin<T: Scalar>(m: T, zero_high: T) -> usize {
    if m < zero_high {
        0
    } else if m < T::one() {
        1
    } else {
        2
    }
}

/// 45-degree sector of a direction, counter-clockwise from +x.
pub fn direction_bin<T: Scalar>(dx: T, dy: T) -> usize {
    let mut deg = dy.as_f64().atan2(dx.as_f64()).to_degrees();
    if deg < 0.0 {
        deg += 360.0;
    }
    ((deg / 45.0).floor() as usize).min(7)
}

pub fn extract_features<T: Scalar>(
    tracks: &TrackSet<T>,
    partition: &GroupPartition,
    report: &ActivityReport<T>,
    config: &FeatureConfig<T>,
) -> Result<CrowdFeatures<T>> {
    if partition.is_empty() {
        return Err(Error::NoAgents);
    }
    let gd = T::from_count(partition.num_groups()) / T::from_count(partition.len());
    let mut lam = [[0u32; 3]; 2];
    let mut dir = [0u32; 8];
    let start = report.first_frame();
    let end = report.frame;

    let mut record = |lambda: [T; 2], members: &[AgentId]| -> Result<()> {
        for k in 0..2 {
            lam[k][lambda_bin(lambda[k], config.zero_high)] += 1;
        }
        let mut sum = [T::zero(); 2];
        for &a in members {
            let p0 = tracks.position(a, start).ok_or(Error::MissingData { agent: a, frame: start })?;
            let p1 = tracks.position(a, end).ok_or(Error::MissingData { agent: a, frame: end })?;
            sum[0] += p1[0] - p0[0];
            sum[1] += p1[1] - p0[1];
        }
        let n = T::from_count(members.len());
        let (dx, dy) = (sum[0] / n, sum[1] / n);
        if (dx * dx + dy * dy).sqrt() >= config.min_displacement {
            dir[direction_bin(dx, dy)] += 1;
        }
        Ok(())
    };
    for g in &report.groups {
        record(g.lambda_max, &g.members)?;
    }
    for a in &report.atomic {
        record([a.mu[0].abs(), a.mu[1].abs()], &[a.agent])?;
    }
    Ok(CrowdFeatures { gd, lam_hist_x: lam[0], lam_hist_y: lam[1], dir_hist: dir, label: None })
}

/// Element-wise mean of several feature vectors, re-binned to whole counts.
pub fn mean_features<T: Scalar>(items: &[CrowdFeatures<T>]) -> Result<Vec<T>> {
    if items.is_empty() {
        return Err(Error::InsufficientData("no feature vectors".into()));
    }
    let mut acc = vec![T::zero(); FEATURE_LEN];
    for f in items {
        for (a, v) in acc.iter_mut().zip(f.to_vec()) {
            *a += v;
        }
    }
    let n = T::from_count(items.len());
    Ok(acc.into_iter().map(|v| v / n).collect())
}

/// Reads a labeled dataset: 15 feature columns followed by a `class` column.
pub fn read_dataset<T: Scalar, R: Read>(reader: R) -> Result<Vec<(Vec<T>, Option<CrowdClass>)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    let class_col = headers.iter().position(|h| h == "class");
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let mut values = Vec::with_capacity(FEATURE_LEN);
        let mut label = None;
        for (col, field) in rec.iter().enumerate() {
            if Some(col) == class_col {
                if !field.is_empty() {
                    label = Some(field.parse().map_err(|e: Error| Error::Parse { line, message: e.to_string() })?);
                }
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse { line, message: format!("bad number {field:?}") })?;
            values.push(T::lit(v));
        }
        if values.len() != FEATURE_LEN {
            return Err(Error::FeatureLength { expected: FEATURE_LEN, found: values.len() });
        }
        out.push((values, label));
    }
    Ok(out)
}

pub fn write_dataset<T: Scalar, W: Write>(writer: W, rows: &[(Vec<T>, Option<CrowdClass>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.push("class");
    w.write_record(&header).map_err(csv_io)?;
    for (values, label) in rows {
        if values.len() != FEATURE_LEN {
            return Err(Error::FeatureLength { expected: FEATURE_LEN, found: values.len() });
        }
        let mut rec: Vec<String> = values.iter().map(|v| v.as_f64().to_string()).collect();
        rec.push(label.map(|l| l.to_string()).unwrap_or_default());
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
