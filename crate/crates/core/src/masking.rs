//! Masking, imputation and the scalar explanation metrics: faithfulness,
//! fidelity drop, average increase/drop/gain, sparseness and complexity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::committee::Classifier;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::types::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationKind {
    ZeroFill,
    NeighborFrequencyMean,
}

/// How removed bins are filled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputationPolicy {
    pub kind: ImputationKind,
    /// Frequency half-window for [`ImputationKind::NeighborFrequencyMean`].
    pub neighbor_radius: usize,
}

impl ImputationPolicy {
    pub const DEFAULT_RADIUS: usize = 3;

    pub fn zero_fill() -> Self {
        Self {
            kind: ImputationKind::ZeroFill,
            neighbor_radius: Self::DEFAULT_RADIUS,
        }
    }

    pub fn neighbor_mean(radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::Config("neighbor radius must be at least 1".into()));
        }
        Ok(Self {
            kind: ImputationKind::NeighborFrequencyMean,
            neighbor_radius: radius,
        })
    }
}

impl Default for ImputationPolicy {
    fn default() -> Self {
        Self::zero_fill()
    }
}

impl fmt::Display for ImputationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ImputationKind::ZeroFill => f.write_str("zero"),
            ImputationKind::NeighborFrequencyMean => write!(f, "neighbor:{}", self.neighbor_radius),
        }
    }
}

impl FromStr for ImputationPolicy {
    type Err = Error;

    /// Accepts `zero`, `neighbor` or `neighbor:<radius>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.split_once(':') {
            None if s == "zero" => Ok(Self::zero_fill()),
            None if s == "neighbor" => Self::neighbor_mean(Self::DEFAULT_RADIUS),
            Some(("neighbor", r)) => {
                let radius = r
                    .parse()
                    .map_err(|_| Error::Config(format!("bad neighbor radius {r:?}")))?;
                Self::neighbor_mean(radius)
            }
            _ => Err(Error::Config(format!(
                "unknown imputation {s:?}, expected zero or neighbor[:radius]"
            ))),
        }
    }
}

/// Keeps `x` where the mask is set and zeroes everything else.
pub fn apply_mask_keep(x: &Matrix, m: &BinaryMask) -> Result<Matrix> {
    m.ensure_shape(x.shape())?;
    Matrix::from_vec(
        x.rows(),
        x.cols(),
        x.as_slice()
            .iter()
            .zip(m.bits())
            .map(|(&v, &b)| if b { v } else { 0.0 })
            .collect(),
    )
}

/// Replaces the masked bins of `x` according to `policy`.
///
/// Neighbor imputation fills a masked bin with the mean of the unmasked bins
/// within `radius` frequency bins in the same frame, falling back to the
/// frame's unmasked mean and then to 0. Only original values are averaged.
pub fn apply_mask_remove(x: &Matrix, m: &BinaryMask, policy: &ImputationPolicy) -> Result<Matrix> {
    m.ensure_shape(x.shape())?;
    let (rows, cols) = x.shape();
    let mut out = x.clone();
    match policy.kind {
        ImputationKind::ZeroFill => {
            for (v, &b) in out.as_mut_slice().iter_mut().zip(m.bits()) {
                if b {
                    *v = 0.0;
                }
            }
        }
        ImputationKind::NeighborFrequencyMean => {
            let r = policy.neighbor_radius;
            for t in 0..rows {
                let row = x.row(t);
                let keep = &m.bits()[t * cols..(t + 1) * cols];
                let (frame_sum, frame_n) = row
                    .iter()
                    .zip(keep)
                    .filter(|(_, &b)| !b)
                    .fold((0.0, 0usize), |(s, n), (&v, _)| (s + v, n + 1));
                let out_row = out.row_mut(t);
                for f in 0..cols {
                    if !keep[f] {
                        continue;
                    }
                    let lo = f.saturating_sub(r);
                    let hi = (f + r + 1).min(cols);
                    let (s, n) = (lo..hi)
                        .filter(|&g| !keep[g])
                        .fold((0.0, 0usize), |(s, n), g| (s + row[g], n + 1));
                    out_row[f] = if n > 0 {
                        s / n as f64
                    } else if frame_n > 0 {
                        frame_sum / frame_n as f64
                    } else {
                        0.0
                    };
                }
            }
        }
    }
    Ok(out)
}

/// `p_c` of the input restricted to the mask.
pub fn faithfulness(
    model: &dyn Classifier,
    x: &Matrix,
    m: &BinaryMask,
    class: usize,
) -> Result<f64> {
    model.class_proba(&apply_mask_keep(x, m)?, class)
}

/// `p_c(x) - p_c(x with the mask removed)`.
pub fn fidelity_drop(
    model: &dyn Classifier,
    x: &Matrix,
    m: &BinaryMask,
    class: usize,
    policy: &ImputationPolicy,
) -> Result<f64> {
    let before = model.class_proba(x, class)?;
    let after = model.class_proba(&apply_mask_remove(x, m, policy)?, class)?;
    Ok(before - after)
}

/// Class confidence on the original input and on the mask-kept input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRecord {
    pub p_orig: f64,
    pub p_masked_keep: f64,
}

impl ConfidenceRecord {
    pub fn new(p_orig: f64, p_masked_keep: f64) -> Self {
        Self {
            p_orig,
            p_masked_keep,
        }
    }

    pub fn increased(&self) -> bool {
        self.p_masked_keep > self.p_orig
    }

    /// Relative drop, undefined when `p_orig == 0`.
    pub fn drop_ratio(&self) -> Option<f64> {
        (self.p_orig > 0.0).then(|| (self.p_orig - self.p_masked_keep).max(0.0) / self.p_orig)
    }

    /// Relative gain, undefined when `p_orig == 1`.
    pub fn gain_ratio(&self) -> Option<f64> {
        (self.p_orig < 1.0)
            .then(|| (self.p_masked_keep - self.p_orig).max(0.0) / (1.0 - self.p_orig))
    }
}

/// A percentage over the usable records plus the count of excluded ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentage {
    /// `None` when every record was excluded.
    pub value: Option<f64>,
    pub used: usize,
    pub excluded: usize,
}

fn check_records(records: &[ConfidenceRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Argument("no confidence records".into()));
    }
    for r in records {
        if !((0.0..=1.0).contains(&r.p_orig) && (0.0..=1.0).contains(&r.p_masked_keep)) {
            return Err(Error::Argument(format!(
                "probabilities ({}, {}) outside [0, 1]",
                r.p_orig, r.p_masked_keep
            )));
        }
    }
    Ok(())
}

/// AI: percentage of records whose confidence strictly increases.
pub fn average_increase(records: &[ConfidenceRecord]) -> Result<f64> {
    check_records(records)?;
    let hits = records.iter().filter(|r| r.increased()).count();
    Ok(100.0 * hits as f64 / records.len() as f64)
}

fn mean_ratio(
    records: &[ConfidenceRecord],
    ratio: impl Fn(&ConfidenceRecord) -> Option<f64>,
) -> Result<Percentage> {
    check_records(records)?;
    let ratios: Vec<f64> = records.iter().filter_map(ratio).collect();
    let used = ratios.len();
    Ok(Percentage {
        value: (used > 0).then(|| 100.0 * ratios.iter().sum::<f64>() / used as f64),
        used,
        excluded: records.len() - used,
    })
}

/// AD: mean relative confidence decrease, records with `p_orig = 0` excluded.
pub fn average_drop(records: &[ConfidenceRecord]) -> Result<Percentage> {
    mean_ratio(records, ConfidenceRecord::drop_ratio)
}

/// AG: mean relative confidence increase, records with `p_orig = 1` excluded.
pub fn average_gain(records: &[ConfidenceRecord]) -> Result<Percentage> {
    mean_ratio(records, ConfidenceRecord::gain_ratio)
}

/// A metric value that may be undefined for all-zero attribution maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapScore {
    pub value: f64,
    pub degenerate: bool,
}

/// Gini index of the sorted absolute attributions.
pub fn sparseness(attr: &Matrix) -> MapScore {
    let mut v: Vec<f64> = attr.as_slice().iter().map(|a| a.abs()).collect();
    let total: f64 = v.iter().sum();
    if total == 0.0 || v.is_empty() {
        return MapScore {
            value: 0.0,
            degenerate: true,
        };
    }
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let weighted: f64 = v
        .iter()
        .enumerate()
        .map(|(i, &x)| (2.0 * (i + 1) as f64 - n - 1.0) * x)
        .sum();
    MapScore {
        value: weighted / (n * total),
        degenerate: false,
    }
}

/// Shannon entropy (nats) of the normalized absolute attributions.
pub fn complexity(attr: &Matrix) -> MapScore {
    let total: f64 = attr.as_slice().iter().map(|a| a.abs()).sum();
    if total == 0.0 {
        return MapScore {
            value: 0.0,
            degenerate: true,
        };
    }
    let h = attr
        .as_slice()
        .iter()
        .map(|a| a.abs() / total)
        .filter(|&q| q > 0.0)
        .map(|q| -q * q.ln())
        .sum();
    MapScore {
        value: h,
        degenerate: false,
    }
}

/// Per-model fidelity drops and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFidelity {
    pub per_model: Vec<f64>,
    pub mean: f64,
}

impl MeanFidelity {
    fn from_drops(per_model: Vec<f64>) -> Self {
        let mean = per_model.iter().sum::<f64>() / per_model.len() as f64;
        Self { per_model, mean }
    }
}

/// Each member's fidelity drop when its own mask is removed.
pub fn agri_mean_fidelity(
    committee: &[&dyn Classifier],
    x: &Matrix,
    masks: &[BinaryMask],
    class: usize,
    policy: &ImputationPolicy,
) -> Result<MeanFidelity> {
    if committee.len() != masks.len() {
        return Err(Error::Argument(format!(
            "{} models but {} masks",
            committee.len(),
            masks.len()
        )));
    }
    if committee.is_empty() {
        return Err(Error::CommitteeSize(0));
    }
    let drops = committee
        .iter()
        .zip(masks)
        .map(|(model, m)| fidelity_drop(*model, x, m, class, policy))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanFidelity::from_drops(drops))
}

/// Each member's fidelity drop when one shared consensus-tier mask is removed.
pub fn agri_mean_fidelity_shared(
    committee: &[&dyn Classifier],
    x: &Matrix,
    tier_mask: &BinaryMask,
    class: usize,
    policy: &ImputationPolicy,
) -> Result<MeanFidelity> {
    if committee.is_empty() {
        return Err(Error::CommitteeSize(0));
    }
    let drops = committee
        .iter()
        .map(|model| fidelity_drop(*model, x, tier_mask, class, policy))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanFidelity::from_drops(drops))
}
