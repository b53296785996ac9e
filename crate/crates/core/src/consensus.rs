//! Committee consensus over binary explanation masks and its tier
//! stratification.
//!
//! The consensus at a bin is the fraction of the `K` committee masks that
//! mark it. Because that fraction is always `m / K` for an integer `m`, the
//! map stores the integer agreement counts and thresholds on them, which is
//! exact where a float comparison against `m / K` would need an epsilon.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::types::{common_shape, BinaryMask};

/// Per-bin agreement of a `K`-member committee.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusMap {
    rows: usize,
    cols: usize,
    committee_size: usize,
    counts: Vec<u32>,
}

impl ConsensusMap {
    /// Builds a map from integer agreement counts, each in `0..=K`.
    pub fn from_counts(
        rows: usize,
        cols: usize,
        committee_size: usize,
        counts: Vec<u32>,
    ) -> Result<Self> {
        if committee_size < 2 {
            return Err(Error::CommitteeSize(committee_size));
        }
        if counts.len() != rows * cols {
            return Err(Error::Argument(format!(
                "{} counts cannot fill a {rows}x{cols} map",
                counts.len()
            )));
        }
        if let Some(c) = counts.iter().find(|&&c| c as usize > committee_size) {
            return Err(Error::Argument(format!(
                "agreement count {c} exceeds committee size {committee_size}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            committee_size,
            counts,
        })
    }

    /// Builds a map from real values on the `{0, 1/K, ..., 1}` grid.
    pub fn from_values(values: &Matrix, committee_size: usize) -> Result<Self> {
        if committee_size < 2 {
            return Err(Error::CommitteeSize(committee_size));
        }
        let k = committee_size as f64;
        // Half-ulp-scale guard against rounding of m/K.
        let eps = 1.0 / (2.0 * k * 1e6);
        let mut counts = Vec::with_capacity(values.len());
        for &v in values.as_slice() {
            let scaled = v * k;
            let m = scaled.round();
            if !(0.0..=k).contains(&m) || (scaled - m).abs() > eps * k {
                return Err(Error::Argument(format!(
                    "consensus value {v} is not a multiple of 1/{committee_size} in [0, 1]"
                )));
            }
            counts.push(m as u32);
        }
        Self::from_counts(values.rows(), values.cols(), committee_size, counts)
    }

    pub fn committee_size(&self) -> usize {
        self.committee_size
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Number of committee members marking bin `(t, f)`.
    pub fn agreement(&self, t: usize, f: usize) -> u32 {
        self.counts[t * self.cols + f]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn value(&self, t: usize, f: usize) -> f64 {
        self.agreement(t, f) as f64 / self.committee_size as f64
    }

    pub fn to_matrix(&self) -> Matrix {
        let k = self.committee_size as f64;
        Matrix::from_vec(
            self.rows,
            self.cols,
            self.counts.iter().map(|&c| c as f64 / k).collect(),
        )
        .expect("consensus shape is consistent")
    }

    /// `hist[m]` is the number of bins with exactly `m` agreeing members.
    pub fn agreement_histogram(&self) -> Vec<usize> {
        agreement_histogram(&self.counts, self.committee_size)
    }

    /// Active-bin count of every tier `m/K`, `m = 1..=K`, without building masks.
    pub fn tier_counts(&self) -> Vec<usize> {
        tier_counts_from_histogram(&self.agreement_histogram())
    }
}

pub(crate) fn agreement_histogram(counts: &[u32], committee_size: usize) -> Vec<usize> {
    let mut hist = vec![0usize; committee_size + 1];
    for &c in counts {
        hist[c as usize] += 1;
    }
    hist
}

/// Suffix sums of an agreement histogram: entry `m - 1` counts bins with at
/// least `m` agreeing members.
pub(crate) fn tier_counts_from_histogram(hist: &[usize]) -> Vec<usize> {
    let k = hist.len() - 1;
    let mut out = vec![0usize; k];
    let mut acc = 0;
    for m in (1..=k).rev() {
        acc += hist[m];
        out[m - 1] = acc;
    }
    out
}

/// One consensus tier: at least `level` of `K` members agree.
#[derive(Debug, Clone, PartialEq)]
pub struct Tier {
    pub level: usize,
    pub lambda: f64,
    pub mask: BinaryMask,
}

/// Nested tier masks, ascending in lambda.
#[derive(Debug, Clone, PartialEq)]
pub struct TierMaskSet {
    pub tiers: Vec<Tier>,
}

impl TierMaskSet {
    pub fn committee_size(&self) -> usize {
        self.tiers.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.tiers.iter().map(|t| t.mask.active_count()).collect()
    }

    pub fn full_consensus(&self) -> &BinaryMask {
        &self.tiers.last().expect("tier set is never empty").mask
    }

    pub fn tier(&self, level: usize) -> Option<&Tier> {
        self.tiers.iter().find(|t| t.level == level)
    }
}

/// Fraction of members marking each bin: `S(t,f) = (1/K) sum_k E_k(t,f)`.
pub fn observed_consensus(masks: &[BinaryMask]) -> Result<ConsensusMap> {
    if masks.len() < 2 {
        return Err(Error::CommitteeSize(masks.len()));
    }
    let (rows, cols) = common_shape(masks)?;
    let mut counts = vec![0u32; rows * cols];
    for m in masks {
        for (c, &b) in counts.iter_mut().zip(m.bits()) {
            *c += b as u32;
        }
    }
    ConsensusMap::from_counts(rows, cols, masks.len(), counts)
}

/// Non-zero consensus levels `{1/K, 2/K, ..., 1}`, ascending.
pub fn tier_set(committee_size: usize) -> Result<Vec<f64>> {
    if committee_size < 2 {
        return Err(Error::CommitteeSize(committee_size));
    }
    let k = committee_size as f64;
    Ok((1..=committee_size).map(|m| m as f64 / k).collect())
}

/// Splits a consensus map into one binary mask per tier: bin active in tier
/// `m/K` iff at least `m` members agree on it.
pub fn stratify(s: &ConsensusMap) -> TierMaskSet {
    let k = s.committee_size();
    let tiers = (1..=k)
        .map(|level| Tier {
            level,
            lambda: level as f64 / k as f64,
            mask: BinaryMask::from_bits(
                s.rows,
                s.cols,
                s.counts.iter().map(|&c| c as usize >= level).collect(),
            )
            .expect("consensus shape is consistent"),
        })
        .collect();
    TierMaskSet { tiers }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_masks(rng: &mut ChaCha8Rng, k: usize, rows: usize, cols: usize) -> Vec<BinaryMask> {
        (0..k)
            .map(|_| {
                let density: f64 = rng.random_range(0.05..0.6);
                BinaryMask::from_fn(rows, cols, |_, _| rng.random_bool(density))
            })
            .collect()
    }

    #[test]
    fn identical_masks_give_full_agreement() {
        let m = BinaryMask::from_fn(4, 3, |t, f| (t + f) % 3 == 0);
        let s = observed_consensus(&vec![m.clone(); 4]).unwrap();
        assert_eq!(s.to_matrix(), m.to_matrix());
    }

    #[test]
    fn two_member_average() {
        // bin (0,0): only first member; bin (0,1): both.
        let a = BinaryMask::from_bits(1, 2, vec![true, true]).unwrap();
        let b = BinaryMask::from_bits(1, 2, vec![false, true]).unwrap();
        let s = observed_consensus(&[a, b]).unwrap();
        assert_eq!(s.value(0, 0), 0.5);
        assert_eq!(s.value(0, 1), 1.0);
    }

    #[test]
    fn rejects_small_committee_and_mismatched_shapes() {
        let m = BinaryMask::empty(2, 2);
        assert!(matches!(
            observed_consensus(std::slice::from_ref(&m)),
            Err(Error::CommitteeSize(1))
        ));
        assert!(matches!(
            observed_consensus(&[m, BinaryMask::empty(2, 3)]),
            Err(Error::Dimension { .. })
        ));
        assert!(tier_set(1).is_err());
    }

    #[test]
    fn random_consensus_matches_per_bin_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let masks = random_masks(&mut rng, 4, 9, 5);
            let s = observed_consensus(&masks).unwrap();
            for t in 0..9 {
                for f in 0..5 {
                    let brute = masks.iter().filter(|m| m.get(t, f)).count();
                    assert_eq!(s.agreement(t, f) as usize, brute);
                    let scaled = s.value(t, f) * 4.0;
                    assert_eq!(scaled, scaled.round());
                }
            }
        }
    }

    #[test]
    fn tier_sets() {
        assert_eq!(tier_set(4).unwrap(), vec![0.25, 0.5, 0.75, 1.0]);
        assert_eq!(tier_set(2).unwrap(), vec![0.5, 1.0]);
        assert_eq!(tier_set(5).unwrap(), vec![0.2, 0.4, 0.6, 0.8, 1.0]);
    }

    #[test]
    fn three_quarter_bin_membership() {
        let values = Matrix::from_rows(&[[0.75, 0.0]]);
        let set = stratify(&ConsensusMap::from_values(&values, 4).unwrap());
        let active: Vec<bool> = set.tiers.iter().map(|t| t.mask.get(0, 0)).collect();
        assert_eq!(active, vec![true, true, true, false]);
        assert!(set.tiers.iter().all(|t| !t.mask.get(0, 1)));
    }

    #[test]
    fn zero_consensus_has_empty_tiers() {
        let s = ConsensusMap::from_values(&Matrix::zeros(3, 3), 3).unwrap();
        assert!(stratify(&s).counts().iter().all(|&c| c == 0));
    }

    #[test]
    fn from_values_tolerates_rounding_but_rejects_off_grid() {
        let v = Matrix::from_rows(&[[1.0 / 3.0, 2.0 / 3.0, 0.1 + 0.2 + 0.4 - 0.7 + 1.0]]);
        let s = ConsensusMap::from_values(&v, 3).unwrap();
        assert_eq!(s.counts(), &[1, 2, 3]);
        assert!(ConsensusMap::from_values(&Matrix::from_rows(&[[0.4]]), 3).is_err());
        assert!(ConsensusMap::from_values(&Matrix::from_rows(&[[1.5]]), 2).is_err());
    }

    #[test]
    fn stratification_matches_thresholding_and_nests() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let masks = random_masks(&mut rng, 4, 8, 6);
            let s = observed_consensus(&masks).unwrap();
            let set = stratify(&s);
            assert_eq!(set.committee_size(), 4);
            for tier in &set.tiers {
                let brute = (0..8)
                    .flat_map(|t| (0..6).map(move |f| (t, f)))
                    .filter(|&(t, f)| s.value(t, f) >= tier.lambda - 1.0 / (2.0 * 4.0 * 1e6))
                    .count();
                assert_eq!(tier.mask.active_count(), brute);
            }
            for pair in set.tiers.windows(2) {
                assert!(pair[1].mask.is_subset_of(&pair[0].mask));
            }
            assert_eq!(set.counts(), s.tier_counts());
            // telescoping: consecutive differences count exact agreement.
            let hist = s.agreement_histogram();
            let counts = set.counts();
            for m in 1..4 {
                assert_eq!(counts[m - 1] - counts[m], hist[m]);
            }
            // union and intersection.
            let union = BinaryMask::from_fn(8, 6, |t, f| masks.iter().any(|m| m.get(t, f)));
            let inter = BinaryMask::from_fn(8, 6, |t, f| masks.iter().all(|m| m.get(t, f)));
            assert_eq!(set.tiers[0].mask, union);
            assert_eq!(set.full_consensus(), &inter);
        }
    }

    #[test]
    fn consensus_ignores_member_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut masks = random_masks(&mut rng, 5, 6, 6);
        let s = observed_consensus(&masks).unwrap();
        masks.reverse();
        masks.swap(0, 2);
        assert_eq!(observed_consensus(&masks).unwrap(), s);
    }
}
