//! Cyclic-shift permutation null and per-tier empirical FDR.
//!
//! Each null draw shifts every committee mask independently along the time
//! axis by a uniform offset, recomputes the consensus and counts the bins in
//! every tier. The smoothed FDR of tier `lambda` is
//! `(mean null count + 1) / (observed count + 1)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::consensus::{agreement_histogram, observed_consensus, tier_counts_from_histogram};
use crate::error::{Error, Result};
use crate::types::{common_shape, BinaryMask};

pub const DEFAULT_PERMUTATIONS: usize = 100;
pub const DEFAULT_TREND_THRESHOLD: f64 = 0.8;

/// Largest number of shift vectors [`brute_force_null`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadlineTier {
    /// lambda = 1: every member agrees.
    FullConsensus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullConfig {
    pub permutations: usize,
    pub seed: u64,
    pub headline_tier: HeadlineTier,
    /// FDR(lambda = 1) at or above this is classified [`Trend::NearOne`].
    pub trend_threshold: f64,
}

impl Default for NullConfig {
    fn default() -> Self {
        Self {
            permutations: DEFAULT_PERMUTATIONS,
            seed: 0,
            headline_tier: HeadlineTier::FullConsensus,
            trend_threshold: DEFAULT_TREND_THRESHOLD,
        }
    }
}

impl NullConfig {
    pub fn validate(&self) -> Result<()> {
        if self.permutations == 0 {
            return Err(Error::Config("permutations must be at least 1".into()));
        }
        if !(self.trend_threshold > 0.0 && self.trend_threshold < 1.0) {
            return Err(Error::Config(format!(
                "trend threshold {} outside (0, 1)",
                self.trend_threshold
            )));
        }
        Ok(())
    }
}

/// One time offset per committee member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftVector {
    pub offsets: Vec<usize>,
}

/// Counter-based source of shift vectors.
///
/// Draw `b` depends only on `(seed, key, b)`, so permutations can be
/// evaluated in any order or in parallel and still see the same offsets.
#[derive(Debug, Clone)]
pub struct ShiftSampler {
    key: [u8; 32],
    frames: usize,
    members: usize,
}

impl ShiftSampler {
    pub fn new(seed: u64, key: &str, frames: usize, members: usize) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"agri-fidelity/shift/v1");
        hasher.update(seed.to_le_bytes());
        hasher.update((key.len() as u64).to_le_bytes());
        hasher.update(key.as_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; 32];
        bytes.copy_from_slice(&digest);
        Self {
            key: bytes,
            frames,
            members,
        }
    }

    pub fn draw(&self, b: u64) -> ShiftVector {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(b);
        ShiftVector {
            offsets: (0..self.members)
                .map(|_| rng.random_range(0..self.frames))
                .collect(),
        }
    }
}

/// `out(t, f) = mask((t + delta) mod T, f)`.
pub fn cyclic_shift(mask: &BinaryMask, delta: usize) -> BinaryMask {
    let (rows, cols) = mask.shape();
    if rows == 0 {
        return mask.clone();
    }
    let delta = delta % rows;
    let mut bits = Vec::with_capacity(rows * cols);
    for t in 0..rows {
        let src = (t + delta) % rows;
        bits.extend_from_slice(&mask.bits()[src * cols..(src + 1) * cols]);
    }
    BinaryMask::from_bits(rows, cols, bits).expect("shape preserved")
}

/// Tier counts of the consensus of `masks`, each shifted by its offset.
/// Entry `m - 1` is the number of bins where at least `m` members agree.
pub fn shifted_tier_counts(masks: &[BinaryMask], shifts: &ShiftVector) -> Vec<usize> {
    let (rows, cols) = masks[0].shape();
    let mut agreement = vec![0u32; rows * cols];
    for (mask, &delta) in masks.iter().zip(&shifts.offsets) {
        let delta = delta % rows;
        let bits = mask.bits();
        for t in 0..rows {
            let src = (t + delta) % rows;
            let dst = &mut agreement[t * cols..(t + 1) * cols];
            for (a, &b) in dst.iter_mut().zip(&bits[src * cols..(src + 1) * cols]) {
                *a += b as u32;
            }
        }
    }
    tier_counts_from_histogram(&agreement_histogram(&agreement, masks.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Trend {
    Downward,
    NearOne,
}

impl Trend {
    pub fn as_str(self) -> &'static str {
        match self {
            Trend::Downward => "Downward",
            Trend::NearOne => "NearOne",
        }
    }
}

/// FDR of one consensus tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierFdr {
    pub level: usize,
    pub lambda: f64,
    pub observed: usize,
    pub null_mean: f64,
    pub fdr: f64,
    /// `null_mean / observed` without smoothing; absent when nothing is observed.
    pub unsmoothed_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrProfile {
    pub per_tier: Vec<TierFdr>,
    pub permutations_used: usize,
    pub reliability: f64,
    pub trend: Trend,
}

impl FdrProfile {
    pub fn fdrs(&self) -> Vec<f64> {
        self.per_tier.iter().map(|t| t.fdr).collect()
    }

    pub fn headline(&self) -> &TierFdr {
        self.per_tier.last().expect("profile covers every tier")
    }
}

/// Reliability from the headline FDR: `max(0, 1 - FDR)`.
pub fn reliability(headline_fdr: f64) -> f64 {
    (1.0 - headline_fdr).max(0.0)
}

/// `NearOne` iff the full-consensus FDR (last entry) is at least `threshold`.
pub fn classify_trend(fdrs: &[f64], threshold: f64) -> Trend {
    match fdrs.last() {
        Some(&f) if f >= threshold => Trend::NearOne,
        Some(_) => Trend::Downward,
        None => Trend::NearOne,
    }
}

/// Sum over `b` of the shifted tier counts, as exact integers.
pub fn null_count_totals(
    masks: &[BinaryMask],
    sampler: &ShiftSampler,
    permutations: usize,
) -> Vec<u64> {
    let k = masks.len();
    (0..permutations as u64)
        .into_par_iter()
        .map(|b| shifted_tier_counts(masks, &sampler.draw(b)))
        .fold(
            || vec![0u64; k],
            |mut acc, counts| {
                for (a, c) in acc.iter_mut().zip(counts) {
                    *a += c as u64;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; k],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}

/// Per-tier empirical FDR with shift draws keyed by `cfg.seed` alone.
pub fn empirical_fdr(masks: &[BinaryMask], cfg: &NullConfig) -> Result<FdrProfile> {
    empirical_fdr_keyed(masks, cfg, "")
}

/// Per-tier empirical FDR; `key` (normally the sample id) selects an
/// independent shift stream for each sample under the same seed.
pub fn empirical_fdr_keyed(
    masks: &[BinaryMask],
    cfg: &NullConfig,
    key: &str,
) -> Result<FdrProfile> {
    cfg.validate()?;
    let observed = observed_consensus(masks)?.tier_counts();
    let (rows, _) = common_shape(masks)?;
    let k = masks.len();
    let sampler = ShiftSampler::new(cfg.seed, key, rows, k);
    let totals = null_count_totals(masks, &sampler, cfg.permutations);
    let b = cfg.permutations as f64;

    let per_tier: Vec<TierFdr> = (1..=k)
        .map(|level| {
            let obs = observed[level - 1];
            let null_mean = totals[level - 1] as f64 / b;
            TierFdr {
                level,
                lambda: level as f64 / k as f64,
                observed: obs,
                null_mean,
                fdr: (null_mean + 1.0) / (obs as f64 + 1.0),
                unsmoothed_ratio: (obs > 0).then(|| null_mean / obs as f64),
            }
        })
        .collect();
    let fdrs: Vec<f64> = per_tier.iter().map(|t| t.fdr).collect();
    let headline = *fdrs.last().expect("K >= 2 tiers");
    Ok(FdrProfile {
        reliability: reliability(headline),
        trend: classify_trend(&fdrs, cfg.trend_threshold),
        per_tier,
        permutations_used: cfg.permutations,
    })
}

/// Exact first and second moments of the null tier counts.
#[derive(Debug, Clone, PartialEq)]
pub struct NullExpectation {
    /// `mean[m - 1]`: expected count of tier `m/K` over all shift vectors.
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub shift_vectors: u128,
}

/// Enumerates all `T^K` shift vectors and averages the tier counts exactly.
pub fn brute_force_null(masks: &[BinaryMask]) -> Result<NullExpectation> {
    if masks.len() < 2 {
        return Err(Error::CommitteeSize(masks.len()));
    }
    let (rows, _) = common_shape(masks)?;
    let k = masks.len();
    let total = (rows as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if total > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            shifts: total,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut sum = vec![0u128; k];
    let mut sum_sq = vec![0u128; k];
    let mut offsets = vec![0usize; k];
    loop {
        let counts = shifted_tier_counts(
            masks,
            &ShiftVector {
                offsets: offsets.clone(),
            },
        );
        for (i, c) in counts.into_iter().enumerate() {
            sum[i] += c as u128;
            sum_sq[i] += (c as u128) * (c as u128);
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == k {
                let n = total as f64;
                let mean: Vec<f64> = sum.iter().map(|&s| s as f64 / n).collect();
                let variance = sum_sq
                    .iter()
                    .zip(&mean)
                    .map(|(&sq, &m)| (sq as f64 / n - m * m).max(0.0))
                    .collect();
                return Ok(NullExpectation {
                    mean,
                    variance,
                    shift_vectors: total,
                });
            }
            offsets[pos] += 1;
            if offsets[pos] < rows {
                break;
            }
            offsets[pos] = 0;
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::observed_consensus;
    use rand::Rng;

    fn random_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, p: f64) -> BinaryMask {
        BinaryMask::from_fn(rows, cols, |_, _| rng.random_bool(p))
    }

    fn stationary(rows: usize, profile: &[bool]) -> BinaryMask {
        BinaryMask::from_fn(rows, profile.len(), |_, f| profile[f])
    }

    #[test]
    fn shift_identities_and_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_mask(&mut rng, 5, 3, 0.4);
        assert_eq!(cyclic_shift(&m, 0), m);
        assert_eq!(cyclic_shift(&m, 5), m);
        assert_eq!(cyclic_shift(&cyclic_shift(&m, 2), 3), m);
        let s = cyclic_shift(&m, 2);
        assert_eq!(s.active_count(), m.active_count());
        assert_eq!(s.column_counts(), m.column_counts());
        for t in 0..5 {
            for f in 0..3 {
                assert_eq!(s.get(t, f), m.get((t + 2) % 5, f));
            }
        }
    }

    #[test]
    fn shifted_counts_match_explicit_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let masks: Vec<_> = (0..3).map(|_| random_mask(&mut rng, 7, 4, 0.3)).collect();
            let shifts = ShiftVector {
                offsets: (0..3).map(|_| rng.random_range(0..7)).collect(),
            };
            let shifted: Vec<_> = masks
                .iter()
                .zip(&shifts.offsets)
                .map(|(m, &d)| cyclic_shift(m, d))
                .collect();
            assert_eq!(
                shifted_tier_counts(&masks, &shifts),
                observed_consensus(&shifted).unwrap().tier_counts()
            );
        }
    }

    #[test]
    fn common_shift_leaves_consensus_counts_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let masks: Vec<_> = (0..4).map(|_| random_mask(&mut rng, 9, 5, 0.35)).collect();
            let d = rng.random_range(0..9);
            let shifted: Vec<_> = masks.iter().map(|m| cyclic_shift(m, d)).collect();
            assert_eq!(
                observed_consensus(&shifted).unwrap().tier_counts(),
                observed_consensus(&masks).unwrap().tier_counts()
            );
        }
    }

    #[test]
    fn stationary_masks_have_unit_fdr() {
        let masks = vec![
            stationary(10, &[true, false, true, true]),
            stationary(10, &[true, true, false, false]),
            stationary(10, &[false, false, true, false]),
        ];
        for b in [1, 7, 50] {
            let cfg = NullConfig {
                permutations: b,
                seed: 3,
                ..NullConfig::default()
            };
            let p = empirical_fdr(&masks, &cfg).unwrap();
            assert!(p.fdrs().iter().all(|&f| f == 1.0));
            assert_eq!(p.reliability, 0.0);
            assert_eq!(p.trend, Trend::NearOne);
        }
    }

    #[test]
    fn empty_masks_are_smoothing_only() {
        let masks = vec![BinaryMask::empty(6, 3); 2];
        let p = empirical_fdr(&masks, &NullConfig::default()).unwrap();
        assert_eq!(p.fdrs(), vec![1.0, 1.0]);
        assert!(p.per_tier.iter().all(|t| t.unsmoothed_ratio.is_none()));
        assert_eq!(p.reliability, 0.0);
    }

    #[test]
    fn hand_enumerated_single_bin_null() {
        // Two members, T=4, one active bin each in column 0. Of the 16 shift
        // pairs, the shifted bins coincide in exactly 4, each time on one bin.
        let a = BinaryMask::from_fn(4, 2, |t, f| t == 1 && f == 0);
        let b = BinaryMask::from_fn(4, 2, |t, f| t == 3 && f == 0);
        let exact = brute_force_null(&[a, b]).unwrap();
        assert_eq!(exact.shift_vectors, 16);
        assert_eq!(exact.mean, vec![2.0 - 0.25, 0.25]);
        // full-consensus count is Bernoulli(1/4).
        assert!((exact.variance[1] - 0.1875).abs() < 1e-15);
    }

    #[test]
    fn brute_force_of_stationary_masks_matches_observed() {
        let masks = vec![
            stationary(5, &[true, false, true]),
            stationary(5, &[true, true, false]),
        ];
        let exact = brute_force_null(&masks).unwrap();
        let obs = observed_consensus(&masks).unwrap().tier_counts();
        assert_eq!(
            exact.mean,
            obs.iter().map(|&c| c as f64).collect::<Vec<_>>()
        );
        assert!(exact.variance.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn brute_force_refuses_large_instances() {
        let masks = vec![BinaryMask::empty(101, 1); 3];
        assert!(matches!(
            brute_force_null(&masks),
            Err(Error::TooLarge { .. })
        ));
        let ok = vec![BinaryMask::empty(100, 1); 3];
        assert!(brute_force_null(&ok).is_ok());
    }

    #[test]
    fn smoothing_floor_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let masks: Vec<_> = (0..4).map(|_| random_mask(&mut rng, 12, 6, 0.3)).collect();
        let cfg = NullConfig {
            permutations: 64,
            seed: 99,
            ..NullConfig::default()
        };
        let p = empirical_fdr_keyed(&masks, &cfg, "s1").unwrap();
        for t in &p.per_tier {
            assert!(t.fdr >= 1.0 / (t.observed as f64 + 1.0));
        }
        assert!(p.reliability < 1.0);
        assert_eq!(empirical_fdr_keyed(&masks, &cfg, "s1").unwrap(), p);
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        assert_eq!(
            single.install(|| empirical_fdr_keyed(&masks, &cfg, "s1").unwrap()),
            p
        );
    }

    #[test]
    fn sampler_is_keyed() {
        let a = ShiftSampler::new(1, "x", 50, 4);
        assert_eq!(a.draw(3), a.draw(3));
        assert_ne!(
            (0..8).map(|b| a.draw(b)).collect::<Vec<_>>(),
            (0..8)
                .map(|b| ShiftSampler::new(1, "y", 50, 4).draw(b))
                .collect::<Vec<_>>()
        );
        assert!(a.draw(0).offsets.iter().all(|&o| o < 50));
    }

    #[test]
    fn trend_rule() {
        assert_eq!(classify_trend(&[1.0, 1.0, 1.0, 1.0], 0.8), Trend::NearOne);
        assert_eq!(classify_trend(&[0.9, 0.4, 0.1, 0.01], 0.8), Trend::Downward);
        assert_eq!(classify_trend(&[0.1, 0.8], 0.8), Trend::NearOne);
        assert_eq!(classify_trend(&[0.1, 0.8], 0.9), Trend::Downward);
    }

    #[test]
    fn rejects_bad_config() {
        let masks = vec![BinaryMask::empty(3, 3); 2];
        let cfg = NullConfig {
            permutations: 0,
            ..NullConfig::default()
        };
        assert!(matches!(empirical_fdr(&masks, &cfg), Err(Error::Config(_))));
        assert!(matches!(
            empirical_fdr(&masks[..1], &NullConfig::default()),
            Err(Error::CommitteeSize(1))
        ));
    }
}
