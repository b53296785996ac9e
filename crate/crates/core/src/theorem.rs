//! Numerical checks of the cyclic-shift null:
//!
//! - stationary masks (`E_k(t, f) = phi_k(f)`) give FDR exactly 1 at every tier;
//! - aligned full-band windows of length `tau` give an unsmoothed full-consensus
//!   ratio of `(tau / T)^(K - 1)`;
//! - the sampled null mean agrees with exhaustive enumeration on small instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::null_fdr::{self, NullConfig};
use crate::types::BinaryMask;

/// One line of check output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub params: String,
    pub measured: f64,
    pub expected: f64,
    pub pass: bool,
}

impl CheckRow {
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.check,
            self.params,
            self.measured,
            self.expected,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

pub const TSV_HEADER: &str = "check\tparams\tmeasured\texpected\tpass";

/// Random stationary committee: each member keeps a random subset of bins at every frame.
pub fn stationary_masks(
    rng: &mut impl Rng,
    members: usize,
    frames: usize,
    bins: usize,
) -> Vec<BinaryMask> {
    (0..members)
        .map(|_| {
            let p: f64 = rng.random_range(0.05..0.95);
            let phi: Vec<bool> = (0..bins).map(|_| rng.random_bool(p)).collect();
            BinaryMask::from_fn(frames, bins, |_, f| phi[f])
        })
        .collect()
}

/// Committee of identical full-band windows `[0, tau)`.
pub fn aligned_windows(members: usize, frames: usize, bins: usize, tau: usize) -> Vec<BinaryMask> {
    vec![BinaryMask::from_fn(frames, bins, |t, _| t < tau); members]
}

/// Largest `|FDR - 1|` over every tier of `profiles` random stationary committees.
pub fn stationary_sweep(
    members: usize,
    frames: usize,
    bins: usize,
    profiles: usize,
    permutations: usize,
    seed: u64,
) -> Result<CheckRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = NullConfig {
        permutations,
        seed,
        ..NullConfig::default()
    };
    let mut worst = 0.0f64;
    for _ in 0..profiles {
        let masks = stationary_masks(&mut rng, members, frames, bins);
        let profile = null_fdr::empirical_fdr(&masks, &cfg)?;
        for f in profile.fdrs() {
            worst = worst.max((f - 1.0).abs());
        }
    }
    Ok(CheckRow {
        check: "stationary_fdr_is_one".into(),
        params: format!("K={members} T={frames} F={bins} profiles={profiles} B={permutations}"),
        measured: worst,
        expected: 0.0,
        pass: worst == 0.0,
    })
}

/// Sampled unsmoothed full-consensus ratio for aligned windows, checked against `[lo, hi]`.
pub fn sparse_window_ratio(
    members: usize,
    frames: usize,
    bins: usize,
    tau: usize,
    permutations: usize,
    seed: u64,
    bounds: (f64, f64),
) -> Result<CheckRow> {
    let masks = aligned_windows(members, frames, bins, tau);
    let cfg = NullConfig {
        permutations,
        seed,
        ..NullConfig::default()
    };
    let profile = null_fdr::empirical_fdr(&masks, &cfg)?;
    let measured = profile.headline().unsmoothed_ratio.unwrap_or(f64::NAN);
    let rho = tau as f64 / frames as f64;
    Ok(CheckRow {
        check: "sparse_window_ratio".into(),
        params: format!(
            "K={members} T={frames} F={bins} tau={tau} B={permutations} bounds=[{}, {}]",
            bounds.0, bounds.1
        ),
        measured,
        expected: rho.powi(members as i32 - 1),
        pass: measured >= bounds.0 && measured <= bounds.1,
    })
}

/// Sampled vs exhaustively enumerated null means on random small committees.
/// `measured` is the largest deviation in standard errors; a tier with zero
/// null variance must match exactly.
pub fn brute_force_agreement(
    instances: usize,
    members: usize,
    frames: usize,
    bins: usize,
    permutations: usize,
    seed: u64,
) -> Result<CheckRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = permutations as f64;
    let mut worst = 0.0f64;
    let mut pass = true;
    for i in 0..instances {
        let masks: Vec<BinaryMask> = (0..members)
            .map(|_| {
                let p: f64 = rng.random_range(0.1..0.7);
                BinaryMask::from_fn(frames, bins, |_, _| rng.random_bool(p))
            })
            .collect();
        let exact = null_fdr::brute_force_null(&masks)?;
        let cfg = NullConfig {
            permutations,
            seed: seed.wrapping_add(i as u64),
            ..NullConfig::default()
        };
        let sampled = null_fdr::empirical_fdr(&masks, &cfg)?;
        for (tier, (mean, var)) in sampled
            .per_tier
            .iter()
            .zip(exact.mean.iter().zip(&exact.variance))
        {
            let diff = (tier.null_mean - mean).abs();
            let se = (var / b).sqrt();
            if se == 0.0 {
                pass &= diff < 1e-9;
            } else {
                worst = worst.max(diff / se);
            }
        }
    }
    Ok(CheckRow {
        check: "null_mean_matches_enumeration".into(),
        params: format!(
            "instances={instances} K={members} T={frames} F={bins} B={permutations} max_se=3"
        ),
        measured: worst,
        expected: 0.0,
        pass: pass && worst <= 3.0,
    })
}

/// The full suite with its pinned parameters and tolerances.
pub fn run_all(seed: u64) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for members in [2, 3, 4] {
        for frames in [16, 128] {
            for bins in [8, 64] {
                rows.push(stationary_sweep(
                    members,
                    frames,
                    bins,
                    50,
                    null_fdr::DEFAULT_PERMUTATIONS,
                    seed,
                )?);
            }
        }
    }
    rows.push(sparse_window_ratio(
        2,
        500,
        16,
        50,
        5000,
        seed,
        (0.08, 0.12),
    )?);
    rows.push(sparse_window_ratio(
        3,
        500,
        16,
        100,
        5000,
        seed,
        (0.03, 0.05),
    )?);
    rows.push(brute_force_agreement(25, 2, 6, 4, 50_000, seed)?);
    Ok(rows)
}
