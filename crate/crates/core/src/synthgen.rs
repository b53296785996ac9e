//! Synthetic spectrogram benchmark with known ground truth.
//!
//! Background is i.i.d. Gaussian noise. Unhealthy samples carry a
//! band-limited burst of `duration` frames at a random onset (a sparse,
//! time-localized event). With spurious injection enabled, Unhealthy samples
//! also carry a constant artifact band spanning every frame (a stationary
//! confound).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{save_matrix, Matrix};
use crate::types::Spectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Healthy,
    Unhealthy,
}

impl Label {
    pub fn class_index(self) -> usize {
        match self {
            Label::Healthy => 0,
            Label::Unhealthy => 1,
        }
    }

    pub fn from_class_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Label::Healthy),
            1 => Some(Label::Unhealthy),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Healthy => "Healthy",
            Label::Unhealthy => "Unhealthy",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Healthy" => Ok(Label::Healthy),
            "Unhealthy" => Ok(Label::Unhealthy),
            other => Err(Error::Argument(format!("unknown label {other:?}"))),
        }
    }
}

/// Half-open frequency-bin range `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub lo: usize,
    pub hi: usize,
}

impl Band {
    pub fn contains(&self, f: usize) -> bool {
        (self.lo..self.hi).contains(&f)
    }

    pub fn width(&self) -> usize {
        self.hi.saturating_sub(self.lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub band: Band,
    /// Burst length in frames.
    pub duration: usize,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactConfig {
    pub band: Band,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub frames: usize,
    pub bins: usize,
    pub n_per_class: usize,
    pub noise_std: f64,
    pub event: EventConfig,
    pub artifact: ArtifactConfig,
    pub spurious_injection: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frames: 128,
            bins: 64,
            n_per_class: 50,
            noise_std: 0.1,
            event: EventConfig {
                band: Band { lo: 8, hi: 16 },
                duration: 12,
                amplitude: 1.0,
            },
            // 3 bins x 128 frames = 384 bins, inside the 409-bin budget of
            // kappa = 0.05 on a 128x64 grid.
            artifact: ArtifactConfig {
                band: Band { lo: 56, hi: 59 },
                amplitude: 1.0,
            },
            spurious_injection: true,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::json("synth config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.bins == 0 {
            return Err(Error::Config("frames and bins must be positive".into()));
        }
        if self
            .frames
            .checked_mul(self.bins)
            .is_none_or(|n| n > 1 << 26)
        {
            return Err(Error::Config("spectrogram size too large".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(
                "noise_std must be finite and non-negative".into(),
            ));
        }
        let e = &self.event;
        if e.duration == 0 || e.duration > self.frames {
            return Err(Error::Config(format!(
                "event duration {} outside 1..={}",
                e.duration, self.frames
            )));
        }
        for (name, band) in [("event", e.band), ("artifact", self.artifact.band)] {
            if band.lo >= band.hi || band.hi > self.bins {
                return Err(Error::Config(format!(
                    "{name} band [{}, {}) not within [0, {})",
                    band.lo, band.hi, self.bins
                )));
            }
        }
        if !e.amplitude.is_finite() || !self.artifact.amplitude.is_finite() {
            return Err(Error::Config("amplitudes must be finite".into()));
        }
        Ok(())
    }

    /// Sample ids in generation order: Healthy first, then Unhealthy.
    pub fn sample_plan(&self) -> Vec<(usize, Label)> {
        let n = self.n_per_class;
        (0..2 * n)
            .map(|i| {
                (
                    i,
                    if i < n {
                        Label::Healthy
                    } else {
                        Label::Unhealthy
                    },
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventWindow {
    pub onset: usize,
    pub duration: usize,
    pub band: Band,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub event_window: Option<EventWindow>,
    pub artifact_band: Option<Band>,
}

impl GroundTruth {
    /// Whether bin `(t, f)` lies in the event window or the artifact band.
    pub fn covers(&self, t: usize, f: usize) -> bool {
        self.event_window
            .is_some_and(|w| w.band.contains(f) && (w.onset..w.onset + w.duration).contains(&t))
            || self.artifact_band.is_some_and(|b| b.contains(f))
    }
}

fn sample_rng(seed: u64, sample_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_index as u64);
    rng
}

/// Generates one sample. The output depends only on `(cfg, class, sample_index)`.
pub fn gen_sample(
    class: Label,
    cfg: &SynthConfig,
    sample_index: usize,
) -> Result<(Spectrogram, GroundTruth)> {
    cfg.validate()?;
    let mut rng = sample_rng(cfg.seed, sample_index);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut x = Matrix::from_fn(cfg.frames, cfg.bins, |_, _| noise.sample(&mut rng));
    let mut truth = GroundTruth::default();
    if class == Label::Unhealthy {
        let e = &cfg.event;
        let onset = rng.random_range(0..=cfg.frames - e.duration);
        for t in onset..onset + e.duration {
            for f in e.band.lo..e.band.hi {
                x[(t, f)] += e.amplitude;
            }
        }
        truth.event_window = Some(EventWindow {
            onset,
            duration: e.duration,
            band: e.band,
        });
        if cfg.spurious_injection {
            let a = &cfg.artifact;
            for t in 0..cfg.frames {
                for f in a.band.lo..a.band.hi {
                    x[(t, f)] += a.amplitude;
                }
            }
            truth.artifact_band = Some(a.band);
        }
    }
    Ok((Spectrogram::new(x)?, truth))
}

pub fn sample_id(index: usize) -> String {
    format!("{index:04}")
}

pub fn sample_file_name(id: &str) -> String {
    format!("spec_{id}.csv")
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub label: Label,
    pub file: String,
    pub ground_truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    pub frames: usize,
    pub bins: usize,
    /// Echo of the generating configuration; absent for hand-built datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<SynthConfig>,
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::json("manifest", e))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_json_str(&text).map_err(|e| e.in_file(&path))
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<&str> = self.samples.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate sample ids in manifest".into()));
        }
        for s in &self.samples {
            if s.id.is_empty()
                || !s
                    .id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '.')
                || s.id.starts_with('.')
            {
                return Err(Error::Config(format!(
                    "sample id {:?} must be [A-Za-z0-9.-]+",
                    s.id
                )));
            }
            if s.file.contains(['/', '\\']) || s.file.starts_with('.') {
                return Err(Error::Config(format!(
                    "sample file {:?} must be a plain file name",
                    s.file
                )));
            }
            if let Some(w) = s.ground_truth.event_window {
                if w.onset
                    .checked_add(w.duration)
                    .is_none_or(|end| end > self.frames)
                {
                    return Err(Error::Config(format!(
                        "sample {}: event window exceeds {} frames",
                        s.id, self.frames
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sample_path(&self, dir: impl AsRef<Path>, entry: &ManifestEntry) -> PathBuf {
        dir.as_ref().join(&entry.file)
    }
}

/// Writes every sample as CSV plus `manifest.json` into `out_dir`.
pub fn gen_dataset(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut samples = Vec::with_capacity(2 * cfg.n_per_class);
    for (index, label) in cfg.sample_plan() {
        let (x, truth) = gen_sample(label, cfg, index)?;
        let id = sample_id(index);
        let file = sample_file_name(&id);
        save_matrix(x.data(), out_dir.join(&file))?;
        samples.push(ManifestEntry {
            id,
            label,
            file,
            ground_truth: truth,
        });
    }
    let manifest = Manifest {
        seed: cfg.seed,
        frames: cfg.frames,
        bins: cfg.bins,
        config: Some(cfg.clone()),
        samples,
    };
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_json_string()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            frames: 32,
            bins: 16,
            n_per_class: 3,
            event: EventConfig {
                band: Band { lo: 2, hi: 5 },
                duration: 6,
                amplitude: 2.0,
            },
            artifact: ArtifactConfig {
                band: Band { lo: 12, hi: 14 },
                amplitude: 1.5,
            },
            seed: 9,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn healthy_is_centered_noise() {
        let cfg = SynthConfig {
            spurious_injection: false,
            ..SynthConfig::default()
        };
        for i in 0..5 {
            let (x, truth) = gen_sample(Label::Healthy, &cfg, i).unwrap();
            let n = (cfg.frames * cfg.bins) as f64;
            let mean = x.data().sum() / n;
            assert!(mean.abs() < 3.0 * cfg.noise_std / n.sqrt());
            assert_eq!(truth, GroundTruth::default());
        }
    }

    #[test]
    fn event_occupies_exact_window() {
        let cfg = SynthConfig {
            noise_std: 0.0,
            spurious_injection: false,
            ..SynthConfig::default()
        };
        assert_eq!((cfg.frames, cfg.event.duration), (128, 12));
        for i in 0..10 {
            let (x, truth) = gen_sample(Label::Unhealthy, &cfg, i).unwrap();
            let w = truth.event_window.unwrap();
            let raised: Vec<usize> = (0..cfg.frames)
                .filter(|&t| (8..16).all(|f| x.data()[(t, f)] == cfg.event.amplitude))
                .collect();
            assert_eq!(raised, (w.onset..w.onset + 12).collect::<Vec<_>>());
            assert_eq!(x.data().sum(), 12.0 * 8.0 * cfg.event.amplitude);
        }
    }

    #[test]
    fn full_length_event_covers_every_frame() {
        let cfg = SynthConfig {
            noise_std: 0.0,
            spurious_injection: false,
            event: EventConfig {
                duration: 128,
                ..SynthConfig::default().event
            },
            ..SynthConfig::default()
        };
        let (x, truth) = gen_sample(Label::Unhealthy, &cfg, 0).unwrap();
        assert_eq!(truth.event_window.unwrap().onset, 0);
        assert!((0..128).all(|t| x.data()[(t, 10)] == 1.0));
    }

    #[test]
    fn artifact_is_time_invariant() {
        let cfg = SynthConfig {
            noise_std: 0.0,
            ..small()
        };
        let (x, truth) = gen_sample(Label::Unhealthy, &cfg, 4).unwrap();
        assert_eq!(truth.artifact_band, Some(Band { lo: 12, hi: 14 }));
        assert!((0..32).all(|t| x.data()[(t, 12)] == 1.5 && x.data()[(t, 13)] == 1.5));
        let (_, healthy) = gen_sample(Label::Healthy, &cfg, 0).unwrap();
        assert!(healthy.artifact_band.is_none());
    }

    #[test]
    fn config_validation() {
        let mut cfg = small();
        cfg.event.duration = 33;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = small();
        cfg.artifact.band = Band { lo: 10, hi: 17 };
        assert!(cfg.validate().is_err());
        assert!(SynthConfig::from_json_str("{\"frames\": 0}").is_err());
        assert!(SynthConfig::from_json_str("{\"bogus\": 1}").is_err());
        let parsed = SynthConfig::from_json_str("{\"n_per_class\": 7, \"seed\": 3}").unwrap();
        assert_eq!(
            (parsed.n_per_class, parsed.seed, parsed.frames),
            (7, 3, 128)
        );
    }

    #[test]
    fn dataset_layout_and_determinism() {
        let cfg = SynthConfig {
            n_per_class: 10,
            ..small()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let manifest = gen_dataset(&cfg, a.path()).unwrap();
        gen_dataset(&cfg, b.path()).unwrap();
        assert_eq!(manifest.samples.len(), 20);
        let csvs = fs::read_dir(a.path())
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .path()
                    .extension()
                    .is_some_and(|x| x == "csv")
            })
            .count();
        assert_eq!(csvs, 20);
        for entry in fs::read_dir(a.path()).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(
                fs::read(a.path().join(&name)).unwrap(),
                fs::read(b.path().join(&name)).unwrap()
            );
        }
        let reloaded = Manifest::load(a.path()).unwrap();
        assert_eq!(reloaded, manifest);
        for s in &reloaded.samples {
            if let Some(w) = s.ground_truth.event_window {
                assert!(w.onset + w.duration <= reloaded.frames);
            }
            assert_eq!(
                s.ground_truth.event_window.is_some(),
                s.label == Label::Unhealthy
            );
        }
    }

    #[test]
    fn manifest_rejects_unsafe_entries() {
        let bad_file = r#"{"seed":0,"frames":4,"bins":4,"samples":[{"id":"a","label":"Healthy","file":"../x.csv","ground_truth":{"event_window":null,"artifact_band":null}}]}"#;
        assert!(Manifest::from_json_str(bad_file).is_err());
        let bad_window = r#"{"seed":0,"frames":4,"bins":4,"samples":[{"id":"a","label":"Unhealthy","file":"x.csv","ground_truth":{"event_window":{"onset":3,"duration":2,"band":{"lo":0,"hi":1}},"artifact_band":null}}]}"#;
        assert!(Manifest::from_json_str(bad_window).is_err());
    }
}
