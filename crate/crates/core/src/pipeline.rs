//! File-level pipeline stages: train a committee on a dataset directory,
//! explain every sample with every member, and evaluate the resulting masks.
//!
//! Layout:
//! - dataset: `manifest.json`, `spec_<id>.csv`
//! - models: `model_<member>.json`, `training_metrics.json`
//! - explanations: `attr_<sample>_<member>.csv`, `mask_<sample>_<member>.csv`
//! - evaluation: `report.json`, `per_sample.csv`

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::attribution::{self, IgConfig, DEFAULT_KAPPA};
use crate::committee::{self, Classifier, Model, ModelKind, TrainConfig};
use crate::consensus::{observed_consensus, stratify};
use crate::error::{Error, Result};
use crate::masking::{self, ImputationPolicy};
use crate::matrix::{load_matrix, save_matrix};
use crate::null_fdr::{self, NullConfig};
use crate::report::{per_sample_csv, Aggregates, ModelBaselines, ModelFidelity, SampleReport};
use crate::synthgen::Manifest;
use crate::types::{BinaryMask, Spectrogram};

pub const REPORT_FILE: &str = "report.json";
pub const PER_SAMPLE_FILE: &str = "per_sample.csv";
pub const TRAINING_METRICS_FILE: &str = "training_metrics.json";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '.')
}

pub fn model_file_name(member_id: &str) -> String {
    format!("model_{member_id}.json")
}

pub fn attr_file_name(sample_id: &str, member_id: &str) -> String {
    format!("attr_{sample_id}_{member_id}.csv")
}

pub fn mask_file_name(sample_id: &str, member_id: &str) -> String {
    format!("mask_{sample_id}_{member_id}.csv")
}

/// Mixes a master seed with a stage tag (SplitMix64 finalizer).
pub fn derive_seed(master: u64, stage: u64) -> u64 {
    let mut z = master ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Which mask each member's fidelity is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FidelityMode {
    /// Each member's own mask.
    #[default]
    PerModel,
    /// The shared consensus-tier mask at `lambda`.
    ConsensusTier(f64),
}

impl fmt::Display for FidelityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FidelityMode::PerModel => f.write_str("per-model"),
            FidelityMode::ConsensusTier(l) => write!(f, "consensus:{l}"),
        }
    }
}

impl FromStr for FidelityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "per-model" {
            return Ok(FidelityMode::PerModel);
        }
        if let Some(l) = s.strip_prefix("consensus:") {
            let lambda: f64 = l
                .parse()
                .map_err(|_| Error::Config(format!("bad consensus level {l:?}")))?;
            if !(lambda > 0.0 && lambda <= 1.0) {
                return Err(Error::Config(format!(
                    "consensus level {lambda} outside (0, 1]"
                )));
            }
            return Ok(FidelityMode::ConsensusTier(lambda));
        }
        Err(Error::Config(format!(
            "unknown fidelity mode {s:?}, expected per-model or consensus:<lambda>"
        )))
    }
}

impl FidelityMode {
    /// Tier level `m` with `m / K == lambda`.
    fn tier_level(lambda: f64, committee_size: usize) -> Result<usize> {
        let scaled = lambda * committee_size as f64;
        let m = scaled.round();
        if (scaled - m).abs() > 1e-6 || m < 1.0 {
            return Err(Error::Config(format!(
                "consensus level {lambda} is not a tier of a {committee_size}-member committee"
            )));
        }
        Ok(m as usize)
    }
}

fn serialize_display<T: fmt::Display, S: Serializer>(
    v: &T,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn deserialize_from_str<'de, T, D>(d: D) -> std::result::Result<T, D::Error>
where
    T: FromStr<Err = Error>,
    D: Deserializer<'de>,
{
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

/// Every free parameter of an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kappa: f64,
    pub permutations: usize,
    pub seed: u64,
    pub theta: f64,
    #[serde(
        serialize_with = "serialize_display",
        deserialize_with = "deserialize_from_str"
    )]
    pub imputation: ImputationPolicy,
    #[serde(
        serialize_with = "serialize_display",
        deserialize_with = "deserialize_from_str"
    )]
    pub fidelity_mode: FidelityMode,
    pub ig: IgConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            permutations: null_fdr::DEFAULT_PERMUTATIONS,
            seed: 0,
            theta: null_fdr::DEFAULT_TREND_THRESHOLD,
            imputation: ImputationPolicy::zero_fill(),
            fidelity_mode: FidelityMode::PerModel,
            ig: IgConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::json("run config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::Config(format!(
                "kappa {} outside (0, 1]",
                self.kappa
            )));
        }
        if self.ig.steps == 0 {
            return Err(Error::Config("ig.steps must be at least 1".into()));
        }
        self.null_config().validate()
    }

    pub fn null_config(&self) -> NullConfig {
        NullConfig {
            permutations: self.permutations,
            seed: self.seed,
            trend_threshold: self.theta,
            ..NullConfig::default()
        }
    }
}

/// One committee member to train: `<kind>:<seed>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberSpec {
    pub kind: ModelKind,
    pub seed: u64,
}

impl MemberSpec {
    /// Member ids are positional: `m<index>-<kind>`.
    pub fn member_id(&self, index: usize) -> String {
        format!("m{index}-{}", self.kind)
    }
}

/// Parses `linear:1,mlp:2,...`.
pub fn parse_committee(spec: &str) -> Result<Vec<MemberSpec>> {
    let members =
        spec.split(',')
            .map(|part| {
                let (kind, seed) = part.split_once(':').ok_or_else(|| {
                    Error::Config(format!("committee entry {part:?} is not <kind>:<seed>"))
                })?;
                Ok(MemberSpec {
                    kind: kind.parse()?,
                    seed: seed.trim().parse().map_err(|_| {
                        Error::Config(format!("bad seed in committee entry {part:?}"))
                    })?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
    if members.len() < 2 {
        return Err(Error::CommitteeSize(members.len()));
    }
    Ok(members)
}

/// Default four-member committee, alternating kinds, seeds derived from `master`.
pub fn default_committee(master: u64) -> Vec<MemberSpec> {
    [
        ModelKind::Linear,
        ModelKind::Mlp,
        ModelKind::Linear,
        ModelKind::Mlp,
    ]
    .into_iter()
    .enumerate()
    .map(|(i, kind)| MemberSpec {
        kind,
        seed: derive_seed(master, 100 + i as u64),
    })
    .collect()
}

fn load_dataset(dataset_dir: &Path) -> Result<(Manifest, Vec<Spectrogram>)> {
    let manifest = Manifest::load(dataset_dir)?;
    let samples = manifest
        .samples
        .iter()
        .map(|e| Spectrogram::load(manifest.sample_path(dataset_dir, e)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberMetrics {
    pub id: String,
    pub kind: ModelKind,
    pub seed: u64,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetrics {
    pub train: TrainConfig,
    pub members: Vec<MemberMetrics>,
}

/// Trains every member on the whole dataset and writes the model files.
/// `cfg.seed` is replaced by each member's own seed.
pub fn train_committee(
    dataset_dir: impl AsRef<Path>,
    members: &[MemberSpec],
    cfg: &TrainConfig,
    out_dir: impl AsRef<Path>,
) -> Result<TrainingMetrics> {
    if members.len() < 2 {
        return Err(Error::CommitteeSize(members.len()));
    }
    cfg.validate()?;
    let (manifest, samples) = load_dataset(dataset_dir.as_ref())?;
    let data: Vec<_> = manifest
        .samples
        .iter()
        .zip(samples)
        .map(|(e, x)| (x.into_inner(), e.label.class_index()))
        .collect();
    let out_dir = out_dir.as_ref();
    create_dir(out_dir)?;

    let trained = members
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let member_cfg = TrainConfig {
                seed: m.seed,
                ..cfg.clone()
            };
            committee::train(m.kind, &data, &member_cfg).map(|out| (m.member_id(i), out))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut metrics = Vec::with_capacity(trained.len());
    for (id, out) in trained {
        out.model.save(out_dir.join(model_file_name(&id)))?;
        log::info!(
            "trained {id}: loss {:.4}, accuracy {:.3}",
            out.final_loss,
            out.train_accuracy
        );
        metrics.push(MemberMetrics {
            kind: out.model.kind(),
            seed: out.model.seed(),
            final_loss: out.final_loss,
            train_accuracy: out.train_accuracy,
            id,
        });
    }
    let metrics = TrainingMetrics {
        train: TrainConfig {
            seed: 0,
            ..cfg.clone()
        },
        members: metrics,
    };
    let mut text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    text.push('\n');
    write_text(&out_dir.join(TRAINING_METRICS_FILE), &text)?;
    Ok(metrics)
}

fn load_member(path: &Path) -> Result<(String, Model)> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    let id = name
        .strip_prefix("model_")
        .and_then(|n| n.strip_suffix(".json"))
        .filter(|id| valid_id(id))
        .ok_or_else(|| {
            Error::Config(format!(
                "{} is not named model_<id>.json with id [A-Za-z0-9.-]+",
                path.display()
            ))
        })?;
    Ok((id.to_string(), Model::load(path)?))
}

/// A committee loaded from `model_<id>.json` files, ordered by id.
pub struct Committee {
    pub members: Vec<(String, Model)>,
    /// Id of an extra model tagged as the explainer under audit; its mask
    /// joins the consensus like any other member's.
    pub audited: Option<String>,
}

impl Committee {
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("model_") && n.ends_with(".json"))
            })
            .collect();
        paths.sort();
        Self::load_files(&paths)
    }

    pub fn load_files(paths: &[PathBuf]) -> Result<Self> {
        if paths.len() < 2 {
            return Err(Error::CommitteeSize(paths.len()));
        }
        let mut committee = Self {
            members: Vec::with_capacity(paths.len()),
            audited: None,
        };
        for p in paths {
            committee.push(load_member(p)?)?;
        }
        Ok(committee)
    }

    fn push(&mut self, (id, model): (String, Model)) -> Result<()> {
        if self.members.iter().any(|(other, _)| *other == id) {
            return Err(Error::Config(format!(
                "duplicate committee member id {id:?}"
            )));
        }
        self.members.push((id, model));
        Ok(())
    }

    /// Adds the explainer under audit from its `model_<id>.json` file.
    pub fn with_audited(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let member = load_member(path.as_ref())?;
        self.audited = Some(member.0.clone());
        self.push(member)?;
        Ok(self)
    }

    pub fn ids(&self) -> Vec<String> {
        self.members.iter().map(|(id, _)| id.clone()).collect()
    }

    pub fn classifiers(&self) -> Vec<&dyn Classifier> {
        self.members
            .iter()
            .map(|(_, m)| m as &dyn Classifier)
            .collect()
    }
}

/// Outcome of a stage that may skip individual items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub sample_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainSummary {
    pub written: usize,
    pub degenerate: usize,
    pub skipped: Vec<Skipped>,
}

/// Writes an IG attribution and top-`kappa` mask per (sample, member).
/// Samples whose shape does not match a member are reported and skipped.
pub fn explain_dataset(
    dataset_dir: impl AsRef<Path>,
    committee: &Committee,
    kappa: f64,
    ig: &IgConfig,
    out_dir: impl AsRef<Path>,
) -> Result<ExplainSummary> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::Config(format!("kappa {kappa} outside (0, 1]")));
    }
    let (manifest, samples) = load_dataset(dataset_dir.as_ref())?;
    let out_dir = out_dir.as_ref();
    create_dir(out_dir)?;
    let data_min = attribution::dataset_min(&samples);

    let jobs: Vec<(usize, usize)> = (0..samples.len())
        .flat_map(|s| (0..committee.members.len()).map(move |m| (s, m)))
        .collect();
    let results: Vec<Result<std::result::Result<bool, Skipped>>> = jobs
        .par_iter()
        .map(|&(s, m)| {
            let entry = &manifest.samples[s];
            let (member_id, model) = &committee.members[m];
            let x = &samples[s];
            if x.shape() != model.input_shape() {
                return Ok(Err(Skipped {
                    sample_id: entry.id.clone(),
                    reason: format!(
                        "shape {:?} does not match model {member_id} input {:?}",
                        x.shape(),
                        model.input_shape()
                    ),
                }));
            }
            let attr = attribution::integrated_gradients(
                model,
                member_id,
                x,
                entry.label.class_index(),
                ig,
                data_min,
            )?;
            let bin = attribution::binarize_top_fraction(&attr.data, kappa)?;
            save_matrix(
                &attr.data,
                out_dir.join(attr_file_name(&entry.id, member_id)),
            )?;
            save_matrix(
                &bin.mask.to_matrix(),
                out_dir.join(mask_file_name(&entry.id, member_id)),
            )?;
            Ok(Ok(bin.degenerate))
        })
        .collect();

    let mut summary = ExplainSummary {
        written: 0,
        degenerate: 0,
        skipped: Vec::new(),
    };
    for r in results {
        match r? {
            Ok(degenerate) => {
                summary.written += 1;
                summary.degenerate += degenerate as usize;
            }
            Err(skip) => summary.skipped.push(skip),
        }
    }
    Ok(summary)
}

/// Parameters echoed into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decisions {
    pub kappa: f64,
    pub permutations: usize,
    pub seed: u64,
    pub theta: f64,
    pub imputation: String,
    pub fidelity_mode: String,
    pub headline_tier: String,
    pub fidelity_aggregation: String,
    pub target_class: String,
}

impl Decisions {
    fn from_config(cfg: &RunConfig) -> Self {
        Self {
            kappa: cfg.kappa,
            permutations: cfg.permutations,
            seed: cfg.seed,
            theta: cfg.theta,
            imputation: cfg.imputation.to_string(),
            fidelity_mode: cfg.fidelity_mode.to_string(),
            headline_tier: "lambda=1".into(),
            fidelity_aggregation: "arithmetic mean over committee members".into(),
            target_class: "sample label".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub decisions: Decisions,
    pub committee: Vec<String>,
    /// Member tagged as the explainer under audit, if any.
    pub audited_explainer: Option<String>,
    pub samples: Vec<SampleReport>,
    pub skipped: Vec<Skipped>,
    pub aggregates: Aggregates,
}

impl Report {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

enum SampleOutcome {
    Done(Box<SampleReport>),
    Skipped(Skipped),
}

/// Evaluates every manifest sample against the committee and its masks.
/// Samples with missing or malformed masks are skipped and listed.
pub fn evaluate_dataset(
    dataset_dir: impl AsRef<Path>,
    masks_dir: impl AsRef<Path>,
    committee: &Committee,
    cfg: &RunConfig,
) -> Result<Report> {
    cfg.validate()?;
    let dataset_dir = dataset_dir.as_ref();
    let masks_dir = masks_dir.as_ref();
    let manifest = Manifest::load(dataset_dir)?;
    let mut entries: Vec<_> = manifest.samples.iter().collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let null_cfg = cfg.null_config();

    let outcomes = entries
        .par_iter()
        .map(|entry| -> Result<SampleOutcome> {
            let skip = |reason: String| {
                Ok(SampleOutcome::Skipped(Skipped {
                    sample_id: entry.id.clone(),
                    reason,
                }))
            };
            let x = match Spectrogram::load(manifest.sample_path(dataset_dir, entry)) {
                Ok(x) => x,
                Err(e) => return skip(e.to_string()),
            };
            let mut masks = Vec::with_capacity(committee.members.len());
            let mut attrs = Vec::with_capacity(committee.members.len());
            for (id, model) in &committee.members {
                if model.input_shape() != x.shape() {
                    return skip(format!(
                        "model {id} expects {:?}, sample is {:?}",
                        model.input_shape(),
                        x.shape()
                    ));
                }
                let mask_path = masks_dir.join(mask_file_name(&entry.id, id));
                let mask = match BinaryMask::load(&mask_path) {
                    Ok(m) if m.shape() == x.shape() => m,
                    Ok(m) => {
                        return skip(format!(
                            "{}: shape {:?}, expected {:?}",
                            mask_path.display(),
                            m.shape(),
                            x.shape()
                        ))
                    }
                    Err(e) => return skip(e.to_string()),
                };
                masks.push(mask);
                let attr_path = masks_dir.join(attr_file_name(&entry.id, id));
                attrs.push(if attr_path.exists() {
                    let a = load_matrix(&attr_path)?;
                    a.ensure_shape(x.shape())
                        .map_err(|e| e.in_file(&attr_path))?;
                    Some(a)
                } else {
                    None
                });
            }
            evaluate_sample(
                &entry.id,
                entry.label,
                &x,
                committee,
                &masks,
                &attrs,
                cfg,
                &null_cfg,
            )
            .map(|r| SampleOutcome::Done(Box::new(r)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            SampleOutcome::Done(r) => samples.push(*r),
            SampleOutcome::Skipped(s) => {
                log::warn!("skipping sample {}: {}", s.sample_id, s.reason);
                skipped.push(s);
            }
        }
    }
    let ids = committee.ids();
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        decisions: Decisions::from_config(cfg),
        aggregates: Aggregates::compute(&samples, &ids),
        committee: ids,
        audited_explainer: committee.audited.clone(),
        samples,
        skipped,
    })
}

/// Evaluates one sample given its committee masks (and optional attributions).
#[allow(clippy::too_many_arguments)]
pub fn evaluate_sample(
    sample_id: &str,
    label: crate::synthgen::Label,
    x: &Spectrogram,
    committee: &Committee,
    masks: &[BinaryMask],
    attrs: &[Option<crate::matrix::Matrix>],
    cfg: &RunConfig,
    null_cfg: &NullConfig,
) -> Result<SampleReport> {
    let class = label.class_index();
    let profile = null_fdr::empirical_fdr_keyed(masks, null_cfg, sample_id)?;
    let classifiers = committee.classifiers();
    let fidelity = match cfg.fidelity_mode {
        FidelityMode::PerModel => {
            masking::agri_mean_fidelity(&classifiers, x.data(), masks, class, &cfg.imputation)?
        }
        FidelityMode::ConsensusTier(lambda) => {
            let level = FidelityMode::tier_level(lambda, masks.len())?;
            let tiers = stratify(&observed_consensus(masks)?);
            let tier = tiers.tier(level).expect("level within 1..=K");
            masking::agri_mean_fidelity_shared(
                &classifiers,
                x.data(),
                &tier.mask,
                class,
                &cfg.imputation,
            )?
        }
    };

    let mut baselines = Vec::with_capacity(masks.len());
    for (((id, model), mask), attr) in committee.members.iter().zip(masks).zip(attrs) {
        let p_orig = model.class_proba(x.data(), class)?;
        let faith = masking::faithfulness(model, x.data(), mask, class)?;
        let rec = masking::ConfidenceRecord::new(p_orig, faith);
        let score = |s: masking::MapScore| (!s.degenerate).then_some(s.value);
        baselines.push(ModelBaselines {
            model_id: id.clone(),
            p_orig,
            faithfulness: faith,
            ai_flag: rec.increased(),
            drop: rec.drop_ratio().map(|r| 100.0 * r),
            gain: rec.gain_ratio().map(|r| 100.0 * r),
            sparseness: attr.as_ref().and_then(|a| score(masking::sparseness(a))),
            complexity: attr.as_ref().and_then(|a| score(masking::complexity(a))),
        });
    }

    Ok(SampleReport {
        sample_id: sample_id.to_string(),
        label,
        fdr_profile: profile,
        per_model_fidelity: committee
            .ids()
            .into_iter()
            .zip(&fidelity.per_model)
            .map(|(model_id, &fidelity_drop)| ModelFidelity {
                model_id,
                fidelity_drop,
            })
            .collect(),
        mean_fidelity: fidelity.mean,
        baselines,
    })
}

/// Writes `report.json` and `per_sample.csv` into `out_dir`.
pub fn write_report(report: &Report, out_dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let out_dir = out_dir.as_ref();
    create_dir(out_dir)?;
    let report_path = out_dir.join(REPORT_FILE);
    let csv_path = out_dir.join(PER_SAMPLE_FILE);
    write_text(&report_path, &report.to_json_string())?;
    write_text(&csv_path, &per_sample_csv(&report.samples))?;
    Ok((report_path, csv_path))
}
