//! Per-sample reports and dataset-level aggregates.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::masking::{ConfidenceRecord, Percentage};
use crate::matrix::write_real;
use crate::null_fdr::{FdrProfile, Trend};
use crate::synthgen::Label;

/// Baseline metrics of one committee member on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBaselines {
    pub model_id: String,
    /// `p_c` on the original input.
    pub p_orig: f64,
    /// `p_c` with only the mask kept (faithfulness).
    pub faithfulness: f64,
    /// Whether keeping only the mask raised the confidence.
    pub ai_flag: bool,
    /// Relative drop in percent; absent when `p_orig = 0`.
    pub drop: Option<f64>,
    /// Relative gain in percent; absent when `p_orig = 1`.
    pub gain: Option<f64>,
    /// Absent when no attribution file accompanies the mask, or the map is all zero.
    pub sparseness: Option<f64>,
    pub complexity: Option<f64>,
}

impl ModelBaselines {
    pub fn record(&self) -> ConfidenceRecord {
        ConfidenceRecord::new(self.p_orig, self.faithfulness)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFidelity {
    pub model_id: String,
    pub fidelity_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub sample_id: String,
    pub label: Label,
    pub fdr_profile: FdrProfile,
    pub per_model_fidelity: Vec<ModelFidelity>,
    pub mean_fidelity: f64,
    pub baselines: Vec<ModelBaselines>,
}

impl SampleReport {
    pub fn reliability(&self) -> f64 {
        self.fdr_profile.reliability
    }

    pub fn trend(&self) -> Trend {
        self.fdr_profile.trend
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: Option<f64>,
    /// `None` with fewer than two values.
    pub std: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                n,
                mean: None,
                std: None,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Self {
            n,
            mean: Some(mean),
            std,
        }
    }
}

/// Near-1 trend treated as a detection of artifact-driven consensus, with
/// the Unhealthy label as ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendConfusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl TrendConfusion {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        Self {
            tp,
            fp,
            fn_,
            tn,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            specificity: ratio(tn, tn + fp),
            accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
        }
    }

    pub fn from_samples(samples: &[SampleReport]) -> Self {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for s in samples {
            match (s.label, s.trend()) {
                (Label::Unhealthy, Trend::NearOne) => tp += 1,
                (Label::Healthy, Trend::NearOne) => fp += 1,
                (Label::Unhealthy, Trend::Downward) => fn_ += 1,
                (Label::Healthy, Trend::Downward) => tn += 1,
            }
        }
        Self::from_counts(tp, fp, fn_, tn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrendCounts {
    pub total: usize,
    pub downward: usize,
    pub near_one: usize,
}

/// AI, AD and AG over a set of confidence records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingPercentages {
    pub records: usize,
    pub average_increase: Option<f64>,
    pub average_drop: Percentage,
    pub average_gain: Percentage,
}

impl MaskingPercentages {
    pub fn of(records: &[ConfidenceRecord]) -> Option<Self> {
        if records.is_empty() {
            return None;
        }
        Some(Self {
            records: records.len(),
            average_increase: crate::masking::average_increase(records).ok(),
            average_drop: crate::masking::average_drop(records).ok()?,
            average_gain: crate::masking::average_gain(records).ok()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummaries {
    pub faithfulness: Summary,
    pub fidelity: Summary,
    pub sparseness: Summary,
    pub complexity: Summary,
    pub mean_fidelity: Summary,
    pub reliability: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub mean_fidelity: Summary,
    pub reliability: Summary,
    pub trends: TrendCounts,
}

/// Mean fidelity of one member within one (class, trend) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityCell {
    pub label: Label,
    pub trend: Trend,
    pub model_id: String,
    pub fidelity: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub samples: usize,
    pub masking: Option<MaskingPercentages>,
    pub masking_by_model: BTreeMap<String, MaskingPercentages>,
    pub metrics: MetricSummaries,
    pub by_class: BTreeMap<Label, ClassSummary>,
    pub trend_confusion: TrendConfusion,
    pub fidelity_by_class_trend_model: Vec<FidelityCell>,
}

impl Aggregates {
    /// Aggregates in the order given; callers pass samples sorted by id.
    pub fn compute(samples: &[SampleReport], model_ids: &[String]) -> Self {
        let records: Vec<ConfidenceRecord> = samples
            .iter()
            .flat_map(|s| s.baselines.iter().map(ModelBaselines::record))
            .collect();
        let masking_by_model = model_ids
            .iter()
            .filter_map(|id| {
                let recs: Vec<_> = samples
                    .iter()
                    .flat_map(|s| s.baselines.iter().filter(|b| &b.model_id == id))
                    .map(ModelBaselines::record)
                    .collect();
                MaskingPercentages::of(&recs).map(|p| (id.clone(), p))
            })
            .collect();

        let collect = |f: &dyn Fn(&ModelBaselines) -> Option<f64>| -> Vec<f64> {
            samples
                .iter()
                .flat_map(|s| s.baselines.iter().filter_map(f))
                .collect()
        };
        let metrics = MetricSummaries {
            faithfulness: Summary::of(&collect(&|b| Some(b.faithfulness))),
            fidelity: Summary::of(
                &samples
                    .iter()
                    .flat_map(|s| s.per_model_fidelity.iter().map(|m| m.fidelity_drop))
                    .collect::<Vec<_>>(),
            ),
            sparseness: Summary::of(&collect(&|b| b.sparseness)),
            complexity: Summary::of(&collect(&|b| b.complexity)),
            mean_fidelity: Summary::of(
                &samples.iter().map(|s| s.mean_fidelity).collect::<Vec<_>>(),
            ),
            reliability: Summary::of(
                &samples
                    .iter()
                    .map(SampleReport::reliability)
                    .collect::<Vec<_>>(),
            ),
        };

        let mut by_class = BTreeMap::new();
        for label in [Label::Healthy, Label::Unhealthy] {
            let members: Vec<&SampleReport> = samples.iter().filter(|s| s.label == label).collect();
            if members.is_empty() {
                continue;
            }
            let near_one = members
                .iter()
                .filter(|s| s.trend() == Trend::NearOne)
                .count();
            by_class.insert(
                label,
                ClassSummary {
                    mean_fidelity: Summary::of(
                        &members.iter().map(|s| s.mean_fidelity).collect::<Vec<_>>(),
                    ),
                    reliability: Summary::of(
                        &members.iter().map(|s| s.reliability()).collect::<Vec<_>>(),
                    ),
                    trends: TrendCounts {
                        total: members.len(),
                        downward: members.len() - near_one,
                        near_one,
                    },
                },
            );
        }

        let mut cells = Vec::new();
        for label in [Label::Healthy, Label::Unhealthy] {
            for trend in [Trend::Downward, Trend::NearOne] {
                for id in model_ids {
                    let values: Vec<f64> = samples
                        .iter()
                        .filter(|s| s.label == label && s.trend() == trend)
                        .flat_map(|s| s.per_model_fidelity.iter().filter(|m| &m.model_id == id))
                        .map(|m| m.fidelity_drop)
                        .collect();
                    if !values.is_empty() {
                        cells.push(FidelityCell {
                            label,
                            trend,
                            model_id: id.clone(),
                            fidelity: Summary::of(&values),
                        });
                    }
                }
            }
        }

        Self {
            samples: samples.len(),
            masking: MaskingPercentages::of(&records),
            masking_by_model,
            metrics,
            by_class,
            trend_confusion: TrendConfusion::from_samples(samples),
            fidelity_by_class_trend_model: cells,
        }
    }
}

/// Plot-ready rows: `sample_id,label,mean_fidelity,reliability,trend`.
pub fn per_sample_csv(samples: &[SampleReport]) -> String {
    let mut out = String::from("sample_id,label,mean_fidelity,reliability,trend\n");
    for s in samples {
        let _ = write!(out, "{},{},", s.sample_id, s.label);
        write_real(&mut out, s.mean_fidelity);
        out.push(',');
        write_real(&mut out, s.reliability());
        let _ = writeln!(out, ",{}", s.trend().as_str());
    }
    out
}
