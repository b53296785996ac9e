//! Integrated Gradients for built-in classifiers and top-fraction
//! binarization of any attribution map.

use serde::{Deserialize, Serialize};

use crate::committee::Classifier;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::types::{AttributionMap, BinaryMask, Spectrogram};

pub const DEFAULT_KAPPA: f64 = 0.05;
pub const DEFAULT_IG_STEPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IgBaseline {
    /// All-zero reference input.
    ZeroMatrix,
    /// Constant reference equal to the smallest value in the dataset.
    ConstantDatasetMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IgConfig {
    pub steps: usize,
    pub baseline: IgBaseline,
}

impl Default for IgConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_IG_STEPS,
            baseline: IgBaseline::ZeroMatrix,
        }
    }
}

impl IgConfig {
    /// Reference input for `shape`; `dataset_min` is only read for
    /// [`IgBaseline::ConstantDatasetMin`].
    pub fn baseline_matrix(&self, shape: (usize, usize), dataset_min: f64) -> Matrix {
        match self.baseline {
            IgBaseline::ZeroMatrix => Matrix::zeros(shape.0, shape.1),
            IgBaseline::ConstantDatasetMin => Matrix::filled(shape.0, shape.1, dataset_min),
        }
    }
}

/// Smallest entry across a set of spectrograms.
pub fn dataset_min<'a>(samples: impl IntoIterator<Item = &'a Spectrogram>) -> f64 {
    samples
        .into_iter()
        .map(|s| s.data().min())
        .fold(f64::INFINITY, f64::min)
}

/// Integrated Gradients of `p_target` along the straight path from
/// `baseline` to `x`, right Riemann sum with `steps` points:
/// `(x - baseline) * mean_s grad p(baseline + s/steps (x - baseline))`.
pub fn integrated_gradients_from(
    model: &dyn Classifier,
    x: &Matrix,
    baseline: &Matrix,
    target_class: usize,
    steps: usize,
) -> Result<Matrix> {
    if steps == 0 {
        return Err(Error::Config("IG steps must be at least 1".into()));
    }
    baseline.ensure_shape(x.shape())?;
    x.ensure_shape(model.input_shape())?;
    let diff: Vec<f64> = x
        .as_slice()
        .iter()
        .zip(baseline.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    let mut acc = vec![0.0; x.len()];
    let mut point = baseline.clone();
    for s in 1..=steps {
        let alpha = s as f64 / steps as f64;
        for ((p, &b), &d) in point
            .as_mut_slice()
            .iter_mut()
            .zip(baseline.as_slice())
            .zip(&diff)
        {
            *p = b + alpha * d;
        }
        let g = model.input_gradient(&point, target_class)?;
        for (a, &gv) in acc.iter_mut().zip(g.as_slice()) {
            *a += gv;
        }
    }
    let inv = 1.0 / steps as f64;
    Matrix::from_vec(
        x.rows(),
        x.cols(),
        acc.iter().zip(&diff).map(|(a, d)| a * inv * d).collect(),
    )
}

/// Integrated Gradients attribution for one committee member.
pub fn integrated_gradients(
    model: &dyn Classifier,
    model_id: &str,
    x: &Spectrogram,
    target_class: usize,
    cfg: &IgConfig,
    dataset_min: f64,
) -> Result<AttributionMap> {
    let baseline = cfg.baseline_matrix(x.shape(), dataset_min);
    let attr = integrated_gradients_from(model, x.data(), &baseline, target_class, cfg.steps)?;
    AttributionMap::new(model_id, attr)
}

/// Result of top-fraction binarization.
#[derive(Debug, Clone, PartialEq)]
pub struct Binarized {
    pub mask: BinaryMask,
    /// The map was constant, so no bin was selected.
    pub degenerate: bool,
}

/// Number of bins selected at fraction `kappa` of `total` bins.
pub fn top_count(kappa: f64, total: usize) -> usize {
    // The guard keeps products such as 0.05 * 8200 = 410 from flooring to 409.
    ((kappa * total as f64) + 1e-9).floor() as usize
}

/// Marks the `floor(kappa * T * F)` highest-scoring bins. Ties go to the
/// smaller row-major index. A constant map yields an empty mask.
pub fn binarize_top_fraction(attr: &Matrix, kappa: f64) -> Result<Binarized> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::Argument(format!("kappa {kappa} outside (0, 1]")));
    }
    if !attr.is_finite() {
        return Err(Error::Argument(
            "attribution map has non-finite entries".into(),
        ));
    }
    let (rows, cols) = attr.shape();
    if attr.is_empty() || attr.max() == attr.min() {
        log::warn!("degenerate attribution map: all {} bins equal", attr.len());
        return Ok(Binarized {
            mask: BinaryMask::empty(rows, cols),
            degenerate: true,
        });
    }
    let n = top_count(kappa, attr.len());
    let values = attr.as_slice();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut bits = vec![false; values.len()];
    for &i in &order[..n] {
        bits[i] = true;
    }
    Ok(Binarized {
        mask: BinaryMask::from_bits(rows, cols, bits)?,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::committee::{sigmoid, LinearModel, TinyMlp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Pre-sigmoid linear score `<W, x>`, the audit mode where IG is exact.
    struct LinearScore(Matrix);

    impl Classifier for LinearScore {
        fn input_shape(&self) -> (usize, usize) {
            self.0.shape()
        }
        fn positive_proba(&self, x: &Matrix) -> Result<f64> {
            Ok(self
                .0
                .as_slice()
                .iter()
                .zip(x.as_slice())
                .map(|(w, v)| w * v)
                .sum())
        }
        fn positive_gradient(&self, _x: &Matrix) -> Result<Matrix> {
            Ok(self.0.clone())
        }
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn linear_score_attribution_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_matrix(&mut rng, 3, 4);
        let x = random_matrix(&mut rng, 3, 4);
        for steps in [1, 7, 64] {
            let a = integrated_gradients_from(
                &LinearScore(w.clone()),
                &x,
                &Matrix::zeros(3, 4),
                1,
                steps,
            )
            .unwrap();
            for i in 0..12 {
                let exact = w.as_slice()[i] * x.as_slice()[i];
                assert!((a.as_slice()[i] - exact).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn logistic_attribution_is_w_x_times_path_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random_matrix(&mut rng, 2, 3);
        let x = random_matrix(&mut rng, 2, 3);
        let model = LinearModel::new(w.clone(), 0.2);
        let steps = 16;
        let z: f64 = w
            .as_slice()
            .iter()
            .zip(x.as_slice())
            .map(|(a, b)| a * b)
            .sum();
        let avg: f64 = (1..=steps)
            .map(|s| {
                let p = sigmoid(s as f64 / steps as f64 * z + 0.2);
                p * (1.0 - p)
            })
            .sum::<f64>()
            / steps as f64;
        let a = integrated_gradients_from(&model, &x, &Matrix::zeros(2, 3), 1, steps).unwrap();
        for i in 0..6 {
            assert!((a.as_slice()[i] - avg * w.as_slice()[i] * x.as_slice()[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn input_at_baseline_gives_zero_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = LinearModel::new(random_matrix(&mut rng, 3, 3), 0.0);
        let x = Spectrogram::new(Matrix::filled(3, 3, -2.0)).unwrap();
        let cfg = IgConfig {
            steps: 8,
            baseline: IgBaseline::ConstantDatasetMin,
        };
        let a = integrated_gradients(&model, "m", &x, 0, &cfg, -2.0).unwrap();
        assert!(a.data.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn baseline_shape_mismatch() {
        let model = LinearModel::new(Matrix::zeros(2, 2), 0.0);
        assert!(matches!(
            integrated_gradients_from(&model, &Matrix::zeros(2, 2), &Matrix::zeros(2, 3), 1, 4),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn completeness_on_random_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = 25;
        let model = TinyMlp::from_parts(
            (5, 5),
            6,
            (0..6 * d).map(|_| rng.random_range(-0.4..0.4)).collect(),
            vec![0.0; 6],
            (0..6).map(|_| rng.random_range(-2.0..2.0)).collect(),
            0.0,
        )
        .unwrap();
        let x = random_matrix(&mut rng, 5, 5);
        let zero = Matrix::zeros(5, 5);
        let a = integrated_gradients_from(&model, &x, &zero, 1, 512).unwrap();
        let delta = model.class_proba(&x, 1).unwrap() - model.class_proba(&zero, 1).unwrap();
        assert!((a.sum() - delta).abs() < 0.005);
    }

    #[test]
    fn top_fraction_literal() {
        let attr = Matrix::from_rows(&[[4.0, 3.0], [2.0, 1.0]]);
        let b = binarize_top_fraction(&attr, 0.5).unwrap();
        assert!(!b.degenerate);
        assert_eq!(
            b.mask.to_matrix(),
            Matrix::from_rows(&[[1.0, 1.0], [0.0, 0.0]])
        );
    }

    #[test]
    fn constant_map_is_degenerate() {
        for kappa in [0.25, 1.0] {
            let b = binarize_top_fraction(&Matrix::filled(2, 2, 1.0), kappa).unwrap();
            assert!(b.degenerate);
            assert_eq!(b.mask.active_count(), 0);
        }
    }

    #[test]
    fn ties_prefer_lower_index() {
        let attr = Matrix::from_rows(&[[1.0, 5.0, 5.0], [5.0, 0.0, 0.0]]);
        let b = binarize_top_fraction(&attr, 2.0 / 6.0).unwrap();
        assert_eq!(
            b.mask.to_matrix(),
            Matrix::from_rows(&[[0.0, 1.0, 1.0], [0.0, 0.0, 0.0]])
        );
    }

    #[test]
    fn rejects_bad_kappa() {
        let attr = Matrix::from_rows(&[[1.0, 2.0]]);
        assert!(binarize_top_fraction(&attr, 0.0).is_err());
        assert!(binarize_top_fraction(&attr, 1.5).is_err());
    }

    #[test]
    fn random_map_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let attr = random_matrix(&mut rng, 10, 10);
            let b = binarize_top_fraction(&attr, 0.05).unwrap();
            assert_eq!(b.mask.active_count(), 5);
            let v = attr.as_slice();
            let min_active = (0..100)
                .filter(|&i| b.mask.bits()[i])
                .map(|i| v[i])
                .fold(f64::INFINITY, f64::min);
            let max_inactive = (0..100)
                .filter(|&i| !b.mask.bits()[i])
                .map(|i| v[i])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(min_active >= max_inactive);
        }
    }

    #[test]
    fn masks_grow_with_kappa() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // Coarse values force many ties.
        let attr = Matrix::from_fn(8, 8, |_, _| rng.random_range(0..5) as f64);
        let kappas = [0.05, 0.1, 0.3, 0.5, 0.9, 1.0];
        let masks: Vec<_> = kappas
            .iter()
            .map(|&k| binarize_top_fraction(&attr, k).unwrap().mask)
            .collect();
        for pair in masks.windows(2) {
            assert!(pair[0].is_subset_of(&pair[1]));
        }
        assert_eq!(masks[5].active_count(), 64);
    }

    #[test]
    fn top_count_floors() {
        assert_eq!(top_count(0.05, 8192), 409);
        assert_eq!(top_count(0.05, 8200), 410);
        assert_eq!(top_count(0.5, 4), 2);
        assert_eq!(top_count(1.0, 7), 7);
    }
}
