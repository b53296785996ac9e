//! Binary classifiers with analytic input gradients, and their training.
//!
//! Two built-in kinds stand in for a committee of near-optimal models: a
//! logistic linear probe and a one-hidden-layer tanh perceptron. Anything
//! implementing [`Classifier`] can join a committee.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const CLASS_COUNT: usize = 2;

/// A binary classifier over fixed-shape spectrogram inputs.
pub trait Classifier: Send + Sync {
    fn input_shape(&self) -> (usize, usize);

    fn class_count(&self) -> usize {
        CLASS_COUNT
    }

    /// Probability of class 1 (the positive class).
    fn positive_proba(&self, x: &Matrix) -> Result<f64>;

    /// `d p_1 / d x` at `x`.
    fn positive_gradient(&self, x: &Matrix) -> Result<Matrix>;

    /// Class probability vector `[p_0, p_1]`.
    fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        let p = self.positive_proba(x)?;
        Ok(vec![1.0 - p, p])
    }

    fn class_proba(&self, x: &Matrix, class: usize) -> Result<f64> {
        let p = self.positive_proba(x)?;
        match class {
            0 => Ok(1.0 - p),
            1 => Ok(p),
            _ => Err(class_error(class)),
        }
    }

    /// `d p_class / d x` at `x`; the two classes' gradients sum to zero.
    fn input_gradient(&self, x: &Matrix, class: usize) -> Result<Matrix> {
        let g = self.positive_gradient(x)?;
        match class {
            0 => Ok(g.map(|v| -v)),
            1 => Ok(g),
            _ => Err(class_error(class)),
        }
    }
}

fn class_error(class: usize) -> Error {
    Error::Argument(format!("class {class} outside 0..{CLASS_COUNT}"))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic probe: `p_1 = sigmoid(<W, x> + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Matrix,
    pub bias: f64,
}

impl LinearModel {
    pub fn new(weights: Matrix, bias: f64) -> Self {
        Self { weights, bias }
    }

    pub fn logit(&self, x: &Matrix) -> Result<f64> {
        x.ensure_shape(self.weights.shape())?;
        Ok(dot(self.weights.as_slice(), x.as_slice()) + self.bias)
    }
}

impl Classifier for LinearModel {
    fn input_shape(&self) -> (usize, usize) {
        self.weights.shape()
    }

    fn positive_proba(&self, x: &Matrix) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    fn positive_gradient(&self, x: &Matrix) -> Result<Matrix> {
        let p = self.positive_proba(x)?;
        let s = p * (1.0 - p);
        Ok(self.weights.map(|w| s * w))
    }
}

/// One hidden tanh layer feeding a logistic output unit. The input is the
/// row-major flattening of the spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyMlp {
    rows: usize,
    cols: usize,
    hidden: usize,
    /// `hidden x (rows * cols)`, row-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

impl TinyMlp {
    pub const DEFAULT_HIDDEN: usize = 16;

    pub fn from_parts(
        shape: (usize, usize),
        hidden: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    ) -> Result<Self> {
        let (rows, cols) = shape;
        let d = rows * cols;
        if hidden == 0 || d == 0 {
            return Err(Error::Argument(
                "mlp needs a non-empty input and at least one hidden unit".into(),
            ));
        }
        if w1.len() != hidden * d || b1.len() != hidden || w2.len() != hidden {
            return Err(Error::Argument(format!(
                "mlp parameter lengths ({}, {}, {}) do not match hidden={hidden}, input={d}",
                w1.len(),
                b1.len(),
                w2.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            hidden,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        (0..self.hidden)
            .map(|j| (dot(&self.w1[j * d..(j + 1) * d], x) + self.b1[j]).tanh())
            .collect()
    }

    fn logit_from_hidden(&self, h: &[f64]) -> f64 {
        dot(&self.w2, h) + self.b2
    }
}

impl Classifier for TinyMlp {
    fn input_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn positive_proba(&self, x: &Matrix) -> Result<f64> {
        x.ensure_shape(self.input_shape())?;
        let h = self.hidden_activations(x.as_slice());
        Ok(sigmoid(self.logit_from_hidden(&h)))
    }

    fn positive_gradient(&self, x: &Matrix) -> Result<Matrix> {
        x.ensure_shape(self.input_shape())?;
        let d = x.len();
        let h = self.hidden_activations(x.as_slice());
        let p = sigmoid(self.logit_from_hidden(&h));
        let s = p * (1.0 - p);
        let mut grad = vec![0.0; d];
        for ((row, &hj), &w2j) in self.w1.chunks_exact(d).zip(&h).zip(&self.w2) {
            let coef = s * w2j * (1.0 - hj * hj);
            for (g, &w) in grad.iter_mut().zip(row) {
                *g += coef * w;
            }
        }
        Matrix::from_vec(self.rows, self.cols, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Mlp,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Linear => "linear",
            ModelKind::Mlp => "mlp",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => Ok(ModelKind::Linear),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::Argument(format!("unknown model kind {other:?}"))),
        }
    }
}

/// A trained built-in model together with the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear { model: LinearModel, seed: u64 },
    Mlp { model: TinyMlp, seed: u64 },
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Linear { .. } => ModelKind::Linear,
            Model::Mlp { .. } => ModelKind::Mlp,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Model::Linear { seed, .. } | Model::Mlp { seed, .. } => *seed,
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            Model::Linear { model, .. } => model,
            Model::Mlp { model, .. } => model,
        }
    }

    pub fn to_json_string(&self) -> String {
        let file = match self {
            Model::Linear { model, seed } => ModelFile::Linear {
                rows: model.weights.rows(),
                cols: model.weights.cols(),
                seed: *seed,
                weights: model.weights.as_slice().to_vec(),
                bias: model.bias,
            },
            Model::Mlp { model, seed } => ModelFile::Mlp {
                rows: model.rows,
                cols: model.cols,
                hidden: model.hidden,
                seed: *seed,
                w1: model.w1.clone(),
                b1: model.b1.clone(),
                w2: model.w2.clone(),
                b2: model.b2,
            },
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::json("model file", e))?;
        let model = match file {
            ModelFile::Linear {
                rows,
                cols,
                seed,
                weights,
                bias,
            } => {
                let weights = Matrix::from_vec(rows, cols, weights)?;
                Model::Linear {
                    model: LinearModel::new(weights, bias),
                    seed,
                }
            }
            ModelFile::Mlp {
                rows,
                cols,
                hidden,
                seed,
                w1,
                b1,
                w2,
                b2,
            } => {
                let d = rows
                    .checked_mul(cols)
                    .ok_or_else(|| Error::Argument("model input shape overflows".into()))?;
                if hidden.checked_mul(d).is_none() {
                    return Err(Error::Argument("model parameter count overflows".into()));
                }
                Model::Mlp {
                    model: TinyMlp::from_parts((rows, cols), hidden, w1, b1, w2, b2)?,
                    seed,
                }
            }
        };
        if !model.parameters_finite() {
            return Err(Error::Argument("model has non-finite parameters".into()));
        }
        let (rows, cols) = model.input_shape();
        if rows == 0 || cols == 0 {
            return Err(Error::Argument("model input shape is empty".into()));
        }
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| e.in_file(path))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    fn parameters_finite(&self) -> bool {
        match self {
            Model::Linear { model, .. } => model.weights.is_finite() && model.bias.is_finite(),
            Model::Mlp { model, .. } => model
                .w1
                .iter()
                .chain(&model.b1)
                .chain(&model.w2)
                .chain(std::iter::once(&model.b2))
                .all(|v| v.is_finite()),
        }
    }
}

impl Classifier for Model {
    fn input_shape(&self) -> (usize, usize) {
        self.inner().input_shape()
    }

    fn positive_proba(&self, x: &Matrix) -> Result<f64> {
        self.inner().positive_proba(x)
    }

    fn positive_gradient(&self, x: &Matrix) -> Result<Matrix> {
        self.inner().positive_gradient(x)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum ModelFile {
    Linear {
        rows: usize,
        cols: usize,
        seed: u64,
        weights: Vec<f64>,
        bias: f64,
    },
    Mlp {
        rows: usize,
        cols: usize,
        hidden: usize,
        seed: u64,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub l2: f64,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            learning_rate: 0.1,
            batch_size: 10,
            seed: 0,
            l2: 0.1,
            hidden: TinyMlp::DEFAULT_HIDDEN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "epochs, batch_size and hidden must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean cross-entropy plus L2 penalty over the training set after the last epoch.
    pub final_loss: f64,
    pub train_accuracy: f64,
}

/// Mini-batch gradient descent on cross-entropy with an L2 penalty on the
/// weights. Initialization and shuffle order derive from `cfg.seed` only.
pub fn train(kind: ModelKind, data: &[(Matrix, usize)], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::Training(format!(
            "need at least 2 samples, got {}",
            data.len()
        )));
    }
    let shape = data[0].0.shape();
    for (x, label) in data {
        x.ensure_shape(shape)?;
        if *label >= CLASS_COUNT {
            return Err(class_error(*label));
        }
    }
    if data.iter().all(|(_, l)| *l == data[0].1) {
        return Err(Error::Training("dataset contains a single class".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Trainable::init(kind, shape, cfg, &mut rng);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            net.step(data, batch, cfg);
        }
    }

    let model = net.into_model(shape, cfg.seed);
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (x, label) in data {
        let p = model.positive_proba(x)?.clamp(1e-15, 1.0 - 1e-15);
        loss -= if *label == 1 { p.ln() } else { (1.0 - p).ln() };
        if (p >= 0.5) == (*label == 1) {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    Ok(TrainOutcome {
        final_loss: loss / n + 0.5 * cfg.l2 * model_weight_norm_sq(&model),
        train_accuracy: correct as f64 / n,
        model,
    })
}

fn model_weight_norm_sq(model: &Model) -> f64 {
    match model {
        Model::Linear { model, .. } => model.weights.as_slice().iter().map(|w| w * w).sum(),
        Model::Mlp { model, .. } => model.w1.iter().chain(&model.w2).map(|w| w * w).sum(),
    }
}

/// Flat parameter storage used while training.
enum Trainable {
    Linear {
        w: Vec<f64>,
        b: f64,
    },
    Mlp {
        hidden: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    },
}

impl Trainable {
    fn init(
        kind: ModelKind,
        shape: (usize, usize),
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let d = shape.0 * shape.1;
        match kind {
            ModelKind::Linear => {
                let normal = Normal::new(0.0, 0.01).expect("valid std");
                Trainable::Linear {
                    w: (0..d).map(|_| normal.sample(rng)).collect(),
                    b: 0.0,
                }
            }
            ModelKind::Mlp => {
                let h = cfg.hidden;
                let n1 = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid std");
                let n2 = Normal::new(0.0, 1.0 / (h as f64).sqrt()).expect("valid std");
                Trainable::Mlp {
                    hidden: h,
                    w1: (0..h * d).map(|_| n1.sample(rng)).collect(),
                    b1: vec![0.0; h],
                    w2: (0..h).map(|_| n2.sample(rng)).collect(),
                    b2: 0.0,
                }
            }
        }
    }

    fn step(&mut self, data: &[(Matrix, usize)], batch: &[usize], cfg: &TrainConfig) {
        let scale = 1.0 / batch.len() as f64;
        let lr = cfg.learning_rate;
        match self {
            Trainable::Linear { w, b } => {
                let mut gw = vec![0.0; w.len()];
                let mut gb = 0.0;
                for &i in batch {
                    let (x, label) = &data[i];
                    let x = x.as_slice();
                    let err = sigmoid(dot(w, x) + *b) - *label as f64;
                    for (g, &xi) in gw.iter_mut().zip(x) {
                        *g += err * xi;
                    }
                    gb += err;
                }
                for (wi, g) in w.iter_mut().zip(&gw) {
                    *wi -= lr * (g * scale + cfg.l2 * *wi);
                }
                *b -= lr * gb * scale;
            }
            Trainable::Mlp {
                hidden,
                w1,
                b1,
                w2,
                b2,
            } => {
                let h_n = *hidden;
                let d = w1.len() / h_n;
                let mut gw1 = vec![0.0; w1.len()];
                let mut gb1 = vec![0.0; h_n];
                let mut gw2 = vec![0.0; h_n];
                let mut gb2 = 0.0;
                for &i in batch {
                    let (x, label) = &data[i];
                    let x = x.as_slice();
                    let h: Vec<f64> = (0..h_n)
                        .map(|j| (dot(&w1[j * d..(j + 1) * d], x) + b1[j]).tanh())
                        .collect();
                    let err = sigmoid(dot(w2, &h) + *b2) - *label as f64;
                    gb2 += err;
                    for j in 0..h_n {
                        gw2[j] += err * h[j];
                        let delta = err * w2[j] * (1.0 - h[j] * h[j]);
                        gb1[j] += delta;
                        for (g, &xi) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                            *g += delta * xi;
                        }
                    }
                }
                for (wi, g) in w1.iter_mut().zip(&gw1) {
                    *wi -= lr * (g * scale + cfg.l2 * *wi);
                }
                for (bi, g) in b1.iter_mut().zip(&gb1) {
                    *bi -= lr * g * scale;
                }
                for (wi, g) in w2.iter_mut().zip(&gw2) {
                    *wi -= lr * (g * scale + cfg.l2 * *wi);
                }
                *b2 -= lr * gb2 * scale;
            }
        }
    }

    fn into_model(self, shape: (usize, usize), seed: u64) -> Model {
        match self {
            Trainable::Linear { w, b } => Model::Linear {
                model: LinearModel::new(
                    Matrix::from_vec(shape.0, shape.1, w).expect("shape preserved"),
                    b,
                ),
                seed,
            },
            Trainable::Mlp {
                hidden,
                w1,
                b1,
                w2,
                b2,
            } => Model::Mlp {
                model: TinyMlp::from_parts(shape, hidden, w1, b1, w2, b2).expect("shape preserved"),
                seed,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_mlp(rng: &mut ChaCha8Rng, rows: usize, cols: usize, hidden: usize) -> TinyMlp {
        let d = rows * cols;
        TinyMlp::from_parts(
            (rows, cols),
            hidden,
            (0..hidden * d)
                .map(|_| rng.random_range(-0.5..0.5))
                .collect(),
            (0..hidden).map(|_| rng.random_range(-0.2..0.2)).collect(),
            (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect(),
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn zero_linear_model_is_uniform() {
        let m = LinearModel::new(Matrix::zeros(2, 3), 0.0);
        assert_eq!(
            m.predict_proba(&Matrix::filled(2, 3, 4.0)).unwrap(),
            vec![0.5, 0.5]
        );
    }

    #[test]
    fn logistic_closed_form() {
        // <W, x> + b = ln 3  =>  p1 = 3 / 4.
        let w = Matrix::from_rows(&[[1.0, 0.0]]);
        let m = LinearModel::new(w, 0.0);
        let x = Matrix::from_rows(&[[3f64.ln(), 5.0]]);
        assert!((m.class_proba(&x, 1).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn linear_gradient_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = LinearModel::new(random_matrix(&mut rng, 3, 4), 0.3);
        let x = random_matrix(&mut rng, 3, 4);
        let p = m.positive_proba(&x).unwrap();
        let g1 = m.input_gradient(&x, 1).unwrap();
        let g0 = m.input_gradient(&x, 0).unwrap();
        for i in 0..12 {
            let expected = p * (1.0 - p) * m.weights.as_slice()[i];
            assert!((g1.as_slice()[i] - expected).abs() < 1e-15);
            assert_eq!(g0.as_slice()[i] + g1.as_slice()[i], 0.0);
        }
        assert!(m.input_gradient(&x, 2).is_err());
    }

    #[test]
    fn mlp_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let m = random_mlp(&mut rng, 6, 6, 8);
            let x = random_matrix(&mut rng, 6, 6);
            let g = m.input_gradient(&x, 1).unwrap();
            let h = 1e-4;
            for i in 0..36 {
                let mut up = x.clone();
                up.as_mut_slice()[i] += h;
                let mut down = x.clone();
                down.as_mut_slice()[i] -= h;
                let fd =
                    (m.positive_proba(&up).unwrap() - m.positive_proba(&down).unwrap()) / (2.0 * h);
                assert!(
                    (fd - g.as_slice()[i]).abs() < 1e-5,
                    "bin {i}: {fd} vs {}",
                    g.as_slice()[i]
                );
            }
        }
    }

    #[test]
    fn probabilities_form_a_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = random_mlp(&mut rng, 4, 5, 4);
        let lin = LinearModel::new(random_matrix(&mut rng, 4, 5), -0.2);
        for _ in 0..50 {
            let x = random_matrix(&mut rng, 4, 5).map(|v| v * 20.0);
            for p in [
                mlp.predict_proba(&x).unwrap(),
                lin.predict_proba(&x).unwrap(),
            ] {
                assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
                assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
            }
        }
        assert!(matches!(
            lin.predict_proba(&Matrix::zeros(5, 4)),
            Err(Error::Dimension { .. })
        ));
    }

    fn separable_grid() -> Vec<(Matrix, usize)> {
        // 2-D points on a grid, label 1 iff x0 + x1 > 0.5.
        let mut data = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                let a = i as f64 / 5.0 - 0.5;
                let b = j as f64 / 5.0 - 0.5;
                if (a + b - 0.5).abs() < 1e-9 {
                    continue;
                }
                data.push((Matrix::from_rows(&[[a, b]]), usize::from(a + b > 0.5)));
            }
        }
        data
    }

    #[test]
    fn separable_grid_is_learned() {
        let data = separable_grid();
        // Oracle: the grid is separable by the line x0 + x1 = 0.5.
        assert!(data
            .iter()
            .all(|(x, l)| (x[(0, 0)] + x[(0, 1)] > 0.5) == (*l == 1)));
        for kind in [ModelKind::Linear, ModelKind::Mlp] {
            let cfg = TrainConfig {
                epochs: 200,
                learning_rate: 0.5,
                batch_size: 4,
                l2: 0.0,
                seed: 4,
                ..TrainConfig::default()
            };
            let out = train(kind, &data, &cfg).unwrap();
            assert_eq!(out.train_accuracy, 1.0, "{kind}");
        }
    }

    #[test]
    fn constant_inputs_converge_to_prior() {
        let x = Matrix::from_rows(&[[0.3, -0.2]]);
        let data: Vec<_> = (0..8).map(|i| (x.clone(), usize::from(i < 2))).collect();
        let cfg = TrainConfig {
            epochs: 400,
            learning_rate: 0.5,
            batch_size: 8,
            l2: 0.0,
            ..TrainConfig::default()
        };
        for kind in [ModelKind::Linear, ModelKind::Mlp] {
            let out = train(kind, &data, &cfg).unwrap();
            let p = out.model.positive_proba(&x).unwrap();
            assert!((p - 0.25).abs() < 0.01, "{kind}: {p}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable_grid();
        let cfg = TrainConfig {
            seed: 42,
            ..TrainConfig::default()
        };
        for kind in [ModelKind::Linear, ModelKind::Mlp] {
            let a = train(kind, &data, &cfg).unwrap();
            let b = train(kind, &data, &cfg).unwrap();
            assert_eq!(a.model.to_json_string(), b.model.to_json_string());
        }
        let other = train(ModelKind::Mlp, &data, &TrainConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(
            other.model,
            train(
                ModelKind::Mlp,
                &data,
                &TrainConfig {
                    seed: 42,
                    ..TrainConfig::default()
                }
            )
            .unwrap()
            .model
        );
    }

    #[test]
    fn training_errors() {
        let x = Matrix::zeros(1, 2);
        let single = vec![(x.clone(), 1), (x.clone(), 1)];
        assert!(matches!(
            train(ModelKind::Linear, &single, &TrainConfig::default()),
            Err(Error::Training(_))
        ));
        let mixed = vec![(x, 0), (Matrix::zeros(2, 2), 1)];
        assert!(matches!(
            train(ModelKind::Linear, &mixed, &TrainConfig::default()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn json_reload_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let models = [
            Model::Mlp {
                model: random_mlp(&mut rng, 3, 2, 3),
                seed: 17,
            },
            Model::Linear {
                model: LinearModel::new(random_matrix(&mut rng, 3, 2), 0.125),
                seed: 18,
            },
        ];
        for m in models {
            let text = m.to_json_string();
            assert_eq!(Model::from_json_str(&text).unwrap(), m);
        }
        assert!(Model::from_json_str(
            r#"{"kind":"linear","rows":2,"cols":2,"seed":0,"weights":[1],"bias":0}"#
        )
        .is_err());
        assert!(Model::from_json_str(r#"{"kind":"cnn"}"#).is_err());
    }
}
