//! Linear SVM over deep feature vectors.
//!
//! Training solves the L2-regularized hinge-loss problem in the dual by
//! coordinate descent. The bias is learned as an extra constant feature of
//! value 1 (so it is regularized like the weights). Every epoch visits the
//! coordinates in a permutation drawn from a ChaCha stream seeded by the
//! caller, which makes training bit-reproducible.
//!
//! After the solver stops, decision values on the training set are mapped to
//! probabilities with a logistic calibration so confidences from different
//! image sources can be compared.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{fit_platt, Calibration};
use crate::features::{FeatureVector, Label, LabeledSample, LayerTag};

pub const DEFAULT_COST: f64 = 1.0;
pub const DEFAULT_SEED: u64 = 0;
pub const DUAL_TOLERANCE: f64 = 1e-4;
pub const MAX_EPOCHS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("no training samples")]
    Empty,
    #[error("training needs both classes, only `{0}` present")]
    SingleClass(Label),
    #[error("sample {index} (`{image_id}`) has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        image_id: String,
        expected: usize,
        found: usize,
    },
    #[error("sample {index} (`{image_id}`) is tagged {found}, expected {expected}")]
    LayerMismatch {
        index: usize,
        image_id: String,
        expected: LayerTag,
        found: LayerTag,
    },
    #[error("sample {index} (`{image_id}`) has a non-finite value")]
    NonFinite { index: usize, image_id: String },
    #[error("cost must be positive and finite, got {0}")]
    Cost(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictError {
    #[error("feature `{image_id}` has dimension {found}, model expects {expected}")]
    DimensionMismatch {
        image_id: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model parameter `{0}` is not finite")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub cost: f64,
    pub seed: u64,
    /// Standardize each dimension before solving; folded back into the
    /// weights afterwards so the model still applies to raw features.
    pub standardize: bool,
    /// Scale the cost of each class by `n / (2 * n_class)`.
    pub balanced: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            cost: DEFAULT_COST,
            seed: DEFAULT_SEED,
            standardize: false,
            balanced: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainedOn {
    pub passenger: u32,
    pub other: u32,
    pub epochs: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    layer: LayerTag,
    weights: Vec<f64>,
    bias: f64,
    calibration: Calibration,
    cost: f64,
    trained_on: TrainedOn,
}

impl ClassifierModel {
    pub fn new(
        layer: LayerTag,
        weights: Vec<f64>,
        bias: f64,
        calibration: Calibration,
        cost: f64,
        trained_on: TrainedOn,
    ) -> Result<Self, ModelError> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(ModelError::NonFinite("weights"));
        }
        for (name, v) in [
            ("bias", bias),
            ("calibration scale", calibration.scale),
            ("calibration offset", calibration.offset),
            ("cost", cost),
        ] {
            if !v.is_finite() {
                return Err(ModelError::NonFinite(name));
            }
        }
        Ok(Self {
            layer,
            weights,
            bias,
            calibration,
            cost,
            trained_on,
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }
    pub fn layer(&self) -> LayerTag {
        self.layer
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn bias(&self) -> f64 {
        self.bias
    }
    pub fn calibration(&self) -> Calibration {
        self.calibration
    }
    pub fn cost(&self) -> f64 {
        self.cost
    }
    pub fn trained_on(&self) -> TrainedOn {
        self.trained_on
    }

    /// Copy with weights and bias multiplied by `k > 0` and the calibration
    /// scale divided by `k`, so calibrated confidences are unchanged.
    pub fn rescaled(&self, k: f64) -> ClassifierModel {
        ClassifierModel {
            weights: self.weights.iter().map(|w| w * k).collect(),
            bias: self.bias * k,
            calibration: Calibration {
                scale: self.calibration.scale / k,
                offset: self.calibration.offset,
            },
            ..self.clone()
        }
    }

    fn check_dim(&self, f: &FeatureVector) -> Result<(), PredictError> {
        if f.dim() != self.dim() {
            return Err(PredictError::DimensionMismatch {
                image_id: f.image_id().to_string(),
                expected: self.dim(),
                found: f.dim(),
            });
        }
        Ok(())
    }

    /// Signed distance-like score `w·f + b`, positive for passenger.
    pub fn decision_value(&self, f: &FeatureVector) -> Result<f64, PredictError> {
        self.check_dim(f)?;
        Ok(decision(&self.weights, self.bias, f.values()))
    }
}

fn decision(weights: &[f64], bias: f64, x: &[f32]) -> f64 {
    weights
        .iter()
        .zip(x)
        .map(|(w, &v)| w * f64::from(v))
        .sum::<f64>()
        + bias
}

/// How a decision value becomes a confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceMode {
    /// Fitted logistic calibration.
    #[default]
    Calibrated,
    /// Plain `sigmoid(decision)`, ignoring the fitted calibration.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confidences {
    pub passenger: f64,
    pub other: f64,
}

impl Confidences {
    pub fn from_passenger(p: f64) -> Self {
        Self {
            passenger: p,
            other: 1.0 - p,
        }
    }

    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Passenger => self.passenger,
            Label::Other => self.other,
        }
    }

    /// Most confident class; an exact tie goes to passenger.
    pub fn label(&self) -> Label {
        if self.passenger >= self.other {
            Label::Passenger
        } else {
            Label::Other
        }
    }
}

pub fn predict_confidence(
    model: &ClassifierModel,
    f: &FeatureVector,
    mode: ConfidenceMode,
) -> Result<Confidences, PredictError> {
    let d = model.decision_value(f)?;
    let cal = match mode {
        ConfidenceMode::Calibrated => model.calibration,
        ConfidenceMode::Raw => Calibration::IDENTITY,
    };
    Ok(Confidences::from_passenger(cal.apply(d)))
}

pub fn predict_label(
    model: &ClassifierModel,
    f: &FeatureVector,
    mode: ConfidenceMode,
) -> Result<Label, PredictError> {
    Ok(predict_confidence(model, f, mode)?.label())
}

/// Solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: usize,
    pub converged: bool,
    /// Largest projected-gradient magnitude at the returned solution.
    pub dual_residual: f64,
    /// Dual objective after each epoch; non-increasing.
    pub dual_objective: Vec<f64>,
    pub primal_objective: f64,
    pub calibration_steps: usize,
    /// The fitted calibration was not increasing and was replaced by the
    /// identity mapping.
    pub calibration_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: ClassifierModel,
    pub report: TrainReport,
}

struct Problem {
    n: usize,
    dim: usize,
    // row-major, n * dim
    x: Vec<f64>,
    y: Vec<f64>,
    upper: Vec<f64>,
}

impl Problem {
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn projected_gradient(g: f64, alpha: f64, upper: f64) -> f64 {
    if alpha <= 0.0 {
        g.min(0.0)
    } else if alpha >= upper {
        g.max(0.0)
    } else {
        g
    }
}

/// Trains a linear SVM on `samples`.
pub fn train(samples: &[LabeledSample], cfg: &TrainConfig) -> Result<Trained, TrainError> {
    if !(cfg.cost > 0.0 && cfg.cost.is_finite()) {
        return Err(TrainError::Cost(cfg.cost));
    }
    let first = samples.first().ok_or(TrainError::Empty)?;
    let dim = first.feature.dim();
    let layer = first.feature.layer();
    for (index, s) in samples.iter().enumerate() {
        if s.feature.dim() != dim {
            return Err(TrainError::DimensionMismatch {
                index,
                image_id: s.image_id().to_string(),
                expected: dim,
                found: s.feature.dim(),
            });
        }
        if s.feature.layer() != layer {
            return Err(TrainError::LayerMismatch {
                index,
                image_id: s.image_id().to_string(),
                expected: layer,
                found: s.feature.layer(),
            });
        }
        if s.feature.values().iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite {
                index,
                image_id: s.image_id().to_string(),
            });
        }
    }
    let n_pass = samples
        .iter()
        .filter(|s| s.label == Label::Passenger)
        .count();
    let n_other = samples.len() - n_pass;
    if n_pass == 0 {
        return Err(TrainError::SingleClass(Label::Other));
    }
    if n_other == 0 {
        return Err(TrainError::SingleClass(Label::Passenger));
    }

    let n = samples.len();
    let mut x = Vec::with_capacity(n * dim);
    for s in samples {
        x.extend(s.feature.values().iter().map(|&v| f64::from(v)));
    }

    let (mean, std) = if cfg.standardize {
        let (m, s) = column_stats(&x, n, dim);
        for row in x.chunks_exact_mut(dim) {
            for ((v, m), s) in row.iter_mut().zip(&m).zip(&s) {
                *v = (*v - m) / s;
            }
        }
        (Some(m), Some(s))
    } else {
        (None, None)
    };

    let upper = samples
        .iter()
        .map(|s| {
            if cfg.balanced {
                let class_n = if s.label == Label::Passenger {
                    n_pass
                } else {
                    n_other
                };
                cfg.cost * n as f64 / (2.0 * class_n as f64)
            } else {
                cfg.cost
            }
        })
        .collect();

    let problem = Problem {
        n,
        dim,
        x,
        y: samples.iter().map(|s| s.label.sign()).collect(),
        upper,
    };
    let solution = solve_dual(&problem, cfg.seed);

    // fold standardization back into raw-feature weights
    let (weights, bias) = match (mean, std) {
        (Some(m), Some(s)) => {
            let w: Vec<f64> = solution.w.iter().zip(&s).map(|(w, s)| w / s).collect();
            let shift: f64 = w.iter().zip(&m).map(|(w, m)| w * m).sum();
            (w, solution.b - shift)
        }
        _ => (solution.w.clone(), solution.b),
    };

    let decisions: Vec<f64> = samples
        .iter()
        .map(|s| decision(&weights, bias, s.feature.values()))
        .collect();
    let positive: Vec<bool> = samples
        .iter()
        .map(|s| s.label == Label::Passenger)
        .collect();
    let fit = fit_platt(&decisions, &positive);
    let usable = fit.calibration.scale > 0.0
        && fit.calibration.scale.is_finite()
        && fit.calibration.offset.is_finite();
    let calibration = if usable {
        fit.calibration
    } else {
        Calibration::IDENTITY
    };

    let model = ClassifierModel {
        layer,
        weights,
        bias,
        calibration,
        cost: cfg.cost,
        trained_on: TrainedOn {
            passenger: n_pass as u32,
            other: n_other as u32,
            epochs: solution.epochs as u32,
            seed: cfg.seed,
        },
    };
    let report = TrainReport {
        epochs: solution.epochs,
        converged: solution.converged,
        dual_residual: solution.residual,
        dual_objective: solution.dual_objective,
        primal_objective: solution.primal_objective,
        calibration_steps: fit.iterations,
        calibration_fallback: !usable,
    };
    Ok(Trained { model, report })
}

fn column_stats(x: &[f64], n: usize, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; dim];
    for row in x.chunks_exact(dim) {
        axpy(1.0, row, &mut mean);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; dim];
    for row in x.chunks_exact(dim) {
        for ((v, &xi), &m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (xi - m) * (xi - m);
        }
    }
    let std = var
        .into_iter()
        .map(|v| {
            let s = (v / n as f64).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

struct DualSolution {
    w: Vec<f64>,
    b: f64,
    epochs: usize,
    converged: bool,
    residual: f64,
    dual_objective: Vec<f64>,
    primal_objective: f64,
}

fn solve_dual(p: &Problem, seed: u64) -> DualSolution {
    let mut alpha = vec![0.0; p.n];
    let mut w = vec![0.0; p.dim];
    let mut b = 0.0;
    let diag: Vec<f64> = (0..p.n).map(|i| dot(p.row(i), p.row(i)) + 1.0).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..p.n).collect();
    let mut history = Vec::new();
    let mut epochs = 0;
    let mut converged = false;
    let mut residual = f64::INFINITY;

    let dual =
        |w: &[f64], b: f64, alpha: &[f64]| 0.5 * (dot(w, w) + b * b) - alpha.iter().sum::<f64>();

    while epochs < MAX_EPOCHS {
        order.shuffle(&mut rng);
        let mut sweep_max = 0.0f64;
        for &i in &order {
            let xi = p.row(i);
            let yi = p.y[i];
            let g = yi * (dot(&w, xi) + b) - 1.0;
            let pg = projected_gradient(g, alpha[i], p.upper[i]);
            sweep_max = sweep_max.max(pg.abs());
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / diag[i]).clamp(0.0, p.upper[i]);
                let step = (alpha[i] - old) * yi;
                axpy(step, xi, &mut w);
                b += step;
            }
        }
        epochs += 1;

        let obj = dual(&w, b, &alpha);
        if let Some(&prev) = history.last() {
            debug_assert!(
                obj <= prev + 1e-9 * f64::max(1.0, f64::abs(prev)),
                "dual objective increased: {prev} -> {obj}"
            );
        }
        history.push(obj);

        // the sweep measured gradients while alpha moved; confirm on the
        // final iterate before stopping
        if sweep_max < DUAL_TOLERANCE {
            residual = max_violation(p, &alpha, &w, b);
            if residual < DUAL_TOLERANCE {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        residual = max_violation(p, &alpha, &w, b);
    }

    let hinge: f64 = (0..p.n)
        .map(|i| p.upper[i] * (1.0 - p.y[i] * (dot(&w, p.row(i)) + b)).max(0.0))
        .sum();
    let primal_objective = 0.5 * (dot(&w, &w) + b * b) + hinge;

    DualSolution {
        w,
        b,
        epochs,
        converged,
        residual,
        dual_objective: history,
        primal_objective,
    }
}

fn max_violation(p: &Problem, alpha: &[f64], w: &[f64], b: f64) -> f64 {
    (0..p.n)
        .map(|i| {
            let g = p.y[i] * (dot(w, p.row(i)) + b) - 1.0;
            projected_gradient(g, alpha[i], p.upper[i]).abs()
        })
        .fold(0.0, f64::max)
}
