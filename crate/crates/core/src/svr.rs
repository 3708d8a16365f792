//! Linear epsilon-insensitive support vector regression.
//!
//! Training runs dual coordinate descent on
//!
//! ```text
//! min_β  ½ βᵀQβ − yᵀβ + ε‖β‖₁   s.t. −C ≤ βᵢ ≤ C,   Q = X̃X̃ᵀ
//! ```
//!
//! where `X̃` is `X` augmented with a constant bias feature of value 1, so the
//! primal solution is `[w; b] = Σ βᵢ x̃ᵢ`. Every coordinate step is the exact
//! minimizer of the one-dimensional piecewise quadratic, so the dual
//! objective never increases.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Item};
use crate::exec::Execution;
use crate::features::{FeatureVector, Featurizer};
use crate::metrics::PairedSeries;
use crate::{Error, Result};

/// Value of the constant feature appended for the bias term.
const BIAS_FEATURE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrConfig {
    #[serde(rename = "C")]
    pub c: f64,
    pub epsilon: f64,
    /// Stop once the largest dual update in a full pass is below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for SvrConfig {
    fn default() -> Self {
        SvrConfig {
            c: 100.0,
            epsilon: 0.1,
            tolerance: 1e-4,
            max_iterations: 10_000,
            seed: 0,
        }
    }
}

impl SvrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Validation(format!("C must be positive, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Validation(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Validation(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Validation("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

pub const MODEL_FORMAT: &str = "emotrans.svr";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub format: String,
    pub version: u32,
    /// Non-zero weights as `(index, value)`, increasing index.
    pub weights: Vec<(usize, f64)>,
    pub bias: f64,
    pub config: SvrConfig,
    pub training_dim: usize,
}

/// Per-pass solver diagnostics (not serialized with the model).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    /// Dual objective after each pass; non-increasing.
    pub dual_objective: Vec<f64>,
    /// Largest |Δβ| in each pass.
    pub max_update: Vec<f64>,
    pub converged: bool,
}

impl TrainingTrace {
    pub fn passes(&self) -> usize {
        self.dual_objective.len()
    }
}

pub fn train(x: &[FeatureVector], y: &[f64], config: &SvrConfig) -> Result<SvrModel> {
    train_traced(x, y, config).map(|(m, _)| m)
}

fn dual_objective(w: &[f64], beta: &[f64], y: &[f64], epsilon: f64) -> f64 {
    let wsq: f64 = w.iter().map(|v| v * v).sum();
    let lin: f64 = beta.iter().zip(y).map(|(b, y)| b * y).sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    0.5 * wsq - lin + epsilon * l1
}

/// Trains and also returns the per-pass trace.
pub fn train_traced(x: &[FeatureVector], y: &[f64], config: &SvrConfig) -> Result<(SvrModel, TrainingTrace)> {
    config.validate()?;
    if x.is_empty() {
        return Err(Error::Validation("no training examples".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} feature vectors but {} targets", x.len(), y.len())));
    }
    let dim = x[0].dim();
    if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| v.dim() != dim) {
        return Err(Error::Dimension(format!("example {i} has dimension {}, expected {dim}", v.dim())));
    }
    if let Some((i, t)) = y.iter().enumerate().find(|(_, t)| !t.is_finite()) {
        return Err(Error::Validation(format!("target {i} is not finite ({t})")));
    }

    let n = x.len();
    let upper = config.c;
    let eps = config.epsilon;
    // w[dim] holds the bias
    let mut w = vec![0.0; dim + 1];
    let mut beta = vec![0.0; n];
    let diag: Vec<f64> = x.iter().map(|v| v.norm_sq() + BIAS_FEATURE * BIAS_FEATURE).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = TrainingTrace {
        dual_objective: Vec::new(),
        max_update: Vec::new(),
        converged: false,
    };

    for _ in 0..config.max_iterations {
        order.shuffle(&mut rng);
        let mut max_update: f64 = 0.0;
        for &i in &order {
            let xi = &x[i];
            let h = diag[i];
            let g = xi.dot(&w) + w[dim] * BIAS_FEATURE - y[i];
            let b = beta[i];
            // minimize ½h z² + g z + ε|b + z| over b + z ∈ [−C, C]
            let gp = g + eps;
            let gn = g - eps;
            let z = if gp < h * b {
                -gp / h
            } else if gn > h * b {
                -gn / h
            } else {
                -b
            };
            let new = (b + z).clamp(-upper, upper);
            let delta = new - b;
            if delta != 0.0 {
                beta[i] = new;
                for (j, v) in xi.iter() {
                    w[j] += delta * v;
                }
                w[dim] += delta * BIAS_FEATURE;
                max_update = max_update.max(delta.abs());
            }
        }
        trace.dual_objective.push(dual_objective(&w, &beta, y, eps));
        trace.max_update.push(max_update);
        if max_update < config.tolerance {
            trace.converged = true;
            break;
        }
    }
    if !trace.converged {
        log::warn!("svr: no convergence after {} passes", config.max_iterations);
    }

    let bias = w[dim] * BIAS_FEATURE;
    let weights = w[..dim]
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, &v)| (i, v))
        .collect();
    let model = SvrModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        weights,
        bias,
        config: config.clone(),
        training_dim: dim,
    };
    Ok((model, trace))
}

impl SvrModel {
    /// `w·x + b`, unclipped.
    pub fn predict(&self, x: &FeatureVector) -> Result<f64> {
        if x.dim() != self.training_dim {
            return Err(Error::Dimension(format!(
                "input has dimension {}, model was trained on {}",
                x.dim(),
                self.training_dim
            )));
        }
        // both index lists are sorted: merge
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (xi, xv) = (x.indices(), x.values());
        while i < xi.len() && j < self.weights.len() {
            match xi[i].cmp(&self.weights[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += xv[i] * self.weights[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(acc + self.bias)
    }

    pub fn predict_all(&self, xs: &[FeatureVector], exec: Execution) -> Result<Vec<f64>> {
        exec.try_map_slice(xs, |x| self.predict(x))
    }

    pub fn dense_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.training_dim];
        for &(i, v) in &self.weights {
            w[i] = v;
        }
        w
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: SvrModel = serde_json::from_str(s)?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::Validation(format!("unsupported model document {} v{}", m.format, m.version)));
        }
        let mut last = None;
        for &(i, v) in &m.weights {
            if i >= m.training_dim || last.is_some_and(|l| l >= i) || !v.is_finite() {
                return Err(Error::Validation(format!("bad weight entry ({i}, {v})")));
            }
            last = Some(i);
        }
        if !m.bias.is_finite() {
            return Err(Error::Validation("non-finite bias".into()));
        }
        Ok(m)
    }
}

/// Clips a prediction to `[0, 1]` for score export.
pub fn clip_unit(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub pearson: f64,
    pub spearman: f64,
}

/// Correlations between predictions and gold scores.
pub fn evaluate_predictions(predictions: &[f64], gold: &[f64]) -> Result<Evaluation> {
    let s = PairedSeries::new(predictions, gold)?;
    Ok(Evaluation {
        pearson: s.pearson()?,
        spearman: s.spearman()?,
    })
}

/// Featurizes, predicts and correlates against gold for every item.
pub fn evaluate(model: &SvrModel, corpus: &Corpus, featurizer: &Featurizer<'_>) -> Result<Evaluation> {
    evaluate_items(model, &corpus.items, featurizer, Execution::default()).map(|(e, _)| e)
}

/// Like [`evaluate`], also returning the predictions in item order.
pub fn evaluate_items(
    model: &SvrModel,
    items: &[Item],
    featurizer: &Featurizer<'_>,
    exec: Execution,
) -> Result<(Evaluation, Vec<f64>)> {
    let gold = items
        .iter()
        .map(|i| i.gold_score.ok_or_else(|| Error::Validation(format!("item {:?} has no gold score", i.id))))
        .collect::<Result<Vec<_>>>()?;
    let xs = featurizer.transform_all(items, exec);
    let preds = model.predict_all(&xs, exec)?;
    Ok((evaluate_predictions(&preds, &gold)?, preds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn dense(v: &[f64]) -> FeatureVector {
        FeatureVector::from_dense(v).unwrap()
    }

    fn model(weights: Vec<(usize, f64)>, bias: f64, dim: usize) -> SvrModel {
        SvrModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            weights,
            bias,
            config: SvrConfig::default(),
            training_dim: dim,
        }
    }

    #[test]
    fn single_example_in_tube() {
        let m = train(&[dense(&[1.0])], &[0.5], &SvrConfig::default()).unwrap();
        let p = m.predict(&dense(&[1.0])).unwrap();
        assert!((0.4 - 1e-6..=0.6 + 1e-6).contains(&p), "{p}");
    }

    #[test]
    fn constant_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<FeatureVector> = (0..50)
            .map(|_| {
                let pairs = (0..4).map(|_| (rng.random_range(0..30), rng.random_range(0.0..2.0))).collect();
                FeatureVector::from_pairs(30, pairs).unwrap()
            })
            .collect();
        let y = vec![0.7; 50];
        let m = train(&xs, &y, &SvrConfig::default()).unwrap();
        for x in &xs {
            let p = m.predict(x).unwrap();
            assert!((p - 0.7).abs() <= 0.1 + 1e-3, "{p}");
        }
    }

    #[test]
    fn predict_examples() {
        assert_eq!(model(vec![], 0.3, 4).predict(&dense(&[1.0, 2.0, 3.0, 4.0])).unwrap(), 0.3);
        let m = model(vec![(0, 2.0)], 0.0, 1);
        assert_eq!(m.predict(&dense(&[0.25])).unwrap(), 0.5);
        assert!(m.predict(&dense(&[0.25, 1.0])).is_err());
    }

    #[test]
    fn input_errors() {
        let cfg = SvrConfig::default();
        assert!(train(&[dense(&[1.0]), dense(&[1.0, 2.0])], &[0.1, 0.2], &cfg).is_err());
        assert!(train(&[dense(&[1.0])], &[f64::NAN], &cfg).is_err());
        assert!(train(&[dense(&[1.0])], &[0.1, 0.2], &cfg).is_err());
        assert!(train(&[], &[], &cfg).is_err());
        let bad = SvrConfig { c: 0.0, ..cfg };
        assert!(train(&[dense(&[1.0])], &[0.1], &bad).is_err());
    }

    #[test]
    fn wide_tube_gives_zero_weights() {
        let xs = vec![dense(&[1.0, 0.0]), dense(&[0.0, 3.0]), dense(&[2.0, 2.0])];
        let cfg = SvrConfig {
            epsilon: 1.0,
            ..Default::default()
        };
        let m = train(&xs, &[0.1, 0.9, 0.5], &cfg).unwrap();
        let norm: f64 = m.weights.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        assert!(norm <= cfg.tolerance, "{norm}");
    }

    #[test]
    fn evaluate_reflections() {
        let p = [0.1, 0.4, 0.35, 0.9];
        let e = evaluate_predictions(&p, &p).unwrap();
        assert_eq!((e.pearson, e.spearman), (1.0, 1.0));
        let g: Vec<f64> = p.iter().map(|v| 1.0 - v).collect();
        let e = evaluate_predictions(&p, &g).unwrap();
        assert!((e.pearson + 1.0).abs() < 1e-12);
        assert_eq!(e.spearman, -1.0);
        assert!(evaluate_predictions(&[0.5; 4], &p).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = train(&[dense(&[1.0, 0.0]), dense(&[0.0, 1.0])], &[0.2, 0.8], &SvrConfig::default()).unwrap();
        let back = SvrModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let mut bad = m.clone();
        bad.weights.push((7, 1.0));
        assert!(SvrModel::from_json(&serde_json::to_string(&bad).unwrap()).is_err());
    }
}
