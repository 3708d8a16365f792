//! Projection-based cross-lingual transfer.
//!
//! * [`procrustes_align`] learns an orthogonal map from the source embedding
//!   space onto the target space from a seed dictionary.
//! * [`train_blse`] jointly learns one linear projection per language and a
//!   linear regression head, anchoring the two projected spaces with the
//!   dictionary.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{BilingualDictionary, Corpus, EmbeddingTable, Item};
use crate::features::{mean_embedding, tokenize};
use crate::metrics;
use crate::{Error, Result};

fn normalize_rows(data: &mut [f64], dim: usize) {
    for row in data.chunks_exact_mut(dim) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
}

/// Unit-length rows, mean-centred, unit-length again. Row-major.
pub fn preprocess(table: &EmbeddingTable) -> Vec<f64> {
    let dim = table.dim();
    let mut data = table.data().to_vec();
    normalize_rows(&mut data, dim);
    if !table.is_empty() {
        let mut mean = vec![0.0; dim];
        for row in data.chunks_exact(dim) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        let n = table.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        for row in data.chunks_exact_mut(dim) {
            row.iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
        }
    }
    normalize_rows(&mut data, dim);
    data
}

/// [`preprocess`] as a table with the same vocabulary.
pub fn preprocessed(table: &EmbeddingTable) -> EmbeddingTable {
    table.with_data(preprocess(table))
}

/// Orthogonal `W` minimizing `‖XW − Z‖_F`: `W = UVᵀ` for `XᵀZ = UΣVᵀ`.
pub fn procrustes_solve(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.shape() != z.shape() {
        return Err(Error::Dimension(format!("X is {:?}, Z is {:?}", x.shape(), z.shape())));
    }
    let m = x.transpose() * z;
    let svd = m.svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => Ok(u * v_t),
        _ => Err(Error::Validation("SVD did not converge".into())),
    }
}

pub const ALIGNMENT_FORMAT: &str = "emotrans.alignment";
pub const ALIGNMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    /// `dim × dim`, row-major. Source rows are mapped as `vW`.
    pub matrix: Vec<f64>,
    pub usable_pairs: usize,
    pub dropped_pairs: usize,
}

impl AlignmentMap {
    pub fn from_matrix(w: &DMatrix<f64>) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::Dimension(format!("alignment matrix is {:?}", w.shape())));
        }
        let dim = w.nrows();
        let map = AlignmentMap {
            format: ALIGNMENT_FORMAT.to_string(),
            version: ALIGNMENT_VERSION,
            dim,
            matrix: w.transpose().as_slice().to_vec(),
            usable_pairs: 0,
            dropped_pairs: 0,
        };
        Ok(map)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix(&DMatrix::identity(dim, dim)).expect("square")
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.matrix)
    }

    /// `‖WᵀW − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        let w = self.matrix();
        (w.transpose() * &w - DMatrix::identity(self.dim, self.dim)).norm()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: AlignmentMap = serde_json::from_str(s)?;
        if m.format != ALIGNMENT_FORMAT || m.version != ALIGNMENT_VERSION {
            return Err(Error::Validation(format!("unsupported alignment document {} v{}", m.format, m.version)));
        }
        if m.matrix.len() != m.dim * m.dim {
            return Err(Error::Dimension(format!("{} entries for a {0}x{0} matrix", m.dim)));
        }
        Ok(m)
    }
}

/// Stacks the preprocessed vectors of the dictionary pairs found in both
/// tables; returns `(X, Z, dropped)`.
fn dictionary_matrices(
    src: &EmbeddingTable,
    tgt: &EmbeddingTable,
    dict: &BilingualDictionary,
    src_rows: &[f64],
    tgt_rows: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>, usize) {
    let d = src.dim();
    let src_pos: std::collections::HashMap<&str, usize> =
        src.words().iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let tgt_pos: std::collections::HashMap<&str, usize> =
        tgt.words().iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let mut xs = Vec::new();
    let mut zs = Vec::new();
    let mut dropped = 0;
    for (s, t) in dict.pairs() {
        match (src_pos.get(s.as_str()), tgt_pos.get(t.as_str())) {
            (Some(&i), Some(&j)) => {
                xs.extend_from_slice(&src_rows[i * d..(i + 1) * d]);
                zs.extend_from_slice(&tgt_rows[j * d..(j + 1) * d]);
            }
            _ => dropped += 1,
        }
    }
    let n = xs.len() / d;
    (DMatrix::from_row_slice(n, d, &xs), DMatrix::from_row_slice(n, d, &zs), dropped)
}

/// Supervised orthogonal mapping of `src` onto `tgt`.
///
/// Pairs with a word missing from either table are dropped and counted; at
/// least `dim` usable pairs are required.
pub fn procrustes_align(src: &EmbeddingTable, tgt: &EmbeddingTable, dict: &BilingualDictionary) -> Result<AlignmentMap> {
    if src.dim() != tgt.dim() {
        return Err(Error::Dimension(format!("source is {}-d, target is {}-d", src.dim(), tgt.dim())));
    }
    let d = src.dim();
    let (x, z, dropped) = dictionary_matrices(src, tgt, dict, &preprocess(src), &preprocess(tgt));
    if x.nrows() < d {
        return Err(Error::Validation(format!(
            "only {} usable dictionary pairs ({dropped} dropped), need at least {d}",
            x.nrows()
        )));
    }
    let w = procrustes_solve(&x, &z)?;
    let mut map = AlignmentMap::from_matrix(&w)?;
    map.usable_pairs = x.nrows();
    map.dropped_pairs = dropped;
    Ok(map)
}

/// Preprocesses `table` and maps every row `v` to `vW`.
pub fn map_embeddings(map: &AlignmentMap, table: &EmbeddingTable) -> Result<EmbeddingTable> {
    if table.dim() != map.dim {
        return Err(Error::Dimension(format!("table is {}-d, map is {}-d", table.dim(), map.dim)));
    }
    let d = map.dim;
    let rows = preprocess(table);
    let mut out = vec![0.0; rows.len()];
    for (src, dst) in rows.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        for (i, &v) in src.iter().enumerate() {
            if v != 0.0 {
                let w_row = &map.matrix[i * d..(i + 1) * d];
                dst.iter_mut().zip(w_row).for_each(|(o, w)| *o += v * w);
            }
        }
    }
    Ok(table.with_data(out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlseConfig {
    pub epochs: usize,
    /// Adam step size.
    pub learning_rate: f64,
    /// Weight of the dictionary projection loss.
    pub alpha: f64,
    /// Minibatch size; 0 means one full-batch step per epoch.
    pub batch_size: usize,
    /// Standard deviation of the initial perturbation of the projections
    /// (around identity) and of the head weights.
    pub init_scale: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for BlseConfig {
    fn default() -> Self {
        BlseConfig {
            epochs: 100,
            learning_rate: 0.001,
            alpha: 1.0,
            batch_size: 32,
            init_scale: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl BlseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.alpha >= 0.0) || !(self.init_scale >= 0.0) {
            return Err(Error::Validation(
                "learning rate must be positive, alpha and init scale non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Validation("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 0 for the initial parameters.
    pub epoch: usize,
    pub source_mse: f64,
    /// Mean over usable dictionary pairs of `‖M_src s − M_tgt t‖²`.
    pub projection_loss: f64,
    /// `None` when the dev predictions are constant.
    pub dev_pearson: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

pub const BLSE_FORMAT: &str = "emotrans.blse";
pub const BLSE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlseModel {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    /// `dim × dim`, row-major; a vector `a` projects to `M a`.
    pub m_src: Vec<f64>,
    pub m_tgt: Vec<f64>,
    pub head_weights: Vec<f64>,
    pub head_bias: f64,
    pub alpha: f64,
    pub config: BlseConfig,
    /// Epoch whose parameters were kept (highest dev Pearson, earliest on ties).
    pub best_epoch: usize,
    pub initial: EpochStats,
    pub history: Vec<EpochStats>,
}

#[derive(Clone)]
struct Params {
    m_src: DMatrix<f64>,
    m_tgt: DMatrix<f64>,
    w: DVector<f64>,
    b: f64,
}

impl Params {
    fn predict(&self, side: Side, avg: &DVector<f64>) -> f64 {
        let m = match side {
            Side::Source => &self.m_src,
            Side::Target => &self.m_tgt,
        };
        self.w.dot(&(m * avg)) + self.b
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One update over the concatenation of `params` (each paired with its gradient).
    fn step(&mut self, cfg: &BlseConfig, params: &mut [(&mut [f64], &[f64])]) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let mut k = 0;
        for (p, g) in params.iter_mut() {
            for (pi, &gi) in p.iter_mut().zip(g.iter()) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
                *pi -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_epsilon);
                k += 1;
            }
        }
    }
}

fn average(table: &EmbeddingTable, text: &str) -> DVector<f64> {
    DVector::from_vec(mean_embedding(table, &tokenize(text)))
}

fn labeled(corpus: &Corpus, what: &str) -> Result<Vec<f64>> {
    corpus
        .gold()
        .map_err(|e| Error::Validation(format!("{what} corpus: {e}")))
}

struct Gradients {
    m_src: DMatrix<f64>,
    m_tgt: DMatrix<f64>,
    w: DVector<f64>,
    b: f64,
}

/// Gradient of `MSE(batch) + alpha · mean_pairs ‖M_src s − M_tgt t‖²`.
fn gradients(
    p: &Params,
    inputs: &[DVector<f64>],
    targets: &[f64],
    batch: &[usize],
    src_dict: &DMatrix<f64>,
    tgt_dict: &DMatrix<f64>,
    dict_batch: &[usize],
    alpha: f64,
) -> Gradients {
    let d = p.w.len();
    let mut g = Gradients {
        m_src: DMatrix::zeros(d, d),
        m_tgt: DMatrix::zeros(d, d),
        w: DVector::zeros(d),
        b: 0.0,
    };
    let nb = batch.len() as f64;
    let mut err_a = DVector::zeros(d);
    for &i in batch {
        let a = &inputs[i];
        let h = &p.m_src * a;
        let err = p.w.dot(&h) + p.b - targets[i];
        g.w.axpy(2.0 * err / nb, &h, 1.0);
        g.b += 2.0 * err / nb;
        err_a.axpy(2.0 * err / nb, a, 1.0);
    }
    // d/dM of err * w·(M a) is err * w aᵀ
    g.m_src.ger(1.0, &p.w, &err_a, 0.0);
    if alpha > 0.0 && !dict_batch.is_empty() {
        let np = dict_batch.len() as f64;
        let scale = 2.0 * alpha / np;
        for &k in dict_batch {
            let s = src_dict.row(k).transpose();
            let t = tgt_dict.row(k).transpose();
            let r = &p.m_src * &s - &p.m_tgt * &t;
            g.m_src.ger(scale, &r, &s, 1.0);
            g.m_tgt.ger(-scale, &r, &t, 1.0);
        }
    }
    g
}

fn source_mse(p: &Params, inputs: &[DVector<f64>], targets: &[f64]) -> f64 {
    inputs
        .iter()
        .zip(targets)
        .map(|(a, y)| {
            let e = p.predict(Side::Source, a) - y;
            e * e
        })
        .sum::<f64>()
        / inputs.len() as f64
}

fn projection_loss(p: &Params, src_dict: &DMatrix<f64>, tgt_dict: &DMatrix<f64>) -> f64 {
    let r = src_dict * p.m_src.transpose() - tgt_dict * p.m_tgt.transpose();
    r.norm_squared() / src_dict.nrows() as f64
}

fn epoch_stats(
    epoch: usize,
    p: &Params,
    train: (&[DVector<f64>], &[f64]),
    dev: (&[DVector<f64>], &[f64]),
    dict: (&DMatrix<f64>, &DMatrix<f64>),
) -> EpochStats {
    let preds: Vec<f64> = dev.0.iter().map(|a| p.predict(Side::Source, a)).collect();
    EpochStats {
        epoch,
        source_mse: source_mse(p, train.0, train.1),
        projection_loss: projection_loss(p, dict.0, dict.1),
        dev_pearson: metrics::pearson(&preds, dev.1).ok(),
    }
}

/// Trains the joint projection + regression model with Adam and keeps the
/// epoch with the best source-side dev Pearson.
///
/// An epoch visits every training example once in minibatches; each step
/// also takes one minibatch of dictionary pairs, cycling through the
/// dictionary so that it too is covered at least once per epoch.
pub fn train_blse(
    src_corpus: &Corpus,
    src_emb: &EmbeddingTable,
    tgt_emb: &EmbeddingTable,
    dict: &BilingualDictionary,
    dev: &Corpus,
    config: &BlseConfig,
) -> Result<BlseModel> {
    config.validate()?;
    if src_emb.dim() != tgt_emb.dim() {
        return Err(Error::Dimension(format!(
            "source embeddings are {}-d, target {}-d",
            src_emb.dim(),
            tgt_emb.dim()
        )));
    }
    if src_corpus.is_empty() {
        return Err(Error::Validation("empty training corpus".into()));
    }
    let y = labeled(src_corpus, "training")?;
    let dev_y = labeled(dev, "dev")?;
    let d = src_emb.dim();

    let src_rows = src_emb.data();
    let tgt_rows = tgt_emb.data();
    let (src_dict, tgt_dict, dropped) = dictionary_matrices(src_emb, tgt_emb, dict, src_rows, tgt_rows);
    if src_dict.nrows() == 0 {
        return Err(Error::Validation(format!(
            "no dictionary pair is covered by both embedding tables ({dropped} dropped)"
        )));
    }

    let inputs: Vec<DVector<f64>> = src_corpus.items.iter().map(|i| average(src_emb, &i.text)).collect();
    let dev_inputs: Vec<DVector<f64>> = dev.items.iter().map(|i| average(src_emb, &i.text)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.init_scale.max(f64::MIN_POSITIVE)).expect("finite scale");
    let perturbed_identity = |rng: &mut ChaCha8Rng| {
        DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.0 } + noise.sample(rng))
    };
    let m_src = perturbed_identity(&mut rng);
    let m_tgt = perturbed_identity(&mut rng);
    let w = DVector::from_fn(d, |_, _| noise.sample(&mut rng));
    let b = y.iter().sum::<f64>() / y.len() as f64;
    let mut params = Params { m_src, m_tgt, w, b };

    let train = (inputs.as_slice(), y.as_slice());
    let devset = (dev_inputs.as_slice(), dev_y.as_slice());
    let dict_mats = (&src_dict, &tgt_dict);
    let initial = epoch_stats(0, &params, train, devset, dict_mats);

    let n = inputs.len();
    let np = src_dict.nrows();
    let bs = if config.batch_size == 0 { n.max(np) } else { config.batch_size };
    let train_batches = n.div_ceil(bs);
    let dict_batches = np.div_ceil(bs);
    let steps = train_batches.max(dict_batches);

    let mut adam = Adam::new(2 * d * d + d + 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut dict_order: Vec<usize> = (0..np).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Params)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        dict_order.shuffle(&mut rng);
        for step in 0..steps {
            let tb = step % train_batches;
            let db = step % dict_batches;
            let batch = &order[tb * bs..((tb + 1) * bs).min(n)];
            let dict_batch = &dict_order[db * bs..((db + 1) * bs).min(np)];
            let g = gradients(&params, &inputs, &y, batch, &src_dict, &tgt_dict, dict_batch, config.alpha);
            let gb = [g.b];
            let mut pb = [params.b];
            adam.step(
                config,
                &mut [
                    (params.m_src.as_mut_slice(), g.m_src.as_slice()),
                    (params.m_tgt.as_mut_slice(), g.m_tgt.as_slice()),
                    (params.w.as_mut_slice(), g.w.as_slice()),
                    (&mut pb, &gb),
                ],
            );
            params.b = pb[0];
        }
        let stats = epoch_stats(epoch, &params, train, devset, dict_mats);
        let score = stats.dev_pearson.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, params.clone()));
        }
        history.push(stats);
    }

    let (_, best_epoch, kept) = best.expect("at least one epoch");
    let flat = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
    let model = BlseModel {
        format: BLSE_FORMAT.to_string(),
        version: BLSE_VERSION,
        dim: d,
        m_src: flat(&kept.m_src),
        m_tgt: flat(&kept.m_tgt),
        head_weights: kept.w.as_slice().to_vec(),
        head_bias: kept.b,
        alpha: config.alpha,
        config: config.clone(),
        best_epoch,
        initial,
        history,
    };
    if model.m_src.iter().chain(&model.m_tgt).chain(&model.head_weights).any(|v| !v.is_finite()) {
        return Err(Error::Validation("training diverged to non-finite parameters".into()));
    }
    Ok(model)
}

impl BlseModel {
    pub fn projection(&self, side: Side) -> DMatrix<f64> {
        let m = match side {
            Side::Source => &self.m_src,
            Side::Target => &self.m_tgt,
        };
        DMatrix::from_row_slice(self.dim, self.dim, m)
    }

    /// `head(M_side · a)` for an already averaged vector.
    pub fn predict_vector(&self, side: Side, avg: &[f64]) -> Result<f64> {
        if avg.len() != self.dim {
            return Err(Error::Dimension(format!("vector is {}-d, model is {}-d", avg.len(), self.dim)));
        }
        let m = match side {
            Side::Source => &self.m_src,
            Side::Target => &self.m_tgt,
        };
        let mut out = self.head_bias;
        for (row, w) in m.chunks_exact(self.dim).zip(&self.head_weights) {
            out += w * row.iter().zip(avg).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(out)
    }

    /// Scores the original (untranslated) text with the side's embeddings.
    /// Text without known tokens scores `head(0)`, i.e. the bias.
    pub fn predict(&self, item: &Item, emb: &EmbeddingTable, side: Side) -> Result<f64> {
        if emb.dim() != self.dim {
            return Err(Error::Dimension(format!("table is {}-d, model is {}-d", emb.dim(), self.dim)));
        }
        self.predict_vector(side, &mean_embedding(emb, &tokenize(&item.text)))
    }

    /// Dictionary projection loss of the kept parameters.
    pub fn projection_loss(&self, src_emb: &EmbeddingTable, tgt_emb: &EmbeddingTable, dict: &BilingualDictionary) -> f64 {
        let (s, t, _) = dictionary_matrices(src_emb, tgt_emb, dict, src_emb.data(), tgt_emb.data());
        let r = &s * self.projection(Side::Source).transpose() - &t * self.projection(Side::Target).transpose();
        r.norm_squared() / s.nrows().max(1) as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: BlseModel = serde_json::from_str(s)?;
        if m.format != BLSE_FORMAT || m.version != BLSE_VERSION {
            return Err(Error::Validation(format!("unsupported BLSE document {} v{}", m.format, m.version)));
        }
        let dd = m.dim * m.dim;
        if m.m_src.len() != dd || m.m_tgt.len() != dd || m.head_weights.len() != m.dim {
            return Err(Error::Dimension("parameter sizes do not match dim".into()));
        }
        Ok(m)
    }
}

pub fn predict_blse(model: &BlseModel, item: &Item, emb: &EmbeddingTable, side: Side) -> Result<f64> {
    model.predict(item, emb, side)
}
