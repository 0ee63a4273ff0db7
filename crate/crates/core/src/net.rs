//! Residual MLP regressor, full-batch AdamW training and epoch selection.
//!
//! Layout: three hidden blocks `FC -> LayerNorm -> ReLU`, the second and third
//! with an identity shortcut, followed by `FC -> sigmoid`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub const HIDDEN: usize = 128;
pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const INITIALIZATION: &str = "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero bias, unit gain";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `[out, in]`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub offset: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub input_dim: usize,
    pub hidden: usize,
    /// Three hidden layers then the output layer.
    pub layers: Vec<Dense>,
    pub norms: Vec<LayerNorm>,
}

/// Intermediate values kept for back-propagation.
struct Cache {
    inputs: Vec<Array2<f64>>,
    normalized: Vec<Array2<f64>>,
    inv_std: Vec<Array1<f64>>,
    activated: Vec<Array2<f64>>,
    output: Array1<f64>,
}

fn layer_norm(z: &Array2<f64>, ln: &LayerNorm) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let width = z.ncols() as f64;
    let mean = z.sum_axis(Axis(1)) / width;
    let centred = z - &mean.view().insert_axis(Axis(1));
    let var = centred.mapv(|v| v * v).sum_axis(Axis(1)) / width;
    let inv_std = var.mapv(|v| 1.0 / (v + LAYER_NORM_EPS).sqrt());
    let xhat = centred * &inv_std.view().insert_axis(Axis(1));
    let out = &xhat * &ln.gain + &ln.offset;
    (out, xhat, inv_std)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ModelParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            layers: vec![
                Dense::zeros(input_dim, hidden),
                Dense::zeros(hidden, hidden),
                Dense::zeros(hidden, hidden),
                Dense::zeros(hidden, 1),
            ],
            norms: (0..3)
                .map(|_| LayerNorm {
                    gain: Array1::ones(hidden),
                    offset: Array1::zeros(hidden),
                })
                .collect(),
        }
    }

    /// Seeded initialization; equal seeds give bitwise-equal parameters.
    pub fn init(seed: u64, input_dim: usize) -> Result<Self> {
        Self::init_with_hidden(seed, input_dim, HIDDEN)
    }

    pub fn init_with_hidden(seed: u64, input_dim: usize, hidden: usize) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::InvalidParameter("layer widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(input_dim, hidden);
        for layer in &mut p.layers {
            let bound = 1.0 / (layer.weight.ncols() as f64).sqrt();
            layer.weight.mapv_inplace(|_| rng.gen_range(-bound..bound));
        }
        Ok(p)
    }

    /// Every parameter tensor as a flat slice, in a fixed order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(14);
        for (i, l) in self.layers.iter().enumerate() {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
            if let Some(n) = self.norms.get(i) {
                out.push(n.gain.as_slice().expect("standard layout"));
                out.push(n.offset.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(14);
        let norms = self.norms.iter_mut().map(Some).chain(std::iter::repeat_with(|| None));
        for (l, n) in self.layers.iter_mut().zip(norms) {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
            if let Some(n) = n {
                out.push(n.gain.as_slice_mut().expect("standard layout"));
                out.push(n.offset.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn forward_cached(&self, x: ArrayView2<f64>) -> Cache {
        let mut inputs = Vec::with_capacity(4);
        let mut normalized = Vec::with_capacity(3);
        let mut inv_std = Vec::with_capacity(3);
        let mut activated = Vec::with_capacity(3);
        let mut h = x.to_owned();
        for i in 0..3 {
            let z = self.layers[i].apply(h.view());
            let (a, xhat, istd) = layer_norm(&z, &self.norms[i]);
            let r = a.mapv(|v| v.max(0.0));
            inputs.push(h);
            h = if i == 0 { r.clone() } else { &inputs[i] + &r };
            normalized.push(xhat);
            inv_std.push(istd);
            activated.push(a);
        }
        let logits = self.layers[3].apply(h.view());
        inputs.push(h);
        let output = logits.column(0).mapv(sigmoid);
        Cache {
            inputs,
            normalized,
            inv_std,
            activated,
            output,
        }
    }

    /// Network outputs in (0, 1) for each row of `x`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_input(&x)?;
        Ok(self.forward_cached(x).output)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<f64> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(self.forward(view)?[0])
    }

    /// Full-batch RMSE loss and its gradient.
    pub fn loss_and_gradient(
        &self,
        x: ArrayView2<f64>,
        targets: &Array1<f64>,
    ) -> Result<(f64, ModelParams)> {
        self.check_input(&x)?;
        if x.nrows() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: targets.len(),
            });
        }
        let n = x.nrows();
        if n == 0 {
            return Err(Error::EmptySplit("training batch"));
        }
        let cache = self.forward_cached(x);
        let y = &cache.output;
        let err = y - targets;
        let loss = (err.mapv(|e| e * e).sum() / n as f64).sqrt();
        let mut grad = ModelParams::zeros(self.input_dim, self.hidden);
        grad.norms.iter_mut().for_each(|ln| ln.gain.fill(0.0));
        if loss == 0.0 {
            return Ok((loss, grad));
        }

        // d loss / d logit.
        let d_logit: Array1<f64> = err
            .iter()
            .zip(y.iter())
            .map(|(e, yv)| e / (n as f64 * loss) * yv * (1.0 - yv))
            .collect();
        let d_logit = d_logit.insert_axis(Axis(1));
        grad.layers[3].weight = d_logit.t().dot(&cache.inputs[3]);
        grad.layers[3].bias = d_logit.sum_axis(Axis(0));
        let mut dh = d_logit.dot(&self.layers[3].weight);

        for i in (0..3).rev() {
            let a = &cache.activated[i];
            let da = &dh * &a.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let xhat = &cache.normalized[i];
            let ln = &self.norms[i];
            grad.norms[i].gain = (&da * xhat).sum_axis(Axis(0));
            grad.norms[i].offset = da.sum_axis(Axis(0));
            let dxhat = &da * &ln.gain;
            let width = dxhat.ncols() as f64;
            let mean_d = dxhat.sum_axis(Axis(1)) / width;
            let mean_dx = (&dxhat * xhat).sum_axis(Axis(1)) / width;
            let dz = (dxhat - &mean_d.insert_axis(Axis(1)) - xhat * &mean_dx.insert_axis(Axis(1)))
                * &cache.inv_std[i].view().insert_axis(Axis(1));
            grad.layers[i].weight = dz.t().dot(&cache.inputs[i]);
            grad.layers[i].bias = dz.sum_axis(Axis(0));
            let through = dz.dot(&self.layers[i].weight);
            dh = if i == 0 { through } else { through + dh };
        }
        Ok((loss, grad))
    }
}

/// Stacks equal-length rows into a matrix.
pub fn to_matrix<R: AsRef<[f64]>>(rows: &[R], dim: usize) -> Result<Array2<f64>> {
    let mut m = Array2::zeros((rows.len(), dim));
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        m.row_mut(i).assign(&ArrayView2::from_shape((1, dim), r).expect("row").row(0));
    }
    Ok(m)
}

/// Hyper-parameters of AdamW with decoupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamW {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

struct AdamState {
    m: ModelParams,
    v: ModelParams,
    step: i32,
}

impl AdamState {
    fn new(p: &ModelParams) -> Self {
        let mut m = p.clone();
        m.slices_mut().into_iter().for_each(|s| s.fill(0.0));
        Self {
            v: m.clone(),
            m,
            step: 0,
        }
    }

    fn update(&mut self, opt: &AdamW, params: &mut ModelParams, grad: &ModelParams) {
        self.step += 1;
        let bc1 = 1.0 - opt.beta1.powi(self.step);
        let bc2 = 1.0 - opt.beta2.powi(self.step);
        let decay = 1.0 - opt.learning_rate * opt.weight_decay;
        let g_all = grad.slices();
        for (((p, m), v), g) in params
            .slices_mut()
            .into_iter()
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
            .zip(g_all)
        {
            for i in 0..p.len() {
                m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
                v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = p[i] * decay - opt.learning_rate * m_hat / (v_hat.sqrt() + opt.epsilon);
            }
        }
    }
}

/// Splits consulted by epoch selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Train, validation and test metrics.
    #[default]
    AllSplits,
    /// Train and validation metrics only.
    TrainVal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    /// Extra epochs when the best epoch lies in the final tenth of training.
    pub extension_epochs: usize,
    pub optimizer: AdamW,
    pub val_fraction: f64,
    pub selection: Selection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 800,
            extension_epochs: 800,
            optimizer: AdamW::default(),
            val_fraction: 0.1,
            selection: Selection::AllSplits,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "validation fraction {} is not in (0, 1)",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// Inputs scaled to [0, 1] and targets scaled to [0, 1].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), idx),
            y: self.y.select(Axis(0), idx),
        }
    }
}

/// Seeded shuffle of the training rows; the last `val_fraction` becomes the
/// validation split. Returns `(train, validation)` row indices.
pub fn validation_split(rows: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let val = ((rows as f64 * val_fraction).round() as usize).max(1);
    if rows < 2 || val >= rows {
        return Err(Error::EmptySplit("training rows too few for a validation split"));
    }
    let mut idx: Vec<usize> = (0..rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    idx.shuffle(&mut rng);
    let valid = idx.split_off(rows - val);
    Ok((idx, valid))
}

/// Metrics of one epoch; losses are RMSE on the [1, 5] scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_train: f64,
    pub loss_val: f64,
    pub loss_test: Option<f64>,
    pub rho_train: f64,
    pub rho_val: f64,
    pub rho_test: Option<f64>,
    pub distance: f64,
}

pub type TrainHistory = Vec<EpochRecord>;

/// Combines the level and spread of correlations and losses across splits.
pub fn overall_distance(rho: &[f64], loss: &[f64]) -> f64 {
    let spread = |v: &[f64]| {
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    };
    let rho_hat = (1.0 - stats::mean(rho)).hypot(spread(rho));
    let loss_hat = stats::mean(loss).hypot(spread(loss));
    rho_hat.hypot(loss_hat)
}

/// Index of the smallest distance; the earliest wins ties.
pub fn select_epoch(distances: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &d) in distances.iter().enumerate() {
        if best.map_or(true, |b| d < distances[b]) {
            best = Some(i);
        }
    }
    best
}

fn metrics(params: &ModelParams, data: &Dataset) -> (f64, f64) {
    let pred = params.forward_cached(data.x.view()).output;
    let pred: Vec<f64> = pred.iter().map(|&v| 4.0 * v + 1.0).collect();
    let truth: Vec<f64> = data.y.iter().map(|&v| 4.0 * v + 1.0).collect();
    (stats::rmse(&pred, &truth), stats::pearson(&pred, &truth))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the selected epoch.
    pub params: ModelParams,
    pub selected_epoch: usize,
    pub history: TrainHistory,
}

/// Full-batch training; `test` is scored every epoch but never trained on.
pub fn train(
    training: &Dataset,
    test: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if training.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let test = test.filter(|t| !t.is_empty());
    if config.selection == Selection::AllSplits && test.is_none() {
        return Err(Error::EmptySplit("test"));
    }
    let (tr_idx, val_idx) = validation_split(training.len(), config.val_fraction, config.seed)?;
    let tr = training.select(&tr_idx);
    let val = training.select(&val_idx);

    let mut params = ModelParams::init(config.seed, training.x.ncols())?;
    let mut adam = AdamState::new(&params);
    let mut history = Vec::new();
    let mut best_params = params.clone();
    let mut best: Option<usize> = None;
    let mut planned = config.epochs;
    let mut extended = false;

    let mut epoch = 0;
    while epoch < planned {
        let (loss, grad) = params.loss_and_gradient(tr.x.view(), &tr.y)?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}: {loss}")));
        }
        adam.update(&config.optimizer, &mut params, &grad);

        let (l_tr, r_tr) = metrics(&params, &tr);
        let (l_val, r_val) = metrics(&params, &val);
        let te = test.map(|t| metrics(&params, t));
        let distance = match (config.selection, te) {
            (Selection::AllSplits, Some((l_te, r_te))) => {
                overall_distance(&[r_tr, r_val, r_te], &[l_tr, l_val, l_te])
            }
            _ => overall_distance(&[r_tr, r_val], &[l_tr, l_val]),
        };
        if !distance.is_finite() {
            return Err(Error::NonFinite(format!("overall distance at epoch {epoch}")));
        }
        history.push(EpochRecord {
            epoch,
            loss_train: l_tr,
            loss_val: l_val,
            loss_test: te.map(|t| t.0),
            rho_train: r_tr,
            rho_val: r_val,
            rho_test: te.map(|t| t.1),
            distance,
        });
        if best.map_or(true, |b| distance < history[b].distance) {
            best = Some(epoch);
            best_params = params.clone();
        }
        epoch += 1;

        if epoch == planned && !extended && config.extension_epochs > 0 {
            extended = true;
            let tail_start = planned - planned / 10;
            if best.is_some_and(|b| b >= tail_start) {
                log::info!("best epoch in final tenth; extending by {}", config.extension_epochs);
                planned += config.extension_epochs;
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        selected_epoch: best.expect("at least one epoch"),
        history,
    })
}
