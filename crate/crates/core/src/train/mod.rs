//! Supervised training of the residual network with hand-written reverse mode.
//!
//! Two parameterizations of the same function are supported: `Standard`
//! holds the increments `dW_t, db_t` directly, `Reparametrized` holds the
//! standardized noises `eps_t` with `dW_t = eps_w sigma_w sqrt(dt) / sqrt(D)`
//! and `db_t = eps_b sigma_b sqrt(dt)`. Gradients of the latter are the
//! former times those constant factors.

pub mod data;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::paramlaw::ParamLaw;
use crate::rng::{fill_normal, SeedSpec, INPUT_LAYER, OUTPUT_LAYER};

pub use data::{load_idx, load_mnist, separable_toy, synthetic_digits, Dataset, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    Reparametrized,
    Standard,
}

impl GradientMode {
    pub fn name(self) -> &'static str {
        match self {
            GradientMode::Reparametrized => "reparametrized",
            GradientMode::Standard => "standard",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationLayers {
    /// `D x Z`.
    pub w_i: DMatrix<f64>,
    /// `Y x D`.
    pub w_o: DMatrix<f64>,
    pub train_in: bool,
    pub train_out: bool,
}

impl AdaptationLayers {
    /// Standard normal entries, `W_I` from the input stream and `W_O` from the output stream.
    pub fn random(d: usize, z: usize, y: usize, seed: SeedSpec, trainable: bool) -> Self {
        let draw = |rows, cols, layer| {
            let mut v = vec![0.0; rows * cols];
            fill_normal(&mut seed.with_layer(layer).rng(), &mut v);
            DMatrix::from_vec(rows, cols, v)
        };
        AdaptationLayers {
            w_i: draw(d, z, INPUT_LAYER),
            w_o: draw(y, d, OUTPUT_LAYER),
            train_in: trainable,
            train_out: trainable,
        }
    }
}

/// Residual-block parameters in one of the two parameterizations.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualParams {
    pub mode: GradientMode,
    /// `eps_w` (reparametrized) or `dW` (standard), one `D x D` per layer.
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    /// `sigma_w sqrt(dt) / sqrt(D)`.
    pub scale_w: f64,
    /// `sigma_b sqrt(dt)`.
    pub scale_b: f64,
}

impl ResidualParams {
    pub fn scales(sigma_w: f64, sigma_b: f64, dt: f64, d: usize) -> (f64, f64) {
        (sigma_w * dt.sqrt() / (d as f64).sqrt(), sigma_b * dt.sqrt())
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn width(&self) -> usize {
        self.biases.first().map_or(0, |b| b.len())
    }

    pub fn effective_weight(&self, l: usize) -> DMatrix<f64> {
        match self.mode {
            GradientMode::Reparametrized => &self.weights[l] * self.scale_w,
            GradientMode::Standard => self.weights[l].clone(),
        }
    }

    pub fn effective_bias(&self, l: usize) -> DVector<f64> {
        match self.mode {
            GradientMode::Reparametrized => &self.biases[l] * self.scale_b,
            GradientMode::Standard => self.biases[l].clone(),
        }
    }

    /// Same function, other parameterization. Going to `Standard` is exact;
    /// going back divides by the scales.
    pub fn to_mode(&self, mode: GradientMode) -> ResidualParams {
        if mode == self.mode {
            return self.clone();
        }
        let (weights, biases) = match mode {
            GradientMode::Standard => (
                (0..self.depth()).map(|l| self.effective_weight(l)).collect(),
                (0..self.depth()).map(|l| self.effective_bias(l)).collect(),
            ),
            GradientMode::Reparametrized => (
                self.weights.iter().map(|w| w / self.scale_w).collect(),
                self.biases.iter().map(|b| b / self.scale_b).collect(),
            ),
        };
        ResidualParams { mode, weights, biases, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub phi: Activation,
    pub psi: Activation,
    pub params: ResidualParams,
    pub adapt: AdaptationLayers,
}

impl Network {
    /// Initial network: layer `l` noise from `seed.with_layer(l)`.
    pub fn init(model: &ModelConfig, mode: GradientMode, z: usize, y: usize, seed: SeedSpec, trainable_adaptation: bool) -> Result<Self> {
        let (sigma_w, sigma_b) = iid_sigmas(&model.law)?;
        let d = model.width;
        let (scale_w, scale_b) = ResidualParams::scales(sigma_w, sigma_b, model.dt(), d);
        let mut weights = Vec::with_capacity(model.depth);
        let mut biases = Vec::with_capacity(model.depth);
        for l in 0..model.depth {
            let mut rng = seed.with_layer(l as u64).rng();
            let mut zw = vec![0.0; d * d];
            let mut zb = vec![0.0; d];
            fill_normal(&mut rng, &mut zw);
            fill_normal(&mut rng, &mut zb);
            weights.push(DMatrix::from_vec(d, d, zw));
            biases.push(DVector::from_vec(zb));
        }
        let params = ResidualParams {
            mode: GradientMode::Reparametrized,
            weights,
            biases,
            scale_w,
            scale_b,
        }
        .to_mode(mode);
        Ok(Network {
            phi: model.phi,
            psi: model.psi,
            params,
            adapt: AdaptationLayers::random(d, z, y, seed, trainable_adaptation),
        })
    }

    pub fn with_mode(&self, mode: GradientMode) -> Network {
        Network { params: self.params.to_mode(mode), ..self.clone() }
    }

    /// Logits `Y x B` for inputs `B x Z`.
    pub fn logits(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = &self.adapt.w_i * z.transpose();
        for l in 0..self.params.depth() {
            let psi = x.map(|v| self.psi.eval(v));
            let mut h = self.params.effective_weight(l) * psi;
            let b = self.params.effective_bias(l);
            for mut c in h.column_iter_mut() {
                c += &b;
            }
            x += h.map(|v| self.phi.eval(v));
        }
        &self.adapt.w_o * x
    }
}

fn iid_sigmas(law: &ParamLaw) -> Result<(f64, f64)> {
    match law {
        ParamLaw::FullyIid(l) => Ok((l.sigma_w, l.sigma_b)),
        other => Err(Error::Config(format!("training supports the fully i.i.d. law only, got {}", other.kind()))),
    }
}

/// Per-column `log softmax`, stabilized by the column max.
pub fn log_softmax(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut c in out.column_iter_mut() {
        let m = c.max();
        let lse = m + c.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        c.add_scalar_mut(-lse);
    }
    out
}

/// Mean cross-entropy of logits `Y x B` against targets `B x Y`.
pub fn cross_entropy(logits: &DMatrix<f64>, targets: &DMatrix<f64>) -> f64 {
    let lp = log_softmax(logits);
    let b = logits.ncols();
    -(0..b)
        .map(|j| {
            (0..logits.nrows())
                .filter(|&k| targets[(j, k)] != 0.0)
                .map(|k| targets[(j, k)] * lp[(k, j)])
                .sum::<f64>()
        })
        .sum::<f64>()
        / b as f64
}

/// Everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Inputs `Z x B`.
    pub z: DMatrix<f64>,
    /// States `x_0 .. x_T`, each `D x B`.
    pub xs: Vec<DMatrix<f64>>,
    /// Pre-activations `h_t = dW_t psi(x_t) + db_t`.
    pub hs: Vec<DMatrix<f64>>,
    pub dws: Vec<DMatrix<f64>>,
    pub logits: DMatrix<f64>,
    /// Targets `Y x B`.
    pub targets: DMatrix<f64>,
}

pub fn forward_loss(net: &Network, z: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<(f64, ForwardCache)> {
    if z.ncols() != net.adapt.w_i.ncols() {
        return Err(Error::dim("input features", net.adapt.w_i.ncols(), z.ncols()));
    }
    if targets.ncols() != net.adapt.w_o.nrows() || targets.nrows() != z.nrows() {
        return Err(Error::dim("target columns", net.adapt.w_o.nrows(), targets.ncols()));
    }
    let zt = z.transpose();
    let mut x = &net.adapt.w_i * &zt;
    let depth = net.params.depth();
    let mut xs = Vec::with_capacity(depth + 1);
    let mut hs = Vec::with_capacity(depth);
    let mut dws = Vec::with_capacity(depth);
    for l in 0..depth {
        let dw = net.params.effective_weight(l);
        let db = net.params.effective_bias(l);
        let psi = x.map(|v| net.psi.eval(v));
        let mut h = &dw * psi;
        for mut c in h.column_iter_mut() {
            c += &db;
        }
        let next = &x + h.map(|v| net.phi.eval(v));
        xs.push(x);
        hs.push(h);
        dws.push(dw);
        x = next;
    }
    let logits = &net.adapt.w_o * &x;
    xs.push(x);
    let loss = cross_entropy(&logits, targets);
    Ok((
        loss,
        ForwardCache { z: zt, xs, hs, dws, logits, targets: targets.transpose() },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// With respect to whatever [`ResidualParams::weights`] holds.
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub w_i: Option<DMatrix<f64>>,
    pub w_o: Option<DMatrix<f64>>,
}

/// Reverse-mode gradients of the mean cross-entropy in the network's own
/// parameterization.
pub fn backward(net: &Network, cache: &ForwardCache) -> Gradients {
    let b = cache.logits.ncols() as f64;
    let probs = log_softmax(&cache.logits).map(f64::exp);
    let dlogits = (probs - &cache.targets) / b;
    backward_from(net, cache, &dlogits)
}

/// Backward pass from an arbitrary upstream gradient on the logits.
pub fn backward_from(net: &Network, cache: &ForwardCache, dlogits: &DMatrix<f64>) -> Gradients {
    let depth = net.params.depth();
    let x_t = &cache.xs[depth];
    let w_o = net.adapt.train_out.then(|| dlogits * x_t.transpose());
    let mut xbar = net.adapt.w_o.transpose() * dlogits;
    let mut gw = vec![DMatrix::zeros(0, 0); depth];
    let mut gb = vec![DVector::zeros(0); depth];
    for l in (0..depth).rev() {
        let g = cache.hs[l].zip_map(&xbar, |h, xb| net.phi.derivative(h) * xb);
        let psi = cache.xs[l].map(|v| net.psi.eval(v));
        let dw = &g * psi.transpose();
        let db = DVector::from_iterator(g.nrows(), g.row_iter().map(|r| r.sum()));
        let back = cache.dws[l].transpose() * &g;
        xbar += back.zip_map(&cache.xs[l], |v, x| v * net.psi.derivative(x));
        match net.params.mode {
            GradientMode::Standard => {
                gw[l] = dw;
                gb[l] = db;
            }
            GradientMode::Reparametrized => {
                gw[l] = dw * net.params.scale_w;
                gb[l] = db * net.params.scale_b;
            }
        }
    }
    let w_i = net.adapt.train_in.then(|| &xbar * cache.z.transpose());
    Gradients { weights: gw, biases: gb, w_i, w_o }
}

impl Network {
    /// Plain gradient step `p -= lr * grad` on every trainable tensor.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        for (w, g) in self.params.weights.iter_mut().zip(&grads.weights) {
            w.zip_apply(g, |p, d| *p -= lr * d);
        }
        for (b, g) in self.params.biases.iter_mut().zip(&grads.biases) {
            b.zip_apply(g, |p, d| *p -= lr * d);
        }
        if let Some(g) = &grads.w_i {
            self.adapt.w_i.zip_apply(g, |p, d| *p -= lr * d);
        }
        if let Some(g) = &grads.w_o {
            self.adapt.w_o.zip_apply(g, |p, d| *p -= lr * d);
        }
    }

    /// Fraction of rows whose arg-max logit matches the arg-max target.
    pub fn accuracy(&self, data: &Dataset) -> f64 {
        let labels = data.labels();
        let mut correct = 0;
        let chunk = 500;
        let mut start = 0;
        while start < data.len() {
            let len = chunk.min(data.len() - start);
            let logits = self.logits(&data.inputs.rows(start, len).into_owned());
            for j in 0..len {
                if logits.column(j).argmax().0 == labels[start + j] {
                    correct += 1;
                }
            }
            start += len;
        }
        correct as f64 / data.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: GradientMode,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub trainable_adaptation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: GradientMode::Reparametrized,
            learning_rate: 0.05,
            batch_size: 200,
            epochs: 1,
            trainable_adaptation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainTrace {
    pub mode: GradientMode,
    pub depth: usize,
    pub width: usize,
    /// Mean loss of each mini-batch before its update.
    pub losses: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub diverged: bool,
}

impl TrainTrace {
    /// Mean of the last ten batch losses (all of them if fewer); a single
    /// batch is too noisy to compare runs.
    pub fn final_loss(&self) -> f64 {
        let k = self.losses.len().min(10);
        if k == 0 {
            return f64::NAN;
        }
        self.losses[self.losses.len() - k..].iter().sum::<f64>() / k as f64
    }
}

/// Trailing moving average with window `w` (`len - w + 1` values).
pub fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    if w == 0 || x.len() < w {
        return Vec::new();
    }
    x.windows(w).map(|s| s.iter().sum::<f64>() / w as f64).collect()
}

/// Plain SGD over shuffled mini-batches. Epoch `e` shuffles with
/// `seed.with_replicate(e + 1)`; initialization uses replicate 0.
pub fn sgd_run(model: &ModelConfig, cfg: &TrainConfig, seed: SeedSpec, train: &Dataset, test: Option<&Dataset>) -> Result<TrainTrace> {
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::Config(format!("learning rate must be >= 0, got {}", cfg.learning_rate)));
    }
    if cfg.batch_size == 0 || cfg.batch_size > train.len() {
        return Err(Error::Config(format!(
            "batch size {} must be in 1..={}",
            cfg.batch_size,
            train.len()
        )));
    }
    let mut net = Network::init(model, cfg.mode, train.input_dim(), train.n_classes(), seed.with_replicate(0), cfg.trainable_adaptation)?;
    let mut losses = Vec::new();
    let mut diverged = false;
    let mut order: Vec<usize> = (0..train.len()).collect();
    'epochs: for e in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed.with_replicate(e as u64 + 1).rng());
        for batch in order.chunks_exact(cfg.batch_size) {
            let (z, y) = train.select(batch);
            let (loss, cache) = forward_loss(&net, &z, &y)?;
            if !loss.is_finite() {
                diverged = true;
                losses.push(loss);
                break 'epochs;
            }
            losses.push(loss);
            let grads = backward(&net, &cache);
            net.sgd_step(&grads, cfg.learning_rate);
        }
    }
    let (train_accuracy, test_accuracy) = if diverged {
        (f64::NAN, test.map(|_| f64::NAN))
    } else {
        (net.accuracy(train), test.map(|t| net.accuracy(t)))
    };
    Ok(TrainTrace {
        mode: cfg.mode,
        depth: model.depth,
        width: model.width,
        losses,
        train_accuracy,
        test_accuracy,
        diverged,
    })
}
