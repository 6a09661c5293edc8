//! Feed-forward predictors trained on squared or logistic loss plus a
//! weighted conditional-dependence penalty `λ·T(Ỹ, A | Y)`.
//!
//! A stochastic model takes `noise_dim` extra standard-Gaussian inputs,
//! redrawn for every row each time the row is used. Gradients are computed
//! by hand: backpropagation through the dense layers and the activation,
//! chained with [`kmcd_value_and_grad`] for the penalty.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sample::Sample;
use crate::simulate::rng_from_seed;
use crate::statmod::{kmcd, kmcd_value_and_grad, median_bandwidth, AKernel, Bandwidth, KernelConfig, MIN_N};

const MAGIC: &[u8; 4] = b"EQOM";
const FORMAT_VERSION: u32 = 1;
const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;
const SELU_SCALE: f64 = 1.050_700_987_355_480_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Binary,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reg" | "regression" => Ok(Task::Regression),
            "bin" | "binary" => Ok(Task::Binary),
            _ => Err(Error::Parse(format!("unknown task {s:?}, expected reg or bin"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Regression => "reg",
            Task::Binary => "bin",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Selu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Selu if z > 0.0 => SELU_SCALE * z,
            Activation::Selu => SELU_SCALE * SELU_ALPHA * z.exp_m1(),
            Activation::Tanh => z.tanh(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Selu if z > 0.0 => SELU_SCALE,
            Activation::Selu => SELU_SCALE * SELU_ALPHA * z.exp(),
            Activation::Tanh => 1.0 - z.tanh().powi(2),
        }
    }

    fn code(self) -> u32 {
        match self {
            Activation::Selu => 0,
            Activation::Tanh => 1,
        }
    }

    fn from_code(c: u32) -> Result<Self> {
        match c {
            0 => Ok(Activation::Selu),
            1 => Ok(Activation::Tanh),
            _ => Err(Error::Parse(format!("unknown activation code {c}"))),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "selu" => Ok(Activation::Selu),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(Error::Parse(format!("unknown activation {s:?}, expected selu or tanh"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Selu => "selu",
            Activation::Tanh => "tanh",
        })
    }
}

/// Architecture of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    /// Hidden layer widths. An empty list gives a linear model.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Number of Gaussian noise inputs. Zero gives a deterministic model.
    pub noise_dim: usize,
    pub task: Task,
    /// Leave the protected attribute out of the inputs.
    pub exclude_protected: bool,
    pub seed: u64,
}

impl Default for MlpSpec {
    fn default() -> Self {
        Self {
            hidden: vec![50, 50],
            activation: Activation::Selu,
            noise_dim: 0,
            task: Task::Regression,
            exclude_protected: false,
            seed: 0,
        }
    }
}

impl MlpSpec {
    pub fn stochastic(&self) -> bool {
        self.noise_dim > 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::Argument("hidden layer widths must be at least 1".into()));
        }
        Ok(())
    }

    fn input_dim(&self, x_dim: usize) -> usize {
        usize::from(!self.exclude_protected) + x_dim + self.noise_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Adam,
    Sgd,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Optimizer::Adam),
            "sgd" => Ok(Optimizer::Sgd),
            _ => Err(Error::Parse(format!("unknown optimizer {s:?}, expected adam or sgd"))),
        }
    }
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Optimizer::Adam => "adam",
            Optimizer::Sgd => "sgd",
        })
    }
}

/// Optimization settings.
///
/// The penalty kernel's bandwidth on `Ỹ` is resolved once against the
/// training targets: `Median` becomes the median heuristic of `y`,
/// `ScaledMedian(k)` becomes `k` times that, and `Fixed` is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    /// Use the whole sample as one batch.
    pub full_batch: bool,
    pub kernel: KernelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            learning_rate: 1e-3,
            batch: 128,
            epochs: 500,
            optimizer: Optimizer::Adam,
            full_batch: false,
            kernel: KernelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Argument(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Argument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch == 0 {
            return Err(Error::Argument("batch size must be positive".into()));
        }
        self.kernel.validate()
    }
}

/// Mean loss and penalty over the batches of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub penalty: f64,
    /// `loss + λ·penalty`
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    /// `out × in`
    w: DMatrix<f64>,
    b: DVector<f64>,
}

/// Settings of the penalty, fixed at training time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyKernel {
    pub bandwidth: f64,
    pub ridge_scale: f64,
    pub cond_ridge_scale: f64,
    pub a_kernel: AKernel,
}

impl PenaltyKernel {
    fn resolve(cfg: &KernelConfig, y: &[f64]) -> Self {
        let bandwidth = match cfg.bandwidth {
            Bandwidth::Median => median_bandwidth(y),
            Bandwidth::ScaledMedian(k) => k * median_bandwidth(y),
            Bandwidth::Fixed(s) => s,
        };
        Self { bandwidth, ridge_scale: cfg.ridge_scale, cond_ridge_scale: cfg.cond_ridge_scale, a_kernel: cfg.a_kernel }
    }

    pub fn config(&self) -> KernelConfig {
        KernelConfig {
            bandwidth: Bandwidth::Fixed(self.bandwidth),
            ridge_scale: self.ridge_scale,
            cond_ridge_scale: self.cond_ridge_scale,
            a_kernel: self.a_kernel,
            ..KernelConfig::default()
        }
    }
}

/// A trained network with its input standardization and training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub spec: MlpSpec,
    pub x_dim: usize,
    input_mean: Vec<f64>,
    input_scale: Vec<f64>,
    target_mean: f64,
    target_scale: f64,
    layers: Vec<Dense>,
    pub penalty: PenaltyKernel,
    pub trace: Vec<EpochRecord>,
}

/// Objective value on one batch with the gradient of every parameter.
struct BatchEval {
    loss: f64,
    penalty: f64,
    grad: Vec<Dense>,
}

fn column_stats(cols: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    cols.iter()
        .map(|c| {
            let n = c.len() as f64;
            let m = c.iter().sum::<f64>() / n;
            let v = c.iter().map(|u| (u - m) * (u - m)).sum::<f64>() / n;
            let s = v.sqrt();
            (m, if s > 1e-12 { s } else { 1.0 })
        })
        .unzip()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl FittedModel {
    /// A model with LeCun-normal weights and zero biases, standardized
    /// against `data`.
    pub fn init(spec: &MlpSpec, data: &Sample) -> Result<Self> {
        spec.validate()?;
        data.validate()?;
        let mut model = Self::zeros(spec, data.x_dim);
        let mut cols = Vec::new();
        if !spec.exclude_protected {
            cols.push(data.a.clone());
        }
        for j in 0..data.x_dim {
            cols.push((0..data.n()).map(|i| data.x_row(i)[j]).collect());
        }
        let (mean, scale) = column_stats(&cols);
        model.input_mean = mean;
        model.input_scale = scale;
        if spec.task == Task::Regression {
            let (m, s) = column_stats(std::slice::from_ref(&data.y));
            model.target_mean = m[0];
            model.target_scale = s[0];
        }
        let mut rng = rng_from_seed(spec.seed);
        for layer in &mut model.layers {
            let std = (1.0 / layer.w.ncols() as f64).sqrt();
            layer.w = DMatrix::from_fn(layer.w.nrows(), layer.w.ncols(), |_, _| {
                std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            });
        }
        Ok(model)
    }

    /// A model whose weights and biases are all zero, with identity
    /// standardization.
    pub fn zeros(spec: &MlpSpec, x_dim: usize) -> Self {
        let d_in = spec.input_dim(x_dim);
        let mut widths = vec![d_in];
        widths.extend(&spec.hidden);
        widths.push(1);
        let layers =
            widths.windows(2).map(|w| Dense { w: DMatrix::zeros(w[1], w[0]), b: DVector::zeros(w[1]) }).collect();
        let n_std = d_in - spec.noise_dim;
        Self {
            spec: spec.clone(),
            x_dim,
            input_mean: vec![0.0; n_std],
            input_scale: vec![1.0; n_std],
            target_mean: 0.0,
            target_scale: 1.0,
            layers,
            penalty: PenaltyKernel::resolve(&KernelConfig::default(), &[]),
            trace: Vec::new(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All weights, layer by layer, each as its row-major matrix followed by
    /// its bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            for i in 0..l.w.nrows() {
                out.extend(l.w.row(i).iter());
            }
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.parameter_count() {
            return Err(Error::Dimension(format!("expected {} parameters, got {}", self.parameter_count(), p.len())));
        }
        let mut k = 0;
        for l in &mut self.layers {
            for i in 0..l.w.nrows() {
                for j in 0..l.w.ncols() {
                    l.w[(i, j)] = p[k];
                    k += 1;
                }
            }
            for i in 0..l.b.len() {
                l.b[i] = p[k];
                k += 1;
            }
        }
        Ok(())
    }

    fn check_rows(&self, a: &[f64], x: &[f64]) -> Result<usize> {
        let n = a.len();
        if x.len() != n * self.x_dim {
            return Err(Error::Dimension(format!(
                "model expects {} features per row, got {} values for {} rows",
                self.x_dim,
                x.len(),
                n
            )));
        }
        Ok(n)
    }

    /// The network input for rows `idx`, with `noise` holding `noise_dim`
    /// values per row.
    fn inputs(&self, a: &[f64], x: &[f64], idx: &[usize], noise: &[f64]) -> DMatrix<f64> {
        let nd = self.spec.noise_dim;
        let d_std = self.input_mean.len();
        DMatrix::from_fn(idx.len(), d_std + nd, |r, c| {
            let i = idx[r];
            if c < d_std {
                let raw = if self.spec.exclude_protected {
                    x[i * self.x_dim + c]
                } else if c == 0 {
                    a[i]
                } else {
                    x[i * self.x_dim + c - 1]
                };
                (raw - self.input_mean[c]) / self.input_scale[c]
            } else {
                noise[r * nd + c - d_std]
            }
        })
    }

    /// Pre-activations and activations of every layer. The last entry of
    /// the activations is the raw network output.
    fn forward(&self, u: DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = vec![u];
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = act[k].clone() * l.w.transpose();
            for mut row in z.row_iter_mut() {
                row += l.b.transpose();
            }
            let h = if k == last { z.clone() } else { z.map(|v| self.spec.activation.apply(v)) };
            pre.push(z);
            act.push(h);
        }
        (pre, act)
    }

    /// Regression output or classification logit.
    fn head(&self, raw: f64) -> f64 {
        self.target_mean + self.target_scale * raw
    }

    /// `(loss, penalty)` and parameter gradients of
    /// `loss + λ·penalty` on rows `idx` with the given noise.
    fn evaluate(
        &self,
        data: &Sample,
        idx: &[usize],
        noise: &[f64],
        lambda: f64,
        with_penalty: bool,
    ) -> Result<BatchEval> {
        let b = idx.len();
        let bf = b as f64;
        let u = self.inputs(&data.a, &data.x, idx, noise);
        let (pre, act) = self.forward(u);
        let raw: Vec<f64> = act.last().expect("output layer").column(0).iter().copied().collect();
        let y: Vec<f64> = idx.iter().map(|&i| data.y[i]).collect();
        let mut d_raw = vec![0.0; b];
        let mut loss = 0.0;
        // the penalty sees the prediction on the target scale, or the
        // probability for classification
        let mut pred = vec![0.0; b];
        let mut d_pred = vec![0.0; b];
        for i in 0..b {
            let o = self.head(raw[i]);
            match self.spec.task {
                Task::Regression => {
                    let r = o - y[i];
                    loss += r * r / bf;
                    d_raw[i] = 2.0 * r * self.target_scale / bf;
                    pred[i] = o;
                    d_pred[i] = self.target_scale;
                }
                Task::Binary => {
                    let p = sigmoid(o);
                    loss += (softplus(o) - y[i] * o) / bf;
                    d_raw[i] = (p - y[i]) * self.target_scale / bf;
                    pred[i] = p;
                    d_pred[i] = p * (1.0 - p) * self.target_scale;
                }
            }
        }
        let mut penalty = 0.0;
        if with_penalty {
            let a: Vec<f64> = idx.iter().map(|&i| data.a[i]).collect();
            let kcfg = self.penalty.config();
            if lambda > 0.0 {
                let (t, g) = kmcd_value_and_grad(&pred, &a, &y, &kcfg)?;
                penalty = t;
                for i in 0..b {
                    d_raw[i] += lambda * g[i] * d_pred[i];
                }
            } else {
                penalty = kmcd(&pred, &a, &y, &kcfg)?;
            }
        }
        let grad = self.backward(&pre, &act, &d_raw);
        Ok(BatchEval { loss, penalty, grad })
    }

    fn backward(&self, pre: &[DMatrix<f64>], act: &[DMatrix<f64>], d_raw: &[f64]) -> Vec<Dense> {
        let n_layers = self.layers.len();
        let mut grads = Vec::with_capacity(n_layers);
        let mut delta = DMatrix::from_column_slice(d_raw.len(), 1, d_raw);
        for k in (0..n_layers).rev() {
            if k + 1 < n_layers {
                delta.zip_apply(&pre[k], |d, z| *d *= self.spec.activation.derivative(z));
            }
            let gw = delta.transpose() * &act[k];
            let gb = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
            let next = if k > 0 { Some(&delta * &self.layers[k].w) } else { None };
            grads.push(Dense { w: gw, b: gb });
            if let Some(n) = next {
                delta = n;
            }
        }
        grads.reverse();
        grads
    }

    fn draw_noise(&self, rows: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
        (0..rows * self.spec.noise_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    /// Raw head values: regression predictions or classification logits.
    fn heads(&self, a: &[f64], x: &[f64], rng: &mut ChaCha20Rng) -> Result<Vec<f64>> {
        let n = self.check_rows(a, x)?;
        let idx: Vec<usize> = (0..n).collect();
        let noise = self.draw_noise(n, rng);
        let (_, act) = self.forward(self.inputs(a, x, &idx, &noise));
        Ok(act.last().expect("output layer").column(0).iter().map(|&r| self.head(r)).collect())
    }

    /// Regression predictions, or `P(Ỹ = 1 | a, x, e)` for classification,
    /// with one noise draw per row. `x` is row-major.
    pub fn scores(&self, a: &[f64], x: &[f64], rng: &mut ChaCha20Rng) -> Result<Vec<f64>> {
        let h = self.heads(a, x, rng)?;
        Ok(match self.spec.task {
            Task::Regression => h,
            Task::Binary => h.into_iter().map(sigmoid).collect(),
        })
    }

    /// Predictions `ŷ`. Deterministic classifiers threshold the logit at 0;
    /// stochastic classifiers draw `Bernoulli(sigmoid(logit))`.
    pub fn predict(&self, a: &[f64], x: &[f64], rng: &mut ChaCha20Rng) -> Result<Vec<f64>> {
        let s = self.scores(a, x, rng)?;
        Ok(match (self.spec.task, self.spec.stochastic()) {
            (Task::Regression, _) => s,
            (Task::Binary, false) => s.into_iter().map(|p| f64::from(u8::from(p > 0.5))).collect(),
            (Task::Binary, true) => s.into_iter().map(|p| f64::from(u8::from(rng.random::<f64>() < p))).collect(),
        })
    }

    pub fn predict_sample(&self, data: &Sample, rng: &mut ChaCha20Rng) -> Result<Vec<f64>> {
        self.predict(&data.a, &data.x, rng)
    }

    /// Mean loss over `data` with one noise draw per row.
    pub fn loss(&self, data: &Sample, rng: &mut ChaCha20Rng) -> Result<f64> {
        let idx: Vec<usize> = (0..data.n()).collect();
        let noise = self.draw_noise(data.n(), rng);
        Ok(self.evaluate(data, &idx, &noise, 0.0, false)?.loss)
    }

    /// Writes the versioned little-endian binary form.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let u32s = |w: &mut W, v: &[u32]| -> Result<()> {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        };
        let f64s = |w: &mut W, v: &[f64]| -> Result<()> {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        };
        w.write_all(MAGIC)?;
        let to_u32 = |v: usize| u32::try_from(v).map_err(|_| Error::Argument(format!("dimension {v} too large")));
        let mut head = vec![
            FORMAT_VERSION,
            u32::from(self.spec.task == Task::Binary),
            self.spec.activation.code(),
            to_u32(self.spec.noise_dim)?,
            u32::from(self.spec.exclude_protected),
            to_u32(self.x_dim)?,
            to_u32(self.spec.hidden.len())?,
        ];
        for &h in &self.spec.hidden {
            head.push(to_u32(h)?);
        }
        head.push(match self.penalty.a_kernel {
            AKernel::Auto => 0,
            AKernel::Rbf => 1,
            AKernel::Delta => 2,
        });
        u32s(&mut w, &head)?;
        w.write_all(&self.spec.seed.to_le_bytes())?;
        f64s(
            &mut w,
            &[
                self.target_mean,
                self.target_scale,
                self.penalty.bandwidth,
                self.penalty.ridge_scale,
                self.penalty.cond_ridge_scale,
            ],
        )?;
        f64s(&mut w, &self.input_mean)?;
        f64s(&mut w, &self.input_scale)?;
        f64s(&mut w, &self.parameters())?;
        Ok(())
    }

    /// Reads the binary form written by [`FittedModel::write_to`]. The
    /// training trace is not part of it.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse("not a model file (bad magic)".into()));
        }
        let mut u32_ = || -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let version = u32_()?;
        if version != FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported model format version {version}")));
        }
        let task = if u32_()? == 1 { Task::Binary } else { Task::Regression };
        let activation = Activation::from_code(u32_()?)?;
        let noise_dim = u32_()? as usize;
        let exclude_protected = u32_()? == 1;
        let x_dim = u32_()? as usize;
        let n_hidden = u32_()? as usize;
        let hidden = (0..n_hidden).map(|_| u32_().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let a_kernel = match u32_()? {
            0 => AKernel::Auto,
            1 => AKernel::Rbf,
            2 => AKernel::Delta,
            c => return Err(Error::Parse(format!("unknown kernel code {c}"))),
        };
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        let spec = MlpSpec { hidden, activation, noise_dim, task, exclude_protected, seed };
        spec.validate()?;
        let mut model = Self::zeros(&spec, x_dim);
        let mut f64_ = |count: usize| -> Result<Vec<f64>> {
            (0..count)
                .map(|_| {
                    r.read_exact(&mut b8)?;
                    Ok(f64::from_le_bytes(b8))
                })
                .collect()
        };
        let head = f64_(5)?;
        model.target_mean = head[0];
        model.target_scale = head[1];
        model.penalty = PenaltyKernel { bandwidth: head[2], ridge_scale: head[3], cond_ridge_scale: head[4], a_kernel };
        let d_std = model.input_mean.len();
        model.input_mean = f64_(d_std)?;
        model.input_scale = f64_(d_std)?;
        let params = f64_(model.parameter_count())?;
        if params.iter().chain(&model.input_mean).chain(&model.input_scale).any(|v| !v.is_finite()) {
            return Err(Error::Parse("model file holds non-finite values".into()));
        }
        model.set_parameters(&params)?;
        Ok(model)
    }

    /// The text sidecar: one `key=value` line per setting, then the trace.
    pub fn sidecar(&self, cfg: Option<&TrainConfig>) -> String {
        let s = &self.spec;
        let hidden: Vec<String> = s.hidden.iter().map(ToString::to_string).collect();
        let mut out = format!(
            "format=EQOM\nversion={FORMAT_VERSION}\ntask={}\nactivation={}\nhidden={}\nnoise_dim={}\nexclude_protected={}\nx_dim={}\nseed={}\nparameters={}\npenalty_bandwidth={}\npenalty_ridge_scale={}\npenalty_cond_ridge_scale={}\n",
            s.task,
            s.activation,
            hidden.join(","),
            s.noise_dim,
            s.exclude_protected,
            self.x_dim,
            s.seed,
            self.parameter_count(),
            self.penalty.bandwidth,
            self.penalty.ridge_scale,
            self.penalty.cond_ridge_scale,
        );
        if let Some(c) = cfg {
            out += &format!(
                "lambda={}\nlearning_rate={}\nbatch={}\nepochs={}\noptimizer={}\nfull_batch={}\n",
                c.lambda, c.learning_rate, c.batch, c.epochs, c.optimizer, c.full_batch
            );
        }
        out += "trace=epoch,loss,penalty,objective\n";
        for r in &self.trace {
            out += &format!("{},{},{},{}\n", r.epoch, r.loss, r.penalty, r.objective);
        }
        out
    }
}

fn check_training_data(spec: &MlpSpec, data: &Sample) -> Result<()> {
    data.validate()?;
    if spec.task == Task::Binary && data.y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Argument("binary task needs targets in {0, 1}".into()));
    }
    Ok(())
}

/// Index batches of one epoch: a shuffled order split into near-equal runs
/// of at least `batch` rows each, so no batch falls below the penalty's
/// minimum size.
fn epoch_batches(n: usize, cfg: &TrainConfig, rng: &mut ChaCha20Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let count = if cfg.full_batch { 1 } else { (n / cfg.batch.max(MIN_N)).max(1) };
    (0..count).map(|k| order[k * n / count..(k + 1) * n / count].to_vec()).collect()
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Fits the network by minibatch descent on `loss + λ·kmcd` per batch.
pub fn train(data: &Sample, spec: &MlpSpec, cfg: &TrainConfig) -> Result<FittedModel> {
    cfg.validate()?;
    check_training_data(spec, data)?;
    let mut model = FittedModel::init(spec, data)?;
    model.penalty = PenaltyKernel::resolve(&cfg.kernel, &data.y);
    if cfg.epochs == 0 {
        return Ok(model);
    }
    let n = data.n();
    if n < MIN_N {
        return Err(Error::Argument(format!("training needs at least {MIN_N} rows, got {n}")));
    }
    let mut rng = rng_from_seed(spec.seed);
    rng.set_stream(1);
    let np = model.parameter_count();
    let mut adam = Adam { m: vec![0.0; np], v: vec![0.0; np], t: 0 };
    let (b1, b2, eps_adam) = (0.9, 0.999, 1e-8);
    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(n, cfg, &mut rng);
        let (mut loss_sum, mut pen_sum) = (0.0, 0.0);
        for idx in &batches {
            let noise = model.draw_noise(idx.len(), &mut rng);
            let ev = model.evaluate(data, idx, &noise, cfg.lambda, true)?;
            let grad: Vec<f64> = flatten(&ev.grad);
            if !ev.loss.is_finite() || !ev.penalty.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, last_finite: epoch.checked_sub(1) });
            }
            loss_sum += ev.loss;
            pen_sum += ev.penalty;
            let mut p = model.parameters();
            match cfg.optimizer {
                Optimizer::Adam => {
                    adam.t += 1;
                    let c1 = 1.0 - f64::powi(b1, adam.t);
                    let c2 = 1.0 - f64::powi(b2, adam.t);
                    for k in 0..np {
                        adam.m[k] = b1 * adam.m[k] + (1.0 - b1) * grad[k];
                        adam.v[k] = b2 * adam.v[k] + (1.0 - b2) * grad[k] * grad[k];
                        p[k] -= cfg.learning_rate * (adam.m[k] / c1) / ((adam.v[k] / c2).sqrt() + eps_adam);
                    }
                }
                Optimizer::Sgd => {
                    for k in 0..np {
                        p[k] -= cfg.learning_rate * grad[k];
                    }
                }
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { epoch, last_finite: epoch.checked_sub(1) });
            }
            model.set_parameters(&p)?;
        }
        let nb = batches.len() as f64;
        let (loss, penalty) = (loss_sum / nb, pen_sum / nb);
        model.trace.push(EpochRecord { epoch, loss, penalty, objective: loss + cfg.lambda * penalty });
    }
    Ok(model)
}

fn flatten(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        for i in 0..l.w.nrows() {
            out.extend(l.w.row(i).iter());
        }
        out.extend(l.b.iter());
    }
    out
}

/// Loss, penalty, and objective gradient on all rows of `batch` with noise
/// drawn from `seed`.
pub fn objective_and_gradient(model: &FittedModel, batch: &Sample, lambda: f64, seed: u64) -> Result<(f64, Vec<f64>)> {
    let idx: Vec<usize> = (0..batch.n()).collect();
    let noise = model.draw_noise(batch.n(), &mut rng_from_seed(seed));
    let ev = model.evaluate(batch, &idx, &noise, lambda, lambda > 0.0)?;
    Ok((ev.loss + lambda * ev.penalty, flatten(&ev.grad)))
}

/// Largest relative error between the analytic gradient of
/// `loss + λ·kmcd` and central differences (step `1e-5`) over up to 100
/// random coordinates. Noise is drawn once from `seed` and held fixed.
/// The relative error of a coordinate is `|g − ĝ| / max(|g|, |ĝ|, 1e-6)`.
pub fn grad_check(model: &FittedModel, batch: &Sample, lambda: f64, seed: u64) -> Result<f64> {
    if batch.n() < MIN_N {
        return Err(Error::Argument(format!("gradient check needs at least {MIN_N} rows, got {}", batch.n())));
    }
    check_training_data(&model.spec, batch)?;
    let (_, grad) = objective_and_gradient(model, batch, lambda, seed)?;
    let np = grad.len();
    let mut rng = rng_from_seed(seed);
    rng.set_stream(2);
    let coords = rand::seq::index::sample(&mut rng, np, np.min(100)).into_vec();
    let base = model.parameters();
    let h = 1e-5;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for k in coords {
        let mut p = base.clone();
        p[k] = base[k] + h;
        probe.set_parameters(&p)?;
        let up = objective_and_gradient(&probe, batch, lambda, seed)?.0;
        p[k] = base[k] - h;
        probe.set_parameters(&p)?;
        let down = objective_and_gradient(&probe, batch, lambda, seed)?.0;
        let fd = (up - down) / (2.0 * h);
        let err = (grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1e-6);
        worst = worst.max(err);
    }
    Ok(worst)
}
