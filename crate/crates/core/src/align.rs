//! Adversarial initialization: linear generators `F: X→Y`, `G: Y→X` trained
//! against two MLP discriminators with a cycle-consistency penalty.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::save_map;
use crate::error::{Error, Result};
use crate::metrics::{selection_criterion, CslsParams, Views};
use crate::numerics::{ensure_finite, LinearMap, Mat, Vector};

const LOG_FLOOR: f64 = 1e-12;
const PROB_EDGE: f64 = 1e-16;
/// Rows used to measure discriminator accuracy at the end of an epoch.
const ACCURACY_SAMPLE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointPolicy {
    Best,
    Epoch(usize),
}

impl fmt::Display for CheckpointPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointPolicy::Best => f.write_str("best"),
            CheckpointPolicy::Epoch(n) => write!(f, "epoch:{n}"),
        }
    }
}

impl std::str::FromStr for CheckpointPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "best" {
            return Ok(CheckpointPolicy::Best);
        }
        s.strip_prefix("epoch:")
            .and_then(|n| n.parse().ok())
            .map(CheckpointPolicy::Epoch)
            .ok_or_else(|| {
                Error::Config(format!("bad checkpoint policy {s:?} (expected best or epoch:N)"))
            })
    }
}

impl Serialize for CheckpointPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CheckpointPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What the generators minimize on the adversarial side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorObjective {
    /// `E log(1 − D(F x))`, the generator half of the two-player game as written.
    Minimax,
    /// `−E log D(F x)`, same fixed point with stronger gradients early on.
    NonSaturating,
}

impl std::str::FromStr for GeneratorObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimax" => Ok(GeneratorObjective::Minimax),
            "non-saturating" => Ok(GeneratorObjective::NonSaturating),
            other => Err(Error::Config(format!(
                "unknown generator objective {other:?} (expected minimax or non-saturating)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub lambda_cyc: f64,
    pub beta_orth: f64,
    pub epochs: usize,
    pub iters_per_epoch: usize,
    pub dis_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplies the generator learning rate after every epoch.
    pub lr_decay: f64,
    /// Extra factor applied when the epoch criterion does not improve.
    pub lr_shrink: f64,
    pub dis_learning_rate: f64,
    pub discriminator_vocab_limit: usize,
    pub dis_hidden: Vec<usize>,
    pub dis_dropout: f64,
    pub leaky_slope: f64,
    pub label_smoothing: f64,
    pub objective: GeneratorObjective,
    pub checkpoint: CheckpointPolicy,
    pub seed: u64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            lambda_cyc: 5.0,
            beta_orth: 0.001,
            epochs: 5,
            iters_per_epoch: 1000,
            dis_steps: 5,
            batch_size: 32,
            learning_rate: 0.1,
            lr_decay: 0.98,
            lr_shrink: 0.5,
            dis_learning_rate: 0.1,
            discriminator_vocab_limit: 50_000,
            dis_hidden: vec![2048],
            dis_dropout: 0.1,
            leaky_slope: 0.2,
            label_smoothing: 0.1,
            objective: GeneratorObjective::NonSaturating,
            checkpoint: CheckpointPolicy::Best,
            seed: 0,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda_cyc > 0.0) {
            return bad(format!("lambda_cyc must be positive, got {}", self.lambda_cyc));
        }
        if !(self.beta_orth > 0.0 && self.beta_orth <= 0.1) {
            return bad(format!("beta_orth must lie in (0, 0.1], got {}", self.beta_orth));
        }
        if self.iters_per_epoch == 0 || self.dis_steps == 0 || self.batch_size == 0 {
            return bad("iters_per_epoch, dis_steps and batch_size must be at least 1".into());
        }
        if self.discriminator_vocab_limit == 0 || self.dis_hidden.contains(&0) {
            return bad("discriminator sizes must be at least 1".into());
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("dis_learning_rate", self.dis_learning_rate),
            ("lr_decay", self.lr_decay),
            ("lr_shrink", self.lr_shrink),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.dis_dropout) {
            return bad(format!("dis_dropout must lie in [0, 1), got {}", self.dis_dropout));
        }
        if !(0.0..0.5).contains(&self.label_smoothing) {
            return bad(format!(
                "label_smoothing must lie in [0, 0.5), got {}",
                self.label_smoothing
            ));
        }
        if let CheckpointPolicy::Epoch(n) = self.checkpoint {
            if n > self.epochs {
                return bad(format!("checkpoint epoch:{n} exceeds the {} epochs", self.epochs));
            }
        }
        if !(5.0..=10.0).contains(&self.lambda_cyc) {
            log::warn!("lambda_cyc = {} is outside the usual 5..10 range", self.lambda_cyc);
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `in × out`; layers act on row batches.
    pub w: Mat,
    pub b: Vector,
}

impl Dense {
    fn zeros_like(&self) -> Dense {
        Dense {
            w: Mat::zeros(self.w.nrows(), self.w.ncols()),
            b: Vector::zeros(self.b.len()),
        }
    }
}

struct Trace {
    /// Input of every layer, after dropout for the first.
    inputs: Vec<Mat>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Mat>,
    logits: Vector,
}

/// MLP `D → hidden… → 1` with input dropout, leaky-ReLU hidden units and a
/// sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    layers: Vec<Dense>,
    dropout: f64,
    slope: f64,
}

impl Discriminator {
    /// Weights and biases drawn from `U(−1/√fan_in, 1/√fan_in)`.
    pub fn new<R: Rng + ?Sized>(
        dim: usize,
        hidden: &[usize],
        dropout: f64,
        slope: f64,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|io| {
                let bound = 1.0 / (io[0] as f64).sqrt();
                let mut w = Mat::zeros(io[0], io[1]);
                for i in 0..io[0] {
                    for j in 0..io[1] {
                        w[(i, j)] = rng.random_range(-bound..bound);
                    }
                }
                let b = Vector::from_fn(io[1], |_, _| rng.random_range(-bound..bound));
                Dense { w, b }
            })
            .collect();
        Discriminator {
            layers,
            dropout,
            slope,
        }
    }

    pub fn from_layers(layers: Vec<Dense>, dropout: f64, slope: f64) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::Config("discriminator needs at least one layer".into()));
        };
        if last.w.ncols() != 1 {
            return Err(Error::Config("discriminator output must be a single unit".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].w.ncols() != pair[1].w.nrows() {
                return Err(Error::Config("discriminator layer sizes do not chain".into()));
            }
        }
        if layers.iter().any(|l| l.b.len() != l.w.ncols()) {
            return Err(Error::Config("bias length does not match layer width".into()));
        }
        Ok(Discriminator {
            layers,
            dropout,
            slope,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    /// Inverted-dropout mask for a batch: entries are 0 or `1/(1−p)`.
    pub fn dropout_mask<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Option<Mat> {
        if self.dropout <= 0.0 {
            return None;
        }
        let keep = 1.0 - self.dropout;
        let scale = 1.0 / keep;
        let mut m = Mat::zeros(rows, self.input_dim());
        for i in 0..rows {
            for j in 0..m.ncols() {
                if rng.random::<f64>() < keep {
                    m[(i, j)] = scale;
                }
            }
        }
        Some(m)
    }

    fn forward(&self, x: &Mat, mask: Option<&Mat>) -> Trace {
        let mut h = match mask {
            Some(m) => x.component_mul(m),
            None => x.clone(),
        };
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = &h * &layer.w;
            for mut row in z.row_iter_mut() {
                row += layer.b.transpose();
            }
            inputs.push(h);
            if l == last {
                return Trace {
                    inputs,
                    pre,
                    logits: z.column(0).into_owned(),
                };
            }
            h = z.map(|v| if v > 0.0 { v } else { self.slope * v });
            pre.push(z);
        }
        unreachable!("discriminator has at least one layer")
    }

    /// Backpropagates `∂L/∂logit` and returns parameter gradients plus `∂L/∂input`.
    fn backward(&self, trace: &Trace, dlogit: &Vector, mask: Option<&Mat>) -> (Vec<Dense>, Mat) {
        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        let mut g = Mat::from_column_slice(dlogit.len(), 1, dlogit.as_slice());
        for l in (0..self.layers.len()).rev() {
            grads[l].w = trace.inputs[l].tr_mul(&g);
            grads[l].b = Vector::from_fn(g.ncols(), |j, _| g.column(j).sum());
            let mut back = &g * self.layers[l].w.transpose();
            if l > 0 {
                let z = &trace.pre[l - 1];
                back.zip_apply(z, |b, z| {
                    if z <= 0.0 {
                        *b *= self.slope;
                    }
                });
            }
            g = back;
        }
        if let Some(m) = mask {
            g.component_mul_assign(m);
        }
        (grads, g)
    }

    /// Output probabilities with dropout disabled, kept strictly inside (0, 1).
    pub fn predict(&self, x: &Mat) -> Vector {
        self.forward(x, None)
            .logits
            .map(|z| sigmoid(z).clamp(PROB_EDGE, 1.0 - PROB_EDGE))
    }

    fn sgd(&mut self, grads: &[Dense], lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            layer.w -= &g.w * lr;
            layer.b -= &g.b * lr;
        }
    }

    fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}

/// `mean log D(real) + mean log(1 − D(synth))`, with dropout disabled.
pub fn adv_loss(d: &Discriminator, real: &Mat, synth: &Mat) -> Result<f64> {
    for (name, b) in [("real", real), ("synthetic", synth)] {
        if b.nrows() == 0 {
            return Err(Error::Contract(format!("{name} batch is empty")));
        }
        if b.ncols() != d.input_dim() {
            return Err(Error::Contract(format!(
                "{name} batch has dimension {}, discriminator expects {}",
                b.ncols(),
                d.input_dim()
            )));
        }
    }
    Ok(adv_loss_from_probs(
        d.predict(real).as_slice(),
        d.predict(synth).as_slice(),
    ))
}

pub fn adv_loss_from_probs(real: &[f64], synth: &[f64]) -> f64 {
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&p| f(p)).sum::<f64>() / v.len() as f64;
    mean(real, &|p| p.max(LOG_FLOOR).ln()) + mean(synth, &|p| (1.0 - p).max(LOG_FLOOR).ln())
}

/// Residual rows of `x A − x` and their norms.
fn residuals(x: &Mat, a: &Mat) -> (Mat, Vec<f64>) {
    let r = x * a - x;
    let norms = r.row_iter().map(|row| row.norm()).collect();
    (r, norms)
}

/// `mean ‖G(F x) − x‖ + mean ‖F(G y) − y‖`.
pub fn cyc_loss(f: &LinearMap, g: &LinearMap, x: &Mat, y: &Mat) -> f64 {
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len().max(1) as f64;
    mean(residuals(x, &(f.matrix() * g.matrix())).1)
        + mean(residuals(y, &(g.matrix() * f.matrix())).1)
}

/// `W ← (1+β) W − β (W Wᵀ) W`.
pub fn orthogonalize_update(w: &LinearMap, beta: f64) -> LinearMap {
    let m = w.matrix();
    LinearMap(m * (1.0 + beta) - (m * m.transpose() * m) * beta)
}

#[derive(Debug, Clone)]
pub struct GeneratorEval {
    pub loss: f64,
    pub adversarial: f64,
    pub cyclic: f64,
    pub grad_f: Mat,
    pub grad_g: Mat,
}

/// Adversarial term for one direction: loss and `∂/∂logit` per sample.
fn generator_adv(logits: &Vector, objective: GeneratorObjective) -> (f64, Vector) {
    let n = logits.len() as f64;
    match objective {
        GeneratorObjective::Minimax => (
            -logits.iter().map(|&z| softplus(z)).sum::<f64>() / n,
            logits.map(|z| -sigmoid(z) / n),
        ),
        GeneratorObjective::NonSaturating => (
            logits.iter().map(|&z| softplus(-z)).sum::<f64>() / n,
            logits.map(|z| (sigmoid(z) - 1.0) / n),
        ),
    }
}

/// `∂ mean‖x M − x‖ / ∂M`; zero residuals contribute a zero subgradient.
fn cyc_grad(x: &Mat, m: &Mat) -> (f64, Mat) {
    let (mut r, norms) = residuals(x, m);
    let n = x.nrows() as f64;
    for (i, &nrm) in norms.iter().enumerate() {
        let scale = if nrm > 0.0 { 1.0 / (nrm * n) } else { 0.0 };
        r.row_mut(i).scale_mut(scale);
    }
    (norms.iter().sum::<f64>() / n, x.tr_mul(&r))
}

/// Total generator loss `adv(F) + adv(G) + λ·cyc` and its gradients, with the
/// discriminators in evaluation mode.
pub fn generator_objective(
    f: &LinearMap,
    g: &LinearMap,
    d_y: &Discriminator,
    d_x: &Discriminator,
    x: &Mat,
    y: &Mat,
    lambda_cyc: f64,
    objective: GeneratorObjective,
) -> GeneratorEval {
    let (fm, gm) = (f.matrix(), g.matrix());

    let fx = x * fm;
    let trace_y = d_y.forward(&fx, None);
    let (adv_f, dz_f) = generator_adv(&trace_y.logits, objective);
    let (_, dfx) = d_y.backward(&trace_y, &dz_f, None);
    let mut grad_f = x.tr_mul(&dfx);

    let gy = y * gm;
    let trace_x = d_x.forward(&gy, None);
    let (adv_g, dz_g) = generator_adv(&trace_x.logits, objective);
    let (_, dgy) = d_x.backward(&trace_x, &dz_g, None);
    let mut grad_g = y.tr_mul(&dgy);

    let (cyc_x, d_fg) = cyc_grad(x, &(fm * gm));
    let (cyc_y, d_gf) = cyc_grad(y, &(gm * fm));
    grad_f += (&d_fg * gm.transpose() + gm.transpose() * &d_gf) * lambda_cyc;
    grad_g += (fm.transpose() * &d_fg + &d_gf * fm.transpose()) * lambda_cyc;

    let cyclic = cyc_x + cyc_y;
    GeneratorEval {
        loss: adv_f + adv_g + lambda_cyc * cyclic,
        adversarial: adv_f + adv_g,
        cyclic,
        grad_f,
        grad_g,
    }
}

/// Mutable training state; everything random flows from `rng`.
#[derive(Debug, Clone)]
pub struct AlignState {
    pub forward: LinearMap,
    pub backward: LinearMap,
    /// Tells target rows from `F x`.
    pub d_y: Discriminator,
    /// Tells source rows from `G y`.
    pub d_x: Discriminator,
    pub lr: f64,
    pub dis_lr: f64,
    rng: ChaCha8Rng,
}

impl AlignState {
    pub fn new(dim: usize, config: &AlignConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut disc = || {
            Discriminator::new(
                dim,
                &config.dis_hidden,
                config.dis_dropout,
                config.leaky_slope,
                &mut rng,
            )
        };
        let d_y = disc();
        let d_x = disc();
        AlignState {
            forward: LinearMap::identity(dim),
            backward: LinearMap::identity(dim),
            d_y,
            d_x,
            lr: config.learning_rate,
            dis_lr: config.dis_learning_rate,
            rng,
        }
    }

    fn sample(&mut self, pool: &Mat, limit: usize, batch: usize) -> Mat {
        let n = limit.min(pool.nrows());
        let idx: Vec<usize> = (0..batch).map(|_| self.rng.random_range(0..n)).collect();
        pool.select_rows(idx.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub d_y: f64,
    pub d_x: f64,
}

/// Smoothed binary cross-entropy on `real` (target `1−ε`) and `fake`
/// (target `ε`); one SGD step on the discriminator.
fn train_discriminator<R: Rng + ?Sized>(
    d: &mut Discriminator,
    real: &Mat,
    fake: &Mat,
    smoothing: f64,
    lr: f64,
    rng: &mut R,
) -> f64 {
    let mut batch = Mat::zeros(real.nrows() + fake.nrows(), real.ncols());
    batch.rows_mut(0, real.nrows()).copy_from(real);
    batch.rows_mut(real.nrows(), fake.nrows()).copy_from(fake);
    let n = batch.nrows() as f64;
    let target = |i: usize| {
        if i < real.nrows() {
            1.0 - smoothing
        } else {
            smoothing
        }
    };
    let mask = d.dropout_mask(batch.nrows(), rng);
    let trace = d.forward(&batch, mask.as_ref());
    let loss = trace
        .logits
        .iter()
        .enumerate()
        .map(|(i, &z)| softplus(z) - target(i) * z)
        .sum::<f64>()
        / n;
    if lr > 0.0 && loss.is_finite() {
        let dlogit = Vector::from_fn(batch.nrows(), |i, _| (sigmoid(trace.logits[i]) - target(i)) / n);
        let (grads, _) = d.backward(&trace, &dlogit, mask.as_ref());
        d.sgd(&grads, lr);
    }
    loss
}

/// One update of each discriminator on a fresh pair of batches.
pub fn discriminator_step(
    state: &mut AlignState,
    x: &Mat,
    y: &Mat,
    config: &AlignConfig,
) -> Result<StepLosses> {
    let limit = config.discriminator_vocab_limit;
    let xb = state.sample(x, limit, config.batch_size);
    let yb = state.sample(y, limit, config.batch_size);
    let fx = state.forward.apply(&xb);
    let gy = state.backward.apply(&yb);
    let s = config.label_smoothing;
    let lr = state.dis_lr;
    let d_y = train_discriminator(&mut state.d_y, &yb, &fx, s, lr, &mut state.rng);
    let d_x = train_discriminator(&mut state.d_x, &xb, &gy, s, lr, &mut state.rng);
    if !d_y.is_finite() || !d_x.is_finite() || !state.d_y.is_finite() || !state.d_x.is_finite() {
        return Err(Error::NonFinite(format!(
            "discriminator loss became non-finite (D_Y {d_y}, D_X {d_x})"
        )));
    }
    Ok(StepLosses { d_y, d_x })
}

/// One SGD step on `F` and `G`, then the orthogonalizing update on both. A
/// zero learning rate leaves the generators untouched.
pub fn generator_step(
    state: &mut AlignState,
    x: &Mat,
    y: &Mat,
    config: &AlignConfig,
) -> Result<GeneratorEval> {
    let limit = config.discriminator_vocab_limit;
    let xb = state.sample(x, limit, config.batch_size);
    let yb = state.sample(y, limit, config.batch_size);
    let eval = generator_objective(
        &state.forward,
        &state.backward,
        &state.d_y,
        &state.d_x,
        &xb,
        &yb,
        config.lambda_cyc,
        config.objective,
    );
    if !eval.loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "generator loss is {} (adversarial {}, cyclic {})",
            eval.loss, eval.adversarial, eval.cyclic
        )));
    }
    if state.lr > 0.0 {
        let f = LinearMap(state.forward.matrix() - &eval.grad_f * state.lr);
        let g = LinearMap(state.backward.matrix() - &eval.grad_g * state.lr);
        state.forward = orthogonalize_update(&f, config.beta_orth);
        state.backward = orthogonalize_update(&g, config.beta_orth);
        ensure_finite(state.forward.matrix(), "generator F")?;
        ensure_finite(state.backward.matrix(), "generator G")?;
    }
    Ok(eval)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignCheckpoint {
    pub epoch: usize,
    /// NaN when the criterion could not be computed; such checkpoints are
    /// never selected by the best policy.
    pub criterion: f64,
    pub forward: LinearMap,
    pub backward: LinearMap,
    /// Accuracy of (D_Y, D_X) on held batches with dropout disabled.
    pub dis_accuracy: (f64, f64),
    pub orthogonality_defect: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct AlignOutcome {
    pub forward: LinearMap,
    pub backward: LinearMap,
    /// Index into `checkpoints` of the returned pair.
    pub selected: usize,
    pub checkpoints: Vec<AlignCheckpoint>,
    pub warnings: Vec<String>,
}

/// Index of the checkpoint a policy picks. Ties go to the earliest epoch.
pub fn select_checkpoint(checkpoints: &[AlignCheckpoint], policy: CheckpointPolicy) -> Result<usize> {
    match policy {
        CheckpointPolicy::Best => {
            let mut best: Option<usize> = None;
            for (i, c) in checkpoints.iter().enumerate() {
                if c.criterion.is_nan() {
                    continue;
                }
                if best.is_none_or(|b| c.criterion > checkpoints[b].criterion) {
                    best = Some(i);
                }
            }
            best.ok_or_else(|| Error::stage("align", "no checkpoint has a finite criterion"))
        }
        CheckpointPolicy::Epoch(n) => checkpoints
            .iter()
            .position(|c| c.epoch == n)
            .ok_or_else(|| Error::Config(format!("no checkpoint recorded for epoch {n}"))),
    }
}

fn accuracy(d: &Discriminator, real: &Mat, fake: &Mat) -> f64 {
    let hits = d.predict(real).iter().filter(|&&p| p > 0.5).count()
        + d.predict(fake).iter().filter(|&&p| p < 0.5).count();
    hits as f64 / (real.nrows() + fake.nrows()) as f64
}

fn checkpoint(
    state: &AlignState,
    epoch: usize,
    x: &Mat,
    y: &Mat,
    csls: &CslsParams,
    config: &AlignConfig,
) -> AlignCheckpoint {
    let (fx, gy) = (state.forward.apply(x), state.backward.apply(y));
    let criterion = Views::new(x, y, &fx, &gy)
        .and_then(|v| selection_criterion(&v, csls))
        .unwrap_or(f64::NAN);
    let n = ACCURACY_SAMPLE.min(config.discriminator_vocab_limit);
    let (nx, ny) = (n.min(x.nrows()), n.min(y.nrows()));
    AlignCheckpoint {
        epoch,
        criterion,
        dis_accuracy: (
            accuracy(&state.d_y, &y.rows(0, ny).into_owned(), &fx.rows(0, nx).into_owned()),
            accuracy(&state.d_x, &x.rows(0, nx).into_owned(), &gy.rows(0, ny).into_owned()),
        ),
        orthogonality_defect: (
            state.forward.orthogonality_defect(),
            state.backward.orthogonality_defect(),
        ),
        forward: state.forward.clone(),
        backward: state.backward.clone(),
    }
}

/// Trains both generators from identity. A checkpoint is recorded before the
/// first epoch (epoch 0) and after every epoch.
pub fn train_align(x: &Mat, y: &Mat, config: &AlignConfig, csls: &CslsParams) -> Result<AlignOutcome> {
    config.validate()?;
    csls.validate()?;
    if x.ncols() != y.ncols() {
        return Err(Error::Contract("source and target dimensions differ".into()));
    }
    let smallest = x.nrows().min(y.nrows());
    if smallest < config.batch_size {
        return Err(Error::Contract(format!(
            "vocabulary of {smallest} rows is smaller than the batch size {}",
            config.batch_size
        )));
    }
    let mut state = AlignState::new(x.ncols(), config);
    let mut warnings = Vec::new();
    let mut checkpoints = vec![checkpoint(&state, 0, x, y, csls, config)];
    let mut best = checkpoints[0].criterion;

    for epoch in 1..=config.epochs {
        let mut failure = None;
        'epoch: for _ in 0..config.iters_per_epoch {
            for _ in 0..config.dis_steps {
                if let Err(e) = discriminator_step(&mut state, x, y, config) {
                    failure = Some(e);
                    break 'epoch;
                }
            }
            if let Err(e) = generator_step(&mut state, x, y, config) {
                failure = Some(e);
                break 'epoch;
            }
        }
        if let Some(e) = failure {
            let msg = format!("align epoch {epoch} aborted: {e}");
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let ck = checkpoint(&state, epoch, x, y, csls, config);
        log::info!(
            "align epoch {epoch}: criterion {:.5}, disc acc {:.3}/{:.3}, lr {:.5}",
            ck.criterion,
            ck.dis_accuracy.0,
            ck.dis_accuracy.1,
            state.lr
        );
        if ck.criterion.is_nan() {
            let msg = format!("align epoch {epoch}: criterion is NaN, checkpoint skipped");
            log::warn!("{msg}");
            warnings.push(msg);
        }
        state.lr *= config.lr_decay;
        if !(ck.criterion > best) {
            state.lr *= config.lr_shrink;
        } else {
            best = ck.criterion;
        }
        checkpoints.push(ck);
    }

    let selected = select_checkpoint(&checkpoints, config.checkpoint)?;
    Ok(AlignOutcome {
        forward: checkpoints[selected].forward.clone(),
        backward: checkpoints[selected].backward.clone(),
        selected,
        checkpoints,
        warnings,
    })
}

#[derive(Serialize)]
struct CheckpointSidecar<'a> {
    epoch: usize,
    criterion: Option<f64>,
    dis_accuracy: [f64; 2],
    orthogonality_defect: [f64; 2],
    config_hash: &'a str,
}

/// Writes `align_epochNNN_F.vec`, `align_epochNNN_G.vec` and the JSON sidecar.
pub fn save_checkpoint(ck: &AlignCheckpoint, dir: &Path, config_hash: &str, precision: usize) -> Result<()> {
    let stem = format!("align_epoch{:03}", ck.epoch);
    for (tag, map) in [("F", &ck.forward), ("G", &ck.backward)] {
        save_map(map, dir.join(format!("{stem}_{tag}.vec")), precision)?;
    }
    let sidecar = CheckpointSidecar {
        epoch: ck.epoch,
        criterion: ck.criterion.is_finite().then_some(ck.criterion),
        dis_accuracy: [ck.dis_accuracy.0, ck.dis_accuracy.1],
        orthogonality_defect: [ck.orthogonality_defect.0, ck.orthogonality_defect.1],
        config_hash,
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    std::fs::write(dir.join(format!("{stem}.json")), text)?;
    Ok(())
}
