//! Feed-forward reference scorer and its online training loop.
//!
//! Inputs are the unit-normalized residual (complex residuals stacked as
//! `[re; im]`), hidden layers use a rectifier or tanh, and the output is a
//! softmax over the `n` columns. Training regenerates a fresh synthetic data
//! set every epoch and minimizes the mean cross entropy against the uniform
//! distribution on each sample's support, using RMSprop steps.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::IndexScorer;
use crate::ensembles::{gen_training_set, SignalDistribution, SnrDb};
use crate::error::{Error, Result};
use crate::linalg::{check_rows, IndexSet, Scalar, ScalarField};

/// Lower bound applied to probabilities inside the cross-entropy logarithm.
pub const LOG_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// `out = weights · in + bias`; `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl DenseLayer {
    fn zeros_like(&self) -> Self {
        DenseLayer {
            weights: DMatrix::zeros(self.weights.nrows(), self.weights.ncols()),
            bias: DVector::zeros(self.bias.len()),
        }
    }

    fn affine(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weights * input;
        for mut col in z.column_iter_mut() {
            col += &self.bias;
        }
        z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRateStage {
    pub first_epoch: usize,
    pub last_epoch: usize,
    pub rate: f64,
}

/// Base rate for the first 5/8 of training, then three equal stages at
/// `base/4`, `base/16` and `base/64`.
pub fn default_schedule(epochs: usize, base: f64) -> Vec<LearningRateStage> {
    let cut = |num: usize| ((epochs * num) as f64 / 8.0).round() as usize;
    let bounds = [0, cut(5), cut(6), cut(7), epochs];
    let mut out = Vec::new();
    let mut rate = base;
    for w in bounds.windows(2) {
        if w[1] > w[0] {
            out.push(LearningRateStage {
                first_epoch: w[0] + 1,
                last_epoch: w[1],
                rate,
            });
        }
        rate /= 4.0;
    }
    out
}

fn default_decay() -> f64 {
    0.9
}

fn default_damping() -> f64 {
    1e-8
}

fn noiseless() -> SnrDb {
    SnrDb::NOISELESS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Smallest and largest training sparsity.
    pub k1: usize,
    pub k2: usize,
    /// Samples regenerated per epoch.
    pub samples_per_epoch: usize,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default = "noiseless")]
    pub snr_db: SnrDb,
    /// Empty means [`default_schedule`] with base rate `1e-3`.
    #[serde(default)]
    pub schedule: Vec<LearningRateStage>,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// Hidden layer widths; empty means two layers of width `4m`.
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl TrainConfig {
    pub fn new(k1: usize, k2: usize, samples_per_epoch: usize, batch_size: usize, epochs: usize) -> Self {
        TrainConfig {
            k1,
            k2,
            samples_per_epoch,
            batch_size,
            epochs,
            snr_db: SnrDb::NOISELESS,
            schedule: Vec::new(),
            decay: default_decay(),
            damping: default_damping(),
            hidden: Vec::new(),
            activation: Activation::Relu,
        }
    }

    pub fn resolved_schedule(&self) -> Vec<LearningRateStage> {
        if self.schedule.is_empty() {
            default_schedule(self.epochs, 1e-3)
        } else {
            self.schedule.clone()
        }
    }

    pub fn rate_for_epoch(&self, schedule: &[LearningRateStage], epoch: usize) -> Option<f64> {
        schedule
            .iter()
            .find(|s| s.first_epoch <= epoch && epoch <= s.last_epoch)
            .map(|s| s.rate)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(field, msg));
        if self.k1 == 0 || self.k1 > self.k2 || self.k2 > n {
            return bad("k1/k2", format!("need 1 <= k1 <= k2 <= n, got {}..={}", self.k1, self.k2));
        }
        if self.batch_size == 0 || self.batch_size > self.samples_per_epoch {
            return bad(
                "batch_size",
                format!("need 1 <= batch_size <= samples_per_epoch ({})", self.samples_per_epoch),
            );
        }
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1".into());
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return bad("decay", format!("must lie in (0, 1), got {}", self.decay));
        }
        if !(self.damping > 0.0 && self.damping.is_finite()) {
            return bad("damping", format!("must be positive, got {}", self.damping));
        }
        if self.hidden.contains(&0) {
            return bad("hidden", "layer widths must be positive".into());
        }
        let schedule = self.resolved_schedule();
        if let Some(s) = schedule.iter().find(|s| !(s.rate > 0.0 && s.rate.is_finite())) {
            return bad("schedule", format!("invalid rate {}", s.rate));
        }
        if let Some(e) = (1..=self.epochs).find(|&e| self.rate_for_epoch(&schedule, e).is_none()) {
            return bad("schedule", format!("epoch {e} is not covered"));
        }
        Ok(())
    }
}

/// Provenance stored alongside trained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub config: TrainConfig,
    /// Mean per-sample loss of each epoch.
    pub loss_trace: Vec<f64>,
    pub updates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpScorer {
    field: ScalarField,
    m: usize,
    n: usize,
    layers: Vec<DenseLayer>,
    activations: Vec<Activation>,
    training: Option<TrainingRecord>,
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, sd: f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| sd * f64::standard_normal(rng))
}

impl MlpScorer {
    /// Randomly initialized network (He for rectifier layers, Glorot otherwise).
    pub fn new_random<R: Rng + ?Sized>(
        field: ScalarField,
        m: usize,
        n: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if m == 0 || n == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::invalid("network needs m, n >= 1 and nonempty positive hidden widths"));
        }
        let input = match field {
            ScalarField::Real => m,
            ScalarField::Complex => 2 * m,
        };
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(n);
        let output = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let sd = if i != output && activation == Activation::Relu {
                    (2.0 / w[0] as f64).sqrt()
                } else {
                    (2.0 / (w[0] + w[1]) as f64).sqrt()
                };
                DenseLayer {
                    weights: gaussian_matrix(w[1], w[0], sd, rng),
                    bias: DVector::zeros(w[1]),
                }
            })
            .collect();
        Ok(MlpScorer {
            field,
            m,
            n,
            layers,
            activations: vec![activation; hidden.len()],
            training: None,
        })
    }

    /// Assembles a network from explicit parameters, validating shapes.
    pub fn from_parts(
        field: ScalarField,
        m: usize,
        n: usize,
        layers: Vec<DenseLayer>,
        activations: Vec<Activation>,
        training: Option<TrainingRecord>,
    ) -> Result<Self> {
        let input = match field {
            ScalarField::Real => m,
            ScalarField::Complex => 2 * m,
        };
        if layers.len() < 2 || activations.len() != layers.len() - 1 {
            return Err(Error::invalid(format!(
                "{} layers need {} activations, got {}",
                layers.len(),
                layers.len().saturating_sub(1),
                activations.len()
            )));
        }
        let mut width = input;
        for (i, l) in layers.iter().enumerate() {
            if l.weights.ncols() != width || l.bias.len() != l.weights.nrows() {
                return Err(Error::dims(format!("layer {i} has inconsistent shape")));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("layer {i} has non-finite parameters")));
            }
            width = l.weights.nrows();
        }
        if width != n {
            return Err(Error::dims(format!("output width {width} differs from n = {n}")));
        }
        Ok(MlpScorer {
            field,
            m,
            n,
            layers,
            activations,
            training,
        })
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn training(&self) -> Option<&TrainingRecord> {
        self.training.as_ref()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].weights.ncols()];
        dims.extend(self.layers.iter().map(|l| l.weights.nrows()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    /// Unit-normalized network input for a residual; zero maps to zero.
    pub fn features<T: Scalar>(&self, r: &DVector<T>) -> Result<DVector<f64>> {
        if T::FIELD != self.field {
            return Err(Error::FieldMismatch {
                expected: self.field,
                found: T::FIELD,
            });
        }
        if r.len() != self.m {
            return Err(Error::dims(format!("residual length {} != m = {}", r.len(), self.m)));
        }
        let mut f = DVector::zeros(self.input_dim());
        for (i, v) in r.iter().enumerate() {
            let (re, im) = v.parts();
            f[i] = re;
            if self.field == ScalarField::Complex {
                f[self.m + i] = im;
            }
        }
        let norm = f.norm();
        if norm > 0.0 && norm.is_finite() {
            f.unscale_mut(norm);
        } else {
            f.fill(0.0);
        }
        Ok(f)
    }

    /// Pre-activations of every layer for a batch of feature columns.
    fn forward(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut input = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&input);
            if let Some(act) = self.activations.get(i) {
                input = z.map(|v| act.apply(v));
            }
            pre.push(z);
        }
        pre
    }

    pub fn logits(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.forward(x).pop().expect("network has an output layer")
    }

    pub fn probabilities(&self, features: &DVector<f64>) -> Vec<f64> {
        let x = DMatrix::from_column_slice(features.len(), 1, features.as_slice());
        let logits = self.logits(&x);
        softmax_columns(&logits).column(0).iter().copied().collect()
    }

    /// Mean cross entropy of a batch and its gradient for every layer.
    ///
    /// `x` holds one feature column per sample and `targets` the matching
    /// target distributions (columns summing to one).
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>, targets: &DMatrix<f64>) -> (f64, Vec<DenseLayer>) {
        let batch = x.ncols() as f64;
        let nf = self.n as f64;
        let pre = self.forward(x);
        let probs = softmax_columns(pre.last().expect("output layer"));

        let mut loss = 0.0;
        let mut delta = DMatrix::<f64>::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            let mut active_mass = 0.0;
            for i in 0..self.n {
                let b = targets[(i, c)];
                if b > 0.0 {
                    let a = probs[(i, c)];
                    loss -= b * a.max(LOG_FLOOR).ln();
                    if a > LOG_FLOOR {
                        active_mass += b;
                        delta[(i, c)] -= b;
                    }
                }
            }
            for i in 0..self.n {
                delta[(i, c)] += probs[(i, c)] * active_mass;
            }
        }
        loss /= nf * batch;
        delta /= nf * batch;

        let mut grads: Vec<DenseLayer> = self.layers.iter().map(DenseLayer::zeros_like).collect();
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 {
                x.clone()
            } else {
                let act = self.activations[l - 1];
                pre[l - 1].map(|v| act.apply(v))
            };
            grads[l].weights = &delta * input.transpose();
            grads[l].bias = delta.column_sum();
            if l > 0 {
                let act = self.activations[l - 1];
                let back = self.layers[l].weights.tr_mul(&delta);
                delta = back.zip_map(&pre[l - 1], |g, z| g * act.derivative(z));
            }
        }
        (loss, grads)
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }
}

/// Column-wise softmax with max subtraction.
pub fn softmax_columns(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut col in out.column_iter_mut() {
        let max = col.max();
        col.apply(|v| *v = (*v - max).exp());
        let total = col.sum();
        col.unscale_mut(total);
    }
    out
}

impl<T: Scalar> IndexScorer<T> for MlpScorer {
    fn score(&self, phi: &DMatrix<T>, residual: &DVector<T>) -> Result<Vec<f64>> {
        check_rows(phi, residual)?;
        if phi.ncols() != self.n {
            return Err(Error::dims(format!(
                "scorer trained for n = {}, matrix has {} columns",
                self.n,
                phi.ncols()
            )));
        }
        Ok(self.probabilities(&self.features(residual)?))
    }
}

fn target_column(support: &IndexSet, n: usize) -> DVector<f64> {
    let mut t = DVector::zeros(n);
    if !support.is_empty() {
        let w = 1.0 / support.len() as f64;
        for j in support.iter() {
            t[j] = w;
        }
    }
    t
}

struct RmsProp {
    cache: Vec<DenseLayer>,
    decay: f64,
    damping: f64,
}

impl RmsProp {
    fn new(net: &MlpScorer, decay: f64, damping: f64) -> Self {
        RmsProp {
            cache: net.layers.iter().map(DenseLayer::zeros_like).collect(),
            decay,
            damping,
        }
    }

    fn step(&mut self, params: &mut [DenseLayer], grads: &[DenseLayer], rate: f64) {
        let (rho, eps) = (self.decay, self.damping);
        let update = |p: &mut f64, c: &mut f64, g: f64| {
            *c = rho * *c + (1.0 - rho) * g * g;
            *p -= rate * g / (c.sqrt() + eps);
        };
        for ((p, c), g) in params.iter_mut().zip(&mut self.cache).zip(grads) {
            for ((pw, cw), gw) in p.weights.iter_mut().zip(c.weights.iter_mut()).zip(g.weights.iter()) {
                update(pw, cw, *gw);
            }
            for ((pb, cb), gb) in p.bias.iter_mut().zip(c.bias.iter_mut()).zip(g.bias.iter()) {
                update(pb, cb, *gb);
            }
        }
    }
}

/// Trains a feed-forward scorer for the fixed sensing matrix `phi`.
///
/// Each epoch draws `samples_per_epoch` fresh samples, splits them into
/// consecutive batches of `batch_size` and takes one RMSprop step per batch.
pub fn train_scorer<T: Scalar, R: Rng + ?Sized>(
    phi: &DMatrix<T>,
    config: &TrainConfig,
    dist: &SignalDistribution,
    rng: &mut R,
) -> Result<MlpScorer> {
    let (m, n) = phi.shape();
    config.validate(n)?;
    let hidden = if config.hidden.is_empty() {
        vec![4 * m, 4 * m]
    } else {
        config.hidden.clone()
    };
    let mut net = MlpScorer::new_random(T::FIELD, m, n, &hidden, config.activation, rng)?;
    let schedule = config.resolved_schedule();
    let mut optimizer = RmsProp::new(&net, config.decay, config.damping);
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut updates = 0usize;

    for epoch in 1..=config.epochs {
        let rate = config
            .rate_for_epoch(&schedule, epoch)
            .expect("validated schedule covers every epoch");
        let data = gen_training_set(
            phi,
            config.k1,
            config.k2,
            config.snr_db,
            dist,
            config.samples_per_epoch,
            rng,
        )?;
        let mut epoch_loss = 0.0;
        for (batch_index, chunk) in data.chunks(config.batch_size).enumerate() {
            let mut x = DMatrix::zeros(net.input_dim(), chunk.len());
            let mut targets = DMatrix::zeros(n, chunk.len());
            for (c, sample) in chunk.iter().enumerate() {
                x.set_column(c, &net.features(&sample.y)?);
                targets.set_column(c, &target_column(&sample.support, n));
            }
            let (loss, grads) = net.loss_and_gradient(&x, &targets);
            if !loss.is_finite() || grads.iter().any(|g| g.weights.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_index + 1,
                });
            }
            optimizer.step(net.layers_mut(), &grads, rate);
            updates += 1;
            epoch_loss += loss * chunk.len() as f64;
        }
        loss_trace.push(epoch_loss / data.len() as f64);
    }

    net.training = Some(TrainingRecord {
        config: config.clone(),
        loss_trace,
        updates,
    });
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{gen_matrix, rng_from_seed, EnsembleKind, MatrixEnsemble, SignalKind};
    use num_complex::Complex64;

    fn small_net(field: ScalarField, activation: Activation, seed: u64) -> MlpScorer {
        MlpScorer::new_random(field, 4, 7, &[6, 5], activation, &mut rng_from_seed(seed)).unwrap()
    }

    fn batch(net: &MlpScorer, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = rng_from_seed(seed);
        let cols = 3;
        let x = DMatrix::from_fn(net.input_dim(), cols, |_, _| f64::standard_normal(&mut rng));
        let supports = [vec![0, 3], vec![5], vec![1, 2, 6]];
        let mut t = DMatrix::zeros(net.n(), cols);
        for (c, s) in supports.iter().enumerate() {
            t.set_column(c, &target_column(&IndexSet::new(s.clone()), net.n()));
        }
        (x, t)
    }

    fn check_gradient(activation: Activation) {
        let net = small_net(ScalarField::Real, activation, 21);
        let (x, t) = batch(&net, 22);
        let (_, grads) = net.loss_and_gradient(&x, &t);
        let h = 1e-5;
        for l in 0..net.layers.len() {
            let rows = net.layers[l].weights.nrows();
            let cols = net.layers[l].weights.ncols();
            // Five weights spread over the layer plus one bias.
            let picks: Vec<(usize, usize)> = (0..5).map(|k| ((k * 3) % rows, (k * 7 + 1) % cols)).collect();
            for &(i, j) in &picks {
                let mut plus = net.clone();
                plus.layers[l].weights[(i, j)] += h;
                let mut minus = net.clone();
                minus.layers[l].weights[(i, j)] -= h;
                let fd = (plus.loss_and_gradient(&x, &t).0 - minus.loss_and_gradient(&x, &t).0) / (2.0 * h);
                let an = grads[l].weights[(i, j)];
                let scale = fd.abs().max(an.abs()).max(1e-8);
                assert!((fd - an).abs() / scale < 1e-4, "layer {l} w[{i},{j}]: fd {fd} vs analytic {an}");
            }
            let mut plus = net.clone();
            plus.layers[l].bias[0] += h;
            let mut minus = net.clone();
            minus.layers[l].bias[0] -= h;
            let fd = (plus.loss_and_gradient(&x, &t).0 - minus.loss_and_gradient(&x, &t).0) / (2.0 * h);
            let an = grads[l].bias[0];
            let scale = fd.abs().max(an.abs()).max(1e-8);
            assert!((fd - an).abs() / scale < 1e-4, "layer {l} bias: fd {fd} vs analytic {an}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences_relu() {
        check_gradient(Activation::Relu);
    }

    #[test]
    fn gradient_matches_finite_differences_tanh() {
        check_gradient(Activation::Tanh);
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let logits = DMatrix::from_column_slice(3, 1, &[1e4, -1e4, 9999.0]);
        let p = softmax_columns(&logits);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.sum() - 1.0).abs() < 1e-12);
        assert!(p[(0, 0)] > p[(2, 0)]);
    }

    #[test]
    fn output_is_a_simplex_vector_and_scale_invariant() {
        let net = small_net(ScalarField::Complex, Activation::Tanh, 3);
        let phi = DMatrix::<Complex64>::identity(4, 7);
        let mut rng = rng_from_seed(4);
        let r = DVector::from_fn(4, |_, _| Complex64::standard_normal(&mut rng));
        let a = net.score(&phi, &r).unwrap();
        let b = net.score(&phi, &r.scale(5.0)).unwrap();
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(a.iter().all(|v| *v >= 0.0));
        let order = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&i, &j| v[j].partial_cmp(&v[i]).unwrap().then(i.cmp(&j)));
            idx
        };
        assert_eq!(order(&a), order(&b));
        let zero = net.score(&phi, &DVector::zeros(4)).unwrap();
        assert!((zero.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn field_and_shape_are_checked() {
        let net = small_net(ScalarField::Real, Activation::Relu, 5);
        let phi_c = DMatrix::<Complex64>::identity(4, 7);
        assert!(net.score(&phi_c, &DVector::zeros(4)).is_err());
        let phi = DMatrix::<f64>::identity(4, 8);
        assert!(net.score(&phi, &DVector::zeros(4)).is_err());
    }

    #[test]
    fn default_schedule_covers_every_epoch() {
        let s = default_schedule(400, 1e-3);
        assert_eq!(s.len(), 4);
        assert_eq!((s[0].first_epoch, s[0].last_epoch, s[0].rate), (1, 250, 1e-3));
        assert_eq!((s[1].first_epoch, s[1].last_epoch), (251, 300));
        assert!((s[3].rate - 1e-3 / 64.0).abs() < 1e-18);
        assert_eq!(s[3].last_epoch, 400);
        for epochs in 1..30 {
            let cfg = TrainConfig::new(1, 2, 10, 5, epochs);
            cfg.validate(10).unwrap();
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::new(1, 3, 10, 20, 5);
        assert!(cfg.validate(30).is_err());
        cfg.batch_size = 5;
        cfg.validate(30).unwrap();
        cfg.schedule = vec![LearningRateStage {
            first_epoch: 1,
            last_epoch: 3,
            rate: 0.01,
        }];
        assert!(cfg.validate(30).is_err());
    }

    fn training_setup() -> (DMatrix<f64>, SignalDistribution) {
        let e = MatrixEnsemble::new(EnsembleKind::GaussianReal, 10, 30).unwrap();
        (
            gen_matrix(&e, &mut rng_from_seed(30)).unwrap(),
            SignalDistribution::new(SignalKind::SymmetricInterval),
        )
    }

    #[test]
    fn one_update_per_epoch_when_batch_is_whole_epoch() {
        let (phi, dist) = training_setup();
        let cfg = TrainConfig::new(1, 3, 40, 40, 6);
        let net = train_scorer(&phi, &cfg, &dist, &mut rng_from_seed(1)).unwrap();
        let rec = net.training().unwrap();
        assert_eq!(rec.updates, 6);
        assert_eq!(rec.loss_trace.len(), 6);
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let (phi, dist) = training_setup();
        let mut cfg = TrainConfig::new(1, 3, 200, 20, 50);
        cfg.schedule = default_schedule(50, 3e-3);
        let a = train_scorer(&phi, &cfg, &dist, &mut rng_from_seed(2)).unwrap();
        let trace = &a.training().unwrap().loss_trace;
        assert!(trace.last().unwrap() < trace.first().unwrap(), "trace {trace:?}");
        let b = train_scorer(&phi, &cfg, &dist, &mut rng_from_seed(2)).unwrap();
        assert_eq!(a, b);
    }
}
