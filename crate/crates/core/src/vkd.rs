//! Variational knowledge distillation from report graphs to an image branch.
//!
//! During training a posterior `q(z | R)` is computed from the pooled report
//! graph and a prior `p(z | I)` from image features. The decoder classifies
//! `I ⊕ z` with `z` sampled from the posterior, and the loss is
//!
//! ```text
//! −log p(y | I, z) + β · KL(q(z | R) ‖ p(z | I)),   z ~ q(z | R)
//! ```
//!
//! where `−log p(y | I, z)` is the binary cross-entropy summed over labels.
//!
//! At test time only the image is available and `z` comes from the prior.
//! Images here are synthetic: a fixed seeded linear map of the label vector
//! plus Gaussian noise.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use kg_tensor::rng::{stable_hash, stream, Rng};
use kg_tensor::{Adam, AdamState, Checkpoint, Tape, Tensor, Var};

use crate::classifier::{BoundMlp, Mlp, Prediction};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gat::{BoundStack, GatStack};
use crate::graph::ReportGraph;
use crate::labels::{Labels, NUM_LABELS};
use crate::metrics::{evaluate, EvalReport};
use crate::params::{meta_f64, meta_usize, Parameters};
use crate::trainer::{accumulate, map_indexed, thread_pool, EarlyStopping, EpochRecord};

/// Log-variances are clamped to `[-LOG_VAR_BOUND, LOG_VAR_BOUND]` before use.
pub const LOG_VAR_BOUND: f64 = 10.0;

const INIT_KEY: u64 = 0x7d1;
const SHUFFLE_KEY: u64 = 0x7d2;
const STEP_KEY: u64 = 0x7d3;
const IMAGE_KEY: u64 = 0x7d4;
const INFER_KEY: u64 = 0x7d5;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

/// `KL(q ‖ p)` between diagonal Gaussians, summed over dimensions.
pub fn kl_gaussians(q: &GaussianParams, p: &GaussianParams) -> Result<f64> {
    let d = q.mu.len();
    if q.log_var.len() != d || p.mu.len() != d || p.log_var.len() != d {
        return Err(Error::Invalid(format!(
            "Gaussian dimensions differ: q {}/{}, p {}/{}",
            q.mu.len(),
            q.log_var.len(),
            p.mu.len(),
            p.log_var.len()
        )));
    }
    let clamp = |v: f64| v.clamp(-LOG_VAR_BOUND, LOG_VAR_BOUND);
    let mut kl = 0.0;
    for i in 0..d {
        let (lq, lp) = (clamp(q.log_var[i]), clamp(p.log_var[i]));
        let diff = q.mu[i] - p.mu[i];
        kl += 0.5 * (lp - lq + (lq - lp).exp() + diff * diff * (-lp).exp() - 1.0);
    }
    Ok(kl)
}

/// `KL(q ‖ p)` on the tape; all arguments are `1 × D`, log-variances already clamped.
pub fn kl_var<'t>(mu_q: Var<'t>, lv_q: Var<'t>, mu_p: Var<'t>, lv_p: Var<'t>) -> Result<Var<'t>> {
    let diff = mu_q.sub(mu_p)?;
    let ratio = lv_q.sub(lv_p)?.exp()?.add(diff.mul(diff)?.mul(lv_p.scale(-1.0)?.exp()?)?)?;
    let terms = lv_p.sub(lv_q)?.add(ratio)?.add_scalar(-1.0)?;
    Ok(terms.sum()?.scale(0.5)?)
}

/// Label vector to image features: `y · M + σ ε`, with `M` and `ε` drawn from
/// seeded streams.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImager {
    /// `14 × dim`.
    pub map: Tensor,
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticImager {
    pub fn new(dim: usize, signal: f64, noise: f64, seed: u64) -> Self {
        let mut r = stream(seed, &[IMAGE_KEY]);
        let data = (0..NUM_LABELS * dim)
            .map(|_| signal * Distribution::<f64>::sample(&StandardNormal, &mut r))
            .collect();
        Self {
            map: Tensor::new(vec![NUM_LABELS, dim], data).expect("sized"),
            noise,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.map.shape()[1]
    }

    /// Features for `labels`; `key` selects the noise draw.
    pub fn image(&self, labels: &Labels, key: &str) -> Vec<f64> {
        let dim = self.dim();
        let mut r = stream(self.seed, &[IMAGE_KEY, stable_hash(key.as_bytes())]);
        let mut x: Vec<f64> = (0..dim)
            .map(|_| self.noise * Distribution::<f64>::sample(&StandardNormal, &mut r))
            .collect();
        for k in (0..NUM_LABELS).filter(|&k| labels.get(k)) {
            for (xi, m) in x.iter_mut().zip(self.map.row_slice(k)) {
                *xi += m;
            }
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VkdModel {
    pub gat: GatStack,
    /// Pooled graph → `[μ ‖ log σ²]`.
    pub posterior: Mlp,
    /// Image features → `[μ ‖ log σ²]`.
    pub prior: Mlp,
    /// Image features ⊕ latent → label logits.
    pub decoder: Mlp,
    pub latent_dim: usize,
}

pub struct BoundVkd<'t> {
    pub gat: BoundStack<'t>,
    pub posterior: BoundMlp<'t>,
    pub prior: BoundMlp<'t>,
    pub decoder: BoundMlp<'t>,
    pub latent_dim: usize,
}

/// Columns `[0, d)` and `[d, 2d)` of a `1 × 2d` row.
fn split_halves<'t>(v: Var<'t>, d: usize) -> Result<(Var<'t>, Var<'t>)> {
    let col = v.transpose()?;
    let lo: Vec<usize> = (0..d).collect();
    let hi: Vec<usize> = (d..2 * d).collect();
    Ok((col.gather_rows(&lo)?.transpose()?, col.gather_rows(&hi)?.transpose()?))
}

fn epsilon<'t>(tape: &'t Tape, d: usize, rng: &mut Rng) -> Var<'t> {
    let e = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    tape.constant(Tensor::row(e))
}

/// Bernoulli negative log-likelihood of `labels`, summed over labels.
fn nll<'t>(logits: Var<'t>, labels: &Labels) -> Result<Var<'t>> {
    Ok(logits.bce_with_logits(&labels.to_f64())?.scale(NUM_LABELS as f64)?)
}

/// Parts of one ELBO evaluation.
pub struct ElboTerms<'t> {
    pub loss: Var<'t>,
    pub bce: Var<'t>,
    pub kl: Var<'t>,
}

impl<'t> BoundVkd<'t> {
    pub fn from_vars(model: &VkdModel, vars: &[Var<'t>]) -> Self {
        let a = 2 * model.gat.layers.len();
        let b = a + 2 * model.posterior.layers.len();
        let c = b + 2 * model.prior.layers.len();
        Self {
            gat: BoundStack::from_vars(&model.gat, &vars[..a]),
            posterior: BoundMlp::from_vars(&model.posterior, &vars[a..b]),
            prior: BoundMlp::from_vars(&model.prior, &vars[b..c]),
            decoder: BoundMlp::from_vars(&model.decoder, &vars[c..]),
            latent_dim: model.latent_dim,
        }
    }

    pub fn vars(&self) -> Vec<Var<'t>> {
        let mut v = self.gat.vars();
        v.extend(self.posterior.vars());
        v.extend(self.prior.vars());
        v.extend(self.decoder.vars());
        v
    }

    fn gaussian(&self, head: &BoundMlp<'t>, x: Var<'t>, rng: &mut Rng, train: bool) -> Result<(Var<'t>, Var<'t>)> {
        let out = head.forward(x, rng, train)?;
        let (mu, lv) = split_halves(out, self.latent_dim)?;
        Ok((mu, lv.clamp(-LOG_VAR_BOUND, LOG_VAR_BOUND)?))
    }

    pub fn posterior_params(&self, tape: &'t Tape, g: &ReportGraph, rng: &mut Rng, train: bool) -> Result<(Var<'t>, Var<'t>)> {
        let pooled = self.gat.encode(tape, g, rng, train)?.max_pool(0)?;
        self.gaussian(&self.posterior, pooled, rng, train)
    }

    pub fn prior_params(&self, image: Var<'t>, rng: &mut Rng, train: bool) -> Result<(Var<'t>, Var<'t>)> {
        self.gaussian(&self.prior, image, rng, train)
    }

    pub fn decode(&self, image: Var<'t>, z: Var<'t>, rng: &mut Rng, train: bool) -> Result<Var<'t>> {
        self.decoder.forward(Var::concat(&[image, z], 1)?, rng, train)
    }

    /// Reparameterised sample `μ + exp(½ log σ²) ∘ ε`.
    pub fn sample(&self, mu: Var<'t>, lv: Var<'t>, rng: &mut Rng) -> Result<Var<'t>> {
        let eps = epsilon(mu.tape(), self.latent_dim, rng);
        Ok(mu.add(lv.scale(0.5)?.exp()?.mul(eps)?)?)
    }

    /// ELBO loss with `z` drawn from the report posterior.
    pub fn elbo(
        &self,
        tape: &'t Tape,
        g: &ReportGraph,
        image: &[f64],
        labels: &Labels,
        beta: f64,
        rng: &mut Rng,
        train: bool,
    ) -> Result<ElboTerms<'t>> {
        let img = tape.constant(Tensor::row(image.to_vec()));
        let (mu_q, lv_q) = self.posterior_params(tape, g, rng, train)?;
        let (mu_p, lv_p) = self.prior_params(img, rng, train)?;
        let z = self.sample(mu_q, lv_q, rng)?;
        let bce = nll(self.decode(img, z, rng, train)?, labels)?;
        let kl = kl_var(mu_q, lv_q, mu_p, lv_p)?;
        let loss = bce.add(kl.scale(beta)?)?;
        Ok(ElboTerms { loss, bce, kl })
    }

    /// Image-only loss: `z` drawn from the prior, no KL term.
    pub fn image_only_loss(&self, tape: &'t Tape, image: &[f64], labels: &Labels, rng: &mut Rng, train: bool) -> Result<Var<'t>> {
        let img = tape.constant(Tensor::row(image.to_vec()));
        let (mu_p, lv_p) = self.prior_params(img, rng, train)?;
        let z = self.sample(mu_p, lv_p, rng)?;
        nll(self.decode(img, z, rng, train)?, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Trained on images alone; the latent comes from the prior.
    ImageOnly,
    /// Trained with the report posterior and the KL term.
    Distilled,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image_only" => Ok(Self::ImageOnly),
            "vkd" => Ok(Self::Distilled),
            other => Err(Error::Config(format!("unknown mode {other:?} (expected image_only or vkd)"))),
        }
    }
}

impl VkdModel {
    pub fn new(input_dim: usize, image_dim: usize, cfg: &VkdConfig, rng: &mut Rng) -> Self {
        let d = cfg.latent_dim;
        let mut gat = GatStack::new(input_dim, cfg.hidden, cfg.n_layers, rng);
        gat.dropout = cfg.dropout;
        let mut posterior = Mlp::with_dims(cfg.hidden, &[], 2 * d, rng);
        let mut prior = Mlp::with_dims(image_dim, &[cfg.head_hidden], 2 * d, rng);
        let mut decoder = Mlp::with_dims(image_dim + d, &[cfg.head_hidden], NUM_LABELS, rng);
        for m in [&mut posterior, &mut prior, &mut decoder] {
            m.dropout = cfg.head_dropout;
        }
        Self {
            gat,
            posterior,
            prior,
            decoder,
            latent_dim: d,
        }
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundVkd<'t> {
        BoundVkd {
            gat: BoundStack::bind(&self.gat, tape),
            posterior: BoundMlp::bind(&self.posterior, tape),
            prior: BoundMlp::bind(&self.prior, tape),
            decoder: BoundMlp::bind(&self.decoder, tape),
            latent_dim: self.latent_dim,
        }
    }

    pub fn image_dim(&self) -> usize {
        self.prior.input_dim()
    }

    /// Scalar ELBO loss; see [`BoundVkd::elbo`].
    #[allow(clippy::too_many_arguments)]
    pub fn elbo_loss(&self, g: &ReportGraph, image: &[f64], labels: &Labels, beta: f64, rng: &mut Rng, train: bool) -> Result<f64> {
        let tape = Tape::new();
        let terms = self.bind(&tape).elbo(&tape, g, image, labels, beta, rng, train)?;
        let v = terms.loss.value().item()?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("ELBO loss {v}")));
        }
        Ok(v)
    }

    fn loss_and_grads(&self, s: &VkdSample, mode: Mode, beta: f64, rng: &mut Rng) -> Result<(f64, Vec<Tensor>)> {
        let tape = Tape::new();
        let bound = self.bind(&tape);
        let loss = match mode {
            Mode::Distilled => bound.elbo(&tape, &s.graph, &s.image, &s.labels, beta, rng, true)?.loss,
            Mode::ImageOnly => bound.image_only_loss(&tape, &s.image, &s.labels, rng, true)?,
        };
        let value = loss.value().item()?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("loss {value} on report {}", s.id)));
        }
        let mut grads = tape.backward(loss)?;
        Ok((value, bound.vars().into_iter().map(|v| grads.take(v)).collect()))
    }

    /// Prior parameters for an image.
    pub fn prior(&self, image: &[f64]) -> Result<GaussianParams> {
        let tape = Tape::new();
        let b = self.bind(&tape);
        let mut r = stream(0, &[]);
        let (mu, lv) = b.prior_params(tape.constant(Tensor::row(image.to_vec())), &mut r, false)?;
        let out = GaussianParams {
            mu: mu.value().data().to_vec(),
            log_var: lv.value().data().to_vec(),
        };
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        ckpt.set_meta("model", "vkd");
        ckpt.set_meta("input_dim", self.gat.input_dim());
        ckpt.set_meta("hidden", self.gat.hidden_size());
        ckpt.set_meta("n_layers", self.gat.n_layers());
        ckpt.set_meta("image_dim", self.image_dim());
        ckpt.set_meta("latent_dim", self.latent_dim);
        ckpt.set_meta("head_hidden", self.prior.layers[0].weight.shape()[1]);
        ckpt.set_meta("dropout", self.gat.dropout);
        ckpt.set_meta("head_dropout", self.prior.dropout);
        self.write_tensors(&mut ckpt);
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.meta("model") != Some("vkd") {
            return Err(Error::Invalid("checkpoint does not hold a distillation model".into()));
        }
        let cfg = VkdConfig {
            n_layers: meta_usize(ckpt, "n_layers")?,
            hidden: meta_usize(ckpt, "hidden")?,
            latent_dim: meta_usize(ckpt, "latent_dim")?,
            head_hidden: meta_usize(ckpt, "head_hidden")?,
            dropout: meta_f64(ckpt, "dropout")?,
            head_dropout: meta_f64(ckpt, "head_dropout")?,
            ..VkdConfig::default()
        };
        let input = meta_usize(ckpt, "input_dim")?;
        let image = meta_usize(ckpt, "image_dim")?;
        let mut model = Self::new(input, image, &cfg, &mut stream(0, &[]));
        model.read_tensors(ckpt)?;
        Ok(model)
    }
}

impl Parameters for VkdModel {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.gat.tensors();
        v.extend(self.posterior.tensors());
        v.extend(self.prior.tensors());
        v.extend(self.decoder.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.gat.tensors_mut();
        v.extend(self.posterior.tensors_mut());
        v.extend(self.prior.tensors_mut());
        v.extend(self.decoder.tensors_mut());
        v
    }

    fn param_names(&self) -> Vec<String> {
        let mut v = self.gat.param_names("");
        v.extend(self.posterior.param_names("posterior."));
        v.extend(self.prior.param_names("prior."));
        v.extend(self.decoder.param_names("decoder."));
        v
    }
}

/// Image-only prediction. With one sample the prior mean is used as `z`;
/// otherwise decoder probabilities are averaged over `n_samples` prior draws.
pub fn infer_image_only(model: &VkdModel, image: &[f64], seed: u64, n_samples: usize) -> Result<Prediction> {
    let tape = Tape::new();
    let b = model.bind(&tape);
    let mut r = stream(seed, &[INFER_KEY]);
    let img = tape.constant(Tensor::row(image.to_vec()));
    let (mu, lv) = b.prior_params(img, &mut r, false)?;
    if n_samples <= 1 {
        let logits = b.decode(img, mu, &mut r, false)?.value().data().to_vec();
        return Ok(Prediction::from_logits(logits));
    }
    let mut mean = vec![0.0; NUM_LABELS];
    for _ in 0..n_samples {
        let z = b.sample(mu, lv, &mut r)?;
        let p = Prediction::from_logits(b.decode(img, z, &mut r, false)?.value().data().to_vec());
        for (m, x) in mean.iter_mut().zip(&p.probabilities) {
            *m += x / n_samples as f64;
        }
    }
    let logits = mean.iter().map(|p| (p / (1.0 - p)).ln()).collect();
    Ok(Prediction {
        logits,
        probabilities: mean,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VkdConfig {
    pub n_layers: usize,
    pub hidden: usize,
    pub latent_dim: usize,
    pub head_hidden: usize,
    pub dropout: f64,
    pub head_dropout: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub tolerance: f64,
    pub patience: usize,
    pub beta: f64,
    pub beta_warmup: f64,
    pub seed: u64,
    pub workers: usize,
}

impl From<&RunConfig> for VkdConfig {
    fn from(c: &RunConfig) -> Self {
        Self {
            n_layers: c.n_layers,
            hidden: c.hidden,
            latent_dim: c.latent_dim,
            head_hidden: c.vkd_hidden,
            dropout: c.dropout,
            head_dropout: 0.0,
            lr: c.vkd_lr,
            batch_size: c.batch_size,
            max_epochs: c.max_epochs,
            tolerance: c.tolerance,
            patience: c.patience,
            beta: c.beta,
            beta_warmup: c.beta_warmup,
            seed: c.seed,
            workers: c.workers,
        }
    }
}

impl Default for VkdConfig {
    fn default() -> Self {
        Self::from(&RunConfig::default())
    }
}

/// A report graph with its synthetic image and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct VkdSample {
    pub id: String,
    pub graph: ReportGraph,
    pub image: Vec<f64>,
    pub labels: Labels,
}

#[derive(Debug, Clone)]
pub struct VkdOutcome {
    pub model: VkdModel,
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_auc: f64,
}

/// KL weight after `step` of `total` optimiser steps.
pub fn beta_at(beta: f64, warmup: f64, step: usize, total: usize) -> f64 {
    let ramp = warmup * total as f64;
    if ramp <= 0.0 {
        beta
    } else {
        beta * (step as f64 / ramp).min(1.0)
    }
}

pub fn train_vkd(cfg: &VkdConfig, mode: Mode, train: &[VkdSample], val: &[VkdSample]) -> Result<VkdOutcome> {
    let first = train
        .first()
        .ok_or_else(|| Error::Invalid("training split is empty".into()))?;
    if val.is_empty() {
        return Err(Error::Invalid("validation split is empty".into()));
    }
    let mut model = VkdModel::new(
        first.graph.feature_dim(),
        first.image.len(),
        cfg,
        &mut stream(cfg.seed, &[INIT_KEY]),
    );
    let adam = Adam {
        lr: cfg.lr,
        ..Adam::default()
    };
    let mut state = AdamState::new(model.tensors());
    let mut stopper = EarlyStopping::new(cfg.tolerance, cfg.patience);
    let pool = thread_pool(cfg.workers)?;
    let total_steps = cfg.max_epochs * train.len().div_ceil(cfg.batch_size);
    let mut step = 0usize;
    let mut records = Vec::new();
    let mut best = model.clone();

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream(cfg.seed, &[SHUFFLE_KEY, epoch as u64]));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let beta = beta_at(cfg.beta, cfg.beta_warmup, step, total_steps);
            let current = &model;
            let parts = map_indexed(pool.as_ref(), batch.len(), |k| {
                let s = &train[batch[k]];
                let mut r = stream(cfg.seed, &[STEP_KEY, epoch as u64, stable_hash(s.id.as_bytes())]);
                current.loss_and_grads(s, mode, beta, &mut r)
            })?;
            let mut acc = None;
            for (loss, g) in parts {
                loss_sum += loss;
                accumulate(&mut acc, g)?;
            }
            let mut grads = acc.expect("batch is non-empty");
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.scale_in_place(scale));
            adam.step(&mut model.tensors_mut(), &grads, &mut state).map_err(|e| match e {
                kg_tensor::TensorError::NonFiniteGradient(i) => {
                    Error::NonFinite(format!("gradient of parameter {i} in epoch {epoch}"))
                }
                other => other.into(),
            })?;
            step += 1;
        }
        let val_auc = evaluate_image_only(&model, val, 1, 0.5)?.macro_auc;
        records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_macro_auc: val_auc,
            wall_time: start.elapsed().as_secs_f64(),
        });
        let obs = stopper.observe(epoch, val_auc);
        if obs.new_best {
            best = model.clone();
        }
        if obs.stop {
            break;
        }
    }
    let (best_epoch, best_val_auc) = stopper.best().expect("at least one epoch ran");
    Ok(VkdOutcome {
        model: best,
        records,
        best_epoch,
        best_val_auc,
    })
}

pub fn evaluate_image_only(model: &VkdModel, samples: &[VkdSample], n_samples: usize, threshold: f64) -> Result<EvalReport> {
    let probs = samples
        .iter()
        .map(|s| Ok(infer_image_only(model, &s.image, stable_hash(s.id.as_bytes()), n_samples)?.probabilities))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<[bool; NUM_LABELS]> = samples.iter().map(|s| s.labels.0).collect();
    evaluate(&probs, &truth, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::fixture_graph;

    fn g(mu: &[f64], lv: &[f64]) -> GaussianParams {
        GaussianParams {
            mu: mu.to_vec(),
            log_var: lv.to_vec(),
        }
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_gaussians(&g(&[0.3, -1.0], &[0.2, 0.1]), &g(&[0.3, -1.0], &[0.2, 0.1])).unwrap(), 0.0);
        assert!((kl_gaussians(&g(&[1.0], &[0.0]), &g(&[0.0], &[0.0])).unwrap() - 0.5).abs() < 1e-15);
        let want = 0.5 * (std::f64::consts::E - 2.0);
        assert!((kl_gaussians(&g(&[0.0], &[1.0]), &g(&[0.0], &[0.0])).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.3591).abs() < 1e-4);
        assert!(kl_gaussians(&g(&[0.0], &[0.0]), &g(&[0.0, 1.0], &[0.0, 0.0])).is_err());
    }

    #[test]
    fn kl_on_tape_matches_closed_form() {
        let tape = Tape::new();
        let v = |x: &[f64]| tape.constant(Tensor::row(x.to_vec()));
        let (mq, lq, mp, lp) = ([0.5, -0.2], [0.3, -1.0], [0.1, 0.4], [-0.5, 0.7]);
        let kl = kl_var(v(&mq), v(&lq), v(&mp), v(&lp)).unwrap().value().item().unwrap();
        let want = kl_gaussians(&g(&mq, &lq), &g(&mp, &lp)).unwrap();
        assert!((kl - want).abs() < 1e-14);
    }

    #[test]
    fn images_are_deterministic() {
        let imager = SyntheticImager::new(16, 1.0, 1.0, 3);
        let mut l = Labels::default();
        l.set(4, true);
        assert_eq!(imager.image(&l, "a"), imager.image(&l, "a"));
        assert_ne!(imager.image(&l, "a"), imager.image(&l, "b"));
        let quiet = SyntheticImager::new(16, 1.0, 0.0, 3);
        assert_eq!(quiet.image(&l, "a"), quiet.map.row_slice(4));
    }

    fn toy_model() -> VkdModel {
        let cfg = VkdConfig {
            hidden: 6,
            latent_dim: 3,
            head_hidden: 5,
            ..VkdConfig::default()
        };
        VkdModel::new(3, 8, &cfg, &mut stream(9, &[]))
    }

    #[test]
    fn beta_zero_is_plain_classification() {
        let m = toy_model();
        let img = vec![0.1; 8];
        let labels = Labels::default();
        let tape = Tape::new();
        let b = m.bind(&tape);
        let t = b.elbo(&tape, &fixture_graph(), &img, &labels, 0.0, &mut stream(1, &[]), false).unwrap();
        assert_eq!(t.loss.value().item().unwrap(), t.bce.value().item().unwrap());
        assert!(t.kl.value().item().unwrap() >= 0.0);
    }

    #[test]
    fn single_sample_inference_is_deterministic() {
        let m = toy_model();
        let img = vec![0.3; 8];
        let a = infer_image_only(&m, &img, 1, 1).unwrap();
        let b = infer_image_only(&m, &img, 2, 1).unwrap();
        assert_eq!(a, b);
        let c = infer_image_only(&m, &img, 1, 4).unwrap();
        assert!(c.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn warmup_schedule() {
        assert_eq!(beta_at(1.0, 0.1, 0, 100), 0.0);
        assert_eq!(beta_at(1.0, 0.1, 5, 100), 0.5);
        assert_eq!(beta_at(1.0, 0.1, 50, 100), 1.0);
        assert_eq!(beta_at(2.0, 0.0, 0, 100), 2.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = toy_model();
        assert_eq!(VkdModel::from_checkpoint(&m.to_checkpoint()).unwrap(), m);
    }

    #[test]
    fn mode_names() {
        assert_eq!("vkd".parse::<Mode>().unwrap(), Mode::Distilled);
        assert_eq!("image_only".parse::<Mode>().unwrap(), Mode::ImageOnly);
        assert!("both".parse::<Mode>().is_err());
    }
}
