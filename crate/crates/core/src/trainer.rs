//! Classifier training with Adam, gradient accumulation and early stopping.
//!
//! Graphs are processed one tape at a time; gradients of a batch are summed
//! in batch order and averaged before the optimiser step, so results do not
//! depend on the number of workers.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use kg_tensor::rng::{stable_hash, stream};
use kg_tensor::{Adam, AdamState, Tensor};

use crate::classifier::GraphClassifier;
use crate::config::RunConfig;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::labels::NUM_LABELS;
use crate::metrics::{evaluate, EvalReport};
use crate::params::Parameters;
use crate::pipeline::{Pipeline, Sample};

const INIT_KEY: u64 = 0x1417;
const SHUFFLE_KEY: u64 = 0x5ff1;
const DROPOUT_KEY: u64 = 0xd409;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n_layers: usize,
    pub hidden: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub tolerance: f64,
    pub patience: usize,
    pub seed: u64,
    pub dropout: f64,
    pub attn_dropout: bool,
    pub leaky_slope: f64,
    pub workers: usize,
}

impl From<&RunConfig> for TrainConfig {
    fn from(c: &RunConfig) -> Self {
        Self {
            n_layers: c.n_layers,
            hidden: c.hidden,
            lr: c.lr,
            batch_size: c.batch_size,
            max_epochs: c.max_epochs,
            tolerance: c.tolerance,
            patience: c.patience,
            seed: c.seed,
            dropout: c.dropout,
            attn_dropout: c.attn_dropout,
            leaky_slope: c.leaky_slope,
            workers: c.workers,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::from(&RunConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_auc: f64,
    /// Seconds spent on the epoch; excluded from equality-sensitive outputs.
    pub wall_time: f64,
}

/// Stops after `patience` consecutive epochs without a relative gain of at
/// least `tolerance` over the last epoch that achieved one. Separately tracks
/// the epoch with the highest value seen.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub tolerance: f64,
    pub patience: usize,
    reference: Option<f64>,
    stale: usize,
    best: Option<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    /// This epoch holds the highest value so far.
    pub new_best: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(tolerance: f64, patience: usize) -> Self {
        Self {
            tolerance,
            patience,
            reference: None,
            stale: 0,
            best: None,
        }
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> Observation {
        match self.reference {
            Some(r) if value < r + self.tolerance * r.abs() => self.stale += 1,
            _ => {
                self.reference = Some(value);
                self.stale = 0;
            }
        }
        let new_best = self.best.is_none_or(|(_, b)| value > b);
        if new_best {
            self.best = Some((epoch, value));
        }
        Observation {
            new_best,
            stop: self.stale >= self.patience,
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation macro-AUC.
    pub model: GraphClassifier,
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_auc: f64,
}

pub fn init_model(cfg: &TrainConfig, input_dim: usize) -> GraphClassifier {
    let mut r = stream(cfg.seed, &[INIT_KEY]);
    let mut model = GraphClassifier::new(input_dim, cfg.hidden, cfg.n_layers, &mut r);
    model.gat.dropout = cfg.dropout;
    model.gat.attn_dropout = cfg.attn_dropout;
    model.mlp.dropout = cfg.dropout;
    for l in &mut model.gat.layers {
        l.leaky_slope = cfg.leaky_slope;
    }
    model
}

pub(crate) fn thread_pool(workers: usize) -> Result<Option<rayon::ThreadPool>> {
    if workers <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| Error::Invalid(format!("cannot start {workers} workers: {e}")))
}

/// `f` over `0..n`, on the pool when there is one; results in index order.
pub(crate) fn map_indexed<T: Send>(
    pool: Option<&rayon::ThreadPool>,
    n: usize,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    match pool {
        Some(p) => p.install(|| (0..n).into_par_iter().map(&f).collect()),
        None => (0..n).map(f).collect(),
    }
}

/// Sums `parts` into `acc` in order.
pub(crate) fn accumulate(acc: &mut Option<Vec<Tensor>>, grads: Vec<Tensor>) -> Result<()> {
    match acc {
        None => *acc = Some(grads),
        Some(a) => {
            for (x, g) in a.iter_mut().zip(&grads) {
                x.add_assign(g)?;
            }
        }
    }
    Ok(())
}

pub fn train(cfg: &TrainConfig, train: &[Sample], val: &[Sample]) -> Result<TrainOutcome> {
    train_with(cfg, train, val, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    cfg: &TrainConfig,
    train: &[Sample],
    val: &[Sample],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let first = train
        .first()
        .ok_or_else(|| Error::Invalid("training split is empty".into()))?;
    if val.is_empty() {
        return Err(Error::Invalid("validation split is empty".into()));
    }
    let mut model = init_model(cfg, first.graph.feature_dim());
    let adam = Adam {
        lr: cfg.lr,
        ..Adam::default()
    };
    let mut state = AdamState::new(model.tensors());
    let mut stopper = EarlyStopping::new(cfg.tolerance, cfg.patience);
    let pool = thread_pool(cfg.workers)?;
    let mut records = Vec::new();
    let mut best_model = model.clone();

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream(cfg.seed, &[SHUFFLE_KEY, epoch as u64]));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let current = &model;
            let step = |k: usize| {
                let s = &train[batch[k]];
                let mut r = stream(cfg.seed, &[DROPOUT_KEY, epoch as u64, stable_hash(s.id.as_bytes())]);
                current.loss_and_grads(&s.graph, &s.labels, &mut r).map_err(|e| match e {
                    Error::NonFinite(m) => Error::NonFinite(format!("{m} on report {} in epoch {epoch}", s.id)),
                    other => other,
                })
            };
            let mut acc = None;
            if pool.is_some() {
                for (loss, g) in map_indexed(pool.as_ref(), batch.len(), step)? {
                    loss_sum += loss;
                    accumulate(&mut acc, g)?;
                }
            } else {
                for k in 0..batch.len() {
                    let (loss, g) = step(k)?;
                    loss_sum += loss;
                    accumulate(&mut acc, g)?;
                }
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
        }
        let val_auc = evaluate_samples(&model, val, 0.5, cfg.workers)?.macro_auc;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_macro_auc: val_auc,
            wall_time: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        records.push(record);
        let obs = stopper.observe(epoch, val_auc);
        if obs.new_best {
            best_model = model.clone();
        }
        if obs.stop {
            break;
        }
    }
    let (best_epoch, best_val_auc) = stopper.best().expect("at least one epoch ran");
    Ok(TrainOutcome {
        model: best_model,
        records,
        best_epoch,
        best_val_auc,
    })
}

/// Eval-mode probabilities, one row of 14 per sample.
pub fn predict(model: &GraphClassifier, samples: &[Sample], workers: usize) -> Result<Vec<Vec<f64>>> {
    let pool = thread_pool(workers)?;
    map_indexed(pool.as_ref(), samples.len(), |i| {
        let mut r = stream(0, &[]);
        Ok(model.classify_report(&samples[i].graph, &mut r, false)?.probabilities)
    })
}

pub fn evaluate_samples(model: &GraphClassifier, samples: &[Sample], threshold: f64, workers: usize) -> Result<EvalReport> {
    let probs = predict(model, samples, workers)?;
    let truth: Vec<[bool; NUM_LABELS]> = samples.iter().map(|s| s.labels.0).collect();
    evaluate(&probs, &truth, threshold)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median over `repetitions` of reports per second through extraction, graph
/// construction, encoding and classification.
pub fn benchmark_inference(
    model: &GraphClassifier,
    pipeline: &Pipeline<'_>,
    corpus: &Corpus,
    repetitions: usize,
) -> Result<f64> {
    if corpus.len() < 10 {
        return Err(Error::Invalid(format!(
            "benchmark needs at least 10 reports, got {}",
            corpus.len()
        )));
    }
    let mut rates = Vec::with_capacity(repetitions.max(1));
    for _ in 0..repetitions.max(1) {
        let start = Instant::now();
        for report in corpus.iter() {
            let g = pipeline.graph(report)?;
            let mut r = stream(0, &[]);
            std::hint::black_box(model.classify_report(&g, &mut r, false)?);
        }
        rates.push(corpus.len() as f64 / start.elapsed().as_secs_f64());
    }
    Ok(median(&mut rates))
}
