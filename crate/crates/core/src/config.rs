//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key has a default; unknown
//! keys are rejected. [`RunConfig::to_text`] writes the effective settings in
//! the same format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::generator::GeneratorSpec;
use crate::graph::AblationConfig;

/// Ordered `(key, value)` pairs from a config text.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", idx + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

pub fn ablation_by_name(name: &str) -> Result<AblationConfig> {
    AblationConfig::variants()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, a)| a)
        .ok_or_else(|| {
            let names: Vec<&str> = AblationConfig::variants().iter().map(|(n, _)| *n).collect();
            Error::Config(format!("unknown ablation {name:?} (expected one of {})", names.join(", ")))
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Graph attention layers.
    pub n_layers: usize,
    /// Width of every attention layer.
    pub hidden: usize,
    pub lr: f64,
    /// Graphs per optimiser step.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Relative validation macro-AUC gain that counts as an improvement.
    pub tolerance: f64,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub dropout: f64,
    pub attn_dropout: bool,
    pub leaky_slope: f64,
    pub threshold: f64,
    pub split: [f64; 3],
    /// One of `full`, `no_g`, `no_g_s`, `no_cc`, `no_g_s_cc`.
    pub ablation: String,
    /// Concepts linked in the report graph when within this many relation hops.
    pub relation_hops: usize,
    pub workers: usize,
    pub latent_dim: usize,
    /// Width of the hidden layer in the prior head and in the decoder.
    pub vkd_hidden: usize,
    /// Adam step size for distillation runs.
    pub vkd_lr: f64,
    pub beta: f64,
    /// Fraction of optimiser steps over which the KL weight ramps up to `beta`.
    pub beta_warmup: f64,
    pub image_dim: usize,
    pub image_noise: f64,
    /// Scale of the label-to-image map.
    pub image_signal: f64,
    pub n_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_layers: 1,
            hidden: 512,
            lr: 1e-4,
            batch_size: 16,
            max_epochs: 100,
            tolerance: 0.01,
            patience: 5,
            seed: 0,
            dropout: 0.5,
            attn_dropout: false,
            leaky_slope: 0.2,
            threshold: 0.5,
            split: [0.7, 0.1, 0.2],
            ablation: "full".into(),
            relation_hops: 1,
            workers: 1,
            latent_dim: 32,
            vkd_hidden: 128,
            vkd_lr: 1e-3,
            beta: 1.0,
            beta_warmup: 0.1,
            image_dim: 256,
            image_noise: 1.0,
            image_signal: 0.2,
            n_samples: 1,
        }
    }
}

impl RunConfig {
    /// One attention layer of width 512.
    pub fn small() -> Self {
        Self::default()
    }

    /// Twelve attention layers of width 2048.
    pub fn large() -> Self {
        Self {
            n_layers: 12,
            hidden: 2048,
            ..Self::default()
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n_layers" => self.n_layers = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "tolerance" => self.tolerance = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "attn_dropout" => self.attn_dropout = parse_bool(key, value)?,
            "leaky_slope" => self.leaky_slope = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "split" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|p| parse(key, p.trim()))
                    .collect::<Result<_>>()?;
                self.split = parts
                    .try_into()
                    .map_err(|_| Error::Config("split: expected train,val,test".into()))?;
            }
            "ablation" => {
                ablation_by_name(value)?;
                self.ablation = value.to_string();
            }
            "relation_hops" => self.relation_hops = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "latent_dim" => self.latent_dim = parse(key, value)?,
            "vkd_hidden" => self.vkd_hidden = parse(key, value)?,
            "vkd_lr" => self.vkd_lr = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "beta_warmup" => self.beta_warmup = parse(key, value)?,
            "image_dim" => self.image_dim = parse(key, value)?,
            "image_noise" => self.image_noise = parse(key, value)?,
            "image_signal" => self.image_signal = parse(key, value)?,
            "n_samples" => self.n_samples = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_pairs(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_layers == 0 || self.hidden == 0 {
            return bad("n_layers and hidden must be positive");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.vkd_lr > 0.0) {
            return bad("vkd_lr must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(self.tolerance > 0.0) || self.patience == 0 {
            return bad("tolerance must be positive and patience at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.split.iter().any(|r| !(0.0..=1.0).contains(r)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("split ratios must lie in [0, 1] and sum to 1");
        }
        if self.workers == 0 || self.latent_dim == 0 || self.image_dim == 0 || self.n_samples == 0 {
            return bad("workers, latent_dim, image_dim and n_samples must be positive");
        }
        if !(self.beta >= 0.0) || !(0.0..=1.0).contains(&self.beta_warmup) {
            return bad("beta must be non-negative and beta_warmup in [0, 1]");
        }
        ablation_by_name(&self.ablation)?;
        Ok(())
    }

    pub fn ablation_config(&self) -> AblationConfig {
        let mut a = ablation_by_name(&self.ablation).expect("validated");
        a.relation_hops = self.relation_hops;
        a
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let split = format!("{},{},{}", self.split[0], self.split[1], self.split[2]);
        let rows = [
            ("n_layers", self.n_layers.to_string()),
            ("hidden", self.hidden.to_string()),
            ("lr", self.lr.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("tolerance", self.tolerance.to_string()),
            ("patience", self.patience.to_string()),
            ("seed", self.seed.to_string()),
            ("dropout", self.dropout.to_string()),
            ("attn_dropout", self.attn_dropout.to_string()),
            ("leaky_slope", self.leaky_slope.to_string()),
            ("threshold", self.threshold.to_string()),
            ("split", split),
            ("ablation", self.ablation.clone()),
            ("relation_hops", self.relation_hops.to_string()),
            ("workers", self.workers.to_string()),
            ("latent_dim", self.latent_dim.to_string()),
            ("vkd_hidden", self.vkd_hidden.to_string()),
            ("vkd_lr", self.vkd_lr.to_string()),
            ("beta", self.beta.to_string()),
            ("beta_warmup", self.beta_warmup.to_string()),
            ("image_dim", self.image_dim.to_string()),
            ("image_noise", self.image_noise.to_string()),
            ("image_signal", self.image_signal.to_string()),
            ("n_samples", self.n_samples.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Builds a [`GeneratorSpec`] from `key = value` text on top of the defaults.
pub fn generator_spec_from_text(text: &str) -> Result<GeneratorSpec> {
    let mut spec = GeneratorSpec::default();
    for (k, v) in parse_pairs(text)? {
        set_generator_key(&mut spec, &k, &v)?;
    }
    Ok(spec)
}

pub fn set_generator_key(spec: &mut GeneratorSpec, key: &str, value: &str) -> Result<()> {
    match key {
        "n_reports" => spec.n_reports = parse(key, value)?,
        "languages" => spec.languages = value.split(',').map(|l| l.trim().to_string()).collect(),
        "parallel" => spec.parallel = parse_bool(key, value)?,
        "min_sentences" => spec.min_sentences = parse(key, value)?,
        "max_sentences" => spec.max_sentences = parse(key, value)?,
        "finding_weight" => spec.kind_weights[0] = parse(key, value)?,
        "negated_weight" => spec.kind_weights[1] = parse(key, value)?,
        "normal_weight" => spec.kind_weights[2] = parse(key, value)?,
        "distractor_weight" => spec.kind_weights[3] = parse(key, value)?,
        "noise" => spec.noise = parse(key, value)?,
        "label_noise" => spec.label_noise = parse(key, value)?,
        "seed" => spec.seed = parse(key, value)?,
        other => return Err(Error::Config(format!("unknown generator key {other:?}"))),
    }
    Ok(())
}

pub fn generator_spec_to_text(spec: &GeneratorSpec) -> String {
    format!(
        "n_reports = {}\nlanguages = {}\nparallel = {}\nmin_sentences = {}\nmax_sentences = {}\n\
         finding_weight = {}\nnegated_weight = {}\nnormal_weight = {}\ndistractor_weight = {}\n\
         noise = {}\nlabel_noise = {}\nseed = {}\n",
        spec.n_reports,
        spec.languages.join(","),
        spec.parallel,
        spec.min_sentences,
        spec.max_sentences,
        spec.kind_weights[0],
        spec.kind_weights[1],
        spec.kind_weights[2],
        spec.kind_weights[3],
        spec.noise,
        spec.label_noise,
        spec.seed
    )
}
