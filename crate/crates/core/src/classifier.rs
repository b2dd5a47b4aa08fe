//! Graph-level multi-label classification: max-pool the encoded nodes and
//! apply a small MLP producing one logit per finding label.

use kg_tensor::rng::Rng;
use kg_tensor::{Checkpoint, Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::gat::{glorot, BoundStack, GatStack, DEFAULT_DROPOUT};
use crate::graph::ReportGraph;
use crate::labels::{Labels, NUM_LABELS};
use crate::params::{meta_f64, meta_usize, Parameters};

/// Hidden widths of the MLP after pooling; the output layer adds [`NUM_LABELS`].
pub const MLP_HIDDEN: [usize; 2] = [512, 256];

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in × out`.
    pub weight: Tensor,
    /// `1 × out`.
    pub bias: Tensor,
}

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut Rng) -> Self {
        Self {
            weight: glorot(input, output, input, output, rng),
            bias: Tensor::zeros(vec![1, output]),
        }
    }
}

/// Feed-forward head with ELU between layers and raw logits at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub dropout: f64,
}

impl Mlp {
    /// `input → 512 → 256 → 14`.
    pub fn new(input: usize, rng: &mut Rng) -> Self {
        Self::with_dims(input, &MLP_HIDDEN, NUM_LABELS, rng)
    }

    pub fn with_dims(input: usize, hidden: &[usize], output: usize, rng: &mut Rng) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let layers = dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect();
        Self {
            layers,
            dropout: DEFAULT_DROPOUT,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.shape()[0])
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.shape()[1])
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("{prefix}mlp.{i}.weight"), format!("{prefix}mlp.{i}.bias")])
            .collect()
    }
}

#[derive(Clone)]
pub struct BoundMlp<'t> {
    pub layers: Vec<(Var<'t>, Var<'t>)>,
    pub dropout: f64,
}

impl<'t> BoundMlp<'t> {
    pub fn bind(mlp: &Mlp, tape: &'t Tape) -> Self {
        Self {
            layers: mlp.layers.iter().map(|l| (tape.param(&l.weight), tape.param(&l.bias))).collect(),
            dropout: mlp.dropout,
        }
    }

    /// Rebinds `mlp` to existing variables, weight then bias per layer.
    pub fn from_vars(mlp: &Mlp, vars: &[Var<'t>]) -> Self {
        assert_eq!(vars.len(), 2 * mlp.layers.len(), "one weight and one bias per layer");
        Self {
            layers: vars.chunks(2).map(|v| (v[0], v[1])).collect(),
            dropout: mlp.dropout,
        }
    }

    pub fn vars(&self) -> Vec<Var<'t>> {
        self.layers.iter().flat_map(|(w, b)| [*w, *b]).collect()
    }

    /// `x` is `1 × in`; returns `1 × out` logits.
    pub fn forward(&self, x: Var<'t>, rng: &mut Rng, train: bool) -> Result<Var<'t>> {
        let mut h = x;
        let last = self.layers.len().saturating_sub(1);
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = h.matmul(*w)?.add_row(*b)?;
            if i < last {
                h = h.elu()?.dropout(self.dropout, rng, train)?;
            }
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let probabilities = logits.iter().map(|&x| sigmoid(x)).collect();
        Self { logits, probabilities }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy over the labels, computed from logits as
/// `max(x, 0) − x·y + ln(1 + e^{−|x|})`.
pub fn bce_loss(pred: &Prediction, labels: &Labels) -> f64 {
    let y = labels.to_f64();
    let total: f64 = pred
        .logits
        .iter()
        .zip(y)
        .map(|(&x, y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
        .sum();
    total / pred.logits.len() as f64
}

/// Exact number of scalars in the encoder and the head, biases included.
pub fn count_parameters(stack: &GatStack, mlp: &Mlp) -> usize {
    stack.parameter_count() + mlp.parameter_count()
}

/// Closed form of [`count_parameters`] for an encoder of `n_layers` layers of
/// width `hidden` over `input`-dimensional features and the standard head.
pub fn parameter_count_formula(input: usize, hidden: usize, n_layers: usize) -> usize {
    if n_layers == 0 {
        return 0;
    }
    let gat = input * hidden + 2 * hidden + (n_layers - 1) * (hidden * hidden + 2 * hidden);
    let mut dims = vec![hidden];
    dims.extend_from_slice(&MLP_HIDDEN);
    dims.push(NUM_LABELS);
    let mlp: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    gat + mlp
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphClassifier {
    pub gat: GatStack,
    pub mlp: Mlp,
}

pub struct BoundClassifier<'t> {
    pub gat: BoundStack<'t>,
    pub mlp: BoundMlp<'t>,
}

impl<'t> BoundClassifier<'t> {
    /// Rebinds `model` to existing variables in [`Parameters::tensors`] order.
    pub fn from_vars(model: &GraphClassifier, vars: &[Var<'t>]) -> Self {
        let n = 2 * model.gat.layers.len();
        Self {
            gat: BoundStack::from_vars(&model.gat, &vars[..n]),
            mlp: BoundMlp::from_vars(&model.mlp, &vars[n..]),
        }
    }

    pub fn vars(&self) -> Vec<Var<'t>> {
        let mut v = self.gat.vars();
        v.extend(self.mlp.vars());
        v
    }

    /// Max-pooled graph representation, `1 × F'`.
    pub fn pooled(&self, tape: &'t Tape, g: &ReportGraph, rng: &mut Rng, train: bool) -> Result<Var<'t>> {
        let encoded = self.gat.encode(tape, g, rng, train)?;
        Ok(encoded.max_pool(0)?)
    }

    pub fn logits(&self, tape: &'t Tape, g: &ReportGraph, rng: &mut Rng, train: bool) -> Result<Var<'t>> {
        let pooled = self.pooled(tape, g, rng, train)?;
        self.mlp.forward(pooled, rng, train)
    }
}

impl GraphClassifier {
    pub fn new(input: usize, hidden: usize, n_layers: usize, rng: &mut Rng) -> Self {
        let gat = GatStack::new(input, hidden, n_layers, rng);
        let mlp = Mlp::new(hidden, rng);
        Self { gat, mlp }
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundClassifier<'t> {
        BoundClassifier {
            gat: BoundStack::bind(&self.gat, tape),
            mlp: BoundMlp::bind(&self.mlp, tape),
        }
    }

    pub fn classify_report(&self, g: &ReportGraph, rng: &mut Rng, train: bool) -> Result<Prediction> {
        let tape = Tape::new();
        let logits = self.bind(&tape).logits(&tape, g, rng, train)?;
        let data = logits.value().data().to_vec();
        Ok(Prediction::from_logits(data))
    }

    /// Training-mode loss and its gradient with respect to every parameter,
    /// in [`Parameters::tensors`] order.
    pub fn loss_and_grads(&self, g: &ReportGraph, labels: &Labels, rng: &mut Rng) -> Result<(f64, Vec<Tensor>)> {
        let tape = Tape::new();
        let bound = self.bind(&tape);
        let loss = bound.logits(&tape, g, rng, true)?.bce_with_logits(&labels.to_f64())?;
        let value = loss.value().item()?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("classification loss {value}")));
        }
        let mut grads = tape.backward(loss)?;
        Ok((value, bound.vars().into_iter().map(|v| grads.take(v)).collect()))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        ckpt.set_meta("model", "graph-classifier");
        ckpt.set_meta("input_dim", self.gat.input_dim());
        ckpt.set_meta("hidden", self.gat.hidden_size());
        ckpt.set_meta("n_layers", self.gat.n_layers());
        ckpt.set_meta("dropout", self.gat.dropout);
        ckpt.set_meta("leaky_slope", self.gat.layers.first().map_or(0.2, |l| l.leaky_slope));
        self.write_tensors(&mut ckpt);
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.meta("model") != Some("graph-classifier") {
            return Err(Error::Invalid("checkpoint does not hold a graph classifier".into()));
        }
        let input = meta_usize(ckpt, "input_dim")?;
        let hidden = meta_usize(ckpt, "hidden")?;
        let n_layers = meta_usize(ckpt, "n_layers")?;
        let mut model = Self::new(input, hidden, n_layers, &mut kg_tensor::rng::stream(0, &[]));
        let dropout = meta_f64(ckpt, "dropout")?;
        let slope = meta_f64(ckpt, "leaky_slope")?;
        model.gat.dropout = dropout;
        model.mlp.dropout = dropout;
        model.gat.layers.iter_mut().for_each(|l| l.leaky_slope = slope);
        model.read_tensors(ckpt)?;
        Ok(model)
    }
}

impl Parameters for GraphClassifier {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.gat.tensors();
        v.extend(self.mlp.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.gat.tensors_mut();
        v.extend(self.mlp.tensors_mut());
        v
    }

    fn param_names(&self) -> Vec<String> {
        let mut v = self.gat.param_names("");
        v.extend(self.mlp.param_names(""));
        v
    }
}
