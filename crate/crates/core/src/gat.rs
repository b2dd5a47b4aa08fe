//! Stacked single-head graph attention.
//!
//! For node `p` with neighbourhood `N(p)` (self-loop included):
//!
//! ```text
//! e_pq  = LeakyReLU(a · [W h_p ‖ W h_q])
//! α_pq  = softmax_q∈N(p)(e_pq)
//! h'_p  = ELU(Σ_q α_pq W h_q)
//! ```
//!
//! The weight matrix is stored input-major (`F × F'`) so features multiply on
//! the left, and the attention vector `a` is a `2F' × 1` column whose first
//! half scores the attending node and second half the attended one.

use rand::Rng as _;

use kg_tensor::rng::Rng;
use kg_tensor::{Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::graph::ReportGraph;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    /// `F × F'`.
    pub weight: Tensor,
    /// `2F' × 1`.
    pub attention: Tensor,
    pub leaky_slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatStack {
    pub layers: Vec<GatLayer>,
    /// Feature dropout applied to every layer output during training.
    pub dropout: f64,
    /// Also drop attention coefficients during training.
    pub attn_dropout: bool,
}

/// Glorot-uniform initialisation.
pub fn glorot(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(vec![rows, cols], data).expect("sized")
}

impl GatLayer {
    pub fn new(input: usize, output: usize, rng: &mut Rng) -> Self {
        Self {
            weight: glorot(input, output, input, output, rng),
            attention: glorot(2 * output, 1, 2 * output, 1, rng),
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    /// Builds a layer from explicit tensors, checking `attention` is `2F' × 1`.
    pub fn from_parts(weight: Tensor, attention: Tensor, leaky_slope: f64) -> Result<Self> {
        let (_, out) = weight.dims2()?;
        if attention.shape() != [2 * out, 1] {
            return Err(Error::Invalid(format!(
                "attention vector must be {}x1 for hidden size {out}, got {:?}",
                2 * out,
                attention.shape()
            )));
        }
        Ok(Self {
            weight,
            attention,
            leaky_slope,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.attention.len()
    }

    /// Attention matrix `α` (`n × n`, zero off the neighbourhood) for node
    /// features `h` under `mask` (row-major, self-loops included).
    pub fn attention_scores(&self, features: &Tensor, mask: &[bool]) -> Result<Tensor> {
        let tape = Tape::new();
        let bound = BoundLayer::bind(self, &tape);
        let h = tape.constant(features.clone());
        let (alpha, _) = bound.attention(h, mask)?;
        let out = alpha.value().clone();
        Ok(out)
    }
}

/// Layer parameters recorded on a tape.
#[derive(Clone, Copy)]
pub struct BoundLayer<'t> {
    pub weight: Var<'t>,
    pub attention: Var<'t>,
    pub leaky_slope: f64,
}

impl<'t> BoundLayer<'t> {
    pub fn bind(layer: &GatLayer, tape: &'t Tape) -> Self {
        Self {
            weight: tape.param(&layer.weight),
            attention: tape.param(&layer.attention),
            leaky_slope: layer.leaky_slope,
        }
    }

    /// Returns `(α, W h, order)` with nodes rearranged into `order`, the
    /// canonical order of [`canonical_order`].
    fn attention_canonical(&self, h: Var<'t>, mask: &[bool]) -> Result<(Var<'t>, Var<'t>, Vec<usize>)> {
        let tape = h.tape();
        let n = h.shape()[0];
        if mask.len() != n * n {
            return Err(Error::Invalid(format!("mask has {} entries for {n} nodes", mask.len())));
        }
        let order = canonical_order(&h.value());
        let mask: Vec<bool> = order
            .iter()
            .flat_map(|&p| order.iter().map(move |&q| mask[p * n + q]))
            .collect();
        let wh = h.gather_rows(&order)?.matmul(self.weight)?;
        let out = self.weight.shape()[1];
        let src: Vec<usize> = (0..out).collect();
        let dst: Vec<usize> = (out..2 * out).collect();
        let s_src = wh.matmul(self.attention.gather_rows(&src)?)?;
        let s_dst = wh.matmul(self.attention.gather_rows(&dst)?)?;
        // e[p][q] = s_src[p] + s_dst[q], written as two rank-one products.
        let ones_row = tape.constant(Tensor::full(vec![1, n], 1.0));
        let ones_col = tape.constant(Tensor::full(vec![n, 1], 1.0));
        let logits = s_src.matmul(ones_row)?.add(ones_col.matmul(s_dst.transpose()?)?)?;
        let alpha = logits.leaky_relu(self.leaky_slope)?.softmax(1, Some(&mask))?;
        Ok((alpha, wh, order))
    }

    /// Returns `(α, W h)` in the node order of `h`.
    pub fn attention(&self, h: Var<'t>, mask: &[bool]) -> Result<(Var<'t>, Var<'t>)> {
        let (alpha, wh, order) = self.attention_canonical(h, mask)?;
        let inv = inverse(&order);
        let alpha = alpha.gather_rows(&inv)?.transpose()?.gather_rows(&inv)?.transpose()?;
        Ok((alpha, wh.gather_rows(&inv)?))
    }

    pub fn forward(
        &self,
        h: Var<'t>,
        mask: &[bool],
        dropout: f64,
        attn_dropout: bool,
        rng: &mut Rng,
        train: bool,
    ) -> Result<Var<'t>> {
        let (mut alpha, wh, order) = self.attention_canonical(h, mask)?;
        if attn_dropout {
            alpha = alpha.dropout(dropout, rng, train)?;
        }
        let out = alpha.matmul(wh)?.elu()?.gather_rows(&inverse(&order))?;
        Ok(out.dropout(dropout, rng, train)?)
    }
}

/// Node indices sorted by feature row, lexicographically.
///
/// Sums over neighbourhoods run in this order, so relabelling the nodes of a
/// graph relabels the output rows without changing a single bit. Rows that
/// compare equal are bitwise identical and contribute identical terms, so the
/// tie order does not matter.
pub fn canonical_order(h: &Tensor) -> Vec<usize> {
    let n = h.shape()[0];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        h.row_slice(a)
            .iter()
            .zip(h.row_slice(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

fn inverse(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (i, &p) in order.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

#[derive(Clone)]
pub struct BoundStack<'t> {
    pub layers: Vec<BoundLayer<'t>>,
    pub dropout: f64,
    pub attn_dropout: bool,
}

impl<'t> BoundStack<'t> {
    pub fn bind(stack: &GatStack, tape: &'t Tape) -> Self {
        Self {
            layers: stack.layers.iter().map(|l| BoundLayer::bind(l, tape)).collect(),
            dropout: stack.dropout,
            attn_dropout: stack.attn_dropout,
        }
    }

    /// Rebinds `stack` to existing variables given in [`GatStack::tensors`] order.
    pub fn from_vars(stack: &GatStack, vars: &[Var<'t>]) -> Self {
        assert_eq!(vars.len(), 2 * stack.layers.len(), "one weight and one attention vector per layer");
        Self {
            layers: stack
                .layers
                .iter()
                .zip(vars.chunks(2))
                .map(|(l, v)| BoundLayer {
                    weight: v[0],
                    attention: v[1],
                    leaky_slope: l.leaky_slope,
                })
                .collect(),
            dropout: stack.dropout,
            attn_dropout: stack.attn_dropout,
        }
    }

    pub fn vars(&self) -> Vec<Var<'t>> {
        self.layers.iter().flat_map(|l| [l.weight, l.attention]).collect()
    }

    /// Encodes every node of `graph`; `n × F'`.
    pub fn encode(&self, tape: &'t Tape, graph: &ReportGraph, rng: &mut Rng, train: bool) -> Result<Var<'t>> {
        if graph.node_count() == 0 {
            return Err(Error::EmptyGraph);
        }
        if let Some(first) = self.layers.first() {
            let expected = first.weight.shape()[0];
            if graph.feature_dim() != expected {
                return Err(Error::Invalid(format!(
                    "graph features have dimension {} but the first layer expects {expected}",
                    graph.feature_dim()
                )));
            }
        }
        let mask = graph.attention_mask();
        let mut h = tape.constant(graph.features.clone());
        for layer in &self.layers {
            h = layer.forward(h, &mask, self.dropout, self.attn_dropout, rng, train)?;
        }
        Ok(h)
    }
}

impl GatStack {
    /// `n_layers` layers: `input → hidden`, then `hidden → hidden`.
    pub fn new(input: usize, hidden: usize, n_layers: usize, rng: &mut Rng) -> Self {
        let layers = (0..n_layers)
            .map(|i| GatLayer::new(if i == 0 { input } else { hidden }, hidden, rng))
            .collect();
        Self {
            layers,
            dropout: DEFAULT_DROPOUT,
            attn_dropout: false,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.layers.last().map_or(0, GatLayer::output_dim)
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, GatLayer::input_dim)
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(GatLayer::parameter_count).sum()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.attention]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.attention])
            .collect()
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("{prefix}gat.{i}.weight"), format!("{prefix}gat.{i}.attention")])
            .collect()
    }
}

/// Encoded node representations `n × F'` for `graph`.
pub fn encode_graph(stack: &GatStack, graph: &ReportGraph, rng: &mut Rng, train: bool) -> Result<Tensor> {
    let tape = Tape::new();
    let bound = BoundStack::bind(stack, &tape);
    let out = bound.encode(&tape, graph, rng, train)?;
    let v = out.value().clone();
    Ok(v)
}

/// One layer applied to raw features (useful for inspection and tests).
pub fn gat_layer_forward(
    layer: &GatLayer,
    features: &Tensor,
    mask: &[bool],
    dropout: f64,
    rng: &mut Rng,
    train: bool,
) -> Result<Tensor> {
    let tape = Tape::new();
    let bound = BoundLayer::bind(layer, &tape);
    let h = tape.constant(features.clone());
    let out = bound.forward(h, mask, dropout, false, rng, train)?;
    let v = out.value().clone();
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::fixture_graph;
    use kg_tensor::rng::stream;

    fn path_mask() -> Vec<bool> {
        // 0 - 1 - 2 with self-loops
        vec![true, true, false, true, true, true, false, true, true]
    }

    fn leaky(x: f64, s: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            s * x
        }
    }

    /// Straight-line evaluation of the attention formula, one pair at a time.
    fn oracle_alpha(w: &[[f64; 2]; 3], a: &[f64; 4], h: &[[f64; 3]; 3], mask: &[bool]) -> [[f64; 3]; 3] {
        let mut wh = [[0.0; 2]; 3];
        for p in 0..3 {
            for o in 0..2 {
                wh[p][o] = (0..3).map(|i| h[p][i] * w[i][o]).sum();
            }
        }
        let mut alpha = [[0.0; 3]; 3];
        for p in 0..3 {
            let mut e = [f64::NEG_INFINITY; 3];
            for q in 0..3 {
                if mask[p * 3 + q] {
                    let cat = [wh[p][0], wh[p][1], wh[q][0], wh[q][1]];
                    let z: f64 = cat.iter().zip(a).map(|(x, y)| x * y).sum();
                    e[q] = leaky(z, 0.2);
                }
            }
            let denom: f64 = e.iter().filter(|v| v.is_finite()).map(|v| v.exp()).sum();
            for q in 0..3 {
                if e[q].is_finite() {
                    alpha[p][q] = e[q].exp() / denom;
                }
            }
        }
        alpha
    }

    #[test]
    fn path_graph_attention_matches_oracle() {
        let w = [[0.5, -1.0], [0.25, 0.75], [-0.5, 0.3]];
        let a = [0.9, -0.4, 0.2, 1.1];
        let h = [[1.0, 0.0, 2.0], [-1.0, 0.5, 0.0], [0.3, 0.3, -0.7]];
        let layer = GatLayer::from_parts(
            Tensor::from_rows(&w.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap(),
            Tensor::new(vec![4, 1], a.to_vec()).unwrap(),
            0.2,
        )
        .unwrap();
        let feats = Tensor::from_rows(&h.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        let got = layer.attention_scores(&feats, &path_mask()).unwrap();
        let want = oracle_alpha(&w, &a, &h, &path_mask());
        for p in 0..3 {
            for q in 0..3 {
                assert!((got.at(p, q) - want[p][q]).abs() < 1e-12, "{p},{q}");
            }
        }
        assert_eq!(got.at(0, 2), 0.0);
    }

    #[test]
    fn zero_attention_vector_gives_uniform_neighbourhoods() {
        let mut rng = stream(1, &[]);
        let mut layer = GatLayer::new(3, 4, &mut rng);
        layer.attention = Tensor::zeros(vec![8, 1]);
        let feats = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 0.0], vec![5.0, 5.0, 5.0]]).unwrap();
        let alpha = layer.attention_scores(&feats, &path_mask()).unwrap();
        assert!((alpha.at(0, 0) - 0.5).abs() < 1e-15);
        assert!((alpha.at(1, 2) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_node_attends_to_itself() {
        let mut rng = stream(2, &[]);
        let layer = GatLayer::new(3, 4, &mut rng);
        let alpha = layer.attention_scores(&Tensor::row(vec![0.1, 0.2, 0.3]), &[true]).unwrap();
        assert_eq!(alpha.data(), &[1.0]);
    }

    #[test]
    fn two_node_clique_averages_positive_features() {
        // W = I, a = 0 ⇒ α = ½ everywhere, ELU is the identity on positives.
        let layer = GatLayer::from_parts(
            Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            Tensor::zeros(vec![4, 1]),
            0.2,
        )
        .unwrap();
        let feats = Tensor::from_rows(&[vec![1.0, 3.0], vec![2.0, 5.0]]).unwrap();
        let mut rng = stream(0, &[]);
        let out = gat_layer_forward(&layer, &feats, &[true; 4], 0.5, &mut rng, false).unwrap();
        assert_eq!(out.data(), &[1.5, 4.0, 1.5, 4.0]);
    }

    #[test]
    fn zero_features_give_zero_output() {
        let mut rng = stream(3, &[]);
        let layer = GatLayer::new(3, 5, &mut rng);
        let out = gat_layer_forward(&layer, &Tensor::zeros(vec![2, 3]), &[true; 4], 0.5, &mut rng, false).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let mut rng = stream(4, &[]);
        let stack = GatStack::new(3, 8, 2, &mut rng);
        let g = fixture_graph();
        let a = encode_graph(&stack, &g, &mut stream(10, &[]), false).unwrap();
        let b = encode_graph(&stack, &g, &mut stream(11, &[]), false).unwrap();
        assert_eq!(a, b);
        let t = encode_graph(&stack, &g, &mut stream(10, &[]), true).unwrap();
        assert_ne!(a, t);
    }

    #[test]
    fn one_layer_stack_equals_layer_forward() {
        let mut rng = stream(5, &[]);
        let stack = GatStack::new(3, 6, 1, &mut rng);
        let g = fixture_graph();
        let a = encode_graph(&stack, &g, &mut stream(0, &[]), false).unwrap();
        let b = gat_layer_forward(&stack.layers[0], &g.features, &g.attention_mask(), 0.5, &mut stream(0, &[]), false)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn three_layers_hidden_1024_shape() {
        let mut rng = stream(6, &[]);
        let stack = GatStack::new(3, 1024, 3, &mut rng);
        let out = encode_graph(&stack, &fixture_graph(), &mut rng, false).unwrap();
        assert_eq!(out.shape(), &[6, 1024]);
        assert!(out.all_finite());
    }

    #[test]
    fn attention_vector_shape_is_checked() {
        let r = GatLayer::from_parts(Tensor::zeros(vec![3, 4]), Tensor::zeros(vec![4, 1]), 0.2);
        assert!(r.is_err());
    }

    #[test]
    fn feature_dim_mismatch() {
        let mut rng = stream(7, &[]);
        let stack = GatStack::new(5, 4, 1, &mut rng);
        assert!(encode_graph(&stack, &fixture_graph(), &mut rng, false).is_err());
    }
}
