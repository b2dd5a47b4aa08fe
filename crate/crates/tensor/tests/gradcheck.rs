use kg_tensor::gradcheck::check;
use kg_tensor::rng::stream;
use kg_tensor::{Result, Tape, Tensor, Var};
use rand::Rng;
use rand_distr::StandardNormal;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn randn(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

/// Weighted sum with fixed random weights, so every output element matters.
fn reduce<'t>(tape: &'t Tape, y: Var<'t>, seed: u64) -> Result<Var<'t>> {
    let mut rng = stream(seed, &[99]);
    let w = tape.constant(randn(&mut rng, &y.shape()));
    y.mul(w)?.sum()
}

fn assert_grad<F>(name: &str, inputs: Vec<Tensor>, f: F)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let r = check(&inputs, EPS, f).unwrap();
    assert!(
        r.max_rel_err <= TOL,
        "{name}: rel err {} (analytic {}, numeric {})",
        r.max_rel_err,
        r.analytic,
        r.numeric
    );
}

#[test]
fn every_primitive_matches_finite_differences() {
    for seed in 0..10u64 {
        let mut rng = stream(seed, &[1]);
        let (m, k, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
        let a = randn(&mut rng, &[m, k]);
        let b = randn(&mut rng, &[k, n]);
        let c = randn(&mut rng, &[m, k]);
        let row = randn(&mut rng, &[1, k]);
        let pos = Tensor::new(vec![m, k], a.data().iter().map(|v| v.abs() + 0.5).collect()).unwrap();

        assert_grad("matmul", vec![a.clone(), b.clone()], |t, v| reduce(t, v[0].matmul(v[1])?, seed));
        assert_grad("add", vec![a.clone(), c.clone()], |t, v| reduce(t, v[0].add(v[1])?, seed));
        assert_grad("sub", vec![a.clone(), c.clone()], |t, v| reduce(t, v[0].sub(v[1])?, seed));
        assert_grad("mul", vec![a.clone(), c.clone()], |t, v| reduce(t, v[0].mul(v[1])?, seed));
        assert_grad("scale", vec![a.clone()], |t, v| reduce(t, v[0].scale(-1.7)?.add_scalar(0.3)?, seed));
        assert_grad("add_row", vec![a.clone(), row.clone()], |t, v| reduce(t, v[0].add_row(v[1])?, seed));
        assert_grad("concat0", vec![a.clone(), c.clone()], |t, v| reduce(t, Var::concat(&[v[0], v[1]], 0)?, seed));
        assert_grad("concat1", vec![a.clone(), c.clone()], |t, v| reduce(t, Var::concat(&[v[0], v[1]], 1)?, seed));
        assert_grad("transpose", vec![a.clone()], |t, v| reduce(t, v[0].transpose()?, seed));
        assert_grad("exp", vec![a.clone()], |t, v| reduce(t, v[0].exp()?, seed));
        assert_grad("log", vec![pos.clone()], |t, v| reduce(t, v[0].log()?, seed));
        assert_grad("leaky_relu", vec![a.clone()], |t, v| reduce(t, v[0].leaky_relu(0.2)?, seed));
        assert_grad("elu", vec![a.clone()], |t, v| reduce(t, v[0].elu()?, seed));
        assert_grad("sigmoid", vec![a.clone()], |t, v| reduce(t, v[0].sigmoid()?, seed));
        assert_grad("clamp", vec![a.clone()], |t, v| reduce(t, v[0].clamp(-0.8, 0.9)?, seed));
        assert_grad("softmax1", vec![a.clone()], |t, v| reduce(t, v[0].softmax(1, None)?, seed));
        assert_grad("softmax0", vec![a.clone()], |t, v| reduce(t, v[0].softmax(0, None)?, seed));
        let mask: Vec<bool> = (0..m * k).map(|i| i % k == 0 || rng.random_bool(0.6)).collect();
        assert_grad("masked_softmax", vec![a.clone()], move |t, v| reduce(t, v[0].softmax(1, Some(&mask))?, seed));
        assert_grad("max_pool0", vec![a.clone()], |t, v| reduce(t, v[0].max_pool(0)?, seed));
        assert_grad("max_pool1", vec![a.clone()], |t, v| reduce(t, v[0].max_pool(1)?, seed));
        assert_grad("mean", vec![a.clone()], |_, v| v[0].mul(v[0])?.mean());
        assert_grad("sum", vec![a.clone()], |_, v| v[0].exp()?.sum());
        let idx: Vec<usize> = (0..m + 2).map(|_| rng.random_range(0..m)).collect();
        let idx2 = idx.clone();
        assert_grad("gather_rows", vec![a.clone()], move |t, v| reduce(t, v[0].gather_rows(&idx)?, seed));
        let scatter_in = randn(&mut rng, &[m + 2, k]);
        assert_grad("scatter_add_rows", vec![scatter_in], move |t, v| {
            reduce(t, v[0].scatter_add_rows(&idx2, m)?, seed)
        });
        let targets: Vec<f64> = (0..m * k).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect();
        assert_grad("bce", vec![a.clone()], move |_, v| v[0].bce_with_logits(&targets));
        let dseed = seed;
        assert_grad("dropout", vec![a.clone()], move |t, v| {
            let mut r = stream(dseed, &[5]);
            reduce(t, v[0].dropout(0.5, &mut r, true)?, dseed)
        });
    }
}

#[test]
fn composed_two_layer_network() {
    for seed in 0..5u64 {
        let mut rng = stream(seed, &[2]);
        let x = randn(&mut rng, &[4, 3]);
        let w1 = randn(&mut rng, &[3, 5]);
        let b1 = randn(&mut rng, &[1, 5]);
        let w2 = randn(&mut rng, &[5, 2]);
        let targets = vec![1.0, 0.0];
        assert_grad("mlp", vec![x, w1, b1, w2], move |_, v| {
            let h = v[0].matmul(v[1])?.add_row(v[2])?.elu()?;
            h.max_pool(0)?.matmul(v[3])?.bce_with_logits(&targets)
        });
    }
}
