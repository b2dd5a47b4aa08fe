#![allow(dead_code)]

use report_kg::corpus::Corpus;
use report_kg::generator::{generate_corpus, GeneratorSpec};
use report_kg::graph::{AblationConfig, ReportGraph};
use report_kg::pipeline::Pipeline;
use report_kg::sample;
use report_kg::tensor::rng::Rng;
use report_kg::tensor::Tensor;
use rand::Rng as _;
use rand_distr::StandardNormal;

pub fn corpus(n: usize, seed: u64, parallel: bool) -> Corpus {
    let spec = GeneratorSpec {
        n_reports: n,
        seed,
        parallel,
        ..GeneratorSpec::default()
    };
    generate_corpus(&sample::ontology(), &spec).unwrap()
}

pub fn graphs(n: usize, seed: u64) -> Vec<ReportGraph> {
    let o = sample::ontology();
    let e = sample::embeddings();
    let p = Pipeline::new(&o, &e, AblationConfig::FULL);
    corpus(n, seed, false).iter().map(|r| p.graph(r).unwrap()).collect()
}

pub fn randn(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

pub fn random_permutation(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.random_range(0..=i));
    }
    p
}
