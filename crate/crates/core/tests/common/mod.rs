//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use nrel_core::backends::{train_denoiser, Backend, DenoiserNet, NetShape, TrainConfig};
use nrel_core::data::{Dataset, ToyWorld};
use nrel_core::embedding::PromptVocabulary;
use nrel_core::schedule::NoiseSchedule;

/// Central differences of a scalar function.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Linear-beta cumulative product written out independently of the library.
pub fn oracle_alpha_bar(t: usize, total: usize) -> f64 {
    (1..=t)
        .map(|i| 1.0 - (1e-4 + (2e-2 - 1e-4) * (i - 1) as f64 / (total - 1) as f64))
        .product()
}

/// `log sum_k w_k N(z; c_k, v_k I)` evaluated directly.
pub fn oracle_mixture_logpdf(z: &[f64], weights: &[f64], centers: &[Vec<f64>], variances: &[f64]) -> f64 {
    let d = z.len() as f64;
    let terms: Vec<f64> = weights
        .iter()
        .zip(centers)
        .zip(variances)
        .map(|((w, c), v)| {
            let sq: f64 = z.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            w.ln() - 0.5 * sq / v - 0.5 * d * (2.0 * std::f64::consts::PI * v).ln()
        })
        .collect();
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn prompt(tokens: &[&str]) -> Vec<String> {
    tokens.iter().map(|s| s.to_string()).collect()
}

/// The canonical two-class toy world with its analytic backend.
pub fn toy() -> (ToyWorld, Backend, NoiseSchedule) {
    let world = ToyWorld::new(2, 2, 0).expect("toy world");
    let backend = Backend::Analytic(world.mixture.clone());
    (world, backend, NoiseSchedule::default())
}

/// A small network trained briefly on the two-class toy data.
pub fn small_trained_net() -> (Backend, PromptVocabulary, Dataset) {
    let ds = Dataset::generate(2, 2, 400, 0).expect("dataset");
    let world = ds.world().expect("world");
    let shape = NetShape {
        hidden: 32,
        ..NetShape::default()
    };
    let net = DenoiserNet::init(shape, 0).expect("init");
    let cfg = TrainConfig {
        epochs: 40,
        ..TrainConfig::default()
    };
    let (net, vocab, _) =
        train_denoiser(&net, &world.vocab, &ds.training_samples(), &NoiseSchedule::default(), &cfg).expect("train");
    (Backend::Network(net), vocab, ds)
}

/// The full-size network trained on 2000 toy points for 200 epochs.
pub fn trained_net() -> (Backend, PromptVocabulary, Dataset) {
    let ds = Dataset::generate(2, 2, 2000, 0).expect("dataset");
    let world = ds.world().expect("world");
    let net = DenoiserNet::init(NetShape::default(), 0).expect("init");
    let (net, vocab, _) = train_denoiser(
        &net,
        &world.vocab,
        &ds.training_samples(),
        &NoiseSchedule::default(),
        &TrainConfig::default(),
    )
    .expect("train");
    (Backend::Network(net), vocab, ds)
}
