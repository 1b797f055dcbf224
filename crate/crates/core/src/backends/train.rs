use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::net::DenoiserNet;
use crate::embedding::PromptVocabulary;
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::schedule::{forward_diffuse, NoiseSchedule};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub x: Vec<f64>,
    pub prompt: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub batch_size: usize,
    /// Probability of replacing the prompt with the null token, so the
    /// unconditional branch of guidance is trained too.
    pub cond_drop: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-3,
            seed: 0,
            batch_size: 32,
            cond_drop: 0.1,
        }
    }
}

/// Minimizes `E ||eps - f(z_t, t, e)||^2` over network weights and the token table jointly.
///
/// Returns the trained snapshot and the per-epoch mean loss. The null row of the
/// table never receives gradient and stays zero.
pub fn train_denoiser(
    net: &DenoiserNet,
    vocab: &PromptVocabulary,
    dataset: &[TrainingSample],
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<(DenoiserNet, PromptVocabulary, Vec<f64>)> {
    if dataset.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if vocab.dim() != net.shape().embed_dim {
        return Err(Error::invalid("vocabulary and network embedding dimensions differ"));
    }
    let dim = net.shape().data_dim;
    let mut token_ids = Vec::with_capacity(dataset.len());
    for s in dataset {
        if s.x.len() != dim {
            return Err(Error::invalid(format!(
                "sample has dimension {}, network expects {dim}",
                s.x.len()
            )));
        }
        if s.prompt.is_empty() {
            return Err(Error::invalid("training prompt is empty"));
        }
        token_ids.push(vocab.indices(&s.prompt)?);
    }

    let mut net = net.clone();
    let mut vocab = vocab.clone();
    let mut losses = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 {
        return Ok((net, vocab, losses));
    }

    let d = vocab.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net_opt = Adam::new(net.param_count(), cfg.lr);
    let mut table_opt = Adam::new(vocab.table().len(), cfg.lr);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut param_grad = vec![0.0; net.param_count()];
    let mut table_grad = vec![0.0; vocab.table().len()];
    let timesteps = sched.timesteps();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            param_grad.iter_mut().for_each(|g| *g = 0.0);
            table_grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let t = rng.random_range(1..=timesteps);
                let eps: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let dropped = rng.random::<f64>() < cfg.cond_drop;
                let ids: &[usize] = if dropped { &[0] } else { &token_ids[i] };
                let mut pooled = vec![0.0; d];
                for &id in ids {
                    for (p, v) in pooled.iter_mut().zip(vocab.row(id)) {
                        *p += v / ids.len() as f64;
                    }
                }
                let z_t = forward_diffuse(&dataset[i].x, t, &eps, sched)?;
                let mut loss = 0.0;
                let (_, pooled_grad) = net.forward_backward(
                    &z_t,
                    t,
                    &pooled,
                    |out| {
                        out.iter()
                            .zip(&eps)
                            .map(|(f, e)| {
                                loss += (e - f) * (e - f);
                                -2.0 * (e - f) * scale
                            })
                            .collect()
                    },
                    Some(&mut param_grad),
                );
                epoch_loss += loss;
                for &id in ids.iter().filter(|&&id| id != 0) {
                    let row = &mut table_grad[id * d..(id + 1) * d];
                    for (g, pg) in row.iter_mut().zip(&pooled_grad) {
                        *g += pg / ids.len() as f64;
                    }
                }
            }
            net_opt.step(net.params_mut(), &param_grad);
            table_opt.step(vocab.table_mut(), &table_grad);
        }
        let mean = epoch_loss / dataset.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NumericDivergence {
                step: losses.len(),
                t: 0,
                detail: "training loss is not finite".into(),
            });
        }
        losses.push(mean);
    }
    Ok((net, vocab, losses))
}
