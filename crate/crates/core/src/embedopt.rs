//! Target-embedding optimization, embedding interpolation and the model-finetuning baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::backends::{require_embedding_grad, Backend, Denoiser, DenoiserNet};
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::schedule::{forward_diffuse, NoiseSchedule};

pub const DEFAULT_ANALYTIC_LR: f64 = 1e-2;
pub const DEFAULT_NETWORK_LR: f64 = 1e-3;
pub const DEFAULT_ITERATIONS: usize = 200;

/// Seeded stream of `(t, eps)` draws with `t ~ Uniform{1..T}` and `eps ~ N(0, I)`.
#[derive(Debug, Clone)]
pub struct NoiseDraws {
    rng: ChaCha8Rng,
    dim: usize,
    timesteps: usize,
}

impl NoiseDraws {
    pub fn new(seed: u64, dim: usize, timesteps: usize) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dim,
            timesteps,
        }
    }
}

impl Iterator for NoiseDraws {
    type Item = (usize, Vec<f64>);

    fn next(&mut self) -> Option<Self::Item> {
        let t = self.rng.random_range(1..=self.timesteps);
        let eps = (0..self.dim).map(|_| self.rng.sample::<f64, _>(StandardNormal)).collect();
        Some((t, eps))
    }
}

/// `||eps - f(z_t, t, e)||^2` for one fixed draw.
pub fn denoising_loss(
    x: &[f64],
    e: &Embedding,
    t: usize,
    eps: &[f64],
    backend: &dyn Denoiser,
    sched: &NoiseSchedule,
) -> Result<f64> {
    let z_t = forward_diffuse(x, t, eps, sched)?;
    let f = backend.eps(&z_t, t, e, sched)?;
    Ok(eps.iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// [`denoising_loss`] and its gradient with respect to the token matrix.
pub fn denoising_loss_grad(
    x: &[f64],
    e: &Embedding,
    t: usize,
    eps: &[f64],
    backend: &dyn Denoiser,
    sched: &NoiseSchedule,
) -> Result<(f64, Vec<f64>)> {
    let z_t = forward_diffuse(x, t, eps, sched)?;
    let f = backend.eps(&z_t, t, e, sched)?;
    let loss = eps.iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum();
    let upstream: Vec<f64> = eps.iter().zip(&f).map(|(a, b)| -2.0 * (a - b)).collect();
    let grad = backend.eps_vjp_embedding(&z_t, t, e, sched, &upstream)?;
    Ok((loss, grad))
}

/// Mean [`denoising_loss`] over a fixed set of draws.
pub fn mean_denoising_loss(
    x: &[f64],
    e: &Embedding,
    draws: &[(usize, Vec<f64>)],
    backend: &dyn Denoiser,
    sched: &NoiseSchedule,
) -> Result<f64> {
    let mut total = 0.0;
    for (t, eps) in draws {
        total += denoising_loss(x, e, *t, eps, backend, sched)?;
    }
    Ok(total / draws.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub iterations: usize,
    pub lr: f64,
    pub seed: u64,
    /// Draws averaged per update.
    pub batch: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            lr: DEFAULT_ANALYTIC_LR,
            seed: 0,
            batch: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationReport {
    pub e_opt: Embedding,
    /// Loss of each iteration's draws, measured before that iteration's update.
    pub loss_curve: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
    pub lr: f64,
}

/// Fits the target embedding to `x_input` with the backend frozen.
pub fn optimize_embedding(
    x_input: &[f64],
    e_tgt: &Embedding,
    backend: &dyn Denoiser,
    sched: &NoiseSchedule,
    cfg: &OptimizeConfig,
) -> Result<OptimizationReport> {
    require_embedding_grad(backend)?;
    if x_input.len() != backend.data_dim() {
        return Err(Error::invalid(format!(
            "input has dimension {}, backend expects {}",
            x_input.len(),
            backend.data_dim()
        )));
    }
    if cfg.batch == 0 {
        return Err(Error::invalid("optimization batch must be positive"));
    }
    let mut e = e_tgt.clone();
    let mut draws = NoiseDraws::new(cfg.seed, x_input.len(), sched.timesteps());
    let mut opt = Adam::new(e.data().len(), cfg.lr);
    let mut loss_curve = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let mut loss = 0.0;
        let mut grad = vec![0.0; e.data().len()];
        for (t, eps) in draws.by_ref().take(cfg.batch) {
            let (l, g) = denoising_loss_grad(x_input, &e, t, &eps, backend, sched)?;
            loss += l / cfg.batch as f64;
            grad.iter_mut().zip(g).for_each(|(a, b)| *a += b / cfg.batch as f64);
        }
        if !loss.is_finite() {
            return Err(Error::NumericDivergence {
                step: loss_curve.len(),
                t: 0,
                detail: "embedding loss is not finite".into(),
            });
        }
        loss_curve.push(loss);
        e.update(|p| opt.step(p, &grad));
    }
    Ok(OptimizationReport {
        e_opt: e,
        loss_curve,
        iterations: cfg.iterations,
        seed: cfg.seed,
        lr: cfg.lr,
    })
}

/// `alpha * e_tgt + (1 - alpha) * e_opt`. Alpha is not clamped.
pub fn interpolate(e_tgt: &Embedding, e_opt: &Embedding, alpha: f64) -> Result<Embedding> {
    if e_tgt.shape() != e_opt.shape() {
        return Err(Error::invalid(format!(
            "cannot interpolate embeddings of shape {:?} and {:?}",
            e_tgt.shape(),
            e_opt.shape()
        )));
    }
    if !alpha.is_finite() {
        return Err(Error::invalid(format!("interpolation ratio must be finite, got {alpha}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        log::warn!("interpolation ratio {alpha} extrapolates beyond [0, 1]");
    }
    let data = e_tgt
        .data()
        .iter()
        .zip(e_opt.data())
        .map(|(t, o)| alpha * t + (1.0 - alpha) * o)
        .collect();
    let (rows, dim) = e_tgt.shape();
    Embedding::from_rows(rows, dim, data)
}

/// Finetunes network weights on a single input with the embedding frozen.
/// The input network is left untouched; a new snapshot is returned with the loss curve.
pub fn imagic_finetune(
    backend: &Backend,
    x_input: &[f64],
    e_opt: &Embedding,
    sched: &NoiseSchedule,
    cfg: &OptimizeConfig,
) -> Result<(DenoiserNet, Vec<f64>)> {
    let net = backend.as_network()?;
    if x_input.len() != net.data_dim() {
        return Err(Error::invalid("input dimension does not match the network"));
    }
    let mut tuned = net.clone();
    let mut opt = Adam::new(tuned.param_count(), cfg.lr);
    let mut draws = NoiseDraws::new(cfg.seed, x_input.len(), sched.timesteps());
    let mut losses = Vec::with_capacity(cfg.iterations);
    let batch = cfg.batch.max(1);
    for _ in 0..cfg.iterations {
        let mut grad = vec![0.0; tuned.param_count()];
        let mut loss = 0.0;
        for (t, eps) in draws.by_ref().take(batch) {
            let z_t = forward_diffuse(x_input, t, &eps, sched)?;
            tuned.forward_backward(
                &z_t,
                t,
                e_opt.pooled(),
                |out| {
                    out.iter()
                        .zip(&eps)
                        .map(|(f, e)| {
                            loss += (e - f) * (e - f) / batch as f64;
                            -2.0 * (e - f) / batch as f64
                        })
                        .collect()
                },
                Some(&mut grad),
            );
        }
        losses.push(loss);
        opt.step(tuned.params_mut(), &grad);
    }
    Ok((tuned, losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{GmmSpec, NetShape};

    fn emb(v: &[f64]) -> Embedding {
        Embedding::from_rows(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn interpolation_endpoints_are_exact() {
        let a = emb(&[0.3, -1.7, 2.2]);
        let b = emb(&[1.1, 0.05, -0.4]);
        assert_eq!(interpolate(&a, &b, 0.0).unwrap(), b);
        assert_eq!(interpolate(&a, &b, 1.0).unwrap(), a);
        let mid = interpolate(&emb(&[2.0, 0.0]), &emb(&[0.0, 2.0]), 0.5).unwrap();
        assert_eq!(mid.data(), &[1.0, 1.0]);
    }

    #[test]
    fn interpolation_rejects_shape_mismatch() {
        assert!(interpolate(&emb(&[1.0, 2.0]), &emb(&[1.0]), 0.5).is_err());
        assert!(interpolate(&emb(&[1.0]), &emb(&[1.0]), f64::NAN).is_err());
        assert!(interpolate(&emb(&[1.0]), &emb(&[3.0]), 1.5).is_ok());
    }

    #[test]
    fn zero_iterations_return_target() {
        let sched = NoiseSchedule::default();
        let g = GmmSpec::standard_normal(2, 3);
        let e = emb(&[0.1, 0.2, 0.3]);
        let cfg = OptimizeConfig {
            iterations: 0,
            ..Default::default()
        };
        let rep = optimize_embedding(&[1.0, 1.0], &e, &g, &sched, &cfg).unwrap();
        assert_eq!(rep.e_opt, e);
        assert!(rep.loss_curve.is_empty());
    }

    #[test]
    fn finetune_rejects_analytic_backend() {
        let sched = NoiseSchedule::default();
        let b = Backend::Analytic(GmmSpec::standard_normal(2, 3));
        let err = imagic_finetune(&b, &[0.0, 0.0], &emb(&[0.0; 3]), &sched, &OptimizeConfig::default());
        assert!(matches!(err, Err(Error::UnsupportedBackend(_))));
    }

    #[test]
    fn finetune_zero_iterations_is_identity() {
        let sched = NoiseSchedule::default();
        let shape = NetShape {
            data_dim: 2,
            freq_pairs: 2,
            embed_dim: 3,
            hidden: 8,
        };
        let net = DenoiserNet::init(shape, 3).unwrap();
        let b = Backend::Network(net.clone());
        let cfg = OptimizeConfig {
            iterations: 0,
            ..Default::default()
        };
        let (tuned, losses) = imagic_finetune(&b, &[0.5, 0.5], &emb(&[0.1, 0.0, 0.0]), &sched, &cfg).unwrap();
        assert_eq!(tuned, net);
        assert!(losses.is_empty());
    }

    #[test]
    fn draws_are_seeded() {
        let a: Vec<_> = NoiseDraws::new(4, 2, 1000).take(5).collect();
        let b: Vec<_> = NoiseDraws::new(4, 2, 1000).take(5).collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|(t, e)| (1..=1000).contains(t) && e.len() == 2));
    }
}
