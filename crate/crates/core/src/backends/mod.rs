//! Conditional noise predictors `f(z_t, t, e)`.

mod gmm;
mod net;
mod train;

pub use gmm::{GmmSpec, RING_RADIUS, RING_SIGMA, KEY_SCALE};
pub use net::{DenoiserNet, NetShape, ParamGrads};
pub use train::{train_denoiser, TrainConfig, TrainingSample};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;

/// An evaluatable noise predictor. Evaluation never mutates the model.
pub trait Denoiser: Sync {
    fn name(&self) -> &'static str;

    fn data_dim(&self) -> usize;

    fn embed_dim(&self) -> usize;

    fn eps(&self, z: &[f64], t: usize, e: &Embedding, sched: &NoiseSchedule) -> Result<Vec<f64>>;

    fn supports_embedding_grad(&self) -> bool {
        false
    }

    /// Vector-Jacobian product of [`Denoiser::eps`] with respect to the `N x d` token matrix.
    fn eps_vjp_embedding(
        &self,
        _z: &[f64],
        _t: usize,
        _e: &Embedding,
        _sched: &NoiseSchedule,
        _upstream: &[f64],
    ) -> Result<Vec<f64>> {
        Err(Error::UnsupportedBackend(format!(
            "{} backend has no embedding gradients",
            self.name()
        )))
    }
}

/// The two backends this crate ships.
#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Analytic(GmmSpec),
    Network(DenoiserNet),
}

impl Backend {
    pub fn as_network(&self) -> Result<&DenoiserNet> {
        match self {
            Backend::Network(net) => Ok(net),
            Backend::Analytic(_) => Err(Error::UnsupportedBackend(
                "analytic backend has no trainable parameters".into(),
            )),
        }
    }

    /// FNV-1a over the bit patterns of every model parameter.
    pub fn checksum(&self) -> u64 {
        let values: Box<dyn Iterator<Item = f64> + '_> = match self {
            Backend::Analytic(g) => Box::new(g.parameters()),
            Backend::Network(n) => Box::new(n.params().iter().copied()),
        };
        values.fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
            v.to_le_bytes()
                .iter()
                .fold(h, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3))
        })
    }
}

impl Denoiser for Backend {
    fn name(&self) -> &'static str {
        match self {
            Backend::Analytic(g) => g.name(),
            Backend::Network(n) => n.name(),
        }
    }

    fn data_dim(&self) -> usize {
        match self {
            Backend::Analytic(g) => g.data_dim(),
            Backend::Network(n) => n.data_dim(),
        }
    }

    fn embed_dim(&self) -> usize {
        match self {
            Backend::Analytic(g) => g.embed_dim(),
            Backend::Network(n) => n.embed_dim(),
        }
    }

    fn eps(&self, z: &[f64], t: usize, e: &Embedding, sched: &NoiseSchedule) -> Result<Vec<f64>> {
        match self {
            Backend::Analytic(g) => g.eps(z, t, e, sched),
            Backend::Network(n) => n.eps(z, t, e, sched),
        }
    }

    fn supports_embedding_grad(&self) -> bool {
        true
    }

    fn eps_vjp_embedding(
        &self,
        z: &[f64],
        t: usize,
        e: &Embedding,
        sched: &NoiseSchedule,
        upstream: &[f64],
    ) -> Result<Vec<f64>> {
        match self {
            Backend::Analytic(g) => g.eps_vjp_embedding(z, t, e, sched, upstream),
            Backend::Network(n) => n.eps_vjp_embedding(z, t, e, sched, upstream),
        }
    }
}

pub(crate) fn require_embedding_grad(backend: &dyn Denoiser) -> Result<()> {
    if backend.supports_embedding_grad() {
        Ok(())
    } else {
        Err(Error::UnsupportedBackend(format!(
            "{} backend has no embedding gradients",
            backend.name()
        )))
    }
}
