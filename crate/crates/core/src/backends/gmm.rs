use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::Denoiser;
use crate::embedding::{unpool_grad, Embedding, PromptVocabulary};
use crate::error::{ensure_same_len, Error, Result};
use crate::schedule::NoiseSchedule;

/// Radius of the ring on which toy mixture means sit.
pub const RING_RADIUS: f64 = 3.0;
/// Isotropic scale of each toy component.
pub const RING_SIGMA: f64 = 0.5;
/// Keys are `KEY_SCALE / d` times the class token row, giving a self-logit near `KEY_SCALE`.
pub const KEY_SCALE: f64 = 6.0;

/// An isotropic Gaussian mixture whose component weights depend on the pooled embedding.
///
/// The forward process maps component `k` to `N(sqrt(a) mu_k, (a sigma_k^2 + 1 - a) I)`,
/// so the score of every noisy marginal is available in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSpec {
    means: Vec<Vec<f64>>,
    scales: Vec<f64>,
    log_priors: Vec<f64>,
    keys: Vec<Vec<f64>>,
    temperature: f64,
}

struct Posterior {
    resp: Vec<f64>,
    /// `(sqrt(a) mu_k - z) / s_k^2`
    pulls: Vec<Vec<f64>>,
    score: Vec<f64>,
}

impl GmmSpec {
    pub fn new(
        means: Vec<Vec<f64>>,
        scales: Vec<f64>,
        log_priors: Vec<f64>,
        keys: Vec<Vec<f64>>,
        temperature: f64,
    ) -> Result<Self> {
        let k = means.len();
        if k == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if scales.len() != k || log_priors.len() != k || keys.len() != k {
            return Err(Error::invalid("mixture parameter lists differ in length"));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::invalid("component means must share a nonzero dimension"));
        }
        let key_dim = keys[0].len();
        if key_dim == 0 || keys.iter().any(|u| u.len() != key_dim) {
            return Err(Error::invalid("keys must share a nonzero dimension"));
        }
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("component scales must be positive"));
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::invalid("key temperature must be positive"));
        }
        let finite = means.iter().chain(&keys).flatten().chain(&log_priors);
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mixture parameters must be finite"));
        }
        Ok(Self {
            means,
            scales,
            log_priors,
            keys,
            temperature,
        })
    }

    /// A single standard normal component, independent of the embedding.
    pub fn standard_normal(dim: usize, embed_dim: usize) -> Self {
        Self::new(
            vec![vec![0.0; dim]],
            vec![1.0],
            vec![0.0],
            vec![vec![0.0; embed_dim]],
            1.0,
        )
        .expect("valid by construction")
    }

    /// Equal-weight components on a ring in the first two coordinates, one per class token.
    ///
    /// The key of class `k` is its token row scaled by `KEY_SCALE / d`.
    pub fn ring<S: AsRef<str>>(
        vocab: &PromptVocabulary,
        class_tokens: &[S],
        dim: usize,
        radius: f64,
        sigma: f64,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("ring mixtures need at least two data dimensions"));
        }
        let k = class_tokens.len();
        let mut means = Vec::with_capacity(k);
        let mut keys = Vec::with_capacity(k);
        let key_scale = KEY_SCALE / vocab.dim() as f64;
        for (i, tok) in class_tokens.iter().enumerate() {
            let angle = 2.0 * PI * i as f64 / k as f64;
            let mut mu = vec![0.0; dim];
            mu[0] = radius * angle.cos();
            mu[1] = radius * angle.sin();
            means.push(mu);
            let row = vocab.row(vocab.token_index(tok.as_ref())?);
            keys.push(row.iter().map(|v| key_scale * v).collect());
        }
        let log_prior = -(k as f64).ln();
        Self::new(means, vec![sigma; k], vec![log_prior; k], keys, 1.0)
    }

    pub fn components(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn log_priors(&self) -> &[f64] {
        &self.log_priors
    }

    pub fn keys(&self) -> &[Vec<f64>] {
        &self.keys
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub(crate) fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.means
            .iter()
            .chain(&self.keys)
            .flatten()
            .chain(&self.scales)
            .chain(&self.log_priors)
            .chain(std::iter::once(&self.temperature))
            .copied()
    }

    fn logits(&self, pooled: &[f64]) -> Vec<f64> {
        self.keys
            .iter()
            .zip(&self.log_priors)
            .map(|(u, lp)| dot(u, pooled) / self.temperature + lp)
            .collect()
    }

    /// Conditional component weights `softmax(<pooled, u_k>/tau + log pi_k)`.
    pub fn weights(&self, e: &Embedding) -> Result<Vec<f64>> {
        self.check_embedding(e)?;
        Ok(softmax(&self.logits(e.pooled())))
    }

    /// `log p_t(z | e)`, the closed-form log density of the noisy marginal.
    pub fn log_marginal(&self, z: &[f64], t: usize, e: &Embedding, sched: &NoiseSchedule) -> Result<f64> {
        self.check_point(z)?;
        self.check_embedding(e)?;
        let a = sched.alpha_bar(t)?;
        let log_w = log_softmax(&self.logits(e.pooled()));
        let terms: Vec<f64> = (0..self.components())
            .map(|k| log_w[k] + self.log_gauss(z, k, a))
            .collect();
        Ok(logsumexp(&terms))
    }

    /// `log p_0(x | e)`.
    pub fn log_density(&self, x: &[f64], e: &Embedding) -> Result<f64> {
        self.check_point(x)?;
        self.check_embedding(e)?;
        let log_w = log_softmax(&self.logits(e.pooled()));
        let terms: Vec<f64> = (0..self.components())
            .map(|k| log_w[k] + self.log_gauss(x, k, 1.0))
            .collect();
        Ok(logsumexp(&terms))
    }

    /// Draws from component `k` of the clean distribution.
    pub fn sample_component<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        let s = self.scales[k];
        self.means[k]
            .iter()
            .map(|m| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect::<Vec<f64>>()
    }

    fn log_gauss(&self, z: &[f64], k: usize, a: f64) -> f64 {
        let s2 = a * self.scales[k] * self.scales[k] + (1.0 - a);
        let sa = a.sqrt();
        let d2: f64 = z
            .iter()
            .zip(&self.means[k])
            .map(|(zi, m)| (zi - sa * m).powi(2))
            .sum();
        -0.5 * d2 / s2 - 0.5 * z.len() as f64 * (2.0 * PI * s2).ln()
    }

    fn posterior(&self, z: &[f64], a: f64, pooled: &[f64]) -> Posterior {
        let sa = a.sqrt();
        let logits = self.logits(pooled);
        let joint: Vec<f64> = (0..self.components())
            .map(|k| logits[k] + self.log_gauss(z, k, a))
            .collect();
        let resp = softmax(&joint);
        let pulls: Vec<Vec<f64>> = (0..self.components())
            .map(|k| {
                let s2 = a * self.scales[k] * self.scales[k] + (1.0 - a);
                z.iter()
                    .zip(&self.means[k])
                    .map(|(zi, m)| (sa * m - zi) / s2)
                    .collect()
            })
            .collect();
        let mut score = vec![0.0; z.len()];
        for (r, g) in resp.iter().zip(&pulls) {
            for (s, gi) in score.iter_mut().zip(g) {
                *s += r * gi;
            }
        }
        Posterior { resp, pulls, score }
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        ensure_same_len(z, &self.means[0], "mixture input")
    }

    fn check_embedding(&self, e: &Embedding) -> Result<()> {
        if e.dim() != self.keys[0].len() {
            return Err(Error::invalid(format!(
                "embedding dimension {} does not match key dimension {}",
                e.dim(),
                self.keys[0].len()
            )));
        }
        Ok(())
    }
}

impl Denoiser for GmmSpec {
    fn name(&self) -> &'static str {
        "gmm"
    }

    fn data_dim(&self) -> usize {
        self.means[0].len()
    }

    fn embed_dim(&self) -> usize {
        self.keys[0].len()
    }

    /// `-sqrt(1 - a_t) * grad log p_t(z | e)`.
    fn eps(&self, z: &[f64], t: usize, e: &Embedding, sched: &NoiseSchedule) -> Result<Vec<f64>> {
        self.check_point(z)?;
        self.check_embedding(e)?;
        let a = sched.alpha_bar(t)?;
        let post = self.posterior(z, a, e.pooled());
        let sn = (1.0 - a).sqrt();
        Ok(post.score.iter().map(|s| -sn * s).collect())
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
        self.check_point(z)?;
        self.check_embedding(e)?;
        ensure_same_len(z, upstream, "upstream gradient")?;
        let a = sched.alpha_bar(t)?;
        let post = self.posterior(z, a, e.pooled());
        let sn = (1.0 - a).sqrt();
        // d score / d logit_j = r_j (pull_j - score); logits are linear in pooled.
        let mut pooled_grad = vec![0.0; self.embed_dim()];
        for ((r, pull), key) in post.resp.iter().zip(&post.pulls).zip(&self.keys) {
            let proj: f64 = upstream
                .iter()
                .zip(pull.iter().zip(&post.score))
                .map(|(v, (p, s))| v * (p - s))
                .sum();
            let c = -sn * r * proj / self.temperature;
            for (g, u) in pooled_grad.iter_mut().zip(key) {
                *g += c * u;
            }
        }
        Ok(unpool_grad(&pooled_grad, e.rows()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let lse = logsumexp(xs);
    xs.iter().map(|x| x - lse).collect()
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let total: f64 = ex.iter().sum();
    ex.into_iter().map(|v| v / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class(asym: bool) -> GmmSpec {
        let lp = if asym { vec![0.8f64.ln(), 0.2f64.ln()] } else { vec![0.5f64.ln(); 2] };
        GmmSpec::new(
            vec![vec![2.0, 0.0], vec![-2.0, 0.0]],
            vec![0.5, 0.5],
            lp,
            vec![vec![1.0, 0.0, 0.5], vec![-1.0, 0.3, 0.0]],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn standard_component_is_linear() {
        let g = GmmSpec::standard_normal(2, 3);
        let s = NoiseSchedule::default();
        let e = Embedding::null(3);
        let z = [0.4, -1.7];
        for t in [1, 250, 999] {
            let a = s.alpha_bar(t).unwrap();
            let eps = g.eps(&z, t, &e, &s).unwrap();
            for (o, zi) in eps.iter().zip(z) {
                assert!((o - (1.0 - a).sqrt() * zi).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn symmetric_mixture_cancels_at_origin() {
        let g = two_class(false);
        let s = NoiseSchedule::default();
        let eps = g.eps(&[0.0, 0.0], 400, &Embedding::null(3), &s).unwrap();
        assert!(eps.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn null_embedding_gives_prior_weights() {
        let g = two_class(true);
        let w = g.weights(&Embedding::null(3)).unwrap();
        assert_eq!(w, softmax(g.log_priors()));
        assert!((w[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn single_component_has_no_embedding_gradient() {
        let g = GmmSpec::standard_normal(2, 3);
        let s = NoiseSchedule::default();
        let e = Embedding::from_rows(2, 3, vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6]).unwrap();
        let grad = g.eps_vjp_embedding(&[1.0, 2.0], 100, &e, &s, &[0.3, -0.2]).unwrap();
        assert_eq!(grad.len(), 6);
        assert!(grad.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let g = two_class(true);
        let s = NoiseSchedule::default();
        let e = Embedding::from_rows(1, 3, vec![0.1, 0.2, 0.3]).unwrap();
        let grad = g.eps_vjp_embedding(&[0.5, 0.1], 300, &e, &s, &[0.0, 0.0]).unwrap();
        assert!(grad.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(GmmSpec::new(vec![], vec![], vec![], vec![], 1.0).is_err());
        assert!(GmmSpec::new(vec![vec![0.0]], vec![0.0], vec![0.0], vec![vec![1.0]], 1.0).is_err());
        assert!(GmmSpec::new(vec![vec![0.0]], vec![1.0], vec![0.0], vec![vec![1.0]], 0.0).is_err());
    }

    #[test]
    fn mode_of_single_component_condition() {
        let g = GmmSpec::standard_normal(2, 3);
        let lp = g.log_density(&[0.0, 0.0], &Embedding::null(3)).unwrap();
        assert!((lp + (2.0 * PI).ln()).abs() < 1e-14);
    }
}
