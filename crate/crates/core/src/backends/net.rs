use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Denoiser;
use crate::embedding::{unpool_grad, Embedding};
use crate::error::{ensure_same_len, Error, Result};
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    /// Data dimension `D`.
    pub data_dim: usize,
    /// Sinusoidal timestep frequency pairs `F`.
    pub freq_pairs: usize,
    /// Token embedding dimension `d`.
    pub embed_dim: usize,
    /// Hidden width `H`.
    pub hidden: usize,
}

impl Default for NetShape {
    fn default() -> Self {
        Self {
            data_dim: 2,
            freq_pairs: 8,
            embed_dim: 16,
            hidden: 128,
        }
    }
}

impl NetShape {
    pub fn input_dim(&self) -> usize {
        self.data_dim + 2 * self.freq_pairs + self.embed_dim
    }

    pub fn param_count(&self) -> usize {
        let (i, h, o) = (self.input_dim(), self.hidden, self.data_dim);
        h * i + h + h * h + h + o * h + o
    }

    fn validate(&self) -> Result<()> {
        if self.data_dim == 0 || self.freq_pairs == 0 || self.embed_dim == 0 || self.hidden == 0 {
            return Err(Error::invalid(format!("degenerate network shape {self:?}")));
        }
        Ok(())
    }
}

/// Three-layer tanh MLP over `[z, timestep encoding, pooled embedding]`.
///
/// Parameters live in one flat vector laid out as `W1 (H x in), b1, W2 (H x H), b2,
/// W3 (D x H), b3`, all row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserNet {
    shape: NetShape,
    params: Vec<f64>,
}

/// Gradients of `<upstream, f(z, t, e)>`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub params: Vec<f64>,
    /// `N x d`, row-major.
    pub embedding: Vec<f64>,
}

struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
}

struct Activations {
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    out: Vec<f64>,
}

impl DenoiserNet {
    /// Glorot-uniform weights, zero biases.
    pub fn init(shape: NetShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; shape.param_count()];
        let o = offsets(&shape);
        let (i, h, d) = (shape.input_dim(), shape.hidden, shape.data_dim);
        for (start, fan_out, fan_in) in [(o.w1, h, i), (o.w2, h, h), (o.w3, d, h)] {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut params[start..start + fan_out * fan_in] {
                *p = rng.random_range(-limit..limit);
            }
        }
        Ok(Self { shape, params })
    }

    pub fn from_params(shape: NetShape, params: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if params.len() != shape.param_count() {
            return Err(Error::invalid(format!(
                "network expects {} parameters, got {}",
                shape.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("network parameters must be finite"));
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Deterministic forward pass.
    pub fn eval(&self, z: &[f64], t: usize, e: &Embedding) -> Result<Vec<f64>> {
        self.check(z, e)?;
        Ok(self.forward(z, t, e.pooled()).out)
    }

    /// Reverse-mode gradients of `<upstream, eval(z, t, e)>` for every parameter and token.
    pub fn grads(&self, z: &[f64], t: usize, e: &Embedding, upstream: &[f64]) -> Result<ParamGrads> {
        self.check(z, e)?;
        ensure_same_len(z, upstream, "upstream gradient")?;
        let mut params = vec![0.0; self.params.len()];
        let acts = self.forward(z, t, e.pooled());
        let pooled = self.backward(&acts, upstream, Some(&mut params));
        Ok(ParamGrads {
            params,
            embedding: unpool_grad(&pooled, e.rows()),
        })
    }

    /// Forward pass plus optional accumulation of parameter gradients.
    /// Returns the output and the gradient with respect to the pooled embedding.
    pub(crate) fn forward_backward(
        &self,
        z: &[f64],
        t: usize,
        pooled: &[f64],
        upstream: impl FnOnce(&[f64]) -> Vec<f64>,
        param_grad: Option<&mut [f64]>,
    ) -> (Vec<f64>, Vec<f64>) {
        let acts = self.forward(z, t, pooled);
        let up = upstream(&acts.out);
        let pooled_grad = self.backward(&acts, &up, param_grad);
        (acts.out, pooled_grad)
    }

    fn check(&self, z: &[f64], e: &Embedding) -> Result<()> {
        if z.len() != self.shape.data_dim {
            return Err(Error::invalid(format!(
                "network expects {}-dimensional input, got {}",
                self.shape.data_dim,
                z.len()
            )));
        }
        if e.dim() != self.shape.embed_dim {
            return Err(Error::invalid(format!(
                "network expects {}-dimensional embeddings, got {}",
                self.shape.embed_dim,
                e.dim()
            )));
        }
        Ok(())
    }

    fn forward(&self, z: &[f64], t: usize, pooled: &[f64]) -> Activations {
        let s = &self.shape;
        let o = offsets(s);
        let mut input = Vec::with_capacity(s.input_dim());
        input.extend_from_slice(z);
        input.extend(timestep_encoding(t, s.freq_pairs));
        input.extend_from_slice(pooled);

        let p = &self.params;
        let h1 = affine(&p[o.w1..o.b1], &p[o.b1..o.w2], &input, s.hidden, true);
        let h2 = affine(&p[o.w2..o.b2], &p[o.b2..o.w3], &h1, s.hidden, true);
        let out = affine(&p[o.w3..o.b3], &p[o.b3..], &h2, s.data_dim, false);
        Activations { input, h1, h2, out }
    }

    fn backward(&self, acts: &Activations, upstream: &[f64], mut grad: Option<&mut [f64]>) -> Vec<f64> {
        let s = &self.shape;
        let o = offsets(s);
        let p = &self.params;
        let (h, d, n_in) = (s.hidden, s.data_dim, s.input_dim());

        if let Some(g) = grad.as_deref_mut() {
            outer_acc(&mut g[o.w3..o.b3], upstream, &acts.h2);
            add_acc(&mut g[o.b3..], upstream);
        }
        let mut da2 = transpose_mul(&p[o.w3..o.b3], upstream, d, h);
        tanh_back(&mut da2, &acts.h2);

        if let Some(g) = grad.as_deref_mut() {
            outer_acc(&mut g[o.w2..o.b2], &da2, &acts.h1);
            add_acc(&mut g[o.b2..o.w3], &da2);
        }
        let mut da1 = transpose_mul(&p[o.w2..o.b2], &da2, h, h);
        tanh_back(&mut da1, &acts.h1);

        if let Some(g) = grad.as_deref_mut() {
            outer_acc(&mut g[o.w1..o.b1], &da1, &acts.input);
            add_acc(&mut g[o.b1..o.w2], &da1);
        }
        // only the pooled-embedding columns of W1 are needed
        let w1 = &p[o.w1..o.b1];
        let first = n_in - s.embed_dim;
        (first..n_in)
            .map(|c| (0..h).map(|r| w1[r * n_in + c] * da1[r]).sum())
            .collect()
    }
}

impl Denoiser for DenoiserNet {
    fn name(&self) -> &'static str {
        "net"
    }

    fn data_dim(&self) -> usize {
        self.shape.data_dim
    }

    fn embed_dim(&self) -> usize {
        self.shape.embed_dim
    }

    fn eps(&self, z: &[f64], t: usize, e: &Embedding, sched: &NoiseSchedule) -> Result<Vec<f64>> {
        sched.alpha_bar(t)?;
        self.eval(z, t, e)
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
        sched.alpha_bar(t)?;
        self.check(z, e)?;
        ensure_same_len(z, upstream, "upstream gradient")?;
        let acts = self.forward(z, t, e.pooled());
        let pooled = self.backward(&acts, upstream, None);
        Ok(unpool_grad(&pooled, e.rows()))
    }
}

/// `[sin(t w_j), cos(t w_j)]` with `w_j` geometric from 1 down to 1/1000.
pub(crate) fn timestep_encoding(t: usize, pairs: usize) -> impl Iterator<Item = f64> {
    let t = t as f64;
    (0..pairs).flat_map(move |j| {
        let frac = if pairs > 1 { j as f64 / (pairs - 1) as f64 } else { 0.0 };
        let w = 1000f64.powf(-frac);
        [(t * w).sin(), (t * w).cos()]
    })
}

fn offsets(s: &NetShape) -> Offsets {
    let (i, h, d) = (s.input_dim(), s.hidden, s.data_dim);
    let w1 = 0;
    let b1 = w1 + h * i;
    let w2 = b1 + h;
    let b2 = w2 + h * h;
    let w3 = b2 + h;
    let b3 = w3 + d * h;
    Offsets { w1, b1, w2, b2, w3, b3 }
}

fn affine(w: &[f64], b: &[f64], x: &[f64], rows: usize, squash: bool) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|r| {
            let row = &w[r * cols..(r + 1) * cols];
            let v = b[r] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
            if squash {
                v.tanh()
            } else {
                v
            }
        })
        .collect()
}

fn transpose_mul(w: &[f64], v: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        let vr = v[r];
        for (o, wv) in out.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *o += wv * vr;
        }
    }
    out
}

fn tanh_back(grad: &mut [f64], act: &[f64]) {
    for (g, a) in grad.iter_mut().zip(act) {
        *g *= 1.0 - a * a;
    }
}

fn outer_acc(dst: &mut [f64], left: &[f64], right: &[f64]) {
    let cols = right.len();
    for (r, l) in left.iter().enumerate() {
        for (d, x) in dst[r * cols..(r + 1) * cols].iter_mut().zip(right) {
            *d += l * x;
        }
    }
}

fn add_acc(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
