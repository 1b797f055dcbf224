//! DDIM inversion and null-text inversion against the inversion pivot.

use crate::backends::{require_embedding_grad, Denoiser};
use crate::embedding::{Embedding, EmbeddingRole};
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::sampling::{guided_eps, sample, StepConditioning};
use crate::schedule::{
    cfg_combine, ddim_step, guard_latent, invert_step, Direction, NoiseSchedule, StepPlan, Trajectory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InversionKind {
    Ddim,
    NullText,
}

impl InversionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            InversionKind::Ddim => "ddim",
            InversionKind::NullText => "null_text",
        }
    }
}

impl std::str::FromStr for InversionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddim" => Ok(InversionKind::Ddim),
            "null_text" | "null-text" | "nti" => Ok(InversionKind::NullText),
            other => Err(Error::invalid(format!("unknown inversion kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionResult {
    pub kind: InversionKind,
    /// Terminal inverted latent `z*_T`.
    pub z_t_star: Vec<f64>,
    /// `z*_t` in ascending timestep order, starting at the input.
    pub pivot: Trajectory,
    /// One null embedding per sampling step, in sampling order. Only for null-text inversion.
    pub null_embeddings: Option<Vec<Embedding>>,
    /// Mean squared distance between each guided sampling step and its pivot target,
    /// in sampling order.
    pub per_step_pivot_error: Vec<f64>,
    /// Guidance scale the null embeddings were fitted for.
    pub guidance: f64,
}

impl InversionResult {
    pub fn steps(&self) -> usize {
        self.pivot.steps()
    }

    pub fn max_pivot_error(&self) -> f64 {
        self.per_step_pivot_error.iter().copied().fold(0.0, f64::max)
    }

    /// Pivot latent reached after sampling step `i` (sampling order).
    fn pivot_target(&self, i: usize) -> &[f64] {
        let n = self.pivot.states.len();
        &self.pivot.states[n - 2 - i].z
    }
}

/// Inverts `z0` with the source embedding at guidance 1.
pub fn ddim_invert(
    z0: &[f64],
    e_src: &Embedding,
    backend: &dyn Denoiser,
    sched: &NoiseSchedule,
    plan: &StepPlan,
) -> Result<InversionResult> {
    if z0.len() != backend.data_dim() {
        return Err(Error::invalid(format!(
            "input has dimension {}, backend expects {}",
            z0.len(),
            backend.data_dim()
        )));
    }
    if z0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("input latent must be finite"));
    }
    let mut pivot = Trajectory::start(Direction::Inversion, z0.to_vec(), 0);
    let mut z = z0.to_vec();
    for (i, (t, t_next)) in plan.inversion_pairs().enumerate() {
        let eps = backend.eps(&z, t, e_src, sched)?;
        z = invert_step(&z, &eps, t, t_next, sched)?;
        guard_latent(&z, i, t_next)?;
        pivot.push(z.clone(), t_next, EmbeddingRole::Source);
    }
    Ok(InversionResult {
        kind: InversionKind::Ddim,
        z_t_star: z,
        pivot,
        null_embeddings: None,
        per_step_pivot_error: vec![0.0; plan.steps()],
        guidance: 1.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullTextConfig {
    pub guidance: f64,
    pub inner_steps: usize,
    pub lr: f64,
    /// Stop optimizing a step once its mean squared residual drops below this.
    pub early_stop: f64,
}

impl Default for NullTextConfig {
    fn default() -> Self {
        Self {
            guidance: 7.5,
            inner_steps: 10,
            lr: 1e-2,
            early_stop: 1e-5,
        }
    }
}

/// Fits one null embedding per sampling step so guided sampling tracks the DDIM pivot.
///
/// Each step's null starts from the previous step's result (the first from zero) and
/// is optimized for at most `inner_steps` iterations.
pub fn null_text_invert(
    z0: &[f64],
    e_src: &Embedding,
    backend: &dyn Denoiser,
    sched: &NoiseSchedule,
    plan: &StepPlan,
    cfg: &NullTextConfig,
) -> Result<InversionResult> {
    if !(cfg.guidance.is_finite() && cfg.guidance >= 1.0) {
        return Err(Error::invalid(format!(
            "null-text inversion needs guidance >= 1, got {}",
            cfg.guidance
        )));
    }
    if cfg.guidance != 1.0 {
        require_embedding_grad(backend)?;
    }
    let base = ddim_invert(z0, e_src, backend, sched, plan)?;
    let w = cfg.guidance;
    let dim = z0.len() as f64;

    let mut null = Embedding::null(backend.embed_dim());
    let mut nulls = Vec::with_capacity(plan.steps());
    let mut errors = Vec::with_capacity(plan.steps());
    let mut z = base.z_t_star.clone();

    for (i, (t, t_prev)) in plan.sampling_pairs().enumerate() {
        let target = base.pivot_target(i).to_vec();
        let eps_c = backend.eps(&z, t, e_src, sched)?;
        if w != 1.0 {
            let a_t = sched.alpha_bar(t)?;
            let a_prev = sched.alpha_bar(t_prev)?;
            // d z_prev / d eps for the DDIM update
            let d_eps = (1.0 - a_prev).sqrt() - (a_prev / a_t).sqrt() * (1.0 - a_t).sqrt();
            let mut opt = Adam::new(null.data().len(), cfg.lr);
            for _ in 0..cfg.inner_steps {
                let eps_u = backend.eps(&z, t, &null, sched)?;
                let eps = cfg_combine(&eps_u, &eps_c, w)?;
                let z_prev = ddim_step(&z, &eps, t, t_prev, sched)?;
                let loss = mse(&z_prev, &target);
                if loss < cfg.early_stop {
                    break;
                }
                let upstream: Vec<f64> = z_prev
                    .iter()
                    .zip(&target)
                    .map(|(a, b)| 2.0 * (a - b) / dim * d_eps * (1.0 - w))
                    .collect();
                let grad = backend.eps_vjp_embedding(&z, t, &null, sched, &upstream)?;
                null.update(|p| opt.step(p, &grad));
            }
        }
        let eps = guided_eps(backend, &z, t, e_src, &null, w, sched)?;
        z = ddim_step(&z, &eps, t, t_prev, sched)?;
        guard_latent(&z, i, t_prev)?;
        errors.push(mse(&z, &target));
        nulls.push(null.clone());
    }

    Ok(InversionResult {
        kind: InversionKind::NullText,
        z_t_star: base.z_t_star,
        pivot: base.pivot,
        null_embeddings: Some(nulls),
        per_step_pivot_error: errors,
        guidance: w,
    })
}

/// Guided sampling from `z*_T`, using the stored nulls for null-text results.
pub fn reconstruct(
    inv: &InversionResult,
    e: &Embedding,
    backend: &dyn Denoiser,
    sched: &NoiseSchedule,
    plan: &StepPlan,
    guidance: f64,
) -> Result<(Vec<f64>, Trajectory)> {
    let zero = Embedding::null(backend.embed_dim());
    let uncond = null_sequence(inv, &zero, plan)?;
    let steps: Vec<StepConditioning<'_>> = uncond
        .into_iter()
        .map(|u| StepConditioning {
            cond: e,
            role: EmbeddingRole::Source,
            uncond: u,
        })
        .collect();
    let traj = sample(&inv.z_t_star, plan, backend, sched, &steps, guidance)?;
    Ok((traj.last().z.clone(), traj))
}

/// Per-step null embeddings for sampling from an inversion: stored nulls or `zero`.
pub(crate) fn null_sequence<'a>(
    inv: &'a InversionResult,
    zero: &'a Embedding,
    plan: &StepPlan,
) -> Result<Vec<&'a Embedding>> {
    if inv.steps() != plan.steps() {
        return Err(Error::invalid(format!(
            "inversion has {} steps, plan has {}",
            inv.steps(),
            plan.steps()
        )));
    }
    match &inv.null_embeddings {
        Some(nulls) if nulls.len() != plan.steps() => Err(Error::invalid(format!(
            "{} stored null embeddings for a {}-step plan",
            nulls.len(),
            plan.steps()
        ))),
        Some(nulls) => Ok(nulls.iter().collect()),
        None => Ok(vec![zero; plan.steps()]),
    }
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}
