//! Guided DDIM sampling with a per-step choice of conditional and null embedding.

use crate::backends::Denoiser;
use crate::embedding::{Embedding, EmbeddingRole};
use crate::error::{Error, Result};
use crate::schedule::{cfg_combine, ddim_step, guard_latent, Direction, NoiseSchedule, StepPlan, Trajectory};

/// What each sampling step conditions on.
#[derive(Debug, Clone)]
pub struct StepConditioning<'a> {
    pub cond: &'a Embedding,
    pub role: EmbeddingRole,
    pub uncond: &'a Embedding,
}

/// Guided noise prediction at one step. `guidance == 1` skips the null branch.
pub(crate) fn guided_eps(
    backend: &dyn Denoiser,
    z: &[f64],
    t: usize,
    cond: &Embedding,
    uncond: &Embedding,
    guidance: f64,
    sched: &NoiseSchedule,
) -> Result<Vec<f64>> {
    let eps_c = backend.eps(z, t, cond, sched)?;
    if guidance == 1.0 {
        return cfg_combine(&eps_c, &eps_c, 1.0);
    }
    let eps_u = backend.eps(z, t, uncond, sched)?;
    cfg_combine(&eps_u, &eps_c, guidance)
}

/// Runs the plan from `z_start` (at the plan's first timestep) down to t = 0.
pub fn sample(
    z_start: &[f64],
    plan: &StepPlan,
    backend: &dyn Denoiser,
    sched: &NoiseSchedule,
    steps: &[StepConditioning<'_>],
    guidance: f64,
) -> Result<Trajectory> {
    if steps.len() != plan.steps() {
        return Err(Error::invalid(format!(
            "{} step conditionings for a {}-step plan",
            steps.len(),
            plan.steps()
        )));
    }
    if z_start.len() != backend.data_dim() {
        return Err(Error::invalid(format!(
            "start latent has dimension {}, backend expects {}",
            z_start.len(),
            backend.data_dim()
        )));
    }
    let mut traj = Trajectory::start(Direction::Sampling, z_start.to_vec(), plan.timesteps()[0]);
    let mut z = z_start.to_vec();
    for (i, ((t, t_prev), step)) in plan.sampling_pairs().zip(steps).enumerate() {
        let eps = guided_eps(backend, &z, t, step.cond, step.uncond, guidance, sched)?;
        z = ddim_step(&z, &eps, t, t_prev, sched)?;
        guard_latent(&z, i, t_prev)?;
        traj.push(z.clone(), t_prev, step.role);
    }
    Ok(traj)
}
