//! Noise schedules and the deterministic DDIM update in both directions.
//!
//! Every step function here is a pure function of its inputs. Timesteps index
//! `alpha_bar` directly, with `alpha_bar[0] = 1` standing for clean data.

use crate::embedding::EmbeddingRole;
use crate::error::{ensure_same_len, Error, Result};

pub const DEFAULT_TIMESTEPS: usize = 1000;
pub const LINEAR_BETA_START: f64 = 1e-4;
pub const LINEAR_BETA_END: f64 = 2e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Linear,
}

/// Cumulative signal fractions for a discrete forward process.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    timesteps: usize,
    betas: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(timesteps: usize, kind: ScheduleKind) -> Result<Self> {
        if timesteps < 2 {
            return Err(Error::invalid(format!(
                "schedule needs at least 2 timesteps, got {timesteps}"
            )));
        }
        let mut betas = Vec::with_capacity(timesteps + 1);
        betas.push(0.0);
        match kind {
            ScheduleKind::Linear => {
                let span = LINEAR_BETA_END - LINEAR_BETA_START;
                let denom = (timesteps - 1) as f64;
                betas.extend(
                    (0..timesteps).map(|i| LINEAR_BETA_START + span * (i as f64) / denom),
                );
            }
        }
        let alpha_bar = betas
            .iter()
            .scan(1.0, |prod, beta| {
                *prod *= 1.0 - beta;
                Some(*prod)
            })
            .collect();
        Ok(Self {
            timesteps,
            betas,
            alpha_bar,
        })
    }

    /// Total number of training timesteps `T`.
    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    /// Per-step noise increments, indexed `1..=T`; entry 0 is a zero placeholder.
    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bar.get(t).copied().ok_or_else(|| {
            Error::invalid(format!("timestep {t} outside 0..={}", self.timesteps))
        })
    }

    /// Noise-to-signal ratio `sqrt(1/alpha_bar - 1)`.
    pub fn sigma_ratio(&self, t: usize) -> Result<f64> {
        let a = self.alpha_bar(t)?;
        Ok((1.0 / a - 1.0).sqrt())
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::new(DEFAULT_TIMESTEPS, ScheduleKind::Linear).expect("default schedule is valid")
    }
}

pub fn make_schedule(timesteps: usize, kind: ScheduleKind) -> Result<NoiseSchedule> {
    NoiseSchedule::new(timesteps, kind)
}

/// `sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps`.
pub fn forward_diffuse(z0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    ensure_same_len(z0, eps, "forward_diffuse")?;
    let a = sched.alpha_bar(t)?;
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    Ok(z0.iter().zip(eps).map(|(x, e)| sa * x + sn * e).collect())
}

/// One deterministic (eta = 0) DDIM step from `t` down to `t_prev`.
pub fn ddim_step(
    z_t: &[f64],
    eps_hat: &[f64],
    t: usize,
    t_prev: usize,
    sched: &NoiseSchedule,
) -> Result<Vec<f64>> {
    ensure_same_len(z_t, eps_hat, "ddim_step")?;
    if t_prev >= t {
        return Err(Error::invalid(format!(
            "ddim_step requires t > t_prev, got t={t}, t_prev={t_prev}"
        )));
    }
    let a_t = sched.alpha_bar(t)?;
    let a_prev = sched.alpha_bar(t_prev)?;
    let (sa_t, sn_t) = (a_t.sqrt(), (1.0 - a_t).sqrt());
    let (sa_prev, sn_prev) = (a_prev.sqrt(), (1.0 - a_prev).sqrt());
    Ok(z_t
        .iter()
        .zip(eps_hat)
        .map(|(z, e)| {
            let x0 = (z - sn_t * e) / sa_t;
            sa_prev * x0 + sn_prev * e
        })
        .collect())
}

/// One inversion step from `t` up to `t_next`:
/// `sqrt(a_next/a_t) z + sqrt(a_next) (sqrt(1/a_next - 1) - sqrt(1/a_t - 1)) eps`.
pub fn invert_step(
    z_t: &[f64],
    eps_hat: &[f64],
    t: usize,
    t_next: usize,
    sched: &NoiseSchedule,
) -> Result<Vec<f64>> {
    ensure_same_len(z_t, eps_hat, "invert_step")?;
    if t_next <= t {
        return Err(Error::invalid(format!(
            "invert_step requires t_next > t, got t={t}, t_next={t_next}"
        )));
    }
    let a_t = sched.alpha_bar(t)?;
    let a_next = sched.alpha_bar(t_next)?;
    let scale = (a_next / a_t).sqrt();
    let coef = a_next.sqrt() * (sched.sigma_ratio(t_next)? - sched.sigma_ratio(t)?);
    Ok(z_t
        .iter()
        .zip(eps_hat)
        .map(|(z, e)| scale * z + coef * e)
        .collect())
}

/// Classifier-free guidance: `eps_uncond + w (eps_cond - eps_uncond)`.
///
/// `w = 1` and `w = 0` return the conditional and unconditional branch exactly.
pub fn cfg_combine(eps_uncond: &[f64], eps_cond: &[f64], w: f64) -> Result<Vec<f64>> {
    ensure_same_len(eps_uncond, eps_cond, "cfg_combine")?;
    if !w.is_finite() || w < 0.0 {
        return Err(Error::invalid(format!(
            "guidance scale must be finite and >= 0, got {w}"
        )));
    }
    if w == 1.0 {
        return Ok(eps_cond.to_vec());
    }
    if w == 0.0 {
        return Ok(eps_uncond.to_vec());
    }
    Ok(eps_uncond
        .iter()
        .zip(eps_cond)
        .map(|(u, c)| u + w * (c - u))
        .collect())
}

/// Evenly spaced sampling timesteps `round(i T / S)` for `i = S..1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepPlan {
    timesteps: Vec<usize>,
}

impl StepPlan {
    pub fn new(steps: usize, sched: &NoiseSchedule) -> Result<Self> {
        let total = sched.timesteps();
        if steps == 0 {
            return Err(Error::invalid("step plan needs at least one step"));
        }
        if steps > total {
            return Err(Error::invalid(format!(
                "{steps} steps cannot be spaced over {total} timesteps"
            )));
        }
        // round half up, in integers
        let timesteps = (1..=steps)
            .rev()
            .map(|i| (2 * i * total + steps) / (2 * steps))
            .collect();
        Ok(Self { timesteps })
    }

    pub fn steps(&self) -> usize {
        self.timesteps.len()
    }

    /// Descending sampling timesteps; the final sampling target (t = 0) is implicit.
    pub fn timesteps(&self) -> &[usize] {
        &self.timesteps
    }

    /// `(t, t_prev)` pairs in sampling order, ending at `t_prev = 0`.
    pub fn sampling_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.timesteps
            .iter()
            .enumerate()
            .map(move |(i, &t)| (t, self.timesteps.get(i + 1).copied().unwrap_or(0)))
    }

    /// `(t, t_next)` pairs in inversion order, starting from `t = 0`.
    pub fn inversion_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.timesteps.len();
        (0..n).map(move |j| {
            let t_next = self.timesteps[n - 1 - j];
            let t = if j == 0 { 0 } else { self.timesteps[n - j] };
            (t, t_next)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub z: Vec<f64>,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// T -> 0
    Sampling,
    /// 0 -> T
    Inversion,
}

/// Latent states visited by a sampler or inverter, with the embedding used per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub direction: Direction,
    pub states: Vec<LatentState>,
    pub embeddings_used: Vec<EmbeddingRole>,
}

impl Trajectory {
    pub(crate) fn start(direction: Direction, z: Vec<f64>, t: usize) -> Self {
        Self {
            direction,
            states: vec![LatentState { z, t }],
            embeddings_used: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, z: Vec<f64>, t: usize, role: EmbeddingRole) {
        self.states.push(LatentState { z, t });
        self.embeddings_used.push(role);
    }

    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn first(&self) -> &LatentState {
        &self.states[0]
    }

    pub fn last(&self) -> &LatentState {
        self.states.last().expect("trajectory is never empty")
    }

    /// Timesteps strictly monotone in the declared direction, one role per step.
    pub fn is_consistent(&self) -> bool {
        let ordered = self.states.windows(2).all(|w| match self.direction {
            Direction::Sampling => w[0].t > w[1].t,
            Direction::Inversion => w[0].t < w[1].t,
        });
        ordered
            && self.embeddings_used.len() == self.steps()
            && self
                .states
                .iter()
                .all(|s| s.z.iter().all(|v| v.is_finite()))
    }
}

/// Latents whose norm exceeds this abort with a divergence error.
pub const DIVERGENCE_NORM: f64 = 1e6;

pub(crate) fn guard_latent(z: &[f64], step: usize, t: usize) -> Result<()> {
    let norm_sq: f64 = z.iter().map(|v| v * v).sum();
    if !norm_sq.is_finite() || norm_sq > DIVERGENCE_NORM * DIVERGENCE_NORM {
        return Err(Error::NumericDivergence {
            step,
            t,
            detail: format!("latent norm {}", norm_sq.sqrt()),
        });
    }
    Ok(())
}
