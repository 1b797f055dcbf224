//! The editing pipeline: optimize the target embedding, invert the input, then sample
//! with the source embedding on the first steps and the interpolated one afterwards.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::backends::Backend;
use crate::embedding::{Embedding, EmbeddingRole, PromptVocabulary};
use crate::embedopt::{
    imagic_finetune, interpolate, optimize_embedding, OptimizationReport, OptimizeConfig, DEFAULT_ANALYTIC_LR,
    DEFAULT_ITERATIONS, DEFAULT_NETWORK_LR,
};
use crate::error::{Error, Result};
use crate::eval::{mse, psnr, target_alignment, MetricsRow};
use crate::inversion::{ddim_invert, null_sequence, null_text_invert, InversionKind, InversionResult, NullTextConfig};
use crate::sampling::{sample, StepConditioning};
use crate::schedule::{NoiseSchedule, StepPlan, Trajectory};

pub const DEFAULT_STEPS: usize = 50;
pub const DEFAULT_RHO: f64 = 0.2;
pub const DEFAULT_ALPHA: f64 = 0.9;
pub const DEFAULT_GUIDANCE: f64 = 7.5;

const FINETUNE_SEED_SALT: u64 = 0xf1e7_0e5e;
const NOISE_SEED_SALT: u64 = 0x0015_e000;

#[derive(Debug, Clone, PartialEq)]
pub struct EditConfig {
    /// Weight of the raw target embedding in the interpolation.
    pub alpha: f64,
    /// Fraction of the initial sampling steps conditioned on the source prompt.
    pub rho: f64,
    pub steps: usize,
    pub guidance: f64,
    pub inversion_kind: InversionKind,
    pub opt_iterations: usize,
    /// `None` picks the backend's default rate.
    pub opt_lr: Option<f64>,
    pub opt_batch: usize,
    pub nti_inner_steps: usize,
    pub nti_lr: f64,
    pub seed: u64,
    /// Record wall-clock time in the metrics row. Off keeps outputs byte-deterministic.
    pub record_runtime: bool,
}

impl Default for EditConfig {
    fn default() -> Self {
        let nti = NullTextConfig::default();
        Self {
            alpha: DEFAULT_ALPHA,
            rho: DEFAULT_RHO,
            steps: DEFAULT_STEPS,
            guidance: DEFAULT_GUIDANCE,
            inversion_kind: InversionKind::Ddim,
            opt_iterations: DEFAULT_ITERATIONS,
            opt_lr: None,
            opt_batch: 1,
            nti_inner_steps: nti.inner_steps,
            nti_lr: nti.lr,
            seed: 0,
            record_runtime: false,
        }
    }
}

impl EditConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::invalid(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if !(self.guidance.is_finite() && self.guidance >= 0.0) {
            return Err(Error::invalid(format!("guidance must be >= 0, got {}", self.guidance)));
        }
        if !self.alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be finite, got {}", self.alpha)));
        }
        if self.opt_batch == 0 {
            return Err(Error::invalid("opt_batch must be at least 1"));
        }
        if let Some(lr) = self.opt_lr {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::invalid(format!("opt_lr must be positive, got {lr}")));
            }
        }
        Ok(())
    }

    fn opt_config(&self, backend: &Backend) -> OptimizeConfig {
        let default_lr = match backend {
            Backend::Analytic(_) => DEFAULT_ANALYTIC_LR,
            Backend::Network(_) => DEFAULT_NETWORK_LR,
        };
        OptimizeConfig {
            iterations: self.opt_iterations,
            lr: self.opt_lr.unwrap_or(default_lr),
            seed: self.seed,
            batch: self.opt_batch,
        }
    }

    fn nti_config(&self) -> NullTextConfig {
        NullTextConfig {
            guidance: self.guidance,
            inner_steps: self.nti_inner_steps,
            lr: self.nti_lr,
            ..NullTextConfig::default()
        }
    }
}

/// Number of leading sampling steps that get the source embedding: `round(rho * S)`, ties up.
pub fn source_step_count(rho: f64, steps: usize) -> usize {
    ((rho * steps as f64 + 0.5).floor() as usize).min(steps)
}

/// Per-step conditioning for one edit.
#[derive(Debug, Clone)]
pub struct InjectionSchedule<'a> {
    pub embeddings: Vec<&'a Embedding>,
    pub roles: Vec<EmbeddingRole>,
    pub source_steps: usize,
    /// Smallest timestep still conditioned on the source; `None` when no step is.
    pub threshold: Option<usize>,
}

pub fn embedding_schedule<'a>(
    e_src: &'a Embedding,
    e_int: &'a Embedding,
    rho: f64,
    plan: &StepPlan,
) -> Result<InjectionSchedule<'a>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho must lie in [0, 1], got {rho}")));
    }
    let k = source_step_count(rho, plan.steps());
    let (embeddings, roles) = (0..plan.steps())
        .map(|i| {
            if i < k {
                (e_src, EmbeddingRole::Source)
            } else {
                (e_int, EmbeddingRole::Interpolated)
            }
        })
        .unzip();
    Ok(InjectionSchedule {
        embeddings,
        roles,
        source_steps: k,
        threshold: k.checked_sub(1).map(|i| plan.timesteps()[i]),
    })
}

/// Everything an edit reads that does not vary across a sweep.
#[derive(Debug, Clone, Copy)]
pub struct EditTask<'a> {
    pub x_input: &'a [f64],
    pub src_prompt: &'a [String],
    pub tgt_prompt: &'a [String],
    pub vocab: &'a PromptVocabulary,
    pub backend: &'a Backend,
    pub sched: &'a NoiseSchedule,
    /// Data range used for PSNR.
    pub data_range: f64,
}

#[derive(Debug, Clone)]
pub struct EditResult {
    pub x_edit: Vec<f64>,
    pub trajectory: Trajectory,
    pub config: EditConfig,
    pub e_src: Arc<Embedding>,
    pub e_tgt: Arc<Embedding>,
    pub optimization: Arc<OptimizationReport>,
    pub e_int: Embedding,
    /// Absent for the fresh-noise baseline.
    pub inversion: Option<Arc<InversionResult>>,
    pub source_steps: usize,
    pub threshold: Option<usize>,
    pub metrics: MetricsRow,
}

struct Prepared {
    e_src: Arc<Embedding>,
    e_tgt: Arc<Embedding>,
}

impl<'a> EditTask<'a> {
    fn encode(&self) -> Result<Prepared> {
        let enc = |p: &[String]| self.vocab.encode(p).map(Arc::new);
        Ok(Prepared {
            e_src: enc(self.src_prompt).map_err(|e| e.in_stage("encode"))?,
            e_tgt: enc(self.tgt_prompt).map_err(|e| e.in_stage("encode"))?,
        })
    }

    fn optimize(&self, e_tgt: &Embedding, cfg: &EditConfig) -> Result<OptimizationReport> {
        let ocfg = cfg.opt_config(self.backend);
        if ocfg.iterations == 0 {
            return Ok(OptimizationReport {
                e_opt: e_tgt.clone(),
                loss_curve: Vec::new(),
                iterations: 0,
                seed: ocfg.seed,
                lr: ocfg.lr,
            });
        }
        optimize_embedding(self.x_input, e_tgt, self.backend, self.sched, &ocfg).map_err(|e| e.in_stage("optimize"))
    }

    fn invert(&self, e_src: &Embedding, cfg: &EditConfig) -> Result<InversionResult> {
        let plan = StepPlan::new(cfg.steps, self.sched).map_err(|e| e.in_stage("invert"))?;
        match cfg.inversion_kind {
            InversionKind::Ddim => ddim_invert(self.x_input, e_src, self.backend, self.sched, &plan),
            InversionKind::NullText => {
                null_text_invert(self.x_input, e_src, self.backend, self.sched, &plan, &cfg.nti_config())
            }
        }
        .map_err(|e| e.in_stage("invert"))
    }

    /// Identity and alignment numbers for an edited point.
    pub fn metrics(
        &self,
        x_edit: &[f64],
        cfg: &EditConfig,
        inversion: Option<&InversionResult>,
        runtime_ms: f64,
    ) -> Result<MetricsRow> {
        let m = mse(x_edit, self.x_input)?;
        Ok(MetricsRow {
            alpha: cfg.alpha,
            rho: cfg.rho,
            seed: cfg.seed,
            mse_input: m,
            psnr_input: psnr(x_edit, self.x_input, self.data_range)?,
            target_alignment: target_alignment(x_edit, self.tgt_prompt, self.vocab, self.backend, self.sched)?.value,
            source_alignment: target_alignment(x_edit, self.src_prompt, self.vocab, self.backend, self.sched)?.value,
            pivot_error_max: inversion.map_or(0.0, |inv| inv.max_pivot_error()),
            runtime_ms,
        })
    }

    fn finish(
        &self,
        cfg: &EditConfig,
        prepared: &Prepared,
        optimization: Arc<OptimizationReport>,
        inversion: Arc<InversionResult>,
        started: Instant,
    ) -> Result<EditResult> {
        let e_int = interpolate(&prepared.e_tgt, &optimization.e_opt, cfg.alpha).map_err(|e| e.in_stage("interpolate"))?;
        let plan = StepPlan::new(cfg.steps, self.sched).map_err(|e| e.in_stage("sample"))?;
        let zero = Embedding::null(self.vocab.dim());
        let (trajectory, schedule) = {
            let schedule = embedding_schedule(&prepared.e_src, &e_int, cfg.rho, &plan).map_err(|e| e.in_stage("sample"))?;
            let nulls = null_sequence(&inversion, &zero, &plan).map_err(|e| e.in_stage("sample"))?;
            let steps: Vec<StepConditioning<'_>> = schedule
                .embeddings
                .iter()
                .zip(&schedule.roles)
                .zip(nulls)
                .map(|((cond, role), uncond)| StepConditioning {
                    cond,
                    role: *role,
                    uncond,
                })
                .collect();
            let traj = sample(&inversion.z_t_star, &plan, self.backend, self.sched, &steps, cfg.guidance)
                .map_err(|e| e.in_stage("sample"))?;
            (traj, (schedule.source_steps, schedule.threshold))
        };
        let x_edit = trajectory.last().z.clone();
        let runtime = if cfg.record_runtime {
            started.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        let metrics = self
            .metrics(&x_edit, cfg, Some(&inversion), runtime)
            .map_err(|e| e.in_stage("metrics"))?;
        Ok(EditResult {
            x_edit,
            trajectory,
            config: cfg.clone(),
            e_src: prepared.e_src.clone(),
            e_tgt: prepared.e_tgt.clone(),
            optimization,
            e_int,
            inversion: Some(inversion),
            source_steps: schedule.0,
            threshold: schedule.1,
            metrics,
        })
    }
}

/// Optimize, invert, then sample with source injection for the first `round(rho * S)` steps.
pub fn edit(task: &EditTask<'_>, cfg: &EditConfig) -> Result<EditResult> {
    let started = Instant::now();
    cfg.validate()?;
    let prepared = task.encode()?;
    let optimization = Arc::new(task.optimize(&prepared.e_tgt, cfg)?);
    let inversion = Arc::new(task.invert(&prepared.e_src, cfg)?);
    task.finish(cfg, &prepared, optimization, inversion, started)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub alpha: f64,
    pub rho: f64,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// Successful cells in (seed, alpha, rho) order.
    pub results: Vec<EditResult>,
    pub failures: Vec<CellFailure>,
}

impl SweepOutcome {
    pub fn rows(&self) -> Vec<MetricsRow> {
        self.results.iter().map(|r| r.metrics.clone()).collect()
    }

    /// Mean `mse_input` per rho, ascending by rho.
    pub fn mean_mse_by_rho(&self) -> Vec<(f64, f64)> {
        mean_by(&self.results, |r| r.config.rho)
    }

    /// Mean `mse_input` per alpha, ascending by alpha.
    pub fn mean_mse_by_alpha(&self) -> Vec<(f64, f64)> {
        mean_by(&self.results, |r| r.config.alpha)
    }
}

fn mean_by(results: &[EditResult], key: impl Fn(&EditResult) -> f64) -> Vec<(f64, f64)> {
    let mut groups: Vec<(f64, f64, usize)> = Vec::new();
    for r in results {
        let k = key(r);
        match groups.iter_mut().find(|g| g.0 == k) {
            Some(g) => {
                g.1 += r.metrics.mse_input;
                g.2 += 1;
            }
            None => groups.push((k, r.metrics.mse_input, 1)),
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    groups.into_iter().map(|(k, sum, n)| (k, sum / n as f64)).collect()
}

/// Every `(alpha, rho, seed)` edit. One embedding optimization is shared per seed and one
/// inversion across the whole grid. Failed cells are recorded and the sweep continues.
pub fn sweep(
    task: &EditTask<'_>,
    alphas: &[f64],
    rhos: &[f64],
    seeds: &[u64],
    base: &EditConfig,
) -> Result<SweepOutcome> {
    if alphas.is_empty() || rhos.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("sweep grids must be nonempty"));
    }
    let started = Instant::now();
    base.validate()?;
    let prepared = task.encode()?;
    let inversion = task.invert(&prepared.e_src, base).map(Arc::new);
    let optimizations: Vec<Result<Arc<OptimizationReport>>> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = EditConfig { seed, ..base.clone() };
            task.optimize(&prepared.e_tgt, &cfg).map(Arc::new)
        })
        .collect();

    let cells: Vec<(usize, f64, f64)> = (0..seeds.len())
        .flat_map(|s| alphas.iter().flat_map(move |&a| rhos.iter().map(move |&r| (s, a, r))))
        .collect();
    let outcomes: Vec<std::result::Result<EditResult, CellFailure>> = cells
        .par_iter()
        .map(|&(s, alpha, rho)| {
            let cfg = EditConfig {
                alpha,
                rho,
                seed: seeds[s],
                ..base.clone()
            };
            let run = || -> Result<EditResult> {
                cfg.validate()?;
                let opt = optimizations[s].as_ref().map_err(clone_error)?.clone();
                let inv = inversion.as_ref().map_err(clone_error)?.clone();
                task.finish(&cfg, &prepared, opt, inv, started)
            };
            run().map_err(|e| CellFailure {
                alpha,
                rho,
                seed: seeds[s],
                error: e.to_string(),
            })
        })
        .collect();

    let mut outcome = SweepOutcome {
        results: Vec::new(),
        failures: Vec::new(),
    };
    for o in outcomes {
        match o {
            Ok(r) => outcome.results.push(r),
            Err(f) => {
                log::warn!(
                    "sweep cell alpha={} rho={} seed={} failed: {}",
                    f.alpha,
                    f.rho,
                    f.seed,
                    f.error
                );
                outcome.failures.push(f)
            }
        }
    }
    Ok(outcome)
}

fn clone_error(e: &Error) -> Error {
    Error::invalid(e.to_string())
}

/// Model-finetuning baseline: optimize the embedding, finetune the network on the input,
/// then sample from fresh noise with the interpolated embedding. No inversion, no injection.
pub fn imagic_pipeline(task: &EditTask<'_>, cfg: &EditConfig, finetune_iterations: usize) -> Result<EditResult> {
    let started = Instant::now();
    cfg.validate()?;
    task.backend.as_network().map_err(|e| e.in_stage("finetune"))?;
    let prepared = task.encode()?;
    let optimization = Arc::new(task.optimize(&prepared.e_tgt, cfg)?);
    let ft = OptimizeConfig {
        iterations: finetune_iterations,
        lr: DEFAULT_NETWORK_LR,
        seed: cfg.seed ^ FINETUNE_SEED_SALT,
        batch: cfg.opt_batch,
    };
    let (tuned, _) = imagic_finetune(task.backend, task.x_input, &optimization.e_opt, task.sched, &ft)
        .map_err(|e| e.in_stage("finetune"))?;
    let e_int = interpolate(&prepared.e_tgt, &optimization.e_opt, cfg.alpha).map_err(|e| e.in_stage("interpolate"))?;

    let plan = StepPlan::new(cfg.steps, task.sched).map_err(|e| e.in_stage("sample"))?;
    let zero = Embedding::null(task.vocab.dim());
    let steps: Vec<StepConditioning<'_>> = (0..plan.steps())
        .map(|_| StepConditioning {
            cond: &e_int,
            role: EmbeddingRole::Interpolated,
            uncond: &zero,
        })
        .collect();
    let z_t = fresh_noise(cfg.seed, task.x_input.len());
    let tuned_backend = Backend::Network(tuned);
    let trajectory =
        sample(&z_t, &plan, &tuned_backend, task.sched, &steps, cfg.guidance).map_err(|e| e.in_stage("sample"))?;
    let x_edit = trajectory.last().z.clone();
    let runtime = if cfg.record_runtime {
        started.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    let metrics = task.metrics(&x_edit, cfg, None, runtime).map_err(|e| e.in_stage("metrics"))?;
    Ok(EditResult {
        x_edit,
        trajectory,
        config: cfg.clone(),
        e_src: prepared.e_src,
        e_tgt: prepared.e_tgt,
        optimization,
        e_int,
        inversion: None,
        source_steps: 0,
        threshold: None,
        metrics,
    })
}

/// Seeded standard-normal starting latent for fresh-noise sampling.
pub fn fresh_noise(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_SEED_SALT);
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ToyWorld;
    use crate::inversion::reconstruct;

    fn emb(v: f64) -> Embedding {
        Embedding::from_rows(1, 2, vec![v, v]).unwrap()
    }

    #[test]
    fn step_counts() {
        assert_eq!(source_step_count(0.2, 50), 10);
        assert_eq!(source_step_count(0.0, 50), 0);
        assert_eq!(source_step_count(1.0, 50), 50);
        // 0.5 of a step rounds up
        assert_eq!(source_step_count(0.1, 5), 1);
        assert_eq!(source_step_count(0.3, 5), 2);
    }

    #[test]
    fn schedule_examples() {
        let sched = NoiseSchedule::default();
        let plan = StepPlan::new(50, &sched).unwrap();
        let (src, int) = (emb(1.0), emb(2.0));
        let s = embedding_schedule(&src, &int, 0.2, &plan).unwrap();
        assert_eq!(s.source_steps, 10);
        assert!(s.embeddings[..10].iter().all(|e| std::ptr::eq(*e, &src)));
        assert!(s.embeddings[10..].iter().all(|e| std::ptr::eq(*e, &int)));
        assert_eq!(s.threshold, Some(plan.timesteps()[9]));
        assert_eq!(s.threshold, Some(820));

        let none = embedding_schedule(&src, &int, 0.0, &plan).unwrap();
        assert!(none.roles.iter().all(|r| *r == EmbeddingRole::Interpolated));
        assert_eq!(none.threshold, None);
        let all = embedding_schedule(&src, &int, 1.0, &plan).unwrap();
        assert!(all.roles.iter().all(|r| *r == EmbeddingRole::Source));
        assert_eq!(all.threshold, Some(20));
        assert!(embedding_schedule(&src, &int, 1.5, &plan).is_err());
    }

    fn task_parts() -> (ToyWorld, Vec<f64>, Backend, NoiseSchedule) {
        let world = ToyWorld::new(2, 2, 1).unwrap();
        let x = world.mixture.means()[0].clone();
        let backend = Backend::Analytic(world.mixture.clone());
        (world, x, backend, NoiseSchedule::default())
    }

    #[test]
    fn full_source_at_unit_guidance_is_reconstruction() {
        let (world, x, backend, sched) = task_parts();
        let (src, tgt) = (vec!["classA".to_string()], vec!["classB".to_string()]);
        let task = EditTask {
            x_input: &x,
            src_prompt: &src,
            tgt_prompt: &tgt,
            vocab: &world.vocab,
            backend: &backend,
            sched: &sched,
            data_range: 6.0,
        };
        let cfg = EditConfig {
            rho: 1.0,
            guidance: 1.0,
            opt_iterations: 5,
            ..EditConfig::default()
        };
        let r = edit(&task, &cfg).unwrap();
        let plan = StepPlan::new(cfg.steps, &sched).unwrap();
        let (x_rec, traj) = reconstruct(r.inversion.as_ref().unwrap(), &r.e_src, &backend, &sched, &plan, 1.0).unwrap();
        assert_eq!(r.x_edit, x_rec);
        assert_eq!(r.trajectory, traj);
    }

    #[test]
    fn stage_errors_are_labeled() {
        let (world, x, backend, sched) = task_parts();
        let (src, tgt) = (vec!["classA".to_string()], vec!["nope".to_string()]);
        let task = EditTask {
            x_input: &x,
            src_prompt: &src,
            tgt_prompt: &tgt,
            vocab: &world.vocab,
            backend: &backend,
            sched: &sched,
            data_range: 6.0,
        };
        let err = edit(&task, &EditConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "encode", .. }));
        assert!(matches!(err.root(), Error::UnknownToken(_)));

        let tgt = vec!["classB".to_string()];
        let task = EditTask { tgt_prompt: &tgt, ..task };
        assert!(imagic_pipeline(&task, &EditConfig::default(), 0).is_err());
        let bad = EditConfig {
            rho: -0.1,
            ..EditConfig::default()
        };
        assert!(edit(&task, &bad).is_err());
    }

    #[test]
    fn sweep_of_one_cell_matches_edit() {
        let (world, x, backend, sched) = task_parts();
        let (src, tgt) = (vec!["classA".to_string()], vec!["classB".to_string()]);
        let task = EditTask {
            x_input: &x,
            src_prompt: &src,
            tgt_prompt: &tgt,
            vocab: &world.vocab,
            backend: &backend,
            sched: &sched,
            data_range: 6.0,
        };
        let cfg = EditConfig {
            opt_iterations: 20,
            guidance: 2.0,
            seed: 4,
            ..EditConfig::default()
        };
        let single = edit(&task, &cfg).unwrap();
        let out = sweep(&task, &[cfg.alpha], &[cfg.rho], &[cfg.seed], &cfg).unwrap();
        assert!(out.failures.is_empty());
        assert_eq!(out.results.len(), 1);
        assert_eq!(out.results[0].x_edit, single.x_edit);
        assert_eq!(out.results[0].metrics, single.metrics);
        assert!(sweep(&task, &[], &[0.0], &[1], &cfg).is_err());
    }

    #[test]
    fn failed_cells_are_recorded() {
        let (world, x, backend, sched) = task_parts();
        let (src, tgt) = (vec!["classA".to_string()], vec!["classB".to_string()]);
        let task = EditTask {
            x_input: &x,
            src_prompt: &src,
            tgt_prompt: &tgt,
            vocab: &world.vocab,
            backend: &backend,
            sched: &sched,
            data_range: 6.0,
        };
        let cfg = EditConfig {
            opt_iterations: 0,
            ..EditConfig::default()
        };
        let out = sweep(&task, &[0.5], &[0.0, 2.0], &[1, 2], &cfg).unwrap();
        assert_eq!(out.results.len(), 2);
        assert_eq!(out.failures.len(), 2);
        assert!(out.failures.iter().all(|f| f.rho == 2.0));
    }

    #[test]
    fn grouped_means() {
        let (world, x, backend, sched) = task_parts();
        let (src, tgt) = (vec!["classA".to_string()], vec!["classB".to_string()]);
        let task = EditTask {
            x_input: &x,
            src_prompt: &src,
            tgt_prompt: &tgt,
            vocab: &world.vocab,
            backend: &backend,
            sched: &sched,
            data_range: 6.0,
        };
        let cfg = EditConfig {
            opt_iterations: 0,
            steps: 10,
            ..EditConfig::default()
        };
        let out = sweep(&task, &[0.0, 1.0], &[0.4, 0.0], &[1], &cfg).unwrap();
        let by_rho = out.mean_mse_by_rho();
        assert_eq!(by_rho.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0.0, 0.4]);
        let manual: f64 = out
            .results
            .iter()
            .filter(|r| r.config.rho == 0.0)
            .map(|r| r.metrics.mse_input)
            .sum::<f64>()
            / 2.0;
        assert_eq!(by_rho[0].1, manual);
    }
}
