use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use nrel_core::backends::{train_denoiser, Backend, DenoiserNet, GmmSpec, NetShape, TrainConfig};
use nrel_core::checkpoint;
use nrel_core::data::{Dataset, ToyWorld};
use nrel_core::embedding::{parse_prompt, Embedding, PromptVocabulary};
use nrel_core::eval::{emit_csv, mse, render_scatter, AlignmentSurrogate, Viewport};
use nrel_core::inversion::{ddim_invert, null_text_invert, reconstruct, InversionKind, NullTextConfig};
use nrel_core::pipeline::{self, EditConfig, EditResult, EditTask};
use nrel_core::schedule::{NoiseSchedule, StepPlan};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{
    BackendKind, EditFlags, GenDataArgs, ImagicArgs, InputArgs, InvertArgs, KindArg, ReconCheckArgs, SamplingArgs,
    SweepArgs, TrainArgs,
};

/// `key = value` lines, the same format the config file uses.
#[derive(Default)]
struct Manifest(String);

impl Manifest {
    fn set(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        writeln!(self.0, "{key} = {value}").expect("writing to a String");
        self
    }

    fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.0).with_context(|| format!("writing {}", path.display()))
    }
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn surrogate(backend: &Backend) -> AlignmentSurrogate {
    match backend {
        Backend::Analytic(_) => AlignmentSurrogate::LogDensity,
        Backend::Network(_) => AlignmentSurrogate::NegDenoisingLoss,
    }
}

fn backend_name(kind: BackendKind) -> &'static str {
    match kind {
        BackendKind::Gmm => "gmm",
        BackendKind::Net => "net",
    }
}

fn viewport(ds: &Dataset) -> Viewport {
    let reach = ds
        .points
        .iter()
        .flat_map(|p| p.x.iter().take(2))
        .fold(1.0f64, |m, v| m.max(v.abs()));
    Viewport::centered(1.1 * reach)
}

fn render(ds: &Dataset, overlay: &[&[f64]], size: usize, path: &Path) -> Result<()> {
    let pts: Vec<&[f64]> = ds.points.iter().map(|p| p.x.as_slice()).collect();
    render_scatter(&pts, Some(overlay), viewport(ds), size)?.save(path)?;
    Ok(())
}

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    let ds = Dataset::generate(a.dim, a.classes, a.count, a.seed)?;
    ds.save(&a.out)?;
    if let Some(path) = &a.render {
        render(&ds, &[], a.size, path)?;
    }
    println!(
        "wrote {} points ({} classes, dim {}, seed {}) to {}",
        a.count,
        a.classes,
        a.dim,
        a.seed,
        a.out.display()
    );
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let ds = Dataset::load(&a.data)?;
    let world = ds.world()?;
    let shape = NetShape {
        data_dim: ds.dim,
        hidden: a.hidden,
        embed_dim: world.vocab.dim(),
        ..NetShape::default()
    };
    let net = DenoiserNet::init(shape, a.seed)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        seed: a.seed,
        batch_size: a.batch_size,
        cond_drop: a.cond_drop,
    };
    let (net, vocab, losses) =
        train_denoiser(&net, &world.vocab, &ds.training_samples(), &NoiseSchedule::default(), &cfg)?;
    checkpoint::save_net(&a.out, &net, &vocab)?;
    if let Some(path) = &a.losses {
        let mut csv = String::from("epoch,loss\n");
        for (i, l) in losses.iter().enumerate() {
            writeln!(csv, "{i},{l}")?;
        }
        fs::write(path, csv)?;
    }
    match (losses.first(), losses.last()) {
        (Some(first), Some(last)) => println!(
            "trained {} parameters for {} epochs: loss {first:.4} -> {last:.4}",
            net.param_count(),
            a.epochs
        ),
        _ => println!("saved untrained network with {} parameters", net.param_count()),
    }
    Ok(())
}

struct Loaded {
    ds: Dataset,
    backend: Backend,
    vocab: PromptVocabulary,
    x: Vec<f64>,
    label: Option<String>,
}

fn load(a: &InputArgs) -> Result<Loaded> {
    let ds = Dataset::load(&a.data)?;
    let (backend, vocab) = match a.backend {
        BackendKind::Gmm => {
            let world = ds.world()?;
            (Backend::Analytic(world.mixture), world.vocab)
        }
        BackendKind::Net => {
            let path = a.model.as_ref().context("--backend net needs --model")?;
            let (net, vocab) = checkpoint::load_net(path)?;
            ensure!(
                net.shape().data_dim == ds.dim,
                "model expects dimension {}, dataset has {}",
                net.shape().data_dim,
                ds.dim
            );
            (Backend::Network(net), vocab)
        }
    };
    let (x, label) = match (&a.input, &a.point) {
        (Some(i), _) => {
            let p = ds
                .points
                .get(*i)
                .with_context(|| format!("row {i} is out of range for {} points", ds.points.len()))?;
            (p.x.clone(), Some(p.label.clone()))
        }
        (None, Some(p)) => {
            ensure!(p.len() == ds.dim, "point has {} coordinates, dataset has {}", p.len(), ds.dim);
            (p.clone(), None)
        }
        (None, None) => bail!("give --input or --point"),
    };
    Ok(Loaded {
        ds,
        backend,
        vocab,
        x,
        label,
    })
}

fn kind(k: KindArg) -> InversionKind {
    match k {
        KindArg::Ddim => InversionKind::Ddim,
        KindArg::NullText => InversionKind::NullText,
    }
}

pub fn invert(a: &InvertArgs) -> Result<()> {
    let l = load(&a.input)?;
    let src = parse_prompt(a.src.as_deref().or(l.label.as_deref()).unwrap_or(""));
    let e_src = l.vocab.encode(&src)?;
    let sched = NoiseSchedule::default();
    let s = &a.sampling;
    let plan = StepPlan::new(s.steps, &sched)?;
    let (inv, w) = match kind(s.kind) {
        InversionKind::Ddim => (ddim_invert(&l.x, &e_src, &l.backend, &sched, &plan)?, 1.0),
        InversionKind::NullText => {
            let cfg = NullTextConfig {
                guidance: s.guidance,
                inner_steps: s.inner_steps,
                lr: s.nti_lr,
                ..NullTextConfig::default()
            };
            (null_text_invert(&l.x, &e_src, &l.backend, &sched, &plan, &cfg)?, s.guidance)
        }
    };
    let (recon, _) = reconstruct(&inv, &e_src, &l.backend, &sched, &plan, w)?;
    let err = mse(&recon, &l.x)?;
    checkpoint::save_inversion(&a.out, &inv)?;
    let mut m = Manifest::default();
    m.set("backend", backend_name(a.input.backend))
        .set("src", src.join(" "))
        .set("x_input", join(&l.x))
        .set("reconstruction", join(&recon))
        .set("reconstruction_mse", err);
    fs::OpenOptions::new()
        .append(true)
        .open(a.out.join("manifest.txt"))?
        .write_all(m.0.as_bytes())?;
    println!(
        "{} inversion over {} steps: reconstruction mse {err:.3e}, max pivot error {:.3e}",
        inv.kind.as_str(),
        s.steps,
        inv.max_pivot_error()
    );
    Ok(())
}

fn edit_config(f: &EditFlags, seed: u64) -> EditConfig {
    let s: &SamplingArgs = &f.sampling;
    EditConfig {
        alpha: f.alpha,
        rho: f.rho,
        steps: s.steps,
        guidance: s.guidance,
        inversion_kind: kind(s.kind),
        opt_iterations: f.opt_iters,
        opt_lr: f.opt_lr,
        opt_batch: f.opt_batch,
        nti_inner_steps: s.inner_steps,
        nti_lr: s.nti_lr,
        seed,
        record_runtime: f.record_runtime,
    }
}

fn config_manifest(m: &mut Manifest, f: &EditFlags, backend: &Backend, src: &[String], tgt: &[String]) {
    let s = &f.sampling;
    m.set("backend", backend_name(f.input.backend))
        .set("src", src.join(" "))
        .set("tgt", tgt.join(" "))
        .set("steps", s.steps)
        .set("guidance", s.guidance)
        .set("kind", kind(s.kind).as_str())
        .set("opt_iters", f.opt_iters)
        .set("opt_batch", f.opt_batch)
        .set("alignment_surrogate", surrogate(backend).as_str());
}

fn write_edit(dir: &Path, f: &EditFlags, l: &Loaded, r: &EditResult, src: &[String], tgt: &[String]) -> Result<()> {
    create_dir(dir)?;
    let mut m = Manifest::default();
    config_manifest(&mut m, f, &l.backend, src, tgt);
    m.set("alpha", r.config.alpha)
        .set("rho", r.config.rho)
        .set("seed", r.config.seed)
        .set("opt_lr", r.optimization.lr)
        .set("source_steps", r.source_steps)
        .set("threshold_t", r.threshold.map_or("none".to_string(), |t| t.to_string()))
        .set("embeddings_used", join(&r.trajectory.embeddings_used))
        .set("x_input", join(&l.x))
        .set("x_edit", join(&r.x_edit))
        .set("metrics", "metrics.csv");
    m.save(&dir.join("manifest.txt"))?;
    emit_csv(std::slice::from_ref(&r.metrics), &dir.join("metrics.csv"))?;
    checkpoint::save_embedding(&dir.join("e_opt.bin"), &r.optimization.e_opt)?;
    checkpoint::save_embedding(&dir.join("e_int.bin"), &r.e_int)?;
    let mut curve = String::from("iter,loss\n");
    for (i, v) in r.optimization.loss_curve.iter().enumerate() {
        writeln!(curve, "{i},{v}")?;
    }
    fs::write(dir.join("opt_loss.csv"), curve)?;
    let states: Vec<&[f64]> = r.trajectory.states.iter().map(|s| s.z.as_slice()).collect();
    checkpoint::save_latents(&dir.join("trajectory.bin"), &states)?;
    if let Some(inv) = &r.inversion {
        checkpoint::save_inversion(&dir.join("inversion"), inv)?;
    }
    render(&l.ds, &[&l.x, &r.x_edit], f.size, &dir.join("edit.ppm"))?;
    Ok(())
}

fn prompts(f: &EditFlags) -> (Vec<String>, Vec<String>) {
    (parse_prompt(&f.src), parse_prompt(&f.tgt))
}

fn task<'a>(l: &'a Loaded, src: &'a [String], tgt: &'a [String], sched: &'a NoiseSchedule) -> EditTask<'a> {
    EditTask {
        x_input: &l.x,
        src_prompt: src,
        tgt_prompt: tgt,
        vocab: &l.vocab,
        backend: &l.backend,
        sched,
        data_range: l.ds.value_range(),
    }
}

fn report(r: &EditResult) {
    let m = &r.metrics;
    println!(
        "x_edit = [{}]  mse_input {:.4}  psnr {:.2} dB  target alignment {:.4}  source steps {}",
        join(&r.x_edit),
        m.mse_input,
        m.psnr_input,
        m.target_alignment,
        r.source_steps
    );
}

pub fn edit(f: &EditFlags) -> Result<()> {
    let l = load(&f.input)?;
    let (src, tgt) = prompts(f);
    let sched = NoiseSchedule::default();
    let r = pipeline::edit(&task(&l, &src, &tgt, &sched), &edit_config(f, f.seed))?;
    write_edit(&f.out, f, &l, &r, &src, &tgt)?;
    report(&r);
    Ok(())
}

pub fn imagic(a: &ImagicArgs) -> Result<()> {
    let f = &a.edit;
    ensure!(f.input.backend == BackendKind::Net, "the finetuning baseline needs --backend net");
    let l = load(&f.input)?;
    let (src, tgt) = prompts(f);
    let sched = NoiseSchedule::default();
    let r = pipeline::imagic_pipeline(&task(&l, &src, &tgt, &sched), &edit_config(f, f.seed), a.finetune_iters)?;
    write_edit(&f.out, f, &l, &r, &src, &tgt)?;
    let mut m = fs::OpenOptions::new().append(true).open(f.out.join("manifest.txt"))?;
    writeln!(m, "finetune_iters = {}", a.finetune_iters)?;
    report(&r);
    Ok(())
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let f = &a.edit;
    let l = load(&f.input)?;
    let (src, tgt) = prompts(f);
    let sched = NoiseSchedule::default();
    let out = pipeline::sweep(&task(&l, &src, &tgt, &sched), &a.alphas, &a.rhos, &a.seeds, &edit_config(f, 0))?;
    create_dir(&f.out)?;
    emit_csv(&out.rows(), &f.out.join("metrics.csv"))?;
    let mut m = Manifest::default();
    config_manifest(&mut m, f, &l.backend, &src, &tgt);
    m.set("alphas", join(&a.alphas))
        .set("rhos", join(&a.rhos))
        .set("seeds", join(&a.seeds))
        .set("x_input", join(&l.x))
        .set("cells", out.results.len())
        .set("failed_cells", out.failures.len());
    for (rho, v) in out.mean_mse_by_rho() {
        m.set(&format!("mean_mse_rho_{rho}"), v);
    }
    for (alpha, v) in out.mean_mse_by_alpha() {
        m.set(&format!("mean_mse_alpha_{alpha}"), v);
    }
    m.set("metrics", "metrics.csv");
    m.save(&f.out.join("manifest.txt"))?;
    if !out.failures.is_empty() {
        let mut csv = String::from("alpha,rho,seed,error\n");
        for c in &out.failures {
            writeln!(csv, "{},{},{},\"{}\"", c.alpha, c.rho, c.seed, c.error.replace('"', "'"))?;
        }
        fs::write(f.out.join("failures.csv"), csv)?;
    }
    for (rho, v) in out.mean_mse_by_rho() {
        println!("rho {rho}: mean mse_input {v:.4}");
    }
    println!(
        "{} cells written to {} ({} failed)",
        out.results.len(),
        f.out.join("metrics.csv").display(),
        out.failures.len()
    );
    Ok(())
}

pub fn recon_check(a: &ReconCheckArgs) -> Result<()> {
    ensure!(a.backend == BackendKind::Gmm, "recon-check runs on the analytic backend only");
    ensure!(a.count > 0, "--count must be positive");
    let ds = match &a.data {
        Some(p) => Dataset::load(p)?,
        None => Dataset::generate(2, 2, 2000, 0)?,
    };
    let world: ToyWorld = ds.world()?;
    let sched = NoiseSchedule::default();
    let plan = StepPlan::new(a.steps, &sched)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let var = ds.variance();

    let mixture = Backend::Analytic(world.mixture.clone());
    let standard = GmmSpec::standard_normal(ds.dim, world.vocab.dim());
    let single = Backend::Analytic(standard.clone());
    let null = Embedding::null(world.vocab.dim());
    let mut csv = String::from("case,index,mse\n");
    let mut means = Vec::new();
    for (case, backend) in [("mixture", &mixture), ("single", &single)] {
        let mut total = 0.0;
        for i in 0..a.count {
            let (x, e) = match case {
                "mixture" => {
                    let k = i % world.class_tokens.len();
                    let tok = &world.class_tokens[k];
                    (world.sample_class(k, &mut rng), world.vocab.encode(&[tok.as_str()])?)
                }
                _ => (standard.sample_component(0, &mut rng), null.clone()),
            };
            let inv = ddim_invert(&x, &e, backend, &sched, &plan)?;
            let (recon, _) = reconstruct(&inv, &e, backend, &sched, &plan, 1.0)?;
            let err = mse(&recon, &x)?;
            writeln!(csv, "{case},{i},{err}")?;
            total += err;
        }
        means.push(total / a.count as f64);
    }
    create_dir(&a.out)?;
    fs::write(a.out.join("roundtrip.csv"), csv)?;
    let (mix_bound, single_bound) = (1e-3 * var, 1e-6);
    let mut m = Manifest::default();
    m.set("backend", "gmm")
        .set("steps", a.steps)
        .set("count", a.count)
        .set("seed", a.seed)
        .set("data_variance", var)
        .set("mixture_mean_mse", means[0])
        .set("mixture_bound", mix_bound)
        .set("mixture_pass", means[0] <= mix_bound)
        .set("single_mean_mse", means[1])
        .set("single_bound", single_bound)
        .set("single_pass", means[1] <= single_bound);
    m.save(&a.out.join("manifest.txt"))?;
    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
    println!(
        "{} mixture round trip: mean mse {:.3e} (bound {mix_bound:.3e})",
        verdict(means[0] <= mix_bound),
        means[0]
    );
    println!(
        "{} single standard component: mean mse {:.3e} (bound {single_bound:.0e})",
        verdict(means[1] <= single_bound),
        means[1]
    );
    Ok(())
}
