mod common;

use common::*;
use nrel_core::backends::{Backend, GmmSpec};
use nrel_core::data::Dataset;
use nrel_core::embedding::PromptVocabulary;
use nrel_core::embedopt::{mean_denoising_loss, NoiseDraws};
use nrel_core::eval::*;
use nrel_core::schedule::NoiseSchedule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn mse_and_psnr_against_hand_values() {
    // diffs -0.8, -2.1, 3.0, -0.5; squares sum to 14.3
    let m = mse(&[0.3, -1.7, 2.25, 0.0], &[1.1, 0.4, -0.75, 0.5]).unwrap();
    assert!((m - 3.575).abs() < 1e-14);
    assert_eq!(mse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5);
    let p = psnr(&[0.0, 0.0], &[3.0, 4.0], 8.0).unwrap();
    assert!((p - 7.0926996097583075).abs() < 1e-12);
    assert_eq!(psnr(&[0.0], &[3.0], 3.0).unwrap(), 0.0);
    assert_eq!(psnr(&[1.5, 2.0], &[1.5, 2.0], 1.0).unwrap(), f64::INFINITY);
}

#[test]
fn analytic_alignment_is_the_mixture_log_density() {
    let (world, b, s) = toy();
    let g = &world.mixture;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for tokens in [&["classA"][..], &["classB"], &["classA", "classB"], &[""]] {
        let e = world.vocab.encode(tokens).unwrap();
        let logits: Vec<f64> = g
            .keys()
            .iter()
            .zip(g.log_priors())
            .map(|(u, lp)| u.iter().zip(e.pooled()).map(|(a, b)| a * b).sum::<f64>() + lp)
            .collect();
        let vars: Vec<f64> = g.scales().iter().map(|s| s * s).collect();
        for _ in 0..50 {
            let x = [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)];
            let got = target_alignment(&x, tokens, &world.vocab, &b, &s).unwrap();
            assert_eq!(got.surrogate, AlignmentSurrogate::LogDensity);
            let want = oracle_mixture_logpdf(&x, &softmax(&logits), g.means(), &vars);
            assert!((got.value - want).abs() <= 1e-10);
        }
    }

    let v = PromptVocabulary::seeded(&["only"], 4, 0).unwrap();
    let one = Backend::Analytic(GmmSpec::standard_normal(2, 4));
    let at_mode = target_alignment(&[0.0, 0.0], &["only"], &v, &one, &s).unwrap().value;
    assert!((at_mode + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
    let off = target_alignment(&[0.1, 0.0], &["only"], &v, &one, &s).unwrap().value;
    assert!(off < at_mode);
}

#[test]
fn network_alignment_uses_frozen_draws() {
    let (b, vocab, _) = small_trained_net();
    let s = NoiseSchedule::default();
    let x = [2.5, 0.3];
    let a1 = target_alignment(&x, &["classA"], &vocab, &b, &s).unwrap();
    let a2 = target_alignment(&x, &["classA"], &vocab, &b, &s).unwrap();
    assert_eq!(a1, a2);
    assert_eq!(a1.surrogate.as_str(), "neg_denoising_loss");
    let draws: Vec<_> = NoiseDraws::new(ALIGNMENT_SEED, 2, 1000).take(ALIGNMENT_DRAWS).collect();
    let e = vocab.encode(&["classA"]).unwrap();
    assert_eq!(a1.value, -mean_denoising_loss(&x, &e, &draws, &b, &s).unwrap());
}

#[test]
fn render_golden() {
    let pts = [[0.0, 0.0], [1.0, 1.0], [-2.0, -2.0]];
    let img = render_scatter(&pts, Some(&pts[1..2]), Viewport::centered(2.0), 16).unwrap();
    let mut want = vec![255u8; 3 * 16 * 16];
    for (col, row, color) in [(8, 8, [0, 0, 0]), (12, 4, [255, 0, 0]), (0, 15, [0, 0, 0])] {
        let i = 3 * (row * 16 + col);
        want[i..i + 3].copy_from_slice(&color);
    }
    let mut ppm = b"P6\n16 16\n255\n".to_vec();
    ppm.extend_from_slice(&want);
    assert_eq!(img.to_ppm(), ppm);
}

#[test]
fn renders_and_csvs_are_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let render = |name: &str| {
        let ds = Dataset::generate(2, 2, 300, 5).unwrap();
        let pts: Vec<&[f64]> = ds.points.iter().map(|p| p.x.as_slice()).collect();
        let path = dir.path().join(name);
        render_scatter(&pts, Some(&pts[..5]), Viewport::centered(5.0), 64)
            .unwrap()
            .save(&path)
            .unwrap();
        std::fs::read(path).unwrap()
    };
    assert_eq!(render("a.ppm"), render("b.ppm"));

    let rows: Vec<MetricsRow> = (0..5)
        .map(|i| {
            let m = 0.1 * (i + 1) as f64;
            MetricsRow {
                alpha: 0.9,
                rho: 0.2,
                seed: i,
                mse_input: m,
                psnr_input: 10.0 * (36.0 / m).log10(),
                target_alignment: -1.0 - m,
                source_alignment: -2.0,
                pivot_error_max: 1e-3,
                runtime_ms: 0.0,
            }
        })
        .collect();
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    emit_csv(&rows, &pa).unwrap();
    emit_csv(&rows, &pb).unwrap();
    let text = std::fs::read_to_string(&pa).unwrap();
    assert_eq!(std::fs::read(&pb).unwrap(), text.as_bytes());
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    let back = parse_csv(&text).unwrap();
    assert_eq!(back, rows);
    for r in &back {
        assert!((r.psnr_input - 10.0 * (36.0 / r.mse_input).log10()).abs() < 1e-12);
    }
    assert!((mean(&back.iter().map(|r| r.mse_input).collect::<Vec<_>>()) - 0.3).abs() < 1e-15);
}
