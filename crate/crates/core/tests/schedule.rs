mod common;

use common::oracle_alpha_bar;
use nrel_core::backends::GmmSpec;
use nrel_core::embedding::{Embedding, EmbeddingRole};
use nrel_core::sampling::{sample, StepConditioning};
use nrel_core::schedule::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[test]
fn schedule_matches_independent_product() {
    let s = make_schedule(1000, ScheduleKind::Linear).unwrap();
    for t in [0, 1, 2, 17, 500, 781, 801, 999, 1000] {
        let want = oracle_alpha_bar(t, 1000);
        assert!(((s.alpha_bar(t).unwrap() - want) / want).abs() < 1e-12, "t={t}");
    }
    assert_eq!(s.betas()[1], 1e-4);
    assert!((s.betas()[1000] - 2e-2).abs() < 1e-15);
    for total in [2, 3, 10, 250] {
        let s = make_schedule(total, ScheduleKind::Linear).unwrap();
        assert_eq!(s.alpha_bar(0).unwrap(), 1.0);
        assert!(s.alpha_bar(total).unwrap() > 0.0);
    }
}

#[test]
fn ddim_and_inversion_match_closed_form() {
    let s = NoiseSchedule::default();
    let (z, e) = ([0.8125, -1.375, 2.5], [0.3, 1.2, -0.45]);
    let (a_t, a_p) = (oracle_alpha_bar(801, 1000), oracle_alpha_bar(781, 1000));
    let got = ddim_step(&z, &e, 801, 781, &s).unwrap();
    for i in 0..3 {
        let x0 = (z[i] - (1.0 - a_t).sqrt() * e[i]) / a_t.sqrt();
        let want = a_p.sqrt() * x0 + (1.0 - a_p).sqrt() * e[i];
        assert!((got[i] - want).abs() < 1e-12);
    }
    let got = invert_step(&z, &e, 781, 801, &s).unwrap();
    for i in 0..3 {
        let want = (a_t / a_p).sqrt() * z[i] + a_t.sqrt() * ((1.0 / a_t - 1.0).sqrt() - (1.0 / a_p - 1.0).sqrt()) * e[i];
        assert!((got[i] - want).abs() < 1e-12);
    }
}

#[test]
fn forward_diffuse_substitution() {
    let s = NoiseSchedule::default();
    let a = oracle_alpha_bar(412, 1000);
    let z = forward_diffuse(&[1.0, 0.0], 412, &[0.0, 1.0], &s).unwrap();
    assert!((z[0] - a.sqrt()).abs() < 1e-14);
    assert!((z[1] - (1.0 - a).sqrt()).abs() < 1e-14);
}

#[test]
fn forward_diffuse_variance() {
    let s = NoiseSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for t in [1, 50, 300, 700, 1000] {
        let n = 20_000;
        let draws: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let eps: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
                forward_diffuse(&[0.0, 0.0], t, &eps, &s).unwrap()
            })
            .collect();
        let want = 1.0 - s.alpha_bar(t).unwrap();
        for j in 0..2 {
            let m = draws.iter().map(|z| z[j]).sum::<f64>() / n as f64;
            let var = draws.iter().map(|z| (z[j] - m).powi(2)).sum::<f64>() / n as f64;
            assert!(((var - want) / want).abs() < 0.05, "t={t} var={var} want={want}");
        }
    }
}

#[test]
fn single_standard_component_contracts_toward_origin() {
    let s = NoiseSchedule::default();
    let g = GmmSpec::standard_normal(2, 4);
    let e = Embedding::null(4);
    let plan = StepPlan::new(50, &s).unwrap();
    let steps = vec![
        StepConditioning {
            cond: &e,
            role: EmbeddingRole::Null,
            uncond: &e,
        };
        50
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let z_t: Vec<f64> = (0..2).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = z_t.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1.0 {
            continue;
        }
        let traj = sample(&z_t, &plan, &g, &s, &steps, 1.0).unwrap();
        assert!(traj.is_consistent());
        assert_eq!(traj.states.len(), 51);
        assert_eq!(traj.last().t, 0);
        let end = traj.last().z.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(end < norm);
    }
}

proptest! {
    #[test]
    fn step_round_trip_is_identity(
        z in prop::collection::vec(-10.0..10.0f64, 1..6),
        seed in any::<u64>(),
        t in 1usize..=1000,
        gap in 1usize..200,
    ) {
        let s = NoiseSchedule::default();
        let t_prev = t.saturating_sub(gap);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps: Vec<f64> = z.iter().map(|_| rng.sample(StandardNormal)).collect();
        let down = ddim_step(&z, &eps, t, t_prev, &s).unwrap();
        let back = invert_step(&down, &eps, t_prev, t, &s).unwrap();
        for (a, b) in back.iter().zip(&z) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        let up = invert_step(&z, &eps, t_prev, t, &s).unwrap();
        let back = ddim_step(&up, &eps, t, t_prev, &s).unwrap();
        for (a, b) in back.iter().zip(&z) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn unit_guidance_is_conditional(
        pair in prop::collection::vec((-1e6..1e6f64, -1e6..1e6f64), 1..8),
    ) {
        let (u, c): (Vec<f64>, Vec<f64>) = pair.into_iter().unzip();
        prop_assert_eq!(cfg_combine(&u, &c, 1.0).unwrap(), c);
    }

    #[test]
    fn plans_are_uniform_and_end_at_zero(steps in 1usize..=1000) {
        let s = NoiseSchedule::default();
        let plan = StepPlan::new(steps, &s).unwrap();
        let ts = plan.timesteps();
        prop_assert_eq!(ts.len(), steps);
        prop_assert_eq!(ts[0], 1000);
        prop_assert!(ts.windows(2).all(|w| w[0] > w[1]));
        prop_assert!(*ts.last().unwrap() >= 1);
        let spacing = 1000.0 / steps as f64;
        for w in ts.windows(2) {
            prop_assert!(((w[0] - w[1]) as f64 - spacing).abs() <= 1.0);
        }
        let pairs: Vec<_> = plan.sampling_pairs().collect();
        prop_assert_eq!(pairs.last().unwrap().1, 0);
        let inv: Vec<_> = plan.inversion_pairs().collect();
        prop_assert_eq!(inv[0].0, 0);
        let mut rev: Vec<_> = inv.iter().map(|(a, b)| (*b, *a)).collect();
        rev.reverse();
        prop_assert_eq!(rev, pairs);
    }

    #[test]
    fn forward_diffuse_keeps_shape_and_finiteness(
        z in prop::collection::vec(-100.0..100.0f64, 1..10),
        t in 0usize..=1000,
    ) {
        let s = NoiseSchedule::default();
        let eps: Vec<f64> = z.iter().map(|v| v * 0.5 - 1.0).collect();
        let out = forward_diffuse(&z, t, &eps, &s).unwrap();
        prop_assert_eq!(out.len(), z.len());
        prop_assert!(out.iter().all(|v| v.is_finite()));
    }
}
