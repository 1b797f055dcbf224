use crate::backends::Backend;
use crate::embedding::PromptVocabulary;
use crate::embedopt::{mean_denoising_loss, NoiseDraws};
use crate::error::{ensure_same_len, Error, Result};
use crate::schedule::NoiseSchedule;

/// Fixed draws used by the network alignment surrogate.
pub const ALIGNMENT_DRAWS: usize = 64;
pub const ALIGNMENT_SEED: u64 = 0xa11_9e;

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    ensure_same_len(a, b, "mse")?;
    if a.is_empty() {
        return Err(Error::invalid("mse of empty vectors"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// `10 log10(range^2 / mse)`; `+inf` when the inputs are identical.
pub fn psnr(a: &[f64], b: &[f64], range: f64) -> Result<f64> {
    if !(range.is_finite() && range > 0.0) {
        return Err(Error::invalid(format!("psnr range must be positive, got {range}")));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (range * range / m).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignmentSurrogate {
    /// Exact `log p_0(x | e)` of the analytic mixture.
    LogDensity,
    /// Negated Monte-Carlo denoising loss over fixed draws.
    NegDenoisingLoss,
}

impl AlignmentSurrogate {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlignmentSurrogate::LogDensity => "gmm_log_density",
            AlignmentSurrogate::NegDenoisingLoss => "neg_denoising_loss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub value: f64,
    pub surrogate: AlignmentSurrogate,
}

/// How well `x` matches `prompt` under the model; higher is better aligned.
pub fn target_alignment<S: AsRef<str>>(
    x: &[f64],
    prompt: &[S],
    vocab: &PromptVocabulary,
    backend: &Backend,
    sched: &NoiseSchedule,
) -> Result<Alignment> {
    let e = vocab.encode(prompt)?;
    match backend {
        Backend::Analytic(g) => Ok(Alignment {
            value: g.log_density(x, &e)?,
            surrogate: AlignmentSurrogate::LogDensity,
        }),
        Backend::Network(_) => {
            let draws: Vec<_> = NoiseDraws::new(ALIGNMENT_SEED, x.len(), sched.timesteps())
                .take(ALIGNMENT_DRAWS)
                .collect();
            Ok(Alignment {
                value: -mean_denoising_loss(x, &e, &draws, backend, sched)?,
                surrogate: AlignmentSurrogate::NegDenoisingLoss,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::GmmSpec;

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5);
        // (0.5^2 + 1.25^2 + 2^2) / 3 = 5.8125 / 3
        let m = mse(&[1.0, -0.25, 3.0], &[0.5, 1.0, 1.0]).unwrap();
        assert!((m - 1.9375).abs() < 1e-15);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn psnr_cases() {
        assert_eq!(psnr(&[1.0], &[1.0], 2.0).unwrap(), f64::INFINITY);
        assert!(psnr(&[0.0], &[2.0], 2.0).unwrap().abs() < 1e-15);
        // mse = 0.01, range 1 -> 20 dB
        assert!((psnr(&[0.1], &[0.0], 1.0).unwrap() - 20.0).abs() < 1e-12);
        assert!(psnr(&[0.1], &[0.0], 0.0).is_err());
    }

    #[test]
    fn analytic_alignment_orders_classes() {
        let vocab = PromptVocabulary::seeded(&["classA", "classB"], 16, 3).unwrap();
        let g = GmmSpec::ring(&vocab, &["classA", "classB"], 2, 3.0, 0.5).unwrap();
        let b = Backend::Analytic(g.clone());
        let s = NoiseSchedule::default();
        let plus = &g.means()[0];
        let minus = &g.means()[1];
        let a_plus = target_alignment(plus, &["classA"], &vocab, &b, &s).unwrap();
        let a_minus = target_alignment(minus, &["classA"], &vocab, &b, &s).unwrap();
        assert_eq!(a_plus.surrogate, AlignmentSurrogate::LogDensity);
        assert!(a_plus.value > a_minus.value);
    }
}
