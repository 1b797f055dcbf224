//! Labeled toy datasets drawn from a ring mixture, and their text file format.
//!
//! ```text
//! D K count seed
//! x_1 ... x_D token
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backends::{GmmSpec, TrainingSample, RING_RADIUS, RING_SIGMA};
use crate::embedding::PromptVocabulary;
use crate::error::{Error, Result};

/// Token embedding dimension of the toy vocabulary.
pub const TOY_EMBED_DIM: usize = 16;

/// `classA`, `classB`, ... then `class26`, `class27`, ...
pub fn class_token(k: usize) -> String {
    if k < 26 {
        format!("class{}", (b'A' + k as u8) as char)
    } else {
        format!("class{k}")
    }
}

pub fn class_tokens(classes: usize) -> Vec<String> {
    (0..classes).map(class_token).collect()
}

/// The ground-truth conditional mixture and the vocabulary that indexes it.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyWorld {
    pub vocab: PromptVocabulary,
    pub mixture: GmmSpec,
    pub class_tokens: Vec<String>,
}

impl ToyWorld {
    pub fn new(dim: usize, classes: usize, seed: u64) -> Result<Self> {
        if classes == 0 {
            return Err(Error::invalid("need at least one class"));
        }
        let class_tokens = class_tokens(classes);
        let vocab = PromptVocabulary::seeded(&class_tokens, TOY_EMBED_DIM, seed)?;
        let mixture = GmmSpec::ring(&vocab, &class_tokens, dim, RING_RADIUS, RING_SIGMA)?;
        Ok(Self {
            vocab,
            mixture,
            class_tokens,
        })
    }

    pub fn sample_class<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        self.mixture.sample_component(k, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub classes: usize,
    pub seed: u64,
    pub points: Vec<LabeledPoint>,
}

impl Dataset {
    /// Seeded draws with uniformly chosen classes.
    pub fn generate(dim: usize, classes: usize, count: usize, seed: u64) -> Result<Self> {
        let world = ToyWorld::new(dim, classes, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_da7a);
        let points = (0..count)
            .map(|_| {
                let k = rng.random_range(0..classes);
                LabeledPoint {
                    x: world.sample_class(k, &mut rng),
                    label: world.class_tokens[k].clone(),
                }
            })
            .collect();
        Ok(Self {
            dim,
            classes,
            seed,
            points,
        })
    }

    pub fn world(&self) -> Result<ToyWorld> {
        ToyWorld::new(self.dim, self.classes, self.seed)
    }

    pub fn training_samples(&self) -> Vec<TrainingSample> {
        self.points
            .iter()
            .map(|p| TrainingSample {
                x: p.x.clone(),
                prompt: vec![p.label.clone()],
            })
            .collect()
    }

    /// Per-coordinate variance averaged over coordinates.
    pub fn variance(&self) -> f64 {
        let n = self.points.len() as f64;
        (0..self.dim)
            .map(|j| {
                let mean = self.points.iter().map(|p| p.x[j]).sum::<f64>() / n;
                self.points.iter().map(|p| (p.x[j] - mean).powi(2)).sum::<f64>() / n
            })
            .sum::<f64>()
            / self.dim as f64
    }

    /// Spread between the smallest and largest coordinate, used as the PSNR range.
    pub fn value_range(&self) -> f64 {
        let (lo, hi) = self
            .points
            .iter()
            .flat_map(|p| p.x.iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi > lo {
            hi - lo
        } else {
            1.0
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {} {}\n", self.dim, self.classes, self.points.len(), self.seed);
        for p in &self.points {
            for v in &p.x {
                write!(out, "{v} ").expect("writing to a String");
            }
            out.push_str(&p.label);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::format("dataset", "empty file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::format("dataset", format!("bad header {header:?}")));
        }
        let num = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| Error::format("dataset", format!("bad header field {s:?}")))
        };
        let (dim, classes, count, seed) = (
            num(fields[0])? as usize,
            num(fields[1])? as usize,
            num(fields[2])? as usize,
            num(fields[3])?,
        );
        let mut points = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != dim + 1 {
                return Err(Error::format(
                    "dataset",
                    format!("line {} has {} fields, expected {}", i + 2, fields.len(), dim + 1),
                ));
            }
            let x = fields[..dim]
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::format("dataset", format!("bad value {s:?} on line {}", i + 2)))
                })
                .collect::<Result<Vec<f64>>>()?;
            points.push(LabeledPoint {
                x,
                label: fields[dim].to_string(),
            });
        }
        if points.len() != count {
            return Err(Error::format(
                "dataset",
                format!("header declares {count} samples, found {}", points.len()),
            ));
        }
        Ok(Self {
            dim,
            classes,
            seed,
            points,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}
