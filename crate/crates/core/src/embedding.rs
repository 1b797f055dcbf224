//! Token embeddings and the lookup table that stands in for a text encoder.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Longest prompt accepted by [`PromptVocabulary::encode`].
pub const MAX_PROMPT_TOKENS: usize = 8;

/// The reserved token whose row is all zeros.
pub const NULL_TOKEN: &str = "";

/// An `N x d` conditioning matrix with its cached row mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
    pooled: Vec<f64>,
}

impl Embedding {
    pub fn from_rows(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::invalid("embedding needs at least one row and column"));
        }
        if data.len() != rows * dim {
            return Err(Error::invalid(format!(
                "embedding data has {} entries, expected {rows}x{dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding entries must be finite"));
        }
        let pooled = pool(rows, dim, &data);
        Ok(Self {
            rows,
            dim,
            data,
            pooled,
        })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
            pooled: vec![0.0; dim],
        }
    }

    /// The null embedding: a single zero token.
    pub fn null(dim: usize) -> Self {
        Self::zeros(1, dim)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.dim)
    }

    /// Row-major token matrix.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn pooled(&self) -> &[f64] {
        &self.pooled
    }

    pub(crate) fn update(&mut self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.data);
        self.pooled = pool(self.rows, self.dim, &self.data);
    }
}

fn pool(rows: usize, dim: usize, data: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    let n = rows as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Spreads a gradient with respect to the pooled vector back onto the `N` token rows.
pub(crate) fn unpool_grad(pooled_grad: &[f64], rows: usize) -> Vec<f64> {
    let n = rows as f64;
    let row: Vec<f64> = pooled_grad.iter().map(|g| g / n).collect();
    row.repeat(rows)
}

/// Which embedding a sampling or inversion step consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmbeddingRole {
    Source,
    Target,
    Optimized,
    Interpolated,
    Null,
}

impl fmt::Display for EmbeddingRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingRole::Source => "e_src",
            EmbeddingRole::Target => "e_tgt",
            EmbeddingRole::Optimized => "e_opt",
            EmbeddingRole::Interpolated => "e_int",
            EmbeddingRole::Null => "null",
        })
    }
}

/// Token strings and their embedding rows. Row 0 is always the null token.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptVocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    table: Vec<f64>,
    seed: u64,
}

impl PromptVocabulary {
    /// Builds a table with standard-normal rows for `tokens`, preceded by the null row.
    pub fn seeded<S: AsRef<str>>(tokens: &[S], dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = vec![0.0; dim];
        for _ in tokens {
            table.extend((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        }
        Self::from_table(tokens, dim, table, seed)
    }

    /// `table` holds `1 + tokens.len()` rows, the first being the null row.
    pub fn from_table<S: AsRef<str>>(
        tokens: &[S],
        dim: usize,
        table: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let mut all = vec![NULL_TOKEN.to_string()];
        all.extend(tokens.iter().map(|t| t.as_ref().to_string()));
        if table.len() != all.len() * dim {
            return Err(Error::invalid(format!(
                "vocabulary table has {} entries, expected {}x{dim}",
                table.len(),
                all.len()
            )));
        }
        if table[..dim].iter().any(|v| *v != 0.0) {
            return Err(Error::invalid("the null token row must be zero"));
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("vocabulary rows must be finite"));
        }
        let mut index = HashMap::with_capacity(all.len());
        for (i, tok) in all.iter().enumerate() {
            if tok.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("token {tok:?} contains whitespace")));
            }
            if index.insert(tok.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Self {
            tokens: all,
            index,
            dim,
            table,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// All tokens, starting with the null token.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub(crate) fn table_mut(&mut self) -> &mut [f64] {
        &mut self.table
    }

    pub fn token_index(&self, token: &str) -> Result<usize> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.table[index * self.dim..(index + 1) * self.dim]
    }

    pub fn encode<S: AsRef<str>>(&self, prompt: &[S]) -> Result<Embedding> {
        if prompt.is_empty() || prompt.len() > MAX_PROMPT_TOKENS {
            return Err(Error::invalid(format!(
                "prompt must have 1..={MAX_PROMPT_TOKENS} tokens, got {}",
                prompt.len()
            )));
        }
        let mut data = Vec::with_capacity(prompt.len() * self.dim);
        for tok in prompt {
            let i = self.token_index(tok.as_ref())?;
            data.extend_from_slice(self.row(i));
        }
        Embedding::from_rows(prompt.len(), self.dim, data)
    }

    /// Token indices for a prompt, for gradient routing back into the table.
    pub fn indices<S: AsRef<str>>(&self, prompt: &[S]) -> Result<Vec<usize>> {
        prompt.iter().map(|t| self.token_index(t.as_ref())).collect()
    }
}

pub fn encode_prompt<S: AsRef<str>>(vocab: &PromptVocabulary, prompt: &[S]) -> Result<Embedding> {
    vocab.encode(prompt)
}

/// Splits a whitespace-separated prompt; an empty string is the null prompt `[""]`.
pub fn parse_prompt(text: &str) -> Vec<String> {
    let toks: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    if toks.is_empty() {
        vec![NULL_TOKEN.to_string()]
    } else {
        toks
    }
}
