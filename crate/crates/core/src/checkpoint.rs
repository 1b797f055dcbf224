//! Binary checkpoints: one ASCII header line, then little-endian `f64` values.
//!
//! The header is `nrel-<kind>` followed by space-separated `key=value` pairs giving
//! the dimensions needed to interpret the payload:
//!
//! | kind        | keys                         | payload                                       |
//! |-------------|------------------------------|-----------------------------------------------|
//! | `matrix`    | `rows cols`                  | `rows * cols` values, row-major               |
//! | `embedding` | `rows dim`                   | token matrix, row-major                       |
//! | `net`       | `D F d H tokens seed`        | network parameters, then the `(1+V) x d` table |
//!
//! For `net`, `tokens` is the comma-separated vocabulary excluding the leading null
//! token, and the parameter order is `W1, b1, W2, b2, W3, b3` (see [`DenoiserNet`]).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::backends::{DenoiserNet, NetShape};
use crate::embedding::{Embedding, PromptVocabulary};
use crate::error::{Error, Result};
use crate::inversion::{InversionKind, InversionResult};
use crate::schedule::{Direction, LatentState, Trajectory};
use crate::embedding::EmbeddingRole;

const MAGIC: &str = "nrel-";

pub fn encode(kind: &str, fields: &[(&str, String)], values: &[f64]) -> Vec<u8> {
    let mut header = format!("{MAGIC}{kind}");
    for (k, v) in fields {
        write!(header, " {k}={v}").expect("writing to a String");
    }
    header.push('\n');
    let mut out = header.into_bytes();
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub struct Decoded {
    pub kind: String,
    pub fields: BTreeMap<String, String>,
    pub values: Vec<f64>,
}

impl Decoded {
    pub fn usize(&self, key: &str) -> Result<usize> {
        self.fields
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format("checkpoint", format!("missing or bad field {key:?}")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Decoded> {
    let nl = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::format("checkpoint", "no header line"))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::format("checkpoint", "header is not UTF-8"))?;
    let mut parts = header.split(' ');
    let kind = parts
        .next()
        .and_then(|m| m.strip_prefix(MAGIC))
        .ok_or_else(|| Error::format("checkpoint", format!("bad magic in {header:?}")))?
        .to_string();
    let mut fields = BTreeMap::new();
    for part in parts {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::format("checkpoint", format!("bad header field {part:?}")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let payload = &bytes[nl + 1..];
    if payload.len() % 8 != 0 {
        return Err(Error::format("checkpoint", "payload is not a whole number of f64s"));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Decoded { kind, fields, values })
}

fn expect_kind(d: &Decoded, kind: &str) -> Result<()> {
    if d.kind != kind {
        return Err(Error::format(
            "checkpoint",
            format!("expected a {kind} checkpoint, found {}", d.kind),
        ));
    }
    Ok(())
}

fn expect_len(d: &Decoded, n: usize) -> Result<()> {
    if d.values.len() != n {
        return Err(Error::format(
            "checkpoint",
            format!("payload has {} values, header implies {n}", d.values.len()),
        ));
    }
    Ok(())
}

pub fn encode_matrix(rows: usize, cols: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), rows * cols);
    encode("matrix", &[("rows", rows.to_string()), ("cols", cols.to_string())], values)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let d = decode(bytes)?;
    expect_kind(&d, "matrix")?;
    let (rows, cols) = (d.usize("rows")?, d.usize("cols")?);
    expect_len(&d, rows * cols)?;
    Ok((rows, cols, d.values))
}

pub fn encode_embedding(e: &Embedding) -> Vec<u8> {
    encode(
        "embedding",
        &[("rows", e.rows().to_string()), ("dim", e.dim().to_string())],
        e.data(),
    )
}

pub fn decode_embedding(bytes: &[u8]) -> Result<Embedding> {
    let d = decode(bytes)?;
    expect_kind(&d, "embedding")?;
    let (rows, dim) = (d.usize("rows")?, d.usize("dim")?);
    expect_len(&d, rows * dim)?;
    Embedding::from_rows(rows, dim, d.values)
}

pub fn encode_net(net: &DenoiserNet, vocab: &PromptVocabulary) -> Vec<u8> {
    let s = net.shape();
    let tokens = vocab.tokens()[1..].join(",");
    let mut values = net.params().to_vec();
    values.extend_from_slice(vocab.table());
    encode(
        "net",
        &[
            ("D", s.data_dim.to_string()),
            ("F", s.freq_pairs.to_string()),
            ("d", s.embed_dim.to_string()),
            ("H", s.hidden.to_string()),
            ("tokens", tokens),
            ("seed", vocab.seed().to_string()),
        ],
        &values,
    )
}

pub fn decode_net(bytes: &[u8]) -> Result<(DenoiserNet, PromptVocabulary)> {
    let d = decode(bytes)?;
    expect_kind(&d, "net")?;
    let shape = NetShape {
        data_dim: d.usize("D")?,
        freq_pairs: d.usize("F")?,
        embed_dim: d.usize("d")?,
        hidden: d.usize("H")?,
    };
    let tokens: Vec<&str> = match d.fields.get("tokens").map(String::as_str) {
        None | Some("") => Vec::new(),
        Some(list) => list.split(',').collect(),
    };
    let n_params = shape.param_count();
    expect_len(&d, n_params + (tokens.len() + 1) * shape.embed_dim)?;
    let net = DenoiserNet::from_params(shape, d.values[..n_params].to_vec())?;
    let seed = match d.fields.get("seed") {
        None => 0,
        Some(v) => v
            .parse()
            .map_err(|_| Error::format("checkpoint", format!("bad vocabulary seed {v:?}")))?,
    };
    let vocab = PromptVocabulary::from_table(&tokens, shape.embed_dim, d.values[n_params..].to_vec(), seed)?;
    Ok((net, vocab))
}

pub fn save(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes)?;
    Ok(())
}

pub fn save_net(path: &Path, net: &DenoiserNet, vocab: &PromptVocabulary) -> Result<()> {
    save(path, &encode_net(net, vocab))
}

pub fn load_net(path: &Path) -> Result<(DenoiserNet, PromptVocabulary)> {
    decode_net(&fs::read(path)?)
}

pub fn save_embedding(path: &Path, e: &Embedding) -> Result<()> {
    save(path, &encode_embedding(e))
}

pub fn load_embedding(path: &Path) -> Result<Embedding> {
    decode_embedding(&fs::read(path)?)
}

pub fn save_latents(path: &Path, rows: &[&[f64]]) -> Result<()> {
    let cols = rows.first().map_or(0, |r| r.len());
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    save(path, &encode_matrix(rows.len(), cols, &flat))
}

/// Writes `manifest.txt`, `pivot_errors.csv`, `z_T_star.bin`, `pivot.bin` and,
/// for null-text results, `nulls.bin` (one flattened null embedding per row).
pub fn save_inversion(dir: &Path, inv: &InversionResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    writeln!(manifest, "kind = {}", inv.kind.as_str()).unwrap();
    writeln!(manifest, "steps = {}", inv.steps()).unwrap();
    writeln!(manifest, "guidance = {}", inv.guidance).unwrap();
    writeln!(manifest, "max_pivot_error = {}", inv.max_pivot_error()).unwrap();
    writeln!(manifest, "pivot_errors = pivot_errors.csv").unwrap();
    fs::write(dir.join("manifest.txt"), manifest)?;

    let mut csv = String::from("step,t,pivot_error\n");
    let n = inv.pivot.states.len();
    for (i, err) in inv.per_step_pivot_error.iter().enumerate() {
        writeln!(csv, "{i},{},{err}", inv.pivot.states[n - 2 - i].t).unwrap();
    }
    fs::write(dir.join("pivot_errors.csv"), csv)?;

    save_latents(&dir.join("z_T_star.bin"), &[&inv.z_t_star])?;
    let pivot: Vec<&[f64]> = inv.pivot.states.iter().map(|s| s.z.as_slice()).collect();
    save_latents(&dir.join("pivot.bin"), &pivot)?;
    let mut ts = String::new();
    for s in &inv.pivot.states {
        writeln!(ts, "{}", s.t).unwrap();
    }
    fs::write(dir.join("pivot_timesteps.txt"), ts)?;
    if let Some(nulls) = &inv.null_embeddings {
        let (rows, dim) = nulls[0].shape();
        let flat: Vec<f64> = nulls.iter().flat_map(|e| e.data().iter().copied()).collect();
        let bytes = encode(
            "matrix",
            &[
                ("rows", nulls.len().to_string()),
                ("cols", (rows * dim).to_string()),
                ("tokens", rows.to_string()),
            ],
            &flat,
        );
        save(&dir.join("nulls.bin"), &bytes)?;
    }
    Ok(())
}

pub fn load_inversion(dir: &Path) -> Result<InversionResult> {
    let manifest = fs::read_to_string(dir.join("manifest.txt"))?;
    let mut kind = None;
    let mut guidance = None;
    for line in manifest.lines() {
        if let Some((k, v)) = line.split_once('=') {
            match k.trim() {
                "kind" => kind = Some(v.trim().parse::<InversionKind>()?),
                "guidance" => guidance = v.trim().parse::<f64>().ok(),
                _ => {}
            }
        }
    }
    let kind = kind.ok_or_else(|| Error::format("inversion manifest", "missing kind"))?;
    let guidance = guidance.ok_or_else(|| Error::format("inversion manifest", "missing guidance"))?;

    let (_, _, z_t_star) = decode_matrix(&fs::read(dir.join("z_T_star.bin"))?)?;
    let (rows, cols, flat) = decode_matrix(&fs::read(dir.join("pivot.bin"))?)?;
    let ts: Vec<usize> = fs::read_to_string(dir.join("pivot_timesteps.txt"))?
        .lines()
        .map(|l| {
            l.trim()
                .parse()
                .map_err(|_| Error::format("pivot timesteps", format!("bad line {l:?}")))
        })
        .collect::<Result<_>>()?;
    if ts.len() != rows {
        return Err(Error::format("inversion", "pivot and timestep counts differ"));
    }
    let states = flat
        .chunks_exact(cols.max(1))
        .zip(&ts)
        .map(|(z, &t)| LatentState { z: z.to_vec(), t })
        .collect();
    let pivot = Trajectory {
        direction: Direction::Inversion,
        states,
        embeddings_used: vec![EmbeddingRole::Source; rows.saturating_sub(1)],
    };

    let errors: Vec<f64> = fs::read_to_string(dir.join("pivot_errors.csv"))?
        .lines()
        .skip(1)
        .map(|l| {
            l.rsplit(',')
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::format("pivot errors", format!("bad line {l:?}")))
        })
        .collect::<Result<_>>()?;

    let null_embeddings = if kind == InversionKind::NullText {
        let d = decode(&fs::read(dir.join("nulls.bin"))?)?;
        expect_kind(&d, "matrix")?;
        let (n, cols, tokens) = (d.usize("rows")?, d.usize("cols")?, d.usize("tokens")?);
        expect_len(&d, n * cols)?;
        if tokens == 0 || cols % tokens != 0 {
            return Err(Error::format("nulls", "token count does not divide row width"));
        }
        Some(
            d.values
                .chunks_exact(cols)
                .map(|c| Embedding::from_rows(tokens, cols / tokens, c.to_vec()))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    Ok(InversionResult {
        kind,
        z_t_star,
        pivot,
        null_embeddings,
        per_step_pivot_error: errors,
        guidance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let bytes = encode_matrix(1, 2, &[1.0, -2.5]);
        assert!(bytes.starts_with(b"nrel-matrix rows=1 cols=2\n"));
        assert_eq!(bytes.len(), "nrel-matrix rows=1 cols=2\n".len() + 16);
        assert_eq!(&bytes[bytes.len() - 8..], &(-2.5f64).to_le_bytes());
        assert_eq!(decode_matrix(&bytes).unwrap(), (1, 2, vec![1.0, -2.5]));
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut bytes = encode_matrix(1, 2, &[1.0, 2.0]);
        bytes.pop();
        assert!(decode_matrix(&bytes).is_err());
        let bytes = encode_matrix(1, 2, &[1.0, 2.0]);
        assert!(decode_embedding(&bytes).is_err());
    }

    #[test]
    fn net_round_trip() {
        let shape = NetShape {
            data_dim: 2,
            freq_pairs: 2,
            embed_dim: 3,
            hidden: 4,
        };
        let net = DenoiserNet::init(shape, 1).unwrap();
        let vocab = PromptVocabulary::seeded(&["classA", "classB"], 3, 5).unwrap();
        let (net2, vocab2) = decode_net(&encode_net(&net, &vocab)).unwrap();
        assert_eq!(net2, net);
        assert_eq!(vocab2.tokens(), vocab.tokens());
        assert_eq!(vocab2.table(), vocab.table());
    }
}
