use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "alpha,rho,seed,mse_input,psnr_input,target_alignment,source_alignment,pivot_error_max,runtime_ms";

/// One edit's identity and alignment numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub alpha: f64,
    pub rho: f64,
    pub seed: u64,
    pub mse_input: f64,
    pub psnr_input: f64,
    pub target_alignment: f64,
    pub source_alignment: f64,
    pub pivot_error_max: f64,
    pub runtime_ms: f64,
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

pub fn write_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            num(r.alpha),
            num(r.rho),
            r.seed,
            num(r.mse_input),
            num(r.psnr_input),
            num(r.target_alignment),
            num(r.source_alignment),
            num(r.pivot_error_max),
            num(r.runtime_ms)
        )
        .expect("writing to a String");
    }
    out
}

pub fn emit_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    fs::write(path, write_csv(rows))?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(Error::format("metrics csv", format!("unexpected header {other:?}"))),
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(Error::format("metrics csv", format!("bad row {line:?}")));
            }
            let p = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::format("metrics csv", format!("bad number {s:?}")))
            };
            Ok(MetricsRow {
                alpha: p(f[0])?,
                rho: p(f[1])?,
                seed: f[2]
                    .parse()
                    .map_err(|_| Error::format("metrics csv", format!("bad seed {:?}", f[2])))?,
                mse_input: p(f[3])?,
                psnr_input: p(f[4])?,
                target_alignment: p(f[5])?,
                source_alignment: p(f[6])?,
                pivot_error_max: p(f[7])?,
                runtime_ms: p(f[8])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> MetricsRow {
        MetricsRow {
            alpha: 0.9,
            rho: 0.2,
            seed: 7,
            mse_input: 0.125,
            psnr_input: f64::INFINITY,
            target_alignment: -3.5,
            source_alignment: -1.25,
            pivot_error_max: 0.0,
            runtime_ms: 0.0,
        }
    }

    #[test]
    fn header_only_for_no_rows() {
        assert_eq!(write_csv(&[]), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn row_format() {
        let text = write_csv(&[row()]);
        assert_eq!(text.lines().nth(1), Some("0.9,0.2,7,0.125,inf,-3.5,-1.25,0,0"));
        assert!(!text.contains(",\n"));
        assert_eq!(parse_csv(&text).unwrap(), vec![row()]);
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(parse_csv("a,b\n").is_err());
    }
}
