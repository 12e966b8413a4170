use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub lr: f64,
    /// Mean shot loss over the replicas (adaptation) or batch loss (baseline).
    pub target_loss: f64,
    /// Present on evaluation iterations only.
    pub val_loss: Option<f64>,
    /// One similarity per source, in source order. Empty for the baseline.
    pub similarities: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub records: Vec<IterationRecord>,
    /// Iteration whose parameters were returned, when validation was used.
    pub best_iter: Option<usize>,
    pub stopped_early: bool,
}

impl History {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-source mean similarity over all recorded iterations.
    pub fn mean_similarities(&self) -> Vec<f64> {
        let k = self.records.first().map_or(0, |r| r.similarities.len());
        let mut sums = vec![0.0; k];
        for r in &self.records {
            for (s, v) in sums.iter_mut().zip(&r.similarities) {
                *s += v;
            }
        }
        let n = self.records.len().max(1) as f64;
        sums.into_iter().map(|s| s / n).collect()
    }

    /// CSV with columns `iter,lr,target_loss,val_loss,s_1..s_k`. Missing
    /// validation losses are empty fields.
    pub fn to_csv(&self) -> String {
        let k = self.records.first().map_or(0, |r| r.similarities.len());
        let mut out = String::from("iter,lr,target_loss,val_loss");
        for i in 1..=k {
            write!(out, ",s_{i}").unwrap();
        }
        out.push('\n');
        for r in &self.records {
            write!(out, "{},{},{},", r.iter, r.lr, r.target_loss).unwrap();
            if let Some(v) = r.val_loss {
                write!(out, "{v}").unwrap();
            }
            for s in &r.similarities {
                write!(out, ",{s}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<History> {
        let mut lines = text.lines().enumerate();
        let parse_err = |line: usize, message: String| Error::Parse {
            line: line + 1,
            message,
        };
        let (_, header) = lines.next().ok_or_else(|| parse_err(0, "empty history".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 4 || cols[..4] != ["iter", "lr", "target_loss", "val_loss"] {
            return Err(parse_err(0, format!("unexpected header '{header}'")));
        }
        let k = cols.len() - 4;
        let mut records = Vec::new();
        for (no, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 + k {
                return Err(parse_err(no, format!("expected {} fields", 4 + k)));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| parse_err(no, format!("bad number '{s}': {e}")))
            };
            records.push(IterationRecord {
                iter: f[0]
                    .parse()
                    .map_err(|e| parse_err(no, format!("bad iteration '{}': {e}", f[0])))?,
                lr: num(f[1])?,
                target_loss: num(f[2])?,
                val_loss: if f[3].is_empty() { None } else { Some(num(f[3])?) },
                similarities: f[4..].iter().map(|s| num(s)).collect::<Result<_>>()?,
            });
        }
        Ok(History {
            records,
            best_iter: None,
            stopped_early: false,
        })
    }
}

/// Square matrix CSV: row = target domain, column = source domain, entry =
/// training-mean similarity. The diagonal and missing pairs are empty.
pub fn similarity_matrix_csv(domains: usize, entries: &[(usize, usize, f64)]) -> String {
    let mut grid = vec![vec![None; domains]; domains];
    for &(t, s, v) in entries {
        if t < domains && s < domains {
            grid[t][s] = Some(v);
        }
    }
    let mut out = String::from("target");
    for s in 0..domains {
        write!(out, ",d{s}").unwrap();
    }
    out.push('\n');
    for (t, row) in grid.iter().enumerate() {
        write!(out, "d{t}").unwrap();
        for v in row {
            out.push(',');
            if let Some(v) = v {
                write!(out, "{v}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}
