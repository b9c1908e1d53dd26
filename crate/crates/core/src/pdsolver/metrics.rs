use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str =
    "k,feasibility,lagrangian_gap,bregman_l1,l1_norm,support_size,f1,holdout_mse,epsilon_k,elapsed_ms";

/// One logged iteration; absent metrics are written as empty fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsRow {
    pub k: usize,
    pub feasibility: Option<f64>,
    pub lagrangian_gap: Option<f64>,
    pub bregman_l1: Option<f64>,
    pub l1_norm: Option<f64>,
    pub support_size: Option<usize>,
    pub f1: Option<f64>,
    pub holdout_mse: Option<f64>,
    pub epsilon_k: Option<f64>,
    pub elapsed_ms: Option<f64>,
}

impl MetricsRow {
    pub fn new(k: usize) -> Self {
        MetricsRow {
            k,
            ..Default::default()
        }
    }

    fn to_csv(&self) -> String {
        fn f(v: Option<f64>) -> String {
            v.map(|x| format!("{x:e}")).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.k,
            f(self.feasibility),
            f(self.lagrangian_gap),
            f(self.bregman_l1),
            f(self.l1_norm),
            self.support_size.map(|s| s.to_string()).unwrap_or_default(),
            f(self.f1),
            f(self.holdout_mse),
            f(self.epsilon_k),
            self.elapsed_ms.map(|x| format!("{x:.3}")).unwrap_or_default(),
        )
    }

    fn from_csv(line: &str, lineno: usize) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 10 fields, got {}", fields.len()),
            });
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("bad number {s:?}"),
                })
            }
        };
        let int = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad integer {s:?}"),
            })
        };
        Ok(MetricsRow {
            k: int(fields[0])?,
            feasibility: opt(fields[1])?,
            lagrangian_gap: opt(fields[2])?,
            bregman_l1: opt(fields[3])?,
            l1_norm: opt(fields[4])?,
            support_size: if fields[5].is_empty() { None } else { Some(int(fields[5])?) },
            f1: opt(fields[6])?,
            holdout_mse: opt(fields[7])?,
            epsilon_k: opt(fields[8])?,
            elapsed_ms: opt(fields[9])?,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    /// Pairs `(k, value)` for every row where `get` yields a value.
    pub fn series(&self, get: impl Fn(&MetricsRow) -> Option<f64>) -> Vec<(usize, f64)> {
        self.rows.iter().filter_map(|r| get(r).map(|v| (r.k, v))).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{METRICS_HEADER}")?;
        for r in &self.rows {
            writeln!(w, "{}", r.to_csv())?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != METRICS_HEADER {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected header {header:?}"),
            });
        }
        let mut log = MetricsLog::default();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            log.push(MetricsRow::from_csv(line.trim_end(), i + 2)?);
        }
        Ok(log)
    }
}
