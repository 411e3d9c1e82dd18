//! CSV and binary export.
//!
//! Ensembles are written in long format, one row per path and record time:
//! `path_id,time,x1..xd[,v11..vdd][,lambda_min]`. The `v` and `lambda_min`
//! cells are filled on terminal rows only. Floats use Rust's shortest
//! round-trip scientific form, so the output is a pure function of the
//! ensemble and reading it back is exact.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::simulate::PathEnsemble;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleRow {
    pub path_id: u64,
    pub time: f64,
    pub values: Vec<Option<f64>>,
}

/// The ensemble CSV schema as data.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleTable {
    /// Value column names (after `path_id` and `time`).
    pub columns: Vec<String>,
    pub rows: Vec<EnsembleRow>,
}

const MAGIC: &[u8; 8] = b"HLENS\x00\x01\x00";

impl EnsembleTable {
    pub fn from_ensemble(ens: &PathEnsemble) -> Self {
        let d = ens.dim;
        let with_v = ens.paths.iter().any(|p| p.v.is_some());
        let with_lambda = ens.paths.iter().any(|p| p.lambda_min.is_some());
        let mut columns: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        if with_v {
            for i in 1..=d {
                for j in 1..=d {
                    columns.push(format!("v{i}{j}"));
                }
            }
        }
        if with_lambda {
            columns.push("lambda_min".into());
        }
        let last = ens.record_times.len().saturating_sub(1);
        let mut rows = Vec::with_capacity(ens.paths.len() * ens.record_times.len());
        for p in &ens.paths {
            for (t, (time, x)) in ens.record_times.iter().zip(&p.trajectory).enumerate() {
                let terminal = t == last && (*time - 1.0).abs() < 1e-12;
                let mut values: Vec<Option<f64>> = x.iter().map(|v| Some(*v)).collect();
                if with_v {
                    match (&p.v, terminal) {
                        (Some(v), true) => values.extend(v.iter().map(|x| Some(*x))),
                        _ => values.extend(std::iter::repeat_n(None, d * d)),
                    }
                }
                if with_lambda {
                    values.push(if terminal { p.lambda_min } else { None });
                }
                rows.push(EnsembleRow {
                    path_id: p.id as u64,
                    time: *time,
                    values,
                });
            }
        }
        EnsembleTable { columns, rows }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["path_id".to_string(), "time".to_string()];
        header.extend(self.columns.iter().cloned());
        out.write_record(&header)?;
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        for r in &self.rows {
            rec.clear();
            rec.push(r.path_id.to_string());
            rec.push(fmt_f64(r.time));
            rec.extend(r.values.iter().map(|v| v.map(fmt_f64).unwrap_or_default()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        if header.len() < 3 || &header[0] != "path_id" || &header[1] != "time" {
            return Err(Error::Format("ensemble CSV must start with path_id,time".into()));
        }
        let columns: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Format(format!("bad number '{s}'"))) };
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let path_id = rec[0].parse().map_err(|_| Error::Format(format!("bad path id '{}'", &rec[0])))?;
            let time = num(&rec[1])?;
            let values = rec
                .iter()
                .skip(2)
                .map(|s| if s.is_empty() { Ok(None) } else { num(s).map(Some) })
                .collect::<Result<_>>()?;
            rows.push(EnsembleRow { path_id, time, values });
        }
        Ok(EnsembleTable { columns, rows })
    }

    /// Little-endian binary form: magic, column names, then rows with a
    /// presence byte per value.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.columns.len() as u32).to_le_bytes())?;
        for c in &self.columns {
            w.write_all(&(c.len() as u32).to_le_bytes())?;
            w.write_all(c.as_bytes())?;
        }
        w.write_all(&(self.rows.len() as u64).to_le_bytes())?;
        for r in &self.rows {
            w.write_all(&r.path_id.to_le_bytes())?;
            w.write_all(&r.time.to_le_bytes())?;
            for v in &r.values {
                match v {
                    Some(x) => {
                        w.write_all(&[1])?;
                        w.write_all(&x.to_le_bytes())?;
                    }
                    None => w.write_all(&[0])?,
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
            let mut b = [0u8; N];
            r.read_exact(&mut b)?;
            Ok(b)
        }
        if &take::<8>(&mut r)? != MAGIC {
            return Err(Error::Format("not a binary ensemble file".into()));
        }
        let ncol = u32::from_le_bytes(take(&mut r)?) as usize;
        let mut columns = Vec::with_capacity(ncol);
        for _ in 0..ncol {
            let len = u32::from_le_bytes(take(&mut r)?) as usize;
            let mut s = vec![0u8; len];
            r.read_exact(&mut s)?;
            columns.push(String::from_utf8(s).map_err(|e| Error::Format(e.to_string()))?);
        }
        let nrow = u64::from_le_bytes(take(&mut r)?) as usize;
        let mut rows = Vec::with_capacity(nrow.min(1 << 20));
        for _ in 0..nrow {
            let path_id = u64::from_le_bytes(take(&mut r)?);
            let time = f64::from_le_bytes(take(&mut r)?);
            let mut values = Vec::with_capacity(ncol);
            for _ in 0..ncol {
                values.push(match take::<1>(&mut r)?[0] {
                    0 => None,
                    1 => Some(f64::from_le_bytes(take(&mut r)?)),
                    b => return Err(Error::Format(format!("bad presence byte {b}"))),
                });
            }
            rows.push(EnsembleRow { path_id, time, values });
        }
        Ok(EnsembleTable { columns, rows })
    }
}

/// One `statistic,value,stderr,n` row.
#[derive(Clone, Debug, PartialEq)]
pub struct StatRow {
    pub statistic: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub n: Option<usize>,
}

/// A named check and whether it passed.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Report of one command: the checks it ran, a statistics block and an
/// optional long-format block `eps,time,coordinate,statistic,value`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Report {
    pub title: String,
    pub checks: Vec<CheckLine>,
    pub stats: Vec<StatRow>,
    pub long: Vec<(f64, f64, usize, String, f64)>,
    pub notes: Vec<String>,
    /// Named text or CSV blocks printed after the summary.
    pub blocks: Vec<(String, String)>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Report {
            title: title.into(),
            ..Report::default()
        }
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckLine {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn stat(&mut self, statistic: impl Into<String>, value: f64, stderr: Option<f64>, n: Option<usize>) {
        self.stats.push(StatRow {
            statistic: statistic.into(),
            value,
            stderr,
            n,
        });
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn block(&mut self, name: impl Into<String>, text: impl Into<String>) {
        self.blocks.push((name.into(), text.into()));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }

    pub fn stats_csv(&self) -> String {
        let mut s = String::from("statistic,value,stderr,n\n");
        for r in &self.stats {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.statistic,
                fmt_f64(r.value),
                r.stderr.map(fmt_f64).unwrap_or_default(),
                r.n.map(|n| n.to_string()).unwrap_or_default()
            );
        }
        s
    }

    pub fn long_csv(&self) -> String {
        let mut s = String::from("eps,time,coordinate,statistic,value\n");
        for (e, t, k, name, v) in &self.long {
            let _ = writeln!(s, "{},{},{},{},{}", fmt_f64(*e), fmt_f64(*t), k, name, fmt_f64(*v));
        }
        s
    }

    /// Plain-text summary followed by the statistics block.
    pub fn render(&self) -> String {
        let mut s = format!("== {} ==\n", self.title);
        for c in &self.checks {
            let _ = writeln!(
                s,
                "[{}] {}{}",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                if c.detail.is_empty() { String::new() } else { format!(": {}", c.detail) }
            );
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        for (name, text) in &self.blocks {
            let _ = write!(s, "\n-- {name} --\n{text}");
            if !text.ends_with('\n') {
                s.push('\n');
            }
        }
        if !self.stats.is_empty() {
            s.push_str("\n-- statistics --\n");
            s.push_str(&self.stats_csv());
        }
        s
    }
}
