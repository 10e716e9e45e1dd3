//! CSV formats. Absent values are empty cells; booleans are `0`/`1`.
//!
//! | file        | columns                                                   |
//! |-------------|-----------------------------------------------------------|
//! | records     | `id,issuer,delta,a,r,m,o,y_obs,x0..x{d-1},w1`             |
//! | truth       | `id,y_star,e,r,p,f,tau`                                   |
//! | audit       | `y_obs,y_true`                                            |
//! | scored      | `id,fold,u,base,auth_corr,report_corr,delay_corr,weight_total,y_corr,e_hat,r_hat,p_hat,label` |

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use seqtr_core::estimator::ScoredRecord;
use seqtr_core::sim::{PopulationTruth, TransactionRecord};

use crate::error::{CliError, CliResult};

const RECORD_PREFIX: [&str; 8] = ["id", "issuer", "delta", "a", "r", "m", "o", "y_obs"];
pub const TRUTH_HEADER: [&str; 7] = ["id", "y_star", "e", "r", "p", "f", "tau"];
pub const AUDIT_HEADER: [&str; 2] = ["y_obs", "y_true"];
pub const SCORED_HEADER: [&str; 13] = [
    "id",
    "fold",
    "u",
    "base",
    "auth_corr",
    "report_corr",
    "delay_corr",
    "weight_total",
    "y_corr",
    "e_hat",
    "r_hat",
    "p_hat",
    "label",
];

pub fn records_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = RECORD_PREFIX.iter().map(|s| s.to_string()).collect();
    h.extend((0..d).map(|j| format!("x{j}")));
    h.push("w1".into());
    h
}

fn bit(b: bool) -> String {
    if b { "1" } else { "0" }.into()
}

fn opt_bit(b: Option<bool>) -> String {
    b.map(bit).unwrap_or_default()
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

struct Cells<'a> {
    path: &'a Path,
    line: u64,
    row: &'a csv::StringRecord,
    header: &'a csv::StringRecord,
}

impl Cells<'_> {
    fn err(&self, col: usize, msg: impl std::fmt::Display) -> CliError {
        let name = self.header.get(col).unwrap_or("?");
        CliError::parse(self.path, self.line, format!("column {name}: {msg}"))
    }

    fn raw(&self, col: usize) -> &str {
        self.row.get(col).unwrap_or("").trim()
    }

    fn num<T: FromStr>(&self, col: usize) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        let s = self.raw(col);
        if s.is_empty() {
            return Err(self.err(col, "missing value"));
        }
        s.parse().map_err(|e| self.err(col, format!("{e} ({s:?})")))
    }

    fn real(&self, col: usize) -> CliResult<f64> {
        let v: f64 = self.num(col)?;
        if !v.is_finite() {
            return Err(self.err(col, "value is not finite"));
        }
        Ok(v)
    }

    fn opt_real(&self, col: usize) -> CliResult<Option<f64>> {
        if self.raw(col).is_empty() { Ok(None) } else { self.real(col).map(Some) }
    }

    fn flag(&self, col: usize) -> CliResult<bool> {
        match self.raw(col) {
            "1" => Ok(true),
            "0" => Ok(false),
            "" => Err(self.err(col, "missing value")),
            s => Err(self.err(col, format!("expected 0 or 1, got {s:?}"))),
        }
    }

    fn opt_flag(&self, col: usize) -> CliResult<Option<bool>> {
        if self.raw(col).is_empty() { Ok(None) } else { self.flag(col).map(Some) }
    }
}

fn reader(path: &Path) -> CliResult<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(BufReader::new(file)))
}

fn writer(path: &Path) -> CliResult<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new().from_writer(BufWriter::new(file)))
}

fn headers(path: &Path, rdr: &mut csv::Reader<BufReader<File>>) -> CliResult<csv::StringRecord> {
    rdr.headers().cloned().map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(_) => CliError::io(path, e),
        _ => CliError::parse(path, line, e.to_string()),
    }
}

fn expect_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> CliResult<()> {
    if got.iter().map(str::trim).ne(want.iter().copied()) {
        return Err(CliError::parse(
            path,
            1,
            format!("expected header {:?}, got {:?}", want.join(","), got.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(())
}

fn each_row(
    path: &Path,
    mut rdr: csv::Reader<BufReader<File>>,
    header: &csv::StringRecord,
    mut f: impl FnMut(&Cells) -> CliResult<()>,
) -> CliResult<()> {
    let mut row = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut row) {
            Ok(false) => return Ok(()),
            Ok(true) => {
                let line = row.position().map_or(0, |p| p.line());
                f(&Cells { path, line, row: &row, header })?;
            }
            Err(e) => return Err(csv_error(path, e)),
        }
    }
}

fn finish(path: &Path, mut w: csv::Writer<BufWriter<File>>) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))?;
    let inner = w.into_inner().map_err(|e| CliError::io(path, e.error()))?;
    inner.into_inner().map_err(|e| CliError::io(path, e.error()))?.flush().map_err(|e| CliError::io(path, e))
}

fn write_row(path: &Path, w: &mut csv::Writer<BufWriter<File>>, row: &[String]) -> CliResult<()> {
    w.write_record(row).map_err(|e| CliError::io(path, e))
}

pub fn write_records(path: &Path, records: &[TransactionRecord]) -> CliResult<()> {
    let d = records.first().map_or(0, |r| r.x.len());
    let mut w = writer(path)?;
    write_row(path, &mut w, &records_header(d))?;
    for rec in records {
        if rec.x.len() != d {
            return Err(CliError::Validation(format!("record {} has {} features, expected {d}", rec.id, rec.x.len())));
        }
        let mut row = vec![
            rec.id.to_string(),
            rec.issuer.to_string(),
            rec.delta.to_string(),
            bit(rec.a),
            opt_bit(rec.r),
            opt_bit(rec.m),
            bit(rec.o),
            opt_bit(rec.y_obs),
        ];
        row.extend(rec.x.iter().map(|v| v.to_string()));
        row.push(opt_num(rec.w1));
        write_row(path, &mut w, &row)?;
    }
    finish(path, w)
}

pub fn read_records(path: &Path) -> CliResult<Vec<TransactionRecord>> {
    let mut rdr = reader(path)?;
    let header = headers(path, &mut rdr)?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let valid = names.len() > RECORD_PREFIX.len()
        && names[..RECORD_PREFIX.len()] == RECORD_PREFIX
        && names.last() == Some(&"w1")
        && names[RECORD_PREFIX.len()..names.len() - 1]
            .iter()
            .enumerate()
            .all(|(j, n)| *n == format!("x{j}"));
    if !valid {
        return Err(CliError::parse(
            path,
            1,
            format!("expected header {:?}, got {:?}", "id,issuer,delta,a,r,m,o,y_obs,x0..,w1", names.join(",")),
        ));
    }
    let d = names.len() - RECORD_PREFIX.len() - 1;
    let mut out = Vec::new();
    each_row(path, rdr, &header, |c| {
        let delta = c.real(2)?;
        if delta <= 0.0 {
            return Err(c.err(2, "delay window must be positive"));
        }
        let rec = TransactionRecord {
            id: c.num(0)?,
            issuer: c.num(1)?,
            delta,
            a: c.flag(3)?,
            r: c.opt_flag(4)?,
            m: c.opt_flag(5)?,
            o: c.flag(6)?,
            y_obs: c.opt_flag(7)?,
            x: (0..d).map(|j| c.real(RECORD_PREFIX.len() + j)).collect::<CliResult<_>>()?,
            w1: c.opt_real(RECORD_PREFIX.len() + d)?,
        };
        rec.check_integrity().map_err(|e| CliError::parse(path, c.line, e.to_string()))?;
        out.push(rec);
        Ok(())
    })?;
    Ok(out)
}

pub fn write_truth(path: &Path, ids: &[u64], truth: &PopulationTruth) -> CliResult<()> {
    let mut w = writer(path)?;
    write_row(path, &mut w, &TRUTH_HEADER.map(String::from))?;
    for (i, id) in ids.iter().enumerate() {
        let row = [
            id.to_string(),
            bit(truth.y_star[i]),
            truth.e_true[i].to_string(),
            truth.r_true[i].to_string(),
            truth.p_true[i].to_string(),
            truth.f_true[i].to_string(),
            opt_num(truth.tau[i]),
        ];
        write_row(path, &mut w, &row)?;
    }
    finish(path, w)
}

/// Truth rows and their ids; `psi_true` is recomputed as the mean of `y_star`.
pub fn read_truth(path: &Path) -> CliResult<(Vec<u64>, PopulationTruth)> {
    let mut rdr = reader(path)?;
    let header = headers(path, &mut rdr)?;
    expect_header(path, &header, &TRUTH_HEADER)?;
    let mut ids = Vec::new();
    let mut t = PopulationTruth {
        y_star: Vec::new(),
        e_true: Vec::new(),
        r_true: Vec::new(),
        p_true: Vec::new(),
        f_true: Vec::new(),
        tau: Vec::new(),
        psi_true: 0.0,
    };
    each_row(path, rdr, &header, |c| {
        ids.push(c.num(0)?);
        t.y_star.push(c.flag(1)?);
        t.e_true.push(c.real(2)?);
        t.r_true.push(c.real(3)?);
        t.p_true.push(c.real(4)?);
        t.f_true.push(c.real(5)?);
        t.tau.push(c.opt_real(6)?);
        Ok(())
    })?;
    let positives = t.y_star.iter().filter(|&&y| y).count();
    t.psi_true = if ids.is_empty() { 0.0 } else { positives as f64 / ids.len() as f64 };
    Ok((ids, t))
}

pub fn write_audit(path: &Path, pairs: &[(bool, bool)]) -> CliResult<()> {
    let mut w = writer(path)?;
    write_row(path, &mut w, &AUDIT_HEADER.map(String::from))?;
    for &(obs, truth) in pairs {
        write_row(path, &mut w, &[bit(obs), bit(truth)])?;
    }
    finish(path, w)
}

pub fn read_audit(path: &Path) -> CliResult<Vec<(bool, bool)>> {
    let mut rdr = reader(path)?;
    let header = headers(path, &mut rdr)?;
    expect_header(path, &header, &AUDIT_HEADER)?;
    let mut out = Vec::new();
    each_row(path, rdr, &header, |c| {
        out.push((c.flag(0)?, c.flag(1)?));
        Ok(())
    })?;
    Ok(out)
}

pub fn write_scored(path: &Path, scored: &[ScoredRecord], labels: &[f64]) -> CliResult<()> {
    if scored.len() != labels.len() {
        return Err(CliError::Validation("labels must align with scored records".into()));
    }
    let mut w = writer(path)?;
    write_row(path, &mut w, &SCORED_HEADER.map(String::from))?;
    for (s, label) in scored.iter().zip(labels) {
        let row = [
            s.id.to_string(),
            s.fold.to_string(),
            s.u.to_string(),
            s.base.to_string(),
            s.auth_corr.to_string(),
            s.report_corr.to_string(),
            s.delay_corr.to_string(),
            s.weight_total.to_string(),
            opt_num(s.y_corr),
            s.e_hat.to_string(),
            s.r_hat.to_string(),
            s.p_hat.to_string(),
            label.to_string(),
        ];
        write_row(path, &mut w, &row)?;
    }
    finish(path, w)
}

pub fn read_scored(path: &Path) -> CliResult<(Vec<ScoredRecord>, Vec<f64>)> {
    let mut rdr = reader(path)?;
    let header = headers(path, &mut rdr)?;
    expect_header(path, &header, &SCORED_HEADER)?;
    let mut scored = Vec::new();
    let mut labels = Vec::new();
    each_row(path, rdr, &header, |c| {
        scored.push(ScoredRecord {
            id: c.num(0)?,
            fold: c.num(1)?,
            u: c.real(2)?,
            base: c.real(3)?,
            auth_corr: c.real(4)?,
            report_corr: c.real(5)?,
            delay_corr: c.real(6)?,
            weight_total: c.real(7)?,
            y_corr: c.opt_real(8)?,
            e_hat: c.real(9)?,
            r_hat: c.real(10)?,
            p_hat: c.real(11)?,
        });
        labels.push(c.real(12)?);
        Ok(())
    })?;
    Ok((scored, labels))
}

/// A plain table of preformatted cells.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = writer(path)?;
    write_row(path, &mut w, &header.iter().map(|s| s.to_string()).collect::<Vec<_>>())?;
    for row in rows {
        write_row(path, &mut w, &row)?;
    }
    finish(path, w)
}
