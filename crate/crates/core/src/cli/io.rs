//! CSV files: datasets (`x0.., w0.., c0.., y, z`), predictions and results.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::{SampleBatch, Var};
use crate::error::{Error, Result};
use crate::eval::scenario::ResultRow;
use crate::{Mat, Vector};

const BLOCKS: [Var; 3] = [Var::X, Var::W, Var::C];

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        if !p.as_os_str().is_empty() {
            std::fs::create_dir_all(p)?;
        }
    }
    Ok(())
}

pub fn batch_to_csv(batch: &SampleBatch) -> Result<Vec<u8>> {
    let mut header = Vec::new();
    for v in BLOCKS {
        if let Ok(m) = batch.get(v) {
            header.extend((0..m.ncols()).map(|j| format!("{}{j}", v.prefix())));
        }
    }
    for v in [Var::Y, Var::Z] {
        if batch.has(v) {
            header.push(v.prefix().to_string());
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    let z = if batch.has(Var::Z) { Some(batch.z()?) } else { None };
    for i in 0..batch.n() {
        let mut rec = Vec::with_capacity(header.len());
        for v in [Var::X, Var::W, Var::C, Var::Y] {
            if let Ok(m) = batch.get(v) {
                rec.extend(m.row(i).iter().map(|&x| fmt_f64(x)));
            }
        }
        if let Some(z) = &z {
            rec.push(z[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_batch(path: &Path, batch: &SampleBatch) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, batch_to_csv(batch)?)?;
    Ok(())
}

fn parse_column(name: &str) -> Result<(Var, usize)> {
    match name {
        "y" => return Ok((Var::Y, 0)),
        "z" => return Ok((Var::Z, 0)),
        _ => {}
    }
    for v in BLOCKS {
        if let Some(rest) = name.strip_prefix(v.prefix()) {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                if let Ok(j) = rest.parse() {
                    return Ok((v, j));
                }
            }
        }
    }
    Err(Error::Data(format!("unknown column `{name}`")))
}

fn parse_f64(s: &str, row: usize, col: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Data(format!("row {row}, column {col}: cannot parse `{s}`")))
}

pub fn read_batch(path: &Path) -> Result<SampleBatch> {
    let mut r = csv::Reader::from_path(path)?;
    let names: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let cols = names.iter().map(|n| parse_column(n)).collect::<Result<Vec<_>>>()?;
    let mut layout: BTreeMap<Var, Vec<(usize, usize)>> = BTreeMap::new();
    for (pos, &(v, j)) in cols.iter().enumerate() {
        layout.entry(v).or_default().push((j, pos));
    }
    for (v, entries) in layout.iter_mut() {
        entries.sort_unstable();
        for (k, &(j, _)) in entries.iter().enumerate() {
            if j != k {
                return Err(Error::Data(format!(
                    "columns of {v} must be numbered 0..{} without gaps or repeats",
                    entries.len()
                )));
            }
        }
    }
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(Error::Data(format!("row {i} has {} fields, expected {}", rec.len(), names.len())));
        }
        for (c, field) in rec.iter().enumerate() {
            values[c].push(parse_f64(field, i, &names[c])?);
        }
    }
    let n = values.first().map_or(0, Vec::len);
    let mut batch = SampleBatch::new();
    for (v, entries) in &layout {
        match v {
            Var::Y => batch = batch.with_y(Vector::from_vec(values[entries[0].1].clone()))?,
            Var::Z => {
                let z = values[entries[0].1]
                    .iter()
                    .map(|&f| {
                        if f >= 0.0 && f.fract() == 0.0 {
                            Ok(f as usize)
                        } else {
                            Err(Error::Data(format!("domain index {f} is not a nonnegative integer")))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                batch = batch.with_z(&z)?;
            }
            _ => {
                let m = Mat::from_fn(n, entries.len(), |i, j| values[entries[j].1][i]);
                batch.insert(*v, m)?;
            }
        }
    }
    Ok(batch)
}

pub fn write_predictions(path: &Path, scores: &Vector, y: Option<&Vector>) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    if y.is_some() {
        w.write_record(["score", "y"])?;
    } else {
        w.write_record(["score"])?;
    }
    for i in 0..scores.len() {
        match y {
            Some(y) => w.write_record([fmt_f64(scores[i]), fmt_f64(y[i])])?,
            None => w.write_record([fmt_f64(scores[i])])?,
        }
    }
    std::fs::write(path, w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    Ok(())
}

/// Reads `score` and, when present, `y`.
pub fn read_predictions(path: &Path) -> Result<(Vector, Option<Vector>)> {
    let mut r = csv::Reader::from_path(path)?;
    let names: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let find = |n: &str| names.iter().position(|h| h == n);
    let si = find("score").ok_or_else(|| Error::MissingColumn("score".into()))?;
    let yi = find("y");
    let mut s = Vec::new();
    let mut y = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        s.push(parse_f64(rec.get(si).unwrap_or(""), i, "score")?);
        if let Some(yi) = yi {
            y.push(parse_f64(rec.get(yi).unwrap_or(""), i, "y")?);
        }
    }
    Ok((Vector::from_vec(s), yi.map(|_| Vector::from_vec(y))))
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["method", "scenario", "shift_param", "replicate", "metric_name", "value", "seed"])?;
    for r in rows {
        w.serialize(r)?;
    }
    std::fs::write(path, w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
