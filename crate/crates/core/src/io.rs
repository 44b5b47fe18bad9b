//! CSV and plain-text file formats shared by the CLI and the external model
//! bridge. Floats are written with Rust's shortest round-trip formatting, so
//! reading a file back reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::design::{EffectPair, EffectPairIndex, RunSchedule, RunTag};
use crate::error::{GsaError, Result};
use crate::qrng::QrPointSet;

fn coordinate_header(prefix: &str, dims: usize) -> Vec<String> {
    (1..=dims).map(|j| format!("{prefix}{j}")).collect()
}

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| GsaError::Parse(format!("{what}: `{field}` is not a number")))
}

/// Writes rows of `dims` coordinates under a `x1,...,xD` header.
pub fn write_points(path: &Path, dims: usize, rows: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(coordinate_header("x", dims))?;
    for row in rows.chunks_exact(dims) {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a point file written by [`write_points`].
pub fn read_points(path: &Path) -> Result<QrPointSet> {
    let mut r = csv::Reader::from_path(path)?;
    let dims = r.headers()?.len();
    let mut data = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for field in rec.iter() {
            data.push(parse_f64(
                field,
                &format!("{} row {}", path.display(), i + 1),
            )?);
        }
    }
    QrPointSet::from_rows(dims, data)
}

/// `run_id,tag,x1..xk`.
pub fn write_runs(path: &Path, schedule: &RunSchedule) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["run_id".to_string(), "tag".to_string()];
    header.extend(coordinate_header("x", schedule.k()));
    w.write_record(&header)?;
    for (id, run) in schedule.runs().iter().enumerate() {
        let mut rec = vec![id.to_string(), run.tag.to_string()];
        rec.extend(schedule.point(id).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs(path: &Path) -> Result<RunSchedule> {
    let mut r = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let id: usize = rec
            .get(0)
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| GsaError::Parse(format!("runs row {}: bad run_id", i + 1)))?;
        if id != i {
            return Err(GsaError::Parse(format!(
                "runs row {}: run_id {id} out of order",
                i + 1
            )));
        }
        let tag: RunTag = rec
            .get(1)
            .ok_or_else(|| GsaError::Parse(format!("runs row {}: missing tag", i + 1)))?
            .parse()?;
        let point = rec
            .iter()
            .skip(2)
            .map(|f| parse_f64(f, &format!("runs row {}", i + 1)))
            .collect::<Result<Vec<_>>>()?;
        records.push((tag, point));
    }
    RunSchedule::from_records(records)
}

/// `factor,run_id_u,run_id_v` with 1-based factors.
pub fn write_pairs(path: &Path, pairs: &EffectPairIndex) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["factor", "run_id_u", "run_id_v"])?;
    for (j, p) in pairs.iter() {
        w.write_record([(j + 1).to_string(), p.u.to_string(), p.v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs(path: &Path, k: usize) -> Result<EffectPairIndex> {
    let mut r = csv::Reader::from_path(path)?;
    let mut per_factor = vec![Vec::new(); k];
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| -> Result<usize> {
            rec.get(c)
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| {
                    GsaError::Parse(format!("pairs row {}: bad column {}", i + 1, c + 1))
                })
        };
        let factor = field(0)?;
        if factor == 0 || factor > k {
            return Err(GsaError::Parse(format!(
                "pairs row {}: factor {factor} outside 1..={k}",
                i + 1
            )));
        }
        per_factor[factor - 1].push(EffectPair {
            u: field(1)?,
            v: field(2)?,
        });
    }
    Ok(EffectPairIndex::new(per_factor))
}

/// One decimal value per line, in order.
pub fn write_values(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in values {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads one value per line; blank lines are skipped.
pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_f64(
            &line,
            &format!("{} line {}", path.display(), i + 1),
        )?);
    }
    Ok(out)
}
