//! CSV tables and JSON summaries. Every table written here has a reader that
//! recovers the in-memory values exactly.

use crate::dynamics::{AggregatedState, Trajectory};
use crate::error::{Error, Result};
use crate::model::KoopmanSpectralModel;
use crate::mpc::ClosedLoop;
use crate::spectral::Atom;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

/// Shortest decimal text that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn parse(field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{what}: `{field}` is not a number")))
}

fn indexed(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (0..count).map(move |i| format!("{prefix}[{i}]"))
}

fn write_table<W: Write>(
    out: W,
    header: Vec<String>,
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn read_table<R: Read>(input: R) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let rows = r
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(csv_err)?;
    Ok((header, rows))
}

fn count_prefixed(header: &csv::StringRecord, prefix: &str) -> usize {
    header.iter().filter(|h| h.starts_with(prefix)).count()
}

/// Columns `step, particle, x[..], mu[..], u[..], rho[..]`, particle-major.
pub fn write_trajectories<W: Write>(out: W, data: &[Trajectory]) -> Result<()> {
    let first = data.first().and_then(|t| t.states.first());
    let (n, m) = first.map_or((0, 0), |y| (y.x.len(), y.u.len()));
    let mut header = vec!["step".to_string(), "particle".to_string()];
    header.extend(indexed("x", n));
    header.extend(indexed("mu", n));
    header.extend(indexed("u", m));
    header.extend(indexed("rho", m));
    let rows = data.iter().enumerate().flat_map(|(p, t)| {
        t.states.iter().enumerate().map(move |(k, y)| {
            let mut row = vec![k.to_string(), p.to_string()];
            row.extend(y.flatten().into_iter().map(num));
            row
        })
    });
    write_table(out, header, rows)
}

/// Inverse of [`write_trajectories`]: the state paths, one per particle.
pub fn read_trajectories<R: Read>(input: R) -> Result<Vec<Vec<AggregatedState>>> {
    let (header, rows) = read_table(input)?;
    let n = count_prefixed(&header, "x[");
    let m = count_prefixed(&header, "u[");
    let mut out: Vec<Vec<AggregatedState>> = Vec::new();
    for row in rows {
        let particle: usize = row
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse("trajectory row without particle index".into()))?;
        let values = row
            .iter()
            .skip(2)
            .map(|f| parse(f, "state"))
            .collect::<Result<Vec<f64>>>()?;
        if particle == out.len() {
            out.push(Vec::new());
        } else if particle + 1 != out.len() {
            return Err(Error::Parse(format!("particle {particle} out of order")));
        }
        out[particle].push(AggregatedState::from_flat(&values, n, m)?);
    }
    Ok(out)
}

fn write_complex_table<W: Write>(
    out: W,
    names: [&str; 3],
    points: &[f64],
    values: &[Complex64],
) -> Result<()> {
    let header = names.iter().map(|s| s.to_string()).collect();
    let rows = points
        .iter()
        .zip(values)
        .map(|(t, v)| vec![num(*t), num(v.re), num(v.im)]);
    write_table(out, header, rows)
}

fn read_complex_table<R: Read>(input: R) -> Result<(Vec<f64>, Vec<Complex64>)> {
    let (_, rows) = read_table(input)?;
    let mut points = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for row in rows {
        if row.len() != 3 {
            return Err(Error::Parse(format!(
                "expected 3 columns, found {}",
                row.len()
            )));
        }
        points.push(parse(&row[0], "angle")?);
        values.push(Complex64::new(
            parse(&row[1], "real part")?,
            parse(&row[2], "imaginary part")?,
        ));
    }
    Ok((points, values))
}

/// Columns `theta, density_re, density_im`.
pub fn write_density<W: Write>(out: W, grid: &[f64], density: &[Complex64]) -> Result<()> {
    write_complex_table(out, ["theta", "density_re", "density_im"], grid, density)
}

pub fn read_density<R: Read>(input: R) -> Result<(Vec<f64>, Vec<Complex64>)> {
    read_complex_table(input)
}

/// Columns `theta_star, weight_re, weight_im`.
pub fn write_atoms<W: Write>(out: W, atoms: &[Atom]) -> Result<()> {
    let thetas: Vec<f64> = atoms.iter().map(|a| a.theta).collect();
    let weights: Vec<Complex64> = atoms.iter().map(|a| a.weight).collect();
    write_complex_table(
        out,
        ["theta_star", "weight_re", "weight_im"],
        &thetas,
        &weights,
    )
}

pub fn read_atoms<R: Read>(input: R) -> Result<Vec<Atom>> {
    let (thetas, weights) = read_complex_table(input)?;
    Ok(thetas
        .into_iter()
        .zip(weights)
        .map(|(theta, weight)| Atom { theta, weight })
        .collect())
}

/// One closed-loop row; the terminal row has no prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRow {
    pub step: usize,
    pub control: Vec<f64>,
    pub predicted_cost: Option<f64>,
    pub realized_stage_cost: f64,
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
}

pub fn closed_loop_rows(run: &ClosedLoop) -> Vec<ClosedLoopRow> {
    run.trajectory
        .states
        .iter()
        .enumerate()
        .map(|(k, y)| ClosedLoopRow {
            step: k,
            control: y.u.clone(),
            predicted_cost: run.steps.get(k).map(|s| s.predicted_cost),
            realized_stage_cost: run.stage_costs[k],
            x: y.x.clone(),
            mu: y.mu.clone(),
        })
        .collect()
}

/// Columns `step, u[..], predicted_cost, realized_stage_cost, x[..], mu[..]`.
pub fn write_closed_loop<W: Write>(out: W, rows: &[ClosedLoopRow]) -> Result<()> {
    let (n, m) = rows
        .first()
        .map_or((0, 0), |r| (r.x.len(), r.control.len()));
    let mut header = vec!["step".to_string()];
    header.extend(indexed("u", m));
    header.push("predicted_cost".into());
    header.push("realized_stage_cost".into());
    header.extend(indexed("x", n));
    header.extend(indexed("mu", n));
    let lines = rows.iter().map(|r| {
        let mut row = vec![r.step.to_string()];
        row.extend(r.control.iter().copied().map(num));
        row.push(r.predicted_cost.map(num).unwrap_or_default());
        row.push(num(r.realized_stage_cost));
        row.extend(r.x.iter().chain(&r.mu).copied().map(num));
        row
    });
    write_table(out, header, lines)
}

pub fn read_closed_loop<R: Read>(input: R) -> Result<Vec<ClosedLoopRow>> {
    let (header, rows) = read_table(input)?;
    let m = count_prefixed(&header, "u[");
    let n = count_prefixed(&header, "x[");
    rows.iter()
        .map(|row| {
            let step = row[0]
                .parse()
                .map_err(|_| Error::Parse(format!("bad step `{}`", &row[0])))?;
            let floats = |range: std::ops::Range<usize>| {
                range
                    .map(|i| parse(&row[i], "closed loop"))
                    .collect::<Result<Vec<f64>>>()
            };
            let predicted = &row[1 + m];
            Ok(ClosedLoopRow {
                step,
                control: floats(1..1 + m)?,
                predicted_cost: if predicted.is_empty() {
                    None
                } else {
                    Some(parse(predicted, "predicted cost")?)
                },
                realized_stage_cost: parse(&row[2 + m], "stage cost")?,
                x: floats(3 + m..3 + m + n)?,
                mu: floats(3 + m + n..3 + m + 2 * n)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenRow {
    pub index: usize,
    pub theta: f64,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub norm: f64,
    pub source: String,
}

pub fn eigen_rows(model: &KoopmanSpectralModel) -> Vec<EigenRow> {
    model
        .eigenpairs
        .iter()
        .enumerate()
        .map(|(index, e)| EigenRow {
            index,
            theta: e.theta,
            lambda_re: e.lambda().re,
            lambda_im: e.lambda().im,
            norm: e.norm,
            source: e.source.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub t: usize,
    pub value_re: f64,
    pub value_im: f64,
}

/// Any serializable row type, one header per field.
pub fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read, T: DeserializeOwned>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(csv_err)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| Error::Parse(format!("json: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Creates `dir/name` (and `dir`) and hands a writer to `body`.
pub fn write_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut Vec<u8>) -> Result<()>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    body(&mut buf)?;
    std::fs::write(dir.join(name), buf)?;
    Ok(())
}

/// [`to_json`] into `dir/name`.
pub fn write_json_file<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let text = to_json(value)?;
    write_file(dir, name, |buf| {
        buf.extend_from_slice(text.as_bytes());
        Ok(())
    })
}
