//! CSV artifacts: nodal fields, solutions and eigenvalue tables.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::spectrum::EigenDecomposition;

/// Scientific notation with 17 significant digits; parses back exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, what: &str, row: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("row {row}: {what} is not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::Format(format!("row {row}: {what} is not finite")));
    }
    Ok(v)
}

fn parse_index(s: &str, row: usize, n: usize) -> Result<usize> {
    let i: usize = s
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("row {row}: bad node index {s:?}")))?;
    if i >= n {
        return Err(Error::Format(format!("row {row}: node index {i} out of range (order {n})")));
    }
    Ok(i)
}

/// Reads `index,value` rows (header mandatory) covering every node once.
pub fn read_nodal_csv<R: Read>(r: R, n: usize) -> Result<Vec<f64>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let mut vals = vec![f64::NAN; n];
    let mut seen = vec![false; n];
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Format(format!("row {}: expected 2 columns, got {}", row + 1, rec.len())));
        }
        let i = parse_index(&rec[0], row + 1, n)?;
        if seen[i] {
            return Err(Error::Format(format!("row {}: node {i} listed twice", row + 1)));
        }
        seen[i] = true;
        vals[i] = parse_f64(&rec[1], "value", row + 1)?;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Format(format!("node {i} has no value")));
    }
    Ok(vals)
}

pub fn write_nodal_csv<W: Write>(w: W, vals: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["index", "value"])?;
    for (i, v) in vals.iter().enumerate() {
        wr.write_record([i.to_string(), fmt_f64(*v)])?;
    }
    wr.flush()?;
    Ok(())
}

fn coord_names(dim: usize) -> &'static [&'static str] {
    if dim == 1 {
        &["x"]
    } else {
        &["x", "y"]
    }
}

/// One row per node: `index, x[, y], u`.
pub fn write_solution_csv<W: Write>(w: W, mesh: &Mesh, u: &[f64]) -> Result<()> {
    if u.len() != mesh.n_nodes() {
        return Err(Error::Dimension {
            expected: mesh.n_nodes(),
            got: u.len(),
            context: "solution vector",
        });
    }
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["index"];
    header.extend_from_slice(coord_names(mesh.dim()));
    header.push("u");
    wr.write_record(&header)?;
    for (i, v) in u.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(mesh.node(i).iter().map(|c| fmt_f64(*c)));
        row.push(fmt_f64(*v));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Inverse of [`write_solution_csv`]; coordinates must match the mesh.
pub fn read_solution_csv<R: Read>(r: R, mesh: &Mesh) -> Result<Vec<f64>> {
    let n = mesh.n_nodes();
    let dim = mesh.dim();
    let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let header = rd.headers()?.clone();
    let mut want = vec!["index"];
    want.extend_from_slice(coord_names(dim));
    want.push("u");
    if header.iter().collect::<Vec<_>>() != want {
        return Err(Error::Format(format!("solution header must be {}", want.join(","))));
    }
    let mut u = vec![0.0; n];
    let mut seen = vec![false; n];
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = row + 1;
        if rec.len() != dim + 2 {
            return Err(Error::Format(format!("row {row}: expected {} columns", dim + 2)));
        }
        let i = parse_index(&rec[0], row, n)?;
        if seen[i] {
            return Err(Error::Format(format!("row {row}: node {i} listed twice")));
        }
        seen[i] = true;
        for (k, &c) in mesh.node(i).iter().enumerate() {
            let x = parse_f64(&rec[1 + k], "coordinate", row)?;
            if (x - c).abs() > 1e-9 * (1.0 + c.abs()) {
                return Err(Error::Format(format!("row {row}: node {i} coordinate {x} does not match mesh ({c})")));
            }
        }
        u[i] = parse_f64(&rec[dim + 1], "u", row)?;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Format(format!("node {i} missing from solution")));
    }
    Ok(u)
}

/// `index, value, cluster, residual` for the first `count` pairs.
pub fn write_eigenvalues_csv<W: Write>(w: W, decomp: &EigenDecomposition, count: usize) -> Result<()> {
    let cl = decomp.cluster_index();
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["index", "value", "cluster", "residual"])?;
    for j in 0..count.min(decomp.len()) {
        wr.write_record([
            j.to_string(),
            fmt_f64(decomp.values[j]),
            (cl[j] + 1).to_string(),
            fmt_f64(decomp.residuals[j]),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
