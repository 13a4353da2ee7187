//! CSV artifacts.
//!
//! Numbers are written in their shortest round-trip form, so reading a file
//! back yields the exact values that were written. Metadata sits in `#` comment
//! lines above the header row.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::control::ReportRow;
use crate::error::{Error, Result};
use crate::flux::ModelParams;
use crate::front::FrontProfile;
use crate::grid::Grid;
use crate::solver::FieldState;

/// Shortest decimal that parses back to `v`.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn parse_num(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("not a number: {s:?}"),
    })
}

fn writer(path: &Path, comments: &[String]) -> Result<csv::Writer<BufWriter<File>>> {
    let mut out = BufWriter::new(File::create(path)?);
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    Ok(csv::Writer::from_writer(out))
}

/// Comment lines (without `# `), header and numeric rows of a CSV file.
pub struct Table {
    pub comments: Vec<String>,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let mut comments = Vec::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            match line.strip_prefix('#') {
                Some(c) => comments.push(c.trim().to_string()),
                None => break,
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)?;
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| Ok(r?.iter().map(str::to_string).collect()))
            .collect::<Result<_>>()?;
        Ok(Table {
            comments,
            headers,
            rows,
        })
    }

    /// Column `name` parsed as numbers.
    pub fn column(&self, name: &str, path: &Path) -> Result<Vec<f64>> {
        let k = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: self.comments.len() + 1,
                message: format!("missing column {name:?}"),
            })?;
        self.rows
            .iter()
            .enumerate()
            .map(|(n, row)| parse_num(&row[k], path, self.comments.len() + 2 + n))
            .collect()
    }

    /// Value of `key=value` pairs from the comment lines.
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.comments
            .iter()
            .flat_map(|c| c.split(','))
            .filter_map(|kv| kv.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .map(|(_, v)| v.trim())
    }
}

/// Writes `x,zeta` rows with the time in a comment line.
pub fn write_front(path: &Path, front: &FrontProfile) -> Result<()> {
    let mut w = writer(path, &[format!("t={}", fmt_num(front.t))])?;
    w.write_record(["x", "zeta"])?;
    for (i, z) in front.zeta.iter().enumerate() {
        w.write_record([fmt_num(front.x(i)), fmt_num(*z)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_front(path: &Path) -> Result<FrontProfile> {
    let table = Table::read(path)?;
    let zeta = table.column("zeta", path)?;
    let t = match table.meta("t") {
        Some(v) => parse_num(v, path, 1)?,
        None => 0.0,
    };
    FrontProfile::new(zeta, t)
}

/// Header fields of a density snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotHeader {
    pub nx: usize,
    pub nz: usize,
    pub t: f64,
    pub rho_star: f64,
    pub eta: f64,
    pub r: f64,
    pub alpha_bar: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub density: Array2<f64>,
    pub sigma: Array2<f64>,
}

/// Row-major dump `i,j,x,z,R,S` (index `j` fastest).
pub fn write_snapshot(
    path: &Path,
    state: &FieldState,
    grid: &Grid,
    params: &ModelParams,
) -> Result<()> {
    let header = format!(
        "nx={},nz={},t={},rho_star={},eta={},r={},alpha_bar={}",
        grid.nx,
        grid.nz,
        fmt_num(state.t),
        fmt_num(params.rho_star),
        fmt_num(params.eta),
        fmt_num(params.r),
        fmt_num(params.alpha_bar),
    );
    let mut w = writer(path, &[header])?;
    w.write_record(["i", "j", "x", "z", "R", "S"])?;
    for i in 0..grid.nx {
        for j in 0..grid.nz {
            w.write_record([
                i.to_string(),
                j.to_string(),
                fmt_num(grid.x(i)),
                fmt_num(grid.z(j)),
                fmt_num(state.density[[i, j]]),
                fmt_num(state.sigma[[i, j]]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let table = Table::read(path)?;
    let meta = |k: &str| -> Result<f64> {
        let v = table.meta(k).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("snapshot header lacks {k}"),
        })?;
        parse_num(v, path, 1)
    };
    let header = SnapshotHeader {
        nx: meta("nx")? as usize,
        nz: meta("nz")? as usize,
        t: meta("t")?,
        rho_star: meta("rho_star")?,
        eta: meta("eta")?,
        r: meta("r")?,
        alpha_bar: meta("alpha_bar")?,
    };
    let shape = (header.nx, header.nz);
    let bad_shape = |_| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: format!("row count does not match {}x{}", header.nx, header.nz),
    };
    let density = Array2::from_shape_vec(shape, table.column("R", path)?).map_err(bad_shape)?;
    let sigma = Array2::from_shape_vec(shape, table.column("S", path)?).map_err(bad_shape)?;
    Ok(Snapshot {
        header,
        density,
        sigma,
    })
}

/// Micro-model density on its own lattice: `i,k,x,z,rho`.
pub fn write_lattice_density(path: &Path, density: &Array2<f64>, t: f64) -> Result<()> {
    let (n, m) = density.dim();
    let mut w = writer(path, &[format!("i_max={n},k_max={m},t={}", fmt_num(t))])?;
    w.write_record(["i", "k", "x", "z", "rho"])?;
    for ((i, k), v) in density.indexed_iter() {
        w.write_record([
            i.to_string(),
            k.to_string(),
            fmt_num((i as f64 + 0.5) / n as f64),
            fmt_num((k as f64 + 0.5) / m as f64),
            fmt_num(*v),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = writer(path, &[])?;
    w.write_record(["t", "policy", "z", "omega1", "omega2", "omega3"])?;
    for r in rows {
        w.write_record([
            fmt_num(r.t),
            r.policy.clone(),
            fmt_num(r.z),
            fmt_num(r.omega1),
            fmt_num(r.omega2),
            fmt_num(r.omega3),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let table = Table::read(path)?;
    let cols = ["t", "z", "omega1", "omega2", "omega3"]
        .map(|c| table.column(c, path))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let k = table
        .headers
        .iter()
        .position(|h| h == "policy")
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "missing column \"policy\"".into(),
        })?;
    Ok(table
        .rows
        .iter()
        .enumerate()
        .map(|(n, row)| ReportRow {
            t: cols[0][n],
            policy: row[k].clone(),
            z: cols[1][n],
            omega1: cols[2][n],
            omega2: cols[3][n],
            omega3: cols[4][n],
        })
        .collect())
}

/// Writes a numeric table with the given column names.
pub fn write_columns(path: &Path, names: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = writer(path, &[])?;
    w.write_record(names)?;
    for r in rows {
        w.write_record(r.iter().map(|v| fmt_num(*v)))?;
    }
    w.flush()?;
    Ok(())
}
