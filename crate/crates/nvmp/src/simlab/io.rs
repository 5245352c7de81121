//! Directory-based dataset format.
//!
//! A dataset directory holds `y.csv` (header `y`), `X.csv` (header = covariate
//! names), `Z_<h>.csv` for h = 1..H, optional headerless square `R_beta.csv`
//! and `R_<h>.csv`, a `meta` file of `key=value` lines (n, p, H, d_h), and an
//! optional `truth.csv` with header `name,index,value`. Absent R files mean
//! the identity.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::DesignBlocks;
use crate::scalar::Real;
use crate::simlab::simulate::Dataset;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(block: &str, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        block: block.to_string(),
        line,
        msg: msg.into(),
    }
}

fn csv_err(block: &str, path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => parse_err(block, line, format!("{kind:?}")),
    }
}

fn is_identity<T: Real>(m: &DMatrix<T>) -> bool {
    m.is_square()
        && m.iter().enumerate().all(|(k, v)| {
            let (i, j) = (k % m.nrows(), k / m.nrows());
            *v == if i == j { T::one() } else { T::zero() }
        })
}

fn write_matrix<T: Real>(path: &Path, header: Option<&[String]>, m: &DMatrix<T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err("", path, e))?;
    if let Some(h) = header {
        w.write_record(h).map_err(|e| csv_err("", path, e))?;
    }
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))
            .map_err(|e| csv_err("", path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_dataset<T: Real>(ds: &Dataset<T>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let design = &ds.design;
    if ds.x_names.len() != design.p() {
        return Err(Error::structural(format!(
            "{} covariate names for {} columns",
            ds.x_names.len(),
            design.p()
        )));
    }
    if ds.y.len() != design.n() {
        return Err(Error::structural(format!(
            "{} responses for {} rows",
            ds.y.len(),
            design.n()
        )));
    }

    let y = DMatrix::from_column_slice(ds.y.len(), 1, &ds.y);
    write_matrix(&dir.join("y.csv"), Some(&["y".to_string()]), &y)?;
    write_matrix(&dir.join("X.csv"), Some(&ds.x_names), design.x())?;
    for h in 0..design.h() {
        let names: Vec<String> = (1..=design.d(h)).map(|j| format!("z{j}")).collect();
        write_matrix(
            &dir.join(format!("Z_{}.csv", h + 1)),
            Some(&names),
            design.z(h),
        )?;
        if !is_identity(design.r(h)) {
            write_matrix(&dir.join(format!("R_{}.csv", h + 1)), None, design.r(h))?;
        }
    }
    if !is_identity(design.r_beta()) {
        write_matrix(&dir.join("R_beta.csv"), None, design.r_beta())?;
    }

    let d_list: Vec<String> = (0..design.h()).map(|h| design.d(h).to_string()).collect();
    let meta = format!(
        "n={}\np={}\nH={}\nd_h={}\n",
        design.n(),
        design.p(),
        design.h(),
        d_list.join(",")
    );
    let meta_path = dir.join("meta");
    fs::write(&meta_path, meta).map_err(io_err(&meta_path))?;

    let truth_path = dir.join("truth.csv");
    match &ds.truth {
        Some(truth) => {
            let mut w = csv::Writer::from_path(&truth_path)
                .map_err(|e| csv_err("truth.csv", &truth_path, e))?;
            w.write_record(["name", "index", "value"])
                .map_err(|e| csv_err("truth.csv", &truth_path, e))?;
            for (name, values) in truth {
                for (k, v) in values.iter().enumerate() {
                    w.write_record([name.clone(), (k + 1).to_string(), v.to_string()])
                        .map_err(|e| csv_err("truth.csv", &truth_path, e))?;
                }
            }
            w.flush().map_err(io_err(&truth_path))?;
        }
        None if truth_path.exists() => fs::remove_file(&truth_path).map_err(io_err(&truth_path))?,
        None => {}
    }
    Ok(())
}

#[derive(Debug)]
struct Meta {
    n: usize,
    p: usize,
    d: Vec<usize>,
}

fn read_meta(path: &Path) -> Result<Meta> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut map = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let lineno = k as u64 + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err("meta", lineno, "expected key=value"))?;
        let key = key.trim();
        if !matches!(key, "n" | "p" | "H" | "d_h") {
            return Err(parse_err("meta", lineno, format!("unknown key '{key}'")));
        }
        if map
            .insert(key.to_string(), (lineno, value.trim().to_string()))
            .is_some()
        {
            return Err(parse_err("meta", lineno, format!("duplicate key '{key}'")));
        }
    }
    let get = |key: &str| {
        map.get(key)
            .ok_or_else(|| parse_err("meta", 0, format!("missing key '{key}'")))
    };
    let count = |key: &str| -> Result<usize> {
        let (line, v) = get(key)?;
        v.parse()
            .map_err(|_| parse_err("meta", *line, format!("'{v}' is not a count")))
    };
    let (n, p, h) = (count("n")?, count("p")?, count("H")?);
    let (line, list) = get("d_h")?;
    let d: Vec<usize> = if list.is_empty() {
        vec![]
    } else {
        list.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| parse_err("meta", *line, format!("'{s}' is not a count")))
            })
            .collect::<Result<_>>()?
    };
    if d.len() != h {
        return Err(parse_err(
            "meta",
            *line,
            format!("d_h lists {} blocks but H={h}", d.len()),
        ));
    }
    Ok(Meta { n, p, d })
}

/// Reads a numeric CSV block of exactly `rows × cols`.
fn read_matrix<T: Real>(
    path: &Path,
    block: &str,
    header: bool,
    rows: usize,
    cols: usize,
) -> Result<(Vec<String>, DMatrix<T>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(block, path, e))?;
    let names: Vec<String> = if header {
        let h = r.headers().map_err(|e| csv_err(block, path, e))?;
        if h.len() != cols {
            return Err(parse_err(
                block,
                1,
                format!("header has {} columns, expected {cols}", h.len()),
            ));
        }
        h.iter().map(str::to_string).collect()
    } else {
        vec![]
    };
    let mut m = DMatrix::zeros(rows, cols);
    let mut count = 0;
    let mut last_line = u64::from(header);
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(block, path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        last_line = line;
        if count == rows {
            return Err(parse_err(
                block,
                line,
                format!("more than {rows} data rows"),
            ));
        }
        if rec.len() != cols {
            return Err(parse_err(
                block,
                line,
                format!("{} fields, expected {cols}", rec.len()),
            ));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(block, line, format!("'{field}' is not a number")))?;
            m[(count, j)] = T::of(v);
        }
        count += 1;
    }
    if count != rows {
        return Err(parse_err(
            block,
            last_line,
            format!("{count} data rows, expected {rows}"),
        ));
    }
    Ok((names, m))
}

fn read_optional_square<T: Real>(dir: &Path, file: &str, dim: usize) -> Result<Option<DMatrix<T>>> {
    let path = dir.join(file);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(read_matrix(&path, file, false, dim, dim)?.1))
}

fn read_truth(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let block = "truth.csv";
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(block, path, e))?;
    let header = r.headers().map_err(|e| csv_err(block, path, e))?;
    if header.iter().collect::<Vec<_>>() != ["name", "index", "value"] {
        return Err(parse_err(block, 1, "header must be name,index,value"));
    }
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(block, path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let idx: usize = rec[1]
            .parse()
            .map_err(|_| parse_err(block, line, format!("bad index '{}'", &rec[1])))?;
        let v: f64 = rec[2]
            .parse()
            .map_err(|_| parse_err(block, line, format!("bad value '{}'", &rec[2])))?;
        let entry = out.entry(rec[0].to_string()).or_default();
        if idx != entry.len() + 1 {
            return Err(parse_err(
                block,
                line,
                format!("index {idx} out of sequence for '{}'", &rec[0]),
            ));
        }
        entry.push(v);
    }
    Ok(out)
}

pub fn read_dataset<T: Real>(dir: impl AsRef<Path>) -> Result<Dataset<T>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "dataset directory not found",
            ),
        });
    }
    let meta = read_meta(&dir.join("meta"))?;
    let (yh, y) = read_matrix::<T>(&dir.join("y.csv"), "y.csv", true, meta.n, 1)?;
    if yh != ["y"] {
        return Err(parse_err("y.csv", 1, "header must be 'y'"));
    }
    let (x_names, x) = read_matrix(&dir.join("X.csv"), "X.csv", true, meta.n, meta.p)?;
    let mut z = Vec::with_capacity(meta.d.len());
    let mut r = Vec::with_capacity(meta.d.len());
    for (h, &d) in meta.d.iter().enumerate() {
        let file = format!("Z_{}.csv", h + 1);
        z.push(read_matrix(&dir.join(&file), &file, true, meta.n, d)?.1);
        r.push(read_optional_square(dir, &format!("R_{}.csv", h + 1), d)?);
    }
    let r_beta = read_optional_square(dir, "R_beta.csv", meta.p)?;
    let truth_path: PathBuf = dir.join("truth.csv");
    let truth = if truth_path.exists() {
        Some(read_truth(&truth_path)?)
    } else {
        None
    };
    Ok(Dataset {
        y: y.iter().copied().collect(),
        design: DesignBlocks::new(x, z, r_beta, r)?,
        x_names,
        truth,
    })
}
