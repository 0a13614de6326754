//! Text file formats: encoder parameters, view batches, embeddings, the
//! training log and curves.
//!
//! Reals are written with Rust's shortest round-trip formatting, so reading
//! a file back gives the same bits. Every file starts with a `#` provenance
//! line carrying the config hash and seed; readers skip `#` lines.

use std::fmt::Write as _;

use pel_core::metrics::Curve;
use pel_core::numerics::Arch;
use pel_core::objectives::Components;
use pel_core::trainer::TrainLog;
use pel_core::{Batch, Encoder, Matrix};

use crate::error::{CsvError, PelError, Result};

/// Config hash and seed stamped into every output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn line(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }
}

pub fn write_params(enc: &Encoder, prov: &Provenance) -> String {
    let mut s = String::from("# pel encoder parameters\n");
    s.push_str(&prov.line());
    let _ = writeln!(
        s,
        "arch={} d_x={} d_hidden={} d_z={}",
        enc.arch().name(),
        enc.d_x(),
        enc.d_hidden(),
        enc.d_z()
    );
    for p in enc.params() {
        let _ = writeln!(s, "{p}");
    }
    s
}

pub fn read_params(text: &str) -> Result<Encoder> {
    let bad = |m: String| PelError::Format(format!("params: {m}"));
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (_, header) = lines.next().ok_or_else(|| bad("missing header".into()))?;
    let mut arch = None;
    let mut dims = [None; 3];
    for field in header.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| bad(format!("bad header field {field:?}")))?;
        match k {
            "arch" => arch = Arch::parse(v),
            "d_x" | "d_hidden" | "d_z" => {
                let i = ["d_x", "d_hidden", "d_z"].iter().position(|n| *n == k).unwrap_or(0);
                dims[i] = v.parse::<usize>().ok();
            }
            _ => return Err(bad(format!("unknown header field {k:?}"))),
        }
    }
    let arch = arch.ok_or_else(|| bad("header needs a valid arch".into()))?;
    let [Some(d_x), Some(d_h), Some(d_z)] = dims else {
        return Err(bad("header needs d_x, d_hidden and d_z".into()));
    };
    let mut params = Vec::new();
    for (i, l) in lines {
        params.push(
            l.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("line {}: not a number", i + 1)))?,
        );
    }
    Ok(Encoder::from_params(arch, d_x, d_h, d_z, &params)?)
}

fn join(vals: impl IntoIterator<Item = String>) -> String {
    vals.into_iter().collect::<Vec<_>>().join(",")
}

/// `x_*, xp_*, delta, v, t*, y`.
pub fn write_batch(b: &Batch, prov: &Provenance) -> String {
    let d = b.views.x.cols();
    let dt = b.t.cols();
    let mut s = prov.line();
    let mut head: Vec<String> = (0..d).map(|j| format!("x_{j}")).collect();
    head.extend((0..d).map(|j| format!("xp_{j}")));
    head.push("delta".into());
    head.push("v".into());
    if dt == 1 {
        head.push("t".into());
    } else {
        head.extend((0..dt).map(|j| format!("t_{j}")));
    }
    head.push("y".into());
    s.push_str(&head.join(","));
    s.push('\n');
    for i in 0..b.views.len() {
        let mut row: Vec<String> = b.views.x.row(i).iter().map(f64::to_string).collect();
        row.extend(b.views.x_plus.row(i).iter().map(f64::to_string));
        row.push(b.views.deltas[i].to_string());
        row.push(b.v[i].to_string());
        row.extend(b.t.row(i).iter().map(f64::to_string));
        row.push(b.y[i].to_string());
        s.push_str(&join(row));
        s.push('\n');
    }
    s
}

/// Codes with optional side columns, as read by the certifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub z: Matrix,
    pub x: Option<Matrix>,
    pub t: Option<Matrix>,
    pub v: Option<Vec<usize>>,
    pub y: Option<Vec<usize>>,
    pub alpha: Option<Vec<f64>>,
}

impl Embeddings {
    pub fn rows(&self) -> usize {
        self.z.rows()
    }
}

pub fn write_embeddings(e: &Embeddings, prov: &Provenance) -> String {
    let mut s = prov.line();
    let mut head: Vec<String> = (0..e.z.cols()).map(|j| format!("z_{j}")).collect();
    if let Some(x) = &e.x {
        head.extend((0..x.cols()).map(|j| format!("x_{j}")));
    }
    if let Some(t) = &e.t {
        if t.cols() == 1 {
            head.push("t".into());
        } else {
            head.extend((0..t.cols()).map(|j| format!("t_{j}")));
        }
    }
    for (name, present) in [("v", e.v.is_some()), ("y", e.y.is_some()), ("alpha", e.alpha.is_some())] {
        if present {
            head.push(name.into());
        }
    }
    s.push_str(&head.join(","));
    s.push('\n');
    for i in 0..e.rows() {
        let mut row: Vec<String> = e.z.row(i).iter().map(f64::to_string).collect();
        if let Some(x) = &e.x {
            row.extend(x.row(i).iter().map(f64::to_string));
        }
        if let Some(t) = &e.t {
            row.extend(t.row(i).iter().map(f64::to_string));
        }
        if let Some(v) = &e.v {
            row.push(v[i].to_string());
        }
        if let Some(y) = &e.y {
            row.push(y[i].to_string());
        }
        if let Some(a) = &e.alpha {
            row.push(a[i].to_string());
        }
        s.push_str(&join(row));
        s.push('\n');
    }
    s
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Col {
    Z(usize),
    X(usize),
    T(usize),
    V,
    Y,
    Alpha,
}

fn indexed(name: &str, prefix: &str) -> Option<usize> {
    name.strip_prefix(prefix)?.parse().ok()
}

fn classify(name: &str) -> Option<Col> {
    match name {
        "v" => Some(Col::V),
        "y" => Some(Col::Y),
        "alpha" => Some(Col::Alpha),
        "t" => Some(Col::T(0)),
        _ => indexed(name, "z_")
            .map(Col::Z)
            .or_else(|| indexed(name, "x_").map(Col::X))
            .or_else(|| indexed(name, "t_").map(Col::T)),
    }
}

fn csv_err(row: usize, column: usize, message: impl Into<String>) -> CsvError {
    CsvError {
        row,
        column,
        message: message.into(),
    }
}

/// Checks that the indexed columns of one kind are exactly `0..n`.
fn contiguous(cols: &[Col], pick: impl Fn(Col) -> Option<usize>, what: &str) -> std::result::Result<usize, CsvError> {
    let mut idx: Vec<usize> = cols.iter().filter_map(|&c| pick(c)).collect();
    idx.sort_unstable();
    for (k, &i) in idx.iter().enumerate() {
        if i != k {
            return Err(csv_err(
                1,
                0,
                format!("{what} columns must be numbered 0..n without gaps"),
            ));
        }
    }
    Ok(idx.len())
}

/// Parses an embeddings CSV. Rows and columns in errors are 1-based line
/// and field numbers of the file.
pub fn read_embeddings(text: &str) -> std::result::Result<Embeddings, CsvError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (header_line, header) = lines.next().ok_or_else(|| csv_err(1, 0, "empty file"))?;
    let header_row = header_line + 1;
    let mut cols = Vec::new();
    for (j, name) in header.split(',').enumerate() {
        let name = name.trim();
        let c = classify(name).ok_or_else(|| csv_err(header_row, j + 1, format!("unknown column {name:?}")))?;
        if cols.contains(&c) {
            return Err(csv_err(header_row, j + 1, format!("duplicate column {name:?}")));
        }
        cols.push(c);
    }
    let dz = contiguous(&cols, |c| if let Col::Z(i) = c { Some(i) } else { None }, "z")?;
    let dx = contiguous(&cols, |c| if let Col::X(i) = c { Some(i) } else { None }, "x")?;
    let dt = contiguous(&cols, |c| if let Col::T(i) = c { Some(i) } else { None }, "t")?;
    if dz == 0 {
        return Err(csv_err(header_row, 0, "header has no z_0 column"));
    }
    let (mut z, mut x, mut t) = (Vec::new(), Vec::new(), Vec::new());
    let (mut v, mut y, mut alpha) = (Vec::new(), Vec::new(), Vec::new());
    let mut n = 0;
    for (i, line) in lines {
        let row = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(csv_err(
                row,
                0,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let (mut zr, mut xr, mut tr) = (vec![0.0; dz], vec![0.0; dx], vec![0.0; dt]);
        for (j, (c, f)) in cols.iter().zip(&fields).enumerate() {
            let f = f.trim();
            let real = || -> std::result::Result<f64, CsvError> {
                let val: f64 = f
                    .parse()
                    .map_err(|_| csv_err(row, j + 1, format!("not a number: {f:?}")))?;
                if !val.is_finite() {
                    return Err(csv_err(row, j + 1, "value is not finite"));
                }
                Ok(val)
            };
            let class = || -> std::result::Result<usize, CsvError> {
                f.parse()
                    .map_err(|_| csv_err(row, j + 1, format!("expected a non-negative integer class, got {f:?}")))
            };
            match *c {
                Col::Z(k) => zr[k] = real()?,
                Col::X(k) => xr[k] = real()?,
                Col::T(k) => tr[k] = real()?,
                Col::V => v.push(class()?),
                Col::Y => y.push(class()?),
                Col::Alpha => alpha.push(real()?),
            }
        }
        z.extend(zr);
        x.extend(xr);
        t.extend(tr);
        n += 1;
    }
    if n == 0 {
        return Err(csv_err(header_row + 1, 0, "no data rows"));
    }
    let mat = |d: usize, data: Vec<f64>| (d > 0).then(|| Matrix::new(n, d, data).expect("rows have fixed width"));
    let has = |c: Col| cols.contains(&c);
    Ok(Embeddings {
        z: Matrix::new(n, dz, z).expect("rows have fixed width"),
        x: mat(dx, x),
        t: mat(dt, t),
        v: has(Col::V).then_some(v),
        y: has(Col::Y).then_some(y),
        alpha: has(Col::Alpha).then_some(alpha),
    })
}

/// `step, inv, nce, var, cov, eq, total`.
pub fn write_train_log(log: &TrainLog, prov: &Provenance) -> String {
    let mut s = prov.line();
    s.push_str("step,");
    s.push_str(&Components::NAMES.join(","));
    s.push_str(",total\n");
    for r in &log.steps {
        let mut row = vec![r.step.to_string()];
        row.extend(r.components.as_array().iter().map(f64::to_string));
        row.push(r.total.to_string());
        s.push_str(&join(row));
        s.push('\n');
    }
    s
}

/// `alpha, value` with the AUC in a comment line.
pub fn write_curve(c: &Curve, prov: &Provenance) -> String {
    let mut s = prov.line();
    let _ = writeln!(s, "# auc={}", c.auc);
    s.push_str("alpha,value\n");
    for (a, v) in c.alphas.iter().zip(&c.values) {
        let _ = writeln!(s, "{a},{v}");
    }
    s
}
