//! Model files and report output.
//!
//! Model file layout:
//!
//! ```json
//! { "d": 1, "kind": "finite",
//!   "blocks": [ { "k": 0, "l": 0, "values": [[0.6]] }, ... ] }
//!
//! { "d": 1, "kind": "gig1",
//!   "gig1": { "A": { "-1": [[0.6]], "1": [[0.4]] },
//!             "B": { "-1": [[0.6]], "0": [[0.6]], "2": [[0.4]] } } }
//! ```
//!
//! A `gig1` model may also list `blocks`; every row `k` named there replaces
//! the generated row `k`, which describes chains that differ from a GI/G/1
//! chain on finitely many rows.
//!
//! Either form may carry `"dominating"` (a nested model that block-wise
//! dominates this one) and `"certificate"` (a drift certificate for the
//! dominating model if present, else for this one).
//!
//! Floats in reports are written with 17 significant digits.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::block_matrix::{Block, BlockRow, BlockStochasticMatrix, DEFAULT_ROW_TOLERANCE};
use crate::drift_bounds::{BoundReport, DriftCertificate};
use crate::error::{Error, Result};
use crate::gig1::{assemble, GIG1Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Finite,
    Gig1,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlock {
    k: usize,
    l: usize,
    values: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGig1 {
    #[serde(rename = "A")]
    a: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(rename = "B")]
    b: BTreeMap<String, Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    d: usize,
    kind: Kind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    blocks: Vec<RawBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gig1: Option<RawGig1>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    row_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dominating: Option<Box<RawModel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    certificate: Option<DriftCertificate>,
}

/// A chain given either as explicit blocks or as GI/G/1 block sequences.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Finite(BlockStochasticMatrix),
    Gig1(GIG1Model),
    /// GI/G/1 chain with some rows replaced.
    Perturbed {
        base: GIG1Model,
        rows: BTreeMap<usize, BlockRow>,
    },
}

impl Model {
    pub fn d(&self) -> usize {
        match self {
            Model::Finite(p) => p.d(),
            Model::Gig1(m) => m.d(),
            Model::Perturbed { base, .. } => base.d(),
        }
    }

    /// The chain as a block matrix; GI/G/1 models carry their tail.
    pub fn matrix(&self) -> Result<BlockStochasticMatrix> {
        match self {
            Model::Finite(p) => Ok(p.clone()),
            Model::Gig1(m) => assemble(m, m.boundary_depth() + 1),
            Model::Perturbed { base, rows } => {
                let top = rows.keys().next_back().copied().unwrap_or(0);
                let levels = (top + 1).max(base.boundary_depth() + 1);
                let stored = (0..levels)
                    .map(|k| rows.get(&k).cloned().unwrap_or_else(|| base.block_row(k)))
                    .collect();
                BlockStochasticMatrix::with_parts(
                    base.d(),
                    stored,
                    Some(base.toeplitz_tail()?),
                    base.tolerance(),
                )
            }
        }
    }
}

/// Parsed model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    pub dominating: Option<Box<ModelFile>>,
    pub certificate: Option<DriftCertificate>,
}

fn matrix(d: usize, values: &[Vec<f64>], field: &str) -> Result<Block> {
    if values.len() != d || values.iter().any(|r| r.len() != d) {
        return Err(Error::Schema(format!("{field}: expected a {d}x{d} matrix")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| values[i][j]))
}

fn rows_of(m: &Block) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn offsets(
    d: usize,
    map: &BTreeMap<String, Vec<Vec<f64>>>,
    field: &str,
) -> Result<BTreeMap<i64, Block>> {
    map.iter()
        .map(|(key, values)| {
            let k: i64 = key.trim().parse().map_err(|_| {
                Error::Schema(format!("{field}: key {key:?} is not an integer offset"))
            })?;
            Ok((k, matrix(d, values, &format!("{field}[{key}]"))?))
        })
        .collect()
}

fn block_rows(d: usize, blocks: &[RawBlock], field: &str) -> Result<BTreeMap<usize, BlockRow>> {
    let mut rows: BTreeMap<usize, BlockRow> = BTreeMap::new();
    for (n, b) in blocks.iter().enumerate() {
        let m = matrix(d, &b.values, &format!("{field}.blocks[{n}].values"))?;
        let row = rows.entry(b.k).or_default();
        match row.get_mut(&b.l) {
            Some(acc) => *acc += m,
            None => {
                row.insert(b.l, m);
            }
        }
    }
    Ok(rows)
}

fn raw_blocks<'a>(rows: impl Iterator<Item = (usize, &'a BlockRow)>) -> Vec<RawBlock> {
    rows.flat_map(|(k, row)| {
        row.iter().map(move |(&l, m)| RawBlock {
            k,
            l,
            values: rows_of(m),
        })
    })
    .collect()
}

fn context(field: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Schema(_) => e,
        other => Error::Schema(format!("{field}: {other}")),
    }
}

impl ModelFile {
    pub fn new(model: Model) -> Self {
        Self {
            model,
            dominating: None,
            certificate: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawModel =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Self::from_raw(raw, "model")
    }

    pub fn from_path(path: &Path) -> std::result::Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(LoadError::Io)?;
        Self::from_json(&text).map_err(LoadError::Invalid)
    }

    fn from_raw(raw: RawModel, field: &str) -> Result<Self> {
        let d = raw.d;
        if d == 0 {
            return Err(Error::Schema(format!("{field}.d: must be positive")));
        }
        let tol = raw.row_tolerance;
        let model = match raw.kind {
            Kind::Finite => {
                if raw.gig1.is_some() {
                    return Err(Error::Schema(format!(
                        "{field}.gig1: not allowed for kind \"finite\""
                    )));
                }
                if raw.blocks.is_empty() {
                    return Err(Error::Schema(format!("{field}.blocks: empty")));
                }
                let levels = raw.blocks.iter().map(|b| b.k.max(b.l)).max().unwrap_or(0) + 1;
                let mut rows = vec![BlockRow::new(); levels];
                for (k, row) in block_rows(d, &raw.blocks, field)? {
                    rows[k] = row;
                }
                let p = BlockStochasticMatrix::with_parts(
                    d,
                    rows,
                    None,
                    tol.unwrap_or(DEFAULT_ROW_TOLERANCE),
                )
                .map_err(context(&format!("{field}.blocks")))?;
                Model::Finite(p)
            }
            Kind::Gig1 => {
                let g = raw
                    .gig1
                    .as_ref()
                    .ok_or_else(|| Error::Schema(format!("{field}.gig1: missing")))?;
                let a = offsets(d, &g.a, &format!("{field}.gig1.A"))?;
                let b = offsets(d, &g.b, &format!("{field}.gig1.B"))?;
                let m = match tol {
                    Some(t) => GIG1Model::with_tolerance(d, a, b, t),
                    None => GIG1Model::new(d, a, b),
                }
                .map_err(context(&format!("{field}.gig1")))?;
                if raw.blocks.is_empty() {
                    Model::Gig1(m)
                } else {
                    let model = Model::Perturbed {
                        base: m,
                        rows: block_rows(d, &raw.blocks, field)?,
                    };
                    model.matrix().map_err(context(&format!("{field}.blocks")))?;
                    model
                }
            }
        };
        let dominating = match raw.dominating {
            Some(inner) => {
                let f = Self::from_raw(*inner, &format!("{field}.dominating"))?;
                if f.model.d() != d {
                    return Err(Error::Schema(format!(
                        "{field}.dominating.d: differs from {field}.d"
                    )));
                }
                Some(Box::new(f))
            }
            None => None,
        };
        if let Some(c) = &raw.certificate {
            if c.d() != d {
                return Err(Error::Schema(format!(
                    "{field}.certificate: has {} phases, model {d}",
                    c.d()
                )));
            }
        }
        Ok(Self {
            model,
            dominating,
            certificate: raw.certificate,
        })
    }

    fn to_raw(&self) -> RawModel {
        let (d, kind, blocks, gig1, row_tolerance) = match &self.model {
            Model::Finite(p) => {
                let blocks = raw_blocks(p.stored_rows().iter().enumerate());
                (p.d(), Kind::Finite, blocks, None, Some(p.row_tolerance()))
            }
            Model::Gig1(m) => (m.d(), Kind::Gig1, Vec::new(), Some(raw_gig1(m)), Some(m.tolerance())),
            Model::Perturbed { base, rows } => {
                let blocks = raw_blocks(rows.iter().map(|(k, r)| (*k, r)));
                (base.d(), Kind::Gig1, blocks, Some(raw_gig1(base)), Some(base.tolerance()))
            }
        };
        RawModel {
            d,
            kind,
            blocks,
            gig1,
            row_tolerance,
            dominating: self.dominating.as_ref().map(|f| Box::new(f.to_raw())),
            certificate: self.certificate.clone(),
        }
    }

    /// Serialises the model; floats keep 17 significant digits.
    pub fn to_json(&self) -> String {
        to_json_string(&self.to_raw())
    }
}

fn raw_gig1(m: &GIG1Model) -> RawGig1 {
    let conv = |map: &BTreeMap<i64, Block>| {
        map.iter().map(|(k, b)| (k.to_string(), rows_of(b))).collect()
    };
    RawGig1 {
        a: conv(m.a()),
        b: conv(m.b()),
    }
}

/// Failure to read a model file.
#[derive(Debug)]
pub enum LoadError {
    Io(io::Error),
    Invalid(Error),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Io(e) => write!(f, "cannot read model file: {e}"),
            LoadError::Invalid(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for LoadError {}

/// `x` with 17 significant digits in scientific notation.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// JSON with every float written to 17 significant digits.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SeventeenDigits);
    value
        .serialize(&mut ser)
        .expect("in-memory serialisation cannot fail");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

pub const REPORT_COLUMNS: [&str; 6] = [
    "n",
    "m_star",
    "bound1",
    "bound2",
    "measured_error",
    "reference_level",
];

/// Bound reports as CSV; absent values are empty fields.
pub fn write_reports_csv<W: Write>(reports: &[BoundReport], mut out: W) -> io::Result<()> {
    writeln!(out, "{}", REPORT_COLUMNS.join(","))?;
    let opt = |x: Option<f64>| x.map(format_f64).unwrap_or_default();
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n,
            r.m_star,
            opt(r.bound1),
            format_f64(r.bound2),
            opt(r.measured_error),
            r.reference_level.map(|x| x.to_string()).unwrap_or_default()
        )?;
    }
    Ok(())
}

/// Bound reports as a JSON array with the CSV column names.
pub fn reports_to_json(reports: &[BoundReport]) -> String {
    to_json_string(reports)
}
