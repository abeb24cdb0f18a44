//! CSV and JSON artifacts.
//!
//! CSV files follow RFC 4180 (header row, CRLF, quoting as needed). Floats
//! are written in the shortest decimal form that parses back to the same
//! `f64`.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::ef_geometry::EfGeometry;
use crate::error::{Error, Result};
use crate::factorization::{Factorization, GaugeData};
use crate::scalar::C64;
use crate::{Field, Grid};

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(usize),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format_float(*x),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as usize)
    }
}

/// Shortest round-trip decimal; exponent form for very large or small values.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

/// Serializes a table to RFC 4180 text.
pub fn csv_string(header: &[&str], rows: &[Vec<Cell>]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    let err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(header).map_err(err)?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Csv(format!("row {i} has {} cells, header has {}", row.len(), header.len())));
        }
        w.write_record(row.iter().map(Cell::render)).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Csv(e.to_string()))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    fs::write(path, csv_string(header, rows)?)?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// A parsed CSV file.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    source: String,
}

impl Table {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let err = |e: csv::Error| Error::Csv(format!("{source}: {e}"));
        let header = r.headers().map_err(err)?.iter().map(|s| s.trim().to_string()).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(|s| s.trim().to_string()).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(err)?;
        Ok(Self {
            header,
            rows,
            source: source.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv(format!("{}: missing column `{name}`", self.source)))
    }

    pub fn float(&self, row: usize, col: usize) -> Result<f64> {
        self.rows[row][col].parse().map_err(|_| self.bad(row, col))
    }

    pub fn index(&self, row: usize, col: usize) -> Result<usize> {
        self.rows[row][col].parse().map_err(|_| self.bad(row, col))
    }

    fn bad(&self, row: usize, col: usize) -> Error {
        Error::Csv(format!(
            "{}: line {}: cannot parse `{}` in column `{}`",
            self.source,
            row + 2,
            self.rows[row][col],
            self.header[col]
        ))
    }
}

fn coord_header(grid: &Grid) -> Vec<String> {
    (1..=grid.dim()).map(|k| format!("q{k}")).collect()
}

fn node_cells(grid: &Grid, n: usize) -> Vec<Cell> {
    std::iter::once(Cell::Int(n)).chain(grid.point(n).into_iter().map(Cell::Float)).collect()
}

/// Writes a node-major field in long form: `node, q1..qd, <index>, re, im`.
pub fn write_complex_field(path: &Path, grid: &Grid, f: &Field<C64>, index: &str) -> Result<()> {
    let coords = coord_header(grid);
    let mut header: Vec<&str> = vec!["node"];
    header.extend(coords.iter().map(String::as_str));
    header.extend([index, "re", "im"]);
    let mut rows = Vec::with_capacity(f.data().len());
    for n in 0..f.nodes() {
        for c in 0..f.comps() {
            let z = f.get(n, c);
            let mut row = node_cells(grid, n);
            row.extend([Cell::Int(c), Cell::Float(z.re), Cell::Float(z.im)]);
            rows.push(row);
        }
    }
    write_csv(path, &header, &rows)
}

/// Reads a field written by [`write_complex_field`] (or any CSV with
/// `node`, `<index>`, `re` and `im` columns). Every `(node, index)` pair
/// must appear exactly once.
pub fn read_complex_field(path: &Path, index: &str, nodes: Option<usize>) -> Result<Field<C64>> {
    let t = Table::read(path)?;
    let (cn, ci, cr, cm) = (t.column("node")?, t.column(index)?, t.column("re")?, t.column("im")?);
    let mut entries = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        entries.push((t.index(r, cn)?, t.index(r, ci)?, C64::new(t.float(r, cr)?, t.float(r, cm)?)));
    }
    let n_nodes = nodes.unwrap_or_else(|| entries.iter().map(|e| e.0 + 1).max().unwrap_or(0));
    let comps = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
    if n_nodes == 0 || comps == 0 || entries.len() != n_nodes * comps {
        return Err(Error::Csv(format!(
            "{}: expected {n_nodes}×{comps} entries, found {}",
            path.display(),
            entries.len()
        )));
    }
    let mut data = vec![C64::new(f64::NAN, f64::NAN); n_nodes * comps];
    let mut seen = vec![false; n_nodes * comps];
    for (n, c, z) in entries {
        if n >= n_nodes {
            return Err(Error::Csv(format!("{}: node {n} outside the grid of {n_nodes}", path.display())));
        }
        let k = n * comps + c;
        if std::mem::replace(&mut seen[k], true) {
            return Err(Error::Csv(format!("{}: duplicate entry node {n}, {index} {c}", path.display())));
        }
        data[k] = z;
    }
    Field::new(comps, data)
}

/// `chi.csv`, `phi.csv`, `a_mu.csv` and `mask.csv`.
pub fn write_factorization(dir: &Path, grid: &Grid, fact: &Factorization, gauge: &GaugeData) -> Result<()> {
    write_complex_field(&dir.join("chi.csv"), grid, &fact.chi, "component")?;
    write_complex_field(&dir.join("phi.csv"), grid, &fact.phi, "level")?;
    let coords = coord_header(grid);
    let mut header: Vec<&str> = vec!["node"];
    header.extend(coords.iter().map(String::as_str));
    let mut a_header = header.clone();
    a_header.extend(["mu", "value"]);
    let rows: Vec<Vec<Cell>> = (0..grid.len())
        .flat_map(|n| {
            (0..grid.dim()).map(move |mu| {
                let mut row = node_cells(grid, n);
                row.extend([Cell::Int(mu), Cell::Float(gauge.a_mu.get(n, mu))]);
                row
            })
        })
        .collect();
    write_csv(&dir.join("a_mu.csv"), &a_header, &rows)?;
    let mut m_header = header;
    m_header.push("masked");
    let rows: Vec<Vec<Cell>> = (0..grid.len())
        .map(|n| {
            let mut row = node_cells(grid, n);
            row.push(fact.mask[n].into());
            row
        })
        .collect();
    write_csv(&dir.join("mask.csv"), &m_header, &rows)
}

/// Reads `mask.csv` (column `masked`, 0 or 1).
pub fn read_mask(path: &Path, nodes: usize) -> Result<Vec<bool>> {
    let t = Table::read(path)?;
    let (cn, cm) = (t.column("node")?, t.column("masked")?);
    let mut mask = vec![false; nodes];
    if t.rows.len() != nodes {
        return Err(Error::Csv(format!("{}: {} rows for {nodes} nodes", path.display(), t.rows.len())));
    }
    for r in 0..t.rows.len() {
        let n = t.index(r, cn)?;
        if n >= nodes {
            return Err(Error::Csv(format!("{}: node {n} outside the grid", path.display())));
        }
        mask[n] = t.index(r, cm)? != 0;
    }
    Ok(mask)
}

fn write_tensor(
    path: &Path,
    grid: &Grid,
    f: &Field<C64>,
    names: &[&str],
    d: usize,
) -> Result<()> {
    let mut header: Vec<&str> = vec!["node"];
    header.extend(names);
    header.extend(["re", "im"]);
    let rank = names.len();
    let mut rows = Vec::with_capacity(f.data().len());
    for n in 0..grid.len() {
        for k in 0..f.comps() {
            let mut row = vec![Cell::Int(n)];
            let mut rest = k;
            let mut idx = vec![0; rank];
            for slot in (0..rank).rev() {
                idx[slot] = rest % d;
                rest /= d;
            }
            row.extend(idx.into_iter().map(Cell::Int));
            let z = f.get(n, k);
            row.extend([Cell::Float(z.re), Cell::Float(z.im)]);
            rows.push(row);
        }
    }
    write_csv(path, &header, &rows)
}

/// Tensor exports with index columns plus `scalars.csv` (`ε_BO`, `ε_geo`,
/// flag) per node.
pub fn write_geometry(dir: &Path, grid: &Grid, geo: &EfGeometry) -> Result<()> {
    let d = grid.dim();
    write_tensor(&dir.join("h.csv"), grid, &geo.h, &["lambda", "kappa"], d)?;
    let g = Field::from_fn(grid.len(), d * d, |n, k| C64::new(geo.g.get(n, k), 0.0));
    write_tensor(&dir.join("g.csv"), grid, &g, &["mu", "nu"], d)?;
    write_tensor(&dir.join("upsilon.csv"), grid, &geo.upsilon_first, &["lambda", "mu", "nu"], d)?;
    write_tensor(&dir.join("upsilon_raised.csv"), grid, &geo.upsilon_second, &["lambda", "mu", "nu"], d)?;
    let coords = coord_header(grid);
    let mut header: Vec<&str> = vec!["node"];
    header.extend(coords.iter().map(String::as_str));
    header.extend(["eps_bo", "eps_geo", "flagged", "frame_vectors"]);
    let rows: Vec<Vec<Cell>> = (0..grid.len())
        .map(|n| {
            let mut row = node_cells(grid, n);
            row.extend([
                Cell::Float(geo.eps_bo[n]),
                Cell::Float(geo.eps_geo[n]),
                geo.flagged[n].into(),
                Cell::Int(geo.frames[n].count),
            ]);
            row
        })
        .collect();
    write_csv(&dir.join("scalars.csv"), &header, &rows)
}
