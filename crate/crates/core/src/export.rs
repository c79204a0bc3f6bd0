//! Deterministic artifact writers: CSV tables, JSON documents and SVG figures,
//! all written atomically (temporary file, then rename).

use crate::error::{Error, Result};
use crate::geometry::{boundary_points, SupportFunction};
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// A float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp: PathBuf = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(Error::from)
}

/// A CSV table of mixed integer and float columns.
#[derive(Debug, Clone, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy)]
pub enum Cell<'a> {
    Float(f64),
    Int(i64),
    Text(&'a str),
}

impl From<f64> for Cell<'_> {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell<'_> {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl<'a> From<&'a str> for Cell<'a> {
    fn from(x: &'a str) -> Self {
        Cell::Text(x)
    }
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[Cell]) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(
            row.iter()
                .map(|c| match c {
                    Cell::Float(x) => fmt17(*x),
                    Cell::Int(i) => i.to_string(),
                    Cell::Text(s) => s.to_string(),
                })
                .collect(),
        );
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }
}

/// Samples of a support function as a `(theta, h)` table.
pub fn profile_table(u: &SupportFunction) -> Table {
    let mut t = Table::new(&["theta", "h"]);
    for (th, v) in u.theta().iter().zip(u.samples()) {
        t.push(&[(*th).into(), (*v).into()]);
    }
    t
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push(b'\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json(value)?)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Closed curves drawn from their support functions, on a common scale.
pub fn curves_svg(curves: &[&SupportFunction]) -> Result<String> {
    let mut polys = Vec::new();
    let mut extent = 0.0f64;
    for u in curves {
        let pts = boundary_points(u)?;
        for p in &pts {
            extent = extent.max(p[0].abs()).max(p[1].abs());
        }
        polys.push(pts);
    }
    let size = 480.0;
    let scale = 0.45 * size / extent.max(1e-12);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (i, pts) in polys.iter().enumerate() {
        let coords: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.4},{:.4}", size / 2.0 + scale * p[0], size / 2.0 - scale * p[1]))
            .collect();
        out.push_str(&format!(
            "<polygon points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            coords.join(" "),
            PALETTE[i % PALETTE.len()]
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(path: &Path, curves: &[&SupportFunction]) -> Result<()> {
    write_atomic(path, curves_svg(curves)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt17(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.csv");
        let mut t = Table::new(&["i", "x"]);
        t.push(&[1usize.into(), 0.5.into()]);
        t.write(&p).unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"second");
        let leftovers: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }
}
