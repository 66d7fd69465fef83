//! CSV and JSON artifacts: fixed-precision numbers, LF-terminated RFC 4180 tables, atomic writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::fluctuations::UPPER;
use crate::meanfield::Trajectory;

pub const TRAJECTORY_HEADER: [&str; 7] = ["t", "mx1", "my1", "mz1", "mx2", "my2", "mz2"];

const AXES: [&str; 6] = ["x1", "y1", "z1", "x2", "y2", "z2"];
const QUADRATURES: [&str; 4] = ["x1", "p1", "x2", "p2"];

/// Seventeen significant digits, which round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        // adding zero folds -0 into +0
        format!("{:.16e}", x + 0.0)
    }
}

/// Empty field for undefined values.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| -> Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// A CSV table held in memory until written.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.push(row.iter().map(|x| fmt_f64(*x)).collect());
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner()
            .map_err(|e| crate::error::Error::Io(e.into_error()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }
}

pub fn trajectory_table(traj: &Trajectory) -> Table {
    let mut table = Table::new(&TRAJECTORY_HEADER);
    for (t, m) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![*t];
        row.extend_from_slice(m);
        table.push_numbers(&row);
    }
    table
}

/// Column names of the packed covariance: 21 upper entries of `G` then 10 of the bosonic `2 G_bar`.
pub fn covariance_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(
        UPPER
            .iter()
            .map(|(i, j)| format!("G_{}{}", AXES[*i], AXES[*j])),
    );
    for i in 0..4 {
        for j in i..4 {
            h.push(format!("S2_{}{}", QUADRATURES[i], QUADRATURES[j]));
        }
    }
    h
}

/// Upper triangle of a 4x4 matrix in row-major order.
pub fn upper4(m: &nalgebra::Matrix4<f64>) -> [f64; 10] {
    let mut out = [0.0; 10];
    let mut k = 0;
    for i in 0..4 {
        for j in i..4 {
            out[k] = m[(i, j)];
            k += 1;
        }
    }
    out
}
