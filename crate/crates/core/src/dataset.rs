//! Dataset files.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `SGMUSDAT`                        |
//! | 8      | 4    | format version (u32, currently 1)       |
//! | 12     | 4    | column count (u32)                      |
//! | 16     | 8    | row count (u64)                         |
//! | 24     | 8    | integrator step dt (f64)                |
//! | 32     | 8    | seed (u64)                              |
//! | 40     | 4    | flags (u32, bit 0: label present)       |
//! | 44     | 4    | reserved, zero                          |
//! | 48     | 8    | conditioning label (f64, NaN if absent) |
//! | 56     | …    | column names: u16 length + UTF-8 bytes  |
//! | …      | …    | row-major f64 values                    |
//!
//! The CSV export carries the same columns under a one-line header.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sde::Trajectory;

pub const MAGIC: &[u8; 8] = b"SGMUSDAT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 56;
const FLAG_LABEL: u32 = 1;
pub const MAX_COLUMNS: usize = 1024;
pub const MAX_NAME_LEN: usize = 256;

/// A table of f64 columns plus the run metadata recorded in the file header.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    pub columns: Vec<String>,
    /// Row-major values, `rows() * columns.len()` long.
    pub values: Vec<f64>,
    pub dt: f64,
    pub seed: u64,
    pub label: Option<f64>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

impl DataTable {
    pub fn new(
        columns: Vec<String>,
        values: Vec<f64>,
        dt: f64,
        seed: u64,
        label: Option<f64>,
    ) -> Result<Self> {
        if columns.is_empty() || columns.len() > MAX_COLUMNS {
            return Err(format_err(format!(
                "column count {} outside 1..={MAX_COLUMNS}",
                columns.len()
            )));
        }
        if let Some(name) = columns
            .iter()
            .find(|c| c.len() > MAX_NAME_LEN || c.contains([',', '\n', '\r']))
        {
            return Err(format_err(format!("invalid column name {name:?}")));
        }
        if values.len() % columns.len() != 0 {
            return Err(Error::Shape(format!(
                "{} values do not fill {} columns",
                values.len(),
                columns.len()
            )));
        }
        Ok(Self {
            columns,
            values,
            dt,
            seed,
            label,
        })
    }

    /// Two-column `x1, x2` table from trajectory states.
    pub fn from_trajectories(trajectories: &[Trajectory], seed: u64) -> Result<Self> {
        let dt = trajectories.first().map(|t| t.dt).unwrap_or(f64::NAN);
        let values = trajectories
            .iter()
            .flat_map(|t| t.states.iter().flat_map(|s| *s))
            .collect();
        Self::new(vec!["x1".into(), "x2".into()], values, dt, seed, None)
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.n_columns();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(
            self.values
                .iter()
                .skip(j)
                .step_by(self.n_columns())
                .copied()
                .collect(),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out =
            Vec::with_capacity(HEADER_LEN + self.values.len() * 8 + self.columns.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.columns.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.rows() as u64).to_le_bytes());
        out.extend_from_slice(&self.dt.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        let flags = if self.label.is_some() { FLAG_LABEL } else { 0 };
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&self.label.unwrap_or(f64::NAN).to_le_bytes());
        for name in &self.columns {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes the binary layout. Never panics on malformed input.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(format_err("bad magic bytes"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format_err(format!("unsupported format version {version}")));
        }
        let n_cols = r.u32()? as usize;
        if n_cols == 0 || n_cols > MAX_COLUMNS {
            return Err(format_err(format!(
                "column count {n_cols} outside 1..={MAX_COLUMNS}"
            )));
        }
        let n_rows = r.u64()?;
        let dt = r.f64()?;
        let seed = r.u64()?;
        let flags = r.u32()?;
        if flags & !FLAG_LABEL != 0 {
            return Err(format_err(format!("unknown flags {flags:#x}")));
        }
        if r.u32()? != 0 {
            return Err(format_err("reserved header field is not zero"));
        }
        let label_raw = r.f64()?;
        let label = (flags & FLAG_LABEL != 0).then_some(label_raw);
        let mut columns = Vec::with_capacity(n_cols);
        for _ in 0..n_cols {
            let len = r.u16()? as usize;
            if len > MAX_NAME_LEN {
                return Err(format_err(format!(
                    "column name length {len} exceeds {MAX_NAME_LEN}"
                )));
            }
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| format_err("column name is not UTF-8"))?;
            columns.push(name.to_owned());
        }
        let n_values = usize::try_from(n_rows)
            .ok()
            .and_then(|r| r.checked_mul(n_cols))
            .ok_or_else(|| format_err("row count overflows"))?;
        let n_bytes = n_values
            .checked_mul(8)
            .ok_or_else(|| format_err("row count overflows"))?;
        if r.remaining() != n_bytes {
            return Err(format_err(format!(
                "expected {n_bytes} bytes of values for {n_rows} rows, found {}",
                r.remaining()
            )));
        }
        let values = r
            .take(n_bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(columns, values, dt, seed, label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for i in 0..self.rows() {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:.17e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses the CSV export; metadata not carried by CSV is taken from the arguments.
    pub fn from_csv(text: &str, dt: f64, seed: u64, label: Option<f64>) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| format_err("empty CSV"))?;
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_owned()).collect();
        if columns.iter().any(|c| c.is_empty()) {
            return Err(format_err("empty column name in CSV header"));
        }
        let mut values = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != columns.len() {
                return Err(format_err(format!(
                    "CSV row {} has {} fields, header has {}",
                    n + 1,
                    fields.len(),
                    columns.len()
                )));
            }
            for f in fields {
                let v: f64 = f
                    .trim()
                    .parse()
                    .map_err(|_| format_err(format!("CSV row {}: bad number {f:?}", n + 1)))?;
                values.push(v);
            }
        }
        Self::new(columns, values, dt, seed, label)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(format_err(format!(
                "truncated file: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> DataTable {
        DataTable::new(
            vec!["x1".into(), "x2".into()],
            vec![0.0, 1.0, 0.5, -1.25],
            0.01,
            42,
            Some(5.0),
        )
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[48..56].try_into().unwrap()), 5.0);
        assert_eq!(bytes.len(), HEADER_LEN + 2 * (2 + 2) + 4 * 8);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        assert!(DataTable::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(DataTable::from_bytes(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(DataTable::from_bytes(&magic).is_err());
        let mut rows = bytes.clone();
        rows[16..24].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(DataTable::from_bytes(&rows).is_err());
        assert!(DataTable::from_bytes(&[]).is_err());
    }

    #[test]
    fn csv_mirrors_columns() {
        let t = sample();
        let csv = t.to_csv();
        assert!(csv.starts_with("x1,x2\n"));
        let back = DataTable::from_csv(&csv, t.dt, t.seed, t.label).unwrap();
        assert_eq!(back, t);
        assert!(DataTable::from_csv("a,b\n1,2,3\n", 0.1, 0, None).is_err());
        assert!(DataTable::from_csv("a,b\n1,zz\n", 0.1, 0, None).is_err());
    }

    #[test]
    fn column_access() {
        let t = sample();
        assert_eq!(t.column("x2").unwrap(), vec![1.0, -1.25]);
        assert!(t.column("nope").is_none());
    }

    proptest! {
        #[test]
        fn binary_round_trip(values in proptest::collection::vec(proptest::num::f64::ANY, 0..40),
                             seed: u64, label in proptest::option::of(-10.0f64..10.0)) {
            let n = values.len() / 2 * 2;
            let t = DataTable::new(vec!["a".into(), "b".into()], values[..n].to_vec(), 0.01, seed, label).unwrap();
            let back = DataTable::from_bytes(&t.to_bytes()).unwrap();
            prop_assert_eq!(back.to_bytes(), t.to_bytes());
        }

        #[test]
        fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = DataTable::from_bytes(&bytes);
        }
    }
}
