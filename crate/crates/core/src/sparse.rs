//! Sparse linear operators over vectorized tensors, plus a small dense matrix.
//!
//! Entries are kept sorted by `(row, col)` with duplicates accumulated, so
//! construction, products, and serialization are deterministic.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;

/// Magic first line of the sparse operator text format.
pub const MGS1_MAGIC: &str = "MGS1";

/// Sparse matrix acting on row-major tensor vectorizations.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseOperator {
    /// Accumulates duplicate coordinates, drops exact zeros, sorts by
    /// `(row, col)`.
    pub fn from_entries(rows: usize, cols: usize, raw: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<SparseOperator> {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (r, c, v) in raw {
            if r >= rows || c >= cols {
                return Err(Error::OutOfBounds {
                    context: "sparse entry",
                    index: format!("({r}, {c})"),
                    bounds: format!("{rows}x{cols}"),
                });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("sparse entry ({r}, {c})"),
                });
            }
            *acc.entry((r, c)).or_insert(0.0) += v;
        }
        Ok(SparseOperator {
            rows,
            cols,
            entries: acc
                .into_iter()
                .filter(|&(_, v)| v != 0.0)
                .map(|((r, c), v)| (r, c, v))
                .collect(),
        })
    }

    pub fn identity(n: usize) -> SparseOperator {
        SparseOperator {
            rows: n,
            cols: n,
            entries: (0..n).map(|i| (i, i, 1.0)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Entries sorted by `(row, col)`.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Matrix-vector product.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimMismatch {
                context: "operator apply".to_string(),
                expected: format!("{}", self.cols),
                actual: format!("{}", x.len()),
            });
        }
        let mut y = vec![0.0; self.rows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        Ok(y)
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &SparseOperator) -> Result<SparseOperator> {
        if self.cols != rhs.rows {
            return Err(Error::DimMismatch {
                context: "operator product".to_string(),
                expected: format!("{} inner", self.cols),
                actual: format!("{} inner", rhs.rows),
            });
        }
        let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rhs.rows];
        for &(r, c, v) in &rhs.entries {
            by_row[r].push((c, v));
        }
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, k, a) in &self.entries {
            for &(j, b) in &by_row[k] {
                *acc.entry((i, j)).or_insert(0.0) += a * b;
            }
        }
        Ok(SparseOperator {
            rows: self.rows,
            cols: rhs.cols,
            entries: acc
                .into_iter()
                .filter(|&(_, v)| v != 0.0)
                .map(|((r, c), v)| (r, c, v))
                .collect(),
        })
    }

    pub fn transpose(&self) -> SparseOperator {
        let mut entries: Vec<(usize, usize, f64)> = self.entries.iter().map(|&(r, c, v)| (c, r, v)).collect();
        entries.sort_by_key(|&(r, c, _)| (r, c));
        SparseOperator {
            rows: self.cols,
            cols: self.rows,
            entries,
        }
    }

    /// Serializes to the MGS1 text format: a magic line, `rows cols nnz`,
    /// then one `row col value` line per entry with 17 significant digits.
    pub fn to_mgs1(&self) -> String {
        let mut out = String::new();
        out.push_str(MGS1_MAGIC);
        out.push('\n');
        out.push_str(&format!("{} {} {}\n", self.rows, self.cols, self.entries.len()));
        for &(r, c, v) in &self.entries {
            out.push_str(&format!("{} {} {:.16e}\n", r, c, v));
        }
        out
    }

    pub fn from_mgs1(text: &str) -> Result<SparseOperator> {
        let mut lines = text.lines();
        let magic = lines.next().unwrap_or_default().trim();
        if magic != MGS1_MAGIC {
            return Err(Error::Malformed {
                format: "mgs",
                field: "magic",
                detail: format!("expected {MGS1_MAGIC:?}, found {magic:?}"),
            });
        }
        let header = lines.next().ok_or(Error::Malformed {
            format: "mgs",
            field: "header",
            detail: "missing rows/cols/nnz line".to_string(),
        })?;
        let mut it = header.split_whitespace();
        let mut field = |name: &'static str| -> Result<usize> {
            it.next()
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or(Error::Malformed {
                    format: "mgs",
                    field: name,
                    detail: format!("in header line {header:?}"),
                })
        };
        let rows = field("rows")?;
        let cols = field("cols")?;
        let nnz = field("nnz")?;
        let mut entries = Vec::with_capacity(nnz);
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse_err = |detail: String| Error::Malformed {
                format: "mgs",
                field: "entry",
                detail,
            };
            let r: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(format!("row on line {}", i + 3)))?;
            let c: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(format!("col on line {}", i + 3)))?;
            let v: f64 = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(format!("value on line {}", i + 3)))?;
            entries.push((r, c, v));
        }
        if entries.len() != nnz {
            return Err(Error::Malformed {
                format: "mgs",
                field: "nnz",
                detail: format!("header says {nnz}, found {} entries", entries.len()),
            });
        }
        SparseOperator::from_entries(rows, cols, entries)
    }

    pub fn write_mgs1(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_mgs1().as_bytes())
    }

    pub fn read_mgs1(path: &Path) -> Result<SparseOperator> {
        SparseOperator::from_mgs1(&std::fs::read_to_string(path)?)
    }
}

/// Small dense row-major matrix used for explicit filter extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimMismatch {
                context: "dense apply".to_string(),
                expected: format!("{}", self.cols),
                actual: format!("{}", x.len()),
            });
        }
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = self.row(r);
            y[r] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        Ok(y)
    }

    /// `sparse * self`, used to push a dense state through one layer matrix.
    pub fn left_mul_sparse(&self, m: &SparseOperator) -> Result<DenseMatrix> {
        if m.cols() != self.rows {
            return Err(Error::DimMismatch {
                context: "dense left-multiply".to_string(),
                expected: format!("{}", self.rows),
                actual: format!("{}", m.cols()),
            });
        }
        let mut out = DenseMatrix::zeros(m.rows(), self.cols);
        for &(r, k, v) in m.entries() {
            let src = self.row(k).to_vec();
            let dst = &mut out.data[r * out.cols..(r + 1) * out.cols];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += v * s;
            }
        }
        Ok(out)
    }

    /// Scales each row by the matching factor.
    pub fn scale_rows(&mut self, factors: &[f64]) -> Result<()> {
        if factors.len() != self.rows {
            return Err(Error::DimMismatch {
                context: "row scaling".to_string(),
                expected: format!("{}", self.rows),
                actual: format!("{}", factors.len()),
            });
        }
        for r in 0..self.rows {
            let f = factors[r];
            for v in &mut self.data[r * self.cols..(r + 1) * self.cols] {
                *v *= f;
            }
        }
        Ok(())
    }
}
