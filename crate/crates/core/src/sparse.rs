//! Compressed sparse row matrices.

use std::io::Write;

use crate::error::{Error, Result};
use crate::exec::{self, Mode};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

fn merge_row(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (c, v) in row {
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => out.push((c, v)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

impl CsrMatrix {
    /// Builds from per-row entry lists. Duplicates in a row are summed in column order after a
    /// stable sort, exact zeros are dropped.
    pub fn from_rows(nrows: usize, ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != nrows {
            return Err(Error::InvalidInput(format!("{} rows given, expected {nrows}", rows.len())));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for row in rows {
            for (c, v) in merge_row(row) {
                if c >= ncols {
                    return Err(Error::InvalidInput(format!("column {c} out of range {ncols}")));
                }
                indices.push(c);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix { nrows, ncols, indptr, indices, data })
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            if r >= nrows {
                return Err(Error::InvalidInput(format!("row {r} out of range {nrows}")));
            }
            rows[r].push((c, v));
        }
        Self::from_rows(nrows, ncols, rows)
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let rows = d.iter().enumerate().map(|(i, v)| vec![(i, *v)]).collect();
        Self::from_rows(n, n, rows).expect("diagonal is well formed")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.data[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Iterates `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(c, v)| (i, *c, *v))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(Mode::default(), x, &mut y);
        y
    }

    pub fn matvec_into(&self, mode: Mode, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        exec::fill(mode, y, |i| {
            let (c, v) = self.row(i);
            let mut acc = 0.0;
            for (ci, vi) in c.iter().zip(v) {
                acc += vi * x[*ci];
            }
            acc
        });
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.ncols];
        for (i, j, v) in self.triplets() {
            rows[j].push((i, v));
        }
        Self::from_rows(self.ncols, self.nrows, rows).expect("transpose is well formed")
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, other: &CsrMatrix, alpha: f64) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::InvalidInput("shape mismatch in sparse addition".into()));
        }
        let rows = exec::map_range(Mode::default(), self.nrows, |i| {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let mut r: Vec<(usize, f64)> = ca.iter().copied().zip(va.iter().copied()).collect();
            r.extend(cb.iter().zip(vb).map(|(c, v)| (*c, alpha * v)));
            r
        });
        Self::from_rows(self.nrows, self.ncols, rows)
    }

    /// Sparse product `self * other`.
    pub fn mul(&self, other: &CsrMatrix) -> Result<Self> {
        self.mul_with(Mode::default(), other)
    }

    pub fn mul_with(&self, mode: Mode, other: &CsrMatrix) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(Error::InvalidInput("shape mismatch in sparse product".into()));
        }
        let rows = exec::map_range(mode, self.nrows, |i| {
            let (ca, va) = self.row(i);
            let mut r = Vec::new();
            for (k, a) in ca.iter().zip(va) {
                let (cb, vb) = other.row(*k);
                r.extend(cb.iter().zip(vb).map(|(c, b)| (*c, a * b)));
            }
            r
        });
        Self::from_rows(self.nrows, other.ncols, rows)
    }

    /// `diag(left) * self * diag(right)`.
    pub fn scale(&self, left: &[f64], right: &[f64]) -> Self {
        assert_eq!(left.len(), self.nrows);
        assert_eq!(right.len(), self.ncols);
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out.data[k] = left[i] * self.data[k] * right[self.indices[k]];
            }
        }
        out
    }

    /// `max |a_ij - a_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        self.triplets().fold(0.0, |m, (i, j, v)| m.max((v - self.get(j, i)).abs()))
    }

    /// `max |a_ij + a_ji|`.
    pub fn max_antisymmetry(&self) -> f64 {
        self.triplets().fold(0.0, |m, (i, j, v)| m.max((v + self.get(j, i)).abs()))
    }

    /// Max absolute row sum, an upper bound on the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows).map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> faer::Mat<f64> {
        let mut m = faer::Mat::<f64>::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// Writes the matrix as text: a `# rows cols nnz` header line followed by one
    /// `row col value` line per stored entry (0-based indices, 17 significant digits).
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# {} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v:.16e}")?;
        }
        Ok(())
    }
}
