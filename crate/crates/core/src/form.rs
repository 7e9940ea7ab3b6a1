//! Sparse symmetric bilinear forms stored as an upper triangle.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric matrix kept as its upper triangle in compressed rows. Products
/// mirror the stored triangle, so `u·Sv == v·Su` holds up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricForm {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SymmetricForm {
    pub fn zeros(n: usize) -> Self {
        SymmetricForm {
            n,
            row_ptr: vec![0; n + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Sums triplets into a form. Entries below the diagonal are folded onto
    /// the upper triangle. Duplicates are reduced in a fixed order (sorted by
    /// position, ties kept in input order) so the result does not depend on
    /// how the caller interleaved them.
    pub fn from_triplets(n: usize, mut trips: Vec<(usize, usize, f64)>) -> Result<Self> {
        for t in trips.iter_mut() {
            if t.0 >= n || t.1 >= n {
                return Err(Error::Dimension {
                    expected: n,
                    got: t.0.max(t.1) + 1,
                    context: "triplet index",
                });
            }
            if t.0 > t.1 {
                std::mem::swap(&mut t.0, &mut t.1);
            }
        }
        trips.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(trips.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trips {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SymmetricForm {
            n,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn nnz_upper(&self) -> usize {
        self.vals.len()
    }

    /// Iterates over stored `(i, j, a_ij)` with `i <= j`.
    pub fn upper(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.cols[k], self.vals[k]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.vals[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let xi = x[i];
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                let a = self.vals[k];
                acc += a * x[j];
                if j != i {
                    y[j] += a * xi;
                }
            }
            y[i] += acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply_into(x, &mut y);
        y
    }

    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                let a = self.vals[k];
                s += if i == j {
                    a * u[i] * v[i]
                } else {
                    a * (u[i] * v[j] + u[j] * v[i])
                };
            }
        }
        s
    }

    pub fn quad(&self, u: &[f64]) -> f64 {
        self.bilinear(u, u)
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, other: &SymmetricForm, scale: f64) -> Result<SymmetricForm> {
        if other.n != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: other.n,
                context: "form order",
            });
        }
        let trips = self
            .upper()
            .chain(other.upper().map(|(i, j, v)| (i, j, scale * v)))
            .collect();
        SymmetricForm::from_triplets(self.n, trips)
    }

    pub fn scaled(&self, scale: f64) -> SymmetricForm {
        let mut s = self.clone();
        s.vals.iter_mut().for_each(|v| *v *= scale);
        s
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.upper() {
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
        d
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Half-bandwidth of the stored pattern.
    pub fn bandwidth(&self) -> usize {
        self.upper().map(|(i, j, _)| j - i).max().unwrap_or(0)
    }

    /// Writes `row,col,value` triplets of the upper triangle with a header row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["row", "col", "value"])?;
        for (i, j, v) in self.upper() {
            wr.write_record([i.to_string(), j.to_string(), crate::io::fmt_f64(v)])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the triplet format of [`write_csv`](Self::write_csv). Lower
    /// triangle entries are accepted and folded; the order is the largest
    /// index plus one unless `order` is given.
    pub fn read_csv<R: Read>(r: R, order: Option<usize>) -> Result<SymmetricForm> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != ["row", "col", "value"] {
            return Err(Error::Format("triplet CSV header must be row,col,value".into()));
        }
        let mut trips = Vec::new();
        let mut max_idx = 0usize;
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::Format(format!("record {} has {} fields", line + 2, rec.len())));
            }
            let parse_idx = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Format(format!("record {}: bad index {s:?}: {e}", line + 2)))
            };
            let i = parse_idx(&rec[0])?;
            let j = parse_idx(&rec[1])?;
            let v: f64 = rec[2]
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("record {}: bad value: {e}", line + 2)))?;
            if !v.is_finite() {
                return Err(Error::Format(format!("record {}: non-finite value", line + 2)));
            }
            max_idx = max_idx.max(i).max(j);
            trips.push((i, j, v));
        }
        let n = match order {
            Some(n) => n,
            None if trips.is_empty() => 0,
            None => max_idx
                .checked_add(1)
                .ok_or_else(|| Error::Format("index overflow".into()))?,
        };
        if n > 1 << 24 {
            return Err(Error::Format(format!("order {n} too large")));
        }
        SymmetricForm::from_triplets(n, trips)
    }
}
