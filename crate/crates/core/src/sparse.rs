//! Compressed-row symmetric positive definite matrices and a Jacobi-preconditioned
//! conjugate gradient solver.

use crate::error::{Error, Result};

/// Default relative residual tolerance for [`solve_spd`].
pub const DEFAULT_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed in input order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n + 1];
        for &(r, c, _) in triplets {
            if r >= n || c >= n {
                return Err(Error::DimensionMismatch { expected: n, found: r.max(c) + 1 });
            }
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut order = vec![0usize; triplets.len()];
        let mut next = counts.clone();
        for (k, &(r, _, _)) in triplets.iter().enumerate() {
            order[next[r]] = k;
            next[r] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for r in 0..n {
            let mut row: Vec<(usize, f64)> = order[counts[r]..counts[r + 1]]
                .iter()
                .map(|&k| (triplets[k].1, triplets[k].2))
                .collect();
            // stable sort keeps summation order deterministic
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        Ok(Self { n, row_ptr, col_idx, values })
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut t = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: row.len() });
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &t)
    }

    pub fn identity(n: usize) -> Self {
        Self { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    /// Same sparsity pattern, new values.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { n: self.n, row_ptr: self.row_ptr.clone(), col_idx: self.col_idx.clone(), values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    /// Position of entry `(r, c)` in the value array.
    pub fn find(&self, r: usize, c: usize) -> Option<usize> {
        let cols = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        cols.binary_search(&c).ok().map(|k| self.row_ptr[r] + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.find(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }

    /// Checks structural and numerical symmetry to `rel_tol` relative to the largest entry,
    /// and strictly positive diagonal.
    pub fn check_spd_structure(&self, rel_tol: f64) -> Result<()> {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                if c <= r {
                    continue;
                }
                let w = self.find(c, r).map(|k| self.values[k]);
                match w {
                    Some(w) if (v - w).abs() <= rel_tol * scale => {}
                    _ => return Err(Error::NotSymmetric { row: r, col: c }),
                }
            }
            let d = self.get(r, r);
            if !(d > 0.0) {
                return Err(Error::NonPositiveDiagonal { row: r });
            }
        }
        Ok(())
    }

    /// `y = self * x`
    fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yr = s;
        }
    }
}

pub fn matvec(a: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != a.n {
        return Err(Error::DimensionMismatch { expected: a.n, found: x.len() });
    }
    let mut y = vec![0.0; a.n];
    a.matvec_into(x, &mut y);
    Ok(y)
}

pub fn dot(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    Ok(dot_unchecked(x, y))
}

pub(crate) fn dot_unchecked(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot_unchecked(x, x).sqrt()
}

/// Solves `a x = b` by Jacobi-preconditioned conjugate gradients.
///
/// On success `||a x - b||_2 <= rel_tol * ||b||_2`, checked against an explicitly
/// recomputed residual. Gives up after `10 n` iterations.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    solve_spd_from(a, b, None, rel_tol)
}

/// As [`solve_spd`] with an optional starting guess.
pub fn solve_spd_from(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, rel_tol: f64) -> Result<Vec<f64>> {
    let n = a.n;
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len() });
    }
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidConfig(format!("rel_tol must lie in (0,1), got {rel_tol}")));
    }
    a.check_spd_structure(1e-12)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let target = rel_tol * bnorm;
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();

    let mut x = match x0 {
        Some(x0) if x0.len() == n => x0.to_vec(),
        Some(x0) => return Err(Error::DimensionMismatch { expected: n, found: x0.len() }),
        None => vec![0.0; n],
    };
    let mut ax = vec![0.0; n];
    a.matvec_into(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot_unchecked(&r, &z);
    let max_iter = 10 * n;
    let mut iterations = 0;
    loop {
        if norm2(&r) <= target {
            // confirm against the true residual; recursive residuals drift
            a.matvec_into(&x, &mut ax);
            let true_res: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
            if norm2(&true_res) <= target {
                return Ok(x);
            }
            r = true_res;
            z = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
            p.clone_from(&z);
            rz = dot_unchecked(&r, &z);
        }
        if iterations >= max_iter {
            return Err(Error::NotConverged { iterations, residual: norm2(&r) / bnorm });
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot_unchecked(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotConverged { iterations, residual: norm2(&r) / bnorm });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot_unchecked(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
    }
}
