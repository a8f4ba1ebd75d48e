//! Dense row-major matrices and the handful of kernels the rest of the
//! crate needs: products, Cholesky-based SPD inverses and seeded Gaussian
//! generation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{RngSeed, SeededRng, Stream};

/// Row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "DenseMatrix::new",
                format!("{rows}x{cols}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Like [`DenseMatrix::new`] but also rejects NaN and infinities.
    pub fn new_finite(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data {
                row: pos / cols.max(1),
                msg: "non-finite entry".into(),
            });
        }
        Self::new(rows, cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(
                    "DenseMatrix::from_rows",
                    format!("row 0 has {cols} columns"),
                    format!("row {i} has {}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// One-hot encoding of class indices into `classes` columns.
    pub fn one_hot(labels: &[usize], classes: usize) -> Result<Self> {
        let mut m = Self::zeros(labels.len(), classes);
        for (i, &c) in labels.iter().enumerate() {
            if c >= classes {
                return Err(Error::Data {
                    row: i,
                    msg: format!("class {c} outside 0..{classes}"),
                });
            }
            m.data[i * classes + c] = 1.0;
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn dims(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::shape("matmul", self.dims(), other.dims()));
        }
        let (n, m) = (self.rows, other.cols);
        let mut out = Self::zeros(n, m);
        for i in 0..n {
            let out_row = &mut out.data[i * m..(i + 1) * m];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * m..(k + 1) * m];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::shape("t_matmul", self.dims(), other.dims()));
        }
        let (n, m) = (self.cols, other.cols);
        let mut out = Self::zeros(n, m);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * m..(i + 1) * m];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::shape("matmul_t", self.dims(), other.dims()));
        }
        let (n, m) = (self.rows, other.rows);
        let mut out = Self::zeros(n, m);
        for i in 0..n {
            let a = self.row(i);
            for j in 0..m {
                out.data[i * m + j] = dot(a, other.row(j));
            }
        }
        Ok(out)
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::shape(op, self.dims(), other.dims()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add_scaled_in_place(&mut self, other: &Self, s: f64) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape("add_scaled", self.dims(), other.dims()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn add_to_diagonal(&mut self, v: f64) {
        for i in 0..self.rows.min(self.cols) {
            self.data[i * self.cols + i] += v;
        }
    }

    /// `(M + Mᵀ) / 2` in place.
    pub fn symmetrize(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    /// Append `extra` zero columns on the right.
    pub fn pad_cols(&self, extra: usize) -> Self {
        if extra == 0 {
            return self.clone();
        }
        let cols = self.cols + extra;
        let mut out = Self::zeros(self.rows, cols);
        for i in 0..self.rows {
            out.data[i * cols..i * cols + self.cols].copy_from_slice(self.row(i));
        }
        out
    }

    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols && self.rows != 0 && other.rows != 0 {
            return Err(Error::shape("vstack", self.dims(), other.dims()));
        }
        let cols = if self.rows == 0 { other.cols } else { self.cols };
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self::new(self.rows + other.rows, cols, data)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `‖self − other‖_F / ‖other‖_F` (absolute when `other` is zero).
    pub fn rel_frobenius_err(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "rel_frobenius_err shape");
        let diff: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let base = other.frobenius_norm();
        if base == 0.0 {
            diff
        } else {
            diff / base
        }
    }

    pub fn asymmetry(&self) -> f64 {
        let n = self.rows;
        let mut m = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                m = m.max((self.data[i * n + j] - self.data[j * n + i]).abs());
            }
        }
        m
    }

    /// Row-wise argmax, ties to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|i| {
                let r = self.row(i);
                let mut best = 0;
                for (j, &v) in r.iter().enumerate().skip(1) {
                    if v > r[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::shape("cholesky", a.dims(), "square"));
        }
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let lj = &l.data[j * n..j * n + j];
            let d = a.get(j, j) - dot(lj, lj);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Singular { pivot: j });
            }
            let djj = d.sqrt();
            l.data[j * n + j] = djj;
            for i in (j + 1)..n {
                let s = a.get(i, j) - dot(&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
                l.data[i * n + j] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.l
    }

    /// Solves `L V = B` column by column; `B` is `n × m`.
    pub fn forward_solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        let n = self.l.rows();
        if b.rows() != n {
            return Err(Error::shape("forward_solve", self.l.dims(), b.dims()));
        }
        let m = b.cols();
        let mut v = b.clone();
        for i in 0..n {
            let lii = self.l.data[i * n + i];
            for k in 0..i {
                let lik = self.l.data[i * n + k];
                if lik == 0.0 {
                    continue;
                }
                let (done, rest) = v.data.split_at_mut(i * m);
                let vk = &done[k * m..(k + 1) * m];
                for (x, y) in rest[..m].iter_mut().zip(vk) {
                    *x -= lik * y;
                }
            }
            for x in &mut v.data[i * m..(i + 1) * m] {
                *x /= lii;
            }
        }
        Ok(v)
    }

    /// Solves `Lᵀ X = B`.
    pub fn backward_solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        let n = self.l.rows();
        if b.rows() != n {
            return Err(Error::shape("backward_solve", self.l.dims(), b.dims()));
        }
        let m = b.cols();
        let mut x = b.clone();
        for i in (0..n).rev() {
            let lii = self.l.data[i * n + i];
            for k in (i + 1)..n {
                let lki = self.l.data[k * n + i];
                if lki == 0.0 {
                    continue;
                }
                let (head, tail) = x.data.split_at_mut(k * m);
                let xk = &tail[..m];
                for (a, b) in head[i * m..(i + 1) * m].iter_mut().zip(xk) {
                    *a -= lki * b;
                }
            }
            for a in &mut x.data[i * m..(i + 1) * m] {
                *a /= lii;
            }
        }
        Ok(x)
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        self.backward_solve(&self.forward_solve(b)?)
    }

    /// `A⁻¹ = L⁻ᵀ L⁻¹`, symmetrized.
    pub fn inverse(&self) -> DenseMatrix {
        let n = self.l.rows();
        let linv = self
            .forward_solve(&DenseMatrix::identity(n))
            .expect("square factor");
        let mut inv = linv.t_matmul(&linv).expect("square factor");
        inv.symmetrize();
        inv
    }
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
///
/// Symmetry is checked against `1e-9 · max(1, max|a_ij|)`; the result is
/// returned as `(M + Mᵀ)/2`.
pub fn sym_inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows() != a.cols() {
        return Err(Error::shape("sym_inverse", a.dims(), "square"));
    }
    let tol = 1e-9 * a.max_abs().max(1.0);
    if a.asymmetry() > tol {
        return Err(Error::Parameter(format!(
            "sym_inverse: matrix not symmetric (max deviation {:e})",
            a.asymmetry()
        )));
    }
    Ok(Cholesky::factor(a)?.inverse())
}

/// `rows × cols` matrix of i.i.d. `N(0, scale²)` entries drawn row-major from
/// the [`Stream::Matrix`] stream of `seed`.
pub fn gaussian_matrix(rows: usize, cols: usize, scale: f64, seed: RngSeed) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::shape("gaussian_matrix", format!("{rows}x{cols}"), "nonzero dims"));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Parameter(format!("gaussian_matrix: scale must be > 0, got {scale}")));
    }
    let mut rng = SeededRng::new(seed, Stream::Matrix);
    let data = (0..rows * cols).map(|_| scale * rng.normal()).collect();
    DenseMatrix::new(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn spd(n: usize, seed: u64, eps: f64) -> DenseMatrix {
        let b = gaussian_matrix(n + 2, n, 1.0, RngSeed(seed)).unwrap();
        let mut a = b.t_matmul(&b).unwrap();
        a.add_to_diagonal(eps);
        a
    }

    #[test]
    fn matmul_examples() {
        let i3 = DenseMatrix::identity(3);
        let x = gaussian_matrix(3, 4, 1.0, RngSeed(1)).unwrap();
        assert_eq!(i3.matmul(&x).unwrap(), x);
        let z = DenseMatrix::zeros(2, 3);
        assert_eq!(z.matmul(&x).unwrap(), DenseMatrix::zeros(2, 4));
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = m(&[&[1.0], &[1.0]]);
        assert_eq!(a.matmul(&b).unwrap(), m(&[&[3.0], &[7.0]]));
    }

    #[test]
    fn matmul_shape_error_names_operands() {
        let err = DenseMatrix::zeros(2, 3).matmul(&DenseMatrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn transposed_products_agree() {
        let a = gaussian_matrix(5, 3, 1.0, RngSeed(2)).unwrap();
        let b = gaussian_matrix(5, 4, 1.0, RngSeed(3)).unwrap();
        let c = gaussian_matrix(6, 3, 1.0, RngSeed(4)).unwrap();
        assert!(a.t_matmul(&b).unwrap().max_abs_diff(&a.transpose().matmul(&b).unwrap()) < 1e-14);
        assert!(a.matmul_t(&c).unwrap().max_abs_diff(&a.matmul(&c.transpose()).unwrap()) < 1e-14);
    }

    #[test]
    fn sym_inverse_examples() {
        assert_eq!(sym_inverse(&DenseMatrix::identity(4)).unwrap(), DenseMatrix::identity(4));
        let inv = sym_inverse(&DenseMatrix::diag(&[2.0, 4.0])).unwrap();
        assert!(inv.max_abs_diff(&DenseMatrix::diag(&[0.5, 0.25])) <= 1e-15);

        let a = spd(5, 11, 1.0);
        let inv = sym_inverse(&a).unwrap();
        let prod = a.matmul(&inv).unwrap();
        assert!(prod.max_abs_diff(&DenseMatrix::identity(5)) <= 1e-10);
        assert_eq!(inv.asymmetry(), 0.0);
    }

    #[test]
    fn sym_inverse_errors() {
        let err = sym_inverse(&DenseMatrix::zeros(2, 3)).unwrap_err();
        assert_eq!(err.kind(), "shape");
        let err = sym_inverse(&DenseMatrix::diag(&[1.0, 2.0, -1.0, 4.0])).unwrap_err();
        assert!(matches!(err, Error::Singular { pivot: 2 }));
    }

    #[test]
    fn cholesky_solve_matches_inverse() {
        let a = spd(6, 5, 0.5);
        let b = gaussian_matrix(6, 2, 1.0, RngSeed(6)).unwrap();
        let x = Cholesky::factor(&a).unwrap().solve(&b).unwrap();
        assert!(a.matmul(&x).unwrap().max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn gaussian_matrix_determinism_and_params() {
        let a = gaussian_matrix(7, 9, 0.3, RngSeed(42)).unwrap();
        let b = gaussian_matrix(7, 9, 0.3, RngSeed(42)).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(gaussian_matrix(2, 2, 0.0, RngSeed(1)).unwrap_err().kind(), "parameter");
        assert_eq!(gaussian_matrix(0, 2, 1.0, RngSeed(1)).unwrap_err().kind(), "shape");
    }

    #[test]
    fn gaussian_matrix_moments() {
        let n = 10_000;
        let scale = 2.5;
        let g = gaussian_matrix(100, 100, scale, RngSeed(2024)).unwrap();
        let mean = g.data().iter().sum::<f64>() / n as f64;
        let var = g.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 3.0 * scale / (n as f64).sqrt(), "mean {mean}");
        assert!((var.sqrt() - scale).abs() <= 0.05 * scale, "std {}", var.sqrt());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn spd_inverse_multiplies_back(n in 1usize..24, seed in any::<u64>(), eps_exp in -6i32..1) {
            let a = spd(n, seed, 10f64.powi(eps_exp));
            let inv = sym_inverse(&a).unwrap();
            let dev = a.matmul(&inv).unwrap().max_abs_diff(&DenseMatrix::identity(n));
            prop_assert!(dev <= 1e-8, "deviation {dev}");
        }

        #[test]
        fn matmul_is_associative(
            (n, k, l, p) in (1usize..64, 1usize..64, 1usize..64, 1usize..64),
            seed in any::<u64>(),
        ) {
            let mut rng = SeededRng::new(RngSeed(seed), Stream::Data);
            let mut draw = |r: usize, c: usize| {
                DenseMatrix::new(r, c, (0..r * c).map(|_| 2.0 * rng.uniform() - 1.0).collect()).unwrap()
            };
            let a = draw(n, k);
            let b = draw(k, l);
            let c = draw(l, p);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = left.max_abs().max(1.0);
            prop_assert!(left.max_abs_diff(&right) <= 1e-10 * scale);
        }
    }
}
