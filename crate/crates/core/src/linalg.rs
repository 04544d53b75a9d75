//! Dense real linear algebra for the small systems the solvers work with
//! (n up to a few dozen), plus polynomial root finding.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

/// Relative pivot threshold, scaled by the Frobenius norm of the factored matrix.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Roots closer than this are reported as one root with multiplicity.
pub const ROOT_CLUSTER_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision (pivot {pivot:e} at column {column})")]
    SingularMatrix { column: usize, pivot: f64 },
    #[error("matrix does not have full row rank")]
    RankDeficient,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("zero polynomial has no roots")]
    ZeroPolynomial,
}

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    /// Builds a matrix from row-major entries. Entries must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::ShapeMismatch(format!(
                "dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(LinalgError::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: idx / cols,
                col: idx % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from literal rows. Panics on ragged or non-finite input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for r in rows {
            assert_eq!(r.as_ref().len(), ncols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), ncols, data).expect("valid literal matrix")
    }

    /// Column vector.
    pub fn column(values: &[f64]) -> Self {
        Self::new(values.len(), 1, values.to_vec()).expect("valid column vector")
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

    /// Fills a matrix by calling `f(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Mat) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(
            self.cols,
            other.rows,
            "matmul shape mismatch: {:?} x {:?}",
            self.shape(),
            other.shape()
        );
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for p in 0..self.cols {
                let a = self.data[i * self.cols + p];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[p * other.cols..(p + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn fro_norm(&self) -> f64 {
        fro_norm(self)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Stacks `top` above `bottom`.
    pub fn vstack(top: &Mat, bottom: &Mat) -> Mat {
        assert_eq!(top.cols, bottom.cols, "vstack column mismatch");
        let mut data = top.data.clone();
        data.extend_from_slice(&bottom.data);
        Mat {
            rows: top.rows + bottom.rows,
            cols: top.cols,
            data,
        }
    }

    /// Copies rows `start..end`.
    pub fn row_range(&self, start: usize, end: usize) -> Mat {
        Mat {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{}x{}[", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
        }
        write!(f, "]")
    }
}

impl Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        self.matmul(rhs)
    }
}

impl Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

/// Frobenius norm.
pub fn fro_norm(m: &Mat) -> f64 {
    // scaled accumulation so tiny residuals don't underflow
    let scale = m.max_abs();
    if scale == 0.0 {
        return 0.0;
    }
    let sum: f64 = m.data.iter().map(|v| (v / scale).powi(2)).sum();
    scale * sum.sqrt()
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Mat) -> Result<Self, LinalgError> {
        if a.rows != a.cols {
            return Err(LinalgError::ShapeMismatch(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let threshold = PIVOT_TOLERANCE * fro_norm(a);
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (piv_row, piv_abs) =
                (col..n)
                    .map(|r| (r, lu[r * n + col].abs()))
                    .fold(
                        (col, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if piv_abs <= threshold || piv_abs == 0.0 {
                return Err(LinalgError::SingularMatrix {
                    column: col,
                    pivot: piv_abs,
                });
            }
            if piv_row != col {
                for j in 0..n {
                    lu.swap(col * n + j, piv_row * n + j);
                }
                perm.swap(col, piv_row);
            }
            let pivot = lu[col * n + col];
            for r in col + 1..n {
                let factor = lu[r * n + col] / pivot;
                lu[r * n + col] = factor;
                if factor != 0.0 {
                    for j in col + 1..n {
                        lu[r * n + j] -= factor * lu[col * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, rhs: &Mat) -> Result<Mat, LinalgError> {
        let n = self.n;
        if rhs.rows != n {
            return Err(LinalgError::ShapeMismatch(format!(
                "right-hand side has {} rows, expected {n}",
                rhs.rows
            )));
        }
        let m = rhs.cols;
        let mut x = Mat::from_fn(n, m, |i, j| rhs.get(self.perm[i], j));
        // forward substitution, unit lower triangle
        for i in 0..n {
            for p in 0..i {
                let l = self.lu[i * n + p];
                if l != 0.0 {
                    for j in 0..m {
                        let v = x.get(p, j);
                        x.data[i * m + j] -= l * v;
                    }
                }
            }
        }
        for i in (0..n).rev() {
            for p in i + 1..n {
                let u = self.lu[i * n + p];
                if u != 0.0 {
                    for j in 0..m {
                        let v = x.get(p, j);
                        x.data[i * m + j] -= u * v;
                    }
                }
            }
            let d = self.lu[i * n + i];
            for j in 0..m {
                x.data[i * m + j] /= d;
            }
        }
        Ok(x)
    }
}

/// Solves `a X = rhs` by partial-pivoting LU.
pub fn lu_solve(a: &Mat, rhs: &Mat) -> Result<Mat, LinalgError> {
    Lu::factor(a)?.solve(rhs)
}

pub fn inverse(a: &Mat) -> Result<Mat, LinalgError> {
    lu_solve(a, &Mat::identity(a.rows))
}

/// Right generalized inverse `Bᵀ(BBᵀ)⁻¹` of a full-row-rank `m x n` matrix, `m <= n`.
pub fn pinv(b: &Mat) -> Result<Mat, LinalgError> {
    if b.rows > b.cols {
        return Err(LinalgError::ShapeMismatch(format!(
            "pinv expects m <= n, got {}x{}",
            b.rows, b.cols
        )));
    }
    let gram = b.matmul(&b.transpose());
    // gram is symmetric, so solving gram Z = B gives Z = (BBᵀ)⁻¹B = Yᵀ
    let z = lu_solve(&gram, b).map_err(|e| match e {
        LinalgError::SingularMatrix { .. } => LinalgError::RankDeficient,
        other => other,
    })?;
    Ok(z.transpose())
}

/// Real polynomial, coefficients in ascending degree order.
#[derive(Debug, Clone, PartialEq)]
pub struct RealPoly {
    coeffs: Vec<f64>,
}

impl RealPoly {
    /// Trailing zero coefficients are trimmed; the zero polynomial is `[0.0]`.
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    }

    fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }
}

impl fmt::Display for RealPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (deg, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0.0 && !(first && deg == 0) {
                continue;
            }
            let sign = if c < 0.0 { "-" } else { "+" };
            if first {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let mag = c.abs();
            match deg {
                0 => write!(f, "{mag}")?,
                _ if mag == 1.0 => {}
                _ => write!(f, "{mag}*")?,
            }
            match deg {
                0 => {}
                1 => write!(f, "θ")?,
                _ => write!(f, "θ^{deg}")?,
            }
            first = false;
        }
        Ok(())
    }
}

/// A polynomial root together with its estimated multiplicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyRoot {
    pub value: Complex64,
    pub multiplicity: usize,
}

/// All complex roots of `p`, found by Aberth–Ehrlich simultaneous iteration
/// followed by Newton polishing. Roots within [`ROOT_CLUSTER_RADIUS`] of each
/// other are merged and reported with their multiplicity.
pub fn poly_roots(p: &RealPoly) -> Result<Vec<PolyRoot>, LinalgError> {
    if p.is_zero() {
        return Err(LinalgError::ZeroPolynomial);
    }
    let n = p.degree();
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = p.leading();
    let monic = RealPoly::new(p.coeffs.iter().map(|c| c / lead).collect());

    let raw: Vec<Complex64> = if n == 1 {
        vec![Complex64::new(-monic.coeffs[0], 0.0)]
    } else {
        aberth(&monic)
    };
    Ok(cluster_roots(raw))
}

fn aberth(monic: &RealPoly) -> Vec<Complex64> {
    let n = monic.degree();
    // Cauchy bound on root moduli
    let radius = 1.0
        + monic.coeffs[..n]
            .iter()
            .fold(0.0_f64, |m, c| m.max(c.abs()));
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            let angle = 0.4 + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            Complex64::from_polar(0.5 * radius, angle)
        })
        .collect();

    for _ in 0..1000 {
        let mut max_step = 0.0_f64;
        for i in 0..n {
            let (pv, dpv) = monic.eval_with_derivative(z[i]);
            if pv.norm() == 0.0 {
                continue;
            }
            let ratio = pv / dpv;
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = z[i] - z[j];
                    if d.norm() == 0.0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        d.inv()
                    }
                })
                .sum();
            let denom = Complex64::new(1.0, 0.0) - ratio * repulsion;
            let step = if denom.norm() == 0.0 || !denom.is_finite() {
                ratio
            } else {
                ratio / denom
            };
            if step.is_finite() {
                z[i] -= step;
                max_step = max_step.max(step.norm() / (1.0 + z[i].norm()));
            }
        }
        if max_step < 1e-15 {
            break;
        }
    }

    // polish; keep the Newton step only if it lowers the residual
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let (pv, dpv) = monic.eval_with_derivative(*zi);
            if dpv.norm() == 0.0 {
                break;
            }
            let cand = *zi - pv / dpv;
            if cand.is_finite() && monic.eval_complex(cand).norm() < pv.norm() {
                *zi = cand;
            } else {
                break;
            }
        }
        // real polynomial: snap numerically-real roots onto the axis
        if zi.im.abs() <= 1e-12 * (1.0 + zi.re.abs()) {
            let snapped = Complex64::new(zi.re, 0.0);
            if monic.eval_complex(snapped).norm()
                <= monic.eval_complex(*zi).norm() * 1.0001 + 1e-300
            {
                *zi = snapped;
            }
        }
    }
    z
}

fn cluster_roots(mut raw: Vec<Complex64>) -> Vec<PolyRoot> {
    raw.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut used = vec![false; raw.len()];
    let mut out = Vec::new();
    for i in 0..raw.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let mut members = vec![raw[i]];
        for j in i + 1..raw.len() {
            if !used[j] && (raw[j] - raw[i]).norm() < ROOT_CLUSTER_RADIUS {
                used[j] = true;
                members.push(raw[j]);
            }
        }
        let mean = members.iter().sum::<Complex64>() / members.len() as f64;
        out.push(PolyRoot {
            value: mean,
            multiplicity: members.len(),
        });
    }
    out
}
