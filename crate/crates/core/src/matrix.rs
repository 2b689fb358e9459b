//! Small dense complex matrices and the structured operations used throughout
//! the crate: nilpotent exponentials, integer-power conjugations, right
//! inverses and (anti)commutators.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

/// Complex double-precision scalar.
pub type C64 = Complex64;

const NILPOTENT_TOL: f64 = 1e-12;
const RIGHT_INVERSE_MAX_COND: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("not nilpotent (max |A^{rows}| = {residual:e})")]
    NotNilpotent { rows: usize, residual: f64 },
    #[error("pole at origin")]
    PoleAtOrigin,
    #[error("rank deficient (condition number {cond:e})")]
    RankDeficient { cond: f64 },
    #[error("shape mismatch: {left:?} vs {right:?} in {op}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("singular matrix")]
    Singular,
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),
    #[error("empty matrix")]
    Empty,
}

/// Dense complex matrix with value semantics.
#[derive(Clone, PartialEq)]
pub struct Mat(DMatrix<C64>);

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Mat(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        assert!(n >= 1, "matrix dimensions must be positive");
        Mat(DMatrix::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Mat(DMatrix::from_fn(rows, cols, |i, j| f(i, j)))
    }

    /// Builds a real matrix from row slices; imaginary parts are exactly zero.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self, MatrixError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if r == 0 || c == 0 {
            return Err(MatrixError::Empty);
        }
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(MatrixError::ShapeMismatch {
                op: "from_rows",
                left: (1, c),
                right: (1, bad.len()),
            });
        }
        Ok(Self::from_fn(r, c, |i, j| rows[i][j]))
    }

    pub fn diag_real(d: &[f64]) -> Self {
        let n = d.len();
        Self::from_fn(n, n, |i, j| if i == j { C64::new(d[i], 0.0) } else { C64::new(0.0, 0.0) })
    }

    pub fn scalar(n: usize, c: C64) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { c } else { C64::new(0.0, 0.0) })
    }

    pub fn from_dmatrix(m: DMatrix<C64>) -> Self {
        assert!(m.nrows() >= 1 && m.ncols() >= 1, "matrix dimensions must be positive");
        Mat(m)
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    /// Plain (non-conjugating) transpose.
    pub fn transpose(&self) -> Self {
        Mat(self.0.transpose())
    }

    pub fn scale(&self, c: f64) -> Self {
        Mat(self.0.map(|v| v * c))
    }

    pub fn scale_c(&self, c: C64) -> Self {
        Mat(self.0.map(|v| v * c))
    }

    pub fn map(&self, f: impl FnMut(C64) -> C64) -> Self {
        Mat(self.0.map(f))
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.norm()))
    }

    pub fn max_imag(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.im.abs()))
    }

    pub fn real_part(&self) -> Self {
        self.map(|v| C64::new(v.re, 0.0))
    }

    pub fn is_real(&self) -> bool {
        self.0.iter().all(|v| v.im == 0.0)
    }

    /// Row-major entries.
    pub fn entries_row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Mat(self.0.view((r0, c0), (rows, cols)).into_owned())
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Mat) {
        self.0.view_mut((r0, c0), b.shape()).copy_from(&b.0);
    }

    /// Stacks blocks given row by row.
    pub fn from_blocks(blocks: &[Vec<&Mat>]) -> Result<Self, MatrixError> {
        let heights: Vec<usize> = blocks.iter().map(|row| row[0].rows()).collect();
        let widths: Vec<usize> = blocks[0].iter().map(|b| b.cols()).collect();
        let mut out = Mat::zeros(heights.iter().sum(), widths.iter().sum());
        let mut r0 = 0;
        for (bi, row) in blocks.iter().enumerate() {
            let mut c0 = 0;
            if row.len() != widths.len() {
                return Err(MatrixError::ShapeMismatch {
                    op: "from_blocks",
                    left: (heights[bi], widths.len()),
                    right: (heights[bi], row.len()),
                });
            }
            for (bj, b) in row.iter().enumerate() {
                if b.shape() != (heights[bi], widths[bj]) {
                    return Err(MatrixError::ShapeMismatch {
                        op: "from_blocks",
                        left: (heights[bi], widths[bj]),
                        right: b.shape(),
                    });
                }
                out.set_block(r0, c0, b);
                c0 += widths[bj];
            }
            r0 += heights[bi];
        }
        Ok(out)
    }

    pub fn try_mul(&self, rhs: &Mat) -> Result<Mat, MatrixError> {
        if self.cols() != rhs.rows() {
            return Err(MatrixError::ShapeMismatch { op: "mul", left: self.shape(), right: rhs.shape() });
        }
        Ok(Mat(&self.0 * &rhs.0))
    }

    pub fn try_add(&self, rhs: &Mat) -> Result<Mat, MatrixError> {
        if self.shape() != rhs.shape() {
            return Err(MatrixError::ShapeMismatch { op: "add", left: self.shape(), right: rhs.shape() });
        }
        Ok(Mat(&self.0 + &rhs.0))
    }

    pub fn det(&self) -> Result<C64, MatrixError> {
        if !self.is_square() {
            return Err(MatrixError::NotSquare(self.rows(), self.cols()));
        }
        Ok(self.0.clone().lu().determinant())
    }

    pub fn inverse(&self) -> Result<Mat, MatrixError> {
        if !self.is_square() {
            return Err(MatrixError::NotSquare(self.rows(), self.cols()));
        }
        self.0.clone().try_inverse().map(Mat).ok_or(MatrixError::Singular)
    }

    /// Solves `self * X = rhs`.
    pub fn solve(&self, rhs: &Mat) -> Result<Mat, MatrixError> {
        if !self.is_square() {
            return Err(MatrixError::NotSquare(self.rows(), self.cols()));
        }
        if self.rows() != rhs.rows() {
            return Err(MatrixError::ShapeMismatch { op: "solve", left: self.shape(), right: rhs.shape() });
        }
        self.0.clone().lu().solve(&rhs.0).map(Mat).ok_or(MatrixError::Singular)
    }

    pub fn pow(&self, k: u32) -> Mat {
        assert!(self.is_square());
        let mut out = Mat::identity(self.rows());
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Eigen-decomposition of the real symmetric part (imaginary parts ignored).
    fn real_sym_eigen(&self) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, MatrixError> {
        if !self.is_square() {
            return Err(MatrixError::NotSquare(self.rows(), self.cols()));
        }
        let re = self.0.map(|v| v.re);
        let sym = (&re + re.transpose()) * 0.5;
        Ok(SymmetricEigen::new(sym))
    }

    /// Eigenvalues of the real symmetric part, ascending.
    pub fn sym_eigenvalues(&self) -> Result<Vec<f64>, MatrixError> {
        let mut ev: Vec<f64> = self.real_sym_eigen()?.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }

    /// Symmetric inverse square root of a real symmetric positive-definite matrix.
    pub fn sym_inv_sqrt(&self) -> Result<Mat, MatrixError> {
        let eig = self.real_sym_eigen()?;
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(MatrixError::Singular);
        }
        let q = &eig.eigenvectors;
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let r = q * d * q.transpose();
        Ok(Mat(r.map(|v| C64::new(v, 0.0))))
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows(), self.cols())?;
        for i in 0..self.rows() {
            write!(f, "  ")?;
            for j in 0..self.cols() {
                let v = self.0[(i, j)];
                write!(f, "{:+.6e}{:+.6e}i  ", v.re, v.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut C64 {
        &mut self.0[idx]
    }
}

macro_rules! binop {
    ($tr:ident, $f:ident, $op:tt) => {
        impl $tr<&Mat> for &Mat {
            type Output = Mat;
            fn $f(self, rhs: &Mat) -> Mat {
                Mat(&self.0 $op &rhs.0)
            }
        }
        impl $tr<Mat> for Mat {
            type Output = Mat;
            fn $f(self, rhs: Mat) -> Mat {
                Mat(self.0 $op rhs.0)
            }
        }
        impl $tr<&Mat> for Mat {
            type Output = Mat;
            fn $f(self, rhs: &Mat) -> Mat {
                Mat(self.0 $op &rhs.0)
            }
        }
        impl $tr<Mat> for &Mat {
            type Output = Mat;
            fn $f(self, rhs: Mat) -> Mat {
                Mat(&self.0 $op rhs.0)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);

impl Neg for Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        Mat(-self.0)
    }
}

impl Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        Mat(-&self.0)
    }
}

impl AddAssign<&Mat> for Mat {
    fn add_assign(&mut self, rhs: &Mat) {
        self.0 += &rhs.0;
    }
}

impl SubAssign<&Mat> for Mat {
    fn sub_assign(&mut self, rhs: &Mat) {
        self.0 -= &rhs.0;
    }
}

/// Integer exponent diagonal such as `diag(N-1, ..., 0)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntDiag(Vec<i32>);

impl IntDiag {
    pub fn new(exponents: Vec<i32>) -> Self {
        IntDiag(exponents)
    }

    /// `diag(N-1, N-2, ..., 0)`.
    pub fn descending(n: usize) -> Self {
        IntDiag((0..n).rev().map(|k| k as i32).collect())
    }

    pub fn zero(n: usize) -> Self {
        IntDiag(vec![0; n])
    }

    pub fn scaled(&self, k: i32) -> Self {
        IntDiag(self.0.iter().map(|e| e * k).collect())
    }

    pub fn exponents(&self) -> &[i32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_mat(&self) -> Mat {
        let d: Vec<f64> = self.0.iter().map(|&e| e as f64).collect();
        Mat::diag_real(&d)
    }
}

/// Integer power of a complex number by repeated squaring.
pub fn ipow(z: C64, k: i32) -> C64 {
    let mut base = if k < 0 { z.inv() } else { z };
    let mut e = k.unsigned_abs();
    let mut acc = C64::new(1.0, 0.0);
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

/// `z^{left} M z^{-right}`: entry (i,j) scaled by `z^(left_i - right_j)`.
pub fn power_conjugate(left: &IntDiag, m: &Mat, right: &IntDiag, z: C64) -> Result<Mat, MatrixError> {
    if left.len() != m.rows() || right.len() != m.cols() {
        return Err(MatrixError::ShapeMismatch {
            op: "power_conjugate",
            left: (left.len(), right.len()),
            right: m.shape(),
        });
    }
    let mut out = m.clone();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let e = left.0[i] - right.0[j];
            if z == C64::new(0.0, 0.0) {
                if e < 0 && m[(i, j)] != C64::new(0.0, 0.0) {
                    return Err(MatrixError::PoleAtOrigin);
                }
                if e > 0 {
                    out[(i, j)] = C64::new(0.0, 0.0);
                }
                continue;
            }
            out[(i, j)] *= ipow(z, e);
        }
    }
    Ok(out)
}

/// Truncated exponential series of a nilpotent matrix times `x`.
pub fn nilpotent_exp(a: &Mat, x: f64) -> Result<Mat, MatrixError> {
    if !a.is_square() {
        return Err(MatrixError::NotSquare(a.rows(), a.cols()));
    }
    let n = a.rows();
    let residual = a.pow(n as u32).max_norm();
    if residual > NILPOTENT_TOL {
        return Err(MatrixError::NotNilpotent { rows: n, residual });
    }
    let ax = a.scale(x);
    let mut term = Mat::identity(n);
    let mut sum = Mat::identity(n);
    for k in 1..n {
        term = (&term * &ax).scale(1.0 / k as f64);
        sum += &term;
    }
    Ok(sum)
}

/// `M^T (M M^T)^{-1}` for a full-row-rank matrix with rows <= cols.
pub fn right_inverse(m: &Mat) -> Result<Mat, MatrixError> {
    if m.rows() > m.cols() {
        return Err(MatrixError::ShapeMismatch { op: "right_inverse", left: m.shape(), right: (m.cols(), m.rows()) });
    }
    let mt = m.transpose();
    let gram = m * &mt;
    let cond = condition_estimate(&gram)?;
    if !cond.is_finite() || cond > RIGHT_INVERSE_MAX_COND {
        return Err(MatrixError::RankDeficient { cond });
    }
    Ok(mt * gram.inverse()?)
}

/// 1-norm condition number via an explicit inverse; adequate for small matrices.
pub fn condition_estimate(m: &Mat) -> Result<f64, MatrixError> {
    let one_norm = |a: &Mat| {
        (0..a.cols())
            .map(|j| (0..a.rows()).map(|i| a[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match m.inverse() {
        Ok(inv) => Ok(one_norm(m) * one_norm(&inv)),
        Err(MatrixError::Singular) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

pub fn commutator(x: &Mat, y: &Mat) -> Result<Mat, MatrixError> {
    check_square_pair("commutator", x, y)?;
    Ok(x * y - y * x)
}

pub fn anticommutator(x: &Mat, y: &Mat) -> Result<Mat, MatrixError> {
    check_square_pair("anticommutator", x, y)?;
    Ok(x * y + y * x)
}

fn check_square_pair(op: &'static str, x: &Mat, y: &Mat) -> Result<(), MatrixError> {
    if !x.is_square() || x.shape() != y.shape() {
        return Err(MatrixError::ShapeMismatch { op, left: x.shape(), right: y.shape() });
    }
    Ok(())
}

/// Elementary matrix with a single one at (i, j).
pub fn elementary(rows: usize, cols: usize, i: usize, j: usize) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    m[(i, j)] = C64::new(1.0, 0.0);
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    /// Scaling-and-squaring Taylor exponential, independent of the nilpotent path.
    fn expm_oracle(a: &Mat) -> Mat {
        let s = 10;
        let small = a.scale(0.5f64.powi(s));
        let mut term = Mat::identity(a.rows());
        let mut sum = Mat::identity(a.rows());
        for k in 1..30 {
            term = (&term * &small).scale(1.0 / k as f64);
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn nilpotent_exp_of_zero_is_identity() {
        let e = nilpotent_exp(&Mat::zeros(2, 2), 3.7).unwrap();
        assert_eq!(e, Mat::identity(2));
    }

    #[test]
    fn nilpotent_exp_of_shift_is_affine() {
        let nu = 1.3;
        let a = elementary(2, 2, 0, 1).scale(nu);
        let e = nilpotent_exp(&a, 0.4).unwrap();
        assert_eq!(e, Mat::from_real_rows(&[&[1.0, nu * 0.4], &[0.0, 1.0]]));
    }

    #[test]
    fn nilpotent_exp_matches_generic_exponential() {
        let a = Mat::from_real_rows(&[&[0.0, 0.3, -1.2], &[0.0, 0.0, 0.8], &[0.0, 0.0, 0.0]]);
        let got = nilpotent_exp(&a, 0.7).unwrap();
        let want = expm_oracle(&a.scale(0.7));
        assert!((got - want).max_norm() < 1e-13);
    }

    #[test]
    fn nilpotent_exp_rejects_non_nilpotent() {
        let a = Mat::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(nilpotent_exp(&a, 1.0), Err(MatrixError::NotNilpotent { .. })));
    }

    #[test]
    fn power_conjugate_scales_off_diagonal() {
        let m = Mat::from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let d = IntDiag::descending(2);
        let r = power_conjugate(&d, &m, &d, c(2.0)).unwrap();
        assert_eq!(r, Mat::from_real_rows(&[&[1.0, 4.0], &[1.5, 4.0]]));
    }

    #[test]
    fn power_conjugate_zero_exponents_is_identity_map() {
        let m = Mat::from_real_rows(&[&[1.0, 2.0, 5.0], &[3.0, 4.0, 6.0]]);
        let r = power_conjugate(&IntDiag::zero(2), &m, &IntDiag::zero(3), C64::new(0.3, 0.9)).unwrap();
        assert_eq!(r, m);
    }

    #[test]
    fn power_conjugate_pole_at_origin() {
        let m = Mat::from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let d = IntDiag::descending(2);
        assert_eq!(power_conjugate(&d, &m, &d, c(0.0)), Err(MatrixError::PoleAtOrigin));
    }

    #[test]
    fn power_conjugate_is_single_valued() {
        let m = Mat::from_real_rows(&[&[1.0, 2.0, 0.5], &[3.0, 4.0, -1.0]]);
        let l = IntDiag::descending(2).scaled(2);
        let r = IntDiag::descending(3);
        let z = C64::from_polar(1.7, 0.4);
        let z_wrapped = C64::from_polar(1.7, 0.4 + 2.0 * std::f64::consts::PI);
        let a = power_conjugate(&l, &m, &r, z).unwrap();
        let b = power_conjugate(&l, &m, &r, z_wrapped).unwrap();
        assert!((a - b).max_norm() < 1e-12);
    }

    #[test]
    fn commutator_of_shift_and_exponent_diagonal() {
        let a = elementary(2, 2, 0, 1);
        let j = IntDiag::descending(2).to_mat();
        assert_eq!(commutator(&a, &j).unwrap(), -&a);
    }

    #[test]
    fn commutator_shape_mismatch() {
        assert!(commutator(&Mat::zeros(2, 2), &Mat::zeros(3, 3)).is_err());
    }

    #[test]
    fn right_inverse_square_is_inverse() {
        let m = Mat::from_real_rows(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let r = right_inverse(&m).unwrap();
        assert!((r - m.inverse().unwrap()).max_norm() < 1e-14);
    }

    #[test]
    fn right_inverse_rank_deficient() {
        let m = Mat::from_real_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]]);
        assert!(matches!(right_inverse(&m), Err(MatrixError::RankDeficient { .. })));
    }

    #[test]
    fn sym_inv_sqrt_of_diagonal() {
        let m = Mat::diag_real(&[4.0, 9.0]);
        let r = m.sym_inv_sqrt().unwrap();
        assert!((r - Mat::diag_real(&[0.5, 1.0 / 3.0])).max_norm() < 1e-15);
    }

    #[test]
    fn ipow_negative_and_positive() {
        let z = C64::new(0.5, -1.5);
        assert!((ipow(z, 3) - z * z * z).norm() < 1e-14);
        assert!((ipow(z, -2) * z * z - c(1.0)).norm() < 1e-14);
        assert_eq!(ipow(z, 0), c(1.0));
    }

    #[test]
    fn from_blocks_assembles() {
        let a = Mat::identity(2);
        let b = Mat::zeros(2, 1);
        let m = Mat::from_blocks(&[vec![&a, &b]]).unwrap();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m[(1, 1)], c(1.0));
    }
}
