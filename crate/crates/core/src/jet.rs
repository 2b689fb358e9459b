//! Truncated Taylor series in `s` with matrix coefficients.
//!
//! A jet stores `c_0, ..., c_K` with `X(s0 + t) = sum_k c_k t^k + O(t^{K+1})`,
//! so the k-th derivative at `s0` is `k! c_k`.

use std::ops::{Add, Mul, Neg, Sub};

use crate::matrix::{Mat, MatrixError};

#[derive(Debug, Clone, PartialEq)]
pub struct MatJet {
    pub c: Vec<Mat>,
}

impl MatJet {
    /// Constant jet of order `order`.
    pub fn constant(m: Mat, order: usize) -> Self {
        let z = Mat::zeros(m.rows(), m.cols());
        let mut c = vec![z; order + 1];
        c[0] = m;
        MatJet { c }
    }

    /// `s0 + t` times the identity.
    pub fn variable(s0: f64, dim: usize, order: usize) -> Self {
        let mut j = MatJet::constant(Mat::identity(dim).scale(s0), order);
        if order >= 1 {
            j.c[1] = Mat::identity(dim);
        }
        j
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn shape(&self) -> (usize, usize) {
        self.c[0].shape()
    }

    pub fn value(&self) -> &Mat {
        &self.c[0]
    }

    /// k-th derivative at the expansion point.
    pub fn derivative_at(&self, k: usize) -> Mat {
        let f: f64 = (1..=k).map(|i| i as f64).product();
        self.c[k].scale(f)
    }

    /// Term-wise d/ds; the top coefficient becomes zero.
    pub fn deriv(&self) -> MatJet {
        let (r, cl) = self.shape();
        let mut c: Vec<Mat> = (1..self.c.len()).map(|k| self.c[k].scale(k as f64)).collect();
        c.push(Mat::zeros(r, cl));
        MatJet { c }
    }

    pub fn scale(&self, a: f64) -> MatJet {
        MatJet { c: self.c.iter().map(|m| m.scale(a)).collect() }
    }

    /// Multiplication by the scalar jet `s0 + t`.
    pub fn times_s(&self, s0: f64) -> MatJet {
        let mut c: Vec<Mat> = self.c.iter().map(|m| m.scale(s0)).collect();
        for k in 1..c.len() {
            c[k] += &self.c[k - 1];
        }
        MatJet { c }
    }

    pub fn transpose(&self) -> MatJet {
        MatJet { c: self.c.iter().map(Mat::transpose).collect() }
    }

    pub fn left_const(&self, m: &Mat) -> MatJet {
        MatJet { c: self.c.iter().map(|x| m * x).collect() }
    }

    pub fn right_const(&self, m: &Mat) -> MatJet {
        MatJet { c: self.c.iter().map(|x| x * m).collect() }
    }

    pub fn add_const(&self, m: &Mat) -> MatJet {
        let mut out = self.clone();
        out.c[0] += m;
        out
    }

    /// Series inverse of a square jet.
    pub fn inverse(&self) -> Result<MatJet, MatrixError> {
        let i0 = self.c[0].inverse()?;
        let mut out = vec![i0.clone()];
        for k in 1..self.c.len() {
            let mut acc = Mat::zeros(i0.rows(), i0.cols());
            for i in 1..=k {
                acc += &(&self.c[i] * &out[k - i]);
            }
            out.push(-(&i0 * &acc));
        }
        Ok(MatJet { c: out })
    }

    /// `X^T (X X^T)^{-1}` for a full-row-rank jet.
    pub fn right_inverse(&self) -> Result<MatJet, MatrixError> {
        let t = self.transpose();
        Ok(&t * &(self * &t).inverse()?)
    }

    pub fn max_norm(&self) -> f64 {
        self.c[0].max_norm()
    }
}

impl Add for &MatJet {
    type Output = MatJet;
    fn add(self, rhs: &MatJet) -> MatJet {
        MatJet { c: self.c.iter().zip(&rhs.c).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &MatJet {
    type Output = MatJet;
    fn sub(self, rhs: &MatJet) -> MatJet {
        MatJet { c: self.c.iter().zip(&rhs.c).map(|(a, b)| a - b).collect() }
    }
}

impl Neg for &MatJet {
    type Output = MatJet;
    fn neg(self) -> MatJet {
        MatJet { c: self.c.iter().map(|a| -a).collect() }
    }
}

/// Truncated Cauchy product.
impl Mul for &MatJet {
    type Output = MatJet;
    fn mul(self, rhs: &MatJet) -> MatJet {
        let k = self.c.len().min(rhs.c.len());
        let c = (0..k)
            .map(|n| {
                let mut acc = &self.c[0] * &rhs.c[n];
                for i in 1..=n {
                    acc += &(&self.c[i] * &rhs.c[n - i]);
                }
                acc
            })
            .collect();
        MatJet { c }
    }
}

macro_rules! owned_ops {
    ($tr:ident, $f:ident) => {
        impl $tr for MatJet {
            type Output = MatJet;
            fn $f(self, rhs: MatJet) -> MatJet {
                (&self).$f(&rhs)
            }
        }
        impl $tr<&MatJet> for MatJet {
            type Output = MatJet;
            fn $f(self, rhs: &MatJet) -> MatJet {
                (&self).$f(rhs)
            }
        }
        impl $tr<MatJet> for &MatJet {
            type Output = MatJet;
            fn $f(self, rhs: MatJet) -> MatJet {
                self.$f(&rhs)
            }
        }
    };
}

owned_ops!(Add, add);
owned_ops!(Sub, sub);
owned_ops!(Mul, mul);

impl Neg for MatJet {
    type Output = MatJet;
    fn neg(self) -> MatJet {
        -&self
    }
}

pub fn jet_commutator(a: &MatJet, b: &MatJet) -> MatJet {
    a * b - b * a
}

pub fn jet_anticommutator(a: &MatJet, b: &MatJet) -> MatJet {
    a * b + b * a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::C64;

    fn poly_jet(coeffs: &[[f64; 4]]) -> MatJet {
        MatJet {
            c: coeffs.iter().map(|v| Mat::from_real_rows(&[&[v[0], v[1]], &[v[2], v[3]]])).collect(),
        }
    }

    #[test]
    fn inverse_times_self_is_identity() {
        let a = poly_jet(&[[2.0, 0.3, -0.1, 1.5], [0.2, 0.1, 0.0, -0.4], [0.5, 0.0, 0.3, 0.2], [0.0, 0.1, 0.1, 0.0]]);
        let p = &a * &a.inverse().unwrap();
        assert!((&p.c[0] - Mat::identity(2)).max_norm() < 1e-14);
        for k in 1..=3 {
            assert!(p.c[k].max_norm() < 1e-14);
        }
    }

    #[test]
    fn product_rule() {
        let a = poly_jet(&[[1.0, 2.0, 0.0, 1.0], [0.5, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 0.0]]);
        let b = poly_jet(&[[0.0, 1.0, 1.0, 0.0], [1.0, 0.0, 0.0, 2.0], [0.0, 0.0, 0.0, 0.0]]);
        let lhs = (&a * &b).deriv();
        let rhs = &a.deriv() * &b + &a * &b.deriv();
        assert!((&lhs.c[0] - &rhs.c[0]).max_norm() < 1e-15);
        assert!((&lhs.c[1] - &rhs.c[1]).max_norm() < 1e-15);
    }

    #[test]
    fn times_s_matches_variable_product() {
        let a = poly_jet(&[[1.0, 2.0, 3.0, 4.0], [0.5, 0.1, -1.0, 0.0], [0.2, 0.0, 0.0, 0.3]]);
        let sv = MatJet::variable(0.7, 2, 2);
        let p = &sv * &a;
        let q = a.times_s(0.7);
        for k in 0..3 {
            assert!((&p.c[k] - &q.c[k]).max_norm() < 1e-15);
        }
    }

    #[test]
    fn derivative_at_uses_factorials() {
        let mut j = MatJet::constant(Mat::identity(1), 3);
        j.c[3] = Mat::scalar(1, C64::new(2.0, 0.0));
        assert_eq!(j.derivative_at(3)[(0, 0)].re, 12.0);
    }
}
