//! Christoffel-Darboux kernels in sum and double-contour form, and the loop
//! and line integral representations of the polynomials.

use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

use crate::matrix::{ipow, power_conjugate, IntDiag, Mat, MatrixError, C64};
use crate::mop::{family_constants, FamilyKind, MopError, MopFamily, WeightFamily};
use crate::quadrature::{check_contour_order, circle_rule, default_line_trunc, pairwise_sum, vline_rule, QuadError, QuadRule};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("kernel degree must be at least 1 for the contour form")]
    ZeroDegree,
    #[error("factor pair is not a right-inverse pair (residual {residual:e})")]
    NotRightInverse { residual: f64 },
    #[error("factor shapes {left:?} and {right:?} do not match")]
    FactorShape { left: (usize, usize), right: (usize, usize) },
    #[error(transparent)]
    Mop(#[from] MopError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Which representation a kernel evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelForm {
    Sum,
    DoubleIntA,
    DoubleIntB,
    Generic,
}

/// Matrix functions `left(z)` (N x p) and `right(w)` (p x N) with
/// `left(z) right(z) = I_N`, entering the integrable kernel.
pub trait KernelFactors: Sync {
    fn dim(&self) -> usize;
    fn inner_dim(&self) -> usize;
    fn left(&self, z: C64) -> Mat;
    fn right(&self, w: C64) -> Mat;
}

/// `z^{L} B z^{-M}` and `w^{M} Bhat w^{-R}` built from the closed-form constants.
#[derive(Debug, Clone)]
pub struct FamilyFactors {
    pub form: KernelForm,
    left_exp: IntDiag,
    mid_exp: IntDiag,
    right_exp: IntDiag,
    b: Mat,
    b_hat: Mat,
}

impl FamilyFactors {
    pub fn new(w: &WeightFamily, n: usize) -> Result<Self, KernelError> {
        if w.kind == FamilyKind::Scalar {
            let one = Mat::identity(1);
            return Ok(FamilyFactors {
                form: KernelForm::Generic,
                left_exp: IntDiag::zero(1),
                mid_exp: IntDiag::zero(1),
                right_exp: IntDiag::zero(1),
                b: one.clone(),
                b_hat: one,
            });
        }
        let k = family_constants(w, n)?;
        let j2 = IntDiag::descending(2);
        let (form, left_exp, mid_exp) = match w.kind {
            FamilyKind::ExampleA => (KernelForm::DoubleIntA, j2.clone(), j2.clone()),
            _ => (KernelForm::DoubleIntB, j2.scaled(2), IntDiag::descending(3)),
        };
        Ok(FamilyFactors { form, right_exp: left_exp.clone(), left_exp, mid_exp, b: k.b, b_hat: k.b_hat })
    }
}

impl KernelFactors for FamilyFactors {
    fn dim(&self) -> usize {
        self.b.rows()
    }
    fn inner_dim(&self) -> usize {
        self.b.cols()
    }
    fn left(&self, z: C64) -> Mat {
        power_conjugate(&self.left_exp, &self.b, &self.mid_exp, z).expect("shapes fixed at construction")
    }
    fn right(&self, w: C64) -> Mat {
        power_conjugate(&self.mid_exp, &self.b_hat, &self.right_exp, w).expect("shapes fixed at construction")
    }
}

/// User-supplied factor pair, for testing candidate constants of other sizes.
pub struct GenericFactors<L, R> {
    pub dim: usize,
    pub inner_dim: usize,
    pub left: L,
    pub right: R,
}

impl<L, R> KernelFactors for GenericFactors<L, R>
where
    L: Fn(C64) -> Mat + Sync,
    R: Fn(C64) -> Mat + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn inner_dim(&self) -> usize {
        self.inner_dim
    }
    fn left(&self, z: C64) -> Mat {
        (self.left)(z)
    }
    fn right(&self, w: C64) -> Mat {
        (self.right)(w)
    }
}

/// Checks shapes and `left(z) right(z) = I` at the given points.
pub fn validate_factors(f: &dyn KernelFactors, points: &[C64], tol: f64) -> Result<(), KernelError> {
    for &z in points {
        let l = f.left(z);
        let r = f.right(z);
        if l.shape() != (f.dim(), f.inner_dim()) || r.shape() != (f.inner_dim(), f.dim()) {
            return Err(KernelError::FactorShape { left: l.shape(), right: r.shape() });
        }
        let residual = (&l * &r - Mat::identity(f.dim())).max_norm();
        if residual > tol {
            return Err(KernelError::NotRightInverse { residual });
        }
    }
    Ok(())
}

/// Circle and vertical-line rules used jointly.
#[derive(Debug, Clone)]
pub struct ContourRules {
    pub radius: f64,
    pub line_re: f64,
    pub circle: QuadRule,
    pub line: QuadRule,
}

impl ContourRules {
    pub fn new(radius: f64, circle_nodes: usize, line_re: f64, line_trunc: f64, line_nodes: usize) -> Result<Self, QuadError> {
        check_contour_order(radius, line_re)?;
        Ok(ContourRules {
            radius,
            line_re,
            circle: circle_rule(radius, circle_nodes)?,
            line: vline_rule(line_re, line_trunc, line_nodes)?,
        })
    }
}

impl Default for ContourRules {
    fn default() -> Self {
        ContourRules::new(1.0, 256, 2.0, default_line_trunc(2.0), 400).expect("default contours are ordered")
    }
}

/// `K_n(x, y) = sum_{k<n} Phi_k(y)^T Phi_k(x)`.
pub fn cd_sum(f: &MopFamily, n: usize, x: f64, y: f64) -> Result<Mat, KernelError> {
    let dim = f.dim();
    if n == 0 {
        return Ok(Mat::zeros(dim, dim));
    }
    let px = f.phi_all(n, x)?;
    let py = f.phi_all(n, y)?;
    let mut acc = Mat::zeros(dim, dim);
    for (a, b) in px.iter().zip(&py) {
        acc += &(b.transpose() * a);
    }
    Ok(acc)
}

/// Double contour form
/// `2/(2 pi i)^2 e^{(x^2-y^2)/2} int_line dw oint dz left(z) right(w) e^{w^2-2xw-z^2+2zy} (w/z)^n / (w-z)`.
pub fn cd_double_integral(
    factors: &dyn KernelFactors,
    n: usize,
    x: f64,
    y: f64,
    rules: &ContourRules,
) -> Result<Mat, KernelError> {
    if n == 0 {
        return Err(KernelError::ZeroDegree);
    }
    check_contour_order(rules.radius, rules.line_re)?;
    let dim = factors.dim();
    let p = factors.inner_dim();
    let ni = n as i32;
    let zs = &rules.circle.nodes;
    // g_q = dz e^{-z^2+2zy} z^{-n} left(z), flattened row-major N x p
    let g: Vec<Vec<C64>> = zs
        .iter()
        .zip(&rules.circle.weights)
        .map(|(&z, &dz)| {
            let c = dz * (-z * z + 2.0 * y * z).exp() * ipow(z, -ni);
            factors.left(z).scale_c(c).entries_row_major()
        })
        .collect();
    let parts: Vec<Mat> = rules
        .line
        .nodes
        .par_iter()
        .zip(rules.line.weights.par_iter())
        .map(|(&w, &dw)| {
            let mut s = vec![C64::new(0.0, 0.0); dim * p];
            for (gq, &z) in g.iter().zip(zs) {
                let inv = (w - z).inv();
                for (acc, v) in s.iter_mut().zip(gq) {
                    *acc += v * inv;
                }
            }
            let sm = Mat::from_fn(dim, p, |i, j| s[i * p + j]);
            let c = dw * (w * w - 2.0 * x * w).exp() * ipow(w, ni);
            sm * factors.right(w).scale_c(c)
        })
        .collect();
    let total = pairwise_sum(&parts);
    let pref = C64::new(2.0, 0.0) / (C64::new(0.0, 2.0 * PI) * C64::new(0.0, 2.0 * PI)) * ((x * x - y * y) / 2.0).exp();
    Ok(total.scale_c(pref))
}

/// Max deviation of the contour form from the sum form over the given points,
/// relative to `1 + |K_sum|`.
pub fn representation_deviation(
    f: &MopFamily,
    factors: &dyn KernelFactors,
    n: usize,
    points: &[(f64, f64)],
    rules: &ContourRules,
) -> Result<f64, KernelError> {
    let mut worst: f64 = 0.0;
    for &(x, y) in points {
        let s = cd_sum(f, n, x, y)?;
        let d = cd_double_integral(factors, n, x, y, rules)?;
        worst = worst.max((&d - &s).max_norm() / (1.0 + s.max_norm()));
    }
    Ok(worst)
}

/// Loop representation `oint z^{-J} C_n z^{J} e^{-z^2+2zx} z^{-n-1} dz` of `P_n(x) T(x)`.
pub fn intrep_loop(w: &WeightFamily, n: usize, x: f64, circle: &QuadRule) -> Result<Mat, KernelError> {
    let k = family_constants(w, n)?;
    let neg = w.rep_exponents().scaled(-1);
    let ni = n as i32;
    let parts: Vec<Mat> = circle
        .nodes
        .iter()
        .zip(&circle.weights)
        .map(|(&z, &dz)| {
            let c = dz * (-z * z + 2.0 * x * z).exp() * ipow(z, -ni - 1);
            power_conjugate(&neg, &k.c, &neg, z).map(|m| m.scale_c(c))
        })
        .collect::<Result<_, _>>()?;
    Ok(pairwise_sum(&parts))
}

/// Line representation `e^{x^2} int w^{J} D_n w^{-J} e^{w^2-2xw} w^n dw` of `P_n(x) T(x)`.
pub fn intrep_line(w: &WeightFamily, n: usize, x: f64, line: &QuadRule) -> Result<Mat, KernelError> {
    let k = family_constants(w, n)?;
    let e = w.rep_exponents();
    let ni = n as i32;
    let parts: Vec<Mat> = line
        .nodes
        .iter()
        .zip(&line.weights)
        .map(|(&v, &dv)| {
            let c = dv * (v * v - 2.0 * x * v + x * x).exp() * ipow(v, ni);
            power_conjugate(&e, &k.d, &e, v).map(|m| m.scale_c(c))
        })
        .collect::<Result<_, _>>()?;
    Ok(pairwise_sum(&parts))
}

/// Direct evaluation `P_n(x) T(x)`.
pub fn intrep_direct(f: &MopFamily, n: usize, x: f64) -> Result<Mat, KernelError> {
    if n > f.nmax {
        return Err(MopError::IndexOutOfRange { n, max: f.nmax }.into());
    }
    Ok(f.normalized[n].eval(x) * f.weight.t_factor(x))
}

/// `int K_n(x,y) K_n(z,x) dx - K_n(z,y)` under the left-action convention.
pub fn reproducing_residual(f: &MopFamily, n: usize, y: f64, z: f64, quad: &QuadRule) -> Result<Mat, KernelError> {
    let py = f.phi_all(n, y)?;
    let pz = f.phi_all(n, z)?;
    let dim = f.dim();
    let integral = quad.integrate_decaying(|x| {
        let px = f.phi_all(n, x).expect("index checked above");
        let mut kxy = Mat::zeros(dim, dim);
        let mut kzx = Mat::zeros(dim, dim);
        for k in 0..n {
            kxy += &(py[k].transpose() * &px[k]);
            kzx += &(px[k].transpose() * &pz[k]);
        }
        kxy * kzx
    })?;
    Ok(integral - cd_sum(f, n, z, y)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{gauss_hermite, hermite_functions};

    #[test]
    fn empty_kernel_is_zero() {
        let f = MopFamily::build(&WeightFamily::example_a(1.0), 3).unwrap();
        assert_eq!(cd_sum(&f, 0, 0.1, 0.2).unwrap(), Mat::zeros(2, 2));
    }

    #[test]
    fn scalar_kernel_is_hermite_kernel() {
        let f = MopFamily::build(&WeightFamily::scalar(), 6).unwrap();
        let (x, y) = (0.3, -1.2);
        let px = hermite_functions(5, x);
        let py = hermite_functions(5, y);
        let want: f64 = (0..5).map(|k| px[k] * py[k]).sum();
        assert!((cd_sum(&f, 5, x, y).unwrap()[(0, 0)].re - want).abs() < 1e-14);
    }

    #[test]
    fn transpose_symmetry() {
        let f = MopFamily::build(&WeightFamily::example_a(1.0), 4).unwrap();
        let a = cd_sum(&f, 3, 0.2, -0.4).unwrap();
        let b = cd_sum(&f, 3, -0.4, 0.2).unwrap();
        assert!((a - b.transpose()).max_norm() < 1e-15);
    }

    #[test]
    fn family_factors_are_right_inverse_pairs() {
        let pts = [C64::new(0.3, 0.2), C64::new(-1.1, 0.5), C64::new(2.0, -3.0)];
        for w in [WeightFamily::example_a(1.0), WeightFamily::example_b(0.5)] {
            for n in 1..6 {
                let ff = FamilyFactors::new(&w, n).unwrap();
                validate_factors(&ff, &pts, 1e-10).unwrap();
            }
        }
    }

    #[test]
    fn double_integral_matches_sum_example_a() {
        let w = WeightFamily::example_a(1.0);
        let f = MopFamily::build(&w, 4).unwrap();
        let ff = FamilyFactors::new(&w, 3).unwrap();
        let rules = ContourRules::default();
        let pts = [(-1.5, 0.0), (0.0, 1.5), (0.75, -0.75)];
        assert!(representation_deviation(&f, &ff, 3, &pts, &rules).unwrap() < 1e-6);
    }

    #[test]
    fn double_integral_nu_zero_is_scalar_times_identity() {
        let w = WeightFamily::example_b(0.0);
        let ff = FamilyFactors::new(&w, 2).unwrap();
        let s = MopFamily::build(&WeightFamily::scalar(), 3).unwrap();
        let k = cd_double_integral(&ff, 2, 0.4, -0.3, &ContourRules::default()).unwrap();
        let want = Mat::identity(2).scale_c(cd_sum(&s, 2, 0.4, -0.3).unwrap()[(0, 0)]);
        assert!((k - want).max_norm() < 1e-10);
    }

    #[test]
    fn double_integral_rejects_zero_degree_and_bad_contours() {
        let ff = FamilyFactors::new(&WeightFamily::example_a(1.0), 0).unwrap();
        assert_eq!(
            cd_double_integral(&ff, 0, 0.0, 0.0, &ContourRules::default()),
            Err(KernelError::ZeroDegree)
        );
        assert!(ContourRules::new(3.0, 64, 2.0, 6.0, 100).is_err());
    }

    #[test]
    fn loop_representation_at_degree_zero() {
        let w = WeightFamily::example_a(1.0);
        let circle = circle_rule(1.0, 256).unwrap();
        let v = intrep_loop(&w, 0, 0.0, &circle).unwrap();
        assert!((v - Mat::identity(2)).max_norm() < 1e-10);
    }

    #[test]
    fn representations_match_direct() {
        let rules = ContourRules::default();
        for (w, n, x) in [(WeightFamily::example_a(1.0), 4, 0.8), (WeightFamily::example_b(0.7), 3, -0.5)] {
            let f = MopFamily::build(&w, 6).unwrap();
            let direct = intrep_direct(&f, n, x).unwrap();
            let l = intrep_loop(&w, n, x, &rules.circle).unwrap();
            let r = intrep_line(&w, n, x, &rules.line).unwrap();
            assert!((&l - &direct).max_norm() < 1e-8);
            assert!((&r - &direct).max_norm() < 1e-8);
        }
    }

    #[test]
    fn reproducing_rank_one_scalar() {
        let f = MopFamily::build(&WeightFamily::scalar(), 2).unwrap();
        let q = gauss_hermite(200);
        assert!(reproducing_residual(&f, 1, 0.2, -0.7, &q).unwrap().max_norm() < 1e-10);
    }

    #[test]
    fn reproducing_example_a() {
        let f = MopFamily::build(&WeightFamily::example_a(1.0), 5).unwrap();
        let q = gauss_hermite(200);
        assert!(reproducing_residual(&f, 4, 0.1, 0.9, &q).unwrap().max_norm() < 1e-8);
    }

    #[test]
    fn diagonal_is_positive_semidefinite() {
        let f = MopFamily::build(&WeightFamily::example_b(1.0), 6).unwrap();
        let k = cd_sum(&f, 7, 0.35, 0.35).unwrap();
        assert!(k.sym_eigenvalues().unwrap().iter().all(|&l| l >= -1e-14));
    }
}
