//! Fredholm determinants of the truncated kernels: the finite-rank Gram
//! route, the contour Nystrom route, log-derivatives and the scalar
//! sigma-form residual.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::kernels::{ContourRules, FamilyFactors, KernelError, KernelFactors};
use crate::matrix::{ipow, Mat, MatrixError, C64};
use crate::mop::{MopError, MopFamily, WeightFamily};
use crate::quadrature::{check_contour_order, gauss_hermite, gaussian_panels, tail_integral, QuadError, QuadRule, TailOptions};

/// Largest Nystrom matrix accepted.
pub const NYSTROM_BUDGET: usize = 3000;
/// Step of the central difference used for the second log-derivative.
pub const RPP_STEP: f64 = 1e-4;
const DET_FLOOR: f64 = 1e-300;
/// Panel width and Gauss-Legendre nodes per panel for the truncated measure.
const TRUNC_PANEL_WIDTH: f64 = 0.5;
const TRUNC_PANEL_NODES: usize = 20;
/// Gaussian margin beyond the oscillatory region `|x| < sqrt(2n + 1)`.
const TRUNC_MARGIN: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FredholmError {
    #[error("determinant vanishes at s = {s} (value {value:e})")]
    DeterminantVanishes { s: f64, value: f64 },
    #[error("budget exceeded: Nystrom matrix of size {size}")]
    BudgetExceeded { size: usize },
    #[error("the sigma form is only available for the scalar family")]
    NotScalar,
    #[error("n = {n} exceeds the family's degree budget {max}")]
    DegreeTooLarge { n: usize, max: usize },
    #[error(transparent)]
    Mop(#[from] MopError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// `theta_n(lambda, s) = lambda^2 - 2 lambda s + n log(lambda)`, exponentiated
/// with an integer power so no branch is consulted.
#[derive(Debug, Clone, Copy)]
pub struct ThetaPhase {
    pub lambda: C64,
    pub s: f64,
    pub n: i32,
}

impl ThetaPhase {
    pub fn exp(&self) -> C64 {
        (self.lambda * self.lambda - 2.0 * self.s * self.lambda).exp() * ipow(self.lambda, self.n)
    }
}

/// Tail Gram matrix `G_{jk} = int_s^inf Phi_j Phi_k^T`, the boundary blocks
/// `B_{jk} = Phi_j(s) Phi_k(s)^T` (so that `dG/ds = -B`) and `dB/ds`.
#[derive(Debug, Clone)]
pub struct GramSystem {
    pub s: f64,
    pub n: usize,
    pub g: Mat,
    pub b: Mat,
    pub b_prime: Mat,
}

/// Reference objects shared by determinant evaluations of one family.
#[derive(Debug, Clone)]
pub struct FredholmContext {
    pub family: MopFamily,
    pub full_line: QuadRule,
    pub tail: TailOptions,
}

impl FredholmContext {
    pub fn new(weight: &WeightFamily, nmax: usize) -> Result<Self, FredholmError> {
        let family = MopFamily::build(weight, nmax)?;
        let full_line = gauss_hermite(crate::mop::reference_nodes(nmax));
        Ok(FredholmContext { family, full_line, tail: TailOptions::default() })
    }

    /// As [`FredholmContext::new`] with an explicit Gauss-Hermite node count
    /// for both the family construction and the tail integrals.
    pub fn with_nodes(weight: &WeightFamily, nmax: usize, nodes: usize) -> Result<Self, FredholmError> {
        let full_line = gauss_hermite(nodes);
        let family = crate::mop::build_family(weight, nmax, &full_line)?;
        Ok(FredholmContext { family, full_line, tail: TailOptions::default() })
    }

    fn check_n(&self, n: usize) -> Result<(), FredholmError> {
        if n > self.family.nmax + 1 {
            return Err(FredholmError::DegreeTooLarge { n, max: self.family.nmax + 1 });
        }
        Ok(())
    }

    /// Stack `Phi_0..Phi_{n-1}` vertically into an `nN x N` matrix.
    fn stacked(&self, n: usize, x: f64) -> (Mat, Mat) {
        let (p, d) = self.family.phi_with_deriv(n, x).expect("degree checked");
        let dim = self.family.dim();
        let mut m = Mat::zeros(n * dim, dim);
        let mut md = Mat::zeros(n * dim, dim);
        for k in 0..n {
            m.set_block(k * dim, 0, &p[k]);
            md.set_block(k * dim, 0, &d[k]);
        }
        (m, md)
    }

    pub fn gram_system(&self, n: usize, s: f64) -> Result<GramSystem, FredholmError> {
        self.check_n(n)?;
        let dim = self.family.dim();
        if n == 0 {
            let z = Mat::zeros(1, 1);
            return Ok(GramSystem { s, n, g: z.clone(), b: z.clone(), b_prime: z });
        }
        let mut opts = self.tail;
        opts.min_extent = opts.min_extent.max((2.0 * n as f64 + 1.0).sqrt() + 6.0);
        let g = tail_integral(
            |x| {
                let (m, _) = self.stacked(n, x);
                &m * m.transpose()
            },
            s,
            &self.full_line,
            &opts,
        )?;
        let (m, md) = self.stacked(n, s);
        let b = &m * m.transpose();
        let b_prime = &md * m.transpose() + &m * md.transpose();
        debug_assert_eq!(g.rows(), n * dim);
        Ok(GramSystem { s, n, g, b, b_prime })
    }

    /// `det(I - G(s))`.
    pub fn gram_det(&self, n: usize, s: f64) -> Result<f64, FredholmError> {
        let gs = self.gram_system(n, s)?;
        gram_det_of(&gs)
    }

    /// `log F`, `R = d/ds log F` and `R'`, all analytic.
    ///
    /// `I - G(s)` is the Gram matrix of `Phi_0..Phi_{n-1}` on `(-inf, s]`, so
    /// the functions are re-orthonormalized against that truncated measure
    /// instead of inverting `I - G`, which stays accurate when `F` is tiny.
    pub fn log_derivs(&self, n: usize, s: f64) -> Result<LogDerivs, FredholmError> {
        self.check_n(n)?;
        if n == 0 {
            return Ok(LogDerivs { det: 1.0, log_det: 0.0, r: 0.0, rp: 0.0 });
        }
        let reach = (2.0 * n as f64 + 1.0).sqrt() + TRUNC_MARGIN;
        let lo = (s - TRUNC_MARGIN).min(-reach);
        let hi = s.min(reach);
        let panels = ((hi - lo) / TRUNC_PANEL_WIDTH).ceil().max(1.0) as usize;
        let rule = gaussian_panels(lo, hi, panels, TRUNC_PANEL_NODES)?;
        let weight = self.family.weight;
        let cut = crate::mop::build_family(&weight, n - 1, &rule)?;
        let mut log_det = 0.0;
        for k in 0..n {
            let part = cut.monic_norms[k].det()?.re;
            let full = self.family.monic_norms[k].det()?.re;
            if !(part > 0.0) {
                return Err(FredholmError::DeterminantVanishes { s, value: part });
            }
            log_det += (part / full).ln();
        }
        let (p, d) = cut.phi_with_deriv(n, s)?;
        let dim = weight.dim;
        let mut m = Mat::zeros(n * dim, dim);
        let mut md = Mat::zeros(n * dim, dim);
        for k in 0..n {
            m.set_block(k * dim, 0, &p[k]);
            md.set_block(k * dim, 0, &d[k]);
        }
        // with an orthonormal basis, R = Tr(M M^T) and R' = -Tr((M M^T)^2) + Tr(d/ds M M^T)
        let mtm = &m.transpose() * &m;
        let r = mtm.trace().re;
        let rp = -(&mtm * &mtm).trace().re + 2.0 * (&md.transpose() * &m).trace().re;
        Ok(LogDerivs { det: log_det.exp(), log_det, r, rp })
    }

    /// Order 0: `log F`; 1: `R`; 2: `R'`.
    pub fn log_deriv(&self, n: usize, s: f64, order: u8) -> Result<f64, FredholmError> {
        let l = self.log_derivs(n, s)?;
        Ok(match order {
            0 => l.log_det,
            1 => l.r,
            _ => l.rp,
        })
    }

    /// `R, R', R''` with `R''` from one central difference of the analytic `R'`.
    pub fn sigma_data(&self, n: usize, s: f64) -> Result<SigmaData, FredholmError> {
        let c = self.log_derivs(n, s)?;
        let plus = self.log_derivs(n, s + RPP_STEP)?;
        let minus = self.log_derivs(n, s - RPP_STEP)?;
        let rpp = (plus.rp - minus.rp) / (2.0 * RPP_STEP);
        Ok(SigmaData { s, n, det: c.det, r: c.r, rp: c.rp, rpp })
    }

    /// `(R'')^2 + 4 (R')^2 (R' + 2n) - 4 (s R' - R)^2` for the scalar family.
    pub fn sigma_piv_residual(&self, n: usize, s: f64) -> Result<f64, FredholmError> {
        if self.family.weight.is_matrix() {
            return Err(FredholmError::NotScalar);
        }
        Ok(self.sigma_data(n, s)?.residual())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LogDerivs {
    pub det: f64,
    pub log_det: f64,
    pub r: f64,
    pub rp: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SigmaData {
    pub s: f64,
    pub n: usize,
    pub det: f64,
    pub r: f64,
    pub rp: f64,
    pub rpp: f64,
}

impl SigmaData {
    pub fn residual(&self) -> f64 {
        sigma_form(self.n, self.s, self.r, self.rp, self.rpp)
    }

    /// Acceptance scale `1 + |R''|^2`.
    pub fn scale(&self) -> f64 {
        1.0 + self.rpp * self.rpp
    }
}

/// Left-hand side of the sigma form.
pub fn sigma_form(n: usize, s: f64, r: f64, rp: f64, rpp: f64) -> f64 {
    let nf = n as f64;
    let t = s * rp - r;
    rpp * rpp + 4.0 * rp * rp * (rp + 2.0 * nf) - 4.0 * t * t
}

fn identity_minus(g: &Mat) -> Mat {
    Mat::identity(g.rows()) - g
}

pub fn gram_det_of(gs: &GramSystem) -> Result<f64, FredholmError> {
    if gs.n == 0 {
        return Ok(1.0);
    }
    Ok(identity_minus(&gs.g).det()?.re)
}

pub fn log_derivs_of(gs: &GramSystem) -> Result<LogDerivs, FredholmError> {
    if gs.n == 0 {
        return Ok(LogDerivs { det: 1.0, log_det: 0.0, r: 0.0, rp: 0.0 });
    }
    let a = identity_minus(&gs.g);
    let det = a.det()?.re;
    if !(det > DET_FLOOR) {
        return Err(FredholmError::DeterminantVanishes { s: gs.s, value: det });
    }
    let mb = a.solve(&gs.b)?;
    let mbp = a.solve(&gs.b_prime)?;
    let r = mb.trace().re;
    let rp = (-(&mb * &mb).trace() + mbp.trace()).re;
    Ok(LogDerivs { det, log_det: det.ln(), r, rp })
}

/// Result of the contour Nystrom route.
#[derive(Debug, Clone, Copy)]
pub struct ContourDet {
    pub value: f64,
    /// Discarded imaginary part.
    pub imag: f64,
    pub size: usize,
}

/// Complex product through three real products (Gauss), using the blocked
/// real kernel of the backing library.
fn complex_gemm(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let ar = a.map(|v| v.re);
    let ai = a.map(|v| v.im);
    let br = b.map(|v| v.re);
    let bi = b.map(|v| v.im);
    let t1 = &ar * &br;
    let t2 = &ai * &bi;
    let t3 = (&ar + &ai) * (&br + &bi);
    DMatrix::from_fn(a.nrows(), b.ncols(), |i, j| C64::new(t1[(i, j)] - t2[(i, j)], t3[(i, j)] - t1[(i, j)] - t2[(i, j)]))
}

/// `det(Id - F_s o G)` on the line rule, with the composed kernel
/// `K(l, w) = oint dz/(2 pi i)^2 e^{w^2 - z^2 + 2s(z - l)} (w/z)^n left(z) right(w) / ((l - z)(w - z))`
/// discretized as blocks `K(l_i, w_j) * weight_j`.
pub fn contour_det(weight: &WeightFamily, n: usize, s: f64, rules: &ContourRules) -> Result<ContourDet, FredholmError> {
    if n == 0 {
        return Err(KernelError::ZeroDegree.into());
    }
    check_contour_order(rules.radius, rules.line_re)?;
    let factors = FamilyFactors::new(weight, n)?;
    contour_det_with(&factors, n, s, rules)
}

/// Contour route with arbitrary kernel factors.
pub fn contour_det_with(factors: &dyn KernelFactors, n: usize, s: f64, rules: &ContourRules) -> Result<ContourDet, FredholmError> {
    let dim = factors.dim();
    let p = factors.inner_dim();
    let ml = rules.line.len();
    let mc = rules.circle.len();
    let size = ml * dim;
    if size > NYSTROM_BUDGET {
        return Err(FredholmError::BudgetExceeded { size });
    }
    let ni = n as i32;
    let two_pi_i_sq = C64::new(0.0, 2.0 * PI) * C64::new(0.0, 2.0 * PI);
    let lambdas = &rules.line.nodes;
    let zs = &rules.circle.nodes;
    let lefts: Vec<Mat> = zs.iter().map(|&z| factors.left(z)).collect();
    let rights: Vec<Mat> = lambdas.iter().map(|&w| factors.right(w)).collect();
    let zpref: Vec<C64> = zs
        .iter()
        .zip(&rules.circle.weights)
        .map(|(&z, &dz)| dz / two_pi_i_sq * (-z * z + 2.0 * s * z).exp() * ipow(z, -ni))
        .collect();
    let wpref: Vec<C64> = lambdas
        .iter()
        .zip(&rules.line.weights)
        .map(|(&w, &dw)| (w * w).exp() * ipow(w, ni) * dw)
        .collect();
    let lpref: Vec<C64> = lambdas.iter().map(|&l| (-2.0 * s * l).exp()).collect();

    let mut u = DMatrix::<C64>::zeros(size, mc * p);
    for i in 0..ml {
        for q in 0..mc {
            let c = zpref[q] * lpref[i] / (lambdas[i] - zs[q]);
            for a in 0..dim {
                for b in 0..p {
                    u[(i * dim + a, q * p + b)] = c * lefts[q][(a, b)];
                }
            }
        }
    }
    let mut v = DMatrix::<C64>::zeros(mc * p, size);
    for q in 0..mc {
        for j in 0..ml {
            let c = wpref[j] / (lambdas[j] - zs[q]);
            for b in 0..p {
                for e in 0..dim {
                    v[(q * p + b, j * dim + e)] = c * rights[j][(b, e)];
                }
            }
        }
    }
    // det(I - UV) = det(I - VU); factor the smaller one
    let k = if mc * p < size { complex_gemm(&v, &u) } else { complex_gemm(&u, &v) };
    let m = DMatrix::<C64>::identity(k.nrows(), k.ncols()) - k;
    let det = m.lu().determinant();
    Ok(ContourDet { value: det.re, imag: det.im, size })
}

/// Scalar closed form `F(s) = (1 + erf(s))/2` for `n = 1`, via the
/// complementary error function so that the oracle is independent of the
/// quadrature machinery.
pub fn scalar_n1_closed_form(s: f64) -> f64 {
    0.5 * erfc(-s)
}

/// Complementary error function (continued fraction for large |x|, series otherwise).
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.5 {
        let mut term = x;
        let mut sum = x;
        let mut k = 0usize;
        while term.abs() > 1e-17 * sum.abs() {
            k += 1;
            term *= -x * x / k as f64;
            sum += term / (2 * k + 1) as f64;
            if k > 200 {
                break;
            }
        }
        return 1.0 - 2.0 / PI.sqrt() * sum;
    }
    // Lentz evaluation of erfc(x) = e^{-x^2}/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..300 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = x + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / PI.sqrt() / f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfc_reference_values() {
        assert!((erfc(0.0) - 1.0).abs() < 1e-16);
        assert!((erfc(1.0) - 0.157_299_207_050_285_13).abs() < 1e-15);
        assert!((erfc(3.0) - 2.209_049_699_858_544e-5).abs() < 1e-19);
        assert!((erfc(-0.5) - 1.520_499_877_813_046_5).abs() < 1e-15);
    }

    #[test]
    fn scalar_n1_at_zero_is_half() {
        let ctx = FredholmContext::new(&WeightFamily::scalar(), 4).unwrap();
        assert!((ctx.gram_det(1, 0.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scalar_n1_matches_erf() {
        let ctx = FredholmContext::new(&WeightFamily::scalar(), 4).unwrap();
        for s in [-2.0, -0.7, 0.3, 1.9] {
            let l = ctx.log_derivs(1, s).unwrap();
            let f = scalar_n1_closed_form(s);
            assert!((l.det - f).abs() < 1e-12);
            let r = (-s * s).exp() / PI.sqrt() / f;
            assert!((l.r - r).abs() < 1e-10);
        }
    }

    #[test]
    fn determinant_tends_to_one() {
        let ctx = FredholmContext::new(&WeightFamily::example_a(1.0), 4).unwrap();
        assert!((ctx.gram_det(3, 8.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_blocks_are_minus_derivative_of_gram() {
        let ctx = FredholmContext::new(&WeightFamily::example_b(1.0), 4).unwrap();
        let h = 1e-4;
        for s in [-0.8, 0.4] {
            let c = ctx.gram_system(3, s).unwrap();
            let p = ctx.gram_system(3, s + h).unwrap();
            let m = ctx.gram_system(3, s - h).unwrap();
            let fd = (&p.g - &m.g).scale(-0.5 / h);
            assert!((&fd - &c.b).max_norm() < 1e-6);
            let fdb = (&p.b - &m.b).scale(0.5 / h);
            assert!((&fdb - &c.b_prime).max_norm() < 1e-6);
        }
    }

    #[test]
    fn sigma_form_small_scalar() {
        let ctx = FredholmContext::new(&WeightFamily::scalar(), 6).unwrap();
        for (n, s) in [(1, 0.0), (4, 1.5)] {
            let d = ctx.sigma_data(n, s).unwrap();
            assert!(d.residual().abs() <= 1e-6 * d.scale(), "n={n} s={s} res={}", d.residual());
        }
    }

    #[test]
    fn sigma_requires_scalar() {
        let ctx = FredholmContext::new(&WeightFamily::example_a(1.0), 3).unwrap();
        assert_eq!(ctx.sigma_piv_residual(2, 0.0), Err(FredholmError::NotScalar));
    }

    #[test]
    fn contour_matches_gram_small() {
        let w = WeightFamily::example_a(1.0);
        let ctx = FredholmContext::new(&w, 4).unwrap();
        let rules = ContourRules::new(1.0, 64, 2.0, crate::quadrature::default_line_trunc(2.0), 160).unwrap();
        let c = contour_det(&w, 2, 0.0, &rules).unwrap();
        let g = ctx.gram_det(2, 0.0).unwrap();
        assert!((c.value - g).abs() < 1e-5, "{} vs {}", c.value, g);
        assert!(c.imag.abs() < 1e-9);
    }

    #[test]
    fn contour_budget() {
        let rules = ContourRules::new(1.0, 8, 2.0, 6.0, 1600).unwrap();
        let r = contour_det(&WeightFamily::example_a(1.0), 1, 0.0, &rules);
        assert_eq!(r.unwrap_err(), FredholmError::BudgetExceeded { size: 3200 });
    }

    #[test]
    fn theta_phase_integer_power() {
        let t = ThetaPhase { lambda: C64::new(0.5, 0.5), s: 0.3, n: 3 };
        let l = t.lambda;
        let want = (l * l - 0.6 * l + 3.0 * l.ln()).exp();
        assert!((t.exp() - want).norm() < 1e-14);
    }
}
