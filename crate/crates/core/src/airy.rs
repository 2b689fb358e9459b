//! Airy function, Airy kernel, and the edge scaling limit of the
//! Christoffel-Darboux kernels.

use rayon::prelude::*;
use thiserror::Error;

use crate::kernels::{cd_sum, KernelError};
use crate::matrix::Mat;
use crate::mop::{MopError, MopFamily};

pub const WINDOW: (f64, f64) = (-12.0, 20.0);
pub const SERIES_RADIUS: f64 = 6.0;
pub const MAX_DEGREE: usize = 64;
pub const ORTHO_TOL: f64 = 1e-8;
const DIAG_SWITCH: f64 = 1e-6;

/// `Ai(0) = 3^{-2/3} / Gamma(2/3)`.
pub const AI0: f64 = 0.355_028_053_887_817_24;
/// `-Ai'(0) = 3^{-1/3} / Gamma(1/3)`.
pub const AIP0_NEG: f64 = 0.258_819_403_792_806_8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AiryError {
    #[error("x={x} outside the supported window [-12, 20]")]
    OutOfWindow { x: f64 },
    #[error("degree {n} outside 1..={max}")]
    DegreeOutOfRange { n: usize, max: usize },
    #[error("orthonormality residual {residual:e} exceeds {ORTHO_TOL:e}; precision insufficient")]
    Precision { residual: f64 },
    #[error("empty grid")]
    EmptyGrid,
    #[error(transparent)]
    Mop(#[from] MopError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AiryValue {
    pub x: f64,
    pub ai: f64,
    pub aip: f64,
}

/// Maclaurin series `Ai = Ai(0) f - |Ai'(0)| g` with the two power series
/// solutions of `y'' = xy`.
pub fn airy_maclaurin(x: f64) -> AiryValue {
    let x3 = x * x * x;
    let (mut f, mut g) = (1.0, x);
    let (mut fp, mut gp) = (0.0, 1.0);
    let (mut tf, mut tg) = (1.0, x);
    let mut k = 1.0;
    loop {
        // derivative terms come from the previous series terms
        let tfp = tf * x * x / (3.0 * k - 1.0);
        let tgp = tg * x * x / (3.0 * k);
        tf *= x3 / ((3.0 * k - 1.0) * (3.0 * k));
        tg *= x3 / ((3.0 * k) * (3.0 * k + 1.0));
        f += tf;
        g += tg;
        fp += tfp;
        gp += tgp;
        let size = tf.abs() + tg.abs() + tfp.abs() + tgp.abs();
        if k > 4.0 && size <= 1e-18 * (f.abs() + g.abs() + fp.abs() + gp.abs() + 1.0) {
            break;
        }
        k += 1.0;
    }
    AiryValue { x, ai: AI0 * f - AIP0_NEG * g, aip: AI0 * fp - AIP0_NEG * gp }
}

/// Asymptotic expansions, truncated at the smallest term. Valid for `|x|` large.
pub fn airy_asymptotic(x: f64) -> AiryValue {
    let ax = x.abs();
    let zeta = 2.0 / 3.0 * ax.powf(1.5);
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let quarter = ax.powf(0.25);
    // u_k / zeta^k and v_k / zeta^k
    let mut terms_u = vec![1.0];
    let mut terms_v = vec![1.0];
    let mut prev = f64::INFINITY;
    for k in 1..80 {
        let kf = k as f64;
        let t = terms_u[k - 1] * (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / ((2.0 * kf - 1.0) * 216.0 * kf * zeta);
        if t.abs() >= prev || t.abs() < 1e-20 {
            break;
        }
        prev = t.abs();
        terms_v.push(-(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * t);
        terms_u.push(t);
    }
    if x > 0.0 {
        let sign = |k: usize| if k % 2 == 0 { 1.0 } else { -1.0 };
        let s: f64 = terms_u.iter().enumerate().map(|(k, t)| sign(k) * t).sum();
        let sp: f64 = terms_v.iter().enumerate().map(|(k, t)| sign(k) * t).sum();
        let e = (-zeta).exp() / (2.0 * sqrt_pi);
        AiryValue { x, ai: e / quarter * s, aip: -e * quarter * sp }
    } else {
        let (mut p, mut q, mut pp, mut qp) = (0.0, 0.0, 0.0, 0.0);
        for k in 0..terms_u.len() {
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            if k % 2 == 0 {
                p += sign * terms_u[k];
                pp += sign * terms_v[k];
            } else {
                q += sign * terms_u[k];
                qp += sign * terms_v[k];
            }
        }
        let th = zeta + std::f64::consts::FRAC_PI_4;
        let (sn, cs) = th.sin_cos();
        AiryValue { x, ai: (sn * p - cs * q) / (sqrt_pi * quarter), aip: -quarter / sqrt_pi * (cs * pp + sn * qp) }
    }
}

/// `Ai(x)` and `Ai'(x)` on `[-12, 20]` with absolute error below 1e-10.
pub fn airy_ai(x: f64) -> Result<AiryValue, AiryError> {
    if !(WINDOW.0..=WINDOW.1).contains(&x) {
        return Err(AiryError::OutOfWindow { x });
    }
    Ok(if x.abs() <= SERIES_RADIUS { airy_maclaurin(x) } else { airy_asymptotic(x) })
}

/// `K_Ai(x, y) = (Ai(x)Ai'(y) - Ai'(x)Ai(y)) / (x - y)`, with the diagonal
/// value `Ai'(x)^2 - x Ai(x)^2` when `|x - y| < 1e-6`.
pub fn airy_kernel(x: f64, y: f64) -> Result<f64, AiryError> {
    let a = airy_ai(x)?;
    let b = airy_ai(y)?;
    if (x - y).abs() < DIAG_SWITCH {
        let m = if x == y { a } else { airy_ai(0.5 * (x + y))? };
        return Ok(m.aip * m.aip - m.x * m.ai * m.ai);
    }
    Ok((a.ai * b.aip - a.aip * b.ai) / (x - y))
}

/// Deviation of the rescaled kernel from `K_Ai I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingReport {
    pub n: usize,
    pub sup_error: f64,
    pub offdiag_max: f64,
}

/// `count` equispaced points on `[-2, 2]`.
pub fn box_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|i| -2.0 + 4.0 * i as f64 / (count - 1) as f64).collect(),
    }
}

/// Compares `c^{-1} K_n(sqrt(2n) + x/c, sqrt(2n) + y/c)`, `c = sqrt(2) n^{1/6}`,
/// against `K_Ai(x, y) I` for all pairs of grid points.
pub fn scaling_limit_error(f: &MopFamily, n: usize, grid: &[f64]) -> Result<ScalingReport, AiryError> {
    let max = MAX_DEGREE.min(f.nmax + 1);
    if n == 0 || n > max {
        return Err(AiryError::DegreeOutOfRange { n, max });
    }
    if f.ortho_residual > ORTHO_TOL {
        return Err(AiryError::Precision { residual: f.ortho_residual });
    }
    if grid.is_empty() {
        return Err(AiryError::EmptyGrid);
    }
    let c = 2f64.sqrt() * (n as f64).powf(1.0 / 6.0);
    let centre = (2.0 * n as f64).sqrt();
    let pairs: Vec<(f64, f64)> = grid.iter().flat_map(|&x| grid.iter().map(move |&y| (x, y))).collect();
    let rows: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(x, y)| -> Result<(f64, f64), AiryError> {
            let k = cd_sum(f, n, centre + x / c, centre + y / c)?.scale(1.0 / c);
            let target = Mat::identity(k.rows()).scale(airy_kernel(x, y)?);
            let mut off: f64 = 0.0;
            for i in 0..k.rows() {
                for j in 0..k.cols() {
                    if i != j {
                        off = off.max(k[(i, j)].norm());
                    }
                }
            }
            Ok(((k - target).max_norm(), off))
        })
        .collect::<Result<_, _>>()?;
    let sup_error = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let offdiag_max = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(ScalingReport { n, sup_error, offdiag_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mop::WeightFamily;

    // 30-digit reference values
    const REF: [(f64, f64, f64); 9] = [
        (-12.0, -0.066555175054373129, 1.0231104533679707),
        (-7.0, 0.18428083525050564, -0.77100816841012655),
        (-3.5, -0.37553382314043191, -0.34344343345404815),
        (-1.0, 0.53556088329235212, -0.010160567116645209),
        (1.0, 0.13529241631288142, -0.15914744129679321),
        (2.0, 0.034924130423274379, -0.053090384433653632),
        (5.0, 0.00010834442813607442, -0.00024741389086846248),
        (10.0, 1.1047532552898686e-10, -3.5206336767389236e-10),
        (20.0, 1.6916728686705403e-27, -7.586391625748355e-27),
    ];

    /// Contour-rotated integral `Ai(x) = Im int_0^inf e^{-r^3/3 - x r w} w dr / pi`,
    /// `w = e^{i pi/3}`, by panelled Gauss-Legendre.
    fn quadrature_oracle(x: f64) -> (f64, f64) {
        use crate::matrix::C64;
        let (nodes, weights) = crate::quadrature::gauss_legendre(40);
        let w = C64::from_polar(1.0, std::f64::consts::FRAC_PI_3);
        let (mut ai, mut aip) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for panel in 0..24 {
            let (a, b) = (0.5 * panel as f64, 0.5 * (panel + 1) as f64);
            for (t, wt) in nodes.iter().zip(&weights) {
                let r = 0.5 * (a + b) + 0.5 * (b - a) * t;
                let e = (C64::new(-r * r * r / 3.0, 0.0) - w * (x * r)).exp() * w * (0.5 * (b - a) * wt);
                ai += e;
                aip -= e * w * r;
            }
        }
        (ai.im / std::f64::consts::PI, aip.im / std::f64::consts::PI)
    }

    #[test]
    fn quadrature_oracle_agrees() {
        let (ai, aip) = quadrature_oracle(0.0);
        assert!((ai - AI0).abs() < 1e-14 && (aip + AIP0_NEG).abs() < 1e-14);
        for i in 0..=32 {
            let x = -12.0 + 1.0 * i as f64;
            let (ai, aip) = quadrature_oracle(x);
            let v = airy_ai(x).unwrap();
            assert!((v.ai - ai).abs() <= 1e-10 && (v.aip - aip).abs() <= 1e-10, "x={x}");
        }
    }

    #[test]
    fn origin_values() {
        let v = airy_ai(0.0).unwrap();
        assert!((v.ai - 0.355_028_053_9).abs() < 1e-10);
        assert!((v.aip + 0.258_819_403_8).abs() < 1e-10);
    }

    #[test]
    fn reference_values() {
        for (x, ai, aip) in REF {
            let v = airy_ai(x).unwrap();
            assert!((v.ai - ai).abs() <= 1e-10, "x={x} {} vs {ai}", v.ai);
            assert!((v.aip - aip).abs() <= 1e-10, "x={x} {} vs {aip}", v.aip);
        }
    }

    #[test]
    fn satisfies_airy_equation() {
        let h = 1e-3;
        for i in 0..=62 {
            let x = -11.2 + 0.5 * i as f64;
            let d2 = (airy_ai(x + h).unwrap().ai - 2.0 * airy_ai(x).unwrap().ai + airy_ai(x - h).unwrap().ai) / (h * h);
            assert!((d2 - x * airy_ai(x).unwrap().ai).abs() < 1e-5, "x={x}");
        }
    }

    #[test]
    fn series_and_asymptotics_overlap() {
        for i in 0..=40 {
            let x = 5.0 + 0.05 * i as f64;
            let a = airy_maclaurin(x);
            let b = airy_asymptotic(x);
            assert!((a.ai - b.ai).abs() <= 1e-10 && (a.aip - b.aip).abs() <= 1e-10, "x={x}");
        }
    }

    #[test]
    fn positive_and_decreasing() {
        let vals: Vec<f64> = (0..=80).map(|i| airy_ai(0.1 * i as f64).unwrap().ai).collect();
        assert!(vals.iter().all(|&v| v > 0.0));
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn window_enforced() {
        assert!(matches!(airy_ai(-12.5), Err(AiryError::OutOfWindow { .. })));
        assert!(matches!(airy_ai(20.5), Err(AiryError::OutOfWindow { .. })));
    }

    #[test]
    fn kernel_diagonal_and_symmetry() {
        let k00 = airy_kernel(0.0, 0.0).unwrap();
        assert!((k00 - AIP0_NEG * AIP0_NEG).abs() < 1e-15);
        for x in [-1.5, 0.0, 0.7, 1.9] {
            let kd = airy_kernel(x, x).unwrap();
            assert!((airy_kernel(x, x + 1e-7).unwrap() - kd).abs() <= 1e-6);
            assert!((airy_kernel(x, x + 2e-6).unwrap() - kd).abs() <= 1e-5);
            for y in [-1.1, 0.3, 1.4] {
                assert!((airy_kernel(x, y).unwrap() - airy_kernel(y, x).unwrap()).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn scalar_limit_improves() {
        let f = MopFamily::build(&WeightFamily::scalar(), 32).unwrap();
        let grid = box_grid(5);
        let a = scaling_limit_error(&f, 8, &grid).unwrap();
        let b = scaling_limit_error(&f, 32, &grid).unwrap();
        assert!(b.sup_error < a.sup_error);
        assert_eq!(a.offdiag_max, 0.0);
    }

    #[test]
    fn degree_budget() {
        let f = MopFamily::build(&WeightFamily::scalar(), 8).unwrap();
        assert!(matches!(scaling_limit_error(&f, 10, &box_grid(3)), Err(AiryError::DegreeOutOfRange { .. })));
        assert!(matches!(scaling_limit_error(&f, 4, &[]), Err(AiryError::EmptyGrid)));
    }
}
