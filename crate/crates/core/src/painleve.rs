//! Coupled matrix ODE systems behind the non-commutative Painleve IV
//! equation: integration, ncPIV residuals, Lax compatibility, the symmetric
//! formulation, and the scalar PIV reductions.
//!
//! Higher derivatives are obtained from Taylor jets of the flow, i.e. by
//! analytic recursion of the right-hand side rather than finite differences.

use thiserror::Error;

use crate::jet::{jet_commutator, MatJet};
use crate::matrix::{anticommutator, commutator, condition_estimate, right_inverse, IntDiag, Mat, MatrixError, C64};

const Y_MAX_COND: f64 = 1e10;
const BLOWUP_NORM: f64 = 1e8;
const MAX_STEPS: f64 = 1e6;
const JET_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PainleveError {
    #[error("y singular (condition number {cond:e})")]
    YSingular { cond: f64 },
    #[error("pole of the Lax matrix at lambda = 0")]
    PoleOfA,
    #[error("singularity encountered at s={s}")]
    Singular { s: f64 },
    #[error("PIV singular term: u = 0")]
    PivSingularTerm,
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid step: {0}")]
    InvalidStep(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Square (`A`) or rectangular 2x3 (`B`) version of the coupled system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    A,
    B,
}

impl Variant {
    /// Column count of `y`.
    pub fn inner_dim(self) -> usize {
        match self {
            Variant::A => 2,
            Variant::B => 3,
        }
    }

    /// `J_2 = diag(1, 0)`.
    pub fn j2() -> Mat {
        IntDiag::descending(2).to_mat()
    }

    /// Exponents acting on the 2-dimensional side: `J_2` or `2 J_2`.
    pub fn j_left(self) -> Mat {
        match self {
            Variant::A => Self::j2(),
            Variant::B => Self::j2().scale(2.0),
        }
    }

    /// Exponents acting on the inner side: `J_2` or `J_3`.
    pub fn j_right(self) -> Mat {
        IntDiag::descending(self.inner_dim()).to_mat()
    }
}

/// How the second-order `z` equation is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Closure {
    /// `z'' = 2u'z + 2uz' - 2sz'`.
    Printed,
    /// Adds `c [z, J_2]` (c = 2 for A, 4 for B), the term required by the
    /// compatibility of the Lax pair.
    LaxCompatible,
}

impl Closure {
    fn commutator_coeff(self, v: Variant) -> f64 {
        match (self, v) {
            (Closure::Printed, _) => 0.0,
            (Closure::LaxCompatible, Variant::A) => 2.0,
            (Closure::LaxCompatible, Variant::B) => 4.0,
        }
    }
}

/// Sign convention of the `V` terms in the ncPIV equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NcpivReading {
    /// `... + (V' - 2uV)' + 2sV' = 0`.
    Printed,
    /// `... - (V' - 2uV)' - 2sV' = 0`, the form implied by the coupled system.
    SignConsistent,
}

/// `(s, y, z, z', u)` of the coupled system.
#[derive(Debug, Clone, PartialEq)]
pub struct PivState {
    pub s: f64,
    pub y: Mat,
    pub z: Mat,
    pub zp: Mat,
    pub u: Mat,
    pub variant: Variant,
    pub n: i32,
}

impl PivState {
    pub fn new(s: f64, y: Mat, z: Mat, zp: Mat, u: Mat, variant: Variant, n: i32) -> Result<Self, PainleveError> {
        let p = variant.inner_dim();
        if y.shape() != (2, p) {
            return Err(PainleveError::InvalidShape(format!("y must be 2x{p}, got {:?}", y.shape())));
        }
        for (name, m) in [("z", &z), ("zp", &zp), ("u", &u)] {
            if m.shape() != (2, 2) {
                return Err(PainleveError::InvalidShape(format!("{name} must be 2x2, got {:?}", m.shape())));
            }
        }
        let st = PivState { s, y, z, zp, u, variant, n };
        st.check_y()?;
        Ok(st)
    }

    /// Stationary data at `s = 0`, `n = 0`: `z = z' = u = 0` with `y = I` (A)
    /// or `y` selecting the first and last inner coordinates (B), where `V_B = 0`.
    pub fn fixed_point(variant: Variant) -> Self {
        let p = variant.inner_dim();
        let y = Mat::from_fn(2, p, |i, j| if j == i * (p - 1) { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        let z = Mat::zeros(2, 2);
        PivState { s: 0.0, y, z: z.clone(), zp: z.clone(), u: z, variant, n: 0 }
    }

    fn check_y(&self) -> Result<(), PainleveError> {
        let gram = match self.variant {
            Variant::A => self.y.clone(),
            Variant::B => &self.y * self.y.transpose(),
        };
        let cond = condition_estimate(&gram)?;
        if !cond.is_finite() || cond > Y_MAX_COND {
            return Err(PainleveError::YSingular { cond });
        }
        Ok(())
    }

    /// `y^{-1}` (A) or `y^T (y y^T)^{-1}` (B).
    pub fn y_inv(&self) -> Result<Mat, PainleveError> {
        self.check_y()?;
        Ok(match self.variant {
            Variant::A => self.y.inverse()?,
            Variant::B => right_inverse(&self.y)?,
        })
    }

    fn to_vec(&self) -> Vec<Mat> {
        vec![self.y.clone(), self.z.clone(), self.zp.clone(), self.u.clone()]
    }

    fn with_vec(&self, s: f64, v: Vec<Mat>) -> PivState {
        let mut it = v.into_iter();
        PivState {
            s,
            y: it.next().unwrap(),
            z: it.next().unwrap(),
            zp: it.next().unwrap(),
            u: it.next().unwrap(),
            variant: self.variant,
            n: self.n,
        }
    }

    pub fn max_norm(&self) -> f64 {
        [&self.y, &self.z, &self.zp, &self.u].iter().map(|m| m.max_norm()).fold(0.0, f64::max)
    }
}

/// `V_A = 2[J_2, y] y^{-1}` or `V_B = 4 J_2 - 2 y J_3 y^T (y y^T)^{-1}`.
pub fn v_term(variant: Variant, y: &Mat) -> Result<Mat, PainleveError> {
    let j2 = Variant::j2();
    match variant {
        Variant::A => {
            let cond = condition_estimate(y)?;
            if !cond.is_finite() || cond > Y_MAX_COND {
                return Err(PainleveError::YSingular { cond });
            }
            Ok(commutator(&j2, y)?.scale(2.0) * y.inverse()?)
        }
        Variant::B => {
            let yd = right_inverse(y).map_err(|e| match e {
                MatrixError::RankDeficient { cond } => PainleveError::YSingular { cond },
                other => other.into(),
            })?;
            Ok(j2.scale(4.0) - (y * Variant::B.j_right() * yd).scale(2.0))
        }
    }
}

fn v_term_jet(variant: Variant, y: &MatJet) -> Result<MatJet, PainleveError> {
    let j2 = Variant::j2();
    match variant {
        Variant::A => {
            let jj = MatJet::constant(j2, y.order());
            Ok(jet_commutator(&jj, y).scale(2.0) * y.inverse()?)
        }
        Variant::B => {
            let yd = y.right_inverse()?;
            let t = y.right_const(&Variant::B.j_right()) * yd;
            Ok((-&t.scale(2.0)).add_const(&j2.scale(4.0)))
        }
    }
}

/// Time derivative of `(y, z, z', u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PivDerivative {
    pub y: Mat,
    pub z: Mat,
    pub zp: Mat,
    pub u: Mat,
}

/// `y' = (u - 2s)y`, `u' = -u^2 + 2su + 4z - 2n + V`, `z'' = 2u'z + 2uz' - 2sz' (+ c[z, J_2])`.
pub fn rhs(st: &PivState, closure: Closure) -> Result<PivDerivative, PainleveError> {
    let id = Mat::identity(2);
    let s = st.s;
    let v = v_term(st.variant, &st.y)?;
    let yp = (&st.u - id.scale(2.0 * s)) * &st.y;
    let up = -(&st.u * &st.u) + st.u.scale(2.0 * s) + st.z.scale(4.0) - id.scale(2.0 * st.n as f64) + v;
    let mut zpp = (&up * &st.z).scale(2.0) + (&st.u * &st.zp).scale(2.0) - st.zp.scale(2.0 * s);
    let cj = closure.commutator_coeff(st.variant);
    if cj != 0.0 {
        zpp += &commutator(&st.z, &Variant::j2())?.scale(cj);
    }
    Ok(PivDerivative { y: yp, z: st.zp.clone(), zp: zpp, u: up })
}

/// Taylor jets of the flow through a state.
#[derive(Debug, Clone)]
pub struct PivJets {
    pub y: MatJet,
    pub z: MatJet,
    pub zp: MatJet,
    pub u: MatJet,
    pub v: MatJet,
}

pub fn piv_jets(st: &PivState, closure: Closure, order: usize) -> Result<PivJets, PainleveError> {
    let mut y = MatJet::constant(st.y.clone(), order);
    let mut z = MatJet::constant(st.z.clone(), order);
    let mut zp = MatJet::constant(st.zp.clone(), order);
    let mut u = MatJet::constant(st.u.clone(), order);
    let id = Mat::identity(2);
    let j2 = MatJet::constant(Variant::j2(), order);
    let cj = closure.commutator_coeff(st.variant);
    let s0 = st.s;
    for k in 0..order {
        let v = v_term_jet(st.variant, &y)?;
        let up = (-(&u * &u) + u.times_s(s0).scale(2.0) + z.scale(4.0) + v).add_const(&id.scale(-2.0 * st.n as f64));
        let two_s = MatJet::constant(id.clone(), order).times_s(s0).scale(2.0);
        let yp = (&u - &two_s) * &y;
        let mut zpp = (&up * &z).scale(2.0) + (&u * &zp).scale(2.0) - zp.times_s(s0).scale(2.0);
        if cj != 0.0 {
            zpp = zpp + jet_commutator(&z, &j2).scale(cj);
        }
        let kf = (k + 1) as f64;
        y.c[k + 1] = yp.c[k].scale(1.0 / kf);
        z.c[k + 1] = zp.c[k].scale(1.0 / kf);
        zp.c[k + 1] = zpp.c[k].scale(1.0 / kf);
        u.c[k + 1] = up.c[k].scale(1.0 / kf);
    }
    let v = v_term_jet(st.variant, &y)?;
    Ok(PivJets { y, z, zp, u, v })
}

/// Left-hand side of the ncPIV equation from derivatives at one point:
/// `u''' + [u'', u] - 4(n+1+s^2)u' - 2({u', u^2} + u u' u) + 6s{u', u} + 4u(u - s)`
/// plus the `V` group with the chosen sign.
pub fn ncpiv_lhs(u: [&Mat; 4], v: [&Mat; 3], s: f64, n: i32, reading: NcpivReading) -> Result<Mat, PainleveError> {
    let [u0, u1, u2, u3] = u;
    let [v0, v1, v2] = v;
    let id = Mat::identity(u0.rows());
    let nf = n as f64;
    let base = u3 + commutator(u2, u0)? - u1.scale(4.0 * (nf + 1.0 + s * s))
        - (anticommutator(u1, &(u0 * u0))? + u0 * u1 * u0).scale(2.0)
        + anticommutator(u1, u0)?.scale(6.0 * s)
        + (u0 * (u0 - id.scale(s))).scale(4.0);
    let vgroup = v2 - (u1 * v0 + u0 * v1).scale(2.0) + v1.scale(2.0 * s);
    Ok(match reading {
        NcpivReading::Printed => base + vgroup,
        NcpivReading::SignConsistent => base - vgroup,
    })
}

pub fn ncpiv_residual(st: &PivState, closure: Closure, reading: NcpivReading) -> Result<Mat, PainleveError> {
    let j = piv_jets(st, closure, JET_ORDER)?;
    let u: Vec<Mat> = (0..4).map(|k| j.u.derivative_at(k)).collect();
    let v: Vec<Mat> = (0..3).map(|k| j.v.derivative_at(k)).collect();
    ncpiv_lhs([&u[0], &u[1], &u[2], &u[3]], [&v[0], &v[1], &v[2]], st.s, st.n, reading)
}

/// Lax matrices `A(l) = l a1 + a0 + am1 / l` and `U(l) = l u1 + u0`.
#[derive(Debug, Clone)]
pub struct LaxMatrices {
    pub a1: Mat,
    pub a0: Mat,
    pub am1: Mat,
    pub u1: Mat,
    pub u0: Mat,
}

impl LaxMatrices {
    pub fn a(&self, lambda: C64) -> Result<Mat, PainleveError> {
        if lambda == C64::new(0.0, 0.0) {
            return Err(PainleveError::PoleOfA);
        }
        Ok(self.a1.scale_c(lambda) + &self.a0 + self.am1.scale_c(lambda.inv()))
    }

    pub fn u(&self, lambda: C64) -> Mat {
        self.u1.scale_c(lambda) + &self.u0
    }
}

fn block_diag_signs(p: usize, top: f64, bottom: f64) -> Mat {
    let mut m = Mat::zeros(2 + p, 2 + p);
    m.set_block(0, 0, &Mat::identity(2).scale(top));
    m.set_block(2, 2, &Mat::identity(p).scale(bottom));
    m
}

fn blocks(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Mat {
    Mat::from_blocks(&[vec![a, b], vec![c, d]]).expect("conformal Lax blocks")
}

fn blocks_jet(a: &MatJet, b: &MatJet, c: &MatJet, d: &MatJet) -> MatJet {
    MatJet { c: (0..a.c.len()).map(|k| blocks(&a.c[k], &b.c[k], &c.c[k], &d.c[k])).collect() }
}

/// `(a0, am1)` as jets.
fn lax_jets(st: &PivState, j: &PivJets) -> Result<(MatJet, MatJet), PainleveError> {
    let v = st.variant;
    let p = v.inner_dim();
    let order = j.y.order();
    let yi = match v {
        Variant::A => j.y.inverse()?,
        Variant::B => j.y.right_inverse()?,
    };
    let i2 = MatJet::constant(Mat::identity(2), order);
    let ip = MatJet::constant(Mat::identity(p), order);
    let nh = st.n as f64 / 2.0;
    let a0 = blocks_jet(&(-&i2.times_s(st.s)), &j.y, &(&yi * &j.z).scale(2.0), &ip.times_s(st.s));
    let m11 = (-&j.z).add_const(&(Mat::identity(2).scale(nh) - v.j_left()));
    let m12 = (&j.u * &j.y).scale(-0.5);
    let m21 = &yi * &j.zp - &yi * &j.u * &j.z;
    let m22 = (&yi * &j.z * &j.y).add_const(&(-(Mat::identity(p).scale(nh) + v.j_right())));
    Ok((a0, blocks_jet(&m11, &m12, &m21, &m22)))
}

pub fn lax_matrices(st: &PivState) -> Result<LaxMatrices, PainleveError> {
    let j = piv_jets(st, Closure::Printed, 0)?;
    let (a0, am1) = lax_jets(st, &j)?;
    Ok(lax_from_values(st, a0.c[0].clone(), am1.c[0].clone())?)
}

fn lax_from_values(st: &PivState, a0: Mat, am1: Mat) -> Result<LaxMatrices, PainleveError> {
    let p = st.variant.inner_dim();
    let yi = st.y_inv()?;
    let u0 = blocks(&Mat::zeros(2, 2), &(-&st.y), &(&yi * &st.z).scale(-2.0), &Mat::zeros(p, p));
    Ok(LaxMatrices { a1: block_diag_signs(p, 1.0, -1.0), a0, am1, u1: block_diag_signs(p, -1.0, 1.0), u0 })
}

/// `d_s A - d_l U - [U, A]` along the flow with the given closure.
pub fn lax_compat_residual(st: &PivState, closure: Closure, lambda: C64) -> Result<Mat, PainleveError> {
    if lambda == C64::new(0.0, 0.0) {
        return Err(PainleveError::PoleOfA);
    }
    let j = piv_jets(st, closure, 2)?;
    let (a0, am1) = lax_jets(st, &j)?;
    let lax = lax_from_values(st, a0.c[0].clone(), am1.c[0].clone())?;
    let ds_a = &a0.c[1] + am1.c[1].scale_c(lambda.inv());
    let a = lax.a(lambda)?;
    let u = lax.u(lambda);
    Ok(ds_a - &lax.u1 - (&u * &a - &a * &u))
}

/// Integrated trajectory; `singular_at` is set when integration stopped early.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub points: Vec<S>,
    /// Richardson estimate of the endpoint error from a half-step rerun.
    pub error_estimate: Option<f64>,
    pub singular_at: Option<f64>,
}

fn rk4_step<F>(f: &F, s: f64, x: &[Mat], h: f64) -> Result<Vec<Mat>, PainleveError>
where
    F: Fn(f64, &[Mat]) -> Result<Vec<Mat>, PainleveError>,
{
    let axpy = |a: &[Mat], k: &[Mat], c: f64| -> Vec<Mat> { a.iter().zip(k).map(|(x, d)| x + d.scale(c)).collect() };
    let k1 = f(s, x)?;
    let k2 = f(s + h / 2.0, &axpy(x, &k1, h / 2.0))?;
    let k3 = f(s + h / 2.0, &axpy(x, &k2, h / 2.0))?;
    let k4 = f(s + h, &axpy(x, &k3, h))?;
    Ok((0..x.len())
        .map(|i| &x[i] + (&k1[i] + k2[i].scale(2.0) + k3[i].scale(2.0) + &k4[i]).scale(h / 6.0))
        .collect())
}

fn step_count(s0: f64, s_end: f64, h: f64) -> Result<(usize, f64), PainleveError> {
    if !(h > 0.0) {
        return Err(PainleveError::InvalidStep(format!("h = {h}")));
    }
    let span = s_end - s0;
    let steps = (span.abs() / h).round().max(1.0);
    if steps > MAX_STEPS {
        return Err(PainleveError::InvalidStep(format!("{steps} steps exceed the budget")));
    }
    Ok((steps as usize, span / steps))
}

/// Fixed-step RK4 over a flattened state; stops at blow-up.
fn run_rk4<F>(x0: Vec<Mat>, s0: f64, s_end: f64, h: f64, f: &F) -> Result<(Vec<(f64, Vec<Mat>)>, Option<f64>), PainleveError>
where
    F: Fn(f64, &[Mat]) -> Result<Vec<Mat>, PainleveError>,
{
    let (steps, dh) = step_count(s0, s_end, h)?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push((s0, x0));
    for k in 0..steps {
        let (s, x) = out.last().unwrap();
        let s = *s;
        let s_next = s0 + dh * (k + 1) as f64;
        match rk4_step(f, s, x, dh) {
            Ok(next) => {
                let norm = next.iter().map(Mat::max_norm).fold(0.0, f64::max);
                if !norm.is_finite() || norm > BLOWUP_NORM {
                    return Ok((out, Some(s_next)));
                }
                out.push((s_next, next));
            }
            Err(PainleveError::YSingular { .. }) | Err(PainleveError::Matrix(_)) => return Ok((out, Some(s))),
            Err(e) => return Err(e),
        }
    }
    Ok((out, None))
}

fn max_diff(a: &[Mat], b: &[Mat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).max_norm()).fold(0.0, f64::max)
}

/// Integrates the coupled system, keeping every step; a blow-up is reported
/// in `singular_at` rather than as an error.
pub fn integrate_partial(st0: &PivState, s_end: f64, h: f64, closure: Closure) -> Result<Trajectory<PivState>, PainleveError> {
    let f = |s: f64, x: &[Mat]| -> Result<Vec<Mat>, PainleveError> {
        let st = st0.with_vec(s, x.to_vec());
        let d = rhs(&st, closure)?;
        Ok(vec![d.y, d.z, d.zp, d.u])
    };
    let (pts, singular_at) = run_rk4(st0.to_vec(), st0.s, s_end, h, &f)?;
    let error_estimate = if singular_at.is_none() {
        let (half, sing) = run_rk4(st0.to_vec(), st0.s, s_end, h / 2.0, &f)?;
        sing.is_none().then(|| max_diff(&pts.last().unwrap().1, &half.last().unwrap().1) / 15.0)
    } else {
        None
    };
    Ok(Trajectory {
        points: pts.into_iter().map(|(s, x)| st0.with_vec(s, x)).collect(),
        error_estimate,
        singular_at,
    })
}

/// As [`integrate_partial`], but a blow-up is an error.
pub fn integrate(st0: &PivState, s_end: f64, h: f64, closure: Closure) -> Result<Trajectory<PivState>, PainleveError> {
    let t = integrate_partial(st0, s_end, h, closure)?;
    match t.singular_at {
        Some(s) => Err(PainleveError::Singular { s }),
        None => Ok(t),
    }
}

// ---------------------------------------------------------------------------
// Symmetric formulation

/// Printed second-order equations or the ones derived from the Lax pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymForm {
    /// `q'' = -2sq' + 2qrq - 2(1+2n)q - 4(qJ_R - J_L q)`,
    /// `r'' = 2sr' + 2rqr - 2(2n-1)r - 4(rJ_L - J_R r)`.
    Printed,
    /// `q'' = -2sq' + 2qrq - 2(1+n)q - 2(qJ_R - J_L q)`,
    /// `r'' = 2sr' + 2rqr - 2(n-1)r + 2(rJ_L - J_R r)`.
    LaxDerived,
}

/// `(s, q, q', r, r')`; `q` is 2 x p and `r` is p x 2.
#[derive(Debug, Clone, PartialEq)]
pub struct SymState {
    pub s: f64,
    pub q: Mat,
    pub qp: Mat,
    pub r: Mat,
    pub rp: Mat,
    pub variant: Variant,
    pub n: i32,
}

impl SymState {
    pub fn new(s: f64, q: Mat, qp: Mat, r: Mat, rp: Mat, variant: Variant, n: i32) -> Result<Self, PainleveError> {
        let p = variant.inner_dim();
        for (name, m, shape) in [("q", &q, (2, p)), ("qp", &qp, (2, p)), ("r", &r, (p, 2)), ("rp", &rp, (p, 2))] {
            if m.shape() != shape {
                return Err(PainleveError::InvalidShape(format!("{name} must be {shape:?}, got {:?}", m.shape())));
            }
        }
        Ok(SymState { s, q, qp, r, rp, variant, n })
    }

    fn to_vec(&self) -> Vec<Mat> {
        vec![self.q.clone(), self.qp.clone(), self.r.clone(), self.rp.clone()]
    }

    fn with_vec(&self, s: f64, v: Vec<Mat>) -> SymState {
        let mut it = v.into_iter();
        SymState {
            s,
            q: it.next().unwrap(),
            qp: it.next().unwrap(),
            r: it.next().unwrap(),
            rp: it.next().unwrap(),
            variant: self.variant,
            n: self.n,
        }
    }

    /// `rho_R = 2s qr + q'r - qr'`.
    pub fn rho_r(&self) -> Mat {
        (&self.q * &self.r).scale(2.0 * self.s) + &self.qp * &self.r - &self.q * &self.rp
    }

    /// `rho_L = 2s rq + rq' - r'q`.
    pub fn rho_l(&self) -> Mat {
        (&self.r * &self.q).scale(2.0 * self.s) + &self.r * &self.qp - &self.rp * &self.q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymDerivative {
    pub q: Mat,
    pub qp: Mat,
    pub r: Mat,
    pub rp: Mat,
}

fn sym_second(q: &Mat, qp: &Mat, r: &Mat, rp: &Mat, s: f64, v: Variant, n: i32, form: SymForm) -> (Mat, Mat) {
    let nf = n as f64;
    let (jl, jr) = (v.j_left(), v.j_right());
    let iq = q * &jr - &jl * q;
    let ir = r * &jl - &jr * r;
    let qrq = q * r * q;
    let rqr = r * q * r;
    match form {
        SymForm::Printed => (
            qp.scale(-2.0 * s) + qrq.scale(2.0) - q.scale(2.0 * (1.0 + 2.0 * nf)) - iq.scale(4.0),
            rp.scale(2.0 * s) + rqr.scale(2.0) - r.scale(2.0 * (2.0 * nf - 1.0)) - ir.scale(4.0),
        ),
        SymForm::LaxDerived => (
            qp.scale(-2.0 * s) + qrq.scale(2.0) - q.scale(2.0 * (1.0 + nf)) - iq.scale(2.0),
            rp.scale(2.0 * s) + rqr.scale(2.0) - r.scale(2.0 * (nf - 1.0)) + ir.scale(2.0),
        ),
    }
}

pub fn sym_rhs(st: &SymState, form: SymForm) -> SymDerivative {
    let (qpp, rpp) = sym_second(&st.q, &st.qp, &st.r, &st.rp, st.s, st.variant, st.n, form);
    SymDerivative { q: st.qp.clone(), qp: qpp, r: st.rp.clone(), rp: rpp }
}

struct SymJets {
    q: MatJet,
    qp: MatJet,
    r: MatJet,
    rp: MatJet,
}

fn sym_jets(st: &SymState, form: SymForm, order: usize) -> SymJets {
    let mut q = MatJet::constant(st.q.clone(), order);
    let mut qp = MatJet::constant(st.qp.clone(), order);
    let mut r = MatJet::constant(st.r.clone(), order);
    let mut rp = MatJet::constant(st.rp.clone(), order);
    let v = st.variant;
    let nf = st.n as f64;
    let (jl, jr) = (v.j_left(), v.j_right());
    for k in 0..order {
        let iq = q.right_const(&jr) - q.left_const(&jl);
        let ir = r.right_const(&jl) - r.left_const(&jr);
        let qrq = &q * &r * &q;
        let rqr = &r * &q * &r;
        let (qpp, rpp) = match form {
            SymForm::Printed => (
                qp.times_s(st.s).scale(-2.0) + qrq.scale(2.0) - q.scale(2.0 * (1.0 + 2.0 * nf)) - iq.scale(4.0),
                rp.times_s(st.s).scale(2.0) + rqr.scale(2.0) - r.scale(2.0 * (2.0 * nf - 1.0)) - ir.scale(4.0),
            ),
            SymForm::LaxDerived => (
                qp.times_s(st.s).scale(-2.0) + qrq.scale(2.0) - q.scale(2.0 * (1.0 + nf)) - iq.scale(2.0),
                rp.times_s(st.s).scale(2.0) + rqr.scale(2.0) - r.scale(2.0 * (nf - 1.0)) + ir.scale(2.0),
            ),
        };
        let kf = (k + 1) as f64;
        q.c[k + 1] = qp.c[k].scale(1.0 / kf);
        qp.c[k + 1] = qpp.c[k].scale(1.0 / kf);
        r.c[k + 1] = rp.c[k].scale(1.0 / kf);
        rp.c[k + 1] = rpp.c[k].scale(1.0 / kf);
    }
    SymJets { q, qp, r, rp }
}

/// Compatibility residual of the symmetric Lax pair
/// `U = [[-l, q], [r, l]]`,
/// `A = [[(l-s), -q], [-r, -(l-s)]] + (1/4l) [[rho_R' + 2n - 4J_L, 4sq + 2q'], [4sr - 2r', -rho_L' - 2n - 4J_R]]`.
pub fn sym_lax_residual(st: &SymState, form: SymForm, lambda: C64) -> Result<Mat, PainleveError> {
    if lambda == C64::new(0.0, 0.0) {
        return Err(PainleveError::PoleOfA);
    }
    let j = sym_jets(st, form, 3);
    let p = st.variant.inner_dim();
    let nf = st.n as f64;
    let rho_r = (&j.q * &j.r).times_s(st.s).scale(2.0) + &j.qp * &j.r - &j.q * &j.rp;
    let rho_l = (&j.r * &j.q).times_s(st.s).scale(2.0) + &j.r * &j.qp - &j.rp * &j.q;
    let drho_r = rho_r.deriv();
    let drho_l = rho_l.deriv();
    let i2 = Mat::identity(2);
    let ip = Mat::identity(p);
    let jl4 = st.variant.j_left().scale(4.0);
    let jr4 = st.variant.j_right().scale(4.0);
    let order = j.q.order();
    let s_i2 = MatJet::constant(i2.clone(), order).times_s(st.s);
    let s_ip = MatJet::constant(ip.clone(), order).times_s(st.s);
    // a0 + am1 / lambda, as jets
    let a0 = blocks_jet(&(-&s_i2), &(-&j.q), &(-&j.r), &s_ip);
    let am1 = blocks_jet(
        &drho_r.add_const(&(i2.scale(2.0 * nf) - &jl4)).scale(0.25),
        &(j.q.times_s(st.s).scale(4.0) + j.qp.scale(2.0)).scale(0.25),
        &(j.r.times_s(st.s).scale(4.0) - j.rp.scale(2.0)).scale(0.25),
        &(-&drho_l).add_const(&(-(ip.scale(2.0 * nf) + &jr4))).scale(0.25),
    );
    let a1 = block_diag_signs(p, 1.0, -1.0);
    let u1 = block_diag_signs(p, -1.0, 1.0);
    let a = a1.scale_c(lambda) + &a0.c[0] + am1.c[0].scale_c(lambda.inv());
    let u = u1.scale_c(lambda) + blocks(&Mat::zeros(2, 2), &st.q, &st.r, &Mat::zeros(p, p));
    let ds_a = &a0.c[1] + am1.c[1].scale_c(lambda.inv());
    Ok(ds_a - &u1 - (&u * &a - &a * &u))
}

/// Report for one symmetric-formulation state.
#[derive(Debug, Clone, PartialEq)]
pub struct SymReport {
    /// Max compatibility residual over the sampled lambdas.
    pub lax_residual: f64,
    /// `|rho_R' + qr|` (normalization c = 1).
    pub rho_r_c1: f64,
    /// `|rho_R' + 2qr|` (normalization c = 2).
    pub rho_r_c2: f64,
    /// `|rho_L' + rq|`.
    pub rho_l_c1: f64,
    /// `|rho_L' + 2rq|`.
    pub rho_l_c2: f64,
    /// For diagonal square data: max deviation of the matrix second
    /// derivatives from the scalar system applied entrywise.
    pub scalar_reduction: Option<f64>,
}

pub fn sym_residuals(st: &SymState, form: SymForm, lambdas: &[C64]) -> Result<SymReport, PainleveError> {
    let mut lax_residual: f64 = 0.0;
    for &l in lambdas {
        lax_residual = lax_residual.max(sym_lax_residual(st, form, l)?.max_norm());
    }
    let j = sym_jets(st, form, 2);
    let rho_r = (&j.q * &j.r).times_s(st.s).scale(2.0) + &j.qp * &j.r - &j.q * &j.rp;
    let rho_l = (&j.r * &j.q).times_s(st.s).scale(2.0) + &j.r * &j.qp - &j.rp * &j.q;
    let dr = rho_r.derivative_at(1);
    let dl = rho_l.derivative_at(1);
    let qr = &st.q * &st.r;
    let rq = &st.r * &st.q;
    let scalar_reduction = is_diagonal_square(st).then(|| {
        let d = sym_rhs(st, form);
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            let one = |m: &Mat| Mat::scalar(1, m[(i, i)]);
            let (qs, rs) = scalar_sym_second(&one(&st.q), &one(&st.qp), &one(&st.r), &one(&st.rp), st.s, st.n, form);
            worst = worst.max((d.qp[(i, i)] - qs[(0, 0)]).norm()).max((d.rp[(i, i)] - rs[(0, 0)]).norm());
        }
        worst
    });
    Ok(SymReport {
        lax_residual,
        rho_r_c1: (&dr + &qr).max_norm(),
        rho_r_c2: (&dr + qr.scale(2.0)).max_norm(),
        rho_l_c1: (&dl + &rq).max_norm(),
        rho_l_c2: (&dl + rq.scale(2.0)).max_norm(),
        scalar_reduction,
    })
}

fn is_diagonal_square(st: &SymState) -> bool {
    st.variant == Variant::A
        && [&st.q, &st.qp, &st.r, &st.rp].iter().all(|m| m[(0, 1)] == C64::new(0.0, 0.0) && m[(1, 0)] == C64::new(0.0, 0.0))
}

/// The scalar (one-dimensional, exponent-free) symmetric system.
fn scalar_sym_second(q: &Mat, qp: &Mat, r: &Mat, rp: &Mat, s: f64, n: i32, form: SymForm) -> (Mat, Mat) {
    let nf = n as f64;
    let qrq = q * r * q;
    let rqr = r * q * r;
    match form {
        SymForm::Printed => (
            qp.scale(-2.0 * s) + qrq.scale(2.0) - q.scale(2.0 * (1.0 + 2.0 * nf)),
            rp.scale(2.0 * s) + rqr.scale(2.0) - r.scale(2.0 * (2.0 * nf - 1.0)),
        ),
        SymForm::LaxDerived => (
            qp.scale(-2.0 * s) + qrq.scale(2.0) - q.scale(2.0 * (1.0 + nf)),
            rp.scale(2.0 * s) + rqr.scale(2.0) - r.scale(2.0 * (nf - 1.0)),
        ),
    }
}

pub fn integrate_sym_partial(st0: &SymState, s_end: f64, h: f64, form: SymForm) -> Result<Trajectory<SymState>, PainleveError> {
    let f = |s: f64, x: &[Mat]| -> Result<Vec<Mat>, PainleveError> {
        let d = sym_rhs(&st0.with_vec(s, x.to_vec()), form);
        Ok(vec![d.q, d.qp, d.r, d.rp])
    };
    let (pts, singular_at) = run_rk4(st0.to_vec(), st0.s, s_end, h, &f)?;
    Ok(Trajectory { points: pts.into_iter().map(|(s, x)| st0.with_vec(s, x)).collect(), error_estimate: None, singular_at })
}

// ---------------------------------------------------------------------------
// Scalar PIV

/// Coefficient of the `u u'` term in the scalar third-order equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarReading {
    /// `12 s u u'`, the commuting reduction of the matrix equation.
    SCoefficient,
    /// `12 u u'` as printed alongside the reduction.
    Printed,
}

/// `u'' - (u')^2/(2u) - (3/2)u^3 + 4su^2 - 2(s^2+1+n)u + 2n^2/u`.
pub fn scalar_piv_residual(u: f64, up: f64, upp: f64, s: f64, n: i32) -> Result<f64, PainleveError> {
    if u == 0.0 {
        return Err(PainleveError::PivSingularTerm);
    }
    Ok(upp - piv_rhs(u, up, s, n))
}

fn piv_rhs(u: f64, up: f64, s: f64, n: i32) -> f64 {
    let nf = n as f64;
    up * up / (2.0 * u) + 1.5 * u.powi(3) - 4.0 * s * u * u + 2.0 * (s * s + 1.0 + nf) * u - 2.0 * nf * nf / u
}

/// `u''' - 4u' - 6u^2u' + c uu' - 4nu' + 4u^2 - 4su - 4s^2u'` with `c = 12s` or `12`.
pub fn scalar_derived_residual(u: f64, up: f64, _upp: f64, uppp: f64, s: f64, n: i32, reading: ScalarReading) -> f64 {
    let nf = n as f64;
    let c = match reading {
        ScalarReading::SCoefficient => 12.0 * s,
        ScalarReading::Printed => 12.0,
    };
    uppp - 4.0 * up - 6.0 * u * u * up + c * u * up - 4.0 * nf * up + 4.0 * u * u - 4.0 * s * u - 4.0 * s * s * up
}

/// `(u'', u''')` implied by the scalar PIV equation.
pub fn scalar_piv_higher(u: f64, up: f64, s: f64, n: i32) -> Result<(f64, f64), PainleveError> {
    if u == 0.0 {
        return Err(PainleveError::PivSingularTerm);
    }
    let nf = n as f64;
    let upp = piv_rhs(u, up, s, n);
    let ds = -4.0 * u * u + 4.0 * s * u;
    let du = -up * up / (2.0 * u * u) + 4.5 * u * u - 8.0 * s * u + 2.0 * (s * s + 1.0 + nf) + 2.0 * nf * nf / (u * u);
    let dup = up / u;
    Ok((upp, ds + du * up + dup * upp))
}

/// One point `(s, u, u')` of a scalar PIV trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarPoint {
    pub s: f64,
    pub u: f64,
    pub up: f64,
}

pub fn integrate_scalar_piv(u0: f64, up0: f64, s0: f64, s_end: f64, h: f64, n: i32) -> Result<Vec<ScalarPoint>, PainleveError> {
    let f = |s: f64, x: &[Mat]| -> Result<Vec<Mat>, PainleveError> {
        let u = x[0][(0, 0)].re;
        let up = x[1][(0, 0)].re;
        if u == 0.0 {
            return Err(PainleveError::PivSingularTerm);
        }
        Ok(vec![x[1].clone(), Mat::scalar(1, C64::new(piv_rhs(u, up, s, n), 0.0))])
    };
    let x0 = vec![Mat::scalar(1, C64::new(u0, 0.0)), Mat::scalar(1, C64::new(up0, 0.0))];
    let (pts, singular_at) = run_rk4(x0, s0, s_end, h, &f)?;
    if let Some(s) = singular_at {
        return Err(PainleveError::Singular { s });
    }
    Ok(pts.into_iter().map(|(s, x)| ScalarPoint { s, u: x[0][(0, 0)].re, up: x[1][(0, 0)].re }).collect())
}
