use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use ncpiv_core::airy::{box_grid, scaling_limit_error};
use ncpiv_core::fredholm::{contour_det, FredholmContext};
use ncpiv_core::kernels::{intrep_direct, intrep_line, intrep_loop, representation_deviation, FamilyFactors};
use ncpiv_core::mop::{build_family, closed_form_norm, family_constants, gamma_sq};
use ncpiv_core::painleve::{integrate_partial, lax_compat_residual, ncpiv_residual};
use ncpiv_core::quadrature::gauss_hermite;
use ncpiv_core::{Closure, FamilyKind, Mat, MopFamily, NcpivReading, PivState, Variant, C64};

use crate::config::RunConfig;
use crate::output::{Cell, Table};
use crate::CliError;

/// Outcome of a subcommand: the table plus whether every check passed.
#[derive(Debug, Clone)]
pub struct Report {
    pub table: Table,
    pub passed: bool,
}

impl Report {
    fn ok(table: Table) -> Self {
        Report { table, passed: true }
    }
}

fn family(cfg: &RunConfig, nmax: usize) -> Result<MopFamily, CliError> {
    Ok(build_family(&cfg.weight(), nmax, &gauss_hermite(cfg.quad_points))?)
}

const ORTHO_TOL: f64 = 1e-9;
const NORM_TOL: f64 = 1e-8;
const ODE_TOL: f64 = 1e-8;
const KERNEL_TOL: f64 = 1e-6;
const INTREP_TOL: f64 = 1e-8;
const CONST_TOL: f64 = 1e-12;
const ODE_POINTS: usize = 20;
const INTREP_X: [f64; 4] = [-1.0, 0.0, 0.5, 1.5];

enum Check {
    Value(f64),
    NotApplicable,
}

/// Orthonormality, norm formula, ODE, kernel-representation, integral
/// representation and constant checks.
pub fn verify(cfg: &RunConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    if cfg.n == 0 {
        return Err(CliError::Usage("n must be at least 1".into()));
    }
    let rules = cfg.contour_rules()?;
    let w = cfg.weight();
    let f = family(cfg, cfg.n)?;
    let matrix = w.kind != FamilyKind::Scalar;

    let mut checks: Vec<(&str, Check, f64)> = Vec::new();
    checks.push(("orthonormality", Check::Value(f.ortho_residual), ORTHO_TOL));

    let mut norm_err: f64 = 0.0;
    for k in 0..=cfg.n {
        let want = closed_form_norm(&w, k);
        norm_err = norm_err.max((&f.norms[k] - &want).max_norm() / want.max_norm());
    }
    checks.push(("norm-formula", Check::Value(norm_err), NORM_TOL));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let xs: Vec<f64> = (0..ODE_POINTS).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut ode_err: f64 = 0.0;
    for k in 0..=cfg.n {
        for &x in &xs {
            let r = f.ode_residual(k, x)?;
            ode_err = ode_err.max(r.max_norm() / (1.0 + f.normalized[k].eval(x).max_norm()));
        }
    }
    checks.push(("ode-residual", Check::Value(ode_err), ODE_TOL));

    let grid = box_grid(5);
    let points: Vec<(f64, f64)> = grid.iter().flat_map(|&x| grid.iter().map(move |&y| (x, y))).collect();
    let factors = FamilyFactors::new(&w, cfg.n)?;
    let dev = representation_deviation(&f, &factors, cfg.n, &points, &rules)?;
    checks.push(("kernel-equivalence", Check::Value(dev), KERNEL_TOL));

    if matrix {
        let (mut lp, mut ln) = (0.0f64, 0.0f64);
        for k in 0..=cfg.n {
            for &x in &INTREP_X {
                let direct = intrep_direct(&f, k, x)?;
                let scale = 1.0 + direct.max_norm();
                lp = lp.max((intrep_loop(&w, k, x, &rules.circle)? - &direct).max_norm() / scale);
                ln = ln.max((intrep_line(&w, k, x, &rules.line)? - &direct).max_norm() / scale);
            }
        }
        checks.push(("intrep-loop", Check::Value(lp), INTREP_TOL));
        checks.push(("intrep-line", Check::Value(ln), INTREP_TOL));
        let mut c_err: f64 = 0.0;
        for k in 0..=cfg.n {
            let c = family_constants(&w, k)?;
            let id = Mat::identity(2);
            c_err = c_err.max((&c.b * &c.b_hat - id).max_norm());
            if w.kind == FamilyKind::ExampleA {
                c_err = c_err.max((c.b.det()? - C64::new(gamma_sq(k, w.nu), 0.0)).norm());
            }
        }
        checks.push(("factor-constants", Check::Value(c_err), CONST_TOL));
    } else {
        checks.push(("intrep-loop", Check::NotApplicable, INTREP_TOL));
        checks.push(("intrep-line", Check::NotApplicable, INTREP_TOL));
        checks.push(("factor-constants", Check::NotApplicable, CONST_TOL));
    }

    let mut table = Table::new(&["check", "max_residual", "tolerance", "status"]);
    let mut passed = true;
    for (name, value, tol) in checks {
        let (v, status) = match value {
            Check::Value(v) if v <= tol => (Cell::Num(v), "pass"),
            Check::Value(v) => {
                passed = false;
                (Cell::Num(v), "fail")
            }
            Check::NotApplicable => (Cell::Empty, "n/a"),
        };
        table.push(vec![name.into(), v, Cell::Num(tol), status.into()]);
    }
    Ok(Report { table, passed })
}

pub const SCAN_COLUMNS: [&str; 8] = ["s", "det_gram", "det_contour", "R", "Rp", "Rpp", "sigma_piv_residual", "error"];

/// Determinants and log-derivatives on the `s` grid; row errors are recorded
/// and the scan continues.
pub fn fredholm_scan(cfg: &RunConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    if cfg.n == 0 {
        return Err(CliError::Usage("n must be at least 1".into()));
    }
    let rules = cfg.contour_rules()?;
    let w = cfg.weight();
    let ctx = FredholmContext::with_nodes(&w, cfg.n, cfg.quad_points)?;
    let scalar = !w.is_matrix();
    let rows: Vec<Vec<Cell>> = cfg
        .s_grid()
        .par_iter()
        .map(|&s| {
            let mut errors = Vec::new();
            let mut note = |e: &dyn std::fmt::Display| errors.push(e.to_string());
            let gram = ctx.gram_det(cfg.n, s).map_err(|e| note(&e)).ok();
            let contour = contour_det(&w, cfg.n, s, &rules).map_err(|e| note(&e)).ok().map(|c| c.value);
            let sigma = ctx.sigma_data(cfg.n, s).map_err(|e| note(&e)).ok();
            let residual = if scalar { sigma.map(|d| d.residual()) } else { None };
            vec![
                Cell::Num(s),
                gram.into(),
                contour.into(),
                sigma.map(|d| d.r).into(),
                sigma.map(|d| d.rp).into(),
                sigma.map(|d| d.rpp).into(),
                residual.into(),
                errors.join("; ").into(),
            ]
        })
        .collect();
    let mut table = Table::new(&SCAN_COLUMNS);
    for r in rows {
        table.push(r);
    }
    Ok(Report::ok(table))
}

/// Initial data for `painleve`.
#[derive(Debug, Clone, Deserialize)]
pub struct InitData {
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub zp: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub variant: String,
    pub n: i32,
}

fn nested_to_mat(name: &str, rows: &[Vec<f64>]) -> Result<Mat, CliError> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(CliError::Usage(format!("{name} must be a non-empty rectangular array")));
    }
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    Ok(Mat::from_real_rows(&refs))
}

impl InitData {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("initial data: {e}")))
    }

    pub fn into_state(self, s0: f64) -> Result<PivState, CliError> {
        let variant = match self.variant.as_str() {
            "a" => Variant::A,
            "b" => Variant::B,
            other => return Err(CliError::Usage(format!("variant must be \"a\" or \"b\", got {other:?}"))),
        };
        PivState::new(
            s0,
            nested_to_mat("y", &self.y)?,
            nested_to_mat("z", &self.z)?,
            nested_to_mat("zp", &self.zp)?,
            nested_to_mat("u", &self.u)?,
            variant,
            self.n,
        )
        .map_err(|e| CliError::Usage(format!("initial data: {e}")))
    }
}

/// Amplitude of the seeded random initial data.
pub const RANDOM_AMPLITUDE: f64 = 0.2;

/// Stationary data plus noise: `y = y_0 + E`, `z, z', u = E` (`y_0` from
/// [`PivState::fixed_point`]) with entries of `E` uniform in
/// `[-0.2, 0.2)`, reproducible from `seed`.
pub fn random_state(variant: Variant, n: i32, s0: f64, seed: u64) -> PivState {
    random_state_scaled(variant, n, s0, seed, RANDOM_AMPLITUDE)
}

/// As [`random_state`] with entries of `E` uniform in `[-amplitude, amplitude)`.
pub fn random_state_scaled(variant: Variant, n: i32, s0: f64, seed: u64, amplitude: f64) -> PivState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |r: usize, c: usize| Mat::from_fn(r, c, |_, _| C64::new(rng.gen_range(-amplitude..amplitude), 0.0));
    let base = PivState::fixed_point(variant).y;
    let y = &base + &draw(2, variant.inner_dim());
    let z = draw(2, 2);
    let zp = draw(2, 2);
    let u = draw(2, 2);
    PivState { s: s0, y, z, zp, u, variant, n }
}

pub const LAX_LAMBDA: f64 = 1.3;
pub const PAINLEVE_COLUMNS: [&str; 9] =
    ["s", "u11", "u12", "u21", "u22", "ncpiv_residual", "ncpiv_residual_sign_consistent", "lax_residual", "flags"];

/// Trajectory of the coupled system from `s_min` to `s_max` with residual
/// columns. A blow-up ends the table with a `singular at s=...` row.
pub fn painleve(cfg: &RunConfig, init: Option<InitData>, closure: Closure) -> Result<Report, CliError> {
    cfg.validate()?;
    let st0 = match init {
        Some(d) => d.into_state(cfg.s_min)?,
        None => random_state(cfg.variant()?, cfg.n as i32, cfg.s_min, cfg.seed),
    };
    let traj = integrate_partial(&st0, cfg.s_max, cfg.step, closure)?;
    let lambda = C64::new(LAX_LAMBDA, 0.0);
    let rows: Vec<Vec<Cell>> = traj
        .points
        .par_iter()
        .map(|p| {
            let mut flags = Vec::new();
            let mut norm = |r: Result<Mat, _>| match r {
                Ok(m) => Cell::Num(m.max_norm()),
                Err(e) => {
                    flags.push(format!("{e}"));
                    Cell::Empty
                }
            };
            let printed = norm(ncpiv_residual(p, closure, NcpivReading::Printed));
            let consistent = norm(ncpiv_residual(p, closure, NcpivReading::SignConsistent));
            let lax = norm(lax_compat_residual(p, closure, lambda));
            let mut row = vec![Cell::Num(p.s)];
            row.extend(p.u.entries_row_major().iter().map(|v| Cell::Num(v.re)));
            row.extend([printed, consistent, lax, flags.join("; ").into()]);
            row
        })
        .collect();
    let mut table = Table::new(&PAINLEVE_COLUMNS);
    for r in rows {
        table.push(r);
    }
    if let Some(s) = traj.singular_at {
        let mut row = vec![Cell::Num(s)];
        row.extend(std::iter::repeat(Cell::Empty).take(7));
        row.push(format!("singular at s={s}").into());
        table.push(row);
    }
    Ok(Report::ok(table))
}

pub const AIRY_DEGREES: [usize; 4] = [8, 16, 32, 64];
pub const AIRY_GRID_POINTS: usize = 9;

/// Edge scaling limit for each degree in `degrees`.
pub fn airy(cfg: &RunConfig, degrees: &[usize]) -> Result<Report, CliError> {
    cfg.validate()?;
    if degrees.is_empty() {
        return Err(CliError::Usage("n list is empty".into()));
    }
    if let Some(bad) = degrees.iter().find(|d| !AIRY_DEGREES.contains(d)) {
        return Err(CliError::Usage(format!("n list entries must be in {AIRY_DEGREES:?}, got {bad}")));
    }
    let nmax = degrees.iter().max().copied().unwrap_or(1) - 1;
    let nodes = cfg.quad_points.max(ncpiv_core::mop::reference_nodes(nmax));
    let grid = box_grid(AIRY_GRID_POINTS);
    let mut table = Table::new(&["n", "sup_error", "offdiag_max", "error"]);
    let f = build_family(&cfg.weight(), nmax, &gauss_hermite(nodes));
    for &n in degrees {
        let row = match f.as_ref().map_err(|e| e.to_string()).and_then(|f| scaling_limit_error(f, n, &grid).map_err(|e| e.to_string())) {
            Ok(r) => vec![n.into(), Cell::Num(r.sup_error), Cell::Num(r.offdiag_max), Cell::Empty],
            Err(e) => vec![n.into(), Cell::Empty, Cell::Empty, e.into()],
        };
        table.push(row);
    }
    Ok(Report::ok(table))
}
