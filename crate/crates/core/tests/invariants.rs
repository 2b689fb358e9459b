use std::sync::OnceLock;

use ncpiv_core::fredholm::{log_derivs_of, FredholmContext};
use ncpiv_core::kernels::cd_sum;
use ncpiv_core::matrix::{nilpotent_exp, power_conjugate};
use ncpiv_core::{IntDiag, Mat, MopFamily, WeightFamily, C64};
use proptest::prelude::*;

fn family_a() -> &'static MopFamily {
    static F: OnceLock<MopFamily> = OnceLock::new();
    F.get_or_init(|| MopFamily::build(&WeightFamily::example_a(0.7), 8).unwrap())
}

fn contexts() -> &'static [FredholmContext; 3] {
    static C: OnceLock<[FredholmContext; 3]> = OnceLock::new();
    C.get_or_init(|| {
        [
            FredholmContext::new(&WeightFamily::scalar(), 6).unwrap(),
            FredholmContext::new(&WeightFamily::example_a(1.0), 6).unwrap(),
            FredholmContext::new(&WeightFamily::example_b(0.5), 6).unwrap(),
        ]
    })
}

fn mat3(v: &[f64]) -> Mat {
    Mat::from_fn(3, 3, |i, j| C64::new(v[3 * i + j], 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn power_conjugate_composes(
        entries in prop::collection::vec(-2.0f64..2.0, 9),
        l in prop::collection::vec(-3i32..4, 3),
        r in prop::collection::vec(-3i32..4, 3),
        arg1 in 0.0f64..6.3, arg2 in 0.0f64..6.3,
        mod1 in 0.5f64..1.5, mod2 in 0.5f64..1.5,
    ) {
        let m = mat3(&entries);
        let (l, r) = (IntDiag::new(l), IntDiag::new(r));
        let z1 = C64::from_polar(mod1, arg1);
        let z2 = C64::from_polar(mod2, arg2);
        let twice = power_conjugate(&l, &power_conjugate(&l, &m, &r, z1).unwrap(), &r, z2).unwrap();
        let once = power_conjugate(&l, &m, &r, z1 * z2).unwrap();
        prop_assert!((twice - once).max_norm() < 1e-10);
        let back = power_conjugate(&l, &power_conjugate(&l, &m, &r, z1).unwrap(), &r, z1.inv()).unwrap();
        prop_assert!((back - m.clone()).max_norm() < 1e-10);
        // integer exponents: a full turn of the argument changes nothing
        let turned = power_conjugate(&l, &m, &r, C64::from_polar(mod1, arg1 + 2.0 * std::f64::consts::PI)).unwrap();
        prop_assert!((turned - power_conjugate(&l, &m, &r, z1).unwrap()).max_norm() < 1e-10);
    }

    #[test]
    fn nilpotent_exp_inverse(upper in prop::collection::vec(-2.0f64..2.0, 3), x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let a = Mat::from_fn(3, 3, |i, j| match (i, j) {
            (0, 1) => C64::new(upper[0], 0.0),
            (0, 2) => C64::new(upper[1], 0.0),
            (1, 2) => C64::new(upper[2], 0.0),
            _ => C64::new(0.0, 0.0),
        });
        let ex = nilpotent_exp(&a, x).unwrap();
        let prod = &ex * &nilpotent_exp(&a, -x).unwrap();
        prop_assert!((prod - Mat::identity(3)).max_norm() < 1e-12);
        let sum = &ex * &nilpotent_exp(&a, y).unwrap();
        prop_assert!((sum - nilpotent_exp(&a, x + y).unwrap()).max_norm() < 1e-11);
    }

    #[test]
    fn kernel_transpose_symmetry(n in 1usize..8, x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let f = family_a();
        let kxy = cd_sum(f, n, x, y).unwrap();
        let kyx = cd_sum(f, n, y, x).unwrap();
        prop_assert!((kxy - kyx.transpose()).max_norm() < 1e-12);
    }

    #[test]
    fn gram_spectrum_in_unit_interval(which in 0usize..3, n in 1usize..6, s in -3.0f64..3.0) {
        let gs = contexts()[which].gram_system(n, s).unwrap();
        for ev in gs.g.sym_eigenvalues().unwrap() {
            prop_assert!((-1e-10..=1.0 + 1e-10).contains(&ev), "eigenvalue {ev}");
        }
    }

    #[test]
    fn gram_det_is_monotone(which in 0usize..3, n in 1usize..6, s in -2.5f64..2.5, ds in 0.01f64..0.5) {
        let ctx = &contexts()[which];
        let lo = ctx.gram_det(n, s).unwrap();
        let hi = ctx.gram_det(n, s + ds).unwrap();
        prop_assert!(hi >= lo - 1e-12 * lo.abs().max(1e-300), "{lo} > {hi}");
    }

    #[test]
    fn gram_derivative_is_minus_boundary(which in 0usize..3, n in 1usize..5, s in -2.0f64..2.0) {
        let ctx = &contexts()[which];
        let h = 1e-4;
        let gp = ctx.gram_system(n, s + h).unwrap().g;
        let gm = ctx.gram_system(n, s - h).unwrap().g;
        let fd = (gp - gm).scale(0.5 / h);
        let b = ctx.gram_system(n, s).unwrap().b;
        prop_assert!((fd + b).max_norm() < 1e-7);
    }

    #[test]
    fn log_derivatives_match_differences(which in 0usize..3, n in 1usize..5, s in -2.0f64..2.0) {
        let ctx = &contexts()[which];
        let h = 1e-4;
        let c = ctx.log_derivs(n, s).unwrap();
        let p = ctx.log_derivs(n, s + h).unwrap();
        let m = ctx.log_derivs(n, s - h).unwrap();
        let r_fd = (p.log_det - m.log_det) / (2.0 * h);
        let rp_fd = (p.r - m.r) / (2.0 * h);
        prop_assert!((r_fd - c.r).abs() < 1e-6 * (1.0 + c.r.abs()), "R {} vs {}", c.r, r_fd);
        prop_assert!((rp_fd - c.rp).abs() < 1e-6 * (1.0 + c.rp.abs()), "R' {} vs {}", c.rp, rp_fd);
    }

    #[test]
    fn truncated_route_matches_gram_route(which in 0usize..3, n in 1usize..6, s in -1.0f64..3.0) {
        let ctx = &contexts()[which];
        let gram = log_derivs_of(&ctx.gram_system(n, s).unwrap()).unwrap();
        prop_assume!(gram.det > 1e-3);
        let cut = ctx.log_derivs(n, s).unwrap();
        prop_assert!((gram.det - cut.det).abs() < 1e-10);
        prop_assert!((gram.r - cut.r).abs() < 1e-8 * (1.0 + gram.r.abs()));
        prop_assert!((gram.rp - cut.rp).abs() < 1e-8 * (1.0 + gram.rp.abs()));
    }
}

#[test]
fn scalar_determinant_closed_form() {
    let ctx = &contexts()[0];
    for s in [-2.0, -0.5, 0.0, 1.0, 2.5] {
        let exact = ncpiv_core::fredholm::scalar_n1_closed_form(s);
        assert!((ctx.gram_det(1, s).unwrap() - exact).abs() < 1e-12);
        assert!((ctx.log_derivs(1, s).unwrap().det - exact).abs() < 1e-12);
    }
}

#[test]
fn truncated_route_keeps_relative_accuracy_in_the_tail() {
    // F(s) for n = 1 is erfc(-s)/2, R = 2 e^{-s^2} / (sqrt(pi) erfc(-s))
    let ctx = &contexts()[0];
    for s in [-5.0, -4.0, -3.0] {
        let f = ncpiv_core::fredholm::scalar_n1_closed_form(s);
        let r = (-s * s).exp() / std::f64::consts::PI.sqrt() / f;
        let got = ctx.log_derivs(1, s).unwrap();
        assert!((got.det / f - 1.0).abs() < 1e-10, "F at {s}");
        assert!((got.r / r - 1.0).abs() < 1e-10, "R at {s}");
    }
}
