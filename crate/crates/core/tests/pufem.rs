use pdfevo::closures::{ClosureKind, DiffusionField};
use pdfevo::linalg::Matrix;
use pdfevo::model::{gaussian_pdf, DriftSpec};
use pdfevo::poly::Poly;
use pdfevo::pufem::*;
use pdfevo::quadrature::trapezoid;
use proptest::prelude::*;

fn setup(k: usize, m: usize, s: usize, lo: f64, hi: f64) -> (Cover, PuBasis) {
    (
        Cover::new(lo, hi, k).unwrap(),
        PuBasis::uniform(s, k, m).unwrap(),
    )
}

#[test]
fn partition_of_unity_on_interior() {
    for s in 1..=3 {
        let (cover, basis) = setup(12, 3, s, -2.0, 3.0);
        let h = cover.half_width();
        for i in 0..1000 {
            let x = -2.0 + h + (5.0 - 2.0 * h) * (i as f64 + 0.5) / 1000.0;
            let sum: f64 = (0..12).map(|k| pu_function(&basis, &cover, k, x)).sum();
            assert!((sum - 1.0).abs() <= 1e-12, "s={s} x={x} sum={sum}");
        }
    }
}

#[test]
fn mother_function_smoothness() {
    // g_s has s - 1 vanishing derivatives at z = +-1, so the mother function
    // is C^{s-1} at the junctions xi = -1, 0, 1
    let e = 1e-4;
    for s in 1..=3usize {
        let f = |xi: f64| pu_mother(s, xi).unwrap();
        let d1 = |xi: f64| pu_mother_derivative(s, xi).unwrap();
        for &x0 in &[-1.0, 0.0, 1.0] {
            assert!((f(x0 - e) - f(x0 + e)).abs() < 1e-3);
            if s >= 2 {
                let dl = (f(x0) - f(x0 - e)) / e;
                let dr = (f(x0 + e) - f(x0)) / e;
                assert!((dl - dr).abs() < 1e-3, "s={s} x0={x0} dl={dl} dr={dr}");
            }
            if s >= 3 {
                let d2l = (d1(x0 - 1e-9) - d1(x0 - e)) / e;
                let d2r = (d1(x0 + e) - d1(x0 + 1e-9)) / e;
                assert!((d2l - d2r).abs() < 1e-2, "s={s} x0={x0} {d2l} {d2r}");
            }
        }
        for &x0 in &[-0.999, -0.3, 0.42] {
            let h = 1e-6;
            let fd = (f(x0 + h) - f(x0 - h)) / (2.0 * h);
            assert!((fd - d1(x0)).abs() < 1e-6, "s={s} x0={x0}");
        }
    }
    // s = 1 is only continuous: its one-sided slopes differ at the centre
    let f = |xi: f64| pu_mother(1, xi).unwrap();
    assert!(((f(0.0) - f(-e)) / e - (f(e) - f(0.0)) / e).abs() > 1.0);
}

#[test]
fn shape_derivative_matches_finite_difference() {
    let (cover, basis) = setup(6, 4, 2, -1.0, 1.0);
    for k in [0, 3, 5] {
        for mu in 0..4 {
            let (a, b) = cover.bounds(k);
            for t in [0.13, 0.4, 0.77] {
                let x = a + t * (b - a);
                let h = 1e-6;
                let fd = (shape_eval(&basis, &cover, k, mu, x + h)
                    - shape_eval(&basis, &cover, k, mu, x - h))
                    / (2.0 * h);
                let d = shape_derivative(&basis, &cover, k, mu, x);
                assert!((fd - d).abs() < 1e-5 * d.abs().max(1.0));
            }
        }
    }
}

#[test]
fn mass_matrix_structure_and_quadrature_exactness() {
    let (cover, basis) = setup(10, 4, 2, -1.0, 1.0);
    let c = assemble_mass(&basis, &cover).unwrap();
    assert_eq!(c.max_asymmetry(), 0.0);
    for i in 0..basis.total() {
        assert!(c[(i, i)] > 0.0);
    }
    for k in 0..10 {
        for l in 0..10 {
            if usize::abs_diff(k, l) > 1 {
                for mu in 0..4 {
                    for nu in 0..4 {
                        assert_eq!(c[(basis.index(k, mu), basis.index(l, nu))], 0.0);
                    }
                }
            }
        }
    }
    let p = Assembler::for_degree(&cover, &basis, 2 * basis.shape_degree())
        .unwrap()
        .points();
    let hi = Assembler::new(&cover, &basis, p + 4).unwrap().mass();
    let twice = Assembler::new(&cover, &basis, 2 * p).unwrap().mass();
    let scale = c.max_abs();
    for i in 0..basis.total() {
        for j in 0..basis.total() {
            assert!((c[(i, j)] - hi[(i, j)]).abs() <= 1e-13 * scale);
            assert!((c[(i, j)] - twice[(i, j)]).abs() <= 1e-13 * scale);
        }
    }
    // positive semidefinite: quadratic form of random vectors
    for seed in 0..20 {
        let v: Vec<f64> = (0..basis.total())
            .map(|i| ((i * 31 + seed * 17) as f64).sin())
            .collect();
        assert!(c.quadratic_form(&v) > 0.0);
    }
}

#[test]
fn stiffness_special_cases() {
    let (cover, basis) = setup(8, 3, 2, -2.0, 2.0);
    let drift = DriftSpec::bistable();
    let zero = Poly::zero();
    let b = 0.7;
    let field = DiffusionField::constant(ClosureKind::Hanggi, 0.0, b);
    let a = assemble_stiffness(&basis, &cover, &zero, &field).unwrap();
    let s = Assembler::new(&cover, &basis, 8).unwrap().gram();
    let n = basis.total();
    for i in 0..n {
        for j in 0..n {
            assert!((a[(i, j)] + b * s[(i, j)]).abs() < 1e-12);
        }
    }
    assert!(a.max_asymmetry() < 1e-12);
    for seed in 0..10 {
        let v: Vec<f64> = (0..n).map(|i| ((i * 7 + seed * 3) as f64).cos()).collect();
        assert!(a.quadratic_form(&v) <= 1e-12);
    }
    let none = DiffusionField::constant(ClosureKind::Hanggi, 0.0, 0.0);
    assert_eq!(assemble_stiffness(&basis, &cover, &zero, &none).unwrap().max_abs(), 0.0);

    let fox = DiffusionField::fox(
        &pdfevo::model::ProblemSpec::normalized_bistable(1.0, 1.0, 0.6, 5.0).unwrap(),
        1.0,
        0.01,
    )
    .unwrap();
    assert!(matches!(
        assemble_stiffness(&basis, &cover, drift.h(), &fox),
        Err(pdfevo::Error::UnsupportedCoefficient(_))
    ));
}

fn interior_weights(basis: &PuBasis, k: usize, seed: u64) -> Vec<f64> {
    // random weights on subdomains whose support avoids the boundary cells
    let mut w = vec![0.0; basis.total()];
    for sub in 1..k - 1 {
        for mu in 0..basis.size(sub) {
            w[basis.index(sub, mu)] = ((sub * 13 + mu * 7) as f64 + seed as f64).sin();
        }
    }
    w
}

fn pu_flux(basis: &PuBasis, k: usize, a: &Matrix, w: &[f64]) -> (f64, f64) {
    let aw = a.mul_vec(w);
    let mut one = vec![0.0; basis.total()];
    for sub in 0..k {
        one[basis.index(sub, 0)] = 1.0;
    }
    let flux: f64 = one.iter().zip(&aw).map(|(o, v)| o * v).sum();
    (flux, aw.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

#[test]
fn stiffness_conserves_mass() {
    // sum_k phi_k = 1 away from the boundary cells, so the test function
    // sum_k u_0^k has zero derivative wherever an interior density lives
    let (cover, basis) = setup(20, 4, 2, -4.0, 4.0);
    let drift = DriftSpec::bistable();
    let field = DiffusionField::novel_from_intensities(&drift, &[0.5, 0.25, 0.25], -0.5, 0.0);
    let a = assemble_stiffness(&basis, &cover, drift.h(), &field).unwrap();
    for seed in 0..5 {
        let w = interior_weights(&basis, 20, seed);
        let (flux, scale) = pu_flux(&basis, 20, &a, &w);
        assert!(flux.abs() < 1e-12 * scale, "flux {flux} scale {scale}");
    }
}

#[test]
fn projection_properties() {
    let (cover, basis) = setup(50, 4, 2, -4.0, 4.0);
    assert_eq!(basis.total(), 200);
    let w = project_initial(&basis, &cover, |x| gaussian_pdf(x, 0.0, 0.36)).unwrap();
    let xs: Vec<f64> = (0..=20000).map(|i| -4.0 + 8.0 * i as f64 / 20000.0).collect();
    let f = evaluate_pdf(&basis, &cover, &w, &xs);
    let mass = pdfevo::quadrature::trapezoid_samples(&xs, &f);
    assert!((mass - 1.0).abs() <= 1e-6, "{mass}");

    let zero = project_initial(&basis, &cover, |_| 0.0).unwrap();
    assert!(zero.iter().all(|&v| v == 0.0));

    let target: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
    let rebuilt = project_initial(&basis, &cover, |x| evaluate_pdf(&basis, &cover, &target, &[x])[0]).unwrap();
    let err = rebuilt
        .iter()
        .zip(&target)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err < 1e-10, "{err}");
}

#[test]
fn projection_error_decreases_with_refinement() {
    let f0 = |x: f64| gaussian_pdf(x, 0.3, 0.25);
    let mut errs = Vec::new();
    for k in [25, 50, 100] {
        let (cover, basis) = setup(k, 4, 2, -4.0, 4.0);
        let w = project_initial(&basis, &cover, f0).unwrap();
        let xs: Vec<f64> = (0..=2000).map(|i| -3.0 + 6.0 * i as f64 / 2000.0).collect();
        let f = evaluate_pdf(&basis, &cover, &w, &xs);
        errs.push(
            xs.iter()
                .zip(&f)
                .fold(0.0f64, |m, (&x, &v)| m.max((v - f0(x)).abs())),
        );
    }
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn evaluation_matches_shapes() {
    let (cover, basis) = setup(6, 3, 2, 0.0, 7.0);
    let mut w = vec![0.0; basis.total()];
    assert!(evaluate_pdf(&basis, &cover, &w, &[0.5, 3.3]).iter().all(|&v| v == 0.0));
    w[basis.index(2, 0)] = 1.0;
    for x in [0.1, 1.9, 2.5, 3.0, 3.9, 6.5] {
        let got = evaluate_pdf(&basis, &cover, &w, &[x])[0];
        assert!((got - shape_eval(&basis, &cover, 2, 0, x)).abs() < 1e-15);
    }
}

#[test]
fn crank_nicolson_special_cases() {
    let c = Matrix::from_rows(&[vec![1.0]]);
    let a = Matrix::from_rows(&[vec![-0.3]]);
    let w = cn_step(&c, &a, &a, &[2.0], 0.1).unwrap();
    let expect = 2.0 * (1.0 - 0.015) / (1.0 + 0.015);
    assert!((w[0] - expect).abs() < 1e-15);

    let (cover, basis) = setup(10, 3, 2, -3.0, 3.0);
    let mass = assemble_mass(&basis, &cover).unwrap();
    let zero = Matrix::zeros(basis.total());
    let w0 = project_initial(&basis, &cover, |x| gaussian_pdf(x, 0.0, 0.3)).unwrap();
    let w1 = cn_step(&mass, &zero, &zero, &w0, 0.01).unwrap();
    let scale = w0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in w0.iter().zip(&w1) {
        assert!((a - b).abs() < 1e-10 * scale, "{a} {b}");
    }
}

#[test]
fn pure_diffusion_step_preserves_mass() {
    let (cover, basis) = setup(40, 4, 2, -5.0, 5.0);
    let asm = Assembler::new(&cover, &basis, 8).unwrap();
    let mass = asm.mass();
    let a = asm.stiffness(|_| (0.0, 0.4));
    let mut w = project_initial(&basis, &cover, |x| gaussian_pdf(x, 0.0, 0.2)).unwrap();
    let j = |w: &[f64]| asm.integrate(w, |_, f, _| f);
    let j0 = j(&w);
    for _ in 0..20 {
        let next = cn_step(&mass, &a, &a, &w, 0.01).unwrap();
        assert!((j(&next) - j(&w)).abs() <= 1e-10);
        w = next;
    }
    assert!((j(&w) - j0).abs() < 1e-9);
    // independent check: trapezoid of the reconstruction
    let f = |x: f64| evaluate_pdf(&basis, &cover, &w, &[x])[0];
    assert!((trapezoid(f, -5.0, 5.0, 20000) - j0).abs() < 1e-6);
}

#[test]
fn functional_gives_moments() {
    let (cover, basis) = setup(50, 4, 2, -6.0, 6.0);
    let w = project_initial(&basis, &cover, |x| gaussian_pdf(x, 0.0, 1.0)).unwrap();
    let dh = DriftSpec::bistable().dh().clone();
    let v = functional(&basis, &cover, &dh).unwrap();
    let r: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
    assert!((r + 2.0).abs() < 1e-5, "{r}");
}

proptest! {
    #[test]
    fn pu_symmetry_holds(z in -1.0f64..1.0, s in 1usize..=3) {
        // g(z) + g(-z) = 1 expressed through the mother function:
        // phi(xi) + phi(xi - 1) = 1 for xi in [0, 1]
        let xi = 0.5 * (z + 1.0);
        let sum = pu_mother(s, xi).unwrap() + pu_mother(s, xi - 1.0).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-14);
    }

    #[test]
    fn stiffness_rows_sum_through_pu(b in 0.05f64..2.0, eta in -2.0f64..0.5, seed in 0u64..1000) {
        let (cover, basis) = setup(16, 3, 2, -4.0, 4.0);
        let drift = DriftSpec::linear(eta).unwrap();
        let field = DiffusionField::constant(ClosureKind::Effective, 0.0, b);
        let a = assemble_stiffness(&basis, &cover, drift.h(), &field).unwrap();
        let w = interior_weights(&basis, 16, seed);
        let (flux, scale) = pu_flux(&basis, 16, &a, &w);
        prop_assert!(flux.abs() < 1e-12 * scale);
    }
}
