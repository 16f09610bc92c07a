use pdfevo::model::*;
use pdfevo::oracle::*;
use pdfevo::quadrature::trapezoid_samples;
use pdfevo::Error;
use proptest::prelude::*;

fn linear(eta: f64, k: f64, d: f64, tau: f64, m: f64, m0: f64, s0: f64) -> ProblemSpec {
    ProblemSpec::new(
        DriftSpec::linear(eta).unwrap(),
        k,
        NoiseSpec::ou(d, tau, m).unwrap(),
        InitialSpec::gaussian(m0, s0),
        0.0,
        40.0,
    )
    .unwrap()
}

#[test]
fn zero_coupling_moments() {
    let p = linear(-0.6, 0.0, 1.0, 1.0, 0.3, 0.9, 0.4);
    for m in linear_moments(&p, &[0.0, 0.7, 3.0]).unwrap() {
        assert!((m.mean - 0.9 * (-0.6 * m.t).exp()).abs() < 1e-12);
        assert!((m.var - 0.16 * (-1.2 * m.t).exp()).abs() < 1e-12);
        assert_eq!(m.d_eff, 0.0);
    }
}

#[test]
fn constant_forcing_mean() {
    let p = linear(-1.0, 0.7, 1.0, 1.0, 0.4, 1.2, 0.3);
    for m in linear_moments(&p, &[0.5, 2.0, 6.0]).unwrap() {
        let e = (-m.t).exp();
        assert!((m.mean - (1.2 * e + 0.7 * 0.4 * (1.0 - e))).abs() < 1e-10);
    }
}

#[test]
fn stationary_variance() {
    let p = linear(-1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1e-8);
    let m = linear_moments(&p, &[20.0]).unwrap()[0];
    assert!((m.var - 0.5).abs() < 1e-8, "{}", m.var);
}

#[test]
fn fig3_mean_approaches_forced_level() {
    let p = linear(-0.8, 0.2, 1.0, 1.0, 0.2, -0.7, 0.15);
    let m = linear_moments(&p, &[10.0]).unwrap()[0];
    let e = (-8.0f64).exp();
    let exact = -0.7 * e + 0.05 * (1.0 - e);
    assert!((m.mean - exact).abs() < 1e-10);
    assert!((m.mean - 0.05).abs() < 1e-3);
}

#[test]
fn initial_and_symmetric_densities() {
    let p = linear(-0.8, 0.2, 1.0, 1.0, 0.2, -0.7, 0.15);
    for x in [-1.0, -0.7, -0.2] {
        let f = exact_pdf_linear(&p, x, 0.0).unwrap();
        assert!((f - gaussian_pdf(x, -0.7, 0.0225)).abs() < 1e-12);
    }
    let q = linear(-1.3, 0.8, 0.5, 0.4, 0.0, 0.0, 0.5);
    let xs = [0.1, 0.6, 1.7];
    let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
    for t in [0.5, 3.0] {
        let a = exact_pdf_linear_grid(&q, &xs, t).unwrap();
        let b = exact_pdf_linear_grid(&q, &neg, t).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn nonlinear_drift_is_rejected() {
    let p = ProblemSpec::normalized_bistable(1.0, 1.0, 0.5, 10.0).unwrap();
    assert!(matches!(linear_moments(&p, &[1.0]), Err(Error::OracleMismatch(_))));
}

/// `D^eff` from the closed-form OU integral, independent of the oracle's quadrature.
fn d_eff_closed(eta: f64, k: f64, d: f64, tau: f64, c0: f64, tau_c: f64, t: f64) -> f64 {
    let rate = 1.0 / tau - eta;
    k * (eta * t).exp() * c0 * (-t / tau_c).exp() + k * k * d / tau * (1.0 - (-rate * t).exp()) / rate
}

#[test]
fn effective_intensity_is_coupling_times_cross_covariance() {
    let mut p = linear(-0.8, 0.6, 1.3, 0.7, 0.1, 0.2, 0.5);
    p.initial.cross = CrossCovariance {
        amplitude: 0.2,
        decay_time: 0.9,
    };
    p.validate().unwrap();
    let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
    for m in linear_moments(&p, &times).unwrap() {
        let exact = d_eff_closed(-0.8, 0.6, 1.3, 0.7, 0.2, 0.9, m.t);
        assert!((m.d_eff - exact).abs() <= 1e-10 * exact.abs().max(1e-300), "t={}", m.t);
        assert_eq!(m.d_eff, 0.6 * m.cross_excitation);
    }
}

#[test]
fn oracle_moments_satisfy_the_moment_equations() {
    // dm/dt = eta m + kappa m_Xi, dvar/dt = 2 eta var + 2 D^eff
    let (eta, k, m_xi) = (-0.8, 0.5, 0.3);
    let p = linear(eta, k, 1.0, 0.6, m_xi, -0.4, 0.3);
    let h = 1e-4;
    for t in [0.3, 1.0, 4.0] {
        let ms = linear_moments(&p, &[t - h, t, t + h]).unwrap();
        let dm = (ms[2].mean - ms[0].mean) / (2.0 * h);
        let dv = (ms[2].var - ms[0].var) / (2.0 * h);
        assert!((dm - (eta * ms[1].mean + k * m_xi)).abs() < 1e-6);
        assert!((dv - (2.0 * eta * ms[1].var + 2.0 * ms[1].d_eff)).abs() < 1e-6);
    }
}

#[test]
fn variance_relaxes_monotonically_from_a_sharp_start() {
    let p = linear(-1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1e-6);
    let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
    let ms = linear_moments(&p, &times).unwrap();
    for w in ms.windows(2) {
        assert!(w[1].var > w[0].var);
        assert!(w[1].var < 0.5);
    }
}

#[test]
fn hanggi_linear_stationary_density_is_gaussian() {
    let p = linear(-2.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0);
    let xs: Vec<f64> = (0..=4000).map(|i| -5.0 + i as f64 * 0.0025).collect();
    let f = hanggi_stationary_pdf(&p, -2.0, &xs).unwrap();
    let b = 1.0 / 3.0;
    for (x, v) in xs.iter().zip(&f).step_by(50) {
        assert!((v - gaussian_pdf(*x, 0.0, b / 2.0)).abs() < 1e-6);
    }
    assert!(matches!(
        hanggi_stationary_pdf(&p, 1.5, &xs),
        Err(Error::DivergentDiffusion(_))
    ));
}

proptest! {
    #[test]
    fn hanggi_density_peaks_at_stable_roots(d in 0.05f64..5.0, tau in 0.05f64..5.0, r in -3.0f64..0.0) {
        let p = ProblemSpec::normalized_bistable(d, tau, 0.5, 10.0).unwrap();
        let xs: Vec<f64> = (0..=800).map(|i| -4.0 + i as f64 * 0.01).collect();
        let f = hanggi_stationary_pdf(&p, r, &xs).unwrap();
        prop_assert!((trapezoid_samples(&xs, &f) - 1.0).abs() < 1e-8);
        let argmax = |range: std::ops::Range<usize>| {
            range.max_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap()
        };
        let left = argmax(0..400);
        let right = argmax(401..801);
        prop_assert!((xs[left] + 1.0).abs() < 1e-9);
        prop_assert!((xs[right] - 1.0).abs() < 1e-9);
        prop_assert!(f[400] < f[399] && f[400] < f[401]);
    }
}

#[test]
fn fox_stationary_density() {
    // linear drift: B is constant, so the density is the Gaussian with var B / |eta|
    let p = linear(-1.5, 0.8, 1.0, 0.6, 0.0, 0.0, 1.0);
    let xs: Vec<f64> = (0..=2000).map(|i| -3.0 + i as f64 * 0.003).collect();
    let f = fox_stationary_pdf(&p, &xs).unwrap();
    let b = 0.64 / (1.0 + 0.6 * 1.5);
    for (x, v) in xs.iter().zip(&f).step_by(40) {
        assert!((v - gaussian_pdf(*x, 0.0, b / 1.5)).abs() < 1e-5);
    }
    // bistable: h'(0) = 1, so tau~ = 2 reaches the singular point
    let q = ProblemSpec::normalized_bistable(1.0, 2.0, 0.5, 10.0).unwrap();
    assert!(matches!(fox_stationary_pdf(&q, &xs), Err(Error::DivergentDiffusion(_))));
    let ok = ProblemSpec::normalized_bistable(1.0, 0.5, 0.5, 10.0).unwrap();
    let g = fox_stationary_pdf(&ok, &xs).unwrap();
    assert!((trapezoid_samples(&xs, &g) - 1.0).abs() < 1e-12);
}
