//! Closed-form references: the Gaussian response of the linear problem and
//! the stationary density of the Hänggi equation.

use crate::closures::{fox_stationary, fox_stationary_check, hanggi_stationary};
use crate::error::{Error, Result};
use crate::model::{gaussian_pdf, ProblemSpec};
use crate::quadrature::{adaptive_simpson, trapezoid_samples};

const TOL: f64 = 1e-10;

/// Moments of the linear response at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearMoments {
    pub t: f64,
    pub mean: f64,
    pub var: f64,
    /// `C_XXi(t, t)`
    pub cross_excitation: f64,
    /// `C_X0X(t)`
    pub cross_initial: f64,
    /// `kappa C_XXi(t, t)`
    pub d_eff: f64,
}

impl LinearMoments {
    pub fn density(&self, x: f64) -> f64 {
        gaussian_pdf(x, self.mean, self.var)
    }
}

fn linear_rate(problem: &ProblemSpec) -> Result<f64> {
    problem
        .drift
        .linear_rate()
        .ok_or_else(|| Error::OracleMismatch("analytic solution needs h(x) = eta x".into()))
}

/// `C_XXi(s, s) = e^{eta(s-t0)} C_X0Xi(s) + kappa int_{t0}^s e^{eta(s-u)} C(s, u) du`
fn cross_excitation(problem: &ProblemSpec, eta: f64, s: f64) -> f64 {
    let t0 = problem.t0;
    let integral = adaptive_simpson(
        &|u: f64| (eta * (s - u)).exp() * problem.noise.cov(s, u),
        t0,
        s,
        TOL,
    );
    (eta * (s - t0)).exp() * problem.cross_cov(s) + problem.coupling * integral
}

/// Linear-response moments at the given times by nested adaptive quadrature.
pub fn linear_moments(problem: &ProblemSpec, times: &[f64]) -> Result<Vec<LinearMoments>> {
    let eta = linear_rate(problem)?;
    let t0 = problem.t0;
    let k = problem.coupling;
    let init = problem.initial;
    times
        .iter()
        .map(|&t| {
            if t < t0 {
                return Err(crate::error::param("t", "must not precede t0"));
            }
            let decay = (eta * (t - t0)).exp();
            let mean = init.mean * decay
                + k * adaptive_simpson(
                    &|s: f64| problem.noise.mean(s) * (eta * (t - s)).exp(),
                    t0,
                    t,
                    TOL,
                );
            let cxx = cross_excitation(problem, eta, t);
            let var = init.variance * decay * decay
                + 2.0
                    * k
                    * adaptive_simpson(
                        &|s: f64| cross_excitation(problem, eta, s) * (2.0 * eta * (t - s)).exp(),
                        t0,
                        t,
                        TOL,
                    );
            let cross_initial = init.variance * decay
                + k * adaptive_simpson(
                    &|s: f64| (eta * (t - s)).exp() * problem.cross_cov(s),
                    t0,
                    t,
                    TOL,
                );
            Ok(LinearMoments {
                t,
                mean,
                var,
                cross_excitation: cxx,
                cross_initial,
                d_eff: k * cxx,
            })
        })
        .collect()
}

/// Exact response density of the linear problem at `(x, t)`.
pub fn exact_pdf_linear(problem: &ProblemSpec, x: f64, t: f64) -> Result<f64> {
    Ok(linear_moments(problem, &[t])?[0].density(x))
}

/// Exact response density on a grid.
pub fn exact_pdf_linear_grid(problem: &ProblemSpec, xs: &[f64], t: f64) -> Result<Vec<f64>> {
    let m = linear_moments(problem, &[t])?[0];
    Ok(xs.iter().map(|&x| m.density(x)).collect())
}

/// Stationary Hänggi density `C exp(int q dx / B)` with `B` from the
/// stationary mean slope `r_inf`, normalized by trapezoid on `xs`.
pub fn hanggi_stationary_pdf(problem: &ProblemSpec, r_inf: f64, xs: &[f64]) -> Result<Vec<f64>> {
    let b = hanggi_stationary(problem, r_inf)?;
    if !(b > 0.0) {
        return Err(Error::DivergentDiffusion(format!(
            "stationary diffusion {b} is not positive"
        )));
    }
    Ok(stationary_density(problem, b, xs))
}

/// `exp(int q / b)` normalized on `xs`, for constant diffusion `b`.
pub(crate) fn stationary_density(problem: &ProblemSpec, b: f64, xs: &[f64]) -> Vec<f64> {
    let q = problem.drift_coefficient(problem.horizon).antiderivative();
    let expo: Vec<f64> = xs.iter().map(|&x| q.eval(x) / b).collect();
    let top = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut f: Vec<f64> = expo.iter().map(|e| (e - top).exp()).collect();
    let z = trapezoid_samples(xs, &f);
    for v in &mut f {
        *v /= z;
    }
    f
}

/// Stationary density of the Fox equation, `(C / B(x)) exp(int q / B dx)`,
/// with the exponent integrated by trapezoid on `xs`. Fails when
/// `tau h'(x) >= 1` anywhere on the grid.
pub fn fox_stationary_pdf(problem: &ProblemSpec, xs: &[f64]) -> Result<Vec<f64>> {
    if xs.len() < 2 {
        return Err(Error::OracleMismatch("grid needs at least two points".into()));
    }
    fox_stationary_check(problem, xs[0], xs[xs.len() - 1])?;
    let q = problem.drift_coefficient(problem.horizon);
    let b: Vec<f64> = xs.iter().map(|&x| fox_stationary(problem, x)).collect::<Result<_>>()?;
    let mut expo = vec![0.0; xs.len()];
    for i in 1..xs.len() {
        let g = |j: usize| q.eval(xs[j]) / b[j];
        expo[i] = expo[i - 1] + 0.5 * (xs[i] - xs[i - 1]) * (g(i) + g(i - 1));
    }
    let top = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut f: Vec<f64> = expo.iter().zip(&b).map(|(e, bi)| (e - top).exp() / bi).collect();
    let z = trapezoid_samples(xs, &f);
    for v in &mut f {
        *v /= z;
    }
    Ok(f)
}

/// Self-consistent stationary Hänggi solution: the `R` with
/// `R = int h'(x) f_R(x) dx`, found by bisection, and its density on `xs`.
pub fn hanggi_self_consistent(problem: &ProblemSpec, xs: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (_, tau) = problem
        .noise
        .ou_params()
        .ok_or_else(|| Error::UnsupportedNoise("stationary Hänggi needs an OU kernel".into()))?;
    let gap = |r: f64| -> Result<f64> {
        let f = hanggi_stationary_pdf(problem, r, xs)?;
        let slope: Vec<f64> = xs
            .iter()
            .zip(&f)
            .map(|(&x, &v)| problem.drift.dh().eval(x) * v)
            .collect();
        Ok(r - trapezoid_samples(xs, &slope))
    };
    // gap is increasing in r; it is positive near the divergence r -> 1/tau
    let mut hi = (1.0 / tau) * (1.0 - 1e-9);
    let mut lo = -1.0;
    while gap(lo)? > 0.0 {
        lo *= 2.0;
        if lo < -1e8 {
            return Err(Error::OracleMismatch("no self-consistent R found".into()));
        }
    }
    if gap(hi)? < 0.0 {
        return Err(Error::OracleMismatch("no self-consistent R below 1/tau".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-13 * mid.abs().max(1.0) {
            break;
        }
    }
    let r = 0.5 * (lo + hi);
    Ok((r, hanggi_stationary_pdf(problem, r, xs)?))
}
