//! Diffusion coefficients of the closed response-pdf evolution equations.
//!
//! Every time integral over the excitation kernel is a composite trapezoid
//! on a uniform time grid. History-dependent closures (Hänggi and the
//! order-`M` family) read the mean slope `R(t) = E[h'(X(t))]` and its running
//! integral from a [`MomentHistory`].

use crate::error::{param, Error, Result};
use crate::model::{DriftSpec, ProblemSpec};
use crate::poly::Poly;

/// Samples of `R(t_k)` on a uniform grid with their cumulative trapezoid
/// integral `E_k = int_{t0}^{t_k} R(u) du`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentHistory {
    t0: f64,
    dt: f64,
    r: Vec<f64>,
    e: Vec<f64>,
}

impl MomentHistory {
    pub fn new(t0: f64, dt: f64, r0: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(param("dt", "history step must be positive"));
        }
        Ok(Self {
            t0,
            dt,
            r: vec![r0],
            e: vec![0.0],
        })
    }

    pub fn from_samples(t0: f64, dt: f64, samples: &[f64]) -> Result<Self> {
        let (&first, rest) = samples
            .split_first()
            .ok_or_else(|| param("history", "needs at least one sample"))?;
        let mut h = Self::new(t0, dt, first)?;
        for &r in rest {
            h.push(r);
        }
        Ok(h)
    }

    /// Constant `R` over `steps` intervals.
    pub fn constant(t0: f64, dt: f64, r: f64, steps: usize) -> Result<Self> {
        Self::from_samples(t0, dt, &vec![r; steps + 1])
    }

    pub fn push(&mut self, r: f64) {
        let k = self.r.len() - 1;
        let e = self.e[k] + 0.5 * self.dt * (self.r[k] + r);
        self.r.push(r);
        self.e.push(e);
    }

    /// Replaces the newest sample, updating its cumulative integral.
    pub fn set_last(&mut self, r: f64) {
        let k = self.r.len() - 1;
        self.r[k] = r;
        if k > 0 {
            self.e[k] = self.e[k - 1] + 0.5 * self.dt * (self.r[k - 1] + r);
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn last_time(&self) -> f64 {
        self.time(self.r.len() - 1)
    }

    pub fn samples(&self) -> &[f64] {
        &self.r
    }

    pub fn integrals(&self) -> &[f64] {
        &self.e
    }

    /// Grid index of `t`, which must be a grid time already covered.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let pos = (t - self.t0) / self.dt;
        let k = pos.round();
        if k < 0.0 || (pos - k).abs() > 1e-6 {
            return Err(param("t", format!("{t} is not on the history grid")));
        }
        let k = k as usize;
        if k >= self.r.len() {
            return Err(Error::MissingHistory {
                requested: t,
                available: self.last_time(),
            });
        }
        Ok(k)
    }
}

/// Number of equal trapezoid intervals covering `[t0, t]` with step at most `dt`.
fn intervals(t0: f64, t: f64, dt: f64) -> usize {
    let span = t - t0;
    if span <= 0.0 {
        return 0;
    }
    ((span / dt) - 1e-9).ceil().max(1.0) as usize
}

fn check_time(problem: &ProblemSpec, t: f64, dt: f64) -> Result<()> {
    if !(t >= problem.t0) {
        return Err(param("t", "must not precede t0"));
    }
    if !(dt > 0.0) {
        return Err(param("dt", "quadrature step must be positive"));
    }
    Ok(())
}

/// `kappa^2 int_{t0}^t C(t, s) w(t - s) ds` by composite trapezoid.
fn kernel_integral(problem: &ProblemSpec, t: f64, dt: f64, w: impl Fn(f64) -> f64) -> f64 {
    let n = intervals(problem.t0, t, dt);
    if n == 0 {
        return 0.0;
    }
    let h = (t - problem.t0) / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let s = problem.t0 + i as f64 * h;
        let weight = if i == 0 || i == n { 0.5 } else { 1.0 };
        acc += weight * problem.noise.cov(t, s) * w(t - s);
    }
    problem.coupling * problem.coupling * h * acc
}

/// Effective noise intensity of the exact linear-drift equation,
/// `kappa e^{eta(t-t0)} C_X0Xi(t) + kappa^2 int e^{eta(t-s)} C(t,s) ds`.
pub fn effective_intensity(problem: &ProblemSpec, t: f64, dt: f64) -> Result<f64> {
    let eta = problem.require_linear()?;
    check_time(problem, t, dt)?;
    let k = problem.coupling;
    Ok(k * (eta * (t - problem.t0)).exp() * problem.cross_cov(t)
        + kernel_integral(problem, t, dt, |u| (eta * u).exp()))
}

/// Small-correlation-time coefficients `(D_0, D_1)`; the diffusion is
/// `D_0 + D_1 h'(x)`.
pub fn sct_coefficients(problem: &ProblemSpec, t: f64, dt: f64) -> Result<[f64; 2]> {
    check_time(problem, t, dt)?;
    let kc = problem.coupling * problem.cross_cov(t);
    let elapsed = t - problem.t0;
    let d0 = kc + kernel_integral(problem, t, dt, |_| 1.0);
    let d1 = kc * elapsed + kernel_integral(problem, t, dt, |u| u);
    Ok([d0, d1])
}

/// Transient Fox diffusion
/// `kappa C_X0Xi(t) e^{h'(x)(t-t0)} + kappa^2 int C(t,s) e^{h'(x)(t-s)} ds`.
pub fn fox_diffusion(problem: &ProblemSpec, x: f64, t: f64, dt: f64) -> Result<f64> {
    Ok(DiffusionField::fox(problem, t, dt)?.b(x))
}

/// Closed-form transient Fox diffusion for OU excitation without initial
/// cross-covariance: `kappa^2 D / (1 - tau h') (1 - exp(-(1 - tau h')(t - t0)/tau))`.
pub fn fox_diffusion_closed_form(problem: &ProblemSpec, x: f64, t: f64) -> Result<f64> {
    let (d, tau) = problem
        .noise
        .ou_params()
        .ok_or_else(|| Error::UnsupportedNoise("closed-form Fox diffusion needs an OU kernel".into()))?;
    if problem.initial.cross.amplitude != 0.0 {
        return Err(Error::ClosureMismatch(
            "closed-form Fox diffusion assumes zero initial cross-covariance".into(),
        ));
    }
    let k2 = problem.coupling * problem.coupling;
    let rate = (1.0 - tau * problem.drift.dh().eval(x)) / tau;
    let elapsed = t - problem.t0;
    if rate.abs() * elapsed < 1e-8 {
        return Ok(k2 * d / tau * elapsed * (1.0 - 0.5 * rate * elapsed));
    }
    Ok(k2 * d / tau * (-(-rate * elapsed).exp_m1()) / rate)
}

fn ou_or_err(problem: &ProblemSpec, what: &str) -> Result<(f64, f64)> {
    problem
        .noise
        .ou_params()
        .ok_or_else(|| Error::UnsupportedNoise(format!("{what} is defined for OU excitation only")))
}

/// Stationary Fox diffusion `kappa^2 D / (1 - tau h'(x))`, valid only where
/// `tau h'(x) < 1`.
pub fn fox_stationary(problem: &ProblemSpec, x: f64) -> Result<f64> {
    let (d, tau) = ou_or_err(problem, "stationary Fox diffusion")?;
    let th = tau * problem.drift.dh().eval(x);
    if th >= 1.0 {
        return Err(Error::DivergentDiffusion(format!(
            "tau h'(x) = {th} >= 1 at x = {x}"
        )));
    }
    Ok(problem.coupling * problem.coupling * d / (1.0 - th))
}

/// Rejects a stationary Fox request if `tau h'(x) >= 1` anywhere on `[lo, hi]`.
pub fn fox_stationary_check(problem: &ProblemSpec, lo: f64, hi: f64) -> Result<()> {
    let (_, tau) = ou_or_err(problem, "stationary Fox diffusion")?;
    let (x, max_slope) = max_on_interval(problem.drift.dh(), lo, hi);
    if tau * max_slope >= 1.0 {
        return Err(Error::DivergentDiffusion(format!(
            "tau * max h' = {} >= 1 (at x = {x}); stationary Fox diffusion is infinite there",
            tau * max_slope
        )));
    }
    Ok(())
}

/// Maximum of a polynomial on `[lo, hi]`: dense sampling refined at the
/// sign changes of its derivative.
pub(crate) fn max_on_interval(p: &Poly, lo: f64, hi: f64) -> (f64, f64) {
    let dp = p.derivative();
    let n = 2000;
    let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let mut best = (lo, p.eval(lo));
    let mut consider = |x: f64| {
        let v = p.eval(x);
        if v > best.1 {
            best = (x, v);
        }
    };
    for w in xs.windows(2) {
        consider(w[1]);
        let (mut a, mut b) = (w[0], w[1]);
        if dp.eval(a) * dp.eval(b) < 0.0 {
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if dp.eval(a) * dp.eval(m) <= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            consider(0.5 * (a + b));
        }
    }
    best
}

/// Stationary small-correlation-time diffusion `kappa^2 D (1 + tau h'(x))`.
pub fn sct_stationary(problem: &ProblemSpec, x: f64) -> Result<f64> {
    let (d, tau) = ou_or_err(problem, "stationary SCT diffusion")?;
    Ok(problem.coupling * problem.coupling * d * (1.0 + tau * problem.drift.dh().eval(x)))
}

/// Stationary Hänggi diffusion `kappa^2 D / (1 - tau R_inf)`.
pub fn hanggi_stationary(problem: &ProblemSpec, r_inf: f64) -> Result<f64> {
    let (d, tau) = ou_or_err(problem, "stationary Hänggi diffusion")?;
    if tau * r_inf >= 1.0 {
        return Err(Error::DivergentDiffusion(format!(
            "tau R_inf = {} >= 1",
            tau * r_inf
        )));
    }
    Ok(problem.coupling * problem.coupling * d / (1.0 - tau * r_inf))
}

/// Generalized effective noise intensities `[D_0, ..., D_M]` at grid time `t`:
/// `D_m = kappa e^{E(t)} C_X0Xi(t) (t-t0)^m
///      + kappa^2 int e^{E(t)-E(s)} C(t,s) (t-s)^m ds`.
pub fn generalized_intensities(
    problem: &ProblemSpec,
    history: &MomentHistory,
    t: f64,
    order: usize,
) -> Result<Vec<f64>> {
    if !(t >= problem.t0) {
        return Err(param("t", "must not precede t0"));
    }
    let k = history.index_of(t)?;
    let dt = history.dt();
    let e = history.integrals();
    let ek = e[k];
    let elapsed = t - history.t0();
    let kc = problem.coupling * (ek).exp() * problem.cross_cov(t);
    let mut out: Vec<f64> = (0..=order).map(|m| kc * elapsed.powi(m as i32)).collect();
    if k == 0 {
        return Ok(out);
    }
    let k2 = problem.coupling * problem.coupling;
    let mut acc = vec![0.0; order + 1];
    for j in 0..=k {
        let s = history.time(j);
        let weight = if j == 0 || j == k { 0.5 } else { 1.0 };
        let base = weight * (ek - e[j]).exp() * problem.noise.cov(t, s);
        let lag = t - s;
        let mut p = 1.0;
        for a in acc.iter_mut() {
            *a += base * p;
            p *= lag;
        }
    }
    for (o, a) in out.iter_mut().zip(acc) {
        *o += k2 * dt * a;
    }
    Ok(out)
}

/// Hänggi's x-independent diffusion; identical to `D_0` of the order-`M` family.
pub fn hanggi_diffusion(problem: &ProblemSpec, history: &MomentHistory, t: f64) -> Result<f64> {
    Ok(generalized_intensities(problem, history, t, 0)?[0])
}

/// Closure selecting the diffusion coefficient of the pdf equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosureKind {
    /// Exact effective intensity; linear drift only.
    Effective,
    Sct,
    Fox,
    Hanggi,
    /// Order-`M` expansion in the fluctuation `h'(x) - R(t)`.
    Novel { order: usize },
}

impl ClosureKind {
    pub fn uses_history(&self) -> bool {
        matches!(self, ClosureKind::Hanggi | ClosureKind::Novel { .. })
    }

    pub fn label(&self) -> String {
        match self {
            ClosureKind::Effective => "effective".into(),
            ClosureKind::Sct => "sct".into(),
            ClosureKind::Fox => "fox".into(),
            ClosureKind::Hanggi => "hanggi".into(),
            ClosureKind::Novel { order } => format!("novel-m{order}"),
        }
    }

    /// Polynomial degree in `x` of the diffusion, `None` when not polynomial.
    pub fn diffusion_degree(&self, drift: &DriftSpec) -> Option<usize> {
        let slope = drift.dh().degree();
        match self {
            ClosureKind::Effective | ClosureKind::Hanggi => Some(0),
            ClosureKind::Sct => Some(slope),
            ClosureKind::Fox => (slope == 0).then_some(0),
            ClosureKind::Novel { order } => Some(slope * order),
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Polynomial {
        b: Poly,
        db: Poly,
    },
    /// `c e^{a T} + kernel(a)` with `a = h'(x)`.
    Fox {
        slope: Poly,
        curvature: Poly,
        initial: f64,
        elapsed: f64,
        kernel: FoxKernel,
    },
}

/// Trapezoid sum `kappa^2 sum_j w_j C(t, s_j) e^{a u_j}`, `u_j = t - s_j`.
#[derive(Debug, Clone)]
enum FoxKernel {
    /// OU kernel on `n` uniform intervals of width `h`: the sum is geometric
    /// in `rho = e^{(a - 1/tau) h}` and is evaluated in closed form.
    Ou {
        scale: f64,
        inv_tau: f64,
        h: f64,
        n: usize,
    },
    /// `(weight, lag)` pairs.
    Terms(Vec<(f64, f64)>),
}

impl FoxKernel {
    /// `(sum, d sum / da)`
    fn eval(&self, a: f64) -> (f64, f64) {
        match self {
            FoxKernel::Terms(terms) => terms.iter().fold((0.0, 0.0), |(s, d), (w, u)| {
                let e = w * (a * u).exp();
                (s + e, d + u * e)
            }),
            FoxKernel::Ou { n: 0, .. } => (0.0, 0.0),
            &FoxKernel::Ou { scale, inv_tau, h, n } => {
                let lr = (a - inv_tau) * h;
                let nf = n as f64;
                let (s0, s1) = if lr.abs() < 1e-4 || (lr * nf).abs() < 0.5 {
                    let mut s0 = 0.0;
                    let mut s1 = 0.0;
                    for j in 0..=n {
                        let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                        let e = w * (lr * j as f64).exp();
                        s0 += e;
                        s1 += j as f64 * e;
                    }
                    (s0, s1)
                } else {
                    let rho = lr.exp();
                    let rn = (lr * nf).exp();
                    let q = 1.0 - rho;
                    let sum = (1.0 - rn * rho) / q;
                    let jsum = rho * (1.0 - (nf + 1.0) * rn + nf * rn * rho) / (q * q);
                    (sum - 0.5 * (1.0 + rn), jsum - 0.5 * nf * rn)
                };
                (scale * h * s0, scale * h * h * s1)
            }
        }
    }
}

/// Diffusion `B(x, t)` and its x-derivative at one time instant.
#[derive(Debug, Clone)]
pub struct DiffusionField {
    kind: ClosureKind,
    time: f64,
    coefficients: Vec<f64>,
    repr: Repr,
}

impl DiffusionField {
    pub fn constant(kind: ClosureKind, time: f64, value: f64) -> Self {
        Self {
            kind,
            time,
            coefficients: vec![value],
            repr: Repr::Polynomial {
                b: Poly::constant(value),
                db: Poly::zero(),
            },
        }
    }

    pub fn effective(problem: &ProblemSpec, t: f64, dt: f64) -> Result<Self> {
        let d = effective_intensity(problem, t, dt)?;
        Ok(Self::constant(ClosureKind::Effective, t, d))
    }

    pub fn sct(problem: &ProblemSpec, t: f64, dt: f64) -> Result<Self> {
        let [d0, d1] = sct_coefficients(problem, t, dt)?;
        let b = &Poly::constant(d0) + &problem.drift.dh().scale(d1);
        let db = b.derivative();
        Ok(Self {
            kind: ClosureKind::Sct,
            time: t,
            coefficients: vec![d0, d1],
            repr: Repr::Polynomial { b, db },
        })
    }

    pub fn fox(problem: &ProblemSpec, t: f64, dt: f64) -> Result<Self> {
        check_time(problem, t, dt)?;
        let n = intervals(problem.t0, t, dt);
        let k2 = problem.coupling * problem.coupling;
        let h = if n > 0 { (t - problem.t0) / n as f64 } else { 0.0 };
        let kernel = match problem.noise.ou_params() {
            Some((d, tau)) => FoxKernel::Ou {
                scale: k2 * d / tau,
                inv_tau: 1.0 / tau,
                h,
                n,
            },
            None => FoxKernel::Terms(
                (0..=n)
                    .filter(|_| n > 0)
                    .map(|i| {
                        let s = problem.t0 + i as f64 * h;
                        let w = if i == 0 || i == n { 0.5 * h } else { h };
                        (k2 * w * problem.noise.cov(t, s), t - s)
                    })
                    .collect(),
            ),
        };
        Ok(Self {
            kind: ClosureKind::Fox,
            time: t,
            coefficients: Vec::new(),
            repr: Repr::Fox {
                slope: problem.drift.dh().clone(),
                curvature: problem.drift.d2h().clone(),
                initial: problem.coupling * problem.cross_cov(t),
                elapsed: t - problem.t0,
                kernel,
            },
        })
    }

    pub fn hanggi(problem: &ProblemSpec, history: &MomentHistory, t: f64) -> Result<Self> {
        let d = hanggi_diffusion(problem, history, t)?;
        Ok(Self::constant(ClosureKind::Hanggi, t, d))
    }

    /// Order-`M` diffusion from given intensities and current mean slope `r`:
    /// `B = sum_m D_m / m! phi^m`, `dB/dx = sum_{m>=1} D_m / (m-1)! phi^{m-1} h''`,
    /// with `phi = h'(x) - r`.
    pub fn novel_from_intensities(drift: &DriftSpec, intensities: &[f64], r: f64, t: f64) -> Self {
        let phi = drift.dh() - &Poly::constant(r);
        let mut b = Poly::zero();
        let mut db = Poly::zero();
        let mut phi_pow = Poly::constant(1.0);
        let mut fact = 1.0;
        for (m, &d) in intensities.iter().enumerate() {
            if m > 0 {
                // phi_pow holds phi^{m-1}, fact holds (m-1)!
                db = &db + &(&phi_pow * drift.d2h()).scale(d / fact);
                phi_pow = &phi_pow * &phi;
                fact *= m as f64;
            }
            b = &b + &phi_pow.scale(d / fact);
        }
        Self {
            kind: ClosureKind::Novel {
                order: intensities.len().saturating_sub(1),
            },
            time: t,
            coefficients: intensities.to_vec(),
            repr: Repr::Polynomial { b, db },
        }
    }

    /// Dispatches on the closure kind. `dt` is the quadrature step for the
    /// history-free closures.
    pub fn build(
        kind: ClosureKind,
        problem: &ProblemSpec,
        history: &MomentHistory,
        t: f64,
        dt: f64,
    ) -> Result<Self> {
        match kind {
            ClosureKind::Effective => Self::effective(problem, t, dt),
            ClosureKind::Sct => Self::sct(problem, t, dt),
            ClosureKind::Fox => Self::fox(problem, t, dt),
            ClosureKind::Hanggi => Self::hanggi(problem, history, t),
            ClosureKind::Novel { order } => novel_diffusion(problem, history, t, order),
        }
    }

    pub fn kind(&self) -> ClosureKind {
        self.kind
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Cached closure coefficients at this time (`[D_0 .. D_M]`, `[D_0, D_1]`
    /// for SCT, `[D]` for x-independent closures, empty for Fox).
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `(B, dB/dx)` as polynomials, when the closure is polynomial in `x`.
    pub fn polynomial(&self) -> Option<(&Poly, &Poly)> {
        match &self.repr {
            Repr::Polynomial { b, db } => Some((b, db)),
            Repr::Fox { .. } => None,
        }
    }

    pub fn b(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Polynomial { b, .. } => b.eval(x),
            Repr::Fox {
                slope,
                initial,
                elapsed,
                kernel,
                ..
            } => {
                let a = slope.eval(x);
                initial * (a * elapsed).exp() + kernel.eval(a).0
            }
        }
    }

    pub fn db(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Polynomial { db, .. } => db.eval(x),
            Repr::Fox {
                slope,
                curvature,
                initial,
                elapsed,
                kernel,
            } => {
                let c = curvature.eval(x);
                if c == 0.0 {
                    return 0.0;
                }
                let a = slope.eval(x);
                c * (initial * elapsed * (a * elapsed).exp() + kernel.eval(a).1)
            }
        }
    }

    /// `(B, dB/dx)` in one pass.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        match &self.repr {
            Repr::Polynomial { b, db } => (b.eval(x), db.eval(x)),
            Repr::Fox {
                slope,
                curvature,
                initial,
                elapsed,
                kernel,
            } => {
                let a = slope.eval(x);
                let (s, ds) = kernel.eval(a);
                let init = initial * (a * elapsed).exp();
                (init + s, curvature.eval(x) * (init * elapsed + ds))
            }
        }
    }
}

/// Order-`M` closure diffusion at grid time `t`, with the current mean slope
/// taken from the history sample at `t`.
pub fn novel_diffusion(
    problem: &ProblemSpec,
    history: &MomentHistory,
    t: f64,
    order: usize,
) -> Result<DiffusionField> {
    let d = generalized_intensities(problem, history, t, order)?;
    let r = history.samples()[history.index_of(t)?];
    Ok(DiffusionField::novel_from_intensities(&problem.drift, &d, r, t))
}
