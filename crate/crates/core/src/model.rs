//! The random initial-value problem: polynomial drift, additive coloured
//! Gaussian excitation, Gaussian initial value and their cross-covariance.

use crate::error::{param, Error, Result};
use crate::poly::Poly;

/// Polynomial drift `h(x)` with cached first and second derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    h: Poly,
    dh: Poly,
    d2h: Poly,
}

impl DriftSpec {
    /// Coefficients in ascending degree.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(param("drift", "coefficients must be finite"));
        }
        let h = Poly::new(coeffs);
        if h.degree() < 1 {
            return Err(param("drift", "polynomial degree must be at least 1"));
        }
        let dh = h.derivative();
        let d2h = dh.derivative();
        Ok(Self { h, dh, d2h })
    }

    /// `h(x) = eta x`
    pub fn linear(eta: f64) -> Result<Self> {
        Self::new(vec![0.0, eta])
    }

    /// Normalized bistable drift `h(x) = x - x^3`.
    pub fn bistable() -> Self {
        Self::new(vec![0.0, 1.0, 0.0, -1.0]).expect("valid bistable drift")
    }

    pub fn h(&self) -> &Poly {
        &self.h
    }

    pub fn dh(&self) -> &Poly {
        &self.dh
    }

    pub fn d2h(&self) -> &Poly {
        &self.d2h
    }

    pub fn degree(&self) -> usize {
        self.h.degree()
    }

    /// `(h, h', h'')` at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        (self.h.eval(x), self.dh.eval(x), self.d2h.eval(x))
    }

    /// `Some(eta)` when the drift is exactly `eta x`.
    pub fn linear_rate(&self) -> Option<f64> {
        (self.h.degree() == 1 && self.h.coeff(0) == 0.0).then(|| self.h.coeff(1))
    }

    /// Odd degree with negative leading coefficient (or linear with negative slope).
    pub fn is_globally_stable(&self) -> bool {
        let d = self.h.degree();
        d % 2 == 1 && self.h.coeff(d) < 0.0
    }
}

/// Excitation mean `m_Xi(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanFunction {
    Constant(f64),
    /// Piecewise-linear table, held constant outside its range.
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl MeanFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            MeanFunction::Constant(m) => *m,
            MeanFunction::Table { times, values } => interp_linear(times, values, t),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            MeanFunction::Constant(m) if !m.is_finite() => {
                Err(param("noise.mean", "must be finite"))
            }
            MeanFunction::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(param("noise.mean", "table needs matching non-empty columns"));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(param("noise.mean", "table times must increase strictly"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

pub(crate) fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}

/// Gaussian excitation: an Ornstein-Uhlenbeck kernel or a tabulated covariance.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// `C(t, s) = (D / tau) exp(-|t - s| / tau)`
    Ou {
        intensity: f64,
        corr_time: f64,
        mean: MeanFunction,
    },
    /// Covariance sampled on a square grid (row-major), bilinear in between.
    Tabulated {
        grid: Vec<f64>,
        cov: Vec<f64>,
        mean: MeanFunction,
    },
}

impl NoiseSpec {
    pub fn ou(intensity: f64, corr_time: f64, mean: f64) -> Result<Self> {
        let spec = NoiseSpec::Ou {
            intensity,
            corr_time,
            mean: MeanFunction::Constant(mean),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Zero-mean excitation of the normalized bistable problem, whose kernel is
    /// `(D~/tau~) exp(-2|t - s|/tau~)`, i.e. an OU process with `D = D~/2`,
    /// `tau = tau~/2`.
    pub fn normalized_ou(d_tilde: f64, tau_tilde: f64) -> Result<Self> {
        if !(d_tilde > 0.0) || !(tau_tilde > 0.0) {
            return Err(param("noise", "normalized intensity and correlation time must be positive"));
        }
        Self::ou(0.5 * d_tilde, 0.5 * tau_tilde, 0.0)
    }

    pub fn tabulated(grid: Vec<f64>, cov: Vec<f64>, mean: MeanFunction) -> Result<Self> {
        let spec = NoiseSpec::Tabulated { grid, cov, mean };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseSpec::Ou {
                intensity,
                corr_time,
                mean,
            } => {
                if !(*intensity > 0.0) || !intensity.is_finite() {
                    return Err(param("noise.intensity", "must be positive and finite"));
                }
                if !(*corr_time > 0.0) || !corr_time.is_finite() {
                    return Err(param("noise.corr_time", "must be positive and finite"));
                }
                mean.validate()
            }
            NoiseSpec::Tabulated { grid, cov, mean } => {
                let n = grid.len();
                if n < 2 {
                    return Err(param("noise.grid", "needs at least two nodes"));
                }
                if grid.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(param("noise.grid", "nodes must increase strictly"));
                }
                if cov.len() != n * n {
                    return Err(param("noise.cov", format!("expected {} entries", n * n)));
                }
                for i in 0..n {
                    if !(cov[i * n + i] > 0.0) {
                        return Err(param("noise.cov", format!("diagonal entry {i} must be positive")));
                    }
                    for j in 0..i {
                        if cov[i * n + j] != cov[j * n + i] {
                            return Err(param("noise.cov", format!("not symmetric at ({i}, {j})")));
                        }
                    }
                }
                mean.validate()
            }
        }
    }

    /// Excitation autocovariance `C(t, s)`.
    pub fn cov(&self, t: f64, s: f64) -> f64 {
        match self {
            NoiseSpec::Ou {
                intensity,
                corr_time,
                ..
            } => intensity / corr_time * (-(t - s).abs() / corr_time).exp(),
            NoiseSpec::Tabulated { grid, cov, .. } => bilinear(grid, cov, t, s),
        }
    }

    pub fn variance(&self, t: f64) -> f64 {
        self.cov(t, t)
    }

    pub fn mean(&self, t: f64) -> f64 {
        match self {
            NoiseSpec::Ou { mean, .. } | NoiseSpec::Tabulated { mean, .. } => mean.eval(t),
        }
    }

    /// `(D, tau)` for an OU kernel.
    pub fn ou_params(&self) -> Option<(f64, f64)> {
        match self {
            NoiseSpec::Ou {
                intensity,
                corr_time,
                ..
            } => Some((*intensity, *corr_time)),
            NoiseSpec::Tabulated { .. } => None,
        }
    }

    /// Largest time at which the kernel is defined without extrapolation.
    fn covered_until(&self) -> f64 {
        match self {
            NoiseSpec::Ou { .. } => f64::INFINITY,
            NoiseSpec::Tabulated { grid, .. } => *grid.last().unwrap(),
        }
    }
}

/// Bilinear interpolation on a square grid, clamped at the edges.
/// Symmetric tables give symmetric results.
fn bilinear(grid: &[f64], cov: &[f64], t: f64, s: f64) -> f64 {
    let n = grid.len();
    let locate = |x: f64| -> (usize, f64) {
        if x <= grid[0] {
            return (0, 0.0);
        }
        if x >= grid[n - 1] {
            return (n - 2, 1.0);
        }
        let i = grid.partition_point(|&g| g <= x) - 1;
        (i, (x - grid[i]) / (grid[i + 1] - grid[i]))
    };
    let (i, a) = locate(t);
    let (j, b) = locate(s);
    let c = |r: usize, q: usize| cov[r * n + q];
    (1.0 - a) * (1.0 - b) * c(i, j)
        + a * (1.0 - b) * c(i + 1, j)
        + (1.0 - a) * b * c(i, j + 1)
        + a * b * c(i + 1, j + 1)
}

/// Cross-covariance `C_X0Xi(t) = c0 exp(-(t - t0) / tau_c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossCovariance {
    pub amplitude: f64,
    pub decay_time: f64,
}

impl CrossCovariance {
    pub fn none() -> Self {
        Self {
            amplitude: 0.0,
            decay_time: 1.0,
        }
    }

    pub fn eval(&self, t: f64, t0: f64) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        self.amplitude * (-(t - t0) / self.decay_time).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialSpec {
    pub mean: f64,
    pub variance: f64,
    pub cross: CrossCovariance,
}

impl InitialSpec {
    pub fn gaussian(mean: f64, std: f64) -> Self {
        Self {
            mean,
            variance: std * std,
            cross: CrossCovariance::none(),
        }
    }

    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Initial Gaussian density.
    pub fn density(&self, x: f64) -> f64 {
        gaussian_pdf(x, self.mean, self.variance)
    }
}

pub fn gaussian_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / variance).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

/// The additive scalar random initial-value problem
/// `dX/dt = h(X) + kappa Xi(t)`, `X(t0) = X0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub drift: DriftSpec,
    pub coupling: f64,
    pub noise: NoiseSpec,
    pub initial: InitialSpec,
    pub t0: f64,
    pub horizon: f64,
}

impl ProblemSpec {
    pub fn new(
        drift: DriftSpec,
        coupling: f64,
        noise: NoiseSpec,
        initial: InitialSpec,
        t0: f64,
        horizon: f64,
    ) -> Result<Self> {
        let spec = Self {
            drift,
            coupling,
            noise,
            initial,
            t0,
            horizon,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.coupling.is_finite() {
            return Err(param("coupling", "must be finite"));
        }
        if !(self.horizon > self.t0) || !self.horizon.is_finite() || !self.t0.is_finite() {
            return Err(param("horizon", "must exceed t0"));
        }
        if !(self.initial.variance > 0.0) || !self.initial.mean.is_finite() {
            return Err(param("initial", "variance must be positive and mean finite"));
        }
        let cross = self.initial.cross;
        if !cross.amplitude.is_finite() {
            return Err(param("initial.cross_amplitude", "must be finite"));
        }
        if !(cross.decay_time > 0.0) {
            return Err(param("initial.cross_decay", "must be positive"));
        }
        self.noise.validate()?;
        if self.noise.covered_until() < self.horizon {
            return Err(param("noise.grid", "tabulated kernel must cover the time horizon"));
        }
        self.check_cross_covariance()
    }

    /// Cauchy-Schwarz admissibility `|C_X0Xi(t)| <= sigma_X0 sqrt(C(t, t))`
    /// on a uniform sample of `[t0, T]`.
    pub fn check_cross_covariance(&self) -> Result<()> {
        if self.initial.cross.amplitude == 0.0 {
            return Ok(());
        }
        let n = 400;
        for i in 0..=n {
            let t = self.t0 + (self.horizon - self.t0) * i as f64 / n as f64;
            let c = self.cross_cov(t).abs();
            let bound = self.initial.std() * self.noise.variance(t).sqrt();
            if c > bound * (1.0 + 1e-12) {
                return Err(param(
                    "initial.cross_amplitude",
                    format!("|C_X0Xi({t})| = {c} exceeds Cauchy-Schwarz bound {bound}"),
                ));
            }
        }
        Ok(())
    }

    pub fn cross_cov(&self, t: f64) -> f64 {
        self.initial.cross.eval(t, self.t0)
    }

    /// Drift coefficient of the pdf equation, `q(x, t) = h(x) + kappa m_Xi(t)`.
    pub fn drift_coefficient(&self, t: f64) -> Poly {
        &self.drift.h + &Poly::constant(self.coupling * self.noise.mean(t))
    }

    pub fn require_linear(&self) -> Result<f64> {
        self.drift.linear_rate().ok_or_else(|| {
            Error::ClosureMismatch("drift must be linear (h(x) = eta x)".into())
        })
    }

    /// Normalized bistable benchmark: `h = x - x^3`, unit coupling,
    /// zero-mean OU excitation with normalized `(D~, tau~)` and a centred
    /// Gaussian initial value.
    pub fn normalized_bistable(
        d_tilde: f64,
        tau_tilde: f64,
        initial_std: f64,
        horizon: f64,
    ) -> Result<Self> {
        Self::new(
            DriftSpec::bistable(),
            1.0,
            NoiseSpec::normalized_ou(d_tilde, tau_tilde)?,
            InitialSpec::gaussian(0.0, initial_std),
            0.0,
            horizon,
        )
    }
}

/// OU autocovariance `(D / tau) exp(-|t - s| / tau)`.
pub fn ou_autocov(intensity: f64, corr_time: f64, t: f64, s: f64) -> Result<f64> {
    if !(intensity > 0.0) {
        return Err(param("intensity", "must be positive"));
    }
    if !(corr_time > 0.0) {
        return Err(param("corr_time", "must be positive"));
    }
    Ok(intensity / corr_time * (-(t - s).abs() / corr_time).exp())
}

/// Dimensionless `(D~, tau~)` of the bistable problem
/// `dX/dt = eta1 X + eta3 X^3 + kappa Xi` under OU excitation.
pub fn normalize_bistable(
    eta1: f64,
    eta3: f64,
    coupling: f64,
    d_ou: f64,
    tau_cor: f64,
) -> Result<(f64, f64)> {
    if !(eta1 > 0.0) {
        return Err(param("eta1", "must be positive"));
    }
    if !(eta3 < 0.0) {
        return Err(param("eta3", "must be negative"));
    }
    if !(d_ou > 0.0) {
        return Err(param("d_ou", "must be positive"));
    }
    if !(tau_cor > 0.0) {
        return Err(param("tau_cor", "must be positive"));
    }
    let tau_tilde = 2.0 * eta1 * tau_cor;
    let d_tilde = 2.0 * coupling * coupling * d_ou * eta3.abs() / (eta1 * eta1);
    Ok((d_tilde, tau_tilde))
}
