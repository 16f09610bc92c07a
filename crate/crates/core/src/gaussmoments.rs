//! Gaussian moment combinatorics: Hermite coefficient magnitudes, the
//! Isserlis pairing sum and the response cumulants of a linear equation
//! driven by the square of a zero-mean OU process.

use crate::error::{param, Error, Result};
use crate::model::{MeanFunction, NoiseSpec};
use crate::quadrature::adaptive_simpson;

/// Largest moment order handled by the pairing enumeration.
pub const MAX_ISSERLIS_ORDER: usize = 12;
/// Largest cumulant order of the quadratic-noise response.
pub const MAX_CUMULANT_ORDER: usize = 3;

/// `|He_{n, k}| = n! / (2^k k! (n - 2k)!)`, the magnitude of the coefficient
/// of `x^{n-2k}` in the probabilists' Hermite polynomial.
pub fn hermite_abs(n: u32, k: u32) -> Result<u128> {
    if 2 * k > n {
        return Err(param("k", format!("2k = {} exceeds n = {n}", 2 * k)));
    }
    // C(n, 2k) (2k - 1)!!
    let overflow = || Error::Size(format!("H({n}, {k}) overflows 128 bits"));
    let mut binom: u128 = 1;
    for i in 0..2 * k {
        binom = binom
            .checked_mul(u128::from(n - i))
            .ok_or_else(overflow)?
            / u128::from(i + 1);
    }
    let mut dfact: u128 = 1;
    let mut j = 2 * k;
    while j > 1 {
        dfact = dfact.checked_mul(u128::from(j - 1)).ok_or_else(overflow)?;
        j -= 2;
    }
    binom.checked_mul(dfact).ok_or_else(overflow)
}

/// Covariance matrix of `Xi(s_1), ..., Xi(s_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovSpec {
    times: Vec<f64>,
    matrix: Vec<f64>,
}

impl CovSpec {
    /// Evaluates `kernel(s_i, s_j)` on all pairs of `times`.
    pub fn new(times: Vec<f64>, kernel: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let n = times.len();
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                matrix[i * n + j] = kernel(times[i], times[j]);
            }
        }
        Self::checked(times, matrix)
    }

    pub fn from_noise(times: Vec<f64>, noise: &NoiseSpec) -> Result<Self> {
        Self::new(times, |t, s| noise.cov(t, s))
    }

    /// Row-major `n x n` covariance; the time labels are `0, 1, ..., n-1`.
    pub fn from_matrix(n: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(param("cov", format!("need {} entries, got {}", n * n, matrix.len())));
        }
        Self::checked((0..n).map(|i| i as f64).collect(), matrix)
    }

    fn checked(times: Vec<f64>, matrix: Vec<f64>) -> Result<Self> {
        let n = times.len();
        for i in 0..n {
            if !(matrix[i * n + i] > 0.0) {
                return Err(param("cov", format!("diagonal entry {i} is not positive")));
            }
            for j in 0..i {
                let (a, b) = (matrix[i * n + j], matrix[j * n + i]);
                if !a.is_finite() || (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1e-300) {
                    return Err(param("cov", format!("entries ({i}, {j}) break symmetry")));
                }
            }
        }
        Ok(Self { times, matrix })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.len() + j]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }
}

/// `(n - 1)!!` for even `n`, zero for odd `n`.
pub fn pairing_count(n: usize) -> u128 {
    if n % 2 == 1 {
        return 0;
    }
    (1..n).step_by(2).map(|k| k as u128).product()
}

/// All perfect pairings of `0..n`, each as a list of index pairs.
pub fn perfect_pairings(n: usize) -> Result<Vec<Vec<(usize, usize)>>> {
    check_order(n)?;
    let mut out = Vec::new();
    if n % 2 == 0 {
        let mut free: Vec<usize> = (0..n).collect();
        let mut current = Vec::with_capacity(n / 2);
        collect_pairings(&mut free, &mut current, &mut out);
    }
    Ok(out)
}

fn collect_pairings(
    free: &mut Vec<usize>,
    current: &mut Vec<(usize, usize)>,
    out: &mut Vec<Vec<(usize, usize)>>,
) {
    if free.is_empty() {
        out.push(current.clone());
        return;
    }
    let first = free.remove(0);
    for idx in 0..free.len() {
        let partner = free.remove(idx);
        current.push((first, partner));
        collect_pairings(free, current, out);
        current.pop();
        free.insert(idx, partner);
    }
    free.insert(0, first);
}

fn check_order(n: usize) -> Result<()> {
    if n > MAX_ISSERLIS_ORDER {
        return Err(Error::Size(format!(
            "order {n} exceeds the pairing limit {MAX_ISSERLIS_ORDER}"
        )));
    }
    Ok(())
}

/// `E[Xi(s_1) ... Xi(s_n)]` for a zero-mean Gaussian process: the sum over
/// perfect pairings of the products of pair covariances.
pub fn isserlis(cov: &CovSpec) -> Result<f64> {
    let n = cov.len();
    check_order(n)?;
    if n % 2 == 1 {
        return Ok(0.0);
    }
    fn pair_sum(cov: &CovSpec, free: &mut Vec<usize>) -> f64 {
        if free.is_empty() {
            return 1.0;
        }
        let first = free.remove(0);
        let mut total = 0.0;
        for idx in 0..free.len() {
            let partner = free.remove(idx);
            total += cov.get(first, partner) * pair_sum(cov, free);
            free.insert(idx, partner);
        }
        free.insert(0, first);
        total
    }
    let mut free: Vec<usize> = (0..n).collect();
    Ok(pair_sum(cov, &mut free))
}

fn zero_mean_ou(noise: &NoiseSpec) -> Result<(f64, f64)> {
    match noise {
        NoiseSpec::Ou {
            intensity,
            corr_time,
            mean,
        } => {
            if *mean != MeanFunction::Constant(0.0) {
                return Err(param("noise.mean", "quadratic excitation needs a zero-mean kernel"));
            }
            Ok((*intensity, *corr_time))
        }
        NoiseSpec::Tabulated { .. } => Err(Error::UnsupportedNoise(
            "quadratic cumulants need an OU kernel".into(),
        )),
    }
}

/// Default number of grid intervals for the order-`n` integral.
fn default_intervals(order: usize) -> usize {
    match order {
        2 => 1600,
        _ => 160,
    }
}

/// Cumulant of order `order` of `X(t)` for `dX/dt = eta X + kappa Xi^2(t)`,
/// `X(t0 = 0) = x0`, with `Xi` the zero-mean OU process of `noise`.
///
/// Order 1 uses adaptive quadrature. Orders 2 and 3 use nested trapezoid
/// sums on the ordered simplex (the cyclic covariance product is symmetric
/// for these orders, so the kernel's kink stays on the simplex faces) with
/// one Richardson step between `n` and `2n` intervals.
pub fn quadratic_cumulant(
    eta: f64,
    kappa: f64,
    noise: &NoiseSpec,
    x0: f64,
    order: usize,
    t: f64,
) -> Result<f64> {
    if order < 2 {
        return quadratic_cumulant_with(eta, kappa, noise, x0, order, 0.0, t, 0);
    }
    let n = default_intervals(order);
    let coarse = quadratic_cumulant_with(eta, kappa, noise, x0, order, 0.0, t, n)?;
    let fine = quadratic_cumulant_with(eta, kappa, noise, x0, order, 0.0, t, 2 * n)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// As [`quadratic_cumulant`] from `t0` with a plain trapezoid on
/// `intervals` uniform intervals (ignored for order 1).
#[allow(clippy::too_many_arguments)]
pub fn quadratic_cumulant_with(
    eta: f64,
    kappa: f64,
    noise: &NoiseSpec,
    x0: f64,
    order: usize,
    t0: f64,
    t: f64,
    intervals: usize,
) -> Result<f64> {
    if !(eta < 0.0) {
        return Err(param("eta", "must be negative"));
    }
    if order == 0 {
        return Err(param("order", "cumulant orders start at 1"));
    }
    if order > MAX_CUMULANT_ORDER {
        return Err(Error::Size(format!(
            "cumulant order {order} exceeds {MAX_CUMULANT_ORDER}"
        )));
    }
    if !(t >= t0) {
        return Err(param("t", "must not precede t0"));
    }
    let (d, tau) = zero_mean_ou(noise)?;
    let var = d / tau;
    let decay = |s: f64| (eta * (t - s)).exp();
    if order == 1 {
        let integral = adaptive_simpson(&|s: f64| var * decay(s), t0, t, 1e-12);
        return Ok(x0 * decay(t0) + kappa * integral);
    }
    if t == t0 || kappa == 0.0 {
        return Ok(0.0);
    }
    if intervals < 1 {
        return Err(param("intervals", "need at least one interval"));
    }
    let h = (t - t0) / intervals as f64;
    let s: Vec<f64> = (0..=intervals).map(|i| t0 + i as f64 * h).collect();
    let e: Vec<f64> = s.iter().map(|&v| decay(v)).collect();
    let c = |i: usize, j: usize| var * (-(i.abs_diff(j) as f64) * h / tau).exp();
    // trapezoid weight of node j on [t0, s_i]
    let w = |j: usize, i: usize| if j == 0 || j == i { 0.5 * h } else { h };
    let simplex = match order {
        2 => {
            let mut total = 0.0;
            for i in 1..=intervals {
                let inner: f64 = (0..=i).map(|j| w(j, i) * c(i, j).powi(2) * e[j]).sum();
                total += w(i, intervals) * e[i] * inner;
            }
            total
        }
        _ => {
            let mut total = 0.0;
            for i in 1..=intervals {
                let mut mid = 0.0;
                for j in 0..=i {
                    let inner: f64 = if j == 0 {
                        0.0
                    } else {
                        (0..=j).map(|k| w(k, j) * c(j, k) * c(k, i) * e[k]).sum()
                    };
                    mid += w(j, i) * c(i, j) * e[j] * inner;
                }
                total += w(i, intervals) * e[i] * mid;
            }
            total
        }
    };
    let factorial = (1..=order).product::<usize>() as f64;
    let prefactor = 2f64.powi(order as i32 - 1) * (1..order).product::<usize>() as f64;
    Ok(prefactor * kappa.powi(order as i32) * factorial * simplex)
}
