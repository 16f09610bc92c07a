//! Cover, partition-of-unity functions and Legendre-enriched shape functions.

use crate::error::{param, Result};

/// Uniform overlapping cover of `[lo, hi]` by `K` subdomains of length `2h`,
/// `h = (hi - lo) / (K + 1)`. Subdomain `k` (0-based) spans
/// `[lo + k h, lo + (k + 2) h]`.
///
/// The `K + 1` cells `[lo + c h, lo + (c + 1) h]` are the overlap regions:
/// cell `c` holds the left half of subdomain `c` and the right half of
/// subdomain `c - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cover {
    lo: f64,
    hi: f64,
    count: usize,
    h: f64,
}

impl Cover {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(param("domain", "bounds must be finite with lo < hi"));
        }
        if count == 0 {
            return Err(param("subdomains", "need at least one subdomain"));
        }
        Ok(Self {
            lo,
            hi,
            count,
            h: (hi - lo) / (count as f64 + 1.0),
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn subdomains(&self) -> usize {
        self.count
    }

    pub fn cells(&self) -> usize {
        self.count + 1
    }

    /// Half-overlap `h`.
    pub fn half_width(&self) -> f64 {
        self.h
    }

    pub fn bounds(&self, k: usize) -> (f64, f64) {
        let a = self.lo + k as f64 * self.h;
        (a, a + 2.0 * self.h)
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 1.0) * self.h
    }

    pub fn cell_bounds(&self, c: usize) -> (f64, f64) {
        let a = self.lo + c as f64 * self.h;
        (a, a + self.h)
    }

    /// Reference coordinate of `x` in subdomain `k`, in `[-1, 1]` on its support.
    pub fn xi(&self, k: usize, x: f64) -> f64 {
        (x - self.center(k)) / self.h
    }

    /// Cell containing `x` (clamped to the domain), or `None` outside it.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x <= self.hi) {
            return None;
        }
        Some((((x - self.lo) / self.h) as usize).min(self.count))
    }

    /// Subdomains whose support meets cell `c`.
    pub fn cell_subdomains(&self, c: usize) -> impl Iterator<Item = usize> {
        let first = c.saturating_sub(1);
        let last = c.min(self.count - 1);
        first..=last
    }
}

/// Coefficients `[a0, a1, ...]` of `g_s(z) = a0 + sum_i a_i z^{2i-1}`.
pub fn pu_coefficients(s: usize) -> Result<&'static [f64]> {
    match s {
        1 => Ok(&[0.5, 0.5]),
        2 => Ok(&[0.5, 0.75, -0.25]),
        3 => Ok(&[0.5, 15.0 / 16.0, -5.0 / 8.0, 3.0 / 16.0]),
        _ => Err(param("smoothness", format!("order {s} not in {{1, 2, 3}}"))),
    }
}

/// `(g(z), g'(z))`
fn g_with_derivative(a: &[f64], z: f64) -> (f64, f64) {
    let z2 = z * z;
    let mut g = a[0];
    let mut dg = 0.0;
    let mut odd = z;
    let mut even = 1.0;
    for (i, &c) in a.iter().enumerate().skip(1) {
        let p = (2 * i - 1) as f64;
        g += c * odd;
        dg += c * p * even;
        odd *= z2;
        even *= z2;
    }
    (g, dg)
}

/// `(phi(xi), phi'(xi))` of the mother function with coefficients `a`.
pub(crate) fn mother_with_derivative(a: &[f64], xi: f64) -> (f64, f64) {
    if !(-1.0..=1.0).contains(&xi) {
        return (0.0, 0.0);
    }
    if xi <= 0.0 {
        let (g, dg) = g_with_derivative(a, 2.0 * xi + 1.0);
        (g, 2.0 * dg)
    } else {
        let (g, dg) = g_with_derivative(a, 1.0 - 2.0 * xi);
        (g, -2.0 * dg)
    }
}

/// Mother PU function of smoothness `s`: `g_s(2 xi + 1)` on `[-1, 0]`,
/// `g_s(1 - 2 xi)` on `[0, 1]`, zero outside.
pub fn pu_mother(s: usize, xi: f64) -> Result<f64> {
    Ok(mother_with_derivative(pu_coefficients(s)?, xi).0)
}

pub fn pu_mother_derivative(s: usize, xi: f64) -> Result<f64> {
    Ok(mother_with_derivative(pu_coefficients(s)?, xi).1)
}

/// Legendre polynomial `P_n(xi)`.
pub fn legendre(n: usize, xi: f64) -> f64 {
    let mut values = vec![0.0; n + 1];
    legendre_table(xi, &mut values, &mut vec![0.0; n + 1]);
    values[n]
}

/// `P_0..P_n` and their derivatives at `xi`, `n = values.len() - 1`.
pub(crate) fn legendre_table(xi: f64, values: &mut [f64], derivs: &mut [f64]) {
    let n = values.len();
    if n == 0 {
        return;
    }
    values[0] = 1.0;
    derivs[0] = 0.0;
    if n == 1 {
        return;
    }
    values[1] = xi;
    derivs[1] = 1.0;
    for k in 1..n - 1 {
        let kf = k as f64;
        values[k + 1] = ((2.0 * kf + 1.0) * xi * values[k] - kf * values[k - 1]) / (kf + 1.0);
        derivs[k + 1] = derivs[k - 1] + (2.0 * kf + 1.0) * values[k];
    }
}

/// PU functions of one smoothness order with Legendre local bases of
/// `sizes[k]` functions on subdomain `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PuBasis {
    smoothness: usize,
    coeffs: &'static [f64],
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl PuBasis {
    pub fn new(smoothness: usize, sizes: Vec<usize>) -> Result<Self> {
        let coeffs = pu_coefficients(smoothness)?;
        if sizes.is_empty() || sizes.iter().any(|&m| m == 0) {
            return Err(param("basis_size", "every subdomain needs at least one local function"));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        for &m in &sizes {
            offsets.push(offsets.last().unwrap() + m);
        }
        Ok(Self {
            smoothness,
            coeffs,
            sizes,
            offsets,
        })
    }

    pub fn uniform(smoothness: usize, subdomains: usize, size: usize) -> Result<Self> {
        Self::new(smoothness, vec![size; subdomains])
    }

    pub fn smoothness(&self) -> usize {
        self.smoothness
    }

    pub fn coefficients(&self) -> &[f64] {
        self.coeffs
    }

    pub fn subdomains(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, k: usize) -> usize {
        self.sizes[k]
    }

    pub fn max_size(&self) -> usize {
        *self.sizes.iter().max().unwrap()
    }

    pub fn total(&self) -> usize {
        self.offsets[self.sizes.len()]
    }

    /// Global index of local function `mu` (0-based) on subdomain `k`.
    pub fn index(&self, k: usize, mu: usize) -> usize {
        self.offsets[k] + mu
    }

    /// Degree in `x` of the shape functions, piecewise on each cell.
    pub fn shape_degree(&self) -> usize {
        2 * self.smoothness - 1 + self.max_size() - 1
    }

    /// Values and x-derivatives of all local functions of subdomain `k` at `x`.
    pub(crate) fn local_values(
        &self,
        cover: &Cover,
        k: usize,
        x: f64,
        values: &mut [f64],
        derivs: &mut [f64],
    ) {
        let m = self.sizes[k];
        let xi = cover.xi(k, x);
        let (phi, dphi) = mother_with_derivative(self.coeffs, xi);
        legendre_table(xi.clamp(-1.0, 1.0), &mut values[..m], &mut derivs[..m]);
        let inv_h = 1.0 / cover.half_width();
        for mu in 0..m {
            let p = values[mu];
            let dp = derivs[mu];
            values[mu] = phi * p;
            derivs[mu] = (dphi * p + phi * dp) * inv_h;
        }
    }

    pub(crate) fn check_cover(&self, cover: &Cover) -> Result<()> {
        if cover.subdomains() != self.subdomains() {
            return Err(param(
                "basis",
                format!(
                    "basis has {} subdomains but cover has {}",
                    self.subdomains(),
                    cover.subdomains()
                ),
            ));
        }
        Ok(())
    }
}

/// PU function `phi_k(x)`.
pub fn pu_function(basis: &PuBasis, cover: &Cover, k: usize, x: f64) -> f64 {
    mother_with_derivative(basis.coeffs, cover.xi(k, x)).0
}

/// Shape function `u_mu^k(x) = phi(xi_k(x)) P_mu(xi_k(x))`, with `mu` 0-based.
pub fn shape_eval(basis: &PuBasis, cover: &Cover, k: usize, mu: usize, x: f64) -> f64 {
    let xi = cover.xi(k, x);
    if !(-1.0..=1.0).contains(&xi) {
        return 0.0;
    }
    mother_with_derivative(basis.coeffs, xi).0 * legendre(mu, xi)
}

/// x-derivative of [`shape_eval`].
pub fn shape_derivative(basis: &PuBasis, cover: &Cover, k: usize, mu: usize, x: f64) -> f64 {
    let xi = cover.xi(k, x);
    if !(-1.0..=1.0).contains(&xi) {
        return 0.0;
    }
    let mut v = vec![0.0; mu + 1];
    let mut d = vec![0.0; mu + 1];
    legendre_table(xi, &mut v, &mut d);
    let (phi, dphi) = mother_with_derivative(basis.coeffs, xi);
    (dphi * v[mu] + phi * d[mu]) / cover.half_width()
}
