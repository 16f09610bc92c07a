//! Distances between densities sampled on grids.

use crate::error::{param, Result};
use crate::quadrature::trapezoid_samples;

/// Piecewise-linear interpolation of `(xs, fs)` at `x`; zero outside the grid.
pub fn interpolate(xs: &[f64], fs: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 0 || x < xs[0] || x > xs[n - 1] {
        return 0.0;
    }
    let i = xs.partition_point(|&v| v <= x);
    if i == n {
        return fs[n - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = (x - x0) / (x1 - x0);
    fs[i - 1] * (1.0 - w) + fs[i] * w
}

fn check(xs: &[f64], fs: &[f64], name: &'static str) -> Result<()> {
    if xs.len() < 2 || xs.len() != fs.len() {
        return Err(param(name, "need at least two (x, f) pairs of equal length"));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(param(name, "x must be strictly increasing"));
    }
    if fs.iter().any(|v| !v.is_finite()) {
        return Err(param(name, "f contains non-finite values"));
    }
    Ok(())
}

/// `|f_a - f_b|` on `a`'s grid, with `b` interpolated onto it when the grids differ.
fn differences(xa: &[f64], fa: &[f64], xb: &[f64], fb: &[f64]) -> Result<Vec<f64>> {
    check(xa, fa, "a")?;
    check(xb, fb, "b")?;
    let same = xa.len() == xb.len() && xa.iter().zip(xb).all(|(a, b)| a == b);
    Ok(xa
        .iter()
        .zip(fa)
        .enumerate()
        .map(|(i, (&x, &f))| {
            let g = if same { fb[i] } else { interpolate(xb, fb, x) };
            (f - g).abs()
        })
        .collect())
}

/// Trapezoid integral of `|f_a - f_b|` over `a`'s grid.
pub fn l1_distance(xa: &[f64], fa: &[f64], xb: &[f64], fb: &[f64]) -> Result<f64> {
    let d = differences(xa, fa, xb, fb)?;
    Ok(trapezoid_samples(xa, &d))
}

/// `max |f_a - f_b|` over `a`'s grid.
pub fn linf_distance(xa: &[f64], fa: &[f64], xb: &[f64], fb: &[f64]) -> Result<f64> {
    Ok(differences(xa, fa, xb, fb)?.into_iter().fold(0.0, f64::max))
}
