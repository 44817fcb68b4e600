//! Quadrature: adaptive integration of smooth integrands and trapezoid
//! sums on uniform grids.

use crate::{Error, Result};

/// Integrates `f` over `[a, b]` to the requested absolute tolerance using
/// tanh-sinh quadrature on `panels` equal subintervals. Oscillatory
/// integrands should use enough panels that each holds a few periods at
/// most.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: f64, panels: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Quadrature(format!("non-finite interval [{a}, {b}]")));
    }
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let per_panel = tol / panels as f64;
    let mut total = 0.0;
    let mut err = 0.0;
    for k in 0..panels {
        let lo = a + k as f64 * h;
        let hi = if k + 1 == panels { b } else { lo + h };
        let out = quadrature::double_exponential::integrate(&f, lo, hi, per_panel);
        total += out.integral;
        err += out.error_estimate;
    }
    if !total.is_finite() || err > 100.0 * tol.max(1e-15) {
        return Err(Error::Quadrature(format!(
            "estimate {total} with error {err:.2e} on [{a}, {b}] (tolerance {tol:.1e})"
        )));
    }
    Ok(total)
}

/// Trapezoid rule for samples on a uniform grid with spacing `dt`.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            dt * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Trapezoid-weighted mean of uniformly spaced samples.
pub fn trapezoid_mean(values: &[f64]) -> f64 {
    match values.len() {
        0 => f64::NAN,
        1 => values[0],
        n => trapezoid(values, 1.0) / (n - 1) as f64,
    }
}

/// Uniform grid `t0 + i (t1 - t0)/(n - 1)`.
pub fn grid_point(t0: f64, t1: f64, n: usize, i: usize) -> f64 {
    if n <= 1 {
        t0
    } else {
        t0 + (t1 - t0) * i as f64 / (n - 1) as f64
    }
}
