//! General equilibration bounds for a single-particle state.
//!
//! For a projector observable the uniform time average of the squared
//! distinguishability over `[0, T]` is bounded by
//! `(c1/d_eff) (D_G + c2 n_max d / T)`.

use std::f64::consts::{E, PI};

use crate::quad;
use crate::spectral::{self, Signal, SpectralSystem, StateSP};
use crate::{Error, Exec, Result};

/// `e sqrt(pi) / 2`.
pub const C1: f64 = E * 1.772_453_850_905_516 / 2.0;
/// `4 sqrt(pi)`.
pub const C2: f64 = 4.0 * 1.772_453_850_905_516;

/// Level populations `tr[sigma P_E]`.
pub fn level_populations(sys: &SpectralSystem, s: &StateSP) -> Result<Vec<f64>> {
    crate::error::check_dim(sys.dim(), s.dim())?;
    let mut diag = vec![0.0; sys.dim()];
    for (w, v) in s.components() {
        let a = sys.to_eigen(v);
        for (k, x) in a.iter().enumerate() {
            diag[k] += w * x.norm_sqr();
        }
    }
    let lv = sys.levels(spectral::EPS_GAP);
    Ok(lv.ranges.iter().map(|r| diag[r.clone()].iter().sum()).collect())
}

/// `1 / sum_E (tr[sigma P_E])^2`.
pub fn effective_dimension(sys: &SpectralSystem, s: &StateSP) -> Result<f64> {
    let pops = level_populations(sys, s)?;
    Ok(1.0 / pops.iter().map(|p| p * p).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub d: usize,
    pub d_eff: f64,
    pub gap_degeneracy: usize,
    pub level_degeneracy: usize,
    pub n_max: f64,
}

/// How `n_max` is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityEstimate {
    /// Eigenvalue histogram with `ceil(sqrt(d))` bins.
    Histogram,
    /// A known (analytic or truncated) maximal density.
    Value(f64),
}

pub fn bound_inputs(sys: &SpectralSystem, s: &StateSP, density: DensityEstimate) -> Result<BoundInputs> {
    let gaps = spectral::gap_structure(sys, spectral::EPS_GAP)?;
    let n_max = match density {
        DensityEstimate::Histogram => {
            let bins = (sys.dim() as f64).sqrt().ceil() as usize;
            spectral::density_of_states(sys, bins.max(2))?.n_max
        }
        DensityEstimate::Value(v) => v,
    };
    Ok(BoundInputs {
        d: sys.dim(),
        d_eff: effective_dimension(sys, s)?,
        gap_degeneracy: gaps.max_gap_degeneracy,
        level_degeneracy: gaps.max_level_degeneracy,
        n_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub t: f64,
    pub c1: f64,
    pub c2: f64,
    /// `c1 D_G / d_eff`.
    pub gap_term: f64,
    /// `c1 c2 n_max d / (d_eff T)`.
    pub time_term: f64,
    pub bound: f64,
}

/// Evaluates the bound at averaging time `t` (`f64::INFINITY` allowed).
pub fn equilibration_bound(inputs: BoundInputs, t: f64) -> Result<BoundReport> {
    if !(t > 0.0) {
        return Err(Error::invalid("averaging time must be positive"));
    }
    let gap_term = C1 * inputs.gap_degeneracy as f64 / inputs.d_eff;
    let time_term = if t.is_infinite() { 0.0 } else { C1 * C2 * inputs.n_max * inputs.d as f64 / (inputs.d_eff * t) };
    Ok(BoundReport { inputs, t, c1: C1, c2: C2, gap_term, time_term, bound: gap_term + time_term })
}

/// `sqrt(c1 n_d D_G / N)`: the long-time bound on the average
/// distinguishability for `N` particles in orthogonal orbitals.
pub fn coarse_grained_bound(level_degeneracy: usize, gap_degeneracy: usize, n: f64) -> f64 {
    (C1 * level_degeneracy as f64 * gap_degeneracy as f64 / n).sqrt()
}

/// Smallest `T` at which the bound drops to `eps^2`.
pub fn timescale_estimate(inputs: BoundInputs, eps: f64) -> Result<f64> {
    let denom = inputs.d_eff * eps * eps - C1 * inputs.gap_degeneracy as f64;
    if !(denom > 0.0) {
        return Err(Error::precondition(format!(
            "bound cannot certify equilibration: c1 D_G / d_eff = {:.4} is not below eps^2 = {:.4}",
            C1 * inputs.gap_degeneracy as f64 / inputs.d_eff,
            eps * eps
        )));
    }
    Ok(C1 * C2 * inputs.n_max * inputs.d as f64 / denom)
}

/// Uniform average of `(value - constant)^2` over `[0, t]`. When the
/// signal is periodic with the given period, whole periods are averaged
/// exactly and only the remainder is sampled.
pub fn uniform_mean_square(sig: &Signal, t: f64, period: Option<f64>, exec: Exec) -> f64 {
    let (full, rest) = match period {
        Some(p) if p > 0.0 && t > p => {
            let q = (t / p).floor();
            (q * p, t - q * p)
        }
        _ => (0.0, t),
    };
    let mut integral = full * sig.mean_square_deviation();
    if rest > 0.0 {
        let n = spectral::required_samples(rest, sig.max_freq(), 512);
        let vals = sig.grid_values(0.0, rest, n, exec);
        let sq: Vec<f64> = vals.iter().map(|v| (v - sig.constant).powi(2)).collect();
        integral += quad::trapezoid(&sq, rest / (n - 1) as f64);
    }
    integral / t
}

/// Gaussian weight `(e/T) exp(-4 (t - T/2)^2 / T^2)`; at least `1/T` on
/// `[0, T]`.
pub fn weight(t: f64, big_t: f64) -> f64 {
    let u = t - 0.5 * big_t;
    E / big_t * (-4.0 * u * u / (big_t * big_t)).exp()
}

#[derive(Debug, Clone, Copy)]
pub struct WeightedAverage {
    /// `|int weight(t) e^{i g t} dt|` by quadrature.
    pub numeric: f64,
    /// `c1 exp(-g^2 T^2 / 16)`.
    pub analytic: f64,
    /// `|(1/T) int_0^T e^{i g t} dt|` by quadrature.
    pub uniform: f64,
}

impl WeightedAverage {
    pub fn consistent(&self, tol: f64) -> bool {
        (self.numeric - self.analytic).abs() <= tol
    }

    pub fn uniform_dominated(&self) -> bool {
        self.uniform <= self.analytic
    }
}

pub fn weighted_average_check(gap: f64, big_t: f64) -> Result<WeightedAverage> {
    if !(big_t > 0.0) || !gap.is_finite() {
        return Err(Error::invalid("need T > 0 and a finite gap"));
    }
    let reach = 4.0 * big_t;
    let (lo, hi) = (0.5 * big_t - reach, 0.5 * big_t + reach);
    let panels = 4 + (gap.abs() * (hi - lo) / PI).ceil() as usize;
    let re = quad::integrate(|t| weight(t, big_t) * (gap * t).cos(), lo, hi, 1e-13, panels)?;
    let im = quad::integrate(|t| weight(t, big_t) * (gap * t).sin(), lo, hi, 1e-13, panels)?;
    let upanels = 2 + (gap.abs() * big_t / PI).ceil() as usize;
    let ure = quad::integrate(|t| (gap * t).cos(), 0.0, big_t, 1e-13 * big_t, upanels)?;
    let uim = quad::integrate(|t| (gap * t).sin(), 0.0, big_t, 1e-13 * big_t, upanels)?;
    Ok(WeightedAverage {
        numeric: re.hypot(im),
        analytic: C1 * (-gap * gap * big_t * big_t / 16.0).exp(),
        uniform: ure.hypot(uim) / big_t,
    })
}

/// Uniform and Gaussian-weighted averages of a nonnegative function; the
/// weight dominates `1/T` on `[0, T]`, so the first never exceeds the
/// second.
pub fn dominance_check<F: Fn(f64) -> f64>(f: F, big_t: f64, panels: usize) -> Result<(f64, f64)> {
    let uniform = quad::integrate(&f, 0.0, big_t, 1e-12, panels)? / big_t;
    let reach = 4.0 * big_t;
    let weighted = quad::integrate(|t| weight(t, big_t) * f(t), 0.5 * big_t - reach, 0.5 * big_t + reach, 1e-12, 8 * panels)?;
    Ok((uniform, weighted))
}
