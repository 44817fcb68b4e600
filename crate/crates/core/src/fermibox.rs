//! Particles released from the left half of a one-dimensional box.
//!
//! Box eigenstates `|n>` have energies `nu n^2` with `nu = pi^2/(2 m L^2)`.
//! Before release the particles fill the lowest orbitals of the left half,
//! `<n|psi_k> = sqrt(2) f(n, 2k)`, and the observable counts particles in
//! the left half, `<m|P|n> = f(m, n)`.

use std::f64::consts::PI;

use crate::bridge::Statistics;
use crate::linalg::{c, CMat, CVec};
use crate::quad;
use crate::spectral::{self, ProjectorObservable, Signal, SpectralSystem, StateSP, TimeSeries};
use crate::{Error, Exec, Result};

/// Largest allowed orbital weight lost to the basis cutoff.
pub const TRUNCATION_BUDGET: f64 = 1e-6;
/// Default timescale constant `a`.
pub const DEFAULT_A: f64 = 0.05;
/// Minimum grid size for averages and figures.
pub const MIN_SAMPLES: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxConfig {
    pub length: f64,
    pub mass: f64,
    pub n_particles: usize,
    pub statistics: Statistics,
    /// Number of box eigenstates retained; `None` picks [`default_cutoff`].
    pub basis_cutoff: Option<usize>,
}

impl BoxConfig {
    pub fn fermions(n: usize) -> Self {
        Self { length: 1.0, mass: 1.0, n_particles: n, statistics: Statistics::Fermion, basis_cutoff: None }
    }

    pub fn bosons(n: usize) -> Self {
        Self { statistics: Statistics::Boson, ..Self::fermions(n) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.mass > 0.0) || !self.length.is_finite() || !self.mass.is_finite() {
            return Err(Error::invalid("box length and mass must be positive"));
        }
        if self.n_particles == 0 {
            return Err(Error::invalid("need at least one particle"));
        }
        if let Some(cut) = self.basis_cutoff {
            if cut < 2 * self.orbitals() {
                return Err(Error::invalid(format!("basis cutoff {cut} below twice the orbital count")));
            }
        }
        Ok(())
    }

    /// Energy unit `pi^2/(2 m L^2)`.
    pub fn nu(&self) -> f64 {
        PI * PI / (2.0 * self.mass * self.length * self.length)
    }

    pub fn recurrence_time(&self) -> f64 {
        2.0 * PI / self.nu()
    }

    /// Distinct occupied orbitals: `N` for fermions, one for bosons.
    pub fn orbitals(&self) -> usize {
        match self.statistics {
            Statistics::Fermion => self.n_particles,
            Statistics::Boson => 1,
        }
    }

    pub fn cutoff(&self) -> usize {
        self.basis_cutoff.unwrap_or_else(|| default_cutoff(self.orbitals()))
    }
}

/// `sin(r pi / 2)` for integer `r`, exactly.
fn sin_half_pi(r: i64) -> f64 {
    match r.rem_euclid(4) {
        1 => 1.0,
        3 => -1.0,
        _ => 0.0,
    }
}

/// Overlap function: `<m|P|n> = f(m, n)` and `<n|psi_k> = sqrt(2) f(n, 2k)`.
pub fn overlap_f(n: u64, m: u64) -> f64 {
    if n == m {
        return 0.5;
    }
    let (n, m) = (n as i64, m as i64);
    (sin_half_pi(n - m) / (n - m) as f64 - sin_half_pi(n + m) / (n + m) as f64) / PI
}

/// `f(n, 2k)^2` for odd `n`: `(4/pi^2) 4k^2 / (n^2 - 4k^2)^2`.
pub fn overlap_sq_odd(n: u64, k: u64) -> f64 {
    let l = n as f64 * n as f64 - 4.0 * (k * k) as f64;
    (4.0 / (PI * PI)) * 4.0 * (k * k) as f64 / (l * l)
}

/// Tabulated `f(n, m)` for `1 <= n, m <= cutoff`.
#[derive(Debug, Clone)]
pub struct OverlapTable {
    pub cutoff: usize,
    values: Vec<f64>,
}

impl OverlapTable {
    pub fn new(cutoff: usize) -> Self {
        let mut values = vec![0.0; cutoff * cutoff];
        for n in 1..=cutoff {
            for m in 1..=cutoff {
                values[(n - 1) * cutoff + m - 1] = overlap_f(n as u64, m as u64);
            }
        }
        Self { cutoff, values }
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.values[(n - 1) * self.cutoff + m - 1]
    }
}

/// Weight of orbital `k` outside the first `cutoff` box states.
pub fn orbital_tail(k: usize, cutoff: usize) -> f64 {
    let kept: f64 = (1..=cutoff as u64).map(|n| 2.0 * overlap_f(n, 2 * k as u64).powi(2)).sum();
    (1.0 - kept).max(0.0)
}

/// Smallest cutoff of at least `8N` whose worst orbital tail is within
/// [`TRUNCATION_BUDGET`]. The highest orbital has the heaviest tail.
pub fn default_cutoff(orbitals: usize) -> usize {
    let k = orbitals.max(1) as u64;
    let mut cut = 8 * orbitals.max(1);
    let mut kept: f64 = (1..=cut as u64).map(|n| 2.0 * overlap_f(n, 2 * k).powi(2)).sum();
    while 1.0 - kept > TRUNCATION_BUDGET {
        cut += 1;
        kept += 2.0 * overlap_f(cut as u64, 2 * k).powi(2);
    }
    cut
}

/// Box spectrum `nu n^2`, `n = 1..cutoff`, in the box eigenbasis.
pub fn box_system(cfg: &BoxConfig) -> Result<SpectralSystem> {
    cfg.validate()?;
    let nu = cfg.nu();
    let e = (1..=cfg.cutoff()).map(|n| nu * (n * n) as f64).collect();
    SpectralSystem::diagonal(e, format!("box cutoff {}", cfg.cutoff()))
}

/// Left-half projector compressed to the first `cutoff` box states.
pub fn left_projector(cutoff: usize) -> ProjectorObservable {
    let m = CMat::from_fn(cutoff, cutoff, |i, j| c(overlap_f(i as u64 + 1, j as u64 + 1), 0.0));
    ProjectorObservable::Compressed(m)
}

/// Initial single-particle state and the worst orbital weight lost to the
/// basis cutoff. Truncated orbitals are kept as they are (not
/// renormalized), so the state matches the truncated closed form exactly.
pub fn sigma0(cfg: &BoxConfig) -> Result<(StateSP, f64)> {
    cfg.validate()?;
    let cut = cfg.cutoff();
    let orbitals = cfg.orbitals();
    let lost = orbital_tail(orbitals, cut);
    if lost > TRUNCATION_BUDGET {
        return Err(Error::Truncation {
            lost,
            budget: TRUNCATION_BUDGET,
            advice: format!("raise the basis cutoff above {cut} (default for this N is {})", default_cutoff(orbitals)),
        });
    }
    let orbital = |k: usize| {
        CVec::from_iterator(cut, (1..=cut as u64).map(|n| c(2f64.sqrt() * overlap_f(n, 2 * k as u64), 0.0)))
    };
    let state = match cfg.statistics {
        Statistics::Boson => StateSP::Pure(orbital(1)),
        Statistics::Fermion => {
            let w = 1.0 / orbitals as f64;
            StateSP::Mixed((1..=orbitals).map(|k| (w, orbital(k))).collect())
        }
    };
    Ok((state, lost))
}

/// Spectral-route signal `tr[sigma(t) P_left]`.
pub fn spectral_signal(cfg: &BoxConfig) -> Result<Signal> {
    let sys = box_system(cfg)?;
    let (s, _) = sigma0(cfg)?;
    Signal::new(&sys, &s, &left_projector(cfg.cutoff()))
}

/// Which terms of the closed-form sum are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terms {
    /// All odd `n <= cutoff`.
    Basis(usize),
    /// Odd `n = 2k + l` with `|l| <= K`.
    Band(usize),
}

/// Closed-form distinguishability as an oscillator sum:
/// `D(t) = (2/N) |sum_{n odd} sum_k cos[(n^2 - 4k^2) nu t] f(n,2k)^2|`.
/// The bosonic problem is the single-orbital case.
pub fn closed_form_signal(cfg: &BoxConfig, terms: Terms) -> Result<Signal> {
    cfg.validate()?;
    let nu = cfg.nu();
    let orbitals = cfg.orbitals() as u64;
    let scale = 2.0 / orbitals as f64;
    let mut raw = Vec::new();
    for k in 1..=orbitals {
        let (lo, hi) = match terms {
            Terms::Basis(cut) => (1, cut as u64),
            Terms::Band(kk) => ((2 * k).saturating_sub(kk as u64).max(1), 2 * k + kk as u64),
        };
        for n in (lo..=hi).filter(|n| n % 2 == 1) {
            let w = ((n * n) as f64 - (4 * k * k) as f64).abs() * nu;
            raw.push((w, scale * overlap_sq_odd(n, k), 0.0));
        }
    }
    let tol = 1e-9 * raw.iter().map(|t| t.0).fold(0.0, f64::max);
    Ok(Signal::merge(0.0, raw, tol))
}

/// `D(t)` from the closed form with the given truncation.
pub fn distinguishability_closed_form(cfg: &BoxConfig, t: f64, terms: Terms) -> Result<f64> {
    Ok(closed_form_signal(cfg, terms)?.deviation(t))
}

/// Figure-style series of `D` over `[0, T_rec/2]` from the closed form
/// at the basis cutoff.
pub fn series(cfg: &BoxConfig, samples: usize, exec: Exec) -> Result<TimeSeries> {
    let sig = closed_form_signal(cfg, Terms::Basis(cfg.cutoff()))?;
    let meta = format!("box D(t), N={}, {:?}, cutoff {}", cfg.n_particles, cfg.statistics, cfg.cutoff());
    sig.deviation_series(0.0, cfg.recurrence_time() / 2.0, samples.max(2), exec, meta)
}

/// Tail correction `mu` for band half-width `K`.
pub fn mu(n: usize, k: usize) -> f64 {
    let (n, k) = (n as f64, k as f64);
    16.0 / (PI * PI * (k + 1.0)) + 6.0 * (n.ln() + 1.0) * (k.ln() + 1.0) / (PI * PI * n)
}

/// Upper bound on the time-averaged distinguishability.
pub fn analytic_mean_bound(n: usize, a: f64, k: usize) -> f64 {
    let nf = n as f64;
    4.0 / (3.0 * PI * nf * a) + 2.0 * (PI * nf * a / 2.0).ln() / (3.0 * nf) + mu(n, k)
}

#[derive(Debug, Clone, Copy)]
pub struct MeanReport {
    pub mean: f64,
    pub bound: f64,
    pub samples: usize,
    pub within_bound: bool,
}

/// Trapezoid mean of `D` over `[0, T_rec/2]`. Fermions use the band
/// `K = N`; bosons use the basis cutoff. The grid has at least
/// [`MIN_SAMPLES`] points and eight per period of the fastest term.
pub fn time_average_d(cfg: &BoxConfig, a: f64, exec: Exec) -> Result<MeanReport> {
    let terms = match cfg.statistics {
        Statistics::Fermion => Terms::Band(cfg.n_particles),
        Statistics::Boson => Terms::Basis(cfg.cutoff()),
    };
    let sig = closed_form_signal(cfg, terms)?;
    let span = cfg.recurrence_time() / 2.0;
    let samples = spectral::required_samples(span, sig.max_freq(), MIN_SAMPLES);
    let vals = sig.grid_values(0.0, span, samples, exec);
    let dev: Vec<f64> = vals.iter().map(|v| (v - sig.constant).abs()).collect();
    let mean = quad::trapezoid_mean(&dev);
    let bound = analytic_mean_bound(cfg.orbitals(), a, cfg.orbitals());
    Ok(MeanReport { mean, bound, samples, within_bound: mean <= bound })
}

#[derive(Debug, Clone, Copy)]
pub struct EquilibrationTime {
    /// `1/(2 N a nu)`.
    pub t_eq: f64,
    /// The `1/(N a nu)` variant, twice as long.
    pub t_eq_alt: f64,
    /// `pi a / 3 + mu`, certified upper bound on `D(t_eq)`.
    pub bound: f64,
    pub d_at_t_eq: f64,
}

pub fn equilibration_time(cfg: &BoxConfig, a: f64) -> Result<EquilibrationTime> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::invalid(format!("timescale constant a = {a} must lie in (0, 1)")));
    }
    cfg.validate()?;
    let n = cfg.orbitals();
    let t_eq = 1.0 / (2.0 * n as f64 * a * cfg.nu());
    let d = distinguishability_closed_form(cfg, t_eq, Terms::Basis(cfg.cutoff()))?;
    Ok(EquilibrationTime { t_eq, t_eq_alt: 2.0 * t_eq, bound: PI * a / 3.0 + mu(n, n), d_at_t_eq: d })
}

/// Cubic box with `N = J^3` fermions filling the lowest left-half
/// orbitals: the left-half count factorizes onto the axis across the
/// partition, which carries `J` orbitals.
pub fn three_d_reduction(n_particles: usize, length: f64, mass: f64) -> Result<BoxConfig> {
    let j = (n_particles as f64).cbrt().round() as usize;
    if j == 0 || j * j * j != n_particles {
        return Err(Error::invalid(format!("{n_particles} is not a perfect cube")));
    }
    let cfg = BoxConfig { length, mass, n_particles: j, statistics: Statistics::Fermion, basis_cutoff: None };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn overlap_special_values() {
        assert_eq!(overlap_f(3, 3), 0.5);
        assert_eq!(overlap_f(1, 3), 0.0);
        assert_relative_eq!(overlap_f(1, 2).powi(2), 16.0 / (9.0 * PI * PI), epsilon = 1e-15);
        assert_relative_eq!(overlap_sq_odd(5, 3), overlap_f(5, 6).powi(2), max_relative = 1e-13);
        let table = OverlapTable::new(6);
        assert_eq!(table.get(2, 4), 0.0);
        assert_eq!(table.get(4, 4), 0.5);
        assert_eq!(table.get(2, 5), table.get(5, 2));
    }

    #[test]
    fn default_cutoff_respects_budget() {
        for n in [1, 5, 10] {
            let cut = default_cutoff(n);
            assert!(cut >= 8 * n);
            assert!(orbital_tail(n, cut) <= TRUNCATION_BUDGET);
            assert!(orbital_tail(n, cut - 1) > TRUNCATION_BUDGET || cut == 8 * n);
        }
    }

    #[test]
    fn initial_left_occupation_is_one() {
        let cfg = BoxConfig::fermions(4);
        let (s, lost) = sigma0(&cfg).unwrap();
        let p = left_projector(cfg.cutoff());
        let v = spectral::expectation_p(&s, &p).unwrap();
        assert!((v - 1.0).abs() < 2.0 * lost + 1e-12);
    }

    #[test]
    fn too_small_cutoff_is_reported() {
        let cfg = BoxConfig { basis_cutoff: Some(20), ..BoxConfig::fermions(10) };
        assert!(matches!(sigma0(&cfg), Err(Error::Truncation { .. })));
    }

    #[test]
    fn closed_form_matches_spectral_route() {
        let cfg = BoxConfig::fermions(3);
        let cf = closed_form_signal(&cfg, Terms::Basis(cfg.cutoff())).unwrap();
        let sp = spectral_signal(&cfg).unwrap();
        for &t in &[0.0, 0.01, 0.137, 0.5, 2.0] {
            assert!((cf.deviation(t) - sp.deviation(t)).abs() < 1e-10);
        }
    }

    #[test]
    fn initial_value_and_half_recurrence() {
        let cfg = BoxConfig::fermions(5);
        let sig = closed_form_signal(&cfg, Terms::Basis(cfg.cutoff())).unwrap();
        let half = cfg.recurrence_time() / 2.0;
        assert!((sig.deviation(0.0) - sig.deviation(half)).abs() < 1e-9);
        assert!((sig.deviation(0.0) - 0.5).abs() < 1e-5);
    }

    #[test]
    fn equilibration_time_scaling() {
        let a = equilibration_time(&BoxConfig::fermions(10), 0.05).unwrap();
        let b = equilibration_time(&BoxConfig::fermions(20), 0.05).unwrap();
        assert_relative_eq!(a.t_eq, 2.0 * b.t_eq, max_relative = 1e-15);
        let nu = BoxConfig::fermions(10).nu();
        assert_relative_eq!(a.t_eq * 2.0 * 10.0 * 0.05 * nu, 1.0, max_relative = 1e-15);
        assert!(equilibration_time(&BoxConfig::fermions(10), 1.5).is_err());
    }

    #[test]
    fn cube_reduction() {
        assert_eq!(three_d_reduction(8, 1.0, 1.0).unwrap().n_particles, 2);
        assert_eq!(three_d_reduction(1, 1.0, 1.0).unwrap().n_particles, 1);
        assert!(three_d_reduction(9, 1.0, 1.0).is_err());
    }

    #[test]
    fn boson_series_independent_of_n() {
        let a = series(&BoxConfig::bosons(1), 256, Exec::Sequential).unwrap();
        let b = series(&BoxConfig::bosons(50), 256, Exec::Sequential).unwrap();
        assert_eq!(a.values, b.values);
    }
}
