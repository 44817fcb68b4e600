//! Bosons released from the ground state of a harmonic trap of frequency
//! `omega0`, either into a square well or into a weaker harmonic trap.
//! All bosons share one orbital, so every quantity is independent of `N`.

use std::f64::consts::PI;

use crate::linalg::{c, CMat, CVec};
use crate::quad;
use crate::spectral::{ProjectorObservable, Signal, SpectralSystem, StateSP, TimeSeries};
use crate::{Error, Exec, Result, C64};

/// Constant of the erf approximation.
pub const ERF_B: f64 = 0.147;
/// Documented worst-case error of the erf approximation.
pub const ERF_APPROX_MAX_ERROR: f64 = 0.00012;
pub const SQUARE_WELL_MODES: usize = 400;
pub const LEAKAGE_BUDGET: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    SquareWell { length: f64 },
    Harmonic { omega: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuenchConfig {
    pub mass: f64,
    pub omega0: f64,
    pub target: Target,
    /// Half-width `l` of the counting window `[-l, l]` (harmonic target).
    /// `None` means `l^2 = 4/(m omega0)`.
    pub window: Option<f64>,
}

impl QuenchConfig {
    /// Harmonic quench with `omega = omega0 / gamma`.
    pub fn harmonic(gamma: f64) -> Self {
        Self { mass: 1.0, omega0: gamma, target: Target::Harmonic { omega: 1.0 }, window: None }
    }

    /// Square well of length `length` with the initial width set by
    /// `x = sqrt(8 pi/(m omega0)) / L`.
    pub fn square_well_for_width(x: f64, length: f64, mass: f64) -> Self {
        let omega0 = 8.0 * PI / (x * x * length * length * mass);
        Self { mass, omega0, target: Target::SquareWell { length }, window: None }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.mass) || !pos(self.omega0) {
            return Err(Error::invalid("mass and omega0 must be positive"));
        }
        match self.target {
            Target::SquareWell { length } if !pos(length) => Err(Error::invalid("well length must be positive")),
            Target::Harmonic { omega } if !pos(omega) => Err(Error::invalid("trap frequency must be positive")),
            _ => Ok(()),
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self.target {
            Target::Harmonic { omega } => Some(self.omega0 / omega),
            Target::SquareWell { .. } => None,
        }
    }

    fn omega(&self) -> Result<f64> {
        match self.target {
            Target::Harmonic { omega } => Ok(omega),
            Target::SquareWell { .. } => Err(Error::invalid("operation needs a harmonic target")),
        }
    }

    fn length(&self) -> Result<f64> {
        match self.target {
            Target::SquareWell { length } => Ok(length),
            Target::Harmonic { .. } => Err(Error::invalid("operation needs a square-well target")),
        }
    }

    pub fn window(&self) -> f64 {
        self.window.unwrap_or_else(|| (4.0 / (self.mass * self.omega0)).sqrt())
    }

    /// Initial position spread `1/sqrt(2 m omega0)`.
    pub fn wave_width(&self) -> f64 {
        1.0 / (2.0 * self.mass * self.omega0).sqrt()
    }

    /// Warns when the packet is not narrow compared with the well.
    pub fn narrow_packet_warning(&self) -> Option<String> {
        let l = self.length().ok()?;
        let r = self.wave_width() / l;
        (r > 0.1).then(|| format!("initial width / L = {r:.3} exceeds 0.1; scaling laws assume a narrow packet"))
    }
}

/// `m omega0 / (gamma^2 sin^2(omega t) + cos^2(omega t))`.
pub fn alpha(cfg: &QuenchConfig, t: f64) -> Result<f64> {
    let omega = cfg.omega()?;
    let g = cfg.omega0 / omega;
    let (s, co) = (omega * t).sin_cos();
    Ok(cfg.mass * cfg.omega0 / (g * g * s * s + co * co))
}

/// `sqrt(1 - exp(-x^2 (4/pi + b x^2)/(1 + b x^2)))` for `x >= 0`.
pub fn erf_approx(x: f64) -> f64 {
    let x2 = x * x;
    let v = (1.0 - (-x2 * (4.0 / PI + ERF_B * x2) / (1.0 + ERF_B * x2)).exp()).max(0.0).sqrt();
    v.copysign(x)
}

/// Central mass from the erf approximation.
pub fn central_mass_closed_form(cfg: &QuenchConfig, t: f64) -> Result<f64> {
    let a = alpha(cfg, t)?;
    Ok(erf_approx(cfg.window() * a.sqrt()))
}

/// Exact central mass `erf(l sqrt(alpha))`.
pub fn central_mass_exact(cfg: &QuenchConfig, t: f64) -> Result<f64> {
    let a = alpha(cfg, t)?;
    Ok(statrs::function::erf::erf(cfg.window() * a.sqrt()))
}

/// Complex width `beta(t)` of `psi(x, t) ~ exp(-beta x^2 / 2)` under the
/// post-quench oscillator, starting from `beta(0) = m omega0`.
pub fn gaussian_width(cfg: &QuenchConfig, t: f64) -> Result<C64> {
    let omega = cfg.omega()?;
    let mw = cfg.mass * omega;
    let b0 = c(cfg.mass * cfg.omega0, 0.0);
    let (s, co) = (omega * t).sin_cos();
    Ok(c(mw, 0.0) * (b0 * co + c(0.0, mw * s)) / (c(mw * co, 0.0) + C64::i() * b0 * s))
}

/// Central mass by quadrature of the evolved density `|psi(x,t)|^2`,
/// normalized by its own quadrature over the whole line.
pub fn central_mass_numeric(cfg: &QuenchConfig, t: f64) -> Result<f64> {
    let b = gaussian_width(cfg, t)?.re;
    if !(b > 0.0) {
        return Err(Error::Quadrature(format!("non-positive width {b}")));
    }
    let density = |x: f64| (-b * x * x).exp();
    let l = cfg.window();
    let inside = quad::integrate(density, -l, l, 1e-14 / b.sqrt(), 4)?;
    let reach = 40.0 / b.sqrt();
    let total = quad::integrate(density, -reach, reach, 1e-14 / b.sqrt(), 8)?;
    Ok(inside / total)
}

/// Central-mass series over `[0, t_end]`.
pub fn harmonic_series(cfg: &QuenchConfig, t_end: f64, samples: usize, exec: Exec) -> Result<TimeSeries> {
    cfg.validate()?;
    let n = samples.max(2);
    let vals = exec.map(n, |i| central_mass_closed_form(cfg, quad::grid_point(0.0, t_end, n, i)));
    let vals = vals.into_iter().collect::<Result<Vec<f64>>>()?;
    TimeSeries::new(0.0, t_end, vals, format!("central mass, gamma={}", cfg.gamma().unwrap_or(f64::NAN)))
}

#[derive(Debug, Clone, Copy)]
pub struct QuenchTime {
    /// `4 / (sqrt(pi) omega0 p)`.
    pub formula: f64,
    /// First time the closed-form central mass drops below `p`, if it does
    /// within the first half period.
    pub measured: Option<f64>,
}

impl QuenchTime {
    pub fn equilibrates(&self) -> bool {
        self.measured.is_some()
    }
}

pub fn quench_equilibration_time(cfg: &QuenchConfig, p: f64) -> Result<QuenchTime> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("threshold p must lie in (0, 1)"));
    }
    let omega = cfg.omega()?;
    let formula = 4.0 / (PI.sqrt() * cfg.omega0 * p);
    // the mass is smallest at omega t = pi/2
    let end = PI / (2.0 * omega);
    let f = |t: f64| central_mass_closed_form(cfg, t).map(|v| v - p);
    let n = 20_000;
    let mut prev_t = 0.0;
    let mut measured = None;
    for i in 1..n {
        let t = quad::grid_point(0.0, end, n, i);
        if f(t)? < 0.0 {
            measured = Some(bisect(&f, prev_t, t, 1e-10)?);
            break;
        }
        prev_t = t;
    }
    Ok(QuenchTime { formula, measured })
}

fn bisect<F: Fn(f64) -> Result<f64>>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    // f(lo) >= 0 > f(hi)
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Strict local minima of a sampled series.
pub fn strict_local_minima(values: &[f64]) -> usize {
    values.windows(3).filter(|w| w[1] < w[0] && w[1] < w[2]).count()
}

/// Square-well problem in its eigenbasis: energies, initial amplitudes,
/// central-region projector and the initial weight lost to truncation.
#[derive(Debug, Clone)]
pub struct SquareWell {
    pub system: SpectralSystem,
    pub state: StateSP,
    pub projector: ProjectorObservable,
    pub leakage: f64,
}

/// `<m|P|n>` for `P` the projector on `[-L/4, L/4]` and box states on
/// `[-L/2, L/2]`.
pub fn central_projector_element(m: usize, n: usize) -> f64 {
    let (m, n) = (m as f64, n as f64);
    let part = |k: f64| -> f64 {
        if k == 0.0 {
            0.5
        } else {
            ((k * PI * 0.75).sin() - (k * PI * 0.25).sin()) / (k * PI)
        }
    };
    part(m - n) - part(m + n)
}

/// Expands the initial Gaussian in `modes` box eigenstates by quadrature.
pub fn square_well(cfg: &QuenchConfig, modes: usize) -> Result<SquareWell> {
    cfg.validate()?;
    let l = cfg.length()?;
    let mw0 = cfg.mass * cfg.omega0;
    let norm0 = (mw0 / PI).powf(0.25);
    let psi0 = |x: f64| norm0 * (-0.5 * mw0 * x * x).exp();
    let amps: Vec<f64> = (1..=modes)
        .map(|n| {
            if n % 2 == 0 {
                return Ok(0.0);
            }
            let k = n as f64 * PI / l;
            let phi = |x: f64| (2.0 / l).sqrt() * (k * (x + 0.5 * l)).sin();
            quad::integrate(|x| phi(x) * psi0(x), -0.5 * l, 0.5 * l, 1e-15, 8 + n / 4)
        })
        .collect::<Result<_>>()?;
    let kept: f64 = amps.iter().map(|a| a * a).sum();
    let leakage = (1.0 - kept).max(0.0);
    if leakage > LEAKAGE_BUDGET {
        return Err(Error::Truncation {
            lost: leakage,
            budget: LEAKAGE_BUDGET,
            advice: format!("use more than {modes} well modes or a narrower packet"),
        });
    }
    let nu = PI * PI / (2.0 * cfg.mass * l * l);
    let system = SpectralSystem::diagonal((1..=modes).map(|n| nu * (n * n) as f64).collect(), "square well")?;
    let state = StateSP::Pure(CVec::from_iterator(modes, amps.iter().map(|&a| c(a, 0.0))));
    let projector =
        ProjectorObservable::Compressed(CMat::from_fn(modes, modes, |i, j| c(central_projector_element(i + 1, j + 1), 0.0)));
    Ok(SquareWell { system, state, projector, leakage })
}

impl SquareWell {
    pub fn signal(&self) -> Result<Signal> {
        Signal::new(&self.system, &self.state, &self.projector)
    }

    /// `nu = pi^2/(2 m L^2)`; odd-mode gaps are multiples of `8 nu`, so the
    /// dynamics repeats after `2 pi / (8 nu)`.
    pub fn period(&self) -> f64 {
        let nu = self.system.energies()[0];
        2.0 * PI / (8.0 * nu)
    }
}

/// Distinguishability series over `[0, t_end]`.
pub fn square_well_series(cfg: &QuenchConfig, t_end: f64, samples: usize, exec: Exec) -> Result<TimeSeries> {
    let sw = square_well(cfg, SQUARE_WELL_MODES)?;
    sw.signal()?.deviation_series(0.0, t_end, samples.max(2), exec, "square well D(t)")
}

#[derive(Debug, Clone, Copy)]
pub struct SquareWellReport {
    pub width: f64,
    pub mean_d: f64,
    /// First time `D` falls to half its initial value.
    pub half_life: f64,
    /// `(L/pi) sqrt(m/(2 omega0))`.
    pub t_eq_formula: f64,
}

/// Mean of `D` over one full period and its half-life.
pub fn square_well_report(x: f64, length: f64, mass: f64, exec: Exec) -> Result<SquareWellReport> {
    let cfg = QuenchConfig::square_well_for_width(x, length, mass);
    let sw = square_well(&cfg, SQUARE_WELL_MODES)?;
    let sig = sw.signal()?;
    let period = sw.period();
    let n = crate::spectral::required_samples(period, sig.max_freq(), 4096);
    let vals = sig.grid_values(0.0, period, n, exec);
    let dev: Vec<f64> = vals.iter().map(|v| (v - sig.constant).abs()).collect();
    let mean_d = quad::trapezoid_mean(&dev);
    let d0 = dev[0];
    let idx = dev.iter().position(|&d| d <= 0.5 * d0).ok_or_else(|| Error::precondition("D never halves within a period"))?;
    let f = |t: f64| Ok(0.5 * d0 - sig.deviation(t));
    let half_life = bisect(&f, quad::grid_point(0.0, period, n, idx - 1), quad::grid_point(0.0, period, n, idx), 1e-12)?;
    let t_eq_formula = length / PI * (mass / (2.0 * cfg.omega0)).sqrt();
    Ok(SquareWellReport { width: x, mean_d, half_life, t_eq_formula })
}

/// Least-squares slope and intercept of `ln y` against `ln x`.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
