//! Reduction of an `N`-particle free gas to a single-particle problem.
//!
//! Given orbitals `psi_a` with occupations `n_a` and a counting observable
//! `M = sum_i b_i^dag b_i` over orthonormal modes `phi_i`,
//! `tr[rho(t) M] = sum_a n_a <psi_a(t)|P|psi_a(t)> = N tr[sigma(t) P]`
//! with `sigma = (1/N) sum_a n_a |psi_a><psi_a|`.

use crate::error::check_dim;
use crate::linalg::{self, c, CMat, CVec, INPUT_TOL};
use crate::spectral::{self, ProjectorObservable, SpectralSystem, StateSP};
use crate::{Error, Result};

/// Occupations within this distance of an integer are snapped to it.
pub const OCCUPATION_ROUNDING: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistics {
    Fermion,
    Boson,
}

/// Orthonormal orbitals with occupation numbers.
#[derive(Debug, Clone)]
pub struct ModeEnsemble {
    pub statistics: Statistics,
    modes: Vec<(CVec, f64)>,
    /// Set when some occupation is not an integer (e.g. a thermal-like
    /// state); the reduction still holds, Fock product states do not.
    pub fractional: bool,
}

impl ModeEnsemble {
    pub fn new(statistics: Statistics, modes: Vec<(CVec, u32)>) -> Result<Self> {
        Self::with_occupations(statistics, modes.into_iter().map(|(v, n)| (v, n as f64)).collect())
    }

    /// Accepts real occupations; integers within the rounding tolerance are
    /// snapped.
    pub fn with_occupations(statistics: Statistics, modes: Vec<(CVec, f64)>) -> Result<Self> {
        if let Some((first, _)) = modes.first() {
            let d = first.len();
            for (v, _) in &modes {
                check_dim(d, v.len())?;
            }
        }
        let vecs: Vec<CVec> = modes.iter().map(|(v, _)| v.clone()).collect();
        let dev = linalg::orthonormality_error(&vecs);
        if dev > INPUT_TOL {
            return Err(Error::invalid(format!("modes not orthonormal (deviation {dev:.2e})")));
        }
        let mut fractional = false;
        let mut out = Vec::with_capacity(modes.len());
        for (v, n) in modes {
            let upper = match statistics {
                Statistics::Fermion => 1.0,
                Statistics::Boson => f64::INFINITY,
            };
            if !n.is_finite() || n < -OCCUPATION_ROUNDING || n > upper + OCCUPATION_ROUNDING {
                return Err(Error::invalid(format!("occupation {n} not allowed for {statistics:?}")));
            }
            let r = n.round();
            let n = if (n - r).abs() <= OCCUPATION_ROUNDING {
                r
            } else {
                fractional = true;
                n
            };
            out.push((v, n.max(0.0)));
        }
        Ok(Self { statistics, modes: out, fractional })
    }

    /// Fermions occupying the given orthonormal orbitals once each.
    pub fn slater(modes: Vec<CVec>) -> Result<Self> {
        Self::new(Statistics::Fermion, modes.into_iter().map(|v| (v, 1)).collect())
    }

    pub fn modes(&self) -> &[(CVec, f64)] {
        &self.modes
    }

    pub fn dim(&self) -> usize {
        self.modes.first().map_or(0, |m| m.0.len())
    }

    pub fn n_particles(&self) -> f64 {
        self.modes.iter().map(|m| m.1).sum()
    }
}

/// Output of [`reduce`].
#[derive(Debug, Clone)]
pub struct Reduction {
    pub state: StateSP,
    pub projector: ProjectorObservable,
    pub occupations: Vec<f64>,
    pub n_particles: f64,
}

impl Reduction {
    /// `N tr[sigma(t) P]`, the many-body expectation of `M`.
    pub fn many_body_expectation(&self, sys: &SpectralSystem, t: f64) -> Result<f64> {
        let st = spectral::evolve(sys, &self.state, t)?;
        Ok(self.n_particles * spectral::expectation_p(&st, &self.projector)?)
    }

    /// `N tr[<sigma> P]`.
    pub fn many_body_average(&self, sys: &SpectralSystem) -> Result<f64> {
        Ok(self.n_particles * spectral::average_expectation(sys, &self.state, &self.projector)?)
    }
}

pub fn reduce(ensemble: &ModeEnsemble, m_modes: &ProjectorObservable) -> Result<Reduction> {
    check_dim(m_modes.dim(), ensemble.dim())?;
    let n = ensemble.n_particles();
    if n <= 0.0 {
        return Err(Error::invalid("ensemble holds no particles"));
    }
    let occupied: Vec<(f64, CVec)> =
        ensemble.modes.iter().filter(|(_, k)| *k > 0.0).map(|(v, k)| (k / n, v.clone())).collect();
    let occupations = occupied.iter().map(|(w, _)| w * n).collect();
    let state = StateSP::mixed(occupied)?;
    Ok(Reduction { state, projector: m_modes.clone(), occupations, n_particles: n })
}

/// Two-point matrix `C_ab = tr[rho d_a^dag d_b]` over raw modes.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix(CMat);

impl CorrelationMatrix {
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid("correlation matrix must be square"));
        }
        let herr = linalg::hermiticity_error(&m);
        if herr > INPUT_TOL {
            return Err(Error::invalid(format!("correlation matrix not Hermitian ({herr:.2e})")));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }
}

/// Rotates the raw modes so the correlations become diagonal. With
/// `C = W diag(n) W^dag`, the new mode `a` is `sum_b conj(W_ba) raw_b`
/// carrying occupation `n_a`.
pub fn diagonalize_correlations(
    statistics: Statistics,
    corr: &CorrelationMatrix,
    raw_modes: &[CVec],
) -> Result<ModeEnsemble> {
    let k = corr.0.nrows();
    check_dim(k, raw_modes.len())?;
    let (occ, w) = linalg::eigh(&corr.0);
    let d = raw_modes.first().map_or(0, |v| v.len());
    let mut modes = Vec::with_capacity(k);
    for a in 0..k {
        let mut v = CVec::zeros(d);
        for (b, raw) in raw_modes.iter().enumerate() {
            v += raw * w[(b, a)].conj();
        }
        modes.push((v, occ[a]));
    }
    ModeEnsemble::with_occupations(statistics, modes)
}

/// Correlations of a Slater-type state in the given raw modes:
/// `C_ab = sum_k n_k <psi_k|d_a> <d_b|psi_k>` for orthonormal raw modes.
pub fn correlations_of(ensemble: &ModeEnsemble, raw_modes: &[CVec]) -> CorrelationMatrix {
    let k = raw_modes.len();
    let m = CMat::from_fn(k, k, |a, b| {
        ensemble
            .modes
            .iter()
            .map(|(psi, n)| psi.dotc(&raw_modes[a]) * raw_modes[b].dotc(psi) * c(*n, 0.0))
            .sum()
    });
    CorrelationMatrix(m)
}

/// `|tr[rho(t) M] - tr[<rho> M]| / N` for a counting observable.
pub fn delta_m(ensemble: &ModeEnsemble, m_modes: &ProjectorObservable, sys: &SpectralSystem, t: f64) -> Result<f64> {
    let red = reduce(ensemble, m_modes)?;
    spectral::distinguishability(sys, &red.state, &red.projector, t)
}
