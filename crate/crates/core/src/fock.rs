//! Brute-force Fock-space simulator for small mode counts.
//!
//! Fermionic signs follow the reference-basis order: `a_i` picks up
//! `(-1)^(n_0 + ... + n_{i-1})`. Bosonic spaces are truncated per mode and
//! in total particle number; number-conserving dynamics inside the kept
//! sectors is exact.

use std::collections::HashMap;

use rand::Rng;

use crate::bridge::{ModeEnsemble, Statistics};
use crate::linalg::{self, c, CMat, CVec};
use crate::spectral::{self, SpectralSystem, Levels};
use crate::{Error, Result, C64};

pub const DIM_CAP: usize = 4096;
pub const DEFAULT_BOSON_CAP: u8 = 4;
/// Allowed population of states with a mode at its truncation level.
pub const LEAKAGE_BUDGET: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct FockSpace {
    pub statistics: Statistics,
    pub modes: usize,
    /// Per-mode occupation cap (1 for fermions).
    pub per_mode_cap: u8,
    pub basis: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

impl FockSpace {
    /// Full fermionic space, `2^m` states.
    pub fn fermions(modes: usize) -> Result<Self> {
        let dim = 1usize.checked_shl(modes as u32).unwrap_or(usize::MAX);
        if modes >= usize::BITS as usize || dim > DIM_CAP {
            return Err(Error::DimensionCap { dim, cap: DIM_CAP });
        }
        let basis = (0..dim).map(|b| (0..modes).map(|i| ((b >> i) & 1) as u8).collect()).collect();
        Ok(Self::from_basis(Statistics::Fermion, modes, 1, basis))
    }

    /// Bosonic space with at most `per_mode_cap` per mode and
    /// `max_total` particles overall.
    pub fn bosons(modes: usize, per_mode_cap: u8, max_total: usize) -> Result<Self> {
        let mut basis = Vec::new();
        let mut cur = vec![0u8; modes];
        enumerate_bosons(&mut cur, 0, max_total, per_mode_cap, &mut basis, DIM_CAP + 1);
        if basis.len() > DIM_CAP {
            return Err(Error::DimensionCap { dim: basis.len(), cap: DIM_CAP });
        }
        basis.sort_by(|a, b| {
            let na: u32 = a.iter().map(|&x| x as u32).sum();
            let nb: u32 = b.iter().map(|&x| x as u32).sum();
            na.cmp(&nb).then_with(|| a.cmp(b))
        });
        Ok(Self::from_basis(Statistics::Boson, modes, per_mode_cap, basis))
    }

    /// Space large enough for `n` particles of either kind on `modes` modes.
    pub fn for_particles(statistics: Statistics, modes: usize, n: usize) -> Result<Self> {
        match statistics {
            Statistics::Fermion => Self::fermions(modes),
            Statistics::Boson => Self::bosons(modes, DEFAULT_BOSON_CAP.max(n as u8 + 1), n),
        }
    }

    fn from_basis(statistics: Statistics, modes: usize, per_mode_cap: u8, basis: Vec<Vec<u8>>) -> Self {
        let index = basis.iter().enumerate().map(|(i, b)| (b.clone(), i)).collect();
        Self { statistics, modes, per_mode_cap, basis, index }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn index_of(&self, occ: &[u8]) -> Option<usize> {
        self.index.get(occ).copied()
    }

    pub fn vacuum(&self) -> CVec {
        let mut v = CVec::zeros(self.dim());
        v[self.index_of(&vec![0; self.modes]).expect("vacuum is in every space")] = c(1.0, 0.0);
        v
    }

    /// Matrix of `a_i` in the occupation basis.
    pub fn annihilation(&self, i: usize) -> CMat {
        let d = self.dim();
        let mut a = CMat::zeros(d, d);
        for (col, occ) in self.basis.iter().enumerate() {
            if occ[i] == 0 {
                continue;
            }
            let mut target = occ.clone();
            target[i] -= 1;
            let amp = match self.statistics {
                Statistics::Fermion => {
                    let parity: u32 = occ[..i].iter().map(|&x| x as u32).sum();
                    if parity % 2 == 0 { 1.0 } else { -1.0 }
                }
                Statistics::Boson => (occ[i] as f64).sqrt(),
            };
            if let Some(row) = self.index_of(&target) {
                a[(row, col)] = c(amp, 0.0);
            }
        }
        a
    }

    pub fn creation(&self, i: usize) -> CMat {
        self.annihilation(i).adjoint()
    }

    /// All annihilation operators, computed once.
    pub fn annihilators(&self) -> Vec<CMat> {
        (0..self.modes).map(|i| self.annihilation(i)).collect()
    }

    /// `a(v) = sum_i conj(v_i) a_i`.
    pub fn mode_annihilation(&self, ops: &[CMat], v: &CVec) -> Result<CMat> {
        crate::error::check_dim(self.modes, v.len())?;
        let d = self.dim();
        let mut a = CMat::zeros(d, d);
        for (i, op) in ops.iter().enumerate() {
            if v[i] != c(0.0, 0.0) {
                a += op * v[i].conj();
            }
        }
        Ok(a)
    }

    /// `M = sum_k b_k^dag b_k` over the given single-particle modes.
    pub fn counting_operator(&self, modes: &[CVec]) -> Result<CMat> {
        let ops = self.annihilators();
        let d = self.dim();
        let mut m = CMat::zeros(d, d);
        for v in modes {
            let b = self.mode_annihilation(&ops, v)?;
            m += b.adjoint() * &b;
        }
        Ok(m)
    }

    pub fn number_operator(&self) -> CMat {
        let d = self.dim();
        CMat::from_fn(d, d, |i, j| {
            if i == j {
                c(self.basis[i].iter().map(|&x| x as f64).sum(), 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
    }

    /// Second-quantized `H = sum_ij h_ij a_i^dag a_j`.
    pub fn build_hamiltonian(&self, sys: &SpectralSystem) -> Result<CMat> {
        crate::error::check_dim(self.modes, sys.dim())?;
        let v = sys.eigenvectors();
        let e = CMat::from_diagonal(&linalg::real_vec(sys.energies()));
        let h = &v * e * v.adjoint();
        self.quadratic(&h)
    }

    /// `sum_ij h_ij a_i^dag a_j` for an arbitrary one-body matrix.
    pub fn quadratic(&self, h: &CMat) -> Result<CMat> {
        crate::error::check_dim(self.modes, h.nrows())?;
        let ops = self.annihilators();
        let d = self.dim();
        let mut out = CMat::zeros(d, d);
        for i in 0..self.modes {
            let ci = ops[i].adjoint();
            for j in 0..self.modes {
                if h[(i, j)] != c(0.0, 0.0) {
                    out += (&ci * &ops[j]) * h[(i, j)];
                }
            }
        }
        Ok(out)
    }

    /// `prod_a (b_a^dag)^(n_a) / sqrt(n_a!) |0>` for integer occupations.
    pub fn product_state(&self, ensemble: &ModeEnsemble) -> Result<CVec> {
        if ensemble.statistics != self.statistics {
            return Err(Error::invalid("statistics of ensemble and Fock space differ"));
        }
        if ensemble.fractional {
            return Err(Error::invalid("product state needs integer occupations"));
        }
        let ops = self.annihilators();
        let mut psi = self.vacuum();
        for (v, n) in ensemble.modes() {
            let k = n.round() as usize;
            if k == 0 {
                continue;
            }
            let b = self.mode_annihilation(&ops, v)?;
            let bd = b.adjoint();
            for _ in 0..k {
                psi = &bd * psi;
            }
            let fact: f64 = (1..=k).map(|x| x as f64).product();
            psi /= c(fact.sqrt(), 0.0);
        }
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(format!(
                "product state has norm {norm}; the Fock space truncation is too small"
            )));
        }
        Ok(psi)
    }

    /// Gaussian number-conserving fermion state
    /// `prod_k [(1 - n_k)(1 - N_k) + n_k N_k]` for an ensemble whose modes
    /// form a complete basis; occupations may be fractional.
    pub fn gaussian_density(&self, ensemble: &ModeEnsemble) -> Result<CMat> {
        if self.statistics != Statistics::Fermion {
            return Err(Error::invalid("Gaussian density implemented for fermions only"));
        }
        if ensemble.modes().len() != self.modes {
            return Err(Error::invalid("ensemble must contain a complete set of modes"));
        }
        let ops = self.annihilators();
        let d = self.dim();
        let id = CMat::identity(d, d);
        let mut rho = id.clone();
        for (v, n) in ensemble.modes() {
            let b = self.mode_annihilation(&ops, v)?;
            let num = b.adjoint() * &b;
            let factor = (&id - &num) * c(1.0 - n, 0.0) + num * c(*n, 0.0);
            rho = rho * factor;
        }
        Ok(rho)
    }

    /// Population of basis states with some mode at the truncation cap.
    pub fn top_level_population(&self, psi: &CVec) -> f64 {
        if self.statistics == Statistics::Fermion {
            return 0.0;
        }
        self.basis
            .iter()
            .zip(psi.iter())
            .filter(|(occ, _)| occ.iter().any(|&x| x >= self.per_mode_cap))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }
}

fn enumerate_bosons(cur: &mut Vec<u8>, i: usize, left: usize, cap: u8, out: &mut Vec<Vec<u8>>, limit: usize) {
    if out.len() >= limit {
        return;
    }
    if i == cur.len() {
        out.push(cur.clone());
        return;
    }
    for k in 0..=(cap as usize).min(left) {
        cur[i] = k as u8;
        enumerate_bosons(cur, i + 1, left - k, cap, out, limit);
    }
    cur[i] = 0;
}

/// Exact many-body dynamics from a diagonalized Hamiltonian.
#[derive(Debug, Clone)]
pub struct ManyBody {
    pub energies: Vec<f64>,
    vecs: CMat,
}

impl ManyBody {
    pub fn new(h: &CMat) -> Self {
        let (energies, vecs) = linalg::eigh(h);
        Self { energies, vecs }
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn evolve_pure(&self, psi: &CVec, t: f64) -> CVec {
        linalg::propagator(&self.energies, &self.vecs, t) * psi
    }

    /// Prepares `tr[e^{-iHt} rho e^{iHt} op]` for repeated evaluation.
    pub fn expectation_series(&self, rho: &CMat, op: &CMat) -> Expectation {
        let r = self.vecs.adjoint() * rho * &self.vecs;
        let o = self.vecs.adjoint() * op * &self.vecs;
        // pair r_mn with o_nm
        let ot = o.transpose();
        Expectation { energies: self.energies.clone(), rho: r, op_t: ot }
    }

    /// `tr[rho(t) op]`.
    pub fn evolve_expectation(&self, rho: &CMat, op: &CMat, t: f64) -> f64 {
        self.expectation_series(rho, op).at(t)
    }

    /// Infinite-time average of `tr[rho(t) op]` by dephasing in the
    /// many-body eigenbasis.
    pub fn time_average(&self, rho: &CMat, op: &CMat) -> f64 {
        let e = self.expectation_series(rho, op);
        let lv = Levels::cluster(&self.energies, spectral::EPS_GAP);
        let owner = lv.level_of();
        let d = self.dim();
        let mut acc = c(0.0, 0.0);
        for m in 0..d {
            for n in 0..d {
                if owner[m] == owner[n] {
                    acc += e.rho[(m, n)] * e.op_t[(m, n)];
                }
            }
        }
        acc.re
    }
}

#[derive(Debug, Clone)]
pub struct Expectation {
    energies: Vec<f64>,
    rho: CMat,
    op_t: CMat,
}

impl Expectation {
    pub fn at(&self, t: f64) -> f64 {
        let d = self.energies.len();
        let phase: Vec<C64> = self.energies.iter().map(|&e| C64::from_polar(1.0, -e * t)).collect();
        let mut acc = c(0.0, 0.0);
        for m in 0..d {
            let mut row = c(0.0, 0.0);
            for n in 0..d {
                row += self.rho[(m, n)] * self.op_t[(m, n)] * phase[n].conj();
            }
            acc += row * phase[m];
        }
        acc.re
    }
}

pub fn pure_density(psi: &CVec) -> CMat {
    psi * psi.adjoint()
}

/// Result of [`fluctuation_check`].
#[derive(Debug, Clone, Copy)]
pub struct Fluctuation {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
    /// Right side of the inequality for `tr[rho M^2]`.
    pub bound: f64,
    pub holds: bool,
}

/// Checks `tr[rho M^2] <= tr[rho M]^2 + tr[rho M]` (fermions) or the same
/// plus `N` (bosons) for a product state in singly occupied orthonormal
/// modes.
pub fn fluctuation_check(space: &FockSpace, ensemble: &ModeEnsemble, m: &CMat) -> Result<Fluctuation> {
    if ensemble.fractional || ensemble.modes().iter().any(|(_, n)| *n > 1.0) {
        return Err(Error::invalid(
            "fluctuation bound needs a product state with each orbital occupied at most once",
        ));
    }
    let psi = space.product_state(ensemble)?;
    let mpsi = m * &psi;
    let mean = psi.dotc(&mpsi).re;
    let second_moment = mpsi.norm_squared();
    let extra = match space.statistics {
        Statistics::Fermion => 0.0,
        Statistics::Boson => ensemble.n_particles(),
    };
    let bound = mean * mean + mean + extra;
    Ok(Fluctuation { mean, second_moment, variance: second_moment - mean * mean, bound, holds: second_moment <= bound + 1e-10 })
}

/// Monte Carlo estimate of the time-averaged standard deviation of `M`.
#[derive(Debug, Clone, Copy)]
pub struct TimeAveragedFluctuation {
    pub mean_sigma: f64,
    pub std_error: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Averages `sigma_M(rho(t))` over `samples` uniform random times in
/// `[0, window]`. Refuses spectra with degenerate levels or gaps.
pub fn time_avg_fluctuation<R: Rng + ?Sized>(
    sys: &SpectralSystem,
    space: &FockSpace,
    psi0: &CVec,
    m: &CMat,
    n_particles: f64,
    window: f64,
    samples: usize,
    rng: &mut R,
) -> Result<TimeAveragedFluctuation> {
    let gaps = spectral::gap_structure(sys, spectral::EPS_GAP)?;
    if gaps.max_level_degeneracy > 1 || gaps.max_gap_degeneracy > 1 {
        return Err(Error::precondition(format!(
            "spectrum has degenerate levels ({}) or gaps ({})",
            gaps.max_level_degeneracy, gaps.max_gap_degeneracy
        )));
    }
    let h = space.build_hamiltonian(sys)?;
    let mb = ManyBody::new(&h);
    let vals: Vec<f64> = (0..samples.max(2))
        .map(|_| {
            let t = rng.gen_range(0.0..window);
            let psi = mb.evolve_pure(psi0, t);
            let mpsi = m * &psi;
            let mean = psi.dotc(&mpsi).re;
            (mpsi.norm_squared() - mean * mean).max(0.0).sqrt()
        })
        .collect();
    let n = vals.len() as f64;
    let mean_sigma = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean_sigma).powi(2)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();
    let bound = n_particles.sqrt();
    Ok(TimeAveragedFluctuation { mean_sigma, std_error, bound, holds: mean_sigma <= bound + 3.0 * std_error })
}
