//! Single-particle states, projectors and their unitary dynamics.
//!
//! Everything is expressed in a fixed reference basis. A [`SpectralSystem`]
//! carries the sorted spectrum of the one-body Hamiltonian and its
//! eigenvectors; expectation values of a projector in an evolving state are
//! finite sums of oscillations, collected in a [`Signal`].

use std::fmt::Write as _;
use std::ops::Range;

use crate::error::check_dim;
use crate::linalg::{self, c, CMat, CVec, INPUT_TOL};
use crate::quad;
use crate::{Error, Exec, Result, C64};

/// Default relative tolerance for clustering energies into levels.
pub const EPS_GAP: f64 = 1e-9;

#[derive(Debug, Clone)]
enum Eigenbasis {
    /// The reference basis already diagonalizes the Hamiltonian.
    Identity(usize),
    Dense(CMat),
}

#[derive(Debug, Clone)]
pub struct SpectralSystem {
    energies: Vec<f64>,
    basis: Eigenbasis,
    pub label: String,
}

impl SpectralSystem {
    /// Builds a system from a sorted spectrum and unitary eigenvector matrix.
    pub fn new(energies: Vec<f64>, eigenvectors: CMat, label: impl Into<String>) -> Result<Self> {
        let d = energies.len();
        check_dim(d, eigenvectors.nrows())?;
        check_dim(d, eigenvectors.ncols())?;
        check_sorted(&energies)?;
        let gram = eigenvectors.adjoint() * &eigenvectors;
        let dev = (gram - CMat::identity(d, d)).camax();
        if dev > INPUT_TOL {
            return Err(Error::invalid(format!("eigenvectors not orthonormal (deviation {dev:.2e})")));
        }
        Ok(Self { energies, basis: Eigenbasis::Dense(eigenvectors), label: label.into() })
    }

    /// System whose eigenvectors are the reference basis vectors.
    pub fn diagonal(energies: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        check_sorted(&energies)?;
        let d = energies.len();
        Ok(Self { energies, basis: Eigenbasis::Identity(d), label: label.into() })
    }

    /// Diagonalizes a Hermitian one-body Hamiltonian.
    pub fn from_hamiltonian(h: &CMat, label: impl Into<String>) -> Result<Self> {
        if h.nrows() != h.ncols() {
            return Err(Error::invalid("Hamiltonian must be square"));
        }
        let herr = linalg::hermiticity_error(h);
        if herr > INPUT_TOL * h.camax().max(1.0) {
            return Err(Error::invalid(format!("Hamiltonian not Hermitian (deviation {herr:.2e})")));
        }
        let (e, v) = linalg::eigh(h);
        Ok(Self { energies: e, basis: Eigenbasis::Dense(v), label: label.into() })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn eigenvectors(&self) -> CMat {
        match &self.basis {
            Eigenbasis::Identity(d) => CMat::identity(*d, *d),
            Eigenbasis::Dense(v) => v.clone(),
        }
    }

    pub fn eigenvector(&self, k: usize) -> CVec {
        match &self.basis {
            Eigenbasis::Identity(d) => linalg::basis_vec(*d, k),
            Eigenbasis::Dense(v) => v.column(k).into_owned(),
        }
    }

    /// Amplitudes `<E_k|v>`.
    pub fn to_eigen(&self, v: &CVec) -> CVec {
        match &self.basis {
            Eigenbasis::Identity(_) => v.clone(),
            Eigenbasis::Dense(u) => u.ad_mul(v),
        }
    }

    pub fn from_eigen(&self, a: &CVec) -> CVec {
        match &self.basis {
            Eigenbasis::Identity(_) => a.clone(),
            Eigenbasis::Dense(u) => u * a,
        }
    }

    /// `V^† A V` for an operator given in the reference basis.
    pub fn operator_to_eigen(&self, a: &CMat) -> CMat {
        match &self.basis {
            Eigenbasis::Identity(_) => a.clone(),
            Eigenbasis::Dense(u) => u.adjoint() * a * u,
        }
    }

    pub fn operator_from_eigen(&self, a: &CMat) -> CMat {
        match &self.basis {
            Eigenbasis::Identity(_) => a.clone(),
            Eigenbasis::Dense(u) => u * a * u.adjoint(),
        }
    }

    pub fn energy_range(&self) -> f64 {
        match (self.energies.first(), self.energies.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Energy levels after clustering with relative tolerance `eps_gap`.
    pub fn levels(&self, eps_gap: f64) -> Levels {
        Levels::cluster(&self.energies, eps_gap)
    }

    /// `e^{-iHt}` applied to a reference-basis vector.
    pub fn propagate(&self, v: &CVec, t: f64) -> CVec {
        let mut a = self.to_eigen(v);
        for (k, x) in a.iter_mut().enumerate() {
            *x *= C64::from_polar(1.0, -self.energies[k] * t);
        }
        self.from_eigen(&a)
    }
}

fn check_sorted(e: &[f64]) -> Result<()> {
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("energies must be finite"));
    }
    if e.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("energies must be sorted ascending"));
    }
    Ok(())
}

/// Degenerate energy levels as contiguous index ranges of the sorted spectrum.
#[derive(Debug, Clone)]
pub struct Levels {
    pub energies: Vec<f64>,
    pub ranges: Vec<Range<usize>>,
    pub tol: f64,
}

impl Levels {
    /// Sorted single-linkage clustering: neighbours closer than
    /// `eps_gap` times the spectral range share a level.
    pub fn cluster(sorted: &[f64], eps_gap: f64) -> Self {
        let range = match (sorted.first(), sorted.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        };
        let tol = eps_gap * range;
        let mut ranges = Vec::new();
        let mut start = 0;
        for i in 1..=sorted.len() {
            if i == sorted.len() || sorted[i] - sorted[i - 1] > tol {
                if i > start {
                    ranges.push(start..i);
                }
                start = i;
            }
        }
        let energies = ranges
            .iter()
            .map(|r| sorted[r.clone()].iter().sum::<f64>() / r.len() as f64)
            .collect();
        Self { energies, ranges, tol }
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn max_degeneracy(&self) -> usize {
        self.ranges.iter().map(|r| r.len()).max().unwrap_or(0)
    }

    /// Level index of every eigenvector.
    pub fn level_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.ranges.last().map_or(0, |r| r.end)];
        for (l, r) in self.ranges.iter().enumerate() {
            for k in r.clone() {
                out[k] = l;
            }
        }
        out
    }
}

/// Single-particle density operator stored as an orthonormal ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSP {
    Pure(CVec),
    Mixed(Vec<(f64, CVec)>),
}

impl StateSP {
    pub fn pure(v: CVec) -> Result<Self> {
        let n = v.norm();
        if (n - 1.0).abs() > INPUT_TOL {
            return Err(Error::invalid(format!("state not normalized (norm {n})")));
        }
        Ok(StateSP::Pure(v))
    }

    /// Normalizes `v` first.
    pub fn pure_normalized(v: CVec) -> Result<Self> {
        let n = v.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("cannot normalize a zero vector"));
        }
        Ok(StateSP::Pure(v / c(n, 0.0)))
    }

    pub fn mixed(components: Vec<(f64, CVec)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixed state needs at least one component"));
        }
        let d = components[0].1.len();
        let mut total = 0.0;
        for (w, v) in &components {
            check_dim(d, v.len())?;
            if *w < 0.0 || !w.is_finite() {
                return Err(Error::invalid(format!("negative or non-finite weight {w}")));
            }
            total += w;
        }
        if (total - 1.0).abs() > INPUT_TOL {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        let vecs: Vec<CVec> = components.iter().map(|(_, v)| v.clone()).collect();
        let dev = linalg::orthonormality_error(&vecs);
        if dev > INPUT_TOL {
            return Err(Error::invalid(format!("mixture components not orthonormal (deviation {dev:.2e})")));
        }
        Ok(StateSP::Mixed(components))
    }

    /// Equal-weight mixture of orthonormal vectors.
    pub fn uniform_mixture(vecs: Vec<CVec>) -> Result<Self> {
        let w = 1.0 / vecs.len().max(1) as f64;
        Self::mixed(vecs.into_iter().map(|v| (w, v)).collect())
    }

    pub fn dim(&self) -> usize {
        match self {
            StateSP::Pure(v) => v.len(),
            StateSP::Mixed(cs) => cs[0].1.len(),
        }
    }

    pub fn components(&self) -> Vec<(f64, &CVec)> {
        match self {
            StateSP::Pure(v) => vec![(1.0, v)],
            StateSP::Mixed(cs) => cs.iter().map(|(w, v)| (*w, v)).collect(),
        }
    }

    fn map_vectors(&self, f: impl Fn(&CVec) -> CVec) -> StateSP {
        match self {
            StateSP::Pure(v) => StateSP::Pure(f(v)),
            StateSP::Mixed(cs) => StateSP::Mixed(cs.iter().map(|(w, v)| (*w, f(v))).collect()),
        }
    }

    pub fn density_matrix(&self) -> CMat {
        let d = self.dim();
        let mut rho = CMat::zeros(d, d);
        for (w, v) in self.components() {
            rho += (v * v.adjoint()).scale(w);
        }
        rho
    }
}

/// Projector `P` onto counted single-particle modes.
#[derive(Debug, Clone)]
pub enum ProjectorObservable {
    /// `P = sum_i |phi_i><phi_i|` over orthonormal modes.
    Modes { dim: usize, modes: Vec<CVec> },
    /// A projector compressed to a truncated basis: Hermitian with spectrum
    /// in `[0, 1]` but not necessarily idempotent.
    Compressed(CMat),
}

impl ProjectorObservable {
    pub fn modes(dim: usize, modes: Vec<CVec>) -> Result<Self> {
        for m in &modes {
            check_dim(dim, m.len())?;
        }
        if modes.len() > dim {
            return Err(Error::invalid("more modes than the dimension"));
        }
        let dev = linalg::orthonormality_error(&modes);
        if dev > INPUT_TOL {
            return Err(Error::invalid(format!("modes not orthonormal (deviation {dev:.2e})")));
        }
        Ok(ProjectorObservable::Modes { dim, modes })
    }

    pub fn identity(dim: usize) -> Self {
        ProjectorObservable::Modes { dim, modes: (0..dim).map(|i| linalg::basis_vec(dim, i)).collect() }
    }

    pub fn empty(dim: usize) -> Self {
        ProjectorObservable::Modes { dim, modes: Vec::new() }
    }

    /// Projector onto a set of reference-basis indices.
    pub fn sites(dim: usize, sites: &[usize]) -> Result<Self> {
        if sites.iter().any(|&s| s >= dim) {
            return Err(Error::invalid("site index out of range"));
        }
        let mut uniq = sites.to_vec();
        uniq.sort_unstable();
        uniq.dedup();
        Ok(ProjectorObservable::Modes { dim, modes: uniq.iter().map(|&s| linalg::basis_vec(dim, s)).collect() })
    }

    pub fn compressed(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid("projector matrix must be square"));
        }
        let herr = linalg::hermiticity_error(&m);
        if herr > INPUT_TOL {
            return Err(Error::invalid(format!("projector matrix not Hermitian ({herr:.2e})")));
        }
        Ok(ProjectorObservable::Compressed(m))
    }

    pub fn dim(&self) -> usize {
        match self {
            ProjectorObservable::Modes { dim, .. } => *dim,
            ProjectorObservable::Compressed(m) => m.nrows(),
        }
    }

    pub fn matrix(&self) -> CMat {
        match self {
            ProjectorObservable::Modes { dim, modes } => {
                let mut p = CMat::zeros(*dim, *dim);
                for m in modes {
                    p += m * m.adjoint();
                }
                p
            }
            ProjectorObservable::Compressed(m) => m.clone(),
        }
    }

    /// `<v|P|v>`.
    pub fn expect_vec(&self, v: &CVec) -> f64 {
        match self {
            ProjectorObservable::Modes { modes, .. } => modes.iter().map(|m| m.dotc(v).norm_sqr()).sum(),
            ProjectorObservable::Compressed(m) => v.dotc(&(m * v)).re,
        }
    }

    fn eigen_matrix(&self, sys: &SpectralSystem) -> CMat {
        match self {
            ProjectorObservable::Modes { dim, modes } => {
                let mut p = CMat::zeros(*dim, *dim);
                for m in modes {
                    let a = sys.to_eigen(m);
                    p += &a * a.adjoint();
                }
                p
            }
            ProjectorObservable::Compressed(m) => sys.operator_to_eigen(m),
        }
    }
}

/// Replaces every pure component by `e^{-iHt}|psi>`.
pub fn evolve(sys: &SpectralSystem, s: &StateSP, t: f64) -> Result<StateSP> {
    check_dim(sys.dim(), s.dim())?;
    if t == 0.0 {
        return Ok(s.clone());
    }
    Ok(s.map_vectors(|v| sys.propagate(v, t)))
}

/// `tr[s P]`.
pub fn expectation_p(s: &StateSP, p: &ProjectorObservable) -> Result<f64> {
    check_dim(p.dim(), s.dim())?;
    Ok(s.components().iter().map(|(w, v)| w * p.expect_vec(v)).sum())
}

/// Density matrix of `s` in the energy eigenbasis, `sigma_mn = <E_m|s|E_n>`.
pub fn state_in_eigenbasis(sys: &SpectralSystem, s: &StateSP) -> Result<CMat> {
    check_dim(sys.dim(), s.dim())?;
    let d = sys.dim();
    let mut sig = CMat::zeros(d, d);
    for (w, v) in s.components() {
        let a = sys.to_eigen(v);
        sig.gerc(c(w, 0.0), &a, &a, c(1.0, 0.0));
    }
    Ok(sig)
}

/// Infinite-time average of `s`: coherences between distinct levels are
/// dropped, blocks inside degenerate levels kept. Returned in the
/// reference basis.
pub fn time_average_state(sys: &SpectralSystem, s: &StateSP) -> Result<CMat> {
    let sig = state_in_eigenbasis(sys, s)?;
    let lv = sys.levels(EPS_GAP);
    let owner = lv.level_of();
    let d = sys.dim();
    let avg = CMat::from_fn(d, d, |i, j| if owner[i] == owner[j] { sig[(i, j)] } else { c(0.0, 0.0) });
    Ok(sys.operator_from_eigen(&avg))
}

/// `tr[<s> P]`.
pub fn average_expectation(sys: &SpectralSystem, s: &StateSP, p: &ProjectorObservable) -> Result<f64> {
    Ok(Signal::new(sys, s, p)?.constant)
}

/// `|tr[s(t) P] - tr[<s> P]|`.
pub fn distinguishability(sys: &SpectralSystem, s: &StateSP, p: &ProjectorObservable, t: f64) -> Result<f64> {
    check_dim(p.dim(), sys.dim())?;
    let st = evolve(sys, s, t)?;
    let now = expectation_p(&st, p)?;
    let avg = average_expectation(sys, s, p)?;
    Ok((now - avg).abs())
}

/// `tr[s(t) P] = constant + sum_j [a_j cos(w_j t) + b_j sin(w_j t)]` with
/// distinct positive frequencies `w_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub constant: f64,
    pub freqs: Vec<f64>,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl Signal {
    pub fn new(sys: &SpectralSystem, s: &StateSP, p: &ProjectorObservable) -> Result<Self> {
        check_dim(sys.dim(), p.dim())?;
        let sig = state_in_eigenbasis(sys, s)?;
        let pe = p.eigen_matrix(sys);
        Ok(Self::from_eigen_matrices(sys.energies(), &sig, &pe, EPS_GAP))
    }

    /// Builds the signal from `sigma` and `P` already in the eigenbasis.
    pub fn from_eigen_matrices(energies: &[f64], sig: &CMat, pe: &CMat, eps_gap: f64) -> Self {
        let lv = Levels::cluster(energies, eps_gap);
        let owner = lv.level_of();
        let d = energies.len();
        let mut constant = 0.0;
        let mut terms: Vec<(f64, f64, f64)> = Vec::new();
        for m in 0..d {
            for n in 0..=m {
                // contribution sigma_mn P_nm e^{-i(E_m - E_n)t} + conjugate pair
                let z = sig[(m, n)] * pe[(n, m)];
                if owner[m] == owner[n] {
                    constant += if m == n { z.re } else { 2.0 * z.re };
                } else if z.re != 0.0 || z.im != 0.0 {
                    terms.push((energies[m] - energies[n], 2.0 * z.re, 2.0 * z.im));
                }
            }
        }
        Self::merge(constant, terms, lv.tol)
    }

    /// Merges terms whose frequencies agree within `tol`.
    pub fn merge(constant: f64, mut terms: Vec<(f64, f64, f64)>, tol: f64) -> Self {
        terms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut freqs = Vec::new();
        let mut cos = Vec::new();
        let mut sin: Vec<f64> = Vec::new();
        let mut anchor = f64::NEG_INFINITY;
        for (w, a, b) in terms {
            if !freqs.is_empty() && w - anchor <= tol {
                *cos.last_mut().unwrap() += a;
                *sin.last_mut().unwrap() += b;
            } else {
                anchor = w;
                freqs.push(w);
                cos.push(a);
                sin.push(b);
            }
        }
        Self { constant, freqs, cos, sin }
    }

    pub fn value(&self, t: f64) -> f64 {
        let mut v = self.constant;
        for j in 0..self.freqs.len() {
            let (s, c) = (self.freqs[j] * t).sin_cos();
            v += self.cos[j] * c + self.sin[j] * s;
        }
        v
    }

    /// `|value(t) - constant|`.
    pub fn deviation(&self, t: f64) -> f64 {
        (self.value(t) - self.constant).abs()
    }

    pub fn max_freq(&self) -> f64 {
        self.freqs.last().copied().unwrap_or(0.0)
    }

    /// Infinite-time average of `(value - constant)^2`.
    pub fn mean_square_deviation(&self) -> f64 {
        0.5 * self.cos.iter().zip(&self.sin).map(|(a, b)| a * a + b * b).sum::<f64>()
    }

    /// Largest term amplitude.
    pub fn max_amplitude(&self) -> f64 {
        self.cos.iter().zip(&self.sin).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max)
    }

    /// Values on the uniform grid `t0 .. t1` with `n` points. Phases are
    /// advanced by complex rotation inside fixed-size blocks, each block
    /// starting from an exactly computed phase, so results do not depend on
    /// the execution policy.
    pub fn grid_values(&self, t0: f64, t1: f64, n: usize, exec: Exec) -> Vec<f64> {
        const BLOCK: usize = 512;
        let dt = if n > 1 { (t1 - t0) / (n - 1) as f64 } else { 0.0 };
        let steps: Vec<C64> = self.freqs.iter().map(|&w| C64::from_polar(1.0, w * dt)).collect();
        let blocks = n.div_ceil(BLOCK);
        let chunks = exec.map(blocks, |b| {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(n);
            let mut acc = vec![self.constant; hi - lo];
            let t_lo = quad::grid_point(t0, t1, n, lo);
            for j in 0..self.freqs.len() {
                let mut z = C64::from_polar(1.0, self.freqs[j] * t_lo);
                let (a, s) = (self.cos[j], self.sin[j]);
                for v in acc.iter_mut() {
                    *v += a * z.re + s * z.im;
                    z *= steps[j];
                }
            }
            acc
        });
        chunks.into_iter().flatten().collect()
    }

    /// Samples the deviation on a uniform grid.
    pub fn deviation_series(&self, t0: f64, t1: f64, n: usize, exec: Exec, meta: impl Into<String>) -> Result<TimeSeries> {
        let vals = self.grid_values(t0, t1, n, exec).into_iter().map(|v| (v - self.constant).abs()).collect();
        TimeSeries::new(t0, t1, vals, meta)
    }

    /// Samples the value on a uniform grid.
    pub fn value_series(&self, t0: f64, t1: f64, n: usize, exec: Exec, meta: impl Into<String>) -> Result<TimeSeries> {
        TimeSeries::new(t0, t1, self.grid_values(t0, t1, n, exec), meta)
    }
}

/// Samples needed on `[0, span]` so the fastest oscillation gets at least
/// eight points per period, never fewer than `floor`.
pub fn required_samples(span: f64, max_freq: f64, floor: usize) -> usize {
    let need = (8.0 * span * max_freq / std::f64::consts::PI).ceil();
    if need.is_finite() && need > floor as f64 {
        need as usize + 1
    } else {
        floor
    }
}

/// Uniform-grid samples with run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t0: f64,
    pub t1: f64,
    pub values: Vec<f64>,
    pub meta: String,
}

impl TimeSeries {
    pub fn new(t0: f64, t1: f64, values: Vec<f64>, meta: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("time series needs at least one sample"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        if !(t0.is_finite() && t1.is_finite()) || (values.len() > 1 && t1 <= t0) {
            return Err(Error::invalid(format!("bad time window [{t0}, {t1}]")));
        }
        Ok(Self { t0, t1, values, meta: meta.into() })
    }

    pub fn n_samples(&self) -> usize {
        self.values.len()
    }

    pub fn dt(&self) -> f64 {
        if self.values.len() > 1 {
            (self.t1 - self.t0) / (self.values.len() - 1) as f64
        } else {
            0.0
        }
    }

    pub fn time(&self, i: usize) -> f64 {
        quad::grid_point(self.t0, self.t1, self.values.len(), i)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.time(i)).collect()
    }

    /// Trapezoid average over the window.
    pub fn mean(&self) -> f64 {
        quad::trapezoid_mean(&self.values)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(48 * self.values.len() + 8);
        out.push_str("t,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", fmt_sig17(self.time(i)), fmt_sig17(*v));
        }
        out
    }
}

/// 17 significant digits, `.` decimal separator, locale independent.
pub fn fmt_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Inter-level gap statistics.
#[derive(Debug, Clone)]
pub struct GapStructure {
    /// Positive gaps between distinct levels and their multiplicities; each
    /// gap `E_i - E_j` also occurs with the opposite sign.
    pub gaps: Vec<(f64, usize)>,
    pub max_gap_degeneracy: usize,
    pub max_level_degeneracy: usize,
    pub eps_gap: f64,
}

pub fn gap_structure(sys: &SpectralSystem, eps_gap: f64) -> Result<GapStructure> {
    if !(eps_gap > 0.0) {
        return Err(Error::invalid("eps_gap must be positive"));
    }
    Ok(gap_structure_of(sys.energies(), eps_gap))
}

/// Gap structure of a sorted spectrum.
pub fn gap_structure_of(energies: &[f64], eps_gap: f64) -> GapStructure {
    let lv = Levels::cluster(energies, eps_gap);
    let e = &lv.energies;
    let mut raw = Vec::with_capacity(e.len() * e.len().saturating_sub(1) / 2);
    for i in 0..e.len() {
        for j in 0..i {
            raw.push(e[i] - e[j]);
        }
    }
    raw.sort_by(f64::total_cmp);
    let mut gaps: Vec<(f64, usize)> = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for g in raw {
        match gaps.last_mut() {
            Some(last) if g - prev <= lv.tol => {
                last.1 += 1;
            }
            _ => gaps.push((g, 1)),
        }
        prev = g;
    }
    let max_gap_degeneracy = gaps.iter().map(|g| g.1).max().unwrap_or(1).max(1);
    GapStructure { gaps, max_gap_degeneracy, max_level_degeneracy: lv.max_degeneracy().max(1), eps_gap }
}

/// Eigenvalue histogram normalized so that it integrates to `d`.
#[derive(Debug, Clone)]
pub struct DensityOfStates {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    pub n_max: f64,
}

impl DensityOfStates {
    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

pub fn density_of_states(sys: &SpectralSystem, n_bins: usize) -> Result<DensityOfStates> {
    histogram_density(sys.energies(), n_bins)
}

pub fn histogram_density(energies: &[f64], n_bins: usize) -> Result<DensityOfStates> {
    if n_bins < 2 {
        return Err(Error::invalid("need at least two bins"));
    }
    if energies.len() < 2 {
        return Err(Error::invalid("density of states needs d >= 2"));
    }
    let lo = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(Error::invalid("spectrum has zero width"));
    }
    let w = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &e in energies {
        let b = (((e - lo) / w) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let density: Vec<f64> = counts.iter().map(|&k| k as f64 / w).collect();
    let edges = (0..=n_bins).map(|i| lo + i as f64 * w).collect();
    let n_max = density.iter().copied().fold(0.0, f64::max);
    Ok(DensityOfStates { edges, density, n_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_sys(d: usize, seed: u64) -> SpectralSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpectralSystem::from_hamiltonian(&linalg::random_hermitian(d, &mut rng), "rand").unwrap()
    }

    #[test]
    fn evolve_at_zero_is_identity() {
        let sys = random_sys(5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = StateSP::pure(linalg::random_unit_vector(5, &mut rng)).unwrap();
        assert_eq!(evolve(&sys, &s, 0.0).unwrap().density_matrix(), s.density_matrix());
    }

    #[test]
    fn eigenstate_is_stationary() {
        let sys = random_sys(4, 3);
        let s = StateSP::pure(sys.eigenvector(2)).unwrap();
        let st = evolve(&sys, &s, 1.7).unwrap();
        assert!((st.density_matrix() - s.density_matrix()).camax() < 1e-12);
    }

    #[test]
    fn full_and_empty_projectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = StateSP::pure(linalg::random_unit_vector(6, &mut rng)).unwrap();
        assert!((expectation_p(&s, &ProjectorObservable::identity(6)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(expectation_p(&s, &ProjectorObservable::empty(6)).unwrap(), 0.0);
    }

    #[test]
    fn dephasing_two_level_superposition() {
        let sys = SpectralSystem::diagonal(vec![0.0, 1.0, 2.5], "diag").unwrap();
        let v = linalg::real_vec(&[1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0]);
        let avg = time_average_state(&sys, &StateSP::pure(v).unwrap()).unwrap();
        assert!((avg[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((avg[(1, 1)].re - 0.5).abs() < 1e-15);
        assert_eq!(avg[(0, 1)], c(0.0, 0.0));
    }

    #[test]
    fn degenerate_block_is_kept() {
        let sys = SpectralSystem::diagonal(vec![1.0, 1.0, 3.0], "deg").unwrap();
        let v = linalg::real_vec(&[0.6, 0.8, 0.0]);
        let s = StateSP::pure(v).unwrap();
        let avg = time_average_state(&sys, &s).unwrap();
        assert!((avg - s.density_matrix()).camax() < 1e-15);
    }

    #[test]
    fn signal_matches_direct_evolution() {
        let sys = random_sys(6, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let u = linalg::random_unitary(6, &mut rng);
        let s = StateSP::mixed(vec![(0.7, u.column(0).into_owned()), (0.3, u.column(1).into_owned())]).unwrap();
        let p = ProjectorObservable::sites(6, &[0, 3]).unwrap();
        let sig = Signal::new(&sys, &s, &p).unwrap();
        for &t in &[0.0, 0.4, 2.2, 13.0] {
            let direct = expectation_p(&evolve(&sys, &s, t).unwrap(), &p).unwrap();
            assert!((sig.value(t) - direct).abs() < 1e-12);
        }
        let avg = time_average_state(&sys, &s).unwrap();
        let tr = (avg * p.matrix()).trace().re;
        assert!((tr - sig.constant).abs() < 1e-12);
    }

    #[test]
    fn grid_sampler_matches_pointwise() {
        let sig = Signal { constant: 0.3, freqs: vec![0.5, 7.0, 40.0], cos: vec![0.1, -0.2, 0.05], sin: vec![0.0, 0.3, -0.01] };
        let n = 2000;
        let vals = sig.grid_values(0.0, 50.0, n, Exec::Sequential);
        assert_eq!(vals, sig.grid_values(0.0, 50.0, n, Exec::Parallel));
        for (i, v) in vals.iter().enumerate() {
            assert!((v - sig.value(quad::grid_point(0.0, 50.0, n, i))).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_gaps() {
        let sys = SpectralSystem::diagonal((0..5).map(|n| n as f64).collect(), "ho").unwrap();
        let g = gap_structure(&sys, EPS_GAP).unwrap();
        assert_eq!(g.max_gap_degeneracy, 4);
        assert_eq!(g.gaps[0], (1.0, 4));
    }

    #[test]
    fn box_gaps_small() {
        let sys = SpectralSystem::diagonal((1..=4).map(|n| (n * n) as f64).collect(), "box").unwrap();
        let g = gap_structure(&sys, EPS_GAP).unwrap();
        let vals: Vec<f64> = g.gaps.iter().map(|x| x.0).collect();
        assert_eq!(vals, vec![3.0, 5.0, 7.0, 8.0, 12.0, 15.0]);
        assert_eq!(g.max_gap_degeneracy, 1);
    }

    #[test]
    fn flat_spectrum_histogram_is_uniform() {
        let d = 400;
        let e: Vec<f64> = (0..d).map(|n| n as f64 / d as f64).collect();
        let dos = histogram_density(&e, 10).unwrap();
        let integral: f64 = dos.density.iter().sum::<f64>() * dos.bin_width();
        assert!((integral - d as f64).abs() < 1e-9);
        let spread = dos.density.iter().fold(0.0f64, |m, x| m.max((x - dos.density[0]).abs()));
        assert!(spread <= 1.0 / dos.bin_width() + 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(StateSP::pure(linalg::real_vec(&[1.0, 1.0])).is_err());
        assert!(StateSP::mixed(vec![(0.5, linalg::basis_vec(2, 0)), (0.5, linalg::basis_vec(2, 0))]).is_err());
        assert!(SpectralSystem::diagonal(vec![2.0, 1.0], "x").is_err());
        assert!(histogram_density(&[1.0], 4).is_err());
        let sys = random_sys(3, 1);
        let s = StateSP::pure(linalg::basis_vec(4, 0)).unwrap();
        assert!(matches!(evolve(&sys, &s, 1.0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let ts = TimeSeries::new(0.0, 1.0, vec![0.5, 0.25, 0.125], "m").unwrap();
        let csv = ts.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,value");
        assert_eq!(lines.len(), 4);
        let parsed: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(parsed, 0.25);
    }
}
