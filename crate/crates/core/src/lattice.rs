//! Free fermions on a lattice: hopping models, Majorana covariance
//! matrices, Pfaffians and the local equilibration checks.
//!
//! Majoranas are ordered by site: `c_{2k} = a_k + a_k^dag` and
//! `c_{2k+1} = -i (a_k - a_k^dag)`. The covariance matrix is
//! `Gamma_ij = (i/2) tr[rho [c_i, c_j]]`, so `<c_i c_j> = delta_ij - i Gamma_ij`.
//! With this convention a Gaussian expectation of an increasing string of
//! `2w` Majoranas is `(-i)^w pf(Gamma^R)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;

use crate::bounds::{C1, C2};
use crate::bridge::{self, CorrelationMatrix, Statistics};
use crate::linalg::{self, c, CMat, CVec};
use crate::spectral::{self, ProjectorObservable, Signal, SpectralSystem};
use crate::{Error, Exec, Result, C64};

/// Default momentum cut for the truncated density of states.
pub const DEFAULT_P0: f64 = PI / 20.0;
const ANTISYM_TOL: f64 = 1e-10;
const PHYSICAL_TOL: f64 = 1e-8;
const ANOMALOUS_TOL: f64 = 1e-10;
const LHS_MIN_SAMPLES: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    Ring,
    OpenChain,
}

/// Single-particle hopping Hamiltonian on `sites` sites.
#[derive(Debug, Clone)]
pub struct HoppingModel {
    pub sites: usize,
    pub geometry: Geometry,
    amplitudes: CMat,
    pub states_per_site: usize,
}

impl HoppingModel {
    /// `H = (1/2) sum_i (|i><i+1| + |i+1><i|)` with periodic boundary;
    /// spectrum `cos(2 pi k / L)`.
    pub fn ring(sites: usize) -> Result<Self> {
        if sites < 3 {
            return Err(Error::invalid("a ring needs at least 3 sites"));
        }
        let h = nearest_neighbour(sites, true);
        Ok(Self { sites, geometry: Geometry::Ring, amplitudes: h, states_per_site: 1 })
    }

    pub fn open_chain(sites: usize) -> Result<Self> {
        if sites < 2 {
            return Err(Error::invalid("a chain needs at least 2 sites"));
        }
        let h = nearest_neighbour(sites, false);
        Ok(Self { sites, geometry: Geometry::OpenChain, amplitudes: h, states_per_site: 1 })
    }

    /// Arbitrary Hermitian amplitudes.
    pub fn with_amplitudes(amplitudes: CMat, geometry: Geometry) -> Result<Self> {
        if amplitudes.nrows() != amplitudes.ncols() || amplitudes.nrows() == 0 {
            return Err(Error::invalid("amplitude matrix must be square and nonempty"));
        }
        let herr = linalg::hermiticity_error(&amplitudes);
        if herr > 1e-12 {
            return Err(Error::invalid(format!("amplitudes not Hermitian ({herr:.2e})")));
        }
        Ok(Self { sites: amplitudes.nrows(), geometry, amplitudes, states_per_site: 1 })
    }

    pub fn amplitudes(&self) -> &CMat {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.sites * self.states_per_site
    }

    pub fn system(&self) -> Result<SpectralSystem> {
        SpectralSystem::from_hamiltonian(&self.amplitudes, format!("{:?} L={}", self.geometry, self.sites))
    }
}

fn nearest_neighbour(l: usize, periodic: bool) -> CMat {
    let mut h = CMat::zeros(l, l);
    let bonds = if periodic { l } else { l - 1 };
    for i in 0..bonds {
        let j = (i + 1) % l;
        h[(i, j)] += c(0.5, 0.0);
        h[(j, i)] += c(0.5, 0.0);
    }
    h
}

/// Majorana covariance matrix of a fermionic Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix(DMatrix<f64>);

impl CovarianceMatrix {
    /// Checks antisymmetry and that all singular values are at most one.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n != m.ncols() || n % 2 != 0 {
            return Err(Error::invalid("covariance matrix must be square with even dimension"));
        }
        let asym = (&m + m.transpose()).amax();
        if asym > ANTISYM_TOL {
            return Err(Error::invalid(format!("covariance matrix not antisymmetric ({asym:.2e})")));
        }
        let g = (&m - m.transpose()) * 0.5;
        if n > 0 {
            let top = g.singular_values().max();
            if top > 1.0 + PHYSICAL_TOL {
                return Err(Error::invalid(format!("singular value {top} exceeds one")));
            }
        }
        Ok(Self(g))
    }

    pub fn vacuum(modes: usize) -> Self {
        let mut g = DMatrix::zeros(2 * modes, 2 * modes);
        for k in 0..modes {
            g[(2 * k, 2 * k + 1)] = -1.0;
            g[(2 * k + 1, 2 * k)] = 1.0;
        }
        Self(g)
    }

    /// Number-conserving state with `G_jk = tr[rho a_j^dag a_k]`.
    pub fn from_two_point(g: &CMat) -> Result<Self> {
        let corr = CorrelationMatrix::new(g.clone())?;
        let (occ, _) = linalg::eigh(corr.matrix());
        if occ.iter().any(|&n| n < -PHYSICAL_TOL || n > 1.0 + PHYSICAL_TOL) {
            return Err(Error::invalid("two-point matrix has eigenvalues outside [0, 1]"));
        }
        Ok(Self(gamma_from_two_point(g)))
    }

    /// Sites listed in `occupied` filled, the rest empty.
    pub fn product_state(occupied: &[bool]) -> Self {
        let g = CMat::from_diagonal(&CVec::from_iterator(
            occupied.len(),
            occupied.iter().map(|&o| c(if o { 1.0 } else { 0.0 }, 0.0)),
        ));
        Self(gamma_from_two_point(&g))
    }

    /// Alternating filling starting with an occupied site 0.
    pub fn neel(modes: usize) -> Self {
        let occ: Vec<bool> = (0..modes).map(|i| i % 2 == 0).collect();
        Self::product_state(&occ)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn modes(&self) -> usize {
        self.0.nrows() / 2
    }

    /// `<a_j^dag a_k>`.
    pub fn two_point(&self) -> CMat {
        let k = self.modes();
        CMat::from_fn(k, k, |j, l| {
            let (xj, pj, xl, pl) = (2 * j, 2 * j + 1, 2 * l, 2 * l + 1);
            let i = c(0.0, 1.0);
            (self.cc(xj, xl) + i * self.cc(xj, pl) - i * self.cc(pj, xl) + self.cc(pj, pl)) * 0.25
        })
    }

    /// `<a_j a_k>`; vanishes for number-conserving states.
    pub fn anomalous(&self) -> CMat {
        let k = self.modes();
        CMat::from_fn(k, k, |j, l| {
            let (xj, pj, xl, pl) = (2 * j, 2 * j + 1, 2 * l, 2 * l + 1);
            let i = c(0.0, 1.0);
            (self.cc(xj, xl) + i * self.cc(xj, pl) + i * self.cc(pj, xl) - self.cc(pj, pl)) * 0.25
        })
    }

    /// `||Gamma Gamma^T - 1||_max`; zero for pure states.
    pub fn purity_error(&self) -> f64 {
        let n = self.0.nrows();
        (&self.0 * self.0.transpose() - DMatrix::identity(n, n)).amax()
    }

    /// `<c_a c_b>`.
    fn cc(&self, a: usize, b: usize) -> C64 {
        let d = if a == b { 1.0 } else { 0.0 };
        c(d, -self.0[(a, b)])
    }

    /// Occupation of the (possibly unnormalized) mode `a(v) = sum conj(v_i) a_i`,
    /// read off the pair of Majoranas it defines.
    pub fn mode_density(&self, v: &CVec) -> Result<f64> {
        crate::error::check_dim(self.modes(), v.len())?;
        let n = self.0.nrows();
        let mut rx = nalgebra::DVector::zeros(n);
        let mut rp = nalgebra::DVector::zeros(n);
        for (j, z) in v.iter().enumerate() {
            rx[2 * j] = z.re;
            rx[2 * j + 1] = z.im;
            rp[2 * j] = -z.im;
            rp[2 * j + 1] = z.re;
        }
        Ok(0.5 * (v.norm_squared() + rx.dot(&(&self.0 * rp))))
    }

    /// Covariance of the Majoranas listed in `idx`.
    pub fn restrict(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.0[(idx[a], idx[b])])
    }
}

fn gamma_from_two_point(g: &CMat) -> DMatrix<f64> {
    let k = g.nrows();
    let mut out = DMatrix::zeros(2 * k, 2 * k);
    for j in 0..k {
        for l in 0..k {
            let z = g[(j, l)];
            let delta = if j == l { 1.0 } else { 0.0 };
            if j != l {
                out[(2 * j, 2 * l)] = -2.0 * z.im;
                out[(2 * j + 1, 2 * l + 1)] = -2.0 * z.im;
            }
            out[(2 * j, 2 * l + 1)] = 2.0 * z.re - delta;
            out[(2 * j + 1, 2 * l)] = -(2.0 * z.re - delta);
        }
    }
    out
}

/// Random number-conserving Gaussian state on `modes` sites: Haar orbitals
/// with occupations in `{0, 1}` (pure) or uniform on `[0, 1]` (mixed).
pub fn random_gaussian<R: Rng + ?Sized>(modes: usize, pure: bool, rng: &mut R) -> CovarianceMatrix {
    let w = linalg::random_unitary(modes, rng);
    let occ: Vec<f64> =
        (0..modes).map(|_| if pure { f64::from(u8::from(rng.gen_bool(0.5))) } else { rng.gen::<f64>() }).collect();
    let mut g = CMat::zeros(modes, modes);
    for (a, n) in occ.iter().enumerate() {
        let col = w.column(a);
        g += col * col.adjoint() * c(*n, 0.0);
    }
    CovarianceMatrix(gamma_from_two_point(&g))
}

/// Orthogonal Majorana rotation for `a(t) = e^{-iht} a`.
pub fn majorana_rotation(u: &CMat) -> DMatrix<f64> {
    let k = u.nrows();
    let mut o = DMatrix::zeros(2 * k, 2 * k);
    for j in 0..k {
        for l in 0..k {
            let z = u[(j, l)];
            o[(2 * j, 2 * l)] = z.re;
            o[(2 * j, 2 * l + 1)] = -z.im;
            o[(2 * j + 1, 2 * l)] = z.im;
            o[(2 * j + 1, 2 * l + 1)] = z.re;
        }
    }
    o
}

/// `Gamma(t) = O(t) Gamma O(t)^T`.
pub fn evolve_covariance(model: &HoppingModel, gamma: &CovarianceMatrix, t: f64) -> Result<CovarianceMatrix> {
    let sys = model.system()?;
    evolve_with(&sys, gamma, t)
}

/// Same as [`evolve_covariance`] with a prebuilt spectral decomposition.
pub fn evolve_with(sys: &SpectralSystem, gamma: &CovarianceMatrix, t: f64) -> Result<CovarianceMatrix> {
    crate::error::check_dim(sys.dim(), gamma.modes())?;
    let u = linalg::propagator(sys.energies(), &sys.eigenvectors(), t);
    let o = majorana_rotation(&u);
    let g = &o * gamma.matrix() * o.transpose();
    Ok(CovarianceMatrix((&g - g.transpose()) * 0.5))
}

fn check_antisymmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::invalid("matrix must be square"));
    }
    if a.nrows() % 2 != 0 {
        return Err(Error::invalid("pfaffian of an odd-dimensional matrix"));
    }
    let asym = (a + a.transpose()).amax();
    if asym > ANTISYM_TOL * a.amax().max(1.0) {
        return Err(Error::invalid(format!("matrix not antisymmetric ({asym:.2e})")));
    }
    Ok(())
}

/// Pfaffian by Householder tridiagonalization.
pub fn pfaffian(a: &DMatrix<f64>) -> Result<f64> {
    check_antisymmetric(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(1.0);
    }
    let mut m = (a - a.transpose()) * 0.5;
    let mut pf = 1.0;
    for i in 0..n.saturating_sub(2) {
        let tail: Vec<f64> = (i + 1..n).map(|r| m[(r, i)]).collect();
        let sigma: f64 = tail[1..].iter().map(|x| x * x).sum();
        let alpha = if sigma == 0.0 {
            tail[0]
        } else {
            let norm = (tail[0] * tail[0] + sigma).sqrt();
            let mut v = tail.clone();
            let alpha = if tail[0] <= 0.0 {
                v[0] -= norm;
                norm
            } else {
                v[0] += norm;
                -norm
            };
            let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= vn);
            // B <- H B H with H = 1 - 2 v v^T, i.e. B += v w^T - w v^T, w = 2 B v
            let k = n - i - 1;
            let mut w = vec![0.0; k];
            for (r, wr) in w.iter_mut().enumerate() {
                *wr = 2.0 * (0..k).map(|s| m[(i + 1 + r, i + 1 + s)] * v[s]).sum::<f64>();
            }
            for r in 0..k {
                for s in 0..k {
                    m[(i + 1 + r, i + 1 + s)] += v[r] * w[s] - w[r] * v[s];
                }
            }
            pf = -pf;
            alpha
        };
        m[(i + 1, i)] = alpha;
        m[(i, i + 1)] = -alpha;
        for r in i + 2..n {
            m[(r, i)] = 0.0;
            m[(i, r)] = 0.0;
        }
        if i % 2 == 0 {
            pf *= -alpha;
        }
    }
    Ok(pf * m[(n - 2, n - 1)])
}

/// Expansion along the first row; exponential cost, used as a cross-check.
pub fn pfaffian_cofactor(a: &DMatrix<f64>) -> Result<f64> {
    check_antisymmetric(a)?;
    if a.nrows() > 8 {
        return Err(Error::DimensionCap { dim: a.nrows(), cap: 8 });
    }
    let idx: Vec<usize> = (0..a.nrows()).collect();
    Ok(cofactor(a, &idx))
}

fn cofactor(a: &DMatrix<f64>, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 1.0;
    }
    let mut total = 0.0;
    for j in 1..idx.len() {
        let rest: Vec<usize> = idx[1..].iter().copied().filter(|&x| x != idx[j]).collect();
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        total += sign * a[(idx[0], idx[j])] * cofactor(a, &rest);
    }
    total
}

fn check_string(modes2: usize, string: &[usize]) -> Result<()> {
    if let Some(&bad) = string.iter().find(|&&i| i >= modes2) {
        return Err(Error::invalid(format!("majorana index {bad} out of range (have {modes2})")));
    }
    if string.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("majorana string must be strictly increasing"));
    }
    Ok(())
}

fn minus_i_pow(w: usize) -> C64 {
    match w % 4 {
        0 => c(1.0, 0.0),
        1 => c(0.0, -1.0),
        2 => c(-1.0, 0.0),
        _ => c(0.0, 1.0),
    }
}

/// `tr[rho c_{i1} ... c_{i2w}]` for a strictly increasing index string.
pub fn wick_expectation(gamma: &CovarianceMatrix, string: &[usize]) -> Result<C64> {
    check_string(gamma.0.nrows(), string)?;
    if string.len() % 2 == 1 {
        return Ok(c(0.0, 0.0));
    }
    let pf = pfaffian(&gamma.restrict(string))?;
    Ok(minus_i_pow(string.len() / 2) * pf)
}

/// Orthogonal `O` and `lambda_n >= 0` with
/// `O Gamma O^T = (+)_n [[0, lambda_n], [-lambda_n, 0]]`.
#[derive(Debug, Clone)]
pub struct CanonicalForm {
    pub rotation: DMatrix<f64>,
    pub lambdas: Vec<f64>,
}

impl CanonicalForm {
    pub fn block_matrix(&self) -> DMatrix<f64> {
        let n = 2 * self.lambdas.len();
        let mut b = DMatrix::zeros(n, n);
        for (k, &l) in self.lambdas.iter().enumerate() {
            b[(2 * k, 2 * k + 1)] = l;
            b[(2 * k + 1, 2 * k)] = -l;
        }
        b
    }

    /// `O^T B O`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.rotation.transpose() * self.block_matrix() * &self.rotation
    }
}

pub fn canonical_form(gamma: &CovarianceMatrix) -> Result<CanonicalForm> {
    let n = gamma.0.nrows();
    if n == 0 {
        return Ok(CanonicalForm { rotation: DMatrix::zeros(0, 0), lambdas: vec![] });
    }
    let schur = nalgebra::linalg::Schur::try_new(gamma.0.clone(), 1e-15, 0)
        .ok_or_else(|| Error::precondition("real Schur decomposition did not converge"))?;
    let (q, t) = schur.unpack();
    let t = (&t - t.transpose()) * 0.5;
    let scale = 1e-12 * gamma.0.amax().max(1.0);
    let mut rows: Vec<usize> = Vec::with_capacity(n);
    let mut lambdas = Vec::with_capacity(n / 2);
    let mut zeros = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > scale {
            let l = t[(i, i + 1)];
            if l >= 0.0 {
                rows.extend([i, i + 1]);
            } else {
                rows.extend([i + 1, i]);
            }
            lambdas.push(l.abs());
            i += 2;
        } else {
            zeros.push(i);
            i += 1;
        }
    }
    for pair in zeros.chunks(2) {
        rows.extend(pair);
        lambdas.push(0.0);
    }
    let rotation = DMatrix::from_fn(n, n, |r, col| q[(col, rows[r])]);
    Ok(CanonicalForm { rotation, lambdas })
}

/// The two evaluations of `tr[rho(t) a_x^dag a_y]`.
#[derive(Debug, Clone, Copy)]
pub struct PhaseCorrelator {
    pub direct: C64,
    pub via_densities: C64,
}

/// Direct from `Gamma(t)` and through
/// `a_x^dag a_y = (d1^dag d1 - d2^dag d2 - i d3^dag d3 + i d4^dag d4) / 2`
/// with `d1,2 = (a_x +- a_y)/sqrt2`, `d3,4 = (a_x +- i a_y)/sqrt2`.
pub fn phase_correlator(
    model: &HoppingModel,
    gamma0: &CovarianceMatrix,
    x: usize,
    y: usize,
    t: f64,
) -> Result<PhaseCorrelator> {
    let v = model.sites;
    if x >= v || y >= v {
        return Err(Error::invalid(format!("sites ({x}, {y}) outside 0..{v}")));
    }
    let g = evolve_covariance(model, gamma0, t)?;
    let direct = g.two_point()[(x, y)];
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mode = |cx: C64, cy: C64| {
        let mut m = CVec::zeros(v);
        m[x] += cx * r;
        m[y] += cy * r;
        m
    };
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    // a(v) = sum conj(v_i) a_i, so the coefficient of a_y is conjugated
    let n1 = g.mode_density(&mode(one, one))?;
    let n2 = g.mode_density(&mode(one, -one))?;
    let n3 = g.mode_density(&mode(one, -i))?;
    let n4 = g.mode_density(&mode(one, i))?;
    let via_densities = c(0.5 * (n1 - n2), 0.5 * (n4 - n3));
    Ok(PhaseCorrelator { direct, via_densities })
}

/// `const + sum_j z_j e^{i w_j t}` with distinct frequencies.
#[derive(Debug, Clone, Default)]
pub struct ComplexSignal {
    pub constant: C64,
    /// Sorted by frequency, all nonzero.
    pub terms: Vec<(f64, C64)>,
}

impl ComplexSignal {
    /// Merges frequencies closer than `tol`; those within `tol` of zero go
    /// into the constant.
    pub fn merge(mut raw: Vec<(f64, C64)>, tol: f64) -> Self {
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = Self::default();
        for (w, z) in raw {
            if w.abs() <= tol {
                out.constant += z;
                continue;
            }
            match out.terms.last_mut() {
                Some(last) if (w - last.0).abs() <= tol => last.1 += z,
                _ => out.terms.push((w, z)),
            }
        }
        out
    }

    pub fn value(&self, t: f64) -> C64 {
        self.constant + self.terms.iter().map(|(w, z)| z * C64::from_polar(1.0, w * t)).sum::<C64>()
    }

    /// Infinite-time average of the product with `other`.
    pub fn product_average(&self, other: &Self, tol: f64) -> C64 {
        let mut acc = self.constant * other.constant;
        for (w, z) in &self.terms {
            let target = -w;
            let start = other.terms.partition_point(|(v, _)| *v < target - tol);
            for (v, y) in &other.terms[start..] {
                if *v > target + tol {
                    break;
                }
                acc += z * y;
            }
        }
        acc
    }

    fn combine(parts: &[(&Self, C64, bool)], shift: C64, tol: f64) -> Self {
        let mut raw = Vec::new();
        let mut constant = shift;
        for (s, k, conjugate) in parts {
            if *conjugate {
                constant += k * s.constant.conj();
                raw.extend(s.terms.iter().map(|(w, z)| (-w, k * z.conj())));
            } else {
                constant += k * s.constant;
                raw.extend(s.terms.iter().map(|(w, z)| (*w, k * z)));
            }
        }
        let mut out = Self::merge(raw, tol);
        out.constant += constant;
        out
    }
}

/// Tolerance used to identify equal frequencies for a spectrum.
fn freq_tol(sys: &SpectralSystem) -> f64 {
    spectral::EPS_GAP * sys.energy_range().max(1.0)
}

/// `G_jk(t) = tr[rho(t) a_j^dag a_k]` as oscillator sums, for number-conserving
/// initial data `g0`.
pub struct TwoPointDynamics {
    energies: Vec<f64>,
    vecs: CMat,
    /// `V^T G0 conj(V)` in the eigenbasis.
    kernel: CMat,
    tol: f64,
}

impl TwoPointDynamics {
    pub fn new(sys: &SpectralSystem, g0: &CMat) -> Result<Self> {
        crate::error::check_dim(sys.dim(), g0.nrows())?;
        let vecs = sys.eigenvectors();
        let kernel = vecs.transpose() * g0 * vecs.map(|z| z.conj());
        Ok(Self { energies: sys.energies().to_vec(), vecs, kernel, tol: freq_tol(sys) })
    }

    pub fn signal(&self, j: usize, k: usize) -> ComplexSignal {
        let d = self.energies.len();
        let mut raw = Vec::with_capacity(d * d);
        for m in 0..d {
            let a = self.vecs[(j, m)].conj();
            if a.norm_sqr() == 0.0 {
                continue;
            }
            for n in 0..d {
                let z = a * self.kernel[(m, n)] * self.vecs[(k, n)];
                if z != c(0.0, 0.0) {
                    raw.push((self.energies[m] - self.energies[n], z));
                }
            }
        }
        ComplexSignal::merge(raw, self.tol)
    }

    /// Signal of `Gamma_ab(t)` for Majorana indices of the given sites.
    pub fn gamma_signal(&self, a: usize, b: usize) -> ComplexSignal {
        let (j, l) = (a / 2, b / 2);
        if a == b {
            return ComplexSignal::default();
        }
        let g = self.signal(j, l);
        let delta = if j == l { c(1.0, 0.0) } else { c(0.0, 0.0) };
        match (a % 2, b % 2) {
            // -2 Im G = i (G - conj G)
            (0, 0) | (1, 1) => ComplexSignal::combine(&[(&g, c(0.0, 1.0), false), (&g, c(0.0, -1.0), true)], c(0.0, 0.0), self.tol),
            // 2 Re G - delta
            (0, 1) => ComplexSignal::combine(&[(&g, c(1.0, 0.0), false), (&g, c(1.0, 0.0), true)], -delta, self.tol),
            _ => ComplexSignal::combine(&[(&g, c(-1.0, 0.0), false), (&g, c(-1.0, 0.0), true)], delta, self.tol),
        }
    }
}

/// Two-point function time series `tr[rho(t) a_x^dag a_y]` and its dephased average.
pub fn correlator_signal(model: &HoppingModel, gamma0: &CovarianceMatrix, x: usize, y: usize) -> Result<ComplexSignal> {
    if x >= model.sites || y >= model.sites {
        return Err(Error::invalid("site outside the lattice"));
    }
    require_number_conserving(gamma0)?;
    let sys = model.system()?;
    Ok(TwoPointDynamics::new(&sys, &gamma0.two_point())?.signal(x, y))
}

/// Uniform average of `|C(t) - <C>|` over `[0, T]`.
pub fn fluctuation_amplitude(sig: &ComplexSignal, big_t: f64, exec: Exec) -> f64 {
    let wmax = sig.terms.iter().map(|(w, _)| w.abs()).fold(0.0, f64::max);
    let n = spectral::required_samples(big_t, wmax, LHS_MIN_SAMPLES);
    let vals = exec.map(n, |i| (sig.value(crate::quad::grid_point(0.0, big_t, n, i)) - sig.constant).norm());
    crate::quad::trapezoid_mean(&vals)
}

/// Truncated density of states of the ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedDos {
    /// `L / (pi sin p0)`.
    pub n_max: f64,
    /// `2 p0 / pi`.
    pub excluded_fraction: f64,
    /// Eigenvalues with `|E| > cos p0`, counted directly.
    pub excluded_count: usize,
    /// Largest histogram density inside the kept window.
    pub histogram_n_max: f64,
}

pub fn truncated_dos(model: &HoppingModel, p0: f64) -> Result<TruncatedDos> {
    if model.geometry != Geometry::Ring {
        return Err(Error::precondition("truncated density of states is derived for the ring"));
    }
    if !(p0 > 0.0 && p0 < PI / 2.0) {
        return Err(Error::invalid("p0 must lie in (0, pi/2)"));
    }
    let l = model.sites as f64;
    let cut = p0.cos();
    let energies = ring_energies(model.sites);
    let excluded_count = energies.iter().filter(|e| e.abs() > cut + 1e-12).count();
    let kept: Vec<f64> = energies.iter().copied().filter(|e| e.abs() <= cut + 1e-12).collect();
    let bins = (kept.len() as f64).sqrt().ceil().max(2.0) as usize;
    let histogram_n_max = spectral::histogram_density(&kept, bins)?.n_max;
    Ok(TruncatedDos { n_max: l / (PI * p0.sin()), excluded_fraction: 2.0 * p0 / PI, excluded_count, histogram_n_max })
}

/// `cos(2 pi k / L)`, sorted.
pub fn ring_energies(sites: usize) -> Vec<f64> {
    let mut e: Vec<f64> = (0..sites).map(|k| (2.0 * PI * k as f64 / sites as f64).cos()).collect();
    e.sort_by(f64::total_cmp);
    e
}

/// `L / (pi sqrt(1 - E^2))`.
pub fn ring_density(sites: usize, e: f64) -> f64 {
    sites as f64 / (PI * (1.0 - e * e).sqrt())
}

/// Spectral inputs of the local bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeBoundInputs {
    pub d: usize,
    pub gap_degeneracy: usize,
    pub level_degeneracy: usize,
    pub states_per_site: usize,
    pub n_max: f64,
    pub p0: f64,
}

impl LatticeBoundInputs {
    pub fn new(model: &HoppingModel, p0: f64) -> Result<Self> {
        let dos = truncated_dos(model, p0)?;
        let gaps = spectral::gap_structure_of(&ring_energies(model.sites), spectral::EPS_GAP);
        Ok(Self {
            d: model.dim(),
            gap_degeneracy: gaps.max_gap_degeneracy,
            level_degeneracy: gaps.max_level_degeneracy,
            states_per_site: model.states_per_site,
            n_max: dos.n_max,
            p0,
        })
    }

    /// `c1 n_d^2 s^2`.
    pub fn c3(&self) -> f64 {
        C1 * (self.level_degeneracy * self.states_per_site).pow(2) as f64
    }

    /// `sqrt(c3 (D_G / d + c2 n_max / T))`.
    pub fn root(&self, big_t: f64) -> f64 {
        (self.c3() * (self.gap_degeneracy as f64 / self.d as f64 + C2 * self.n_max / big_t)).sqrt()
    }

    /// Single-mode right-hand side for a mode on `l` sites, without slack.
    pub fn single_mode_rhs(&self, l: usize, big_t: f64) -> f64 {
        l as f64 * self.root(big_t)
    }

    /// `2 p0 l / pi`: weight a mode on `l` sites can carry in the excluded band.
    pub fn leakage_budget(&self, l: usize) -> f64 {
        2.0 * self.p0 * l as f64 / PI
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Additive truncation slack included in `rhs`.
    pub slack: f64,
    /// Measured weight of the mode in the excluded band.
    pub leakage: f64,
    pub sites: usize,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

fn require_ring(model: &HoppingModel) -> Result<()> {
    if model.geometry != Geometry::Ring {
        return Err(Error::precondition("local bounds are evaluated on the ring"));
    }
    Ok(())
}

fn require_number_conserving(gamma: &CovarianceMatrix) -> Result<()> {
    let anomalous = gamma.anomalous().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if anomalous > ANOMALOUS_TOL {
        return Err(Error::precondition(format!(
            "state has anomalous correlations ({anomalous:.2e}); pairing states are not covered"
        )));
    }
    Ok(())
}

fn lhs_samples(sys: &SpectralSystem, big_t: f64) -> usize {
    spectral::required_samples(big_t, sys.energy_range(), LHS_MIN_SAMPLES)
}

/// Weight of `phi` in the eigenstates with `|E| > cos p0`.
fn excluded_weight(sys: &SpectralSystem, phi: &CVec, p0: f64) -> f64 {
    let a = sys.to_eigen(phi);
    sys.energies().iter().zip(a.iter()).filter(|(e, _)| e.abs() > p0.cos() + 1e-12).map(|(_, z)| z.norm_sqr()).sum()
}

/// Average of `|tr[rho(t) b^dag b] - tr[<rho> b^dag b]|` over `[0, T]` for the
/// normalized mode `phi`, against the local bound plus truncation slack.
pub fn single_mode_bound_check(
    model: &HoppingModel,
    gamma0: &CovarianceMatrix,
    phi: &CVec,
    big_t: f64,
    p0: f64,
    exec: Exec,
) -> Result<BoundCheck> {
    require_ring(model)?;
    require_number_conserving(gamma0)?;
    crate::error::check_dim(model.dim(), phi.len())?;
    if (phi.norm() - 1.0).abs() > linalg::INPUT_TOL {
        return Err(Error::invalid("mode must be normalized"));
    }
    if !(big_t > 0.0) {
        return Err(Error::invalid("averaging time must be positive"));
    }
    let sys = model.system()?;
    let raw: Vec<CVec> = (0..model.sites).map(|i| linalg::basis_vec(model.sites, i)).collect();
    let corr = CorrelationMatrix::new(gamma0.two_point())?;
    let ens = bridge::diagonalize_correlations(Statistics::Fermion, &corr, &raw)?;
    let p = ProjectorObservable::modes(model.dim(), vec![phi.clone()])?;
    let lhs = if ens.n_particles() <= 0.0 {
        0.0
    } else {
        let red = bridge::reduce(&ens, &p)?;
        let sig = Signal::new(&sys, &red.state, &red.projector)?;
        let n = lhs_samples(&sys, big_t);
        let vals = sig.grid_values(0.0, big_t, n, exec);
        let dev: Vec<f64> = vals.iter().map(|v| (v - sig.constant).abs()).collect();
        red.n_particles * crate::quad::trapezoid_mean(&dev)
    };
    let inputs = LatticeBoundInputs::new(model, p0)?;
    let l = phi.iter().filter(|z| z.norm() > 1e-14).count();
    let slack = inputs.leakage_budget(l);
    Ok(BoundCheck {
        lhs,
        rhs: inputs.single_mode_rhs(l, big_t) + slack,
        slack,
        leakage: excluded_weight(&sys, phi, p0),
        sites: l,
    })
}

/// Operator on `K` sites written in the local Majorana basis: `c_{2k}`,
/// `c_{2k+1}` belong to `sites[k]`.
#[derive(Debug, Clone)]
pub struct MajoranaOperator {
    pub sites: Vec<usize>,
    pub terms: Vec<(Vec<usize>, C64)>,
}

impl MajoranaOperator {
    pub fn new(sites: Vec<usize>, terms: Vec<(Vec<usize>, C64)>) -> Result<Self> {
        let mut sorted = sites.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != sites.len() {
            return Err(Error::invalid("repeated site"));
        }
        for (s, _) in &terms {
            check_string(2 * sites.len(), s)?;
        }
        Ok(Self { sites, terms })
    }

    pub fn identity(site: usize) -> Self {
        Self { sites: vec![site], terms: vec![(vec![], c(1.0, 0.0))] }
    }

    /// `n = (1 + i c_0 c_1) / 2`.
    pub fn density(site: usize) -> Self {
        Self { sites: vec![site], terms: vec![(vec![], c(0.5, 0.0)), (vec![0, 1], c(0.0, 0.5))] }
    }

    /// `a_x^dag a_y + a_y^dag a_x = (i/2)(c_0 c_3 - c_1 c_2)`.
    pub fn hopping(x: usize, y: usize) -> Self {
        Self { sites: vec![x, y], terms: vec![(vec![0, 3], c(0.0, 0.5)), (vec![1, 2], c(0.0, -0.5))] }
    }

    /// `n_x n_y`.
    pub fn density_product(x: usize, y: usize) -> Self {
        Self {
            sites: vec![x, y],
            terms: vec![
                (vec![], c(0.25, 0.0)),
                (vec![0, 1], c(0.0, 0.25)),
                (vec![2, 3], c(0.0, 0.25)),
                (vec![0, 1, 2, 3], c(-0.25, 0.0)),
            ],
        }
    }

    /// Sum of two operators on the same sites.
    pub fn plus(mut self, other: Self) -> Result<Self> {
        if self.sites != other.sites {
            return Err(Error::invalid("operators act on different sites"));
        }
        self.terms.extend(other.terms);
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.sites.len()
    }

    /// `max |m_R|` after collecting equal strings.
    pub fn max_coefficient(&self) -> f64 {
        self.collected().iter().map(|(_, z)| z.norm()).fold(0.0, f64::max)
    }

    /// Sum of `|m_R|` over strings made of whole site pairs.
    pub fn paired_weight(&self) -> f64 {
        self.collected()
            .iter()
            .filter(|(s, _)| s.len() % 2 == 0 && s.chunks(2).all(|p| p[0] % 2 == 0 && p[1] == p[0] + 1))
            .fold(0.0, |acc, (_, z)| acc + z.norm())
    }

    fn collected(&self) -> Vec<(Vec<usize>, C64)> {
        let mut out: Vec<(Vec<usize>, C64)> = Vec::new();
        for (s, z) in &self.terms {
            match out.iter_mut().find(|(t, _)| t == s) {
                Some(e) => e.1 += z,
                None => out.push((s.clone(), *z)),
            }
        }
        out
    }

    fn global(&self, local: &[usize]) -> Vec<usize> {
        local.iter().map(|&a| 2 * self.sites[a / 2] + a % 2).collect()
    }

    /// `tr[rho M]` through Wick's theorem.
    pub fn expectation(&self, gamma: &CovarianceMatrix) -> Result<C64> {
        let mut acc = c(0.0, 0.0);
        for (s, z) in &self.terms {
            let mut g = self.global(s);
            // global order can differ from local order when sites are unsorted
            let sign = sort_with_sign(&mut g);
            acc += z * sign * wick_expectation(gamma, &g)?;
        }
        Ok(acc)
    }
}

/// Sorts distinct indices, returning the permutation sign.
fn sort_with_sign(v: &mut [usize]) -> f64 {
    let mut sign = 1.0;
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    sign
}

#[derive(Debug, Clone, Copy)]
pub struct MultiModeCheck {
    pub lhs: f64,
    /// `2^{ls+2} m s l^2 sqrt(c3 (D_G/d + c2 n_max / T))`.
    pub rhs: f64,
    /// `4 m' l K sqrt(...)`, with `m'` summed over paired strings of the site basis.
    pub rhs_paired: f64,
    pub m: f64,
    pub m_paired: f64,
    /// Infinite-time average of `tr[rho(t) M]`.
    pub average: C64,
}

impl MultiModeCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// Infinite-time average of `tr[rho(t) M]`; strings longer than four are
/// not supported.
pub fn average_expectation(dynamics: &TwoPointDynamics, op: &MajoranaOperator) -> Result<C64> {
    let tol = dynamics.tol;
    let mut acc = c(0.0, 0.0);
    for (s, z) in &op.terms {
        let mut g = op.global(s);
        let sign = sort_with_sign(&mut g);
        let avg = match g.len() {
            0 => c(1.0, 0.0),
            n if n % 2 == 1 => c(0.0, 0.0),
            2 => minus_i_pow(1) * dynamics.gamma_signal(g[0], g[1]).constant,
            4 => {
                let sg = |a: usize, b: usize| dynamics.gamma_signal(g[a], g[b]);
                let pf = sg(0, 1).product_average(&sg(2, 3), tol) - sg(0, 2).product_average(&sg(1, 3), tol)
                    + sg(0, 3).product_average(&sg(1, 2), tol);
                minus_i_pow(2) * pf
            }
            n => {
                return Err(Error::precondition(format!("time average of a {n}-Majorana string is not supported")));
            }
        };
        acc += z * sign * avg;
    }
    Ok(acc)
}

/// Eigen-decomposition cached for evaluating local two-point blocks.
struct LocalEvolution<'a> {
    energies: &'a [f64],
    vecs: CMat,
    conj_vecs: CMat,
}

impl<'a> LocalEvolution<'a> {
    fn new(sys: &'a SpectralSystem) -> Self {
        let vecs = sys.eigenvectors();
        let conj_vecs = vecs.map(|z| z.conj());
        Self { energies: sys.energies(), vecs, conj_vecs }
    }

    /// `G_jk(t)` for the listed sites, from `G(t) = conj(U) G0 U^T`.
    fn two_point(&self, g0: &CMat, sites: &[usize], t: f64) -> CMat {
        let d = self.energies.len();
        // row j of U = V diag(phase) V^dag
        let rows: Vec<CVec> = sites
            .iter()
            .map(|&j| {
                let scaled = CVec::from_iterator(
                    d,
                    (0..d).map(|m| self.vecs[(j, m)] * C64::from_polar(1.0, -self.energies[m] * t)),
                );
                &self.conj_vecs * scaled
            })
            .collect();
        let pushed: Vec<CVec> = rows.iter().map(|r| g0 * r).collect();
        let k = sites.len();
        CMat::from_fn(k, k, |a, b| rows[a].dotc(&pushed[b]))
    }
}

/// Average of `|tr[rho(t) M] - tr[<rho> M]|` over `[0, T]` with Wick
/// expectations, against the multi-mode bound.
pub fn multi_mode_bound_check(
    model: &HoppingModel,
    gamma0: &CovarianceMatrix,
    op: &MajoranaOperator,
    big_t: f64,
    p0: f64,
    exec: Exec,
) -> Result<MultiModeCheck> {
    require_ring(model)?;
    require_number_conserving(gamma0)?;
    crate::error::check_dim(model.sites, gamma0.modes())?;
    if op.sites.iter().any(|&s| s >= model.sites) {
        return Err(Error::invalid("operator site outside the lattice"));
    }
    if !(big_t > 0.0) {
        return Err(Error::invalid("averaging time must be positive"));
    }
    let sys = model.system()?;
    let g0 = gamma0.two_point();
    let dynamics = TwoPointDynamics::new(&sys, &g0)?;
    let average = average_expectation(&dynamics, op)?;
    let n = lhs_samples(&sys, big_t);
    let local = LocalEvolution::new(&sys);
    let local_op = MajoranaOperator {
        sites: (0..op.k()).collect(),
        terms: op.terms.clone(),
    };
    let devs: Vec<Result<f64>> = exec.map(n, |i| {
        let t = crate::quad::grid_point(0.0, big_t, n, i);
        let g = local.two_point(&g0, &op.sites, t);
        let gamma = CovarianceMatrix(gamma_from_two_point(&g));
        Ok((local_op.expectation(&gamma)? - average).norm())
    });
    let devs: Vec<f64> = devs.into_iter().collect::<Result<_>>()?;
    let lhs = crate::quad::trapezoid_mean(&devs);
    let inputs = LatticeBoundInputs::new(model, p0)?;
    let l = op.k() as f64;
    let s = inputs.states_per_site as f64;
    let root = inputs.root(big_t);
    let m = op.max_coefficient();
    let m_paired = op.paired_weight();
    Ok(MultiModeCheck {
        lhs,
        rhs: 2f64.powf(l * s + 2.0) * m * s * l * l * root,
        rhs_paired: 4.0 * m_paired * l * op.k() as f64 * root,
        m,
        m_paired,
        average,
    })
}
