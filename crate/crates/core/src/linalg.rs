//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Tolerance used to validate orthonormality, normalization and hermiticity
/// of user-supplied data.
pub const INPUT_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn real_vec(v: &[f64]) -> CVec {
    CVec::from_iterator(v.len(), v.iter().map(|&x| c(x, 0.0)))
}

pub fn basis_vec(d: usize, i: usize) -> CVec {
    let mut v = CVec::zeros(d);
    v[i] = c(1.0, 0.0);
    v
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted ascending
/// and eigenvector columns permuted to match.
pub fn eigh(h: &CMat) -> (Vec<f64>, CMat) {
    let n = h.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    // symmetrize to suppress rounding asymmetry
    let hs = (h + h.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(hs);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    (vals, vecs)
}

pub fn eigh_real(h: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = h.nrows();
    let hs = (h + h.transpose()).scale(0.5);
    let eig = SymmetricEigen::new(hs);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    (vals, vecs)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(|x| c(x, 0.0))
}

pub fn hermiticity_error(m: &CMat) -> f64 {
    (m - m.adjoint()).camax()
}

/// Largest deviation of the Gram matrix of `vecs` from the identity.
pub fn orthonormality_error(vecs: &[CVec]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in vecs.iter().enumerate() {
        for (j, b) in vecs.iter().enumerate().skip(i) {
            let g = a.dotc(b);
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - c(target, 0.0)).norm());
        }
    }
    worst
}

/// `U = exp(-i h t)` from a precomputed eigen-decomposition of `h`.
pub fn propagator(energies: &[f64], vecs: &CMat, t: f64) -> CMat {
    let phases = CVec::from_iterator(energies.len(), energies.iter().map(|&e| C64::from_polar(1.0, -e * t)));
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    scaled * vecs.adjoint()
}

pub fn random_complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im) / std::f64::consts::SQRT_2
    })
}

/// Haar-distributed unitary via QR with the diagonal phase fix.
pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let z = random_complex_gaussian(d, d, rng);
    let qr = z.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { c(1.0, 0.0) };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}

/// GUE-like random Hermitian matrix with unit-scale entries.
pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let z = random_complex_gaussian(d, d, rng);
    (&z + z.adjoint()).scale(0.5)
}

pub fn random_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVec {
    let z = random_complex_gaussian(d, 1, rng);
    let v = CVec::from_column_slice(z.as_slice());
    let n = v.norm();
    v / c(n, 0.0)
}

/// Gram-Schmidt orthonormalization; vectors that become numerically zero
/// are dropped.
pub fn gram_schmidt(vecs: &[CVec]) -> Vec<CVec> {
    let mut out: Vec<CVec> = Vec::with_capacity(vecs.len());
    for v in vecs {
        let mut w = v.clone();
        for _ in 0..2 {
            for u in &out {
                let p = u.dotc(&w);
                w -= u * p;
            }
        }
        let n = w.norm();
        if n > 1e-12 {
            out.push(w / c(n, 0.0));
        }
    }
    out
}
