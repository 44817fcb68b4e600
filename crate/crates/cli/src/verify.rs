//! Cross-checks of the single-particle reduction against the Fock-space
//! oracle on small random instances.

use freegas::bridge::{self, ModeEnsemble, Statistics};
use freegas::fock::{self, FockSpace, ManyBody};
use freegas::lattice::{self, CovarianceMatrix};
use freegas::linalg::{self, c, CMat, CVec};
use freegas::spectral::{ProjectorObservable, SpectralSystem};
use freegas::{Exec, C64};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const TIMES_PER_INSTANCE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub reduction: f64,
    pub average: f64,
    pub wick: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { reduction: 1e-10, average: 1e-6, wick: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Reduction,
    Average,
    Fluctuation,
    Wick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbital {
    pub vector: Vec<[f64; 2]>,
    pub occupation: u32,
}

/// One random instance in plain numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub statistics: String,
    pub hamiltonian: Vec<Vec<[f64; 2]>>,
    pub orbitals: Vec<Orbital>,
    pub counted: Vec<Vec<[f64; 2]>>,
}

/// Everything needed to rerun a failing check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedInstance {
    pub seed: u64,
    pub index: usize,
    pub check: Check,
    pub case: Case,
    pub time: Option<f64>,
    pub majorana_string: Option<Vec<usize>>,
    pub expected: [f64; 2],
    pub actual: [f64; 2],
    pub tolerance: f64,
}

impl FailedInstance {
    /// Recomputes `(expected, actual)` from the serialized data.
    pub fn replay(&self) -> freegas::Result<(C64, C64)> {
        let inst = Instance::from_case(&self.case)?;
        match self.check {
            Check::Reduction => inst.reduction(self.time.unwrap_or(0.0)),
            Check::Average => inst.average(),
            Check::Fluctuation => Ok(inst.fluctuation()?.unwrap_or((C64::default(), C64::default()))),
            Check::Wick => inst.wick(self.majorana_string.as_deref().unwrap_or(&[])),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub instances: usize,
    pub worst_reduction: f64,
    pub worst_average: f64,
    pub worst_wick: f64,
    pub fluctuation_checked: usize,
    pub failure: Option<FailedInstance>,
}

fn pairs(v: &CVec) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn from_pairs(p: &[[f64; 2]]) -> CVec {
    CVec::from_iterator(p.len(), p.iter().map(|x| c(x[0], x[1])))
}

struct Instance {
    statistics: Statistics,
    h: CMat,
    orbitals: Vec<(CVec, u32)>,
    counted: Vec<CVec>,
}

impl Instance {
    fn random(rng: &mut ChaCha8Rng, statistics: Statistics) -> Self {
        let modes = rng.gen_range(2..=5usize);
        let h = linalg::random_hermitian(modes, rng);
        let u = linalg::random_unitary(modes, rng);
        let cap = if statistics == Statistics::Fermion { modes.min(3) } else { 3 };
        let n = rng.gen_range(1..=cap);
        let orbitals = match statistics {
            Statistics::Fermion => (0..n).map(|k| (u.column(k).into_owned(), 1)).collect(),
            Statistics::Boson => {
                let mut occ = vec![0u32; modes];
                for _ in 0..n {
                    occ[rng.gen_range(0..modes)] += 1;
                }
                occ.iter().enumerate().filter(|(_, &k)| k > 0).map(|(i, &k)| (u.column(i).into_owned(), k)).collect()
            }
        };
        let w = linalg::random_unitary(modes, rng);
        let rank = rng.gen_range(1..=modes);
        let counted = (0..rank).map(|k| w.column(k).into_owned()).collect();
        Self { statistics, h, orbitals, counted }
    }

    fn to_case(&self) -> Case {
        let d = self.h.nrows();
        Case {
            statistics: match self.statistics {
                Statistics::Fermion => "fermion".into(),
                Statistics::Boson => "boson".into(),
            },
            hamiltonian: (0..d).map(|i| (0..d).map(|j| [self.h[(i, j)].re, self.h[(i, j)].im]).collect()).collect(),
            orbitals: self.orbitals.iter().map(|(v, n)| Orbital { vector: pairs(v), occupation: *n }).collect(),
            counted: self.counted.iter().map(pairs).collect(),
        }
    }

    fn from_case(case: &Case) -> freegas::Result<Self> {
        let statistics = match case.statistics.as_str() {
            "fermion" => Statistics::Fermion,
            "boson" => Statistics::Boson,
            other => return Err(freegas::Error::InvalidInput(format!("unknown statistics {other:?}"))),
        };
        let d = case.hamiltonian.len();
        if case.hamiltonian.iter().any(|r| r.len() != d) {
            return Err(freegas::Error::InvalidInput("hamiltonian must be square".into()));
        }
        let h = CMat::from_fn(d, d, |i, j| c(case.hamiltonian[i][j][0], case.hamiltonian[i][j][1]));
        let orbitals = case.orbitals.iter().map(|o| (from_pairs(&o.vector), o.occupation)).collect();
        let counted = case.counted.iter().map(|v| from_pairs(v)).collect();
        Ok(Self { statistics, h, orbitals, counted })
    }

    fn modes(&self) -> usize {
        self.h.nrows()
    }

    fn particles(&self) -> usize {
        self.orbitals.iter().map(|o| o.1 as usize).sum()
    }

    fn ensemble(&self) -> freegas::Result<ModeEnsemble> {
        ModeEnsemble::new(self.statistics, self.orbitals.clone())
    }

    fn space(&self) -> freegas::Result<FockSpace> {
        FockSpace::for_particles(self.statistics, self.modes(), self.particles())
    }

    fn system(&self) -> freegas::Result<SpectralSystem> {
        SpectralSystem::from_hamiltonian(&self.h, "verify")
    }

    /// Oracle and reduced many-body expectations at `t`.
    fn reduction(&self, t: f64) -> freegas::Result<(C64, C64)> {
        let (oracle, reduced) = self.expectations(&[t])?;
        Ok((c(oracle[0], 0.0), c(reduced[0], 0.0)))
    }

    fn expectations(&self, times: &[f64]) -> freegas::Result<(Vec<f64>, Vec<f64>)> {
        let ens = self.ensemble()?;
        let space = self.space()?;
        let sys = self.system()?;
        let psi = space.product_state(&ens)?;
        let m = space.counting_operator(&self.counted)?;
        let mb = ManyBody::new(&space.build_hamiltonian(&sys)?);
        let series = mb.expectation_series(&fock::pure_density(&psi), &m);
        let red = bridge::reduce(&ens, &ProjectorObservable::modes(self.modes(), self.counted.clone())?)?;
        let oracle = times.iter().map(|&t| series.at(t)).collect();
        let reduced = times.iter().map(|&t| red.many_body_expectation(&sys, t)).collect::<freegas::Result<_>>()?;
        Ok((oracle, reduced))
    }

    fn average(&self) -> freegas::Result<(C64, C64)> {
        let ens = self.ensemble()?;
        let space = self.space()?;
        let sys = self.system()?;
        let psi = space.product_state(&ens)?;
        let m = space.counting_operator(&self.counted)?;
        let mb = ManyBody::new(&space.build_hamiltonian(&sys)?);
        let oracle = mb.time_average(&fock::pure_density(&psi), &m);
        let red = bridge::reduce(&ens, &ProjectorObservable::modes(self.modes(), self.counted.clone())?)?;
        Ok((c(oracle, 0.0), c(red.many_body_average(&sys)?, 0.0)))
    }

    /// `(bound, second moment)` of the fluctuation inequality, when it
    /// applies (every orbital occupied at most once).
    fn fluctuation(&self) -> freegas::Result<Option<(C64, C64)>> {
        if self.orbitals.iter().any(|o| o.1 > 1) {
            return Ok(None);
        }
        let space = self.space()?;
        let m = space.counting_operator(&self.counted)?;
        let f = fock::fluctuation_check(&space, &self.ensemble()?, &m)?;
        Ok(Some((c(f.bound, 0.0), c(f.second_moment, 0.0))))
    }

    /// Fock-space and Pfaffian values of a Majorana string.
    fn wick(&self, string: &[usize]) -> freegas::Result<(C64, C64)> {
        let d = self.modes();
        let ens = self.ensemble()?;
        let space = FockSpace::fermions(d)?;
        let psi = space.product_state(&ens)?;
        let sites: Vec<CVec> = (0..d).map(|k| linalg::basis_vec(d, k)).collect();
        let gamma = CovarianceMatrix::from_two_point(bridge::correlations_of(&ens, &sites).matrix())?;
        let mut op = CMat::identity(space.dim(), space.dim());
        for &k in string {
            let a = space.annihilation(k / 2);
            let ad = a.adjoint();
            let maj = if k % 2 == 0 { &a + &ad } else { (&a - &ad) * c(0.0, -1.0) };
            op *= maj;
        }
        let oracle = psi.dotc(&(op * &psi));
        Ok((oracle, lattice::wick_expectation(&gamma, string)?))
    }
}

fn instance_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, Default)]
struct Outcome {
    worst_reduction: f64,
    worst_average: f64,
    worst_wick: f64,
    fluctuation_checked: bool,
    failure: Option<FailedInstance>,
}

fn run_instance(seed: u64, index: usize, tol: Tolerances) -> freegas::Result<Outcome> {
    let mut rng = instance_rng(seed, index);
    let statistics = if index % 2 == 0 { Statistics::Fermion } else { Statistics::Boson };
    let inst = Instance::random(&mut rng, statistics);
    let times: Vec<f64> = (0..TIMES_PER_INSTANCE).map(|_| rng.gen_range(0.0..20.0)).collect();
    let mut out = Outcome::default();
    let fail = |check, time, string: Option<Vec<usize>>, e: C64, a: C64, tolerance| FailedInstance {
        seed,
        index,
        check,
        case: inst.to_case(),
        time,
        majorana_string: string,
        expected: [e.re, e.im],
        actual: [a.re, a.im],
        tolerance,
    };

    let (oracle, reduced) = inst.expectations(&times)?;
    for ((&t, &o), &r) in times.iter().zip(&oracle).zip(&reduced) {
        let err = (o - r).abs();
        out.worst_reduction = out.worst_reduction.max(err);
        if !(err <= tol.reduction) && out.failure.is_none() {
            out.failure = Some(fail(Check::Reduction, Some(t), None, c(o, 0.0), c(r, 0.0), tol.reduction));
        }
    }

    let (o, r) = inst.average()?;
    out.worst_average = (o - r).norm();
    if !(out.worst_average <= tol.average) && out.failure.is_none() {
        out.failure = Some(fail(Check::Average, None, None, o, r, tol.average));
    }

    if let Some((bound, second)) = inst.fluctuation()? {
        out.fluctuation_checked = true;
        if second.re > bound.re + 1e-10 && out.failure.is_none() {
            out.failure = Some(fail(Check::Fluctuation, None, None, bound, second, 1e-10));
        }
    }

    if statistics == Statistics::Fermion {
        let mut idx: Vec<usize> = (0..2 * inst.modes()).collect();
        for len in [2usize, 4] {
            idx.shuffle(&mut rng);
            let mut s = idx[..len].to_vec();
            s.sort_unstable();
            let (o, w) = inst.wick(&s)?;
            let err = (o - w).norm();
            out.worst_wick = out.worst_wick.max(err);
            if !(err <= tol.wick) && out.failure.is_none() {
                out.failure = Some(fail(Check::Wick, None, Some(s), o, w, tol.wick));
            }
        }
    }
    Ok(out)
}

/// Runs `count` seeded instances; instance `i` draws from its own stream,
/// so results do not depend on scheduling. The reported failure is the one
/// with the lowest index.
pub fn run_suite(seed: u64, count: usize, tol: Tolerances, exec: Exec) -> freegas::Result<Report> {
    let outcomes = exec.map(count, |i| run_instance(seed, i, tol));
    let mut report = Report { instances: count, ..Report::default() };
    for o in outcomes {
        let o = o?;
        report.worst_reduction = report.worst_reduction.max(o.worst_reduction);
        report.worst_average = report.worst_average.max(o.worst_average);
        report.worst_wick = report.worst_wick.max(o.worst_wick);
        report.fluctuation_checked += o.fluctuation_checked as usize;
        if report.failure.is_none() {
            report.failure = o.failure;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let r = run_suite(7, 12, Tolerances::default(), Exec::Sequential).unwrap();
        assert!(r.failure.is_none(), "{:?}", r.failure);
        assert!(r.worst_reduction <= 1e-10);
        assert!(r.fluctuation_checked > 0);
    }

    #[test]
    fn failure_replays_from_json() {
        let tol = Tolerances { wick: -1.0, ..Tolerances::default() };
        let r = run_suite(3, 4, tol, Exec::Sequential).unwrap();
        let f = r.failure.unwrap();
        assert_eq!(f.check, Check::Wick);
        assert_eq!(f.index, 0);
        let json = serde_json::to_string(&f).unwrap();
        let back: FailedInstance = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
        let (e, a) = back.replay().unwrap();
        assert!((e.re - f.expected[0]).abs() < 1e-12 && (a.re - f.actual[0]).abs() < 1e-12);
    }

    #[test]
    fn executor_does_not_change_the_report() {
        let a = run_suite(11, 6, Tolerances::default(), Exec::Sequential).unwrap();
        let b = run_suite(11, 6, Tolerances::default(), Exec::Parallel).unwrap();
        assert_eq!(a.worst_reduction, b.worst_reduction);
        assert_eq!(a.worst_wick, b.worst_wick);
    }
}
