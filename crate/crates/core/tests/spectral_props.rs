use std::f64::consts::PI;

use freegas::linalg::{self, c, CMat};
use freegas::spectral::{self, ProjectorObservable, Signal, SpectralSystem, StateSP};
use freegas::Exec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_system(seed: u64, d: usize) -> SpectralSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SpectralSystem::from_hamiltonian(&linalg::random_hermitian(d, &mut rng), "random").unwrap()
}

fn random_mixed(seed: u64, d: usize, k: usize) -> StateSP {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = linalg::random_unitary(d, &mut rng);
    let w: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 0.05).collect();
    let total: f64 = w.iter().sum();
    StateSP::mixed((0..k).map(|i| (w[i] / total, u.column(i).into_owned())).collect()).unwrap()
}

fn random_projector(seed: u64, d: usize, k: usize) -> ProjectorObservable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = linalg::random_unitary(d, &mut rng);
    ProjectorObservable::modes(d, (0..k).map(|i| u.column(i).into_owned()).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evolution_is_unitary(seed in any::<u64>(), d in 2usize..12, t in -50.0f64..50.0) {
        let sys = random_system(seed, d);
        let s = random_mixed(seed ^ 1, d, d.min(3));
        let st = spectral::evolve(&sys, &s, t).unwrap();
        let tr = st.density_matrix().trace();
        prop_assert!((tr - c(1.0, 0.0)).norm() < 1e-12);
        for (_, v) in st.components() {
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn distinguishability_is_bounded(seed in any::<u64>(), d in 2usize..12, t in 0.0f64..100.0) {
        let sys = random_system(seed, d);
        let s = random_mixed(seed ^ 2, d, 2);
        let p = random_projector(seed ^ 3, d, d / 2);
        let dv = spectral::distinguishability(&sys, &s, &p, t).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&dv));
    }

    #[test]
    fn expectation_is_affine_in_the_state(seed in any::<u64>(), d in 3usize..10, lam in 0.0f64..=1.0, t in 0.0f64..20.0) {
        let sys = random_system(seed, d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        let u = linalg::random_unitary(d, &mut rng);
        let col = |i: usize| u.column(i).into_owned();
        let a = StateSP::pure(col(0)).unwrap();
        let b = StateSP::mixed(vec![(0.3, col(1)), (0.7, col(d - 1))]).unwrap();
        let p = random_projector(seed ^ 6, d, 1 + d / 3);
        let mut comps = vec![(lam, col(0)), ((1.0 - lam) * 0.3, col(1)), ((1.0 - lam) * 0.7, col(d - 1))];
        comps.retain(|x| x.0 > 0.0);
        let mix = StateSP::mixed(comps).unwrap();
        let at = |s: &StateSP| spectral::expectation_p(&spectral::evolve(&sys, s, t).unwrap(), &p).unwrap();
        let lhs = at(&mix);
        let rhs = lam * at(&a) + (1.0 - lam) * at(&b);
        prop_assert!((lhs - rhs).abs() < 1e-12);
        let avg = spectral::average_expectation(&sys, &mix, &p).unwrap();
        let avg_split = lam * spectral::average_expectation(&sys, &a, &p).unwrap()
            + (1.0 - lam) * spectral::average_expectation(&sys, &b, &p).unwrap();
        prop_assert!((avg - avg_split).abs() < 1e-12);
    }

    #[test]
    fn signal_agrees_with_direct_evolution(seed in any::<u64>(), d in 2usize..10, t in 0.0f64..40.0) {
        let sys = random_system(seed, d);
        let s = random_mixed(seed ^ 7, d, 2);
        let p = random_projector(seed ^ 8, d, 2.min(d));
        let sig = Signal::new(&sys, &s, &p).unwrap();
        let direct = spectral::expectation_p(&spectral::evolve(&sys, &s, t).unwrap(), &p).unwrap();
        prop_assert!((sig.value(t) - direct).abs() < 1e-11);
        let avg = spectral::average_expectation(&sys, &s, &p).unwrap();
        prop_assert!((sig.constant - avg).abs() < 1e-12);
    }

    #[test]
    fn time_average_is_dephased(seed in any::<u64>(), d in 2usize..10) {
        let sys = random_system(seed, d);
        let s = random_mixed(seed ^ 9, d, 1);
        let avg = sys.operator_to_eigen(&spectral::time_average_state(&sys, &s).unwrap());
        // random spectra are nondegenerate: the average is diagonal
        let off: f64 = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| avg[(i, j)].norm()).sum();
        prop_assert!(off < 1e-12);
        prop_assert!((avg.trace() - c(1.0, 0.0)).norm() < 1e-12);
    }
}

fn box_like(n: usize) -> SpectralSystem {
    SpectralSystem::diagonal((1..=n).map(|k| (k * k) as f64).collect(), "box").unwrap()
}

#[test]
fn integer_spectrum_recurs() {
    let sys = box_like(24);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let s = StateSP::pure(linalg::random_unit_vector(24, &mut rng)).unwrap();
    let p = random_projector(11, 24, 7);
    let d0 = spectral::distinguishability(&sys, &s, &p, 0.0).unwrap();
    let d1 = spectral::distinguishability(&sys, &s, &p, 2.0 * PI).unwrap();
    assert!((d0 - d1).abs() < 1e-10);
    let back = spectral::evolve(&sys, &s, 2.0 * PI).unwrap();
    assert!((back.density_matrix() - s.density_matrix()).camax() < 1e-10);
}

#[test]
fn finite_time_averages_approach_the_dephased_value() {
    let d = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut energies: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
    energies.sort_by(f64::total_cmp);
    let sys = SpectralSystem::diagonal(energies, "random levels").unwrap();
    let s = StateSP::pure(linalg::random_unit_vector(d, &mut rng)).unwrap();
    let p = random_projector(13, d, d / 2);
    let sig = Signal::new(&sys, &s, &p).unwrap();
    let limit = sig.mean_square_deviation();
    let err: Vec<f64> = [10.0, 100.0, 1000.0]
        .iter()
        .map(|&t| (freegas::bounds::uniform_mean_square(&sig, t, None, Exec::default()) - limit).abs())
        .collect();
    assert!(err[2] < err[0], "{err:?}");
    assert!(err[2] < 0.1 * limit, "{err:?} vs {limit}");
}

#[test]
fn projector_variants_agree() {
    let d = 6;
    let sites = ProjectorObservable::sites(d, &[1, 4]).unwrap();
    let modes = ProjectorObservable::modes(d, vec![linalg::basis_vec(d, 1), linalg::basis_vec(d, 4)]).unwrap();
    let mut m = CMat::zeros(d, d);
    m[(1, 1)] = c(1.0, 0.0);
    m[(4, 4)] = c(1.0, 0.0);
    let comp = ProjectorObservable::compressed(m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let v = linalg::random_unit_vector(d, &mut rng);
    let e = [sites.expect_vec(&v), modes.expect_vec(&v), comp.expect_vec(&v)];
    assert!((e[0] - e[1]).abs() < 1e-14 && (e[0] - e[2]).abs() < 1e-14);
}

#[test]
fn grid_sampling_is_executor_independent() {
    let sys = random_system(15, 9);
    let s = random_mixed(16, 9, 3);
    let p = random_projector(17, 9, 4);
    let sig = Signal::new(&sys, &s, &p).unwrap();
    let a = sig.grid_values(0.0, 30.0, 1001, Exec::Sequential);
    let b = sig.grid_values(0.0, 30.0, 1001, Exec::default());
    assert_eq!(a, b);
}
