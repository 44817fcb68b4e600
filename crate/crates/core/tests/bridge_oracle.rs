use freegas::bridge::{self, ModeEnsemble, Statistics};
use freegas::fock::{self, FockSpace, ManyBody};
use freegas::linalg::{self, c, CVec};
use freegas::spectral::{ProjectorObservable, SpectralSystem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    sys: SpectralSystem,
    ensemble: ModeEnsemble,
    counted: Vec<CVec>,
}

fn instance(seed: u64, statistics: Statistics, modes: usize, particles: usize, counted: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sys = SpectralSystem::from_hamiltonian(&linalg::random_hermitian(modes, &mut rng), "random").unwrap();
    let u = linalg::random_unitary(modes, &mut rng);
    let orbitals = (0..particles).map(|k| (u.column(k).into_owned(), 1)).collect();
    let ensemble = ModeEnsemble::new(statistics, orbitals).unwrap();
    let w = linalg::random_unitary(modes, &mut rng);
    let counted = (0..counted).map(|k| w.column(k).into_owned()).collect();
    Instance { sys, ensemble, counted }
}

fn space_for(statistics: Statistics, modes: usize, particles: usize) -> FockSpace {
    FockSpace::for_particles(statistics, modes, particles).unwrap()
}

fn statistics() -> impl Strategy<Value = Statistics> {
    prop_oneof![Just(Statistics::Fermion), Just(Statistics::Boson)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reduction_matches_fock_evolution(
        seed in any::<u64>(),
        stats in statistics(),
        modes in 2usize..=5,
        t in 0.0f64..10.0,
    ) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let particles = r.gen_range(1..=modes.min(3));
        let counted = r.gen_range(1..=modes);
        let inst = instance(seed, stats, modes, particles, counted);
        let space = space_for(stats, modes, particles);
        let psi = space.product_state(&inst.ensemble).unwrap();
        let m = space.counting_operator(&inst.counted).unwrap();
        let mb = ManyBody::new(&space.build_hamiltonian(&inst.sys).unwrap());
        let rho = fock::pure_density(&psi);
        let oracle = mb.evolve_expectation(&rho, &m, t);
        let red = bridge::reduce(&inst.ensemble, &ProjectorObservable::modes(modes, inst.counted.clone()).unwrap()).unwrap();
        prop_assert!((red.many_body_expectation(&inst.sys, t).unwrap() - oracle).abs() < 1e-9);
        let avg = mb.time_average(&rho, &m);
        prop_assert!((red.many_body_average(&inst.sys).unwrap() - avg).abs() < 1e-6);
    }

    #[test]
    fn particle_number_is_conserved(seed in any::<u64>(), stats in statistics(), modes in 2usize..=4, t in 0.0f64..10.0) {
        let particles = 2.min(modes);
        let inst = instance(seed, stats, modes, particles, 1);
        let space = space_for(stats, modes, particles);
        let psi = space.product_state(&inst.ensemble).unwrap();
        let mb = ManyBody::new(&space.build_hamiltonian(&inst.sys).unwrap());
        let later = mb.evolve_pure(&psi, t);
        let n = space.number_operator();
        let count = later.dotc(&(&n * &later)).re;
        prop_assert!((count - particles as f64).abs() < 1e-9);
        let identity: Vec<CVec> = (0..modes).map(|i| linalg::basis_vec(modes, i)).collect();
        let delta = bridge::delta_m(&inst.ensemble, &ProjectorObservable::modes(modes, identity).unwrap(), &inst.sys, t).unwrap();
        prop_assert!(delta < 1e-12);
    }

    #[test]
    fn fermion_second_moment_has_exchange_term(seed in any::<u64>(), modes in 2usize..=6) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let particles = r.gen_range(1..=modes);
        let counted = r.gen_range(1..=modes);
        let inst = instance(seed, Statistics::Fermion, modes, particles, counted);
        let space = FockSpace::fermions(modes).unwrap();
        let psi = space.product_state(&inst.ensemble).unwrap();
        let m = space.counting_operator(&inst.counted).unwrap();
        let mpsi = &m * &psi;
        let second = mpsi.norm_squared();
        let p = ProjectorObservable::modes(modes, inst.counted.clone()).unwrap().matrix();
        let orbs: Vec<&CVec> = inst.ensemble.modes().iter().map(|x| &x.0).collect();
        let elem = |i: usize, j: usize| orbs[i].dotc(&(&p * orbs[j]));
        let mean: f64 = (0..particles).map(|i| elem(i, i).re).sum();
        let exchange: f64 = (0..particles).flat_map(|i| (0..particles).map(move |j| (i, j))).map(|(i, j)| elem(i, j).norm_sqr()).sum();
        prop_assert!((second - (mean * mean + mean - exchange)).abs() < 1e-10);
        let chk = fock::fluctuation_check(&space, &inst.ensemble, &m).unwrap();
        prop_assert!(chk.holds);
    }

    #[test]
    fn boson_fluctuations_are_bounded(seed in any::<u64>(), modes in 2usize..=4) {
        let particles = 2.min(modes);
        let inst = instance(seed, Statistics::Boson, modes, particles, 1);
        let space = space_for(Statistics::Boson, modes, particles);
        let m = space.counting_operator(&inst.counted).unwrap();
        prop_assert!(fock::fluctuation_check(&space, &inst.ensemble, &m).unwrap().holds);
    }

    #[test]
    fn time_average_is_linear_in_the_ensemble(seed in any::<u64>(), modes in 3usize..=6) {
        let inst = instance(seed, Statistics::Fermion, modes, 3, 2);
        let p = ProjectorObservable::modes(modes, inst.counted.clone()).unwrap();
        let whole = bridge::reduce(&inst.ensemble, &p).unwrap().many_body_average(&inst.sys).unwrap();
        let parts: f64 = inst
            .ensemble
            .modes()
            .iter()
            .map(|(v, _)| {
                let single = ModeEnsemble::slater(vec![v.clone()]).unwrap();
                bridge::reduce(&single, &p).unwrap().many_body_average(&inst.sys).unwrap()
            })
            .sum();
        prop_assert!((whole - parts).abs() < 1e-12);
    }
}

#[test]
fn correlations_round_trip_to_the_same_reduction() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = 5;
    let u = linalg::random_unitary(d, &mut rng);
    let ens = ModeEnsemble::slater(vec![u.column(0).into_owned(), u.column(2).into_owned()]).unwrap();
    let raw: Vec<CVec> = (0..d).map(|i| linalg::basis_vec(d, i)).collect();
    let corr = bridge::correlations_of(&ens, &raw);
    let back = bridge::diagonalize_correlations(Statistics::Fermion, &corr, &raw).unwrap();
    assert_eq!(back.n_particles(), 2.0);
    let sys = SpectralSystem::from_hamiltonian(&linalg::random_hermitian(d, &mut rng), "h").unwrap();
    let p = ProjectorObservable::sites(d, &[0, 3]).unwrap();
    for t in [0.0, 1.3, 7.7] {
        let a = bridge::reduce(&ens, &p).unwrap().many_body_expectation(&sys, t).unwrap();
        let b = bridge::reduce(&back, &p).unwrap().many_body_expectation(&sys, t).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn thermal_like_occupations_reduce_exactly() {
    // fractional occupations: compare with the Gaussian density on Fock space
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = 4;
    let u = linalg::random_unitary(d, &mut rng);
    let occ: Vec<(CVec, f64)> = (0..d).map(|k| (u.column(k).into_owned(), rng.gen_range(0.0..1.0))).collect();
    let ens = ModeEnsemble::with_occupations(Statistics::Fermion, occ).unwrap();
    assert!(ens.fractional);
    let space = FockSpace::fermions(d).unwrap();
    let rho = space.gaussian_density(&ens).unwrap();
    assert!((rho.trace() - c(1.0, 0.0)).norm() < 1e-12);
    let sys = SpectralSystem::from_hamiltonian(&linalg::random_hermitian(d, &mut rng), "h").unwrap();
    let counted = vec![linalg::basis_vec(d, 1)];
    let m = space.counting_operator(&counted).unwrap();
    let mb = ManyBody::new(&space.build_hamiltonian(&sys).unwrap());
    let red = bridge::reduce(&ens, &ProjectorObservable::modes(d, counted).unwrap()).unwrap();
    for t in [0.5, 2.5] {
        assert!((red.many_body_expectation(&sys, t).unwrap() - mb.evolve_expectation(&rho, &m, t)).abs() < 1e-10);
    }
}

#[test]
fn fermion_exchange_vanishes_for_orthogonal_counting() {
    let d = 4;
    let ens = ModeEnsemble::slater(vec![linalg::basis_vec(d, 0), linalg::basis_vec(d, 1)]).unwrap();
    let space = FockSpace::fermions(d).unwrap();
    let m = space.counting_operator(&[linalg::basis_vec(d, 0), linalg::basis_vec(d, 1)]).unwrap();
    let f = fock::fluctuation_check(&space, &ens, &m).unwrap();
    assert!(f.variance.abs() < 1e-14);
}
