use freegas::bounds::{self, DensityEstimate};
use freegas::fermibox::{self, BoxConfig};
use freegas::lattice::HoppingModel;
use freegas::linalg;
use freegas::quench::{self, QuenchConfig};
use freegas::spectral::{self, ProjectorObservable, Signal, SpectralSystem, StateSP};
use freegas::Exec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check_at_three_times(sys: &SpectralSystem, s: &StateSP, sig: &Signal, n_max: f64, period: Option<f64>) {
    let inputs = bounds::bound_inputs(sys, s, DensityEstimate::Value(n_max)).unwrap();
    for t in [10.0, 100.0, 1000.0] {
        let measured = bounds::uniform_mean_square(sig, t, period, Exec::default());
        let bound = bounds::equilibration_bound(inputs, t).unwrap().bound;
        assert!(measured <= bound, "T = {t}: {measured} > {bound}");
    }
}

#[test]
fn box_measured_is_below_bound() {
    let cfg = BoxConfig::fermions(3);
    let sys = fermibox::box_system(&cfg).unwrap();
    let (s, _) = fermibox::sigma0(&cfg).unwrap();
    let sig = Signal::new(&sys, &s, &fermibox::left_projector(cfg.cutoff())).unwrap();
    // the spacing of nu n^2 is at least nu, so one level per nu
    check_at_three_times(&sys, &s, &sig, 1.0 / cfg.nu(), Some(cfg.recurrence_time()));
}

#[test]
fn square_well_measured_is_below_bound() {
    let cfg = QuenchConfig::square_well_for_width(0.3, 1.0, 1.0);
    let sw = quench::square_well(&cfg, 80).unwrap();
    let sig = sw.signal().unwrap();
    let nu = sw.system.energies()[0];
    check_at_three_times(&sw.system, &sw.state, &sig, 1.0 / nu, Some(sw.period()));
}

#[test]
fn ring_measured_is_below_bound() {
    let l = 41;
    let model = HoppingModel::ring(l).unwrap();
    let sys = model.system().unwrap();
    let s = StateSP::pure(linalg::basis_vec(l, 0)).unwrap();
    let sig = Signal::new(&sys, &s, &ProjectorObservable::sites(l, &[0]).unwrap()).unwrap();
    let dos = freegas::lattice::truncated_dos(&model, 0.0001).unwrap();
    check_at_three_times(&sys, &s, &sig, dos.n_max.max(l as f64 / std::f64::consts::PI), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn effective_dimension_limits(seed in any::<u64>(), d in 2usize..16, k in 1usize..6) {
        let k = k.min(d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = SpectralSystem::from_hamiltonian(&linalg::random_hermitian(d, &mut rng), "h").unwrap();
        let u = linalg::random_unitary(d, &mut rng);
        let s = StateSP::uniform_mixture((0..k).map(|i| u.column(i).into_owned()).collect()).unwrap();
        let inv = 1.0 / bounds::effective_dimension(&sys, &s).unwrap();
        prop_assert!(inv <= 1.0 + 1e-12);
        // a uniform mixture of k orbitals: 1/d_eff <= n_d / k
        let nd = sys.levels(spectral::EPS_GAP).max_degeneracy() as f64;
        prop_assert!(inv <= nd / k as f64 + 1e-12);
    }

    #[test]
    fn localized_lattice_states_spread(l in 5usize..60, sites in 1usize..4) {
        let sites = sites.min(l);
        let model = HoppingModel::ring(l).unwrap();
        let sys = model.system().unwrap();
        let s = StateSP::uniform_mixture((0..sites).map(|i| linalg::basis_vec(l, i)).collect()).unwrap();
        let inv = 1.0 / bounds::effective_dimension(&sys, &s).unwrap();
        let nd = sys.levels(spectral::EPS_GAP).max_degeneracy() as f64;
        let v = l as f64;
        prop_assert!(inv <= nd * nd * (sites * sites) as f64 * 1.0 / (v * v) * v + 1e-12);
    }

    #[test]
    fn bound_decreases_with_time(seed in any::<u64>(), d in 2usize..10, t in 1.0f64..1000.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = SpectralSystem::from_hamiltonian(&linalg::random_hermitian(d, &mut rng), "h").unwrap();
        let s = StateSP::pure(linalg::random_unit_vector(d, &mut rng)).unwrap();
        let inputs = bounds::bound_inputs(&sys, &s, DensityEstimate::Histogram).unwrap();
        let a = bounds::equilibration_bound(inputs, t).unwrap();
        let b = bounds::equilibration_bound(inputs, 2.0 * t).unwrap();
        prop_assert!(b.bound <= a.bound);
        prop_assert!((a.time_term / b.time_term - 2.0).abs() < 1e-12);
        prop_assert!(bounds::equilibration_bound(inputs, f64::INFINITY).unwrap().time_term == 0.0);
    }

    #[test]
    fn gaussian_weight_dominates_uniform(gap in 0.0f64..5.0, big_t in 0.5f64..20.0) {
        let (u, w) = bounds::dominance_check(|t| 1.0 + (gap * t).cos(), big_t, 16).unwrap();
        prop_assert!(u <= w + 1e-10);
    }

    #[test]
    fn weighted_phase_average_matches_closed_form(gap in 0.0f64..3.0, big_t in 0.5f64..10.0) {
        let r = bounds::weighted_average_check(gap, big_t).unwrap();
        prop_assert!(r.consistent(1e-3 * bounds::C1), "{} vs {}", r.numeric, r.analytic);
    }
}

#[test]
fn timescale_inverts_the_bound() {
    let d = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sys = SpectralSystem::from_hamiltonian(&linalg::random_hermitian(d, &mut rng), "h").unwrap();
    let s = StateSP::uniform_mixture((0..d).map(|i| sys.eigenvector(i)).collect()).unwrap();
    let inputs = bounds::bound_inputs(&sys, &s, DensityEstimate::Histogram).unwrap();
    let eps = 0.5;
    let t = bounds::timescale_estimate(inputs, eps).unwrap();
    assert!((bounds::equilibration_bound(inputs, t).unwrap().bound - eps * eps).abs() < 1e-9);

    let cfg = BoxConfig::fermions(30);
    let sys = fermibox::box_system(&cfg).unwrap();
    let (s, _) = fermibox::sigma0(&cfg).unwrap();
    let inputs = bounds::bound_inputs(&sys, &s, DensityEstimate::Value(1.0 / cfg.nu())).unwrap();
    assert!(bounds::timescale_estimate(inputs, 0.9).is_err());
}
