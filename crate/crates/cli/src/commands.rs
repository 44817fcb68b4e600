//! The experiment subcommands. Each fills an [`Artifacts`] buffer.

use std::f64::consts::PI;

use freegas::bounds::{self, DensityEstimate};
use freegas::fermibox::{self, BoxConfig, Terms};
use freegas::lattice::{self, CovarianceMatrix, HoppingModel, MajoranaOperator};
use freegas::linalg;
use freegas::quench::{self, QuenchConfig};
use freegas::spectral::{ProjectorObservable, Signal, StateSP};
use freegas::{Exec, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ScanRange;
use crate::output::{scan_csv, table_csv, Artifacts};

/// Central-mass threshold used for the quench timescale.
pub const QUENCH_THRESHOLD: f64 = 0.1;
/// Averaging times for the general bound.
pub const BOUND_TIMES: [f64; 3] = [10.0, 100.0, 1000.0];
/// Random Gaussian states drawn by `lattice`.
pub const LATTICE_DRAWS: usize = 10;

fn pass(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn fermibox_single(n: usize, samples: usize, a: f64, exec: Exec, art: &mut Artifacts) -> Result<()> {
    let cfg = BoxConfig::fermions(n);
    art.add_series("fermibox.csv", &fermibox::series(&cfg, samples, exec)?);
    let bosons = BoxConfig::bosons(n);
    let boson_series = fermibox::series(&bosons, samples, exec)?;
    art.add_series("fermibox_boson.csv", &boson_series);

    let eq = fermibox::equilibration_time(&cfg, a)?;
    let mean = fermibox::time_average_d(&cfg, a, exec)?;
    let above = boson_series.values.iter().filter(|&&d| d > 0.25).count() as f64 / boson_series.n_samples() as f64;
    art.line(format!("fermion box, N = {n}, a = {a}, basis cutoff {}", cfg.cutoff()));
    art.line(format!("recurrence time T_rec = {}", cfg.recurrence_time()));
    art.line(format!("T_eq = 1/(2 N a nu) = {}", eq.t_eq));
    art.line(format!("T_eq variant 1/(N a nu) = {}", eq.t_eq_alt));
    art.line(format!(
        "D(T_eq) = {} <= pi a/3 + mu = {}: {}",
        eq.d_at_t_eq,
        eq.bound,
        pass(eq.d_at_t_eq <= eq.bound)
    ));
    art.line(format!(
        "<D> over [0, T_rec/2] = {} <= analytic bound {}: {}",
        mean.mean,
        mean.bound,
        pass(mean.within_bound)
    ));
    art.line(format!("boson box: fraction of grid times with D > 0.25 = {above}"));
    art.line(format!("boson box: mean D = {}", boson_series.mean()));
    Ok(())
}

pub fn fermibox_scan(scan: ScanRange, a: f64, exec: Exec, art: &mut Artifacts) -> Result<()> {
    let ns = scan.values();
    let mut rows = Vec::with_capacity(ns.len());
    art.line(format!("fermion box scan N = {scan}, a = {a}"));
    for &n in &ns {
        let r = fermibox::time_average_d(&BoxConfig::fermions(n), a, exec)?;
        art.line(format!("N = {n}: <D> = {} (analytic bound {}, {})", r.mean, r.bound, pass(r.within_bound)));
        rows.push((n, r.mean));
    }
    art.add("fermibox_scan.csv", scan_csv(&rows));
    if rows.len() >= 2 {
        let xs: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let (slope, intercept) = quench::loglog_fit(&xs, &ys);
        art.line(format!("fitted exponent: <D> ~ N^{slope} (log-log intercept {intercept})"));
    } else {
        art.line("fitted exponent: needs at least two values of N");
    }
    Ok(())
}

pub fn bosonquench(gammas: &[f64], samples: usize, exec: Exec, art: &mut Artifacts) -> Result<()> {
    let window = 2.0 * PI;
    art.line(format!("harmonic quench, omega = 1, window [0, 2 pi], {samples} samples"));
    for &g in gammas {
        let cfg = QuenchConfig::harmonic(g);
        let ts = quench::harmonic_series(&cfg, window, samples, exec)?;
        let exact = exec.map(ts.n_samples(), |i| quench::central_mass_exact(&cfg, ts.time(i)));
        let mut worst: f64 = 0.0;
        for (e, v) in exact.into_iter().zip(&ts.values) {
            worst = worst.max((e? - v).abs());
        }
        let q = quench::quench_equilibration_time(&cfg, QUENCH_THRESHOLD)?;
        art.line(format!("gamma = {g}: strict local minima in window = {}", quench::strict_local_minima(&ts.values)));
        art.line(format!("gamma = {g}: max |approximate - exact erf| on grid = {worst}"));
        match q.measured {
            Some(m) => art.line(format!(
                "gamma = {g}: T_eq formula 4/(sqrt(pi) omega0 p) = {}, first crossing below p = {QUENCH_THRESHOLD} at {m}",
                q.formula
            )),
            None => art.line(format!(
                "gamma = {g}: T_eq formula = {}, central mass never drops below p = {QUENCH_THRESHOLD}",
                q.formula
            )),
        }
        art.add_series(format!("bosonquench_gamma_{g}.csv"), &ts);
    }
    Ok(())
}

pub fn lattice_run(l: usize, p0: f64, samples: usize, seed: u64, exec: Exec, art: &mut Artifacts) -> Result<()> {
    let model = HoppingModel::ring(l)?;
    let neel = CovarianceMatrix::neel(l);
    let big_t = l as f64;
    let sep = (l / 4).clamp(1, 10);

    let density = lattice::correlator_signal(&model, &neel, 0, 0)?;
    let rows: Vec<(f64, f64)> = exec.map(samples.max(2), |i| {
        let t = freegas::quad::grid_point(0.0, big_t, samples.max(2), i);
        (t, density.value(t).re)
    });
    art.add("lattice_density.csv", table_csv("t,value", &rows));
    let corr = lattice::correlator_signal(&model, &neel, 0, sep)?;
    let rows: Vec<(f64, f64)> = exec.map(samples.max(2), |i| {
        let t = freegas::quad::grid_point(0.0, big_t, samples.max(2), i);
        (t, corr.value(t).norm())
    });
    art.add("lattice_correlator.csv", table_csv("t,value", &rows));

    let dos = lattice::truncated_dos(&model, p0)?;
    art.line(format!("ring L = {l}, p0 = {p0}, Neel initial state, window T = L = {big_t}, seed {seed}"));
    art.line(format!(
        "truncated DOS: n_max = {}, excluded fraction 2 p0/pi = {}, excluded states {}",
        dos.n_max, dos.excluded_fraction, dos.excluded_count
    ));
    art.line(format!(
        "correlator |C(0,{sep})|: infinite-time average {}, mean fluctuation over T {}",
        corr.constant.norm(),
        lattice::fluctuation_amplitude(&corr, big_t, exec)
    ));

    let site = linalg::basis_vec(l, 0);
    let chk = lattice::single_mode_bound_check(&model, &neel, &site, big_t, p0, exec)?;
    art.line(format!("single-mode bound, site 0: lhs {} <= rhs {}: {}", chk.lhs, chk.rhs, pass(chk.holds())));
    let op = MajoranaOperator::hopping(0, 1);
    let mm = lattice::multi_mode_bound_check(&model, &neel, &op, big_t, p0, exec)?;
    art.line(format!("two-mode bound, hopping (0,1): lhs {} <= rhs {}: {}", mm.lhs, mm.rhs, pass(mm.holds())));
    if mm.m_paired > 0.0 {
        art.line(format!("two-mode bound, paired form: rhs {}", mm.rhs_paired));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held = 0;
    for k in 0..LATTICE_DRAWS {
        let g = lattice::random_gaussian(l, k % 2 == 0, &mut rng);
        let chk = lattice::single_mode_bound_check(&model, &g, &site, big_t, p0, exec)?;
        held += chk.holds() as usize;
        art.line(format!("random state {k}: lhs {} <= rhs {}: {}", chk.lhs, chk.rhs, pass(chk.holds())));
    }
    art.line(format!("single-mode bound held for {held}/{LATTICE_DRAWS} random Gaussian states"));
    Ok(())
}

fn bound_rows(
    name: &str,
    sig: &Signal,
    inputs: bounds::BoundInputs,
    period: Option<f64>,
    exec: Exec,
    art: &mut Artifacts,
) -> Result<bool> {
    let mut measured = Vec::new();
    let mut bound = Vec::new();
    let mut all = true;
    art.line(format!(
        "{name}: d = {}, d_eff = {}, D_G = {}, n_d = {}, n_max = {}",
        inputs.d, inputs.d_eff, inputs.gap_degeneracy, inputs.level_degeneracy, inputs.n_max
    ));
    for t in BOUND_TIMES {
        let m = bounds::uniform_mean_square(sig, t, period, exec);
        let b = bounds::equilibration_bound(inputs, t)?.bound;
        all &= m <= b;
        art.line(format!("{name}: T = {t}: measured {m} <= bound {b}: {}", pass(m <= b)));
        measured.push((t, m));
        bound.push((t, b));
    }
    art.add(format!("bounds_{name}.csv"), table_csv("t,value", &measured));
    art.add(format!("bounds_{name}_bound.csv"), table_csv("t,value", &bound));
    Ok(all)
}

pub fn bounds_run(n: usize, l: usize, exec: Exec, art: &mut Artifacts) -> Result<bool> {
    let cfg = BoxConfig::fermions(n);
    let sys = fermibox::box_system(&cfg)?;
    let (s, _) = fermibox::sigma0(&cfg)?;
    // odd-orbital gaps are multiples of 2 nu, so one level per 2 nu
    let inputs = bounds::bound_inputs(&sys, &s, DensityEstimate::Value(1.0 / (2.0 * cfg.nu())))?;
    let sig = fermibox::closed_form_signal(&cfg, Terms::Band(n))?;
    let box_ok = bound_rows("box", &sig, inputs, Some(PI / cfg.nu()), exec, art)?;

    let model = HoppingModel::ring(l)?;
    let sys = model.system()?;
    let half: Vec<usize> = (0..l / 2).collect();
    let s = StateSP::uniform_mixture(half.iter().map(|&i| linalg::basis_vec(l, i)).collect())?;
    let p = ProjectorObservable::sites(l, &half)?;
    let inputs = bounds::bound_inputs(&sys, &s, DensityEstimate::Histogram)?;
    let sig = Signal::new(&sys, &s, &p)?;
    let ring_ok = bound_rows("ring", &sig, inputs, None, exec, art)?;
    art.line(format!("bound respected in every case: {}", pass(box_ok && ring_ok)));
    Ok(box_ok && ring_ok)
}
