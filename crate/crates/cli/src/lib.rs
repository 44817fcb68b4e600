//! Experiment runner: parses flags and config files, dispatches to the
//! library and writes CSV data, a summary and a JSON run manifest.

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use freegas::{fermibox, lattice, Exec};
use serde_json::{json, Map, Value};
use thiserror::Error;

use config::{ConfigError, Params, ScanRange};
use output::Artifacts;
use verify::Tolerances;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SAMPLES: usize = 4096;
pub const DEFAULT_BOX_N: usize = 100;
pub const DEFAULT_BOUNDS_N: usize = 10;
pub const DEFAULT_LATTICE_L: usize = 101;
pub const DEFAULT_BOUNDS_L: usize = 51;
pub const DEFAULT_GAMMAS: [f64; 3] = [1.3, 10.0, 100.0];
pub const DEFAULT_VERIFY_INSTANCES: usize = 200;
pub const FAILURE_FILE: &str = "verify_failure.json";

#[derive(Debug, Parser)]
#[command(name = "freegas", version, about = "Equilibration experiments for free Bose and Fermi gases")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Particles released into a box: D(t) series or an N scan.
    Fermibox(Flags),
    /// Harmonic trap quench: central-mass series per gamma.
    Bosonquench(Flags),
    /// Tight-binding ring: densities, correlators and local bounds.
    Lattice(Flags),
    /// General equilibration bound against measured averages.
    Bounds(Flags),
    /// Cross-check the reduction against the Fock-space oracle.
    Verify(Flags),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Number of particles.
    #[arg(long = "N", value_name = "N")]
    pub n: Option<usize>,
    /// Scan of particle numbers, `a:b` or `a:b:step`.
    #[arg(long = "scan-N", value_name = "A:B[:STEP]")]
    pub scan_n: Option<ScanRange>,
    /// Ring length.
    #[arg(long = "L", value_name = "L")]
    pub l: Option<usize>,
    /// Quench ratio omega0/omega; repeat for several series.
    #[arg(long = "gamma", value_name = "GAMMA")]
    pub gamma: Vec<f64>,
    /// Grid points per series (instances for `verify`).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Timescale constant of the box estimate.
    #[arg(long)]
    pub a: Option<f64>,
    /// Momentum cut of the truncated density of states.
    #[arg(long)]
    pub p0: Option<f64>,
    /// Seed for randomized sweeps.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// `key = value` config file or a previous run manifest.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

impl Flags {
    fn params(&self) -> Params {
        Params {
            n: self.n,
            scan_n: self.scan_n,
            l: self.l,
            gamma: (!self.gamma.is_empty()).then(|| self.gamma.clone()),
            samples: self.samples,
            a: self.a,
            p0: self.p0,
            seed: self.seed,
            out: self.out.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] freegas::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Usage(_) | RunError::Config(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

fn usage(msg: impl Into<String>) -> RunError {
    RunError::Usage(msg.into())
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fermibox(_) => "fermibox",
            Command::Bosonquench(_) => "bosonquench",
            Command::Lattice(_) => "lattice",
            Command::Bounds(_) => "bounds",
            Command::Verify(_) => "verify",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Fermibox(f) | Command::Bosonquench(f) | Command::Lattice(f) | Command::Bounds(f) | Command::Verify(f) => f,
        }
    }

    /// Parameter keys the subcommand reads.
    pub fn keys(&self) -> &'static [&'static str] {
        match self {
            Command::Fermibox(_) => &["N", "scan-N", "samples", "a", "out"],
            Command::Bosonquench(_) => &["gamma", "samples", "out"],
            Command::Lattice(_) => &["L", "p0", "samples", "seed", "out"],
            Command::Bounds(_) => &["N", "L", "out"],
            Command::Verify(_) => &["samples", "seed", "out"],
        }
    }
}

/// Merges config and flags and rejects flags the subcommand does not use.
/// Config files may carry keys for other subcommands; those are ignored.
pub fn resolve(cmd: &Command) -> Result<Params, RunError> {
    let flags = cmd.flags();
    let from_flags = flags.params();
    let stray: Vec<&str> = from_flags.set_keys().into_iter().filter(|k| !cmd.keys().contains(k)).collect();
    if !stray.is_empty() {
        return Err(usage(format!(
            "{} does not take --{}; it uses --{}",
            cmd.name(),
            stray.join(", --"),
            cmd.keys().join(", --")
        )));
    }
    let from_file = match &flags.config {
        Some(p) => config::load_config(p)?,
        None => Params::default(),
    };
    let ignored: Vec<&str> = from_file.set_keys().into_iter().filter(|k| !cmd.keys().contains(k)).collect();
    if !ignored.is_empty() {
        eprintln!("note: {} ignores config keys: {}", cmd.name(), ignored.join(", "));
    }
    Ok(from_flags.or(from_file))
}

fn positive(name: &str, v: f64) -> Result<f64, RunError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("{name} must be positive and finite, got {v}")))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<usize, RunError> {
    if v >= min {
        Ok(v)
    } else {
        Err(usage(format!("{name} must be at least {min}, got {v}")))
    }
}

fn out_dir(p: &Params) -> PathBuf {
    p.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn record(map: &mut Map<String, Value>, key: &str, v: Value) {
    map.insert(key.to_string(), v);
}

/// Outcome of a completed run.
#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub manifest: output::RunManifest,
    pub exit_code: u8,
}

/// Runs a parsed command with the given verification tolerances.
pub fn execute(cli: &Cli, tol: Tolerances) -> Result<RunOutput, RunError> {
    let start = Instant::now();
    let p = resolve(&cli.command)?;
    let exec = Exec::default();
    let mut art = Artifacts::default();
    let mut params = Map::new();
    let dir = out_dir(&p);
    let mut exit_code = EXIT_OK;
    let mut failure_json = None;

    match &cli.command {
        Command::Fermibox(_) => {
            let a = p.a.unwrap_or(fermibox::DEFAULT_A);
            if !(a > 0.0 && a < 1.0) {
                return Err(usage(format!("a must lie in (0, 1), got {a}")));
            }
            record(&mut params, "a", json!(a));
            if let Some(scan) = p.scan_n {
                record(&mut params, "scan-N", json!(scan.to_string()));
                record(&mut params, "out", json!(dir.display().to_string()));
                commands::fermibox_scan(scan, a, exec, &mut art)?;
            } else {
                let n = at_least("N", p.n.unwrap_or(DEFAULT_BOX_N), 1)?;
                let samples = at_least("samples", p.samples.unwrap_or(DEFAULT_SAMPLES), 2)?;
                record(&mut params, "N", json!(n));
                record(&mut params, "samples", json!(samples));
                record(&mut params, "out", json!(dir.display().to_string()));
                commands::fermibox_single(n, samples, a, exec, &mut art)?;
            }
        }
        Command::Bosonquench(_) => {
            let gammas = p.gamma.clone().unwrap_or_else(|| DEFAULT_GAMMAS.to_vec());
            for (i, &g) in gammas.iter().enumerate() {
                positive("gamma", g)?;
                if gammas[..i].contains(&g) {
                    return Err(usage(format!("gamma {g} given twice")));
                }
            }
            let samples = at_least("samples", p.samples.unwrap_or(DEFAULT_SAMPLES), 2)?;
            record(&mut params, "gamma", json!(gammas));
            record(&mut params, "samples", json!(samples));
            record(&mut params, "out", json!(dir.display().to_string()));
            commands::bosonquench(&gammas, samples, exec, &mut art)?;
        }
        Command::Lattice(_) => {
            let l = at_least("L", p.l.unwrap_or(DEFAULT_LATTICE_L), 3)?;
            let p0 = p.p0.unwrap_or(lattice::DEFAULT_P0);
            if !(p0 > 0.0 && p0 < std::f64::consts::FRAC_PI_2) {
                return Err(usage(format!("p0 must lie in (0, pi/2), got {p0}")));
            }
            let samples = at_least("samples", p.samples.unwrap_or(DEFAULT_SAMPLES), 2)?;
            let seed = p.seed.unwrap_or(DEFAULT_SEED);
            record(&mut params, "L", json!(l));
            record(&mut params, "p0", json!(p0));
            record(&mut params, "samples", json!(samples));
            record(&mut params, "seed", json!(seed));
            record(&mut params, "out", json!(dir.display().to_string()));
            commands::lattice_run(l, p0, samples, seed, exec, &mut art)?;
        }
        Command::Bounds(_) => {
            let n = at_least("N", p.n.unwrap_or(DEFAULT_BOUNDS_N), 1)?;
            let l = at_least("L", p.l.unwrap_or(DEFAULT_BOUNDS_L), 3)?;
            record(&mut params, "N", json!(n));
            record(&mut params, "L", json!(l));
            record(&mut params, "out", json!(dir.display().to_string()));
            commands::bounds_run(n, l, exec, &mut art)?;
        }
        Command::Verify(_) => {
            let count = at_least("samples", p.samples.unwrap_or(DEFAULT_VERIFY_INSTANCES), 1)?;
            let seed = p.seed.unwrap_or(DEFAULT_SEED);
            record(&mut params, "samples", json!(count));
            record(&mut params, "seed", json!(seed));
            record(&mut params, "out", json!(dir.display().to_string()));
            let r = verify::run_suite(seed, count, tol, exec)?;
            art.line(format!("verify: {count} instances, seed {seed}"));
            art.line(format!("max |oracle - reduced| over {} times each: {:.3e}", verify::TIMES_PER_INSTANCE, r.worst_reduction));
            art.line(format!("max |oracle - reduced| time average: {:.3e}", r.worst_average));
            art.line(format!("max |oracle - Pfaffian| Majorana strings: {:.3e}", r.worst_wick));
            art.line(format!("fluctuation inequality checked on {} instances", r.fluctuation_checked));
            match &r.failure {
                None => art.line("verify: PASS"),
                Some(f) => {
                    let text = serde_json::to_string_pretty(f).map_err(std::io::Error::other)?;
                    art.line(format!("verify: FAIL at instance {} ({:?}); details in {FAILURE_FILE}", f.index, f.check));
                    art.add(FAILURE_FILE, format!("{text}\n"));
                    failure_json = Some(text);
                    exit_code = EXIT_FAILURE;
                }
            }
        }
    }

    let secs = start.elapsed().as_secs_f64();
    let (_, manifest) = art.write(&dir, cli.command.name(), params, secs)?;
    if let Some(text) = failure_json {
        eprintln!("verification failed; failing instance:\n{text}");
    }
    Ok(RunOutput { dir, manifest, exit_code })
}

/// Parses `args` (including the program name) and runs; returns the exit
/// code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, Tolerances::default())
}

pub fn run_with<I, T>(args: I, tol: Tolerances) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code.clamp(0, 255) as u8;
        }
    };
    match execute(&cli, tol) {
        Ok(out) => {
            println!("wrote {}", out.dir.join(output::MANIFEST).display());
            out.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.exit_code() == EXIT_USAGE {
                eprintln!("run `freegas {} --help` for usage", cli.command.name());
            }
            e.exit_code()
        }
    }
}

/// Reads a manifest back as JSON.
pub fn read_manifest(path: &Path) -> std::io::Result<Value> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}
