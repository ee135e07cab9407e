//! Command-line front end: config-driven runs with deterministic file
//! outputs and a scriptable exit-code contract (0 ok, 1 usage, 2
//! config/domain error, 3 runtime solver error or invariant violation).

// NaN-rejecting validation guards, as in the library crate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod csvio;
mod expr;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use porodiff::entropy::{self, DiagnosticsRecord};
use porodiff::equilibrium::{conserved_masses, solve_equilibrium};
use porodiff::exponents::{self, Exponent, FixedPoint, Monotonicity, QOutcome};
use porodiff::network::{ConditionCheck, ConditionReport, ExponentReport, SamplingConfig};
use porodiff::solver::{self, Scheme, SimConfig, SystemModel, Trajectory};
use porodiff::Error;

use config::{ConfigError, ConfigFile};
use csvio::fmt;

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 1;
const EXIT_CONFIG: i32 = 2;
const EXIT_RUNTIME: i32 = 3;

#[derive(Parser)]
#[command(
    name = "porodiff",
    version,
    about = "Structure-preserving simulation and entropy diagnostics for \
             reaction-diffusion systems with porous-medium diffusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check structural conditions and exponent thresholds of a system
    Check {
        #[arg(long)]
        config: PathBuf,
        /// Machine-readable JSON instead of text
        #[arg(long)]
        json: bool,
        /// Seed of the condition-sampling RNG
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Evaluate the exponent thresholds in this spatial dimension
        /// instead of the grid's (the calculus accepts symbolic d >= 3)
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Solve for the detailed-balance equilibrium of the configured run
    Equilibrium {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Integrate the system and write trajectory.csv, diagnostics.csv and
    /// summary.json
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
        /// Accepted for interface uniformity; the integrator is deterministic
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print an exponent-recursion sequence as CSV
    Bootstrap {
        /// Spatial dimension
        #[arg(long)]
        dim: usize,
        /// Porous-medium exponent (>= 1; 1 is the linear limit)
        #[arg(long)]
        m: f64,
        /// Reaction growth exponent (q-mode)
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        /// Starting exponent of the integrability recursion (p-mode)
        #[arg(long)]
        p0: Option<f64>,
        /// Starting exponent of the sup-norm recursion (q-mode)
        #[arg(long)]
        q0: Option<f64>,
        /// Maximum recursion length in p-mode
        #[arg(long, default_value_t = 40)]
        steps: usize,
        #[arg(long)]
        json: bool,
    },
    /// Re-run the entropy post-processing on a stored trajectory
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        /// trajectory.csv produced by `simulate`
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    let code = match cli.command {
        Command::Check {
            config,
            json,
            seed,
            dim,
        } => cmd_check(&config, json, seed, dim),
        Command::Equilibrium { config, json } => cmd_equilibrium(&config, json),
        Command::Simulate {
            config,
            out,
            json,
            seed: _,
        } => cmd_simulate(&config, &out, json),
        Command::Bootstrap {
            dim,
            m,
            nu,
            p0,
            q0,
            steps,
            json,
        } => cmd_bootstrap(dim, m, nu, p0, q0, steps, json),
        Command::Diagnose {
            config,
            traj,
            out,
            json,
        } => cmd_diagnose(&config, &traj, &out, json),
    };
    std::process::exit(code);
}

fn config_fail(err: &ConfigError) -> i32 {
    eprintln!("error: {err}");
    EXIT_CONFIG
}

fn core_exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidSystem(_)
        | Error::Domain(_)
        | Error::DegenerateMass(_)
        | Error::InconsistentParameters(_) => EXIT_CONFIG,
        Error::Stiffness(_) | Error::LinearSolver(_) | Error::Inconsistency(_) | Error::Fit(_) => {
            EXIT_RUNTIME
        }
    }
}

fn core_fail(err: &Error) -> i32 {
    eprintln!("error: {err}");
    core_exit_code(err)
}

fn condition_json(check: &ConditionCheck) -> serde_json::Value {
    match check {
        ConditionCheck::Certified => json!({ "status": "certified" }),
        ConditionCheck::Sampled {
            violation_count,
            witnesses,
        } => json!({
            "status": if *violation_count == 0 { "passed" } else { "violated" },
            "violation_count": violation_count,
            "witnesses": witnesses
                .iter()
                .map(|w| json!({ "point": w.point, "value": w.value }))
                .collect::<Vec<_>>(),
        }),
    }
}

fn condition_text(check: &ConditionCheck) -> String {
    match check {
        ConditionCheck::Certified => "certified".to_string(),
        ConditionCheck::Sampled {
            violation_count: 0, ..
        } => "passed sampling".to_string(),
        ConditionCheck::Sampled {
            violation_count,
            witnesses,
        } => {
            let mut s = format!("violated at {violation_count} sample(s)");
            if let Some(w) = witnesses.first() {
                s.push_str(&format!("; first witness {:?} -> {:.6e}", w.point, w.value));
            }
            s
        }
    }
}

fn print_check_text(
    conditions: &ConditionReport,
    exponents_report: &ExponentReport,
    labels: &[String],
) {
    let nu = exponents_report.nu;
    let dim = exponents_report.dim;
    println!("nu = {}", fmt(nu));
    println!(
        "existence threshold: exponent > {}",
        fmt((nu - 1.0).max(1.0))
    );
    if dim >= 3 {
        println!(
            "boundedness threshold (d = {dim}): exponent > {}",
            fmt(nu - 4.0 / (dim as f64 + 2.0))
        );
    } else {
        println!("boundedness threshold (d = {dim}): none below dimension 3");
    }
    for (sp, label) in exponents_report.species.iter().zip(labels) {
        println!(
            "species {label}: exponent = {}, existence = {}, boundedness = {}, duality_exponent = {}",
            fmt(sp.exponent),
            if sp.existence_ok { "pass" } else { "fail" },
            if sp.boundedness_ok { "pass" } else { "fail" },
            fmt(sp.duality_exponent),
        );
    }
    println!(
        "mass dissipation: {}",
        condition_text(&conditions.mass_dissipation)
    );
    println!(
        "quasi-positivity: {}",
        condition_text(&conditions.quasi_positivity)
    );
    println!(
        "growth constant fit: {} ({} samples)",
        fmt(conditions.growth_constant),
        conditions.samples
    );
    let all_ok = conditions.passed()
        && exponents_report.all_existence()
        && exponents_report.all_boundedness();
    println!("overall: {}", if all_ok { "pass" } else { "fail" });
}

fn cmd_check(path: &Path, as_json: bool, seed: u64, dim_override: Option<usize>) -> i32 {
    let file = match ConfigFile::load(path) {
        Ok(f) => f,
        Err(e) => return config_fail(&e),
    };
    let grid = match file.build_grid() {
        Ok(g) => g,
        Err(e) => return config_fail(&e),
    };
    let system = match file.build_system() {
        Ok(s) => s,
        Err(e) => return config_fail(&e),
    };
    let dim = match dim_override {
        Some(0) => {
            eprintln!("error: --dim must be >= 1");
            return EXIT_CONFIG;
        }
        Some(d) => d,
        None => grid.dim(),
    };
    let sampling = SamplingConfig {
        seed,
        ..Default::default()
    };
    let (conditions, report) = match &system {
        SystemModel::Reversible(sys) => (
            sys.check_conditions(&sampling),
            sys.check_exponent_conditions(dim),
        ),
        SystemModel::General(sys) => (
            sys.check_conditions(&sampling),
            sys.check_exponent_conditions(dim),
        ),
    };
    let labels = system.species_labels();
    if as_json {
        let species: Vec<_> = report
            .species
            .iter()
            .zip(&labels)
            .map(|(sp, label)| {
                json!({
                    "species": label,
                    "exponent": sp.exponent,
                    "existence_ok": sp.existence_ok,
                    "boundedness_ok": sp.boundedness_ok,
                    "duality_exponent": sp.duality_exponent,
                })
            })
            .collect();
        let value = json!({
            "nu": report.nu,
            "dim": report.dim,
            "existence_threshold": (report.nu - 1.0).max(1.0),
            "boundedness_threshold": if report.dim >= 3 {
                Some(report.nu - 4.0 / (report.dim as f64 + 2.0))
            } else {
                None
            },
            "species": species,
            "mass_dissipation": condition_json(&conditions.mass_dissipation),
            "quasi_positivity": condition_json(&conditions.quasi_positivity),
            "growth_constant": conditions.growth_constant,
            "samples": conditions.samples,
            "all_existence": report.all_existence(),
            "all_boundedness": report.all_boundedness(),
        });
        println!(
            "{}",
            serde_json::to_string_pretty(&value).expect("valid json")
        );
    } else {
        print_check_text(&conditions, &report, &labels);
    }
    EXIT_OK
}

fn cmd_equilibrium(path: &Path, as_json: bool) -> i32 {
    let file = match ConfigFile::load(path) {
        Ok(f) => f,
        Err(e) => return config_fail(&e),
    };
    let grid = match file.build_grid() {
        Ok(g) => g,
        Err(e) => return config_fail(&e),
    };
    let system = match file.build_system() {
        Ok(s) => s,
        Err(e) => return config_fail(&e),
    };
    let initial = match file.build_initial(&grid) {
        Ok(i) => i,
        Err(e) => return config_fail(&e),
    };
    let sys = match &system {
        SystemModel::Reversible(sys) => sys,
        SystemModel::General(_) => {
            return config_fail(&ConfigError(
                "equilibrium requires a reversible system (type = \"R\")".into(),
            ))
        }
    };
    let averages: Vec<f64> = (0..initial.species())
        .map(|s| porodiff::grid::average(&grid, initial.field(s)))
        .collect();
    let m = sys.species_a();
    let result = conserved_masses(sys, &averages[..m], &averages[m..])
        .and_then(|mass| solve_equilibrium(sys, &mass));
    let eq = match result {
        Ok(eq) => eq,
        Err(e) => return core_fail(&e),
    };
    if as_json {
        let value = json!({
            "a_inf": eq.a_inf,
            "b_inf": eq.b_inf,
            "xi": eq.xi,
            "residual_balance": eq.residual_balance,
            "residual_mass": eq.residual_mass,
        });
        println!(
            "{}",
            serde_json::to_string_pretty(&value).expect("valid json")
        );
    } else {
        println!("name,value");
        for (i, v) in eq.a_inf.iter().enumerate() {
            println!("a_{},{}", i + 1, fmt(*v));
        }
        for (j, v) in eq.b_inf.iter().enumerate() {
            println!("b_{},{}", j + 1, fmt(*v));
        }
        println!("xi,{}", fmt(eq.xi));
        println!("residual_balance,{}", fmt(eq.residual_balance));
        println!("residual_mass,{}", fmt(eq.residual_mass));
    }
    EXIT_OK
}

struct RunSummary {
    value: serde_json::Value,
    invariants_ok: bool,
}

/// Invariant checks and fitted quantities for a finished (or partial) run.
fn summarize(traj: &Trajectory, scheme: Scheme) -> RunSummary {
    let records = &traj.records;
    let drift = solver::check_discrete_conservation(traj);
    let mass_scale = records[0]
        .masses
        .iter()
        .fold(0.0f64, |a, &b| a.max(b.abs()))
        .max(1e-300);
    let drift_rel = drift / mass_scale;
    let drift_bound = match scheme {
        Scheme::Explicit => 1e-10,
        Scheme::SemiImplicit => 1e-8,
    };
    let mut entropy_violations = 0usize;
    for w in records.windows(2) {
        if w[1].entropy > w[0].entropy + 1e-8 * (1.0 + w[0].entropy.abs()) {
            entropy_violations += 1;
        }
    }
    let negative_production = records.iter().filter(|r| r.production < -1e-10).count();
    let k2 = records
        .iter()
        .filter_map(|r| {
            if r.eep_ratio.is_finite() {
                Some(r.eep_ratio)
            } else {
                None
            }
        })
        .fold(f64::INFINITY, f64::min);
    let eq_scale: f64 = traj
        .equilibrium
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
        .max(1.0);
    let lambda_fits: Vec<serde_json::Value> = traj
        .p_norms
        .iter()
        .map(|&p| {
            let series = traj
                .distance_series(p)
                .expect("p comes from the trajectory's own list");
            // A run started at equilibrium has rounding-level distances only;
            // fitting noise would report a spurious rate.
            if series
                .first()
                .map(|&(_, d)| d <= 1e-12 * eq_scale)
                .unwrap_or(true)
            {
                return json!({
                    "p": p,
                    "skipped": "initial distance to equilibrium is at rounding level",
                });
            }
            match entropy::fit_decay_rate(&series) {
                Ok(fit) => json!({
                    "p": p,
                    "lambda": fit.lambda,
                    "amplitude": fit.amplitude,
                    "residual": fit.residual,
                    "samples": fit.samples_used,
                }),
                Err(e) => json!({ "p": p, "skipped": e.to_string() }),
            }
        })
        .collect();
    let t0 = entropy::first_time_averages_above_half(records, &traj.equilibrium);
    let growth = entropy::supnorm_growth_exponent(traj);
    let invariants_ok =
        entropy_violations == 0 && negative_production == 0 && drift_rel <= drift_bound;
    let value = json!({
        "t_end": records.last().map(|r| r.t).unwrap_or(0.0),
        "records": records.len(),
        "equilibrium": traj.equilibrium,
        "conservation_drift": drift,
        "conservation_drift_rel": drift_rel,
        "conservation_drift_bound_rel": drift_bound,
        "entropy_violations": entropy_violations,
        "negative_production_samples": negative_production,
        "k2_empirical": if k2.is_finite() { Some(k2) } else { None },
        "lambda_fits": lambda_fits,
        "t0_half_equilibrium": t0,
        "supnorm_growth_exponent": growth,
        "invariants_ok": invariants_ok,
    });
    RunSummary {
        value,
        invariants_ok,
    }
}

fn write_outputs(
    out_dir: &Path,
    traj: &Trajectory,
    records: &[DiagnosticsRecord],
    cfg: &SimConfig,
    summary: &serde_json::Value,
    with_trajectory: bool,
) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let ctx = solver::diagnostics_context(cfg).expect("context built once already");
    let labels = cfg.system.species_labels();
    let diag = csvio::diagnostics_csv(records, &ctx.mass_labels(), &labels, &cfg.p_norms);
    std::fs::write(out_dir.join("diagnostics.csv"), diag)?;
    if with_trajectory {
        let csv = csvio::trajectory_csv(traj, &labels);
        std::fs::write(out_dir.join("trajectory.csv"), csv)?;
    }
    let pretty = serde_json::to_string_pretty(summary).expect("valid json");
    std::fs::write(out_dir.join("summary.json"), pretty + "\n")?;
    Ok(())
}

fn cmd_simulate(path: &Path, out_dir: &Path, as_json: bool) -> i32 {
    let file = match ConfigFile::load(path) {
        Ok(f) => f,
        Err(e) => return config_fail(&e),
    };
    let cfg = match file.build_sim_config() {
        Ok(c) => c,
        Err(e) => return config_fail(&e),
    };
    let (traj, failure) = match solver::simulate_partial(&cfg) {
        Ok(pair) => pair,
        Err(e) => return core_fail(&e),
    };
    let mut summary = summarize(&traj, cfg.scheme);
    if let Some(err) = &failure {
        summary.value["solver_error"] = json!(err.to_string());
    }
    if let Err(e) = write_outputs(out_dir, &traj, &traj.records, &cfg, &summary.value, true) {
        eprintln!("error: cannot write outputs to {}: {e}", out_dir.display());
        return EXIT_RUNTIME;
    }
    if as_json {
        println!(
            "{}",
            serde_json::to_string_pretty(&summary.value).expect("valid json")
        );
    } else {
        println!(
            "simulated to t = {} with {} records; outputs in {}",
            fmt(traj.final_record().t),
            traj.records.len(),
            out_dir.display()
        );
        println!(
            "conservation drift (relative) = {}; entropy violations = {}",
            fmt(summary.value["conservation_drift_rel"]
                .as_f64()
                .unwrap_or(f64::NAN)),
            summary.value["entropy_violations"]
        );
    }
    if let Some(err) = failure {
        eprintln!("error: {err} (partial output preserved)");
        return EXIT_RUNTIME;
    }
    if !summary.invariants_ok {
        eprintln!("error: invariant violations recorded in summary.json");
        return EXIT_RUNTIME;
    }
    EXIT_OK
}

fn cmd_bootstrap(
    dim: usize,
    m: f64,
    nu: f64,
    p0: Option<f64>,
    q0: Option<f64>,
    steps: usize,
    as_json: bool,
) -> i32 {
    if dim < 1 {
        eprintln!("error: --dim must be >= 1");
        return EXIT_CONFIG;
    }
    if !(m >= 1.0) {
        eprintln!("error: --m must be >= 1");
        return EXIT_CONFIG;
    }
    if !(nu >= 1.0) {
        eprintln!("error: --nu must be >= 1");
        return EXIT_CONFIG;
    }
    match (p0, q0) {
        (Some(p0), None) => {
            if !(p0 > 1.0) {
                eprintln!("error: --p0 must exceed 1");
                return EXIT_CONFIG;
            }
            let smoothing = exponents::smoothing_exponent(dim, m, p0);
            let it = exponents::p_iteration(dim, m, p0, steps);
            let smoothing_str = match smoothing {
                Exponent::Unbounded => "unbounded".to_string(),
                Exponent::Finite(s) => fmt(s),
            };
            let fixed_str = match it.fixed_point {
                FixedPoint::Unbounded => "unbounded".to_string(),
                FixedPoint::NoPositive => "no_positive".to_string(),
                FixedPoint::Finite(p) => fmt(p),
            };
            let mono_str = match it.monotonicity {
                Monotonicity::Increasing => "increasing",
                Monotonicity::Decreasing => "decreasing",
                Monotonicity::Constant => "constant",
                Monotonicity::UnboundedOneRound => "unbounded_one_round",
            };
            if as_json {
                let value = json!({
                    "mode": "p",
                    "dim": dim, "m": m, "p0": p0,
                    "smoothing_s": match smoothing {
                        Exponent::Unbounded => json!("unbounded"),
                        Exponent::Finite(s) => json!(s),
                    },
                    "fixed_point": match it.fixed_point {
                        FixedPoint::Unbounded => json!("unbounded"),
                        FixedPoint::NoPositive => json!("no_positive"),
                        FixedPoint::Finite(p) => json!(p),
                    },
                    "monotonicity": mono_str,
                    "sequence": it.values,
                });
                println!(
                    "{}",
                    serde_json::to_string_pretty(&value).expect("valid json")
                );
            } else {
                println!("# smoothing_s = {smoothing_str}");
                println!("# fixed_point = {fixed_str}");
                println!("# monotonicity = {mono_str}");
                println!("n,p");
                for (n, v) in it.values.iter().enumerate() {
                    println!("{n},{}", fmt(*v));
                }
            }
            EXIT_OK
        }
        (None, Some(q0)) => {
            if !(q0 > 1.0) {
                eprintln!("error: --q0 must exceed 1");
                return EXIT_CONFIG;
            }
            let it = exponents::q_iteration(dim, m, nu, q0);
            if as_json {
                let value = json!({
                    "mode": "q",
                    "dim": dim, "m": m, "nu": nu, "q0": q0,
                    "threshold": it.threshold,
                    "linf_trigger": it.trigger,
                    "outcome": match it.outcome {
                        QOutcome::Triggered { .. } => "triggered",
                        QOutcome::Stalled => "stalled",
                    },
                    "steps": match it.outcome {
                        QOutcome::Triggered { steps } => Some(steps),
                        QOutcome::Stalled => None,
                    },
                    "sequence": it.values,
                });
                println!(
                    "{}",
                    serde_json::to_string_pretty(&value).expect("valid json")
                );
            } else {
                println!("# threshold = {}", fmt(it.threshold));
                println!("# linf_trigger = {}", fmt(it.trigger));
                match it.outcome {
                    QOutcome::Triggered { steps } => {
                        println!("# outcome = triggered");
                        println!("# steps = {steps}");
                    }
                    QOutcome::Stalled => println!("# outcome = stalled"),
                }
                println!("n,q");
                for (n, v) in it.values.iter().enumerate() {
                    println!("{n},{}", fmt(*v));
                }
            }
            EXIT_OK
        }
        _ => {
            eprintln!("error: pass exactly one of --p0 or --q0");
            EXIT_USAGE
        }
    }
}

fn cmd_diagnose(path: &Path, traj_path: &Path, out_dir: &Path, as_json: bool) -> i32 {
    let file = match ConfigFile::load(path) {
        Ok(f) => f,
        Err(e) => return config_fail(&e),
    };
    let mut cfg = match file.build_sim_config() {
        Ok(c) => c,
        Err(e) => return config_fail(&e),
    };
    let text = match std::fs::read_to_string(traj_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", traj_path.display());
            return EXIT_CONFIG;
        }
    };
    let frames = match csvio::parse_trajectory_csv(&text, &cfg.grid) {
        Ok(f) => f,
        Err(e) => return config_fail(&e),
    };
    if frames[0].1.species() != cfg.system.species() {
        return config_fail(&ConfigError(format!(
            "trajectory has {} species, system has {}",
            frames[0].1.species(),
            cfg.system.species()
        )));
    }
    // The stored run's initial frame defines the conserved masses.
    cfg.initial = frames[0].1.clone();
    let ctx = match solver::diagnostics_context(&cfg) {
        Ok(c) => c,
        Err(e) => return core_fail(&e),
    };
    let records: Vec<DiagnosticsRecord> = frames
        .iter()
        .map(|(t, fields)| ctx.record(&cfg.grid, *t, fields))
        .collect();
    let traj = Trajectory {
        grid: cfg.grid.clone(),
        p_norms: cfg.p_norms.clone(),
        equilibrium: ctx.equilibrium().to_vec(),
        records,
        snapshots: frames,
    };
    let summary = summarize(&traj, cfg.scheme);
    if let Err(e) = write_outputs(out_dir, &traj, &traj.records, &cfg, &summary.value, false) {
        eprintln!("error: cannot write outputs to {}: {e}", out_dir.display());
        return EXIT_RUNTIME;
    }
    if as_json {
        println!(
            "{}",
            serde_json::to_string_pretty(&summary.value).expect("valid json")
        );
    } else {
        println!(
            "recomputed diagnostics for {} samples; outputs in {}",
            traj.records.len(),
            out_dir.display()
        );
    }
    if summary.invariants_ok {
        EXIT_OK
    } else {
        eprintln!("error: invariant violations recorded in summary.json");
        EXIT_RUNTIME
    }
}
