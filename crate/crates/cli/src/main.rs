//! `morphwing` command line: run scenarios, sweep the banking grid,
//! reconstruct wake datasets, compare traces, and self-check the numerics.
//!
//! Exit codes separate failure families so scripts can branch on them:
//! `0` success, `2` configuration or input error, `3` numerical failure
//! (aborted runs, solver faults, failed self-checks), `4` comparison out
//! of band. Logging goes to stderr and is controlled by `RUST_LOG`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use morphwing::aero::{
    circulation, sectional_lift_coefficient, wagner, AeroConfig, WagnerCoefficients,
};
use morphwing::collocation::{
    defect_residual, solve_nlp, CollocationProblem, LinearModel, SolveStatus, SolverOptions,
    TrackingCost,
};
use morphwing::dynamics::euler_angles;
use morphwing::harness::{
    compare_traces, export_wake, run_scenario, CompareOptions, RunStatus, RunTrace,
    ScenarioConfig,
};
use morphwing::{Result, SimError};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_COMPARISON: u8 = 4;

#[derive(Parser)]
#[command(
    name = "morphwing",
    version,
    about = "Flapping morphing-wing flight simulator",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and write its trace.
    Run(RunArgs),
    /// Run a roll-reference x airspeed grid of banking scenarios in parallel.
    Sweep(SweepArgs),
    /// Reconstruct the shed-wake dataset from a recorded trace.
    Wake(WakeArgs),
    /// Compare a trace against a reference trace, channel by channel.
    Compare(CompareArgs),
    /// Run the built-in physics and solver checks.
    Check,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for trace files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the scenario's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario's trace decimation.
    #[arg(long)]
    decimate: Option<usize>,
    /// Also write the compact binary trace next to the text one.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Base scenario; each grid point overrides the final roll reference
    /// and the airspeed.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; each run gets a `roll<deg>_u<speed>` subdirectory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Final roll references to sweep [deg].
    #[arg(long, value_delimiter = ',', default_values_t = vec![10.0, 15.0, 20.0, 25.0])]
    rolls: Vec<f64>,
    /// Airspeeds to sweep [m/s].
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.7, 0.8, 0.9])]
    airspeeds: Vec<f64>,
    /// Override the scenario's RNG seed for every run.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario's trace decimation for every run.
    #[arg(long)]
    decimate: Option<usize>,
}

#[derive(Args)]
struct WakeArgs {
    /// Recorded trace (`.csv` or binary).
    #[arg(long)]
    trace: PathBuf,
    /// Scenario configuration the trace was produced with.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for `wake.csv`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Trace under test (`.csv` or binary).
    #[arg(long)]
    trace: PathBuf,
    /// Reference trace (`.csv` or binary).
    #[arg(long)]
    reference: PathBuf,
    /// Channels to compare.
    #[arg(long, value_delimiter = ',', required = true)]
    channels: Vec<String>,
    /// Agreement band half-width, in the channel's own units.
    #[arg(long, default_value_t = 0.3)]
    band: f64,
    /// Linearly resample the reference onto the trace's time grid.
    #[arg(long)]
    resample: bool,
    /// Reference channels to negate before comparing (frame remap).
    #[arg(long, value_delimiter = ',')]
    flip: Vec<String>,
    /// Exclude samples before this time from period estimates [s].
    #[arg(long, default_value_t = 1.0)]
    period_skip: f64,
    /// Minimum in-band sample fraction each channel must reach.
    #[arg(long, default_value_t = 1.0)]
    min_fraction: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default()).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Wake(args) => cmd_wake(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Check => cmd_check(),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

/// Map an error to its exit-code family: bad inputs vs. numerics.
fn exit_for(err: &SimError) -> u8 {
    match err {
        SimError::InvalidConfig(_)
        | SimError::Domain { .. }
        | SimError::TraceFormat(_)
        | SimError::TraceMismatch(_)
        | SimError::Io(_) => EXIT_CONFIG,
        SimError::NonFinite { .. }
        | SimError::SingularSystem { .. }
        | SimError::ControllerFault(_) => EXIT_NUMERICAL,
    }
}

fn load_config(path: &Path, seed: Option<u64>, decimate: Option<usize>) -> Result<ScenarioConfig> {
    let mut config = ScenarioConfig::load(path)?;
    if let Some(seed) = seed {
        config.rng_seed = seed;
    }
    if let Some(k) = decimate {
        config.decimate = k;
        config.validate()?;
    }
    Ok(config)
}

fn cmd_run(args: &RunArgs) -> Result<u8> {
    let config = load_config(&args.config, args.seed, args.decimate)?;
    std::fs::create_dir_all(&args.out)?;
    let outcome = run_scenario(&config)?;

    let csv_path = args.out.join("trace.csv");
    outcome.trace.write_csv_file(&csv_path)?;
    println!(
        "wrote {} ({} rows x {} columns)",
        csv_path.display(),
        outcome.trace.n_rows(),
        outcome.trace.columns().len()
    );
    if args.binary {
        let bin_path = args.out.join("trace.bin");
        outcome.trace.write_binary_file(&bin_path)?;
        println!("wrote {}", bin_path.display());
    }

    let attitude = euler_angles(&outcome.final_state.body.q);
    println!(
        "controller updates: {} ({} failed solves)",
        outcome.controller_updates, outcome.failed_solves
    );
    println!(
        "displacement: x = {:.3} m, y = {:.3} m",
        outcome.displacement[0], outcome.displacement[1]
    );
    println!(
        "final attitude: roll = {:.2} deg, pitch = {:.2} deg, yaw = {:.2} deg",
        attitude.roll.to_degrees(),
        attitude.pitch.to_degrees(),
        attitude.yaw.to_degrees()
    );
    match &outcome.status {
        RunStatus::Completed => {
            println!("status: completed");
            Ok(0)
        }
        RunStatus::Aborted { step, reason } => {
            eprintln!("run aborted at step {step}: {reason}");
            Ok(EXIT_NUMERICAL)
        }
    }
}

/// One sweep grid point's summary line.
struct SweepRow {
    roll_deg: f64,
    airspeed: f64,
    completed: bool,
    displacement: [f64; 2],
    failed_solves: usize,
}

fn cmd_sweep(args: &SweepArgs) -> Result<u8> {
    let base = load_config(&args.config, args.seed, args.decimate)?;
    std::fs::create_dir_all(&args.out)?;

    let grid: Vec<(f64, f64)> = args
        .rolls
        .iter()
        .flat_map(|&roll| args.airspeeds.iter().map(move |&u| (roll, u)))
        .collect();

    // Each run owns its subdirectory; aggregation below is sorted so the
    // summary does not depend on scheduling order.
    let mut results: Vec<((f64, f64), Result<SweepRow>)> = grid
        .par_iter()
        .map(|&(roll_deg, airspeed)| {
            let mut config = base.clone();
            config.reference.roll_final_deg = roll_deg;
            config.aero.airspeed = airspeed;
            let dir = args.out.join(format!("roll{roll_deg}_u{airspeed}"));
            let row = (|| {
                std::fs::create_dir_all(&dir)?;
                let outcome = run_scenario(&config)?;
                outcome.trace.write_csv_file(dir.join("trace.csv"))?;
                Ok(SweepRow {
                    roll_deg,
                    airspeed,
                    completed: outcome.status.is_completed(),
                    displacement: outcome.displacement,
                    failed_solves: outcome.failed_solves,
                })
            })();
            ((roll_deg, airspeed), row)
        })
        .collect();
    results.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("grid values are finite"));

    let mut summary = String::from("roll_deg,airspeed,status,x_disp,y_disp,failed_solves\n");
    let mut aborted = 0usize;
    for (_, row) in &results {
        let row = match row {
            Ok(row) => row,
            Err(e) => return Err(SimError::config(format!("sweep run failed: {e}"))),
        };
        let status = if row.completed { "completed" } else { "aborted" };
        if !row.completed {
            aborted += 1;
        }
        summary.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.roll_deg,
            row.airspeed,
            status,
            row.displacement[0],
            row.displacement[1],
            row.failed_solves
        ));
        println!(
            "roll {:>5.1} deg, u {:.2} m/s: {status}, displacement ({:.3}, {:.3}) m, {} failed solves",
            row.roll_deg, row.airspeed, row.displacement[0], row.displacement[1], row.failed_solves
        );
    }
    let summary_path = args.out.join("summary.csv");
    std::fs::write(&summary_path, summary)?;
    println!("wrote {} ({} runs)", summary_path.display(), results.len());
    if aborted > 0 {
        eprintln!("{aborted} of {} runs aborted", results.len());
        return Ok(EXIT_NUMERICAL);
    }
    Ok(0)
}

fn cmd_wake(args: &WakeArgs) -> Result<u8> {
    let trace = RunTrace::read_file(&args.trace)?;
    let config = ScenarioConfig::load(&args.config)?;
    let wake = export_wake(&trace, &config)?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("wake.csv");
    wake.write_csv_file(&path)?;
    let (left, right) = wake.half_span_magnitudes();
    println!(
        "wrote {} ({} points, {} stations x {} intervals)",
        path.display(),
        wake.points.len(),
        wake.stations,
        wake.intervals
    );
    println!(
        "half-span |gamma| integrals: left = {left:.6}, right = {right:.6} (asymmetry {:.4})",
        wake.asymmetry()
    );
    Ok(0)
}

fn cmd_compare(args: &CompareArgs) -> Result<u8> {
    let trace = RunTrace::read_file(&args.trace)?;
    let reference = RunTrace::read_file(&args.reference)?;
    let options = CompareOptions {
        channels: args.channels.clone(),
        band: args.band,
        resample: args.resample,
        flip_reference: args.flip.clone(),
        period_skip: args.period_skip,
    };
    let report = compare_traces(&trace, &reference, &options)?;
    for channel in &report.channels {
        let period = channel.period.map_or_else(|| "-".to_owned(), |p| format!("{p:.4} s"));
        println!(
            "{:<12} max deviation {:>12.6e}  in band {:>6.2}%  period {period}",
            channel.channel,
            channel.max_deviation,
            100.0 * channel.band_fraction
        );
    }
    println!("{} samples compared, band half-width {}", report.samples, report.band);
    let worst =
        report.channels.iter().map(|c| c.band_fraction).fold(f64::INFINITY, f64::min);
    if worst >= args.min_fraction {
        println!("comparison passed");
        Ok(0)
    } else {
        eprintln!(
            "comparison failed: worst in-band fraction {worst:.4} below required {}",
            args.min_fraction
        );
        Ok(EXIT_COMPARISON)
    }
}

type CheckResult = std::result::Result<(), String>;

fn cmd_check() -> Result<u8> {
    let checks: [(&str, fn() -> CheckResult); 5] = [
        ("wagner-startup", check_wagner),
        ("circulation-lift-duality", check_circulation_duality),
        ("rk4-order", check_rk4_order),
        ("collocation-double-integrator", check_collocation),
        ("trace-round-trip", check_trace_round_trip),
    ];
    let mut failures = 0usize;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("check {name:<32} ok"),
            Err(why) => {
                failures += 1;
                println!("check {name:<32} FAILED: {why}");
            }
        }
    }
    if failures == 0 {
        println!("all checks passed");
        Ok(0)
    } else {
        eprintln!("{failures} check(s) failed");
        Ok(EXIT_NUMERICAL)
    }
}

fn sim(e: SimError) -> String {
    e.to_string()
}

/// Indicial start-up transient: exactly half the steady value at impulse
/// time, strictly rising, and saturated at long times.
fn check_wagner() -> CheckResult {
    let w = WagnerCoefficients::default();
    let phi0 = wagner(0.0, &w).map_err(sim)?;
    if phi0 != 0.5 {
        return Err(format!("phi(0) = {phi0}, expected exactly 0.5"));
    }
    let mut prev = phi0;
    for i in 1..=400 {
        let t = 0.5 * i as f64;
        let phi = wagner(t, &w).map_err(sim)?;
        if phi <= prev {
            return Err(format!("phi not strictly increasing at t_norm = {t}"));
        }
        prev = phi;
    }
    let tail = wagner(200.0, &w).map_err(sim)?;
    if (tail - 1.0).abs() > 1e-4 {
        return Err(format!("phi(200) = {tail}, expected 1 within 1e-4"));
    }
    Ok(())
}

/// The sectional lift coefficient must agree with the route through the
/// circulation series and its rate: c_l = 2*Gamma/(U*c) + 2*dGamma/dt / U^2.
fn check_circulation_duality() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = AeroConfig { airspeed: 0.8, ..AeroConfig::default() };
    for trial in 0..50 {
        let a = DVector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
        let a_dot = DVector::from_fn(8, |_, _| rng.gen_range(-10.0..10.0));
        let theta = rng.gen_range(0.05..std::f64::consts::PI - 0.05);
        let chord = rng.gen_range(0.02..0.12);
        let direct = sectional_lift_coefficient(&a, &a_dot, &cfg, theta, chord).map_err(sim)?;
        let gamma = circulation(&a, &cfg, theta).map_err(sim)?;
        let gamma_dot = circulation(&a_dot, &cfg, theta).map_err(sim)?;
        let via_circulation =
            2.0 * gamma / (cfg.airspeed * chord) + 2.0 * gamma_dot / (cfg.airspeed * cfg.airspeed);
        let error = (direct - via_circulation).abs() / direct.abs().max(1.0);
        if error > 1e-10 {
            return Err(format!(
                "trial {trial}: direct {direct} vs circulation route {via_circulation} \
                 (relative error {error:.3e})"
            ));
        }
    }
    Ok(())
}

/// Halving the step of the fixed-step integrator must shrink the global
/// error on dx/dt = -x by about 2^4.
fn check_rk4_order() -> CheckResult {
    let f = |x: &DVector<f64>| Ok(-x.clone());
    let exact = (-1.0f64).exp();
    let mut errors = [0.0f64; 2];
    for (k, &(h, steps)) in [(0.1, 10usize), (0.05, 20usize)].iter().enumerate() {
        let mut x = DVector::from_element(1, 1.0);
        for _ in 0..steps {
            x = morphwing::dynamics::rk4_vec(&f, &x, h).map_err(sim)?;
        }
        errors[k] = (x[0] - exact).abs();
    }
    let ratio = errors[0] / errors[1];
    if !(12.0..20.0).contains(&ratio) {
        return Err(format!(
            "error ratio {ratio:.2} outside [12, 20] (errors {:.3e}, {:.3e})",
            errors[0], errors[1]
        ));
    }
    Ok(())
}

/// Rest-to-rest double-integrator tracking: the solver must converge, the
/// returned trajectory must satisfy the re-evaluated interval defects, and
/// the initial state must stay pinned.
fn check_collocation() -> CheckResult {
    let model = LinearModel::double_integrator();
    let reference: Vec<DVector<f64>> = [0.0, 0.08, 0.25, 0.45, 0.55]
        .iter()
        .map(|&r| DVector::from_vec(vec![r, 0.0]))
        .collect();
    let cost = TrackingCost::new(vec![1.0, 0.05]).map_err(sim)?;
    let mut problem =
        CollocationProblem::fixed_time(&model, 5, 0.8, reference, cost, vec![(-50.0, 50.0)])
            .map_err(sim)?;
    problem.initial_state = Some(DVector::zeros(2));
    let opts = SolverOptions::default();
    let result = solve_nlp(&problem, None, &opts).map_err(sim)?;
    if result.status != SolveStatus::Converged {
        return Err(format!("status {:?}, expected Converged", result.status));
    }
    if result.max_equality_violation > opts.eq_tol {
        return Err(format!("defects {:.3e} above {:.1e}", result.max_equality_violation, opts.eq_tol));
    }
    let start = problem.knot_state(&result.decision, 0);
    if start.amax() > 1e-12 {
        return Err(format!("pinned initial state drifted to |{:.3e}|", start.amax()));
    }
    let times = problem.knot_times(&result.decision);
    for j in 0..problem.n_knots - 1 {
        let defect = defect_residual(
            &model,
            &problem.knot_state(&result.decision, j),
            &problem.knot_state(&result.decision, j + 1),
            &problem.knot_control(&result.decision, j),
            &problem.knot_control(&result.decision, j + 1),
            times[j],
            times[j + 1],
        )
        .map_err(sim)?;
        if defect.amax() > 10.0 * opts.eq_tol {
            return Err(format!("re-evaluated defect {:.3e} in interval {j}", defect.amax()));
        }
    }
    Ok(())
}

/// Text and binary trace formats must both round-trip bit-exactly.
fn check_trace_round_trip() -> CheckResult {
    let mut trace =
        RunTrace::new(vec!["t".to_owned(), "a".to_owned(), "b".to_owned()]).map_err(sim)?;
    for i in 0..64 {
        let t = i as f64 * 1e-3;
        trace.push_row(vec![t, (i as f64).sin(), i as f64 / 3.0]).map_err(sim)?;
    }
    let mut csv = Vec::new();
    trace.write_csv(&mut csv).map_err(|e| e.to_string())?;
    let reread = RunTrace::read_csv(csv.as_slice()).map_err(sim)?;
    let mut csv_again = Vec::new();
    reread.write_csv(&mut csv_again).map_err(|e| e.to_string())?;
    if csv != csv_again {
        return Err("CSV round-trip is not byte-identical".to_owned());
    }
    let mut binary = Vec::new();
    trace.write_binary(&mut binary).map_err(|e| e.to_string())?;
    let reread = RunTrace::read_binary(binary.as_slice()).map_err(sim)?;
    let mut binary_again = Vec::new();
    reread.write_binary(&mut binary_again).map_err(|e| e.to_string())?;
    if binary != binary_again {
        return Err("binary round-trip is not byte-identical".to_owned());
    }
    for i in 0..trace.n_rows() {
        if trace.row(i) != reread.row(i) {
            return Err(format!("binary round-trip changed row {i}"));
        }
    }
    Ok(())
}
