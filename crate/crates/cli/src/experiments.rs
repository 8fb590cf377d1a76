//! Experiment orchestration. Each runner writes its artifacts into the
//! configured output directory and returns the summary it also saves as
//! `summary.json`.

use std::fs;
use std::path::Path;
use std::time::Instant;

use mirror_msa::mirror::{mirror_step_pointwise, three_point_check};
use mirror_msa::problems::{make_highdim, make_lq, make_quartic, HighDimParams};
use mirror_msa::reference::{
    adjoint_pairing, fd_gradient, lq_reference, quartic_recursion, relative_convexity_slack,
    relative_smoothness_slack, sensitivity_gradient, ConstantsLedger, GradientTriangle, RiccatiSolution,
    DEFAULT_FD_EPS,
};
use mirror_msa::sampling::{smooth_random_control, NormalSampler};
use mirror_msa::solver::{
    admissibility_modulus_check, check_descent_certificate, check_dissipation, constant_control, fit_loglog_slope,
    fit_semilog, SolveReport,
};
use mirror_msa::{
    bregman_integrated, run, ControlSet, MirrorMap, ProblemSpec, SolverConfig, TimeGrid, Trajectory,
};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, Experiment, ExperimentConfig, MirrorChoice, Window};
use crate::output::{
    plot_rows, write_rows_file, write_summary, write_trace_file, write_trajectory_file, CheckResult,
    ExperimentSummary, RunSummary,
};
use crate::ExperimentError;

/// Admissibility-modulus slack tolerance.
pub const ADMISSIBILITY_TOL: f64 = 1e-10;
/// Additive slack on the per-iteration geometric bound.
pub const RATE_BOUND_TOL: f64 = 1e-7;
/// Gap below which a high-dimensional run counts as converged.
pub const HIGHDIM_GAP_TOL: f64 = 1e-6;
pub const HIGHDIM_MIN_R_SQUARED: f64 = 0.98;
pub const TRIANGLE_FD_TOL: f64 = 1e-6;
pub const TRIANGLE_SENSITIVITY_TOL: f64 = 1e-8;
pub const INEQUALITY_TOL: f64 = -1e-8;
pub const THREE_POINT_TOL: f64 = -1e-9;
pub const TRIANGLE_TRIALS: usize = 20;
pub const INEQUALITY_PAIRS: usize = 100;
pub const THREE_POINT_TRIALS: usize = 1000;
/// Iterations compared against the scalar quartic recursion.
pub const RECURSION_ITERS: usize = 100;
pub const RECURSION_TOL: f64 = 1e-10;

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary, ExperimentError> {
    match config.experiment {
        Experiment::Lq => run_lq(config),
        Experiment::Quartic => run_quartic(config),
        Experiment::Highdim => run_highdim(config),
        Experiment::Gradcheck => run_gradcheck(config),
        Experiment::Custom => run_custom(config),
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn label_tau(tau: f64) -> String {
    format!("tau{tau}")
}

fn prepare(config: &ExperimentConfig) -> Result<(), ExperimentError> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;
    Ok(())
}

fn finish(config: &ExperimentConfig, runs: Vec<RunSummary>, checks: Vec<CheckResult>) -> Result<ExperimentSummary, ExperimentError> {
    let summary = ExperimentSummary::new(config, runs, checks);
    write_summary(&summary, &config.output_dir.join("summary.json"))?;
    for c in &summary.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        log::info!("{status} {}: {} ({})", c.name, c.worst.map_or("n/a".into(), |w| format!("{w:e}")), c.detail);
    }
    Ok(summary)
}

fn run_summary(label: String, config: &SolverConfig, report: &SolveReport, dim: usize, wall: f64) -> RunSummary {
    let last = report.final_record();
    RunSummary {
        label,
        tau: config.tau,
        lambda: config.lambda,
        dim,
        iterations: last.iter,
        termination: format!("{:?}", report.termination),
        final_cost: finite(last.cost),
        final_residual: finite(last.residual),
        wall_time_s: wall,
        ..Default::default()
    }
}

fn timed_run(
    problem: &ProblemSpec,
    mirror: &MirrorMap,
    config: &SolverConfig,
    u0: &Trajectory,
) -> Result<(SolveReport, f64), ExperimentError> {
    let start = Instant::now();
    let report = run(problem, mirror, config, u0)?;
    Ok((report, start.elapsed().as_secs_f64()))
}

/// Writes `trace_<label>.csv` and `plot_<label>.csv` and returns the trace name.
fn write_traces(
    dir: &Path,
    label: &str,
    report: &SolveReport,
    optimum: Option<f64>,
    plot_errors: &[f64],
) -> Result<String, ExperimentError> {
    let trace = format!("trace_{label}.csv");
    write_trace_file(&report.records, optimum, &dir.join(&trace))?;
    write_rows_file(&plot_rows(plot_errors), &dir.join(format!("plot_{label}.csv")))?;
    Ok(trace)
}

/// Worst slack of `errors[n] ≤ λ(1 − τ/λ)^{n−1}·d0 + tol`.
fn geometric_bound_slack(errors: &[f64], lambda: f64, tau: f64, d0: f64, tol: f64) -> f64 {
    let rate = 1.0 - tau / lambda;
    errors
        .iter()
        .enumerate()
        .map(|(n, e)| lambda * rate.powi(n as i32 - 1) * d0 + tol - e)
        .fold(f64::INFINITY, f64::min)
}

fn admissibility_slack(report: &SolveReport, lambda: f64, sigma: f64) -> Result<f64, ExperimentError> {
    let mut worst = f64::INFINITY;
    for snap in &report.snapshots {
        worst = worst.min(admissibility_modulus_check(&snap.next_control, &snap.eta, lambda, sigma)?);
    }
    Ok(worst)
}

/// Semilog fit over `window`; a failure is recorded as a failed check.
fn semilog_check(
    name: &str,
    errors: &[f64],
    window: Window,
    checks: &mut Vec<CheckResult>,
) -> Option<mirror_msa::solver::LinearFit> {
    match fit_semilog(errors, window.range()) {
        Ok(fit) => Some(fit),
        Err(e) => {
            checks.push(CheckResult::failed(name, format!("fit over {:?} failed: {e}", window.range())));
            None
        }
    }
}

fn benchmark_lq() -> Result<ProblemSpec, ExperimentError> {
    Ok(make_lq(1.0, 1.0, 1.0, 0.5, 1.0)?)
}

/// Scalar LQ benchmark against the Riccati optimum.
pub fn run_lq(config: &ExperimentConfig) -> Result<ExperimentSummary, ExperimentError> {
    prepare(config)?;
    let (lambda, tau) = (config.lambda, config.tau);
    let problem = benchmark_lq()?;
    let grid = TimeGrid::new(problem.horizon, config.nt)?;
    let sol = RiccatiSolution::new(1.0, 1.0, 1.0, tau, problem.horizon)?;
    let reference = lq_reference(&sol, 0.5, &grid)?;
    let u0 = constant_control(grid, &[4.0]);

    let mut solver = SolverConfig::new(grid, lambda, tau, config.max_iters)?;
    solver.record_trajectories = true;
    let (report, wall) = timed_run(&problem, &MirrorMap::Quadratic, &solver, &u0)?;
    let errors = report.cost_errors(reference.cost);
    let label = label_tau(tau);
    let dir = &config.output_dir;
    let trace = write_traces(dir, &label, &report, Some(reference.cost), &errors)?;
    write_trajectory_file(&report.final_control, &dir.join(format!("control_{label}.csv")))?;
    write_trajectory_file(&reference.control, &dir.join("reference_control.csv"))?;

    let mut checks = Vec::new();
    let d0 = bregman_integrated(&MirrorMap::Quadratic, &reference.control, &u0)?;
    checks.push(CheckResult::at_least(
        "geometric_bound",
        geometric_bound_slack(&errors, lambda, tau, d0, RATE_BOUND_TOL),
        0.0,
        format!("J - J* <= lambda (1 - tau/lambda)^(n-1) D(u*|u0) + {RATE_BOUND_TOL:e} with J* = {:.12}", reference.cost),
    ));
    checks.push(CheckResult::at_least(
        "monotone_descent",
        check_dissipation(&report.records, lambda, lambda),
        -1e-12,
        "J(u^n) - J(u^(n+1))",
    ));
    checks.push(CheckResult::at_least(
        "admissibility_modulus",
        admissibility_slack(&report, lambda, 1.0)?,
        -ADMISSIBILITY_TOL,
        "|u_t - u_s| <= |eta_t - eta_s| / (lambda sigma) on adjacent nodes",
    ));
    let mut summary = run_summary(format!("lq_{label}"), &solver, &report, 1, wall);
    summary.trace_file = Some(trace);
    if let Some(fit) = semilog_check("geometric_factor", &errors, config.geometric_window, &mut checks) {
        let factor = fit.slope.exp();
        summary.fitted_geometric_factor = finite(factor);
        summary.semilog_r_squared = finite(fit.r_squared);
        checks.push(CheckResult::at_most("geometric_factor", factor, 1.0 - tau / lambda, "fitted factor <= 1 - tau/lambda"));
    }
    finish(config, vec![summary], checks)
}

/// Scalar quartic terminal-cost problem: sublinear for `τ = 0`, geometric
/// for `τ > 0`.
pub fn run_quartic(config: &ExperimentConfig) -> Result<ExperimentSummary, ExperimentError> {
    prepare(config)?;
    let lambda = config.lambda;
    let problem = make_quartic(1.0)?;
    let grid = TimeGrid::new(problem.horizon, config.nt)?;
    let alpha0 = 2.0;
    let u0 = constant_control(grid, &[alpha0]);
    // The optimum is u* = 0 with J* = 0 for every τ.
    let d0 = bregman_integrated(&MirrorMap::Quadratic, &Trajectory::zeros(grid, 1), &u0)?;
    let mut taus = vec![0.0];
    if config.tau > 0.0 {
        taus.push(config.tau);
    }

    let mut runs = Vec::new();
    let mut checks = Vec::new();
    for &tau in &taus {
        let label = label_tau(tau);
        let solver = SolverConfig::new(grid, lambda, tau, config.max_iters)?;
        let (report, wall) = timed_run(&problem, &MirrorMap::Quadratic, &solver, &u0)?;
        let costs = report.costs();
        let trace = write_traces(&config.output_dir, &label, &report, Some(0.0), &costs)?;
        let mut summary = run_summary(format!("quartic_{label}"), &solver, &report, 1, wall);
        summary.trace_file = Some(trace);

        if tau == 0.0 {
            let slack = costs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(n, c)| lambda * d0 / n as f64 - c)
                .fold(f64::INFINITY, f64::min);
            checks.push(CheckResult::at_least(
                "sublinear_bound",
                slack,
                0.0,
                format!("J(u^n) <= lambda D(0|u0) / n = {:.6}/n", lambda * d0),
            ));
            match fit_loglog_slope(&costs, config.tail_window.range()) {
                Ok(slope) => {
                    summary.fitted_loglog_slope = finite(slope);
                    checks.push(CheckResult::at_most(
                        "loglog_slope",
                        (slope + 2.0).abs(),
                        0.2,
                        format!("tail slope {slope:.4} within 0.2 of -2"),
                    ));
                }
                Err(e) => checks.push(CheckResult::failed("loglog_slope", e.to_string())),
            }
        } else {
            let name = format!("geometric_bound_{label}");
            checks.push(CheckResult::at_least(
                name,
                geometric_bound_slack(&costs, lambda, tau, d0, 0.0),
                0.0,
                "J(u^n) <= lambda (1 - tau/lambda)^(n-1) D(0|u0)",
            ));
            let name = format!("geometric_factor_{label}");
            if let Some(fit) = semilog_check(&name, &costs, config.geometric_window, &mut checks) {
                let factor = fit.slope.exp();
                let predicted = (1.0 - tau / lambda).powi(2);
                summary.fitted_geometric_factor = finite(factor);
                summary.semilog_r_squared = finite(fit.r_squared);
                checks.push(CheckResult::at_most(
                    name,
                    (factor - predicted).abs(),
                    0.01,
                    format!("fitted {factor:.5} vs linearized (1 - tau/lambda)^2 = {predicted:.5}"),
                ));
            }
        }
        runs.push(summary);

        let mut short = SolverConfig::new(grid, lambda, tau, RECURSION_ITERS.min(config.max_iters))?;
        short.record_trajectories = true;
        short.stop_residual = 0.0;
        let report = run(&problem, &MirrorMap::Quadratic, &short, &u0)?;
        let alphas = quartic_recursion(alpha0, problem.horizon, lambda, tau, short.max_iters)?;
        let worst = report
            .snapshots
            .iter()
            .flat_map(|s| s.control.values().iter().map(|v| (v[0] - alphas[s.iter]).abs()))
            .fold(0.0, f64::max);
        checks.push(CheckResult::at_most(
            format!("recursion_agreement_{label}"),
            worst,
            RECURSION_TOL,
            format!("solver nodes vs scalar recursion for n <= {}", short.max_iters),
        ));
    }
    finish(config, runs, checks)
}

/// `u⁰_t = 2 sin(2πt)·1 + 0.5 cos(4πt)·v` with `v` uniformly spaced in `[−1, 1]`.
pub fn highdim_initial_control(grid: TimeGrid, dim: usize) -> Trajectory {
    let v = DVector::from_fn(dim, |i, _| if dim == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (dim - 1) as f64 });
    let tau = std::f64::consts::TAU;
    Trajectory::from_fn(grid, dim, |t| {
        DVector::from_element(dim, 2.0 * (tau * t).sin()) + &v * (0.5 * (2.0 * tau * t).cos())
    })
}

/// First `n` from which every surrogate gap stays within `tol`; `None` when
/// only the reference iterate itself qualifies.
pub fn iterations_to_tolerance(gaps: &[f64], tol: f64) -> Option<usize> {
    match gaps.iter().rposition(|g| *g > tol) {
        None => Some(0),
        Some(n) => (n + 2 < gaps.len()).then_some(n + 1),
    }
}

fn highdim_single(config: &ExperimentConfig, dim: usize) -> Result<RunSummary, ExperimentError> {
    let params = HighDimParams::default();
    let problem = make_highdim(dim, config.seed, params)?;
    let grid = TimeGrid::new(params.horizon, config.nt)?;
    let mut solver = SolverConfig::new(grid, config.lambda, config.tau, config.max_iters)?;
    solver.stop_residual = 0.0;
    let (report, wall) = timed_run(&problem, &MirrorMap::Quadratic, &solver, &highdim_initial_control(grid, dim))?;
    let gaps = report.surrogate_gaps();
    let label = format!("d{dim}");
    let shown = &gaps[..gaps.len().min(config.geometric_window.last + 1)];
    let trace = write_traces(&config.output_dir, &label, &report, None, shown)?;
    let mut summary = run_summary(format!("highdim_{label}"), &solver, &report, dim, wall);
    summary.trace_file = Some(trace);
    summary.iterations_to_tolerance = iterations_to_tolerance(&gaps, HIGHDIM_GAP_TOL);
    if let Ok(fit) = fit_semilog(&gaps, config.geometric_window.range()) {
        summary.fitted_geometric_factor = finite(fit.slope.exp());
        summary.semilog_r_squared = finite(fit.r_squared);
    }
    Ok(summary)
}

/// High-dimensional nonlinear system, one concurrent solve per dimension.
pub fn run_highdim(config: &ExperimentConfig) -> Result<ExperimentSummary, ExperimentError> {
    prepare(config)?;
    let results: Vec<(usize, Result<RunSummary, ExperimentError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .dims
            .iter()
            .map(|&d| (d, scope.spawn(move || highdim_single(config, d))))
            .collect();
        handles
            .into_iter()
            .map(|(d, h)| (d, h.join().expect("highdim worker panicked")))
            .collect()
    });

    let mut runs = Vec::new();
    let mut checks = Vec::new();
    for (dim, result) in results {
        let summary = result.unwrap_or_else(|e| RunSummary {
            label: format!("highdim_d{dim}"),
            tau: config.tau,
            lambda: config.lambda,
            dim,
            termination: "Failed".into(),
            error: Some(e.to_string()),
            ..Default::default()
        });
        let name = format!("semilog_r_squared_d{dim}");
        checks.push(match (&summary.error, summary.semilog_r_squared) {
            (Some(e), _) => CheckResult::failed(name, e.clone()),
            (None, None) => CheckResult::failed(name, format!("no semilog fit over {:?}", config.geometric_window.range())),
            (None, Some(r2)) => CheckResult::at_least(name, r2, HIGHDIM_MIN_R_SQUARED, "surrogate gap semilog fit"),
        });
        runs.push(summary);
    }
    let mut reached: Vec<(usize, Option<usize>)> =
        runs.iter().filter(|r| r.error.is_none()).map(|r| (r.dim, r.iterations_to_tolerance)).collect();
    reached.sort_unstable();
    if reached.len() > 1 {
        let ordered = reached.windows(2).all(|w| match (w[0].1, w[1].1) {
            (Some(a), Some(b)) => a <= b,
            (_, None) => true,
            (None, Some(_)) => false,
        });
        let detail = format!("iterations to gap <= {HIGHDIM_GAP_TOL:e} by dim: {reached:?}");
        checks.push(if ordered {
            CheckResult::at_least("iterations_grow_with_dim", 1.0, 1.0, detail)
        } else {
            CheckResult::failed("iterations_grow_with_dim", detail)
        });
    }
    finish(config, runs, checks)
}

/// One row of `triangle.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleRow {
    pub problem: String,
    pub trial: usize,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub sensitivity: f64,
    pub fd_error: f64,
    pub sensitivity_error: f64,
}

/// Random point in `set`: uniform in a box, scaled normal otherwise.
fn random_point(set: &ControlSet, dim: usize, sampler: &mut NormalSampler) -> DVector<f64> {
    match set {
        ControlSet::Box { lower, upper } => {
            DVector::from_fn(dim, |i, _| lower[i] + (upper[i] - lower[i]) * sampler.uniform())
        }
        _ => sampler.normal_vector(dim) * 2.0,
    }
}

/// Gradient triangle, relative smoothness and convexity, three-point and
/// dissipation suites.
pub fn run_gradcheck(config: &ExperimentConfig) -> Result<ExperimentSummary, ExperimentError> {
    prepare(config)?;
    let grid = TimeGrid::new(1.0, config.nt)?;
    let lq = benchmark_lq()?;
    let quartic = make_quartic(1.0)?;
    let quad = MirrorMap::Quadratic;
    let mut sampler = NormalSampler::new(config.seed);
    let mut checks = Vec::new();

    let mut rows = Vec::new();
    for (name, problem, tau) in [("lq", &lq, config.tau), ("quartic", &quartic, 0.0)] {
        for trial in 0..TRIANGLE_TRIALS {
            let u = smooth_random_control(&grid, 1, 1.0, &mut sampler);
            let d = smooth_random_control(&grid, 1, 1.0, &mut sampler);
            let tri = GradientTriangle::from_values(
                adjoint_pairing(problem, &quad, tau, &u, &d)? + config.gradient_bias,
                fd_gradient(problem, &quad, tau, &u, &d, DEFAULT_FD_EPS)?,
                sensitivity_gradient(problem, &quad, tau, &u, &d)?,
            );
            rows.push(TriangleRow {
                problem: name.into(),
                trial,
                adjoint: tri.adjoint,
                finite_difference: tri.finite_difference,
                sensitivity: tri.sensitivity,
                fd_error: tri.fd_error,
                sensitivity_error: tri.sensitivity_error,
            });
        }
    }
    write_rows_file(&rows, &config.output_dir.join("triangle.csv"))?;
    let worst = |f: fn(&TriangleRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    checks.push(CheckResult::at_most(
        "triangle_adjoint_vs_fd",
        worst(|r| r.fd_error),
        TRIANGLE_FD_TOL,
        format!("central differences, eps = {DEFAULT_FD_EPS:e}"),
    ));
    checks.push(CheckResult::at_most(
        "triangle_adjoint_vs_sensitivity",
        worst(|r| r.sensitivity_error),
        TRIANGLE_SENSITIVITY_TOL,
        "forward sensitivity",
    ));

    let ledger = ConstantsLedger::for_problem(&lq, &quad, config.tau)?;
    let (mut smooth, mut convex, mut quartic_convex) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for _ in 0..INEQUALITY_PAIRS {
        let u = smooth_random_control(&grid, 1, 1.0, &mut sampler);
        let v = smooth_random_control(&grid, 1, 1.0, &mut sampler);
        smooth = smooth.min(relative_smoothness_slack(&lq, &quad, config.tau, ledger.l, &u, &v)?);
        convex = convex.min(relative_convexity_slack(&lq, &quad, config.tau, &u, &v)?);
        quartic_convex = quartic_convex.min(relative_convexity_slack(&quartic, &quad, 0.0, &u, &v)?);
    }
    checks.push(CheckResult::at_least("relative_smoothness", smooth, INEQUALITY_TOL, format!("LQ with L = {:.4}", ledger.l)));
    checks.push(CheckResult::at_least(
        "relative_convexity",
        convex,
        INEQUALITY_TOL,
        format!("LQ with modulus tau = {}", config.tau),
    ));
    checks.push(CheckResult::at_least("quartic_convexity", quartic_convex, INEQUALITY_TOL, "quartic, modulus 0"));

    let dim = 2;
    let boxed = ControlSet::boxed(DVector::from_element(dim, -1.0), DVector::from_element(dim, 1.0))?;
    let sets = [ControlSet::Unconstrained, boxed];
    let maps = [MirrorMap::Quadratic, MirrorMap::quartic(1.0)?];
    let mut three_point = f64::INFINITY;
    for trial in 0..THREE_POINT_TRIALS {
        let set = &sets[trial % 2];
        let map = &maps[(trial / 2) % 2];
        let u = random_point(set, dim, &mut sampler);
        let w = random_point(set, dim, &mut sampler);
        let xi = sampler.normal_vector(dim) * 3.0;
        let lambda = 0.5 + 10.0 * sampler.uniform();
        let ustar = mirror_step_pointwise(map, set, &u, &xi, lambda)?;
        three_point = three_point.min(three_point_check(map, &u, &ustar, &w, &xi, lambda));
    }
    checks.push(CheckResult::at_least(
        "three_point",
        three_point,
        THREE_POINT_TOL,
        "quadratic and quartic-augmented maps, unconstrained and box sets",
    ));

    let lambda = config.lambda.max(ledger.l);
    let solver = SolverConfig::new(grid, lambda, config.tau, config.max_iters)?;
    let (report, wall) = timed_run(&lq, &quad, &solver, &constant_control(grid, &[4.0]))?;
    checks.push(CheckResult::at_least(
        "dissipation",
        check_dissipation(&report.records, lambda, ledger.l),
        INEQUALITY_TOL,
        format!("J(u^n) - J(u^(n+1)) >= (lambda - L) D(u^(n+1)|u^n), lambda = {lambda:.4}, L = {:.4}", ledger.l),
    ));
    checks.push(CheckResult::at_least(
        "descent_certificate",
        check_descent_certificate(&report.records, lambda),
        INEQUALITY_TOL,
        "int xi (u^(n+1) - u^n) >= lambda D(u^(n+1)|u^n)",
    ));
    let mut summary = run_summary("gradcheck_dissipation".into(), &solver, &report, 1, wall);
    summary.trace_file = Some(write_traces(&config.output_dir, "dissipation", &report, None, &report.surrogate_gaps())?);
    finish(config, vec![summary], checks)
}

/// Parameterized scalar LQ problem with a selectable mirror map and box.
pub fn run_custom(config: &ExperimentConfig) -> Result<ExperimentSummary, ExperimentError> {
    prepare(config)?;
    let c = &config.custom;
    let invalid = |e: mirror_msa::Error| ConfigError::Invalid(format!("custom problem: {e}"));
    let mut problem = make_lq(c.a, c.q, c.s, c.x0, c.horizon).map_err(invalid)?;
    if let Some([lo, hi]) = c.control_box {
        problem.control_set = ControlSet::boxed(DVector::from_element(1, lo), DVector::from_element(1, hi)).map_err(invalid)?;
    }
    let mirror = match c.mirror {
        MirrorChoice::Quadratic => MirrorMap::Quadratic,
        MirrorChoice::Quartic => MirrorMap::quartic(c.mirror_eps).map_err(invalid)?,
    };
    let grid = TimeGrid::new(c.horizon, config.nt)?;
    let u0 = constant_control(grid, &[c.u0]).map(|v| problem.control_set.project(v));

    let mut solver = SolverConfig::new(grid, config.lambda, config.tau, config.max_iters)?;
    solver.record_trajectories = true;
    let (report, wall) = timed_run(&problem, &mirror, &solver, &u0)?;
    let oracle = (mirror.is_quadratic() && c.control_box.is_none() && config.tau > 0.0)
        .then(|| RiccatiSolution::new(c.a, c.q, c.s, config.tau, c.horizon).and_then(|sol| lq_reference(&sol, c.x0, &grid)))
        .transpose()?;
    let optimum = oracle.as_ref().map(|r| r.cost);
    let errors = match optimum {
        Some(j) => report.cost_errors(j),
        None => report.surrogate_gaps(),
    };
    let label = label_tau(config.tau);
    let trace = write_traces(&config.output_dir, &label, &report, optimum, &errors)?;
    write_trajectory_file(&report.final_control, &config.output_dir.join(format!("control_{label}.csv")))?;

    let mut checks = vec![
        CheckResult::at_least(
            "descent_certificate",
            check_descent_certificate(&report.records, config.lambda),
            INEQUALITY_TOL,
            "int xi (u^(n+1) - u^n) >= lambda D(u^(n+1)|u^n)",
        ),
        CheckResult::at_least(
            "admissibility_modulus",
            admissibility_slack(&report, config.lambda, mirror.strong_convexity())?,
            -ADMISSIBILITY_TOL,
            "|u_t - u_s| <= |eta_t - eta_s| / (lambda sigma) on adjacent nodes",
        ),
    ];
    let ledger = ConstantsLedger::for_problem(&problem, &mirror, config.tau)?;
    if config.lambda >= ledger.l {
        checks.push(CheckResult::at_least(
            "dissipation",
            check_dissipation(&report.records, config.lambda, ledger.l),
            INEQUALITY_TOL,
            format!("lambda >= L = {:.4}", ledger.l),
        ));
    }
    let mut summary = run_summary(format!("custom_{label}"), &solver, &report, 1, wall);
    summary.trace_file = Some(trace);
    if let Ok(fit) = fit_semilog(&errors, config.geometric_window.range()) {
        summary.fitted_geometric_factor = finite(fit.slope.exp());
        summary.semilog_r_squared = finite(fit.r_squared);
    }
    finish(config, vec![summary], checks)
}
