//! The mirror-descent successive-approximation loop and its diagnostics.
//!
//! Iteration `n` integrates the state and adjoint for `uⁿ`, forms
//! `ξ = ∇ᵤH^τ(xⁿ, pⁿ, uⁿ)` at every node and replaces the control by the
//! node-wise mirror step. Each evaluated iterate yields one
//! [`IterateRecord`].

use std::io::Write;
use std::ops::Range;

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::mirror::{bregman_integrated, mirror_step_pointwise, MirrorMap};
use crate::problem::{grad_u_h0_unchecked, ProblemSpec};
use crate::reference::ConstantsLedger;
use crate::trajectory::{evaluate_cost, integrate_adjoint, integrate_state, TimeGrid, Trajectory};

/// Default stationarity tolerance.
pub const DEFAULT_STOP_RESIDUAL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub tau: f64,
    /// Number of control updates; iterates `0..=max_iters` are evaluated.
    pub max_iters: usize,
    pub grid: TimeGrid,
    pub stop_residual: f64,
    /// Stop when `|J(uⁿ) − J(uⁿ⁻¹)|` falls to this value; `0` disables the test.
    pub stop_cost_delta: f64,
    /// Keep every control and `η = ξ + λ∇h(u)` for later inspection.
    pub record_trajectories: bool,
    /// Relative-smoothness modulus; derived from the problem's smoothness
    /// data when absent.
    pub smoothness_l: Option<f64>,
}

impl SolverConfig {
    pub fn new(grid: TimeGrid, lambda: f64, tau: f64, max_iters: usize) -> Result<Self> {
        let config = Self {
            lambda,
            tau,
            max_iters,
            grid,
            stop_residual: DEFAULT_STOP_RESIDUAL,
            stop_cost_delta: 0.0,
            record_trajectories: false,
            smoothness_l: None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be >= 0, got {}", self.tau)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        if [self.stop_residual, self.stop_cost_delta].iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::InvalidArgument("stopping tolerances must be >= 0".into()));
        }
        Ok(())
    }
}

/// Diagnostics of iterate `n`. The step quantities refer to the update
/// `uⁿ → uⁿ⁺¹` computed from this iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateRecord {
    pub iter: usize,
    /// `J^τ(uⁿ)`.
    pub cost: f64,
    /// `𝒟_h(uⁿ⁺¹|uⁿ)`.
    pub bregman_step: f64,
    /// Stationarity residual `max_t |uⁿ⁺¹_t − uⁿ_t|`.
    pub residual: f64,
    pub sup_control_change: f64,
    /// `∫ ξ·(uⁿ⁺¹ − uⁿ) dt`.
    pub descent_gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIters,
    ResidualMet,
    CostDeltaMet,
    Blowup,
}

/// Control and `η` of iterate `n` together with the control they produce.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateSnapshot {
    pub iter: usize,
    pub control: Trajectory,
    pub eta: Trajectory,
    pub next_control: Trajectory,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub records: Vec<IterateRecord>,
    pub final_control: Trajectory,
    pub final_state: Trajectory,
    pub final_adjoint: Trajectory,
    pub termination: Termination,
    pub fitted_geometric_factor: Option<f64>,
    pub fitted_loglog_slope: Option<f64>,
    pub snapshots: Vec<IterateSnapshot>,
    pub smoothness_l: Option<f64>,
}

impl SolveReport {
    pub fn costs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cost).collect()
    }

    /// `|J(uⁿ) − J*|` for every record.
    pub fn cost_errors(&self, optimum: f64) -> Vec<f64> {
        self.records.iter().map(|r| (r.cost - optimum).abs()).collect()
    }

    /// `|J(uⁿ) − J(u^N)|` against the last recorded iterate.
    pub fn surrogate_gaps(&self) -> Vec<f64> {
        let last = self.records.last().map_or(0.0, |r| r.cost);
        self.records.iter().map(|r| (r.cost - last).abs()).collect()
    }

    pub fn final_record(&self) -> &IterateRecord {
        self.records.last().expect("reports always hold at least one record")
    }
}

/// `ξ_t = ∇ᵤH^τ(x_t, p_t, u_t)` at every node.
pub fn hamiltonian_gradient(
    problem: &ProblemSpec,
    mirror: &MirrorMap,
    tau: f64,
    u: &Trajectory,
    x: &Trajectory,
    p: &Trajectory,
) -> Result<Trajectory> {
    u.check_compatible(x)?;
    u.check_compatible(p)?;
    check_dim("control width", problem.control_dim, u.width())?;
    check_dim("state width", problem.state_dim, x.width())?;
    check_dim("adjoint width", problem.state_dim, p.width())?;
    let grid = *u.grid();
    let values = (0..grid.node_count())
        .map(|k| {
            let uk = u.value(k);
            let g = grad_u_h0_unchecked(problem, grid.node(k), x.value(k), p.value(k), uk);
            if tau == 0.0 {
                g
            } else {
                g - mirror.grad(uk) * tau
            }
        })
        .collect();
    Trajectory::new(grid, values)
}

struct Step {
    next: Trajectory,
    xi: Trajectory,
    sup_change: f64,
}

fn take_step(
    problem: &ProblemSpec,
    mirror: &MirrorMap,
    config: &SolverConfig,
    u: &Trajectory,
    x: &Trajectory,
    p: &Trajectory,
) -> Result<Step> {
    let xi = hamiltonian_gradient(problem, mirror, config.tau, u, x, p)?;
    let values = u
        .values()
        .iter()
        .zip(xi.values())
        .map(|(uk, gk)| mirror_step_pointwise(mirror, &problem.control_set, uk, gk, config.lambda))
        .collect::<Result<Vec<_>>>()?;
    let next = Trajectory::new(*u.grid(), values)?;
    let sup_change = next
        .values()
        .iter()
        .zip(u.values())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok(Step { next, xi, sup_change })
}

/// Fixed-point residual `max_t |u⁺_t − u_t|` of the mirror step.
pub fn stationarity_residual(
    problem: &ProblemSpec,
    mirror: &MirrorMap,
    tau: f64,
    lambda: f64,
    u: &Trajectory,
    x: &Trajectory,
    p: &Trajectory,
) -> Result<f64> {
    let config = SolverConfig::new(*u.grid(), lambda, tau, 1)?;
    Ok(take_step(problem, mirror, &config, u, x, p)?.sup_change)
}

fn check_initial_control(problem: &ProblemSpec, config: &SolverConfig, u0: &Trajectory) -> Result<()> {
    if *u0.grid() != config.grid {
        return Err(Error::GridMismatch);
    }
    check_dim("control width", problem.control_dim, u0.width())?;
    if let Some(k) = u0.values().iter().position(|u| !problem.control_set.contains(u, 1e-12)) {
        return Err(Error::InvalidArgument(format!("initial control leaves U at node {k}")));
    }
    Ok(())
}

fn resolve_smoothness(problem: &ProblemSpec, mirror: &MirrorMap, config: &SolverConfig) -> Option<f64> {
    config.smoothness_l.or_else(|| {
        problem
            .smoothness
            .as_ref()
            .and_then(|_| ConstantsLedger::for_problem(problem, mirror, config.tau).ok())
            .map(|ledger| ledger.l)
    })
}

/// Runs the iteration from `u0` until a stopping rule fires.
///
/// A non-finite trajectory or cost at `u0` is an error; later blow-ups end
/// the run with [`Termination::Blowup`] and keep the last finite iterate.
pub fn run(problem: &ProblemSpec, mirror: &MirrorMap, config: &SolverConfig, u0: &Trajectory) -> Result<SolveReport> {
    config.validate()?;
    problem.validate()?;
    check_initial_control(problem, config, u0)?;
    let smoothness_l = resolve_smoothness(problem, mirror, config);
    if let Some(l) = smoothness_l {
        if config.lambda < l {
            log::warn!(
                "lambda = {} is below the relative-smoothness constant L = {l:.4}; monotone descent is not guaranteed",
                config.lambda
            );
        }
    }

    let mut u = u0.clone();
    let mut x = integrate_state(problem, &u)?;
    let mut p = integrate_adjoint(problem, &u, &x)?;
    let mut cost = evaluate_cost(problem, mirror, config.tau, &u, &x)?;
    if !cost.is_finite() {
        return Err(Error::NumericalBlowup { node: config.grid.steps(), t: config.grid.horizon() });
    }

    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let termination = loop {
        let n = records.len();
        let step = take_step(problem, mirror, config, &u, &x, &p)?;
        let bregman_step = bregman_integrated(mirror, &step.next, &u)?;
        let grid = config.grid;
        let descent_gain = grid.trapezoid(|k| step.xi.value(k).dot(&(step.next.value(k) - u.value(k))));
        records.push(IterateRecord {
            iter: n,
            cost,
            bregman_step,
            residual: step.sup_change,
            sup_control_change: step.sup_change,
            descent_gain,
        });
        if config.record_trajectories {
            let eta = step.xi.zip_map(&u, |g, uk| g + mirror.grad(uk) * config.lambda);
            snapshots.push(IterateSnapshot {
                iter: n,
                control: u.clone(),
                eta,
                next_control: step.next.clone(),
            });
        }

        if step.sup_change <= config.stop_residual {
            break Termination::ResidualMet;
        }
        if n > 0 && config.stop_cost_delta > 0.0 && (records[n - 1].cost - cost).abs() <= config.stop_cost_delta {
            break Termination::CostDeltaMet;
        }
        if n == config.max_iters {
            break Termination::MaxIters;
        }

        let advanced = integrate_state(problem, &step.next).and_then(|x_next| {
            let p_next = integrate_adjoint(problem, &step.next, &x_next)?;
            let c = evaluate_cost(problem, mirror, config.tau, &step.next, &x_next)?;
            if c.is_finite() {
                Ok((x_next, p_next, c))
            } else {
                Err(Error::NumericalBlowup { node: grid.steps(), t: grid.horizon() })
            }
        });
        match advanced {
            Ok((x_next, p_next, c)) => {
                u = step.next;
                x = x_next;
                p = p_next;
                cost = c;
            }
            Err(Error::NumericalBlowup { node, t }) => {
                log::warn!("iteration {} blew up at node {node} (t = {t})", n + 1);
                break Termination::Blowup;
            }
            Err(e) => return Err(e),
        }
    };

    Ok(SolveReport {
        records,
        final_control: u,
        final_state: x,
        final_adjoint: p,
        termination,
        fitted_geometric_factor: None,
        fitted_loglog_slope: None,
        snapshots,
        smoothness_l,
    })
}

/// Worst slack `min_n [J(uⁿ) − J(uⁿ⁺¹) − (λ − L)𝒟_h(uⁿ⁺¹|uⁿ)]`; `0` for
/// fewer than two records. Passing `smoothness_l = lambda` tests monotone
/// decrease alone.
pub fn check_dissipation(records: &[IterateRecord], lambda: f64, smoothness_l: f64) -> f64 {
    records
        .windows(2)
        .map(|w| w[0].cost - w[1].cost - (lambda - smoothness_l) * w[0].bregman_step)
        .fold(0.0, f64::min)
}

/// Worst slack of the descent certificate `∫ξ·(uⁿ⁺¹ − uⁿ) ≥ λ𝒟_h(uⁿ⁺¹|uⁿ)`.
pub fn check_descent_certificate(records: &[IterateRecord], lambda: f64) -> f64 {
    records
        .iter()
        .map(|r| r.descent_gain - lambda * r.bregman_step)
        .fold(f64::INFINITY, f64::min)
}

/// Ordinary least-squares line `y ≈ slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    check_dim("fit samples", xs.len(), ys.len())?;
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("a line fit needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit { slope, intercept, r_squared })
}

fn window_logs(errors: &[f64], window: &Range<usize>) -> Result<Vec<f64>> {
    if window.end > errors.len() || window.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "fit window {window:?} needs two or more indices within 0..{}",
            errors.len()
        )));
    }
    errors[window.clone()]
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            if e > 0.0 && e.is_finite() {
                Ok(e.ln())
            } else {
                Err(Error::InvalidArgument(format!(
                    "error at index {} is not positive: {e}",
                    window.start + i
                )))
            }
        })
        .collect()
}

/// Least-squares fit of `log error` against the index `n` over `window`.
pub fn fit_semilog(errors: &[f64], window: Range<usize>) -> Result<LinearFit> {
    let ys = window_logs(errors, &window)?;
    let xs: Vec<f64> = window.map(|n| n as f64).collect();
    linear_fit(&xs, &ys)
}

/// Per-iteration contraction factor: `exp` of the semilog slope.
pub fn fit_geometric_factor(errors: &[f64], window: Range<usize>) -> Result<f64> {
    Ok(fit_semilog(errors, window)?.slope.exp())
}

/// Slope of `log error` against `log n`, where `errors[n]` belongs to
/// iteration `n`; the window must exclude `n = 0`.
pub fn fit_loglog_slope(errors: &[f64], window: Range<usize>) -> Result<f64> {
    if window.start == 0 {
        return Err(Error::InvalidArgument("log-log window must start at n >= 1".into()));
    }
    let ys = window_logs(errors, &window)?;
    let xs: Vec<f64> = window.map(|n| (n as f64).ln()).collect();
    Ok(linear_fit(&xs, &ys)?.slope)
}

/// Worst slack `min_k [|η_{k+1} − η_k|/(λσ_h) − |u⁺_{k+1} − u⁺_k|]` over
/// adjacent nodes.
pub fn admissibility_modulus_check(
    u_next: &Trajectory,
    eta: &Trajectory,
    lambda: f64,
    sigma_h: f64,
) -> Result<f64> {
    u_next.check_compatible(eta)?;
    check_dim("eta width", u_next.width(), eta.width())?;
    if !(lambda > 0.0 && sigma_h > 0.0) {
        return Err(Error::InvalidArgument("lambda and sigma_h must be positive".into()));
    }
    let scale = 1.0 / (lambda * sigma_h);
    let u = u_next.values();
    let e = eta.values();
    Ok((0..u.len() - 1)
        .map(|k| scale * (&e[k + 1] - &e[k]).norm() - (&u[k + 1] - &u[k]).norm())
        .fold(f64::INFINITY, f64::min))
}

/// Writes `iter,cost,[cost_error,]bregman_step,residual,sup_control_change`.
/// `cost_error = |J − J*|` appears only when `optimum` is given.
pub fn write_trace_csv<W: Write>(records: &[IterateRecord], optimum: Option<f64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["iter", "cost"];
    if optimum.is_some() {
        header.push("cost_error");
    }
    header.extend(["bregman_step", "residual", "sup_control_change"]);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.iter.to_string(), format!("{:.16e}", r.cost)];
        if let Some(j) = optimum {
            row.push(format!("{:.16e}", (r.cost - j).abs()));
        }
        for value in [r.bregman_step, r.residual, r.sup_control_change] {
            row.push(format!("{value:.16e}"));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

/// Trace rows read back from [`write_trace_csv`] output.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub cost: f64,
    pub cost_error: Option<f64>,
    pub bregman_step: f64,
    pub residual: f64,
    pub sup_control_change: f64,
}

pub fn read_trace_csv<R: std::io::Read>(reader: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let with_error = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["iter", "cost", "bregman_step", "residual", "sup_control_change"] => false,
        ["iter", "cost", "cost_error", "bregman_step", "residual", "sup_control_change"] => true,
        other => return Err(Error::Csv(format!("unexpected trace header {other:?}"))),
    };
    let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Csv(e.to_string()));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let iter = rec[0].parse::<usize>().map_err(|e| Error::Csv(e.to_string()))?;
        let off = usize::from(with_error);
        rows.push(TraceRow {
            iter,
            cost: parse(&rec[1])?,
            cost_error: if with_error { Some(parse(&rec[2])?) } else { None },
            bregman_step: parse(&rec[2 + off])?,
            residual: parse(&rec[3 + off])?,
            sup_control_change: parse(&rec[4 + off])?,
        });
    }
    Ok(rows)
}

/// Constant control `value` on `grid`.
pub fn constant_control(grid: TimeGrid, value: &[f64]) -> Trajectory {
    Trajectory::constant(grid, DVector::from_column_slice(value))
}
