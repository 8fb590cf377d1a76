//! Uniform time grids, node-valued trajectories, fixed-step RK4 integration
//! of the state (forward) and adjoint (backward), and trapezoidal cost
//! quadrature.
//!
//! Controls are stored at the grid nodes and extended to `[0, T]` by
//! piecewise-linear interpolation, so RK4 stage controls on interval
//! `[t_k, t_{k+1}]` are `u_k`, `(u_k + u_{k+1})/2` (twice) and `u_{k+1}`.
//! The adjoint sweep needs the state at interval midpoints; it uses the
//! cubic Hermite interpolant built from the stored state nodes and the drift
//! at those nodes, which keeps the adjoint fourth-order accurate.

use std::io::{Read, Write};

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::mirror::MirrorMap;
use crate::problem::{grad_x_h0_unchecked, ProblemSpec};

/// Number of steps used when none is configured.
pub const DEFAULT_STEPS: usize = 500;

/// Uniform grid `t_k = kT/N`, `k = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid horizon must be positive, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("grid needs at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn node_count(&self) -> usize {
        self.steps + 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |k| self.node(k))
    }

    /// Trapezoidal weight of node `k`.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.steps {
            0.5 * self.step()
        } else {
            self.step()
        }
    }

    /// Composite trapezoidal rule over node values `f(k)`.
    pub fn trapezoid(&self, f: impl Fn(usize) -> f64) -> f64 {
        let n = self.steps;
        let interior: f64 = (1..n).map(&f).sum();
        self.step() * (interior + 0.5 * (f(0) + f(n)))
    }

    /// Grid with `factor` times as many steps over the same horizon.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        Self::new(self.horizon, self.steps * factor)
    }
}

/// Samples of a vector path on a [`TimeGrid`], one vector of fixed width per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    width: usize,
    values: Vec<DVector<f64>>,
}

impl Trajectory {
    /// Validates node count, uniform width and finiteness.
    pub fn new(grid: TimeGrid, values: Vec<DVector<f64>>) -> Result<Self> {
        check_dim("trajectory nodes", grid.node_count(), values.len())?;
        let width = values[0].len();
        if width == 0 {
            return Err(Error::InvalidArgument("trajectory width must be positive".into()));
        }
        for (k, v) in values.iter().enumerate() {
            check_dim("trajectory width", width, v.len())?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericalBlowup { node: k, t: grid.node(k) });
            }
        }
        Ok(Self { grid, width, values })
    }

    pub fn from_fn(grid: TimeGrid, width: usize, f: impl Fn(f64) -> DVector<f64>) -> Self {
        let values: Vec<_> = grid
            .nodes()
            .map(|t| {
                let v = f(t);
                assert_eq!(v.len(), width, "from_fn produced a vector of the wrong width");
                v
            })
            .collect();
        Self { grid, width, values }
    }

    pub fn constant(grid: TimeGrid, value: DVector<f64>) -> Self {
        let width = value.len();
        Self {
            grid,
            width,
            values: vec![value; grid.node_count()],
        }
    }

    pub fn zeros(grid: TimeGrid, width: usize) -> Self {
        Self::constant(grid, DVector::zeros(width))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn value(&self, k: usize) -> &DVector<f64> {
        &self.values[k]
    }

    pub fn last(&self) -> &DVector<f64> {
        &self.values[self.grid.steps]
    }

    pub fn into_values(self) -> Vec<DVector<f64>> {
        self.values
    }

    pub(crate) fn check_compatible(&self, other: &Trajectory) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Piecewise-linear interpolation; exact at the nodes.
    pub fn interpolate(&self, t: f64) -> Result<DVector<f64>> {
        let horizon = self.grid.horizon;
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::OutOfRange { t, horizon });
        }
        let n = self.grid.steps;
        let mut k = ((t / self.grid.step()).floor() as usize).min(n - 1);
        while k + 1 < n && self.grid.node(k + 1) <= t {
            k += 1;
        }
        while k > 0 && self.grid.node(k) > t {
            k -= 1;
        }
        let (t0, t1) = (self.grid.node(k), self.grid.node(k + 1));
        if t == t0 {
            return Ok(self.values[k].clone());
        }
        if t == t1 {
            return Ok(self.values[k + 1].clone());
        }
        let theta = (t - t0) / (t1 - t0);
        Ok(&self.values[k] * (1.0 - theta) + &self.values[k + 1] * theta)
    }

    /// Midpoint of interval `k` under linear interpolation.
    pub(crate) fn midpoint(&self, k: usize) -> DVector<f64> {
        (&self.values[k] + &self.values[k + 1]) * 0.5
    }

    /// Largest Euclidean norm over the nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Discrete `L²` norm (trapezoidal rule on `|v_k|²`).
    pub fn l2_norm(&self) -> f64 {
        self.grid.trapezoid(|k| self.values[k].norm_squared()).sqrt()
    }

    pub fn sub(&self, other: &Trajectory) -> Result<Trajectory> {
        self.check_compatible(other)?;
        check_dim("trajectory width", self.width, other.width)?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub(crate) fn zip_map(
        &self,
        other: &Trajectory,
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    ) -> Trajectory {
        let values: Vec<_> = self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect();
        Trajectory {
            grid: self.grid,
            width: values[0].len(),
            values,
        }
    }

    /// `self + scale·direction`.
    pub fn axpy(&self, scale: f64, direction: &Trajectory) -> Result<Trajectory> {
        self.check_compatible(direction)?;
        check_dim("trajectory width", self.width, direction.width)?;
        Ok(self.zip_map(direction, |a, b| a + b * scale))
    }

    pub fn map(&self, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> Trajectory {
        let values: Vec<_> = self.values.iter().map(f).collect();
        Trajectory {
            grid: self.grid,
            width: values[0].len(),
            values,
        }
    }

    /// Writes `t,v0,...,v{w-1}` with 17 significant digits per entry.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.width).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for (k, v) in self.values.iter().enumerate() {
            let mut row = vec![format!("{:.16e}", self.grid.node(k))];
            row.extend(v.iter().map(|x| format!("{x:.16e}")));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }

    /// Reads the format produced by [`Trajectory::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let width = header.len().saturating_sub(1);
        if width == 0 || &header[0] != "t" {
            return Err(Error::Csv("expected header t,v0,...".into()));
        }
        for (i, name) in header.iter().skip(1).enumerate() {
            if name != format!("v{i}") {
                return Err(Error::Csv(format!("unexpected column {name}")));
            }
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let parsed = parsed.map_err(|e| Error::Csv(e.to_string()))?;
            check_dim("csv row", width + 1, parsed.len())?;
            times.push(parsed[0]);
            values.push(DVector::from_column_slice(&parsed[1..]));
        }
        if times.len() < 2 {
            return Err(Error::Csv("trajectory needs at least two rows".into()));
        }
        let grid = TimeGrid::new(*times.last().unwrap(), times.len() - 1)?;
        for (k, t) in times.iter().enumerate() {
            if (t - grid.node(k)).abs() > 1e-12 * grid.horizon() {
                return Err(Error::Csv(format!("row {k}: time {t} is off the uniform grid")));
            }
        }
        Trajectory::new(grid, values)
    }
}

fn check_finite(v: &DVector<f64>, node: usize, grid: &TimeGrid) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalBlowup { node, t: grid.node(node) })
    }
}

/// Cubic Hermite value at the midpoint of `[a, b]` from endpoint values and
/// derivatives, for a step `h`.
pub(crate) fn hermite_midpoint(
    va: &DVector<f64>,
    vb: &DVector<f64>,
    da: &DVector<f64>,
    db: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    (va + vb) * 0.5 + (da - db) * (h / 8.0)
}

/// Drift `b(t_k, x_k, u_k)` at every node.
pub(crate) fn drift_at_nodes(
    problem: &ProblemSpec,
    control: &Trajectory,
    state: &Trajectory,
) -> Vec<DVector<f64>> {
    let grid = control.grid();
    (0..grid.node_count())
        .map(|k| (problem.drift)(grid.node(k), state.value(k), control.value(k)))
        .collect()
}

/// State at the midpoint of every interval (cubic Hermite reconstruction).
pub(crate) fn state_midpoints(
    problem: &ProblemSpec,
    control: &Trajectory,
    state: &Trajectory,
) -> Vec<DVector<f64>> {
    let h = control.grid().step();
    let xdot = drift_at_nodes(problem, control, state);
    (0..control.grid().steps())
        .map(|k| hermite_midpoint(state.value(k), state.value(k + 1), &xdot[k], &xdot[k + 1], h))
        .collect()
}

fn check_control(problem: &ProblemSpec, control: &Trajectory) -> Result<()> {
    check_dim("control width", problem.control_dim, control.width())?;
    let (t_grid, t_prob) = (control.grid().horizon(), problem.horizon);
    if (t_grid - t_prob).abs() > 1e-12 * t_prob {
        return Err(Error::InvalidArgument(format!(
            "control grid horizon {t_grid} differs from problem horizon {t_prob}"
        )));
    }
    Ok(())
}

/// Classical RK4 for `ẋ = b(t, x, u)` from `x₀`, control linearly
/// interpolated at the stage times.
pub fn integrate_state(problem: &ProblemSpec, control: &Trajectory) -> Result<Trajectory> {
    check_control(problem, control)?;
    check_dim("initial state", problem.state_dim, problem.initial_state.len())?;
    let grid = *control.grid();
    let h = grid.step();
    let mut xs = Vec::with_capacity(grid.node_count());
    xs.push(problem.initial_state.clone());
    check_finite(&xs[0], 0, &grid)?;
    for k in 0..grid.steps() {
        let t = grid.node(k);
        let tm = t + 0.5 * h;
        let t1 = grid.node(k + 1);
        let (u0, um, u1) = (control.value(k), control.midpoint(k), control.value(k + 1));
        let x = &xs[k];
        let k1 = (problem.drift)(t, x, u0);
        let k2 = (problem.drift)(tm, &(x + &k1 * (0.5 * h)), &um);
        let k3 = (problem.drift)(tm, &(x + &k2 * (0.5 * h)), &um);
        let k4 = (problem.drift)(t1, &(x + &k3 * h), u1);
        let next = x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        check_finite(&next, k + 1, &grid)?;
        xs.push(next);
    }
    Ok(Trajectory { grid, width: problem.state_dim, values: xs })
}

/// RK4 backward sweep for `ṗ = −∇ₓH⁰(x, p, u)`, `p_T = −∇g(x_T)`.
///
/// The right-hand side is affine in `p`, so each Jacobian is evaluated once
/// per node and once per interval midpoint.
pub fn integrate_adjoint(
    problem: &ProblemSpec,
    control: &Trajectory,
    state: &Trajectory,
) -> Result<Trajectory> {
    check_control(problem, control)?;
    control.check_compatible(state)?;
    check_dim("state width", problem.state_dim, state.width())?;
    let grid = *control.grid();
    let n = grid.steps();
    let h = grid.step();
    let x_mid = state_midpoints(problem, control, state);

    // −∇ₓH⁰(x, p, u) = −J_xᵀ p + ∇ₓf
    let rhs = |t: f64, x: &DVector<f64>, u: &DVector<f64>, p: &DVector<f64>| {
        -grad_x_h0_unchecked(problem, t, x, p, u)
    };

    let mut ps = vec![DVector::zeros(problem.state_dim); n + 1];
    ps[n] = -(problem.terminal_grad)(state.value(n));
    check_finite(&ps[n], n, &grid)?;
    for k in (0..n).rev() {
        let (t1, t0) = (grid.node(k + 1), grid.node(k));
        let tm = t0 + 0.5 * h;
        let um = control.midpoint(k);
        let p = &ps[k + 1];
        let k1 = rhs(t1, state.value(k + 1), control.value(k + 1), p);
        let k2 = rhs(tm, &x_mid[k], &um, &(p - &k1 * (0.5 * h)));
        let k3 = rhs(tm, &x_mid[k], &um, &(p - &k2 * (0.5 * h)));
        let k4 = rhs(t0, state.value(k), control.value(k), &(p - &k3 * h));
        let prev = p - (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        check_finite(&prev, k, &grid)?;
        ps[k] = prev;
    }
    Ok(Trajectory { grid, width: problem.state_dim, values: ps })
}

/// `J^τ(u) = ∫ (f + τh(u)) dt + g(x_T)` with the trapezoidal rule on the nodes.
pub fn evaluate_cost(
    problem: &ProblemSpec,
    mirror: &MirrorMap,
    tau: f64,
    control: &Trajectory,
    state: &Trajectory,
) -> Result<f64> {
    check_control(problem, control)?;
    control.check_compatible(state)?;
    check_dim("state width", problem.state_dim, state.width())?;
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::InvalidArgument(format!("tau must be >= 0, got {tau}")));
    }
    let grid = control.grid();
    let running = grid.trapezoid(|k| {
        let (x, u) = (state.value(k), control.value(k));
        let reg = if tau == 0.0 { 0.0 } else { tau * mirror.value(u) };
        (problem.running_cost)(grid.node(k), x, u) + reg
    });
    Ok(running + (problem.terminal_cost)(state.last()))
}

/// True iff every node has Euclidean norm at most `bound`.
pub fn bound_check(traj: &Trajectory, bound: f64) -> Result<bool> {
    if bound.is_nan() || bound <= 0.0 {
        return Err(Error::InvalidArgument(format!("bound must be positive, got {bound}")));
    }
    Ok(traj.sup_norm() <= bound)
}
