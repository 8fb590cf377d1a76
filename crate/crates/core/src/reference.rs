//! Independent oracles: the scalar LQ Riccati solution, the quartic scalar
//! recursion, three gradient representations and the closed-form constants
//! of the convergence analysis.
//!
//! Directional derivatives split into explicit terms `(∇ᵤf + τ∇h)·δ`, which
//! use the trapezoidal rule of the cost itself, and the terms carried by the
//! adjoint or the linearized state. The latter use Simpson's rule per
//! interval with cubic Hermite midpoints for the state, adjoint and
//! linearized state, and linear midpoints for the control and direction.
//! With this pairing the adjoint and sensitivity representations agree to
//! round-off, and both approximate the derivative of the discrete cost to
//! second order.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::mirror::{bregman_integrated, MirrorMap};
use crate::problem::{grad_x_h0_unchecked, ProblemSpec};
use crate::problems::make_lq;
use crate::solver::hamiltonian_gradient;
use crate::trajectory::{
    drift_at_nodes, evaluate_cost, hermite_midpoint, integrate_adjoint, integrate_state, TimeGrid, Trajectory,
};

/// Refinement factor of the LQ reference quadrature.
pub const REFERENCE_REFINEMENT: usize = 10;
/// Default central-difference step.
pub const DEFAULT_FD_EPS: f64 = 1e-4;
/// Steps tried by [`fd_sweep`].
pub const FD_SWEEP_EPS: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];

/// `|a − b| / max(1, |a|, |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Closed-form solution of the scalar Riccati equation
/// `P' = P²/τ − 2aP − q`, `P(T) = s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiSolution {
    pub a: f64,
    pub q: f64,
    pub s: f64,
    pub tau: f64,
    pub horizon: f64,
    pub gamma: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    /// `(s − P₊)/(s − P₋)`; infinite when `s = P₋`.
    pub kappa: f64,
}

impl RiccatiSolution {
    pub fn new(a: f64, q: f64, s: f64, tau: f64, horizon: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidArgument(format!("Riccati solution needs tau > 0, got {tau}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if ![a, q, s].iter().all(|v| v.is_finite()) || q < 0.0 || s < 0.0 {
            return Err(Error::InvalidArgument("need finite a and q, s >= 0".into()));
        }
        let gamma = (a * a + q / tau).sqrt();
        if gamma <= 0.0 {
            return Err(Error::InvalidArgument("degenerate Riccati data: a = q = 0".into()));
        }
        let p_plus = tau * (a + gamma);
        let p_minus = tau * (a - gamma);
        Ok(Self {
            a,
            q,
            s,
            tau,
            horizon,
            gamma,
            p_plus,
            p_minus,
            kappa: (s - p_plus) / (s - p_minus),
        })
    }

    /// `P(t) = (P₊ − κe^{−2γ(T−t)}P₋)/(1 − κe^{−2γ(T−t)})`, evaluated with
    /// numerator and denominator scaled by `s − P₋` so that `s = P₋` is exact.
    pub fn p(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfRange { t, horizon: self.horizon });
        }
        let e = (-2.0 * self.gamma * (self.horizon - t)).exp();
        let (sp, sm) = (self.s - self.p_plus, self.s - self.p_minus);
        Ok((self.p_plus * sm - sp * e * self.p_minus) / (sm - sp * e))
    }
}

pub fn riccati_p(sol: &RiccatiSolution, t: f64) -> Result<f64> {
    sol.p(t)
}

/// Optimal LQ control and state sampled on the caller's grid, and the optimal cost.
#[derive(Debug, Clone, PartialEq)]
pub struct LqReference {
    pub control: Trajectory,
    pub state: Trajectory,
    pub cost: f64,
}

/// `x*_t = x₀ exp ∫₀ᵗ (a − P/τ)`, `u*_t = −P(t)x*_t/τ`. The exponent is
/// integrated by the trapezoidal rule on a grid refined
/// [`REFERENCE_REFINEMENT`] times, and `J*` is the trapezoidal cost of the
/// refined samples.
pub fn lq_reference(sol: &RiccatiSolution, x0: f64, grid: &TimeGrid) -> Result<LqReference> {
    if (grid.horizon() - sol.horizon).abs() > 1e-12 * sol.horizon {
        return Err(Error::InvalidArgument("grid and Riccati horizons differ".into()));
    }
    let fine = grid.refine(REFERENCE_REFINEMENT)?;
    let ps: Vec<f64> = fine.nodes().map(|t| sol.p(t)).collect::<Result<_>>()?;
    let rate: Vec<f64> = ps.iter().map(|p| sol.a - p / sol.tau).collect();
    let h = fine.step();
    let mut xs = Vec::with_capacity(fine.node_count());
    let mut exponent = 0.0;
    xs.push(x0);
    for k in 0..fine.steps() {
        exponent += 0.5 * h * (rate[k] + rate[k + 1]);
        xs.push(x0 * exponent.exp());
    }
    let us: Vec<f64> = xs.iter().zip(&ps).map(|(x, p)| -p * x / sol.tau).collect();

    let as_traj = |g: TimeGrid, vals: &[f64], stride: usize| {
        Trajectory::new(g, (0..g.node_count()).map(|k| DVector::from_element(1, vals[k * stride])).collect())
    };
    let fine_u = as_traj(fine, &us, 1)?;
    let fine_x = as_traj(fine, &xs, 1)?;
    let problem = make_lq(sol.a, sol.q, sol.s, x0, sol.horizon)?;
    let cost = evaluate_cost(&problem, &MirrorMap::Quadratic, sol.tau, &fine_u, &fine_x)?;
    Ok(LqReference {
        control: as_traj(*grid, &us, REFERENCE_REFINEMENT)?,
        state: as_traj(*grid, &xs, REFERENCE_REFINEMENT)?,
        cost,
    })
}

/// `α_{n+1} = α_n − (T³α_n³ + τα_n)/λ`, returning `α_0..=α_{n_iters}`.
pub fn quartic_recursion(alpha0: f64, horizon: f64, lambda: f64, tau: f64, n_iters: usize) -> Result<Vec<f64>> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let t3 = horizon.powi(3);
    let mut alphas = Vec::with_capacity(n_iters + 1);
    alphas.push(alpha0);
    for n in 0..n_iters {
        let a = alphas[n];
        alphas.push(a - (t3 * a * a * a + tau * a) / lambda);
    }
    Ok(alphas)
}

/// The integrand `t ↦ −∇ᵤH^τ(x_t, p_t, u_t)` of the first variation at the nodes.
pub fn adjoint_gradient(problem: &ProblemSpec, mirror: &MirrorMap, tau: f64, u: &Trajectory) -> Result<Trajectory> {
    let x = integrate_state(problem, u)?;
    let p = integrate_adjoint(problem, u, &x)?;
    Ok(hamiltonian_gradient(problem, mirror, tau, u, &x, &p)?.map(|g| -g))
}

fn check_direction(problem: &ProblemSpec, u: &Trajectory, direction: &Trajectory) -> Result<()> {
    u.check_compatible(direction)?;
    check_dim("control width", problem.control_dim, u.width())?;
    check_dim("direction width", problem.control_dim, direction.width())
}

fn simpson(h: f64, left: f64, mid: f64, right: f64) -> f64 {
    h / 6.0 * (left + 4.0 * mid + right)
}

/// `dJ^τ(u)(δ) = −∫∇ᵤH^τ·δ dt` from the adjoint.
pub fn adjoint_pairing(
    problem: &ProblemSpec,
    mirror: &MirrorMap,
    tau: f64,
    u: &Trajectory,
    direction: &Trajectory,
) -> Result<f64> {
    check_direction(problem, u, direction)?;
    let grid = *u.grid();
    let h = grid.step();
    let x = integrate_state(problem, u)?;
    let p = integrate_adjoint(problem, u, &x)?;
    let xdot = drift_at_nodes(problem, u, &x);
    let pdot: Vec<DVector<f64>> = (0..grid.node_count())
        .map(|k| -grad_x_h0_unchecked(problem, grid.node(k), x.value(k), p.value(k), u.value(k)))
        .collect();
    let carried = |t: f64, xs: &DVector<f64>, ps: &DVector<f64>, us: &DVector<f64>, ds: &DVector<f64>| {
        -(problem.drift_jac_u)(t, xs, us).tr_mul(ps).dot(ds)
    };
    let nodal: Vec<f64> = (0..grid.node_count())
        .map(|k| carried(grid.node(k), x.value(k), p.value(k), u.value(k), direction.value(k)))
        .collect();
    let mut total = 0.0;
    for k in 0..grid.steps() {
        let xm = hermite_midpoint(x.value(k), x.value(k + 1), &xdot[k], &xdot[k + 1], h);
        let pm = hermite_midpoint(p.value(k), p.value(k + 1), &pdot[k], &pdot[k + 1], h);
        let mid = carried(grid.node(k) + 0.5 * h, &xm, &pm, &u.midpoint(k), &direction.midpoint(k));
        total += simpson(h, nodal[k], mid, nodal[k + 1]);
    }
    Ok(total + explicit_term(problem, mirror, tau, u, &x, direction))
}

/// `∫(∇ᵤf + τ∇h(u))·δ dt` by the trapezoidal rule.
fn explicit_term(
    problem: &ProblemSpec,
    mirror: &MirrorMap,
    tau: f64,
    u: &Trajectory,
    x: &Trajectory,
    direction: &Trajectory,
) -> f64 {
    let grid = u.grid();
    grid.trapezoid(|k| {
        let (t, xk, uk, dk) = (grid.node(k), x.value(k), u.value(k), direction.value(k));
        let mut g = (problem.running_grad_u)(t, xk, uk);
        if tau != 0.0 {
            g += mirror.grad(uk) * tau;
        }
        g.dot(dk)
    })
}

/// Directional derivative from the linearized state
/// `ẏ = ∇ₓb·y + ∇ᵤb·δ`, `y₀ = 0`:
/// `∫(∇ₓf·y + ∇ᵤf·δ + τ∇h(u)·δ) dt + ∇g(x_T)·y_T`.
pub fn sensitivity_gradient(
    problem: &ProblemSpec,
    mirror: &MirrorMap,
    tau: f64,
    u: &Trajectory,
    direction: &Trajectory,
) -> Result<f64> {
    check_direction(problem, u, direction)?;
    let grid = *u.grid();
    let (n, h) = (grid.steps(), grid.step());
    let x = integrate_state(problem, u)?;
    let xdot = drift_at_nodes(problem, u, &x);
    let x_mid: Vec<DVector<f64>> = (0..n)
        .map(|k| hermite_midpoint(x.value(k), x.value(k + 1), &xdot[k], &xdot[k + 1], h))
        .collect();
    let jac = |t: f64, xs: &DVector<f64>, us: &DVector<f64>| ((problem.drift_jac_x)(t, xs, us), (problem.drift_jac_u)(t, xs, us));
    let node_jac: Vec<_> = (0..=n).map(|k| jac(grid.node(k), x.value(k), u.value(k))).collect();

    let mut ys = vec![DVector::zeros(problem.state_dim); n + 1];
    for k in 0..n {
        let tm = grid.node(k) + 0.5 * h;
        let dm = direction.midpoint(k);
        let (a0, b0) = &node_jac[k];
        let (am, bm) = jac(tm, &x_mid[k], &u.midpoint(k));
        let (a1, b1) = &node_jac[k + 1];
        let y = &ys[k];
        let k1 = a0 * y + b0 * direction.value(k);
        let k2 = &am * (y + &k1 * (0.5 * h)) + &bm * &dm;
        let k3 = &am * (y + &k2 * (0.5 * h)) + &bm * &dm;
        let k4 = a1 * (y + &k3 * h) + b1 * direction.value(k + 1);
        let next = y + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup { node: k + 1, t: grid.node(k + 1) });
        }
        ys[k + 1] = next;
    }
    let ydot: Vec<DVector<f64>> = (0..=n)
        .map(|k| &node_jac[k].0 * &ys[k] + &node_jac[k].1 * direction.value(k))
        .collect();

    let carried = |t: f64, xs: &DVector<f64>, us: &DVector<f64>, ys: &DVector<f64>| {
        (problem.running_grad_x)(t, xs, us).dot(ys)
    };
    let nodal: Vec<f64> = (0..=n).map(|k| carried(grid.node(k), x.value(k), u.value(k), &ys[k])).collect();
    let mut total = 0.0;
    for k in 0..n {
        let ym = hermite_midpoint(&ys[k], &ys[k + 1], &ydot[k], &ydot[k + 1], h);
        let mid = carried(grid.node(k) + 0.5 * h, &x_mid[k], &u.midpoint(k), &ym);
        total += simpson(h, nodal[k], mid, nodal[k + 1]);
    }
    let terminal = (problem.terminal_grad)(x.last()).dot(&ys[n]);
    Ok(total + terminal + explicit_term(problem, mirror, tau, u, &x, direction))
}

/// `J^τ(u)` on the control's grid.
pub fn cost_of(problem: &ProblemSpec, mirror: &MirrorMap, tau: f64, u: &Trajectory) -> Result<f64> {
    let x = integrate_state(problem, u)?;
    evaluate_cost(problem, mirror, tau, u, &x)
}

/// Central difference `[J^τ(u + εδ) − J^τ(u − εδ)]/(2ε)`.
pub fn fd_gradient(
    problem: &ProblemSpec,
    mirror: &MirrorMap,
    tau: f64,
    u: &Trajectory,
    direction: &Trajectory,
    eps: f64,
) -> Result<f64> {
    check_direction(problem, u, direction)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let plus = u.axpy(eps, direction)?;
    let minus = u.axpy(-eps, direction)?;
    for (label, traj) in [("u + eps*d", &plus), ("u - eps*d", &minus)] {
        if let Some(k) = traj.values().iter().position(|v| !problem.control_set.contains(v, 0.0)) {
            return Err(Error::InvalidArgument(format!("{label} leaves U at node {k}")));
        }
    }
    Ok((cost_of(problem, mirror, tau, &plus)? - cost_of(problem, mirror, tau, &minus)?) / (2.0 * eps))
}

/// Central differences over [`FD_SWEEP_EPS`].
#[derive(Debug, Clone, PartialEq)]
pub struct FdSweep {
    pub values: Vec<(f64, f64)>,
    /// Value at the step whose estimate moves least when the step shrinks.
    pub plateau: f64,
    pub plateau_eps: f64,
}

pub fn fd_sweep(
    problem: &ProblemSpec,
    mirror: &MirrorMap,
    tau: f64,
    u: &Trajectory,
    direction: &Trajectory,
) -> Result<FdSweep> {
    let values = FD_SWEEP_EPS
        .iter()
        .map(|&e| Ok((e, fd_gradient(problem, mirror, tau, u, direction, e)?)))
        .collect::<Result<Vec<_>>>()?;
    let best = values
        .windows(2)
        .min_by(|a, b| (a[0].1 - a[1].1).abs().total_cmp(&(b[0].1 - b[1].1).abs()))
        .map(|w| w[1])
        .expect("sweep has several steps");
    Ok(FdSweep { values, plateau: best.1, plateau_eps: best.0 })
}

/// The three directional-derivative estimates and their disagreements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientTriangle {
    pub adjoint: f64,
    pub finite_difference: f64,
    pub sensitivity: f64,
    pub fd_error: f64,
    pub sensitivity_error: f64,
}

impl GradientTriangle {
    pub fn from_values(adjoint: f64, finite_difference: f64, sensitivity: f64) -> Self {
        Self {
            adjoint,
            finite_difference,
            sensitivity,
            fd_error: relative_error(adjoint, finite_difference),
            sensitivity_error: relative_error(adjoint, sensitivity),
        }
    }
}

pub fn gradient_triangle(
    problem: &ProblemSpec,
    mirror: &MirrorMap,
    tau: f64,
    u: &Trajectory,
    direction: &Trajectory,
    eps: f64,
) -> Result<GradientTriangle> {
    Ok(GradientTriangle::from_values(
        adjoint_pairing(problem, mirror, tau, u, direction)?,
        fd_gradient(problem, mirror, tau, u, direction, eps)?,
        sensitivity_gradient(problem, mirror, tau, u, direction)?,
    ))
}

/// `J(v) − J(u) − dJ(u)(v − u)` with the adjoint pairing as `dJ`.
pub fn linearization_gap(problem: &ProblemSpec, mirror: &MirrorMap, tau: f64, u: &Trajectory, v: &Trajectory) -> Result<f64> {
    let delta = v.sub(u)?;
    let dj = adjoint_pairing(problem, mirror, tau, u, &delta)?;
    Ok(cost_of(problem, mirror, tau, v)? - cost_of(problem, mirror, tau, u)? - dj)
}

/// `L𝒟_h(v|u) − [J(v) − J(u) − dJ(u)(v − u)]`; nonnegative under relative smoothness.
pub fn relative_smoothness_slack(
    problem: &ProblemSpec,
    mirror: &MirrorMap,
    tau: f64,
    smoothness_l: f64,
    u: &Trajectory,
    v: &Trajectory,
) -> Result<f64> {
    Ok(smoothness_l * bregman_integrated(mirror, v, u)? - linearization_gap(problem, mirror, tau, u, v)?)
}

/// `[J(v) − J(u) − dJ(u)(v − u)] − τ𝒟_h(v|u)`; nonnegative under relative convexity.
pub fn relative_convexity_slack(
    problem: &ProblemSpec,
    mirror: &MirrorMap,
    tau: f64,
    u: &Trajectory,
    v: &Trajectory,
) -> Result<f64> {
    if !problem.convex {
        return Err(Error::InvalidArgument(format!("problem {} is not flagged convex", problem.name)));
    }
    Ok(linearization_gap(problem, mirror, tau, u, v)? - tau * bregman_integrated(mirror, v, u)?)
}

/// Inputs of the closed-form constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerInputs {
    pub m: f64,
    pub m_buu: f64,
    pub m_fuu: f64,
    pub sigma_h: f64,
    pub tau: f64,
    pub horizon: f64,
    pub x0_norm: f64,
}

/// State/adjoint bounds, stability constants and the relative-smoothness
/// modulus `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantsLedger {
    pub inputs: LedgerInputs,
    pub m_x: f64,
    pub m_p: f64,
    pub c_x: f64,
    pub c_p: f64,
    pub c_h: f64,
    pub l: f64,
}

pub fn constants_ledger(inputs: LedgerInputs) -> Result<ConstantsLedger> {
    let LedgerInputs { m, m_buu, m_fuu, sigma_h, tau, horizon, x0_norm } = inputs;
    let positive = [("M", m), ("M_buu", m_buu), ("M_fuu", m_fuu), ("sigma_h", sigma_h), ("T", horizon)];
    for (name, value) in positive {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {value}")));
        }
    }
    for (name, value) in [("tau", tau), ("|x0|", x0_norm)] {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {value}")));
        }
    }
    let growth = (m * horizon).exp();
    let m_x = (x0_norm + m * horizon) * growth;
    let m_p = m * (1.0 + horizon) * growth;
    let c_x = m * horizon * growth;
    let c_p = growth * m * (c_x + (m_p + 1.0) * (c_x + 1.0) * horizon);
    let c_h = (m * (m_p + 1.0)).max(m_p * m_buu + m_fuu);
    let l = tau + c_h * (c_x + c_p + 1.0) / sigma_h;
    Ok(ConstantsLedger { inputs, m_x, m_p, c_x, c_p, c_h, l })
}

impl ConstantsLedger {
    /// Ledger from the problem's smoothness data and the map's `σ_h`.
    pub fn for_problem(problem: &ProblemSpec, mirror: &MirrorMap, tau: f64) -> Result<Self> {
        let sm = problem.smoothness.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("problem {} carries no smoothness data", problem.name))
        })?;
        constants_ledger(LedgerInputs {
            m: sm.lipschitz_m,
            m_buu: sm.hess_bound_buu,
            m_fuu: sm.hess_bound_fuu,
            sigma_h: mirror.strong_convexity(),
            tau,
            horizon: problem.horizon,
            x0_norm: problem.initial_state.norm(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_quartic;
    use crate::sampling::{smooth_random_control, NormalSampler};
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    /// Backward RK4 on the Riccati ODE, independent of the closed form.
    fn riccati_rk4(a: f64, q: f64, s: f64, tau: f64, horizon: f64, steps: usize) -> f64 {
        let f = |p: f64| p * p / tau - 2.0 * a * p - q;
        let h = -horizon / steps as f64;
        let mut p = s;
        for _ in 0..steps {
            let k1 = f(p);
            let k2 = f(p + 0.5 * h * k1);
            let k3 = f(p + 0.5 * h * k2);
            let k4 = f(p + h * k3);
            p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        p
    }

    #[test]
    fn riccati_examples() {
        let sol = RiccatiSolution::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((sol.gamma - 2f64.sqrt()).abs() < 1e-15);
        assert!((sol.kappa + 1.0).abs() < 1e-14);
        assert!((sol.p(1.0).unwrap() - 1.0).abs() < 1e-12);
        let p0 = sol.p(0.0).unwrap();
        assert!((p0 - 2.2564).abs() < 5e-5, "P(0) = {p0}");
        assert!((p0 - riccati_rk4(1.0, 1.0, 1.0, 1.0, 1.0, 10_000)).abs() < 1e-12);

        let zero = RiccatiSolution::new(1.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(zero.p(t).unwrap(), 0.0);
        }
        assert!(RiccatiSolution::new(1.0, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(sol.p(1.5).is_err());
    }

    #[test]
    fn riccati_ode_residual() {
        for &(a, q, s, tau) in &[(1.0, 1.0, 1.0, 1.0), (-0.5, 2.0, 0.0, 0.5), (2.0, 0.3, 4.0, 3.0)] {
            let sol = RiccatiSolution::new(a, q, s, tau, 1.0).unwrap();
            assert!((sol.p(1.0).unwrap() - s).abs() < 1e-12);
            for i in 1..=100 {
                let t = i as f64 / 101.0;
                let d = 1e-6;
                let dp = (sol.p(t + d).unwrap() - sol.p(t - d).unwrap()) / (2.0 * d);
                let p = sol.p(t).unwrap();
                let residual = dp - (p * p / tau - 2.0 * a * p - q);
                assert!(residual.abs() <= 1e-8, "residual {residual} at t={t}");
            }
        }
    }

    #[test]
    fn lq_reference_examples() {
        let sol = RiccatiSolution::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let zero = lq_reference(&sol, 0.0, &grid).unwrap();
        assert_eq!(zero.cost, 0.0);
        assert_eq!(zero.control.sup_norm(), 0.0);
        assert_eq!(zero.state.sup_norm(), 0.0);

        // J* = ½P(0)x₀² is the value function at the initial time.
        let r = lq_reference(&sol, 0.5, &grid).unwrap();
        let value = 0.5 * sol.p(0.0).unwrap() * 0.25;
        assert!((r.cost - value).abs() < 1e-7, "{} vs {value}", r.cost);
        assert_eq!(r.state.value(0)[0], 0.5);
        assert!((r.control.value(0)[0] + sol.p(0.0).unwrap() * 0.5).abs() < 1e-15);
    }

    #[test]
    fn reference_optimum_is_stationary() {
        let sol = RiccatiSolution::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 2000).unwrap();
        let r = lq_reference(&sol, 0.5, &grid).unwrap();
        let lq = make_lq(1.0, 1.0, 1.0, 0.5, 1.0).unwrap();
        let g = adjoint_gradient(&lq, &MirrorMap::Quadratic, 1.0, &r.control).unwrap();
        assert!(g.sup_norm() <= 1e-6, "gradient sup-norm {}", g.sup_norm());
    }

    #[test]
    fn quartic_recursion_examples() {
        let a = quartic_recursion(2.0, 1.0, 10.0, 0.0, 2).unwrap();
        assert!((a[1] - 1.2).abs() < 1e-15);
        assert!((a[2] - 1.0272).abs() < 1e-15);
        let a = quartic_recursion(2.0, 1.0, 10.0, 0.5, 1).unwrap();
        assert!((a[1] - 1.1).abs() < 1e-15);
        assert!(quartic_recursion(0.0, 1.0, 10.0, 0.5, 50).unwrap().iter().all(|&x| x == 0.0));
        assert!(quartic_recursion(1.0, 1.0, 0.0, 0.5, 5).is_err());
    }

    #[test]
    fn quartic_gradient_examples() {
        let quartic = make_quartic(1.0).unwrap();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let u = Trajectory::constant(grid, v1(2.0));
        let ones = Trajectory::constant(grid, v1(1.0));
        let q = MirrorMap::Quadratic;
        assert!((adjoint_pairing(&quartic, &q, 0.0, &u, &ones).unwrap() - 8.0).abs() < 1e-12);
        assert!((sensitivity_gradient(&quartic, &q, 0.0, &u, &ones).unwrap() - 8.0).abs() < 1e-12);
        assert!((fd_gradient(&quartic, &q, 0.0, &u, &ones, 1e-4).unwrap() - 8.0).abs() < 1e-6);
        let g = adjoint_gradient(&quartic, &q, 0.0, &u).unwrap();
        assert!(g.values().iter().all(|v| (v[0] - 8.0).abs() < 1e-12));
        assert_eq!(adjoint_gradient(&quartic, &q, 0.0, &Trajectory::zeros(grid, 1)).unwrap().sup_norm(), 0.0);

        let zero = Trajectory::zeros(grid, 1);
        assert_eq!(fd_gradient(&quartic, &q, 0.0, &u, &zero, 1e-4).unwrap(), 0.0);
        assert_eq!(sensitivity_gradient(&quartic, &q, 0.0, &u, &zero).unwrap(), 0.0);
        assert!(fd_gradient(&quartic, &q, 0.0, &u, &ones, 0.0).is_err());
    }

    #[test]
    fn infeasible_perturbation_rejected() {
        let mut quartic = make_quartic(1.0).unwrap();
        quartic.control_set = crate::problem::ControlSet::boxed(v1(-1.0), v1(1.0)).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let u = Trajectory::constant(grid, v1(1.0));
        let ones = Trajectory::constant(grid, v1(1.0));
        assert!(matches!(
            fd_gradient(&quartic, &MirrorMap::Quadratic, 0.0, &u, &ones, 1e-4),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn fd_sweep_plateau() {
        let quartic = make_quartic(1.0).unwrap();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let u = Trajectory::constant(grid, v1(2.0));
        let ones = Trajectory::constant(grid, v1(1.0));
        let sweep = fd_sweep(&quartic, &MirrorMap::Quadratic, 0.0, &u, &ones).unwrap();
        assert_eq!(sweep.values.len(), FD_SWEEP_EPS.len());
        assert!((sweep.plateau - 8.0).abs() < 1e-6);
    }

    #[test]
    fn ledger_examples() {
        let inputs = LedgerInputs { m: 1.0, m_buu: 1.0, m_fuu: 1.0, sigma_h: 1.0, tau: 0.0, horizon: 1.0, x0_norm: 0.0 };
        let l = constants_ledger(inputs).unwrap();
        assert!((l.m_x - E).abs() < 1e-15);
        assert!((l.m_p - 2.0 * E).abs() < 1e-14);
        assert!((l.c_x - E).abs() < 1e-15);
        assert!((l.c_p - 72.44).abs() < 1e-2, "C_p = {}", l.c_p);
        // Independent evaluation: C_p = e(e + (2e + 1)(e + 1)), C_H = 2e + 1.
        let c_p = E * (E + (2.0 * E + 1.0) * (E + 1.0));
        assert!((l.c_p - c_p).abs() < 1e-12);
        assert!((l.l - (2.0 * E + 1.0) * (E + c_p + 1.0)).abs() < 1e-10);
        assert!(l.l >= inputs.tau);

        assert!(constants_ledger(LedgerInputs { m: 0.0, ..inputs }).is_err());
        assert!(constants_ledger(LedgerInputs { tau: -1.0, ..inputs }).is_err());
        let benchmark = constants_ledger(LedgerInputs { tau: 1.0, x0_norm: 0.5, ..inputs }).unwrap();
        assert!(benchmark.l > 30.0);
    }

    #[test]
    fn ledger_for_problem() {
        let lq = make_lq(1.0, 1.0, 1.0, 0.5, 1.0).unwrap();
        let l = ConstantsLedger::for_problem(&lq, &MirrorMap::Quadratic, 1.0).unwrap();
        assert_eq!(l.inputs.x0_norm, 0.5);
        assert!(ConstantsLedger::for_problem(&make_quartic(1.0).unwrap(), &MirrorMap::Quadratic, 0.0).is_err());
    }

    #[test]
    fn gradient_triangle_small_grid() {
        let lq = make_lq(1.0, 1.0, 1.0, 0.5, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 400).unwrap();
        let mut sampler = NormalSampler::new(3);
        for _ in 0..5 {
            let u = smooth_random_control(&grid, 1, 1.0, &mut sampler);
            let d = smooth_random_control(&grid, 1, 1.0, &mut sampler);
            let tri = gradient_triangle(&lq, &MirrorMap::Quadratic, 1.0, &u, &d, DEFAULT_FD_EPS).unwrap();
            assert!(tri.sensitivity_error <= 1e-10, "{tri:?}");
            assert!(tri.fd_error <= 1e-4, "{tri:?}");
        }
    }

    #[test]
    fn relative_inequalities_small_grid() {
        let lq = make_lq(1.0, 1.0, 1.0, 0.5, 1.0).unwrap();
        let q = MirrorMap::Quadratic;
        let ledger = ConstantsLedger::for_problem(&lq, &q, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let mut sampler = NormalSampler::new(5);
        for _ in 0..10 {
            let u = smooth_random_control(&grid, 1, 1.0, &mut sampler);
            let v = smooth_random_control(&grid, 1, 1.0, &mut sampler);
            assert!(relative_smoothness_slack(&lq, &q, 1.0, ledger.l, &u, &v).unwrap() >= -1e-8);
            assert!(relative_convexity_slack(&lq, &q, 1.0, &u, &v).unwrap() >= -1e-8);
        }
        let hd = crate::problems::make_highdim(3, 1, Default::default()).unwrap();
        let u = Trajectory::zeros(TimeGrid::new(1.0, 10).unwrap(), 3);
        assert!(relative_convexity_slack(&hd, &q, 0.5, &u, &u).is_err());
    }

    #[test]
    fn relative_error_definition() {
        assert_eq!(relative_error(1e-3, 2e-3), 1e-3);
        assert_eq!(relative_error(100.0, 101.0), 1.0 / 101.0);
    }

    proptest! {
        #[test]
        fn ledger_monotone(m in 0.1f64..3.0, t in 0.1f64..3.0, x0 in 0.0f64..3.0, dm in 0.0f64..1.0, dt in 0.0f64..1.0, dx in 0.0f64..1.0) {
            let base = LedgerInputs { m, m_buu: 1.0, m_fuu: 1.0, sigma_h: 1.0, tau: 0.5, horizon: t, x0_norm: x0 };
            let bigger = LedgerInputs { m: m + dm, horizon: t + dt, x0_norm: x0 + dx, ..base };
            let (a, b) = (constants_ledger(base).unwrap(), constants_ledger(bigger).unwrap());
            for (lo, hi) in [(a.m_x, b.m_x), (a.m_p, b.m_p), (a.c_x, b.c_x), (a.c_p, b.c_p), (a.c_h, b.c_h), (a.l, b.l)] {
                prop_assert!(hi >= lo * (1.0 - 1e-14));
            }
            prop_assert!(a.l >= a.inputs.tau);
        }

        #[test]
        fn quartic_recursion_contracts(alpha in -3.0f64..3.0, tau in 0.0f64..1.0) {
            // λ = 10 ≥ T³α² + τ on this range, so |α| never grows.
            let seq = quartic_recursion(alpha, 1.0, 10.0, tau, 50).unwrap();
            prop_assert!(seq.windows(2).all(|w| w[1].abs() <= w[0].abs()));
        }
    }
}
