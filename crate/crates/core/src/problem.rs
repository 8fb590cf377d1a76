//! Control problem description and the Hamiltonian.
//!
//! A [`ProblemSpec`] bundles the drift `b_t(x, u)`, running cost `f_t(x, u)`,
//! terminal cost `g(x)`, their first derivatives, the control set `U`, the
//! horizon and the initial state. Derivatives are supplied analytically by
//! the caller; [`ProblemSpec::derivative_check`] compares them against
//! central differences.
//!
//! The unregularized Hamiltonian is `H⁰ = p·b − f` and the regularized one
//! subtracts `τ h(u)` for a mirror map `h`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::mirror::MirrorMap;

pub type VectorField = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
pub type TerminalCost = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type TerminalGrad = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type Projection = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Closed convex control set `U ⊂ ℝᵐ`.
#[derive(Clone)]
pub enum ControlSet {
    Unconstrained,
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    /// Arbitrary closed convex set given by its Euclidean projection.
    ConvexOracle(Projection),
}

impl fmt::Debug for ControlSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlSet::Unconstrained => write!(f, "Unconstrained"),
            ControlSet::Box { lower, upper } => f
                .debug_struct("Box")
                .field("lower", &lower.as_slice())
                .field("upper", &upper.as_slice())
                .finish(),
            ControlSet::ConvexOracle(_) => write!(f, "ConvexOracle(..)"),
        }
    }
}

impl ControlSet {
    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
            return Err(Error::InvalidArgument(
                "box lower bound exceeds upper bound".into(),
            ));
        }
        Ok(ControlSet::Box { lower, upper })
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            ControlSet::Unconstrained => v.clone(),
            ControlSet::Box { lower, upper } => {
                DVector::from_iterator(v.len(), (0..v.len()).map(|i| v[i].clamp(lower[i], upper[i])))
            }
            ControlSet::ConvexOracle(proj) => proj(v),
        }
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        (self.project(v) - v).norm() <= tol
    }
}

/// Constants of the standing smoothness assumption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessData {
    /// Global Lipschitz / growth constant `M` of `b`, `f`, `∇ₓb`, `∇ₓf` and `g`.
    pub lipschitz_m: f64,
    /// Bound on `‖∇²ᵤᵤ b‖`.
    pub hess_bound_buu: f64,
    /// Bound on `‖∇²ᵤᵤ f‖`.
    pub hess_bound_fuu: f64,
}

impl SmoothnessData {
    pub fn new(lipschitz_m: f64, hess_bound_buu: f64, hess_bound_fuu: f64) -> Result<Self> {
        if [lipschitz_m, hess_bound_buu, hess_bound_fuu]
            .iter()
            .any(|c| !(c.is_finite() && *c > 0.0))
        {
            return Err(Error::InvalidArgument(
                "smoothness constants must be finite and positive".into(),
            ));
        }
        Ok(Self {
            lipschitz_m,
            hess_bound_buu,
            hess_bound_fuu,
        })
    }
}

/// A finite-horizon deterministic optimal control problem.
///
/// All callbacks must be pure; the same spec may be shared by concurrent
/// solver runs.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub state_dim: usize,
    pub control_dim: usize,
    pub horizon: f64,
    pub initial_state: DVector<f64>,
    pub drift: VectorField,
    pub drift_jac_x: MatrixField,
    pub drift_jac_u: MatrixField,
    pub running_cost: ScalarField,
    pub running_grad_x: VectorField,
    pub running_grad_u: VectorField,
    pub terminal_cost: TerminalCost,
    pub terminal_grad: TerminalGrad,
    pub control_set: ControlSet,
    /// Declares that `g` is convex and `(x, u) ↦ H⁰` is concave.
    pub convex: bool,
    pub smoothness: Option<SmoothnessData>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("horizon", &self.horizon)
            .field("initial_state", &self.initial_state.as_slice())
            .field("control_set", &self.control_set)
            .field("convex", &self.convex)
            .field("smoothness", &self.smoothness)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Checks the structural invariants: positive dimensions and horizon,
    /// matching initial state, well-formed control set.
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.control_dim == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        check_dim("initial state", self.state_dim, self.initial_state.len())?;
        if let ControlSet::Box { lower, upper } = &self.control_set {
            check_dim("box bounds", self.control_dim, lower.len())?;
            check_dim("box bounds", self.control_dim, upper.len())?;
        }
        Ok(())
    }

    fn check_point(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        check_dim("state", self.state_dim, x.len())?;
        check_dim("control", self.control_dim, u.len())
    }

    /// Largest relative discrepancy between each analytic derivative and a
    /// central difference with step `step`, at the point `(t, x, u)`.
    ///
    /// The error of a component is `|analytic − fd| / max(1, |analytic|, |fd|)`.
    pub fn derivative_check(
        &self,
        t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
        step: f64,
    ) -> Result<f64> {
        self.check_point(x, u)?;
        let rel = |a: f64, b: f64| (a - b).abs() / 1f64.max(a.abs()).max(b.abs());
        let mut worst = 0f64;

        let jx = (self.drift_jac_x)(t, x, u);
        let ju = (self.drift_jac_u)(t, x, u);
        let fx = (self.running_grad_x)(t, x, u);
        let fu = (self.running_grad_u)(t, x, u);
        let gx = (self.terminal_grad)(x);

        for j in 0..self.state_dim {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += step;
            xm[j] -= step;
            let db = ((self.drift)(t, &xp, u) - (self.drift)(t, &xm, u)) / (2.0 * step);
            for i in 0..self.state_dim {
                worst = worst.max(rel(jx[(i, j)], db[i]));
            }
            let df = ((self.running_cost)(t, &xp, u) - (self.running_cost)(t, &xm, u)) / (2.0 * step);
            worst = worst.max(rel(fx[j], df));
            let dg = ((self.terminal_cost)(&xp) - (self.terminal_cost)(&xm)) / (2.0 * step);
            worst = worst.max(rel(gx[j], dg));
        }
        for j in 0..self.control_dim {
            let mut up = u.clone();
            let mut um = u.clone();
            up[j] += step;
            um[j] -= step;
            let db = ((self.drift)(t, x, &up) - (self.drift)(t, x, &um)) / (2.0 * step);
            for i in 0..self.state_dim {
                worst = worst.max(rel(ju[(i, j)], db[i]));
            }
            let df = ((self.running_cost)(t, x, &up) - (self.running_cost)(t, x, &um)) / (2.0 * step);
            worst = worst.max(rel(fu[j], df));
        }
        Ok(worst)
    }
}

/// `H⁰_t(x, p, u) = p·b_t(x, u) − f_t(x, u)`.
pub fn hamiltonian0(
    problem: &ProblemSpec,
    t: f64,
    x: &DVector<f64>,
    p: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    problem.check_point(x, u)?;
    check_dim("adjoint", problem.state_dim, p.len())?;
    Ok(p.dot(&(problem.drift)(t, x, u)) - (problem.running_cost)(t, x, u))
}

/// `∇ₓH⁰ = ∇ₓbᵀp − ∇ₓf`.
pub fn grad_x_hamiltonian0(
    problem: &ProblemSpec,
    t: f64,
    x: &DVector<f64>,
    p: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    problem.check_point(x, u)?;
    check_dim("adjoint", problem.state_dim, p.len())?;
    Ok(grad_x_h0_unchecked(problem, t, x, p, u))
}

pub(crate) fn grad_x_h0_unchecked(
    problem: &ProblemSpec,
    t: f64,
    x: &DVector<f64>,
    p: &DVector<f64>,
    u: &DVector<f64>,
) -> DVector<f64> {
    (problem.drift_jac_x)(t, x, u).tr_mul(p) - (problem.running_grad_x)(t, x, u)
}

/// `∇ᵤH⁰ = ∇ᵤbᵀp − ∇ᵤf`.
pub fn grad_u_hamiltonian0(
    problem: &ProblemSpec,
    t: f64,
    x: &DVector<f64>,
    p: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    problem.check_point(x, u)?;
    check_dim("adjoint", problem.state_dim, p.len())?;
    Ok(grad_u_h0_unchecked(problem, t, x, p, u))
}

pub(crate) fn grad_u_h0_unchecked(
    problem: &ProblemSpec,
    t: f64,
    x: &DVector<f64>,
    p: &DVector<f64>,
    u: &DVector<f64>,
) -> DVector<f64> {
    (problem.drift_jac_u)(t, x, u).tr_mul(p) - (problem.running_grad_u)(t, x, u)
}

/// `∇ᵤH^τ = ∇ᵤH⁰ − τ∇h(u)`.
pub fn grad_u_hamiltonian_tau(
    problem: &ProblemSpec,
    mirror: &MirrorMap,
    tau: f64,
    t: f64,
    x: &DVector<f64>,
    p: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::InvalidArgument(format!("tau must be >= 0, got {tau}")));
    }
    let g0 = grad_u_hamiltonian0(problem, t, x, p, u)?;
    Ok(g0 - mirror.grad(u) * tau)
}
