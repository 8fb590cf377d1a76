//! Mirror maps, Bregman divergences and the pointwise mirror update.
//!
//! The update at a node maximizes `ξ·(v − u) − λ D_h(v|u)` over `v ∈ U`.
//! Dropping constants, this is the minimization of
//! `ψ(v) = h(v) − (η/λ)·v` with `η = ξ + λ∇h(u)`. For the quadratic map
//! the minimizer is the projection `Π_U(u + ξ/λ)`; other maps are handled
//! by a projected Newton iteration on `ψ`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::problem::ControlSet;
use crate::trajectory::Trajectory;

/// Accepted variational-inequality residual of a prox solution.
pub const PROX_TOLERANCE: f64 = 1e-10;
/// Newton iteration cap for non-quadratic maps.
pub const PROX_MAX_ITERS: usize = 100;

pub type MirrorValue = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type MirrorGradient = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MirrorHessian = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A user-supplied strongly convex mirror map.
///
/// The Hessian drives the Newton prox and must be positive definite.
#[derive(Clone)]
pub struct CustomMirror {
    pub name: String,
    pub value: MirrorValue,
    pub grad: MirrorGradient,
    pub hessian: MirrorHessian,
    pub strong_convexity: f64,
}

#[derive(Clone)]
pub enum MirrorMap {
    /// `h(u) = ½|u|²`.
    Quadratic,
    /// `h(u) = ½|u|² + (ε/4)|u|⁴`.
    QuarticAugmented { eps: f64 },
    Custom(CustomMirror),
}

impl fmt::Debug for MirrorMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MirrorMap::Quadratic => write!(f, "Quadratic"),
            MirrorMap::QuarticAugmented { eps } => write!(f, "QuarticAugmented {{ eps: {eps} }}"),
            MirrorMap::Custom(c) => write!(f, "Custom({:?}, sigma = {})", c.name, c.strong_convexity),
        }
    }
}

impl MirrorMap {
    pub fn quartic(eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::InvalidArgument(format!("quartic eps must be >= 0, got {eps}")));
        }
        Ok(MirrorMap::QuarticAugmented { eps })
    }

    pub fn custom(custom: CustomMirror) -> Result<Self> {
        if !(custom.strong_convexity.is_finite() && custom.strong_convexity > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "strong convexity must be positive, got {}",
                custom.strong_convexity
            )));
        }
        Ok(MirrorMap::Custom(custom))
    }

    pub fn name(&self) -> &str {
        match self {
            MirrorMap::Quadratic => "quadratic",
            MirrorMap::QuarticAugmented { .. } => "quartic",
            MirrorMap::Custom(c) => &c.name,
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, MirrorMap::Quadratic)
    }

    pub fn value(&self, u: &DVector<f64>) -> f64 {
        match self {
            MirrorMap::Quadratic => 0.5 * u.norm_squared(),
            MirrorMap::QuarticAugmented { eps } => {
                let r2 = u.norm_squared();
                0.5 * r2 + 0.25 * eps * r2 * r2
            }
            MirrorMap::Custom(c) => (c.value)(u),
        }
    }

    pub fn grad(&self, u: &DVector<f64>) -> DVector<f64> {
        match self {
            MirrorMap::Quadratic => u.clone(),
            MirrorMap::QuarticAugmented { eps } => u * (1.0 + eps * u.norm_squared()),
            MirrorMap::Custom(c) => (c.grad)(u),
        }
    }

    pub fn hessian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let m = u.len();
        match self {
            MirrorMap::Quadratic => DMatrix::identity(m, m),
            MirrorMap::QuarticAugmented { eps } => {
                DMatrix::identity(m, m) * (1.0 + eps * u.norm_squared()) + u * u.transpose() * (2.0 * eps)
            }
            MirrorMap::Custom(c) => (c.hessian)(u),
        }
    }

    /// Modulus `σ_h` with `D_h(v|u) ≥ (σ_h/2)|v − u|²`.
    pub fn strong_convexity(&self) -> f64 {
        match self {
            MirrorMap::Quadratic | MirrorMap::QuarticAugmented { .. } => 1.0,
            MirrorMap::Custom(c) => c.strong_convexity,
        }
    }
}

/// `D_h(v|u) = h(v) − h(u) − ∇h(u)·(v − u)`, clamped at zero against round-off.
pub fn bregman_pointwise(map: &MirrorMap, v: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let d = match map {
        MirrorMap::Quadratic => 0.5 * (v - u).norm_squared(),
        _ => map.value(v) - map.value(u) - map.grad(u).dot(&(v - u)),
    };
    d.max(0.0)
}

/// Trapezoidal quadrature of `D_h(v_t|u_t)` over the nodes.
pub fn bregman_integrated(map: &MirrorMap, v: &Trajectory, u: &Trajectory) -> Result<f64> {
    v.check_compatible(u)?;
    check_dim("control width", v.width(), u.width())?;
    Ok(v.grid().trapezoid(|k| bregman_pointwise(map, v.value(k), u.value(k))))
}

fn check_step_args(u: &DVector<f64>, xi: &DVector<f64>, lambda: f64) -> Result<()> {
    check_dim("mirror step gradient", u.len(), xi.len())?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// Projected-gradient residual `|v − Π_U(v − ∇ψ(v))|` of the prox problem;
/// zero exactly at the maximizer.
pub fn prox_residual(
    map: &MirrorMap,
    set: &ControlSet,
    u: &DVector<f64>,
    xi: &DVector<f64>,
    lambda: f64,
    v: &DVector<f64>,
) -> f64 {
    let target = xi / lambda + map.grad(u);
    prox_residual_for_target(map, set, &target, v)
}

fn prox_residual_for_target(map: &MirrorMap, set: &ControlSet, target: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let g = map.grad(v) - target;
    (v - set.project(&(v - g))).norm()
}

/// `(ξ + λ∇h(u) − λ∇h(v))·(w − v)`; non-positive for every `w ∈ U` iff `v` is
/// the maximizer.
pub fn variational_inequality(
    map: &MirrorMap,
    u: &DVector<f64>,
    v: &DVector<f64>,
    w: &DVector<f64>,
    xi: &DVector<f64>,
    lambda: f64,
) -> f64 {
    (xi + (map.grad(u) - map.grad(v)) * lambda).dot(&(w - v))
}

/// Maximizer of `ξ·(v − u) − λD_h(v|u)` over `v ∈ U`.
pub fn mirror_step_pointwise(
    map: &MirrorMap,
    set: &ControlSet,
    u: &DVector<f64>,
    xi: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>> {
    check_step_args(u, xi, lambda)?;
    if map.is_quadratic() {
        return Ok(set.project(&(u + xi / lambda)));
    }
    if matches!(set, ControlSet::ConvexOracle(_)) {
        return Err(Error::InvalidArgument(format!(
            "the {} mirror map is only supported on unconstrained or box control sets",
            map.name()
        )));
    }
    if xi.iter().all(|&z| z == 0.0) {
        return Ok(set.project(u));
    }
    let target = xi / lambda + map.grad(u);
    projected_newton(map, set, &target, set.project(u))
}

/// Minimizes `ψ(v) = h(v) − target·v` over a box (or all of ℝᵐ) by Newton
/// steps on the free coordinates with Armijo backtracking.
fn projected_newton(
    map: &MirrorMap,
    set: &ControlSet,
    target: &DVector<f64>,
    start: DVector<f64>,
) -> Result<DVector<f64>> {
    let psi = |v: &DVector<f64>| map.value(v) - target.dot(v);
    let at_lower = |v: &DVector<f64>, i: usize| match set {
        ControlSet::Box { lower, .. } => v[i] <= lower[i],
        _ => false,
    };
    let at_upper = |v: &DVector<f64>, i: usize| match set {
        ControlSet::Box { upper, .. } => v[i] >= upper[i],
        _ => false,
    };

    let mut v = start;
    let mut residual = prox_residual_for_target(map, set, target, &v);
    for _ in 0..PROX_MAX_ITERS {
        if residual <= f64::EPSILON * (1.0 + v.norm()) {
            return Ok(v);
        }
        let g = map.grad(&v) - target;
        let free: Vec<usize> = (0..v.len())
            .filter(|&i| !((at_lower(&v, i) && g[i] > 0.0) || (at_upper(&v, i) && g[i] < 0.0)))
            .collect();
        let mut dir = DVector::zeros(v.len());
        if !free.is_empty() {
            let hess = map.hessian(&v);
            let h_ff = DMatrix::from_fn(free.len(), free.len(), |a, b| hess[(free[a], free[b])]);
            let g_f = DVector::from_iterator(free.len(), free.iter().map(|&i| -g[i]));
            let d_f = h_ff
                .cholesky()
                .map(|c| c.solve(&g_f))
                .unwrap_or_else(|| g_f.clone());
            for (a, &i) in free.iter().enumerate() {
                dir[i] = d_f[a];
            }
        }

        // Near the solution ψ stalls at round-off before the residual does, so a
        // full step that shrinks the residual is taken without a line search.
        let full = set.project(&(&v + &dir));
        let full_residual = prox_residual_for_target(map, set, target, &full);
        let (next, next_residual) = if full_residual < residual {
            (full, full_residual)
        } else {
            let psi_v = psi(&v);
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let cand = set.project(&(&v + &dir * step));
                if psi(&cand) <= psi_v + 1e-4 * g.dot(&(&cand - &v)) {
                    accepted = Some(cand);
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some(cand) => {
                    let r = prox_residual_for_target(map, set, target, &cand);
                    (cand, r)
                }
                None => break,
            }
        };
        if residual <= PROX_TOLERANCE && next_residual >= residual {
            break;
        }
        v = next;
        residual = next_residual;
    }
    if residual <= PROX_TOLERANCE {
        Ok(v)
    } else {
        Err(Error::ProxFailure { iterations: PROX_MAX_ITERS, residual })
    }
}

/// Node-wise mirror step over a whole control trajectory.
pub fn mirror_step(
    map: &MirrorMap,
    set: &ControlSet,
    control: &Trajectory,
    xi: &Trajectory,
    lambda: f64,
) -> Result<Trajectory> {
    control.check_compatible(xi)?;
    let values = control
        .values()
        .iter()
        .zip(xi.values())
        .map(|(u, g)| mirror_step_pointwise(map, set, u, g, lambda))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(*control.grid(), values)
}

/// Slack `RHS − LHS` of the three-point inequality
/// `ξ·(w−u) − λD(w|u) ≤ ξ·(ū−u) − λD(ū|u) − λD(w|ū)` where `ū` is the maximizer.
pub fn three_point_check(
    map: &MirrorMap,
    u: &DVector<f64>,
    ustar: &DVector<f64>,
    w: &DVector<f64>,
    xi: &DVector<f64>,
    lambda: f64,
) -> f64 {
    let lhs = xi.dot(&(w - u)) - lambda * bregman_pointwise(map, w, u);
    let rhs = xi.dot(&(ustar - u))
        - lambda * bregman_pointwise(map, ustar, u)
        - lambda * bregman_pointwise(map, w, ustar);
    rhs - lhs
}
