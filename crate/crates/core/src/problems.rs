//! Built-in benchmark problems: scalar linear-quadratic, quartic terminal
//! cost, and a dense coupled sine system in `d` dimensions.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{ControlSet, ProblemSpec, SmoothnessData};
use crate::sampling::NormalSampler;

fn scalar(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

fn scalar_mat(x: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, x)
}

/// Scalar LQ problem: `ẋ = ax + u`, `f = ½qx²`, `g = ½sx²`.
///
/// The control penalty `½τu²` comes from the quadratic mirror map at solve
/// time. Smoothness data uses `M = max(1, |a|, q, s)` for every constant
/// (the `uu`-Hessians vanish, so any positive bound is valid).
pub fn make_lq(a: f64, q: f64, s: f64, x0: f64, horizon: f64) -> Result<ProblemSpec> {
    if !(q >= 0.0 && s >= 0.0) {
        return Err(Error::InvalidArgument("q and s must be nonnegative".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    if !(a.is_finite() && q.is_finite() && s.is_finite() && x0.is_finite()) {
        return Err(Error::InvalidArgument("LQ coefficients must be finite".into()));
    }
    let m = 1f64.max(a.abs()).max(q).max(s);
    let spec = ProblemSpec {
        name: format!("lq(a={a}, q={q}, s={s}, x0={x0}, T={horizon})"),
        state_dim: 1,
        control_dim: 1,
        horizon,
        initial_state: scalar(x0),
        drift: Arc::new(move |_, x, u| scalar(a * x[0] + u[0])),
        drift_jac_x: Arc::new(move |_, _, _| scalar_mat(a)),
        drift_jac_u: Arc::new(|_, _, _| scalar_mat(1.0)),
        running_cost: Arc::new(move |_, x, _| 0.5 * q * x[0] * x[0]),
        running_grad_x: Arc::new(move |_, x, _| scalar(q * x[0])),
        running_grad_u: Arc::new(|_, _, _| scalar(0.0)),
        terminal_cost: Arc::new(move |x| 0.5 * s * x[0] * x[0]),
        terminal_grad: Arc::new(move |x| scalar(s * x[0])),
        control_set: ControlSet::Unconstrained,
        convex: true,
        smoothness: Some(SmoothnessData::new(m, m, m)?),
    };
    Ok(spec)
}

/// Quartic terminal problem: `ẋ = u`, `x₀ = 0`, `f = 0`, `g = ¼x⁴`.
pub fn make_quartic(horizon: f64) -> Result<ProblemSpec> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    Ok(ProblemSpec {
        name: format!("quartic(T={horizon})"),
        state_dim: 1,
        control_dim: 1,
        horizon,
        initial_state: scalar(0.0),
        drift: Arc::new(|_, _, u| scalar(u[0])),
        drift_jac_x: Arc::new(|_, _, _| scalar_mat(0.0)),
        drift_jac_u: Arc::new(|_, _, _| scalar_mat(1.0)),
        running_cost: Arc::new(|_, _, _| 0.0),
        running_grad_x: Arc::new(|_, _, _| scalar(0.0)),
        running_grad_u: Arc::new(|_, _, _| scalar(0.0)),
        terminal_cost: Arc::new(|x| 0.25 * x[0].powi(4)),
        terminal_grad: Arc::new(|x| scalar(x[0].powi(3))),
        control_set: ControlSet::Unconstrained,
        convex: true,
        smoothness: None,
    })
}

/// Cost and coupling parameters of the high-dimensional sine system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighDimParams {
    pub q: f64,
    pub s: f64,
    pub gamma: f64,
    pub horizon: f64,
}

impl Default for HighDimParams {
    fn default() -> Self {
        Self {
            q: 1.0,
            s: 5.0,
            gamma: 1.0,
            horizon: 1.0,
        }
    }
}

/// Default seed for the random system matrices.
pub const DEFAULT_HIGHDIM_SEED: u64 = 42;

/// `ẋ = Ax + Bu + γ sin(Cx)` with dense random `A`, `B`, `C`,
/// `f = (q/2d)|x|²` and `g = (s/2d)|x − x_tar|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct HighDimSystem {
    pub dim: usize,
    pub seed: u64,
    pub params: HighDimParams,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub x_init: DVector<f64>,
    pub x_target: DVector<f64>,
}

impl HighDimSystem {
    /// Draws `M₁`, `M₂`, `M₃` (row-major, in that order) from
    /// [`NormalSampler::new(seed)`](NormalSampler) and sets
    /// `A = 0.15 M₁/√d − 0.6 I`, `B = 0.6 M₂/√d + 0.3 I`, `C = 0.8 M₃/√d`.
    pub fn generate(dim: usize, seed: u64, params: HighDimParams) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if !(params.horizon > 0.0 && params.q >= 0.0 && params.s >= 0.0) {
            return Err(Error::InvalidArgument(
                "high-dim parameters need T > 0, q >= 0, s >= 0".into(),
            ));
        }
        let mut sampler = NormalSampler::new(seed);
        // Row-major fill, independent of nalgebra's column-major storage.
        let sample = |sampler: &mut NormalSampler| {
            let mut m = DMatrix::zeros(dim, dim);
            for i in 0..dim {
                for j in 0..dim {
                    m[(i, j)] = sampler.normal();
                }
            }
            m
        };
        let m1 = sample(&mut sampler);
        let m2 = sample(&mut sampler);
        let m3 = sample(&mut sampler);
        let sd = (dim as f64).sqrt();
        let eye = DMatrix::<f64>::identity(dim, dim);
        let a = m1 * (0.15 / sd) - &eye * 0.6;
        let b = m2 * (0.6 / sd) + &eye * 0.3;
        let c = m3 * (0.8 / sd);
        let d = dim as f64;
        let x_init = DVector::from_fn(dim, |i, _| 0.4 * ((i + 1) as f64 / d * PI).sin());
        let x_target = DVector::from_fn(dim, |i, _| 0.8 * ((i + 1) as f64 / d * PI).cos());
        Ok(Self {
            dim,
            seed,
            params,
            a,
            b,
            c,
            x_init,
            x_target,
        })
    }

    pub fn into_problem(self) -> ProblemSpec {
        let Self {
            dim,
            seed,
            params,
            a,
            b,
            c,
            x_init,
            x_target,
        } = self;
        let HighDimParams { q, s, gamma, horizon } = params;
        let d = dim as f64;
        let (a, b, c) = (Arc::new(a), Arc::new(b), Arc::new(c));
        let x_target = Arc::new(x_target);

        let drift = {
            let (a, b, c) = (a.clone(), b.clone(), c.clone());
            Arc::new(move |_: f64, x: &DVector<f64>, u: &DVector<f64>| {
                let mut out = &*a * x + &*b * u;
                out += (&*c * x).map(f64::sin) * gamma;
                out
            })
        };
        let drift_jac_x = {
            let (a, c) = (a.clone(), c.clone());
            Arc::new(move |_: f64, x: &DVector<f64>, _: &DVector<f64>| {
                let cos_cx = (&*c * x).map(f64::cos);
                let mut jac = (*a).clone();
                for i in 0..dim {
                    let w = gamma * cos_cx[i];
                    for j in 0..dim {
                        jac[(i, j)] += w * c[(i, j)];
                    }
                }
                jac
            })
        };
        let drift_jac_u = {
            let b = b.clone();
            Arc::new(move |_: f64, _: &DVector<f64>, _: &DVector<f64>| (*b).clone())
        };
        let terminal_cost = {
            let xt = x_target.clone();
            Arc::new(move |x: &DVector<f64>| s / (2.0 * d) * (x - &*xt).norm_squared())
        };
        let terminal_grad = {
            let xt = x_target.clone();
            Arc::new(move |x: &DVector<f64>| (x - &*xt) * (s / d))
        };

        ProblemSpec {
            name: format!("highdim(d={dim}, seed={seed})"),
            state_dim: dim,
            control_dim: dim,
            horizon,
            initial_state: x_init,
            drift,
            drift_jac_x,
            drift_jac_u,
            running_cost: Arc::new(move |_, x, _| q / (2.0 * d) * x.norm_squared()),
            running_grad_x: Arc::new(move |_, x, _| x * (q / d)),
            running_grad_u: Arc::new(move |_, _, _| DVector::zeros(dim)),
            terminal_cost,
            terminal_grad,
            control_set: ControlSet::Unconstrained,
            convex: false,
            smoothness: None,
        }
    }
}

pub fn make_highdim(dim: usize, seed: u64, params: HighDimParams) -> Result<ProblemSpec> {
    Ok(HighDimSystem::generate(dim, seed, params)?.into_problem())
}
