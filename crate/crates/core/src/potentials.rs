//! Catalog of energy functionals φ with gradients, Hessians, regularity
//! metadata, and closed-form proximal maps where available.

use crate::{Matrix, Vector};
use std::f64::consts::SQRT_2;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("parameter must be positive, got {0}")]
    NonPositiveParameter(f64),
    #[error("gradient unavailable for potential `{0}`")]
    GradientUnavailable(String),
    #[error("Hessian unavailable for potential `{0}`")]
    HessianUnavailable(String),
    #[error("no Hölder regularity metadata stored for potential `{0}`")]
    MissingRegularityMetadata(String),
    #[error("proximal objective unbounded below for potential `{0}` at step {1}")]
    ProxUnbounded(String, f64),
    #[error("dimension mismatch: potential `{name}` has dim {expected}, state has {got}")]
    DimensionMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
}

type ValueFn = dyn Fn(&Vector) -> f64 + Send + Sync;
type GradFn = dyn Fn(&Vector) -> Vector + Send + Sync;
type HessFn = dyn Fn(&Vector) -> Matrix + Send + Sync;
type ProxFn = dyn Fn(&Vector, f64) -> Result<Vector, PotentialError> + Send + Sync;
type FlowFn = dyn Fn(&Vector, f64) -> Vector + Send + Sync;

/// Hölder data (L, α) of the non-convex part's gradient: Dφ₂ is assumed
/// α-Hölder with constant L. Feeds the residual-acceptance tolerance
/// L‖Δu‖^{1+α}/(1+α).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderRegularity {
    pub constant: f64,
    pub alpha: f64,
}

/// An energy φ: R^d → (−∞, ∞] with whatever structure it can offer.
///
/// All callbacks are pure; models are freely shareable across threads.
#[derive(Clone)]
pub struct PotentialModel {
    name: String,
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradFn>>,
    hessian: Option<Arc<HessFn>>,
    prox: Option<Arc<ProxFn>>,
    convex: bool,
    smooth: bool,
    holder: Option<HolderRegularity>,
    exact_flow: Option<Arc<FlowFn>>,
}

impl std::fmt::Debug for PotentialModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PotentialModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("convex", &self.convex)
            .field("smooth", &self.smooth)
            .field("holder", &self.holder)
            .finish()
    }
}

pub struct PotentialBuilder {
    model: PotentialModel,
}

impl PotentialBuilder {
    pub fn gradient(mut self, g: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        self.model.gradient = Some(Arc::new(g));
        self
    }

    pub fn hessian(mut self, h: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        self.model.hessian = Some(Arc::new(h));
        self
    }

    pub fn prox(
        mut self,
        p: impl Fn(&Vector, f64) -> Result<Vector, PotentialError> + Send + Sync + 'static,
    ) -> Self {
        self.model.prox = Some(Arc::new(p));
        self
    }

    pub fn convex(mut self, yes: bool) -> Self {
        self.model.convex = yes;
        self
    }

    pub fn smooth(mut self, yes: bool) -> Self {
        self.model.smooth = yes;
        self
    }

    pub fn holder(mut self, constant: f64, alpha: f64) -> Self {
        self.model.holder = Some(HolderRegularity { constant, alpha });
        self
    }

    pub fn exact_flow(
        mut self,
        f: impl Fn(&Vector, f64) -> Vector + Send + Sync + 'static,
    ) -> Self {
        self.model.exact_flow = Some(Arc::new(f));
        self
    }

    pub fn build(self) -> PotentialModel {
        self.model
    }
}

impl PotentialModel {
    pub fn builder(
        name: impl Into<String>,
        dim: usize,
        value: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
    ) -> PotentialBuilder {
        PotentialBuilder {
            model: PotentialModel {
                name: name.into(),
                dim,
                value: Arc::new(value),
                gradient: None,
                hessian: None,
                prox: None,
                convex: false,
                smooth: true,
                holder: None,
                exact_flow: None,
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    /// C¹ everywhere (the De Giorgi functionals need ‖Dφ‖ as a function).
    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn value(&self, u: &Vector) -> f64 {
        (self.value)(u)
    }

    pub fn gradient(&self, u: &Vector) -> Result<Vector, PotentialError> {
        match &self.gradient {
            Some(g) => Ok(g(u)),
            None => Err(PotentialError::GradientUnavailable(self.name.clone())),
        }
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn hessian(&self, u: &Vector) -> Result<Matrix, PotentialError> {
        match &self.hessian {
            Some(h) => Ok(h(u)),
            None => Err(PotentialError::HessianUnavailable(self.name.clone())),
        }
    }

    pub fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    pub fn closed_prox(&self, v: &Vector, tau: f64) -> Option<Result<Vector, PotentialError>> {
        self.prox.as_ref().map(|p| p(v, tau))
    }

    pub fn has_prox(&self) -> bool {
        self.prox.is_some()
    }

    pub fn holder(&self) -> Result<HolderRegularity, PotentialError> {
        self.holder
            .ok_or_else(|| PotentialError::MissingRegularityMetadata(self.name.clone()))
    }

    pub fn exact_flow(&self, u0: &Vector, t: f64) -> Option<Vector> {
        self.exact_flow.as_ref().map(|f| f(u0, t))
    }

    pub fn has_exact_flow(&self) -> bool {
        self.exact_flow.is_some()
    }
}

/// φ(u) = λu²/2 on R.
pub fn quadratic_1d(lambda: f64) -> Result<PotentialModel, PotentialError> {
    if !(lambda > 0.0) {
        return Err(PotentialError::NonPositiveParameter(lambda));
    }
    Ok(
        PotentialModel::builder(format!("quad1d:{lambda}"), 1, move |u| {
            0.5 * lambda * u[0] * u[0]
        })
        .gradient(move |u| Vector::from_vec(vec![lambda * u[0]]))
        .hessian(move |_| Matrix::from_element(1, 1, lambda))
        .prox(move |v, tau| Ok(Vector::from_vec(vec![v[0] / (1.0 + tau * lambda)])))
        .convex(true)
        .holder(lambda, 1.0)
        .exact_flow(move |u0, t| u0 * (-lambda * t).exp())
        .build(),
    )
}

/// φ(u) = u₁² + u₂²/4, the anisotropic quadratic with known flow
/// u(t) = (u₀₁ e^{−2t}, u₀₂ e^{−t/2}).
pub fn aniso_quadratic_2d() -> PotentialModel {
    PotentialModel::builder("aniso2d", 2, |u| u[0] * u[0] + 0.25 * u[1] * u[1])
        .gradient(|u| Vector::from_vec(vec![2.0 * u[0], 0.5 * u[1]]))
        .hessian(|_| Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.5])))
        .prox(|v, tau| {
            Ok(Vector::from_vec(vec![
                v[0] / (1.0 + 2.0 * tau),
                v[1] / (1.0 + 0.5 * tau),
            ]))
        })
        .convex(true)
        .holder(2.0, 1.0)
        .exact_flow(|u0, t| {
            Vector::from_vec(vec![u0[0] * (-2.0 * t).exp(), u0[1] * (-0.5 * t).exp()])
        })
        .build()
}

/// φ(u) = λ‖u‖²/2 on R^d; D²φ = λI, so D²φ(v)w ∥ w for every v, w.
pub fn radial_quadratic(lambda: f64, dim: usize) -> Result<PotentialModel, PotentialError> {
    if !(lambda > 0.0) {
        return Err(PotentialError::NonPositiveParameter(lambda));
    }
    if dim == 0 {
        return Err(PotentialError::NonPositiveParameter(0.0));
    }
    Ok(
        PotentialModel::builder(format!("radial:{lambda}:{dim}"), dim, move |u| {
            0.5 * lambda * u.norm_squared()
        })
        .gradient(move |u| u * lambda)
        .hessian(move |u| Matrix::identity(u.len(), u.len()) * lambda)
        .prox(move |v, tau| Ok(v / (1.0 + tau * lambda)))
        .convex(true)
        .holder(lambda, 1.0)
        .exact_flow(move |u0, t| u0 * (-lambda * t).exp())
        .build(),
    )
}

/// φ(u) = u(1−u): smooth, concave, the De Giorgi root equation from u = 0
/// has no real solution for any step size.
pub fn logistic_nonconvex() -> PotentialModel {
    PotentialModel::builder("logistic", 1, |u| u[0] * (1.0 - u[0]))
        .gradient(|u| Vector::from_vec(vec![1.0 - 2.0 * u[0]]))
        .hessian(|_| Matrix::from_element(1, 1, -2.0))
        .prox(|v, tau| {
            // argmin u(1−u) + (u−v)²/(2τ) exists iff 1/(2τ) > 1.
            if tau >= 0.5 {
                return Err(PotentialError::ProxUnbounded("logistic".into(), tau));
            }
            Ok(Vector::from_vec(vec![(v[0] - tau) / (1.0 - 2.0 * tau)]))
        })
        .convex(false)
        .holder(2.0, 1.0)
        .exact_flow(|u0, t| {
            // u' = 2u − 1 from u0.
            Vector::from_vec(vec![0.5 + (u0[0] - 0.5) * (2.0 * t).exp()])
        })
        .build()
}

/// Linear energy with a hard obstacle: φ(u) = u + I_{[√2,∞)}(u).
///
/// Prox-only (nonsmooth at the obstacle); the interior one-sided gradient is
/// exposed so equation-based schemes can run until they hit the obstacle.
/// From u₀ = 2 the flow is u(t) = max(2−t, √2).
pub fn obstacle_linear() -> PotentialModel {
    const EDGE_SLACK: f64 = 1e-12;
    PotentialModel::builder("obstacle", 1, |u| {
        if u[0] >= SQRT_2 - EDGE_SLACK {
            u[0]
        } else {
            f64::INFINITY
        }
    })
    .gradient(|_| Vector::from_vec(vec![1.0]))
    .prox(|v, tau| Ok(Vector::from_vec(vec![(v[0] - tau).max(SQRT_2)])))
    .convex(true)
    .smooth(false)
    .holder(0.0, 1.0)
    .exact_flow(|u0, t| Vector::from_vec(vec![(u0[0] - t).max(SQRT_2)]))
    .build()
}

/// Parse a CLI potential spec: `quad1d:λ`, `aniso2d`, `radial:λ:d`,
/// `logistic`, `obstacle`.
pub fn parse_potential(spec: &str) -> Result<PotentialModel, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["quad1d", lam] => {
            let lambda: f64 = lam.parse().map_err(|_| format!("bad λ in `{spec}`"))?;
            quadratic_1d(lambda).map_err(|e| e.to_string())
        }
        ["aniso2d"] => Ok(aniso_quadratic_2d()),
        ["radial", lam, d] => {
            let lambda: f64 = lam.parse().map_err(|_| format!("bad λ in `{spec}`"))?;
            let dim: usize = d.parse().map_err(|_| format!("bad dimension in `{spec}`"))?;
            radial_quadratic(lambda, dim).map_err(|e| e.to_string())
        }
        ["logistic"] => Ok(logistic_nonconvex()),
        ["obstacle"] => Ok(obstacle_linear()),
        _ => Err(format!(
            "unknown potential `{spec}` (expected quad1d:λ | aniso2d | radial:λ:d | logistic | obstacle)"
        )),
    }
}

/// Result of sampling the parallel-Hessian condition D²φ(v)w ∥ w.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParallelHessianReport {
    pub holds: bool,
    pub worst_defect: f64,
}

/// Checks whether D²φ(v)w stays parallel to w over the supplied samples:
/// the orthogonal remainder must stay below 1e−10 · ‖D²φ(v)w‖.
pub fn check_parallel_hessian(
    p: &PotentialModel,
    samples: &[(Vector, Vector)],
) -> Result<ParallelHessianReport, PotentialError> {
    const REL_TOL: f64 = 1e-10;
    let mut worst: f64 = 0.0;
    for (v, w) in samples {
        if v.len() != p.dim() || w.len() != p.dim() {
            return Err(PotentialError::DimensionMismatch {
                name: p.name().to_string(),
                expected: p.dim(),
                got: v.len().max(w.len()),
            });
        }
        let hw = p.hessian(v)? * w;
        let hw_norm = hw.norm();
        let w_norm2 = w.norm_squared();
        if hw_norm == 0.0 || w_norm2 == 0.0 {
            continue;
        }
        let coeff = hw.dot(w) / w_norm2;
        let defect = (&hw - w * coeff).norm() / hw_norm;
        worst = worst.max(defect);
    }
    Ok(ParallelHessianReport {
        holds: worst <= REL_TOL,
        worst_defect: worst,
    })
}
