//! The four time-stepping schemes as single-step operations plus a
//! trajectory driver.
//!
//! All schemes advance `u' + Dφ(u) = 0` from v over a step τ:
//!
//! * Euler — proximal step, argmin φ(u) + ‖u−v‖²/(2τ);
//! * Gonzalez — discrete-gradient correction making the per-step energy
//!   equality φ(u) + τ‖(u−v)/τ‖² = φ(v) exact, with Dφ(u) ∥ u−v;
//! * De Giorgi root — one scalar equation G(u,v) = 0 per step, where
//!   G(u,v) = φ(u) + ‖u−v‖²/(2τ) + (τ/2)‖Dφ(u)‖² − φ(v), solved along the
//!   Euler ray (Near root inside [v, u^e], Far root beyond u^e), with
//!   residual acceptance when no root exists;
//! * De Giorgi min — minimize G(·, v) instead of solving G = 0.

use crate::diagnostics::alignment_defect;
use crate::partition::Partition;
use crate::potentials::{PotentialError, PotentialModel};
use crate::solvers::{minimize_smooth, newton_solve, prox_step, SolverError, SolverSettings};
use crate::trajectory::{StepRecord, StepStatus, Trajectory};
use crate::{Matrix, Vector};
use std::cell::Cell;
use thiserror::Error;

/// Which root of the De Giorgi equation the root-form scheme selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeGiorgiBranch {
    /// Root on the segment [u_{i−1}, u^e] (the existence-proof construction).
    Near,
    /// Root beyond the Euler point, reached by marching outward (the branch
    /// matching the closed-form scalar solutions).
    Far,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Euler,
    Gonzalez,
    DeGiorgiRoot(DeGiorgiBranch),
    DeGiorgiMin,
}

impl SchemeKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "euler" => Some(SchemeKind::Euler),
            "gonzalez" => Some(SchemeKind::Gonzalez),
            "dg-root:near" => Some(SchemeKind::DeGiorgiRoot(DeGiorgiBranch::Near)),
            "dg-root:far" => Some(SchemeKind::DeGiorgiRoot(DeGiorgiBranch::Far)),
            "dg-min" => Some(SchemeKind::DeGiorgiMin),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::Euler => "euler",
            SchemeKind::Gonzalez => "gonzalez",
            SchemeKind::DeGiorgiRoot(DeGiorgiBranch::Near) => "dg-root:near",
            SchemeKind::DeGiorgiRoot(DeGiorgiBranch::Far) => "dg-root:far",
            SchemeKind::DeGiorgiMin => "dg-min",
        }
    }
}

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("state dimension {got} does not match potential dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("scheme `{scheme}` needs {what} but potential `{potential}` does not provide it")]
    Unsupported {
        scheme: &'static str,
        what: &'static str,
        potential: String,
    },
    #[error("post-step verification failed: {0}")]
    PostCheckFailed(String),
    #[error("step unsolvable: {0}")]
    Unsolvable(String),
}

/// Relative cutoff deciding that a gradient is numerically zero.
const STATIONARY_REL_TOL: f64 = 1e-13;
/// Scheme-level tolerance on energy identities (inner solves run at 1e−12).
const ENERGY_IDENTITY_TOL: f64 = 1e-9;
/// Tolerance on the Gonzalez parallelism defect.
const ALIGNMENT_TOL: f64 = 1e-8;
/// Increments below this skip the alignment check.
const ALIGNMENT_MIN_INCREMENT: f64 = 1e-10;

/// De Giorgi residual functional
/// G(u, v) = φ(u) + ‖u−v‖²/(2τ) + (τ/2)‖Dφ(u)‖² − φ(v).
pub fn de_giorgi_value(
    p: &PotentialModel,
    u: &Vector,
    v: &Vector,
    tau: f64,
) -> Result<f64, PotentialError> {
    if u.len() != p.dim() || v.len() != p.dim() {
        return Err(PotentialError::DimensionMismatch {
            name: p.name().to_string(),
            expected: p.dim(),
            got: u.len().max(v.len()),
        });
    }
    let grad = p.gradient(u)?;
    Ok(
        p.value(u) + (u - v).norm_squared() / (2.0 * tau) + 0.5 * tau * grad.norm_squared()
            - p.value(v),
    )
}

fn check_inputs(p: &PotentialModel, v: &Vector, tau: f64) -> Result<(), SchemeError> {
    if !(tau > 0.0) {
        return Err(SchemeError::NonPositiveStep(tau));
    }
    if v.len() != p.dim() {
        return Err(SchemeError::DimensionMismatch {
            expected: p.dim(),
            got: v.len(),
        });
    }
    Ok(())
}

fn is_stationary(p: &PotentialModel, v: &Vector) -> Result<bool, PotentialError> {
    let g = p.gradient(v)?;
    Ok(g.norm() <= STATIONARY_REL_TOL * (1.0 + p.value(v).abs()))
}

fn stationary_record(p: &PotentialModel, v: &Vector, tau: f64) -> StepRecord {
    let energy = p.value(v);
    let slope = p.gradient(v).map(|g| g.norm()).unwrap_or(0.0);
    StepRecord {
        energy_before: energy,
        energy_after: energy,
        increment_norm: 0.0,
        slope_norm: slope,
        residual: 0.5 * tau * slope * slope,
        solver_iterations: 0,
        status: StepStatus::Stationary,
    }
}

/// Implicit Euler / proximal step.
pub fn euler_step(
    p: &PotentialModel,
    v: &Vector,
    tau: f64,
    settings: &SolverSettings,
) -> Result<(Vector, StepRecord), SchemeError> {
    check_inputs(p, v, tau)?;
    let (u, iterations) = prox_step(p, v, tau, settings)?;
    let increment = (&u - v).norm();
    // Nonsmooth models get the implicit-Euler subgradient selection
    // ξ = (v−u)/τ ∈ ∂φ(u).
    let slope = match p.gradient(&u) {
        Ok(g) => g.norm(),
        Err(_) => increment / tau,
    };
    let residual =
        p.value(&u) + increment * increment / (2.0 * tau) + 0.5 * tau * slope * slope - p.value(v);
    let record = StepRecord {
        energy_before: p.value(v),
        energy_after: p.value(&u),
        increment_norm: increment,
        slope_norm: slope,
        residual,
        solver_iterations: iterations,
        status: StepStatus::Exact,
    };
    Ok((u, record))
}

/// Gonzalez discrete-gradient step: Newton on the corrected residual with the
/// Euler point as warm start, then a post-hoc check of the equivalent
/// energy-equality + parallelism form.
pub fn gonzalez_step(
    p: &PotentialModel,
    v: &Vector,
    tau: f64,
    settings: &SolverSettings,
) -> Result<(Vector, StepRecord), SchemeError> {
    check_inputs(p, v, tau)?;
    if !p.has_gradient() {
        return Err(SchemeError::Unsupported {
            scheme: "gonzalez",
            what: "a gradient",
            potential: p.name().to_string(),
        });
    }
    if is_stationary(p, v)? {
        return Ok((v.clone(), stationary_record(p, v, tau)));
    }
    let energy_v = p.value(v);
    let (euler_point, prox_iterations) = prox_step(p, v, tau, settings)?;
    let guard = 1e-12 * (1.0 + v.norm());

    let residual = |u: &Vector| -> Vector {
        let delta = u - v;
        let dist2 = delta.norm_squared();
        if dist2 < guard * guard {
            return Vector::from_element(u.len(), f64::INFINITY);
        }
        let grad = p.gradient(u).expect("gradient availability checked");
        let correction = (p.value(u) - energy_v - grad.dot(&delta)) / dist2;
        &delta / tau + grad + delta * correction
    };
    let (u, newton_iterations) = newton_solve(&residual, None, &euler_point, settings)?;

    let increment = (&u - v).norm();
    let energy_u = p.value(&u);
    let balance = energy_u + increment * increment / tau - energy_v;
    if balance.abs() > ENERGY_IDENTITY_TOL * (1.0 + energy_v.abs()) {
        return Err(SchemeError::PostCheckFailed(format!(
            "energy equality defect {balance:.3e} exceeds tolerance"
        )));
    }
    if increment > ALIGNMENT_MIN_INCREMENT {
        let defect = alignment_defect(p, &u, v).map_err(|e| {
            SchemeError::PostCheckFailed(format!("alignment defect unavailable: {e}"))
        })?;
        if defect > ALIGNMENT_TOL {
            return Err(SchemeError::PostCheckFailed(format!(
                "alignment defect {defect:.3e} exceeds tolerance"
            )));
        }
    }
    let slope = p.gradient(&u)?.norm();
    let record = StepRecord {
        energy_before: energy_v,
        energy_after: energy_u,
        increment_norm: increment,
        slope_norm: slope,
        residual: de_giorgi_value(p, &u, v, tau)?,
        solver_iterations: prox_iterations + newton_iterations,
        status: StepStatus::Exact,
    };
    Ok((u, record))
}

fn require_c1(p: &PotentialModel, scheme: &'static str) -> Result<(), SchemeError> {
    if !p.is_smooth() || !p.has_gradient() {
        return Err(SchemeError::Unsupported {
            scheme,
            what: "a C¹ energy",
            potential: p.name().to_string(),
        });
    }
    Ok(())
}

/// Residual-acceptance check against the Hölder tolerance
/// L‖u−v‖^{1+α}/(1+α); a small cushion absorbs the exact-equality case.
fn check_holder_acceptance(
    p: &PotentialModel,
    u: &Vector,
    v: &Vector,
    rho: f64,
) -> Result<(), SchemeError> {
    let holder = p.holder()?;
    let bound = holder.constant * (u - v).norm().powf(1.0 + holder.alpha) / (1.0 + holder.alpha);
    if rho > bound * (1.0 + 1e-9) + 1e-12 {
        return Err(SchemeError::Unsolvable(format!(
            "accepted residual {rho:.6e} exceeds the Hölder tolerance {bound:.6e}"
        )));
    }
    Ok(())
}

/// De Giorgi root step: solve G(u, v) = 0 along the Euler ray, or accept the
/// Euler point with its (Hölder-controlled) residual when G(u^e, v) ≥ 0.
pub fn degiorgi_root_step(
    p: &PotentialModel,
    v: &Vector,
    tau: f64,
    branch: DeGiorgiBranch,
    settings: &SolverSettings,
) -> Result<(Vector, StepRecord), SchemeError> {
    check_inputs(p, v, tau)?;
    require_c1(p, "dg-root")?;
    if is_stationary(p, v)? {
        return Ok((v.clone(), stationary_record(p, v, tau)));
    }
    let (euler_point, prox_iterations) = prox_step(p, v, tau, settings)?;
    let evals = Cell::new(0usize);
    let ray = |s: f64| v + (&euler_point - v) * s;
    let g = |s: f64| -> f64 {
        evals.set(evals.get() + 1);
        de_giorgi_value(p, &ray(s), v, tau).expect("C¹ checked")
    };
    let g1 = g(1.0);

    let (u, residual, status) = if g1 >= 0.0 {
        check_holder_acceptance(p, &euler_point, v, g1)?;
        (euler_point.clone(), g1, StepStatus::ResidualAccepted)
    } else {
        // Root exists: g(0) = (τ/2)‖Dφ(v)‖² > 0 and g(1) < 0. Solve to
        // bracket-width convergence; an absolute residual stop would lose all
        // relative accuracy once the states decay.
        let width_only = SolverSettings {
            tol_residual: 0.0,
            ..*settings
        };
        let (lo, hi) = match branch {
            DeGiorgiBranch::Near => (0.0, 1.0),
            DeGiorgiBranch::Far => {
                let mut lo = 1.0;
                let mut hi = 2.0;
                while g(hi) < 0.0 {
                    lo = hi;
                    hi *= 2.0;
                    if hi > 1e12 {
                        return Err(SchemeError::Unsolvable(
                            "no sign change along the outward Euler ray".into(),
                        ));
                    }
                }
                (lo, hi)
            }
        };
        let s = brent_on(&g, lo, hi, &width_only)?;
        let u = ray(s);
        let rho = de_giorgi_value(p, &u, v, tau)?;
        if rho.abs() > ENERGY_IDENTITY_TOL {
            return Err(SchemeError::PostCheckFailed(format!(
                "root residual |G| = {:.3e} exceeds tolerance",
                rho.abs()
            )));
        }
        (u, rho, StepStatus::Exact)
    };

    let record = StepRecord {
        energy_before: p.value(v),
        energy_after: p.value(&u),
        increment_norm: (&u - v).norm(),
        slope_norm: p.gradient(&u)?.norm(),
        residual,
        solver_iterations: prox_iterations + evals.get(),
        status,
    };
    Ok((u, record))
}

fn brent_on(
    g: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    settings: &SolverSettings,
) -> Result<f64, SchemeError> {
    crate::solvers::brent_root(g, lo, hi, settings).map_err(SchemeError::Solver)
}

/// De Giorgi variational step: minimize G(·, v) from the Euler warm start.
pub fn degiorgi_min_step(
    p: &PotentialModel,
    v: &Vector,
    tau: f64,
    settings: &SolverSettings,
) -> Result<(Vector, StepRecord), SchemeError> {
    check_inputs(p, v, tau)?;
    require_c1(p, "dg-min")?;
    if !p.has_hessian() {
        return Err(SchemeError::Unsupported {
            scheme: "dg-min",
            what: "a Hessian",
            potential: p.name().to_string(),
        });
    }
    if is_stationary(p, v)? {
        return Ok((v.clone(), stationary_record(p, v, tau)));
    }
    let (euler_point, prox_iterations) = prox_step(p, v, tau, settings)?;
    let f = |u: &Vector| de_giorgi_value(p, u, v, tau).expect("C¹ checked");
    let grad = |u: &Vector| {
        let dphi = p.gradient(u).expect("gradient checked");
        let hess = p.hessian(u).expect("hessian checked");
        (u - v) / tau + &dphi + hess * dphi * tau
    };
    // Gauss-Newton-style curvature; exact whenever D³φ = 0, which covers the
    // whole catalog.
    let hess = |u: &Vector| {
        let h = p.hessian(u).expect("hessian checked");
        let mut m = &h * &h * tau + &h;
        for i in 0..m.nrows() {
            m[(i, i)] += 1.0 / tau;
        }
        m
    };
    let (u, iterations) = minimize_smooth(
        &f,
        &grad,
        Some(&hess as &dyn Fn(&Vector) -> Matrix),
        &euler_point,
        settings,
    )?;
    let residual = f(&u);
    let record = StepRecord {
        energy_before: p.value(v),
        energy_after: p.value(&u),
        increment_norm: (&u - v).norm(),
        slope_norm: p.gradient(&u)?.norm(),
        residual,
        solver_iterations: prox_iterations + iterations,
        status: StepStatus::Exact,
    };
    Ok((u, record))
}

/// One step of the requested scheme.
pub fn scheme_step(
    kind: SchemeKind,
    p: &PotentialModel,
    v: &Vector,
    tau: f64,
    settings: &SolverSettings,
) -> Result<(Vector, StepRecord), SchemeError> {
    match kind {
        SchemeKind::Euler => euler_step(p, v, tau, settings),
        SchemeKind::Gonzalez => gonzalez_step(p, v, tau, settings),
        SchemeKind::DeGiorgiRoot(branch) => degiorgi_root_step(p, v, tau, branch, settings),
        SchemeKind::DeGiorgiMin => degiorgi_min_step(p, v, tau, settings),
    }
}

/// Applies the chosen step over the whole partition. A failed step truncates
/// the trajectory with a `Failed` record; it never silently continues.
pub fn run_scheme(
    kind: SchemeKind,
    p: &PotentialModel,
    u0: &Vector,
    partition: &Partition,
    settings: &SolverSettings,
) -> Result<Trajectory, SchemeError> {
    if u0.len() != p.dim() {
        return Err(SchemeError::DimensionMismatch {
            expected: p.dim(),
            got: u0.len(),
        });
    }
    let mut traj = Trajectory::new(partition.clone(), u0.clone());
    let steps = partition.steps().to_vec();
    for &tau in &steps {
        let v = traj.states().last().unwrap().clone();
        match scheme_step(kind, p, &v, tau, settings) {
            Ok((u, record)) => {
                traj.push_step(u, record).expect("trajectory accepts steps");
            }
            Err(err) => {
                traj.push_failure(StepRecord::failed(p.value(&v)), err.to_string());
                break;
            }
        }
    }
    Ok(traj)
}
