//! Generalized gradient flows ∂ψ(u, u') + ∂φ(u) ∋ 0 with a state-dependent
//! convex dissipation ψ(u, w) = β(u)‖w‖^p/p.

use super::ExtensionError;
use crate::partition::Partition;
use crate::potentials::PotentialModel;
use crate::solvers::{brent_root, minimize_smooth, SolverSettings};
use crate::trajectory::{StepRecord, StepStatus, Trajectory};
use crate::{Matrix, Vector};
use std::sync::Arc;

type BetaFn = dyn Fn(&Vector) -> f64 + Send + Sync;

/// ψ(u, w) = β(u)‖w‖^p/p with conjugate ψ*(u, y) = β(u)^{−1/(p−1)}‖y‖^{p'}/p',
/// p' = p/(p−1). β must be bounded between positive constants.
#[derive(Clone)]
pub struct DissipationPotential {
    exponent: f64,
    beta: Arc<BetaFn>,
    beta_bounds: (f64, f64),
}

impl std::fmt::Debug for DissipationPotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DissipationPotential")
            .field("exponent", &self.exponent)
            .field("beta_bounds", &self.beta_bounds)
            .finish()
    }
}

impl DissipationPotential {
    pub fn new(
        exponent: f64,
        beta: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        beta_bounds: (f64, f64),
    ) -> Result<Self, ExtensionError> {
        if !(exponent > 1.0) {
            return Err(ExtensionError::BadExponent(exponent));
        }
        if !(beta_bounds.0 > 0.0) || beta_bounds.1 < beta_bounds.0 {
            return Err(ExtensionError::BadBetaBound(beta_bounds.0));
        }
        Ok(Self {
            exponent,
            beta: Arc::new(beta),
            beta_bounds,
        })
    }

    /// State-independent β.
    pub fn constant(exponent: f64, beta: f64) -> Result<Self, ExtensionError> {
        if !(beta > 0.0) {
            return Err(ExtensionError::BadBetaBound(beta));
        }
        Self::new(exponent, move |_| beta, (beta, beta))
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn conjugate_exponent(&self) -> f64 {
        self.exponent / (self.exponent - 1.0)
    }

    pub fn beta(&self, u: &Vector) -> f64 {
        (self.beta)(u)
    }

    pub fn beta_bounds(&self) -> (f64, f64) {
        self.beta_bounds
    }

    /// ψ(u, w).
    pub fn value(&self, u: &Vector, w: &Vector) -> f64 {
        self.beta(u) * w.norm().powf(self.exponent) / self.exponent
    }

    /// ψ*(u, y), the Legendre–Fenchel conjugate in the second slot.
    pub fn conjugate(&self, u: &Vector, y: &Vector) -> f64 {
        let p = self.exponent;
        let q = self.conjugate_exponent();
        self.beta(u).powf(-1.0 / (p - 1.0)) * y.norm().powf(q) / q
    }

    /// ∂_w ψ(u, w) = β(u)‖w‖^{p−2} w; the Fenchel equality pairing.
    pub fn grad_w(&self, u: &Vector, w: &Vector) -> Vector {
        let n = w.norm();
        if n == 0.0 {
            return Vector::zeros(w.len());
        }
        w * (self.beta(u) * n.powf(self.exponent - 2.0))
    }

    /// ∂²_ww ψ(u, w) where it exists (p ≥ 2).
    pub fn hess_w(&self, u: &Vector, w: &Vector) -> Option<Matrix> {
        let p = self.exponent;
        if p < 2.0 {
            return None;
        }
        let d = w.len();
        let n = w.norm();
        if n == 0.0 {
            return Some(if p == 2.0 {
                Matrix::identity(d, d) * self.beta(u)
            } else {
                Matrix::zeros(d, d)
            });
        }
        let beta = self.beta(u);
        let iso = Matrix::identity(d, d) * (beta * n.powf(p - 2.0));
        let rank1 = w * w.transpose() * (beta * (p - 2.0) * n.powf(p - 4.0));
        Some(iso + rank1)
    }

    /// Fenchel–Young gap ψ(u,w) + ψ*(u,y) − ⟨y,w⟩ ≥ 0.
    pub fn fenchel_gap(&self, u: &Vector, w: &Vector, y: &Vector) -> f64 {
        self.value(u, w) + self.conjugate(u, y) - y.dot(w)
    }
}

/// G̃(u, v) = φ(u) + τψ(v, (u−v)/τ) + τψ*(v, −Dφ(u)) − φ(v).
pub fn generalized_residual(
    p: &PotentialModel,
    psi: &DissipationPotential,
    u: &Vector,
    v: &Vector,
    tau: f64,
) -> Result<f64, ExtensionError> {
    let w = (u - v) / tau;
    let grad = p.gradient(u)?;
    Ok(p.value(u) + tau * psi.value(v, &w) + tau * psi.conjugate(v, &(-grad)) - p.value(v))
}

fn check_inputs(p: &PotentialModel, v: &Vector, tau: f64) -> Result<(), ExtensionError> {
    if !(tau > 0.0) {
        return Err(ExtensionError::NonPositiveStep(tau));
    }
    if v.len() != p.dim() {
        return Err(ExtensionError::DimensionMismatch {
            expected: p.dim(),
            got: v.len(),
        });
    }
    if !p.is_smooth() || !p.has_gradient() {
        return Err(ExtensionError::Unsupported(format!(
            "a C¹ energy (got `{}`)",
            p.name()
        )));
    }
    Ok(())
}

const STATIONARY_REL_TOL: f64 = 1e-13;

fn is_stationary(p: &PotentialModel, v: &Vector) -> Result<bool, ExtensionError> {
    Ok(p.gradient(v)?.norm() <= STATIONARY_REL_TOL * (1.0 + p.value(v).abs()))
}

fn stationary_record(p: &PotentialModel, v: &Vector) -> StepRecord {
    let energy = p.value(v);
    StepRecord {
        energy_before: energy,
        energy_after: energy,
        increment_norm: 0.0,
        slope_norm: p.gradient(v).map(|g| g.norm()).unwrap_or(0.0),
        residual: 0.0,
        solver_iterations: 0,
        status: StepStatus::Stationary,
    }
}

/// Generalized Euler step: u = argmin_w { τψ(v, (w−v)/τ) + φ(w) }. The record
/// stores the Fenchel duality residual
/// τψ(v,w) + τψ*(v, −Dφ(u)) + ⟨Dφ(u), u−v⟩, which vanishes at the optimum.
pub fn gen_euler_step(
    p: &PotentialModel,
    psi: &DissipationPotential,
    v: &Vector,
    tau: f64,
    settings: &SolverSettings,
) -> Result<(Vector, StepRecord), ExtensionError> {
    check_inputs(p, v, tau)?;
    if is_stationary(p, v)? {
        return Ok((v.clone(), stationary_record(p, v)));
    }
    let f = |u: &Vector| tau * psi.value(v, &((u - v) / tau)) + p.value(u);
    let grad = |u: &Vector| psi.grad_w(v, &((u - v) / tau)) + p.gradient(u).expect("C¹ checked");
    let use_hessian = p.has_hessian() && psi.exponent() >= 2.0;
    let hess = |u: &Vector| {
        let w = (u - v) / tau;
        psi.hess_w(v, &w).expect("p ≥ 2 checked") / tau + p.hessian(u).expect("hessian checked")
    };
    let (u, iterations) = minimize_smooth(
        &f,
        &grad,
        if use_hessian {
            Some(&hess as &dyn Fn(&Vector) -> Matrix)
        } else {
            None
        },
        v,
        settings,
    )?;
    let w = (&u - v) / tau;
    let dphi = p.gradient(&u)?;
    let duality = tau * psi.value(v, &w) + tau * psi.conjugate(v, &(-&dphi)) + dphi.dot(&(&u - v));
    let record = StepRecord {
        energy_before: p.value(v),
        energy_after: p.value(&u),
        increment_norm: (&u - v).norm(),
        slope_norm: dphi.norm(),
        residual: duality,
        solver_iterations: iterations,
        status: StepStatus::Exact,
    };
    Ok((u, record))
}

/// Generalized De Giorgi step: in the convex case, root of G̃ on the segment
/// from v to the generalized Euler point; otherwise residual acceptance at
/// the Euler point under the Hölder budget.
pub fn gen_degiorgi_step(
    p: &PotentialModel,
    psi: &DissipationPotential,
    v: &Vector,
    tau: f64,
    settings: &SolverSettings,
) -> Result<(Vector, StepRecord), ExtensionError> {
    check_inputs(p, v, tau)?;
    if is_stationary(p, v)? {
        return Ok((v.clone(), stationary_record(p, v)));
    }
    let (euler_point, euler_record) = gen_euler_step(p, psi, v, tau, settings)?;
    let g1 = generalized_residual(p, psi, &euler_point, v, tau)?;

    let (u, residual, status) = if !p.is_convex() || g1 >= 0.0 {
        // G̃(u^e, v) ≤ L‖Δ‖^{1+α}/(1+α) by the Euler optimality rewrite.
        let holder = p.holder()?;
        let bound = holder.constant * (&euler_point - v).norm().powf(1.0 + holder.alpha)
            / (1.0 + holder.alpha);
        if g1 > bound * (1.0 + 1e-9) + 1e-12 {
            return Err(ExtensionError::Unsupported(format!(
                "accepted residual {g1:.6e} above the Hölder budget {bound:.6e}"
            )));
        }
        (euler_point, g1, StepStatus::ResidualAccepted)
    } else {
        // Convex: g(0) = τψ*(v, −Dφ(v)) > 0 and g(1) ≤ 0 bracket a root.
        let g = |s: f64| {
            generalized_residual(p, psi, &(v + (&euler_point - v) * s), v, tau).expect("C¹ checked")
        };
        let width_only = SolverSettings {
            tol_residual: 0.0,
            ..*settings
        };
        let s = brent_root(&g, 0.0, 1.0, &width_only)?;
        let u = v + (&euler_point - v) * s;
        let rho = generalized_residual(p, psi, &u, v, tau)?;
        if rho.abs() > 1e-9 {
            return Err(ExtensionError::Unsupported(format!(
                "segment root left residual {rho:.3e}"
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
        solver_iterations: euler_record.solver_iterations,
        status,
    };
    Ok((u, record))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneralizedKind {
    Euler,
    DeGiorgi,
}

/// Trajectory driver for the generalized schemes; failures truncate.
pub fn run_generalized(
    p: &PotentialModel,
    psi: &DissipationPotential,
    kind: GeneralizedKind,
    u0: &Vector,
    partition: &Partition,
    settings: &SolverSettings,
) -> Result<Trajectory, ExtensionError> {
    if u0.len() != p.dim() {
        return Err(ExtensionError::DimensionMismatch {
            expected: p.dim(),
            got: u0.len(),
        });
    }
    let mut traj = Trajectory::new(partition.clone(), u0.clone());
    for &tau in partition.steps().to_vec().iter() {
        let v = traj.states().last().unwrap().clone();
        let result = match kind {
            GeneralizedKind::Euler => gen_euler_step(p, psi, &v, tau, settings),
            GeneralizedKind::DeGiorgi => gen_degiorgi_step(p, psi, &v, tau, settings),
        };
        match result {
            Ok((u, record)) => traj.push_step(u, record).expect("trajectory accepts steps"),
            Err(err) => {
                traj.push_failure(StepRecord::failed(p.value(&v)), err.to_string());
                break;
            }
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{logistic_nonconvex, quadratic_1d};
    use crate::sampling::SampleStream;
    use crate::schemes::{degiorgi_root_step, euler_step, DeGiorgiBranch};
    use nalgebra::dvector;

    fn s() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn quadratic_dissipation_reduces_to_hilbert_euler() {
        let p = quadratic_1d(1.0).unwrap();
        let psi = DissipationPotential::constant(2.0, 1.0).unwrap();
        let (u, r) = gen_euler_step(&p, &psi, &dvector![1.0], 0.5, &s()).unwrap();
        let (uh, _) = euler_step(&p, &dvector![1.0], 0.5, &s()).unwrap();
        assert!((u[0] - uh[0]).abs() <= 1e-10);
        assert!((u[0] - 2.0 / 3.0).abs() <= 1e-10);
        assert!(r.residual.abs() <= 1e-9);
    }

    #[test]
    fn weighted_quadratic_dissipation_foc() {
        // β ≡ 2, p = 2: FOC 2(u−1)/τ + u = 0 at τ = 0.5 gives u = 0.8;
        // verified against a 1-D grid minimization.
        let p = quadratic_1d(1.0).unwrap();
        let psi = DissipationPotential::constant(2.0, 2.0).unwrap();
        let (u, _) = gen_euler_step(&p, &psi, &dvector![1.0], 0.5, &s()).unwrap();
        assert!((u[0] - 0.8).abs() <= 1e-10);

        let objective = |x: f64| 0.5 * 2.0 * ((x - 1.0) / 0.5).powi(2) * 0.5 + 0.5 * x * x;
        let mut best = (f64::INFINITY, f64::NAN);
        let n = 200_000;
        for k in 0..=n {
            let x = 2.0 * k as f64 / n as f64;
            let o = objective(x);
            if o < best.0 {
                best = (o, x);
            }
        }
        assert!((u[0] - best.1).abs() <= 2.0 / n as f64 + 1e-9);
    }

    #[test]
    fn stationary_start_is_fixed() {
        let p = quadratic_1d(1.0).unwrap();
        let psi = DissipationPotential::constant(4.0, 1.0).unwrap();
        let (u, r) = gen_euler_step(&p, &psi, &dvector![0.0], 0.5, &s()).unwrap();
        assert_eq!(u[0], 0.0);
        assert_eq!(r.status, StepStatus::Stationary);
    }

    #[test]
    fn gen_degiorgi_reduces_to_near_root() {
        let p = quadratic_1d(1.0).unwrap();
        let psi = DissipationPotential::constant(2.0, 1.0).unwrap();
        let (u, r) = gen_degiorgi_step(&p, &psi, &dvector![1.0], 0.5, &s()).unwrap();
        let (uh, _) =
            degiorgi_root_step(&p, &dvector![1.0], 0.5, DeGiorgiBranch::Near, &s()).unwrap();
        assert!((u[0] - uh[0]).abs() <= 1e-10);
        assert!((u[0] - 0.7734590803390136).abs() <= 1e-9);
        assert_eq!(r.status, StepStatus::Exact);
    }

    #[test]
    fn gen_residual_at_start_is_positive() {
        // G̃(v, v) = τψ*(v, −Dφ(v)) > 0 away from critical points.
        let p = quadratic_1d(1.0).unwrap();
        for exponent in [2.0, 3.0, 4.0] {
            let psi = DissipationPotential::constant(exponent, 1.5).unwrap();
            let v = dvector![1.0];
            let g0 = generalized_residual(&p, &psi, &v, &v, 0.5).unwrap();
            assert!(g0 > 0.0);
            let expect = 0.5 * psi.conjugate(&v, &dvector![-1.0]);
            assert!((g0 - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn quartic_dissipation_root_matches_grid_scan() {
        // p = 4, β ≡ 1 on the scalar quadratic: the segment root of G̃ is
        // cross-checked against a dense sign scan.
        let p = quadratic_1d(1.0).unwrap();
        let psi = DissipationPotential::constant(4.0, 1.0).unwrap();
        let v = dvector![1.0];
        let tau = 0.5;
        let (u, r) = gen_degiorgi_step(&p, &psi, &v, tau, &s()).unwrap();
        assert_eq!(r.status, StepStatus::Exact);

        let (ue, _) = gen_euler_step(&p, &psi, &v, tau, &s()).unwrap();
        let g = |sv: f64| generalized_residual(&p, &psi, &(&v + (&ue - &v) * sv), &v, tau).unwrap();
        // dense 1-D scan for the sign change
        let n = 1_000_000;
        let mut crossing = None;
        let mut prev = g(0.0);
        for k in 1..=n {
            let sv = k as f64 / n as f64;
            let cur = g(sv);
            if prev > 0.0 && cur <= 0.0 {
                crossing = Some(sv);
                break;
            }
            prev = cur;
        }
        let sv = crossing.expect("sign change on the segment");
        let u_scan = &v + (&ue - &v) * sv;
        assert!((u[0] - u_scan[0]).abs() <= (&ue - &v).norm() / n as f64 + 1e-9);
    }

    #[test]
    fn fenchel_gap_nonnegative_and_tight() {
        let mut stream = SampleStream::new(11);
        let psi_state = DissipationPotential::new(
            3.0,
            |u: &Vector| 1.0 + 0.5 / (1.0 + u.norm_squared()),
            (1.0, 1.5),
        )
        .unwrap();
        let psis = [
            DissipationPotential::constant(2.0, 1.0).unwrap(),
            DissipationPotential::constant(4.0, 0.7).unwrap(),
            psi_state,
        ];
        for psi in &psis {
            for _ in 0..1000 {
                let u = stream.next_vector(3, -2.0, 2.0);
                let w = stream.next_vector(3, -2.0, 2.0);
                let y = stream.next_vector(3, -2.0, 2.0);
                assert!(psi.fenchel_gap(&u, &w, &y) >= -1e-12);
                // Equality at the subdifferential pairing.
                let y_star = psi.grad_w(&u, &w);
                assert!(psi.fenchel_gap(&u, &w, &y_star).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn coercivity_witnesses() {
        // ψ(u,v) + ψ*(u,w) ≥ c‖v‖^p + c‖w‖^{p'} with c from the β bounds.
        let psi = DissipationPotential::new(
            3.0,
            |u: &Vector| 1.0 + 1.0 / (1.0 + u.norm_squared()),
            (1.0, 2.0),
        )
        .unwrap();
        let p = psi.exponent();
        let q = psi.conjugate_exponent();
        let (lo, hi) = psi.beta_bounds();
        let c = (lo / p).min(hi.powf(-1.0 / (p - 1.0)) / q);
        let mut stream = SampleStream::new(12);
        for _ in 0..500 {
            let u = stream.next_vector(2, -3.0, 3.0);
            let v = stream.next_vector(2, -3.0, 3.0);
            let w = stream.next_vector(2, -3.0, 3.0);
            let lhs = psi.value(&u, &v) + psi.conjugate(&u, &w);
            let rhs = c * v.norm().powf(p) + c * w.norm().powf(q);
            assert!(lhs >= rhs - 1e-12);
        }
    }

    #[test]
    fn nonconvex_residual_acceptance() {
        let p = logistic_nonconvex();
        let psi = DissipationPotential::constant(2.0, 1.0).unwrap();
        let (u, r) = gen_degiorgi_step(&p, &psi, &dvector![0.0], 0.1, &s()).unwrap();
        assert_eq!(r.status, StepStatus::ResidualAccepted);
        let bound = 2.0 * (u[0]).powi(2) / 2.0;
        assert!(r.residual <= bound * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn telescoped_inequality_on_quartic_sweep() {
        // φ(u_m) + Σ τ[ψ + ψ*] − φ(u_0) ≤ Σ ρ_i⁺ for every prefix m.
        let p = quadratic_1d(1.0).unwrap();
        let psi = DissipationPotential::constant(4.0, 1.0).unwrap();
        for n in [5usize, 10, 20, 40] {
            let part = Partition::uniform(1.0, n).unwrap();
            let tr = run_generalized(
                &p,
                &psi,
                GeneralizedKind::DeGiorgi,
                &dvector![1.0],
                &part,
                &s(),
            )
            .unwrap();
            assert!(tr.is_complete());
            let states = tr.states();
            let rho_plus_total: f64 = tr.records().iter().map(|r| r.residual.max(0.0)).sum();
            let mut running = 0.0;
            for m in 1..states.len() {
                let tau = part.steps()[m - 1];
                let w = (&states[m] - &states[m - 1]) / tau;
                let grad = p.gradient(&states[m]).unwrap();
                running += tau * psi.value(&states[m - 1], &w)
                    + tau * psi.conjugate(&states[m - 1], &(-grad));
                let lhs = p.value(&states[m]) + running - p.value(&states[0]);
                assert!(lhs <= rho_plus_total + n as f64 * 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DissipationPotential::constant(1.0, 1.0).is_err());
        assert!(DissipationPotential::constant(2.0, 0.0).is_err());
        let p = quadratic_1d(1.0).unwrap();
        let psi = DissipationPotential::constant(2.0, 1.0).unwrap();
        assert!(matches!(
            gen_euler_step(&p, &psi, &dvector![1.0], -0.5, &s()),
            Err(ExtensionError::NonPositiveStep(_))
        ));
    }
}
