//! Energy ledgers, residual certificates, closed-form scalar oracles, and
//! convergence-rate estimation.

use crate::potentials::{PotentialError, PotentialModel};
use crate::schemes::{de_giorgi_value, DeGiorgiBranch, SchemeKind};
use crate::trajectory::Trajectory;
use crate::Vector;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("direction degenerate: ‖u−v‖ ≤ 1e-14")]
    DegenerateDirection,
    #[error("rate fit degenerate: error spread below 1e-13")]
    DegenerateFit,
    #[error("rate fit needs at least 4 grid points, got {0}")]
    TooFewPoints(usize),
    #[error("rate fit needs a strictly decreasing, positive grid")]
    BadGrid,
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Per-step energy-balance entries.
#[derive(Debug, Clone, Copy)]
pub struct LedgerRow {
    /// δ_i = φ(u_i) + τ_i‖(u_i−u_{i−1})/τ_i‖² − φ(u_{i−1})  (Gonzalez form).
    pub gonzalez_defect: f64,
    /// γ_i = G_i(u_i, u_{i−1})  (De Giorgi form).
    pub de_giorgi_residual: f64,
}

#[derive(Debug, Clone)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
    /// φ(u_m) − φ(u_0) over the available states.
    pub energy_drop: f64,
    /// Σ τ_i ‖(u_i−u_{i−1})/τ_i‖².
    pub dissipation_total: f64,
    /// Σ δ_i (telescoped Gonzalez balance).
    pub gonzalez_total: f64,
    /// Σ γ_i (telescoped De Giorgi balance).
    pub de_giorgi_total: f64,
}

/// Recomputes per-step and telescoped energy balances from the states.
pub fn energy_ledger(
    traj: &Trajectory,
    p: &PotentialModel,
) -> Result<EnergyLedger, DiagnosticsError> {
    check_dim(p, traj.dim())?;
    let states = traj.states();
    let steps = traj.partition().steps();
    let mut rows = Vec::with_capacity(states.len().saturating_sub(1));
    let mut dissipation = 0.0;
    for i in 1..states.len() {
        let tau = steps[i - 1];
        let inc2 = (&states[i] - &states[i - 1]).norm_squared();
        let gonzalez_defect = p.value(&states[i]) + inc2 / tau - p.value(&states[i - 1]);
        let de_giorgi_residual = de_giorgi_value(p, &states[i], &states[i - 1], tau)?;
        dissipation += inc2 / tau;
        rows.push(LedgerRow {
            gonzalez_defect,
            de_giorgi_residual,
        });
    }
    let energy_drop = p.value(states.last().unwrap()) - p.value(&states[0]);
    let gonzalez_total = rows.iter().map(|r| r.gonzalez_defect).sum();
    let de_giorgi_total = rows.iter().map(|r| r.de_giorgi_residual).sum();
    Ok(EnergyLedger {
        rows,
        energy_drop,
        dissipation_total: dissipation,
        gonzalez_total,
        de_giorgi_total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateVerdict {
    /// Residual totals vanish (or provably decay) along the refinement.
    CertifiedTrend,
    /// A single trajectory with non-vanishing totals proves nothing.
    Inconclusive,
}

impl CertificateVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            CertificateVerdict::CertifiedTrend => "CertifiedTrend",
            CertificateVerdict::Inconclusive => "Inconclusive",
        }
    }
}

/// Per-trajectory residual certificate: the positive parts (G_i)⁺, their
/// total, and the Hölder budget Σ L‖Δu_i‖^{1+α}/(1+α).
#[derive(Debug, Clone)]
pub struct Certificate {
    pub per_step_positive_parts: Vec<f64>,
    pub total: f64,
    pub holder_bound: f64,
    pub verdict: CertificateVerdict,
}

/// A single trajectory is certified only when its total is solver-noise
/// clean (≤ N·1e−9); decay can only be judged across a τ-sweep.
const CLEAN_PER_STEP: f64 = 1e-9;

/// Computes (G_i)⁺ for every step of an arbitrary trajectory, whatever
/// produced it.
pub fn certify(traj: &Trajectory, p: &PotentialModel) -> Result<Certificate, DiagnosticsError> {
    check_dim(p, traj.dim())?;
    let states = traj.states();
    let steps = traj.partition().steps();
    let mut parts = Vec::with_capacity(states.len().saturating_sub(1));
    let mut holder_bound = 0.0;
    let holder = p.holder()?;
    for i in 1..states.len() {
        let g = de_giorgi_value(p, &states[i], &states[i - 1], steps[i - 1])?;
        parts.push(g.max(0.0));
        holder_bound += holder.constant
            * (&states[i] - &states[i - 1])
                .norm()
                .powf(1.0 + holder.alpha)
            / (1.0 + holder.alpha);
    }
    let total: f64 = parts.iter().sum();
    let verdict = if total <= CLEAN_PER_STEP * parts.len().max(1) as f64 {
        CertificateVerdict::CertifiedTrend
    } else {
        CertificateVerdict::Inconclusive
    };
    Ok(Certificate {
        per_step_positive_parts: parts,
        total,
        holder_bound,
        verdict,
    })
}

/// Certificate over a τ-sweep: totals must either all be clean or decay with
/// measured order ≥ α − 0.15. Members are ordered coarse → fine;
/// `source_indices[k]` is the position of member k in the input slice.
#[derive(Debug, Clone)]
pub struct SweepCertificate {
    pub finenesses: Vec<f64>,
    pub members: Vec<Certificate>,
    pub source_indices: Vec<usize>,
    pub fitted_order: Option<f64>,
    pub verdict: CertificateVerdict,
}

pub fn certify_sweep(
    trajs: &[Trajectory],
    p: &PotentialModel,
) -> Result<SweepCertificate, DiagnosticsError> {
    let mut indexed: Vec<usize> = (0..trajs.len()).collect();
    indexed.sort_by(|&a, &b| {
        trajs[b]
            .partition()
            .fineness()
            .partial_cmp(&trajs[a].partition().fineness())
            .unwrap()
    });
    let mut finenesses = Vec::new();
    let mut members = Vec::new();
    for &i in &indexed {
        finenesses.push(trajs[i].partition().fineness());
        members.push(certify(&trajs[i], p)?);
    }
    let alpha = p.holder()?.alpha;
    let all_clean = members
        .iter()
        .all(|c| c.verdict == CertificateVerdict::CertifiedTrend);
    let positive: Vec<(f64, f64)> = finenesses
        .iter()
        .zip(&members)
        .filter(|(_, c)| c.total > CLEAN_PER_STEP * c.per_step_positive_parts.len().max(1) as f64)
        .map(|(&tau, c)| (tau, c.total))
        .collect();
    let mut fitted_order = None;
    let verdict = if all_clean {
        CertificateVerdict::CertifiedTrend
    } else if positive.len() >= 4 && positive.len() == members.len() {
        let taus: Vec<f64> = positive.iter().map(|&(t, _)| t).collect();
        let totals: Vec<f64> = positive.iter().map(|&(_, e)| e).collect();
        match estimate_rate(&taus, &totals) {
            Ok(report) => {
                fitted_order = Some(report.slope);
                if report.slope >= alpha - 0.15 {
                    CertificateVerdict::CertifiedTrend
                } else {
                    CertificateVerdict::Inconclusive
                }
            }
            Err(_) => CertificateVerdict::Inconclusive,
        }
    } else {
        CertificateVerdict::Inconclusive
    };
    Ok(SweepCertificate {
        finenesses,
        members,
        source_indices: indexed,
        fitted_order,
        verdict,
    })
}

/// Closed-form scalar sequences for φ(u) = λu²/2 from u_0 = 1 with a uniform
/// step: per-step ratios
/// Euler 1/(1+τλ), Gonzalez (2−τλ)/(2+τλ),
/// root form (1 ∓ (τλ)^{3/2})/(1+τλ+(τλ)²) (Far/Near),
/// variational form 1/(1+τλ+(τλ)²).
pub fn closed_form_sequence(kind: SchemeKind, lambda: f64, tau: f64, n: usize) -> Vec<f64> {
    let x = tau * lambda;
    let ratio = match kind {
        SchemeKind::Euler => 1.0 / (1.0 + x),
        SchemeKind::Gonzalez => (2.0 - x) / (2.0 + x),
        SchemeKind::DeGiorgiRoot(DeGiorgiBranch::Far) => (1.0 - x.powf(1.5)) / (1.0 + x + x * x),
        SchemeKind::DeGiorgiRoot(DeGiorgiBranch::Near) => (1.0 + x.powf(1.5)) / (1.0 + x + x * x),
        SchemeKind::DeGiorgiMin => 1.0 / (1.0 + x + x * x),
    };
    let mut seq = Vec::with_capacity(n + 1);
    let mut value = 1.0;
    seq.push(value);
    for _ in 0..n {
        value *= ratio;
        seq.push(value);
    }
    seq
}

/// Log-log least-squares fit of errors against fineness.
#[derive(Debug, Clone)]
pub struct RateReport {
    pub tau_grid: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub r_squared: f64,
}

/// Ordinary least squares on (log τ, log error).
pub fn estimate_rate(tau_grid: &[f64], errors: &[f64]) -> Result<RateReport, DiagnosticsError> {
    if tau_grid.len() < 4 {
        return Err(DiagnosticsError::TooFewPoints(tau_grid.len()));
    }
    if tau_grid.len() != errors.len() {
        return Err(DiagnosticsError::BadGrid);
    }
    for w in tau_grid.windows(2) {
        if !(w[1] < w[0]) {
            return Err(DiagnosticsError::BadGrid);
        }
    }
    if tau_grid.iter().any(|&t| !(t > 0.0)) || errors.iter().any(|&e| !(e > 0.0) || !e.is_finite())
    {
        return Err(DiagnosticsError::BadGrid);
    }
    let spread = errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - errors.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread < 1e-13 {
        return Err(DiagnosticsError::DegenerateFit);
    }
    let xs: Vec<f64> = tau_grid.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let sxx: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    let slope = sxy / sxx;
    let syy: f64 = ys.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(RateReport {
        tau_grid: tau_grid.to_vec(),
        errors: errors.to_vec(),
        slope,
        r_squared,
    })
}

fn check_dim(p: &PotentialModel, got: usize) -> Result<(), DiagnosticsError> {
    if got != p.dim() {
        return Err(DiagnosticsError::Potential(
            PotentialError::DimensionMismatch {
                name: p.name().to_string(),
                expected: p.dim(),
                got,
            },
        ));
    }
    Ok(())
}

/// Normalized defect of the parallelism between Dφ(u) and u − v:
/// 0 means perfectly parallel, 1 orthogonal.
pub fn alignment_defect(
    p: &PotentialModel,
    u: &Vector,
    v: &Vector,
) -> Result<f64, DiagnosticsError> {
    check_dim(p, u.len())?;
    check_dim(p, v.len())?;
    let delta = u - v;
    let dist = delta.norm();
    if dist <= 1e-14 {
        return Err(DiagnosticsError::DegenerateDirection);
    }
    let grad = p.gradient(u)?;
    let gn = grad.norm();
    if gn == 0.0 {
        return Ok(0.0);
    }
    let w = delta / dist;
    let parallel_part = &w * grad.dot(&w);
    Ok((grad - parallel_part).norm() / gn)
}

/// Residual-acceptance budget L‖u−v‖^{1+α}/(1+α) from the model's stored
/// regularity metadata.
pub fn holder_tolerance(p: &PotentialModel, u: &Vector, v: &Vector) -> Result<f64, PotentialError> {
    if u.len() != p.dim() || v.len() != p.dim() {
        return Err(PotentialError::DimensionMismatch {
            name: p.name().to_string(),
            expected: p.dim(),
            got: u.len().max(v.len()),
        });
    }
    let h = p.holder()?;
    Ok(h.constant * (u - v).norm().powf(1.0 + h.alpha) / (1.0 + h.alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::Partition;
    use crate::potentials::{aniso_quadratic_2d, logistic_nonconvex, quadratic_1d};
    use crate::schemes::{gonzalez_step, run_scheme};
    use crate::solvers::SolverSettings;
    use crate::Vector;
    use nalgebra::dvector;

    fn s() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn ledger_gonzalez_defects_vanish() {
        let p = quadratic_1d(1.0).unwrap();
        let part = Partition::uniform(2.0, 8).unwrap();
        let tr = run_scheme(SchemeKind::Gonzalez, &p, &dvector![1.0], &part, &s()).unwrap();
        let ledger = energy_ledger(&tr, &p).unwrap();
        for row in &ledger.rows {
            assert!(row.gonzalez_defect.abs() <= 1e-9);
        }
        // Telescoped: energy drop + dissipation cancel.
        assert!((ledger.energy_drop + ledger.dissipation_total).abs() <= 1e-9);
    }

    #[test]
    fn ledger_euler_residual_value() {
        let p = quadratic_1d(1.0).unwrap();
        let part = Partition::uniform(0.5, 1).unwrap();
        let tr = run_scheme(SchemeKind::Euler, &p, &dvector![1.0], &part, &s()).unwrap();
        let ledger = energy_ledger(&tr, &p).unwrap();
        // γ₁ = G(2/3, 1) = 2/9 + 1/9 + 1/9 − 1/2 = −1/18.
        assert!((ledger.rows[0].de_giorgi_residual + 1.0 / 18.0).abs() < 1e-14);
    }

    #[test]
    fn ledger_constant_stationary_trajectory() {
        let p = quadratic_1d(1.0).unwrap();
        let part = Partition::uniform(1.0, 4).unwrap();
        let tr = Trajectory::from_states(part, vec![dvector![0.0]; 5]).unwrap();
        let ledger = energy_ledger(&tr, &p).unwrap();
        for row in &ledger.rows {
            assert_eq!(row.gonzalez_defect, 0.0);
            assert_eq!(row.de_giorgi_residual, 0.0);
        }
    }

    #[test]
    fn certify_exact_roots_is_clean() {
        let p = quadratic_1d(1.0).unwrap();
        let part = Partition::uniform(1.0, 16).unwrap();
        let tr = run_scheme(
            SchemeKind::DeGiorgiRoot(DeGiorgiBranch::Far),
            &p,
            &dvector![1.0],
            &part,
            &s(),
        )
        .unwrap();
        let cert = certify(&tr, &p).unwrap();
        assert!(cert.total <= 16.0 * 1e-9);
        assert_eq!(cert.verdict, CertificateVerdict::CertifiedTrend);
    }

    #[test]
    fn certify_frozen_trajectory_inconclusive() {
        let p = quadratic_1d(1.0).unwrap();
        let part = Partition::uniform(1.0, 8).unwrap();
        let tr = Trajectory::from_states(part, vec![dvector![1.0]; 9]).unwrap();
        let cert = certify(&tr, &p).unwrap();
        // G_i(v, v) = (τ_i/2)‖Dφ(v)‖², so the total telescopes to
        // (T/2)‖Dφ(u0)‖².
        assert!((cert.total - 0.5).abs() <= 1e-12);
        assert_eq!(cert.verdict, CertificateVerdict::Inconclusive);
    }

    #[test]
    fn certify_euler_on_quadratic_has_zero_positive_parts() {
        // Euler residuals on the scalar quadratic are negative:
        // G = −(λv²/2)(τλ)²/(1+τλ)² < 0, so the certificate is clean.
        let p = quadratic_1d(1.0).unwrap();
        for n in [8usize, 16, 32] {
            let part = Partition::uniform(1.0, n).unwrap();
            let tr = run_scheme(SchemeKind::Euler, &p, &dvector![1.0], &part, &s()).unwrap();
            let cert = certify(&tr, &p).unwrap();
            assert_eq!(cert.total, 0.0);
            assert_eq!(cert.verdict, CertificateVerdict::CertifiedTrend);
        }
    }

    #[test]
    fn certify_sweep_euler_logistic_first_order() {
        // On the logistic from u0 = 0 every Euler step carries the positive
        // residual τ²(2v−1)²/(1−2τ)², so totals decay at order α = 1.
        let p = logistic_nonconvex();
        let trajs: Vec<Trajectory> = (3..=10)
            .map(|k| {
                let part = Partition::uniform(1.0, 1 << k).unwrap();
                run_scheme(SchemeKind::Euler, &p, &dvector![0.0], &part, &s()).unwrap()
            })
            .collect();
        let sweep = certify_sweep(&trajs, &p).unwrap();
        let order = sweep.fitted_order.expect("positive totals");
        assert!((order - 1.0).abs() <= 0.2, "order {order}");
        assert_eq!(sweep.verdict, CertificateVerdict::CertifiedTrend);
    }

    #[test]
    fn certificate_total_within_holder_budget() {
        // Library-produced trajectories never overshoot the summed
        // residual-acceptance budget.
        let catalog = [
            quadratic_1d(1.0).unwrap(),
            aniso_quadratic_2d(),
            logistic_nonconvex(),
        ];
        let kinds = [
            SchemeKind::Euler,
            SchemeKind::Gonzalez,
            SchemeKind::DeGiorgiRoot(DeGiorgiBranch::Near),
            SchemeKind::DeGiorgiRoot(DeGiorgiBranch::Far),
            SchemeKind::DeGiorgiMin,
        ];
        for p in &catalog {
            let u0 = if p.name() == "logistic" {
                dvector![0.0]
            } else {
                Vector::from_element(p.dim(), 1.0)
            };
            for n in [8usize, 32] {
                let part = Partition::uniform(2.0, n).unwrap();
                for kind in kinds {
                    // Off the convex catalog only the Euler and root-form
                    // steps bound their residual by the Hölder budget at
                    // their own increments.
                    if !p.is_convex()
                        && !matches!(kind, SchemeKind::Euler | SchemeKind::DeGiorgiRoot(_))
                    {
                        continue;
                    }
                    let tr = run_scheme(kind, p, &u0, &part, &s()).unwrap();
                    let cert = certify(&tr, p).unwrap();
                    assert!(
                        cert.total <= cert.holder_bound + n as f64 * 1e-9,
                        "{} on {}: total {} vs budget {}",
                        kind.as_str(),
                        p.name(),
                        cert.total,
                        cert.holder_bound
                    );
                }
            }
        }
    }

    #[test]
    fn closed_forms_match_stated_values() {
        let e = closed_form_sequence(SchemeKind::Euler, 1.0, 0.5, 1);
        assert!((e[1] - 2.0 / 3.0).abs() < 1e-15);
        let g = closed_form_sequence(SchemeKind::Gonzalez, 1.0, 5.0, 1);
        assert!((g[1] + 3.0 / 7.0).abs() < 1e-15);
        let far = closed_form_sequence(SchemeKind::DeGiorgiRoot(DeGiorgiBranch::Far), 1.0, 1.0, 1);
        assert_eq!(far[1], 0.0);
        let near =
            closed_form_sequence(SchemeKind::DeGiorgiRoot(DeGiorgiBranch::Near), 1.0, 0.5, 1);
        assert!((near[1] - 0.7734590803390136).abs() < 1e-15);
        let m = closed_form_sequence(SchemeKind::DeGiorgiMin, 1.0, 0.5, 2);
        assert!((m[2] - 1.0 / (1.75 * 1.75)).abs() < 1e-15);
    }

    #[test]
    fn estimate_rate_recovers_planted_power_laws() {
        let taus: Vec<f64> = (0..6).map(|k| 0.5f64.powi(k)).collect();
        for order in [0.5, 1.0, 2.0] {
            let errs: Vec<f64> = taus.iter().map(|t| 3.7 * t.powf(order)).collect();
            let rep = estimate_rate(&taus, &errs).unwrap();
            assert!((rep.slope - order).abs() <= 1e-10);
            assert!((rep.r_squared - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn estimate_rate_degenerate_and_invalid() {
        let taus: Vec<f64> = (0..5).map(|k| 0.5f64.powi(k)).collect();
        let flat = vec![2.0; 5];
        assert!(matches!(
            estimate_rate(&taus, &flat),
            Err(DiagnosticsError::DegenerateFit)
        ));
        assert!(matches!(
            estimate_rate(&taus[..3], &flat[..3]),
            Err(DiagnosticsError::TooFewPoints(3))
        ));
        let bad = vec![1.0, 0.5, 0.25, -0.1, 0.1];
        assert!(estimate_rate(&taus, &bad).is_err());
    }

    #[test]
    fn alignment_defect_cases() {
        let p1 = quadratic_1d(1.0).unwrap();
        // One dimension: always parallel.
        assert_eq!(
            alignment_defect(&p1, &dvector![0.7], &dvector![1.0]).unwrap(),
            0.0
        );
        // Orthogonal gradient in 2-D: defect 1. At u = (0,1) the aniso
        // gradient is (0, 0.5); pick v so u − v = (1, 0).
        let p2 = aniso_quadratic_2d();
        let d = alignment_defect(&p2, &dvector![0.0, 1.0], &dvector![-1.0, 1.0]).unwrap();
        assert!((d - 1.0).abs() < 1e-14);
        // Gonzalez output is aligned by construction.
        let (u, _) = gonzalez_step(&p2, &dvector![1.0, 1.0], 0.25, &s()).unwrap();
        assert!(alignment_defect(&p2, &u, &dvector![1.0, 1.0]).unwrap() <= 1e-8);
        // Degenerate direction refused.
        assert!(matches!(
            alignment_defect(&p1, &dvector![1.0], &dvector![1.0]),
            Err(DiagnosticsError::DegenerateDirection)
        ));
    }

    #[test]
    fn dimension_mismatch_is_an_error_not_a_panic() {
        let quad = quadratic_1d(1.0).unwrap();
        let part = Partition::uniform(1.0, 2).unwrap();
        let traj2d = Trajectory::from_states(part, vec![dvector![1.0, 1.0]; 3]).unwrap();
        assert!(certify(&traj2d, &quad).is_err());
        assert!(energy_ledger(&traj2d, &quad).is_err());
        assert!(alignment_defect(&quad, &dvector![1.0, 0.0], &dvector![0.0, 0.0]).is_err());
        assert!(holder_tolerance(&quad, &dvector![1.0, 0.0], &dvector![0.0, 0.0]).is_err());
    }

    #[test]
    fn holder_tolerance_values() {
        let quad = quadratic_1d(1.0).unwrap();
        let zero = holder_tolerance(&quad, &dvector![1.0], &dvector![1.0]).unwrap();
        assert_eq!(zero, 0.0);
        let logi = logistic_nonconvex();
        let t = holder_tolerance(&logi, &dvector![0.1], &dvector![0.0]).unwrap();
        assert!((t - 0.01).abs() < 1e-15);
        // For the quadratic the bound is tight: it equals |γ₁| of the Euler
        // step with increment 1/3.
        let t2 = holder_tolerance(&quad, &dvector![2.0 / 3.0], &dvector![1.0]).unwrap();
        assert!((t2 - 1.0 / 18.0).abs() < 1e-14);
    }
}
