//! Nonlinear solvers shared by every scheme: damped Newton for square
//! systems, Brent root bracketing, smooth minimization, proximal stepping.

use crate::potentials::{PotentialError, PotentialModel};
use crate::{Matrix, Vector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(
        "Jacobian numerically singular (pivot {pivot:.3e} below 1e-14 of row scale {scale:.3e})"
    )]
    SingularJacobian { pivot: f64, scale: f64 },
    #[error("no convergence within {0} iterations")]
    MaxIterations(usize),
    #[error("bracket endpoints do not straddle a root")]
    NoSignChange,
    #[error("objective diverges below -1e12")]
    Diverging,
    #[error("solver inputs unusable: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Model(#[from] PotentialError),
}

/// Shared solver knobs. Inner solves run at 1e−12 so that the 1e−9
/// scheme-level identity checks never see solver noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol_residual: f64,
    pub max_iterations: usize,
    pub backtracking_factor: f64,
    pub fd_step: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_residual: 1e-12,
            max_iterations: 100,
            backtracking_factor: 0.5,
            fd_step: 1e-7,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tol_residual > 0.0) {
            return Err(SolverError::Unsupported(format!(
                "tol_residual must be positive, got {}",
                self.tol_residual
            )));
        }
        if self.max_iterations == 0 {
            return Err(SolverError::Unsupported(
                "max_iterations must be ≥ 1".into(),
            ));
        }
        if !(self.backtracking_factor > 0.0 && self.backtracking_factor < 1.0) {
            return Err(SolverError::Unsupported(format!(
                "backtracking_factor must lie in (0,1), got {}",
                self.backtracking_factor
            )));
        }
        Ok(())
    }
}

/// Dense Gaussian elimination with scaled partial pivoting; the pivot
/// threshold implements the singularity test directly.
pub(crate) fn solve_dense(mut a: Matrix, mut b: Vector) -> Result<Vector, SolverError> {
    let n = b.len();
    let scales: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].abs()).fold(0.0, f64::max))
        .collect();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let (mut best_row, mut best_mag) = (col, -1.0);
        for row in col..n {
            let scale = scales[perm[row]].max(f64::MIN_POSITIVE);
            let mag = a[(perm[row], col)].abs() / scale;
            if mag > best_mag {
                best_mag = mag;
                best_row = row;
            }
        }
        perm.swap(col, best_row);
        let p = perm[col];
        let pivot = a[(p, col)];
        let scale = scales[p].max(f64::MIN_POSITIVE);
        if !pivot.is_finite() || pivot.abs() <= 1e-14 * scale {
            return Err(SolverError::SingularJacobian {
                pivot: pivot.abs(),
                scale,
            });
        }
        for &r in perm.iter().take(n).skip(col + 1) {
            let factor = a[(r, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[(r, j)] -= factor * a[(p, j)];
            }
            b[r] -= factor * b[p];
        }
    }
    let mut x = Vector::zeros(n);
    for col in (0..n).rev() {
        let p = perm[col];
        let mut sum = b[p];
        for j in col + 1..n {
            sum -= a[(p, j)] * x[j];
        }
        x[col] = sum / a[(p, col)];
    }
    Ok(x)
}

/// Forward-difference Jacobian with per-column step fd_step·(1+|x_j|).
pub fn fd_jacobian(f: &dyn Fn(&Vector) -> Vector, x: &Vector, fx: &Vector, fd_step: f64) -> Matrix {
    let n = x.len();
    let m = fx.len();
    let mut jac = Matrix::zeros(m, n);
    for j in 0..n {
        let h = fd_step * (1.0 + x[j].abs());
        let mut xp = x.clone();
        xp[j] += h;
        let fp = f(&xp);
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fx[i]) / h;
        }
    }
    jac
}

/// Fourth-order central-difference gradient, for objectives whose analytic
/// gradient is impractical (penalized GENERIC residual, metric objectives).
pub fn fd_gradient(f: &dyn Fn(&Vector) -> f64, x: &Vector, h_scale: f64) -> Vector {
    Vector::from_fn(x.len(), |j, _| {
        let h = h_scale * (1.0 + x[j].abs());
        let eval = |delta: f64| {
            let mut xs = x.clone();
            xs[j] += delta;
            f(&xs)
        };
        (eval(-2.0 * h) - 8.0 * eval(-h) + 8.0 * eval(h) - eval(2.0 * h)) / (12.0 * h)
    })
}

/// Symmetrized central-difference Jacobian of a gradient callback.
pub fn fd_hessian_of_gradient(
    grad: &dyn Fn(&Vector) -> Vector,
    x: &Vector,
    h_scale: f64,
) -> Matrix {
    let n = x.len();
    let mut h_mat = Matrix::zeros(n, n);
    for j in 0..n {
        let h = h_scale * (1.0 + x[j].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (grad(&xp) - grad(&xm)) / (2.0 * h);
        for i in 0..n {
            h_mat[(i, j)] = col[i];
        }
    }
    // Symmetrize; FD noise breaks exact symmetry.
    let t = h_mat.transpose();
    (h_mat + t) * 0.5
}

/// Damped Newton for F(x) = 0. Full steps are halved whenever they fail to
/// reduce ‖F‖; the Jacobian is finite-differenced when not supplied.
pub fn newton_solve(
    f: &dyn Fn(&Vector) -> Vector,
    jacobian: Option<&dyn Fn(&Vector) -> Matrix>,
    x0: &Vector,
    settings: &SolverSettings,
) -> Result<(Vector, usize), SolverError> {
    let mut x = x0.clone();
    let mut fx = f(&x);
    let mut norm = fx.norm();
    if !norm.is_finite() {
        return Err(SolverError::Unsupported(
            "residual not finite at the initial guess".into(),
        ));
    }
    for it in 0..settings.max_iterations {
        if norm <= settings.tol_residual {
            return Ok((x, it));
        }
        let jac = match jacobian {
            Some(j) => j(&x),
            None => fd_jacobian(f, &x, &fx, settings.fd_step),
        };
        let delta = solve_dense(jac, -&fx)?;
        let mut t = 1.0;
        loop {
            let xt = &x + &delta * t;
            let ft = f(&xt);
            let nt = ft.norm();
            if nt.is_finite() && nt < norm {
                x = xt;
                fx = ft;
                norm = nt;
                break;
            }
            t *= settings.backtracking_factor;
            if t < 1e-12 {
                // Even infinitesimal damping cannot reduce the residual.
                return Err(SolverError::MaxIterations(it + 1));
            }
        }
    }
    if norm <= settings.tol_residual {
        Ok((x, settings.max_iterations))
    } else {
        Err(SolverError::MaxIterations(settings.max_iterations))
    }
}

/// Brent's method on a bracketing interval: inverse quadratic / secant steps
/// with a bisection fallback. Returns once |g| ≤ tol_residual or the bracket
/// shrinks below 1e−14·(1+|x|). Never leaves the initial bracket.
pub fn brent_root(
    g: &dyn Fn(f64) -> f64,
    a0: f64,
    b0: f64,
    settings: &SolverSettings,
) -> Result<f64, SolverError> {
    let (mut a, mut b) = (a0, b0);
    let (mut fa, mut fb) = (g(a), g(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(SolverError::NoSignChange);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = b - a;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 1e-14 * (1.0 + b.abs());
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 || fb.abs() <= settings.tol_residual {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // Inverse quadratic interpolation (secant when a == c).
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * xm * s, 1.0 - s)
            } else {
                let q = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0)),
                    (q - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q.abs() - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = g(b);
    }
    Ok(b)
}

/// Unconstrained smooth minimization: Newton-on-the-gradient with Armijo
/// backtracking when a Hessian callback exists, otherwise gradient descent
/// with backtracking. Stops at ‖g(x)‖ ≤ tol·(1+|f(x)|).
pub fn minimize_smooth(
    f: &dyn Fn(&Vector) -> f64,
    grad: &dyn Fn(&Vector) -> Vector,
    hessian: Option<&dyn Fn(&Vector) -> Matrix>,
    x0: &Vector,
    settings: &SolverSettings,
) -> Result<(Vector, usize), SolverError> {
    const ARMIJO: f64 = 1e-4;
    let mut x = x0.clone();
    let mut fx = f(&x);
    let mut step_carry = 1.0;
    for it in 0..settings.max_iterations {
        if fx < -1e12 {
            return Err(SolverError::Diverging);
        }
        let g = grad(&x);
        let gn = g.norm();
        if !gn.is_finite() {
            return Err(SolverError::Unsupported("gradient not finite".into()));
        }
        if gn <= settings.tol_residual * (1.0 + fx.abs()) {
            return Ok((x, it));
        }
        let (mut dir, newton_like) = match hessian {
            Some(h) => match solve_dense(h(&x), -&g) {
                Ok(d) => (d, true),
                Err(_) => (-&g, false),
            },
            None => (-&g, false),
        };
        let mut slope = dir.dot(&g);
        if slope >= 0.0 {
            // Not a descent direction (indefinite Hessian); fall back.
            dir = -&g;
            slope = -gn * gn;
        }
        let mut t = if newton_like { 1.0 } else { step_carry };
        let mut accepted = false;
        for _ in 0..60 {
            let xt = &x + &dir * t;
            let ft = f(&xt);
            if ft.is_finite() && ft <= fx + ARMIJO * t * slope {
                x = xt;
                fx = ft;
                accepted = true;
                break;
            }
            // Terminal Newton phase: once f-decreases drop below machine
            // noise, Armijo rejects even quadratic-convergence steps. Accept
            // on a plain gradient-norm reduction instead.
            if newton_like && ft.is_finite() && ft <= fx + 1e-12 * (1.0 + fx.abs()) {
                let gt = grad(&xt);
                if gt.norm() <= 0.9 * gn {
                    x = xt;
                    fx = ft;
                    accepted = true;
                    break;
                }
            }
            t *= settings.backtracking_factor;
        }
        if !accepted {
            return Err(SolverError::MaxIterations(it + 1));
        }
        if !newton_like {
            // Carry a doubled step so plain descent does not crawl.
            step_carry = (t * 2.0).min(1e6);
        }
    }
    let g = grad(&x);
    if g.norm() <= settings.tol_residual * (1.0 + fx.abs()) {
        Ok((x, settings.max_iterations))
    } else {
        Err(SolverError::MaxIterations(settings.max_iterations))
    }
}

/// Proximal step argmin_u { φ(u) + ‖u−v‖²/(2τ) }: closed form when the model
/// carries one, Newton-on-the-gradient otherwise.
pub fn prox_step(
    p: &PotentialModel,
    v: &Vector,
    tau: f64,
    settings: &SolverSettings,
) -> Result<(Vector, usize), SolverError> {
    if !(tau > 0.0) {
        return Err(SolverError::Unsupported(format!(
            "prox step requires τ > 0, got {tau}"
        )));
    }
    if v.len() != p.dim() {
        return Err(SolverError::Model(PotentialError::DimensionMismatch {
            name: p.name().to_string(),
            expected: p.dim(),
            got: v.len(),
        }));
    }
    if let Some(out) = p.closed_prox(v, tau) {
        return Ok((out?, 0));
    }
    if !p.has_gradient() {
        return Err(SolverError::Model(PotentialError::GradientUnavailable(
            p.name().to_string(),
        )));
    }
    let f = |u: &Vector| p.value(u) + (u - v).norm_squared() / (2.0 * tau);
    let g = |u: &Vector| p.gradient(u).expect("gradient availability checked") + (u - v) / tau;
    let has_hessian = p.has_hessian();
    let h = |u: &Vector| {
        let mut m = p.hessian(u).expect("hessian availability checked");
        for i in 0..m.nrows() {
            m[(i, i)] += 1.0 / tau;
        }
        m
    };
    minimize_smooth(
        &f,
        &g,
        if has_hessian {
            Some(&h as &dyn Fn(&Vector) -> Matrix)
        } else {
            None
        },
        v,
        settings,
    )
}
