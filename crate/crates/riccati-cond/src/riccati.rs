//! Stabilizing solvers for the reduced symmetric Riccati equations
//!
//! CARE: `Q + A^H X + X A - X G X = 0`, closed loop `A - G X` c-stable.
//! DARE: `Y - A^H Y (I + G Y)^{-1} A - Q = 0`, closed loop `(I + G Y)^{-1} A`
//! d-stable.
//!
//! The CARE path takes the stable invariant subspace of the Hamiltonian
//! `[[A, -G], [-Q, -A^H]]` from a reordered complex Schur form and polishes
//! with Newton-Kleinman steps. The DARE path runs the structure-preserving
//! doubling iteration and polishes with Newton steps through the Stein
//! solver.

use crate::error::{Error, Result};
use crate::lyapunov::{solve_continuous_lyapunov, solve_discrete_lyapunov};
use crate::matrix::{hermitize, CMat, Cpx, RMat};
use crate::schur::{complex_schur, reorder_schur};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RiccatiKind {
    Care,
    Dare,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarField {
    Real,
    Complex,
}

#[derive(Clone, Debug)]
pub struct RiccatiProblem {
    pub kind: RiccatiKind,
    pub field: ScalarField,
    pub a: CMat,
    pub g: CMat,
    pub q: CMat,
}

#[derive(Clone, Debug)]
pub struct RiccatiSolution {
    /// Hermitian p.s.d. stabilizing solution (`X` for CARE, `Y` for DARE).
    pub solution: CMat,
    /// Frobenius norm of the equation defect at the returned solution.
    pub residual: f64,
    /// `A - G X` for CARE, `(I + G Y)^{-1} A` for DARE.
    pub closed_loop: CMat,
    /// CARE: `-max Re lambda(closed_loop)`; DARE: `1 - rho(closed_loop)`.
    pub stability_margin: f64,
}

const HERM_TOL: f64 = 1e-12;
const PSD_CLIP: f64 = 1e-10;

impl RiccatiProblem {
    /// Validated constructor: `G`, `Q` Hermitian p.s.d. within tolerance, and
    /// purely real data when `field` is `Real`.
    pub fn new(kind: RiccatiKind, field: ScalarField, a: CMat, g: CMat, q: CMat) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || g.shape() != (n, n) || q.shape() != (n, n) {
            return Err(Error::dims(
                format!("three {n}x{n} matrices"),
                format!("{:?}, {:?}, {:?}", a.shape(), g.shape(), q.shape()),
            ));
        }
        for (name, m) in [("G", &g), ("Q", &q)] {
            let defect = (m - m.adjoint()).norm();
            if defect > HERM_TOL * m.norm().max(1.0) {
                return Err(Error::NotHermitian { defect });
            }
            let eig = hermitize(m).symmetric_eigen();
            let min_eig = eig.eigenvalues.min();
            let max_eig = eig.eigenvalues.amax();
            if min_eig < -HERM_TOL * max_eig.max(1.0) {
                return Err(Error::NotPositiveSemidefinite { min_eig });
            }
            let _ = name;
        }
        if field == ScalarField::Real {
            let has_imag = [&a, &g, &q].iter().any(|m| m.iter().any(|z| z.im != 0.0));
            if has_imag {
                return Err(Error::NotReal);
            }
        }
        Ok(RiccatiProblem { kind, field, a, g, q })
    }

    /// Constructor that skips the Hermitian/definiteness validation. Meant
    /// for perturbed re-solves where `G + dG` may be slightly indefinite.
    pub fn new_unchecked(kind: RiccatiKind, field: ScalarField, a: CMat, g: CMat, q: CMat) -> Self {
        RiccatiProblem { kind, field, a, g, q }
    }

    pub fn new_care_real(a: RMat, g: RMat, q: RMat) -> Result<Self> {
        Self::new(
            RiccatiKind::Care,
            ScalarField::Real,
            crate::matrix::to_complex(&a),
            crate::matrix::to_complex(&g),
            crate::matrix::to_complex(&q),
        )
    }

    pub fn new_dare_real(a: RMat, g: RMat, q: RMat) -> Result<Self> {
        Self::new(
            RiccatiKind::Dare,
            ScalarField::Real,
            crate::matrix::to_complex(&a),
            crate::matrix::to_complex(&g),
            crate::matrix::to_complex(&q),
        )
    }

    /// Reduce the factored continuous form with `G = B R^{-1} B^H`.
    pub fn care_from_factors(a: CMat, b: CMat, r: CMat, q: CMat) -> Result<Self> {
        let g = factor_to_g(&b, &r)?;
        let field = detect_field(&a, &g, &q);
        Self::new(RiccatiKind::Care, field, a, g, q)
    }

    /// Reduce the factored discrete form with `G = B R^{-1} B^H`, `Q = C^H C`.
    pub fn dare_from_factors(a: CMat, b: CMat, r: CMat, c: CMat) -> Result<Self> {
        let g = factor_to_g(&b, &r)?;
        let q = c.adjoint() * &c;
        let field = detect_field(&a, &g, &q);
        Self::new(RiccatiKind::Dare, field, a, g, q)
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Real-part views for real-field problems.
    pub fn real_parts(&self) -> (RMat, RMat, RMat) {
        (
            crate::matrix::re_part(&self.a),
            crate::matrix::re_part(&self.g),
            crate::matrix::re_part(&self.q),
        )
    }
}

fn factor_to_g(b: &CMat, r: &CMat) -> Result<CMat> {
    let lu = r.clone().lu();
    let rinv_bh = lu.solve(&b.adjoint()).ok_or(Error::SingularMatrix { context: "R".into() })?;
    Ok(hermitize(&(b * rinv_bh)))
}

fn detect_field(a: &CMat, g: &CMat, q: &CMat) -> ScalarField {
    if [a, g, q].iter().all(|m| m.iter().all(|z| z.im == 0.0)) {
        ScalarField::Real
    } else {
        ScalarField::Complex
    }
}

/// Frobenius norm of `Q + A^H X + X A - X G X`.
pub fn care_residual(problem: &RiccatiProblem, x: &CMat) -> Result<f64> {
    let n = problem.order();
    if x.shape() != (n, n) {
        return Err(Error::dims(format!("{n}x{n}"), format!("{:?}", x.shape())));
    }
    let defect = &problem.q + problem.a.adjoint() * x + x * &problem.a - x * &problem.g * x;
    Ok(defect.norm())
}

/// Frobenius norm of `Y - A^H Y (I + G Y)^{-1} A - Q`.
pub fn dare_residual(problem: &RiccatiProblem, y: &CMat) -> Result<f64> {
    let n = problem.order();
    if y.shape() != (n, n) {
        return Err(Error::dims(format!("{n}x{n}"), format!("{:?}", y.shape())));
    }
    let w = inverse_of_i_plus_gy(&problem.g, y)?;
    let defect = y - problem.a.adjoint() * y * w * &problem.a - &problem.q;
    Ok(defect.norm())
}

/// `(I + G Y)^{-1}`, the DARE feedback factor.
pub fn inverse_of_i_plus_gy(g: &CMat, y: &CMat) -> Result<CMat> {
    let n = g.nrows();
    let m = CMat::identity(n, n) + g * y;
    m.lu().try_inverse().ok_or(Error::SingularMatrix { context: "I + G Y".into() })
}

fn care_residual_scale(problem: &RiccatiProblem, x: &CMat) -> f64 {
    let xn = x.norm();
    (problem.q.norm() + problem.a.norm() * xn + problem.g.norm() * xn * xn).max(1.0)
}

fn spectral_abscissa(m: &CMat) -> Result<f64> {
    Ok(complex_schur(m)?
        .eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

fn spectral_radius(m: &CMat) -> Result<f64> {
    Ok(complex_schur(m)?.eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max))
}

/// Clip slightly negative eigenvalues to zero; reject anything below the
/// tolerance as a solver failure rather than masking it. The tolerance is
/// adaptive: a closed loop with a thin stability margin caps the accuracy any
/// backward-stable solver can reach in the small eigenvalues, so the window
/// widens from the baseline `PSD_CLIP` accordingly (never beyond `1e-6`).
fn psd_clip_tolerance(normalized_margin: f64) -> f64 {
    let floor = 100.0 * f64::EPSILON / normalized_margin.max(f64::MIN_POSITIVE);
    PSD_CLIP.max(floor).min(1e-6)
}

fn enforce_psd(x: &CMat, rel_clip: f64) -> Result<CMat> {
    let herm = hermitize(x);
    let eig = herm.clone().symmetric_eigen();
    let max_abs = eig.eigenvalues.amax();
    let min_eig = eig.eigenvalues.min();
    if min_eig >= 0.0 {
        return Ok(herm);
    }
    if !(min_eig >= -rel_clip * max_abs.max(f64::MIN_POSITIVE)) {
        return Err(Error::NotPositiveSemidefinite { min_eig });
    }
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let qmat = &eig.eigenvectors;
    let rebuilt = qmat * CMat::from_diagonal(&vals.map(|v| Cpx::new(v, 0.0))) * qmat.adjoint();
    Ok(hermitize(&rebuilt))
}

fn realify_if_real(problem: &RiccatiProblem, m: &CMat) -> Result<CMat> {
    if problem.field != ScalarField::Real {
        return Ok(m.clone());
    }
    let imag_norm = m.map(|z| z.im).norm();
    if imag_norm > 1e-12 * m.norm().max(1.0) {
        return Err(Error::ConvergenceFailure {
            context: format!("real problem produced imaginary residue {imag_norm:.3e}"),
        });
    }
    Ok(m.map(|z| Cpx::new(z.re, 0.0)))
}

/// One or more Newton-Kleinman steps from a stabilizing iterate: solve
/// `(A - G X_k)^H E + E (A - G X_k) = -R(X_k)` and update `X_{k+1} = X_k + E`.
/// Returns the iterate with the smallest residual seen.
pub(crate) fn newton_refine_care(problem: &RiccatiProblem, x0: &CMat, max_steps: usize) -> Result<CMat> {
    let mut x = hermitize(x0);
    let mut best = x.clone();
    let mut best_res = care_residual(problem, &x)?;
    for _ in 0..max_steps {
        let closed = &problem.a - &problem.g * &x;
        let defect = &problem.q + problem.a.adjoint() * &x + &x * &problem.a - &x * &problem.g * &x;
        let rhs = hermitize(&(-&defect));
        let step = match solve_continuous_lyapunov(&closed, &rhs) {
            Ok(rep) => rep.solution,
            Err(Error::SingularOperator { .. }) => {
                return Err(Error::NoStabilizingSolution {
                    context: "Newton iterate lost stabilization".into(),
                })
            }
            Err(e) => return Err(e),
        };
        x = hermitize(&(&x + &step));
        let res = care_residual(problem, &x)?;
        if res < best_res {
            best_res = res;
            best = x.clone();
        }
        if step.norm() <= 1e-15 * x.norm().max(1.0) {
            break;
        }
    }
    Ok(best)
}

/// Solve the CARE for its Hermitian p.s.d. stabilizing solution.
pub fn solve_care(problem: &RiccatiProblem) -> Result<RiccatiSolution> {
    if problem.kind != RiccatiKind::Care {
        return Err(Error::InvalidArgument("solve_care requires a CARE problem".into()));
    }
    let n = problem.order();
    let mut h = CMat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&problem.a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&problem.g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&problem.q));
    h.view_mut((n, n), (n, n)).copy_from(&(-problem.a.adjoint()));

    let mut schur = complex_schur(&h)?;
    let stable = reorder_schur(&mut schur, |lam| lam.re < 0.0);
    if stable != n {
        return Err(Error::NoStabilizingSolution {
            context: format!("Hamiltonian has {stable} stable eigenvalues, expected {n}"),
        });
    }
    let basis = schur.q.columns(0, n);
    let u1 = basis.rows(0, n).clone_owned();
    let u2 = basis.rows(n, n).clone_owned();
    // X = U2 U1^{-1}  via  U1^T X^T = U2^T
    let xt = u1.transpose().lu().solve(&u2.transpose()).ok_or(Error::NoStabilizingSolution {
        context: "stable subspace basis is singular".into(),
    })?;
    let x = hermitize(&xt.transpose());

    let x = newton_refine_care(problem, &x, 8)?;
    let pre_closed = &problem.a - &problem.g * &x;
    let pre_margin = -spectral_abscissa(&pre_closed)?;
    if !(pre_margin > 0.0) {
        return Err(Error::NoStabilizingSolution {
            context: format!("closed loop abscissa {:.3e} is not negative", -pre_margin),
        });
    }
    let x = enforce_psd(&x, psd_clip_tolerance(pre_margin / (1.0 + pre_closed.norm())))?;
    let x = realify_if_real(problem, &x)?;

    let closed_loop = &problem.a - &problem.g * &x;
    let margin = -spectral_abscissa(&closed_loop)?;
    if !(margin > 0.0) {
        return Err(Error::NoStabilizingSolution {
            context: format!("closed loop abscissa {:.3e} is not negative", -margin),
        });
    }
    let residual = care_residual(problem, &x)?;
    if !(residual <= 1e-10 * care_residual_scale(problem, &x)) {
        return Err(Error::ConvergenceFailure {
            context: format!("CARE residual {residual:.3e} above tolerance"),
        });
    }
    Ok(RiccatiSolution { solution: x, residual, closed_loop, stability_margin: margin })
}

/// Solve the DARE for its Hermitian p.s.d. stabilizing solution.
pub fn solve_dare(problem: &RiccatiProblem) -> Result<RiccatiSolution> {
    if problem.kind != RiccatiKind::Dare {
        return Err(Error::InvalidArgument("solve_dare requires a DARE problem".into()));
    }
    let n = problem.order();
    let eye = CMat::identity(n, n);

    // structure-preserving doubling iteration; the reliable convergence
    // indicator is |A_k| -> 0 (the H-step can stall early while the closed
    // loop is barely contractive)
    let a0_norm = problem.a.norm();
    let mut ak = problem.a.clone();
    let mut gk = problem.g.clone();
    let mut hk = problem.q.clone();
    let mut doubling_ok = false;
    let mut prev_ak_norm = f64::INFINITY;
    for _ in 0..100 {
        let m = match (&eye + &gk * &hk).lu().try_inverse() {
            Some(inv) => inv,
            None => break, // fall through to the fixed-point path
        };
        let an = &ak * &m * &ak;
        let gn = &gk + &ak * &m * &gk * ak.adjoint();
        let hn = hermitize(&(&hk + ak.adjoint() * &hk * &m * &ak));
        ak = an;
        gk = hermitize(&gn);
        hk = hn;
        let ak_norm = ak.norm();
        if !ak_norm.is_finite() || !hk.norm().is_finite() {
            break; // divergent: not d-stabilizable (or handled by the fallback)
        }
        if ak_norm <= 1e-12 * (1.0 + a0_norm) {
            doubling_ok = true;
            break;
        }
        if ak_norm >= prev_ak_norm && ak_norm <= 1e-4 * (1.0 + a0_norm) {
            doubling_ok = true; // rounding floor reached, Newton finishes the job
            break;
        }
        prev_ak_norm = ak_norm;
    }
    let mut y = hk;
    if !doubling_ok {
        // fixed-point fallback Y <- A^H Y (I+GY)^{-1} A + Q, valid when rho(A) < 1
        if spectral_radius(&problem.a)? < 1.0 {
            y = problem.q.clone();
            for _ in 0..20_000 {
                let w = inverse_of_i_plus_gy(&problem.g, &y)?;
                let next = hermitize(&(problem.a.adjoint() * &y * &w * &problem.a + &problem.q));
                let delta = (&next - &y).norm();
                y = next;
                if delta <= 1e-14 * y.norm().max(1.0) {
                    break;
                }
            }
        } else if !y.norm().is_finite() {
            return Err(Error::NoStabilizingSolution {
                context: "doubling iteration diverged".into(),
            });
        }
    }

    // Newton polish through the Stein solver
    let mut best = y.clone();
    let mut best_res = dare_residual(problem, &y)?;
    for _ in 0..10 {
        let w = inverse_of_i_plus_gy(&problem.g, &y)?;
        let closed = &w * &problem.a;
        let defect = &y - problem.a.adjoint() * &y * &w * &problem.a - &problem.q;
        let rhs = hermitize(&(-&defect));
        let step = match solve_discrete_lyapunov(&closed, &rhs) {
            Ok(rep) => rep.solution,
            Err(Error::SingularOperator { .. }) => break,
            Err(e) => return Err(e),
        };
        y = hermitize(&(&y + &step));
        let res = dare_residual(problem, &y)?;
        if res < best_res {
            best_res = res;
            best = y.clone();
        }
        if step.norm() <= 1e-15 * y.norm().max(1.0) {
            break;
        }
    }
    let pre_w = inverse_of_i_plus_gy(&problem.g, &best)?;
    let pre_rho = spectral_radius(&(&pre_w * &problem.a))?;
    if !(pre_rho < 1.0) {
        return Err(Error::NoStabilizingSolution {
            context: format!("closed loop spectral radius {pre_rho:.6} is not below one"),
        });
    }
    let y = enforce_psd(&best, psd_clip_tolerance(1.0 - pre_rho))?;
    let y = realify_if_real(problem, &y)?;

    let w = inverse_of_i_plus_gy(&problem.g, &y)?;
    let closed_loop = &w * &problem.a;
    let rho = spectral_radius(&closed_loop)?;
    if !(rho < 1.0) {
        return Err(Error::NoStabilizingSolution {
            context: format!("closed loop spectral radius {rho:.6} is not below one"),
        });
    }
    let residual = dare_residual(problem, &y)?;
    let scale = (problem.q.norm() + problem.a.norm() * y.norm() * w.norm() * problem.a.norm()).max(1.0);
    if !(residual <= 1e-10 * scale) {
        return Err(Error::ConvergenceFailure {
            context: format!("DARE residual {residual:.3e} above tolerance"),
        });
    }
    Ok(RiccatiSolution { solution: y, residual, closed_loop, stability_margin: 1.0 - rho })
}

/// Solve either kind, dispatching on the problem tag.
pub fn solve(problem: &RiccatiProblem) -> Result<RiccatiSolution> {
    match problem.kind {
        RiccatiKind::Care => solve_care(problem),
        RiccatiKind::Dare => solve_dare(problem),
    }
}
