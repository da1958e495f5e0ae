//! Continuous and discrete (Stein) Lyapunov solvers.
//!
//! `solve_continuous_lyapunov` solves `F^H D + D F = C` and
//! `solve_discrete_lyapunov` solves `D - B^H D B = C`, for Hermitian `C`, by
//! Schur reduction and column-wise triangular substitution. The Kronecker
//! oracles solve the same equations as dense `n^2 x n^2` linear systems and
//! serve as ground truth in tests.

use crate::error::{Error, Result};
use crate::matrix::{hermitize, CMat, Cpx};
use crate::schur::complex_schur;
use crate::structured::{kron, unvectorize, vectorize};

pub struct LyapunovSolveReport {
    /// Hermitian solution.
    pub solution: CMat,
    /// Frobenius norm of the defect, recomputed from the returned solution.
    pub residual: f64,
    /// Continuous: max real part of the eigenvalues of `F`.
    /// Discrete: spectral radius of `B`.
    pub spectral_margin: f64,
}

fn check_hermitian_rhs(c: &CMat) -> Result<()> {
    let defect = (c - c.adjoint()).norm();
    let scale = c.norm().max(1.0);
    if defect > 1e-10 * scale {
        return Err(Error::NotHermitian { defect });
    }
    Ok(())
}

fn check_pair(f: &CMat, c: &CMat) -> Result<usize> {
    let n = f.nrows();
    if f.ncols() != n {
        return Err(Error::dims("square matrix", format!("{}x{}", f.nrows(), f.ncols())));
    }
    if c.nrows() != n || c.ncols() != n {
        return Err(Error::dims(format!("{n}x{n}"), format!("{}x{}", c.nrows(), c.ncols())));
    }
    check_hermitian_rhs(c)?;
    Ok(n)
}

/// Solve `F^H D + D F = C` for Hermitian `C`.
///
/// Requires that no two eigenvalues of `F` satisfy `conj(l_i) + l_j = 0`,
/// which holds in particular when `F` is c-stable.
pub fn solve_continuous_lyapunov(f: &CMat, c: &CMat) -> Result<LyapunovSolveReport> {
    let n = check_pair(f, c)?;
    let schur = complex_schur(f)?;
    let (u, t) = (&schur.q, &schur.t);
    let c_tilde = u.adjoint() * c * u;

    // T^H D~ + D~ T = C~ column by column: (T^H + t_jj I) d_j = c_j - sum_{k<j} T[k,j] d_k
    let pivot_tol = 1e-13 * (2.0 * f.norm()).max(f64::MIN_POSITIVE);
    let mut d_tilde = CMat::zeros(n, n);
    for j in 0..n {
        let mut rhs = c_tilde.column(j).clone_owned();
        for k in 0..j {
            let coef = t[(k, j)];
            rhs -= d_tilde.column(k) * coef;
        }
        let shift = t[(j, j)];
        // lower-triangular forward substitution in (T^H + shift I)
        for i in 0..n {
            let mut acc = rhs[i];
            for l in 0..i {
                acc -= t[(l, i)].conj() * d_tilde[(l, j)];
            }
            let pivot = t[(i, i)].conj() + shift;
            if pivot.norm() < pivot_tol {
                return Err(Error::SingularOperator {
                    context: format!("eigenvalue pair sum {:.3e} below tolerance", pivot.norm()),
                });
            }
            d_tilde[(i, j)] = acc / pivot;
        }
    }

    let d = hermitize(&(u * d_tilde * u.adjoint()));
    let residual = (f.adjoint() * &d + &d * f - c).norm();
    let spectral_margin = (0..n).map(|i| t[(i, i)].re).fold(f64::NEG_INFINITY, f64::max);
    Ok(LyapunovSolveReport { solution: d, residual, spectral_margin })
}

/// Solve `D - B^H D B = C` for Hermitian `C`.
///
/// Requires `conj(l_i) l_j != 1` for all eigenvalue pairs of `B`, which holds
/// in particular when `B` is d-stable.
pub fn solve_discrete_lyapunov(b: &CMat, c: &CMat) -> Result<LyapunovSolveReport> {
    let n = check_pair(b, c)?;
    let schur = complex_schur(b)?;
    let (u, t) = (&schur.q, &schur.t);
    let c_tilde = u.adjoint() * c * u;

    // D~ - T^H D~ T = C~: (I - t_jj T^H) d_j = c_j + T^H sum_{k<j} T[k,j] d_k
    let pivot_tol = 1e-13 * (1.0 + b.norm() * b.norm());
    let mut d_tilde = CMat::zeros(n, n);
    for j in 0..n {
        let mut partial = CMat::zeros(n, 1);
        for k in 0..j {
            partial += d_tilde.column(k) * t[(k, j)];
        }
        let rhs = c_tilde.column(j) + t.adjoint() * partial;
        let shift = t[(j, j)];
        for i in 0..n {
            let mut acc = rhs[(i, 0)];
            for l in 0..i {
                acc += shift * t[(l, i)].conj() * d_tilde[(l, j)];
            }
            let pivot = Cpx::new(1.0, 0.0) - shift * t[(i, i)].conj();
            if pivot.norm() < pivot_tol {
                return Err(Error::SingularOperator {
                    context: format!("eigenvalue pair product within {:.3e} of one", pivot.norm()),
                });
            }
            d_tilde[(i, j)] = acc / pivot;
        }
    }

    let d = hermitize(&(u * d_tilde * u.adjoint()));
    let residual = (&d - b.adjoint() * &d * b - c).norm();
    let spectral_margin = (0..n).map(|i| t[(i, i)].norm()).fold(0.0, f64::max);
    Ok(LyapunovSolveReport { solution: d, residual, spectral_margin })
}

fn kron_solve(op: CMat, c: &CMat, n: usize) -> Result<CMat> {
    let rhs = vectorize(c);
    let op_norm = op.norm();
    let lu = op.clone().lu();
    let sol = lu.solve(&rhs).ok_or(Error::SingularMatrix {
        context: "Kronecker operator".into(),
    })?;
    let defect = (&op * &sol - &rhs).norm();
    if defect > 1e-8 * (op_norm * sol.norm() + rhs.norm()).max(1.0) {
        return Err(Error::SingularOperator {
            context: format!("Kronecker solve defect {defect:.3e}"),
        });
    }
    unvectorize(&sol, n, n)
}

/// Ground-truth continuous solver: `(I ⊗ F^H + F^T ⊗ I) vec(D) = vec(C)`.
pub fn kronecker_oracle_continuous(f: &CMat, c: &CMat) -> Result<CMat> {
    let n = check_pair(f, c)?;
    let eye = CMat::identity(n, n);
    let op = kron(&eye, &f.adjoint()) + kron(&f.transpose(), &eye);
    kron_solve(op, c, n)
}

/// Ground-truth discrete solver: `(I - B^T ⊗ B^H) vec(D) = vec(C)`.
pub fn kronecker_oracle_discrete(b: &CMat, c: &CMat) -> Result<CMat> {
    let n = check_pair(b, c)?;
    let op = CMat::identity(n * n, n * n) - kron(&b.transpose(), &b.adjoint());
    kron_solve(op, c, n)
}
