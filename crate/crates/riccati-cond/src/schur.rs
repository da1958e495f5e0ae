//! Complex Schur decomposition with eigenvalue reordering.
//!
//! The decomposition is computed in-house: Householder reduction to upper
//! Hessenberg form followed by an implicit single-shift QR iteration with
//! Wilkinson shifts and exceptional shifts on stagnation. The reordering
//! moves selected eigenvalues to the leading diagonal positions through
//! unitary Givens swaps of adjacent diagonal entries, so the leading columns
//! of `q` span the corresponding invariant subspace.

use crate::error::{Error, Result};
use crate::matrix::{CMat, Cpx};

pub struct ComplexSchur {
    /// Unitary factor; `a = q t q^H`.
    pub q: CMat,
    /// Upper-triangular factor.
    pub t: CMat,
}

impl ComplexSchur {
    pub fn eigenvalues(&self) -> Vec<Cpx> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }
}

const ZERO: Cpx = Cpx::new(0.0, 0.0);
const ONE: Cpx = Cpx::new(1.0, 0.0);

/// Householder reduction `a = q h q^H` with `h` upper Hessenberg.
fn hessenberg(a: &CMat) -> (CMat, CMat) {
    let n = a.nrows();
    let mut h = a.clone();
    let mut q = CMat::identity(n, n);
    for k in 0..n.saturating_sub(2) {
        let tail = n - k - 1;
        let mut v = CVecBuf::from_iter((0..tail).map(|i| h[(k + 1 + i, k)]));
        let alpha = v.norm();
        if alpha == 0.0 {
            continue;
        }
        let phase = if v.0[0].norm() == 0.0 { ONE } else { v.0[0] / v.0[0].norm() };
        v.0[0] += phase * alpha;
        let vnorm = v.norm();
        if vnorm == 0.0 {
            continue;
        }
        for x in v.0.iter_mut() {
            *x /= vnorm;
        }
        // H <- (I - 2 v v^H) H applied to rows k+1.., then columns, and Q
        for col in 0..n {
            let mut dot = ZERO;
            for i in 0..tail {
                dot += v.0[i].conj() * h[(k + 1 + i, col)];
            }
            for i in 0..tail {
                let upd = 2.0 * v.0[i] * dot;
                h[(k + 1 + i, col)] -= upd;
            }
        }
        for row in 0..n {
            let mut dot = ZERO;
            for i in 0..tail {
                dot += h[(row, k + 1 + i)] * v.0[i];
            }
            for i in 0..tail {
                let upd = 2.0 * dot * v.0[i].conj();
                h[(row, k + 1 + i)] -= upd;
            }
        }
        for row in 0..n {
            let mut dot = ZERO;
            for i in 0..tail {
                dot += q[(row, k + 1 + i)] * v.0[i];
            }
            for i in 0..tail {
                let upd = 2.0 * dot * v.0[i].conj();
                q[(row, k + 1 + i)] -= upd;
            }
        }
        for i in 2..=tail {
            h[(k + i, k)] = ZERO;
        }
    }
    (q, h)
}

struct CVecBuf(Vec<Cpx>);

impl CVecBuf {
    fn from_iter(it: impl Iterator<Item = Cpx>) -> Self {
        CVecBuf(it.collect())
    }
    fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Givens rotation `[[c, s], [-conj(s), c]]` with real `c` mapping `(f, g)`
/// to `(r, 0)`.
fn givens(f: Cpx, g: Cpx) -> (f64, Cpx, Cpx) {
    if g.norm() == 0.0 {
        return (1.0, ZERO, f);
    }
    if f.norm() == 0.0 {
        return (0.0, g.conj() / g.norm(), Cpx::new(g.norm(), 0.0));
    }
    let d = f.norm().hypot(g.norm());
    let c = f.norm() / d;
    let fs = f / f.norm();
    let s = fs * g.conj() / d;
    (c, s, fs * d)
}

/// Eigenvalue of `[[a, b], [c, d]]` closest to `d` (Wilkinson shift).
fn wilkinson_shift(a: Cpx, b: Cpx, c: Cpx, d: Cpx) -> Cpx {
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr - 4.0 * det).sqrt();
    let l1 = (tr + disc) * 0.5;
    let l2 = (tr - disc) * 0.5;
    if (l1 - d).norm() < (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Single-shift QR iteration on an upper Hessenberg matrix, accumulating the
/// unitary transform into `q`.
fn hessenberg_qr(mut h: CMat, mut q: CMat) -> Result<ComplexSchur> {
    let n = h.nrows();
    if n <= 1 {
        return Ok(ComplexSchur { q, t: h });
    }
    let eps = f64::EPSILON;
    let mut hi = n - 1;
    let mut stall = 0usize;
    let max_total = 40 * n * n + 100;
    let mut total = 0usize;

    while total < max_total {
        total += 1;
        // deflate converged subdiagonal entries at the active corner
        while hi > 0 {
            let off = h[(hi, hi - 1)].norm();
            let scale = h[(hi - 1, hi - 1)].norm() + h[(hi, hi)].norm();
            if off <= eps * scale.max(f64::MIN_POSITIVE) {
                h[(hi, hi - 1)] = ZERO;
                hi -= 1;
                stall = 0;
            } else {
                break;
            }
        }
        if hi == 0 {
            break;
        }
        // find the start of the active unreduced block
        let mut lo = hi;
        while lo > 0 {
            let off = h[(lo, lo - 1)].norm();
            let scale = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            if off <= eps * scale.max(f64::MIN_POSITIVE) {
                h[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }

        stall += 1;
        let shift = if stall % 20 == 0 {
            // exceptional shift to break symmetric-spectrum stagnation
            let mag = h[(hi, hi - 1)].norm() + if hi >= 2 { h[(hi - 1, hi - 2)].norm() } else { 0.0 };
            h[(hi, hi)] + Cpx::new(0.75 * mag, 0.4375 * mag)
        } else {
            wilkinson_shift(h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)])
        };

        // implicit shifted QR sweep on rows/columns lo..=hi
        let mut f = h[(lo, lo)] - shift;
        let mut g = h[(lo + 1, lo)];
        for k in lo..hi {
            let (c, s, _) = givens(f, g);
            let cc = Cpx::new(c, 0.0);
            // rows k, k+1
            for col in k.saturating_sub(1)..n {
                let top = h[(k, col)];
                let bot = h[(k + 1, col)];
                h[(k, col)] = cc * top + s * bot;
                h[(k + 1, col)] = -s.conj() * top + cc * bot;
            }
            // columns k, k+1
            let row_end = (k + 2).min(hi) + 1;
            for row in 0..row_end.min(n) {
                let left = h[(row, k)];
                let right = h[(row, k + 1)];
                h[(row, k)] = left * cc + right * s.conj();
                h[(row, k + 1)] = -left * s + right * cc;
            }
            for row in 0..n {
                let left = q[(row, k)];
                let right = q[(row, k + 1)];
                q[(row, k)] = left * cc + right * s.conj();
                q[(row, k + 1)] = -left * s + right * cc;
            }
            if k + 1 < hi {
                f = h[(k + 1, k)];
                g = h[(k + 2, k)];
            }
        }
    }

    if hi > 0 {
        return Err(Error::ConvergenceFailure {
            context: format!("Schur iteration stalled with active block size {}", hi + 1),
        });
    }
    // clean out rounding residue below the diagonal
    for i in 1..n {
        for j in 0..i {
            h[(i, j)] = ZERO;
        }
    }
    Ok(ComplexSchur { q, t: h })
}

pub fn complex_schur(a: &CMat) -> Result<ComplexSchur> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dims("square matrix", format!("{}x{}", n, a.ncols())));
    }
    // already upper triangular (the zero matrix included): nothing to iterate on
    let lower = (1..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| a[(i, j)].norm())
        .fold(0.0f64, f64::max);
    if lower == 0.0 {
        return Ok(ComplexSchur { q: CMat::identity(n, n), t: a.clone() });
    }
    let (q, h) = hessenberg(a);
    hessenberg_qr(h, q)
}

/// Swap the diagonal entries `k` and `k+1` of the upper-triangular `t` by a
/// unitary similarity, updating `q` accordingly.
fn swap_adjacent(t: &mut CMat, q: &mut CMat, k: usize) {
    let n = t.nrows();
    let f = t[(k, k + 1)];
    let g = t[(k + 1, k + 1)] - t[(k, k)];
    if f.norm().hypot(g.norm()) == 0.0 {
        return; // equal eigenvalues, nothing to move
    }
    // The adjoint of the Givens rotation has first column along the
    // eigenvector [f, g] of the trailing eigenvalue, which is what brings
    // that eigenvalue forward.
    let (c, s, _) = givens(f, g);
    let c = Cpx::new(c, 0.0);
    for col in 0..n {
        let top = t[(k, col)];
        let bot = t[(k + 1, col)];
        t[(k, col)] = c * top + s * bot;
        t[(k + 1, col)] = -s.conj() * top + c * bot;
    }
    for row in 0..n {
        let left = t[(row, k)];
        let right = t[(row, k + 1)];
        t[(row, k)] = left * c + right * s.conj();
        t[(row, k + 1)] = -left * s + right * c;
    }
    for row in 0..q.nrows() {
        let left = q[(row, k)];
        let right = q[(row, k + 1)];
        q[(row, k)] = left * c + right * s.conj();
        q[(row, k + 1)] = -left * s + right * c;
    }
    t[(k + 1, k)] = ZERO;
}

/// Reorder the Schur form so that eigenvalues selected by `select` occupy the
/// leading diagonal positions. Returns how many were selected.
pub fn reorder_schur(schur: &mut ComplexSchur, select: impl Fn(Cpx) -> bool) -> usize {
    let n = schur.t.nrows();
    let mut target = 0;
    loop {
        let mut found = None;
        for i in target..n {
            if select(schur.t[(i, i)]) {
                found = Some(i);
                break;
            }
        }
        let Some(j) = found else { break };
        for k in (target..j).rev() {
            swap_adjacent(&mut schur.t, &mut schur.q, k);
        }
        target += 1;
        if target == n {
            break;
        }
    }
    target
}
