//! Vectorization, symmetry packings, and the expansion/permutation matrices
//! that the condition-number formulas are assembled from.
//!
//! Conventions used throughout the crate:
//! - `vec` stacks columns, so `vec(U V W) = (W^T ⊗ U) vec(V)` holds with the
//!   ordinary Kronecker product.
//! - symmetric packing walks the upper triangle row by row including the
//!   diagonal: `[a11 .. a1n, a22 .. a2n, ..., ann]`.
//! - skew packing walks the strict upper triangle in the same order.

use crate::error::{Error, Result};
use crate::matrix::{CMat, CVec, Cpx, RMat, RVec};

/// Relative tolerance accepted when packing nearly-(skew-)symmetric input.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Packed upper triangle of a symmetric matrix, length `n(n+1)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymPacked {
    pub n: usize,
    pub data: RVec,
}

/// Packed strict upper triangle of a skew-symmetric matrix, length `n(n-1)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewPacked {
    pub n: usize,
    pub data: RVec,
}

/// Column-stacked vector of a complex matrix.
pub fn vectorize(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`vectorize`]; entry `(i, j)` is `v[i + j*rows]`.
pub fn unvectorize(v: &CVec, rows: usize, cols: usize) -> Result<CMat> {
    if v.len() != rows * cols {
        return Err(Error::dims(format!("{} entries", rows * cols), format!("{}", v.len())));
    }
    Ok(CMat::from_column_slice(rows, cols, v.as_slice()))
}

/// Real variant of [`vectorize`].
pub fn vectorize_real(m: &RMat) -> RVec {
    RVec::from_column_slice(m.as_slice())
}

/// Real variant of [`unvectorize`].
pub fn unvectorize_real(v: &RVec, rows: usize, cols: usize) -> Result<RMat> {
    if v.len() != rows * cols {
        return Err(Error::dims(format!("{} entries", rows * cols), format!("{}", v.len())));
    }
    Ok(RMat::from_column_slice(rows, cols, v.as_slice()))
}

fn symmetry_defect(m: &RMat) -> f64 {
    let mut d = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            d = d.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    d
}

fn max_abs_real(m: &RMat) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Upper-triangle packing without any symmetry check. Used internally where
/// the input is an entrywise absolute value and symmetry is structural.
pub(crate) fn upper_pack(m: &RMat) -> RVec {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(m[(i, j)]);
        }
    }
    RVec::from_vec(out)
}

/// Strict-upper-triangle packing without any skewness check.
pub(crate) fn strict_upper_pack(m: &RMat) -> RVec {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(m[(i, j)]);
        }
    }
    RVec::from_vec(out)
}

/// Pack a symmetric matrix; rejects input whose asymmetry exceeds
/// `SYMMETRY_TOL * max(1, |J|_max)`. Only the upper triangle is read.
pub fn sym_pack(j: &RMat) -> Result<SymPacked> {
    if j.nrows() != j.ncols() {
        return Err(Error::dims("square matrix", format!("{}x{}", j.nrows(), j.ncols())));
    }
    let defect = symmetry_defect(j);
    if defect > SYMMETRY_TOL * max_abs_real(j).max(1.0) {
        return Err(Error::NotSymmetric { defect });
    }
    Ok(SymPacked { n: j.nrows(), data: upper_pack(j) })
}

/// Expand a symmetric packing back to the full matrix.
pub fn sym_unpack(p: &SymPacked) -> RMat {
    let n = p.n;
    let mut m = RMat::zeros(n, n);
    let mut t = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = p.data[t];
            m[(j, i)] = p.data[t];
            t += 1;
        }
    }
    m
}

/// Pack a skew-symmetric matrix (strict upper triangle).
pub fn skew_pack(k: &RMat) -> Result<SkewPacked> {
    if k.nrows() != k.ncols() {
        return Err(Error::dims("square matrix", format!("{}x{}", k.nrows(), k.ncols())));
    }
    let n = k.nrows();
    let mut defect = 0.0f64;
    for i in 0..n {
        for j in i..n {
            defect = defect.max((k[(i, j)] + k[(j, i)]).abs());
        }
    }
    if defect > SYMMETRY_TOL * max_abs_real(k).max(1.0) {
        return Err(Error::NotSkewSymmetric { defect });
    }
    Ok(SkewPacked { n, data: strict_upper_pack(k) })
}

/// Expand a skew packing back to the full matrix.
pub fn skew_unpack(p: &SkewPacked) -> RMat {
    let n = p.n;
    let mut m = RMat::zeros(n, n);
    let mut t = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            m[(i, j)] = p.data[t];
            m[(j, i)] = -p.data[t];
            t += 1;
        }
    }
    m
}

/// The `n^2 x n(n+1)/2` matrix `S1` with `S1 * sym_pack(J) = vec(J)` for
/// every symmetric `J`. Each row is a standard basis row.
pub fn sym_expansion(n: usize) -> RMat {
    let mut s = RMat::zeros(n * n, n * (n + 1) / 2);
    let mut t = 0;
    for i in 0..n {
        for j in i..n {
            s[(i + j * n, t)] = 1.0;
            s[(j + i * n, t)] = 1.0;
            t += 1;
        }
    }
    s
}

/// The `n^2 x n(n-1)/2` matrix `S2` with `S2 * skew_pack(K) = vec(K)` for
/// every skew-symmetric `K`; lower-triangle rows carry `-1`.
pub fn skew_expansion(n: usize) -> RMat {
    let mut s = RMat::zeros(n * n, n * (n - 1) / 2);
    let mut t = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            s[(i + j * n, t)] = 1.0;
            s[(j + i * n, t)] = -1.0;
            t += 1;
        }
    }
    s
}

/// The `n^2 x n^2` permutation with `P * vec(A) = vec(A^T)`.
pub fn transpose_permutation(n: usize) -> RMat {
    let mut p = RMat::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            p[(i + j * n, j + i * n)] = 1.0;
        }
    }
    p
}

/// Kronecker product `A ⊗ B` with block `(i, j)` equal to `a_ij * B`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Real Kronecker product.
pub fn kron_real(a: &RMat, b: &RMat) -> RMat {
    a.kronecker(b)
}

/// Structured perturbation vector of a complex Riccati data triple, stored as
/// six labeled segments. The stacked layout is
/// `[vec(Re dA) | vec(Im dA) | sym(Re dG) | skew(Im dG) | sym(Re dQ) | skew(Im dQ)]`
/// with total length `4 n^2`.
#[derive(Clone, Debug)]
pub struct StructuredDelta {
    pub re_a: RVec,
    pub im_a: RVec,
    pub sym_re_g: RVec,
    pub skew_im_g: RVec,
    pub sym_re_q: RVec,
    pub skew_im_q: RVec,
}

impl StructuredDelta {
    pub fn order(&self) -> usize {
        (self.re_a.len() as f64).sqrt().round() as usize
    }

    /// Pack perturbation matrices; `dg`, `dq` must be Hermitian.
    pub fn from_matrices(da: &CMat, dg: &CMat, dq: &CMat) -> Result<Self> {
        let n = da.nrows();
        if da.ncols() != n || dg.nrows() != n || dg.ncols() != n || dq.nrows() != n || dq.ncols() != n {
            return Err(Error::dims(format!("three {n}x{n} matrices"), "mismatched shapes"));
        }
        let re = |m: &CMat| m.map(|z| z.re);
        let im = |m: &CMat| m.map(|z| z.im);
        Ok(StructuredDelta {
            re_a: vectorize_real(&re(da)),
            im_a: vectorize_real(&im(da)),
            sym_re_g: sym_pack(&re(dg))?.data,
            skew_im_g: skew_pack(&im(dg))?.data,
            sym_re_q: sym_pack(&re(dq))?.data,
            skew_im_q: skew_pack(&im(dq))?.data,
        })
    }

    /// Materialize the segments back into `(dA, dG, dQ)`.
    pub fn to_matrices(&self) -> (CMat, CMat, CMat) {
        let n = self.order();
        let re_a = unvectorize_real(&self.re_a, n, n).expect("segment length");
        let im_a = unvectorize_real(&self.im_a, n, n).expect("segment length");
        let da = CMat::from_fn(n, n, |i, j| Cpx::new(re_a[(i, j)], im_a[(i, j)]));
        let dg = hermitian_from_segments(n, &self.sym_re_g, &self.skew_im_g);
        let dq = hermitian_from_segments(n, &self.sym_re_q, &self.skew_im_q);
        (da, dg, dq)
    }

    /// Concatenate the six segments into the length-`4n^2` vector.
    pub fn stacked(&self) -> RVec {
        let mut out = Vec::with_capacity(4 * self.re_a.len());
        for seg in [&self.re_a, &self.im_a, &self.sym_re_g, &self.skew_im_g, &self.sym_re_q, &self.skew_im_q] {
            out.extend_from_slice(seg.as_slice());
        }
        RVec::from_vec(out)
    }

    /// Split a stacked length-`4n^2` vector back into segments.
    pub fn from_stacked(v: &RVec, n: usize) -> Result<Self> {
        if v.len() != 4 * n * n {
            return Err(Error::dims(format!("{} entries", 4 * n * n), format!("{}", v.len())));
        }
        let (nn, tri, stri) = (n * n, n * (n + 1) / 2, n * (n - 1) / 2);
        let mut pos = 0;
        let mut take = |len: usize| {
            let seg = RVec::from_column_slice(&v.as_slice()[pos..pos + len]);
            pos += len;
            seg
        };
        Ok(StructuredDelta {
            re_a: take(nn),
            im_a: take(nn),
            sym_re_g: take(tri),
            skew_im_g: take(stri),
            sym_re_q: take(tri),
            skew_im_q: take(stri),
        })
    }

    /// Euclidean norm of the stacked vector.
    pub fn norm(&self) -> f64 {
        self.stacked().norm()
    }

    pub fn scale(&self, factor: f64) -> Self {
        StructuredDelta {
            re_a: &self.re_a * factor,
            im_a: &self.im_a * factor,
            sym_re_g: &self.sym_re_g * factor,
            skew_im_g: &self.skew_im_g * factor,
            sym_re_q: &self.sym_re_q * factor,
            skew_im_q: &self.skew_im_q * factor,
        }
    }
}

/// Build the Hermitian matrix whose real part has the given symmetric
/// packing and whose imaginary part has the given skew packing.
pub fn hermitian_from_segments(n: usize, sym_re: &RVec, skew_im: &RVec) -> CMat {
    let re = sym_unpack(&SymPacked { n, data: sym_re.clone() });
    let im = skew_unpack(&SkewPacked { n, data: skew_im.clone() });
    CMat::from_fn(n, n, |i, j| Cpx::new(re[(i, j)], im[(i, j)]))
}
