//! Shared dense-matrix aliases and small numeric helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type Cpx = Complex<f64>;
pub type CMat = DMatrix<Cpx>;
pub type CVec = DVector<Cpx>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Largest entry modulus, `max_ij |m_ij|`.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `(M + M^H) / 2`.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * Cpx::new(0.5, 0.0)
}

/// Promote a real matrix to complex entries.
pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Cpx::new(x, 0.0))
}

/// Real part of a complex matrix.
pub fn re_part(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

/// Imaginary part of a complex matrix.
pub fn im_part(m: &CMat) -> RMat {
    m.map(|z| z.im)
}

/// Entrywise modulus.
pub fn entry_abs(m: &CMat) -> RMat {
    m.map(|z| z.norm())
}
