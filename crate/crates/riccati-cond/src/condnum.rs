//! Structured condition numbers of the symmetric Riccati equations.
//!
//! The complex-path quantities come from the `n^2 x 4n^2` structured Jacobian
//! `sign * Op^{-1} [blocks]` where `Op` is the matrix representation of the
//! Fréchet derivative at the solution (`Z` for CARE, `T` for DARE) and the
//! blocks map the structured perturbation vector
//! `[vec(Re dA) | vec(Im dA) | sym(Re dG) | skew(Im dG) | sym(Re dQ) | skew(Im dQ)]`
//! into the equation right-hand side. Real problems additionally get the
//! dedicated real-arithmetic bounds and the Frobenius-weighted unstructured
//! comparison bound.

use crate::error::{Error, Result};
use crate::matrix::{entry_abs, max_abs, re_part, to_complex, CMat, Cpx, RMat, RVec};
use crate::riccati::{inverse_of_i_plus_gy, RiccatiKind, RiccatiProblem, ScalarField};
use crate::schur::complex_schur;
use crate::structured::{
    kron, kron_real, strict_upper_pack, sym_expansion, skew_expansion, transpose_permutation,
    upper_pack, vectorize_real, StructuredDelta,
};

/// Perturbation-size weights for the normwise condition numbers.
///
/// `complex6` weights the six structured directions of the complex path;
/// `real3` weights `(dA, dG, dQ)` in the real-case bound; `zhou3` holds the
/// Frobenius triple `(|A|_F, |G|_F, |Q|_F)` that the unstructured comparison
/// bound is defined with.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaParameters {
    pub complex6: [f64; 6],
    pub real3: [f64; 3],
    pub zhou3: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub enum DeltaConvention {
    /// Frobenius norms of the `A` parts, packed 2-norms of the `G`/`Q` parts.
    Default,
    /// Frobenius norms of the full data matrices everywhere.
    Zhou,
    /// Explicit weights: six values for complex problems, three for real.
    Explicit(Vec<f64>),
}

fn packed_two_norm(m: &RMat) -> f64 {
    upper_pack(m).norm()
}

impl DeltaParameters {
    /// The default weights for a problem.
    pub fn defaults(problem: &RiccatiProblem) -> Self {
        let re_a = re_part(&problem.a);
        let im_a = crate::matrix::im_part(&problem.a);
        let re_g = re_part(&problem.g);
        let im_g = crate::matrix::im_part(&problem.g);
        let re_q = re_part(&problem.q);
        let im_q = crate::matrix::im_part(&problem.q);
        DeltaParameters {
            complex6: [
                re_a.norm(),
                im_a.norm(),
                packed_two_norm(&re_g),
                strict_upper_pack(&im_g).norm(),
                packed_two_norm(&re_q),
                strict_upper_pack(&im_q).norm(),
            ],
            real3: [re_a.norm(), packed_two_norm(&re_g), packed_two_norm(&re_q)],
            zhou3: [problem.a.norm(), problem.g.norm(), problem.q.norm()],
        }
    }

    /// Resolve a convention into concrete weights.
    pub fn resolve(problem: &RiccatiProblem, convention: &DeltaConvention) -> Result<Self> {
        let mut base = Self::defaults(problem);
        match convention {
            DeltaConvention::Default => {}
            DeltaConvention::Zhou => {
                let [da, dg, dq] = base.zhou3;
                base.real3 = [da, dg, dq];
                if problem.field == ScalarField::Complex {
                    base.complex6 = [da, da, dg, dg, dq, dq];
                } else {
                    base.complex6 = [da, 0.0, dg, 0.0, dq, 0.0];
                }
            }
            DeltaConvention::Explicit(values) => match problem.field {
                ScalarField::Complex => {
                    if values.len() != 6 {
                        return Err(Error::InvalidArgument(format!(
                            "expected 6 delta values for a complex problem, got {}",
                            values.len()
                        )));
                    }
                    base.complex6.copy_from_slice(values);
                }
                ScalarField::Real => {
                    if values.len() != 3 {
                        return Err(Error::InvalidArgument(format!(
                            "expected 3 delta values for a real problem, got {}",
                            values.len()
                        )));
                    }
                    base.real3.copy_from_slice(values);
                    base.complex6 = [values[0], 0.0, values[1], 0.0, values[2], 0.0];
                }
            },
        }
        Ok(base)
    }
}

/// Matrix form of the Fréchet derivative together with the structured
/// perturbation blocks.
pub struct JacobianAssembly {
    pub kind: RiccatiKind,
    pub n: usize,
    /// `Z` for CARE, `T` for DARE.
    pub op: CMat,
    /// `n^2 x 4n^2` block row `[A | G | Q]` in segment order.
    pub blocks: CMat,
    /// The directional derivative is `sign * op^{-1} * blocks * delta`.
    pub sign: f64,
    /// `(I + G Y)^{-1}` for DARE.
    pub w: Option<CMat>,
}

fn seg_widths(n: usize) -> [usize; 6] {
    let (nn, tri, stri) = (n * n, n * (n + 1) / 2, n * (n - 1) / 2);
    [nn, nn, tri, stri, tri, stri]
}

impl JacobianAssembly {
    /// Column range of segment `i` (0-5) inside `blocks`.
    pub fn segment(&self, i: usize) -> std::ops::Range<usize> {
        let widths = seg_widths(self.n);
        let start: usize = widths[..i].iter().sum();
        start..start + widths[i]
    }

    /// `op^{-1} * blocks`, solved with one LU factorization.
    pub fn solved(&self) -> Result<CMat> {
        let lu = self.op.clone().lu();
        lu.solve(&self.blocks).ok_or(Error::SingularOperator {
            context: "derivative operator is singular".into(),
        })
    }

    /// Directional derivative of the solution along a structured direction.
    pub fn apply(&self, delta: &StructuredDelta) -> Result<CMat> {
        let stacked = delta.stacked();
        if stacked.len() != 4 * self.n * self.n {
            return Err(Error::dims(
                format!("{} entries", 4 * self.n * self.n),
                format!("{}", stacked.len()),
            ));
        }
        let rhs = &self.blocks * stacked.map(|x| Cpx::new(x, 0.0));
        let lu = self.op.clone().lu();
        let sol = lu.solve(&rhs).ok_or(Error::SingularOperator {
            context: "derivative operator is singular".into(),
        })?;
        crate::structured::unvectorize(&(sol * Cpx::new(self.sign, 0.0)), self.n, self.n)
    }
}

fn assert_kind(problem: &RiccatiProblem, kind: RiccatiKind) -> Result<()> {
    if problem.kind != kind {
        return Err(Error::InvalidArgument(format!(
            "expected a {:?} problem, got {:?}",
            kind, problem.kind
        )));
    }
    Ok(())
}

/// Lemma-style Jacobian of the CARE at `x`: `Dphi = -Z^{-1} M`.
pub fn assemble_care_jacobian(problem: &RiccatiProblem, x: &CMat) -> Result<JacobianAssembly> {
    assert_kind(problem, RiccatiKind::Care)?;
    let n = problem.order();
    let closed = &problem.a - &problem.g * x;
    let abscissa = complex_schur(&closed)?
        .eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= 0.0 {
        return Err(Error::NoStabilizingSolution {
            context: format!("closed loop abscissa {abscissa:.3e} is not negative"),
        });
    }
    let eye = CMat::identity(n, n);
    let z = kron(&eye, &closed.adjoint()) + kron(&closed.transpose(), &eye);

    let s1 = to_complex(&sym_expansion(n));
    let s2 = to_complex(&skew_expansion(n));
    let pi = to_complex(&transpose_permutation(n));
    let i_unit = Cpx::new(0.0, 1.0);

    let ix = kron(&eye, x);
    let xti = kron(&x.transpose(), &eye) * &pi;
    let xtx = kron(&x.transpose(), x);

    let blocks = hcat6(
        n,
        &(&ix + &xti),
        &((&ix - &xti) * i_unit),
        &(-(&xtx * &s1)),
        &(&xtx * &s2 * (-i_unit)),
        &s1,
        &(&s2 * i_unit),
    );
    Ok(JacobianAssembly { kind: RiccatiKind::Care, n, op: z, blocks, sign: -1.0, w: None })
}

/// Lemma-style Jacobian of the DARE at `y`: `Dpsi = T^{-1} N`.
pub fn assemble_dare_jacobian(problem: &RiccatiProblem, y: &CMat) -> Result<JacobianAssembly> {
    assert_kind(problem, RiccatiKind::Dare)?;
    let n = problem.order();
    let w = inverse_of_i_plus_gy(&problem.g, y)?;
    let closed = &w * &problem.a;
    let rho = complex_schur(&closed)?
        .eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0f64, f64::max);
    if rho >= 1.0 {
        return Err(Error::NoStabilizingSolution {
            context: format!("closed loop spectral radius {rho:.6} is not below one"),
        });
    }
    let eye = CMat::identity(n, n);
    let atwt = problem.a.transpose() * w.transpose();
    let t = CMat::identity(n * n, n * n) - kron(&atwt, &(problem.a.adjoint() * w.adjoint()));

    let left = problem.a.adjoint() * y * &w; // A^H Y W
    let right_t = &atwt * y.transpose(); // (Y W A)^T
    let s1 = to_complex(&sym_expansion(n));
    let s2 = to_complex(&skew_expansion(n));
    let pi = to_complex(&transpose_permutation(n));
    let i_unit = Cpx::new(0.0, 1.0);

    let ia = kron(&eye, &left);
    let ait = kron(&right_t, &eye) * &pi;
    let kk = kron(&right_t, &left);

    let blocks = hcat6(
        n,
        &(&ia + &ait),
        &((&ia - &ait) * i_unit),
        &(-(&kk * &s1)),
        &(&kk * &s2 * (-i_unit)),
        &s1,
        &(&s2 * i_unit),
    );
    Ok(JacobianAssembly { kind: RiccatiKind::Dare, n, op: t, blocks, sign: 1.0, w: Some(w) })
}

fn hcat6(n: usize, b0: &CMat, b1: &CMat, b2: &CMat, b3: &CMat, b4: &CMat, b5: &CMat) -> CMat {
    let widths = seg_widths(n);
    let mut out = CMat::zeros(n * n, 4 * n * n);
    let mut start = 0;
    for (w, b) in widths.iter().zip([b0, b1, b2, b3, b4, b5]) {
        out.view_mut((0, start), (n * n, *w)).copy_from(b);
        start += w;
    }
    out
}

fn spectral_norm_c(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let svd = m.clone().svd(false, false);
    svd.singular_values.iter().copied().fold(0.0, f64::max)
}

fn spectral_norm_r(m: &RMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let svd = m.clone().svd(false, false);
    svd.singular_values.iter().copied().fold(0.0, f64::max)
}

fn inf_norm(m: &RMat) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn scale_segments(asm: &JacobianAssembly, solved: &CMat, deltas: &[f64; 6]) -> CMat {
    let mut scaled = solved.clone();
    for (i, d) in deltas.iter().enumerate() {
        let range = asm.segment(i);
        for col in range {
            for row in 0..scaled.nrows() {
                scaled[(row, col)] *= Cpx::new(*d, 0.0);
            }
        }
    }
    scaled
}

/// Exact structured normwise condition number of the complex path,
/// `|Op^{-1} M D|_2 / |S|_F`.
pub fn kappa1_complex(asm: &JacobianAssembly, solution: &CMat, deltas: &[f64; 6]) -> Result<f64> {
    let sol_norm = solution.norm();
    if sol_norm == 0.0 {
        return Ok(0.0);
    }
    let solved = asm.solved()?;
    Ok(spectral_norm_c(&scale_segments(asm, &solved, deltas)) / sol_norm)
}

/// Upper bound `min(sqrt(6) kappa1, alpha / |S|_F)` with `alpha` the sum of
/// per-segment weighted spectral norms.
pub fn kappa_u_complex(asm: &JacobianAssembly, solution: &CMat, deltas: &[f64; 6]) -> Result<f64> {
    let sol_norm = solution.norm();
    if sol_norm == 0.0 {
        return Ok(0.0);
    }
    let solved = asm.solved()?;
    let kappa1 = spectral_norm_c(&scale_segments(asm, &solved, deltas)) / sol_norm;
    let mut alpha = 0.0;
    for (i, d) in deltas.iter().enumerate() {
        if *d == 0.0 {
            continue;
        }
        let range = asm.segment(i);
        let slice = solved.columns(range.start, range.end - range.start).clone_owned();
        alpha += d * spectral_norm_c(&slice);
    }
    Ok((6.0f64.sqrt() * kappa1).min(alpha / sol_norm))
}

/// Real-arithmetic operator and structured blocks for a real problem.
struct RealOps {
    /// `Z_1` (CARE) or `T_1` (DARE).
    op: RMat,
    /// Block for `vec(dA)`.
    ja: RMat,
    /// Block for `sym(dG)`, sign as derived.
    jg: RMat,
    /// `S_1`, the `sym(dQ)` expansion.
    jq: RMat,
    /// Unstructured `dG` block (no `S_1` compression), sign dropped.
    jg_full: RMat,
}

fn require_real(problem: &RiccatiProblem) -> Result<()> {
    if problem.field != ScalarField::Real {
        return Err(Error::InvalidArgument("real-case bound requires a real problem".into()));
    }
    Ok(())
}

fn care_real_ops(problem: &RiccatiProblem, x: &RMat) -> Result<RealOps> {
    let (a, g, _q) = problem.real_parts();
    let n = a.nrows();
    let eye = RMat::identity(n, n);
    let closed = &a - &g * x;
    let closed_t = closed.transpose();
    let op = kron_real(&eye, &closed_t) + kron_real(&closed_t, &eye);
    let pi = transpose_permutation(n);
    let s1 = sym_expansion(n);
    let ja = kron_real(&eye, x) + kron_real(&x.transpose(), &eye) * &pi;
    let jg_full = kron_real(&x.transpose(), x);
    let jg = -(&jg_full * &s1);
    Ok(RealOps { op, ja, jg, jq: s1, jg_full })
}

fn dare_real_ops(problem: &RiccatiProblem, y: &RMat) -> Result<RealOps> {
    let (a, g, _q) = problem.real_parts();
    let n = a.nrows();
    let eye = RMat::identity(n, n);
    let w_c = inverse_of_i_plus_gy(&to_complex(&g), &to_complex(y))?;
    let w = re_part(&w_c);
    let atwt = a.transpose() * w.transpose();
    let op = RMat::identity(n * n, n * n) - kron_real(&atwt, &atwt);
    let k = a.transpose() * y * &w; // A^T Y W = A^T W^T Y^T for symmetric data
    let pi = transpose_permutation(n);
    let s1 = sym_expansion(n);
    let ja = kron_real(&eye, &k) + kron_real(&k, &eye) * &pi;
    let jg_full = kron_real(&k, &k);
    let jg = -(&jg_full * &s1);
    Ok(RealOps { op, ja, jg, jq: s1, jg_full })
}

fn real_ops(problem: &RiccatiProblem, solution: &RMat) -> Result<RealOps> {
    match problem.kind {
        RiccatiKind::Care => care_real_ops(problem, solution),
        RiccatiKind::Dare => dare_real_ops(problem, solution),
    }
}

fn lu_solve_real(op: &RMat, rhs: &RMat) -> Result<RMat> {
    op.clone().lu().solve(rhs).ok_or(Error::SingularOperator {
        context: "derivative operator is singular".into(),
    })
}

fn kappa_u_real_impl(problem: &RiccatiProblem, solution: &RMat, deltas: &[f64; 3]) -> Result<f64> {
    require_real(problem)?;
    let sol_norm = solution.norm();
    if sol_norm == 0.0 {
        return Ok(0.0);
    }
    let ops = real_ops(problem, solution)?;
    let sa = lu_solve_real(&ops.op, &ops.ja)?;
    let sg = lu_solve_real(&ops.op, &ops.jg)?;
    let sq = lu_solve_real(&ops.op, &ops.jq)?;

    let mut stacked = RMat::zeros(sa.nrows(), sa.ncols() + sg.ncols() + sq.ncols());
    stacked.view_mut((0, 0), sa.shape()).copy_from(&(&sa * deltas[0]));
    stacked.view_mut((0, sa.ncols()), sg.shape()).copy_from(&(&sg * deltas[1]));
    stacked
        .view_mut((0, sa.ncols() + sg.ncols()), sq.shape())
        .copy_from(&(&sq * deltas[2]));
    let first = 3.0f64.sqrt() * spectral_norm_r(&stacked);
    let beta = deltas[0] * spectral_norm_r(&sa)
        + deltas[1] * spectral_norm_r(&sg)
        + deltas[2] * spectral_norm_r(&sq);
    Ok(first.min(beta) / sol_norm)
}

fn kappa1u_unstructured_real_impl(
    problem: &RiccatiProblem,
    solution: &RMat,
    deltas: &[f64; 3],
) -> Result<f64> {
    require_real(problem)?;
    let sol_norm = solution.norm();
    if sol_norm == 0.0 {
        return Ok(0.0);
    }
    let ops = real_ops(problem, solution)?;
    let n2 = ops.op.nrows();
    let sa = lu_solve_real(&ops.op, &ops.ja)?;
    let sg = lu_solve_real(&ops.op, &ops.jg_full)?;
    let sq = lu_solve_real(&ops.op, &RMat::identity(n2, n2))?;

    let mut stacked = RMat::zeros(n2, 3 * n2);
    stacked.view_mut((0, 0), (n2, n2)).copy_from(&(&sa * deltas[0]));
    stacked.view_mut((0, n2), (n2, n2)).copy_from(&(&sg * deltas[1]));
    stacked.view_mut((0, 2 * n2), (n2, n2)).copy_from(&(&sq * deltas[2]));
    let first = 3.0f64.sqrt() * spectral_norm_r(&stacked);
    let beta = deltas[0] * spectral_norm_r(&sa)
        + deltas[1] * spectral_norm_r(&sg)
        + deltas[2] * spectral_norm_r(&sq);
    Ok(first.min(beta) / sol_norm)
}

/// Mixed and componentwise condition numbers with their simpler bounds.
#[derive(Clone, Copy, Debug)]
pub struct MixedComponentwise {
    pub mixed: f64,
    pub componentwise: f64,
    pub mixed_bound: f64,
    pub componentwise_bound: f64,
    pub degenerate: bool,
}

/// Shared mixed/componentwise evaluator. `abs_solved` are the entrywise
/// absolute values of the solved Jacobian blocks and `weights` the packed
/// absolute data vectors, in matching order. `bracket` is the data-product
/// matrix inside the simpler bounds.
fn mixed_comp_from_parts(
    solution_abs: &RMat,
    op_inv_abs_rows: &RMat,
    parts: &[(RMat, RVec)],
    bracket: &RMat,
) -> MixedComponentwise {
    let n2 = op_inv_abs_rows.nrows();
    let sol_max = max_abs_real(solution_abs);
    if sol_max == 0.0 {
        return MixedComponentwise {
            mixed: 0.0,
            componentwise: 0.0,
            mixed_bound: 0.0,
            componentwise_bound: 0.0,
            degenerate: true,
        };
    }
    let mut total = RVec::zeros(n2);
    for (block_abs, weight) in parts {
        total += block_abs * weight;
    }
    let mixed = total.amax() / sol_max;

    let sol_vec = vectorize_real(solution_abs);
    let mut componentwise = 0.0f64;
    for i in 0..n2 {
        if sol_vec[i] != 0.0 {
            componentwise = componentwise.max(total[i] / sol_vec[i]);
        }
    }

    let bracket_max = max_abs_real(bracket);
    let mixed_bound = inf_norm(op_inv_abs_rows) * bracket_max / sol_max;
    let mut comp_rows = 0.0f64;
    for i in 0..n2 {
        if sol_vec[i] != 0.0 {
            let row_sum: f64 = op_inv_abs_rows.row(i).iter().map(|x| x.abs()).sum();
            comp_rows = comp_rows.max(row_sum / sol_vec[i]);
        }
    }
    let componentwise_bound = comp_rows * bracket_max;

    MixedComponentwise { mixed, componentwise, mixed_bound, componentwise_bound, degenerate: false }
}

fn max_abs_real(m: &RMat) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

fn op_inverse_abs(op: &CMat) -> Result<RMat> {
    let n = op.nrows();
    let inv = op
        .clone()
        .lu()
        .solve(&CMat::identity(n, n))
        .ok_or(Error::SingularOperator { context: "derivative operator is singular".into() })?;
    Ok(entry_abs(&inv))
}

fn op_inverse_abs_real(op: &RMat) -> Result<RMat> {
    let n = op.nrows();
    let inv = op
        .clone()
        .lu()
        .solve(&RMat::identity(n, n))
        .ok_or(Error::SingularOperator { context: "derivative operator is singular".into() })?;
    Ok(inv.map(|x| x.abs()))
}

/// Theorem-style mixed/componentwise numbers for the complex path.
pub fn mixed_comp_complex(
    asm: &JacobianAssembly,
    problem: &RiccatiProblem,
    solution: &CMat,
) -> Result<MixedComponentwise> {
    let solved = asm.solved()?;
    let re_a = re_part(&problem.a);
    let im_a = crate::matrix::im_part(&problem.a);
    let re_g = re_part(&problem.g);
    let im_g = crate::matrix::im_part(&problem.g);
    let re_q = re_part(&problem.q);
    let im_q = crate::matrix::im_part(&problem.q);

    let weights: [RVec; 6] = [
        vectorize_real(&re_a.abs()),
        vectorize_real(&im_a.abs()),
        upper_pack(&re_g.abs()),
        strict_upper_pack(&im_g.abs()),
        upper_pack(&re_q.abs()),
        strict_upper_pack(&im_q.abs()),
    ];
    let mut parts = Vec::with_capacity(6);
    for i in 0..6 {
        let range = asm.segment(i);
        let slice = solved.columns(range.start, range.end - range.start).clone_owned();
        parts.push((entry_abs(&slice), weights[i].clone()));
    }

    let sol_abs = entry_abs(solution);
    let bracket = bracket_complex(asm, problem, &sol_abs)?;
    let op_inv_abs = op_inverse_abs(&asm.op)?;
    Ok(mixed_comp_from_parts(&sol_abs, &op_inv_abs, &parts, &bracket))
}

fn bracket_complex(asm: &JacobianAssembly, problem: &RiccatiProblem, sol_abs: &RMat) -> Result<RMat> {
    let abs = entry_abs;
    let re_a_abs = re_part(&problem.a).abs();
    let im_a_abs = crate::matrix::im_part(&problem.a).abs();
    let re_g_abs = re_part(&problem.g).abs();
    let im_g_abs = crate::matrix::im_part(&problem.g).abs();
    let re_q_abs = re_part(&problem.q).abs();
    let im_q_abs = crate::matrix::im_part(&problem.q).abs();
    match asm.kind {
        RiccatiKind::Care => {
            let x = sol_abs;
            Ok(x * &re_a_abs
                + re_a_abs.transpose() * x
                + x * &im_a_abs
                + im_a_abs.transpose() * x
                + x * &re_g_abs * x
                + x * &im_g_abs * x
                + re_q_abs
                + im_q_abs)
        }
        RiccatiKind::Dare => {
            let y = sol_abs;
            let w_abs = abs(asm.w.as_ref().expect("DARE assembly carries W"));
            let a_abs = abs(&problem.a);
            let ah_abs = abs(&problem.a.adjoint());
            let front = &ah_abs * y * &w_abs;
            Ok(&front * &re_a_abs
                + re_a_abs.transpose() * y * &w_abs * &a_abs
                + &front * &im_a_abs
                + im_a_abs.transpose() * y * &w_abs * &a_abs
                + &front * &re_g_abs * y * &w_abs * &a_abs
                + &front * &im_g_abs * y * &w_abs * &a_abs
                + re_q_abs
                + im_q_abs)
        }
    }
}

fn mixed_comp_real_impl(problem: &RiccatiProblem, solution: &RMat) -> Result<MixedComponentwise> {
    require_real(problem)?;
    let (a, g, q) = problem.real_parts();
    let ops = real_ops(problem, solution)?;
    let sa = lu_solve_real(&ops.op, &ops.ja)?;
    let sg = lu_solve_real(&ops.op, &ops.jg)?;
    let sq = lu_solve_real(&ops.op, &ops.jq)?;
    let parts = vec![
        (sa.abs(), vectorize_real(&a.abs())),
        (sg.abs(), upper_pack(&g.abs())),
        (sq.abs(), upper_pack(&q.abs())),
    ];
    let bracket = match problem.kind {
        RiccatiKind::Care => {
            let x = solution;
            let (a_abs, x_abs) = (a.abs(), x.abs());
            &x_abs * &a_abs + a_abs.transpose() * &x_abs + &x_abs * g.abs() * &x_abs + q.abs()
        }
        RiccatiKind::Dare => {
            let y_abs = solution.abs();
            let w = re_part(&inverse_of_i_plus_gy(&to_complex(&g), &to_complex(solution))?);
            let (a_abs, w_abs) = (a.abs(), w.abs());
            let front = a_abs.transpose() * &y_abs * &w_abs;
            &front * &a_abs + &front * &a_abs + &front * g.abs() * &y_abs * &w_abs * &a_abs + q.abs()
        }
    };
    let op_inv_abs = op_inverse_abs_real(&ops.op)?;
    Ok(mixed_comp_from_parts(&solution.abs(), &op_inv_abs, &parts, &bracket))
}

// --- spec-facing wrappers -------------------------------------------------

pub fn care_kappa1_complex(problem: &RiccatiProblem, x: &CMat, deltas: &[f64; 6]) -> Result<f64> {
    let asm = assemble_care_jacobian(problem, x)?;
    kappa1_complex(&asm, x, deltas)
}

pub fn care_kappa_u_complex(problem: &RiccatiProblem, x: &CMat, deltas: &[f64; 6]) -> Result<f64> {
    let asm = assemble_care_jacobian(problem, x)?;
    kappa_u_complex(&asm, x, deltas)
}

/// Structured real-case bound built from the sym-packed perturbation measure.
pub fn care_kappa_u_real(problem: &RiccatiProblem, x: &CMat, deltas: &[f64; 3]) -> Result<f64> {
    assert_kind(problem, RiccatiKind::Care)?;
    kappa_u_real_impl(problem, &re_part(x), deltas)
}

/// Unstructured comparison bound weighted by full Frobenius norms.
pub fn care_kappa1u_unstructured_real(
    problem: &RiccatiProblem,
    x: &CMat,
    deltas: &[f64; 3],
) -> Result<f64> {
    assert_kind(problem, RiccatiKind::Care)?;
    kappa1u_unstructured_real_impl(problem, &re_part(x), deltas)
}

pub fn care_mixed_comp_complex(problem: &RiccatiProblem, x: &CMat) -> Result<MixedComponentwise> {
    let asm = assemble_care_jacobian(problem, x)?;
    mixed_comp_complex(&asm, problem, x)
}

pub fn care_mixed_comp_real(problem: &RiccatiProblem, x: &CMat) -> Result<MixedComponentwise> {
    assert_kind(problem, RiccatiKind::Care)?;
    mixed_comp_real_impl(problem, &re_part(x))
}

pub fn dare_kappa1_complex(problem: &RiccatiProblem, y: &CMat, deltas: &[f64; 6]) -> Result<f64> {
    let asm = assemble_dare_jacobian(problem, y)?;
    kappa1_complex(&asm, y, deltas)
}

pub fn dare_kappa_u_complex(problem: &RiccatiProblem, y: &CMat, deltas: &[f64; 6]) -> Result<f64> {
    let asm = assemble_dare_jacobian(problem, y)?;
    kappa_u_complex(&asm, y, deltas)
}

pub fn dare_kappa_u_real(problem: &RiccatiProblem, y: &CMat, deltas: &[f64; 3]) -> Result<f64> {
    assert_kind(problem, RiccatiKind::Dare)?;
    kappa_u_real_impl(problem, &re_part(y), deltas)
}

pub fn dare_kappa1u_unstructured_real(
    problem: &RiccatiProblem,
    y: &CMat,
    deltas: &[f64; 3],
) -> Result<f64> {
    assert_kind(problem, RiccatiKind::Dare)?;
    kappa1u_unstructured_real_impl(problem, &re_part(y), deltas)
}

pub fn dare_mixed_comp_complex(problem: &RiccatiProblem, y: &CMat) -> Result<MixedComponentwise> {
    let asm = assemble_dare_jacobian(problem, y)?;
    mixed_comp_complex(&asm, problem, y)
}

pub fn dare_mixed_comp_real(problem: &RiccatiProblem, y: &CMat) -> Result<MixedComponentwise> {
    assert_kind(problem, RiccatiKind::Dare)?;
    mixed_comp_real_impl(problem, &re_part(y))
}

// --- aggregated report ----------------------------------------------------

/// All condition quantities for one solved problem.
#[derive(Clone, Debug)]
pub struct ConditionReport {
    /// Exact structured normwise number from the complex path.
    pub kappa1: f64,
    /// Structured normwise upper bound (real-case bound for real problems).
    pub kappa_u: f64,
    pub mixed_m: f64,
    pub comp_c: f64,
    pub mixed_m_u: f64,
    pub comp_c_u: f64,
    /// Frobenius-weighted unstructured bound; real problems only.
    pub unstructured_kappa1_u: Option<f64>,
    pub deltas: DeltaParameters,
    /// Two-norm condition of the derivative operator (`Z` or `T`).
    pub operator_condition: f64,
    /// Set when the solution is identically zero and relative condition
    /// numbers are reported as zero.
    pub degenerate_zero_solution: bool,
}

pub fn condition_report(
    problem: &RiccatiProblem,
    solution: &CMat,
    convention: &DeltaConvention,
) -> Result<ConditionReport> {
    let deltas = DeltaParameters::resolve(problem, convention)?;
    let asm = match problem.kind {
        RiccatiKind::Care => assemble_care_jacobian(problem, solution)?,
        RiccatiKind::Dare => assemble_dare_jacobian(problem, solution)?,
    };
    let degenerate = solution.norm() == 0.0 || max_abs(solution) == 0.0;

    let kappa1 = kappa1_complex(&asm, solution, &deltas.complex6)?;
    let (kappa_u, unstructured) = match problem.field {
        ScalarField::Real => {
            let ku = kappa_u_real_impl(problem, &re_part(solution), &deltas.real3)?;
            let kz = kappa1u_unstructured_real_impl(problem, &re_part(solution), &deltas.zhou3)?;
            (ku, Some(kz))
        }
        ScalarField::Complex => (kappa_u_complex(&asm, solution, &deltas.complex6)?, None),
    };
    let mc = match problem.field {
        ScalarField::Real => mixed_comp_real_impl(problem, &re_part(solution))?,
        ScalarField::Complex => mixed_comp_complex(&asm, problem, solution)?,
    };

    let svd = asm.op.clone().svd(false, false);
    let smax = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let operator_condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };

    Ok(ConditionReport {
        kappa1,
        kappa_u,
        mixed_m: mc.mixed,
        comp_c: mc.componentwise,
        mixed_m_u: mc.mixed_bound,
        comp_c_u: mc.componentwise_bound,
        unstructured_kappa1_u: unstructured,
        deltas,
        operator_condition,
        degenerate_zero_solution: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{example1_problem as example1, example2_problem as example2};
    use crate::riccati::{solve_care, solve_dare};
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_care_assembly_matches_hand_expansion() {
        // a = -1, g = 1, q = 1: x = sqrt(2) - 1 solves q + 2ax - gx^2 = 0
        let x_val = 2f64.sqrt() - 1.0;
        let problem = RiccatiProblem::new_care_real(
            dmatrix![-1.0],
            dmatrix![1.0],
            dmatrix![1.0],
        )
        .unwrap();
        let x = CMat::from_element(1, 1, Cpx::new(x_val, 0.0));
        let asm = assemble_care_jacobian(&problem, &x).unwrap();
        let closed = -1.0 - x_val;
        assert!((asm.op[(0, 0)] - Cpx::new(2.0 * closed, 0.0)).norm() < 1e-14);
        // blocks: [2x, i*0, -x^2, 1] with zero-width skew segments
        assert!((asm.blocks[(0, 0)] - Cpx::new(2.0 * x_val, 0.0)).norm() < 1e-14);
        assert!(asm.blocks[(0, 1)].norm() < 1e-14);
        assert!((asm.blocks[(0, 2)] - Cpx::new(-x_val * x_val, 0.0)).norm() < 1e-14);
        assert!((asm.blocks[(0, 3)] - Cpx::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn scalar_dare_assembly_matches_hand_expansion() {
        let (a, g, q) = (0.5, 0.4, 1.2);
        let problem = RiccatiProblem::new_dare_real(
            dmatrix![a],
            dmatrix![g],
            dmatrix![q],
        )
        .unwrap();
        let sol = solve_dare(&problem).unwrap();
        let y = sol.solution[(0, 0)].re;
        let w = 1.0 / (1.0 + g * y);
        let asm = assemble_dare_jacobian(&problem, &sol.solution).unwrap();
        assert!((asm.op[(0, 0)].re - (1.0 - (a * w) * (a * w))).abs() < 1e-12);
        // N blocks: [2 a y w, 0, -(a y w)^2, 1]
        assert!((asm.blocks[(0, 0)].re - 2.0 * a * y * w).abs() < 1e-12);
        assert!((asm.blocks[(0, 2)].re + (a * y * w) * (a * y * w)).abs() < 1e-12);
        assert!((asm.blocks[(0, 3)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dare_zero_a_gives_identity_operator() {
        let problem = RiccatiProblem::new_dare_real(
            RMat::zeros(2, 2),
            RMat::identity(2, 2),
            RMat::identity(2, 2),
        )
        .unwrap();
        let sol = solve_dare(&problem).unwrap();
        let asm = assemble_dare_jacobian(&problem, &sol.solution).unwrap();
        assert!((&asm.op - CMat::identity(4, 4)).norm() < 1e-13);
        // A and G blocks vanish; the Q block reproduces vec(dQ)
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let base = RMat::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let dq = (&base + base.transpose()) * 0.5;
        let delta = StructuredDelta::from_matrices(
            &CMat::zeros(2, 2),
            &CMat::zeros(2, 2),
            &to_complex(&dq),
        )
        .unwrap();
        let deriv = asm.apply(&delta).unwrap();
        assert!((deriv - to_complex(&dq)).norm() < 1e-13);
    }

    #[test]
    fn q_block_reconstructs_hermitian_perturbations() {
        let (problem, x_exact) = example1(1.0);
        let asm = assemble_care_jacobian(&problem, &x_exact).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let base = CMat::from_fn(2, 2, |_, _| {
            Cpx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let dq = crate::matrix::hermitize(&base);
        let delta = StructuredDelta::from_matrices(&CMat::zeros(2, 2), &CMat::zeros(2, 2), &dq).unwrap();
        let range = asm.segment(4);
        let q_cols = asm.blocks.columns(range.start, 4 * 4 - range.start).clone_owned();
        let tail = delta.stacked().rows(range.start, 4 * 4 - range.start).map(|x| Cpx::new(x, 0.0));
        let recon = crate::structured::unvectorize(&(&q_cols * tail), 2, 2).unwrap();
        assert!((recon - &dq).norm() < 1e-14);
    }

    #[test]
    fn finite_difference_agrees_with_assembly() {
        // one structured direction, two step sizes; the full protocol lives in
        // the acceptance suite
        let (problem, x_exact) = example1(1.0);
        let asm = assemble_care_jacobian(&problem, &x_exact).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let raw = RVec::from_fn(16, |_, _| rng.gen_range(-1.0..1.0));
        let delta = StructuredDelta::from_stacked(&(raw.clone() / raw.norm()), 2).unwrap();
        let deriv = asm.apply(&delta).unwrap();
        let (da, dg, dq) = delta.to_matrices();

        let mut errs = Vec::new();
        for eps in [1e-5, 5e-6] {
            let perturbed = RiccatiProblem::new_unchecked(
                RiccatiKind::Care,
                ScalarField::Complex,
                &problem.a + &da * Cpx::new(eps, 0.0),
                &problem.g + &dg * Cpx::new(eps, 0.0),
                &problem.q + &dq * Cpx::new(eps, 0.0),
            );
            let xp = solve_care(&perturbed).unwrap().solution;
            let fd = (&xp - &x_exact) / Cpx::new(eps, 0.0);
            errs.push((fd - &deriv).norm());
        }
        let ratio = errs[0] / errs[1];
        assert!(ratio > 1.5 && ratio < 2.5, "ratio {ratio}");
    }

    #[test]
    fn table1_values_reproduced() {
        // structured bound, unstructured bound, and mixed/componentwise
        // numbers against the frozen reference values
        let cases = [
            (1.0, 4.0054e-8, 3.7258e-8, 1.6667, 1.6667),
            (1e6, 5.000e-3, 5.000e-3, 1.5000, 1.5000),
            (1e-6, 5.0000e3, 5.0000e3, 2.0000, 2.0000),
        ];
        for (nu, sym_bound, frob_bound, m_ref, c_ref) in cases {
            let (problem, x_exact) = example1(nu);
            let deltas = DeltaParameters::defaults(&problem);
            let eps = 1e-8;
            let ku = care_kappa_u_real(&problem, &x_exact, &deltas.real3).unwrap();
            let kz = care_kappa1u_unstructured_real(&problem, &x_exact, &deltas.zhou3).unwrap();
            assert!(
                (eps * ku - sym_bound).abs() <= 1e-3 * sym_bound,
                "nu={nu}: sym bound {:.5e} vs {:.5e}",
                eps * ku,
                sym_bound
            );
            assert!(
                (eps * kz - frob_bound).abs() <= 1e-3 * frob_bound,
                "nu={nu}: frob bound {:.5e} vs {:.5e}",
                eps * kz,
                frob_bound
            );
            let mc = care_mixed_comp_real(&problem, &x_exact).unwrap();
            assert!((mc.mixed - m_ref).abs() <= 1e-3 * m_ref, "nu={nu}: m {:.6}", mc.mixed);
            assert!((mc.componentwise - c_ref).abs() <= 1e-3 * c_ref);
        }
    }

    #[test]
    fn table2_values_reproduced() {
        // the first-row mixed/componentwise references come from the
        // finite-difference-validated Jacobian
        let cases = [
            (1, 7.1051e-12, 6.6183e-12, 5.1562e-12, 1.18605e-11),
            (5, 5.2934e-8, 5.0002e-8, 3.9507e-8, 1.5802e-7),
            (7, 5.2932e-6, 5.0000e-6, 3.9506e-6, 1.5802e-5),
        ];
        for (m, sym_bound, frob_bound, m_ref, c_ref) in cases {
            let (problem, y_exact) = example2(m);
            let deltas = DeltaParameters::defaults(&problem);
            let eps = 1e-12;
            let ku = dare_kappa_u_real(&problem, &y_exact, &deltas.real3).unwrap();
            let kz = dare_kappa1u_unstructured_real(&problem, &y_exact, &deltas.zhou3).unwrap();
            assert!(
                (eps * ku - sym_bound).abs() <= 1e-3 * sym_bound,
                "m={m}: sym bound {:.5e} vs {:.5e}",
                eps * ku,
                sym_bound
            );
            assert!(
                (eps * kz - frob_bound).abs() <= 1e-3 * frob_bound,
                "m={m}: frob bound {:.5e}",
                eps * kz
            );
            let mc = dare_mixed_comp_real(&problem, &y_exact).unwrap();
            assert!(
                (eps * mc.mixed - m_ref).abs() <= 2e-3 * m_ref,
                "m={m}: mixed {:.5e} vs {m_ref:.5e}",
                eps * mc.mixed
            );
            assert!(
                (eps * mc.componentwise - c_ref).abs() <= 2e-3 * c_ref,
                "m={m}: comp {:.5e} vs {c_ref:.5e}",
                eps * mc.componentwise
            );
        }
    }

    #[test]
    fn real_complex_consistency() {
        // a real problem fed through the complex path with zero imaginary
        // weights matches the real-arithmetic first bound member
        let (problem, x_exact) = example1(1.0);
        let deltas = DeltaParameters::defaults(&problem);
        let kappa1 = care_kappa1_complex(&problem, &x_exact, &deltas.complex6).unwrap();

        let ops = care_real_ops(&problem, &re_part(&x_exact)).unwrap();
        let sa = lu_solve_real(&ops.op, &ops.ja).unwrap();
        let sg = lu_solve_real(&ops.op, &ops.jg).unwrap();
        let sq = lu_solve_real(&ops.op, &ops.jq).unwrap();
        let mut stacked = RMat::zeros(4, sa.ncols() + sg.ncols() + sq.ncols());
        stacked.view_mut((0, 0), sa.shape()).copy_from(&(&sa * deltas.real3[0]));
        stacked.view_mut((0, sa.ncols()), sg.shape()).copy_from(&(&sg * deltas.real3[1]));
        stacked
            .view_mut((0, sa.ncols() + sg.ncols()), sq.shape())
            .copy_from(&(&sq * deltas.real3[2]));
        let real_value = spectral_norm_r(&stacked) / x_exact.norm();
        assert!((kappa1 - real_value).abs() <= 1e-10 * real_value);
    }

    #[test]
    fn bound_dominance_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for trial in 0..12 {
            let n = rng.gen_range(2..5);
            let complex = trial % 2 == 0;
            let gen = |rng: &mut ChaCha8Rng| {
                CMat::from_fn(n, n, |_, _| {
                    Cpx::new(rng.gen_range(-1.0..1.0), if complex { rng.gen_range(-1.0..1.0) } else { 0.0 })
                })
            };
            let a = gen(&mut rng);
            let bf = gen(&mut rng);
            let cf = gen(&mut rng);
            let g = crate::matrix::hermitize(&(&bf * bf.adjoint()));
            let q = crate::matrix::hermitize(&(&cf * cf.adjoint()));
            let field = if complex { ScalarField::Complex } else { ScalarField::Real };
            for kind in [RiccatiKind::Care, RiccatiKind::Dare] {
                let problem =
                    RiccatiProblem::new(kind, field, a.clone(), g.clone(), q.clone()).unwrap();
                let sol = crate::riccati::solve(&problem).unwrap();
                let report = condition_report(&problem, &sol.solution, &DeltaConvention::Default).unwrap();
                let slack = 1.0 + 1e-10;
                assert!(report.mixed_m <= report.mixed_m_u * slack, "trial {trial} {kind:?}");
                assert!(report.comp_c <= report.comp_c_u * slack, "trial {trial} {kind:?}");
                if field == ScalarField::Complex {
                    let asm = match kind {
                        RiccatiKind::Care => assemble_care_jacobian(&problem, &sol.solution).unwrap(),
                        RiccatiKind::Dare => assemble_dare_jacobian(&problem, &sol.solution).unwrap(),
                    };
                    let ku = kappa_u_complex(&asm, &sol.solution, &report.deltas.complex6).unwrap();
                    assert!(ku <= 6.0f64.sqrt() * report.kappa1 * slack);
                }
            }
        }
    }

    #[test]
    fn zero_solution_is_degenerate() {
        // A stable, Q = 0 gives X = 0
        let problem = RiccatiProblem::new_care_real(
            dmatrix![-1.0, 0.0; 0.0, -2.0],
            RMat::identity(2, 2),
            RMat::zeros(2, 2),
        )
        .unwrap();
        let sol = solve_care(&problem).unwrap();
        assert_eq!(sol.solution.norm(), 0.0);
        let report = condition_report(&problem, &sol.solution, &DeltaConvention::Default).unwrap();
        assert!(report.degenerate_zero_solution);
        assert_eq!(report.kappa1, 0.0);
        assert_eq!(report.kappa_u, 0.0);
        assert_eq!(report.mixed_m, 0.0);
    }

    #[test]
    fn explicit_deltas_validated() {
        let (problem, _) = example1(1.0);
        assert!(DeltaParameters::resolve(&problem, &DeltaConvention::Explicit(vec![1.0; 6])).is_err());
        let ok = DeltaParameters::resolve(&problem, &DeltaConvention::Explicit(vec![1.0, 2.0, 3.0]));
        assert_eq!(ok.unwrap().real3, [1.0, 2.0, 3.0]);
    }
}
