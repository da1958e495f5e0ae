//! Perturbation experiments and reference-table reproduction.
//!
//! Perturbations are componentwise-relative: `dA = eps * (M1 ⊡ A)` with `M1`
//! uniform in `(-1, 1)` entrywise and `M2`, `M3` mirrored to keep `dG`, `dQ`
//! Hermitian. Each experiment re-solves the perturbed equation and compares
//! the observed change in the solution against the predicted first-order
//! bounds.

use crate::condnum::{
    care_kappa1u_unstructured_real, care_kappa_u_real, care_mixed_comp_real,
    dare_kappa1u_unstructured_real, dare_kappa_u_real, dare_mixed_comp_real, DeltaParameters,
};
use crate::error::Result;
use crate::matrix::{entry_abs, max_abs, to_complex, CMat, Cpx, RMat};
use crate::riccati::{solve, RiccatiKind, RiccatiProblem, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
pub struct PerturbationSpec {
    pub epsilon: f64,
    pub seed: u64,
}

/// One row of a perturbation experiment: the observed relative changes in the
/// re-solved solution next to the predicted first-order estimates.
///
/// The two normwise prediction columns follow the reference tables'
/// arrangement: `pred_kappa_u` carries the Frobenius-weighted unstructured
/// bound and `pred_kappa1_u` the sym-packed structured bound.
#[derive(Clone, Copy, Debug)]
pub struct ExperimentRow {
    pub parameter: f64,
    pub observed_rel_fro: f64,
    pub observed_rel_max: f64,
    pub observed_comp_max: f64,
    pub pred_kappa_u: f64,
    pub pred_kappa1_u: f64,
    pub pred_m: f64,
    pub pred_c: f64,
    pub solve_failed: bool,
}

fn uniform_mat(rng: &mut ChaCha8Rng, n: usize) -> RMat {
    RMat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
}

fn symmetric_uniform(rng: &mut ChaCha8Rng, n: usize) -> RMat {
    let mut m = RMat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-1.0..1.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn hadamard(mask: &RMat, data: &RMat) -> RMat {
    RMat::from_fn(data.nrows(), data.ncols(), |i, j| mask[(i, j)] * data[(i, j)])
}

/// Componentwise-relative structured perturbation `(dA, dG, dQ)`.
///
/// `|dA| <= eps |A|` entrywise, mirrored masks keep `dG`, `dQ` Hermitian;
/// complex problems draw independent masks for real and imaginary parts.
pub fn gen_structured_perturbation(
    problem: &RiccatiProblem,
    spec: &PerturbationSpec,
) -> (CMat, CMat, CMat) {
    let n = problem.order();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let eps = spec.epsilon;

    let re = |m: &CMat| m.map(|z| z.re);
    let im = |m: &CMat| m.map(|z| z.im);
    let complex = problem.field == ScalarField::Complex;

    let mut draw = |data: &CMat, mirrored: bool| -> CMat {
        let mask_re = if mirrored { symmetric_uniform(&mut rng, n) } else { uniform_mat(&mut rng, n) };
        let re_pert = hadamard(&mask_re, &re(data)) * eps;
        let im_pert = if complex {
            let mask_im = if mirrored { symmetric_uniform(&mut rng, n) } else { uniform_mat(&mut rng, n) };
            hadamard(&mask_im, &im(data)) * eps
        } else {
            RMat::zeros(n, n)
        };
        CMat::from_fn(n, n, |i, j| Cpx::new(re_pert[(i, j)], im_pert[(i, j)]))
    };

    let da = draw(&problem.a, false);
    let dg = draw(&problem.g, true);
    let dq = draw(&problem.q, true);
    (da, dg, dq)
}

/// Re-solve under one drawn perturbation and assemble the comparison row.
///
/// `base` is the unperturbed solution; `parameter` only labels the row.
pub fn run_perturbation_experiment(
    problem: &RiccatiProblem,
    base_solution: &CMat,
    spec: &PerturbationSpec,
    parameter: f64,
) -> Result<ExperimentRow> {
    let deltas = DeltaParameters::defaults(problem);
    let (pred_sym, pred_frob, mc) = match problem.kind {
        RiccatiKind::Care => (
            care_kappa_u_real(problem, base_solution, &deltas.real3)?,
            care_kappa1u_unstructured_real(problem, base_solution, &deltas.zhou3)?,
            care_mixed_comp_real(problem, base_solution)?,
        ),
        RiccatiKind::Dare => (
            dare_kappa_u_real(problem, base_solution, &deltas.real3)?,
            dare_kappa1u_unstructured_real(problem, base_solution, &deltas.zhou3)?,
            dare_mixed_comp_real(problem, base_solution)?,
        ),
    };
    let eps = spec.epsilon;
    let mut row = ExperimentRow {
        parameter,
        observed_rel_fro: 0.0,
        observed_rel_max: 0.0,
        observed_comp_max: 0.0,
        pred_kappa_u: eps * pred_frob,
        pred_kappa1_u: eps * pred_sym,
        pred_m: eps * mc.mixed,
        pred_c: eps * mc.componentwise,
        solve_failed: false,
    };
    if eps == 0.0 {
        return Ok(row);
    }

    let (da, dg, dq) = gen_structured_perturbation(problem, spec);
    let perturbed = RiccatiProblem::new_unchecked(
        problem.kind,
        problem.field,
        &problem.a + &da,
        &problem.g + &dg,
        &problem.q + &dq,
    );
    let resolved = match solve(&perturbed) {
        Ok(s) => s,
        Err(_) => {
            row.solve_failed = true;
            return Ok(row);
        }
    };
    let delta_x = &resolved.solution - base_solution;
    row.observed_rel_fro = delta_x.norm() / base_solution.norm();
    row.observed_rel_max = max_abs(&delta_x) / max_abs(base_solution);

    // componentwise-relative change with the zero-denominator-to-zero rule
    let num = entry_abs(&delta_x);
    let den = entry_abs(base_solution);
    let mut comp = 0.0f64;
    for i in 0..num.nrows() {
        for j in 0..num.ncols() {
            if den[(i, j)] != 0.0 {
                comp = comp.max(num[(i, j)] / den[(i, j)]);
            }
        }
    }
    row.observed_comp_max = comp;
    Ok(row)
}

/// CARE benchmark family: `A = [[0, nu], [0, 0]]`, `G = diag(0, 1)`,
/// `Q = I`, with the closed-form solution returned alongside.
pub fn example1_problem(nu: f64) -> (RiccatiProblem, CMat) {
    let a = RMat::from_row_slice(2, 2, &[0.0, nu, 0.0, 0.0]);
    let g = RMat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
    let q = RMat::identity(2, 2);
    let s = (1.0 + 2.0 * nu).sqrt();
    let x = RMat::from_row_slice(2, 2, &[s / nu, 1.0, 1.0, s]);
    let problem = RiccatiProblem::new_care_real(a, g, q).expect("benchmark data is valid");
    (problem, to_complex(&x))
}

/// DARE benchmark family built from diagonal data conjugated by the
/// involution `V = I - 2 v v^T / 3`, `v = [1, 1, 1]^T`, with the closed-form
/// solution `Y = V diag(y) V`.
pub fn example2_problem(m: i32) -> (RiccatiProblem, CMat) {
    let p = 10f64.powi(m);
    let q0 = [p, 1.0, 1.0 / p];
    let a0 = [0.0, 1.0 / p, 1.0];
    let g0 = [1.0 / p, 1.0 / p, 1.0 / p];
    let v = RMat::identity(3, 3) - RMat::from_element(3, 3, 2.0 / 3.0);
    let diag = |d: &[f64; 3]| RMat::from_diagonal(&nalgebra::DVector::from_row_slice(d));
    let a = &v * diag(&a0) * &v;
    let g = &v * diag(&g0) * &v;
    let q = &v * diag(&q0) * &v;
    let mut y0 = [0.0; 3];
    for i in 0..3 {
        let s = a0[i] * a0[i] + q0[i] * g0[i] - 1.0;
        y0[i] = (s + (s * s + 4.0 * q0[i] * g0[i]).sqrt()) / (2.0 * g0[i]);
    }
    let y = &v * diag(&y0) * &v;
    let problem = RiccatiProblem::new_dare_real(a, g, q).expect("benchmark data is valid");
    (problem, to_complex(&y))
}

/// The CARE reference table: rows `nu in {1, 1e6, 1e-6}`.
pub fn reproduce_table1(epsilon: f64, seed: u64) -> Result<Vec<ExperimentRow>> {
    let mut rows = Vec::new();
    for (idx, nu) in [1.0, 1e6, 1e-6].into_iter().enumerate() {
        let (problem, _) = example1_problem(nu);
        let solved = solve(&problem)?;
        let spec = PerturbationSpec { epsilon, seed: seed.wrapping_add(idx as u64) };
        rows.push(run_perturbation_experiment(&problem, &solved.solution, &spec, nu)?);
    }
    Ok(rows)
}

/// The DARE reference table: rows `m in {1, 5, 7}`.
pub fn reproduce_table2(epsilon: f64, seed: u64) -> Result<Vec<ExperimentRow>> {
    let mut rows = Vec::new();
    for (idx, m) in [1i32, 5, 7].into_iter().enumerate() {
        let (problem, _) = example2_problem(m);
        let solved = solve(&problem)?;
        let spec = PerturbationSpec { epsilon, seed: seed.wrapping_add(idx as u64) };
        rows.push(run_perturbation_experiment(&problem, &solved.solution, &spec, m as f64)?);
    }
    Ok(rows)
}

/// First-order linear prediction of the solution change for a drawn
/// perturbation, through the structured Jacobian.
pub fn linear_prediction(
    problem: &RiccatiProblem,
    solution: &CMat,
    da: &CMat,
    dg: &CMat,
    dq: &CMat,
) -> Result<CMat> {
    let asm = match problem.kind {
        RiccatiKind::Care => crate::condnum::assemble_care_jacobian(problem, solution)?,
        RiccatiKind::Dare => crate::condnum::assemble_dare_jacobian(problem, solution)?,
    };
    let delta = crate::structured::StructuredDelta::from_matrices(da, dg, dq)?;
    asm.apply(&delta)
}
