//! Small-sample statistical estimation of per-entry condition matrices.
//!
//! Each estimate draws `k` orthonormal directions in the structured
//! perturbation space, solves one Lyapunov (or Stein) equation per direction
//! for the directional derivative of the solution, and aggregates the
//! entrywise root-sum-square scaled by the Wallis-factor ratio `w_k / w_p`.

use crate::error::{Error, Result};
use crate::lyapunov::{solve_continuous_lyapunov, solve_discrete_lyapunov};
use crate::matrix::{entry_abs, hermitize, to_complex, CMat, Cpx, RMat, RVec};
use crate::riccati::{inverse_of_i_plus_gy, RiccatiKind, RiccatiProblem};
use crate::structured::{hermitian_from_segments, sym_unpack, unvectorize_real, SymPacked};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Structured space the directions are drawn in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceStructure {
    /// Six-segment complex layout, dimension `4 n^2`.
    Complex,
    /// `[vec(dA) | sym(dG) | sym(dQ)]`, dimension `n^2 + n(n+1)`.
    Real,
}

impl SceStructure {
    pub fn dimension(&self, n: usize) -> usize {
        match self {
            SceStructure::Complex => 4 * n * n,
            SceStructure::Real => n * n + n * (n + 1),
        }
    }

    pub fn for_problem(problem: &RiccatiProblem) -> Self {
        match problem.field {
            crate::riccati::ScalarField::Real => SceStructure::Real,
            crate::riccati::ScalarField::Complex => SceStructure::Complex,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SceConfig {
    /// Sample count; estimates sharpen as `k` grows.
    pub k: usize,
    pub seed: u64,
    pub structure: SceStructure,
}

impl SceConfig {
    pub fn new(k: usize, seed: u64, structure: SceStructure) -> Self {
        SceConfig { k, seed, structure }
    }
}

pub const DEFAULT_SAMPLES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimateKind {
    NormwiseRelative,
    ComponentwiseRelative,
}

/// Per-entry nonnegative condition matrix estimate.
#[derive(Clone, Debug)]
pub struct ConditionMatrixEstimate {
    pub values: RMat,
    pub kind: EstimateKind,
    pub k: usize,
    pub seed: u64,
    /// The `w_k / w_p` ratio actually applied.
    pub wallis_ratio: f64,
}

/// Exact Wallis factor by its product formula.
pub fn wallis_exact(p: usize) -> f64 {
    match p {
        0 => f64::NAN,
        1 => 1.0,
        2 => 2.0 / std::f64::consts::PI,
        _ => {
            // odd: 1*3*...*(p-2) / 2*4*...*(p-1); even: (2/pi) * 2*4*.../(1*3*...)
            let mut ratio = if p % 2 == 0 { 2.0 / std::f64::consts::PI } else { 1.0 };
            let mut num = if p % 2 == 0 { 2.0 } else { 1.0 };
            while num <= (p - 2) as f64 {
                ratio *= num / (num + 1.0);
                num += 2.0;
            }
            ratio
        }
    }
}

/// Asymptotic approximation `sqrt(2 / (pi (p - 1/2)))`.
pub fn wallis_approx(p: usize) -> f64 {
    (2.0 / (std::f64::consts::PI * (p as f64 - 0.5))).sqrt()
}

/// Threshold below which the exact product formula is used.
pub const WALLIS_EXACT_MAX: usize = 64;

pub fn wallis_factor(p: usize) -> f64 {
    if p <= WALLIS_EXACT_MAX {
        wallis_exact(p)
    } else {
        wallis_approx(p)
    }
}

/// `w_k / w_p`, evaluated on the same branch for both arguments so the two
/// factors stay mutually consistent.
pub fn wallis_ratio(k: usize, p: usize) -> f64 {
    if p <= WALLIS_EXACT_MAX {
        wallis_exact(k) / wallis_exact(p)
    } else {
        wallis_approx(k) / wallis_approx(p)
    }
}

/// A drawn direction materialized as data-space matrices.
#[derive(Clone, Debug)]
pub struct StructuredDirection {
    pub a: CMat,
    pub g: CMat,
    pub q: CMat,
}

fn materialize(z: &RVec, n: usize, structure: SceStructure) -> StructuredDirection {
    match structure {
        SceStructure::Complex => {
            let delta = crate::structured::StructuredDelta::from_stacked(z, n)
                .expect("direction has the stacked length");
            let (a, g, q) = delta.to_matrices();
            StructuredDirection { a, g, q }
        }
        SceStructure::Real => {
            let (nn, tri) = (n * n, n * (n + 1) / 2);
            let a_seg = RVec::from_column_slice(&z.as_slice()[..nn]);
            let g_seg = RVec::from_column_slice(&z.as_slice()[nn..nn + tri]);
            let q_seg = RVec::from_column_slice(&z.as_slice()[nn + tri..]);
            StructuredDirection {
                a: to_complex(&unvectorize_real(&a_seg, n, n).expect("segment length")),
                g: to_complex(&sym_unpack(&SymPacked { n, data: g_seg })),
                q: to_complex(&sym_unpack(&SymPacked { n, data: q_seg })),
            }
        }
    }
}

/// Draw `k` orthonormal directions in the structured space (QR of a standard
/// normal `p x k` matrix) and materialize them. Deterministic in the seed.
pub fn draw_structured_directions(
    n: usize,
    k: usize,
    structure: SceStructure,
    seed: u64,
) -> Result<Vec<StructuredDirection>> {
    let p = structure.dimension(n);
    if k == 0 || k > p {
        return Err(Error::InvalidArgument(format!(
            "sample count {k} must lie in 1..={p} for order {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = RMat::zeros(p, k);
    for col in 0..k {
        for row in 0..p {
            raw[(row, col)] = StandardNormal.sample(&mut rng);
        }
    }
    let qr = raw.qr();
    let q = qr.q();
    Ok((0..k)
        .map(|j| materialize(&q.column(j).clone_owned(), n, structure))
        .collect())
}

fn data_norm(problem: &RiccatiProblem) -> f64 {
    (problem.a.norm_squared() + problem.g.norm_squared() + problem.q.norm_squared()).sqrt()
}

fn hadamard_c(a: &CMat, b: &CMat) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * b[(i, j)])
}

/// Entrywise root-sum-square of the directional derivatives, scaled by
/// `prefactor * w_k / w_p`, then divided by `|solution|` entrywise with the
/// zero-entry passthrough rule.
fn aggregate(
    derivatives: &[CMat],
    solution: &CMat,
    prefactor: f64,
    ratio: f64,
    kind: EstimateKind,
    config: &SceConfig,
) -> ConditionMatrixEstimate {
    let n = solution.nrows();
    let mut sq = RMat::zeros(n, n);
    for d in derivatives {
        for i in 0..n {
            for j in 0..n {
                sq[(i, j)] += d[(i, j)].norm_sqr();
            }
        }
    }
    let abs_est = sq.map(|v| prefactor * ratio * v.sqrt());
    let sol_abs = entry_abs(solution);
    let values = RMat::from_fn(n, n, |i, j| {
        if sol_abs[(i, j)] == 0.0 {
            abs_est[(i, j)] // zero solution entries keep the absolute estimate
        } else {
            abs_est[(i, j)] / sol_abs[(i, j)]
        }
    });
    ConditionMatrixEstimate { values, kind, k: config.k, seed: config.seed, wallis_ratio: ratio }
}

fn care_directional_derivatives(
    problem: &RiccatiProblem,
    x: &CMat,
    directions: &[StructuredDirection],
) -> Result<Vec<CMat>> {
    let closed = &problem.a - &problem.g * x;
    let mut out = Vec::with_capacity(directions.len());
    for dir in directions {
        let rhs = hermitize(
            &(x * &dir.g * x - &dir.q - x * &dir.a - dir.a.adjoint() * x),
        );
        out.push(solve_continuous_lyapunov(&closed, &rhs)?.solution);
    }
    Ok(out)
}

fn dare_directional_derivatives(
    problem: &RiccatiProblem,
    y: &CMat,
    directions: &[StructuredDirection],
) -> Result<Vec<CMat>> {
    let w = inverse_of_i_plus_gy(&problem.g, y)?;
    let closed = &w * &problem.a;
    let left = problem.a.adjoint() * y * &w; // A^H Y W
    let right = y * &w * &problem.a; // Y W A
    let mut out = Vec::with_capacity(directions.len());
    for dir in directions {
        let rhs = hermitize(
            &(&dir.q + &left * &dir.a + dir.a.adjoint() * &right - &left * &dir.g * &right),
        );
        out.push(solve_discrete_lyapunov(&closed, &rhs)?.solution);
    }
    Ok(out)
}

fn check_kind(problem: &RiccatiProblem, kind: RiccatiKind) -> Result<()> {
    if problem.kind != kind {
        return Err(Error::InvalidArgument(format!(
            "expected a {:?} problem, got {:?}",
            kind, problem.kind
        )));
    }
    Ok(())
}

/// Normwise per-entry estimate for a solved CARE.
pub fn sce_care_normwise(
    problem: &RiccatiProblem,
    x: &CMat,
    config: &SceConfig,
) -> Result<ConditionMatrixEstimate> {
    check_kind(problem, RiccatiKind::Care)?;
    let n = problem.order();
    let p = config.structure.dimension(n);
    let dirs = draw_structured_directions(n, config.k, config.structure, config.seed)?;
    let derivs = care_directional_derivatives(problem, x, &dirs)?;
    Ok(aggregate(
        &derivs,
        x,
        data_norm(problem),
        wallis_ratio(config.k, p),
        EstimateKind::NormwiseRelative,
        config,
    ))
}

/// Componentwise per-entry estimate for a solved CARE: directions are
/// multiplied entrywise by the data before the Lyapunov solves and no data
/// norm prefactor is applied.
pub fn sce_care_componentwise(
    problem: &RiccatiProblem,
    x: &CMat,
    config: &SceConfig,
) -> Result<ConditionMatrixEstimate> {
    check_kind(problem, RiccatiKind::Care)?;
    let n = problem.order();
    let p = config.structure.dimension(n);
    let dirs: Vec<StructuredDirection> =
        draw_structured_directions(n, config.k, config.structure, config.seed)?
            .into_iter()
            .map(|d| StructuredDirection {
                a: hadamard_c(&d.a, &problem.a),
                g: hadamard_c(&d.g, &problem.g),
                q: hadamard_c(&d.q, &problem.q),
            })
            .collect();
    let derivs = care_directional_derivatives(problem, x, &dirs)?;
    Ok(aggregate(
        &derivs,
        x,
        1.0,
        wallis_ratio(config.k, p),
        EstimateKind::ComponentwiseRelative,
        config,
    ))
}

/// Normwise per-entry estimate for a solved DARE.
pub fn sce_dare_normwise(
    problem: &RiccatiProblem,
    y: &CMat,
    config: &SceConfig,
) -> Result<ConditionMatrixEstimate> {
    check_kind(problem, RiccatiKind::Dare)?;
    let n = problem.order();
    let p = config.structure.dimension(n);
    let dirs = draw_structured_directions(n, config.k, config.structure, config.seed)?;
    let derivs = dare_directional_derivatives(problem, y, &dirs)?;
    Ok(aggregate(
        &derivs,
        y,
        data_norm(problem),
        wallis_ratio(config.k, p),
        EstimateKind::NormwiseRelative,
        config,
    ))
}

/// Componentwise per-entry estimate for a solved DARE.
pub fn sce_dare_componentwise(
    problem: &RiccatiProblem,
    y: &CMat,
    config: &SceConfig,
) -> Result<ConditionMatrixEstimate> {
    check_kind(problem, RiccatiKind::Dare)?;
    let n = problem.order();
    let p = config.structure.dimension(n);
    let dirs: Vec<StructuredDirection> =
        draw_structured_directions(n, config.k, config.structure, config.seed)?
            .into_iter()
            .map(|d| StructuredDirection {
                a: hadamard_c(&d.a, &problem.a),
                g: hadamard_c(&d.g, &problem.g),
                q: hadamard_c(&d.q, &problem.q),
            })
            .collect();
    let derivs = dare_directional_derivatives(problem, y, &dirs)?;
    Ok(aggregate(
        &derivs,
        y,
        1.0,
        wallis_ratio(config.k, p),
        EstimateKind::ComponentwiseRelative,
        config,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{example1_problem, example2_problem};
    use crate::riccati::solve_care;

    #[test]
    fn wallis_small_cases_and_approximation() {
        assert_eq!(wallis_exact(1), 1.0);
        assert!((wallis_exact(2) - 2.0 / std::f64::consts::PI).abs() < 1e-15);
        // p = 3: 1/2; p = 4: (2/pi) * 2/3
        assert!((wallis_exact(3) - 0.5).abs() < 1e-15);
        assert!((wallis_exact(4) - 4.0 / (3.0 * std::f64::consts::PI)).abs() < 1e-15);
        let (e, a) = (wallis_exact(100), wallis_approx(100));
        assert!((e - a).abs() <= 1e-3 * e, "exact {e} approx {a}");
        // ratio uses one branch: k = p gives exactly one
        assert_eq!(wallis_ratio(16, 16), 1.0);
        assert_eq!(wallis_ratio(100, 100), 1.0);
    }

    #[test]
    fn directions_are_orthonormal_and_structured() {
        for structure in [SceStructure::Complex, SceStructure::Real] {
            let n = 3;
            let p = structure.dimension(n);
            let dirs = draw_structured_directions(n, p, structure, 9).unwrap();
            assert_eq!(dirs.len(), p);
            for d in &dirs {
                assert!((&d.g - d.g.adjoint()).norm() <= 1e-13);
                assert!((&d.q - d.q.adjoint()).norm() <= 1e-13);
            }
            // orthonormality through the inner product of stacked coordinates
            let stack = |d: &StructuredDirection| match structure {
                SceStructure::Complex => crate::structured::StructuredDelta::from_matrices(&d.a, &d.g, &d.q)
                    .unwrap()
                    .stacked(),
                SceStructure::Real => {
                    let a = crate::matrix::re_part(&d.a);
                    let g = crate::matrix::re_part(&d.g);
                    let q = crate::matrix::re_part(&d.q);
                    let mut v = crate::structured::vectorize_real(&a).as_slice().to_vec();
                    v.extend_from_slice(crate::structured::sym_pack(&g).unwrap().data.as_slice());
                    v.extend_from_slice(crate::structured::sym_pack(&q).unwrap().data.as_slice());
                    RVec::from_vec(v)
                }
            };
            for i in 0..p.min(6) {
                for j in 0..p.min(6) {
                    let dot = stack(&dirs[i]).dot(&stack(&dirs[j]));
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expected).abs() <= 1e-12, "{structure:?} ({i},{j}): {dot}");
                }
            }
        }
    }

    #[test]
    fn directions_are_deterministic_in_the_seed() {
        let a = draw_structured_directions(2, 5, SceStructure::Real, 1234).unwrap();
        let b = draw_structured_directions(2, 5, SceStructure::Real, 1234).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.a, y.a);
            assert_eq!(x.g, y.g);
            assert_eq!(x.q, y.q);
        }
        let c = draw_structured_directions(2, 5, SceStructure::Real, 1235).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.a != y.a));
    }

    #[test]
    fn oversized_sample_count_rejected() {
        assert!(draw_structured_directions(2, 17, SceStructure::Complex, 0).is_err());
        assert!(draw_structured_directions(2, 11, SceStructure::Real, 0).is_err());
        assert!(draw_structured_directions(2, 0, SceStructure::Real, 0).is_err());
    }

    #[test]
    fn estimates_are_deterministic() {
        let (problem, x) = example1_problem(1.0);
        let config = SceConfig::new(5, 77, SceStructure::Real);
        let e1 = sce_care_normwise(&problem, &x, &config).unwrap();
        let e2 = sce_care_normwise(&problem, &x, &config).unwrap();
        assert_eq!(e1.values, e2.values);
        let c1 = sce_care_componentwise(&problem, &x, &config).unwrap();
        let c2 = sce_care_componentwise(&problem, &x, &config).unwrap();
        assert_eq!(c1.values, c2.values);
    }

    #[test]
    fn prefactor_scales_normwise_estimates() {
        // doubling the data-norm prefactor doubles the absolute estimate
        let (problem, x) = example1_problem(1.0);
        let config = SceConfig::new(4, 3, SceStructure::Real);
        let dirs = draw_structured_directions(2, 4, SceStructure::Real, 3).unwrap();
        let derivs = care_directional_derivatives(&problem, &x, &dirs).unwrap();
        let base = aggregate(&derivs, &x, 1.0, 1.0, EstimateKind::NormwiseRelative, &config);
        let doubled = aggregate(&derivs, &x, 2.0, 1.0, EstimateKind::NormwiseRelative, &config);
        assert!((doubled.values.clone() - base.values.clone() * 2.0).norm() < 1e-15);
    }

    #[test]
    fn zero_solution_entry_keeps_absolute_value() {
        // an iterate with zero entries but a stable closed loop checks the
        // passthrough rule
        let problem = crate::riccati::RiccatiProblem::new_care_real(
            RMat::identity(2, 2) * -1.0,
            RMat::identity(2, 2),
            RMat::identity(2, 2),
        )
        .unwrap();
        let x = {
            let mut m = CMat::zeros(2, 2);
            m[(0, 0)] = Cpx::new(1.0, 0.0);
            m
        };
        let config = SceConfig::new(3, 5, SceStructure::Real);
        let dirs = draw_structured_directions(2, 3, SceStructure::Real, 5).unwrap();
        let derivs = care_directional_derivatives(&problem, &x, &dirs).unwrap();
        let est = aggregate(&derivs, &x, 1.0, 1.0, EstimateKind::NormwiseRelative, &config);
        let mut sq = 0.0;
        for d in &derivs {
            sq += d[(0, 1)].norm_sqr();
        }
        assert!((est.values[(0, 1)] - sq.sqrt()).abs() < 1e-15);
        // the nonzero entry is divided through
        let mut sq00 = 0.0;
        for d in &derivs {
            sq00 += d[(0, 0)].norm_sqr();
        }
        assert!((est.values[(0, 0)] - sq00.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn componentwise_ignores_zero_data_directions() {
        // entries where A, G, Q are all zero cannot contribute through the
        // componentwise product
        let (problem, x) = example1_problem(1.0);
        let config = SceConfig::new(10, 21, SceStructure::Real);
        let dirs = draw_structured_directions(2, 10, SceStructure::Real, 21).unwrap();
        for d in dirs {
            let masked = hadamard_c(&d.a, &problem.a);
            assert_eq!(masked[(1, 0)], Cpx::new(0.0, 0.0)); // A[1,0] = 0
        }
        let _ = x;
        let _ = config;
    }

    #[test]
    fn dare_zero_a_reduces_to_q_directions() {
        let problem = crate::riccati::RiccatiProblem::new_dare_real(
            RMat::zeros(2, 2),
            RMat::identity(2, 2),
            RMat::identity(2, 2) * 2.0,
        )
        .unwrap();
        let y = crate::riccati::solve_dare(&problem).unwrap().solution;
        let config = SceConfig::new(6, 13, SceStructure::Real);
        let dirs = draw_structured_directions(2, 6, SceStructure::Real, 13).unwrap();
        let derivs = dare_directional_derivatives(&problem, &y, &dirs).unwrap();
        for (d, dir) in derivs.iter().zip(&dirs) {
            assert!((d - &dir.q).norm() <= 1e-13);
        }
    }

    #[test]
    fn full_basis_matches_jacobian_row_norms() {
        // with k = p the RSS over a complete orthonormal basis is the exact
        // row norm of the structured Jacobian; strongest internal check
        let (problem, x) = example1_problem(1.0);
        let n = 2;
        for structure in [SceStructure::Real, SceStructure::Complex] {
            let p = structure.dimension(n);
            let config = SceConfig::new(p, 99, structure);
            let est = sce_care_normwise(&problem, &x, &config).unwrap();

            let asm = crate::condnum::assemble_care_jacobian(&problem, &x).unwrap();
            let solved = asm.solved().unwrap();
            // restrict to the drawn structured coordinates
            let cols: Vec<usize> = match structure {
                SceStructure::Complex => (0..4 * n * n).collect(),
                SceStructure::Real => {
                    // real directions live in [re_a | sym_re_g | sym_re_q]
                    let mut v: Vec<usize> = asm.segment(0).collect();
                    v.extend(asm.segment(2));
                    v.extend(asm.segment(4));
                    v
                }
            };
            let prefactor = data_norm(&problem);
            for i in 0..n {
                for j in 0..n {
                    let row = i + j * n;
                    let mut sq = 0.0;
                    for &c in &cols {
                        sq += solved[(row, c)].norm_sqr();
                    }
                    let exact = prefactor * sq.sqrt() / x[(i, j)].norm();
                    let got = est.values[(i, j)];
                    assert!(
                        (got - exact).abs() <= 1e-8 * exact,
                        "{structure:?} ({i},{j}): est {got:.6e} vs exact {exact:.6e}"
                    );
                }
            }
        }
    }

    #[test]
    fn estimate_variance_shrinks_with_k() {
        let (problem, y) = example2_problem(1);
        let entry_std = |k: usize| {
            let mut vals = Vec::new();
            for seed in 0..50 {
                let config = SceConfig::new(k, seed, SceStructure::Real);
                let est = sce_dare_componentwise(&problem, &y, &config).unwrap();
                vals.push(est.values[(0, 0)]);
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64).sqrt()
        };
        assert!(entry_std(5) < entry_std(1));
    }

    #[test]
    fn example1_estimates_land_near_exact_sensitivities() {
        // statistical sanity at k = 5: median over seeds within a factor of
        // ten of the full-basis value for every entry
        let (problem, x) = example1_problem(1.0);
        let p = SceStructure::Real.dimension(2);
        let full = sce_care_normwise(&problem, &x, &SceConfig::new(p, 1, SceStructure::Real))
            .unwrap()
            .values;
        let mut ok = 0;
        let mut total = 0;
        for i in 0..2 {
            for j in 0..2 {
                let mut vals = Vec::new();
                for seed in 0..20 {
                    let est = solve_and_estimate(&problem, &x, seed);
                    vals.push(est[(i, j)]);
                }
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let median = vals[vals.len() / 2];
                total += 1;
                if median >= full[(i, j)] / 10.0 && median <= full[(i, j)] * 10.0 {
                    ok += 1;
                }
            }
        }
        assert_eq!(ok, total);
    }

    fn solve_and_estimate(problem: &RiccatiProblem, x: &CMat, seed: u64) -> RMat {
        let _ = solve_care(problem).unwrap();
        sce_care_normwise(problem, x, &SceConfig::new(5, seed, SceStructure::Real))
            .unwrap()
            .values
    }
}
