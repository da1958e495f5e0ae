use riccati_cond::harness::{example2_problem, gen_structured_perturbation, PerturbationSpec};
use riccati_cond::riccati::{solve, RiccatiProblem};

#[test]
fn dbg_dare_m7_trace() {
    let (problem, _) = example2_problem(7);
    let spec = PerturbationSpec { epsilon: 1e-12, seed: 9 };
    let (da, dg, dq) = gen_structured_perturbation(&problem, &spec);
    let perturbed = RiccatiProblem::new_unchecked(
        problem.kind, problem.field,
        &problem.a + &da, &problem.g + &dg, &problem.q + &dq,
    );
    match solve(&perturbed) {
        Ok(s) => println!("seed 9 OK residual {:.3e}", s.residual),
        Err(e) => println!("seed 9 ERR: {e:?}"),
    }
}
