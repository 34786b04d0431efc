use udg_core::assembly::{SpaceKind, Stabilisation};
use udg_core::harness::{l2_difference, run_case, solve_level, CaseDefinition, RunOptions, SolverKind};

#[test]
fn thread_count_does_not_change_results() {
    let case = CaseDefinition::example1();
    let solve = |threads: usize, space: SpaceKind, stab: Stabilisation| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| solve_level(&case, &RunOptions::new(space, stab, 3, 1), 16).unwrap())
    };
    for (space, stab) in [
        (SpaceKind::Dg, Stabilisation::Gp),
        (SpaceKind::Trefftz, Stabilisation::Wgp),
        (SpaceKind::Trefftz, Stabilisation::Ag),
    ] {
        let serial = solve(1, space, stab);
        let parallel = solve(4, space, stab);
        let diff = serial
            .coeffs
            .iter()
            .zip(&parallel.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-12, "{space}/{stab}: {diff:e}");
    }
}

#[test]
fn patch_test_solution_is_independent_of_beta() {
    let case = CaseDefinition::patch_test(2);
    for (space, stab) in [(SpaceKind::Dg, Stabilisation::Gp), (SpaceKind::Trefftz, Stabilisation::Ag)] {
        let mut opts = RunOptions::new(space, stab, 2, 1);
        let a = solve_level(&case, &opts, 16).unwrap();
        opts.beta = Some(2.0 * 40.0);
        let b = solve_level(&case, &opts, 16).unwrap();
        let diff = l2_difference(&a.cut_mesh(), &a.space(), &a.coeffs, &b.coeffs, 6).unwrap();
        assert!(diff < 1e-9, "{space}/{stab}: {diff:e}");
    }
}

#[test]
fn trefftz_dof_ratio_is_exact() {
    let case = CaseDefinition::example1();
    for k in 1..=5 {
        let r = run_case(&case, &RunOptions::new(SpaceKind::Trefftz, Stabilisation::Gp, k, 2)).unwrap();
        for row in &r.rows {
            assert_eq!(row.reduced_dofs * (k + 1) * (k + 2) / 2, row.dofs * (2 * k + 1));
        }
    }
}

#[test]
fn example1_quadratic_rate() {
    let r = run_case(&CaseDefinition::example1(), &RunOptions::new(SpaceKind::Dg, Stabilisation::Gp, 2, 4)).unwrap();
    let e = r.rows[3].eoc_l2.unwrap();
    assert!((2.8..=3.4).contains(&e), "{e}");
}

#[test]
fn iterative_and_direct_solvers_agree_where_definite() {
    let case = CaseDefinition::example1();
    let mut opts = RunOptions::new(SpaceKind::Dg, Stabilisation::Ag, 2, 1);
    let direct = solve_level(&case, &opts, 16).unwrap();
    opts.solver_kind = SolverKind::Iterative;
    let iterative = solve_level(&case, &opts, 16).unwrap();
    let diff = l2_difference(&direct.cut_mesh(), &direct.space(), &direct.coeffs, &iterative.coeffs, 6).unwrap();
    assert!(diff < 1e-8, "{diff:e}");
    assert!(iterative.iterations > 0);
}

#[test]
fn convection_with_trefftz_selects_weak_trefftz() {
    let case = CaseDefinition::example4();
    let sol = solve_level(&case, &RunOptions::new(SpaceKind::Trefftz, Stabilisation::Gp, 3, 1), 16).unwrap();
    assert_eq!(sol.reduced_dofs * 10, sol.dofs * 7);
    let err = solve_level(&case, &RunOptions::new(SpaceKind::Trefftz, Stabilisation::Ag, 3, 1), 16);
    assert!(err.is_err());
}
