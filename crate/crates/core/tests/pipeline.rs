use dpglab::study::{read_csv, write_csv};
use dpglab::{
    adaptive_loop, assemble_solve, decade_window, error_report, estimator, fit_slope, postprocess_all, run_study,
    Column, DpgOptions, ManufacturedProblem, MarkParams, Mode, ProblemChoice, StudyConfig, TrialChoice, TrialSpaceKind,
};

fn csv(config: &StudyConfig) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv(&mut out, &run_study(config).unwrap()).unwrap();
    out
}

#[test]
fn zero_discrete_solution_has_the_norm_of_u_as_error() {
    let problem = ManufacturedProblem::square_smooth();
    let mesh = problem.initial_mesh().refine_uniform().unwrap();
    let sol = assemble_solve(&mesh, TrialSpaceKind::Standard(0), problem.kind, &|_| 0.0, None, &DpgOptions::default())
        .unwrap();
    let report = error_report(&mesh, &sol, None, &problem, 0).unwrap();
    assert!((report.err_u - 1.0 / 30.0).abs() < 1e-14, "{}", report.err_u);
    assert_eq!(report.err_u_post, None);
}

#[test]
fn sequential_runs_are_bitwise_identical() {
    let config = StudyConfig {
        problem: ProblemChoice::LShape,
        p: 1,
        mode: Mode::Adaptive,
        levels: 6,
        postprocess: true,
        parallel: false,
        ..Default::default()
    };
    let first = csv(&config);
    assert_eq!(first, csv(&config));
    assert_eq!(first, csv(&StudyConfig { parallel: true, ..config }));
}

#[test]
fn csv_roundtrip_is_exact() {
    let records = run_study(&StudyConfig { levels: 3, postprocess: true, ..Default::default() }).unwrap();
    let mut out = Vec::new();
    write_csv(&mut out, &records).unwrap();
    let back = read_csv(out.as_slice()).unwrap();
    assert_eq!(back.len(), records.len());
    for (a, b) in records.iter().zip(&back) {
        assert_eq!(a.dofs, b.dofs);
        assert_eq!(a.err_u.map(f64::to_bits), b.err_u.map(f64::to_bits));
        assert_eq!(a.eoc_post.map(f64::to_bits), b.eoc_post.map(f64::to_bits));
    }
    assert!(back[0].eoc_u.is_none() && back[1].eoc_u.is_some());
}

#[test]
fn estimator_decreases_under_uniform_refinement() {
    for problem in [ProblemChoice::Square, ProblemChoice::LShape] {
        for p in 0..=1 {
            let records = run_study(&StudyConfig { problem, p, levels: 4, ..Default::default() }).unwrap();
            assert!(records.windows(2).all(|w| w[1].eta < w[0].eta), "{problem:?} p={p}");
            assert!(records.windows(2).all(|w| w[1].dofs > w[0].dofs));
        }
    }
}

#[test]
fn quadrature_bump_does_not_change_results() {
    for (problem, tol) in [(ProblemChoice::Square, 1e-3), (ProblemChoice::LShape, 1e-2)] {
        let base = StudyConfig { problem, p: 1, levels: 3, postprocess: true, ..Default::default() };
        let a = run_study(&base).unwrap();
        let b = run_study(&StudyConfig { quad_bump: 4, ..base }).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for col in [Column::ErrU, Column::ErrSigma, Column::ErrUPost, Column::Eta] {
                let (u, v) = (x.value(col).unwrap(), y.value(col).unwrap());
                assert!((u - v).abs() <= tol * u, "{problem:?} {col:?}: {u} vs {v}");
            }
        }
    }
}

#[test]
fn adaptivity_on_a_smooth_problem_matches_uniform_rates() {
    let uniform = run_study(&StudyConfig { levels: 6, ..Default::default() }).unwrap();
    let adaptive =
        run_study(&StudyConfig { mode: Mode::Adaptive, levels: 200, max_dofs: 40_000, ..Default::default() }).unwrap();
    let su = fit_slope(&uniform, Column::Eta, 3).unwrap();
    let sa = fit_slope(&adaptive, Column::Eta, decade_window(&adaptive)).unwrap();
    assert!((sa - su).abs() <= 0.1 * su, "adaptive {sa} vs uniform {su}");
}

#[test]
fn adaptive_meshes_grade_toward_the_reentrant_corner() {
    let problem = ManufacturedProblem::lshape_singular();
    let g = problem.dirichlet().unwrap();
    let trial = TrialSpaceKind::Standard(0);
    let run = adaptive_loop(
        problem.initial_mesh(),
        MarkParams::default(),
        10,
        usize::MAX,
        |m| dpglab::dpg::count_dofs(m, trial),
        |_, mesh| {
            let sol = assemble_solve(mesh, trial, problem.kind, &problem.source, Some(&g), &DpgOptions::default())?;
            Ok(estimator(&sol).1)
        },
    )
    .unwrap();
    assert_eq!(run.steps.len(), 10);
    let corner_diameter = |mesh: &dpglab::Mesh| {
        (0..mesh.num_elements())
            .filter(|&t| mesh.corners(t).contains(&[0.0, 0.0]))
            .map(|t| mesh.diameter(t))
            .fold(f64::INFINITY, f64::min)
    };
    let smallest =
        |mesh: &dpglab::Mesh| (0..mesh.num_elements()).map(|t| mesh.diameter(t)).fold(f64::INFINITY, f64::min);
    for pair in run.steps.windows(3) {
        assert!(corner_diameter(&pair[2].mesh) < corner_diameter(&pair[0].mesh));
    }
    let last = &run.final_mesh().unwrap();
    assert_eq!(corner_diameter(last), smallest(last));
    assert!(corner_diameter(last) < corner_diameter(&run.steps[0].mesh) / 4.0);
}

#[test]
fn postprocessing_is_local() {
    let problem = ManufacturedProblem::square_smooth();
    let mesh = problem.initial_mesh().refine_uniform().unwrap();
    let mut sol =
        assemble_solve(&mesh, TrialSpaceKind::Standard(1), problem.kind, &problem.source, None, &DpgOptions::default())
            .unwrap();
    let before = postprocess_all(&mesh, &sol).unwrap();
    sol.interior[3][4] += 0.5;
    let after = postprocess_all(&mesh, &sol).unwrap();
    for t in 0..mesh.num_elements() {
        assert_eq!(before.coeffs[t] == after.coeffs[t], t != 3, "element {t}");
    }
}

#[test]
fn invalid_configurations_are_rejected() {
    let bad = [
        StudyConfig { levels: 0, ..Default::default() },
        StudyConfig { max_dofs: 0, ..Default::default() },
        StudyConfig { mode: Mode::Adaptive, theta: 1.0, ..Default::default() },
        StudyConfig { solver_tol: 0.0, ..Default::default() },
        StudyConfig { trial: TrialChoice::Augmented, enrichment: 0, ..Default::default() },
        StudyConfig { p: 12, ..Default::default() },
    ];
    for config in bad {
        assert!(run_study(&config).is_err(), "{config:?}");
    }
}
