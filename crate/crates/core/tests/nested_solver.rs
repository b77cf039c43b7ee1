use proptest::prelude::*;
use sdcouple::assembly::{CoupledSystem, PhysicalParams, TrigonometricCase};
use sdcouple::fespace::ElementPair;
use sdcouple::krylov::{minres, Identity, MinresOptions, StopRule};
use sdcouple::solver::{solve_coupled, solve_monolithic, Combo, InitialGuess, SolveConfig};
use sdcouple::sparse::{CsrMatrix, TripletBuilder};
use sdcouple::verify::{compute_errors, compute_rates, relative_differences, ConvergenceRow, Format};

fn system(pair: ElementPair, n: usize) -> CoupledSystem {
    CoupledSystem::new(pair, n, PhysicalParams::default(), &TrigonometricCase).unwrap()
}

fn spd_tridiagonal(diag: &[f64]) -> CsrMatrix {
    let n = diag.len();
    let mut t = TripletBuilder::new(n, n);
    for i in 0..n {
        t.push(i, i, diag[i] + 2.0);
        if i + 1 < n {
            t.push(i, i + 1, -1.0);
            t.push(i + 1, i, -1.0);
        }
    }
    t.build()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn unpreconditioned_minres_residuals_never_increase(
        diag in prop::collection::vec(0.0f64..5.0, 5..40),
        sign_flip in 0usize..40,
    ) {
        let mut a = spd_tridiagonal(&diag);
        if sign_flip < diag.len() {
            // make the operator indefinite
            let mut t = TripletBuilder::new(a.nrows(), a.ncols());
            for (i, j, v) in a.triplets() {
                let s = if i == sign_flip && j == sign_flip { -v - 1.0 } else { v };
                t.push(i, j, s);
            }
            a = t.build();
        }
        let n = a.nrows();
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let opts = MinresOptions { rtol: 1e-10, max_iter: 4 * n, stop: StopRule::Euclidean };
        let stats = minres(&a, &Identity(n), &b, &mut x, &opts).unwrap();
        for w in stats.history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-10) + 1e-14);
        }
    }
}

#[test]
fn nested_solution_matches_the_monolithic_one() {
    for pair in ElementPair::ALL {
        let sys = system(pair, 8);
        let reference = solve_monolithic(&sys).unwrap();
        let report = solve_coupled(&sys, &SolveConfig::new(pair, 8).tight()).unwrap();
        assert!(report.converged());
        let d = relative_differences(&sys, &report.fields, &reference);
        assert!(d.iter().all(|&v| v < 1e-6), "{pair}: {d:?}");
    }
}

#[test]
fn solution_does_not_depend_on_the_initial_guess() {
    let pair = ElementPair::P2isoP1Bdm1;
    let sys = system(pair, 8);
    let base = SolveConfig::new(pair, 8).tight();
    let a = solve_coupled(&sys, &base).unwrap();
    let zero = SolveConfig {
        initial_guess: InitialGuess::Zero,
        ..base
    };
    let b = solve_coupled(&sys, &zero).unwrap();
    let d = relative_differences(&sys, &a.fields, &b.fields);
    assert!(d.iter().all(|&v| v < 1e-6), "{d:?}");
}

#[test]
fn every_combo_converges_and_counts_inner_solves() {
    let pair = ElementPair::MiniBdm1;
    let sys = system(pair, 8);
    for combo in Combo::ALL {
        let r = solve_coupled(&sys, &SolveConfig::new(pair, 8).with_combo(combo)).unwrap();
        assert!(r.converged(), "{combo}");
        // one coupling application per outer iteration
        assert!(r.inner_solves >= r.outer_iterations() && r.inner_solves <= r.outer_iterations() + 2);
        assert!(r.mean_inner() > 0);
    }
}

#[test]
fn errors_decrease_under_refinement() {
    let pair = ElementPair::TaylorHoodRt1;
    let rows: Vec<ConvergenceRow> = [4, 8, 16]
        .into_iter()
        .map(|n| {
            let sys = system(pair, n);
            let r = solve_coupled(&sys, &SolveConfig::new(pair, n).tight()).unwrap();
            ConvergenceRow {
                n,
                dofs: sys.spaces.total_dofs(),
                record: Some(compute_errors(&sys, &r.fields, &TrigonometricCase)),
            }
        })
        .collect();
    let records: Vec<_> = rows.iter().map(|r| r.record.unwrap()).collect();
    let rates = compute_rates(&records);
    assert!(rates[0].is_none());
    for rate in rates[1..].iter().flatten() {
        assert!(rate.iter().all(|r| r.unwrap() > 1.5), "{rate:?}");
    }
    let table = sdcouple::verify::convergence_table(&rows, Format::Csv, "t");
    assert!(table.lines().count() >= 4);
}

#[test]
fn zero_data_gives_zero_solution_and_zero_error() {
    use sdcouple::assembly::ZeroCase;
    let pair = ElementPair::MiniBdm1;
    let sys = CoupledSystem::new(pair, 8, PhysicalParams::default(), &ZeroCase).unwrap();
    let r = solve_coupled(&sys, &SolveConfig::new(pair, 8)).unwrap();
    assert_eq!(r.outer_iterations(), 0);
    let e = compute_errors(&sys, &r.fields, &ZeroCase);
    assert_eq!(e.values(), [0.0; 4]);
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let pair = ElementPair::TaylorHoodRt1;
    let sys = system(pair, 8);
    let config = SolveConfig::new(pair, 8).with_combo(Combo::ALL[5]);
    let a = solve_coupled(&sys, &config).unwrap();
    let b = solve_coupled(&sys, &config).unwrap();
    assert_eq!(a.outer_iterations(), b.outer_iterations());
    assert_eq!(a.inner_iterations, b.inner_iterations);
    assert_eq!(a.fields.velocity, b.fields.velocity);
    assert_eq!(a.fields.darcy_pressure, b.fields.darcy_pressure);
}
