use proptest::prelude::*;
use qsass::problems::builtin_problem;
use qsass::solver::run;
use qsass_bench::experiment::{parse_table, run_seed, Metric};
use qsass_bench::profile::{data_profile, default_alpha_grid, default_tau_grid, performance_profile};
use qsass_bench::{run_experiment, ExperimentSpec, RunOptions};

fn outcome(text: &str) -> qsass_bench::ExperimentOutcome {
    run_experiment(&ExperimentSpec::parse(text).unwrap(), &RunOptions::default()).unwrap()
}

#[test]
fn single_cell_matches_its_run() {
    let text = "problems = quadratic:10/4\nsolvers = qsass\nnoise = exact\nseeds = 1\nmaster_seed = 5\n";
    let out = outcome(text);
    assert_eq!(out.rows.len(), 1);
    let row = &out.rows[0];
    assert!(row.solved());

    let spec = ExperimentSpec::parse(text).unwrap();
    let p = builtin_problem("quadratic:10", 4).unwrap();
    let cfg = spec.solver_config(&p, &spec.solvers[0]);
    let trace = run(&p, &cfg, &spec.oracle_setup(&p), spec.stopping_rule(&p), run_seed(5, 0, 0)).unwrap();
    assert_eq!(row.metric_iterations, trace.stopping_iteration.unwrap() as f64);
    assert_eq!(row.metric_samples, trace.stopping_samples.unwrap() as f64);
    assert_eq!(row.final_value, trace.final_value);
}

#[test]
fn identical_solvers_give_identical_columns() {
    let out = outcome("problems = rosenbrock-chain/2, trig-sum/3\nsolvers = a:qsass, b:qsass\nseeds = 4\n");
    for metric in [Metric::Iterations, Metric::Samples] {
        let (table, _) = out.metric_table(metric);
        assert_eq!(table.len(), 8);
        for row in table {
            assert_eq!(row[0].to_bits(), row[1].to_bits());
        }
    }
}

#[test]
fn zero_iteration_budget_fails_everything() {
    let out = outcome("problems = quadratic/3, cosine-chain/3\nsolvers = qsass, sass\nseeds = 2\nmax_iterations = 0\n");
    assert_eq!(out.rows.len(), 8);
    assert!(out.rows.iter().all(|r| r.metric_iterations.is_infinite() && r.metric_samples.is_infinite()));
    assert!(out.table_text().contains("#failures.iteration-budget=8"));
    let perf = out.performance(Metric::Iterations);
    assert_eq!(perf.dropped.len(), 4);
    assert!(perf.curves.iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn unresolvable_names_fail_before_running() {
    let spec = ExperimentSpec::parse("problems = quadratic/3, nothing/3\nsolvers = qsass\n").unwrap();
    let err = run_experiment(&spec, &RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn table_text_round_trips_through_parser() {
    let out = outcome("problems = quadratic/3\nsolvers = qsass, sass\nseeds = 3\nnoise = multiplicative\n");
    let parsed = parse_table(&out.table_text()).unwrap();
    assert_eq!(parsed, out);
}

fn metric_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (1usize..6, 1usize..4).prop_flat_map(|(problems, solvers)| {
        let cell = prop_oneof![3 => (0u32..10_000).prop_map(f64::from), 1 => Just(f64::INFINITY)];
        (
            proptest::collection::vec(proptest::collection::vec(cell, solvers), problems),
            proptest::collection::vec(1usize..50, problems),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn profiles_are_monotone_and_bounded((metrics, dims) in metric_strategy()) {
        let labels: Vec<String> = (0..metrics[0].len()).map(|i| format!("s{i}")).collect();
        let perf = performance_profile(&metrics, &labels, &default_tau_grid());
        prop_assert!(perf.check_invariants().is_ok());
        let data = data_profile(&metrics, &dims, &labels, &default_alpha_grid());
        prop_assert!(data.check_invariants().is_ok());
        // at tau = 1 the winners of each solved instance sum to at least the solved fraction
        let solved = metrics.iter().filter(|r| r.iter().any(|v| v.is_finite())).count() as f64 / metrics.len() as f64;
        let at_one: f64 = perf.curves.iter().map(|c| c[0]).sum();
        prop_assert!(at_one >= solved - 1e-12);
        for c in &perf.curves {
            prop_assert!(c[c.len() - 1] <= solved + 1e-12);
        }
    }
}
