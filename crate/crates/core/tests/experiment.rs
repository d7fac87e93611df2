use dyadic_bloom::experiment::{all_passed, results_to_json, run, sweep, ExperimentConfig, Suite, SweepParameter};
use dyadic_bloom::stopping::{minimal_packing_constant, packing_grid_value, Deviation};
use dyadic_bloom::{DyadicGrid, DyadicInterval, Execution, Weight};

fn config(suites: Vec<Suite>) -> ExperimentConfig {
    ExperimentConfig { depth: 5, trials: 4, seed: 42, suites, ..ExperimentConfig::default() }
}

#[test]
fn default_ensemble_passes_every_suite_but_the_constant_one_lower_bound() {
    let suites: Vec<Suite> = Suite::ALL.into_iter().filter(|s| *s != Suite::ParaproductBounds).collect();
    let results = run(&config(suites)).unwrap();
    for r in &results {
        assert!(r.passed, "{}: {:?}", r.suite, r.failures);
        assert_eq!(r.records.len(), 4);
        assert!(r.records.iter().all(|t| t.error.is_none()));
    }
    assert!(all_passed(&results));
}

#[test]
fn paraproduct_bounds_reports_its_checks() {
    let results = run(&config(vec![Suite::ParaproductBounds])).unwrap();
    let r = &results[0];
    for t in &r.records {
        assert!(t.values.contains_key("duality_residual"), "{:?}", t.values.keys());
        assert!(t.values["duality_residual"] <= 1e-9);
    }
    // failures carry the trial seed for reproduction
    for f in &r.failures {
        assert_eq!(f.seed, r.records[f.trial].seed);
    }
}

#[test]
fn results_do_not_depend_on_execution_policy() {
    let mut seq = config(vec![Suite::Identities, Suite::Stopping]);
    seq.execution = Execution::Sequential;
    let mut par = seq.clone();
    par.execution = Execution::Parallel;
    assert_eq!(results_to_json(&run(&seq).unwrap()).unwrap(), results_to_json(&run(&par).unwrap()).unwrap());
}

#[test]
fn step_weight_packing_example() {
    let g = DyadicGrid::new(2).unwrap();
    let lambda = Weight::from_values(g, vec![4.0, 4.0, 1.0, 1.0]).unwrap();
    let found = minimal_packing_constant(g, DyadicInterval::ROOT, |c| Deviation::new(&lambda, c), &lambda, 0.5).unwrap();
    assert_eq!(found.constant, packing_grid_value(5));
    assert!((found.ratio - 0.2).abs() < 1e-12);
    assert_eq!(found.family.members, vec![DyadicInterval::new(1, 1)]);
}

#[test]
fn depth_sweep_keeps_identities_exact() {
    let base = config(vec![Suite::Identities]);
    let table = sweep(&base, SweepParameter::Depth, &[3.0, 5.0, 7.0]).unwrap();
    assert_eq!(table.rows.iter().map(|r| r.depth).collect::<Vec<_>>(), vec![3, 5, 7]);
    for row in &table.rows {
        assert!(row.residuals.iter().all(|r| *r <= 1e-11), "{:?}", row.residuals);
    }
}
