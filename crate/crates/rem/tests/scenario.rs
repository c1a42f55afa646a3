use rem::config::RunConfig;
use rem::pipeline::{render_comparison, reproduce, simulate};
use rem::scenario::default_scenario;
use rem_core::stats::{distinct_positions, mac_coverage};

#[test]
fn default_mission_has_a_head_and_a_tail() {
    let sim = simulate(&RunConfig::default()).unwrap();
    let data = &sim.output.dataset;
    let positions = distinct_positions(data);
    assert_eq!(positions, 72);
    let cov = mac_coverage(data);
    let everywhere = cov.iter().filter(|c| c.distinct_positions * 10 >= positions * 9).count();
    let sparse = cov.iter().filter(|c| c.distinct_positions * 4 <= positions).count();
    assert!(everywhere >= 1, "no MAC seen at >= 90% of positions");
    assert!(sparse >= 1, "no MAC seen at <= 25% of positions");
    // one reading per AP per scan
    assert!(cov.iter().all(|c| c.samples == c.distinct_positions));
    assert!(cov.len() <= default_scenario().aps.len());
}

#[test]
fn reproduce_is_deterministic_and_ordered() {
    let cfg = RunConfig { seed: 11, ..RunConfig::default() };
    let a = reproduce(&cfg).unwrap();
    let b = reproduce(&cfg).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(render_comparison(&a.report), render_comparison(&b.report));
    assert!(a.report.ordering_holds);
    let names: Vec<&str> = a.report.rows.iter().map(|r| r.model.as_str()).collect();
    assert_eq!(names, ["global_mean", "per_mac_mean", "knn", "knn_tuned", "per_mac_knn", "mlp"]);
    assert_eq!(a.report.retained + a.report.dropped, a.report.stats.n_samples);
    assert_eq!(a.report.n_train + a.report.n_test, a.report.retained);
}
