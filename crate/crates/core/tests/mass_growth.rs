//! While `N >= K` births arrive at total rate exactly K, so between any two
//! times the population grows by a Poisson(K·(t − s)) amount.

use gogrow_core::engine::{run, SimConfig};

#[test]
fn population_grows_at_rate_k() {
    let k = 64;
    let cfg = SimConfig {
        chi: 0.5,
        k,
        t_end: 80.0,
        seed: 99,
        snapshot_dt: 10.0,
        positions_from: None,
        ..SimConfig::default()
    };
    let series = run(&cfg).unwrap().series();
    let at = |t: f64| series.iter().find(|p| (p.t - t).abs() < 1e-9).unwrap().n as f64;
    for (s, t) in [(0.0, 80.0), (10.0, 60.0), (30.0, 80.0)] {
        let growth = at(t) - at(s);
        let mean = k as f64 * (t - s);
        assert!(
            (growth - mean).abs() <= 4.0 * mean.sqrt(),
            "[{s}, {t}]: grew {growth}, expected {mean}"
        );
    }
}

#[test]
fn births_match_population_increase() {
    let cfg = SimConfig {
        k: 32,
        t_end: 20.0,
        positions_from: None,
        ..SimConfig::default()
    };
    let rec = run(&cfg).unwrap();
    let series = rec.series();
    let grown = series.last().unwrap().n - series[0].n;
    assert_eq!(grown as u64, rec.total_births);
}
