//! Metric computation, trace files and config loading.

use pvrow_harness::config::{load_mission, mission_to_toml, ExperimentConfig};
use pvrow_harness::{compute_metrics, CameraMode, HarnessError, Trace, TraceRow};

fn rec(phase: &str, row: usize, speed: f64, e: f64, xi: f64) -> TraceRow {
    TraceRow { phase: phase.into(), row, speed, e, xi, ..TraceRow::default() }
}

fn trace(rows: Vec<TraceRow>) -> Trace {
    Trace { cruise_speed: 0.6, rows }
}

#[test]
fn constant_error_has_no_spread() {
    let m = compute_metrics(&trace((0..50).map(|_| rec("track", 0, 0.6, 0.02, 0.0)).collect())).unwrap();
    assert!((m.mu_e - 0.02).abs() < 1e-15);
    assert!(m.sigma_e.abs() < 1e-9);
    assert_eq!(m.samples, 50);
}

#[test]
fn symmetric_navigation_error() {
    let m = compute_metrics(&trace(vec![rec("track", 0, 0.6, 0.0, 0.1), rec("track", 0, 0.6, 0.0, -0.1)])).unwrap();
    assert!((m.rmse - 0.1).abs() < 1e-15);
}

#[test]
fn per_row_breakdown_matches_hand_averages() {
    let xi = [[0.1, 0.3, -0.2], [0.05, -0.05, 0.25]];
    let mut rows = vec![rec("transit", 0, 0.6, 5.0, 5.0), rec("hold", 0, 0.0, 5.0, 5.0), rec("track", 0, 0.1, 5.0, 5.0)];
    for (k, xs) in xi.iter().enumerate() {
        for &x in xs {
            rows.push(rec("track", k, 0.58, 2.0 * x, x));
        }
        rows.push(rec("transit", k + 1, 0.6, 5.0, 5.0));
    }
    let m = compute_metrics(&trace(rows)).unwrap();
    for (k, xs) in xi.iter().enumerate() {
        let want = (xs.iter().map(|x| x * x).sum::<f64>() / 3.0).sqrt();
        assert!((m.rows[k].rmse - want).abs() < 1e-15, "row {k}");
        let mu = xs.iter().map(|x| (2.0 * x).abs()).sum::<f64>() / 3.0;
        assert!((m.rows[k].mu_e - mu).abs() < 1e-15);
    }
    let all = xi.iter().flatten().map(|x| x * x).sum::<f64>() / 6.0;
    assert!((m.rmse - all.sqrt()).abs() < 1e-15);
    // none of the 5.0 samples outside the window leaked in
    assert_eq!((m.excluded_transit, m.excluded_hold, m.excluded_transient), (3, 1, 1));
}

#[test]
fn transit_only_trace_has_empty_window() {
    let r = compute_metrics(&trace(vec![rec("transit", 0, 0.6, 0.0, 0.0); 4]));
    assert!(matches!(r, Err(HarnessError::EmptyWindow)));
}

#[test]
fn trace_files_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let t = Trace {
        cruise_speed: 0.6,
        rows: (0..20).map(|i| rec("track", i / 10, 0.6, 1e-3 * i as f64, 0.1 / 3.0 * i as f64)).collect(),
    };
    t.save(&path).unwrap();
    assert_eq!(Trace::load(&path).unwrap(), t);
    assert!(std::fs::read_to_string(&path).unwrap().starts_with("# pvrow-trace v1"));
}

#[test]
fn config_paths_resolve_against_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("cfg");
    std::fs::create_dir(&sub).unwrap();
    let mut plant = pvrow_sim::PlantLayout::default();
    plant.rows.truncate(2);
    std::fs::write(sub.join("plant.toml"), toml::to_string(&plant).unwrap()).unwrap();
    std::fs::write(sub.join("mission.toml"), mission_to_toml(&plant.mission().unwrap())).unwrap();
    std::fs::write(sub.join("run.toml"), "mode = \"rgb\"\nplant_file = \"plant.toml\"\nmission_file = \"mission.toml\"\n").unwrap();
    let cfg = ExperimentConfig::load(&sub.join("run.toml")).unwrap();
    assert_eq!(cfg.mode, CameraMode::Rgb);
    assert_eq!(cfg.plant, plant);
    assert_eq!(cfg.base_mission().unwrap(), load_mission(&sub.join("mission.toml")).unwrap());
    assert_eq!(cfg.base_mission().unwrap().row_count(), 2);
}

#[test]
fn bad_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    std::fs::write(&p, "cruise_speed = -1.0\n").unwrap();
    assert!(matches!(ExperimentConfig::load(&p), Err(HarnessError::Invalid(_))));
    std::fs::write(&p, "no_such_key = 1\n").unwrap();
    assert!(matches!(ExperimentConfig::load(&p), Err(HarnessError::Config { .. })));
    assert!(matches!(ExperimentConfig::load(&dir.path().join("missing.toml")), Err(HarnessError::Io { .. })));
}
