use joyshare::experiment::{run_experiment, ExperimentConfig, ExperimentError};
use joyshare::replay::verify_log;

const CONFIG: &str = r#"
repetitions = 4
base_seed = 100
max_duration_s = 20

[[conditions]]
name = "pair_on"
haptics = true
agents = [
    { policy = { kind = "noisy", target = { x = 7.0, y = 0.0 } } },
    { policy = { kind = "noisy", target = { x = 7.0, y = 0.0 } } },
]

[[conditions]]
name = "pair_off"
haptics = false
agents = [
    { policy = { kind = "noisy", target = { x = 7.0, y = 0.0 } } },
    { policy = { kind = "noisy", target = { x = 7.0, y = 0.0 } } },
]

[[conditions]]
name = "quad_mixed"
haptics = true
agents = [
    { policy = { kind = "goal_seeker", target = { x = 7.0, y = 0.0 } } },
    { policy = { kind = "goal_seeker", target = { x = 7.0, y = 0.0 } } },
    { policy = { kind = "braker" } },
    { policy = { kind = "stubborn", direction = { x = 0.0, y = 1.0 } } },
]
"#;

#[test]
fn report_has_every_condition_and_is_reproducible() {
    let cfg = ExperimentConfig::from_toml_str(CONFIG).unwrap();
    let a = run_experiment(&cfg, true).unwrap();
    let b = run_experiment(&cfg, false).unwrap();
    assert_eq!(a.report.to_csv(), b.report.to_csv());
    assert_eq!(a.report.runs_csv(), b.report.runs_csv());

    let names: Vec<&str> = a
        .report
        .conditions
        .iter()
        .map(|c| c.name.as_str())
        .collect();
    assert_eq!(names, ["pair_on", "pair_off", "quad_mixed"]);
    assert_eq!(a.report.runs.len(), 12);
    let quad = a.report.condition("quad_mixed").unwrap();
    assert_eq!(quad.players, 4);
    assert!(a
        .report
        .conditions
        .iter()
        .all(|c| c.disagreement.mean.is_finite()));
    assert!(a.report.summary_table().lines().count() == 4);

    assert_eq!(a.logs.len(), 12);
    assert!(b.logs.is_empty());
    for log in a.logs.iter().step_by(5) {
        verify_log(&log.run, &log.csv).unwrap();
    }
}

#[test]
fn metrics_come_from_logs_alone() {
    let cfg = ExperimentConfig::from_toml_str(CONFIG).unwrap();
    let out = run_experiment(&cfg, true).unwrap();
    for (log, metrics) in out.logs.iter().zip(&out.report.runs) {
        let rows: Vec<Vec<&str>> = log
            .csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect())
            .collect();
        let header: Vec<&str> = log.csv.lines().next().unwrap().split(',').collect();
        let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
        let dis = col("disagreement");
        let mean = rows
            .iter()
            .map(|r| r[dis].parse::<f64>().unwrap())
            .sum::<f64>()
            / rows.len() as f64;
        assert!((mean - metrics.mean_disagreement).abs() < 1e-12);
        let status = rows.last().unwrap()[col("status")];
        assert_eq!(metrics.completed, status == "goal");
        assert_eq!(metrics.fell, status == "fell");
    }
}

#[test]
fn invalid_experiments_are_rejected() {
    let zero = CONFIG.replace("repetitions = 4", "repetitions = 0");
    assert!(matches!(
        ExperimentConfig::from_toml_str(&zero),
        Err(ExperimentError::Config(_))
    ));
    let unknown = CONFIG.replace("base_seed", "base_sead");
    assert!(ExperimentConfig::from_toml_str(&unknown).is_err());
}
