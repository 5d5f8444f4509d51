use elaa_isac::harness::{
    manifest, run_experiment, run_instance, write_experiment, Experiment, ExperimentSpec, Profile, Sweep,
};
use elaa_isac::metrics::{total_power, ActivationState};
use elaa_isac::{Scenario, SystemConfig};

fn small_users_spec(seeds: Vec<u64>) -> ExperimentSpec {
    let mut spec =
        ExperimentSpec::new(Experiment::PowerVsUsers, Profile::Desk, SystemConfig::default(), seeds, true).unwrap();
    spec.base = SystemConfig { m_x: 4, m_y: 4, m_s: 4, s: 4, ..spec.base };
    spec.sweep = Sweep::Users(vec![(0, 2), (1, 1), (2, 0)]);
    spec
}

#[test]
fn output_is_independent_of_worker_count() {
    let spec = small_users_spec(vec![0, 1, 2]);
    let one = run_experiment(&spec, Some(1)).unwrap();
    let three = run_experiment(&spec, Some(3)).unwrap();
    assert_eq!(one, three);
    assert_eq!(manifest(&spec, &one), manifest(&spec, &three));
}

#[test]
fn tables_have_documented_columns() {
    let spec = small_users_spec(vec![5]);
    let tables = run_experiment(&spec, None).unwrap();
    assert_eq!(tables[0].name, "power_vs_users.csv");
    assert!(tables[0].text.starts_with("K_N,K_F,scheme,mean_power_w,std_power_w,runs\n"));
    assert_eq!(tables[1].name, "power_vs_users_runs.csv");
    assert!(tables[1].text.starts_with("K_N,K_F,seed,scheme,power_w,feasible,active_subarrays\n"));
    // Three user mixes with four schemes each, one seed.
    assert_eq!(tables[0].text.lines().count(), 1 + 12);
    assert_eq!(tables[1].text.lines().count(), 1 + 12);
}

#[test]
fn emitted_powers_reaudit() {
    let spec = small_users_spec(vec![2]);
    let tables = run_experiment(&spec, None).unwrap();
    let points = spec.points().unwrap();
    let mut rows = csv::Reader::from_reader(tables[1].text.as_bytes());
    for row in rows.records() {
        let row = row.unwrap();
        let (k_n, k_f): (usize, usize) = (row[0].parse().unwrap(), row[1].parse().unwrap());
        let base = points.iter().find(|c| c.k_n == k_n && c.k_f == k_f).unwrap();
        let seed: u64 = row[2].parse().unwrap();
        let outcome = run_instance(base, seed, true).unwrap();
        let activation: &ActivationState = match &row[3] {
            "proposed" => &outcome.proposed.activation,
            "all_subarrays" => &outcome.all_subarrays.activation,
            "random" => &outcome.random.activation,
            "oracle" => &outcome.oracle.as_ref().unwrap().activation,
            other => panic!("unknown scheme {other}"),
        };
        let sc = Scenario::build(&base.with_random_placement(seed)).unwrap();
        let emitted: f64 = row[4].parse().unwrap();
        assert!((emitted - total_power(&sc, activation)).abs() <= 1e-12 * emitted);
    }
}

#[test]
fn degenerate_user_mix_runs() {
    let spec = small_users_spec(vec![1]);
    let tables = run_experiment(&spec, None).unwrap();
    assert!(tables[0].text.lines().any(|l| l.starts_with("0,2,proposed,")));
    assert!(tables[0].text.lines().any(|l| l.starts_with("2,0,proposed,")));
}

#[test]
fn convergence_trace_columns_and_lengths() {
    let mut spec =
        ExperimentSpec::new(Experiment::Convergence, Profile::Desk, SystemConfig::default(), vec![0, 1], false).unwrap();
    spec.sweep = Sweep::Arrays { m_s: 4, shapes: vec![(4, 4), (4, 6)] };
    let tables = run_experiment(&spec, Some(2)).unwrap();
    assert!(tables[0].text.starts_with("M_t,seed,iteration,P_C1,P_C,binarity_gap,penalty\n"));
    let mut runs = csv::Reader::from_reader(tables[1].text.as_bytes());
    let mut total_iterations = 0;
    for row in runs.records() {
        let iterations: usize = row.unwrap()[2].parse().unwrap();
        assert!(iterations >= 1 && iterations <= spec.base.max_iterations);
        total_iterations += iterations;
    }
    assert_eq!(tables[0].text.lines().count(), 1 + total_iterations);
}

#[test]
fn writes_files_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_users_spec(vec![3]);
    let paths = write_experiment(&spec, dir.path(), Some(1)).unwrap();
    assert_eq!(paths.len(), 3);
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("power_vs_users_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["experiment"], "power_vs_users");
    assert_eq!(m["seeds"], serde_json::json!([3]));
    assert_eq!(m["content_digest"].as_str().unwrap().len(), 64);
    let again = tempfile::tempdir().unwrap();
    write_experiment(&spec, again.path(), Some(2)).unwrap();
    for name in ["power_vs_users.csv", "power_vs_users_runs.csv", "power_vs_users_manifest.json"] {
        assert_eq!(std::fs::read(dir.path().join(name)).unwrap(), std::fs::read(again.path().join(name)).unwrap());
    }
}

#[test]
fn invalid_sweeps_are_rejected() {
    let mut spec = small_users_spec(vec![0]);
    spec.sweep = Sweep::Subarrays(vec![3]);
    assert!(spec.validate().is_err());
    spec.sweep = Sweep::Users(vec![(1, 1)]);
    spec.seeds.clear();
    assert!(spec.validate().is_err());
}
