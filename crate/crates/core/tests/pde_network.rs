use csd_core::integrate::IntegratorConfig;
use csd_core::pde::{
    estimate_speed, rest_state, simulate, InitialState, Injection, NetworkConfig, NetworkModel, NetworkTrajectory,
    DEFAULT_THRESHOLD,
};
use csd_core::ParameterSet;

fn run(cfg: &NetworkConfig, p: &ParameterSet) -> NetworkTrajectory {
    simulate(cfg, p, &IntegratorConfig::pde()).unwrap()
}

fn quiet(n: usize, model: NetworkModel, p: &ParameterSet) -> NetworkConfig {
    let mut cfg = NetworkConfig::new(n, model, p);
    cfg.injection = Injection { cells: vec![], ..cfg.injection };
    cfg.initial = InitialState::Rest;
    cfg.t_end = 10_000.0;
    cfg.sample_dt = 100.0;
    cfg
}

/// Largest drift of any recorded voltage from its initial value.
fn max_voltage_drift(traj: &NetworkTrajectory) -> f64 {
    let mut worst = 0.0f64;
    for name in ["V_N", "V_A"] {
        let Some(v) = traj.var_index(name) else { continue };
        let field = traj.field(v);
        for row in &field {
            for (a, b) in row.iter().zip(&field[0]) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

#[test]
fn rest_is_stationary_without_injection() {
    let p = ParameterSet::default();
    for model in [NetworkModel::Reduced3, NetworkModel::Instantaneous1] {
        let mut cfg = quiet(20, model, &p);
        cfg.k_e_boundary = rest_state(NetworkModel::Reduced3, InitialState::Rest, &p).unwrap()[2];
        let drift = max_voltage_drift(&run(&cfg, &p));
        assert!(drift < 0.1, "{model}: {drift} mV");
    }
    let cfg = quiet(8, NetworkModel::Full10, &p);
    let drift = max_voltage_drift(&run(&cfg, &p));
    assert!(drift < 0.1, "full10: {drift} mV");
}

#[test]
fn reduced_speed_at_fifty_cells() {
    let p = ParameterSet::default();
    let traj = run(&NetworkConfig::new(50, NetworkModel::Reduced3, &p), &p);
    let v = estimate_speed(&traj, 10, 20, DEFAULT_THRESHOLD).unwrap();
    assert!((v - 3.8205).abs() < 0.05 * 3.8205, "{v} mm/min");
    assert_eq!(traj.depolarized_cells(DEFAULT_THRESHOLD), 50);
    // the front leaves the injection site in both directions symmetrically
    let left = traj.crossing_time(15, DEFAULT_THRESHOLD).unwrap();
    let right = traj.crossing_time(36, DEFAULT_THRESHOLD).unwrap();
    assert!((left - right).abs() < 1e-6 * left, "{left} vs {right}");
}

#[test]
fn instantaneous_reduction_tracks_reduced_model() {
    let p = ParameterSet::default();
    let a = run(&NetworkConfig::new(50, NetworkModel::Reduced3, &p), &p);
    let b = run(&NetworkConfig::new(50, NetworkModel::Instantaneous1, &p), &p);
    for cell in [5, 10, 20, 40] {
        let (ta, tb) = (a.crossing_time(cell, DEFAULT_THRESHOLD).unwrap(), b.crossing_time(cell, DEFAULT_THRESHOLD).unwrap());
        assert!((ta - tb).abs() < 0.15 * ta, "cell {cell}: {ta} vs {tb}");
    }
}

#[test]
fn speed_depends_on_pair_only_through_its_location() {
    let p = ParameterSet::default();
    let mut cfg = NetworkConfig::new(100, NetworkModel::Reduced3, &p);
    cfg.t_end = 80_000.0;
    let traj = run(&cfg, &p);
    let speed = |a, b| estimate_speed(&traj, a, b, DEFAULT_THRESHOLD).unwrap();
    // mirror pairs about the injection site
    for (a, b) in [(10, 20), (20, 35), (12, 40)] {
        let (l, r) = (speed(a, b), speed(101 - b, 101 - a));
        assert!((l - r).abs() < 1e-6 * l, "({a},{b}): {l} vs {r}");
    }
    // pairs sharing a midpoint
    for (inner, outer) in [((14, 24), (11, 27)), ((25, 31), (22, 34))] {
        let (u, v) = (speed(inner.0, inner.1), speed(outer.0, outer.1));
        assert!((u - v).abs() < 0.01 * u, "{inner:?} {u} vs {outer:?} {v}");
    }
    // the front is still accelerating as it leaves the injection site
    assert!(speed(10, 20) > speed(30, 40) && speed(30, 40) > speed(38, 44));
}
