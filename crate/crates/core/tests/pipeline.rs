use sbd_core::heuristics::{critical_lambda_for, heuristic_sweep, SolverStatus};
use sbd_core::io::{read_snapshot_csv, write_snapshot_csv};
use sbd_core::simulator::{run, InitialState};
use sbd_core::spatial_stats::{rate_conservation_check, ripley_k, PointSet};
use sbd_core::{ChannelParams, PathLossModel, SimulationConfig, TorusDomain};

fn setup(half_side: f64) -> (ChannelParams, TorusDomain, f64) {
    let p = ChannelParams::new(1.0, 1.0, 1.0, PathLossModel::bounded(1.0, 4.0).unwrap()).unwrap();
    let d = TorusDomain::new(half_side).unwrap();
    let lc = critical_lambda_for(&p, 0.0, &d).unwrap().lambda_c;
    (p, d, lc)
}

#[test]
fn snapshots_survive_a_csv_round_trip() {
    let (p, d, lc) = setup(3.0);
    let mut cfg = SimulationConfig::new(0.5 * lc, p, d, 0.0, 40.0);
    cfg.warmup = 10.0;
    cfg.snapshot_times = vec![20.0, 30.0, 40.0];
    let m = run(&cfg).unwrap();
    let radii = [0.2, 0.5, 1.0];
    let original: Vec<_> = m.snapshots.iter().map(|s| s.configuration.clone()).collect();
    let reread: Vec<_> = original
        .iter()
        .map(|c| {
            let mut buf = Vec::new();
            write_snapshot_csv(&mut buf, c).unwrap();
            read_snapshot_csv(buf.as_slice(), d, 0.0).unwrap()
        })
        .collect();
    assert_eq!(original, reread);
    let a = ripley_k(&original, &radii, PointSet::Receivers).unwrap();
    let b = ripley_k(&reread, &radii, PointSet::Receivers).unwrap();
    assert_eq!(a, b);
}

#[test]
fn steady_state_conserves_rate() {
    let (p, d, lc) = setup(3.0);
    let lambda = 0.5 * lc;
    let mut cfg = SimulationConfig::new(lambda, p.clone(), d, 0.0, 1050.0);
    cfg.warmup = 50.0;
    cfg.seed = 21;
    cfg.record_events = false;
    cfg.snapshot_times = (1..=200).map(|k| 50.0 + 5.0 * k as f64).collect();
    let m = run(&cfg).unwrap();
    let snaps: Vec<_> = m.snapshots.into_iter().map(|s| s.configuration).collect();
    let rc = rate_conservation_check(&snaps, &p, lambda).unwrap();
    assert!(rc.relative_gap < 0.05, "{rc:?}");
    assert!((m.beta_hat - lambda * m.w_hat).abs() / m.beta_hat < 0.05);
}

#[test]
fn sweep_brackets_simulation_from_below() {
    let (p, d, lc) = setup(3.0);
    let lambda = 0.4 * lc;
    let row = &heuristic_sweep(&[lambda], &p, 0.0, &d, 1e-9).unwrap()[0];
    assert_eq!(row.status_f, SolverStatus::Converged);
    assert!(row.beta_l <= row.beta_f && row.beta_f <= row.beta_s);

    let mut cfg = SimulationConfig::new(lambda, p, d, 0.0, 1050.0);
    cfg.warmup = 50.0;
    cfg.record_events = false;
    cfg.initial = InitialState::Poisson { density: row.beta_s };
    let m = run(&cfg).unwrap();
    assert!(m.beta_hat >= row.beta_f - 2.0 * m.beta_std_error, "β̂ = {} ± {}, β_f = {}", m.beta_hat, m.beta_std_error, row.beta_f);
}

#[test]
fn arrivals_do_not_depend_on_the_snapshot_schedule() {
    let (p, d, lc) = setup(2.0);
    let mut a = SimulationConfig::new(0.3 * lc, p, d, 0.0, 30.0);
    a.record_events = true;
    let mut b = a.clone();
    b.snapshot_times = vec![5.0, 12.5, 29.0];
    let (ra, rb) = (run(&a).unwrap(), run(&b).unwrap());
    assert_eq!(ra.events, rb.events);
    assert_eq!(ra.delay_samples, rb.delay_samples);
}
