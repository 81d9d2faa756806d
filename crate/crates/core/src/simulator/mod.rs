//! Exact event-driven simulation of the spatial birth-death dynamics and
//! the experiment procedures built on it.

mod config;
mod correlation;
mod engine;
mod queues;
mod run;

pub use config::{
    EventKind, EventRecord, FileDistribution, GrowthVerdict, InitialState, ProbeResult, RunMetrics, SimulationConfig,
    Snapshot, DEFAULT_MAX_LINKS,
};
pub use correlation::{delay_correlation, DelayCorrelationConfig, DelayCorrelationPoint};
pub use engine::{Engine, EngineParams, GainKernel, PathLossGain, Step};
pub use queues::{mgi1_ps_comparator, mm1_ps_comparator, mminf_comparator, MmInfComparator, PsQueue};
pub use run::{delay_ccdf, exponential_tail_slope, phase_transition_probe, run};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network_state::{ChannelParams, Link, LinkConfiguration};
    use crate::rng::{replication_rng, Purpose};
    use crate::torus::{PathLossModel, Point, TorusDomain};
    use crate::Error;

    fn base(lambda: f64, horizon: f64) -> SimulationConfig {
        let channel = ChannelParams::new(1.0, 1.0, 1.0, PathLossModel::bounded(1.0, 4.0).unwrap()).unwrap();
        SimulationConfig::new(lambda, channel, TorusDomain::new(2.0).unwrap(), 0.0, horizon)
    }

    #[test]
    fn lone_link_is_served_deterministically() {
        let mut cfg = base(0.0, 10.0);
        let d = cfg.domain;
        let link = Link { id: 0, rx: Point::ORIGIN, tx: Point::ORIGIN, residual_bits: 2.5, birth_time: 0.0 };
        cfg.initial = InitialState::Links(LinkConfiguration::with_links(d, 0.0, vec![link]).unwrap());
        cfg.record_events = true;
        let m = run(&cfg).unwrap();
        assert_eq!(m.deaths, 1);
        assert_eq!(m.events.len(), 2);
        assert!((m.events[1].time - 2.5).abs() < 1e-12);
        assert_eq!(m.delay_samples.len(), 1);
        assert!((m.delay_samples[0] - 2.5).abs() < 1e-12);
        assert!((m.beta_hat - 2.5 / 10.0 / d.area()).abs() < 1e-12);
    }

    #[test]
    fn power_law_is_refused() {
        let mut cfg = base(1.0, 1.0);
        cfg.channel.pathloss = PathLossModel::power_law(4.0).unwrap();
        assert!(matches!(run(&cfg), Err(Error::Configuration(_))));
        let cfg = base(1.0, 0.0);
        assert!(matches!(run(&cfg), Err(Error::Parameter(_))));
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut cfg = base(0.8, 20.0);
        cfg.record_events = true;
        cfg.seed = 99;
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert!(a.events.len() > 100);
        assert_eq!(a, b);
    }

    #[test]
    fn workload_balance_and_event_order() {
        let mut cfg = base(0.8, 40.0);
        cfg.record_events = true;
        let m = run(&cfg).unwrap();
        assert!(m.max_workload_error < 1e-9, "{}", m.max_workload_error);
        assert!(m.events.windows(2).all(|w| w[0].time <= w[1].time));
        let mut alive = std::collections::HashSet::new();
        for e in &m.events {
            match e.kind {
                EventKind::Birth => assert!(alive.insert(e.link_id)),
                EventKind::Death => assert!(alive.remove(&e.link_id)),
            }
        }
    }

    fn counts(m: &RunMetrics, t: f64) -> i64 {
        m.events
            .iter()
            .take_while(|e| e.time <= t)
            .map(|e| if e.kind == EventKind::Birth { 1 } else { -1 })
            .sum()
    }

    #[test]
    fn weaker_path_loss_is_dominated_pathwise() {
        let mut weak = base(1.0, 30.0);
        weak.record_events = true;
        weak.seed = 5;
        let mut strong = weak.clone();
        strong.channel.pathloss = PathLossModel::bounded(1.0, 3.0).unwrap();
        let a = run(&weak).unwrap();
        let b = run(&strong).unwrap();
        let times: Vec<f64> = a.events.iter().chain(&b.events).map(|e| e.time).collect();
        for t in times {
            assert!(counts(&a, t) <= counts(&b, t), "dominance broken at {t}");
        }
    }

    #[test]
    fn zero_arrivals_probe_is_stable() {
        let mut cfg = base(0.0, 20.0);
        cfg.sample_interval = 0.5;
        let r = phase_transition_probe(&cfg, &[0.0], 10.0, 0.8).unwrap();
        assert_eq!(r[0].verdict, GrowthVerdict::StableLooking);
        assert_eq!(r[0].endpoint, 0);
        assert!(phase_transition_probe(&cfg, &[0.0], 30.0, 0.8).is_err());
    }

    #[test]
    fn pareto_files_have_requested_mean() {
        let f = FileDistribution::pareto(2.5, 1.0).unwrap();
        assert!((f.pareto_scale().unwrap() - 0.6).abs() < 1e-15);
        let mut rng = replication_rng(1, 0, Purpose::Queue);
        let xs: Vec<f64> = (0..200_000).map(|_| f.sample(&mut rng)).collect();
        assert!(xs.iter().all(|x| *x >= 0.6));
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((m - 1.0).abs() < 0.02, "{m}");
        assert!(FileDistribution::pareto(1.0, 1.0).is_err());
    }

    #[test]
    fn ps_queue_mean_sojourn() {
        let q = mm1_ps_comparator(0.5, 1.0, 1.0).unwrap();
        let mut rng = replication_rng(2, 0, Purpose::Queue);
        let s = q.sample_sojourns(200_000, 10_000, &mut rng);
        let m = s.iter().sum::<f64>() / s.len() as f64;
        assert!((m - 2.0).abs() / 2.0 < 0.03, "{m}");
        assert!(mm1_ps_comparator(1.0, 1.0, 1.0).is_err());
        let light = mm1_ps_comparator(1e-4, 1.0, 1.0).unwrap();
        assert!((light.mean_sojourn() - 1.0).abs() < 2e-4);
    }

    #[test]
    fn mminf_mean() {
        let c = mminf_comparator(FileDistribution::exponential(1.0).unwrap(), 2.0).unwrap();
        assert_eq!(c.mean_sojourn(), 0.5);
        let mut rng = replication_rng(3, 0, Purpose::Queue);
        let s = c.sample_sojourns(100_000, &mut rng);
        let m = s.iter().sum::<f64>() / s.len() as f64;
        assert!((m - 0.5).abs() < 0.01);
    }

    #[test]
    fn correlation_rejects_shared_file_stream() {
        let cfg = base(0.2, 10.0);
        let mut c = DelayCorrelationConfig::new(cfg, 5.0, vec![0.5], 10);
        c.file_streams = (Purpose::PairFileA, Purpose::PairFileA);
        assert!(matches!(delay_correlation(&c), Err(Error::Parameter(_))));
    }

    #[test]
    fn correlation_rejects_supercritical() {
        let cfg = base(5.0, 10.0);
        let c = DelayCorrelationConfig::new(cfg, 5.0, vec![0.5], 10);
        assert!(matches!(delay_correlation(&c), Err(Error::Configuration(_))));
    }

    #[test]
    fn ccdf_and_tail_fit() {
        let m = run(&SimulationConfig { warmup: 5.0, ..base(0.8, 200.0) }).unwrap();
        let grid = [0.0, 1.0, 2.0];
        let c = delay_ccdf(&m, &grid).unwrap();
        assert_eq!(c[0].1, 1.0);
        assert!(c.windows(2).all(|w| w[1].1 <= w[0].1));
        let fit = exponential_tail_slope(&m.delay_samples).unwrap();
        assert!(fit.slope < 0.0 && fit.slope.is_finite());
    }
}
