use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SimulationConfig;
use super::run::{build_engine, run_until_dead};
use crate::heuristics::critical_lambda_for;
use crate::network_state::uniform_point;
use crate::numerics::stats::{pearson, Correlation};
use crate::rng::{replication_rng, Purpose};
use crate::torus::Point;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayCorrelationConfig {
    /// Base run: arrival intensity, channel, initial state and master seed.
    /// The replication index is overwritten per replication.
    pub base: SimulationConfig,
    /// Simulated time before the pair is injected.
    pub burn_in: f64,
    pub distances: Vec<f64>,
    pub replications: usize,
    /// Streams for the two injected files; must differ.
    pub file_streams: (Purpose, Purpose),
    /// Give up on a replication if the pair is still alive this long after injection.
    pub max_pair_time: f64,
}

impl DelayCorrelationConfig {
    pub fn new(base: SimulationConfig, burn_in: f64, distances: Vec<f64>, replications: usize) -> Self {
        Self {
            base,
            burn_in,
            distances,
            replications,
            file_streams: (Purpose::PairFileA, Purpose::PairFileB),
            max_pair_time: 1.0e6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayCorrelationPoint {
    pub distance: f64,
    pub correlation: Correlation,
    pub delays: Vec<(f64, f64)>,
}

/// Correlation between the delays of two links injected at the same time a
/// given distance apart into a steady-state network.
///
/// Each replication burns in an independent network, then, for every
/// distance, injects the same pair geometry (rotated) into a copy of that
/// network and runs until both links are served.
pub fn delay_correlation(cfg: &DelayCorrelationConfig) -> Result<Vec<DelayCorrelationPoint>> {
    let base = &cfg.base;
    base.validate()?;
    if base.link_length != 0.0 {
        return Err(Error::Configuration("delay correlation is defined for zero link length".into()));
    }
    if cfg.file_streams.0 == cfg.file_streams.1 {
        return Err(Error::Parameter("the two injected files must come from independent streams".into()));
    }
    if cfg.replications < 4 {
        return Err(Error::Parameter(format!("need at least 4 replications, got {}", cfg.replications)));
    }
    let q = base.domain.half_side();
    if let Some(d) = cfg.distances.iter().find(|d| !(**d >= 0.0 && **d <= q)) {
        return Err(Error::Parameter(format!("pair distance {d} outside [0, Q]")));
    }
    let lambda_c = critical_lambda_for(&base.channel, base.link_length, &base.domain)?.lambda_c;
    if base.lambda >= lambda_c {
        return Err(Error::Configuration(format!(
            "λ = {} is not below the critical intensity {lambda_c}; the network has no steady state",
            base.lambda
        )));
    }

    let per_rep: Vec<Result<Vec<(f64, f64)>>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| replicate(cfg, rep))
        .collect();
    let mut by_distance: Vec<Vec<(f64, f64)>> = vec![Vec::with_capacity(cfg.replications); cfg.distances.len()];
    for rep in per_rep {
        for (k, pair) in rep?.into_iter().enumerate() {
            by_distance[k].push(pair);
        }
    }
    cfg.distances
        .iter()
        .zip(by_distance)
        .map(|(&distance, delays)| {
            let xs: Vec<f64> = delays.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = delays.iter().map(|p| p.1).collect();
            Ok(DelayCorrelationPoint { distance, correlation: pearson(&xs, &ys)?, delays })
        })
        .collect()
}

fn replicate(cfg: &DelayCorrelationConfig, rep: u64) -> Result<Vec<(f64, f64)>> {
    let run_cfg = SimulationConfig { replication: rep, ..cfg.base.clone() };
    let (mut engine, _) = build_engine(&run_cfg)?;
    let burn = engine.advance_to(cfg.burn_in, |_, _| {});
    if engine.truncated() {
        return Err(Error::Configuration(format!("link cap reached during burn-in ({burn:?})")));
    }
    let domain = run_cfg.domain;
    let seed = run_cfg.seed;
    let mut geo = replication_rng(seed, rep, Purpose::Injection);
    let first = uniform_point(&domain, &mut geo);
    let angle = geo.random::<f64>() * std::f64::consts::TAU;
    let file_a = run_cfg.file_dist.sample(&mut replication_rng(seed, rep, cfg.file_streams.0));
    let file_b = run_cfg.file_dist.sample(&mut replication_rng(seed, rep, cfg.file_streams.1));
    cfg.distances
        .iter()
        .map(|&d| {
            let mut fork = engine.clone();
            let second = domain.wrap(Point::new(first.x + d * angle.cos(), first.y + d * angle.sin()));
            let a = fork.inject(first, first, file_a)?;
            let b = fork.inject(second, second, file_b)?;
            let limit = fork.now() + cfg.max_pair_time;
            let t = run_until_dead(&mut fork, &[a, b], limit)?;
            Ok((t[0], t[1]))
        })
        .collect()
}
