use super::config::{EventKind, EventRecord, InitialState, ProbeResult, RunMetrics, SimulationConfig, Snapshot};
use super::engine::{poisson_links, Engine, EngineParams, GainKernel, PathLossGain, Step};
use crate::heuristics::critical_lambda_for;
use crate::numerics::stats::{empirical_ccdf, linear_fit, mean, LinearFit};
use crate::numerics::MeanEstimate;
use crate::rng::{replication_rng, Purpose};
use crate::{Error, Result};

const BATCHES: usize = 20;

pub(crate) fn engine_params(cfg: &SimulationConfig) -> EngineParams {
    EngineParams {
        capacity: cfg.channel.capacity,
        noise: cfg.channel.noise,
        lambda: cfg.lambda,
        domain: cfg.domain,
        link_length: cfg.link_length,
        file_dist: cfg.file_dist,
        max_links: cfg.max_links,
    }
}

/// Builds the engine for `cfg` and loads its initial state.
pub(crate) fn build_engine(cfg: &SimulationConfig) -> Result<(Engine<PathLossGain>, Vec<EventRecord>)> {
    cfg.validate()?;
    let kernel = PathLossGain::new(cfg.domain, cfg.channel.pathloss.clone(), cfg.link_length);
    let arrivals = replication_rng(cfg.seed, cfg.replication, Purpose::Arrivals);
    let mut engine = Engine::new(kernel, engine_params(cfg), arrivals)?;
    let initial = match &cfg.initial {
        InitialState::Empty => Vec::new(),
        InitialState::Poisson { density } => {
            let mut rng = replication_rng(cfg.seed, cfg.replication, Purpose::Initial);
            poisson_links(*density, &cfg.domain, cfg.link_length, &cfg.file_dist, &mut rng)?
        }
        InitialState::Links(c) => c.links().iter().map(|l| (l.rx, l.tx, l.residual_bits)).collect(),
    };
    let mut births = Vec::new();
    if !initial.is_empty() {
        let ids = engine.inject_many(&initial)?;
        births = ids
            .iter()
            .zip(&initial)
            .map(|(&link_id, &(rx, tx, _))| EventRecord { kind: EventKind::Birth, time: 0.0, link_id, rx, tx })
            .collect();
    }
    Ok((engine, births))
}

/// Simulates the birth-death dynamics described by `cfg`.
pub fn run(cfg: &SimulationConfig) -> Result<RunMetrics> {
    let (mut engine, initial_births) = build_engine(cfg)?;
    let (warmup, horizon) = (cfg.warmup, cfg.horizon);
    let area = cfg.domain.area();

    // Every time at which something has to be recorded, in order.
    let batch_len = (horizon - warmup) / BATCHES as f64;
    let mut checkpoints: Vec<f64> = (0..=BATCHES).map(|k| warmup + k as f64 * batch_len).collect();
    let n_grid = (horizon / cfg.sample_interval).floor() as usize;
    checkpoints.extend((0..=n_grid).map(|k| k as f64 * cfg.sample_interval));
    checkpoints.extend(cfg.snapshot_times.iter().copied());
    checkpoints.push(horizon);
    checkpoints.retain(|t| *t <= horizon);
    checkpoints.sort_by(f64::total_cmp);
    checkpoints.dedup();

    let mut snapshot_times = cfg.snapshot_times.clone();
    snapshot_times.sort_by(f64::total_cmp);
    let mut next_snapshot = 0;
    let mut next_grid = 0usize;

    let mut events = if cfg.record_events { initial_births } else { Vec::new() };
    let mut batch_area = [0.0f64; BATCHES];
    let mut served_in_window = 0.0;
    let mut delays = Vec::new();
    let mut trajectory = Vec::with_capacity(n_grid + 1);
    let mut snapshots = Vec::new();

    'outer: for &checkpoint in &checkpoints {
        loop {
            let (t0, n0, rate0) = (engine.now(), engine.len(), engine.total_rate());
            let step = engine.step(checkpoint);
            let t1 = engine.now();
            if t1 > t0 && t0 >= warmup {
                let b = (((t0 - warmup) / batch_len) as usize).min(BATCHES - 1);
                batch_area[b] += n0 as f64 * (t1 - t0);
                served_in_window += rate0 * (t1 - t0);
            }
            match step {
                Step::Birth(e) => {
                    if cfg.record_events {
                        events.push(e);
                    }
                }
                Step::Death(e, birth) => {
                    if birth >= warmup {
                        delays.push(e.time - birth);
                    }
                    if cfg.record_events {
                        events.push(e);
                    }
                }
                Step::Reached => break,
                Step::Truncated => break 'outer,
            }
        }
        let now = engine.now();
        while next_grid <= n_grid && next_grid as f64 * cfg.sample_interval <= now {
            trajectory.push((next_grid as f64 * cfg.sample_interval, engine.len()));
            next_grid += 1;
        }
        while next_snapshot < snapshot_times.len() && snapshot_times[next_snapshot] <= now {
            snapshots.push(Snapshot { time: snapshot_times[next_snapshot], configuration: engine.snapshot()? });
            next_snapshot += 1;
        }
    }

    let truncated = engine.truncated();
    let end_time = engine.now();
    let window = (end_time.min(horizon) - warmup).max(0.0);
    let (beta_hat, beta_std_error) = if truncated || window <= 0.0 {
        let covered: f64 = batch_area.iter().sum();
        (if window > 0.0 { covered / window / area } else { f64::NAN }, f64::NAN)
    } else {
        let per_batch: Vec<f64> = batch_area.iter().map(|a| a / batch_len / area).collect();
        let est = MeanEstimate::from_samples(&per_batch);
        (est.mean, est.std_error)
    };
    let w = MeanEstimate::from_samples(&delays);
    Ok(RunMetrics {
        beta_hat,
        beta_std_error,
        w_hat: w.mean,
        w_std_error: w.std_error,
        delay_samples: delays,
        n_trajectory: trajectory,
        births: engine.births(),
        deaths: engine.deaths(),
        throughput: if window > 0.0 { served_in_window / window } else { f64::NAN },
        snapshots,
        events,
        max_workload_error: engine.max_workload_error(),
        truncated,
        end_time,
        lambda: cfg.lambda,
        horizon,
        warmup,
        seed: cfg.seed,
    })
}

/// Least-squares trend of `N_t` over the last `window` time units.
fn window_fit(metrics: &RunMetrics, window: f64) -> Result<(LinearFit, usize, f64)> {
    let end = metrics.n_trajectory.last().map_or(0.0, |p| p.0);
    let pts: Vec<(f64, f64)> =
        metrics.n_trajectory.iter().filter(|(t, _)| *t >= end - window).map(|&(t, n)| (t, n as f64)).collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let fit = linear_fit(&xs, &ys)?;
    let endpoint = metrics.n_trajectory.last().map_or(0, |p| p.1);
    Ok((fit, endpoint, mean(&ys)))
}

/// Classifies each arrival intensity as stable-looking or growing.
///
/// A run is growing when the trend of `N_t` over the last `growth_window`
/// exceeds three standard errors and its final count is more than twice the
/// window mean of a reference run. The reference uses the same seed at
/// `min(λ, reference_fraction·λ_c)`. Hitting the link cap counts as growth.
pub fn phase_transition_probe(
    cfg: &SimulationConfig,
    lambdas: &[f64],
    growth_window: f64,
    reference_fraction: f64,
) -> Result<Vec<ProbeResult>> {
    if !(growth_window > 0.0 && growth_window <= cfg.horizon) {
        return Err(Error::Parameter(format!(
            "growth window {growth_window} must be positive and no longer than the horizon {}",
            cfg.horizon
        )));
    }
    if !(reference_fraction > 0.0 && reference_fraction < 1.0) {
        return Err(Error::Parameter(format!("reference fraction must lie in (0, 1), got {reference_fraction}")));
    }
    let lambda_c = critical_lambda_for(&cfg.channel, cfg.link_length, &cfg.domain)?.lambda_c;
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let this = run(&SimulationConfig { lambda, ..cfg.clone() })?;
        let (fit, endpoint, own_mean) = window_fit_or_flat(&this, growth_window)?;
        let reference_lambda = lambda.min(reference_fraction * lambda_c);
        let reference_mean = if reference_lambda == lambda {
            own_mean
        } else {
            let reference = run(&SimulationConfig { lambda: reference_lambda, ..cfg.clone() })?;
            window_fit_or_flat(&reference, growth_window)?.2
        };
        out.push(ProbeResult::from_fit(lambda, fit, endpoint, reference_lambda, reference_mean, this.truncated));
    }
    Ok(out)
}

fn window_fit_or_flat(metrics: &RunMetrics, window: f64) -> Result<(LinearFit, usize, f64)> {
    if metrics.truncated {
        let endpoint = metrics.n_trajectory.last().map_or(0, |p| p.1);
        let flat = LinearFit { slope: f64::INFINITY, intercept: 0.0, slope_std_error: 0.0 };
        return Ok((flat, endpoint, endpoint as f64));
    }
    window_fit(metrics, window)
}

/// Empirical `P(delay > t)` of a run on `grid`.
pub fn delay_ccdf(metrics: &RunMetrics, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    empirical_ccdf(&metrics.delay_samples, grid)
}

/// Least-squares slope of `ln P(D > t)` against `t` over the upper decile
/// of the sample (the largest point, whose CCDF is zero, excluded).
pub fn exponential_tail_slope(samples: &[f64]) -> Result<LinearFit> {
    if samples.len() < 100 {
        return Err(Error::State(format!("tail fit needs ≥ 100 samples, got {}", samples.len())));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let start = (0.9 * n as f64).floor() as usize;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &x) in sorted.iter().enumerate().take(n - 1).skip(start) {
        xs.push(x);
        ys.push(((n - 1 - i) as f64 / n as f64).ln());
    }
    linear_fit(&xs, &ys)
}

/// Runs an engine until link `id` (and optionally a second one) has died.
pub(crate) fn run_until_dead<K: GainKernel>(engine: &mut Engine<K>, ids: &[u64], max_time: f64) -> Result<Vec<f64>> {
    let start = engine.now();
    let mut death_times = vec![f64::NAN; ids.len()];
    let mut remaining = ids.len();
    while remaining > 0 {
        match engine.step(max_time) {
            Step::Death(e, _) => {
                if let Some(k) = ids.iter().position(|&id| id == e.link_id) {
                    death_times[k] = e.time - start;
                    remaining -= 1;
                }
            }
            Step::Birth(_) => {}
            Step::Reached => {
                return Err(Error::Numerical(format!("tagged links still alive at time {max_time}")));
            }
            Step::Truncated => return Err(Error::Configuration("link cap reached while tracking tagged links".into())),
        }
    }
    Ok(death_times)
}
