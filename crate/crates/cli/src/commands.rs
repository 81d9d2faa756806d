use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use sbd_core::chain::{build_tessellation, coupled_dominance, fluid_ode, simulate_cell_chain, ChainConfig, DominanceReport};
use sbd_core::heuristics::heuristic_sweep;
use sbd_core::io::{
    read_snapshot_csv, write_chain_csv, write_events_csv, write_fluid_csv, write_laplace_csv, write_ripley_csv,
    write_snapshot_csv, write_sweep_csv, write_trajectory_csv, MetricsRecord,
};
use sbd_core::network_state::LinkConfiguration;
use sbd_core::simulator::run;
use sbd_core::spatial_stats::{
    binomial_surrogate, palm_laplace_interference, palm_shot_noise, rate_conservation_check, ripley_k,
    ShotNoiseKernel,
};
use sbd_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::output::Artifacts;

fn artifacts(cfg: &ExperimentConfig, out: &Path) -> Result<Artifacts> {
    Artifacts::create(out, cfg.hash(), cfg.simulation.seed)
}

pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let sim = cfg.simulation_config()?;
    let metrics = run(&sim)?;
    let art = artifacts(cfg, out)?;
    art.json("metrics.json", &MetricsRecord::new(&metrics, art.hash()))?;
    art.csv("trajectory.csv", |w| write_trajectory_csv(w, &metrics.n_trajectory))?;
    if sim.record_events {
        art.csv("events.csv", |w| write_events_csv(w, &metrics.events))?;
    }
    for (k, snap) in metrics.snapshots.iter().enumerate() {
        art.csv(&format!("snapshots/snapshot_{k:04}.csv"), |w| write_snapshot_csv(w, &snap.configuration))?;
    }
    println!(
        "lambda={:.6} beta_hat={:.6}±{:.6} w_hat={:.6}±{:.6} births={} deaths={}{}",
        metrics.lambda,
        metrics.beta_hat,
        metrics.beta_std_error,
        metrics.w_hat,
        metrics.w_std_error,
        metrics.births,
        metrics.deaths,
        if metrics.truncated { " (link cap reached)" } else { "" }
    );
    Ok(())
}

pub fn heuristics(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let m = &cfg.model;
    let channel = m.channel()?;
    let domain = m.domain()?;
    let h = &cfg.heuristics;
    let lambdas: Vec<f64> = if h.lambdas.is_empty() {
        let lambda_c = m.lambda_c()?;
        if lambda_c <= 0.0 {
            return Err(Error::Configuration(
                "critical intensity is 0 for this path loss; give absolute `lambdas` instead of fractions".into(),
            ));
        }
        h.lambda_fractions.iter().map(|f| f * lambda_c).collect()
    } else {
        h.lambdas.clone()
    };
    let rows = heuristic_sweep(&lambdas, &channel, m.link_length, &domain, h.tol)?;
    let art = artifacts(cfg, out)?;
    art.csv("sweep.csv", |w| write_sweep_csv(w, &rows))?;
    Ok(())
}

fn load_snapshots(cfg: &ExperimentConfig, pattern: &str) -> Result<Vec<LinkConfiguration>> {
    let domain = cfg.model.domain()?;
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| Error::Configuration(format!("bad snapshot pattern {pattern:?}: {e}")))?
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Io(e.into()))?;
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Configuration(format!("no snapshot files match {pattern:?}")));
    }
    paths
        .iter()
        .map(|p| {
            let snap = read_snapshot_csv(BufReader::new(File::open(p)?), domain, cfg.model.link_length)?;
            if snap.len() < 2 {
                return Err(Error::State(format!("{} holds {} links; spatial statistics need at least 2", p.display(), snap.len())));
            }
            Ok(snap)
        })
        .collect()
}

struct ShotNoiseRow {
    kernel: String,
    palm: f64,
    palm_std_error: f64,
    volume: f64,
    volume_std_error: f64,
    separated: bool,
}

pub fn stats(cfg: &ExperimentConfig, pattern: &str, out: &Path) -> Result<()> {
    let snaps = load_snapshots(cfg, pattern)?;
    let s = &cfg.stats;
    let channel = cfg.model.channel()?;
    let seed = cfg.simulation.seed;
    let art = artifacts(cfg, out)?;

    let ripley = ripley_k(&snaps, &s.radii, s.point_set()?)?;
    art.csv("ripley.csv", |w| write_ripley_csv(w, &ripley))?;

    let phi = palm_laplace_interference(&snaps, &channel, &s.s_grid)?;
    let ppp = palm_laplace_interference(&binomial_surrogate(&snaps, seed)?, &channel, &s.s_grid)?;
    art.csv("laplace.csv", |w| write_laplace_csv(w, &phi, &ppp))?;

    let mut kernels = s.radii.iter().map(|&r| ShotNoiseKernel::indicator(r)).collect::<Result<Vec<_>>>()?;
    let pathloss = cfg.model.pathloss_model()?;
    if pathloss.is_bounded() {
        kernels.push(ShotNoiseKernel::pathloss(&pathloss, cfg.model.half_side * std::f64::consts::SQRT_2)?);
    }
    let mut rows = Vec::with_capacity(kernels.len());
    for k in &kernels {
        let c = palm_shot_noise(&snaps, k, s.probes, seed)?;
        rows.push(ShotNoiseRow {
            kernel: k.label().to_string(),
            palm: c.palm.value,
            palm_std_error: c.palm.std_error,
            volume: c.volume.value,
            volume_std_error: c.volume.std_error,
            separated: c.separated(),
        });
    }
    art.csv("shot_noise.csv", |w| {
        writeln!(w, "kernel,palm,palm_std_error,volume,volume_std_error,separated")?;
        for r in &rows {
            writeln!(
                w,
                "\"{}\",{},{},{},{},{}",
                r.kernel, r.palm, r.palm_std_error, r.volume, r.volume_std_error, r.separated
            )?;
        }
        Ok(())
    })?;

    let lambda = match s.lambda {
        Some(l) => l,
        None => cfg.simulation_lambda()?,
    };
    let rc = rate_conservation_check(&snaps, &channel, lambda)?;
    art.csv("rate_conservation.csv", |w| {
        writeln!(w, "lambda,lhs,rhs,rhs_std_error,relative_gap")?;
        writeln!(w, "{},{},{},{},{}", lambda, rc.lhs, rc.rhs.value, rc.rhs.std_error, rc.relative_gap)?;
        Ok(())
    })?;
    println!("{} snapshots, {} links in total", snaps.len(), snaps.iter().map(|c| c.len()).sum::<usize>());
    Ok(())
}

#[derive(Serialize)]
struct DominanceArtifact<'a> {
    config_hash: &'a str,
    seed: u64,
    epsilon: f64,
    lambda: f64,
    stability_bound: f64,
    #[serde(flatten)]
    report: DominanceReport,
}

pub fn chain(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let m = &cfg.model;
    let c = &cfg.chain;
    let channel = m.channel()?;
    let pathloss = m.pathloss_model()?;
    let tess = Arc::new(build_tessellation(m.domain()?, &pathloss, m.link_length, c.epsilon)?);
    let bound = tess.stability_bound(&channel);
    let lambda = c.lambda_fraction * bound;
    let seed = cfg.simulation.seed;

    let mut chain_cfg = ChainConfig::new(lambda, c.horizon, seed);
    chain_cfg.initial = vec![c.initial_count; tess.n_cells()];
    let traj = simulate_cell_chain(&tess, &channel, &chain_cfg)?;

    let t_end = match c.fluid_t_end {
        Some(t) => t,
        None => 3.0 * tess.drain_time(&channel, lambda).map_err(|_| {
            Error::Configuration(format!(
                "λ = {lambda} is not below the chain's stability bound {bound}; set [chain] fluid_t_end"
            ))
        })?,
    };
    let x0 = vec![c.fluid_initial; tess.n_cells()];
    let fluid = fluid_ode(&tess, &channel, lambda, &x0, t_end, c.step_tol)?;

    let report = coupled_dominance(
        Arc::clone(&tess),
        &channel,
        lambda,
        cfg.file_distribution()?,
        seed,
        c.dominance_events,
        f64::INFINITY,
    )?;

    let violations = report.violations;
    let art = artifacts(cfg, out)?;
    art.csv("chain.csv", |w| write_chain_csv(w, &traj))?;
    art.csv("fluid.csv", |w| write_fluid_csv(w, &fluid))?;
    art.json(
        "dominance.json",
        &DominanceArtifact { config_hash: art.hash(), seed, epsilon: c.epsilon, lambda, stability_bound: bound, report },
    )?;
    println!(
        "cells={} bound={:.6} lambda={:.6} dominance_violations={} fluid_hitting_time={}",
        tess.n_cells(),
        bound,
        lambda,
        violations,
        fluid.hitting_time.map_or("none".to_string(), |t| format!("{t:.6}"))
    );
    Ok(())
}
