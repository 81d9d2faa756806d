//! Data behind the standard plots. Each recipe starts from the loaded
//! configuration, overrides the arrival intensity (and for `fig9` the file
//! law), and writes one or more CSV tables. `scale` multiplies horizons,
//! snapshot counts and replication counts.

use std::path::Path;

use rayon::prelude::*;

use sbd_core::heuristics::heuristic_sweep;
use sbd_core::numerics::stats::empirical_ccdf;
use sbd_core::rng::{replication_rng, Purpose};
use sbd_core::simulator::{self, delay_correlation, mgi1_ps_comparator, DelayCorrelationConfig, RunMetrics};
use sbd_core::spatial_stats::ripley_k;
use sbd_core::io::write_table;
use sbd_core::{Error, FileDistribution, Result, SimulationConfig};

use crate::config::ExperimentConfig;
use crate::output::Artifacts;

pub fn run(name: &str, cfg: &ExperimentConfig, scale: f64, out: &Path) -> Result<()> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Configuration(format!("--scale must be positive, got {scale}")));
    }
    let art = Artifacts::create(out, cfg.hash(), cfg.simulation.seed)?;
    let ctx = Ctx { cfg, scale, lambda_c: cfg.model.lambda_c()? };
    match name {
        "fig2" => ctx.fig2(&art),
        "fig3" => ctx.fig3(&art),
        "fig5-6" => ctx.fig5_6(&art),
        "fig8" => ctx.fig8(&art),
        "fig9" => ctx.fig9(&art),
        other => Err(Error::Configuration(format!("unknown figure {other:?}"))),
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    scale: f64,
    lambda_c: f64,
}

fn ccdf_grid(max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| max * k as f64 / n as f64).collect()
}

impl Ctx<'_> {
    fn base(&self, fraction: f64) -> Result<SimulationConfig> {
        let mut sim = self.cfg.simulation_config()?;
        sim.lambda = fraction * self.lambda_c;
        sim.horizon *= self.scale;
        sim.warmup *= self.scale;
        sim.record_events = false;
        sim.snapshot_times.clear();
        sim.validate()?;
        Ok(sim)
    }

    fn simulate_all(&self, sims: &[SimulationConfig]) -> Result<Vec<RunMetrics>> {
        sims.par_iter().map(simulator::run).collect()
    }

    /// Simulated density against the three predictions.
    fn fig2(&self, art: &Artifacts) -> Result<()> {
        let fractions = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
        let sims = fractions.iter().map(|&f| self.base(f)).collect::<Result<Vec<_>>>()?;
        let metrics = self.simulate_all(&sims)?;
        let m = &self.cfg.model;
        let lambdas: Vec<f64> = sims.iter().map(|s| s.lambda).collect();
        let sweep = heuristic_sweep(&lambdas, &m.channel()?, m.link_length, &m.domain()?, self.cfg.heuristics.tol)?;
        let rows: Vec<Vec<f64>> = fractions
            .iter()
            .zip(metrics.iter().zip(&sweep))
            .map(|(&f, (r, s))| vec![f, s.lambda, r.beta_hat, r.beta_std_error, s.beta_f, s.beta_s, s.beta_l])
            .collect();
        art.csv("fig2.csv", |w| {
            write_table(w, &["lambda_fraction", "lambda", "beta_hat", "beta_std_error", "beta_f", "beta_s", "beta_l"], &rows)
        })?;
        Ok(())
    }

    /// Ripley's K of the receivers near, well below and far below criticality.
    fn fig3(&self, art: &Artifacts) -> Result<()> {
        let r_max = (0.5 * self.cfg.model.half_side).min(2.0);
        let radii: Vec<f64> = (1..=40).map(|k| r_max * k as f64 / 40.0).collect();
        let count = ((50.0 * self.scale).round() as usize).max(2);
        for fraction in [0.985, 0.697, 0.141] {
            let mut sim = self.base(fraction)?;
            let span = sim.horizon - sim.warmup;
            sim.snapshot_times = (1..=count).map(|k| sim.warmup + span * k as f64 / count as f64).collect();
            let metrics = simulator::run(&sim)?;
            let snaps: Vec<_> = metrics.snapshots.into_iter().map(|s| s.configuration).filter(|c| c.len() >= 2).collect();
            if snaps.is_empty() {
                return Err(Error::State(format!("no snapshot at λ/λ_c = {fraction} holds two links")));
            }
            let k = ripley_k(&snaps, &radii, self.cfg.stats.point_set()?)?;
            let rows: Vec<Vec<f64>> = k.iter().map(|p| vec![p.r, p.k_hat, p.k_ppp, p.ci_lo, p.ci_hi]).collect();
            art.csv(&format!("fig3_{fraction}.csv"), |w| write_table(w, &["r", "k_hat", "k_ppp", "ci_lo", "ci_hi"], &rows))?;
        }
        Ok(())
    }

    /// Delay CCDF of the spatial network against a PS queue of capacity λ_c.
    fn fig5_6(&self, art: &Artifacts) -> Result<()> {
        let fractions = [0.3, 0.7];
        let sims = fractions.iter().map(|&f| self.base(f)).collect::<Result<Vec<_>>>()?;
        let metrics = self.simulate_all(&sims)?;
        let mut rows = Vec::new();
        for ((&f, sim), m) in fractions.iter().zip(&sims).zip(&metrics) {
            let ps = mgi1_ps_comparator(sim.lambda, sim.file_dist, self.lambda_c)?;
            let mut rng = replication_rng(sim.seed, 0, Purpose::Queue);
            let n = m.delay_samples.len().max(1000);
            let ps_samples = ps.sample_sojourns(n, n / 10, &mut rng);
            let max = m.delay_samples.iter().chain(&ps_samples).copied().fold(0.0, f64::max);
            let grid = ccdf_grid(max, 200);
            let spatial = empirical_ccdf(&m.delay_samples, &grid)?;
            let queue = empirical_ccdf(&ps_samples, &grid)?;
            for ((t, a), (_, b)) in spatial.into_iter().zip(queue) {
                rows.push(vec![f, t, a, b]);
            }
        }
        art.csv("fig5-6.csv", |w| write_table(w, &["lambda_fraction", "t", "ccdf_spatial", "ccdf_ps"], &rows))?;
        Ok(())
    }

    /// Correlation of the delays of two links injected at a given distance,
    /// at the simulation section's arrival intensity.
    fn fig8(&self, art: &Artifacts) -> Result<()> {
        let q = self.cfg.model.half_side;
        let distances: Vec<f64> = (0..=10).map(|k| q * k as f64 / 10.0).collect();
        let reps = ((1000.0 * self.scale).round() as usize).max(4);
        let mut base = self.cfg.simulation_config()?;
        base.record_events = false;
        let burn_in = base.warmup * self.scale;
        let fraction = base.lambda / self.lambda_c;
        let cc = DelayCorrelationConfig::new(base, burn_in, distances, reps);
        let rows: Vec<Vec<f64>> = delay_correlation(&cc)?
            .into_iter()
            .map(|p| {
                let c = p.correlation;
                vec![fraction, p.distance, c.rho, c.ci_lo, c.ci_hi, c.n as f64]
            })
            .collect();
        art.csv("fig8.csv", |w| write_table(w, &["lambda_fraction", "distance", "rho", "ci_lo", "ci_hi", "n"], &rows))?;
        Ok(())
    }

    /// Heavy-tailed against exponential files, with the matching PS queues.
    fn fig9(&self, art: &Artifacts) -> Result<()> {
        let fraction = self.cfg.simulation.lambda_fraction.unwrap_or(0.5);
        let mean = self.cfg.model.mean_file;
        let laws = [
            FileDistribution::pareto(self.cfg.simulation.pareto_shape, mean)?,
            FileDistribution::exponential(mean)?,
        ];
        let sims: Vec<SimulationConfig> = laws
            .iter()
            .map(|&law| Ok(SimulationConfig { file_dist: law, ..self.base(fraction)? }))
            .collect::<Result<_>>()?;
        let metrics = self.simulate_all(&sims)?;
        let mut samples: Vec<Vec<f64>> = metrics.into_iter().map(|m| m.delay_samples).collect();
        for (k, sim) in sims.iter().enumerate() {
            let ps = mgi1_ps_comparator(sim.lambda, sim.file_dist, self.lambda_c)?;
            let mut rng = replication_rng(sim.seed, k as u64, Purpose::Queue);
            let n = samples[k].len().max(1000);
            samples.push(ps.sample_sojourns(n, n / 10, &mut rng));
        }
        let max = samples.iter().flatten().copied().fold(0.0, f64::max);
        let grid = ccdf_grid(max, 400);
        let ccdfs = samples.iter().map(|s| empirical_ccdf(s, &grid)).collect::<Result<Vec<_>>>()?;
        let rows: Vec<Vec<f64>> = grid
            .iter()
            .enumerate()
            .map(|(i, &t)| std::iter::once(t).chain(ccdfs.iter().map(|c| c[i].1)).collect())
            .collect();
        art.csv("fig9.csv", |w| {
            write_table(w, &["t", "ccdf_pareto", "ccdf_exponential", "ccdf_ps_pareto", "ccdf_ps_exponential"], &rows)
        })?;
        Ok(())
    }
}
