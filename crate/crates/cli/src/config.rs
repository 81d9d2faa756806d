//! Experiment configuration files.
//!
//! ```text
//! # comment
//! [model]
//! half_side = 5
//! pathloss = bounded
//! pathloss_alpha = 4
//!
//! [simulation]
//! lambda_fraction = 0.5
//! horizon = 2000
//! ```
//!
//! Every key is optional. Unknown sections or keys are errors.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use serde::Serialize;
use sha2::{Digest, Sha256};

use sbd_core::heuristics::{critical_lambda_for, second_order_beta, SolverStatus};
use sbd_core::simulator::InitialState;
use sbd_core::spatial_stats::PointSet;
use sbd_core::{ChannelParams, Error, FileDistribution, PathLossModel, Result, SimulationConfig, TorusDomain};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelConfig {
    pub half_side: f64,
    pub capacity: f64,
    pub noise: f64,
    pub mean_file: f64,
    /// `bounded`, `power_law` or `constant`.
    pub pathloss: String,
    pub pathloss_k: f64,
    pub pathloss_alpha: f64,
    pub pathloss_value: f64,
    pub link_length: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            half_side: 5.0,
            capacity: 1.0,
            noise: 1.0,
            mean_file: 1.0,
            pathloss: "bounded".into(),
            pathloss_k: 1.0,
            pathloss_alpha: 4.0,
            pathloss_value: 1.0,
            link_length: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn domain(&self) -> Result<TorusDomain> {
        TorusDomain::new(self.half_side)
    }

    pub fn pathloss_model(&self) -> Result<PathLossModel> {
        match self.pathloss.as_str() {
            "bounded" => PathLossModel::bounded(self.pathloss_k, self.pathloss_alpha),
            "power_law" => PathLossModel::power_law(self.pathloss_alpha),
            "constant" => PathLossModel::constant(self.pathloss_value),
            other => Err(Error::Configuration(format!("unknown path loss {other:?}"))),
        }
    }

    pub fn channel(&self) -> Result<ChannelParams> {
        ChannelParams::new(self.capacity, self.noise, self.mean_file, self.pathloss_model()?)
    }

    pub fn lambda_c(&self) -> Result<f64> {
        Ok(critical_lambda_for(&self.channel()?, self.link_length, &self.domain()?)?.lambda_c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSection {
    pub lambda: Option<f64>,
    /// Arrival intensity as a fraction of the critical intensity.
    pub lambda_fraction: Option<f64>,
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    pub replication: u64,
    /// `exponential` or `pareto`.
    pub file_dist: String,
    pub pareto_shape: f64,
    pub sample_interval: Option<f64>,
    pub snapshot_times: Vec<f64>,
    /// Evenly spaced snapshots over `(warmup, horizon]`, added to `snapshot_times`.
    pub snapshot_count: usize,
    pub max_links: usize,
    pub record_events: bool,
    /// `empty`, `poisson` or `heuristic` (Poisson at the second-order density).
    pub initial: String,
    pub initial_density: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            lambda: None,
            lambda_fraction: None,
            horizon: 1000.0,
            warmup: 100.0,
            seed: 0,
            replication: 0,
            file_dist: "exponential".into(),
            pareto_shape: 2.5,
            sample_interval: None,
            snapshot_times: Vec::new(),
            snapshot_count: 0,
            max_links: sbd_core::simulator::DEFAULT_MAX_LINKS,
            record_events: true,
            initial: "empty".into(),
            initial_density: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeuristicsSection {
    pub lambdas: Vec<f64>,
    pub lambda_fractions: Vec<f64>,
    pub tol: f64,
}

impl Default for HeuristicsSection {
    fn default() -> Self {
        Self {
            lambdas: Vec::new(),
            lambda_fractions: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95],
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsSection {
    pub radii: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub probes: usize,
    /// `receivers` or `transmitters`.
    pub point_set: String,
    /// Arrival intensity for the rate-conservation check; defaults to the
    /// simulation's.
    pub lambda: Option<f64>,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self {
            radii: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.75, 1.0, 1.5, 2.0],
            s_grid: vec![0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0],
            probes: 100,
            point_set: "receivers".into(),
            lambda: None,
        }
    }
}

impl StatsSection {
    pub fn point_set(&self) -> Result<PointSet> {
        match self.point_set.as_str() {
            "receivers" => Ok(PointSet::Receivers),
            "transmitters" => Ok(PointSet::Transmitters),
            other => Err(Error::Configuration(format!("unknown point set {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSection {
    pub epsilon: f64,
    /// Arrival intensity as a fraction of the chain's stability bound.
    pub lambda_fraction: f64,
    pub horizon: f64,
    pub initial_count: u32,
    /// Per-cell starting mass of the fluid limit.
    pub fluid_initial: f64,
    /// Defaults to three drain times.
    pub fluid_t_end: Option<f64>,
    pub step_tol: f64,
    pub dominance_events: usize,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            lambda_fraction: 0.8,
            horizon: 200.0,
            initial_count: 0,
            fluid_initial: 1.0,
            fluid_t_end: None,
            step_tol: 1e-9,
            dominance_events: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub simulation: SimulationSection,
    pub heuristics: HeuristicsSection,
    pub stats: StatsSection,
    pub chain: ChainSection,
}

/// Keys of one section, removed as they are consumed.
struct Keys {
    section: String,
    map: BTreeMap<String, String>,
}

impl Keys {
    fn bad(&self, key: &str, raw: &str) -> Error {
        Error::Parse(format!("[{}] {key} = {raw:?} is not a valid value", self.section))
    }

    fn parse<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(raw) = self.map.remove(key) {
            *slot = raw.parse().map_err(|_| self.bad(key, &raw))?;
        }
        Ok(())
    }

    fn parse_opt<T: FromStr>(&mut self, key: &str, slot: &mut Option<T>) -> Result<()> {
        if let Some(raw) = self.map.remove(key) {
            *slot = Some(raw.parse().map_err(|_| self.bad(key, &raw))?);
        }
        Ok(())
    }

    fn list(&mut self, key: &str, slot: &mut Vec<f64>) -> Result<()> {
        if let Some(raw) = self.map.remove(key) {
            *slot = raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| self.bad(key, s)))
                .collect::<Result<_>>()?;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(Error::Configuration(format!("unknown key {k:?} in section [{}]", self.section))),
            None => Ok(()),
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut cfg = Self::default();
        for (section, props) in ini.iter() {
            let Some(name) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(Error::Configuration(format!("key {k:?} appears before any [section]")));
                }
                continue;
            };
            let mut keys = Keys {
                section: name.to_string(),
                map: props.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            };
            match name {
                "model" => {
                    let m = &mut cfg.model;
                    keys.parse("half_side", &mut m.half_side)?;
                    keys.parse("capacity", &mut m.capacity)?;
                    keys.parse("noise", &mut m.noise)?;
                    keys.parse("mean_file", &mut m.mean_file)?;
                    keys.parse("pathloss", &mut m.pathloss)?;
                    keys.parse("pathloss_k", &mut m.pathloss_k)?;
                    keys.parse("pathloss_alpha", &mut m.pathloss_alpha)?;
                    keys.parse("pathloss_value", &mut m.pathloss_value)?;
                    keys.parse("link_length", &mut m.link_length)?;
                }
                "simulation" => {
                    let s = &mut cfg.simulation;
                    keys.parse_opt("lambda", &mut s.lambda)?;
                    keys.parse_opt("lambda_fraction", &mut s.lambda_fraction)?;
                    keys.parse("horizon", &mut s.horizon)?;
                    keys.parse("warmup", &mut s.warmup)?;
                    keys.parse("seed", &mut s.seed)?;
                    keys.parse("replication", &mut s.replication)?;
                    keys.parse("file_dist", &mut s.file_dist)?;
                    keys.parse("pareto_shape", &mut s.pareto_shape)?;
                    keys.parse_opt("sample_interval", &mut s.sample_interval)?;
                    keys.list("snapshot_times", &mut s.snapshot_times)?;
                    keys.parse("snapshot_count", &mut s.snapshot_count)?;
                    keys.parse("max_links", &mut s.max_links)?;
                    keys.parse("record_events", &mut s.record_events)?;
                    keys.parse("initial", &mut s.initial)?;
                    keys.parse("initial_density", &mut s.initial_density)?;
                }
                "heuristics" => {
                    let h = &mut cfg.heuristics;
                    keys.list("lambdas", &mut h.lambdas)?;
                    keys.list("lambda_fractions", &mut h.lambda_fractions)?;
                    keys.parse("tol", &mut h.tol)?;
                }
                "stats" => {
                    let s = &mut cfg.stats;
                    keys.list("radii", &mut s.radii)?;
                    keys.list("s_grid", &mut s.s_grid)?;
                    keys.parse("probes", &mut s.probes)?;
                    keys.parse("point_set", &mut s.point_set)?;
                    keys.parse_opt("lambda", &mut s.lambda)?;
                }
                "chain" => {
                    let c = &mut cfg.chain;
                    keys.parse("epsilon", &mut c.epsilon)?;
                    keys.parse("lambda_fraction", &mut c.lambda_fraction)?;
                    keys.parse("horizon", &mut c.horizon)?;
                    keys.parse("initial_count", &mut c.initial_count)?;
                    keys.parse("fluid_initial", &mut c.fluid_initial)?;
                    keys.parse_opt("fluid_t_end", &mut c.fluid_t_end)?;
                    keys.parse("step_tol", &mut c.step_tol)?;
                    keys.parse("dominance_events", &mut c.dominance_events)?;
                }
                other => return Err(Error::Configuration(format!("unknown section [{other}]"))),
            }
            keys.finish()?;
        }
        Ok(cfg)
    }

    /// SHA-256 of the fully resolved configuration, defaults included.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("configuration serializes");
        Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Arrival intensity of the simulation section.
    pub fn simulation_lambda(&self) -> Result<f64> {
        let s = &self.simulation;
        match (s.lambda, s.lambda_fraction) {
            (Some(_), Some(_)) => {
                Err(Error::Configuration("set either lambda or lambda_fraction in [simulation], not both".into()))
            }
            (Some(l), None) => Ok(l),
            (None, f) => Ok(f.unwrap_or(0.5) * self.model.lambda_c()?),
        }
    }

    pub fn file_distribution(&self) -> Result<FileDistribution> {
        let mean = self.model.mean_file;
        match self.simulation.file_dist.as_str() {
            "exponential" => FileDistribution::exponential(mean),
            "pareto" => FileDistribution::pareto(self.simulation.pareto_shape, mean),
            other => Err(Error::Configuration(format!("unknown file distribution {other:?}"))),
        }
    }

    pub fn simulation_config(&self) -> Result<SimulationConfig> {
        let s = &self.simulation;
        let m = &self.model;
        let channel = m.channel()?;
        let domain = m.domain()?;
        let lambda = self.simulation_lambda()?;
        let mut cfg = SimulationConfig::new(lambda, channel.clone(), domain, m.link_length, s.horizon);
        cfg.warmup = s.warmup;
        cfg.seed = s.seed;
        cfg.replication = s.replication;
        cfg.file_dist = self.file_distribution()?;
        if let Some(dt) = s.sample_interval {
            cfg.sample_interval = dt;
        }
        let mut times = s.snapshot_times.clone();
        let span = s.horizon - s.warmup;
        times.extend((1..=s.snapshot_count).map(|k| s.warmup + span * k as f64 / s.snapshot_count as f64));
        times.sort_by(f64::total_cmp);
        times.dedup();
        cfg.snapshot_times = times;
        cfg.max_links = s.max_links;
        cfg.record_events = s.record_events;
        // Validate before the heuristic start, which needs a bounded model.
        cfg.validate()?;
        cfg.initial = match s.initial.as_str() {
            "empty" => InitialState::Empty,
            "poisson" => InitialState::Poisson { density: s.initial_density },
            "heuristic" => {
                let sol = second_order_beta(lambda, &channel, m.link_length, &domain, 1e-8)?;
                if sol.status != SolverStatus::Converged {
                    return Err(Error::Configuration(format!(
                        "no finite steady-state density to start from at λ = {lambda} ({})",
                        sol.status.as_str()
                    )));
                }
                InitialState::Poisson { density: sol.beta }
            }
            other => return Err(Error::Configuration(format!("unknown initial state {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = ExperimentConfig::parse("# x\n[model]\nhalf_side = 2\n\n[simulation]\nlambda = 0.3\nsnapshot_times = 1, 2.5\n")
            .unwrap();
        assert_eq!(cfg.model.half_side, 2.0);
        assert_eq!(cfg.model.noise, 1.0);
        assert_eq!(cfg.simulation.lambda, Some(0.3));
        assert_eq!(cfg.simulation.snapshot_times, vec![1.0, 2.5]);
        assert_eq!(cfg.simulation_lambda().unwrap(), 0.3);
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        assert!(matches!(ExperimentConfig::parse("[model]\nq = 5\n"), Err(Error::Configuration(_))));
        assert!(matches!(ExperimentConfig::parse("[nonsense]\n"), Err(Error::Configuration(_))));
        assert!(matches!(ExperimentConfig::parse("seed = 1\n"), Err(Error::Configuration(_))));
        assert!(matches!(ExperimentConfig::parse("[model]\nnoise = loud\n"), Err(Error::Parse(_))));
        assert!(ExperimentConfig::parse("[simulation]\nlambda = 1\nlambda_fraction = 0.5\n")
            .unwrap()
            .simulation_lambda()
            .is_err());
    }

    #[test]
    fn hash_tracks_resolved_values() {
        let a = ExperimentConfig::parse("").unwrap();
        let b = ExperimentConfig::parse("[model]\nhalf_side = 5.0\n").unwrap();
        let c = ExperimentConfig::parse("[model]\nhalf_side = 4\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
