use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::network_state::{ChannelParams, LinkConfiguration, LinkId};
use crate::numerics::stats::LinearFit;
use crate::torus::{Point, TorusDomain};
use crate::{Error, Result};

/// File-size law. Both variants are parameterized by their mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FileDistribution {
    Exponential { mean: f64 },
    /// Pareto with tail index `shape > 1` and scale `mean·(shape − 1)/shape`.
    Pareto { shape: f64, mean: f64 },
}

impl FileDistribution {
    pub fn exponential(mean: f64) -> Result<Self> {
        let d = Self::Exponential { mean };
        d.validate()?;
        Ok(d)
    }

    pub fn pareto(shape: f64, mean: f64) -> Result<Self> {
        let d = Self::Pareto { shape, mean };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let mean = self.mean();
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::Parameter(format!("file-size mean must be positive, got {mean}")));
        }
        if let Self::Pareto { shape, .. } = self {
            if !(shape.is_finite() && *shape > 1.0) {
                return Err(Error::Parameter(format!("Pareto shape must exceed 1 for a finite mean, got {shape}")));
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { mean } | Self::Pareto { mean, .. } => mean,
        }
    }

    /// Pareto scale (minimum file size); `None` for exponential files.
    pub fn pareto_scale(&self) -> Option<f64> {
        match *self {
            Self::Pareto { shape, mean } => Some(mean * (shape - 1.0) / shape),
            Self::Exponential { .. } => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Exponential { mean } => {
                let e: f64 = Exp1.sample(rng);
                mean * e
            }
            Self::Pareto { shape, mean } => {
                let scale = mean * (shape - 1.0) / shape;
                // 1 - U lies in (0, 1], so the power is finite.
                let u = 1.0 - rng.random::<f64>();
                scale * u.powf(-1.0 / shape)
            }
        }
    }

    pub fn ccdf(&self, x: f64) -> f64 {
        match *self {
            Self::Exponential { mean } => (-x.max(0.0) / mean).exp(),
            Self::Pareto { shape, mean } => {
                let scale = mean * (shape - 1.0) / shape;
                if x <= scale {
                    1.0
                } else {
                    (scale / x).powf(shape)
                }
            }
        }
    }
}

/// State of the network at time 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub enum InitialState {
    #[default]
    Empty,
    /// Independent Poisson links of the given density with fresh files.
    Poisson { density: f64 },
    Links(LinkConfiguration),
}

/// Full parameterization of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Arrival intensity per unit area and unit time.
    pub lambda: f64,
    pub channel: ChannelParams,
    pub domain: TorusDomain,
    pub link_length: f64,
    pub file_dist: FileDistribution,
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    /// Replication index; selects the random streams under `seed`.
    pub replication: u64,
    pub snapshot_times: Vec<f64>,
    /// Spacing of the recorded `(t, N_t)` trajectory.
    pub sample_interval: f64,
    /// Runs stop (flagged as truncated) once this many links are alive.
    pub max_links: usize,
    pub record_events: bool,
    pub initial: InitialState,
}

pub const DEFAULT_MAX_LINKS: usize = 100_000;

impl SimulationConfig {
    /// A configuration with exponential files of mean `channel.mean_file`,
    /// no snapshots and no event log.
    pub fn new(lambda: f64, channel: ChannelParams, domain: TorusDomain, link_length: f64, horizon: f64) -> Self {
        let mean = channel.mean_file;
        Self {
            lambda,
            channel,
            domain,
            link_length,
            file_dist: FileDistribution::Exponential { mean },
            horizon,
            warmup: 0.0,
            seed: 0,
            replication: 0,
            snapshot_times: Vec::new(),
            sample_interval: horizon / 1000.0,
            max_links: DEFAULT_MAX_LINKS,
            record_events: false,
            initial: InitialState::Empty,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if !self.channel.pathloss.is_bounded() {
            return Err(Error::Configuration(
                "power-law path loss is unbounded at the origin: the interference constant a diverges and \
                 the dynamics admits no stationary regime for any λ > 0, so it cannot be simulated"
                    .into(),
            ));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Parameter(format!("arrival intensity must be finite and ≥ 0, got {}", self.lambda)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Parameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.warmup >= 0.0 && self.warmup < self.horizon) {
            return Err(Error::Parameter(format!(
                "warmup must lie in [0, horizon), got {} with horizon {}",
                self.warmup, self.horizon
            )));
        }
        if !(self.link_length >= 0.0 && self.link_length <= self.domain.half_side()) {
            return Err(Error::Parameter(format!("link length must lie in [0, Q], got {}", self.link_length)));
        }
        self.file_dist.validate()?;
        let (m, l) = (self.file_dist.mean(), self.channel.mean_file);
        if (m - l).abs() > 1e-12 * l {
            return Err(Error::Configuration(format!("file-size mean {m} differs from the channel mean file size {l}")));
        }
        if !(self.sample_interval > 0.0) {
            return Err(Error::Parameter("trajectory sample interval must be positive".into()));
        }
        if self.max_links == 0 {
            return Err(Error::Parameter("max_links must be ≥ 1".into()));
        }
        if let Some(t) = self.snapshot_times.iter().find(|t| !(**t >= 0.0 && **t <= self.horizon)) {
            return Err(Error::Parameter(format!("snapshot time {t} outside [0, horizon]")));
        }
        match &self.initial {
            InitialState::Poisson { density } if !(density.is_finite() && *density >= 0.0) => {
                return Err(Error::Parameter(format!("initial density must be ≥ 0, got {density}")));
            }
            InitialState::Links(cfg) if cfg.link_length() != self.link_length || cfg.domain() != &self.domain => {
                return Err(Error::Configuration("initial configuration does not match the domain or link length".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Birth,
    Death,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: EventKind,
    pub time: f64,
    pub link_id: LinkId,
    pub rx: Point,
    pub tx: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub configuration: LinkConfiguration,
}

/// Measured outputs of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Time average of `N_t/|S|` over `[warmup, horizon]`.
    pub beta_hat: f64,
    /// Batch-means standard error of `beta_hat`.
    pub beta_std_error: f64,
    /// Mean sojourn of links born after warmup that died before the horizon.
    pub w_hat: f64,
    pub w_std_error: f64,
    pub delay_samples: Vec<f64>,
    pub n_trajectory: Vec<(f64, usize)>,
    /// Links inserted, including the initial configuration.
    pub births: u64,
    pub deaths: u64,
    /// Work delivered during `[warmup, horizon]` divided by its length.
    pub throughput: f64,
    pub snapshots: Vec<Snapshot>,
    pub events: Vec<EventRecord>,
    /// Largest relative gap between integrated rate and file size at a death.
    pub max_workload_error: f64,
    /// Set when the run stopped early on the link cap.
    pub truncated: bool,
    pub end_time: f64,
    pub lambda: f64,
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
}

/// Outcome of the growth test for one arrival intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrowthVerdict {
    StableLooking,
    Growing,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProbeResult {
    pub lambda: f64,
    pub slope: f64,
    pub slope_std_error: f64,
    pub endpoint: usize,
    pub reference_lambda: f64,
    pub reference_window_mean: f64,
    pub truncated: bool,
    pub verdict: GrowthVerdict,
}

impl ProbeResult {
    pub(crate) fn from_fit(
        lambda: f64,
        fit: LinearFit,
        endpoint: usize,
        reference_lambda: f64,
        reference_window_mean: f64,
        truncated: bool,
    ) -> Self {
        let growing =
            truncated || (fit.slope > 3.0 * fit.slope_std_error && endpoint as f64 > 2.0 * reference_window_mean);
        Self {
            lambda,
            slope: fit.slope,
            slope_std_error: fit.slope_std_error,
            endpoint,
            reference_lambda,
            reference_window_mean,
            truncated,
            verdict: if growing { GrowthVerdict::Growing } else { GrowthVerdict::StableLooking },
        }
    }
}
