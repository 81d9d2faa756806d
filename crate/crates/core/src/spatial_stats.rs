//! Palm-type estimators on snapshots of the link process.
//!
//! All estimators treat each snapshot as one stationary sample. Standard
//! errors come from the spread between snapshots, so they are only honest
//! when the snapshots are far enough apart in time to be nearly independent.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::network_state::{interference, place_transmitter, uniform_point, ChannelParams, Link, LinkConfiguration};
use crate::numerics::stats::Z95;
use crate::rng::{replication_rng, Purpose};
use crate::torus::{PathLossModel, Point};
use crate::{Error, Result};

/// Which end of each link is treated as the point pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PointSet {
    #[default]
    Receivers,
    Transmitters,
}

fn points(cfg: &LinkConfiguration, which: PointSet) -> Vec<Point> {
    cfg.links()
        .iter()
        .map(|l| match which {
            PointSet::Receivers => l.rx,
            PointSet::Transmitters => l.tx,
        })
        .collect()
}

/// A Palm average over points pooled across snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PalmEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_points: usize,
    pub n_snapshots: usize,
}

impl PalmEstimate {
    pub fn ci95(&self) -> (f64, f64) {
        (self.value - Z95 * self.std_error, self.value + Z95 * self.std_error)
    }

    /// Pooled ratio `Σ sums / Σ counts` with a delta-method standard error
    /// over snapshots.
    fn ratio(per_snapshot: &[(f64, usize)]) -> Result<Self> {
        let used: Vec<(f64, f64)> =
            per_snapshot.iter().filter(|(_, n)| *n > 0).map(|&(s, n)| (s, n as f64)).collect();
        let k = used.len();
        if k == 0 {
            return Err(Error::Parameter("no snapshot contains a point".into()));
        }
        let total_n: f64 = used.iter().map(|p| p.1).sum();
        let value = used.iter().map(|p| p.0).sum::<f64>() / total_n;
        let std_error = if k > 1 {
            let n_bar = total_n / k as f64;
            let ss: f64 = used.iter().map(|(s, n)| (s - value * n).powi(2)).sum();
            (ss / (k * (k - 1)) as f64).sqrt() / n_bar
        } else {
            0.0
        };
        Ok(Self { value, std_error, n_points: total_n as usize, n_snapshots: k })
    }

    fn of_means(means: &[f64], n_points: usize) -> Self {
        let est = crate::numerics::MeanEstimate::from_samples(means);
        Self { value: est.mean, std_error: est.std_error, n_points, n_snapshots: est.n }
    }
}

/// One row of an estimated K-function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipleyPoint {
    pub r: f64,
    pub k_hat: f64,
    pub std_error: f64,
    /// Value for a Poisson process, `πr²`.
    pub k_ppp: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl RipleyPoint {
    /// Whether the 95% interval lies strictly above the Poisson value.
    pub fn clustered(&self) -> bool {
        self.ci_lo > self.k_ppp
    }

    pub fn covers_ppp(&self) -> bool {
        self.ci_lo <= self.k_ppp && self.k_ppp <= self.ci_hi
    }
}

/// Ripley's K-function of the receivers (or transmitters).
///
/// For a snapshot with `n` points, `K̂(r) = |S|/(n(n−1)) Σ_{i≠j} 1{d_ij ≤ r}`.
/// Radii below `Q` need no edge correction on the torus. The result averages
/// the per-snapshot estimates.
pub fn ripley_k(snapshots: &[LinkConfiguration], radii: &[f64], which: PointSet) -> Result<Vec<RipleyPoint>> {
    if snapshots.is_empty() {
        return Err(Error::Parameter("no snapshots".into()));
    }
    for cfg in snapshots {
        let q = cfg.domain().half_side();
        if let Some(r) = radii.iter().find(|r| !(**r >= 0.0 && **r < q)) {
            return Err(Error::Parameter(format!("radius {r} outside [0, Q) with Q = {q}")));
        }
        if cfg.len() < 2 {
            return Err(Error::Parameter(format!("a snapshot has {} points; K needs at least 2", cfg.len())));
        }
    }
    let per_snapshot: Vec<Vec<f64>> = snapshots
        .par_iter()
        .map(|cfg| {
            let d = cfg.domain();
            let pts = points(cfg, which);
            let n = pts.len();
            let mut dists = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in i + 1..n {
                    dists.push(d.dist(pts[i], pts[j]));
                }
            }
            dists.sort_unstable_by(f64::total_cmp);
            let scale = 2.0 * d.area() / (n * (n - 1)) as f64;
            radii.iter().map(|&r| dists.partition_point(|x| *x <= r) as f64 * scale).collect()
        })
        .collect();
    Ok(radii
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let col: Vec<f64> = per_snapshot.iter().map(|row| row[k]).collect();
            let est = crate::numerics::MeanEstimate::from_samples(&col);
            let (ci_lo, ci_hi) = est.ci95();
            RipleyPoint { r, k_hat: est.mean, std_error: est.std_error, k_ppp: PI * r * r, ci_lo, ci_hi }
        })
        .collect())
}

/// A bounded, non-negative, non-increasing function of distance.
#[derive(Clone)]
pub struct ShotNoiseKernel {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    label: String,
}

impl fmt::Debug for ShotNoiseKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ShotNoiseKernel").field("label", &self.label).finish()
    }
}

impl ShotNoiseKernel {
    /// Wraps `f` after checking it on a grid of `[0, max_radius]`.
    pub fn new<F>(f: F, max_radius: f64, label: impl Into<String>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        const GRID: usize = 2048;
        if !(max_radius.is_finite() && max_radius > 0.0) {
            return Err(Error::Parameter(format!("kernel check radius must be positive, got {max_radius}")));
        }
        let mut prev = f64::INFINITY;
        for k in 0..=GRID {
            let r = max_radius * k as f64 / GRID as f64;
            let v = f(r);
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parameter(format!("kernel value {v} at r = {r} is not finite and non-negative")));
            }
            if v > prev {
                return Err(Error::Parameter(format!("kernel increases at r = {r}")));
            }
            prev = v;
        }
        Ok(Self { f: Arc::new(f), label: label.into() })
    }

    pub fn indicator(radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::Parameter(format!("indicator radius must be non-negative, got {radius}")));
        }
        Self::new(move |r| if r <= radius { 1.0 } else { 0.0 }, (2.0 * radius).max(1.0), format!("1{{r<={radius}}}"))
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(move |_| c, 1.0, format!("const {c}"))
    }

    /// The path loss itself; its shot noise is the interference.
    pub fn pathloss(model: &PathLossModel, max_radius: f64) -> Result<Self> {
        model.validate()?;
        if !model.is_bounded() {
            return Err(Error::Parameter("shot-noise kernels must be bounded".into()));
        }
        let m = model.clone();
        Self::new(move |r| m.evaluate(r), max_radius, "pathloss")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, r: f64) -> f64 {
        (self.f)(r)
    }
}

/// Shot noise seen from a typical receiver against the stationary mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotNoiseComparison {
    /// Mean over receivers of `Σ_{tx ≠ own} f(d)`.
    pub palm: PalmEstimate,
    /// Mean over uniform probe points of `Σ_tx f(d)`.
    pub volume: PalmEstimate,
    /// Snapshots without links.
    pub skipped: usize,
}

impl ShotNoiseComparison {
    /// True when the Palm interval lies above the volume interval.
    pub fn separated(&self) -> bool {
        self.palm.ci95().0 > self.volume.ci95().1
    }
}

/// Palm and volume shot noise with `probes` uniform probe points per snapshot.
///
/// Probe `k` of snapshot `i` is drawn from the probe stream of replication `i`.
pub fn palm_shot_noise(
    snapshots: &[LinkConfiguration],
    kernel: &ShotNoiseKernel,
    probes: usize,
    seed: u64,
) -> Result<ShotNoiseComparison> {
    if probes == 0 {
        return Err(Error::Parameter("need at least one probe point per snapshot".into()));
    }
    let rows: Vec<Option<((f64, usize), f64)>> = snapshots
        .par_iter()
        .enumerate()
        .map(|(i, cfg)| {
            if cfg.is_empty() {
                return None;
            }
            let d = cfg.domain();
            let links = cfg.links();
            let at = |x: Point, own: Option<u64>| -> f64 {
                links.iter().filter(|l| Some(l.id) != own).map(|l| kernel.eval(d.dist(x, l.tx))).sum()
            };
            let palm: f64 = links.iter().map(|l| at(l.rx, Some(l.id))).sum();
            let mut rng = replication_rng(seed, i as u64, Purpose::Probes);
            let vol: f64 = (0..probes).map(|_| at(uniform_point(d, &mut rng), None)).sum::<f64>() / probes as f64;
            Some(((palm, links.len()), vol))
        })
        .collect();
    let skipped = rows.iter().filter(|r| r.is_none()).count();
    let used: Vec<((f64, usize), f64)> = rows.into_iter().flatten().collect();
    let palm_rows: Vec<(f64, usize)> = used.iter().map(|r| r.0).collect();
    let vol_means: Vec<f64> = used.iter().map(|r| r.1).collect();
    Ok(ShotNoiseComparison {
        palm: PalmEstimate::ratio(&palm_rows)?,
        volume: PalmEstimate::of_means(&vol_means, vol_means.len() * probes),
        skipped,
    })
}

/// Interference at every receiver of every snapshot.
fn receiver_interference(snapshots: &[LinkConfiguration], p: &ChannelParams) -> Vec<Vec<f64>> {
    snapshots
        .par_iter()
        .map(|cfg| cfg.links().iter().map(|l| interference(l.rx, Some(l.id), cfg, p)).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacePoint {
    pub s: f64,
    pub estimate: PalmEstimate,
}

/// Palm Laplace transform of the interference, `E⁰[e^{−sI}]`, on a grid of `s`.
pub fn palm_laplace_interference(
    snapshots: &[LinkConfiguration],
    p: &ChannelParams,
    s_grid: &[f64],
) -> Result<Vec<LaplacePoint>> {
    if let Some(s) = s_grid.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::Parameter(format!("Laplace argument must be finite and non-negative, got {s}")));
    }
    p.validate()?;
    let interf = receiver_interference(snapshots, p);
    s_grid
        .iter()
        .map(|&s| {
            let rows: Vec<(f64, usize)> =
                interf.iter().map(|is| (is.iter().map(|i| (-s * i).exp()).sum(), is.len())).collect();
            Ok(LaplacePoint { s, estimate: PalmEstimate::ratio(&rows)? })
        })
        .collect()
}

/// Independently marked binomial counterpart of each snapshot.
///
/// Keeps the link count, draws receivers uniformly and puts each transmitter
/// at the link length in a uniform direction. Snapshot `i` uses the surrogate
/// stream of replication `i`.
pub fn binomial_surrogate(snapshots: &[LinkConfiguration], seed: u64) -> Result<Vec<LinkConfiguration>> {
    snapshots
        .iter()
        .enumerate()
        .map(|(i, cfg)| {
            let d = *cfg.domain();
            let t = cfg.link_length();
            let mut rng = replication_rng(seed, i as u64, Purpose::Surrogate);
            let links = (0..cfg.len() as u64)
                .map(|id| {
                    let rx = uniform_point(&d, &mut rng);
                    let tx = place_transmitter(&d, rx, t, &mut rng);
                    Link { id, rx, tx, residual_bits: 1.0, birth_time: 0.0 }
                })
                .collect();
            LinkConfiguration::with_links(d, t, links)
        })
        .collect()
}

/// Both sides of the rate-conservation identity `λL = β·E⁰[R]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConservation {
    pub lhs: f64,
    pub rhs: PalmEstimate,
    pub relative_gap: f64,
}

/// Compares the offered load `λL` with the served load `β̂ · mean rate`.
pub fn rate_conservation_check(
    snapshots: &[LinkConfiguration],
    p: &ChannelParams,
    lambda: f64,
) -> Result<RateConservation> {
    if snapshots.is_empty() {
        return Err(Error::Parameter("no snapshots".into()));
    }
    p.validate()?;
    let intensities: Vec<f64> = snapshots.iter().map(|c| c.len() as f64 / c.domain().area()).collect();
    let beta = crate::numerics::MeanEstimate::from_samples(&intensities);
    let interf = receiver_interference(snapshots, p);
    let rows: Vec<(f64, usize)> = snapshots
        .iter()
        .zip(&interf)
        .map(|(cfg, is)| {
            let s = p.signal(cfg.link_length());
            (is.iter().map(|i| p.rate(s, *i)).sum(), is.len())
        })
        .collect();
    let rate = PalmEstimate::ratio(&rows)?;
    let value = beta.mean * rate.value;
    let std_error = (rate.value * beta.std_error).hypot(beta.mean * rate.std_error);
    let lhs = lambda * p.mean_file;
    Ok(RateConservation {
        lhs,
        rhs: PalmEstimate { value, std_error, ..rate },
        relative_gap: (lhs - value).abs() / lhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::TorusDomain;

    fn binomial(n: usize, q: f64, t: f64, seed: u64, rep: u64) -> LinkConfiguration {
        let d = TorusDomain::new(q).unwrap();
        let mut rng = replication_rng(seed, rep, Purpose::Surrogate);
        let links = (0..n as u64)
            .map(|id| {
                let rx = uniform_point(&d, &mut rng);
                Link { id, rx, tx: place_transmitter(&d, rx, t, &mut rng), residual_bits: 1.0, birth_time: 0.0 }
            })
            .collect();
        LinkConfiguration::with_links(d, t, links).unwrap()
    }

    fn params() -> ChannelParams {
        ChannelParams::new(1.0, 1.0, 1.0, PathLossModel::bounded(1.0, 4.0).unwrap()).unwrap()
    }

    #[test]
    fn k_of_binomial_process_is_pi_r_squared() {
        let snaps: Vec<_> = (0..50).map(|k| binomial(500, 5.0, 0.0, 11, k)).collect();
        let radii = [0.25, 0.5, 1.0, 2.0];
        for row in ripley_k(&snaps, &radii, PointSet::Receivers).unwrap() {
            assert!(row.covers_ppp(), "{row:?}");
        }
    }

    #[test]
    fn k_of_two_points() {
        let d = TorusDomain::new(2.0).unwrap();
        let mk = |id, x| Link { id, rx: Point::new(x, 0.0), tx: Point::new(x, 0.0), residual_bits: 1.0, birth_time: 0.0 };
        let cfg = LinkConfiguration::with_links(d, 0.0, vec![mk(0, -0.5), mk(1, 0.7)]).unwrap();
        let rows = ripley_k(&[cfg], &[1.0, 1.2, 1.5], PointSet::Receivers).unwrap();
        assert_eq!(rows[0].k_hat, 0.0);
        assert_eq!(rows[1].k_hat, 16.0);
        assert_eq!(rows[2].k_hat, 16.0);
    }

    #[test]
    fn k_rejects_large_radius_and_sparse_snapshots() {
        let cfg = binomial(10, 2.0, 0.0, 1, 0);
        assert!(matches!(ripley_k(&[cfg.clone()], &[2.0], PointSet::Receivers), Err(Error::Parameter(_))));
        let one = binomial(1, 2.0, 0.0, 1, 0);
        assert!(ripley_k(&[one], &[1.0], PointSet::Receivers).is_err());
        let rows = ripley_k(&[cfg], &[0.0, 0.5, 1.0, 1.9], PointSet::Transmitters).unwrap();
        assert!(rows.windows(2).all(|w| w[0].k_hat <= w[1].k_hat));
        assert_eq!(rows[0].k_hat, 0.0);
    }

    #[test]
    fn kernel_validation() {
        assert!(ShotNoiseKernel::new(|r| r, 1.0, "up").is_err());
        assert!(ShotNoiseKernel::new(|_| -1.0, 1.0, "neg").is_err());
        assert!(ShotNoiseKernel::pathloss(&PathLossModel::power_law(4.0).unwrap(), 5.0).is_err());
        assert!(ShotNoiseKernel::indicator(1.0).is_ok());
    }

    #[test]
    fn constant_kernel_counts_points() {
        let snaps: Vec<_> = (0..3).map(|k| binomial(7 + k as usize, 3.0, 1.0, 4, k)).collect();
        let r = palm_shot_noise(&snaps, &ShotNoiseKernel::constant(2.0).unwrap(), 5, 1).unwrap();
        // Σ n(n−1)·c / Σ n with n = 7, 8, 9.
        let expect = 2.0 * (42.0 + 56.0 + 72.0) / 24.0;
        assert!((r.palm.value - expect).abs() < 1e-12);
        assert!((r.volume.value - 16.0).abs() < 1e-12);
        assert_eq!(r.skipped, 0);
    }

    #[test]
    fn pathloss_kernel_is_interference() {
        let p = params();
        let cfg = binomial(40, 3.0, 1.0, 8, 0);
        let k = ShotNoiseKernel::pathloss(&p.pathloss, cfg.domain().diameter()).unwrap();
        let r = palm_shot_noise(std::slice::from_ref(&cfg), &k, 3, 0).unwrap();
        let direct: f64 =
            cfg.links().iter().map(|l| interference(l.rx, Some(l.id), &cfg, &p)).sum::<f64>() / cfg.len() as f64;
        assert!((r.palm.value - direct).abs() < 1e-12);
    }

    #[test]
    fn indicator_kernel_matches_k() {
        let cfg = binomial(60, 3.0, 0.0, 9, 2);
        let n = cfg.len() as f64;
        let beta = n / cfg.domain().area();
        for r0 in [0.3, 0.8, 1.5] {
            let k = ripley_k(std::slice::from_ref(&cfg), &[r0], PointSet::Receivers).unwrap()[0].k_hat;
            let palm = palm_shot_noise(std::slice::from_ref(&cfg), &ShotNoiseKernel::indicator(r0).unwrap(), 1, 0)
                .unwrap()
                .palm
                .value;
            assert!((palm * n / (n - 1.0) - beta * k).abs() < 1e-9);
        }
    }

    #[test]
    fn estimators_are_translation_and_permutation_invariant() {
        let p = params();
        let snaps: Vec<_> = (0..4).map(|k| binomial(30, 3.0, 0.5, 3, k)).collect();
        let moved: Vec<_> = snaps.iter().map(|c| c.translated(1.3, -2.1)).collect();
        let shuffled: Vec<_> = snaps
            .iter()
            .map(|c| {
                let mut l = c.links().to_vec();
                l.reverse();
                LinkConfiguration::with_links(*c.domain(), c.link_length(), l).unwrap()
            })
            .collect();
        let radii = [0.5, 1.0];
        let k0 = ripley_k(&snaps, &radii, PointSet::Receivers).unwrap();
        let s = [0.0, 0.5, 2.0];
        let l0 = palm_laplace_interference(&snaps, &p, &s).unwrap();
        let r0 = rate_conservation_check(&snaps, &p, 0.1).unwrap();
        for other in [&moved, &shuffled] {
            for (a, b) in k0.iter().zip(ripley_k(other, &radii, PointSet::Receivers).unwrap()) {
                assert!((a.k_hat - b.k_hat).abs() < 1e-9);
            }
            for (a, b) in l0.iter().zip(palm_laplace_interference(other, &p, &s).unwrap()) {
                assert!((a.estimate.value - b.estimate.value).abs() < 1e-9);
            }
            assert!((r0.rhs.value - rate_conservation_check(other, &p, 0.1).unwrap().rhs.value).abs() < 1e-9);
        }
    }

    #[test]
    fn laplace_limits() {
        let p = params();
        let snaps: Vec<_> = (0..3).map(|k| binomial(20, 3.0, 0.0, 5, k)).collect();
        let rows = palm_laplace_interference(&snaps, &p, &[0.0, 1e9]).unwrap();
        assert_eq!(rows[0].estimate.value, 1.0);
        assert!(rows[1].estimate.value < 1e-12);
        assert!(palm_laplace_interference(&snaps, &p, &[-1.0]).is_err());
    }

    #[test]
    fn surrogate_keeps_counts() {
        let snaps: Vec<_> = (0..3).map(|k| binomial(10 + k as usize, 3.0, 1.0, 5, k)).collect();
        let sur = binomial_surrogate(&snaps, 7).unwrap();
        for (a, b) in snaps.iter().zip(&sur) {
            assert_eq!(a.len(), b.len());
            assert_eq!(a.link_length(), b.link_length());
        }
        assert_eq!(sur, binomial_surrogate(&snaps, 7).unwrap());
    }
}
