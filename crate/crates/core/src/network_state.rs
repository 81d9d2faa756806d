//! Live-link configurations and the rate functionals evaluated on them.

use std::f64::consts::{LN_2, PI};

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::numerics::MeanEstimate;
use crate::torus::{PathLossModel, Point, TorusDomain};
use crate::{Error, Result};

pub type LinkId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub rx: Point,
    pub tx: Point,
    pub residual_bits: f64,
    pub birth_time: f64,
}

/// A set of links sharing one link length on a torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfiguration {
    domain: TorusDomain,
    link_length: f64,
    links: Vec<Link>,
}

impl LinkConfiguration {
    pub fn new(domain: TorusDomain, link_length: f64) -> Result<Self> {
        if !(link_length >= 0.0 && link_length <= domain.half_side()) {
            return Err(Error::Parameter(format!(
                "link length must lie in [0, Q] = [0, {}], got {link_length}",
                domain.half_side()
            )));
        }
        Ok(Self { domain, link_length, links: Vec::new() })
    }

    pub fn with_links(domain: TorusDomain, link_length: f64, links: Vec<Link>) -> Result<Self> {
        let mut cfg = Self::new(domain, link_length)?;
        cfg.links.reserve(links.len());
        for l in links {
            cfg.push(l)?;
        }
        Ok(cfg)
    }

    /// Adds a link after checking its geometry, workload and id.
    pub fn push(&mut self, link: Link) -> Result<()> {
        if !self.domain.contains(link.rx) || !self.domain.contains(link.tx) {
            return Err(Error::Domain(format!("link {} has an endpoint outside the torus", link.id)));
        }
        let d = self.domain.dist(link.rx, link.tx);
        if (d - self.link_length).abs() > 1e-9 * self.link_length.max(1.0) {
            return Err(Error::Invariant(format!(
                "link {} has length {d}, expected {}",
                link.id, self.link_length
            )));
        }
        if !(link.residual_bits > 0.0 && link.residual_bits.is_finite()) {
            return Err(Error::Invariant(format!("link {} has non-positive residual workload", link.id)));
        }
        if self.links.iter().any(|l| l.id == link.id) {
            return Err(Error::Invariant(format!("duplicate link id {}", link.id)));
        }
        self.links.push(link);
        Ok(())
    }

    pub fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    pub fn link_length(&self) -> f64 {
        self.link_length
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn get(&self, id: LinkId) -> Option<&Link> {
        self.links.iter().find(|l| l.id == id)
    }

    pub fn remove(&mut self, id: LinkId) -> Option<Link> {
        let idx = self.links.iter().position(|l| l.id == id)?;
        Some(self.links.swap_remove(idx))
    }

    /// The same configuration shifted by `(dx, dy)` on the torus.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let shift = |p: Point| self.domain.wrap(Point::new(p.x + dx, p.y + dy));
        let links = self.links.iter().map(|l| Link { rx: shift(l.rx), tx: shift(l.tx), ..*l }).collect();
        Self { domain: self.domain, link_length: self.link_length, links }
    }
}

/// Shannon-rate channel constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Bandwidth-like prefactor `C`.
    pub capacity: f64,
    pub noise: f64,
    /// Mean file size `L`.
    pub mean_file: f64,
    pub pathloss: PathLossModel,
}

impl ChannelParams {
    pub fn new(capacity: f64, noise: f64, mean_file: f64, pathloss: PathLossModel) -> Result<Self> {
        let p = Self { capacity, noise, mean_file, pathloss };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("C", self.capacity), ("N0", self.noise), ("L", self.mean_file)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        self.pathloss.validate()
    }

    /// Received signal power `l(T)`.
    pub fn signal(&self, link_length: f64) -> f64 {
        self.pathloss.evaluate(link_length)
    }

    /// `C·log₂(1 + s/(N0 + I))`.
    #[inline]
    pub fn rate(&self, signal: f64, interference: f64) -> f64 {
        self.capacity * (signal / (self.noise + interference)).ln_1p() / LN_2
    }

    /// Rate of a link that sees no interference.
    pub fn solo_rate(&self, link_length: f64) -> f64 {
        self.rate(self.signal(link_length), 0.0)
    }
}

/// Total received power at `rx` from every transmitter except link `own`.
pub fn interference(rx: Point, own: Option<LinkId>, cfg: &LinkConfiguration, p: &ChannelParams) -> f64 {
    let d = cfg.domain();
    cfg.links()
        .iter()
        .filter(|l| Some(l.id) != own)
        .map(|l| p.pathloss.evaluate_sq(d.dist_sq(rx, l.tx)))
        .sum()
}

/// Shannon rate of link `own` received at `rx`.
pub fn shannon_rate(rx: Point, own: Option<LinkId>, cfg: &LinkConfiguration, p: &ChannelParams) -> f64 {
    p.rate(p.signal(cfg.link_length()), interference(rx, own, cfg, p))
}

/// Sum of the Shannon rates of all live links.
pub fn workload_derivative(cfg: &LinkConfiguration, p: &ChannelParams) -> f64 {
    cfg.links().iter().map(|l| shannon_rate(l.rx, Some(l.id), cfg, p)).sum()
}

/// Unit-mean fading law for power gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FadeDistribution {
    /// No fading: every gain is 1.
    Unit,
    /// Rayleigh amplitude, exponential power.
    Exponential,
    /// Gamma with the given shape and scale `1/shape` (Nakagami-m power).
    Gamma { shape: f64 },
}

impl FadeDistribution {
    fn sampler(&self) -> Result<Fader> {
        Ok(match *self {
            Self::Unit => Fader::Unit,
            Self::Exponential => Fader::Exp,
            Self::Gamma { shape } => Fader::Gamma(
                Gamma::new(shape, 1.0 / shape)
                    .map_err(|e| Error::Parameter(format!("invalid Gamma fading shape {shape}: {e}")))?,
            ),
        })
    }
}

enum Fader {
    Unit,
    Exp,
    Gamma(Gamma<f64>),
}

impl Fader {
    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Fader::Unit => 1.0,
            Fader::Exp => Exp1.sample(rng),
            Fader::Gamma(g) => g.sample(rng),
        }
    }
}

/// Monte Carlo rate under i.i.d. fading of the signal and of every
/// interference term.
pub fn faded_rate<R: Rng + ?Sized>(
    rx: Point,
    own: Option<LinkId>,
    cfg: &LinkConfiguration,
    p: &ChannelParams,
    fade: FadeDistribution,
    mc_samples: usize,
    rng: &mut R,
) -> Result<MeanEstimate> {
    if mc_samples < 1 {
        return Err(Error::Parameter("faded rate needs at least one Monte Carlo sample".into()));
    }
    let fader = fade.sampler()?;
    let d = cfg.domain();
    let signal = p.signal(cfg.link_length());
    let gains: Vec<f64> = cfg
        .links()
        .iter()
        .filter(|l| Some(l.id) != own)
        .map(|l| p.pathloss.evaluate_sq(d.dist_sq(rx, l.tx)))
        .collect();
    let samples: Vec<f64> = (0..mc_samples)
        .map(|_| {
            let h = fader.draw(rng);
            let i: f64 = gains.iter().map(|g| fader.draw(rng) * g).sum();
            p.rate(h * signal, i)
        })
        .collect();
    Ok(MeanEstimate::from_samples(&samples))
}

/// Antenna counts and sample size for the independent-channel MIMO rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MimoConfig {
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub mc_samples: usize,
}

impl MimoConfig {
    pub fn new(tx_antennas: usize, rx_antennas: usize, mc_samples: usize) -> Result<Self> {
        if tx_antennas == 0 || rx_antennas == 0 || mc_samples == 0 {
            return Err(Error::Parameter("MIMO antenna counts and sample size must be ≥ 1".into()));
        }
        Ok(Self { tx_antennas, rx_antennas, mc_samples })
    }
}

/// A fixed batch of channel matrices with the eigenvalues of `HH†`.
#[derive(Debug, Clone)]
pub struct MimoDraws {
    config: MimoConfig,
    channels: Vec<DMatrix<Complex<f64>>>,
    eigenvalues: Vec<Vec<f64>>,
}

impl MimoDraws {
    pub fn sample<R: Rng + ?Sized>(config: MimoConfig, rng: &mut R) -> Self {
        let (xr, xt) = (config.rx_antennas, config.tx_antennas);
        let mut channels = Vec::with_capacity(config.mc_samples);
        let mut eigenvalues = Vec::with_capacity(config.mc_samples);
        let sd = std::f64::consts::FRAC_1_SQRT_2;
        for _ in 0..config.mc_samples {
            let h = DMatrix::from_fn(xr, xt, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex::new(sd * re, sd * im)
            });
            let gram = &h * h.adjoint();
            let eig = SymmetricEigen::new(gram);
            eigenvalues.push(eig.eigenvalues.iter().map(|v| v.max(0.0)).collect());
            channels.push(h);
        }
        Self { config, channels, eigenvalues }
    }

    pub fn config(&self) -> MimoConfig {
        self.config
    }

    pub fn channels(&self) -> &[DMatrix<Complex<f64>>] {
        &self.channels
    }

    pub fn eigenvalues(&self) -> &[Vec<f64>] {
        &self.eigenvalues
    }

    /// `C·E[Σᵢ log₂(1 + s·σᵢ/(Xt·(N0 + I)))]` over the stored draws.
    pub fn rate(&self, p: &ChannelParams, signal: f64, interference: f64) -> MeanEstimate {
        let scale = signal / (self.config.tx_antennas as f64 * (p.noise + interference));
        let samples: Vec<f64> = self
            .eigenvalues
            .iter()
            .map(|ev| p.capacity * ev.iter().map(|s| (scale * s).ln_1p()).sum::<f64>() / LN_2)
            .collect();
        MeanEstimate::from_samples(&samples)
    }
}

/// Independent-channel MIMO rate without transmitter channel knowledge.
/// Interference is the scalar single-antenna interference at `rx`.
pub fn mimo_indep_rate<R: Rng + ?Sized>(
    rx: Point,
    own: Option<LinkId>,
    cfg: &LinkConfiguration,
    p: &ChannelParams,
    m: MimoConfig,
    rng: &mut R,
) -> MeanEstimate {
    let i = interference(rx, own, cfg, p);
    MimoDraws::sample(m, rng).rate(p, p.signal(cfg.link_length()), i)
}

/// Uniform point on the circle of radius `t` around `rx`, wrapped onto the torus.
pub fn place_transmitter<R: Rng + ?Sized>(domain: &TorusDomain, rx: Point, t: f64, rng: &mut R) -> Point {
    if t == 0.0 {
        return rx;
    }
    let theta = rng.random::<f64>() * 2.0 * PI;
    domain.wrap(Point::new(rx.x + t * theta.cos(), rx.y + t * theta.sin()))
}

/// Uniform point on the torus.
pub fn uniform_point<R: Rng + ?Sized>(domain: &TorusDomain, rng: &mut R) -> Point {
    let q = domain.half_side();
    domain.wrap(Point::new(q * (2.0 * rng.random::<f64>() - 1.0), q * (2.0 * rng.random::<f64>() - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate_to_infinity, QuadOptions};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> ChannelParams {
        ChannelParams::new(1.0, 1.0, 1.0, PathLossModel::bounded(1.0, 4.0).unwrap()).unwrap()
    }

    fn link(id: LinkId, x: f64, y: f64) -> Link {
        Link { id, rx: Point::new(x, y), tx: Point::new(x, y), residual_bits: 1.0, birth_time: 0.0 }
    }

    #[test]
    fn lone_link_rate_is_one() {
        let d = TorusDomain::new(5.0).unwrap();
        let cfg = LinkConfiguration::with_links(d, 0.0, vec![link(0, 0.0, 0.0)]).unwrap();
        let p = params();
        assert_eq!(interference(Point::ORIGIN, Some(0), &cfg, &p), 0.0);
        assert!((shannon_rate(Point::ORIGIN, Some(0), &cfg, &p) - 1.0).abs() < 1e-15);
        assert!((workload_derivative(&cfg, &p) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rate_arithmetic() {
        let p = params();
        let r = p.rate(1.0 / 16.0, 1.0 / 16.0);
        assert!((r - (18.0f64 / 17.0).log2()).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for k in 0..30 {
            let r = p.rate(1.0, 2f64.powi(k));
            assert!(r > 0.0 && r < prev);
            prev = r;
        }
    }

    #[test]
    fn five_link_oracle() {
        let d = TorusDomain::new(2.0).unwrap();
        let pts = [(0.1, 0.2), (-1.9, 1.7), (1.5, -1.5), (0.0, 0.9), (-0.7, -0.3)];
        let links: Vec<Link> = pts.iter().enumerate().map(|(i, &(x, y))| link(i as u64, x, y)).collect();
        let cfg = LinkConfiguration::with_links(d, 0.0, links).unwrap();
        let p = params();
        for (i, &(xi, yi)) in pts.iter().enumerate() {
            let mut oracle = 0.0;
            for (j, &(xj, yj)) in pts.iter().enumerate() {
                if i == j {
                    continue;
                }
                let mut best = f64::INFINITY;
                for a in -1..=1 {
                    for b in -1..=1 {
                        let dx = xj + 4.0 * a as f64 - xi;
                        let dy = yj + 4.0 * b as f64 - yi;
                        best = best.min((dx * dx + dy * dy).sqrt());
                    }
                }
                oracle += (best + 1.0).powi(-4);
            }
            let got = interference(Point::new(xi, yi), Some(i as u64), &cfg, &p);
            assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
        }
    }

    #[test]
    fn regular_polygon_workload() {
        let d = TorusDomain::new(5.0).unwrap();
        let k = 6;
        let links: Vec<Link> = (0..k)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / k as f64;
                link(i, 1.5 * th.cos(), 1.5 * th.sin())
            })
            .collect();
        let cfg = LinkConfiguration::with_links(d, 0.0, links.clone()).unwrap();
        let p = params();
        let r0 = shannon_rate(links[0].rx, Some(0), &cfg, &p);
        let total = workload_derivative(&cfg, &p);
        assert!((total - k as f64 * r0).abs() < 1e-12);
    }

    #[test]
    fn exponential_fading_matches_quadrature() {
        let d = TorusDomain::new(5.0).unwrap();
        let cfg = LinkConfiguration::with_links(d, 0.0, vec![link(0, 0.0, 0.0)]).unwrap();
        let p = params();
        let oracle = integrate_to_infinity(|h| (-h).exp() * (1.0 + h).log2(), 0.0, QuadOptions::rel(1e-10)).unwrap().value;
        assert!((oracle - 0.8600).abs() < 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let est = faded_rate(Point::ORIGIN, Some(0), &cfg, &p, FadeDistribution::Exponential, 20_000, &mut rng).unwrap();
        assert!(est.covers(oracle, 3.0), "{est:?} vs {oracle}");
        let unit = faded_rate(Point::ORIGIN, Some(0), &cfg, &p, FadeDistribution::Unit, 5, &mut rng).unwrap();
        assert_eq!(unit.mean, shannon_rate(Point::ORIGIN, Some(0), &cfg, &p));
        assert!(faded_rate(Point::ORIGIN, Some(0), &cfg, &p, FadeDistribution::Unit, 0, &mut rng).is_err());
    }

    #[test]
    fn mimo_matches_log_det_oracle() {
        let d = TorusDomain::new(5.0).unwrap();
        let cfg = LinkConfiguration::with_links(d, 0.0, vec![link(0, 0.0, 0.0)]).unwrap();
        let p = params();
        let m = MimoConfig::new(2, 2, 500).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = MimoDraws::sample(m, &mut rng);
        let est = draws.rate(&p, 1.0, 0.0);
        let oracle: f64 = draws
            .channels()
            .iter()
            .map(|h| {
                let g = DMatrix::<Complex<f64>>::identity(2, 2) + (h * h.adjoint()) / Complex::new(2.0, 0.0);
                g.determinant().re.log2()
            })
            .sum::<f64>()
            / 500.0;
        assert!((est.mean - oracle).abs() < 1e-9);
        // E[tr HH†] = Xt·Xr.
        let traces: Vec<f64> = draws.eigenvalues().iter().map(|e| e.iter().sum()).collect();
        assert!(MeanEstimate::from_samples(&traces).covers(4.0, 3.0));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let direct = mimo_indep_rate(Point::ORIGIN, Some(0), &cfg, &p, m, &mut rng);
        assert_eq!(direct.mean, est.mean);
    }

    #[test]
    fn mimo_single_antenna_matches_signal_fading() {
        let d = TorusDomain::new(5.0).unwrap();
        let cfg = LinkConfiguration::with_links(d, 0.0, vec![link(0, 0.0, 0.0)]).unwrap();
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = mimo_indep_rate(Point::ORIGIN, Some(0), &cfg, &p, MimoConfig::new(1, 1, 20_000).unwrap(), &mut rng);
        let f = faded_rate(Point::ORIGIN, Some(0), &cfg, &p, FadeDistribution::Exponential, 20_000, &mut rng).unwrap();
        let se = (m.std_error.powi(2) + f.std_error.powi(2)).sqrt();
        assert!((m.mean - f.mean).abs() < 3.0 * se);
    }

    #[test]
    fn link_length_is_enforced() {
        let d = TorusDomain::new(5.0).unwrap();
        let mut cfg = LinkConfiguration::new(d, 1.0).unwrap();
        let bad = Link { id: 0, rx: Point::ORIGIN, tx: Point::new(0.5, 0.0), residual_bits: 1.0, birth_time: 0.0 };
        assert!(cfg.push(bad).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for id in 0..100 {
            let rx = uniform_point(&d, &mut rng);
            let tx = place_transmitter(&d, rx, 1.0, &mut rng);
            cfg.push(Link { id, rx, tx, residual_bits: 1.0, birth_time: 0.0 }).unwrap();
        }
        assert!(cfg.push(Link { id: 5, ..cfg.links()[0] }).is_err());
    }

    fn random_cfg(seed: u64, n: usize, t: f64) -> LinkConfiguration {
        let d = TorusDomain::new(3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = LinkConfiguration::new(d, t).unwrap();
        for id in 0..n as u64 {
            let rx = uniform_point(&d, &mut rng);
            let tx = place_transmitter(&d, rx, t, &mut rng);
            cfg.push(Link { id, rx, tx, residual_bits: 1.0, birth_time: 0.0 }).unwrap();
        }
        cfg
    }

    proptest! {
        #[test]
        fn adding_links_never_raises_rate(seed in 0u64..1000, n in 1usize..30, extra in 1usize..30) {
            let p = params();
            let big = random_cfg(seed, n + extra, 0.5);
            let mut small = big.clone();
            for id in n as u64..(n + extra) as u64 {
                small.remove(id);
            }
            let tagged = big.links()[0];
            let r_small = shannon_rate(tagged.rx, Some(tagged.id), &small, &p);
            let r_big = shannon_rate(tagged.rx, Some(tagged.id), &big, &p);
            prop_assert!(r_big <= r_small);
        }

        #[test]
        fn rate_times_interference_bounded(seed in 0u64..1000, n in 2usize..60) {
            let p = params();
            let cfg = random_cfg(seed, n, 0.7);
            let bound = p.capacity * p.signal(0.7) / LN_2;
            for l in cfg.links() {
                let i = interference(l.rx, Some(l.id), &cfg, &p);
                let r = p.rate(p.signal(0.7), i);
                prop_assert!(r * i <= bound * (1.0 + 1e-12));
            }
        }

        #[test]
        fn interference_is_additive(seed in 0u64..1000, n in 2usize..30, split in 1usize..29) {
            let p = params();
            let all = random_cfg(seed, n, 0.3);
            let split = split.min(n - 1);
            let mut a = all.clone();
            let mut b = all.clone();
            for l in all.links() {
                if (l.id as usize) < split { b.remove(l.id); } else { a.remove(l.id); }
            }
            let tagged = all.links()[0];
            let lhs = interference(tagged.rx, Some(tagged.id), &all, &p);
            let rhs = interference(tagged.rx, Some(tagged.id), &a, &p) + interference(tagged.rx, Some(tagged.id), &b, &p);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0));
        }
    }
}
