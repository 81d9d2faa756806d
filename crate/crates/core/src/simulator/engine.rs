//! Residual-workload event loop.
//!
//! Between two events every rate is constant, so each link's completion
//! time is `now + residual/rate` and the next arrival is read off a
//! dedicated stream. The earliest candidate fires, all residuals are
//! decremented by `elapsed·rate`, and interference is patched in O(N).

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::config::{EventKind, EventRecord, FileDistribution};
use crate::network_state::{place_transmitter, uniform_point, Link, LinkConfiguration, LinkId};
use crate::rng::SimRng;
use crate::torus::{PathLossModel, Point, TorusDomain};
use crate::{Error, Result};

/// Received power from another link's transmitter.
pub trait GainKernel {
    /// Gain at `rx` from the link whose receiver is `other_rx` and whose
    /// transmitter is `other_tx`.
    fn gain(&self, rx: Point, other_rx: Point, other_tx: Point) -> f64;
    /// Power of a link's own signal at its receiver.
    fn signal(&self) -> f64;
}

/// The model's path loss on the torus.
#[derive(Debug, Clone)]
pub struct PathLossGain {
    domain: TorusDomain,
    pathloss: PathLossModel,
    signal: f64,
}

impl PathLossGain {
    pub fn new(domain: TorusDomain, pathloss: PathLossModel, link_length: f64) -> Self {
        let signal = pathloss.evaluate(link_length);
        Self { domain, pathloss, signal }
    }
}

impl GainKernel for PathLossGain {
    #[inline]
    fn gain(&self, rx: Point, _other_rx: Point, other_tx: Point) -> f64 {
        self.pathloss.evaluate_sq(self.domain.dist_sq(rx, other_tx))
    }

    fn signal(&self) -> f64 {
        self.signal
    }
}

#[derive(Debug, Clone)]
pub struct EngineParams {
    pub capacity: f64,
    pub noise: f64,
    /// Arrivals per unit area and time.
    pub lambda: f64,
    pub domain: TorusDomain,
    pub link_length: f64,
    pub file_dist: FileDistribution,
    pub max_links: usize,
}

/// What a call to [`Engine::step`] did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Birth(EventRecord),
    /// A departure, with the link's birth time.
    Death(EventRecord, f64),
    /// No event before the limit; the clock now equals the limit.
    Reached,
    /// An arrival was refused because the link cap was hit.
    Truncated,
}

#[derive(Debug, Clone)]
pub struct Engine<K: GainKernel> {
    kernel: K,
    params: EngineParams,
    arrivals: SimRng,
    arrival_gap: Option<Exp<f64>>,
    now: f64,
    next_arrival: f64,
    next_id: LinkId,
    ids: Vec<LinkId>,
    rx: Vec<Point>,
    tx: Vec<Point>,
    residual: Vec<f64>,
    file: Vec<f64>,
    served: Vec<f64>,
    birth: Vec<f64>,
    interference: Vec<f64>,
    rate: Vec<f64>,
    total_rate: f64,
    events_since_refresh: usize,
    births: u64,
    deaths: u64,
    max_workload_error: f64,
    truncated: bool,
}

impl<K: GainKernel> Engine<K> {
    /// Starts an empty network at time 0. All arrival randomness (gaps,
    /// positions, transmitter angles, files) is drawn from `arrivals`.
    pub fn new(kernel: K, params: EngineParams, arrivals: SimRng) -> Result<Self> {
        params.file_dist.validate()?;
        if !(params.lambda >= 0.0 && params.lambda.is_finite()) {
            return Err(Error::Parameter(format!("arrival intensity must be ≥ 0, got {}", params.lambda)));
        }
        let total = params.lambda * params.domain.area();
        let arrival_gap = if total > 0.0 {
            Some(Exp::new(total).map_err(|e| Error::Parameter(format!("arrival rate {total}: {e}")))?)
        } else {
            None
        };
        let mut engine = Self {
            kernel,
            params,
            arrivals,
            arrival_gap,
            now: 0.0,
            next_arrival: f64::INFINITY,
            next_id: 0,
            ids: Vec::new(),
            rx: Vec::new(),
            tx: Vec::new(),
            residual: Vec::new(),
            file: Vec::new(),
            served: Vec::new(),
            birth: Vec::new(),
            interference: Vec::new(),
            rate: Vec::new(),
            total_rate: 0.0,
            events_since_refresh: 0,
            births: 0,
            deaths: 0,
            max_workload_error: 0.0,
            truncated: false,
        };
        engine.schedule_arrival();
        Ok(engine)
    }

    fn schedule_arrival(&mut self) {
        self.next_arrival = match &self.arrival_gap {
            Some(exp) => self.now + exp.sample(&mut self.arrivals),
            None => f64::INFINITY,
        };
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    /// Sum of the current rates of all live links.
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    pub fn births(&self) -> u64 {
        self.births
    }

    pub fn deaths(&self) -> u64 {
        self.deaths
    }

    pub fn max_workload_error(&self) -> f64 {
        self.max_workload_error
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn is_alive(&self, id: LinkId) -> bool {
        self.ids.contains(&id)
    }

    pub fn link_ids(&self) -> &[LinkId] {
        &self.ids
    }

    pub fn receivers(&self) -> &[Point] {
        &self.rx
    }

    pub fn transmitters(&self) -> &[Point] {
        &self.tx
    }

    pub fn rates(&self) -> &[f64] {
        &self.rate
    }

    pub fn interference(&self) -> &[f64] {
        &self.interference
    }

    /// Current live links as a configuration.
    pub fn snapshot(&self) -> Result<LinkConfiguration> {
        let links = (0..self.ids.len())
            .map(|i| Link {
                id: self.ids[i],
                rx: self.rx[i],
                tx: self.tx[i],
                residual_bits: self.residual[i],
                birth_time: self.birth[i],
            })
            .collect();
        LinkConfiguration::with_links(self.params.domain, self.params.link_length, links)
    }

    #[inline]
    fn rate_of(&self, interference: f64) -> f64 {
        self.params.capacity * (self.kernel.signal() / (self.params.noise + interference)).ln_1p() / LN_2
    }

    fn refresh_rates(&mut self) {
        let mut total = 0.0;
        for i in 0..self.ids.len() {
            let r = self.rate_of(self.interference[i]);
            self.rate[i] = r;
            total += r;
        }
        self.total_rate = total;
    }

    /// Recomputes every interference value from scratch.
    fn refresh_interference(&mut self) {
        let n = self.ids.len();
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                if j != i {
                    s += self.kernel.gain(self.rx[i], self.rx[j], self.tx[j]);
                }
            }
            self.interference[i] = s;
        }
        self.events_since_refresh = 0;
    }

    fn after_event(&mut self) {
        self.events_since_refresh += 1;
        if self.events_since_refresh >= self.ids.len().max(256) {
            self.refresh_interference();
        }
        self.refresh_rates();
    }

    fn insert(&mut self, rx: Point, tx: Point, file: f64) -> LinkId {
        let id = self.next_id;
        self.next_id += 1;
        let mut own = 0.0;
        for j in 0..self.ids.len() {
            self.interference[j] += self.kernel.gain(self.rx[j], rx, tx);
            own += self.kernel.gain(rx, self.rx[j], self.tx[j]);
        }
        self.ids.push(id);
        self.rx.push(rx);
        self.tx.push(tx);
        self.residual.push(file);
        self.file.push(file);
        self.served.push(0.0);
        self.birth.push(self.now);
        self.interference.push(own);
        self.rate.push(0.0);
        self.births += 1;
        id
    }

    /// Adds a link at the current time outside the arrival stream.
    pub fn inject(&mut self, rx: Point, tx: Point, file: f64) -> Result<LinkId> {
        let d = &self.params.domain;
        if !d.contains(rx) || !d.contains(tx) {
            return Err(Error::Domain("injected link lies outside the torus".into()));
        }
        if (d.dist(rx, tx) - self.params.link_length).abs() > 1e-9 * self.params.link_length.max(1.0) {
            return Err(Error::Invariant("injected link does not have the configured length".into()));
        }
        if !(file > 0.0 && file.is_finite()) {
            return Err(Error::Parameter(format!("file size must be positive, got {file}")));
        }
        let id = self.insert(rx, tx, file);
        self.after_event();
        Ok(id)
    }

    /// Adds a batch of links at the current time with one rate refresh.
    pub fn inject_many(&mut self, links: &[(Point, Point, f64)]) -> Result<Vec<LinkId>> {
        let mut ids = Vec::with_capacity(links.len());
        for &(rx, tx, file) in links {
            if !(file > 0.0 && file.is_finite()) {
                return Err(Error::Parameter(format!("file size must be positive, got {file}")));
            }
            ids.push(self.insert(rx, tx, file));
        }
        self.refresh_interference();
        self.refresh_rates();
        Ok(ids)
    }

    /// Earliest completion as `(index, time)`.
    fn next_death(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.ids.len() {
            let t = self.residual[i] / self.rate[i];
            if best.is_none_or(|(_, b)| t < b) {
                best = Some((i, t));
            }
        }
        best.map(|(i, dt)| (i, self.now + dt))
    }

    fn advance_clock(&mut self, t: f64) {
        let dt = t - self.now;
        if dt > 0.0 {
            for i in 0..self.ids.len() {
                let w = self.rate[i] * dt;
                self.residual[i] = (self.residual[i] - w).max(0.0);
                self.served[i] += w;
            }
        }
        self.now = t;
    }

    /// Time of the next event (arrival or completion), `∞` if none.
    pub fn next_event_time(&self) -> f64 {
        let death = self.next_death().map_or(f64::INFINITY, |(_, t)| t);
        death.min(self.next_arrival)
    }

    /// Processes the next event if it happens no later than `limit`;
    /// otherwise moves the clock to `limit`.
    pub fn step(&mut self, limit: f64) -> Step {
        let death = self.next_death();
        let death_time = death.map_or(f64::INFINITY, |(_, t)| t);
        if self.next_arrival.min(death_time) > limit {
            self.advance_clock(limit);
            return Step::Reached;
        }
        if self.next_arrival <= death_time {
            if self.ids.len() >= self.params.max_links {
                self.advance_clock(self.next_arrival);
                self.truncated = true;
                return Step::Truncated;
            }
            self.advance_clock(self.next_arrival);
            let rng = &mut self.arrivals;
            let rx = uniform_point(&self.params.domain, rng);
            // Drawn even for T = 0 so that runs with different link lengths
            // consume the stream identically.
            let angle_draw: f64 = rng.random();
            let tx = if self.params.link_length > 0.0 {
                let th = angle_draw * std::f64::consts::TAU;
                let t = self.params.link_length;
                self.params.domain.wrap(Point::new(rx.x + t * th.cos(), rx.y + t * th.sin()))
            } else {
                rx
            };
            let file = self.params.file_dist.sample(rng);
            let id = self.insert(rx, tx, file);
            self.schedule_arrival();
            self.after_event();
            Step::Birth(EventRecord { kind: EventKind::Birth, time: self.now, link_id: id, rx, tx })
        } else {
            let (i, t) = death.expect("finite death time implies a live link");
            self.advance_clock(t);
            let err = (self.served[i] - self.file[i]).abs() / self.file[i];
            self.max_workload_error = self.max_workload_error.max(err);
            let record = EventRecord { kind: EventKind::Death, time: t, link_id: self.ids[i], rx: self.rx[i], tx: self.tx[i] };
            let birth = self.birth[i];
            self.remove(i);
            self.deaths += 1;
            self.after_event();
            Step::Death(record, birth)
        }
    }

    fn remove(&mut self, i: usize) {
        let (rx, tx) = (self.rx[i], self.tx[i]);
        self.ids.swap_remove(i);
        self.rx.swap_remove(i);
        self.tx.swap_remove(i);
        self.residual.swap_remove(i);
        self.file.swap_remove(i);
        self.served.swap_remove(i);
        self.birth.swap_remove(i);
        self.interference.swap_remove(i);
        self.rate.swap_remove(i);
        for j in 0..self.ids.len() {
            let v = self.interference[j] - self.kernel.gain(self.rx[j], rx, tx);
            self.interference[j] = v.max(0.0);
        }
    }

    /// Runs events until the clock reaches `t`, calling `on_step` after each.
    pub fn advance_to<F: FnMut(&Self, Step)>(&mut self, t: f64, mut on_step: F) -> Step {
        loop {
            let s = self.step(t);
            on_step(self, s);
            match s {
                Step::Reached | Step::Truncated => return s,
                _ => {}
            }
        }
    }
}

/// Draws an initial Poisson configuration of links with fresh files.
pub(crate) fn poisson_links<R: Rng + ?Sized>(
    density: f64,
    domain: &TorusDomain,
    link_length: f64,
    files: &FileDistribution,
    rng: &mut R,
) -> Result<Vec<(Point, Point, f64)>> {
    let mean = density * domain.area();
    let n = if mean > 0.0 {
        let pois = rand_distr::Poisson::new(mean).map_err(|e| Error::Parameter(format!("initial density: {e}")))?;
        pois.sample(rng) as usize
    } else {
        0
    };
    Ok((0..n)
        .map(|_| {
            let rx = uniform_point(domain, rng);
            let tx = place_transmitter(domain, rx, link_length, rng);
            (rx, tx, files.sample(rng))
        })
        .collect())
}
