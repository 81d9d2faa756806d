//! Cell-count upper-bound chain on an ε-tessellation of the torus, and its
//! fluid limit.
//!
//! Cells are squares of side `ε` centred on the lattice `εZ²`, so every
//! point lies within `ε/√2` of its cell centre. The cell gain
//! `l_ε(i, j) = l(max(0, d(a_i, a_j) − 2ε − T))` therefore dominates the gain
//! between any receiver in cell `i` and any transmitter whose receiver is in
//! cell `j`. Links are counted by receiver cell.

use std::f64::consts::LN_2;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::network_state::ChannelParams;
use crate::rng::{replication_rng, Purpose};
use crate::simulator::{Engine, EngineParams, FileDistribution, GainKernel, PathLossGain, Step, DEFAULT_MAX_LINKS};
use crate::torus::{PathLossModel, Point, TorusDomain};
use crate::{Error, Result};

/// Number of cells per side, checked to be an integer.
fn cells_per_side(domain: &TorusDomain, epsilon: f64) -> Result<usize> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Parameter(format!("cell side must be positive, got {epsilon}")));
    }
    let ratio = domain.side() / epsilon;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
        return Err(Error::Parameter(format!("cell side {epsilon} does not divide the torus side {}", domain.side())));
    }
    Ok(n as usize)
}

fn check_pathloss(pathloss: &PathLossModel) -> Result<()> {
    pathloss.validate()?;
    if !pathloss.is_bounded() {
        return Err(Error::Configuration("the cell chain needs a path loss that is finite at zero".into()));
    }
    Ok(())
}

/// Cell gain for a lattice offset `(dx, dy)` in cells.
fn offset_gain(pathloss: &PathLossModel, n: usize, epsilon: f64, link_length: f64, dx: usize, dy: usize) -> f64 {
    let ox = dx.min(n - dx) as f64 * epsilon;
    let oy = dy.min(n - dy) as f64 * epsilon;
    pathloss.evaluate((ox.hypot(oy) - 2.0 * epsilon - link_length).max(0.0))
}

/// `ε² Σ_j l_ε(a_0, a_j)` without storing the tessellation.
///
/// Decreases to the constant `a` as `ε → 0`.
pub fn tessellated_integral(domain: &TorusDomain, pathloss: &PathLossModel, link_length: f64, epsilon: f64) -> Result<f64> {
    check_pathloss(pathloss)?;
    let n = cells_per_side(domain, epsilon)?;
    let mut total = 0.0;
    for dy in 0..n {
        let mut row = 0.0;
        for dx in 0..n {
            row += offset_gain(pathloss, n, epsilon, link_length, dx, dy);
        }
        total += row;
    }
    Ok(total * epsilon * epsilon)
}

/// An ε-tessellation with its dominating cell gains.
///
/// Gains depend only on the lattice offset between cells, so they are
/// stored once per offset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tessellation {
    domain: TorusDomain,
    pathloss: PathLossModel,
    link_length: f64,
    epsilon: f64,
    n_side: usize,
    offsets: Vec<f64>,
    row_sum: f64,
}

pub fn build_tessellation(
    domain: TorusDomain,
    pathloss: &PathLossModel,
    link_length: f64,
    epsilon: f64,
) -> Result<Tessellation> {
    check_pathloss(pathloss)?;
    if !(link_length >= 0.0 && link_length <= domain.half_side()) {
        return Err(Error::Parameter(format!("link length {link_length} outside [0, Q]")));
    }
    let n = cells_per_side(&domain, epsilon)?;
    let mut offsets = Vec::with_capacity(n * n);
    for dy in 0..n {
        for dx in 0..n {
            offsets.push(offset_gain(pathloss, n, epsilon, link_length, dx, dy));
        }
    }
    let row_sum = offsets.iter().sum();
    Ok(Tessellation { domain, pathloss: pathloss.clone(), link_length, epsilon, n_side: n, offsets, row_sum })
}

impl Tessellation {
    pub fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn link_length(&self) -> f64 {
        self.link_length
    }

    pub fn pathloss(&self) -> &PathLossModel {
        &self.pathloss
    }

    pub fn n_side(&self) -> usize {
        self.n_side
    }

    pub fn n_cells(&self) -> usize {
        self.n_side * self.n_side
    }

    /// Centre of cell `i`; cell 0 is centred at the origin.
    pub fn center(&self, i: usize) -> Point {
        let n = self.n_side;
        let (kx, ky) = (i % n, i / n);
        self.domain.wrap(Point::new(kx as f64 * self.epsilon, ky as f64 * self.epsilon))
    }

    /// Index of the cell whose centre is nearest to `p`.
    pub fn cell_of(&self, p: Point) -> usize {
        let n = self.n_side as i64;
        let kx = (p.x / self.epsilon).round() as i64;
        let ky = (p.y / self.epsilon).round() as i64;
        (ky.rem_euclid(n) * n + kx.rem_euclid(n)) as usize
    }

    /// `l_ε(a_i, a_j)`.
    pub fn gain(&self, i: usize, j: usize) -> f64 {
        let n = self.n_side;
        let dx = (j % n + n - i % n) % n;
        let dy = (j / n + n - i / n) % n;
        self.offsets[dy * n + dx]
    }

    /// `Σ_j l_ε(a_i, a_j)`, summed in offset order so that every row gives
    /// the same floating-point value.
    pub fn row_sum(&self, i: usize) -> f64 {
        let n = self.n_side;
        let (ix, iy) = (i % n, i / n);
        let mut s = 0.0;
        for dy in 0..n {
            for dx in 0..n {
                s += self.gain(i, ((iy + dy) % n) * n + (ix + dx) % n);
            }
        }
        s
    }

    /// `ε² Σ_j l_ε(a_0, a_j)`, the discrete counterpart of `a`.
    pub fn integral(&self) -> f64 {
        self.row_sum * self.epsilon * self.epsilon
    }

    /// Largest arrival intensity for which the chain is positive recurrent:
    /// `C·l(T) / (L·ln 2·ε² Σ_j l_ε(a_j, a_0))`.
    pub fn stability_bound(&self, p: &ChannelParams) -> f64 {
        p.capacity * p.signal(self.link_length) / (p.mean_file * LN_2 * self.integral())
    }

    /// Drain time of the fluid limit from `‖x‖_∞ = 1`:
    /// `(C·l(T)/(L·ln 2·Σ_k l_ε(a_k, a_0)) − λε²)⁻¹`.
    pub fn drain_time(&self, p: &ChannelParams, lambda: f64) -> Result<f64> {
        let drift = self.service_drift(p) - lambda * self.epsilon * self.epsilon;
        if !(drift > 0.0) {
            return Err(Error::Parameter(format!(
                "λ = {lambda} is not below the chain's stability bound {}",
                self.stability_bound(p)
            )));
        }
        Ok(1.0 / drift)
    }

    fn service_drift(&self, p: &ChannelParams) -> f64 {
        p.capacity * p.signal(self.link_length) / (p.mean_file * LN_2 * self.row_sum)
    }
}

/// The tessellated gain as a simulator kernel: the gain at `rx` from a link
/// is the cell gain between `rx`'s cell and that link's receiver cell.
#[derive(Debug, Clone)]
pub struct TessellatedGain {
    tess: Arc<Tessellation>,
    signal: f64,
}

impl TessellatedGain {
    pub fn new(tess: Arc<Tessellation>) -> Self {
        let signal = tess.pathloss.evaluate(tess.link_length);
        Self { tess, signal }
    }
}

impl GainKernel for TessellatedGain {
    fn gain(&self, rx: Point, other_rx: Point, _other_tx: Point) -> f64 {
        self.tess.gain(self.tess.cell_of(rx), self.tess.cell_of(other_rx))
    }

    fn signal(&self) -> f64 {
        self.signal
    }
}

/// Outcome of running the model and its tessellated bound on shared arrivals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    /// Merged event instants processed.
    pub events: usize,
    /// Instants at which some cell held more true links than bound links,
    /// or a true link was alive after its counterpart had left.
    pub violations: usize,
    pub first_violation: Option<f64>,
    pub final_time: f64,
    pub max_true: usize,
    pub max_bound: usize,
}

/// Runs the model and the tessellated bound side by side from an empty
/// torus, with the same arrivals and files, for `max_events` event instants
/// or until `horizon`, checking after each that every cell holds at least
/// as many bound links as true links.
pub fn coupled_dominance(
    tess: Arc<Tessellation>,
    p: &ChannelParams,
    lambda: f64,
    files: FileDistribution,
    seed: u64,
    max_events: usize,
    horizon: f64,
) -> Result<DominanceReport> {
    p.validate()?;
    let params = EngineParams {
        capacity: p.capacity,
        noise: p.noise,
        lambda,
        domain: tess.domain,
        link_length: tess.link_length,
        file_dist: files,
        max_links: DEFAULT_MAX_LINKS,
    };
    let arrivals = || replication_rng(seed, 0, Purpose::Arrivals);
    let truth = PathLossGain::new(tess.domain, tess.pathloss.clone(), tess.link_length);
    let mut a = Engine::new(truth, params.clone(), arrivals())?;
    let mut b = Engine::new(TessellatedGain::new(tess.clone()), params, arrivals())?;
    let n = tess.n_cells();
    let mut report =
        DominanceReport { events: 0, violations: 0, first_violation: None, final_time: 0.0, max_true: 0, max_bound: 0 };
    while report.events < max_events {
        let t = a.next_event_time().min(b.next_event_time());
        if t > horizon {
            break;
        }
        let steps = [a.step(t), b.step(t)];
        if steps.iter().any(|s| matches!(s, Step::Truncated)) {
            return Err(Error::Configuration("link cap reached in the coupled run".into()));
        }
        report.events += 1;
        report.final_time = t;
        let mut cells = vec![0i64; n];
        for r in a.receivers() {
            cells[tess.cell_of(*r)] += 1;
        }
        for r in b.receivers() {
            cells[tess.cell_of(*r)] -= 1;
        }
        let orphan = a.link_ids().iter().any(|id| !b.is_alive(*id));
        if orphan || cells.iter().any(|c| *c > 0) {
            report.violations += 1;
            report.first_violation.get_or_insert(t);
        }
        report.max_true = report.max_true.max(a.len());
        report.max_bound = report.max_bound.max(b.len());
    }
    Ok(report)
}

/// One jump of the cell chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainJump {
    pub time: f64,
    pub cell: usize,
    pub birth: bool,
}

/// A recorded path of the cell chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrajectory {
    pub initial: Vec<u32>,
    pub jumps: Vec<ChainJump>,
    pub horizon: f64,
}

impl ChainTrajectory {
    /// Calls `f(time, counts)` at time 0 and after every jump.
    pub fn replay<F: FnMut(f64, &[u32])>(&self, mut f: F) {
        let mut x = self.initial.clone();
        f(0.0, &x);
        for j in &self.jumps {
            if j.birth {
                x[j.cell] += 1;
            } else {
                x[j.cell] -= 1;
            }
            f(j.time, &x);
        }
    }

    pub fn final_counts(&self) -> Vec<u32> {
        let mut out = Vec::new();
        self.replay(|_, x| out = x.to_vec());
        out
    }

    /// `‖X(t)‖_∞` after every jump, starting at time 0.
    pub fn sup_norm_path(&self) -> Vec<(f64, u32)> {
        let mut out = Vec::with_capacity(self.jumps.len() + 1);
        self.replay(|t, x| out.push((t, x.iter().copied().max().unwrap_or(0))));
        out
    }

    /// Time average of `‖X‖_∞` over `[from, horizon]`.
    pub fn time_average_sup(&self, from: f64) -> f64 {
        let path = self.sup_norm_path();
        let mut acc = 0.0;
        for (k, &(t, v)) in path.iter().enumerate() {
            let end = path.get(k + 1).map_or(self.horizon, |p| p.0);
            let (a, b) = (t.max(from), end.min(self.horizon));
            if b > a {
                acc += v as f64 * (b - a);
            }
        }
        acc / (self.horizon - from)
    }
}

/// Settings for [`simulate_cell_chain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub lambda: f64,
    pub horizon: f64,
    pub seed: u64,
    pub replication: u64,
    /// Initial counts per cell; empty means all zero.
    pub initial: Vec<u32>,
    /// Drop deaths, leaving the arrival process alone.
    pub births_only: bool,
}

impl ChainConfig {
    pub fn new(lambda: f64, horizon: f64, seed: u64) -> Self {
        Self { lambda, horizon, seed, replication: 0, initial: Vec::new(), births_only: false }
    }
}

/// Exact jump simulation of the cell chain.
///
/// Cell `i` gains a link at rate `λε²` and loses one at rate
/// `(C/L)·X_i·log₂(1 + l(T)/(N0 + Σ_j X_j l_ε(i,j) − l_ε(i,i)))`.
pub fn simulate_cell_chain(t: &Tessellation, p: &ChannelParams, cfg: &ChainConfig) -> Result<ChainTrajectory> {
    p.validate()?;
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(Error::Parameter(format!("arrival intensity must be ≥ 0, got {}", cfg.lambda)));
    }
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(Error::Parameter(format!("horizon must be positive, got {}", cfg.horizon)));
    }
    let n = t.n_cells();
    let initial = if cfg.initial.is_empty() { vec![0; n] } else { cfg.initial.clone() };
    if initial.len() != n {
        return Err(Error::Parameter(format!("initial state has {} cells, tessellation has {n}", initial.len())));
    }
    let birth_rate = cfg.lambda * t.epsilon * t.epsilon;
    let signal = p.signal(t.link_length);
    let self_gain = t.gain(0, 0);
    let mut x = initial.clone();
    let mut field: Vec<f64> = (0..n).map(|i| (0..n).map(|j| x[j] as f64 * t.gain(i, j)).sum()).collect();
    let death = |xi: u32, fi: f64| -> f64 {
        if xi == 0 {
            0.0
        } else {
            p.capacity / p.mean_file * xi as f64 * (1.0 + signal / (p.noise + (fi - self_gain).max(0.0))).log2()
        }
    };
    let mut rates: Vec<f64> = if cfg.births_only { vec![0.0; n] } else { (0..n).map(|i| death(x[i], field[i])).collect() };
    let mut rng = replication_rng(cfg.seed, cfg.replication, Purpose::Chain);
    let mut jumps = Vec::new();
    let mut now = 0.0;
    loop {
        let total_death: f64 = rates.iter().sum();
        let total = birth_rate * n as f64 + total_death;
        if total <= 0.0 {
            break;
        }
        now += -(1.0 - rng.random::<f64>()).ln() / total;
        if now > cfg.horizon {
            break;
        }
        let mut u = rng.random::<f64>() * total;
        let (cell, birth) = if u < birth_rate * n as f64 {
            (((u / birth_rate) as usize).min(n - 1), true)
        } else {
            u -= birth_rate * n as f64;
            let mut k = 0;
            while k + 1 < n && (u >= rates[k] || rates[k] == 0.0) {
                u -= rates[k];
                k += 1;
            }
            (k, false)
        };
        if birth {
            x[cell] += 1;
        } else {
            x[cell] -= 1;
        }
        let sign = if birth { 1.0 } else { -1.0 };
        for i in 0..n {
            field[i] += sign * t.gain(i, cell);
            if !cfg.births_only {
                rates[i] = death(x[i], field[i]);
            }
        }
        jumps.push(ChainJump { time: now, cell, birth });
    }
    Ok(ChainTrajectory { initial, jumps, horizon: cfg.horizon })
}

/// A fluid trajectory at the integrator's accepted steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// First time every coordinate is zero, if reached.
    pub hitting_time: Option<f64>,
}

impl FluidTrajectory {
    /// Linear interpolation of the state at time `s`.
    pub fn at(&self, s: f64) -> Vec<f64> {
        let k = self.times.partition_point(|t| *t <= s);
        if k == 0 {
            return self.states[0].clone();
        }
        if k == self.times.len() {
            return self.states[k - 1].clone();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (s - t0) / (t1 - t0);
        self.states[k - 1].iter().zip(&self.states[k]).map(|(a, b)| a + w * (b - a)).collect()
    }
}

fn fluid_field(t: &Tessellation, p: &ChannelParams, lambda: f64, x: &[f64], out: &mut [f64]) {
    let n = x.len();
    if x.iter().all(|v| *v <= 0.0) {
        out.fill(0.0);
        return;
    }
    let birth = lambda * t.epsilon * t.epsilon;
    let k = p.capacity * p.signal(t.link_length) / (p.mean_file * LN_2);
    for i in 0..n {
        let denom: f64 = (0..n).map(|j| x[j] * t.gain(i, j)).sum();
        out[i] = if x[i] > 0.0 && denom > 0.0 { birth - k * x[i] / denom } else { birth };
    }
}

// Dormand–Prince 5(4) tableau for an autonomous field.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Integrates the fluid limit
/// `dx_i/dt = λε² − C·l(T)·x_i / (L·ln 2·Σ_k x_k l_ε(i,k))`,
/// with `x = 0` absorbing.
///
/// Steps that would make a coordinate negative are halved; once the step
/// falls below `1e-9·t_end` those coordinates are set to zero. The state is
/// absorbed when `‖x‖_∞` drops below `step_tol·‖x0‖_∞`, or below a thousand
/// minimal steps' worth of motion; the sup norm drains at a rate bounded away
/// from zero, so the time this skips is of the same order.
pub fn fluid_ode(
    t: &Tessellation,
    p: &ChannelParams,
    lambda: f64,
    x0: &[f64],
    t_end: f64,
    step_tol: f64,
) -> Result<FluidTrajectory> {
    let n = t.n_cells();
    if x0.len() != n || x0.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Parameter(format!("initial state must be {n} finite non-negative values")));
    }
    if !(t_end > 0.0 && step_tol > 0.0) {
        return Err(Error::Parameter("end time and tolerance must be positive".into()));
    }
    let h_min = 1e-9 * t_end;
    let floor = step_tol * x0.iter().cloned().fold(0.0, f64::max);
    let mut x = x0.to_vec();
    let mut now = 0.0;
    let mut h = (t_end * 1e-3).max(h_min);
    let mut out = FluidTrajectory { times: vec![0.0], states: vec![x.clone()], hitting_time: None };
    if x.iter().all(|v| *v == 0.0) {
        out.hitting_time = Some(0.0);
    }
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut steps = 0usize;
    while now < t_end && out.hitting_time.is_none() {
        steps += 1;
        if steps > 10_000_000 {
            return Err(Error::Numerical("fluid integration exceeded the step budget".into()));
        }
        h = h.min(t_end - now);
        fluid_field(t, p, lambda, &x, &mut k[0]);
        for s in 1..7 {
            for i in 0..n {
                stage[i] = x[i] + h * (0..s).map(|r| A[s][r] * k[r][i]).sum::<f64>();
            }
            fluid_field(t, p, lambda, &stage, &mut k[s]);
        }
        let mut next = vec![0.0; n];
        let mut err: f64 = 0.0;
        for i in 0..n {
            let hi: f64 = (0..7).map(|s| B5[s] * k[s][i]).sum();
            let lo: f64 = (0..7).map(|s| B4[s] * k[s][i]).sum();
            next[i] = x[i] + h * hi;
            let scale = step_tol * (1.0 + x[i].abs().max(next[i].abs()));
            err = err.max((h * (hi - lo)).abs() / scale);
        }
        if next.iter().any(|v| *v < 0.0) {
            if h > h_min {
                h *= 0.5;
                continue;
            }
            next.iter_mut().for_each(|v| *v = v.max(0.0));
            let speed = k[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if next.iter().all(|v| *v <= 1e3 * h_min * speed) {
                next.fill(0.0);
            }
        } else if !err.is_finite() {
            return Err(Error::Numerical(format!("non-finite error estimate at t = {now}")));
        } else if err > 1.0 && h > h_min {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            continue;
        }
        now += h;
        x = next;
        if x.iter().all(|v| *v <= floor) {
            x.fill(0.0);
            out.hitting_time = Some(now);
        }
        out.times.push(now);
        out.states.push(x.clone());
        h *= if err > 0.0 { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) } else { 5.0 };
        h = h.max(h_min);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network_state::uniform_point;
    use crate::torus::pathloss_integral_a;

    fn bounded() -> PathLossModel {
        PathLossModel::bounded(1.0, 4.0).unwrap()
    }

    fn params() -> ChannelParams {
        ChannelParams::new(1.0, 1.0, 1.0, bounded()).unwrap()
    }

    #[test]
    fn constant_gain_tessellation() {
        let d = TorusDomain::new(1.5).unwrap();
        let t = build_tessellation(d, &PathLossModel::constant(0.7).unwrap(), 0.0, 0.5).unwrap();
        assert_eq!(t.n_cells(), 36);
        for i in 0..36 {
            for j in 0..36 {
                assert_eq!(t.gain(i, j), 0.7);
            }
        }
    }

    #[test]
    fn rejects_non_dividing_epsilon_and_power_law() {
        let d = TorusDomain::new(1.0).unwrap();
        assert!(matches!(build_tessellation(d, &bounded(), 0.0, 0.3), Err(Error::Parameter(_))));
        assert!(build_tessellation(d, &PathLossModel::power_law(4.0).unwrap(), 0.0, 0.5).is_err());
    }

    #[test]
    fn cell_gains_dominate_point_gains() {
        let d = TorusDomain::new(3.0).unwrap();
        for link_length in [0.0, 0.5] {
            let t = build_tessellation(d, &bounded(), link_length, 1.0).unwrap();
            assert_eq!(t.n_cells(), 36);
            for i in 0..36 {
                assert_eq!(t.cell_of(t.center(i)), i);
                for j in 0..36 {
                    assert!(t.gain(i, j) >= bounded().evaluate(d.dist(t.center(i), t.center(j))));
                    assert_eq!(t.gain(i, j), t.gain(j, i));
                }
            }
            let mut rng = replication_rng(4, 0, Purpose::Probes);
            let kernel = TessellatedGain::new(Arc::new(t.clone()));
            for _ in 0..20_000 {
                let rx = uniform_point(&d, &mut rng);
                let orx = uniform_point(&d, &mut rng);
                let th: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                let otx = d.wrap(Point::new(orx.x + link_length * th.cos(), orx.y + link_length * th.sin()));
                assert!(kernel.gain(rx, orx, otx) >= bounded().evaluate(d.dist(rx, otx)));
            }
        }
    }

    #[test]
    fn row_sums_are_identical() {
        let t = build_tessellation(TorusDomain::new(2.5).unwrap(), &bounded(), 0.0, 0.25).unwrap();
        let r0 = t.row_sum(0);
        assert!((r0 * t.epsilon().powi(2) - t.integral()).abs() < 1e-12);
        for i in 0..t.n_cells() {
            assert_eq!(t.row_sum(i), r0);
            let naive: f64 = (0..t.n_cells()).map(|j| t.gain(i, j)).sum();
            assert!((naive - r0).abs() < 1e-12 * r0);
            let col: f64 = (0..t.n_cells()).map(|j| t.gain(j, i)).sum();
            assert!((col - r0).abs() < 1e-12 * r0);
        }
    }

    #[test]
    fn refinement_decreases_towards_a() {
        let d = TorusDomain::new(2.0).unwrap();
        let a = pathloss_integral_a(&bounded(), &d, 1e-12).unwrap().finite().unwrap();
        let mut prev = f64::INFINITY;
        for n in [8usize, 16, 32, 64, 128, 256, 512, 1024] {
            let v = tessellated_integral(&d, &bounded(), 0.0, 4.0 / n as f64).unwrap();
            assert!(v >= a && v <= prev);
            prev = v;
        }
        assert!((prev - a) / a < 0.02, "{prev} vs {a}");
        let t = build_tessellation(d, &bounded(), 0.0, 0.125).unwrap();
        assert!((t.integral() - tessellated_integral(&d, &bounded(), 0.0, 0.125).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn lone_customer_leaves_at_unit_rate() {
        let t = build_tessellation(TorusDomain::new(1.0).unwrap(), &bounded(), 0.0, 1.0).unwrap();
        let reps = 10_000;
        let mut total = 0.0;
        for rep in 0..reps {
            let mut cfg = ChainConfig::new(0.0, 1e9, 17);
            cfg.replication = rep;
            cfg.initial = vec![1, 0, 0, 0];
            let tr = simulate_cell_chain(&t, &params(), &cfg).unwrap();
            assert_eq!(tr.jumps.len(), 1);
            total += tr.jumps[0].time;
        }
        let m = total / reps as f64;
        assert!((m - 1.0).abs() < 0.03, "{m}");
    }

    #[test]
    fn births_only_matches_arrivals() {
        let t = build_tessellation(TorusDomain::new(1.0).unwrap(), &bounded(), 0.0, 0.5).unwrap();
        let mut cfg = ChainConfig::new(3.0, 50.0, 2);
        cfg.births_only = true;
        cfg.initial = vec![1; 16];
        let tr = simulate_cell_chain(&t, &params(), &cfg).unwrap();
        assert!(tr.jumps.iter().all(|j| j.birth));
        let expected = 3.0 * 0.25 * 16.0 * 50.0;
        let got = tr.jumps.len() as f64;
        assert!((got - expected).abs() < 4.0 * expected.sqrt());
        let fin = tr.final_counts();
        assert_eq!(fin.iter().sum::<u32>() as usize, 16 + tr.jumps.len());
    }

    #[test]
    fn chain_is_deterministic_given_seed() {
        let t = build_tessellation(TorusDomain::new(1.0).unwrap(), &bounded(), 0.0, 0.5).unwrap();
        let cfg = ChainConfig::new(0.5, 100.0, 8);
        let a = simulate_cell_chain(&t, &params(), &cfg).unwrap();
        assert_eq!(a, simulate_cell_chain(&t, &params(), &cfg).unwrap());
        assert!(!a.jumps.is_empty());
    }

    #[test]
    fn fluid_zero_stays_zero_and_symmetry_is_kept() {
        let t = build_tessellation(TorusDomain::new(1.5).unwrap(), &bounded(), 0.0, 1.0).unwrap();
        let p = params();
        let z = fluid_ode(&t, &p, 0.3, &[0.0; 9], 5.0, 1e-8).unwrap();
        assert_eq!(z.hitting_time, Some(0.0));
        assert!(z.states.iter().all(|s| s.iter().all(|v| *v == 0.0)));
        let lambda = 0.5 * t.stability_bound(&p);
        let sym = fluid_ode(&t, &p, lambda, &[2.0; 9], 3.0, 1e-8).unwrap();
        for s in &sym.states {
            assert!(s.iter().all(|v| (v - s[0]).abs() < 1e-9));
        }
    }

    #[test]
    fn fluid_drains_by_tau() {
        let t = build_tessellation(TorusDomain::new(1.5).unwrap(), &bounded(), 0.0, 1.0).unwrap();
        let p = params();
        let lambda = 0.8 * t.stability_bound(&p);
        let tau = t.drain_time(&p, lambda).unwrap();
        let x0 = [1.0, 0.2, 0.0, 0.7, 0.4, 0.9, 0.1, 0.5, 0.3];
        let tr = fluid_ode(&t, &p, lambda, &x0, 3.0 * tau, 1e-9).unwrap();
        let hit = tr.hitting_time.expect("fluid should drain");
        assert!(hit <= tau * (1.0 + 1e-6), "{hit} > {tau}");
        let sup: Vec<f64> = tr.states.iter().map(|s| s.iter().cloned().fold(0.0, f64::max)).collect();
        for k in (1..tr.times.len()).filter(|k| sup[*k] > 1e-4) {
            let slope = (sup[k] - sup[k - 1]) / (tr.times[k] - tr.times[k - 1]);
            assert!(slope <= -1.0 / tau + 1e-5, "{slope}");
        }
        assert!(t.drain_time(&p, 1.01 * t.stability_bound(&p)).is_err());
    }

    #[test]
    fn bound_dominates_model_pathwise() {
        let d = TorusDomain::new(1.0).unwrap();
        let p = params();
        for link_length in [0.0, 0.3] {
            let t = Arc::new(build_tessellation(d, &bounded(), link_length, 1.0).unwrap());
            let lambda = 0.6 * t.stability_bound(&p);
            let files = FileDistribution::exponential(1.0).unwrap();
            let r = coupled_dominance(t, &p, lambda, files, 3, 4000, f64::INFINITY).unwrap();
            assert_eq!(r.events, 4000);
            assert_eq!(r.violations, 0, "{r:?}");
            assert!(r.max_bound >= r.max_true);
        }
    }
}
