//! Stability threshold and steady-state density predictions.
//!
//! All spatial integrals are taken over the torus, not the plane. Every
//! formula carries the rate prefactor `C`; with `C = 1` they reduce to the
//! usual unit-bandwidth expressions.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::network_state::ChannelParams;
use crate::numerics::{bisect, integrate_to_infinity, integrate_with_breaks, QuadOptions};
use crate::torus::{pathloss_integral_a, IntegralA, Point, TorusDomain};
use crate::{Error, Result};

/// Critical arrival intensity together with the constant it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalLambda {
    pub lambda_c: f64,
    pub a: IntegralA,
    /// Set when `a` diverges: no arrival intensity `λ > 0` is stable.
    pub always_unstable: bool,
}

/// `λ_c = C·l(T)/(ln 2 · L · a)`.
pub fn critical_lambda(p: &ChannelParams, link_length: f64, a: IntegralA) -> Result<CriticalLambda> {
    critical_from_signal(p, p.signal(link_length), a)
}

fn critical_from_signal(p: &ChannelParams, signal: f64, a: IntegralA) -> Result<CriticalLambda> {
    match a {
        IntegralA::Divergent => Ok(CriticalLambda { lambda_c: 0.0, a, always_unstable: true }),
        IntegralA::Finite(v) if v > 0.0 && v.is_finite() => Ok(CriticalLambda {
            lambda_c: p.capacity * signal / (LN_2 * p.mean_file * v),
            a,
            always_unstable: false,
        }),
        IntegralA::Finite(v) => Err(Error::Parameter(format!("the constant a must be positive, got {v}"))),
    }
}

/// [`critical_lambda`] with `a` computed on `domain`.
pub fn critical_lambda_for(p: &ChannelParams, link_length: f64, domain: &TorusDomain) -> Result<CriticalLambda> {
    let a = pathloss_integral_a(&p.pathloss, domain, 1e-10)?;
    critical_lambda(p, link_length, a)
}

/// `C·X_r/(L·a·ln 2)`: the multi-antenna threshold with the signal power
/// normalized to one.
pub fn mimo_critical_lambda(p: &ChannelParams, a: IntegralA, rx_antennas: usize) -> Result<CriticalLambda> {
    if rx_antennas == 0 {
        return Err(Error::Parameter("need at least one receive antenna".into()));
    }
    let mut c = critical_from_signal(p, 1.0, a)?;
    c.lambda_c *= rx_antennas as f64;
    Ok(c)
}

/// Interference-free density `λL/(C·log₂(1 + l(T)/N0))`.
pub fn light_traffic_beta(lambda: f64, p: &ChannelParams, link_length: f64) -> f64 {
    lambda * p.mean_file / p.solo_rate(link_length)
}

/// `E[ln(1 + X/(Y + a))]` for deterministic `X = signal`, constant
/// `a = noise_const` and `Y` given by its Laplace transform.
pub fn lemma1_log_moment<F: Fn(f64) -> f64>(signal: f64, noise_const: f64, laplace: F, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    if signal == 0.0 {
        return Ok(0.0);
    }
    let f = |z: f64| {
        let kernel = if z == 0.0 { signal } else { -(-z * signal).exp_m1() / z };
        (-noise_const * z).exp() * kernel * laplace(z)
    };
    let scale = 1.0 / (noise_const + signal).max(f64::MIN_POSITIVE);
    semi_infinite(f, scale, QuadOptions::rel(tol))
}

/// `∫₀^∞ f` with extra resolution around the natural scale `z*`.
fn semi_infinite<F: Fn(f64) -> f64>(f: F, z_star: f64, opts: QuadOptions) -> Result<f64> {
    let z_max = 1e3 * z_star;
    let breaks = [1e-3 * z_star, 1e-2 * z_star, 0.1 * z_star, z_star, 10.0 * z_star, 100.0 * z_star];
    let head = integrate_with_breaks(&f, 0.0, z_max, &breaks, opts)?;
    let tail = integrate_to_infinity(&f, z_max, QuadOptions { abs_tol: opts.rel_tol * head.value.abs(), ..opts })?;
    Ok(head.value + tail.value)
}

/// How a fixed-point search ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Converged,
    /// `λ ≥ λ_c`: the density is infinite.
    Diverged,
    NoSolution,
}

impl SolverStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::Diverged => "diverged",
            Self::NoSolution => "no_solution",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicSolution {
    pub beta: f64,
    /// Relative defect `|RHS − λL|/λL` (Poisson) or `|RHS(I) − I|/I`
    /// (second order) at the returned root.
    pub residual: f64,
    pub status: SolverStatus,
    /// Second-order heuristic only: the interference fixed point `I_s`.
    pub interference: Option<f64>,
    /// Further sign changes seen below the reported root.
    pub other_roots: Vec<f64>,
}

impl HeuristicSolution {
    fn failed(status: SolverStatus) -> Self {
        let beta = if status == SolverStatus::Diverged { f64::INFINITY } else { f64::NAN };
        Self { beta, residual: f64::NAN, status, interference: None, other_roots: Vec::new() }
    }
}

/// Right-hand side of the Poisson fixed point: `β·E[R]` when the links form
/// a Poisson process of density `β`.
#[derive(Debug, Clone)]
pub struct PoissonRhs<'a> {
    p: &'a ChannelParams,
    domain: &'a TorusDomain,
    signal: f64,
    a: f64,
    tol: f64,
}

impl<'a> PoissonRhs<'a> {
    pub fn new(p: &'a ChannelParams, link_length: f64, domain: &'a TorusDomain, tol: f64) -> Result<Self> {
        let a = pathloss_integral_a(&p.pathloss, domain, tol.min(1e-8))?
            .finite()
            .ok_or_else(|| Error::Configuration("the constant a diverges; no density prediction exists".into()))?;
        Ok(Self { p, domain, signal: p.signal(link_length), a, tol })
    }

    /// `G(z) = ∫_S (1 − e^{−z·l(‖x‖)}) dx`.
    fn shot_exponent(&self, z: f64) -> Result<f64> {
        let pl = &self.p.pathloss;
        self.domain.integrate_radial(|r| -(-z * pl.evaluate(r)).exp_m1(), &pl.breakpoints(), QuadOptions::rel(self.tol * 0.1))
    }

    pub fn eval(&self, beta: f64) -> Result<f64> {
        if beta == 0.0 {
            return Ok(0.0);
        }
        let failure = std::cell::RefCell::new(None);
        let f = |z: f64| {
            if z == 0.0 {
                return self.signal;
            }
            match self.shot_exponent(z) {
                Ok(g) => (-self.p.noise * z - beta * g).exp() * (-(-z * self.signal).exp_m1()) / z,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        };
        let z_star = 1.0 / (self.p.noise + beta * self.a + self.signal);
        let v = semi_infinite(f, z_star, QuadOptions::rel(self.tol));
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(self.p.capacity * beta * v? / LN_2)
    }
}

/// Largest density `β_f` whose Poisson-process rate balances `λL`.
///
/// Scans a geometric grid downward from `10³·β_l` (widened if the RHS is
/// still below `λL` there) for the first sign change, then bisects. Sign
/// changes further down are reported in `other_roots`.
pub fn poisson_heuristic_beta(
    lambda: f64,
    p: &ChannelParams,
    link_length: f64,
    domain: &TorusDomain,
    tol: f64,
) -> Result<HeuristicSolution> {
    check_lambda(lambda, tol)?;
    let crit = critical_lambda_for(p, link_length, domain)?;
    if crit.always_unstable || lambda >= crit.lambda_c {
        return Ok(HeuristicSolution::failed(SolverStatus::Diverged));
    }
    let rhs = PoissonRhs::new(p, link_length, domain, tol)?;
    let target = lambda * p.mean_file;
    let h = |b: f64| rhs.eval(b).map(|v| v - target);

    let beta_l = light_traffic_beta(lambda, p, link_length);
    let mut upper = 1e3 * beta_l;
    let mut h_upper = h(upper)?;
    let mut widen = 0;
    while h_upper < 0.0 {
        widen += 1;
        if widen > 8 {
            return Ok(HeuristicSolution::failed(SolverStatus::NoSolution));
        }
        upper *= 10.0;
        h_upper = h(upper)?;
    }
    const RATIO: f64 = 1.15;
    let floor = 1e-3 * beta_l;
    let mut roots = Vec::new();
    let (mut hi, mut h_hi) = (upper, h_upper);
    while hi > floor {
        let lo = hi / RATIO;
        let h_lo = h(lo)?;
        if h_lo.signum() != h_hi.signum() {
            roots.push(bisect(h, lo, hi, 1e-12)?);
        }
        hi = lo;
        h_hi = h_lo;
    }
    let Some(&beta) = roots.first() else {
        return Ok(HeuristicSolution::failed(SolverStatus::NoSolution));
    };
    let residual = (rhs.eval(beta)? - target).abs() / target;
    let status = if residual < tol.max(1e-6) { SolverStatus::Converged } else { SolverStatus::NoSolution };
    Ok(HeuristicSolution { beta, residual, status, interference: None, other_roots: roots[1..].to_vec() })
}

/// Right-hand side of the second-order interference fixed point.
pub fn second_order_rhs(
    interference: f64,
    lambda: f64,
    p: &ChannelParams,
    link_length: f64,
    domain: &TorusDomain,
    tol: f64,
) -> Result<f64> {
    let s = p.signal(link_length);
    let pl = &p.pathloss;
    let v = domain.integrate_radial(
        |r| {
            let l = pl.evaluate(r);
            l / p.rate(s, interference + l)
        },
        &pl.breakpoints(),
        QuadOptions::rel(tol),
    )?;
    Ok(lambda * p.mean_file * v)
}

/// Second-order density `β_s` built on the smallest interference fixed point.
pub fn second_order_beta(
    lambda: f64,
    p: &ChannelParams,
    link_length: f64,
    domain: &TorusDomain,
    tol: f64,
) -> Result<HeuristicSolution> {
    check_lambda(lambda, tol)?;
    if p.pathloss.integral_diverges() {
        return Ok(HeuristicSolution::failed(SolverStatus::NoSolution));
    }
    let g = |i: f64| second_order_rhs(i, lambda, p, link_length, domain, tol * 0.1).map(|v| v - i);
    // The RHS is increasing in I, so every root lies above RHS(0).
    let start = g(0.0)?;
    if start <= 0.0 {
        return Ok(solution_from_interference(0.0, lambda, p, link_length, 0.0));
    }
    const RATIO: f64 = 1.1;
    let (mut lo, mut g_lo) = (start, g(start)?);
    if g_lo == 0.0 {
        return Ok(solution_from_interference(lo, lambda, p, link_length, 0.0));
    }
    for _ in 0..400 {
        let hi = lo * RATIO;
        let g_hi = g(hi)?;
        if g_hi <= 0.0 {
            let i_s = bisect(g, lo, hi, 1e-12)?;
            let residual = g(i_s)?.abs() / i_s;
            return Ok(solution_from_interference(i_s, lambda, p, link_length, residual));
        }
        lo = hi;
        g_lo = g_hi;
    }
    let _ = g_lo;
    Ok(HeuristicSolution::failed(SolverStatus::NoSolution))
}

fn solution_from_interference(i_s: f64, lambda: f64, p: &ChannelParams, link_length: f64, residual: f64) -> HeuristicSolution {
    let beta = lambda * p.mean_file / p.rate(p.signal(link_length), i_s);
    HeuristicSolution { beta, residual, status: SolverStatus::Converged, interference: Some(i_s), other_roots: Vec::new() }
}

fn check_lambda(lambda: f64, tol: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("arrival intensity must be positive, got {lambda}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// Cavity approximation of the pair density of receivers at `x` and `y`.
#[allow(clippy::too_many_arguments)]
pub fn second_moment_approx(
    x: Point,
    y: Point,
    domain: &TorusDomain,
    beta: f64,
    i_s: f64,
    lambda: f64,
    p: &ChannelParams,
    link_length: f64,
) -> f64 {
    let l = p.pathloss.evaluate(domain.dist(x, y));
    beta * lambda * p.mean_file / p.rate(p.signal(link_length), i_s + l)
}

/// One row of a heuristic sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub beta_f: f64,
    pub beta_s: f64,
    pub beta_l: f64,
    pub lambda_c: f64,
    pub status_f: SolverStatus,
    pub status_s: SolverStatus,
    pub defect_f: f64,
    pub defect_s: f64,
}

/// Evaluates all density predictions on a grid of arrival intensities.
pub fn heuristic_sweep(
    lambdas: &[f64],
    p: &ChannelParams,
    link_length: f64,
    domain: &TorusDomain,
    tol: f64,
) -> Result<Vec<SweepRow>> {
    let lambda_c = critical_lambda_for(p, link_length, domain)?.lambda_c;
    lambdas
        .par_iter()
        .map(|&lambda| {
            let f = poisson_heuristic_beta(lambda, p, link_length, domain, tol)?;
            let s = second_order_beta(lambda, p, link_length, domain, tol)?;
            Ok(SweepRow {
                lambda,
                beta_f: f.beta,
                beta_s: s.beta,
                beta_l: light_traffic_beta(lambda, p, link_length),
                lambda_c,
                status_f: f.status,
                status_s: s.status,
                defect_f: f.residual,
                defect_s: s.residual,
            })
        })
        .collect()
}
