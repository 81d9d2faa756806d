//! Square torus geometry and distance-dependent path loss.

use std::f64::consts::{FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::numerics::{integrate_with_breaks, QuadOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// The square `[-Q, Q]²` with opposite edges identified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusDomain {
    half_side: f64,
}

impl TorusDomain {
    pub fn new(half_side: f64) -> Result<Self> {
        if !(half_side.is_finite() && half_side > 0.0) {
            return Err(Error::Parameter(format!("torus half-side must be positive and finite, got {half_side}")));
        }
        Ok(Self { half_side })
    }

    pub fn half_side(&self) -> f64 {
        self.half_side
    }

    pub fn side(&self) -> f64 {
        2.0 * self.half_side
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_side * self.half_side
    }

    /// Largest possible torus distance, `Q·√2`.
    pub fn diameter(&self) -> f64 {
        self.half_side * std::f64::consts::SQRT_2
    }

    pub fn contains(&self, p: Point) -> bool {
        let q = self.half_side;
        (-q..=q).contains(&p.x) && (-q..=q).contains(&p.y)
    }

    fn wrap_coord(&self, v: f64) -> f64 {
        let q = self.half_side;
        let s = 2.0 * q;
        let mut w = (v + q).rem_euclid(s) - q;
        // rem_euclid can round up to exactly `s`.
        if w >= q {
            w -= s;
        }
        w
    }

    /// Maps an arbitrary point of the plane onto `[-Q, Q)²`.
    pub fn wrap(&self, p: Point) -> Point {
        Point::new(self.wrap_coord(p.x), self.wrap_coord(p.y))
    }

    /// Minimum-image displacement `y - x` for points inside the domain.
    #[inline]
    pub fn displacement(&self, x: Point, y: Point) -> (f64, f64) {
        let q = self.half_side;
        let s = 2.0 * q;
        let mut dx = y.x - x.x;
        let mut dy = y.y - x.y;
        if dx > q {
            dx -= s;
        } else if dx < -q {
            dx += s;
        }
        if dy > q {
            dy -= s;
        } else if dy < -q {
            dy += s;
        }
        (dx, dy)
    }

    /// Torus distance for points already inside the domain (unchecked).
    #[inline]
    pub fn dist(&self, x: Point, y: Point) -> f64 {
        let (dx, dy) = self.displacement(x, y);
        dx.hypot(dy)
    }

    #[inline]
    pub fn dist_sq(&self, x: Point, y: Point) -> f64 {
        let (dx, dy) = self.displacement(x, y);
        dx * dx + dy * dy
    }

    /// Torus distance, rejecting points outside `[-Q, Q]²`.
    pub fn torus_distance(&self, x: Point, y: Point) -> Result<f64> {
        for p in [x, y] {
            if !self.contains(p) {
                return Err(Error::Domain(format!(
                    "point ({}, {}) lies outside [-{q}, {q}]²",
                    p.x,
                    p.y,
                    q = self.half_side
                )));
            }
        }
        Ok(self.dist(x, y))
    }

    /// Length of the circle of radius `r` around the origin that lies inside
    /// the fundamental square. Integrating a radial function against this
    /// weight over `[0, Q√2]` equals its integral over the torus.
    pub fn arc_weight(&self, r: f64) -> f64 {
        let q = self.half_side;
        if r <= 0.0 {
            0.0
        } else if r <= q {
            2.0 * PI * r
        } else if r < self.diameter() {
            8.0 * r * (FRAC_PI_4 - (q / r).acos()).max(0.0)
        } else {
            0.0
        }
    }

    /// `∫_S g(‖x‖) dx` for a radial integrand `g`.
    pub fn integrate_radial<F: FnMut(f64) -> f64>(&self, mut g: F, breaks: &[f64], opts: QuadOptions) -> Result<f64> {
        let q = self.half_side;
        let mut inner_breaks: Vec<f64> = breaks.iter().copied().filter(|&b| b > 0.0 && b < q).collect();
        inner_breaks.push(0.0);
        let disc = integrate_with_breaks(|r| 2.0 * PI * r * g(r), 0.0, q, &inner_breaks, opts)?;
        let corner_breaks: Vec<f64> = breaks.iter().copied().filter(|&b| b > q).collect();
        let corner = integrate_with_breaks(|r| self.arc_weight(r) * g(r), q, self.diameter(), &corner_breaks, opts)?;
        Ok(disc.value + corner.value)
    }
}

/// Monotone piecewise-linear path loss given by samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulated {
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl Tabulated {
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn evaluate(&self, r: f64) -> f64 {
        let idx = self.radii.partition_point(|&x| x <= r);
        if idx == 0 {
            return self.values[0];
        }
        if idx == self.radii.len() {
            return self.values[idx - 1];
        }
        let (r0, r1) = (self.radii[idx - 1], self.radii[idx]);
        let (v0, v1) = (self.values[idx - 1], self.values[idx]);
        v0 + (v1 - v0) * (r - r0) / (r1 - r0)
    }
}

/// Power received at distance `r` from a unit-power transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathLossModel {
    /// `r^-α`, unbounded at the origin.
    PowerLaw { alpha: f64 },
    /// `(r + k)^-α`.
    Bounded { k: f64, alpha: f64 },
    Tabulated(Tabulated),
}

impl PathLossModel {
    pub fn power_law(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Parameter(format!("power-law exponent must be positive, got {alpha}")));
        }
        Ok(Self::PowerLaw { alpha })
    }

    pub fn bounded(k: f64, alpha: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0 && alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Parameter(format!("bounded path loss needs k > 0 and α > 0, got k={k}, α={alpha}")));
        }
        Ok(Self::Bounded { k, alpha })
    }

    /// Piecewise-linear model through `(radii[i], values[i])`, held constant
    /// outside the sampled range. Monotonicity is checked by [`validate`].
    ///
    /// [`validate`]: PathLossModel::validate
    pub fn tabulated(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.is_empty() || radii.len() != values.len() {
            return Err(Error::Parameter("tabulated path loss needs equally many radii and values (≥ 1)".into()));
        }
        if radii.windows(2).any(|w| !(w[0] < w[1])) || radii.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Parameter("tabulated radii must be finite, non-negative and strictly increasing".into()));
        }
        Ok(Self::Tabulated(Tabulated { radii, values }))
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::tabulated(vec![0.0], vec![value])
    }

    /// Checks monotonicity and finiteness of the model.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::PowerLaw { alpha } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(Error::Parameter(format!("power-law exponent must be positive, got {alpha}")));
                }
            }
            Self::Bounded { k, alpha } => {
                if !(k.is_finite() && *k > 0.0 && alpha.is_finite() && *alpha > 0.0) {
                    return Err(Error::Parameter(format!("bounded path loss needs k > 0 and α > 0, got k={k}, α={alpha}")));
                }
            }
            Self::Tabulated(t) => {
                if t.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::Invariant("tabulated path loss values must be finite and non-negative".into()));
                }
                if t.values.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::Invariant("tabulated path loss must be non-increasing in distance".into()));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn evaluate(&self, r: f64) -> f64 {
        match self {
            Self::PowerLaw { alpha } => pow_neg(r, *alpha),
            Self::Bounded { k, alpha } => pow_neg(r + k, *alpha),
            Self::Tabulated(t) => t.evaluate(r),
        }
    }

    /// Path loss as a function of squared distance; avoids a square root for
    /// even integer exponents.
    #[inline]
    pub fn evaluate_sq(&self, r2: f64) -> f64 {
        match self {
            Self::PowerLaw { alpha } if *alpha == 4.0 => 1.0 / (r2 * r2),
            Self::PowerLaw { alpha } if *alpha == 2.0 => 1.0 / r2,
            _ => self.evaluate(r2.sqrt()),
        }
    }

    /// False only for models that blow up at the origin.
    pub fn is_bounded(&self) -> bool {
        !matches!(self, Self::PowerLaw { .. })
    }

    /// Whether `∫ r·l(r) dr` diverges at the origin.
    pub fn integral_diverges(&self) -> bool {
        matches!(self, Self::PowerLaw { alpha } if *alpha >= 2.0)
    }

    /// Distances where the model is not smooth, for quadrature splitting.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Tabulated(t) => t.radii.clone(),
            _ => Vec::new(),
        }
    }
}

#[inline]
fn pow_neg(base: f64, alpha: f64) -> f64 {
    if alpha == 4.0 {
        let b2 = base * base;
        1.0 / (b2 * b2)
    } else if alpha.fract() == 0.0 && alpha <= 32.0 {
        base.powi(-(alpha as i32))
    } else {
        base.powf(-alpha)
    }
}

/// The constant `a = ∫_S l(‖x‖) dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IntegralA {
    Finite(f64),
    /// The integral diverges at the origin (no stationary regime exists).
    Divergent,
}

impl IntegralA {
    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(v),
            Self::Divergent => None,
        }
    }
}

/// Computes `a` to relative accuracy `tol`, or reports divergence.
///
/// Divergence is decided from the model family, not numerically: a power
/// law with exponent ≥ 2 is never integrable at the origin.
pub fn pathloss_integral_a(model: &PathLossModel, domain: &TorusDomain, tol: f64) -> Result<IntegralA> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    model.validate()?;
    if model.integral_diverges() {
        return Ok(IntegralA::Divergent);
    }
    let opts = QuadOptions { rel_tol: tol, abs_tol: 0.0, max_intervals: 20_000 };
    let value = match model {
        PathLossModel::PowerLaw { alpha } => {
            // Disc part in closed form; the corners carry no singularity.
            let q = domain.half_side();
            let disc = 2.0 * PI * q.powf(2.0 - alpha) / (2.0 - alpha);
            let corner = integrate_with_breaks(
                |r| domain.arc_weight(r) * model.evaluate(r),
                q,
                domain.diameter(),
                &[],
                opts,
            )?;
            disc + corner.value
        }
        _ => domain.integrate_radial(|r| model.evaluate(r), &model.breakpoints(), opts)?,
    };
    Ok(IntegralA::Finite(value))
}
