//! The three interpolation inequality families on S^d and their
//! variational structure.
//!
//! All families share the numerator (p - 2) |grad u|^2 + lambda |u|_2^2 and
//! differ in how the L^p and L^2 norms enter the denominator:
//!
//! * family 0: denominator |u|_p^2 (pure L^p),
//! * family 1: denominator |u|_p^(2 theta) |u|_2^(2 (1 - theta)),
//! * family 2: the multiplicative form, reported here in the normalization
//!   in which the optimal constant equals lambda exactly when constants are
//!   optimal, so symmetry versus symmetry breaking reads the same way for
//!   all three families.
//!
//! Quotients are zero-homogeneous; deficits vanish exactly at constants;
//! the second variation around the constant changes sign at the family's
//! bifurcation value of lambda (d, d / theta, theta d respectively).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ultraspherical::{Grid, ZonalFunction};
use crate::{Error, Result};

/// Which of the three inequality families is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Pure L^p right-hand side (theta = 1).
    Gns0,
    /// Interpolated right-hand side with exponent theta.
    Gns1,
    /// Multiplicative left-hand side with exponent theta.
    Gns2,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Gns0 => write!(f, "gns0"),
            Family::Gns1 => write!(f, "gns1"),
            Family::Gns2 => write!(f, "gns2"),
        }
    }
}

/// Validated parameter set (d, p, theta, lambda) for one family.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InequalityParams {
    family: Family,
    d: u32,
    p: f64,
    theta: f64,
    lambda: f64,
}

/// Interpolation exponent at which the L^p norm becomes critical:
/// theta_star = d (p - 2) / (2 p).
pub fn theta_star(d: u32, p: f64) -> f64 {
    f64::from(d) * (p - 2.0) / (2.0 * p)
}

/// Exponent q with |u|_q interpolating |u|_p and |u|_2 at ratio theta:
/// q = 2 p theta / (2 - p (1 - theta)). Defined for theta > 1 - 2 / p.
pub fn q_exponent(p: f64, theta: f64) -> Result<f64> {
    let denom = 2.0 - p * (1.0 - theta);
    if denom <= 0.0 {
        return Err(Error::invalid(format!(
            "q exponent undefined: theta = {theta} must exceed 1 - 2/p = {}",
            1.0 - 2.0 / p
        )));
    }
    Ok(2.0 * p * theta / denom)
}

impl InequalityParams {
    pub fn new(family: Family, d: u32, p: f64, theta: f64, lambda: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid(format!("dimension d = {d} must be >= 2")));
        }
        if !(p > 2.0) || !p.is_finite() {
            return Err(Error::invalid(format!("exponent p = {p} must exceed 2")));
        }
        if d >= 3 {
            let crit = 2.0 * f64::from(d) / (f64::from(d) - 2.0);
            if p >= crit {
                return Err(Error::invalid(format!(
                    "exponent p = {p} must be subcritical (< {crit} for d = {d})"
                )));
            }
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!(
                "bifurcation parameter lambda = {lambda} must be positive"
            )));
        }
        match family {
            Family::Gns0 => {
                if theta != 1.0 {
                    return Err(Error::invalid(
                        "family gns0 requires theta = 1".to_string(),
                    ));
                }
            }
            Family::Gns1 => {
                if !(0.0..=1.0).contains(&theta) {
                    return Err(Error::invalid(format!(
                        "family gns1 requires theta in [0, 1], got {theta}"
                    )));
                }
            }
            Family::Gns2 => {
                let ts = theta_star(d, p);
                if !(theta <= 1.0 && theta >= ts) {
                    return Err(Error::invalid(format!(
                        "family gns2 requires theta in [theta_star, 1] = [{ts}, 1], got {theta}"
                    )));
                }
                if theta <= 1.0 - 2.0 / p {
                    return Err(Error::invalid(format!(
                        "family gns2 requires theta > 1 - 2/p = {}",
                        1.0 - 2.0 / p
                    )));
                }
            }
        }
        Ok(InequalityParams {
            family,
            d,
            p,
            theta,
            lambda,
        })
    }

    pub fn gns0(d: u32, p: f64, lambda: f64) -> Result<Self> {
        Self::new(Family::Gns0, d, p, 1.0, lambda)
    }

    pub fn gns1(d: u32, p: f64, theta: f64, lambda: f64) -> Result<Self> {
        Self::new(Family::Gns1, d, p, theta, lambda)
    }

    pub fn gns2(d: u32, p: f64, theta: f64, lambda: f64) -> Result<Self> {
        Self::new(Family::Gns2, d, p, theta, lambda)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> u32 {
        self.d
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Same parameters with a different lambda.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.family, self.d, self.p, self.theta, lambda)
    }

    /// lambda coefficient of the quadratic form around constants: the
    /// constant is a local minimum iff this is positive.
    pub fn second_variation_coeff(&self) -> f64 {
        let d = f64::from(self.d);
        match self.family {
            Family::Gns0 => d - self.lambda,
            Family::Gns1 => d - self.lambda * self.theta,
            Family::Gns2 => d * self.theta - self.lambda,
        }
    }
}

/// Norm breakdown of a quotient evaluation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuotientReport {
    /// The family quotient in the normalization where constants give lambda.
    pub value: f64,
    /// |grad u|^2 (gradient seminorm squared).
    pub kinetic: f64,
    /// |u|_2^2.
    pub mass: f64,
    /// |u|_p.
    pub lp: f64,
    /// (|u|_p / |u|_2)^(2 theta), always >= 1.
    pub x_ratio: f64,
}

fn norms(params: &InequalityParams, u: &ZonalFunction) -> Result<(f64, f64, f64)> {
    if u.grid().dim() != params.dim() {
        return Err(Error::GridMismatch(format!(
            "parameters for d = {} but grid for d = {}",
            params.dim(),
            u.grid().dim()
        )));
    }
    let a = u.grad_seminorm_sq();
    let b = {
        let b = u.lq_norm(2.0);
        b * b
    };
    let lp = u.lq_norm(params.p());
    if !(lp > 0.0) {
        return Err(Error::invalid("quotient of the zero function".to_string()));
    }
    Ok((a, b, lp * lp))
}

/// Evaluates the family quotient at `u`.
pub fn quotient(params: &InequalityParams, u: &ZonalFunction) -> Result<QuotientReport> {
    let (a, b, pp) = norms(params, u)?;
    let p = params.p();
    let theta = params.theta();
    let num = (p - 2.0) * a + params.lambda() * b;
    let value = match params.family() {
        Family::Gns0 => num / pp,
        Family::Gns1 => num / (pp.powf(theta) * b.powf(1.0 - theta)),
        Family::Gns2 => num * b.powf(1.0 / theta - 1.0) * pp.powf(-1.0 / theta),
    };
    Ok(QuotientReport {
        value,
        kinetic: a,
        mass: b,
        lp: pp.sqrt(),
        x_ratio: (pp / b).powf(theta),
    })
}

/// Family deficit in terms of the three norms a = |grad u|^2,
/// b = |u|_2^2 and pp = |u|_p^2.
pub(crate) fn deficit_from_norms(
    params: &InequalityParams,
    a: f64,
    b: f64,
    pp: f64,
) -> f64 {
    let p = params.p();
    let theta = params.theta();
    let lam = params.lambda() / (p - 2.0);
    match params.family() {
        Family::Gns0 => a - lam * (pp - b),
        Family::Gns1 => a + lam * (b - pp.powf(theta) * b.powf(1.0 - theta)),
        Family::Gns2 => (a + lam * b).powf(theta) * b.powf(1.0 - theta) - lam.powf(theta) * pp,
    }
}

/// Evaluates the family deficit at `u`; zero exactly at constants,
/// nonnegative whenever lambda is at or below the optimal constant.
pub fn deficit(params: &InequalityParams, u: &ZonalFunction) -> Result<f64> {
    let (a, b, pp) = norms(params, u)?;
    Ok(deficit_from_norms(params, a, b, pp))
}

/// Small-amplitude limit of deficit(1 + eps z) / eps^2, extrapolated to
/// eps -> 0 from the supplied amplitudes.
///
/// The value is reported in the normalization in which it equals
/// `second_variation_coeff(params) / (d + 1)`; for family 2 this divides
/// out the positive factor (lambda / (p - 2))^(theta - 1) carried by the
/// raw deficit.
pub fn perturbative_deficit(
    params: &InequalityParams,
    grid: &Arc<Grid>,
    eps: &[f64],
) -> Result<f64> {
    if eps.len() < 2 {
        return Err(Error::invalid(
            "need at least two amplitudes to extrapolate".to_string(),
        ));
    }
    if eps.iter().any(|&e| !(0.0 < e && e < 0.5)) {
        return Err(Error::invalid(
            "perturbation amplitudes must lie in (0, 0.5)".to_string(),
        ));
    }
    if grid.dim() != params.dim() {
        return Err(Error::GridMismatch(
            "grid dimension does not match parameters".to_string(),
        ));
    }
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(eps.len());
    for &e in eps {
        let u = ZonalFunction::from_fn(grid, |z| 1.0 + e * z);
        let f = deficit(params, &u)?;
        pts.push((e, f / (e * e)));
    }
    let raw = neville_at_zero(&mut pts);
    let normalizer = match params.family() {
        Family::Gns2 => {
            let a = params.lambda() / (params.p() - 2.0);
            a.powf(1.0 - params.theta())
        }
        _ => 1.0,
    };
    Ok(raw * normalizer)
}

/// Polynomial extrapolation of (x_i, y_i) to x = 0 (Neville's scheme).
fn neville_at_zero(pts: &mut [(f64, f64)]) -> f64 {
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let n = pts.len();
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    for level in 1..n {
        for i in 0..n - level {
            let xi = xs[i];
            let xj = xs[i + level];
            ys[i] = (xj * ys[i] - xi * ys[i + 1]) / (xj - xi);
        }
    }
    ys[0]
}

/// Euler-Lagrange coefficients (c1, c2) such that a critical point of the
/// family quotient with value `mu` satisfies
/// (p - 2) (-L u) + c1 u = c2 |u|^(p-2) u.
fn el_coefficients(
    params: &InequalityParams,
    mu: f64,
    b: f64,
    pp: f64,
) -> (f64, f64) {
    let p = params.p();
    let theta = params.theta();
    let lam = params.lambda();
    match params.family() {
        Family::Gns0 => (lam, mu * pp.powf((2.0 - p) / 2.0)),
        Family::Gns1 => {
            let x2t = (pp / b).powf(theta); // X^(2 theta)
            let c1 = lam - mu * (1.0 - theta) * x2t;
            let c2 = mu * theta * (pp / b).powf(theta - 1.0) * pp.powf((2.0 - p) / 2.0);
            (c1, c2)
        }
        Family::Gns2 => {
            let y = (pp / b).powf(1.0 / theta); // X^(2 / theta)
            let c1 = lam + (1.0 / theta - 1.0) * mu * y;
            let c2 = (1.0 / theta) * mu * (pp / b).powf(1.0 / theta - 1.0)
                * pp.powf((2.0 - p) / 2.0);
            (c1, c2)
        }
    }
}

/// Node values of the family's Euler-Lagrange residual at `(u, mu)`,
/// normalized by the sup norm of |u|^(p-1).
pub fn el_residual(
    params: &InequalityParams,
    u: &ZonalFunction,
    mu: f64,
) -> Result<ZonalFunction> {
    if !(mu > 0.0) {
        return Err(Error::invalid(format!(
            "multiplier mu = {mu} must be positive"
        )));
    }
    let (_, b, pp) = norms(params, u)?;
    let (c1, c2) = el_coefficients(params, mu, b, pp);
    let p = params.p();
    let lap = u.grid().laplacian_values(u.values());
    let scale = u.max_abs().powf(p - 1.0);
    if !(scale > 0.0) {
        return Err(Error::invalid("residual of the zero function".to_string()));
    }
    let vals: Vec<f64> = u
        .values()
        .iter()
        .zip(lap)
        .map(|(&v, l)| {
            ((p - 2.0) * (-l) + c1 * v - c2 * v.abs().powf(p - 2.0) * v) / scale
        })
        .collect();
    ZonalFunction::from_values(Arc::clone(u.grid()), vals)
}

/// Result of rescaling a family critical point onto the canonical
/// elliptic equation -L v + (lambda0 / (p - 2)) v = v^(p-1).
#[derive(Debug, Clone, Copy)]
pub struct Reparametrization {
    /// Multiplicative rescaling: v = kappa u.
    pub kappa: f64,
    /// Parameter of the canonical equation satisfied by v.
    pub lambda0: f64,
    /// Sup norm of the canonical residual of v, relative to sup |v|^(p-1).
    pub residual: f64,
}

/// Sup norm of the canonical elliptic residual of `v` at parameter
/// `lambda0`, relative to sup |v|^(p-1).
pub fn el0_residual_sup(v: &ZonalFunction, lambda0: f64, p: f64) -> f64 {
    let lap = v.grid().laplacian_values(v.values());
    let scale = v.max_abs().powf(p - 1.0);
    let lam = lambda0 / (p - 2.0);
    v.values()
        .iter()
        .zip(lap)
        .map(|(&x, l)| (-l + lam * x - x.abs().powf(p - 2.0) * x).abs())
        .fold(0.0_f64, f64::max)
        / scale
}

/// Maps a critical point `u` of the family quotient (with value `mu`) to a
/// solution kappa u of the canonical elliptic equation. The coefficients
/// are obtained by matching the linear and power terms of the family's
/// Euler-Lagrange equation; the returned residual certifies the match.
pub fn reparametrize(
    params: &InequalityParams,
    u: &ZonalFunction,
    mu: f64,
) -> Result<Reparametrization> {
    if !(mu > 0.0) {
        return Err(Error::invalid(format!(
            "multiplier mu = {mu} must be positive"
        )));
    }
    let (_, b, pp) = norms(params, u)?;
    let (c1, c2) = el_coefficients(params, mu, b, pp);
    let p = params.p();
    if !(c1 > 0.0) {
        return Err(Error::invalid(format!(
            "mu = {mu} inconsistent with parameters: resulting lambda = {c1} not positive"
        )));
    }
    if !(c2 > 0.0) {
        return Err(Error::invalid(format!(
            "mu = {mu} inconsistent with parameters: power coefficient {c2} not positive"
        )));
    }
    let kappa = (c2 / (p - 2.0)).powf(1.0 / (p - 2.0));
    let v = ZonalFunction::from_values(
        Arc::clone(u.grid()),
        u.values().iter().map(|&x| kappa * x).collect(),
    )?;
    let residual = el0_residual_sup(&v, c1, p);
    Ok(Reparametrization {
        kappa,
        lambda0: c1,
        residual,
    })
}
