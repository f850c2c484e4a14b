//! Nonlinear fast-diffusion flow, carre-du-champ coefficients and the
//! entropy dissipation checks built on them.
//!
//! The flow is dw/dt = w^(2-2 beta) (Lw + kappa |grad w|^2 / w) with
//! L the Laplace-Beltrami operator; rho = w^(beta p) composed with the
//! time rescaling t -> m t solves the plain fast-diffusion equation
//! drho/dt = L rho^m. Both forms are integrated with a two-stage
//! linearly implicit midpoint scheme: the diffusion coefficient is
//! frozen at the current (then midpoint) state and treated implicitly,
//! the gradient-quotient source explicitly, and each accepted step
//! projects back onto the initial mass. Step size is halved whenever
//! positivity fails.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, LU};

use crate::functionals::{self, Family, InequalityParams};
use crate::ultraspherical::{Grid, ZonalFunction};
use crate::{Error, Result};

/// Diffusion-exponent window [m-, m+] inside which the pointwise
/// carre-du-champ inequality holds.
pub fn m_range(d: u32, p: f64) -> Result<(f64, f64)> {
    if d < 2 {
        return Err(Error::invalid(format!("dimension d = {d} must be >= 2")));
    }
    let df = f64::from(d);
    if !(p > 2.0) || !p.is_finite() {
        return Err(Error::invalid(format!("exponent p = {p} must satisfy p > 2")));
    }
    let radicand = df * (p - 1.0) * (2.0 * df - (df - 2.0) * p);
    if radicand < 0.0 {
        return Err(Error::invalid(format!(
            "p = {p} is supercritical for d = {d}"
        )));
    }
    let s = radicand.sqrt();
    let denom = (df + 2.0) * p;
    Ok(((df * p + 2.0 - s) / denom, (df * p + 2.0 + s) / denom))
}

/// Diffusion exponent m together with the derived flow parameters.
#[derive(Debug, Clone, Copy)]
pub struct FlowParams {
    pub d: u32,
    pub p: f64,
    pub m: f64,
    pub beta: f64,
    pub kappa: f64,
}

/// Builds [`FlowParams`] from (d, p, m): beta = 2 / (2 - p (1 - m)) and
/// kappa = beta (p - 2) + 1.
pub fn flow_params(d: u32, p: f64, m: f64) -> Result<FlowParams> {
    if d < 2 {
        return Err(Error::invalid(format!("dimension d = {d} must be >= 2")));
    }
    if !(p > 2.0) || !p.is_finite() {
        return Err(Error::invalid(format!("exponent p = {p} must satisfy p > 2")));
    }
    if !m.is_finite() {
        return Err(Error::invalid(format!("diffusion exponent m = {m}")));
    }
    let denom = 2.0 - p * (1.0 - m);
    if denom.abs() < 1e-12 {
        return Err(Error::Unsupported(format!(
            "m = {m} sits at the pole of beta for p = {p}; this exceptional \
             case needs a direct treatment in m and is not supported"
        )));
    }
    let beta = 2.0 / denom;
    let kappa = beta * (p - 2.0) + 1.0;
    Ok(FlowParams { d, p, m, beta, kappa })
}

/// Coefficients of the pointwise quadratic form behind the
/// carre-du-champ inequality, with its reduced discriminant b^2 - ac.
#[derive(Debug, Clone, Copy)]
pub struct BECoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub discriminant: f64,
}

pub fn be_coeffs(fp: &FlowParams) -> BECoeffs {
    let d = f64::from(fp.d);
    let t = fp.kappa + fp.beta - 1.0;
    let a = 1.0;
    let b = t * (d - 1.0) / (d + 2.0);
    let c = t * d / (d + 2.0) + fp.kappa * (fp.beta - 1.0);
    BECoeffs {
        a,
        b,
        c,
        discriminant: b * b - a * c,
    }
}

fn disc_at(d: u32, p: f64, m: f64) -> Result<f64> {
    Ok(be_coeffs(&flow_params(d, p, m)?).discriminant)
}

/// Roots in m of the reduced discriminant b^2 - ac, found by bisection.
/// They bracket [m-, m+] strictly: the discriminant stays negative on a
/// wider interval than the admissible window, which is therefore a
/// sufficient condition with slack rather than the exact sign boundary.
pub fn discriminant_roots(d: u32, p: f64) -> Result<(f64, f64)> {
    let (mlo, mhi) = m_range(d, p)?;
    let mid = 0.5 * (mlo + mhi);
    if disc_at(d, p, mid)? >= 0.0 {
        return Err(Error::numerical(
            "discriminant not negative at the window midpoint".to_string(),
        ));
    }
    let pole = 1.0 - 2.0 / p;
    // scan outward until the sign flips, then bisect
    let bracket_out = |dir: f64| -> Result<(f64, f64)> {
        let mut inner = mid;
        let step = 0.05;
        for _ in 0..400 {
            let cand = inner + dir * step;
            if (cand - pole) * (inner - pole) <= 0.0 {
                // The discriminant diverges at the beta pole: to +inf when
                // the leading beta^2 coefficient is positive, so a sign
                // change hides between inner and the pole; to -inf
                // otherwise, in which case the scan resumes past it.
                let near = pole + (inner - pole) * 1e-9;
                match disc_at(d, p, near) {
                    Ok(v) if v > 0.0 => return Ok((inner, near)),
                    _ => {
                        inner = pole + dir * 1e-9;
                        continue;
                    }
                }
            }
            match disc_at(d, p, cand) {
                Ok(v) if v > 0.0 => return Ok((inner, cand)),
                Ok(_) => inner = cand,
                Err(_) => break,
            }
        }
        Err(Error::NoConvergence(
            "no sign change of the discriminant found".to_string(),
        ))
    };
    let refine = |mut a: f64, mut b: f64| -> Result<f64> {
        let mut fa = disc_at(d, p, a)?;
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid == a || mid == b {
                break;
            }
            let fm = disc_at(d, p, mid)?;
            if fa * fm <= 0.0 {
                b = mid;
            } else {
                a = mid;
                fa = fm;
            }
        }
        Ok(0.5 * (a + b))
    };
    let (in_lo, out_lo) = bracket_out(-1.0)?;
    let (in_hi, out_hi) = bracket_out(1.0)?;
    Ok((refine(out_lo, in_lo)?, refine(in_hi, out_hi)?))
}

/// Quadrature value of k[u] = int (Lu + kappa |grad u|^2 / u)
/// (Lu + (beta - 1) |grad u|^2 / u).
pub fn k_functional(grid: &Grid, u: &ZonalFunction, fp: &FlowParams) -> Result<f64> {
    if !grid.compatible(u.grid()) {
        return Err(Error::GridMismatch(
            "function lives on a different grid".to_string(),
        ));
    }
    if grid.dim() != fp.d {
        return Err(Error::GridMismatch(
            "grid dimension does not match flow parameters".to_string(),
        ));
    }
    if !(u.min_value() > 0.0) {
        return Err(Error::Positivity(
            "k-functional needs a strictly positive function".to_string(),
        ));
    }
    let lap = grid.laplacian_values(u.values());
    let g2 = grid.grad_sq_pointwise(u.values());
    let mut total = 0.0;
    for i in 0..grid.len() {
        let q = g2[i] / u.values()[i];
        total += grid.weights()[i]
            * (lap[i] + fp.kappa * q)
            * (lap[i] + (fp.beta - 1.0) * q);
    }
    Ok(total)
}

/// Gap k[u] - d int |grad u|^2; nonnegative for m in [m-, m+].
pub fn k_gap(grid: &Grid, u: &ZonalFunction, fp: &FlowParams) -> Result<f64> {
    let k = k_functional(grid, u, fp)?;
    let dirichlet = grid.grad_seminorm_sq_values(u.values());
    Ok(k - f64::from(fp.d) * dirichlet)
}

/// Deterministic search for a positive u with k[u] < d int |grad u|^2.
/// Returns the most negative normalized gap found with its witness, or
/// None when every candidate satisfies the inequality.
///
/// For zonal functions the traceless Hessian and the gradient tensor are
/// aligned, with scalar coefficients l = (1-z^2) u'' and
/// mu = (1-z^2) u'^2 / u, so the quadratic form behind k reduces to
/// a l^2 - 2 b l mu + c mu^2 pointwise. Solving l = (b/a) mu, which
/// makes the form equal -(b^2-ac) mu^2 / a, gives the closed family
/// u = (1 + t z)^(1/(1-b)): a guaranteed violator whenever the
/// discriminant is positive, i.e. for m outside the interval of
/// [`discriminant_roots`]. Inside that interval no violator exists.
pub fn find_be_violator(
    grid: &Arc<Grid>,
    fp: &FlowParams,
) -> Result<Option<(ZonalFunction, f64)>> {
    let co = be_coeffs(fp);
    let mut worst: Option<(ZonalFunction, f64)> = None;
    let consider = |u: ZonalFunction, worst: &mut Option<(ZonalFunction, f64)>| -> Result<()> {
        let k = k_functional(grid, &u, fp)?;
        let dirichlet = grid.grad_seminorm_sq_values(u.values());
        let scale = k.abs() + f64::from(fp.d) * dirichlet + 1e-30;
        let gap = (k - f64::from(fp.d) * dirichlet) / scale;
        if gap < -1e-9 && worst.as_ref().map_or(true, |(_, g)| gap < *g) {
            *worst = Some((u, gap));
        }
        Ok(())
    };
    if (co.b - 1.0).abs() > 1e-9 {
        let s = 1.0 / (1.0 - co.b);
        for i in 0..19 {
            let t = -0.95 + 0.1 * i as f64;
            if t.abs() < 0.05 {
                continue;
            }
            let u = ZonalFunction::from_fn(grid, |z| (1.0 + t * z).powf(s));
            consider(u, &mut worst)?;
        }
    }
    // broader log-quadratic sweep as a safety net
    for i in 0..13 {
        for j in 0..13 {
            let a = -3.0 + 0.5 * i as f64;
            let b = -3.0 + 0.5 * j as f64;
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let u = ZonalFunction::from_fn(grid, |z| (a * z + b * z * z).exp());
            consider(u, &mut worst)?;
        }
    }
    Ok(worst)
}

/// Per-sample record of the flow quantities: conserved mass, the
/// Dirichlet integral of v = w^beta, the production term governing the
/// dissipation identity, and the L^2 / L^p norms of v from which any
/// family deficit is reconstructed.
#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub d: u32,
    pub p: f64,
    pub m: f64,
    pub beta: f64,
    /// Uniform sample times, starting at 0.
    pub times: Vec<f64>,
    /// int w^(beta p) per sample.
    pub mass: Vec<f64>,
    /// int |grad w^beta|^2 per sample.
    pub dirichlet: Vec<f64>,
    /// int |grad w|^2 per sample.
    pub production: Vec<f64>,
    /// |w^beta|_2^2 per sample, i.e. int w^(2 beta).
    pub l2_sq: Vec<f64>,
    /// |w^beta|_p^2 per sample.
    pub lp_sq: Vec<f64>,
    /// Final state w.
    pub final_state: Vec<f64>,
}

impl FlowTrace {
    /// Largest relative mismatch of the centered-difference derivative of
    /// int w^(2 beta) against 2 beta^2 (p - 2) int |grad w|^2, over the
    /// interior samples.
    pub fn dissipation_identity_max_rel_err(&self) -> f64 {
        let n = self.times.len();
        if n < 3 {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for i in 1..n - 1 {
            let h = self.times[i + 1] - self.times[i - 1];
            let lhs = (self.l2_sq[i + 1] - self.l2_sq[i - 1]) / h;
            let rhs = 2.0 * self.beta * self.beta * (self.p - 2.0) * self.production[i];
            let scale = rhs.abs().max(1e-30);
            worst = worst.max((lhs - rhs).abs() / scale);
        }
        worst
    }

    /// Largest relative mass deviation from the initial value, divided by
    /// the elapsed time.
    pub fn mass_drift_per_unit_time(&self) -> f64 {
        let m0 = self.mass[0];
        let t_end = *self.times.last().unwrap();
        if t_end <= 0.0 {
            return 0.0;
        }
        self.mass
            .iter()
            .map(|m| (m - m0).abs() / m0.abs())
            .fold(0.0_f64, f64::max)
            / t_end
    }
}

/// Laplace-Beltrami operator matrix (1 - z^2) f'' - d z f' on the grid.
fn laplacian_matrix(grid: &Grid) -> DMatrix<f64> {
    let n = grid.len();
    let d1 = grid.diff();
    let d2 = d1 * d1;
    let mut lap = DMatrix::zeros(n, n);
    let df = f64::from(grid.dim());
    for i in 0..n {
        let z = grid.nodes()[i];
        for j in 0..n {
            lap[(i, j)] = (1.0 - z * z) * d2[(i, j)] - df * z * d1[(i, j)];
        }
    }
    lap
}

struct Stepper<'g> {
    grid: &'g Grid,
    lap: DMatrix<f64>,
    /// diffusion coefficient exponent: state^expc scales the Laplacian
    expc: f64,
    /// source strength and exponent: coef * state^expq * |grad state|^2
    src_coef: f64,
    src_exp: f64,
    /// mass density exponent: int state^mass_exp is conserved
    mass_exp: f64,
}

impl<'g> Stepper<'g> {
    fn mass(&self, w: &DVector<f64>) -> f64 {
        let vals: Vec<f64> = w.iter().map(|&x| x.powf(self.mass_exp)).collect();
        self.grid.integrate_values(&vals)
    }

    fn coeffs(&self, w: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let g2 = self.grid.grad_sq_pointwise(w.as_slice());
        let c = DVector::from_iterator(w.len(), w.iter().map(|&x| x.powf(self.expc)));
        let q = DVector::from_iterator(
            w.len(),
            w.iter()
                .zip(&g2)
                .map(|(&x, &g)| self.src_coef * x.powf(self.src_exp) * g),
        );
        (c, q)
    }

    fn implicit_lu(&self, c: &DVector<f64>, h: f64) -> LU<f64, nalgebra::Dyn, nalgebra::Dyn> {
        let n = c.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = -0.5 * h * c[i] * self.lap[(i, j)];
            }
            m[(i, i)] += 1.0;
        }
        LU::new(m)
    }

    /// One linearly implicit midpoint step; Err when positivity fails.
    fn step(&self, w: &DVector<f64>, h: f64, mass0: f64) -> Result<DVector<f64>> {
        let (c0, q0) = self.coeffs(w);
        let rhs_half = w + &q0 * (0.5 * h);
        let half = self
            .implicit_lu(&c0, h)
            .solve(&rhs_half)
            .ok_or_else(|| Error::numerical("singular implicit stage"))?;
        if !half.iter().all(|&x| x.is_finite() && x > 0.0) {
            return Err(Error::Positivity("predictor stage lost positivity".into()));
        }
        let (ch, qh) = self.coeffs(&half);
        let lw = &self.lap * w;
        let mut rhs = w + &qh * h;
        for i in 0..w.len() {
            rhs[i] += 0.5 * h * ch[i] * lw[i];
        }
        let next = self
            .implicit_lu(&ch, h)
            .solve(&rhs)
            .ok_or_else(|| Error::numerical("singular implicit stage"))?;
        if !next.iter().all(|&x| x.is_finite() && x > 0.0) {
            return Err(Error::Positivity("corrector stage lost positivity".into()));
        }
        // project back onto the conserved mass
        let mass = self.mass(&next);
        let factor = (mass0 / mass).powf(1.0 / self.mass_exp);
        Ok(next * factor)
    }

    /// Advances one sample interval of length `dt`, halving the substep
    /// on positivity failures. Returns the state and the halving level
    /// reached.
    fn advance(&self, w: &DVector<f64>, dt: f64, mass0: f64, level0: u32) -> Result<(DVector<f64>, u32)> {
        let mut level = level0;
        'retry: loop {
            if level > 40 {
                return Err(Error::NoConvergence(
                    "step size collapsed while enforcing positivity".to_string(),
                ));
            }
            let nsub = 1usize << level;
            let h = dt / nsub as f64;
            let mut cur = w.clone();
            for _ in 0..nsub {
                match self.step(&cur, h, mass0) {
                    Ok(next) => cur = next,
                    Err(Error::Positivity(_)) => {
                        level += 1;
                        continue 'retry;
                    }
                    Err(e) => return Err(e),
                }
            }
            return Ok((cur, level));
        }
    }
}

/// Integrates dw/dt = w^(2-2 beta) (Lw + kappa |grad w|^2 / w) from `w0`
/// up to `t_end`, sampling the trace every `dt`.
pub fn evolve(
    grid: &Arc<Grid>,
    fp: &FlowParams,
    w0: &ZonalFunction,
    t_end: f64,
    dt: f64,
) -> Result<FlowTrace> {
    if !grid.compatible(w0.grid()) {
        return Err(Error::GridMismatch(
            "initial state lives on a different grid".to_string(),
        ));
    }
    if grid.dim() != fp.d {
        return Err(Error::GridMismatch(
            "grid dimension does not match flow parameters".to_string(),
        ));
    }
    if !(dt > 0.0) || !(t_end >= dt) {
        return Err(Error::invalid(format!(
            "need 0 < dt <= t_end, got dt = {dt}, t_end = {t_end}"
        )));
    }
    if !(w0.min_value() > 0.0) {
        return Err(Error::Positivity(
            "initial state must be strictly positive".to_string(),
        ));
    }
    let beta = fp.beta;
    let stepper = Stepper {
        grid,
        lap: laplacian_matrix(grid),
        expc: 2.0 - 2.0 * beta,
        src_coef: fp.kappa,
        src_exp: 1.0 - 2.0 * beta,
        mass_exp: beta * fp.p,
    };
    let steps = (t_end / dt).round().max(1.0) as usize;
    let mut w = DVector::from_column_slice(w0.values());
    let mass0 = stepper.mass(&w);

    let mut trace = FlowTrace {
        d: fp.d,
        p: fp.p,
        m: fp.m,
        beta,
        times: Vec::with_capacity(steps + 1),
        mass: Vec::with_capacity(steps + 1),
        dirichlet: Vec::with_capacity(steps + 1),
        production: Vec::with_capacity(steps + 1),
        l2_sq: Vec::with_capacity(steps + 1),
        lp_sq: Vec::with_capacity(steps + 1),
        final_state: Vec::new(),
    };
    let record = |t: f64, w: &DVector<f64>, tr: &mut FlowTrace| {
        let v: Vec<f64> = w.iter().map(|&x| x.powf(beta)).collect();
        tr.times.push(t);
        tr.mass.push(stepper.mass(w));
        tr.dirichlet.push(grid.grad_seminorm_sq_values(&v));
        tr.production.push(grid.grad_seminorm_sq_values(w.as_slice()));
        let l2 = grid.lq_norm_values(&v, 2.0);
        let lp = grid.lq_norm_values(&v, fp.p);
        tr.l2_sq.push(l2 * l2);
        tr.lp_sq.push(lp * lp);
    };
    record(0.0, &w, &mut trace);
    let mut level = 0u32;
    for k in 1..=steps {
        let (next, new_level) = stepper.advance(&w, dt, mass0, level)?;
        w = next;
        level = new_level;
        record(k as f64 * dt, &w, &mut trace);
    }
    trace.final_state = w.as_slice().to_vec();
    Ok(trace)
}

/// Integrates the plain fast-diffusion form drho/dt = L rho^m and
/// returns the final state; used to cross-check [`evolve`] through the
/// rho = w^(beta p), t -> m t correspondence.
pub fn evolve_rho(
    grid: &Arc<Grid>,
    fp: &FlowParams,
    rho0: &ZonalFunction,
    t_end: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    if !grid.compatible(rho0.grid()) {
        return Err(Error::GridMismatch(
            "initial state lives on a different grid".to_string(),
        ));
    }
    if !(dt > 0.0) || !(t_end >= dt) {
        return Err(Error::invalid(format!(
            "need 0 < dt <= t_end, got dt = {dt}, t_end = {t_end}"
        )));
    }
    if !(rho0.min_value() > 0.0) {
        return Err(Error::Positivity(
            "initial state must be strictly positive".to_string(),
        ));
    }
    // L rho^m = m rho^(m-1) L rho + m (m-1) rho^(m-2) |grad rho|^2; the
    // constant factor m of the diffusion coefficient is folded into the
    // Laplacian matrix.
    let m = fp.m;
    let stepper = Stepper {
        grid,
        lap: laplacian_matrix(grid) * m,
        expc: m - 1.0,
        src_coef: m * (m - 1.0),
        src_exp: m - 2.0,
        mass_exp: 1.0,
    };
    let steps = (t_end / dt).round().max(1.0) as usize;
    let mut rho = DVector::from_column_slice(rho0.values());
    let mass0 = stepper.mass(&rho);
    let mut level = 0u32;
    for _ in 0..steps {
        let (next, new_level) = stepper.advance(&rho, dt, mass0, level)?;
        rho = next;
        level = new_level;
    }
    Ok(rho.as_slice().to_vec())
}

/// One interior sample of the entropy dissipation check.
#[derive(Debug, Clone, Copy)]
pub struct EntropyRow {
    pub time: f64,
    pub deficit: f64,
    /// Centered-difference derivative of the deficit.
    pub rate_measured: f64,
    /// Dissipation bound for the family at this sample.
    pub rate_bound: f64,
    pub satisfied: bool,
}

/// Outcome of checking a flow trace against the family dissipation bound.
#[derive(Debug, Clone)]
pub struct EntropyReport {
    pub rows: Vec<EntropyRow>,
    /// Deficit never increases beyond rounding.
    pub monotone: bool,
    pub initial_deficit: f64,
    pub terminal_deficit: f64,
    /// Most positive value of rate_measured - (rate_bound + slack).
    pub max_rate_violation: f64,
}

/// Verifies the family dissipation bound along a trace: the measured
/// deficit decay rate must not exceed -2 beta^2 (d - lambda) P for
/// family 0 and -2 beta^2 (d + lambda ((1-theta) x - 1)) P for family 1,
/// with P the production integral and x the L^p/L^2 norm ratio power.
/// The comparison slack is estimated from third differences of the
/// deficit, i.e. from the finite-difference truncation error itself.
pub fn entropy_report(
    trace: &FlowTrace,
    params: &InequalityParams,
) -> Result<EntropyReport> {
    if params.dim() != trace.d {
        return Err(Error::invalid(format!(
            "trace computed for d = {}, parameters for d = {}",
            trace.d,
            params.dim()
        )));
    }
    if (params.p() - trace.p).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "trace computed for p = {}, parameters for p = {}",
            trace.p,
            params.p()
        )));
    }
    if params.family() == Family::Gns2 {
        return Err(Error::Unsupported(
            "no dissipation bound is implemented for family 2".to_string(),
        ));
    }
    let n = trace.times.len();
    if n < 3 {
        return Err(Error::invalid("trace too short".to_string()));
    }
    let deficit: Vec<f64> = (0..n)
        .map(|i| {
            functionals::deficit_from_norms(
                params,
                trace.dirichlet[i],
                trace.l2_sq[i],
                trace.lp_sq[i],
            )
        })
        .collect();
    let h = trace.times[1] - trace.times[0];
    // centered-difference error is h^2 f'''/6; bound f''' by the largest
    // third difference over the trace
    let mut max_third = 0.0_f64;
    for i in 0..n.saturating_sub(3) {
        let t3 = deficit[i + 3] - 3.0 * deficit[i + 2] + 3.0 * deficit[i + 1] - deficit[i];
        max_third = max_third.max(t3.abs() / (h * h * h));
    }
    let slack = h * h * max_third / 6.0 + 1e-12 * (1.0 + deficit[0].abs());

    let d = f64::from(trace.d);
    let lam = params.lambda();
    let theta = params.theta();
    let two_b2 = 2.0 * trace.beta * trace.beta;
    let mut rows = Vec::with_capacity(n - 2);
    let mut max_violation = f64::NEG_INFINITY;
    for i in 1..n - 1 {
        let rate = (deficit[i + 1] - deficit[i - 1]) / (2.0 * h);
        let coeff = match params.family() {
            Family::Gns0 => d - lam,
            Family::Gns1 => {
                let x = (trace.lp_sq[i] / trace.l2_sq[i]).powf(theta);
                d + lam * ((1.0 - theta) * x - 1.0)
            }
            Family::Gns2 => unreachable!(),
        };
        let bound = -two_b2 * coeff * trace.production[i];
        let violation = rate - (bound + slack);
        max_violation = max_violation.max(violation);
        rows.push(EntropyRow {
            time: trace.times[i],
            deficit: deficit[i],
            rate_measured: rate,
            rate_bound: bound,
            satisfied: violation <= 0.0,
        });
    }
    let mut monotone = true;
    for w in deficit.windows(2) {
        if w[1] > w[0] + 1e-10 * (1.0 + deficit[0].abs()) {
            monotone = false;
        }
    }
    Ok(EntropyReport {
        rows,
        monotone,
        initial_deficit: deficit[0],
        terminal_deficit: *deficit.last().unwrap(),
        max_rate_violation: max_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ultraspherical::make_grid;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(d: u32, n: usize) -> Arc<Grid> {
        Arc::new(make_grid(d, n).unwrap())
    }

    #[test]
    fn m_range_values() {
        let (lo, hi) = m_range(3, 4.0).unwrap();
        assert_abs_diff_eq!(lo, (14.0 - 18.0_f64.sqrt()) / 20.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, (14.0 + 18.0_f64.sqrt()) / 20.0, epsilon = 1e-15);
        let (lo, hi) = m_range(3, 6.0).unwrap();
        assert_abs_diff_eq!(lo, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 2.0 / 3.0, epsilon = 1e-15);
        // at d = 2 the (d-2)p term drops out: radicand d(p-1)(2d) = 24
        let (lo, hi) = m_range(2, 4.0).unwrap();
        assert_abs_diff_eq!(lo, (10.0 - 24.0_f64.sqrt()) / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, (10.0 + 24.0_f64.sqrt()) / 16.0, epsilon = 1e-15);
        assert!(m_range(3, 6.5).is_err());
        assert!(m_range(1, 4.0).is_err());
    }

    #[test]
    fn flow_params_values() {
        let fp = flow_params(3, 4.0, 0.75).unwrap();
        assert_abs_diff_eq!(fp.beta, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fp.kappa, 5.0, epsilon = 1e-15);
        let fp = flow_params(3, 3.7, 1.0).unwrap();
        assert_abs_diff_eq!(fp.beta, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fp.kappa, 2.7, epsilon = 1e-15);
        // m recovered from beta
        let fp = flow_params(3, 3.0, 0.8).unwrap();
        let m_back = 1.0 + (2.0 / fp.p) * (1.0 / fp.beta - 1.0);
        assert_abs_diff_eq!(m_back, 0.8, epsilon = 1e-12);
        match flow_params(3, 6.0, 2.0 / 3.0) {
            Err(Error::Unsupported(_)) => {}
            other => panic!("expected unsupported, got {other:?}"),
        }
    }

    #[test]
    fn be_coeffs_example() {
        let fp = flow_params(3, 4.0, 0.7).unwrap();
        assert_abs_diff_eq!(fp.beta, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fp.kappa, 6.0, epsilon = 1e-12);
        let co = be_coeffs(&fp);
        assert_abs_diff_eq!(co.a, 1.0);
        assert_abs_diff_eq!(co.b, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(co.c, 13.5, epsilon = 1e-12);
        assert_abs_diff_eq!(co.discriminant, -4.5, epsilon = 1e-12);
    }

    #[test]
    fn discriminant_sign_structure() {
        // the discriminant is strictly negative on all of [m-, m+] and
        // vanishes at the wider bisection roots; frozen reference values
        // for (d, p) = (3, 4): 0.7 -+ 0.3 sqrt(2)
        let (lo, hi) = m_range(3, 4.0).unwrap();
        for f in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let m = lo + f * (hi - lo);
            assert!(disc_at(3, 4.0, m).unwrap() < 0.0, "disc >= 0 at m = {m}");
        }
        let (rlo, rhi) = discriminant_roots(3, 4.0).unwrap();
        let s2 = 2.0_f64.sqrt();
        assert_abs_diff_eq!(rlo, 0.7 - 0.3 * s2, epsilon = 1e-10);
        assert_abs_diff_eq!(rhi, 0.7 + 0.3 * s2, epsilon = 1e-10);
        assert!(disc_at(3, 4.0, rlo).unwrap().abs() < 1e-8);
        assert!(disc_at(3, 4.0, rhi).unwrap().abs() < 1e-8);
        // the window ends are interior points of the negativity region
        assert!(rlo < lo && hi < rhi);
        assert!(disc_at(3, 4.0, rlo - 0.02).unwrap() > 0.0);
        assert!(disc_at(3, 4.0, rhi + 0.02).unwrap() > 0.0);
    }

    #[test]
    fn k_functional_constant_and_first_harmonic() {
        let g = grid(3, 48);
        let fp = flow_params(3, 4.0, 0.7).unwrap();
        let c = ZonalFunction::constant(&g, 2.0);
        assert_abs_diff_eq!(k_functional(&g, &c, &fp).unwrap(), 0.0, epsilon = 1e-12);
        let eps = 1e-3;
        let u = ZonalFunction::from_fn(&g, |z| 1.0 + eps * z);
        let k = k_functional(&g, &u, &fp).unwrap();
        let expected = eps * eps * 9.0 / 4.0; // d^2 eps^2 / (d+1)
        assert_abs_diff_eq!(k, expected, epsilon = 1e-9);
        let gap = k_gap(&g, &u, &fp).unwrap();
        assert!(gap.abs() < 1e-9, "gap {gap}");
    }

    #[test]
    fn k_inequality_random_positive() {
        let g = grid(3, 48);
        let (mlo, mhi) = m_range(3, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in [mlo, 0.5 * (mlo + mhi), mhi] {
            let fp = flow_params(3, 4.0, m).unwrap();
            for _ in 0..20 {
                let a: f64 = rng.gen_range(-1.5..1.5);
                let b: f64 = rng.gen_range(-1.5..1.5);
                let c: f64 = rng.gen_range(-1.0..1.0);
                let u = ZonalFunction::from_fn(&g, |z| {
                    (a * z + b * z * z + c * z * z * z).exp()
                });
                let gap = k_gap(&g, &u, &fp).unwrap();
                let scale = f64::from(fp.d) * g.grad_seminorm_sq_values(u.values()) + 1.0;
                assert!(gap > -1e-9 * scale, "violation at m = {m}: {gap}");
            }
        }
    }

    #[test]
    fn violator_found_outside_discriminant_interval() {
        let g = grid(3, 48);
        let (rlo, _) = discriminant_roots(3, 4.0).unwrap();
        // below the lower discriminant root the form is indefinite
        let fp = flow_params(3, 4.0, rlo - 0.1).unwrap();
        let hit = find_be_violator(&g, &fp).unwrap();
        assert!(hit.is_some(), "expected a violator at m = {}", rlo - 0.1);
        let (u, gap) = hit.unwrap();
        assert!(gap < 0.0);
        assert!(k_gap(&g, &u, &fp).unwrap() < 0.0);
        // inside the admissible window the scan finds nothing
        let fp_in = flow_params(3, 4.0, 0.7).unwrap();
        assert!(find_be_violator(&g, &fp_in).unwrap().is_none());
    }

    #[test]
    fn constant_initial_state_is_stationary() {
        let g = grid(3, 32);
        let fp = flow_params(3, 4.0, 0.7).unwrap();
        let w0 = ZonalFunction::constant(&g, 1.3);
        let tr = evolve(&g, &fp, &w0, 0.2, 0.01).unwrap();
        for i in 0..tr.times.len() {
            assert!(tr.dirichlet[i].abs() < 1e-20);
            assert_abs_diff_eq!(tr.mass[i], tr.mass[0], epsilon = 1e-14 * tr.mass[0]);
        }
        for (a, b) in tr.final_state.iter().zip(w0.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn dirichlet_decreases_and_identity_holds() {
        let g = grid(3, 48);
        let fp = flow_params(3, 4.0, 0.7).unwrap();
        let w0 =
            ZonalFunction::from_fn(&g, |z| (1.0 + 0.5 * z).powf(1.0 / fp.beta));
        let tr = evolve(&g, &fp, &w0, 0.5, 2.5e-4).unwrap();
        for w in tr.dirichlet.windows(2) {
            assert!(w[1] < w[0], "dirichlet integral not strictly decreasing");
        }
        let err = tr.dissipation_identity_max_rel_err();
        assert!(err < 1e-5, "identity mismatch {err}");
        assert!(tr.mass_drift_per_unit_time() < 1e-8);
    }

    #[test]
    fn two_flow_forms_agree() {
        let g = grid(3, 48);
        let fp = flow_params(3, 4.0, 0.7).unwrap();
        let u0 = |z: f64| 1.0 + 0.4 * z;
        let w0 = ZonalFunction::from_fn(&g, |z| u0(z).powf(1.0 / fp.beta));
        let rho0 = ZonalFunction::from_fn(&g, |z| u0(z).powf(fp.p));
        let t_end = 1.0;
        let dt = 2.5e-4;
        let tr = evolve(&g, &fp, &w0, fp.m * t_end, fp.m * dt).unwrap();
        let rho = evolve_rho(&g, &fp, &rho0, t_end, dt).unwrap();
        let bp = fp.beta * fp.p;
        let mut sup = 0.0_f64;
        for (wf, rf) in tr.final_state.iter().zip(&rho) {
            sup = sup.max((wf.powf(bp) - rf).abs());
        }
        assert!(sup < 1e-6, "flow forms differ by {sup}");
    }

    #[test]
    fn entropy_decay_family0() {
        let g = grid(3, 48);
        let fp = flow_params(3, 3.0, 0.8).unwrap();
        let params = InequalityParams::gns0(3, 3.0, 2.0).unwrap();
        let w0 = ZonalFunction::from_fn(&g, |z| (1.0 + 0.3 * z).powf(1.0 / fp.beta));
        let tr = evolve(&g, &fp, &w0, 4.0, 1e-3).unwrap();
        let report = entropy_report(&tr, &params).unwrap();
        assert!(report.monotone);
        assert!(report.initial_deficit > 1e-3);
        assert!(report.terminal_deficit < 1e-8, "terminal {}", report.terminal_deficit);
        assert!(report.max_rate_violation <= 0.0, "violation {}", report.max_rate_violation);
        assert!(report.rows.iter().all(|r| r.satisfied));
    }

    #[test]
    fn entropy_decay_family1_and_threshold_case() {
        let g = grid(3, 48);
        let fp = flow_params(3, 3.0, 0.8).unwrap();
        let w0 = ZonalFunction::from_fn(&g, |z| (1.0 + 0.3 * z).powf(1.0 / fp.beta));
        let tr = evolve(&g, &fp, &w0, 4.0, 1e-3).unwrap();
        let p1 = InequalityParams::gns1(3, 3.0, 0.5, 5.0).unwrap();
        let rep = entropy_report(&tr, &p1).unwrap();
        assert!(rep.monotone);
        assert!(rep.terminal_deficit < 1e-8);
        assert!(rep.max_rate_violation <= 0.0);
        // threshold case lambda = d: bound rate is zero, deficit still
        // nonincreasing
        let p0 = InequalityParams::gns0(3, 3.0, 3.0).unwrap();
        let rep0 = entropy_report(&tr, &p0).unwrap();
        assert!(rep0.monotone);
        let near_edge: Vec<_> = rep0
            .rows
            .iter()
            .filter(|r| r.rate_bound.abs() < 1e-15)
            .collect();
        assert!(!near_edge.is_empty());
        // family 2 has no bound implemented
        let p2 = InequalityParams::gns2(3, 3.0, 0.75, 2.0).unwrap();
        assert!(matches!(entropy_report(&tr, &p2), Err(Error::Unsupported(_))));
    }
}
