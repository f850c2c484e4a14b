//! Quotient minimization over zonal functions, branch continuation in
//! lambda and symmetry-breaking threshold detection.
//!
//! The minimizer runs in two phases. A preconditioned Barzilai-Borwein
//! descent (preconditioner: the constant-coefficient operator
//! 2 (p - 2) K + 2 lambda W, factored once per call) brings an initial
//! guess near a critical point; a damped Newton iteration on the
//! Euler-Lagrange system with the L^p normalization as constraint then
//! polishes it to residual ~ 1e-9. Multi-start covers the constant, a
//! spike at the north pole with width matched to lambda, and an optional
//! continuation guess; the best value wins, with symmetric candidates
//! preferred inside a small tie margin.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, LU};
use serde::Serialize;

use crate::functionals::{self, Family, InequalityParams};
use crate::ultraspherical::{Grid, ZonalFunction};
use crate::{Error, Result};

/// Tunables for [`minimize`]; the defaults match the documented contracts.
#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions {
    /// Cap on descent iterations per start.
    pub max_descent: usize,
    /// Cap on Newton iterations per start.
    pub max_newton: usize,
    /// Target sup norm of the normalized Euler-Lagrange residual.
    pub residual_tol: f64,
    /// Residual at which descent hands over to Newton.
    pub switch_tol: f64,
    /// Relative sup deviation from the mean below which a minimizer is
    /// reported as symmetric.
    pub sym_tol: f64,
    /// Margin for the symmetric-vs-broken tie break.
    pub tie_margin: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_descent: 400,
            max_newton: 60,
            residual_tol: 1e-9,
            switch_tol: 1e-3,
            sym_tol: 1e-7,
            tie_margin: 1e-9,
        }
    }
}

/// Outcome of a quotient minimization.
#[derive(Debug, Clone)]
pub struct MinResult {
    /// Minimal quotient value found.
    pub mu: f64,
    /// Minimizer, normalized to unit L^p norm and nonnegative mean.
    pub minimizer: ZonalFunction,
    /// Total iterations spent (descent plus Newton, all starts).
    pub iterations: usize,
    /// Sup norm of the normalized Euler-Lagrange residual at the result.
    pub el_residual_norm: f64,
    /// Whether the minimizer is constant to within the symmetry tolerance.
    pub symmetric: bool,
    /// Set when symmetric and broken candidates differ by less than the
    /// tie margin; the symmetric one is reported.
    pub near_tie: bool,
}

/// One computed point of a branch.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BranchPoint {
    pub lambda: f64,
    pub mu: f64,
    pub symmetric: bool,
    pub mass: f64,
    pub kinetic: f64,
    pub el_residual: f64,
}

/// A lambda-sweep of minimizations for one family.
#[derive(Debug, Clone)]
pub struct Branch {
    pub family: Family,
    pub d: u32,
    pub p: f64,
    pub theta: f64,
    pub points: Vec<BranchPoint>,
}

impl Branch {
    /// Parameters of this branch at a given lambda.
    pub fn params_at(&self, lambda: f64) -> Result<InequalityParams> {
        InequalityParams::new(self.family, self.d, self.p, self.theta, lambda)
    }
}

/// Lambda at which the second variation around constants changes sign:
/// d, d / theta (infinite for theta = 0) and theta d respectively.
pub fn bifurcation_lambda(params: &InequalityParams) -> f64 {
    let d = f64::from(params.dim());
    match params.family() {
        Family::Gns0 => d,
        Family::Gns1 => {
            if params.theta() == 0.0 {
                f64::INFINITY
            } else {
                d / params.theta()
            }
        }
        Family::Gns2 => d * params.theta(),
    }
}

/// Proven bracket for the family-2 symmetry-breaking threshold at
/// theta > 1/2: [d (1 - (1 - theta) p / 2), theta d].
pub fn gns2_threshold_bracket(d: u32, p: f64, theta: f64) -> (f64, f64) {
    let d = f64::from(d);
    (d * (1.0 - (1.0 - theta) * p / 2.0), theta * d)
}

struct Objective<'g> {
    grid: &'g Grid,
    p: f64,
    lambda: f64,
    c_p: f64,
    c_b: f64,
    w: DVector<f64>,
    wz: DVector<f64>,
}

struct State {
    b: f64,
    s: f64,
    pp: f64,
    den: f64,
    q: f64,
}

impl<'g> Objective<'g> {
    fn new(params: &InequalityParams, grid: &'g Grid) -> Self {
        let theta = params.theta();
        let (c_p, c_b) = match params.family() {
            Family::Gns0 => (1.0, 0.0),
            Family::Gns1 => (theta, 1.0 - theta),
            Family::Gns2 => (1.0 / theta, 1.0 - 1.0 / theta),
        };
        let w = DVector::from_column_slice(grid.weights());
        let wz = DVector::from_iterator(
            grid.len(),
            grid.weights()
                .iter()
                .zip(grid.nodes())
                .map(|(w, z)| w * (1.0 - z * z)),
        );
        Objective {
            grid,
            p: params.p(),
            lambda: params.lambda(),
            c_p,
            c_b,
            w,
            wz,
        }
    }

    fn n(&self) -> usize {
        self.grid.len()
    }

    /// K v = D^T (wz .* (D v)) without forming K.
    fn stiffness_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut t = DVector::zeros(self.n());
        self.grid.derivative_into(v.as_slice(), t.as_mut_slice());
        t.component_mul_assign(&self.wz);
        let mut out = DVector::zeros(self.n());
        out.gemv_tr(1.0, self.grid.diff(), &t, 0.0);
        out
    }

    fn state(&self, v: &DVector<f64>) -> State {
        let mut t = DVector::zeros(self.n());
        self.grid.derivative_into(v.as_slice(), t.as_mut_slice());
        let mut a = 0.0;
        let mut b = 0.0;
        let mut s = 0.0;
        for i in 0..self.n() {
            a += self.wz[i] * t[i] * t[i];
            b += self.w[i] * v[i] * v[i];
            s += self.w[i] * v[i].abs().powf(self.p);
        }
        let pp = s.powf(2.0 / self.p);
        let num = (self.p - 2.0) * a + self.lambda * b;
        let den = pp.powf(self.c_p) * b.powf(self.c_b);
        State {
            b,
            s,
            pp,
            den,
            q: num / den,
        }
    }

    fn phi(&self, v: &DVector<f64>) -> DVector<f64> {
        v.map(|x| x.abs().powf(self.p - 2.0) * x)
    }

    /// Euclidean gradients of numerator and denominator.
    fn grads(&self, v: &DVector<f64>, st: &State) -> (DVector<f64>, DVector<f64>) {
        let kv = self.stiffness_apply(v);
        let wv = self.w.component_mul(v);
        let g_num = kv * (2.0 * (self.p - 2.0)) + &wv * (2.0 * self.lambda);
        let wphi = self.w.component_mul(&self.phi(v));
        let g_pp = &wphi * (2.0 * st.s.powf(2.0 / self.p - 1.0));
        let g_b = wv * 2.0;
        let u1 = &g_pp * (self.c_p / st.pp) + &g_b * (self.c_b / st.b);
        let g_den = u1 * st.den;
        (g_num, g_den)
    }

    fn quotient_grad(&self, v: &DVector<f64>, st: &State) -> DVector<f64> {
        let (g_num, g_den) = self.grads(v, st);
        (g_num - g_den * st.q) / st.den
    }

    /// Sup norm of the Euler-Lagrange residual in the quadrature metric,
    /// normalized by sup |v|^(p-1).
    fn residual_sup(&self, v: &DVector<f64>, mu: f64, st: &State) -> f64 {
        let (g_num, g_den) = self.grads(v, st);
        let scale = v.amax().powf(self.p - 1.0);
        let mut sup = 0.0_f64;
        for i in 0..self.n() {
            let r = (g_num[i] - mu * g_den[i]) / (2.0 * self.w[i]);
            sup = sup.max(r.abs());
        }
        sup / scale
    }

    fn normalize_lp(&self, v: &mut DVector<f64>) {
        let s: f64 = (0..self.n())
            .map(|i| self.w[i] * v[i].abs().powf(self.p))
            .sum();
        let scale = s.powf(-1.0 / self.p);
        *v *= scale;
    }

    /// Newton system for [grad N - mu grad D; (s - 1) / p] = 0 in the
    /// unknowns (v, mu), with symmetric 1/sqrt(w) scaling applied.
    fn newton_step(
        &self,
        v: &DVector<f64>,
        mu: f64,
        st: &State,
    ) -> Result<(DVector<f64>, f64, f64)> {
        let n = self.n();
        let p = self.p;
        let k = self.grid.stiffness();
        let phi = self.phi(v);
        let wphi = self.w.component_mul(&phi);
        let wv = self.w.component_mul(v);
        let g_pp = &wphi * (2.0 * st.s.powf(2.0 / p - 1.0));
        let g_b = &wv * 2.0;
        let u1 = &g_pp * (self.c_p / st.pp) + &g_b * (self.c_b / st.b);
        let g_den = &u1 * st.den;
        let g_num = self.stiffness_apply(v) * (2.0 * (p - 2.0)) + &wv * (2.0 * self.lambda);

        let mut h = k * (2.0 * (p - 2.0));
        let md = mu * st.den;
        let diag_pp = 2.0 * (p - 1.0) * st.s.powf(2.0 / p - 1.0);
        for i in 0..n {
            let vp = v[i].abs().powf(p - 2.0);
            h[(i, i)] += 2.0 * self.lambda * self.w[i]
                - md * self.c_p / st.pp * diag_pp * self.w[i] * vp
                - md * self.c_b / st.b * 2.0 * self.w[i];
        }
        // rank-one corrections of the denominator Hessian
        h.ger(-md, &u1, &u1, 1.0);
        h.ger(md * self.c_p / (st.pp * st.pp), &g_pp, &g_pp, 1.0);
        h.ger(md * self.c_b / (st.b * st.b), &g_b, &g_b, 1.0);
        h.ger(
            -md * self.c_p / st.pp * 2.0 * (2.0 - p) * st.s.powf(2.0 / p - 2.0),
            &wphi,
            &wphi,
            1.0,
        );

        let g = &g_num - &g_den * mu;
        let c = (st.s - 1.0) / p;

        // bordered system with 1/sqrt(w) row and column scaling
        let s_vec: Vec<f64> = self.w.iter().map(|w| 1.0 / w.sqrt()).collect();
        let mut j = DMatrix::zeros(n + 1, n + 1);
        for jcol in 0..n {
            for irow in 0..n {
                j[(irow, jcol)] = s_vec[irow] * h[(irow, jcol)] * s_vec[jcol];
            }
        }
        for i in 0..n {
            j[(i, n)] = -s_vec[i] * g_den[i];
            j[(n, i)] = s_vec[i] * wphi[i];
        }
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = -s_vec[i] * g[i];
        }
        rhs[n] = -c;
        let merit = rhs.norm();
        let lu = LU::new(j);
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::numerical("singular Newton system"))?;
        let mut dv = DVector::zeros(n);
        for i in 0..n {
            dv[i] = s_vec[i] * sol[i];
        }
        Ok((dv, sol[n], merit))
    }

    fn merit(&self, v: &DVector<f64>, mu: f64) -> f64 {
        let st = self.state(v);
        let (g_num, g_den) = self.grads(v, &st);
        let mut m = 0.0;
        for i in 0..self.n() {
            let r = (g_num[i] - mu * g_den[i]) / self.w[i].sqrt();
            m += r * r;
        }
        let c = (st.s - 1.0) / self.p;
        (m + c * c).sqrt()
    }
}

fn descent_phase(
    obj: &Objective,
    h0: &LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    v: &mut DVector<f64>,
    opts: &MinimizeOptions,
) -> Result<usize> {
    let mut iters = 0;
    let mut prev_v: Option<DVector<f64>> = None;
    let mut prev_g: Option<DVector<f64>> = None;
    let mut best_v = v.clone();
    let mut best_q = f64::INFINITY;
    for _ in 0..opts.max_descent {
        let st = obj.state(v);
        if !st.q.is_finite() {
            return Err(Error::numerical("objective became non-finite"));
        }
        if st.q < best_q {
            best_q = st.q;
            best_v.copy_from(v);
        }
        if obj.residual_sup(v, st.q, &st) < opts.switch_tol {
            break;
        }
        let g = obj.quotient_grad(v, &st);
        let gt = h0
            .solve(&g)
            .ok_or_else(|| Error::numerical("singular preconditioner"))?;
        let mut alpha = 1.0;
        if let (Some(pv), Some(pg)) = (&prev_v, &prev_g) {
            let s = &*v - pv;
            let y = &gt - pg;
            let sy = s.dot(&y);
            let yy = y.dot(&y);
            if sy > 0.0 && yy > 0.0 {
                alpha = (sy / yy).clamp(1e-4, 50.0);
            }
        }
        prev_v = Some(v.clone());
        prev_g = Some(gt.clone());
        v.axpy(-alpha, &gt, 1.0);
        obj.normalize_lp(v);
        iters += 1;
    }
    let st = obj.state(v);
    if st.q > best_q {
        v.copy_from(&best_v);
    }
    Ok(iters)
}

fn newton_phase(
    obj: &Objective,
    v: &mut DVector<f64>,
    opts: &MinimizeOptions,
) -> Result<(usize, f64)> {
    let mut mu = obj.state(v).q;
    let mut iters = 0;
    for _ in 0..opts.max_newton {
        let st = obj.state(v);
        let res = obj.residual_sup(v, mu, &st);
        if res < opts.residual_tol {
            break;
        }
        iters += 1;
        let (dv, dmu, merit0) = obj.newton_step(v, mu, &st)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..10 {
            let cand_v = &*v + &dv * t;
            let cand_mu = mu + t * dmu;
            let m = obj.merit(&cand_v, cand_mu);
            if m.is_finite() && m < merit0 * (1.0 - 0.1 * t) + 1e-300 {
                *v = cand_v;
                mu = cand_mu;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    obj.normalize_lp(v);
    mu = obj.state(v).q;
    let st = obj.state(v);
    let res = obj.residual_sup(v, mu, &st);
    Ok((iters, res))
}

fn run_single_start(
    params: &InequalityParams,
    grid: &Arc<Grid>,
    h0: &LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    v0: DVector<f64>,
    opts: &MinimizeOptions,
) -> Result<(f64, DVector<f64>, usize, f64)> {
    let obj = Objective::new(params, grid);
    let mut v = v0;
    obj.normalize_lp(&mut v);
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::numerical("non-finite start"));
    }
    let it1 = descent_phase(&obj, h0, &mut v, opts)?;
    let (it2, res) = newton_phase(&obj, &mut v, opts)?;
    let st = obj.state(&v);
    if !st.q.is_finite() || res > 1e-6 {
        return Err(Error::NoConvergence(format!(
            "Euler-Lagrange residual {res:.3e} after {} iterations",
            it1 + it2
        )));
    }
    Ok((st.q, v, it1 + it2, res))
}

fn precondition_lu(
    params: &InequalityParams,
    grid: &Grid,
) -> LU<f64, nalgebra::Dyn, nalgebra::Dyn> {
    let n = grid.len();
    let mut h0 = grid.stiffness() * (2.0 * (params.p() - 2.0));
    for i in 0..n {
        h0[(i, i)] += 2.0 * params.lambda() * grid.weights()[i];
    }
    LU::new(h0)
}

/// Spike profile exp(-s (1 - z)) with width matched to lambda, clamped to
/// what the grid resolves.
fn spike_start(params: &InequalityParams, grid: &Grid) -> DVector<f64> {
    let gap = 1.0 - grid.nodes()[grid.len() - 1];
    let s = (4.0 * params.lambda() / (params.p() - 2.0))
        .clamp(1.0, 0.5 / gap);
    DVector::from_iterator(
        grid.len(),
        grid.nodes().iter().map(|&z| (-s * (1.0 - z)).exp()),
    )
}

fn finish(
    grid: &Arc<Grid>,
    params: &InequalityParams,
    mu: f64,
    mut v: DVector<f64>,
    iterations: usize,
    opts: &MinimizeOptions,
    near_tie: bool,
) -> Result<MinResult> {
    let mean: f64 = grid
        .weights()
        .iter()
        .zip(v.iter())
        .map(|(w, x)| w * x)
        .sum();
    if mean < 0.0 {
        v.neg_mut();
    }
    let minimizer = ZonalFunction::from_values(Arc::clone(grid), v.as_slice().to_vec())?;
    let el = functionals::el_residual(params, &minimizer, mu)?.max_abs();
    let symmetric = minimizer.sup_deviation_rel_mean() < opts.sym_tol;
    Ok(MinResult {
        mu,
        minimizer,
        iterations,
        el_residual_norm: el,
        symmetric,
        near_tie,
    })
}

/// Minimizes the family quotient from a single supplied start.
pub fn minimize_from(
    params: &InequalityParams,
    grid: &Arc<Grid>,
    v0: &ZonalFunction,
    opts: &MinimizeOptions,
) -> Result<MinResult> {
    if grid.dim() != params.dim() {
        return Err(Error::GridMismatch(
            "grid dimension does not match parameters".to_string(),
        ));
    }
    if !grid.compatible(v0.grid()) {
        return Err(Error::GridMismatch(
            "start lives on a different grid".to_string(),
        ));
    }
    let h0 = precondition_lu(params, grid);
    let (mu, v, iters, _) = run_single_start(
        params,
        grid,
        &h0,
        DVector::from_column_slice(v0.values()),
        opts,
    )?;
    finish(grid, params, mu, v, iters, opts, false)
}

/// Minimizes the family quotient with the standard multi-start set:
/// constant, lambda-matched spike, and an optional continuation guess.
pub fn minimize(
    params: &InequalityParams,
    grid: &Arc<Grid>,
    continuation: Option<&ZonalFunction>,
    opts: &MinimizeOptions,
) -> Result<MinResult> {
    if grid.dim() != params.dim() {
        return Err(Error::GridMismatch(
            "grid dimension does not match parameters".to_string(),
        ));
    }
    let n = grid.len();
    let h0 = precondition_lu(params, grid);
    let mut starts: Vec<DVector<f64>> = vec![
        DVector::from_element(n, 1.0),
        spike_start(params, grid),
    ];
    if let Some(c) = continuation {
        if !grid.compatible(c.grid()) {
            return Err(Error::GridMismatch(
                "continuation guess lives on a different grid".to_string(),
            ));
        }
        starts.push(DVector::from_column_slice(c.values()));
    }

    let mut total_iters = 0;
    let mut results: Vec<(f64, DVector<f64>, bool)> = Vec::new();
    let mut last_err: Option<Error> = None;
    for v0 in starts {
        match run_single_start(params, grid, &h0, v0, opts) {
            Ok((mu, v, iters, _)) => {
                total_iters += iters;
                let mean: f64 = grid
                    .weights()
                    .iter()
                    .zip(v.iter())
                    .map(|(w, x)| w * x)
                    .sum();
                let dev = v
                    .iter()
                    .fold(0.0_f64, |m, x| m.max((x - mean).abs()));
                let sym = mean != 0.0 && dev / mean.abs() < opts.sym_tol;
                results.push((mu, v, sym));
            }
            Err(e) => last_err = Some(e),
        }
    }
    if results.is_empty() {
        return Err(last_err.unwrap_or_else(|| Error::NoConvergence("no start converged".into())));
    }
    let best = results
        .iter()
        .map(|(mu, _, _)| *mu)
        .fold(f64::INFINITY, f64::min);
    let best_sym = results
        .iter()
        .filter(|(_, _, sym)| *sym)
        .map(|(mu, _, _)| *mu)
        .fold(f64::INFINITY, f64::min);
    // prefer the symmetric candidate inside the tie margin
    let near_tie = best_sym.is_finite() && (best_sym - best) < opts.tie_margin && best_sym > best;
    let pick_sym = best_sym.is_finite() && (best_sym - best) < opts.tie_margin;
    let (mu, v, _) = results
        .into_iter()
        .filter(|(mu, _, sym)| {
            if pick_sym {
                *sym && *mu <= best_sym + 1e-300
            } else {
                *mu <= best + 1e-300
            }
        })
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .unwrap();
    finish(grid, params, mu, v, total_iters, opts, near_tie)
}

/// Sweeps lambda in ascending order with warm-started continuation and
/// records one branch point per value. `params` supplies (family, d, p,
/// theta); its lambda is ignored.
pub fn branch_sweep(
    params: &InequalityParams,
    grid: &Arc<Grid>,
    lambdas: &[f64],
    opts: &MinimizeOptions,
) -> Result<Branch> {
    if lambdas.is_empty() {
        return Err(Error::invalid("empty lambda list".to_string()));
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "lambda values must be strictly increasing".to_string(),
        ));
    }
    let mut points = Vec::with_capacity(lambdas.len());
    let mut prev: Option<ZonalFunction> = None;
    for &lam in lambdas {
        let p_lam = params.with_lambda(lam)?;
        let res = minimize(&p_lam, grid, prev.as_ref(), opts)?;
        let rep = functionals::quotient(&p_lam, &res.minimizer)?;
        points.push(BranchPoint {
            lambda: lam,
            mu: res.mu,
            symmetric: res.symmetric,
            mass: rep.mass,
            kinetic: rep.kinetic,
            el_residual: res.el_residual_norm,
        });
        prev = Some(res.minimizer);
    }
    Ok(Branch {
        family: params.family(),
        d: params.dim(),
        p: params.p(),
        theta: params.theta(),
        points,
    })
}

fn is_broken(point_mu: f64, lambda: f64, symmetric: bool) -> bool {
    !symmetric && point_mu < lambda - 1e-10 * lambda.max(1.0)
}

/// Bisection estimate of the lambda at which the minimizer stops being
/// constant, refined with fresh minimizations until the bracket is
/// narrower than `tol`. Returns the bracket midpoint.
pub fn detect_threshold(
    branch: &Branch,
    grid: &Arc<Grid>,
    opts: &MinimizeOptions,
    tol: f64,
) -> Result<f64> {
    let (lo, hi) = detect_threshold_bracket(branch, grid, opts, tol)?;
    Ok(0.5 * (lo + hi))
}

/// Same bisection as [`detect_threshold`], returning the final bracket
/// (last symmetric lambda, first symmetry-broken lambda).
pub fn detect_threshold_bracket(
    branch: &Branch,
    grid: &Arc<Grid>,
    opts: &MinimizeOptions,
    tol: f64,
) -> Result<(f64, f64)> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive".to_string()));
    }
    let mut lo: Option<f64> = None;
    let mut hi: Option<(f64, usize)> = None;
    for (i, pt) in branch.points.iter().enumerate() {
        if is_broken(pt.mu, pt.lambda, pt.symmetric) {
            hi = Some((pt.lambda, i));
            break;
        }
        lo = Some(pt.lambda);
    }
    let (mut hi, wi) = hi.ok_or_else(|| {
        Error::NoConvergence("no symmetry-broken point in the branch".to_string())
    })?;
    let mut lo = lo.ok_or_else(|| {
        Error::NoConvergence(
            "branch starts already symmetry-broken; no bracket below".to_string(),
        )
    })?;
    // witness minimizer from the broken side seeds the refinement
    let p_w = branch.params_at(hi)?;
    let mut witness = minimize(&p_w, grid, None, opts)?.minimizer;
    let _ = wi;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let p_mid = branch.params_at(mid)?;
        let res = minimize(&p_mid, grid, Some(&witness), opts)?;
        if is_broken(res.mu, mid, res.symmetric) {
            hi = mid;
            witness = res.minimizer;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

/// Least-squares fit mu ~ prefactor * lambda^gamma over a branch of
/// symmetry-broken points spanning at least one decade of lambda.
/// Returns (gamma_hat, prefactor_hat).
pub fn asymptotic_fit(branch: &Branch) -> Result<(f64, f64)> {
    let pts = &branch.points;
    if pts.len() < 3 {
        return Err(Error::invalid(
            "need at least three branch points to fit".to_string(),
        ));
    }
    if pts.iter().any(|pt| pt.symmetric) {
        return Err(Error::invalid(
            "asymptotic fit requires all points symmetry-broken".to_string(),
        ));
    }
    let lmin = pts.first().unwrap().lambda;
    let lmax = pts.last().unwrap().lambda;
    if lmax < 10.0 * lmin {
        return Err(Error::invalid(
            "branch must span at least one decade of lambda".to_string(),
        ));
    }
    let n = pts.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for pt in pts {
        let x = pt.lambda.ln();
        let y = pt.mu.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let gamma = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - gamma * sx) / n;
    Ok((gamma, intercept.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ultraspherical::make_grid;
    use approx::assert_abs_diff_eq;

    fn grid(d: u32, n: usize) -> Arc<Grid> {
        Arc::new(make_grid(d, n).unwrap())
    }

    #[test]
    fn newton_matrix_matches_directional_difference() {
        // finite-difference check of the assembled Jacobian row block
        let g = grid(3, 24);
        for params in [
            InequalityParams::gns0(3, 3.0, 2.5).unwrap(),
            InequalityParams::gns1(3, 2.7, 0.6, 3.0).unwrap(),
            InequalityParams::gns2(3, 2.5, 0.7, 1.5).unwrap(),
        ] {
            let obj = Objective::new(&params, &g);
            let n = g.len();
            let v = DVector::from_iterator(
                n,
                g.nodes().iter().map(|&z| 1.0 + 0.3 * z + 0.1 * z * z),
            );
            let mu = 1.7;
            let dir = DVector::from_iterator(n, g.nodes().iter().map(|&z| z - 0.2 * z * z));
            let h = 1e-6;
            let gplus = {
                let vp = &v + &dir * h;
                let st = obj.state(&vp);
                let (gn, gd) = obj.grads(&vp, &st);
                gn - gd * mu
            };
            let gminus = {
                let vm = &v - &dir * h;
                let st = obj.state(&vm);
                let (gn, gd) = obj.grads(&vm, &st);
                gn - gd * mu
            };
            let fd = (gplus - gminus) / (2.0 * h);

            // analytic: assemble via newton_step internals by evaluating
            // J (dir, 0) minus the mu column; easiest is to recompute the
            // scaled system and undo the scaling.
            let st = obj.state(&v);
            let (dv, _dmu, _merit) = obj.newton_step(&v, mu, &st).unwrap();
            let _ = dv; // solvability exercised above
            // direct product check through a second finite difference of
            // the merit-defining map is redundant; compare the action of
            // the assembled block instead:
            let jb = {
                // rebuild the top-left block exactly as newton_step does
                let p = params.p();
                let k = g.stiffness();
                let phi = obj.phi(&v);
                let wphi = obj.w.component_mul(&phi);
                let wv = obj.w.component_mul(&v);
                let g_pp = &wphi * (2.0 * st.s.powf(2.0 / p - 1.0));
                let g_b = &wv * 2.0;
                let u1 = &g_pp * (obj.c_p / st.pp) + &g_b * (obj.c_b / st.b);
                let md = mu * st.den;
                let mut h2 = k * (2.0 * (p - 2.0));
                let diag_pp = 2.0 * (p - 1.0) * st.s.powf(2.0 / p - 1.0);
                for i in 0..n {
                    let vp = v[i].abs().powf(p - 2.0);
                    h2[(i, i)] += 2.0 * obj.lambda * obj.w[i]
                        - md * obj.c_p / st.pp * diag_pp * obj.w[i] * vp
                        - md * obj.c_b / st.b * 2.0 * obj.w[i];
                }
                h2.ger(-md, &u1, &u1, 1.0);
                h2.ger(md * obj.c_p / (st.pp * st.pp), &g_pp, &g_pp, 1.0);
                h2.ger(md * obj.c_b / (st.b * st.b), &g_b, &g_b, 1.0);
                h2.ger(
                    -md * obj.c_p / st.pp * 2.0 * (2.0 - p) * st.s.powf(2.0 / p - 2.0),
                    &wphi,
                    &wphi,
                    1.0,
                );
                h2
            };
            let jd = &jb * &dir;
            let scale = fd.amax().max(1.0);
            for i in 0..n {
                assert_abs_diff_eq!(jd[i] / scale, fd[i] / scale, epsilon = 2e-5);
            }
        }
    }

    #[test]
    fn symmetric_regime_returns_lambda() {
        let g = grid(3, 64);
        let opts = MinimizeOptions::default();
        for lam in [1.0, 2.0, 2.9] {
            let params = InequalityParams::gns0(3, 3.0, lam).unwrap();
            let res = minimize(&params, &g, None, &opts).unwrap();
            assert!(res.symmetric);
            assert_abs_diff_eq!(res.mu, lam, epsilon = 1e-9 * lam);
            assert!(res.el_residual_norm < 1e-6);
        }
    }

    #[test]
    fn broken_regime_beats_lambda() {
        let g = grid(3, 96);
        let opts = MinimizeOptions::default();
        let params = InequalityParams::gns0(3, 3.0, 6.0).unwrap();
        let res = minimize(&params, &g, None, &opts).unwrap();
        assert!(!res.symmetric);
        assert!(res.mu < 6.0 - 1e-3, "mu = {}", res.mu);
        assert!(res.el_residual_norm < 1e-6);
        assert!(res.minimizer.min_value() > 0.0);
        // grid robustness: same value at doubled resolution
        let g2 = grid(3, 192);
        let res2 = minimize(&params, &g2, None, &opts).unwrap();
        assert_abs_diff_eq!(res.mu, res2.mu, epsilon = 1e-7 * res.mu.abs());
    }

    #[test]
    fn reparametrized_minimizer_solves_canonical_equation() {
        let g = grid(3, 96);
        let opts = MinimizeOptions::default();
        let params = InequalityParams::gns1(3, 3.0, 0.5, 10.0).unwrap();
        let res = minimize(&params, &g, None, &opts).unwrap();
        assert!(!res.symmetric);
        let rep = functionals::reparametrize(&params, &res.minimizer, res.mu).unwrap();
        assert!(rep.residual < 1e-6, "residual {}", rep.residual);
        assert!(rep.lambda0 > 0.0 && rep.kappa > 0.0);
    }

    #[test]
    fn bifurcation_values() {
        let p0 = InequalityParams::gns0(3, 3.0, 1.0).unwrap();
        assert_abs_diff_eq!(bifurcation_lambda(&p0), 3.0);
        let p1 = InequalityParams::gns1(3, 3.0, 0.25, 1.0).unwrap();
        assert_abs_diff_eq!(bifurcation_lambda(&p1), 12.0);
        let p1z = InequalityParams::gns1(3, 3.0, 0.0, 1.0).unwrap();
        assert!(bifurcation_lambda(&p1z).is_infinite());
        let p2 = InequalityParams::gns2(3, 2.5, 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(bifurcation_lambda(&p2), 1.5);
    }

    #[test]
    fn branch_is_monotone_and_kinks_at_bifurcation() {
        let g = grid(3, 64);
        let opts = MinimizeOptions::default();
        let params = InequalityParams::gns0(3, 3.0, 1.0).unwrap();
        let lambdas: Vec<f64> = (0..8).map(|i| 1.0 + i as f64).collect();
        let br = branch_sweep(&params, &g, &lambdas, &opts).unwrap();
        for w in br.points.windows(2) {
            assert!(w[1].mu >= w[0].mu - 1e-8);
        }
        for pt in &br.points {
            if pt.lambda <= 3.0 {
                assert!(pt.symmetric, "lambda {} should be symmetric", pt.lambda);
            } else {
                assert!(!pt.symmetric, "lambda {} should be broken", pt.lambda);
                assert!(pt.mu < pt.lambda);
            }
        }
    }

    #[test]
    fn threshold_detection_family0_coarse() {
        let g = grid(3, 48);
        let opts = MinimizeOptions::default();
        let params = InequalityParams::gns0(3, 3.0, 1.0).unwrap();
        let lambdas = [1.5, 2.5, 3.5, 4.5];
        let br = branch_sweep(&params, &g, &lambdas, &opts).unwrap();
        let t = detect_threshold(&br, &g, &opts, 5e-3).unwrap();
        assert_abs_diff_eq!(t, 3.0, epsilon = 5e-3);
    }

    #[test]
    fn gns2_bracket_formula() {
        let (lo, hi) = gns2_threshold_bracket(3, 2.5, 0.5);
        assert_abs_diff_eq!(lo, 3.0 * (1.0 - 0.625), epsilon = 1e-14);
        assert_abs_diff_eq!(hi, 1.5, epsilon = 1e-14);
    }

    #[test]
    fn asymptotic_fit_validations() {
        let branch = Branch {
            family: Family::Gns0,
            d: 3,
            p: 3.0,
            theta: 1.0,
            points: vec![
                BranchPoint {
                    lambda: 10.0,
                    mu: 5.0,
                    symmetric: false,
                    mass: 1.0,
                    kinetic: 1.0,
                    el_residual: 0.0,
                },
                BranchPoint {
                    lambda: 20.0,
                    mu: 7.0,
                    symmetric: false,
                    mass: 1.0,
                    kinetic: 1.0,
                    el_residual: 0.0,
                },
                BranchPoint {
                    lambda: 40.0,
                    mu: 9.9,
                    symmetric: false,
                    mass: 1.0,
                    kinetic: 1.0,
                    el_residual: 0.0,
                },
            ],
        };
        // spans only half a decade: rejected
        assert!(asymptotic_fit(&branch).is_err());
        let mut wide = branch.clone();
        wide.points.push(BranchPoint {
            lambda: 120.0,
            mu: 17.0,
            symmetric: false,
            mass: 1.0,
            kinetic: 1.0,
            el_residual: 0.0,
        });
        let (gamma, pref) = asymptotic_fit(&wide).unwrap();
        assert!(gamma > 0.0 && pref > 0.0);
    }
}
