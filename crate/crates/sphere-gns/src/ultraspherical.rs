//! Collocation grids for zonal functions on S^d.
//!
//! A zonal function is identified with its values at the Gauss-Jacobi nodes
//! of the weight (1 - z^2)^(d/2 - 1) on [-1, 1]; the quadrature weights are
//! normalized so that they represent the uniform probability measure on the
//! sphere pushed to [-1, 1]. Differentiation acts through the barycentric
//! spectral differentiation matrix of the node set, so the discrete
//! Laplace-Beltrami operator
//!
//! ```text
//! (Lf)(z) = (1 - z^2) f''(z) - d z f'(z)
//! ```
//!
//! is exact on polynomials of degree < n, and quadrature is exact through
//! degree 2n - 1. Both facts are what the rest of the crate relies on: the
//! discrete integration by parts identity holds to rounding and the discrete
//! spectrum of -L starts at 0, d, 2(d + 1), ...

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Immutable collocation grid; safe to share between threads.
#[derive(Debug)]
pub struct Grid {
    d: u32,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    diff: DMatrix<f64>,
    stiffness: OnceLock<DMatrix<f64>>,
}

/// Node values of a zonal function together with the grid they live on.
#[derive(Debug, Clone)]
pub struct ZonalFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

/// Builds the collocation grid for S^d with `n` nodes.
///
/// Requires `d >= 2` and `n >= 8`. The weights sum to one, odd moments
/// vanish by construction and the second moment equals 1 / (d + 1).
pub fn make_grid(d: u32, n: usize) -> Result<Grid> {
    Grid::new(d, n)
}

impl Grid {
    pub fn new(d: u32, n: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid(format!("dimension d = {d} must be >= 2")));
        }
        if n < 8 {
            return Err(Error::invalid(format!("grid size n = {n} must be >= 8")));
        }
        let alpha = f64::from(d) / 2.0 - 1.0;
        let (mut nodes, mut weights) = gauss_jacobi_symmetric(n, alpha)?;
        symmetrize(&mut nodes, &mut weights);
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let diff = differentiation_matrix(&nodes);
        Ok(Grid {
            d,
            nodes,
            weights,
            diff,
            stiffness: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> u32 {
        self.d
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in strictly increasing order, contained in (-1, 1).
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Probability quadrature weights matching [`Grid::nodes`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Spectral differentiation matrix of the node set.
    pub fn diff(&self) -> &DMatrix<f64> {
        &self.diff
    }

    /// Checks that `other` is usable interchangeably with `self`.
    pub fn compatible(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other)
            || (self.d == other.d
                && self.nodes.len() == other.nodes.len()
                && self.nodes.first() == other.nodes.first()
                && self.nodes.last() == other.nodes.last())
    }

    /// Quadrature of node values against the probability measure.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// L^q norm for `q >= 1`.
    pub fn lq_norm_values(&self, values: &[f64], q: f64) -> f64 {
        debug_assert!(q >= 1.0);
        let s: f64 = self
            .weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v.abs().powf(q))
            .sum();
        s.powf(1.0 / q)
    }

    /// First derivative of the polynomial interpolant, at the nodes.
    pub fn derivative_values(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.derivative_into(values, &mut out);
        out
    }

    pub fn derivative_into(&self, values: &[f64], out: &mut [f64]) {
        debug_assert_eq!(values.len(), self.len());
        debug_assert_eq!(out.len(), self.len());
        // (v_j - v_i) form: exact zero on constants and smaller rounding
        // than a plain matrix-vector product. Column traversal matches the
        // storage order.
        let n = self.len();
        let d = &self.diff;
        out.fill(0.0);
        for j in 0..n {
            let vj = values[j];
            let col = d.column(j);
            for i in 0..n {
                if i != j {
                    out[i] += col[i] * (vj - values[i]);
                }
            }
        }
    }

    /// Squared gradient seminorm: integral of (1 - z^2) f'(z)^2.
    pub fn grad_seminorm_sq_values(&self, values: &[f64]) -> f64 {
        let dv = self.derivative_values(values);
        self.weights
            .iter()
            .zip(self.nodes.iter())
            .zip(dv.iter())
            .map(|((w, z), g)| w * (1.0 - z * z) * g * g)
            .sum()
    }

    /// Laplace-Beltrami operator (1 - z^2) f'' - d z f' at the nodes.
    pub fn laplacian_values(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.laplacian_into(values, &mut out);
        out
    }

    pub fn laplacian_into(&self, values: &[f64], out: &mut [f64]) {
        let d1 = self.derivative_values(values);
        let d2 = self.derivative_values(&d1);
        let d = f64::from(self.d);
        for i in 0..self.len() {
            let z = self.nodes[i];
            out[i] = (1.0 - z * z) * d2[i] - d * z * d1[i];
        }
    }

    /// Pointwise square of the gradient length: (1 - z^2) f'(z)^2.
    pub fn grad_sq_pointwise(&self, values: &[f64]) -> Vec<f64> {
        let dv = self.derivative_values(values);
        self.nodes
            .iter()
            .zip(dv)
            .map(|(z, g)| (1.0 - z * z) * g * g)
            .collect()
    }

    /// Stiffness matrix K = D^T diag(w (1 - z^2)) D, the quadratic form of
    /// the gradient seminorm. Built lazily; the first call at large n pays
    /// an O(n^3) assembly.
    pub fn stiffness(&self) -> &DMatrix<f64> {
        self.stiffness.get_or_init(|| {
            let n = self.len();
            let mut scaled = self.diff.clone();
            for i in 0..n {
                let f = self.weights[i] * (1.0 - self.nodes[i] * self.nodes[i]);
                for j in 0..n {
                    scaled[(i, j)] *= f;
                }
            }
            self.diff.transpose() * scaled
        })
    }

    /// Eigenvalues of the discrete -Laplace-Beltrami operator in the
    /// quadrature inner product, ascending. Exact values are k (k + d - 1).
    pub fn neg_laplacian_eigenvalues(&self) -> Vec<f64> {
        let n = self.len();
        let k = self.stiffness();
        let mut b = DMatrix::zeros(n, n);
        for i in 0..n {
            let si = 1.0 / self.weights[i].sqrt();
            for j in 0..n {
                let sj = 1.0 / self.weights[j].sqrt();
                b[(i, j)] = si * k[(i, j)] * sj;
            }
        }
        let mut ev: Vec<f64> = b.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }
}

impl ZonalFunction {
    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values on a grid of size {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite node value"));
        }
        Ok(ZonalFunction { grid, values })
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&z| f(z)).collect();
        ZonalFunction {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        ZonalFunction {
            grid: Arc::clone(grid),
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn integrate(&self) -> f64 {
        self.grid.integrate_values(&self.values)
    }

    pub fn lq_norm(&self, q: f64) -> f64 {
        self.grid.lq_norm_values(&self.values, q)
    }

    pub fn grad_seminorm_sq(&self) -> f64 {
        self.grid.grad_seminorm_sq_values(&self.values)
    }

    pub fn laplace_beltrami(&self) -> ZonalFunction {
        ZonalFunction {
            grid: Arc::clone(&self.grid),
            values: self.grid.laplacian_values(&self.values),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Sup-norm deviation from the mean, relative to |mean|.
    pub fn sup_deviation_rel_mean(&self) -> f64 {
        let mean = self.integrate();
        if mean == 0.0 {
            return f64::INFINITY;
        }
        let dev = self
            .values
            .iter()
            .fold(0.0_f64, |m, v| m.max((v - mean).abs()));
        dev / mean.abs()
    }
}

/// Exact moment of z^k under the measure of S^d: zero for odd k, and
/// M_{2j} = M_{2j-2} (2j - 1) / (2j + d - 1) with M_0 = 1 for even k.
pub fn moment(d: u32, k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let d = f64::from(d);
    let mut m = 1.0;
    let mut j = 1u32;
    while 2 * j <= k {
        let tj = f64::from(2 * j);
        m *= (tj - 1.0) / (tj + d - 1.0);
        j += 1;
    }
    m
}

/// Gauss nodes and first-component weights for the symmetric Jacobi weight
/// (1 - x^2)^alpha via Golub-Welsch. The weights returned here are
/// unnormalized (proportional to the true quadrature weights).
fn gauss_jacobi_symmetric(n: usize, alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    // Symmetric weight: the Jacobi matrix has zero diagonal and
    // subdiagonal entries sqrt(b_k) from the monic three-term recurrence.
    let mut diag = vec![0.0_f64; n];
    let mut sub = vec![0.0_f64; n]; // sub[i] couples i and i+1; sub[n-1] unused
    let a2 = 2.0 * alpha;
    for k in 1..n {
        let kf = k as f64;
        let s = 2.0 * kf + a2; // 2k + alpha + beta
        let b = 4.0 * kf * (kf + alpha) * (kf + alpha) * (kf + a2)
            / (s * s * (s + 1.0) * (s - 1.0));
        sub[k - 1] = b.sqrt();
    }
    let mut first = vec![0.0_f64; n];
    first[0] = 1.0;
    tridiagonal_ql(&mut diag, &mut sub, &mut first)?;
    let mut pairs: Vec<(f64, f64)> = diag
        .into_iter()
        .zip(first)
        .map(|(x, q)| (x, q * q))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(pairs.into_iter().unzip())
}

/// Implicit-shift QL iteration for a symmetric tridiagonal matrix that also
/// accumulates the first row of the eigenvector matrix (all Golub-Welsch
/// needs). `diag` returns the eigenvalues, `first` their first components.
fn tridiagonal_ql(diag: &mut [f64], sub: &mut [f64], first: &mut [f64]) -> Result<()> {
    let n = diag.len();
    if n == 0 {
        return Ok(());
    }
    sub[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if sub[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::numerical(
                    "eigenvalue iteration for quadrature nodes did not converge",
                ));
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * sub[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + sub[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0_f64, 1.0_f64);
            let mut p = 0.0_f64;
            for i in (l..m).rev() {
                let mut f = s * sub[i];
                let b = c * sub[i];
                r = f.hypot(g);
                sub[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    sub[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                f = first[i + 1];
                first[i + 1] = s * first[i] + c * f;
                first[i] = c * first[i] - s * f;
            }
            if r == 0.0 && m > l + 1 {
                continue;
            }
            diag[l] -= p;
            sub[l] = g;
            sub[m] = 0.0;
        }
    }
    Ok(())
}

/// Enforces the exact z -> -z symmetry of the node/weight set.
fn symmetrize(nodes: &mut [f64], weights: &mut [f64]) {
    let n = nodes.len();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let z = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -z;
        nodes[j] = z;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
}

/// Barycentric spectral differentiation matrix. Log-scale barycentric
/// weights keep the entries finite for large n; the diagonal uses the
/// negative row sum so constants differentiate to exactly zero.
fn differentiation_matrix(nodes: &[f64]) -> DMatrix<f64> {
    let n = nodes.len();
    let mut logw = vec![0.0_f64; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            if j != i {
                acc -= (nodes[i] - nodes[j]).abs().ln();
            }
        }
        logw[i] = acc;
    }
    // sign of the barycentric weight for ascending nodes
    let sign = |i: usize| if (n - 1 - i) % 2 == 0 { 1.0 } else { -1.0 };
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut rowsum = 0.0;
        for j in 0..n {
            if j != i {
                let v = sign(i) * sign(j) * (logw[j] - logw[i]).exp() / (nodes[i] - nodes[j]);
                d[(i, j)] = v;
                rowsum += v;
            }
        }
        d[(i, i)] = -rowsum;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(d: u32, n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(d, n).unwrap())
    }

    #[test]
    fn weights_are_a_probability_measure() {
        for d in [2, 3, 4, 5, 10] {
            for n in [8, 33, 128] {
                let g = grid(d, n);
                let total: f64 = g.weights().iter().sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-13);
                assert!(g.weights().iter().all(|&w| w > 0.0));
            }
        }
    }

    #[test]
    fn low_moments_match_sphere_values() {
        for d in [2, 3, 4, 7] {
            let g = grid(d, 64);
            let z: Vec<f64> = g.nodes().to_vec();
            let m1 = g.integrate_values(&z);
            let z2: Vec<f64> = z.iter().map(|z| z * z).collect();
            let m2 = g.integrate_values(&z2);
            assert_abs_diff_eq!(m1, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(m2, 1.0 / f64::from(d + 1), epsilon = 1e-12);
        }
    }

    #[test]
    fn quadrature_exact_for_polynomials_against_moments() {
        // random polynomial of degree 2n - 1 integrated against the
        // closed-form moment recursion
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for d in [2, 3, 5] {
            let n = 16;
            let g = grid(d, n);
            let deg = 2 * n - 1;
            let coeffs: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let vals: Vec<f64> = g
                .nodes()
                .iter()
                .map(|&z| {
                    coeffs
                        .iter()
                        .rev()
                        .fold(0.0, |acc, &c| acc * z + c)
                })
                .collect();
            let quad = g.integrate_values(&vals);
            let exact: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| c * moment(d, k as u32))
                .sum();
            assert_abs_diff_eq!(quad, exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_of_constants_vanishes() {
        let g = grid(3, 128);
        let ones = vec![1.0; g.len()];
        let dv = g.derivative_values(&ones);
        for v in dv {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_exact_on_monomials() {
        let g = grid(4, 48);
        for k in [1usize, 3, 7, 20] {
            let vals: Vec<f64> = g.nodes().iter().map(|z| z.powi(k as i32)).collect();
            let dv = g.derivative_values(&vals);
            for (i, &z) in g.nodes().iter().enumerate() {
                let exact = k as f64 * z.powi(k as i32 - 1);
                assert_abs_diff_eq!(dv[i], exact, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn laplacian_matches_first_harmonics() {
        // L z = -d z and L z^2 = 2 - 2 (d + 1) z^2
        for d in [2, 3, 6] {
            let g = grid(d, 64);
            let z: Vec<f64> = g.nodes().to_vec();
            let lz = g.laplacian_values(&z);
            let z2: Vec<f64> = z.iter().map(|z| z * z).collect();
            let lz2 = g.laplacian_values(&z2);
            for i in 0..g.len() {
                assert_abs_diff_eq!(lz[i], -f64::from(d) * z[i], epsilon = 1e-11);
                assert_abs_diff_eq!(
                    lz2[i],
                    2.0 - 2.0 * f64::from(d + 1) * z2[i],
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn integration_by_parts_self_adjointness() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = grid(3, 96);
        for _ in 0..5 {
            let cf: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cg: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let eval = |c: &[f64], z: f64| c.iter().rev().fold(0.0, |acc, &a| acc * z + a);
            let f: Vec<f64> = g.nodes().iter().map(|&z| eval(&cf, z)).collect();
            let h: Vec<f64> = g.nodes().iter().map(|&z| eval(&cg, z)).collect();
            let lf = g.laplacian_values(&f);
            let lh = g.laplacian_values(&h);
            let a: f64 = g.integrate_values(&f.iter().zip(&lh).map(|(x, y)| x * y).collect::<Vec<_>>());
            let b: f64 = g.integrate_values(&h.iter().zip(&lf).map(|(x, y)| x * y).collect::<Vec<_>>());
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn gradient_seminorm_equals_dirichlet_pairing() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let g = grid(5, 80);
        let cf: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f: Vec<f64> = g
            .nodes()
            .iter()
            .map(|&z| cf.iter().rev().fold(0.0, |acc, &a| acc * z + a))
            .collect();
        let lf = g.laplacian_values(&f);
        let pairing = -g.integrate_values(
            &f.iter().zip(&lf).map(|(x, y)| x * y).collect::<Vec<_>>(),
        );
        let semi = g.grad_seminorm_sq_values(&f);
        assert_abs_diff_eq!(pairing, semi, epsilon = 1e-10 * (1.0 + semi.abs()));
    }

    #[test]
    fn spectrum_starts_at_zero_and_d() {
        for d in [2, 3, 4] {
            let g = grid(d, 32);
            let ev = g.neg_laplacian_eigenvalues();
            assert_abs_diff_eq!(ev[0], 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(ev[1], f64::from(d), epsilon = 1e-8);
            // next level: 2 (d + 1)
            assert_abs_diff_eq!(ev[2], f64::from(2 * (d + 1)), epsilon = 1e-7);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Grid::new(1, 64).is_err());
        assert!(Grid::new(3, 4).is_err());
    }

    #[test]
    fn grid_mismatch_detected() {
        let g1 = grid(3, 32);
        let g2 = grid(3, 48);
        assert!(ZonalFunction::from_values(Arc::clone(&g2), vec![0.0; g1.len()]).is_err());
        assert!(!g1.compatible(&g2));
        assert!(g1.compatible(&g1));
    }

    #[test]
    fn lq_norms_are_monotone_in_q() {
        let g = grid(3, 64);
        let f = ZonalFunction::from_fn(&g, |z| 1.0 + 0.7 * z + 0.2 * z * z);
        let mut prev = 0.0;
        for q in [1.0, 1.5, 2.0, 3.0, 4.0, 8.0] {
            let nq = f.lq_norm(q);
            assert!(nq >= prev - 1e-13);
            prev = nq;
        }
    }
}
