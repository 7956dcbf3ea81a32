//! Chebyshev–Gauss–Lobatto collocation: grids, differentiation, quadrature
//! and interpolation.
//!
//! Profiles are stored as nodal values on `y_j = cos(jπ/N)`, `j = 0..=N`.
//! Differentiation matrices of orders 1–4 are built recursively with each
//! diagonal re-derived from the row sums (the "negative sum trick"), which
//! keeps the rounding growth of the high-order operators under control. Chebyshev coefficients are only used internally
//! for diagnostics and for indefinite integration.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{LabError, Result};

pub type C64 = Complex64;

/// Smallest admissible node-count parameter.
pub const MIN_NODES: usize = 8;
/// Largest node-count parameter (dense operators are used throughout).
pub const MAX_NODES: usize = 2048;

/// Chebyshev–Gauss–Lobatto collocation data on `[-1, 1]`.
#[derive(Debug)]
pub struct Grid {
    n: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    bary: Vec<f64>,
    diff: [DMatrix<f64>; 4],
}

/// Builds the grid with node-count parameter `n` (`n + 1` nodes).
pub fn build_grid(n: usize) -> Result<Arc<Grid>> {
    Grid::new(n).map(Arc::new)
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < MIN_NODES {
            return Err(LabError::param("N", format!("need N >= {MIN_NODES}, got {n}")));
        }
        if !n.is_multiple_of(2) {
            return Err(LabError::param("N", format!("N must be even, got {n}")));
        }
        if n > MAX_NODES {
            return Err(LabError::param("N", format!("need N <= {MAX_NODES}, got {n}")));
        }
        let nodes = chebyshev_nodes(n);
        let weights = clenshaw_curtis_weights(n);
        let bary = (0..=n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        Ok(Grid {
            n,
            nodes,
            weights,
            bary,
            diff: differentiation_matrices(n),
        })
    }

    /// Process-wide cached grid for `n`. Grids are immutable, so sharing is free.
    pub fn shared(n: usize) -> Result<Arc<Grid>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Grid>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(g) = cache.lock().unwrap().get(&n) {
            return Ok(Arc::clone(g));
        }
        let grid = Arc::new(Grid::new(n)?);
        let mut guard = cache.lock().unwrap();
        Ok(Arc::clone(guard.entry(n).or_insert(grid)))
    }

    /// Node-count parameter `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of nodes, `N + 1`.
    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Differentiation matrix of order `k` in `1..=4`.
    pub fn diff_matrix(&self, k: usize) -> Result<&DMatrix<f64>> {
        if !(1..=4).contains(&k) {
            return Err(LabError::param("k", format!("derivative order must be 1..=4, got {k}")));
        }
        Ok(&self.diff[k - 1])
    }

    pub(crate) fn d(&self, k: usize) -> &DMatrix<f64> {
        &self.diff[k - 1]
    }

    /// Applies the order-`k` operator to nodal samples.
    pub fn apply(&self, k: usize, samples: &[C64]) -> Vec<C64> {
        let d = self.d(k);
        let m = self.len();
        let mut out = vec![C64::new(0.0, 0.0); m];
        for (i, o) in out.iter_mut().enumerate() {
            let mut re = 0.0;
            let mut im = 0.0;
            for (j, s) in samples.iter().enumerate() {
                let dij = d[(i, j)];
                re += dij * s.re;
                im += dij * s.im;
            }
            *o = C64::new(re, im);
        }
        out
    }

    /// Clenshaw–Curtis quadrature of nodal samples over `[-1, 1]`.
    pub fn quadrature(&self, samples: &[C64]) -> C64 {
        samples
            .iter()
            .zip(&self.weights)
            .fold(C64::new(0.0, 0.0), |acc, (s, w)| acc + s * *w)
    }

    pub fn quadrature_real(&self, samples: &[f64]) -> f64 {
        samples.iter().zip(&self.weights).map(|(s, w)| s * w).sum()
    }

    /// Barycentric evaluation of the degree-`N` interpolant at `y`.
    pub fn interpolate(&self, samples: &[C64], y: f64) -> C64 {
        let mut num = C64::new(0.0, 0.0);
        let mut den = 0.0;
        for (j, (&yj, &wj)) in self.nodes.iter().zip(&self.bary).enumerate() {
            let dy = y - yj;
            if dy == 0.0 {
                return samples[j];
            }
            let t = wj / dy;
            num += samples[j] * t;
            den += t;
        }
        num / den
    }

    /// Index `N - j` of the node mirrored through `y = 0`.
    pub fn mirror(&self, j: usize) -> usize {
        self.n - j
    }

    /// Chebyshev coefficients `c_k` of the interpolant, `p = Σ c_k T_k`.
    pub fn chebyshev_coefficients(&self, samples: &[C64]) -> Vec<C64> {
        let n = self.n;
        let nf = n as f64;
        (0..=n)
            .map(|k| {
                let mut acc = C64::new(0.0, 0.0);
                for (j, s) in samples.iter().enumerate() {
                    let half = if j == 0 || j == n { 0.5 } else { 1.0 };
                    acc += s * (half * cos_pi_frac(j * k, n));
                }
                let scale = if k == 0 || k == n { 1.0 / nf } else { 2.0 / nf };
                acc * scale
            })
            .collect()
    }

    /// Nodal values of `∫_{-1}^{y} p(s) ds` for the interpolant `p`.
    ///
    /// The antiderivative has degree `N + 1`; its values at the nodes are
    /// computed exactly, including the `T_{N+1}` term.
    pub fn cumulative_integral(&self, samples: &[C64]) -> Vec<C64> {
        let n = self.n;
        let c = self.chebyshev_coefficients(samples);
        // b_k coefficients of the antiderivative, k = 0..=N+1.
        let mut b = vec![C64::new(0.0, 0.0); n + 2];
        let coef = |k: usize| if k <= n { c[k] } else { C64::new(0.0, 0.0) };
        for (k, bk) in b.iter_mut().enumerate().skip(1) {
            let prev = if k == 1 { coef(0) * 2.0 } else { coef(k - 1) };
            *bk = (prev - coef(k + 1)) / (2.0 * k as f64);
        }
        // Fix the constant so the antiderivative vanishes at y = -1.
        let at_minus_one = b
            .iter()
            .enumerate()
            .skip(1)
            .fold(C64::new(0.0, 0.0), |acc, (k, bk)| if k % 2 == 0 { acc + bk } else { acc - bk });
        b[0] = -at_minus_one;
        (0..=n)
            .map(|j| {
                b.iter()
                    .enumerate()
                    .fold(C64::new(0.0, 0.0), |acc, (k, bk)| acc + bk * cos_pi_frac(j * k, n))
            })
            .collect()
    }
}

/// `cos(m π / n)` reduced to keep the argument small.
fn cos_pi_frac(m: usize, n: usize) -> f64 {
    let r = m % (2 * n);
    (PI * r as f64 / n as f64).cos()
}

fn chebyshev_nodes(n: usize) -> Vec<f64> {
    // sin form gives exact antisymmetry and an exact zero at j = N/2.
    (0..=n)
        .map(|j| (PI * (n as f64 - 2.0 * j as f64) / (2.0 * n as f64)).sin())
        .collect()
}

fn clenshaw_curtis_weights(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let mut w = vec![0.0; n + 1];
    w[0] = 1.0 / (nf * nf - 1.0);
    w[n] = w[0];
    for (j, wj) in w.iter_mut().enumerate().take(n).skip(1) {
        let theta = PI * j as f64 / nf;
        let mut v = 1.0;
        for k in 1..n / 2 {
            let kf = k as f64;
            v -= 2.0 * (2.0 * kf * theta).cos() / (4.0 * kf * kf - 1.0);
        }
        v -= (nf * theta).cos() / (nf * nf - 1.0);
        *wj = 2.0 * v / nf;
    }
    w
}

/// Differentiation matrices of orders 1..=4 via the recursion
/// `D⁽ˡ⁾_ij = l/(y_i − y_j) · (c_i/c_j · D⁽ˡ⁻¹⁾_ii − D⁽ˡ⁻¹⁾_ij)`, with each
/// diagonal recomputed as the negative off-diagonal row sum. Only the top
/// half of the rows is computed; the rest follow from centro-symmetry, so
/// parity is preserved exactly.
fn differentiation_matrices(n: usize) -> [DMatrix<f64>; 4] {
    let nf = n as f64;
    let m = n + 1;
    let c = |i: usize| {
        let s = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
        if i == 0 || i == n {
            2.0 * s
        } else {
            s
        }
    };
    // y_i - y_j = 2 sin((i+j)π/2N) sin((j-i)π/2N), free of cancellation.
    let inv_dx = |i: usize, j: usize| {
        1.0 / (2.0
            * (PI * (i + j) as f64 / (2.0 * nf)).sin()
            * (PI * (j as f64 - i as f64) / (2.0 * nf)).sin())
    };
    let half = n / 2;
    let mut prev = DMatrix::<f64>::identity(m, m);
    let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(4);
    for l in 1..=4 {
        let lf = l as f64;
        let mut d = DMatrix::<f64>::zeros(m, m);
        for i in 0..=half {
            let pii = prev[(i, i)];
            for j in 0..m {
                if i != j {
                    d[(i, j)] = lf * inv_dx(i, j) * (c(i) / c(j) * pii - prev[(i, j)]);
                }
            }
        }
        negative_sum_diagonal(&mut d, half);
        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
        for i in half + 1..m {
            for j in 0..m {
                d[(i, j)] = sign * d[(n - i, n - j)];
            }
        }
        out.push(d.clone());
        prev = d;
    }
    let mut it = out.into_iter();
    [
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    ]
}

fn negative_sum_diagonal(d: &mut DMatrix<f64>, last_row: usize) {
    let m = d.ncols();
    let mut off = Vec::with_capacity(m);
    for i in 0..=last_row {
        off.clear();
        off.extend((0..m).filter(|&j| j != i).map(|j| d[(i, j)]));
        // Sum smallest-magnitude entries first.
        off.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        d[(i, i)] = -off.iter().sum::<f64>();
    }
}

/// Complex-valued function of `y ∈ [-1, 1]` sampled on a [`Grid`], tagged
/// with its transverse wavenumber `n̂ = n / L`.
#[derive(Clone, Debug)]
pub struct ModeProfile {
    grid: Arc<Grid>,
    samples: Vec<C64>,
    nhat: f64,
}

impl ModeProfile {
    pub fn new(grid: Arc<Grid>, samples: Vec<C64>, nhat: f64) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(LabError::param(
                "samples",
                format!("expected {} samples, got {}", grid.len(), samples.len()),
            ));
        }
        if !nhat.is_finite() {
            return Err(LabError::param("nhat", "wavenumber must be finite"));
        }
        Ok(ModeProfile {
            grid,
            samples,
            nhat,
        })
    }

    pub fn zeros(grid: Arc<Grid>, nhat: f64) -> Self {
        let samples = vec![C64::new(0.0, 0.0); grid.len()];
        ModeProfile {
            grid,
            samples,
            nhat,
        }
    }

    pub fn from_fn(grid: Arc<Grid>, nhat: f64, f: impl Fn(f64) -> C64) -> Self {
        let samples = grid.nodes().iter().map(|&y| f(y)).collect();
        ModeProfile {
            grid,
            samples,
            nhat,
        }
    }

    pub fn from_real_fn(grid: Arc<Grid>, nhat: f64, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, nhat, |y| C64::new(f(y), 0.0))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [C64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<C64> {
        self.samples
    }

    pub fn nhat(&self) -> f64 {
        self.nhat
    }

    pub fn with_nhat(mut self, nhat: f64) -> Self {
        self.nhat = nhat;
        self
    }

    pub fn same_grid(&self, other: &ModeProfile) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.n == other.grid.n
    }

    /// Derivative of order `k ∈ 1..=4`.
    pub fn derivative(&self, k: usize) -> Result<ModeProfile> {
        self.grid.diff_matrix(k)?;
        Ok(self.derivative_unchecked(k))
    }

    pub(crate) fn derivative_unchecked(&self, k: usize) -> ModeProfile {
        ModeProfile {
            grid: Arc::clone(&self.grid),
            samples: self.grid.apply(k, &self.samples),
            nhat: self.nhat,
        }
    }

    pub fn integral(&self) -> C64 {
        self.grid.quadrature(&self.samples)
    }

    /// `∫ |p|² dy`.
    pub fn norm_sq(&self) -> f64 {
        let abs2: Vec<f64> = self.samples.iter().map(|s| s.norm_sqr()).collect();
        self.grid.quadrature_real(&abs2)
    }

    /// `∫ w(y) |p|² dy` for a real weight.
    pub fn weighted_norm_sq(&self, w: impl Fn(f64) -> f64) -> f64 {
        let v: Vec<f64> = self
            .samples
            .iter()
            .zip(self.grid.nodes())
            .map(|(s, &y)| w(y) * s.norm_sqr())
            .collect();
        self.grid.quadrature_real(&v)
    }

    /// `∫ p · conj(q) dy`.
    pub fn inner(&self, other: &ModeProfile) -> C64 {
        let prod: Vec<C64> = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a * b.conj())
            .collect();
        self.grid.quadrature(&prod)
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.norm()))
    }

    pub fn evaluate(&self, y: f64) -> C64 {
        self.grid.interpolate(&self.samples, y)
    }

    /// Resamples the interpolant on another grid.
    pub fn resample(&self, target: &Arc<Grid>) -> ModeProfile {
        if target.n == self.grid.n {
            return ModeProfile {
                grid: Arc::clone(target),
                samples: self.samples.clone(),
                nhat: self.nhat,
            };
        }
        let samples = target
            .nodes()
            .iter()
            .map(|&y| self.grid.interpolate(&self.samples, y))
            .collect();
        ModeProfile {
            grid: Arc::clone(target),
            samples,
            nhat: self.nhat,
        }
    }

    /// `y ↦ p(-y)`.
    pub fn reflect(&self) -> ModeProfile {
        let n = self.grid.n;
        let samples = (0..=n).map(|j| self.samples[n - j]).collect();
        ModeProfile {
            grid: Arc::clone(&self.grid),
            samples,
            nhat: self.nhat,
        }
    }

    pub fn conj(&self) -> ModeProfile {
        self.map(|s| s.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> ModeProfile {
        ModeProfile {
            grid: Arc::clone(&self.grid),
            samples: self.samples.iter().map(|&s| f(s)).collect(),
            nhat: self.nhat,
        }
    }

    /// Pointwise map with access to the node coordinate.
    pub fn map_with_y(&self, f: impl Fn(f64, C64) -> C64) -> ModeProfile {
        ModeProfile {
            grid: Arc::clone(&self.grid),
            samples: self
                .samples
                .iter()
                .zip(self.grid.nodes())
                .map(|(&s, &y)| f(y, s))
                .collect(),
            nhat: self.nhat,
        }
    }

    pub fn zip_with(&self, other: &ModeProfile, f: impl Fn(C64, C64) -> C64) -> ModeProfile {
        debug_assert_eq!(self.samples.len(), other.samples.len());
        ModeProfile {
            grid: Arc::clone(&self.grid),
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            nhat: self.nhat,
        }
    }

    pub fn scale(&self, c: C64) -> ModeProfile {
        self.map(|s| s * c)
    }

    /// Max-norm of `self - other`.
    pub fn max_diff(&self, other: &ModeProfile) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    pub fn cumulative_integral(&self) -> ModeProfile {
        ModeProfile {
            grid: Arc::clone(&self.grid),
            samples: self.grid.cumulative_integral(&self.samples),
            nhat: self.nhat,
        }
    }
}

impl Add for &ModeProfile {
    type Output = ModeProfile;
    fn add(self, rhs: &ModeProfile) -> ModeProfile {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &ModeProfile {
    type Output = ModeProfile;
    fn sub(self, rhs: &ModeProfile) -> ModeProfile {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Neg for &ModeProfile {
    type Output = ModeProfile;
    fn neg(self) -> ModeProfile {
        self.map(|s| -s)
    }
}

impl Mul<C64> for &ModeProfile {
    type Output = ModeProfile;
    fn mul(self, rhs: C64) -> ModeProfile {
        self.scale(rhs)
    }
}

impl Mul<f64> for &ModeProfile {
    type Output = ModeProfile;
    fn mul(self, rhs: f64) -> ModeProfile {
        self.map(|s| s * rhs)
    }
}

/// Nodal samples of the `k`-th derivative of the interpolant of `p`.
pub fn differentiate(p: &ModeProfile, k: usize) -> Result<ModeProfile> {
    p.derivative(k)
}

/// Clenshaw–Curtis approximation of `∫_{-1}^{1} p dy`.
pub fn integrate(p: &ModeProfile) -> C64 {
    p.integral()
}

/// Multiplier of `√β` in the resolution rule.
pub const RESOLUTION_FACTOR: f64 = 24.0;

/// Node count for a boundary layer of thickness `1/β`:
/// `N = max(64, ceil(24 √β))`, rounded up to even and capped at [`MAX_NODES`].
pub fn resolution_for_beta(beta: f64) -> usize {
    let n = (RESOLUTION_FACTOR * beta.max(0.0).sqrt()).ceil() as usize;
    let n = n.max(64);
    (n + n % 2).min(MAX_NODES)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton iteration on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(g: &Arc<Grid>, f: impl Fn(f64) -> f64) -> ModeProfile {
        ModeProfile::from_real_fn(Arc::clone(g), 0.0, f)
    }

    #[test]
    fn coarse_nodes_are_exact() {
        let g = build_grid(8).unwrap();
        assert_eq!(g.nodes()[0], 1.0);
        assert_eq!(g.nodes()[4], 0.0);
        assert_eq!(g.nodes()[8], -1.0);
        assert!(g.nodes().windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn rejects_small_or_odd() {
        assert!(build_grid(6).is_err());
        assert!(build_grid(17).is_err());
        assert!(build_grid(4096).is_err());
    }

    #[test]
    fn cube_derivative() {
        let g = build_grid(16).unwrap();
        let d = differentiate(&re(&g, |y| y * y * y), 1).unwrap();
        for (s, &y) in d.samples().iter().zip(g.nodes()) {
            assert!((s.re - 3.0 * y * y).abs() < 1e-12);
        }
    }

    #[test]
    fn fourth_derivative_of_quartic() {
        let g = build_grid(16).unwrap();
        let d = differentiate(&re(&g, |y| y.powi(4)), 4).unwrap();
        // Relative to the exact value; the absolute floor at N = 16 is ~1e-9.
        assert!(d.samples().iter().all(|s| (s.re / 24.0 - 1.0).abs() < 1e-10 && s.im == 0.0));
    }

    #[test]
    fn exponential_derivative() {
        let g = build_grid(32).unwrap();
        let d = differentiate(&re(&g, f64::exp), 1).unwrap();
        let err = d
            .samples()
            .iter()
            .zip(g.nodes())
            .fold(0.0f64, |m, (s, &y)| m.max((s.re - y.exp()).abs()));
        assert!(err < 1e-12, "err = {err:e}");
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let g = build_grid(16).unwrap();
        let p = re(&g, |_| 3.5);
        for k in 1..=4 {
            assert!(differentiate(&p, k).unwrap().max_abs() < 1e-8);
        }
        assert!(differentiate(&p, 0).is_err());
        assert!(differentiate(&p, 5).is_err());
    }

    #[test]
    fn quadrature_examples() {
        let g = build_grid(16).unwrap();
        assert!((integrate(&re(&g, |_| 1.0)).re - 2.0).abs() < 1e-14);
        assert!(integrate(&re(&g, |y| y)).norm() < 1e-15);
        assert!((integrate(&re(&g, |y| 1.0 - y * y)).re - 4.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn interpolation_reproduces_nodes() {
        let g = build_grid(20).unwrap();
        let p = re(&g, |y| (3.0 * y).sin());
        for (j, &y) in g.nodes().iter().enumerate() {
            assert_eq!(p.evaluate(y), p.samples()[j]);
        }
        assert!((p.evaluate(0.123).re - (0.369f64).sin()).abs() < 1e-12);
    }

    #[test]
    fn cumulative_integral_of_polynomials() {
        let g = build_grid(16).unwrap();
        let p = re(&g, |y| y * y);
        let ip = p.cumulative_integral();
        for (s, &y) in ip.samples().iter().zip(g.nodes()) {
            assert!((s.re - (y.powi(3) + 1.0) / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn parity_preserved_by_differentiation() {
        let g = build_grid(32).unwrap();
        let p = re(&g, |y| (2.0 * y).cos() + y * y);
        let d = p.derivative(1).unwrap();
        let defect = (&d + &d.reflect()).max_abs();
        assert!(defect < 1e-12, "defect = {defect:e}");
    }

    #[test]
    fn coefficients_of_t3() {
        let g = build_grid(8).unwrap();
        let p = re(&g, |y| 4.0 * y.powi(3) - 3.0 * y);
        let c = g.chebyshev_coefficients(p.samples());
        for (k, ck) in c.iter().enumerate() {
            let expect = if k == 3 { 1.0 } else { 0.0 };
            assert!((ck.re - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn gauss_legendre_exactness() {
        let (x, w) = gauss_legendre(16);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        let m30: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((m30 - 2.0 / 31.0).abs() < 1e-14);
        let odd: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(7)).sum();
        assert!(odd.abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn integration_by_parts_duality(
            a in proptest::collection::vec(-1.0f64..1.0, 5),
            b in proptest::collection::vec(-1.0f64..1.0, 5),
        ) {
            // p, q vanish at ±1 and have degree ≤ N − 1.
            let g = Grid::shared(24).unwrap();
            let poly = |c: &[f64], y: f64| (1.0 - y * y) * c.iter().rev().fold(0.0, |acc, v| acc * y + v);
            let p = ModeProfile::from_real_fn(Arc::clone(&g), 0.0, |y| poly(&a, y));
            let q = ModeProfile::from_real_fn(Arc::clone(&g), 0.0, |y| poly(&b, y));
            let lhs = integrate(&p.derivative(1).unwrap().zip_with(&q, |x, y| x * y));
            let rhs = -integrate(&p.zip_with(&q.derivative(1).unwrap(), |x, y| x * y));
            let scale = lhs.norm().max(rhs.norm()).max(1e-300);
            proptest::prop_assert!((lhs - rhs).norm() <= 1e-10 * scale.max(1e-6));
        }

        #[test]
        fn odd_derivative_of_even_profile(c in proptest::collection::vec(-2.0f64..2.0, 4)) {
            let g = Grid::shared(32).unwrap();
            let p = ModeProfile::from_real_fn(Arc::clone(&g), 0.0, |y| c[0] + c[1] * y * y + c[2] * (c[3] * y).cos());
            let d = p.derivative(1).unwrap();
            proptest::prop_assert!((&d + &d.reflect()).max_abs() < 1e-12 * (1.0 + d.max_abs()));
        }
    }

    #[test]
    fn resolution_rule() {
        assert_eq!(resolution_for_beta(1.0), 64);
        assert_eq!(resolution_for_beta(100.0), 240);
        assert_eq!(resolution_for_beta(101.0) % 2, 0);
    }
}
