//! Boundary-layer construction of the clamped solution for intermediate
//! frequencies.
//!
//! A clamped solution is assembled from a slip solution `ψ_s`, Airy-type wall
//! layers `ψ_BL` with their slip correction `ψ_e`, and irrotational flows
//! `ψ_p = e^{n̂y} ± e^{−n̂y}` with their slip correction `ψ_r`:
//!
//! ```text
//! ψ = ψ_s + b (ψ_BL + ψ_e) + a (ψ_p + ψ_r)
//! ```
//!
//! separately for the even and odd parts of the forcing. The coefficients
//! `a`, `b` restore `ψ(±1) = ψ′(±1) = 0`.
//!
//! The layer profile is `G(ρ) = ∫_ρ^∞ sinh(k(s−ρ))/k · G̃(s) ds` with
//! `G̃(ρ) = Ai(C(ρ + s₀))`, `k = |n̂|/β`; it solves `G″ − k²G = G̃` and decays
//! faster than any exponential. It is evaluated panel by panel from the far
//! end, propagating `(G, G′)` exactly across each panel and adding the panel's
//! own contribution by Gauss–Legendre quadrature.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::airy::airy_ai;
use crate::channel::{base_flow, mode_rhs, BaseFlow, ChannelParams, ForcingMode};
use crate::error::{LabError, Result};
use crate::linear::{parity_split, residual_report, Boundary, ModeOperator, ResidualReport};
use crate::spectral::{gauss_legendre, resolution_for_beta, Grid, ModeProfile, C64};

/// Radius beyond which `e^ρ |G(ρ)|` is checked for boundedness.
pub const DECAY_RADIUS: f64 = 8.0;
const PANEL_WIDTH: f64 = 0.25;
const PANEL_ORDER: usize = 16;

/// `G` and its first four `ρ`-derivatives.
pub type Derivatives = [C64; 5];

#[derive(Clone, Debug)]
pub struct BoundaryLayerProfile {
    pub params: ChannelParams,
    /// `β = |3Φn̂/2|^{1/3}`.
    pub beta: f64,
    /// `k = |n̂| / β`.
    pub k: f64,
    /// `C = e^{±iπ/6}` (sign of `n`).
    pub airy_rotation: C64,
    /// `s₀ = 2βn̂/(3iΦ)`.
    pub shift: C64,
    pub rho_max: f64,
    /// Normalization: `1/G(0)` if `|G(0)| ≥ 1`, else `1`.
    pub c0: C64,
    pub g_wall: C64,
    pub g_wall_prime: C64,
    /// `max e^ρ |G(ρ)|` over `ρ ∈ [R, 3R]`.
    pub decay_bound: f64,
    /// `G` and `−G′` at the panel ends `ρ_j = j·Δ`.
    ends_g: Vec<C64>,
    ends_c: Vec<C64>,
    gl_nodes: Vec<f64>,
    gl_weights: Vec<f64>,
}

/// Default truncation of the layer integral, `max(40, 3β)`.
pub fn default_rho_max(beta: f64) -> f64 {
    40f64.max(3.0 * beta)
}

/// Builds the layer profile for mode `params.n`.
pub fn bl_profile(params: &ChannelParams, rho_max: f64) -> Result<BoundaryLayerProfile> {
    if params.n == 0 {
        return Err(LabError::param("n", "the boundary layer needs n != 0"));
    }
    if !(params.phi > 0.0) {
        return Err(LabError::param("phi", "the boundary layer needs phi > 0"));
    }
    if !(rho_max >= 2.0 * DECAY_RADIUS) || !rho_max.is_finite() {
        return Err(LabError::param(
            "rho_max",
            format!("need rho_max >= {} to reach the decay regime, got {rho_max}", 2.0 * DECAY_RADIUS),
        ));
    }
    let beta = params.beta();
    let k = params.nhat.abs() / beta;
    let sign = params.n.signum() as f64;
    let airy_rotation = C64::from_polar(1.0, sign * PI / 6.0);
    let shift = C64::new(0.0, -sign * k * k);
    let (gl_nodes, gl_weights) = gauss_legendre(PANEL_ORDER);
    let panels = (rho_max / PANEL_WIDTH).ceil() as usize;
    let mut prof = BoundaryLayerProfile {
        params: *params,
        beta,
        k,
        airy_rotation,
        shift,
        rho_max: panels as f64 * PANEL_WIDTH,
        c0: C64::new(1.0, 0.0),
        g_wall: C64::new(0.0, 0.0),
        g_wall_prime: C64::new(0.0, 0.0),
        decay_bound: 0.0,
        ends_g: vec![C64::new(0.0, 0.0); panels + 1],
        ends_c: vec![C64::new(0.0, 0.0); panels + 1],
        gl_nodes,
        gl_weights,
    };
    for j in (0..panels).rev() {
        let a = j as f64 * PANEL_WIDTH;
        let (g, c) = prof.propagate(a, j + 1)?;
        prof.ends_g[j] = g;
        prof.ends_c[j] = c;
    }
    prof.g_wall = prof.ends_g[0];
    prof.g_wall_prime = -prof.ends_c[0];
    prof.c0 = if prof.g_wall.norm() >= 1.0 {
        1.0 / prof.g_wall
    } else {
        C64::new(1.0, 0.0)
    };
    let mut bound = 0.0f64;
    for i in 0..=128 {
        let rho = DECAY_RADIUS * (1.0 + 2.0 * i as f64 / 128.0);
        bound = bound.max(rho.exp() * prof.g(rho)?.norm());
    }
    prof.decay_bound = bound;
    Ok(prof)
}

fn sinhc(k: f64, x: f64) -> f64 {
    // sinh(kx)/k, finite as k → 0.
    if k * x.abs() < 1e-8 {
        x
    } else {
        (k * x).sinh() / k
    }
}

impl BoundaryLayerProfile {
    /// `G̃`, `G̃′`, `G̃″` at `ρ`.
    pub fn g_tilde(&self, rho: f64) -> Result<[C64; 3]> {
        let c = self.airy_rotation;
        let z = c * (rho + self.shift);
        let v = airy_ai(z)?;
        Ok([v.ai, c * v.ai_prime, c * c * z * v.ai])
    }

    /// `(G, −G′)` at `rho`, which must lie at or left of panel end `end`.
    fn propagate(&self, rho: f64, end: usize) -> Result<(C64, C64)> {
        let b = end as f64 * PANEL_WIDTH;
        let d = b - rho;
        let k = self.k;
        let (mut s_part, mut c_part) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        if d > 0.0 {
            for (x, w) in self.gl_nodes.iter().zip(&self.gl_weights) {
                let t = 0.5 * d * (x + 1.0);
                let gt = self.g_tilde(rho + t)?[0];
                let wt = 0.5 * d * w;
                s_part += gt * (sinhc(k, t) * wt);
                c_part += gt * ((k * t).cosh() * wt);
            }
        }
        let (gb, cb) = (self.ends_g[end], self.ends_c[end]);
        let ch = (k * d).cosh();
        let g = s_part + gb * ch + cb * sinhc(k, d);
        let c = c_part + cb * ch + gb * (k * (k * d).sinh());
        Ok((g, c))
    }

    /// `G(ρ)` and `G′(ρ)`; zero beyond the truncation radius.
    pub fn g_and_slope(&self, rho: f64) -> Result<(C64, C64)> {
        if !(rho >= 0.0) {
            return Err(LabError::param("rho", format!("need rho >= 0, got {rho}")));
        }
        if rho >= self.rho_max {
            return Ok((C64::new(0.0, 0.0), C64::new(0.0, 0.0)));
        }
        let j = ((rho / PANEL_WIDTH).floor() as usize).min(self.ends_g.len() - 2);
        let (g, c) = self.propagate(rho, j + 1)?;
        Ok((g, -c))
    }

    pub fn g(&self, rho: f64) -> Result<C64> {
        Ok(self.g_and_slope(rho)?.0)
    }

    /// `G, G′, G″, G‴, G⁗` at `ρ`, the higher ones from `G″ = k²G + G̃`.
    pub fn derivatives(&self, rho: f64) -> Result<Derivatives> {
        let (g, g1) = self.g_and_slope(rho)?;
        let k2 = self.k * self.k;
        let gt = if rho >= self.rho_max {
            [C64::new(0.0, 0.0); 3]
        } else {
            self.g_tilde(rho)?
        };
        let g2 = g * k2 + gt[0];
        let g3 = g1 * k2 + gt[1];
        let g4 = g2 * k2 + gt[2];
        Ok([g, g1, g2, g3, g4])
    }

    /// `(ψ_BL⁺)′(1) = −β C₀ G′(0)`.
    pub fn wall_derivative(&self) -> C64 {
        -self.c0 * self.g_wall_prime * self.beta
    }

    /// `G`, `G′`, `G″`, `G‴` sampled at `ρ = β(1 − y)` on `grid`.
    pub fn on_y_grid(&self, grid: &Arc<Grid>) -> Result<[ModeProfile; 4]> {
        let mut cols: [Vec<C64>; 4] = std::array::from_fn(|_| Vec::with_capacity(grid.len()));
        for &y in grid.nodes() {
            let d = self.derivatives(self.beta * (1.0 - y))?;
            for (c, v) in cols.iter_mut().zip(d) {
                c.push(v);
            }
        }
        let nh = self.params.nhat;
        let mut it = cols.into_iter().map(|c| ModeProfile::new(Arc::clone(grid), c, nh));
        Ok([
            it.next().unwrap()?,
            it.next().unwrap()?,
            it.next().unwrap()?,
            it.next().unwrap()?,
        ])
    }

    /// Residual of `G″ − k²G = G̃` with `G″` from spectral differentiation
    /// of `G` sampled on a Chebyshev grid over `[0, rho_check]`, relative to
    /// `max |G̃|` there.
    pub fn relation_residual(&self, nodes: usize, rho_check: f64) -> Result<f64> {
        let grid = Grid::shared(nodes)?;
        let half = 0.5 * rho_check;
        let rho = |y: f64| half * (1.0 - y);
        let g = ModeProfile::new(
            Arc::clone(&grid),
            grid.nodes().iter().map(|&y| self.g(rho(y))).collect::<Result<Vec<_>>>()?,
            0.0,
        )?;
        let gt: Vec<C64> = grid
            .nodes()
            .iter()
            .map(|&y| self.g_tilde(rho(y)).map(|v| v[0]))
            .collect::<Result<_>>()?;
        // d/dρ = −(1/half) d/dy.
        let g2 = g.derivative(2)?;
        let k2 = self.k * self.k;
        let scale = gt.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let mut worst = 0.0f64;
        for ((d2, gv), t) in g2.samples().iter().zip(g.samples()).zip(&gt) {
            let r = d2 / (half * half) - gv * k2 - t;
            worst = worst.max(r.norm());
        }
        Ok(worst / scale.max(1e-300))
    }

    /// Plain-text table of `ρ`, `G`, `G′`, `G̃` (real and imaginary parts).
    pub fn table(&self, points: usize, rho_end: f64) -> Result<String> {
        let mut out = String::from("rho\tre_g\tim_g\tre_g1\tim_g1\tre_gt\tim_gt\n");
        let points = points.max(2);
        for i in 0..points {
            let rho = rho_end * i as f64 / (points - 1) as f64;
            let d = self.derivatives(rho)?;
            let gt = d[2] - d[0] * (self.k * self.k);
            writeln!(
                out,
                "{rho:.6e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}",
                d[0].re, d[0].im, d[1].re, d[1].im, gt.re, gt.im
            )
            .expect("write to string");
        }
        Ok(out)
    }
}

/// `|(ψ_BL⁺)′(1)| / β = |C₀ G′(0)|`.
pub fn wall_derivative_check(profile: &BoundaryLayerProfile) -> f64 {
    profile.wall_derivative().norm() / profile.beta
}

/// Order-4 truncated Taylor arithmetic in one real variable
/// (coefficients `f^{(m)}/m!`).
#[derive(Clone, Copy, Debug)]
struct Jet([f64; 5]);

impl Jet {
    fn var(x: f64, scale: f64) -> Jet {
        Jet([x, scale, 0.0, 0.0, 0.0])
    }

    fn constant(c: f64) -> Jet {
        Jet([c, 0.0, 0.0, 0.0, 0.0])
    }

    fn mul(self, o: Jet) -> Jet {
        let mut r = [0.0; 5];
        for (i, ri) in r.iter_mut().enumerate() {
            *ri = (0..=i).map(|j| self.0[j] * o.0[i - j]).sum();
        }
        Jet(r)
    }

    fn recip(self) -> Jet {
        let mut r = [0.0; 5];
        r[0] = 1.0 / self.0[0];
        for m in 1..5 {
            let s: f64 = (1..=m).map(|j| self.0[j] * r[m - j]).sum();
            r[m] = -s * r[0];
        }
        Jet(r)
    }

    fn exp(self) -> Jet {
        let mut r = [0.0; 5];
        r[0] = self.0[0].exp();
        for m in 1..5 {
            let s: f64 = (1..=m).map(|j| j as f64 * self.0[j] * r[m - j]).sum();
            r[m] = s / m as f64;
        }
        Jet(r)
    }

    fn add(self, o: Jet) -> Jet {
        let mut r = self.0;
        for (a, b) in r.iter_mut().zip(o.0) {
            *a += b;
        }
        Jet(r)
    }

    fn neg(self) -> Jet {
        Jet(self.0.map(|v| -v))
    }

    /// Plain derivatives `f, f′, …, f⁗`.
    fn derivatives(self) -> [f64; 5] {
        let fact = [1.0, 1.0, 2.0, 6.0, 24.0];
        let mut r = self.0;
        for (v, f) in r.iter_mut().zip(fact) {
            *v *= f;
        }
        r
    }
}

/// `exp(−1/t)` as a jet, zero where it underflows.
fn mollifier(t: Jet) -> Jet {
    if t.0[0] <= 1.0 / 700.0 {
        return Jet::constant(0.0);
    }
    t.recip().neg().exp()
}

/// `χ⁺` and its first four derivatives: `0` on `[−1, 1/4]`, `1` on
/// `[1/2, 1]`, and the smooth ramp `e(t)/(e(t) + e(1−t))`,
/// `e(t) = exp(−1/t)`, `t = 4y − 1`, in between.
pub fn cutoff_plus(y: f64) -> [f64; 5] {
    if y <= 0.25 {
        return [0.0; 5];
    }
    if y >= 0.5 {
        return [1.0, 0.0, 0.0, 0.0, 0.0];
    }
    let t = Jet::var(4.0 * y - 1.0, 4.0);
    let a = mollifier(t);
    let b = mollifier(Jet::constant(1.0).add(t.neg()));
    a.mul(a.add(b).recip()).derivatives()
}

/// `χ⁻(y) = χ⁺(−y)`, with derivatives.
pub fn cutoff_minus(y: f64) -> [f64; 5] {
    let mut d = cutoff_plus(-y);
    d[1] = -d[1];
    d[3] = -d[3];
    d
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub params: ChannelParams,
    pub grid: Arc<Grid>,
    pub psi_s: ModeProfile,
    pub psi_bl_e: ModeProfile,
    pub psi_bl_o: ModeProfile,
    pub psi_e_e: ModeProfile,
    pub psi_e_o: ModeProfile,
    pub psi_p_e: ModeProfile,
    pub psi_p_o: ModeProfile,
    pub psi_r_e: ModeProfile,
    pub psi_r_o: ModeProfile,
    pub a_e: C64,
    pub a_o: C64,
    pub b_e: C64,
    pub b_o: C64,
    pub total: ModeProfile,
    /// Vorticity of `total`, assembled from the parts.
    pub total_omega: ModeProfile,
    pub diagnostics: DecompositionDiagnostics,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecompositionDiagnostics {
    pub beta: f64,
    pub c0_abs: f64,
    /// `|(ψ_BL⁺)′(1)|`.
    pub wall_derivative: f64,
    /// `|(ψ_BL⁺)′(1)| / β`.
    pub wall_ratio: f64,
    pub decay_bound: f64,
    /// Relative violation of `ψ(±1) = ψ′(±1) = 0` by the total.
    pub bc_defect: f64,
    pub residual: ResidualReport,
    /// Largest slip-solve residual among `ψ_s`, `ψ_e`, `ψ_r`.
    pub slip_residual: f64,
    /// Smallest `|denominator|` of the coefficient formulas, over `β`.
    pub min_denominator: f64,
}

impl Decomposition {
    /// `ψ_s + b_o(ψ_BL^o + ψ_e^o) + b_e(ψ_BL^e + ψ_e^e) + a_o(ψ_p^o + ψ_r^o) + a_e(ψ_p^e + ψ_r^e)`.
    pub fn reassemble(&self) -> ModeProfile {
        let comb = |b: C64, x: &ModeProfile, y: &ModeProfile| (x + y).scale(b);
        let mut t = self.psi_s.clone();
        t = &t + &comb(self.b_o, &self.psi_bl_o, &self.psi_e_o);
        t = &t + &comb(self.b_e, &self.psi_bl_e, &self.psi_e_e);
        t = &t + &comb(self.a_o, &self.psi_p_o, &self.psi_r_o);
        &t + &comb(self.a_e, &self.psi_p_e, &self.psi_r_e)
    }
}

/// Layer parts on the y-grid: `χ⁺ψ⁺` and its vorticity, and `L(χ⁺ψ⁺)`.
struct LayerSamples {
    psi: Vec<C64>,
    omega: Vec<C64>,
    op: Vec<C64>,
}

fn layer_samples(profile: &BoundaryLayerProfile, grid: &Arc<Grid>) -> Result<LayerSamples> {
    let params = &profile.params;
    let (phi, nh) = (params.phi, params.nhat);
    let beta = profile.beta;
    let c0 = profile.c0;
    let i = C64::new(0.0, 1.0);
    let k2 = nh * nh;
    let len = grid.len();
    let zero = C64::new(0.0, 0.0);
    let mut out = LayerSamples {
        psi: vec![zero; len],
        omega: vec![zero; len],
        op: vec![zero; len],
    };
    for (j, &y) in grid.nodes().iter().enumerate() {
        let chi = cutoff_plus(y);
        if chi.iter().all(|v| *v == 0.0) {
            continue;
        }
        let rho = beta * (1.0 - y);
        let g = profile.derivatives(rho)?;
        let gt = if rho >= profile.rho_max {
            [zero; 3]
        } else {
            profile.g_tilde(rho)?
        };
        // ψ⁺ derivatives in y: d/dy = −β d/dρ.
        let mut p = [zero; 5];
        let mut bp = 1.0;
        for m in 0..5 {
            p[m] = c0 * g[m] * bp;
            bp *= -beta;
        }
        // w = (D² − n̂²)ψ⁺ = C₀β²G̃ and its y-derivative.
        let w = c0 * gt[0] * (beta * beta);
        let w1 = -c0 * gt[1] * (beta * beta * beta);
        let e = p[1] * (2.0 * chi[1]) + p[0] * chi[2];
        let e2 = p[0] * chi[4] + p[1] * (4.0 * chi[3]) + p[2] * (5.0 * chi[2]) + p[3] * (2.0 * chi[1]);
        let he = e2 - e * k2;
        let u = 0.75 * phi * (1.0 - y * y);
        let upp = -1.5 * phi;
        let s = 1.0 - y;
        let op = -i * nh * upp * chi[0] * p[0] - i * (0.75 * phi * nh * s * s) * chi[0] * w + i * nh * u * e
            - w1 * (2.0 * chi[1])
            - w * chi[2]
            - he;
        out.psi[j] = p[0] * chi[0];
        out.omega[j] = w * chi[0] + e;
        out.op[j] = op;
    }
    Ok(out)
}

fn wall_slope(grid: &Grid, samples: &[C64]) -> C64 {
    let d1 = grid.diff_matrix(1).expect("order 1");
    samples
        .iter()
        .enumerate()
        .fold(C64::new(0.0, 0.0), |acc, (j, v)| acc + v * d1[(0, j)])
}

fn symmetric(grid: &Arc<Grid>, half: &[C64], nhat: f64, sign: f64) -> ModeProfile {
    let n = grid.n();
    let s = (0..=n).map(|j| half[j] + half[n - j] * sign).collect();
    ModeProfile::new(Arc::clone(grid), s, nhat).expect("grid length")
}

/// Assembles the decomposition for forcing `F` of mode `params.n`.
pub fn assemble_decomposition(params: &ChannelParams, base: &BaseFlow, forcing: &ForcingMode) -> Result<Decomposition> {
    let profile = bl_profile(params, default_rho_max(params.beta()))?;
    assemble_with_profile(params, base, forcing, &profile)
}

pub fn assemble_with_profile(
    params: &ChannelParams,
    base: &BaseFlow,
    forcing: &ForcingMode,
    profile: &BoundaryLayerProfile,
) -> Result<Decomposition> {
    if base.phi != params.phi {
        return Err(LabError::param("base", "base flow and parameters disagree on phi"));
    }
    if params.nhat.abs() > 700.0 {
        return Err(LabError::param("n", "irrotational part overflows for |nhat| > 700"));
    }
    let beta = profile.beta;
    let grid = Grid::shared(resolution_for_beta(beta))?;
    let base = base_flow(params.phi, &grid)?;
    let nh = params.nhat;
    let f = mode_rhs(forcing).resample(&grid).with_nhat(nh);
    let (f_e, f_o) = parity_split(&f);
    let op = ModeOperator::for_params(params, &base, &grid, Boundary::Slip)?;
    let zero = ModeProfile::zeros(Arc::clone(&grid), nh);

    let layer = layer_samples(profile, &grid)?;
    let psi_bl = [
        symmetric(&grid, &layer.psi, nh, 1.0),
        symmetric(&grid, &layer.psi, nh, -1.0),
    ];
    let omega_bl = [
        symmetric(&grid, &layer.omega, nh, 1.0),
        symmetric(&grid, &layer.omega, nh, -1.0),
    ];
    let q = [
        -&symmetric(&grid, &layer.op, nh, 1.0),
        -&symmetric(&grid, &layer.op, nh, -1.0),
    ];
    let psi_p = [
        ModeProfile::from_real_fn(Arc::clone(&grid), nh, |y| 2.0 * (nh * y).cosh()),
        ModeProfile::from_real_fn(Arc::clone(&grid), nh, |y| 2.0 * (nh * y).sinh()),
    ];
    let i_nh_upp = C64::new(0.0, nh * -1.5 * params.phi);

    let s_all = op.solve(&f)?;
    let mut slip_residual = s_all.residual;
    let mut parts: Vec<[ModeProfile; 4]> = Vec::new();
    let mut omegas: Vec<[ModeProfile; 2]> = Vec::new();
    let mut coeffs = [(C64::new(0.0, 0.0), C64::new(0.0, 0.0)); 2];
    let mut min_den = f64::INFINITY;
    for (par, f_par) in [&f_e, &f_o].into_iter().enumerate() {
        if f_par.max_abs() == 0.0 {
            parts.push([zero.clone(), zero.clone(), zero.clone(), zero.clone()]);
            omegas.push([zero.clone(), zero.clone()]);
            continue;
        }
        let s = op.solve(f_par)?;
        let e = op.solve(&q[par])?;
        let r = op.solve(&psi_p[par].scale(i_nh_upp))?;
        slip_residual = slip_residual.max(s.residual).max(e.residual).max(r.residual);
        let bl_wall = psi_bl[par].samples()[0];
        let p_wall = psi_p[par].samples()[0];
        let ds = wall_slope(&grid, s.psi.samples());
        let dbl = wall_slope(&grid, psi_bl[par].samples());
        let de = wall_slope(&grid, e.psi.samples());
        let dp = wall_slope(&grid, psi_p[par].samples());
        let dr = wall_slope(&grid, r.psi.samples());
        let den = bl_wall * (dp + dr) / p_wall - dbl - de;
        min_den = min_den.min(den.norm() / beta);
        if den.norm() < 1e-6 * beta {
            return Err(LabError::CoefficientSystem {
                denominator: den.norm(),
                threshold: 1e-6 * beta,
            });
        }
        let b = ds / den;
        let a = -bl_wall * b / p_wall;
        coeffs[par] = (a, b);
        omegas.push([e.omega.clone(), r.omega.clone()]);
        parts.push([psi_bl[par].clone(), e.psi, psi_p[par].clone(), r.psi]);
    }
    let [ref bl_e, ref e_e, ref p_e, ref r_e] = parts[0];
    let [ref bl_o, ref e_o, ref p_o, ref r_o] = parts[1];
    let ((a_e, b_e), (a_o, b_o)) = (coeffs[0], coeffs[1]);
    let mut dec = Decomposition {
        params: *params,
        grid: Arc::clone(&grid),
        psi_s: s_all.psi.clone(),
        psi_bl_e: bl_e.clone(),
        psi_bl_o: bl_o.clone(),
        psi_e_e: e_e.clone(),
        psi_e_o: e_o.clone(),
        psi_p_e: p_e.clone(),
        psi_p_o: p_o.clone(),
        psi_r_e: r_e.clone(),
        psi_r_o: r_o.clone(),
        a_e,
        a_o,
        b_e,
        b_o,
        total: zero.clone(),
        total_omega: zero.clone(),
        diagnostics: DecompositionDiagnostics {
            beta,
            c0_abs: profile.c0.norm(),
            wall_derivative: profile.wall_derivative().norm(),
            wall_ratio: wall_derivative_check(profile),
            decay_bound: profile.decay_bound,
            bc_defect: 0.0,
            residual: ResidualReport {
                equation: 0.0,
                relation: 0.0,
            },
            slip_residual,
            min_denominator: min_den,
        },
    };
    dec.total = dec.reassemble();
    let mut w = s_all.omega.clone();
    for (par, (a, b)) in coeffs.iter().enumerate() {
        if parts[par][0].max_abs() == 0.0 {
            continue;
        }
        let [ref we, ref wr] = omegas[par];
        let obl = &omega_bl[par];
        w = &w + &(obl + we).scale(*b);
        w = &w + &wr.scale(*a);
    }
    dec.total_omega = w;
    dec.diagnostics.residual = residual_report(&dec.total, &dec.total_omega, &f, &base);
    dec.diagnostics.bc_defect = crate::linear::bc_defect(&dec.total, Boundary::Clamped);
    Ok(dec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{apply_operator, solve_clamped};
    use crate::spectral::build_grid;

    fn params(phi: f64, n: i64) -> ChannelParams {
        ChannelParams::new(phi, 1.0, n).unwrap()
    }

    /// Closed form `G(ρ) = ∫_ρ^∞ sinh(k(s−ρ))/k G̃(s) ds` by composite
    /// Simpson quadrature on a fine uniform grid.
    fn g_oracle(p: &BoundaryLayerProfile, rho: f64) -> C64 {
        let end = rho + 30.0;
        let m = 6000;
        let h = (end - rho) / m as f64;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..=m {
            let s = rho + i as f64 * h;
            let w = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += p.g_tilde(s).unwrap()[0] * (w * sinhc(p.k, s - rho));
        }
        acc * (h / 3.0)
    }

    #[test]
    fn profile_matches_integral_oracle() {
        for (phi, n) in [(1e3, 1), (1e5, 3), (1e5, -2), (1e4, 40)] {
            let p = bl_profile(&params(phi, n), 40.0).unwrap();
            for rho in [0.0, 0.3, 1.7, 4.0, 9.5] {
                let g = p.g(rho).unwrap();
                let o = g_oracle(&p, rho);
                assert!((g - o).norm() < 1e-9 * (1.0 + o.norm()), "phi={phi} n={n} rho={rho}: {g} vs {o}");
            }
        }
    }

    #[test]
    fn defining_relation_and_decay() {
        for phi in [1e3, 1e5] {
            let p = bl_profile(&params(phi, 1), default_rho_max(params(phi, 1).beta())).unwrap();
            let r = p.relation_residual(128, 16.0).unwrap();
            assert!(r < 1e-9, "phi={phi}: {r:e}");
            assert!(p.decay_bound.is_finite() && p.decay_bound > 0.0);
            assert!((p.c0 * p.g_wall).norm() <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn g_tilde_is_rotated_airy() {
        let pr = params(1e5, 2);
        let p = bl_profile(&pr, 40.0).unwrap();
        let c = C64::from_polar(1.0, PI / 6.0);
        // 2βn̂/(3iΦ) = −i · 2βn̂/(3Φ)
        let s_direct = C64::new(0.0, -2.0 * p.beta * pr.nhat / (3.0 * pr.phi));
        assert!((p.shift - s_direct).norm() < 1e-12 * s_direct.norm());
        for rho in [0.0, 1.0, 2.5] {
            let direct = airy_ai(c * (rho + s_direct)).unwrap().ai;
            assert!((p.g_tilde(rho).unwrap()[0] - direct).norm() < 1e-14);
        }
    }

    #[test]
    fn layer_equation_holds() {
        // A⁺ G̃(β(1−y)) = 0 with A⁺ = i(3Φn̂/2)(1−y) − (D² − n̂²).
        for n in [3i64, -3] {
            let pr = params(1e4, n);
            let p = bl_profile(&pr, 40.0).unwrap();
            for y in [0.99, 0.9, 0.7] {
                let rho = p.beta * (1.0 - y);
                let gt = p.g_tilde(rho).unwrap();
                let lhs = C64::new(0.0, 1.5 * pr.phi * pr.nhat * (1.0 - y)) * gt[0] - (gt[2] * p.beta * p.beta - gt[0] * pr.nhat * pr.nhat);
                assert!(lhs.norm() < 1e-9 * gt[2].norm() * p.beta * p.beta, "n={n} y={y}");
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(bl_profile(&params(1e4, 0), 40.0).is_err());
        assert!(bl_profile(&params(0.0, 1), 40.0).is_err());
        assert!(bl_profile(&params(1e4, 1), 10.0).is_err());
    }

    #[test]
    fn cutoff_properties() {
        let g = build_grid(64).unwrap();
        for (j, &y) in g.nodes().iter().enumerate() {
            let p = cutoff_plus(y)[0];
            if y >= 0.5 {
                assert_eq!(p, 1.0);
            }
            if y <= 0.25 {
                assert_eq!(p, 0.0);
            }
            assert_eq!(cutoff_minus(y)[0], cutoff_plus(g.nodes()[g.mirror(j)])[0]);
        }
        // Derivatives against central differences.
        for y in [0.3, 0.37, 0.44] {
            let d = cutoff_plus(y);
            for m in 0..4 {
                let h = 1e-5;
                let fd = (cutoff_plus(y + h)[m] - cutoff_plus(y - h)[m]) / (2.0 * h);
                assert!((fd - d[m + 1]).abs() < 1e-5 * (1.0 + d[m + 1].abs()), "m={m} y={y}");
            }
        }
    }

    #[test]
    fn conjugate_modes_have_conjugate_walls() {
        let a = bl_profile(&params(1e5, 2), 40.0).unwrap();
        let b = bl_profile(&params(1e5, -2), 40.0).unwrap();
        assert!((a.wall_derivative().conj() - b.wall_derivative()).norm() < 1e-12 * a.wall_derivative().norm());
        assert_eq!(wall_derivative_check(&a), wall_derivative_check(&b));
        assert!(wall_derivative_check(&a) > 0.0);
    }

    #[test]
    fn layer_operator_matches_collocation() {
        // Moderate β so the collocation fourth derivative is still accurate.
        let pr = params(1e3, 1);
        let p = bl_profile(&pr, 40.0).unwrap();
        let g = build_grid(512).unwrap();
        let s = layer_samples(&p, &g).unwrap();
        let base = base_flow(pr.phi, &g).unwrap();
        let psi = ModeProfile::new(Arc::clone(&g), s.psi.clone(), pr.nhat).unwrap();
        let lop = apply_operator(&psi, &base);
        let exact = ModeProfile::new(Arc::clone(&g), s.op.clone(), pr.nhat).unwrap();
        // The collocation fourth derivative loses ~N⁸ε at the walls; compare inside.
        let err = (0..g.len())
            .filter(|&j| g.nodes()[j].abs() < 0.9)
            .map(|j| (lop.samples()[j] - exact.samples()[j]).norm())
            .fold(0.0, f64::max)
            / exact.max_abs();
        // The smooth ramp converges slowly under collocation.
        assert!(err < 1e-3, "err = {err:e}");
    }

    #[test]
    fn layer_operator_matches_leibniz_expansion() {
        // Direct product-rule expansion of L(χψ⁺), without using A⁺ψ⁺ = 0.
        for (phi, n) in [(1e4, 1i64), (1e5, -3)] {
            let pr = params(phi, n);
            let p = bl_profile(&pr, default_rho_max(pr.beta())).unwrap();
            let g = build_grid(128).unwrap();
            let s = layer_samples(&p, &g).unwrap();
            let nh = pr.nhat;
            let i = C64::new(0.0, 1.0);
            let mut worst = 0.0f64;
            let mut scale = 0.0f64;
            for (j, &y) in g.nodes().iter().enumerate() {
                let chi = cutoff_plus(y);
                let d = p.derivatives(p.beta * (1.0 - y)).unwrap();
                let ps: Vec<C64> = (0..5).map(|m| p.c0 * d[m] * (-p.beta).powi(m as i32)).collect();
                let prod = |order: usize| -> C64 {
                    (0..=order)
                        .map(|k| ps[order - k] * (chi[k] * binom_row(order)[k]))
                        .sum()
                };
                let (v0, v2, v4) = (prod(0), prod(2), prod(4));
                let u = 0.75 * phi * (1.0 - y * y);
                let upp = -1.5 * phi;
                let h = v2 - v0 * (nh * nh);
                let hh = v4 - v2 * (2.0 * nh * nh) + v0 * nh.powi(4);
                let expect = -i * nh * upp * v0 + i * nh * u * h - hh;
                worst = worst.max((expect - s.op[j]).norm());
                scale = scale.max(expect.norm());
                assert!((v0 - s.psi[j]).norm() <= 1e-14 * (1.0 + v0.norm()));
                assert!((h - s.omega[j]).norm() <= 1e-9 * (1.0 + h.norm()));
            }
            assert!(worst < 1e-9 * scale, "phi={phi} n={n}: {worst:e} of {scale:e}");
        }
    }

    fn binom_row(order: usize) -> [f64; 5] {
        match order {
            0 => [1.0, 0.0, 0.0, 0.0, 0.0],
            1 => [1.0, 1.0, 0.0, 0.0, 0.0],
            2 => [1.0, 2.0, 1.0, 0.0, 0.0],
            3 => [1.0, 3.0, 3.0, 1.0, 0.0],
            _ => [1.0, 4.0, 6.0, 4.0, 1.0],
        }
    }

    #[test]
    fn zero_forcing_gives_zero_parts() {
        let pr = params(1e5, 1);
        let g = build_grid(64).unwrap();
        let base = base_flow(pr.phi, &g).unwrap();
        let f = ForcingMode::new(ModeProfile::zeros(Arc::clone(&g), pr.nhat), ModeProfile::zeros(Arc::clone(&g), pr.nhat)).unwrap();
        let d = assemble_decomposition(&pr, &base, &f).unwrap();
        assert_eq!(d.total.max_abs(), 0.0);
        assert_eq!(d.b_e.norm() + d.b_o.norm() + d.a_e.norm() + d.a_o.norm(), 0.0);
        assert_eq!(d.psi_bl_e.max_abs() + d.psi_e_o.max_abs() + d.psi_r_e.max_abs(), 0.0);
    }

    #[test]
    fn decomposition_matches_clamped_solve() {
        let pr = params(1e5, 1);
        let beta = pr.beta();
        let g = Grid::shared(resolution_for_beta(beta)).unwrap();
        let base = base_flow(pr.phi, &g).unwrap();
        let f = ForcingMode::new(
            ModeProfile::from_fn(Arc::clone(&g), pr.nhat, |y| C64::new((2.0 * y).sin() + 0.3, y * y)),
            ModeProfile::from_fn(Arc::clone(&g), pr.nhat, |y| C64::new(y.cos(), -0.5 * y)),
        )
        .unwrap();
        let d = assemble_decomposition(&pr, &base, &f).unwrap();
        let c = solve_clamped(&pr, &base, &g, &mode_rhs(&f)).unwrap();
        let err = d.total.max_diff(&c.psi) / d.total.max_abs();
        assert!(err < 1e-6, "err = {err:e}");
        assert!(d.diagnostics.bc_defect < 1e-10, "{:?}", d.diagnostics);
        assert!(d.diagnostics.residual.max() < 1e-7, "{:?}", d.diagnostics);
        assert!(d.diagnostics.slip_residual < 1e-8, "{:?}", d.diagnostics);
        assert!(d.reassemble().max_diff(&d.total) == 0.0);
    }
}
