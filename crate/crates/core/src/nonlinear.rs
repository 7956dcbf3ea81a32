//! Picard iteration for the steady perturbation of Poiseuille flow in a
//! periodic channel, one stream function per Fourier mode `|n| ≤ N_x`.
//!
//! Negative modes are never solved for: `ψ_{−n} = conj(ψ_n)` for real
//! fields, and the operator for `−n` is the conjugate of the one for `n`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::{base_flow, divergence, mode_rhs, velocity_of, vorticity_of, BaseFlow, ChannelParams, ForcingMode};
use crate::error::{LabError, Result};
use crate::linear::{solve_zero_mode_with_vorticity, Boundary, ModeOperator};
use crate::spectral::{resolution_for_beta, Grid, ModeProfile, C64};

/// Default Fourier truncation.
pub const DEFAULT_NX: usize = 32;
/// Steps below this size are treated as rounding when measuring contraction.
pub const CONTRACTION_FLOOR: f64 = 1e-11;
const ABSOLUTE_FALLBACK: f64 = 1e-13;
const STAGNATION_RATIO: f64 = 0.999;
const STAGNATION_STEPS: usize = 5;
const DIVERGENCE_LIMIT: f64 = 1e100;

/// One stored Fourier mode of the velocity.
#[derive(Clone, Debug)]
pub struct VelocityMode {
    pub psi: ModeProfile,
    pub omega: ModeProfile,
    pub v1: ModeProfile,
    pub v2: ModeProfile,
}

impl VelocityMode {
    fn from_parts(psi: ModeProfile, omega: ModeProfile) -> Self {
        let (v1, v2) = velocity_of(&psi);
        VelocityMode { psi, omega, v1, v2 }
    }

    fn conj(&self, nhat: f64) -> Self {
        VelocityMode {
            psi: self.psi.conj().with_nhat(nhat),
            omega: self.omega.conj().with_nhat(nhat),
            v1: self.v1.conj().with_nhat(nhat),
            v2: self.v2.conj().with_nhat(nhat),
        }
    }
}

/// Velocity field truncated to modes `−N_x..=N_x` on a shared `y`-grid.
#[derive(Clone, Debug)]
pub struct VelocityField {
    pub l: f64,
    nx: usize,
    grid: Arc<Grid>,
    modes: Vec<VelocityMode>,
}

/// Violations of the field invariants, each a max over modes.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct FieldInvariants {
    pub reality: f64,
    pub divergence: f64,
    pub flux: f64,
    pub v2_zero_mode: f64,
}

impl VelocityField {
    pub fn zeros(l: f64, nx: usize, grid: &Arc<Grid>) -> Self {
        let psi = (0..=nx).map(|n| ModeProfile::zeros(Arc::clone(grid), n as f64 / l)).collect();
        Self::from_stream(l, psi).expect("zero field is valid")
    }

    /// Builds the field from `ψ_0, …, ψ_{N_x}`, taking `ω = (D² − n̂²)ψ`.
    pub fn from_stream(l: f64, psi: Vec<ModeProfile>) -> Result<Self> {
        let omega = psi.iter().map(vorticity_of).collect();
        Self::from_stream_and_vorticity(l, psi, omega)
    }

    pub fn from_stream_and_vorticity(l: f64, psi: Vec<ModeProfile>, omega: Vec<ModeProfile>) -> Result<Self> {
        if psi.is_empty() || psi.len() != omega.len() {
            return Err(LabError::param("modes", "need matching psi/omega for n = 0..=N_x"));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(LabError::param("L", format!("period parameter must be > 0, got {l}")));
        }
        let grid = Arc::clone(psi[0].grid());
        for (n, (p, w)) in psi.iter().zip(&omega).enumerate() {
            if !p.same_grid(&psi[0]) || !w.same_grid(&psi[0]) {
                return Err(LabError::param("modes", "all modes must share one grid"));
            }
            if (p.nhat() - n as f64 / l).abs() > 1e-12 * (1.0 + p.nhat().abs()) {
                return Err(LabError::param("modes", format!("mode {n} carries the wrong wavenumber")));
            }
        }
        let nx = psi.len() - 1;
        let positive: Vec<VelocityMode> = psi
            .into_iter()
            .zip(omega)
            .map(|(p, w)| VelocityMode::from_parts(p, w))
            .collect();
        let mut modes = Vec::with_capacity(2 * nx + 1);
        for n in (1..=nx).rev() {
            modes.push(positive[n].conj(-(n as f64) / l));
        }
        modes.extend(positive);
        Ok(VelocityField { l, nx, grid, modes })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Mode `n`, `|n| ≤ N_x`.
    pub fn mode(&self, n: i64) -> &VelocityMode {
        &self.modes[(n + self.nx as i64) as usize]
    }

    pub fn psi(&self, n: i64) -> &ModeProfile {
        &self.mode(n).psi
    }

    /// `(n, mode)` over all stored modes.
    pub fn iter(&self) -> impl Iterator<Item = (i64, &VelocityMode)> {
        let nx = self.nx as i64;
        self.modes.iter().enumerate().map(move |(i, m)| (i as i64 - nx, m))
    }

    pub fn scaled(&self, c: f64) -> Self {
        let psi = (0..=self.nx as i64).map(|n| self.psi(n) * c).collect();
        let omega = (0..=self.nx as i64).map(|n| &self.mode(n).omega * c).collect();
        Self::from_stream_and_vorticity(self.l, psi, omega).expect("same layout")
    }

    pub fn invariants(&self) -> FieldInvariants {
        let mut inv = FieldInvariants::default();
        for n in 1..=self.nx as i64 {
            let (p, m) = (self.mode(n), self.mode(-n));
            let scale = p.v1.max_abs().max(p.v2.max_abs()).max(1e-300);
            let d = m.v1.max_diff(&p.v1.conj()).max(m.v2.max_diff(&p.v2.conj()));
            inv.reality = inv.reality.max(d / scale);
        }
        let z = self.mode(0);
        inv.reality = inv.reality.max(z.psi.samples().iter().fold(0.0f64, |a, v| a.max(v.im.abs())) / z.psi.max_abs().max(1e-300));
        for (_, m) in self.iter() {
            let scale = m.v1.max_abs().max(m.v2.max_abs());
            if scale > 0.0 {
                let div = divergence(&m.v1, &m.v2).max_abs() / (scale * (1.0 + m.v1.nhat().abs()));
                inv.divergence = inv.divergence.max(div);
                inv.flux = inv.flux.max(m.v1.integral().norm() / scale);
            }
        }
        inv.v2_zero_mode = z.v2.max_abs();
        inv
    }

    /// `‖v‖_{H^k(Ω)}` for `k ∈ {0, 1, 2}` over the given modes, with
    /// `‖v‖² = 2Lπ Σ_n Σ_{|α|≤k} ‖∂^α v_n‖²`.
    fn sobolev(&self, k: usize, skip_zero: bool, components: [bool; 2]) -> f64 {
        let mut total = 0.0;
        for (n, m) in self.iter() {
            if skip_zero && n == 0 {
                continue;
            }
            let nh2 = m.psi.nhat() * m.psi.nhat();
            for (on, v) in components.iter().zip([&m.v1, &m.v2]) {
                if !on {
                    continue;
                }
                let mut dy = v.clone();
                for ay in 0..=k {
                    if ay > 0 {
                        dy = dy.derivative_unchecked(1);
                    }
                    // Σ over ax ≤ k − ay of n̂^{2ax}.
                    let weight: f64 = (0..=(k - ay)).map(|ax| nh2.powi(ax as i32)).sum();
                    total += weight * dy.norm_sq();
                }
            }
        }
        (2.0 * PI * self.l * total).sqrt()
    }

    pub fn l2(&self) -> f64 {
        self.sobolev(0, false, [true, true])
    }

    pub fn h1(&self) -> f64 {
        self.sobolev(1, false, [true, true])
    }

    pub fn h2(&self) -> f64 {
        self.sobolev(2, false, [true, true])
    }

    /// `‖Qv‖_{L²}`: the nonzero modes only.
    pub fn q_l2(&self) -> f64 {
        self.sobolev(0, true, [true, true])
    }

    /// `‖v₂‖_{H¹}`, the smallness gauge of the uniqueness probe.
    pub fn v2_h1(&self) -> f64 {
        self.sobolev(1, false, [false, true])
    }

    /// `‖v₁‖_{H¹}`, the alternative smallness gauge.
    pub fn v1_h1(&self) -> f64 {
        self.sobolev(1, false, [true, false])
    }

    /// Largest `‖ψ_n‖_∞`.
    pub fn sup_psi(&self) -> f64 {
        self.modes.iter().fold(0.0, |a, m| a.max(m.psi.max_abs()))
    }
}

/// Forcing modes `F_0, …, F_{N_x}`; negative modes are conjugates.
#[derive(Clone, Debug)]
pub struct ForcingField {
    pub l: f64,
    modes: Vec<ForcingMode>,
}

impl ForcingField {
    pub fn new(l: f64, modes: Vec<ForcingMode>) -> Result<Self> {
        if modes.is_empty() {
            return Err(LabError::param("forcing", "need at least the zero mode"));
        }
        for (n, m) in modes.iter().enumerate() {
            if !m.f1.same_grid(&modes[0].f1) {
                return Err(LabError::param("forcing", "all modes must share one grid"));
            }
            if (m.nhat() - n as f64 / l).abs() > 1e-12 * (1.0 + m.nhat().abs()) {
                return Err(LabError::param("forcing", format!("mode {n} carries the wrong wavenumber")));
            }
        }
        let z = &modes[0];
        let imag = z.f1.samples().iter().chain(z.f2.samples()).fold(0.0f64, |a, v| a.max(v.im.abs()));
        let scale = z.f1.max_abs().max(z.f2.max_abs());
        if imag > 1e-12 * scale.max(1e-300) && imag > 0.0 {
            return Err(LabError::param("forcing", "the zero mode of a real force must be real"));
        }
        Ok(ForcingField { l, modes })
    }

    pub fn zeros(l: f64, nx: usize, grid: &Arc<Grid>) -> Self {
        let modes = (0..=nx)
            .map(|n| {
                let nh = n as f64 / l;
                ForcingMode::new(ModeProfile::zeros(Arc::clone(grid), nh), ModeProfile::zeros(Arc::clone(grid), nh)).expect("same grid")
            })
            .collect();
        ForcingField { l, modes }
    }

    /// Smooth random force on modes `0..=active` (zero above), scaled to
    /// `‖F‖_{L²(Ω)} = norm`. Each component is a Chebyshev series with
    /// geometrically decaying random coefficients.
    pub fn random(l: f64, nx: usize, active: usize, grid: &Arc<Grid>, norm: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut field = Self::zeros(l, nx, grid);
        for n in 0..=active.min(nx) {
            let nh = n as f64 / l;
            let mut component = || {
                let coef: Vec<C64> = (0..8)
                    .map(|k| {
                        let decay = 0.5f64.powi(k);
                        let im = if n == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) };
                        C64::new(rng.gen_range(-1.0..1.0), im) * decay
                    })
                    .collect();
                ModeProfile::from_fn(Arc::clone(grid), nh, |y| {
                    let t = y.clamp(-1.0, 1.0).acos();
                    coef.iter().enumerate().map(|(k, c)| c * (k as f64 * t).cos()).sum()
                })
            };
            let f1 = component();
            let f2 = component();
            field.modes[n] = ForcingMode::new(f1, f2)?;
        }
        let current = field.l2();
        if current > 0.0 {
            field = field.scaled(norm / current);
        }
        Ok(field)
    }

    pub fn nx(&self) -> usize {
        self.modes.len() - 1
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.modes[0].f1.grid()
    }

    /// Mode `n ≥ 0`.
    pub fn mode(&self, n: usize) -> &ForcingMode {
        &self.modes[n]
    }

    pub fn scaled(&self, c: f64) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|m| ForcingMode::new(&m.f1 * c, &m.f2 * c).expect("same layout"))
            .collect();
        ForcingField { l: self.l, modes }
    }

    /// `‖F‖_{L²(Ω)}`, counting each `n > 0` twice for its conjugate.
    pub fn l2(&self) -> f64 {
        let s: f64 = self
            .modes
            .iter()
            .enumerate()
            .map(|(n, m)| {
                let w = if n == 0 { 1.0 } else { 2.0 };
                w * (m.f1.norm_sq() + m.f2.norm_sq())
            })
            .sum();
        (2.0 * PI * self.l * s).sqrt()
    }

    /// On another grid (spectral interpolation).
    pub fn resample(&self, grid: &Arc<Grid>) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|m| ForcingMode::new(m.f1.resample(grid), m.f2.resample(grid)).expect("same grid"))
            .collect();
        ForcingField { l: self.l, modes }
    }
}

/// How the quadratic term is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConvolutionMethod {
    /// Mode sums `Σ_m a_{n−m} b_m`.
    #[default]
    Direct,
    /// Zero-padded transform to physical `x`, pointwise product, and back
    /// (3/2 rule).
    Dealiased,
}

/// `(F_{1,n}, F_{2,n}) = (Σ_m v_{2,n−m} ω_m, −Σ_m v_{1,n−m} ω_m)` for
/// `n = −N_x..=N_x` (index `n + N_x`).
pub fn convolution_forcing(v: &VelocityField, method: ConvolutionMethod) -> Vec<ForcingMode> {
    let (c2, c1) = match method {
        ConvolutionMethod::Direct => (direct(v, |m| &m.v2), direct(v, |m| &m.v1)),
        ConvolutionMethod::Dealiased => (dealiased(v, |m| &m.v2), dealiased(v, |m| &m.v1)),
    };
    let nx = v.nx as i64;
    c2.into_iter()
        .zip(c1)
        .enumerate()
        .map(|(i, (a, b))| {
            let nh = (i as i64 - nx) as f64 / v.l;
            let f1 = ModeProfile::new(Arc::clone(&v.grid), a, nh).expect("grid length");
            let f2 = ModeProfile::new(Arc::clone(&v.grid), b.into_iter().map(|x| -x).collect(), nh).expect("grid length");
            ForcingMode { f1, f2 }
        })
        .collect()
}

fn direct(v: &VelocityField, pick: impl Fn(&VelocityMode) -> &ModeProfile) -> Vec<Vec<C64>> {
    let nx = v.nx as i64;
    let len = v.grid.len();
    (-nx..=nx)
        .map(|n| {
            let mut acc = vec![C64::new(0.0, 0.0); len];
            for m in (n - nx).max(-nx)..=(n + nx).min(nx) {
                let a = pick(v.mode(n - m)).samples();
                let w = v.mode(m).omega.samples();
                for ((s, x), y) in acc.iter_mut().zip(a).zip(w) {
                    *s += x * y;
                }
            }
            acc
        })
        .collect()
}

fn dealiased(v: &VelocityField, pick: impl Fn(&VelocityMode) -> &ModeProfile) -> Vec<Vec<C64>> {
    let nx = v.nx;
    // Products reach |k| ≤ 2N_x; aliases stay outside |n| ≤ N_x when M > 3N_x.
    let m_len = 3 * (nx + 1);
    let mut planner = FftPlanner::<f64>::new();
    let inverse = planner.plan_fft_inverse(m_len);
    let forward = planner.plan_fft_forward(m_len);
    let len = v.grid.len();
    let mut out = vec![vec![C64::new(0.0, 0.0); len]; 2 * nx + 1];
    let mut a = vec![C64::new(0.0, 0.0); m_len];
    let mut w = vec![C64::new(0.0, 0.0); m_len];
    for j in 0..len {
        a.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        w.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        for (n, mode) in v.iter() {
            let slot = n.rem_euclid(m_len as i64) as usize;
            a[slot] = pick(mode).samples()[j];
            w[slot] = mode.omega.samples()[j];
        }
        inverse.process(&mut a);
        inverse.process(&mut w);
        let mut prod: Vec<C64> = a.iter().zip(&w).map(|(x, y)| x * y).collect();
        forward.process(&mut prod);
        let scale = 1.0 / m_len as f64;
        for (i, n) in (-(nx as i64)..=nx as i64).enumerate() {
            out[i][j] = prod[n.rem_euclid(m_len as i64) as usize] * scale;
        }
    }
    out
}

/// Settings of one Picard run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: ConvolutionMethod,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: 1e-10,
            max_iter: 100,
            method: ConvolutionMethod::Direct,
        }
    }
}

impl PicardOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(LabError::param("tol", "must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(LabError::param("max_iter", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    Stagnated,
    Diverged,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationReport {
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: usize,
    /// `sup_n ‖ψ^{j+1}_n − ψ^j_n‖_∞ / sup_n ‖ψ^{j+1}_n‖_∞` (absolute when the
    /// field is below `1e-13`).
    pub step_norms: Vec<f64>,
    /// `‖v^j‖_{H¹}` for every iterate, the initial one included.
    pub h1_trace: Vec<f64>,
    pub final_residual: f64,
    pub q_l2: f64,
    pub h1: f64,
    pub h2: f64,
    pub h53_surrogate: f64,
    pub v2_h1: f64,
    pub v1_h1: f64,
}

impl IterationReport {
    /// Largest ratio `s_{k+1}/s_k` of successive step norms, skipping
    /// ratios whose earlier step is already at the rounding floor.
    pub fn tail_contraction(&self) -> Option<f64> {
        self.step_norms
            .windows(2)
            .filter(|w| w[0] >= CONTRACTION_FLOOR)
            .map(|w| w[1] / w[0])
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
    }
}

/// `h1^{1/3} h2^{2/3}`, standing in for the `H^{5/3}` norm.
pub fn h53_surrogate(h1: f64, h2: f64) -> f64 {
    h1.cbrt() * h2.powf(2.0 / 3.0)
}

/// Grid for flux `phi`, period `l` and truncation `nx`, sized for the
/// thinnest wall layer among the stored modes.
pub fn grid_for(phi: f64, l: f64, nx: usize) -> Result<Arc<Grid>> {
    let beta = ChannelParams::new(phi, l, nx as i64)?.beta();
    Grid::shared(resolution_for_beta(beta))
}

/// Factored linear operators for modes `1..=N_x` plus the base flow.
pub struct ModeSolvers {
    phi: f64,
    l: f64,
    grid: Arc<Grid>,
    base: BaseFlow,
    ops: Vec<ModeOperator>,
}

impl ModeSolvers {
    pub fn new(phi: f64, l: f64, nx: usize, grid: &Arc<Grid>) -> Result<Self> {
        let base = base_flow(phi, grid)?;
        let params = ChannelParams::new(phi, l, 0)?;
        let ops = (1..=nx as i64)
            .map(|n| {
                ModeOperator::for_params(&params.with_mode(n), &base, grid, Boundary::Clamped)
                    .map_err(|e| LabError::Mode { mode: n, source: Box::new(e) })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModeSolvers {
            phi,
            l,
            grid: Arc::clone(grid),
            base,
            ops,
        })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn base(&self) -> &BaseFlow {
        &self.base
    }

    /// Solves every mode with force `F + extra` (`extra` indexed `−N_x..=N_x`).
    fn solve(&self, forcing: &ForcingField, extra: Option<&[ForcingMode]>) -> Result<VelocityField> {
        let nx = self.ops.len();
        let mut psi = Vec::with_capacity(nx + 1);
        let mut omega = Vec::with_capacity(nx + 1);
        for n in 0..=nx {
            let own = forcing.mode(n);
            let total = match extra {
                Some(e) => {
                    let x = &e[n + nx];
                    ForcingMode {
                        f1: &own.f1 + &x.f1,
                        f2: &own.f2 + &x.f2,
                    }
                }
                None => own.clone(),
            };
            if n == 0 {
                let (p, w) = solve_zero_mode_with_vorticity(&total.f1);
                psi.push(p);
                omega.push(w);
            } else {
                let r = self.ops[n - 1]
                    .solve_raw(&mode_rhs(&total))
                    .map_err(|e| LabError::Mode { mode: n as i64, source: Box::new(e) })?;
                psi.push(r.0);
                omega.push(r.1);
            }
        }
        VelocityField::from_stream_and_vorticity(self.l, psi, omega)
    }
}

fn check_layout(forcing: &ForcingField, solvers: &ModeSolvers) -> Result<()> {
    if forcing.nx() != solvers.ops.len() {
        return Err(LabError::param("forcing", "forcing truncation differs from the solver's"));
    }
    if !Arc::ptr_eq(forcing.grid(), &solvers.grid) && forcing.grid().n() != solvers.grid.n() {
        return Err(LabError::param("forcing", "forcing lives on a different grid"));
    }
    if (forcing.l - solvers.l).abs() > 0.0 {
        return Err(LabError::param("forcing", "forcing period differs from the solver's"));
    }
    Ok(())
}

fn step_norm(prev: &VelocityField, next: &VelocityField) -> f64 {
    let mut diff = 0.0f64;
    for n in 0..=next.nx as i64 {
        diff = diff.max(next.psi(n).max_diff(prev.psi(n)));
    }
    let scale = next.sup_psi();
    if scale < ABSOLUTE_FALLBACK {
        diff
    } else {
        diff / scale
    }
}

/// Picard iteration: `ψ^{j+1}_n` solves the linear mode problem with force
/// `F_n + F^j_n`, where `F^j` is the quadratic term of `v^j`. Starts from
/// `initial`, or from the linear solution when `None`.
pub fn picard_iterate(
    forcing: &ForcingField,
    solvers: &ModeSolvers,
    opts: &PicardOptions,
    initial: Option<&VelocityField>,
) -> Result<(VelocityField, IterationReport)> {
    opts.validate()?;
    check_layout(forcing, solvers)?;
    let forcing = forcing.resample(&solvers.grid);
    let mut current = match initial {
        Some(v) => {
            if v.nx != solvers.ops.len() || v.grid.n() != solvers.grid.n() || v.l != solvers.l {
                return Err(LabError::param("initial", "initial field layout differs from the solver's"));
            }
            v.clone()
        }
        None => solvers.solve(&forcing, None)?,
    };
    let mut step_norms = Vec::new();
    let mut h1_trace = vec![current.h1()];
    let mut stop = StopReason::MaxIterations;
    let mut slow = 0;
    for _ in 0..opts.max_iter {
        let nl = convolution_forcing(&current, opts.method);
        let next = solvers.solve(&forcing, Some(&nl))?;
        let step = step_norm(&current, &next);
        h1_trace.push(next.h1());
        current = next;
        if !step.is_finite() || current.sup_psi() > DIVERGENCE_LIMIT {
            step_norms.push(step);
            stop = StopReason::Diverged;
            break;
        }
        if let Some(&last) = step_norms.last() {
            slow = if step >= STAGNATION_RATIO * last { slow + 1 } else { 0 };
        }
        step_norms.push(step);
        if step < opts.tol {
            stop = StopReason::Converged;
            break;
        }
        if slow >= STAGNATION_STEPS {
            stop = StopReason::Stagnated;
            break;
        }
    }
    let final_residual = if stop == StopReason::Diverged {
        f64::INFINITY
    } else {
        ns_residual(&current, &forcing, solvers.phi, opts.method)
    };
    let (h1, h2) = (current.h1(), current.h2());
    let report = IterationReport {
        converged: stop == StopReason::Converged,
        stop_reason: stop,
        iterations: step_norms.len(),
        step_norms,
        h1_trace,
        final_residual,
        q_l2: current.q_l2(),
        h1,
        h2,
        h53_surrogate: h53_surrogate(h1, h2),
        v2_h1: current.v2_h1(),
        v1_h1: current.v1_h1(),
    };
    Ok((current, report))
}

/// Residual of the nonlinear mode equations, max over modes `0..=N_x`.
///
/// Both equations are checked after integrating from the lower wall, so no
/// sampled profile is differentiated more than once and the check keeps its
/// accuracy at large `N`:
///
/// - the vorticity equation
///   `−i n̂U″ψ + i n̂Uω − ω″ + n̂²ω = i n̂F₂ − F₁′` (with `F` including the
///   quadratic term) as
///   `∫(−i n̂U″ψ + i n̂Uω + n̂²ω − i n̂F₂) − [ω′] + [F₁] = 0`;
/// - the relation `ω = ψ″ − n̂²ψ` as `ψ − ψ(−1) − ψ′(−1)(1+y) = ∬(ω + n̂²ψ)`.
///
/// Each is divided by the largest sum of its term magnitudes over all modes
/// and nodes, floored at `1e-13` for fields that are essentially zero.
pub fn ns_residual(v: &VelocityField, forcing: &ForcingField, phi: f64, method: ConvolutionMethod) -> f64 {
    let grid = v.grid();
    let forcing = forcing.resample(grid);
    let nl = convolution_forcing(v, method);
    let nx = v.nx();
    let last = grid.n();
    let (mut eq, mut eq_scale) = (0.0f64, 0.0f64);
    let (mut rel, mut rel_scale) = (0.0f64, 0.0f64);
    let abs_profile = |p: &ModeProfile| p.map(|z| C64::new(z.norm(), 0.0));
    for n in 0..=nx {
        let own = forcing.mode(n);
        let x = &nl[n + nx];
        let f1 = &own.f1 + &x.f1;
        let f2 = &own.f2 + &x.f2;
        let m = v.mode(n as i64);
        let nh = m.psi.nhat();
        let k2 = nh * nh;
        let i_nh = C64::new(0.0, nh);
        let upp = -1.5 * phi;
        let mut g = ModeProfile::zeros(Arc::clone(grid), nh);
        let mut g_abs = ModeProfile::zeros(Arc::clone(grid), nh);
        for (j, &y) in grid.nodes().iter().enumerate() {
            let u = 0.75 * phi * (1.0 - y * y);
            let (p, w, f) = (m.psi.samples()[j], m.omega.samples()[j], f2.samples()[j]);
            let terms = [-i_nh * upp * p, i_nh * u * w, w * k2, -i_nh * f];
            g.samples_mut()[j] = terms.iter().sum();
            g_abs.samples_mut()[j] = C64::new(terms.iter().map(|t| t.norm()).sum(), 0.0);
        }
        let gi = g.cumulative_integral();
        let gi_abs = g_abs.cumulative_integral();
        let dw = grid.apply(1, m.omega.samples());
        for j in 0..=last {
            let r = gi.samples()[j] - (dw[j] - dw[last]) + (f1.samples()[j] - f1.samples()[last]);
            eq = eq.max(r.norm());
            let size = gi_abs.samples()[j].re + dw[j].norm() + dw[last].norm() + f1.samples()[j].norm() + f1.samples()[last].norm();
            eq_scale = eq_scale.max(size);
        }
        let src = m.omega.zip_with(&m.psi, |w, p| w + p * k2);
        let j2 = src.cumulative_integral().cumulative_integral();
        let j2_abs = abs_profile(&src).cumulative_integral().cumulative_integral();
        let slope = grid.apply(1, m.psi.samples())[last];
        let p0 = m.psi.samples()[last];
        for (j, &y) in grid.nodes().iter().enumerate() {
            let p = m.psi.samples()[j];
            let r = p - p0 - slope * (1.0 + y) - j2.samples()[j];
            rel = rel.max(r.norm());
            let size = p.norm() + p0.norm() + slope.norm() * (1.0 + y) + j2_abs.samples()[j].re;
            rel_scale = rel_scale.max(size);
        }
    }
    (eq / eq_scale.max(ABSOLUTE_FALLBACK)).max(rel / rel_scale.max(ABSOLUTE_FALLBACK))
}

/// Runs the iteration with zero force from `v_init`. A unique small
/// solution means the iterates collapse to zero.
pub fn uniqueness_probe(solvers: &ModeSolvers, v_init: &VelocityField, opts: &PicardOptions) -> Result<IterationReport> {
    let forcing = ForcingField::zeros(v_init.l, v_init.nx(), v_init.grid());
    picard_iterate(&forcing, solvers, opts, Some(v_init)).map(|(_, r)| r)
}

/// A probe field: `ψ_n = c (1 − y²)² e^{i n}` for `1 ≤ n ≤ active`, scaled so
/// that `‖v₂‖_{H¹} = target`.
pub fn probe_field(l: f64, nx: usize, active: usize, grid: &Arc<Grid>, target: f64) -> Result<VelocityField> {
    if active == 0 || active > nx {
        return Err(LabError::param("active", "need 1 <= active <= N_x"));
    }
    let psi = (0..=nx)
        .map(|n| {
            let nh = n as f64 / l;
            if n == 0 || n > active {
                ModeProfile::zeros(Arc::clone(grid), nh)
            } else {
                let phase = C64::from_polar(1.0 / n as f64, n as f64);
                ModeProfile::from_fn(Arc::clone(grid), nh, |y| phase * (1.0 - y * y).powi(2))
            }
        })
        .collect();
    let v = VelocityField::from_stream(l, psi)?;
    let g = v.v2_h1();
    Ok(v.scaled(target / g))
}

#[derive(Serialize, Deserialize)]
struct CheckpointMode {
    n: usize,
    psi_re: Vec<f64>,
    psi_im: Vec<f64>,
    omega_re: Vec<f64>,
    omega_im: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    l: f64,
    phi: f64,
    nx: usize,
    n: usize,
    modes: Vec<CheckpointMode>,
}

const CHECKPOINT_FORMAT: &str = "poiseuille-lab-field";
const CHECKPOINT_VERSION: u32 = 1;

/// JSON dump of `(L, Φ, N_x, N, ψ_n, ω_n for n ≥ 0)`.
pub fn checkpoint_json(v: &VelocityField, phi: f64) -> String {
    let split = |p: &ModeProfile| -> (Vec<f64>, Vec<f64>) { p.samples().iter().map(|c| (c.re, c.im)).unzip() };
    let modes = (0..=v.nx)
        .map(|n| {
            let m = v.mode(n as i64);
            let (psi_re, psi_im) = split(&m.psi);
            let (omega_re, omega_im) = split(&m.omega);
            CheckpointMode {
                n,
                psi_re,
                psi_im,
                omega_re,
                omega_im,
            }
        })
        .collect();
    let c = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        l: v.l,
        phi,
        nx: v.nx,
        n: v.grid.n(),
        modes,
    };
    serde_json::to_string_pretty(&c).expect("checkpoint serializes")
}

/// Inverse of [`checkpoint_json`]; returns the field and `Φ`.
pub fn field_from_checkpoint(text: &str) -> Result<(VelocityField, f64)> {
    let c: Checkpoint = serde_json::from_str(text).map_err(|e| LabError::Checkpoint(e.to_string()))?;
    if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
        return Err(LabError::Checkpoint(format!("unsupported format {} v{}", c.format, c.version)));
    }
    if c.modes.len() != c.nx + 1 {
        return Err(LabError::Checkpoint("mode count does not match nx".into()));
    }
    let grid = Grid::shared(c.n).map_err(|e| LabError::Checkpoint(e.to_string()))?;
    let join = |re: &[f64], im: &[f64], nh: f64| -> Result<ModeProfile> {
        if re.len() != im.len() {
            return Err(LabError::Checkpoint("real and imaginary parts differ in length".into()));
        }
        let s = re.iter().zip(im).map(|(a, b)| C64::new(*a, *b)).collect();
        ModeProfile::new(Arc::clone(&grid), s, nh).map_err(|e| LabError::Checkpoint(e.to_string()))
    };
    let mut psi = Vec::new();
    let mut omega = Vec::new();
    for (i, m) in c.modes.iter().enumerate() {
        if m.n != i {
            return Err(LabError::Checkpoint(format!("mode {i} out of order")));
        }
        let nh = i as f64 / c.l;
        psi.push(join(&m.psi_re, &m.psi_im, nh)?);
        omega.push(join(&m.omega_re, &m.omega_im, nh)?);
    }
    let v = VelocityField::from_stream_and_vorticity(c.l, psi, omega).map_err(|e| LabError::Checkpoint(e.to_string()))?;
    Ok((v, c.phi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartic(a: C64, nh: f64, grid: &Arc<Grid>) -> ModeProfile {
        ModeProfile::from_fn(Arc::clone(grid), nh, |y| a * (1.0 - y * y).powi(2))
    }

    /// Force for which `ψ_0 = b(1−y²)²`, `ψ_{±1} = a(1−y²)²` (conjugated) is
    /// an exact steady state, built from closed-form derivatives.
    fn manufactured(phi: f64, l: f64, a: C64, b: f64, nx: usize, grid: &Arc<Grid>) -> (ForcingField, Vec<ModeProfile>, Vec<ModeProfile>) {
        let nh1 = 1.0 / l;
        let p = |y: f64| (1.0 - y * y).powi(2);
        let p1 = |y: f64| -4.0 * y + 4.0 * y.powi(3);
        let p2 = |y: f64| -4.0 + 12.0 * y * y;
        let p3 = |y: f64| 24.0 * y;
        let i = C64::new(0.0, 1.0);
        // (ψ, v1, v2, ω) of mode m ∈ {−1, 0, 1} at y.
        let state = |m: i64, y: f64| -> (C64, C64, C64, C64) {
            let zero = C64::new(0.0, 0.0);
            match m {
                0 => (C64::from(b * p(y)), C64::from(-b * p1(y)), zero, C64::from(b * p2(y))),
                1 | -1 => {
                    let amp = if m == 1 { a } else { a.conj() };
                    let nh = m as f64 * nh1;
                    (amp * p(y), -amp * p1(y), i * nh * amp * p(y), amp * (p2(y) - nh * nh * p(y)))
                }
                _ => (zero, zero, zero, zero),
            }
        };
        let star = |n: i64, y: f64| -> (C64, C64) {
            let mut f1 = C64::new(0.0, 0.0);
            let mut f2 = C64::new(0.0, 0.0);
            for m in -1..=1 {
                let (_, v1, v2, _) = state(n - m, y);
                let w = state(m, y).3;
                f1 += v2 * w;
                f2 -= v1 * w;
            }
            (f1, f2)
        };
        let modes = (0..=nx as i64)
            .map(|n| {
                let nh = n as f64 / l;
                let f1 = ModeProfile::from_fn(Arc::clone(grid), nh, |y| {
                    let s = star(n, y).0;
                    if n == 0 {
                        b * p3(y) - s
                    } else {
                        -s
                    }
                });
                let f2 = ModeProfile::from_fn(Arc::clone(grid), nh, |y| {
                    let s = star(n, y).1;
                    if n == 1 {
                        let u = 0.75 * phi * (1.0 - y * y);
                        let upp = -1.5 * phi;
                        let lpsi = -i * nh * upp * a * p(y) + i * nh * u * a * (p2(y) - nh * nh * p(y))
                            - a * (24.0 - 2.0 * nh * nh * p2(y) + nh.powi(4) * p(y));
                        lpsi / (i * nh) - s
                    } else {
                        -s
                    }
                });
                ForcingMode::new(f1, f2).unwrap()
            })
            .collect();
        let exact = (0..=nx)
            .map(|n| match n {
                0 => quartic(C64::from(b), 0.0, grid),
                1 => quartic(a, nh1, grid),
                _ => ModeProfile::zeros(Arc::clone(grid), n as f64 / l),
            })
            .collect();
        let omega = (0..=nx as i64)
            .map(|n| ModeProfile::from_fn(Arc::clone(grid), n as f64 / l, |y| state(n, y).3))
            .collect();
        (ForcingField::new(l, modes).unwrap(), exact, omega)
    }

    #[test]
    fn zero_force_converges_at_once() {
        let grid = grid_for(1e3, 1.0, 4).unwrap();
        let solvers = ModeSolvers::new(1e3, 1.0, 4, &grid).unwrap();
        let f = ForcingField::zeros(1.0, 4, &grid);
        let (v, r) = picard_iterate(&f, &solvers, &PicardOptions::default(), None).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(v.sup_psi(), 0.0);
        assert_eq!(r.final_residual, 0.0);
    }

    #[test]
    fn convolution_support_and_methods_agree() {
        let grid = Grid::shared(48).unwrap();
        let nx = 5;
        let psi = (0..=nx)
            .map(|n| {
                if n == 1 {
                    ModeProfile::from_fn(Arc::clone(&grid), 1.0 / 1.5, |y| C64::new(0.3, -0.7) * (1.0 - y * y).powi(2) * (1.0 + y))
                } else {
                    ModeProfile::zeros(Arc::clone(&grid), n as f64 / 1.5)
                }
            })
            .collect();
        let v = VelocityField::from_stream(1.5, psi).unwrap();
        let d = convolution_forcing(&v, ConvolutionMethod::Direct);
        for (i, m) in d.iter().enumerate() {
            let n = i as i64 - nx as i64;
            let size = m.f1.max_abs() + m.f2.max_abs();
            if [0, 2, -2].contains(&n) {
                assert!(size > 0.0, "n={n}");
            } else {
                assert_eq!(size, 0.0, "n={n}");
            }
        }
        // A dense random field for the method comparison.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = (0..=nx)
            .map(|n| {
                let c = C64::new(rng.gen_range(-1.0..1.0), if n == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) });
                let s = rng.gen_range(0.5..2.0);
                ModeProfile::from_fn(Arc::clone(&grid), n as f64 / 1.5, |y| c * (1.0 - y * y).powi(2) * (s * y).cos())
            })
            .collect();
        let v = VelocityField::from_stream(1.5, psi).unwrap();
        let d = convolution_forcing(&v, ConvolutionMethod::Direct);
        let p = convolution_forcing(&v, ConvolutionMethod::Dealiased);
        let scale = d.iter().fold(0.0f64, |a, m| a.max(m.f1.max_abs()).max(m.f2.max_abs()));
        let diff = d.iter().zip(&p).fold(0.0f64, |a, (x, y)| a.max(x.f1.max_diff(&y.f1)).max(x.f2.max_diff(&y.f2)));
        assert!(diff < 1e-10 * scale, "{diff:e}");
        // Reality of the quadratic term.
        for n in 1..=nx {
            let (pos, neg) = (&d[nx + n], &d[nx - n]);
            assert!(pos.f1.conj().max_diff(&neg.f1) < 1e-12 * scale);
            assert!(pos.f2.conj().max_diff(&neg.f2) < 1e-12 * scale);
        }
    }

    #[test]
    fn manufactured_state_is_recovered() {
        let (phi, l, nx) = (1e3, 1.0, 2);
        let grid = grid_for(phi, l, nx).unwrap();
        let a = C64::new(0.05, -0.03);
        let (f, exact, omega) = manufactured(phi, l, a, 0.02, nx, &grid);
        let ev = VelocityField::from_stream_and_vorticity(l, exact.clone(), omega).unwrap();
        let r = ns_residual(&ev, &f, phi, ConvolutionMethod::Direct);
        assert!(r < 1e-8, "manufactured residual {r:e}");
        let solvers = ModeSolvers::new(phi, l, nx, &grid).unwrap();
        let opts = PicardOptions {
            tol: 1e-12,
            ..Default::default()
        };
        let (v, rep) = picard_iterate(&f, &solvers, &opts, None).unwrap();
        assert!(rep.converged, "{rep:?}");
        let scale = exact.iter().fold(0.0f64, |m, p| m.max(p.max_abs()));
        for (n, e) in exact.iter().enumerate() {
            let err = v.psi(n as i64).max_diff(e) / scale;
            assert!(err < 1e-7, "mode {n}: {err:e}");
        }
        assert!(rep.final_residual < 10.0 * opts.tol.max(1e-10), "{rep:?}");
        let inv = v.invariants();
        assert!(inv.reality < 1e-12 && inv.divergence < 1e-9 && inv.flux < 1e-9 && inv.v2_zero_mode == 0.0, "{inv:?}");
        // Both convolution paths reach the same state.
        let opts_fft = PicardOptions {
            method: ConvolutionMethod::Dealiased,
            ..opts
        };
        let (w, _) = picard_iterate(&f, &solvers, &opts_fft, None).unwrap();
        assert!(w.psi(1).max_diff(v.psi(1)) < 1e-10 * scale);
    }

    #[test]
    fn norms_of_a_single_mode() {
        // ψ_1 = (1−y²)², L = 1: ‖v‖² = 2π·2·(‖ψ′‖² + ‖ψ‖²) for the ±1 pair.
        let grid = Grid::shared(32).unwrap();
        let psi = vec![ModeProfile::zeros(Arc::clone(&grid), 0.0), quartic(C64::from(1.0), 1.0, &grid)];
        let v = VelocityField::from_stream(1.0, psi).unwrap();
        // ∫(1−y²)⁴ = 256/315, ∫(4y − 4y³)² = 256/105.
        let expect = (2.0 * PI * 2.0 * (256.0 / 105.0 + 256.0 / 315.0)).sqrt();
        assert!((v.l2() - expect).abs() < 1e-12 * expect);
        assert!((v.q_l2() - expect).abs() < 1e-12 * expect);
        let (h1, h2) = (v.h1(), v.h2());
        let s = h53_surrogate(h1, h2);
        assert!(v.l2() <= h1 && h1 <= s && s <= h2);
    }

    #[test]
    fn checkpoint_round_trip() {
        let grid = Grid::shared(16).unwrap();
        let v = probe_field(2.0, 3, 2, &grid, 0.5).unwrap();
        let text = checkpoint_json(&v, 123.0);
        let (w, phi) = field_from_checkpoint(&text).unwrap();
        assert_eq!(phi, 123.0);
        for n in -3..=3 {
            assert_eq!(w.psi(n).samples(), v.psi(n).samples());
            assert_eq!(w.mode(n).omega.samples(), v.mode(n).omega.samples());
        }
        assert!(field_from_checkpoint("{}").is_err());
        assert!(field_from_checkpoint(&text.replace("poiseuille-lab-field", "other")).is_err());
    }

    #[test]
    fn probe_reports_outside_the_regime() {
        let (l, nx) = (1.0, 4);
        let grid = grid_for(1e3, l, nx).unwrap();
        let zero = VelocityField::zeros(l, nx, &grid);
        let solvers = ModeSolvers::new(10.0, l, nx, &grid).unwrap();
        let r = uniqueness_probe(&solvers, &zero, &PicardOptions::default()).unwrap();
        assert!(r.converged && r.h1 == 0.0);
        let v = probe_field(l, nx, 2, &grid, 0.1 * 10f64.powf(1.0 / 90.0)).unwrap();
        assert!((v.v2_h1() - 0.1 * 10f64.powf(1.0 / 90.0)).abs() < 1e-12);
        let r = uniqueness_probe(&solvers, &v, &PicardOptions::default()).unwrap();
        assert_eq!(r.h1_trace.len(), r.iterations + 1);
        assert!(!r.step_norms.is_empty());
    }

    #[test]
    fn rejects_complex_zero_mode_force() {
        let grid = Grid::shared(16).unwrap();
        let mut f = ForcingField::zeros(1.0, 1, &grid);
        f.modes[0].f1 = ModeProfile::from_fn(Arc::clone(&grid), 0.0, |_| C64::new(0.0, 1.0));
        assert!(ForcingField::new(1.0, f.modes).is_err());
    }
}
