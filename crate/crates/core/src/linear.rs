//! Per-mode linear solvers for the stream-function equation
//!
//! ```text
//! −i n̂ U″ ψ + i n̂ U (D² − n̂²) ψ − (D² − n̂²)² ψ = f
//! ```
//!
//! with clamped (`ψ = ψ′ = 0`) or slip (`ψ = ψ″ = 0`) walls, the closed-form
//! zero mode, and the energy identities of the slip problem.
//!
//! The fourth-order equation is discretized as a coupled second-order system
//! in `(ψ, ω)` with `ω = (D² − n̂²)ψ`. Because the operator commutes with the
//! reflection `y ↦ −y`, the even and odd parts are solved as two half-size
//! systems, which keeps parity exact and cuts the factorization cost by four.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::{BaseFlow, ChannelParams};
use crate::error::{LabError, Result};
use crate::spectral::{Grid, ModeProfile, C64};

const REFINEMENT_STEPS: usize = 2;

/// Condition estimates above this are reported as singular.
pub const SINGULAR_CONDITION: f64 = 1e14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Clamped,
    Slip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    Mixed,
}

#[derive(Clone, Debug)]
pub struct LinearSolveResult {
    pub psi: ModeProfile,
    /// The vorticity unknown of the coupled system.
    pub omega: ModeProfile,
    /// Interior residual on the refined grid, relative (see [`residual_report`]).
    pub residual: f64,
    /// Largest relative violation of the boundary conditions.
    pub bc_defect: f64,
    pub parity: Parity,
    /// `ψ′(1)` and `ψ′(−1)`.
    pub wall_derivatives: [C64; 2],
}

struct HalfSystem {
    lu: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    /// Equilibrated matrix, kept for iterative refinement.
    a: DMatrix<C64>,
    row_scale: Vec<f64>,
    /// Number of ψ unknowns (nodes `0..m`).
    m: usize,
    sign: f64,
}

/// Factorized discrete operator for one mode; reusable across right-hand sides.
pub struct ModeOperator {
    grid: Arc<Grid>,
    base: BaseFlow,
    nhat: f64,
    mode: i64,
    boundary: Boundary,
    even: HalfSystem,
    odd: HalfSystem,
    condition: f64,
}

impl ModeOperator {
    /// Factorizes the operator for wavenumber `nhat`. `mode` is only used to
    /// label errors. `n̂ = 0` is allowed here (pure biharmonic operator).
    pub fn new(
        nhat: f64,
        mode: i64,
        base: &BaseFlow,
        grid: &Arc<Grid>,
        boundary: Boundary,
    ) -> Result<Self> {
        if !nhat.is_finite() {
            return Err(LabError::param("nhat", "wavenumber must be finite"));
        }
        let base = base.on_grid(grid);
        let even = build_half(grid, &base, nhat, boundary, 1.0, mode)?;
        let odd = build_half(grid, &base, nhat, boundary, -1.0, mode)?;
        let condition = even.1.max(odd.1);
        Ok(ModeOperator {
            grid: Arc::clone(grid),
            base,
            nhat,
            mode,
            boundary,
            even: even.0,
            odd: odd.0,
            condition,
        })
    }

    pub fn for_params(params: &ChannelParams, base: &BaseFlow, grid: &Arc<Grid>, boundary: Boundary) -> Result<Self> {
        Self::new(params.nhat, params.n, base, grid, boundary)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn nhat(&self) -> f64 {
        self.nhat
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn mode(&self) -> i64 {
        self.mode
    }

    /// Pivot-ratio condition estimate of the equilibrated half systems.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    /// Solves for `(ψ, ω)` without computing diagnostics.
    pub fn solve_raw(&self, f: &ModeProfile) -> Result<(ModeProfile, ModeProfile)> {
        let f = f.resample(&self.grid);
        let (fe, fo) = parity_split(&f);
        let (pe, we) = self.solve_half(&self.even, fe.samples());
        let (po, wo) = self.solve_half(&self.odd, fo.samples());
        let psi = ModeProfile::new(Arc::clone(&self.grid), add(&pe, &po), self.nhat)?;
        let omega = ModeProfile::new(Arc::clone(&self.grid), add(&we, &wo), self.nhat)?;
        Ok((psi, omega))
    }

    /// Solves and evaluates residual, boundary defect and parity.
    pub fn solve(&self, f: &ModeProfile) -> Result<LinearSolveResult> {
        let (psi, omega) = self.solve_raw(f)?;
        let f = f.resample(&self.grid);
        let residual = residual_report(&psi, &omega, &f, &self.base).max();
        let bc_defect = bc_defect(&psi, self.boundary);
        let d1 = psi.derivative_unchecked(1);
        let n = self.grid.n();
        Ok(LinearSolveResult {
            parity: parity_of(&psi),
            wall_derivatives: [d1.samples()[0], d1.samples()[n]],
            psi,
            omega,
            residual,
            bc_defect,
        })
    }

    fn solve_half(&self, sys: &HalfSystem, f: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let n = self.grid.n();
        let zero = C64::new(0.0, 0.0);
        if f.iter().all(|v| *v == zero) {
            return (vec![zero; n + 1], vec![zero; n + 1]);
        }
        let m = sys.m;
        let mut rhs = DVector::<C64>::zeros(2 * m);
        for i in 1..m {
            rhs[m + i] = f[i] * sys.row_scale[m + i];
        }
        let mut x = rhs.clone();
        sys.lu.solve_mut(&mut x);
        // Fixed-precision iterative refinement: LU leaves a componentwise
        // backward error well above rounding in the wall rows.
        for _ in 0..REFINEMENT_STEPS {
            let mut r = &rhs - &sys.a * &x;
            sys.lu.solve_mut(&mut r);
            x += r;
        }
        let rhs = x;
        let mut psi = vec![zero; n + 1];
        let mut omega = vec![zero; n + 1];
        for j in 0..m {
            psi[j] = rhs[j];
            omega[j] = rhs[m + j];
            if n - j != j {
                psi[n - j] = rhs[j] * sys.sign;
                omega[n - j] = rhs[m + j] * sys.sign;
            }
        }
        (psi, omega)
    }
}

fn add(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Builds and factorizes the even (`sign = 1`) or odd (`sign = −1`) half system.
fn build_half(
    grid: &Arc<Grid>,
    base: &BaseFlow,
    nhat: f64,
    boundary: Boundary,
    sign: f64,
    mode: i64,
) -> Result<(HalfSystem, f64)> {
    let n = grid.n();
    let h = n / 2;
    let m = if sign > 0.0 { h + 1 } else { h };
    let d1 = grid.d(1);
    let d2 = grid.d(2);
    // Row i of D acting on a vector with ψ_{N−j} = sign·ψ_j, restricted to j < m.
    let fold = |d: &DMatrix<f64>, i: usize, j: usize| {
        if n - j == j {
            d[(i, j)]
        } else {
            d[(i, j)] + sign * d[(i, n - j)]
        }
    };
    let k2 = nhat * nhat;
    let i_nhat = C64::new(0.0, nhat);
    let u = base.u.samples();
    let upp = base.u_double_prime.samples();
    let size = 2 * m;
    let mut a = DMatrix::<C64>::zeros(size, size);
    // Relation rows: ψ(1) = 0, then ω_i − (D²ψ)_i + n̂²ψ_i = 0.
    a[(0, 0)] = C64::new(1.0, 0.0);
    for i in 1..m {
        a[(i, m + i)] += C64::new(1.0, 0.0);
        for j in 0..m {
            a[(i, j)] -= C64::new(fold(d2, i, j), 0.0);
        }
        a[(i, i)] += C64::new(k2, 0.0);
    }
    // Wall row: ψ′(1) = 0 or ψ″(1) = 0.
    let wall = match boundary {
        Boundary::Clamped => d1,
        Boundary::Slip => d2,
    };
    for j in 0..m {
        a[(m, j)] = C64::new(fold(wall, 0, j), 0.0);
    }
    // Vorticity rows.
    for i in 1..m {
        a[(m + i, i)] += -i_nhat * upp[i];
        a[(m + i, m + i)] += i_nhat * u[i] + k2;
        for j in 0..m {
            a[(m + i, m + j)] -= C64::new(fold(d2, i, j), 0.0);
        }
    }
    let mut row_scale = vec![1.0; size];
    for (r, s) in row_scale.iter_mut().enumerate() {
        let mx = a.row(r).iter().fold(0.0f64, |acc, v| acc.max(v.norm()));
        if mx > 0.0 {
            *s = 1.0 / mx;
            for c in 0..size {
                a[(r, c)] *= *s;
            }
        }
    }
    let lu = a.clone().lu();
    let (mut umax, mut umin) = (0.0f64, f64::INFINITY);
    let u_mat = lu.u();
    for i in 0..size {
        let v = u_mat[(i, i)].norm();
        umax = umax.max(v);
        umin = umin.min(v);
    }
    let condition = if umin > 0.0 { umax / umin } else { f64::INFINITY };
    if !(condition < SINGULAR_CONDITION) {
        return Err(LabError::Singular { mode, condition });
    }
    Ok((
        HalfSystem {
            lu,
            a,
            row_scale,
            m,
            sign,
        },
        condition,
    ))
}

/// Solves the clamped problem for `n ≠ 0` on `grid`.
pub fn solve_clamped(params: &ChannelParams, base: &BaseFlow, grid: &Arc<Grid>, f: &ModeProfile) -> Result<LinearSolveResult> {
    if params.n == 0 {
        return Err(LabError::param("n", "mode 0 uses the closed-form zero-mode solver"));
    }
    ModeOperator::for_params(params, base, grid, Boundary::Clamped)?.solve(f)
}

/// Solves the slip problem for `n ≠ 0` on `grid`.
pub fn solve_slip(params: &ChannelParams, base: &BaseFlow, grid: &Arc<Grid>, f: &ModeProfile) -> Result<LinearSolveResult> {
    if params.n == 0 {
        return Err(LabError::param("n", "mode 0 uses the closed-form zero-mode solver"));
    }
    ModeOperator::for_params(params, base, grid, Boundary::Slip)?.solve(f)
}

/// Closed-form zero mode
/// `ψ₀ = ∭F₁,₀ + (A₁/6)(y+1)³ + (A₂/2)(y+1)²`, with `A₁`, `A₂` fixed by
/// `ψ₀(1) = ψ₀′(1) = 0`. The triple integral starts at `y = −1`.
pub fn solve_zero_mode(f10: &ModeProfile) -> ModeProfile {
    solve_zero_mode_with_vorticity(f10).0
}

/// The zero mode together with its vorticity `ψ₀″ = I₁ + A₁(y+1) + A₂`,
/// obtained without differentiating.
pub fn solve_zero_mode_with_vorticity(f10: &ModeProfile) -> (ModeProfile, ModeProfile) {
    let (i1, i2, i3) = zero_mode_integrals(f10);
    let (a1, a2) = zero_mode_constants(&i2, &i3);
    let psi = i3
        .map_with_y(|y, v| {
            let t = y + 1.0;
            v + a1 * (t * t * t / 6.0) + a2 * (t * t / 2.0)
        })
        .with_nhat(0.0);
    let omega = i1.map_with_y(|y, v| v + a1 * (y + 1.0) + a2).with_nhat(0.0);
    (psi, omega)
}

fn zero_mode_integrals(f10: &ModeProfile) -> (ModeProfile, ModeProfile, ModeProfile) {
    let i1 = f10.cumulative_integral();
    let i2 = i1.cumulative_integral();
    let i3 = i2.cumulative_integral();
    (i1, i2, i3)
}

fn zero_mode_constants(i2: &ModeProfile, i3: &ModeProfile) -> (C64, C64) {
    // Node 0 is y = 1: I₂(1) = ∫I₁, I₃(1) = ∫I₂.
    let single = i2.samples()[0];
    let double = i3.samples()[0];
    let a1 = (double - single) * 1.5;
    let a2 = single - double * 1.5;
    (a1, a2)
}

/// The constants `(A₁, A₂)` of the zero-mode formula.
pub fn zero_mode_coefficients(f10: &ModeProfile) -> (C64, C64) {
    let (_, i2, i3) = zero_mode_integrals(f10);
    zero_mode_constants(&i2, &i3)
}

/// `(f_even, f_odd)` with `f_even(y) = (f(y) + f(−y))/2`.
pub fn parity_split(f: &ModeProfile) -> (ModeProfile, ModeProfile) {
    let r = f.reflect();
    let even = f.zip_with(&r, |a, b| (a + b) * 0.5);
    let odd = f.zip_with(&r, |a, b| (a - b) * 0.5);
    (even, odd)
}

fn parity_of(psi: &ModeProfile) -> Parity {
    let (e, o) = parity_split(psi);
    let scale = psi.max_abs();
    if o.max_abs() <= 1e-12 * scale {
        Parity::Even
    } else if e.max_abs() <= 1e-12 * scale {
        Parity::Odd
    } else {
        Parity::Mixed
    }
}

/// Relative boundary-condition violation: `ψ(±1)` against `max|ψ|` and the
/// derivative condition against the max of that derivative.
pub fn bc_defect(psi: &ModeProfile, boundary: Boundary) -> f64 {
    let n = psi.grid().n();
    let s = psi.samples();
    let rel = |v: C64, scale: f64| if scale > 0.0 { v.norm() / scale } else { v.norm() };
    let pmax = psi.max_abs();
    let k = match boundary {
        Boundary::Clamped => 1,
        Boundary::Slip => 2,
    };
    let d = psi.derivative_unchecked(k);
    let dmax = d.max_abs();
    [
        rel(s[0], pmax),
        rel(s[n], pmax),
        rel(d.samples()[0], dmax),
        rel(d.samples()[n], dmax),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Interior residuals of the coupled system measured between the collocation
/// nodes, on the `2N` grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Vorticity equation, max-norm relative to `max(‖f‖_∞, 1e-300)`.
    pub equation: f64,
    /// `ω − (D² − n̂²)ψ`, max-norm relative to `max(‖ω‖_∞, 1e-300)`.
    pub relation: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.equation.max(self.relation)
    }
}

/// Evaluates the residuals of `(ψ, ω)` against `f` at the interior nodes of
/// the grid with twice the resolution. Derivatives are taken on the solution
/// grid and interpolated, which is exact for the polynomial interpolants and
/// avoids the rounding growth of high-order operators on the finer grid.
pub fn residual_report(psi: &ModeProfile, omega: &ModeProfile, f: &ModeProfile, base: &BaseFlow) -> ResidualReport {
    let grid = psi.grid();
    let nhat = psi.nhat();
    let k2 = nhat * nhat;
    let i_nhat = C64::new(0.0, nhat);
    let phi = base.phi;
    let f = f.resample(grid);
    let d2psi = psi.derivative_unchecked(2);
    let d2omega = omega.derivative_unchecked(2);
    let fine = 2 * grid.n();
    let mut eq = 0.0f64;
    let mut rel = 0.0f64;
    for j in 1..fine {
        let y = (std::f64::consts::PI * (fine as f64 - 2.0 * j as f64) / (2.0 * fine as f64)).sin();
        let p = psi.evaluate(y);
        let w = omega.evaluate(y);
        let wpp = d2omega.evaluate(y);
        let ppp = d2psi.evaluate(y);
        let fy = f.evaluate(y);
        let u = 0.75 * phi * (1.0 - y * y);
        let upp = -1.5 * phi;
        let r = -i_nhat * upp * p + i_nhat * u * w - (wpp - w * k2) - fy;
        eq = eq.max(r.norm());
        rel = rel.max((w - ppp + p * k2).norm());
    }
    ResidualReport {
        equation: eq / f.max_abs().max(1e-300),
        relation: rel / omega.max_abs().max(1e-300),
    }
}

/// Applies the fourth-order operator to `ψ` with the collocation matrices.
/// Rounding grows like `N⁸` here; intended for moderate `N` and for tests.
pub fn apply_operator(psi: &ModeProfile, base: &BaseFlow) -> ModeProfile {
    let base = base.on_grid(psi.grid());
    let nhat = psi.nhat();
    let k2 = nhat * nhat;
    let i_nhat = C64::new(0.0, nhat);
    let d2 = psi.derivative_unchecked(2);
    let d4 = psi.derivative_unchecked(4);
    let s = psi.samples();
    let samples = (0..s.len())
        .map(|j| {
            let u = base.u.samples()[j].re;
            let upp = base.u_double_prime.samples()[j].re;
            let w = d2.samples()[j] - s[j] * k2;
            -i_nhat * upp * s[j] + i_nhat * u * w - (d4.samples()[j] - d2.samples()[j] * (2.0 * k2) + s[j] * (k2 * k2))
        })
        .collect();
    ModeProfile::new(Arc::clone(psi.grid()), samples, nhat).expect("same grid")
}

/// Differences of the two sides of the four energy identities of the slip
/// problem, each normalized by the larger side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyIdentities {
    /// Real part against `ψ̄`.
    pub dissipation: f64,
    /// Imaginary part against `ψ̄`.
    pub transport: f64,
    /// Real part against `ψ̄″`.
    pub dissipation_higher: f64,
    /// Imaginary part against `ψ̄″`:
    /// `(3Φn̂/4)∫(n̂²|ψ′|² + |ψ″|²)(1−y²) + n̂²|ψ|² = Im∫fψ̄″ + (3Φn̂/2)∫|ψ′|²`.
    pub transport_higher: f64,
}

impl EnergyIdentities {
    pub fn max(&self) -> f64 {
        self.dissipation
            .max(self.transport)
            .max(self.dissipation_higher)
            .max(self.transport_higher)
    }
}

/// Integrals of `ψ` and its derivatives needed by the identities, evaluated
/// exactly for the interpolants on the `2N` grid.
struct Moments {
    psi2: f64,
    d1: f64,
    d2: f64,
    d3: f64,
    w_psi: f64,
    w_d1: f64,
    w_d2: f64,
    f_psi: C64,
    f_d2: C64,
    up_d1_psi: C64,
    up_psi_d1: C64,
}

fn moments(psi: &ModeProfile, omega: &ModeProfile, f: &ModeProfile, phi: f64) -> Result<Moments> {
    let grid = psi.grid();
    let fine = Grid::shared((2 * grid.n()).min(crate::spectral::MAX_NODES))?;
    let k2 = psi.nhat() * psi.nhat();
    let p1 = psi.derivative_unchecked(1);
    // ψ″ and ψ‴ from the vorticity unknown, which avoids differentiating ψ
    // more than once.
    let p2 = omega.zip_with(psi, |w, p| w + p * k2);
    let p3 = p2.derivative_unchecked(1);
    let fr = f.resample(grid);
    let (p, p1, p2, p3, fr) = (
        psi.resample(&fine),
        p1.resample(&fine),
        p2.resample(&fine),
        p3.resample(&fine),
        fr.resample(&fine),
    );
    let ys = fine.nodes();
    let real = |v: Vec<f64>| fine.quadrature_real(&v);
    let cplx = |v: Vec<C64>| fine.quadrature(&v);
    let sq = |q: &ModeProfile| real(q.samples().iter().map(|v| v.norm_sqr()).collect());
    let wsq = |q: &ModeProfile| {
        real(
            q.samples()
                .iter()
                .zip(ys)
                .map(|(v, &y)| (1.0 - y * y) * v.norm_sqr())
                .collect(),
        )
    };
    let up = |y: f64| -1.5 * phi * y;
    Ok(Moments {
        psi2: sq(&p),
        d1: sq(&p1),
        d2: sq(&p2),
        d3: sq(&p3),
        w_psi: wsq(&p),
        w_d1: wsq(&p1),
        w_d2: wsq(&p2),
        f_psi: cplx(fr.samples().iter().zip(p.samples()).map(|(a, b)| a * b.conj()).collect()),
        f_d2: cplx(fr.samples().iter().zip(p2.samples()).map(|(a, b)| a * b.conj()).collect()),
        up_d1_psi: cplx(
            p1.samples()
                .iter()
                .zip(p.samples())
                .zip(ys)
                .map(|((a, b), &y)| a * b.conj() * up(y))
                .collect(),
        ),
        up_psi_d1: cplx(
            p.samples()
                .iter()
                .zip(p1.samples())
                .zip(ys)
                .map(|((a, b), &y)| a * b.conj() * up(y))
                .collect(),
        ),
    })
}

fn normalized_gap(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    }
}

/// Checks the four energy identities of the slip problem for a solved mode.
pub fn energy_identity_report(result: &LinearSolveResult, f: &ModeProfile, params: &ChannelParams) -> Result<EnergyIdentities> {
    let nh = params.nhat;
    let phi = params.phi;
    let m = moments(&result.psi, &result.omega, f, phi)?;
    let n2 = nh * nh;
    let n4 = n2 * n2;
    let c = 0.75 * phi * nh;

    let lhs1 = n4 * m.psi2 + 2.0 * n2 * m.d1 + m.d2;
    let rhs1 = -m.f_psi.re + nh * m.up_d1_psi.im;

    let lhs2 = c * (n2 * m.w_psi + m.w_d1);
    let rhs2 = -m.f_psi.im + c * m.psi2;

    let lhs3 = n4 * m.d1 + 2.0 * n2 * m.d2 + m.d3;
    let rhs3 = m.f_d2.re + n2 * nh * m.up_psi_d1.im;

    let lhs4 = c * (n2 * m.w_d1 + m.w_d2 + n2 * m.psi2);
    let rhs4 = m.f_d2.im + 2.0 * c * m.d1;

    Ok(EnergyIdentities {
        dissipation: normalized_gap(lhs1, rhs1),
        transport: normalized_gap(lhs2, rhs2),
        dissipation_higher: normalized_gap(lhs3, rhs3),
        transport_higher: normalized_gap(lhs4, rhs4),
    })
}

/// Both sides of the one-sided estimate for even slip solutions,
/// `∫ ½n̂²|ψ′|²(1−y²) + 2δ₁|ψ″|²(1−y²) + n̂²|ψ|² ≤ |4/(3Φn̂) · Im ∫ f ψ̄″|`
/// with `δ = min(1/(4L²), 5/4)` and `δ₁ = δ/10`.
pub fn even_slip_bound(result: &LinearSolveResult, f: &ModeProfile, params: &ChannelParams) -> Result<(f64, f64)> {
    let nh = params.nhat;
    let m = moments(&result.psi, &result.omega, f, params.phi)?;
    let delta = (0.25 / (params.l * params.l)).min(1.25);
    let delta1 = delta / 10.0;
    let lhs = 0.5 * nh * nh * m.w_d1 + 2.0 * delta1 * m.w_d2 + nh * nh * m.psi2;
    let rhs = (4.0 / (3.0 * params.phi * nh) * m.f_d2.im).abs();
    Ok((lhs, rhs))
}
