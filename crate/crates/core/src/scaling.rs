//! Parameter sweeps that measure solution norms against the a priori bound
//! expressions, plus log-log slope fitting.
//!
//! Every bound is evaluated with constant 1, so a ratio is only meaningful
//! relative to the other ratios of the same name.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::appendix::Poly;
use crate::boundary_layer::assemble_decomposition;
use crate::channel::{base_flow, mode_rhs, ChannelParams, ForcingMode, RegimeThresholds};
use crate::error::{LabError, Result};
use crate::linear::{solve_clamped, solve_slip, Parity};
use crate::nonlinear::h53_surrogate;
use crate::spectral::{resolution_for_beta, Grid, ModeProfile};

/// Rows whose solver residual exceeds this are reported as failures.
pub const ROW_RESIDUAL_GATE: f64 = 1e-7;
/// Default limit on max/min of one ratio over a sweep.
pub const DEFAULT_SANITY_FACTOR: f64 = 100.0;
pub const CSV_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Slip,
    Clamped,
    Decomposition,
    HighFreq,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [
        SolverKind::Slip,
        SolverKind::Clamped,
        SolverKind::Decomposition,
        SolverKind::HighFreq,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Slip => "slip",
            SolverKind::Clamped => "clamped",
            SolverKind::Decomposition => "decomposition",
            SolverKind::HighFreq => "high_freq",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LabError::param("solver", format!("unknown solver kind `{s}`")))
    }
}

/// Forcing profile `F = (F₁, F₂)` with real polynomial components.
#[derive(Clone, Debug, PartialEq)]
pub struct ForcingProfile {
    pub id: String,
    pub f1: Poly,
    pub f2: Poly,
}

impl ForcingProfile {
    /// `F = (y(1−y²), 1−y²)`: the right-hand side `f = in̂F₂ − F₁′` is even.
    pub fn even_rhs() -> Self {
        ForcingProfile {
            id: "even_rhs".into(),
            f1: Poly::new(vec![0.0, 1.0, 0.0, -1.0]),
            f2: Poly::new(vec![1.0, 0.0, -1.0]),
        }
    }

    /// `F = (1−y², y(1−y²))`: `f` is odd.
    pub fn odd_rhs() -> Self {
        ForcingProfile {
            id: "odd_rhs".into(),
            f1: Poly::new(vec![1.0, 0.0, -1.0]),
            f2: Poly::new(vec![0.0, 1.0, 0.0, -1.0]),
        }
    }

    /// `F = (1−y², 0)`: streamwise only, `f = 2y`.
    pub fn streamwise() -> Self {
        ForcingProfile {
            id: "streamwise".into(),
            f1: Poly::new(vec![1.0, 0.0, -1.0]),
            f2: Poly::zero(),
        }
    }

    /// Both components a random Legendre series of degree ≤ 10 times `1 − y²`.
    pub fn random(seed: u64, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64 * 0x9E37_79B9));
        let bubble = Poly::new(vec![1.0, 0.0, -1.0]);
        let mut component = || {
            let deg = rng.gen_range(0..=10usize);
            let a: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Poly::from_legendre(&a).mul(&bubble)
        };
        let f1 = component();
        let f2 = component();
        ForcingProfile {
            id: format!("random_{seed}_{index}"),
            f1,
            f2,
        }
    }

    pub fn by_name(name: &str, seed: u64) -> Result<Self> {
        match name {
            "even_rhs" => Ok(Self::even_rhs()),
            "odd_rhs" => Ok(Self::odd_rhs()),
            "streamwise" => Ok(Self::streamwise()),
            _ => match name.strip_prefix("random_").and_then(|i| i.parse::<usize>().ok()) {
                Some(i) => Ok(Self::random(seed, i)),
                None => Err(LabError::param(
                    "forcing",
                    format!("unknown profile {name:?} (expected even_rhs, odd_rhs, streamwise or random_<k>)"),
                )),
            },
        }
    }

    /// The three canonical profiles followed by `random` random ones.
    pub fn ensemble(seed: u64, random: usize) -> Vec<Self> {
        let mut v = vec![Self::even_rhs(), Self::odd_rhs(), Self::streamwise()];
        v.extend((0..random).map(|i| Self::random(seed, i)));
        v
    }

    pub fn on_grid(&self, grid: &Arc<Grid>, nhat: f64) -> ForcingMode {
        let f1 = ModeProfile::from_real_fn(Arc::clone(grid), nhat, |y| self.f1.eval(y));
        let f2 = ModeProfile::from_real_fn(Arc::clone(grid), nhat, |y| self.f2.eval(y));
        ForcingMode::new(f1, f2).expect("same grid")
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub phis: Vec<f64>,
    pub ls: Vec<f64>,
    pub ns: Vec<i64>,
    pub forcings: Vec<ForcingProfile>,
    pub solver: SolverKind,
    pub thresholds: RegimeThresholds,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.phis.is_empty() {
            return Err(LabError::param("phi", "empty flux grid"));
        }
        if self.ls.is_empty() {
            return Err(LabError::param("L", "empty period grid"));
        }
        if self.ns.is_empty() {
            return Err(LabError::param("n", "empty mode grid"));
        }
        if self.forcings.is_empty() {
            return Err(LabError::param("forcing", "empty forcing ensemble"));
        }
        if let Some(p) = self.phis.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(LabError::param("phi", format!("flux must be finite and > 0, got {p}")));
        }
        if let Some(l) = self.ls.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(LabError::param("L", format!("period parameter must be > 0, got {l}")));
        }
        self.thresholds.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub phi: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub n: i64,
    pub nhat: f64,
    pub forcing_id: String,
    pub solver: SolverKind,
    pub measured: BTreeMap<String, f64>,
    pub ratios: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedRow {
    pub phi: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub n: i64,
    pub forcing_id: String,
    /// `false` for regime-gate skips, `true` for solver failures.
    pub failure: bool,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub skipped: Vec<SkippedRow>,
}

/// Squared `L²(−1, 1)` norms of `ψ`, …, `ψ‴`. `ψ″` and `ψ‴` come from the
/// vorticity `ω = ψ″ − n̂²ψ`, one differentiation instead of three.
fn derivative_norms(psi: &ModeProfile, omega: &ModeProfile) -> [f64; 4] {
    let k2 = psi.nhat() * psi.nhat();
    let d1 = psi.derivative_unchecked(1);
    let d2 = omega.zip_with(psi, |w, p| w + p * k2);
    let d3 = omega.derivative_unchecked(1).zip_with(&d1, |w, p| w + p * k2);
    [psi.norm_sq(), d1.norm_sq(), d2.norm_sq(), d3.norm_sq()]
}

/// Measured quantities of one mode solution.
fn measure(params: &ChannelParams, psi: &ModeProfile, omega: &ModeProfile, forcing: &ForcingMode) -> BTreeMap<String, f64> {
    let nh = params.nhat;
    let (n2, n4, n6) = (nh * nh, nh.powi(4), nh.powi(6));
    let d = derivative_norms(psi, omega);
    let omega_area = 2.0 * PI * params.l;
    // Velocity Sobolev norms of the single mode, summing ∂ₓ^a ∂_y^b over a + b ≤ k.
    let sobolev = |k: usize| {
        let mut s = 0.0;
        for b in 0..=k {
            let w: f64 = (0..=(k - b)).map(|a| n2.powi(a as i32)).sum();
            s += w * (d[b + 1] + n2 * d[b]);
        }
        (omega_area * s).sqrt()
    };
    let force_sq = forcing.f1.norm_sq() + forcing.f2.norm_sq();
    let rhs_sq = mode_rhs(forcing).resample(psi.grid()).norm_sq();
    let d1p = psi.derivative_unchecked(1);
    let weighted = params.phi
        * nh.abs()
        * (d1p.weighted_norm_sq(|y| 1.0 - y * y) + n2 * psi.weighted_norm_sq(|y| 1.0 - y * y));
    let (v_l2, v_h1, v_h2) = (sobolev(0), sobolev(1), sobolev(2));
    let f_l2 = (omega_area * force_sq).sqrt();
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: f64| {
        m.insert(k.to_string(), v);
    };
    put("psi", d[0].sqrt());
    put("psi_d1", d[1].sqrt());
    put("psi_d2", d[2].sqrt());
    put("psi_d3", d[3].sqrt());
    put("energy1", d[1] + n2 * d[0]);
    put("energy2", d[2] + n2 * d[1] + n4 * d[0]);
    put("energy3", d[3] + n2 * d[2] + n4 * d[1] + n6 * d[0]);
    put("weighted_transport", weighted);
    put("v_l2", v_l2);
    put("v_h1", v_h1);
    put("v_h2", v_h2);
    put("v_h53", h53_surrogate(v_h1, v_h2));
    put("f_l2", f_l2);
    put("force_sq", force_sq);
    put("rhs_sq", rhs_sq);
    put("v_l2_over_f", if f_l2 > 0.0 { v_l2 / f_l2 } else { 0.0 });
    m
}

/// Bound expressions with constant 1, keyed by ratio name.
fn bounds(solver: SolverKind, params: &ChannelParams, m: &BTreeMap<String, f64>, parity: Parity) -> Vec<(&'static str, &'static str, f64)> {
    let l1 = 1.0 + params.l;
    let pn = (params.phi * params.nhat).abs();
    let fsq = m["force_sq"];
    let rsq = m["rhs_sq"];
    let f_l2 = m["f_l2"];
    let mut b = Vec::new();
    match solver {
        SolverKind::Slip => {
            b.push(("slip_energy1_force", "energy1", l1.powi(2) / pn * fsq));
            b.push(("slip_energy2_force", "energy2", l1.powf(4.0 / 3.0) * pn.powf(-2.0 / 3.0) * fsq));
            b.push(("slip_energy3_force", "energy3", fsq));
            match parity {
                Parity::Odd => {
                    b.push(("slip_odd_energy1_force", "energy1", pn.powf(-4.0 / 3.0) * fsq));
                    b.push(("slip_odd_energy2_force", "energy2", pn.powf(-2.0 / 3.0) * fsq));
                    b.push(("slip_energy1_rhs", "energy1", pn.powf(-5.0 / 3.0) * rsq));
                    b.push(("slip_energy2_rhs", "energy2", pn.powf(-4.0 / 3.0) * rsq));
                    b.push(("slip_energy3_rhs", "energy3", pn.powf(-2.0 / 3.0) * rsq));
                }
                Parity::Even => {
                    b.push(("slip_energy1_rhs", "energy1", l1.powf(10.0 / 3.0) * pn.powf(-5.0 / 3.0) * rsq));
                    b.push(("slip_energy2_rhs", "energy2", l1.powf(8.0 / 3.0) * pn.powf(-4.0 / 3.0) * rsq));
                    b.push(("slip_energy3_rhs", "energy3", l1.powf(4.0 / 3.0) * pn.powf(-2.0 / 3.0) * rsq));
                }
                Parity::Mixed => {}
            }
        }
        SolverKind::Clamped | SolverKind::Decomposition => {
            b.push(("energy1_force", "energy1", l1.powi(2) / pn * fsq));
            b.push(("energy3_force", "energy3", l1.powf(5.0 / 3.0) * pn.powf(1.0 / 6.0) * fsq));
            b.push(("velocity_l2", "v_l2", l1 * pn.powf(-0.5) * f_l2));
            b.push(("velocity_h2", "v_h2", l1.powf(5.0 / 6.0) * pn.powf(1.0 / 12.0) * f_l2));
            b.push(("velocity_h53", "v_h53", f_l2));
            if solver == SolverKind::Decomposition {
                let c = l1.powf(5.0 / 6.0) * pn.powf(-0.75) * fsq.sqrt();
                b.push(("coefficient_b", "b", c));
                b.push(("coefficient_a", "a", c * (-params.nhat.abs()).exp()));
            }
        }
        SolverKind::HighFreq => {
            b.push(("high_frequency_energy", "high_frequency_lhs", fsq / (params.nhat * params.nhat)));
        }
    }
    b
}

fn rhs_parity(p: &ForcingProfile) -> Parity {
    // f = in̂F₂ − F₁′ has the parity of F₂ and of F₁′.
    let parity_of = |q: &Poly| {
        let even = q.coeffs().iter().skip(1).step_by(2).all(|c| *c == 0.0);
        let odd = q.coeffs().iter().step_by(2).all(|c| *c == 0.0);
        (even, odd)
    };
    let (e2, o2) = parity_of(&p.f2);
    let (e1d, o1d) = parity_of(&p.f1.derivative());
    if e2 && e1d {
        Parity::Even
    } else if o2 && o1d {
        Parity::Odd
    } else {
        Parity::Mixed
    }
}

fn gate(solver: SolverKind, th: &RegimeThresholds, phi: f64, l: f64, n: i64) -> Option<String> {
    match solver {
        SolverKind::HighFreq => {
            if !th.high_frequency_admissible(phi) {
                Some(format!("eps1^2 * phi = {} < 276", th.eps1 * th.eps1 * phi))
            } else if !th.is_high(phi, l, n) {
                Some(format!("|n| = {} below eps1*L*sqrt(phi) = {}", n.abs(), th.intermediate_cutoff(phi, l)))
            } else {
                None
            }
        }
        _ => (!th.is_intermediate(phi, l, n)).then(|| {
            format!(
                "|n| = {} outside [1, eps1*L*sqrt(phi) = {}]",
                n.abs(),
                th.intermediate_cutoff(phi, l)
            )
        }),
    }
}

/// A solved mode: its row plus the stream function and vorticity.
#[derive(Clone, Debug)]
pub struct ModeSolution {
    pub row: SweepRow,
    pub psi: ModeProfile,
    pub omega: ModeProfile,
}

/// Solves one mode with `solver` and measures it. No regime gate is applied;
/// a residual above [`ROW_RESIDUAL_GATE`] is an error.
pub fn solve_mode(solver: SolverKind, params: &ChannelParams, forcing: &ForcingProfile) -> Result<ModeSolution> {
    let grid = Grid::shared(resolution_for_beta(params.beta()))?;
    let base = base_flow(params.phi, &grid)?;
    let fm = forcing.on_grid(&grid, params.nhat);
    let f = mode_rhs(&fm);
    let parity = rhs_parity(forcing);
    let (mut measured, residual, bc, psi, omega) = match solver {
        SolverKind::Slip | SolverKind::Clamped | SolverKind::HighFreq => {
            let r = if solver == SolverKind::Slip {
                solve_slip(params, &base, &grid, &f)?
            } else {
                solve_clamped(params, &base, &grid, &f)?
            };
            (measure(params, &r.psi, &r.omega, &fm), r.residual, r.bc_defect, r.psi, r.omega)
        }
        SolverKind::Decomposition => {
            let d = assemble_decomposition(params, &base, &fm)?;
            let fm = forcing.on_grid(&d.grid, params.nhat);
            let mut m = measure(params, &d.total, &d.total_omega, &fm);
            m.insert("b".into(), d.b_e.norm() + d.b_o.norm());
            m.insert("a".into(), d.a_e.norm() + d.a_o.norm());
            m.insert("wall_ratio".into(), d.diagnostics.wall_ratio);
            (m, d.diagnostics.residual.max(), d.diagnostics.bc_defect, d.total, d.total_omega)
        }
    };
    if !(residual <= ROW_RESIDUAL_GATE) {
        return Err(LabError::Residual {
            value: residual,
            gate: ROW_RESIDUAL_GATE,
        });
    }
    measured.insert("residual".into(), residual);
    measured.insert("bc_defect".into(), bc);
    if solver == SolverKind::HighFreq {
        let v = measured["weighted_transport"] + measured["energy2"];
        measured.insert("high_frequency_lhs".into(), v);
    }
    let ratios = bounds(solver, params, &measured, parity)
        .into_iter()
        .map(|(name, key, bound)| (name.to_string(), measured[key] / bound))
        .collect();
    let row = SweepRow {
        phi: params.phi,
        l: params.l,
        n: params.n,
        nhat: params.nhat,
        forcing_id: forcing.id.clone(),
        solver,
        measured,
        ratios,
    };
    Ok(ModeSolution { row, psi, omega })
}

/// One row per `(Φ, L, n, forcing)` that passes the regime gate, ordered by
/// `(Φ, L, n, forcing id)`. Rows are solved in parallel; output order does
/// not depend on scheduling.
pub fn sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let mut items = Vec::new();
    for &phi in &spec.phis {
        for &l in &spec.ls {
            for &n in &spec.ns {
                for f in &spec.forcings {
                    items.push((phi, l, n, f));
                }
            }
        }
    }
    items.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.id.cmp(&b.3.id))
    });
    items.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1 && a.2 == b.2 && a.3.id == b.3.id);

    let results: Vec<std::result::Result<SweepRow, SkippedRow>> = items
        .par_iter()
        .map(|&(phi, l, n, f)| {
            let skip = |failure, reason| SkippedRow {
                phi,
                l,
                n,
                forcing_id: f.id.clone(),
                failure,
                reason,
            };
            if let Some(reason) = gate(spec.solver, &spec.thresholds, phi, l, n) {
                return Err(skip(false, reason));
            }
            let params = ChannelParams::new(phi, l, n).map_err(|e| skip(true, e.to_string()))?;
            solve_mode(spec.solver, &params, f)
                .map(|s| s.row)
                .map_err(|e| skip(true, e.to_string()))
        })
        .collect();
    let mut out = SweepOutcome {
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    for r in results {
        match r {
            Ok(row) => out.rows.push(row),
            Err(s) => out.skipped.push(s),
        }
    }
    Ok(out)
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_exponent(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(LabError::param("ys", "length differs from xs"));
    }
    if xs.len() < 3 {
        return Err(LabError::param("xs", format!("need at least 3 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(LabError::param("xs", "all values must be finite and positive"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(LabError::param("xs", "all x values coincide"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeAxis {
    Phi,
    Nhat,
}

/// One-sided slope requirement: fitted exponent ≤ `exponent + tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub name: String,
    pub solver: SolverKind,
    pub quantity: String,
    pub axis: SlopeAxis,
    pub exponent: f64,
    pub tolerance: f64,
    /// Restricts the check to one forcing profile.
    pub forcing: Option<String>,
}

impl SlopeCheck {
    fn new(name: &str, solver: SolverKind, quantity: &str, axis: SlopeAxis, exponent: f64, tolerance: f64) -> Self {
        SlopeCheck {
            name: name.into(),
            solver,
            quantity: quantity.into(),
            axis,
            exponent,
            tolerance,
            forcing: None,
        }
    }

    fn only(mut self, forcing: &str) -> Self {
        self.forcing = Some(forcing.into());
        self
    }

    /// The bound exponents the sweeps track.
    pub fn defaults() -> Vec<SlopeCheck> {
        use SlopeAxis::*;
        use SolverKind::*;
        vec![
            Self::new("velocity_l2_vs_phi", Clamped, "v_l2_over_f", Phi, -0.5, 0.1),
            Self::new("velocity_l2_vs_phi", Decomposition, "v_l2_over_f", Phi, -0.5, 0.1),
            Self::new("energy1_vs_phi", Clamped, "energy1", Phi, -1.0, 0.15),
            Self::new("coefficient_b_vs_phi", Decomposition, "b", Phi, -0.75, 0.15),
            // The −5/3 rate is proved for odd right-hand sides only.
            Self::new("slip_odd_energy1_vs_phi", Slip, "energy1", Phi, -5.0 / 3.0, 0.15).only("odd_rhs"),
            Self::new("high_frequency_energy2_vs_nhat", HighFreq, "energy2", Nhat, -2.0, 0.2),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub check: String,
    /// The fixed parameters of the series, e.g. `L=1 n=1 forcing=odd_rhs`.
    pub series: String,
    pub points: usize,
    pub slope: f64,
    pub exponent: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSpread {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub spread: f64,
    pub bounded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub version: u32,
    pub solver: SolverKind,
    pub rows: usize,
    pub skipped: Vec<SkippedRow>,
    pub ratio_spreads: Vec<RatioSpread>,
    pub slopes: Vec<SlopeFit>,
    pub sanity_factor: f64,
    pub pass: bool,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.skipped.iter().filter(|s| s.failure).count()
    }

    /// Fits each applicable slope check over every series with at least
    /// three distinct abscissae.
    pub fn slopes(&self, checks: &[SlopeCheck]) -> Vec<SlopeFit> {
        let mut fits = Vec::new();
        for c in checks {
            let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
            let rows = self
                .rows
                .iter()
                .filter(|r| r.solver == c.solver && c.forcing.as_ref().is_none_or(|f| *f == r.forcing_id));
            for r in rows {
                let Some(&v) = r.measured.get(&c.quantity) else { continue };
                let (key, x) = match c.axis {
                    SlopeAxis::Phi => (format!("L={} n={} forcing={}", r.l, r.n, r.forcing_id), r.phi),
                    SlopeAxis::Nhat => (format!("phi={} L={} forcing={}", r.phi, r.l, r.forcing_id), r.nhat.abs()),
                };
                series.entry(key).or_default().push((x, v));
            }
            for (key, pts) in series {
                if pts.len() < 3 {
                    continue;
                }
                let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
                let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
                if let Ok(slope) = fit_exponent(&xs, &ys) {
                    fits.push(SlopeFit {
                        check: c.name.clone(),
                        series: key,
                        points: pts.len(),
                        slope,
                        exponent: c.exponent,
                        tolerance: c.tolerance,
                        pass: slope <= c.exponent + c.tolerance,
                    });
                }
            }
        }
        fits
    }

    /// Max/min of every ratio over the row set.
    pub fn ratio_spreads(&self, sanity: f64) -> Vec<RatioSpread> {
        let mut acc: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
        for r in &self.rows {
            for (k, &v) in &r.ratios {
                let e = acc.entry(k).or_insert((f64::INFINITY, 0.0));
                e.0 = e.0.min(v);
                e.1 = e.1.max(v);
            }
        }
        acc.into_iter()
            .map(|(name, (min, max))| {
                let spread = if min > 0.0 { max / min } else { f64::INFINITY };
                RatioSpread {
                    name: name.to_string(),
                    min,
                    max,
                    spread,
                    bounded: spread <= sanity,
                }
            })
            .collect()
    }

    pub fn summary(&self, solver: SolverKind, checks: &[SlopeCheck], sanity: f64) -> SweepSummary {
        let ratio_spreads = self.ratio_spreads(sanity);
        let slopes = self.slopes(checks);
        let finite = self
            .rows
            .iter()
            .all(|r| r.measured.values().chain(r.ratios.values()).all(|v| v.is_finite() && *v >= 0.0));
        let pass = finite
            && self.failures() == 0
            && slopes.iter().all(|s| s.pass);
        SweepSummary {
            version: CSV_VERSION,
            solver,
            rows: self.rows.len(),
            skipped: self.skipped.clone(),
            ratio_spreads,
            slopes,
            sanity_factor: sanity,
            pass,
        }
    }

    /// Header names every measured and ratio column (union over rows, sorted);
    /// missing entries are empty cells. Floats use shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut mkeys: Vec<&str> = self.rows.iter().flat_map(|r| r.measured.keys().map(String::as_str)).collect();
        mkeys.sort_unstable();
        mkeys.dedup();
        let mut rkeys: Vec<&str> = self.rows.iter().flat_map(|r| r.ratios.keys().map(String::as_str)).collect();
        rkeys.sort_unstable();
        rkeys.dedup();
        let mut s = String::from("phi,L,n,nhat,forcing_id,solver");
        for k in &mkeys {
            let _ = write!(s, ",{k}");
        }
        for k in &rkeys {
            let _ = write!(s, ",ratio_{k}");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:e},{:e},{},{:e},{},{}", r.phi, r.l, r.n, r.nhat, r.forcing_id, r.solver.name());
            for k in &mkeys {
                match r.measured.get(*k) {
                    Some(v) => {
                        let _ = write!(s, ",{v:e}");
                    }
                    None => s.push(','),
                }
            }
            for k in &rkeys {
                match r.ratios.get(*k) {
                    Some(v) => {
                        let _ = write!(s, ",{v:e}");
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }
}
