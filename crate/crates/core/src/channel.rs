//! Poiseuille base flow, per-mode parameters and the conversions between
//! stream function, velocity and vorticity used by every solver.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::spectral::{Grid, ModeProfile, C64};

/// Poiseuille profile `U = (3/4)Φ(1 − y²)` with flux `∫U = Φ`.
#[derive(Clone, Debug)]
pub struct BaseFlow {
    pub phi: f64,
    pub u: ModeProfile,
    pub u_prime: ModeProfile,
    pub u_double_prime: ModeProfile,
}

pub fn base_flow(phi: f64, grid: &Arc<Grid>) -> Result<BaseFlow> {
    if !(phi >= 0.0 && phi.is_finite()) {
        return Err(LabError::param("phi", format!("flux must be finite and >= 0, got {phi}")));
    }
    let u = ModeProfile::from_real_fn(Arc::clone(grid), 0.0, |y| 0.75 * phi * (1.0 - y) * (1.0 + y));
    let u_prime = ModeProfile::from_real_fn(Arc::clone(grid), 0.0, |y| -1.5 * phi * y);
    let u_double_prime = ModeProfile::from_real_fn(Arc::clone(grid), 0.0, |_| -1.5 * phi);
    Ok(BaseFlow {
        phi,
        u,
        u_prime,
        u_double_prime,
    })
}

impl BaseFlow {
    /// The same flow resampled on another grid (exact: `U` is quadratic).
    pub fn on_grid(&self, grid: &Arc<Grid>) -> BaseFlow {
        base_flow(self.phi, grid).expect("phi already validated")
    }
}

/// Flux, period parameter and mode index of a single Fourier mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub phi: f64,
    pub l: f64,
    pub n: i64,
    pub nhat: f64,
}

impl ChannelParams {
    pub fn new(phi: f64, l: f64, n: i64) -> Result<Self> {
        if !(phi >= 0.0 && phi.is_finite()) {
            return Err(LabError::param("phi", format!("flux must be finite and >= 0, got {phi}")));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(LabError::param("L", format!("period parameter must be > 0, got {l}")));
        }
        Ok(ChannelParams {
            phi,
            l,
            n,
            nhat: n as f64 / l,
        })
    }

    pub fn with_mode(&self, n: i64) -> Self {
        ChannelParams {
            n,
            nhat: n as f64 / self.l,
            ..*self
        }
    }

    /// Boundary-layer scale `β = |3Φn̂/2|^{1/3}`.
    pub fn beta(&self) -> f64 {
        (1.5 * self.phi * self.nhat).abs().cbrt()
    }
}

/// Stand-ins for the unspecified regime constants `C̃` and `ε₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeThresholds {
    pub c_tilde: f64,
    pub eps1: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds {
            c_tilde: 1.0,
            eps1: 0.1,
        }
    }
}

impl RegimeThresholds {
    pub fn new(c_tilde: f64, eps1: f64) -> Result<Self> {
        let t = RegimeThresholds { c_tilde, eps1 };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_tilde > 0.0 && self.c_tilde.is_finite()) {
            return Err(LabError::param("c_tilde", "must be > 0"));
        }
        if !(self.eps1 > 0.0 && self.eps1.is_finite()) {
            return Err(LabError::param("eps1", "must be > 0"));
        }
        Ok(())
    }

    /// Whether `Φ ≥ C̃ (1 + L)^63`.
    pub fn large_flux(&self, phi: f64, l: f64) -> bool {
        phi >= self.c_tilde * (1.0 + l).powi(63)
    }

    /// Upper end `ε₁ L √Φ` of the intermediate-frequency band.
    pub fn intermediate_cutoff(&self, phi: f64, l: f64) -> f64 {
        self.eps1 * l * phi.sqrt()
    }

    pub fn is_intermediate(&self, phi: f64, l: f64, n: i64) -> bool {
        let a = n.unsigned_abs() as f64;
        a >= 1.0 && a <= self.intermediate_cutoff(phi, l)
    }

    pub fn is_high(&self, phi: f64, l: f64, n: i64) -> bool {
        n.unsigned_abs() as f64 >= self.intermediate_cutoff(phi, l)
    }

    /// The high-frequency argument needs `ε₁² Φ ≥ 276`.
    pub fn high_frequency_admissible(&self, phi: f64) -> bool {
        self.eps1 * self.eps1 * phi >= 276.0
    }
}

/// The `n`-th Fourier mode of the body force.
#[derive(Clone, Debug)]
pub struct ForcingMode {
    pub f1: ModeProfile,
    pub f2: ModeProfile,
}

impl ForcingMode {
    pub fn new(f1: ModeProfile, f2: ModeProfile) -> Result<Self> {
        if !f1.same_grid(&f2) {
            return Err(LabError::param("forcing", "F1 and F2 must share a grid"));
        }
        if f1.nhat() != f2.nhat() {
            return Err(LabError::param("forcing", "F1 and F2 must share the wavenumber"));
        }
        Ok(ForcingMode { f1, f2 })
    }

    pub fn nhat(&self) -> f64 {
        self.f1.nhat()
    }
}

/// Vorticity of the forcing, `f = i n̂ F₂ − F₁′`.
pub fn mode_rhs(f: &ForcingMode) -> ModeProfile {
    let i_nhat = C64::new(0.0, f.nhat());
    let df1 = f.f1.derivative_unchecked(1);
    f.f2.zip_with(&df1, |a, b| i_nhat * a - b)
}

/// `ω = (d²/dy² − n̂²) ψ`.
pub fn vorticity_of(psi: &ModeProfile) -> ModeProfile {
    let k2 = psi.nhat() * psi.nhat();
    let d2 = psi.derivative_unchecked(2);
    d2.zip_with(psi, |a, b| a - b * k2)
}

/// `(v₁, v₂) = (−ψ′, i n̂ ψ)`.
pub fn velocity_of(psi: &ModeProfile) -> (ModeProfile, ModeProfile) {
    let v1 = -&psi.derivative_unchecked(1);
    let v2 = psi.scale(C64::new(0.0, psi.nhat()));
    (v1, v2)
}

/// `i n̂ v₂ − v₁′`, the vorticity of a velocity mode.
pub fn curl(v1: &ModeProfile, v2: &ModeProfile) -> ModeProfile {
    let i_nhat = C64::new(0.0, v1.nhat());
    let dv1 = v1.derivative_unchecked(1);
    v2.zip_with(&dv1, |a, b| i_nhat * a - b)
}

/// `i n̂ v₁ + v₂′`, which vanishes for divergence-free modes.
pub fn divergence(v1: &ModeProfile, v2: &ModeProfile) -> ModeProfile {
    let i_nhat = C64::new(0.0, v1.nhat());
    let dv2 = v2.derivative_unchecked(1);
    v1.zip_with(&dv2, |a, b| i_nhat * a + b)
}
