//! Complex Airy function `Ai(z)` and its derivative.
//!
//! Three regimes:
//! - `|z| ≤ 2`: Maclaurin series;
//! - `|z| ≥ 10`: the large-argument expansion, with the connection formula
//!   `Ai(z) = −ω Ai(ωz) − ω² Ai(ω²z)` (`ω = e^{2πi/3}`) for `|arg z| > 2π/3`;
//! - in between: Taylor-series integration of `w″ = z w` along the ray
//!   through `z`, started from whichever end makes `Ai` the dominant solution
//!   in the direction of travel (inward from `|z| = 10` where `Ai` decays,
//!   outward from `|z| = 2` elsewhere).

use std::f64::consts::PI;

use crate::error::{LabError, Result};
use crate::spectral::C64;

/// `Ai(0) = 3^{−2/3} / Γ(2/3)`.
pub const AI0: f64 = 0.355_028_053_887_817_2;
/// `Ai′(0) = −3^{−1/3} / Γ(1/3)`.
pub const AI0_PRIME: f64 = -0.258_819_403_792_806_8;

const SERIES_RADIUS: f64 = 2.0;
const ASYMPTOTIC_RADIUS: f64 = 10.0;
const MAX_ARGUMENT: f64 = 1e4;
const STEP: f64 = 0.5;
/// Largest exponent magnitude before `Ai` would overflow.
const MAX_EXPONENT: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AiryValue {
    pub ai: C64,
    pub ai_prime: C64,
}

impl AiryValue {
    /// `Ai″(z) = z Ai(z)`.
    pub fn ai_second(&self, z: C64) -> C64 {
        z * self.ai
    }
}

/// Evaluates `Ai(z)` and `Ai′(z)` for `|z| ≤ 10⁴`.
pub fn airy_ai(z: C64) -> Result<AiryValue> {
    if !(z.re.is_finite() && z.im.is_finite()) || z.norm() > MAX_ARGUMENT {
        return Err(LabError::AiryOutOfRange { re: z.re, im: z.im });
    }
    let r = z.norm();
    if r <= SERIES_RADIUS {
        return Ok(maclaurin(z));
    }
    if r >= ASYMPTOTIC_RADIUS {
        return large_argument(z);
    }
    let dir = z / r;
    let theta = z.arg().abs();
    if theta < PI / 3.0 {
        let start = dir * ASYMPTOTIC_RADIUS;
        let v = large_argument(start)?;
        Ok(propagate(start, v, z))
    } else {
        let start = dir * SERIES_RADIUS;
        Ok(propagate(start, maclaurin(start), z))
    }
}

fn maclaurin(z: C64) -> AiryValue {
    if z.norm() == 0.0 {
        return AiryValue {
            ai: C64::new(AI0, 0.0),
            ai_prime: C64::new(AI0_PRIME, 0.0),
        };
    }
    // Ai = c1 f − c2 g with f = Σ 3^k (1/3)_k z^{3k}/(3k)!, g = Σ 3^k (2/3)_k z^{3k+1}/(3k+1)!.
    let z3 = z * z * z;
    let mut f = C64::new(1.0, 0.0);
    let mut g = z;
    let mut fp = C64::new(0.0, 0.0);
    let mut gp = C64::new(1.0, 0.0);
    let mut tf = C64::new(1.0, 0.0);
    let mut tg = z;
    for k in 1..200 {
        let kf = k as f64;
        // Term ratios: f_k/f_{k−1} = z³/((3k−1)(3k)), g_k/g_{k−1} = z³/((3k)(3k+1)).
        tf *= z3 / ((3.0 * kf - 1.0) * (3.0 * kf));
        tg *= z3 / ((3.0 * kf) * (3.0 * kf + 1.0));
        f += tf;
        g += tg;
        // Derivatives: d/dz z^{3k} = 3k z^{3k−1}.
        fp += tf * (3.0 * kf) / z;
        gp += tg * (3.0 * kf + 1.0) / z;
        if tf.norm() <= 1e-17 * f.norm() && tg.norm() <= 1e-17 * g.norm() {
            break;
        }
    }
    let c1 = AI0;
    let c2 = -AI0_PRIME;
    AiryValue {
        ai: f * c1 - g * c2,
        ai_prime: fp * c1 - gp * c2,
    }
}

/// `Ai` and `Ai′` for `|z| ≥ 10`.
fn large_argument(z: C64) -> Result<AiryValue> {
    if z.arg().abs() <= 2.0 * PI / 3.0 {
        return asymptotic(z);
    }
    let w = C64::from_polar(1.0, 2.0 * PI / 3.0);
    let w2 = w * w;
    let a = asymptotic(w * z)?;
    let b = asymptotic(w2 * z)?;
    Ok(AiryValue {
        ai: -w * a.ai - w2 * b.ai,
        // d/dz Ai(ωz) = ω Ai′(ωz).
        ai_prime: -w * w * a.ai_prime - w2 * w2 * b.ai_prime,
    })
}

/// Large-argument expansion, valid for `|arg z| ≤ 2π/3`.
fn asymptotic(z: C64) -> Result<AiryValue> {
    let sqrt_z = z.sqrt();
    let zeta = z * sqrt_z * (2.0 / 3.0);
    if -zeta.re > MAX_EXPONENT {
        return Err(LabError::AiryOutOfRange { re: z.re, im: z.im });
    }
    let inv = 1.0 / zeta;
    let mut su = C64::new(1.0, 0.0);
    let mut sv = C64::new(1.0, 0.0);
    let mut u = 1.0f64;
    let mut pw = C64::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 1..100 {
        let kf = k as f64;
        u *= (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / ((2.0 * kf - 1.0) * 216.0 * kf);
        let v = -(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * u;
        pw *= -inv;
        let tu = pw * u;
        let size = tu.norm();
        // Stop at the smallest term (optimal truncation) or at rounding level.
        if size >= last {
            break;
        }
        su += tu;
        sv += pw * v;
        last = size;
        if size < 1e-17 {
            break;
        }
    }
    let e = (-zeta).exp();
    let quarter = sqrt_z.sqrt();
    let pref = 1.0 / (2.0 * PI.sqrt());
    Ok(AiryValue {
        ai: e * su * pref / quarter,
        ai_prime: -e * sv * pref * quarter,
    })
}

/// Integrates `w″ = z w` from `start` to `end` along the segment.
fn propagate(start: C64, init: AiryValue, end: C64) -> AiryValue {
    let total = end - start;
    let steps = (total.norm() / STEP).ceil().max(1.0) as usize;
    let h = total / steps as f64;
    let mut z = start;
    let (mut w, mut dw) = (init.ai, init.ai_prime);
    for _ in 0..steps {
        let (a, b) = taylor_step(z, w, dw, h);
        w = a;
        dw = b;
        z += h;
    }
    AiryValue { ai: w, ai_prime: dw }
}

/// One Taylor step of `w″ = z w` from `z0`, returning `(w, w′)` at `z0 + h`.
pub(crate) fn taylor_step(z0: C64, w0: C64, dw0: C64, h: C64) -> (C64, C64) {
    // Coefficients of w(z0 + t) = Σ a_k t^k:
    // (k+2)(k+1) a_{k+2} = z0 a_k + a_{k−1}.
    let mut a = [C64::new(0.0, 0.0); 80];
    a[0] = w0;
    a[1] = dw0;
    a[2] = z0 * w0 / 2.0;
    let mut w = a[0] + a[1] * h + a[2] * h * h;
    let mut dw = a[1] + a[2] * h * 2.0;
    let mut hp = h * h;
    for k in 3..a.len() {
        let kf = k as f64;
        a[k] = (z0 * a[k - 2] + a[k - 3]) / (kf * (kf - 1.0));
        let dterm = a[k] * hp * kf;
        hp *= h;
        let term = a[k] * hp;
        w += term;
        dw += dterm;
        if term.norm() <= 1e-18 * w.norm() && dterm.norm() <= 1e-18 * dw.norm() && k > 8 {
            break;
        }
    }
    (w, dw)
}
