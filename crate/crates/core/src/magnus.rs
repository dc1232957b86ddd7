//! Interaction-frame generator `Γ(t) = Q₀ᵀ(t) Γ̂ Q₀(t)` and the first two
//! cumulants of the average decoherence operator,
//!
//! ```text
//! Γ̄⁽⁰⁾ = (1/τ) ∫_0^τ Γ(t) dt
//! Γ̄⁽¹⁾ = −(1/2τ) ∫_0^τ dt₂ ∫_0^{t₂} dt₁ [Γ(t₂), Γ(t₁)]
//! ```
//!
//! so that `S(nτ) ≈ exp(−nτ Γ̄)` in the rotating frame.

use std::str::FromStr;

use serde::Serialize;

use crate::coeffs::{min_panels_for, ShapeCoefficients};
use crate::error::{Error, Result};
use crate::linalg::{expm, max_abs, Mat3};
use crate::quadrature::PanelGrid;
use crate::rates::{build_generator, RateModel};
use crate::sequences::{Sequence, Slot};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CumulantResult {
    pub gamma0: Mat3,
    pub gamma1: Mat3,
    /// Largest elementwise change between the last two grid refinements.
    pub residual_norm: f64,
}

impl CumulantResult {
    pub fn total(&self) -> Mat3 {
        self.gamma0 + self.gamma1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CumulantOptions {
    /// Absolute tolerance, applied after scaling by the size of `Γ̂`.
    pub tolerance: f64,
    pub max_doublings: u32,
}

impl Default for CumulantOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_doublings: 6,
        }
    }
}

/// `Γ(t)` for a static field.
pub fn interaction_generator(seq: &Sequence, model: &RateModel, t: f64) -> Result<Mat3> {
    let g = build_generator(model)?.matrix;
    let q = seq.control_rotation(t);
    Ok(q.transpose() * g * q)
}

/// Panels per half slot at the coarsest level.
fn base_panels(slot: &Slot) -> usize {
    match slot {
        Slot::Free => 1,
        Slot::Pulse(p) if p.shape.is_delta() => 1,
        Slot::Pulse(p) => (min_panels_for(&p.shape) / 2).max(4),
    }
}

fn cumulants_at_level(seq: &Sequence, gen: &Mat3, level: u32) -> (Mat3, Mat3) {
    let tau_p = seq.tau_p();
    let mut sum0 = Mat3::zeros();
    let mut sum1 = Mat3::zeros();
    let mut before = Mat3::zeros();
    for (k, slot) in seq.slots().iter().enumerate() {
        let start = k as f64 * tau_p;
        // an even panel count puts the slot midpoint on a panel boundary
        let panels = 2 * (base_panels(slot) << level);
        let grid = PanelGrid::uniform(start, start + tau_p, panels);
        let prior = seq.rotation_before(k);
        let values: Vec<Mat3> = grid
            .nodes()
            .iter()
            .map(|&t| {
                let q = slot.rotation_at(t - start) * prior;
                q.transpose() * gen * q
            })
            .collect();
        let running = grid.cumulative_by(&values, Mat3::zeros());
        let mut slot_total = Mat3::zeros();
        for ((g, inner), w) in values.iter().zip(&running).zip(grid.weights()) {
            let integral = before + inner;
            sum1 += (g * integral - integral * g) * *w;
            slot_total += g * *w;
        }
        sum0 += slot_total;
        before += slot_total;
    }
    let tau = seq.period();
    (sum0 / tau, sum1 * (-0.5 / tau))
}

/// Numeric `Γ̄⁽⁰⁾` and `Γ̄⁽¹⁾` for a static-field model.
pub fn cumulants(seq: &Sequence, model: &RateModel) -> Result<CumulantResult> {
    cumulants_with(seq, model, &CumulantOptions::default())
}

pub fn cumulants_with(
    seq: &Sequence,
    model: &RateModel,
    opts: &CumulantOptions,
) -> Result<CumulantResult> {
    let gen = build_generator(model)?.matrix;
    let scale = max_abs(&gen).max(1e-300);
    let tol0 = opts.tolerance * scale;
    let tol1 = opts.tolerance * scale * scale * seq.period().max(1.0);
    let (mut g0, mut g1) = cumulants_at_level(seq, &gen, 0);
    let mut residual = f64::INFINITY;
    for level in 1..=opts.max_doublings {
        let (f0, f1) = cumulants_at_level(seq, &gen, level);
        let d0 = max_abs(&(f0 - g0));
        let d1 = max_abs(&(f1 - g1));
        residual = d0.max(d1);
        g0 = f0;
        g1 = f1;
        if d0 <= tol0 && d1 <= tol1 {
            return Ok(CumulantResult {
                gamma0: g0,
                gamma1: g1,
                residual_norm: residual,
            });
        }
    }
    Err(Error::QuadratureNotConverged {
        estimate: residual,
        tolerance: tol0,
    })
}

/// `S(nτ) = exp(−nτ (Γ̄⁽⁰⁾ + Γ̄⁽¹⁾))`.
pub fn effective_evolution(cum: &CumulantResult, n_periods: f64, tau: f64) -> Mat3 {
    expm(&(cum.total() * (-n_periods * tau)))
}

/// Closed-form leading-order matrices, written in the right-handed rotation
/// convention used throughout this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AnalyticCase {
    /// Single hard π pulse about x (also sequence 2s).
    HardPiX,
    /// Single symmetric soft π pulse about x.
    SoftPiX,
    /// Sequence 4p of hard π pulses.
    Hard4p,
    /// Sequence 4p (and 8a) of symmetric soft π pulses.
    Soft4p,
    /// Sequence 12 of hard π/2 pulses, NMR rates.
    Seq12Nmr,
    /// Sequences 24 and 48 of symmetric π/2 pulses, NMR rates.
    Seq24Nmr,
    Seq48Nmr,
}

impl AnalyticCase {
    pub const ALL: [AnalyticCase; 7] = [
        AnalyticCase::HardPiX,
        AnalyticCase::SoftPiX,
        AnalyticCase::Hard4p,
        AnalyticCase::Soft4p,
        AnalyticCase::Seq12Nmr,
        AnalyticCase::Seq24Nmr,
        AnalyticCase::Seq48Nmr,
    ];

    pub fn id(self) -> &'static str {
        match self {
            AnalyticCase::HardPiX => "hard_pi_x",
            AnalyticCase::SoftPiX => "soft_pi_x",
            AnalyticCase::Hard4p => "hard_4p",
            AnalyticCase::Soft4p => "soft_4p",
            AnalyticCase::Seq12Nmr => "seq12_nmr",
            AnalyticCase::Seq24Nmr => "seq24_nmr",
            AnalyticCase::Seq48Nmr => "seq48_nmr",
        }
    }

    /// Catalogue sequence the formula describes.
    pub fn sequence(self) -> &'static str {
        match self {
            AnalyticCase::HardPiX | AnalyticCase::SoftPiX => "X",
            AnalyticCase::Hard4p | AnalyticCase::Soft4p => "4p",
            AnalyticCase::Seq12Nmr => "12",
            AnalyticCase::Seq24Nmr => "24",
            AnalyticCase::Seq48Nmr => "48",
        }
    }

    pub fn needs_nmr(self) -> bool {
        matches!(
            self,
            AnalyticCase::Seq12Nmr | AnalyticCase::Seq24Nmr | AnalyticCase::Seq48Nmr
        )
    }
}

impl FromStr for AnalyticCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AnalyticCase::ALL
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| Error::UnsupportedCase(s.to_string()))
    }
}

/// Closed-form `Γ̄⁽⁰⁾` with the supplied pulse coefficients substituted.
pub fn analytic_gamma0(
    case: AnalyticCase,
    model: &RateModel,
    c: &ShapeCoefficients,
) -> Result<Mat3> {
    model.validate()?;
    let g = &model.gamma_hat;
    let (gxx, gyy, gzz) = (g[(0, 0)], g[(1, 1)], g[(2, 2)]);
    let (gxy, gxz, gyz) = (g[(0, 1)], g[(0, 2)], g[(1, 2)]);
    let b = &model.b;
    let (u, u2) = (c.upsilon, c.upsilon2);
    let m = match case {
        AnalyticCase::HardPiX => Mat3::new(
            gyy + gzz,
            0.0,
            0.0,
            0.0,
            gzz + gxx,
            b.x - gyz,
            0.0,
            -b.x - gyz,
            gxx + gyy,
        ),
        AnalyticCase::SoftPiX => Mat3::new(
            gyy + gzz,
            -u * (b.y + gxz),
            -u * (b.z - gxy),
            -u * (-b.y + gxz),
            gxx + gyy * (1.0 + u2) / 2.0 + gzz * (1.0 - u2) / 2.0,
            u2 * gyz + b.x,
            u * (b.z + gxy),
            u2 * gyz - b.x,
            gxx + gyy * (1.0 - u2) / 2.0 + gzz * (1.0 + u2) / 2.0,
        ),
        AnalyticCase::Hard4p => {
            Mat3::from_diagonal(&crate::linalg::Vec3::new(gyy + gzz, gxx + gzz, gxx + gyy))
        }
        AnalyticCase::Soft4p => Mat3::new(
            gyy + gzz * (3.0 - u2) / 4.0 + gxx * (1.0 + u2) / 4.0,
            -u / 2.0 * (b.x + gyz),
            u / 2.0 * (gxy - b.z),
            u / 2.0 * (b.x - gyz),
            gxx + gzz * (3.0 - u2) / 4.0 + gyy * (1.0 + u2) / 4.0,
            0.0,
            u / 2.0 * (b.z + gxy),
            0.0,
            (gxx + gyy) * (3.0 - u2) / 4.0 + gzz * (1.0 + u2) / 2.0,
        ),
        AnalyticCase::Seq12Nmr | AnalyticCase::Seq24Nmr | AnalyticCase::Seq48Nmr => {
            let (gamma, gamma_phi) = model.nmr_params().ok_or_else(|| {
                Error::UnsupportedCase(format!("{} needs NMR-form rates", case.id()))
            })?;
            let s = 2.0 * gamma + gamma_phi;
            if case == AnalyticCase::Seq12Nmr {
                Mat3::new(
                    4.0 * s,
                    2.0 * b.y,
                    -b.z,
                    -2.0 * b.y,
                    4.0 * s,
                    b.z,
                    b.z,
                    -b.z,
                    4.0 * s,
                ) / 6.0
            } else {
                Mat3::identity() * (2.0 / 3.0) * s
            }
        }
    };
    Ok(m)
}
