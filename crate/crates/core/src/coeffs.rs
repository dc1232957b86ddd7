//! The seven scalars characterizing a symmetric pulse to second order.
//!
//! With `ϕ(t) = φ(t) − φ₀/2` and `⟨·⟩` the pulse average (single) or the
//! lower-triangle average `τ_p⁻² ∫dt ∫_0^t dt'` (double):
//!
//! ```text
//! υ  = ⟨cos ϕ⟩           υ₂ = ⟨cos 2ϕ⟩
//! ζ  = ⟨(t/τ_p − ½) sin ϕ⟩   ζ₂ = ⟨(t/τ_p − ½) sin 2ϕ⟩
//! α  = ⟨sin(ϕ − ϕ')⟩      α₂ = ⟨sin(2ϕ − 2ϕ')⟩      μ = ⟨sin(2ϕ − ϕ')⟩
//! ```
//!
//! The double averages are separable, e.g.
//! `α = ∫ dt [sin ϕ(t) ∫_0^t cos ϕ' − cos ϕ(t) ∫_0^t sin ϕ']`, so they are
//! evaluated with running integrals on a single grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{PanelGrid, QuadOptions};
use crate::shapes::{format_angle, PulseShape, ShapeKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeCoefficients {
    pub upsilon: f64,
    pub upsilon2: f64,
    pub alpha: f64,
    pub alpha2: f64,
    pub zeta: f64,
    pub zeta2: f64,
    pub mu: f64,
}

impl ShapeCoefficients {
    /// Closed forms for an instantaneous pulse of angle `phi0`.
    pub fn delta(phi0: f64) -> Self {
        Self {
            upsilon: (phi0 / 2.0).cos(),
            upsilon2: phi0.cos(),
            alpha: phi0.sin() / 4.0,
            alpha2: (2.0 * phi0).sin() / 4.0,
            zeta: (phi0 / 2.0).sin() / 4.0,
            zeta2: phi0.sin() / 4.0,
            mu: (1.5 * phi0).sin() / 4.0,
        }
    }

    pub fn as_array(&self) -> [f64; 7] {
        [
            self.upsilon,
            self.upsilon2,
            self.alpha,
            self.alpha2,
            self.zeta,
            self.zeta2,
            self.mu,
        ]
    }

    /// Values in the column order of the coefficient table:
    /// `υ, υ₂, α/2, α₂/2, ζ, ζ₂, μ`.
    pub fn table_row(&self) -> [f64; 7] {
        [
            self.upsilon,
            self.upsilon2,
            self.alpha / 2.0,
            self.alpha2 / 2.0,
            self.zeta,
            self.zeta2,
            self.mu,
        ]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Column labels matching [`ShapeCoefficients::table_row`].
pub const TABLE_COLUMNS: [&str; 7] = [
    "upsilon",
    "upsilon2",
    "alpha_half",
    "alpha2_half",
    "zeta",
    "zeta2",
    "mu",
];

pub const CSV_HEADER: &str =
    "shape,phi0,upsilon,upsilon2,alpha_half,alpha2_half,zeta,zeta2,mu,alpha,alpha2";

pub fn csv_row(shape: &PulseShape, c: &ShapeCoefficients) -> String {
    let r = c.table_row();
    format!(
        "{},{},{:.8},{:.8},{:.8},{:.8},{:.8},{:.8},{:.8},{:.8},{:.8}",
        shape.name,
        format_angle(shape.phi0),
        r[0],
        r[1],
        r[2],
        r[3],
        r[4],
        r[5],
        r[6],
        c.alpha,
        c.alpha2
    )
}

/// Panels needed to resolve a shape: at least 32 nodes per Gaussian width.
pub fn min_panels_for(shape: &PulseShape) -> usize {
    match shape.kind {
        ShapeKind::Gaussian { width } => ((4.0 / width).ceil() as usize).max(16),
        _ => 16,
    }
}

/// Coefficients on a fixed grid of `panels` Gauss-Legendre panels.
pub fn coefficients_on_grid(shape: &PulseShape, panels: usize) -> ShapeCoefficients {
    let tau_p = shape.tau_p;
    let grid = PanelGrid::uniform(0.0, tau_p, panels);
    let n = grid.nodes().len();
    let half = 0.5 * shape.phi0;
    let mut c1 = Vec::with_capacity(n);
    let mut s1 = Vec::with_capacity(n);
    let mut c2 = Vec::with_capacity(n);
    let mut s2 = Vec::with_capacity(n);
    for &t in grid.nodes() {
        let phi = shape.phase_unchecked(t) - half;
        let (s, c) = phi.sin_cos();
        let (ss, cc) = (2.0 * phi).sin_cos();
        c1.push(c);
        s1.push(s);
        c2.push(cc);
        s2.push(ss);
    }
    let cum_c1 = grid.cumulative(&c1);
    let cum_s1 = grid.cumulative(&s1);
    let cum_c2 = grid.cumulative(&c2);
    let cum_s2 = grid.cumulative(&s2);

    let mut out = ShapeCoefficients {
        upsilon: 0.0,
        upsilon2: 0.0,
        alpha: 0.0,
        alpha2: 0.0,
        zeta: 0.0,
        zeta2: 0.0,
        mu: 0.0,
    };
    for i in 0..n {
        let w = grid.weights()[i];
        let x = grid.nodes()[i] / tau_p - 0.5;
        out.upsilon += w * c1[i];
        out.upsilon2 += w * c2[i];
        out.zeta += w * x * s1[i];
        out.zeta2 += w * x * s2[i];
        out.alpha += w * (s1[i] * cum_c1[i] - c1[i] * cum_s1[i]);
        out.alpha2 += w * (s2[i] * cum_c2[i] - c2[i] * cum_s2[i]);
        out.mu += w * (s2[i] * cum_c1[i] - c2[i] * cum_s1[i]);
    }
    let inv = 1.0 / tau_p;
    let inv2 = inv * inv;
    out.upsilon *= inv;
    out.upsilon2 *= inv;
    out.zeta *= inv;
    out.zeta2 *= inv;
    out.alpha *= inv2;
    out.alpha2 *= inv2;
    out.mu *= inv2;
    out
}

/// All seven coefficients of a symmetric pulse. Delta pulses use the closed
/// forms; other shapes are refined until successive grids agree.
pub fn compute_coefficients(shape: &PulseShape) -> Result<ShapeCoefficients> {
    compute_coefficients_with(shape, &QuadOptions::default())
}

pub fn compute_coefficients_with(
    shape: &PulseShape,
    opts: &QuadOptions,
) -> Result<ShapeCoefficients> {
    if shape.is_delta() {
        return Ok(ShapeCoefficients::delta(shape.phi0));
    }
    let deviation = shape.symmetry_deviation();
    let scale = shape.peak_amplitude().max(1.0);
    if deviation > 1e-9 * scale {
        return Err(Error::AsymmetricPulse(deviation));
    }
    let mut panels = opts.min_panels.max(min_panels_for(shape));
    panels += panels % 2;
    let mut coarse = coefficients_on_grid(shape, panels);
    let mut estimate = f64::INFINITY;
    while panels * 2 <= opts.max_panels {
        panels *= 2;
        let fine = coefficients_on_grid(shape, panels);
        estimate = fine.max_abs_diff(&coarse);
        if estimate <= opts.tolerance {
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(Error::QuadratureNotConverged {
        estimate,
        tolerance: opts.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{double_average, pulse_average};
    use crate::shapes::ShapeRegistry;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn delta_pi_pulse_averages() {
        let d = PulseShape::delta(PI);
        let o = QuadOptions::default();
        let phi = |t: f64| d.phase_unchecked(t) - PI / 2.0;
        assert_abs_diff_eq!(
            pulse_average(|t| phi(t).cos(), 1.0, &o).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            pulse_average(|t| (2.0 * phi(t)).cos(), 1.0, &o).unwrap(),
            -1.0,
            epsilon = 1e-14
        );
        let mu = double_average(|t, s| (2.0 * phi(t) - phi(s)).sin(), 1.0, &o).unwrap();
        assert_abs_diff_eq!(mu, -0.25, epsilon = 1e-14);
    }

    #[test]
    fn delta_alpha_by_nested_quadrature() {
        let o = QuadOptions::default();
        for phi0 in [PI / 2.0, PI, 1.234] {
            let d = PulseShape::delta(phi0);
            let phi = |t: f64| d.phase_unchecked(t) - phi0 / 2.0;
            let alpha = double_average(|t, s| (phi(t) - phi(s)).sin(), 1.0, &o).unwrap();
            assert_abs_diff_eq!(alpha, phi0.sin() / 4.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn delta_closed_forms() {
        let c = compute_coefficients(&PulseShape::delta(PI / 2.0)).unwrap();
        let s2 = 2f64.sqrt();
        assert_abs_diff_eq!(c.upsilon, s2 / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.upsilon2, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.zeta, s2 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.zeta2, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(c.mu, s2 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.alpha / 2.0, 0.125, epsilon = 1e-15);
    }

    /// The running-integral route must agree with the generic nested
    /// quadrature over the triangle.
    #[test]
    fn separable_route_matches_nested_quadrature() {
        let reg = ShapeRegistry::builtin();
        let o = QuadOptions {
            tolerance: 1e-9,
            min_panels: 16,
            max_panels: 256,
        };
        for name in ["G010_pi", "F1", "W21_pi", "W12_pi2"] {
            let s = reg.lookup(name).unwrap();
            let c = compute_coefficients(&s).unwrap();
            let h = s.phi0 / 2.0;
            let phi = |t: f64| s.phase_unchecked(t) - h;
            let alpha = double_average(|t, u| (phi(t) - phi(u)).sin(), 1.0, &o).unwrap();
            let alpha2 =
                double_average(|t, u| (2.0 * phi(t) - 2.0 * phi(u)).sin(), 1.0, &o).unwrap();
            let mu = double_average(|t, u| (2.0 * phi(t) - phi(u)).sin(), 1.0, &o).unwrap();
            let zeta = pulse_average(|t| (t - 0.5) * phi(t).sin(), 1.0, &o).unwrap();
            assert_abs_diff_eq!(c.alpha, alpha, epsilon = 1e-8);
            assert_abs_diff_eq!(c.alpha2, alpha2, epsilon = 1e-8);
            assert_abs_diff_eq!(c.mu, mu, epsilon = 1e-8);
            assert_abs_diff_eq!(c.zeta, zeta, epsilon = 1e-9);
        }
    }

    #[test]
    fn gaussian_010_row() {
        let g = ShapeRegistry::builtin().lookup("G010_pi").unwrap();
        let c = compute_coefficients(&g).unwrap();
        assert_abs_diff_eq!(c.upsilon, 0.2107, epsilon = 5e-4);
        assert_abs_diff_eq!(c.upsilon2, -0.7086, epsilon = 5e-4);
        assert_abs_diff_eq!(c.zeta, 0.2458, epsilon = 5e-4);
        assert_abs_diff_eq!(c.mu, -0.1035, epsilon = 5e-4);
    }

    #[test]
    fn f1_row() {
        let f = ShapeRegistry::builtin().lookup("F1").unwrap();
        let c = compute_coefficients(&f).unwrap();
        assert_abs_diff_eq!(c.upsilon, 0.0018, epsilon = 5e-4);
        assert_abs_diff_eq!(c.upsilon2, 0.3307, epsilon = 5e-4);
        assert_abs_diff_eq!(c.zeta, 0.1134, epsilon = 5e-4);
    }

    #[test]
    fn narrow_gaussians_approach_the_delta_row() {
        let reg = ShapeRegistry::builtin();
        let hard = ShapeCoefficients::delta(PI);
        let mut prev = f64::INFINITY;
        for width in [0.10, 0.05, 0.01] {
            let g = PulseShape::gaussian(width, PI).unwrap();
            let dist = compute_coefficients(&g).unwrap().max_abs_diff(&hard);
            assert!(dist < prev, "width {width}: {dist} !< {prev}");
            prev = dist;
        }
        let c = compute_coefficients(&reg.lookup("G001_pi").unwrap()).unwrap();
        assert_abs_diff_eq!(c.upsilon, 0.0211, epsilon = 5e-4);
        assert_abs_diff_eq!(c.upsilon2, -0.9709, epsilon = 5e-4);
    }

    #[test]
    fn asymmetric_pulse_is_rejected() {
        let skew = PulseShape::fourier_with_sine(vec![0.5, 0.3], vec![0.2]).unwrap();
        assert!(matches!(
            compute_coefficients(&skew),
            Err(Error::AsymmetricPulse(_))
        ));
        let plain = PulseShape::fourier_with_sine(vec![0.5, 0.3], vec![]).unwrap();
        assert!(compute_coefficients(&plain).is_ok());
    }

    #[test]
    fn w_family_selected_coefficients_vanish() {
        let reg = ShapeRegistry::builtin();
        for name in [
            "W12_pi", "W21_pi", "W22_pi", "W31_pi", "W32_pi", "W11_pi2", "W12_pi2", "W21_pi2",
            "W22_pi2",
        ] {
            let c = compute_coefficients(&reg.lookup(name).unwrap()).unwrap();
            assert!(c.upsilon.abs() < 5e-4, "{name}");
            assert!(c.upsilon2.abs() < 5e-4, "{name}");
            if name.starts_with("W2") || name.starts_with("W3") {
                assert!(c.alpha.abs() < 1e-3, "{name}");
            }
            if name.starts_with("W3") {
                assert!(c.zeta2.abs() < 5e-4, "{name}");
            }
        }
    }
}
