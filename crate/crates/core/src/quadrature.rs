//! Composite Gauss-Legendre quadrature on uniform panels, with cumulative
//! (running) integrals from a per-panel spectral integration matrix.

use std::ops::{Add, Mul};
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Nodes per panel.
pub const ORDER: usize = 8;

const GL_NODES: [f64; ORDER] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];

const GL_WEIGHTS: [f64; ORDER] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn lagrange(j: usize, x: f64) -> f64 {
    let mut v = 1.0;
    for (m, xm) in GL_NODES.iter().enumerate() {
        if m != j {
            v *= (x - xm) / (GL_NODES[j] - xm);
        }
    }
    v
}

/// `S[i][j] = ∫_{-1}^{x_i} l_j(x) dx` on the reference panel.
fn integration_matrix() -> &'static [[f64; ORDER]; ORDER] {
    static MATRIX: OnceLock<[[f64; ORDER]; ORDER]> = OnceLock::new();
    MATRIX.get_or_init(|| {
        let mut s = [[0.0; ORDER]; ORDER];
        for (i, row) in s.iter_mut().enumerate() {
            let half = 0.5 * (GL_NODES[i] + 1.0);
            for (j, entry) in row.iter_mut().enumerate() {
                // degree-7 integrand, exact with 8 points
                *entry = GL_NODES
                    .iter()
                    .zip(GL_WEIGHTS.iter())
                    .map(|(x, w)| w * half * lagrange(j, -1.0 + half * (x + 1.0)))
                    .sum();
            }
        }
        s
    })
}

/// Uniform composite grid on `[start, end]`.
#[derive(Debug, Clone)]
pub struct PanelGrid {
    start: f64,
    width: f64,
    panels: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl PanelGrid {
    pub fn uniform(start: f64, end: f64, panels: usize) -> Self {
        assert!(panels > 0 && end > start);
        let width = (end - start) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * ORDER);
        let mut weights = Vec::with_capacity(panels * ORDER);
        for p in 0..panels {
            let a = start + p as f64 * width;
            for k in 0..ORDER {
                nodes.push(a + 0.5 * width * (GL_NODES[k] + 1.0));
                weights.push(0.5 * width * GL_WEIGHTS[k]);
            }
        }
        Self {
            start,
            width,
            panels,
            nodes,
            weights,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn panels(&self) -> usize {
        self.panels
    }

    pub fn panel_width(&self) -> f64 {
        self.width
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.nodes.len());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Running integrals `∫_start^{t_i} g` at every node, given `g` sampled
    /// at the nodes.
    pub fn cumulative_by<T>(&self, values: &[T], zero: T) -> Vec<T>
    where
        T: Copy + Add<Output = T> + Mul<f64, Output = T>,
    {
        debug_assert_eq!(values.len(), self.nodes.len());
        let s = integration_matrix();
        let half = 0.5 * self.width;
        let mut out = Vec::with_capacity(values.len());
        let mut before = zero;
        for p in 0..self.panels {
            let v = &values[p * ORDER..(p + 1) * ORDER];
            for row in s.iter() {
                let mut acc = zero;
                for (vj, sij) in v.iter().zip(row.iter()) {
                    acc = acc + *vj * (sij * half);
                }
                out.push(before + acc);
            }
            let mut total = zero;
            for (vj, w) in v.iter().zip(GL_WEIGHTS.iter()) {
                total = total + *vj * (w * half);
            }
            before = before + total;
        }
        out
    }

    pub fn cumulative(&self, values: &[f64]) -> Vec<f64> {
        self.cumulative_by(values, 0.0)
    }
}

/// Accuracy controls for the adaptive pulse averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    /// Absolute tolerance on the difference between successive refinements.
    pub tolerance: f64,
    /// Starting number of panels (rounded up to even so the midpoint is a
    /// panel boundary).
    pub min_panels: usize,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            min_panels: 16,
            max_panels: 8192,
        }
    }
}

impl QuadOptions {
    pub fn with_min_panels(mut self, panels: usize) -> Self {
        self.min_panels = panels.max(2);
        self
    }
}

fn refine<F>(opts: &QuadOptions, mut eval: F) -> Result<f64>
where
    F: FnMut(usize) -> f64,
{
    let mut panels = opts.min_panels.max(2);
    panels += panels % 2;
    let mut coarse = eval(panels);
    let mut estimate = f64::INFINITY;
    while panels * 2 <= opts.max_panels {
        panels *= 2;
        let fine = eval(panels);
        estimate = (fine - coarse).abs();
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

/// `(1/τ_p) ∫_0^{τ_p} f(t) dt`.
pub fn pulse_average<F>(f: F, tau_p: f64, opts: &QuadOptions) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    refine(opts, |panels| {
        let grid = PanelGrid::uniform(0.0, tau_p, panels);
        let values: Vec<f64> = grid.nodes().iter().map(|&t| f(t)).collect();
        grid.integrate(&values) / tau_p
    })
}

/// `(1/τ_p²) ∫_0^{τ_p} dt ∫_0^t dt' f(t, t')` by nested quadrature over
/// the lower triangle.
pub fn double_average<F>(f: F, tau_p: f64, opts: &QuadOptions) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    refine(opts, |panels| {
        let grid = PanelGrid::uniform(0.0, tau_p, panels);
        let nodes = grid.nodes();
        let weights = grid.weights();
        let s = integration_matrix();
        let half = 0.5 * grid.panel_width();
        let mut total = 0.0;
        for (i, &t) in nodes.iter().enumerate() {
            let panel = i / ORDER;
            let local = i % ORDER;
            let mut inner = 0.0;
            for k in 0..panel * ORDER {
                inner += weights[k] * f(t, nodes[k]);
            }
            for j in 0..ORDER {
                let k = panel * ORDER + j;
                inner += s[local][j] * half * f(t, nodes[k]);
            }
            total += weights[i] * inner;
        }
        total / (tau_p * tau_p)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_averages() {
        let o = QuadOptions::default();
        assert_abs_diff_eq!(
            pulse_average(|_| 1.0, 1.0, &o).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            double_average(|_, _| 1.0, 1.0, &o).unwrap(),
            0.5,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            double_average(|_, _| 1.0, 2.5, &o).unwrap(),
            0.5,
            epsilon = 1e-14
        );
    }

    #[test]
    fn polynomial_triangle_integral() {
        // ∫0^1 dt ∫0^t t t'^2 dt' = ∫ t^4/3 = 1/15
        let o = QuadOptions::default();
        let v = double_average(|t, s| t * s * s, 1.0, &o).unwrap();
        assert_abs_diff_eq!(v, 1.0 / 15.0, epsilon = 1e-14);
    }

    #[test]
    fn cumulative_matches_antiderivative() {
        let grid = PanelGrid::uniform(0.0, 2.0, 10);
        let values: Vec<f64> = grid.nodes().iter().map(|t| (3.0 * t).cos()).collect();
        let cum = grid.cumulative(&values);
        for (t, c) in grid.nodes().iter().zip(cum) {
            assert_abs_diff_eq!(c, (3.0 * t).sin() / 3.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn discontinuity_on_panel_boundary_is_exact() {
        let o = QuadOptions::default();
        let step = |t: f64| if t < 0.5 { -1.0 } else { 1.0 };
        assert_abs_diff_eq!(pulse_average(step, 1.0, &o).unwrap(), 0.0, epsilon = 1e-15);
        let v = double_average(|t, s| step(t) * step(s), 1.0, &o).unwrap();
        // (1/8) + (1/8) - (1/4)
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn unresolvable_integrand_reports_non_convergence() {
        let o = QuadOptions {
            tolerance: 1e-14,
            min_panels: 2,
            max_panels: 8,
        };
        let err = pulse_average(|t| (400.0 * t).sin(), 1.0, &o).unwrap_err();
        assert!(matches!(err, Error::QuadratureNotConverged { .. }));
    }
}
