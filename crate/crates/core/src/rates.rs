//! Markovian rates and the Bloch generator `Γ̂`.
//!
//! The Bloch vector obeys `Ṙ = [V×R] − Γ̂R` with
//! `−Γ̂R = [B×R] + (γ̂ − 𝟙 Tr γ̂)R`, so `Γ̂ = 𝟙 Tr γ̂ − γ̂ − [B×]`.

use crate::error::{Error, Result};
use crate::linalg::{cross_matrix, Mat3, Vec3};

/// Rates in units of `1/τ_p`, field in `rad/τ_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateModel {
    /// Symmetric, non-negative definite rate matrix `γ̂`.
    pub gamma_hat: Mat3,
    /// Antisymmetric part. Stored only; propagation drops it.
    pub r_vec: Vec3,
    /// Static field.
    pub b: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    pub matrix: Mat3,
}

const EIGEN_TOL: f64 = 1e-12;

impl RateModel {
    pub fn new(gamma_hat: Mat3, b: Vec3) -> Result<Self> {
        let m = Self {
            gamma_hat,
            r_vec: Vec3::zeros(),
            b,
        };
        m.validate()?;
        Ok(m)
    }

    /// `γ_xx = γ_yy = γ`, `γ_zz = γ_φ`, so that `T₁⁻¹ = 2γ` and
    /// `T₂⁻¹ = γ + γ_φ`.
    pub fn nmr(gamma: f64, gamma_phi: f64, b: Vec3) -> Result<Self> {
        Self::new(Mat3::from_diagonal(&Vec3::new(gamma, gamma, gamma_phi)), b)
    }

    pub fn with_r_vec(mut self, r: Vec3) -> Self {
        self.r_vec = r;
        self
    }

    pub fn with_field(mut self, b: Vec3) -> Self {
        self.b = b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.gamma_hat;
        if g.iter().any(|x| !x.is_finite()) || self.b.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("rates and field must be finite".into()));
        }
        let scale = g.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        if (g - g.transpose()).iter().any(|x| x.abs() > 1e-12 * scale) {
            return Err(Error::AsymmetricRates);
        }
        let lowest = g.symmetric_eigenvalues().min();
        if lowest < -EIGEN_TOL {
            return Err(Error::IndefiniteRates(lowest));
        }
        Ok(())
    }

    /// `(γ, γ_φ)` when the model has NMR form.
    pub fn nmr_params(&self) -> Option<(f64, f64)> {
        let g = &self.gamma_hat;
        let scale = g.iter().fold(1e-300f64, |m, x| m.max(x.abs()));
        let tol = 1e-12 * scale;
        let off_diag = [(0, 1), (0, 2), (1, 2)]
            .iter()
            .all(|&(i, j)| g[(i, j)].abs() <= tol);
        if off_diag && (g[(0, 0)] - g[(1, 1)]).abs() <= tol {
            Some((g[(0, 0)], g[(2, 2)]))
        } else {
            None
        }
    }
}

/// `Γ̂ = 𝟙 Tr γ̂ − γ̂ − [B×]`.
pub fn build_generator(model: &RateModel) -> Result<Generator> {
    model.validate()?;
    Ok(Generator {
        matrix: generator_matrix(&model.gamma_hat, &model.b),
    })
}

pub(crate) fn generator_matrix(gamma_hat: &Mat3, b: &Vec3) -> Mat3 {
    Mat3::identity() * gamma_hat.trace() - gamma_hat - cross_matrix(b)
}

/// Target of full redistribution over the three channels,
/// `(2/3)(2γ + γ_φ)·𝟙`.
pub fn symmetrized_target(model: &RateModel) -> Result<Generator> {
    let (g, gp) = model.nmr_params().ok_or(Error::NotNmrForm)?;
    Ok(Generator {
        matrix: Mat3::identity() * (2.0 / 3.0) * (2.0 * g + gp),
    })
}

/// Longitudinal rate under sequence 4p, `2γ − (γ − γ_φ)(1 + υ₂)/2`.
pub fn effective_t1_4p(model: &RateModel, upsilon2: f64) -> Result<f64> {
    let (g, gp) = model.nmr_params().ok_or(Error::NotNmrForm)?;
    Ok(2.0 * g - (g - gp) * (1.0 + upsilon2) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn nmr_generator_pattern() {
        let (g, gp) = (0.01, 0.03);
        let b = Vec3::new(0.1, 0.2, 0.3);
        let m = build_generator(&RateModel::nmr(g, gp, b).unwrap())
            .unwrap()
            .matrix;
        let expected = Mat3::new(g + gp, b.z, -b.y, -b.z, g + gp, b.x, b.y, -b.x, 2.0 * g);
        assert_abs_diff_eq!(m, expected, epsilon = 1e-15);
    }

    #[test]
    fn isotropic_rates() {
        let m = RateModel::new(Mat3::identity() * 0.2, Vec3::zeros()).unwrap();
        assert_abs_diff_eq!(
            build_generator(&m).unwrap().matrix,
            Mat3::identity() * 0.4,
            epsilon = 1e-15
        );
    }

    #[test]
    fn pure_dephasing() {
        let gp = 2.0 * PI * 1e-3;
        let m = RateModel::nmr(0.0, gp, Vec3::zeros()).unwrap();
        let gen = build_generator(&m).unwrap().matrix;
        assert_abs_diff_eq!(
            gen,
            Mat3::from_diagonal(&Vec3::new(gp, gp, 0.0)),
            epsilon = 1e-18
        );
    }

    #[test]
    fn rejects_bad_rate_matrices() {
        let indefinite = Mat3::from_diagonal(&Vec3::new(1.0, -0.5, 1.0));
        assert!(matches!(
            RateModel::new(indefinite, Vec3::zeros()),
            Err(Error::IndefiniteRates(_))
        ));
        let mut asym = Mat3::identity();
        asym[(0, 1)] = 0.1;
        assert_eq!(
            RateModel::new(asym, Vec3::zeros()),
            Err(Error::AsymmetricRates)
        );
    }

    #[test]
    fn symmetrized_targets() {
        let m = RateModel::nmr(0.0, 0.3, Vec3::zeros()).unwrap();
        assert_abs_diff_eq!(
            symmetrized_target(&m).unwrap().matrix,
            Mat3::identity() * 0.2,
            epsilon = 1e-15
        );
        let m = RateModel::nmr(1.0, 4.0, Vec3::zeros()).unwrap();
        assert_abs_diff_eq!(
            symmetrized_target(&m).unwrap().matrix,
            Mat3::identity() * 4.0,
            epsilon = 1e-14
        );
        let m = RateModel::nmr(0.5, 0.5, Vec3::zeros()).unwrap();
        assert_abs_diff_eq!(
            symmetrized_target(&m).unwrap().matrix,
            Mat3::identity(),
            epsilon = 1e-15
        );
        let generic = RateModel::new(
            Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0)),
            Vec3::zeros(),
        )
        .unwrap();
        assert_eq!(symmetrized_target(&generic), Err(Error::NotNmrForm));
    }

    #[test]
    fn effective_t1_under_4p() {
        let m = RateModel::nmr(0.7, 0.2, Vec3::zeros()).unwrap();
        assert_abs_diff_eq!(effective_t1_4p(&m, -1.0).unwrap(), 1.4, epsilon = 1e-15);
        let m = RateModel::nmr(0.3, 0.0, Vec3::zeros()).unwrap();
        assert_abs_diff_eq!(
            effective_t1_4p(&m, 1.0 / 3.0).unwrap(),
            0.4,
            epsilon = 1e-15
        );
        let m = RateModel::nmr(0.0, 1.0, Vec3::zeros()).unwrap();
        assert_abs_diff_eq!(
            effective_t1_4p(&m, -0.7086).unwrap(),
            0.1457,
            epsilon = 1e-15
        );
    }
}
