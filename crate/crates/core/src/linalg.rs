//! Small dense 3x3 helpers: cross-product matrices, rotations, and a
//! scaling-and-squaring matrix exponential.

use nalgebra::{Matrix3, Vector3};

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

/// Matrix `[v×]` with `[v×] r = v × r`.
pub fn cross_matrix(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Right-handed rotation by `angle` about the unit vector `axis`,
/// i.e. `exp(angle [axis×])`.
pub fn rotation(axis: &Vec3, angle: f64) -> Mat3 {
    let k = cross_matrix(axis);
    let (s, c) = angle.sin_cos();
    Mat3::identity() + k * s + k * k * (1.0 - c)
}

fn norm1(a: &Mat3) -> f64 {
    (0..3)
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE6: [f64; 7] = [
    1.0,
    0.5,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

/// Matrix exponential by scaling and squaring around a [6/6] Padé core.
///
/// The argument is scaled by `2^-s` until its 1-norm is at most 0.5.
pub fn expm(a: &Mat3) -> Mat3 {
    let norm = norm1(a);
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let x = a / f64::powi(2.0, squarings as i32);

    let mut num = Mat3::identity() * PADE6[0];
    let mut den = Mat3::identity() * PADE6[0];
    let mut power = Mat3::identity();
    for (k, c) in PADE6.iter().enumerate().skip(1) {
        power *= x;
        num += power * *c;
        if k % 2 == 0 {
            den += power * *c;
        } else {
            den -= power * *c;
        }
    }
    let mut result = den
        .lu()
        .solve(&num)
        .expect("Pade denominator is well conditioned for |X| <= 0.5");
    for _ in 0..squarings {
        result = result * result;
    }
    result
}

/// Largest absolute element.
pub fn max_abs(a: &Mat3) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rotation_about_x_by_pi() {
        let r = rotation(&Vec3::x(), std::f64::consts::PI);
        assert_abs_diff_eq!(
            r,
            Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0)),
            epsilon = 1e-15
        );
    }

    #[test]
    fn rotation_generator_matches_cross_product() {
        let axis = Vec3::new(1.0, 2.0, -0.5).normalize();
        let h = 1e-6;
        let d = (rotation(&axis, h) - rotation(&axis, -h)) / (2.0 * h);
        assert_abs_diff_eq!(d, cross_matrix(&axis), epsilon = 1e-9);
    }

    #[test]
    fn expm_agrees_with_nalgebra() {
        let a = Mat3::new(0.3, -2.0, 0.7, 1.1, -0.4, 5.0, -0.2, 0.9, 0.05);
        let ours = expm(&a);
        let reference = a.exp();
        assert!(max_abs(&(ours - reference)) < 1e-12 * max_abs(&reference));
    }

    #[test]
    fn expm_of_diagonal() {
        let d = [-1.0, 0.5, -30.0];
        let e = expm(&Mat3::from_diagonal(&Vec3::from(d)));
        for (i, x) in d.iter().enumerate() {
            let exact = x.exp();
            // squarings amplify the core's relative error by about 2^s
            assert!(
                (e[(i, i)] - exact).abs() < 1e-12 * exact,
                "{} vs {exact}",
                e[(i, i)]
            );
        }
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn compensated_sum() {
        let mut s = KahanSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }
}
