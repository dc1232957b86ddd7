//! Average fidelity `⟨F⟩ = ½(1 + Tr Q/3)` and its reference curves.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Mat3;
use crate::propagator::EvolutionRecord;

pub fn fidelity_of(q: &Mat3) -> f64 {
    0.5 * (1.0 + q.trace() / 3.0)
}

/// `⟨F(t_s)⟩` at every checkpoint of a record.
pub fn average_fidelity(record: &EvolutionRecord) -> Vec<f64> {
    record.q.iter().map(fidelity_of).collect()
}

/// Best achievable fidelity under pure dephasing, `(2 + e^{−γ_φ t})/3`.
pub fn ideal_fidelity(t: f64, gamma_phi: f64) -> f64 {
    (2.0 + (-gamma_phi * t).exp()) / 3.0
}

/// Rates `(γ₁, γ₂)` left after redistribution by pulses with coefficient
/// `υ₂`: `γ₁ = γ_φ(1 + υ₂)/2`, `γ₂ = γ_φ(3 − υ₂)/4`.
pub fn redistribution_rates(gamma_phi: f64, upsilon2: f64) -> (f64, f64) {
    (
        gamma_phi * (1.0 + upsilon2) / 2.0,
        gamma_phi * (3.0 - upsilon2) / 4.0,
    )
}

/// `(3 + e^{−γ₁t} + 2e^{−γ₂t})/6`.
pub fn redistribution_fidelity(t: f64, gamma_phi: f64, upsilon2: f64) -> f64 {
    let (g1, g2) = redistribution_rates(gamma_phi, upsilon2);
    (3.0 + (-g1 * t).exp() + 2.0 * (-g2 * t).exp()) / 6.0
}

/// Ensemble-averaged fidelity with reference curves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelitySeries {
    pub times: Vec<f64>,
    pub f_avg: Vec<f64>,
    /// Standard error of the ensemble mean (zero for single runs).
    pub stderr: Vec<f64>,
    pub f_ideal: Vec<f64>,
    pub f_redist: Vec<f64>,
    pub delta_f: Option<Vec<f64>>,
}

impl FidelitySeries {
    pub fn new(
        times: Vec<f64>,
        f_avg: Vec<f64>,
        stderr: Vec<f64>,
        gamma_phi: f64,
        upsilon2: Option<f64>,
    ) -> Self {
        let f_ideal = times
            .iter()
            .map(|&t| ideal_fidelity(t, gamma_phi))
            .collect();
        let f_redist = match upsilon2 {
            Some(u2) => times
                .iter()
                .map(|&t| redistribution_fidelity(t, gamma_phi, u2))
                .collect(),
            None => vec![f64::NAN; times.len()],
        };
        Self {
            times,
            f_avg,
            stderr,
            f_ideal,
            f_redist,
            delta_f: None,
        }
    }

    pub fn from_record(record: &EvolutionRecord, gamma_phi: f64, upsilon2: Option<f64>) -> Self {
        let f = average_fidelity(record);
        let n = f.len();
        Self::new(record.times.clone(), f, vec![0.0; n], gamma_phi, upsilon2)
    }

    pub fn last(&self) -> f64 {
        *self.f_avg.last().expect("series is non-empty")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,F_avg,stderr,F_ideal,F_redist,delta_F\n");
        for i in 0..self.times.len() {
            let df = self.delta_f.as_ref().map_or(f64::NAN, |d| d[i]);
            out.push_str(&format!(
                "{},{:.12},{:.6e},{:.12},{:.12},{:.6e}\n",
                self.times[i], self.f_avg[i], self.stderr[i], self.f_ideal[i], self.f_redist[i], df
            ));
        }
        out
    }
}

/// `ΔF = ⟨F⟩₀ − ⟨F⟩`, the noise-free controlled fidelity minus the noisy one.
pub fn decoupling_error(
    with_noise: &FidelitySeries,
    without_noise: &FidelitySeries,
) -> Result<Vec<f64>> {
    let same = with_noise.times.len() == without_noise.times.len()
        && with_noise
            .times
            .iter()
            .zip(&without_noise.times)
            .all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(1.0));
    if !same {
        return Err(Error::CheckpointMismatch);
    }
    Ok(without_noise
        .f_avg
        .iter()
        .zip(&with_noise.f_avg)
        .map(|(f0, f)| f0 - f)
        .collect())
}

/// Least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Longitudinal and transverse decay rates fitted to the second half of a
/// noise-free record: `−d ln Q_zz/dt` and `−d ln ½(Q_xx + Q_yy)/dt`.
pub fn fit_rates(record: &EvolutionRecord) -> Result<(f64, f64)> {
    let n = record.times.len();
    if n < 4 {
        return Err(Error::Invalid(
            "need at least four checkpoints to fit rates".into(),
        ));
    }
    let lo = n / 2;
    let mut t = Vec::new();
    let mut l1 = Vec::new();
    let mut l2 = Vec::new();
    for (time, q) in record.times[lo..].iter().zip(&record.q[lo..]) {
        let zz = q[(2, 2)];
        let xy = 0.5 * (q[(0, 0)] + q[(1, 1)]);
        if zz <= 0.0 || xy <= 0.0 {
            return Err(Error::Invalid(
                "diagonal of Q is not positive; cannot fit".into(),
            ));
        }
        t.push(*time);
        l1.push(zz.ln());
        l2.push(xy.ln());
    }
    Ok((-slope(&t, &l1), -slope(&t, &l2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vec3;
    use crate::propagator::RecordMeta;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn record(times: Vec<f64>, q: Vec<Mat3>) -> EvolutionRecord {
        EvolutionRecord {
            times,
            q,
            meta: RecordMeta {
                sequence: "test".into(),
                dsl: String::new(),
                dt: 1.0,
                period: 1.0,
                noise_seed: None,
                integrator: "none",
            },
        }
    }

    #[test]
    fn fidelity_limits() {
        assert_abs_diff_eq!(fidelity_of(&Mat3::identity()), 1.0);
        assert_abs_diff_eq!(fidelity_of(&Mat3::zeros()), 0.5);
        let g = 2.0 * PI * 1e-3;
        let e = (-g * 512.0).exp();
        let f = fidelity_of(&Mat3::from_diagonal(&Vec3::new(e, e, 1.0)));
        assert_abs_diff_eq!(f, ideal_fidelity(512.0, g), epsilon = 1e-15);
        assert!((f - 0.680).abs() < 1e-3, "{f}");
    }

    #[test]
    fn redistribution_limits() {
        let g = 0.01;
        for t in [0.0, 10.0, 300.0] {
            assert_abs_diff_eq!(
                redistribution_fidelity(t, g, -1.0),
                ideal_fidelity(t, g),
                epsilon = 1e-15
            );
            let sym = 0.5 * (1.0 + (-2.0 * g * t / 3.0).exp());
            assert_abs_diff_eq!(
                redistribution_fidelity(t, g, 1.0 / 3.0),
                sym,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn decoupling_error_checks_times() {
        let a = FidelitySeries::new(vec![0.0, 1.0], vec![1.0, 0.9], vec![0.0; 2], 0.0, None);
        let b = FidelitySeries::new(vec![0.0, 1.0], vec![1.0, 0.95], vec![0.0; 2], 0.0, None);
        let d = decoupling_error(&a, &b).unwrap();
        assert_abs_diff_eq!(d[1], 0.05, epsilon = 1e-15);
        assert_eq!(decoupling_error(&a, &a).unwrap(), vec![0.0, 0.0]);
        let c = FidelitySeries::new(vec![0.0, 2.0], vec![1.0, 0.9], vec![0.0; 2], 0.0, None);
        assert_eq!(decoupling_error(&a, &c), Err(Error::CheckpointMismatch));
    }

    #[test]
    fn rate_fit_recovers_exponentials() {
        let times: Vec<f64> = (0..50).map(|s| s as f64 * 4.0).collect();
        let q = times
            .iter()
            .map(|t| {
                Mat3::from_diagonal(&Vec3::new(
                    (-0.003 * t).exp(),
                    (-0.003 * t).exp(),
                    (-0.001 * t).exp(),
                ))
            })
            .collect();
        let (g1, g2) = fit_rates(&record(times, q)).unwrap();
        assert_abs_diff_eq!(g1, 0.001, epsilon = 1e-12);
        assert_abs_diff_eq!(g2, 0.003, epsilon = 1e-12);
    }

    #[test]
    fn csv_layout() {
        let s = FidelitySeries::new(
            vec![0.0, 1.0],
            vec![1.0, 0.9],
            vec![0.0; 2],
            0.01,
            Some(-1.0),
        );
        let csv = s.to_csv();
        assert!(csv.starts_with("t,F_avg,stderr,F_ideal,F_redist,delta_F\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
