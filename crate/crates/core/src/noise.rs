//! Stationary Gaussian field `B(t)` with independent components and
//! covariance `⟨B_μ(t) B_ν(t')⟩ = δ_μν B₀² exp(−(t−t')²/2τ_c²)`, synthesized
//! by circulant embedding.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// r.m.s. amplitude per component, rad/τ_p.
    pub b0: f64,
    /// Correlation time.
    pub tau_c: f64,
    /// Sample step.
    pub dt: f64,
    /// Duration to cover.
    pub t_total: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| {
            Err(Error::Config {
                field: field.into(),
                msg,
            })
        };
        if !(self.b0 >= 0.0 && self.b0.is_finite()) {
            return bad("b0", format!("{} must be non-negative", self.b0));
        }
        if !(self.tau_c > 0.0 && self.tau_c.is_finite()) {
            return bad("tau_c", format!("{} must be positive", self.tau_c));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", format!("{} must be positive", self.dt));
        }
        if !(self.t_total >= 0.0 && self.t_total.is_finite()) {
            return bad("t_total", format!("{} must be non-negative", self.t_total));
        }
        if self.dt > self.tau_c / 4.0 {
            return Err(Error::GridTooCoarse {
                dt: self.dt,
                tau_c: self.tau_c,
            });
        }
        Ok(())
    }

    /// Samples covering `[0, t_total]` inclusive.
    pub fn n_samples(&self) -> usize {
        (self.t_total / self.dt - 1e-9).ceil().max(0.0) as usize + 1
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Normalized correlation `g(t) = exp(−t²/2τ_c²)`.
pub fn correlation(t: f64, tau_c: f64) -> f64 {
    (-0.5 * (t / tau_c).powi(2)).exp()
}

/// Three field components on the grid `t_k = k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub spec: NoiseSpec,
    pub samples: [Vec<f64>; 3],
}

impl NoiseRealization {
    pub fn zeros(spec: NoiseSpec) -> Self {
        let n = spec.n_samples();
        Self {
            spec,
            samples: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples[0].is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.spec.dt
    }

    pub fn sample(&self, k: usize) -> Vec3 {
        Vec3::new(self.samples[0][k], self.samples[1][k], self.samples[2][k])
    }

    /// Linear interpolation; clamps beyond the last sample.
    pub fn value_at(&self, t: f64) -> Vec3 {
        let n = self.len();
        let x = (t / self.spec.dt).max(0.0);
        let k = x.floor() as usize;
        if k + 1 >= n {
            return self.sample(n - 1);
        }
        let f = x - k as f64;
        self.sample(k) * (1.0 - f) + self.sample(k + 1) * f
    }

    /// Little-endian dump: header `N: u64, dt, b0, tau_c: f64, seed: u64`,
    /// then the three components, `N` values each.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in [self.spec.dt, self.spec.b0, self.spec.tau_c] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.spec.seed.to_le_bytes())?;
        for comp in &self.samples {
            for v in comp {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let dt = f64::from_le_bytes(next(&mut r)?);
        let b0 = f64::from_le_bytes(next(&mut r)?);
        let tau_c = f64::from_le_bytes(next(&mut r)?);
        let seed = u64::from_le_bytes(next(&mut r)?);
        if n == 0 || n > 1 << 32 {
            return Err(Error::Io(format!("implausible sample count {n}")));
        }
        let mut samples: [Vec<f64>; 3] = Default::default();
        for comp in samples.iter_mut() {
            comp.reserve(n);
            for _ in 0..n {
                comp.push(f64::from_le_bytes(next(&mut r)?));
            }
        }
        let spec = NoiseSpec {
            b0,
            tau_c,
            dt,
            t_total: (n - 1) as f64 * dt,
            seed,
        };
        Ok(Self { spec, samples })
    }
}

/// Reusable synthesizer for one grid: holds the embedding spectrum and the
/// FFT plan, so an ensemble pays for them once.
pub struct NoiseGenerator {
    spec: NoiseSpec,
    n: usize,
    /// `sqrt(λ_j / M)` for the circulant eigenvalues `λ_j`.
    amplitude: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for NoiseGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoiseGenerator")
            .field("spec", &self.spec)
            .field("embedding", &self.amplitude.len())
            .finish()
    }
}

impl NoiseGenerator {
    pub fn new(spec: NoiseSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_samples();
        let pad = (8.0 * spec.tau_c / spec.dt).ceil() as usize;
        let m = (n + pad).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        let var = spec.b0 * spec.b0;
        let mut c: Vec<Complex<f64>> = (0..m)
            .map(|k| {
                let lag = k.min(m - k) as f64 * spec.dt;
                Complex::new(var * correlation(lag, spec.tau_c), 0.0)
            })
            .collect();
        fft.process(&mut c);
        let amplitude = c
            .iter()
            .map(|z| (z.re.max(0.0) / m as f64).sqrt())
            .collect();
        Ok(Self {
            spec,
            n,
            amplitude,
            fft,
        })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    /// Embedding length `M`.
    pub fn embedding_len(&self) -> usize {
        self.amplitude.len()
    }

    /// A realization for `seed`; component `μ` draws from stream `μ` of a
    /// ChaCha8 generator keyed by the seed.
    pub fn generate(&self, seed: u64) -> NoiseRealization {
        let spec = self.spec.with_seed(seed);
        if self.spec.b0 == 0.0 {
            return NoiseRealization::zeros(spec);
        }
        let m = self.amplitude.len();
        let mut samples: [Vec<f64>; 3] = Default::default();
        let mut buf = vec![Complex::new(0.0, 0.0); m];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for (comp, out) in samples.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(comp as u64);
            for (z, a) in buf.iter_mut().zip(&self.amplitude) {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *z = Complex::new(a * re, a * im);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            *out = buf[..self.n].iter().map(|z| z.re).collect();
        }
        NoiseRealization { spec, samples }
    }
}

/// One realization for `spec` (seeded by `spec.seed`).
pub fn generate(spec: &NoiseSpec) -> Result<NoiseRealization> {
    Ok(NoiseGenerator::new(*spec)?.generate(spec.seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec() -> NoiseSpec {
        NoiseSpec {
            b0: 0.1,
            tau_c: 8.0,
            dt: 1.0 / 32.0,
            t_total: 64.0,
            seed: 7,
        }
    }

    #[test]
    fn zero_amplitude_gives_zero_field() {
        let r = generate(&NoiseSpec { b0: 0.0, ..spec() }).unwrap();
        assert!(r.samples.iter().all(|c| c.iter().all(|&v| v == 0.0)));
        assert_eq!(r.len(), 64 * 32 + 1);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let err = generate(&NoiseSpec { dt: 2.5, ..spec() }).unwrap_err();
        assert!(matches!(err, Error::GridTooCoarse { .. }));
    }

    #[test]
    fn embedding_is_non_negative_and_padded() {
        let g = NoiseGenerator::new(spec()).unwrap();
        assert!(g.embedding_len() >= 2049 + 8 * 8 * 32);
        assert!(g.embedding_len().is_power_of_two());
    }

    #[test]
    fn seeds_are_deterministic() {
        let a = generate(&spec()).unwrap();
        let b = generate(&spec()).unwrap();
        assert_eq!(a, b);
        let c = generate(&spec().with_seed(8)).unwrap();
        assert_ne!(a.samples[0], c.samples[0]);
        assert_ne!(a.samples[0], a.samples[1]);
    }

    #[test]
    fn interpolation_is_linear() {
        let r = generate(&spec()).unwrap();
        let mid = r.value_at(1.5 * r.dt());
        let expect = (r.sample(1) + r.sample(2)) * 0.5;
        assert_abs_diff_eq!(mid, expect, epsilon = 1e-15);
        assert_abs_diff_eq!(r.value_at(1e9), r.sample(r.len() - 1));
    }

    #[test]
    fn dump_round_trip() {
        let r = generate(&NoiseSpec {
            t_total: 4.0,
            ..spec()
        })
        .unwrap();
        let mut bytes = Vec::new();
        r.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 40 + 3 * 8 * r.len());
        let back = NoiseRealization::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.samples, r.samples);
        assert_eq!(back.spec.seed, 7);
        assert!(NoiseRealization::read_from(&bytes[..20]).is_err());
    }

    #[test]
    fn single_realization_variance_is_plausible() {
        // a long record averages over ~100 correlation times
        let r = generate(&NoiseSpec {
            t_total: 800.0,
            dt: 0.25,
            ..spec()
        })
        .unwrap();
        for comp in &r.samples {
            let var = comp.iter().map(|v| v * v).sum::<f64>() / comp.len() as f64;
            assert!((var / 0.01 - 1.0).abs() < 0.5, "variance {var}");
        }
    }
}
