//! Ensembles of noise realizations.
//!
//! Realization `i` always uses the seed `derive_seed(master, i)`, so two
//! ensembles with the same master seed see the same fields (common random
//! numbers) and paired differences between shapes carry little noise.
//! Per-realization outputs are collected in index order and reduced with
//! compensated summation, so results do not depend on the execution mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fidelity::average_fidelity;
use crate::linalg::KahanSum;
use crate::noise::{NoiseGenerator, NoiseSpec};
use crate::propagator::{auto_dt, propagate_in, Frame};
use crate::rates::RateModel;
use crate::sequences::Sequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Rayon work stealing; identical to `Sequential` without the
    /// `parallel` feature.
    #[default]
    Parallel,
}

/// `f(0), …, f(n−1)` in index order.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Runs `f` on a pool of `jobs` threads (`0` = rayon default).
#[cfg(feature = "parallel")]
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
pub fn with_jobs<R: Send>(_jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    Ok(f())
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, index: usize) -> u64 {
    splitmix64(master ^ splitmix64(index as u64))
}

/// Slow-field parameters shared by every member of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub b0: f64,
    pub tau_c: f64,
    /// Noise sample step.
    pub dt: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self {
            b0: 0.1,
            tau_c: 8.0,
            dt: 1.0 / 32.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub realizations: usize,
    pub master_seed: u64,
    pub field: FieldParams,
    pub n_periods: usize,
    /// Integrator step; `None` picks [`auto_dt`].
    pub dt: Option<f64>,
    #[serde(skip)]
    pub frame: Frame,
}

impl EnsembleSpec {
    pub fn new(
        realizations: usize,
        master_seed: u64,
        field: FieldParams,
        n_periods: usize,
    ) -> Self {
        Self {
            realizations,
            master_seed,
            field,
            n_periods,
            dt: None,
            frame: Frame::Toggling,
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.realizations)
            .map(|i| derive_seed(self.master_seed, i))
            .collect()
    }
}

/// Mean fidelity over an ensemble together with per-member final values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `⟨F⟩` of each member at the last checkpoint, in index order.
    pub finals: Vec<f64>,
    pub seeds: Vec<u64>,
    pub dt: f64,
}

impl EnsembleResult {
    pub fn last_mean(&self) -> f64 {
        *self.mean.last().expect("non-empty")
    }
}

/// Mean and standard error of the mean, with compensated sums.
pub fn mean_stderr(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut n = 0usize;
    let mut s = KahanSum::default();
    for v in values.clone() {
        s.add(v);
        n += 1;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = s.value() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let mut ss = KahanSum::default();
    for v in values {
        ss.add((v - mean) * (v - mean));
    }
    let var = ss.value() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Propagates `spec.realizations` noisy runs of `seq` and averages `⟨F⟩`.
pub fn run_ensemble(
    seq: &Sequence,
    model: &RateModel,
    spec: &EnsembleSpec,
    exec: Execution,
) -> Result<EnsembleResult> {
    if spec.realizations == 0 {
        return Err(Error::Invalid(
            "ensemble needs at least one realization".into(),
        ));
    }
    let dt = spec.dt.unwrap_or_else(|| auto_dt(seq));
    let noise_spec = NoiseSpec {
        b0: spec.field.b0,
        tau_c: spec.field.tau_c,
        dt: spec.field.dt,
        t_total: spec.n_periods as f64 * seq.period(),
        seed: spec.master_seed,
    };
    let generator = NoiseGenerator::new(noise_spec)?;
    let seeds = spec.seeds();
    let runs: Vec<Result<(Vec<f64>, Vec<f64>)>> = map_indexed(spec.realizations, exec, |i| {
        let field = generator.generate(seeds[i]);
        let rec = propagate_in(seq, model, Some(&field), spec.n_periods, dt, spec.frame)?;
        Ok((rec.times.clone(), average_fidelity(&rec)))
    });
    let mut series = Vec::with_capacity(runs.len());
    let mut times = Vec::new();
    for r in runs {
        let (t, f) = r?;
        times = t;
        series.push(f);
    }
    let (mean, stderr): (Vec<f64>, Vec<f64>) = (0..times.len())
        .map(|k| mean_stderr(series.iter().map(move |f| f[k])))
        .unzip();
    let finals = series
        .iter()
        .map(|f| *f.last().expect("non-empty"))
        .collect();
    Ok(EnsembleResult {
        times,
        mean,
        stderr,
        finals,
        seeds,
        dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vec3;
    use crate::sequences::catalogue_sequence;
    use crate::shapes::ShapeRegistry;

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a: Vec<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 1000);
        assert_eq!(derive_seed(42, 17), a[17]);
        assert_ne!(derive_seed(43, 17), a[17]);
    }

    #[test]
    fn mean_stderr_matches_textbook() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let (m, se) = mean_stderr(v.iter().copied());
        assert_eq!(m, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((se - sd / 2.0).abs() < 1e-15);
    }

    #[test]
    fn execution_modes_agree_bitwise() {
        let reg = ShapeRegistry::builtin();
        let seq = catalogue_sequence("4p", &reg.lookup("G010_pi").unwrap()).unwrap();
        let model = RateModel::nmr(0.0, 0.01, Vec3::zeros()).unwrap();
        let spec = EnsembleSpec::new(6, 5, FieldParams::default(), 3);
        let a = run_ensemble(&seq, &model, &spec, Execution::Sequential).unwrap();
        let b = run_ensemble(&seq, &model, &spec, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times.len(), 4);
        assert_eq!(a.mean[0], 1.0);
        assert!(a.stderr[3] > 0.0);
    }

    #[test]
    fn zero_field_has_no_spread() {
        let seq = catalogue_sequence(
            "2s",
            &crate::shapes::PulseShape::delta(std::f64::consts::PI),
        )
        .unwrap();
        let model = RateModel::nmr(0.0, 0.01, Vec3::zeros()).unwrap();
        let field = FieldParams {
            b0: 0.0,
            ..FieldParams::default()
        };
        let r = run_ensemble(
            &seq,
            &model,
            &EnsembleSpec::new(3, 1, field, 4),
            Execution::Sequential,
        )
        .unwrap();
        assert!(r.stderr.iter().all(|&s| s < 1e-15), "{:?}", r.stderr);
    }
}
