//! Runs an [`ExperimentConfig`]: one job per (sequence, shape), a CSV per
//! job and a JSON manifest describing the whole run.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::coeffs::{compute_coefficients, csv_row, CSV_HEADER};
use crate::config::{periods_for, ExperimentConfig, JobKind};
use crate::designer::{design, Design};
use crate::ensemble::{derive_seed, map_indexed, run_ensemble, EnsembleSpec, Execution};
use crate::error::{Error, Result};
use crate::fidelity::{fit_rates, redistribution_rates, FidelitySeries};
use crate::noise::{NoiseGenerator, NoiseSpec};
use crate::propagator::{auto_dt, propagate, MAX_STEP_ANGLE};
use crate::quadrature::QuadOptions;
use crate::sequences::resolve_sequence;
use crate::shapes::ShapeRegistry;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub execution: Execution,
    /// Replaces the configured master seed.
    pub seed: Option<u64>,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            execution: Execution::Parallel,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobOutcome {
    pub sequence: String,
    pub shape: String,
    pub ok: bool,
    pub error: Option<String>,
    /// Set when the job was deliberately not run; not counted as a failure.
    pub skipped: Option<String>,
    pub files: Vec<String>,
    pub dt: Option<f64>,
    pub upsilon2: Option<f64>,
    pub final_fidelity: Option<f64>,
    pub final_delta_f: Option<f64>,
    /// Noise-free fitted `(γ₁, γ₂)` and the redistribution prediction.
    pub fitted_rates: Option<(f64, f64)>,
    pub predicted_rates: Option<(f64, f64)>,
}

impl JobOutcome {
    fn new(sequence: &str, shape: &str) -> Self {
        Self {
            sequence: sequence.into(),
            shape: shape.into(),
            ok: false,
            error: None,
            skipped: None,
            files: Vec::new(),
            dt: None,
            upsilon2: None,
            final_fidelity: None,
            final_delta_f: None,
            fitted_rates: None,
            predicted_rates: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct Tolerances {
    coefficient_quadrature: f64,
    design_residual: f64,
    max_step_angle: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub name: String,
    pub version: &'static str,
    pub created_unix: u64,
    pub config: ExperimentConfig,
    pub master_seed: Option<u64>,
    pub realization_seeds: Vec<u64>,
    pub integrator: &'static str,
    tolerances: Tolerances,
    pub designs: Vec<DesignRecord>,
    pub jobs: Vec<JobOutcome>,
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignRecord {
    pub name: String,
    pub spec: String,
    pub seed: u64,
    pub coefficients: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.manifest.failed.is_empty()
    }
}

/// File-system friendly name.
pub fn slug(text: &str) -> String {
    text.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write(dir: &Path, name: &str, body: &str) -> Result<String> {
    fs::write(dir.join(name), body)?;
    Ok(name.to_string())
}

/// Registry with the configured designs added.
pub fn registry_with_designs(
    config: &ExperimentConfig,
    base: &ShapeRegistry,
) -> Result<(ShapeRegistry, Vec<DesignRecord>)> {
    let mut reg = base.clone();
    let mut records = Vec::new();
    for entry in &config.designs {
        let spec = entry.design_spec()?;
        let d: Design = design(&spec, entry.seed)?;
        records.push(DesignRecord {
            name: entry.name.clone(),
            spec: entry.spec.clone(),
            seed: entry.seed,
            coefficients: d.shape.fourier_coeffs().unwrap_or(&[]).to_vec(),
            residual: d.residual,
        });
        reg.insert(d.shape.named(entry.name.clone()));
    }
    Ok((reg, records))
}

fn simulate_job(
    config: &ExperimentConfig,
    reg: &ShapeRegistry,
    seq_name: &str,
    shape_name: &str,
    seed: u64,
    out: &Path,
    exec: Execution,
) -> Result<JobOutcome> {
    let mut o = JobOutcome::new(seq_name, shape_name);
    let shape = reg.lookup(shape_name)?;
    let seq = resolve_sequence(seq_name, &shape)?;
    let model = config.model()?.rate_model()?;
    let gamma_phi = config.model()?.gamma_phi;
    let n_periods = periods_for(config.horizon()?, seq.period())?;
    let dt = config.dt.unwrap_or_else(|| auto_dt(&seq));
    o.dt = Some(dt);
    let u2 = if shape.is_delta() || matches!(seq_name, "free" | "none" | "nocontrol" | "0") {
        None
    } else {
        Some(compute_coefficients(&shape)?.upsilon2)
    };
    let u2 = u2.or_else(|| shape.is_delta().then(|| shape.phi0.cos()));
    o.upsilon2 = u2;
    let reference = config.reference_upsilon2.or(u2);

    let clean = propagate(&seq, &model, None, n_periods, dt)?;
    let f0 = FidelitySeries::from_record(&clean, gamma_phi, reference);
    if let Ok(r) = fit_rates(&clean) {
        o.fitted_rates = Some(r);
    }
    o.predicted_rates = u2.map(|u| redistribution_rates(gamma_phi, u));

    let noise = config.noise()?;
    let ens = config.ensemble()?;
    let stem = format!("{}__{}", slug(seq_name), slug(shape_name));
    let series = if noise.b0 > 0.0 {
        let mut spec = EnsembleSpec::new(ens.realizations, seed, *noise, n_periods);
        spec.dt = Some(dt);
        let r = run_ensemble(&seq, &model, &spec, exec)?;
        let mut s = FidelitySeries::new(r.times, r.mean, r.stderr, gamma_phi, reference);
        s.delta_f = Some(f0.f_avg.iter().zip(&s.f_avg).map(|(a, b)| a - b).collect());
        if ens.single_realization {
            let generator = NoiseGenerator::new(NoiseSpec {
                b0: noise.b0,
                tau_c: noise.tau_c,
                dt: noise.dt,
                t_total: n_periods as f64 * seq.period(),
                seed,
            })?;
            let field = generator.generate(derive_seed(seed, 0));
            let rec = propagate(&seq, &model, Some(&field), n_periods, dt)?;
            let single = FidelitySeries::from_record(&rec, gamma_phi, reference);
            o.files.push(write(
                out,
                &format!("{stem}__single.csv"),
                &single.to_csv(),
            )?);
        }
        s
    } else {
        let mut s = f0.clone();
        s.delta_f = Some(vec![0.0; s.times.len()]);
        s
    };
    o.final_fidelity = Some(series.last());
    o.final_delta_f = series.delta_f.as_ref().and_then(|d| d.last().copied());
    o.files
        .insert(0, write(out, &format!("{stem}.csv"), &series.to_csv())?);
    o.ok = true;
    Ok(o)
}

fn coefficients_job(config: &ExperimentConfig, reg: &ShapeRegistry, out: &Path) -> Vec<JobOutcome> {
    let mut body = format!("{CSV_HEADER}\n");
    let mut outcomes = Vec::new();
    for name in &config.shapes {
        let mut o = JobOutcome::new("-", name);
        if reg.lookup(name).is_ok_and(|s| s.corrupted_source) {
            o.skipped = Some("source amplitudes are flagged as corrupted".into());
            outcomes.push(o);
            continue;
        }
        match reg
            .lookup(name)
            .and_then(|s| compute_coefficients(&s).map(|c| (s, c)))
        {
            Ok((shape, c)) => {
                body.push_str(&csv_row(&shape, &c));
                body.push('\n');
                o.ok = true;
                o.upsilon2 = Some(c.upsilon2);
            }
            Err(e) => o.error = Some(e.to_string()),
        }
        outcomes.push(o);
    }
    match write(out, "coefficients.csv", &body) {
        Ok(f) => outcomes
            .iter_mut()
            .filter(|o| o.ok)
            .for_each(|o| o.files.push(f.clone())),
        Err(e) => outcomes.iter_mut().for_each(|o| {
            o.ok = false;
            o.error = Some(e.to_string());
        }),
    }
    outcomes
}

/// Validates and runs `config`; individual job failures are recorded in the
/// manifest rather than aborting the run.
pub fn run(
    config: &ExperimentConfig,
    base: &ShapeRegistry,
    opts: &RunOptions,
) -> Result<RunReport> {
    config.validate(base)?;
    fs::create_dir_all(&opts.out_dir)?;
    let (reg, designs) = registry_with_designs(config, base)?;
    let master = opts.seed.or(config.ensemble.as_ref().map(|e| e.seed));
    let jobs = match config.kind {
        JobKind::Coefficients => coefficients_job(config, &reg, &opts.out_dir),
        JobKind::Simulate => {
            let seed = master.expect("validated simulations carry an ensemble");
            let pairs: Vec<(&String, &String)> = config
                .sequences
                .iter()
                .flat_map(|q| config.shapes.iter().map(move |s| (q, s)))
                .collect();
            map_indexed(pairs.len(), opts.execution, |i| {
                let (q, s) = pairs[i];
                simulate_job(config, &reg, q, s, seed, &opts.out_dir, opts.execution)
                    .unwrap_or_else(|e| {
                        let mut o = JobOutcome::new(q, s);
                        o.error = Some(e.to_string());
                        o
                    })
            })
        }
    };
    let realization_seeds = match (config.kind, master, &config.ensemble) {
        (JobKind::Simulate, Some(m), Some(e)) => {
            (0..e.realizations).map(|i| derive_seed(m, i)).collect()
        }
        _ => Vec::new(),
    };
    let failed = jobs
        .iter()
        .filter(|j| !j.ok && j.skipped.is_none())
        .map(|j| {
            format!(
                "{} / {}: {}",
                j.sequence,
                j.shape,
                j.error.as_deref().unwrap_or("?")
            )
        })
        .collect();
    let manifest = Manifest {
        name: config.name.clone(),
        version: env!("CARGO_PKG_VERSION"),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        config: config.clone(),
        master_seed: master,
        realization_seeds,
        integrator: "rk4-toggling-frame",
        tolerances: Tolerances {
            coefficient_quadrature: QuadOptions::default().tolerance,
            design_residual: 1e-6,
            max_step_angle: MAX_STEP_ANGLE,
        },
        designs,
        jobs,
        failed,
    };
    let manifest_path = opts.out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(&manifest_path, json)?;
    Ok(RunReport {
        manifest,
        manifest_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(extra: &str) -> ExperimentConfig {
        let text = format!(
            "extends = \"base\"\nname = \"t\"\nsequences = [\"4p\"]\nshapes = [\"G010_pi\"]\nhorizon = 16.0\n{extra}\n[ensemble]\nrealizations = 3\n"
        );
        ExperimentConfig::parse(&text).unwrap()
    }

    #[test]
    fn run_writes_csv_and_manifest() {
        let dir = std::env::temp_dir().join(format!("dd-run-{}", std::process::id()));
        let report = run(
            &small(""),
            &ShapeRegistry::builtin(),
            &RunOptions::new(&dir),
        )
        .unwrap();
        assert!(report.ok());
        let csv = fs::read_to_string(dir.join("4p__G010_pi.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 5);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&report.manifest_path).unwrap()).unwrap();
        assert_eq!(manifest["realization_seeds"].as_array().unwrap().len(), 3);
        fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn runs_are_byte_identical() {
        let base = std::env::temp_dir().join(format!("dd-det-{}", std::process::id()));
        let cfg = small("");
        let reg = ShapeRegistry::builtin();
        let a = base.join("a");
        let b = base.join("b");
        run(&cfg, &reg, &RunOptions::new(&a)).unwrap();
        run(
            &cfg,
            &reg,
            &RunOptions {
                execution: Execution::Sequential,
                ..RunOptions::new(&b)
            },
        )
        .unwrap();
        let read = |d: &Path| fs::read(d.join("4p__G010_pi.csv")).unwrap();
        assert_eq!(read(&a), read(&b));
        fs::remove_dir_all(base).ok();
    }

    #[test]
    fn failing_job_is_reported() {
        let dir = std::env::temp_dir().join(format!("dd-fail-{}", std::process::id()));
        // dt twice the automatic step trips the accuracy guard
        let report = run(
            &small("dt = 0.03125"),
            &ShapeRegistry::builtin(),
            &RunOptions::new(&dir),
        )
        .unwrap();
        assert!(!report.ok());
        assert!(
            report.manifest.failed[0].contains("step"),
            "{:?}",
            report.manifest.failed
        );
        fs::remove_dir_all(dir).ok();
    }
}
