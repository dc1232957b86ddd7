//! The acceptance suite. Each criterion returns a [`CriterionReport`] with
//! the measured quantity and the tolerance it was held to; every tolerance
//! is a named constant below.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::coeffs::compute_coefficients;
use crate::config::{periods_for, ExperimentConfig};
use crate::designer::{design, DesignSpec};
use crate::ensemble::{
    derive_seed, map_indexed, mean_stderr, run_ensemble, EnsembleResult, EnsembleSpec, Execution,
};
use crate::error::{Error, Result};
use crate::fidelity::{
    average_fidelity, fit_rates, ideal_fidelity, redistribution_fidelity, redistribution_rates,
};
use crate::linalg::{max_abs, Mat3, Vec3};
use crate::magnus::{analytic_gamma0, cumulants, AnalyticCase};
use crate::noise::{NoiseGenerator, NoiseSpec};
use crate::propagator::{auto_dt, propagate};
use crate::quadrature::{double_average, pulse_average, QuadOptions};
use crate::rates::RateModel;
use crate::sequences::{catalogue_sequence, Sequence, CATALOGUE};
use crate::shapes::{PulseShape, ShapeRegistry};

pub const TOL_DELTA_ROWS: f64 = 1e-12;
pub const TOL_TABLE: f64 = 5e-4;
pub const TOL_TRACE: f64 = 1e-9;
pub const TRACE_TRIALS: usize = 200;
pub const TOL_ANALYTIC_GAMMA0: f64 = 1e-6;
pub const TOL_GAMMA1_ZERO: f64 = 1e-8;
pub const THIRD_ORDER_RATIO: (f64, f64) = (6.5, 9.5);
pub const SECOND_ORDER_RATIO: (f64, f64) = (3.4, 4.6);
pub const TOL_IDEAL_ENDPOINT: f64 = 1e-3;
pub const TOL_FREE_DECAY: f64 = 1e-6;
pub const TOL_RATE_REL: f64 = 0.01;
/// Absolute floor for rates that vanish exactly (hard π pulses, `γ₁ = 0`).
pub const TOL_RATE_ABS: f64 = 1e-9;
pub const TOL_FIG3_REDIST: f64 = 0.01;
pub const ORDERING_SIGMAS: f64 = 2.0;
pub const TOL_SYMMETRIZED: f64 = 1e-6;
pub const NOISE_REALIZATIONS: usize = 10_000;
pub const NOISE_SIGMAS: f64 = 3.0;

/// γ_φ of the simulation section, `2π·10⁻³/τ_p`.
pub const GAMMA_PHI: f64 = 2.0 * PI * 1e-3;

/// Reference coefficient rows (υ, υ₂, α/2, α₂/2, ζ, ζ₂, μ).
pub const TABLE_ONE: [(&str, [f64; 7]); 14] = [
    (
        "G001_pi",
        [0.0211, -0.9709, 0.0104, 0.000047, 0.24996, 0.00023, -0.2354],
    ),
    (
        "G010_pi",
        [0.2107, -0.7086, 0.0872, 0.0047, 0.2458, 0.0233, -0.1035],
    ),
    (
        "F1",
        [0.0018, 0.3307, 0.0237, -0.01018, 0.1134, -0.0260, 0.0680],
    ),
    (
        "W12_pi",
        [0.0, 0.0, 0.0400, -0.0164, 0.1904, -0.0871, 0.0413],
    ),
    ("W21_pi", [0.0, 0.0, 0.0, 0.0088, 0.0072, 0.0677, -0.0093]),
    ("W22_pi", [0.0, 0.0, 0.0, 0.0107, 0.0634, 0.0415, -0.0035]),
    ("W31_pi", [0.0, 0.0, 0.0, 0.00061, 0.0436, 0.0, 0.0014]),
    ("W32_pi", [0.0, 0.0, 0.0, 0.00046, 0.0847, 0.0, 0.0146]),
    (
        "G001_pi2",
        [0.7136, 0.0211, 0.1272, 0.0104, 0.1767, 0.2500, 0.1872],
    ),
    (
        "G010_pi2",
        [0.7722, 0.2107, 0.1388, 0.0872, 0.1706, 0.2458, 0.2599],
    ),
    (
        "W11_pi2",
        [0.0, 0.0, 0.0106, -0.0022, 0.1787, 0.0114, 0.0193],
    ),
    (
        "W12_pi2",
        [0.0, 0.0, -0.0057, -0.0020, 0.1756, 0.0482, 0.0103],
    ),
    ("W21_pi2", [0.0, 0.0, 0.0, -0.0059, 0.1796, 0.0301, 0.0190]),
    ("W22_pi2", [0.0, 0.0, 0.0, -0.0021, 0.1771, 0.0324, 0.0129]),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub measured: String,
    pub tolerance: String,
    pub details: Vec<String>,
    pub seconds: f64,
}

impl CriterionReport {
    /// `criterion  N [PASS] name: measured (tolerance)`.
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} [{}] {}: {} (tolerance {}; {:.1} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance,
            self.seconds
        )
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub registry: ShapeRegistry,
    /// Multiplies every automatically chosen integrator step.
    pub dt_factor: f64,
    pub execution: Execution,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            registry: ShapeRegistry::builtin(),
            dt_factor: 1.0,
            execution: Execution::Parallel,
            seed: 2008,
        }
    }
}

impl VerifyOptions {
    fn dt(&self, seq: &Sequence) -> f64 {
        auto_dt(seq) * self.dt_factor
    }
}

struct Outcome {
    passed: bool,
    measured: String,
    tolerance: String,
    details: Vec<String>,
}

pub const NAMES: [&str; 11] = [
    "delta-pulse coefficients",
    "coefficient table by quadrature",
    "cumulant trace identities",
    "analytic vs numeric cumulants",
    "order scaling under pulse halving",
    "fidelity endpoints",
    "redistribution law",
    "no-control/4p/8s/16a ordering",
    "decoupling-error ordering",
    "designed symmetrizing pulse",
    "noise statistics",
];

pub fn run_criterion(id: u8, opts: &VerifyOptions) -> CriterionReport {
    let start = Instant::now();
    let result = match id {
        1 => delta_rows(),
        2 => table_rows(opts),
        3 => trace_identities(opts),
        4 => analytic_cumulants(opts),
        5 => order_scaling(opts),
        6 => endpoints(opts),
        7 => redistribution(opts),
        8 => fig3_ordering(opts),
        9 => decoupling_ordering(opts),
        10 => symmetrizing(opts),
        11 => noise_statistics(opts),
        _ => Err(Error::Invalid(format!("no criterion {id}"))),
    };
    let (passed, measured, tolerance, details) = match result {
        Ok(o) => (o.passed, o.measured, o.tolerance, o.details),
        Err(e) => (
            false,
            format!("error: {e}"),
            "-".into(),
            vec![e.to_string()],
        ),
    };
    CriterionReport {
        id,
        name: NAMES.get(id as usize - 1).copied().unwrap_or("unknown"),
        passed,
        measured,
        tolerance,
        details,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all(opts: &VerifyOptions) -> Vec<CriterionReport> {
    (1..=11).map(|id| run_criterion(id, opts)).collect()
}

fn nmr(gamma: f64, gamma_phi: f64) -> Result<RateModel> {
    RateModel::nmr(gamma, gamma_phi, Vec3::zeros())
}

fn generic_model(rng: &mut ChaCha8Rng, scale: f64, field: f64) -> Result<RateModel> {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    let l = Mat3::from_fn(|_, _| n.sample(rng)) * scale.sqrt();
    let b = Vec3::from_fn(|_, _| n.sample(rng)) * field;
    RateModel::new(l * l.transpose(), b)
}

/// 1. Delta rows against the closed forms, with the definitions evaluated
/// independently on the piecewise-constant angle.
fn delta_rows() -> Result<Outcome> {
    let opts = QuadOptions::default();
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for phi0 in [FRAC_PI_2, PI] {
        let closed = [
            (phi0 / 2.0).cos(),
            phi0.cos(),
            phi0.sin() / 8.0,
            (1.5 * phi0).sin() / 4.0,
            (phi0 / 2.0).sin() / 4.0,
        ];
        let c = compute_coefficients(&PulseShape::delta(phi0))?;
        let row = c.table_row();
        let computed = [row[0], row[1], row[2], c.mu, c.zeta];
        let angle = |t: f64| if t < 0.5 { -phi0 / 2.0 } else { phi0 / 2.0 };
        let oracle = [
            pulse_average(|t| angle(t).cos(), 1.0, &opts)?,
            pulse_average(|t| (2.0 * angle(t)).cos(), 1.0, &opts)?,
            0.5 * double_average(|t, s| (angle(t) - angle(s)).sin(), 1.0, &opts)?,
            double_average(|t, s| (2.0 * angle(t) - angle(s)).sin(), 1.0, &opts)?,
            pulse_average(|t| (t - 0.5) * angle(t).sin(), 1.0, &opts)?,
        ];
        for k in 0..5 {
            let d = (computed[k] - closed[k])
                .abs()
                .max((oracle[k] - closed[k]).abs());
            worst = worst.max(d);
        }
        details.push(format!("phi0={phi0:.6}: computed {computed:?}"));
    }
    Ok(Outcome {
        passed: worst <= TOL_DELTA_ROWS,
        measured: format!("max deviation {worst:.2e}"),
        tolerance: format!("{TOL_DELTA_ROWS:e}"),
        details,
    })
}

/// 2. Quadrature rows against the reference table.
fn table_rows(opts: &VerifyOptions) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut failing = Vec::new();
    let mut details = Vec::new();
    for (name, reference) in TABLE_ONE {
        let row = compute_coefficients(&opts.registry.lookup(name)?)?.table_row();
        let dev = row
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(dev);
        if dev > TOL_TABLE {
            failing.push(name);
        }
        details.push(format!("{name}: max deviation {dev:.2e}"));
    }
    let measured = if failing.is_empty() {
        format!("max deviation {worst:.2e} over {} rows", TABLE_ONE.len())
    } else {
        format!(
            "max deviation {worst:.2e}; failing rows {}",
            failing.join(", ")
        )
    };
    Ok(Outcome {
        passed: failing.is_empty(),
        measured,
        tolerance: format!("{TOL_TABLE:e} absolute"),
        details,
    })
}

/// 3. Traces of the first two cumulants over random triples.
fn trace_identities(opts: &VerifyOptions) -> Result<Outcome> {
    let shapes: Vec<PulseShape> = opts
        .registry
        .shapes()
        .filter(|s| !s.corrupted_source)
        .cloned()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut triples = Vec::with_capacity(TRACE_TRIALS);
    while triples.len() < TRACE_TRIALS {
        let shape = &shapes[rng.random_range(0..shapes.len())];
        let name = CATALOGUE[rng.random_range(1..CATALOGUE.len())];
        let Ok(seq) = catalogue_sequence(name, shape) else {
            continue;
        };
        let model = generic_model(&mut rng, 0.01, 0.1)?;
        triples.push((seq, model));
    }
    let errors: Vec<Result<(f64, f64)>> = map_indexed(triples.len(), opts.execution, |i| {
        let (seq, model) = &triples[i];
        let r = cumulants(seq, model)?;
        Ok((
            (r.gamma0.trace() - 2.0 * model.gamma_hat.trace()).abs(),
            r.gamma1.trace().abs(),
        ))
    });
    let (mut e0, mut e1) = (0.0f64, 0.0f64);
    for e in errors {
        let (a, b) = e?;
        e0 = e0.max(a);
        e1 = e1.max(b);
    }
    Ok(Outcome {
        passed: e0 <= TOL_TRACE && e1 <= TOL_TRACE,
        measured: format!(
            "{TRACE_TRIALS} triples: |tr G0 - 2 tr g| <= {e0:.1e}, |tr G1| <= {e1:.1e}"
        ),
        tolerance: format!("{TOL_TRACE:e}"),
        details: Vec::new(),
    })
}

/// 4. Closed forms for the leading cumulant and vanishing first-order terms.
fn analytic_cumulants(opts: &VerifyOptions) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 4);
    let generic = generic_model(&mut rng, 0.02, 0.08)?;
    let nmr_model = RateModel::nmr(0.013, 0.041, Vec3::new(0.03, -0.02, 0.05))?;
    let reg = &opts.registry;
    let cases: [(AnalyticCase, &str, &RateModel); 9] = [
        (AnalyticCase::HardPiX, "delta_pi", &generic),
        (AnalyticCase::SoftPiX, "G010_pi", &generic),
        (AnalyticCase::SoftPiX, "F1", &generic),
        (AnalyticCase::Hard4p, "delta_pi", &generic),
        (AnalyticCase::Soft4p, "G010_pi", &generic),
        (AnalyticCase::Soft4p, "W21_pi", &generic),
        (AnalyticCase::Seq12Nmr, "delta_pi2", &nmr_model),
        (AnalyticCase::Seq24Nmr, "G010_pi2", &nmr_model),
        (AnalyticCase::Seq48Nmr, "W21_pi2", &nmr_model),
    ];
    let mut details = Vec::new();
    let mut worst0: f64 = 0.0;
    for (case, shape_name, model) in cases {
        let shape = reg.lookup(shape_name)?;
        let seq = catalogue_sequence(case.sequence(), &shape)?;
        let numeric = cumulants(&seq, model)?.gamma0;
        let exact = analytic_gamma0(case, model, &compute_coefficients(&shape)?)?;
        let d = max_abs(&(numeric - exact));
        worst0 = worst0.max(d);
        details.push(format!("{} with {shape_name}: {d:.2e}", case.id()));
    }
    let vanishing: [(&str, &str, &RateModel); 7] = [
        ("2s", "delta_pi", &generic),
        ("2a", "G010_pi", &generic),
        ("4a", "G010_pi", &generic),
        ("8a", "G010_pi", &generic),
        ("8s", "delta_pi", &generic),
        ("16a", "G010_pi", &generic),
        ("48", "W21_pi2", &nmr_model),
    ];
    let mut worst1: f64 = 0.0;
    for (name, shape_name, model) in vanishing {
        let seq = catalogue_sequence(name, &reg.lookup(shape_name)?)?;
        let g1 = max_abs(&cumulants(&seq, model)?.gamma1);
        worst1 = worst1.max(g1);
        details.push(format!("G1({name}, {shape_name}) = {g1:.2e}"));
    }
    Ok(Outcome {
        passed: worst0 <= TOL_ANALYTIC_GAMMA0 && worst1 <= TOL_GAMMA1_ZERO,
        measured: format!("max |G0 - closed form| {worst0:.1e}, max |G1| {worst1:.1e}"),
        tolerance: format!("{TOL_ANALYTIC_GAMMA0:e} / {TOL_GAMMA1_ZERO:e}"),
        details,
    })
}

/// `‖Q(τ) − Q₀(τ) e^{−τΓ̄⁽⁰⁾}‖` for one period.
fn one_period_defect(seq: &Sequence, model: &RateModel, opts: &VerifyOptions) -> Result<f64> {
    let g0 = cumulants(seq, model)?.gamma0;
    let dt = opts.dt(seq) / 4.0;
    let q = *propagate(seq, model, None, 1, dt)?.last();
    let predicted = seq.net_rotation() * crate::linalg::expm(&(-g0 * seq.period()));
    Ok((q - predicted).norm())
}

/// 5. Residual of the leading cumulant under τ_p halving.
fn order_scaling(opts: &VerifyOptions) -> Result<Outcome> {
    let reg = &opts.registry;
    let g010 = reg.lookup("G010_pi")?;
    let hard = reg.lookup("delta_pi")?;
    let cases: [(&str, &PulseShape, (f64, f64)); 7] = [
        ("2s", &hard, THIRD_ORDER_RATIO),
        ("2a", &g010, THIRD_ORDER_RATIO),
        ("4a", &g010, THIRD_ORDER_RATIO),
        ("8a", &g010, THIRD_ORDER_RATIO),
        ("8s", &hard, THIRD_ORDER_RATIO),
        ("16a", &g010, THIRD_ORDER_RATIO),
        ("4p", &g010, SECOND_ORDER_RATIO),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 5);
    let unit = generic_model(&mut rng, 1.0, 1.0)?;
    let mut passed = true;
    let mut details = Vec::new();
    let mut summary = Vec::new();
    for (name, shape, (lo, hi)) in cases {
        let seq = catalogue_sequence(name, shape)?;
        // rates and fields scaled so that |Γ|·τ ≈ 0.05 at the coarser pulse
        let s = 0.05 / (seq.period() * unit.gamma_hat.norm().max(unit.b.norm()));
        let model = RateModel::new(unit.gamma_hat * s, unit.b * s)?;
        let coarse = one_period_defect(&seq, &model, opts)?;
        let fine = one_period_defect(&seq.with_tau_p(0.5 * seq.tau_p())?, &model, opts)?;
        let ratio = coarse / fine;
        let ok = (lo..=hi).contains(&ratio);
        passed &= ok;
        summary.push(format!("{name} {ratio:.2}"));
        details.push(format!(
            "{name}: defect {coarse:.3e} -> {fine:.3e}, ratio {ratio:.3} in [{lo}, {hi}]: {ok}"
        ));
    }
    Ok(Outcome {
        passed,
        measured: format!("ratios {}", summary.join(", ")),
        tolerance: format!(
            "[{}, {}] third order, [{}, {}] for 4p",
            THIRD_ORDER_RATIO.0, THIRD_ORDER_RATIO.1, SECOND_ORDER_RATIO.0, SECOND_ORDER_RATIO.1
        ),
        details,
    })
}

/// 6. Ideal endpoint and the simulated uncontrolled decay.
fn endpoints(opts: &VerifyOptions) -> Result<Outcome> {
    let f_end = ideal_fidelity(512.0, GAMMA_PHI);
    let seq = catalogue_sequence("free", &PulseShape::delta(PI))?;
    let rec = propagate(&seq, &nmr(0.0, GAMMA_PHI)?, None, 512, opts.dt(&seq))?;
    let dev = rec
        .times
        .iter()
        .zip(average_fidelity(&rec))
        .map(|(&t, f)| (f - ideal_fidelity(t, GAMMA_PHI)).abs())
        .fold(0.0, f64::max);
    Ok(Outcome {
        passed: (f_end - 0.680).abs() <= TOL_IDEAL_ENDPOINT && dev <= TOL_FREE_DECAY,
        measured: format!("F_ideal(512) = {f_end:.5}; simulated deviation {dev:.1e}"),
        tolerance: format!("0.680 +- {TOL_IDEAL_ENDPOINT}; {TOL_FREE_DECAY:e}"),
        details: Vec::new(),
    })
}

/// 7. Fitted noise-free rates against the redistribution law.
fn redistribution(opts: &VerifyOptions) -> Result<Outcome> {
    let surrogate = design(&DesignSpec::self_refocusing(PI), opts.seed)?
        .shape
        .named("S_design");
    let shapes = [
        opts.registry.lookup("delta_pi")?,
        opts.registry.lookup("G010_pi")?,
        surrogate,
        opts.registry.lookup("F1")?,
    ];
    let model = nmr(0.0, GAMMA_PHI)?;
    let mut jobs = Vec::new();
    for name in ["4p", "8s", "16a"] {
        for shape in &shapes {
            jobs.push((name, shape));
        }
    }
    let results: Vec<Result<(String, f64, [f64; 2], [f64; 2])>> =
        map_indexed(jobs.len(), opts.execution, |i| {
            let (name, shape) = jobs[i];
            let seq = catalogue_sequence(name, shape)?;
            let u2 = compute_coefficients(shape)?.upsilon2;
            let rec = propagate(
                &seq,
                &model,
                None,
                periods_for(512.0, seq.period())?,
                opts.dt(&seq),
            )?;
            let fit = fit_rates(&rec)?;
            let pred = redistribution_rates(GAMMA_PHI, u2);
            Ok((
                format!("{name}/{}", shape.name),
                u2,
                [fit.0, fit.1],
                [pred.0, pred.1],
            ))
        });
    let mut passed = true;
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for r in results {
        let (label, u2, fit, pred) = r?;
        for k in 0..2 {
            let err = (fit[k] - pred[k]).abs();
            passed &= err <= TOL_RATE_REL * pred[k].abs() + TOL_RATE_ABS;
            if pred[k].abs() > TOL_RATE_ABS {
                worst = worst.max(err / pred[k].abs());
            }
        }
        details.push(format!(
            "{label}: u2 {u2:.4}, fitted ({:.4e}, {:.4e}), predicted ({:.4e}, {:.4e})",
            fit[0], fit[1], pred[0], pred[1]
        ));
    }
    Ok(Outcome {
        passed,
        measured: format!("max relative rate error {worst:.2e} over 12 runs"),
        tolerance: format!("{TOL_RATE_REL} relative (+{TOL_RATE_ABS:e} absolute)"),
        details,
    })
}

fn preset_ensemble(
    preset: &ExperimentConfig,
    seq: &Sequence,
    opts: &VerifyOptions,
) -> Result<(f64, EnsembleResult)> {
    let model = preset.model()?.rate_model()?;
    let n = periods_for(preset.horizon()?, seq.period())?;
    let dt = opts.dt(seq);
    let mut spec = EnsembleSpec::new(
        preset.ensemble()?.realizations,
        preset.ensemble()?.seed,
        *preset.noise()?,
        n,
    );
    spec.dt = Some(dt);
    let clean = average_fidelity(&propagate(seq, &model, None, n, dt)?);
    Ok((
        *clean.last().expect("non-empty"),
        run_ensemble(seq, &model, &spec, opts.execution)?,
    ))
}

/// 8. Ensemble means of the `fig3` preset.
fn fig3_ordering(opts: &VerifyOptions) -> Result<Outcome> {
    let preset = ExperimentConfig::preset("fig3")?;
    let shape = opts.registry.lookup(&preset.shapes[0])?;
    let mut f = Vec::new();
    for name in ["free", "4p", "8s", "16a"] {
        let seq = catalogue_sequence(name, &shape)?;
        f.push(preset_ensemble(&preset, &seq, opts)?.1.last_mean());
    }
    let u2 = preset.reference_upsilon2.unwrap_or(-0.7086);
    let redist = redistribution_fidelity(preset.horizon()?, preset.model()?.gamma_phi, u2);
    let gap = (f[3] - redist).abs();
    Ok(Outcome {
        passed: f[0] < f[1] && f[1] < f[2] && f[2] <= f[3] && gap < TOL_FIG3_REDIST,
        measured: format!(
            "F(512): free {:.4} < 4p {:.4} < 8s {:.4} <= 16a {:.4}; |16a - redist {redist:.4}| = {gap:.4}",
            f[0], f[1], f[2], f[3]
        ),
        tolerance: format!("ordering; {TOL_FIG3_REDIST}"),
        details: vec![format!("{} realizations, seed {}", preset.ensemble()?.realizations, preset.ensemble()?.seed)],
    })
}

/// `ΔF_a − ΔF_b` and its paired standard error.
fn paired(a: &(f64, EnsembleResult), b: &(f64, EnsembleResult)) -> (f64, f64) {
    let (m, se) = mean_stderr(a.1.finals.iter().zip(&b.1.finals).map(|(x, y)| x - y));
    ((a.0 - b.0) - m, se)
}

/// 9. Decoupling-error orderings with common random fields.
fn decoupling_ordering(opts: &VerifyOptions) -> Result<Outcome> {
    let preset = ExperimentConfig::preset("fig5")?;
    let designed = design(&DesignSpec::first_order(PI), opts.seed)?
        .shape
        .named("W1_design");
    let reg = &opts.registry;
    let mut details = Vec::new();
    let mut run = |seq_name: &str, shape: &PulseShape| -> Result<(f64, EnsembleResult)> {
        let r = preset_ensemble(&preset, &catalogue_sequence(seq_name, shape)?, opts)?;
        details.push(format!(
            "{seq_name}/{}: dF = {:.5} (se {:.5})",
            shape.name,
            r.0 - r.1.last_mean(),
            r.1.stderr.last().copied().unwrap_or(0.0)
        ));
        Ok(r)
    };
    let s_w21 = run("8s", &reg.lookup("W21_pi")?)?;
    let s_w1 = run("8s", &designed)?;
    let s_g = run("8s", &reg.lookup("G010_pi")?)?;
    let a_g = run("16a", &reg.lookup("G010_pi")?)?;
    let a_w1 = run("16a", &designed)?;
    let a_f1 = run("16a", &reg.lookup("F1")?)?;
    let checks = [
        ("8s: W21 < W1", paired(&s_w21, &s_w1)),
        ("8s: W1 < G0.10", paired(&s_w1, &s_g)),
        ("16a: F1 < G0.10", paired(&a_f1, &a_g)),
        ("16a: F1 < W1", paired(&a_f1, &a_w1)),
    ];
    let mut passed = true;
    let mut summary = Vec::new();
    for (label, (d, se)) in checks {
        let ok = d + ORDERING_SIGMAS * se < 0.0;
        passed &= ok;
        summary.push(format!(
            "{label} ({:.1} se)",
            -d / se.max(f64::MIN_POSITIVE)
        ));
        details.push(format!("{label}: difference {d:.2e} +- {se:.1e}: {ok}"));
    }
    Ok(Outcome {
        passed,
        measured: summary.join("; "),
        tolerance: format!(
            "each difference below zero by {ORDERING_SIGMAS} paired standard errors"
        ),
        details,
    })
}

/// 10. A designed `υ₂ = 1/3` pulse makes the 4p leading cumulant isotropic.
fn symmetrizing(opts: &VerifyOptions) -> Result<Outcome> {
    let d = design(&DesignSpec::symmetrizing(PI), opts.seed)?;
    let (gamma, gamma_phi) = (0.004, 0.017);
    let seq = catalogue_sequence("4p", &d.shape)?;
    let g0 = cumulants(&seq, &nmr(gamma, gamma_phi)?)?.gamma0;
    let diag = g0.diagonal();
    let spread = diag.max() - diag.min();
    let target = 2.0 / 3.0 * (2.0 * gamma + gamma_phi);
    let off = diag.iter().map(|v| (v - target).abs()).fold(0.0, f64::max);
    Ok(Outcome {
        passed: spread <= TOL_SYMMETRIZED && off <= TOL_SYMMETRIZED,
        measured: format!(
            "u2 = {:.8}; diagonal spread {spread:.1e}, max |diag - 2(2g+gphi)/3| {off:.1e}",
            d.coefficients.upsilon2
        ),
        tolerance: format!("{TOL_SYMMETRIZED:e}"),
        details: vec![format!(
            "design coefficients {:?}",
            d.shape.fourier_coeffs().unwrap_or(&[])
        )],
    })
}

/// 11. Ensemble autocovariance and cross-covariance of the synthesized field.
fn noise_statistics(opts: &VerifyOptions) -> Result<Outcome> {
    let spec = NoiseSpec {
        b0: 0.1,
        tau_c: 8.0,
        dt: 1.0 / 32.0,
        t_total: 512.0,
        seed: opts.seed,
    };
    let generator = NoiseGenerator::new(spec)?;
    let lag_steps = [0usize, 256, 512];
    let window = generator.spec().n_samples() - lag_steps[2];
    // per realization: time-averaged products for 3 lags x 3 components,
    // then 3 cross pairs at lags 0 and tau_c
    let stats: Vec<[f64; 15]> = map_indexed(NOISE_REALIZATIONS, opts.execution, |i| {
        let r = generator.generate(derive_seed(opts.seed, i));
        let avg = |a: &[f64], b: &[f64], lag: usize| -> f64 {
            a[..window]
                .iter()
                .zip(&b[lag..lag + window])
                .map(|(x, y)| x * y)
                .sum::<f64>()
                / window as f64
        };
        let mut out = [0.0; 15];
        for (l, &lag) in lag_steps.iter().enumerate() {
            for c in 0..3 {
                out[3 * l + c] = avg(&r.samples[c], &r.samples[c], lag);
            }
        }
        for (p, (a, b)) in [(0, 1), (0, 2), (1, 2)].into_iter().enumerate() {
            out[9 + p] = avg(&r.samples[a], &r.samples[b], 0);
            out[12 + p] = avg(&r.samples[a], &r.samples[b], lag_steps[1]);
        }
        out
    });
    let var = spec.b0 * spec.b0;
    let expected = [var, var * (-0.5f64).exp(), var * (-2.0f64).exp()];
    let mut passed = true;
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for k in 0..15 {
        let (m, se) = mean_stderr(stats.iter().map(|s| s[k]));
        let target = if k < 9 { expected[k / 3] } else { 0.0 };
        let z = (m - target).abs() / se;
        worst = worst.max(z);
        passed &= z <= NOISE_SIGMAS;
        details.push(format!(
            "statistic {k}: {m:.6e} vs {target:.6e} ({z:.2} se)"
        ));
    }
    Ok(Outcome {
        passed,
        measured: format!(
            "{NOISE_REALIZATIONS} realizations; largest deviation {worst:.2} standard errors"
        ),
        tolerance: format!("{NOISE_SIGMAS} standard errors"),
        details,
    })
}

/// Coefficient row lookup used by reports and tests.
pub fn reference_row(name: &str) -> Option<[f64; 7]> {
    TABLE_ONE.iter().find(|(n, _)| *n == name).map(|(_, r)| *r)
}

/// Table row of computed coefficients in the reference column order.
pub fn computed_row(shape: &PulseShape) -> Result<[f64; 7]> {
    Ok(compute_coefficients(shape)?.table_row())
}
