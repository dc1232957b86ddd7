//! `ddsim`: coefficients, cumulants, simulations, pulse design and the
//! acceptance report from the command line.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dd_core::coeffs::{compute_coefficients, csv_row, CSV_HEADER};
use dd_core::config::{preset_names, ExperimentConfig};
use dd_core::designer::{design_with, parse_targets, table_row, DesignOptions, DesignSpec};
use dd_core::ensemble::{with_jobs, Execution, FieldParams};
use dd_core::magnus::{analytic_gamma0, cumulants, AnalyticCase};
use dd_core::rates::RateModel;
use dd_core::runner::{run, RunOptions, RunReport};
use dd_core::sequences::resolve_sequence;
use dd_core::shapes::parse_angle;
use dd_core::verify::{run_criterion, VerifyOptions};
use dd_core::{ShapeRegistry, Vec3};

#[derive(Parser)]
#[command(
    name = "ddsim",
    version,
    about = "Soft-pulse dynamical decoupling toolkit"
)]
struct Cli {
    /// Master seed for noise ensembles and designs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (1 runs sequentially; 0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra shape table (`name phi0 kind params...` rows); rows override
    /// built-in shapes of the same name.
    #[arg(long, global = true)]
    table: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pulse coefficients as CSV.
    Coeffs {
        /// Shape names; all registered shapes when omitted.
        shapes: Vec<String>,
    },
    /// Leading and subleading average decoherence operators.
    Cumulants {
        #[arg(long)]
        sequence: String,
        #[arg(long)]
        shape: String,
        #[command(flatten)]
        model: ModelArgs,
        /// Compare with a closed form (`hard_pi_x`, `soft_4p`, ...).
        #[arg(long)]
        analytic: Option<String>,
    },
    /// Fidelity series for sequences and shapes, from a config file or flags.
    Simulate(SimulateArgs),
    /// Fourier pulse with prescribed coefficients.
    Design {
        #[arg(long, default_value = "pi")]
        phi0: String,
        /// Comma-separated targets, e.g. `u,u2,a` or `u2=1/3`.
        #[arg(long, default_value = "")]
        targets: String,
        #[arg(long, default_value_t = 1)]
        smooth: u8,
        #[arg(long, default_value_t = 7)]
        harmonics: usize,
        /// Soft bound on the peak amplitude (1/tau_p).
        #[arg(long)]
        bound: Option<f64>,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
    },
    /// Acceptance criteria; exits nonzero if any fails.
    Verify {
        /// Subset of criteria, e.g. `1,2,6`.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
        /// Multiplies the automatic integrator step.
        #[arg(long, default_value_t = 1.0)]
        dt_factor: f64,
    },
    /// Runs a built-in preset.
    Preset {
        /// Preset name; `--list` shows them.
        name: Option<String>,
        #[arg(long)]
        list: bool,
        /// Overrides the ensemble size.
        #[arg(long)]
        realizations: Option<usize>,
    },
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Transverse relaxation rate gamma (1/tau_p).
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// Dephasing rate (1/tau_p).
    #[arg(long, default_value_t = 2.0 * std::f64::consts::PI * 1e-3)]
    gamma_phi: f64,
    /// Static field `bx,by,bz`.
    #[arg(long, value_delimiter = ',', num_args = 1..=3, default_values_t = [0.0, 0.0, 0.0])]
    b: Vec<f64>,
}

impl ModelArgs {
    fn model(&self) -> Result<RateModel> {
        if self.b.len() != 3 {
            bail!("--b takes three components, e.g. --b 0,0,0.1");
        }
        Ok(RateModel::nmr(
            self.gamma,
            self.gamma_phi,
            Vec3::new(self.b[0], self.b[1], self.b[2]),
        )?)
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML experiment config; the flags below are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "16a")]
    sequence: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "G010_pi")]
    shape: Vec<String>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 512.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0.1)]
    b0: f64,
    #[arg(long, default_value_t = 8.0)]
    tau_c: f64,
    #[arg(long, default_value_t = 400)]
    realizations: usize,
    /// Integrator step (automatic when omitted).
    #[arg(long)]
    dt: Option<f64>,
}

fn registry(cli: &Cli) -> Result<ShapeRegistry> {
    let mut reg = ShapeRegistry::builtin();
    if let Some(path) = &cli.table {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        reg.load_table(&text)?;
    }
    Ok(reg)
}

fn execution(cli: &Cli) -> Execution {
    if cli.jobs == 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn emit(cli: &Cli, body: &str) -> Result<()> {
    match &cli.out {
        Some(path) => fs::write(path, body).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn summarize(report: &RunReport) -> ExitCode {
    for job in &report.manifest.jobs {
        let status = match (job.ok, &job.skipped) {
            (true, _) => "ok",
            (false, Some(_)) => "skipped",
            (false, None) => "FAILED",
        };
        let f = job.final_fidelity.map_or("-".into(), |v| format!("{v:.5}"));
        let df = job.final_delta_f.map_or("-".into(), |v| format!("{v:.2e}"));
        println!(
            "{:>6} {:<12} {status:<6} F_end {f:<8} dF_end {df}",
            job.sequence, job.shape
        );
    }
    for job in &report.manifest.jobs {
        if let Some(why) = &job.skipped {
            eprintln!("skipped {}: {why}", job.shape);
        }
    }
    for f in &report.manifest.failed {
        eprintln!("failed: {f}");
    }
    println!("manifest: {}", report.manifest_path.display());
    if report.ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run_config(cli: &Cli, config: &ExperimentConfig) -> Result<ExitCode> {
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(&config.name));
    let opts = RunOptions {
        out_dir: out,
        execution: execution(cli),
        seed: cli.seed,
    };
    let report = run(config, &registry(cli)?, &opts)?;
    Ok(summarize(&report))
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Coeffs { shapes } => {
            let reg = registry(cli)?;
            let all = shapes.is_empty();
            let names: Vec<String> = if all {
                reg.names().map(str::to_string).collect()
            } else {
                shapes.clone()
            };
            let mut body = format!("{CSV_HEADER}\n");
            for name in names {
                let shape = reg.lookup(&name)?;
                if all && shape.corrupted_source {
                    eprintln!("skipped {name}: source amplitudes are flagged as corrupted");
                    continue;
                }
                let c = compute_coefficients(&shape).with_context(|| format!("shape {name}"))?;
                body.push_str(&csv_row(&shape, &c));
                body.push('\n');
            }
            emit(cli, &body)?;
        }
        Command::Cumulants {
            sequence,
            shape,
            model,
            analytic,
        } => {
            let reg = registry(cli)?;
            let shape = reg.lookup(shape)?;
            let seq = resolve_sequence(sequence, &shape)?;
            let model = model.model()?;
            let r = cumulants(&seq, &model)?;
            let rows = |m: &dd_core::Mat3| -> Vec<[f64; 3]> {
                (0..3).map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]]).collect()
            };
            let mut json = serde_json::json!({
                "sequence": seq.dsl(),
                "shape": shape.name,
                "period": seq.period(),
                "gamma0": rows(&r.gamma0),
                "gamma1": rows(&r.gamma1),
            });
            if let Some(case) = analytic {
                let case: AnalyticCase = case.parse()?;
                let exact = analytic_gamma0(case, &model, &compute_coefficients(&shape)?)?;
                json["analytic"] = serde_json::json!(rows(&exact));
                json["max_abs_difference"] =
                    serde_json::json!(dd_core::linalg::max_abs(&(exact - r.gamma0)));
            }
            emit(cli, &format!("{}\n", serde_json::to_string_pretty(&json)?))?;
        }
        Command::Simulate(args) => {
            let config = match &args.config {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    ExperimentConfig::parse(&text)?
                }
                None => {
                    args.model.model()?;
                    ExperimentConfig {
                        name: "simulate".into(),
                        kind: Default::default(),
                        sequences: args.sequence.clone(),
                        shapes: args.shape.clone(),
                        designs: Vec::new(),
                        model: Some(dd_core::config::ModelConfig {
                            gamma: args.model.gamma,
                            gamma_phi: args.model.gamma_phi,
                            b: [args.model.b[0], args.model.b[1], args.model.b[2]],
                        }),
                        noise: Some(FieldParams {
                            b0: args.b0,
                            tau_c: args.tau_c,
                            ..FieldParams::default()
                        }),
                        horizon: Some(args.horizon),
                        ensemble: Some(dd_core::config::EnsembleConfig {
                            realizations: args.realizations,
                            seed: cli.seed.unwrap_or(2008),
                            single_realization: false,
                        }),
                        reference_upsilon2: None,
                        dt: args.dt,
                    }
                }
            };
            return run_config(cli, &config);
        }
        Command::Design {
            phi0,
            targets,
            smooth,
            harmonics,
            bound,
            restarts,
        } => {
            let phi0 = parse_angle(phi0).with_context(|| format!("bad angle {phi0}"))?;
            let mut spec = DesignSpec::new(phi0, *harmonics, *smooth, parse_targets(targets)?);
            spec.amplitude_bound = *bound;
            let opts = DesignOptions {
                restarts: *restarts,
                execution: execution(cli),
                ..DesignOptions::default()
            };
            let d = design_with(&spec, cli.seed.unwrap_or(0), &opts)?;
            let c = d.coefficients;
            let mut body = format!("{}\n", table_row(&d));
            body.push_str(&format!(
                "# upsilon {:.8} upsilon2 {:.8} alpha {:.8} alpha2 {:.8} zeta {:.8} zeta2 {:.8} mu {:.8}\n",
                c.upsilon, c.upsilon2, c.alpha, c.alpha2, c.zeta, c.zeta2, c.mu
            ));
            body.push_str(&format!(
                "# residual {:.2e} peak {:.3} restart {}/{}\n",
                d.residual, d.peak_amplitude, d.restart, d.restarts
            ));
            emit(cli, &body)?;
        }
        Command::Verify {
            criteria,
            dt_factor,
        } => {
            let opts = VerifyOptions {
                registry: registry(cli)?,
                dt_factor: *dt_factor,
                execution: execution(cli),
                seed: cli.seed.unwrap_or(2008),
            };
            let ids: Vec<u8> = if criteria.is_empty() {
                (1..=11).collect()
            } else {
                criteria.clone()
            };
            let mut reports = Vec::new();
            for id in ids {
                if !(1..=11).contains(&id) {
                    bail!("no criterion {id}");
                }
                let r = run_criterion(id, &opts);
                println!("{}", r.line());
                reports.push(r);
            }
            let all = reports.iter().all(|r| r.passed);
            let json = serde_json::json!({ "passed": all, "criteria": reports });
            if let Some(path) = &cli.out {
                let text = serde_json::to_string_pretty(&json)?;
                fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            }
            return Ok(if all {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            });
        }
        Command::Preset {
            name,
            list,
            realizations,
        } => {
            if *list || name.is_none() {
                for n in preset_names() {
                    println!("{n}");
                }
                return Ok(ExitCode::SUCCESS);
            }
            let name = name.as_deref().expect("checked above");
            let mut config = ExperimentConfig::preset(name)?;
            if let (Some(n), Some(e)) = (realizations, config.ensemble.as_mut()) {
                e.realizations = *n;
            }
            return run_config(cli, &config);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match with_jobs(cli.jobs, || execute(&cli)) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
