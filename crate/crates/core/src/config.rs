//! Experiment configuration: a TOML tree with single-parent inheritance
//! (`extends = "<preset>"`). Presets ship inside the crate.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::designer::DesignSpec;
use crate::ensemble::FieldParams;
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::rates::RateModel;
use crate::sequences::resolve_sequence;
use crate::shapes::ShapeRegistry;

/// Built-in presets, `(name, source)`.
pub const PRESETS: [(&str, &str); 7] = [
    ("base", include_str!("../presets/base.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("fig6", include_str!("../presets/fig6.toml")),
    ("fig7", include_str!("../presets/fig7.toml")),
    ("table1", include_str!("../presets/table1.toml")),
];

pub fn preset_source(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| Error::Config {
            field: "extends".into(),
            msg: format!(
                "unknown preset '{name}' (known: {})",
                preset_names().join(", ")
            ),
        })
}

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    #[default]
    Simulate,
    /// Coefficient table for the listed shapes.
    Coefficients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub gamma: f64,
    pub gamma_phi: f64,
    #[serde(default)]
    pub b: [f64; 3],
}

impl ModelConfig {
    pub fn rate_model(&self) -> Result<RateModel> {
        RateModel::nmr(self.gamma, self.gamma_phi, Vec3::from(self.b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub realizations: usize,
    pub seed: u64,
    /// Also emit the first member of the ensemble on its own.
    #[serde(default)]
    pub single_realization: bool,
}

/// A shape produced by the designer before the jobs run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignEntry {
    pub name: String,
    /// `phi0;harmonics;smoothness;targets`.
    pub spec: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub amplitude_bound: Option<f64>,
}

impl DesignEntry {
    pub fn design_spec(&self) -> Result<DesignSpec> {
        let mut spec: DesignSpec = self.spec.parse()?;
        spec.amplitude_bound = self.amplitude_bound;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub kind: JobKind,
    #[serde(default)]
    pub sequences: Vec<String>,
    #[serde(default)]
    pub shapes: Vec<String>,
    #[serde(default)]
    pub designs: Vec<DesignEntry>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub noise: Option<FieldParams>,
    /// Simulated time in units of `τ_p`.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
    /// `υ₂` of the dashed redistribution reference; defaults to each
    /// shape's own value.
    #[serde(default)]
    pub reference_upsilon2: Option<f64>,
    /// Integrator step; automatic when absent.
    #[serde(default)]
    pub dt: Option<f64>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_table(text: &str) -> Result<Table> {
    text.parse::<Table>().map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        msg: e.message().trim().to_string(),
    })
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn resolve(text: &str, depth: usize) -> Result<Table> {
    if depth > 8 {
        return Err(Error::Config {
            field: "extends".into(),
            msg: "inheritance chain too deep".into(),
        });
    }
    let mut table = parse_table(text)?;
    match table.remove("extends") {
        None => Ok(table),
        Some(Value::String(parent)) => {
            let mut base = resolve(preset_source(&parent)?, depth + 1)?;
            merge(&mut base, table);
            Ok(base)
        }
        Some(_) => Err(Error::Config {
            field: "extends".into(),
            msg: "must be a preset name".into(),
        }),
    }
}

/// Field path from a serde message such as "unknown field `foo`".
fn field_hint(msg: &str) -> String {
    msg.split('`').nth(1).unwrap_or("config").to_string()
}

impl ExperimentConfig {
    /// Parses a config, applying inheritance, without validating names.
    pub fn parse(text: &str) -> Result<Self> {
        let table = resolve(text, 0)?;
        Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| {
                let msg = e.message().trim().to_string();
                Error::Config {
                    field: field_hint(&msg),
                    msg,
                }
            })
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::parse(preset_source(name)?)
    }

    fn need<'a, T>(value: &'a Option<T>, field: &str) -> Result<&'a T> {
        value.as_ref().ok_or_else(|| Error::Config {
            field: field.into(),
            msg: "required for simulations".into(),
        })
    }

    pub fn model(&self) -> Result<&ModelConfig> {
        Self::need(&self.model, "model")
    }

    pub fn noise(&self) -> Result<&FieldParams> {
        Self::need(&self.noise, "noise")
    }

    pub fn horizon(&self) -> Result<f64> {
        Self::need(&self.horizon, "horizon").copied()
    }

    pub fn ensemble(&self) -> Result<&EnsembleConfig> {
        Self::need(&self.ensemble, "ensemble")
    }

    /// Checks every name and parameter against `registry` extended by the
    /// configured designs (which are only parsed here, not run).
    pub fn validate(&self, registry: &ShapeRegistry) -> Result<()> {
        let cfg = |field: &str, msg: String| Error::Config {
            field: field.into(),
            msg,
        };
        if self.shapes.is_empty() {
            return Err(cfg("shapes", "at least one shape is required".into()));
        }
        for (i, d) in self.designs.iter().enumerate() {
            d.design_spec()
                .and_then(|s| s.validate())
                .map_err(|e| cfg(&format!("designs[{i}].spec"), e.to_string()))?;
        }
        let designed = |name: &str| self.designs.iter().any(|d| d.name == name);
        for (i, s) in self.shapes.iter().enumerate() {
            if !designed(s) {
                registry
                    .lookup(s)
                    .map_err(|e| cfg(&format!("shapes[{i}]"), e.to_string()))?;
            }
        }
        if self.kind == JobKind::Coefficients {
            return Ok(());
        }
        if self.sequences.is_empty() {
            return Err(cfg("sequences", "at least one sequence is required".into()));
        }
        let model = self.model()?;
        model
            .rate_model()
            .map_err(|e| cfg("model", e.to_string()))?;
        let noise = self.noise()?;
        crate::noise::NoiseSpec {
            b0: noise.b0,
            tau_c: noise.tau_c,
            dt: noise.dt,
            t_total: 0.0,
            seed: 0,
        }
        .validate()
        .map_err(|e| cfg("noise", e.to_string()))?;
        let horizon = self.horizon()?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(cfg("horizon", format!("{horizon} must be positive")));
        }
        if self.ensemble()?.realizations == 0 {
            return Err(cfg("ensemble.realizations", "must be at least 1".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(cfg("dt", format!("{dt} must be positive")));
            }
        }
        // Designed shapes are checked against sequences once they exist.
        for (i, name) in self.sequences.iter().enumerate() {
            for shape in self.shapes.iter().filter(|s| !designed(s)) {
                let seq = resolve_sequence(name, &registry.lookup(shape)?)
                    .map_err(|e| cfg(&format!("sequences[{i}]"), e.to_string()))?;
                periods_for(horizon, seq.period()).map_err(|e| cfg("horizon", e.to_string()))?;
            }
        }
        Ok(())
    }
}

/// Whole number of periods in `horizon`.
pub fn periods_for(horizon: f64, period: f64) -> Result<usize> {
    let n = horizon / period;
    if (n - n.round()).abs() > 1e-9 * n.max(1.0) || n.round() < 1.0 {
        return Err(Error::Invalid(format!(
            "horizon {horizon} is not a whole number of periods {period}"
        )));
    }
    Ok(n.round() as usize)
}
