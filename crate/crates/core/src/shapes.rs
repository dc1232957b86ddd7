//! Control waveforms `V(t)` on `[0, τ_p]`, their integrated phase, and the
//! built-in shape catalogue.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::linalg::Vec3;

/// Waveform family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShapeKind {
    /// Instantaneous rotation at the pulse midpoint.
    Delta,
    /// Gaussian of width `width·τ_p` centred on the midpoint, truncated to
    /// the pulse interval and renormalized to the nominal angle.
    Gaussian { width: f64 },
    /// `V(t) = (2π/τ_p) Σ_n [A_n cos(2π n t / τ_p) + B_n sin(2π n t / τ_p)]`,
    /// with `sine[k] = B_{k+1}`. Catalogue shapes have no sine terms.
    Fourier {
        coeffs: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        sine: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub name: String,
    pub kind: ShapeKind,
    /// Nominal rotation angle (rad).
    pub phi0: f64,
    pub tau_p: f64,
    /// Set for catalogue rows whose source coefficients are unusable.
    #[serde(default)]
    pub corrupted_source: bool,
}

impl PulseShape {
    pub fn delta(phi0: f64) -> Self {
        Self {
            name: format!("delta({})", format_angle(phi0)),
            kind: ShapeKind::Delta,
            phi0,
            tau_p: 1.0,
            corrupted_source: false,
        }
    }

    pub fn gaussian(width: f64, phi0: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Invalid(format!(
                "gaussian width {width} must be positive"
            )));
        }
        Ok(Self {
            name: format!("G{width}({})", format_angle(phi0)),
            kind: ShapeKind::Gaussian { width },
            phi0,
            tau_p: 1.0,
            corrupted_source: false,
        })
    }

    /// Fourier shape; the rotation angle is `2π A_0`.
    pub fn fourier(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|a| !a.is_finite()) {
            return Err(Error::Invalid(
                "fourier coefficients must be finite and non-empty".into(),
            ));
        }
        Ok(Self {
            name: "fourier".into(),
            phi0: TAU * coeffs[0],
            kind: ShapeKind::Fourier {
                coeffs,
                sine: Vec::new(),
            },
            tau_p: 1.0,
            corrupted_source: false,
        })
    }

    /// Fourier shape with additional sine harmonics `B_1, B_2, ...`; any
    /// nonzero `B_n` breaks the mirror symmetry about the midpoint.
    pub fn fourier_with_sine(coeffs: Vec<f64>, sine: Vec<f64>) -> Result<Self> {
        if sine.iter().any(|b| !b.is_finite()) {
            return Err(Error::Invalid("sine coefficients must be finite".into()));
        }
        let mut shape = Self::fourier(coeffs)?;
        if let ShapeKind::Fourier { sine: s, .. } = &mut shape.kind {
            *s = sine;
        }
        Ok(shape)
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_tau_p(mut self, tau_p: f64) -> Self {
        assert!(tau_p > 0.0);
        self.tau_p = tau_p;
        self
    }

    pub fn is_delta(&self) -> bool {
        matches!(self.kind, ShapeKind::Delta)
    }

    /// Same waveform with amplitude multiplied by `factor`; the total angle
    /// scales accordingly.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.phi0 *= factor;
        if let ShapeKind::Fourier { coeffs, sine } = &mut out.kind {
            coeffs
                .iter_mut()
                .chain(sine.iter_mut())
                .for_each(|a| *a *= factor);
        }
        out
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * self.tau_p;
        if t < -slack || t > self.tau_p + slack || t.is_nan() {
            return Err(Error::OutOfRange {
                t,
                limit: self.tau_p,
            });
        }
        Ok(())
    }

    /// Field amplitude `V(t)` in rad per unit time.
    pub fn evaluate_waveform(&self, t: f64) -> Result<f64> {
        if self.is_delta() {
            return Err(Error::DeltaNotPointwise);
        }
        self.check_time(t)?;
        Ok(self.waveform_unchecked(t))
    }

    pub(crate) fn waveform_unchecked(&self, t: f64) -> f64 {
        let x = t / self.tau_p;
        match &self.kind {
            ShapeKind::Delta => 0.0,
            ShapeKind::Gaussian { width } => {
                let y = x - 0.5;
                let mass = gaussian_mass(*width);
                self.phi0 / (mass * (TAU).sqrt() * width * self.tau_p)
                    * (-0.5 * y * y / (width * width)).exp()
            }
            ShapeKind::Fourier { coeffs, sine } => {
                let mut v = 0.0;
                for (n, a) in coeffs.iter().enumerate() {
                    v += a * (TAU * n as f64 * x).cos();
                }
                for (k, b) in sine.iter().enumerate() {
                    v += b * (TAU * (k + 1) as f64 * x).sin();
                }
                TAU * v / self.tau_p
            }
        }
    }

    /// Integrated angle `φ(t) = ∫_0^t V`.
    pub fn phase(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.phase_unchecked(t))
    }

    pub(crate) fn phase_unchecked(&self, t: f64) -> f64 {
        let x = t / self.tau_p;
        match &self.kind {
            // right-continuous step at the midpoint
            ShapeKind::Delta => {
                if x < 0.5 {
                    0.0
                } else {
                    self.phi0
                }
            }
            ShapeKind::Gaussian { width } => {
                let mass = gaussian_mass(*width);
                self.phi0 * (0.5 + 0.5 * erf((x - 0.5) / (SQRT_2 * width)) / mass)
            }
            ShapeKind::Fourier { coeffs, sine } => {
                let mut phi = TAU * coeffs[0] * x;
                for (n, a) in coeffs.iter().enumerate().skip(1) {
                    phi += a * (TAU * n as f64 * x).sin() / n as f64;
                }
                for (k, b) in sine.iter().enumerate() {
                    let n = (k + 1) as f64;
                    phi += b * (1.0 - (TAU * n * x).cos()) / n;
                }
                phi
            }
        }
    }

    /// `ϕ(t) = φ(t) − φ₀/2`, odd about the midpoint for symmetric shapes.
    pub fn symmetrized_angle(&self, t: f64) -> Result<f64> {
        Ok(self.phase(t)? - 0.5 * self.phi0)
    }

    /// Largest |V(t)| on the pulse interval (infinite for delta pulses).
    pub fn peak_amplitude(&self) -> f64 {
        match &self.kind {
            ShapeKind::Delta => f64::INFINITY,
            ShapeKind::Gaussian { .. } => self.waveform_unchecked(0.5 * self.tau_p).abs(),
            ShapeKind::Fourier { .. } => {
                let samples = 4096;
                (0..=samples)
                    .map(|k| {
                        self.waveform_unchecked(self.tau_p * k as f64 / samples as f64)
                            .abs()
                    })
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Largest |V(t) − V(τ_p − t)| over a uniform sample of the interval.
    pub fn symmetry_deviation(&self) -> f64 {
        if self.is_delta() {
            return 0.0;
        }
        let samples = 512;
        (0..=samples)
            .map(|k| {
                let t = self.tau_p * k as f64 / samples as f64;
                (self.waveform_unchecked(t) - self.waveform_unchecked(self.tau_p - t)).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn fourier_coeffs(&self) -> Option<&[f64]> {
        match &self.kind {
            ShapeKind::Fourier { coeffs, .. } => Some(coeffs),
            _ => None,
        }
    }
}

impl fmt::Display for PulseShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

/// Fraction of the untruncated Gaussian inside the pulse interval.
fn gaussian_mass(width: f64) -> f64 {
    erf(0.5 / (SQRT_2 * width))
}

/// A shape applied along a direction with a sign (`-1` for barred pulses).
#[derive(Debug, Clone, PartialEq)]
pub struct PulseInstance {
    pub shape: PulseShape,
    pub axis: Vec3,
    pub sign: f64,
}

impl PulseInstance {
    pub fn new(shape: PulseShape, axis: Vec3, sign: f64) -> Result<Self> {
        let norm = axis.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!(
                "pulse axis must be a unit vector (|n| = {norm})"
            )));
        }
        if sign != 1.0 && sign != -1.0 {
            return Err(Error::Invalid(format!("pulse sign must be ±1, got {sign}")));
        }
        Ok(Self { shape, axis, sign })
    }

    /// Signed rotation angle about `axis` accumulated by local time `t`.
    pub fn angle_at(&self, t: f64) -> f64 {
        self.sign * self.shape.phase_unchecked(t)
    }

    pub fn total_angle(&self) -> f64 {
        self.sign * self.shape.phi0
    }

    pub fn field(&self, t: f64) -> f64 {
        self.sign * self.shape.waveform_unchecked(t)
    }
}

pub(crate) fn format_angle(phi: f64) -> String {
    for (num, den, label) in [
        (1.0, 1.0, "pi"),
        (1.0, 2.0, "pi/2"),
        (-1.0, 1.0, "-pi"),
        (-1.0, 2.0, "-pi/2"),
    ] {
        if (phi - num * PI / den).abs() < 1e-12 {
            return label.to_string();
        }
    }
    format!("{phi}")
}

/// Parses `pi`, `pi/2`, `-pi/4`, `2pi/3` or a plain number (radians).
pub fn parse_angle(token: &str) -> Option<f64> {
    let t = token.trim().replace('π', "pi");
    if let Ok(v) = t.parse::<f64>() {
        return Some(v);
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.as_str()),
    };
    let (num, den) = match body.split_once('/') {
        Some((n, d)) => (n, d.parse::<f64>().ok()?),
        None => (body, 1.0),
    };
    let factor = match num.strip_suffix("pi") {
        Some("") => 1.0,
        Some(f) => f.trim_end_matches('*').parse::<f64>().ok()?,
        None => return None,
    };
    let v = factor * PI / den;
    Some(if neg { -v } else { v })
}

/// Canonical registry key: lowercase with punctuation dropped, so that
/// `W22_pi`, `W22(pi)` and `w22pi` resolve identically.
pub fn normalize_name(name: &str) -> String {
    name.replace('π', "pi")
        .to_lowercase()
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect()
}

// Reference Fourier rows. The pi/2 rows carry A1 with its sign restored
// (see `builtin_rows`).
const F1: [f64; 6] = [0.5, -1.419474, -2.048028, 1.549555, 1.435813, -0.017867];
const W11_PI: [f64; 8] = [
    0.5,
    -1.242022,
    -1.009075,
    0.700828,
    0.530624,
    1652161644.0,
    0.277982,
    0.241663,
];
const W12_PI: [f64; 8] = [
    0.5, -1.291342, -0.753726, 1.499438, 0.364546, 0.012680, -0.069983, -0.261614,
];
const W21_PI: [f64; 7] = [
    0.5, 3.056086, -1.295369, -1.689687, -0.062202, -0.366646, -0.142183,
];
const W22_PI: [f64; 8] = [
    0.5, 2.776007, -2.473314, -1.782314, 0.958211, -0.444991, 0.300165, 0.166236,
];
const W31_PI: [f64; 7] = [
    0.5, -1.110710, -3.692547, 1.248118, 0.990698, 1.394824, 0.669618,
];
const W32_PI: [f64; 7] = [
    0.5, -1.686664, -2.108402, 3.362253, 1.029286, -0.260405, -0.836068,
];
const W11_PI2: [f64; 6] = [0.25, -2.011311, 0.041292, 1.381531, 0.262448, 0.076040];
const W12_PI2: [f64; 7] = [
    0.25, -2.023581, 0.920572, 1.341484, -0.113434, -0.144034, -0.231008,
];
const W21_PI2: [f64; 7] = [
    0.25, -2.018463, 0.588295, 1.393403, -0.206226, 0.095943, -0.1029524,
];
const W22_PI2: [f64; 8] = [
    0.25, -2.018283, 0.608538, 1.386685, 0.088935, 0.024615, -0.134584, -0.205904,
];

/// Endpoint smoothness class of a catalogue W shape.
pub fn smoothness_class(name: &str) -> Option<u8> {
    let key = normalize_name(name);
    let digits = key.strip_prefix('w')?;
    digits.chars().nth(1)?.to_digit(10).map(|d| d as u8)
}

fn builtin_rows() -> Vec<PulseShape> {
    let mut v = vec![
        PulseShape::delta(PI).named("delta_pi"),
        PulseShape::delta(PI / 2.0).named("delta_pi2"),
    ];
    for (name, width, phi0) in [
        ("G001_pi", 0.01, PI),
        ("G010_pi", 0.10, PI),
        ("G001_pi2", 0.01, PI / 2.0),
        ("G010_pi2", 0.10, PI / 2.0),
    ] {
        v.push(PulseShape::gaussian(width, phi0).unwrap().named(name));
    }
    let rows: [(&str, &[f64]); 11] = [
        ("F1", &F1),
        ("W11_pi", &W11_PI),
        ("W12_pi", &W12_PI),
        ("W21_pi", &W21_PI),
        ("W22_pi", &W22_PI),
        ("W31_pi", &W31_PI),
        ("W32_pi", &W32_PI),
        ("W11_pi2", &W11_PI2),
        ("W12_pi2", &W12_PI2),
        ("W21_pi2", &W21_PI2),
        ("W22_pi2", &W22_PI2),
    ];
    for (name, coeffs) in rows {
        let mut shape = PulseShape::fourier(coeffs.to_vec()).unwrap().named(name);
        shape.corrupted_source = name == "W11_pi";
        v.push(shape);
    }
    v
}

/// Named shapes, seeded with the built-in catalogue and optionally extended
/// or overridden from a plain-text table.
#[derive(Debug, Clone)]
pub struct ShapeRegistry {
    entries: BTreeMap<String, PulseShape>,
}

impl Default for ShapeRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ShapeRegistry {
    pub fn builtin() -> Self {
        let mut entries = BTreeMap::new();
        for shape in builtin_rows() {
            entries.insert(normalize_name(&shape.name), shape);
        }
        Self { entries }
    }

    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, shape: PulseShape) {
        self.entries.insert(normalize_name(&shape.name), shape);
    }

    /// Resolves a name. `delta(<angle>)` builds a hard pulse of any angle.
    pub fn lookup(&self, name: &str) -> Result<PulseShape> {
        if let Some(shape) = self.entries.get(&normalize_name(name)) {
            return Ok(shape.clone());
        }
        let trimmed = name.trim();
        if let Some(arg) = trimmed
            .strip_prefix("delta(")
            .and_then(|r| r.strip_suffix(')'))
        {
            if let Some(phi0) = parse_angle(arg) {
                return Ok(PulseShape::delta(phi0));
            }
        }
        Err(Error::UnknownShape(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.values().map(|s| s.name.as_str())
    }

    pub fn shapes(&self) -> impl Iterator<Item = &PulseShape> {
        self.entries.values()
    }

    /// Parses rows of `name phi0 kind params...`; `#` starts a comment.
    ///
    /// ```text
    /// F1      pi    fourier 0.5 -1.419474 -2.048028 1.549555 1.435813 -0.017867
    /// G010_pi pi    gaussian 0.10
    /// hard    pi/2  delta
    /// ```
    pub fn load_table(&mut self, text: &str) -> Result<usize> {
        let mut count = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let shape = parse_row(line).map_err(|msg| Error::Parse { line: idx + 1, msg })?;
            self.insert(shape);
            count += 1;
        }
        Ok(count)
    }

    /// Serializes every entry in the table format accepted by
    /// [`ShapeRegistry::load_table`].
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for s in self.entries.values() {
            let phi = format_angle(s.phi0);
            match &s.kind {
                ShapeKind::Delta => out.push_str(&format!("{} {} delta\n", s.name, phi)),
                ShapeKind::Gaussian { width } => {
                    out.push_str(&format!("{} {} gaussian {}\n", s.name, phi, width))
                }
                ShapeKind::Fourier { coeffs, .. } => {
                    let cs: Vec<String> = coeffs.iter().map(|a| format!("{a}")).collect();
                    out.push_str(&format!("{} {} fourier {}\n", s.name, phi, cs.join(" ")));
                }
            }
        }
        out
    }
}

fn parse_row(line: &str) -> std::result::Result<PulseShape, String> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() < 3 {
        return Err("expected `name phi0 kind params...`".into());
    }
    let name = tokens[0];
    let phi0 = parse_angle(tokens[1]).ok_or_else(|| format!("bad angle `{}`", tokens[1]))?;
    let params: Vec<f64> = tokens[3..]
        .iter()
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad number `{t}`")))
        .collect::<std::result::Result<_, _>>()?;
    let shape = match tokens[2].to_lowercase().as_str() {
        "delta" => {
            if !params.is_empty() {
                return Err("delta rows take no parameters".into());
            }
            PulseShape::delta(phi0)
        }
        "gaussian" => {
            let [width] = params[..] else {
                return Err("gaussian rows take exactly one width".into());
            };
            PulseShape::gaussian(width, phi0).map_err(|e| e.to_string())?
        }
        "fourier" => {
            let shape = PulseShape::fourier(params).map_err(|e| e.to_string())?;
            if (shape.phi0 - phi0).abs() > 1e-6 {
                return Err(format!(
                    "A0 gives angle {:.6} but row declares {:.6}",
                    shape.phi0, phi0
                ));
            }
            shape
        }
        other => return Err(format!("unknown kind `{other}`")),
    };
    Ok(shape.named(name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn reg() -> ShapeRegistry {
        ShapeRegistry::builtin()
    }

    #[test]
    fn w22_endpoint_value_vanishes() {
        let w = reg().lookup("W22_pi").unwrap();
        assert!(w.evaluate_waveform(0.0).unwrap().abs() < TAU * 1e-5);
        assert_eq!(w.fourier_coeffs().unwrap()[1], 2.776007);
    }

    #[test]
    fn constant_fourier_pulse() {
        let s = PulseShape::fourier(vec![0.5]).unwrap();
        for t in [0.0, 0.3, 1.0] {
            assert_abs_diff_eq!(s.evaluate_waveform(t).unwrap(), PI, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(s.phase(1.0).unwrap(), PI, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_peak() {
        let g = reg().lookup("G010_pi").unwrap();
        let peak = g.evaluate_waveform(0.5).unwrap();
        // truncation at ±5 widths changes the mass by < 1e-6
        assert_abs_diff_eq!(peak, PI * 3.989_422_804_014_327, epsilon = 1e-5 * peak);
        assert_abs_diff_eq!(g.phase(1.0).unwrap(), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(g.phase(0.0).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn delta_phase_and_errors() {
        let d = reg().lookup("delta_pi").unwrap();
        assert_eq!(d.phase(0.25).unwrap(), 0.0);
        assert_eq!(d.phase(0.75).unwrap(), PI);
        assert_eq!(d.evaluate_waveform(0.5), Err(Error::DeltaNotPointwise));
        assert!(matches!(d.phase(1.5), Err(Error::OutOfRange { .. })));
        let f = reg().lookup("F1").unwrap();
        assert!(matches!(
            f.evaluate_waveform(-0.1),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn catalogue_rows() {
        let r = reg();
        assert_eq!(
            r.lookup("F1").unwrap().fourier_coeffs().unwrap(),
            &[0.5, -1.419474, -2.048028, 1.549555, 1.435813, -0.017867]
        );
        assert_eq!(
            r.lookup("W12_pi").unwrap().fourier_coeffs().unwrap().len(),
            8
        );
        assert_eq!(
            r.lookup("W11_pi2").unwrap().fourier_coeffs().unwrap().len(),
            6
        );
        assert!(r.lookup("W11(π)").unwrap().corrupted_source);
        assert!(!r.lookup("W21_pi").unwrap().corrupted_source);
        let d = r.lookup("delta(pi/2)").unwrap();
        assert!(d.is_delta());
        assert_abs_diff_eq!(d.phi0, PI / 2.0);
        assert_eq!(r.lookup("S1"), Err(Error::UnknownShape("S1".into())));
    }

    #[test]
    fn fourier_total_angle_matches_quadrature() {
        use crate::quadrature::{pulse_average, QuadOptions};
        for s in reg()
            .shapes()
            .filter(|s| s.fourier_coeffs().is_some() && !s.corrupted_source)
        {
            let total =
                pulse_average(|t| s.waveform_unchecked(t), 1.0, &QuadOptions::default()).unwrap();
            assert_abs_diff_eq!(total, s.phi0, epsilon = 1e-10);
            assert_abs_diff_eq!(s.phase(1.0).unwrap(), s.phi0, epsilon = 1e-12);
        }
    }

    #[test]
    fn smoothness_constraints_of_w_rows() {
        for s in reg()
            .shapes()
            .filter(|s| s.name.starts_with('W') && !s.corrupted_source)
        {
            let a = s.fourier_coeffs().unwrap();
            let sum: f64 = a.iter().sum();
            assert!(sum.abs() < 1e-5, "{}: Σ A = {sum}", s.name);
            if smoothness_class(&s.name) == Some(2) {
                let sum2: f64 = a.iter().enumerate().map(|(n, x)| (n * n) as f64 * x).sum();
                assert!(sum2.abs() < 5e-4, "{}: Σ n²A = {sum2}", s.name);
            }
        }
    }

    #[test]
    fn catalogue_shapes_are_symmetric() {
        for s in reg().shapes() {
            let scale = if s.is_delta() {
                1.0
            } else {
                s.peak_amplitude()
            };
            assert!(s.symmetry_deviation() < 1e-12 * scale, "{}", s.name);
        }
    }

    #[test]
    fn symmetrized_angle_is_odd() {
        for s in reg().shapes().filter(|s| !s.corrupted_source) {
            for k in 0..=20 {
                let t = k as f64 / 20.0;
                if s.is_delta() && (t - 0.5).abs() < 1e-12 {
                    continue;
                }
                let a = s.symmetrized_angle(t).unwrap();
                let b = s.symmetrized_angle(1.0 - t).unwrap();
                assert_abs_diff_eq!(a, -b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn angles_parse() {
        assert_abs_diff_eq!(parse_angle("pi").unwrap(), PI);
        assert_abs_diff_eq!(parse_angle("pi/2").unwrap(), PI / 2.0);
        assert_abs_diff_eq!(parse_angle("-pi/4").unwrap(), -PI / 4.0);
        assert_abs_diff_eq!(parse_angle("2pi/3").unwrap(), 2.0 * PI / 3.0);
        assert_abs_diff_eq!(parse_angle("1.5").unwrap(), 1.5);
        assert!(parse_angle("x").is_none());
    }

    #[test]
    fn table_round_trip_and_override() {
        let text = reg().to_table();
        let mut fresh = ShapeRegistry::empty();
        let n = fresh.load_table(&text).unwrap();
        assert_eq!(n, reg().shapes().count());
        for s in reg().shapes() {
            assert_eq!(&fresh.lookup(&s.name).unwrap().kind, &s.kind);
        }
        let mut r = reg();
        r.load_table("F1 pi fourier 0.5 -1.0 1.0   # tampered\nS1 pi gaussian 0.2")
            .unwrap();
        assert_eq!(
            r.lookup("F1").unwrap().fourier_coeffs().unwrap(),
            &[0.5, -1.0, 1.0]
        );
        assert!(r.lookup("S1").is_ok());
    }

    #[test]
    fn table_errors_name_the_line() {
        let mut r = ShapeRegistry::empty();
        let err = r
            .load_table("ok pi delta\nbad pi/2 fourier 0.5 1.0\n")
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
        let err = r.load_table("x pi wavelet 1").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
