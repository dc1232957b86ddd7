//! Decoupling sequences as ordered slots of length `τ_p`, and the control
//! rotation `Q₀(t)` over one period.
//!
//! Sequences are written in a small DSL: whitespace-separated tokens `X`,
//! `Y`, `-X`, `-Y` (barred pulses) and `0` (free slot), each optionally
//! followed by `^{angle}` to override the shape's nominal angle, e.g.
//! `X Y^{pi/2} 0 -Y -X`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{rotation, Mat3, Vec3};
use crate::shapes::{format_angle, normalize_name, parse_angle, PulseInstance, PulseShape};

#[derive(Debug, Clone, PartialEq)]
pub enum Slot {
    Pulse(PulseInstance),
    /// Free evolution for one pulse duration.
    Free,
}

impl Slot {
    /// Rotation accumulated by local time `t` within the slot.
    pub fn rotation_at(&self, t: f64) -> Mat3 {
        match self {
            Slot::Pulse(p) => rotation(&p.axis, p.angle_at(t)),
            Slot::Free => Mat3::identity(),
        }
    }

    pub fn pulse(&self) -> Option<&PulseInstance> {
        match self {
            Slot::Pulse(p) => Some(p),
            Slot::Free => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    slots: Vec<Slot>,
    tau_p: f64,
    /// `prefix[k]` is the net rotation after the first `k` slots.
    prefix: Vec<Mat3>,
}

impl Sequence {
    pub fn new(name: impl Into<String>, slots: Vec<Slot>, tau_p: f64) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::Invalid("a sequence needs at least one slot".into()));
        }
        if !(tau_p > 0.0 && tau_p.is_finite()) {
            return Err(Error::Invalid(format!(
                "pulse duration {tau_p} must be positive"
            )));
        }
        for s in &slots {
            if let Slot::Pulse(p) = s {
                if (p.shape.tau_p - tau_p).abs() > 1e-12 * tau_p {
                    return Err(Error::Invalid(format!(
                        "pulse `{}` lasts {} but slots last {tau_p}",
                        p.shape.name, p.shape.tau_p
                    )));
                }
            }
        }
        let mut prefix = Vec::with_capacity(slots.len() + 1);
        let mut acc = Mat3::identity();
        prefix.push(acc);
        for s in &slots {
            acc = s.rotation_at(tau_p) * acc;
            prefix.push(acc);
        }
        Ok(Self {
            name: name.into(),
            slots,
            tau_p,
            prefix,
        })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn tau_p(&self) -> f64 {
        self.tau_p
    }

    /// `τ = n τ_p`.
    pub fn period(&self) -> f64 {
        self.tau_p * self.slots.len() as f64
    }

    /// Net rotation `Q₀(τ)` after one period.
    pub fn net_rotation(&self) -> Mat3 {
        self.prefix[self.slots.len()]
    }

    /// Rotation before slot `k` starts.
    pub fn rotation_before(&self, k: usize) -> Mat3 {
        self.prefix[k]
    }

    /// `Q₀(t)` for `t` in `[0, τ]`, composed by left multiplication with
    /// newer rotations. Delta pulses switch on at the slot midpoint.
    pub fn control_rotation(&self, t: f64) -> Mat3 {
        let n = self.slots.len();
        let t = t.clamp(0.0, self.period());
        let k = ((t / self.tau_p).floor() as usize).min(n - 1);
        let local = (t - k as f64 * self.tau_p).clamp(0.0, self.tau_p);
        self.slots[k].rotation_at(local) * self.prefix[k]
    }

    /// Largest control amplitude over the period (infinite with delta pulses).
    pub fn peak_amplitude(&self) -> f64 {
        self.slots
            .iter()
            .filter_map(Slot::pulse)
            .map(|p| p.shape.peak_amplitude())
            .fold(0.0, f64::max)
    }

    pub fn has_delta_pulses(&self) -> bool {
        self.slots
            .iter()
            .filter_map(Slot::pulse)
            .any(|p| p.shape.is_delta())
    }

    /// The same sequence with every pulse rescaled to duration `tau_p`.
    pub fn with_tau_p(&self, tau_p: f64) -> Result<Self> {
        let slots = self
            .slots
            .iter()
            .map(|s| match s {
                Slot::Pulse(p) => Slot::Pulse(PulseInstance {
                    shape: p.shape.clone().with_tau_p(tau_p),
                    axis: p.axis,
                    sign: p.sign,
                }),
                Slot::Free => Slot::Free,
            })
            .collect();
        Self::new(self.name.clone(), slots, tau_p)
    }

    /// Canonical DSL text of the slot list.
    pub fn dsl(&self) -> String {
        let tokens: Vec<String> = self
            .slots
            .iter()
            .map(|s| match s {
                Slot::Free => "0".to_string(),
                Slot::Pulse(p) => {
                    let axis = if p.axis.x.abs() > 0.5 { "X" } else { "Y" };
                    let neg = (p.sign < 0.0) != (p.axis.x + p.axis.y < 0.0);
                    format!("{}{axis}", if neg { "-" } else { "" })
                }
            })
            .collect();
        tokens.join(" ")
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]", self.name, self.dsl())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Axis {
    X,
    Y,
}

/// One parsed DSL token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Token {
    Pulse {
        axis: Axis,
        sign: f64,
        angle: Option<f64>,
    },
    Free,
}

pub fn parse_dsl(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    for (i, raw) in text.split_whitespace().enumerate() {
        let bad = |msg: &str| Error::Parse {
            line: 1,
            msg: format!("token {} `{raw}`: {msg}", i + 1),
        };
        if raw == "0" {
            out.push(Token::Free);
            continue;
        }
        let (head, angle) = match raw.split_once('^') {
            Some((h, a)) => {
                let inner = a
                    .strip_prefix('{')
                    .and_then(|r| r.strip_suffix('}'))
                    .unwrap_or(a);
                let v = parse_angle(inner).ok_or_else(|| bad("unreadable angle"))?;
                (h, Some(v))
            }
            None => (raw, None),
        };
        let (sign, letter) = match head.strip_prefix('-') {
            Some(rest) => (-1.0, rest),
            None => (1.0, head),
        };
        let axis = match letter {
            "X" | "x" => Axis::X,
            "Y" | "y" => Axis::Y,
            _ => return Err(bad("expected X, Y, -X, -Y or 0")),
        };
        out.push(Token::Pulse { axis, sign, angle });
    }
    if out.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "empty sequence".into(),
        });
    }
    Ok(out)
}

fn shape_with_angle(shape: &PulseShape, angle: f64) -> Result<PulseShape> {
    if (angle - shape.phi0).abs() < 1e-15 {
        return Ok(shape.clone());
    }
    if shape.is_delta() {
        return Ok(PulseShape::delta(angle).with_tau_p(shape.tau_p));
    }
    if shape.phi0 == 0.0 {
        return Err(Error::Invalid("cannot rescale a zero-angle shape".into()));
    }
    let mut s = shape.scaled(angle / shape.phi0);
    s.name = format!("{}^{}", shape.name, format_angle(angle));
    Ok(s)
}

/// Builds a sequence from DSL text with every pulse using `shape`.
pub fn from_dsl(name: &str, text: &str, shape: &PulseShape) -> Result<Sequence> {
    let mut slots = Vec::new();
    for tok in parse_dsl(text)? {
        match tok {
            Token::Free => slots.push(Slot::Free),
            Token::Pulse { axis, sign, angle } => {
                let s = match angle {
                    Some(a) => shape_with_angle(shape, a)?,
                    None => shape.clone(),
                };
                let n = match axis {
                    Axis::X => Vec3::x(),
                    Axis::Y => Vec3::y(),
                };
                slots.push(Slot::Pulse(PulseInstance::new(s, n, sign)?));
            }
        }
    }
    Sequence::new(name, slots, shape.tau_p)
}

fn negate(dsl: &str) -> String {
    dsl.split_whitespace()
        .map(|t| match t.strip_prefix('-') {
            Some(rest) => rest.to_string(),
            None if t == "0" => t.to_string(),
            None => format!("-{t}"),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

const R_ALPHA: &str = "X -Y X";
const R_BETA: &str = "X Y X";
const R_ALPHA_BAR: &str = "-X Y -X";
const R_BETA_BAR: &str = "-X -Y -X";

/// Which nominal angle a catalogue sequence is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseKind {
    Pi,
    HalfPi,
    Any,
}

impl PulseKind {
    fn angle(self) -> Option<f64> {
        match self {
            PulseKind::Pi => Some(PI),
            PulseKind::HalfPi => Some(FRAC_PI_2),
            PulseKind::Any => None,
        }
    }

    fn label(self) -> &'static str {
        match self {
            PulseKind::Pi => "pi",
            PulseKind::HalfPi => "pi/2",
            PulseKind::Any => "any",
        }
    }
}

/// Catalogue names in display order.
pub const CATALOGUE: [&str; 13] = [
    "free", "X", "2s", "2a", "4a", "4p", "8s", "8a", "16a", "5", "12", "24", "48",
];

/// Canonical DSL and pulse kind of a catalogue sequence.
pub fn catalogue_dsl(name: &str) -> Result<(String, PulseKind)> {
    let s8 = "X Y -X Y Y -X Y X";
    let key = normalize_name(name);
    let out = match key.as_str() {
        "free" | "none" | "nocontrol" => ("0".to_string(), PulseKind::Any),
        "x" => ("X".to_string(), PulseKind::Any),
        "2s" => ("X X".to_string(), PulseKind::Pi),
        "2a" => ("-X X".to_string(), PulseKind::Pi),
        "4a" => ("-X -X X X".to_string(), PulseKind::Pi),
        "4p" => ("X Y -X Y".to_string(), PulseKind::Pi),
        "8s" => (s8.to_string(), PulseKind::Pi),
        "8a" => ("X Y -X Y -Y X -Y -X".to_string(), PulseKind::Pi),
        "16a" => (format!("{s8} {}", negate(s8)), PulseKind::Pi),
        "5" | "wahuha" => ("X Y 0 -Y -X".to_string(), PulseKind::HalfPi),
        "12" => (
            [R_ALPHA, R_BETA, R_ALPHA_BAR, R_BETA].join(" "),
            PulseKind::HalfPi,
        ),
        "24" => (
            [
                R_ALPHA,
                R_BETA,
                R_ALPHA_BAR,
                R_BETA,
                R_BETA,
                R_ALPHA_BAR,
                R_BETA,
                R_ALPHA,
            ]
            .join(" "),
            PulseKind::HalfPi,
        ),
        "48" => {
            let half = [
                R_ALPHA,
                R_BETA,
                R_ALPHA_BAR,
                R_BETA,
                R_ALPHA_BAR,
                R_BETA_BAR,
                R_ALPHA,
                R_BETA_BAR,
            ]
            .join(" ");
            let reversed: Vec<&str> = half.split_whitespace().rev().collect();
            (format!("{half} {}", reversed.join(" ")), PulseKind::HalfPi)
        }
        _ => return Err(Error::UnknownSequence(name.to_string())),
    };
    Ok(out)
}

/// Expands a catalogue sequence with the given pulse shape.
pub fn catalogue_sequence(name: &str, shape: &PulseShape) -> Result<Sequence> {
    let (dsl, kind) = catalogue_dsl(name)?;
    if let Some(required) = kind.angle() {
        if (shape.phi0 - required).abs() > 1e-9 {
            return Err(Error::AngleMismatch {
                sequence: name.to_string(),
                expected: kind.label().to_string(),
                actual: shape.phi0,
            });
        }
    }
    from_dsl(name, &dsl, shape)
}

/// Resolves either a catalogue name or raw DSL text.
pub fn resolve_sequence(spec: &str, shape: &PulseShape) -> Result<Sequence> {
    match catalogue_sequence(spec, shape) {
        Err(Error::UnknownSequence(_)) => from_dsl(spec, spec, shape),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::shapes::ShapeRegistry;
    use approx::assert_abs_diff_eq;

    fn delta_pi() -> PulseShape {
        PulseShape::delta(PI)
    }

    #[test]
    fn hard_pi_rotation_steps_at_midpoint() {
        let seq = catalogue_sequence("X", &delta_pi()).unwrap();
        assert_abs_diff_eq!(seq.control_rotation(0.5 - 1e-12), Mat3::identity());
        let flipped = Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0));
        assert_abs_diff_eq!(seq.control_rotation(0.5 + 1e-12), flipped, epsilon = 1e-15);
        assert_abs_diff_eq!(seq.control_rotation(0.0), Mat3::identity());
    }

    #[test]
    fn soft_pulse_rotates_right_handed() {
        let g = ShapeRegistry::builtin().lookup("G010_pi2").unwrap();
        let seq = catalogue_sequence("X", &g).unwrap();
        // y goes to z after a positive quarter turn about x
        let y_image = seq.control_rotation(1.0) * Vec3::y();
        assert_abs_diff_eq!(y_image, Vec3::z(), epsilon = 1e-12);
    }

    #[test]
    fn catalogue_lengths() {
        let reg = ShapeRegistry::builtin();
        let pi = reg.lookup("G010_pi").unwrap();
        let half = reg.lookup("G010_pi2").unwrap();
        for (name, n) in [
            ("2s", 2),
            ("2a", 2),
            ("4a", 4),
            ("4p", 4),
            ("8s", 8),
            ("8a", 8),
            ("16a", 16),
        ] {
            let s = catalogue_sequence(name, &pi).unwrap();
            assert_eq!(s.len(), n);
            assert_abs_diff_eq!(s.period(), n as f64);
        }
        for (name, n) in [("5", 5), ("12", 12), ("24", 24), ("48", 48)] {
            assert_eq!(catalogue_sequence(name, &half).unwrap().len(), n);
        }
        let wahuha = catalogue_sequence("5", &half).unwrap();
        assert_eq!(wahuha.slots()[2], Slot::Free);
    }

    #[test]
    fn four_pulse_and_sixteen_pulse_layouts() {
        let s = catalogue_sequence("4p", &delta_pi()).unwrap();
        assert_eq!(s.dsl(), "X Y -X Y");
        let s = catalogue_sequence("16a", &delta_pi()).unwrap();
        assert_eq!(s.dsl(), "X Y -X Y Y -X Y X -X -Y X -Y -Y X -Y -X");
        let half = PulseShape::delta(FRAC_PI_2);
        let s = catalogue_sequence("12", &half).unwrap();
        assert_eq!(s.dsl(), "X -Y X X Y X -X Y -X X Y X");
        let s = catalogue_sequence("48", &half).unwrap();
        let text = s.dsl();
        let tokens: Vec<&str> = text.split(' ').collect();
        let first: Vec<&str> = tokens[..24].to_vec();
        let mut second: Vec<&str> = tokens[24..].to_vec();
        second.reverse();
        assert_eq!(first, second);
    }

    #[test]
    fn angle_mismatch_and_unknown_names() {
        let half = PulseShape::delta(FRAC_PI_2);
        assert!(matches!(
            catalogue_sequence("4p", &half),
            Err(Error::AngleMismatch { .. })
        ));
        assert!(matches!(
            catalogue_sequence("12", &delta_pi()),
            Err(Error::AngleMismatch { .. })
        ));
        assert!(matches!(
            catalogue_sequence("7q", &half),
            Err(Error::UnknownSequence(_))
        ));
    }

    #[test]
    fn catalogue_sequences_are_periodic() {
        let reg = ShapeRegistry::builtin();
        let pi_shapes = ["delta_pi", "G010_pi", "F1", "W21_pi"];
        for name in ["2s", "2a", "4a", "4p", "8s", "8a", "16a"] {
            for shape in pi_shapes {
                let s = catalogue_sequence(name, &reg.lookup(shape).unwrap()).unwrap();
                assert!(
                    max_abs(&(s.net_rotation() - Mat3::identity())) < 1e-8,
                    "{name} {shape}"
                );
            }
        }
        for name in ["5", "12", "24", "48"] {
            for shape in ["delta_pi2", "G010_pi2", "W22_pi2"] {
                let s = catalogue_sequence(name, &reg.lookup(shape).unwrap()).unwrap();
                assert!(
                    max_abs(&(s.net_rotation() - Mat3::identity())) < 1e-8,
                    "{name} {shape}"
                );
            }
        }
    }

    #[test]
    fn antisymmetric_pair_cancels() {
        let s = catalogue_sequence("2a", &delta_pi()).unwrap();
        assert_abs_diff_eq!(s.control_rotation(2.0), Mat3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn dsl_parsing() {
        let toks = parse_dsl("X -Y^{pi/2} 0 y").unwrap();
        assert_eq!(toks.len(), 4);
        assert_eq!(
            toks[1],
            Token::Pulse {
                axis: Axis::Y,
                sign: -1.0,
                angle: Some(FRAC_PI_2)
            }
        );
        assert_eq!(toks[2], Token::Free);
        assert!(matches!(parse_dsl("X Z"), Err(Error::Parse { .. })));
        assert!(parse_dsl("  ").is_err());

        let seq = from_dsl("custom", "X^{pi/2} X^{pi/2}", &delta_pi()).unwrap();
        let full = catalogue_sequence("X", &delta_pi()).unwrap();
        assert_abs_diff_eq!(seq.net_rotation(), full.net_rotation(), epsilon = 1e-15);
        let r = resolve_sequence("X Y -X Y", &delta_pi()).unwrap();
        assert_eq!(r.len(), 4);
    }

    #[test]
    fn rotations_stay_orthogonal() {
        let reg = ShapeRegistry::builtin();
        let s = catalogue_sequence("48", &reg.lookup("W12_pi2").unwrap()).unwrap();
        for k in 0..=480 {
            let q = s.control_rotation(k as f64 * 0.1);
            assert!(max_abs(&(q.transpose() * q - Mat3::identity())) < 1e-10);
            assert_abs_diff_eq!(q.determinant(), 1.0, epsilon = 1e-10);
        }
    }
}
