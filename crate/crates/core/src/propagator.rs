//! Fixed-step RK4 integration of the driven dissipative Bloch equation
//!
//! ```text
//! Q̇ = ([(V(t) n̂ + B(t))×] + γ̂ − 𝟙 Tr γ̂) Q,   Q(0) = 𝟙,
//! ```
//!
//! whose columns are the solutions for the three canonical initial Bloch
//! vectors.
//!
//! Two frames are available. [`Frame::Toggling`] (the default) writes
//! `Q = Q₀ S` with the exact control rotation `Q₀` and integrates
//! `Ṡ = Q₀ᵀ([B×] + γ̂ − 𝟙 Tr γ̂)Q₀ S`, so the RK4 error involves only the
//! slow field and the rates. [`Frame::Lab`] integrates the equation above
//! directly. Both apply delta pulses as exact rotations at slot midpoints.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cross_matrix, max_abs, rotation, Mat3, Vec3};
use crate::magnus::cumulants;
use crate::noise::NoiseRealization;
use crate::rates::RateModel;
use crate::sequences::{Sequence, Slot};

/// Largest control rotation allowed per step, rad.
pub const MAX_STEP_ANGLE: f64 = 0.2;

/// Minimum number of integrator steps per pulse slot.
pub const MIN_STEPS_PER_PULSE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordMeta {
    pub sequence: String,
    pub dsl: String,
    pub dt: f64,
    pub period: f64,
    pub noise_seed: Option<u64>,
    pub integrator: &'static str,
}

/// `Q(t_s)` at the commensurate times `t_s = s·τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionRecord {
    pub times: Vec<f64>,
    pub q: Vec<Mat3>,
    pub meta: RecordMeta,
}

impl EvolutionRecord {
    pub fn last(&self) -> &Mat3 {
        self.q
            .last()
            .expect("records hold at least the initial checkpoint")
    }

    /// CSV body: `t_s`, the nine entries of `Q` row by row, and its trace.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,q_xx,q_xy,q_xz,q_yx,q_yy,q_yz,q_zx,q_zy,q_zz,trace\n");
        for (t, q) in self.times.iter().zip(&self.q) {
            out.push_str(&format!("{t}"));
            for i in 0..3 {
                for j in 0..3 {
                    out.push_str(&format!(",{:.12e}", q[(i, j)]));
                }
            }
            out.push_str(&format!(",{:.12e}\n", q.trace()));
        }
        out
    }
}

/// Largest `τ_p / 2^k` step (at least [`MIN_STEPS_PER_PULSE`] per slot)
/// that keeps the control rotation per step within [`MAX_STEP_ANGLE`].
pub fn auto_dt(seq: &Sequence) -> f64 {
    let tau_p = seq.tau_p();
    let peak = if seq.has_delta_pulses() {
        seq.slots()
            .iter()
            .filter_map(Slot::pulse)
            .filter(|p| !p.shape.is_delta())
            .map(|p| p.shape.peak_amplitude())
            .fold(0.0, f64::max)
    } else {
        seq.peak_amplitude()
    };
    let mut steps = MIN_STEPS_PER_PULSE;
    while peak * tau_p / steps as f64 > MAX_STEP_ANGLE {
        steps *= 2;
    }
    tau_p / steps as f64
}

/// Integration frame, see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    #[default]
    Toggling,
    Lab,
}

/// Control data for one period on the step grid.
struct ControlTrack {
    steps_per_slot: usize,
    /// Lab frame: `V(t) n̂` at spacing `dt/2`, `2·steps + 1` samples per slot.
    field: Vec<Vec<Vec3>>,
    /// Lab frame: rotation applied on reaching step `j` of a slot.
    kicks: Vec<Option<(usize, Mat3)>>,
    /// Toggling frame: `Q₀` at the start, middle and end of every step.
    frames: Vec<[Mat3; 3]>,
    net: Mat3,
}

fn steps_per_slot(seq: &Sequence, dt: f64) -> Result<usize> {
    let tau_p = seq.tau_p();
    let ratio = tau_p / dt;
    let steps = ratio.round() as usize;
    if steps == 0 || (ratio - steps as f64).abs() > 1e-9 * ratio {
        return Err(Error::Invalid(format!(
            "dt = {dt} must divide the pulse duration {tau_p}"
        )));
    }
    if seq.has_delta_pulses() && steps % 2 == 1 {
        return Err(Error::Invalid(format!(
            "delta pulses need an even number of steps per pulse, got {steps}"
        )));
    }
    for p in seq.slots().iter().filter_map(Slot::pulse) {
        if !p.shape.is_delta() {
            let angle = p.shape.peak_amplitude() * dt;
            if angle > MAX_STEP_ANGLE {
                return Err(Error::StepTooLarge(angle));
            }
        }
    }
    Ok(steps)
}

fn build_track(seq: &Sequence, dt: f64, frame: Frame) -> Result<ControlTrack> {
    let steps = steps_per_slot(seq, dt)?;
    let mut track = ControlTrack {
        steps_per_slot: steps,
        field: Vec::new(),
        kicks: Vec::new(),
        frames: Vec::new(),
        net: seq.net_rotation(),
    };
    match frame {
        Frame::Lab => {
            for slot in seq.slots() {
                let (samples, kick) = match slot {
                    Slot::Free => (vec![Vec3::zeros(); 2 * steps + 1], None),
                    Slot::Pulse(p) if p.shape.is_delta() => (
                        vec![Vec3::zeros(); 2 * steps + 1],
                        Some((steps / 2, rotation(&p.axis, p.total_angle()))),
                    ),
                    Slot::Pulse(p) => (
                        (0..=2 * steps)
                            .map(|j| p.axis * p.field(j as f64 * dt / 2.0))
                            .collect(),
                        None,
                    ),
                };
                track.field.push(samples);
                track.kicks.push(kick);
            }
        }
        Frame::Toggling => {
            track.frames.reserve(seq.len() * steps);
            for (k, slot) in seq.slots().iter().enumerate() {
                let prior = seq.rotation_before(k);
                for j in 0..steps {
                    let at = |frac: f64| -> Mat3 {
                        match slot {
                            Slot::Free => prior,
                            // the jump sits on a step boundary, so the
                            // angle is constant across each step
                            Slot::Pulse(p) if p.shape.is_delta() => {
                                if 2 * j >= steps {
                                    rotation(&p.axis, p.total_angle()) * prior
                                } else {
                                    prior
                                }
                            }
                            Slot::Pulse(_) => slot.rotation_at((j as f64 + frac) * dt) * prior,
                        }
                    };
                    track.frames.push([at(0.0), at(0.5), at(1.0)]);
                }
            }
        }
    }
    Ok(track)
}

/// Integrates `n_periods` periods with step `dt` in the toggling frame.
pub fn propagate(
    seq: &Sequence,
    model: &RateModel,
    noise: Option<&NoiseRealization>,
    n_periods: usize,
    dt: f64,
) -> Result<EvolutionRecord> {
    propagate_in(seq, model, noise, n_periods, dt, Frame::Toggling)
}

pub fn propagate_in(
    seq: &Sequence,
    model: &RateModel,
    noise: Option<&NoiseRealization>,
    n_periods: usize,
    dt: f64,
    frame: Frame,
) -> Result<EvolutionRecord> {
    model.validate()?;
    let track = build_track(seq, dt, frame)?;
    let period = seq.period();
    if let Some(nz) = noise {
        let covered = (nz.len() - 1) as f64 * nz.dt();
        if covered + 1e-9 * period < n_periods as f64 * period {
            return Err(Error::Invalid(format!(
                "noise covers {covered} but the run lasts {}",
                n_periods as f64 * period
            )));
        }
    }
    let decay = model.gamma_hat - Mat3::identity() * model.gamma_hat.trace();
    let b_static = model.b;
    let field_at = |t: f64| match noise {
        Some(nz) => b_static + nz.value_at(t),
        None => b_static,
    };
    let steps = track.steps_per_slot;
    let half = 0.5 * dt;
    let rk4 = |q: &Mat3, a1: &Mat3, a2: &Mat3, a3: &Mat3| -> Mat3 {
        let k1 = a1 * q;
        let k2 = a2 * (q + k1 * half);
        let k3 = a2 * (q + k2 * half);
        let k4 = a3 * (q + k3 * dt);
        q + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)
    };
    let mut q = Mat3::identity();
    let mut times = vec![0.0];
    let mut record = vec![q];
    for s in 0..n_periods {
        let period_start = s as f64 * period;
        match frame {
            Frame::Lab => {
                for (k, control) in track.field.iter().enumerate() {
                    let slot_start = period_start + k as f64 * seq.tau_p();
                    let kick = track.kicks[k];
                    for j in 0..steps {
                        if let Some((at, r)) = kick {
                            if j == at {
                                q = r * q;
                            }
                        }
                        let t = slot_start + j as f64 * dt;
                        let a1 = cross_matrix(&(control[2 * j] + field_at(t))) + decay;
                        let a2 = cross_matrix(&(control[2 * j + 1] + field_at(t + half))) + decay;
                        let a3 = cross_matrix(&(control[2 * j + 2] + field_at(t + dt))) + decay;
                        q = rk4(&q, &a1, &a2, &a3);
                    }
                }
            }
            Frame::Toggling => {
                // q holds U with Q = Q₀(t_local) U inside the period
                let static_field = noise.is_none();
                let bare = cross_matrix(&b_static) + decay;
                for (i, [r1, r2, r3]) in track.frames.iter().enumerate() {
                    let t = period_start + i as f64 * dt;
                    let (m1, m2, m3) = if static_field {
                        (bare, bare, bare)
                    } else {
                        (
                            cross_matrix(&field_at(t)) + decay,
                            cross_matrix(&field_at(t + half)) + decay,
                            cross_matrix(&field_at(t + dt)) + decay,
                        )
                    };
                    let a1 = r1.transpose() * m1 * r1;
                    let a2 = r2.transpose() * m2 * r2;
                    let a3 = r3.transpose() * m3 * r3;
                    q = rk4(&q, &a1, &a2, &a3);
                }
                q = track.net * q;
            }
        }
        times.push((s + 1) as f64 * period);
        record.push(q);
    }
    Ok(EvolutionRecord {
        times,
        q: record,
        meta: RecordMeta {
            sequence: seq.name.clone(),
            dsl: seq.dsl(),
            dt,
            period,
            noise_seed: noise.map(|n| n.spec.seed),
            integrator: match frame {
                Frame::Toggling => "rk4-toggling",
                Frame::Lab => "rk4-lab",
            },
        },
    })
}

/// Product of per-slot second-order propagators
/// `Q₀ᵢ [𝟙 − τ_p Γ̄ᵢ⁽⁰⁾ − τ_p Γ̄ᵢ⁽¹⁾ + (τ_p²/2)(Γ̄ᵢ⁽⁰⁾)²]` over one period.
pub fn product_expansion(seq: &Sequence, model: &RateModel) -> Result<Mat3> {
    let tau_p = seq.tau_p();
    let mut total = Mat3::identity();
    for (k, slot) in seq.slots().iter().enumerate() {
        let single = Sequence::new(format!("{}[{k}]", seq.name), vec![slot.clone()], tau_p)?;
        let c = cumulants(&single, model)?;
        let s = Mat3::identity() - (c.gamma0 + c.gamma1) * tau_p
            + c.gamma0 * c.gamma0 * (0.5 * tau_p * tau_p);
        total = single.net_rotation() * s * total;
    }
    Ok(total)
}

/// `‖Q_product − Q(τ)‖_max` against an RK4 reference with `dt` fine enough
/// for the control (`τ_p/1024` at least).
pub fn product_expansion_check(seq: &Sequence, model: &RateModel) -> Result<f64> {
    let dt = auto_dt(seq).min(seq.tau_p() / 1024.0);
    let full = propagate(seq, model, None, 1, dt)?;
    let product = product_expansion(seq, model)?;
    Ok(max_abs(&(product - full.last())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::catalogue_sequence;
    use crate::shapes::{PulseShape, ShapeRegistry};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn free_decay_matches_closed_form() {
        let gp = 2.0 * PI * 1e-3;
        let m = RateModel::nmr(0.0, gp, Vec3::zeros()).unwrap();
        let seq = catalogue_sequence("free", &PulseShape::delta(PI)).unwrap();
        let rec = propagate(&seq, &m, None, 100, 1.0 / 32.0).unwrap();
        let e = (-gp * 100.0).exp();
        let exact = Mat3::from_diagonal(&Vec3::new(e, e, 1.0));
        assert!(max_abs(&(rec.last() - exact)) < 1e-8);
        assert_eq!(rec.times.len(), 101);
    }

    #[test]
    fn hard_pulses_flip_exactly() {
        let m = RateModel::nmr(0.0, 0.0, Vec3::zeros()).unwrap();
        let seq = catalogue_sequence("X", &PulseShape::delta(PI)).unwrap();
        let rec = propagate(&seq, &m, None, 1, 1.0 / 32.0).unwrap();
        assert_abs_diff_eq!(
            *rec.last(),
            Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0)),
            epsilon = 1e-15
        );
    }

    #[test]
    fn soft_pulse_reaches_its_rotation() {
        let m = RateModel::nmr(0.0, 0.0, Vec3::zeros()).unwrap();
        let g = ShapeRegistry::builtin().lookup("G010_pi2").unwrap();
        let seq = catalogue_sequence("X", &g).unwrap();
        let target = rotation(&Vec3::x(), PI / 2.0);
        let rec = propagate(&seq, &m, None, 1, auto_dt(&seq)).unwrap();
        assert!(max_abs(&(rec.last() - target)) < 1e-14);
        let lab = propagate_in(&seq, &m, None, 1, 1.0 / 512.0, Frame::Lab).unwrap();
        assert!(max_abs(&(lab.last() - target)) < 1e-8);
    }

    #[test]
    fn step_guard() {
        let m = RateModel::nmr(0.0, 0.01, Vec3::zeros()).unwrap();
        let g = ShapeRegistry::builtin().lookup("G010_pi").unwrap();
        let seq = catalogue_sequence("4p", &g).unwrap();
        let err = propagate(&seq, &m, None, 1, 1.0 / 32.0).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge(_)));
        assert!(auto_dt(&seq) * g.peak_amplitude() <= MAX_STEP_ANGLE);
        assert!(matches!(
            propagate(&seq, &m, None, 1, 0.3),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let m = RateModel::nmr(0.02, 0.05, Vec3::new(0.3, -0.2, 0.4)).unwrap();
        let f1 = ShapeRegistry::builtin().lookup("F1").unwrap();
        let seq = catalogue_sequence("4p", &f1).unwrap();
        for frame in [Frame::Lab, Frame::Toggling] {
            let run = |dt: f64| *propagate_in(&seq, &m, None, 1, dt, frame).unwrap().last();
            let reference = run(1.0 / 4096.0);
            let e1 = max_abs(&(run(1.0 / 256.0) - reference));
            let e2 = max_abs(&(run(1.0 / 512.0) - reference));
            let ratio = e1 / e2;
            assert!((13.0..19.0).contains(&ratio), "{frame:?}: ratio {ratio}");
        }
    }

    #[test]
    fn pure_rotation_stays_orthogonal() {
        let m = RateModel::nmr(0.0, 0.0, Vec3::new(0.05, 0.02, -0.03)).unwrap();
        let w = ShapeRegistry::builtin().lookup("W21_pi").unwrap();
        let seq = catalogue_sequence("8s", &w).unwrap();
        let rec = propagate(&seq, &m, None, 13, auto_dt(&seq)).unwrap();
        let q = rec.last();
        assert!(max_abs(&(q.transpose() * q - Mat3::identity())) < 1e-8);
    }

    #[test]
    fn frames_agree_with_decoherence_and_noise() {
        use crate::noise::{generate, NoiseSpec};
        let m = RateModel::nmr(0.01, 0.03, Vec3::new(0.02, 0.0, -0.05)).unwrap();
        let g = ShapeRegistry::builtin().lookup("G010_pi").unwrap();
        let seq = catalogue_sequence("8s", &g).unwrap();
        let noise = generate(&NoiseSpec {
            b0: 0.1,
            tau_c: 8.0,
            dt: 1.0 / 32.0,
            t_total: 32.0,
            seed: 3,
        })
        .unwrap();
        let a = propagate(&seq, &m, Some(&noise), 4, 1.0 / 64.0).unwrap();
        let b = propagate_in(&seq, &m, Some(&noise), 4, 1.0 / 1024.0, Frame::Lab).unwrap();
        for (x, y) in a.q.iter().zip(&b.q) {
            assert!(max_abs(&(x - y)) < 1e-7, "{}", max_abs(&(x - y)));
        }
    }

    #[test]
    fn product_expansion_is_exact_without_decoherence() {
        let m = RateModel::nmr(0.0, 0.0, Vec3::zeros()).unwrap();
        let seq = catalogue_sequence("8s", &PulseShape::delta(PI)).unwrap();
        assert!(product_expansion_check(&seq, &m).unwrap() < 1e-14);
    }
}
