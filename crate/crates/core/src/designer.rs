//! Fourier pulse shapes with prescribed coefficients.
//!
//! A shape `V(t) = (2π/τ_p) Σ_{n=0}^N A_n cos(2πnt/τ_p)` has its angle fixed
//! by `A_0 = φ₀/2π`. End-point smoothness imposes linear constraints on
//! `A_1..A_N`: `V(0) = 0` for `s ≥ 1` and additionally `V''(0) = 0` for
//! `s = 2`. Those are eliminated exactly by writing `A = a_p + Z y` with `Z`
//! an orthonormal null-space basis; the remaining coordinates `y` are found
//! by Nelder–Mead on the squared target residual followed by a damped
//! Gauss–Newton polish, from several seeded starting points.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::coeffs::{coefficients_on_grid, compute_coefficients, ShapeCoefficients};
use crate::ensemble::{derive_seed, map_indexed, Execution};
use crate::error::{Error, Result};
use crate::shapes::{parse_angle, PulseShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coefficient {
    Upsilon,
    Upsilon2,
    Alpha,
    Alpha2,
    Zeta,
    Zeta2,
    Mu,
}

impl Coefficient {
    pub fn of(self, c: &ShapeCoefficients) -> f64 {
        match self {
            Self::Upsilon => c.upsilon,
            Self::Upsilon2 => c.upsilon2,
            Self::Alpha => c.alpha,
            Self::Alpha2 => c.alpha2,
            Self::Zeta => c.zeta,
            Self::Zeta2 => c.zeta2,
            Self::Mu => c.mu,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Self::Upsilon => "u",
            Self::Upsilon2 => "u2",
            Self::Alpha => "a",
            Self::Alpha2 => "a2",
            Self::Zeta => "z",
            Self::Zeta2 => "z2",
            Self::Mu => "mu",
        }
    }
}

impl FromStr for Coefficient {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "u" | "upsilon" => Self::Upsilon,
            "u2" | "upsilon2" => Self::Upsilon2,
            "a" | "alpha" => Self::Alpha,
            "a2" | "alpha2" => Self::Alpha2,
            "z" | "zeta" => Self::Zeta,
            "z2" | "zeta2" => Self::Zeta2,
            "mu" => Self::Mu,
            other => return Err(Error::Invalid(format!("unknown coefficient '{other}'"))),
        })
    }
}

/// `coefficient = value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub coefficient: Coefficient,
    pub value: f64,
}

impl Target {
    pub fn zero(coefficient: Coefficient) -> Self {
        Self {
            coefficient,
            value: 0.0,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.coefficient.short(), self.value)
    }
}

/// `u2` (target 0), `u2=1/3`, `a=-0.01`.
impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, value) = match s.split_once('=') {
            Some((n, v)) => (n, parse_number(v)?),
            None => (s, 0.0),
        };
        Ok(Self {
            coefficient: name.parse()?,
            value,
        })
    }
}

fn parse_number(text: &str) -> Result<f64> {
    let t = text.trim();
    if let Some((a, b)) = t.split_once('/') {
        let (a, b): (f64, f64) = (
            a.trim().parse().map_err(bad_num(t))?,
            b.trim().parse().map_err(bad_num(t))?,
        );
        return Ok(a / b);
    }
    t.parse().map_err(bad_num(t))
}

fn bad_num(t: &str) -> impl Fn(std::num::ParseFloatError) -> Error + '_ {
    move |_| Error::Invalid(format!("cannot parse number '{t}'"))
}

/// Comma-separated target list.
pub fn parse_targets(text: &str) -> Result<Vec<Target>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub phi0: f64,
    /// Highest harmonic `N`; the free amplitudes are `A_1..A_N`.
    pub n_harmonics: usize,
    pub smoothness: u8,
    pub targets: Vec<Target>,
    /// Soft bound on `max |V|` in units of `1/τ_p`.
    #[serde(default)]
    pub amplitude_bound: Option<f64>,
}

impl DesignSpec {
    pub fn new(phi0: f64, n_harmonics: usize, smoothness: u8, targets: Vec<Target>) -> Self {
        Self {
            phi0,
            n_harmonics,
            smoothness,
            targets,
            amplitude_bound: None,
        }
    }

    pub fn with_amplitude_bound(mut self, bound: f64) -> Self {
        self.amplitude_bound = Some(bound);
        self
    }

    /// `υ = υ₂ = 0`: first-order self-refocusing, W₁-class.
    pub fn first_order(phi0: f64) -> Self {
        use Coefficient::*;
        Self::new(
            phi0,
            7,
            1,
            vec![Target::zero(Upsilon), Target::zero(Upsilon2)],
        )
    }

    /// `υ = υ₂ = α = 0`: W₂-class.
    pub fn second_order(phi0: f64) -> Self {
        use Coefficient::*;
        Self::new(
            phi0,
            7,
            1,
            vec![
                Target::zero(Upsilon),
                Target::zero(Upsilon2),
                Target::zero(Alpha),
            ],
        )
    }

    /// `υ = υ₂ = α = ζ₂ = 0`: W₃-class.
    pub fn third_order(phi0: f64) -> Self {
        use Coefficient::*;
        Self::new(
            phi0,
            7,
            1,
            vec![
                Target::zero(Upsilon),
                Target::zero(Upsilon2),
                Target::zero(Alpha),
                Target::zero(Zeta2),
            ],
        )
    }

    /// `υ₂ = 1/3`: symmetrizing F-class.
    pub fn symmetrizing(phi0: f64) -> Self {
        Self::new(
            phi0,
            5,
            0,
            vec![Target {
                coefficient: Coefficient::Upsilon2,
                value: 1.0 / 3.0,
            }],
        )
    }

    /// `υ = 0` alone, an S-class surrogate.
    pub fn self_refocusing(phi0: f64) -> Self {
        Self::new(phi0, 5, 1, vec![Target::zero(Coefficient::Upsilon)])
    }

    pub fn n_free(&self) -> usize {
        self.n_harmonics.saturating_sub(self.smoothness as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |field: &str, msg: String| Error::Config {
            field: field.into(),
            msg,
        };
        if !(self.phi0.is_finite() && self.phi0 != 0.0) {
            return Err(cfg(
                "phi0",
                format!("{} must be finite and nonzero", self.phi0),
            ));
        }
        if self.smoothness > 2 {
            return Err(cfg(
                "smoothness",
                format!("{} not in {{0, 1, 2}}", self.smoothness),
            ));
        }
        if self.n_harmonics < self.smoothness as usize || self.n_harmonics > 32 {
            return Err(cfg(
                "n_harmonics",
                format!(
                    "{} harmonics cannot carry smoothness {}",
                    self.n_harmonics, self.smoothness
                ),
            ));
        }
        if self.targets.len() > self.n_free() {
            return Err(cfg(
                "targets",
                format!(
                    "{} targets exceed the {} free amplitudes",
                    self.targets.len(),
                    self.n_free()
                ),
            ));
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !t.value.is_finite() {
                return Err(cfg("targets", format!("target {t} is not finite")));
            }
            if self.targets[..i]
                .iter()
                .any(|o| o.coefficient == t.coefficient)
            {
                return Err(cfg(
                    "targets",
                    format!("coefficient {} targeted twice", t.coefficient.short()),
                ));
            }
        }
        if let Some(b) = self.amplitude_bound {
            if !(b > 0.0) {
                return Err(cfg("amplitude_bound", format!("{b} must be positive")));
            }
        }
        Ok(())
    }
}

impl FromStr for DesignSpec {
    type Err = Error;

    /// Compact form `phi0;harmonics;smoothness;targets`, e.g. `pi;7;1;u,u2,a`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(';').collect();
        if parts.len() != 4 {
            return Err(Error::Invalid(format!(
                "design spec '{s}' needs phi0;harmonics;smoothness;targets"
            )));
        }
        let phi0 = parse_angle(parts[0].trim())
            .ok_or_else(|| Error::Invalid(format!("bad angle '{}'", parts[0])))?;
        let n = parts[1]
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("bad harmonic count '{}'", parts[1])))?;
        let sm = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("bad smoothness '{}'", parts[2])))?;
        Ok(Self::new(phi0, n, sm, parse_targets(parts[3])?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignOptions {
    pub restarts: usize,
    /// Required accuracy of every targeted coefficient.
    pub tolerance: f64,
    /// Quadrature panels used inside the optimizer.
    pub panels: usize,
    pub max_evaluations: usize,
    pub execution: Execution,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            restarts: 16,
            tolerance: 1e-6,
            panels: 48,
            max_evaluations: 1500,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Design {
    pub shape: PulseShape,
    pub coefficients: ShapeCoefficients,
    /// Largest `|achieved − target|` from adaptive quadrature.
    pub residual: f64,
    pub restart: usize,
    pub restarts: usize,
    pub peak_amplitude: f64,
}

/// Affine parametrization `A_{1..N} = a_p + Z y` of the smoothness subspace.
struct Subspace {
    particular: DVector<f64>,
    basis: DMatrix<f64>,
}

impl Subspace {
    fn new(spec: &DesignSpec) -> Self {
        let n = spec.n_harmonics;
        let a0 = spec.phi0 / TAU;
        let s = spec.smoothness as usize;
        if s == 0 {
            return Self {
                particular: DVector::zeros(n),
                basis: DMatrix::identity(n, n),
            };
        }
        let mut c = DMatrix::zeros(s, n);
        let mut rhs = DVector::zeros(s);
        for j in 0..n {
            c[(0, j)] = 1.0;
            if s == 2 {
                c[(1, j)] = ((j + 1) * (j + 1)) as f64;
            }
        }
        rhs[0] = -a0;
        let cct = &c * c.transpose();
        let particular = c.transpose()
            * cct
                .lu()
                .solve(&rhs)
                .expect("smoothness rows are independent");
        let eig = (c.transpose() * &c).symmetric_eigen();
        let scale = eig.eigenvalues.amax().max(1.0);
        let cols: Vec<DVector<f64>> = (0..n)
            .filter(|&k| eig.eigenvalues[k].abs() < 1e-10 * scale)
            .map(|k| eig.eigenvectors.column(k).into_owned())
            .collect();
        Self {
            particular,
            basis: DMatrix::from_columns(&cols),
        }
    }

    fn dim(&self) -> usize {
        self.basis.ncols()
    }

    fn amplitudes(&self, y: &DVector<f64>) -> Vec<f64> {
        (&self.particular + &self.basis * y)
            .iter()
            .copied()
            .collect()
    }
}

struct Problem<'a> {
    spec: &'a DesignSpec,
    sub: Subspace,
    panels: usize,
}

impl Problem<'_> {
    fn shape(&self, y: &DVector<f64>) -> PulseShape {
        let mut coeffs = vec![self.spec.phi0 / TAU];
        coeffs.extend(self.sub.amplitudes(y));
        PulseShape::fourier(coeffs)
            .expect("finite amplitudes")
            .named("designed")
    }

    /// Target mismatches followed by the amplitude penalty (if any).
    fn residual(&self, y: &DVector<f64>) -> DVector<f64> {
        if y.iter().any(|v| !v.is_finite()) {
            return DVector::from_element(self.spec.targets.len() + 1, 1e6);
        }
        let shape = self.shape(y);
        let c = coefficients_on_grid(&shape, self.panels);
        let mut r: Vec<f64> = self
            .spec
            .targets
            .iter()
            .map(|t| t.coefficient.of(&c) - t.value)
            .collect();
        if let Some(bound) = self.spec.amplitude_bound {
            let peak = (0..=128)
                .map(|k| shape.waveform_unchecked(k as f64 / 128.0).abs())
                .fold(0.0, f64::max);
            r.push(0.1 * (peak - bound).max(0.0));
        }
        DVector::from_vec(r)
    }

    fn cost(&self, y: &DVector<f64>) -> f64 {
        self.residual(y).norm_squared()
    }
}

/// Adaptive Nelder–Mead (dimension-dependent coefficients).
fn nelder_mead(
    f: impl Fn(&DVector<f64>) -> f64,
    start: DVector<f64>,
    step: f64,
    max_evals: usize,
) -> DVector<f64> {
    let n = start.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut pts: Vec<(f64, DVector<f64>)> = Vec::with_capacity(n + 1);
    pts.push((f(&start), start.clone()));
    for i in 0..n {
        let mut p = start.clone();
        p[i] += step;
        pts.push((f(&p), p));
    }
    let mut evals = n + 1;
    while evals < max_evals {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts[n].0 - pts[0].0 <= 1e-24 + 1e-14 * pts[0].0 {
            break;
        }
        let centroid = pts[..n].iter().fold(DVector::zeros(n), |acc, p| acc + &p.1) / nf;
        let worst = pts[n].1.clone();
        let xr = &centroid + (&centroid - &worst) * alpha;
        let fr = f(&xr);
        evals += 1;
        if fr < pts[0].0 {
            let xe = &centroid + (&xr - &centroid) * beta;
            let fe = f(&xe);
            evals += 1;
            pts[n] = if fe < fr { (fe, xe) } else { (fr, xr) };
        } else if fr < pts[n - 1].0 {
            pts[n] = (fr, xr);
        } else {
            let (xc, fc) = if fr < pts[n].0 {
                let xc = &centroid + (&xr - &centroid) * gamma;
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = &centroid - (&centroid - &worst) * gamma;
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < pts[n].0.min(fr) {
                pts[n] = (fc, xc);
            } else {
                let best = pts[0].1.clone();
                for p in pts.iter_mut().skip(1) {
                    p.1 = &best + (&p.1 - &best) * delta;
                    p.0 = f(&p.1);
                }
                evals += n;
            }
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.swap_remove(0).1
}

/// Levenberg–Marquardt with central-difference Jacobian.
fn polish(problem: &Problem<'_>, mut y: DVector<f64>) -> DVector<f64> {
    let n = y.len();
    let mut r = problem.residual(&y);
    let mut lambda = 1e-6;
    for _ in 0..60 {
        if r.amax() < 1e-12 {
            break;
        }
        let h = 1e-6;
        let mut jac = DMatrix::zeros(r.len(), n);
        for k in 0..n {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[k] += h;
            ym[k] -= h;
            jac.set_column(
                k,
                &((problem.residual(&yp) - problem.residual(&ym)) / (2.0 * h)),
            );
        }
        let jt = jac.transpose();
        let g = &jt * &r;
        let jtj = &jt * &jac;
        let mut improved = false;
        for _ in 0..12 {
            let a = &jtj + DMatrix::identity(n, n) * lambda;
            let Some(step) = a.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let y_new = &y - step;
            let r_new = problem.residual(&y_new);
            if r_new.norm_squared() < r.norm_squared() {
                y = y_new;
                r = r_new;
                lambda = (lambda / 4.0).max(1e-15);
                improved = true;
                break;
            }
            lambda *= 8.0;
        }
        if !improved {
            break;
        }
    }
    y
}

/// Designs a shape with the default options.
pub fn design(spec: &DesignSpec, seed: u64) -> Result<Design> {
    design_with(spec, seed, &DesignOptions::default())
}

pub fn design_with(spec: &DesignSpec, seed: u64, opts: &DesignOptions) -> Result<Design> {
    spec.validate()?;
    let problem = Problem {
        spec,
        sub: Subspace::new(spec),
        panels: opts.panels,
    };
    let dim = problem.sub.dim();
    let finish = |y: &DVector<f64>, restart: usize| -> Result<Design> {
        let shape = problem.shape(y);
        let coefficients = compute_coefficients(&shape)?;
        let residual = spec
            .targets
            .iter()
            .map(|t| (t.coefficient.of(&coefficients) - t.value).abs())
            .fold(0.0, f64::max);
        Ok(Design {
            peak_amplitude: shape.peak_amplitude(),
            shape,
            coefficients,
            residual,
            restart,
            restarts: opts.restarts,
        })
    };
    if spec.targets.is_empty() {
        return finish(&DVector::zeros(dim), 0);
    }
    let restarts = opts.restarts.max(1);
    let candidates: Vec<Result<Design>> = map_indexed(restarts, opts.execution, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i));
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let start = DVector::from_fn(dim, |_, _| normal.sample(&mut rng));
        let y = nelder_mead(|y| problem.cost(y), start, 0.5, opts.max_evaluations);
        finish(&polish(&problem, y), i)
    });
    let mut best: Option<Design> = None;
    for cand in candidates {
        let cand = cand?;
        if best.as_ref().is_none_or(|b| cand.residual < b.residual) {
            best = Some(cand);
        }
    }
    let best = best.expect("at least one restart");
    if best.residual < opts.tolerance
        && spec
            .amplitude_bound
            .is_none_or(|b| best.peak_amplitude <= b * 1.01)
    {
        Ok(best)
    } else {
        Err(Error::NotConverged {
            residual: best.residual,
            restarts,
        })
    }
}

/// Coefficient row `A_0 … A_N` in the style of the reference table.
pub fn table_row(design: &Design) -> String {
    let coeffs = design.shape.fourier_coeffs().unwrap_or(&[]);
    let mut out = design.shape.name.clone();
    for a in coeffs {
        out.push_str(&format!(" {a:.6}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn target_parsing() {
        let t = parse_targets("u, u2=1/3,a=-0.5").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[1].coefficient, Coefficient::Upsilon2);
        assert!((t[1].value - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(t[2].value, -0.5);
        assert!(parse_targets("q").is_err());
        let s: DesignSpec = "pi;7;1;u,u2,a".parse().unwrap();
        assert_eq!(s, DesignSpec::second_order(PI));
    }

    #[test]
    fn spec_validation() {
        let too_many = DesignSpec::new(PI, 2, 1, parse_targets("u,u2").unwrap());
        assert!(matches!(too_many.validate(), Err(Error::Config { .. })));
        let twice = DesignSpec::new(PI, 5, 0, parse_targets("u,u").unwrap());
        assert!(twice.validate().is_err());
        assert!(DesignSpec::new(PI, 5, 3, vec![]).validate().is_err());
        assert!(DesignSpec::third_order(PI).validate().is_ok());
    }

    #[test]
    fn subspace_satisfies_smoothness() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in 0..=2u8 {
            let spec = DesignSpec::new(PI, 6, s, vec![]);
            let sub = Subspace::new(&spec);
            assert_eq!(sub.dim(), 6 - s as usize);
            let y = DVector::from_fn(sub.dim(), |_, _| {
                Normal::new(0.0, 2.0).unwrap().sample(&mut rng)
            });
            let a = sub.amplitudes(&y);
            let sum: f64 = 0.5 + a.iter().sum::<f64>();
            let sum2: f64 = a
                .iter()
                .enumerate()
                .map(|(j, v)| ((j + 1) * (j + 1)) as f64 * v)
                .sum();
            if s >= 1 {
                assert!(sum.abs() < 1e-12, "{sum}");
            }
            if s == 2 {
                assert!(sum2.abs() < 1e-11, "{sum2}");
            }
        }
    }

    #[test]
    fn no_targets_gives_constant_pulse() {
        let d = design(&DesignSpec::new(PI, 4, 0, vec![]), 1).unwrap();
        assert_eq!(
            d.shape.fourier_coeffs().unwrap(),
            &[0.5, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(d.residual, 0.0);
    }

    #[test]
    fn symmetrizing_design_hits_one_third() {
        let d = design(&DesignSpec::symmetrizing(PI), 7).unwrap();
        assert!(
            (d.coefficients.upsilon2 - 1.0 / 3.0).abs() < 1e-6,
            "{:?}",
            d.coefficients
        );
        assert!(d.shape.symmetry_deviation() < 1e-9 * d.peak_amplitude);
        assert!((d.shape.phase(1.0).unwrap() - PI).abs() < 1e-12);
    }

    #[test]
    fn second_order_design_pattern() {
        let d = design(&DesignSpec::second_order(PI), 11).unwrap();
        let c = d.coefficients;
        for v in [c.upsilon, c.upsilon2, c.alpha] {
            assert!(v.abs() < 1e-6, "{c:?}");
        }
        for v in [c.zeta, c.zeta2, c.mu] {
            assert!(v.abs() > 1e-6 && v.abs() < 0.5, "{c:?}");
        }
        assert!(d.shape.waveform_unchecked(0.0).abs() < 1e-9);
    }

    #[test]
    fn designs_are_reproducible() {
        let spec = DesignSpec::first_order(PI);
        let opts = DesignOptions {
            restarts: 4,
            ..DesignOptions::default()
        };
        let a = design_with(&spec, 5, &opts).unwrap();
        let b = design_with(
            &spec,
            5,
            &DesignOptions {
                execution: Execution::Sequential,
                ..opts
            },
        )
        .unwrap();
        assert_eq!(a.shape, b.shape);
    }
}
