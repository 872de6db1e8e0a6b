//! Domain box, input measure, target function, noise model and samplers.

use std::fmt;
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Normal;

use crate::error::{Error, Result};
use crate::rng::{stream_id, stream_rng, tags};

/// The box `[a, b]^d`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBox {
    pub a: f64,
    pub b: f64,
    pub d: usize,
}

impl DomainBox {
    pub fn new(a: f64, b: f64, d: usize) -> Result<Self> {
        let bx = DomainBox { a, b, d };
        bx.validate()?;
        Ok(bx)
    }

    pub fn unit(d: usize) -> Self {
        DomainBox { a: 0.0, b: 1.0, d }
    }

    /// Degenerate boxes (`b == a`) are rejected.
    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::InvalidArgument("box endpoints must be finite".into()));
        }
        if self.b <= self.a {
            return Err(Error::InvalidArgument(format!(
                "box requires b > a, got [{}, {}] (degenerate boxes are unsupported)",
                self.a, self.b
            )));
        }
        if self.d == 0 {
            return Err(Error::InvalidArgument("box dimension must be positive".into()));
        }
        Ok(())
    }

    /// `max{|a|, |b|, 1}`.
    pub fn amax(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(1.0)
    }

    pub fn volume(&self) -> f64 {
        (self.b - self.a).powi(self.d as i32)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.d && x.iter().all(|&t| t >= self.a && t <= self.b)
    }

    /// Range of `<w, x>` over the box.
    pub fn linear_range(&self, w: &[f64]) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for &wj in w {
            let (p, q) = (wj * self.a, wj * self.b);
            lo += p.min(q);
            hi += p.max(q);
        }
        (lo, hi)
    }
}

pub type DensityHandle = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Continuous density on the open box, with the envelope used for rejection sampling.
#[derive(Clone)]
pub struct DensityFn {
    pub name: String,
    pub pdf: DensityHandle,
    /// Declared total mass; informative only, integrals use quadrature.
    pub mass_hint: f64,
    /// Upper bound of the density on the box.
    pub upper_bound: f64,
}

impl fmt::Debug for DensityFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityFn")
            .field("name", &self.name)
            .field("mass_hint", &self.mass_hint)
            .field("upper_bound", &self.upper_bound)
            .finish()
    }
}

/// Finite measure on the box. Kept unnormalized.
#[derive(Debug, Clone)]
pub enum Measure {
    /// Lebesgue measure scaled to the given total mass.
    Uniform {
        mass: f64,
    },
    Density(DensityFn),
    Empirical {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
}

impl Measure {
    pub fn uniform() -> Self {
        Measure::Uniform { mass: 1.0 }
    }

    pub fn density<F>(name: &str, pdf: F, mass_hint: f64, upper_bound: f64) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Measure::Density(DensityFn {
            name: name.to_string(),
            pdf: Arc::new(pdf),
            mass_hint,
            upper_bound,
        })
    }

    pub fn empirical(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Self {
        Measure::Empirical { points, weights }
    }

    pub fn validate(&self, domain: &DomainBox) -> Result<()> {
        match self {
            Measure::Uniform { mass } => {
                if !(mass.is_finite() && *mass > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "uniform mass must be finite and positive, got {mass}"
                    )));
                }
            }
            Measure::Density(df) => {
                if !(df.upper_bound.is_finite() && df.upper_bound > 0.0) {
                    return Err(Error::InvalidArgument("density upper bound must be finite and positive".into()));
                }
                if !(df.mass_hint.is_finite() && df.mass_hint > 0.0) {
                    return Err(Error::InvalidArgument("density mass hint must be finite and positive".into()));
                }
            }
            Measure::Empirical { points, weights } => {
                if points.is_empty() || points.len() != weights.len() {
                    return Err(Error::InvalidArgument(
                        "empirical measure needs matching, non-empty points and weights".into(),
                    ));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::InvalidArgument("empirical weights must be finite and non-negative".into()));
                }
                if weights.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::InvalidArgument("empirical measure has zero mass".into()));
                }
                for p in points {
                    if p.len() != domain.d {
                        return Err(Error::dim("empirical point", domain.d, p.len()));
                    }
                    if !domain.contains(p) {
                        return Err(Error::InvalidArgument(format!("empirical point {p:?} lies outside the box")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Density value with respect to Lebesgue measure (not defined for atoms).
    pub(crate) fn density_at(&self, domain: &DomainBox, x: &[f64]) -> f64 {
        match self {
            Measure::Uniform { mass } => mass / domain.volume(),
            Measure::Density(df) => (df.pdf)(x),
            Measure::Empirical { .. } => f64::NAN,
        }
    }

    pub fn is_empirical(&self) -> bool {
        matches!(self, Measure::Empirical { .. })
    }
}

pub type TargetHandle = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Hypothesis flags checked by experiments before relying on a result.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TargetFlags {
    pub is_lipschitz: bool,
    pub is_continuous: bool,
    pub is_relu_representable: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetKind {
    /// `||x||^2`.
    Square {},
    /// `sum_j |x_j - c|`.
    AbsShift {
        c: f64,
    },
    /// `sin(pi * sum_j x_j)`.
    Sine {},
    /// Linear interpolation of `(x, y)` knots in the first coordinate, constant beyond the ends.
    PiecewiseLinear {
        knots: Vec<(f64, f64)>,
    },
    Constant {
        value: f64,
    },
    /// `offset + <coef, x>`.
    Linear {
        coef: Vec<f64>,
        offset: f64,
    },
}

#[derive(Clone)]
pub struct Target {
    pub name: String,
    kind: Option<TargetKind>,
    custom: Option<TargetHandle>,
    pub flags: TargetFlags,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Target")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("flags", &self.flags)
            .finish()
    }
}

impl Target {
    pub fn builtin(kind: TargetKind) -> Result<Self> {
        let (name, flags, breakpoints) = match &kind {
            TargetKind::Square {} => ("square", flags(true, true, false), vec![]),
            TargetKind::AbsShift { c } => ("abs_shift", flags(true, true, true), vec![*c]),
            TargetKind::Sine {} => ("sine", flags(true, true, false), vec![]),
            TargetKind::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return Err(Error::InvalidArgument("piecewise_linear needs knots".into()));
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidArgument(
                        "piecewise_linear knots must be strictly increasing in x".into(),
                    ));
                }
                let bp = knots.iter().map(|k| k.0).collect();
                ("piecewise_linear", flags(true, true, true), bp)
            }
            TargetKind::Constant { .. } => ("constant", flags(true, true, true), vec![]),
            TargetKind::Linear { .. } => ("linear", flags(true, true, true), vec![]),
        };
        Ok(Target {
            name: name.to_string(),
            kind: Some(kind),
            custom: None,
            flags,
            breakpoints,
        })
    }

    pub fn square() -> Self {
        Self::builtin(TargetKind::Square {}).unwrap()
    }

    pub fn constant(value: f64) -> Self {
        Self::builtin(TargetKind::Constant { value }).unwrap()
    }

    pub fn linear(coef: Vec<f64>, offset: f64) -> Self {
        Self::builtin(TargetKind::Linear { coef, offset }).unwrap()
    }

    /// Library-level target from a closure. `breakpoints` lists 1D points where
    /// `f` is not smooth, so 1D quadrature can split there.
    pub fn custom<F>(name: &str, f: F, flags: TargetFlags, breakpoints: Vec<f64>) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Target {
            name: name.to_string(),
            kind: None,
            custom: Some(Arc::new(f)),
            flags,
            breakpoints,
        }
    }

    pub fn kind(&self) -> Option<&TargetKind> {
        self.kind.as_ref()
    }

    pub fn breakpoints_1d(&self) -> &[f64] {
        &self.breakpoints
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        if let Some(f) = &self.custom {
            return f(x);
        }
        match self.kind.as_ref().unwrap() {
            TargetKind::Square {} => x.iter().map(|t| t * t).sum(),
            TargetKind::AbsShift { c } => x.iter().map(|t| (t - c).abs()).sum(),
            TargetKind::Sine {} => (std::f64::consts::PI * x.iter().sum::<f64>()).sin(),
            TargetKind::PiecewiseLinear { knots } => interp(knots, x[0]),
            TargetKind::Constant { value } => *value,
            TargetKind::Linear { coef, offset } => offset + coef.iter().zip(x).map(|(c, t)| c * t).sum::<f64>(),
        }
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        match &self.kind {
            Some(TargetKind::PiecewiseLinear { .. }) if d != 1 => {
                Err(Error::InvalidArgument("piecewise_linear targets are one-dimensional".into()))
            }
            Some(TargetKind::Linear { coef, .. }) if coef.len() != d => Err(Error::dim("linear target coefficients", d, coef.len())),
            _ => Ok(()),
        }
    }
}

fn flags(is_lipschitz: bool, is_continuous: bool, is_relu_representable: bool) -> TargetFlags {
    TargetFlags {
        is_lipschitz,
        is_continuous,
        is_relu_representable,
    }
}

fn interp(knots: &[(f64, f64)], x: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let k = knots.partition_point(|p| p.0 <= x);
    let (x0, y0) = knots[k - 1];
    let (x1, y1) = knots[k];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Additive zero-mean output noise, so `E[Y | X] = f(X)` by construction.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    None {},
    Gaussian {
        sigma: f64,
    },
    /// Uniform on `[-u, u]`.
    Uniform {
        u: f64,
    },
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::None {}
    }
}

impl NoiseModel {
    /// `E|f(X) - Y|^2`.
    pub fn offset(&self) -> f64 {
        match *self {
            NoiseModel::None {} => 0.0,
            NoiseModel::Gaussian { sigma } => sigma * sigma,
            NoiseModel::Uniform { u } => u * u / 3.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::None {} => 0.0,
            NoiseModel::Gaussian { sigma } => Normal::new(0.0, sigma).unwrap().sample(rng),
            NoiseModel::Uniform { u } => rng.gen_range(-u..=u),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian { sigma } if !(sigma.is_finite() && sigma >= 0.0) => {
                Err(Error::InvalidArgument(format!("noise sigma must be non-negative, got {sigma}")))
            }
            NoiseModel::Uniform { u } if !(u.is_finite() && u >= 0.0) => {
                Err(Error::InvalidArgument(format!("noise half-width must be non-negative, got {u}")))
            }
            _ => Ok(()),
        }
    }
}

/// Box, measure and target: everything that defines the risk functional.
#[derive(Debug, Clone)]
pub struct Problem {
    pub domain: DomainBox,
    pub measure: Measure,
    pub target: Target,
}

impl Problem {
    pub fn new(domain: DomainBox, measure: Measure, target: Target) -> Result<Self> {
        domain.validate()?;
        measure.validate(&domain)?;
        target.check_dim(domain.d)?;
        Ok(Problem { domain, measure, target })
    }

    /// `f(x) = x^2` on `[0, 1]` under Lebesgue measure.
    pub fn square_unit() -> Self {
        Self::new(DomainBox::unit(1), Measure::uniform(), Target::square()).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.domain.d
    }
}

const REJECTION_CAP: usize = 100_000;

/// `n` i.i.d. draws from the normalized measure.
pub fn sample_inputs(domain: &DomainBox, measure: &Measure, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, stream_id(&[tags::SAMPLE]));
    sample_with(domain, measure, n, &mut rng)
}

pub(crate) fn sample_with<R: Rng + ?Sized>(domain: &DomainBox, measure: &Measure, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let (a, b, d) = (domain.a, domain.b, domain.d);
    match measure {
        Measure::Uniform { .. } => Ok((0..n).map(|_| (0..d).map(|_| rng.gen_range(a..b)).collect()).collect()),
        Measure::Density(df) => {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let mut tries = 0;
                loop {
                    tries += 1;
                    if tries > REJECTION_CAP {
                        return Err(Error::SamplerStall(REJECTION_CAP));
                    }
                    let x: Vec<f64> = (0..d).map(|_| rng.gen_range(a..b)).collect();
                    let u: f64 = rng.gen::<f64>() * df.upper_bound;
                    if u < (df.pdf)(&x) {
                        out.push(x);
                        break;
                    }
                }
            }
            Ok(out)
        }
        Measure::Empirical { points, weights } => {
            let idx = WeightedIndex::new(weights).map_err(|e| Error::InvalidArgument(format!("empirical weights: {e}")))?;
            Ok((0..n).map(|_| points[idx.sample(rng)].clone()).collect())
        }
    }
}

/// Input/output pair with `Y = f(X) + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub x: Vec<f64>,
    pub y: f64,
}

pub fn noisy_pairs(problem: &Problem, noise: &NoiseModel, n: usize, seed: u64) -> Result<Vec<Pair>> {
    noise.validate()?;
    let xs = sample_inputs(&problem.domain, &problem.measure, n, seed)?;
    let mut rng = stream_rng(seed, stream_id(&[tags::NOISE]));
    Ok(xs
        .into_iter()
        .map(|x| {
            let y = problem.target.eval(&x) + noise.sample(&mut rng);
            Pair { x, y }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_box_rejected() {
        assert!(DomainBox::new(1.0, 1.0, 1).is_err());
        assert!(DomainBox::new(0.0, 1.0, 0).is_err());
        assert_eq!(DomainBox::new(-3.0, 2.0, 1).unwrap().amax(), 3.0);
        assert_eq!(DomainBox::new(0.0, 0.5, 1).unwrap().amax(), 1.0);
    }

    #[test]
    fn uniform_samples_in_box_and_reproducible() {
        let bx = DomainBox::unit(1);
        let s1 = sample_inputs(&bx, &Measure::uniform(), 3, 11).unwrap();
        let s2 = sample_inputs(&bx, &Measure::uniform(), 3, 11).unwrap();
        assert_eq!(s1, s2);
        assert!(s1.iter().all(|p| bx.contains(p)));
        assert!(sample_inputs(&bx, &Measure::uniform(), 0, 1).is_err());
    }

    #[test]
    fn empirical_single_atom() {
        let bx = DomainBox::unit(1);
        let m = Measure::empirical(vec![vec![0.25]], vec![1.0]);
        let s = sample_inputs(&bx, &m, 5, 3).unwrap();
        assert_eq!(s, vec![vec![0.25]; 5]);
    }

    #[test]
    fn beta22_mean() {
        let bx = DomainBox::unit(1);
        let m = Measure::density("beta22", |x| 6.0 * x[0] * (1.0 - x[0]), 1.0, 1.5);
        let n = 100_000;
        let s = sample_inputs(&bx, &m, n, 5).unwrap();
        let mean = s.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        // Beta(2,2): mean 1/2, variance 1/20.
        let se = (0.05f64 / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn stall_is_reported() {
        let bx = DomainBox::unit(1);
        let m = Measure::density("zero", |_| 0.0, 1.0, 1.0);
        assert!(matches!(sample_inputs(&bx, &m, 1, 0), Err(Error::SamplerStall(_))));
    }

    #[test]
    fn noise_offsets() {
        let p = Problem::square_unit();
        let n = 100_000;
        let exact = noisy_pairs(&p, &NoiseModel::None {}, 10, 1).unwrap();
        assert!(exact.iter().all(|q| q.y == p.target.eval(&q.x)));
        for (noise, offset) in [
            (NoiseModel::Gaussian { sigma: 0.3 }, 0.09),
            (NoiseModel::Uniform { u: 0.5 }, 0.25 / 3.0),
        ] {
            assert_eq!(noise.offset(), offset);
            let pairs = noisy_pairs(&p, &noise, n, 2).unwrap();
            let sq: Vec<f64> = pairs.iter().map(|q| (p.target.eval(&q.x) - q.y).powi(2)).collect();
            let mean = sq.iter().sum::<f64>() / n as f64;
            let var = sq.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!((mean - offset).abs() < 3.0 * se, "{noise:?}: {mean}");
        }
    }

    #[test]
    fn builtin_targets() {
        let pl = Target::builtin(TargetKind::PiecewiseLinear {
            knots: vec![(0.0, 0.0), (0.5, 1.0), (1.0, 0.0)],
        })
        .unwrap();
        assert_eq!(pl.eval(&[0.25]), 0.5);
        assert_eq!(pl.eval(&[2.0]), 0.0);
        assert_eq!(pl.breakpoints_1d(), &[0.0, 0.5, 1.0]);
        let a = Target::builtin(TargetKind::AbsShift { c: 0.5 }).unwrap();
        assert_eq!(a.eval(&[0.0]), 0.5);
        assert!(Target::builtin(TargetKind::PiecewiseLinear {
            knots: vec![(1.0, 0.0), (0.0, 1.0)]
        })
        .is_err());
    }
}
