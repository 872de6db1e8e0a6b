//! Integration against the input measure.
//!
//! Four modes: 1D kink-split Gauss–Legendre, tensor Gauss–Legendre, Halton
//! quasi-Monte Carlo and plain Monte Carlo. Empirical measures are always
//! integrated exactly over their atoms.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::measure::{Measure, Problem};
use crate::rng::{stream_id, stream_rng, tags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadMode {
    KinkSplit1d,
    TensorGauss,
    QuasiMc,
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureCfg {
    pub mode: QuadMode,
    /// Gauss–Legendre points per panel.
    pub order: usize,
    /// Initial panels per smooth piece (per axis in tensor mode).
    pub panels: usize,
    /// Sample count for the stochastic modes.
    pub samples: usize,
    /// Absolute tolerance for the panel-doubling check.
    pub tol: f64,
    /// Maximum number of panel doublings.
    pub max_refine: u32,
    /// Compare against a doubled panel count before accepting an estimate.
    pub refine: bool,
    pub seed: u64,
}

impl Default for QuadratureCfg {
    fn default() -> Self {
        QuadratureCfg {
            mode: QuadMode::KinkSplit1d,
            order: 8,
            panels: 1,
            samples: 100_000,
            tol: 1e-9,
            max_refine: 6,
            refine: true,
            seed: 0,
        }
    }
}

impl QuadratureCfg {
    /// Kink-split in 1D, tensor Gauss up to `d = 3`, quasi-MC beyond.
    pub fn for_dim(d: usize) -> Self {
        match d {
            1 => Self::default(),
            2 | 3 => QuadratureCfg {
                mode: QuadMode::TensorGauss,
                panels: 4,
                ..Self::default()
            },
            _ => QuadratureCfg {
                mode: QuadMode::QuasiMc,
                refine: false,
                ..Self::default()
            },
        }
    }

    pub fn mc(samples: usize, seed: u64) -> Self {
        QuadratureCfg {
            mode: QuadMode::Mc,
            samples,
            seed,
            refine: false,
            ..Self::default()
        }
    }

    /// Same rule without the refinement comparison; used inside inner loops.
    pub fn fixed(&self) -> Self {
        QuadratureCfg {
            refine: false,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("quadrature tolerance must be positive".into()));
        }
        if self.order < 2 {
            return Err(Error::InvalidArgument("quadrature order must be at least 2".into()));
        }
        if self.panels == 0 || self.samples == 0 {
            return Err(Error::InvalidArgument("quadrature panels and samples must be positive".into()));
        }
        Ok(())
    }

    /// Short content hash identifying the rule.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("cfg serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }

    fn is_stochastic(&self) -> bool {
        matches!(self.mode, QuadMode::QuasiMc | QuadMode::Mc)
    }
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Weighted point set representing the measure: `int g dmu ~ sum_k w_k g(x_k)`.
#[derive(Debug, Clone, Default)]
pub struct NodeSet {
    pub d: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.d..(k + 1) * self.d]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points.chunks_exact(self.d).zip(self.weights.iter().copied())
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, g: F) -> f64 {
        self.iter().map(|(x, w)| w * g(x)).sum()
    }

    fn push(&mut self, x: &[f64], w: f64) {
        self.points.extend_from_slice(x);
        self.weights.push(w);
    }
}

/// Mean and standard error of a Monte Carlo estimate `sum_k w_k g_k` with equal-weight nodes.
pub fn mc_estimate(nodes: &NodeSet, values: &[f64]) -> (f64, f64) {
    let n = nodes.len() as f64;
    let terms: Vec<f64> = nodes.weights.iter().zip(values).map(|(w, g)| n * w * g).collect();
    let mean = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Sorted cut points of `[a, b]`: the endpoints plus every finite break strictly inside.
pub fn cut_points(a: f64, b: f64, breaks: &[f64]) -> Vec<f64> {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|t| t.is_finite() && *t > a && *t < b).collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    cuts
}

/// Node set at a given panel count; `breaks` are 1D split points (ignored in other modes).
pub fn build_nodes(problem: &Problem, cfg: &QuadratureCfg, breaks: &[f64], panels: usize) -> Result<NodeSet> {
    let domain = &problem.domain;
    let measure = &problem.measure;
    let d = domain.d;
    if let Measure::Empirical { points, weights } = measure {
        let mut ns = NodeSet { d, ..Default::default() };
        for (p, w) in points.iter().zip(weights) {
            ns.push(p, *w);
        }
        return Ok(ns);
    }
    let mut ns = NodeSet { d, ..Default::default() };
    match cfg.mode {
        QuadMode::KinkSplit1d => {
            if d != 1 {
                return Err(Error::InvalidArgument(format!("kink_split_1d needs d = 1, got d = {d}")));
            }
            let gl = GaussLegendre::new(cfg.order);
            let mut all: Vec<f64> = breaks.to_vec();
            all.extend_from_slice(problem.target.breakpoints_1d());
            let cuts = cut_points(domain.a, domain.b, &all);
            for piece in cuts.windows(2) {
                let h = (piece[1] - piece[0]) / panels as f64;
                for p in 0..panels {
                    let lo = piece[0] + p as f64 * h;
                    for (t, w) in gl.nodes.iter().zip(&gl.weights) {
                        let x = [lo + 0.5 * h * (t + 1.0)];
                        ns.push(&x, 0.5 * h * w * measure.density_at(domain, &x));
                    }
                }
            }
        }
        QuadMode::TensorGauss => {
            let gl = GaussLegendre::new(cfg.order);
            let h = (domain.b - domain.a) / panels as f64;
            let mut axis: Vec<(f64, f64)> = Vec::with_capacity(panels * cfg.order);
            for p in 0..panels {
                let lo = domain.a + p as f64 * h;
                for (t, w) in gl.nodes.iter().zip(&gl.weights) {
                    axis.push((lo + 0.5 * h * (t + 1.0), 0.5 * h * w));
                }
            }
            let m = axis.len();
            let total = m
                .checked_pow(d as u32)
                .ok_or_else(|| Error::InvalidArgument("tensor grid too large for this dimension".into()))?;
            let mut x = vec![0.0; d];
            for flat in 0..total {
                let mut rem = flat;
                let mut w = 1.0;
                for xj in x.iter_mut() {
                    let (node, wt) = axis[rem % m];
                    rem /= m;
                    *xj = node;
                    w *= wt;
                }
                ns.push(&x, w * measure.density_at(domain, &x));
            }
        }
        QuadMode::QuasiMc => {
            let n = cfg.samples;
            let vol = domain.volume();
            let mut x = vec![0.0; d];
            for k in 0..n {
                for (j, xj) in x.iter_mut().enumerate() {
                    *xj = domain.a + (domain.b - domain.a) * radical_inverse(k as u64 + 1, PRIMES[j % PRIMES.len()]);
                }
                ns.push(&x, vol / n as f64 * measure.density_at(domain, &x));
            }
        }
        QuadMode::Mc => {
            let n = cfg.samples;
            let vol = domain.volume();
            let mut rng = stream_rng(cfg.seed, stream_id(&[tags::QUADRATURE]));
            let mut x = vec![0.0; d];
            for _ in 0..n {
                for xj in x.iter_mut() {
                    *xj = rng.gen_range(domain.a..domain.b);
                }
                ns.push(&x, vol / n as f64 * measure.density_at(domain, &x));
            }
        }
    }
    Ok(ns)
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while k > 0 {
        r += (k % base) as f64 * f;
        k /= base;
        f *= inv;
    }
    r
}

/// Integrates a vector-valued functional of the node set, doubling the panel
/// count until two successive estimates agree to `cfg.tol` in every component.
pub fn integrate<F>(problem: &Problem, cfg: &QuadratureCfg, breaks: &[f64], eval: F) -> Result<Vec<f64>>
where
    F: Fn(&NodeSet) -> Vec<f64>,
{
    cfg.validate()?;
    let mut panels = cfg.panels;
    let mut prev = eval(&build_nodes(problem, cfg, breaks, panels)?);
    if !cfg.refine || cfg.is_stochastic() || problem.measure.is_empirical() {
        return Ok(prev);
    }
    let mut change = f64::INFINITY;
    for _ in 0..cfg.max_refine {
        panels *= 2;
        let cur = eval(&build_nodes(problem, cfg, breaks, panels)?);
        change = prev.iter().zip(&cur).map(|(p, c)| (p - c).abs()).fold(0.0, f64::max);
        if change.is_nan() {
            break;
        }
        if change <= cfg.tol {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::ToleranceNotMet { change, tol: cfg.tol })
}

/// `(xi*, nu*)`: the mu-mean of `f` and the risk of the best constant.
pub fn best_constant(problem: &Problem, cfg: &QuadratureCfg) -> Result<(f64, f64)> {
    let first = integrate(problem, cfg, &[], |ns| vec![ns.mass(), ns.integrate(|x| problem.target.eval(x))])?;
    let (mass, fint) = (first[0], first[1]);
    if !(mass > 0.0) {
        return Err(Error::Precondition("measure has zero mass".into()));
    }
    let xi = fint / mass;
    let nu = integrate(
        problem,
        cfg,
        &[],
        |ns| vec![ns.integrate(|x| (problem.target.eval(x) - xi).powi(2))],
    )?[0];
    Ok((xi, nu))
}

pub(crate) fn domain_mass(problem: &Problem, cfg: &QuadratureCfg) -> Result<f64> {
    Ok(integrate(problem, cfg, &[], |ns| vec![ns.mass()])?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{DomainBox, Measure, Target};

    #[test]
    fn gauss_legendre_exactness() {
        for n in 2..=12 {
            let gl = GaussLegendre::new(n);
            for p in 0..(2 * n) {
                let approx: f64 = gl.nodes.iter().zip(&gl.weights).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-13, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn best_constant_examples() {
        let cfg = QuadratureCfg::default();
        let p = Problem::new(DomainBox::unit(1), Measure::uniform(), Target::linear(vec![1.0], 0.0)).unwrap();
        let (xi, nu) = best_constant(&p, &cfg).unwrap();
        assert!((xi - 0.5).abs() < 1e-15 && (nu - 1.0 / 12.0).abs() < 1e-15);
        let (xi, nu) = best_constant(&Problem::square_unit(), &cfg).unwrap();
        assert!((xi - 1.0 / 3.0).abs() < 1e-15 && (nu - 4.0 / 45.0).abs() < 1e-15);
        let p = Problem::new(DomainBox::unit(1), Measure::uniform(), Target::constant(7.0)).unwrap();
        assert_eq!(best_constant(&p, &cfg).unwrap(), (7.0, 0.0));
    }

    #[test]
    fn tensor_and_qmc_volume() {
        let p = Problem::new(DomainBox::new(-1.0, 1.0, 2).unwrap(), Measure::uniform(), Target::square()).unwrap();
        let cfg = QuadratureCfg::for_dim(2);
        let m = domain_mass(&p, &cfg).unwrap();
        assert!((m - 1.0).abs() < 1e-12, "{m}");
        let (xi, _) = best_constant(&p, &cfg).unwrap();
        assert!((xi - 2.0 / 3.0).abs() < 1e-13);
        let q = QuadratureCfg {
            mode: QuadMode::QuasiMc,
            samples: 20_000,
            refine: false,
            ..QuadratureCfg::default()
        };
        let (xi, _) = best_constant(&p, &q).unwrap();
        assert!((xi - 2.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn kink_split_is_exact_on_abs() {
        let p = Problem::new(
            DomainBox::unit(1),
            Measure::uniform(),
            Target::builtin(crate::measure::TargetKind::AbsShift { c: 0.3 }).unwrap(),
        )
        .unwrap();
        let (xi, _) = best_constant(&p, &QuadratureCfg::default()).unwrap();
        assert!((xi - (0.09 + 0.49) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn tolerance_failure_surfaces() {
        let p = Problem::new(
            DomainBox::unit(1),
            Measure::uniform(),
            Target::custom("wiggle", |x| (400.0 * x[0]).sin(), Default::default(), vec![]),
        )
        .unwrap();
        let cfg = QuadratureCfg {
            order: 2,
            max_refine: 1,
            tol: 1e-14,
            ..QuadratureCfg::default()
        };
        assert!(matches!(best_constant(&p, &cfg), Err(Error::ToleranceNotMet { .. })));
    }

    #[test]
    fn fingerprint_tracks_fields() {
        let a = QuadratureCfg::default();
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.order = 9;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
