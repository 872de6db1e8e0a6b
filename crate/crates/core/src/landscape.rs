//! Inactive and trapped neurons, scaled initializations, embeddings into wider
//! architectures, neuron-addition improvement and the stationary-point risk bound.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann::{Activation, Arch, DeepArch, ParamVector, ShallowArch};
use crate::error::{Error, Result};
use crate::grad::{gen_gradient_population, norm};
use crate::measure::{DomainBox, Problem};
use crate::quadrature::{best_constant, integrate, QuadratureCfg};
use crate::risk::{kinks_1d, risk_population};
use crate::rng::{stream_id, stream_rng, tags};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronStatus {
    /// 1-based neuron index.
    pub index: usize,
    /// `sup_x` of the pre-activation over the box.
    pub max_preactivation: f64,
    /// `max_preactivation <= 0`: the neuron outputs 0 on the whole box.
    pub inactive: bool,
    /// `max_preactivation < 0`: no generalized gradient method can revive it.
    pub strictly_trapped: bool,
}

/// `sup_{x in [a,b]^d} (b_i + <w_i, x>) = b_i + sum_j max(w_ij a, w_ij b)`.
pub fn max_preactivation(w: &[f64], bias: f64, domain: &DomainBox) -> f64 {
    bias + w.iter().map(|&wj| (wj * domain.a).max(wj * domain.b)).sum::<f64>()
}

/// `sum_j max(W_j a, W_j b) < -B`.
pub fn trap_event(w: &[f64], bias: f64, domain: &DomainBox) -> bool {
    max_preactivation(w, bias, domain) < 0.0
}

pub fn neuron_status(theta: &ParamVector, i: usize, domain: &DomainBox) -> Result<NeuronStatus> {
    let arch = theta.shallow_arch()?;
    if arch.d != domain.d {
        return Err(Error::dim("box dimension", arch.d, domain.d));
    }
    let first = arch.weight_index(i, 1)?;
    let w = &theta.values[first..first + arch.d];
    let m = max_preactivation(w, theta.inner_bias(i)?, domain);
    Ok(NeuronStatus {
        index: i,
        max_preactivation: m,
        inactive: m <= 0.0,
        strictly_trapped: m < 0.0,
    })
}

pub fn all_status(theta: &ParamVector, domain: &DomainBox) -> Result<Vec<NeuronStatus>> {
    let h = theta.shallow_arch()?.width;
    (1..=h).map(|i| neuron_status(theta, i, domain)).collect()
}

/// 1-based indices of inactive neurons.
pub fn inactive_set(theta: &ParamVector, domain: &DomainBox) -> Result<Vec<usize>> {
    Ok(all_status(theta, domain)?
        .into_iter()
        .filter(|s| s.inactive)
        .map(|s| s.index)
        .collect())
}

/// 1-based indices of strictly trapped neurons.
pub fn trapped_set(theta: &ParamVector, domain: &DomainBox) -> Result<Vec<usize>> {
    Ok(all_status(theta, domain)?
        .into_iter()
        .filter(|s| s.strictly_trapped)
        .map(|s| s.index)
        .collect())
}

/// Unscaled per-coordinate law of the initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitDensity {
    /// Standard normal.
    Normal,
    /// Uniform on `(-1, 1)`.
    Uniform,
    /// Piecewise-constant density: bin `k` is `[edges[k], edges[k+1])` with relative mass `weights[k]`.
    Table { edges: Vec<f64>, weights: Vec<f64> },
}

impl InitDensity {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            InitDensity::Normal => StandardNormal.sample(rng),
            InitDensity::Uniform => rng.gen_range(-1.0..1.0),
            InitDensity::Table { edges, weights } => {
                let k = WeightedIndex::new(weights).expect("validated").sample(rng);
                rng.gen_range(edges[k]..edges[k + 1])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let InitDensity::Table { edges, weights } = self {
            if edges.len() != weights.len() + 1 || weights.is_empty() {
                return Err(Error::InvalidArgument("table needs len(edges) = len(weights) + 1".into()));
            }
            if edges.windows(2).any(|e| !(e[1] > e[0])) || weights.iter().any(|w| !(*w >= 0.0)) {
                return Err(Error::InvalidArgument(
                    "table edges must increase and weights be non-negative".into(),
                ));
            }
            // Positive on a neighbourhood of 0.
            let positive_at = |t: f64| edges.windows(2).zip(weights).any(|(e, w)| *w > 0.0 && e[0] <= t && t < e[1]);
            let eta = 1e-12;
            if !(positive_at(-eta) && positive_at(0.0) && positive_at(eta)) {
                return Err(Error::InvalidArgument(
                    "initialization density must be positive on an interval around 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// I.i.d. initialization whose coordinates satisfy `H^kappa * Theta_i ~ density`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub density: InitDensity,
    pub kappa: f64,
}

impl InitSpec {
    /// `normal-kappa-0.5`, `uniform-kappa-0.5`, `normal-unscaled`.
    pub fn preset(name: &str) -> Result<Self> {
        let (density, kappa) = match name {
            "normal-kappa-0.5" => (InitDensity::Normal, 0.5),
            "uniform-kappa-0.5" => (InitDensity::Uniform, 0.5),
            "normal-unscaled" => (InitDensity::Normal, 0.0),
            other => return Err(Error::InvalidArgument(format!("unknown init preset `{other}`"))),
        };
        Ok(InitSpec { density, kappa })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.kappa.is_finite() {
            return Err(Error::InvalidArgument("kappa must be finite".into()));
        }
        self.density.validate()
    }

    pub fn scale(&self, width: usize) -> f64 {
        (width.max(1) as f64).powf(-self.kappa)
    }

    /// First-layer weights and biases and the outer weights are drawn i.i.d. and
    /// scaled by `H^{-kappa}`; the outer bias starts at 0.
    pub fn init_shallow<R: Rng + ?Sized>(&self, arch: &ShallowArch, rng: &mut R) -> ParamVector {
        let s = self.scale(arch.width);
        let n = arch.param_count();
        let mut values: Vec<f64> = (0..n - 1).map(|_| s * self.density.sample(rng)).collect();
        values.push(0.0);
        ParamVector::shallow(arch.clone(), values).expect("length matches")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapEstimate {
    pub p: f64,
    pub stderr: f64,
    pub samples: usize,
}

const CHUNK: usize = 1 << 16;

/// Monte Carlo estimate of `P(sum_j max(W_j a, W_j b) < -B)` for one neuron's
/// `(d+1)`-vector drawn from the init spec at width `width`.
pub fn trap_probability(init: &InitSpec, domain: &DomainBox, width: usize, n_samples: usize, seed: u64) -> Result<TrapEstimate> {
    init.validate()?;
    domain.validate()?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let d = domain.d;
    let scale = init.scale(width);
    let chunks = n_samples.div_ceil(CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, stream_id(&[tags::TRAP, c as u64]));
            let count = CHUNK.min(n_samples - c * CHUNK);
            let mut w = vec![0.0; d];
            let mut hits = 0usize;
            for _ in 0..count {
                for wj in w.iter_mut() {
                    *wj = scale * init.density.sample(&mut rng);
                }
                let b = scale * init.density.sample(&mut rng);
                if trap_event(&w, b, domain) {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let p = hits as f64 / n_samples as f64;
    Ok(TrapEstimate {
        p,
        stderr: (p * (1.0 - p) / n_samples as f64).sqrt(),
        samples: n_samples,
    })
}

/// `(exp(-H p), 1 - (1 - p)^H)`: the bound on the probability of reaching the
/// global infimum, and the probability of at least one trapped neuron.
pub fn trapping_bound(p: f64, width: usize) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("probability out of range: {p}")));
    }
    let h = width as f64;
    Ok(((-h * p).exp(), 1.0 - (1.0 - p).powf(h)))
}

/// Fraction of `n` width-`H` initializations with at least one strictly trapped neuron.
pub fn trapped_at_init_frequency(init: &InitSpec, arch: &ShallowArch, domain: &DomainBox, n: usize, seed: u64) -> Result<(f64, usize)> {
    init.validate()?;
    let hits: usize = (0..n)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, stream_id(&[tags::INIT, t as u64]));
            let th = init.init_shallow(arch, &mut rng);
            usize::from(!trapped_set(&th, domain).unwrap().is_empty())
        })
        .sum();
    Ok((hits as f64 / n as f64, hits))
}

/// Pads a width-`H` network to width `to` with neurons that output 0 everywhere.
pub fn embed_shallow(theta: &ParamVector, to: usize) -> Result<ParamVector> {
    let arch = theta.shallow_arch()?;
    let (d, h) = (arch.d, arch.width);
    if to < h {
        return Err(Error::InvalidArch(format!("cannot embed width {h} into smaller width {to}")));
    }
    let new_arch = ShallowArch { width: to, ..arch.clone() };
    let rep = arch.activation.flat_representative();
    let v = &theta.values;
    let mut out = Vec::with_capacity(new_arch.param_count());
    out.extend_from_slice(&v[..d * h]);
    out.extend(std::iter::repeat(0.0).take(d * (to - h)));
    out.extend_from_slice(&v[d * h..d * h + h]);
    out.extend(std::iter::repeat(rep).take(to - h));
    out.extend_from_slice(&v[d * h + h..d * h + 2 * h]);
    out.extend(std::iter::repeat(0.0).take(to - h));
    out.push(v[d * h + 2 * h]);
    ParamVector::shallow(new_arch, out)
}

/// Pads every hidden layer of a deep network to the dimensions in `to`.
pub fn embed_deep(theta: &ParamVector, to: &[usize]) -> Result<ParamVector> {
    let arch = theta.deep_arch()?;
    let from = &arch.dims;
    if to.len() != from.len() || to[0] != from[0] || to.last() != from.last() {
        return Err(Error::InvalidArch(
            "deep embedding needs equal depth and equal input/output dimensions".into(),
        ));
    }
    if to.iter().zip(from).any(|(t, f)| t < f) {
        return Err(Error::InvalidArch("target layer dimensions must not shrink".into()));
    }
    let new_arch = DeepArch::new(to.to_vec(), arch.activation)?;
    let rep = arch.activation.flat_representative();
    let mut out = vec![0.0; new_arch.param_count()];
    for k in 1..=arch.depth() {
        let (w, b) = arch.layer(&theta.values, k);
        let (rows, cols) = (from[k], from[k - 1]);
        let (nrows, ncols) = (to[k], to[k - 1]);
        let off = new_arch.layer_offset(k);
        for i in 0..rows {
            for j in 0..cols {
                out[off + i * ncols + j] = w[i * cols + j];
            }
        }
        for i in 0..nrows {
            out[off + nrows * ncols + i] = if i < rows { b[i] } else { rep };
        }
    }
    ParamVector::deep(new_arch, out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub theta: ParamVector,
    pub improved: bool,
    pub risk_before: f64,
    /// `D^2 / int sigma^2` for the chosen candidate.
    pub gain: f64,
    /// `D = int sigma(<w,x> + b) (N - f) dmu`.
    pub d_value: f64,
    pub w: Vec<f64>,
    pub b: f64,
    pub v: f64,
}

/// Appends one neuron chosen among `budget` random candidates `(w, b)`.
/// For each candidate the risk is an exact quadratic in the new outer weight
/// `v`, minimized at `v* = -D / int sigma^2` with decrease `D^2 / int sigma^2`;
/// the candidate with the largest decrease is kept.
pub fn add_neuron_improve(
    theta: &ParamVector,
    problem: &Problem,
    cfg: &QuadratureCfg,
    budget: usize,
    seed: u64,
    tol: f64,
) -> Result<Improvement> {
    let arch = theta.shallow_arch()?.clone();
    if arch.d != problem.dim() {
        return Err(Error::dim("network input dimension", problem.dim(), arch.d));
    }
    if budget == 0 {
        return Err(Error::InvalidArgument("candidate budget must be at least 1".into()));
    }
    let d = arch.d;
    let act = arch.activation;
    let risk_before = risk_population(theta, problem, cfg)?;
    let base_kinks = kinks_1d(theta, &problem.domain);
    let candidates: Vec<Result<(Vec<f64>, f64, f64, f64)>> = (0..budget)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, stream_id(&[tags::CANDIDATE, c as u64]));
            let mut w: Vec<f64> = if d == 1 {
                vec![if rng.gen::<bool>() { 1.0 } else { -1.0 }]
            } else {
                (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()
            };
            let nrm = norm(&w).max(1e-300);
            let radius = (rng.gen_range((0.1f64).ln()..(10.0f64).ln())).exp();
            w.iter_mut().for_each(|t| *t *= radius / nrm);
            let (lo, hi) = problem.domain.linear_range(&w);
            let b = rng.gen_range(-hi..-lo);
            let mut kinks = base_kinks.clone();
            if d == 1 {
                kinks.push(-b / w[0]);
                if act.clip().is_finite() {
                    kinks.push((act.clip() - b) / w[0]);
                }
            }
            let vals = integrate(problem, cfg, &kinks, |ns| {
                let mut dv = 0.0;
                let mut s2 = 0.0;
                for (x, wt) in ns.iter() {
                    let z = b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
                    let s = act.value(z);
                    if s == 0.0 {
                        continue;
                    }
                    let r = crate::risk::realize_with(theta, &act, x) - problem.target.eval(x);
                    dv += wt * s * r;
                    s2 += wt * s * s;
                }
                vec![dv, s2]
            })?;
            Ok((w, b, vals[0], vals[1]))
        })
        .collect();
    let mut best: Option<(Vec<f64>, f64, f64, f64)> = None;
    let mut best_gain = -1.0;
    let mut max_abs_d: f64 = 0.0;
    for cand in candidates {
        let (w, b, dv, s2) = cand?;
        max_abs_d = max_abs_d.max(dv.abs());
        if !(s2 > 0.0) {
            continue;
        }
        let gain = dv * dv / s2;
        if gain > best_gain {
            best_gain = gain;
            best = Some((w, b, dv, s2));
        }
    }
    let Some((w, b, dv, s2)) = best.filter(|_| max_abs_d > tol) else {
        return Ok(Improvement {
            theta: embed_shallow(theta, arch.width + 1)?,
            improved: false,
            risk_before,
            gain: 0.0,
            d_value: 0.0,
            w: vec![0.0; d],
            b: arch.activation.flat_representative(),
            v: 0.0,
        });
    };
    let v = -dv / s2;
    let mut out = embed_shallow(theta, arch.width + 1)?;
    let i = arch.width + 1;
    for (j, wj) in w.iter().enumerate() {
        out.set_weight(i, j + 1, *wj)?;
    }
    out.set_inner_bias(i, b)?;
    out.set_outer_weight(i, v)?;
    Ok(Improvement {
        theta: out,
        improved: true,
        risk_before,
        gain: dv * dv / s2,
        d_value: dv,
        w,
        b,
        v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClarkeCheck {
    pub verdict: Verdict,
    pub grad_norm: f64,
    pub risk: f64,
    pub nu_star: f64,
}

/// If `||G(theta)|| <= tol`, checks `risk(theta) <= nu* + slack`.
pub fn clarke_bound_check(theta: &ParamVector, problem: &Problem, cfg: &QuadratureCfg, tol: f64, slack: f64) -> Result<ClarkeCheck> {
    let g = gen_gradient_population(theta, problem, cfg)?;
    let grad_norm = norm(&g);
    let risk = risk_population(theta, problem, cfg)?;
    let (_, nu_star) = best_constant(problem, cfg)?;
    let verdict = if grad_norm > tol {
        Verdict::NotApplicable
    } else if risk <= nu_star + slack {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(ClarkeCheck {
        verdict,
        grad_norm,
        risk,
        nu_star,
    })
}

/// Realization-preservation check at the given points: max |N_theta - N_vartheta|.
pub fn realization_gap(a: &ParamVector, b: &ParamVector, points: &[Vec<f64>]) -> Result<f64> {
    let mut gap: f64 = 0.0;
    for x in points {
        let (u, v) = match (&a.arch, &b.arch) {
            (Arch::Deep(_), Arch::Deep(_)) | (Arch::Shallow(_), Arch::Shallow(_)) => (a.realize(x)?, b.realize(x)?),
            _ => return Err(Error::InvalidArch("architectures differ in kind".into())),
        };
        gap = gap.max((u - v).abs());
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Measure;

    #[test]
    fn status_examples() {
        let bx = DomainBox::new(-1.0, 1.0, 2).unwrap();
        let th = ParamVector::shallow(ShallowArch::relu(2, 1), vec![1.0, -2.0, -4.0, 1.0, 0.0]).unwrap();
        let s = neuron_status(&th, 1, &bx).unwrap();
        assert_eq!(s.max_preactivation, -1.0);
        assert!(s.strictly_trapped && s.inactive);
        let unit = DomainBox::unit(1);
        let th = ParamVector::shallow(ShallowArch::relu(1, 1), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let s = neuron_status(&th, 1, &unit).unwrap();
        assert_eq!(s.max_preactivation, 1.0);
        assert!(!s.inactive);
        let th = ParamVector::shallow(ShallowArch::relu(1, 1), vec![-1.0, 0.0, 1.0, 0.0]).unwrap();
        let s = neuron_status(&th, 1, &unit).unwrap();
        assert_eq!(s.max_preactivation, 0.0);
        assert!(s.inactive && !s.strictly_trapped);
        assert!(matches!(neuron_status(&th, 2, &unit), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn bound_examples() {
        let (lo, hi) = trapping_bound(0.375, 8).unwrap();
        assert!((lo - (-3.0f64).exp()).abs() < 1e-15);
        assert!((hi - (1.0 - 0.625f64.powi(8))).abs() < 1e-15);
        assert_eq!(trapping_bound(0.0, 5).unwrap(), (1.0, 0.0));
        let mut prev = 1.0;
        for h in 1..50 {
            let (b, _) = trapping_bound(0.2, h).unwrap();
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn uniform_trap_probability() {
        // Midpoint rule for the area of {b < 0, w + b < 0} inside [-1, 1]^2, over 4.
        let n = 2000;
        let h = 2.0 / n as f64;
        let mut hits = 0usize;
        for i in 0..n {
            for j in 0..n {
                let (w, b) = (-1.0 + (i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h);
                hits += usize::from(b < 0.0 && w + b < 0.0);
            }
        }
        let oracle = hits as f64 * h * h / 4.0;
        assert!((oracle - 0.375).abs() < 1e-3);
        let init = InitSpec::preset("uniform-kappa-0.5").unwrap();
        let e = trap_probability(&init, &DomainBox::unit(1), 4, 200_000, 8).unwrap();
        assert!((e.p - 0.375).abs() <= 4.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn positive_bias_never_traps() {
        let init = InitSpec {
            density: InitDensity::Table {
                edges: vec![-1.0, 1.0],
                weights: vec![1.0],
            },
            kappa: 0.0,
        };
        // With a positive bias the event needs sum of maxima < negative, which is
        // impossible on [0, 1] where every max term is >= 0.
        let bx = DomainBox::unit(1);
        let mut rng = stream_rng(1, 1);
        for _ in 0..1000 {
            let w = init.density.sample(&mut rng);
            let b: f64 = rng.gen_range(0.0..1.0);
            assert!(!trap_event(&[w], b, &bx));
        }
    }

    #[test]
    fn shallow_embedding_layout() {
        let th = ParamVector::shallow(ShallowArch::relu(1, 1), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(embed_shallow(&th, 1).unwrap(), th);
        let e = embed_shallow(&th, 3).unwrap();
        assert_eq!(e.values, vec![1.0, 0.0, 0.0, 0.0, -1.0, -1.0, 1.0, 0.0, 0.0, 0.0]);
        let p = Problem::square_unit();
        let cfg = QuadratureCfg::default();
        assert_eq!(
            risk_population(&th, &p, &cfg).unwrap().to_bits(),
            risk_population(&e, &p, &cfg).unwrap().to_bits()
        );
        assert!(embed_shallow(&e, 2).is_err());
    }

    #[test]
    fn deep_embedding_preserves_realization() {
        let arch = DeepArch::relu(vec![1, 1, 1]).unwrap();
        let th = ParamVector::deep(arch, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let e = embed_deep(&th, &[1, 2, 1]).unwrap();
        let pts: Vec<Vec<f64>> = (0..100).map(|k| vec![-2.0 + 0.04 * k as f64]).collect();
        assert!(realization_gap(&th, &e, &pts).unwrap() <= 1e-12);
        assert_eq!(embed_deep(&th, &[1, 1, 1]).unwrap(), th);
        assert!(embed_deep(&th, &[2, 2, 1]).is_err());
    }

    #[test]
    fn improvement_from_constant() {
        let p = Problem::square_unit();
        let cfg = QuadratureCfg::default();
        let c = ParamVector::shallow(ShallowArch::relu(1, 0), vec![1.0 / 3.0]).unwrap();
        let imp = add_neuron_improve(&c, &p, &cfg, 64, 3, 1e-12).unwrap();
        assert!(imp.improved);
        let after = risk_population(&imp.theta, &p, &cfg).unwrap();
        assert!(after < 4.0 / 45.0);
        assert!(
            (imp.risk_before - after - imp.gain).abs() < 1e-14,
            "{} {}",
            imp.risk_before - after,
            imp.gain
        );
    }

    #[test]
    fn no_improvement_on_exact_fit() {
        let p = Problem::new(
            DomainBox::unit(1),
            Measure::uniform(),
            crate::measure::Target::linear(vec![1.0], 0.0),
        )
        .unwrap();
        let th = ParamVector::shallow(ShallowArch::relu(1, 1), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let imp = add_neuron_improve(&th, &p, &QuadratureCfg::default(), 32, 0, 1e-12).unwrap();
        assert!(!imp.improved);
    }

    #[test]
    fn clarke_at_best_constant() {
        let p = Problem::square_unit();
        let c = ParamVector::shallow(ShallowArch::relu(1, 0), vec![1.0 / 3.0]).unwrap();
        let chk = clarke_bound_check(&c, &p, &QuadratureCfg::default(), 1e-12, 1e-15).unwrap();
        assert_eq!(chk.verdict, Verdict::Pass);
        let far = ParamVector::shallow(ShallowArch::relu(1, 0), vec![5.0]).unwrap();
        let chk = clarke_bound_check(&far, &p, &QuadratureCfg::default(), 1e-5, 0.0).unwrap();
        assert_eq!(chk.verdict, Verdict::NotApplicable);
    }
}
