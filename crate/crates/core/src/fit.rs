//! Multi-restart estimate of the width-`H` risk infimum for shallow networks.
//!
//! Each restart places the neurons' hyperplanes at random points of the box
//! and then runs two phases:
//!
//! 1. Adam on the first-layer parameters, with the output layer re-solved by
//!    weighted least squares at every step (the risk is convex quadratic in the
//!    output layer, so the reduced functional has the same infimum).
//! 2. Levenberg–Marquardt on all parameters, rebuilding the kink-split rule at
//!    every trial point so each accepted step decreases the exact risk.
//!
//! The estimate is the minimum over restarts and therefore an upper bound on
//! the true infimum.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann::{Activation, ActivationKind, ParamVector, ShallowArch};
use crate::error::{Error, Result};
use crate::grad::{risk_grad_on_nodes, shallow_point_jacobian};
use crate::measure::Problem;
use crate::quadrature::{best_constant, build_nodes, NodeSet, QuadratureCfg};
use crate::risk::{kinks_1d, risk_on_nodes, risk_population};
use crate::rng::{stream_id, stream_rng, tags};

#[derive(Debug, Clone)]
pub struct InfOptions {
    pub restarts: usize,
    /// Iterations of the reduced Adam phase per restart.
    pub adam_iters: usize,
    /// Iterations of the Levenberg–Marquardt phase per restart.
    pub lm_iters: usize,
    pub adam_lr: f64,
    pub seed: u64,
    pub cfg: QuadratureCfg,
    pub activation: ActivationKind,
    /// Extra starting point, polished like the restarts and included in the minimum.
    pub warm_start: Option<ParamVector>,
}

impl Default for InfOptions {
    fn default() -> Self {
        InfOptions {
            restarts: 32,
            adam_iters: 1500,
            lm_iters: 200,
            adam_lr: 2e-2,
            seed: 0,
            cfg: QuadratureCfg::default(),
            activation: ActivationKind::Relu,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfEstimate {
    pub width: usize,
    pub value: f64,
    pub theta: ParamVector,
    pub restarts: usize,
    /// Stream id of each restart's generator under the base seed.
    pub seeds: Vec<u64>,
    pub restart_risks: Vec<f64>,
    /// Polished parameter values of every restart, in restart order.
    pub restart_thetas: Vec<Vec<f64>>,
    pub warm_start_risk: Option<f64>,
    /// The winning run stopped on its iteration budget rather than on stagnation.
    pub budget_exhausted: bool,
    pub quadrature: String,
}

pub fn global_inf_estimate(problem: &Problem, width: usize, opts: &InfOptions) -> Result<InfEstimate> {
    if opts.restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let arch = ShallowArch::new(problem.dim(), width, opts.activation)?;
    let fingerprint = opts.cfg.fingerprint();
    if width == 0 {
        let (xi, nu) = best_constant(problem, &opts.cfg)?;
        return Ok(InfEstimate {
            width,
            value: nu,
            theta: ParamVector::shallow(arch, vec![xi])?,
            restarts: opts.restarts,
            seeds: Vec::new(),
            restart_risks: Vec::new(),
            restart_thetas: Vec::new(),
            warm_start_risk: None,
            budget_exhausted: false,
            quadrature: fingerprint,
        });
    }
    let seeds: Vec<u64> = (0..opts.restarts).map(|r| stream_id(&[tags::RESTART, r as u64])).collect();
    let runs: Vec<Result<(f64, ParamVector, bool)>> = seeds
        .par_iter()
        .map(|&sid| {
            let mut rng = stream_rng(opts.seed, sid);
            let theta = random_start(problem, &arch, &mut rng);
            polish(problem, theta, opts, true)
        })
        .collect();
    let mut best: Option<(f64, ParamVector, bool)> = None;
    let mut restart_risks = Vec::with_capacity(runs.len());
    let mut restart_thetas = Vec::with_capacity(runs.len());
    for run in runs {
        let run = run?;
        restart_risks.push(run.0);
        restart_thetas.push(run.1.values.clone());
        if best.as_ref().map_or(true, |b| run.0 < b.0) {
            best = Some(run);
        }
    }
    let mut warm_start_risk = None;
    if let Some(ws) = &opts.warm_start {
        if ws.shallow_arch()? != &arch {
            return Err(Error::InvalidArch("warm start does not match the requested width".into()));
        }
        let run = polish(problem, ws.clone(), opts, false)?;
        warm_start_risk = Some(run.0);
        if best.as_ref().map_or(true, |b| run.0 < b.0) {
            best = Some(run);
        }
    }
    let (value, theta, exhausted) = best.unwrap();
    Ok(InfEstimate {
        width,
        value,
        theta,
        restarts: opts.restarts,
        seeds,
        restart_risks,
        restart_thetas,
        warm_start_risk,
        budget_exhausted: exhausted,
        quadrature: fingerprint,
    })
}

/// Hyperplanes through uniform points of the box with random orientation and scale.
fn random_start<R: Rng>(problem: &Problem, arch: &ShallowArch, rng: &mut R) -> ParamVector {
    let (d, h) = (arch.d, arch.width);
    let dom = &problem.domain;
    let mut theta = ParamVector::zeros(crate::ann::Arch::Shallow(arch.clone()));
    for i in 0..h {
        let mut w: Vec<f64> = if d == 1 {
            vec![if rng.gen::<bool>() { 1.0 } else { -1.0 }]
        } else {
            (0..d).map(|_| StandardNormal.sample(rng)).collect()
        };
        let norm = w.iter().map(|t| t * t).sum::<f64>().sqrt().max(1e-12);
        let scale = (rng.gen_range(-0.7f64..0.7)).exp() / norm;
        w.iter_mut().for_each(|t| *t *= scale);
        let p: Vec<f64> = (0..d).map(|_| rng.gen_range(dom.a..dom.b)).collect();
        let b = -w.iter().zip(&p).map(|(a, c)| a * c).sum::<f64>();
        for j in 0..d {
            theta.values[i * d + j] = w[j];
        }
        theta.values[d * h + i] = b;
    }
    theta
}

fn nodes_for(problem: &Problem, cfg: &QuadratureCfg, theta: &ParamVector) -> Result<NodeSet> {
    let kinks = kinks_1d(theta, &problem.domain);
    build_nodes(problem, cfg, &kinks, cfg.panels)
}

/// Runs the optional reduced Adam phase and the LM phase; returns the final
/// risk under the configured rule and whether LM stopped on its budget.
fn polish(problem: &Problem, mut theta: ParamVector, opts: &InfOptions, adam: bool) -> Result<(f64, ParamVector, bool)> {
    let arch = theta.shallow_arch()?.clone();
    let act = arch.activation;
    let cfg = opts.cfg.fixed();
    let inner = arch.first_layer_len();
    if adam {
        let mut m = vec![0.0; inner];
        let mut v = vec![0.0; inner];
        let (b1, b2) = (0.9f64, 0.999f64);
        let (mut p1, mut p2) = (1.0, 1.0);
        let t_max = opts.adam_iters.max(1) as f64;
        for it in 0..opts.adam_iters {
            let nodes = nodes_for(problem, &cfg, &theta)?;
            solve_outer(&mut theta, &act, problem, &nodes);
            let (_, g) = risk_grad_on_nodes(&theta, &act, &problem.target, &nodes);
            p1 *= b1;
            p2 *= b2;
            let lr = opts.adam_lr * (0.05 + 0.95 * 0.5 * (1.0 + (std::f64::consts::PI * it as f64 / t_max).cos()));
            for k in 0..inner {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let mh = m[k] / (1.0 - p1);
                let vh = v[k] / (1.0 - p2);
                theta.values[k] -= lr * mh / (1e-12 + vh.sqrt());
            }
        }
        let nodes = nodes_for(problem, &cfg, &theta)?;
        solve_outer(&mut theta, &act, problem, &nodes);
    }
    let exhausted = levenberg_marquardt(problem, &mut theta, &cfg, opts.lm_iters)?;
    let risk = risk_population(&theta, problem, &opts.cfg)?;
    Ok((if risk.is_nan() { f64::INFINITY } else { risk }, theta, exhausted))
}

/// Weighted least-squares solve for the output layer given the first layer.
pub(crate) fn solve_outer<A: Activation>(theta: &mut ParamVector, act: &A, problem: &Problem, nodes: &NodeSet) {
    let arch = theta.shallow_arch().unwrap().clone();
    let (d, h) = (arch.d, arch.width);
    let p = h + 1;
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut phi = vec![0.0; p];
    for (x, w) in nodes.iter() {
        for i in 0..h {
            let mut z = theta.values[d * h + i];
            for j in 0..d {
                z += theta.values[i * d + j] * x[j];
            }
            phi[i] = act.value(z);
        }
        phi[h] = 1.0;
        let fx = problem.target.eval(x);
        for a in 0..p {
            rhs[a] += w * phi[a] * fx;
            for b in a..p {
                gram[(a, b)] += w * phi[a] * phi[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let svd = gram.svd(true, true);
    let smax = svd.singular_values.max();
    if let Ok(sol) = svd.solve(&rhs, smax * 1e-13) {
        if sol.iter().all(|t| t.is_finite()) {
            for i in 0..h {
                theta.values[d * h + h + i] = sol[i];
            }
            theta.values[d * h + 2 * h] = sol[h];
        }
    }
}

/// Returns `true` when the iteration budget ran out before stagnation.
fn levenberg_marquardt(problem: &Problem, theta: &mut ParamVector, cfg: &QuadratureCfg, iters: usize) -> Result<bool> {
    let arch = theta.shallow_arch()?.clone();
    let act = arch.activation;
    let n = theta.len();
    let mut risk = risk_on_nodes(theta, &problem.target, &nodes_for(problem, cfg, theta)?);
    let mut lambda = 1e-3;
    let mut zbuf = Vec::with_capacity(arch.width);
    let mut row = vec![0.0; n];
    for _ in 0..iters {
        let nodes = nodes_for(problem, cfg, theta)?;
        let mut jtj = DMatrix::<f64>::zeros(n, n);
        let mut jtr = DVector::<f64>::zeros(n);
        for (x, w) in nodes.iter() {
            let out = shallow_point_jacobian(&arch, &theta.values, &act, x, &mut zbuf, &mut row);
            let r = out - problem.target.eval(x);
            for a in 0..n {
                if row[a] == 0.0 {
                    continue;
                }
                jtr[a] += w * row[a] * r;
                for b in a..n {
                    jtj[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                jtj[(a, b)] = jtj[(b, a)];
            }
        }
        if jtr.iter().all(|g| g.abs() < 1e-300) {
            return Ok(false);
        }
        let mean_diag = (0..n).map(|a| jtj[(a, a)]).sum::<f64>() / n as f64;
        let mut accepted = None;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * (jtj[(k, k)] + 1e-9 * mean_diag) + 1e-300;
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 4.0;
                continue;
            };
            let delta = chol.solve(&(-&jtr));
            let mut trial = theta.clone();
            for k in 0..n {
                trial.values[k] += delta[k];
            }
            let trial_risk = risk_on_nodes(&trial, &problem.target, &nodes_for(problem, cfg, &trial)?);
            if trial_risk < risk {
                accepted = Some((trial, trial_risk));
                lambda = (lambda / 3.0).max(1e-12);
                break;
            }
            lambda *= 4.0;
        }
        match accepted {
            Some((trial, trial_risk)) => {
                let gain = risk - trial_risk;
                *theta = trial;
                risk = trial_risk;
                if gain <= 1e-14 * risk.max(1e-300) {
                    return Ok(false);
                }
            }
            None => return Ok(false),
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{DomainBox, Measure, Target, TargetKind};

    #[test]
    fn width_zero_is_closed_form() {
        let est = global_inf_estimate(&Problem::square_unit(), 0, &InfOptions::default()).unwrap();
        assert!((est.value - 4.0 / 45.0).abs() < 1e-15);
        assert!(est.seeds.is_empty());
    }

    #[test]
    fn representable_target_reaches_zero() {
        let target = Target::builtin(TargetKind::PiecewiseLinear {
            knots: vec![(0.0, 0.0), (0.4, 1.0), (1.0, 0.25)],
        })
        .unwrap();
        let p = Problem::new(DomainBox::unit(1), Measure::uniform(), target).unwrap();
        let opts = InfOptions {
            restarts: 8,
            ..Default::default()
        };
        let est = global_inf_estimate(&p, 2, &opts).unwrap();
        assert!(est.value <= 1e-6, "{}", est.value);
    }
}
