//! The Lyapunov function `V_xi` for deep networks, its sandwich bounds, the
//! gradient identity and the a-priori step-size threshold for gradient descent.
//!
//! `V_xi(theta) = sum_k (k ||b^k||^2 + ||W^k||^2) - 2L <xi, b^L>`.

use serde::{Deserialize, Serialize};

use crate::ann::{Arch, DeepArch, ParamVector};
use crate::error::{Error, Result};
use crate::grad::{norm, risk_and_gradient_population};
use crate::measure::Problem;
use crate::quadrature::{domain_mass, integrate, QuadratureCfg};
use crate::risk::{kinks_1d, realize_with};

/// Reinterprets a shallow network as the depth-2 network `(d, H, 1)`; the flat
/// layouts coincide.
pub fn as_deep(theta: &ParamVector) -> Result<ParamVector> {
    match &theta.arch {
        Arch::Deep(_) => Ok(theta.clone()),
        Arch::Shallow(s) => {
            if s.width == 0 {
                return Err(Error::InvalidArch("a width-0 network has no hidden layer".into()));
            }
            let arch = DeepArch::new(vec![s.d, s.width, 1], s.activation)?;
            ParamVector::deep(arch, theta.values.clone())
        }
    }
}

fn deep_parts<'a>(theta: &'a ParamVector, xi: &[f64]) -> Result<&'a DeepArch> {
    let arch = theta.deep_arch()?;
    if xi.len() != arch.output_dim() {
        return Err(Error::dim("xi", arch.output_dim(), xi.len()));
    }
    Ok(arch)
}

pub fn v_xi(theta: &ParamVector, xi: &[f64]) -> Result<f64> {
    let arch = deep_parts(theta, xi)?;
    let depth = arch.depth();
    let mut v = 0.0;
    for k in 1..=depth {
        let (w, b) = arch.layer(&theta.values, k);
        v += k as f64 * b.iter().map(|t| t * t).sum::<f64>() + w.iter().map(|t| t * t).sum::<f64>();
    }
    let (_, bl) = arch.layer(&theta.values, depth);
    let inner: f64 = xi.iter().zip(bl).map(|(a, b)| a * b).sum();
    Ok(v - 2.0 * depth as f64 * inner)
}

pub fn grad_v_xi(theta: &ParamVector, xi: &[f64]) -> Result<Vec<f64>> {
    let arch = deep_parts(theta, xi)?;
    let depth = arch.depth();
    let mut g = vec![0.0; theta.len()];
    for k in 1..=depth {
        let off = arch.layer_offset(k);
        let nw = arch.dims[k] * arch.dims[k - 1];
        for t in off..off + nw {
            g[t] = 2.0 * theta.values[t];
        }
        for i in 0..arch.dims[k] {
            let t = off + nw + i;
            g[t] = 2.0 * k as f64 * theta.values[t];
            if k == depth {
                g[t] -= 2.0 * depth as f64 * xi[i];
            }
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

impl Sandwich {
    /// Holds up to a relative rounding slack.
    pub fn holds(&self) -> bool {
        let slack = 1e-12 * (1.0 + self.lower.abs().max(self.upper.abs()));
        self.lower <= self.value + slack && self.value <= self.upper + slack
    }
}

/// `1/2 ||theta||^2 - 2 L^2 ||xi||^2 <= V_xi(theta) <= 2 L ||theta||^2 + L ||xi||^2`.
pub fn sandwich(theta: &ParamVector, xi: &[f64]) -> Result<Sandwich> {
    let depth = deep_parts(theta, xi)?.depth() as f64;
    let t2: f64 = theta.values.iter().map(|t| t * t).sum();
    let x2: f64 = xi.iter().map(|t| t * t).sum();
    Ok(Sandwich {
        lower: 0.5 * t2 - 2.0 * depth * depth * x2,
        value: v_xi(theta, xi)?,
        upper: 2.0 * depth * t2 + depth * x2,
    })
}

/// `P(y) = L a^2 mu(box) prod_{p=0}^L (l_p + 1) (2y + 4 L^2 ||xi||^2 + 1)^{L-1}`.
pub fn p_bound(arch: &DeepArch, problem: &Problem, cfg: &QuadratureCfg, xi: &[f64], y: f64) -> Result<f64> {
    let depth = arch.depth() as f64;
    let amax = problem.domain.amax();
    let mass = domain_mass(problem, cfg)?;
    let prod: f64 = arch.dims.iter().map(|&l| l as f64 + 1.0).product();
    let x2: f64 = xi.iter().map(|t| t * t).sum();
    Ok(depth * amax * amax * mass * prod * (2.0 * y + 4.0 * depth * depth * x2 + 1.0).powi(arch.depth() as i32 - 1))
}

/// `eps / (2 (nu + eps) P(V_xi(theta0)))`.
pub fn step_threshold(theta0: &ParamVector, problem: &Problem, cfg: &QuadratureCfg, xi: &[f64], nu: f64, eps: f64) -> Result<f64> {
    let arch = deep_parts(theta0, xi)?;
    let p = p_bound(arch, problem, cfg, xi, v_xi(theta0, xi)?)?;
    Ok(eps / (2.0 * (nu + eps) * p))
}

/// `nu = int (f - xi)^2 dmu` for a scalar output.
pub fn constant_risk(problem: &Problem, cfg: &QuadratureCfg, xi: f64) -> Result<f64> {
    let v = integrate(problem, cfg, problem.target.breakpoints_1d(), |ns| {
        vec![ns.integrate(|x| {
            let r = problem.target.eval(x) - xi;
            r * r
        })]
    })?;
    Ok(v[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentitySides {
    /// `<grad V_xi, G>`.
    pub lhs: f64,
    /// `4L int (N - f)(N - xi) dmu`.
    pub rhs: f64,
}

impl IdentitySides {
    pub fn relative_gap(&self) -> f64 {
        (self.lhs - self.rhs).abs() / self.lhs.abs().max(self.rhs.abs()).max(1e-12)
    }
}

pub fn identity_sides(theta: &ParamVector, problem: &Problem, cfg: &QuadratureCfg, xi: f64) -> Result<IdentitySides> {
    let arch = deep_parts(theta, &[xi])?;
    let depth = arch.depth() as f64;
    let (_, g) = risk_and_gradient_population(theta, problem, cfg)?;
    let gv = grad_v_xi(theta, &[xi])?;
    let lhs: f64 = gv.iter().zip(&g).map(|(a, b)| a * b).sum();
    let act = arch.activation;
    let kinks = kinks_1d(theta, &problem.domain);
    let rhs = integrate(problem, cfg, &kinks, |ns| {
        vec![ns.integrate(|x| {
            let n = realize_with(theta, &act, x);
            (n - problem.target.eval(x)) * (n - xi)
        })]
    })?[0];
    Ok(IdentitySides {
        lhs,
        rhs: 4.0 * depth * rhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovPoint {
    pub step: usize,
    pub v: f64,
    pub risk: f64,
    pub theta_norm: f64,
    pub sandwich_lower: f64,
    pub sandwich_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub xi: f64,
    pub nu: f64,
    pub eps: f64,
    pub gamma_max: f64,
    pub threshold: f64,
    /// `sup gamma_n` is strictly below the threshold, so the monotonicity and
    /// reach assertions apply.
    pub below_threshold: bool,
    pub steps: usize,
    pub sandwich_violations: usize,
    /// Steps `n` before the first hit with `V(Theta_{n+1}) > V(Theta_n)` beyond rounding.
    pub monotonicity_violations: usize,
    /// First step with `L <= nu + eps`.
    pub first_hit: Option<usize>,
    pub min_risk: f64,
    pub final_theta: Vec<f64>,
    pub points: Vec<LyapunovPoint>,
    pub quadrature: String,
}

impl LyapunovReport {
    /// Assertions (i)-(iii); (ii) and (iii) only count when the step size is below the threshold.
    pub fn passed(&self) -> bool {
        self.sandwich_violations == 0
            && (!self.below_threshold || (self.monotonicity_violations == 0 && self.min_risk <= self.nu + self.eps))
    }
}

/// Plain gradient descent `Theta_{n+1} = Theta_n - gamma_n G(Theta_n)` with
/// `V_xi`, risk and norm tracked at every step; `points` keeps every `cadence`-th one.
pub fn lyapunov_gd_run(
    theta0: &ParamVector,
    problem: &Problem,
    cfg: &QuadratureCfg,
    xi: Option<f64>,
    gamma: &crate::optim::Schedule,
    steps: usize,
    eps: f64,
    cadence: usize,
) -> Result<LyapunovReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let theta0 = as_deep(theta0)?;
    let xi = match xi {
        Some(v) => v,
        None => crate::quadrature::best_constant(problem, cfg)?.0,
    };
    let nu = constant_risk(problem, cfg, xi)?;
    let threshold = step_threshold(&theta0, problem, cfg, &[xi], nu, eps)?;
    let gamma_max = (0..steps.max(1)).map(|n| gamma.at(n)).fold(0.0, f64::max);
    let cadence = cadence.max(1);
    let mut theta = theta0;
    let mut points = Vec::new();
    let mut sandwich_violations = 0;
    let mut monotonicity_violations = 0;
    let mut first_hit = None;
    let mut min_risk = f64::INFINITY;
    let mut prev_v: Option<f64> = None;
    for n in 0..=steps {
        let (risk, g) = risk_and_gradient_population(&theta, problem, cfg)?;
        let s = sandwich(&theta, &[xi])?;
        if !s.holds() {
            sandwich_violations += 1;
        }
        if let Some(pv) = prev_v {
            if first_hit.is_none() && s.value > pv + 1e-12 * pv.abs().max(1.0) {
                monotonicity_violations += 1;
            }
        }
        min_risk = min_risk.min(risk);
        if first_hit.is_none() && risk <= nu + eps {
            first_hit = Some(n);
        }
        if n % cadence == 0 || n == steps {
            points.push(LyapunovPoint {
                step: n,
                v: s.value,
                risk,
                theta_norm: norm(&theta.values),
                sandwich_lower: s.lower,
                sandwich_upper: s.upper,
            });
        }
        if n == steps {
            break;
        }
        if let Some(j) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(j));
        }
        let lr = gamma.at(n);
        for (t, gi) in theta.values.iter_mut().zip(&g) {
            *t -= lr * gi;
        }
        prev_v = Some(s.value);
    }
    Ok(LyapunovReport {
        xi,
        nu,
        eps,
        gamma_max,
        threshold,
        below_threshold: gamma_max < threshold,
        steps,
        sandwich_violations,
        monotonicity_violations,
        first_hit,
        min_risk,
        final_theta: theta.values,
        points,
        quadrature: cfg.fingerprint(),
    })
}
