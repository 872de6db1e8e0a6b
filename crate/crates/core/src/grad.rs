//! Generalized gradients, a central-difference oracle and the smoothed-ReLU family.
//!
//! Backpropagation uses `sigma'(0) = 0` for ReLU (`1_{(0,c)}` for clipped
//! variants and the classical derivative for RePU). A coordinate block whose
//! activation derivative vanishes at every point receives no contribution at
//! all, so gradients of strictly inactive neurons are exactly `+0.0`.

use serde::{Deserialize, Serialize};

use crate::ann::{deep_forward, Activation, ActivationKind, Arch, DeepArch, ParamVector, ShallowArch};
use crate::error::{Error, Result};
use crate::measure::{Pair, Problem, Target};
use crate::quadrature::{integrate, NodeSet, QuadratureCfg};
use crate::risk::{check_theta, kinks_1d, shallow_kinks_1d};

/// Returns `N(x)` and leaves the pre-activations in `zbuf`.
#[inline]
fn shallow_forward<A: Activation>(arch: &ShallowArch, values: &[f64], act: &A, x: &[f64], zbuf: &mut Vec<f64>) -> f64 {
    let (d, h) = (arch.d, arch.width);
    zbuf.clear();
    let mut n = values[d * h + 2 * h];
    for i in 0..h {
        let mut z = values[d * h + i];
        for j in 0..d {
            z += values[i * d + j] * x[j];
        }
        zbuf.push(z);
        n += values[d * h + h + i] * act.value(z);
    }
    n
}

/// Adds `scale * dN/dtheta (x)` to `out`.
#[inline]
fn shallow_backward<A: Activation>(arch: &ShallowArch, values: &[f64], act: &A, x: &[f64], z: &[f64], scale: f64, out: &mut [f64]) {
    let (d, h) = (arch.d, arch.width);
    for i in 0..h {
        out[d * h + h + i] += scale * act.value(z[i]);
        let ds = act.deriv(z[i]);
        if ds != 0.0 {
            let t = scale * values[d * h + h + i] * ds;
            out[d * h + i] += t;
            for j in 0..d {
                out[i * d + j] += t * x[j];
            }
        }
    }
    out[d * h + 2 * h] += scale;
}

/// Reverse-mode pass for a deep network with scalar output.
fn deep_backward<A: Activation>(arch: &DeepArch, values: &[f64], act: &A, x: &[f64], pre: &[Vec<f64>], scale: f64, out: &mut [f64]) {
    let depth = arch.depth();
    let mut delta = vec![scale];
    for k in (1..=depth).rev() {
        let off = arch.layer_offset(k);
        let (rows, cols) = (arch.dims[k], arch.dims[k - 1]);
        let input: Vec<f64> = if k == 1 {
            x.to_vec()
        } else {
            pre[k - 2].iter().map(|&t| act.value(t)).collect()
        };
        for i in 0..rows {
            if delta[i] == 0.0 {
                continue;
            }
            for j in 0..cols {
                out[off + i * cols + j] += delta[i] * input[j];
            }
            out[off + rows * cols + i] += delta[i];
        }
        if k > 1 {
            let w = &values[off..off + rows * cols];
            let mut next = vec![0.0; cols];
            for (j, nj) in next.iter_mut().enumerate() {
                let ds = act.deriv(pre[k - 2][j]);
                if ds == 0.0 {
                    continue;
                }
                let mut s = 0.0;
                for i in 0..rows {
                    s += w[i * cols + j] * delta[i];
                }
                *nj = s * ds;
            }
            delta = next;
        }
    }
}

/// Writes `dN/dtheta (x)` into `row` and returns `N(x)`.
pub(crate) fn shallow_point_jacobian<A: Activation>(
    arch: &ShallowArch,
    values: &[f64],
    act: &A,
    x: &[f64],
    zbuf: &mut Vec<f64>,
    row: &mut [f64],
) -> f64 {
    row.fill(0.0);
    let n = shallow_forward(arch, values, act, x, zbuf);
    shallow_backward(arch, values, act, x, zbuf, 1.0, row);
    n
}

/// Accumulates `sum_k w_k |N(x_k) - y_k|^2` and its gradient into `grad`.
pub(crate) fn accumulate<'a, A, I>(theta: &ParamVector, act: &A, points: I, grad: &mut [f64]) -> f64
where
    A: Activation,
    I: Iterator<Item = (&'a [f64], f64, f64)>,
{
    let mut loss = 0.0;
    match &theta.arch {
        Arch::Shallow(s) => {
            let mut z = Vec::with_capacity(s.width);
            for (x, y, w) in points {
                let r = shallow_forward(s, &theta.values, act, x, &mut z) - y;
                loss += w * r * r;
                shallow_backward(s, &theta.values, act, x, &z, 2.0 * w * r, grad);
            }
        }
        Arch::Deep(d) => {
            for (x, y, w) in points {
                let pre = deep_forward(d, act, &theta.values, x);
                let r = pre[d.depth() - 1][0] - y;
                loss += w * r * r;
                deep_backward(d, &theta.values, act, x, &pre, 2.0 * w * r, grad);
            }
        }
    }
    loss
}

/// Risk and generalized gradient on a fixed node set.
pub(crate) fn risk_grad_on_nodes<A: Activation>(theta: &ParamVector, act: &A, target: &Target, nodes: &NodeSet) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; theta.len()];
    let pts = nodes.iter().map(|(x, w)| (x, target.eval(x), w));
    let loss = accumulate(theta, act, pts, &mut g);
    (loss, g)
}

/// Generalized gradient of the mini-batch empirical risk.
pub fn gen_gradient_empirical(theta: &ParamVector, batch: &[Pair]) -> Result<Vec<f64>> {
    gradient_empirical_with(theta, &theta.arch.activation(), batch)
}

pub fn gradient_empirical_with<A: Activation>(theta: &ParamVector, act: &A, batch: &[Pair]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let d = theta.arch.input_dim();
    if let Some(p) = batch.iter().find(|p| p.x.len() != d) {
        return Err(Error::dim("batch point", d, p.x.len()));
    }
    check_scalar_output(theta)?;
    let m = 1.0 / batch.len() as f64;
    let mut g = vec![0.0; theta.len()];
    accumulate(theta, act, batch.iter().map(|p| (p.x.as_slice(), p.y, m)), &mut g);
    Ok(g)
}

fn check_scalar_output(theta: &ParamVector) -> Result<()> {
    if let Arch::Deep(d) = &theta.arch {
        if d.output_dim() != 1 {
            return Err(Error::dim("network output dimension", 1, d.output_dim()));
        }
    }
    Ok(())
}

/// Generalized gradient of the population risk.
pub fn gen_gradient_population(theta: &ParamVector, problem: &Problem, cfg: &QuadratureCfg) -> Result<Vec<f64>> {
    check_theta(theta, problem.dim())?;
    let act = theta.arch.activation();
    let kinks = kinks_1d(theta, &problem.domain);
    integrate(problem, cfg, &kinks, |ns| risk_grad_on_nodes(theta, &act, &problem.target, ns).1)
}

/// Population risk and gradient in one pass.
pub fn risk_and_gradient_population(theta: &ParamVector, problem: &Problem, cfg: &QuadratureCfg) -> Result<(f64, Vec<f64>)> {
    check_theta(theta, problem.dim())?;
    let act = theta.arch.activation();
    let kinks = kinks_1d(theta, &problem.domain);
    let mut v = integrate(problem, cfg, &kinks, |ns| {
        let (l, mut g) = risk_grad_on_nodes(theta, &act, &problem.target, ns);
        g.push(l);
        g
    })?;
    let risk = v.pop().unwrap();
    Ok((risk, v))
}

/// Per-coordinate step `h_j = max(1e-6, 1e-7 |theta_j|)`.
pub fn fd_step(theta_j: f64) -> f64 {
    1e-6f64.max(1e-7 * theta_j.abs())
}

/// Central-difference gradient with the default per-coordinate step.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(theta: &[f64], f: F) -> Vec<f64> {
    fd_gradient_with(theta, f, fd_step)
}

pub fn fd_gradient_with<F, H>(theta: &[f64], f: F, step: H) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
    H: Fn(f64) -> f64,
{
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|j| {
            let h = step(theta[j]);
            t[j] = theta[j] + h;
            let up = f(&t);
            t[j] = theta[j] - h;
            let down = f(&t);
            t[j] = theta[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// C^1 ramp `R_r`: zero below `1/r`, identity above `2/r`, and the cubic
/// `(5 s^2 - 3 s^3) / r` with `s = r x - 1` in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothRamp {
    pub r: f64,
}

impl SmoothRamp {
    pub const LOWER: f64 = 1.0;
    pub const UPPER: f64 = 2.0;

    pub fn new(r: f64) -> Result<Self> {
        if !(r >= 1.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!("smoothing parameter r must be >= 1, got {r}")));
        }
        Ok(SmoothRamp { r })
    }

    /// Pre-activation values where the ramp changes formula.
    pub fn breakpoints(&self) -> [f64; 2] {
        [Self::LOWER / self.r, Self::UPPER / self.r]
    }
}

impl Activation for SmoothRamp {
    #[inline]
    fn value(&self, x: f64) -> f64 {
        let r = self.r;
        if x <= Self::LOWER / r {
            0.0
        } else if x >= Self::UPPER / r {
            x
        } else {
            let s = r * x - 1.0;
            (5.0 * s * s - 3.0 * s * s * s) / r
        }
    }

    #[inline]
    fn deriv(&self, x: f64) -> f64 {
        let r = self.r;
        if x <= Self::LOWER / r {
            0.0
        } else if x >= Self::UPPER / r {
            1.0
        } else {
            let s = r * x - 1.0;
            10.0 * s - 9.0 * s * s
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothLimitReport {
    pub rs: Vec<f64>,
    /// `||grad L_r(theta) - G(theta)||` for each `r`.
    pub discrepancies: Vec<f64>,
    pub strictly_decreasing: bool,
}

/// Gradient of the population risk of the `R_r`-smoothed shallow network.
pub fn smoothed_gradient_population(theta: &ParamVector, problem: &Problem, cfg: &QuadratureCfg, r: f64) -> Result<Vec<f64>> {
    check_theta(theta, problem.dim())?;
    let arch = theta.shallow_arch()?;
    if arch.activation != ActivationKind::Relu {
        return Err(Error::Precondition("the smoothed family approximates plain ReLU only".into()));
    }
    let ramp = SmoothRamp::new(r)?;
    let kinks = shallow_kinks_1d(arch, &theta.values, &arch.activation, &problem.domain, &ramp.breakpoints());
    integrate(problem, cfg, &kinks, |ns| risk_grad_on_nodes(theta, &ramp, &problem.target, ns).1)
}

/// Compares smoothed gradients along an increasing `r` schedule with the generalized gradient.
pub fn smooth_limit_check(theta: &ParamVector, problem: &Problem, cfg: &QuadratureCfg, rs: &[f64]) -> Result<SmoothLimitReport> {
    if rs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("r schedule must be strictly increasing".into()));
    }
    let g = gen_gradient_population(theta, problem, cfg)?;
    let mut discrepancies = Vec::with_capacity(rs.len());
    for &r in rs {
        let gr = smoothed_gradient_population(theta, problem, cfg, r)?;
        let diff = gr.iter().zip(&g).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        discrepancies.push(diff);
    }
    let strictly_decreasing = discrepancies.windows(2).all(|w| w[1] < w[0]);
    Ok(SmoothLimitReport {
        rs: rs.to_vec(),
        discrepancies,
        strictly_decreasing,
    })
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|t| t * t).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{DomainBox, Measure};

    #[test]
    fn hand_gradient() {
        let th = ParamVector::shallow(ShallowArch::relu(1, 1), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let g = gen_gradient_empirical(&th, &[Pair { x: vec![1.0], y: 0.0 }]).unwrap();
        assert_eq!(g, vec![2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn inactive_neuron_zero() {
        let th = ParamVector::shallow(ShallowArch::relu(1, 2), vec![1.0, -1.0, 0.0, -0.5, 1.0, 2.0, 0.1]).unwrap();
        let batch = vec![Pair { x: vec![0.2], y: 3.0 }, Pair { x: vec![0.9], y: -1.0 }];
        let g = gen_gradient_empirical(&th, &batch).unwrap();
        assert_eq!(g[1].to_bits(), 0.0f64.to_bits());
        assert_eq!(g[3].to_bits(), 0.0f64.to_bits());
        let p = Problem::square_unit();
        let g = gen_gradient_population(&th, &p, &QuadratureCfg::default()).unwrap();
        assert_eq!(g[1].to_bits(), 0.0f64.to_bits());
        assert_eq!(g[3].to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn zero_at_exact_representation() {
        let p = Problem::new(
            DomainBox::unit(1),
            Measure::uniform(),
            crate::measure::Target::linear(vec![2.0], -0.5),
        )
        .unwrap();
        let th = ParamVector::shallow(ShallowArch::relu(1, 1), vec![1.0, 1.0, 2.0, -2.5]).unwrap();
        let g = gen_gradient_population(&th, &p, &QuadratureCfg::default()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-14), "{g:?}");
    }

    #[test]
    fn fd_on_quadratic_and_linear() {
        let th = [0.3, -2.0, 1.5, 0.0];
        let g = fd_gradient(&th, |t| t.iter().map(|v| v * v).sum());
        for (a, b) in g.iter().zip(&th) {
            assert!((a - 2.0 * b).abs() < 1e-8, "{a} {b}");
        }
        let g = fd_gradient(&th, |t| 3.0 * t[0] - t[2]);
        assert!((g[0] - 3.0).abs() < 1e-9 && (g[2] + 1.0).abs() < 1e-9 && g[1] == 0.0);
    }

    #[test]
    fn ramp_properties() {
        for r in [1.0, 3.0, 10.0, 1000.0] {
            let ramp = SmoothRamp::new(r).unwrap();
            for k in 0..2000 {
                let x = -1.0 + 3.0 * k as f64 / 2000.0;
                let v = ramp.value(x);
                assert!(v >= 0.0 && v <= x.max(0.0) + 1e-15, "r={r} x={x}");
                let d = ramp.deriv(x);
                assert!((0.0..=25.0 / 9.0 + 1e-12).contains(&d));
            }
            let [lo, hi] = ramp.breakpoints();
            assert_eq!(ramp.value(lo), 0.0);
            assert!((ramp.value(hi) - hi).abs() < 1e-15);
            assert!((ramp.deriv(hi - 1e-12) - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn smooth_limit_identity_net() {
        let p = Problem::new(DomainBox::unit(1), Measure::uniform(), crate::measure::Target::constant(0.0)).unwrap();
        let th = ParamVector::shallow(ShallowArch::relu(1, 1), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let rep = smooth_limit_check(&th, &p, &QuadratureCfg::default(), &[10.0, 100.0, 1000.0]).unwrap();
        assert!(rep.strictly_decreasing, "{rep:?}");
    }

    #[test]
    fn deep_matches_fd() {
        let arch = DeepArch::relu(vec![1, 3, 2, 1]).unwrap();
        let vals: Vec<f64> = (0..arch.param_count()).map(|k| ((k * 7919) % 13) as f64 / 6.0 - 1.0).collect();
        let th = ParamVector::deep(arch.clone(), vals.clone()).unwrap();
        let batch = vec![Pair { x: vec![0.37], y: 0.2 }, Pair { x: vec![0.81], y: -0.4 }];
        let g = gen_gradient_empirical(&th, &batch).unwrap();
        let fd = fd_gradient(&vals, |t| {
            let p = ParamVector::deep(arch.clone(), t.to_vec()).unwrap();
            crate::risk::risk_empirical(&p, &batch).unwrap()
        });
        for (a, b) in g.iter().zip(&fd) {
            assert!(relative_error(*a, *b, 1e-3) < 1e-6, "{a} vs {b}");
        }
    }
}
