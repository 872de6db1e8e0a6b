//! Population and empirical risk.

use crate::ann::{Activation, ActivationKind, Arch, DeepArch, ParamVector, ShallowArch, ShallowView};
use crate::error::{Error, Result};
use crate::measure::{DomainBox, Pair, Problem, Target};
use crate::quadrature::{cut_points, integrate, NodeSet, QuadratureCfg};

pub use crate::fit::{global_inf_estimate, InfEstimate, InfOptions};

/// Points of `[a, b]` where the 1D realization may fail to be smooth.
pub fn kinks_1d(theta: &ParamVector, domain: &DomainBox) -> Vec<f64> {
    match &theta.arch {
        Arch::Shallow(s) => shallow_kinks_1d(s, &theta.values, &s.activation, domain, &[]),
        Arch::Deep(d) => deep_kinks_1d(d, &theta.values, domain),
    }
}

/// Kinks of a 1D shallow network: solutions of `w_i x + b_i = level` for each
/// activation level (0, the clip value, and any `extra_levels`).
pub(crate) fn shallow_kinks_1d(
    arch: &ShallowArch,
    values: &[f64],
    act: &ActivationKind,
    domain: &DomainBox,
    extra_levels: &[f64],
) -> Vec<f64> {
    if arch.d != 1 {
        return Vec::new();
    }
    let view = ShallowView::new(arch, values).expect("length checked by caller");
    let mut levels = vec![0.0];
    if act.clip().is_finite() {
        levels.push(act.clip());
    }
    levels.extend_from_slice(extra_levels);
    let mut out = Vec::new();
    for i in 0..view.width {
        let w = view.weights[i];
        if w == 0.0 {
            continue;
        }
        for &lv in &levels {
            let x = (lv - view.inner_bias[i]) / w;
            if x > domain.a && x < domain.b {
                out.push(x);
            }
        }
    }
    out
}

/// Kinks of a 1D deep network, found layer by layer: between existing cuts every
/// hidden pre-activation is smooth, so its level crossings are located exactly
/// (linear pieces) or by bisection (power activations).
pub(crate) fn deep_kinks_1d(arch: &DeepArch, values: &[f64], domain: &DomainBox) -> Vec<f64> {
    if arch.input_dim() != 1 {
        return Vec::new();
    }
    let act = arch.activation;
    let mut levels = vec![0.0];
    if act.clip().is_finite() {
        levels.push(act.clip());
    }
    let sub = if act.power() == 1 { 1 } else { 16 };
    let mut cuts = vec![domain.a, domain.b];
    for k in 1..arch.depth() {
        let pre = |x: f64| -> Vec<f64> {
            let mut z = crate::ann::deep_forward_partial(arch, &act, values, &[x], k);
            z.pop().unwrap()
        };
        let mut found = Vec::new();
        for piece in cuts.windows(2) {
            let (l, r) = (piece[0], piece[1]);
            let h = (r - l) / sub as f64;
            for s in 0..sub {
                let x0 = l + s as f64 * h;
                let x1 = if s + 1 == sub { r } else { x0 + h };
                let z0 = pre(x0);
                let z1 = pre(x1);
                for unit in 0..arch.dims[k] {
                    for &lv in &levels {
                        let (g0, g1) = (z0[unit] - lv, z1[unit] - lv);
                        if g0 * g1 >= 0.0 {
                            continue;
                        }
                        let root = if sub == 1 {
                            x0 + (x1 - x0) * g0 / (g0 - g1)
                        } else {
                            let (mut lo, mut hi, mut glo) = (x0, x1, g0);
                            for _ in 0..80 {
                                let mid = 0.5 * (lo + hi);
                                let gm = pre(mid)[unit] - lv;
                                if (gm < 0.0) == (glo < 0.0) {
                                    lo = mid;
                                    glo = gm;
                                } else {
                                    hi = mid;
                                }
                            }
                            0.5 * (lo + hi)
                        };
                        found.push(root);
                    }
                }
            }
        }
        found.extend_from_slice(&cuts);
        cuts = cut_points(domain.a, domain.b, &found);
    }
    cuts.into_iter().filter(|&x| x > domain.a && x < domain.b).collect()
}

pub(crate) fn check_theta(theta: &ParamVector, d: usize) -> Result<()> {
    if theta.arch.input_dim() != d {
        return Err(Error::dim("network input dimension", d, theta.arch.input_dim()));
    }
    if let Arch::Deep(da) = &theta.arch {
        if da.output_dim() != 1 {
            return Err(Error::dim("network output dimension", 1, da.output_dim()));
        }
    }
    Ok(())
}

/// Realization at `x` under an arbitrary activation (dimensions assumed checked).
#[inline]
pub(crate) fn realize_with<A: Activation>(theta: &ParamVector, act: &A, x: &[f64]) -> f64 {
    match &theta.arch {
        Arch::Shallow(s) => ShallowView::new(s, &theta.values).unwrap().eval(act, x),
        Arch::Deep(d) => crate::ann::deep_forward(d, act, &theta.values, x).pop().unwrap()[0],
    }
}

/// `sum_k w_k (N(x_k) - f(x_k))^2`.
pub(crate) fn risk_on_nodes(theta: &ParamVector, target: &Target, nodes: &NodeSet) -> f64 {
    let act = theta.arch.activation();
    nodes
        .iter()
        .map(|(x, w)| {
            let r = realize_with(theta, &act, x) - target.eval(x);
            w * r * r
        })
        .sum()
}

/// `int (N_theta - f)^2 dmu`.
pub fn risk_population(theta: &ParamVector, problem: &Problem, cfg: &QuadratureCfg) -> Result<f64> {
    check_theta(theta, problem.dim())?;
    let kinks = kinks_1d(theta, &problem.domain);
    let v = integrate(problem, cfg, &kinks, |ns| vec![risk_on_nodes(theta, &problem.target, ns)])?;
    Ok(v[0])
}

/// `(1/M) sum_m |N_theta(X_m) - Y_m|^2`.
pub fn risk_empirical(theta: &ParamVector, batch: &[Pair]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let d = theta.arch.input_dim();
    let mut total = 0.0;
    for p in batch {
        if p.x.len() != d {
            return Err(Error::dim("batch point", d, p.x.len()));
        }
        let r = theta.realize(&p.x)? - p.y;
        total += r * r;
    }
    Ok(total / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Measure;

    fn relu_id() -> ParamVector {
        ParamVector::shallow(ShallowArch::relu(1, 1), vec![1.0, 0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn population_examples() {
        let cfg = QuadratureCfg::default();
        let lin = Problem::new(DomainBox::unit(1), Measure::uniform(), Target::linear(vec![1.0], 0.0)).unwrap();
        assert!(risk_population(&relu_id(), &lin, &cfg).unwrap().abs() < 1e-16);
        let zero = Problem::new(DomainBox::unit(1), Measure::uniform(), Target::constant(0.0)).unwrap();
        assert!((risk_population(&relu_id(), &zero, &cfg).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let c = ParamVector::shallow(ShallowArch::relu(1, 0), vec![1.0 / 3.0]).unwrap();
        let r = risk_population(&c, &Problem::square_unit(), &cfg).unwrap();
        assert!((r - 4.0 / 45.0).abs() < 1e-15);
    }

    #[test]
    fn empirical_examples() {
        let th = relu_id();
        let batch = vec![Pair { x: vec![0.7], y: 0.7 }, Pair { x: vec![-1.0], y: 0.0 }];
        assert_eq!(risk_empirical(&th, &batch).unwrap(), 0.0);
        let zero = ParamVector::shallow(ShallowArch::relu(1, 1), vec![0.0; 4]).unwrap();
        let batch = vec![Pair { x: vec![0.0], y: 1.0 }, Pair { x: vec![0.0], y: -1.0 }];
        assert_eq!(risk_empirical(&zero, &batch).unwrap(), 1.0);
        assert_eq!(risk_empirical(&th, &[Pair { x: vec![2.0], y: 0.0 }]).unwrap(), 4.0);
        assert!(matches!(risk_empirical(&th, &[]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn deep_kinks_found() {
        // N(x) = relu(relu(x - 0.3) * 2 - 0.8): kinks at 0.3 and 0.7.
        let arch = DeepArch::relu(vec![1, 1, 1, 1]).unwrap();
        let th = ParamVector::deep(arch, vec![1.0, -0.3, 2.0, -0.8, 1.0, 0.0]).unwrap();
        let k = kinks_1d(&th, &DomainBox::unit(1));
        assert_eq!(k.len(), 2);
        assert!((k[0] - 0.3).abs() < 1e-15 && (k[1] - 0.7).abs() < 1e-14);
        let zero = Problem::new(DomainBox::unit(1), Measure::uniform(), Target::constant(0.0)).unwrap();
        let r = risk_population(&th, &zero, &QuadratureCfg::default()).unwrap();
        // int_{0.7}^1 (2x - 1.4)^2 dx = 4 * 0.3^3 / 3
        assert!((r - 0.036).abs() < 1e-15);
    }
}
