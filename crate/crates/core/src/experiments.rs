//! End-to-end experiments: the non-convergence sweep, the hierarchy of
//! local-minimum risk levels, the near-optimality check, trap invariance under
//! every optimizer and the Clarke bound audit.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann::{ParamVector, ShallowArch};
use crate::error::{Error, Result};
use crate::fit::{global_inf_estimate, InfEstimate, InfOptions};
use crate::grad::{gen_gradient_empirical, gen_gradient_population, norm, risk_and_gradient_population};
use crate::landscape::{add_neuron_improve, embed_shallow, inactive_set, trap_probability, trapped_set, trapping_bound, InitSpec};
use crate::measure::{sample_with, Pair, Problem};
use crate::optim::{run, OptimizerConfig, OptimizerKind, Snapshot, TrainTrace};
use crate::quadrature::{best_constant, QuadratureCfg};
use crate::risk::risk_population;
use crate::rng::{stream_id, stream_rng, tags};

pub const SCHEMA_VERSION: u32 = 1;

/// Candidate budget used when chaining width estimates through neuron addition.
const CHAIN_CANDIDATES: usize = 256;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Estimates `m_H` for every width in `widths`. When `chain` is set and
/// `H - 1` was estimated first, the best width-`(H-1)` point plus one added
/// neuron is included as a warm start, so the estimates decrease strictly
/// whenever neuron addition finds an improvement.
pub fn inf_ladder(problem: &Problem, widths: &[usize], opts: &InfOptions, chain: bool) -> Result<BTreeMap<usize, InfEstimate>> {
    let mut out: BTreeMap<usize, InfEstimate> = BTreeMap::new();
    let mut ws: Vec<usize> = widths.to_vec();
    ws.sort_unstable();
    ws.dedup();
    for h in ws {
        let warm = match (chain, h.checked_sub(1).and_then(|p| out.get(&p))) {
            (true, Some(prev)) => {
                let imp = add_neuron_improve(&prev.theta, problem, &opts.cfg, CHAIN_CANDIDATES, opts.seed ^ h as u64, 0.0)?;
                imp.improved.then_some(imp.theta)
            }
            _ => None,
        };
        let o = InfOptions {
            warm_start: warm,
            ..opts.clone()
        };
        out.insert(h, global_inf_estimate(problem, h, &o)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfSettings {
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_adam_iters")]
    pub adam_iters: usize,
    #[serde(default = "default_lm_iters")]
    pub lm_iters: usize,
    #[serde(default = "default_chain")]
    pub chain: bool,
}

fn default_restarts() -> usize {
    32
}
fn default_adam_iters() -> usize {
    1500
}
fn default_lm_iters() -> usize {
    200
}
fn default_chain() -> bool {
    true
}

impl Default for InfSettings {
    fn default() -> Self {
        InfSettings {
            restarts: 32,
            adam_iters: 1500,
            lm_iters: 200,
            chain: true,
        }
    }
}

impl InfSettings {
    pub fn options(&self, seed: u64, cfg: &QuadratureCfg) -> InfOptions {
        InfOptions {
            restarts: self.restarts,
            adam_iters: self.adam_iters,
            lm_iters: self.lm_iters,
            seed,
            cfg: cfg.clone(),
            ..InfOptions::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub widths: Vec<usize>,
    pub trials: usize,
    pub steps: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    pub optimizer: OptimizerConfig,
    pub init: InitSpec,
    /// Fixed margin; when absent, `(m_{H-1} - m_H) / 2` per width.
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default = "default_p_samples")]
    pub p_samples: usize,
    #[serde(default)]
    pub inf: InfSettings,
    /// Snapshot cadence of the per-trial traces.
    #[serde(default = "default_cadence")]
    pub cadence: usize,
}

fn default_batch() -> usize {
    32
}
fn default_p_samples() -> usize {
    1_000_000
}
fn default_cadence() -> usize {
    500
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub width: usize,
    pub trial: usize,
    pub trapped_at_init: bool,
    pub trapped_final: Vec<usize>,
    pub final_risk: f64,
    pub grad_norm: f64,
    /// `final_risk > m_H + eps`.
    pub nonconverged: bool,
    #[serde(skip)]
    pub trace: Option<TrainTrace>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WidthSummary {
    pub width: usize,
    pub trials: usize,
    pub trapped: usize,
    pub trapped_fraction: f64,
    pub predicted_trapped: f64,
    pub exp_bound: f64,
    pub sigma: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    pub m_hat: f64,
    pub m_hat_prev: f64,
    pub eps: f64,
    pub nonconverged: usize,
    pub nonconverged_fraction: f64,
    pub nonconverged_sigma: f64,
    pub trapped_nonconverged: usize,
    pub trapped_stuck: usize,
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub seed: u64,
    pub p_hat: f64,
    pub p_stderr: f64,
    pub p_samples: usize,
    pub quadrature: String,
    pub widths: Vec<WidthSummary>,
    pub trials: Vec<TrialOutcome>,
    pub checks: Vec<Check>,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Per-width summary, one row per width.
    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.widths {
            w.serialize(s)?;
        }
        into_string(w)
    }

    /// One row per trial.
    pub fn trials_csv(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row<'a> {
            width: usize,
            trial: usize,
            trapped_at_init: bool,
            trapped_final: &'a str,
            final_risk: f64,
            grad_norm: f64,
            nonconverged: bool,
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for t in &self.trials {
            let tf = t.trapped_final.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
            w.serialize(Row {
                width: t.width,
                trial: t.trial,
                trapped_at_init: t.trapped_at_init,
                trapped_final: &tf,
                final_risk: t.final_risk,
                grad_norm: t.grad_norm,
                nonconverged: t.nonconverged,
            })?;
        }
        into_string(w)
    }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Noise-free mini-batch gradient with one generator per `(width, trial, step)`.
fn batch_source<'a>(
    problem: &'a Problem,
    arch: &'a ShallowArch,
    batch: usize,
    width: usize,
    trial: usize,
) -> impl FnMut(&[f64], usize, u64) -> Result<Vec<f64>> + 'a {
    move |theta: &[f64], n: usize, seed: u64| {
        let mut rng = stream_rng(seed, stream_id(&[tags::BATCH, width as u64, trial as u64, n as u64]));
        let xs = sample_with(&problem.domain, &problem.measure, batch, &mut rng)?;
        let pairs: Vec<Pair> = xs
            .into_iter()
            .map(|x| {
                let y = problem.target.eval(&x);
                Pair { x, y }
            })
            .collect();
        let th = ParamVector::shallow(arch.clone(), theta.to_vec())?;
        gen_gradient_empirical(&th, &pairs)
    }
}

fn shallow_observer<'a>(
    arch: &'a ShallowArch,
    problem: &'a Problem,
    steps: usize,
    keep_theta: bool,
) -> impl FnMut(usize, &[f64], Option<f64>) -> Result<Snapshot> + 'a {
    move |n, theta, gn| {
        let th = ParamVector::shallow(arch.clone(), theta.to_vec())?;
        let mut s = Snapshot::bare(n, theta, gn);
        if !keep_theta && n != steps {
            s.theta = None;
        }
        s.inactive = inactive_set(&th, &problem.domain)?;
        s.strictly_trapped = trapped_set(&th, &problem.domain)?;
        Ok(s)
    }
}

/// Trains `trials` independent networks per width from the scaled init with
/// mini-batch gradients and classifies each run against `m_H + eps`.
pub fn nonconvergence_sweep(problem: &Problem, sc: &SweepConfig, cfg: &QuadratureCfg, seed: u64, keep_traces: bool) -> Result<SweepReport> {
    if problem.dim() != 1 {
        return Err(Error::Precondition("the sweep is defined for d = 1".into()));
    }
    if sc.widths.is_empty() || sc.widths.contains(&0) || sc.trials == 0 || sc.batch == 0 {
        return Err(Error::InvalidArgument(
            "widths must be positive and trials, batch at least 1".into(),
        ));
    }
    sc.optimizer.validate()?;
    sc.init.validate()?;
    let mut all_widths = vec![0];
    for &h in &sc.widths {
        all_widths.push(h - 1);
        all_widths.push(h);
    }
    let ladder = inf_ladder(problem, &all_widths, &sc.inf.options(seed, cfg), sc.inf.chain)?;
    let eps_of = |h: usize| sc.eps.unwrap_or((ladder[&(h - 1)].value - ladder[&h].value) / 2.0);
    let hmax = *sc.widths.iter().max().unwrap();
    let eps_max = eps_of(hmax);
    let floor = 1e-12 * ladder[&0].value.max(f64::MIN_POSITIVE);
    if !(ladder[&hmax].value > eps_max.max(floor) && eps_max > 0.0) {
        return Err(Error::Precondition(format!(
            "target is (numerically) representable at width {hmax}: m_hat = {:e}, eps = {:e}",
            ladder[&hmax].value, eps_max
        )));
    }
    let pe = trap_probability(&sc.init, &problem.domain, hmax, sc.p_samples, seed)?;

    let jobs: Vec<(usize, usize)> = sc.widths.iter().flat_map(|&h| (0..sc.trials).map(move |t| (h, t))).collect();
    let outcomes: Vec<Result<TrialOutcome>> = jobs
        .par_iter()
        .map(|&(h, t)| {
            let arch = ShallowArch::new(1, h, problem_act())?;
            let mut rng = stream_rng(seed, stream_id(&[tags::INIT, h as u64, t as u64]));
            let th0 = sc.init.init_shallow(&arch, &mut rng);
            let trapped_at_init = !trapped_set(&th0, &problem.domain)?.is_empty();
            let mut source = batch_source(problem, &arch, sc.batch, h, t);
            let mut obs = shallow_observer(&arch, problem, sc.steps, false);
            let trace = run(&sc.optimizer, &th0.values, &mut source, sc.steps, seed, sc.cadence, &mut obs)?;
            let th = ParamVector::shallow(arch.clone(), trace.final_theta.clone())?;
            let (risk, g) = risk_and_gradient_population(&th, problem, cfg)?;
            let m = ladder[&h].value;
            Ok(TrialOutcome {
                width: h,
                trial: t,
                trapped_at_init,
                trapped_final: trapped_set(&th, &problem.domain)?,
                final_risk: risk,
                grad_norm: norm(&g),
                nonconverged: risk > m + eps_of(h),
                trace: keep_traces.then_some(trace),
            })
        })
        .collect();
    let trials: Vec<TrialOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let mut widths = Vec::new();
    let mut checks = Vec::new();
    for &h in &sc.widths {
        let ts: Vec<&TrialOutcome> = trials.iter().filter(|t| t.width == h).collect();
        let n = ts.len() as f64;
        let trapped = ts.iter().filter(|t| t.trapped_at_init).count();
        let nonconv = ts.iter().filter(|t| t.nonconverged).count();
        let m_hat = ladder[&h].value;
        let m_prev = ladder[&(h - 1)].value;
        let eps = eps_of(h);
        let (exp_bound, predicted) = trapping_bound(pe.p, h)?;
        let sigma = (predicted * (1.0 - predicted) / n).sqrt();
        let frac = trapped as f64 / n;
        let ncf = nonconv as f64 / n;
        let tol = 1e-9 * m_prev.max(1e-12);
        let trapped_nonconverged = ts.iter().filter(|t| t.trapped_at_init && t.nonconverged).count();
        let trapped_stuck = ts.iter().filter(|t| t.trapped_at_init && t.final_risk >= m_prev - tol).count();
        checks.push(Check::new(
            &format!("H={h}: trapped fraction within 4 sigma"),
            (frac - predicted).abs() <= 4.0 * sigma,
            format!("observed {frac}, predicted {predicted}, sigma {sigma}"),
        ));
        checks.push(Check::new(
            &format!("H={h}: trapped trials end above m_H + eps"),
            trapped_nonconverged == trapped,
            format!("{trapped_nonconverged} of {trapped}"),
        ));
        checks.push(Check::new(
            &format!("H={h}: trapped trials end at or above m_(H-1)"),
            trapped_stuck == trapped,
            format!("{trapped_stuck} of {trapped}"),
        ));
        widths.push(WidthSummary {
            width: h,
            trials: ts.len(),
            trapped,
            trapped_fraction: frac,
            predicted_trapped: predicted,
            exp_bound,
            sigma,
            band_lo: (predicted - 4.0 * sigma).max(0.0),
            band_hi: (predicted + 4.0 * sigma).min(1.0),
            m_hat,
            m_hat_prev: m_prev,
            eps,
            nonconverged: nonconv,
            nonconverged_fraction: ncf,
            nonconverged_sigma: (ncf * (1.0 - ncf) / n).sqrt(),
            trapped_nonconverged,
            trapped_stuck,
            budget_exhausted: ladder[&h].budget_exhausted || ladder[&(h - 1)].budget_exhausted,
        });
    }
    let mut by_width: Vec<&WidthSummary> = widths.iter().collect();
    by_width.sort_by_key(|s| s.width);
    let trend = |f: fn(&WidthSummary) -> f64| by_width.windows(2).all(|w| f(w[1]) >= f(w[0]));
    checks.push(Check::new(
        "trapped fraction non-decreasing in H",
        trend(|s| s.trapped_fraction),
        by_width
            .iter()
            .map(|s| format!("{}:{}", s.width, s.trapped_fraction))
            .collect::<Vec<_>>()
            .join(" "),
    ));
    checks.push(Check::new(
        "non-convergence fraction non-decreasing in H",
        trend(|s| s.nonconverged_fraction),
        by_width
            .iter()
            .map(|s| format!("{}:{}", s.width, s.nonconverged_fraction))
            .collect::<Vec<_>>()
            .join(" "),
    ));
    let mhat_sorted: Vec<f64> = ladder.values().map(|e| e.value).collect();
    checks.push(Check::new(
        "m_hat non-increasing in H",
        mhat_sorted.windows(2).all(|w| w[1] <= w[0]),
        format!("{mhat_sorted:?}"),
    ));
    Ok(SweepReport {
        schema_version: SCHEMA_VERSION,
        seed,
        p_hat: pe.p,
        p_stderr: pe.stderr,
        p_samples: pe.samples,
        quadrature: cfg.fingerprint(),
        widths,
        trials,
        checks,
    })
}

fn problem_act() -> crate::ann::ActivationKind {
    crate::ann::ActivationKind::Relu
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierarchyLevel {
    pub width: usize,
    pub m_hat: f64,
    pub theta: Vec<f64>,
    pub embedded_risk: f64,
    pub embedding_gap: f64,
    /// Risk after one neuron-addition step from the best point, when attempted.
    pub improved_risk: Option<f64>,
    pub budget_exhausted: bool,
    pub restart_risks: Vec<f64>,
    pub restart_grad_norms: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub schema_version: u32,
    pub seed: u64,
    pub xi_star: f64,
    pub nu_star: f64,
    pub top_width: usize,
    pub levels: Vec<HierarchyLevel>,
    pub monotonicity_violation: bool,
    pub min_margin: f64,
    pub quadrature: String,
    pub checks: Vec<Check>,
}

impl HierarchyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Estimates `m_0, ..., m_n`, embeds every best point into width `n`, and
/// tries one neuron addition at every level whose risk exceeds `improve_floor`.
pub fn hierarchy_experiment(
    problem: &Problem,
    top: usize,
    inf: &InfSettings,
    cfg: &QuadratureCfg,
    seed: u64,
    improve_floor: f64,
) -> Result<HierarchyReport> {
    if !problem.target.flags.is_continuous {
        return Err(Error::Precondition("the hierarchy needs a continuous target".into()));
    }
    let (xi, nu) = best_constant(problem, cfg)?;
    let widths: Vec<usize> = (0..=top).collect();
    let ladder = inf_ladder(problem, &widths, &inf.options(seed, cfg), inf.chain)?;
    let mut levels = Vec::new();
    let mut checks = Vec::new();
    for (&h, est) in &ladder {
        let emb = embed_shallow(&est.theta, top)?;
        let er = risk_population(&emb, problem, cfg)?;
        let improved_risk = if est.value > improve_floor {
            let imp = add_neuron_improve(
                &est.theta,
                problem,
                cfg,
                CHAIN_CANDIDATES,
                seed ^ (h as u64).wrapping_add(0x51),
                0.0,
            )?;
            Some(if imp.improved {
                risk_population(&imp.theta, problem, cfg)?
            } else {
                est.value
            })
        } else {
            None
        };
        let restart_grad_norms = est
            .restart_thetas
            .par_iter()
            .map(|v| {
                let th = ParamVector::shallow(est.theta.shallow_arch()?.clone(), v.clone())?;
                Ok(norm(&gen_gradient_population(&th, problem, cfg)?))
            })
            .collect::<Result<Vec<f64>>>()?;
        levels.push(HierarchyLevel {
            width: h,
            m_hat: est.value,
            theta: est.theta.values.clone(),
            embedded_risk: er,
            embedding_gap: (er - est.value).abs(),
            improved_risk,
            budget_exhausted: est.budget_exhausted,
            restart_risks: est.restart_risks.clone(),
            restart_grad_norms,
        });
    }
    let min_margin = levels.windows(2).map(|w| w[0].m_hat - w[1].m_hat).fold(f64::INFINITY, f64::min);
    let monotonicity_violation = !(min_margin > 0.0);
    checks.push(Check::new(
        "m_hat_0 equals the best-constant risk",
        (levels[0].m_hat - nu).abs() <= 1e-15 * nu.max(1.0),
        format!("m_hat_0 = {:e}, nu* = {:e}", levels[0].m_hat, nu),
    ));
    checks.push(Check::new(
        "m_hat strictly decreasing",
        !monotonicity_violation,
        format!("min margin {min_margin:e}"),
    ));
    let worst_gap = levels.iter().map(|l| l.embedding_gap).fold(0.0, f64::max);
    checks.push(Check::new(
        "embedding preserves risk to 1e-12",
        worst_gap <= 1e-12,
        format!("max gap {worst_gap:e}"),
    ));
    let improve_ok = levels.iter().all(|l| l.improved_risk.map_or(true, |r| r < l.m_hat));
    checks.push(Check::new(
        "neuron addition strictly decreases risk",
        improve_ok,
        levels
            .iter()
            .map(|l| format!("{}:{:?}", l.width, l.improved_risk.map(|r| l.m_hat - r)))
            .collect::<Vec<_>>()
            .join(" "),
    ));
    Ok(HierarchyReport {
        schema_version: SCHEMA_VERSION,
        seed,
        xi_star: xi,
        nu_star: nu,
        top_width: top,
        levels,
        monotonicity_violation,
        min_margin,
        quadrature: cfg.fingerprint(),
        checks,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NearOptReport {
    pub width: usize,
    pub m_hat: f64,
    pub m_hat_prev: f64,
    pub decile: usize,
    /// Decile members with risk below `m_hat_prev`.
    pub considered: usize,
    /// Decile members at or above `m_hat_prev`, excluded by construction.
    pub excluded: usize,
    pub violations: usize,
}

impl NearOptReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Among the best decile of restarts at width `H`, every point with risk below
/// `m_(H-1)` has no inactive neuron.
pub fn nearopt_no_inactive_check(
    problem: &Problem,
    width: usize,
    inf: &InfSettings,
    cfg: &QuadratureCfg,
    seed: u64,
) -> Result<NearOptReport> {
    if width == 0 {
        return Err(Error::InvalidArgument("width must be at least 1".into()));
    }
    let ladder = inf_ladder(problem, &[width - 1, width], &inf.options(seed, cfg), inf.chain)?;
    let prev = ladder[&(width - 1)].value;
    if !(prev > 0.0) {
        return Err(Error::Precondition("m_hat at width H-1 must be positive".into()));
    }
    let est = &ladder[&width];
    let arch = est.theta.shallow_arch()?.clone();
    let mut order: Vec<usize> = (0..est.restart_risks.len()).collect();
    order.sort_by(|&a, &b| est.restart_risks[a].total_cmp(&est.restart_risks[b]));
    let decile = order.len().div_ceil(10);
    let (mut considered, mut excluded, mut violations) = (0, 0, 0);
    for &r in &order[..decile] {
        if est.restart_risks[r] >= prev {
            excluded += 1;
            continue;
        }
        considered += 1;
        let th = ParamVector::shallow(arch.clone(), est.restart_thetas[r].clone())?;
        if !inactive_set(&th, &problem.domain)?.is_empty() {
            violations += 1;
        }
    }
    Ok(NearOptReport {
        width,
        m_hat: est.value,
        m_hat_prev: prev,
        decile,
        considered,
        excluded,
        violations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub kind: OptimizerKind,
    pub runs: usize,
    pub steps: usize,
    pub frozen_runs: usize,
}

impl InvarianceReport {
    pub fn passed(&self) -> bool {
        self.frozen_runs == self.runs
    }
}

/// Runs the optimizer from scaled inits in which neuron 1 has been made
/// strictly trapped and counts the runs whose neuron-1 parameters stay
/// bit-identical at every step.
pub fn trap_invariance(
    problem: &Problem,
    width: usize,
    opt: &OptimizerConfig,
    init: &InitSpec,
    runs: usize,
    steps: usize,
    batch: usize,
    seed: u64,
) -> Result<InvarianceReport> {
    if width == 0 {
        return Err(Error::InvalidArgument("width must be at least 1".into()));
    }
    let arch = ShallowArch::new(problem.dim(), width, problem_act())?;
    let slots = arch.neuron_inner_indices(1)?;
    let frozen: Vec<Result<bool>> = (0..runs)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, stream_id(&[tags::INIT, width as u64, t as u64]));
            let mut th0 = init.init_shallow(&arch, &mut rng);
            let first = arch.weight_index(1, 1)?;
            let w1 = th0.values[first..first + arch.d].to_vec();
            let (_, hi) = problem.domain.linear_range(&w1);
            th0.set_inner_bias(1, -hi - 0.1 - th0.inner_bias(1)?.abs())?;
            if trapped_set(&th0, &problem.domain)?.first() != Some(&1) {
                return Err(Error::Precondition("failed to construct a trapped neuron".into()));
            }
            let bits: Vec<u64> = slots.iter().map(|&k| th0.values[k].to_bits()).collect();
            let mut ok = true;
            let mut source = batch_source(problem, &arch, batch, width, t);
            let mut obs = |n: usize, theta: &[f64], _gn: Option<f64>| {
                if slots.iter().zip(&bits).any(|(&k, &b)| theta[k].to_bits() != b) {
                    ok = false;
                }
                Ok(Snapshot {
                    theta: None,
                    ..Snapshot::bare(n, &[], None)
                })
            };
            run(opt, &th0.values, &mut source, steps, seed, 1, &mut obs)?;
            Ok(ok)
        })
        .collect();
    let frozen_runs = frozen
        .into_iter()
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&b| b)
        .count();
    Ok(InvarianceReport {
        kind: opt.kind,
        runs,
        steps,
        frozen_runs,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClarkeAudit {
    pub examined: usize,
    pub stationary: usize,
    pub violations: usize,
    pub worst_excess: f64,
}

impl ClarkeAudit {
    /// Counts `(grad_norm, risk)` pairs with `grad_norm < tol` and `risk > nu + slack`.
    pub fn from_pairs<I: IntoIterator<Item = (f64, f64)>>(pairs: I, nu: f64, tol: f64, slack: f64) -> Self {
        let mut a = ClarkeAudit {
            worst_excess: f64::NEG_INFINITY,
            ..Default::default()
        };
        for (g, r) in pairs {
            a.examined += 1;
            if g < tol {
                a.stationary += 1;
                a.worst_excess = a.worst_excess.max(r - nu);
                if r > nu + slack {
                    a.violations += 1;
                }
            }
        }
        a
    }

    pub fn merge(self, o: ClarkeAudit) -> Self {
        ClarkeAudit {
            examined: self.examined + o.examined,
            stationary: self.stationary + o.stationary,
            violations: self.violations + o.violations,
            worst_excess: self.worst_excess.max(o.worst_excess),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub samples: usize,
    pub rejected: usize,
    pub max_rel_empirical: f64,
    pub max_rel_population: f64,
    /// Samples whose `r = 10` discrepancy exceeds the rounding floor.
    pub smooth_checked: usize,
    pub smooth_failures: usize,
    /// A failing sequence if any, else the slowest one.
    pub smooth_worst: Vec<f64>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_empirical <= self.tol && self.max_rel_population <= self.tol && self.smooth_failures == 0
    }
}

const SMOOTH_RS: [f64; 3] = [10.0, 100.0, 1000.0];
const SMOOTH_FLOOR: f64 = 1e-12;

/// Each step strictly decreases, or both values already sit at the rounding floor.
fn limit_decreasing(d: &[f64]) -> bool {
    d.windows(2).all(|w| w[1] < w[0] || (w[0] <= SMOOTH_FLOOR && w[1] <= SMOOTH_FLOOR))
}

fn ratio(d: &[f64]) -> f64 {
    d[d.len() - 1] / d[0]
}

/// Compares both generalized gradients with central differences at
/// margin-filtered random shallow points, and checks the smoothed-family limit.
pub fn grad_check(problem: &Problem, s: &crate::config::GradCheckSettings, cfg: &QuadratureCfg, seed: u64) -> Result<GradCheckReport> {
    use crate::grad::{fd_gradient, relative_error, smooth_limit_check};
    use crate::measure::{noisy_pairs, NoiseModel};
    use crate::risk::risk_empirical;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    if problem.dim() != 1 || s.max_width == 0 || s.samples == 0 {
        return Err(Error::InvalidArgument(
            "grad-check needs d = 1, max_width >= 1 and samples >= 1".into(),
        ));
    }
    let (a, b) = (problem.domain.a, problem.domain.b);
    let cap = 100 * s.samples;
    let mut rejected = 0;
    let mut accepted: Vec<(ParamVector, Vec<Pair>)> = Vec::new();
    let mut attempt = 0u64;
    while accepted.len() < s.samples {
        if attempt as usize >= cap {
            return Err(Error::Precondition(format!(
                "filtered-sample shortfall: {} of {}",
                accepted.len(),
                s.samples
            )));
        }
        let mut rng = stream_rng(seed, stream_id(&[tags::THETA, attempt]));
        attempt += 1;
        let h = rng.gen_range(1..=s.max_width);
        let arch = ShallowArch::relu(1, h);
        let values: Vec<f64> = (0..arch.param_count()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let th = ParamVector::shallow(arch, values)?;
        let batch = noisy_pairs(problem, &NoiseModel::None {}, s.batch, rng.gen())?;
        let ok = (1..=h).all(|i| {
            let w = th.weight(i, 1).unwrap();
            let bias = th.inner_bias(i).unwrap();
            let kink = -bias / w;
            w.abs() >= s.margin
                && (kink - a).abs() >= s.margin
                && (kink - b).abs() >= s.margin
                && batch.iter().all(|p| (w * p.x[0] + bias).abs() >= s.margin)
        });
        if ok {
            accepted.push((th, batch));
        } else {
            rejected += 1;
        }
    }
    let rows: Vec<Result<(f64, f64, Option<Vec<f64>>)>> = accepted
        .par_iter()
        .map(|(th, batch)| {
            let arch = th.arch.clone();
            let ge = gen_gradient_empirical(th, batch)?;
            let fe = fd_gradient(&th.values, |v| {
                risk_empirical(&ParamVector::new(arch.clone(), v.to_vec()).unwrap(), batch).unwrap()
            });
            let gp = gen_gradient_population(th, problem, cfg)?;
            let fp = fd_gradient(&th.values, |v| {
                risk_population(&ParamVector::new(arch.clone(), v.to_vec()).unwrap(), problem, cfg).unwrap()
            });
            let worst = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| relative_error(*p, *q, 1e-3)).fold(0.0, f64::max);
            let sm = smooth_limit_check(th, problem, cfg, &SMOOTH_RS)?;
            let smooth = (sm.discrepancies[0] > SMOOTH_FLOOR).then(|| sm.discrepancies.clone());
            Ok((worst(&ge, &fe), worst(&gp, &fp), smooth))
        })
        .collect();
    let mut rep = GradCheckReport {
        samples: s.samples,
        rejected,
        max_rel_empirical: 0.0,
        max_rel_population: 0.0,
        smooth_checked: 0,
        smooth_failures: 0,
        smooth_worst: Vec::new(),
        tol: s.tol,
    };
    for r in rows {
        let (e, p, sm) = r?;
        rep.max_rel_empirical = rep.max_rel_empirical.max(e);
        rep.max_rel_population = rep.max_rel_population.max(p);
        if let Some(d) = sm {
            rep.smooth_checked += 1;
            if !limit_decreasing(&d) {
                rep.smooth_failures += 1;
                rep.smooth_worst = d;
            } else if rep.smooth_failures == 0 && (rep.smooth_worst.is_empty() || ratio(&d) > ratio(&rep.smooth_worst)) {
                rep.smooth_worst = d;
            }
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovSuite {
    pub dims: Vec<usize>,
    pub sandwich_samples: usize,
    pub sandwich_violations: usize,
    pub identity_samples: usize,
    pub identity_rejected: usize,
    pub identity_max_gap: f64,
    /// Relative error of the predicted change of the right side under a shift of `xi`.
    pub shift_gap: f64,
    pub gd: crate::lyapunov::LyapunovReport,
}

impl LyapunovSuite {
    pub fn passed(&self) -> bool {
        self.sandwich_violations == 0 && self.identity_max_gap <= 1e-4 && self.shift_gap <= 1e-8 && self.gd.passed()
    }
}

/// Sandwich bounds at random `(theta, xi)`, the gradient identity at filtered
/// random points, and one gradient-descent run from a small random start.
pub fn lyapunov_suite(problem: &Problem, s: &crate::config::LyapunovSettings, cfg: &QuadratureCfg, seed: u64) -> Result<LyapunovSuite> {
    use crate::ann::{Arch, DeepArch};
    use crate::lyapunov::{identity_sides, lyapunov_gd_run, sandwich};
    use crate::risk::realize_with;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    let arch = DeepArch::relu(s.dims.clone())?;
    if arch.input_dim() != problem.dim() {
        return Err(Error::dim("deep input dimension", problem.dim(), arch.input_dim()));
    }
    let out = arch.output_dim();
    let np = arch.param_count();
    let normal = |rng: &mut rand_chacha::ChaCha8Rng, n: usize, sc: f64| -> Vec<f64> {
        (0..n)
            .map(|_| sc * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect()
    };

    let mut sandwich_violations = 0;
    for k in 0..s.sandwich_samples {
        let mut rng = stream_rng(seed, stream_id(&[tags::PROBE, 1, k as u64]));
        let sc = 10f64.powf(rng.gen_range(-2.0..2.0));
        let sx = 10f64.powf(rng.gen_range(-2.0..2.0));
        let th = ParamVector::deep(arch.clone(), normal(&mut rng, np, sc))?;
        let xi = normal(&mut rng, out, sx);
        if !sandwich(&th, &xi)?.holds() {
            sandwich_violations += 1;
        }
    }

    let margin = 0.05;
    let mut ids: Vec<ParamVector> = Vec::new();
    let mut identity_rejected = 0;
    let mut attempt = 0u64;
    while ids.len() < s.identity_samples {
        if attempt as usize >= 100 * s.identity_samples.max(1) {
            return Err(Error::Precondition("filtered-sample shortfall in the identity check".into()));
        }
        let mut rng = stream_rng(seed, stream_id(&[tags::PROBE, 2, attempt]));
        attempt += 1;
        let th = ParamVector::deep(arch.clone(), normal(&mut rng, np, 1.0))?;
        let ok = (1..arch.depth()).all(|k| {
            let (w, _) = arch.layer(&th.values, k);
            let cols = arch.dims[k - 1];
            w.chunks(cols).all(|row| norm(row) >= margin)
        });
        if ok {
            ids.push(th);
        } else {
            identity_rejected += 1;
        }
    }
    let (xi_star, _) = best_constant(problem, cfg)?;
    let xi = if out == 1 { s.xi.unwrap_or(xi_star) } else { 0.0 };
    let gaps: Vec<f64> = if out == 1 {
        ids.par_iter()
            .map(|th| identity_sides(th, problem, cfg, xi).map(|r| r.relative_gap()))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let identity_max_gap = gaps.iter().copied().fold(0.0, f64::max);

    let shift_gap = match ids.first() {
        Some(th) if out == 1 => {
            let delta = 0.25;
            let r0 = identity_sides(th, problem, cfg, xi)?.rhs;
            let r1 = identity_sides(th, problem, cfg, xi + delta)?.rhs;
            let act = arch.activation;
            let kinks = crate::risk::kinks_1d(th, &problem.domain);
            let mean_res = crate::quadrature::integrate(problem, cfg, &kinks, |ns| {
                vec![ns.integrate(|x| realize_with(th, &act, x) - problem.target.eval(x))]
            })?[0];
            let predicted = -4.0 * arch.depth() as f64 * mean_res * delta;
            ((r1 - r0) - predicted).abs() / predicted.abs().max(r0.abs()).max(1e-12)
        }
        _ => 0.0,
    };

    let mut rng = stream_rng(seed, stream_id(&[tags::PROBE, 3]));
    let th0 = ParamVector::new(Arch::Deep(arch.clone()), normal(&mut rng, np, s.init_scale))?;
    let gd = lyapunov_gd_run(&th0, problem, cfg, s.xi, &s.gamma, s.steps, s.eps, s.cadence)?;
    Ok(LyapunovSuite {
        dims: s.dims.clone(),
        sandwich_samples: s.sandwich_samples,
        sandwich_violations,
        identity_samples: ids.len(),
        identity_rejected,
        identity_max_gap,
        shift_gap,
        gd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{DomainBox, Measure, Target};

    #[test]
    fn invariance_small() {
        let p = Problem::square_unit();
        let init = InitSpec::preset("normal-kappa-0.5").unwrap();
        for kind in OptimizerKind::ALL {
            let opt = OptimizerConfig::new(kind, 1e-2);
            let r = trap_invariance(&p, 3, &opt, &init, 3, 50, 8, 1).unwrap();
            assert!(r.passed(), "{kind:?}");
        }
    }

    #[test]
    fn representable_target_refused() {
        let t = Target::linear(vec![1.0], 0.0);
        let p = Problem::new(DomainBox::unit(1), Measure::uniform(), t).unwrap();
        let sc = SweepConfig {
            widths: vec![2],
            trials: 2,
            steps: 10,
            batch: 4,
            optimizer: OptimizerConfig::adam_default(),
            init: InitSpec::preset("normal-kappa-0.5").unwrap(),
            eps: None,
            p_samples: 1000,
            inf: InfSettings {
                restarts: 4,
                adam_iters: 200,
                lm_iters: 50,
                chain: true,
            },
            cadence: 5,
        };
        let r = nonconvergence_sweep(&p, &sc, &QuadratureCfg::default(), 0, false);
        assert!(matches!(r, Err(Error::Precondition(_))), "{r:?}");
    }

    #[test]
    fn audit_counts() {
        let a = ClarkeAudit::from_pairs([(1e-7, 0.05), (1e-7, 0.2), (1.0, 5.0)], 0.1, 1e-5, 1e-4);
        assert_eq!((a.examined, a.stationary, a.violations), (3, 2, 1));
    }
}
