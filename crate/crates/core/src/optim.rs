//! Generalized gradient methods: plain SGD, momentum SGD, Adam, RMSprop and AdaGrad.
//!
//! Recursions (all schedules indexed from `n = 0`, `m_0 = M_0 = 0`):
//!
//! * momentum: `m_{n+1} = a_n m_n + (1 - a_n) g_n`, `theta_{n+1} = theta_n - gamma_n m_{n+1}`
//! * Adam: as momentum for `m`, `M_{n+1} = b_n M_n + (1 - b_n) g_n^2`, and
//!   `theta_{n+1} = theta_n - gamma_n (eps + sqrt(M_{n+1} / (1 - prod_{l<=n} b_l)))^{-1} m_{n+1} / (1 - prod_{l<=n} a_l)`
//! * RMSprop: Adam with `a_n = 0`
//! * AdaGrad: `M_{n+1} = M_n + g_n^2`, `theta_{n+1} = theta_n - gamma_n g_n / (eps + sqrt(M_{n+1}))`
//!
//! `eps` sits outside the square root.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real sequence indexed by the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant(f64),
    /// `gamma0 / (n + 1)^rho`.
    Power {
        gamma0: f64,
        rho: f64,
    },
    /// Explicit values; the last one repeats.
    List(Vec<f64>),
}

impl Schedule {
    pub fn at(&self, n: usize) -> f64 {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::Power { gamma0, rho } => gamma0 / ((n + 1) as f64).powf(*rho),
            Schedule::List(v) => v[n.min(v.len() - 1)],
        }
    }

    fn check(&self, name: &str, lo: f64, hi: f64) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= lo && v <= hi;
        let valid = match self {
            Schedule::Constant(v) => ok(*v),
            Schedule::Power { gamma0, rho } => ok(*gamma0) && rho.is_finite() && *rho >= 0.0,
            Schedule::List(v) => !v.is_empty() && v.iter().all(|&t| ok(t)),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "schedule `{name}` must take values in [{lo}, {hi}]"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Adam,
    Rmsprop,
    Adagrad,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        OptimizerKind::Sgd,
        OptimizerKind::Momentum,
        OptimizerKind::Adam,
        OptimizerKind::Rmsprop,
        OptimizerKind::Adagrad,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// Learning rates `gamma_n`.
    pub lr: Schedule,
    /// Momentum factors `alpha_n` (momentum, adam).
    pub alpha: Schedule,
    /// Second-moment factors `beta_n` (adam, rmsprop).
    pub beta: Schedule,
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        let (alpha, beta) = match kind {
            OptimizerKind::Sgd | OptimizerKind::Adagrad => (0.0, 0.0),
            OptimizerKind::Momentum => (0.9, 0.0),
            OptimizerKind::Adam => (0.9, 0.999),
            OptimizerKind::Rmsprop => (0.0, 0.999),
        };
        OptimizerConfig {
            kind,
            lr: Schedule::Constant(lr),
            alpha: Schedule::Constant(alpha),
            beta: Schedule::Constant(beta),
            eps: 1e-8,
        }
    }

    /// `alpha = 0.9`, `beta = 0.999`, `gamma = 1e-3`, `eps = 1e-8`.
    pub fn adam_default() -> Self {
        Self::new(OptimizerKind::Adam, 1e-3)
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn momentum(lr: f64, alpha: f64) -> Self {
        OptimizerConfig {
            alpha: Schedule::Constant(alpha),
            ..Self::new(OptimizerKind::Momentum, lr)
        }
    }

    /// Named presets: `adam-default`, `sgd`, `momentum-0.9`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "adam-default" => Ok(Self::adam_default()),
            "sgd" => Ok(Self::sgd(1e-3)),
            "momentum-0.9" => Ok(Self::momentum(1e-3, 0.9)),
            other => Err(Error::InvalidArgument(format!("unknown optimizer preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lr.check("lr", 0.0, f64::INFINITY)?;
        self.alpha.check("alpha", 0.0, 1.0)?;
        self.beta.check("beta", 0.0, 1.0)?;
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidArgument("eps must be positive".into()));
        }
        if matches!(self.kind, OptimizerKind::Adam | OptimizerKind::Rmsprop) {
            let a = if self.kind == OptimizerKind::Adam {
                self.alpha.at(0).max(self.alpha.at(1))
            } else {
                0.0
            };
            let b = self.beta.at(0).max(self.beta.at(1));
            if a >= 1.0 || b >= 1.0 {
                return Err(Error::InvalidArgument(
                    "adam needs alpha_0, alpha_1, beta_0, beta_1 < 1 so the bias corrections are defined".into(),
                ));
            }
        }
        Ok(())
    }

    fn alpha_at(&self, n: usize) -> f64 {
        match self.kind {
            OptimizerKind::Momentum | OptimizerKind::Adam => self.alpha.at(n),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    /// Number of steps taken.
    pub step: usize,
    pub m: Vec<f64>,
    pub second: Vec<f64>,
    /// `prod_{l=0}^{step-1} alpha_l`.
    pub alpha_prod: f64,
    /// `prod_{l=0}^{step-1} beta_l`.
    pub beta_prod: f64,
}

impl OptimizerState {
    pub fn new(dim: usize) -> Self {
        OptimizerState {
            step: 0,
            m: vec![0.0; dim],
            second: vec![0.0; dim],
            alpha_prod: 1.0,
            beta_prod: 1.0,
        }
    }
}

/// One step of the configured recursion, in place.
pub fn step(cfg: &OptimizerConfig, state: &mut OptimizerState, theta: &mut [f64], g: &[f64]) -> Result<()> {
    if g.len() != theta.len() {
        return Err(Error::dim("gradient", theta.len(), g.len()));
    }
    if state.m.len() != theta.len() {
        return Err(Error::dim("optimizer state", theta.len(), state.m.len()));
    }
    if let Some(j) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient(j));
    }
    let n = state.step;
    let gamma = cfg.lr.at(n);
    match cfg.kind {
        OptimizerKind::Sgd => {
            for (t, gj) in theta.iter_mut().zip(g) {
                *t -= gamma * gj;
            }
        }
        OptimizerKind::Momentum => {
            let a = cfg.alpha.at(n);
            for ((t, m), gj) in theta.iter_mut().zip(state.m.iter_mut()).zip(g) {
                *m = a * *m + (1.0 - a) * gj;
                *t -= gamma * *m;
            }
            state.alpha_prod *= a;
        }
        OptimizerKind::Adam | OptimizerKind::Rmsprop => {
            let a = cfg.alpha_at(n);
            let b = cfg.beta.at(n);
            state.alpha_prod *= a;
            state.beta_prod *= b;
            let ca = 1.0 - state.alpha_prod;
            let cb = 1.0 - state.beta_prod;
            for (j, t) in theta.iter_mut().enumerate() {
                let gj = g[j];
                state.m[j] = a * state.m[j] + (1.0 - a) * gj;
                state.second[j] = b * state.second[j] + (1.0 - b) * gj * gj;
                *t -= gamma * (state.m[j] / ca) / (cfg.eps + (state.second[j] / cb).sqrt());
            }
        }
        OptimizerKind::Adagrad => {
            for (j, t) in theta.iter_mut().enumerate() {
                let gj = g[j];
                state.second[j] += gj * gj;
                *t -= gamma * gj / (cfg.eps + state.second[j].sqrt());
            }
        }
    }
    state.step += 1;
    Ok(())
}

/// `Phi_n(g_0, ..., g_n)` from the closed-form sums; equals the update of
/// the recursive implementation at step `n = history.len() - 1`.
pub fn phi_closed_form(cfg: &OptimizerConfig, history: &[Vec<f64>]) -> Result<Vec<f64>> {
    if history.is_empty() {
        return Err(Error::InvalidArgument("gradient history must contain g_0".into()));
    }
    let n = history.len() - 1;
    let dim = history[0].len();
    if let Some(g) = history.iter().find(|g| g.len() != dim) {
        return Err(Error::dim("gradient history entry", dim, g.len()));
    }
    let gamma = cfg.lr.at(n);
    // weight_k = (1 - c_k) prod_{l=k+1}^n c_l
    let weights =
        |c: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..=n).map(|k| (1.0 - c(k)) * ((k + 1)..=n).map(c).product::<f64>()).collect() };
    let prod = |c: &dyn Fn(usize) -> f64| -> f64 { (0..=n).map(c).product() };
    let alpha = |l: usize| cfg.alpha_at(l);
    let beta = |l: usize| cfg.beta.at(l);
    let mut out = vec![0.0; dim];
    match cfg.kind {
        OptimizerKind::Sgd => {
            for (o, g) in out.iter_mut().zip(&history[n]) {
                *o = gamma * g;
            }
        }
        OptimizerKind::Momentum => {
            let w = weights(&alpha);
            for j in 0..dim {
                out[j] = gamma * (0..=n).map(|k| w[k] * history[k][j]).sum::<f64>();
            }
        }
        OptimizerKind::Adam | OptimizerKind::Rmsprop => {
            let wa = weights(&alpha);
            let wb = weights(&beta);
            let ca = 1.0 - prod(&alpha);
            let cb = 1.0 - prod(&beta);
            for j in 0..dim {
                let m: f64 = (0..=n).map(|k| wa[k] * history[k][j]).sum();
                let big: f64 = (0..=n).map(|k| wb[k] * history[k][j] * history[k][j]).sum();
                out[j] = gamma * (m / ca) / (cfg.eps + (big / cb).sqrt());
            }
        }
        OptimizerKind::Adagrad => {
            for j in 0..dim {
                let big: f64 = (0..=n).map(|k| history[k][j] * history[k][j]).sum();
                out[j] = gamma * history[n][j] / (cfg.eps + big.sqrt());
            }
        }
    }
    Ok(out)
}

/// Gradient oracle for [`run`]: `(theta, n, seed) -> G_n(theta)`.
pub trait GradientSource {
    fn gradient(&mut self, theta: &[f64], n: usize, seed: u64) -> Result<Vec<f64>>;
}

impl<F> GradientSource for F
where
    F: FnMut(&[f64], usize, u64) -> Result<Vec<f64>>,
{
    fn gradient(&mut self, theta: &[f64], n: usize, seed: u64) -> Result<Vec<f64>> {
        self(theta, n, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub theta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub population_risk: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub empirical_risk: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grad_norm: Option<f64>,
    #[serde(default)]
    pub inactive: Vec<usize>,
    #[serde(default)]
    pub strictly_trapped: Vec<usize>,
}

impl Snapshot {
    pub fn bare(step: usize, theta: &[f64], grad_norm: Option<f64>) -> Self {
        Snapshot {
            step,
            theta: Some(theta.to_vec()),
            population_risk: None,
            empirical_risk: None,
            grad_norm,
            inactive: Vec::new(),
            strictly_trapped: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub seed: u64,
    pub steps: usize,
    pub snapshots: Vec<Snapshot>,
    pub final_theta: Vec<f64>,
}

/// Observer called at every snapshot with `(step, theta, |G(theta)|)`.
pub type Observer<'a> = dyn FnMut(usize, &[f64], Option<f64>) -> Result<Snapshot> + 'a;

/// Iterates the method for `steps` steps. Snapshots are taken at step 0,
/// every `cadence` steps and after the last step.
pub fn run<G: GradientSource + ?Sized>(
    cfg: &OptimizerConfig,
    theta0: &[f64],
    source: &mut G,
    steps: usize,
    seed: u64,
    cadence: usize,
    observe: &mut Observer<'_>,
) -> Result<TrainTrace> {
    cfg.validate()?;
    let cadence = cadence.max(1);
    let mut theta = theta0.to_vec();
    let mut state = OptimizerState::new(theta.len());
    let mut snapshots = Vec::new();
    for n in 0..steps {
        let g = source.gradient(&theta, n, seed)?;
        if n % cadence == 0 {
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            snapshots.push(observe(n, &theta, Some(gn))?);
        }
        step(cfg, &mut state, &mut theta, &g)?;
    }
    snapshots.push(observe(steps, &theta, None)?);
    Ok(TrainTrace {
        seed,
        steps,
        snapshots,
        final_theta: theta,
    })
}

/// [`run`] recording only `theta` and the gradient norm.
pub fn run_plain<G: GradientSource + ?Sized>(
    cfg: &OptimizerConfig,
    theta0: &[f64],
    source: &mut G,
    steps: usize,
    seed: u64,
    cadence: usize,
) -> Result<TrainTrace> {
    run(cfg, theta0, source, steps, seed, cadence, &mut |n, t, g| {
        Ok(Snapshot::bare(n, t, g))
    })
}
