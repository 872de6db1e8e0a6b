//! Run configuration: strict JSON with unknown keys rejected, presets resolved
//! at load time, and a content fingerprint over the semantic fields.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ann::{ActivationKind, Arch, DeepArch, ParamVector, ShallowArch};
use crate::error::{Error, Result};
use crate::experiments::{InfSettings, SweepConfig};
use crate::landscape::InitSpec;
use crate::measure::{DomainBox, Measure, NoiseModel, Problem, Target, TargetKind};
use crate::optim::{OptimizerConfig, Schedule};
use crate::quadrature::QuadratureCfg;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "RELUSCAPE_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureConfig {
    Uniform {
        #[serde(default = "one")]
        mass: f64,
    },
    Empirical {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig::Uniform { mass: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: DomainBox,
    #[serde(default)]
    pub measure: MeasureConfig,
    pub target: TargetKind,
    #[serde(default)]
    pub noise: NoiseModel,
}

impl ProblemConfig {
    pub fn build(&self) -> Result<Problem> {
        let measure = match &self.measure {
            MeasureConfig::Uniform { mass } => Measure::Uniform { mass: *mass },
            MeasureConfig::Empirical { points, weights } => Measure::empirical(points.clone(), weights.clone()),
        };
        Problem::new(self.domain, measure, Target::builtin(self.target.clone())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Shallow {
        width: usize,
        #[serde(default = "relu")]
        activation: ActivationKind,
    },
    Deep {
        dims: Vec<usize>,
        #[serde(default = "relu")]
        activation: ActivationKind,
    },
}

fn relu() -> ActivationKind {
    ActivationKind::Relu
}

impl ModelConfig {
    pub fn arch(&self, d: usize) -> Result<Arch> {
        match self {
            ModelConfig::Shallow { width, activation } => Ok(Arch::Shallow(ShallowArch::new(d, *width, *activation)?)),
            ModelConfig::Deep { dims, activation } => {
                if dims.first() != Some(&d) {
                    return Err(Error::InvalidArch(format!("deep input dimension must equal the box dimension {d}")));
                }
                Ok(Arch::Deep(DeepArch::new(dims.clone(), *activation)?))
            }
        }
    }
}

/// Either a preset name or a full specification; presets are expanded on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Choice<T> {
    Preset(String),
    Full(T),
}

impl Choice<OptimizerConfig> {
    fn resolve(&mut self) -> Result<()> {
        if let Choice::Preset(name) = self {
            *self = Choice::Full(OptimizerConfig::preset(name)?);
        }
        Ok(())
    }
}

impl Choice<InitSpec> {
    fn resolve(&mut self) -> Result<()> {
        if let Choice::Preset(name) = self {
            *self = Choice::Full(InitSpec::preset(name)?);
        }
        Ok(())
    }
}

impl<T: Clone> Choice<T> {
    pub fn get(&self) -> Option<T> {
        match self {
            Choice::Full(t) => Some(t.clone()),
            Choice::Preset(_) => None,
        }
    }
}

macro_rules! defaults {
    ($($name:ident: $ty:ty = $val:expr;)*) => {
        $(fn $name() -> $ty { $val })*
    };
}

defaults! {
    d_grad_samples: usize = 100;
    d_grad_width: usize = 4;
    d_grad_batch: usize = 16;
    d_margin: f64 = 1e-3;
    d_tol: f64 = 1e-5;
    d_steps: usize = 1000;
    d_batch: usize = 32;
    d_cadence: usize = 100;
    d_trap_samples: usize = 1_000_000;
    d_width_one: usize = 1;
    d_top: usize = 3;
    d_improve_floor: f64 = 1e-6;
    d_sandwich: usize = 1000;
    d_identity: usize = 50;
    d_lyap_dims: Vec<usize> = vec![1, 2, 1];
    d_lyap_steps: usize = 10_000;
    d_gamma: Schedule = Schedule::Constant(1e-3);
    d_lyap_eps: f64 = 0.02;
    d_init_scale: f64 = 0.1;
    d_lyap_cadence: usize = 100;
    d_widths: Vec<usize> = vec![4, 8, 16];
    d_trials: usize = 200;
    d_sweep_steps: usize = 5000;
    d_p_samples: usize = 1_000_000;
    d_sweep_cadence: usize = 500;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradCheckSettings {
    #[serde(default = "d_grad_samples")]
    pub samples: usize,
    #[serde(default = "d_grad_width")]
    pub max_width: usize,
    #[serde(default = "d_grad_batch")]
    pub batch: usize,
    /// Minimum distance of every pre-activation from 0 and of every kink from the box ends.
    #[serde(default = "d_margin")]
    pub margin: f64,
    #[serde(default = "d_tol")]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[serde(default = "d_steps")]
    pub steps: usize,
    #[serde(default = "d_batch")]
    pub batch: usize,
    #[serde(default = "d_cadence")]
    pub cadence: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapProbSettings {
    #[serde(default = "d_trap_samples")]
    pub samples: usize,
    /// Width whose `H^-kappa` scaling is applied; the estimate does not depend on it.
    #[serde(default = "d_width_one")]
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    #[serde(default = "d_widths")]
    pub widths: Vec<usize>,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default = "d_sweep_steps")]
    pub steps: usize,
    #[serde(default = "d_batch")]
    pub batch: usize,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default = "d_p_samples")]
    pub p_samples: usize,
    #[serde(default)]
    pub inf: InfSettings,
    #[serde(default = "d_sweep_cadence")]
    pub cadence: usize,
    /// Write one JSON-lines trace per trial.
    #[serde(default)]
    pub traces: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchySettings {
    #[serde(default = "d_top")]
    pub top: usize,
    #[serde(default)]
    pub inf: InfSettings,
    #[serde(default = "d_improve_floor")]
    pub improve_floor: f64,
    /// Width for the near-optimality check, when requested.
    #[serde(default)]
    pub near_opt: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedSettings {
    /// Target width (shallow) or layer dimensions (deep).
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default)]
    pub dims: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovSettings {
    #[serde(default = "d_lyap_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "d_sandwich")]
    pub sandwich_samples: usize,
    #[serde(default = "d_identity")]
    pub identity_samples: usize,
    #[serde(default = "d_lyap_steps")]
    pub steps: usize,
    #[serde(default = "d_gamma")]
    pub gamma: Schedule,
    #[serde(default = "d_lyap_eps")]
    pub eps: f64,
    /// Defaults to the best constant.
    #[serde(default)]
    pub xi: Option<f64>,
    /// Standard deviation of the i.i.d. normal starting point.
    #[serde(default = "d_init_scale")]
    pub init_scale: f64,
    #[serde(default = "d_lyap_cadence")]
    pub cadence: usize,
}

macro_rules! settings_default {
    ($($t:ty),*) => {
        $(impl Default for $t {
            fn default() -> Self {
                serde_json::from_str("{}").expect("all fields have defaults")
            }
        })*
    };
}

settings_default!(
    GradCheckSettings,
    TrainSettings,
    TrapProbSettings,
    SweepSettings,
    HierarchySettings,
    EmbedSettings,
    LyapunovSettings
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Risk {},
    GradCheck(GradCheckSettings),
    Train(TrainSettings),
    TrapProb(TrapProbSettings),
    Sweep(SweepSettings),
    Hierarchy(HierarchySettings),
    Embed(EmbedSettings),
    Lyapunov(LyapunovSettings),
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::Risk {} => "risk",
            ExperimentConfig::GradCheck(_) => "grad-check",
            ExperimentConfig::Train(_) => "train",
            ExperimentConfig::TrapProb(_) => "trap-prob",
            ExperimentConfig::Sweep(_) => "sweep",
            ExperimentConfig::Hierarchy(_) => "hierarchy",
            ExperimentConfig::Embed(_) => "embed",
            ExperimentConfig::Lyapunov(_) => "lyapunov",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub optimizer: Option<Choice<OptimizerConfig>>,
    #[serde(default)]
    pub init: Option<Choice<InitSpec>>,
    #[serde(default)]
    pub experiment: Option<ExperimentConfig>,
    #[serde(default)]
    pub quadrature: Option<QuadratureCfg>,
    /// Output directory; not part of the fingerprint.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// Parses, resolves presets and validates every block.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.resolve()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self) -> Result<()> {
        let wrap = |field: &str, e: Error| Error::Config {
            path: field.to_string(),
            message: e.to_string(),
        };
        if let Some(o) = &mut self.optimizer {
            o.resolve().map_err(|e| wrap("optimizer", e))?;
        }
        if let Some(i) = &mut self.init {
            i.resolve().map_err(|e| wrap("init", e))?;
        }
        if self.quadrature.is_none() {
            self.quadrature = Some(QuadratureCfg::for_dim(self.problem.domain.d));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |field: &str, e: Error| Error::Config {
            path: field.to_string(),
            message: e.to_string(),
        };
        let p = self.problem.build().map_err(|e| wrap("problem", e))?;
        if let Some(m) = &self.model {
            m.arch(p.dim()).map_err(|e| wrap("model", e))?;
        }
        if let Some(Choice::Full(o)) = &self.optimizer {
            o.validate().map_err(|e| wrap("optimizer", e))?;
        }
        if let Some(Choice::Full(i)) = &self.init {
            i.validate().map_err(|e| wrap("init", e))?;
        }
        self.quadrature().validate().map_err(|e| wrap("quadrature", e))?;
        Ok(())
    }

    pub fn quadrature(&self) -> QuadratureCfg {
        self.quadrature
            .clone()
            .unwrap_or_else(|| QuadratureCfg::for_dim(self.problem.domain.d))
    }

    pub fn problem(&self) -> Result<Problem> {
        self.problem.build()
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        self.optimizer
            .as_ref()
            .and_then(|c| c.get())
            .unwrap_or_else(OptimizerConfig::adam_default)
    }

    pub fn init(&self) -> InitSpec {
        self.init
            .as_ref()
            .and_then(|c| c.get())
            .unwrap_or_else(|| InitSpec::preset("normal-kappa-0.5").expect("preset exists"))
    }

    pub fn sweep_config(&self, s: &SweepSettings) -> SweepConfig {
        SweepConfig {
            widths: s.widths.clone(),
            trials: s.trials,
            steps: s.steps,
            batch: s.batch,
            optimizer: self.optimizer(),
            init: self.init(),
            eps: s.eps,
            p_samples: s.p_samples,
            inf: s.inf.clone(),
            cadence: s.cadence,
        }
    }

    /// Hex SHA-256 of the canonical JSON with the output directory removed.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = read_text(path)?;
    RunConfig::from_json(&text)
}

/// Loads a parameter vector and checks that its architecture is well formed.
pub fn load_theta(path: &Path) -> Result<ParamVector> {
    let text = read_text(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"problem":{"domain":{"a":0,"b":1,"d":1},"target":{"kind":"square"}}}"#;

    #[test]
    fn minimal_and_round_trip() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.seed, 0);
        let again = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.fingerprint(), again.fingerprint());
    }

    #[test]
    fn unknown_key_reports_path() {
        let bad = r#"{"problem":{"domain":{"a":0,"b":1,"d":1,"z":3},"target":{"kind":"square"}}}"#;
        match RunConfig::from_json(bad) {
            Err(Error::Config { path, .. }) => assert!(path.starts_with("problem.domain"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn presets_resolve_and_fingerprint_tracks_semantics() {
        let a = RunConfig::from_json(
            r#"{"problem":{"domain":{"a":0,"b":1,"d":1},"target":{"kind":"square"}},"optimizer":"adam-default","init":"normal-kappa-0.5"}"#,
        )
        .unwrap();
        assert!(matches!(a.optimizer, Some(Choice::Full(_))));
        let mut b = a.clone();
        b.output = Some("elsewhere".into());
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
        let bad = r#"{"problem":{"domain":{"a":0,"b":1,"d":1},"target":{"kind":"square"}},"optimizer":"nope"}"#;
        assert!(matches!(RunConfig::from_json(bad), Err(Error::Config { .. })));
    }

    #[test]
    fn unknown_key_in_fieldless_variant_rejected() {
        let bad = r#"{"problem":{"domain":{"a":0,"b":1,"d":1},"target":{"kind":"square","c":1}}}"#;
        match RunConfig::from_json(bad) {
            Err(Error::Config { path, .. }) => assert!(path.starts_with("problem.target"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_box_is_config_error() {
        let bad = r#"{"problem":{"domain":{"a":1,"b":1,"d":1},"target":{"kind":"square"}}}"#;
        assert!(matches!(RunConfig::from_json(bad), Err(Error::Config { .. })));
    }

    #[test]
    fn experiment_defaults() {
        let c = RunConfig::from_json(
            r#"{"problem":{"domain":{"a":0,"b":1,"d":1},"target":{"kind":"square"}},"experiment":{"kind":"sweep","trials":7}}"#,
        )
        .unwrap();
        match c.experiment {
            Some(ExperimentConfig::Sweep(s)) => {
                assert_eq!(s.trials, 7);
                assert_eq!(s.widths, vec![4, 8, 16]);
            }
            other => panic!("{other:?}"),
        }
    }
}
