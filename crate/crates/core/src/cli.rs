//! Command-line front end. Every subcommand reads a [`RunConfig`], runs one
//! library operation, writes its artifacts plus a manifest and maps the
//! outcome to an exit code: 0 success, 1 failed assertion, 2 config error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::ann::{Arch, ParamVector};
use crate::config::{load_config, load_theta, ExperimentConfig, ModelConfig, RunConfig, OUT_ENV};
use crate::error::{Error, Result};
use crate::experiments::{grad_check, hierarchy_experiment, lyapunov_suite, nearopt_no_inactive_check, nonconvergence_sweep};
use crate::grad::gen_gradient_empirical;
use crate::landscape::{embed_deep, embed_shallow, realization_gap, trap_probability, trapped_set};
use crate::measure::{noisy_pairs, sample_with, Pair};
use crate::optim::{run, Snapshot};
use crate::quadrature::best_constant;
use crate::report::{compare_outputs, read_manifest, write_report, Artifact};
use crate::risk::{risk_empirical, risk_population};
use crate::rng::{stream_id, stream_rng, tags};

#[derive(Debug, Parser)]
#[command(name = "reluscape", version, about = "Risk landscapes and trapped neurons of ReLU networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config and the environment.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Parameter vector (JSON `{arch, values}`).
    #[arg(long)]
    pub theta: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Population risk of a parameter vector.
    Risk(Common),
    /// Generalized gradients against central differences.
    GradCheck(Common),
    /// One mini-batch training run with a JSON-lines trace.
    Train(Common),
    /// Monte Carlo estimate of the single-neuron trap probability.
    TrapProb(Common),
    /// Non-convergence sweep over widths.
    Sweep(Common),
    /// Local-minimum risk levels, embeddings and neuron addition.
    Hierarchy(Common),
    /// Embed a parameter vector into a wider architecture.
    Embed(Common),
    /// Lyapunov sandwich, identity and gradient-descent run.
    Lyapunov(Common),
    /// Replay a manifest and compare output hashes.
    Report {
        manifest: PathBuf,
        /// Also write the replayed outputs here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Risk(_) => "risk",
            Command::GradCheck(_) => "grad-check",
            Command::Train(_) => "train",
            Command::TrapProb(_) => "trap-prob",
            Command::Sweep(_) => "sweep",
            Command::Hierarchy(_) => "hierarchy",
            Command::Embed(_) => "embed",
            Command::Lyapunov(_) => "lyapunov",
            Command::Report { .. } => "report",
        }
    }
}

/// Result of one operation before anything touches the disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub lines: Vec<String>,
    pub passed: bool,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. }
        | Error::Json(_)
        | Error::Io(_)
        | Error::InvalidArgument(_)
        | Error::InvalidArch(_)
        | Error::DimensionMismatch { .. }
        | Error::IndexOutOfRange { .. }
        | Error::Precondition(_) => 2,
        _ => 1,
    }
}

pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn set_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn out_dir(flag: Option<&Path>, cfg: &RunConfig, command: &str) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.output {
        return p.clone();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v).join(command),
        _ => PathBuf::from("reluscape-out").join(command),
    }
}

fn dispatch(cmd: Command) -> Result<bool> {
    let name = cmd.name();
    match cmd {
        Command::Report { manifest, out, jobs } => {
            set_jobs(jobs);
            replay(&manifest, out.as_deref())
        }
        Command::Risk(c)
        | Command::GradCheck(c)
        | Command::Train(c)
        | Command::TrapProb(c)
        | Command::Sweep(c)
        | Command::Hierarchy(c)
        | Command::Embed(c)
        | Command::Lyapunov(c) => {
            set_jobs(c.jobs);
            let mut cfg = load_config(&c.config)?;
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            let theta = c.theta.as_deref().map(load_theta).transpose()?;
            let t0 = Instant::now();
            let outcome = execute(name, &cfg, theta.as_ref())?;
            for l in &outcome.lines {
                println!("{l}");
            }
            let dir = out_dir(c.out.as_deref(), &cfg, name);
            let mp = write_report(
                &dir,
                name,
                &cfg,
                theta.as_ref(),
                &outcome.artifacts,
                outcome.passed,
                t0.elapsed().as_secs_f64(),
            )?;
            println!("manifest {}", mp.display());
            Ok(outcome.passed)
        }
    }
}

/// Re-runs the manifest's command from its embedded config and compares every output hash.
pub fn replay(manifest: &Path, out: Option<&Path>) -> Result<bool> {
    let m = read_manifest(manifest)?;
    let t0 = Instant::now();
    let outcome = execute(&m.command, &m.config, m.theta.as_ref())?;
    let cmp = compare_outputs(&m, &outcome.artifacts);
    let mut all = cmp.len() == outcome.artifacts.len();
    for e in &cmp {
        let ok = e.matches();
        all &= ok;
        println!("{} {}", if ok { "match" } else { "MISMATCH" }, e.path);
    }
    if let Some(dir) = out {
        write_report(
            dir,
            &m.command,
            &m.config,
            m.theta.as_ref(),
            &outcome.artifacts,
            outcome.passed,
            t0.elapsed().as_secs_f64(),
        )?;
    }
    println!("replay {}", if all { "identical" } else { "differs" });
    Ok(all)
}

fn settings_mismatch(command: &str, found: &ExperimentConfig) -> Error {
    Error::Config {
        path: "experiment.kind".into(),
        message: format!("`{}` settings cannot drive the `{command}` command", found.name()),
    }
}

macro_rules! settings {
    ($cfg:expr, $cmd:expr, $variant:ident) => {
        match &$cfg.experiment {
            None => Default::default(),
            Some(ExperimentConfig::$variant(s)) => s.clone(),
            Some(other) => return Err(settings_mismatch($cmd, other)),
        }
    };
}

#[derive(Serialize)]
struct RiskOut<'a> {
    risk: f64,
    seed: u64,
    quadrature: String,
    theta: &'a ParamVector,
}

/// Runs one command in memory.
pub fn execute(command: &str, cfg: &RunConfig, theta: Option<&ParamVector>) -> Result<Outcome> {
    let problem = cfg.problem()?;
    let quad = cfg.quadrature();
    let seed = cfg.seed;
    match command {
        "risk" => {
            if let Some(other) = cfg.experiment.as_ref().filter(|e| !matches!(e, ExperimentConfig::Risk {})) {
                return Err(settings_mismatch(command, other));
            }
            let th = match (theta, &cfg.model) {
                (Some(t), _) => t.clone(),
                (None, Some(ModelConfig::Shallow { width: 0, activation })) => {
                    let (xi, _) = best_constant(&problem, &quad)?;
                    ParamVector::shallow(crate::ann::ShallowArch::new(problem.dim(), 0, *activation)?, vec![xi])?
                }
                _ => {
                    return Err(Error::Config {
                        path: "theta".into(),
                        message: "risk needs --theta unless the model is the width-0 network".into(),
                    })
                }
            };
            let risk = risk_population(&th, &problem, &quad)?;
            Ok(Outcome {
                artifacts: vec![Artifact::json(
                    "risk.json",
                    &RiskOut {
                        risk,
                        seed,
                        quadrature: quad.fingerprint(),
                        theta: &th,
                    },
                )?],
                lines: vec![format!("risk {risk}")],
                passed: true,
            })
        }
        "grad-check" => {
            let s = settings!(cfg, command, GradCheck);
            let r = grad_check(&problem, &s, &quad, seed)?;
            Ok(Outcome {
                lines: vec![
                    format!("samples {} (rejected {})", r.samples, r.rejected),
                    format!("max relative error, empirical {:e}", r.max_rel_empirical),
                    format!("max relative error, population {:e}", r.max_rel_population),
                    format!("smoothed limit checked {} failures {}", r.smooth_checked, r.smooth_failures),
                ],
                passed: r.passed(),
                artifacts: vec![Artifact::json("grad_check.json", &r)?],
            })
        }
        "train" => train(cfg, theta),
        "trap-prob" => {
            let s = settings!(cfg, command, TrapProb);
            let init = cfg.init();
            let e = trap_probability(&init, &problem.domain, s.width, s.samples, seed)?;
            #[derive(Serialize)]
            struct Out<'a> {
                p_hat: f64,
                stderr: f64,
                samples: usize,
                seed: u64,
                init: &'a crate::landscape::InitSpec,
            }
            Ok(Outcome {
                lines: vec![format!("p_hat {} ± {} (n = {})", e.p, e.stderr, e.samples)],
                passed: true,
                artifacts: vec![Artifact::json(
                    "trap_prob.json",
                    &Out {
                        p_hat: e.p,
                        stderr: e.stderr,
                        samples: e.samples,
                        seed,
                        init: &init,
                    },
                )?],
            })
        }
        "sweep" => {
            let s = settings!(cfg, command, Sweep);
            let r = nonconvergence_sweep(&problem, &cfg.sweep_config(&s), &quad, seed, s.traces)?;
            let mut artifacts = vec![
                Artifact::new("summary.csv", r.summary_csv()?),
                Artifact::new("trials.csv", r.trials_csv()?),
                Artifact::json("sweep.json", &r)?,
            ];
            for t in &r.trials {
                if let Some(tr) = &t.trace {
                    artifacts.push(Artifact::json_lines(
                        format!("traces/w{}_t{}.jsonl", t.width, t.trial),
                        &tr.snapshots,
                    )?);
                }
            }
            let mut lines: Vec<String> = r
                .widths
                .iter()
                .map(|w| {
                    format!(
                        "H={} trapped {}/{} (predicted {:.4}) nonconverged {:.4} m_hat {:e} eps {:e}",
                        w.width, w.trapped, w.trials, w.predicted_trapped, w.nonconverged_fraction, w.m_hat, w.eps
                    )
                })
                .collect();
            lines.extend(
                r.checks
                    .iter()
                    .map(|c| format!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)),
            );
            Ok(Outcome {
                passed: r.passed(),
                artifacts,
                lines,
            })
        }
        "hierarchy" => {
            let s = settings!(cfg, command, Hierarchy);
            let r = hierarchy_experiment(&problem, s.top, &s.inf, &quad, seed, s.improve_floor)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["width", "m_hat", "embedded_risk", "embedding_gap", "improved_risk"])?;
            for l in &r.levels {
                w.write_record([
                    l.width.to_string(),
                    l.m_hat.to_string(),
                    l.embedded_risk.to_string(),
                    l.embedding_gap.to_string(),
                    l.improved_risk.map(|v| v.to_string()).unwrap_or_default(),
                ])?;
            }
            let table = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            let mut lines: Vec<String> = r.levels.iter().map(|l| format!("m_hat[{}] {:e}", l.width, l.m_hat)).collect();
            lines.extend(
                r.checks
                    .iter()
                    .map(|c| format!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)),
            );
            let mut passed = r.passed();
            let mut artifacts = vec![Artifact::json("hierarchy.json", &r)?, Artifact::new("hierarchy.csv", table)];
            if let Some(h) = s.near_opt {
                let n = nearopt_no_inactive_check(&problem, h, &s.inf, &quad, seed)?;
                lines.push(format!(
                    "{} near-optimal points at H={h} have no inactive neuron: {} considered, {} excluded, {} violations",
                    if n.passed() { "PASS" } else { "FAIL" },
                    n.considered,
                    n.excluded,
                    n.violations
                ));
                passed &= n.passed();
                artifacts.push(Artifact::json("near_opt.json", &n)?);
            }
            Ok(Outcome { artifacts, lines, passed })
        }
        "embed" => embed(cfg, theta),
        "lyapunov" => {
            let s = settings!(cfg, command, Lyapunov);
            let r = lyapunov_suite(&problem, &s, &quad, seed)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            for p in &r.gd.points {
                w.serialize(p)?;
            }
            let table = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            let g = &r.gd;
            Ok(Outcome {
                lines: vec![
                    format!("sandwich violations {} of {}", r.sandwich_violations, r.sandwich_samples),
                    format!(
                        "identity max relative gap {:e} over {} points",
                        r.identity_max_gap, r.identity_samples
                    ),
                    format!(
                        "step threshold {:e}, sup gamma {:e}, below {}",
                        g.threshold, g.gamma_max, g.below_threshold
                    ),
                    format!(
                        "V non-increasing before the first hit: {} violations; first hit {:?}; min risk {} (nu + eps = {})",
                        g.monotonicity_violations,
                        g.first_hit,
                        g.min_risk,
                        g.nu + g.eps
                    ),
                ],
                passed: r.passed(),
                artifacts: vec![Artifact::json("lyapunov.json", &r)?, Artifact::new("lyapunov.csv", table)],
            })
        }
        other => Err(Error::InvalidArgument(format!("unknown command `{other}`"))),
    }
}

fn train(cfg: &RunConfig, theta: Option<&ParamVector>) -> Result<Outcome> {
    let s = settings!(cfg, "train", Train);
    let problem = cfg.problem()?;
    let quad = cfg.quadrature();
    let seed = cfg.seed;
    let opt = cfg.optimizer();
    let th0 = match (theta, &cfg.model) {
        (Some(t), _) => t.clone(),
        (None, Some(m @ ModelConfig::Shallow { .. })) => {
            let Arch::Shallow(arch) = m.arch(problem.dim())? else {
                unreachable!()
            };
            let mut rng = stream_rng(seed, stream_id(&[tags::INIT]));
            cfg.init().init_shallow(&arch, &mut rng)
        }
        _ => {
            return Err(Error::Config {
                path: "model".into(),
                message: "train needs a shallow model block or --theta".into(),
            })
        }
    };
    let arch = th0.arch.clone();
    let trapped0 = match &arch {
        Arch::Shallow(_) => trapped_set(&th0, &problem.domain)?,
        Arch::Deep(_) => Vec::new(),
    };
    let frozen: Vec<(usize, u64)> = match &arch {
        Arch::Shallow(sa) => trapped0
            .iter()
            .flat_map(|&i| sa.neuron_inner_indices(i).unwrap())
            .map(|k| (k, th0.values[k].to_bits()))
            .collect(),
        Arch::Deep(_) => Vec::new(),
    };
    let noise = cfg.problem.noise;
    let validation = noisy_pairs(&problem, &noise, 256, stream_id(&[tags::PROBE, seed]))?;
    let mut source = |theta: &[f64], n: usize, seed: u64| -> Result<Vec<f64>> {
        let mut rng = stream_rng(seed, stream_id(&[tags::BATCH, n as u64]));
        let xs = sample_with(&problem.domain, &problem.measure, s.batch, &mut rng)?;
        let pairs: Vec<Pair> = xs
            .into_iter()
            .map(|x| {
                let y = problem.target.eval(&x) + noise.sample(&mut rng);
                Pair { x, y }
            })
            .collect();
        gen_gradient_empirical(&ParamVector::new(arch.clone(), theta.to_vec())?, &pairs)
    };
    let mut frozen_ok = true;
    let mut obs = |n: usize, theta: &[f64], gn: Option<f64>| -> Result<Snapshot> {
        if frozen.iter().any(|&(k, b)| theta[k].to_bits() != b) {
            frozen_ok = false;
        }
        let th = ParamVector::new(arch.clone(), theta.to_vec())?;
        let mut snap = Snapshot::bare(n, theta, gn);
        snap.population_risk = Some(risk_population(&th, &problem, &quad)?);
        snap.empirical_risk = Some(risk_empirical(&th, &validation)?);
        if let Arch::Shallow(_) = arch {
            snap.inactive = crate::landscape::inactive_set(&th, &problem.domain)?;
            snap.strictly_trapped = trapped_set(&th, &problem.domain)?;
        }
        Ok(snap)
    };
    let trace = run(&opt, &th0.values, &mut source, s.steps, seed, s.cadence, &mut obs)?;
    let last = trace.snapshots.last().expect("final snapshot");
    let final_theta = ParamVector::new(arch.clone(), trace.final_theta.clone())?;
    #[derive(Serialize)]
    struct Out<'a> {
        seed: u64,
        steps: usize,
        final_risk: Option<f64>,
        trapped_at_init: &'a [usize],
        trapped_params_frozen: bool,
        final_theta: &'a ParamVector,
    }
    let lines = vec![
        format!("final population risk {}", last.population_risk.unwrap_or(f64::NAN)),
        format!("trapped at init {:?}; parameters frozen {}", trapped0, frozen_ok),
    ];
    Ok(Outcome {
        artifacts: vec![
            Artifact::json_lines("trace.jsonl", &trace.snapshots)?,
            Artifact::json(
                "train.json",
                &Out {
                    seed,
                    steps: s.steps,
                    final_risk: last.population_risk,
                    trapped_at_init: &trapped0,
                    trapped_params_frozen: frozen_ok,
                    final_theta: &final_theta,
                },
            )?,
        ],
        lines,
        passed: frozen_ok,
    })
}

fn embed(cfg: &RunConfig, theta: Option<&ParamVector>) -> Result<Outcome> {
    let s = settings!(cfg, "embed", Embed);
    let problem = cfg.problem()?;
    let quad = cfg.quadrature();
    let th = theta.ok_or_else(|| Error::Config {
        path: "theta".into(),
        message: "embed needs --theta".into(),
    })?;
    let out = match (&th.arch, s.width, &s.dims) {
        (Arch::Shallow(_), Some(w), _) => embed_shallow(th, w)?,
        (Arch::Deep(_), _, Some(d)) => embed_deep(th, d)?,
        _ => {
            return Err(Error::Config {
                path: "experiment".into(),
                message: "embed needs `width` for shallow and `dims` for deep networks".into(),
            })
        }
    };
    let mut rng = stream_rng(cfg.seed, stream_id(&[tags::PROBE]));
    let pts = sample_with(&problem.domain, &problem.measure, 100, &mut rng)?;
    let gap = realization_gap(th, &out, &pts)?;
    let (r0, r1) = (risk_population(th, &problem, &quad)?, risk_population(&out, &problem, &quad)?);
    #[derive(Serialize)]
    struct Out {
        realization_gap: f64,
        risk_before: f64,
        risk_after: f64,
    }
    Ok(Outcome {
        lines: vec![format!("realization gap {gap:e}; risk {r0} -> {r1}")],
        passed: gap <= 1e-12 && (r0 - r1).abs() <= 1e-12,
        artifacts: vec![
            Artifact::json("embedded.json", &out)?,
            Artifact::json(
                "embed.json",
                &Out {
                    realization_gap: gap,
                    risk_before: r0,
                    risk_after: r1,
                },
            )?,
        ],
    })
}
