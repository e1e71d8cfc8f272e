//! Runs algorithm comparisons on the benchmark instances and writes CSV.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::engine::{
    eta_max_bound, sample_schedule, simulate, simulate_primal_dual, simulate_prox_dgd, AsyncConfig,
    Horizon, Parameterization, Relaxation, SimulationOutput, SyncClock,
};
use crate::graph::Network;
use crate::problems::ProblemInstance;
use crate::sync::{
    fixed_point_residual, max_global_alpha, pg_extra_step, prox_dgd_step, SolverState, StepSize,
};
use crate::{Error, Result};

use super::instances::{
    gen_cs_instance, gen_geomedian_instance, gen_logistic_instance, mc_generate, Instance,
    MatrixCompletionData,
};
use super::matcomp::{mc_sync_iteration, CompletionError, MatrixCompletionRule, MatrixCompletionState};
use super::metrics::ErrorReference;
use super::reference::reference_solution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Cs,
    Logistic,
    Matcomp,
    Geomedian,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Cs,
        ExperimentKind::Logistic,
        ExperimentKind::Matcomp,
        ExperimentKind::Geomedian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Cs => "cs",
            ExperimentKind::Logistic => "logistic",
            ExperimentKind::Matcomp => "matcomp",
            ExperimentKind::Geomedian => "geomedian",
        }
    }

    /// Benchmark defaults for this experiment.
    pub fn defaults(self) -> Defaults {
        match self {
            ExperimentKind::Cs => Defaults {
                alpha_pd: 1.0,
                alpha_dgd: 0.05,
                eta_pd: 0.288,
                eta_dgd: 0.36,
            },
            ExperimentKind::Logistic => Defaults {
                alpha_pd: 0.4,
                alpha_dgd: 0.4,
                eta_pd: 0.224,
                eta_dgd: 0.224,
            },
            ExperimentKind::Matcomp => Defaults {
                alpha_pd: 0.1,
                alpha_dgd: 0.1,
                eta_pd: 0.204,
                eta_dgd: 0.204,
            },
            ExperimentKind::Geomedian => Defaults {
                alpha_pd: 1.0,
                alpha_dgd: 1.0,
                eta_pd: 0.4,
                eta_dgd: 0.4,
            },
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}` (expected cs, logistic, matcomp or geomedian)")))
    }
}

/// Step sizes `α` and global relaxations `η` (so that `η_i = η/(n q_i)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defaults {
    pub alpha_pd: f64,
    pub alpha_dgd: f64,
    pub eta_pd: f64,
    pub eta_dgd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "pg-extra")]
    PgExtra,
    #[serde(rename = "async-pd")]
    AsyncPd,
    #[serde(rename = "prox-dgd")]
    ProxDgd,
    #[serde(rename = "async-prox-dgd")]
    AsyncProxDgd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::PgExtra,
        Algorithm::AsyncPd,
        Algorithm::ProxDgd,
        Algorithm::AsyncProxDgd,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::PgExtra => "pg-extra",
            Algorithm::AsyncPd => "async-pd",
            Algorithm::ProxDgd => "prox-dgd",
            Algorithm::AsyncProxDgd => "async-prox-dgd",
        }
    }

    fn is_primal_dual(self) -> bool {
        matches!(self, Algorithm::PgExtra | Algorithm::AsyncPd)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}` (expected pg-extra, async-pd, prox-dgd or async-prox-dgd)")))
    }
}

/// Simulated time span used when no horizon is given.
pub const DEFAULT_HORIZON_MS: f64 = 2760.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub algorithms: Vec<Algorithm>,
    pub seed: u64,
    pub horizon_ms: f64,
    pub record_every: u64,
    /// Overrides the step size of every algorithm.
    pub alpha: Option<f64>,
    /// Overrides the global relaxation of every asynchronous algorithm.
    pub eta: Option<f64>,
    pub timing: Parameterization,
    pub out: Option<PathBuf>,
    /// Where reference solutions are cached; defaults to `.dcl-cache` next
    /// to the output file.
    pub cache_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, seed: u64) -> Self {
        let algorithms = match experiment {
            ExperimentKind::Cs => Algorithm::ALL.to_vec(),
            _ => vec![Algorithm::PgExtra, Algorithm::AsyncPd],
        };
        ExperimentConfig {
            experiment,
            algorithms,
            seed,
            horizon_ms: DEFAULT_HORIZON_MS,
            record_every: 10,
            alpha: None,
            eta: None,
            timing: Parameterization::Rate,
            out: None,
            cache_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("at least one algorithm is required".into()));
        }
        if !(self.horizon_ms > 0.0) || !self.horizon_ms.is_finite() {
            return Err(Error::HorizonZero);
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("eta", self.eta)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if self.experiment == ExperimentKind::Matcomp
            && self.algorithms.iter().any(|a| !a.is_primal_dual())
        {
            return Err(Error::Config(
                "matrix completion supports only pg-extra and async-pd".into(),
            ));
        }
        Ok(())
    }

    fn alpha_for(&self, algo: Algorithm) -> f64 {
        let d = self.experiment.defaults();
        self.alpha.unwrap_or(if algo.is_primal_dual() { d.alpha_pd } else { d.alpha_dgd })
    }

    fn eta_for(&self, algo: Algorithm) -> f64 {
        let d = self.experiment.defaults();
        self.eta.unwrap_or(if algo.is_primal_dual() { d.eta_pd } else { d.eta_dgd })
    }

    fn cache_dir(&self) -> Option<PathBuf> {
        self.cache_dir.clone().or_else(|| {
            self.out.as_ref().map(|out| {
                out.parent()
                    .filter(|p| !p.as_os_str().is_empty())
                    .unwrap_or(Path::new("."))
                    .join(".dcl-cache")
            })
        })
    }

    fn async_config(&self, n: usize, algo: Algorithm) -> AsyncConfig {
        let mut cfg = AsyncConfig::benchmark(
            n,
            self.seed,
            Relaxation::Global(self.eta_for(algo)),
            Horizon::time(self.horizon_ms),
        );
        cfg.parameterization = self.timing;
        cfg.record_every = self.record_every;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub algo: String,
    pub seed: u64,
    pub k: u64,
    pub sim_time_ms: f64,
    pub rel_error: f64,
    pub residual: f64,
}

pub const CSV_HEADER: &str = "algo,seed,k,sim_time_ms,rel_error,residual";

/// Floats use the shortest representation that parses back to the same value.
pub fn write_csv<W: Write>(mut out: W, records: &[TrajectoryRecord]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{:e},{:e},{:e}",
            r.algo, r.seed, r.k, r.sim_time_ms, r.rel_error, r.residual
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<TrajectoryRecord>> {
    let mut lines = BufReader::new(input).lines();
    match lines.next().transpose()? {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(Error::Config(format!("unexpected CSV header {other:?}"))),
    }
    let bad = |line: &str| Error::Config(format!("malformed CSV row `{line}`"));
    lines
        .map(|line| {
            let line = line?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(bad(&line));
            }
            let float = |s: &str| s.parse::<f64>().map_err(|_| bad(&line));
            Ok(TrajectoryRecord {
                algo: fields[0].to_string(),
                seed: fields[1].parse().map_err(|_| bad(&line))?,
                k: fields[2].parse().map_err(|_| bad(&line))?,
                sim_time_ms: float(fields[3])?,
                rel_error: float(fields[4])?,
                residual: float(fields[5])?,
            })
        })
        .collect()
}

/// Writes through a temporary file in the same directory, so a failed run
/// never leaves a partial CSV behind.
pub fn write_csv_file(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("output path {} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.partial", name.to_string_lossy()));
    let result = fs::File::create(&tmp)
        .map_err(Error::from)
        .and_then(|f| write_csv(BufWriter::new(f), records))
        .and_then(|()| fs::rename(&tmp, path).map_err(Error::from));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// The problem side of an experiment.
enum Setup {
    Convex { inst: Instance, net: Network },
    Completion { data: MatrixCompletionData, net: Network },
}

fn setup(kind: ExperimentKind, seed: u64) -> Result<Setup> {
    let convex = |inst: Instance| -> Result<Setup> {
        let net = Network::new(inst.spec.clone())?;
        Ok(Setup::Convex { inst, net })
    };
    match kind {
        ExperimentKind::Cs => convex(gen_cs_instance(seed)?),
        ExperimentKind::Logistic => convex(gen_logistic_instance(seed)?),
        ExperimentKind::Geomedian => convex(gen_geomedian_instance(seed)?),
        ExperimentKind::Matcomp => {
            let data = mc_generate(seed)?;
            let net = Network::new(data.spec.clone())?;
            Ok(Setup::Completion { data, net })
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CachedReference {
    experiment: ExperimentKind,
    seed: u64,
    x_star: Vec<f64>,
}

/// `x*` for an instance, read from or stored to `cache_dir` when given.
pub fn cached_reference(
    kind: ExperimentKind,
    seed: u64,
    prob: &ProblemInstance,
    net: &Network,
    cache_dir: Option<&Path>,
) -> Result<DVector<f64>> {
    let path = cache_dir.map(|d| d.join(format!("{kind}-{seed}.json")));
    if let Some(path) = &path {
        if let Ok(text) = fs::read_to_string(path) {
            match serde_json::from_str::<CachedReference>(&text) {
                Ok(c) if c.experiment == kind && c.seed == seed && c.x_star.len() == prob.p => {
                    return Ok(DVector::from_vec(c.x_star));
                }
                _ => log::warn!("ignoring unusable reference cache {}", path.display()),
            }
        }
    }
    let x_star = reference_solution(prob, net)?;
    if let Some(path) = &path {
        let doc = CachedReference {
            experiment: kind,
            seed,
            x_star: x_star.iter().copied().collect(),
        };
        let stored = path
            .parent()
            .map_or(Ok(()), fs::create_dir_all)
            .and_then(|()| fs::write(path, serde_json::to_string(&doc).expect("plain data serializes")));
        if let Err(e) = stored {
            log::warn!("could not cache reference at {}: {e}", path.display());
        }
    }
    Ok(x_star)
}

fn to_records(algo: Algorithm, seed: u64, out: &SimulationOutput) -> Vec<TrajectoryRecord> {
    out.trajectory
        .iter()
        .map(|p| TrajectoryRecord {
            algo: algo.label().to_string(),
            seed,
            k: p.k,
            sim_time_ms: p.time_ms,
            rel_error: p.rel_error,
            residual: p.residual,
        })
        .collect()
}

/// Runs a synchronous iteration under charged barrier timing, recording
/// every `record_every` iterations and at the end.
fn run_synchronous<S>(
    cfg: &ExperimentConfig,
    algo: Algorithm,
    clock: &mut SyncClock,
    state: &mut S,
    mut step: impl FnMut(&mut S) -> Result<()>,
    mut observe: impl FnMut(&S) -> Result<(f64, f64)>,
) -> Result<Vec<TrajectoryRecord>> {
    let mut records = Vec::new();
    let mut push = |k: u64, t: f64, s: &S| -> Result<()> {
        let (rel_error, residual) = observe(s)?;
        if !rel_error.is_finite() || !residual.is_finite() {
            return Err(Error::Numerical(format!(
                "{algo} diverged at iteration {k} (rel_error {rel_error}, residual {residual})"
            )));
        }
        records.push(TrajectoryRecord {
            algo: algo.label().to_string(),
            seed: cfg.seed,
            k,
            sim_time_ms: t,
            rel_error,
            residual,
        });
        Ok(())
    };
    push(0, 0.0, state)?;
    let mut k = 0u64;
    let mut last = 0u64;
    loop {
        let d = clock.next_duration();
        if clock.now() + d > cfg.horizon_ms {
            break;
        }
        clock.advance(d);
        step(state)?;
        k += 1;
        if k % cfg.record_every == 0 {
            push(k, clock.now(), state)?;
            last = k;
        }
    }
    if last != k {
        push(k, clock.now(), state)?;
    }
    Ok(records)
}

fn run_convex(
    cfg: &ExperimentConfig,
    inst: &Instance,
    net: &Network,
    algo: Algorithm,
    reference: &ErrorReference,
) -> Result<Vec<TrajectoryRecord>> {
    let prob = &inst.prob;
    let alpha = cfg.alpha_for(algo);
    let async_cfg = cfg.async_config(net.n(), algo);
    match algo {
        Algorithm::PgExtra | Algorithm::ProxDgd => {
            let mut clock = SyncClock::new(async_cfg.timing_law()?, net.m(), cfg.seed);
            let step = StepSize::Global(alpha);
            let mut state = SolverState::initial(prob, net);
            if algo == Algorithm::PgExtra {
                crate::sync::check_step_size(prob, net, &step);
                run_synchronous(
                    cfg,
                    algo,
                    &mut clock,
                    &mut state,
                    |s| {
                        *s = pg_extra_step(s, prob, net, &step)?;
                        Ok(())
                    },
                    |s| Ok((reference.rel_error(&s.x)?, fixed_point_residual(s, prob, net, &step)?)),
                )
            } else {
                run_synchronous(
                    cfg,
                    algo,
                    &mut clock,
                    &mut state.x,
                    |x| {
                        *x = prox_dgd_step(x, prob, &net.weights, alpha)?;
                        Ok(())
                    },
                    |x| {
                        let next = prox_dgd_step(x, prob, &net.weights, alpha)?;
                        Ok((reference.rel_error(x)?, (x - next).norm()))
                    },
                )
            }
        }
        Algorithm::AsyncPd => {
            let step = StepSize::Global(alpha);
            crate::sync::check_step_size(prob, net, &step);
            let out = simulate_primal_dual(prob, net, step, Some(reference.clone()), &async_cfg)?;
            Ok(to_records(algo, cfg.seed, &out))
        }
        Algorithm::AsyncProxDgd => {
            let out = simulate_prox_dgd(prob, net, alpha, Some(reference.clone()), &async_cfg)?;
            Ok(to_records(algo, cfg.seed, &out))
        }
    }
}

fn run_completion(
    cfg: &ExperimentConfig,
    data: &MatrixCompletionData,
    net: &Network,
    algo: Algorithm,
) -> Result<Vec<TrajectoryRecord>> {
    let alpha = cfg.alpha_for(algo);
    let start = MatrixCompletionState::initialize(data, cfg.seed);
    let async_cfg = cfg.async_config(net.n(), algo);
    match algo {
        Algorithm::PgExtra => {
            let metric = CompletionError::new(data.a.clone(), &start.completion())?;
            let mut clock = SyncClock::new(async_cfg.timing_law()?, net.m(), cfg.seed);
            let mut state = start;
            run_synchronous(
                cfg,
                algo,
                &mut clock,
                &mut state,
                |s| mc_sync_iteration(s, data, net, alpha),
                |s| Ok((metric.rel_error(&s.completion()), s.consensus_disagreement())),
            )
        }
        Algorithm::AsyncPd => {
            let mut rule = MatrixCompletionRule::new(data, net, alpha, start)?;
            let out = simulate(net, &mut rule, &async_cfg)?;
            Ok(to_records(algo, cfg.seed, &out))
        }
        _ => Err(Error::Config(format!("{algo} does not apply to matrix completion"))),
    }
}

/// Runs every requested algorithm on the instance generated from the seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<TrajectoryRecord>> {
    cfg.validate()?;
    let mut records = Vec::new();
    match setup(cfg.experiment, cfg.seed)? {
        Setup::Convex { inst, net } => {
            let cache = cfg.cache_dir();
            let x_star = cached_reference(cfg.experiment, cfg.seed, &inst.prob, &net, cache.as_deref())?;
            let reference = ErrorReference::consensus(&x_star, net.n())?;
            for &algo in &cfg.algorithms {
                info!("running {algo} on {} (seed {})", cfg.experiment, cfg.seed);
                records.extend(run_convex(cfg, &inst, &net, algo, &reference)?);
            }
        }
        Setup::Completion { data, net } => {
            for &algo in &cfg.algorithms {
                info!("running {algo} on {} (seed {})", cfg.experiment, cfg.seed);
                records.extend(run_completion(cfg, &data, &net, algo)?);
            }
        }
    }
    Ok(records)
}

/// Runs the experiment and writes the CSV to `cfg.out` (or to `sink`).
pub fn run_to_csv<W: Write>(cfg: &ExperimentConfig, sink: W) -> Result<usize> {
    let records = run_experiment(cfg)?;
    match &cfg.out {
        Some(path) => write_csv_file(path, &records)?,
        None => write_csv(sink, &records)?,
    }
    Ok(records.len())
}

/// Step-size and relaxation bounds of an experiment's instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub n: usize,
    pub m: usize,
    pub rho_min: f64,
    pub kappa: f64,
    /// `2ρ_min/L`, absent when every `s_i` is constant.
    pub alpha_max: Option<f64>,
    pub q: Vec<f64>,
    pub eta_max_tau0: f64,
    /// Largest delay of the benchmark schedule over the horizon.
    pub tau_observed: u64,
    pub eta_max_observed: f64,
}

pub fn bounds(cfg: &ExperimentConfig) -> Result<BoundsReport> {
    if !(cfg.horizon_ms > 0.0) || !cfg.horizon_ms.is_finite() {
        return Err(Error::HorizonZero);
    }
    let (net, alpha_max) = match setup(cfg.experiment, cfg.seed)? {
        Setup::Convex { inst, net } => {
            let a = max_global_alpha(&net.spectral, &inst.prob).ok();
            (net, a)
        }
        Setup::Completion { net, .. } => (net, None),
    };
    let async_cfg = cfg.async_config(net.n(), Algorithm::AsyncPd);
    let q = async_cfg.activation_q()?;
    let q_min = q.iter().copied().fold(1.0, f64::min);
    let tau = sample_schedule(&net, &async_cfg)?.delays.bound();
    let kappa = net.spectral.kappa;
    Ok(BoundsReport {
        n: net.n(),
        m: net.m(),
        rho_min: net.spectral.rho_min,
        kappa,
        alpha_max,
        eta_max_tau0: eta_max_bound(net.n(), q_min, kappa, 0),
        eta_max_observed: eta_max_bound(net.n(), q_min, kappa, tau),
        tau_observed: tau,
        q,
    })
}
