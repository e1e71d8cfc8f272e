//! Discrete-event simulation of asynchronous agents.
//!
//! Every agent computes continuously. A round starts right after the previous
//! one finishes: the agent snapshots its own rows and the latest mailbox
//! values, and when the round's sampled compute time has elapsed it applies
//! the relaxed update
//!
//! `x^i ← x^i + η_i (x̃^i − x^i)`, `y^e ← y^e + η_i (ỹ^e − y^e)` for `e ∈ L_i`,
//!
//! then sends its new primal row (and the dual of the shared edge, if owned)
//! to each neighbor with a sampled latency. Each completed update increments
//! the global counter `k`; stored values carry the counter right after they
//! were written, and the delay of a read is `k − stamp`. An agent is the only
//! writer of its own rows, so its own-row delay is zero.

mod mailbox;
mod queue;
pub mod rules;
pub mod timing;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::experiments::metrics::ErrorReference;
use crate::graph::Network;
use crate::problems::ProblemInstance;
use crate::rng::{stream, Stream};
use crate::sync::StepSize;
use crate::{Error, Result};

pub use mailbox::{Mailbox, Stamped};
pub use queue::EventQueue;
pub use rules::{LocalRule, NullRule, Observation, PrimalDualRule, Proposal, ProxDgdRule, ReadView};
pub use timing::{
    eta_max_bound, predicted_q, relaxation_parameters, sample_compute_params, Parameterization,
    Sampling, SyncClock, TimingLaw, DEFAULT_COMM_PARAM,
};

/// Global `η` (mapped to `η_i = η/(n q_i)`) or explicit per-agent values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relaxation {
    Global(f64),
    PerAgent(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub time_ms: f64,
    pub max_updates: Option<u64>,
    /// Stop at the first recorded relative error below this level.
    pub target_rel_error: Option<f64>,
}

impl Horizon {
    pub fn time(time_ms: f64) -> Self {
        Horizon {
            time_ms,
            max_updates: None,
            target_rel_error: None,
        }
    }

    pub fn updates(max_updates: u64) -> Self {
        Horizon {
            time_ms: f64::INFINITY,
            max_updates: Some(max_updates),
            target_rel_error: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceOptions {
    /// Keep the per-update delay vectors.
    pub delays: bool,
    /// Keep a log of every row write.
    pub writes: bool,
    /// Keep the event log.
    pub events: bool,
    /// Keep the full state at every recorded update.
    pub states: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsyncConfig {
    /// Per-agent compute parameters, read according to `parameterization`.
    pub compute_params: Vec<f64>,
    pub comm_param: f64,
    #[serde(default)]
    pub parameterization: Parameterization,
    #[serde(default)]
    pub sampling: Sampling,
    pub relaxation: Relaxation,
    pub horizon: Horizon,
    pub seed: u64,
    #[serde(default)]
    pub lockstep: bool,
    pub record_every: u64,
    #[serde(default)]
    pub trace: TraceOptions,
}

impl AsyncConfig {
    /// Benchmark timing (compute durations `exp(1/μ_i)` with
    /// `μ_i = 2 + |N(0,1)|`, latencies `exp(1/0.6)`, both read as rates)
    /// with the given relaxation and horizon.
    pub fn benchmark(n: usize, seed: u64, relaxation: Relaxation, horizon: Horizon) -> Self {
        AsyncConfig {
            compute_params: sample_compute_params(n, seed),
            comm_param: DEFAULT_COMM_PARAM,
            parameterization: Parameterization::Rate,
            sampling: Sampling::Exponential,
            relaxation,
            horizon,
            seed,
            lockstep: false,
            record_every: 1,
            trace: TraceOptions::default(),
        }
    }

    pub fn timing_law(&self) -> Result<TimingLaw> {
        TimingLaw::new(
            &self.compute_params,
            self.comm_param,
            self.parameterization,
            self.sampling,
        )
    }

    /// Activation probabilities the relaxation is scaled by: uniform in
    /// lockstep mode, otherwise proportional to the compute rates.
    pub fn activation_q(&self) -> Result<Vec<f64>> {
        let law = self.timing_law()?;
        if self.lockstep {
            Ok(vec![1.0 / law.n() as f64; law.n()])
        } else {
            predicted_q(&law.compute_means)
        }
    }

    pub fn eta(&self) -> Result<Vec<f64>> {
        let n = self.compute_params.len();
        match &self.relaxation {
            Relaxation::Global(eta) => relaxation_parameters(&self.activation_q()?, *eta),
            Relaxation::PerAgent(v) if v.len() != n => Err(Error::ShapeMismatch(format!(
                "{} relaxation parameters for {n} agents",
                v.len()
            ))),
            Relaxation::PerAgent(v) => match v.iter().find(|e| !(**e > 0.0)) {
                Some(&bad) => Err(Error::NonPositiveScale(bad)),
                None => Ok(v.clone()),
            },
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.compute_params.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} compute means for {n} agents",
                self.compute_params.len()
            )));
        }
        let h = &self.horizon;
        if !(h.time_ms > 0.0) || h.max_updates == Some(0) {
            return Err(Error::HorizonZero);
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub k: u64,
    pub time_ms: f64,
    pub rel_error: f64,
    pub residual: f64,
}

/// Delay vectors of one update, in update counts. Entries the updating agent
/// did not read are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayRecord {
    pub k: u64,
    pub agent: usize,
    pub tau: Vec<u64>,
    pub delta: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DelayTrace {
    pub max_tau: u64,
    pub max_delta: u64,
    pub records: Option<Vec<DelayRecord>>,
}

impl DelayTrace {
    /// Uniform bound over primal and dual delays.
    pub fn bound(&self) -> u64 {
        self.max_tau.max(self.max_delta)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationStats {
    pub counts: Vec<u64>,
}

impl ActivationStats {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn q_hat(&self) -> Vec<f64> {
        let total = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowRef {
    Primal(usize),
    Dual(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteRecord {
    pub k: u64,
    pub writer: usize,
    pub row: RowRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Compute,
    Deliver,
    Discard,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Compute => "compute",
            EventKind::Deliver => "deliver",
            EventKind::Discard => "discard",
        }
    }
}

/// One processed event. For compute events `k` is the counter after the
/// update; for deliveries it is the stamp carried by the message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub time_ms: f64,
    pub kind: EventKind,
    pub agent: usize,
    pub k: u64,
}

/// Writes an event log as CSV with header `time_ms,kind,agent,k`.
pub fn write_event_log<W: Write>(mut out: W, events: &[EventRecord]) -> Result<()> {
    writeln!(out, "time_ms,kind,agent,k")?;
    for e in events {
        writeln!(out, "{:e},{},{},{}", e.time_ms, e.kind.as_str(), e.agent, e.k)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub trajectory: Vec<TrajectoryPoint>,
    pub delays: DelayTrace,
    pub activation: ActivationStats,
    pub eta: Vec<f64>,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub updates: u64,
    pub end_time_ms: f64,
    pub reached_target: bool,
    pub writes: Option<Vec<WriteRecord>>,
    pub events: Option<Vec<EventRecord>>,
    pub states: Option<Vec<(u64, DMatrix<f64>, DMatrix<f64>)>>,
}

#[derive(Debug)]
enum Event {
    ComputeDone(usize),
    Deliver(Box<Message>),
}

#[derive(Debug)]
struct Message {
    dest: usize,
    src: usize,
    stamp: u64,
    x: DVector<f64>,
    y: Option<(usize, DVector<f64>)>,
}

/// Values an agent captured at the start of its round.
#[derive(Debug, Clone)]
struct Snapshot {
    x: Vec<DVector<f64>>,
    x_stamps: Vec<u64>,
    y: Vec<DVector<f64>>,
    y_stamps: Vec<u64>,
}

/// Mutable simulation state shared by the event-driven and lockstep loops.
struct Sim<'a, R: LocalRule> {
    net: &'a Network,
    rule: &'a mut R,
    cfg: &'a AsyncConfig,
    eta: Vec<f64>,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    x_stamps: Vec<u64>,
    y_stamps: Vec<u64>,
    k: u64,
    now: f64,
    delays: DelayTrace,
    counts: Vec<u64>,
    trajectory: Vec<TrajectoryPoint>,
    last_recorded: Option<u64>,
    reached_target: bool,
    writes: Option<Vec<WriteRecord>>,
    events: Option<Vec<EventRecord>>,
    states: Option<Vec<(u64, DMatrix<f64>, DMatrix<f64>)>>,
}

impl<'a, R: LocalRule> Sim<'a, R> {
    fn new(net: &'a Network, rule: &'a mut R, cfg: &'a AsyncConfig) -> Result<Self> {
        cfg.validate(net.n())?;
        let eta = cfg.eta()?;
        let (x, y) = rule.initial_state();
        if x.shape() != (net.n(), rule.primal_dim()) || y.shape() != (net.m(), rule.dual_dim()) {
            return Err(Error::ShapeMismatch(format!(
                "initial X {:?}, Y {:?} for n = {}, m = {}",
                x.shape(),
                y.shape(),
                net.n(),
                net.m()
            )));
        }
        let t = cfg.trace;
        Ok(Sim {
            net,
            rule,
            cfg,
            eta,
            x,
            y,
            x_stamps: vec![0; net.n()],
            y_stamps: vec![0; net.m()],
            k: 0,
            now: 0.0,
            delays: DelayTrace {
                records: t.delays.then(Vec::new),
                ..DelayTrace::default()
            },
            counts: vec![0; net.n()],
            trajectory: Vec::new(),
            last_recorded: None,
            reached_target: false,
            writes: t.writes.then(Vec::new),
            events: t.events.then(Vec::new),
            states: t.states.then(Vec::new),
        })
    }

    fn record(&mut self) -> Result<()> {
        let obs = self.rule.observe(&self.x, &self.y)?;
        let state_finite = self.x.iter().chain(self.y.iter()).all(|v| v.is_finite());
        if !state_finite || obs.residual.is_infinite() || obs.rel_error.is_infinite() {
            return Err(Error::Numerical(format!(
                "state diverged at update {} (residual {})",
                self.k, obs.residual
            )));
        }
        self.trajectory.push(TrajectoryPoint {
            k: self.k,
            time_ms: self.now,
            rel_error: obs.rel_error,
            residual: obs.residual,
        });
        if let Some(states) = &mut self.states {
            states.push((self.k, self.x.clone(), self.y.clone()));
        }
        self.last_recorded = Some(self.k);
        if let Some(target) = self.cfg.horizon.target_rel_error {
            if obs.rel_error < target {
                self.reached_target = true;
            }
        }
        Ok(())
    }

    fn maybe_record(&mut self) -> Result<()> {
        if self.k % self.cfg.record_every == 0 {
            self.record()?;
        }
        Ok(())
    }

    fn updates_exhausted(&self) -> bool {
        self.cfg.horizon.max_updates.is_some_and(|m| self.k >= m)
    }

    /// Applies agent `i`'s relaxed update computed from `snap`.
    fn apply(&mut self, i: usize, snap: &Snapshot) -> Result<()> {
        let spec = &self.net.spec;
        let view = ReadView {
            agent: i,
            spec,
            x: &snap.x,
            y: &snap.y,
        };
        let proposal = self.rule.propose(&view)?;
        let eta = self.eta[i];
        let own_pos = spec.neighbors(i).binary_search(&i).expect("N_i contains i");

        // the agent is the only writer of its rows, so the snapshot of its own
        // rows equals the current values
        debug_assert_eq!(snap.x_stamps[own_pos], self.x_stamps[i]);
        let mut xi = self.x.row(i).transpose();
        xi += (&proposal.x - &snap.x[own_pos]) * eta;
        self.x.row_mut(i).copy_from(&xi.transpose());
        for (&e, ye_new) in spec.owned_edges(i).iter().zip(&proposal.y) {
            let mut ye = self.y.row(e).transpose();
            ye += (ye_new - view.y(e)) * eta;
            self.y.row_mut(e).copy_from(&ye.transpose());
        }

        let mut tau_max = 0;
        let mut delta_max = 0;
        let mut record = self.delays.records.as_ref().map(|_| DelayRecord {
            k: self.k,
            agent: i,
            tau: vec![0; self.net.n()],
            delta: vec![0; self.net.m()],
        });
        for (&j, &stamp) in spec.neighbors(i).iter().zip(&snap.x_stamps) {
            let tau = if j == i { 0 } else { self.k - stamp };
            tau_max = tau_max.max(tau);
            if let Some(r) = &mut record {
                r.tau[j] = tau;
            }
        }
        for (&e, &stamp) in spec.incident_edges(i).iter().zip(&snap.y_stamps) {
            let delta = if spec.owner(e) == i { 0 } else { self.k - stamp };
            delta_max = delta_max.max(delta);
            if let Some(r) = &mut record {
                r.delta[e] = delta;
            }
        }
        self.delays.max_tau = self.delays.max_tau.max(tau_max);
        self.delays.max_delta = self.delays.max_delta.max(delta_max);
        if let (Some(records), Some(r)) = (&mut self.delays.records, record) {
            records.push(r);
        }

        self.k += 1;
        self.counts[i] += 1;
        self.x_stamps[i] = self.k;
        for &e in spec.owned_edges(i) {
            self.y_stamps[e] = self.k;
        }
        if let Some(w) = &mut self.writes {
            w.push(WriteRecord {
                k: self.k,
                writer: i,
                row: RowRef::Primal(i),
            });
            w.extend(spec.owned_edges(i).iter().map(|&e| WriteRecord {
                k: self.k,
                writer: i,
                row: RowRef::Dual(e),
            }));
        }
        if let Some(ev) = &mut self.events {
            ev.push(EventRecord {
                time_ms: self.now,
                kind: EventKind::Compute,
                agent: i,
                k: self.k,
            });
        }
        self.rule.after_write(i, &xi)
    }

    /// Snapshot of agent `i`'s reads, with neighbor values from `mailbox`
    /// (or from the global state when `mailbox` is `None`).
    fn snapshot(&self, i: usize, mailbox: Option<&Mailbox>) -> Snapshot {
        let spec = &self.net.spec;
        let mut s = Snapshot {
            x: Vec::with_capacity(spec.neighbors(i).len()),
            x_stamps: Vec::with_capacity(spec.neighbors(i).len()),
            y: Vec::with_capacity(spec.incident_edges(i).len()),
            y_stamps: Vec::with_capacity(spec.incident_edges(i).len()),
        };
        for &j in spec.neighbors(i) {
            match mailbox.and_then(|mb| mb.primal(j)) {
                Some(stored) if j != i => {
                    s.x.push(stored.value.clone());
                    s.x_stamps.push(stored.stamp);
                }
                _ => {
                    s.x.push(self.x.row(j).transpose());
                    s.x_stamps.push(self.x_stamps[j]);
                }
            }
        }
        for &e in spec.incident_edges(i) {
            match mailbox.and_then(|mb| mb.dual(e)) {
                Some(stored) if spec.owner(e) != i => {
                    s.y.push(stored.value.clone());
                    s.y_stamps.push(stored.stamp);
                }
                _ => {
                    s.y.push(self.y.row(e).transpose());
                    s.y_stamps.push(self.y_stamps[e]);
                }
            }
        }
        s
    }

    fn finish(mut self) -> Result<SimulationOutput> {
        if self.last_recorded != Some(self.k) {
            self.record()?;
        }
        Ok(SimulationOutput {
            trajectory: self.trajectory,
            delays: self.delays,
            activation: ActivationStats {
                counts: self.counts,
            },
            eta: self.eta,
            x: self.x,
            y: self.y,
            updates: self.k,
            end_time_ms: self.now,
            reached_target: self.reached_target,
            writes: self.writes,
            events: self.events,
            states: self.states,
        })
    }

    fn run_events(mut self) -> Result<SimulationOutput> {
        let law = self.cfg.timing_law()?;
        let spec = &self.net.spec;
        let n = self.net.n();
        let mut compute_rng: ChaCha8Rng = stream(self.cfg.seed, Stream::ComputeTimes);
        let mut comm_rng: ChaCha8Rng = stream(self.cfg.seed, Stream::CommTimes);
        let mut mailboxes: Vec<Mailbox> = (0..n)
            .map(|i| {
                Mailbox::new(
                    spec,
                    i,
                    |j| self.x.row(j).transpose(),
                    |e| self.y.row(e).transpose(),
                )
            })
            .collect();
        let mut snapshots: Vec<Snapshot> =
            (0..n).map(|i| self.snapshot(i, Some(&mailboxes[i]))).collect();
        let mut queue = EventQueue::new();
        for (i, &mean) in law.compute_means.iter().enumerate() {
            queue.push(law.sample(&mut compute_rng, mean), Event::ComputeDone(i));
        }
        self.record()?;

        while let Some((t, event)) = queue.pop() {
            if t > self.cfg.horizon.time_ms || self.updates_exhausted() || self.reached_target {
                break;
            }
            self.now = t;
            match event {
                Event::ComputeDone(i) => {
                    let snap = std::mem::replace(
                        &mut snapshots[i],
                        Snapshot {
                            x: Vec::new(),
                            x_stamps: Vec::new(),
                            y: Vec::new(),
                            y_stamps: Vec::new(),
                        },
                    );
                    self.apply(i, &snap)?;
                    let xi = self.x.row(i).transpose();
                    for &j in spec.neighbors(i).iter().filter(|&&j| j != i) {
                        let shared = spec
                            .incident_edges(i)
                            .iter()
                            .copied()
                            .find(|&e| spec.other_end(e, i) == j && spec.owner(e) == i);
                        let msg = Message {
                            dest: j,
                            src: i,
                            stamp: self.k,
                            x: xi.clone(),
                            y: shared.map(|e| (e, self.y.row(e).transpose())),
                        };
                        let latency = law.sample(&mut comm_rng, law.comm_mean);
                        queue.push(t + latency, Event::Deliver(Box::new(msg)));
                    }
                    snapshots[i] = self.snapshot(i, Some(&mailboxes[i]));
                    let next = t + law.sample(&mut compute_rng, law.compute_means[i]);
                    queue.push(next, Event::ComputeDone(i));
                    self.maybe_record()?;
                }
                Event::Deliver(msg) => {
                    let mb = &mut mailboxes[msg.dest];
                    let mut accepted = mb.offer_primal(msg.src, &msg.x, msg.stamp);
                    if let Some((e, ye)) = &msg.y {
                        accepted |= mb.offer_dual(*e, ye, msg.stamp);
                    }
                    if let Some(ev) = &mut self.events {
                        ev.push(EventRecord {
                            time_ms: t,
                            kind: if accepted {
                                EventKind::Deliver
                            } else {
                                EventKind::Discard
                            },
                            agent: msg.dest,
                            k: msg.stamp,
                        });
                    }
                }
            }
        }
        self.finish()
    }

    /// Every tick, each agent in index order updates from the values at the
    /// start of the tick; ticks are charged synchronous barrier time.
    fn run_lockstep(mut self) -> Result<SimulationOutput> {
        let law = self.cfg.timing_law()?;
        let mut clock = SyncClock::new(law, self.net.m(), self.cfg.seed);
        self.record()?;
        'ticks: loop {
            let duration = clock.next_duration();
            let end = clock.now() + duration;
            if end > self.cfg.horizon.time_ms {
                break;
            }
            clock.advance(duration);
            self.now = end;
            let snaps: Vec<Snapshot> = (0..self.net.n()).map(|i| self.snapshot(i, None)).collect();
            for (i, snap) in snaps.iter().enumerate() {
                if self.updates_exhausted() || self.reached_target {
                    break 'ticks;
                }
                self.apply(i, snap)?;
                self.maybe_record()?;
            }
        }
        self.finish()
    }
}

/// Runs `rule` under the asynchronous (or lockstep) schedule of `cfg`.
pub fn simulate<R: LocalRule>(
    net: &Network,
    rule: &mut R,
    cfg: &AsyncConfig,
) -> Result<SimulationOutput> {
    let sim = Sim::new(net, rule, cfg)?;
    if cfg.lockstep {
        sim.run_lockstep()
    } else {
        sim.run_events()
    }
}

/// Asynchronous relaxed PG-EXTRA from `X⁰ = 0`, `Y⁰ = 0`.
pub fn simulate_primal_dual(
    prob: &ProblemInstance,
    net: &Network,
    step: StepSize,
    reference: Option<ErrorReference>,
    cfg: &AsyncConfig,
) -> Result<SimulationOutput> {
    let mut rule = PrimalDualRule::new(prob, net, step, reference)?;
    simulate(net, &mut rule, cfg)
}

/// Asynchronous relaxed proximal DGD from `X⁰ = 0`.
pub fn simulate_prox_dgd(
    prob: &ProblemInstance,
    net: &Network,
    alpha: f64,
    reference: Option<ErrorReference>,
    cfg: &AsyncConfig,
) -> Result<SimulationOutput> {
    let mut rule = ProxDgdRule::new(prob, net, alpha, reference)?;
    simulate(net, &mut rule, cfg)
}

/// Delays and activations of `cfg`'s schedule without any values. The
/// schedule depends only on the timing streams, so the trace equals that of
/// any value-carrying run with the same configuration and horizon.
pub fn sample_schedule(net: &Network, cfg: &AsyncConfig) -> Result<SimulationOutput> {
    let mut timing_cfg = cfg.clone();
    timing_cfg.record_every = u64::MAX;
    timing_cfg.horizon.target_rel_error = None;
    timing_cfg.relaxation = Relaxation::PerAgent(vec![1.0; net.n()]);
    let mut rule = NullRule::new(&net.spec);
    simulate(net, &mut rule, &timing_cfg)
}

/// Asynchronous per-agent rounds divided by synchronous iterations completed
/// within `horizon_ms`, under the same timing law.
pub fn update_throughput_ratio(net: &Network, cfg: &AsyncConfig, horizon_ms: f64) -> Result<f64> {
    let mut timing_cfg = cfg.clone();
    timing_cfg.lockstep = false;
    timing_cfg.horizon = Horizon::time(horizon_ms);
    let out = sample_schedule(net, &timing_cfg)?;
    let mut clock = SyncClock::new(cfg.timing_law()?, net.m(), cfg.seed);
    let mut iterations = 0u64;
    loop {
        let duration = clock.next_duration();
        if clock.now() + duration > horizon_ms {
            break;
        }
        clock.advance(duration);
        iterations += 1;
    }
    if iterations == 0 {
        return Err(Error::Config(format!(
            "horizon {horizon_ms} ms is shorter than one synchronous iteration"
        )));
    }
    Ok(out.updates as f64 / (net.n() as f64 * iterations as f64))
}

#[cfg(test)]
mod tests;
