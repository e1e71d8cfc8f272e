use super::*;
use crate::graph::NetworkSpec;
use crate::sync::{pg_extra_step, solve_reference, SolverState};
use crate::testutil::{random_lasso, safe_step, two_node};

/// Benchmark draws, but read as mean durations so tests can set them directly.
fn config(n: usize, seed: u64, eta: Relaxation, horizon: Horizon) -> AsyncConfig {
    let mut cfg = AsyncConfig::benchmark(n, seed, eta, horizon);
    cfg.parameterization = Parameterization::Mean;
    cfg
}

#[test]
fn lockstep_reproduces_synchronous_iterates() {
    let (prob, net) = random_lasso(2, 8, 6);
    let step = safe_step(&prob, &net);
    let n = net.n() as u64;
    let mut cfg = config(net.n(), 0, Relaxation::Global(1.0), Horizon::updates(200 * n));
    cfg.lockstep = true;
    cfg.record_every = n;
    cfg.trace.states = true;
    let out = simulate_primal_dual(&prob, &net, step.clone(), None, &cfg).unwrap();
    assert!(out.eta.iter().all(|&e| e == 1.0));
    let states = out.states.unwrap();
    assert_eq!(states.len(), 201);
    let mut sync = SolverState::initial(&prob, &net);
    for (k, x, y) in &states {
        assert_eq!(*k, sync.k as u64 * n);
        assert!((x - &sync.x).amax() < 1e-12);
        assert!((y - &sync.y).amax() < 1e-12);
        sync = pg_extra_step(&sync, &prob, &net, &step).unwrap();
    }
}

#[test]
fn lockstep_time_matches_sync_clock() {
    let (prob, net) = random_lasso(5, 6, 3);
    let mut cfg = config(6, 4, Relaxation::Global(1.0), Horizon::updates(60));
    cfg.lockstep = true;
    cfg.record_every = 6;
    let out = simulate_primal_dual(&prob, &net, safe_step(&prob, &net), None, &cfg).unwrap();
    let mut clock = SyncClock::new(cfg.timing_law().unwrap(), net.m(), 4);
    for point in out.trajectory.iter().skip(1) {
        assert_eq!(point.time_ms, clock.tick());
    }
}

#[test]
fn replay_is_bit_identical() {
    let (prob, net) = random_lasso(7, 6, 4);
    let mut cfg = config(6, 11, Relaxation::Global(0.3), Horizon::time(300.0));
    cfg.record_every = 7;
    cfg.trace.events = true;
    let run = || simulate_primal_dual(&prob, &net, safe_step(&prob, &net), None, &cfg).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.trajectory.len(), b.trajectory.len());
    for (p, q) in a.trajectory.iter().zip(&b.trajectory) {
        assert_eq!(p.k, q.k);
        assert_eq!(p.time_ms.to_bits(), q.time_ms.to_bits());
        assert_eq!(p.residual.to_bits(), q.residual.to_bits());
    }
    assert_eq!(a.x, b.x);
    assert_eq!(a.events, b.events);
    let mut other = cfg.clone();
    other.seed = 12;
    let c = simulate_primal_dual(&prob, &net, safe_step(&prob, &net), None, &other).unwrap();
    assert_ne!(a.x, c.x);
}

#[test]
fn rows_are_written_only_by_their_owner() {
    let (prob, net) = random_lasso(13, 9, 3);
    let mut cfg = config(9, 1, Relaxation::Global(0.3), Horizon::updates(2000));
    cfg.trace.writes = true;
    cfg.record_every = 1000;
    let out = simulate_primal_dual(&prob, &net, safe_step(&prob, &net), None, &cfg).unwrap();
    let writes = out.writes.unwrap();
    assert!(writes.len() >= 2000);
    for w in writes {
        match w.row {
            RowRef::Primal(i) => assert_eq!(w.writer, i),
            RowRef::Dual(e) => assert_eq!(w.writer, net.spec.owner(e)),
        }
    }
}

#[test]
fn delay_trace_is_consistent() {
    let (prob, net) = random_lasso(17, 7, 3);
    let mut cfg = config(7, 3, Relaxation::Global(0.2), Horizon::updates(3000));
    cfg.trace.delays = true;
    cfg.record_every = 500;
    let out = simulate_primal_dual(&prob, &net, safe_step(&prob, &net), None, &cfg).unwrap();
    let records = out.delays.records.as_ref().unwrap();
    assert_eq!(records.len(), 3000);
    let mut max_tau = 0;
    let mut max_delta = 0;
    for (k, r) in records.iter().enumerate() {
        assert_eq!(r.k, k as u64);
        assert_eq!(r.tau[r.agent], 0);
        assert!(r.tau.iter().all(|&t| t <= r.k));
        for &e in net.spec.owned_edges(r.agent) {
            assert_eq!(r.delta[e], 0);
        }
        max_tau = max_tau.max(*r.tau.iter().max().unwrap());
        max_delta = max_delta.max(*r.delta.iter().max().unwrap_or(&0));
    }
    assert_eq!(max_tau, out.delays.max_tau);
    assert_eq!(max_delta, out.delays.max_delta);
    assert!(out.delays.bound() > 0);

    // the schedule does not depend on the values carried
    let timing = sample_schedule(&net, &cfg).unwrap();
    assert_eq!(timing.delays.max_tau, out.delays.max_tau);
    assert_eq!(timing.delays.max_delta, out.delays.max_delta);
    assert_eq!(timing.activation, out.activation);
}

#[test]
fn deliveries_never_go_backwards() {
    let (prob, net) = random_lasso(19, 8, 2);
    let mut cfg = config(8, 9, Relaxation::Global(0.2), Horizon::updates(4000));
    cfg.comm_param = 6.0;
    cfg.trace.events = true;
    cfg.record_every = 4000;
    let out = simulate_primal_dual(&prob, &net, safe_step(&prob, &net), None, &cfg).unwrap();
    let events = out.events.unwrap();
    let discards = events.iter().filter(|e| e.kind == EventKind::Discard).count();
    assert!(discards > 0, "slow links should reorder some messages");
    let mut last = 0.0;
    for e in &events {
        assert!(e.time_ms >= last);
        last = e.time_ms;
    }
}

#[test]
fn activation_frequencies_match_prediction() {
    let spec = NetworkSpec::new(5, vec![(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
    let net = Network::new(spec).unwrap();
    let mut cfg = config(5, 21, Relaxation::Global(1.0), Horizon::updates(100_000));
    cfg.compute_params = vec![1.0, 2.0, 3.0, 4.0, 2.5];
    let out = sample_schedule(&net, &cfg).unwrap();
    assert_eq!(out.activation.total(), 100_000);
    let q = predicted_q(&cfg.compute_params).unwrap();
    let q_hat = out.activation.q_hat();
    assert!((q_hat.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for (a, b) in q.iter().zip(&q_hat) {
        assert!((a - b).abs() < 0.01, "{q:?} vs {q_hat:?}");
    }
}

#[test]
fn two_node_consensus_converges_for_every_seed() {
    let (prob, net) = two_node();
    let step = safe_step(&prob, &net);
    let sol = solve_reference(&prob, &net, &step, 1e-13, 100_000).unwrap();
    let reference = ErrorReference::consensus(&sol.x_star(), 2).unwrap();
    for seed in 0..20 {
        let base = config(2, seed, Relaxation::Global(1.0), Horizon::updates(20_000));
        let tau = sample_schedule(&net, &base).unwrap().delays.bound();
        let q = base.activation_q().unwrap();
        let q_min = q.iter().copied().fold(1.0, f64::min);
        let eta = 0.8 * eta_max_bound(2, q_min, net.spectral.kappa, tau);
        let mut cfg = base.clone();
        cfg.relaxation = Relaxation::Global(eta);
        cfg.record_every = 1000;
        let out = simulate_primal_dual(&prob, &net, step.clone(), Some(reference.clone()), &cfg)
            .unwrap();
        let last = out.trajectory.last().unwrap();
        assert!(last.rel_error < 1e-4, "seed {seed}: {}", last.rel_error);
    }
}

#[test]
fn async_averaging_reaches_consensus() {
    use crate::problems::quadratic_target;
    // s ≡ 0 and a negligible prox scale leave plain gossip averaging
    let spec = NetworkSpec::new(4, vec![(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
    let net = Network::new(spec).unwrap();
    let prob = ProblemInstance::new(vec![quadratic_target(DVector::zeros(2)); 4]).unwrap();
    let x0 = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 5.0, -2.0, -3.0, 4.0, 2.0, 1.0]);
    let mut rule = ProxDgdRule::new(&prob, &net, 1e-15, None)
        .unwrap()
        .with_start(x0.clone())
        .unwrap();
    let mut cfg = config(4, 2, Relaxation::Global(0.5), Horizon::updates(4000));
    cfg.comm_param = 5.0;
    cfg.record_every = 4000;
    let out = simulate(&net, &mut rule, &cfg).unwrap();
    let spread: f64 = (0..2)
        .map(|c| out.x.column(c).max() - out.x.column(c).min())
        .fold(0.0, f64::max);
    assert!(spread < 1e-6, "spread {spread}");
    // relaxed averaging with delays need not preserve the mean exactly, but it
    // stays inside the convex hull of the start
    for c in 0..2 {
        assert!(out.x[(0, c)] <= x0.column(c).max() && out.x[(0, c)] >= x0.column(c).min());
    }
}

#[test]
fn prox_dgd_plateaus_above_pg_extra() {
    let (prob, net) = random_lasso(23, 6, 4);
    let step = safe_step(&prob, &net);
    let sol = solve_reference(&prob, &net, &step, 1e-12, 500_000).unwrap();
    let reference = ErrorReference::consensus(&sol.x_star(), net.n()).unwrap();
    let mut cfg = config(6, 5, Relaxation::Global(0.5), Horizon::time(20_000.0));
    cfg.record_every = 100_000;
    let pd = simulate_primal_dual(&prob, &net, step.clone(), Some(reference.clone()), &cfg).unwrap();
    let alpha = step.metric_alpha() / 2.0;
    let dgd = simulate_prox_dgd(&prob, &net, alpha, Some(reference), &cfg).unwrap();
    let pd_err = pd.trajectory.last().unwrap().rel_error;
    let dgd_err = dgd.trajectory.last().unwrap().rel_error;
    assert!(dgd_err > 10.0 * pd_err, "{dgd_err} vs {pd_err}");
}

#[test]
fn throughput_ratio_is_one_without_waiting() {
    let spec = NetworkSpec::new(4, vec![(0, 1), (1, 2), (2, 3)]).unwrap();
    let net = Network::new(spec).unwrap();
    let mut cfg = config(4, 0, Relaxation::Global(1.0), Horizon::time(1.0));
    cfg.compute_params = vec![2.0; 4];
    cfg.comm_param = 0.0;
    cfg.sampling = Sampling::Deterministic;
    assert_eq!(update_throughput_ratio(&net, &cfg, 101.0).unwrap(), 1.0);
}

#[test]
fn slow_agent_raises_throughput_ratio() {
    let (_, net) = random_lasso(29, 10, 1);
    let mut wins = 0;
    for seed in 0..20 {
        let mut cfg = config(10, seed, Relaxation::Global(1.0), Horizon::time(1.0));
        cfg.compute_params = vec![2.0; 10];
        let homogeneous = update_throughput_ratio(&net, &cfg, 3000.0).unwrap();
        cfg.compute_params[0] = 10.0;
        let skewed = update_throughput_ratio(&net, &cfg, 3000.0).unwrap();
        if skewed > homogeneous {
            wins += 1;
        }
    }
    assert!(wins >= 18, "{wins}/20");
}

#[test]
fn horizon_and_shape_errors() {
    let (prob, net) = two_node();
    let step = safe_step(&prob, &net);
    let cfg = config(2, 0, Relaxation::Global(0.1), Horizon::time(0.0));
    assert!(matches!(
        simulate_primal_dual(&prob, &net, step.clone(), None, &cfg),
        Err(Error::HorizonZero)
    ));
    let cfg = config(3, 0, Relaxation::Global(0.1), Horizon::time(10.0));
    assert!(matches!(
        simulate_primal_dual(&prob, &net, step.clone(), None, &cfg),
        Err(Error::ShapeMismatch(_))
    ));
    let mut cfg = config(2, 0, Relaxation::Global(0.1), Horizon::time(10.0));
    cfg.compute_params[1] = -1.0;
    assert!(matches!(
        simulate_primal_dual(&prob, &net, step, None, &cfg),
        Err(Error::NonPositiveMean(_))
    ));
}

#[test]
fn event_log_csv() {
    let (_, net) = two_node();
    let mut cfg = config(2, 1, Relaxation::Global(1.0), Horizon::updates(3));
    cfg.trace.events = true;
    let out = sample_schedule(&net, &cfg).unwrap();
    let mut buf = Vec::new();
    write_event_log(&mut buf, out.events.as_ref().unwrap()).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time_ms,kind,agent,k"));
    let computes = lines.filter(|l| l.contains(",compute,")).count();
    assert_eq!(computes, 3);
}
