//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 1 3`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use antbp::dataplane::{FifoPlane, ForwardingPolicy};
use antbp::dynamics::{mobility_event, MobilityConfig};
use antbp::harness::output::render_run;
use antbp::harness::{run_scenario, LatencyMode, RunMetrics, ScenarioConfig};
use antbp::policies::aco::{aco_bias_policy, aco_policy, aco_update, Deposit};
use antbp::policies::PolicyKind;
use antbp::rng;
use antbp::scheduling::{exact_mwis, greedy_schedule, lgs_schedule, Schedule};
use antbp::topology::{build_conflict_graph, generate_topology, BiasField, ConflictGraph, NetworkGraph, Point};
use antbp::traffic::{ArrivalEvent, FlowKind};
use antbp::virtualplane::{
    pheromone_from_counts, policy_from_pheromone, virtual_transmit, virtual_utilities, PheromoneField, Selection,
    VirtualPlaneState,
};
use antbp::Error;
use rand::Rng;
use rayon::prelude::*;

const SEEDS: u64 = 10;

static CHECKED_RUNS: AtomicUsize = AtomicUsize::new(0);
static INVARIANT_FAILURES: AtomicUsize = AtomicUsize::new(0);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Runs a scenario with per-slot invariant checks, tallying violations.
fn checked_run(mut cfg: ScenarioConfig) -> RunMetrics {
    cfg.run.check_invariants = true;
    CHECKED_RUNS.fetch_add(1, Ordering::Relaxed);
    match run_scenario(&cfg) {
        Ok(out) => out.metrics,
        Err(e @ Error::Invariant { .. }) => {
            INVARIANT_FAILURES.fetch_add(1, Ordering::Relaxed);
            panic!("{e}");
        }
        Err(e) => panic!("scenario failed: {e}"),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn scenario(nodes: usize, kind: PolicyKind, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.topology.nodes = nodes;
    cfg.policy.kind = kind;
    cfg.run.seed = seed;
    cfg
}

fn paired(cfg: impl Fn(PolicyKind, u64) -> ScenarioConfig + Sync, kinds: &[PolicyKind]) -> Vec<Vec<RunMetrics>> {
    let jobs: Vec<(usize, u64)> = (0..kinds.len()).flat_map(|k| (0..SEEDS).map(move |s| (k, s))).collect();
    let results: Vec<RunMetrics> = jobs.par_iter().map(|&(k, s)| checked_run(cfg(kinds[k], s))).collect();
    results.chunks(SEEDS as usize).map(<[RunMetrics]>::to_vec).collect()
}

fn conflict_degree() -> Verdict {
    let degrees: Vec<f64> = (0..SEEDS)
        .into_par_iter()
        .map(|k| {
            let g = generate_topology(100, 8.0 / std::f64::consts::PI, rng::derive_seed(0, rng::TOPOLOGY, k), 1000).unwrap();
            build_conflict_graph(&g).mean_pair_degree(&g)
        })
        .collect();
    let m = mean(&degrees);
    verdict((m - 13.86).abs() <= 1.5, format!("mean conflict degree {m:.3} (target 13.86 +/- 1.5)"))
}

fn removal_ratios() -> Verdict {
    let ratio = |mobile: usize| -> f64 {
        let r: Vec<f64> = (0..SEEDS)
            .into_par_iter()
            .map(|k| {
                let g = generate_topology(100, 8.0 / std::f64::consts::PI, rng::derive_seed(0, rng::TOPOLOGY, k), 1000).unwrap();
                let cfg = MobilityConfig { mobile_nodes: mobile, ..Default::default() };
                mobility_event(&g, &cfg, &mut rng::stream(0, rng::MOBILITY, k)).unwrap().removal_ratio(&g)
            })
            .collect();
        mean(&r)
    };
    let (low, high) = (ratio(10), ratio(60));
    verdict(
        (low - 0.166).abs() <= 0.08 && (high - 0.804).abs() <= 0.08,
        format!("removal {:.1}% / {:.1}% (targets 16.6% / 80.4% +/- 8 pp)", low * 100.0, high * 100.0),
    )
}

fn random_conflict_graph(rng: &mut rng::SimRng) -> (ConflictGraph, Vec<f64>) {
    let n = rng.gen_range(1..=20);
    let p: f64 = rng.gen_range(0.05..0.6);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    // some zero utilities and some exact ties
    let u = (0..n)
        .map(|_| match rng.gen_range(0..6) {
            0 => 0.0,
            1 => 5.0,
            _ => rng.gen_range(0.0..50.0f64).round(),
        })
        .collect();
    (ConflictGraph::from_edges(n, &edges), u)
}

fn scheduler_oracle() -> Verdict {
    let mut rng = rng::stream(0, "acceptance-scheduler", 0);
    let mut violations = 0;
    let mut lgs_equals_greedy = 0;
    for _ in 0..500 {
        let (cg, u) = random_conflict_graph(&mut rng);
        let best = exact_mwis(&cg, &u).unwrap().weight(&u);
        let lgs = lgs_schedule(&cg, &u);
        let greedy = greedy_schedule(&cg, &u);
        for s in [&lgs, &greedy] {
            let ok = s.is_independent(&cg) && s.is_maximal(&cg, &u) && s.weight(&u) <= best + 1e-9;
            violations += usize::from(!ok);
        }
        lgs_equals_greedy += usize::from(lgs == greedy);
    }
    verdict(violations == 0, format!("500 graphs, {violations} violations, LGS == greedy on {lgs_equals_greedy}"))
}

fn flow_conservation() -> Verdict {
    let runs: Vec<RunMetrics> = (0..SEEDS)
        .into_par_iter()
        .map(|s| {
            let mut cfg = scenario(30, PolicyKind::AntBp, s);
            cfg.traffic.p_bursty = 0.0;
            cfg.traffic.streaming_load = 1.0;
            checked_run(cfg)
        })
        .collect();
    let residuals: Vec<f64> = runs.iter().filter_map(|m| m.flow_residual).collect();
    let unstable = runs.len() - residuals.len();
    if residuals.is_empty() {
        return verdict(false, "no stable run");
    }
    let m = mean(&residuals);
    verdict(m <= 0.05, format!("mean max relative residual {:.2}% over {} stable runs ({unstable} unstable)", m * 100.0, residuals.len()))
}

fn last_packet() -> Verdict {
    let kinds = [PolicyKind::AntBp, PolicyKind::SpBp];
    let runs = paired(
        |kind, s| {
            let mut cfg = scenario(50, kind, s);
            cfg.traffic.streaming_load = 2.0;
            cfg.traffic.bursty_load = 0.5;
            cfg
        },
        &kinds,
    );
    let stat = |k: usize, f: fn(&RunMetrics) -> Option<f64>| mean(&runs[k].iter().filter_map(f).collect::<Vec<_>>());
    let (d_ant, d_sp) = (stat(0, |m| m.delivery_bursty), stat(1, |m| m.delivery_bursty));
    let (l_ant, l_sp) = (stat(0, |m| m.latency_bursty), stat(1, |m| m.latency_bursty));
    verdict(
        d_ant > d_sp && l_ant < l_sp,
        format!("bursty delivery {d_ant:.4} vs {d_sp:.4}, bursty latency {l_ant:.1} vs {l_sp:.1} (Ant-BP vs SP-BP)"),
    )
}

fn goodput_crossover() -> Verdict {
    let kinds = [PolicyKind::AntBp, PolicyKind::SpBp];
    let goodput = |load: f64| -> (f64, f64) {
        let runs = paired(
            |kind, s| {
                let mut cfg = scenario(50, kind, s);
                cfg.traffic.p_bursty = 0.0;
                cfg.traffic.streaming_load = load;
                cfg
            },
            &kinds,
        );
        let g = |k: usize| mean(&runs[k].iter().map(|m| m.goodput).collect::<Vec<_>>());
        (g(0), g(1))
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for load in [1.0, 2.0, 8.0, 10.0] {
        let (ant, sp) = goodput(load);
        pass &= if load <= 2.0 { ant >= 0.95 * sp } else { ant <= sp };
        parts.push(format!("L_s={load}: {ant:.2} vs {sp:.2}"));
    }
    verdict(pass, format!("goodput Ant-BP vs SP-BP {}", parts.join(", ")))
}

fn mobility_ablation() -> Verdict {
    let kinds = [PolicyKind::AntBp, PolicyKind::AntBpNovirt];
    let runs = paired(
        |kind, s| {
            let mut cfg = scenario(50, kind, s);
            cfg.traffic.p_bursty = 0.0;
            cfg.traffic.streaming_load = 0.5;
            cfg.traffic.horizon = 2000;
            cfg.run.latency = LatencyMode::Residency;
            cfg.mobility = Some(MobilityConfig { mobile_nodes: 30, ..Default::default() });
            cfg
        },
        &kinds,
    );
    let lat = |k: usize| mean(&runs[k].iter().filter_map(|m| m.latency).collect::<Vec<_>>());
    let (with, without) = (lat(0), lat(1));
    let factor = without / with;
    verdict(factor >= 3.0, format!("latency {with:.1} (Ant-BP) vs {without:.1} (novirt), factor {factor:.2} (need >= 3)"))
}

fn invariant_suite() -> Verdict {
    // Every scenario above ran with per-slot checks. Add one run per policy
    // under failures and mobility so every engine path is covered.
    let dynamics: Vec<_> = PolicyKind::ALL
        .par_iter()
        .map(|&kind| {
            let mut cfg = scenario(30, kind, 3);
            cfg.traffic.horizon = 700;
            cfg.policy.virtual_steps = 300;
            cfg.failures = Some(Default::default());
            cfg.mobility = Some(MobilityConfig { mobile_nodes: 10, walk_steps: 100, ..Default::default() });
            checked_run(cfg)
        })
        .collect();
    let checked = CHECKED_RUNS.load(Ordering::Relaxed);
    let failures = INVARIANT_FAILURES.load(Ordering::Relaxed);
    verdict(
        failures == 0 && dynamics.len() == PolicyKind::ALL.len(),
        format!("{checked} runs audited every slot, {failures} violations"),
    )
}

fn determinism() -> Verdict {
    let mut mismatched = Vec::new();
    for kind in PolicyKind::ALL {
        let mut cfg = scenario(30, kind, 7);
        cfg.traffic.horizon = 600;
        cfg.policy.virtual_steps = 300;
        cfg.failures = Some(Default::default());
        cfg.mobility = Some(MobilityConfig { mobile_nodes: 10, walk_steps: 100, trigger_slot: 200, update_slot: 300, ..Default::default() });
        let a = render_run(&run_scenario(&cfg).unwrap()).unwrap();
        let b = render_run(&run_scenario(&cfg).unwrap()).unwrap();
        if a != b {
            mismatched.push(kind.as_str());
        }
    }
    verdict(mismatched.is_empty(), format!("{} policies re-run twice, mismatches: {mismatched:?}", PolicyKind::ALL.len()))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn line(n: usize) -> NetworkGraph {
    NetworkGraph::unit_disk((0..n).map(|k| Point::new(k as f64, 0.0)).collect(), n as f64)
}

fn fork() -> NetworkGraph {
    NetworkGraph::unit_disk(vec![Point::new(1.0, 0.0), Point::new(2.0, 0.0), Point::new(0.0, 0.0)], 3.0)
}

fn formula_checks() -> Verdict {
    let mut failed: Vec<&str> = Vec::new();
    let mut check = |name: &'static str, ok: bool| {
        if !ok {
            failed.push(name);
        }
    };

    // link utility q * r
    let g = line(2);
    let mut plane = FifoPlane::new(g.clone(), build_conflict_graph(&g));
    let ev = ArrivalEvent { slot: 0, node: 0, commodity: 1, count: 4, flow: 0 };
    plane.inject(&[ev], &[FlowKind::Streaming]);
    plane.forward_undecided(&ForwardingPolicy::uniform(&g), &mut rng::from_seed(0)).unwrap();
    let e01 = g.link_id(0, 1).unwrap();
    check("utility q=4 r=10", plane.compute_utilities(&[10, 10])[e01] == 40.0);
    check("utility r=0", plane.compute_utilities(&[0, 0])[e01] == 0.0);
    check("utility q=0", plane.compute_utilities(&[10, 10])[g.reverse(e01)] == 0.0);

    // normalized pheromone policy
    let g = fork();
    let (a, b) = (g.link_id(0, 1).unwrap(), g.link_id(0, 2).unwrap());
    let mut f = PheromoneField::constant(&g, 0.01, 0.01);
    f.set(a, 1, 3.01);
    f.set(b, 1, 1.01);
    let p = policy_from_pheromone(&f, &g).unwrap();
    check("policy 3.01/4.02", close(p.get(a, 1), 3.01 / 4.02) && (p.get(a, 1) - 0.7488).abs() < 5e-5);
    check("policy 1.01/4.02", close(p.get(b, 1), 1.01 / 4.02) && (p.get(b, 1) - 0.2512).abs() < 5e-5);

    // virtual transmission min(Q, r) with the weight indicator
    let g = line(3);
    let (e01, e10) = (g.link_id(0, 1).unwrap(), g.link_id(1, 0).unwrap());
    let mut st = VirtualPlaneState::new(&g, vec![2]);
    st.set_queue(0, 2, 5);
    let mut sched = Schedule::empty(g.link_count());
    sched.active[e01] = true;
    let mut sel = vec![None; g.link_count()];
    sel[e01] = Some(Selection { commodity: 2, weight: 0.0 });
    virtual_transmit(&mut st, &g, &sched, &vec![10; g.link_count()], &sel, 0.0);
    check("virtual w=0 moves nothing", st.queue(0, 2) == 5);
    sel[e01] = Some(Selection { commodity: 2, weight: 5.0 });
    virtual_transmit(&mut st, &g, &sched, &vec![10; g.link_count()], &sel, 0.0);
    check("virtual mu=min(5,10)", st.queue(0, 2) == 0 && st.queue(1, 2) == 5);
    let unscheduled = Schedule::empty(g.link_count());
    virtual_transmit(&mut st, &g, &unscheduled, &vec![10; g.link_count()], &sel, 0.0);
    check("virtual unscheduled", st.queue(1, 2) == 5);

    // net crossings plus epsilon: push 7 forward, 2 back
    let mut st = VirtualPlaneState::new(&g, vec![2]);
    st.set_queue(0, 2, 7);
    let mut s01 = Schedule::empty(g.link_count());
    s01.active[e01] = true;
    let mut sel = vec![None; g.link_count()];
    sel[e01] = Some(Selection { commodity: 2, weight: 1.0 });
    sel[e10] = Some(Selection { commodity: 2, weight: 1.0 });
    virtual_transmit(&mut st, &g, &s01, &vec![10; g.link_count()], &sel, 0.0);
    st.set_queue(1, 2, 2);
    let mut s10 = Schedule::empty(g.link_count());
    s10.active[e10] = true;
    virtual_transmit(&mut st, &g, &s10, &vec![10; g.link_count()], &sel, 0.0);
    let field = pheromone_from_counts(&st, &g, 0.01);
    check("pheromone 7-2+0.01", close(field.get(e01, 2), 5.01));
    check("pheromone clamp", close(field.get(e10, 2), 0.01));
    let empty = pheromone_from_counts(&VirtualPlaneState::new(&g, vec![2]), &g, 0.01);
    check("pheromone uniform fallback", policy_from_pheromone(&empty, &g).unwrap().max_abs_diff(&ForwardingPolicy::uniform(&g)) <= 1e-12);

    // virtual utility r * max(pressure, 0) * 1[Q > 0]
    let mut st = VirtualPlaneState::new(&g, vec![2]);
    st.set_queue(0, 2, 2);
    st.set_queue(1, 2, 0);
    let zero = BiasField::zero(&g);
    let (u, _) = virtual_utilities(&st, &zero, &g, &vec![10; g.link_count()]);
    check("virtual utility 2*10", close(u[e01], 20.0));
    check("virtual utility negative pressure", u[e10] == 0.0);

    // bias-augmented ACO with the floor clamp
    let g = fork();
    let bias = BiasField::from_weights(&g, vec![2.0; g.link_count()]).unwrap();
    let (a, b) = (g.link_id(0, 1).unwrap(), g.link_id(0, 2).unwrap());
    let p = aco_bias_policy(&PheromoneField::constant(&g, 1.3, 0.01), &g, &bias, 0.01).unwrap();
    check("bias ACO 3.3/3.31", close(p.get(a, 1), 3.3 / 3.31) && (p.get(a, 1) - 0.997).abs() < 5e-4);
    check("bias ACO 0.01/3.31", close(p.get(b, 1), 0.01 / 3.31));

    // classic ACO rho^alpha h^beta
    let h = vec![1.0; g.link_count()];
    let mut f = PheromoneField::constant(&g, 1.0, 0.01);
    f.set(a, 1, 2.0);
    let p = aco_policy(&f, &g, 2.0, 0.0, &h).unwrap();
    check("classic ACO 0.8", close(p.get(a, 1), 0.8));
    check("classic ACO 0.2", close(p.get(b, 1), 0.2));

    // evaporation and deposits
    let mut f = PheromoneField::constant(&g, 1.3, 0.01);
    aco_update(&mut f, &g, &[Deposit { commodity: 1, path: vec![(0, 1)], amount: 0.01 }], 0.002);
    check("ACO update 1.3074", close(f.get(a, 1), 1.3074));
    check("ACO pure evaporation", close(f.get(b, 1), 1.3 * 0.998));
    let mut f = PheromoneField::constant(&g, 1.0, 0.01);
    aco_update(&mut f, &g, &[Deposit { commodity: 1, path: vec![(2, 0), (0, 1)], amount: 1.0 / 20.0 }], 0.0);
    check("ACO latency-20 deposit", close(f.get(a, 1), 1.05) && close(f.get(g.link_id(2, 0).unwrap(), 1), 1.05));

    verdict(failed.is_empty(), if failed.is_empty() { "all hand values matched".to_string() } else { format!("mismatched: {failed:?}") })
}

type Criterion = (usize, &'static str, fn() -> Verdict, Duration);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "conflict-degree reproduction", conflict_degree, Duration::from_secs(5)),
        (2, "link-removal ratios", removal_ratios, Duration::from_secs(30)),
        (3, "scheduler oracle equivalence", scheduler_oracle, Duration::from_secs(60)),
        (4, "flow conservation", flow_conservation, Duration::from_secs(120)),
        (5, "last-packet trend", last_packet, Duration::from_secs(600)),
        (6, "goodput crossover trend", goodput_crossover, Duration::from_secs(900)),
        (7, "mobility ablation", mobility_ablation, Duration::from_secs(900)),
        (8, "invariant suite", invariant_suite, Duration::from_secs(300)),
        (9, "determinism", determinism, Duration::from_secs(300)),
        (10, "unit formula checks", formula_checks, Duration::from_secs(5)),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (id, name, run, budget) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = outcome.pass && in_time;
        failures += usize::from(!pass);
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.1}s of {}s{}]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
