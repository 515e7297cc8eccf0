use antbp::dataplane::{FifoPlane, ForwardingPolicy};
use antbp::harness::{run_scenario, LatencyMode, ScenarioConfig};
use antbp::policies::aco::{aco_update, Deposit};
use antbp::policies::PolicyKind;
use antbp::rng;
use antbp::scheduling::lgs_schedule;
use antbp::topology::{
    build_conflict_graph, compute_bias_field, generate_topology, LinkRateModel, NetworkGraph, Point, UNIT_RADIUS,
};
use antbp::traffic::{slot_arrivals, FlowKind, FlowSpec};
use antbp::virtualplane::{policy_from_pheromone, run_virtual_spbp, PheromoneField, VirtualParams};
use proptest::prelude::*;

fn topology(nodes: usize, seed: u64) -> NetworkGraph {
    generate_topology(nodes, 8.0 / std::f64::consts::PI, seed, 1000).unwrap()
}

fn random_flows(g: &NetworkGraph, picks: &[(usize, usize, f64)]) -> Vec<FlowSpec> {
    let n = g.node_count();
    picks
        .iter()
        .filter(|(s, d, _)| s % n != d % n)
        .map(|&(s, d, rate)| FlowSpec::streaming(s % n, d % n, rate, 1.0))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn unit_disk_links_match_distances(nodes in 2usize..30, seed in any::<u64>()) {
        let g = topology(nodes, seed);
        let p = g.positions();
        for i in 0..nodes {
            for j in 0..nodes {
                let linked = g.link_id(i, j).is_some();
                prop_assert_eq!(linked, i != j && p[i].dist(&p[j]) <= UNIT_RADIUS);
            }
        }
        for e in 0..g.link_count() {
            let (i, j) = g.link(e);
            prop_assert_eq!(g.link(g.reverse(e)), (j, i));
        }
    }

    #[test]
    fn interface_conflicts_are_shared_endpoints(nodes in 2usize..20, seed in any::<u64>()) {
        let g = topology(nodes, seed);
        let cg = build_conflict_graph(&g);
        for a in 0..g.link_count() {
            for b in 0..g.link_count() {
                let (ai, aj) = g.link(a);
                let (bi, bj) = g.link(b);
                let shared = a != b && (ai == bi || ai == bj || aj == bi || aj == bj);
                prop_assert_eq!(cg.conflicts(a, b), shared);
            }
        }
    }

    #[test]
    fn bias_satisfies_triangle_inequality(nodes in 2usize..25, seed in any::<u64>()) {
        let g = topology(nodes, seed);
        let rates = LinkRateModel::sample(&g, (10.0, 42.0), &mut rng::from_seed(seed));
        let bias = compute_bias_field(&g, &rates).unwrap();
        for c in 0..nodes {
            prop_assert_eq!(bias.get(c, c), 0.0);
            for e in 0..g.link_count() {
                let (i, j) = g.link(e);
                prop_assert!(bias.get(i, c) <= bias.edge_weights[e] + bias.get(j, c) + 1e-9);
            }
        }
    }

    #[test]
    fn realized_rates_stay_in_window(seed in any::<u64>(), r in 10.0f64..42.0) {
        let rates = LinkRateModel::new(vec![r; 50]);
        for x in rates.sample_realized(&mut rng::from_seed(seed)) {
            prop_assert!((x as f64) >= (r - 9.0).round() && (x as f64) <= (r + 9.0).round());
        }
    }

    #[test]
    fn policy_is_scale_invariant(values in prop::collection::vec(0.0f64..50.0, 6), k in 0.1f64..20.0) {
        // fork: node 0 with neighbors 1 and 2
        let g = NetworkGraph::unit_disk(vec![Point::new(1.0, 0.0), Point::new(2.0, 0.0), Point::new(0.0, 0.0)], 3.0);
        let eps = 0.01;
        let mut a = PheromoneField::constant(&g, eps, eps);
        let mut b = PheromoneField::constant(&g, k * eps, k * eps);
        for (e, &x) in values.iter().enumerate().take(g.link_count()) {
            for c in 0..3 {
                a.set(e, c, x + eps);
                b.set(e, c, k * x + k * eps);
            }
        }
        let pa = policy_from_pheromone(&a, &g).unwrap();
        let pb = policy_from_pheromone(&b, &g).unwrap();
        prop_assert!(pa.max_abs_diff(&pb) <= 1e-12);
        prop_assert!(pa.is_normalized(&g, 1e-12));
    }

    #[test]
    fn aco_update_respects_floor(
        seed in any::<u64>(),
        evaporation in 0.0f64..0.9,
        steps in 1usize..50,
        amount in 0.0f64..1.0,
    ) {
        let g = topology(8, seed);
        let mut field = PheromoneField::constant(&g, 1.3, 0.01);
        let mut rng = rng::from_seed(seed);
        use rand::Rng;
        for _ in 0..steps {
            let e = rng.gen_range(0..g.link_count());
            let c = rng.gen_range(0..8);
            aco_update(&mut field, &g, &[Deposit { commodity: c, path: vec![g.link(e)], amount }], evaporation);
            prop_assert!(field.min_value() >= 0.01);
        }
        prop_assert!(policy_from_pheromone(&field, &g).unwrap().is_normalized(&g, 1e-9));
    }

    #[test]
    fn virtual_counts_are_conserved(
        seed in any::<u64>(),
        picks in prop::collection::vec((0usize..12, 0usize..12, 0.2f64..3.0), 1..5),
        steps in 1usize..200,
    ) {
        let g = topology(12, seed);
        let cg = build_conflict_graph(&g);
        let rates = LinkRateModel::sample(&g, (10.0, 42.0), &mut rng::from_seed(seed));
        let bias = compute_bias_field(&g, &rates).unwrap();
        let flows = random_flows(&g, &picks);
        let params = VirtualParams { steps, epsilon: 0.01, evaporation: 0.0 };
        let run = run_virtual_spbp(&g, &cg, &bias, &flows, &params, &rates, &mut rng::from_seed(seed ^ 1), None);
        let st = &run.state;
        prop_assert_eq!(st.injected, st.consumed + st.total());
        for &c in &st.commodities {
            prop_assert_eq!(st.queue(c, c), 0);
        }
        prop_assert!(run.field.min_value() >= 0.01);
    }

    #[test]
    fn fifo_plane_conserves_packets_and_capacity(
        seed in any::<u64>(),
        picks in prop::collection::vec((0usize..10, 0usize..10, 0.2f64..4.0), 1..6),
        slots in 1usize..80,
    ) {
        let g = topology(10, seed);
        let cg = build_conflict_graph(&g);
        let rates = LinkRateModel::sample(&g, (10.0, 42.0), &mut rng::from_seed(seed)).with_noise(3.0, 9.0);
        let bias = compute_bias_field(&g, &rates).unwrap();
        let flows = random_flows(&g, &picks);
        let kinds = vec![FlowKind::Streaming; flows.len()];
        let policy = ForwardingPolicy::uniform(&g);
        let mut plane = FifoPlane::new(g.clone(), cg.clone());
        let (mut arr, mut fwd, mut rr) = (rng::from_seed(seed ^ 2), rng::from_seed(seed ^ 3), rng::from_seed(seed ^ 4));
        let (mut injected, mut delivered) = (0u64, 0u64);
        for t in 0..slots {
            let events = slot_arrivals(&flows, t, &mut arr);
            let realized = rates.sample_realized(&mut rr);
            let report = plane.step(&policy, &bias, &realized, None, &events, &kinds, &mut fwd, t).unwrap();
            injected += report.arrivals;
            delivered += report.deliveries;
            prop_assert_eq!(injected, delivered + report.backlog);
            let mut per_link = vec![0u32; g.link_count()];
            for tr in &report.transmissions {
                per_link[tr.link] += tr.count;
            }
            for e in 0..g.link_count() {
                prop_assert!(per_link[e] <= realized[e]);
            }
            let active: Vec<usize> = (0..g.link_count()).filter(|&e| per_link[e] > 0).collect();
            for &a in &active {
                for &b in &active {
                    prop_assert!(a == b || !cg.conflicts(a, b));
                }
            }
        }
    }

    #[test]
    fn lgs_never_activates_zero_utility(u in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..10.0], 1..16), seed in any::<u64>()) {
        let g = topology(6, seed);
        let cg = build_conflict_graph(&g);
        let u: Vec<f64> = (0..g.link_count()).map(|e| u[e % u.len()]).collect();
        let s = lgs_schedule(&cg, &u);
        prop_assert!(s.is_independent(&cg));
        prop_assert!(s.is_maximal(&cg, &u));
        for e in s.active_links() {
            prop_assert!(u[e] > 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn config_round_trips(
        nodes in 2usize..200,
        load in 0.0f64..10.0,
        p_bursty in 0.0f64..1.0,
        horizon in 1usize..5000,
        seed in any::<u32>(),
        residency in any::<bool>(),
        kind in prop::sample::select(PolicyKind::ALL.to_vec()),
    ) {
        let mut cfg = ScenarioConfig::default();
        cfg.topology.nodes = nodes;
        cfg.traffic.bursty_load = load;
        cfg.traffic.p_bursty = p_bursty;
        cfg.traffic.horizon = horizon;
        cfg.run.seed = seed as u64;
        cfg.run.latency = if residency { LatencyMode::Residency } else { LatencyMode::CapAtHorizon };
        cfg.policy.kind = kind;
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string(), "round-trip").unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn run_metrics_are_consistent(
        seed in 0u64..1000,
        kind in prop::sample::select(PolicyKind::ALL.to_vec()),
        load in 0.2f64..4.0,
    ) {
        let mut cfg = ScenarioConfig::default();
        cfg.topology.nodes = 15;
        cfg.traffic.horizon = 200;
        cfg.traffic.bursty_load = load;
        cfg.traffic.streaming_load = load;
        cfg.policy.virtual_steps = 100;
        cfg.policy.kind = kind;
        cfg.run.seed = seed;
        cfg.run.check_invariants = true;
        let out = run_scenario(&cfg).unwrap();
        let m = &out.metrics;
        prop_assert!(m.goodput >= 0.0);
        for class in [FlowKind::Streaming, FlowKind::Bursty] {
            let pkts: Vec<_> = out.packets.iter().filter(|p| p.kind == class).collect();
            let ratio = match class {
                FlowKind::Streaming => m.delivery_streaming,
                FlowKind::Bursty => m.delivery_bursty,
            };
            if pkts.is_empty() {
                prop_assert_eq!(ratio, None);
                continue;
            }
            let r = ratio.unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            let undelivered = pkts.iter().filter(|p| p.delivered_at.is_none()).count() as f64 / pkts.len() as f64;
            prop_assert!((r + undelivered - 1.0).abs() < 1e-12);
        }
    }
}
