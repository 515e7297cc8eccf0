use std::path::Path;

use antbp::harness::config::{load_config, save_config, set_path};
use antbp::harness::metrics::bin_mid;
use antbp::harness::output::{render_run, write_run, PACKETS_CSV, SLOTS_CSV};
use antbp::harness::sweep::{render_summary, run_sweep, summarize, SweepSpec};
use antbp::harness::{check_run_dir, run_scenario, ScenarioConfig};
use antbp::policies::PolicyKind;
use antbp::Error;

fn small(kind: PolicyKind) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.topology.nodes = 20;
    cfg.traffic.horizon = 300;
    cfg.policy.virtual_steps = 200;
    cfg.policy.kind = kind;
    cfg
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn empty_file_gives_documented_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_config(&write(dir.path(), "empty.toml", "")).unwrap();
    assert_eq!(cfg, ScenarioConfig::default());
    assert_eq!(cfg.topology.nodes, 100);
    assert_eq!(cfg.topology.density, 8.0 / std::f64::consts::PI);
    assert_eq!(cfg.traffic.horizon, 1000);
    assert_eq!(cfg.policy.virtual_steps, 1000);
}

#[test]
fn config_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_config(&write(dir.path(), "neg.toml", "[traffic]\nbursty_load = -1\n")).unwrap_err();
    assert!(matches!(err, Error::ConfigRange { field: "traffic.bursty_load", .. }), "{err}");
    let err = load_config(&write(dir.path(), "typo.toml", "[traffic]\nbursty_lod = 1\n")).unwrap_err();
    assert!(err.to_string().contains("bursty_lod"), "{err}");
    let err = load_config(&write(dir.path(), "syntax.toml", "[run]\nseed = 1\nseed = = 2\n")).unwrap_err();
    assert!(matches!(err, Error::ConfigParse { .. }));
    assert!(err.to_string().contains("line 3"), "{err}");
}

#[test]
fn save_then_load_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(PolicyKind::AntIdeal);
    cfg.failures = Some(Default::default());
    cfg.mobility = Some(Default::default());
    cfg.policy.virtual_bursty_load = Some(3.0);
    let path = dir.path().join("c.toml");
    save_config(&cfg, &path).unwrap();
    assert_eq!(load_config(&path).unwrap(), cfg);
}

#[test]
fn dotted_overrides() {
    let cfg = set_path(&ScenarioConfig::default(), "traffic.bursty_load", toml::Value::Integer(3)).unwrap();
    assert_eq!(cfg.traffic.bursty_load, 3.0);
    let cfg = set_path(&cfg, "policy.kind", toml::Value::String("sp-bp".into())).unwrap();
    assert_eq!(cfg.policy.kind, PolicyKind::SpBp);
    assert!(set_path(&cfg, "traffic.nope", toml::Value::Integer(1)).is_err());
}

#[test]
fn zero_traffic_gives_empty_traces() {
    let mut cfg = small(PolicyKind::AntBp);
    cfg.traffic.streaming_load = 0.0;
    cfg.traffic.bursty_load = 0.0;
    let out = run_scenario(&cfg).unwrap();
    assert_eq!(out.metrics.goodput, 0.0);
    assert_eq!(out.metrics.injected, 0);
    assert_eq!(out.metrics.flow_residual, Some(0.0));
    let files = render_run(&out).unwrap();
    let packets = &files.iter().find(|(n, _)| *n == PACKETS_CSV).unwrap().1;
    assert_eq!(String::from_utf8_lossy(packets).lines().count(), 1);
}

#[test]
fn mirror_matches_antbp_on_pure_streaming() {
    let mut a = small(PolicyKind::AntBp);
    a.traffic.p_bursty = 0.0;
    let mut b = a.clone();
    b.policy.kind = PolicyKind::AntBpMirror;
    assert_eq!(run_scenario(&a).unwrap().metrics, run_scenario(&b).unwrap().metrics);
}

#[test]
fn policies_share_the_environment() {
    let outs: Vec<_> = PolicyKind::ALL.iter().map(|&k| run_scenario(&small(k)).unwrap()).collect();
    for o in &outs[1..] {
        assert_eq!(o.flows, outs[0].flows);
        assert_eq!(o.metrics.injected, outs[0].metrics.injected);
        let arrivals = |x: &antbp::harness::RunOutput| x.slots.iter().map(|s| s.arrivals).collect::<Vec<_>>();
        assert_eq!(arrivals(o), arrivals(&outs[0]));
    }
}

#[test]
fn manifest_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(PolicyKind::AntBaseline);
    cfg.failures = Some(Default::default());
    write_run(&run_scenario(&cfg).unwrap(), dir.path()).unwrap();
    let first = std::fs::read(dir.path().join(SLOTS_CSV)).unwrap();
    let report = check_run_dir(dir.path()).unwrap();
    assert!(report.ok(), "{report:?}");
    write_run(&run_scenario(&cfg).unwrap(), dir.path()).unwrap();
    assert_eq!(std::fs::read(dir.path().join(SLOTS_CSV)).unwrap(), first);
}

#[test]
fn sweep_examples() {
    let one = SweepSpec { axis: "traffic.bursty_load".into(), values: vec!["0.5".into()], seeds: 1, policies: None };
    assert_eq!(summarize(&run_sweep(&small(PolicyKind::SpBp), &one).unwrap()).len(), 1);

    let empty = SweepSpec { values: vec![], ..one.clone() };
    let cells = run_sweep(&small(PolicyKind::SpBp), &empty).unwrap();
    let csv = render_summary("traffic.bursty_load", &summarize(&cells)).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1);

    let paired = SweepSpec { policies: Some(vec![PolicyKind::AntBp, PolicyKind::SpBp, PolicyKind::AntIdeal]), seeds: 2, ..one };
    let cells = run_sweep(&small(PolicyKind::SpBp), &paired).unwrap();
    for seed in 0..2 {
        let injected: Vec<u64> = cells.iter().filter(|c| c.seed == seed).map(|c| c.result.as_ref().unwrap().injected).collect();
        assert!(injected.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn bins_are_fifty_wide() {
    assert_eq!(bin_mid(524, 50), 525.0);
    assert_eq!(bin_mid(499, 50), 475.0);
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
