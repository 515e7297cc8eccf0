//! Re-run a recorded run from its manifest and compare traces.

use std::path::Path;

use crate::error::Result;
use crate::harness::output::{load_manifest, render_run, TRACE_FILES};
use crate::harness::sim::run_scenario;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CheckReport {
    pub matched: Vec<String>,
    /// Files whose bytes differ, or that are missing on disk.
    pub mismatched: Vec<String>,
}

impl CheckReport {
    pub fn ok(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Replays the manifest config with invariant checks on. Invariant
/// violations surface as errors; trace differences land in the report.
pub fn check_run_dir(dir: &Path) -> Result<CheckReport> {
    let manifest = load_manifest(dir)?;
    let mut cfg = manifest.config;
    cfg.run.check_invariants = true;
    let out = run_scenario(&cfg)?;
    let mut report = CheckReport::default();
    for (name, bytes) in render_run(&out)? {
        if !TRACE_FILES.contains(&name) {
            continue;
        }
        match std::fs::read(dir.join(name)) {
            Ok(disk) if disk == bytes => report.matched.push(name.to_string()),
            _ => report.mismatched.push(name.to_string()),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ScenarioConfig;
    use crate::harness::output::{write_run, PACKETS_CSV};

    #[test]
    fn rerun_matches_then_detects_tampering() {
        let mut cfg = ScenarioConfig::default();
        cfg.topology.nodes = 12;
        cfg.traffic.horizon = 80;
        cfg.policy.virtual_steps = 40;
        let dir = tempfile::tempdir().unwrap();
        write_run(&run_scenario(&cfg).unwrap(), dir.path()).unwrap();
        let report = check_run_dir(dir.path()).unwrap();
        assert!(report.ok(), "{report:?}");
        assert_eq!(report.matched.len(), TRACE_FILES.len());

        let path = dir.path().join(PACKETS_CSV);
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("999,0,1,streaming,0,,0\n");
        std::fs::write(&path, text).unwrap();
        assert_eq!(check_run_dir(dir.path()).unwrap().mismatched, vec![PACKETS_CSV.to_string()]);
    }

    #[test]
    fn missing_manifest_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(check_run_dir(dir.path()).unwrap_err().is_config_error());
    }
}
