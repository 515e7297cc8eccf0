//! Experiment harness: configuration, scenario engine, metrics, sweeps and outputs.

pub mod check;
pub mod config;
pub mod metrics;
pub mod output;
pub mod sim;
pub mod sweep;

pub use check::{check_run_dir, CheckReport};
pub use config::{load_config, save_config, LatencyMode, ScenarioConfig};
pub use metrics::RunMetrics;
pub use output::write_run;
pub use sim::{run_scenario, RunOutput};
pub use sweep::{run_sweep, SweepSpec};
