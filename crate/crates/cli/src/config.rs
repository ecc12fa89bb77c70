//! Experiment configuration: a flat TOML table whose keys match the fields
//! below. Values may be overridden by `QJUMPS_<KEY>` environment variables
//! (for example `QJUMPS_MASTER_SEED=7`), which in turn are overridden by
//! command-line flags.
//!
//! Units: every rate and frequency is in units of the `|1e⟩` tunneling
//! rate, every time in its inverse.

use std::fs;
use std::path::{Path, PathBuf};

use qjumps::analytics::{DarkRunFilter, DarkSegmenter};
use qjumps::hamiltonians::Basis;
use qjumps::model::{validate, validate_for_exponential, ModelParams};
use qjumps::trajectory::{Propagator, ResetPolicy};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Prefix of environment variables that override configuration keys.
pub const ENV_PREFIX: &str = "QJUMPS_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Two-level Rabi oscillation with tunneling readout; tunnel-time
    /// histogram against the master equation.
    #[default]
    Rabi,
    /// Telegraph series of repeated four-level runs.
    Telegraph,
    /// One long four-level trajectory.
    Continuous,
    /// Simulated and analytic dark rate `1/T_D` over a parameter sweep.
    DarkrateSweep,
    /// Simulated and analytic mean dark width over a parameter sweep.
    WidthSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetPolicyKind {
    #[default]
    Sample,
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: Experiment,

    pub detuning: f64,
    pub tls_detuning: f64,
    pub rabi_frequency: f64,
    pub coupling: f64,
    pub relaxation: f64,
    pub tunneling: f64,
    pub measurement_time: f64,
    pub time_step: f64,
    pub propagator: Propagator,

    /// Name of the model parameter scanned by the sweep experiments.
    pub sweep_parameter: String,
    pub sweep_start: f64,
    pub sweep_stop: f64,
    pub sweep_steps: usize,

    /// Trajectories of the `rabi` experiment.
    pub n_trajectories: usize,
    /// Runs of the `telegraph` experiment.
    pub n_runs: usize,
    /// Dark periods collected per sweep point.
    pub n_dark_periods: usize,
    /// Cap on simulated time per `darkrate-sweep` point.
    pub max_time: f64,
    /// Cap on runs per `width-sweep` point.
    pub max_runs: usize,
    /// Length of the `continuous` trajectory.
    pub total_time: f64,
    pub record_interval: f64,
    /// Histogram bins over `[0, measurement_time]` for `rabi`.
    pub histogram_bins: usize,

    pub master_seed: u64,
    pub out_dir: PathBuf,

    pub min_dark_runs: usize,
    pub enter_threshold: f64,
    pub exit_threshold: f64,
    pub min_dwell: f64,
    pub reset_policy: ResetPolicyKind,
    pub p_threshold: f64,
    pub first_state: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let m = ModelParams::default();
        Self {
            experiment: Experiment::Rabi,
            detuning: m.detuning,
            tls_detuning: m.tls_detuning,
            rabi_frequency: m.rabi_frequency,
            coupling: m.coupling,
            relaxation: m.relaxation,
            tunneling: m.tunneling,
            measurement_time: m.measurement_time,
            time_step: m.time_step,
            propagator: Propagator::FirstOrder,
            sweep_parameter: "tls_detuning".into(),
            sweep_start: -15.0,
            sweep_stop: 15.0,
            sweep_steps: 61,
            n_trajectories: 5000,
            n_runs: 300,
            n_dark_periods: 4000,
            max_time: 1e9,
            max_runs: 100_000_000,
            total_time: 2000.0,
            record_interval: 0.1,
            histogram_bins: 50,
            master_seed: 1,
            out_dir: PathBuf::from("out"),
            min_dark_runs: DarkRunFilter::DEFAULT_MIN_DARK_RUNS,
            enter_threshold: DarkSegmenter::DEFAULT_ENTER,
            exit_threshold: DarkSegmenter::DEFAULT_EXIT,
            min_dwell: DarkSegmenter::DEFAULT_MIN_DWELL,
            reset_policy: ResetPolicyKind::Sample,
            p_threshold: ResetPolicy::DEFAULT_THRESHOLD,
            first_state: "0e".into(),
        }
    }
}

pub const SWEEPABLE: [&str; 8] = [
    "detuning",
    "tls_detuning",
    "rabi_frequency",
    "coupling",
    "relaxation",
    "tunneling",
    "measurement_time",
    "time_step",
];

/// Set the model parameter `name` to `value`.
pub fn set_param(params: &mut ModelParams, name: &str, value: f64) -> Result<(), String> {
    let slot = match name {
        "detuning" => &mut params.detuning,
        "tls_detuning" => &mut params.tls_detuning,
        "rabi_frequency" => &mut params.rabi_frequency,
        "coupling" => &mut params.coupling,
        "relaxation" => &mut params.relaxation,
        "tunneling" => &mut params.tunneling,
        "measurement_time" => &mut params.measurement_time,
        "time_step" => &mut params.time_step,
        other => return Err(format!("unknown sweep parameter {other:?}; expected one of {SWEEPABLE:?}")),
    };
    *slot = value;
    Ok(())
}

impl ExperimentConfig {
    pub fn model(&self) -> ModelParams {
        ModelParams {
            detuning: self.detuning,
            tls_detuning: self.tls_detuning,
            rabi_frequency: self.rabi_frequency,
            coupling: self.coupling,
            relaxation: self.relaxation,
            tunneling: self.tunneling,
            measurement_time: self.measurement_time,
            time_step: self.time_step,
        }
    }

    pub fn with_model(mut self, m: &ModelParams) -> Self {
        self.detuning = m.detuning;
        self.tls_detuning = m.tls_detuning;
        self.rabi_frequency = m.rabi_frequency;
        self.coupling = m.coupling;
        self.relaxation = m.relaxation;
        self.tunneling = m.tunneling;
        self.measurement_time = m.measurement_time;
        self.time_step = m.time_step;
        self
    }

    pub fn reset(&self) -> ResetPolicy {
        match self.reset_policy {
            ResetPolicyKind::Sample => ResetPolicy::Sample,
            ResetPolicyKind::Threshold => ResetPolicy::Threshold { p_threshold: self.p_threshold },
        }
    }

    /// Sweep grid `start + k (stop − start)/(steps − 1)`, `k = 0..steps`.
    pub fn sweep_grid(&self) -> Vec<f64> {
        if self.sweep_steps <= 1 {
            return vec![self.sweep_start];
        }
        let h = (self.sweep_stop - self.sweep_start) / (self.sweep_steps - 1) as f64;
        (0..self.sweep_steps).map(|k| self.sweep_start + k as f64 * h).collect()
    }

    fn is_sweep(&self) -> bool {
        matches!(self.experiment, Experiment::DarkrateSweep | Experiment::WidthSweep)
    }

    /// Model parameters at every sweep point (or the single configured
    /// point for other experiments).
    pub fn sweep_models(&self) -> Result<Vec<ModelParams>, String> {
        if !self.is_sweep() {
            return Ok(vec![self.model()]);
        }
        self.sweep_grid()
            .into_iter()
            .map(|v| {
                let mut m = self.model();
                set_param(&mut m, &self.sweep_parameter, v).map(|_| m)
            })
            .collect()
    }

    /// Every violated constraint, as human-readable messages.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let check = |m: &ModelParams| match self.propagator {
            Propagator::FirstOrder => validate(m),
            Propagator::Exponential => validate_for_exponential(m),
        };
        match self.sweep_models() {
            Ok(models) => {
                let mut seen = std::collections::BTreeSet::new();
                for m in &models {
                    for v in check(m) {
                        let msg = if self.is_sweep() {
                            format!("{v} (at {} = {})", self.sweep_parameter, sweep_value(m, &self.sweep_parameter))
                        } else {
                            v.to_string()
                        };
                        if seen.insert(v.to_string()) {
                            out.push(msg);
                        }
                    }
                }
            }
            Err(e) => out.push(format!("sweep_parameter: {e}")),
        }
        if self.is_sweep() && self.sweep_steps < 1 {
            out.push("sweep_steps: must be >= 1".into());
        }
        let positive = [
            ("n_trajectories", self.n_trajectories),
            ("n_runs", self.n_runs),
            ("n_dark_periods", self.n_dark_periods),
            ("max_runs", self.max_runs),
            ("histogram_bins", self.histogram_bins),
            ("min_dark_runs", self.min_dark_runs),
        ];
        for (name, v) in positive {
            if v < 1 {
                out.push(format!("{name}: must be >= 1"));
            }
        }
        for (name, v) in [("max_time", self.max_time), ("total_time", self.total_time), ("record_interval", self.record_interval)] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name}: must be finite and > 0, got {v}"));
            }
        }
        if self.record_interval < self.time_step {
            out.push(format!("record_interval: must be >= time_step ({})", self.time_step));
        }
        if !(self.enter_threshold > self.exit_threshold) {
            out.push(format!(
                "enter_threshold: must exceed exit_threshold ({} <= {})",
                self.enter_threshold, self.exit_threshold
            ));
        }
        if !(self.min_dwell >= 0.0) {
            out.push(format!("min_dwell: must be >= 0, got {}", self.min_dwell));
        }
        if !(0.0..=1.0).contains(&self.p_threshold) {
            out.push(format!("p_threshold: must lie in [0, 1], got {}", self.p_threshold));
        }
        if Basis::Bare.index(&self.first_state).is_none() {
            out.push(format!("first_state: {:?} is not one of {:?}", self.first_state, Basis::Bare.labels()));
        }
        out
    }

    /// Create the output directory and make sure it accepts files.
    pub fn check_out_dir(&self) -> Result<(), String> {
        fs::create_dir_all(&self.out_dir).map_err(|e| format!("out_dir {}: {e}", self.out_dir.display()))?;
        let probe = self.out_dir.join(".qjumps-write-probe");
        fs::write(&probe, b"").map_err(|e| format!("out_dir {} is not writable: {e}", self.out_dir.display()))?;
        let _ = fs::remove_file(probe);
        Ok(())
    }

    /// The configuration as TOML, without the output directory (which does
    /// not affect results).
    pub fn echo(&self) -> String {
        let mut table = toml::Table::try_from(self).expect("config serializes to a table");
        table.remove("out_dir");
        toml::to_string(&table).expect("table serializes")
    }
}

fn sweep_value(m: &ModelParams, name: &str) -> f64 {
    let fields = [
        m.detuning,
        m.tls_detuning,
        m.rabi_frequency,
        m.coupling,
        m.relaxation,
        m.tunneling,
        m.measurement_time,
        m.time_step,
    ];
    SWEEPABLE.iter().position(|n| *n == name).map(|k| fields[k]).unwrap_or(f64::NAN)
}

fn parse_env_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Apply `QJUMPS_*` overrides from `vars` onto `table`.
pub fn apply_env<I>(table: &mut toml::Table, vars: I)
where
    I: IntoIterator<Item = (String, String)>,
{
    for (k, v) in vars {
        if let Some(key) = k.strip_prefix(ENV_PREFIX) {
            table.insert(key.to_ascii_lowercase(), parse_env_value(&v));
        }
    }
}

fn from_table(table: toml::Table) -> Result<ExperimentConfig, CliError> {
    if !table.contains_key("experiment") {
        return Err(CliError::Validation(vec!["experiment: missing (one of rabi, telegraph, continuous, darkrate-sweep, width-sweep)".into()]));
    }
    table.try_into().map_err(|e: toml::de::Error| CliError::Validation(vec![e.to_string()]))
}

/// Parse a TOML configuration, or the `config` object of a JSON run
/// manifest, applying environment overrides.
pub fn parse_config<I>(text: &str, is_manifest: bool, env: I) -> Result<ExperimentConfig, CliError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut table: toml::Table = if is_manifest {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Validation(vec![format!("manifest: {e}")]))?;
        let config = value
            .get("config")
            .cloned()
            .ok_or_else(|| CliError::Validation(vec!["manifest: no config object".into()]))?;
        toml::Table::try_from(config).map_err(|e| CliError::Validation(vec![format!("manifest config: {e}")]))?
    } else {
        toml::from_str(text).map_err(|e| CliError::Validation(vec![e.to_string()]))?
    };
    apply_env(&mut table, env);
    from_table(table)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))?;
    let is_manifest = path.extension().is_some_and(|e| e == "json");
    parse_config(&text, is_manifest, std::env::vars())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn none() -> Vec<(String, String)> {
        Vec::new()
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse_config("experiment = \"telegraph\"\n", false, none()).unwrap();
        assert_eq!(c.experiment, Experiment::Telegraph);
        assert_eq!(c.model(), ModelParams::default());
        assert!(c.violations().is_empty(), "{:?}", c.violations());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_config("experiment = \"rabi\"\nbogus = 1\n", false, none()).unwrap_err();
        assert!(matches!(err, CliError::Validation(_)));
        assert!(parse_config("detuning = 1.0\n", false, none()).is_err());
    }

    #[test]
    fn env_overrides() {
        let env = vec![
            ("QJUMPS_MASTER_SEED".to_string(), "99".to_string()),
            ("QJUMPS_EXPERIMENT".to_string(), "width-sweep".to_string()),
            ("OTHER".to_string(), "1".to_string()),
        ];
        let c = parse_config("experiment = \"rabi\"\nmaster_seed = 3\n", false, env).unwrap();
        assert_eq!(c.master_seed, 99);
        assert_eq!(c.experiment, Experiment::WidthSweep);
    }

    #[test]
    fn violations_collected() {
        let c = ExperimentConfig {
            time_step: 1.0,
            measurement_time: 0.0,
            enter_threshold: 0.4,
            first_state: "2x".into(),
            ..ExperimentConfig::default()
        };
        let v = c.violations();
        assert!(v.iter().any(|m| m.starts_with("time_step")));
        assert!(v.iter().any(|m| m.starts_with("measurement_time")));
        assert!(v.iter().any(|m| m.starts_with("enter_threshold")));
        assert!(v.iter().any(|m| m.starts_with("first_state")));
    }

    #[test]
    fn sweep_grid_and_parameter() {
        let c = ExperimentConfig { experiment: Experiment::DarkrateSweep, ..ExperimentConfig::default() };
        let g = c.sweep_grid();
        assert_eq!(g.len(), 61);
        assert_eq!((g[0], g[30], g[60]), (-15.0, 0.0, 15.0));
        let bad = ExperimentConfig { sweep_parameter: "nope".into(), ..c };
        assert!(bad.violations().iter().any(|m| m.starts_with("sweep_parameter")));
    }

    #[test]
    fn manifest_round_trip() {
        let c = ExperimentConfig { master_seed: 17, ..ExperimentConfig::default() };
        let manifest = serde_json::json!({ "config": c, "version": "x" }).to_string();
        assert_eq!(parse_config(&manifest, true, none()).unwrap(), c);
        assert!(!c.echo().contains("out_dir"));
    }
}
