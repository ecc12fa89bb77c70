use std::io::{self, Write};

use serde::Serialize;

use super::state::StateVector;
use crate::model::ModelParams;

/// Result of one bounded measurement run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub run_index: usize,
    /// Basis label the run started from, when it started in a basis state.
    pub initial_state: Option<&'static str>,
    pub tunneled: bool,
    /// Present iff `tunneled`.
    pub tunnel_time: Option<f64>,
    /// Conditional state at the end of the run; present iff not `tunneled`.
    pub final_state: Option<StateVector>,
}

/// Ordered outcomes of a telegraph series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TelegraphSeries {
    pub outcomes: Vec<RunOutcome>,
    pub params: ModelParams,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TelegraphSummary {
    pub master_seed: u64,
    pub params: ModelParams,
    pub n_runs: usize,
    pub n_tunneled: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl TelegraphSeries {
    /// Tunneled flag of every run, in order.
    pub fn tunneled_flags(&self) -> Vec<bool> {
        self.outcomes.iter().map(|o| o.tunneled).collect()
    }

    /// Columns `run_index,initial_state,tunneled,tunnel_time`; the time is
    /// empty for runs without tunneling.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "run_index,initial_state,tunneled,tunnel_time")?;
        for o in &self.outcomes {
            writeln!(
                w,
                "{},{},{},{}",
                o.run_index,
                o.initial_state.unwrap_or(""),
                u8::from(o.tunneled),
                opt(o.tunnel_time)
            )?;
        }
        Ok(())
    }

    pub fn summary(&self) -> TelegraphSummary {
        TelegraphSummary {
            master_seed: self.master_seed,
            params: self.params,
            n_runs: self.outcomes.len(),
            n_tunneled: self.outcomes.iter().filter(|o| o.tunneled).count(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    /// Start time of the step in which the jump fired.
    pub time: f64,
    pub channel: &'static str,
}

/// A long conditional trajectory sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuousTrajectory {
    pub record_interval: f64,
    pub time_grid: Vec<f64>,
    pub population_1e: Vec<f64>,
    pub subspace_b_population: Vec<f64>,
    pub jump_events: Vec<JumpEvent>,
}

impl ContinuousTrajectory {
    /// Columns `t,p1e,pB`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,p1e,pB")?;
        for ((t, p), b) in self.time_grid.iter().zip(&self.population_1e).zip(&self.subspace_b_population) {
            writeln!(w, "{t},{p},{b}")?;
        }
        Ok(())
    }

    /// Columns `t,channel`.
    pub fn write_events_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,channel")?;
        for e in &self.jump_events {
            writeln!(w, "{},{}", e.time, e.channel)?;
        }
        Ok(())
    }

    pub fn count_events(&self, channel: &str) -> usize {
        self.jump_events.iter().filter(|e| e.channel == channel).count()
    }
}
