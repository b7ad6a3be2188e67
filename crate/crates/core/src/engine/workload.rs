//! Call workload: scripted lists and seeded random arrivals.

use thiserror::Error;

use crate::engine::rng::SimRng;
use crate::schemes::SchemeKind;
use crate::SimTime;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedCall {
    pub start_time: SimTime,
    pub caller: String,
    pub callee: String,
    pub duration: u64,
    /// `None` when the scheme is chosen per run (the compare command).
    pub scheme: Option<SchemeKind>,
}

/// Poisson arrivals with exponential holding times.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomWorkload {
    pub seed: u64,
    /// Calls per second.
    pub arrival_rate: f64,
    /// Mean call duration in seconds.
    pub mean_duration: f64,
    /// Arrivals after this time are not generated.
    pub horizon: SimTime,
    /// Callers and callees are drawn uniformly from these MSISDNs.
    pub account_universe: Vec<String>,
    /// Each call's scheme is drawn uniformly from this list; empty means unassigned.
    pub schemes: Vec<SchemeKind>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkloadSpec {
    pub scripted_calls: Vec<ScriptedCall>,
    pub random: Option<RandomWorkload>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadMode {
    Scripted,
    Random,
}

impl WorkloadSpec {
    pub fn scripted(calls: Vec<ScriptedCall>) -> Self {
        Self {
            scripted_calls: calls,
            random: None,
        }
    }

    pub fn random(random: RandomWorkload) -> Self {
        Self {
            scripted_calls: Vec::new(),
            random: Some(random),
        }
    }

    pub fn mode(&self) -> WorkloadMode {
        if self.random.is_some() {
            WorkloadMode::Random
        } else {
            WorkloadMode::Scripted
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkloadError {
    #[error("random workload needs at least one account")]
    EmptyAccountUniverse,
    #[error("arrival rate must be a positive finite number")]
    InvalidArrivalRate,
    #[error("mean duration must be a non-negative finite number")]
    InvalidMeanDuration,
}

/// Expands a spec into the call list, sorted by start time.
///
/// Scripted calls come back verbatim. Random arrivals are appended and the
/// whole list is stably sorted, so scripted calls keep precedence on ties.
/// Per arrival the draws are, in order: inter-arrival gap, caller, callee,
/// duration, scheme (only when `schemes` is non-empty).
pub fn generate_workload(spec: &WorkloadSpec) -> Result<Vec<ScriptedCall>, WorkloadError> {
    let mut calls = spec.scripted_calls.clone();
    if let Some(random) = &spec.random {
        calls.extend(generate_random(random)?);
    }
    calls.sort_by_key(|c| c.start_time);
    Ok(calls)
}

fn generate_random(spec: &RandomWorkload) -> Result<Vec<ScriptedCall>, WorkloadError> {
    if spec.account_universe.is_empty() {
        return Err(WorkloadError::EmptyAccountUniverse);
    }
    if !(spec.arrival_rate.is_finite() && spec.arrival_rate > 0.0) {
        return Err(WorkloadError::InvalidArrivalRate);
    }
    if !(spec.mean_duration.is_finite() && spec.mean_duration >= 0.0) {
        return Err(WorkloadError::InvalidMeanDuration);
    }
    let mut rng = SimRng::new(spec.seed);
    let mean_gap = 1.0 / spec.arrival_rate;
    let universe = &spec.account_universe;
    let mut calls = Vec::new();
    let mut clock = 0.0_f64;
    loop {
        clock += rng.exponential(mean_gap);
        if clock > spec.horizon as f64 {
            break;
        }
        let caller = universe[rng.below(universe.len())].clone();
        let callee = universe[rng.below(universe.len())].clone();
        let duration = rng.exponential(spec.mean_duration).round() as u64;
        let scheme = if spec.schemes.is_empty() {
            None
        } else {
            Some(spec.schemes[rng.below(spec.schemes.len())])
        };
        calls.push(ScriptedCall {
            start_time: clock.floor() as SimTime,
            caller,
            callee,
            duration,
            scheme,
        });
    }
    Ok(calls)
}
