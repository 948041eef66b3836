//! Exogenous payment infrastructure: per-step outcome probabilities and demand.
//!
//! A scenario is a list of phases. `hold` phases stay at their level; `ramp`
//! phases start at the previous phase's level and move linearly towards their
//! own level, reaching it at the first step of the next phase. Each step's
//! probabilities are renormalized after interpolation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("scenario has no phases")]
    Empty,
    #[error("phase {index}: duration must be positive")]
    ZeroDuration { index: usize },
    #[error("phase {index}: {reason}")]
    InvalidLevel { index: usize, reason: String },
    #[error("phase {index}: a ramp needs a preceding phase to start from")]
    RampWithoutStart { index: usize },
    #[error("phase {index}: role `{role}` out of order (expected stable, decline, outage, recovery, post)")]
    RoleOrder { index: usize, role: &'static str },
    #[error("scenario declares more than one outage phase")]
    MultipleOutages,
    #[error("phase {index}: outage phase must be a hold")]
    OutageNotHold { index: usize },
    #[error("scenario with an outage must start with a stable phase and contain a recovery phase")]
    IncompleteOutage,
    #[error("decline or recovery phases require an outage phase")]
    MissingOutage,
    #[error(
        "step {step}: p_success {value} is not above the outage level {nadir} before the outage"
    )]
    NadirOutsideOutage { step: usize, value: f64, nadir: f64 },
    #[error("step {step}: p_success declines ({prev} -> {value}) after the outage nadir")]
    NonMonotoneRecovery { step: usize, prev: f64, value: f64 },
    #[error("demand window {index}: {reason}")]
    InvalidDemandWindow { index: usize, reason: String },
    #[error("failure_share must lie in [0, 1], got {0}")]
    InvalidFailureShare(f64),
    #[error("outcome probabilities ({0}, {1}, {2}) do not sum to 1")]
    NotNormalized(f64, f64, f64),
}

/// Success / failure / unknown probabilities for one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutcomeProbs {
    pub success: f64,
    pub failure: f64,
    pub unknown: f64,
}

impl OutcomeProbs {
    pub fn new(success: f64, failure: f64, unknown: f64) -> Result<Self, ScenarioError> {
        let ok = [success, failure, unknown]
            .iter()
            .all(|p| (0.0..=1.0).contains(p));
        if !ok || (success + failure + unknown - 1.0).abs() > SUM_TOLERANCE {
            return Err(ScenarioError::NotNormalized(success, failure, unknown));
        }
        Ok(Self {
            success,
            failure,
            unknown,
        })
    }

    /// Scales non-negative weights to sum to one.
    pub fn normalized(success: f64, failure: f64, unknown: f64) -> Option<Self> {
        let parts = [success, failure, unknown];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return None;
        }
        let total: f64 = parts.iter().sum();
        if total <= 0.0 {
            return None;
        }
        Some(Self {
            success: success / total,
            failure: failure / total,
            unknown: unknown / total,
        })
    }

    fn lerp(a: &Self, b: &Self, frac: f64) -> Option<Self> {
        let mix = |x: f64, y: f64| x + (y - x) * frac;
        Self::normalized(
            mix(a.success, b.success),
            mix(a.failure, b.failure),
            mix(a.unknown, b.unknown),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseRole {
    Stable,
    Decline,
    Outage,
    Recovery,
    Post,
}

impl PhaseRole {
    fn name(self) -> &'static str {
        match self {
            PhaseRole::Stable => "stable",
            PhaseRole::Decline => "decline",
            PhaseRole::Outage => "outage",
            PhaseRole::Recovery => "recovery",
            PhaseRole::Post => "post",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseShape {
    #[default]
    Hold,
    Ramp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub role: PhaseRole,
    pub steps: usize,
    #[serde(default)]
    pub shape: PhaseShape,
    pub p_success: f64,
    /// When both `p_failure` and `p_unknown` are given the triple is
    /// renormalized; otherwise the residual `1 - p_success` is split by
    /// the scenario's `failure_share`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_failure: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_unknown: Option<f64>,
}

impl PhaseSpec {
    pub fn hold(role: PhaseRole, steps: usize, p_success: f64) -> Self {
        Self {
            role,
            steps,
            shape: PhaseShape::Hold,
            p_success,
            p_failure: None,
            p_unknown: None,
        }
    }

    pub fn ramp(role: PhaseRole, steps: usize, p_success: f64) -> Self {
        Self {
            shape: PhaseShape::Ramp,
            ..Self::hold(role, steps, p_success)
        }
    }

    fn level(&self, index: usize, failure_share: f64) -> Result<OutcomeProbs, ScenarioError> {
        let invalid = |reason: String| ScenarioError::InvalidLevel { index, reason };
        if !(0.0..=1.0).contains(&self.p_success) {
            return Err(invalid(format!(
                "p_success {} outside [0, 1]",
                self.p_success
            )));
        }
        match (self.p_failure, self.p_unknown) {
            (Some(f), Some(u)) => OutcomeProbs::normalized(self.p_success, f, u).ok_or_else(|| {
                invalid(format!(
                    "({}, {}, {}) cannot be normalized",
                    self.p_success, f, u
                ))
            }),
            (None, None) => {
                let rest = 1.0 - self.p_success;
                OutcomeProbs::normalized(
                    self.p_success,
                    rest * failure_share,
                    rest * (1.0 - failure_share),
                )
                .ok_or_else(|| invalid("probabilities cannot be normalized".into()))
            }
            _ => Err(invalid(
                "p_failure and p_unknown must be given together".into(),
            )),
        }
    }
}

/// Interval `[start, start + steps)` with a constant demand multiplier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandWindow {
    pub start: usize,
    pub steps: usize,
    pub multiplier: f64,
}

fn default_failure_share() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    /// Share of the non-success mass assigned to explicit failures.
    #[serde(default = "default_failure_share")]
    pub failure_share: f64,
    pub phases: Vec<PhaseSpec>,
    #[serde(default)]
    pub demand_windows: Vec<DemandWindow>,
}

impl ScenarioSpec {
    /// 50 stable / 10 decline / 20 outage at 0.4 / 40 recovery / 180 post,
    /// with demand 1.5 over part of the recovery.
    pub fn baseline() -> Self {
        Self {
            failure_share: 0.5,
            phases: vec![
                PhaseSpec::hold(PhaseRole::Stable, 50, 0.99),
                PhaseSpec::ramp(PhaseRole::Decline, 10, 0.40),
                PhaseSpec::hold(PhaseRole::Outage, 20, 0.40),
                PhaseSpec::ramp(PhaseRole::Recovery, 40, 0.99),
                PhaseSpec::hold(PhaseRole::Post, 180, 0.99),
            ],
            demand_windows: vec![DemandWindow {
                start: 95,
                steps: 20,
                multiplier: 1.5,
            }],
        }
    }

    /// Constant `p_success` with no incident.
    pub fn steady(steps: usize, p_success: f64) -> Self {
        Self {
            failure_share: 0.5,
            phases: vec![PhaseSpec::hold(PhaseRole::Stable, steps, p_success)],
            demand_windows: Vec::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.phases.iter().map(|p| p.steps).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioPhases {
    /// First step after the pre-incident stable period.
    pub stable_end: usize,
    pub nadir: usize,
    /// Exclusive end of the last recovery phase.
    pub recovery_end: usize,
    pub outage: (usize, usize),
    pub peak_demand_windows: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioTimeline {
    probs: Vec<OutcomeProbs>,
    demand: Vec<f64>,
    phases: Option<ScenarioPhases>,
}

impl ScenarioTimeline {
    pub fn horizon(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self, t: usize) -> OutcomeProbs {
        self.probs[t]
    }

    pub fn demand(&self, t: usize) -> f64 {
        self.demand[t]
    }

    pub fn all_probs(&self) -> &[OutcomeProbs] {
        &self.probs
    }

    pub fn all_demand(&self) -> &[f64] {
        &self.demand
    }

    /// Phase boundaries, present when the scenario declares an outage.
    pub fn phases(&self) -> Option<&ScenarioPhases> {
        self.phases.as_ref()
    }

    pub fn nadir(&self) -> usize {
        nadir(&self.probs)
    }
}

/// Earliest index minimizing `p_success`. Panics on an empty slice.
pub fn nadir(probs: &[OutcomeProbs]) -> usize {
    assert!(!probs.is_empty(), "nadir of an empty timeline");
    let mut best = 0;
    for (t, p) in probs.iter().enumerate().skip(1) {
        if p.success < probs[best].success {
            best = t;
        }
    }
    best
}

pub fn build_piecewise_scenario(spec: &ScenarioSpec) -> Result<ScenarioTimeline, ScenarioError> {
    if spec.phases.is_empty() {
        return Err(ScenarioError::Empty);
    }
    if !(0.0..=1.0).contains(&spec.failure_share) {
        return Err(ScenarioError::InvalidFailureShare(spec.failure_share));
    }

    let mut outage_index = None;
    for (index, phase) in spec.phases.iter().enumerate() {
        if phase.steps == 0 {
            return Err(ScenarioError::ZeroDuration { index });
        }
        if index > 0 && phase.role < spec.phases[index - 1].role {
            return Err(ScenarioError::RoleOrder {
                index,
                role: phase.role.name(),
            });
        }
        if phase.role == PhaseRole::Outage {
            if outage_index.is_some() {
                return Err(ScenarioError::MultipleOutages);
            }
            if phase.shape != PhaseShape::Hold {
                return Err(ScenarioError::OutageNotHold { index });
            }
            outage_index = Some(index);
        }
    }
    let has_role = |r: PhaseRole| spec.phases.iter().any(|p| p.role == r);
    match outage_index {
        None if has_role(PhaseRole::Decline) || has_role(PhaseRole::Recovery) => {
            return Err(ScenarioError::MissingOutage)
        }
        Some(_) if spec.phases[0].role != PhaseRole::Stable || !has_role(PhaseRole::Recovery) => {
            return Err(ScenarioError::IncompleteOutage)
        }
        _ => {}
    }

    let horizon = spec.horizon();
    let mut probs = Vec::with_capacity(horizon);
    let mut role_of_step = Vec::with_capacity(horizon);
    let mut prev: Option<OutcomeProbs> = None;
    for (index, phase) in spec.phases.iter().enumerate() {
        let level = phase.level(index, spec.failure_share)?;
        match phase.shape {
            PhaseShape::Hold => probs.extend(std::iter::repeat_n(level, phase.steps)),
            PhaseShape::Ramp => {
                let start = prev.ok_or(ScenarioError::RampWithoutStart { index })?;
                probs.push(start);
                for k in 1..phase.steps {
                    let frac = k as f64 / phase.steps as f64;
                    let p = OutcomeProbs::lerp(&start, &level, frac).ok_or_else(|| {
                        ScenarioError::InvalidLevel {
                            index,
                            reason: "interpolated probabilities cannot be normalized".into(),
                        }
                    })?;
                    probs.push(p);
                }
            }
        }
        role_of_step.extend(std::iter::repeat_n(phase.role, phase.steps));
        prev = Some(level);
    }

    let mut demand = vec![1.0; horizon];
    let mut windows = Vec::with_capacity(spec.demand_windows.len());
    for (index, w) in spec.demand_windows.iter().enumerate() {
        let invalid = |reason: String| ScenarioError::InvalidDemandWindow { index, reason };
        if w.steps == 0 {
            return Err(invalid("duration must be positive".into()));
        }
        if w.start + w.steps > horizon {
            return Err(invalid(format!(
                "[{}, {}) exceeds horizon {}",
                w.start,
                w.start + w.steps,
                horizon
            )));
        }
        if !w.multiplier.is_finite() || w.multiplier < 1.0 {
            return Err(invalid(format!("multiplier {} below 1", w.multiplier)));
        }
        for d in &mut demand[w.start..w.start + w.steps] {
            *d = w.multiplier;
        }
        windows.push((w.start, w.start + w.steps));
    }

    let phases = match outage_index {
        None => None,
        Some(oi) => {
            let starts: Vec<usize> = spec
                .phases
                .iter()
                .scan(0, |acc, p| {
                    let s = *acc;
                    *acc += p.steps;
                    Some(s)
                })
                .collect();
            let outage_start = starts[oi];
            let outage_end = outage_start + spec.phases[oi].steps;
            let outage_level = probs[outage_start].success;
            for (step, p) in probs.iter().enumerate().take(outage_start) {
                if p.success <= outage_level {
                    return Err(ScenarioError::NadirOutsideOutage {
                        step,
                        value: p.success,
                        nadir: outage_level,
                    });
                }
            }
            for step in outage_start + 1..horizon {
                if probs[step].success < probs[step - 1].success - SUM_TOLERANCE {
                    return Err(ScenarioError::NonMonotoneRecovery {
                        step,
                        prev: probs[step - 1].success,
                        value: probs[step].success,
                    });
                }
            }
            let stable_end = role_of_step
                .iter()
                .position(|r| *r != PhaseRole::Stable)
                .unwrap_or(horizon);
            let recovery_end = role_of_step
                .iter()
                .rposition(|r| *r == PhaseRole::Recovery)
                .map(|i| i + 1)
                .unwrap_or(horizon);
            Some(ScenarioPhases {
                stable_end,
                nadir: nadir(&probs),
                recovery_end,
                outage: (outage_start, outage_end),
                peak_demand_windows: windows,
            })
        }
    };

    Ok(ScenarioTimeline {
        probs,
        demand,
        phases,
    })
}
