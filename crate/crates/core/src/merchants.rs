//! Merchant rolling-window assessment and sticky broadcast state.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::Range;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Accepting,
    Degraded,
    Fallback,
}

pub fn broadcast_severity(label: Label) -> f64 {
    match label {
        Label::Accepting => 0.0,
        Label::Degraded => 0.5,
        Label::Fallback => 1.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MerchantSpec {
    pub window_len: usize,
    /// Degradation ratio at which a merchant turns DEGRADED.
    pub theta_degraded: Range,
    /// Degradation ratio at which a merchant turns FALLBACK.
    pub theta_fallback: Range,
    pub eta: f64,
    pub epsilon: f64,
    /// Broadcast persistence time in steps.
    pub dwell: Range,
    pub clean_required: u32,
    /// Whether a step without attempts counts towards the clean streak.
    pub idle_counts_clean: bool,
    /// Multiplier on the dwell timer's per-step decay.
    pub comm_quality: f64,
}

impl Default for MerchantSpec {
    fn default() -> Self {
        Self {
            window_len: 10,
            theta_degraded: Range::new(0.10, 0.20),
            theta_fallback: Range::new(0.30, 0.45),
            eta: 0.7,
            epsilon: 1e-9,
            dwell: Range::new(5.0, 20.0),
            clean_required: 3,
            idle_counts_clean: true,
            comm_quality: 1.0,
        }
    }
}

impl MerchantSpec {
    /// Three draws: degraded threshold, fallback threshold, dwell.
    pub fn sample_params<R: Rng>(&self, rng: &mut R) -> MerchantParams {
        MerchantParams {
            theta_degraded: self.theta_degraded.sample(rng),
            theta_fallback: self.theta_fallback.sample(rng),
            dwell_init: self.dwell.sample(rng),
            eta: self.eta,
            epsilon: self.epsilon,
            window_len: self.window_len,
            clean_required: self.clean_required,
            idle_counts_clean: self.idle_counts_clean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MerchantParams {
    pub theta_degraded: f64,
    pub theta_fallback: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub window_len: usize,
    pub dwell_init: f64,
    pub clean_required: u32,
    pub idle_counts_clean: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepCounts {
    pub attempts: u32,
    pub failures: u32,
    pub unknowns: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MerchantState {
    window: VecDeque<StepCounts>,
    totals: StepCounts,
    pub operational: Label,
    pub broadcast: Label,
    pub dwell_timer: f64,
    pub clean_streak: u32,
}

impl MerchantState {
    /// `window_len` must be at least 1.
    pub fn new(window_len: usize) -> Self {
        assert!(
            window_len > 0,
            "merchant window must hold at least one step"
        );
        Self {
            window: VecDeque::from(vec![StepCounts::default(); window_len]),
            totals: StepCounts::default(),
            operational: Label::Accepting,
            broadcast: Label::Accepting,
            dwell_timer: 0.0,
            clean_streak: 0,
        }
    }

    /// Attempts, failures and unknowns over the last `window_len` steps.
    pub fn window_totals(&self) -> StepCounts {
        self.totals
    }

    pub fn window(&self) -> impl Iterator<Item = &StepCounts> {
        self.window.iter()
    }

    pub fn record(&mut self, counts: StepCounts) {
        if let Some(old) = self.window.pop_front() {
            self.totals.attempts -= old.attempts;
            self.totals.failures -= old.failures;
            self.totals.unknowns -= old.unknowns;
        }
        self.window.push_back(counts);
        self.totals.attempts += counts.attempts;
        self.totals.failures += counts.failures;
        self.totals.unknowns += counts.unknowns;
    }

    /// Records this step's counts then updates operational and broadcast state.
    pub fn step(&mut self, counts: StepCounts, params: &MerchantParams, comm_quality: f64) {
        self.record(counts);
        let t = self.totals;
        let delta = degradation_ratio(t.attempts, t.failures, t.unknowns, params);
        self.operational = update_operational(delta, params);
        update_broadcast(self, params, comm_quality, counts.attempts);
    }
}

pub fn degradation_ratio(
    attempts: u32,
    failures: u32,
    unknowns: u32,
    params: &MerchantParams,
) -> f64 {
    (failures as f64 + params.eta * unknowns as f64) / (attempts as f64 + params.epsilon)
}

pub fn update_operational(delta: f64, params: &MerchantParams) -> Label {
    if delta < params.theta_degraded {
        Label::Accepting
    } else if delta < params.theta_fallback {
        Label::Degraded
    } else {
        Label::Fallback
    }
}

/// Sticky broadcast update, applied after `state.operational` is current.
///
/// While operational is degraded the timer stays armed at `dwell_init` and the
/// broadcast holds the most severe label of the episode. Once operational is
/// ACCEPTING the timer decays by `comm_quality` per step; the broadcast clears
/// on the first step that finds the timer at zero with a clean streak of at
/// least `clean_required`.
pub fn update_broadcast(
    state: &mut MerchantState,
    params: &MerchantParams,
    comm_quality: f64,
    step_attempts: u32,
) {
    if state.operational != Label::Accepting {
        state.dwell_timer = params.dwell_init;
        state.clean_streak = 0;
        state.broadcast = state.broadcast.max(state.operational);
        return;
    }
    if step_attempts > 0 || params.idle_counts_clean {
        state.clean_streak = state.clean_streak.saturating_add(1);
    }
    if state.broadcast == Label::Accepting {
        return;
    }
    if state.dwell_timer <= 0.0 && state.clean_streak >= params.clean_required {
        state.broadcast = Label::Accepting;
        state.dwell_timer = 0.0;
    } else {
        state.dwell_timer = (state.dwell_timer - comm_quality).max(0.0);
    }
}
