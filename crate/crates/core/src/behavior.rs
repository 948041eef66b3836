//! Customer-side dynamics: attempts, experience encoding, scar / trust /
//! rumor updates and behavioural mode transitions.
//!
//! All updates are pure functions of the current state; clipping is applied
//! to the result of each full update expression.

use serde::{Deserialize, Serialize};

use crate::agents::{CustomerParams, Mode};

/// Which broadcast states customers perceive during step `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BroadcastTiming {
    /// Broadcasts after this step's merchant update.
    #[default]
    Current,
    /// Broadcasts as they stood at the start of the step.
    Previous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorSpec {
    pub phi_ok: f64,
    pub phi_frustrated: f64,
    pub phi_avoiding: f64,
    pub w_merchant: f64,
    pub w_social: f64,
    /// Weight of the lagged outflow term in the composite perception.
    pub w_feedback: f64,
    /// Outflow, as a fraction of total initial balances, that saturates the
    /// feedback term.
    pub feedback_ref: f64,
    pub alpha_failure: f64,
    pub alpha_unknown: f64,
    pub beta_trust: f64,
    pub broadcast_timing: BroadcastTiming,
}

impl Default for BehaviorSpec {
    fn default() -> Self {
        Self {
            phi_ok: 1.0,
            phi_frustrated: 0.7,
            phi_avoiding: 0.3,
            w_merchant: 0.6,
            w_social: 0.4,
            w_feedback: 0.0,
            feedback_ref: 0.01,
            alpha_failure: 0.75,
            alpha_unknown: 1.0,
            beta_trust: 0.02,
            broadcast_timing: BroadcastTiming::Current,
        }
    }
}

impl BehaviorSpec {
    pub fn phi(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Ok => self.phi_ok,
            Mode::Frustrated => self.phi_frustrated,
            Mode::Avoiding => self.phi_avoiding,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OutcomeKind {
    Success,
    Failure,
    Unknown,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PaymentOutcome {
    pub kind: OutcomeKind,
    pub via_substitution: bool,
}

impl PaymentOutcome {
    pub const NONE: Self = Self {
        kind: OutcomeKind::None,
        via_substitution: false,
    };

    pub fn card(kind: OutcomeKind) -> Self {
        Self {
            kind,
            via_substitution: false,
        }
    }

    pub fn substituted() -> Self {
        Self {
            kind: OutcomeKind::Success,
            via_substitution: true,
        }
    }

    pub fn is_adverse(&self) -> bool {
        matches!(self.kind, OutcomeKind::Failure | OutcomeKind::Unknown)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExperienceSignal {
    pub raw: f64,
    pub normalized: f64,
}

impl ExperienceSignal {
    pub fn is_negative(&self) -> bool {
        self.raw < 0.0
    }
}

pub fn attempt_probability(lambda: f64, mode: Mode, demand: f64, spec: &BehaviorSpec) -> f64 {
    (lambda * demand * spec.phi(mode)).min(1.0)
}

/// Signed and normalized experience; with no attempt the normalized value is
/// the current trust so the trust update is neutral.
pub fn encode_experience(
    outcome: PaymentOutcome,
    alpha_failure: f64,
    alpha_unknown: f64,
    current_trust: f64,
) -> ExperienceSignal {
    let raw = match outcome.kind {
        OutcomeKind::Success => 1.0,
        OutcomeKind::Failure => -alpha_failure,
        OutcomeKind::Unknown => -alpha_unknown,
        OutcomeKind::None => 0.0,
    };
    let normalized = match outcome.kind {
        OutcomeKind::None => current_trust,
        _ => (raw + alpha_unknown) / (1.0 + alpha_unknown),
    }
    .clamp(0.0, 1.0);
    ExperienceSignal { raw, normalized }
}

pub fn update_scar(scar: f64, rho_scar: f64, gamma_scar: f64, signal: ExperienceSignal) -> f64 {
    let hit = if signal.is_negative() {
        gamma_scar
    } else {
        0.0
    };
    (rho_scar * scar + hit).min(1.0)
}

pub fn update_trust(
    trust: f64,
    scar: f64,
    rho_trust: f64,
    beta_trust: f64,
    signal: ExperienceSignal,
) -> f64 {
    (rho_trust * trust + (1.0 - rho_trust) * signal.normalized - beta_trust * scar).clamp(0.0, 1.0)
}

pub fn update_rumor(rumor: f64, rho_rumor: f64, psi: f64) -> f64 {
    (rho_rumor * rumor + (1.0 - rho_rumor) * psi).clamp(0.0, 1.0)
}

pub fn composite_perception(
    broadcast_avg: f64,
    avoiding_frac: f64,
    w_merchant: f64,
    w_social: f64,
    w_feedback: f64,
    feedback: f64,
) -> f64 {
    (w_merchant * broadcast_avg + w_social * avoiding_frac + w_feedback * feedback).clamp(0.0, 1.0)
}

/// Mode from effective trust `T - kappa * C`; `>=` boundaries at both thresholds.
pub fn transition_mode(trust: f64, scar: f64, params: &CustomerParams) -> Mode {
    let effective = trust - params.kappa_scar * scar;
    if effective >= params.theta_upper {
        Mode::Ok
    } else if effective >= params.theta_lower {
        Mode::Frustrated
    } else {
        Mode::Avoiding
    }
}
