//! Withdrawal gating and outflows, plus the instant-transfer substitution rail.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{CustomerParams, CustomerState, Mode};
use crate::behavior::PaymentOutcome;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WithdrawalEvent {
    pub customer: usize,
    pub step: usize,
    pub amount: f64,
    pub balance_after: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubstitutionTrigger {
    #[default]
    OnFailureAndUnknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubstitutionSpec {
    pub enabled: bool,
    pub adoption_prob: f64,
    pub transfer_success_prob: f64,
    pub trigger: SubstitutionTrigger,
}

impl Default for SubstitutionSpec {
    fn default() -> Self {
        Self {
            enabled: false,
            adoption_prob: 0.6,
            transfer_success_prob: 0.04,
            trigger: SubstitutionTrigger::OnFailureAndUnknown,
        }
    }
}

pub fn is_eligible(state: &CustomerState, params: &CustomerParams) -> bool {
    state.mode == Mode::Avoiding
        && state.scar >= params.theta_scar_withdraw
        && state.rumor >= params.theta_rumor_withdraw
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn withdrawal_probability(state: &CustomerState, params: &CustomerParams) -> f64 {
    logistic(
        params.alpha_rumor * state.rumor + params.alpha_scar * state.scar
            - params.alpha_trust * state.trust,
    )
}

/// Removes `omega` of the balance; `None` (and no change) when the balance is zero.
pub fn apply_withdrawal(
    state: &mut CustomerState,
    params: &CustomerParams,
    customer: usize,
    step: usize,
) -> Option<WithdrawalEvent> {
    if state.balance <= 0.0 {
        return None;
    }
    let amount = params.omega * state.balance;
    state.balance -= amount;
    Some(WithdrawalEvent {
        customer,
        step,
        amount,
        balance_after: state.balance,
    })
}

pub fn aggregate_outflow(events: &[WithdrawalEvent]) -> f64 {
    events.iter().fold(0.0, |acc, e| acc + e.amount)
}

/// What the customer experiences after an adverse card outcome. Draws from
/// `rng` only when substitution is enabled, the customer adopts it and the
/// card outcome is adverse.
pub fn try_substitution<R: Rng>(
    card: PaymentOutcome,
    adopter: bool,
    spec: &SubstitutionSpec,
    rng: &mut R,
) -> PaymentOutcome {
    if !spec.enabled || !adopter || !card.is_adverse() {
        return card;
    }
    let u: f64 = rng.gen();
    if u < spec.transfer_success_prob {
        PaymentOutcome::substituted()
    } else {
        card
    }
}
