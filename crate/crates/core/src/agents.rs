//! Customer and merchant identities, heterogeneous parameters and exposure.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::merchants::{MerchantParams, MerchantSpec, MerchantState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Ok,
    Frustrated,
    Avoiding,
}

/// Closed interval `[lo, hi]`, written `[lo, hi]` in config files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn within(&self, outer: &Range) -> bool {
        outer.lo <= self.lo && self.hi <= outer.hi
    }

    /// One uniform draw mapped onto the interval; consumes exactly one `f64`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        self.lo + (self.hi - self.lo) * u
    }
}

impl From<[f64; 2]> for Range {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Self { lo, hi }
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.lo, r.hi]
    }
}

/// Sampling ranges for heterogeneous customer parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CustomerRanges {
    pub lambda: Range,
    /// Upper trust threshold; the lower one is `theta_upper - theta_gap`.
    pub theta_upper: Range,
    pub theta_gap: Range,
    pub rho_trust: Range,
    pub rho_scar: Range,
    pub rho_rumor: Range,
    pub gamma_scar: Range,
    pub kappa_scar: Range,
    pub alpha_rumor: Range,
    pub alpha_scar: Range,
    pub alpha_trust: Range,
    pub omega: Range,
    pub theta_scar_withdraw: Range,
    pub theta_rumor_withdraw: Range,
    pub initial_balance: Range,
}

impl Default for CustomerRanges {
    fn default() -> Self {
        Self {
            lambda: Range::new(0.1, 0.4),
            theta_upper: Range::new(0.55, 0.75),
            theta_gap: Range::new(0.15, 0.25),
            rho_trust: Range::new(0.8, 0.95),
            rho_scar: Range::new(0.9, 0.99),
            rho_rumor: Range::new(0.9, 0.99),
            gamma_scar: Range::new(0.05, 0.2),
            kappa_scar: Range::new(0.3, 0.7),
            alpha_rumor: Range::new(1.0, 3.0),
            alpha_scar: Range::new(1.0, 3.0),
            alpha_trust: Range::new(2.0, 4.0),
            omega: Range::new(0.05, 0.3),
            theta_scar_withdraw: Range::new(0.4, 0.7),
            theta_rumor_withdraw: Range::new(0.4, 0.7),
            initial_balance: Range::point(1.0),
        }
    }
}

/// Documented typical ranges; configured ranges outside them only warn.
pub const TYPICAL_RANGES: &[(&str, Range)] = &[
    ("lambda", Range::new(0.1, 0.4)),
    ("rho_trust", Range::new(0.8, 0.95)),
    ("rho_scar", Range::new(0.9, 0.99)),
    ("rho_rumor", Range::new(0.9, 0.99)),
    ("gamma_scar", Range::new(0.05, 0.2)),
    ("omega", Range::new(0.05, 0.3)),
    ("theta_scar_withdraw", Range::new(0.4, 0.7)),
    ("theta_rumor_withdraw", Range::new(0.4, 0.7)),
];

impl CustomerRanges {
    pub fn named(&self) -> [(&'static str, Range); 15] {
        [
            ("lambda", self.lambda),
            ("theta_upper", self.theta_upper),
            ("theta_gap", self.theta_gap),
            ("rho_trust", self.rho_trust),
            ("rho_scar", self.rho_scar),
            ("rho_rumor", self.rho_rumor),
            ("gamma_scar", self.gamma_scar),
            ("kappa_scar", self.kappa_scar),
            ("alpha_rumor", self.alpha_rumor),
            ("alpha_scar", self.alpha_scar),
            ("alpha_trust", self.alpha_trust),
            ("omega", self.omega),
            ("theta_scar_withdraw", self.theta_scar_withdraw),
            ("theta_rumor_withdraw", self.theta_rumor_withdraw),
            ("initial_balance", self.initial_balance),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationSpec {
    pub customers: usize,
    pub merchants: usize,
    pub merchants_per_customer: usize,
    /// Relative exposure weights, one per habitual merchant; uniform if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exposure_weights: Option<Vec<f64>>,
    pub initial_trust: f64,
    pub ranges: CustomerRanges,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            customers: 1000,
            merchants: 100,
            merchants_per_customer: 3,
            exposure_weights: None,
            initial_trust: 0.95,
            ranges: CustomerRanges::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CustomerParams {
    pub lambda: f64,
    pub theta_upper: f64,
    pub theta_lower: f64,
    pub rho_trust: f64,
    pub rho_scar: f64,
    pub rho_rumor: f64,
    pub gamma_scar: f64,
    pub kappa_scar: f64,
    pub alpha_rumor: f64,
    pub alpha_scar: f64,
    pub alpha_trust: f64,
    pub omega: f64,
    pub theta_scar_withdraw: f64,
    pub theta_rumor_withdraw: f64,
    pub substitution_adopter: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CustomerState {
    pub trust: f64,
    pub scar: f64,
    pub rumor: f64,
    pub mode: Mode,
    pub balance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Customer {
    pub params: CustomerParams,
    pub state: CustomerState,
}

/// Per-customer habitual merchants with weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ExposureMap {
    lists: Vec<Vec<(usize, f64)>>,
}

impl ExposureMap {
    pub fn new(lists: Vec<Vec<(usize, f64)>>) -> Self {
        Self { lists }
    }

    pub fn of(&self, customer: usize) -> &[(usize, f64)] {
        &self.lists[customer]
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Merchant {
    pub params: MerchantParams,
    pub state: MerchantState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub customers: Vec<Customer>,
    pub merchants: Vec<Merchant>,
    pub exposure: ExposureMap,
}

impl Population {
    pub fn total_balance(&self) -> f64 {
        self.customers.iter().map(|c| c.state.balance).sum()
    }
}

/// Draws every customer's parameters (uniform over the configured ranges),
/// then every merchant's, then exposure subsets, all from `rng` in that order.
///
/// The adopter flag always consumes a draw so that changing `adoption_prob`
/// leaves every other sampled value unchanged.
pub fn sample_population<R: Rng>(
    spec: &PopulationSpec,
    merchant_spec: &MerchantSpec,
    adoption_prob: f64,
    rng: &mut R,
) -> Population {
    let r = &spec.ranges;
    let customers = (0..spec.customers)
        .map(|_| {
            let lambda = r.lambda.sample(rng);
            let theta_upper = r.theta_upper.sample(rng);
            let theta_lower = theta_upper - r.theta_gap.sample(rng);
            let params = CustomerParams {
                lambda,
                theta_upper,
                theta_lower,
                rho_trust: r.rho_trust.sample(rng),
                rho_scar: r.rho_scar.sample(rng),
                rho_rumor: r.rho_rumor.sample(rng),
                gamma_scar: r.gamma_scar.sample(rng),
                kappa_scar: r.kappa_scar.sample(rng),
                alpha_rumor: r.alpha_rumor.sample(rng),
                alpha_scar: r.alpha_scar.sample(rng),
                alpha_trust: r.alpha_trust.sample(rng),
                omega: r.omega.sample(rng),
                theta_scar_withdraw: r.theta_scar_withdraw.sample(rng),
                theta_rumor_withdraw: r.theta_rumor_withdraw.sample(rng),
                substitution_adopter: false,
            };
            let balance = r.initial_balance.sample(rng);
            let adopter_draw: f64 = rng.gen();
            Customer {
                params: CustomerParams {
                    substitution_adopter: adopter_draw < adoption_prob,
                    ..params
                },
                state: CustomerState {
                    trust: spec.initial_trust,
                    scar: 0.0,
                    rumor: 0.0,
                    mode: Mode::Ok,
                    balance,
                },
            }
        })
        .collect();

    let merchants = (0..spec.merchants)
        .map(|_| {
            let params = merchant_spec.sample_params(rng);
            let state = MerchantState::new(params.window_len);
            Merchant { params, state }
        })
        .collect();

    let per = spec.merchants_per_customer.min(spec.merchants);
    let weights: Vec<f64> = match &spec.exposure_weights {
        Some(w) => {
            let total: f64 = w.iter().sum();
            w.iter().map(|x| x / total).collect()
        }
        None => vec![1.0 / per as f64; per],
    };
    let lists = (0..spec.customers)
        .map(|_| {
            index::sample(rng, spec.merchants, per)
                .into_iter()
                .zip(weights.iter().copied())
                .collect()
        })
        .collect();

    Population {
        customers,
        merchants,
        exposure: ExposureMap::new(lists),
    }
}

/// Merchant chosen with probability proportional to weight, given one
/// uniform draw `u` in `[0, 1)`.
pub fn select_merchant_with(exposure: &[(usize, f64)], u: f64) -> usize {
    let total: f64 = exposure.iter().map(|(_, w)| w).sum();
    let target = u * total;
    let mut cum = 0.0;
    for &(m, w) in exposure {
        cum += w;
        if target < cum {
            return m;
        }
    }
    exposure
        .iter()
        .rev()
        .find(|(_, w)| *w > 0.0)
        .map(|(m, _)| *m)
        .expect("exposure list with no positive weight")
}

pub fn select_merchant<R: Rng>(exposure: &[(usize, f64)], rng: &mut R) -> usize {
    select_merchant_with(exposure, rng.gen())
}
