//! Step-by-step property checks over a full run.

use crate::agents::Mode;
use crate::config::{Config, ConfigError};
use crate::engine::{RunOutput, Simulation};
use crate::liquidity::is_eligible;

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    /// First violation found, if any.
    pub detail: Option<String>,
}

#[derive(Clone, Debug)]
pub struct AuditReport {
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
    pub output: RunOutput,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PropertyResult> {
        self.properties.iter().filter(|p| !p.passed)
    }
}

pub const PROPERTIES: [&str; 9] = [
    "state_ranges",
    "balances_non_increasing",
    "mode_fractions_sum_to_one",
    "withdrawal_requires_eligibility",
    "dwell_timer_bounds",
    "cumulative_outflow_monotone",
    "outflow_conservation",
    "broadcast_lag",
    "no_outage_no_withdrawals",
];

struct Tracker {
    failures: Vec<Option<String>>,
}

impl Tracker {
    fn check(&mut self, idx: usize, ok: bool, detail: impl FnOnce() -> String) {
        if !ok && self.failures[idx].is_none() {
            self.failures[idx] = Some(detail());
        }
    }
}

/// Relative tolerance for the outflow conservation check.
pub const CONSERVATION_TOL: f64 = 1e-9;

/// Runs `config` for `seed`, checking every property after every step.
pub fn audit_run(config: &Config, seed: u64) -> Result<AuditReport, ConfigError> {
    let mut sim = Simulation::new(config, seed)?;
    let mut tr = Tracker {
        failures: vec![None; PROPERTIES.len()],
    };
    let outage = sim.timeline().phases().is_some();
    let initial = sim.initial_total_balance();
    let mut balances: Vec<f64> = sim.customers().iter().map(|c| c.state.balance).collect();
    let mut frames = Vec::new();
    let mut events = Vec::new();
    let mut cumulative = 0.0;

    while !sim.is_finished() {
        let rec = sim.step();
        let t = rec.frame.t;
        for (i, c) in sim.customers().iter().enumerate() {
            let s = &c.state;
            tr.check(
                0,
                [s.trust, s.scar, s.rumor]
                    .iter()
                    .all(|v| (0.0..=1.0).contains(v)),
                || {
                    format!(
                        "t={t} customer {i}: T={} C={} R={}",
                        s.trust, s.scar, s.rumor
                    )
                },
            );
            tr.check(1, s.balance <= balances[i] && s.balance >= 0.0, || {
                format!(
                    "t={t} customer {i}: balance {} -> {}",
                    balances[i], s.balance
                )
            });
            balances[i] = s.balance;
        }
        let f = &rec.frame;
        let sum = f.frac_ok + f.frac_frustrated + f.frac_avoiding;
        tr.check(2, (sum - 1.0).abs() <= 1e-9, || {
            format!("t={t}: mode fractions sum to {sum}")
        });
        for e in &rec.events {
            let c = &sim.customers()[e.customer];
            tr.check(
                3,
                is_eligible(&c.state, &c.params) && c.state.mode == Mode::Avoiding,
                || format!("t={t}: customer {} withdrew while ineligible", e.customer),
            );
        }
        for (m, merchant) in sim.merchants().iter().enumerate() {
            let st = &merchant.state;
            tr.check(
                4,
                st.dwell_timer >= 0.0
                    && st.dwell_timer <= merchant.params.dwell_init
                    && st.broadcast >= st.operational,
                || {
                    format!(
                        "t={t} merchant {m}: timer {} broadcast {:?} operational {:?}",
                        st.dwell_timer, st.broadcast, st.operational
                    )
                },
            );
        }
        tr.check(5, f.cumulative_outflow >= cumulative, || {
            format!("t={t}: cumulative outflow fell to {}", f.cumulative_outflow)
        });
        cumulative = f.cumulative_outflow;
        frames.push(rec.frame);
        events.extend(rec.events);
    }

    let final_total: f64 = sim.customers().iter().map(|c| c.state.balance).sum();
    let withdrawn: f64 = frames.iter().map(|f| f.outflow).sum();
    let gap = (withdrawn - (initial - final_total)).abs();
    tr.check(
        6,
        gap <= CONSERVATION_TOL * initial.max(f64::MIN_POSITIVE),
        || {
            format!(
                "sum of outflows {withdrawn} vs balance change {}",
                initial - final_total
            )
        },
    );

    let summary = sim.summarize(&frames, events.len());
    if let (Some(op), Some(bc)) = (
        summary.mean_operational_clearance,
        summary.mean_broadcast_clearance,
    ) {
        tr.check(7, bc >= op, || {
            format!("mean broadcast clearance {bc} before operational {op}")
        });
    }
    if !outage {
        tr.check(8, events.is_empty(), || {
            format!("{} withdrawals without a declared outage", events.len())
        });
    }

    let properties = PROPERTIES
        .iter()
        .zip(tr.failures)
        .map(|(&name, detail)| PropertyResult {
            name,
            passed: detail.is_none(),
            detail,
        })
        .collect();
    Ok(AuditReport {
        seed,
        properties,
        output: crate::engine::RunOutput {
            frames,
            events,
            summary,
        },
    })
}
