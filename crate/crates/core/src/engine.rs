//! The step loop.
//!
//! Each step: set infrastructure probabilities; every customer draws an
//! attempt, a merchant and an outcome; merchants fold the step's card outcomes
//! into their windows and update operational and broadcast state; every
//! customer then updates scar, trust, rumor and mode and may withdraw; finally
//! metrics are recorded.
//!
//! Neighbour modes seen during the customer update are those from the end of
//! the previous step, whatever order customers are processed in, so the
//! customer phases can be split across threads without changing results.

use rand::Rng;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::Serialize;

use crate::agents::{
    sample_population, select_merchant_with, Customer, ExposureMap, Merchant, Mode,
};
use crate::behavior::{
    attempt_probability, composite_perception, encode_experience, transition_mode, update_rumor,
    update_scar, update_trust, BroadcastTiming, OutcomeKind, PaymentOutcome,
};
use crate::config::{Config, ConfigError};
use crate::liquidity::{
    apply_withdrawal, is_eligible, try_substitution, withdrawal_probability, WithdrawalEvent,
};
use crate::merchants::{broadcast_severity, Label, StepCounts};
use crate::network::{avoiding_fraction, generate_watts_strogatz, SocialGraph};
use crate::rng::{self, CustomerStreams, RngStreams};
use crate::scenario::ScenarioTimeline;
use crate::Error;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsFrame {
    pub t: usize,
    pub p_success: f64,
    pub demand: f64,
    pub frac_ok: f64,
    pub frac_frustrated: f64,
    pub frac_avoiding: f64,
    pub mean_trust: f64,
    pub mean_scar: f64,
    pub mean_rumor: f64,
    pub mean_broadcast_severity: f64,
    pub attempts: u64,
    pub successes: u64,
    pub failures: u64,
    pub unknowns: u64,
    /// Substituted transfers over adverse card outcomes; 0 without adverse outcomes.
    pub substitution_rate: f64,
    pub substituted: u64,
    pub outflow: f64,
    pub cumulative_outflow: f64,
    /// Merchants per broadcast label: accepting, degraded, fallback.
    pub broadcast_counts: [usize; 3],
    /// Merchants per operational label: accepting, degraded, fallback.
    pub operational_counts: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub peak_avoidance: f64,
    pub peak_avoidance_step: usize,
    pub peak_outflow: f64,
    pub peak_outflow_step: usize,
    pub t_min: usize,
    pub cumulative_outflow: f64,
    pub total_initial_balance: f64,
    pub cumulative_outflow_fraction: f64,
    pub delayed_peak: bool,
    pub withdrawal_events: usize,
    /// Merchants that left ACCEPTING at least once.
    pub merchants_with_episode: usize,
    /// Mean first step after which the operational state stayed ACCEPTING.
    pub mean_operational_clearance: Option<f64>,
    /// Mean first step after which the broadcast stayed ACCEPTING.
    pub mean_broadcast_clearance: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub frames: Vec<MetricsFrame>,
    pub events: Vec<WithdrawalEvent>,
    pub summary: RunSummary,
}

#[derive(Clone, Debug)]
pub struct StepRecord {
    pub frame: MetricsFrame,
    pub events: Vec<WithdrawalEvent>,
}

#[derive(Clone, Copy, Debug)]
struct Attempt {
    merchant: Option<usize>,
    card: PaymentOutcome,
    experienced: PaymentOutcome,
}

pub struct Simulation {
    config: Config,
    seed: u64,
    timeline: ScenarioTimeline,
    graph: SocialGraph,
    customers: Vec<Customer>,
    streams: Vec<CustomerStreams>,
    merchants: Vec<Merchant>,
    exposure: ExposureMap,
    t: usize,
    last_outflow: f64,
    cumulative: f64,
    initial_total: f64,
    last_operational_alarm: Vec<Option<usize>>,
    last_broadcast_alarm: Vec<Option<usize>>,
    pool: Option<ThreadPool>,
}

fn map_par<A, B, F>(pool: Option<&ThreadPool>, items: &mut [A], f: F) -> Vec<B>
where
    A: Send,
    B: Send,
    F: Fn(usize, &mut A) -> B + Sync + Send,
{
    match pool {
        Some(pool) => pool.install(|| {
            items
                .par_iter_mut()
                .enumerate()
                .map(|(i, a)| f(i, a))
                .collect()
        }),
        None => items.iter_mut().enumerate().map(|(i, a)| f(i, a)).collect(),
    }
}

impl Simulation {
    /// Validates `config` and builds the network and population for `seed`.
    /// Uses `config.run.parallel` worker threads.
    pub fn new(config: &Config, seed: u64) -> Result<Self, ConfigError> {
        let validated = config.validate()?;
        let streams = RngStreams::new(seed);
        let graph = generate_watts_strogatz(
            config.population.customers,
            config.network.mean_degree,
            config.network.rewire_prob,
            &mut streams.stream(rng::NETWORK),
        )
        .map_err(|e| ConfigError {
            key: "network".into(),
            message: e.to_string(),
            line: None,
        })?;
        let population = sample_population(
            &config.population,
            &config.merchants,
            config.substitution.adoption_prob,
            &mut streams.stream(rng::POPULATION),
        );
        let initial_total = population.total_balance();
        let n_merchants = population.merchants.len();
        let customer_streams = (0..population.customers.len())
            .map(|i| streams.customer_streams(i))
            .collect();
        let mut sim = Self {
            config: config.clone(),
            seed,
            timeline: validated.timeline,
            graph,
            customers: population.customers,
            streams: customer_streams,
            merchants: population.merchants,
            exposure: population.exposure,
            t: 0,
            last_outflow: 0.0,
            cumulative: 0.0,
            initial_total,
            last_operational_alarm: vec![None; n_merchants],
            last_broadcast_alarm: vec![None; n_merchants],
            pool: None,
        };
        sim.set_parallelism(config.run.parallel);
        Ok(sim)
    }

    /// Worker threads for the customer phases; 1 runs inline.
    pub fn set_parallelism(&mut self, threads: usize) {
        self.pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .expect("thread pool"),
            )
        } else {
            None
        };
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn timeline(&self) -> &ScenarioTimeline {
        &self.timeline
    }

    pub fn graph(&self) -> &SocialGraph {
        &self.graph
    }

    pub fn customers(&self) -> &[Customer] {
        &self.customers
    }

    pub fn merchants(&self) -> &[Merchant] {
        &self.merchants
    }

    pub fn exposure(&self) -> &ExposureMap {
        &self.exposure
    }

    /// Steps executed so far.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_finished(&self) -> bool {
        self.t >= self.timeline.horizon()
    }

    pub fn initial_total_balance(&self) -> f64 {
        self.initial_total
    }

    pub fn step(&mut self) -> StepRecord {
        assert!(!self.is_finished(), "simulation already finished");
        let t = self.t;
        let probs = self.timeline.probs(t);
        let demand = self.timeline.demand(t);
        let behavior = &self.config.behavior;
        let substitution = &self.config.substitution;
        let exposure = &self.exposure;
        let pool = self.pool.as_ref();

        // Attempts and outcomes.
        let mut pairs: Vec<(&mut Customer, &mut CustomerStreams)> = self
            .customers
            .iter_mut()
            .zip(self.streams.iter_mut())
            .collect();
        let attempts: Vec<Attempt> = map_par(pool, &mut pairs, |i, (c, s)| {
            let u_attempt: f64 = s.attempts.gen();
            let u_merchant: f64 = s.attempts.gen();
            let u_outcome: f64 = s.outcomes.gen();
            let p = attempt_probability(c.params.lambda, c.state.mode, demand, behavior);
            if u_attempt >= p {
                return Attempt {
                    merchant: None,
                    card: PaymentOutcome::NONE,
                    experienced: PaymentOutcome::NONE,
                };
            }
            let merchant = select_merchant_with(exposure.of(i), u_merchant);
            let kind = if u_outcome < probs.success {
                OutcomeKind::Success
            } else if u_outcome < probs.success + probs.failure {
                OutcomeKind::Failure
            } else {
                OutcomeKind::Unknown
            };
            let card = PaymentOutcome::card(kind);
            let experienced = try_substitution(
                card,
                c.params.substitution_adopter,
                substitution,
                &mut s.substitution,
            );
            Attempt {
                merchant: Some(merchant),
                card,
                experienced,
            }
        });
        drop(pairs);

        // Merchants see only card outcomes.
        let mut counts = vec![StepCounts::default(); self.merchants.len()];
        let (mut n_att, mut n_succ, mut n_fail, mut n_unk, mut n_sub) =
            (0u64, 0u64, 0u64, 0u64, 0u64);
        for a in &attempts {
            let Some(m) = a.merchant else { continue };
            let c = &mut counts[m];
            c.attempts += 1;
            n_att += 1;
            match a.card.kind {
                OutcomeKind::Success => n_succ += 1,
                OutcomeKind::Failure => {
                    c.failures += 1;
                    n_fail += 1
                }
                OutcomeKind::Unknown => {
                    c.unknowns += 1;
                    n_unk += 1
                }
                OutcomeKind::None => unreachable!("attempt without outcome"),
            }
            if a.experienced.via_substitution {
                n_sub += 1;
            }
        }

        let previous_severity: Vec<f64> = self
            .merchants
            .iter()
            .map(|m| broadcast_severity(m.state.broadcast))
            .collect();
        let comm_quality = self.config.merchants.comm_quality;
        for (m, c) in self.merchants.iter_mut().zip(&counts) {
            m.state.step(*c, &m.params, comm_quality);
        }
        for (idx, m) in self.merchants.iter().enumerate() {
            if m.state.operational != Label::Accepting {
                self.last_operational_alarm[idx] = Some(t);
            }
            if m.state.broadcast != Label::Accepting {
                self.last_broadcast_alarm[idx] = Some(t);
            }
        }
        let severity: Vec<f64> = match behavior.broadcast_timing {
            BroadcastTiming::Current => self
                .merchants
                .iter()
                .map(|m| broadcast_severity(m.state.broadcast))
                .collect(),
            BroadcastTiming::Previous => previous_severity,
        };

        // Customer updates against the start-of-step mode snapshot.
        let modes: Vec<Mode> = self.customers.iter().map(|c| c.state.mode).collect();
        let feedback = if self.initial_total > 0.0 {
            (self.last_outflow / (behavior.feedback_ref * self.initial_total)).min(1.0)
        } else {
            0.0
        };
        let graph = &self.graph;
        let mut pairs: Vec<(&mut Customer, &mut CustomerStreams)> = self
            .customers
            .iter_mut()
            .zip(self.streams.iter_mut())
            .collect();
        let withdrawals: Vec<Option<WithdrawalEvent>> = map_par(pool, &mut pairs, |i, (c, s)| {
            let list = exposure.of(i);
            let broadcast_avg =
                list.iter().map(|&(m, _)| severity[m]).sum::<f64>() / list.len() as f64;
            let avoiding = avoiding_fraction(graph, i, &modes);
            let psi = composite_perception(
                broadcast_avg,
                avoiding,
                behavior.w_merchant,
                behavior.w_social,
                behavior.w_feedback,
                feedback,
            );
            let st = &mut c.state;
            let p = &c.params;
            let signal = encode_experience(
                attempts[i].experienced,
                behavior.alpha_failure,
                behavior.alpha_unknown,
                st.trust,
            );
            let scar = update_scar(st.scar, p.rho_scar, p.gamma_scar, signal);
            let trust = update_trust(st.trust, st.scar, p.rho_trust, behavior.beta_trust, signal);
            let rumor = update_rumor(st.rumor, p.rho_rumor, psi);
            st.scar = scar;
            st.trust = trust;
            st.rumor = rumor;
            st.mode = transition_mode(trust, scar, p);

            let u_withdraw: f64 = s.withdrawals.gen();
            if is_eligible(st, p) && u_withdraw < withdrawal_probability(st, p) {
                apply_withdrawal(st, p, i, t)
            } else {
                None
            }
        });
        drop(pairs);
        let events: Vec<WithdrawalEvent> = withdrawals.into_iter().flatten().collect();
        let outflow = events.iter().fold(0.0, |acc, e| acc + e.amount);
        self.cumulative += outflow;
        self.last_outflow = outflow;

        let n = self.customers.len() as f64;
        let mut mode_counts = [0usize; 3];
        let (mut st, mut sc, mut sr) = (0.0, 0.0, 0.0);
        for c in &self.customers {
            mode_counts[c.state.mode as usize] += 1;
            st += c.state.trust;
            sc += c.state.scar;
            sr += c.state.rumor;
        }
        let mut broadcast_counts = [0usize; 3];
        let mut operational_counts = [0usize; 3];
        let mut severity_sum = 0.0;
        for m in &self.merchants {
            broadcast_counts[m.state.broadcast as usize] += 1;
            operational_counts[m.state.operational as usize] += 1;
            severity_sum += broadcast_severity(m.state.broadcast);
        }
        let adverse = n_fail + n_unk;
        let frame = MetricsFrame {
            t,
            p_success: probs.success,
            demand,
            frac_ok: mode_counts[0] as f64 / n,
            frac_frustrated: mode_counts[1] as f64 / n,
            frac_avoiding: mode_counts[2] as f64 / n,
            mean_trust: st / n,
            mean_scar: sc / n,
            mean_rumor: sr / n,
            mean_broadcast_severity: severity_sum / self.merchants.len() as f64,
            attempts: n_att,
            successes: n_succ,
            failures: n_fail,
            unknowns: n_unk,
            substitution_rate: if adverse > 0 {
                n_sub as f64 / adverse as f64
            } else {
                0.0
            },
            substituted: n_sub,
            outflow,
            cumulative_outflow: self.cumulative,
            broadcast_counts,
            operational_counts,
        };
        self.t += 1;
        StepRecord { frame, events }
    }

    pub fn run_to_end(mut self) -> RunOutput {
        let mut frames = Vec::with_capacity(self.timeline.horizon());
        let mut events = Vec::new();
        while !self.is_finished() {
            let rec = self.step();
            frames.push(rec.frame);
            events.extend(rec.events);
        }
        let summary = self.summarize(&frames, events.len());
        RunOutput {
            frames,
            events,
            summary,
        }
    }

    /// Summary over `frames`, which must be this simulation's frames so far.
    pub fn summarize(&self, frames: &[MetricsFrame], withdrawal_events: usize) -> RunSummary {
        let (peak_outflow_step, peak_outflow) = earliest_max(frames.iter().map(|f| f.outflow));
        let (peak_avoidance_step, peak_avoidance) =
            earliest_max(frames.iter().map(|f| f.frac_avoiding));
        let t_min = self.timeline.nadir();
        let clear: Vec<(usize, usize)> = self
            .last_operational_alarm
            .iter()
            .zip(&self.last_broadcast_alarm)
            .filter_map(|(op, bc)| op.map(|o| (o + 1, bc.map_or(o + 1, |b| b + 1))))
            .collect();
        let mean = |xs: &mut dyn Iterator<Item = usize>| {
            let v: Vec<usize> = xs.collect();
            (!v.is_empty()).then(|| v.iter().sum::<usize>() as f64 / v.len() as f64)
        };
        RunSummary {
            seed: self.seed,
            peak_avoidance,
            peak_avoidance_step,
            peak_outflow,
            peak_outflow_step,
            t_min,
            cumulative_outflow: self.cumulative,
            total_initial_balance: self.initial_total,
            cumulative_outflow_fraction: if self.initial_total > 0.0 {
                self.cumulative / self.initial_total
            } else {
                0.0
            },
            delayed_peak: peak_outflow_step > t_min,
            withdrawal_events,
            merchants_with_episode: clear.len(),
            mean_operational_clearance: mean(&mut clear.iter().map(|c| c.0)),
            mean_broadcast_clearance: mean(&mut clear.iter().map(|c| c.1)),
        }
    }
}

/// `(index, value)` of the first maximum; `(0, 0.0)` for an empty sequence.
fn earliest_max(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    if best.1 == f64::NEG_INFINITY {
        (0, 0.0)
    } else {
        best
    }
}

/// One complete run using `config.run.parallel` threads.
pub fn run(config: &Config, seed: u64) -> Result<RunOutput, ConfigError> {
    Ok(Simulation::new(config, seed)?.run_to_end())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Distribution {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Distribution {
    /// Quartiles by linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "distribution of no values");
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Self {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    Distribution::of(values).median
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchStats {
    pub runs: usize,
    pub peak_avoidance: Distribution,
    pub peak_outflow: Distribution,
    pub cumulative_outflow_fraction: Distribution,
    pub delayed_peak_fraction: f64,
}

impl BatchStats {
    pub fn of(summaries: &[RunSummary]) -> Self {
        let col = |f: fn(&RunSummary) -> f64| summaries.iter().map(f).collect::<Vec<_>>();
        Self {
            runs: summaries.len(),
            peak_avoidance: Distribution::of(&col(|s| s.peak_avoidance)),
            peak_outflow: Distribution::of(&col(|s| s.peak_outflow)),
            cumulative_outflow_fraction: Distribution::of(&col(|s| s.cumulative_outflow_fraction)),
            delayed_peak_fraction: summaries.iter().filter(|s| s.delayed_peak).count() as f64
                / summaries.len() as f64,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BatchOutput {
    pub summaries: Vec<RunSummary>,
    pub stats: BatchStats,
}

/// Runs every seed independently. Seeds are spread over `config.run.parallel`
/// threads; each run itself is sequential.
pub fn run_batch(config: &Config, seeds: &[u64]) -> Result<BatchOutput, Error> {
    let outputs = run_many(config, seeds)?;
    let summaries: Vec<RunSummary> = outputs.into_iter().map(|o| o.summary).collect();
    let stats = BatchStats::of(&summaries);
    Ok(BatchOutput { summaries, stats })
}

/// Full outputs for every seed, in seed-list order.
pub fn run_many(config: &Config, seeds: &[u64]) -> Result<Vec<RunOutput>, Error> {
    if seeds.is_empty() {
        return Err(Error::NoSeeds);
    }
    config.validate()?;
    let mut single = config.clone();
    let threads = single.run.parallel;
    single.run.parallel = 1;
    let one = |&seed: &u64| {
        run(&single, seed).map_err(|e| Error::Run {
            seed,
            source: Box::new(e.into()),
        })
    };
    let results: Vec<Result<RunOutput, Error>> = if threads > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
            .install(|| seeds.par_iter().map(one).collect())
    } else {
        seeds.iter().map(one).collect()
    };
    results.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairedDelta {
    pub seed: u64,
    pub peak_avoidance_delta: f64,
    pub peak_outflow_delta: f64,
    pub cumulative_outflow_delta: f64,
    pub baseline: RunSummary,
    pub variant: RunSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairedOutput {
    pub deltas: Vec<PairedDelta>,
    pub median_peak_avoidance_delta: f64,
    pub median_peak_outflow_delta: f64,
    pub median_cumulative_outflow_delta: f64,
}

/// Runs `baseline` and `variant` on the same seeds; deltas are variant minus
/// baseline. The two configs may differ only in policy fields.
pub fn run_paired(
    baseline: &Config,
    variant: &Config,
    seeds: &[u64],
) -> Result<PairedOutput, Error> {
    if baseline.without_policy() != variant.without_policy() {
        return Err(Error::NotPolicy);
    }
    let base = run_many(baseline, seeds)?;
    let var = run_many(variant, seeds)?;
    let deltas: Vec<PairedDelta> = base
        .into_iter()
        .zip(var)
        .map(|(b, v)| PairedDelta {
            seed: b.summary.seed,
            peak_avoidance_delta: v.summary.peak_avoidance - b.summary.peak_avoidance,
            peak_outflow_delta: v.summary.peak_outflow - b.summary.peak_outflow,
            cumulative_outflow_delta: v.summary.cumulative_outflow - b.summary.cumulative_outflow,
            baseline: b.summary,
            variant: v.summary,
        })
        .collect();
    let col = |f: fn(&PairedDelta) -> f64| median(&deltas.iter().map(f).collect::<Vec<_>>());
    Ok(PairedOutput {
        median_peak_avoidance_delta: col(|d| d.peak_avoidance_delta),
        median_peak_outflow_delta: col(|d| d.peak_outflow_delta),
        median_cumulative_outflow_delta: col(|d| d.cumulative_outflow_delta),
        deltas,
    })
}
