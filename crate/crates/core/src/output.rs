//! CSV and JSON writers. Column order is fixed and floats use Rust's
//! shortest round-trip rendering, so identical runs give identical bytes.

use std::io::Write;

use crate::agents::Customer;
use crate::engine::{BatchOutput, MetricsFrame, PairedOutput, RunSummary};
use crate::liquidity::WithdrawalEvent;
use crate::network::SocialGraph;
use crate::scenario::ScenarioTimeline;
use crate::Error;

pub const METRICS_HEADER: [&str; 17] = [
    "t",
    "p_success",
    "demand",
    "frac_ok",
    "frac_frustrated",
    "frac_avoiding",
    "mean_trust",
    "mean_scar",
    "mean_rumor",
    "mean_broadcast_severity",
    "attempts",
    "successes",
    "failures",
    "unknowns",
    "substitution_rate",
    "outflow",
    "cumulative_outflow",
];

pub const MERCHANTS_HEADER: [&str; 8] = [
    "t",
    "mean_broadcast_severity",
    "broadcast_accepting",
    "broadcast_degraded",
    "broadcast_fallback",
    "operational_accepting",
    "operational_degraded",
    "operational_fallback",
];

pub const BATCH_HEADER: [&str; 8] = [
    "seed",
    "peak_avoidance",
    "peak_avoidance_step",
    "peak_outflow",
    "peak_outflow_step",
    "t_min",
    "cumulative_outflow_fraction",
    "delayed_peak",
];

pub const PAIRED_HEADER: [&str; 4] = [
    "seed",
    "peak_avoidance_delta",
    "peak_outflow_delta",
    "cumulative_outflow_delta",
];

fn row<W: Write>(w: &mut csv::Writer<W>, fields: &[String]) -> Result<(), Error> {
    w.write_record(fields)?;
    Ok(())
}

macro_rules! fields {
    ($($x:expr),* $(,)?) => { [$($x.to_string()),*] };
}

pub fn write_metrics<W: Write>(out: W, frames: &[MetricsFrame]) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for f in frames {
        row(
            &mut w,
            &fields![
                f.t,
                f.p_success,
                f.demand,
                f.frac_ok,
                f.frac_frustrated,
                f.frac_avoiding,
                f.mean_trust,
                f.mean_scar,
                f.mean_rumor,
                f.mean_broadcast_severity,
                f.attempts,
                f.successes,
                f.failures,
                f.unknowns,
                f.substitution_rate,
                f.outflow,
                f.cumulative_outflow,
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_merchants<W: Write>(out: W, frames: &[MetricsFrame]) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MERCHANTS_HEADER)?;
    for f in frames {
        let b = f.broadcast_counts;
        let o = f.operational_counts;
        row(
            &mut w,
            &fields![
                f.t,
                f.mean_broadcast_severity,
                b[0],
                b[1],
                b[2],
                o[0],
                o[1],
                o[2]
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events<W: Write>(out: W, events: &[WithdrawalEvent]) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "customer_id", "amount", "balance_after"])?;
    for e in events {
        row(
            &mut w,
            &fields![e.step, e.customer, e.amount, e.balance_after],
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timeline<W: Write>(out: W, timeline: &ScenarioTimeline) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "p_success", "p_failure", "p_unknown", "demand"])?;
    for (t, (p, d)) in timeline
        .all_probs()
        .iter()
        .zip(timeline.all_demand())
        .enumerate()
    {
        row(&mut w, &fields![t, p.success, p.failure, p.unknown, d])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_edges<W: Write>(out: W, graph: &SocialGraph) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node_a", "node_b"])?;
    for (a, b) in graph.edges() {
        row(&mut w, &fields![a, b])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_population<W: Write>(out: W, customers: &[Customer]) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "customer_id",
        "lambda",
        "theta1",
        "theta2",
        "omega",
        "theta_C_w",
        "theta_R_w",
        "adopter",
    ])?;
    for (i, c) in customers.iter().enumerate() {
        let p = &c.params;
        row(
            &mut w,
            &fields![
                i,
                p.lambda,
                p.theta_upper,
                p.theta_lower,
                p.omega,
                p.theta_scar_withdraw,
                p.theta_rumor_withdraw,
                p.substitution_adopter,
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}

fn batch_row(s: &RunSummary) -> [String; 8] {
    fields![
        s.seed,
        s.peak_avoidance,
        s.peak_avoidance_step,
        s.peak_outflow,
        s.peak_outflow_step,
        s.t_min,
        s.cumulative_outflow_fraction,
        s.delayed_peak,
    ]
}

pub fn write_batch<W: Write>(out: W, batch: &BatchOutput) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BATCH_HEADER)?;
    for s in &batch.summaries {
        row(&mut w, &batch_row(s))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_paired<W: Write>(out: W, paired: &PairedOutput) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PAIRED_HEADER)?;
    for d in &paired.deltas {
        row(
            &mut w,
            &fields![
                d.seed,
                d.peak_avoidance_delta,
                d.peak_outflow_delta,
                d.cumulative_outflow_delta
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON followed by a newline.
pub fn write_json<W: Write, T: serde::Serialize>(mut out: W, value: &T) -> Result<(), Error> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}
