//! Run configuration: a strict TOML schema with load-time validation.
//!
//! Every section is optional and falls back to the baseline defaults. Unknown
//! keys are rejected. Validation errors name the dotted key and, when loaded
//! from a file, the line it was found on.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{PopulationSpec, Range, TYPICAL_RANGES};
use crate::behavior::BehaviorSpec;
use crate::liquidity::SubstitutionSpec;
use crate::merchants::MerchantSpec;
use crate::scenario::{build_piecewise_scenario, ScenarioSpec, ScenarioTimeline};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSpec {
    pub mean_degree: usize,
    pub rewire_prob: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            mean_degree: 8,
            rewire_prob: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    /// Must equal the total phase duration when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub seed: u64,
    /// Seed count for batch and paired runs (seeds `1..=seeds`).
    pub seeds: usize,
    pub out: String,
    pub parallel: usize,
    pub events: bool,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            horizon: None,
            seed: 1,
            seeds: 12,
            out: "out".into(),
            parallel: 1,
            events: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "ScenarioSpec::baseline")]
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub population: PopulationSpec,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub behavior: BehaviorSpec,
    #[serde(default)]
    pub merchants: MerchantSpec,
    #[serde(default)]
    pub substitution: SubstitutionSpec,
    #[serde(default)]
    pub run: RunSpec,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            scenario: ScenarioSpec::baseline(),
            population: PopulationSpec::default(),
            network: NetworkSpec::default(),
            behavior: BehaviorSpec::default(),
            merchants: MerchantSpec::default(),
            substitution: SubstitutionSpec::default(),
            run: RunSpec::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
    pub line: Option<usize>,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
            line: None,
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {}: {}: {}", line, self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

/// Keys a paired comparison may vary.
pub const POLICY_PREFIXES: &[&str] = &["substitution.", "merchants.comm_quality"];

pub fn is_policy_key(key: &str) -> bool {
    POLICY_PREFIXES
        .iter()
        .any(|p| key.starts_with(p) || key == p.trim_end_matches('.'))
}

/// A configuration that passed validation, with its built timeline.
#[derive(Clone, Debug)]
pub struct Validated {
    pub timeline: ScenarioTimeline,
    pub warnings: Vec<String>,
}

impl Config {
    pub fn baseline() -> Self {
        Self::default()
    }

    /// Baseline with a constant `p_success = 0.99` scenario.
    pub fn no_outage() -> Self {
        Self {
            scenario: ScenarioSpec::steady(300, 0.99),
            ..Self::default()
        }
    }

    pub fn from_toml_str(source: &str) -> Result<Self, ConfigError> {
        let value: toml::Table = toml::from_str(source).map_err(|e| toml_error(&e, source))?;
        Self::from_table(value, Some(source))
    }

    /// Parses `source`, applies `KEY=VALUE` overrides, and validates.
    pub fn from_toml_with_overrides(
        source: &str,
        overrides: &[(String, String)],
    ) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(source).map_err(|e| toml_error(&e, source))?;
        for (key, value) in overrides {
            set_path(&mut table, key, value)?;
        }
        if overrides.is_empty() {
            Self::from_table(table, Some(source))
        } else {
            Self::from_table(table, None)
        }
    }

    fn from_table(table: toml::Table, source: Option<&str>) -> Result<Self, ConfigError> {
        let config: Config = table.try_into().map_err(|e: toml::de::Error| {
            let message = e.message().to_string();
            let line = source.and_then(|src| locate_field(src, &message));
            ConfigError {
                line,
                ..ConfigError::new("config", message)
            }
        })?;
        if let Err(mut e) = config.validate() {
            if let Some(src) = source {
                e.line = locate(src, &e.key);
            }
            return Err(e);
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Copy with every policy field reset, for paired comparisons.
    pub fn without_policy(&self) -> Self {
        let mut c = self.clone();
        c.substitution = SubstitutionSpec::default();
        c.merchants.comm_quality = MerchantSpec::default().comm_quality;
        c.run = RunSpec::default();
        c
    }

    pub fn validate(&self) -> Result<Validated, ConfigError> {
        let mut warnings = Vec::new();

        let timeline = build_piecewise_scenario(&self.scenario)
            .map_err(|e| ConfigError::new("scenario.phases", e.to_string()))?;
        if let Some(h) = self.run.horizon {
            if h != timeline.horizon() {
                return Err(ConfigError::new(
                    "run.horizon",
                    format!(
                        "{} does not match total phase duration {}",
                        h,
                        timeline.horizon()
                    ),
                ));
            }
        }
        for (i, w) in self.scenario.demand_windows.iter().enumerate() {
            if w.multiplier > 2.0 {
                warnings.push(format!(
                    "scenario.demand_windows[{i}].multiplier {} above typical range 1-2",
                    w.multiplier
                ));
            }
        }

        let p = &self.population;
        if p.customers == 0 {
            return Err(ConfigError::new("population.customers", "must be positive"));
        }
        if p.merchants == 0 {
            return Err(ConfigError::new("population.merchants", "must be positive"));
        }
        if p.merchants_per_customer == 0 || p.merchants_per_customer > p.merchants {
            return Err(ConfigError::new(
                "population.merchants_per_customer",
                "must lie in 1..=merchants",
            ));
        }
        if let Some(w) = &p.exposure_weights {
            if w.len() != p.merchants_per_customer || w.iter().any(|x| !(x.is_finite() && *x > 0.0))
            {
                return Err(ConfigError::new(
                    "population.exposure_weights",
                    "needs one positive weight per habitual merchant",
                ));
            }
        }
        unit("population.initial_trust", p.initial_trust)?;
        if !(1_000..=10_000).contains(&p.customers) {
            warnings.push(format!(
                "population.customers {} outside typical range 1e3-1e4",
                p.customers
            ));
        }
        if !(100..=1_000).contains(&p.merchants) {
            warnings.push(format!(
                "population.merchants {} outside typical range 1e2-1e3",
                p.merchants
            ));
        }

        let r = &p.ranges;
        for (name, range) in r.named() {
            if !(range.lo.is_finite() && range.hi.is_finite() && range.lo <= range.hi) {
                return Err(ConfigError::new(
                    format!("population.ranges.{name}"),
                    format!(
                        "expected [lo, hi] with lo <= hi, got [{}, {}]",
                        range.lo, range.hi
                    ),
                ));
            }
        }
        let key = |name: &str| format!("population.ranges.{name}");
        open_unit(&key("lambda"), r.lambda, true)?;
        for name in ["rho_trust", "rho_scar", "rho_rumor"] {
            let range = r.named().into_iter().find(|(n, _)| *n == name).unwrap().1;
            open_unit(&key(name), range, false)?;
        }
        open_unit(&key("omega"), r.omega, false)?;
        positive(&key("kappa_scar"), r.kappa_scar.lo)?;
        positive(&key("alpha_rumor"), r.alpha_rumor.lo)?;
        positive(&key("alpha_scar"), r.alpha_scar.lo)?;
        positive(&key("alpha_trust"), r.alpha_trust.lo)?;
        positive(&key("gamma_scar"), r.gamma_scar.lo)?;
        positive(&key("theta_gap"), r.theta_gap.lo)?;
        unit_range(&key("theta_upper"), r.theta_upper)?;
        unit_range(&key("theta_scar_withdraw"), r.theta_scar_withdraw)?;
        unit_range(&key("theta_rumor_withdraw"), r.theta_rumor_withdraw)?;
        if r.theta_upper.lo - r.theta_gap.hi < 0.0 {
            return Err(ConfigError::new(
                key("theta_gap"),
                "upper gap exceeds the smallest upper trust threshold; lower threshold would be negative",
            ));
        }
        if r.initial_balance.lo < 0.0 {
            return Err(ConfigError::new(
                key("initial_balance"),
                "balances must be non-negative",
            ));
        }
        for (name, typical) in TYPICAL_RANGES {
            let range = r.named().into_iter().find(|(n, _)| n == name).unwrap().1;
            if !range.within(typical) {
                warnings.push(format!(
                    "{} [{}, {}] outside typical range [{}, {}]",
                    key(name),
                    range.lo,
                    range.hi,
                    typical.lo,
                    typical.hi
                ));
            }
        }

        let n = &self.network;
        if n.mean_degree < 2 || !n.mean_degree.is_multiple_of(2) {
            return Err(ConfigError::new(
                "network.mean_degree",
                "must be even and at least 2",
            ));
        }
        if n.mean_degree >= p.customers {
            return Err(ConfigError::new(
                "network.mean_degree",
                "must be below population.customers",
            ));
        }
        unit("network.rewire_prob", n.rewire_prob)?;
        if !(6..=12).contains(&n.mean_degree) {
            warnings.push(format!(
                "network.mean_degree {} outside typical range 6-12",
                n.mean_degree
            ));
        }
        if !(0.05..=0.2).contains(&n.rewire_prob) {
            warnings.push(format!(
                "network.rewire_prob {} outside typical range 0.05-0.2",
                n.rewire_prob
            ));
        }

        let b = &self.behavior;
        for (name, phi) in [
            ("phi_ok", b.phi_ok),
            ("phi_frustrated", b.phi_frustrated),
            ("phi_avoiding", b.phi_avoiding),
        ] {
            if !(phi > 0.0 && phi <= 1.0) {
                return Err(ConfigError::new(
                    format!("behavior.{name}"),
                    "must lie in (0, 1]",
                ));
            }
        }
        if !(b.phi_ok >= b.phi_frustrated && b.phi_frustrated >= b.phi_avoiding) {
            return Err(ConfigError::new(
                "behavior.phi_avoiding",
                "activity factors must not increase with avoidance",
            ));
        }
        if b.w_merchant < 0.0 || b.w_social < 0.0 || (b.w_merchant + b.w_social - 1.0).abs() > 1e-9
        {
            return Err(ConfigError::new(
                "behavior.w_social",
                format!(
                    "w_merchant + w_social must equal 1 with non-negative weights, got {} + {}",
                    b.w_merchant, b.w_social
                ),
            ));
        }
        nonneg("behavior.w_feedback", b.w_feedback)?;
        positive("behavior.feedback_ref", b.feedback_ref)?;
        positive("behavior.alpha_failure", b.alpha_failure)?;
        if b.alpha_unknown < b.alpha_failure {
            return Err(ConfigError::new(
                "behavior.alpha_unknown",
                "must be at least alpha_failure",
            ));
        }
        nonneg("behavior.beta_trust", b.beta_trust)?;
        if !(0.5..=1.0).contains(&b.alpha_failure) {
            warnings.push(format!(
                "behavior.alpha_failure {} outside typical range 0.5-1.0",
                b.alpha_failure
            ));
        }
        if !(0.8..=1.2).contains(&b.alpha_unknown) {
            warnings.push(format!(
                "behavior.alpha_unknown {} outside typical range 0.8-1.2",
                b.alpha_unknown
            ));
        }

        let m = &self.merchants;
        if m.window_len == 0 {
            return Err(ConfigError::new(
                "merchants.window_len",
                "must be at least 1",
            ));
        }
        for (name, range) in [
            ("theta_degraded", m.theta_degraded),
            ("theta_fallback", m.theta_fallback),
            ("dwell", m.dwell),
        ] {
            if !(range.lo.is_finite() && range.hi.is_finite() && range.lo <= range.hi) {
                return Err(ConfigError::new(
                    format!("merchants.{name}"),
                    "expected [lo, hi] with lo <= hi",
                ));
            }
        }
        positive("merchants.theta_degraded", m.theta_degraded.lo)?;
        if m.theta_fallback.lo <= m.theta_degraded.hi {
            return Err(ConfigError::new(
                "merchants.theta_fallback",
                "lower bound must exceed the upper bound of theta_degraded",
            ));
        }
        if !(m.eta > 0.0 && m.eta < 1.0) {
            return Err(ConfigError::new("merchants.eta", "must lie in (0, 1)"));
        }
        positive("merchants.epsilon", m.epsilon)?;
        nonneg("merchants.dwell", m.dwell.lo)?;
        if !(m.comm_quality.is_finite() && m.comm_quality >= 1.0) {
            return Err(ConfigError::new(
                "merchants.comm_quality",
                "must be at least 1",
            ));
        }
        if !m.dwell.within(&Range::new(5.0, 20.0)) {
            warnings.push(format!(
                "merchants.dwell [{}, {}] outside typical range 5-20 steps",
                m.dwell.lo, m.dwell.hi
            ));
        }

        let s = &self.substitution;
        unit("substitution.adoption_prob", s.adoption_prob)?;
        unit(
            "substitution.transfer_success_prob",
            s.transfer_success_prob,
        )?;

        if self.run.parallel == 0 {
            return Err(ConfigError::new("run.parallel", "must be at least 1"));
        }
        if self.run.seeds == 0 {
            return Err(ConfigError::new("run.seeds", "must be at least 1"));
        }

        Ok(Validated { timeline, warnings })
    }
}

fn unit(key: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("{v} outside [0, 1]")))
    }
}

fn unit_range(key: &str, r: Range) -> Result<(), ConfigError> {
    if r.lo >= 0.0 && r.hi <= 1.0 {
        Ok(())
    } else {
        Err(ConfigError::new(key, "bounds must lie in [0, 1]"))
    }
}

/// `(0, 1)`, or `(0, 1]` when `closed_top`.
fn open_unit(key: &str, r: Range, closed_top: bool) -> Result<(), ConfigError> {
    let top_ok = if closed_top { r.hi <= 1.0 } else { r.hi < 1.0 };
    if r.lo > 0.0 && top_ok {
        Ok(())
    } else {
        let top = if closed_top { "]" } else { ")" };
        Err(ConfigError::new(
            key,
            format!("bounds must lie in (0, 1{top}"),
        ))
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(key, "lower bound must be positive"))
    }
}

fn nonneg(key: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(key, "must be non-negative"))
    }
}

fn toml_error(e: &toml::de::Error, source: &str) -> ConfigError {
    let line = e.span().map(|span| {
        source[..span.start.min(source.len())]
            .lines()
            .count()
            .max(1)
    });
    ConfigError {
        key: "config".into(),
        message: e.message().to_string(),
        line,
    }
}

/// Line of the first key quoted in a serde message such as "unknown field `x`".
fn locate_field(source: &str, message: &str) -> Option<usize> {
    let name = message.split('`').nth(1)?;
    source
        .lines()
        .position(|raw| {
            let line = raw.trim();
            let key_line = line
                .strip_prefix(name)
                .is_some_and(|rest| rest.trim_start().starts_with('='));
            let header = line.starts_with('[')
                && line
                    .trim_matches(|c| c == '[' || c == ']')
                    .rsplit('.')
                    .next()
                    .is_some_and(|last| last.trim() == name);
            key_line || header
        })
        .map(|i| i + 1)
}

/// One-based line of `key` (`a.b.leaf`) inside its `[a.b]` table, if present.
fn locate(source: &str, key: &str) -> Option<usize> {
    let (section, leaf) = match key.rsplit_once('.') {
        Some((s, l)) => (s, l),
        None => ("", key),
    };
    let mut current = String::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix('[') {
            current = header
                .trim_matches(|c| c == '[' || c == ']')
                .trim()
                .to_string();
            if current == key {
                return Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some(rest) = line.strip_prefix(leaf) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

/// Sets `key` (dotted) to `value`, parsed as a TOML value or else taken as a string.
pub fn set_path(table: &mut toml::Table, key: &str, value: &str) -> Result<(), ConfigError> {
    let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let mut parts = key.split('.').peekable();
    let mut node = table;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err(ConfigError::new(key, "empty key segment"));
        }
        if parts.peek().is_none() {
            node.insert(part.to_string(), parsed);
            return Ok(());
        }
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::new(key, format!("`{part}` is not a table")))?;
    }
    Err(ConfigError::new(key, "empty key"))
}

/// Parses `KEY=VALUE`.
pub fn parse_assignment(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ConfigError::new(s, "expected KEY=VALUE"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}
