//! Usage simulator comparing a precomposed portal with an individual-services portal.
//!
//! Each month every user has a number of tasks, each needing one resource from
//! every member service of the composite. On the precomposed portal a task is
//! one composite request that calls all member functions. On the individual
//! portal the same user attempts the same task by hand and reaches each member
//! service only with the discovery probability.
//!
//! Draws come from a counter-based generator so a report can be reproduced in
//! any language from the config alone:
//!
//! ```text
//! splitmix(z) = z += 0x9E3779B97F4A7C15
//!               z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!               z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!               z ^ (z >> 31)                        (all wrapping u64)
//! mix(seed, user, month, k) = splitmix(splitmix(splitmix(splitmix(seed) ^ user) ^ month) ^ k)
//! uniform(...) = (mix(...) >> 11) * 2^-53
//! ```
//!
//! `user` and `month` are 0-based. The task rate for month `m` is
//! `rate * (1 + growth)^m`, computed by repeated multiplication. A user has
//! `floor(rate_m)` tasks plus one more when `uniform(seed, user, m, 0) < frac(rate_m)`.
//! Task `i` reaches member `j` on the individual portal when
//! `uniform(seed, user, m, 1 + i * members + j) < p`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeShape {
    #[serde(default = "default_members")]
    pub members: u32,
    #[serde(default = "default_functions")]
    pub functions_per_service: u32,
}

impl Default for CompositeShape {
    fn default() -> Self {
        CompositeShape { members: default_members(), functions_per_service: default_functions() }
    }
}

fn default_members() -> u32 {
    5
}
fn default_functions() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub users: u32,
    pub months: u32,
    pub composite: CompositeShape,
    /// Mean tasks per user in the first month.
    pub request_rate: f64,
    pub discovery_probability: f64,
    /// Relative monthly increase of the task rate.
    pub growth: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            users: 250,
            months: 12,
            composite: CompositeShape::default(),
            request_rate: 4.0,
            discovery_probability: 0.7,
            growth: 0.05,
            seed: 42,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::InvalidConfig(_) => "INVALID_CONFIG",
            SimError::Io(_) => "IO",
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.users == 0 || self.months == 0 {
            return bad("users and months must be positive");
        }
        if self.composite.members == 0 || self.composite.functions_per_service == 0 {
            return bad("composite members and functions per service must be positive");
        }
        if !(self.request_rate.is_finite() && self.request_rate >= 0.0) {
            return bad("request_rate must be a finite non-negative number");
        }
        if !(0.0..=1.0).contains(&self.discovery_probability) {
            return bad("discovery_probability must lie in [0, 1]");
        }
        if !(self.growth.is_finite() && self.growth >= 0.0) {
            return bad("growth must be a finite non-negative number");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthStats {
    /// 1-based month number.
    pub month: u32,
    pub composite_requests: u64,
    pub composite_downloads: u64,
    pub individual_downloads: u64,
    pub composite_calls: u64,
    pub individual_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub months: Vec<MonthStats>,
}

pub fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix(seed: u64, user: u64, month: u64, k: u64) -> u64 {
    splitmix(splitmix(splitmix(splitmix(seed) ^ user) ^ month) ^ k)
}

pub fn uniform(seed: u64, user: u64, month: u64, k: u64) -> f64 {
    (mix(seed, user, month, k) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn run_sim(cfg: &SimConfig) -> Result<SimReport, SimError> {
    cfg.validate()?;
    let members = u64::from(cfg.composite.members);
    let fps = u64::from(cfg.composite.functions_per_service);
    let mut rate = cfg.request_rate;
    let mut months = Vec::with_capacity(cfg.months as usize);
    for m in 0..u64::from(cfg.months) {
        let (whole, frac) = (rate.floor(), rate - rate.floor());
        let mut requests = 0u64;
        let mut reached = 0u64;
        for u in 0..u64::from(cfg.users) {
            let tasks = whole as u64 + u64::from(uniform(cfg.seed, u, m, 0) < frac);
            requests += tasks;
            for i in 0..tasks {
                for j in 0..members {
                    if uniform(cfg.seed, u, m, 1 + i * members + j) < cfg.discovery_probability {
                        reached += 1;
                    }
                }
            }
        }
        months.push(MonthStats {
            month: m as u32 + 1,
            composite_requests: requests,
            composite_downloads: requests * members,
            individual_downloads: reached,
            composite_calls: requests * members * fps,
            individual_calls: reached * fps,
        });
        rate *= 1.0 + cfg.growth;
    }
    Ok(SimReport { config: cfg.clone(), months })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format {other:?} (expected csv or json)")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

pub const CSV_HEADER: &str = "month,composite_downloads,individual_downloads,composite_calls,individual_calls";

pub fn render_report(report: &SimReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in &report.months {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.month, r.composite_downloads, r.individual_downloads, r.composite_calls, r.individual_calls
                ));
            }
            out
        }
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

pub fn emit_report(report: &SimReport, path: &Path, format: ReportFormat) -> Result<(), SimError> {
    std::fs::write(path, render_report(report, format))?;
    Ok(())
}
