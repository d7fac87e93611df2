//! Deterministic experiment runner: seeded ensembles, verification suites,
//! norm reports and parameter sweeps.
//!
//! Every trial derives its inputs from `(master seed, trial index, role)` only,
//! and results are reduced in trial order, so output bytes do not depend on
//! the execution policy.

mod report;
mod suites;
mod sweep;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dyadic::StepFunction;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::weights::{generate, generate_weight, EnsembleKind, EnsembleSpec, Weight};

pub use report::{NormReport, Ratios};
pub use sweep::{parse_range, sweep, write_sweep_csv, SweepParameter, SweepTable};

pub const MIN_DEPTH: u32 = 2;
pub const MAX_CONFIG_DEPTH: u32 = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Identities,
    Equivalences,
    ParaproductBounds,
    CommutatorBounds,
    Carleson,
    Ppott,
    Stopping,
    NecconChain,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Identities,
        Suite::Equivalences,
        Suite::ParaproductBounds,
        Suite::CommutatorBounds,
        Suite::Carleson,
        Suite::Ppott,
        Suite::Stopping,
        Suite::NecconChain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Equivalences => "equivalences",
            Suite::ParaproductBounds => "paraproduct-bounds",
            Suite::CommutatorBounds => "commutator-bounds",
            Suite::Carleson => "carleson",
            Suite::Ppott => "ppott",
            Suite::Stopping => "stopping",
            Suite::NecconChain => "neccon-chain",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Haar round trip and Parseval, relative to the input scale.
    pub haar: f64,
    /// Product decomposition, expansion and remainder identities.
    pub identity: f64,
    /// Relative error of the remainder energy identity.
    pub energy: f64,
    /// Relative error of weighted norm duality.
    pub duality: f64,
    /// Relative slack of the constant-1 lower bounds.
    pub lower_bound: f64,
    /// Relative slack of the Carleson definitional inequalities.
    pub carleson: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { haar: 1e-12, identity: 1e-11, energy: 1e-10, duality: 1e-9, lower_bound: 1e-6, carleson: 1e-10 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

fn default_mu() -> EnsembleSpec {
    EnsembleSpec::new(EnsembleKind::Cascade { delta: 0.5 }, 0, 0)
}

fn default_symbol() -> EnsembleSpec {
    EnsembleSpec::new(EnsembleKind::LogSymbol { delta: 0.5 }, 0, 0)
}

fn default_depth() -> u32 {
    6
}

fn default_trials() -> usize {
    1
}

fn all_suites() -> Vec<Suite> {
    Suite::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_depth")]
    pub depth: u32,
    #[serde(default = "default_mu")]
    pub mu: EnsembleSpec,
    #[serde(default = "default_mu")]
    pub lambda: EnsembleSpec,
    #[serde(default = "default_symbol")]
    pub symbol: EnsembleSpec,
    #[serde(default = "all_suites")]
    pub suites: Vec<Suite>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub outputs: OutputPaths,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            depth: default_depth(),
            mu: default_mu(),
            lambda: default_mu(),
            symbol: default_symbol(),
            suites: all_suites(),
            trials: default_trials(),
            seed: 0,
            tolerances: Tolerances::default(),
            outputs: OutputPaths::default(),
            execution: Execution::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::InvalidSpec(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidSpec("trials must be at least 1".into()));
        }
        if !(MIN_DEPTH..=MAX_CONFIG_DEPTH).contains(&self.depth) {
            return Err(Error::InvalidSpec(format!(
                "depth {} outside {MIN_DEPTH}..={MAX_CONFIG_DEPTH}",
                self.depth
            )));
        }
        for (role, spec) in [("mu", &self.mu), ("lambda", &self.lambda)] {
            if spec.is_symbol_kind() {
                return Err(Error::InvalidSpec(format!("{role}: a symbol ensemble cannot be a weight")));
            }
        }
        for spec in [&self.mu, &self.lambda, &self.symbol] {
            self.resolve(spec, 0).validate()?;
        }
        Ok(())
    }

    fn resolve(&self, spec: &EnsembleSpec, seed: u64) -> EnsembleSpec {
        spec.clone().with_depth(self.depth).with_seed(seed ^ spec.seed)
    }

    /// Inputs of trial `index`.
    pub fn trial(&self, index: usize) -> Result<TrialInputs> {
        let seed = trial_seed(self.seed, index);
        let seeds = Role::ALL.map(|r| role_seed(seed, r));
        let mu = generate_weight(&self.resolve(&self.mu, seeds[0]))?;
        let lambda = generate_weight(&self.resolve(&self.lambda, seeds[1]))?;
        let symbol = generate(&self.resolve(&self.symbol, seeds[2]))?.function().clone();
        Ok(TrialInputs { index, seed, role_seeds: seeds, mu, lambda, symbol })
    }
}

/// Seeded roles inside one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Mu = 0,
    Lambda = 1,
    Symbol = 2,
    /// Auxiliary test functions.
    Probe = 3,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Mu, Role::Lambda, Role::Symbol, Role::Probe];
}

/// `master ⊕ index`.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    master ^ index as u64
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer of `trial_seed + (role + 1)·γ`.
pub fn role_seed(trial_seed: u64, role: Role) -> u64 {
    let mut z = trial_seed.wrapping_add((role as u64 + 1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialInputs {
    pub index: usize,
    pub seed: u64,
    pub role_seeds: [u64; 4],
    pub mu: Weight,
    pub lambda: Weight,
    pub symbol: StepFunction,
}

/// One assertion outcome inside a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value <= limit`.
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.to_string(), value, limit, passed: value <= limit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub role_seeds: [u64; 4],
    /// Measured quantities by name.
    pub values: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    /// Set when the trial could not be evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().cloned().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Self { min: v[0], median: v[v.len() / 2], max: v[v.len() - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub trial: usize,
    pub seed: u64,
    pub check: String,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub depth: u32,
    pub passed: bool,
    pub failures: Vec<Failure>,
    pub summary: BTreeMap<String, Quantiles>,
    pub records: Vec<TrialRecord>,
}

impl SuiteResult {
    fn assemble(suite: Suite, depth: u32, records: Vec<TrialRecord>) -> Self {
        let mut failures = Vec::new();
        let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &records {
            if let Some(e) = &r.error {
                failures.push(Failure { trial: r.trial, seed: r.seed, check: format!("error: {e}"), value: f64::NAN, limit: f64::NAN });
            }
            for c in r.checks.iter().filter(|c| !c.passed) {
                failures.push(Failure { trial: r.trial, seed: r.seed, check: c.name.clone(), value: c.value, limit: c.limit });
            }
            for (k, v) in &r.values {
                columns.entry(k.clone()).or_default().push(*v);
            }
        }
        let summary = columns.into_iter().filter_map(|(k, v)| Quantiles::of(&v).map(|q| (k, q))).collect();
        SuiteResult { suite, depth, passed: failures.is_empty(), failures, summary, records }
    }
}

/// Runs every configured suite in order.
pub fn run(config: &ExperimentConfig) -> Result<Vec<SuiteResult>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.suites.len());
    for &suite in &config.suites {
        let records = config.execution.map_indexed(config.trials, |t| {
            let inputs = config.trial(t);
            suites::run_trial(suite, config, t, inputs)
        });
        out.push(SuiteResult::assemble(suite, config.depth, records));
    }
    Ok(out)
}

/// Hard assertions all held.
pub fn all_passed(results: &[SuiteResult]) -> bool {
    results.iter().all(|r| r.passed)
}

/// Pretty JSON of the results; identical configs give identical bytes.
pub fn results_to_json(results: &[SuiteResult]) -> Result<String> {
    serde_json::to_string_pretty(results).map_err(|e| Error::InvalidSpec(e.to_string()))
}

/// One CSV row per suite and summarized quantity.
pub fn write_summary_csv<W: std::io::Write>(results: &[SuiteResult], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::InvalidSpec(e.to_string());
    writer.write_record(["suite", "quantity", "min", "median", "max", "failures"]).map_err(err)?;
    for r in results {
        for (name, q) in &r.summary {
            writer
                .write_record([
                    r.suite.name(),
                    name,
                    &q.min.to_string(),
                    &q.median.to_string(),
                    &q.max.to_string(),
                    &r.failures.len().to_string(),
                ])
                .map_err(err)?;
        }
    }
    writer.flush().map_err(|e| Error::InvalidSpec(e.to_string()))
}
