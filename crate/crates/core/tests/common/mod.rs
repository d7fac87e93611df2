#![allow(dead_code)]

pub mod oracle;

use dyadic_bloom::experiment::{ExperimentConfig, Suite, TrialInputs};
use dyadic_bloom::weights::{EnsembleKind, EnsembleSpec};
use dyadic_bloom::{StepFunction, Weight};
use serde::{Deserialize, Serialize};

/// Triples per ensemble in the equivalence and commutator criteria.
pub const ENSEMBLE_TRIPLES: usize = 200;
pub const PILOT_DEPTH: u32 = 4;
pub const SHIFT_PILOT_DEPTH: u32 = 6;
pub const A2_CAP: f64 = 16.0;

/// A fixed `(μ, λ, b)` family, admissible symbols, `A2 ≤ 16` weights.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub name: &'static str,
    pub weight: EnsembleKind,
    pub symbol: EnsembleKind,
    pub seed: u64,
}

pub fn ensembles() -> Vec<Ensemble> {
    let cascade = |delta| EnsembleKind::Cascade { delta };
    let log = |delta| EnsembleKind::LogSymbol { delta };
    let sparse = EnsembleKind::HaarSparseSymbol { sparsity: 0.5, amplitude: 1.0 };
    vec![
        Ensemble { name: "cascade-0.3/haar-sparse", weight: cascade(0.3), symbol: sparse.clone(), seed: 11 },
        Ensemble { name: "cascade-0.3/log", weight: cascade(0.3), symbol: log(0.3), seed: 12 },
        Ensemble { name: "cascade-0.5/haar-sparse", weight: cascade(0.5), symbol: sparse, seed: 13 },
        Ensemble { name: "cascade-0.5/log", weight: cascade(0.5), symbol: log(0.5), seed: 14 },
    ]
}

impl Ensemble {
    pub fn config(&self, depth: u32, trials: usize) -> ExperimentConfig {
        let weight = EnsembleSpec::new(self.weight.clone(), 0, 0).with_a2_range(1.0, A2_CAP);
        let symbol = EnsembleSpec::new(self.symbol.clone(), 0, 0).with_max_level(depth.saturating_sub(2));
        ExperimentConfig {
            depth,
            mu: weight.clone(),
            lambda: weight.with_seed(0x5eed),
            symbol,
            suites: vec![Suite::Identities],
            trials,
            seed: self.seed,
            ..ExperimentConfig::default()
        }
    }

    pub fn triples(&self, depth: u32, count: usize) -> Vec<TrialInputs> {
        let config = self.config(depth, count);
        (0..count).map(|t| config.trial(t).expect("ensemble trial generates")).collect()
    }
}

pub fn shift_alphas() -> Vec<f64> {
    dyadic_bloom::experiment::parse_range("-0.9:0.1:0.9").expect("valid range")
}

pub fn power_weight(depth: u32, alpha: f64) -> Weight {
    dyadic_bloom::weights::generate_weight(&EnsembleSpec::power(depth, alpha)).expect("power weight")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConstants {
    pub name: String,
    /// Largest chain spread at the pilot depth.
    pub k_ens: f64,
    /// `max(max q, 1/min q)` for `q = ‖[b, Ш]‖ / bmo_rho`.
    pub k_commutator: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftPilot {
    pub depth: u32,
    pub alpha: Vec<f64>,
    /// `‖Ш : L²(w) → L²(w)‖ / [w]_{A2}` per alpha.
    pub ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotFixture {
    pub depth: u32,
    pub triples: usize,
    pub ensembles: Vec<EnsembleConstants>,
    pub shift: ShiftPilot,
}

pub const PILOT_FIXTURE: &str = include_str!("../fixtures/pilot.json");

pub fn pilot() -> PilotFixture {
    serde_json::from_str(PILOT_FIXTURE).expect("pilot fixture parses")
}

pub fn values(f: &StepFunction) -> &[f64] {
    f.values()
}
