use serde::{Deserialize, Serialize};

use crate::bmo::BmoReport;
use crate::dyadic::StepFunction;
use crate::error::Result;
use crate::normest::{
    power_iteration_norm, weighted_operator_norm, LinearOperatorMatrix, MatrixFree, PowerOptions, DEFAULT_DENSE_CAP,
};
use crate::operators::ensure_admissible;
use crate::par::Execution;
use crate::weights::{rho_weight, Weight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    Dense,
    PowerIteration,
}

impl NormMethod {
    pub fn for_depth(depth: u32) -> Self {
        if depth <= DEFAULT_DENSE_CAP {
            NormMethod::Dense
        } else {
            NormMethod::PowerIteration
        }
    }
}

/// `‖T : L²(μ) → L²(λ)‖`, dense up to the cap, power iteration beyond.
pub(crate) fn operator_norm(
    dense: impl FnOnce() -> Result<LinearOperatorMatrix>,
    free: MatrixFree,
    mu: &Weight,
    lambda: &Weight,
) -> Result<f64> {
    match NormMethod::for_depth(mu.grid().depth()) {
        NormMethod::Dense => weighted_operator_norm(&dense()?, mu, lambda),
        NormMethod::PowerIteration => {
            power_iteration_norm(&free, mu, lambda, PowerOptions::default()).map(|e| e.midpoint())
        }
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0 && num.is_finite()).then(|| num / den)
}

/// Quotients of the report; `None` when the denominator vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub paraproduct_over_bloom_b2: Option<f64>,
    pub adjoint_over_bloom_b2_dual: Option<f64>,
    pub commutator_over_bmo_rho: Option<f64>,
    pub shift_mu_over_a2: Option<f64>,
    pub shift_lambda_over_a2: Option<f64>,
    pub chain_spread: Option<f64>,
}

/// Characteristics, functionals and operator norms of one `(μ, λ, b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub depth: u32,
    pub method: NormMethod,
    pub a2_mu: f64,
    pub a2_lambda: f64,
    pub a2_rho: f64,
    pub functionals: BmoReport,
    /// `‖Π_b : L²(μ) → L²(λ)‖`.
    pub paraproduct: f64,
    /// `‖Π_b^* : L²(μ) → L²(λ)‖`.
    pub paraproduct_adjoint: f64,
    /// `‖Ш : L²(μ) → L²(μ)‖`, finest level truncated.
    pub shift_mu: f64,
    pub shift_lambda: f64,
    /// `‖[b, Ш] : L²(μ) → L²(λ)‖`, finest level truncated.
    pub commutator: f64,
    /// `b` has a finest-level coefficient, so the commutator norm is that of
    /// the truncated model.
    pub symbol_inadmissible: bool,
    pub ratios: Ratios,
}

impl NormReport {
    pub fn compute(mu: &Weight, lambda: &Weight, b: &StepFunction) -> Result<Self> {
        Self::compute_with(mu, lambda, b, Execution::default())
    }

    pub fn compute_with(mu: &Weight, lambda: &Weight, b: &StepFunction, exec: Execution) -> Result<Self> {
        let grid = b.grid();
        grid.ensure_same(mu.grid())?;
        grid.ensure_same(lambda.grid())?;
        let rho = rho_weight(mu, lambda)?;
        let functionals = BmoReport::compute_with(b, mu, lambda, exec)?;
        let paraproduct = operator_norm(
            || LinearOperatorMatrix::paraproduct_with(b, exec),
            MatrixFree::Paraproduct(b.clone()),
            mu,
            lambda,
        )?;
        let paraproduct_adjoint = operator_norm(
            || LinearOperatorMatrix::paraproduct_adjoint_with(b, exec),
            MatrixFree::ParaproductAdjoint(b.clone()),
            mu,
            lambda,
        )?;
        let shift = |w: &Weight| {
            operator_norm(|| LinearOperatorMatrix::shift_with(grid, exec), MatrixFree::Shift(grid), w, w)
        };
        let (shift_mu, shift_lambda) = (shift(mu)?, shift(lambda)?);
        let commutator = operator_norm(
            || LinearOperatorMatrix::commutator_with(b, exec),
            MatrixFree::Commutator(b.clone()),
            mu,
            lambda,
        )?;
        let (a2_mu, a2_lambda) = (mu.a2_characteristic(), lambda.a2_characteristic());
        let ratios = Ratios {
            paraproduct_over_bloom_b2: ratio(paraproduct, functionals.bloom_b2),
            adjoint_over_bloom_b2_dual: ratio(paraproduct_adjoint, functionals.bloom_b2_dual),
            commutator_over_bmo_rho: ratio(commutator, functionals.bmo_rho),
            shift_mu_over_a2: ratio(shift_mu, a2_mu),
            shift_lambda_over_a2: ratio(shift_lambda, a2_lambda),
            chain_spread: functionals.chain_spread(),
        };
        Ok(Self {
            depth: grid.depth(),
            method: NormMethod::for_depth(grid.depth()),
            a2_mu,
            a2_lambda,
            a2_rho: rho.a2_characteristic(),
            functionals,
            paraproduct,
            paraproduct_adjoint,
            shift_mu,
            shift_lambda,
            commutator,
            symbol_inadmissible: ensure_admissible(b).is_err(),
            ratios,
        })
    }

    /// Flat `(name, value)` pairs in a fixed order; missing ratios are NaN.
    pub fn columns(&self) -> Vec<(&'static str, f64)> {
        let f = &self.functionals;
        let r = &self.ratios;
        let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
        vec![
            ("a2_mu", self.a2_mu),
            ("a2_lambda", self.a2_lambda),
            ("a2_rho", self.a2_rho),
            ("bloom_b2", f.bloom_b2),
            ("bloom_b2_dual", f.bloom_b2_dual),
            ("bloom_b2_l2form", f.bloom_b2_l2form),
            ("bmo_rho", f.bmo_rho),
            ("bmo_rho_l1", f.bmo_rho_l1),
            ("neccon", f.neccon),
            ("paraproduct", self.paraproduct),
            ("paraproduct_adjoint", self.paraproduct_adjoint),
            ("shift_mu", self.shift_mu),
            ("shift_lambda", self.shift_lambda),
            ("commutator", self.commutator),
            ("paraproduct_over_bloom_b2", opt(r.paraproduct_over_bloom_b2)),
            ("adjoint_over_bloom_b2_dual", opt(r.adjoint_over_bloom_b2_dual)),
            ("commutator_over_bmo_rho", opt(r.commutator_over_bmo_rho)),
            ("shift_mu_over_a2", opt(r.shift_mu_over_a2)),
            ("shift_lambda_over_a2", opt(r.shift_lambda_over_a2)),
            ("chain_spread", opt(r.chain_spread)),
        ]
    }
}
