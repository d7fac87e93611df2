//! Weighted BMO functionals of a symbol `b` against a pair of weights.
//!
//! Every supremum runs over the finite dyadic tree and is returned together
//! with the interval attaining it. Only the Haar coefficients of `b` enter,
//! so the mean of `b` is irrelevant.

use serde::{Deserialize, Serialize};

use crate::dyadic::{path_sums_within, synthesize_within, DyadicInterval, HaarSpectrum, StepFunction};
use crate::error::Result;
use crate::par::Execution;
use crate::weights::{rho_weight, Weight};

/// A supremum over dyadic intervals and the first interval (breadth-first)
/// attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Supremum {
    pub value: f64,
    pub argmax: DyadicInterval,
}

impl Supremum {
    // `scores[i]` belongs to `DyadicInterval::from_index(i)`; returns sqrt of the max
    fn sqrt_of_max(scores: &[f64]) -> Self {
        let mut best = (0.0, 0);
        for (i, &s) in scores.iter().enumerate() {
            if s > best.0 {
                best = (s, i);
            }
        }
        Supremum { value: best.0.sqrt(), argmax: DyadicInterval::from_index(best.1) }
    }
}

/// Bottom-up subtree sums over the Haar intervals: `out[K] = Σ_{I ⊆ K} term[I]`.
fn subtree_sums(mut terms: Vec<f64>) -> Vec<f64> {
    let n = terms.len();
    for idx in (0..n).rev() {
        let left = 2 * idx + 1;
        if left + 1 < n {
            terms[idx] += terms[left] + terms[left + 1];
        }
    }
    terms
}

fn same_grids(b: &StepFunction, weights: &[&Weight]) -> Result<()> {
    weights.iter().try_for_each(|w| b.grid().ensure_same(w.grid()))
}

/// `sup_K μ^{-1}(K)^{-1} Σ_{I ⊆ K} b̂(I)^2 ⟨μ^{-1}⟩_I^2 ⟨λ⟩_I`, square-rooted.
/// One bottom-up pass over the tree.
pub fn bloom_b2(b: &StepFunction, mu: &Weight, lambda: &Weight) -> Result<Supremum> {
    same_grids(b, &[mu, lambda])?;
    let s = b.analyze();
    let mu_inv = mu.reciprocal();
    let terms = s
        .iter()
        .map(|(i, c)| c * c * mu_inv.average(i).powi(2) * lambda.average(i))
        .collect();
    let sums = subtree_sums(terms);
    let scores: Vec<f64> = sums
        .iter()
        .enumerate()
        .map(|(k, v)| v / mu_inv.mass(DyadicInterval::from_index(k)))
        .collect();
    Ok(Supremum::sqrt_of_max(&scores))
}

/// The same functional with the pair `(λ^{-1}, μ^{-1})`.
pub fn bloom_b2_dual(b: &StepFunction, mu: &Weight, lambda: &Weight) -> Result<Supremum> {
    bloom_b2(b, &lambda.reciprocal(), &mu.reciprocal())
}

/// `sup_K μ^{-1}(K)^{-1/2} ‖Σ_{I ⊆ K} b̂(I) ⟨μ^{-1}⟩_I h_I‖_{L^2(λ)}`.
///
/// Synthesizes each localized sum on the leaves of `K` and integrates it
/// against `λ`; independent of the tree pass in [`bloom_b2`].
pub fn bloom_b2_l2form(b: &StepFunction, mu: &Weight, lambda: &Weight) -> Result<Supremum> {
    bloom_b2_l2form_with(b, mu, lambda, Execution::default())
}

pub fn bloom_b2_l2form_with(b: &StepFunction, mu: &Weight, lambda: &Weight, exec: Execution) -> Result<Supremum> {
    same_grids(b, &[mu, lambda])?;
    let s = b.analyze();
    let mu_inv = mu.reciprocal();
    let grid = b.grid();
    let scores = exec.map_indexed(grid.haar_count(), |k| {
        let root = DyadicInterval::from_index(k);
        let g = synthesize_within(grid, root, |i| s.coeff(i) * mu_inv.average(i));
        local_energy(&g, lambda, root) / mu_inv.mass(root)
    });
    Ok(Supremum::sqrt_of_max(&scores))
}

// ∫_K g^2 w for g given on the leaves of K
pub(crate) fn local_energy(g: &[f64], w: &Weight, root: DyadicInterval) -> f64 {
    let grid = w.grid();
    let weights = &w.values()[root.leaf_range(grid.depth())];
    g.iter().zip(weights).map(|(v, w)| v * v * w).sum::<f64>() * grid.leaf_width()
}

/// Dyadic `BMO_ρ`: `sup_I (ρ(I)^{-1} ∫_I |b - ⟨b⟩_I|^2)^{1/2}`.
///
/// The oscillation is `Σ_{J ⊆ I} b̂(J)^2` (local Parseval).
pub fn bmo_rho(b: &StepFunction, rho: &Weight) -> Result<Supremum> {
    same_grids(b, &[rho])?;
    let s = b.analyze();
    let sums = subtree_sums(s.coeffs().iter().map(|c| c * c).collect());
    let scores: Vec<f64> =
        sums.iter().enumerate().map(|(k, v)| v / rho.mass(DyadicInterval::from_index(k))).collect();
    Ok(Supremum::sqrt_of_max(&scores))
}

/// `sup_{I0} ρ(I0)^{-1} ∫_{I0} (Σ_{I ⊆ I0} b̂(I)^2 1_I / |I|)^{1/2}`.
///
/// Not square-rooted again: this is already norm-like.
pub fn bmo_rho_l1(b: &StepFunction, rho: &Weight) -> Result<Supremum> {
    bmo_rho_l1_with(b, rho, Execution::default())
}

pub fn bmo_rho_l1_with(b: &StepFunction, rho: &Weight, exec: Execution) -> Result<Supremum> {
    same_grids(b, &[rho])?;
    let s = b.analyze();
    let grid = b.grid();
    let width = grid.leaf_width();
    let values = exec.map_indexed(grid.haar_count(), |k| {
        let root = DyadicInterval::from_index(k);
        let sums = path_sums_within(grid, root, |i| s.coeff(i).powi(2) / i.length());
        sums.iter().map(|v| v.sqrt()).sum::<f64>() * width / rho.mass(root)
    });
    // square so the shared argmax helper applies
    let squared: Vec<f64> = values.iter().map(|v| v * v).collect();
    Ok(Supremum::sqrt_of_max(&squared))
}

/// `sup_I (μ^{-1}(I) / |I|^2 ∫_I |b - ⟨b⟩_I|^2 λ)^{1/2}`.
pub fn neccon_functional(b: &StepFunction, mu: &Weight, lambda: &Weight) -> Result<Supremum> {
    neccon_functional_with(b, mu, lambda, Execution::default())
}

pub fn neccon_functional_with(b: &StepFunction, mu: &Weight, lambda: &Weight, exec: Execution) -> Result<Supremum> {
    same_grids(b, &[mu, lambda])?;
    let s = b.analyze();
    let mu_inv = mu.reciprocal();
    let scores = exec.map_indexed(b.grid().haar_count(), |k| {
        let root = DyadicInterval::from_index(k);
        let osc = local_oscillation(&s, lambda, root);
        mu_inv.mass(root) / root.length().powi(2) * osc
    });
    Ok(Supremum::sqrt_of_max(&scores))
}

/// `sup_I (μ(I)^{-1} ∫_I |b - ⟨b⟩_I|^2 λ)^{1/2}`, the weighted oscillation that
/// `neccon_functional` is compared with through the A2 sandwich of `μ`.
pub fn weighted_oscillation(b: &StepFunction, mu: &Weight, lambda: &Weight) -> Result<Supremum> {
    same_grids(b, &[mu, lambda])?;
    let s = b.analyze();
    let scores: Vec<f64> = (0..b.grid().haar_count())
        .map(|k| {
            let root = DyadicInterval::from_index(k);
            local_oscillation(&s, lambda, root) / mu.mass(root)
        })
        .collect();
    Ok(Supremum::sqrt_of_max(&scores))
}

// ∫_I |b - ⟨b⟩_I|^2 w, with b - ⟨b⟩_I synthesized from the coefficients inside I
fn local_oscillation(s: &HaarSpectrum, w: &Weight, root: DyadicInterval) -> f64 {
    let g = synthesize_within(s.grid(), root, |i| s.coeff(i));
    local_energy(&g, w, root)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BmoArgmax {
    pub bloom_b2: DyadicInterval,
    pub bloom_b2_dual: DyadicInterval,
    pub bloom_b2_l2form: DyadicInterval,
    pub bmo_rho: DyadicInterval,
    pub bmo_rho_l1: DyadicInterval,
    pub neccon: DyadicInterval,
}

/// Every functional for one `(b, μ, λ)`, with `ρ = (μ/λ)^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BmoReport {
    pub bloom_b2: f64,
    pub bloom_b2_dual: f64,
    pub bloom_b2_l2form: f64,
    pub bmo_rho: f64,
    pub bmo_rho_l1: f64,
    pub neccon: f64,
    pub argmax: BmoArgmax,
}

impl BmoReport {
    pub fn compute(b: &StepFunction, mu: &Weight, lambda: &Weight) -> Result<Self> {
        Self::compute_with(b, mu, lambda, Execution::default())
    }

    pub fn compute_with(b: &StepFunction, mu: &Weight, lambda: &Weight, exec: Execution) -> Result<Self> {
        let rho = rho_weight(mu, lambda)?;
        let b2 = bloom_b2(b, mu, lambda)?;
        let dual = bloom_b2_dual(b, mu, lambda)?;
        let l2 = bloom_b2_l2form_with(b, mu, lambda, exec)?;
        let bmo = bmo_rho(b, &rho)?;
        let l1 = bmo_rho_l1_with(b, &rho, exec)?;
        let nec = neccon_functional_with(b, mu, lambda, exec)?;
        Ok(Self {
            bloom_b2: b2.value,
            bloom_b2_dual: dual.value,
            bloom_b2_l2form: l2.value,
            bmo_rho: bmo.value,
            bmo_rho_l1: l1.value,
            neccon: nec.value,
            argmax: BmoArgmax {
                bloom_b2: b2.argmax,
                bloom_b2_dual: dual.argmax,
                bloom_b2_l2form: l2.argmax,
                bmo_rho: bmo.argmax,
                bmo_rho_l1: l1.argmax,
                neccon: nec.argmax,
            },
        })
    }

    /// `[bloom_b2, bloom_b2_dual, bmo_rho, bmo_rho_l1, neccon]`.
    pub fn chain(&self) -> [f64; 5] {
        [self.bloom_b2, self.bloom_b2_dual, self.bmo_rho, self.bmo_rho_l1, self.neccon]
    }

    /// `max / min` over [`BmoReport::chain`]; `None` when some entry is zero.
    pub fn chain_spread(&self) -> Option<f64> {
        let chain = self.chain();
        let max = chain.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = chain.iter().cloned().fold(f64::INFINITY, f64::min);
        (min > 0.0).then(|| max / min)
    }
}
