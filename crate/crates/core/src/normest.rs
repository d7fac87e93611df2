//! Weighted operator norms and best constants of quadratic-form inequalities.
//!
//! An operator on a depth-`D` grid is a `2^D × 2^D` matrix acting on leaf
//! values. With `M = diag(μ 2^-D)` and `Λ = diag(λ 2^-D)` the Gram matrices of
//! `L²(μ)` and `L²(λ)`,
//!
//! ```text
//! ‖T : L²(μ) → L²(λ)‖ = σ_max(Λ^{1/2} T M^{-1/2}).
//! ```
//!
//! Dense evaluation is capped (default depth 10); above that, use the
//! matrix-free power iteration in [`power_iteration_norm`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bmo::{local_energy, Supremum};
use crate::dyadic::{synthesize_within, DyadicGrid, DyadicInterval, StepFunction};
use crate::error::{Error, Result};
use crate::operators::{
    commutator_shift_transpose, commutator_shift_with, haar_shift_transpose, haar_shift_with, paraproduct,
    paraproduct_adjoint, ShiftMode,
};
use crate::par::Execution;
use crate::weights::Weight;

pub const DEFAULT_DENSE_CAP: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Identity,
    Paraproduct,
    ParaproductAdjoint,
    Shift,
    Commutator,
    Custom(String),
}

/// A linear map on leaf-value vectors, given by its action and the action of
/// its transpose (for the plain dot product).
pub trait LeafOperator: Sync {
    fn grid(&self) -> DyadicGrid;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_transpose(&self, y: &[f64]) -> Vec<f64>;
}

/// Dense matrix of an operator in leaf coordinates.
#[derive(Debug, Clone)]
pub struct LinearOperatorMatrix {
    grid: DyadicGrid,
    matrix: DMatrix<f64>,
    provenance: Provenance,
    truncated: bool,
}

impl LinearOperatorMatrix {
    /// Column `j` is the image of the `j`-th leaf indicator.
    pub fn from_fn<F>(grid: DyadicGrid, provenance: Provenance, exec: Execution, op: F) -> Result<Self>
    where
        F: Fn(&StepFunction) -> Result<(StepFunction, bool)> + Sync + Send,
    {
        let n = grid.leaf_count();
        let columns = exec.map_indexed(n, |j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            op(&StepFunction::new(grid, e)?)
        });
        let mut matrix = DMatrix::zeros(n, n);
        let mut truncated = false;
        for (j, col) in columns.into_iter().enumerate() {
            let (image, t) = col?;
            truncated |= t;
            matrix.set_column(j, &DVector::from_column_slice(image.values()));
        }
        Ok(Self { grid, matrix, provenance, truncated })
    }

    pub fn from_matrix(grid: DyadicGrid, matrix: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        let n = grid.leaf_count();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::LengthMismatch { expected: n * n, actual: matrix.len() });
        }
        Ok(Self { grid, matrix, provenance, truncated: false })
    }

    pub fn identity(grid: DyadicGrid) -> Self {
        let n = grid.leaf_count();
        Self { grid, matrix: DMatrix::identity(n, n), provenance: Provenance::Identity, truncated: false }
    }

    pub fn paraproduct(b: &StepFunction) -> Result<Self> {
        Self::paraproduct_with(b, Execution::default())
    }

    pub fn paraproduct_with(b: &StepFunction, exec: Execution) -> Result<Self> {
        Self::from_fn(b.grid(), Provenance::Paraproduct, exec, |e| Ok((paraproduct(b, e)?, false)))
    }

    pub fn paraproduct_adjoint(b: &StepFunction) -> Result<Self> {
        Self::paraproduct_adjoint_with(b, Execution::default())
    }

    pub fn paraproduct_adjoint_with(b: &StepFunction, exec: Execution) -> Result<Self> {
        Self::from_fn(b.grid(), Provenance::ParaproductAdjoint, exec, |e| Ok((paraproduct_adjoint(b, e)?, false)))
    }

    /// The shift with its finest level truncated.
    pub fn shift(grid: DyadicGrid) -> Result<Self> {
        Self::shift_with(grid, Execution::default())
    }

    pub fn shift_with(grid: DyadicGrid, exec: Execution) -> Result<Self> {
        Self::from_fn(grid, Provenance::Shift, exec, |e| {
            let s = haar_shift_with(e, ShiftMode::Truncate)?;
            Ok((s.function, s.truncated))
        })
    }

    /// `[b, Ш]` with the truncated shift.
    pub fn commutator(b: &StepFunction) -> Result<Self> {
        Self::commutator_with(b, Execution::default())
    }

    pub fn commutator_with(b: &StepFunction, exec: Execution) -> Result<Self> {
        Self::from_fn(b.grid(), Provenance::Commutator, exec, |e| {
            let s = commutator_shift_with(b, e, ShiftMode::Truncate)?;
            Ok((s.function, s.truncated))
        })
    }

    pub fn grid(&self) -> DyadicGrid {
        self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Some column lost a finest-level coefficient to the shift truncation.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn apply_fn(&self, f: &StepFunction) -> Result<StepFunction> {
        self.grid.ensure_same(f.grid())?;
        StepFunction::new(self.grid, self.apply(f.values()))
    }
}

impl LeafOperator for LinearOperatorMatrix {
    fn grid(&self) -> DyadicGrid {
        self.grid
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(x)).as_slice().to_vec()
    }

    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        self.matrix.tr_mul(&DVector::from_column_slice(y)).as_slice().to_vec()
    }
}

/// Matrix-free operators for depths beyond the dense cap.
#[derive(Debug, Clone)]
pub enum MatrixFree {
    Paraproduct(StepFunction),
    ParaproductAdjoint(StepFunction),
    Shift(DyadicGrid),
    Commutator(StepFunction),
}

impl MatrixFree {
    fn lift(&self, x: &[f64]) -> StepFunction {
        StepFunction::new(LeafOperator::grid(self), x.to_vec()).expect("finite iterate")
    }
}

impl LeafOperator for MatrixFree {
    fn grid(&self) -> DyadicGrid {
        match self {
            MatrixFree::Paraproduct(b) | MatrixFree::ParaproductAdjoint(b) | MatrixFree::Commutator(b) => b.grid(),
            MatrixFree::Shift(g) => *g,
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let f = self.lift(x);
        let out = match self {
            MatrixFree::Paraproduct(b) => paraproduct(b, &f),
            MatrixFree::ParaproductAdjoint(b) => paraproduct_adjoint(b, &f),
            MatrixFree::Shift(_) => haar_shift_with(&f, ShiftMode::Truncate).map(|s| s.function),
            MatrixFree::Commutator(b) => commutator_shift_with(b, &f, ShiftMode::Truncate).map(|s| s.function),
        };
        out.expect("same grid by construction").into_values()
    }

    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let g = self.lift(y);
        let out = match self {
            MatrixFree::Paraproduct(b) => paraproduct_adjoint(b, &g),
            MatrixFree::ParaproductAdjoint(b) => paraproduct(b, &g),
            MatrixFree::Shift(_) => Ok(haar_shift_transpose(&g)),
            MatrixFree::Commutator(b) => commutator_shift_transpose(b, &g),
        };
        out.expect("same grid by construction").into_values()
    }
}

fn check_weights(grid: DyadicGrid, mu: &Weight, lambda: &Weight) -> Result<()> {
    grid.ensure_same(mu.grid())?;
    grid.ensure_same(lambda.grid())
}

/// `‖T : L²(μ) → L²(λ)‖` by a dense symmetric eigensolve, depth ≤ 10.
pub fn weighted_operator_norm(op: &LinearOperatorMatrix, mu: &Weight, lambda: &Weight) -> Result<f64> {
    weighted_operator_norm_capped(op, mu, lambda, DEFAULT_DENSE_CAP)
}

pub fn weighted_operator_norm_capped(
    op: &LinearOperatorMatrix,
    mu: &Weight,
    lambda: &Weight,
    cap: u32,
) -> Result<f64> {
    let grid = op.grid;
    check_weights(grid, mu, lambda)?;
    if grid.depth() > cap {
        return Err(Error::DenseCapExceeded { depth: grid.depth(), cap });
    }
    if op.matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteMatrix);
    }
    let width = grid.leaf_width();
    let row_scale: Vec<f64> = lambda.values().iter().map(|l| (l * width).sqrt()).collect();
    let col_scale: Vec<f64> = mu.values().iter().map(|m| (m * width).sqrt().recip()).collect();
    let a = DMatrix::from_fn(grid.leaf_count(), grid.leaf_count(), |i, j| {
        row_scale[i] * op.matrix[(i, j)] * col_scale[j]
    });
    Ok(largest_eigenvalue(a.tr_mul(&a)).max(0.0).sqrt())
}

fn largest_eigenvalue(sym: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerOptions {
    /// Stop once `upper - lower <= rel_tol · upper`.
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-6, max_iterations: 20_000, seed: 0 }
    }
}

/// Two-sided estimate of a weighted operator norm.
///
/// `lower` is a Rayleigh quotient, so always a true lower bound; `upper` adds
/// the eigen-residual `‖Gx - θx‖` of the normal operator `G`, which bounds the
/// distance from `θ` to the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl PowerEstimate {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

pub fn power_iteration_norm(
    op: &dyn LeafOperator,
    mu: &Weight,
    lambda: &Weight,
    options: PowerOptions,
) -> Result<PowerEstimate> {
    let grid = op.grid();
    check_weights(grid, mu, lambda)?;
    let width = grid.leaf_width();
    let n = grid.leaf_count();
    let in_scale: Vec<f64> = mu.values().iter().map(|m| (m * width).sqrt().recip()).collect();
    let out_weight: Vec<f64> = lambda.values().iter().map(|l| l * width).collect();
    // x ↦ M^{-1/2} Tᵀ Λ T M^{-1/2} x
    let normal = |x: &[f64]| -> Vec<f64> {
        let u: Vec<f64> = x.iter().zip(&in_scale).map(|(a, s)| a * s).collect();
        let mut v = op.apply(&u);
        v.iter_mut().zip(&out_weight).for_each(|(a, w)| *a *= w);
        let mut y = op.apply_transpose(&v);
        y.iter_mut().zip(&in_scale).for_each(|(a, s)| *a *= s);
        y
    };
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&mut x);
    let mut estimate = PowerEstimate { lower: 0.0, upper: f64::INFINITY, iterations: 0, converged: false };
    for it in 1..=options.max_iterations {
        let gx = normal(&x);
        let theta: f64 = x.iter().zip(&gx).map(|(a, b)| a * b).sum();
        let residual = gx.iter().zip(&x).map(|(g, a)| (g - theta * a).powi(2)).sum::<f64>().sqrt();
        if theta.is_nan() || residual.is_nan() {
            return Err(Error::NonFiniteMatrix);
        }
        let lower = theta.max(0.0).sqrt();
        let upper = (theta.max(0.0) + residual).sqrt();
        estimate = PowerEstimate { lower, upper, iterations: it, converged: false };
        if upper - lower <= options.rel_tol * upper {
            estimate.converged = true;
            break;
        }
        x = gx;
        if normalize(&mut x) == 0.0 {
            // the operator annihilated the iterate: zero norm
            estimate = PowerEstimate { lower: 0.0, upper: 0.0, iterations: it, converged: true };
            break;
        }
    }
    Ok(estimate)
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}

/// Best `C` in `xᵀ A x ≤ C xᵀ G x`: the top generalized eigenvalue of `(A, G)`.
pub fn best_quadratic_constant(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n || g.nrows() != n || g.ncols() != n {
        return Err(Error::LengthMismatch { expected: n * n, actual: g.len() });
    }
    let chol = g.clone().cholesky().ok_or(Error::GramNotPositiveDefinite)?;
    let l = chol.l();
    // C = L^{-1} A L^{-T}, congruent to A, so A is PSD iff C is
    let left = l.solve_lower_triangular(a).ok_or(Error::GramNotPositiveDefinite)?;
    let c = l.solve_lower_triangular(&left.transpose()).ok_or(Error::GramNotPositiveDefinite)?;
    let sym = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-12 * max.abs().max(1.0) {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    Ok(max.max(0.0))
}

/// The forms of `Σ_I f̂(I)^2 / ⟨w⟩_I ≤ C ‖f‖²_{L²(w^{-1})}` in leaf coordinates.
pub fn square_sum_forms(w: &Weight) -> (DMatrix<f64>, DMatrix<f64>) {
    let grid = w.grid();
    let n = grid.leaf_count();
    let width = grid.leaf_width();
    let mut a = DMatrix::zeros(n, n);
    for i in grid.haar_intervals() {
        let h = width / i.length().sqrt();
        let weight = 1.0 / w.average(i);
        let range = i.leaf_range(grid.depth());
        let mid = range.start + range.len() / 2;
        for p in range.clone() {
            let sp = if p < mid { -h } else { h };
            for q in range.clone() {
                let sq = if q < mid { -h } else { h };
                a[(p, q)] += weight * sp * sq;
            }
        }
    }
    let g = DMatrix::from_diagonal(&DVector::from_iterator(n, w.values().iter().map(|v| width / v)));
    (a, g)
}

/// Best constant of the square-sum estimate for `w`.
pub fn square_sum_constant(w: &Weight) -> Result<f64> {
    let (a, g) = square_sum_forms(w);
    best_quadratic_constant(&a, &g)
}

/// Nonnegative `a_I` over every interval of the grid, with its reference
/// weight.
#[derive(Debug, Clone)]
pub struct CarlesonSequence {
    weight: Weight,
    values: Vec<f64>,
}

impl CarlesonSequence {
    pub fn new(weight: Weight, values: Vec<f64>) -> Result<Self> {
        let count = weight.grid().interval_count();
        if values.len() != count {
            return Err(Error::LengthMismatch { expected: count, actual: values.len() });
        }
        if let Some((k, &value)) = values.iter().enumerate().find(|(_, v)| v.is_nan() || **v < 0.0) {
            return Err(Error::NegativeCarlesonTerm { interval: DyadicInterval::from_index(k), value });
        }
        Ok(Self { weight, values })
    }

    pub fn from_fn(weight: Weight, a: impl Fn(DyadicInterval) -> f64) -> Result<Self> {
        let values = weight.grid().intervals().map(a).collect();
        Self::new(weight, values)
    }

    /// `a_I = b̂(I)^2 ⟨μ^{-1}⟩_I^2 ⟨λ⟩_I` against `μ^{-1}`.
    pub fn primal(b: &StepFunction, mu: &Weight, lambda: &Weight) -> Result<Self> {
        b.grid().ensure_same(mu.grid())?;
        b.grid().ensure_same(lambda.grid())?;
        let s = b.analyze();
        let mu_inv = mu.reciprocal();
        let values = b
            .grid()
            .intervals()
            .map(|i| s.coeff(i).powi(2) * mu_inv.average(i).powi(2) * lambda.average(i))
            .collect();
        Self::new(mu_inv, values)
    }

    /// `a_I = b̂(I)^2 ⟨μ^{-1}⟩_I ⟨λ⟩_I^2` against `λ`.
    pub fn dual(b: &StepFunction, mu: &Weight, lambda: &Weight) -> Result<Self> {
        b.grid().ensure_same(mu.grid())?;
        b.grid().ensure_same(lambda.grid())?;
        let s = b.analyze();
        let mu_inv = mu.reciprocal();
        let values = b
            .grid()
            .intervals()
            .map(|i| s.coeff(i).powi(2) * mu_inv.average(i) * lambda.average(i).powi(2))
            .collect();
        Self::new(lambda.clone(), values)
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    pub fn get(&self, interval: DyadicInterval) -> f64 {
        self.values[interval.index()]
    }
}

/// `sup_J w(J)^{-1} Σ_{I ⊆ J} a_I`, one bottom-up pass.
pub fn carleson_constant(a: &CarlesonSequence) -> Supremum {
    let mut sums = a.values.clone();
    let n = sums.len();
    for idx in (0..n).rev() {
        if 2 * idx + 2 < n {
            sums[idx] += sums[2 * idx + 1] + sums[2 * idx + 2];
        }
    }
    let mut best = Supremum { value: 0.0, argmax: DyadicInterval::ROOT };
    for (k, s) in sums.iter().enumerate() {
        let i = DyadicInterval::from_index(k);
        let v = s / a.weight.mass(i);
        if v > best.value {
            best = Supremum { value: v, argmax: i };
        }
    }
    best
}

/// Classical dyadic embedding constant: `C* ≤ 4 · carleson_constant`.
pub const EMBEDDING_FACTOR: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCheck {
    pub carleson_constant: f64,
    /// Best `C*` in `Σ_I a_I E_I^w(φ)^2 ≤ C* ‖φ‖²_{L²(w)}`.
    pub best_constant: f64,
    pub holds: bool,
}

pub fn carleson_embedding_check(a: &CarlesonSequence) -> Result<EmbeddingCheck> {
    let w = &a.weight;
    let grid = w.grid();
    let n = grid.leaf_count();
    let width = grid.leaf_width();
    let mut form = DMatrix::zeros(n, n);
    for i in grid.intervals() {
        let coef = a.get(i);
        if coef == 0.0 {
            continue;
        }
        let range = i.leaf_range(grid.depth());
        let mass = w.mass(i);
        let e: Vec<f64> = w.values()[range.clone()].iter().map(|v| v * width / mass).collect();
        for (p, ep) in range.clone().zip(&e) {
            for (q, eq) in range.clone().zip(&e) {
                form[(p, q)] += coef * ep * eq;
            }
        }
    }
    let gram = DMatrix::from_diagonal(&DVector::from_iterator(n, w.values().iter().map(|v| v * width)));
    let best = best_quadratic_constant(&form, &gram)?;
    let cc = carleson_constant(a).value;
    Ok(EmbeddingCheck {
        carleson_constant: cc,
        best_constant: best,
        holds: best <= EMBEDDING_FACTOR * cc * (1.0 + 1e-9) + 1e-14,
    })
}

/// Restricted sums against the paraproduct testing functions `μ^{-1} 1_K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NecessityAudit {
    /// `max_K ‖Σ_{I⊆K} b̂(I)⟨μ^{-1}⟩_I h_I‖_{L²(λ)} / ‖Π_b(μ^{-1}1_K)‖_{L²(λ)}`.
    pub max_ratio: f64,
    pub argmax: DyadicInterval,
    /// Intervals `K` whose ratio exceeds 1.
    pub exceed_count: usize,
    pub evaluated: usize,
}

pub fn necessity_test_function_bound(b: &StepFunction, mu: &Weight, lambda: &Weight) -> Result<NecessityAudit> {
    necessity_test_function_bound_with(b, mu, lambda, Execution::default())
}

pub fn necessity_test_function_bound_with(
    b: &StepFunction,
    mu: &Weight,
    lambda: &Weight,
    exec: Execution,
) -> Result<NecessityAudit> {
    check_weights(b.grid(), mu, lambda)?;
    let grid = b.grid();
    let s = b.analyze();
    let mu_inv = mu.reciprocal();
    let ratios = exec.map_indexed(grid.haar_count(), |k| -> Result<f64> {
        let root = DyadicInterval::from_index(k);
        let g = synthesize_within(grid, root, |i| s.coeff(i) * mu_inv.average(i));
        let restricted = local_energy(&g, lambda, root).sqrt();
        if restricted == 0.0 {
            return Ok(0.0);
        }
        let test = StepFunction::indicator(grid, root)?.pointwise_multiply(mu_inv.function())?;
        let full = lambda.norm(&paraproduct(b, &test)?)?;
        Ok(if full > 0.0 { restricted / full } else { f64::INFINITY })
    });
    let mut audit = NecessityAudit { max_ratio: 0.0, argmax: DyadicInterval::ROOT, exceed_count: 0, evaluated: 0 };
    for (k, r) in ratios.into_iter().enumerate() {
        let r = r?;
        audit.evaluated += 1;
        if r > 1.0 {
            audit.exceed_count += 1;
        }
        if r > audit.max_ratio {
            audit.max_ratio = r;
            audit.argmax = DyadicInterval::from_index(k);
        }
    }
    Ok(audit)
}
