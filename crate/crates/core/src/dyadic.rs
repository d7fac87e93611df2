//! The finite dyadic tree on `[0, 1)`, step functions on its leaves and the
//! exact Haar transform.
//!
//! A grid of depth `D` has `2^D` leaves of width `2^-D`. Every integral is an
//! exact leaf sum, so Haar analysis and synthesis are exact up to rounding.
//!
//! Haar functions use the convention `h_I = |I|^{-1/2} (-1_{I-} + 1_{I+})`:
//! negative on the left child, positive on the right child.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest depth accepted by [`DyadicGrid::new`].
pub const MAX_DEPTH: u32 = 24;

/// The dyadic interval `[position 2^-level, (position + 1) 2^-level)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "(u32, usize)", into = "(u32, usize)")]
pub struct DyadicInterval {
    level: u32,
    position: usize,
}

impl DyadicInterval {
    pub const ROOT: DyadicInterval = DyadicInterval { level: 0, position: 0 };

    /// Panics if `position >= 2^level`.
    pub fn new(level: u32, position: usize) -> Self {
        Self::checked(level, position)
            .unwrap_or_else(|| panic!("position {position} out of range at level {level}"))
    }

    pub fn checked(level: u32, position: usize) -> Option<Self> {
        if level <= MAX_DEPTH && position < (1usize << level) {
            Some(Self { level, position })
        } else {
            None
        }
    }

    /// Inverse of [`DyadicInterval::index`].
    pub fn from_index(index: usize) -> Self {
        let level = usize::BITS - 1 - (index + 1).leading_zeros();
        Self { level, position: index + 1 - (1usize << level) }
    }

    pub fn level(self) -> u32 {
        self.level
    }

    pub fn position(self) -> usize {
        self.position
    }

    /// Breadth-first (heap) index: the root is 0, the children of `i` are
    /// `2i + 1` and `2i + 2`.
    pub fn index(self) -> usize {
        (1usize << self.level) - 1 + self.position
    }

    /// Lebesgue measure `|I| = 2^-level`.
    pub fn length(self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    pub fn start(self) -> f64 {
        self.position as f64 * self.length()
    }

    pub fn end(self) -> f64 {
        (self.position + 1) as f64 * self.length()
    }

    pub fn left_child(self) -> Self {
        Self { level: self.level + 1, position: 2 * self.position }
    }

    pub fn right_child(self) -> Self {
        Self { level: self.level + 1, position: 2 * self.position + 1 }
    }

    pub fn children(self) -> (Self, Self) {
        (self.left_child(), self.right_child())
    }

    pub fn parent(self) -> Option<Self> {
        (self.level > 0).then(|| Self { level: self.level - 1, position: self.position / 2 })
    }

    /// `other ⊆ self`.
    pub fn contains(self, other: DyadicInterval) -> bool {
        other.level >= self.level && other.position >> (other.level - self.level) == self.position
    }

    pub fn is_disjoint(self, other: DyadicInterval) -> bool {
        !self.contains(other) && !other.contains(self)
    }

    /// Indices of the leaves of a depth-`depth` grid lying inside `self`.
    pub fn leaf_range(self, depth: u32) -> Range<usize> {
        debug_assert!(self.level <= depth);
        let shift = depth - self.level;
        (self.position << shift)..((self.position + 1) << shift)
    }

    /// All dyadic intervals `J ⊆ self` with `level(J) <= max_level`, in
    /// breadth-first order starting with `self`.
    pub fn descendants(self, max_level: u32) -> impl Iterator<Item = DyadicInterval> {
        (self.level..=max_level).flat_map(move |level| {
            let shift = level - self.level;
            let first = self.position << shift;
            (first..first + (1usize << shift)).map(move |position| DyadicInterval { level, position })
        })
    }
}

impl TryFrom<(u32, usize)> for DyadicInterval {
    type Error = String;

    fn try_from((level, position): (u32, usize)) -> std::result::Result<Self, Self::Error> {
        Self::checked(level, position)
            .ok_or_else(|| format!("({level}, {position}) is not a dyadic interval"))
    }
}

impl From<DyadicInterval> for (u32, usize) {
    fn from(i: DyadicInterval) -> Self {
        (i.level, i.position)
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.level, self.position)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct DyadicGrid {
    depth: u32,
}

impl DyadicGrid {
    pub fn new(depth: u32) -> Result<Self> {
        if (1..=MAX_DEPTH).contains(&depth) {
            Ok(Self { depth })
        } else {
            Err(Error::InvalidDepth(depth))
        }
    }

    pub fn depth(self) -> u32 {
        self.depth
    }

    pub fn leaf_count(self) -> usize {
        1usize << self.depth
    }

    pub fn leaf_width(self) -> f64 {
        0.5f64.powi(self.depth as i32)
    }

    /// `2^{D+1} - 1`, every interval including the leaves.
    pub fn interval_count(self) -> usize {
        (1usize << (self.depth + 1)) - 1
    }

    /// `2^D - 1`, the intervals carrying a Haar coefficient (level < D).
    pub fn haar_count(self) -> usize {
        (1usize << self.depth) - 1
    }

    pub fn intervals(self) -> impl Iterator<Item = DyadicInterval> {
        DyadicInterval::ROOT.descendants(self.depth)
    }

    pub fn haar_intervals(self) -> impl Iterator<Item = DyadicInterval> {
        DyadicInterval::ROOT.descendants(self.depth - 1)
    }

    pub fn leaf(self, index: usize) -> DyadicInterval {
        DyadicInterval::new(self.depth, index)
    }

    pub fn check(self, interval: DyadicInterval) -> Result<()> {
        if interval.level <= self.depth {
            Ok(())
        } else {
            Err(Error::IntervalOutOfGrid { interval, depth: self.depth })
        }
    }

    pub fn ensure_same(self, other: DyadicGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch { left: self.depth, right: other.depth })
        }
    }
}

impl TryFrom<u32> for DyadicGrid {
    type Error = Error;

    fn try_from(depth: u32) -> Result<Self> {
        Self::new(depth)
    }
}

impl From<DyadicGrid> for u32 {
    fn from(g: DyadicGrid) -> u32 {
        g.depth
    }
}

/// A real function constant on each leaf of a grid.
///
/// Serializes as `{"depth": D, "values": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepFunctionRepr", into = "StepFunctionRepr")]
pub struct StepFunction {
    grid: DyadicGrid,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StepFunctionRepr {
    depth: u32,
    values: Vec<f64>,
}

impl TryFrom<StepFunctionRepr> for StepFunction {
    type Error = Error;

    fn try_from(r: StepFunctionRepr) -> Result<Self> {
        StepFunction::new(DyadicGrid::new(r.depth)?, r.values)
    }
}

impl From<StepFunction> for StepFunctionRepr {
    fn from(f: StepFunction) -> Self {
        StepFunctionRepr { depth: f.grid.depth, values: f.values }
    }
}

impl StepFunction {
    pub fn new(grid: DyadicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.leaf_count() {
            return Err(Error::LengthMismatch { expected: grid.leaf_count(), actual: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: DyadicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.leaf_count());
        Self { grid, values }
    }

    pub fn constant(grid: DyadicGrid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.leaf_count()] }
    }

    pub fn zeros(grid: DyadicGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn indicator(grid: DyadicGrid, interval: DyadicInterval) -> Result<Self> {
        grid.check(interval)?;
        let mut values = vec![0.0; grid.leaf_count()];
        values[interval.leaf_range(grid.depth)].fill(1.0);
        Ok(Self { grid, values })
    }

    /// The Haar function `h_I`. Requires `level(I) < D`.
    pub fn haar(grid: DyadicGrid, interval: DyadicInterval) -> Result<Self> {
        if interval.level >= grid.depth {
            return Err(Error::IntervalOutOfGrid { interval, depth: grid.depth - 1 });
        }
        let mut values = vec![0.0; grid.leaf_count()];
        let height = interval.length().sqrt().recip();
        values[interval.left_child().leaf_range(grid.depth)].fill(-height);
        values[interval.right_child().leaf_range(grid.depth)].fill(height);
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> DyadicGrid {
        self.grid
    }

    pub fn depth(&self) -> u32 {
        self.grid.depth
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.leaf_width()
    }

    pub fn integral_over(&self, interval: DyadicInterval) -> f64 {
        self.values[interval.leaf_range(self.grid.depth)].iter().sum::<f64>() * self.grid.leaf_width()
    }

    /// `⟨f⟩_I`.
    pub fn average_over(&self, interval: DyadicInterval) -> f64 {
        let leaves = &self.values[interval.leaf_range(self.grid.depth)];
        leaves.iter().sum::<f64>() / leaves.len() as f64
    }

    /// Unweighted pairing `∫ f g`.
    pub fn inner(&self, other: &StepFunction) -> Result<f64> {
        self.grid.ensure_same(other.grid)?;
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(dot * self.grid.leaf_width())
    }

    pub fn norm_l2(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.leaf_width()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> StepFunction {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, c: f64) -> StepFunction {
        self.map(|v| c * v)
    }

    fn zip_with(&self, other: &StepFunction, f: impl Fn(f64, f64) -> f64) -> Result<StepFunction> {
        self.grid.ensure_same(other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn add(&self, other: &StepFunction) -> Result<StepFunction> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &StepFunction) -> Result<StepFunction> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Leafwise product.
    pub fn pointwise_multiply(&self, other: &StepFunction) -> Result<StepFunction> {
        self.zip_with(other, |a, b| a * b)
    }

    /// `max_x |f(x) - g(x)|`.
    pub fn max_abs_diff(&self, other: &StepFunction) -> Result<f64> {
        self.grid.ensure_same(other.grid)?;
        Ok(self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn analyze(&self) -> HaarSpectrum {
        haar_analyze(self)
    }

    /// `⟨f⟩_I` for every interval, in heap order.
    pub fn interval_averages(&self) -> Vec<f64> {
        let grid = self.grid;
        let mut sums = vec![0.0; grid.interval_count()];
        let first_leaf = grid.leaf_count() - 1;
        sums[first_leaf..].copy_from_slice(&self.values);
        for idx in (0..first_leaf).rev() {
            sums[idx] = sums[2 * idx + 1] + sums[2 * idx + 2];
        }
        for (idx, s) in sums.iter_mut().enumerate() {
            let level = DyadicInterval::from_index(idx).level;
            *s /= (1usize << (grid.depth - level)) as f64;
        }
        sums
    }
}

/// Mean plus one Haar coefficient per interval of level `0..D`.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarSpectrum {
    grid: DyadicGrid,
    mean: f64,
    coeffs: Vec<f64>,
}

impl HaarSpectrum {
    pub fn zeros(grid: DyadicGrid) -> Self {
        Self { grid, mean: 0.0, coeffs: vec![0.0; grid.haar_count()] }
    }

    pub fn grid(&self) -> DyadicGrid {
        self.grid
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn set_mean(&mut self, mean: f64) {
        self.mean = mean;
    }

    /// Coefficient of `h_I`; zero for leaves, which carry none.
    pub fn coeff(&self, interval: DyadicInterval) -> f64 {
        self.coeffs.get(interval.index()).copied().unwrap_or(0.0)
    }

    /// Panics if `level(I) >= D`.
    pub fn set_coeff(&mut self, interval: DyadicInterval, value: f64) {
        assert!(interval.level < self.grid.depth, "no Haar coefficient at {interval}");
        self.coeffs[interval.index()] = value;
    }

    pub fn add_to_coeff(&mut self, interval: DyadicInterval, value: f64) {
        assert!(interval.level < self.grid.depth, "no Haar coefficient at {interval}");
        self.coeffs[interval.index()] += value;
    }

    /// Coefficients in heap order (see [`DyadicInterval::index`]).
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn iter(&self) -> impl Iterator<Item = (DyadicInterval, f64)> + '_ {
        self.coeffs.iter().enumerate().map(|(i, &c)| (DyadicInterval::from_index(i), c))
    }

    /// `Σ_I coeff(I)^2`, mean excluded.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// Deepest level holding a coefficient with `|c| > tol`.
    pub fn finest_level_above(&self, tol: f64) -> Option<u32> {
        self.coeffs
            .iter()
            .rposition(|c| c.abs() > tol)
            .map(|i| DyadicInterval::from_index(i).level)
    }

    /// Copy with every coefficient below `max_level` set to zero.
    pub fn truncated(&self, max_level: u32) -> HaarSpectrum {
        let mut out = self.clone();
        if max_level + 1 < self.grid.depth {
            let first = (1usize << (max_level + 1)) - 1;
            out.coeffs[first..].fill(0.0);
        }
        out
    }

    pub fn scale(&self, c: f64) -> HaarSpectrum {
        Self {
            grid: self.grid,
            mean: c * self.mean,
            coeffs: self.coeffs.iter().map(|v| c * v).collect(),
        }
    }

    pub fn synthesize(&self) -> StepFunction {
        haar_synthesize(self)
    }
}

// sqrt(2^level) = |I|^{-1/2}
fn inverse_sqrt_lengths(depth: u32) -> Vec<f64> {
    (0..=depth).map(|l| 2f64.powf(l as f64 / 2.0)).collect()
}

/// Exact Haar analysis: `mean = ∫f`, `coeff(I) = ⟨f, h_I⟩`, both as leaf sums.
pub fn haar_analyze(f: &StepFunction) -> HaarSpectrum {
    let grid = f.grid;
    let depth = grid.depth;
    let scale = inverse_sqrt_lengths(depth);
    let mut coeffs = vec![0.0; grid.haar_count()];
    let width = grid.leaf_width();
    let mut masses: Vec<f64> = f.values.iter().map(|v| v * width).collect();
    for level in (0..depth).rev() {
        let count = 1usize << level;
        let offset = count - 1;
        let mut coarser = Vec::with_capacity(count);
        for p in 0..count {
            let (left, right) = (masses[2 * p], masses[2 * p + 1]);
            coeffs[offset + p] = (right - left) * scale[level as usize];
            coarser.push(left + right);
        }
        masses = coarser;
    }
    HaarSpectrum { grid, mean: masses[0], coeffs }
}

/// `f = mean + Σ_I coeff(I) h_I`.
pub fn haar_synthesize(s: &HaarSpectrum) -> StepFunction {
    let grid = s.grid;
    let scale = inverse_sqrt_lengths(grid.depth);
    let mut averages = vec![s.mean];
    for level in 0..grid.depth {
        let offset = (1usize << level) - 1;
        let h = scale[level as usize];
        averages = averages
            .iter()
            .enumerate()
            .flat_map(|(p, &a)| {
                let step = s.coeffs[offset + p] * h;
                [a - step, a + step]
            })
            .collect();
    }
    StepFunction { grid, values: averages }
}

/// Dyadic square function `(Σ_I f̂(I)^2 1_I / |I|)^{1/2}`, mean excluded.
pub fn square_function(f: &StepFunction) -> StepFunction {
    square_function_of(&haar_analyze(f))
}

pub fn square_function_of(s: &HaarSpectrum) -> StepFunction {
    let grid = s.grid;
    let mut sums = vec![0.0];
    for level in 0..grid.depth {
        let offset = (1usize << level) - 1;
        let inv_len = 2f64.powi(level as i32);
        sums = sums
            .iter()
            .enumerate()
            .flat_map(|(p, &acc)| {
                let next = acc + s.coeffs[offset + p].powi(2) * inv_len;
                [next, next]
            })
            .collect();
    }
    StepFunction { grid, values: sums.into_iter().map(f64::sqrt).collect() }
}

/// Leaf values on `root` of `Σ_{I ⊆ root, level(I) < D} coeff(I) h_I`.
///
/// Returns `2^{D - level(root)}` values, the leaves of `root` in order.
pub(crate) fn synthesize_within(
    grid: DyadicGrid,
    root: DyadicInterval,
    coeff: impl Fn(DyadicInterval) -> f64,
) -> Vec<f64> {
    let mut averages = vec![0.0];
    for level in root.level..grid.depth {
        let shift = level - root.level;
        let first = root.position << shift;
        let h = 2f64.powf(level as f64 / 2.0);
        averages = averages
            .iter()
            .enumerate()
            .flat_map(|(k, &a)| {
                let step = coeff(DyadicInterval { level, position: first + k }) * h;
                [a - step, a + step]
            })
            .collect();
    }
    averages
}

/// For each leaf of `root`, `Σ term(I)` over the intervals `I` with
/// `leaf ⊆ I ⊆ root` and `level(I) < D`.
pub(crate) fn path_sums_within(
    grid: DyadicGrid,
    root: DyadicInterval,
    term: impl Fn(DyadicInterval) -> f64,
) -> Vec<f64> {
    let mut sums = vec![0.0];
    for level in root.level..grid.depth {
        let shift = level - root.level;
        let first = root.position << shift;
        sums = sums
            .iter()
            .enumerate()
            .flat_map(|(k, &acc)| {
                let next = acc + term(DyadicInterval { level, position: first + k });
                [next, next]
            })
            .collect();
    }
    sums
}
