//! Positive step weights, their A2 characteristic, and seeded ensembles of
//! weights and symbols.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicGrid, DyadicInterval, HaarSpectrum, StepFunction, MAX_DEPTH};
use crate::error::{Error, Result};

/// A strictly positive step function with every interval mass `w(I)` cached.
/// Serializes as its step function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepFunction", into = "StepFunction")]
pub struct Weight {
    base: StepFunction,
    masses: Vec<f64>,
}

impl TryFrom<StepFunction> for Weight {
    type Error = Error;

    fn try_from(base: StepFunction) -> Result<Self> {
        Weight::new(base)
    }
}

impl From<Weight> for StepFunction {
    fn from(w: Weight) -> Self {
        w.base
    }
}

impl Weight {
    pub fn new(base: StepFunction) -> Result<Self> {
        if let Some((index, &value)) = base.values().iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(Error::NonPositiveWeight { index, value });
        }
        let masses = interval_masses(&base);
        Ok(Self { base, masses })
    }

    pub fn from_values(grid: DyadicGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(StepFunction::new(grid, values)?)
    }

    pub fn constant(grid: DyadicGrid, value: f64) -> Result<Self> {
        Self::new(StepFunction::constant(grid, value))
    }

    pub fn grid(&self) -> DyadicGrid {
        self.base.grid()
    }

    pub fn function(&self) -> &StepFunction {
        &self.base
    }

    pub fn values(&self) -> &[f64] {
        self.base.values()
    }

    /// `w(I)`.
    pub fn mass(&self, interval: DyadicInterval) -> f64 {
        self.masses[interval.index()]
    }

    /// `⟨w⟩_I = w(I) / |I|`.
    pub fn average(&self, interval: DyadicInterval) -> f64 {
        self.mass(interval) / interval.length()
    }

    /// `E_I^w(f) = w(I)^{-1} ∫_I f w`.
    pub fn expectation(&self, interval: DyadicInterval, f: &StepFunction) -> Result<f64> {
        self.grid().ensure_same(f.grid())?;
        let range = interval.leaf_range(self.grid().depth());
        let num: f64 = f.values()[range.clone()].iter().zip(&self.values()[range]).map(|(a, b)| a * b).sum();
        Ok(num * self.grid().leaf_width() / self.mass(interval))
    }

    /// The weight `w^{-1}`.
    pub fn reciprocal(&self) -> Weight {
        let base = self.base.map(f64::recip);
        let masses = interval_masses(&base);
        Weight { base, masses }
    }

    /// `∫ f^2 w`.
    pub fn norm_sq(&self, f: &StepFunction) -> Result<f64> {
        self.grid().ensure_same(f.grid())?;
        let s: f64 = f.values().iter().zip(self.values()).map(|(v, w)| v * v * w).sum();
        Ok(s * self.grid().leaf_width())
    }

    /// `‖f‖_{L^2(w)}`.
    pub fn norm(&self, f: &StepFunction) -> Result<f64> {
        self.norm_sq(f).map(f64::sqrt)
    }

    pub fn a2_characteristic(&self) -> f64 {
        self.a2_with_argmax().0
    }

    /// `max_I ⟨w⟩_I ⟨w^{-1}⟩_I` over every dyadic interval, with the first
    /// interval (breadth-first) attaining it.
    pub fn a2_with_argmax(&self) -> (f64, DyadicInterval) {
        let inverse = self.reciprocal();
        let mut best = (f64::NEG_INFINITY, DyadicInterval::ROOT);
        for i in self.grid().intervals() {
            let v = self.average(i) * inverse.average(i);
            if v > best.0 {
                best = (v, i);
            }
        }
        best
    }
}

fn interval_masses(f: &StepFunction) -> Vec<f64> {
    let grid = f.grid();
    let mut masses = vec![0.0; grid.interval_count()];
    let first_leaf = grid.leaf_count() - 1;
    let width = grid.leaf_width();
    for (k, v) in f.values().iter().enumerate() {
        masses[first_leaf + k] = v * width;
    }
    for idx in (0..first_leaf).rev() {
        masses[idx] = masses[2 * idx + 1] + masses[2 * idx + 2];
    }
    masses
}

pub fn interval_average(w: &Weight, interval: DyadicInterval) -> f64 {
    w.average(interval)
}

pub fn interval_mass(w: &Weight, interval: DyadicInterval) -> f64 {
    w.mass(interval)
}

pub fn weighted_expectation(w: &Weight, interval: DyadicInterval, f: &StepFunction) -> Result<f64> {
    w.expectation(interval, f)
}

pub fn a2_characteristic(w: &Weight) -> f64 {
    w.a2_characteristic()
}

/// `ρ = (μ / λ)^{1/2}` leafwise.
pub fn rho_weight(mu: &Weight, lambda: &Weight) -> Result<Weight> {
    mu.grid().ensure_same(lambda.grid())?;
    let values = mu.values().iter().zip(lambda.values()).map(|(m, l)| (m / l).sqrt()).collect();
    Weight::from_values(mu.grid(), values)
}

/// Family of generated weights or symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnsembleKind {
    /// `w ≡ value`.
    Constant {
        #[serde(default = "one")]
        value: f64,
    },
    /// Literal pattern of `2^k <= 2^D` values, each spread over one
    /// level-`k` interval; `[a, b]` is `a` on the left half, `b` on the right.
    TwoValue { values: Vec<f64> },
    /// Leaf averages of `|x - x0|^alpha`, `alpha ∈ (-1, 1)`.
    Power {
        alpha: f64,
        #[serde(default = "half")]
        x0: f64,
    },
    /// Balanced multiplicative cascade with amplitude `delta ∈ (0, 1)`.
    Cascade { delta: f64 },
    /// `b = log w` for a cascade weight `w` of amplitude `delta`.
    LogSymbol { delta: f64 },
    /// `b = Σ c_I h_I` over a random interval set: each interval is kept with
    /// probability `sparsity`, `c_I = amplitude · u · |I|^{1/2}`, `u ~ U[-1, 1]`.
    HaarSparseSymbol {
        sparsity: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `b = amplitude · h_I`.
    HaarSymbol {
        #[serde(default = "root")]
        interval: DyadicInterval,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn root() -> DyadicInterval {
    DyadicInterval::ROOT
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn default_retries() -> u32 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    #[serde(flatten)]
    pub kind: EnsembleKind,
    #[serde(default)]
    pub seed: u64,
    /// Zero (unset) is allowed in configs that supply the depth themselves.
    #[serde(default)]
    pub depth: u32,
    /// Accept only weights with `[w]_{A2}` in `[low, high]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2_range: Option<[f64; 2]>,
    /// Symbols only: drop Haar coefficients below this level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_level: Option<u32>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, depth: u32, seed: u64) -> Self {
        Self { kind, seed, depth, a2_range: None, max_level: None, max_retries: default_retries() }
    }

    pub fn constant(depth: u32) -> Self {
        Self::new(EnsembleKind::Constant { value: 1.0 }, depth, 0)
    }

    pub fn power(depth: u32, alpha: f64) -> Self {
        Self::new(EnsembleKind::Power { alpha, x0: 0.5 }, depth, 0)
    }

    pub fn cascade(depth: u32, delta: f64, seed: u64) -> Self {
        Self::new(EnsembleKind::Cascade { delta }, depth, seed)
    }

    pub fn log_symbol(depth: u32, delta: f64, seed: u64) -> Self {
        Self::new(EnsembleKind::LogSymbol { delta }, depth, seed)
    }

    pub fn haar_sparse(depth: u32, sparsity: f64, seed: u64) -> Self {
        Self::new(EnsembleKind::HaarSparseSymbol { sparsity, amplitude: 1.0 }, depth, seed)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_depth(mut self, depth: u32) -> Self {
        self.depth = depth;
        self
    }

    pub fn with_a2_range(mut self, low: f64, high: f64) -> Self {
        self.a2_range = Some([low, high]);
        self
    }

    pub fn with_max_level(mut self, level: u32) -> Self {
        self.max_level = Some(level);
        self
    }

    pub fn is_symbol_kind(&self) -> bool {
        matches!(
            self.kind,
            EnsembleKind::LogSymbol { .. } | EnsembleKind::HaarSparseSymbol { .. } | EnsembleKind::HaarSymbol { .. }
        )
    }

    pub fn validate(&self) -> Result<DyadicGrid> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if !(1..=MAX_DEPTH).contains(&self.depth) {
            return bad(format!("depth {} outside 1..={MAX_DEPTH}", self.depth));
        }
        match &self.kind {
            EnsembleKind::Constant { value } if !(value.is_finite() && *value > 0.0) => {
                return bad(format!("constant value {value} must be positive"));
            }
            EnsembleKind::TwoValue { values } => {
                let n = values.len();
                if n == 0 || !n.is_power_of_two() || n > 1usize << self.depth {
                    return bad(format!("{n} literal values do not tile a depth-{} grid", self.depth));
                }
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad("literal values must be positive".into());
                }
            }
            EnsembleKind::Power { alpha, x0 } => {
                if !(*alpha > -1.0 && *alpha < 1.0) {
                    return bad(format!("power exponent {alpha} outside (-1, 1)"));
                }
                if !(0.0..=1.0).contains(x0) {
                    return bad(format!("power center {x0} outside [0, 1]"));
                }
            }
            EnsembleKind::Cascade { delta } | EnsembleKind::LogSymbol { delta } => {
                if !(*delta > 0.0 && *delta < 1.0) {
                    return bad(format!("cascade amplitude {delta} outside (0, 1)"));
                }
            }
            EnsembleKind::HaarSparseSymbol { sparsity, amplitude } => {
                if !(*sparsity > 0.0 && *sparsity <= 1.0) {
                    return bad(format!("sparsity {sparsity} outside (0, 1]"));
                }
                if !amplitude.is_finite() {
                    return bad("amplitude must be finite".into());
                }
            }
            EnsembleKind::HaarSymbol { interval, amplitude } => {
                if interval.level() >= self.depth {
                    return bad(format!("no Haar function on {interval} at depth {}", self.depth));
                }
                if !amplitude.is_finite() {
                    return bad("amplitude must be finite".into());
                }
            }
            _ => {}
        }
        if let Some([low, high]) = self.a2_range {
            if !(low <= high && high >= 1.0) {
                return bad(format!("A2 range [{low}, {high}] is empty"));
            }
        }
        if let Some(level) = self.max_level {
            if level >= self.depth {
                return bad(format!("max level {level} must be below depth {}", self.depth));
            }
        }
        DyadicGrid::new(self.depth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Generated {
    Weight(Weight),
    Symbol(StepFunction),
}

impl Generated {
    pub fn function(&self) -> &StepFunction {
        match self {
            Generated::Weight(w) => w.function(),
            Generated::Symbol(b) => b,
        }
    }
}

/// Deterministic in `spec`: same spec, bit-identical output.
pub fn generate(spec: &EnsembleSpec) -> Result<Generated> {
    if spec.is_symbol_kind() {
        generate_symbol(spec).map(Generated::Symbol)
    } else {
        generate_weight(spec).map(Generated::Weight)
    }
}

pub fn generate_weight(spec: &EnsembleSpec) -> Result<Weight> {
    let grid = spec.validate()?;
    if spec.is_symbol_kind() {
        return Err(Error::InvalidSpec(format!("{:?} produces a symbol, not a weight", spec.kind)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let attempts = if spec.a2_range.is_some() { spec.max_retries.max(1) } else { 1 };
    let mut last = f64::NAN;
    for _ in 0..attempts {
        let w = draw_weight(grid, &spec.kind, &mut rng)?;
        match spec.a2_range {
            None => return Ok(w),
            Some([low, high]) => {
                last = w.a2_characteristic();
                if (low..=high).contains(&last) {
                    return Ok(w);
                }
            }
        }
    }
    let [low, high] = spec.a2_range.expect("retry loop only repeats with a target");
    Err(Error::UnreachableA2Target { low, high, attempts, last })
}

/// Symbol kinds draw their own law; weight kinds yield the weight itself.
/// `max_level` truncates the Haar spectrum in both cases.
pub fn generate_symbol(spec: &EnsembleSpec) -> Result<StepFunction> {
    let grid = spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let b = match &spec.kind {
        EnsembleKind::LogSymbol { delta } => cascade(grid, *delta, &mut rng).map(f64::ln),
        EnsembleKind::HaarSparseSymbol { sparsity, amplitude } => {
            let max_level = spec.max_level.unwrap_or(grid.depth() - 1);
            haar_sparse(grid, *sparsity, *amplitude, max_level, &mut rng)
        }
        EnsembleKind::HaarSymbol { interval, amplitude } => StepFunction::haar(grid, *interval)?.scale(*amplitude),
        _ => generate_weight(spec)?.function().clone(),
    };
    Ok(match spec.max_level {
        Some(level) => b.analyze().truncated(level).synthesize(),
        None => b,
    })
}

fn draw_weight(grid: DyadicGrid, kind: &EnsembleKind, rng: &mut ChaCha8Rng) -> Result<Weight> {
    let f = match kind {
        EnsembleKind::Constant { value } => StepFunction::constant(grid, *value),
        EnsembleKind::TwoValue { values } => {
            let block = grid.leaf_count() / values.len();
            let leaves = values.iter().flat_map(|&v| std::iter::repeat_n(v, block)).collect();
            StepFunction::new(grid, leaves)?
        }
        EnsembleKind::Power { alpha, x0 } => power(grid, *alpha, *x0),
        EnsembleKind::Cascade { delta } => cascade(grid, *delta, rng),
        EnsembleKind::LogSymbol { .. } | EnsembleKind::HaarSparseSymbol { .. } | EnsembleKind::HaarSymbol { .. } => {
            unreachable!()
        }
    };
    Weight::new(f)
}

// exact leaf averages of |x - x0|^alpha through the antiderivative
fn power(grid: DyadicGrid, alpha: f64, x0: f64) -> StepFunction {
    let antiderivative = |x: f64| {
        let t = x - x0;
        t.signum() * t.abs().powf(alpha + 1.0) / (alpha + 1.0)
    };
    let width = grid.leaf_width();
    let values = (0..grid.leaf_count())
        .map(|k| {
            let leaf = grid.leaf(k);
            (antiderivative(leaf.end()) - antiderivative(leaf.start())) / width
        })
        .collect();
    StepFunction::from_raw(grid, values)
}

fn cascade(grid: DyadicGrid, delta: f64, rng: &mut ChaCha8Rng) -> StepFunction {
    let mut values = vec![1.0];
    for _ in 0..grid.depth() {
        values = values
            .iter()
            .flat_map(|&parent| {
                let u: f64 = rng.random();
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let step = sign * u * delta;
                [parent * (1.0 + step), parent * (1.0 - step)]
            })
            .collect();
    }
    StepFunction::from_raw(grid, values)
}

fn haar_sparse(grid: DyadicGrid, sparsity: f64, amplitude: f64, max_level: u32, rng: &mut ChaCha8Rng) -> StepFunction {
    let mut s = HaarSpectrum::zeros(grid);
    let mut any = false;
    for i in DyadicInterval::ROOT.descendants(max_level) {
        let keep = rng.random::<f64>() < sparsity;
        let u: f64 = rng.random_range(-1.0..=1.0);
        if keep {
            s.set_coeff(i, amplitude * u * i.length().sqrt());
            any = true;
        }
    }
    if !any {
        let count = (1usize << (max_level + 1)) - 1;
        let i = DyadicInterval::from_index(rng.random_range(0..count));
        s.set_coeff(i, amplitude * i.length().sqrt());
    }
    s.synthesize()
}
