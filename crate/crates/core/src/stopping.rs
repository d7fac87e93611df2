//! Stopping times: maximal intervals where a quantity deviates, packing
//! constants, and corona iteration.
//!
//! A rule sees the anchoring root explicitly, so re-running it inside a
//! stopping interval re-anchors every threshold. Rules with a path condition
//! get the running sum `Σ_{I ⊆ I' ⊆ root} increment(I')` accumulated along
//! the depth-first path.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bmo::bloom_b2;
use crate::dyadic::{DyadicGrid, DyadicInterval, HaarSpectrum, StepFunction};
use crate::error::{Error, Result};
use crate::weights::{rho_weight, Weight};

pub trait StoppingRule: Sync {
    /// Contribution of `interval` to the running path sum.
    fn path_increment(&self, _interval: DyadicInterval) -> f64 {
        0.0
    }

    fn stops(&self, root: DyadicInterval, interval: DyadicInterval, path_sum: f64) -> bool;
}

/// Wraps a plain predicate `(root, interval) -> bool`.
pub struct Predicate<F>(pub F);

impl<F: Fn(DyadicInterval, DyadicInterval) -> bool + Sync> StoppingRule for Predicate<F> {
    fn stops(&self, root: DyadicInterval, interval: DyadicInterval, _path_sum: f64) -> bool {
        (self.0)(root, interval)
    }
}

fn deviates(w: &Weight, root: DyadicInterval, interval: DyadicInterval, c: f64) -> bool {
    let (a, a0) = (w.average(interval), w.average(root));
    a > c * a0 || a < a0 / c
}

/// `⟨λ⟩_I > C⟨λ⟩_{I0}` or `⟨λ⟩_I < C^{-1}⟨λ⟩_{I0}`, optionally or-ed with the
/// same test for `μ^{-1}`.
#[derive(Debug, Clone, Copy)]
pub struct Deviation<'a> {
    pub lambda: &'a Weight,
    pub mu_inv: Option<&'a Weight>,
    pub c: f64,
}

impl<'a> Deviation<'a> {
    pub fn new(lambda: &'a Weight, c: f64) -> Self {
        Self { lambda, mu_inv: None, c }
    }

    pub fn with_mu_inv(mut self, mu_inv: &'a Weight) -> Self {
        self.mu_inv = Some(mu_inv);
        self
    }
}

impl StoppingRule for Deviation<'_> {
    fn stops(&self, root: DyadicInterval, interval: DyadicInterval, _path_sum: f64) -> bool {
        deviates(self.lambda, root, interval, self.c)
            || self.mu_inv.is_some_and(|m| deviates(m, root, interval, self.c))
    }
}

/// Stop when `⟨μ^{-1}⟩_I > C⟨μ^{-1}⟩_{I0}`, `⟨ρ⟩_I > C⟨ρ⟩_{I0}`, or
/// `Σ_{I ⊆ I' ⊆ I0} b̂(I')^2 / |I'| > (C_b ⟨ρ⟩_{I0})^2`.
#[derive(Debug, Clone, Copy)]
pub struct ThreeCondition<'a> {
    pub mu_inv: &'a Weight,
    pub rho: &'a Weight,
    pub spectrum: &'a HaarSpectrum,
    pub c: f64,
    pub c_b: f64,
}

impl ThreeCondition<'_> {
    /// Which of the three conditions hold, in order.
    pub fn conditions(&self, root: DyadicInterval, interval: DyadicInterval, path_sum: f64) -> [bool; 3] {
        let rho0 = self.rho.average(root);
        [
            self.mu_inv.average(interval) > self.c * self.mu_inv.average(root),
            self.rho.average(interval) > self.c * rho0,
            path_sum > (self.c_b * rho0).powi(2),
        ]
    }
}

impl StoppingRule for ThreeCondition<'_> {
    fn path_increment(&self, interval: DyadicInterval) -> f64 {
        self.spectrum.coeff(interval).powi(2) / interval.length()
    }

    fn stops(&self, root: DyadicInterval, interval: DyadicInterval, path_sum: f64) -> bool {
        self.conditions(root, interval, path_sum).contains(&true)
    }
}

/// `⟨μ^{-1}⟩_S ≥ factor · ⟨μ^{-1}⟩_{I0}`, with factor 4 in the standard use.
#[derive(Debug, Clone, Copy)]
pub struct MuInvDeviation<'a> {
    pub mu_inv: &'a Weight,
    pub factor: f64,
}

impl<'a> MuInvDeviation<'a> {
    pub fn new(mu_inv: &'a Weight) -> Self {
        Self { mu_inv, factor: 4.0 }
    }
}

impl StoppingRule for MuInvDeviation<'_> {
    fn stops(&self, root: DyadicInterval, interval: DyadicInterval, _path_sum: f64) -> bool {
        self.mu_inv.average(interval) >= self.factor * self.mu_inv.average(root)
    }
}

/// `Σ_{S ⊆ I ⊆ I0} b̂(I)^2 / |I| ≥ C · B2^2 · ⟨ρ⟩_{I0}`.
#[derive(Debug, Clone, Copy)]
pub struct SquareSum<'a> {
    pub spectrum: &'a HaarSpectrum,
    pub rho: &'a Weight,
    pub b2_squared: f64,
    pub c: f64,
}

impl StoppingRule for SquareSum<'_> {
    fn path_increment(&self, interval: DyadicInterval) -> f64 {
        self.spectrum.coeff(interval).powi(2) / interval.length()
    }

    fn stops(&self, root: DyadicInterval, _interval: DyadicInterval, path_sum: f64) -> bool {
        path_sum >= self.c * self.b2_squared * self.rho.average(root)
    }
}

/// Maximal stopping intervals strictly inside `root`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingFamily {
    pub grid: DyadicGrid,
    pub root: DyadicInterval,
    pub generation: usize,
    /// Left to right.
    pub members: Vec<DyadicInterval>,
}

impl StoppingFamily {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `ℐ`: the root and every interval below it not contained in a member,
    /// down to the leaves.
    pub fn unstopped(&self) -> impl Iterator<Item = DyadicInterval> + '_ {
        let depth = self.grid.depth();
        let mut stack = vec![self.root];
        std::iter::from_fn(move || {
            while let Some(i) = stack.pop() {
                if i != self.root && self.members.binary_search_by(|m| order(*m).cmp(&order(i))).is_ok() {
                    continue;
                }
                if i.level() < depth {
                    stack.push(i.right_child());
                    stack.push(i.left_child());
                }
                return Some(i);
            }
            None
        })
    }

    /// Structural checks: containment, disjointness, ordering.
    pub fn validate(&self) -> Result<()> {
        for m in &self.members {
            if !self.root.contains(*m) || *m == self.root {
                return Err(Error::InvalidSpec(format!("member {m} not strictly inside {}", self.root)));
            }
        }
        for pair in self.members.windows(2) {
            if !pair[0].is_disjoint(pair[1]) || pair[0].start() >= pair[1].start() {
                return Err(Error::InvalidSpec(format!("members {} and {} overlap", pair[0], pair[1])));
            }
        }
        Ok(())
    }
}

// left-to-right order of disjoint intervals
fn order(i: DyadicInterval) -> (u64, u32) {
    ((i.start() * (1u64 << 32) as f64) as u64, i.level())
}

/// Depth-first from the children of `root`; an interval joins the family when
/// the rule fires and no ancestor below `root` already did.
pub fn maximal_stopping_intervals(grid: DyadicGrid, root: DyadicInterval, rule: &dyn StoppingRule) -> StoppingFamily {
    let depth = grid.depth();
    let mut members = Vec::new();
    let base = rule.path_increment(root);
    let mut stack = Vec::new();
    if root.level() < depth {
        stack.push((root.right_child(), base));
        stack.push((root.left_child(), base));
    }
    while let Some((i, above)) = stack.pop() {
        let sum = above + rule.path_increment(i);
        if rule.stops(root, i, sum) {
            members.push(i);
        } else if i.level() < depth {
            stack.push((i.right_child(), sum));
            stack.push((i.left_child(), sum));
        }
    }
    StoppingFamily { grid, root, generation: 0, members }
}

/// `Σ_{S} w(S) / w(root)`.
pub fn packing_ratio(family: &StoppingFamily, w: &Weight) -> f64 {
    family.members.iter().map(|s| w.mass(*s)).sum::<f64>() / w.mass(family.root)
}

/// Geometric search grid `C_k = 1.1^k`, `k ≥ 1`, `C_k ≤ 2^20`.
pub const PACKING_GRID_FACTOR: f64 = 1.1;
pub const PACKING_GRID_MAX: f64 = 1_048_576.0;
pub const DEFAULT_PACKING_TARGET: f64 = 0.5;

fn grid_len() -> i32 {
    (PACKING_GRID_MAX.ln() / PACKING_GRID_FACTOR.ln()).floor() as i32
}

pub fn packing_grid_value(k: i32) -> f64 {
    PACKING_GRID_FACTOR.powi(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingSearch {
    pub constant: f64,
    pub ratio: f64,
    pub family: StoppingFamily,
}

/// Smallest grid `C` whose family packs to at most `target`. Rules must stop
/// less as `C` grows, which makes the ratio monotone and the search binary.
pub fn minimal_packing_constant<R, F>(
    grid: DyadicGrid,
    root: DyadicInterval,
    rule_at: F,
    w: &Weight,
    target: f64,
) -> Result<PackingSearch>
where
    R: StoppingRule,
    F: Fn(f64) -> R,
{
    let eval = |k: i32| {
        let c = packing_grid_value(k);
        let family = maximal_stopping_intervals(grid, root, &rule_at(c));
        let ratio = packing_ratio(&family, w);
        PackingSearch { constant: c, ratio, family }
    };
    let (mut lo, mut hi) = (1, grid_len());
    let top = eval(hi);
    if top.ratio > target {
        return Err(Error::PackingUnattainable { target, best_ratio: top.ratio });
    }
    let mut best = top;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        let probe = eval(mid);
        if probe.ratio <= target {
            hi = mid;
            best = probe;
        } else {
            lo = mid + 1;
        }
    }
    if best.constant != packing_grid_value(lo) {
        best = eval(lo);
    }
    Ok(best)
}

/// Largest minimal packing constant over every root of the grid, so that the
/// packing bound holds inside every stopping interval at once.
pub fn uniform_packing_constant<R, F>(grid: DyadicGrid, rule_at: F, w: &Weight, target: f64) -> Result<f64>
where
    R: StoppingRule,
    F: Fn(f64) -> R,
{
    let mut c: f64 = packing_grid_value(1);
    for root in grid.haar_intervals() {
        c = c.max(minimal_packing_constant(grid, root, &rule_at, w, target)?.constant);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassRow {
    pub generation: usize,
    pub intervals: usize,
    pub mass: f64,
    /// Mass over the root mass.
    pub fraction: f64,
}

/// Generation `g + 1` consists of the stopping families built inside each
/// member of generation `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corona {
    pub root: DyadicInterval,
    pub generations: Vec<Vec<StoppingFamily>>,
}

impl Corona {
    /// Row 0 is the root itself; row `g ≥ 1` holds the members of generation `g - 1`.
    pub fn mass_table(&self, w: &Weight) -> Vec<MassRow> {
        let total = w.mass(self.root);
        let mut rows = vec![MassRow { generation: 0, intervals: 1, mass: total, fraction: 1.0 }];
        for (g, families) in self.generations.iter().enumerate() {
            let members = families.iter().flat_map(|f| f.members.iter());
            let (count, mass) = members.fold((0, 0.0), |(n, m), s| (n + 1, m + w.mass(*s)));
            if count == 0 {
                break;
            }
            rows.push(MassRow { generation: g + 1, intervals: count, mass, fraction: mass / total });
        }
        rows
    }

    /// `mass(g) ≤ 2^{-g} mass(root)` for every row, with relative slack `tol`.
    pub fn decays_geometrically(&self, w: &Weight, tol: f64) -> bool {
        self.mass_table(w)
            .iter()
            .all(|r| r.fraction <= 0.5f64.powi(r.generation as i32) * (1.0 + tol))
    }
}

pub fn corona_generations(
    grid: DyadicGrid,
    root: DyadicInterval,
    rule: &dyn StoppingRule,
    max_generations: usize,
) -> Corona {
    let mut generations = vec![vec![maximal_stopping_intervals(grid, root, rule)]];
    while generations.len() < max_generations {
        let last = generations.last().expect("nonempty");
        let next: Vec<StoppingFamily> = last
            .iter()
            .flat_map(|f| f.members.iter())
            .map(|s| StoppingFamily { generation: generations.len(), ..maximal_stopping_intervals(grid, *s, rule) })
            .collect();
        if next.is_empty() {
            break;
        }
        generations.push(next);
    }
    Corona { root, generations }
}

pub fn write_mass_table_csv<W: Write>(rows: &[MassRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::InvalidSpec(e.to_string()))
}

/// `Σ_{I' ∈ ℐ} b̂(I')^2` divided by `B2^2 |I0| / (⟨μ^{-1}⟩_{I0} ⟨λ⟩_{I0})`:
/// the measured constant of the unstopped-sum estimate. Zero when `b` is
/// constant.
pub fn unstopped_sum_ratio(family: &StoppingFamily, b: &StepFunction, mu: &Weight, lambda: &Weight) -> Result<f64> {
    let s = b.analyze();
    let sum: f64 = family.unstopped().map(|i| s.coeff(i).powi(2)).sum();
    if sum == 0.0 {
        return Ok(0.0);
    }
    let b2 = bloom_b2(b, mu, lambda)?.value;
    let root = family.root;
    let mu_inv = mu.reciprocal();
    Ok(sum * mu_inv.average(root) * lambda.average(root) / (b2 * b2 * root.length()))
}

/// The three-condition construction at `(C, C_b)` for `(b, μ, λ)`, anchored at
/// `root`; returns the family and its unstopped-sum ratio.
pub fn three_condition_audit(
    b: &StepFunction,
    mu: &Weight,
    lambda: &Weight,
    root: DyadicInterval,
    c: f64,
    c_b: f64,
) -> Result<(StoppingFamily, f64)> {
    let mu_inv = mu.reciprocal();
    let rho = rho_weight(mu, lambda)?;
    let spectrum = b.analyze();
    let rule = ThreeCondition { mu_inv: &mu_inv, rho: &rho, spectrum: &spectrum, c, c_b };
    let family = maximal_stopping_intervals(b.grid(), root, &rule);
    let ratio = unstopped_sum_ratio(&family, b, mu, lambda)?;
    Ok((family, ratio))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{generate_weight, EnsembleSpec};

    fn grid(d: u32) -> DyadicGrid {
        DyadicGrid::new(d).unwrap()
    }

    fn steps() -> Weight {
        Weight::from_values(grid(2), vec![4.0, 4.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn never_stopping_leaves_everything_unstopped() {
        let f = maximal_stopping_intervals(grid(3), DyadicInterval::ROOT, &Predicate(|_, _| false));
        assert!(f.is_empty());
        assert_eq!(f.unstopped().count(), 15);
    }

    #[test]
    fn constant_weight_never_deviates() {
        let w = Weight::constant(grid(4), 3.0).unwrap();
        let f = maximal_stopping_intervals(grid(4), DyadicInterval::ROOT, &Deviation::new(&w, 2.0));
        assert!(f.is_empty());
    }

    #[test]
    fn one_sided_threshold_example() {
        let w = steps();
        let rule = Predicate(|root, i| w.average(i) > 1.2 * w.average(root));
        let f = maximal_stopping_intervals(grid(2), DyadicInterval::ROOT, &rule);
        assert_eq!(f.members, vec![DyadicInterval::new(1, 0)]);
        assert!((packing_ratio(&f, &w) - 0.8).abs() < 1e-15);
        let lebesgue = Weight::constant(grid(2), 1.0).unwrap();
        assert_eq!(packing_ratio(&f, &lebesgue), 0.5);
        assert_eq!(f.unstopped().collect::<Vec<_>>(), vec![
            DyadicInterval::ROOT,
            DyadicInterval::new(1, 1),
            DyadicInterval::new(2, 2),
            DyadicInterval::new(2, 3)
        ]);
    }

    #[test]
    fn packing_search_on_two_steps() {
        let w = steps();
        let found = minimal_packing_constant(grid(2), DyadicInterval::ROOT, |c| Deviation::new(&w, c), &w, 0.5).unwrap();
        assert!((found.constant - 1.1f64.powi(5)).abs() < 1e-12);
        assert!((found.ratio - 0.2).abs() < 1e-15);
        assert_eq!(found.family.members, vec![DyadicInterval::new(1, 1)]);
    }

    #[test]
    fn packing_search_for_lebesgue() {
        let w = Weight::constant(grid(5), 1.0).unwrap();
        let found = minimal_packing_constant(grid(5), DyadicInterval::ROOT, |c| Deviation::new(&w, c), &w, 0.5).unwrap();
        assert_eq!(found.constant, 1.1);
        assert_eq!(found.ratio, 0.0);
    }

    #[test]
    fn unattainable_target() {
        let w = steps();
        let err = minimal_packing_constant(grid(2), DyadicInterval::ROOT, |_| Predicate(|_, _| true), &w, 0.5);
        assert_eq!(err.unwrap_err(), Error::PackingUnattainable { target: 0.5, best_ratio: 1.0 });
    }

    #[test]
    fn corona_trivial_cases() {
        let c = corona_generations(grid(3), DyadicInterval::ROOT, &Predicate(|_, _| false), 10);
        assert_eq!(c.generations.len(), 1);
        assert!(c.generations[0][0].is_empty());
        let w = Weight::constant(grid(3), 1.0).unwrap();
        let c = corona_generations(grid(3), DyadicInterval::ROOT, &Deviation::new(&w, 1.5), 10);
        assert_eq!(c.mass_table(&w).len(), 1);
    }

    #[test]
    fn corona_decays_at_uniform_constant() {
        let d = 8;
        let w = generate_weight(&EnsembleSpec::cascade(d, 0.6, 5)).unwrap();
        let c = uniform_packing_constant(grid(d), |c| Deviation::new(&w, c), &w, 0.5).unwrap();
        let corona = corona_generations(grid(d), DyadicInterval::ROOT, &Deviation::new(&w, c), 64);
        assert!(corona.decays_geometrically(&w, 1e-12));
        for fam in corona.generations.iter().flatten() {
            fam.validate().unwrap();
            assert!(packing_ratio(fam, &w) <= 0.5);
        }
    }

    #[test]
    fn path_sum_rule_matches_direct_sums() {
        let d = 5;
        let mu = generate_weight(&EnsembleSpec::cascade(d, 0.4, 1)).unwrap();
        let lambda = generate_weight(&EnsembleSpec::cascade(d, 0.4, 2)).unwrap();
        let b = crate::weights::generate_symbol(&EnsembleSpec::log_symbol(d, 0.5, 3)).unwrap();
        let s = b.analyze();
        let rho = rho_weight(&mu, &lambda).unwrap();
        let rule = SquareSum { spectrum: &s, rho: &rho, b2_squared: 1.0, c: 0.3 };
        let f = maximal_stopping_intervals(grid(d), DyadicInterval::ROOT, &rule);
        let direct = |i: DyadicInterval| -> f64 {
            let mut sum = 0.0;
            let mut cur = Some(i);
            while let Some(j) = cur {
                sum += s.coeff(j).powi(2) / j.length();
                cur = j.parent();
            }
            sum
        };
        for m in &f.members {
            assert!(direct(*m) >= 0.3 * rho.average(DyadicInterval::ROOT));
        }
        for i in f.unstopped().skip(1) {
            assert!(direct(i) < 0.3 * rho.average(DyadicInterval::ROOT));
        }
    }

    #[test]
    fn family_round_trips_through_json() {
        let w = steps();
        let f = maximal_stopping_intervals(grid(2), DyadicInterval::ROOT, &Deviation::new(&w, 1.2));
        let json = serde_json::to_string(&f).unwrap();
        assert!(json.contains("\"members\":[[1,0],[1,1]]"), "{json}");
        assert_eq!(serde_json::from_str::<StoppingFamily>(&json).unwrap(), f);
    }

    #[test]
    fn mass_table_csv() {
        let rows = [MassRow { generation: 0, intervals: 1, mass: 2.5, fraction: 1.0 }];
        let mut buf = Vec::new();
        write_mass_table_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "generation,intervals,mass,fraction\n0,1,2.5,1.0\n");
    }
}
