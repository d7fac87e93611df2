//! Invariants of the library as property tests.

use dyadic_bloom::bmo::{bloom_b2, bmo_rho, neccon_functional, weighted_oscillation};
use dyadic_bloom::experiment::{parse_range, role_seed, trial_seed, ExperimentConfig, Role};
use dyadic_bloom::normest::{
    carleson_constant, power_iteration_norm, weighted_operator_norm, CarlesonSequence, LinearOperatorMatrix,
    MatrixFree, PowerOptions,
};
use dyadic_bloom::operators::{
    expansion_terms, haar_shift, haar_shift_transpose, paraproduct, paraproduct_adjoint, remainder_closed_form,
};
use dyadic_bloom::stopping::{maximal_stopping_intervals, packing_ratio, Deviation};
use dyadic_bloom::weights::{generate_weight, rho_weight, EnsembleSpec};
use dyadic_bloom::{DyadicGrid, DyadicInterval, HaarSpectrum, StepFunction, Weight};
use proptest::prelude::*;

fn grid(d: u32) -> DyadicGrid {
    DyadicGrid::new(d).unwrap()
}

fn function(d: u32) -> impl Strategy<Value = StepFunction> {
    prop::collection::vec(-10.0f64..10.0, 1usize << d).prop_map(move |v| StepFunction::new(grid(d), v).unwrap())
}

fn sized_function() -> impl Strategy<Value = StepFunction> {
    (1u32..=9).prop_flat_map(function)
}

fn weight(d: u32) -> impl Strategy<Value = Weight> {
    prop::collection::vec(0.05f64..20.0, 1usize << d).prop_map(move |v| Weight::from_values(grid(d), v).unwrap())
}

/// Coefficients up to level `D - 2` only.
fn admissible(d: u32) -> impl Strategy<Value = StepFunction> {
    let count = (1usize << (d - 1)) - 1;
    (-5.0f64..5.0, prop::collection::vec(-5.0f64..5.0, count)).prop_map(move |(mean, c)| {
        let mut s = HaarSpectrum::zeros(grid(d));
        s.set_mean(mean);
        for (k, v) in c.into_iter().enumerate() {
            s.set_coeff(DyadicInterval::from_index(k), v);
        }
        s.synthesize()
    })
}

fn pair_with<S: Strategy>(make: impl Fn(u32) -> S + Clone) -> impl Strategy<Value = (S::Value, S::Value)> {
    (2u32..=7).prop_flat_map(move |d| (make(d), make(d)))
}

fn scale(f: &StepFunction) -> f64 {
    f.max_abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interval_index_roundtrip(level in 0u32..20, pos in any::<usize>()) {
        let i = DyadicInterval::new(level, pos % (1usize << level));
        prop_assert_eq!(DyadicInterval::from_index(i.index()), i);
        let (l, r) = i.children();
        prop_assert_eq!(l.parent(), Some(i));
        prop_assert_eq!(r.parent(), Some(i));
        prop_assert!(i.contains(l) && i.contains(r) && l.is_disjoint(r));
        prop_assert!((l.length() + r.length() - i.length()).abs() == 0.0);
    }

    #[test]
    fn haar_roundtrip_and_parseval(f in sized_function()) {
        let s = f.analyze();
        prop_assert!(s.synthesize().max_abs_diff(&f).unwrap() <= 1e-12 * scale(&f));
        let norm = f.norm_l2().powi(2);
        prop_assert!((norm - s.mean().powi(2) - s.energy()).abs() <= 1e-12 * norm.max(1.0));
    }

    #[test]
    fn square_function_norm_is_mean_free_norm(f in sized_function()) {
        let s = f.analyze();
        let sq = dyadic_bloom::dyadic::square_function(&f).norm_l2().powi(2);
        prop_assert!((sq - s.energy()).abs() <= 1e-11 * s.energy().max(1.0));
    }

    #[test]
    fn product_decomposition((b, g) in pair_with(function)) {
        let mut sum = StepFunction::constant(b.grid(), b.integral() * g.integral());
        for p in [paraproduct(&b, &g).unwrap(), paraproduct(&g, &b).unwrap(), paraproduct_adjoint(&b, &g).unwrap()] {
            sum = sum.add(&p).unwrap();
        }
        let prod = b.pointwise_multiply(&g).unwrap();
        prop_assert!(sum.max_abs_diff(&prod).unwrap() <= 1e-11 * scale(&prod));
    }

    #[test]
    fn paraproduct_adjointness((b, f) in pair_with(function), seed in any::<u64>()) {
        let g = f.map(|v| (v * (seed % 97) as f64).sin());
        let lhs = paraproduct(&b, &f).unwrap().inner(&g).unwrap();
        let rhs = f.inner(&paraproduct_adjoint(&b, &g).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn paraproduct_is_bilinear((b, f) in pair_with(function), a in -3.0f64..3.0) {
        let lhs = paraproduct(&b, &f.scale(a).add(&b).unwrap()).unwrap();
        let rhs = paraproduct(&b, &f).unwrap().scale(a).add(&paraproduct(&b, &b).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-10 * scale(&lhs));
    }

    #[test]
    fn expansion_and_remainder((b, f) in pair_with(admissible)) {
        let t = expansion_terms(&b, &f).unwrap();
        prop_assert!(t.residual() <= 1e-11 * scale(&t.commutator).max(scale(&b) * scale(&f)));
        let r = remainder_closed_form(&b, &f).unwrap();
        prop_assert!(r.max_abs_diff(&t.remainder()).unwrap() <= 1e-11 * scale(&b) * scale(&f));
    }

    #[test]
    fn shift_is_isometry_on_mean_free_admissible(f in (2u32..=10).prop_flat_map(admissible)) {
        let f = f.sub(&StepFunction::constant(f.grid(), f.integral())).unwrap();
        let sf = haar_shift(&f).unwrap();
        prop_assert!((sf.norm_l2() - f.norm_l2()).abs() <= 1e-12 * f.norm_l2().max(1.0));
        prop_assert!(haar_shift_transpose(&sf).max_abs_diff(&f).unwrap() <= 1e-12 * scale(&f));
    }

    #[test]
    fn a2_at_least_one_and_scale_invariant(w in (1u32..=8).prop_flat_map(weight), c in 0.01f64..100.0) {
        let a = w.a2_characteristic();
        prop_assert!(a >= 1.0 - 1e-12);
        let scaled = Weight::from_values(w.grid(), w.values().iter().map(|v| v * c).collect()).unwrap();
        prop_assert!((scaled.a2_characteristic() - a).abs() <= 1e-12 * a);
        prop_assert!((w.reciprocal().a2_characteristic() - a).abs() <= 1e-12 * a);
    }

    #[test]
    fn functionals_homogeneous_and_shift_invariant(
        (b, mu, lambda) in (2u32..=6).prop_flat_map(|d| (function(d), weight(d), weight(d))),
        c in -4.0f64..4.0,
        k in -5.0f64..5.0,
    ) {
        let moved = b.scale(c).add(&StepFunction::constant(b.grid(), k)).unwrap();
        let rho = rho_weight(&mu, &lambda).unwrap();
        let pairs = [
            (bloom_b2(&b, &mu, &lambda).unwrap().value, bloom_b2(&moved, &mu, &lambda).unwrap().value),
            (bmo_rho(&b, &rho).unwrap().value, bmo_rho(&moved, &rho).unwrap().value),
            (neccon_functional(&b, &mu, &lambda).unwrap().value, neccon_functional(&moved, &mu, &lambda).unwrap().value),
        ];
        for (x, y) in pairs {
            prop_assert!((y - c.abs() * x).abs() <= 1e-9 * y.max(1.0), "{x} {y}");
        }
    }

    #[test]
    fn neccon_sandwich((b, mu, lambda) in (2u32..=6).prop_flat_map(|d| (function(d), weight(d), weight(d)))) {
        let w = weighted_oscillation(&b, &mu, &lambda).unwrap().value;
        let n = neccon_functional(&b, &mu, &lambda).unwrap().value;
        let a2 = mu.a2_characteristic();
        prop_assert!(w * w <= n * n * (1.0 + 1e-12) + 1e-300);
        prop_assert!(n * n <= a2 * w * w * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn carleson_constant_is_b2_squared((b, mu, lambda) in (2u32..=6).prop_flat_map(|d| (function(d), weight(d), weight(d)))) {
        let cc = carleson_constant(&CarlesonSequence::primal(&b, &mu, &lambda).unwrap()).value;
        let b2 = bloom_b2(&b, &mu, &lambda).unwrap().value;
        prop_assert!((cc - b2 * b2).abs() <= 1e-10 * cc.max(1.0));
    }

    #[test]
    fn identity_norm_is_leaf_ratio((mu, lambda) in (1u32..=6).prop_flat_map(|d| (weight(d), weight(d)))) {
        let id = LinearOperatorMatrix::identity(mu.grid());
        let n = weighted_operator_norm(&id, &mu, &lambda).unwrap();
        let exact = mu.values().iter().zip(lambda.values()).map(|(m, l)| (l / m).sqrt()).fold(0.0, f64::max);
        prop_assert!((n - exact).abs() <= 1e-10 * exact);
    }

    #[test]
    fn power_iteration_brackets_dense((b, mu, lambda) in (2u32..=6).prop_flat_map(|d| (function(d), weight(d), weight(d)))) {
        let dense = weighted_operator_norm(&LinearOperatorMatrix::commutator(&b).unwrap(), &mu, &lambda).unwrap();
        let est = power_iteration_norm(&MatrixFree::Commutator(b.clone()), &mu, &lambda, PowerOptions::default()).unwrap();
        prop_assert!(est.lower <= dense * (1.0 + 1e-9) + 1e-12);
        prop_assert!(est.upper >= dense * (1.0 - 1e-9) - 1e-12);
    }

    #[test]
    fn stopping_family_is_maximal_and_disjoint(w in (2u32..=7).prop_flat_map(weight), c in 1.05f64..4.0) {
        let g = w.grid();
        let fam = maximal_stopping_intervals(g, DyadicInterval::ROOT, &Deviation::new(&w, c));
        prop_assert!(fam.validate().is_ok());
        for (k, a) in fam.members.iter().enumerate() {
            for b in &fam.members[k + 1..] {
                prop_assert!(a.is_disjoint(*b));
            }
        }
        let ratio = packing_ratio(&fam, &w);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ratio));
        // unstopped intervals never satisfy the rule
        let avg0 = w.average(DyadicInterval::ROOT);
        for i in fam.unstopped().filter(|i| *i != DyadicInterval::ROOT) {
            let a = w.average(i);
            prop_assert!(!(a > c * avg0 || a < avg0 / c));
        }
    }

    #[test]
    fn serde_roundtrips(f in sized_function(), depth in 2u32..=10, seed in any::<u64>()) {
        let back: StepFunction = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        prop_assert_eq!(back, f);
        let config = ExperimentConfig { depth, seed, ..ExperimentConfig::default() };
        let back = ExperimentConfig::from_json(&serde_json::to_string(&config).unwrap()).unwrap();
        prop_assert_eq!(back, config);
    }

    #[test]
    fn generators_are_deterministic(d in 1u32..=8, delta in 0.05f64..0.95, seed in any::<u64>()) {
        let spec = EnsembleSpec::cascade(d, delta, seed);
        prop_assert_eq!(generate_weight(&spec).unwrap(), generate_weight(&spec).unwrap());
    }

    #[test]
    fn role_seeds_distinct(master in any::<u64>(), index in 0usize..1000) {
        let t = trial_seed(master, index);
        let seeds = Role::ALL.map(|r| role_seed(t, r));
        for a in 0..4 {
            for b in a + 1..4 {
                prop_assert_ne!(seeds[a], seeds[b]);
            }
        }
    }

    #[test]
    fn ranges_are_inclusive(start in -5i32..5, steps in 0usize..50) {
        let end = start as f64 + steps as f64 * 0.25;
        let r = parse_range(&format!("{start}:0.25:{end}")).unwrap();
        prop_assert_eq!(r.len(), steps + 1);
        prop_assert_eq!(*r.last().unwrap(), end);
    }
}
