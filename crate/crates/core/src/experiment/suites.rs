use std::collections::BTreeMap;

use super::report::operator_norm;
use super::{role_seed, Check, ExperimentConfig, Role, Suite, TrialInputs, TrialRecord};
use crate::bmo::{bloom_b2_dual, weighted_oscillation, BmoReport};
use crate::dyadic::{square_function, DyadicInterval, StepFunction};
use crate::error::Result;
use crate::normest::{
    carleson_constant, carleson_embedding_check, necessity_test_function_bound_with, square_sum_constant,
    weighted_operator_norm, CarlesonSequence, LinearOperatorMatrix, MatrixFree, DEFAULT_DENSE_CAP,
};
use crate::operators::{expansion_terms, paraproduct, paraproduct_adjoint, remainder_closed_form, remainder_energy};
use crate::par::Execution;
use crate::stopping::{
    corona_generations, maximal_stopping_intervals, minimal_packing_constant, packing_ratio, three_condition_audit,
    uniform_packing_constant, Deviation, SquareSum, DEFAULT_PACKING_TARGET,
};
use crate::weights::{generate_symbol, rho_weight, EnsembleSpec, Weight};

#[derive(Default)]
struct Outcome {
    values: BTreeMap<String, f64>,
    checks: Vec<Check>,
}

impl Outcome {
    fn value(&mut self, name: &str, v: f64) {
        self.values.insert(name.to_string(), v);
    }

    fn at_most(&mut self, name: &str, value: f64, limit: f64) {
        self.checks.push(Check::at_most(name, value, limit));
    }
}

pub(super) fn run_trial(
    suite: Suite,
    config: &ExperimentConfig,
    index: usize,
    inputs: Result<TrialInputs>,
) -> TrialRecord {
    let seed = super::trial_seed(config.seed, index);
    let role_seeds = Role::ALL.map(|r| role_seed(seed, r));
    let mut record = TrialRecord { trial: index, seed, role_seeds, values: BTreeMap::new(), checks: vec![], error: None };
    // trials already run concurrently, so the inner loops stay sequential
    let outcome = inputs.and_then(|t| match suite {
        Suite::Identities => identities(config, &t),
        Suite::Equivalences => equivalences(&t),
        Suite::ParaproductBounds => paraproduct_bounds(config, &t),
        Suite::CommutatorBounds => commutator_bounds(&t),
        Suite::Carleson => carleson(config, &t),
        Suite::Ppott => ppott(&t),
        Suite::Stopping => stopping(&t),
        Suite::NecconChain => neccon_chain(&t),
    });
    match outcome {
        Ok(o) => {
            record.values = o.values;
            record.checks = o.checks;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

fn admissible(b: &StepFunction) -> StepFunction {
    b.analyze().truncated(b.depth().saturating_sub(2)).synthesize()
}

fn scale_of(f: &StepFunction) -> f64 {
    f.max_abs().max(1.0)
}

/// An admissible probe function drawn from the trial's probe seed.
fn probe(t: &TrialInputs) -> Result<StepFunction> {
    let d = t.symbol.depth();
    let spec = EnsembleSpec::log_symbol(d, 0.5, t.role_seeds[Role::Probe as usize]);
    Ok(admissible(&generate_symbol(&spec)?))
}

fn identities(config: &ExperimentConfig, t: &TrialInputs) -> Result<Outcome> {
    let tol = config.tolerances;
    let mut o = Outcome::default();
    let b = &t.symbol;
    let s = b.analyze();
    let roundtrip = s.synthesize().max_abs_diff(b)? / scale_of(b);
    let energy = b.norm_l2().powi(2);
    let parseval = (energy - s.mean().powi(2) - s.energy()).abs() / energy.max(1.0);
    o.value("haar_roundtrip_residual", roundtrip);
    o.value("parseval_residual", parseval);
    o.at_most("haar_roundtrip", roundtrip, tol.haar);
    o.at_most("parseval", parseval, tol.haar);

    let f = probe(t)?;
    let bf = b.pointwise_multiply(&f)?;
    let decomposition = StepFunction::constant(b.grid(), b.integral() * f.integral())
        .add(&paraproduct(b, &f)?)?
        .add(&paraproduct(&f, b)?)?
        .add(&paraproduct_adjoint(b, &f)?)?;
    let product = decomposition.max_abs_diff(&bf)? / scale_of(&bf);
    o.value("product_residual", product);
    o.at_most("product_decomposition", product, tol.identity);

    let g = t.lambda.function();
    let lhs = paraproduct(b, &f)?.inner(g)?;
    let rhs = f.inner(&paraproduct_adjoint(b, g)?)?;
    let adjoint = (lhs - rhs).abs() / (lhs.abs() + rhs.abs()).max(1.0);
    o.value("adjoint_residual", adjoint);
    o.at_most("adjointness", adjoint, tol.identity);

    let b_adm = admissible(b);
    let e = expansion_terms(&b_adm, &f)?;
    let scale = scale_of(&e.commutator);
    o.value("expansion_residual", e.residual() / scale);
    o.value("alternate_sign_residual", e.alternate_residual() / scale);
    o.at_most("expansion", e.residual() / scale, tol.identity);
    let closed = remainder_closed_form(&b_adm, &f)?;
    let remainder = closed.max_abs_diff(&e.remainder())? / scale_of(&closed);
    o.value("remainder_residual", remainder);
    o.at_most("remainder_closed_form", remainder, tol.identity);
    let direct = t.lambda.norm_sq(&square_function(&closed))?;
    let formula = remainder_energy(&b_adm, &f, &t.lambda)?;
    let denom = direct.abs().max(formula.abs());
    let energy_residual = if denom == 0.0 { 0.0 } else { (direct - formula).abs() / denom };
    o.value("remainder_energy_residual", energy_residual);
    o.at_most("remainder_energy", energy_residual, tol.energy);
    Ok(o)
}

fn record_functionals(o: &mut Outcome, r: &BmoReport) {
    o.value("bloom_b2", r.bloom_b2);
    o.value("bloom_b2_dual", r.bloom_b2_dual);
    o.value("bloom_b2_l2form", r.bloom_b2_l2form);
    o.value("bmo_rho", r.bmo_rho);
    o.value("bmo_rho_l1", r.bmo_rho_l1);
    o.value("neccon", r.neccon);
}

fn equivalences(t: &TrialInputs) -> Result<Outcome> {
    let mut o = Outcome::default();
    let r = BmoReport::compute_with(&t.symbol, &t.mu, &t.lambda, Execution::Sequential)?;
    record_functionals(&mut o, &r);
    if let Some(spread) = r.chain_spread() {
        o.value("chain_spread", spread);
    }
    o.value("a2_mu", t.mu.a2_characteristic());
    o.value("a2_lambda", t.lambda.a2_characteristic());
    Ok(o)
}

fn paraproduct_bounds(config: &ExperimentConfig, t: &TrialInputs) -> Result<Outcome> {
    let tol = config.tolerances;
    let mut o = Outcome::default();
    let (b, mu, lambda) = (&t.symbol, &t.mu, &t.lambda);
    let seq = Execution::Sequential;
    let b2 = crate::bmo::bloom_b2(b, mu, lambda)?.value;
    let dual = bloom_b2_dual(b, mu, lambda)?.value;
    let pi = operator_norm(|| LinearOperatorMatrix::paraproduct_with(b, seq), MatrixFree::Paraproduct(b.clone()), mu, lambda)?;
    let adj = || LinearOperatorMatrix::paraproduct_adjoint_with(b, seq);
    let pi_star = operator_norm(adj, MatrixFree::ParaproductAdjoint(b.clone()), mu, lambda)?;
    let pi_star_dual =
        operator_norm(adj, MatrixFree::ParaproductAdjoint(b.clone()), &lambda.reciprocal(), &mu.reciprocal())?;
    o.value("bloom_b2", b2);
    o.value("bloom_b2_dual", dual);
    o.value("paraproduct", pi);
    o.value("paraproduct_adjoint", pi_star);
    let duality = if pi == 0.0 && pi_star_dual == 0.0 { 0.0 } else { (pi - pi_star_dual).abs() / pi.max(pi_star_dual) };
    o.value("duality_residual", duality);
    o.at_most("norm_duality", duality, tol.duality);
    o.at_most("bloom_b2_below_paraproduct", b2, (1.0 + tol.lower_bound) * pi);
    o.at_most("bloom_b2_dual_below_adjoint", dual, (1.0 + tol.lower_bound) * pi_star);
    if b2 > 0.0 {
        o.value("paraproduct_over_bloom_b2", pi / b2);
    }
    if dual > 0.0 {
        o.value("adjoint_over_bloom_b2_dual", pi_star / dual);
    }
    o.value("a2_product", mu.a2_characteristic() * lambda.a2_characteristic());
    let audit = necessity_test_function_bound_with(b, mu, lambda, seq)?;
    o.value("necessity_ratio_max", audit.max_ratio);
    o.value("necessity_ratio_exceed_count", audit.exceed_count as f64);
    Ok(o)
}

fn commutator_bounds(t: &TrialInputs) -> Result<Outcome> {
    let mut o = Outcome::default();
    let (b, mu, lambda) = (&t.symbol, &t.mu, &t.lambda);
    let grid = b.grid();
    let seq = Execution::Sequential;
    let rho = rho_weight(mu, lambda)?;
    let bmo = crate::bmo::bmo_rho(b, &rho)?.value;
    let comm = operator_norm(|| LinearOperatorMatrix::commutator_with(b, seq), MatrixFree::Commutator(b.clone()), mu, lambda)?;
    o.value("commutator", comm);
    o.value("bmo_rho", bmo);
    if bmo > 0.0 {
        o.value("commutator_over_bmo_rho", comm / bmo);
    }
    for (name, w) in [("mu", mu), ("lambda", lambda)] {
        let shift = operator_norm(|| LinearOperatorMatrix::shift_with(grid, seq), MatrixFree::Shift(grid), w, w)?;
        let a2 = w.a2_characteristic();
        o.value(&format!("shift_{name}"), shift);
        o.value(&format!("shift_{name}_over_a2"), shift / a2);
    }
    if t.index == 0 && grid.depth() <= DEFAULT_DENSE_CAP {
        let one = Weight::constant(grid, 1.0)?;
        let plain = weighted_operator_norm(&LinearOperatorMatrix::shift_with(grid, seq)?, &one, &one)?;
        let deviation = if grid.depth() >= 2 { (plain - 1.0).abs() } else { plain };
        o.value("shift_unweighted_deviation", deviation);
        o.at_most("shift_unweighted_isometry", deviation, 1e-12);
    }
    Ok(o)
}

fn carleson(config: &ExperimentConfig, t: &TrialInputs) -> Result<Outcome> {
    let slack = 1.0 + config.tolerances.carleson;
    let mut o = Outcome::default();
    let (b, mu, lambda) = (&t.symbol, &t.mu, &t.lambda);
    let b2 = crate::bmo::bloom_b2(b, mu, lambda)?.value;
    let dual = bloom_b2_dual(b, mu, lambda)?.value;
    let primal = CarlesonSequence::primal(b, mu, lambda)?;
    let dual_seq = CarlesonSequence::dual(b, mu, lambda)?;
    let c1 = carleson_constant(&primal).value;
    let c2 = carleson_constant(&dual_seq).value;
    o.value("carleson_primal", c1);
    o.value("carleson_dual", c2);
    o.at_most("carleson_primal_below_bloom_b2_sq", c1, slack * b2 * b2);
    o.at_most("carleson_dual_below_bloom_b2_dual_sq", c2, slack * dual * dual);
    if b.depth() <= DEFAULT_DENSE_CAP {
        for (name, seq) in [("primal", &primal), ("dual", &dual_seq)] {
            let check = carleson_embedding_check(seq)?;
            o.value(&format!("embedding_{name}"), check.best_constant);
            if check.carleson_constant > 0.0 {
                o.value(&format!("embedding_{name}_ratio"), check.best_constant / check.carleson_constant);
            }
            o.at_most(&format!("embedding_{name}_factor_4"), check.best_constant, 4.0 * check.carleson_constant * slack);
        }
    }
    Ok(o)
}

fn ppott(t: &TrialInputs) -> Result<Outcome> {
    let mut o = Outcome::default();
    if t.mu.grid().depth() > DEFAULT_DENSE_CAP {
        return Ok(o);
    }
    for (name, w) in [("mu", &t.mu), ("lambda", &t.lambda)] {
        let c = square_sum_constant(w)?;
        let a2 = w.a2_characteristic();
        o.value(&format!("square_sum_{name}"), c);
        o.value(&format!("square_sum_{name}_over_a2"), c / a2);
        o.value(&format!("a2_{name}"), a2);
    }
    Ok(o)
}

fn stopping(t: &TrialInputs) -> Result<Outcome> {
    let mut o = Outcome::default();
    let (b, mu, lambda) = (&t.symbol, &t.mu, &t.lambda);
    let grid = b.grid();
    let root = DyadicInterval::ROOT;
    let target = DEFAULT_PACKING_TARGET;
    let mu_inv = mu.reciprocal();
    let rule = |c| Deviation::new(lambda, c).with_mu_inv(&mu_inv);
    let at_root = minimal_packing_constant(grid, root, rule, lambda, target)?;
    o.value("packing_constant_root", at_root.constant);
    o.value("packing_ratio_root", at_root.ratio);
    let uniform = uniform_packing_constant(grid, rule, lambda, target)?;
    o.value("packing_constant_uniform", uniform);
    o.value("a2_lambda", lambda.a2_characteristic());
    let corona = corona_generations(grid, root, &rule(uniform), 64);
    let table = corona.mass_table(lambda);
    let worst = table.iter().map(|r| r.fraction * 2f64.powi(r.generation as i32)).fold(0.0, f64::max);
    o.value("corona_generations", table.len() as f64 - 1.0);
    o.value("corona_decay_worst", worst);
    o.at_most("corona_decay", worst, 1.0 + 1e-12);
    let mut structural = 0.0;
    for family in corona.generations.iter().flatten() {
        if family.validate().is_err() || packing_ratio(family, lambda) > target {
            structural += 1.0;
        }
    }
    o.at_most("families_valid", structural, 0.0);

    let rho = rho_weight(mu, lambda)?;
    let bmo = crate::bmo::bmo_rho(b, &rho)?.value;
    let (family, k) = three_condition_audit(b, mu, lambda, root, uniform, uniform * bmo)?;
    o.value("three_condition_stopped", family.members.len() as f64);
    o.value("three_condition_packing", packing_ratio(&family, &mu_inv));
    o.value("unstopped_sum_constant", k);

    let s = b.analyze();
    let b2 = crate::bmo::bloom_b2(b, mu, lambda)?.value;
    if b2 > 0.0 {
        let square = |c| SquareSum { spectrum: &s, rho: &rho, b2_squared: b2 * b2, c };
        match minimal_packing_constant(grid, root, square, &rho, target) {
            Ok(found) => o.value("square_sum_packing_constant", found.constant),
            Err(_) => o.value("square_sum_packing_constant", f64::INFINITY),
        }
        let fam = maximal_stopping_intervals(grid, root, &square(1.0));
        o.value("square_sum_packing_at_1", packing_ratio(&fam, &rho));
    }
    Ok(o)
}

fn neccon_chain(t: &TrialInputs) -> Result<Outcome> {
    let mut o = Outcome::default();
    let (b, mu, lambda) = (&t.symbol, &t.mu, &t.lambda);
    let seq = Execution::Sequential;
    let r = BmoReport::compute_with(b, mu, lambda, seq)?;
    record_functionals(&mut o, &r);
    let w = weighted_oscillation(b, mu, lambda)?.value;
    let a2 = mu.a2_characteristic();
    let n2 = r.neccon * r.neccon;
    o.value("weighted_oscillation", w);
    o.value("a2_mu", a2);
    let slack = 1.0 + 1e-12;
    o.at_most("oscillation_below_neccon", w * w, n2 * slack);
    o.at_most("neccon_below_a2_oscillation", n2, a2 * w * w * slack);
    let comm =
        operator_norm(|| LinearOperatorMatrix::commutator_with(b, seq), MatrixFree::Commutator(b.clone()), mu, lambda)?;
    o.value("commutator", comm);
    if comm > 0.0 {
        o.value("neccon_over_commutator", r.neccon / comm);
    }
    if r.neccon > 0.0 {
        o.value("bloom_b2_over_neccon", r.bloom_b2 / r.neccon);
    }
    Ok(o)
}
