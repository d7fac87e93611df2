//! Paraproducts, the Haar shift, the shift commutator and its expansion in
//! paraproducts.
//!
//! Everything acts on step functions of one grid. The shift moves a level-`k`
//! coefficient to level `k + 1`, so on a depth-`D` grid it is exact only for
//! inputs whose spectrum stops at level `D - 2` ("admissible"). Strict entry
//! points reject anything else; [`ShiftMode::Truncate`] drops the finest
//! level and raises a flag instead.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::dyadic::{path_sums_within, DyadicGrid, DyadicInterval, HaarSpectrum, StepFunction};
use crate::error::{Error, Result};
use crate::weights::Weight;

/// Relative size below which a finest-level coefficient counts as zero.
pub const ADMISSIBILITY_TOL: f64 = 1e-12;

/// `Π_b f = Σ_I b̂(I) ⟨f⟩_I h_I`.
pub fn paraproduct(b: &StepFunction, f: &StepFunction) -> Result<StepFunction> {
    b.grid().ensure_same(f.grid())?;
    let sb = b.analyze();
    let averages = f.interval_averages();
    let mut out = HaarSpectrum::zeros(b.grid());
    for (i, c) in sb.iter() {
        if c != 0.0 {
            out.set_coeff(i, c * averages[i.index()]);
        }
    }
    Ok(out.synthesize())
}

/// `Π_b^* f = Σ_I b̂(I) f̂(I) 1_I / |I|`, the unweighted adjoint of `Π_b`.
pub fn paraproduct_adjoint(b: &StepFunction, f: &StepFunction) -> Result<StepFunction> {
    b.grid().ensure_same(f.grid())?;
    let (sb, sf) = (b.analyze(), f.analyze());
    let grid = b.grid();
    let values = path_sums_within(grid, DyadicInterval::ROOT, |i| sb.coeff(i) * sf.coeff(i) / i.length());
    StepFunction::new(grid, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftMode {
    /// Reject inputs with finest-level coefficients.
    #[default]
    Strict,
    /// Send finest-level coefficients to zero and report it.
    Truncate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shifted {
    pub function: StepFunction,
    /// A non-negligible finest-level coefficient was dropped.
    pub truncated: bool,
}

fn admissibility_scale(s: &HaarSpectrum) -> f64 {
    ADMISSIBILITY_TOL * (1.0 + s.coeffs().iter().fold(s.mean().abs(), |m, c| m.max(c.abs())))
}

/// Finest level carrying a coefficient that the shift cannot represent.
fn inadmissible_level(s: &HaarSpectrum) -> Option<u32> {
    let finest = s.grid().depth() - 1;
    let tol = admissibility_scale(s);
    DyadicInterval::ROOT
        .descendants(finest)
        .skip((1usize << finest) - 1)
        .any(|i| s.coeff(i).abs() > tol)
        .then_some(finest)
}

/// Requires the Haar spectrum of `f` to stop at level `D - 2`.
pub fn ensure_admissible(f: &StepFunction) -> Result<()> {
    match inadmissible_level(&f.analyze()) {
        Some(level) => Err(Error::Inadmissible { level }),
        None => Ok(()),
    }
}

fn shift_spectrum(s: &HaarSpectrum) -> HaarSpectrum {
    let grid = s.grid();
    let mut out = HaarSpectrum::zeros(grid);
    if grid.depth() >= 2 {
        for i in DyadicInterval::ROOT.descendants(grid.depth() - 2) {
            let c = s.coeff(i) * FRAC_1_SQRT_2;
            out.add_to_coeff(i.left_child(), c);
            out.add_to_coeff(i.right_child(), -c);
        }
    }
    out
}

/// `Ш h_I = (h_{I-} - h_{I+}) / √2`, `Ш 1 = 0`, strict mode.
pub fn haar_shift(f: &StepFunction) -> Result<StepFunction> {
    haar_shift_with(f, ShiftMode::Strict).map(|s| s.function)
}

pub fn haar_shift_with(f: &StepFunction, mode: ShiftMode) -> Result<Shifted> {
    let s = f.analyze();
    let bad = inadmissible_level(&s);
    if let (ShiftMode::Strict, Some(level)) = (mode, bad) {
        return Err(Error::Inadmissible { level });
    }
    Ok(Shifted { function: shift_spectrum(&s).synthesize(), truncated: bad.is_some() })
}

/// Transpose (unweighted adjoint) of the truncated shift:
/// `h_{I-} ↦ h_I / √2`, `h_{I+} ↦ -h_I / √2`, root and constants to zero.
pub fn haar_shift_transpose(f: &StepFunction) -> StepFunction {
    let s = f.analyze();
    let grid = f.grid();
    let mut out = HaarSpectrum::zeros(grid);
    if grid.depth() >= 2 {
        for i in DyadicInterval::ROOT.descendants(grid.depth() - 2) {
            let (l, r) = i.children();
            out.set_coeff(i, (s.coeff(l) - s.coeff(r)) * FRAC_1_SQRT_2);
        }
    }
    out.synthesize()
}

/// `[b, Ш] f = b Ш f - Ш(b f)`, strict: `f` and `b f` must be admissible.
pub fn commutator_shift(b: &StepFunction, f: &StepFunction) -> Result<StepFunction> {
    commutator_shift_with(b, f, ShiftMode::Strict).map(|s| s.function)
}

pub fn commutator_shift_with(b: &StepFunction, f: &StepFunction, mode: ShiftMode) -> Result<Shifted> {
    let sh_f = haar_shift_with(f, mode)?;
    let sh_bf = haar_shift_with(&b.pointwise_multiply(f)?, mode)?;
    Ok(Shifted {
        function: b.pointwise_multiply(&sh_f.function)?.sub(&sh_bf.function)?,
        truncated: sh_f.truncated || sh_bf.truncated,
    })
}

/// Transpose of `f ↦ [b, Ш] f` with the truncated shift: `Шᵀ(b g) - b Шᵀ g`.
pub fn commutator_shift_transpose(b: &StepFunction, g: &StepFunction) -> Result<StepFunction> {
    let a = haar_shift_transpose(&b.pointwise_multiply(g)?);
    a.sub(&b.pointwise_multiply(&haar_shift_transpose(g))?)
}

/// The six terms of the paraproduct expansion of `[b, Ш] f`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionTerms {
    /// `Ш(Π_b f)`
    pub sh_pi_b_f: StepFunction,
    /// `Π_b(Ш f)`
    pub pi_b_sh_f: StepFunction,
    /// `Ш(Π_b^* f)`
    pub sh_pi_b_star_f: StepFunction,
    /// `Π_b^*(Ш f)`
    pub pi_b_star_sh_f: StepFunction,
    /// `Π_{Ш f} b`
    pub pi_shf_b: StepFunction,
    /// `Ш(Π_f b)`
    pub sh_pi_f_b: StepFunction,
    /// `Π_b Шf - Ш Π_b f + Π_b^* Шf - Ш Π_b^* f + Π_{Шf} b - Ш Π_f b`
    pub signed_sum: StepFunction,
    /// `[b, Ш] f` evaluated directly.
    pub commutator: StepFunction,
}

impl ExpansionTerms {
    /// `max |signed_sum - commutator|`.
    pub fn residual(&self) -> f64 {
        self.signed_sum.max_abs_diff(&self.commutator).expect("same grid")
    }

    /// The combination with the first four terms negated,
    /// `Ш Π_b f - Π_b Шf + Ш Π_b^* f - Π_b^* Шf + Π_{Шf} b - Ш Π_f b`.
    /// Kept to document that it does not reproduce the commutator.
    pub fn alternate_sum(&self) -> StepFunction {
        let grid = self.commutator.grid();
        combine(
            grid,
            &[
                (1.0, &self.sh_pi_b_f),
                (-1.0, &self.pi_b_sh_f),
                (1.0, &self.sh_pi_b_star_f),
                (-1.0, &self.pi_b_star_sh_f),
                (1.0, &self.pi_shf_b),
                (-1.0, &self.sh_pi_f_b),
            ],
        )
    }

    pub fn alternate_residual(&self) -> f64 {
        self.alternate_sum().max_abs_diff(&self.commutator).expect("same grid")
    }

    pub fn remainder(&self) -> StepFunction {
        self.pi_shf_b.sub(&self.sh_pi_f_b).expect("same grid")
    }

    pub fn terms(&self) -> [(&'static str, &StepFunction); 6] {
        [
            ("sh_pi_b_f", &self.sh_pi_b_f),
            ("pi_b_sh_f", &self.pi_b_sh_f),
            ("sh_pi_b_star_f", &self.sh_pi_b_star_f),
            ("pi_b_star_sh_f", &self.pi_b_star_sh_f),
            ("pi_shf_b", &self.pi_shf_b),
            ("sh_pi_f_b", &self.sh_pi_f_b),
        ]
    }
}

fn combine(grid: DyadicGrid, parts: &[(f64, &StepFunction)]) -> StepFunction {
    let mut acc = vec![0.0; grid.leaf_count()];
    for (sign, f) in parts {
        for (a, v) in acc.iter_mut().zip(f.values()) {
            *a += sign * v;
        }
    }
    StepFunction::new(grid, acc).expect("finite sum of finite functions")
}

/// Both `b` and `f` must be admissible.
pub fn expansion_terms(b: &StepFunction, f: &StepFunction) -> Result<ExpansionTerms> {
    b.grid().ensure_same(f.grid())?;
    ensure_admissible(b)?;
    ensure_admissible(f)?;
    let sh_f = haar_shift(f)?;
    let sh_pi_b_f = haar_shift(&paraproduct(b, f)?)?;
    let pi_b_sh_f = paraproduct(b, &sh_f)?;
    let sh_pi_b_star_f = haar_shift(&paraproduct_adjoint(b, f)?)?;
    let pi_b_star_sh_f = paraproduct_adjoint(b, &sh_f)?;
    let pi_shf_b = paraproduct(&sh_f, b)?;
    let sh_pi_f_b = haar_shift(&paraproduct(f, b)?)?;
    let signed_sum = combine(
        b.grid(),
        &[
            (1.0, &pi_b_sh_f),
            (-1.0, &sh_pi_b_f),
            (1.0, &pi_b_star_sh_f),
            (-1.0, &sh_pi_b_star_f),
            (1.0, &pi_shf_b),
            (-1.0, &sh_pi_f_b),
        ],
    );
    let commutator = commutator_shift(b, f)?;
    Ok(ExpansionTerms {
        sh_pi_b_f,
        pi_b_sh_f,
        sh_pi_b_star_f,
        pi_b_star_sh_f,
        pi_shf_b,
        sh_pi_f_b,
        signed_sum,
        commutator,
    })
}

/// `Π_{Шf} b - Ш(Π_f b) = -(1/√2) Σ_I b̂(I) f̂(I) |I|^{-1/2} (h_{I-} + h_{I+})`.
pub fn remainder_closed_form(b: &StepFunction, f: &StepFunction) -> Result<StepFunction> {
    b.grid().ensure_same(f.grid())?;
    ensure_admissible(b)?;
    ensure_admissible(f)?;
    let (sb, sf) = (b.analyze(), f.analyze());
    let grid = b.grid();
    let mut out = HaarSpectrum::zeros(grid);
    if grid.depth() >= 2 {
        for i in DyadicInterval::ROOT.descendants(grid.depth() - 2) {
            let w = -FRAC_1_SQRT_2 * sb.coeff(i) * sf.coeff(i) / i.length().sqrt();
            out.add_to_coeff(i.left_child(), w);
            out.add_to_coeff(i.right_child(), w);
        }
    }
    Ok(out.synthesize())
}

/// `Σ_I b̂(I)^2 f̂(I)^2 ⟨λ⟩_I / |I|`, which equals `∫ λ S(remainder)^2`.
pub fn remainder_energy(b: &StepFunction, f: &StepFunction, lambda: &Weight) -> Result<f64> {
    b.grid().ensure_same(f.grid())?;
    b.grid().ensure_same(lambda.grid())?;
    let (sb, sf) = (b.analyze(), f.analyze());
    Ok(sb
        .iter()
        .map(|(i, c)| (c * sf.coeff(i)).powi(2) * lambda.average(i) / i.length())
        .sum())
}
