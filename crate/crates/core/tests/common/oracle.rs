//! Brute-force reference implementations: explicit Haar vectors, leaf sums,
//! containment loops and dense SVD. Deliberately slow and independent of the
//! library's tree passes.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Leaf count `2^d`.
pub fn n(d: u32) -> usize {
    1 << d
}

/// Intervals as `(level, position)`, levels `0..=d`.
pub fn all_intervals(d: u32) -> Vec<(u32, usize)> {
    (0..=d).flat_map(|l| (0..(1usize << l)).map(move |p| (l, p))).collect()
}

pub fn haar_intervals(d: u32) -> Vec<(u32, usize)> {
    all_intervals(d).into_iter().filter(|(l, _)| *l < d).collect()
}

pub fn leaves_of(d: u32, (l, p): (u32, usize)) -> std::ops::Range<usize> {
    let w = 1usize << (d - l);
    p * w..(p + 1) * w
}

pub fn length((l, _): (u32, usize)) -> f64 {
    0.5f64.powi(l as i32)
}

pub fn contains(outer: (u32, usize), inner: (u32, usize)) -> bool {
    inner.0 >= outer.0 && (inner.1 >> (inner.0 - outer.0)) == outer.1
}

pub fn indicator(d: u32, i: (u32, usize)) -> Vec<f64> {
    let mut v = vec![0.0; n(d)];
    for k in leaves_of(d, i) {
        v[k] = 1.0;
    }
    v
}

/// `|I|^{-1/2}(-1 on the left half, +1 on the right half)`.
pub fn haar(d: u32, i: (u32, usize)) -> Vec<f64> {
    let mut v = vec![0.0; n(d)];
    let r = leaves_of(d, i);
    let mid = r.start + r.len() / 2;
    let amp = length(i).powf(-0.5);
    for k in r {
        v[k] = if k < mid { -amp } else { amp };
    }
    v
}

pub fn integral(d: u32, f: &[f64]) -> f64 {
    f.iter().sum::<f64>() / n(d) as f64
}

pub fn inner(d: u32, f: &[f64], g: &[f64]) -> f64 {
    f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / n(d) as f64
}

pub fn mass(d: u32, w: &[f64], i: (u32, usize)) -> f64 {
    leaves_of(d, i).map(|k| w[k]).sum::<f64>() / n(d) as f64
}

pub fn avg(d: u32, w: &[f64], i: (u32, usize)) -> f64 {
    mass(d, w, i) / length(i)
}

/// Zero on leaves, which carry no Haar function.
pub fn coeff(d: u32, f: &[f64], i: (u32, usize)) -> f64 {
    if i.0 >= d {
        return 0.0;
    }
    inner(d, f, &haar(d, i))
}

pub fn reciprocal(w: &[f64]) -> Vec<f64> {
    w.iter().map(|v| 1.0 / v).collect()
}

pub fn rho(mu: &[f64], lambda: &[f64]) -> Vec<f64> {
    mu.iter().zip(lambda).map(|(m, l)| (m / l).sqrt()).collect()
}

pub fn a2(d: u32, w: &[f64]) -> f64 {
    let inv = reciprocal(w);
    all_intervals(d).into_iter().map(|i| avg(d, w, i) * avg(d, &inv, i)).fold(0.0, f64::max)
}

fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    out.iter_mut().zip(x).for_each(|(o, v)| *o += a * v);
}

pub fn paraproduct(d: u32, b: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n(d)];
    for i in haar_intervals(d) {
        axpy(&mut out, coeff(d, b, i) * avg(d, f, i), &haar(d, i));
    }
    out
}

pub fn paraproduct_adjoint(d: u32, b: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n(d)];
    for i in haar_intervals(d) {
        axpy(&mut out, coeff(d, b, i) * coeff(d, f, i) / length(i), &indicator(d, i));
    }
    out
}

/// The shift with the finest level dropped.
pub fn shift(d: u32, f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n(d)];
    for i in haar_intervals(d).into_iter().filter(|(l, _)| *l + 1 < d) {
        let c = coeff(d, f, i) / 2f64.sqrt();
        let (l, p) = i;
        axpy(&mut out, c, &haar(d, (l + 1, 2 * p)));
        axpy(&mut out, -c, &haar(d, (l + 1, 2 * p + 1)));
    }
    out
}

pub fn commutator(d: u32, b: &[f64], f: &[f64]) -> Vec<f64> {
    let bf: Vec<f64> = b.iter().zip(f).map(|(x, y)| x * y).collect();
    let sf = shift(d, f);
    let s_bf = shift(d, &bf);
    b.iter().zip(&sf).zip(&s_bf).map(|((bb, s), t)| bb * s - t).collect()
}

/// Dense matrix of a linear map on leaf vectors.
pub fn matrix(d: u32, op: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let m = n(d);
    let mut a = DMatrix::zeros(m, m);
    for j in 0..m {
        let mut e = vec![0.0; m];
        e[j] = 1.0;
        a.set_column(j, &DVector::from_vec(op(&e)));
    }
    a
}

/// `‖T : L²(μ) → L²(λ)‖` by SVD.
pub fn weighted_norm(d: u32, t: &DMatrix<f64>, mu: &[f64], lambda: &[f64]) -> f64 {
    let h = 1.0 / n(d) as f64;
    let a = DMatrix::from_fn(t.nrows(), t.ncols(), |i, j| (lambda[i] * h).sqrt() * t[(i, j)] / (mu[j] * h).sqrt());
    a.singular_values().max()
}

pub fn bloom_b2(d: u32, b: &[f64], mu: &[f64], lambda: &[f64]) -> f64 {
    let mi = reciprocal(mu);
    let mut best: f64 = 0.0;
    for k in haar_intervals(d) {
        let s: f64 = haar_intervals(d)
            .into_iter()
            .filter(|i| contains(k, *i))
            .map(|i| coeff(d, b, i).powi(2) * avg(d, &mi, i).powi(2) * avg(d, lambda, i))
            .sum();
        best = best.max(s / mass(d, &mi, k));
    }
    best.sqrt()
}

pub fn bloom_b2_dual(d: u32, b: &[f64], mu: &[f64], lambda: &[f64]) -> f64 {
    bloom_b2(d, b, &reciprocal(lambda), &reciprocal(mu))
}

/// `sup_I (ρ(I)^{-1} ∫_I |b - ⟨b⟩_I|^2)^{1/2}` from leaf values.
pub fn bmo_rho(d: u32, b: &[f64], rho: &[f64]) -> f64 {
    let mut best: f64 = 0.0;
    for i in haar_intervals(d) {
        let mean = avg(d, b, i);
        let osc: f64 = leaves_of(d, i).map(|k| (b[k] - mean).powi(2)).sum::<f64>() / n(d) as f64;
        best = best.max(osc / mass(d, rho, i));
    }
    best.sqrt()
}

pub fn bmo_rho_l1(d: u32, b: &[f64], rho: &[f64]) -> f64 {
    let mut best: f64 = 0.0;
    for i0 in haar_intervals(d) {
        let mut total = 0.0;
        for x in leaves_of(d, i0) {
            let leaf = (d, x);
            let s: f64 = haar_intervals(d)
                .into_iter()
                .filter(|i| contains(i0, *i) && contains(*i, leaf))
                .map(|i| coeff(d, b, i).powi(2) / length(i))
                .sum();
            total += s.sqrt() / n(d) as f64;
        }
        best = best.max(total / mass(d, rho, i0));
    }
    best
}

pub fn neccon(d: u32, b: &[f64], mu: &[f64], lambda: &[f64]) -> f64 {
    let mi = reciprocal(mu);
    let mut best: f64 = 0.0;
    for i in haar_intervals(d) {
        let mean = avg(d, b, i);
        let osc: f64 = leaves_of(d, i).map(|k| (b[k] - mean).powi(2) * lambda[k]).sum::<f64>() / n(d) as f64;
        best = best.max(mass(d, &mi, i) / length(i).powi(2) * osc);
    }
    best.sqrt()
}

/// `[bloom_b2, bloom_b2_dual, bmo_rho, bmo_rho_l1, neccon]`.
pub fn chain(d: u32, b: &[f64], mu: &[f64], lambda: &[f64]) -> [f64; 5] {
    let r = rho(mu, lambda);
    [
        bloom_b2(d, b, mu, lambda),
        bloom_b2_dual(d, b, mu, lambda),
        bmo_rho(d, b, &r),
        bmo_rho_l1(d, b, &r),
        neccon(d, b, mu, lambda),
    ]
}

pub fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

/// `sup_J w(J)^{-1} Σ_{I ⊆ J} a(I)` with `a` given per interval.
pub fn carleson(d: u32, a: impl Fn((u32, usize)) -> f64, w: &[f64]) -> f64 {
    let all = all_intervals(d);
    all.iter()
        .map(|&j| all.iter().filter(|&&i| contains(j, i)).map(|&i| a(i)).sum::<f64>() / mass(d, w, j))
        .fold(0.0, f64::max)
}

/// Maximal intervals strictly inside `root` satisfying `stops`, found by
/// checking every interval against all of its ancestors.
pub fn maximal(d: u32, root: (u32, usize), stops: impl Fn((u32, usize)) -> bool) -> Vec<(u32, usize)> {
    let inside: Vec<_> = all_intervals(d).into_iter().filter(|i| contains(root, *i) && *i != root).collect();
    let mut out: Vec<_> = inside
        .iter()
        .copied()
        .filter(|&i| stops(i) && !inside.iter().any(|&a| a != i && contains(a, i) && stops(a)))
        .collect();
    out.sort_by_key(|&(l, p)| (p << (d - l), l));
    out
}
