//! Floating-point helpers. `core` has no transcendental functions, so all
//! of them route through `libm`; this also keeps results identical between
//! `std` and `no_std` builds.

pub(crate) use libm::{exp, fabs as abs, floor, log as ln, round, sqrt};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum())
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `ln Σ exp(t_i)`, stable for large magnitudes. Returns `-inf` for an
/// empty or all `-inf` input.
pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max.is_infinite() {
        return max;
    }
    max + ln(terms.iter().map(|t| exp(t - max)).sum::<f64>())
}

/// In-place softmax.
pub(crate) fn softmax(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = exp(*x - max);
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}
