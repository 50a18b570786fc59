//! Two-sample Kolmogorov-Smirnov and paired Wilcoxon signed-rank tests.

use alloc::vec;
use alloc::vec::Vec;

use super::EvalError;

/// Largest `n` for which the Wilcoxon p-value is computed exactly.
pub const WILCOXON_EXACT_MAX_N: usize = 20;
const KS_SERIES_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    /// `d = d_numerator / d_denominator` with `d_denominator = |a| |b|`.
    pub d: f64,
    pub d_numerator: u64,
    pub d_denominator: u64,
    pub p_value: f64,
}

fn sorted(v: &[f64]) -> Result<Vec<f64>, EvalError> {
    if v.iter().any(|x| x.is_nan()) {
        return Err(EvalError::NonFinite);
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Supremum distance between the empirical CDFs, kept as the exact
/// rational `max |i nb - j na| / (na nb)`, with an asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptySample);
    }
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (a.len() as u64, b.len() as u64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0u64;
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.min(*y),
            (Some(x), None) => *x,
            (None, Some(y)) => *y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        best = best.max((i as u64 * nb).abs_diff(j as u64 * na));
    }
    let den = na * nb;
    let d = best as f64 / den as f64;
    let ne = (na * nb) as f64 / (na + nb) as f64;
    Ok(KsResult { d, d_numerator: best, d_denominator: den, p_value: kolmogorov_sf(libm::sqrt(ne) * d) })
}

/// Survival function of the Kolmogorov distribution, each series truncated
/// once its terms drop below `1e-8`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.0 {
        // Jacobi-transformed form, fast for small lambda.
        let c = core::f64::consts::PI * core::f64::consts::PI / (8.0 * lambda * lambda);
        let mut s = 0.0;
        let mut k = 1.0f64;
        loop {
            let term = libm::exp(-(2.0 * k - 1.0) * (2.0 * k - 1.0) * c);
            s += term;
            if term < KS_SERIES_EPS {
                break;
            }
            k += 1.0;
        }
        1.0 - libm::sqrt(2.0 * core::f64::consts::PI) / lambda * s
    } else {
        let mut s = 0.0;
        let mut k = 1.0f64;
        loop {
            let term = libm::exp(-2.0 * k * k * lambda * lambda);
            s += if (k as u64) % 2 == 1 { term } else { -term };
            if term < KS_SERIES_EPS {
                break;
            }
            k += 1.0;
        }
        2.0 * s
    };
    p.clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`; ranks of tied magnitudes are averaged.
    pub w: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Non-zero differences.
    pub n: usize,
    pub p_value: f64,
    pub exact: bool,
    /// Every difference was zero.
    pub degenerate: bool,
}

/// Average ranks of `v` (1-based), doubled so they stay integral.
pub fn doubled_ranks(v: &[f64]) -> Vec<u64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0u64; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        // ranks start+1..=end average to (start + 1 + end) / 2
        let r2 = (start + 1 + end) as u64;
        for &i in &idx[start..end] {
            ranks[i] = r2;
        }
        start = end;
    }
    ranks
}

/// `P(min(S, T - S) <= w2)` where `S` is the doubled positive rank sum under
/// uniformly random signs and `T` the doubled total.
fn exact_p(r2: &[u64], w2: u64) -> f64 {
    let total2: u64 = r2.iter().sum();
    // counts[s] = number of sign assignments with doubled W+ equal to s
    let mut counts = vec![0u64; total2 as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in r2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let hits: u64 = (0..=total2).filter(|&s| s.min(total2 - s) <= w2).map(|s| counts[s as usize]).sum();
    hits as f64 / libm::ldexp(1.0, r2.len() as i32)
}

/// Normal approximation with tie-corrected variance and continuity correction.
fn normal_p(r2: &[u64], w2: u64) -> f64 {
    let nf = r2.len() as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut sorted_r = r2.to_vec();
    sorted_r.sort_unstable();
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted_r.len() {
        let mut j = i;
        while j < sorted_r.len() && sorted_r[j] == sorted_r[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let w = w2 as f64 / 2.0;
    let z = ((mean - w).abs() - 0.5).max(0.0) / libm::sqrt(var);
    libm::erfc(z / core::f64::consts::SQRT_2)
}

/// Paired signed-rank test on `a - b`. Zero differences are dropped. The
/// two-sided p-value is `P(min(W+, W-) <= w)` under random signs: exact for
/// up to [`WILCOXON_EXACT_MAX_N`] pairs, otherwise a tie-corrected normal
/// approximation with continuity correction.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { left: a.len(), right: b.len() });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| d.is_nan()) {
        return Err(EvalError::NonFinite);
    }
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            w: 0.0,
            w_plus: 0.0,
            w_minus: 0.0,
            n: 0,
            p_value: 1.0,
            exact: true,
            degenerate: true,
        });
    }
    let mags: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let r2 = doubled_ranks(&mags);
    let plus2: u64 = r2.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total2 = (n * (n + 1)) as u64;
    let minus2 = total2 - plus2;
    let w2 = plus2.min(minus2);
    let exact = n <= WILCOXON_EXACT_MAX_N;
    let p_value = if exact { exact_p(&r2, w2) } else { normal_p(&r2, w2) };
    Ok(WilcoxonResult {
        w: w2 as f64 / 2.0,
        w_plus: plus2 as f64 / 2.0,
        w_minus: minus2 as f64 / 2.0,
        n,
        p_value: p_value.min(1.0),
        exact,
        degenerate: false,
    })
}
