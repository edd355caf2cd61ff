//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's alignment or model code.
#![allow(dead_code)]

use num_rational::Ratio;

/// LCS length by enumerating every subsequence of the shorter input.
pub fn brute_lcs_len(a: &[u8], b: &[u8]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let n = mask.count_ones() as usize;
        if n <= best {
            continue;
        }
        let mut pos = 0;
        let mut ok = true;
        for (i, &c) in short.iter().enumerate() {
            if mask & (1 << i) == 0 {
                continue;
            }
            match long[pos..].iter().position(|&x| x == c) {
                Some(p) => pos += p + 1,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            best = n;
        }
    }
    best
}

/// Quadratic dynamic-programming LCS length.
pub fn dp_lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            table[i][j] = if a[i - 1] == b[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    table[a.len()][b.len()]
}

pub type Q = Ratio<i64>;

/// Successor counts of `ctx` found by scanning the training sequences: one
/// count per position `i >= len(ctx)` whose preceding symbols equal `ctx`.
fn scan_counts(training: &[Vec<usize>], ctx: &[usize], alphabet: usize) -> Vec<i64> {
    let mut counts = vec![0i64; alphabet];
    for seq in training {
        for i in ctx.len()..seq.len() {
            if &seq[i - ctx.len()..i] == ctx {
                counts[seq[i]] += 1;
            }
        }
    }
    counts
}

/// PPM-C with exclusion, evaluated in exact arithmetic.
pub fn ppmc_exclusion(training: &[Vec<usize>], d: usize, alphabet: usize, ctx: &[usize], sym: usize) -> Q {
    let ctx = &ctx[ctx.len().saturating_sub(d)..];
    let mut excluded = vec![false; alphabet];
    let mut mass = Q::from_integer(1);
    for k in (0..=ctx.len()).rev() {
        let counts = scan_counts(training, &ctx[ctx.len() - k..], alphabet);
        let live: Vec<usize> = (0..alphabet).filter(|&s| counts[s] > 0 && !excluded[s]).collect();
        if live.is_empty() {
            continue;
        }
        let total: i64 = live.iter().map(|&s| counts[s]).sum();
        let q = live.len() as i64;
        let remaining = excluded.iter().filter(|e| !**e).count() as i64;
        let denom = if q == remaining { total } else { total + q };
        if live.contains(&sym) {
            return mass * Q::new(counts[sym], denom);
        }
        mass *= Q::new(q, denom);
        for s in live {
            excluded[s] = true;
        }
    }
    let remaining = excluded.iter().filter(|e| !**e).count() as i64;
    mass * Q::new(1, remaining)
}

/// PPM-C without exclusion, blending every order down to the uniform base.
pub fn ppmc_blended(training: &[Vec<usize>], d: usize, alphabet: usize, ctx: &[usize], sym: usize) -> Q {
    let ctx = &ctx[ctx.len().saturating_sub(d)..];
    let mut p = Q::new(1, alphabet as i64);
    for k in 0..=ctx.len() {
        let counts = scan_counts(training, &ctx[ctx.len() - k..], alphabet);
        let total: i64 = counts.iter().sum();
        if total == 0 {
            break;
        }
        let q = counts.iter().filter(|&&c| c > 0).count() as i64;
        p = (Q::from_integer(counts[sym]) + Q::from_integer(q) * p) / Q::from_integer(total + q);
    }
    p
}

pub fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// Every string of length `0..=max_len` over `0..alphabet`.
pub fn all_strings(alphabet: u8, max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for c in 0..alphabet {
                let mut t: Vec<u8> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Least-squares fit `y = slope * x + intercept`, returning (slope, intercept, r²).
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx, (sxy * sxy) / (sxx * syy))
}
