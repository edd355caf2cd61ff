//! Longest-common-subsequence alignment of symbol strings.
//!
//! The production path is Myers' O(ND) difference algorithm in its
//! linear-space form: find the middle snake of the optimal edit path, recurse
//! on both halves. Fault-injected traces are usually close to some fault-free
//! trace, so D stays small and the search is close to linear.
//!
//! The similarity between traces is the normalized LCS length
//!
//! ```text
//! nlcs(x, y) = |lcs(x, y)| / sqrt(len(x) * len(y))
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Matched and unmatched positions of two sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// `(i, j)` with `a[i] == b[j]`, strictly increasing in both coordinates.
    pub lcs_pairs: Vec<(usize, usize)>,
    /// Ascending indices of `a` not on the LCS.
    pub only_in_a: Vec<usize>,
    /// Ascending indices of `b` not on the LCS.
    pub only_in_b: Vec<usize>,
    pub nlcs: f64,
}

impl AlignmentResult {
    pub fn lcs_len(&self) -> usize {
        self.lcs_pairs.len()
    }

    /// Number of rows of the merged two-column diff.
    pub fn diff_len(&self) -> usize {
        self.lcs_pairs.len() + self.only_in_a.len() + self.only_in_b.len()
    }

    /// Walks the alignment in diff order: between two matches, positions only
    /// in `b` come before positions only in `a`.
    pub fn rows(&self) -> Vec<DiffRow> {
        let mut rows = Vec::with_capacity(self.diff_len());
        let (mut ia, mut ib) = (0usize, 0usize);
        let flush = |rows: &mut Vec<DiffRow>, until_a: usize, until_b: usize, ia: &mut usize, ib: &mut usize| {
            while *ib < self.only_in_b.len() && self.only_in_b[*ib] < until_b {
                rows.push(DiffRow::OnlyB(self.only_in_b[*ib]));
                *ib += 1;
            }
            while *ia < self.only_in_a.len() && self.only_in_a[*ia] < until_a {
                rows.push(DiffRow::OnlyA(self.only_in_a[*ia]));
                *ia += 1;
            }
        };
        for &(i, j) in &self.lcs_pairs {
            flush(&mut rows, i, j, &mut ia, &mut ib);
            rows.push(DiffRow::Both(i, j));
        }
        flush(&mut rows, usize::MAX, usize::MAX, &mut ia, &mut ib);
        rows
    }
}

/// One row of a merged diff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffRow {
    Both(usize, usize),
    OnlyA(usize),
    OnlyB(usize),
}

/// Aligns `a` against `b`. Either side may be empty.
pub fn lcs<T: Eq>(a: &[T], b: &[T]) -> AlignmentResult {
    let mut myers = Myers::new(a, b);
    myers.conquer(0, a.len(), 0, b.len());
    let lcs_pairs = myers.matches;

    let mut only_in_a = Vec::with_capacity(a.len() - lcs_pairs.len());
    let mut only_in_b = Vec::with_capacity(b.len() - lcs_pairs.len());
    let (mut next_a, mut next_b) = (0, 0);
    for &(i, j) in &lcs_pairs {
        only_in_a.extend(next_a..i);
        only_in_b.extend(next_b..j);
        next_a = i + 1;
        next_b = j + 1;
    }
    only_in_a.extend(next_a..a.len());
    only_in_b.extend(next_b..b.len());

    let nlcs = match (a.len(), b.len()) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        (la, lb) => normalized(lcs_pairs.len(), la, lb),
    };
    AlignmentResult {
        lcs_pairs,
        only_in_a,
        only_in_b,
        nlcs,
    }
}

#[inline]
fn normalized(lcs_len: usize, la: usize, lb: usize) -> f64 {
    lcs_len as f64 / (la as f64 * lb as f64).sqrt()
}

/// Normalized LCS similarity in `[0, 1]`; both inputs must be non-empty.
pub fn nlcs<T: Eq>(a: &[T], b: &[T]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(lcs(a, b).nlcs)
}

/// The training trace most similar to `test`, with the alignment against it.
///
/// Ties go to the lowest index. Alignments run in parallel; the reduction is
/// deterministic.
pub fn select_reference<T, S>(test: &[T], training: &[S]) -> Result<(usize, AlignmentResult)>
where
    T: Eq + Sync,
    S: AsRef<[T]> + Sync,
{
    if training.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if test.is_empty() || training.iter().any(|t| t.as_ref().is_empty()) {
        return Err(Error::EmptySequence);
    }
    let alignments: Vec<AlignmentResult> = training
        .par_iter()
        .map(|t| lcs(test, t.as_ref()))
        .collect();
    let mut best = 0;
    for (i, al) in alignments.iter().enumerate().skip(1) {
        if al.nlcs > alignments[best].nlcs {
            best = i;
        }
    }
    let result = alignments.into_iter().nth(best).expect("non-empty");
    Ok((best, result))
}

/// Furthest-reaching x per diagonal, indexable by negative diagonals.
struct Frontier {
    v: Vec<isize>,
    offset: isize,
}

impl Frontier {
    fn new(max_d: usize) -> Self {
        let offset = max_d as isize + 1;
        Frontier {
            v: vec![0; 2 * max_d + 3],
            offset,
        }
    }

    #[inline]
    fn get(&self, k: isize) -> isize {
        self.v[(k + self.offset) as usize]
    }

    #[inline]
    fn set(&mut self, k: isize, x: isize) {
        self.v[(k + self.offset) as usize] = x;
    }
}

struct Myers<'a, T> {
    a: &'a [T],
    b: &'a [T],
    forward: Frontier,
    backward: Frontier,
    matches: Vec<(usize, usize)>,
}

impl<'a, T: Eq> Myers<'a, T> {
    fn new(a: &'a [T], b: &'a [T]) -> Self {
        let max_d = (a.len() + b.len()).div_ceil(2);
        Myers {
            a,
            b,
            forward: Frontier::new(max_d),
            backward: Frontier::new(max_d),
            matches: Vec::with_capacity(a.len().min(b.len())),
        }
    }

    fn conquer(&mut self, mut a_lo: usize, mut a_hi: usize, mut b_lo: usize, mut b_hi: usize) {
        while a_lo < a_hi && b_lo < b_hi && self.a[a_lo] == self.b[b_lo] {
            self.matches.push((a_lo, b_lo));
            a_lo += 1;
            b_lo += 1;
        }
        let mut suffix = 0;
        while a_lo < a_hi && b_lo < b_hi && self.a[a_hi - 1] == self.b[b_hi - 1] {
            a_hi -= 1;
            b_hi -= 1;
            suffix += 1;
        }
        if a_lo < a_hi && b_lo < b_hi {
            let (x, y) = self.middle_snake(a_lo, a_hi, b_lo, b_hi);
            debug_assert!((x, y) != (a_lo, b_lo) && (x, y) != (a_hi, b_hi));
            self.conquer(a_lo, x, b_lo, y);
            self.conquer(x, a_hi, y, b_hi);
        }
        for s in 0..suffix {
            self.matches.push((a_hi + s, b_hi + s));
        }
    }

    /// A point on an optimal edit path strictly inside the box, for a box
    /// whose first and last symbols differ.
    fn middle_snake(&mut self, a_lo: usize, a_hi: usize, b_lo: usize, b_hi: usize) -> (usize, usize) {
        let (a, b) = (self.a, self.b);
        let n = (a_hi - a_lo) as isize;
        let m = (b_hi - b_lo) as isize;
        let delta = n - m;
        let odd = delta & 1 != 0;
        let max_d = (n + m + 1) / 2;
        self.forward.set(1, 0);
        self.backward.set(1, 0);

        for d in 0..=max_d {
            let mut k = -d;
            while k <= d {
                let fw = &self.forward;
                let mut x = if k == -d || (k != d && fw.get(k - 1) < fw.get(k + 1)) {
                    fw.get(k + 1)
                } else {
                    fw.get(k - 1) + 1
                };
                let mut y = x - k;
                let (x0, y0) = (x, y);
                while x < n && y < m && a[a_lo + x as usize] == b[b_lo + y as usize] {
                    x += 1;
                    y += 1;
                }
                self.forward.set(k, x);
                if odd && (k - delta).abs() < d && x + self.backward.get(delta - k) >= n {
                    return (a_lo + x0 as usize, b_lo + y0 as usize);
                }
                k += 2;
            }

            let mut k = -d;
            while k <= d {
                let bw = &self.backward;
                let mut x = if k == -d || (k != d && bw.get(k - 1) < bw.get(k + 1)) {
                    bw.get(k + 1)
                } else {
                    bw.get(k - 1) + 1
                };
                let mut y = x - k;
                while x < n && y < m && a[a_hi - 1 - x as usize] == b[b_hi - 1 - y as usize] {
                    x += 1;
                    y += 1;
                }
                self.backward.set(k, x);
                if !odd && (k - delta).abs() <= d && x + self.forward.get(delta - k) >= n {
                    return ((a_hi as isize - x) as usize, (b_hi as isize - y) as usize);
                }
                k += 2;
            }
        }
        unreachable!("the forward and backward searches always meet")
    }
}

impl AsRef<[crate::trace::SymbolId]> for crate::trace::EventSequence {
    fn as_ref(&self) -> &[crate::trace::SymbolId] {
        self.symbols()
    }
}
