//! The model class: every nonempty subset of `{0..p-1}` with size in a range,
//! enumerated by ascending size and then lexicographically.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::linalg::ModelIndex;
use crate::par::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelClass {
    p: usize,
    min_size: usize,
    max_size: usize,
}

/// Exact binomial coefficient, `None` on overflow.
pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc = C(n, i); acc·(n-i)/(i+1) is exact, and after removing
        // g = gcd(acc, i+1) the remaining divisor divides (n-i).
        let g = gcd(acc, (i + 1) as u128);
        let den = (i + 1) as u128 / g;
        acc = (acc / g).checked_mul((n - i) as u128 / den)?;
    }
    Some(acc)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl ModelClass {
    /// `M(k)`: all nonempty models of size at most `k`.
    pub fn up_to(p: usize, k: usize) -> Result<Self> {
        Self::sizes(p, 1, k)
    }

    /// Models of size exactly `s`.
    pub fn exactly(p: usize, s: usize) -> Result<Self> {
        Self::sizes(p, s, s)
    }

    pub fn sizes(p: usize, min_size: usize, max_size: usize) -> Result<Self> {
        if min_size < 1 || min_size > max_size || max_size > p {
            return Err(Error::input(format!(
                "model sizes must satisfy 1 <= {min_size} <= {max_size} <= p = {p}"
            )));
        }
        Ok(Self { p, min_size, max_size })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn min_size(&self) -> usize {
        self.min_size
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    /// Exact `Σ_s C(p, s)` over the size range.
    pub fn count(&self) -> Result<u128> {
        let overflow = Error::CountOverflow { p: self.p, k: self.max_size };
        let mut total: u128 = 0;
        for s in self.min_size..=self.max_size {
            let c = binomial(self.p, s).ok_or_else(|| overflow.clone())?;
            total = total.checked_add(c).ok_or_else(|| overflow.clone())?;
        }
        Ok(total)
    }

    /// `(e·p/k)^k` with `k` the maximal size; bounds the count of `M(k)`.
    pub fn count_bound(&self) -> f64 {
        let k = self.max_size as f64;
        (std::f64::consts::E * self.p as f64 / k).powf(k)
    }

    /// Count as `usize` for in-memory work; errors if it cannot be addressed.
    pub fn len(&self) -> Result<usize> {
        let c = self.count()?;
        usize::try_from(c).map_err(|_| Error::CountOverflow { p: self.p, k: self.max_size })
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> ModelIter {
        ModelIter::new(*self, 0, u128::MAX)
    }

    /// Models with enumeration ranks in `range`.
    pub fn iter_range(&self, range: Range<u128>) -> ModelIter {
        let len = range.end.saturating_sub(range.start);
        ModelIter::new(*self, range.start, len)
    }

    /// The model at a given enumeration rank.
    pub fn unrank(&self, mut rank: u128) -> Option<ModelIndex> {
        for s in self.min_size..=self.max_size {
            let c = binomial(self.p, s)?;
            if rank < c {
                return Some(ModelIndex::from_sorted(unrank_combination(self.p, s, rank)));
            }
            rank -= c;
        }
        None
    }

    /// Contiguous rank ranges that partition the enumeration; sizes differ by at
    /// most one, larger chunks first.
    pub fn chunks(&self, n_chunks: usize) -> Result<Vec<Range<u128>>> {
        if n_chunks == 0 {
            return Err(Error::input("n_chunks must be at least 1"));
        }
        let total = self.count()?;
        let n = n_chunks as u128;
        let (base, extra) = (total / n, total % n);
        let mut out = Vec::with_capacity(n_chunks);
        let mut start = 0;
        for c in 0..n {
            let len = base + u128::from(c < extra);
            out.push(start..start + len);
            start += len;
        }
        Ok(out)
    }

    /// Applies `f` to every model, in parallel over chunks, returning results
    /// in enumeration order.
    pub fn par_map<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&ModelIndex) -> T + Sync + Send,
    {
        let total = self.len()?;
        let n_chunks = (4 * workers()).clamp(1, total.max(1));
        let chunks = self.chunks(n_chunks)?;
        let parts: Vec<Vec<T>> = chunks
            .into_par_iter()
            .map(|r| self.iter_range(r).map(|m| f(&m)).collect())
            .collect();
        let mut out = Vec::with_capacity(total);
        for part in parts {
            out.extend(part);
        }
        Ok(out)
    }

    /// Maximum of `f` over the class. Ties go to the earliest model in
    /// enumeration order; `None` values are skipped.
    pub fn par_argmax<F>(&self, f: F) -> Result<Option<(f64, ModelIndex)>>
    where
        F: Fn(&ModelIndex) -> Option<f64> + Sync + Send,
    {
        let n_chunks = (4 * workers()).clamp(1, self.len()?.max(1));
        let chunks = self.chunks(n_chunks)?;
        let parts: Vec<Option<(f64, ModelIndex)>> = chunks
            .into_par_iter()
            .map(|r| {
                let mut best: Option<(f64, ModelIndex)> = None;
                for m in self.iter_range(r) {
                    if let Some(v) = f(&m) {
                        if best.as_ref().is_none_or(|(b, _)| v > *b) {
                            best = Some((v, m));
                        }
                    }
                }
                best
            })
            .collect();
        let mut best: Option<(f64, ModelIndex)> = None;
        for (v, m) in parts.into_iter().flatten() {
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, m));
            }
        }
        Ok(best)
    }
}

fn unrank_combination(p: usize, s: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(s);
    let mut next = 0;
    for pos in 0..s {
        let mut c = next;
        loop {
            let cnt = binomial(p - c - 1, s - pos - 1).expect("fits: bounded by C(p, s)");
            if rank < cnt {
                break;
            }
            rank -= cnt;
            c += 1;
        }
        out.push(c);
        next = c + 1;
    }
    out
}

/// Streaming enumerator; constant memory in the number of models.
#[derive(Debug, Clone)]
pub struct ModelIter {
    class: ModelClass,
    current: Option<Vec<usize>>,
    remaining: u128,
}

impl ModelIter {
    fn new(class: ModelClass, start: u128, len: u128) -> Self {
        let current = if len == 0 {
            None
        } else {
            class.unrank(start).map(|m| m.as_slice().to_vec())
        };
        Self { class, current, remaining: len }
    }

    fn advance(&mut self) {
        let p = self.class.p;
        let Some(cur) = self.current.as_mut() else { return };
        let s = cur.len();
        // Rightmost position that can still move.
        let mut i = s;
        while i > 0 {
            i -= 1;
            if cur[i] < p - s + i {
                cur[i] += 1;
                for t in (i + 1)..s {
                    cur[t] = cur[t - 1] + 1;
                }
                return;
            }
        }
        if s < self.class.max_size {
            *cur = (0..s + 1).collect();
        } else {
            self.current = None;
        }
    }
}

impl Iterator for ModelIter {
    type Item = ModelIndex;

    fn next(&mut self) -> Option<ModelIndex> {
        if self.remaining == 0 {
            return None;
        }
        let out = self.current.clone()?;
        self.remaining -= 1;
        self.advance();
        Some(ModelIndex::from_sorted(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), Some(10));
        assert_eq!(binomial(100, 3), Some(161_700));
        assert_eq!(binomial(3, 5), Some(0));
        assert_eq!(binomial(60, 30), Some(118_264_581_564_861_424));
        assert_eq!(binomial(130, 65), Some(95_067_625_827_960_698_145_584_333_020_095_113_100));
    }

    #[test]
    fn unrank_matches_iteration() {
        let c = ModelClass::up_to(7, 4).unwrap();
        for (r, m) in c.iter().enumerate() {
            assert_eq!(c.unrank(r as u128).unwrap(), m);
        }
    }

    #[test]
    fn overflow_is_reported() {
        let c = ModelClass::up_to(400, 200).unwrap();
        assert!(matches!(c.count(), Err(Error::CountOverflow { .. })));
    }
}
