//! Centered majority vote over window decisions.
//!
//! With an odd window `k` and `h = k / 2`, the smoothed label of window `i`
//! is the majority of raw labels `i − h ..= i + h`. Near either end the
//! vote window is shifted inward to stay `k` long, so an isolated flip at
//! the first or last window is outvoted like any other. Sequences shorter
//! than `k` vote over everything, ties going negative. Online use emits
//! each decision `h` windows late, once its right-hand neighbours are
//! known; the first `h` decisions wait for `k` raw labels.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("smoothing window must be odd and positive, got {0}")]
pub struct SmoothingError(pub usize);

#[derive(Debug, Clone)]
pub struct MajoritySmoother {
    k: usize,
    raw: Vec<bool>,
    next: usize,
}

impl MajoritySmoother {
    pub fn new(k: usize) -> Result<Self, SmoothingError> {
        if k == 0 || k.is_multiple_of(2) {
            return Err(SmoothingError(k));
        }
        Ok(Self { k, raw: Vec::new(), next: 0 })
    }

    pub fn delay(&self) -> usize {
        self.k / 2
    }

    /// First index of the vote window for `i` among `n` known labels.
    fn window_start(&self, i: usize, n: usize) -> usize {
        i.saturating_sub(self.k / 2).min(n.saturating_sub(self.k))
    }

    fn decide(&self, i: usize, n: usize) -> bool {
        let lo = self.window_start(i, n);
        let hi = (lo + self.k).min(n);
        let votes = self.raw[lo..hi].iter().filter(|&&v| v).count();
        2 * votes > hi - lo
    }

    /// Adds the next raw decision and returns `(window index, smoothed)`
    /// for every window whose neighbourhood is now complete.
    pub fn push(&mut self, raw: bool) -> Vec<(usize, bool)> {
        self.raw.push(raw);
        let n = self.raw.len();
        let mut out = Vec::new();
        while n >= self.k && self.next + self.delay() < n {
            out.push((self.next, self.decide(self.next, n)));
            self.next += 1;
        }
        out
    }

    /// Emits the held-back tail, treating the sequence as finished.
    pub fn finish(&mut self) -> Vec<(usize, bool)> {
        let n = self.raw.len();
        let out = (self.next..n).map(|i| (i, self.decide(i, n))).collect();
        self.next = n;
        out
    }
}

pub fn smooth_labels(raw: &[bool], k: usize) -> Result<Vec<bool>, SmoothingError> {
    let mut s = MajoritySmoother::new(k)?;
    let mut out: Vec<bool> = raw.iter().flat_map(|&r| s.push(r)).map(|(_, v)| v).collect();
    out.extend(s.finish().into_iter().map(|(_, v)| v));
    Ok(out)
}
