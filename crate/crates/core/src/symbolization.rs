//! Ordinal-pattern symbolization of scalar time series.
//!
//! A window is always passed newest-first: `window[0]` is the sample at the
//! anchor time `t`, `window[k]` the sample at `t - k`. The emitted pattern
//! lists `o(1..m)`, the one-based offsets of the window samples in ascending
//! order of value, so `o = (1, 2, .., m)` means the series decreased
//! monotonically towards `t`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported embedding dimension; `12!` fits comfortably in a `u64` code.
pub const MAX_DIM: usize = 12;

const FACTORIALS: [u64; MAX_DIM + 1] = {
    let mut f = [1u64; MAX_DIM + 1];
    let mut i = 1;
    while i <= MAX_DIM {
        f[i] = f[i - 1] * i as u64;
        i += 1;
    }
    f
};

/// Number of distinct ordinal patterns of dimension `m`.
pub fn pattern_count(m: usize) -> u64 {
    FACTORIALS[m]
}

/// How equal samples inside a window are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    /// The more recent sample (smaller offset) ranks lower.
    #[default]
    RecentFirst,
    /// The older sample (larger offset) ranks lower.
    OlderFirst,
}

impl FromStr for TieRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recent-first" | "recent" => Ok(TieRule::RecentFirst),
            "older-first" | "older" => Ok(TieRule::OlderFirst),
            other => Err(Error::InvalidConfig(format!("unknown tie rule `{other}`"))),
        }
    }
}

impl fmt::Display for TieRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TieRule::RecentFirst => "recent-first",
            TieRule::OlderFirst => "older-first",
        })
    }
}

/// A rank permutation `(o(1), .., o(m))` of `{1, .., m}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OrdinalPattern {
    ranks: Vec<usize>,
}

impl OrdinalPattern {
    /// Wraps `ranks`, checking that it is a permutation of `1..=m`.
    pub fn new(ranks: Vec<usize>) -> Result<Self> {
        let m = ranks.len();
        if m == 0 || m > MAX_DIM {
            return Err(Error::InvalidPermutation(ranks));
        }
        let mut seen = [false; MAX_DIM + 1];
        for &r in &ranks {
            if r == 0 || r > m || seen[r] {
                return Err(Error::InvalidPermutation(ranks));
            }
            seen[r] = true;
        }
        Ok(Self { ranks })
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn dim(&self) -> usize {
        self.ranks.len()
    }
}

fn validate_window(window: &[f64]) -> Result<()> {
    if window.is_empty() || window.len() > MAX_DIM {
        return Err(Error::InvalidConfig(format!(
            "embedding dimension {} outside 1..={MAX_DIM}",
            window.len()
        )));
    }
    if let Some((index, &value)) = window.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidSample { index, value });
    }
    Ok(())
}

/// Sorts the window offsets into `order[..m]`; the caller guarantees
/// `1 <= window.len() <= MAX_DIM` and finite values.
#[inline]
fn sort_offsets(window: &[f64], tie_rule: TieRule, order: &mut [usize; MAX_DIM]) {
    let m = window.len();
    for (k, slot) in order.iter_mut().enumerate().take(m) {
        *slot = k;
    }
    // insertion sort: m is tiny and the comparator is a strict total order
    let before = |a: usize, b: usize| -> bool {
        let (va, vb) = (window[a], window[b]);
        if va != vb {
            va < vb
        } else {
            match tie_rule {
                TieRule::RecentFirst => a < b,
                TieRule::OlderFirst => a > b,
            }
        }
    };
    for i in 1..m {
        let cur = order[i];
        let mut j = i;
        while j > 0 && before(cur, order[j - 1]) {
            order[j] = order[j - 1];
            j -= 1;
        }
        order[j] = cur;
    }
}

#[inline]
fn lehmer(order: &[usize]) -> u64 {
    let m = order.len();
    let mut code = 0u64;
    for i in 0..m {
        let smaller = order[i + 1..].iter().filter(|&&o| o < order[i]).count() as u64;
        code += smaller * FACTORIALS[m - 1 - i];
    }
    code
}

/// Returns the ordinal pattern of a newest-first window.
pub fn ordinal_pattern(window: &[f64], tie_rule: TieRule) -> Result<OrdinalPattern> {
    validate_window(window)?;
    let mut order = [0usize; MAX_DIM];
    sort_offsets(window, tie_rule, &mut order);
    Ok(OrdinalPattern {
        ranks: order[..window.len()].iter().map(|o| o + 1).collect(),
    })
}

/// Packed code of the ordinal pattern of `window`, without allocating.
///
/// Equivalent to `pack_pattern(&ordinal_pattern(window, tie_rule)?)`. The
/// window must be non-empty, at most [`MAX_DIM`] long and finite; callers in
/// this crate validate their series up front.
#[inline]
pub fn window_code(window: &[f64], tie_rule: TieRule) -> u64 {
    debug_assert!(!window.is_empty() && window.len() <= MAX_DIM);
    let mut order = [0usize; MAX_DIM];
    sort_offsets(window, tie_rule, &mut order);
    lehmer(&order[..window.len()])
}

/// Lehmer code of the pattern; the identity permutation packs to 0.
pub fn pack_pattern(pattern: &OrdinalPattern) -> u64 {
    let zero_based: Vec<usize> = pattern.ranks.iter().map(|r| r - 1).collect();
    lehmer(&zero_based)
}

/// Inverse of [`pack_pattern`].
pub fn unpack_pattern(code: u64, m: usize) -> Result<OrdinalPattern> {
    if m == 0 || m > MAX_DIM {
        return Err(Error::InvalidConfig(format!(
            "embedding dimension {m} outside 1..={MAX_DIM}"
        )));
    }
    if code >= FACTORIALS[m] {
        return Err(Error::CodeOutOfRange { code, m });
    }
    let mut remaining: Vec<usize> = (1..=m).collect();
    let mut rest = code;
    let mut ranks = Vec::with_capacity(m);
    for i in 0..m {
        let weight = FACTORIALS[m - 1 - i];
        let digit = (rest / weight) as usize;
        rest %= weight;
        ranks.push(remaining.remove(digit));
    }
    Ok(OrdinalPattern { ranks })
}

/// A single scalar channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: Vec<f64>,
    pub channel_id: String,
    /// Time index of `samples[0]`.
    pub t0: i64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, channel_id: impl Into<String>, t0: i64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InsufficientData("empty time series".into()));
        }
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidSample { index, value });
        }
        Ok(Self {
            samples,
            channel_id: channel_id.into(),
            t0,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Packed ordinal symbols of one series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolSeries {
    codes: Vec<u64>,
    m: usize,
    first: i64,
    tied_windows: usize,
}

impl SymbolSeries {
    pub fn codes(&self) -> &[u64] {
        &self.codes
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// First and last time index carrying a symbol (inclusive).
    pub fn valid_range(&self) -> (i64, i64) {
        (self.first, self.first + self.codes.len() as i64 - 1)
    }

    /// Pattern anchored at window end `t`, if defined.
    pub fn symbol(&self, t: i64) -> Option<OrdinalPattern> {
        let (lo, hi) = self.valid_range();
        if t < lo || t > hi {
            return None;
        }
        unpack_pattern(self.codes[(t - lo) as usize], self.m).ok()
    }

    /// Number of windows containing at least one pair of equal samples.
    pub fn tied_windows(&self) -> usize {
        self.tied_windows
    }

    pub fn tie_fraction(&self) -> f64 {
        self.tied_windows as f64 / self.codes.len() as f64
    }
}

fn has_tie(window: &[f64]) -> bool {
    window
        .iter()
        .enumerate()
        .any(|(k, a)| window[k + 1..].iter().any(|b| a == b))
}

/// Symbolizes every full window of `series`; symbol `t` covers samples `t-(m-1)..=t`.
pub fn symbolize(series: &TimeSeries, m: usize, tie_rule: TieRule) -> Result<SymbolSeries> {
    if m == 0 || m > MAX_DIM {
        return Err(Error::InvalidConfig(format!(
            "embedding dimension {m} outside 1..={MAX_DIM}"
        )));
    }
    let n = series.len();
    if n < m {
        return Err(Error::InsufficientData(format!(
            "series `{}` has {n} samples, needs at least {m}",
            series.channel_id
        )));
    }
    let x = series.samples();
    let mut window = [0f64; MAX_DIM];
    let mut codes = Vec::with_capacity(n - m + 1);
    let mut tied_windows = 0;
    for end in (m - 1)..n {
        for k in 0..m {
            window[k] = x[end - k];
        }
        let w = &window[..m];
        if has_tie(w) {
            tied_windows += 1;
        }
        codes.push(window_code(w, tie_rule));
    }
    Ok(SymbolSeries {
        codes,
        m,
        first: series.t0 + (m as i64 - 1),
        tied_windows,
    })
}
