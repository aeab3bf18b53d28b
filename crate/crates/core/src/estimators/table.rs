//! Joint frequency tables over aligned ordinal blocks.
//!
//! Every probability used by a measure is a marginal of one
//! [`JointCountTable`], so all terms share one observation set.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbolization::{pattern_count, window_code, TieRule, MAX_DIM};

/// One axis of a joint table: the ordinal pattern of `channel` sampled at
/// `t - lags[0], t - lags[1], ..` for every anchor time `t`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AxisSpec {
    pub channel: usize,
    /// Strictly increasing, newest sample first.
    pub lags: Vec<usize>,
}

impl AxisSpec {
    /// Contiguous window of `m` samples ending at `t - end_lag`.
    pub fn window(channel: usize, end_lag: usize, m: usize) -> Self {
        Self {
            channel,
            lags: (end_lag..end_lag + m).collect(),
        }
    }

    pub fn with_lags(channel: usize, lags: Vec<usize>) -> Result<Self> {
        if lags.is_empty() || lags.len() > MAX_DIM || lags.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!(
                "axis lags {lags:?} must be strictly increasing with 1..={MAX_DIM} entries"
            )));
        }
        Ok(Self { channel, lags })
    }

    pub fn dim(&self) -> usize {
        self.lags.len()
    }

    pub fn max_lag(&self) -> usize {
        *self.lags.last().expect("axis has at least one lag")
    }

    /// Whether this block and `other` read a common sample.
    pub fn overlaps(&self, other: &AxisSpec) -> bool {
        self.channel == other.channel && self.lags.iter().any(|l| other.lags.contains(l))
    }
}

/// Sparse counts of packed symbol tuples.
#[derive(Debug, Clone)]
pub struct JointCountTable {
    axes: Vec<AxisSpec>,
    radices: Vec<u128>,
    strides: Vec<u128>,
    /// Sorted by key.
    entries: Vec<(u128, u64)>,
    total: u64,
    /// Packed key of each observation, in anchor order.
    observations: Vec<u128>,
    first_anchor: usize,
}

/// Counts of one marginal, with lookup by packed sub-key.
#[derive(Debug, Clone)]
pub struct Marginal {
    /// Sorted by key.
    entries: Vec<(u128, u64)>,
    total: u64,
}

impl Marginal {
    pub fn count(&self, key: u128) -> u64 {
        match self.entries.binary_search_by_key(&key, |e| e.0) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn n_keys(&self) -> usize {
        self.entries.len()
    }

    /// Plug-in Shannon entropy in bits.
    ///
    /// Counts are summed in sorted order, so the result depends only on the
    /// multiset of counts and not on axis order.
    pub fn entropy(&self) -> f64 {
        let mut counts: Vec<u64> = self.entries.iter().map(|e| e.1).collect();
        counts.sort_unstable();
        entropy_of_counts(counts, self.total)
    }
}

/// `-sum p log2 p` over the given counts; zero counts contribute nothing.
pub fn entropy_of_counts(counts: impl IntoIterator<Item = u64>, total: u64) -> f64 {
    let n = total as f64;
    let mut h = 0.0;
    for c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    // rounding can leave -0.0 or a tiny negative for a single key
    h.max(0.0)
}

/// Largest lag used by any axis; anchors must start at or after it.
pub fn max_lag(axes: &[AxisSpec]) -> usize {
    axes.iter().map(AxisSpec::max_lag).max().unwrap_or(0)
}

/// Counts one observation per anchor time in `anchors` (indices into the
/// source slices).
pub fn build_joint_table(
    sources: &[&[f64]],
    axes: &[AxisSpec],
    anchors: Range<usize>,
    tie_rule: TieRule,
) -> Result<JointCountTable> {
    if axes.is_empty() {
        return Err(Error::InvalidConfig("joint table needs at least one axis".into()));
    }
    if anchors.is_empty() {
        return Err(Error::InsufficientData("empty evaluation range".into()));
    }
    let mut radices = Vec::with_capacity(axes.len());
    let mut strides = Vec::with_capacity(axes.len());
    let mut stride: u128 = 1;
    for axis in axes {
        let src = sources.get(axis.channel).ok_or_else(|| Error::OutOfBounds {
            channel: axis.channel,
            reason: format!("only {} sources", sources.len()),
        })?;
        if axis.lags.is_empty() || axis.dim() > MAX_DIM {
            return Err(Error::InvalidConfig(format!(
                "axis dimension {} outside 1..={MAX_DIM}",
                axis.dim()
            )));
        }
        if anchors.start < axis.max_lag() || anchors.end > src.len() {
            return Err(Error::InsufficientData(format!(
                "anchors {anchors:?} leave the support of channel {} (lags up to {}, {} samples)",
                axis.channel,
                axis.max_lag(),
                src.len()
            )));
        }
        let radix = pattern_count(axis.dim()) as u128;
        radices.push(radix);
        strides.push(stride);
        stride = stride.checked_mul(radix).ok_or_else(|| {
            Error::TableTooLarge(format!("{} axes exceed the 128-bit key space", axes.len()))
        })?;
    }

    let mut observations = vec![0u128; anchors.len()];
    let mut window = [0f64; MAX_DIM];
    for (axis, &stride) in axes.iter().zip(&strides) {
        let src = sources[axis.channel];
        let m = axis.dim();
        for (slot, t) in observations.iter_mut().zip(anchors.clone()) {
            for (w, &lag) in window.iter_mut().zip(&axis.lags) {
                *w = src[t - lag];
            }
            *slot += window_code(&window[..m], tie_rule) as u128 * stride;
        }
    }

    let mut sorted = observations.clone();
    sorted.sort_unstable();
    let entries = run_lengths(sorted.into_iter().map(|k| (k, 1)));

    Ok(JointCountTable {
        axes: axes.to_vec(),
        radices,
        strides,
        entries,
        total: anchors.len() as u64,
        observations,
        first_anchor: anchors.start,
    })
}

/// Merges equal keys of a key-sorted stream.
fn run_lengths(sorted: impl Iterator<Item = (u128, u64)>) -> Vec<(u128, u64)> {
    let mut out: Vec<(u128, u64)> = Vec::new();
    for (k, c) in sorted {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += c,
            _ => out.push((k, c)),
        }
    }
    out
}

impl JointCountTable {
    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    /// Number of observations `O`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn n_keys(&self) -> usize {
        self.entries.len()
    }

    /// Anchor index of the first observation.
    pub fn first_anchor(&self) -> usize {
        self.first_anchor
    }

    fn digit(&self, key: u128, axis: usize) -> u64 {
        ((key / self.strides[axis]) % self.radices[axis]) as u64
    }

    fn check_subset(&self, subset: &[usize]) -> Result<()> {
        if subset.is_empty() {
            return Err(Error::InvalidConfig("axis subset must be non-empty".into()));
        }
        for (n, &a) in subset.iter().enumerate() {
            if a >= self.axes.len() || subset[..n].contains(&a) {
                return Err(Error::InvalidConfig(format!(
                    "invalid axis subset {subset:?} for {} axes",
                    self.axes.len()
                )));
            }
        }
        Ok(())
    }

    /// Packs the digits of `subset` of a full key into a marginal key.
    pub fn project(&self, key: u128, subset: &[usize]) -> u128 {
        let mut sub = 0u128;
        let mut stride = 1u128;
        for &a in subset {
            sub += self.digit(key, a) as u128 * stride;
            stride *= self.radices[a];
        }
        sub
    }

    /// Counts marginalized onto `subset` (in the given order).
    pub fn marginal(&self, subset: &[usize]) -> Result<Marginal> {
        self.check_subset(subset)?;
        let mut projected: Vec<(u128, u64)> = self
            .entries
            .iter()
            .map(|&(k, c)| (self.project(k, subset), c))
            .collect();
        projected.sort_unstable_by_key(|e| e.0);
        Ok(Marginal {
            entries: run_lengths(projected.into_iter()),
            total: self.total,
        })
    }

    /// Entropy in bits of the marginal over `subset`.
    pub fn entropy(&self, subset: &[usize]) -> Result<f64> {
        Ok(self.marginal(subset)?.entropy())
    }

    /// Observed tuples as per-axis pattern codes with their counts.
    pub fn tuples(&self) -> impl Iterator<Item = (Vec<u64>, u64)> + '_ {
        self.entries.iter().map(move |&(k, c)| {
            ((0..self.axes.len()).map(|a| self.digit(k, a)).collect(), c)
        })
    }

    /// Count of one tuple of per-axis codes.
    pub fn count(&self, codes: &[u64]) -> u64 {
        if codes.len() != self.axes.len()
            || codes.iter().zip(&self.radices).any(|(&c, &r)| c as u128 >= r)
        {
            return 0;
        }
        let key: u128 = codes
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| c as u128 * s)
            .sum();
        match self.entries.binary_search_by_key(&key, |e| e.0) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0,
        }
    }

    /// Observed full keys with counts, sorted by key.
    pub fn entries(&self) -> &[(u128, u64)] {
        &self.entries
    }

    /// Full key of each observation in anchor order.
    pub fn observations(&self) -> &[u128] {
        &self.observations
    }
}
