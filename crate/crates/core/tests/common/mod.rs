//! Brute-force reference estimators for small fields.
//!
//! Symbols are plain rank vectors and probabilities are counted in ordered
//! maps, straight from the definitions; nothing here shares code with the
//! library's packed codes or sorted count tables.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stinfo::SpatioTemporalField;

pub type Sym = Vec<usize>;

/// Offsets (one-based) of a newest-first window sorted by value; equal
/// values keep the more recent sample first.
pub fn pattern(window: &[f64]) -> Sym {
    let mut idx: Vec<usize> = (0..window.len()).collect();
    idx.sort_by(|&a, &b| window[a].partial_cmp(&window[b]).unwrap().then(a.cmp(&b)));
    idx.into_iter().map(|i| i + 1).collect()
}

/// Pattern of the samples `x[t - lag]` for `lag` in `lags` (ascending).
pub fn sym(x: &[f64], t: usize, lags: &[usize]) -> Sym {
    let w: Vec<f64> = lags.iter().map(|&l| x[t - l]).collect();
    pattern(&w)
}

pub fn window_lags(end: usize, m: usize) -> Vec<usize> {
    (end..end + m).collect()
}

fn counts<K: Ord + Clone>(keys: impl Iterator<Item = K>) -> BTreeMap<K, f64> {
    let mut c = BTreeMap::new();
    for k in keys {
        *c.entry(k).or_insert(0.0) += 1.0;
    }
    c
}

pub fn entropy<K: Ord + Clone>(keys: &[K]) -> f64 {
    let n = keys.len() as f64;
    counts(keys.iter().cloned())
        .values()
        .map(|&c| -(c / n) * (c / n).log2())
        .sum()
}

/// `I(A;B|C)` and the pointwise terms, from joint relative frequencies.
pub fn cmi<A: Ord + Clone, B: Ord + Clone, C: Ord + Clone>(obs: &[(A, B, C)]) -> (f64, Vec<f64>) {
    let n = obs.len() as f64;
    let abc = counts(obs.iter().cloned());
    let ac = counts(obs.iter().map(|(a, _, c)| (a.clone(), c.clone())));
    let bc = counts(obs.iter().map(|(_, b, c)| (b.clone(), c.clone())));
    let c = counts(obs.iter().map(|(_, _, c)| c.clone()));
    let local: Vec<f64> = obs
        .iter()
        .map(|(a, b, cc)| {
            let p_abc = abc[&(a.clone(), b.clone(), cc.clone())] / n;
            let p_ac = ac[&(a.clone(), cc.clone())] / n;
            let p_bc = bc[&(b.clone(), cc.clone())] / n;
            let p_c = c[cc] / n;
            (p_abc * p_c / (p_ac * p_bc)).log2()
        })
        .collect();
    let mut global = 0.0;
    for ((a, b, cc), &k) in &abc {
        let p = k / n;
        let p_ac = ac[&(a.clone(), cc.clone())] / n;
        let p_bc = bc[&(b.clone(), cc.clone())] / n;
        let p_c = c[cc] / n;
        global += p * (p * p_c / (p_ac * p_bc)).log2();
    }
    (global, local)
}

/// Entropy of the distinct sample values.
pub fn value_entropy(x: &[f64]) -> f64 {
    let keys: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
    entropy(&keys)
}

/// Entropy of the `l`-patterns of every full window.
pub fn permutation_entropy(x: &[f64], l: usize) -> f64 {
    let keys: Vec<Sym> = (l - 1..x.len()).map(|t| sym(x, t, &window_lags(0, l))).collect();
    entropy(&keys)
}

pub fn mutual_information(rx: &[f64], sx: &[f64], l: usize, tau: usize) -> f64 {
    let obs: Vec<(Sym, Sym, ())> = (tau + l - 1..rx.len())
        .map(|t| (sym(rx, t, &window_lags(0, l)), sym(sx, t, &window_lags(tau, l)), ()))
        .collect();
    cmi(&obs).0
}

pub fn transfer_entropy(rx: &[f64], sx: &[f64], k: usize, l: usize, tau: usize) -> f64 {
    let past = window_lags(tau, k);
    let mut joint = vec![0];
    joint.extend(&past);
    let start = (tau + k - 1).max(tau + l - 1);
    let obs: Vec<(Sym, Sym, Sym)> = (start..rx.len())
        .map(|t| (sym(rx, t, &joint), sym(sx, t, &window_lags(tau, l)), sym(rx, t, &past)))
        .collect();
    cmi(&obs).0
}

/// Condition block: `(samples, lag, m)`.
pub type Cond<'a> = (&'a [f64], usize, usize);

/// MSIT with explicit condition blocks; returns the global value, the
/// receiver time of the first observation and the local values.
pub fn msit(rx: &[f64], sx: &[f64], conds: &[Cond<'_>], k: usize, l: usize, tau: usize) -> (f64, usize, Vec<f64>) {
    let mut start = k.max(tau + l - 1);
    for &(_, lag, m) in conds {
        start = start.max(lag + m - 1);
    }
    let obs: Vec<(Sym, Sym, Vec<Sym>)> = (start..rx.len())
        .map(|t| {
            let mut c = vec![sym(rx, t, &window_lags(1, k)), sym(sx, t, &window_lags(tau + 1, l - 1))];
            for &(x, lag, m) in conds {
                c.push(sym(x, t, &window_lags(lag, m)));
            }
            (sym(rx, t, &window_lags(0, k + 1)), sym(sx, t, &window_lags(tau, l)), c)
        })
        .collect();
    let (g, local) = cmi(&obs);
    (g, start, local)
}

/// Neighbourhood of receiver `j`, derived cell by cell: `(cell, lag)`
/// pairs whose `m`-window shares no sample with the sender's `l`-window.
pub fn neighbourhood(
    sender: Option<usize>,
    j: usize,
    n_r: usize,
    t_r: usize,
    m: usize,
    l: usize,
    tau: usize,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 1..=n_r {
        for cell in [j - r, j + r] {
            for lag in 1..=t_r {
                let shares = sender == Some(cell) && lag <= tau + l - 1 && tau <= lag + m - 1;
                if !shares {
                    out.push((cell, lag));
                }
            }
        }
    }
    out
}

/// `MSIT^ST` of receiver `j` from cell `i` of `rows`.
pub fn msit_st(rows: &[Vec<f64>], i: usize, j: usize, tau: usize, k: usize, l: usize, m: usize, n_r: usize, t_r: usize) -> (f64, usize, Vec<f64>) {
    let nb = neighbourhood(Some(i), j, n_r, t_r, m, l, tau);
    let conds: Vec<Cond<'_>> = nb.iter().map(|&(c, lag)| (rows[c].as_slice(), lag, m)).collect();
    msit(&rows[j], &rows[i], &conds, k, l, tau)
}

pub fn random_rows(n: usize, t: usize, seed: u64, levels: Option<u32>) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..t)
                .map(|_| match levels {
                    Some(q) => rng.random_range(0..q) as f64,
                    None => rng.random::<f64>(),
                })
                .collect()
        })
        .collect()
}

pub fn field(rows: Vec<Vec<f64>>) -> SpatioTemporalField {
    SpatioTemporalField::new(rows).unwrap()
}

/// Cumulative chord length of `y` sampled on `segments + 1` uniform points
/// of `[a, b]`, read back at `x` by linear interpolation between vertices.
pub struct Polyline {
    a: f64,
    h: f64,
    cum: Vec<f64>,
}

impl Polyline {
    pub fn new(y: impl Fn(f64) -> f64, a: f64, b: f64, segments: usize) -> Self {
        let h = (b - a) / segments as f64;
        let mut cum = vec![0.0];
        let mut prev = (a, y(a));
        for s in 1..=segments {
            let x = a + h * s as f64;
            let p = (x, y(x));
            cum.push(cum[s - 1] + (p.0 - prev.0).hypot(p.1 - prev.1));
            prev = p;
        }
        Self { a, h, cum }
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn length_to(&self, x: f64) -> f64 {
        let u = ((x - self.a) / self.h).clamp(0.0, (self.cum.len() - 1) as f64);
        let s = (u.floor() as usize).min(self.cum.len() - 2);
        let frac = u - s as f64;
        self.cum[s] + frac * (self.cum[s + 1] - self.cum[s])
    }
}

/// Largest relative deviation of consecutive skeleton spacings from the
/// interval mean, measured on a dense polyline of each reference interval.
pub fn worst_spacing_error(
    y: impl Fn(f64) -> f64 + Copy,
    reference_x: &[f64],
    skeleton_x: &[f64],
    per_interval: usize,
    segments: usize,
) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, pair) in reference_x.windows(2).enumerate() {
        let (lo, hi) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
        let line = Polyline::new(y, lo, hi, segments);
        let pts = &skeleton_x[k * per_interval..=(k + 1) * per_interval];
        let s: Vec<f64> = pts.iter().map(|&x| line.length_to(x)).collect();
        let target = line.total() / per_interval as f64;
        for w in s.windows(2) {
            worst = worst.max(((w[1] - w[0]).abs() - target).abs() / target);
        }
    }
    worst
}
