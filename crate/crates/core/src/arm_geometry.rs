//! Tracked arm frames to virtual sensor channels.
//!
//! Each frame's six reference points are interpolated by a quintic
//! `y(x)`; every interval between neighbouring reference points is then cut
//! into pieces of equal arc length along the curve. The y-coordinates of the
//! resulting endpoints are the cells of the analysed field.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpatioTemporalField;

pub const N_REFERENCE: usize = 6;
pub const DEFAULT_PER_INTERVAL: usize = 20;
/// Relative accuracy targeted by arc-length quadrature and root finding.
const ARC_TOL: f64 = 1e-13;
const MAX_DEPTH: u32 = 48;

/// Six `(x, y)` reference points of one timestep, ordered base to tip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFrame {
    pub t: i64,
    pub points: [(f64, f64); N_REFERENCE],
}

impl ReferenceFrame {
    /// Validates finiteness and strict monotonicity of x.
    pub fn new(t: i64, points: [(f64, f64); N_REFERENCE]) -> Result<Self> {
        if let Some((n, p)) = points
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.0.is_finite() && p.1.is_finite()))
        {
            return Err(Error::DegenerateFrame(format!(
                "point R{} = ({}, {}) is not finite",
                n + 1,
                p.0,
                p.1
            )));
        }
        let steps: Vec<f64> = points.windows(2).map(|w| w[1].0 - w[0].0).collect();
        if let Some(n) = steps.iter().position(|&d| d == 0.0) {
            return Err(Error::DegenerateFrame(format!(
                "R{} and R{} share x = {}",
                n + 1,
                n + 2,
                points[n].0
            )));
        }
        let up = steps[0] > 0.0;
        if let Some(n) = steps.iter().position(|&d| (d > 0.0) != up) {
            return Err(Error::DegenerateFrame(format!(
                "x is not monotone at R{} (curve is not single-valued in x)",
                n + 2
            )));
        }
        Ok(Self { t, points })
    }

    pub fn xs(&self) -> [f64; N_REFERENCE] {
        self.points.map(|p| p.0)
    }
}

/// Quintic through the reference points.
///
/// Solved in the centred, scaled variable `u = (x - center) / scale`;
/// `coeffs` holds the same polynomial expanded in raw `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialFit {
    /// `a5, a4, a3, a2, a1, a0` of `y = a5 x^5 + ... + a0`.
    pub coeffs: [f64; 6],
    /// Coefficients of `u^0..u^5`.
    pub normalized: [f64; 6],
    pub center: f64,
    pub scale: f64,
    /// Largest absolute deviation at the reference points.
    pub residual: f64,
}

impl PolynomialFit {
    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.scale;
        self.normalized.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    /// `dy/dx`.
    pub fn slope(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.scale;
        let d = (1..6)
            .rev()
            .fold(0.0, |acc, k| acc * u + k as f64 * self.normalized[k]);
        d / self.scale
    }

    fn speed(&self, x: f64) -> f64 {
        self.slope(x).hypot(1.0)
    }

    /// Arc length of the curve between `a` and `b` (`a <= b`).
    pub fn arc_length(&self, a: f64, b: f64) -> Result<f64> {
        let fa = self.speed(a);
        let fb = self.speed(b);
        let m = 0.5 * (a + b);
        let fm = self.speed(m);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        let tol = ARC_TOL * (b - a).abs().max(f64::MIN_POSITIVE);
        self.simpson(a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
    }

    #[allow(clippy::too_many_arguments)]
    fn simpson(&self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (self.speed(lm), self.speed(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol || (b - a).abs() <= 4.0 * f64::EPSILON * m.abs().max(1.0) {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::Tolerance(format!(
                "arc-length quadrature did not converge on [{a}, {b}]"
            )));
        }
        Ok(self.simpson(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + self.simpson(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }
}

/// Raw-`x` coefficients (lowest degree first) of `sum c_k ((x - center) / scale)^k`.
fn expand(normalized: &[f64; 6], center: f64, scale: f64) -> [f64; 6] {
    // Horner over polynomials in x, with u = x/scale - center/scale
    let (u1, u0) = (1.0 / scale, -center / scale);
    let mut acc = [0.0; 6];
    for &c in normalized.iter().rev() {
        let mut next = [0.0; 6];
        for (d, &a) in acc.iter().enumerate() {
            next[d] += a * u0;
            if d + 1 < 6 {
                next[d + 1] += a * u1;
            }
        }
        next[0] += c;
        acc = next;
    }
    acc
}

/// Least-squares (minimum-norm if singular) quintic through the frame's
/// points, via SVD of the scaled Vandermonde matrix.
pub fn fit_quintic(frame: &ReferenceFrame) -> Result<PolynomialFit> {
    let xs = frame.xs();
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    let center = 0.5 * (lo + hi);
    let scale = 0.5 * (hi - lo);
    if !(scale > 0.0) {
        return Err(Error::DegenerateFrame("reference points span no x range".into()));
    }
    let v = DMatrix::from_fn(N_REFERENCE, 6, |r, c| ((xs[r] - center) / scale).powi(c as i32));
    let y = DVector::from_iterator(N_REFERENCE, frame.points.iter().map(|p| p.1));
    let svd = v.svd(true, true);
    let eps = 1e-13 * svd.singular_values.max();
    let sol = svd
        .solve(&y, eps)
        .map_err(|e| Error::DegenerateFrame(format!("pseudo-inverse failed: {e}")))?;
    let normalized: [f64; 6] = std::array::from_fn(|k| sol[k]);
    let low_first = expand(&normalized, center, scale);
    let mut fit = PolynomialFit {
        coeffs: std::array::from_fn(|k| low_first[5 - k]),
        normalized,
        center,
        scale,
        residual: 0.0,
    };
    if fit.coeffs.iter().chain(&fit.normalized).any(|c| !c.is_finite()) {
        return Err(Error::DegenerateFrame("non-finite polynomial coefficients".into()));
    }
    fit.residual = frame
        .points
        .iter()
        .map(|&(x, y)| (fit.eval(x) - y).abs())
        .fold(0.0, f64::max);
    Ok(fit)
}

/// Arc-length-equidistant points on the fitted curve, base to tip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampledSkeleton {
    pub points: Vec<(f64, f64)>,
    pub per_interval: usize,
    /// Arc length of each reference interval.
    pub interval_lengths: Vec<f64>,
}

impl ResampledSkeleton {
    /// Skeleton index of reference point `k` (zero-based).
    pub fn reference_index(&self, k: usize) -> usize {
        k * self.per_interval
    }
}

/// Solves `offset + arc(a, a + dir * w) = target` for `w` in `[lo, hi]`
/// by safeguarded Newton iteration.
fn locate(fit: &PolynomialFit, a: f64, dir: f64, from: f64, target_len: f64, hi: f64, total: f64) -> Result<f64> {
    let x_of = |w: f64| a + dir * w;
    let (mut lo, mut hi) = (from, hi);
    let mut w = from + target_len / fit.speed(x_of(from));
    for _ in 0..200 {
        if !(w > lo && w < hi) {
            w = 0.5 * (lo + hi);
        }
        let (xa, xb) = (x_of(from), x_of(w));
        let s = fit.arc_length(xa.min(xb), xa.max(xb))?;
        let f = s - target_len;
        if f.abs() <= ARC_TOL * total || hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
            return Ok(w);
        }
        if f > 0.0 {
            hi = w;
        } else {
            lo = w;
        }
        w -= f / fit.speed(xb);
    }
    Err(Error::Tolerance("arc-length root finding did not converge".into()))
}

/// Cuts every interval between consecutive `reference_x` into
/// `per_interval` pieces of equal arc length along `fit`.
pub fn resample_equidistant(
    fit: &PolynomialFit,
    reference_x: &[f64],
    per_interval: usize,
) -> Result<ResampledSkeleton> {
    if per_interval == 0 {
        return Err(Error::InvalidConfig("per_interval must be at least 1".into()));
    }
    if reference_x.len() < 2 {
        return Err(Error::InsufficientData("need at least two reference points".into()));
    }
    let mut points = vec![(reference_x[0], fit.eval(reference_x[0]))];
    let mut interval_lengths = Vec::with_capacity(reference_x.len() - 1);
    for pair in reference_x.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let dir = (b - a).signum();
        let width = (b - a).abs();
        let total = fit.arc_length(a.min(b), a.max(b))?;
        let piece = total / per_interval as f64;
        let mut w = 0.0;
        for m in 1..per_interval {
            // each point is placed relative to the previous one; remaining
            // arc is re-measured so errors do not accumulate
            let done = fit.arc_length(a.min(a + dir * w), a.max(a + dir * w))?;
            w = locate(fit, a, dir, w, m as f64 * piece - done, width, total)?;
            let x = a + dir * w;
            points.push((x, fit.eval(x)));
        }
        points.push((b, fit.eval(b)));
        interval_lengths.push(total);
    }
    Ok(ResampledSkeleton {
        points,
        per_interval,
        interval_lengths,
    })
}

/// Fits and resamples one frame.
pub fn skeleton(frame: &ReferenceFrame, per_interval: usize) -> Result<ResampledSkeleton> {
    let fit = fit_quintic(frame)?;
    resample_equidistant(&fit, &frame.xs(), per_interval)
}

/// Field of skeleton y-coordinates, one cell per endpoint and one column per
/// frame. Failures carry the frame's timestep.
pub fn build_field(frames: &[ReferenceFrame], per_interval: usize) -> Result<SpatioTemporalField> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InsufficientData("no frames".into()))?;
    let skeletons: Vec<ResampledSkeleton> = frames
        .par_iter()
        .map(|f| {
            skeleton(f, per_interval).map_err(|e| Error::Frame {
                t: f.t,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let n_cells = skeletons[0].points.len();
    let rows = (0..n_cells)
        .map(|c| skeletons.iter().map(|s| s.points[c].1).collect())
        .collect();
    let labels = (1..=n_cells).map(|n| format!("S{n}")).collect();
    SpatioTemporalField::with_labels(rows, labels, first.t)
}
