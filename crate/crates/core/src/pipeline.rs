//! Experiment protocols: transient discard, shuffle-surrogate bias
//! correction, delay scans, pairwise scans and trial averaging.
//!
//! Every random draw comes from a ChaCha8 stream whose seed is a fixed mix
//! of the user seed and the task coordinates, and every reduction runs in
//! index order, so results do not depend on the thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{check_interior, Design, MeasureConfig, Sender, RECEIVER, SENDER};
use crate::field::SpatioTemporalField;

pub const DEFAULT_TRANSIENT: usize = 100;
pub const DEFAULT_SHUFFLES: usize = 50;
/// Default delay range of global scans.
pub const DEFAULT_SCAN_TAUS: std::ops::RangeInclusive<usize> = 1..=12;
/// Default delay range of local profiles.
pub const DEFAULT_LOCAL_TAUS: std::ops::RangeInclusive<usize> = 1..=20;
/// A scan maximum below this many surrogate standard deviations is flagged.
pub const FLOOR_SDS: f64 = 2.0;

/// Drops the first `n` timesteps.
pub fn discard_transient(field: &SpatioTemporalField, n: usize) -> Result<SpatioTemporalField> {
    if n == 0 {
        return Ok(field.clone());
    }
    field.skip_steps(n)
}

/// Channel permuted in surrogate replicas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShuffleTarget {
    #[default]
    Sender,
    Receiver,
}

impl std::str::FromStr for ShuffleTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sender" => Ok(Self::Sender),
            "receiver" => Ok(Self::Receiver),
            _ => Err(Error::InvalidConfig(format!("unknown shuffle target `{s}`"))),
        }
    }
}

impl std::fmt::Display for ShuffleTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sender => "sender",
            Self::Receiver => "receiver",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub n_shuffles: usize,
    pub seed: u64,
    pub target: ShuffleTarget,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        Self {
            n_shuffles: DEFAULT_SHUFFLES,
            seed: 0,
            target: ShuffleTarget::Sender,
        }
    }
}

impl SurrogateSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_shuffles == 0 {
            return Err(Error::InvalidConfig("n_shuffles must be at least 1".into()));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of an independent stream for the task with coordinates `parts`.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Stream key of a `(sender, receiver, tau)` task. Non-spatial senders use
/// a reserved sender id.
pub fn task_key(sender: Sender<'_>, j: usize, tau: usize) -> [u64; 3] {
    let i = sender.cell().map_or(u64::MAX, |i| i as u64);
    [i, j as u64, tau as u64]
}

/// Raw value, surrogate statistics and the corrected difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corrected {
    pub raw: f64,
    pub surrogate_mean: f64,
    /// Population standard deviation over the replicas.
    pub surrogate_sd: f64,
    pub value: f64,
    /// Measure on each shuffled replica, in replica order.
    pub replicas: Vec<f64>,
}

/// `raw - mean(shuffled)` for the measure `design`, with replica `k` drawn
/// from the stream `derive_seed(spec.seed, key ++ [k])`.
pub fn bias_corrected(design: &Design<'_>, spec: &SurrogateSpec, key: &[u64]) -> Result<Corrected> {
    spec.validate()?;
    let raw = design.evaluate()?;
    let slot = match spec.target {
        ShuffleTarget::Sender => SENDER,
        ShuffleTarget::Receiver => RECEIVER,
    };
    let original = design.source_samples(slot);
    let replicas: Vec<f64> = (0..spec.n_shuffles)
        .into_par_iter()
        .map(|k| {
            let mut parts = key.to_vec();
            parts.push(k as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &parts));
            let mut shuffled = original.to_vec();
            shuffled.shuffle(&mut rng);
            design.value_of(&design.table_with_source(slot, &shuffled)?)
        })
        .collect::<Result<_>>()?;
    let (mean, sd) = mean_sd(&replicas);
    Ok(Corrected {
        raw,
        surrogate_mean: mean,
        surrogate_sd: sd,
        value: raw - mean,
        replicas,
    })
}

/// Mean and population standard deviation, summed in index order.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Bias-corrected MSIT over a delay range for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayScanResult {
    pub sender: Option<usize>,
    pub receiver: usize,
    pub taus: Vec<usize>,
    /// Corrected MSIT per entry of `taus`.
    pub msit_by_tau: Vec<f64>,
    pub raw_by_tau: Vec<f64>,
    pub surrogate_sd_by_tau: Vec<f64>,
    pub msit_max: f64,
    /// First delay (in scan order) attaining `msit_max`.
    pub tau_max: usize,
    pub msit_average: f64,
    /// Mean surrogate standard deviation over the scanned delays: the noise
    /// floor of a single corrected value.
    pub noise_floor: f64,
    /// Standard deviation of the delay-averaged surrogate, i.e. the spread
    /// expected for `msit_average` under the null.
    pub surrogate_sd_average: f64,
    /// Set when `msit_max` does not clear [`FLOOR_SDS`] surrogate deviations,
    /// i.e. `tau_max` carries no information.
    pub below_floor: bool,
}

impl DelayScanResult {
    fn from_corrected(sender: Option<usize>, j: usize, taus: &[usize], c: &[Corrected]) -> Self {
        let msit_by_tau: Vec<f64> = c.iter().map(|c| c.value).collect();
        let (arg, msit_max) = msit_by_tau
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (n, v)| if v > best.1 { (n, v) } else { best });
        let n_tau = c.len() as f64;
        let msit_average = msit_by_tau.iter().sum::<f64>() / n_tau;
        let averaged: Vec<f64> = (0..c[0].replicas.len())
            .map(|k| c.iter().map(|c| c.replicas[k]).sum::<f64>() / n_tau)
            .collect();
        Self {
            sender,
            receiver: j,
            taus: taus.to_vec(),
            raw_by_tau: c.iter().map(|c| c.raw).collect(),
            surrogate_sd_by_tau: c.iter().map(|c| c.surrogate_sd).collect(),
            below_floor: msit_max <= FLOOR_SDS * c[arg].surrogate_sd,
            msit_by_tau,
            msit_max,
            tau_max: taus[arg],
            msit_average,
            noise_floor: c.iter().map(|c| c.surrogate_sd).sum::<f64>() / n_tau,
            surrogate_sd_average: mean_sd(&averaged).1,
        }
    }
}

/// Corrected `MSIT^ST(sender -> j, tau)` for every `tau` in `taus`.
pub fn delay_scan(
    field: &SpatioTemporalField,
    sender: Sender<'_>,
    j: usize,
    taus: &[usize],
    cfg: &MeasureConfig,
    spec: &SurrogateSpec,
) -> Result<DelayScanResult> {
    if taus.is_empty() {
        return Err(Error::InvalidConfig("delay range is empty".into()));
    }
    let corrected: Vec<Corrected> = taus
        .par_iter()
        .map(|&tau| {
            let design = Design::msit(field, sender, j, &cfg.with_tau(tau))?;
            bias_corrected(&design, spec, &task_key(sender, j, tau))
        })
        .collect::<Result<_>>()?;
    Ok(DelayScanResult::from_corrected(sender.cell(), j, taus, &corrected))
}

/// Delay scans of every ordered pair of interior cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseScan {
    pub n_cells: usize,
    /// `results[j][i]` for receiver `j`, sender `i`; `None` on the diagonal
    /// and for excluded cells.
    pub results: Vec<Vec<Option<DelayScanResult>>>,
    /// Cells too close to the boundary for the neighbourhood radius.
    pub excluded: Vec<usize>,
}

impl PairwiseScan {
    pub fn matrix_of(&self, f: impl Fn(&DelayScanResult) -> f64) -> Vec<Vec<Option<f64>>> {
        self.results
            .iter()
            .map(|row| row.iter().map(|r| r.as_ref().map(&f)).collect())
            .collect()
    }

    pub fn msit_average(&self) -> Vec<Vec<Option<f64>>> {
        self.matrix_of(|r| r.msit_average)
    }

    pub fn msit_max(&self) -> Vec<Vec<Option<f64>>> {
        self.matrix_of(|r| r.msit_max)
    }

    pub fn tau_max(&self) -> Vec<Vec<Option<f64>>> {
        self.matrix_of(|r| r.tau_max as f64)
    }
}

/// Runs [`delay_scan`] for all `i != j` among interior cells.
pub fn pairwise_scan(
    field: &SpatioTemporalField,
    taus: &[usize],
    cfg: &MeasureConfig,
    spec: &SurrogateSpec,
) -> Result<PairwiseScan> {
    let n = field.n_cells();
    let (interior, excluded): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&c| check_interior(c, cfg.n_r, n).is_ok());
    let pairs: Vec<(usize, usize)> = interior
        .iter()
        .flat_map(|&j| interior.iter().filter(move |&&i| i != j).map(move |&i| (j, i)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no admissible pair among {n} cells with neighbourhood radius {}",
            cfg.n_r
        )));
    }
    let scans: Vec<DelayScanResult> = pairs
        .par_iter()
        .map(|&(j, i)| delay_scan(field, Sender::Cell(i), j, taus, cfg, spec))
        .collect::<Result<_>>()?;
    let mut results = vec![vec![None; n]; n];
    for ((j, i), s) in pairs.into_iter().zip(scans) {
        results[j][i] = Some(s);
    }
    Ok(PairwiseScan {
        n_cells: n,
        results,
        excluded,
    })
}

/// Element-wise mean and population standard deviation over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub n_trials: usize,
    pub mean: Vec<Option<f64>>,
    pub sd: Vec<Option<f64>>,
}

/// Element-wise statistics over congruent trials; an element is masked if
/// it is masked in any trial.
pub fn trial_average(trials: &[Vec<Option<f64>>]) -> Result<TrialStats> {
    let first = trials
        .first()
        .ok_or_else(|| Error::InsufficientData("no trials to average".into()))?;
    if let Some(bad) = trials.iter().find(|t| t.len() != first.len()) {
        return Err(Error::ShapeMismatch(format!(
            "trial has {} entries, expected {}",
            bad.len(),
            first.len()
        )));
    }
    let (mean, sd) = (0..first.len())
        .map(|e| {
            let xs: Option<Vec<f64>> = trials.iter().map(|t| t[e]).collect();
            match xs {
                Some(xs) => {
                    let (m, s) = mean_sd(&xs);
                    (Some(m), Some(s))
                }
                None => (None, None),
            }
        })
        .unzip();
    Ok(TrialStats {
        n_trials: trials.len(),
        mean,
        sd,
    })
}

/// Per-statistic trial summaries of several delay scans of the same pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTrialStats {
    pub msit_by_tau: TrialStats,
    pub msit_max: TrialStats,
    pub tau_max: TrialStats,
    pub msit_average: TrialStats,
}

pub fn trial_average_scans(trials: &[DelayScanResult]) -> Result<ScanTrialStats> {
    if let Some(first) = trials.first() {
        if trials.iter().any(|t| t.taus != first.taus) {
            return Err(Error::ShapeMismatch("trials scanned different delays".into()));
        }
    }
    let stat = |f: &dyn Fn(&DelayScanResult) -> Vec<Option<f64>>| {
        trial_average(&trials.iter().map(f).collect::<Vec<_>>())
    };
    Ok(ScanTrialStats {
        msit_by_tau: stat(&|t| t.msit_by_tau.iter().copied().map(Some).collect())?,
        msit_max: stat(&|t| vec![Some(t.msit_max)])?,
        tau_max: stat(&|t| vec![Some(t.tau_max as f64)])?,
        msit_average: stat(&|t| vec![Some(t.msit_average)])?,
    })
}
