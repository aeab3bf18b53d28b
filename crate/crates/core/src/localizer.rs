//! Local (pointwise) MSIT profiles and their aggregates.
//!
//! A profile is indexed by receiver time: the value at `t` is the log-ratio
//! of the receiver's newest pattern given its own past, the sender block
//! ending at `t - tau` and the neighbourhood, versus the sender's own past.
//! Probabilities come from the master table of the whole run, so the mean
//! of a profile over its defined support is exactly the global MSIT.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{check_interior, Design, MeasureConfig, Sender};
use crate::field::SpatioTemporalField;

/// LMSIT values of one `(sender, receiver, tau)` triple over the field's time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalProfile {
    /// Sender cell, `None` for a non-spatial sender.
    pub sender: Option<usize>,
    pub receiver: usize,
    pub tau: usize,
    pub config: MeasureConfig,
    /// `None` where some block of the measure leaves the field.
    pub values: Vec<Option<f64>>,
}

impl LocalProfile {
    pub fn defined(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().copied()
    }

    pub fn n_defined(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Arithmetic mean over the defined support.
    pub fn mean(&self) -> f64 {
        self.defined().sum::<f64>() / self.n_defined() as f64
    }

    pub fn mask(&self) -> Vec<bool> {
        self.values.iter().map(Option::is_some).collect()
    }
}

/// LMSIT profile from `sender` to receiver `j` at delay `tau`.
pub fn lmsit_profile(
    field: &SpatioTemporalField,
    sender: Sender<'_>,
    j: usize,
    tau: usize,
    cfg: &MeasureConfig,
) -> Result<LocalProfile> {
    let cfg = cfg.with_tau(tau);
    let design = Design::msit(field, sender, j, &cfg)?;
    let table = design.table()?;
    let local = design.decomposition().local_values(&table)?;
    let mut values = vec![None; field.n_steps()];
    for (slot, v) in values[design.anchors()].iter_mut().zip(local) {
        *slot = Some(v);
    }
    Ok(LocalProfile {
        sender: sender.cell(),
        receiver: j,
        tau,
        config: cfg,
        values,
    })
}

/// Average and maximum LMSIT of one receiver over a `(tau, sender)` index set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverSummary {
    pub receiver: usize,
    pub taus: Vec<usize>,
    pub senders: Vec<usize>,
    /// Defined where every term of the index set is defined.
    pub average: Vec<Option<f64>>,
    pub max: Vec<Option<f64>>,
}

/// Mean and maximum over all `tau in taus` and `i in senders` of
/// `LMSIT(i -> j, tau)` at every receiver time. Senders must lie upstream
/// (`i < j`).
pub fn lmsit_aggregate(
    field: &SpatioTemporalField,
    j: usize,
    taus: &[usize],
    senders: &[usize],
    cfg: &MeasureConfig,
) -> Result<ReceiverSummary> {
    if taus.is_empty() || senders.is_empty() {
        return Err(Error::InvalidConfig(
            "delay and sender ranges must be non-empty".into(),
        ));
    }
    if let Some(&i) = senders.iter().find(|&&i| i >= j) {
        return Err(Error::InvalidConfig(format!(
            "sender {i} is not upstream of receiver {j}"
        )));
    }
    let grid: Vec<(usize, usize)> = taus
        .iter()
        .flat_map(|&tau| senders.iter().map(move |&i| (tau, i)))
        .collect();
    let profiles: Vec<LocalProfile> = grid
        .par_iter()
        .map(|&(tau, i)| lmsit_profile(field, Sender::Cell(i), j, tau, cfg))
        .collect::<Result<_>>()?;

    let t_len = field.n_steps();
    let mut average = vec![None; t_len];
    let mut max = vec![None; t_len];
    let n = profiles.len() as f64;
    for t in 0..t_len {
        // fixed accumulation order: tau-major, then sender
        let terms: Option<Vec<f64>> = profiles.iter().map(|p| p.values[t]).collect();
        if let Some(terms) = terms {
            average[t] = Some(terms.iter().sum::<f64>() / n);
            max[t] = terms.iter().copied().reduce(f64::max);
        }
    }
    Ok(ReceiverSummary {
        receiver: j,
        taus: taus.to_vec(),
        senders: senders.to_vec(),
        average,
        max,
    })
}

/// Upstream senders admissible for receiver `j` under neighbourhood radius `n_r`.
pub fn upstream_senders(j: usize, n_r: usize, n_cells: usize) -> Vec<usize> {
    (0..j)
        .filter(|&i| check_interior(i, n_r, n_cells).is_ok())
        .collect()
}

/// Per-`(j, t)` aggregates for every receiver of the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSummary {
    /// `average[j][t]`; rows of excluded receivers are fully masked.
    pub average: Vec<Vec<Option<f64>>>,
    pub max: Vec<Vec<Option<f64>>>,
    /// Receivers that had no admissible sender or touched the boundary.
    pub excluded: Vec<usize>,
    pub cycle_mean: Option<CycleMean>,
}

/// Aggregates over upstream senders for every interior receiver.
pub fn lmsit_summary(
    field: &SpatioTemporalField,
    taus: &[usize],
    cfg: &MeasureConfig,
) -> Result<LocalSummary> {
    let n_cells = field.n_cells();
    let t_len = field.n_steps();
    let mut average = vec![vec![None; t_len]; n_cells];
    let mut max = vec![vec![None; t_len]; n_cells];
    let mut excluded = Vec::new();
    for j in 0..n_cells {
        let senders = upstream_senders(j, cfg.n_r, n_cells);
        if check_interior(j, cfg.n_r, n_cells).is_err() || senders.is_empty() {
            excluded.push(j);
            continue;
        }
        let row = lmsit_aggregate(field, j, taus, &senders, cfg)?;
        average[j] = row.average;
        max[j] = row.max;
    }
    Ok(LocalSummary {
        average,
        max,
        excluded,
        cycle_mean: None,
    })
}

/// Phase-indexed means over drive cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleMean {
    pub period: usize,
    pub n_cycles: usize,
    /// Timestep (column of the summary) where cycle 0 starts.
    pub origin: usize,
    /// `average[j][phase]`
    pub average: Vec<Vec<Option<f64>>>,
    pub max: Vec<Vec<Option<f64>>>,
}

fn fold_cycles(
    rows: &[Vec<Option<f64>>],
    period: usize,
    n_cycles: usize,
    origin: usize,
) -> Vec<Vec<Option<f64>>> {
    rows.iter()
        .map(|row| {
            (0..period)
                .map(|phase| {
                    let vals: Vec<f64> = (0..n_cycles)
                        .filter_map(|c| row[origin + c * period + phase])
                        .collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                })
                .collect()
        })
        .collect()
}

/// Averages each row of `summary` over `n_cycles` cycles of length `period`
/// starting at column `origin`. Masked points are skipped; a phase with no
/// defined point stays masked.
pub fn cycle_average(
    summary: &LocalSummary,
    period: usize,
    n_cycles: usize,
    origin: usize,
) -> Result<CycleMean> {
    if period == 0 || n_cycles == 0 {
        return Err(Error::InvalidConfig(
            "period and cycle count must be positive".into(),
        ));
    }
    let t_len = summary.average.first().map_or(0, Vec::len);
    let needed = origin + n_cycles * period;
    if needed > t_len {
        return Err(Error::InsufficientData(format!(
            "{n_cycles} cycles of {period} from step {origin} need {needed} steps, have {t_len}"
        )));
    }
    Ok(CycleMean {
        period,
        n_cycles,
        origin,
        average: fold_cycles(&summary.average, period, n_cycles, origin),
        max: fold_cycles(&summary.max, period, n_cycles, origin),
    })
}

/// First index at which a drive signal changes value.
pub fn first_switch(drive: &[f64]) -> Option<usize> {
    drive.windows(2).position(|w| w[0] != w[1]).map(|p| p + 1)
}
