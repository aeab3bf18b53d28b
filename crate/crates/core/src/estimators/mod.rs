//! Global information measures over ordinal symbols.
//!
//! Every measure is a signed combination of joint entropies of one master
//! [`JointCountTable`]. The same combination, evaluated pointwise at each
//! observed tuple, gives the local values used by the localizer.

mod table;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpatioTemporalField;
use crate::symbolization::{TieRule, TimeSeries, MAX_DIM};

pub use table::{
    build_joint_table, entropy_of_counts, max_lag, AxisSpec, JointCountTable, Marginal,
};

/// Embedding and conditioning parameters shared by all measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasureConfig {
    /// Receiver-past embedding.
    pub k: usize,
    /// Sender embedding.
    pub l: usize,
    /// Condition-source embedding.
    pub m: usize,
    pub tau: usize,
    /// Spatial radius of the condition neighbourhood.
    pub n_r: usize,
    /// Temporal depth of the condition neighbourhood.
    pub t_r: usize,
    pub tie_rule: TieRule,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            k: 2,
            l: 3,
            m: 2,
            tau: 1,
            n_r: 1,
            t_r: 1,
            tie_rule: TieRule::RecentFirst,
        }
    }
}

impl MeasureConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k < 1 || self.k + 1 > MAX_DIM {
            return bad(format!("K = {} must satisfy 1 <= K < {MAX_DIM}", self.k));
        }
        if self.l < 2 || self.l > MAX_DIM {
            return bad(format!("L = {} must satisfy 2 <= L <= {MAX_DIM}", self.l));
        }
        if self.m < 1 || self.m > MAX_DIM {
            return bad(format!("M = {} must satisfy 1 <= M <= {MAX_DIM}", self.m));
        }
        if self.tau < 1 {
            return bad("tau must be at least 1".into());
        }
        Ok(())
    }

    pub fn with_tau(mut self, tau: usize) -> Self {
        self.tau = tau;
        self
    }

    /// Same embeddings with the condition neighbourhood switched off.
    pub fn unconditioned(mut self) -> Self {
        self.n_r = 0;
        self.t_r = 0;
        self
    }
}

/// The information sender of a directed measure.
#[derive(Debug, Clone, Copy)]
pub enum Sender<'a> {
    /// A cell of the field.
    Cell(usize),
    /// A non-spatial channel aligned with the field (e.g. a force signal).
    Series(&'a [f64]),
}

impl Sender<'_> {
    pub fn cell(&self) -> Option<usize> {
        match self {
            Sender::Cell(i) => Some(*i),
            Sender::Series(_) => None,
        }
    }
}

/// One conditioning block: the `m`-window of `cell` ending `lag` steps
/// before the receiver's newest sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub cell: usize,
    /// Signed spatial offset `cell - receiver`.
    pub offset: isize,
    pub lag: usize,
    pub m: usize,
}

/// Neighbourhood blocks conditioned on by the spatiotemporal measures.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionSet {
    pub entries: Vec<ConditionEntry>,
}

impl ConditionSet {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// Checks that the condition neighbourhood of `cell` stays inside the field.
pub fn check_interior(cell: usize, n_r: usize, n_cells: usize) -> Result<()> {
    if cell >= n_cells {
        return Err(Error::OutOfBounds {
            channel: cell,
            reason: format!("field has {n_cells} cells"),
        });
    }
    if cell < n_r || cell + n_r >= n_cells {
        return Err(Error::OutOfBounds {
            channel: cell,
            reason: format!("neighbourhood radius {n_r} leaves the field of {n_cells} cells"),
        });
    }
    Ok(())
}

/// Builds the neighbourhood `{ j±r at lag tau_r : 1<=r<=N_r, 1<=tau_r<=T_r }`
/// around receiver `j`, dropping every block that shares a sample with the
/// receiver block (lags `0..=K` of `j`) or the sender block (lags
/// `tau..tau+L-1` of `sender`). `sender = None` marks a non-spatial sender,
/// which never overlaps a cell.
pub fn build_condition_set(
    sender: Option<usize>,
    j: usize,
    n_cells: usize,
    cfg: &MeasureConfig,
) -> Result<ConditionSet> {
    check_interior(j, cfg.n_r, n_cells)?;
    let receiver_block = AxisSpec::window(j, 0, cfg.k + 1);
    let sender_block = sender.map(|i| AxisSpec::window(i, cfg.tau, cfg.l));
    let mut entries = Vec::new();
    for r in 1..=cfg.n_r {
        for offset in [-(r as isize), r as isize] {
            let cell = (j as isize + offset) as usize;
            for lag in 1..=cfg.t_r {
                let block = AxisSpec::window(cell, lag, cfg.m);
                let clash = block.overlaps(&receiver_block)
                    || sender_block.as_ref().is_some_and(|s| block.overlaps(s));
                if !clash {
                    entries.push(ConditionEntry {
                        cell,
                        offset,
                        lag,
                        m: cfg.m,
                    });
                }
            }
        }
    }
    Ok(ConditionSet { entries })
}

/// A measure written as `E[ log2 ( prod c(plus) / prod c(minus) ) ]` over
/// marginal counts of one table. An empty subset stands for the total `O`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub plus: Vec<Vec<usize>>,
    pub minus: Vec<Vec<usize>>,
}

impl Decomposition {
    /// `I(A; B | C) = log c(ABC) c(C) / (c(AC) c(BC))`.
    pub fn conditional_mi(a: &[usize], b: &[usize], c: &[usize]) -> Self {
        let cat = |parts: &[&[usize]]| parts.concat();
        Self {
            plus: vec![cat(&[a, b, c]), c.to_vec()],
            minus: vec![cat(&[a, c]), cat(&[b, c])],
        }
    }

    /// Entropy-sum form: `sum H(minus) - sum H(plus)`.
    pub fn entropy_form(&self, table: &JointCountTable) -> Result<f64> {
        self.check_balanced()?;
        let h = |s: &Vec<usize>| -> Result<f64> {
            if s.is_empty() {
                Ok(0.0)
            } else {
                table.entropy(s)
            }
        };
        // paired differences cancel exactly when a receiver or sender is constant
        let mut value = 0.0;
        for (m, p) in self.minus.iter().zip(&self.plus) {
            value += h(m)? - h(p)?;
        }
        Ok(value)
    }

    fn marginals(&self, table: &JointCountTable) -> Result<(Vec<Option<Marginal>>, Vec<Option<Marginal>>)> {
        self.check_balanced()?;
        let build = |sets: &Vec<Vec<usize>>| -> Result<Vec<Option<Marginal>>> {
            sets.iter()
                .map(|s| {
                    if s.is_empty() {
                        Ok(None)
                    } else {
                        table.marginal(s).map(Some)
                    }
                })
                .collect()
        };
        Ok((build(&self.plus)?, build(&self.minus)?))
    }

    fn log_ratio(
        &self,
        table: &JointCountTable,
        key: u128,
        plus: &[Option<Marginal>],
        minus: &[Option<Marginal>],
    ) -> f64 {
        let count = |set: &Vec<usize>, m: &Option<Marginal>| -> f64 {
            match m {
                Some(m) => m.count(table.project(key, set)) as f64,
                None => table.total() as f64,
            }
        };
        let mut v = 0.0;
        for ((ps, pm), (ms, mm)) in self.plus.iter().zip(plus).zip(self.minus.iter().zip(minus)) {
            v += count(ps, pm).log2() - count(ms, mm).log2();
        }
        v
    }

    /// Probability-ratio form: `sum_x p(x) log2 ratio(x)` over observed tuples.
    pub fn ratio_form(&self, table: &JointCountTable) -> Result<f64> {
        let (plus, minus) = self.marginals(table)?;
        let n = table.total() as f64;
        Ok(table
            .entries()
            .iter()
            .map(|&(key, c)| c as f64 / n * self.log_ratio(table, key, &plus, &minus))
            .sum())
    }

    /// Pointwise log-ratio at every observation, in anchor order.
    pub fn local_values(&self, table: &JointCountTable) -> Result<Vec<f64>> {
        let (plus, minus) = self.marginals(table)?;
        // evaluate once per distinct tuple, then scatter to observations
        let per_key: Vec<f64> = table
            .entries()
            .iter()
            .map(|&(key, _)| self.log_ratio(table, key, &plus, &minus))
            .collect();
        Ok(table
            .observations()
            .iter()
            .map(|k| {
                let pos = table
                    .entries()
                    .binary_search_by_key(k, |e| e.0)
                    .expect("every observation is a table entry");
                per_key[pos]
            })
            .collect())
    }

    fn check_balanced(&self) -> Result<()> {
        if self.plus.len() != self.minus.len() {
            return Err(Error::InvalidConfig(
                "decomposition needs as many numerator as denominator terms".into(),
            ));
        }
        Ok(())
    }
}

/// Which directed or symmetric measure a [`Design`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    MutualInformation,
    TransferEntropy,
    Msit,
}

/// Source slot of the receiver in a design.
pub const RECEIVER: usize = 0;
/// Source slot of the sender in a design.
pub const SENDER: usize = 1;

/// Everything needed to count one measure: source channels, block layout,
/// and the anchor range (receiver time) of the observations.
///
/// Anchors are indices into the field's time axis; observation `n` has its
/// receiver's newest sample at `anchors.start + n`.
#[derive(Debug, Clone)]
pub struct Design<'a> {
    kind: MeasureKind,
    sources: Vec<&'a [f64]>,
    axes: Vec<AxisSpec>,
    anchors: Range<usize>,
    tie_rule: TieRule,
    decomposition: Decomposition,
    conditions: ConditionSet,
}

impl<'a> Design<'a> {
    fn assemble(
        kind: MeasureKind,
        sources: Vec<&'a [f64]>,
        axes: Vec<AxisSpec>,
        decomposition: Decomposition,
        conditions: ConditionSet,
        tie_rule: TieRule,
    ) -> Result<Self> {
        let n = sources[0].len();
        if let Some(bad) = sources.iter().find(|s| s.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "sender has {} samples, receiver {n}",
                bad.len()
            )));
        }
        if let Some((index, &value)) = sources
            .iter()
            .flat_map(|s| s.iter().enumerate())
            .find(|(_, v)| !v.is_finite())
        {
            return Err(Error::InvalidSample { index, value });
        }
        let start = max_lag(&axes);
        if start >= n {
            return Err(Error::InsufficientData(format!(
                "{n} timesteps cannot cover blocks reaching {start} steps back"
            )));
        }
        Ok(Self {
            kind,
            sources,
            axes,
            anchors: start..n,
            tie_rule,
            decomposition,
            conditions,
        })
    }

    /// Mutual information between the `L`-pattern of `j` at `t` and of the
    /// sender at `t - tau`.
    pub fn mutual_information(
        field: &'a SpatioTemporalField,
        sender: Sender<'a>,
        j: usize,
        l: usize,
        tau: usize,
        tie_rule: TieRule,
    ) -> Result<Self> {
        let sources = sources(field, sender, j, &ConditionSet::default())?;
        let axes = vec![AxisSpec::window(RECEIVER, 0, l), AxisSpec::window(SENDER, tau, l)];
        Self::assemble(
            MeasureKind::MutualInformation,
            sources,
            axes,
            Decomposition::conditional_mi(&[0], &[1], &[]),
            ConditionSet::default(),
            tie_rule,
        )
    }

    /// Delayed transfer entropy on ordinal symbols. The receiver's future
    /// sample at `t` and its `K`-past ending at `t - tau` are ranked together
    /// as one `K+1` pattern; the sender block is the `L`-window ending at
    /// `t - tau`. For `tau = 1` the joint block is the contiguous window.
    pub fn transfer_entropy(
        field: &'a SpatioTemporalField,
        sender: Sender<'a>,
        j: usize,
        k: usize,
        l: usize,
        tau: usize,
        tie_rule: TieRule,
    ) -> Result<Self> {
        if sender.cell() == Some(j) {
            return Err(Error::InvalidConfig("sender and receiver coincide".into()));
        }
        if tau < 1 {
            return Err(Error::InvalidConfig("tau must be at least 1".into()));
        }
        let sources = sources(field, sender, j, &ConditionSet::default())?;
        let past: Vec<usize> = (tau..tau + k).collect();
        let mut joint = vec![0];
        joint.extend(&past);
        let axes = vec![
            AxisSpec::with_lags(RECEIVER, joint)?,
            AxisSpec::with_lags(RECEIVER, past)?,
            AxisSpec::window(SENDER, tau, l),
        ];
        Self::assemble(
            MeasureKind::TransferEntropy,
            sources,
            axes,
            Decomposition::conditional_mi(&[0], &[2], &[1]),
            ConditionSet::default(),
            tie_rule,
        )
    }

    /// Spatiotemporal MSIT from `sender` to receiver cell `j`; with
    /// `n_r = 0` or `t_r = 0` this is the bivariate MSIT.
    ///
    /// Axes: receiver `K+1` block, its `K`-past, sender `L` block ending at
    /// `t - tau`, its `L-1` past, then one axis per condition entry.
    pub fn msit(
        field: &'a SpatioTemporalField,
        sender: Sender<'a>,
        j: usize,
        cfg: &MeasureConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let n_cells = field.n_cells();
        if j >= n_cells {
            return Err(Error::OutOfBounds {
                channel: j,
                reason: format!("field has {n_cells} cells"),
            });
        }
        if let Some(i) = sender.cell() {
            if i == j {
                return Err(Error::InvalidConfig("sender and receiver coincide".into()));
            }
            check_interior(i, cfg.n_r, n_cells)?;
        }
        let conditions = if cfg.n_r == 0 || cfg.t_r == 0 {
            ConditionSet::default()
        } else {
            build_condition_set(sender.cell(), j, n_cells, cfg)?
        };
        let sources = sources(field, sender, j, &conditions)?;
        let mut axes = vec![
            AxisSpec::window(RECEIVER, 0, cfg.k + 1),
            AxisSpec::window(RECEIVER, 1, cfg.k),
            AxisSpec::window(SENDER, cfg.tau, cfg.l),
            AxisSpec::window(SENDER, cfg.tau + 1, cfg.l - 1),
        ];
        for (n, e) in conditions.entries.iter().enumerate() {
            axes.push(AxisSpec::window(2 + n, e.lag, e.m));
        }
        let v: Vec<usize> = (4..axes.len()).collect();
        let mut past = vec![1, 3];
        past.extend(&v);
        Self::assemble(
            MeasureKind::Msit,
            sources,
            axes,
            Decomposition::conditional_mi(&[0], &[2], &past),
            conditions,
            cfg.tie_rule,
        )
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn conditions(&self) -> &ConditionSet {
        &self.conditions
    }

    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    /// Receiver-time anchors of the observations.
    pub fn anchors(&self) -> Range<usize> {
        self.anchors.clone()
    }

    pub fn sender_samples(&self) -> &'a [f64] {
        self.sources[SENDER]
    }

    pub fn table(&self) -> Result<JointCountTable> {
        build_joint_table(&self.sources, &self.axes, self.anchors.clone(), self.tie_rule)
    }

    /// Master table with the sender channel's samples replaced (e.g. shuffled);
    /// the block layout and condition set are unchanged.
    pub fn table_with_sender(&self, sender: &[f64]) -> Result<JointCountTable> {
        self.table_with_source(SENDER, sender)
    }

    /// Master table with source slot `slot` ([`RECEIVER`], [`SENDER`] or a
    /// condition channel) replaced.
    pub fn table_with_source(&self, slot: usize, samples: &[f64]) -> Result<JointCountTable> {
        if slot >= self.sources.len() {
            return Err(Error::InvalidConfig(format!("design has no source slot {slot}")));
        }
        if samples.len() != self.sources[slot].len() {
            return Err(Error::ShapeMismatch("replacement channel length differs".into()));
        }
        let mut sources = self.sources.clone();
        sources[slot] = samples;
        build_joint_table(&sources, &self.axes, self.anchors.clone(), self.tie_rule)
    }

    pub fn source_samples(&self, slot: usize) -> &'a [f64] {
        self.sources[slot]
    }

    pub fn value_of(&self, table: &JointCountTable) -> Result<f64> {
        self.decomposition.entropy_form(table)
    }

    pub fn evaluate(&self) -> Result<f64> {
        self.value_of(&self.table()?)
    }

    pub fn evaluate_with_sender(&self, sender: &[f64]) -> Result<f64> {
        self.value_of(&self.table_with_sender(sender)?)
    }
}

fn sources<'a>(
    field: &'a SpatioTemporalField,
    sender: Sender<'a>,
    j: usize,
    conditions: &ConditionSet,
) -> Result<Vec<&'a [f64]>> {
    let n_cells = field.n_cells();
    let cell = |c: usize| -> Result<&'a [f64]> {
        if c < n_cells {
            Ok(field.cell(c))
        } else {
            Err(Error::OutOfBounds {
                channel: c,
                reason: format!("field has {n_cells} cells"),
            })
        }
    };
    let mut out = vec![cell(j)?];
    out.push(match sender {
        Sender::Cell(i) => cell(i)?,
        Sender::Series(s) => s,
    });
    for e in &conditions.entries {
        out.push(cell(e.cell)?);
    }
    Ok(out)
}

/// Entropy in bits of the marginal of `table` over `subset`.
pub fn entropy(table: &JointCountTable, subset: &[usize]) -> Result<f64> {
    table.entropy(subset)
}

/// Plug-in Shannon entropy of the raw sample values (exact equality classes).
pub fn value_entropy(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut counts = Vec::new();
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            counts.push(run);
            run = 1;
        }
    }
    counts.push(run);
    Ok(entropy_of_counts(counts, samples.len() as u64))
}

/// Entropy of the `l`-dimensional ordinal-pattern distribution of `series`.
pub fn permutation_entropy(series: &TimeSeries, l: usize, tie_rule: TieRule) -> Result<f64> {
    if l == 0 || l > MAX_DIM {
        return Err(Error::InvalidConfig(format!("L = {l} outside 1..={MAX_DIM}")));
    }
    let x = series.samples();
    if x.len() < l {
        return Err(Error::InsufficientData(format!(
            "{} samples for embedding {l}",
            x.len()
        )));
    }
    let table = build_joint_table(&[x], &[AxisSpec::window(0, 0, l)], l - 1..x.len(), tie_rule)?;
    table.entropy(&[0])
}

/// Mutual information of a two-axis table.
pub fn mutual_information(table: &JointCountTable) -> Result<f64> {
    if table.axes().len() != 2 {
        return Err(Error::InvalidConfig(format!(
            "mutual information needs a two-axis table, got {}",
            table.axes().len()
        )));
    }
    let hx = table.entropy(&[0])?;
    let hy = table.entropy(&[1])?;
    let hxy = table.entropy(&[0, 1])?;
    Ok(hx + hy - hxy)
}

/// Delayed transfer entropy from cell `i` to cell `j` on ordinal symbols.
pub fn transfer_entropy(
    field: &SpatioTemporalField,
    i: usize,
    j: usize,
    k: usize,
    l: usize,
    tau: usize,
    tie_rule: TieRule,
) -> Result<f64> {
    Design::transfer_entropy(field, Sender::Cell(i), j, k, l, tau, tie_rule)?.evaluate()
}

/// Symbolic transfer entropy: transfer entropy evaluated on ordinal patterns.
/// All estimators here work on ordinal symbols, so this is the same
/// computation under its usual name.
pub fn symbolic_transfer_entropy(
    field: &SpatioTemporalField,
    i: usize,
    j: usize,
    k: usize,
    l: usize,
    tau: usize,
    tie_rule: TieRule,
) -> Result<f64> {
    transfer_entropy(field, i, j, k, l, tau, tie_rule)
}

/// Bivariate MSIT from `sender` to `receiver`.
pub fn msit(
    sender: &[f64],
    receiver: &[f64],
    k: usize,
    l: usize,
    tau: usize,
    tie_rule: TieRule,
) -> Result<f64> {
    let field = SpatioTemporalField::new(vec![receiver.to_vec()])?;
    let cfg = MeasureConfig {
        k,
        l,
        tau,
        tie_rule,
        ..MeasureConfig::default()
    }
    .unconditioned();
    Design::msit(&field, Sender::Series(sender), 0, &cfg)?.evaluate()
}

/// Spatiotemporal MSIT from cell `i` to cell `j` at delay `tau`.
pub fn msit_st(
    field: &SpatioTemporalField,
    i: usize,
    j: usize,
    tau: usize,
    cfg: &MeasureConfig,
) -> Result<f64> {
    Design::msit(field, Sender::Cell(i), j, &cfg.with_tau(tau))?.evaluate()
}
