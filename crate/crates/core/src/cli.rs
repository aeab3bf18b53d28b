//! The `stinfo` command-line tool.
//!
//! Settings come from built-in defaults, then an optional flat
//! `key = value` config file, then flags of the same names. Every command
//! writes a JSON manifest beside its outputs.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::arm_geometry::{build_field, DEFAULT_PER_INTERVAL};
use crate::error::{Error, Result};
use crate::estimators::{
    check_interior, permutation_entropy, value_entropy, Design, MeasureConfig, Sender,
};
use crate::field::SpatioTemporalField;
use crate::io::{read_field, read_series, read_tracker, write_field, write_matrix};
use crate::localizer::{cycle_average, lmsit_profile, lmsit_summary};
use crate::pipeline::{
    bias_corrected, delay_scan, discard_transient, pairwise_scan, task_key, trial_average,
    Corrected, SurrogateSpec, DEFAULT_LOCAL_TAUS, DEFAULT_SCAN_TAUS, DEFAULT_TRANSIENT,
};
use crate::symbolization::{symbolize, TieRule};
use crate::synthetic::{generate_chain_with_drive, ChainSpec, DriveKind, Impulse, NoiseKind, RNG_NAME};

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "STINFO_THREADS";
/// Default fraction of tied windows above which a warning is printed.
pub const DEFAULT_TIE_WARN: f64 = 0.05;

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Format(_) | Error::InvalidSample { .. } => 2,
        Error::InsufficientData(_) => 3,
        Error::Tolerance(_) => 4,
        _ => 1,
    }
}

#[derive(Parser, Debug)]
#[command(name = "stinfo", version, about = "Permutation-based information transfer for spatiotemporal series")]
pub struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = THREADS_ENV, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit tracker frames and resample them into a virtual-sensor field.
    FitArm(FitArmArgs),
    /// Generate a synthetic delayed chain.
    Synth(SynthArgs),
    /// Evaluate one measure on a field.
    Measure(MeasureArgs),
    /// Bias-corrected delay scans (pairwise, one pair, or from an external sender).
    Scan(ScanArgs),
    /// Local MSIT profiles and their aggregates.
    Local(LocalArgs),
}

/// Keys accepted by config files and the matching flags.
const CONFIG_KEYS: &[&str] = &[
    "k", "l", "m", "tau", "n_r", "t_r", "tie_rule", "n_shuffles", "seed", "target", "taus",
    "transient", "tie_warn", "period", "n_cycles", "origin",
];

#[derive(Args, Debug, Default, Clone)]
#[command(rename_all = "snake_case")]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Receiver past length.
    #[arg(long = "k", alias = "K")]
    pub k: Option<String>,
    /// Sender block length.
    #[arg(long = "l", alias = "L")]
    pub l: Option<String>,
    /// Condition block length.
    #[arg(long = "m", alias = "M")]
    pub m: Option<String>,
    #[arg(long)]
    pub tau: Option<String>,
    /// Neighbourhood radius.
    #[arg(long = "n_r", alias = "N_r")]
    pub n_r: Option<String>,
    /// Neighbourhood depth.
    #[arg(long = "t_r", alias = "T_r")]
    pub t_r: Option<String>,
    /// `recent-first` or `older-first`.
    #[arg(long)]
    pub tie_rule: Option<String>,
    #[arg(long)]
    pub n_shuffles: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Shuffled channel: `sender` or `receiver`.
    #[arg(long)]
    pub target: Option<String>,
    /// Delays, e.g. `1..12`, `1-12` or `1,3,5`.
    #[arg(long)]
    pub taus: Option<String>,
    /// Leading timesteps to discard.
    #[arg(long)]
    pub transient: Option<String>,
    /// Tie fraction above which a warning is printed.
    #[arg(long)]
    pub tie_warn: Option<String>,
    /// Drive period for cycle averaging.
    #[arg(long)]
    pub period: Option<String>,
    #[arg(long)]
    pub n_cycles: Option<String>,
    /// First timestep (after discard) of cycle 0.
    #[arg(long)]
    pub origin: Option<String>,
}

impl ConfigArgs {
    fn flags(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("k", &self.k),
            ("l", &self.l),
            ("m", &self.m),
            ("tau", &self.tau),
            ("n_r", &self.n_r),
            ("t_r", &self.t_r),
            ("tie_rule", &self.tie_rule),
            ("n_shuffles", &self.n_shuffles),
            ("seed", &self.seed),
            ("target", &self.target),
            ("taus", &self.taus),
            ("transient", &self.transient),
            ("tie_warn", &self.tie_warn),
            ("period", &self.period),
            ("n_cycles", &self.n_cycles),
            ("origin", &self.origin),
        ]
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected `key = value`", n + 1)))?;
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

fn normalize_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('-', "_")
}

/// Delay list from `a..b`, `a..=b`, `a-b`, `a,b,c` or a single value.
pub fn parse_taus(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Format(format!("invalid delay list `{s}`"));
    let num = |x: &str| x.trim().parse::<usize>().map_err(|_| bad());
    let s = s.trim();
    let range = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .or_else(|| s.split_once('-'));
    let taus: Vec<usize> = if let Some((a, b)) = range {
        (num(a)?..=num(b)?).collect()
    } else {
        s.split(',').map(num).collect::<Result<_>>()?
    };
    if taus.is_empty() || taus.contains(&0) {
        return Err(bad());
    }
    Ok(taus)
}

/// Fully resolved analysis settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub measure: MeasureConfig,
    pub surrogate: SurrogateSpec,
    /// `None` selects the command's default range.
    pub taus: Option<Vec<usize>>,
    pub transient: usize,
    pub tie_warn: f64,
    pub period: Option<usize>,
    pub n_cycles: Option<usize>,
    pub origin: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            measure: MeasureConfig::default(),
            surrogate: SurrogateSpec::default(),
            taus: None,
            transient: DEFAULT_TRANSIENT,
            tie_warn: DEFAULT_TIE_WARN,
            period: None,
            n_cycles: None,
            origin: 0,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Format(format!("invalid value `{v}` for `{key}`")))
}

impl Settings {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let key = normalize_key(key);
        let k = key.as_str();
        match k {
            "k" => self.measure.k = parse_value(k, v)?,
            "l" => self.measure.l = parse_value(k, v)?,
            "m" => self.measure.m = parse_value(k, v)?,
            "tau" => self.measure.tau = parse_value(k, v)?,
            "n_r" => self.measure.n_r = parse_value(k, v)?,
            "t_r" => self.measure.t_r = parse_value(k, v)?,
            "tie_rule" => {
                self.measure.tie_rule = v.parse::<TieRule>().map_err(|e| Error::Format(e.to_string()))?
            }
            "n_shuffles" => self.surrogate.n_shuffles = parse_value(k, v)?,
            "seed" => self.surrogate.seed = parse_value(k, v)?,
            "target" => self.surrogate.target = v.parse().map_err(|e: Error| Error::Format(e.to_string()))?,
            "taus" => self.taus = Some(parse_taus(v)?),
            "transient" => self.transient = parse_value(k, v)?,
            "tie_warn" => self.tie_warn = parse_value(k, v)?,
            "period" => self.period = Some(parse_value(k, v)?),
            "n_cycles" => self.n_cycles = Some(parse_value(k, v)?),
            "origin" => self.origin = parse_value(k, v)?,
            _ => {
                return Err(Error::Format(format!(
                    "unknown setting `{key}` (known: {})",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(args: &ConfigArgs) -> Result<Self> {
        let mut s = Self::default();
        if let Some(path) = &args.config {
            for (k, v) in parse_kv(&fs::read_to_string(path)?)? {
                s.set(&k, &v)?;
            }
        }
        for (k, v) in args.flags() {
            if let Some(v) = v {
                s.set(k, v)?;
            }
        }
        s.measure.validate()?;
        s.surrogate.validate()?;
        Ok(s)
    }

    pub fn taus_or(&self, default: std::ops::RangeInclusive<usize>) -> Vec<usize> {
        self.taus.clone().unwrap_or_else(|| default.collect())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path)?;
    let hash = Sha256::digest(&bytes);
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

/// Provenance record written beside every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub seed: Option<u64>,
    pub rng: &'static str,
    pub threads: usize,
    pub alignment_offset: i64,
    pub started_unix: f64,
    pub finished_unix: f64,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

struct Run {
    manifest: RunManifest,
}

impl Run {
    fn new(command: &str, args: &[String], config: impl Serialize) -> Result<Self> {
        Ok(Self {
            manifest: RunManifest {
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                command: command.into(),
                args: args.to_vec(),
                config: serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?,
                inputs: Vec::new(),
                outputs: Vec::new(),
                seed: None,
                rng: RNG_NAME,
                threads: rayon::current_num_threads(),
                alignment_offset: 0,
                started_unix: unix_now(),
                finished_unix: 0.0,
            },
        })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.inputs.push(digest(path)?);
        Ok(())
    }

    fn output(&mut self, path: &Path) -> Result<()> {
        self.manifest.outputs.push(digest(path)?);
        Ok(())
    }

    fn finish(mut self, path: &Path) -> Result<()> {
        self.manifest.finished_unix = unix_now();
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Manifest path for a single-file output.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn warn_ties(field: &SpatioTemporalField, m: usize, tie_rule: TieRule, threshold: f64) {
    let tied: Vec<(String, f64)> = (0..field.n_cells())
        .filter_map(|c| {
            let s = symbolize(&field.series(c), m, tie_rule).ok()?;
            let f = s.tie_fraction();
            (f > threshold).then(|| (field.labels()[c].clone(), f))
        })
        .collect();
    if let Some((label, f)) = tied.iter().max_by(|a, b| a.1.total_cmp(&b.1)) {
        eprintln!(
            "warning: {} of {} channels have more than {:.1}% tied windows (worst {label}: {:.1}%); \
             ordinal patterns there depend on the tie rule",
            tied.len(),
            field.n_cells(),
            100.0 * threshold,
            100.0 * f
        );
    }
}

fn cell_index(field: &SpatioTemporalField, one_based: usize) -> Result<usize> {
    if one_based == 0 || one_based > field.n_cells() {
        return Err(Error::OutOfBounds {
            channel: one_based,
            reason: format!("cells are numbered 1..={}", field.n_cells()),
        });
    }
    Ok(one_based - 1)
}

fn load_field(path: &Path, s: &Settings) -> Result<SpatioTemporalField> {
    let field = discard_transient(&read_field(path)?, s.transient)?;
    let m = (s.measure.k + 1).max(s.measure.l).max(s.measure.m);
    warn_ties(&field, m, s.measure.tie_rule, s.tie_warn);
    Ok(field)
}

/// Reads an external sender aligned with the field's raw time axis.
fn load_series(path: &Path, column: Option<&str>, raw_t0: i64, raw_len: usize, transient: usize) -> Result<Vec<f64>> {
    let (xs, t0, name) = read_series(path, column)?;
    if t0 != raw_t0 || xs.len() != raw_len {
        return Err(Error::ShapeMismatch(format!(
            "series `{name}` covers t = {t0}..{} but the field covers {raw_t0}..{}",
            t0 + xs.len() as i64,
            raw_t0 + raw_len as i64
        )));
    }
    Ok(xs[transient.min(xs.len())..].to_vec())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

// ---------------------------------------------------------------- fit-arm

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
pub struct FitArmArgs {
    /// Tracker CSV: `t,x_R1,y_R1,...,x_R6,y_R6`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PER_INTERVAL)]
    pub per_interval: usize,
    /// Added to tracker timesteps to align them with other recordings.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub alignment_offset: i64,
}

fn cmd_fit_arm(a: &FitArmArgs, argv: &[String]) -> Result<()> {
    let mut run = Run::new("fit-arm", argv, serde_json::json!({ "per_interval": a.per_interval }))?;
    run.manifest.alignment_offset = a.alignment_offset;
    run.input(&a.input)?;
    let frames = read_tracker(&a.input)?;
    if let Some(n) = frames.windows(2).position(|w| w[1].t != w[0].t + 1) {
        return Err(Error::Format(format!(
            "tracker timesteps must be consecutive: {} follows {}",
            frames[n + 1].t,
            frames[n].t
        )));
    }
    let mut field = build_field(&frames, a.per_interval)?;
    field.t0 += a.alignment_offset;
    write_field(&a.out, &field)?;
    run.output(&a.out)?;
    run.finish(&manifest_path(&a.out))
}

// ---------------------------------------------------------------- synth

#[derive(Args, Debug, Default)]
#[command(rename_all = "snake_case")]
pub struct SynthArgs {
    /// Chain spec: JSON object or `key = value` lines with the flag names below.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the drive signal as `t,drive`.
    #[arg(long)]
    pub drive_out: Option<PathBuf>,
    #[arg(long)]
    pub n_cells: Option<String>,
    #[arg(long)]
    pub length: Option<String>,
    #[arg(long)]
    pub lag: Option<String>,
    #[arg(long)]
    pub gain: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    /// `random` or `square`.
    #[arg(long)]
    pub drive: Option<String>,
    /// Square-wave period.
    #[arg(long)]
    pub period: Option<String>,
    /// Steps at +1 per square-wave period (default: half).
    #[arg(long)]
    pub high: Option<String>,
    /// `gaussian` or `uniform`.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// `cell,t,magnitude[,every]` with a one-based cell; repeatable.
    #[arg(long)]
    pub impulse: Vec<String>,
}

#[derive(Default)]
struct ChainDraft {
    spec: ChainSpec,
    drive: Option<String>,
    period: Option<usize>,
    high: Option<usize>,
}

impl ChainDraft {
    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let key = normalize_key(key);
        let k = key.as_str();
        match k {
            "n_cells" => self.spec.n_cells = parse_value(k, v)?,
            "length" => self.spec.length = parse_value(k, v)?,
            "lag" => self.spec.lag = parse_value(k, v)?,
            "gain" => self.spec.gain = parse_value(k, v)?,
            "sigma" => self.spec.sigma = parse_value(k, v)?,
            "drive" => self.drive = Some(v.to_owned()),
            "period" => self.period = Some(parse_value(k, v)?),
            "high" => self.high = Some(parse_value(k, v)?),
            "noise" => {
                self.spec.noise = match v {
                    "gaussian" => NoiseKind::Gaussian,
                    "uniform" => NoiseKind::Uniform,
                    _ => return Err(Error::Format(format!("unknown noise `{v}`"))),
                }
            }
            "seed" => self.spec.seed = parse_value(k, v)?,
            "impulse" => self.spec.impulses.push(parse_impulse(v)?),
            _ => return Err(Error::Format(format!("unknown chain setting `{key}`"))),
        }
        Ok(())
    }

    fn finish(mut self) -> Result<ChainSpec> {
        match self.drive.as_deref() {
            None => {
                if let Some(period) = self.period {
                    self.spec.drive = DriveKind::SquareWave {
                        period,
                        high: self.high.unwrap_or(period / 2),
                    };
                }
            }
            Some("random") => self.spec.drive = DriveKind::RandomBinary,
            Some("square") => {
                let period = self.period.unwrap_or(20);
                self.spec.drive = DriveKind::SquareWave {
                    period,
                    high: self.high.unwrap_or(period / 2),
                };
            }
            Some(other) => return Err(Error::Format(format!("unknown drive `{other}`"))),
        }
        Ok(self.spec)
    }
}

fn parse_impulse(v: &str) -> Result<Impulse> {
    let bad = || Error::Format(format!("impulse `{v}` must be `cell,t,magnitude[,every]`"));
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if !(3..=4).contains(&parts.len()) {
        return Err(bad());
    }
    let cell: usize = parts[0].parse().map_err(|_| bad())?;
    if cell == 0 {
        return Err(bad());
    }
    Ok(Impulse {
        cell: cell - 1,
        t: parts[1].parse().map_err(|_| bad())?,
        magnitude: parts[2].parse().map_err(|_| bad())?,
        every: parts.get(3).map(|p| p.parse()).transpose().map_err(|_| bad())?,
    })
}

/// Chain spec from an optional file plus flag overrides.
pub fn resolve_chain(a: &SynthArgs) -> Result<ChainSpec> {
    let mut draft = ChainDraft::default();
    if let Some(path) = &a.spec {
        let text = fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            draft.spec = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        } else {
            for (k, v) in parse_kv(&text)? {
                draft.set(&k, &v)?;
            }
        }
    }
    let flags = [
        ("n_cells", &a.n_cells),
        ("length", &a.length),
        ("lag", &a.lag),
        ("gain", &a.gain),
        ("sigma", &a.sigma),
        ("drive", &a.drive),
        ("period", &a.period),
        ("high", &a.high),
        ("noise", &a.noise),
        ("seed", &a.seed),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            draft.set(k, v)?;
        }
    }
    for imp in &a.impulse {
        draft.set("impulse", imp)?;
    }
    let spec = draft.finish()?;
    spec.validate()?;
    Ok(spec)
}

fn cmd_synth(a: &SynthArgs, argv: &[String]) -> Result<()> {
    let spec = resolve_chain(a)?;
    let mut run = Run::new("synth", argv, &spec)?;
    run.manifest.seed = Some(spec.seed);
    if let Some(p) = &a.spec {
        run.input(p)?;
    }
    let (field, drive) = generate_chain_with_drive(&spec)?;
    write_field(&a.out, &field)?;
    run.output(&a.out)?;
    if let Some(p) = &a.drive_out {
        let d = SpatioTemporalField::with_labels(vec![drive], vec!["drive".into()], 0)?;
        write_field(p, &d)?;
        run.output(p)?;
    }
    run.finish(&manifest_path(&a.out))
}

// ---------------------------------------------------------------- measure

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
pub struct MeasureArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// entropy, pe, mi, te, ste, mit, msit or msit_st.
    #[arg(long)]
    pub measure: String,
    /// One-based sender cell.
    #[arg(long)]
    pub sender: Option<usize>,
    /// One-based receiver cell.
    #[arg(long)]
    pub receiver: usize,
    /// Subtract the mean over shuffled surrogates.
    #[arg(long)]
    pub corrected: bool,
    /// JSON result file (a manifest is written beside it).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasureOutcome {
    pub measure: String,
    pub sender: Option<usize>,
    pub receiver: usize,
    pub tau: usize,
    pub value: f64,
    pub surrogate: Option<Corrected>,
}

/// Evaluates `measure` on `field` (zero-based cells).
pub fn evaluate_measure(
    field: &SpatioTemporalField,
    measure: &str,
    sender: Option<usize>,
    j: usize,
    s: &Settings,
    corrected: bool,
) -> Result<(f64, Option<Corrected>)> {
    let cfg = &s.measure;
    let need_sender = || sender.ok_or_else(|| Error::InvalidConfig(format!("`{measure}` needs --sender")));
    let design = match measure {
        "entropy" => return Ok((value_entropy(field.cell(j))?, None)),
        "pe" => return Ok((permutation_entropy(&field.series(j), cfg.l, cfg.tie_rule)?, None)),
        "mi" => Design::mutual_information(field, Sender::Cell(need_sender()?), j, cfg.l, cfg.tau, cfg.tie_rule)?,
        "te" | "ste" => {
            Design::transfer_entropy(field, Sender::Cell(need_sender()?), j, cfg.k, cfg.l, cfg.tau, cfg.tie_rule)?
        }
        "mit" | "msit" => Design::msit(field, Sender::Cell(need_sender()?), j, &cfg.unconditioned())?,
        "msit_st" => Design::msit(field, Sender::Cell(need_sender()?), j, cfg)?,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown measure `{other}`; expected entropy, pe, mi, te, ste, mit, msit or msit_st"
            )))
        }
    };
    if corrected {
        let c = bias_corrected(&design, &s.surrogate, &task_key(Sender::Cell(sender.unwrap_or(0)), j, cfg.tau))?;
        Ok((c.value, Some(c)))
    } else {
        Ok((design.evaluate()?, None))
    }
}

fn cmd_measure(a: &MeasureArgs, argv: &[String]) -> Result<()> {
    let s = Settings::resolve(&a.config)?;
    let mut run = Run::new("measure", argv, &s)?;
    run.manifest.seed = a.corrected.then_some(s.surrogate.seed);
    run.input(&a.input)?;
    if let Some(c) = &a.config.config {
        run.input(c)?;
    }
    let field = load_field(&a.input, &s)?;
    let j = cell_index(&field, a.receiver)?;
    let i = a.sender.map(|i| cell_index(&field, i)).transpose()?;
    let (value, surrogate) = evaluate_measure(&field, &a.measure, i, j, &s, a.corrected)?;
    println!("{}", crate::io::format_f64(value));
    if let Some(out) = &a.out {
        let outcome = MeasureOutcome {
            measure: a.measure.clone(),
            sender: a.sender,
            receiver: a.receiver,
            tau: s.measure.tau,
            value,
            surrogate,
        };
        let text = serde_json::to_string_pretty(&outcome).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(out, text + "\n")?;
        run.output(out)?;
        run.finish(&manifest_path(out))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- scan

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
pub struct ScanArgs {
    /// Field CSV; repeat for trials, which are averaged.
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// One-based sender cell (with --receiver: scan a single pair).
    #[arg(long)]
    pub sender: Option<usize>,
    #[arg(long)]
    pub receiver: Option<usize>,
    /// External sender CSV (`t,<name>`), scanned against every interior receiver.
    #[arg(long, conflicts_with = "sender")]
    pub sender_series: Option<PathBuf>,
    /// Column of the external sender CSV (default: first data column).
    #[arg(long)]
    pub series_column: Option<String>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn labels_of(field: &SpatioTemporalField, cells: &[usize]) -> Vec<String> {
    cells.iter().map(|&c| field.labels()[c].clone()).collect()
}

fn cmd_scan(a: &ScanArgs, argv: &[String]) -> Result<()> {
    let s = Settings::resolve(&a.config)?;
    let taus = s.taus_or(DEFAULT_SCAN_TAUS);
    let mut run = Run::new("scan", argv, &s)?;
    run.manifest.seed = Some(s.surrogate.seed);
    for p in &a.input {
        run.input(p)?;
    }
    if let Some(c) = &a.config.config {
        run.input(c)?;
    }
    ensure_dir(&a.out)?;
    let tau_cols: Vec<String> = taus.iter().map(|t| format!("tau{t}")).collect();
    let mut written = Vec::new();

    if let Some(series_path) = &a.sender_series {
        if a.input.len() != 1 {
            return Err(Error::InvalidConfig("external-sender scans take one input".into()));
        }
        run.input(series_path)?;
        let raw = read_field(&a.input[0])?;
        let series = load_series(series_path, a.series_column.as_deref(), raw.t0, raw.n_steps(), s.transient)?;
        let field = load_field(&a.input[0], &s)?;
        let receivers: Vec<usize> = (0..field.n_cells())
            .filter(|&j| check_interior(j, s.measure.n_r, field.n_cells()).is_ok())
            .collect();
        let scans = receivers
            .iter()
            .map(|&j| delay_scan(&field, Sender::Series(&series), j, &taus, &s.measure, &s.surrogate))
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<Vec<Option<f64>>> = scans
            .iter()
            .map(|r| r.msit_by_tau.iter().copied().map(Some).collect())
            .collect();
        let labels = labels_of(&field, &receivers);
        let p = a.out.join("series_msit.csv");
        write_matrix(&p, "receiver", &labels, &tau_cols, &rows)?;
        written.push(p);
        let summary_cols: Vec<String> = ["msit_max", "tau_max", "msit_average", "noise_floor", "below_floor"]
            .map(String::from)
            .to_vec();
        let summary: Vec<Vec<Option<f64>>> = scans
            .iter()
            .map(|r| {
                vec![
                    Some(r.msit_max),
                    Some(r.tau_max as f64),
                    Some(r.msit_average),
                    Some(r.noise_floor),
                    Some(if r.below_floor { 1.0 } else { 0.0 }),
                ]
            })
            .collect();
        let p = a.out.join("series_summary.csv");
        write_matrix(&p, "receiver", &labels, &summary_cols, &summary)?;
        written.push(p);
    } else if let (Some(i), Some(j)) = (a.sender, a.receiver) {
        if a.input.len() != 1 {
            return Err(Error::InvalidConfig("single-pair scans take one input".into()));
        }
        let field = load_field(&a.input[0], &s)?;
        let (i, j) = (cell_index(&field, i)?, cell_index(&field, j)?);
        let r = delay_scan(&field, Sender::Cell(i), j, &taus, &s.measure, &s.surrogate)?;
        let cols: Vec<String> = ["msit", "raw", "surrogate_sd"].map(String::from).to_vec();
        let rows: Vec<Vec<Option<f64>>> = (0..taus.len())
            .map(|n| vec![Some(r.msit_by_tau[n]), Some(r.raw_by_tau[n]), Some(r.surrogate_sd_by_tau[n])])
            .collect();
        let p = a.out.join("scan.csv");
        write_matrix(&p, "tau", &taus.iter().map(|t| t.to_string()).collect::<Vec<_>>(), &cols, &rows)?;
        written.push(p);
        let p = a.out.join("scan_summary.json");
        fs::write(&p, serde_json::to_string_pretty(&r).map_err(|e| Error::Format(e.to_string()))? + "\n")?;
        written.push(p);
    } else if a.sender.is_some() || a.receiver.is_some() {
        return Err(Error::InvalidConfig("--sender and --receiver go together".into()));
    } else {
        let mut trials = Vec::new();
        let mut labels = Vec::new();
        for p in &a.input {
            let field = load_field(p, &s)?;
            labels = field.labels().to_vec();
            trials.push(pairwise_scan(&field, &taus, &s.measure, &s.surrogate)?);
        }
        if trials.iter().any(|t| t.n_cells != trials[0].n_cells) {
            return Err(Error::ShapeMismatch("trial fields have different cell counts".into()));
        }
        let stats: [(&str, fn(&crate::pipeline::PairwiseScan) -> Vec<Vec<Option<f64>>>); 4] = [
            ("msit_average", |p| p.msit_average()),
            ("msit_max", |p| p.msit_max()),
            ("tau_max", |p| p.tau_max()),
            ("noise_floor", |p| p.matrix_of(|r| r.noise_floor)),
        ];
        let n = trials[0].n_cells;
        for (name, f) in stats {
            let flat: Vec<Vec<Option<f64>>> =
                trials.iter().map(|t| f(t).into_iter().flatten().collect()).collect();
            let st = trial_average(&flat)?;
            let unflat = |v: &[Option<f64>]| v.chunks(n).map(<[_]>::to_vec).collect::<Vec<_>>();
            let p = a.out.join(format!("{name}.csv"));
            write_matrix(&p, "receiver", &labels, &labels, &unflat(&st.mean))?;
            written.push(p);
            if trials.len() > 1 {
                let p = a.out.join(format!("{name}_sd.csv"));
                write_matrix(&p, "receiver", &labels, &labels, &unflat(&st.sd))?;
                written.push(p);
            }
        }
    }
    for p in &written {
        run.output(p)?;
    }
    run.finish(&a.out.join("manifest.json"))
}

// ---------------------------------------------------------------- local

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
pub struct LocalArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// One-based sender; with --receiver, writes that pair's profiles only.
    #[arg(long)]
    pub sender: Option<usize>,
    #[arg(long)]
    pub receiver: Option<usize>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn cmd_local(a: &LocalArgs, argv: &[String]) -> Result<()> {
    let s = Settings::resolve(&a.config)?;
    let taus = s.taus_or(DEFAULT_LOCAL_TAUS);
    let mut run = Run::new("local", argv, &s)?;
    run.input(&a.input)?;
    if let Some(c) = &a.config.config {
        run.input(c)?;
    }
    ensure_dir(&a.out)?;
    let field = load_field(&a.input, &s)?;
    let t_cols: Vec<String> = (0..field.n_steps()).map(|t| (field.t0 + t as i64).to_string()).collect();
    let mut written = Vec::new();

    if let (Some(i), Some(j)) = (a.sender, a.receiver) {
        let (i, j) = (cell_index(&field, i)?, cell_index(&field, j)?);
        let rows = taus
            .iter()
            .map(|&tau| Ok(lmsit_profile(&field, Sender::Cell(i), j, tau, &s.measure)?.values))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<String> = taus.iter().map(|t| format!("tau{t}")).collect();
        let p = a.out.join("profile.csv");
        write_matrix(&p, "tau", &labels, &t_cols, &rows)?;
        written.push(p);
    } else if a.sender.is_some() || a.receiver.is_some() {
        return Err(Error::InvalidConfig("--sender and --receiver go together".into()));
    } else {
        let mut summary = lmsit_summary(&field, &taus, &s.measure)?;
        let labels = field.labels().to_vec();
        for (name, rows) in [("average", &summary.average), ("max", &summary.max)] {
            let p = a.out.join(format!("{name}.csv"));
            write_matrix(&p, "receiver", &labels, &t_cols, rows)?;
            written.push(p);
        }
        let mask: Vec<Vec<Option<f64>>> = summary
            .average
            .iter()
            .map(|r| r.iter().map(|v| Some(if v.is_some() { 1.0 } else { 0.0 })).collect())
            .collect();
        let p = a.out.join("mask.csv");
        write_matrix(&p, "receiver", &labels, &t_cols, &mask)?;
        written.push(p);
        if let Some(period) = s.period {
            let available = field.n_steps().saturating_sub(s.origin) / period.max(1);
            let n_cycles = s.n_cycles.unwrap_or(available);
            let cm = cycle_average(&summary, period, n_cycles, s.origin)?;
            let phases: Vec<String> = (0..period).map(|p| format!("phase{p}")).collect();
            for (name, rows) in [("cycle_average", &cm.average), ("cycle_max", &cm.max)] {
                let p = a.out.join(format!("{name}.csv"));
                write_matrix(&p, "receiver", &labels, &phases, rows)?;
                written.push(p);
            }
            summary.cycle_mean = Some(cm);
        }
    }
    for p in &written {
        run.output(p)?;
    }
    run.finish(&a.out.join("manifest.json"))
}

// ---------------------------------------------------------------- entry

/// Runs a parsed command line.
pub fn run(cli: &Cli, argv: &[String]) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::FitArm(a) => cmd_fit_arm(a, argv),
        Command::Synth(a) => cmd_synth(a, argv),
        Command::Measure(a) => cmd_measure(a, argv),
        Command::Scan(a) => cmd_scan(a, argv),
        Command::Local(a) => cmd_local(a, argv),
    })
}

/// Parses `argv`, runs it, and returns the process exit code.
pub fn main_with_args(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli, &argv[1..]) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
