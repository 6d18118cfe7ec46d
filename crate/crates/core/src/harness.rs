//! Monte Carlo FER sweeps over SNR and retransmission probability.
//!
//! Frames are simulated in fixed-size chunks, each with its own generator
//! derived from `(seed, snr point, chunk)`, so results do not depend on the
//! number of worker threads. All `p_c` settings at one SNR share those
//! streams (common random numbers), and so do the blind and genie runs.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::calibration::{calibrate, Calibration};
use crate::channel::{snr_db_to_linear, NoiseMode, RngStream};
use crate::codebook::{enumerate, EffectiveCodebookIndex};
use crate::decoder::Projection;
use crate::error::{Error, Result};
use crate::gabor::{build_codebooks, Codebook, FrameConfig};
use crate::protocol::{run_frame, Correctness, Detection, PcRule, ProtocolConfig, Receiver, ReceiverMode};
use crate::stats::{wilson_interval, Z95};

/// Frames per independently seeded work unit.
pub const CHUNK_FRAMES: usize = 250;

pub const DEFAULT_CALIBRATION_SAMPLES: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecoderMode {
    Map,
    KnownN,
    /// Known-size search with unweighted projections.
    Plain,
}

impl DecoderMode {
    pub fn receiver(self) -> ReceiverMode {
        match self {
            DecoderMode::Map => ReceiverMode::Map,
            DecoderMode::KnownN => ReceiverMode::KnownN(Projection::Corrected),
            DecoderMode::Plain => ReceiverMode::KnownN(Projection::Plain),
        }
    }
}

impl fmt::Display for DecoderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecoderMode::Map => "map",
            DecoderMode::KnownN => "known_n",
            DecoderMode::Plain => "plain",
        })
    }
}

impl FromStr for DecoderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "map" => Ok(DecoderMode::Map),
            "known_n" | "known-n" => Ok(DecoderMode::KnownN),
            "plain" => Ok(DecoderMode::Plain),
            other => Err(Error::InvalidParameter(format!(
                "unknown mode '{other}' (map, known_n, plain)"
            ))),
        }
    }
}

pub fn pc_label(rule: PcRule) -> String {
    match rule {
        PcRule::Default => "default".into(),
        PcRule::Fixed(p) => format!("{p}"),
    }
}

fn parse_pc(s: &str) -> Result<PcRule> {
    let s = s.trim();
    if s == "default" {
        return Ok(PcRule::Default);
    }
    let p: f64 = s
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("bad p_c '{s}'")))?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!("p_c {p} outside (0, 1]")));
    }
    Ok(PcRule::Fixed(p))
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(item).collect()
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("bad value '{v}' for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidParameter(format!("bad value '{v}' for {key}"))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n_users: usize,
    pub p: f64,
    pub snr_db: Vec<f64>,
    pub pc: Vec<PcRule>,
    pub frames: usize,
    pub seed: u64,
    pub mode: DecoderMode,
    /// Decoder search depth; `None` means `⌊M/2⌋`.
    pub n_max: Option<usize>,
    pub out: Option<PathBuf>,
    pub calibration_samples: usize,
    pub max_ratio: f64,
    pub max_resolution_rounds: usize,
    pub hold_channel: bool,
    pub fresh_messages: bool,
    pub noiseless: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 5,
            n_users: 5,
            p: 0.4,
            snr_db: (0..=6).map(|k| 5.0 * k as f64).collect(),
            pc: vec![PcRule::Default],
            frames: 10_000,
            seed: 1,
            mode: DecoderMode::KnownN,
            n_max: None,
            out: None,
            calibration_samples: DEFAULT_CALIBRATION_SAMPLES,
            max_ratio: 1.0,
            max_resolution_rounds: 1,
            hold_channel: false,
            fresh_messages: false,
            noiseless: false,
        }
    }
}

impl ExperimentConfig {
    /// Applies one `key=value` setting. Keys follow the CLI flag names with
    /// `_` in place of `-`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "m" => self.m = parse_num(&key, value)?,
            "n_users" => self.n_users = parse_num(&key, value)?,
            "p" => self.p = parse_num(&key, value)?,
            "snr_db" => self.snr_db = parse_list(value, |t| parse_num("snr_db", t))?,
            "pc" => self.pc = parse_list(value, parse_pc)?,
            "frames" => self.frames = parse_num(&key, value)?,
            "seed" => self.seed = parse_num(&key, value)?,
            "mode" => self.mode = value.parse()?,
            "nmax" | "n_max" => {
                self.n_max = match value.trim() {
                    "" | "auto" => None,
                    v => Some(parse_num(&key, v)?),
                }
            }
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "calibration_samples" => self.calibration_samples = parse_num(&key, value)?,
            "max_ratio" => self.max_ratio = parse_num(&key, value)?,
            "rounds" | "max_resolution_rounds" => self.max_resolution_rounds = parse_num(&key, value)?,
            "hold_channel" => self.hold_channel = parse_bool(&key, value)?,
            "fresh_messages" => self.fresh_messages = parse_bool(&key, value)?,
            "noiseless" => self.noiseless = parse_bool(&key, value)?,
            _ => return Err(Error::InvalidParameter(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Flat `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key = value, got '{line}'"),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    /// Canonical `key=value` form; parses back to the same config.
    pub fn to_text(&self) -> String {
        let list = |xs: Vec<String>| xs.join(",");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        kv("m", self.m.to_string());
        kv("n_users", self.n_users.to_string());
        kv("p", self.p.to_string());
        kv("snr_db", list(self.snr_db.iter().map(|x| x.to_string()).collect()));
        kv("pc", list(self.pc.iter().map(|&r| pc_label(r)).collect()));
        kv("frames", self.frames.to_string());
        kv("seed", self.seed.to_string());
        kv("mode", self.mode.to_string());
        kv("nmax", self.n_max.map_or("auto".into(), |n| n.to_string()));
        kv("calibration_samples", self.calibration_samples.to_string());
        kv("max_ratio", self.max_ratio.to_string());
        kv("rounds", self.max_resolution_rounds.to_string());
        kv("hold_channel", self.hold_channel.to_string());
        kv("fresh_messages", self.fresh_messages.to_string());
        kv("noiseless", self.noiseless.to_string());
        s
    }

    /// SHA-256 of [`Self::to_text`], hex encoded. The output path is not part
    /// of the hash.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn n_max(&self) -> usize {
        self.n_max.unwrap_or(self.m / 2)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let frame = FrameConfig::new(self.m)?;
        if self.n_users == 0 || self.n_users > frame.num_codebooks() {
            return bad(format!(
                "n_users must be in 1..={} for M={}",
                frame.num_codebooks(),
                self.m
            ));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return bad(format!("p {} outside [0, 1]", self.p));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|x| !x.is_finite()) {
            return bad("snr_db must be a non-empty list of finite values".into());
        }
        if self.pc.is_empty() {
            return bad("pc list is empty".into());
        }
        if self.frames == 0 {
            return bad("frames must be positive".into());
        }
        let n_max = self.n_max();
        if n_max == 0 || n_max > self.m / 2 {
            return bad(format!("nmax must be in 1..={}", self.m / 2));
        }
        Ok(())
    }

    fn frame_config(&self) -> Result<FrameConfig> {
        Ok(FrameConfig::new(self.m)?.with_standard_basis(self.n_users > self.m))
    }

    fn protocol(&self, rho: f64, pc: PcRule, detection: Detection) -> ProtocolConfig<f64> {
        let mut cfg = ProtocolConfig::new(self.n_users, self.m, self.p, rho);
        cfg.max_resolution_rounds = self.max_resolution_rounds;
        cfg.pc_rule = pc;
        cfg.receiver = self.mode.receiver();
        cfg.detection = detection;
        cfg.hold_channel = self.hold_channel;
        cfg.fresh_messages = self.fresh_messages;
        cfg.noise = if self.noiseless {
            NoiseMode::Noiseless
        } else {
            NoiseMode::Awgn
        };
        cfg.n_max = self.n_max();
        cfg
    }
}

/// splitmix64 finaliser, used to derive per-point seeds.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn point_seed(seed: u64, point: usize) -> u64 {
    mix(seed ^ mix(point as u64))
}

pub fn calibration_seed(seed: u64, point: usize) -> u64 {
    mix(point_seed(seed, point) ^ 0xca1b)
}

/// Frame error rate and taxonomy at one `(snr, p_c)` point.
#[derive(Clone, Debug)]
pub struct FerResult {
    pub snr_db: f64,
    pub pc: PcRule,
    pub frames: u64,
    pub errors: u64,
    /// Indexed like [`Correctness::ALL`].
    pub counts: [u64; 4],
    pub ci_low: f64,
    pub ci_high: f64,
    pub users_offered: u64,
    pub users_delivered: u64,
    /// Not written to the results file.
    pub wall_time: Duration,
}

impl PartialEq for FerResult {
    fn eq(&self, o: &Self) -> bool {
        self.snr_db == o.snr_db
            && self.pc == o.pc
            && self.frames == o.frames
            && self.errors == o.errors
            && self.counts == o.counts
            && self.ci_low == o.ci_low
            && self.ci_high == o.ci_high
            && self.users_offered == o.users_offered
            && self.users_delivered == o.users_delivered
    }
}

impl FerResult {
    pub fn fer(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.errors as f64 / self.frames as f64
        }
    }

    pub fn count(&self, c: Correctness) -> u64 {
        let i = Correctness::ALL.iter().position(|&x| x == c).expect("listed");
        self.counts[i]
    }

    /// Binomial standard error of the FER.
    pub fn se(&self) -> f64 {
        crate::stats::proportion_se(self.errors, self.frames)
    }
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub detection: Detection,
    /// One per SNR point.
    pub calibrations: Vec<Calibration<f64>>,
    /// SNR-major, then `p_c` in config order.
    pub results: Vec<FerResult>,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    counts: [u64; 4],
    offered: u64,
    delivered: u64,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        for (a, b) in self.counts.iter_mut().zip(o.counts) {
            *a += b;
        }
        self.offered += o.offered;
        self.delivered += o.delivered;
        self
    }
}

/// Shared, SNR-independent setup.
pub struct Setup {
    pub codebooks: Vec<Codebook<f64>>,
    pub index: EffectiveCodebookIndex<f64>,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let codebooks = build_codebooks(&cfg.frame_config()?);
        let index = enumerate(&codebooks, cfg.n_users, cfg.p, cfg.n_max())?;
        Ok(Self { codebooks, index })
    }
}

pub fn calibrate_point(cfg: &ExperimentConfig, setup: &Setup, point: usize) -> Result<Calibration<f64>> {
    let snr = cfg.snr_db[point];
    let cal = calibrate(
        &setup.codebooks,
        cfg.n_users,
        cfg.p,
        snr,
        cfg.calibration_samples,
        cfg.max_ratio,
        calibration_seed(cfg.seed, point),
    )?;
    log::info!(
        "calibrated snr={snr} dB: t_z={} ({}), {} samples",
        cal.threshold.t_z,
        cal.threshold.kind,
        cal.threshold.samples
    );
    Ok(cal)
}

fn simulate_point(
    cfg: &ExperimentConfig,
    setup: &Setup,
    calibration: &Calibration<f64>,
    point: usize,
    pc: PcRule,
    detection: Detection,
) -> Result<FerResult> {
    let start = Instant::now();
    let snr = cfg.snr_db[point];
    let proto = cfg.protocol(snr_db_to_linear(snr), pc, detection);
    let rx = Receiver {
        codebooks: &setup.codebooks,
        index: &setup.index,
        calibration,
    };
    let seed = point_seed(cfg.seed, point);
    let chunks = cfg.frames.div_ceil(CHUNK_FRAMES);
    let tallies: Vec<Tally> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Tally> {
            let mut rng = RngStream::new(seed, c as u64).rng();
            let n = CHUNK_FRAMES.min(cfg.frames - c * CHUNK_FRAMES);
            let mut t = Tally::default();
            for _ in 0..n {
                let o = run_frame(&proto, &rx, &mut rng)?;
                let i = Correctness::ALL
                    .iter()
                    .position(|&x| x == o.correctness)
                    .expect("listed");
                t.counts[i] += 1;
                t.offered += o.users_offered as u64;
                t.delivered += o.users_delivered as u64;
            }
            Ok(t)
        })
        .collect::<Result<_>>()?;
    // in-order fold keeps the merge deterministic
    let t = tallies.into_iter().fold(Tally::default(), Tally::merge);
    let frames = cfg.frames as u64;
    let errors: u64 = Correctness::ALL
        .iter()
        .zip(t.counts)
        .filter(|(c, _)| c.is_error())
        .map(|(_, k)| k)
        .sum();
    let (ci_low, ci_high) = wilson_interval(errors, frames, Z95);
    Ok(FerResult {
        snr_db: snr,
        pc,
        frames,
        errors,
        counts: t.counts,
        ci_low,
        ci_high,
        users_offered: t.offered,
        users_delivered: t.delivered,
        wall_time: start.elapsed(),
    })
}

/// Sweeps the `(snr, p_c)` grid, calibrating every SNR point first.
pub fn run_experiment(cfg: &ExperimentConfig, detection: Detection) -> Result<Experiment> {
    let setup = Setup::new(cfg)?;
    let calibrations = (0..cfg.snr_db.len())
        .map(|i| calibrate_point(cfg, &setup, i))
        .collect::<Result<Vec<_>>>()?;
    run_with_calibrations(cfg, &setup, calibrations, detection)
}

/// As [`run_experiment`] with precomputed calibrations (one per SNR point).
pub fn run_with_calibrations(
    cfg: &ExperimentConfig,
    setup: &Setup,
    calibrations: Vec<Calibration<f64>>,
    detection: Detection,
) -> Result<Experiment> {
    if calibrations.len() != cfg.snr_db.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} calibrations for {} SNR points",
            calibrations.len(),
            cfg.snr_db.len()
        )));
    }
    let mut results = Vec::with_capacity(cfg.snr_db.len() * cfg.pc.len());
    for (point, cal) in calibrations.iter().enumerate() {
        for &pc in &cfg.pc {
            let r = simulate_point(cfg, setup, cal, point, pc, detection)?;
            log::info!(
                "snr={} pc={} fer={:.4e} ({} frames, {:.2?})",
                r.snr_db,
                pc_label(pc),
                r.fer(),
                r.frames,
                r.wall_time
            );
            results.push(r);
        }
    }
    Ok(Experiment {
        config: cfg.clone(),
        detection,
        calibrations,
        results,
    })
}

/// Same grid and random streams with oracle collision detection and sizes.
pub fn genie_baseline(cfg: &ExperimentConfig) -> Result<Experiment> {
    run_experiment(cfg, Detection::Genie)
}

pub const RESULT_HEADER: &str = "snr_db,pc,frames,errors,fer,ci_low,ci_high,correct,wrong_decode,\
unrecognized_collision,unresolved_collision,users_offered,users_delivered";

fn detection_label(d: Detection) -> &'static str {
    match d {
        Detection::Blind => "blind",
        Detection::Genie => "genie",
    }
}

fn metadata(exp: &Experiment) -> Vec<String> {
    let mut lines = vec![
        format!("version={}", env!("CARGO_PKG_VERSION")),
        format!("config_hash={}", exp.config.hash()),
        format!("detection={}", detection_label(exp.detection)),
    ];
    lines.extend(exp.config.to_text().lines().map(|l| format!("config {l}")));
    for c in &exp.calibrations {
        lines.push(format!(
            "calibration snr_db={} t_z={} kind={} p_false_alarm={} p_miss={} {}",
            c.threshold.rho_db,
            c.threshold.t_z,
            c.threshold.kind,
            c.threshold.p_false_alarm,
            c.threshold.p_miss,
            c.provenance
        ));
    }
    lines
}

/// Result table: `#` metadata lines, a header, one row per grid point.
pub fn write_results_csv<W: Write>(meta: &[String], results: &[FerResult], mut out: W) -> Result<()> {
    for m in meta {
        writeln!(out, "# {m}")?;
    }
    writeln!(out, "{RESULT_HEADER}")?;
    for r in results {
        write!(
            out,
            "{},{},{},{},{},{},{}",
            r.snr_db,
            pc_label(r.pc),
            r.frames,
            r.errors,
            r.fer(),
            r.ci_low,
            r.ci_high
        )?;
        for k in r.counts {
            write!(out, ",{k}")?;
        }
        writeln!(out, ",{},{}", r.users_offered, r.users_delivered)?;
    }
    Ok(())
}

/// Inverse of [`write_results_csv`]; metadata lines are skipped and wall
/// time is zero.
pub fn read_results_csv(text: &str) -> Result<Vec<FerResult>> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let perr = |msg: String| Error::Parse { line: i + 1, msg };
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            if line != RESULT_HEADER {
                return Err(perr(format!("unexpected header '{line}'")));
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 13 {
            return Err(perr(format!("expected 13 fields, got {}", f.len())));
        }
        let num = |k: usize| -> Result<u64> { f[k].parse().map_err(|_| perr(format!("bad integer '{}'", f[k]))) };
        let real = |k: usize| -> Result<f64> { f[k].parse().map_err(|_| perr(format!("bad number '{}'", f[k]))) };
        rows.push(FerResult {
            snr_db: real(0)?,
            pc: parse_pc(f[1]).map_err(|e| perr(e.to_string()))?,
            frames: num(2)?,
            errors: num(3)?,
            ci_low: real(5)?,
            ci_high: real(6)?,
            counts: [num(7)?, num(8)?, num(9)?, num(10)?],
            users_offered: num(11)?,
            users_delivered: num(12)?,
            wall_time: Duration::ZERO,
        });
    }
    if !header_seen {
        return Err(Error::Parse {
            line: 0,
            msg: "missing header".into(),
        });
    }
    Ok(rows)
}

/// Whitespace-separated table for gnuplot; one data block per `p_c`.
pub fn write_gnuplot<W: Write>(meta: &[String], results: &[FerResult], mut out: W) -> Result<()> {
    for m in meta {
        writeln!(out, "# {m}")?;
    }
    writeln!(out, "# snr_db fer ci_low ci_high se")?;
    let mut labels: Vec<String> = Vec::new();
    for r in results {
        let l = pc_label(r.pc);
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    for (b, label) in labels.iter().enumerate() {
        if b > 0 {
            writeln!(out)?;
            writeln!(out)?;
        }
        writeln!(out, "# pc={label}")?;
        for r in results.iter().filter(|r| &pc_label(r.pc) == label) {
            writeln!(out, "{} {} {} {} {}", r.snr_db, r.fer(), r.ci_low, r.ci_high, r.se())?;
        }
    }
    Ok(())
}

/// Writes `<stem>.csv` and `<stem>.dat` next to each other and returns both
/// paths.
pub fn emit_plot_data(exp: &Experiment, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let meta = metadata(exp);
    let csv = stem.with_extension("csv");
    let dat = stem.with_extension("dat");
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_results_csv(
        &meta,
        &exp.results,
        std::io::BufWriter::new(std::fs::File::create(&csv)?),
    )?;
    write_gnuplot(
        &meta,
        &exp.results,
        std::io::BufWriter::new(std::fs::File::create(&dat)?),
    )?;
    Ok((csv, dat))
}

/// Full results file content for an experiment, as written by [`emit_plot_data`].
pub fn results_csv_string(exp: &Experiment) -> String {
    let mut buf = Vec::new();
    write_results_csv(&metadata(exp), &exp.results, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            snr_db: vec![10.0],
            frames: 400,
            calibration_samples: 10_000,
            ..Default::default()
        }
    }

    #[test]
    fn config_text_round_trip() {
        let mut cfg = small();
        cfg.pc = vec![PcRule::Default, PcRule::Fixed(0.5)];
        cfg.n_max = Some(2);
        cfg.mode = DecoderMode::Plain;
        let mut back = ExperimentConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        cfg.seed += 1;
        assert_ne!(back.hash(), cfg.hash());
    }

    #[test]
    fn config_errors() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.apply_text("bogus = 3").is_err());
        assert!(cfg.apply_text("frames 3").is_err());
        assert!(cfg.apply_text("pc = 1.5").is_err());
        assert!(cfg.apply_text("# only a comment\n\nframes = 7 # trailing").is_ok());
        assert_eq!(cfg.frames, 7);
        cfg.m = 6;
        assert!(cfg.validate().is_err());
        cfg.m = 5;
        cfg.n_max = Some(3);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_results_give_header_only() {
        let mut buf = Vec::new();
        write_results_csv(&[], &[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{RESULT_HEADER}\n"));
        assert!(read_results_csv(RESULT_HEADER).unwrap().is_empty());
    }

    #[test]
    fn single_frame_fer_is_binary() {
        let cfg = ExperimentConfig { frames: 1, ..small() };
        let exp = run_experiment(&cfg, Detection::Blind).unwrap();
        let fer = exp.results[0].fer();
        assert!(fer == 0.0 || fer == 1.0);
        assert_eq!(exp.results[0].counts.iter().sum::<u64>(), 1);
    }

    #[test]
    fn csv_round_trip() {
        let mut cfg = small();
        cfg.pc = vec![PcRule::Default, PcRule::Fixed(0.25)];
        let exp = run_experiment(&cfg, Detection::Blind).unwrap();
        let text = results_csv_string(&exp);
        assert!(text.contains(&cfg.hash()));
        assert_eq!(read_results_csv(&text).unwrap(), exp.results);
    }
}
