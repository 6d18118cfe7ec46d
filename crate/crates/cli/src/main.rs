use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use ncra::calibration::{calibrate_threshold, lookup, read_threshold_csv, write_threshold_csv};
use ncra::codebook::enumerate;
use ncra::gabor::{build_codebooks, verify_coherence, write_codebooks_csv, FrameConfig};
use ncra::harness::{
    calibrate_point, calibration_seed, emit_plot_data, pc_label, read_results_csv, run_with_calibrations,
    write_gnuplot, Experiment, ExperimentConfig, Setup,
};
use ncra::protocol::Detection;
use ncra::subspace::{check_size, verify_distinctness, PairMode, DEFAULT_MIN_GAP};

#[derive(Parser)]
#[command(
    name = "ncra",
    version,
    about = "Noncoherent random access with Gabor-frame codebooks"
)]
struct Cli {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the energy-threshold table for each SNR point.
    Calibrate(Params),
    /// Check frame coherence and distinctness of the effective codebook.
    Verify {
        #[command(flatten)]
        params: Params,
        /// Sample this many pairs per size instead of checking all of them.
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Blind-detection FER sweep.
    Run {
        #[command(flatten)]
        params: Params,
        /// Threshold table from `calibrate`; missing points are calibrated.
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
    /// Same sweep with the true active-set size given to the receiver.
    Genie(Params),
    /// Regenerate the gnuplot table from a results CSV.
    Plotdata {
        /// Results CSV written by `run` or `genie`.
        #[arg(long)]
        input: PathBuf,
        /// Output `.dat` path (stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Default)]
struct Params {
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    n_users: Option<String>,
    #[arg(long)]
    p: Option<String>,
    /// Comma-separated list, e.g. `0,5,10`.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<String>,
    /// `default` or comma-separated fixed probabilities.
    #[arg(long)]
    pc: Option<String>,
    #[arg(long)]
    frames: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// map | known_n | plain
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    nmax: Option<String>,
    /// Output file or stem.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    calibration_samples: Option<String>,
    #[arg(long)]
    max_ratio: Option<String>,
    #[arg(long)]
    rounds: Option<String>,
    #[arg(long)]
    hold_channel: bool,
    #[arg(long)]
    fresh_messages: bool,
    #[arg(long)]
    noiseless: bool,
}

impl Params {
    fn resolve(&self, file: Option<&Path>) -> Result<ExperimentConfig> {
        let mut cfg = match file {
            Some(f) => ExperimentConfig::from_file(f).with_context(|| format!("reading config {}", f.display()))?,
            None => ExperimentConfig::default(),
        };
        let pairs = [
            ("m", &self.m),
            ("n_users", &self.n_users),
            ("p", &self.p),
            ("snr_db", &self.snr_db),
            ("pc", &self.pc),
            ("frames", &self.frames),
            ("seed", &self.seed),
            ("mode", &self.mode),
            ("nmax", &self.nmax),
            ("out", &self.out),
            ("calibration_samples", &self.calibration_samples),
            ("max_ratio", &self.max_ratio),
            ("rounds", &self.rounds),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                cfg.set(k, v).with_context(|| format!("--{}", k.replace('_', "-")))?;
            }
        }
        cfg.hold_channel |= self.hold_channel;
        cfg.fresh_messages |= self.fresh_messages;
        cfg.noiseless |= self.noiseless;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn calibrate_cmd(cfg: &ExperimentConfig) -> Result<()> {
    let books = build_codebooks(&FrameConfig::new(cfg.m)?.with_standard_basis(cfg.n_users > cfg.m));
    let rows = cfg
        .snr_db
        .iter()
        .enumerate()
        .map(|(i, &snr)| {
            let seed = calibration_seed(cfg.seed, i);
            calibrate_threshold(
                &books,
                cfg.n_users,
                cfg.p,
                snr,
                cfg.calibration_samples,
                cfg.max_ratio,
                seed,
            )
            .with_context(|| format!("calibrating {snr} dB"))
        })
        .collect::<Result<Vec<_>>>()?;
    write_threshold_csv(&rows, output(cfg.out.as_deref())?)?;
    Ok(())
}

fn verify_cmd(cfg: &ExperimentConfig, pairs: Option<usize>) -> Result<bool> {
    let frame = FrameConfig::new(cfg.m)?;
    let books = build_codebooks::<f64>(&frame);
    let coherence = verify_coherence(&books);
    let mode = pairs.map_or(PairMode::Exhaustive, |pairs| PairMode::Sampled {
        pairs,
        seed: cfg.seed,
    });
    let distinct = verify_distinctness::<f64>(&frame, cfg.n_max(), mode, DEFAULT_MIN_GAP)?;

    eprintln!(
        "coherence M={}: max {:.12} (1/sqrt(M) = {:.12}), {} pairs, {} violations",
        cfg.m,
        coherence.max,
        1.0 / (cfg.m as f64).sqrt(),
        coherence.pairs_checked,
        coherence.violations.len()
    );
    for r in &distinct.rows {
        eprintln!(
            "distinctness n={}: {} codewords, {} pairs, min chordal distance {:.12}, {} violations",
            r.n_active,
            r.codewords,
            r.pairs_checked,
            r.min_distance,
            r.violations.len()
        );
    }
    let index = enumerate(&books, cfg.m, 0.5, cfg.n_max())?;
    for n in 1..=cfg.n_max() {
        for (eig, count) in index.eigenvalue_profile(n, 1e-9) {
            let eig: Vec<String> = eig.iter().map(|v| format!("{v:.6}")).collect();
            eprintln!("eigenvalues n={n}: [{}] x{count}", eig.join(", "));
        }
    }
    // one size past capacity, sampled; distinctness is not guaranteed there
    if cfg.n_max() < cfg.m {
        let beyond = enumerate(&books, cfg.m, 0.5, cfg.n_max() + 1)?;
        let sampled = PairMode::Sampled {
            pairs: 200_000,
            seed: cfg.seed,
        };
        let row = check_size(&beyond, cfg.n_max() + 1, sampled, DEFAULT_MIN_GAP);
        eprintln!(
            "beyond capacity n={}: min chordal distance {:.3e}, {} near-coincident of 200000 sampled pairs",
            row.n_active,
            row.min_distance,
            row.violations.len()
        );
    }

    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir)?;
        write_codebooks_csv(&books, BufWriter::new(File::create(dir.join("codebooks.csv"))?))?;
        distinct.write_csv(BufWriter::new(File::create(dir.join("distinctness.csv"))?))?;
        let mut f = BufWriter::new(File::create(dir.join("coherence.csv"))?);
        writeln!(f, "m,max,pairs_checked,violations")?;
        writeln!(
            f,
            "{},{:.16e},{},{}",
            cfg.m,
            coherence.max,
            coherence.pairs_checked,
            coherence.violations.len()
        )?;
    }
    let ok = coherence.is_ok() && distinct.is_ok();
    println!("verify: {}", if ok { "ok" } else { "FAILED" });
    Ok(ok)
}

fn experiment(cfg: &ExperimentConfig, detection: Detection, thresholds: Option<&Path>) -> Result<Experiment> {
    let table = match thresholds {
        Some(p) => {
            read_threshold_csv(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?
        }
        None => Vec::new(),
    };
    let setup = Setup::new(cfg)?;
    let mut calibrations = Vec::with_capacity(cfg.snr_db.len());
    for (i, &snr) in cfg.snr_db.iter().enumerate() {
        let mut cal = calibrate_point(cfg, &setup, i).with_context(|| format!("calibrating {snr} dB"))?;
        if let Some(row) = lookup(&table, cfg.m, cfg.n_users, cfg.p, snr) {
            cal.threshold = row.clone();
            cal.provenance = format!(
                "threshold loaded from {}; sizes {}",
                thresholds.unwrap().display(),
                cal.provenance
            );
        } else if thresholds.is_some() {
            log::warn!("no threshold row for {snr} dB; calibrated instead");
        }
        calibrations.push(cal);
    }
    Ok(run_with_calibrations(cfg, &setup, calibrations, detection)?)
}

fn sweep_cmd(cfg: &ExperimentConfig, detection: Detection, thresholds: Option<&Path>, stem: &str) -> Result<()> {
    let exp = experiment(cfg, detection, thresholds)?;
    let stem = cfg.out.clone().unwrap_or_else(|| PathBuf::from(stem));
    let (csv, dat) = emit_plot_data(&exp, &stem)?;
    println!("{:>8} {:>8} {:>10} {:>22}", "snr_db", "pc", "fer", "95% interval");
    for r in &exp.results {
        println!(
            "{:>8} {:>8} {:>10.4e} [{:.4e}, {:.4e}]",
            r.snr_db,
            pc_label(r.pc),
            r.fer(),
            r.ci_low,
            r.ci_high
        );
    }
    println!("wrote {} and {}", csv.display(), dat.display());
    Ok(())
}

fn plotdata_cmd(input: &Path, out: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let results = read_results_csv(&text)?;
    let meta: Vec<String> = text
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .map(str::to_string)
        .collect();
    write_gnuplot(&meta, &results, output(out)?)?;
    Ok(())
}

/// `Ok(false)` means a verification check failed.
fn dispatch(cli: &Cli) -> Result<bool> {
    let file = cli.config.as_deref();
    match &cli.command {
        Command::Calibrate(p) => calibrate_cmd(&p.resolve(file)?).map(|_| true),
        Command::Verify { params, pairs } => verify_cmd(&params.resolve(file)?, *pairs),
        Command::Run { params, thresholds } => {
            sweep_cmd(&params.resolve(file)?, Detection::Blind, thresholds.as_deref(), "fer").map(|_| true)
        }
        Command::Genie(p) => sweep_cmd(&p.resolve(file)?, Detection::Genie, None, "genie").map(|_| true),
        Command::Plotdata { input, out } => plotdata_cmd(input, out.as_deref()).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
