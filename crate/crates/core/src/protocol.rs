//! Decoding with collision resolution.
//!
//! 1. Users transmit with probability `p`.
//! 2. The receiver measures `z = ‖y‖²` and compares it with `t_z`.
//! 3. `z ≤ t_z`: estimate `ñ` and decode (or run the MAP search directly).
//!    `z > t_z`: estimate `ñ`, announce a collision, block new arrivals and
//!    let each active user retransmit with probability `p_c`; repeat step 2
//!    on the new frame. A second collision is announced as an error.

use std::collections::VecDeque;
use std::io::Write;

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::calibration::Calibration;
use crate::channel::{draw_activity, draw_fading, synthesize_with_fading, NoiseMode};
use crate::codebook::{ActiveSet, EffectiveCodebookIndex};
use crate::decoder::{energy_statistic, known_n_decode, map_decode, Projection};
use crate::error::Result;
use crate::gabor::Codebook;
use crate::scalar::Real;

/// Retransmission probability as a function of the estimated active-set size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PcRule {
    /// `min(1, ⌊M/2⌋ / max(N̂, 1))`
    Default,
    Fixed(f64),
}

impl PcRule {
    pub fn probability(self, m: usize, n_hat: usize) -> f64 {
        let p = match self {
            PcRule::Default => (m / 2) as f64 / n_hat.max(1) as f64,
            PcRule::Fixed(p) => p,
        };
        p.clamp(f64::MIN_POSITIVE, 1.0)
    }
}

/// Decoder used once the frame is judged resolvable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReceiverMode {
    /// MAP search over every candidate with `ñ ≤ ⌊M/2⌋`, no size estimate.
    Map,
    /// Estimate `ñ` from `z`, then search `X_ñ` only.
    KnownN(Projection),
}

/// Where collision decisions and size estimates come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Detection {
    /// Energy threshold and histogram estimator.
    Blind,
    /// True active-set size: collision iff `ñ > ⌊M/2⌋`, decoding in `X_ñ`.
    Genie,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig<T> {
    pub n_users: usize,
    pub m: usize,
    pub p: f64,
    pub rho: T,
    /// Retransmission rounds before an error is announced.
    pub max_resolution_rounds: usize,
    pub pc_rule: PcRule,
    pub receiver: ReceiverMode,
    pub detection: Detection,
    /// Keep each survivor's fading coefficient across rounds.
    pub hold_channel: bool,
    /// Survivors send a fresh message instead of repeating their codeword.
    pub fresh_messages: bool,
    pub noise: NoiseMode,
    /// Largest active-set size the decoder searches; capped at `⌊M/2⌋`.
    pub n_max: usize,
}

impl<T: Real> ProtocolConfig<T> {
    pub fn new(n_users: usize, m: usize, p: f64, rho: T) -> Self {
        Self {
            n_users,
            m,
            p,
            rho,
            max_resolution_rounds: 1,
            pc_rule: PcRule::Default,
            receiver: ReceiverMode::KnownN(Projection::Corrected),
            detection: Detection::Blind,
            hold_channel: false,
            fresh_messages: false,
            noise: NoiseMode::Awgn,
            n_max: m / 2,
        }
    }

    pub fn resolvable(&self) -> usize {
        self.m / 2
    }
}

/// Immutable receiver state shared by every frame.
#[derive(Clone, Copy, Debug)]
pub struct Receiver<'a, T> {
    pub codebooks: &'a [Codebook<T>],
    pub index: &'a EffectiveCodebookIndex<T>,
    pub calibration: &'a Calibration<T>,
}

/// Source of the detection statistic; replaced by a script in tests.
pub trait EnergyMeter<T> {
    fn measure(&mut self, y: &[Complex<T>]) -> T;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Energy;

impl<T: Real> EnergyMeter<T> for Energy {
    fn measure(&mut self, y: &[Complex<T>]) -> T {
        energy_statistic(y)
    }
}

/// Replays fixed values; falls back to the true energy once exhausted.
#[derive(Clone, Debug, Default)]
pub struct Scripted<T>(pub VecDeque<T>);

impl<T: Real> EnergyMeter<T> for Scripted<T> {
    fn measure(&mut self, y: &[Complex<T>]) -> T {
        self.0.pop_front().unwrap_or_else(|| energy_statistic(y))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Initial,
    Resolution(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseRecord<T> {
    pub phase: Phase,
    pub truth: ActiveSet,
    pub z: T,
    pub collision: bool,
    /// Size estimate, when one was formed in this phase.
    pub n_estimate: Option<usize>,
    /// Retransmission probability announced after a collision.
    pub p_c: Option<f64>,
    pub decode_attempted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Decoded,
    ErrorAnnounced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Correctness {
    Correct,
    WrongDecode,
    UnrecognizedCollision,
    UnresolvedCollision,
}

impl Correctness {
    pub const ALL: [Correctness; 4] = [
        Correctness::Correct,
        Correctness::WrongDecode,
        Correctness::UnrecognizedCollision,
        Correctness::UnresolvedCollision,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Correctness::Correct => "correct",
            Correctness::WrongDecode => "wrong_decode",
            Correctness::UnrecognizedCollision => "unrecognized_collision",
            Correctness::UnresolvedCollision => "unresolved_collision",
        }
    }

    pub fn is_error(self) -> bool {
        self != Correctness::Correct
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolOutcome<T> {
    pub phases: Vec<PhaseRecord<T>>,
    pub status: Status,
    pub decoded: Option<ActiveSet>,
    pub correctness: Correctness,
    /// Resolution rounds used (0 when no collision was declared).
    pub rounds: usize,
    /// Users active in the initial frame.
    pub users_offered: usize,
    /// Initial users whose message appears correctly in the final decision.
    pub users_delivered: usize,
}

impl<T> ProtocolOutcome<T> {
    /// Ground truth of the frame the final decision refers to.
    pub fn scored_truth(&self) -> &ActiveSet {
        &self.phases.last().expect("at least one phase").truth
    }
}

/// Labels a final decision against the truth of the frame it decoded.
pub fn score_outcome(decoded: Option<&ActiveSet>, truth: &ActiveSet, resolvable: usize) -> Correctness {
    match decoded {
        None => Correctness::UnresolvedCollision,
        Some(d) if d == truth => Correctness::Correct,
        Some(_) if truth.len() > resolvable => Correctness::UnrecognizedCollision,
        Some(_) => Correctness::WrongDecode,
    }
}

fn decode<T: Real>(
    cfg: &ProtocolConfig<T>,
    rx: &Receiver<'_, T>,
    y: &[Complex<T>],
    z: T,
    truth: &ActiveSet,
    record: &mut PhaseRecord<T>,
) -> ActiveSet {
    let cap = cfg.n_max.min(cfg.resolvable()).min(rx.index.max_size());
    let known = |n: usize, proj: Projection| {
        if n == 0 {
            ActiveSet::empty()
        } else {
            let r = known_n_decode(y, rx.index, n, cfg.rho, proj).expect("size within index");
            rx.index.get(r.candidate).active_set.clone()
        }
    };
    record.decode_attempted = true;
    match (cfg.detection, cfg.receiver) {
        (Detection::Genie, _) => {
            record.n_estimate = Some(truth.len());
            known(truth.len().min(cap), Projection::Corrected)
        }
        (Detection::Blind, ReceiverMode::Map) => {
            let r = map_decode(y, rx.index, cfg.rho, cap);
            rx.index.get(r.candidate).active_set.clone()
        }
        (Detection::Blind, ReceiverMode::KnownN(proj)) => {
            let n_hat = rx.calibration.sizes.estimate(z, cap).n_hat;
            record.n_estimate = Some(n_hat);
            known(n_hat, proj)
        }
    }
}

/// One protocol run using the true energy statistic.
pub fn run_frame<T: Real, R: Rng + ?Sized>(
    cfg: &ProtocolConfig<T>,
    rx: &Receiver<'_, T>,
    rng: &mut R,
) -> Result<ProtocolOutcome<T>>
where
    StandardNormal: Distribution<T>,
{
    run_frame_with(cfg, rx, &mut Energy, rng)
}

pub fn run_frame_with<T: Real, R: Rng + ?Sized, E: EnergyMeter<T>>(
    cfg: &ProtocolConfig<T>,
    rx: &Receiver<'_, T>,
    meter: &mut E,
    rng: &mut R,
) -> Result<ProtocolOutcome<T>>
where
    StandardNormal: Distribution<T>,
{
    let initial = draw_activity(cfg.n_users, cfg.p, cfg.m, rng);
    let mut set = initial.clone();
    let mut fading: Vec<Complex<T>> = draw_fading(set.len(), rng);
    let mut phases = Vec::new();
    let mut decoded = None;

    for round in 0..=cfg.max_resolution_rounds {
        let frame = synthesize_with_fading(rx.codebooks, &set, fading.clone(), cfg.rho, cfg.noise, rng)?;
        let z = meter.measure(&frame.y);
        let collision = match cfg.detection {
            Detection::Blind => rx.calibration.threshold.is_collision(z),
            Detection::Genie => set.len() > cfg.resolvable(),
        };
        let mut record = PhaseRecord {
            phase: if round == 0 {
                Phase::Initial
            } else {
                Phase::Resolution(round)
            },
            truth: set.clone(),
            z,
            collision,
            n_estimate: None,
            p_c: None,
            decode_attempted: false,
        };
        if !collision {
            decoded = Some(decode(cfg, rx, &frame.y, z, &set, &mut record));
            phases.push(record);
            break;
        }

        let n_hat = match cfg.detection {
            Detection::Blind => rx.calibration.sizes.estimate(z, cfg.n_users).n_hat,
            Detection::Genie => set.len(),
        };
        record.n_estimate = Some(n_hat);
        if round == cfg.max_resolution_rounds {
            phases.push(record);
            break;
        }
        let p_c = cfg.pc_rule.probability(cfg.m, n_hat);
        record.p_c = Some(p_c);
        phases.push(record);

        // thinning: no new arrivals, each active user stays with probability p_c
        let keep: Vec<bool> = set.users().iter().map(|_| rng.random_bool(p_c)).collect();
        let mut flags = keep.iter();
        let survivors = set.retain(|_| *flags.next().expect("one flag per user"));
        let held: Vec<Complex<T>> = fading.iter().zip(&keep).filter(|(_, k)| **k).map(|(h, _)| *h).collect();
        set = if cfg.fresh_messages {
            let messages = survivors.users().iter().map(|_| rng.random_range(0..cfg.m)).collect();
            ActiveSet::new(survivors.users().to_vec(), messages)?
        } else {
            survivors
        };
        fading = if cfg.hold_channel {
            held
        } else {
            draw_fading(set.len(), rng)
        };
    }

    let last = phases.last().expect("at least one phase");
    let correctness = score_outcome(decoded.as_ref(), &last.truth, cfg.resolvable());
    let users_delivered = decoded.as_ref().map_or(0, |d| {
        d.iter()
            .filter(|&(u, l)| last.truth.message_of(u) == Some(l) && initial.message_of(u).is_some())
            .count()
    });
    Ok(ProtocolOutcome {
        rounds: phases.len() - 1,
        status: if decoded.is_some() {
            Status::Decoded
        } else {
            Status::ErrorAnnounced
        },
        phases,
        decoded,
        correctness,
        users_offered: initial.len(),
        users_delivered,
    })
}

/// Per-frame log: `frame,n_initial,z,collisions,n_estimates,correctness,rounds`,
/// multi-valued fields `;`-separated by phase.
pub fn write_outcome_log<T: Real, W: Write>(
    outcomes: &[ProtocolOutcome<T>],
    first_id: usize,
    mut out: W,
) -> Result<()> {
    writeln!(out, "frame,n_initial,z,collisions,n_estimates,correctness,rounds")?;
    for (i, o) in outcomes.iter().enumerate() {
        let join = |f: &dyn Fn(&PhaseRecord<T>) -> String| o.phases.iter().map(f).collect::<Vec<_>>().join(";");
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            first_id + i,
            o.users_offered,
            join(&|r| format!("{:.9e}", r.z.as_f64())),
            join(&|r| u8::from(r.collision).to_string()),
            join(&|r| r.n_estimate.map_or("-".into(), |n| n.to_string())),
            o.correctness.label(),
            o.rounds
        )?;
    }
    Ok(())
}
