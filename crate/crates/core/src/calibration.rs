//! Monte Carlo calibration of the energy detector: the overload threshold
//! `t_z` and per-size histograms of `z` for active-set size estimation.

use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::{draw_active_set_of_size, draw_activity, synthesize_frame, NoiseMode, RngStream};
use crate::codebook::{active_set_size_pmf, ActiveSet};
use crate::decoder::energy_statistic;
use crate::error::{Error, Result};
use crate::gabor::Codebook;
use crate::scalar::Real;
use crate::stats::wilson_interval;

pub const MIN_CALIBRATION_SAMPLES: usize = 10_000;
pub const HISTOGRAM_BINS: usize = 200;
/// Normal quantile of the Wilson bounds used when picking `t_z`: the miss
/// rate's upper bound must stay below `max_ratio` times the false-alarm
/// rate's lower bound.
pub const SELECTION_Z: f64 = 3.0;

const CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThresholdKind {
    Finite,
    /// No active set exceeds `⌊M/2⌋` under `(N, p)`: `t_z = +∞`.
    CollisionsImpossible,
    /// Every active set exceeds `⌊M/2⌋`: `t_z = −∞`.
    CollisionsCertain,
}

impl ThresholdKind {
    fn as_str(self) -> &'static str {
        match self {
            Self::Finite => "finite",
            Self::CollisionsImpossible => "no_collisions",
            Self::CollisionsCertain => "always_collision",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "finite" => Some(Self::Finite),
            "no_collisions" => Some(Self::CollisionsImpossible),
            "always_collision" => Some(Self::CollisionsCertain),
            _ => None,
        }
    }
}

impl std::fmt::Display for ThresholdKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of the threshold table, keyed by `(M, N, p, rho_db)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Threshold<T> {
    pub m: usize,
    pub n_users: usize,
    pub p: T,
    pub rho_db: f64,
    pub t_z: T,
    /// `P(z > t_z | ñ ≤ ⌊M/2⌋)`
    pub p_false_alarm: T,
    /// `P(z ≤ t_z | ñ > ⌊M/2⌋)`
    pub p_miss: T,
    pub samples: usize,
    pub max_ratio: T,
    pub kind: ThresholdKind,
}

impl<T: Real> Threshold<T> {
    pub fn is_collision(&self, z: T) -> bool {
        z > self.t_z
    }

    /// `p_miss / p_false_alarm`; zero when both vanish.
    pub fn ratio(&self) -> T {
        error_ratio(self.p_miss, self.p_false_alarm)
    }
}

pub fn error_ratio<T: Real>(miss: T, false_alarm: T) -> T {
    if miss == T::zero() {
        T::zero()
    } else {
        miss / false_alarm
    }
}

fn sample_z<T: Real>(
    codebooks: &[Codebook<T>],
    rho: T,
    samples: usize,
    seed: RngStream,
    draw: impl Fn(&mut ChaCha8Rng) -> ActiveSet + Sync,
) -> Vec<(usize, T)>
where
    StandardNormal: Distribution<T>,
{
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = RngStream::new(seed.seed ^ seed.stream.rotate_left(32), c as u64).rng();
            let len = CHUNK.min(samples - c * CHUNK);
            (0..len)
                .map(|_| {
                    let set = draw(&mut rng);
                    let f =
                        synthesize_frame(codebooks, &set, rho, NoiseMode::Awgn, &mut rng).expect("valid active set");
                    (set.len(), energy_statistic(&f.y))
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Energy statistics of `samples` frames drawn from the activity model,
/// tagged with their true active-set size.
pub fn simulate_energy<T: Real>(
    codebooks: &[Codebook<T>],
    n_users: usize,
    p: T,
    rho: T,
    samples: usize,
    seed: RngStream,
) -> Vec<(usize, T)>
where
    StandardNormal: Distribution<T>,
{
    let m = codebooks[0].words.len();
    let p = p.as_f64();
    sample_z(codebooks, rho, samples, seed, move |rng| {
        draw_activity(n_users, p, m, rng)
    })
}

/// Empirical `(p_false_alarm, p_miss)` of a threshold over tagged samples.
pub fn error_rates<T: Real>(tagged: &[(usize, T)], resolvable: usize, t_z: T) -> (T, T) {
    let (mut lo_n, mut lo_fa, mut hi_n, mut hi_miss) = (0usize, 0usize, 0usize, 0usize);
    for &(n, z) in tagged {
        if n <= resolvable {
            lo_n += 1;
            lo_fa += usize::from(z > t_z);
        } else {
            hi_n += 1;
            hi_miss += usize::from(z <= t_z);
        }
    }
    let frac = |k: usize, n: usize| {
        if n == 0 {
            T::zero()
        } else {
            T::of_usize(k) / T::of_usize(n)
        }
    };
    (frac(lo_fa, lo_n), frac(hi_miss, hi_n))
}

/// Picks the largest `t_z` whose miss/false-alarm ratio stays within
/// `max_ratio`, using Wilson bounds at [`SELECTION_Z`] so the constraint
/// survives resampling.
///
/// Raising `t_z` trades false collisions for unrecognised ones, so the
/// feasible thresholds form a half-line and its right end is kept.
pub fn calibrate_threshold<T: Real>(
    codebooks: &[Codebook<T>],
    n_users: usize,
    p: T,
    rho_db: f64,
    samples: usize,
    max_ratio: T,
    seed: u64,
) -> Result<Threshold<T>>
where
    StandardNormal: Distribution<T>,
{
    if samples < MIN_CALIBRATION_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "calibration needs at least {MIN_CALIBRATION_SAMPLES} samples, got {samples}"
        )));
    }
    if !(max_ratio > T::zero() && max_ratio <= T::one()) {
        return Err(Error::InvalidParameter(format!("max_ratio {max_ratio} outside (0, 1]")));
    }
    let m = codebooks[0].words.len();
    let resolvable = m / 2;
    let pmf = active_set_size_pmf(n_users, p);
    let p_high: T = pmf.iter().skip(resolvable + 1).copied().sum();
    let p_low: T = pmf.iter().take(resolvable + 1).copied().sum();
    let base = Threshold {
        m,
        n_users,
        p,
        rho_db,
        t_z: T::infinity(),
        p_false_alarm: T::zero(),
        p_miss: T::zero(),
        samples,
        max_ratio,
        kind: ThresholdKind::CollisionsImpossible,
    };
    if p_high == T::zero() {
        return Ok(base);
    }
    if p_low == T::zero() {
        return Ok(Threshold {
            t_z: T::neg_infinity(),
            p_false_alarm: T::one(),
            kind: ThresholdKind::CollisionsCertain,
            ..base
        });
    }

    let rho = T::of(crate::channel::snr_db_to_linear(rho_db));
    let tagged = simulate_energy(codebooks, n_users, p, rho, samples, RngStream::new(seed, 0x7a));
    let mut low: Vec<T> = tagged.iter().filter(|t| t.0 <= resolvable).map(|t| t.1).collect();
    let mut high: Vec<T> = tagged.iter().filter(|t| t.0 > resolvable).map(|t| t.1).collect();
    let cmp = |a: &T, b: &T| a.partial_cmp(b).expect("finite energy");
    low.sort_by(cmp);
    high.sort_by(cmp);
    let (n_lo, n_hi) = (low.len() as u64, high.len() as u64);
    if n_lo == 0 || n_hi == 0 {
        return Err(Error::InvalidParameter(
            "calibration drew no frames on one side of floor(M/2); increase samples".into(),
        ));
    }

    let feasible = |t: T| {
        let fa = low.len() - low.partition_point(|&z| z <= t);
        let miss = high.partition_point(|&z| z <= t);
        let (_, miss_hi) = wilson_interval(miss as u64, n_hi, SELECTION_Z);
        let (fa_lo, _) = wilson_interval(fa as u64, n_lo, SELECTION_Z);
        miss_hi <= max_ratio.as_f64() * fa_lo
    };

    let mut pooled: Vec<T> = low.iter().chain(&high).copied().collect();
    pooled.sort_by(cmp);
    pooled.dedup();
    // feasibility is monotone (true then false) along the sorted candidates
    let cut = pooled.partition_point(|&t| feasible(t));
    let t_z = if cut == 0 {
        // nothing feasible: declare every frame a collision
        pooled[0] - T::one()
    } else {
        pooled[cut - 1]
    };
    let (p_false_alarm, p_miss) = error_rates(&tagged, resolvable, t_z);
    Ok(Threshold {
        t_z,
        p_false_alarm,
        p_miss,
        kind: ThresholdKind::Finite,
        ..base
    })
}

/// Histogram densities of `z` for each active-set size.
#[derive(Clone, Debug)]
pub struct SizeModel<T> {
    pub m: usize,
    pub n_users: usize,
    pub rho: T,
    pub lo: T,
    pub hi: T,
    /// `counts[ñ][bin]`
    pub counts: Vec<Vec<u64>>,
    pub prior: Vec<T>,
    pub samples_per_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizeEstimate<T> {
    pub n_hat: usize,
    /// Normalised posterior over `0..=n_max`; empty when the fallback fired.
    pub posterior: Vec<T>,
    pub fallback: bool,
}

impl<T: Real> SizeModel<T> {
    fn bin(&self, z: T) -> Option<usize> {
        if !(z >= self.lo && z <= self.hi) {
            return None;
        }
        let width = (self.hi - self.lo) / T::of_usize(HISTOGRAM_BINS);
        let b = ((z - self.lo) / width).floor().to_usize().unwrap_or(HISTOGRAM_BINS - 1);
        Some(b.min(HISTOGRAM_BINS - 1))
    }

    /// Smoothed density of `z` given `ñ` (add-one per bin).
    pub fn density(&self, n: usize, z: T) -> T {
        let Some(b) = self.bin(z) else { return T::zero() };
        let width = (self.hi - self.lo) / T::of_usize(HISTOGRAM_BINS);
        let total = T::of_usize(self.samples_per_size + HISTOGRAM_BINS);
        T::of(self.counts[n][b] as f64 + 1.0) / total / width
    }

    /// Mean of `z` given `ñ`: `M + ρMñ`.
    pub fn mean(&self, n: usize) -> T {
        let m = T::of_usize(self.m);
        m + self.rho * m * T::of_usize(n)
    }

    /// MAP estimate of `ñ ∈ 0..=n_max`; nearest-mean rule outside the
    /// calibrated range or when every posterior weight vanishes.
    pub fn estimate(&self, z: T, n_max: usize) -> SizeEstimate<T> {
        let n_max = n_max.min(self.n_users);
        let weights: Vec<T> = (0..=n_max).map(|n| self.density(n, z) * self.prior[n]).collect();
        let total: T = weights.iter().copied().sum();
        if self.bin(z).is_none() || total <= T::zero() {
            return SizeEstimate {
                n_hat: self.nearest_mean(z, n_max),
                posterior: Vec::new(),
                fallback: true,
            };
        }
        let n_hat = weights
            .iter()
            .enumerate()
            .fold(
                (0, T::neg_infinity()),
                |best, (n, &w)| if w > best.1 { (n, w) } else { best },
            )
            .0;
        SizeEstimate {
            n_hat,
            posterior: weights.into_iter().map(|w| w / total).collect(),
            fallback: false,
        }
    }

    pub fn nearest_mean(&self, z: T, n_max: usize) -> usize {
        (0..=n_max.min(self.n_users))
            .fold((0, T::infinity()), |best, n| {
                let d = (z - self.mean(n)).abs();
                if d < best.1 {
                    (n, d)
                } else {
                    best
                }
            })
            .0
    }
}

/// Simulates `samples_per_size` frames for every `ñ = 0..=N` and bins their
/// energies over the pooled range.
pub fn calibrate_sizes<T: Real>(
    codebooks: &[Codebook<T>],
    n_users: usize,
    p: T,
    rho: T,
    samples_per_size: usize,
    seed: u64,
) -> SizeModel<T>
where
    StandardNormal: Distribution<T>,
{
    let m = codebooks[0].words.len();
    let per_size: Vec<Vec<T>> = (0..=n_users)
        .map(|n| {
            sample_z(
                codebooks,
                rho,
                samples_per_size,
                RngStream::new(seed, 0x100 + n as u64),
                move |rng| draw_active_set_of_size(n_users, n, m, rng),
            )
            .into_iter()
            .map(|t| t.1)
            .collect()
        })
        .collect();
    let lo = per_size.iter().flatten().copied().fold(T::infinity(), T::min);
    let hi = per_size.iter().flatten().copied().fold(T::neg_infinity(), T::max);
    let mut model = SizeModel {
        m,
        n_users,
        rho,
        lo,
        hi,
        counts: vec![vec![0; HISTOGRAM_BINS]; n_users + 1],
        prior: active_set_size_pmf(n_users, p),
        samples_per_size,
    };
    for (n, zs) in per_size.iter().enumerate() {
        for &z in zs {
            let b = model.bin(z).expect("inside pooled range");
            model.counts[n][b] += 1;
        }
    }
    model
}

/// Threshold plus size model for one operating point.
#[derive(Clone, Debug)]
pub struct Calibration<T> {
    pub threshold: Threshold<T>,
    pub sizes: SizeModel<T>,
    /// How the threshold was obtained (echoed into output metadata).
    pub provenance: String,
}

#[allow(clippy::too_many_arguments)]
pub fn calibrate<T: Real>(
    codebooks: &[Codebook<T>],
    n_users: usize,
    p: T,
    rho_db: f64,
    samples: usize,
    max_ratio: T,
    seed: u64,
) -> Result<Calibration<T>>
where
    StandardNormal: Distribution<T>,
{
    let threshold = calibrate_threshold(codebooks, n_users, p, rho_db, samples, max_ratio, seed)?;
    let rho = T::of(crate::channel::snr_db_to_linear(rho_db));
    let sizes = calibrate_sizes(codebooks, n_users, p, rho, samples, seed);
    Ok(Calibration {
        threshold,
        sizes,
        provenance: format!("monte-carlo seed={seed} samples={samples} max_ratio={max_ratio}"),
    })
}

const THRESHOLD_HEADER: &str = "m,n_users,p,rho_db,t_z,p_false_alarm,p_miss,samples,max_ratio,kind";

pub fn write_threshold_csv<T: Real, W: Write>(rows: &[Threshold<T>], mut out: W) -> Result<()> {
    writeln!(out, "{THRESHOLD_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.16e},{:.16e},{:.16e},{},{},{}",
            r.m,
            r.n_users,
            r.p.as_f64(),
            r.rho_db,
            r.t_z.as_f64(),
            r.p_false_alarm.as_f64(),
            r.p_miss.as_f64(),
            r.samples,
            r.max_ratio.as_f64(),
            r.kind.as_str()
        )?;
    }
    Ok(())
}

pub fn read_threshold_csv(text: &str) -> Result<Vec<Threshold<f64>>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == THRESHOLD_HEADER {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            line: i + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(err("expected 10 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(&format!("bad number {s:?}")));
        let int = |s: &str| s.parse::<usize>().map_err(|_| err(&format!("bad integer {s:?}")));
        rows.push(Threshold {
            m: int(f[0])?,
            n_users: int(f[1])?,
            p: num(f[2])?,
            rho_db: num(f[3])?,
            t_z: num(f[4])?,
            p_false_alarm: num(f[5])?,
            p_miss: num(f[6])?,
            samples: int(f[7])?,
            max_ratio: num(f[8])?,
            kind: ThresholdKind::parse(f[9]).ok_or_else(|| err("unknown threshold kind"))?,
        });
    }
    Ok(rows)
}

/// Row matching `(M, N, p, rho_db)` exactly.
pub fn lookup(rows: &[Threshold<f64>], m: usize, n_users: usize, p: f64, rho_db: f64) -> Option<&Threshold<f64>> {
    rows.iter()
        .find(|r| r.m == m && r.n_users == n_users && r.p == p && r.rho_db == rho_db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gabor::{build_codebooks, FrameConfig};

    fn books() -> Vec<Codebook<f64>> {
        build_codebooks(&FrameConfig::new(5).unwrap())
    }

    #[test]
    fn two_users_never_collide() {
        let t = calibrate_threshold(&books(), 2, 0.4, 10.0, 10_000, 1.0, 1).unwrap();
        assert_eq!(t.kind, ThresholdKind::CollisionsImpossible);
        assert_eq!(t.t_z, f64::INFINITY);
        assert!(!t.is_collision(1e300));
    }

    #[test]
    fn all_users_always_collide() {
        let t = calibrate_threshold(&books(), 5, 1.0, 10.0, 10_000, 1.0, 1).unwrap();
        assert_eq!(t.kind, ThresholdKind::CollisionsCertain);
        assert!(t.is_collision(0.0));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(calibrate_threshold(&books(), 5, 0.4, 10.0, 9_999, 1.0, 1).is_err());
        assert!(calibrate_threshold(&books(), 5, 0.4, 10.0, 10_000, 1.5, 1).is_err());
    }

    #[test]
    fn finite_threshold_meets_ratio() {
        let t = calibrate_threshold(&books(), 5, 0.4, 10.0, 20_000, 1.0, 2).unwrap();
        assert_eq!(t.kind, ThresholdKind::Finite);
        assert!(t.t_z.is_finite());
        assert!(t.ratio() <= 1.0, "{t:?}");
        assert!(t.p_false_alarm > 0.0 && t.p_false_alarm < 1.0);
    }

    #[test]
    fn stricter_ratio_lowers_threshold() {
        let loose = calibrate_threshold(&books(), 5, 0.4, 10.0, 20_000, 1.0, 3).unwrap();
        let strict = calibrate_threshold(&books(), 5, 0.4, 10.0, 20_000, 0.5, 3).unwrap();
        assert!(strict.t_z <= loose.t_z);
        assert!(strict.ratio() <= 0.5);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = calibrate_threshold(&books(), 5, 0.2, 5.0, 10_000, 1.0, 4).unwrap();
        let b = calibrate_threshold(&books(), 5, 0.2, 5.0, 10_000, 1.0, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            calibrate_threshold(&books(), 5, 0.4, 10.0, 10_000, 1.0, 5).unwrap(),
            calibrate_threshold(&books(), 2, 0.4, 10.0, 10_000, 1.0, 5).unwrap(),
        ];
        let mut buf = Vec::new();
        write_threshold_csv(&rows, &mut buf).unwrap();
        let back = read_threshold_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, rows);
        assert!(lookup(&back, 5, 2, 0.4, 10.0).is_some());
        assert!(lookup(&back, 5, 3, 0.4, 10.0).is_none());
        assert!(read_threshold_csv("1,2,3").is_err());
    }

    #[test]
    fn size_model_basics() {
        let model = calibrate_sizes(&books(), 5, 0.2, 100.0, 10_000, 6);
        assert_eq!(model.counts.len(), 6);
        assert!(model.counts.iter().all(|c| c.iter().sum::<u64>() == 10_000));
        // noise-only mean at high SNR
        assert_eq!(model.estimate(5.0, 5).n_hat, 0);
        let est = model.estimate(5.0, 2);
        assert_eq!(est.posterior.len(), 3);
        assert!((est.posterior.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // beyond the pooled range
        let far = model.estimate(model.hi * 10.0, 5);
        assert!(far.fallback);
        assert_eq!(far.n_hat, 5);
        assert!(model.estimate(-1.0, 5).fallback);
    }

    #[test]
    fn degenerate_prior_forces_full_set() {
        let model = calibrate_sizes(&books(), 5, 1.0, 10.0, 10_000, 7);
        for z in [5.0, 60.0, 150.0, 250.0] {
            assert_eq!(model.estimate(z, 5).n_hat, 5);
        }
    }

    #[test]
    fn estimator_beats_nearest_mean() {
        let b = books();
        let model = calibrate_sizes(&b, 5, 0.2, 100.0, 20_000, 8);
        let tagged = simulate_energy(&b, 5, 0.2, 100.0, 10_000, RngStream::new(99, 0));
        let hits = |f: &dyn Fn(f64) -> usize| tagged.iter().filter(|(n, z)| f(*z) == *n).count();
        let map = hits(&|z| model.estimate(z, 5).n_hat);
        let near = hits(&|z| model.nearest_mean(z, 5));
        assert!(map >= near, "map {map} vs nearest {near}");
    }
}
