//! Received-frame synthesis: Bernoulli user activity, Rayleigh block fading
//! and white Gaussian noise, `y = √(ρM)·X̃·h̃ + w`.

use std::io::Write;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codebook::ActiveSet;
use crate::error::Result;
use crate::gabor::Codebook;
use crate::scalar::Real;

/// Seed plus stream id of a ChaCha8 generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

pub fn snr_db_to_linear(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

pub fn snr_linear_to_db(rho: f64) -> f64 {
    10.0 * rho.log10()
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T>
where
    StandardNormal: Distribution<T>,
{
    let half = T::FRAC_1_SQRT_2();
    let re: T = rng.sample(StandardNormal);
    let im: T = rng.sample(StandardNormal);
    Complex::new(re * half, im * half)
}

/// Each of `n_users` users active with probability `p`; each active user
/// then picks one of `m` messages uniformly.
pub fn draw_activity<R: Rng + ?Sized>(n_users: usize, p: f64, m: usize, rng: &mut R) -> ActiveSet {
    let users: Vec<usize> = (0..n_users).filter(|_| rng.random_bool(p.clamp(0.0, 1.0))).collect();
    let messages = users.iter().map(|_| rng.random_range(0..m)).collect();
    ActiveSet::new(users, messages).expect("increasing users")
}

/// Exactly `n` distinct users drawn uniformly, with uniform messages.
pub fn draw_active_set_of_size<R: Rng + ?Sized>(n_users: usize, n: usize, m: usize, rng: &mut R) -> ActiveSet {
    let mut users = rand::seq::index::sample(rng, n_users, n).into_vec();
    users.sort_unstable();
    let messages = users.iter().map(|_| rng.random_range(0..m)).collect();
    ActiveSet::new(users, messages).expect("increasing users")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseMode {
    Awgn,
    /// `w = 0`; for decoder checks.
    Noiseless,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelDraw<T> {
    pub active_set: ActiveSet,
    /// One fading coefficient per active user, in active-set order.
    pub h: Vec<Complex<T>>,
    pub w: Vec<Complex<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReceivedFrame<T> {
    pub y: Vec<Complex<T>>,
    pub truth: ChannelDraw<T>,
    pub rho: T,
}

pub fn draw_fading<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Complex<T>>
where
    StandardNormal: Distribution<T>,
{
    (0..n).map(|_| complex_normal(rng)).collect()
}

/// Draws fresh fading for every active user, then noise.
pub fn synthesize_frame<T: Real, R: Rng + ?Sized>(
    codebooks: &[Codebook<T>],
    active_set: &ActiveSet,
    rho: T,
    noise: NoiseMode,
    rng: &mut R,
) -> Result<ReceivedFrame<T>>
where
    StandardNormal: Distribution<T>,
{
    let h = draw_fading(active_set.len(), rng);
    synthesize_with_fading(codebooks, active_set, h, rho, noise, rng)
}

/// As [`synthesize_frame`] with caller-supplied fading coefficients.
pub fn synthesize_with_fading<T: Real, R: Rng + ?Sized>(
    codebooks: &[Codebook<T>],
    active_set: &ActiveSet,
    h: Vec<Complex<T>>,
    rho: T,
    noise: NoiseMode,
    rng: &mut R,
) -> Result<ReceivedFrame<T>>
where
    StandardNormal: Distribution<T>,
{
    assert_eq!(h.len(), active_set.len(), "one fading coefficient per active user");
    let x = active_set.matrix(codebooks)?;
    let m = x.rows();
    let gain = (rho * T::of_usize(m)).sqrt();
    let w: Vec<Complex<T>> = match noise {
        NoiseMode::Awgn => (0..m).map(|_| complex_normal(rng)).collect(),
        NoiseMode::Noiseless => vec![Complex::new(T::zero(), T::zero()); m],
    };
    let y = x
        .mul_vec(&h)
        .into_iter()
        .zip(&w)
        .map(|(s, n)| s.scale(gain) + n)
        .collect();
    Ok(ReceivedFrame {
        y,
        truth: ChannelDraw {
            active_set: active_set.clone(),
            h,
            w,
        },
        rho,
    })
}

/// Frame dump: `frame,active_set,re0,im0,...` with 17 significant digits.
pub fn write_frames_csv<T: Real, W: Write>(frames: &[ReceivedFrame<T>], mut out: W) -> Result<()> {
    let m = frames.first().map_or(0, |f| f.y.len());
    write!(out, "frame,rho,active_set")?;
    for i in 0..m {
        write!(out, ",re{i},im{i}")?;
    }
    writeln!(out)?;
    for (k, f) in frames.iter().enumerate() {
        write!(out, "{},{:.16e},{}", k, f.rho.as_f64(), f.truth.active_set)?;
        for z in &f.y {
            write!(out, ",{:.16e},{:.16e}", z.re.as_f64(), z.im.as_f64())?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gabor::{build_codebooks, FrameConfig};
    use crate::linalg::{dot, norm_sqr};

    fn books() -> Vec<Codebook<f64>> {
        build_codebooks(&FrameConfig::new(5).unwrap())
    }

    #[test]
    fn decibels() {
        assert_eq!(snr_db_to_linear(0.0), 1.0);
        assert!((snr_db_to_linear(10.0) - 10.0).abs() < 1e-12);
        assert!((snr_db_to_linear(3.0) - 1.995_262_314_968_879_5).abs() < 1e-12);
        for db in [-7.5, 0.0, 13.0] {
            assert!((snr_linear_to_db(snr_db_to_linear(db)) - db).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_activity() {
        let mut rng = RngStream::new(1, 0).rng();
        for _ in 0..100 {
            assert!(draw_activity(5, 0.0, 5, &mut rng).is_empty());
            assert_eq!(draw_activity(5, 1.0, 5, &mut rng).users(), &[0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn activity_mean_matches_binomial() {
        let mut rng = RngStream::new(2, 0).rng();
        let draws = 100_000;
        let total: usize = (0..draws).map(|_| draw_activity(5, 0.4, 5, &mut rng).len()).sum();
        let mean = total as f64 / draws as f64;
        let sigma = (5.0f64 * 0.4 * 0.6 / draws as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * sigma, "{mean}");
    }

    #[test]
    fn gaussian_variances() {
        let mut rng = RngStream::new(3, 0).rng();
        let n = 100_000;
        let samples: Vec<Complex<f64>> = (0..n).map(|_| complex_normal(&mut rng)).collect();
        let var_re = samples.iter().map(|z| z.re * z.re).sum::<f64>() / n as f64;
        let var_im = samples.iter().map(|z| z.im * z.im).sum::<f64>() / n as f64;
        let var = samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        // Var of |z|^2 is 1 for unit CN; of re^2 is 2*(1/2)^2 = 1/2
        assert!((var - 1.0).abs() < 3.0 / (n as f64).sqrt());
        assert!((var_re - 0.5).abs() < 3.0 * (0.5 / n as f64).sqrt());
        assert!((var_im - 0.5).abs() < 3.0 * (0.5 / n as f64).sqrt());
    }

    #[test]
    fn noiseless_single_user_is_collinear() {
        let books = books();
        let set = ActiveSet::new(vec![2], vec![3]).unwrap();
        let mut rng = RngStream::new(4, 0).rng();
        let f = synthesize_frame(&books, &set, 10.0, NoiseMode::Noiseless, &mut rng).unwrap();
        let g = &books[2].words[3].entries;
        let proj = dot(g, &f.y).norm_sqr();
        assert!((proj - norm_sqr(&f.y)).abs() < 1e-9 * norm_sqr(&f.y));
        assert!((norm_sqr(&f.y) - 50.0 * f.truth.h[0].norm_sqr()).abs() < 1e-9);
    }

    #[test]
    fn empty_frame_is_noise() {
        let mut rng = RngStream::new(5, 0).rng();
        let f = synthesize_frame(&books(), &ActiveSet::empty(), 10.0, NoiseMode::Awgn, &mut rng).unwrap();
        assert_eq!(f.y, f.truth.w);
    }

    #[test]
    fn energy_law() {
        let books = books();
        let mut rng = RngStream::new(6, 0).rng();
        for n in 0..=2usize {
            let frames = 100_000;
            let energies: Vec<f64> = (0..frames)
                .map(|_| {
                    let set = draw_active_set_of_size(5, n, 5, &mut rng);
                    norm_sqr(
                        &synthesize_frame(&books, &set, 10.0, NoiseMode::Awgn, &mut rng)
                            .unwrap()
                            .y,
                    )
                })
                .collect();
            let mean = energies.iter().sum::<f64>() / frames as f64;
            let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (frames - 1) as f64;
            let expect = 5.0 + 50.0 * n as f64;
            assert!(
                (mean - expect).abs() < 3.0 * (var / frames as f64).sqrt(),
                "n={n}: {mean}"
            );
        }
    }

    #[test]
    fn reproducible_streams() {
        let books = books();
        let run = |s: RngStream| {
            let mut rng = s.rng();
            (0..20)
                .map(|_| {
                    let set = draw_activity(5, 0.4, 5, &mut rng);
                    synthesize_frame(&books, &set, 3.0, NoiseMode::Awgn, &mut rng).unwrap()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(RngStream::new(9, 1)), run(RngStream::new(9, 1)));
        assert_ne!(run(RngStream::new(9, 1)), run(RngStream::new(9, 2)));
        let mut csv = Vec::new();
        write_frames_csv(&run(RngStream::new(9, 1)), &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 21);
    }
}
