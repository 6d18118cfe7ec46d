//! Joint activity and data detection over the effective codebook.
//!
//! For a candidate `X̃ = Ṽ Λ̃^{1/2} Ũ`, the received vector is `CN(0, I +
//! ρM·ṼΛ̃Ṽᴴ)`, so up to candidate-independent constants the log-likelihood
//! is
//!
//! ```text
//!   Σ_j  ρMλ_j / (1 + ρMλ_j) · |v_jᴴ y|²  −  Σ_j ln(1 + ρMλ_j)
//! ```
//!
//! Directions with `λ_j = 0` drop out of both sums. The empty candidate
//! scores 0.

use num_complex::Complex;

use crate::codebook::{CandidateId, EffectiveCodebookIndex, EffectiveCodeword};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sqr};
use crate::scalar::Real;

/// Relative tolerance under which two metrics count as tied; ties go to the
/// lowest enumeration index.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult<T> {
    pub candidate: CandidateId,
    pub metric: T,
    /// Every searched candidate's metric, in enumeration order, when tracing.
    pub table: Option<Vec<(CandidateId, T)>>,
}

/// Weighting of the projection energies in the fixed-size search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Projection {
    /// `‖yᴴ Ṽ (I + Λ̃⁻¹/(ρM))^{-1/2}‖²`
    Corrected,
    /// `‖yᴴ Ṽ‖²`
    Plain,
}

fn snr_weights<T: Real>(eigenvalues: &[T], rho_m: T) -> impl Iterator<Item = (T, T)> + '_ {
    eigenvalues.iter().map(move |&lam| {
        let g = rho_m * lam.max(T::zero());
        (g / (T::one() + g), (T::one() + g).ln())
    })
}

fn projections<'a, T: Real>(y: &'a [Complex<T>], cand: &'a EffectiveCodeword<T>) -> impl Iterator<Item = T> + 'a {
    cand.svd.basis.matrix().columns().map(move |v| dot(v, y).norm_sqr())
}

/// Candidate log-likelihood with candidate-independent constants dropped.
pub fn log_likelihood<T: Real>(y: &[Complex<T>], candidate: &EffectiveCodeword<T>, rho: T) -> T {
    let rho_m = rho * T::of_usize(y.len());
    projections(y, candidate)
        .zip(snr_weights(&candidate.svd.eigenvalues, rho_m))
        .map(|(e, (w, logdet))| w * e - logdet)
        .sum()
}

/// Projection energy used by the fixed-size search.
pub fn projection_metric<T: Real>(y: &[Complex<T>], candidate: &EffectiveCodeword<T>, rho: T, mode: Projection) -> T {
    match mode {
        Projection::Plain => projections(y, candidate).sum(),
        Projection::Corrected => {
            let rho_m = rho * T::of_usize(y.len());
            projections(y, candidate)
                .zip(snr_weights(&candidate.svd.eigenvalues, rho_m))
                .map(|(e, (w, _))| w * e)
                .sum()
        }
    }
}

/// `z = ‖y‖²`.
pub fn energy_statistic<T: Real>(y: &[Complex<T>]) -> T {
    norm_sqr(y)
}

/// First candidate within the tie tolerance of the maximum.
fn argmax<T: Real>(scored: &[(CandidateId, T)]) -> Option<(CandidateId, T)> {
    let best = scored
        .iter()
        .map(|s| s.1)
        .filter(|v| !v.is_nan())
        .fold(T::neg_infinity(), T::max);
    if best == T::neg_infinity() {
        return scored.first().copied();
    }
    let tol = T::of(TIE_TOL) * (T::one() + best.abs());
    scored.iter().copied().find(|s| s.1 >= best - tol)
}

fn scan<T: Real>(
    index: &EffectiveCodebookIndex<T>,
    sizes: impl Iterator<Item = usize>,
    trace: bool,
    mut metric: impl FnMut(&EffectiveCodeword<T>) -> T,
) -> DecodeResult<T> {
    let scored: Vec<(CandidateId, T)> = sizes
        .flat_map(|size| (0..index.of_size(size).len()).map(move |position| CandidateId { size, position }))
        .map(|id| (id, metric(index.get(id))))
        .collect();
    let (candidate, metric) = argmax(&scored).expect("at least one candidate");
    DecodeResult {
        candidate,
        metric,
        table: trace.then_some(scored),
    }
}

/// MAP decision over every candidate with `ñ ≤ n_max`.
pub fn map_decode<T: Real>(
    y: &[Complex<T>],
    index: &EffectiveCodebookIndex<T>,
    rho: T,
    n_max: usize,
) -> DecodeResult<T> {
    map_decode_traced(y, index, rho, n_max, false)
}

pub fn map_decode_traced<T: Real>(
    y: &[Complex<T>],
    index: &EffectiveCodebookIndex<T>,
    rho: T,
    n_max: usize,
    trace: bool,
) -> DecodeResult<T> {
    let top = n_max.min(index.max_size());
    scan(index, 0..=top, trace, |c| {
        if c.prior > T::zero() {
            log_likelihood(y, c, rho) + c.log_prior
        } else {
            T::neg_infinity()
        }
    })
}

/// Search restricted to `X_ñ`.
pub fn known_n_decode<T: Real>(
    y: &[Complex<T>],
    index: &EffectiveCodebookIndex<T>,
    n: usize,
    rho: T,
    mode: Projection,
) -> Result<DecodeResult<T>> {
    if n == 0 || n > index.max_size() {
        return Err(Error::InvalidParameter(format!(
            "active-set size {} outside 1..={}",
            n,
            index.max_size()
        )));
    }
    Ok(scan(index, std::iter::once(n), false, |c| {
        projection_metric(y, c, rho, mode)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_active_set_of_size, synthesize_frame, NoiseMode, RngStream};
    use crate::codebook::{enumerate, ActiveSet};
    use crate::gabor::{build_codebooks, Codebook, FrameConfig};

    fn setup(p: f64, cap: usize) -> (Vec<Codebook<f64>>, EffectiveCodebookIndex<f64>) {
        let books = build_codebooks(&FrameConfig::new(5).unwrap());
        let idx = enumerate(&books, 5, p, cap).unwrap();
        (books, idx)
    }

    #[test]
    fn empty_candidate_scores_zero() {
        let (_, idx) = setup(0.3, 1);
        let y = vec![Complex::new(0.3, -1.0); 5];
        assert_eq!(log_likelihood(&y, &idx.of_size(0)[0], 10.0), 0.0);
    }

    #[test]
    fn collinear_single_user_value() {
        let (books, idx) = setup(0.3, 1);
        let y = books[1].words[4].entries.clone();
        let id = idx.find(&ActiveSet::new(vec![1], vec![4]).unwrap()).unwrap();
        let ll = log_likelihood(&y, idx.get(id), 10.0);
        assert!((ll - (50.0 / 51.0 - 51f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn degenerate_prior_decodes_empty() {
        let (books, idx) = setup(0.0, 2);
        let mut rng = RngStream::new(1, 0).rng();
        let set = ActiveSet::new(vec![0, 3], vec![1, 1]).unwrap();
        for _ in 0..20 {
            let f = synthesize_frame(&books, &set, 100.0, NoiseMode::Awgn, &mut rng).unwrap();
            assert_eq!(map_decode(&f.y, &idx, 100.0, 2).candidate.size, 0);
        }
    }

    #[test]
    fn noiseless_recovery() {
        // w = 0 in the frame, but the metric still assumes unit noise: a deep
        // fade at moderate rho legitimately decodes as empty, so use 60 dB.
        let (books, idx) = setup(0.4, 2);
        let mut rng = RngStream::new(2, 0).rng();
        for n in 1..=2 {
            for _ in 0..100 {
                let set = draw_active_set_of_size(5, n, 5, &mut rng);
                let f = synthesize_frame(&books, &set, 1e6, NoiseMode::Noiseless, &mut rng).unwrap();
                let r = map_decode(&f.y, &idx, 1e6, 2);
                assert_eq!(idx.get(r.candidate).active_set, set);
            }
        }
    }

    #[test]
    fn single_user_modes_agree_and_match_matched_filter() {
        let (books, idx) = setup(0.4, 2);
        let mut rng = RngStream::new(3, 0).rng();
        for _ in 0..500 {
            let set = draw_active_set_of_size(5, 1, 5, &mut rng);
            let f = synthesize_frame(&books, &set, 1.0, NoiseMode::Awgn, &mut rng).unwrap();
            let a = known_n_decode(&f.y, &idx, 1, 1.0, Projection::Corrected).unwrap();
            let b = known_n_decode(&f.y, &idx, 1, 1.0, Projection::Plain).unwrap();
            assert_eq!(a.candidate, b.candidate);
            let best = books
                .iter()
                .flat_map(|bk| &bk.words)
                .enumerate()
                .fold((0, -1.0), |acc, (i, w)| {
                    let e = dot(&w.entries, &f.y).norm_sqr();
                    if e > acc.1 {
                        (i, e)
                    } else {
                        acc
                    }
                });
            assert_eq!(b.candidate.position, best.0);
        }
    }

    #[test]
    fn noiseless_projection_gap() {
        let (books, idx) = setup(0.4, 1);
        let set = ActiveSet::new(vec![2], vec![2]).unwrap();
        let mut rng = RngStream::new(4, 0).rng();
        let f = synthesize_frame(&books, &set, 10.0, NoiseMode::Noiseless, &mut rng).unwrap();
        let energy = energy_statistic(&f.y);
        let truth = idx.find(&set).unwrap();
        for (id, c) in idx.iter().filter(|(id, _)| id.size == 1) {
            let e = projection_metric(&f.y, c, 10.0, Projection::Plain);
            if id == truth {
                assert!((e - energy).abs() < 1e-9 * energy);
            } else {
                assert!(e <= energy / 5.0 + 1e-9 * energy);
            }
        }
    }

    #[test]
    fn known_n_range() {
        let (_, idx) = setup(0.4, 2);
        let y = vec![Complex::new(1.0, 0.0); 5];
        assert!(known_n_decode(&y, &idx, 0, 1.0, Projection::Plain).is_err());
        assert!(known_n_decode(&y, &idx, 3, 1.0, Projection::Plain).is_err());
    }

    #[test]
    fn constant_shift_keeps_argmax() {
        let (books, idx) = setup(0.4, 2);
        let mut rng = RngStream::new(5, 0).rng();
        for _ in 0..50 {
            let set = draw_active_set_of_size(5, 2, 5, &mut rng);
            let f = synthesize_frame(&books, &set, 10.0, NoiseMode::Awgn, &mut rng).unwrap();
            let r = map_decode_traced(&f.y, &idx, 10.0, 2, true);
            let shifted: Vec<_> = r.table.unwrap().into_iter().map(|(id, v)| (id, v + 1234.5)).collect();
            assert_eq!(argmax(&shifted).unwrap().0, r.candidate);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let ids: Vec<CandidateId> = (0..4).map(|position| CandidateId { size: 1, position }).collect();
        let scored = vec![(ids[0], 1.0), (ids[1], 2.0), (ids[2], 2.0 + 1e-12), (ids[3], 2.0)];
        assert_eq!(argmax(&scored).unwrap().0, ids[1]);
    }

    #[test]
    fn energy_statistic_is_sum_of_squares() {
        let y = vec![Complex::new(3.0, 4.0), Complex::new(0.0, -1.0)];
        assert_eq!(energy_statistic(&y), 26.0);
        assert_eq!(energy_statistic::<f64>(&[Complex::new(0.0, 0.0); 5]), 0.0);
    }

    #[test]
    fn generic_over_single_precision() {
        let books = build_codebooks::<f32>(&FrameConfig::new(5).unwrap());
        let idx = enumerate(&books, 5, 0.4f32, 2).unwrap();
        let set = ActiveSet::new(vec![1, 4], vec![0, 3]).unwrap();
        let mut rng = RngStream::new(6, 0).rng();
        let f = synthesize_frame(&books, &set, 1e4f32, NoiseMode::Noiseless, &mut rng).unwrap();
        let r = map_decode(&f.y, &idx, 1e4, 2);
        assert_eq!(idx.get(r.candidate).active_set, set);
    }
}
