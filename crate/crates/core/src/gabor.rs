//! Alltop–Gabor frames: `M²` unit vectors in `C^M` forming `M` orthonormal
//! bases with cross-basis coherence `1/√M`. Each basis is one user's codebook.

use std::io::Write;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FrameConfig {
    m: usize,
    /// Scale every word by `1/√M`. Always on in practice; kept so the raw
    /// construction can be inspected.
    pub normalize: bool,
    /// Append the standard basis as an extra codebook (user index `M`).
    pub standard_basis: bool,
}

impl FrameConfig {
    pub fn new(m: usize) -> Result<Self> {
        if m < 5 || !is_prime(m) {
            return Err(Error::InvalidFrameLength(m));
        }
        Ok(Self {
            m,
            normalize: true,
            standard_basis: false,
        })
    }

    pub fn with_standard_basis(mut self, on: bool) -> Self {
        self.standard_basis = on;
        self
    }

    /// Frame length (slots per frame).
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of codebooks produced by [`build_codebooks`].
    pub fn num_codebooks(&self) -> usize {
        self.m + usize::from(self.standard_basis)
    }

    /// `⌊M/2⌋`, the largest active-set size the frame resolves unambiguously.
    pub fn resolvable(&self) -> usize {
        self.m / 2
    }
}

pub fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Codeword<T> {
    pub entries: Vec<Complex<T>>,
    pub user: usize,
    pub message: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Codebook<T> {
    pub user: usize,
    pub words: Vec<Codeword<T>>,
}

fn unit_root<T: Real>(exponent: usize, m: usize) -> Complex<T> {
    let angle = T::TAU() * T::of_usize(exponent % m) / T::of_usize(m);
    Complex::from_polar(T::one(), angle)
}

/// Unnormalised Alltop sequence `g(m) = exp(2πi·m³/M)`.
pub fn alltop_sequence<T: Real>(m: usize) -> Result<Vec<Complex<T>>> {
    FrameConfig::new(m)?;
    Ok((0..m).map(|i| unit_root(cube_mod(i, m), m)).collect())
}

fn cube_mod(i: usize, m: usize) -> usize {
    let r = i % m;
    (r * r % m) * r % m
}

/// Word `g_{k,l}(m) = g((m−k) mod M)·exp(2πi·l·m/M)`, scaled to unit norm.
pub fn gabor_codeword<T: Real>(cfg: &FrameConfig, k: usize, l: usize) -> Result<Codeword<T>> {
    let m = cfg.m;
    if k >= cfg.num_codebooks() {
        return Err(Error::IndexOutOfRange {
            what: "user index",
            index: k,
            bound: cfg.num_codebooks(),
        });
    }
    if l >= m {
        return Err(Error::IndexOutOfRange {
            what: "message index",
            index: l,
            bound: m,
        });
    }
    let entries = if k == m {
        // standard basis extension
        (0..m)
            .map(|i| {
                if i == l {
                    Complex::new(T::one(), T::zero())
                } else {
                    Complex::new(T::zero(), T::zero())
                }
            })
            .collect()
    } else {
        let scale = if cfg.normalize {
            T::one() / T::of_usize(m).sqrt()
        } else {
            T::one()
        };
        (0..m)
            .map(|i| {
                let shift = (i + m - k) % m;
                unit_root::<T>(cube_mod(shift, m) + l * i % m, m).scale(scale)
            })
            .collect()
    };
    Ok(Codeword {
        entries,
        user: k,
        message: l,
    })
}

/// One codebook per user: codebook `k` holds `g_{k,0..M}`.
pub fn build_codebooks<T: Real>(cfg: &FrameConfig) -> Vec<Codebook<T>> {
    (0..cfg.num_codebooks())
        .map(|k| Codebook {
            user: k,
            words: (0..cfg.m)
                .map(|l| gabor_codeword(cfg, k, l).expect("indices in range"))
                .collect(),
        })
        .collect()
}

/// Two codewords `(k, l)`, `(k', l')` and their inner-product magnitude.
pub type PairValue<T> = ((usize, usize), (usize, usize), T);

#[derive(Clone, Debug)]
pub struct CoherenceReport<T> {
    /// Largest `|⟨g, g'⟩|` over distinct pairs.
    pub max: T,
    /// Distinct magnitudes observed, merged within the tolerance, ascending.
    pub values: Vec<T>,
    pub pairs_checked: usize,
    /// `((k, l), (k', l'), |⟨g, g'⟩|)` for pairs off `{0, 1/√M}`.
    pub violations: Vec<PairValue<T>>,
}

impl<T: Real> CoherenceReport<T> {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const COHERENCE_TOL: f64 = 1e-10;

/// Checks every distinct pair of words against the two allowed magnitudes.
pub fn verify_coherence<T: Real>(codebooks: &[Codebook<T>]) -> CoherenceReport<T> {
    let words: Vec<&Codeword<T>> = codebooks.iter().flat_map(|b| &b.words).collect();
    let m = words.first().map_or(1, |w| w.entries.len());
    let target = T::one() / T::of_usize(m).sqrt();
    let tol = T::of(COHERENCE_TOL);

    let per_row: Vec<(Vec<T>, Vec<_>, usize)> = (0..words.len())
        .into_par_iter()
        .map(|i| {
            let mut mags = Vec::new();
            let mut bad = Vec::new();
            for j in i + 1..words.len() {
                let mag = dot(&words[i].entries, &words[j].entries).norm();
                if mag.abs() > tol && (mag - target).abs() > tol {
                    bad.push((
                        (words[i].user, words[i].message),
                        (words[j].user, words[j].message),
                        mag,
                    ));
                }
                mags.push(mag);
            }
            (mags, bad, words.len() - i - 1)
        })
        .collect();

    let mut all: Vec<T> = Vec::new();
    let mut violations = Vec::new();
    let mut pairs = 0;
    for (mags, bad, n) in per_row {
        all.extend(mags);
        violations.extend(bad);
        pairs += n;
    }
    all.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let max = all.last().copied().unwrap_or(T::zero());
    let mut values: Vec<T> = Vec::new();
    for v in all {
        match values.last() {
            Some(&last) if (v - last).abs() <= tol => {}
            _ => values.push(v),
        }
    }
    CoherenceReport {
        max,
        values,
        pairs_checked: pairs,
        violations,
    }
}

/// One row per word: `k,l,re0,im0,re1,im1,...` with 17 significant digits.
pub fn write_codebooks_csv<T: Real, W: Write>(codebooks: &[Codebook<T>], mut out: W) -> Result<()> {
    let m = codebooks
        .first()
        .and_then(|b| b.words.first())
        .map_or(0, |w| w.entries.len());
    write!(out, "k,l")?;
    for i in 0..m {
        write!(out, ",re{i},im{i}")?;
    }
    writeln!(out)?;
    for word in codebooks.iter().flat_map(|b| &b.words) {
        write!(out, "{},{}", word.user, word.message)?;
        for z in &word.entries {
            write!(out, ",{:.16e},{:.16e}", z.re.as_f64(), z.im.as_f64())?;
        }
        writeln!(out)?;
    }
    Ok(())
}
