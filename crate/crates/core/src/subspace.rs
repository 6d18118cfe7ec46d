//! Subspace view of effective codewords: orthonormal bases, principal angles,
//! chordal distance, and a brute-force check that distinct effective
//! codewords of a fixed size span distinct subspaces.

use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::codebook::{enumerate, EffectiveCodebookIndex};
use crate::error::{Error, Result};
use crate::gabor::{build_codebooks, FrameConfig};
use crate::linalg::{singular_values, thin_svd, CMatrix};
use crate::scalar::Real;

/// `M × m` matrix with orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis<T> {
    columns: CMatrix<T>,
}

impl<T: Real> SubspaceBasis<T> {
    /// Wraps `columns` after checking orthonormality to 1e-8.
    pub fn new(columns: CMatrix<T>) -> Result<Self> {
        if columns.cols() > columns.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} basis vectors in C^{}",
                columns.cols(),
                columns.rows()
            )));
        }
        let gram = columns.adjoint_mul(&columns);
        if gram.sub(&CMatrix::identity(columns.cols())).frobenius_norm() > T::of(1e-8) {
            return Err(Error::InvalidParameter("basis columns are not orthonormal".into()));
        }
        Ok(Self { columns })
    }

    /// The zero-dimensional subspace of `C^M`.
    pub fn empty(ambient: usize) -> Self {
        Self {
            columns: CMatrix::zeros(ambient, 0),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.rows()
    }

    pub fn dim(&self) -> usize {
        self.columns.cols()
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.columns
    }
}

/// `X̃ = V · Λ^{1/2} · U` with `Λ` the eigenvalues of `X̃ᴴX̃`.
#[derive(Clone, Debug)]
pub struct SvdTriple<T> {
    pub basis: SubspaceBasis<T>,
    /// Descending, nonnegative.
    pub eigenvalues: Vec<T>,
    /// `ñ × ñ` unitary.
    pub u: CMatrix<T>,
}

impl<T: Real> SvdTriple<T> {
    pub fn reconstruct(&self) -> CMatrix<T> {
        let mut scaled = self.basis.matrix().clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let s = lam.max(T::zero()).sqrt();
            for x in scaled.column_mut(j) {
                *x = x.scale(s);
            }
        }
        scaled.matmul(&self.u)
    }
}

pub fn svd_decompose<T: Real>(x: &CMatrix<T>) -> Result<SvdTriple<T>> {
    if x.cols() > x.rows() {
        return Err(Error::DimensionMismatch(format!(
            "effective codeword with {} columns exceeds frame length {}",
            x.cols(),
            x.rows()
        )));
    }
    if x.cols() == 0 {
        return Ok(SvdTriple {
            basis: SubspaceBasis::empty(x.rows()),
            eigenvalues: Vec::new(),
            u: CMatrix::zeros(0, 0),
        });
    }
    let svd = thin_svd(x);
    Ok(SvdTriple {
        basis: SubspaceBasis { columns: svd.left },
        eigenvalues: svd.singular_values.iter().map(|&s| s * s).collect(),
        u: svd.right.adjoint(),
    })
}

fn check_dims<T: Real>(phi: &SubspaceBasis<T>, psi: &SubspaceBasis<T>) -> Result<()> {
    if phi.dim() != psi.dim() || phi.ambient_dim() != psi.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "subspaces of dimension {} and {} (ambient {} and {})",
            phi.dim(),
            psi.dim(),
            phi.ambient_dim(),
            psi.ambient_dim()
        )));
    }
    Ok(())
}

/// Cosines of the principal angles (singular values of `ΨᴴΦ`), clamped to
/// `[0, 1]`, descending.
fn cosines<T: Real>(phi: &SubspaceBasis<T>, psi: &SubspaceBasis<T>) -> Vec<T> {
    if phi.dim() == 0 {
        return Vec::new();
    }
    let cross = psi.matrix().adjoint_mul(phi.matrix());
    singular_values(&cross)
        .into_iter()
        .map(|s| s.max(T::zero()).min(T::one()))
        .collect()
}

/// Principal angles in ascending order.
pub fn principal_angles<T: Real>(phi: &SubspaceBasis<T>, psi: &SubspaceBasis<T>) -> Result<Vec<T>> {
    check_dims(phi, psi)?;
    Ok(cosines(phi, psi).into_iter().map(|c| c.acos()).collect())
}

/// `√(Σ sin²θᵢ)`, with `sin²θ` evaluated as `1 − cos²θ` for accuracy near zero.
pub fn chordal_distance<T: Real>(phi: &SubspaceBasis<T>, psi: &SubspaceBasis<T>) -> Result<T> {
    check_dims(phi, psi)?;
    Ok(chordal_unchecked(phi, psi))
}

fn chordal_unchecked<T: Real>(phi: &SubspaceBasis<T>, psi: &SubspaceBasis<T>) -> T {
    cosines(phi, psi)
        .into_iter()
        .map(|c| (T::one() - c * c).max(T::zero()))
        .sum::<T>()
        .sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairMode {
    Exhaustive,
    /// Uniformly random distinct pairs, seeded.
    Sampled {
        pairs: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug)]
pub struct DistinctnessRow<T> {
    pub n_active: usize,
    pub codewords: usize,
    pub pairs_checked: usize,
    pub min_distance: T,
    /// Enumeration positions within `X_ñ` of pairs closer than `min_gap`.
    pub violations: Vec<(usize, usize, T)>,
}

#[derive(Clone, Debug)]
pub struct DistinctnessReport<T> {
    pub m: usize,
    pub min_gap: T,
    pub rows: Vec<DistinctnessRow<T>>,
}

impl<T: Real> DistinctnessReport<T> {
    pub fn is_ok(&self) -> bool {
        self.rows.iter().all(|r| r.violations.is_empty())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# M={} min_gap={:e}", self.m, self.min_gap.as_f64())?;
        writeln!(out, "n_active,codewords,pairs_checked,min_distance,violations")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.16e},{}",
                r.n_active,
                r.codewords,
                r.pairs_checked,
                r.min_distance.as_f64(),
                r.violations.len()
            )?;
        }
        Ok(())
    }
}

pub const DEFAULT_MIN_GAP: f64 = 1e-6;

/// Checks that every pair of distinct effective codewords of size `ñ`, for
/// `ñ = 1..=n_max`, lies at chordal distance above `min_gap`. All `M`
/// codebooks are in play (`N = M`).
pub fn verify_distinctness<T: Real>(
    cfg: &FrameConfig,
    n_max: usize,
    mode: PairMode,
    min_gap: T,
) -> Result<DistinctnessReport<T>> {
    if n_max > cfg.resolvable() {
        return Err(Error::InvalidParameter(format!(
            "n_max {} exceeds floor(M/2) = {}",
            n_max,
            cfg.resolvable()
        )));
    }
    let index = enumerate::<T>(&build_codebooks(cfg), cfg.m(), T::of(0.5), n_max)?;
    let rows = (1..=n_max).map(|n| check_size(&index, n, mode, min_gap)).collect();
    Ok(DistinctnessReport {
        m: cfg.m(),
        min_gap,
        rows,
    })
}

/// Pairwise distinctness check over `X_ñ` of an existing index. Works for any
/// `ñ` in the index, including sizes beyond `⌊M/2⌋`.
pub fn check_size<T: Real>(
    index: &EffectiveCodebookIndex<T>,
    n: usize,
    mode: PairMode,
    min_gap: T,
) -> DistinctnessRow<T> {
    let words = index.of_size(n);
    let count = words.len();
    let basis = |i: usize| &words[i].svd.basis;

    let fold = |acc: (T, Vec<(usize, usize, T)>, usize), (i, j): (usize, usize)| {
        let (mut min, mut bad, k) = acc;
        let d = chordal_unchecked(basis(i), basis(j));
        if d < min {
            min = d;
        }
        if d <= min_gap {
            bad.push((i, j, d));
        }
        (min, bad, k + 1)
    };
    let merge = |a: (T, Vec<(usize, usize, T)>, usize), b: (T, Vec<(usize, usize, T)>, usize)| {
        let mut bad = a.1;
        bad.extend(b.1);
        (a.0.min(b.0), bad, a.2 + b.2)
    };
    let init = || (T::infinity(), Vec::new(), 0usize);

    let (min_distance, mut violations, pairs_checked) = match mode {
        PairMode::Exhaustive => (0..count)
            .into_par_iter()
            .map(|i| (i + 1..count).map(|j| (i, j)).fold(init(), fold))
            .reduce(init, merge),
        PairMode::Sampled { .. } if count < 2 => init(),
        PairMode::Sampled { pairs, seed } => {
            const CHUNK: usize = 1 << 14;
            (0..pairs.div_ceil(CHUNK))
                .into_par_iter()
                .map(|c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(c as u64);
                    let len = CHUNK.min(pairs - c * CHUNK);
                    (0..len)
                        .map(|_| {
                            let pick = sample(&mut rng, count, 2);
                            let (a, b) = (pick.index(0), pick.index(1));
                            (a.min(b), a.max(b))
                        })
                        .fold(init(), fold)
                })
                .reduce(init, merge)
        }
    };
    violations.sort_by_key(|v| (v.0, v.1));
    DistinctnessRow {
        n_active: n,
        codewords: count,
        pairs_checked,
        min_distance,
        violations,
    }
}

/// Draws a random `rows × cols` complex matrix with i.i.d. entries uniform on
/// the unit square; used for property checks of the decomposition.
pub fn random_matrix<T: Real, R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMatrix<T> {
    CMatrix::from_fn(rows, cols, |_, _| {
        num_complex::Complex::new(T::of(rng.random::<f64>() - 0.5), T::of(rng.random::<f64>() - 0.5))
    })
}
