//! The effective codebook seen by the receiver: every concatenation of
//! active users' codewords, for every active set, with cached SVDs and
//! prior probabilities.

use std::io::Write;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gabor::Codebook;
use crate::linalg::CMatrix;
use crate::scalar::Real;
use crate::subspace::{svd_decompose, SvdTriple};

/// Active users (strictly increasing) and the message index each one sends.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActiveSet {
    users: Vec<usize>,
    messages: Vec<usize>,
}

impl ActiveSet {
    pub fn new(users: Vec<usize>, messages: Vec<usize>) -> Result<Self> {
        if users.len() != messages.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} users but {} messages",
                users.len(),
                messages.len()
            )));
        }
        if users.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "user indices must be strictly increasing".into(),
            ));
        }
        Ok(Self { users, messages })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn users(&self) -> &[usize] {
        &self.users
    }

    pub fn messages(&self) -> &[usize] {
        &self.messages
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.users.iter().copied().zip(self.messages.iter().copied())
    }

    /// Message sent by `user`, if active.
    pub fn message_of(&self, user: usize) -> Option<usize> {
        self.users.binary_search(&user).ok().map(|i| self.messages[i])
    }

    /// Keeps the users for which `keep` returns true.
    pub fn retain(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let (users, messages) = self.iter().filter(|&(u, _)| keep(u)).unzip();
        Self { users, messages }
    }

    /// Concatenates the active users' codewords, in active-set order.
    pub fn matrix<T: Real>(&self, codebooks: &[Codebook<T>]) -> Result<CMatrix<T>> {
        let m = codebooks
            .first()
            .and_then(|b| b.words.first())
            .map_or(0, |w| w.entries.len());
        let mut cols: Vec<&[Complex<T>]> = Vec::with_capacity(self.len());
        for (u, l) in self.iter() {
            let book = codebooks.get(u).ok_or(Error::IndexOutOfRange {
                what: "user index",
                index: u,
                bound: codebooks.len(),
            })?;
            let word = book.words.get(l).ok_or(Error::IndexOutOfRange {
                what: "message index",
                index: l,
                bound: book.words.len(),
            })?;
            cols.push(&word.entries);
        }
        Ok(CMatrix::from_columns(m, &cols))
    }
}

impl std::fmt::Display for ActiveSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (i, (u, l)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{u}:{l}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Clone, Debug)]
pub struct EffectiveCodeword<T> {
    pub active_set: ActiveSet,
    pub matrix: CMatrix<T>,
    pub svd: SvdTriple<T>,
    pub prior: T,
    /// `ln prior`, `-inf` when the prior vanishes.
    pub log_prior: T,
}

/// Position of a candidate: size class `ñ` and its rank within `X_ñ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CandidateId {
    pub size: usize,
    pub position: usize,
}

#[derive(Clone, Debug)]
pub struct EffectiveCodebookIndex<T> {
    n_users: usize,
    m: usize,
    p: T,
    by_size: Vec<Vec<EffectiveCodeword<T>>>,
    offsets: Vec<usize>,
}

impl<T: Real> EffectiveCodebookIndex<T> {
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    /// Frame length.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> T {
        self.p
    }

    /// Largest active-set size enumerated.
    pub fn max_size(&self) -> usize {
        self.by_size.len() - 1
    }

    /// `X_ñ`, empty when `ñ` is above the cap.
    pub fn of_size(&self, n: usize) -> &[EffectiveCodeword<T>] {
        self.by_size.get(n).map_or(&[], |v| v.as_slice())
    }

    pub fn get(&self, id: CandidateId) -> &EffectiveCodeword<T> {
        &self.by_size[id.size][id.position]
    }

    /// Rank in the global enumeration order (size-major, then lexicographic).
    pub fn global_index(&self, id: CandidateId) -> usize {
        self.offsets[id.size] + id.position
    }

    pub fn len(&self) -> usize {
        self.by_size.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (CandidateId, &EffectiveCodeword<T>)> {
        self.by_size.iter().enumerate().flat_map(|(size, v)| {
            v.iter()
                .enumerate()
                .map(move |(position, w)| (CandidateId { size, position }, w))
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.by_size.iter().map(Vec::len).collect()
    }

    /// Locates the candidate carrying exactly this active set.
    pub fn find(&self, set: &ActiveSet) -> Option<CandidateId> {
        let n = set.len();
        if n > self.max_size()
            || set.users().iter().any(|&u| u >= self.n_users)
            || set.messages().iter().any(|&l| l >= self.m)
        {
            return None;
        }
        let rank = combination_rank(set.users(), self.n_users);
        let msg = set.messages().iter().fold(0usize, |acc, &l| acc * self.m + l);
        let id = CandidateId {
            size: n,
            position: rank * self.m.pow(n as u32) + msg,
        };
        debug_assert_eq!(&self.get(id).active_set, set);
        Some(id)
    }

    /// Distinct descending eigenvalue lists within `X_ñ` (merged at `tol`),
    /// with their multiplicities.
    pub fn eigenvalue_profile(&self, n: usize, tol: T) -> Vec<(Vec<T>, usize)> {
        let mut groups: Vec<(Vec<T>, usize)> = Vec::new();
        for w in self.of_size(n) {
            let ev = &w.svd.eigenvalues;
            match groups
                .iter_mut()
                .find(|(g, _)| g.iter().zip(ev).all(|(a, b)| (*a - *b).abs() <= tol))
            {
                Some(g) => g.1 += 1,
                None => groups.push((ev.clone(), 1)),
            }
        }
        groups
    }

    /// Debug dump: `id,n_active,active_set,prior`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# N={} M={} p={}", self.n_users, self.m, self.p)?;
        writeln!(out, "id,n_active,active_set,prior")?;
        for (id, w) in self.iter() {
            writeln!(
                out,
                "{},{},{},{:.16e}",
                self.global_index(id),
                id.size,
                w.active_set,
                w.prior.as_f64()
            )?;
        }
        Ok(())
    }
}

/// Lexicographic rank of a strictly increasing `k`-subset of `0..n`.
fn combination_rank(subset: &[usize], n: usize) -> usize {
    let k = subset.len();
    let mut rank = 0;
    let mut prev = 0;
    for (i, &c) in subset.iter().enumerate() {
        for skipped in prev..c {
            rank += binomial(n - skipped - 1, k - i - 1);
        }
        prev = c + 1;
    }
    rank
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k.min(n - k)).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Strictly increasing `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(n, k));
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] < n - k + i) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// `p^ñ (1−p)^{N−ñ} / M^ñ`: activity pattern probability spread uniformly over
/// the message tuples.
pub fn prior_of<T: Real>(set: &ActiveSet, p: T, n_users: usize, m: usize) -> T {
    let n = set.len() as i32;
    let rest = (n_users - set.len()) as i32;
    p.powi(n) * (T::one() - p).powi(rest) / T::of_usize(m).powi(n)
}

/// Binomial(N, p) probabilities of `ñ = 0..=N`.
pub fn active_set_size_pmf<T: Real>(n_users: usize, p: T) -> Vec<T> {
    (0..=n_users)
        .map(|n| T::of_usize(binomial(n_users, n)) * p.powi(n as i32) * (T::one() - p).powi((n_users - n) as i32))
        .collect()
}

/// Enumerates `X_0, …, X_{n_max}` over the first `n_users` codebooks.
pub fn enumerate<T: Real>(
    codebooks: &[Codebook<T>],
    n_users: usize,
    p: T,
    n_max: usize,
) -> Result<EffectiveCodebookIndex<T>> {
    if n_users > codebooks.len() {
        return Err(Error::InvalidParameter(format!(
            "{} users but only {} codebooks",
            n_users,
            codebooks.len()
        )));
    }
    if !(T::zero()..=T::one()).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "activation probability {p} outside [0, 1]"
        )));
    }
    if n_max > n_users {
        return Err(Error::InvalidParameter(format!(
            "size cap {n_max} exceeds user count {n_users}"
        )));
    }
    let m = codebooks.first().map_or(0, |b| b.words.len());
    if n_max > m {
        return Err(Error::InvalidParameter(format!(
            "size cap {n_max} exceeds frame length {m}"
        )));
    }

    let mut by_size = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let sets: Vec<ActiveSet> = combinations(n_users, n)
            .into_iter()
            .flat_map(|users| {
                message_tuples(m, n).map(move |messages| ActiveSet {
                    users: users.clone(),
                    messages,
                })
            })
            .collect();
        let words = sets
            .into_par_iter()
            .map(|set| {
                let matrix = set.matrix(codebooks)?;
                let svd = svd_decompose(&matrix)?;
                let prior = prior_of(&set, p, n_users, m);
                Ok(EffectiveCodeword {
                    log_prior: prior.ln(),
                    active_set: set,
                    matrix,
                    svd,
                    prior,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        by_size.push(words);
    }
    let offsets = by_size
        .iter()
        .scan(0, |acc, v| {
            let start = *acc;
            *acc += v.len();
            Some(start)
        })
        .collect();
    Ok(EffectiveCodebookIndex {
        n_users,
        m,
        p,
        by_size,
        offsets,
    })
}

fn message_tuples(m: usize, n: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = m.pow(n as u32);
    (0..total).map(move |mut code| {
        let mut t = vec![0; n];
        for slot in t.iter_mut().rev() {
            *slot = code % m;
            code /= m;
        }
        t
    })
}
