//! Deficiency and min-entropy-rate computations for explicit pointer sets.
//!
//! All probabilities are counts over `|S|`, kept as exact rationals, so
//! comparisons against thresholds of the form `m^(-tau*|J|)` are exact. The
//! subset enumeration is exponential in the number of unexcluded blocks and
//! refuses to run past [`SUBSET_GUARD`] blocks unless forced.

use std::collections::BTreeSet;
use std::collections::HashMap;

use num_bigint::BigUint;
use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

/// Largest number of unexcluded blocks the subset scans will enumerate
/// without an explicit override.
pub const SUBSET_GUARD: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EntropyError {
    #[error("the set is empty")]
    EmptySet,
    #[error("subset enumeration over {0} blocks exceeds the guard of {SUBSET_GUARD}; pass force to override")]
    GuardExceeded(usize),
}

/// An explicit duplicate-free subset of `[m]^N`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointerSet {
    pub n_blocks: usize,
    pub m: usize,
    pub members: Vec<Vec<u16>>,
}

impl PointerSet {
    pub fn new(n_blocks: usize, m: usize, members: Vec<Vec<u16>>) -> Self {
        debug_assert!(members
            .iter()
            .all(|v| v.len() == n_blocks && v.iter().all(|&a| (a as usize) < m)));
        PointerSet { n_blocks, m, members }
    }

    /// The full universe `[m]^N`. Only sensible at desk scale.
    pub fn full(n_blocks: usize, m: usize) -> Self {
        let mut members = vec![vec![]];
        for _ in 0..n_blocks {
            members = members
                .into_iter()
                .flat_map(|v: Vec<u16>| {
                    (0..m as u16).map(move |a| {
                        let mut w = v.clone();
                        w.push(a);
                        w
                    })
                })
                .collect();
        }
        PointerSet { n_blocks, m, members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn restrict(&self, blocks: &[usize], alpha: &[u16]) -> PointerSet {
        let members = self
            .members
            .iter()
            .filter(|x| blocks.iter().zip(alpha).all(|(&i, &a)| x[i] == a))
            .cloned()
            .collect();
        PointerSet { n_blocks: self.n_blocks, m: self.m, members }
    }
}

/// `log2` of a ratio `num/den >= 1`, divided by `j_len * log2(alphabet)`:
/// the exact form of one min-entropy-rate candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct RateValue {
    /// `|S| / count`, at least 1.
    pub ratio: Ratio<BigUint>,
    pub j_len: usize,
    pub alphabet: usize,
}

impl RateValue {
    pub fn to_f64(&self) -> f64 {
        if self.j_len == 0 {
            return 1.0;
        }
        let r = self.ratio.numer().to_f64().unwrap() / self.ratio.denom().to_f64().unwrap();
        r.log2() / (self.j_len as f64 * (self.alphabet as f64).log2())
    }

    /// Exact comparison of two rate candidates over the same alphabet:
    /// `log2(r1)/(j1*a) < log2(r2)/(j2*a)  <=>  r1^j2 < r2^j1`.
    pub fn lt(&self, other: &RateValue) -> bool {
        debug_assert_eq!(self.alphabet, other.alphabet);
        pow_ratio(&self.ratio, other.j_len as u32) < pow_ratio(&other.ratio, self.j_len as u32)
    }

    /// Exact `rate < p/q`, i.e. `ratio^q < alphabet^(p*j_len)`.
    pub fn lt_threshold(&self, p: u32, q: u32) -> bool {
        pow_ratio(&self.ratio, q)
            < Ratio::from(BigUint::from(self.alphabet).pow(p * self.j_len as u32))
    }

    /// Exact `rate > p/q`.
    pub fn gt_threshold(&self, p: u32, q: u32) -> bool {
        pow_ratio(&self.ratio, q)
            > Ratio::from(BigUint::from(self.alphabet).pow(p * self.j_len as u32))
    }
}

fn pow_ratio(r: &Ratio<BigUint>, e: u32) -> Ratio<BigUint> {
    Ratio::new(r.numer().pow(e), r.denom().pow(e))
}

/// Result of a min-entropy-rate computation, with the minimizing witness.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyReport {
    pub deficiency: f64,
    pub rate: f64,
    pub rate_exact: RateValue,
    /// Blocks of the minimizing subset J (ascending).
    pub witness_set: Vec<usize>,
    /// The most likely projection value on the witness set.
    pub witness_assignment: Vec<u16>,
    /// How many members match the witness assignment.
    pub witness_count: usize,
}

/// `universe_bits - log2 |S|`.
pub fn deficiency(cardinality: &BigUint, universe_bits: u32) -> Result<f64, EntropyError> {
    if cardinality.is_zero() {
        return Err(EntropyError::EmptySet);
    }
    Ok(universe_bits as f64 - log2_biguint(cardinality))
}

/// Exact check `deficiency <= delta`, i.e. `|S| * 2^delta >= 2^universe_bits`.
pub fn deficiency_at_most(cardinality: &BigUint, universe_bits: u32, delta: u32) -> bool {
    cardinality * (BigUint::one() << delta) >= BigUint::one() << universe_bits
}

pub fn log2_biguint(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 52 {
        return n.to_f64().unwrap().log2();
    }
    let shifted = n >> (bits - 52);
    shifted.to_f64().unwrap().log2() + (bits - 52) as f64
}

fn subsets_ascending(blocks: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    // Nonempty subsets ordered by size, then lexicographically by block list.
    let n = blocks.len();
    (1..=n).flat_map(move |k| SubsetIter::new(blocks, k))
}

struct SubsetIter<'a> {
    blocks: &'a [usize],
    idx: Vec<usize>,
    done: bool,
}

impl<'a> SubsetIter<'a> {
    fn new(blocks: &'a [usize], k: usize) -> Self {
        SubsetIter { blocks, idx: (0..k).collect(), done: k > blocks.len() }
    }
}

impl Iterator for SubsetIter<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.iter().map(|&i| self.blocks[i]).collect();
        let k = self.idx.len();
        let n = self.blocks.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] + (k - i) < n {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

fn project_counts(set: &PointerSet, blocks: &[usize]) -> HashMap<Vec<u16>, usize> {
    let mut counts: HashMap<Vec<u16>, usize> = HashMap::new();
    for x in &set.members {
        let key: Vec<u16> = blocks.iter().map(|&i| x[i]).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

/// Most frequent projection value on `blocks`, ties broken lexicographically.
fn best_projection(set: &PointerSet, blocks: &[usize]) -> (Vec<u16>, usize) {
    let counts = project_counts(set, blocks);
    let mut best: Option<(Vec<u16>, usize)> = None;
    for (key, count) in counts {
        best = match best {
            None => Some((key, count)),
            Some((bk, bc)) => {
                if count > bc || (count == bc && key < bk) {
                    Some((key, count))
                } else {
                    Some((bk, bc))
                }
            }
        };
    }
    best.unwrap()
}

/// The min-entropy rate of `set` over the blocks outside `excluded`, with the
/// minimizing `(J, alpha)` witness. Ties are broken toward smaller `|J|`, then
/// lexicographic `J`, then lexicographic `alpha`.
pub fn min_entropy_rate(
    set: &PointerSet,
    excluded: &BTreeSet<usize>,
    force: bool,
) -> Result<EntropyReport, EntropyError> {
    if set.is_empty() {
        return Err(EntropyError::EmptySet);
    }
    let blocks: Vec<usize> = (0..set.n_blocks).filter(|i| !excluded.contains(i)).collect();
    if blocks.len() > SUBSET_GUARD && !force {
        return Err(EntropyError::GuardExceeded(blocks.len()));
    }
    let total = BigUint::from(set.len());
    let universe_bits = (blocks.len() as f64) * (set.m as f64).log2();
    let mut best: Option<(RateValue, Vec<usize>, Vec<u16>, usize)> = None;
    for j in subsets_ascending(&blocks) {
        let (alpha, count) = best_projection(set, &j);
        let cand = RateValue {
            ratio: Ratio::new(total.clone(), BigUint::from(count)),
            j_len: j.len(),
            alphabet: set.m,
        };
        // Strict improvement only: the subset iteration order realizes the
        // tie-breaking rule (smaller |J| first, then lexicographic J).
        if best.as_ref().is_none_or(|(b, _, _, _)| cand.lt(b)) {
            best = Some((cand, j, alpha, count));
        }
    }
    let (rate_exact, witness_set, witness_assignment, witness_count) = match best {
        Some(b) => b,
        // No blocks to scan: the rate condition is vacuous.
        None => (
            RateValue { ratio: Ratio::one(), j_len: 0, alphabet: set.m },
            vec![],
            vec![],
            set.len(),
        ),
    };
    Ok(EntropyReport {
        deficiency: universe_bits - log2_projection(set, &blocks),
        rate: rate_exact.to_f64(),
        rate_exact,
        witness_set,
        witness_assignment,
        witness_count,
    })
}

fn log2_projection(set: &PointerSet, blocks: &[usize]) -> f64 {
    (project_counts(set, blocks).len() as f64).log2()
}

/// A maximal subset `I'` of the unexcluded blocks on which `set` has
/// min-entropy rate below `tau = tau_p/tau_q`, with a heavy projection value
/// `alpha` (`Pr[x_I' = alpha] > m^(-tau |I'|)`), or `(empty, empty)` if the
/// rate is already at least `tau`.
///
/// Maximality is in the sense of Algorithm-2 restoration: after restricting
/// to `x_I' = alpha` and excluding `I'`, the remaining rate is at least `tau`.
/// The set is grown deterministically by absorbing the minimizing witness of
/// the restricted set until that holds.
pub fn maximal_low_rate_set(
    set: &PointerSet,
    excluded: &BTreeSet<usize>,
    tau_p: u32,
    tau_q: u32,
    force: bool,
) -> Result<(Vec<usize>, Vec<u16>), EntropyError> {
    if set.is_empty() {
        return Err(EntropyError::EmptySet);
    }
    let mut taken: Vec<usize> = Vec::new();
    let mut alpha: Vec<u16> = Vec::new();
    let mut current = set.clone();
    let mut shadow = excluded.clone();
    loop {
        let report = min_entropy_rate(&current, &shadow, force)?;
        if report.witness_set.is_empty() || !report.rate_exact.lt_threshold(tau_p, tau_q) {
            break;
        }
        for (&i, &a) in report.witness_set.iter().zip(&report.witness_assignment) {
            taken.push(i);
            alpha.push(a);
            shadow.insert(i);
        }
        current = current.restrict(&report.witness_set, &report.witness_assignment);
    }
    let mut order: Vec<usize> = (0..taken.len()).collect();
    order.sort_by_key(|&k| taken[k]);
    Ok((
        order.iter().map(|&k| taken[k]).collect(),
        order.iter().map(|&k| alpha[k]).collect(),
    ))
}
