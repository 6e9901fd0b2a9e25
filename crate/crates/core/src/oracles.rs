//! Independent brute-force ground truth: optimal decision-tree measures by
//! memoized recursion, and direct-definition scans for images, cardinalities,
//! and entropy quantities. Nothing here shares code with the modules it
//! checks.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigUint;
use num_traits::One;
use thiserror::Error;

use crate::dtree::TruthTable;

pub const DT_HEIGHT_MAX_VARS: usize = 5;
pub const DT_SIZE_MAX_VARS: usize = 4;
pub const PDT_HEIGHT_MAX_VARS: usize = 4;
/// Largest exhaustive scan, in bits of search space.
pub const SCAN_GUARD_BITS: u32 = 24;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("oracle cost {cost} exceeds the guard of {limit}")]
    GuardExceeded { cost: u64, limit: u64 },
}

/// Points of the cube consistent with a partial assignment `(mask, vals)`.
fn consistent_points(n: usize, mask: u32, vals: u32) -> impl Iterator<Item = u32> {
    (0..1u32 << n).filter(move |w| w & mask == vals)
}

fn constant_on(f: &TruthTable, n: usize, mask: u32, vals: u32) -> bool {
    let mut it = consistent_points(n, mask, vals).map(|w| f.bits[w as usize]);
    let first = it.next().expect("empty restriction");
    it.all(|b| b == first)
}

/// Exact minimum decision-tree height of `f`, by memoized recursion over
/// restrictions.
pub fn optimal_dt_height(f: &TruthTable) -> Result<usize, OracleError> {
    if f.n > DT_HEIGHT_MAX_VARS {
        return Err(OracleError::GuardExceeded {
            cost: f.n as u64,
            limit: DT_HEIGHT_MAX_VARS as u64,
        });
    }
    fn go(f: &TruthTable, mask: u32, vals: u32, memo: &mut HashMap<(u32, u32), usize>) -> usize {
        if let Some(&h) = memo.get(&(mask, vals)) {
            return h;
        }
        let h = if constant_on(f, f.n, mask, vals) {
            0
        } else {
            (0..f.n)
                .filter(|i| mask >> i & 1 == 0)
                .map(|i| {
                    let bit = 1u32 << i;
                    let h0 = go(f, mask | bit, vals, memo);
                    let h1 = go(f, mask | bit, vals | bit, memo);
                    1 + h0.max(h1)
                })
                .min()
                .unwrap()
        };
        memo.insert((mask, vals), h);
        h
    }
    Ok(go(f, 0, 0, &mut HashMap::new()))
}

/// Exact minimum decision-tree leaf count of `f`.
pub fn optimal_dt_size(f: &TruthTable) -> Result<usize, OracleError> {
    if f.n > DT_SIZE_MAX_VARS {
        return Err(OracleError::GuardExceeded {
            cost: f.n as u64,
            limit: DT_SIZE_MAX_VARS as u64,
        });
    }
    fn go(f: &TruthTable, mask: u32, vals: u32, memo: &mut HashMap<(u32, u32), usize>) -> usize {
        if let Some(&s) = memo.get(&(mask, vals)) {
            return s;
        }
        let s = if constant_on(f, f.n, mask, vals) {
            1
        } else {
            (0..f.n)
                .filter(|i| mask >> i & 1 == 0)
                .map(|i| {
                    let bit = 1u32 << i;
                    go(f, mask | bit, vals, memo) + go(f, mask | bit, vals | bit, memo)
                })
                .min()
                .unwrap()
        };
        memo.insert((mask, vals), s);
        s
    }
    Ok(go(f, 0, 0, &mut HashMap::new()))
}

/// Exact minimum parity-decision-tree height of `f`, by recursion over affine
/// restrictions. The state is the set of surviving points, as a bitmask over
/// the cube.
pub fn optimal_pdt_height(f: &TruthTable) -> Result<usize, OracleError> {
    if f.n > PDT_HEIGHT_MAX_VARS {
        return Err(OracleError::GuardExceeded {
            cost: f.n as u64,
            limit: PDT_HEIGHT_MAX_VARS as u64,
        });
    }
    let points = 1usize << f.n;
    let full: u32 = if points == 32 { u32::MAX } else { (1u32 << points) - 1 };
    fn go(f: &TruthTable, alive: u32, memo: &mut HashMap<u32, usize>) -> usize {
        if let Some(&h) = memo.get(&alive) {
            return h;
        }
        let mut vals = (0..1u32 << f.n).filter(|&w| alive >> w & 1 == 1).map(|w| f.bits[w as usize]);
        let first = vals.next().expect("empty affine restriction");
        let h = if vals.all(|b| b == first) {
            0
        } else {
            (1u32..1 << f.n)
                .filter_map(|s| {
                    let mut sides = [0u32, 0u32];
                    for w in 0..1u32 << f.n {
                        if alive >> w & 1 == 1 {
                            sides[((s & w).count_ones() & 1) as usize] |= 1 << w;
                        }
                    }
                    // A parity constant on the restriction gains nothing.
                    if sides[0] == 0 || sides[1] == 0 {
                        return None;
                    }
                    Some(1 + go(f, sides[0], memo).max(go(f, sides[1], memo)))
                })
                .min()
                .expect("non-constant function with no splitting parity")
        };
        memo.insert(alive, h);
        h
    }
    Ok(go(f, full, &mut HashMap::new()))
}

/// Count assignments of `bits` booleans satisfying `pred`, by full scan.
pub fn exhaustive_count(
    bits: u32,
    pred: impl Fn(&[bool]) -> bool,
    force: bool,
) -> Result<u64, OracleError> {
    if bits > SCAN_GUARD_BITS && !force {
        return Err(OracleError::GuardExceeded { cost: bits as u64, limit: SCAN_GUARD_BITS as u64 });
    }
    let mut count = 0u64;
    let mut assignment = vec![false; bits as usize];
    for w in 0..1u64 << bits {
        for (i, slot) in assignment.iter_mut().enumerate() {
            *slot = w >> i & 1 == 1;
        }
        if pred(&assignment) {
            count += 1;
        }
    }
    Ok(count)
}

/// Gadget evaluation written out from the definitions, for image scans.
#[derive(Clone, Copy, Debug)]
pub enum OracleGadget {
    /// `y_x`: the pointer selects a bit of the `m`-bit block.
    Index { m: u32 },
    /// `<x, y> mod 2` over `b`-bit halves.
    InnerProduct { b: u32 },
}

impl OracleGadget {
    fn x_domain(&self) -> u32 {
        match *self {
            OracleGadget::Index { m } => m,
            OracleGadget::InnerProduct { b } => 1 << b,
        }
    }

    fn apply(&self, x: u32, y: u32) -> bool {
        match *self {
            OracleGadget::Index { .. } => y >> x & 1 == 1,
            OracleGadget::InnerProduct { .. } => (x & y).count_ones() & 1 == 1,
        }
    }
}

/// The image of `g^(N without drop)` on all x-tuples against each listed
/// y-tuple, by full enumeration.
pub fn image_scan(
    gadget: OracleGadget,
    n_blocks: usize,
    drop: &BTreeSet<usize>,
    ys: &[Vec<u32>],
    force: bool,
) -> Result<BTreeSet<Vec<bool>>, OracleError> {
    let xd = gadget.x_domain() as u64;
    let tuples = xd.checked_pow(n_blocks as u32).unwrap_or(u64::MAX);
    let cost = tuples.saturating_mul(ys.len() as u64);
    if cost > 1 << SCAN_GUARD_BITS && !force {
        return Err(OracleError::GuardExceeded { cost, limit: 1 << SCAN_GUARD_BITS });
    }
    let mut image = BTreeSet::new();
    for y in ys {
        for t in 0..tuples {
            let mut rest = t;
            let mut out = Vec::with_capacity(n_blocks - drop.len());
            for (i, &yi) in y.iter().enumerate() {
                let xi = (rest % xd) as u32;
                rest /= xd;
                if !drop.contains(&i) {
                    out.push(gadget.apply(xi, yi));
                }
            }
            image.insert(out);
        }
    }
    Ok(image)
}

/// `universe_bits - log2(count) <= delta`, cleared of logarithms.
pub fn deficiency_at_most_scan(count: u64, universe_bits: u32, delta: u32) -> bool {
    BigUint::from(count) << delta >= BigUint::one() << universe_bits
}

/// Number of distinct projections of `members` onto `blocks`.
pub fn projection_count(members: &[Vec<u16>], blocks: &[usize]) -> u64 {
    members
        .iter()
        .map(|x| blocks.iter().map(|&i| x[i]).collect::<Vec<u16>>())
        .collect::<BTreeSet<_>>()
        .len() as u64
}

/// The minimizing witness of the min-entropy rate, straight from the
/// definition: scan every nonempty subset `J` of the unexcluded blocks
/// (smaller first, then lexicographic) and every heaviest projection value
/// (lexicographically smallest among the maxima).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectRate {
    pub j: Vec<usize>,
    pub alpha: Vec<u16>,
    pub count: u64,
    pub total: u64,
}

/// `(t1/c1)^(1/j1) < (t2/c2)^(1/j2)`, compared by cross-exponentiation.
fn rate_less(t1: u64, c1: u64, j1: usize, t2: u64, c2: u64, j2: usize) -> bool {
    let lhs = BigUint::from(t1).pow(j2 as u32) * BigUint::from(c2).pow(j1 as u32);
    let rhs = BigUint::from(t2).pow(j1 as u32) * BigUint::from(c1).pow(j2 as u32);
    lhs < rhs
}

/// Are two rate values equal as real numbers?
pub fn rates_equal(t1: u64, c1: u64, j1: usize, t2: u64, c2: u64, j2: usize) -> bool {
    if j1 == 0 || j2 == 0 {
        return j1 == j2;
    }
    BigUint::from(t1).pow(j2 as u32) * BigUint::from(c2).pow(j1 as u32)
        == BigUint::from(t2).pow(j1 as u32) * BigUint::from(c1).pow(j2 as u32)
}

/// `log_m(total/count) / |J| < p/q`, cleared of logarithms:
/// `total^q < count^q * m^(|J| p)`.
pub fn rate_below(total: u64, count: u64, j_len: usize, m: usize, p: u32, q: u32) -> bool {
    if j_len == 0 {
        return false;
    }
    BigUint::from(total).pow(q)
        < BigUint::from(count).pow(q) * BigUint::from(m).pow(j_len as u32 * p)
}

pub fn min_rate_direct(
    members: &[Vec<u16>],
    excluded: &BTreeSet<usize>,
    force: bool,
) -> Result<DirectRate, OracleError> {
    assert!(!members.is_empty());
    let n_blocks = members[0].len();
    let blocks: Vec<usize> = (0..n_blocks).filter(|i| !excluded.contains(i)).collect();
    if blocks.len() > 20 && !force {
        return Err(OracleError::GuardExceeded { cost: blocks.len() as u64, limit: 20 });
    }
    let total = members.len() as u64;
    let mut best: Option<DirectRate> = None;
    // Subsets ordered by size then lexicographically, realizing the tie-break.
    let mut subsets: Vec<Vec<usize>> = (1u64..1 << blocks.len())
        .map(|mask| {
            (0..blocks.len()).filter(|i| mask >> i & 1 == 1).map(|i| blocks[i]).collect()
        })
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    for j in subsets {
        let mut counts: BTreeMap<Vec<u16>, u64> = BTreeMap::new();
        for x in members {
            *counts.entry(j.iter().map(|&i| x[i]).collect()).or_default() += 1;
        }
        let (alpha, count) = counts
            .iter()
            .fold(None::<(&Vec<u16>, u64)>, |acc, (a, &c)| match acc {
                Some((_, bc)) if bc >= c => acc,
                _ => Some((a, c)),
            })
            .unwrap();
        let better = match &best {
            None => true,
            Some(b) => rate_less(total, count, j.len(), b.total, b.count, b.j.len()),
        };
        if better {
            best = Some(DirectRate { j: j.clone(), alpha: alpha.clone(), count, total });
        }
    }
    Ok(best.unwrap_or(DirectRate { j: vec![], alpha: vec![], count: total, total }))
}

/// The simulation potential inequality, recomputed from scratch: the
/// deficiency of the projection of `members` outside `fixed` must be at most
/// `A+B - |fixed| * l / 2`. Exact, via `count^2 * 2^(2(A+B)) >= 2^(...)` on
/// the distinct projection count.
pub fn potential_ok_scan(
    members: &[Vec<u16>],
    n_blocks: usize,
    ell: usize,
    fixed: &[usize],
    ab: usize,
) -> bool {
    let fixed_set: BTreeSet<usize> = fixed.iter().copied().collect();
    let free: Vec<usize> = (0..n_blocks).filter(|i| !fixed_set.contains(i)).collect();
    let count = projection_count(members, &free);
    let lhs = BigUint::from(count).pow(2) << (2 * ab);
    let rhs = BigUint::one() << (2 * free.len() * ell + fixed.len() * ell);
    lhs >= rhs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn and2() -> TruthTable {
        TruthTable::from_fn(2, |z| z[0] && z[1])
    }

    fn xor3() -> TruthTable {
        TruthTable::from_fn(3, |z| z[0] ^ z[1] ^ z[2])
    }

    #[test]
    fn dt_height_examples() {
        assert_eq!(optimal_dt_height(&and2()), Ok(2));
        assert_eq!(optimal_dt_height(&xor3()), Ok(3));
        assert_eq!(optimal_dt_height(&TruthTable::from_fn(3, |_| true)), Ok(0));
        assert!(matches!(
            optimal_dt_height(&TruthTable::from_fn(6, |z| z[5])),
            Err(OracleError::GuardExceeded { .. })
        ));
    }

    #[test]
    fn dt_size_examples() {
        assert_eq!(optimal_dt_size(&and2()), Ok(3));
        assert_eq!(optimal_dt_size(&xor3()), Ok(8));
        assert_eq!(optimal_dt_size(&TruthTable::from_fn(2, |_| false)), Ok(1));
    }

    #[test]
    fn pdt_height_examples() {
        assert_eq!(optimal_pdt_height(&xor3()), Ok(1));
        assert_eq!(optimal_pdt_height(&and2()), Ok(2));
        assert_eq!(optimal_pdt_height(&TruthTable::from_fn(4, |_| true)), Ok(0));
    }

    #[test]
    fn counts_blocks_with_all_ones() {
        // y over 8 blocks of 2 bits; at least 2 blocks equal to 11.
        let count = exhaustive_count(
            16,
            |y| {
                (0..8).filter(|&i| y[2 * i] && y[2 * i + 1]).count() >= 2
            },
            false,
        )
        .unwrap();
        assert_eq!(count, 41_479);
    }

    #[test]
    fn deficiency_scan_examples() {
        assert!(deficiency_at_most_scan(1 << 16, 16, 0));
        assert!(deficiency_at_most_scan(41_479, 16, 1));
        assert!(!deficiency_at_most_scan(41_479, 16, 0));
    }

    #[test]
    fn rate_of_pinned_block_is_zero() {
        // {x : x_1 = 2} in [4]^2.
        let members: Vec<Vec<u16>> = (0..4).map(|j| vec![2, j]).collect();
        let r = min_rate_direct(&members, &BTreeSet::new(), false).unwrap();
        assert_eq!(r.j, vec![0]);
        assert_eq!(r.count, 4);
        assert!(rate_below(r.total, r.count, r.j.len(), 4, 1, 1_000));
    }

    #[test]
    fn full_set_rate_at_least_half() {
        let members: Vec<Vec<u16>> = (0..16u16).map(|w| vec![w / 4, w % 4]).collect();
        let r = min_rate_direct(&members, &BTreeSet::new(), false).unwrap();
        assert!(!rate_below(r.total, r.count, r.j.len(), 4, 1, 2));
    }

    #[test]
    fn image_scan_index_gadget() {
        // One y with block values (01, 10): both output strings are reachable.
        let image =
            image_scan(OracleGadget::Index { m: 2 }, 2, &BTreeSet::new(), &[vec![0b01, 0b10]], false)
                .unwrap();
        assert_eq!(image.len(), 4);
        // All-zero blocks never emit a one.
        let image =
            image_scan(OracleGadget::Index { m: 2 }, 2, &BTreeSet::new(), &[vec![0, 0]], false)
                .unwrap();
        assert_eq!(image, BTreeSet::from([vec![false, false]]));
    }

    #[test]
    fn rate_comparisons() {
        assert!(rates_equal(16, 4, 1, 256, 16, 2));
        assert!(!rates_equal(16, 4, 1, 16, 8, 1));
        assert!(rate_less(16, 8, 1, 16, 4, 1));
    }

    #[test]
    fn potential_scan_full_set() {
        let members: Vec<Vec<u16>> = (0..16u16).map(|w| vec![w / 4, w % 4]).collect();
        assert!(potential_ok_scan(&members, 2, 2, &[], 0));
        assert!(!potential_ok_scan(&members[..1], 2, 2, &[], 1));
        assert!(potential_ok_scan(&members[..1], 2, 2, &[], 4));
    }
}
