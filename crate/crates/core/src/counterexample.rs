//! The distributions refuting the LMMPZ disperser conjecture for small Index
//! (and Inner-Product) gadgets, with exhaustive desk-scale verification.
//!
//! The family is the set of y-strings in which every one of `delta` disjoint
//! block groups contains at least `k = floor(K)` special blocks (all-1 for
//! Index, all-0 for Inner-Product), so no small projection can dodge the
//! forced output bits. All counting is exact.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_rational::Ratio;
use num_traits::{One, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::entropy::{self, PointerSet};
use crate::gadgets::GadgetSpec;

/// Exhaustive scans over the y-universe are limited to this many bits.
pub const EXHAUSTIVE_GUARD_BITS: usize = 24;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CounterexampleError {
    #[error("parameter violation: {0}")]
    ParamViolation(String),
    #[error("exhaustive verification over {0} y-bits exceeds the guard of {EXHAUSTIVE_GUARD_BITS}")]
    GuardExceeded(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CounterexampleGadget {
    Index,
    InnerProduct,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterexampleParams {
    pub gadget: CounterexampleGadget,
    /// Gadget size: alphabet bits `m` for Index, vector length `b` for IP.
    pub m: usize,
    pub n_blocks: usize,
    /// The slack parameter `K >= 1`; the per-group threshold is `floor(K)`.
    pub k_bound: Ratio<u64>,
    pub delta: usize,
}

impl CounterexampleParams {
    pub fn validate(&self) -> Result<(), CounterexampleError> {
        if self.m < 1 || (self.gadget == CounterexampleGadget::Index && self.m < 2) {
            return Err(CounterexampleError::ParamViolation("gadget size too small".into()));
        }
        if self.k_bound < Ratio::one() {
            return Err(CounterexampleError::ParamViolation("K must be at least 1".into()));
        }
        if self.delta == 0 {
            return Err(CounterexampleError::ParamViolation("delta must be positive".into()));
        }
        // 2^m <= N / (K * delta), exactly.
        let lhs = Ratio::from(1u64 << self.m) * self.k_bound * Ratio::from(self.delta as u64);
        if lhs > Ratio::from(self.n_blocks as u64) {
            return Err(CounterexampleError::ParamViolation(format!(
                "2^m * K * delta = {lhs} exceeds N = {}",
                self.n_blocks
            )));
        }
        if self.n_blocks % self.delta != 0 {
            return Err(CounterexampleError::ParamViolation(format!(
                "delta = {} does not divide N = {}; use N = {} instead",
                self.delta,
                self.n_blocks,
                self.n_blocks.div_ceil(self.delta) * self.delta
            )));
        }
        Ok(())
    }
}

/// Bob's side of a counterexample instance: either an explicit list of
/// y-strings or the symbolic threshold family.
#[derive(Clone, Debug)]
pub enum BlockFamily {
    Explicit { n_blocks: usize, m: usize, members: Vec<Vec<u32>> },
    Symbolic(SymbolicFamily),
}

#[derive(Clone, Debug)]
pub struct SymbolicFamily {
    pub n_blocks: usize,
    pub m: usize,
    /// Disjoint block groups, each of size `n_blocks / delta`.
    pub groups: Vec<Vec<usize>>,
    /// Per-group threshold on the number of special blocks.
    pub k: usize,
    /// The block value every member must repeat: `1^m` for Index, `0^b` for IP.
    pub special_block: u32,
}

impl BlockFamily {
    pub fn n_blocks(&self) -> usize {
        match self {
            BlockFamily::Explicit { n_blocks, .. } => *n_blocks,
            BlockFamily::Symbolic(s) => s.n_blocks,
        }
    }

    pub fn block_bits(&self) -> usize {
        match self {
            BlockFamily::Explicit { m, .. } => *m,
            BlockFamily::Symbolic(s) => s.m,
        }
    }

    pub fn contains(&self, y: &[u32]) -> bool {
        match self {
            BlockFamily::Explicit { members, .. } => members.iter().any(|v| v == y),
            BlockFamily::Symbolic(s) => s.groups.iter().all(|g| {
                g.iter().filter(|&&i| y[i] == s.special_block).count() >= s.k
            }),
        }
    }

    /// Exact cardinality: per group a binomial tail, multiplied across groups.
    pub fn cardinality(&self) -> BigUint {
        match self {
            BlockFamily::Explicit { members, .. } => BigUint::from(members.len()),
            BlockFamily::Symbolic(s) => {
                let per_block = BigUint::one() << s.m;
                let other = &per_block - BigUint::one();
                s.groups
                    .iter()
                    .map(|g| {
                        let n = g.len();
                        (s.k..=n)
                            .map(|t| binomial(n, t) * other.pow((n - t) as u32))
                            .sum::<BigUint>()
                    })
                    .product()
            }
        }
    }

    /// Materialize the members (guarded by `EXHAUSTIVE_GUARD_BITS`).
    pub fn enumerate(&self) -> Result<Vec<Vec<u32>>, CounterexampleError> {
        match self {
            BlockFamily::Explicit { members, .. } => Ok(members.clone()),
            BlockFamily::Symbolic(s) => {
                let bits = s.m * s.n_blocks;
                if bits > EXHAUSTIVE_GUARD_BITS {
                    return Err(CounterexampleError::GuardExceeded(bits));
                }
                let mask = (1u64 << s.m) - 1;
                Ok((0..1u64 << bits)
                    .filter_map(|packed| {
                        let y: Vec<u32> = (0..s.n_blocks)
                            .map(|i| (packed >> (i * s.m) & mask) as u32)
                            .collect();
                        self.contains(&y).then_some(y)
                    })
                    .collect())
            }
        }
    }
}

pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Build the symbolic family of the refutation for the given parameters.
pub fn build(params: &CounterexampleParams) -> Result<BlockFamily, CounterexampleError> {
    params.validate()?;
    let group_size = params.n_blocks / params.delta;
    let groups: Vec<Vec<usize>> = (0..params.delta)
        .map(|g| (g * group_size..(g + 1) * group_size).collect())
        .collect();
    let special_block = match params.gadget {
        CounterexampleGadget::Index => (1u32 << params.m) - 1,
        CounterexampleGadget::InnerProduct => 0,
    };
    Ok(BlockFamily::Symbolic(SymbolicFamily {
        n_blocks: params.n_blocks,
        m: params.m,
        groups,
        k: params.k_bound.floor().to_integer() as usize,
        special_block,
    }))
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
    pub cardinality: BigUint,
    pub deficiency: f64,
    pub min_entropy_rate: f64,
    /// Set when the Index rate lands exactly on the 1 - 1/m bound.
    pub rate_equals_bound: bool,
    pub checked_i_sets: usize,
    pub forbidden_string: bool,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn subsets_up_to(n: usize, max: usize) -> Vec<BTreeSet<usize>> {
    let mut out = vec![BTreeSet::new()];
    for _ in 0..max {
        let mut next = Vec::new();
        for s in &out {
            let start = s.iter().next_back().map_or(0, |&l| l + 1);
            for i in start..n {
                let mut t = s.clone();
                t.insert(i);
                next.push(t);
            }
        }
        out.extend(next.into_iter().filter(|s| s.len() <= max));
        out.sort();
        out.dedup();
    }
    out
}

/// Exhaustively verify the four properties of the counterexample family.
pub fn verify(
    params: &CounterexampleParams,
    family: &BlockFamily,
) -> Result<VerificationReport, CounterexampleError> {
    let n = family.n_blocks();
    let m = family.block_bits();
    let bits = n * m;
    if bits > EXHAUSTIVE_GUARD_BITS {
        return Err(CounterexampleError::GuardExceeded(bits));
    }
    let members = family.enumerate()?;
    let mut checks = Vec::new();

    // (0) symbolic cardinality agrees with the exhaustive membership count.
    let card = family.cardinality();
    let count = BigUint::from(members.len());
    checks.push(CheckResult {
        name: "cardinality".into(),
        pass: card == count,
        detail: format!("closed form {card}, exhaustive {count}"),
    });

    // (1) deficiency at most delta.
    let delta = params.delta as u32;
    let defic_ok = entropy::deficiency_at_most(&count, bits as u32, delta);
    let deficiency = entropy::deficiency(&count, bits as u32)
        .map_err(|_| CounterexampleError::ParamViolation("empty family".into()))?;
    checks.push(CheckResult {
        name: "deficiency".into(),
        pass: defic_ok,
        detail: format!("{deficiency:.4} <= {delta}"),
    });

    // (2) min-entropy rate over blocks with alphabet 2^m: at least 1 - 1/m
    // for Index, strictly more than 1 - 1/b for IP.
    let as_pointers = PointerSet::new(
        n,
        1 << m,
        members.iter().map(|y| y.iter().map(|&v| v as u16).collect()).collect(),
    );
    let report = entropy::min_entropy_rate(&as_pointers, &BTreeSet::new(), false)
        .map_err(|e| CounterexampleError::ParamViolation(e.to_string()))?;
    // rate >= (m-1)/m  <=>  not (rate < (m-1)/m)
    let p = (m - 1) as u32;
    let q = m as u32;
    let (rate_ok, relation) = match params.gadget {
        CounterexampleGadget::Index => (!report.rate_exact.lt_threshold(p, q), ">="),
        CounterexampleGadget::InnerProduct => (report.rate_exact.gt_threshold(p, q), ">"),
    };
    let rate_equals_bound =
        !report.rate_exact.lt_threshold(p, q) && !report.rate_exact.gt_threshold(p, q);
    checks.push(CheckResult {
        name: "min_entropy_rate".into(),
        pass: rate_ok,
        detail: format!("{:.4} {relation} {}/{}", report.rate, p, q),
    });

    // (3) for every small I, the projected image misses the forbidden string.
    let gadget = match params.gadget {
        CounterexampleGadget::Index => GadgetSpec::index(m, n),
        CounterexampleGadget::InnerProduct => GadgetSpec::inner_product(m, n),
    };
    let forbidden_bit = params.gadget == CounterexampleGadget::InnerProduct;
    let budget = ((params.k_bound - Ratio::one()) * Ratio::from(params.delta as u64))
        .floor()
        .to_integer() as usize;
    let i_sets = subsets_up_to(n, budget.min(n));
    let miss = i_sets.par_iter().all(|i_set| {
        let target = vec![forbidden_bit; n - i_set.len()];
        !gadget.image_contains(members.iter(), i_set, &target)
    });
    checks.push(CheckResult {
        name: "forbidden_string".into(),
        pass: miss,
        detail: format!(
            "all-{} string absent from all {} projections with |I| <= {budget}",
            forbidden_bit as u8,
            i_sets.len()
        ),
    });

    // (4) every member has more than (K-1)*delta special blocks.
    let special = match params.gadget {
        CounterexampleGadget::Index => (1u32 << m) - 1,
        CounterexampleGadget::InnerProduct => 0,
    };
    let threshold = (params.k_bound - Ratio::one()) * Ratio::from(params.delta as u64);
    let bad = members.iter().find(|y| {
        let t = y.iter().filter(|&&v| v == special).count() as u64;
        Ratio::from(t) <= threshold
    });
    checks.push(CheckResult {
        name: "special_blocks".into(),
        pass: bad.is_none(),
        detail: match bad {
            None => format!("every member has > {threshold} special blocks"),
            Some(y) => format!("witness {y:?}"),
        },
    });

    Ok(VerificationReport {
        checks,
        cardinality: card,
        deficiency,
        min_entropy_rate: report.rate,
        rate_equals_bound,
        checked_i_sets: i_sets.len(),
        forbidden_string: forbidden_bit,
    })
}

/// Exact CDF check that the median of `B(n, p)` lies in `[floor(np), ceil(np)]`.
/// Returns the verdict alongside the computed median.
pub fn binomial_median_check(n: usize, p: Ratio<u64>) -> (bool, usize) {
    assert!(n <= 64);
    let pb = Ratio::new(BigUint::from(*p.numer()), BigUint::from(*p.denom()));
    let q = &Ratio::from(BigUint::one()) - &pb;
    let half = Ratio::new(BigUint::one(), BigUint::from(2u32));
    let mut cdf = Ratio::from(BigUint::zero());
    let mut median = n;
    for t in 0..=n {
        cdf += Ratio::from(binomial(n, t)) * pow(&pb, t as u32) * pow(&q, (n - t) as u32);
        if cdf >= half {
            median = t;
            break;
        }
    }
    let np = p * Ratio::from(n as u64);
    let lo = np.floor().to_integer() as usize;
    let hi = np.ceil().to_integer() as usize;
    (lo <= median && median <= hi, median)
}

/// Exact fraction of `({0,1}^m)^N` with more than `K - 1` all-1 blocks, from
/// the binomial tail of `B(N, 1/2^m)`. The fraction is at least 1/2 whenever
/// `2^m <= N/K`.
pub fn majority_fraction_check(
    m: usize,
    n_blocks: usize,
    k_bound: Ratio<u64>,
) -> Result<Ratio<BigUint>, CounterexampleError> {
    if Ratio::from(1u64 << m) * k_bound > Ratio::from(n_blocks as u64) {
        return Err(CounterexampleError::ParamViolation(format!(
            "2^m * K = {} exceeds N = {n_blocks}",
            Ratio::from(1u64 << m) * k_bound
        )));
    }
    let p = Ratio::new(BigUint::one(), BigUint::one() << m);
    let q = &Ratio::from(BigUint::one()) - &p;
    let threshold = k_bound - Ratio::one();
    let mut tail = Ratio::from(BigUint::zero());
    for t in 0..=n_blocks {
        if Ratio::from(t as u64) > threshold {
            tail += Ratio::from(binomial(n_blocks, t))
                * pow(&p, t as u32)
                * pow(&q, (n_blocks - t) as u32);
        }
    }
    Ok(tail)
}

fn pow(r: &Ratio<BigUint>, e: u32) -> Ratio<BigUint> {
    Ratio::new(r.numer().pow(e), r.denom().pow(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ind_params(m: usize, n: usize, k: u64, delta: usize) -> CounterexampleParams {
        CounterexampleParams {
            gadget: CounterexampleGadget::Index,
            m,
            n_blocks: n,
            k_bound: Ratio::from(k),
            delta,
        }
    }

    #[test]
    fn family_cardinality_m2_n8_k2() {
        let family = build(&ind_params(2, 8, 2, 1)).unwrap();
        assert_eq!(family.cardinality(), BigUint::from(41_479u32));
        assert_eq!(family.enumerate().unwrap().len(), 41_479);
    }

    #[test]
    fn product_family_cardinality() {
        let family = build(&ind_params(2, 16, 2, 2)).unwrap();
        assert_eq!(family.cardinality(), BigUint::from(41_479u64 * 41_479));
    }

    #[test]
    fn boundary_resource_bound_accepted() {
        // 2^3 = 8 = 8/(1*1) sits exactly on the bound and is accepted.
        let family = build(&ind_params(3, 8, 1, 1)).unwrap();
        if let BlockFamily::Symbolic(s) = &family {
            assert_eq!(s.k, 1);
        } else {
            panic!("expected symbolic family");
        }
    }

    #[test]
    fn param_violations() {
        assert!(matches!(
            build(&ind_params(3, 8, 2, 1)),
            Err(CounterexampleError::ParamViolation(_))
        ));
        assert!(matches!(
            build(&ind_params(2, 9, 1, 2)),
            Err(CounterexampleError::ParamViolation(_))
        ));
    }

    #[test]
    fn verify_index_instance() {
        let params = ind_params(2, 8, 2, 1);
        let family = build(&params).unwrap();
        let report = verify(&params, &family).unwrap();
        assert!(report.all_pass(), "failing checks: {:?}", report.checks);
        assert_eq!(report.checked_i_sets, 9);
        assert!((report.deficiency - (16.0 - 41_479f64.log2())).abs() < 1e-12);
    }

    #[test]
    fn verify_inner_product_instance() {
        let params = CounterexampleParams {
            gadget: CounterexampleGadget::InnerProduct,
            m: 2,
            n_blocks: 8,
            k_bound: Ratio::from(2u64),
            delta: 1,
        };
        let family = build(&params).unwrap();
        let report = verify(&params, &family).unwrap();
        assert!(report.all_pass(), "failing checks: {:?}", report.checks);
        assert!(report.forbidden_string);
    }

    #[test]
    fn full_space_fails_special_block_check() {
        let params = ind_params(2, 8, 2, 1);
        let full = BlockFamily::Symbolic(SymbolicFamily {
            n_blocks: 8,
            m: 2,
            groups: vec![(0..8).collect()],
            k: 0,
            special_block: 0b11,
        });
        let report = verify(&params, &full).unwrap();
        let special = report.checks.iter().find(|c| c.name == "special_blocks").unwrap();
        assert!(!special.pass);
    }

    #[test]
    fn cover_implication_small_i_cannot_hide_special_blocks() {
        // Check (4) implies check (3): a set I with |I| <= (K-1)delta cannot
        // cover all special blocks of any member.
        let params = ind_params(2, 8, 2, 1);
        let family = build(&params).unwrap();
        let members = family.enumerate().unwrap();
        for i_set in subsets_up_to(8, 1) {
            for y in &members {
                let uncovered = (0..8)
                    .filter(|i| !i_set.contains(i))
                    .any(|i| y[i] == 0b11);
                assert!(uncovered);
            }
        }
    }

    #[test]
    fn median_examples() {
        let (ok, median) = binomial_median_check(8, Ratio::new(1, 4));
        assert!(ok);
        assert_eq!(median, 2);
        assert!(binomial_median_check(1, Ratio::new(1, 2)).0);
        let (ok, median) = binomial_median_check(10, Ratio::new(1, 2));
        assert!(ok);
        assert_eq!(median, 5);
    }

    #[test]
    fn majority_fraction_examples() {
        let f = majority_fraction_check(2, 8, Ratio::from(2)).unwrap();
        assert_eq!(
            f,
            Ratio::new(BigUint::from(41_479u32), BigUint::from(65_536u32))
        );
        let f = majority_fraction_check(1, 2, Ratio::from(1)).unwrap();
        assert_eq!(f, Ratio::new(BigUint::from(3u32), BigUint::from(4u32)));
        assert!(matches!(
            majority_fraction_check(2, 8, Ratio::from(3)),
            Err(CounterexampleError::ParamViolation(_))
        ));
    }

    #[test]
    fn product_deficiency_adds_and_rate_is_min() {
        let single = build(&ind_params(2, 8, 2, 1)).unwrap();
        let product = build(&ind_params(2, 16, 2, 2)).unwrap();
        let d1 = entropy::deficiency(&single.cardinality(), 16).unwrap();
        let d2 = entropy::deficiency(&product.cardinality(), 32).unwrap();
        assert!((d2 - 2.0 * d1).abs() < 1e-9);
    }
}
