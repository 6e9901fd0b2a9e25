//! Row-reduced systems of GF(2) affine equations over block-structured
//! coordinates.
//!
//! A system keeps one pivot (dependent) coordinate per equation so that the
//! coefficient matrix restricted to the pivots is an identity submatrix up to
//! row order. Rows are bit-packed over a dense numbering fixed by the
//! [`CoordSpace`]: all y-coordinates (block-major) first, then all x-bit
//! coordinates.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigUint;
use num_traits::One;
use thiserror::Error;

/// Which side of the lifted input a coordinate lives on.
///
/// `Y` sorts before `X` so that the dense numbering (and therefore pivot
/// selection) prefers y-coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Y,
    X,
}

/// A single bit position: block index in `[N]` plus position within the block
/// (`[m]` for y-coordinates, `[l]` for x-bits).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coord {
    pub side: Side,
    pub block: usize,
    pub pos: usize,
}

impl Coord {
    pub fn y(block: usize, pos: usize) -> Self {
        Coord { side: Side::Y, block, pos }
    }

    pub fn x(block: usize, pos: usize) -> Self {
        Coord { side: Side::X, block, pos }
    }

    /// Plain variable `i` of a non-lifted space (see [`CoordSpace::vars`]).
    pub fn var(i: usize) -> Self {
        Coord { side: Side::Y, block: i, pos: 0 }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.side {
            Side::Y => write!(f, "y{}.{}", self.block + 1, self.pos),
            Side::X => write!(f, "x{}.{}", self.block + 1, self.pos),
        }
    }
}

/// Dense numbering of the coordinates of one simulation instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoordSpace {
    pub n_blocks: usize,
    /// y-positions per block.
    pub m: usize,
    /// x-bits per block (0 for systems over y-coordinates only).
    pub ell: usize,
}

impl CoordSpace {
    pub fn new(n_blocks: usize, m: usize, ell: usize) -> Self {
        CoordSpace { n_blocks, m, ell }
    }

    /// A space of `n` plain variables, each its own block.
    pub fn vars(n: usize) -> Self {
        CoordSpace { n_blocks: n, m: 1, ell: 0 }
    }

    pub fn width(&self) -> usize {
        self.n_blocks * (self.m + self.ell)
    }

    pub fn index(&self, c: Coord) -> usize {
        match c.side {
            Side::Y => {
                debug_assert!(c.block < self.n_blocks && c.pos < self.m);
                c.block * self.m + c.pos
            }
            Side::X => {
                debug_assert!(c.block < self.n_blocks && c.pos < self.ell);
                self.n_blocks * self.m + c.block * self.ell + c.pos
            }
        }
    }

    pub fn coord(&self, idx: usize) -> Coord {
        let ny = self.n_blocks * self.m;
        if idx < ny {
            Coord::y(idx / self.m, idx % self.m)
        } else {
            let r = idx - ny;
            Coord::x(r / self.ell, r % self.ell)
        }
    }
}

/// One affine equation: XOR of the support coordinates equals `rhs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityEq {
    pub support: BTreeSet<Coord>,
    pub rhs: bool,
}

impl ParityEq {
    pub fn new(support: impl IntoIterator<Item = Coord>, rhs: bool) -> Self {
        // XOR-canonical: coordinates appearing twice cancel.
        let mut s = BTreeSet::new();
        for c in support {
            if !s.insert(c) {
                s.remove(&c);
            }
        }
        ParityEq { support: s, rhs }
    }

    pub fn single(c: Coord, rhs: bool) -> Self {
        ParityEq::new([c], rhs)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum F2Error {
    #[error("equation already lies in the span of the system")]
    SpanViolation,
    #[error("inserting the equation would make the system inconsistent (0 = 1)")]
    Inconsistent,
    #[error("free coordinate {0} missing from the assignment")]
    IncompleteAssignment(String),
}

/// Bit-packed coefficient row with its right-hand side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    words: Vec<u64>,
    pub rhs: bool,
}

impl Row {
    fn zero(width: usize) -> Self {
        Row { words: vec![0; width.div_ceil(64)], rhs: false }
    }

    pub fn bit(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    fn set(&mut self, i: usize) {
        self.words[i / 64] ^= 1 << (i % 64);
    }

    fn xor_assign(&mut self, other: &Row) {
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w ^= o;
        }
        self.rhs ^= other.rhs;
    }

    fn is_zero(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    fn lowest_set(&self) -> Option<usize> {
        self.words
            .iter()
            .position(|w| *w != 0)
            .map(|i| i * 64 + self.words[i].trailing_zeros() as usize)
    }

    pub fn support_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, w) in self.words.iter().enumerate() {
            let mut w = *w;
            while w != 0 {
                out.push(i * 64 + w.trailing_zeros() as usize);
                w &= w - 1;
            }
        }
        out
    }
}

/// Result of testing a parity support against the row span of a system.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpanResult {
    NotInSpan,
    ForcedValue(bool),
}

/// A consistent, row-reduced system of affine equations. The solution set is
/// an affine subspace of the full coordinate space; `pivots[i]` is the
/// dependent coordinate owned by row `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineSystem {
    space: CoordSpace,
    rows: Vec<Row>,
    pivots: Vec<usize>,
}

impl AffineSystem {
    pub fn new(space: CoordSpace) -> Self {
        AffineSystem { space, rows: Vec::new(), pivots: Vec::new() }
    }

    pub fn space(&self) -> CoordSpace {
        self.space
    }

    pub fn codim(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn dependents(&self) -> Vec<Coord> {
        self.pivots.iter().map(|&i| self.space.coord(i)).collect()
    }

    pub fn is_dependent(&self, c: Coord) -> bool {
        self.pivots.contains(&self.space.index(c))
    }

    fn make_row(&self, eq: &ParityEq) -> Row {
        let mut row = Row::zero(self.space.width());
        for &c in &eq.support {
            row.set(self.space.index(c));
        }
        row.rhs = eq.rhs;
        row
    }

    /// Eliminate all pivot coordinates from `row`.
    fn reduce(&self, row: &mut Row) {
        for (r, &p) in self.rows.iter().zip(&self.pivots) {
            if row.bit(p) {
                row.xor_assign(r);
            }
        }
    }

    /// Does the parity over `support` have a value forced on every solution?
    pub fn in_span(&self, support: &BTreeSet<Coord>) -> SpanResult {
        let mut row = self.make_row(&ParityEq { support: support.clone(), rhs: false });
        self.reduce(&mut row);
        if row.is_zero() {
            SpanResult::ForcedValue(row.rhs)
        } else {
            SpanResult::NotInSpan
        }
    }

    /// Insert an equation independent of the system, returning the extended
    /// system and the new pivot coordinate. The pivot is the lexicographically
    /// smallest coordinate remaining in the eliminated form of `e`; it is then
    /// eliminated from all older rows so the identity submatrix is preserved.
    pub fn row_reduce(&self, e: &ParityEq) -> Result<(AffineSystem, Coord), F2Error> {
        let mut row = self.make_row(e);
        self.reduce(&mut row);
        if row.is_zero() {
            return if row.rhs { Err(F2Error::Inconsistent) } else { Err(F2Error::SpanViolation) };
        }
        let pivot = row.lowest_set().unwrap();
        let mut sys = self.clone();
        for r in &mut sys.rows {
            if r.bit(pivot) {
                r.xor_assign(&row);
            }
        }
        sys.rows.push(row);
        sys.pivots.push(pivot);
        Ok((sys, self.space.coord(pivot)))
    }

    /// The value of every dependent coordinate under an assignment to the free
    /// coordinates. Free coordinates not mentioned by any row may be omitted.
    pub fn unique_extension(
        &self,
        free: &BTreeMap<Coord, bool>,
    ) -> Result<BTreeMap<Coord, bool>, F2Error> {
        let mut out = BTreeMap::new();
        for (row, &p) in self.rows.iter().zip(&self.pivots) {
            let mut v = row.rhs;
            for i in row.support_indices() {
                if i == p {
                    continue;
                }
                let c = self.space.coord(i);
                match free.get(&c) {
                    Some(&b) => v ^= b,
                    None => return Err(F2Error::IncompleteAssignment(c.to_string())),
                }
            }
            out.insert(self.space.coord(p), v);
        }
        Ok(out)
    }

    /// `2^(|universe| - codim)` solutions over any universe containing every
    /// coordinate of the system.
    pub fn solution_count(&self, universe_size: usize) -> BigUint {
        assert!(universe_size >= self.codim());
        BigUint::one() << (universe_size - self.codim())
    }

    /// Does a total assignment (indexed by dense coordinate) satisfy every
    /// equation?
    pub fn satisfied_by(&self, assignment: &[bool]) -> bool {
        self.rows.iter().all(|row| {
            row.support_indices().iter().fold(false, |acc, &i| acc ^ assignment[i]) == row.rhs
        })
    }

    /// The rows as equations (eliminated form).
    pub fn equations(&self) -> Vec<ParityEq> {
        self.rows
            .iter()
            .map(|r| {
                ParityEq::new(r.support_indices().into_iter().map(|i| self.space.coord(i)), r.rhs)
            })
            .collect()
    }

    /// Identity-submatrix invariant: each pivot appears in its own row only.
    pub fn identity_invariant_holds(&self) -> bool {
        self.pivots.iter().enumerate().all(|(i, &p)| {
            self.rows
                .iter()
                .enumerate()
                .all(|(j, r)| r.bit(p) == (i == j))
        })
    }
}
