//! The Index and Inner-Product gadgets and their N-fold compositions.
//!
//! Block inputs are packed into machine words: for `IND_m`, Alice's block is a
//! pointer in `[m]` and Bob's block is an `m`-bit mask; for `IP_b` both blocks
//! are `b`-bit masks. Explicit truth tables are supported so small ad-hoc
//! gadgets can be tested through the same interface.

use std::collections::BTreeSet;
use std::collections::HashSet;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GadgetKind {
    /// `IND_m(x, y) = y_x` with `x` in `[m]`, `y` in `{0,1}^m`.
    Index { m: usize },
    /// `IP_b(x, y) = <x, y> mod 2` over `{0,1}^b`.
    InnerProduct { b: usize },
    /// Explicit table, `table[x][y]`.
    Table { table: Vec<Vec<bool>> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GadgetSpec {
    pub kind: GadgetKind,
    pub n_blocks: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GadgetError {
    #[error("input shape does not match the gadget: {0}")]
    ShapeMismatch(String),
    #[error("enumeration of {0} pairs exceeds the image guard of {IMAGE_GUARD}")]
    TooLarge(u64),
}

/// Largest number of (x, y) pairs `image` will enumerate.
pub const IMAGE_GUARD: u64 = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineSide {
    Row,
    Column,
}

impl GadgetSpec {
    pub fn index(m: usize, n_blocks: usize) -> Self {
        assert!(m >= 2);
        GadgetSpec { kind: GadgetKind::Index { m }, n_blocks }
    }

    pub fn inner_product(b: usize, n_blocks: usize) -> Self {
        assert!(b >= 1);
        GadgetSpec { kind: GadgetKind::InnerProduct { b }, n_blocks }
    }

    /// Size of Alice's per-block domain.
    pub fn x_domain(&self) -> usize {
        match &self.kind {
            GadgetKind::Index { m } => *m,
            GadgetKind::InnerProduct { b } => 1 << b,
            GadgetKind::Table { table } => table.len(),
        }
    }

    /// Size of Bob's per-block domain.
    pub fn y_domain(&self) -> usize {
        match &self.kind {
            GadgetKind::Index { m } => 1 << m,
            GadgetKind::InnerProduct { b } => 1 << b,
            GadgetKind::Table { table } => table[0].len(),
        }
    }

    pub fn eval_block(&self, x: u32, y: u32) -> bool {
        match &self.kind {
            GadgetKind::Index { .. } => y >> x & 1 == 1,
            GadgetKind::InnerProduct { .. } => (x & y).count_ones() % 2 == 1,
            GadgetKind::Table { table } => table[x as usize][y as usize],
        }
    }

    /// Componentwise gadget value on all `N` blocks.
    pub fn eval(&self, x: &[u32], y: &[u32]) -> Result<Vec<bool>, GadgetError> {
        if x.len() != self.n_blocks || y.len() != self.n_blocks {
            return Err(GadgetError::ShapeMismatch(format!(
                "expected {} blocks, got x: {}, y: {}",
                self.n_blocks,
                x.len(),
                y.len()
            )));
        }
        let xd = self.x_domain() as u32;
        let yd = self.y_domain() as u32;
        if x.iter().any(|&v| v >= xd) || y.iter().any(|&v| v >= yd) {
            return Err(GadgetError::ShapeMismatch("block value out of range".into()));
        }
        Ok(x.iter().zip(y).map(|(&a, &b)| self.eval_block(a, b)).collect())
    }

    /// The exact image `{ eval(x, y) restricted to [N] \ drop }` with Alice
    /// ranging over her full universe and `y` over the given family.
    pub fn image<'a>(
        &self,
        y_family: impl Iterator<Item = &'a Vec<u32>>,
        drop: &BTreeSet<usize>,
        y_count: u64,
    ) -> Result<HashSet<Vec<bool>>, GadgetError> {
        let kept: Vec<usize> = (0..self.n_blocks).filter(|i| !drop.contains(i)).collect();
        let pairs = y_count.saturating_mul((self.x_domain() as u64).saturating_pow(kept.len() as u32));
        if pairs > IMAGE_GUARD {
            return Err(GadgetError::TooLarge(pairs));
        }
        let mut out = HashSet::new();
        for y in y_family {
            // Per-block output choices are independent once y is fixed.
            let choices: Vec<Vec<bool>> = kept
                .iter()
                .map(|&i| {
                    let mut vals = BTreeSet::new();
                    for a in 0..self.x_domain() as u32 {
                        vals.insert(self.eval_block(a, y[i]));
                    }
                    vals.into_iter().collect()
                })
                .collect();
            let mut stack = vec![Vec::new()];
            for ch in &choices {
                let mut next = Vec::new();
                for prefix in stack {
                    for &v in ch {
                        let mut p = prefix.clone();
                        p.push(v);
                        next.push(p);
                    }
                }
                stack = next;
            }
            out.extend(stack);
        }
        Ok(out)
    }

    /// Does the image over `(full X, y_family)` on `[N] \ drop` contain
    /// `target`? Short-circuits per y-string.
    pub fn image_contains<'a>(
        &self,
        y_family: impl Iterator<Item = &'a Vec<u32>>,
        drop: &BTreeSet<usize>,
        target: &[bool],
    ) -> bool {
        let kept: Vec<usize> = (0..self.n_blocks).filter(|i| !drop.contains(i)).collect();
        debug_assert_eq!(kept.len(), target.len());
        'outer: for y in y_family {
            for (pos, &i) in kept.iter().enumerate() {
                let reachable =
                    (0..self.x_domain() as u32).any(|a| self.eval_block(a, y[i]) == target[pos]);
                if !reachable {
                    continue 'outer;
                }
            }
            return true;
        }
        false
    }

    /// A constant row or column of the single-block communication matrix, if
    /// any: rows are scanned before columns, each in ascending index order.
    pub fn has_constant_line(&self) -> Option<(LineSide, u32, bool)> {
        for x in 0..self.x_domain() as u32 {
            let first = self.eval_block(x, 0);
            if (1..self.y_domain() as u32).all(|y| self.eval_block(x, y) == first) {
                return Some((LineSide::Row, x, first));
            }
        }
        for y in 0..self.y_domain() as u32 {
            let first = self.eval_block(0, y);
            if (1..self.x_domain() as u32).all(|x| self.eval_block(x, y) == first) {
                return Some((LineSide::Column, y, first));
            }
        }
        None
    }
}
