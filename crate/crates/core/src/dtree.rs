//! Decision trees and parity decision trees, with the line-oriented text
//! formats used by the CLI.
//!
//! Ordinary trees query one block of `z`; parity trees query the XOR of an
//! arbitrary set of variables. Both are stored as arenas with pre-order node
//! ids. Files are written block-1-based; everything is 0-based in memory.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Bit(bool),
    /// Clause id, 0-based.
    Clause(usize),
    /// "No witness exists" output for relations.
    Bot,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Bit(b) => write!(f, "{}", *b as u8),
            Label::Clause(c) => write!(f, "c{}", c + 1),
            Label::Bot => write!(f, "bot"),
        }
    }
}

impl FromStr for Label {
    type Err = TreeFormatError;

    fn from_str(s: &str) -> Result<Self, TreeFormatError> {
        match s {
            "0" => Ok(Label::Bit(false)),
            "1" => Ok(Label::Bit(true)),
            "bot" => Ok(Label::Bot),
            _ => {
                if let Some(rest) = s.strip_prefix('c') {
                    let id: usize = rest
                        .parse()
                        .map_err(|_| TreeFormatError::BadLabel(s.to_string()))?;
                    if id == 0 {
                        return Err(TreeFormatError::BadLabel(s.to_string()));
                    }
                    Ok(Label::Clause(id - 1))
                } else {
                    Err(TreeFormatError::BadLabel(s.to_string()))
                }
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeFormatError {
    #[error("bad label `{0}`")]
    BadLabel(String),
    #[error("bad header `{0}`")]
    BadHeader(String),
    #[error("bad node line `{0}`")]
    BadNode(String),
    #[error("unexpected end of file")]
    Truncated,
    #[error("trailing content after the tree")]
    Trailing,
    #[error("variable out of range in `{0}`")]
    VarRange(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DtNode {
    Query { var: usize, children: [usize; 2] },
    Leaf(Label),
}

/// An ordinary decision tree over `{0,1}^n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionTree {
    pub n_vars: usize,
    pub nodes: Vec<DtNode>,
}

impl DecisionTree {
    pub fn leaf(n_vars: usize, label: Label) -> Self {
        DecisionTree { n_vars, nodes: vec![DtNode::Leaf(label)] }
    }

    pub fn eval(&self, z: &[bool]) -> &Label {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                DtNode::Leaf(label) => return label,
                DtNode::Query { var, children } => at = children[z[*var] as usize],
            }
        }
    }

    pub fn height(&self) -> usize {
        self.height_at(0)
    }

    fn height_at(&self, at: usize) -> usize {
        match &self.nodes[at] {
            DtNode::Leaf(_) => 0,
            DtNode::Query { children, .. } => {
                1 + self.height_at(children[0]).max(self.height_at(children[1]))
            }
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, DtNode::Leaf(_))).count()
    }

    pub fn emit(&self) -> String {
        let mut out = format!("DTREE {}\n", self.n_vars);
        self.emit_at(0, &mut out);
        out
    }

    fn emit_at(&self, at: usize, out: &mut String) {
        match &self.nodes[at] {
            DtNode::Leaf(label) => out.push_str(&format!("LEAF {label}\n")),
            DtNode::Query { var, children } => {
                out.push_str(&format!("Q {}\n", var + 1));
                self.emit_at(children[0], out);
                self.emit_at(children[1], out);
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, TreeFormatError> {
        let mut lines = content_lines(text);
        let header = lines.next().ok_or(TreeFormatError::Truncated)?;
        let n_vars = header
            .strip_prefix("DTREE ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| TreeFormatError::BadHeader(header.to_string()))?;
        let mut tree = DecisionTree { n_vars, nodes: Vec::new() };
        tree.parse_subtree(&mut lines)?;
        if lines.next().is_some() {
            return Err(TreeFormatError::Trailing);
        }
        Ok(tree)
    }

    fn parse_subtree<'a>(
        &mut self,
        lines: &mut impl Iterator<Item = &'a str>,
    ) -> Result<usize, TreeFormatError> {
        let line = lines.next().ok_or(TreeFormatError::Truncated)?;
        if let Some(rest) = line.strip_prefix("LEAF ") {
            let id = self.nodes.len();
            self.nodes.push(DtNode::Leaf(rest.trim().parse()?));
            Ok(id)
        } else if let Some(rest) = line.strip_prefix("Q ") {
            let var: usize = rest
                .trim()
                .parse()
                .map_err(|_| TreeFormatError::BadNode(line.to_string()))?;
            if var == 0 || var > self.n_vars {
                return Err(TreeFormatError::VarRange(line.to_string()));
            }
            let id = self.nodes.len();
            self.nodes.push(DtNode::Query { var: var - 1, children: [0, 0] });
            let c0 = self.parse_subtree(lines)?;
            let c1 = self.parse_subtree(lines)?;
            if let DtNode::Query { children, .. } = &mut self.nodes[id] {
                *children = [c0, c1];
            }
            Ok(id)
        } else {
            Err(TreeFormatError::BadNode(line.to_string()))
        }
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Variable numbering of a lifted instance: per block, `l` x-bits followed by
/// `m` y-coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LiftedVars {
    pub n_blocks: usize,
    pub m: usize,
    pub ell: usize,
}

impl LiftedVars {
    pub fn new(n_blocks: usize, m: usize) -> Self {
        assert!(m.is_power_of_two() && m >= 2);
        LiftedVars { n_blocks, m, ell: m.trailing_zeros() as usize }
    }

    pub fn count(&self) -> usize {
        self.n_blocks * (self.ell + self.m)
    }

    pub fn x_var(&self, block: usize, bit: usize) -> usize {
        debug_assert!(block < self.n_blocks && bit < self.ell);
        block * (self.ell + self.m) + bit
    }

    pub fn y_var(&self, block: usize, pos: usize) -> usize {
        debug_assert!(block < self.n_blocks && pos < self.m);
        block * (self.ell + self.m) + self.ell + pos
    }

    /// `(block, position, is_x_bit)` of a variable id.
    pub fn decode(&self, var: usize) -> (usize, usize, bool) {
        let stride = self.ell + self.m;
        let (block, r) = (var / stride, var % stride);
        if r < self.ell {
            (block, r, true)
        } else {
            (block, r - self.ell, false)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PdtVars {
    Plain { n: usize },
    Lifted(LiftedVars),
}

impl PdtVars {
    pub fn count(&self) -> usize {
        match self {
            PdtVars::Plain { n } => *n,
            PdtVars::Lifted(l) => l.count(),
        }
    }

    fn token(&self, var: usize) -> String {
        match self {
            PdtVars::Plain { .. } => format!("z{}", var + 1),
            PdtVars::Lifted(l) => {
                let (block, pos, is_x) = l.decode(var);
                if is_x {
                    format!("x{}.{}", block + 1, pos)
                } else {
                    format!("y{}.{}", block + 1, pos)
                }
            }
        }
    }

    fn parse_token(&self, tok: &str) -> Result<usize, TreeFormatError> {
        let bad = || TreeFormatError::BadNode(tok.to_string());
        match self {
            PdtVars::Plain { n } => {
                let v: usize = tok.strip_prefix('z').ok_or_else(bad)?.parse().map_err(|_| bad())?;
                if v == 0 || v > *n {
                    return Err(TreeFormatError::VarRange(tok.to_string()));
                }
                Ok(v - 1)
            }
            PdtVars::Lifted(l) => {
                let (is_x, rest) = match tok.split_at(1) {
                    ("x", r) => (true, r),
                    ("y", r) => (false, r),
                    _ => return Err(bad()),
                };
                let (block, pos) = rest.split_once('.').ok_or_else(bad)?;
                let block: usize = block.parse().map_err(|_| bad())?;
                let pos: usize = pos.parse().map_err(|_| bad())?;
                let limit = if is_x { l.ell } else { l.m };
                if block == 0 || block > l.n_blocks || pos >= limit {
                    return Err(TreeFormatError::VarRange(tok.to_string()));
                }
                Ok(if is_x { l.x_var(block - 1, pos) } else { l.y_var(block - 1, pos) })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PdtNode {
    Query { support: Vec<usize>, children: [usize; 2] },
    Leaf(Label),
}

/// A parity decision tree: each internal node branches on the XOR of a
/// support set, edge labels are the parity value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityDecisionTree {
    pub vars: PdtVars,
    pub nodes: Vec<PdtNode>,
}

impl ParityDecisionTree {
    pub fn leaf(vars: PdtVars, label: Label) -> Self {
        ParityDecisionTree { vars, nodes: vec![PdtNode::Leaf(label)] }
    }

    pub fn eval(&self, assignment: &[bool]) -> &Label {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                PdtNode::Leaf(label) => return label,
                PdtNode::Query { support, children } => {
                    let parity = support.iter().fold(false, |acc, &v| acc ^ assignment[v]);
                    at = children[parity as usize];
                }
            }
        }
    }

    pub fn height(&self) -> usize {
        self.height_at(0)
    }

    fn height_at(&self, at: usize) -> usize {
        match &self.nodes[at] {
            PdtNode::Leaf(_) => 0,
            PdtNode::Query { children, .. } => {
                1 + self.height_at(children[0]).max(self.height_at(children[1]))
            }
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, PdtNode::Leaf(_))).count()
    }

    pub fn emit(&self) -> String {
        let mut out = match &self.vars {
            PdtVars::Plain { n } => format!("PDT {n}\n"),
            PdtVars::Lifted(l) => format!("PDTL {} {}\n", l.n_blocks, l.m),
        };
        self.emit_at(0, &mut out);
        out
    }

    fn emit_at(&self, at: usize, out: &mut String) {
        match &self.nodes[at] {
            PdtNode::Leaf(label) => out.push_str(&format!("LEAF {label}\n")),
            PdtNode::Query { support, children } => {
                out.push_str("QP");
                for &v in support {
                    out.push(' ');
                    out.push_str(&self.vars.token(v));
                }
                out.push('\n');
                self.emit_at(children[0], out);
                self.emit_at(children[1], out);
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, TreeFormatError> {
        let mut lines = content_lines(text);
        let header = lines.next().ok_or(TreeFormatError::Truncated)?;
        let vars = if let Some(rest) = header.strip_prefix("PDTL ") {
            let mut it = rest.split_whitespace();
            let n: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| TreeFormatError::BadHeader(header.to_string()))?;
            let m: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| TreeFormatError::BadHeader(header.to_string()))?;
            PdtVars::Lifted(LiftedVars::new(n, m))
        } else if let Some(rest) = header.strip_prefix("PDT ") {
            let n: usize = rest
                .trim()
                .parse()
                .map_err(|_| TreeFormatError::BadHeader(header.to_string()))?;
            PdtVars::Plain { n }
        } else {
            return Err(TreeFormatError::BadHeader(header.to_string()));
        };
        let mut tree = ParityDecisionTree { vars, nodes: Vec::new() };
        tree.parse_subtree(&mut lines)?;
        if lines.next().is_some() {
            return Err(TreeFormatError::Trailing);
        }
        Ok(tree)
    }

    fn parse_subtree<'a>(
        &mut self,
        lines: &mut impl Iterator<Item = &'a str>,
    ) -> Result<usize, TreeFormatError> {
        let line = lines.next().ok_or(TreeFormatError::Truncated)?;
        if let Some(rest) = line.strip_prefix("LEAF ") {
            let id = self.nodes.len();
            self.nodes.push(PdtNode::Leaf(rest.trim().parse()?));
            Ok(id)
        } else if let Some(rest) = line.strip_prefix("QP") {
            let support: Vec<usize> = rest
                .split_whitespace()
                .map(|tok| self.vars.parse_token(tok))
                .collect::<Result<_, _>>()?;
            if support.is_empty() {
                return Err(TreeFormatError::BadNode(line.to_string()));
            }
            let id = self.nodes.len();
            self.nodes.push(PdtNode::Query { support, children: [0, 0] });
            let c0 = self.parse_subtree(lines)?;
            let c1 = self.parse_subtree(lines)?;
            if let PdtNode::Query { children, .. } = &mut self.nodes[id] {
                *children = [c0, c1];
            }
            Ok(id)
        } else {
            Err(TreeFormatError::BadNode(line.to_string()))
        }
    }
}

/// A truth table `f: {0,1}^n -> {0,1}` indexed by the little-endian integer
/// encoding of the input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruthTable {
    pub n: usize,
    pub bits: Vec<bool>,
}

impl TruthTable {
    pub fn from_fn(n: usize, f: impl Fn(&[bool]) -> bool) -> Self {
        let bits = (0..1usize << n)
            .map(|w| {
                let z: Vec<bool> = (0..n).map(|i| w >> i & 1 == 1).collect();
                f(&z)
            })
            .collect();
        TruthTable { n, bits }
    }

    pub fn eval(&self, z: &[bool]) -> bool {
        let idx = z.iter().enumerate().fold(0usize, |acc, (i, &b)| acc | (b as usize) << i);
        self.bits[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_dt() -> DecisionTree {
        DecisionTree {
            n_vars: 2,
            nodes: vec![
                DtNode::Query { var: 0, children: [1, 2] },
                DtNode::Leaf(Label::Bit(false)),
                DtNode::Query { var: 1, children: [3, 4] },
                DtNode::Leaf(Label::Bit(false)),
                DtNode::Leaf(Label::Bit(true)),
            ],
        }
    }

    #[test]
    fn dt_eval_and_measures() {
        let t = small_dt();
        assert_eq!(t.eval(&[true, true]), &Label::Bit(true));
        assert_eq!(t.eval(&[false, true]), &Label::Bit(false));
        assert_eq!(t.height(), 2);
        assert_eq!(t.leaves(), 3);
    }

    #[test]
    fn dt_round_trip() {
        let t = small_dt();
        assert_eq!(DecisionTree::parse(&t.emit()).unwrap(), t);
    }

    #[test]
    fn pdt_round_trip_lifted() {
        let vars = LiftedVars::new(2, 4);
        let t = ParityDecisionTree {
            vars: PdtVars::Lifted(vars),
            nodes: vec![
                PdtNode::Query {
                    support: vec![vars.x_var(0, 1), vars.y_var(1, 3)],
                    children: [1, 2],
                },
                PdtNode::Leaf(Label::Clause(0)),
                PdtNode::Leaf(Label::Bot),
            ],
        };
        let text = t.emit();
        assert!(text.contains("QP x1.1 y2.3"));
        assert_eq!(ParityDecisionTree::parse(&text).unwrap(), t);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            DecisionTree::parse("DTREE 1\nQ 2\nLEAF 0\nLEAF 1\n"),
            Err(TreeFormatError::VarRange(_))
        ));
        assert!(matches!(
            DecisionTree::parse("DTREE 1\nQ 1\nLEAF 0\n"),
            Err(TreeFormatError::Truncated)
        ));
        assert!(matches!(
            DecisionTree::parse("DTREE 1\nLEAF 0\nLEAF 1\n"),
            Err(TreeFormatError::Trailing)
        ));
    }

    #[test]
    fn truth_table_indexing() {
        let xor2 = TruthTable::from_fn(2, |z| z[0] ^ z[1]);
        assert!(!xor2.eval(&[false, false]));
        assert!(xor2.eval(&[true, false]));
        assert!(xor2.eval(&[false, true]));
        assert!(!xor2.eval(&[true, true]));
    }
}
