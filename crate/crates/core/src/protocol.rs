//! Communication protocol trees for lifted problems.
//!
//! Internal nodes are Alice splits (explicit partition of her universe),
//! Alice parities (XOR of x-bits, power-of-two `m` only), or Bob parities
//! (XOR of y-coordinates); the communicated bit selects the child. Trees are
//! stored as arenas with pre-order node ids and round-trip through a
//! line-oriented text format.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::dtree::{DecisionTree, DtNode, Label, TruthTable};
use crate::f2_linalg::Coord;
use crate::gadgets::GadgetSpec;
use crate::proofcnf::Cnf;

/// Which node kinds a protocol may use: `StarParity` allows arbitrary Alice
/// splits, `ParityParity` restricts both players to parities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtocolKind {
    StarParity,
    ParityParity,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProtoNode {
    /// Alice announces membership of her input in `zero_side` (bit 0) or its
    /// complement (bit 1). Members are sorted for binary search.
    AliceSplit { zero_side: Vec<Vec<u16>>, children: [usize; 2] },
    /// Alice announces the XOR of the listed x-bit coordinates.
    AliceParity { support: BTreeSet<Coord>, children: [usize; 2] },
    /// Bob announces the XOR of the listed y-coordinates.
    BobParity { support: BTreeSet<Coord>, children: [usize; 2] },
    Leaf(Label),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolTree {
    pub n_blocks: usize,
    pub m: usize,
    pub kind: ProtocolKind,
    pub nodes: Vec<ProtoNode>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("input shape does not match the protocol: {0}")]
    ShapeMismatch(String),
    #[error("correctness scan over {0} pairs exceeds the guard of {CHECK_GUARD}")]
    GuardExceeded(u64),
    #[error("alphabet {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("bad protocol file: {0}")]
    Format(String),
}

/// Largest number of (x, y) pairs `check_correct` will enumerate.
pub const CHECK_GUARD: u64 = 1 << 24;

/// The base problem of a lifted instance: a total function or the clause
/// search problem of an unsatisfiable CNF.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BaseProblem {
    Function(TruthTable),
    Search(Cnf),
}

impl BaseProblem {
    pub fn n_vars(&self) -> usize {
        match self {
            BaseProblem::Function(t) => t.n,
            BaseProblem::Search(c) => c.n_vars,
        }
    }

    /// Is `label` a correct output on `z`?
    pub fn accepts(&self, z: &[bool], label: &Label) -> bool {
        match self {
            BaseProblem::Function(t) => *label == Label::Bit(t.eval(z)),
            BaseProblem::Search(cnf) => {
                let falsified = cnf.falsified_clauses(z);
                match label {
                    Label::Clause(c) => falsified.contains(c),
                    Label::Bot => falsified.is_empty(),
                    Label::Bit(_) => false,
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiftedProblem {
    pub base: BaseProblem,
    pub gadget: GadgetSpec,
}

impl ProtocolTree {
    pub fn leaf(n_blocks: usize, m: usize, kind: ProtocolKind, label: Label) -> Self {
        ProtocolTree { n_blocks, m, kind, nodes: vec![ProtoNode::Leaf(label)] }
    }

    fn node_bit(&self, node: &ProtoNode, x: &[u16], y: &[u32]) -> bool {
        match node {
            ProtoNode::AliceSplit { zero_side, .. } => {
                zero_side.binary_search(&x.to_vec()).is_err()
            }
            ProtoNode::AliceParity { support, .. } => support
                .iter()
                .fold(false, |acc, c| acc ^ (x[c.block] >> c.pos & 1 == 1)),
            ProtoNode::BobParity { support, .. } => support
                .iter()
                .fold(false, |acc, c| acc ^ (y[c.block] >> c.pos & 1 == 1)),
            ProtoNode::Leaf(_) => unreachable!(),
        }
    }

    /// Walk the tree on `(x, y)`, returning the leaf label and the bit
    /// transcript.
    pub fn evaluate(&self, x: &[u16], y: &[u32]) -> Result<(Label, String), ProtocolError> {
        if x.len() != self.n_blocks || y.len() != self.n_blocks {
            return Err(ProtocolError::ShapeMismatch(format!(
                "expected {} blocks, got x: {}, y: {}",
                self.n_blocks,
                x.len(),
                y.len()
            )));
        }
        let mut at = 0;
        let mut transcript = String::new();
        loop {
            match &self.nodes[at] {
                ProtoNode::Leaf(label) => return Ok((label.clone(), transcript)),
                node => {
                    let b = self.node_bit(node, x, y);
                    transcript.push(if b { '1' } else { '0' });
                    at = self.children(at)[b as usize];
                }
            }
        }
    }

    fn children(&self, at: usize) -> [usize; 2] {
        match &self.nodes[at] {
            ProtoNode::AliceSplit { children, .. }
            | ProtoNode::AliceParity { children, .. }
            | ProtoNode::BobParity { children, .. } => *children,
            ProtoNode::Leaf(_) => unreachable!("leaf has no children"),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth_at(0)
    }

    fn depth_at(&self, at: usize) -> usize {
        match &self.nodes[at] {
            ProtoNode::Leaf(_) => 0,
            _ => {
                let [c0, c1] = self.children(at);
                1 + self.depth_at(c0).max(self.depth_at(c1))
            }
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, ProtoNode::Leaf(_))).count()
    }

    /// Leaf count of the subtree rooted at each node.
    pub fn subtree_leaves(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.nodes.len()];
        // Pre-order ids: children have larger ids, so a reverse scan sees
        // children before parents.
        for at in (0..self.nodes.len()).rev() {
            sizes[at] = match &self.nodes[at] {
                ProtoNode::Leaf(_) => 1,
                _ => {
                    let [c0, c1] = self.children(at);
                    sizes[c0] + sizes[c1]
                }
            };
        }
        sizes
    }

    /// Exhaustively search for an input pair where the leaf label is wrong for
    /// the problem. `None` means the protocol is correct.
    pub fn check_correct(
        &self,
        prob: &LiftedProblem,
    ) -> Result<Option<(Vec<u16>, Vec<u32>)>, ProtocolError> {
        let n = self.n_blocks;
        if prob.gadget.n_blocks != n || prob.base.n_vars() != n {
            return Err(ProtocolError::ShapeMismatch("problem arity mismatch".into()));
        }
        let xd = prob.gadget.x_domain() as u64;
        let yd = prob.gadget.y_domain() as u64;
        let pairs = xd
            .checked_pow(n as u32)
            .and_then(|a| yd.checked_pow(n as u32).map(|b| a.saturating_mul(b)))
            .unwrap_or(u64::MAX);
        if pairs > CHECK_GUARD {
            return Err(ProtocolError::GuardExceeded(pairs));
        }
        let mut x = vec![0u16; n];
        loop {
            let mut y = vec![0u32; n];
            loop {
                let z = prob.gadget.eval(
                    &x.iter().map(|&a| a as u32).collect::<Vec<_>>(),
                    &y,
                ).map_err(|e| ProtocolError::ShapeMismatch(e.to_string()))?;
                let (label, _) = self.evaluate(&x, &y)?;
                if !prob.base.accepts(&z, &label) {
                    return Ok(Some((x, y)));
                }
                if !bump(&mut y, yd as u32) {
                    break;
                }
            }
            if !bump16(&mut x, xd as u16) {
                break;
            }
        }
        Ok(None)
    }

    pub fn emit(&self) -> String {
        let kind = match self.kind {
            ProtocolKind::StarParity => "star-parity",
            ProtocolKind::ParityParity => "parity-parity",
        };
        let mut out = format!("PROTO {} {} {kind}\n", self.n_blocks, self.m);
        self.emit_at(0, &mut out);
        out
    }

    fn emit_at(&self, at: usize, out: &mut String) {
        match &self.nodes[at] {
            ProtoNode::Leaf(label) => out.push_str(&format!("LEAF {at} {label}\n")),
            ProtoNode::AliceSplit { zero_side, children } => {
                out.push_str(&format!("A0 {at}"));
                for member in zero_side {
                    out.push(' ');
                    let digits: Vec<String> = member.iter().map(|d| d.to_string()).collect();
                    out.push_str(&digits.join(","));
                }
                out.push('\n');
                self.emit_at(children[0], out);
                self.emit_at(children[1], out);
            }
            ProtoNode::AliceParity { support, children } => {
                out.push_str(&format!("AP {at}"));
                for c in support {
                    out.push_str(&format!(" {c}"));
                }
                out.push('\n');
                self.emit_at(children[0], out);
                self.emit_at(children[1], out);
            }
            ProtoNode::BobParity { support, children } => {
                out.push_str(&format!("BP {at}"));
                for c in support {
                    out.push_str(&format!(" {c}"));
                }
                out.push('\n');
                self.emit_at(children[0], out);
                self.emit_at(children[1], out);
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| ProtocolError::Format("empty file".into()))?;
        let mut it = header.split_whitespace();
        let bad = || ProtocolError::Format(format!("bad header `{header}`"));
        if it.next() != Some("PROTO") {
            return Err(bad());
        }
        let n_blocks: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let m: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let kind = match it.next() {
            Some("star-parity") => ProtocolKind::StarParity,
            Some("parity-parity") => ProtocolKind::ParityParity,
            _ => return Err(bad()),
        };
        let mut tree = ProtocolTree { n_blocks, m, kind, nodes: Vec::new() };
        tree.parse_subtree(&mut lines)?;
        if lines.next().is_some() {
            return Err(ProtocolError::Format("trailing content after the tree".into()));
        }
        Ok(tree)
    }

    fn parse_subtree<'a>(
        &mut self,
        lines: &mut impl Iterator<Item = &'a str>,
    ) -> Result<usize, ProtocolError> {
        let line = lines
            .next()
            .ok_or_else(|| ProtocolError::Format("unexpected end of file".into()))?;
        let bad = || ProtocolError::Format(format!("bad node line `{line}`"));
        let mut it = lines_tokens(line);
        let tag = it.next().ok_or_else(bad)?;
        let id: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if id != self.nodes.len() {
            return Err(ProtocolError::Format(format!(
                "node id {id} out of pre-order (expected {})",
                self.nodes.len()
            )));
        }
        let at = self.nodes.len();
        match tag {
            "LEAF" => {
                let label: Label =
                    it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                self.nodes.push(ProtoNode::Leaf(label));
                return Ok(at);
            }
            "A0" => {
                let mut zero_side = Vec::new();
                for tok in it {
                    let member: Vec<u16> = tok
                        .split(',')
                        .map(|d| d.parse().map_err(|_| bad()))
                        .collect::<Result<_, _>>()?;
                    if member.len() != self.n_blocks
                        || member.iter().any(|&a| a as usize >= self.m)
                    {
                        return Err(bad());
                    }
                    zero_side.push(member);
                }
                zero_side.sort();
                self.nodes.push(ProtoNode::AliceSplit { zero_side, children: [0, 0] });
            }
            "AP" | "BP" => {
                let support: BTreeSet<Coord> = it
                    .map(|tok| self.parse_coord(tok, tag == "AP"))
                    .collect::<Result<_, _>>()?;
                if support.is_empty() {
                    return Err(bad());
                }
                self.nodes.push(if tag == "AP" {
                    ProtoNode::AliceParity { support, children: [0, 0] }
                } else {
                    ProtoNode::BobParity { support, children: [0, 0] }
                });
            }
            _ => return Err(bad()),
        }
        let c0 = self.parse_subtree(lines)?;
        let c1 = self.parse_subtree(lines)?;
        match &mut self.nodes[at] {
            ProtoNode::AliceSplit { children, .. }
            | ProtoNode::AliceParity { children, .. }
            | ProtoNode::BobParity { children, .. } => *children = [c0, c1],
            ProtoNode::Leaf(_) => unreachable!(),
        }
        Ok(at)
    }

    fn parse_coord(&self, tok: &str, is_x: bool) -> Result<Coord, ProtocolError> {
        let bad = || ProtocolError::Format(format!("bad coordinate `{tok}`"));
        let rest = tok
            .strip_prefix(if is_x { 'x' } else { 'y' })
            .ok_or_else(bad)?;
        let (block, pos) = rest.split_once('.').ok_or_else(bad)?;
        let block: usize = block.parse().map_err(|_| bad())?;
        let pos: usize = pos.parse().map_err(|_| bad())?;
        let limit = if is_x { self.m.trailing_zeros() as usize } else { self.m };
        if block == 0 || block > self.n_blocks || pos >= limit {
            return Err(bad());
        }
        Ok(if is_x { Coord::x(block - 1, pos) } else { Coord::y(block - 1, pos) })
    }
}

fn lines_tokens(line: &str) -> impl Iterator<Item = &str> {
    line.split_whitespace()
}

fn bump(v: &mut [u32], base: u32) -> bool {
    for d in v.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

fn bump16(v: &mut [u16], base: u16) -> bool {
    for d in v.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// Expand a decision tree into the standard lifted protocol: each query of
/// `z_i` becomes `l = log2 m` Alice parities announcing the bits of `x_i`
/// (high to low), then one Bob parity on the pointed coordinate `y_{i,j}`.
pub fn canonical_protocol(
    dt: &DecisionTree,
    m: usize,
) -> Result<ProtocolTree, ProtocolError> {
    if !m.is_power_of_two() || m < 2 {
        return Err(ProtocolError::NotPowerOfTwo(m));
    }
    let ell = m.trailing_zeros() as usize;
    let mut proto = ProtocolTree {
        n_blocks: dt.n_vars,
        m,
        kind: ProtocolKind::ParityParity,
        nodes: Vec::new(),
    };
    expand_node(dt, 0, &mut proto, ell);
    Ok(proto)
}

fn expand_node(dt: &DecisionTree, at: usize, proto: &mut ProtocolTree, ell: usize) -> usize {
    match &dt.nodes[at] {
        DtNode::Leaf(label) => {
            let id = proto.nodes.len();
            proto.nodes.push(ProtoNode::Leaf(label.clone()));
            id
        }
        DtNode::Query { var, children } => expand_alice_bits(dt, *var, *children, 0, proto, ell),
    }
}

/// Announce bits `ell-1-depth .. 0` of `x_var`, accumulating the pointer `j`
/// from the bits announced so far, then hand off to Bob.
fn expand_alice_bits(
    dt: &DecisionTree,
    var: usize,
    dt_children: [usize; 2],
    path: usize,
    proto: &mut ProtocolTree,
    ell: usize,
) -> usize {
    let depth = path_depth(path);
    if depth == ell {
        let j = path_value(path, ell);
        let id = proto.nodes.len();
        proto.nodes.push(ProtoNode::BobParity {
            support: [Coord::y(var, j)].into_iter().collect(),
            children: [0, 0],
        });
        let c0 = expand_node(dt, dt_children[0], proto, ell);
        let c1 = expand_node(dt, dt_children[1], proto, ell);
        if let ProtoNode::BobParity { children, .. } = &mut proto.nodes[id] {
            *children = [c0, c1];
        }
        return id;
    }
    let bit = ell - 1 - depth;
    let id = proto.nodes.len();
    proto.nodes.push(ProtoNode::AliceParity {
        support: [Coord::x(var, bit)].into_iter().collect(),
        children: [0, 0],
    });
    let c0 = expand_alice_bits(dt, var, dt_children, push_path(path, false), proto, ell);
    let c1 = expand_alice_bits(dt, var, dt_children, push_path(path, true), proto, ell);
    if let ProtoNode::AliceParity { children, .. } = &mut proto.nodes[id] {
        *children = [c0, c1];
    }
    id
}

// A bit path is packed as (1 << depth) | bits so that depth is recoverable.
fn path_depth(path: usize) -> usize {
    if path == 0 {
        0
    } else {
        usize::BITS as usize - 1 - path.leading_zeros() as usize
    }
}

fn path_value(path: usize, ell: usize) -> usize {
    // Bits were pushed high-to-low, so the accumulated word reads as j.
    path & ((1 << ell) - 1)
}

fn push_path(path: usize, bit: bool) -> usize {
    let marked = if path == 0 { 1 } else { path };
    marked << 1 | bit as usize
}
