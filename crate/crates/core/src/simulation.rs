//! The protocol-to-decision-tree simulation and its parity-decision-tree
//! variant.
//!
//! A run walks the protocol tree while maintaining Alice's surviving pointer
//! set `X`, a row-reduced affine system `E` defining Bob's surviving set, the
//! set `I` of fixed (queried) blocks, and the partial answer vector `rho`.
//! Bob's parities are span-tested against `E`; non-forced bits insert a new
//! equation whose pivot coordinate is then excluded from `X`. Whenever the
//! min-entropy rate of `X` outside `I` drops below `tau = 1/2`, a maximal
//! low-rate set of blocks is queried and pinned. The potential
//! `D(X restricted outside I) <= A + B - (1-tau)|I| log2 m` is asserted
//! exactly at every loop head.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_traits::One;
use thiserror::Error;

use crate::dtree::{DecisionTree, DtNode, Label, LiftedVars, ParityDecisionTree, PdtNode, PdtVars};
use crate::entropy::{self, EntropyError, PointerSet};
use crate::f2_linalg::{AffineSystem, Coord, CoordSpace, F2Error, ParityEq, Side, SpanResult};
use crate::protocol::{ProtoNode, ProtocolTree};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("the pointer set X became empty (invariant bug)")]
    EmptyX,
    #[error("simulation state corrupt: {0}")]
    Invariant(String),
    #[error("alphabet {0} is below the minimum of 4")]
    SmallM(usize),
    #[error("alphabet {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("the tree does not carry a lifted variable layout")]
    NotLifted,
    #[error("protocol depth {depth} exceeds the cap {cap} = N(log2 m + 1); pass force to override")]
    DepthGuard { depth: usize, cap: usize },
    #[error(transparent)]
    Entropy(#[from] EntropyError),
}

/// How Alice's non-forced bits choose a branch. `Majority` follows the larger
/// half of `X`; `SmallerSubtree` follows the smaller protocol subtree when the
/// bit splits `X` exactly in half (the size-counting variant).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlicePolicy {
    Majority,
    SmallerSubtree,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SimEvent {
    /// The run needs the value of this block of `z`.
    Query(usize),
    Done(Label),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    BobForced,
    BobNewEquation,
    AliceForced,
    AliceSplit,
}

/// One while-loop head (and, at the end, the leaf state): enough to recompute
/// the potential from scratch.
#[derive(Clone, Debug)]
pub struct HeadRecord {
    pub node: usize,
    pub x: PointerSet,
    pub fixed: Vec<usize>,
    /// Bits spoken so far (all protocol edges traversed).
    pub a_bits: usize,
    pub b_bits: usize,
    /// The rule fired from this head, the bit sent, and the blocks queried by
    /// the restoration that followed, if any.
    pub rule: Option<Rule>,
    pub bit: Option<bool>,
    pub queried: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct SimTrace {
    pub records: Vec<HeadRecord>,
}

impl SimTrace {
    /// Tab-separated dump: node, rule, bit, |X|, |I|, A, B, queried blocks,
    /// potential in bits.
    pub fn tsv(&self, ell: usize) -> String {
        let mut out = String::from("node\trule\tbit\tx_size\tfixed\ta\tb\tqueried\tpotential\n");
        for r in &self.records {
            let rule = match r.rule {
                Some(Rule::BobForced) => "bob-forced",
                Some(Rule::BobNewEquation) => "bob-new-equation",
                Some(Rule::AliceForced) => "alice-forced",
                Some(Rule::AliceSplit) => "alice-split",
                None => "leaf",
            };
            let bit = r.bit.map(|b| if b { "1" } else { "0" }).unwrap_or("-");
            let queried = if r.queried.is_empty() {
                "-".to_string()
            } else {
                r.queried.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")
            };
            let potential = ((r.x.n_blocks - r.fixed.len()) * ell) as f64
                - (r.x.len() as f64).log2();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\n",
                r.node,
                rule,
                bit,
                r.x.len(),
                r.fixed.len(),
                r.a_bits,
                r.b_bits,
                queried,
                potential
            ));
        }
        out
    }
}

/// Exact form of the potential inequality
/// `(N-|I|) l - log2 |X| <= A+B - |I| l / 2`, cleared of logarithms:
/// `|X|^2 * 2^(2(A+B)) >= 2^(2(N-|I|)l + |I|l)`.
pub fn potential_holds(x_len: usize, n_blocks: usize, fixed: usize, ell: usize, ab: usize) -> bool {
    let lhs = BigUint::from(x_len).pow(2) << (2 * ab);
    let rhs = BigUint::one() << (2 * (n_blocks - fixed) * ell + fixed * ell);
    lhs >= rhs
}

#[derive(Clone, Debug)]
struct Pending {
    blocks: Vec<usize>,
    alpha: Vec<u16>,
    answers: Vec<Option<bool>>,
    next: usize,
}

/// A resumable simulation of one protocol walk. Drive it with [`SimRun::next_event`]
/// and [`SimRun::answer`]; clone at a query to explore both answers.
#[derive(Clone)]
pub struct SimRun<'p> {
    proto: &'p ProtocolTree,
    policy: AlicePolicy,
    ell: usize,
    sizes: Vec<usize>,
    x: PointerSet,
    sys: AffineSystem,
    fixed: BTreeSet<usize>,
    rho: Vec<Option<bool>>,
    node: usize,
    a_bits: usize,
    b_bits: usize,
    /// Bits that actually shrank the state (Bob: new equation; Alice: proper
    /// split).
    a_used: usize,
    b_used: usize,
    trace: SimTrace,
    pending: Option<Pending>,
    done: Option<Label>,
}

/// Result of a finished run.
#[derive(Clone, Debug)]
pub struct SimOutcome {
    pub label: Label,
    /// Queried blocks, ascending.
    pub queried: Vec<usize>,
    pub a_bits: usize,
    pub b_bits: usize,
    pub a_used: usize,
    pub b_used: usize,
    pub trace: SimTrace,
}

impl<'p> SimRun<'p> {
    pub fn new(
        proto: &'p ProtocolTree,
        policy: AlicePolicy,
        force_depth: bool,
    ) -> Result<Self, SimError> {
        let m = proto.m;
        if !m.is_power_of_two() {
            return Err(SimError::NotPowerOfTwo(m));
        }
        if m < 4 {
            return Err(SimError::SmallM(m));
        }
        let ell = m.trailing_zeros() as usize;
        let cap = proto.n_blocks * (ell + 1);
        if proto.depth() > cap && !force_depth {
            return Err(SimError::DepthGuard { depth: proto.depth(), cap });
        }
        Ok(SimRun {
            proto,
            policy,
            ell,
            sizes: proto.subtree_leaves(),
            x: PointerSet::full(proto.n_blocks, m),
            sys: AffineSystem::new(CoordSpace::new(proto.n_blocks, m, 0)),
            fixed: BTreeSet::new(),
            rho: vec![None; proto.n_blocks],
            node: 0,
            a_bits: 0,
            b_bits: 0,
            a_used: 0,
            b_used: 0,
            trace: SimTrace::default(),
            pending: None,
            done: None,
        })
    }

    pub fn next_event(&mut self) -> Result<SimEvent, SimError> {
        loop {
            if let Some(label) = &self.done {
                return Ok(SimEvent::Done(label.clone()));
            }
            if let Some(p) = &self.pending {
                if p.next < p.blocks.len() {
                    return Ok(SimEvent::Query(p.blocks[p.next]));
                }
                self.apply_restore()?;
                continue;
            }
            self.record_head();
            assert!(
                potential_holds(
                    self.x.len(),
                    self.proto.n_blocks,
                    self.fixed.len(),
                    self.ell,
                    self.a_bits + self.b_bits
                ),
                "potential inequality violated at node {}",
                self.node
            );
            debug_assert_eq!(self.check_invariants(), Ok(()));
            match &self.proto.nodes[self.node] {
                ProtoNode::Leaf(label) => {
                    self.done = Some(label.clone());
                    continue;
                }
                ProtoNode::BobParity { support, children } => {
                    let children = *children;
                    self.b_bits += 1;
                    match self.sys.in_span(support) {
                        SpanResult::ForcedValue(b) => {
                            self.finish_step(Rule::BobForced, b);
                            self.node = children[b as usize];
                        }
                        SpanResult::NotInSpan => {
                            let b = self.sizes[children[1]] < self.sizes[children[0]];
                            let eq = ParityEq { support: support.clone(), rhs: b };
                            let (sys, pivot) = self
                                .sys
                                .row_reduce(&eq)
                                .map_err(|e| SimError::Invariant(e.to_string()))?;
                            self.sys = sys;
                            self.b_used += 1;
                            let before = self.x.len();
                            self.x.members.retain(|x| x[pivot.block] as usize != pivot.pos);
                            if self.x.is_empty() {
                                return Err(SimError::EmptyX);
                            }
                            // Conditioning bound: the removal halves X at worst.
                            debug_assert!(2 * self.x.len() >= before);
                            self.finish_step(Rule::BobNewEquation, b);
                            self.node = children[b as usize];
                        }
                    }
                }
                node => {
                    // Alice speaks; partition X by the node's predicate.
                    let children = match node {
                        ProtoNode::AliceSplit { children, .. }
                        | ProtoNode::AliceParity { children, .. } => *children,
                        _ => unreachable!(),
                    };
                    self.a_bits += 1;
                    let side1: Vec<bool> = self
                        .x
                        .members
                        .iter()
                        .map(|x| self.proto_bit(node, x))
                        .collect();
                    let ones = side1.iter().filter(|&&b| b).count();
                    let zeros = self.x.len() - ones;
                    if ones == 0 || zeros == 0 {
                        let b = zeros == 0;
                        self.finish_step(Rule::AliceForced, b);
                        self.node = children[b as usize];
                    } else {
                        let b = match self.policy {
                            AlicePolicy::Majority => ones > zeros,
                            AlicePolicy::SmallerSubtree if ones == zeros => {
                                self.sizes[children[1]] < self.sizes[children[0]]
                            }
                            AlicePolicy::SmallerSubtree => ones > zeros,
                        };
                        let keep: Vec<Vec<u16>> = self
                            .x
                            .members
                            .iter()
                            .zip(&side1)
                            .filter(|(_, &s)| s == b)
                            .map(|(x, _)| x.clone())
                            .collect();
                        debug_assert!(2 * keep.len() >= self.x.len() || self.policy == AlicePolicy::SmallerSubtree);
                        self.x.members = keep;
                        self.a_used += 1;
                        self.finish_step(Rule::AliceSplit, b);
                        self.node = children[b as usize];
                    }
                }
            }
            self.maybe_schedule_restore()?;
        }
    }

    fn proto_bit(&self, node: &ProtoNode, x: &[u16]) -> bool {
        match node {
            ProtoNode::AliceSplit { zero_side, .. } => zero_side.binary_search(&x.to_vec()).is_err(),
            ProtoNode::AliceParity { support, .. } => support
                .iter()
                .fold(false, |acc, c| acc ^ (x[c.block] >> c.pos & 1 == 1)),
            _ => unreachable!(),
        }
    }

    pub fn answer(&mut self, block: usize, bit: bool) -> Result<(), SimError> {
        let p = self
            .pending
            .as_mut()
            .ok_or_else(|| SimError::Invariant("answer with no pending query".into()))?;
        if p.next >= p.blocks.len() || p.blocks[p.next] != block {
            return Err(SimError::Invariant(format!("unexpected answer for block {block}")));
        }
        p.answers[p.next] = Some(bit);
        p.next += 1;
        Ok(())
    }

    fn maybe_schedule_restore(&mut self) -> Result<(), SimError> {
        let report = entropy::min_entropy_rate(&self.x, &self.fixed, false)?;
        if report.witness_set.is_empty() || !report.rate_exact.lt_threshold(1, 2) {
            return Ok(());
        }
        let (blocks, alpha) = entropy::maximal_low_rate_set(&self.x, &self.fixed, 1, 2, false)?;
        debug_assert!(!blocks.is_empty());
        let n = blocks.len();
        self.pending = Some(Pending { blocks, alpha, answers: vec![None; n], next: 0 });
        Ok(())
    }

    fn apply_restore(&mut self) -> Result<(), SimError> {
        let p = self.pending.take().unwrap();
        self.x = self.x.restrict(&p.blocks, &p.alpha);
        if self.x.is_empty() {
            return Err(SimError::EmptyX);
        }
        for ((&i, &a), answer) in p.blocks.iter().zip(&p.alpha).zip(&p.answers) {
            let b = answer.expect("restore applied before all answers arrived");
            self.rho[i] = Some(b);
            let eq = ParityEq::single(Coord::y(i, a as usize), b);
            let (sys, pivot) = self
                .sys
                .row_reduce(&eq)
                .map_err(|e| SimError::Invariant(e.to_string()))?;
            if pivot != Coord::y(i, a as usize) {
                return Err(SimError::Invariant(format!(
                    "restore pivot {pivot} differs from the queried coordinate"
                )));
            }
            self.sys = sys;
            self.fixed.insert(i);
        }
        if let Some(last) = self.trace.records.last_mut() {
            last.queried.extend(p.blocks.iter().copied());
        }
        Ok(())
    }

    fn record_head(&mut self) {
        self.trace.records.push(HeadRecord {
            node: self.node,
            x: self.x.clone(),
            fixed: self.fixed.iter().copied().collect(),
            a_bits: self.a_bits,
            b_bits: self.b_bits,
            rule: None,
            bit: None,
            queried: Vec::new(),
        });
    }

    fn finish_step(&mut self, rule: Rule, bit: bool) {
        let last = self.trace.records.last_mut().unwrap();
        last.rule = Some(rule);
        last.bit = Some(bit);
    }

    /// Lemma-style invariants, checkable at any loop head.
    pub fn check_invariants(&self) -> Result<(), String> {
        // (a) fixed(rho) = I.
        let from_rho: BTreeSet<usize> = self
            .rho
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_some())
            .map(|(i, _)| i)
            .collect();
        if from_rho != self.fixed {
            return Err("fixed(rho) differs from I".into());
        }
        // (b) E row-reduced on its pivots.
        if !self.sys.identity_invariant_holds() {
            return Err("identity submatrix invariant fails".into());
        }
        // (c) outside I, X points only to free coordinates.
        for x in &self.x.members {
            for i in 0..self.proto.n_blocks {
                if !self.fixed.contains(&i) && self.sys.is_dependent(Coord::y(i, x[i] as usize)) {
                    return Err(format!("x points to dependent coordinate in block {}", i + 1));
                }
            }
        }
        // (e) min-entropy rate at least tau outside I.
        let report =
            entropy::min_entropy_rate(&self.x, &self.fixed, false).map_err(|e| e.to_string())?;
        if !report.witness_set.is_empty() && report.rate_exact.lt_threshold(1, 2) {
            return Err("min-entropy rate below tau".into());
        }
        Ok(())
    }

    pub fn outcome(mut self) -> SimOutcome {
        let label = self.done.clone().expect("outcome of an unfinished run");
        // Final snapshot so the leaf state is checkable like a loop head.
        self.record_head();
        SimOutcome {
            label,
            queried: self.fixed.iter().copied().collect(),
            a_bits: self.a_bits,
            b_bits: self.b_bits,
            a_used: self.a_used,
            b_used: self.b_used,
            trace: self.trace,
        }
    }
}

/// Run the simulation against a fixed input `z`.
pub fn simulate(
    proto: &ProtocolTree,
    z: &[bool],
    policy: AlicePolicy,
    force_depth: bool,
) -> Result<SimOutcome, SimError> {
    if z.len() != proto.n_blocks {
        return Err(SimError::Invariant(format!(
            "z has {} bits, protocol expects {}",
            z.len(),
            proto.n_blocks
        )));
    }
    let mut run = SimRun::new(proto, policy, force_depth)?;
    loop {
        match run.next_event()? {
            SimEvent::Query(i) => run.answer(i, z[i])?,
            SimEvent::Done(_) => return Ok(run.outcome()),
        }
    }
}

trait Runner: Clone {
    fn step(&mut self) -> Result<SimEvent, SimError>;
    fn push_answer(&mut self, block: usize, bit: bool) -> Result<(), SimError>;
}

impl Runner for SimRun<'_> {
    fn step(&mut self) -> Result<SimEvent, SimError> {
        self.next_event()
    }

    fn push_answer(&mut self, block: usize, bit: bool) -> Result<(), SimError> {
        self.answer(block, bit)
    }
}

fn grow_tree<R: Runner>(
    mut run: R,
    nodes: &mut Vec<DtNode>,
    finished: &mut Vec<R>,
) -> Result<usize, SimError> {
    match run.step()? {
        SimEvent::Done(label) => {
            let id = nodes.len();
            nodes.push(DtNode::Leaf(label));
            finished.push(run);
            Ok(id)
        }
        SimEvent::Query(var) => {
            let id = nodes.len();
            nodes.push(DtNode::Query { var, children: [0, 0] });
            let mut zero = run.clone();
            zero.push_answer(var, false)?;
            let c0 = grow_tree(zero, nodes, finished)?;
            run.push_answer(var, true)?;
            let c1 = grow_tree(run, nodes, finished)?;
            if let DtNode::Query { children, .. } = &mut nodes[id] {
                *children = [c0, c1];
            }
            Ok(id)
        }
    }
}

/// Materialize the decision tree the simulation computes, by exploring both
/// answers at every query (0 before 1, pre-order node ids). Also returns the
/// per-leaf run outcomes.
pub fn extract_decision_tree(
    proto: &ProtocolTree,
    policy: AlicePolicy,
    force_depth: bool,
) -> Result<(DecisionTree, Vec<SimOutcome>), SimError> {
    let run = SimRun::new(proto, policy, force_depth)?;
    let mut nodes = Vec::new();
    let mut finished = Vec::new();
    grow_tree(run, &mut nodes, &mut finished)?;
    let tree = DecisionTree { n_vars: proto.n_blocks, nodes };
    Ok((tree, finished.into_iter().map(SimRun::outcome).collect()))
}

// ---------------------------------------------------------------------------
// Parity-decision-tree variant
// ---------------------------------------------------------------------------

/// A resumable walk of a lifted PDT. One affine system spans the x-bits and
/// y-coordinates; y-coordinates are preferred as pivots (the dense numbering
/// sorts them first), and an x-side bit constraint replaces the pointer
/// removal of the set-based simulation. A block is queried once more than
/// `tau * l` of its x-bits have become pivots.
#[derive(Clone)]
pub struct PdtRun<'t> {
    t: &'t ParityDecisionTree,
    label_map: &'t dyn Fn(&Label) -> Label,
    vars: LiftedVars,
    sys: AffineSystem,
    fixed: BTreeSet<usize>,
    node: usize,
    sizes: Vec<usize>,
    spoken: usize,
    pending: Option<(usize, u16)>,
    done: Option<Label>,
}

impl<'t> PdtRun<'t> {
    pub fn new(
        t: &'t ParityDecisionTree,
        label_map: &'t dyn Fn(&Label) -> Label,
    ) -> Result<Self, SimError> {
        let vars = match t.vars {
            PdtVars::Lifted(v) => v,
            PdtVars::Plain { .. } => return Err(SimError::NotLifted),
        };
        if vars.m < 4 {
            return Err(SimError::SmallM(vars.m));
        }
        let mut sizes = vec![0usize; t.nodes.len()];
        for at in (0..t.nodes.len()).rev() {
            sizes[at] = match &t.nodes[at] {
                PdtNode::Leaf(_) => 1,
                PdtNode::Query { children, .. } => sizes[children[0]] + sizes[children[1]],
            };
        }
        Ok(PdtRun {
            t,
            label_map,
            vars,
            sys: AffineSystem::new(CoordSpace::new(vars.n_blocks, vars.m, vars.ell)),
            fixed: BTreeSet::new(),
            node: 0,
            sizes,
            spoken: 0,
            pending: None,
            done: None,
        })
    }

    fn x_pivot_count(&self, block: usize) -> usize {
        self.sys
            .dependents()
            .iter()
            .filter(|c| c.side == Side::X && c.block == block)
            .count()
    }

    /// Lex-smallest pointer value of `block` consistent with the system.
    fn consistent_pointer(&self, block: usize) -> Option<u16> {
        'outer: for j in 0..self.vars.m {
            let mut probe = self.sys.clone();
            for bit in 0..self.vars.ell {
                let eq = ParityEq::single(Coord::x(block, bit), j >> bit & 1 == 1);
                match probe.row_reduce(&eq) {
                    Ok((s, _)) => probe = s,
                    Err(F2Error::SpanViolation) => {}
                    Err(_) => continue 'outer,
                }
            }
            return Some(j as u16);
        }
        None
    }

    /// Ensure `x_block` cannot point at `j`: if not already impossible, pin
    /// the lex-smallest unconstrained bit of the block to differ from `j`.
    fn exclude_pointer(&mut self, block: usize, j: usize) -> Result<(), SimError> {
        let mut probe = self.sys.clone();
        for bit in 0..self.vars.ell {
            let eq = ParityEq::single(Coord::x(block, bit), j >> bit & 1 == 1);
            match probe.row_reduce(&eq) {
                Ok((s, _)) => probe = s,
                Err(F2Error::SpanViolation) => {}
                Err(_) => return Ok(()),
            }
        }
        for bit in 0..self.vars.ell {
            let support: BTreeSet<Coord> = [Coord::x(block, bit)].into_iter().collect();
            if self.sys.in_span(&support) == SpanResult::NotInSpan {
                let eq = ParityEq::single(Coord::x(block, bit), j >> bit & 1 == 0);
                let (sys, _) = self
                    .sys
                    .row_reduce(&eq)
                    .map_err(|e| SimError::Invariant(e.to_string()))?;
                self.sys = sys;
                return Ok(());
            }
        }
        Err(SimError::Invariant(format!(
            "block {} is fully pinned to a dependent coordinate",
            block + 1
        )))
    }

    pub fn next_event(&mut self) -> Result<SimEvent, SimError> {
        loop {
            if let Some(label) = &self.done {
                return Ok(SimEvent::Done(label.clone()));
            }
            if let Some((block, _)) = self.pending {
                return Ok(SimEvent::Query(block));
            }
            // Restoration trigger: more than tau*l x-pivots in a live block.
            let trigger = (0..self.vars.n_blocks)
                .filter(|i| !self.fixed.contains(i))
                .find(|&i| 2 * self.x_pivot_count(i) > self.vars.ell);
            if let Some(block) = trigger {
                let alpha = self.consistent_pointer(block).ok_or_else(|| {
                    SimError::Invariant(format!("block {} has no consistent pointer", block + 1))
                })?;
                for bit in 0..self.vars.ell {
                    let eq = ParityEq::single(Coord::x(block, bit), alpha >> bit & 1 == 1);
                    match self.sys.row_reduce(&eq) {
                        Ok((s, _)) => self.sys = s,
                        Err(F2Error::SpanViolation) => {}
                        Err(e) => return Err(SimError::Invariant(e.to_string())),
                    }
                }
                self.pending = Some((block, alpha));
                continue;
            }
            match &self.t.nodes[self.node] {
                PdtNode::Leaf(label) => {
                    self.done = Some((self.label_map)(label));
                    continue;
                }
                PdtNode::Query { support, children } => {
                    let children = *children;
                    let coords: BTreeSet<Coord> = support
                        .iter()
                        .map(|&v| {
                            let (block, pos, is_x) = self.vars.decode(v);
                            if is_x {
                                Coord::x(block, pos)
                            } else {
                                Coord::y(block, pos)
                            }
                        })
                        .collect();
                    match self.sys.in_span(&coords) {
                        SpanResult::ForcedValue(b) => self.node = children[b as usize],
                        SpanResult::NotInSpan => {
                            let b = self.sizes[children[1]] < self.sizes[children[0]];
                            let eq = ParityEq { support: coords, rhs: b };
                            let (sys, pivot) = self
                                .sys
                                .row_reduce(&eq)
                                .map_err(|e| SimError::Invariant(e.to_string()))?;
                            self.sys = sys;
                            self.spoken += 1;
                            if pivot.side == Side::Y {
                                self.exclude_pointer(pivot.block, pivot.pos)?;
                            }
                            self.node = children[b as usize];
                        }
                    }
                }
            }
        }
    }

    pub fn answer(&mut self, block: usize, bit: bool) -> Result<(), SimError> {
        let (pending_block, alpha) = self
            .pending
            .take()
            .ok_or_else(|| SimError::Invariant("answer with no pending query".into()))?;
        if pending_block != block {
            return Err(SimError::Invariant(format!("unexpected answer for block {block}")));
        }
        let eq = ParityEq::single(Coord::y(block, alpha as usize), bit);
        let (sys, pivot) = self
            .sys
            .row_reduce(&eq)
            .map_err(|e| SimError::Invariant(e.to_string()))?;
        if pivot != Coord::y(block, alpha as usize) {
            return Err(SimError::Invariant(
                "queried coordinate was already dependent".into(),
            ));
        }
        self.sys = sys;
        self.fixed.insert(block);
        Ok(())
    }
}

impl Runner for PdtRun<'_> {
    fn step(&mut self) -> Result<SimEvent, SimError> {
        self.next_event()
    }

    fn push_answer(&mut self, block: usize, bit: bool) -> Result<(), SimError> {
        self.answer(block, bit)
    }
}

/// Convert a lifted-variable PDT into an ordinary decision tree over `z`,
/// mapping leaf labels through `label_map` (identity for function problems;
/// lifted-clause to base-clause for search problems). The output never has
/// more leaves, nor greater height, than the input.
pub fn pdt_simulate<'a>(
    t: &'a ParityDecisionTree,
    label_map: &'a dyn Fn(&Label) -> Label,
) -> Result<DecisionTree, SimError> {
    let run = PdtRun::new(t, label_map)?;
    let n_blocks = run.vars.n_blocks;
    let mut nodes = Vec::new();
    let mut finished = Vec::new();
    grow_tree(run, &mut nodes, &mut finished)?;
    let tree = DecisionTree { n_vars: n_blocks, nodes };
    assert!(tree.height() <= t.height(), "lifted simulation increased height");
    assert!(tree.leaves() <= t.leaves(), "lifted simulation increased leaf count");
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtree::TruthTable;
    use crate::proofcnf::{lift_cnf, lift_dt_to_pdt, pdt_solves_search, Cnf, Verdict};
    use crate::protocol::{canonical_protocol, ProtocolKind};

    fn dt_for(f: &TruthTable) -> DecisionTree {
        // Trivial full tree querying variables in order.
        fn build(f: &TruthTable, fixed: &mut Vec<bool>, nodes: &mut Vec<DtNode>) -> usize {
            let var = fixed.len();
            if var == f.n {
                let id = nodes.len();
                nodes.push(DtNode::Leaf(Label::Bit(f.eval(fixed))));
                return id;
            }
            let id = nodes.len();
            nodes.push(DtNode::Query { var, children: [0, 0] });
            fixed.push(false);
            let c0 = build(f, fixed, nodes);
            fixed.pop();
            fixed.push(true);
            let c1 = build(f, fixed, nodes);
            fixed.pop();
            if let DtNode::Query { children, .. } = &mut nodes[id] {
                *children = [c0, c1];
            }
            id
        }
        let mut nodes = Vec::new();
        build(f, &mut Vec::new(), &mut nodes);
        DecisionTree { n_vars: f.n, nodes }
    }

    #[test]
    fn simulate_z1_both_values() {
        let f = TruthTable::from_fn(1, |z| z[0]);
        let proto = canonical_protocol(&dt_for(&f), 4).unwrap();
        for z in [false, true] {
            let out = simulate(&proto, &[z], AlicePolicy::Majority, false).unwrap();
            assert_eq!(out.label, Label::Bit(z));
            assert_eq!(out.queried, vec![0]);
            // All three protocol edges are traversed.
            assert_eq!(out.a_bits + out.b_bits, 3);
            // Query bound: |I| * l / 2 <= A + B.
            assert!(out.queried.len() * 2 <= 2 * (out.a_bits + out.b_bits));
        }
    }

    #[test]
    fn simulate_single_leaf() {
        let proto = ProtocolTree::leaf(2, 4, ProtocolKind::ParityParity, Label::Bit(false));
        let out = simulate(&proto, &[true, false], AlicePolicy::Majority, false).unwrap();
        assert_eq!(out.label, Label::Bit(false));
        assert!(out.queried.is_empty());
    }

    #[test]
    fn extracted_tree_agrees_with_base_function() {
        for (n, f) in [
            (2, TruthTable::from_fn(2, |z| z[0] && z[1])),
            (2, TruthTable::from_fn(2, |z| z[0] ^ z[1])),
            (3, TruthTable::from_fn(3, |z| z[0] ^ z[1] ^ z[2])),
        ] {
            let proto = canonical_protocol(&dt_for(&f), 4).unwrap();
            for policy in [AlicePolicy::Majority, AlicePolicy::SmallerSubtree] {
                let (tree, outs) = extract_decision_tree(&proto, policy, false).unwrap();
                for w in 0..1u32 << n {
                    let z: Vec<bool> = (0..n).map(|i| w >> i & 1 == 1).collect();
                    assert_eq!(tree.eval(&z), &Label::Bit(f.eval(&z)));
                }
                assert!(tree.height() <= n);
                assert!(tree.leaves() <= proto.leaves());
                for out in &outs {
                    assert!(out.queried.len() * 2 <= 2 * (out.a_bits + out.b_bits));
                }
            }
        }
    }

    #[test]
    fn trace_potentials_hold_from_scratch() {
        let f = TruthTable::from_fn(2, |z| z[0] && z[1]);
        let proto = canonical_protocol(&dt_for(&f), 4).unwrap();
        let out = simulate(&proto, &[true, true], AlicePolicy::Majority, false).unwrap();
        for rec in &out.trace.records {
            assert!(potential_holds(
                rec.x.len(),
                proto.n_blocks,
                rec.fixed.len(),
                2,
                rec.a_bits + rec.b_bits
            ));
        }
        assert!(!out.trace.tsv(2).is_empty());
    }

    #[test]
    fn small_m_rejected() {
        let proto = ProtocolTree::leaf(1, 2, ProtocolKind::ParityParity, Label::Bit(false));
        assert_eq!(
            simulate(&proto, &[false], AlicePolicy::Majority, false).unwrap_err(),
            SimError::SmallM(2)
        );
    }

    #[test]
    fn pdt_simulate_functions() {
        let identity = |l: &Label| l.clone();
        for (n, f) in [
            (2, TruthTable::from_fn(2, |z| z[0] && z[1])),
            (2, TruthTable::from_fn(2, |z| z[0] ^ z[1])),
            (3, TruthTable::from_fn(3, |z| z[0] ^ z[1] ^ z[2])),
        ] {
            let t = lift_dt_to_pdt(&dt_for(&f), 4, None).unwrap();
            let tree = pdt_simulate(&t, &identity).unwrap();
            for w in 0..1u32 << n {
                let z: Vec<bool> = (0..n).map(|i| w >> i & 1 == 1).collect();
                assert_eq!(tree.eval(&z), &Label::Bit(f.eval(&z)), "w={w}");
            }
        }
    }

    #[test]
    fn pdt_simulate_single_leaf() {
        let identity = |l: &Label| l.clone();
        let t = ParityDecisionTree::leaf(
            PdtVars::Lifted(LiftedVars::new(2, 4)),
            Label::Bit(true),
        );
        let tree = pdt_simulate(&t, &identity).unwrap();
        assert_eq!(tree.nodes, vec![DtNode::Leaf(Label::Bit(true))]);
    }

    #[test]
    fn pdt_simulate_search_contradiction() {
        let base = Cnf::new(1, vec![vec![1], vec![-1]]).unwrap();
        let l = lift_cnf(&base, 4).unwrap();
        let dt = DecisionTree {
            n_vars: 1,
            nodes: vec![
                DtNode::Query { var: 0, children: [1, 2] },
                DtNode::Leaf(Label::Clause(0)),
                DtNode::Leaf(Label::Clause(1)),
            ],
        };
        let t = lift_dt_to_pdt(&dt, 4, Some(&l)).unwrap();
        let map = {
            let clause_map = l.clause_map.clone();
            move |lab: &Label| match lab {
                Label::Clause(c) => Label::Clause(clause_map[*c]),
                other => other.clone(),
            }
        };
        let tree = pdt_simulate(&t, &map).unwrap();
        assert!(tree.height() <= 1);
        for z in [false, true] {
            match tree.eval(&[z]) {
                Label::Clause(c) => assert!(base.clause_falsified(*c, &[z])),
                other => panic!("non-clause label {other}"),
            }
        }
        // The lifted tree itself solves the lifted search problem.
        assert_eq!(pdt_solves_search(&t, &l.lifted, false).unwrap(), Verdict::Accept);
    }
}
