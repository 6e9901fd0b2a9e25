//! CNF handling, Index-gadget lifting of CNFs, and a semantic tree-Res(+)
//! verifier.
//!
//! Proof lines are affine subspaces of falsifying assignments: an axiom line
//! is the sub-cube falsifying a clause, an inference C from parents A and B is
//! legal iff C is contained in A union B, and a refutation ends in the full
//! space (the empty clause, falsified by everything). The containment test is
//! algebraic, never pointwise.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dtree::{DecisionTree, DtNode, Label, LiftedVars, ParityDecisionTree, PdtNode, PdtVars};
use crate::f2_linalg::{AffineSystem, Coord, CoordSpace, F2Error, ParityEq, SpanResult};

/// Cap on the number of clauses a lifting may produce.
pub const LIFT_GUARD: u64 = 10_000_000;
/// Largest assignment space the exhaustive search-verdict scan will cover.
pub const SEARCH_GUARD_VARS: usize = 22;
/// Largest subspace the witness enumerator will walk when building a reject
/// witness.
pub const WITNESS_GUARD: usize = 1 << 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProofCnfError {
    #[error("bad DIMACS input: {0}")]
    BadDimacs(String),
    #[error("a CNF must have at least one clause")]
    EmptyCnf,
    #[error("empty clauses are not representable")]
    EmptyClause,
    #[error("literal {0} out of range")]
    VarRange(i64),
    #[error("lifting would produce {0} clauses, above the cap of {LIFT_GUARD}")]
    WidthOverflow(u64),
    #[error("malformed proof: {0}")]
    MalformedProof(String),
    #[error("source object invalid: {0}")]
    SourceInvalid(String),
    #[error("scan over {0} variables exceeds the guard of {SEARCH_GUARD_VARS}; pass force to override")]
    GuardExceeded(usize),
}

/// A CNF over `n_vars` variables. Literals are signed 1-based ids as in
/// DIMACS; clauses are sorted by variable and duplicate-free.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cnf {
    pub n_vars: usize,
    pub clauses: Vec<Vec<i32>>,
}

impl Cnf {
    pub fn new(n_vars: usize, clauses: Vec<Vec<i32>>) -> Result<Self, ProofCnfError> {
        if clauses.is_empty() {
            return Err(ProofCnfError::EmptyCnf);
        }
        let mut canon = Vec::with_capacity(clauses.len());
        for clause in clauses {
            if clause.is_empty() {
                return Err(ProofCnfError::EmptyClause);
            }
            let mut c = clause;
            for &lit in &c {
                let v = lit.unsigned_abs() as usize;
                if lit == 0 || v > n_vars {
                    return Err(ProofCnfError::VarRange(lit as i64));
                }
            }
            c.sort_by_key(|l| (l.abs(), *l));
            c.dedup();
            canon.push(c);
        }
        Ok(Cnf { n_vars, clauses: canon })
    }

    pub fn clause_falsified(&self, clause: usize, z: &[bool]) -> bool {
        self.clauses[clause]
            .iter()
            .all(|&lit| z[lit.unsigned_abs() as usize - 1] == (lit < 0))
    }

    /// 0-based ids of all clauses falsified by `z`.
    pub fn falsified_clauses(&self, z: &[bool]) -> Vec<usize> {
        (0..self.clauses.len()).filter(|&c| self.clause_falsified(c, z)).collect()
    }

    /// Exhaustive unsatisfiability check.
    pub fn is_unsatisfiable(&self, force: bool) -> Result<bool, ProofCnfError> {
        if self.n_vars > SEARCH_GUARD_VARS && !force {
            return Err(ProofCnfError::GuardExceeded(self.n_vars));
        }
        for w in 0..1u64 << self.n_vars {
            let z: Vec<bool> = (0..self.n_vars).map(|i| w >> i & 1 == 1).collect();
            if self.falsified_clauses(&z).is_empty() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn parse_dimacs(text: &str) -> Result<Self, ProofCnfError> {
        let mut n_vars = None;
        let mut expected_clauses = 0usize;
        let mut clauses = Vec::new();
        let mut current: Vec<i32> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('c') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("p cnf") {
                let mut it = rest.split_whitespace();
                n_vars = it.next().and_then(|s| s.parse().ok());
                expected_clauses = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| ProofCnfError::BadDimacs(format!("bad header `{line}`")))?;
                if n_vars.is_none() {
                    return Err(ProofCnfError::BadDimacs(format!("bad header `{line}`")));
                }
                continue;
            }
            if n_vars.is_none() {
                return Err(ProofCnfError::BadDimacs("clause before header".into()));
            }
            for tok in line.split_whitespace() {
                let lit: i32 = tok
                    .parse()
                    .map_err(|_| ProofCnfError::BadDimacs(format!("bad literal `{tok}`")))?;
                if lit == 0 {
                    clauses.push(std::mem::take(&mut current));
                } else {
                    current.push(lit);
                }
            }
        }
        if !current.is_empty() {
            return Err(ProofCnfError::BadDimacs("unterminated clause".into()));
        }
        let n_vars = n_vars.ok_or_else(|| ProofCnfError::BadDimacs("missing header".into()))?;
        if clauses.len() != expected_clauses {
            return Err(ProofCnfError::BadDimacs(format!(
                "header promises {expected_clauses} clauses, found {}",
                clauses.len()
            )));
        }
        Cnf::new(n_vars, clauses)
    }

    pub fn emit_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.n_vars, self.clauses.len());
        for clause in &self.clauses {
            for lit in clause {
                out.push_str(&format!("{lit} "));
            }
            out.push_str("0\n");
        }
        out
    }
}

/// A base CNF composed with `IND_m` blockwise: each width-`k` clause becomes
/// `m^k` clauses of width `(l+1)k` over the block-contiguous variables
/// `x_{i,0..l-1}, y_{i,0..m-1}` per block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiftedCnf {
    pub base: Cnf,
    pub lifted: Cnf,
    pub vars: LiftedVars,
    /// Lifted clause id -> base clause id.
    pub clause_map: Vec<usize>,
    /// First lifted clause id of each base clause.
    pub clause_start: Vec<usize>,
    /// Lifted clause id -> the pointer tuple (one `j` per base literal, in the
    /// base clause's stored literal order).
    pub tuples: Vec<Vec<u16>>,
}

pub fn lift_cnf(base: &Cnf, m: usize) -> Result<LiftedCnf, ProofCnfError> {
    if !m.is_power_of_two() || m < 2 {
        return Err(ProofCnfError::SourceInvalid(format!(
            "alphabet {m} is not a power of two at least 2"
        )));
    }
    let vars = LiftedVars::new(base.n_vars, m);
    let total: u64 = base
        .clauses
        .iter()
        .map(|c| (m as u64).saturating_pow(c.len() as u32))
        .fold(0u64, u64::saturating_add);
    if total > LIFT_GUARD {
        return Err(ProofCnfError::WidthOverflow(total));
    }
    let mut clauses = Vec::with_capacity(total as usize);
    let mut clause_map = Vec::with_capacity(total as usize);
    let mut clause_start = Vec::with_capacity(base.clauses.len());
    let mut tuples = Vec::with_capacity(total as usize);
    for (cid, clause) in base.clauses.iter().enumerate() {
        clause_start.push(clauses.len());
        let k = clause.len();
        // Tuple index: the first literal's pointer is the most significant
        // digit, so lifted ids within a base clause are ordered by the tuple.
        for idx in 0..(m as u64).pow(k as u32) {
            let mut tuple = vec![0u16; k];
            let mut rem = idx;
            for t in (0..k).rev() {
                tuple[t] = (rem % m as u64) as u16;
                rem /= m as u64;
            }
            let mut lifted_clause = Vec::with_capacity((vars.ell + 1) * k);
            for (t, &lit) in clause.iter().enumerate() {
                let block = lit.unsigned_abs() as usize - 1;
                let j = tuple[t] as usize;
                // The clause is falsified only when x_block encodes j: the
                // x-literal on bit j' is positive iff bit j' of j is 0.
                for jp in 0..vars.ell {
                    let var = (vars.x_var(block, jp) + 1) as i32;
                    lifted_clause.push(if j >> jp & 1 == 1 { -var } else { var });
                }
                let yvar = (vars.y_var(block, j) + 1) as i32;
                lifted_clause.push(if lit > 0 { yvar } else { -yvar });
            }
            clauses.push(lifted_clause);
            clause_map.push(cid);
            tuples.push(tuple);
        }
    }
    Ok(LiftedCnf {
        base: base.clone(),
        lifted: Cnf::new(vars.count(), clauses)?,
        vars,
        clause_map,
        clause_start,
        tuples,
    })
}

impl LiftedCnf {
    /// The variable-numbering sidecar (`x i j' -> dimacs-var` lines).
    pub fn map_file(&self) -> String {
        let mut out = String::new();
        for i in 0..self.vars.n_blocks {
            for jp in 0..self.vars.ell {
                out.push_str(&format!("x {} {} -> {}\n", i + 1, jp, self.vars.x_var(i, jp) + 1));
            }
            for j in 0..self.vars.m {
                out.push_str(&format!("y {} {} -> {}\n", i + 1, j, self.vars.y_var(i, j) + 1));
            }
        }
        out
    }

    /// The lifted clause id for base clause `cid` under the given pointer per
    /// base literal (in stored literal order).
    pub fn lifted_clause_id(&self, cid: usize, tuple: &[u16]) -> usize {
        let m = self.vars.m as u64;
        let idx = tuple.iter().fold(0u64, |acc, &j| acc * m + j as u64);
        self.clause_start[cid] + idx as usize
    }
}

/// A disjunction of affine literals, stored as the affine subspace of
/// assignments falsifying it. A contradictory literal set (a tautological
/// clause) falsifies nothing and is rejected by the proof checker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityClause {
    pub n_vars: usize,
    /// Defining system of the falsifying subspace: one equation
    /// `xor(support) = b xor 1` per literal `xor(support) = b`.
    pub system: AffineSystem,
    pub tautology: bool,
}

impl ParityClause {
    /// Build from clause literals `(support, b)`. Redundant literals merge;
    /// complementary literals mark the clause tautological.
    pub fn from_literals(n_vars: usize, literals: &[(Vec<usize>, bool)]) -> Self {
        let space = CoordSpace::vars(n_vars);
        let mut system = AffineSystem::new(space);
        let mut tautology = false;
        for (support, b) in literals {
            let eq = ParityEq::new(support.iter().map(|&v| Coord::var(v)), !b);
            match system.row_reduce(&eq) {
                Ok((s, _)) => system = s,
                Err(F2Error::SpanViolation) => {}
                Err(_) => tautology = true,
            }
        }
        ParityClause { n_vars, system, tautology }
    }

    pub fn full_space(n_vars: usize) -> Self {
        ParityClause {
            n_vars,
            system: AffineSystem::new(CoordSpace::vars(n_vars)),
            tautology: false,
        }
    }

    /// The clause literals in canonical (row-reduced) form.
    pub fn literals(&self) -> Vec<(Vec<usize>, bool)> {
        self.system
            .equations()
            .iter()
            .map(|eq| (eq.support.iter().map(|c| c.block).collect(), !eq.rhs))
            .collect()
    }
}

/// The sub-cube of assignments falsifying clause `cid`: every literal pinned
/// to its falsifying value.
pub fn clause_subcube(cnf: &Cnf, cid: usize) -> AffineSystem {
    let space = CoordSpace::vars(cnf.n_vars);
    let mut sys = AffineSystem::new(space);
    for &lit in &cnf.clauses[cid] {
        let v = lit.unsigned_abs() as usize - 1;
        let eq = ParityEq::single(Coord::var(v), lit < 0);
        sys = sys.row_reduce(&eq).expect("clause literals are independent").0;
    }
    sys
}

fn subspace_subset(sub: &AffineSystem, sup: &AffineSystem) -> bool {
    sup.equations().iter().all(|eq| {
        sub.in_span(&eq.support) == SpanResult::ForcedValue(eq.rhs)
    })
}

fn subspace_eq(a: &AffineSystem, b: &AffineSystem) -> bool {
    a.codim() == b.codim() && subspace_subset(a, b)
}

/// New equations of `a` relative to `c`: `Ok(list)` of reduced equations, or
/// `Err(())` if the intersection is empty.
fn new_equations_relative(
    c: &AffineSystem,
    a: &AffineSystem,
) -> Result<Vec<ParityEq>, ()> {
    let mut sys = c.clone();
    let mut new = Vec::new();
    for eq in a.equations() {
        match sys.row_reduce(&eq) {
            Ok((s, _)) => {
                new.push(s.equations().last().unwrap().clone());
                sys = s;
            }
            Err(F2Error::SpanViolation) => {}
            Err(_) => return Err(()),
        }
    }
    Ok(new)
}

/// Exact decision of the Res(+) inference side condition: is `c` contained in
/// the union of `a` and `b`?
pub fn containment_c_sub_aub(c: &AffineSystem, a: &AffineSystem, b: &AffineSystem) -> bool {
    if subspace_subset(c, a) || subspace_subset(c, b) {
        return true;
    }
    // Remaining legal case: a cuts c in a hyperplane and b covers the
    // complementary coset.
    let new = match new_equations_relative(c, a) {
        Ok(new) => new,
        Err(()) => return false,
    };
    if new.len() != 1 {
        return false;
    }
    let h = &new[0];
    let flipped = ParityEq { support: h.support.clone(), rhs: !h.rhs };
    match c.row_reduce(&flipped) {
        Ok((coset, _)) => subspace_subset(&coset, b),
        Err(_) => false,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LineSource {
    /// 0-based base/lifted clause id.
    Axiom(usize),
    /// 0-based parent line ids.
    Infer(usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofLine {
    pub source: LineSource,
    pub clause: ParityClause,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResPlusProof {
    pub n_vars: usize,
    pub lines: Vec<ProofLine>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Accept,
    Reject {
        /// 0-based failing line, when the failure is tied to one.
        line: Option<usize>,
        reason: String,
        witness: Option<Vec<bool>>,
    },
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

/// An assignment in `a` but not in `b1` (nor `b2`, if given). `None` when the
/// subspace is too large to walk or no such point exists.
fn point_in_a_not_b(
    a: &AffineSystem,
    b1: &AffineSystem,
    b2: Option<&AffineSystem>,
    n_vars: usize,
) -> Option<Vec<bool>> {
    let free: Vec<usize> = (0..n_vars)
        .filter(|&v| !a.is_dependent(Coord::var(v)))
        .collect();
    if free.len() >= WITNESS_GUARD.trailing_zeros() as usize {
        return None;
    }
    for w in 0..1u64 << free.len() {
        let assignment: BTreeMap<Coord, bool> = free
            .iter()
            .enumerate()
            .map(|(k, &v)| (Coord::var(v), w >> k & 1 == 1))
            .collect();
        let deps = a.unique_extension(&assignment).ok()?;
        let mut z = vec![false; n_vars];
        for (c, b) in assignment.iter().chain(deps.iter()) {
            z[c.block] = *b;
        }
        let inside =
            |s: &AffineSystem| s.satisfied_by(&z);
        if !inside(b1) && b2.is_none_or(|s| !inside(s)) {
            return Some(z);
        }
    }
    None
}

/// Verify a tree-Res(+) refutation of `cnf`. `tree` additionally enforces
/// that no line is used as a parent twice.
pub fn check_resplus(cnf: &Cnf, proof: &ResPlusProof, tree: bool) -> Result<Verdict, ProofCnfError> {
    if proof.n_vars != cnf.n_vars {
        return Err(ProofCnfError::MalformedProof(format!(
            "proof is over {} variables, CNF over {}",
            proof.n_vars, cnf.n_vars
        )));
    }
    if proof.lines.is_empty() {
        return Err(ProofCnfError::MalformedProof("empty proof".into()));
    }
    let mut used = vec![0usize; proof.lines.len()];
    for (idx, line) in proof.lines.iter().enumerate() {
        if line.clause.tautology {
            return Ok(Verdict::Reject {
                line: Some(idx),
                reason: "tautological line (empty falsifying subspace)".into(),
                witness: None,
            });
        }
        match line.source {
            LineSource::Axiom(cid) => {
                if cid >= cnf.clauses.len() {
                    return Err(ProofCnfError::MalformedProof(format!(
                        "line {} names clause {} of {}",
                        idx + 1,
                        cid + 1,
                        cnf.clauses.len()
                    )));
                }
                let cube = clause_subcube(cnf, cid);
                if !subspace_eq(&line.clause.system, &cube) {
                    let witness = point_in_a_not_b(&line.clause.system, &cube, None, cnf.n_vars)
                        .or_else(|| point_in_a_not_b(&cube, &line.clause.system, None, cnf.n_vars));
                    return Ok(Verdict::Reject {
                        line: Some(idx),
                        reason: format!("axiom line differs from the sub-cube of clause {}", cid + 1),
                        witness,
                    });
                }
            }
            LineSource::Infer(p1, p2) => {
                if p1 >= idx || p2 >= idx {
                    return Err(ProofCnfError::MalformedProof(format!(
                        "line {} references a later or same line",
                        idx + 1
                    )));
                }
                used[p1] += 1;
                used[p2] += 1;
                let a = &proof.lines[p1].clause.system;
                let b = &proof.lines[p2].clause.system;
                if !containment_c_sub_aub(&line.clause.system, a, b) {
                    let witness = point_in_a_not_b(&line.clause.system, a, Some(b), cnf.n_vars);
                    return Ok(Verdict::Reject {
                        line: Some(idx),
                        reason: "inference is not contained in the union of its parents".into(),
                        witness,
                    });
                }
            }
        }
    }
    if tree {
        if let Some(p) = used.iter().position(|&u| u > 1) {
            return Ok(Verdict::Reject {
                line: Some(p),
                reason: "line used as a parent more than once in a tree-like proof".into(),
                witness: None,
            });
        }
    }
    let last = proof.lines.last().unwrap();
    if last.clause.system.codim() != 0 {
        return Ok(Verdict::Reject {
            line: Some(proof.lines.len() - 1),
            reason: "final line is not the full space".into(),
            witness: None,
        });
    }
    Ok(Verdict::Accept)
}

/// Does the PDT name a falsified clause on every assignment? Exhaustive.
pub fn pdt_solves_search(
    t: &ParityDecisionTree,
    cnf: &Cnf,
    force: bool,
) -> Result<Verdict, ProofCnfError> {
    let n = t.vars.count();
    if n != cnf.n_vars {
        return Err(ProofCnfError::MalformedProof(format!(
            "tree over {n} variables, CNF over {}",
            cnf.n_vars
        )));
    }
    if n > SEARCH_GUARD_VARS && !force {
        return Err(ProofCnfError::GuardExceeded(n));
    }
    for w in 0..1u64 << n {
        let z: Vec<bool> = (0..n).map(|i| w >> i & 1 == 1).collect();
        let ok = match t.eval(&z) {
            Label::Clause(c) => *c < cnf.clauses.len() && cnf.clause_falsified(*c, &z),
            _ => false,
        };
        if !ok {
            return Ok(Verdict::Reject {
                line: None,
                reason: "leaf label is not a clause falsified by the assignment".into(),
                witness: Some(z),
            });
        }
    }
    Ok(Verdict::Accept)
}

/// Convert a search PDT into a tree-Res(+) refutation: leaves become axiom
/// lines (clause sub-cubes), internal nodes become inference lines carrying
/// the path subspace; lines are emitted post-order so the root (full space)
/// comes last and line count equals node count.
pub fn pdt_to_resplus(
    t: &ParityDecisionTree,
    cnf: &Cnf,
) -> Result<ResPlusProof, ProofCnfError> {
    let n = t.vars.count();
    if n != cnf.n_vars {
        return Err(ProofCnfError::SourceInvalid(format!(
            "tree over {n} variables, CNF over {}",
            cnf.n_vars
        )));
    }
    let mut lines = Vec::new();
    let root_system = AffineSystem::new(CoordSpace::vars(n));
    walk_to_proof(t, 0, root_system, cnf, &mut lines)?;
    Ok(ResPlusProof { n_vars: n, lines })
}

fn walk_to_proof(
    t: &ParityDecisionTree,
    at: usize,
    path: AffineSystem,
    cnf: &Cnf,
    lines: &mut Vec<ProofLine>,
) -> Result<usize, ProofCnfError> {
    match &t.nodes[at] {
        PdtNode::Leaf(Label::Clause(c)) => {
            if *c >= cnf.clauses.len() {
                return Err(ProofCnfError::SourceInvalid(format!(
                    "leaf names clause {} of {}",
                    c + 1,
                    cnf.clauses.len()
                )));
            }
            lines.push(ProofLine {
                source: LineSource::Axiom(*c),
                clause: ParityClause {
                    n_vars: cnf.n_vars,
                    system: clause_subcube(cnf, *c),
                    tautology: false,
                },
            });
            Ok(lines.len() - 1)
        }
        PdtNode::Leaf(_) => Err(ProofCnfError::SourceInvalid(
            "search tree has a non-clause leaf".into(),
        )),
        PdtNode::Query { support, children } => {
            let eq0 = ParityEq::new(support.iter().map(|&v| Coord::var(v)), false);
            let eq1 = ParityEq { support: eq0.support.clone(), rhs: true };
            let side = |eq: &ParityEq| {
                path.row_reduce(eq).map(|(s, _)| s).map_err(|_| {
                    ProofCnfError::SourceInvalid("redundant parity query on a path".into())
                })
            };
            let sys0 = side(&eq0)?;
            let sys1 = side(&eq1)?;
            let p0 = walk_to_proof(t, children[0], sys0, cnf, lines)?;
            let p1 = walk_to_proof(t, children[1], sys1, cnf, lines)?;
            lines.push(ProofLine {
                source: LineSource::Infer(p0, p1),
                clause: ParityClause { n_vars: cnf.n_vars, system: path, tautology: false },
            });
            Ok(lines.len() - 1)
        }
    }
}

/// Invert `pdt_to_resplus`: rebuild a search PDT from an accepted tree-like
/// proof. Each inference must cut its first parent out as a hyperplane of the
/// line (which `pdt_to_resplus` output always satisfies).
pub fn resplus_to_pdt(
    proof: &ResPlusProof,
    vars: PdtVars,
) -> Result<ParityDecisionTree, ProofCnfError> {
    if vars.count() != proof.n_vars {
        return Err(ProofCnfError::SourceInvalid(format!(
            "variable layout covers {} variables, proof has {}",
            vars.count(),
            proof.n_vars
        )));
    }
    if proof.lines.is_empty() {
        return Err(ProofCnfError::MalformedProof("empty proof".into()));
    }
    let mut tree = ParityDecisionTree { vars, nodes: Vec::new() };
    build_pdt(proof, proof.lines.len() - 1, &mut tree)?;
    Ok(tree)
}

fn build_pdt(
    proof: &ResPlusProof,
    line: usize,
    tree: &mut ParityDecisionTree,
) -> Result<usize, ProofCnfError> {
    match proof.lines[line].source {
        LineSource::Axiom(cid) => {
            let id = tree.nodes.len();
            tree.nodes.push(PdtNode::Leaf(Label::Clause(cid)));
            Ok(id)
        }
        LineSource::Infer(p0, p1) => {
            let c = &proof.lines[line].clause.system;
            // A parent of a valid inference either contains the whole line
            // (its branch is the line itself) or cuts it in a hyperplane:
            // every parent equation lies in the span of the line's equations
            // plus at most one more parity.
            for (own, other) in [(p0, p1), (p1, p0)] {
                let parent = &proof.lines[own].clause.system;
                match new_equations_relative(c, parent) {
                    Err(()) => continue, // Disjoint from the line; the other parent decides.
                    Ok(new) if new.is_empty() => return build_pdt(proof, own, tree),
                    Ok(new) if new.len() == 1 => {
                        let h = new.into_iter().next().unwrap();
                        let support: Vec<usize> = h.support.iter().map(|c| c.block).collect();
                        let id = tree.nodes.len();
                        tree.nodes.push(PdtNode::Query { support, children: [0, 0] });
                        // This parent holds where the parity equals h's value.
                        let own_side = build_pdt(proof, own, tree)?;
                        let other_side = build_pdt(proof, other, tree)?;
                        let children =
                            if h.rhs { [other_side, own_side] } else { [own_side, other_side] };
                        if let PdtNode::Query { children: slot, .. } = &mut tree.nodes[id] {
                            *slot = children;
                        }
                        return Ok(id);
                    }
                    Ok(_) => continue,
                }
            }
            Err(ProofCnfError::SourceInvalid(format!(
                "line {}: neither parent cuts the line in a hyperplane",
                line + 1
            )))
        }
    }
}

// ---------------------------------------------------------------------------
// Proof file format
// ---------------------------------------------------------------------------

impl ResPlusProof {
    /// Line-oriented text: `RESPLUS <n>` header, then one
    /// `L <id> AXIOM <cid> ; [v.. = b]*` or `L <id> INFER <i1> <i2> ; ...`
    /// per line, ids 1-based sequential.
    pub fn emit(&self) -> String {
        let mut out = format!("RESPLUS {}\n", self.n_vars);
        for (idx, line) in self.lines.iter().enumerate() {
            out.push_str(&format!("L {} ", idx + 1));
            match line.source {
                LineSource::Axiom(cid) => out.push_str(&format!("AXIOM {}", cid + 1)),
                LineSource::Infer(a, b) => out.push_str(&format!("INFER {} {}", a + 1, b + 1)),
            }
            out.push_str(" ;");
            for (support, b) in line.clause.literals() {
                out.push_str(" [");
                for (k, v) in support.iter().enumerate() {
                    if k > 0 {
                        out.push(' ');
                    }
                    out.push_str(&format!("v{}", v + 1));
                }
                out.push_str(&format!(" = {}]", b as u8));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ProofCnfError> {
        let mut lines_it = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines_it
            .next()
            .ok_or_else(|| ProofCnfError::MalformedProof("empty file".into()))?;
        let n_vars: usize = header
            .strip_prefix("RESPLUS ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| ProofCnfError::MalformedProof(format!("bad header `{header}`")))?;
        let mut lines = Vec::new();
        for line in lines_it {
            let bad = |what: &str| ProofCnfError::MalformedProof(format!("{what} in `{line}`"));
            let (head, lits) = line
                .split_once(';')
                .ok_or_else(|| bad("missing `;`"))?;
            let mut it = head.split_whitespace();
            if it.next() != Some("L") {
                return Err(bad("missing `L` tag"));
            }
            let id: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad id"))?;
            if id != lines.len() + 1 {
                return Err(bad("line id out of sequence"));
            }
            let source = match it.next() {
                Some("AXIOM") => {
                    let cid: usize =
                        it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad clause id"))?;
                    if cid == 0 {
                        return Err(bad("clause ids are 1-based"));
                    }
                    LineSource::Axiom(cid - 1)
                }
                Some("INFER") => {
                    let a: usize =
                        it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad parent id"))?;
                    let b: usize =
                        it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad parent id"))?;
                    if a == 0 || b == 0 {
                        return Err(bad("parent ids are 1-based"));
                    }
                    LineSource::Infer(a - 1, b - 1)
                }
                _ => return Err(bad("unknown line source")),
            };
            let literals = parse_literals(lits, n_vars)
                .map_err(|what| bad(&what))?;
            lines.push(ProofLine {
                source,
                clause: ParityClause::from_literals(n_vars, &literals),
            });
        }
        if lines.is_empty() {
            return Err(ProofCnfError::MalformedProof("no proof lines".into()));
        }
        Ok(ResPlusProof { n_vars, lines })
    }
}

fn parse_literals(text: &str, n_vars: usize) -> Result<Vec<(Vec<usize>, bool)>, String> {
    let mut out = Vec::new();
    for chunk in text.split(']') {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        let body = chunk.strip_prefix('[').ok_or("literal missing `[`")?;
        let (vars_part, b_part) = body.split_once('=').ok_or("literal missing `=`")?;
        let b = match b_part.trim() {
            "0" => false,
            "1" => true,
            other => return Err(format!("bad literal value `{other}`")),
        };
        let mut support = Vec::new();
        for tok in vars_part.split_whitespace() {
            let v: usize = tok
                .strip_prefix('v')
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| format!("bad variable token `{tok}`"))?;
            if v == 0 || v > n_vars {
                return Err(format!("variable v{v} out of range"));
            }
            support.push(v - 1);
        }
        if support.is_empty() {
            return Err("empty literal support".into());
        }
        out.push((support, b));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Canonical lifted expansion of a base decision tree
// ---------------------------------------------------------------------------

/// Expand a base decision tree into a PDT over the lifted variables: each
/// query of `z_i` becomes the `l` x-bit queries of block `i` (high to low)
/// followed by the pointed y-coordinate. With a lifting handle, clause leaf
/// labels are mapped to the lifted clause selected by the pointers chosen on
/// the path; without one, labels pass through unchanged.
pub fn lift_dt_to_pdt(
    dt: &DecisionTree,
    m: usize,
    lifted: Option<&LiftedCnf>,
) -> Result<ParityDecisionTree, ProofCnfError> {
    if !m.is_power_of_two() || m < 2 {
        return Err(ProofCnfError::SourceInvalid(format!(
            "alphabet {m} is not a power of two at least 2"
        )));
    }
    let vars = LiftedVars::new(dt.n_vars, m);
    let mut tree = ParityDecisionTree { vars: PdtVars::Lifted(vars), nodes: Vec::new() };
    let mut pointers = vec![None; dt.n_vars];
    expand_lifted(dt, 0, vars, lifted, &mut pointers, &mut tree)?;
    Ok(tree)
}

fn expand_lifted(
    dt: &DecisionTree,
    at: usize,
    vars: LiftedVars,
    lifted: Option<&LiftedCnf>,
    pointers: &mut Vec<Option<u16>>,
    tree: &mut ParityDecisionTree,
) -> Result<usize, ProofCnfError> {
    match &dt.nodes[at] {
        DtNode::Leaf(label) => {
            let label = match (label, lifted) {
                (Label::Clause(c), Some(l)) => {
                    let tuple: Vec<u16> = l.base.clauses[*c]
                        .iter()
                        .map(|&lit| {
                            pointers[lit.unsigned_abs() as usize - 1].ok_or_else(|| {
                                ProofCnfError::SourceInvalid(format!(
                                    "leaf names clause {} but variable {} was not queried",
                                    c + 1,
                                    lit.abs()
                                ))
                            })
                        })
                        .collect::<Result<_, _>>()?;
                    Label::Clause(l.lifted_clause_id(*c, &tuple))
                }
                _ => label.clone(),
            };
            let id = tree.nodes.len();
            tree.nodes.push(PdtNode::Leaf(label));
            Ok(id)
        }
        DtNode::Query { var, children } => {
            expand_lifted_bits(dt, *var, *children, 1, vars, lifted, pointers, tree)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn expand_lifted_bits(
    dt: &DecisionTree,
    var: usize,
    dt_children: [usize; 2],
    path: usize,
    vars: LiftedVars,
    lifted: Option<&LiftedCnf>,
    pointers: &mut Vec<Option<u16>>,
    tree: &mut ParityDecisionTree,
) -> Result<usize, ProofCnfError> {
    // `path` carries a marker bit followed by the x-bits chosen so far
    // (high to low).
    let depth = usize::BITS as usize - 1 - path.leading_zeros() as usize;
    if depth == vars.ell {
        let j = path & (vars.m - 1);
        let id = tree.nodes.len();
        tree.nodes.push(PdtNode::Query {
            support: vec![vars.y_var(var, j)],
            children: [0, 0],
        });
        pointers[var] = Some(j as u16);
        let c0 = expand_lifted(dt, dt_children[0], vars, lifted, pointers, tree)?;
        let c1 = expand_lifted(dt, dt_children[1], vars, lifted, pointers, tree)?;
        pointers[var] = None;
        if let PdtNode::Query { children, .. } = &mut tree.nodes[id] {
            *children = [c0, c1];
        }
        return Ok(id);
    }
    let bit = vars.ell - 1 - depth;
    let id = tree.nodes.len();
    tree.nodes.push(PdtNode::Query {
        support: vec![vars.x_var(var, bit)],
        children: [0, 0],
    });
    let c0 = expand_lifted_bits(dt, var, dt_children, path << 1, vars, lifted, pointers, tree)?;
    let c1 =
        expand_lifted_bits(dt, var, dt_children, path << 1 | 1, vars, lifted, pointers, tree)?;
    if let PdtNode::Query { children, .. } = &mut tree.nodes[id] {
        *children = [c0, c1];
    }
    Ok(id)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;

    fn contradiction() -> Cnf {
        Cnf::new(1, vec![vec![1], vec![-1]]).unwrap()
    }

    fn pdt_contradiction() -> ParityDecisionTree {
        ParityDecisionTree {
            vars: PdtVars::Plain { n: 1 },
            nodes: vec![
                PdtNode::Query { support: vec![0], children: [1, 2] },
                PdtNode::Leaf(Label::Clause(0)),
                PdtNode::Leaf(Label::Clause(1)),
            ],
        }
    }

    #[test]
    fn dimacs_round_trip() {
        let cnf = Cnf::new(3, vec![vec![1, -2], vec![2, 3], vec![-3]]).unwrap();
        assert_eq!(Cnf::parse_dimacs(&cnf.emit_dimacs()).unwrap(), cnf);
        assert!(matches!(
            Cnf::parse_dimacs("p cnf 2 1\n1 0\n2 0\n"),
            Err(ProofCnfError::BadDimacs(_))
        ));
    }

    #[test]
    fn falsified_clauses_by_assignment() {
        let cnf = contradiction();
        assert_eq!(cnf.falsified_clauses(&[false]), vec![0]);
        assert_eq!(cnf.falsified_clauses(&[true]), vec![1]);
        assert!(cnf.is_unsatisfiable(false).unwrap());
        let sat = Cnf::new(2, vec![vec![1, 2]]).unwrap();
        assert!(!sat.is_unsatisfiable(false).unwrap());
    }

    #[test]
    fn lift_two_literal_clause_m2() {
        // (z1 v !z2), m=2: 4 clauses of width 4. Per block: x bit then 2 ys,
        // so x1=1, y1.0=2, y1.1=3, x2=4, y2.0=5, y2.1=6.
        let base = Cnf::new(2, vec![vec![1, -2]]).unwrap();
        let l = lift_cnf(&base, 2).unwrap();
        assert_eq!(l.lifted.n_vars, 6);
        assert_eq!(l.lifted.clauses.len(), 4);
        assert!(l.lifted.clauses.iter().all(|c| c.len() == 4));
        // The (j1=0, j2=1) clause: x1 bit 0, x2 bit 1, y1.0 positive,
        // y2.1 negative.
        let id = l.lifted_clause_id(0, &[0, 1]);
        // Literals are stored sorted by variable.
        assert_eq!(l.lifted.clauses[id], vec![1, 2, -4, -6]);
        assert_eq!(l.clause_map, vec![0; 4]);
    }

    #[test]
    fn lift_counts_match_formula() {
        let base = Cnf::new(1, vec![vec![1]]).unwrap();
        let l = lift_cnf(&base, 4).unwrap();
        assert_eq!(l.lifted.clauses.len(), 4);
        assert!(l.lifted.clauses.iter().all(|c| c.len() == 3));
        assert_eq!(l.lifted.n_vars, 1 * (2 + 4));
        assert!(l.map_file().contains("y 1 3 -> 6"));
    }

    #[test]
    fn lift_falsification_equivalence() {
        // For every lifted assignment, the base clauses reached through
        // clause_map from falsified lifted clauses are exactly the base
        // clauses falsified by z = IND(x, y).
        let base = Cnf::new(2, vec![vec![1, -2], vec![-1], vec![2]]).unwrap();
        for m in [2usize, 4] {
            let l = lift_cnf(&base, m).unwrap();
            let n = l.lifted.n_vars;
            for w in 0..1u64 << n {
                let a: Vec<bool> = (0..n).map(|i| w >> i & 1 == 1).collect();
                let z: Vec<bool> = (0..base.n_vars)
                    .map(|i| {
                        let j: usize = (0..l.vars.ell)
                            .map(|jp| (a[l.vars.x_var(i, jp)] as usize) << jp)
                            .sum();
                        a[l.vars.y_var(i, j)]
                    })
                    .collect();
                let via_map: BTreeSet<usize> = l
                    .lifted
                    .falsified_clauses(&a)
                    .into_iter()
                    .map(|c| l.clause_map[c])
                    .collect();
                let direct: BTreeSet<usize> = base.falsified_clauses(&z).into_iter().collect();
                assert_eq!(via_map, direct, "m={m} w={w}");
            }
        }
    }

    #[test]
    fn containment_examples() {
        let n = 2;
        let space = CoordSpace::vars(n);
        let full = AffineSystem::new(space);
        let v0 = full.row_reduce(&ParityEq::single(Coord::var(0), false)).unwrap().0;
        let v1 = full.row_reduce(&ParityEq::single(Coord::var(0), true)).unwrap().0;
        assert!(containment_c_sub_aub(&full, &v0, &v1));
        assert!(containment_c_sub_aub(&v0, &v0, &v1));

        let tight = v0.row_reduce(&ParityEq::single(Coord::var(1), false)).unwrap().0;
        assert!(!containment_c_sub_aub(&full, &tight, &v1));
    }

    #[test]
    fn containment_matches_point_enumeration() {
        // Random triples of subspaces over 5 variables.
        let n = 5;
        let space = CoordSpace::vars(n);
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        let mut random_system = |rounds: u64| {
            let mut s = AffineSystem::new(space);
            for _ in 0..rounds {
                let bits = next() & ((1 << n) - 1);
                if bits == 0 {
                    continue;
                }
                let eq = ParityEq::new(
                    (0..n).filter(|i| bits >> i & 1 == 1).map(Coord::var),
                    next() & 1 == 1,
                );
                if let Ok((s2, _)) = s.row_reduce(&eq) {
                    s = s2;
                }
            }
            s
        };
        for _ in 0..200 {
            let c = random_system(2);
            let a = random_system(2);
            let b = random_system(2);
            let algebraic = containment_c_sub_aub(&c, &a, &b);
            let pointwise = (0..1u32 << n).all(|w| {
                let z: Vec<bool> = (0..n).map(|i| w >> i & 1 == 1).collect();
                !c.satisfied_by(&z) || a.satisfied_by(&z) || b.satisfied_by(&z)
            });
            assert_eq!(algebraic, pointwise);
        }
    }

    #[test]
    fn resolution_refutation_accepts() {
        let cnf = contradiction();
        let proof = ResPlusProof {
            n_vars: 1,
            lines: vec![
                ProofLine {
                    source: LineSource::Axiom(0),
                    clause: ParityClause::from_literals(1, &[(vec![0], true)]),
                },
                ProofLine {
                    source: LineSource::Axiom(1),
                    clause: ParityClause::from_literals(1, &[(vec![0], false)]),
                },
                ProofLine {
                    source: LineSource::Infer(0, 1),
                    clause: ParityClause::full_space(1),
                },
            ],
        };
        assert_eq!(check_resplus(&cnf, &proof, true).unwrap(), Verdict::Accept);
        // Round-trip through the text format.
        let parsed = ResPlusProof::parse(&proof.emit()).unwrap();
        assert_eq!(check_resplus(&cnf, &parsed, true).unwrap(), Verdict::Accept);
    }

    #[test]
    fn bad_inference_rejected_with_witness() {
        // A = {v1=0, v2=0}, B = {v1=1}: the union misses (v1=0, v2=1).
        let cnf = Cnf::new(2, vec![vec![1, 2], vec![-1]]).unwrap();
        let proof = ResPlusProof {
            n_vars: 2,
            lines: vec![
                ProofLine {
                    source: LineSource::Axiom(0),
                    clause: ParityClause::from_literals(2, &[(vec![0], true), (vec![1], true)]),
                },
                ProofLine {
                    source: LineSource::Axiom(1),
                    clause: ParityClause::from_literals(2, &[(vec![0], false)]),
                },
                ProofLine {
                    source: LineSource::Infer(0, 1),
                    clause: ParityClause::full_space(2),
                },
            ],
        };
        match check_resplus(&cnf, &proof, true).unwrap() {
            Verdict::Reject { line: Some(2), witness: Some(w), .. } => {
                assert_eq!(w, vec![false, true]);
            }
            v => panic!("expected a line-3 reject with witness, got {v:?}"),
        }
    }

    #[test]
    fn pdt_search_verdicts() {
        let cnf = contradiction();
        let t = pdt_contradiction();
        assert_eq!(pdt_solves_search(&t, &cnf, false).unwrap(), Verdict::Accept);

        let mut swapped = t.clone();
        swapped.nodes[1] = PdtNode::Leaf(Label::Clause(1));
        swapped.nodes[2] = PdtNode::Leaf(Label::Clause(0));
        assert!(matches!(
            pdt_solves_search(&swapped, &cnf, false).unwrap(),
            Verdict::Reject { .. }
        ));
    }

    #[test]
    fn pdt_proof_round_trip() {
        let cnf = contradiction();
        let t = pdt_contradiction();
        let proof = pdt_to_resplus(&t, &cnf).unwrap();
        assert_eq!(proof.lines.len(), t.nodes.len());
        assert_eq!(check_resplus(&cnf, &proof, true).unwrap(), Verdict::Accept);
        let back = resplus_to_pdt(&proof, PdtVars::Plain { n: 1 }).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn parity_pdt_to_proof() {
        // phi: all four 2-literal clauses over z1, z2; the tree queries the
        // parity z1 + z2 first.
        let cnf =
            Cnf::new(2, vec![vec![1, 2], vec![-1, -2], vec![1, -2], vec![-1, 2]]).unwrap();
        assert!(cnf.is_unsatisfiable(false).unwrap());
        let t = ParityDecisionTree {
            vars: PdtVars::Plain { n: 2 },
            nodes: vec![
                PdtNode::Query { support: vec![0, 1], children: [1, 4] },
                PdtNode::Query { support: vec![0], children: [2, 3] },
                PdtNode::Leaf(Label::Clause(0)),
                PdtNode::Leaf(Label::Clause(1)),
                PdtNode::Query { support: vec![0], children: [5, 6] },
                PdtNode::Leaf(Label::Clause(2)),
                PdtNode::Leaf(Label::Clause(3)),
            ],
        };
        assert_eq!(pdt_solves_search(&t, &cnf, false).unwrap(), Verdict::Accept);
        let proof = pdt_to_resplus(&t, &cnf).unwrap();
        assert_eq!(proof.lines.len(), t.nodes.len());
        assert_eq!(check_resplus(&cnf, &proof, true).unwrap(), Verdict::Accept);
    }

    #[test]
    fn lifted_expansion_of_contradiction() {
        let base = contradiction();
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
        assert_eq!(pdt_solves_search(&t, &l.lifted, false).unwrap(), Verdict::Accept);
        assert_eq!(t.height(), 3);
    }

    #[test]
    fn guards() {
        let wide = Cnf::new(24, vec![(1..=24).collect()]).unwrap();
        assert!(matches!(lift_cnf(&wide, 4), Err(ProofCnfError::WidthOverflow(_))));
        assert!(matches!(
            wide.is_unsatisfiable(false),
            Err(ProofCnfError::GuardExceeded(24))
        ));
    }
}
