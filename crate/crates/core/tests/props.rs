//! Property tests: randomized structures checked against direct-definition
//! oracles and round-trip identities.

use std::collections::BTreeSet;

use proptest::prelude::*;

use liftlab_core::dtree::{DecisionTree, DtNode, Label, TruthTable};
use liftlab_core::entropy::{self, PointerSet};
use liftlab_core::f2_linalg::{AffineSystem, Coord, CoordSpace, ParityEq};
use liftlab_core::oracles;
use liftlab_core::proofcnf::{lift_cnf, lift_dt_to_pdt, pdt_solves_search, Cnf, Verdict};
use liftlab_core::protocol::{canonical_protocol, ProtocolTree};
use liftlab_core::simulation::{pdt_simulate, simulate, AlicePolicy};

fn full_dt(f: &TruthTable) -> DecisionTree {
    fn go(f: &TruthTable, fixed: &mut Vec<bool>, nodes: &mut Vec<DtNode>) -> usize {
        let var = fixed.len();
        if var == f.n {
            let id = nodes.len();
            nodes.push(DtNode::Leaf(Label::Bit(f.eval(fixed))));
            return id;
        }
        let id = nodes.len();
        nodes.push(DtNode::Query { var, children: [0, 0] });
        for b in [false, true] {
            fixed.push(b);
            let c = go(f, fixed, nodes);
            fixed.pop();
            if let DtNode::Query { children, .. } = &mut nodes[id] {
                children[b as usize] = c;
            }
        }
        id
    }
    let mut nodes = Vec::new();
    go(f, &mut Vec::new(), &mut nodes);
    DecisionTree { n_vars: f.n, nodes }
}

proptest! {
    /// Insertions keep the identity invariant and never change the solution
    /// set described by the surviving raw equations.
    #[test]
    fn row_reduction_preserves_solutions(
        n in 1usize..=10,
        eqs in prop::collection::vec((1u32..1024, any::<bool>()), 1..8),
    ) {
        let space = CoordSpace::vars(n);
        let mut sys = AffineSystem::new(space.clone());
        let mut raw: Vec<(u32, bool)> = Vec::new();
        for (mask, rhs) in eqs {
            let mask = mask & ((1u32 << n) - 1);
            if mask == 0 {
                continue;
            }
            let support = (0..n).filter(|i| mask >> i & 1 == 1).map(Coord::var);
            if let Ok((next, _)) = sys.row_reduce(&ParityEq::new(support, rhs)) {
                sys = next;
                raw.push((mask, rhs));
                prop_assert!(sys.identity_invariant_holds());
            }
        }
        let reduced: Vec<(u32, bool)> = sys
            .equations()
            .iter()
            .map(|eq| {
                (eq.support.iter().fold(0u32, |acc, &c| acc | 1 << space.index(c)), eq.rhs)
            })
            .collect();
        for w in 0..1u32 << n {
            let sat = |set: &[(u32, bool)]| {
                set.iter().all(|&(m, r)| ((m & w).count_ones() & 1 == 1) == r)
            };
            prop_assert_eq!(sat(&raw), sat(&reduced));
        }
    }

    /// Module min-entropy rate equals the direct-definition recomputation.
    #[test]
    fn entropy_rate_matches_oracle(
        n in 1usize..=3,
        m in 2usize..=4,
        picks in prop::collection::vec(any::<bool>(), 64),
    ) {
        let mut members: Vec<Vec<u16>> = Vec::new();
        let universe = (m as u64).pow(n as u32);
        for t in 0..universe {
            if picks[t as usize % picks.len()] ^ (t % 3 == 0) {
                let mut rest = t;
                members.push((0..n).map(|_| {
                    let v = (rest % m as u64) as u16;
                    rest /= m as u64;
                    v
                }).collect());
            }
        }
        if members.is_empty() {
            members.push(vec![0; n]);
        }
        let set = PointerSet::new(n, m, members.clone());
        let report = entropy::min_entropy_rate(&set, &BTreeSet::new(), false).unwrap();
        let direct = oracles::min_rate_direct(&members, &BTreeSet::new(), false).unwrap();
        prop_assert!(oracles::rates_equal(
            set.len() as u64,
            report.witness_count as u64,
            report.witness_set.len(),
            direct.total,
            direct.count,
            direct.j.len(),
        ));
    }

    /// A lifted clause is falsified exactly when its base clause is falsified
    /// by the decoded z.
    #[test]
    fn lifting_preserves_falsification(
        clauses in prop::collection::vec(
            prop::collection::vec((1i32..=3, any::<bool>()), 1..=3),
            1..=3,
        ),
        w in any::<u32>(),
    ) {
        let clauses: Vec<Vec<i32>> = clauses
            .iter()
            .map(|c| c.iter().map(|&(v, neg)| if neg { -v } else { v }).collect())
            .collect();
        let base = match Cnf::new(3, clauses) {
            Ok(c) => c,
            Err(_) => return Ok(()),
        };
        let l = lift_cnf(&base, 2).unwrap();
        // Decode an arbitrary lifted assignment from w.
        let bits: Vec<bool> = (0..l.lifted.n_vars).map(|i| w >> (i % 32) & 1 == 1).collect();
        let z: Vec<bool> = (0..3)
            .map(|i| {
                let ptr = bits[l.vars.x_var(i, 0)] as usize;
                bits[l.vars.y_var(i, ptr)]
            })
            .collect();
        let lifted_falsified: BTreeSet<usize> = l
            .lifted
            .falsified_clauses(&bits)
            .into_iter()
            .map(|c| l.clause_map[c])
            .collect();
        let base_falsified: BTreeSet<usize> =
            base.falsified_clauses(&z).into_iter().collect();
        prop_assert_eq!(lifted_falsified, base_falsified);
    }

    /// Protocol files and the simulation pipeline behave identically after an
    /// emit/parse round trip; simulation recovers f(z) on every input.
    #[test]
    fn protocol_round_trip_and_simulation(table in 0u32..256, n in 1usize..=3) {
        let f = TruthTable {
            n,
            bits: (0..1usize << n).map(|w| table >> w & 1 == 1).collect(),
        };
        let proto = canonical_protocol(&full_dt(&f), 4).unwrap();
        let parsed = ProtocolTree::parse(&proto.emit()).unwrap();
        prop_assert_eq!(&parsed, &proto);
        for w in 0..1u32 << n {
            let z: Vec<bool> = (0..n).map(|i| w >> i & 1 == 1).collect();
            let out = simulate(&proto, &z, AlicePolicy::Majority, false).unwrap();
            prop_assert_eq!(out.label, Label::Bit(f.eval(&z)));
            prop_assert!(out.queried.len() <= out.a_bits + out.b_bits);
        }
    }

    /// Lifting a search tree and simulating it back solves the base search
    /// problem with no more leaves.
    #[test]
    fn lifted_search_round_trip(seed in 0u32..16) {
        // A guaranteed-unsatisfiable 2-variable CNF plus a seed-dependent clause.
        let mut clauses = vec![vec![1, 2], vec![1, -2], vec![-1, 2], vec![-1, -2]];
        if seed % 2 == 0 {
            clauses.push(vec![if seed % 4 == 0 { 1 } else { -1 }]);
        }
        let base = Cnf::new(2, clauses).unwrap();
        let dt = {
            fn go(cnf: &Cnf, fixed: &mut Vec<bool>, nodes: &mut Vec<DtNode>) -> usize {
                if fixed.len() == cnf.n_vars {
                    let id = nodes.len();
                    nodes.push(DtNode::Leaf(Label::Clause(cnf.falsified_clauses(fixed)[0])));
                    return id;
                }
                let var = fixed.len();
                let id = nodes.len();
                nodes.push(DtNode::Query { var, children: [0, 0] });
                for b in [false, true] {
                    fixed.push(b);
                    let c = go(cnf, fixed, nodes);
                    fixed.pop();
                    if let DtNode::Query { children, .. } = &mut nodes[id] {
                        children[b as usize] = c;
                    }
                }
                id
            }
            let mut nodes = Vec::new();
            go(&base, &mut Vec::new(), &mut nodes);
            DecisionTree { n_vars: base.n_vars, nodes }
        };
        let l = lift_cnf(&base, 4).unwrap();
        let t = lift_dt_to_pdt(&dt, 4, Some(&l)).unwrap();
        prop_assert_eq!(pdt_solves_search(&t, &l.lifted, false).unwrap(), Verdict::Accept);
        let clause_map = l.clause_map.clone();
        let map = move |lab: &Label| match lab {
            Label::Clause(c) => Label::Clause(clause_map[*c]),
            other => other.clone(),
        };
        let out = pdt_simulate(&t, &map).unwrap();
        prop_assert!(out.leaves() <= t.leaves());
        for w in 0..4u32 {
            let z: Vec<bool> = (0..2).map(|i| w >> i & 1 == 1).collect();
            match out.eval(&z) {
                Label::Clause(c) => prop_assert!(base.clause_falsified(*c, &z)),
                other => return Err(TestCaseError::fail(format!("non-clause label {other}"))),
            }
        }
    }
}
