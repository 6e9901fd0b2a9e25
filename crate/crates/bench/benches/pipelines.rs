//! Benchmarks for the hot paths: row reduction, counterexample verification,
//! protocol simulation, and the proof/tree round trip.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use num_rational::Ratio;

use liftlab_core::counterexample::{self, CounterexampleGadget, CounterexampleParams};
use liftlab_core::dtree::{DecisionTree, DtNode, Label, TruthTable};
use liftlab_core::f2_linalg::{AffineSystem, Coord, CoordSpace, ParityEq};
use liftlab_core::proofcnf::{check_resplus, lift_cnf, lift_dt_to_pdt, pdt_to_resplus, Cnf};
use liftlab_core::protocol::canonical_protocol;
use liftlab_core::simulation::{extract_decision_tree, simulate, AlicePolicy};

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

/// Insert a fixed pseudo-random sequence of parity equations over 12 lifted
/// blocks (m = 4) into a fresh system, span tests included.
fn bench_row_reduce(c: &mut Criterion) {
    let space = CoordSpace::new(12, 4, 2);
    let mut eqs: Vec<ParityEq> = Vec::new();
    let mut state = 0x2545f491u64;
    for _ in 0..64 {
        let mut support = Vec::new();
        for block in 0..12 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            if state >> 33 & 1 == 1 {
                support.push(Coord::y(block, (state >> 34) as usize % 4));
            }
            if state >> 35 & 1 == 1 {
                support.push(Coord::x(block, (state >> 36) as usize % 2));
            }
        }
        if !support.is_empty() {
            eqs.push(ParityEq::new(support, state >> 40 & 1 == 1));
        }
    }
    c.bench_function("row_reduce/64_insertions", |b| {
        b.iter_batched(
            || AffineSystem::new(space.clone()),
            |mut sys| {
                for eq in &eqs {
                    if let Ok((next, _)) = sys.row_reduce(eq) {
                        sys = next;
                    }
                }
                sys
            },
            BatchSize::SmallInput,
        )
    });
}

/// Full exhaustive verification of the m = 2, N = 8 dispersion counterexample.
fn bench_counterexample(c: &mut Criterion) {
    let params = CounterexampleParams {
        gadget: CounterexampleGadget::Index,
        m: 2,
        n_blocks: 8,
        k_bound: Ratio::new(2, 1),
        delta: 1,
    };
    let family = counterexample::build(&params).unwrap();
    c.bench_function("counterexample/verify_m2_n8", |b| {
        b.iter(|| counterexample::verify(&params, &family).unwrap())
    });
}

/// Simulate the canonical XOR_3 protocol on every input, plus extract the
/// full decision tree by forking both answers.
fn bench_simulation(c: &mut Criterion) {
    let f = TruthTable::from_fn(3, |z| z.iter().filter(|&&b| b).count() % 2 == 1);
    let proto = canonical_protocol(&full_dt(&f), 4).unwrap();
    c.bench_function("simulate/xor3_all_inputs", |b| {
        b.iter(|| {
            for w in 0..8u32 {
                let z: Vec<bool> = (0..3).map(|i| w >> i & 1 == 1).collect();
                simulate(&proto, &z, AlicePolicy::Majority, false).unwrap();
            }
        })
    });
    c.bench_function("simulate/xor3_extract_tree", |b| {
        b.iter(|| extract_decision_tree(&proto, AlicePolicy::Majority, false).unwrap())
    });
}

/// Lift an unsatisfiable 3-variable CNF with m = 4, convert the lifted tree
/// to a proof, and check the proof.
fn bench_proof_round_trip(c: &mut Criterion) {
    let base = Cnf::new(3, vec![vec![1, 2], vec![1, -2], vec![-1, 3], vec![-1, -3]]).unwrap();
    let search = {
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
                let child = go(cnf, fixed, nodes);
                fixed.pop();
                if let DtNode::Query { children, .. } = &mut nodes[id] {
                    children[b as usize] = child;
                }
            }
            id
        }
        let mut nodes = Vec::new();
        go(&base, &mut Vec::new(), &mut nodes);
        DecisionTree { n_vars: base.n_vars, nodes }
    };
    let lifted = lift_cnf(&base, 4).unwrap();
    c.bench_function("proof/lift_to_check_m4", |b| {
        b.iter(|| {
            let t = lift_dt_to_pdt(&search, 4, Some(&lifted)).unwrap();
            let proof = pdt_to_resplus(&t, &lifted.lifted).unwrap();
            check_resplus(&lifted.lifted, &proof, true).unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_row_reduce,
    bench_counterexample,
    bench_simulation,
    bench_proof_round_trip
);
criterion_main!(benches);
