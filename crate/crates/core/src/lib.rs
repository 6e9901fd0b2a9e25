//! Query-to-communication lifting with small Index gadgets: GF(2) affine
//! bookkeeping, the semi-structured simulation algorithm, the disperser
//! counterexample families, CNF lifting, and a tree-Res(+) verifier, all
//! validated against brute-force oracles at desk scale.

pub mod counterexample;
pub mod dtree;
pub mod entropy;
pub mod f2_linalg;
pub mod gadgets;
pub mod oracles;
pub mod proofcnf;
pub mod protocol;
pub mod simulation;

pub use f2_linalg::{AffineSystem, Coord, CoordSpace, ParityEq, Side, SpanResult};
pub use entropy::PointerSet;
pub use gadgets::GadgetSpec;
