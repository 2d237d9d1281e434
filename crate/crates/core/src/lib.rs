//! Synthesis of polynomial-cost membership procedures for theories given as
//! root-level rewriting axioms over ground trees.
//!
//! The pipeline builds an iterative scheme over the axioms, reduces its
//! redundant iterations, derives a symbolic characteristic function of the
//! reduced scheme and tunes that function against concrete tree pairs.
//! A breadth-first prover serves both as a baseline and as the oracle every
//! synthesized procedure is checked against.

pub mod affine;
pub mod atoms;
pub mod compose;
pub mod delta;
pub mod error;
pub mod final_solver;
pub mod inclu;
pub mod math;
pub mod oracle;
pub mod path;
pub mod pipeline;
pub mod scheme;
pub mod sigma;
pub mod syntax;
pub mod term;

pub use error::{ProofError, SchemeError, SearchError, SolverError, TheoryError};
pub use term::{Clause, GroundTree, PatternTerm, Proof, Term, Theory};
