//! End-to-end synthesis: incremental scheme construction with reduction,
//! the characteristic function of the reduced scheme, and a check of the
//! resulting procedure against breadth-first search.

use std::fmt;

use log::{debug, info};
use thiserror::Error;

use crate::delta::{order_axioms, reduce_scheme, AxiomOrder, ReductionTrace};
use crate::error::{SearchError, SolverError};
use crate::final_solver::{decide, extract_proof};
use crate::oracle::{decide_oracle, reachable_set, SearchBudget};
use crate::scheme::{extend_scheme, IterExpr};
use crate::sigma::{sigma, SymbolicCharFn};
use crate::term::{replay, GroundTree, Proof, Term, Theory};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("{scheme}: {source}")]
    Solver { scheme: IterExpr, source: SolverError },
    #[error("theory has no axioms")]
    NoAxioms,
    #[error("self-check failed on {goal}: generated {generated}, search {search}")]
    SelfCheck { goal: GroundTree, generated: bool, search: bool },
    #[error("self-check: {0}")]
    Search(#[from] SearchError),
}

impl PipelineError {
    /// Whether synthesis itself failed, as opposed to the check.
    pub fn is_unsupported(&self) -> bool {
        matches!(
            self,
            PipelineError::Solver {
                source: SolverError::Unsupported(_) | SolverError::NotLinearizable(_) | SolverError::Unimplemented(_),
                ..
            }
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PipelineOptions {
    pub self_check: bool,
    /// Proof length of the goals used by the self-check.
    pub check_depth: usize,
    /// Largest goal used by the self-check.
    pub check_size: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions { self_check: true, check_depth: 6, check_size: 12 }
    }
}

/// The scheme after one more axiom, before and after reduction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stage {
    pub axiom: String,
    pub built: IterExpr,
    pub reduced: IterExpr,
    pub trace: ReductionTrace,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionProcedure {
    pub theory: Theory,
    pub order: AxiomOrder,
    pub stages: Vec<Stage>,
    pub reduced_scheme: IterExpr,
    pub charfn: SymbolicCharFn,
    /// Every rewrite of every stage, in order.
    pub trace: ReductionTrace,
    pub check: Option<SelfCheck>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SelfCheck {
    pub members: usize,
    pub non_members: usize,
}

impl fmt::Display for SelfCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} members, {} non-members agree", self.members, self.non_members)
    }
}

/// The reduced scheme over all axioms, built one axiom at a time.
pub fn reduced_scheme(th: &Theory) -> Result<(AxiomOrder, Vec<Stage>), PipelineError> {
    let order = order_axioms(th);
    let mut stages: Vec<Stage> = Vec::new();
    for a in &order.order {
        let built = match stages.last() {
            None => IterExpr::star(IterExpr::axiom(a.clone())),
            Some(s) => extend_scheme(&s.reduced, a),
        };
        let (reduced, trace) = reduce_scheme(th, &built);
        debug!("with {a}: {built} reduces to {reduced}");
        stages.push(Stage { axiom: a.clone(), built, reduced, trace });
    }
    if stages.is_empty() {
        return Err(PipelineError::NoAxioms);
    }
    Ok((order, stages))
}

pub fn pipeline(th: &Theory) -> Result<DecisionProcedure, PipelineError> {
    pipeline_with(th, PipelineOptions::default())
}

pub fn pipeline_with(th: &Theory, opts: PipelineOptions) -> Result<DecisionProcedure, PipelineError> {
    let (order, stages) = reduced_scheme(th)?;
    let reduced = stages.last().expect("at least one stage").reduced.clone();
    let charfn = sigma(th, &reduced).map_err(|source| PipelineError::Solver { scheme: reduced.clone(), source })?;
    info!("reduced scheme {reduced}");
    let trace = ReductionTrace {
        steps: stages.iter().flat_map(|s| s.trace.steps.iter().cloned()).collect(),
    };
    let mut dp = DecisionProcedure {
        theory: th.clone(),
        order,
        stages,
        reduced_scheme: reduced,
        charfn,
        trace,
        check: None,
    };
    if opts.self_check {
        dp.check = Some(dp.self_check(opts.check_depth, opts.check_size)?);
    }
    Ok(dp)
}

/// Small edits of a tree: children of the root swapped, or one child
/// wrapped in a unary `F` or `G`.
pub fn neighbours(d: &Term) -> Vec<Term> {
    let mut out = Vec::new();
    let Some(f) = d.functor() else { return out };
    let args = d.args();
    if args.len() == 2 && args[0] != args[1] {
        out.push(Term::app(f.clone(), vec![args[1].clone(), args[0].clone()]));
    }
    for i in 0..args.len() {
        for w in ["F", "G"] {
            let mut xs = args.to_vec();
            xs[i] = Term::app(w, vec![xs[i].clone()]);
            out.push(Term::app(f.clone(), xs));
        }
    }
    out
}

impl DecisionProcedure {
    /// Whether `d` is derivable from the start sentence.
    pub fn decide(&self, d: &GroundTree) -> Result<bool, SolverError> {
        self.decide_from(&self.theory.start, d)
    }

    pub fn decide_from(&self, t: &GroundTree, d: &GroundTree) -> Result<bool, SolverError> {
        decide(&self.charfn, t, d)
    }

    pub fn prove(&self, d: &GroundTree) -> Result<Option<Proof>, SolverError> {
        self.prove_from(&self.theory.start, d)
    }

    pub fn prove_from(&self, t: &GroundTree, d: &GroundTree) -> Result<Option<Proof>, SolverError> {
        extract_proof(&self.charfn, &self.theory, t, d)
    }

    /// Every sentence within `depth` steps and `size` nodes must be
    /// accepted with a replayable proof; their neighbours must be accepted
    /// whenever search proves them, and only with a replayable proof.
    pub fn self_check(&self, depth: usize, size: usize) -> Result<SelfCheck, PipelineError> {
        let th = &self.theory;
        let b = SearchBudget { max_depth: depth, max_tree_size: size, ..Default::default() };
        let members = reachable_set(th, &th.start, b)?;
        let mut report = SelfCheck::default();
        let solver = |source| PipelineError::Solver { scheme: self.reduced_scheme.clone(), source };
        let mismatch = |goal: &GroundTree, generated, search| PipelineError::SelfCheck {
            goal: goal.clone(),
            generated,
            search,
        };
        for d in &members {
            match self.prove(d).map_err(solver)? {
                Some(p) if replay(th, &th.start, &p).as_ref() == Ok(d) => report.members += 1,
                _ => return Err(mismatch(d, false, true)),
            }
        }
        let mut others: Vec<Term> = members
            .iter()
            .flat_map(neighbours)
            .filter(|d| d.size() <= size && !members.contains(d))
            .collect();
        others.sort();
        others.dedup();
        for d in &others {
            let search = decide_oracle(th, &th.start, d, b)?;
            let generated = match self.prove(d).map_err(solver)? {
                Some(p) if replay(th, &th.start, &p).as_ref() == Ok(d) => true,
                Some(_) => return Err(mismatch(d, true, search)),
                None => false,
            };
            if search && !generated {
                return Err(mismatch(d, generated, search));
            }
            if !generated {
                report.non_members += 1;
            } else {
                report.members += 1;
            }
        }
        info!("self-check: {report}");
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_ground, parse_theory};

    fn theory(src: &str) -> Theory {
        parse_theory(src).unwrap()
    }

    #[test]
    fn commuting_pair_reduces_to_two_stars() {
        let th = theory(include_str!("../theories/fg.tpc"));
        let dp = pipeline(&th).unwrap();
        assert_eq!(dp.reduced_scheme.to_string(), "b*.a*");
        let s = dp.charfn.to_string();
        assert!(s.contains("^{2k+n}") && s.contains("^{k+n}"), "{s}");
        assert!(dp.trace.steps.iter().any(|s| s.rule.id() == "R1"));
        assert!(dp.check.unwrap().non_members > 0);
        let d = parse_ground("P(F(F(F(F(F(F(F(F(Z)))))))), G(G(G(G(G(Z))))))").unwrap();
        assert!(dp.decide(&d).unwrap());
        assert_eq!(dp.prove(&d).unwrap().unwrap().steps.len(), 5);
    }

    #[test]
    fn single_axiom_gives_single_star() {
        let th = theory(include_str!("../theories/chain.tpc"));
        let dp = pipeline(&th).unwrap();
        assert_eq!(dp.reduced_scheme.to_string(), "a*");
        assert!(dp.charfn.atoms().is_some());
        assert!(dp.trace.steps.is_empty());
    }

    #[test]
    fn stack_and_modular_theories_pass_the_check() {
        for src in [include_str!("../theories/stack.tpc"), include_str!("../theories/mod.tpc")] {
            let dp = pipeline(&theory(src)).unwrap();
            assert!(dp.check.unwrap().members > 0, "{}", dp.reduced_scheme);
        }
    }

    #[test]
    fn and_spines_are_not_synthesized() {
        let th = theory(include_str!("../theories/ancestor.tpc"));
        let err = pipeline(&th).unwrap_err();
        assert!(err.is_unsupported(), "{err}");
    }

    #[test]
    fn neighbours_swap_and_wrap() {
        let d = parse_ground("P(Z, F(Z))").unwrap();
        let ns: Vec<String> = neighbours(&d).iter().map(ToString::to_string).collect();
        assert_eq!(ns, ["P(F(Z), Z)", "P(F(Z), F(Z))", "P(G(Z), F(Z))", "P(Z, F(F(Z)))", "P(Z, G(F(Z)))"]);
    }
}
