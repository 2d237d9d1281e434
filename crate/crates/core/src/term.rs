//! Terms, clauses, theories and proofs.
//!
//! A single [`Term`] type covers both ground sentences and clause patterns.
//! Nodes are reference counted and carry a cached structural hash and size,
//! so equality tests between large sentences are cheap in the common case.

use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::error::{ProofError, TheoryError};

pub type Name = Arc<str>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Head {
    Var(Name),
    Fun(Name),
}

struct Node {
    head: Head,
    args: Vec<Term>,
    size: usize,
    hash: u64,
    ground: bool,
}

/// An immutable first-order term. Variables start with a lowercase letter,
/// functors (including constants) with an uppercase one.
#[derive(Clone)]
pub struct Term(Arc<Node>);

/// A variable-free term: the sentences that proofs transform.
pub type GroundTree = Term;

/// A term that may contain variables, used on both sides of a clause.
pub type PatternTerm = Term;

impl Term {
    fn build(head: Head, args: Vec<Term>) -> Term {
        let mut h = DefaultHasher::new();
        head.hash(&mut h);
        let mut size = 1;
        let mut ground = matches!(head, Head::Fun(_));
        for a in &args {
            a.0.hash.hash(&mut h);
            size += a.0.size;
            ground &= a.0.ground;
        }
        Term(Arc::new(Node {
            head,
            args,
            size,
            hash: h.finish(),
            ground,
        }))
    }

    pub fn var(name: impl Into<Name>) -> Term {
        Term::build(Head::Var(name.into()), Vec::new())
    }

    pub fn app(name: impl Into<Name>, args: Vec<Term>) -> Term {
        Term::build(Head::Fun(name.into()), args)
    }

    pub fn constant(name: impl Into<Name>) -> Term {
        Term::app(name, Vec::new())
    }

    pub fn head(&self) -> &Head {
        &self.0.head
    }

    pub fn args(&self) -> &[Term] {
        &self.0.args
    }

    pub fn arity(&self) -> usize {
        self.0.args.len()
    }

    pub fn size(&self) -> usize {
        self.0.size
    }

    pub fn is_ground(&self) -> bool {
        self.0.ground
    }

    pub fn is_var(&self) -> bool {
        matches!(self.0.head, Head::Var(_))
    }

    pub fn var_name(&self) -> Option<&Name> {
        match &self.0.head {
            Head::Var(v) => Some(v),
            Head::Fun(_) => None,
        }
    }

    pub fn functor(&self) -> Option<&Name> {
        match &self.0.head {
            Head::Fun(f) => Some(f),
            Head::Var(_) => None,
        }
    }

    pub fn ptr_eq(&self, other: &Term) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Variables in order of first (pre-order) occurrence.
    pub fn vars(&self) -> Vec<Name> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        self.walk(&mut |t| {
            if let Some(v) = t.var_name() {
                if seen.insert(v.clone()) {
                    out.push(v.clone());
                }
            }
        });
        out
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Term)) {
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            f(t);
            for a in t.args().iter().rev() {
                stack.push(a);
            }
        }
    }

    /// Pre-order traversal with the child-index path of every node.
    pub fn walk_positions(&self, f: &mut impl FnMut(&[usize], &Term)) {
        fn go(t: &Term, pos: &mut Vec<usize>, f: &mut impl FnMut(&[usize], &Term)) {
            f(pos, t);
            for (i, a) in t.args().iter().enumerate() {
                pos.push(i);
                go(a, pos, f);
                pos.pop();
            }
        }
        go(self, &mut Vec::new(), f)
    }

    pub fn subterm(&self, pos: &[usize]) -> Option<&Term> {
        let mut t = self;
        for &i in pos {
            t = t.args().get(i)?;
        }
        Some(t)
    }

    /// Every functor with its arity, in pre-order.
    pub fn signature(&self, out: &mut BTreeMap<Name, usize>) -> Result<(), TheoryError> {
        let mut err = None;
        self.walk(&mut |t| {
            if let Some(f) = t.functor() {
                match out.get(f) {
                    Some(&a) if a != t.arity() && err.is_none() => {
                        err = Some(TheoryError::ArityMismatch {
                            functor: f.to_string(),
                            expected: a,
                            found: t.arity(),
                        })
                    }
                    Some(_) => {}
                    None => {
                        out.insert(f.clone(), t.arity());
                    }
                }
            }
        });
        err.map_or(Ok(()), Err)
    }

    pub fn rename_vars(&self, map: &impl Fn(&Name) -> Name) -> Term {
        match self.head() {
            Head::Var(v) => Term::var(map(v)),
            Head::Fun(f) => {
                if self.is_ground() {
                    return self.clone();
                }
                Term::app(f.clone(), self.args().iter().map(|a| a.rename_vars(map)).collect())
            }
        }
    }

    fn structural_eq(&self, other: &Term) -> bool {
        // explicit stack: sentences can be thousands of nodes deep
        let mut stack = vec![(self, other)];
        while let Some((a, b)) = stack.pop() {
            if a.ptr_eq(b) {
                continue;
            }
            if a.0.hash != b.0.hash || a.0.size != b.0.size || a.0.head != b.0.head {
                return false;
            }
            if a.arity() != b.arity() {
                return false;
            }
            stack.extend(a.args().iter().zip(b.args()));
        }
        true
    }
}

impl Drop for Node {
    fn drop(&mut self) {
        // unwind long chains iteratively
        let mut pending: Vec<Term> = std::mem::take(&mut self.args);
        while let Some(t) = pending.pop() {
            if let Ok(mut node) = Arc::try_unwrap(t.0) {
                pending.append(&mut node.args);
            }
        }
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Term) -> bool {
        self.structural_eq(other)
    }
}

impl Eq for Term {}

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl Ord for Term {
    /// Canonical order: smaller trees first, then head, then children.
    fn cmp(&self, other: &Term) -> Ordering {
        if self.ptr_eq(other) {
            return Ordering::Equal;
        }
        self.size()
            .cmp(&other.size())
            .then_with(|| self.head().cmp(other.head()))
            .then_with(|| self.args().cmp(other.args()))
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Term) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.head() {
            Head::Var(v) => write!(f, "{v}"),
            Head::Fun(name) => {
                write!(f, "{name}")?;
                if !self.args().is_empty() {
                    write!(f, "(")?;
                    for (i, a) in self.args().iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        write!(f, "{a}")?;
                    }
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

pub type Subst = HashMap<Name, Term>;

/// One-sided matching of `pattern` against a ground term. Repeated pattern
/// variables must bind structurally equal subtrees.
pub fn match_term(pattern: &Term, t: &Term, subst: &mut Subst) -> bool {
    match pattern.head() {
        Head::Var(v) => match subst.get(v) {
            Some(bound) => bound == t,
            None => {
                subst.insert(v.clone(), t.clone());
                true
            }
        },
        Head::Fun(f) => {
            if pattern.is_ground() {
                return pattern == t;
            }
            t.functor() == Some(f)
                && t.arity() == pattern.arity()
                && pattern
                    .args()
                    .iter()
                    .zip(t.args())
                    .all(|(p, s)| match_term(p, s, subst))
        }
    }
}

pub fn substitute(t: &Term, subst: &Subst) -> Term {
    match t.head() {
        Head::Var(v) => subst.get(v).cloned().unwrap_or_else(|| t.clone()),
        Head::Fun(f) => {
            if t.is_ground() {
                return t.clone();
            }
            Term::app(f.clone(), t.args().iter().map(|a| substitute(a, subst)).collect())
        }
    }
}

fn walk_binding(t: &Term, s: &Subst) -> Term {
    let mut cur = t.clone();
    while let Some(v) = cur.var_name() {
        match s.get(v) {
            Some(next) => cur = next.clone(),
            None => break,
        }
    }
    cur
}

fn occurs(v: &Name, t: &Term, s: &Subst) -> bool {
    let t = walk_binding(t, s);
    match t.head() {
        Head::Var(w) => w == v,
        Head::Fun(_) => t.args().iter().any(|a| occurs(v, a, s)),
    }
}

/// Syntactic unification with occurs check; extends `s` with a triangular
/// substitution.
pub fn unify(a: &Term, b: &Term, s: &mut Subst) -> bool {
    let a = walk_binding(a, s);
    let b = walk_binding(b, s);
    match (a.head(), b.head()) {
        (Head::Var(x), Head::Var(y)) if x == y => true,
        (Head::Var(x), _) => {
            if occurs(x, &b, s) {
                return false;
            }
            s.insert(x.clone(), b);
            true
        }
        (_, Head::Var(y)) => {
            if occurs(y, &a, s) {
                return false;
            }
            s.insert(y.clone(), a);
            true
        }
        (Head::Fun(f), Head::Fun(g)) => {
            f == g
                && a.arity() == b.arity()
                && a.args().iter().zip(b.args()).all(|(x, y)| unify(x, y, s))
        }
    }
}

/// Fully applies a triangular substitution.
pub fn resolve(t: &Term, s: &Subst) -> Term {
    let t = walk_binding(t, s);
    match t.head() {
        Head::Var(_) => t,
        Head::Fun(f) => {
            if t.is_ground() {
                return t;
            }
            Term::app(f.clone(), t.args().iter().map(|a| resolve(a, s)).collect())
        }
    }
}

/// Variable names used by canonical renaming, in order.
pub fn canonical_var_name(i: usize) -> Name {
    const POOL: [&str; 7] = ["x", "y", "z", "t", "u", "v", "w"];
    if i < POOL.len() {
        POOL[i].into()
    } else {
        format!("x{}", i - POOL.len() + 1).into()
    }
}

/// A production-like axiom `lhs -> rhs`, applied at the root of a sentence.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Clause {
    pub name: String,
    pub lhs: Term,
    pub rhs: Term,
}

impl Clause {
    pub fn new(name: impl Into<String>, lhs: Term, rhs: Term) -> Result<Clause, TheoryError> {
        let name = name.into();
        let lhs_vars: BTreeSet<Name> = lhs.vars().into_iter().collect();
        if let Some(v) = rhs.vars().into_iter().find(|v| !lhs_vars.contains(v)) {
            return Err(TheoryError::FreeRhsVariable {
                axiom: name,
                var: v.to_string(),
            });
        }
        Ok(Clause { name, lhs, rhs })
    }

    /// The identity clause `x -> x`.
    pub fn identity() -> Clause {
        Clause {
            name: "eps".into(),
            lhs: Term::var("x"),
            rhs: Term::var("x"),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.lhs.is_var() && self.lhs == self.rhs
    }

    /// Renames variables to `x, y, z, ...` in order of first occurrence
    /// (left side first), so that clauses equal up to renaming compare equal.
    pub fn canonical(&self) -> Clause {
        let mut map: HashMap<Name, Name> = HashMap::new();
        for v in self.lhs.vars().into_iter().chain(self.rhs.vars()) {
            let n = map.len();
            map.entry(v).or_insert_with(|| canonical_var_name(n));
        }
        let f = |v: &Name| map[v].clone();
        Clause {
            name: self.name.clone(),
            lhs: self.lhs.rename_vars(&f),
            rhs: self.rhs.rename_vars(&f),
        }
    }

    /// Equality of the underlying relations up to variable renaming.
    pub fn same_relation(&self, other: &Clause) -> bool {
        let a = self.canonical();
        let b = other.canonical();
        a.lhs == b.lhs && a.rhs == b.rhs
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} -> {}", self.name, self.lhs, self.rhs)
    }
}

/// Root-level application; `None` when the left side does not match.
pub fn apply_clause(c: &Clause, t: &GroundTree) -> Option<GroundTree> {
    let mut s = Subst::new();
    if match_term(&c.lhs, t, &mut s) {
        Some(substitute(&c.rhs, &s))
    } else {
        None
    }
}

/// Sequential composition `c1` then `c2` as one clause, or `None` when the
/// composed relation is empty.
pub fn compose_clauses(c1: &Clause, c2: &Clause) -> Option<Clause> {
    let used: BTreeSet<Name> = c1.lhs.vars().into_iter().chain(c1.rhs.vars()).collect();
    let mut renames: HashMap<Name, Name> = HashMap::new();
    for v in c2.lhs.vars() {
        let mut candidate = format!("{v}_");
        while used.contains(candidate.as_str()) {
            candidate.push('_');
        }
        renames.insert(v, candidate.into());
    }
    let rn = |v: &Name| renames.get(v).cloned().unwrap_or_else(|| v.clone());
    let lhs2 = c2.lhs.rename_vars(&rn);
    let rhs2 = c2.rhs.rename_vars(&rn);
    let mut s = Subst::new();
    if !unify(&c1.rhs, &lhs2, &mut s) {
        return None;
    }
    let name = match (c1.is_identity(), c2.is_identity()) {
        (true, _) => c2.name.clone(),
        (_, true) => c1.name.clone(),
        _ => format!("{}.{}", c1.name, c2.name),
    };
    let out = Clause {
        name,
        lhs: resolve(&c1.lhs, &s),
        rhs: resolve(&rhs2, &s),
    };
    Some(out.canonical())
}

/// A set of axioms with a starting sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Theory {
    pub start: GroundTree,
    pub axioms: Vec<Clause>,
    pub goal: Option<GroundTree>,
}

impl Theory {
    pub fn new(
        start: GroundTree,
        axioms: Vec<Clause>,
        goal: Option<GroundTree>,
    ) -> Result<Theory, TheoryError> {
        if !start.is_ground() {
            return Err(TheoryError::NonGroundStart);
        }
        if goal.as_ref().is_some_and(|g| !g.is_ground()) {
            return Err(TheoryError::NonGroundGoal);
        }
        let mut names = BTreeSet::new();
        let mut sig = BTreeMap::new();
        start.signature(&mut sig)?;
        for c in &axioms {
            if c.name == "start" || c.name == "goal" || c.name == "eps" {
                return Err(TheoryError::ReservedName(c.name.clone()));
            }
            if !names.insert(c.name.clone()) {
                return Err(TheoryError::DuplicateAxiom(c.name.clone()));
            }
            // re-check the clause invariant for hand-built clauses
            Clause::new(c.name.clone(), c.lhs.clone(), c.rhs.clone())?;
            c.lhs.signature(&mut sig)?;
            c.rhs.signature(&mut sig)?;
        }
        if let Some(g) = &goal {
            g.signature(&mut sig)?;
        }
        Ok(Theory { start, axioms, goal })
    }

    pub fn axiom(&self, name: &str) -> Option<&Clause> {
        self.axioms.iter().find(|c| c.name == name)
    }

    pub fn axiom_names(&self) -> Vec<String> {
        self.axioms.iter().map(|c| c.name.clone()).collect()
    }

    /// Functor/arity pairs used anywhere in the theory.
    pub fn signature(&self) -> BTreeMap<Name, usize> {
        let mut sig = BTreeMap::new();
        // validated at construction
        let _ = self.start.signature(&mut sig);
        for c in &self.axioms {
            let _ = c.lhs.signature(&mut sig);
            let _ = c.rhs.signature(&mut sig);
        }
        if let Some(g) = &self.goal {
            let _ = g.signature(&mut sig);
        }
        sig
    }

    /// The root functor shared by the start sentence and both sides of every
    /// axiom, if there is one. Every derivable sentence then has this root.
    pub fn root_invariant(&self) -> Option<(Name, usize)> {
        let root = (self.start.functor()?.clone(), self.start.arity());
        let same = |t: &Term| t.functor() == Some(&root.0) && t.arity() == root.1;
        self.axioms
            .iter()
            .all(|c| same(&c.lhs) && same(&c.rhs))
            .then_some(root)
    }
}

/// A linear proof: axiom names applied in order to the start sentence.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Proof {
    pub steps: Vec<String>,
}

impl Proof {
    pub fn new<S: Into<String>>(steps: impl IntoIterator<Item = S>) -> Proof {
        Proof {
            steps: steps.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl fmt::Display for Proof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.steps.join(", "))
    }
}

/// Replays `p` from the start sentence.
pub fn check_proof(th: &Theory, p: &Proof) -> Result<GroundTree, ProofError> {
    replay(th, &th.start, p)
}

/// Replays `p` from an arbitrary sentence.
pub fn replay(th: &Theory, from: &GroundTree, p: &Proof) -> Result<GroundTree, ProofError> {
    let mut cur = from.clone();
    for (i, step) in p.steps.iter().enumerate() {
        let c = th
            .axiom(step)
            .ok_or_else(|| ProofError::UnknownAxiom(step.clone()))?;
        cur = apply_clause(c, &cur).ok_or(ProofError::InvalidAt(i + 1))?;
    }
    Ok(cur)
}

/// A Prolog-style rule `body_1 & ... & body_n => head`.
#[derive(Clone, Debug)]
pub struct HornRule {
    pub name: String,
    pub body: Vec<Term>,
    pub head: Term,
}

const CONNECTIVES: [&str; 5] = ["And", "Or", "Not", "Implies", "Iff"];

/// Encodes facts and conjunctive rules as a theory over `And`-spines rooted
/// at the empty sentence `S`, plus the two projection axioms `l1`, `l2`.
pub fn horn_to_tpc(
    facts: &[(String, Term)],
    rules: &[HornRule],
    goal: Term,
) -> Result<Theory, TheoryError> {
    let and = |a: Term, b: Term| Term::app("And", vec![a, b]);
    let mut axioms = Vec::new();
    for (name, fact) in facts {
        if !fact.is_ground() {
            return Err(TheoryError::UnsupportedRule(format!("fact {name} is not ground")));
        }
        axioms.push(Clause::new(
            name.clone(),
            Term::var("x"),
            and(fact.clone(), Term::var("x")),
        )?);
    }
    for r in rules {
        let connective = r
            .body
            .iter()
            .chain(std::iter::once(&r.head))
            .any(|t| t.functor().is_some_and(|f| CONNECTIVES.contains(&&**f)));
        if r.body.is_empty() || connective {
            return Err(TheoryError::UnsupportedRule(r.name.clone()));
        }
        let used: BTreeSet<Name> = r
            .body
            .iter()
            .chain(std::iter::once(&r.head))
            .flat_map(|t| t.vars())
            .collect();
        let mut tail = String::from("x");
        while used.contains(tail.as_str()) {
            tail.push('_');
        }
        let tail = Term::var(tail);
        let lhs = r
            .body
            .iter()
            .rev()
            .fold(tail.clone(), |acc, b| and(b.clone(), acc));
        axioms.push(Clause::new(r.name.clone(), lhs, and(r.head.clone(), tail))?);
    }
    let x = || Term::var("x");
    let y = || Term::var("y");
    axioms.push(Clause::new("l1", and(x(), y()), x())?);
    axioms.push(Clause::new("l2", and(x(), y()), y())?);
    Theory::new(Term::constant("S"), axioms, Some(goal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_term, parse_theory};

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn clause(s: &str) -> Clause {
        let (l, r) = s.split_once("->").unwrap();
        Clause::new("c", t(l), t(r)).unwrap()
    }

    #[test]
    fn apply_at_root_only() {
        let l1 = clause("And(x, y) -> x");
        assert_eq!(apply_clause(&l1, &t("Ancestor(Adam, Olga)")), None);
        let p1 = clause("x -> And(Parent(Adam, John), x)");
        assert_eq!(apply_clause(&p1, &t("S")), Some(t("And(Parent(Adam, John), S)")));
    }

    #[test]
    fn nonlinear_patterns_need_equal_subtrees() {
        let c = clause("P(x, x) -> x");
        assert_eq!(apply_clause(&c, &t("P(F(Z), F(Z))")), Some(t("F(Z)")));
        assert_eq!(apply_clause(&c, &t("P(F(Z), Z)")), None);
    }

    #[test]
    fn compose_examples() {
        let a = clause("P(x, y) -> x");
        let b = clause("R(x, y) -> y");
        let ab = compose_clauses(&a, &b).unwrap();
        assert!(ab.same_relation(&clause("P(R(x, y), z) -> y")));

        let a = clause("P(x, y) -> P(F(F(x)), G(y))");
        let b = clause("P(x, y) -> P(F(x), G(y))");
        let want = clause("P(x, y) -> P(F(F(F(x))), G(G(y)))");
        assert!(compose_clauses(&a, &b).unwrap().same_relation(&want));
        assert!(compose_clauses(&b, &a).unwrap().same_relation(&want));

        assert!(compose_clauses(&Clause::identity(), &a).unwrap().same_relation(&a));
        assert!(compose_clauses(&a, &Clause::identity()).unwrap().same_relation(&a));
    }

    #[test]
    fn compose_fails_on_clash() {
        let a = clause("P(x) -> Q(x)");
        let b = clause("R(x) -> x");
        assert_eq!(compose_clauses(&a, &b), None);
        // occurs check
        let a = clause("P(x) -> P(x, F(x))");
        let b = clause("P(y, y) -> y");
        assert_eq!(compose_clauses(&a, &b), None);
    }

    #[test]
    fn free_rhs_variable_rejected() {
        let err = Clause::new("a", t("P(x)"), t("P(F(y))")).unwrap_err();
        assert_eq!(
            err,
            TheoryError::FreeRhsVariable {
                axiom: "a".into(),
                var: "y".into()
            }
        );
    }

    #[test]
    fn proof_checking() {
        let th = parse_theory("start: S\nl1: And(x, y) -> x\n").unwrap();
        assert_eq!(check_proof(&th, &Proof::default()).unwrap(), t("S"));
        assert_eq!(
            check_proof(&th, &Proof::new(["l1"])),
            Err(ProofError::InvalidAt(1))
        );
        assert_eq!(
            check_proof(&th, &Proof::new(["zz"])),
            Err(ProofError::UnknownAxiom("zz".into()))
        );
    }

    #[test]
    fn horn_single_fact() {
        let th = horn_to_tpc(&[("q".into(), t("Q(A)"))], &[], t("Q(A)")).unwrap();
        assert_eq!(th.axioms.len(), 3);
        assert!(th.axioms[0].same_relation(&clause("x -> And(Q(A), x)")));
        assert_eq!(th.axioms[1].name, "l1");
        assert_eq!(th.axioms[2].name, "l2");
    }

    #[test]
    fn horn_empty_program() {
        let th = horn_to_tpc(&[], &[], t("S")).unwrap();
        assert_eq!(th.axiom_names(), vec!["l1", "l2"]);
        assert_eq!(th.start, t("S"));
    }

    #[test]
    fn horn_rejects_connectives() {
        let rule = HornRule {
            name: "r".into(),
            body: vec![t("Or(A, B)")],
            head: t("C"),
        };
        assert!(matches!(
            horn_to_tpc(&[], &[rule], t("C")),
            Err(TheoryError::UnsupportedRule(_))
        ));
    }

    #[test]
    fn deep_terms_drop_and_compare() {
        let mut a = Term::constant("Z");
        let mut b = Term::constant("Z");
        for _ in 0..200_000 {
            a = Term::app("F", vec![a]);
            b = Term::app("F", vec![b]);
        }
        assert_eq!(a, b);
        drop(a);
        drop(b);
    }

    #[test]
    fn root_invariant() {
        let th = parse_theory("start: P(Z)\na: P(x) -> P(F(x))\n").unwrap();
        assert_eq!(th.root_invariant(), Some(("P".into(), 1)));
        let th = parse_theory("start: S\nl1: And(x, y) -> x\n").unwrap();
        assert_eq!(th.root_invariant(), None);
    }
}
