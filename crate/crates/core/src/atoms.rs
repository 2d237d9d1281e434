//! Atoms relating subtrees of a start tree `t` and a goal tree `d`, and
//! conjunctions of atoms describing whole relations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::affine::{AffineExpr, Env};
use crate::error::SolverError;
use crate::path::{Path, SymbolicPath};
use crate::term::{match_term, Clause, Name, Subst, Term};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    /// `t` at the left path equals `d` at the right path.
    EqualsLR(SymbolicPath, SymbolicPath),
    /// `t` at the path matches the template; template variables are
    /// wildcards (repeated ones must match equal subtrees).
    GroundL(SymbolicPath, Term),
    /// `d` at the path equals the ground tree.
    GroundR(SymbolicPath, Term),
    EqualsLL(SymbolicPath, SymbolicPath),
    EqualsRR(SymbolicPath, SymbolicPath),
}

impl Atom {
    pub fn map_paths(&self, f: &impl Fn(&SymbolicPath) -> SymbolicPath) -> Atom {
        match self {
            Atom::EqualsLR(l, r) => Atom::EqualsLR(f(l), f(r)),
            Atom::GroundL(l, t) => Atom::GroundL(f(l), t.clone()),
            Atom::GroundR(r, t) => Atom::GroundR(f(r), t.clone()),
            Atom::EqualsLL(a, b) => Atom::EqualsLL(f(a), f(b)),
            Atom::EqualsRR(a, b) => Atom::EqualsRR(f(a), f(b)),
        }
    }

    pub fn map_exps(&self, f: &impl Fn(&AffineExpr) -> AffineExpr) -> Atom {
        self.map_paths(&|p| p.map_exps(f))
    }

    pub fn paths(&self) -> Vec<&SymbolicPath> {
        match self {
            Atom::EqualsLR(a, b) | Atom::EqualsLL(a, b) | Atom::EqualsRR(a, b) => vec![a, b],
            Atom::GroundL(a, _) | Atom::GroundR(a, _) => vec![a],
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        self.paths().into_iter().flat_map(|p| p.vars()).collect()
    }

    /// The path applied to `t`, if any.
    pub fn left(&self) -> Option<&SymbolicPath> {
        match self {
            Atom::EqualsLR(l, _) | Atom::GroundL(l, _) => Some(l),
            _ => None,
        }
    }

    /// The path applied to `d`, if any.
    pub fn right(&self) -> Option<&SymbolicPath> {
        match self {
            Atom::EqualsLR(_, r) | Atom::GroundR(r, _) => Some(r),
            _ => None,
        }
    }

    pub fn eval(&self, env: &Env, t: &Term, d: &Term) -> Result<bool, SolverError> {
        Ok(match self {
            Atom::EqualsLR(l, r) => match (l.apply(env, t), r.apply(env, d)) {
                (Some(a), Some(b)) => a == b,
                _ => false,
            },
            Atom::GroundL(l, tmpl) => match l.apply(env, t) {
                Some(a) => match_term(tmpl, a, &mut Subst::new()),
                None => false,
            },
            Atom::GroundR(r, g) => r.apply(env, d).is_some_and(|b| b == g),
            Atom::EqualsLL(..) | Atom::EqualsRR(..) => {
                return Err(SolverError::Unimplemented(format!("evaluation of {self}")))
            }
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::EqualsLR(a, b) => write!(f, "EqualsLR({a}, {b})"),
            Atom::GroundL(a, t) => write!(f, "GroundL({a}, {t})"),
            Atom::GroundR(a, t) => write!(f, "GroundR({a}, {t})"),
            Atom::EqualsLL(a, b) => write!(f, "EqualsLL({a}, {b})"),
            Atom::EqualsRR(a, b) => write!(f, "EqualsRR({a}, {b})"),
        }
    }
}

/// One member of a conjunction: a plain atom or the intersection of a
/// body over `var = lower..=upper`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Conjunct {
    Atom(Atom),
    IterGroup {
        var: String,
        lower: AffineExpr,
        upper: AffineExpr,
        body: Vec<Atom>,
    },
}

impl Conjunct {
    pub fn vars(&self) -> BTreeSet<String> {
        match self {
            Conjunct::Atom(a) => a.vars(),
            Conjunct::IterGroup { var, lower, upper, body } => {
                let mut out: BTreeSet<String> = body.iter().flat_map(Atom::vars).collect();
                out.remove(var);
                out.extend(lower.vars());
                out.extend(upper.vars());
                out
            }
        }
    }
}

/// A conjunction of atoms over free index variables.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct AtomSet {
    pub conjuncts: Vec<Conjunct>,
    /// Declared index variables; every variable used outside a group's own
    /// iteration variable is listed here.
    pub free_vars: Vec<String>,
}

impl AtomSet {
    pub fn from_atoms(atoms: Vec<Atom>) -> AtomSet {
        let mut s = AtomSet {
            conjuncts: atoms.into_iter().map(Conjunct::Atom).collect(),
            free_vars: Vec::new(),
        };
        s.free_vars = s.used_vars().into_iter().collect();
        s
    }

    pub fn used_vars(&self) -> BTreeSet<String> {
        self.conjuncts.iter().flat_map(Conjunct::vars).collect()
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.conjuncts.iter().filter_map(|c| match c {
            Conjunct::Atom(a) => Some(a),
            _ => None,
        })
    }

    pub fn eval(&self, env: &Env, t: &Term, d: &Term) -> Result<bool, SolverError> {
        for c in &self.conjuncts {
            match c {
                Conjunct::Atom(a) => {
                    if !a.eval(env, t, d)? {
                        return Ok(false);
                    }
                }
                Conjunct::IterGroup { var, lower, upper, body } => {
                    let (Some(lo), Some(hi)) = (lower.eval(env), upper.eval(env)) else {
                        return Ok(false);
                    };
                    let mut inner = env.clone();
                    for i in lo..=hi {
                        inner.scalars.insert(var.clone(), i);
                        for a in body {
                            if !a.eval(&inner, t, d)? {
                                return Ok(false);
                            }
                        }
                    }
                }
            }
        }
        Ok(true)
    }
}

impl fmt::Display for AtomSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Intersect(")?;
        for c in &self.conjuncts {
            match c {
                Conjunct::Atom(a) => writeln!(f, "  {a},")?,
                Conjunct::IterGroup { var, lower, upper, body } => {
                    writeln!(f, "  IterIntersect({var} = {lower}..{upper},")?;
                    for a in body {
                        writeln!(f, "    {a},")?;
                    }
                    writeln!(f, "  ),")?;
                }
            }
        }
        write!(f, ")")
    }
}

pub fn eval_atomset(s: &AtomSet, env: &Env, t: &Term, d: &Term) -> Result<bool, SolverError> {
    s.eval(env, t, d)
}

fn positions(t: &Term) -> Vec<(Vec<usize>, Term)> {
    let mut out = Vec::new();
    t.walk_positions(&mut |p, s| out.push((p.to_vec(), s.clone())));
    out
}

fn sym(t: &Term, pos: &[usize]) -> SymbolicPath {
    // positions come from walking `t`
    SymbolicPath::from_path(&Path::to_position(t, pos).unwrap_or_default())
}

/// Splits a clause into atoms whose conjunction holds on `(t, d)` exactly
/// when applying the clause to `t` yields `d`.
pub fn split_axiom(c: &Clause) -> AtomSet {
    let lhs = positions(&c.lhs);
    let rhs = positions(&c.rhs);
    let kept: BTreeSet<Name> = c.rhs.vars().into_iter().collect();
    let occurrences = |ps: &[(Vec<usize>, Term)], v: &Name| -> Vec<Vec<usize>> {
        ps.iter()
            .filter(|(_, s)| s.var_name() == Some(v))
            .map(|(p, _)| p.clone())
            .collect()
    };
    let mut atoms = Vec::new();
    for v in c.rhs.vars() {
        for pl in occurrences(&lhs, &v) {
            for pr in occurrences(&rhs, &v) {
                atoms.push(Atom::EqualsLR(sym(&c.lhs, &pl), sym(&c.rhs, &pr)));
            }
        }
    }
    let is_prefix = |a: &[usize], b: &[usize]| b.len() >= a.len() && b[..a.len()] == *a;
    // maximal subterms of the left side holding no kept variable
    let mut templates: Vec<(Vec<usize>, Term)> = Vec::new();
    for (p, s) in &lhs {
        let free = s.vars().iter().all(|v| !kept.contains(v));
        if free && !templates.iter().any(|(q, _)| is_prefix(q, p)) {
            templates.push((p.clone(), s.clone()));
        }
    }
    for (p, s) in &templates {
        if !s.is_var() {
            atoms.push(Atom::GroundL(sym(&c.lhs, p), s.clone()));
        }
    }
    let mut grounds: Vec<Vec<usize>> = Vec::new();
    for (p, s) in &rhs {
        if s.is_ground() && !grounds.iter().any(|q| is_prefix(q, p)) {
            grounds.push(p.clone());
            atoms.push(Atom::GroundR(sym(&c.rhs, p), s.clone()));
        }
    }
    // dropped variables shared between different templates
    let mut owner: BTreeMap<Name, Vec<usize>> = BTreeMap::new();
    for (i, (_, s)) in templates.iter().enumerate() {
        for v in s.vars() {
            owner.entry(v).or_default().push(i);
        }
    }
    for (v, owners) in owner {
        let occ = occurrences(&lhs, &v);
        let distinct: BTreeSet<usize> = owners.into_iter().collect();
        if distinct.len() > 1 {
            for w in occ.windows(2) {
                atoms.push(Atom::EqualsLL(sym(&c.lhs, &w[0]), sym(&c.lhs, &w[1])));
            }
        }
    }
    AtomSet::from_atoms(atoms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_term;
    use crate::term::apply_clause;
    use proptest::prelude::*;

    fn clause(s: &str) -> Clause {
        let (l, r) = s.split_once("->").unwrap();
        Clause::new("c", parse_term(l).unwrap(), parse_term(r).unwrap()).unwrap()
    }

    fn shown(s: &AtomSet) -> Vec<String> {
        s.conjuncts
            .iter()
            .map(|c| match c {
                Conjunct::Atom(a) => a.to_string(),
                _ => unreachable!(),
            })
            .collect()
    }

    #[test]
    fn swap_axiom_split() {
        let s = split_axiom(&clause("P(R(x, z), y) -> P(x, R(y, z))"));
        assert_eq!(
            shown(&s),
            vec![
                "EqualsLR([P(R(x, y), z)->x], [P(x, y)->x])",
                "EqualsLR([P(x, y)->y], [P(x, R(y, z))->y])",
                "EqualsLR([P(R(x, y), z)->y], [P(x, R(y, z))->z])",
            ]
        );
    }

    #[test]
    fn ground_parts() {
        let s = split_axiom(&clause("x -> And(Parent(Adam, John), x)"));
        assert_eq!(
            shown(&s),
            vec![
                "EqualsLR([x->x], [And(x, y)->y])",
                "GroundR([And(x, y)->x], Parent(Adam, John))",
            ]
        );
        let s = split_axiom(&clause("x -> x"));
        assert_eq!(shown(&s), vec!["EqualsLR([x->x], [x->x])"]);
        let s = split_axiom(&clause("P(Z, x) -> Q"));
        assert_eq!(shown(&s), vec!["GroundL([x->x], P(Z, x))", "GroundR([x->x], Q)"]);
    }

    #[test]
    fn dropped_repeated_variable() {
        let s = split_axiom(&clause("P(F(a), G(a), x) -> x"));
        let env = Env::new();
        let t = parse_term("P(F(Z), G(Z), Z)").unwrap();
        let d = parse_term("Z").unwrap();
        assert!(matches!(s.eval(&env, &t, &d), Err(SolverError::Unimplemented(_))));
    }

    fn arb_term(vars: bool) -> impl Strategy<Value = Term> {
        let leaf = if vars {
            prop_oneof![
                Just(Term::constant("Z")),
                Just(Term::var("x")),
                Just(Term::var("y")),
            ]
            .boxed()
        } else {
            Just(Term::constant("Z")).boxed()
        };
        leaf.prop_recursive(3, 10, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Term::app("F", vec![a])),
                (inner.clone(), inner).prop_map(|(a, b)| Term::app("R", vec![a, b])),
            ]
        })
    }

    proptest! {
        #[test]
        fn split_agrees_with_apply(l in arb_term(true), r in arb_term(true), t in arb_term(false), d in arb_term(false)) {
            let lv: BTreeSet<_> = l.vars().into_iter().collect();
            prop_assume!(r.vars().iter().all(|v| lv.contains(v)));
            let c = Clause::new("c", l, r).unwrap();
            let s = split_axiom(&c);
            let env = Env::new();
            // a dropped variable repeated across templates needs EqualsLL
            if let Ok(got) = s.eval(&env, &t, &d) {
                prop_assert_eq!(got, apply_clause(&c, &t).as_ref() == Some(&d));
            }
            if let Some(d2) = apply_clause(&c, &t) {
                if let Ok(got) = s.eval(&env, &t, &d2) {
                    prop_assert!(got);
                }
            }
        }
    }
}
