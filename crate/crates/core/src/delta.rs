//! Reduction of iterative schemes by removing repetitions.
//!
//! Rewrites come from a fixed catalog. Normalization steps are plain
//! identities of regular expressions over relations; the others are each
//! justified by an inclusion query answered through [`sigma`],
//! [`includes`] and the condition solver, and an inconclusive answer never
//! rewrites.

use std::collections::HashMap;
use std::fmt;

use log::{debug, warn};

use crate::error::SolverError;
use crate::inclu::{includes, is_scalar_system};
use crate::math::{eliminate, ConditionSystem, Region};
use crate::scheme::{reduce_specific, IterExpr};
use crate::sigma::sigma;
use crate::term::Theory;

/// Default cap on the number of rewrites in one reduction.
pub const MAX_REWRITES: usize = 32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive(String),
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Holds => write!(f, "holds"),
            Verdict::Fails => write!(f, "fails"),
            Verdict::Inconclusive(why) => write!(f, "inconclusive ({why})"),
        }
    }
}

/// An answered query with the evidence behind it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Justified {
    pub query: String,
    pub verdict: Verdict,
    pub system: Option<ConditionSystem>,
    pub region: Option<Region>,
}

/// `left ⊆ right` as relations, decided by a Universal region.
pub fn inclusion(th: &Theory, left: &IterExpr, right: &IterExpr) -> Justified {
    let query = format!("INCLUDES({left}, {right})");
    let mut j = Justified {
        query,
        verdict: Verdict::Fails,
        system: None,
        region: None,
    };
    let run = || -> Result<(ConditionSystem, Region), SolverError> {
        let f = sigma(th, left)?;
        let g = sigma(th, right)?;
        let sys = includes(&f, &g)?;
        if !is_scalar_system(&sys) {
            return Err(SolverError::Unsupported("inclusion needs multi-index solving".into()));
        }
        let region = eliminate(&sys)?.region;
        Ok((sys, region))
    };
    match run() {
        Ok((sys, region)) => {
            if region.is_universal() {
                j.verdict = Verdict::Holds;
            }
            j.system = Some(sys);
            j.region = Some(region);
        }
        Err(e) => j.verdict = Verdict::Inconclusive(e.to_string()),
    }
    debug!("{} -> {}", j.query, j.verdict);
    j
}

/// Whether `a·γ ⊆ γ`.
pub fn test_absorption(th: &Theory, a: &str, gamma: &IterExpr) -> Verdict {
    absorption(th, a, gamma).verdict
}

fn absorption(th: &Theory, a: &str, gamma: &IterExpr) -> Justified {
    let left = IterExpr::dot([IterExpr::axiom(a), gamma.clone()]);
    inclusion(th, &left, gamma)
}

/// Whether `a·b` and `b·a` denote the same relation: equal composed
/// clauses, or inclusions both ways.
pub fn test_commutation(th: &Theory, a: &str, b: &str) -> Verdict {
    commutation(th, a, b).verdict
}

fn commutation(th: &Theory, a: &str, b: &str) -> Justified {
    let query = format!("COMMUTES({a}, {b})");
    let ab = reduce_specific(th, &[a.to_string(), b.to_string()]);
    let ba = reduce_specific(th, &[b.to_string(), a.to_string()]);
    if let (Ok(x), Ok(y)) = (&ab, &ba) {
        if x.same_relation(y) {
            return Justified {
                query,
                verdict: Verdict::Holds,
                system: None,
                region: None,
            };
        }
    }
    let e_ab = IterExpr::dot([IterExpr::axiom(a), IterExpr::axiom(b)]);
    let e_ba = IterExpr::dot([IterExpr::axiom(b), IterExpr::axiom(a)]);
    let there = inclusion(th, &e_ab, &e_ba);
    let back = inclusion(th, &e_ba, &e_ab);
    let verdict = match (&there.verdict, &back.verdict) {
        (Verdict::Holds, Verdict::Holds) => Verdict::Holds,
        (Verdict::Inconclusive(w), _) | (_, Verdict::Inconclusive(w)) => Verdict::Inconclusive(w.clone()),
        _ => Verdict::Fails,
    };
    Justified {
        query,
        verdict,
        system: there.system,
        region: there.region,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    /// Identities: `x*.x* = x*`, `(x*)* = x*`, distribution of `|` over
    /// `.`, and `x*.x.Y | Y = x*.Y`.
    Normalize,
    /// `(a*.B)* = B*.a*.B | eps` when `a.B.a*.B ⊆ B.a*.B`.
    StarAbsorption,
    /// `(A.c)* = c*.A.c*` when `(A.c).(A.c) ⊆ c.(A.c) | (A.c).c`.
    Swap,
    /// `a*.b = b.a*` when `a` and `b` commute.
    Commute,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::Normalize => "N",
            Rule::StarAbsorption => "R1",
            Rule::Swap => "R2",
            Rule::Commute => "R3",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub rule: Rule,
    /// Child positions from the root to the rewritten node.
    pub path: Vec<usize>,
    pub before: IterExpr,
    pub after: IterExpr,
    pub justification: Option<Justified>,
    /// The whole scheme after this step.
    pub scheme: IterExpr,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReductionTrace {
    pub steps: Vec<Step>,
}

impl ReductionTrace {
    /// Re-applies the recorded rewrites to `original`.
    pub fn replay(&self, original: &IterExpr) -> Result<IterExpr, SolverError> {
        let mut cur = original.clone();
        for (i, s) in self.steps.iter().enumerate() {
            if node_at(&cur, &s.path) != Some(&s.before) {
                return Err(SolverError::InternalMismatch(format!("step {} does not apply to {cur}", i + 1)));
            }
            cur = replace_at(&cur, &s.path, s.after.clone());
        }
        Ok(cur)
    }
}

impl fmt::Display for ReductionTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.steps.iter().enumerate() {
            write!(f, "{}. [{}] {} => {}", i + 1, s.rule.id(), s.before, s.after)?;
            if let Some(j) = &s.justification {
                write!(f, " by {}: {}", j.query, j.verdict)?;
                if let Some(r) = &j.region {
                    write!(f, ", region {r}")?;
                }
            }
            writeln!(f)?;
            writeln!(f, "   scheme: {}", s.scheme)?;
        }
        Ok(())
    }
}

fn children(e: &IterExpr) -> Vec<&IterExpr> {
    match e {
        IterExpr::Dot(xs) | IterExpr::Alt(xs) => xs.iter().collect(),
        IterExpr::Star(b) => vec![b],
        _ => Vec::new(),
    }
}

fn node_at<'a>(e: &'a IterExpr, path: &[usize]) -> Option<&'a IterExpr> {
    match path.split_first() {
        None => Some(e),
        Some((i, rest)) => node_at(children(e).get(*i)?, rest),
    }
}

fn replace_at(e: &IterExpr, path: &[usize], new: IterExpr) -> IterExpr {
    let Some((i, rest)) = path.split_first() else {
        return new;
    };
    match e {
        IterExpr::Dot(xs) | IterExpr::Alt(xs) => {
            let parts: Vec<IterExpr> = xs
                .iter()
                .enumerate()
                .map(|(j, x)| if j == *i { replace_at(x, rest, new.clone()) } else { x.clone() })
                .collect();
            if matches!(e, IterExpr::Dot(_)) {
                IterExpr::dot(parts)
            } else {
                IterExpr::alt(parts)
            }
        }
        IterExpr::Star(b) => IterExpr::star(replace_at(b, rest, new)),
        _ => e.clone(),
    }
}

fn star_of_axiom(e: &IterExpr) -> Option<&str> {
    match e {
        IterExpr::Star(b) => match &**b {
            IterExpr::Axiom(a) => Some(a),
            _ => None,
        },
        _ => None,
    }
}

fn normalize_node(e: &IterExpr) -> Option<IterExpr> {
    match e {
        IterExpr::Star(b) => match &**b {
            IterExpr::Star(_) => Some((**b).clone()),
            _ => None,
        },
        IterExpr::Dot(xs) => {
            for i in 0..xs.len().saturating_sub(1) {
                if matches!(xs[i], IterExpr::Star(_)) && xs[i] == xs[i + 1] {
                    let mut ys = xs.clone();
                    ys.remove(i + 1);
                    return Some(IterExpr::dot(ys));
                }
            }
            let i = xs.iter().position(|x| matches!(x, IterExpr::Alt(_)))?;
            let IterExpr::Alt(bs) = &xs[i] else { return None };
            Some(IterExpr::alt(bs.iter().map(|b| {
                IterExpr::dot(xs[..i].iter().cloned().chain([b.clone()]).chain(xs[i + 1..].iter().cloned()))
            })))
        }
        IterExpr::Alt(bs) => {
            for (i, b) in bs.iter().enumerate() {
                let IterExpr::Dot(xs) = b else { continue };
                let IterExpr::Star(x) = &xs[0] else { continue };
                if xs.get(1) != Some(&**x) {
                    continue;
                }
                let rest = IterExpr::dot(xs[2..].iter().cloned());
                let Some(j) = bs.iter().position(|c| *c == rest) else { continue };
                let merged = IterExpr::dot([xs[0].clone(), rest]);
                let out = bs
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != j)
                    .map(|(k, c)| if k == i { merged.clone() } else { c.clone() });
                return Some(IterExpr::alt(out));
            }
            None
        }
        _ => None,
    }
}

struct Reducer<'a> {
    th: &'a Theory,
    cache: HashMap<String, Justified>,
}

impl Reducer<'_> {
    fn cached(&mut self, key: String, run: impl FnOnce(&Theory) -> Justified) -> Justified {
        if let Some(j) = self.cache.get(&key) {
            return j.clone();
        }
        let j = run(self.th);
        self.cache.insert(key, j.clone());
        j
    }

    fn star_absorption(&mut self, e: &IterExpr) -> Option<(IterExpr, Justified)> {
        let IterExpr::Star(body) = e else { return None };
        let IterExpr::Dot(xs) = &**body else { return None };
        let a = star_of_axiom(&xs[0])?;
        let b = IterExpr::dot(xs[1..].iter().cloned());
        let gamma = IterExpr::dot([b.clone(), xs[0].clone(), b.clone()]);
        let j = self.cached(format!("abs {a} {gamma}"), |th| absorption(th, a, &gamma));
        if !j.verdict.holds() {
            return None;
        }
        let out = IterExpr::alt([IterExpr::dot([IterExpr::star(b.clone()), xs[0].clone(), b]), IterExpr::Eps]);
        Some((out, j))
    }

    fn swap(&mut self, e: &IterExpr) -> Option<(IterExpr, Justified)> {
        let IterExpr::Star(body) = e else { return None };
        let IterExpr::Dot(xs) = &**body else { return None };
        let (IterExpr::Axiom(c), init) = xs.split_last()? else { return None };
        let alpha = IterExpr::dot(init.iter().cloned());
        if alpha.star_depth() == 0 {
            return None;
        }
        let unit = (**body).clone();
        let c = IterExpr::axiom(c.clone());
        let left = IterExpr::dot([unit.clone(), unit.clone()]);
        let right = IterExpr::alt([IterExpr::dot([c.clone(), unit.clone()]), IterExpr::dot([unit, c.clone()])]);
        let j = self.cached(format!("swap {left} {right}"), |th| inclusion(th, &left, &right));
        if !j.verdict.holds() {
            return None;
        }
        Some((IterExpr::dot([IterExpr::star(c.clone()), alpha, IterExpr::star(c)]), j))
    }

    fn commute(&mut self, e: &IterExpr) -> Option<(IterExpr, Justified)> {
        let IterExpr::Dot(xs) = e else { return None };
        for i in 0..xs.len().saturating_sub(1) {
            let Some(a) = star_of_axiom(&xs[i]) else { continue };
            let IterExpr::Axiom(b) = &xs[i + 1] else { continue };
            if a == b {
                continue;
            }
            let j = self.cached(format!("comm {a} {b}"), |th| commutation(th, a, b));
            if j.verdict.holds() {
                let mut ys = xs.clone();
                ys.swap(i, i + 1);
                return Some((IterExpr::dot(ys), j));
            }
        }
        None
    }

    fn rewrite_node(&mut self, e: &IterExpr) -> Option<(Rule, IterExpr, Option<Justified>)> {
        if let Some(n) = normalize_node(e) {
            return Some((Rule::Normalize, n, None));
        }
        if let Some((n, j)) = self.star_absorption(e) {
            return Some((Rule::StarAbsorption, n, Some(j)));
        }
        if let Some((n, j)) = self.swap(e) {
            return Some((Rule::Swap, n, Some(j)));
        }
        if let Some((n, j)) = self.commute(e) {
            return Some((Rule::Commute, n, Some(j)));
        }
        None
    }

    /// The first applicable rewrite in pre-order.
    fn find(&mut self, e: &IterExpr, path: &mut Vec<usize>) -> Option<(Vec<usize>, Rule, IterExpr, Option<Justified>)> {
        if let Some((rule, n, j)) = self.rewrite_node(e) {
            return Some((path.clone(), rule, n, j));
        }
        for (i, c) in children(e).into_iter().enumerate() {
            path.push(i);
            let found = self.find(c, path);
            path.pop();
            if found.is_some() {
                return found;
            }
        }
        None
    }
}

/// Rewrites `e` to a fixpoint of the catalog (at most `limit` steps).
pub fn reduce_scheme_with_limit(th: &Theory, e: &IterExpr, limit: usize) -> (IterExpr, ReductionTrace) {
    let mut r = Reducer {
        th,
        cache: HashMap::new(),
    };
    let mut cur = e.clone();
    let mut trace = ReductionTrace::default();
    while trace.steps.len() < limit {
        let Some((path, rule, after, justification)) = r.find(&cur, &mut Vec::new()) else {
            break;
        };
        let before = node_at(&cur, &path).cloned().unwrap_or(IterExpr::Eps);
        cur = replace_at(&cur, &path, after.clone());
        debug!("[{}] {before} => {after}: {cur}", rule.id());
        trace.steps.push(Step {
            rule,
            path,
            before,
            after,
            justification,
            scheme: cur.clone(),
        });
    }
    if trace.steps.len() == limit {
        warn!("reduction of {e} stopped after {limit} rewrites");
    }
    (cur, trace)
}

pub fn reduce_scheme(th: &Theory, e: &IterExpr) -> (IterExpr, ReductionTrace) {
    reduce_scheme_with_limit(th, e, MAX_REWRITES)
}

/// The pairwise order relation among axioms is not a weak order, so the
/// chosen linearization is arbitrary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeakOrderWarning {
    pub a: String,
    pub b: String,
    pub c: String,
}

impl fmt::Display for WeakOrderWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} commutes with {} and {} with {}, but {} does not commute with {}",
            self.a, self.b, self.b, self.c, self.a, self.c
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AxiomOrder {
    pub order: Vec<String>,
    pub warning: Option<WeakOrderWarning>,
}

/// Orders axioms for incremental scheme construction. Commuting axioms
/// tie; ties and non-commuting pairs keep declaration order. The result
/// carries a warning when commutation is not transitive.
pub fn order_axioms(th: &Theory) -> AxiomOrder {
    let names = th.axiom_names();
    let n = names.len();
    let mut tie = vec![vec![false; n]; n];
    for i in 0..n {
        tie[i][i] = true;
        for j in i + 1..n {
            let t = test_commutation(th, &names[i], &names[j]).holds();
            tie[i][j] = t;
            tie[j][i] = t;
        }
    }
    let mut warning = None;
    'outer: for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                if a != c && tie[a][b] && tie[b][c] && !tie[a][c] {
                    let w = WeakOrderWarning {
                        a: names[a].clone(),
                        b: names[b].clone(),
                        c: names[c].clone(),
                    };
                    warn!("axiom order: {w}");
                    warning = Some(w);
                    break 'outer;
                }
            }
        }
    }
    AxiomOrder { order: names, warning }
}
