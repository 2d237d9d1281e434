//! Tuning a symbolic characteristic function against a concrete pair of
//! trees: atoms that match in a single way yield linear equations over the
//! index lengths, the equations are solved, iterated groups are unrolled
//! once their bounds are known, and the resulting canonical index is
//! checked against the function.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use num_traits::{Signed, Zero};

use crate::affine::{AffineExpr, IndexTerm};
use crate::atoms::{Atom, Conjunct};
use crate::error::SolverError;
use crate::math::{self, ConditionSystem, Kind, Role};
use crate::path::SymbolicPath;
use crate::scheme::{enumerate_indices, instantiate, IndexShape, MultiIndex};
use crate::sigma::{Case, SymbolicCharFn};
use crate::term::{match_term, replay, Proof, Subst, Term, Theory};

type Q = Ratio<i64>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TuneResult {
    /// Canonical index relating the pair; `None` when no case matches.
    pub assignment: Option<MultiIndex>,
    /// Index of the case that produced the assignment.
    pub case: Option<usize>,
    /// Equations obtained from matched atoms, over the original terms.
    pub equations: ConditionSystem,
}

enum Outcome {
    Equation(AffineExpr, i64),
    NoMatch,
    Pending,
}

/// Depth of a tree (a leaf has depth 0), without recursion.
fn depth(t: &Term) -> i64 {
    let mut best = 0;
    let mut stack = vec![(t, 0i64)];
    while let Some((n, h)) = stack.pop() {
        best = best.max(h);
        for a in n.args() {
            stack.push((a, h + 1));
        }
    }
    best
}

/// Terms of `e` whose subscripts are all constant.
fn unknowns(e: &AffineExpr, out: &mut BTreeSet<IndexTerm>) -> bool {
    let mut ok = true;
    for t in e.terms.keys() {
        if t.path.iter().all(AffineExpr::is_constant) {
            out.insert(t.clone());
        } else {
            ok = false;
        }
    }
    ok
}

fn atom_unknowns(a: &Atom) -> Option<BTreeSet<IndexTerm>> {
    let mut out = BTreeSet::new();
    for p in a.paths() {
        for s in p.segments() {
            if !unknowns(&s.exp, &mut out) {
                return None;
            }
        }
    }
    Some(out)
}

fn substitute(e: &AffineExpr, known: &BTreeMap<IndexTerm, i64>) -> AffineExpr {
    e.map_terms(&|t| known.get(t).map(|v| AffineExpr::constant(*v)))
}

/// Steps of a path before its only symbolic segment, the segment itself
/// and the steps after it.
fn split_single(p: &SymbolicPath) -> Option<(SymbolicPath, usize, SymbolicPath)> {
    let segs = p.segments();
    let sym: Vec<usize> = (0..segs.len()).filter(|&i| !segs[i].exp.is_constant()).collect();
    let [i] = sym.as_slice() else { return None };
    Some((
        SymbolicPath::from_segments(segs[..*i].to_vec()),
        *i,
        SymbolicPath::from_segments(segs[i + 1..].to_vec()),
    ))
}

/// Exponent values `k` for which `pre.period^k.suf` applied to `tree`
/// satisfies `ok`, scanning until the period stops applying.
fn scan(p: &SymbolicPath, tree: &Term, ok: &dyn Fn(&Term) -> bool, first_only: bool) -> Vec<i64> {
    let (pre, i, suf) = split_single(p).expect("single symbolic segment");
    let env = crate::affine::Env::new();
    let period = &p.segments()[i].period;
    let mut hits = Vec::new();
    let Some(mut cur) = pre.apply(&env, tree) else { return hits };
    let mut k = 0;
    loop {
        if suf.apply(&env, cur).is_some_and(ok) {
            hits.push(k);
            if first_only {
                break;
            }
        }
        let mut next = Some(cur);
        for st in period {
            next = next.and_then(|x| st.apply(x));
        }
        match next {
            Some(n) => cur = n,
            None => break,
        }
        k += 1;
    }
    hits
}

fn symbolic_segments(a: &Atom) -> usize {
    a.paths()
        .iter()
        .map(|p| p.segments().iter().filter(|s| !s.exp.is_constant()).count())
        .sum()
}

/// An atom with exactly one symbolic segment: walks the segment once.
fn tune_segment(a: &Atom, t: &Term, d: &Term) -> Outcome {
    let env = crate::affine::Env::new();
    let exp_of = |p: &SymbolicPath| {
        let (_, i, _) = split_single(p).expect("single symbolic segment");
        p.segments()[i].exp.clone()
    };
    let equation = |exp: AffineExpr, hits: Vec<i64>| match hits.as_slice() {
        [] => Outcome::NoMatch,
        [k] => Outcome::Equation(exp, *k),
        _ => Outcome::Pending,
    };
    match a {
        Atom::EqualsLR(l, r) => {
            if l.is_concrete() {
                let Some(target) = l.apply(&env, t) else { return Outcome::NoMatch };
                // subterm sizes strictly decrease along a path, so at most
                // one repetition count can reach the target
                equation(exp_of(r), scan(r, d, &|x| x == target, true))
            } else {
                let Some(target) = r.apply(&env, d) else { return Outcome::NoMatch };
                equation(exp_of(l), scan(l, t, &|x| x == target, true))
            }
        }
        Atom::GroundR(r, g) => equation(exp_of(r), scan(r, d, &|x| x == g, true)),
        Atom::GroundL(l, tmpl) => {
            let hits = scan(l, t, &|x| match_term(tmpl, x, &mut Subst::new()), false);
            equation(exp_of(l), hits)
        }
        Atom::EqualsLL(..) | Atom::EqualsRR(..) => Outcome::Pending,
    }
}

/// An atom over a single unknown: tries every value the tree depths allow.
fn tune_single_unknown(a: &Atom, u: &IndexTerm, t: &Term, d: &Term, bound: i64) -> Outcome {
    let env = crate::affine::Env::new();
    let mut hi = bound;
    for p in a.paths() {
        for s in p.segments() {
            let c = s.exp.coeff(u);
            if c > 0 {
                hi = hi.min((bound - s.exp.constant).div_euclid(c));
            } else if c < 0 {
                hi = hi.min(s.exp.constant.div_euclid(-c));
            }
        }
    }
    let mut hits = Vec::new();
    for v in 0..=hi.max(-1) {
        let known = BTreeMap::from([(u.clone(), v)]);
        let inst = a.map_exps(&|e| substitute(e, &known));
        match inst.eval(&env, t, d) {
            Ok(true) => hits.push(v),
            Ok(false) => {}
            Err(_) => return Outcome::Pending,
        }
        if hits.len() > 1 {
            return Outcome::Pending;
        }
    }
    match hits.as_slice() {
        [] => Outcome::NoMatch,
        [v] => Outcome::Equation(AffineExpr::term(u.clone()), *v),
        _ => Outcome::Pending,
    }
}

enum Reduced {
    Values(BTreeMap<IndexTerm, i64>),
    Inconsistent,
}

/// Values fixed by the equations, by exact row reduction. Multi-term rows
/// that stay unresolved are left in `rows`.
fn determined(rows: &mut Vec<(AffineExpr, i64)>) -> Reduced {
    let terms: Vec<IndexTerm> = rows
        .iter()
        .flat_map(|(e, _)| e.terms.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut m: Vec<Vec<Q>> = rows
        .iter()
        .map(|(e, v)| {
            let mut r: Vec<Q> = terms.iter().map(|t| Q::from_integer(e.coeff(t))).collect();
            r.push(Q::from_integer(v - e.constant));
            r
        })
        .collect();
    let n = terms.len();
    let mut lead = 0;
    for col in 0..n {
        let Some(p) = (lead..m.len()).find(|&r| !m[r][col].is_zero()) else { continue };
        m.swap(lead, p);
        let pv = m[lead][col];
        for x in m[lead].iter_mut() {
            *x /= pv;
        }
        for r in 0..m.len() {
            if r != lead && !m[r][col].is_zero() {
                let f = m[r][col];
                for c in 0..=n {
                    let sub = f * m[lead][c];
                    m[r][c] -= sub;
                }
            }
        }
        lead += 1;
    }
    let mut values = BTreeMap::new();
    let mut rest = Vec::new();
    for r in &m {
        let nz: Vec<usize> = (0..n).filter(|&c| !r[c].is_zero()).collect();
        match nz.as_slice() {
            [] if !r[n].is_zero() => return Reduced::Inconsistent,
            [] => {}
            [c] => {
                let v = r[n] / r[*c];
                if !v.is_integer() || v.is_negative() {
                    return Reduced::Inconsistent;
                }
                values.insert(terms[*c].clone(), v.to_integer());
            }
            _ => {
                let lcm = nz.iter().chain([&n]).fold(1i64, |acc, &c| num_integer::lcm(acc, *r[c].denom()));
                let mut e = AffineExpr::zero();
                for &c in &nz {
                    e.add_term(terms[c].clone(), (r[c] * lcm).to_integer());
                }
                rest.push((e, (r[n] * lcm).to_integer()));
            }
        }
    }
    *rows = rest;
    Reduced::Values(values)
}

fn term_name(i: usize) -> String {
    format!("x{i}")
}

/// Least natural solution of the remaining rows and guards, with every
/// unknown bounded by `bound`.
fn least_solution(
    rows: &[(AffineExpr, i64)],
    guards: &[AffineExpr],
    free: &BTreeSet<IndexTerm>,
    bound: i64,
) -> Result<Option<BTreeMap<IndexTerm, i64>>, SolverError> {
    let names: BTreeMap<&IndexTerm, String> =
        free.iter().enumerate().map(|(i, t)| (t, term_name(i))).collect();
    let rename = |e: &AffineExpr| e.map_terms(&|t| names.get(t).map(|n| AffineExpr::var(n.clone())));
    let mut sys = ConditionSystem::new();
    for n in names.values() {
        sys.declare(n.clone(), Role::Existential, Kind::Scalar);
        sys.inequalities.push(AffineExpr::constant(bound) - AffineExpr::var(n.clone()));
    }
    for (e, v) in rows {
        sys.equations.push((rename(e), AffineExpr::constant(*v)));
    }
    for g in guards {
        sys.inequalities.push(rename(g));
    }
    Ok(math::solve_concrete(&sys)?.map(|sol| {
        names
            .iter()
            .map(|(t, n)| ((*t).clone(), sol.get(n).copied().unwrap_or(0)))
            .collect()
    }))
}

fn equations_system(eqs: &[(AffineExpr, i64)]) -> ConditionSystem {
    let mut sys = ConditionSystem::new();
    let mut seen: BTreeMap<String, Kind> = BTreeMap::new();
    for (e, _) in eqs {
        for t in e.terms.keys() {
            let k = if t.is_scalar() { Kind::Scalar } else { Kind::MultiIndex };
            let slot = seen.entry(t.var.clone()).or_insert(k);
            if k == Kind::MultiIndex {
                *slot = k;
            }
        }
    }
    for (v, k) in seen {
        sys.declare(v, Role::Existential, k);
    }
    for (e, v) in eqs {
        sys.equations.push((e.clone(), AffineExpr::constant(*v)));
    }
    sys
}

struct Tuner<'a> {
    f: &'a SymbolicCharFn,
    t: &'a Term,
    d: &'a Term,
    bound: i64,
    known: BTreeMap<IndexTerm, i64>,
    used: Vec<(AffineExpr, i64)>,
}

impl Tuner<'_> {
    /// Values for every length the case mentions; `None` on a mismatch.
    fn solve_case(&mut self, case: &Case) -> Result<Option<()>, SolverError> {
        let mut pending: Vec<Atom> = Vec::new();
        let mut groups = Vec::new();
        for c in &case.atoms.conjuncts {
            match c {
                Conjunct::Atom(a) => pending.push(a.clone()),
                Conjunct::IterGroup { var, lower, upper, body } => {
                    groups.push((var.clone(), lower.clone(), upper.clone(), body.clone()))
                }
            }
        }
        let mut rows: Vec<(AffineExpr, i64)> = Vec::new();
        loop {
            let mut progress = false;
            let known = &self.known;
            let mut current: Vec<Atom> =
                pending.drain(..).map(|a| a.map_exps(&|e| substitute(e, known))).collect();
            // single-segment atoms first: they are tuned by one walk
            current.sort_by_key(|a| symbolic_segments(a) != 1);
            for a in current {
                let outcome = match symbolic_segments(&a) {
                    0 => match a.eval(&crate::affine::Env::new(), self.t, self.d) {
                        Ok(true) => {
                            progress = true;
                            continue;
                        }
                        Ok(false) => Outcome::NoMatch,
                        Err(_) => Outcome::Pending,
                    },
                    1 if atom_unknowns(&a).is_some() => tune_segment(&a, self.t, self.d),
                    _ => match atom_unknowns(&a) {
                        Some(us) if us.len() == 1 => {
                            let u = us.into_iter().next().expect("one unknown");
                            tune_single_unknown(&a, &u, self.t, self.d, self.bound)
                        }
                        _ => Outcome::Pending,
                    },
                };
                match outcome {
                    Outcome::NoMatch => return Ok(None),
                    Outcome::Equation(e, v) => {
                        log::trace!("tuned {a}: {e} = {v}");
                        self.used.push((e.clone(), v));
                        rows.push((e, v));
                        progress = true;
                    }
                    Outcome::Pending => pending.push(a),
                }
            }
            if !rows.is_empty() {
                let mut subst_rows: Vec<(AffineExpr, i64)> = rows
                    .iter()
                    .map(|(e, v)| {
                        let e2 = substitute(e, &self.known);
                        (e2.clone() - e2.constant, v - e2.constant)
                    })
                    .collect();
                match determined(&mut subst_rows) {
                    Reduced::Inconsistent => return Ok(None),
                    Reduced::Values(vals) => {
                        if !vals.is_empty() {
                            progress = true;
                        }
                        self.known.extend(vals);
                    }
                }
                rows = subst_rows;
            }
            let mut still = Vec::new();
            for (var, lo, hi, body) in groups.drain(..) {
                let (l, h) = (substitute(&lo, &self.known), substitute(&hi, &self.known));
                match (l.as_constant(), h.as_constant()) {
                    (Some(l), Some(h)) => {
                        for i in l..=h {
                            let iv = AffineExpr::constant(i);
                            pending.extend(body.iter().map(|a| a.map_exps(&|e| e.subst(&var, &iv))));
                        }
                        progress = true;
                    }
                    _ => still.push((var, lo, hi, body)),
                }
            }
            groups = still;
            if pending.is_empty() && groups.is_empty() {
                break;
            }
            if !progress {
                if !rows.is_empty() && groups.is_empty() && pending.is_empty() {
                    break;
                }
                let mut open = BTreeSet::new();
                for a in &pending {
                    if let Some(us) = atom_unknowns(a) {
                        open.extend(us);
                    }
                }
                for (_, lo, hi, _) in &groups {
                    unknowns(&substitute(lo, &self.known), &mut open);
                    unknowns(&substitute(hi, &self.known), &mut open);
                }
                let names: Vec<String> = open.iter().map(ToString::to_string).collect();
                return Err(SolverError::Ambiguous(names.join(", ")));
            }
        }
        // leftover lengths are fixed by the remaining equations and the
        // guards only; take the least values that satisfy them
        let guards: Vec<AffineExpr> = case.guards.iter().map(|g| substitute(g, &self.known)).collect();
        let mut free = BTreeSet::new();
        for (e, _) in &rows {
            unknowns(e, &mut free);
        }
        for g in &guards {
            unknowns(g, &mut free);
        }
        if !free.is_empty() {
            match least_solution(&rows, &guards, &free, self.bound)? {
                Some(vals) => self.known.extend(vals),
                None => return Ok(None),
            }
        }
        Ok(Some(()))
    }

    fn length(&self, var: &str, subs: &[i64]) -> i64 {
        let t = IndexTerm::elem(var, subs.iter().map(|s| AffineExpr::constant(*s)).collect());
        self.known.get(&t).copied().unwrap_or(0)
    }

    fn build_var(&self, shape: &IndexShape, var: &str, subs: &mut Vec<i64>) -> Result<MultiIndex, SolverError> {
        Ok(match shape {
            IndexShape::Unit => MultiIndex::Unit,
            IndexShape::ListOf(el) => {
                let n = self.length(var, subs);
                let mut xs = Vec::with_capacity(n.max(0) as usize);
                for j in 1..=n {
                    subs.push(j);
                    xs.push(self.build_var(el, var, subs)?);
                    subs.pop();
                }
                MultiIndex::List(xs)
            }
            IndexShape::Tuple(parts) => {
                let mut xs = Vec::with_capacity(parts.len());
                for (j, p) in parts.iter().enumerate() {
                    subs.push(j as i64 + 1);
                    xs.push(self.build_var(p, var, subs)?);
                    subs.pop();
                }
                MultiIndex::List(xs)
            }
            IndexShape::Choice(branches) => {
                subs.push(1);
                let b = self.length(var, subs);
                subs.pop();
                let Some(bs) = usize::try_from(b).ok().and_then(|b| branches.get(b.wrapping_sub(1))) else {
                    return Err(SolverError::Unsupported(format!("unresolved selector of {var}")));
                };
                subs.push(2);
                let sub = self.build_var(bs, var, subs)?;
                subs.pop();
                MultiIndex::List(vec![MultiIndex::Nat(b as u64), sub])
            }
        })
    }

    fn build(&self, shape: &IndexShape, path: &mut Vec<usize>, case: &Case) -> Result<MultiIndex, SolverError> {
        if let Some(v) = self.f.vars.iter().find(|v| v.path == *path) {
            return self.build_var(shape, &v.name, &mut Vec::new());
        }
        Ok(match shape {
            IndexShape::Unit => MultiIndex::Unit,
            IndexShape::Tuple(parts) => {
                let mut xs = Vec::with_capacity(parts.len());
                for (i, p) in parts.iter().enumerate() {
                    path.push(i);
                    xs.push(self.build(p, path, case)?);
                    path.pop();
                }
                MultiIndex::List(xs)
            }
            IndexShape::Choice(branches) => {
                path.push(0);
                let b = case.choices.iter().find(|(p, _)| p == path).map(|(_, b)| *b);
                path.pop();
                let Some(b) = b else {
                    return Err(SolverError::Unsupported(format!("no selector at {path:?}")));
                };
                path.push(1);
                let sub = self.build(&branches[b as usize - 1], path, case)?;
                path.pop();
                MultiIndex::List(vec![MultiIndex::Nat(b), sub])
            }
            IndexShape::ListOf(_) => {
                return Err(SolverError::Unsupported(format!("unbound star index at {path:?}")))
            }
        })
    }
}

fn outside_domain(f: &SymbolicCharFn, t: &Term) -> bool {
    match &f.domain {
        Some((name, arity)) => t.functor() != Some(name) || t.arity() != *arity,
        None => false,
    }
}

/// Solves `f` for the pair `(t, d)`. Cases are tried in order and the
/// first one whose assignment checks out wins.
pub fn tune(f: &SymbolicCharFn, t: &Term, d: &Term) -> Result<TuneResult, SolverError> {
    if outside_domain(f, t) || outside_domain(f, d) {
        // no axiom applies outside the domain; only the empty sequence can
        let empty = if t == d {
            enumerate_indices(&f.scheme, 0).into_iter().next()
        } else {
            None
        };
        return Ok(TuneResult { assignment: empty, case: None, equations: ConditionSystem::new() });
    }
    let bound = depth(t).max(depth(d)) + 1;
    let mut ambiguous = None;
    let mut last = Vec::new();
    for (ci, case) in f.cases.iter().enumerate() {
        let mut tuner = Tuner { f, t, d, bound, known: BTreeMap::new(), used: Vec::new() };
        match tuner.solve_case(case) {
            Ok(Some(())) => {}
            Ok(None) => {
                last = tuner.used;
                continue;
            }
            Err(SolverError::Ambiguous(s)) => {
                ambiguous.get_or_insert(s);
                continue;
            }
            Err(e) => return Err(e),
        }
        let idx = tuner.build(&f.shape, &mut Vec::new(), case)?;
        let equations = equations_system(&tuner.used);
        if f.accepts(&idx, t, d)? {
            return Ok(TuneResult { assignment: Some(idx), case: Some(ci), equations });
        }
        log::debug!("case {ci}: candidate {idx} rejected");
        last = tuner.used;
    }
    if let Some(s) = ambiguous {
        return Err(SolverError::Ambiguous(s));
    }
    Ok(TuneResult { assignment: None, case: None, equations: equations_system(&last) })
}

/// Whether some instantiation of the scheme rewrites `t` into `d`.
pub fn decide(f: &SymbolicCharFn, t: &Term, d: &Term) -> Result<bool, SolverError> {
    Ok(tune(f, t, d)?.assignment.is_some())
}

/// The axiom sequence selected by the tuned index, replayed from `t` as a
/// check. `Ok(None)` when the pair is unrelated.
pub fn extract_proof(f: &SymbolicCharFn, th: &Theory, t: &Term, d: &Term) -> Result<Option<Proof>, SolverError> {
    let Some(idx) = tune(f, t, d)?.assignment else { return Ok(None) };
    let proof = Proof::new(instantiate(&f.scheme, &idx)?);
    match replay(th, t, &proof) {
        Ok(end) if end == *d => Ok(Some(proof)),
        Ok(end) => Err(SolverError::InternalMismatch(format!("{idx} leads to {end}, not {d}"))),
        Err(e) => Err(SolverError::InternalMismatch(format!("{idx}: {e}"))),
    }
}
