//! Symbolic characteristic functions of iterative schemes.
//!
//! [`sigma`] turns an iterative expression into a guarded disjunction of
//! atom sets over index variables. Each variable names the sub-index found
//! at a fixed position of the canonical multi-index; its length and the
//! lengths of its elements appear as affine exponents in the atoms.
//!
//! Stars are closed by fitting: the body is composed with itself a few
//! times, exponents are fitted as affine functions of the repetition count
//! and the iteration number, and the fitted form is accepted only after an
//! inductive check.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::affine::{AffineExpr, Env, IndexTerm};
use crate::atoms::{split_axiom, Atom, AtomSet};
use crate::compose::{canonical, compose, compose_cases, expand_constant_groups, Composed, from_atomset, to_atomset, Facts, GroupCtx, LAtom};
use crate::error::SolverError;
use crate::path::{Segment, Step, SymbolicPath};
use crate::scheme::{consuming_factors, reduce_specific, shape_of, IndexShape, IterExpr, MultiIndex};
use crate::term::{Clause, Name, Term, Theory};

/// An index variable: the sub-index at `path` (0-based positions into the
/// canonical multi-index).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarBinding {
    pub name: String,
    pub path: Vec<usize>,
}

/// One guarded branch of a characteristic function.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Case {
    /// Alternative selectors: the index at the path must be `Nat(branch)`.
    pub choices: Vec<(Vec<usize>, u64)>,
    /// Each expression must be nonnegative.
    pub guards: Vec<AffineExpr>,
    pub atoms: AtomSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolicCharFn {
    pub scheme: IterExpr,
    pub shape: IndexShape,
    pub vars: Vec<VarBinding>,
    pub cases: Vec<Case>,
    /// Root functor shared by every sentence of the theory; the function
    /// is exact on trees with this root.
    pub domain: Option<(Name, usize)>,
}

impl SymbolicCharFn {
    /// The atom set of a function with a single unguarded case.
    pub fn atoms(&self) -> Option<&AtomSet> {
        match self.cases.as_slice() {
            [c] if c.guards.is_empty() && c.choices.is_empty() => Some(&c.atoms),
            _ => None,
        }
    }

    pub fn var(&self, name: &str) -> Option<&VarBinding> {
        self.vars.iter().find(|v| v.name == name)
    }

    /// Binds every variable to its sub-index of `idx` (canonical form).
    pub fn env(&self, idx: &MultiIndex) -> Env {
        let mut env = Env::new();
        for v in &self.vars {
            if let Some(sub) = idx.at_path(&v.path) {
                env.indices.insert(v.name.clone(), sub.clone());
            }
        }
        env
    }

    /// Cases whose selectors and guards hold for `idx`.
    pub fn cases_for(&self, idx: &MultiIndex) -> Vec<(usize, Env)> {
        let env = self.env(idx);
        self.cases
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                c.choices.iter().all(|(p, b)| idx.at_path(p) == Some(&MultiIndex::Nat(*b)))
                    && c.guards.iter().all(|g| g.eval(&env).is_some_and(|x| x >= 0))
            })
            .map(|(i, _)| (i, env.clone()))
            .collect()
    }

    /// Whether the instantiation selected by the canonical index `idx`
    /// relates `t` to `d`.
    pub fn accepts(&self, idx: &MultiIndex, t: &Term, d: &Term) -> Result<bool, SolverError> {
        for (i, env) in self.cases_for(idx) {
            if self.cases[i].atoms.eval(&env, t, d)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

impl fmt::Display for SymbolicCharFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.vars {
            write!(f, "λ{}:M.", v.name)?;
        }
        if let Some(a) = self.atoms() {
            return write!(f, "{a}");
        }
        writeln!(f, "Cases(")?;
        for c in &self.cases {
            let mut conds: Vec<String> = c
                .choices
                .iter()
                .map(|(p, b)| format!("branch{p:?} = {b}"))
                .collect();
            conds.extend(c.guards.iter().map(|g| format!("{g} >= 0")));
            let head = if conds.is_empty() { "always".to_string() } else { conds.join(", ") };
            writeln!(f, "  when {head}:")?;
            for line in c.atoms.to_string().lines() {
                writeln!(f, "    {line}")?;
            }
        }
        write!(f, ")")
    }
}

#[derive(Clone, Debug)]
struct ICase {
    choices: Vec<(Vec<usize>, u64)>,
    guards: Vec<AffineExpr>,
    atoms: Vec<LAtom>,
}

/// A function over the index of a sub-expression; paths are relative to
/// that index.
#[derive(Clone, Debug)]
struct Fun {
    cases: Vec<ICase>,
    vars: Vec<(String, Vec<usize>)>,
}

struct Ctx<'a> {
    th: &'a Theory,
    domain: Option<(Name, usize)>,
    next_var: usize,
}

impl Ctx<'_> {
    fn fresh(&mut self) -> String {
        self.next_var += 1;
        format!("v{}", self.next_var)
    }
}

fn plain(atoms: Vec<Atom>) -> Vec<LAtom> {
    atoms.into_iter().enumerate().map(|(c, a)| LAtom::plain(a, (c, 0))).collect()
}

fn identity_atoms(domain: &Option<(Name, usize)>) -> Vec<Atom> {
    match domain {
        Some((f, n)) if *n > 0 => (0..*n)
            .map(|c| {
                let p = SymbolicPath::step(Step::new(f.clone(), *n, c));
                Atom::EqualsLR(p.clone(), p)
            })
            .collect(),
        _ => vec![Atom::EqualsLR(SymbolicPath::identity(), SymbolicPath::identity())],
    }
}

fn clause_fun(c: Option<Clause>) -> Fun {
    let cases = match c {
        Some(c) => vec![ICase {
            choices: Vec::new(),
            guards: Vec::new(),
            atoms: from_atomset(&split_axiom(&c), 0),
        }],
        None => Vec::new(),
    };
    Fun { cases, vars: Vec::new() }
}

fn prefix(p: &[usize], rest: &[usize]) -> Vec<usize> {
    p.iter().chain(rest).copied().collect()
}

fn sig(ctx: &mut Ctx, e: &IterExpr) -> Result<Fun, SolverError> {
    match e {
        IterExpr::Axiom(_) | IterExpr::Eps => {
            let seq = e.axioms();
            specific(ctx, &seq)
        }
        IterExpr::Dot(xs) => dot(ctx, xs),
        IterExpr::Alt(xs) => {
            let mut out = Fun { cases: Vec::new(), vars: Vec::new() };
            for (b, x) in xs.iter().enumerate() {
                let f = sig(ctx, x)?;
                for c in f.cases {
                    let mut choices = vec![(vec![0], b as u64 + 1)];
                    choices.extend(c.choices.iter().map(|(p, v)| (prefix(&[1], p), *v)));
                    out.cases.push(ICase { choices, ..c });
                }
                out.vars.extend(f.vars.into_iter().map(|(n, p)| (n, prefix(&[1], &p))));
            }
            Ok(out)
        }
        IterExpr::Star(body) => {
            if body.star_depth() >= 2 {
                return Err(SolverError::Unsupported(format!(
                    "star nesting deeper than 2 in {e}"
                )));
            }
            let f = sig(ctx, body)?;
            star(ctx, e, f)
        }
    }
}

fn specific(ctx: &Ctx, seq: &[String]) -> Result<Fun, SolverError> {
    match reduce_specific(ctx.th, seq) {
        Ok(c) => Ok(clause_fun(Some(c))),
        Err(crate::error::SchemeError::NoCompose) => Ok(clause_fun(None)),
        Err(e) => Err(e.into()),
    }
}

fn dot(ctx: &mut Ctx, xs: &[IterExpr]) -> Result<Fun, SolverError> {
    let cons = consuming_factors(xs);
    let mut acc: Option<Fun> = None;
    let mut i = 0;
    while i < xs.len() {
        let (f, next) = if xs[i].is_specific() {
            let mut j = i;
            let mut seq = Vec::new();
            while j < xs.len() && xs[j].is_specific() {
                seq.extend(flatten(&xs[j]));
                j += 1;
            }
            (specific(ctx, &seq)?, j)
        } else {
            let mut f = sig(ctx, &xs[i])?;
            if cons.len() > 1 {
                let pos = cons.iter().position(|&c| c == i).unwrap_or(0);
                for v in &mut f.vars {
                    v.1 = prefix(&[pos], &v.1);
                }
                for c in &mut f.cases {
                    for ch in &mut c.choices {
                        ch.0 = prefix(&[pos], &ch.0);
                    }
                }
            }
            (f, i + 1)
        };
        acc = Some(match acc {
            None => f,
            Some(a) => then(ctx, a, f)?,
        });
        i = next;
    }
    Ok(acc.unwrap_or_else(|| clause_fun(Some(Clause::identity()))))
}

fn flatten(e: &IterExpr) -> Vec<String> {
    match e {
        IterExpr::Axiom(a) => vec![a.clone()],
        IterExpr::Dot(xs) => xs.iter().flat_map(flatten).collect(),
        _ => Vec::new(),
    }
}

/// Sequential composition, case by case.
fn then(ctx: &Ctx, a: Fun, b: Fun) -> Result<Fun, SolverError> {
    let mut cases = Vec::new();
    for ca in &a.cases {
        for cb in &b.cases {
            let choices: Vec<_> = ca.choices.iter().chain(&cb.choices).cloned().collect();
            let guards: Vec<AffineExpr> = ca.guards.iter().chain(&cb.guards).cloned().collect();
            pair(ca.atoms.clone(), cb.atoms.clone(), choices, guards, 0, &mut cases)?;
        }
    }
    let mut vars = a.vars;
    vars.extend(b.vars);
    let mut f = Fun { cases, vars };
    merge_zero_cases(ctx, &mut f);
    Ok(f)
}

/// Composes one pair of cases, splitting on exponents that may be zero.
fn pair(
    fa: Vec<LAtom>,
    fb: Vec<LAtom>,
    choices: Vec<(Vec<usize>, u64)>,
    guards: Vec<AffineExpr>,
    depth: usize,
    out: &mut Vec<ICase>,
) -> Result<(), SolverError> {
    match compose_cases(&fa, &fb, &Facts(guards.clone()))? {
        Composed::Done(atoms) => out.push(ICase { choices, guards, atoms }),
        Composed::Empty => {}
        Composed::Undecided(e) => {
            let v = match e.terms.iter().next() {
                Some((t, 1)) if e.terms.len() == 1 && t.is_scalar() => t.var.clone(),
                _ => return Err(SolverError::Unsupported(format!("composition depends on whether {e} is zero"))),
            };
            let zero = AffineExpr::constant(-e.constant);
            if depth >= 4 {
                return Err(SolverError::Unsupported("too many case splits".into()));
            }
            let mut g0 = guards.clone();
            g0.push(-e.clone());
            pair(
                subst_latoms(&fa, &v, &zero),
                subst_latoms(&fb, &v, &zero),
                choices.clone(),
                g0,
                depth + 1,
                out,
            )?;
            let mut g1 = guards;
            g1.push(e - 1);
            pair(fa, fb, choices, g1, depth + 1, out)?;
        }
    }
    Ok(())
}

fn exps_of(a: &Atom) -> Vec<AffineExpr> {
    a.paths()
        .into_iter()
        .flat_map(|p| p.segments().iter().map(|s| s.exp.clone()))
        .collect()
}

fn negative_constant(atoms: &[LAtom]) -> bool {
    atoms
        .iter()
        .any(|la| exps_of(&la.atom).iter().any(|e| e.as_constant().is_some_and(|c| c < 0)))
}

fn subst_latoms(atoms: &[LAtom], v: &str, e: &AffineExpr) -> Vec<LAtom> {
    atoms
        .iter()
        .map(|la| LAtom {
            group: la.group.as_ref().map(|g| GroupCtx {
                var: g.var.clone(),
                lower: g.lower.subst(v, e),
                upper: g.upper.subst(v, e),
            }),
            atom: la.atom.map_exps(&|x| x.subst(v, e)),
            label: la.label,
        })
        .collect()
}

fn mentions_elem(atoms: &[LAtom], v: &str) -> bool {
    atoms.iter().filter(|la| la.group.is_none()).any(|la| {
        exps_of(&la.atom)
            .iter()
            .any(|e| e.terms.keys().any(|t| t.var == v && !t.is_scalar()))
    })
}

/// `{x >= 1: A}` and `{x = 0: B}` become `{A}` when `A` at `x = 0` is `B`.
fn merge_zero_cases(ctx: &Ctx, f: &mut Fun) {
    let ident = canonical(&plain(identity_atoms(&ctx.domain)));
    loop {
        let mut merged = None;
        'search: for (ia, a) in f.cases.iter().enumerate() {
            for (ga, g) in a.guards.iter().enumerate() {
                let Some(x) = positive_var(g) else { continue };
                let zero = -AffineExpr::var(x.clone());
                for (ib, b) in f.cases.iter().enumerate() {
                    if ib == ia || b.choices != a.choices {
                        continue;
                    }
                    let Some(gb) = b.guards.iter().position(|h| *h == zero) else { continue };
                    let rest_a: BTreeSet<&AffineExpr> =
                        a.guards.iter().enumerate().filter(|(k, _)| *k != ga).map(|(_, g)| g).collect();
                    let rest_b: BTreeSet<&AffineExpr> =
                        b.guards.iter().enumerate().filter(|(k, _)| *k != gb).map(|(_, g)| g).collect();
                    if rest_a != rest_b || mentions_elem(&a.atoms, &x) {
                        continue;
                    }
                    let at0 = subst_latoms(&a.atoms, &x, &AffineExpr::zero());
                    if negative_constant(&at0) {
                        continue;
                    }
                    let c0 = canonical(&at0);
                    let cb = canonical(&b.atoms);
                    let b_is_ident = cb == ident
                        || cb == canonical(&plain(identity_atoms(&None)));
                    if c0 == cb || (b_is_ident && c0 == ident) {
                        merged = Some((ia, ga, ib));
                        break 'search;
                    }
                }
            }
        }
        let Some((ia, ga, ib)) = merged else { return };
        f.cases[ia].guards.remove(ga);
        f.cases.remove(ib);
    }
}

/// `x` for a guard `x - 1 >= 0`.
fn positive_var(g: &AffineExpr) -> Option<String> {
    if g.constant != -1 || g.terms.len() != 1 {
        return None;
    }
    let (t, c) = g.terms.iter().next()?;
    (*c == 1 && t.is_scalar()).then(|| t.var.clone())
}

fn star(ctx: &mut Ctx, e: &IterExpr, body: Fun) -> Result<Fun, SolverError> {
    let m = ctx.fresh();
    let var_m = AffineExpr::var(m.clone());
    let base = match body.cases.as_slice() {
        [] => {
            // only the empty repetition survives
            let c = ICase {
                choices: Vec::new(),
                guards: vec![-var_m],
                atoms: plain(identity_atoms(&ctx.domain)),
            };
            return Ok(Fun { cases: vec![c], vars: vec![(m, Vec::new())] });
        }
        [c] if c.choices.is_empty() && c.atoms.iter().all(|a| a.group.is_none()) => c.clone(),
        _ => {
            return Err(SolverError::Unsupported(format!(
                "star over a body with several cases or iterated atoms: {e}"
            )))
        }
    };
    if base.guards.iter().any(|g| !g.is_constant()) {
        return Err(SolverError::Unsupported(format!("guarded star body in {e}")));
    }
    let closure = Closure {
        m: m.clone(),
        vars: body.vars.clone(),
        base: base.atoms.iter().map(|la| la.atom.clone()).collect(),
        name: e.to_string(),
    };
    let zero = ICase {
        choices: Vec::new(),
        guards: vec![-var_m.clone()],
        atoms: plain(identity_atoms(&ctx.domain)),
    };
    let mut f = Fun { cases: vec![zero], vars: vec![(m.clone(), Vec::new())] };
    match closure.run()? {
        Closed::Once(atoms) => f.cases.push(ICase {
            choices: Vec::new(),
            guards: vec![var_m.clone() - 1, -var_m + 1],
            atoms,
        }),
        Closed::Always(atoms) => f.cases.push(ICase {
            choices: Vec::new(),
            guards: vec![var_m - 1],
            atoms,
        }),
    }
    merge_zero_cases(ctx, &mut f);
    Ok(f)
}

enum Closed {
    /// The body composes with itself to the empty relation.
    Once(Vec<LAtom>),
    /// Valid for every repetition count `m >= 1`.
    Always(Vec<LAtom>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Class {
    First,
    Last,
    Family,
}

const GROUP_VAR: &str = "i";

struct Closure {
    m: String,
    vars: Vec<(String, Vec<usize>)>,
    base: Vec<Atom>,
    name: String,
}

fn tagged(v: &str, k: usize) -> String {
    format!("{v}~{k}")
}

fn untag(v: &str) -> Option<(&str, usize)> {
    let (a, b) = v.split_once('~')?;
    Some((a, b.parse().ok()?))
}

fn shape_key(a: &Atom) -> String {
    let kind = match a {
        Atom::EqualsLR(..) => "lr",
        Atom::GroundL(..) => "gl",
        Atom::GroundR(..) => "gr",
        Atom::EqualsLL(..) => "ll",
        Atom::EqualsRR(..) => "rr",
    };
    let tmpl = match a {
        Atom::GroundL(_, t) | Atom::GroundR(_, t) => t.to_string(),
        _ => String::new(),
    };
    let sk: Vec<_> = a.paths().into_iter().map(|p| p.skeleton()).collect();
    format!("{kind}|{sk:?}|{tmpl}")
}

fn with_exps(a: &Atom, exps: &[AffineExpr]) -> Atom {
    let mut it = exps.iter();
    let mut re = |p: &SymbolicPath| {
        SymbolicPath::from_segments(
            p.segments()
                .iter()
                .map(|s| Segment { period: s.period.clone(), exp: it.next().cloned().unwrap_or_default() })
                .collect(),
        )
    };
    match a {
        Atom::EqualsLR(l, r) => {
            let l = re(l);
            Atom::EqualsLR(l, re(r))
        }
        Atom::GroundL(l, t) => Atom::GroundL(re(l), t.clone()),
        Atom::GroundR(r, t) => Atom::GroundR(re(r), t.clone()),
        Atom::EqualsLL(x, y) => {
            let x = re(x);
            Atom::EqualsLL(x, re(y))
        }
        Atom::EqualsRR(x, y) => {
            let x = re(x);
            Atom::EqualsRR(x, re(y))
        }
    }
}

/// Atoms of one class at one sample point, with constants split off.
struct Sample {
    atoms: Vec<Atom>,
    consts: Vec<Vec<i64>>,
    parts: Vec<Vec<AffineExpr>>,
}

impl Closure {
    fn fail(&self, why: &str) -> SolverError {
        SolverError::NotLinearizable(format!("{} ({why})", self.name))
    }

    fn sub_path(&self, w: &str) -> Vec<AffineExpr> {
        self.vars
            .iter()
            .find(|(n, _)| n == w)
            .map(|(_, p)| p.iter().map(|&x| AffineExpr::constant(x as i64 + 1)).collect())
            .unwrap_or_default()
    }

    /// `m[sub]` followed by the body path of `w`.
    fn elem(&self, w: &str, sub: AffineExpr) -> AffineExpr {
        let mut path = vec![sub];
        path.extend(self.sub_path(w));
        AffineExpr::term(IndexTerm::elem(self.m.clone(), path))
    }

    fn copy(&self, k: usize) -> Vec<LAtom> {
        let names: BTreeSet<&str> = self.vars.iter().map(|(n, _)| n.as_str()).collect();
        self.base
            .iter()
            .enumerate()
            .map(|(c, a)| {
                let a = a.map_exps(&|e| {
                    e.rename(&|v| if names.contains(v) { tagged(v, k) } else { v.to_string() })
                });
                LAtom::plain(a, (c, k))
            })
            .collect()
    }

    fn run(&self) -> Result<Closed, SolverError> {
        let mut powers: Vec<Vec<LAtom>> = vec![Vec::new(), self.copy(1)];
        for k in 2..=5 {
            match compose(&powers[k - 1], &self.copy(k), &Facts::default())? {
                Some(c) => powers.push(c),
                None if k == 2 => {
                    let atoms = self.base_at(&AffineExpr::constant(1));
                    return Ok(Closed::Once(atoms));
                }
                None => return Err(self.fail("a power of the body is empty")),
            }
        }
        let classes = self.classify(&powers)?;
        let cand = self.fit(&powers, &classes)?;
        self.check_powers(&cand, &powers)?;
        self.check_step(&cand)?;
        Ok(Closed::Always(cand))
    }

    /// The base with `w` read from element `sub` of the repetition index.
    fn base_at(&self, sub: &AffineExpr) -> Vec<LAtom> {
        let names: BTreeSet<&str> = self.vars.iter().map(|(n, _)| n.as_str()).collect();
        plain(
            self.base
                .iter()
                .map(|a| {
                    a.map_exps(&|e| {
                        e.map_terms(&|t| {
                            (t.is_scalar() && names.contains(t.var.as_str())).then(|| self.elem(&t.var, sub.clone()))
                        })
                    })
                })
                .collect(),
        )
    }

    fn classify(&self, powers: &[Vec<LAtom>]) -> Result<BTreeMap<usize, Class>, SolverError> {
        let mut out: BTreeMap<usize, Class> = BTreeMap::new();
        for k in 3..=5 {
            let mut births: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
            for la in &powers[k] {
                births.entry(la.label.0).or_default().insert(la.label.1);
            }
            let mut seen = BTreeMap::new();
            for (c, b) in births {
                let class = if b == BTreeSet::from([k]) {
                    Class::Last
                } else if b == BTreeSet::from([1]) {
                    Class::First
                } else if b == (1..=k).collect() {
                    Class::Family
                } else {
                    return Err(self.fail("atoms created by a varying subset of iterations"));
                };
                seen.insert(c, class);
            }
            if k == 3 {
                out = seen;
            } else if out != seen {
                return Err(self.fail("atom classes change with the repetition count"));
            }
        }
        Ok(out)
    }

    /// Maps tagged variables to element terms; `None` on a foreign tag.
    fn map_tags(&self, a: &Atom, class: Class, k: usize, i: usize) -> Option<Atom> {
        let bad = std::cell::Cell::new(false);
        let out = a.map_exps(&|e| {
            e.map_terms(&|t| {
                let (w, j) = untag(&t.var)?;
                if !t.is_scalar() {
                    bad.set(true);
                    return None;
                }
                let sub = match class {
                    Class::Last if j == k => AffineExpr::var(self.m.clone()),
                    Class::First if j == 1 => AffineExpr::constant(1),
                    Class::Family if j == i => AffineExpr::var(GROUP_VAR),
                    _ => {
                        bad.set(true);
                        return None;
                    }
                };
                Some(self.elem(w, sub))
            })
        });
        (!bad.get()).then_some(out)
    }

    fn sample(&self, powers: &[Vec<LAtom>], c: usize, class: Class, k: usize, i: usize) -> Result<Sample, SolverError> {
        let birth = match class {
            Class::Last => k,
            Class::First => 1,
            Class::Family => i,
        };
        let mut atoms: Vec<Atom> = Vec::new();
        for la in &powers[k] {
            if la.label == (c, birth) {
                let a = self
                    .map_tags(&la.atom, class, k, i)
                    .ok_or_else(|| self.fail("an atom mixes variables of different iterations"))?;
                if !atoms.contains(&a) {
                    atoms.push(a);
                }
            }
        }
        let split = |a: &Atom| -> (Vec<i64>, Vec<AffineExpr>) {
            exps_of(a)
                .into_iter()
                .map(|e| (e.constant, e.clone() - e.constant))
                .unzip()
        };
        atoms.sort_by_cached_key(|a| {
            let (c, p) = split(a);
            (shape_key(a), p, c)
        });
        let (consts, parts) = atoms.iter().map(split).unzip();
        Ok(Sample { atoms, consts, parts })
    }

    fn fit(&self, powers: &[Vec<LAtom>], classes: &BTreeMap<usize, Class>) -> Result<Vec<LAtom>, SolverError> {
        let m = AffineExpr::var(self.m.clone());
        let i = AffineExpr::var(GROUP_VAR);
        let mut out = Vec::new();
        for (&c, &class) in classes {
            let points: Vec<(usize, usize)> = match class {
                Class::Family => vec![(4, 2), (4, 3), (5, 2), (5, 3), (5, 4)],
                _ => vec![(3, 0), (4, 0), (5, 0)],
            };
            let samples = points
                .iter()
                .map(|&(k, i)| self.sample(powers, c, class, k, i))
                .collect::<Result<Vec<_>, _>>()?;
            let first = &samples[0];
            for s in &samples[1..] {
                let same = s.atoms.len() == first.atoms.len()
                    && s.parts == first.parts
                    && s.atoms.iter().zip(&first.atoms).all(|(a, b)| shape_key(a) == shape_key(b));
                if !same {
                    return Err(self.fail("atom structure changes with the repetition count"));
                }
            }
            for (n, a) in first.atoms.iter().enumerate() {
                let mut exps = Vec::new();
                for (slot, part) in first.parts[n].iter().enumerate() {
                    let v = |s: usize| samples[s].consts[n][slot];
                    let e = match class {
                        Class::Family => {
                            let alpha = v(2) - v(0);
                            let beta = v(1) - v(0);
                            let gamma = v(0) - 4 * alpha - 2 * beta;
                            let at = |k: i64, i: i64| alpha * k + beta * i + gamma;
                            if at(5, 3) != v(3) || at(5, 4) != v(4) {
                                return Err(self.fail("exponent is not affine"));
                            }
                            m.scale(alpha) + i.scale(beta) + gamma
                        }
                        _ => {
                            let alpha = v(1) - v(0);
                            let beta = v(0) - 3 * alpha;
                            if 5 * alpha + beta != v(2) {
                                return Err(self.fail("exponent is not affine"));
                            }
                            m.scale(alpha) + beta
                        }
                    };
                    exps.push(e + part.clone());
                }
                let group = (class == Class::Family).then(|| GroupCtx {
                    var: GROUP_VAR.into(),
                    lower: AffineExpr::constant(1),
                    upper: m.clone(),
                });
                out.push(LAtom { group, atom: with_exps(a, &exps), label: (c, 0) });
            }
        }
        Ok(out)
    }

    /// The candidate at `m = k` must be the k-th power.
    fn check_powers(&self, cand: &[LAtom], powers: &[Vec<LAtom>]) -> Result<(), SolverError> {
        for (k, power) in powers.iter().enumerate().skip(1) {
            let at = subst_latoms(cand, &self.m, &AffineExpr::constant(k as i64));
            let at = expand_constant_groups(at);
            let back: Vec<LAtom> = at
                .iter()
                .map(|la| LAtom {
                    atom: la.atom.map_exps(&|e| e.map_terms(&|t| self.untag_elem(t))),
                    ..la.clone()
                })
                .collect();
            if canonical(&back) != canonical(power) {
                log::debug!("closure of {} disagrees with power {k}", self.name);
                return Err(self.fail(&format!("fitted form disagrees with power {k}")));
            }
        }
        Ok(())
    }

    /// `m[c]…` with a constant subscript back to the tagged variable.
    fn untag_elem(&self, t: &IndexTerm) -> Option<AffineExpr> {
        if t.var != self.m || t.path.is_empty() {
            return None;
        }
        let c = t.path[0].as_constant()?;
        let rest: Vec<usize> = t.path[1..]
            .iter()
            .map(|e| e.as_constant().map(|x| (x - 1) as usize))
            .collect::<Option<_>>()?;
        let (w, _) = self.vars.iter().find(|(_, p)| *p == rest)?;
        Some(AffineExpr::var(tagged(w, c as usize)))
    }

    /// Composing the candidate at `m` with one more body yields the
    /// candidate at `m + 1`.
    fn check_step(&self, cand: &[LAtom]) -> Result<(), SolverError> {
        let m = AffineExpr::var(self.m.clone());
        let next = self.base_at(&(m.clone() + 1));
        let facts = Facts(vec![m.clone() - 1]);
        let Some(got) = compose(cand, &next, &facts)? else {
            return Err(self.fail("inductive step is empty"));
        };
        let want = subst_latoms(cand, &self.m, &(m.clone() + 1));
        if !equivalent(&got, &want) {
            log::debug!(
                "closure step of {}:\n got {}\nwant {}",
                self.name,
                to_atomset(&got),
                to_atomset(&want)
            );
            return Err(self.fail("inductive step does not reproduce the fitted form"));
        }
        Ok(())
    }
}

/// Moves members out of groups whose range exceeds `target` by a constant.
fn peel_to(atoms: &[LAtom], target: &GroupCtx) -> Option<Vec<LAtom>> {
    let mut out = Vec::new();
    for la in atoms {
        let Some(g) = &la.group else {
            out.push(la.clone());
            continue;
        };
        if g.var != target.var {
            out.push(la.clone());
            continue;
        }
        let lo = (target.lower.clone() - g.lower.clone()).as_constant()?;
        let hi = (g.upper.clone() - target.upper.clone()).as_constant()?;
        if lo < 0 || hi < 0 {
            return None;
        }
        let member = |x: AffineExpr| LAtom {
            group: None,
            atom: la.atom.map_exps(&|e| e.subst(&g.var, &x)),
            label: la.label,
        };
        for d in 0..lo {
            out.push(member(g.lower.clone() + d));
        }
        for d in 0..hi {
            out.push(member(g.upper.clone() - d));
        }
        out.push(LAtom { group: Some(target.clone()), ..la.clone() });
    }
    Some(out)
}

/// Equality of atom lists up to splitting members off a group.
fn equivalent(a: &[LAtom], b: &[LAtom]) -> bool {
    let ca = canonical(a);
    let cb = canonical(b);
    if ca == cb {
        return true;
    }
    let groups = |c: &[(Option<GroupCtx>, Atom)]| -> BTreeSet<GroupCtx> {
        c.iter().filter_map(|(g, _)| g.clone()).collect()
    };
    let (ga, gb) = (groups(&ca), groups(&cb));
    // narrow both sides to the tightest common range
    for t in ga.iter().chain(&gb) {
        if let (Some(x), Some(y)) = (peel_to(a, t), peel_to(b, t)) {
            if canonical(&x) == canonical(&y) {
                return true;
            }
        }
    }
    false
}

/// Renames internal variables to readable names, in order of position.
fn finish(e: &IterExpr, th: &Theory, f: Fun, domain: Option<(Name, usize)>) -> Result<SymbolicCharFn, SolverError> {
    if f.cases.is_empty() {
        return Err(SolverError::NoCompose);
    }
    let mut used = BTreeSet::new();
    let mut indexed = BTreeSet::new();
    for c in &f.cases {
        for g in &c.guards {
            used.extend(g.vars());
        }
        for la in &c.atoms {
            for e in exps_of(&la.atom) {
                for t in e.terms.keys() {
                    if !t.is_scalar() {
                        indexed.insert(t.var.clone());
                    }
                }
                used.extend(e.vars());
            }
            if let Some(g) = &la.group {
                used.extend(g.upper.vars());
                used.extend(g.lower.vars());
            }
        }
    }
    let mut order: Vec<&(String, Vec<usize>)> = f.vars.iter().filter(|(n, _)| used.contains(n)).collect();
    order.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let scalars = ["n", "k", "j", "l", "p", "q", "r", "s"];
    let (mut ns, mut ms) = (0usize, 0usize);
    let mut names: BTreeMap<String, String> = BTreeMap::new();
    for (v, _) in &order {
        let name = if indexed.contains(v) {
            ms += 1;
            if ms == 1 { "m".to_string() } else { format!("m{}", ms - 1) }
        } else {
            ns += 1;
            match scalars.get(ns - 1) {
                Some(s) => s.to_string(),
                None => format!("n{}", ns - scalars.len()),
            }
        };
        names.insert(v.clone(), name);
    }
    let rn = |x: &AffineExpr| x.rename(&|v| names.get(v).cloned().unwrap_or_else(|| v.to_string()));
    let cases = f
        .cases
        .iter()
        .map(|c| {
            let atoms: Vec<LAtom> = c
                .atoms
                .iter()
                .map(|la| LAtom {
                    group: la.group.as_ref().map(|g| GroupCtx {
                        var: g.var.clone(),
                        lower: rn(&g.lower),
                        upper: rn(&g.upper),
                    }),
                    atom: la.atom.map_exps(&rn),
                    label: la.label,
                })
                .collect();
            Case {
                choices: c.choices.clone(),
                guards: c.guards.iter().map(rn).collect(),
                atoms: to_atomset(&atoms),
            }
        })
        .collect();
    let _ = th;
    Ok(SymbolicCharFn {
        scheme: e.clone(),
        shape: shape_of(e),
        vars: order
            .iter()
            .map(|(v, p)| VarBinding { name: names[v].clone(), path: p.clone() })
            .collect(),
        cases,
        domain,
    })
}

/// The symbolic characteristic function of `e` over the axioms of `th`.
pub fn sigma(th: &Theory, e: &IterExpr) -> Result<SymbolicCharFn, SolverError> {
    for a in e.axioms() {
        if th.axiom(&a).is_none() {
            return Err(crate::error::SchemeError::UnknownAxiom(a).into());
        }
    }
    if e.star_depth() > 2 {
        return Err(SolverError::Unsupported(format!("star nesting deeper than 2 in {e}")));
    }
    let domain = th.root_invariant();
    let mut ctx = Ctx { th, domain: domain.clone(), next_var: 0 };
    let f = sig(&mut ctx, e)?;
    finish(e, th, f, domain)
}
