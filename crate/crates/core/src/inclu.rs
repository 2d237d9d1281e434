//! Sufficient conditions for the inclusion of one characteristic function
//! in another.
//!
//! Atoms of the two functions are paired by skeleton (the sequence of
//! repeated periods, exponents ignored) and the exponents of paired
//! segments are equated. Whenever the resulting system holds, every
//! atom of the right function is implied by an identical atom of the left
//! one, so the left relation is contained in the right one.

use std::collections::{BTreeMap, BTreeSet};

use crate::affine::AffineExpr;
use crate::atoms::{Atom, AtomSet, Conjunct};
use crate::error::SolverError;
use crate::math::{eliminate, implied, ConditionSystem, Family, Kind, Role};
use crate::path::{Step, SymbolicPath};
use crate::sigma::{Case, SymbolicCharFn};
use crate::term::Term;

const FRESH: [&str; 8] = ["k", "j", "l", "p", "q", "r", "s", "t"];

fn fresh_name(taken: &BTreeSet<String>) -> String {
    for n in FRESH {
        if !taken.contains(n) {
            return n.to_string();
        }
    }
    (1..)
        .map(|i| format!("k{i}"))
        .find(|n| !taken.contains(n))
        .expect("unbounded supply")
}

fn collect_terms(e: &AffineExpr, out: &mut BTreeMap<String, bool>) {
    for t in e.terms.keys() {
        let sub = out.entry(t.var.clone()).or_insert(false);
        *sub |= !t.path.is_empty();
        for p in &t.path {
            collect_terms(p, out);
        }
    }
}

/// Variables occurring in `exprs`, flagged when used with subscripts.
fn usage<'a>(exprs: impl IntoIterator<Item = &'a AffineExpr>) -> BTreeMap<String, bool> {
    let mut out = BTreeMap::new();
    for e in exprs {
        collect_terms(e, &mut out);
    }
    out
}

fn atom_exprs(a: &Atom) -> Vec<&AffineExpr> {
    a.paths()
        .into_iter()
        .flat_map(|p| p.segments().iter().map(|s| &s.exp))
        .collect()
}

fn case_exprs(c: &Case) -> Vec<&AffineExpr> {
    let mut out: Vec<&AffineExpr> = c.guards.iter().collect();
    for conj in &c.atoms.conjuncts {
        match conj {
            Conjunct::Atom(a) => out.extend(atom_exprs(a)),
            Conjunct::IterGroup { lower, upper, body, .. } => {
                out.push(lower);
                out.push(upper);
                out.extend(body.iter().flat_map(atom_exprs));
            }
        }
    }
    out
}

fn kind_of(sub: bool) -> Kind {
    if sub {
        Kind::MultiIndex
    } else {
        Kind::Scalar
    }
}

#[derive(PartialEq, Eq)]
struct Shape {
    tag: u8,
    skeletons: Vec<Vec<Vec<Step>>>,
    tree: Option<Term>,
}

fn shape(a: &Atom) -> Result<Shape, SolverError> {
    let (tag, tree) = match a {
        Atom::EqualsLR(..) => (0, None),
        Atom::GroundL(_, t) => (1, Some(t.clone())),
        Atom::GroundR(_, t) => (2, Some(t.clone())),
        _ => return Err(SolverError::Unsupported(format!("inclusion over {a}"))),
    };
    Ok(Shape {
        tag,
        skeletons: a.paths().into_iter().map(SymbolicPath::skeleton).collect(),
        tree,
    })
}

/// Exponent pairs of two atoms with equal shapes.
fn exponent_pairs(f: &Atom, g: &Atom) -> Vec<(AffineExpr, AffineExpr)> {
    f.paths()
        .into_iter()
        .zip(g.paths())
        .flat_map(|(p, q)| {
            p.segments()
                .iter()
                .zip(q.segments())
                .map(|(a, b)| (a.exp.clone(), b.exp.clone()))
                .collect::<Vec<_>>()
        })
        .collect()
}

struct Split<'a> {
    atoms: Vec<&'a Atom>,
    groups: Vec<(&'a str, &'a AffineExpr, &'a AffineExpr, &'a [Atom])>,
}

fn split(s: &AtomSet) -> Split<'_> {
    let mut out = Split {
        atoms: Vec::new(),
        groups: Vec::new(),
    };
    for c in &s.conjuncts {
        match c {
            Conjunct::Atom(a) => out.atoms.push(a),
            Conjunct::IterGroup { var, lower, upper, body } => out.groups.push((var, lower, upper, body)),
        }
    }
    out
}

#[derive(Default)]
struct Builder {
    equations: Vec<(AffineExpr, AffineExpr)>,
    inequalities: Vec<AffineExpr>,
    families: Vec<Family>,
    /// Guards of the right function, each needed only when the guards of
    /// the paired left case hold.
    pending: Vec<(Vec<AffineExpr>, AffineExpr)>,
    unmatched: bool,
}

impl Builder {
    fn equate(&mut self, l: AffineExpr, r: AffineExpr) {
        if l != r && !self.equations.contains(&(l.clone(), r.clone())) {
            self.equations.push((l, r));
        }
    }

    fn pair_case(&mut self, f: &Case, g: &Case) -> Result<(), SolverError> {
        let fs = split(&f.atoms);
        let gs = split(&g.atoms);
        for gg in &g.guards {
            self.pending.push((f.guards.clone(), gg.clone()));
        }

        let mut used = vec![false; fs.atoms.len()];
        for ga in &gs.atoms {
            let want = shape(ga)?;
            let mut found = None;
            for (i, fa) in fs.atoms.iter().enumerate() {
                if !used[i] && shape(fa)? == want {
                    found = Some(i);
                    break;
                }
            }
            match found {
                Some(i) => {
                    used[i] = true;
                    for (a, b) in exponent_pairs(fs.atoms[i], ga) {
                        self.equate(a, b);
                    }
                }
                None => self.unmatched = true,
            }
        }

        let mut used = vec![false; fs.groups.len()];
        for (gvar, glo, ghi, gbody) in &gs.groups {
            let mut found = None;
            for (i, (_, _, _, fbody)) in fs.groups.iter().enumerate() {
                if used[i] || fbody.len() != gbody.len() {
                    continue;
                }
                let mut same = true;
                for (a, b) in fbody.iter().zip(gbody.iter()) {
                    same &= shape(a)? == shape(b)?;
                }
                if same {
                    found = Some(i);
                    break;
                }
            }
            let Some(i) = found else {
                self.unmatched = true;
                continue;
            };
            used[i] = true;
            let (fvar, flo, fhi, fbody) = fs.groups[i];
            self.equate(flo.clone(), (*glo).clone());
            self.equate(fhi.clone(), (*ghi).clone());
            let iv = AffineExpr::var(fvar);
            for (fa, ga) in fbody.iter().zip(gbody.iter()) {
                for (a, b) in exponent_pairs(fa, ga) {
                    let b = b.subst(gvar, &iv);
                    if a == b {
                        continue;
                    }
                    if a.mentions(fvar) || b.mentions(fvar) {
                        let fam = Family {
                            var: fvar.to_string(),
                            lower: flo.clone(),
                            upper: fhi.clone(),
                            lhs: a,
                            rhs: b,
                        };
                        if !self.families.contains(&fam) {
                            self.families.push(fam);
                        }
                    } else {
                        self.equate(a, b);
                    }
                }
            }
        }
        Ok(())
    }
}

fn renamed_case(c: &Case, map: &BTreeMap<String, String>) -> Case {
    let ren = |v: &str| map.get(v).cloned().unwrap_or_else(|| v.to_string());
    let atoms = AtomSet {
        conjuncts: c
            .atoms
            .conjuncts
            .iter()
            .map(|conj| match conj {
                Conjunct::Atom(a) => Conjunct::Atom(a.map_exps(&|e| e.rename(&ren))),
                Conjunct::IterGroup { var, lower, upper, body } => Conjunct::IterGroup {
                    var: ren(var),
                    lower: lower.rename(&ren),
                    upper: upper.rename(&ren),
                    body: body.iter().map(|a| a.map_exps(&|e| e.rename(&ren))).collect(),
                },
            })
            .collect(),
        free_vars: c.atoms.free_vars.iter().map(|v| ren(v)).collect(),
    };
    Case {
        choices: c.choices.clone(),
        guards: c.guards.iter().map(|g| g.rename(&ren)).collect(),
        atoms,
    }
}

/// The renaming applied to the variables of the right function by
/// [`includes`]: names clashing with the left function get fresh ones.
pub fn rename_apart(f: &SymbolicCharFn, g: &SymbolicCharFn) -> BTreeMap<String, String> {
    let mut taken: BTreeSet<String> = f.vars.iter().map(|v| v.name.clone()).collect();
    for c in f.cases.iter().chain(&g.cases) {
        for conj in &c.atoms.conjuncts {
            if let Conjunct::IterGroup { var, .. } = conj {
                taken.insert(var.clone());
            }
        }
    }
    let mut map = BTreeMap::new();
    for v in &g.vars {
        let name = if taken.contains(&v.name) {
            fresh_name(&taken)
        } else {
            v.name.clone()
        };
        taken.insert(name.clone());
        map.insert(v.name.clone(), name);
    }
    map
}

/// A system over the variables of `f` (parameters) and the renamed
/// variables of `g` (existentials) whose solutions `(m, n)` satisfy
/// `f(m) ⊆ g(n)`. Not every inclusion is captured.
pub fn includes(f: &SymbolicCharFn, g: &SymbolicCharFn) -> Result<ConditionSystem, SolverError> {
    if f.cases.iter().chain(&g.cases).any(|c| !c.choices.is_empty()) {
        return Err(SolverError::Unsupported("inclusion between functions with alternatives".into()));
    }
    let map = rename_apart(f, g);
    let gcases: Vec<Case> = g.cases.iter().map(|c| renamed_case(c, &map)).collect();

    let mut b = Builder::default();
    match (f.cases.as_slice(), gcases.as_slice()) {
        (fcs, gcs) if fcs.len() == gcs.len() => {
            for (fc, gc) in fcs.iter().zip(gcs) {
                b.pair_case(fc, gc)?;
            }
        }
        _ => {
            return Err(SolverError::Unsupported(format!(
                "cannot pair {} cases with {}",
                f.cases.len(),
                g.cases.len()
            )))
        }
    }

    let mut sys = ConditionSystem::new();
    let fuse = usage(f.cases.iter().flat_map(case_exprs));
    for v in &f.vars {
        let sub = fuse.get(&v.name).copied().unwrap_or(false);
        sys.declare(v.name.clone(), Role::Parameter, kind_of(sub));
    }
    if b.unmatched {
        sys.equations.push((AffineExpr::zero(), AffineExpr::constant(1)));
        return Ok(sys);
    }
    let exprs: Vec<&AffineExpr> = b
        .equations
        .iter()
        .flat_map(|(l, r)| [l, r])
        .chain(&b.inequalities)
        .chain(b.families.iter().flat_map(|fam| [&fam.lower, &fam.upper, &fam.lhs, &fam.rhs]))
        .collect();
    let used = usage(exprs);
    for v in &g.vars {
        let name = &map[&v.name];
        if let Some(sub) = used.get(name) {
            sys.declare(name.clone(), Role::Existential, kind_of(*sub));
        }
    }
    for (_, gg) in &b.pending {
        for v in gg.vars() {
            if let Some(orig) = g.vars.iter().find(|w| map[&w.name] == v) {
                if sys.decl(&v).is_none() {
                    sys.declare(v, Role::Existential, kind_of(used.get(&map[&orig.name]).copied().unwrap_or(false)));
                }
            }
        }
    }
    sys.equations = b.equations;
    sys.families = b.families;
    let solved: BTreeMap<String, AffineExpr> = match eliminate(&sys) {
        Ok(el) => el
            .solved
            .into_iter()
            .filter(|s| s.denom == 1)
            .map(|s| (s.var, s.numer))
            .collect(),
        Err(_) => BTreeMap::new(),
    };
    for (fg, gg) in b.pending {
        let mut e = gg.clone();
        for (v, val) in &solved {
            e = e.subst(v, val);
        }
        let open = e.vars().iter().any(|v| sys.role(v) == Some(Role::Existential));
        if (open || !implied(&e, &fg)) && !b.inequalities.contains(&gg) {
            b.inequalities.push(gg);
        }
    }
    sys.inequalities = b.inequalities;
    sys.validate()?;
    Ok(sys)
}

/// True when `sys` only involves plain lengths, so [`crate::math::eliminate`] applies.
pub fn is_scalar_system(sys: &ConditionSystem) -> bool {
    sys.vars.iter().all(|v| v.kind == Kind::Scalar) && sys.families.is_empty()
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::Env;
    use crate::math::{eliminate, Region};
    use crate::oracle::{reachable_set, SearchBudget};
    use crate::scheme::{enumerate_indices, instantiate, parse_scheme, reduce_specific};
    use crate::sigma::sigma;
    use crate::syntax::parse_theory;
    use crate::term::{apply_clause, Theory};

    fn theory(name: &str) -> Theory {
        let src = match name {
            "fg" => include_str!("../theories/fg.tpc"),
            "mod" => include_str!("../theories/mod.tpc"),
            "chain" => include_str!("../theories/chain.tpc"),
            _ => include_str!("../theories/stack.tpc"),
        };
        parse_theory(src).unwrap()
    }

    fn query(th: &Theory, l: &str, r: &str) -> (SymbolicCharFn, SymbolicCharFn, ConditionSystem) {
        let f = sigma(th, &parse_scheme(l).unwrap()).unwrap();
        let g = sigma(th, &parse_scheme(r).unwrap()).unwrap();
        let sys = includes(&f, &g).unwrap();
        (f, g, sys)
    }

    #[test]
    fn absorbed_prefix_gives_shifted_count() {
        let (_, _, sys) = query(&theory("fg"), "a.b.a*.b", "b.a*.b");
        let text = sys.to_string();
        assert!(text.contains("2n + 4 = 2k + 2"), "{text}");
        assert!(text.contains("n + 3 = k + 2"), "{text}");
        let el = eliminate(&sys).unwrap();
        assert_eq!(el.region, Region::Universal);
        assert_eq!(el.solved[0].to_string(), "k = n + 1");
    }

    #[test]
    fn reversed_query_gives_half_line() {
        let (_, _, sys) = query(&theory("fg"), "b.a*.b", "a.b.a*.b");
        assert_eq!(eliminate(&sys).unwrap().region.to_string(), "n >= 1");
    }

    #[test]
    fn single_and_double_steps() {
        let (_, _, sys) = query(&theory("mod"), "a*", "b*");
        assert_eq!(sys.equations.len(), 1);
        assert_eq!(format!("{} = {}", sys.equations[0].0, sys.equations[0].1), "n = 2k");
        assert_eq!(eliminate(&sys).unwrap().region.to_string(), "n = 0 (mod 2)");
    }

    #[test]
    fn mismatched_skeletons_are_unsat() {
        let (_, _, sys) = query(&theory("stack"), "b", "a.b");
        assert!(eliminate(&sys).unwrap().region.is_unsat());
    }

    #[test]
    fn reflexive_queries_are_universal() {
        for (th, schemes) in [
            ("fg", vec!["a*", "b*.a*", "b.a*.b", "a.b.a*.b"]),
            ("mod", vec!["a*", "b*", "b*.a*"]),
            ("chain", vec!["a*", "a.a*"]),
            ("stack", vec!["a*", "a*.b", "a*.b*"]),
        ] {
            let th = theory(th);
            for s in schemes {
                let (f, _, sys) = query(&th, s, s);
                if is_scalar_system(&sys) {
                    let el = eliminate(&sys).unwrap_or_else(|e| panic!("{s}: {e}\n{sys}"));
                    assert!(el.region.contains(&f.env(&enumerate_indices(&f.scheme, 6)[0])), "{s}: {}", el.region);
                    assert_ne!(el.region, Region::Unsat, "{s}");
                }
            }
        }
    }

    /// Every index pair satisfying the system relates the same trees.
    fn sound(th: &Theory, l: &str, r: &str, len: usize) -> usize {
        let (f, g, sys) = query(th, l, r);
        let map = rename_apart(&f, &g);
        let trees = reachable_set(th, &th.start, SearchBudget { max_depth: 3, max_tree_size: 12, ..Default::default() })
            .unwrap();
        let starts: Vec<_> = trees.iter().take(4).cloned().collect();
        let mut checked = 0;
        for mi in enumerate_indices(&f.scheme, len) {
            for ni in enumerate_indices(&g.scheme, len) {
                let mut env: Env = f.env(&mi);
                for (k, v) in g.env(&ni).indices {
                    env.indices.insert(map[&k].clone(), v);
                }
                if !sys.holds(&env) {
                    continue;
                }
                checked += 1;
                let cf = reduce_specific(th, &instantiate(&f.scheme, &mi).unwrap()).ok();
                let cg = reduce_specific(th, &instantiate(&g.scheme, &ni).unwrap()).ok();
                for t in &starts {
                    let df = cf.as_ref().and_then(|c| apply_clause(c, t));
                    if let Some(d) = df {
                        assert!(g.accepts(&ni, t, &d).unwrap(), "{l} at {mi} vs {r} at {ni}: {t} -> {d}");
                        assert_eq!(cg.as_ref().and_then(|c| apply_clause(c, t)), Some(d));
                    }
                }
            }
        }
        checked
    }

    #[test]
    fn satisfying_pairs_are_inclusions() {
        assert!(sound(&theory("fg"), "a.b.a*.b", "b.a*.b", 8) >= 4);
        assert!(sound(&theory("fg"), "b.a*.b", "a.b.a*.b", 8) >= 4);
        assert!(sound(&theory("stack"), "a*", "a*", 6) >= 5);
        assert!(sound(&theory("mod"), "a*", "b*", 8) >= 4);
        assert!(sound(&theory("fg"), "b*.a*", "a*.b*", 4) >= 5);
        assert!(sound(&theory("stack"), "a*.b", "a*.b", 6) >= 5);
    }
}
