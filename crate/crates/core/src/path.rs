//! Paths: subtree extractors built from single-step projections.
//!
//! A [`Step`] such as `[P(x, y)->x]` descends into one child of a node with
//! a given functor and arity. A [`SymbolicPath`] repeats runs of steps a
//! symbolic number of times, e.g. `[P(x, y)->x].[F(x)->x]^{2n+4}`.

use std::fmt;

use crate::affine::{AffineExpr, Env};
use crate::term::{Clause, Name, Term};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Step {
    pub functor: Name,
    pub arity: usize,
    /// 0-based child position.
    pub child: usize,
}

impl Step {
    pub fn new(functor: impl Into<Name>, arity: usize, child: usize) -> Step {
        assert!(child < arity, "child position out of range");
        Step {
            functor: functor.into(),
            arity,
            child,
        }
    }

    /// Same node kind, possibly a different child.
    pub fn same_node(&self, other: &Step) -> bool {
        self.functor == other.functor && self.arity == other.arity
    }

    pub fn apply<'a>(&self, t: &'a Term) -> Option<&'a Term> {
        if t.functor() == Some(&self.functor) && t.arity() == self.arity {
            t.args().get(self.child)
        } else {
            None
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", Path(vec![self.clone()]))
    }
}

/// A concrete path; the empty path is the identity `[x->x]`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path(pub Vec<Step>);

impl Path {
    pub fn identity() -> Path {
        Path(Vec::new())
    }

    pub fn steps(&self) -> &[Step] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Applies `self` then `q`.
    pub fn compose(&self, q: &Path) -> Path {
        let mut v = self.0.clone();
        v.extend(q.0.iter().cloned());
        Path(v)
    }

    pub fn power(&self, n: usize) -> Path {
        Path(self.0.iter().cloned().cycle().take(self.0.len() * n).collect())
    }

    pub fn apply<'a>(&self, t: &'a Term) -> Option<&'a Term> {
        let mut cur = t;
        for s in &self.0 {
            cur = s.apply(cur)?;
        }
        Some(cur)
    }

    /// The path to a subterm position of `t`.
    pub fn to_position(t: &Term, pos: &[usize]) -> Option<Path> {
        let mut cur = t;
        let mut steps = Vec::with_capacity(pos.len());
        for &i in pos {
            steps.push(Step::new(cur.functor()?.clone(), cur.arity(), i));
            cur = cur.args().get(i)?;
        }
        Some(Path(steps))
    }

    /// The clause form `[p->v]` with canonically named variables.
    pub fn to_clause(&self) -> Clause {
        let hole = Term::var("\u{0}hole");
        let mut counter = 0usize;
        let mut t = hole.clone();
        for s in self.0.iter().rev() {
            let mut args = Vec::with_capacity(s.arity);
            for j in 0..s.arity {
                if j == s.child {
                    args.push(t.clone());
                } else {
                    counter += 1;
                    args.push(Term::var(format!("\u{0}w{counter}")));
                }
            }
            t = Term::app(s.functor.clone(), args);
        }
        let c = Clause {
            name: String::new(),
            lhs: t,
            rhs: hole,
        };
        c.canonical()
    }

    /// Reads a clause `[p->v]` as a path; `None` unless `p` is a chain of
    /// functor nodes whose off-path children are distinct variables.
    pub fn from_clause(c: &Clause) -> Option<Path> {
        let v = c.rhs.var_name()?;
        let mut steps = Vec::new();
        let mut cur = &c.lhs;
        let mut others = std::collections::BTreeSet::new();
        loop {
            if cur.var_name() == Some(v) {
                return Some(Path(steps));
            }
            let f = cur.functor()?;
            let mut next = None;
            for (i, a) in cur.args().iter().enumerate() {
                if a.vars().iter().any(|w| w == v) {
                    if next.is_some() {
                        return None;
                    }
                    next = Some(i);
                } else {
                    let w = a.var_name()?;
                    if !others.insert(w.clone()) {
                        return None;
                    }
                }
            }
            let i = next?;
            steps.push(Step::new(f.clone(), cur.arity(), i));
            cur = &cur.args()[i];
        }
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.to_clause();
        write!(f, "[{}->{}]", c.lhs, c.rhs)
    }
}

/// A run of `period` repeated `exp` times.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segment {
    pub period: Vec<Step>,
    pub exp: AffineExpr,
}

/// A path whose repetition counts may be affine expressions. Values are
/// always kept normalized, so structural equality is path equality for
/// the supported forms.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolicPath {
    segs: Vec<Segment>,
}

fn primitive_root(p: &[Step]) -> (Vec<Step>, i64) {
    let n = p.len();
    for d in 1..n {
        if n.is_multiple_of(d) && (d..n).all(|i| p[i] == p[i - d]) {
            return (p[..d].to_vec(), (n / d) as i64);
        }
    }
    (p.to_vec(), 1)
}

fn normalize(input: Vec<Segment>) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::with_capacity(input.len());
    let push = |out: &mut Vec<Segment>, s: Segment| {
        if let Some(last) = out.last_mut() {
            if last.period == s.period {
                last.exp = last.exp.clone() + s.exp;
                if last.exp.is_zero() {
                    out.pop();
                }
                return;
            }
        }
        out.push(s);
    };
    for s in input {
        if s.period.is_empty() || s.exp.is_zero() {
            continue;
        }
        match s.exp.as_constant() {
            Some(c) if s.period.len() > 1 => {
                for _ in 0..c.max(0) {
                    for st in &s.period {
                        push(&mut out, Segment { period: vec![st.clone()], exp: AffineExpr::constant(1) });
                    }
                }
                if c < 0 {
                    // kept verbatim so that evaluation fails
                    push(&mut out, s);
                }
            }
            _ => {
                let (root, q) = primitive_root(&s.period);
                push(&mut out, Segment { period: root, exp: s.exp.scale(q) });
            }
        }
    }
    // s.[v s]^e  ==  [s v]^e.s  moves constant steps to the right of
    // multi-step runs; [p]^e.p  ==  [p]^{e+1}.
    loop {
        let mut changed = false;
        let mut i = 0;
        while i < out.len() {
            let multi = out[i].period.len() > 1 && out[i].exp.as_constant().is_none();
            if multi && i > 0 {
                let last = out[i].period.last().cloned();
                let prev = &out[i - 1];
                if prev.period.len() == 1 && Some(&prev.period[0]) == last.as_ref() && prev.exp.as_constant().is_some_and(|c| c >= 1) {
                    let step = prev.period[0].clone();
                    let c = prev.exp.constant - 1;
                    if c == 0 {
                        out.remove(i - 1);
                        i -= 1;
                    } else {
                        out[i - 1].exp = AffineExpr::constant(c);
                    }
                    out[i].period.rotate_right(1);
                    out.insert(i + 1, Segment { period: vec![step], exp: AffineExpr::constant(1) });
                    changed = true;
                    continue;
                }
            }
            if multi {
                let p = out[i].period.clone();
                if absorb_period(&mut out, i + 1, &p) {
                    out[i].exp = out[i].exp.clone() + 1;
                    changed = true;
                    continue;
                }
            }
            i += 1;
        }
        if !changed {
            break;
        }
        let again = std::mem::take(&mut out);
        for s in again {
            push(&mut out, s);
        }
    }
    out
}

/// If the constant single-step segments from `start` begin with the steps
/// of `p`, removes those steps and returns true.
fn absorb_period(segs: &mut Vec<Segment>, start: usize, p: &[Step]) -> bool {
    let mut j = start;
    let mut used = 0i64;
    for w in p {
        let Some(s) = segs.get(j) else { return false };
        let Some(c) = s.exp.as_constant() else { return false };
        if s.period.len() != 1 || &s.period[0] != w {
            return false;
        }
        used += 1;
        if used == c {
            j += 1;
            used = 0;
        }
    }
    segs.drain(start..j);
    if used > 0 {
        segs[start].exp = segs[start].exp.clone() - used;
    }
    true
}

impl SymbolicPath {
    pub fn identity() -> SymbolicPath {
        SymbolicPath::default()
    }

    pub fn from_segments(segs: Vec<Segment>) -> SymbolicPath {
        SymbolicPath { segs: normalize(segs) }
    }

    pub fn from_path(p: &Path) -> SymbolicPath {
        SymbolicPath::from_segments(
            p.0.iter()
                .map(|s| Segment { period: vec![s.clone()], exp: AffineExpr::constant(1) })
                .collect(),
        )
    }

    pub fn step(s: Step) -> SymbolicPath {
        SymbolicPath::from_path(&Path(vec![s]))
    }

    /// `p^e` for a concrete period.
    pub fn repeat(p: &Path, e: AffineExpr) -> SymbolicPath {
        SymbolicPath::from_segments(vec![Segment { period: p.0.clone(), exp: e }])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segs
    }

    pub fn is_identity(&self) -> bool {
        self.segs.is_empty()
    }

    pub fn then(&self, q: &SymbolicPath) -> SymbolicPath {
        let mut v = self.segs.clone();
        v.extend(q.segs.iter().cloned());
        SymbolicPath::from_segments(v)
    }

    pub fn is_concrete(&self) -> bool {
        self.segs.iter().all(|s| s.exp.is_constant())
    }

    /// Total number of steps.
    pub fn length(&self) -> AffineExpr {
        self.segs
            .iter()
            .fold(AffineExpr::zero(), |acc, s| acc + s.exp.scale(s.period.len() as i64))
    }

    /// The sequence of periods, ignoring repetition counts.
    pub fn skeleton(&self) -> Vec<Vec<Step>> {
        self.segs.iter().map(|s| s.period.clone()).collect()
    }

    pub fn map_exps(&self, f: &impl Fn(&AffineExpr) -> AffineExpr) -> SymbolicPath {
        SymbolicPath::from_segments(
            self.segs
                .iter()
                .map(|s| Segment { period: s.period.clone(), exp: f(&s.exp) })
                .collect(),
        )
    }

    /// The concrete path under `env`; `None` if an exponent is unbound or
    /// negative.
    pub fn eval(&self, env: &Env) -> Option<Path> {
        let mut steps = Vec::new();
        for s in &self.segs {
            let e = s.exp.eval(env)?;
            if e < 0 {
                return None;
            }
            for _ in 0..e {
                steps.extend(s.period.iter().cloned());
            }
        }
        Some(Path(steps))
    }

    /// Applies the path under `env` without materializing it.
    pub fn apply<'a>(&self, env: &Env, t: &'a Term) -> Option<&'a Term> {
        let mut cur = t;
        for s in &self.segs {
            let e = s.exp.eval(env)?;
            if e < 0 {
                return None;
            }
            for _ in 0..e {
                for st in &s.period {
                    cur = st.apply(cur)?;
                }
            }
        }
        Some(cur)
    }

    pub fn vars(&self) -> std::collections::BTreeSet<String> {
        self.segs.iter().flat_map(|s| s.exp.vars()).collect()
    }
}

fn compact(e: &AffineExpr) -> String {
    let s = e.to_string().replace(' ', "");
    if e.terms.len() + usize::from(e.constant != 0) <= 1 && !s.starts_with('-') && !s.contains('[') {
        s
    } else {
        format!("{{{s}}}")
    }
}

impl fmt::Display for SymbolicPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.segs.is_empty() {
            return write!(f, "[x->x]");
        }
        let mut first = true;
        let mut run: Vec<Step> = Vec::new();
        let flush = |f: &mut fmt::Formatter<'_>, run: &mut Vec<Step>, first: &mut bool| -> fmt::Result {
            if !run.is_empty() {
                if !*first {
                    write!(f, ".")?;
                }
                write!(f, "{}", Path(std::mem::take(run)))?;
                *first = false;
            }
            Ok(())
        };
        for s in &self.segs {
            match s.exp.as_constant() {
                Some(c) if c >= 0 => {
                    for _ in 0..c {
                        run.extend(s.period.iter().cloned());
                    }
                }
                _ => {
                    flush(f, &mut run, &mut first)?;
                    if !first {
                        write!(f, ".")?;
                    }
                    write!(f, "{}^{}", Path(s.period.clone()), compact(&s.exp))?;
                    first = false;
                }
            }
        }
        flush(f, &mut run, &mut first)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::parse_affine;
    use crate::syntax::parse_term;
    use proptest::prelude::*;

    fn step(f: &str, arity: usize, child: usize) -> Step {
        Step::new(f, arity, child)
    }

    fn clause_path(s: &str) -> Path {
        let (l, r) = s.split_once("->").unwrap();
        let c = Clause::new("p", parse_term(l).unwrap(), parse_term(r).unwrap()).unwrap();
        Path::from_clause(&c).unwrap()
    }

    #[test]
    fn composition_and_power() {
        let p = clause_path("P(x, y) -> x").compose(&clause_path("R(x, y) -> y"));
        assert_eq!(p.to_string(), "[P(R(x, y), z)->y]");
        assert_eq!(clause_path("F(x) -> x").power(4).to_string(), "[F(F(F(F(x))))->x]");
        assert_eq!(clause_path("R(x, y) -> x").power(2).to_string(), "[R(R(x, y), z)->x]");
        assert_eq!(
            clause_path("P(x) -> x").compose(&clause_path("P(x) -> x")).to_string(),
            "[P(P(x))->x]"
        );
        assert_eq!(Path::identity().compose(&clause_path("F(x) -> x")), clause_path("F(x) -> x"));
        assert_eq!(clause_path("F(x) -> x").power(0).to_string(), "[x->x]");
    }

    #[test]
    fn application() {
        let t = parse_term("P(F(F(F(F(Z)))))").unwrap();
        let p = clause_path("P(x) -> x").compose(&clause_path("F(x) -> x").power(3));
        assert_eq!(p.apply(&t), Some(&parse_term("F(Z)").unwrap()));
        assert_eq!(clause_path("F(x) -> x").apply(&parse_term("G(Z)").unwrap()), None);
        let t = parse_term("P(F(Z), Z)").unwrap();
        assert_eq!(clause_path("P(x, y) -> x").apply(&t), Some(&parse_term("F(Z)").unwrap()));
    }

    #[test]
    fn symbolic_normalization() {
        let p0 = SymbolicPath::step(step("P", 2, 0));
        let ff = Path(vec![step("F", 1, 0), step("F", 1, 0)]);
        let f = Path(vec![step("F", 1, 0)]);
        let n = parse_affine("n").unwrap();
        let a = p0
            .then(&SymbolicPath::from_path(&f.power(3)))
            .then(&SymbolicPath::repeat(&ff, n))
            .then(&SymbolicPath::from_path(&f));
        assert_eq!(a.to_string(), "[P(x, y)->x].[F(x)->x]^{2n+4}");
        assert_eq!(a.segments().len(), 2);
        let zero = SymbolicPath::repeat(&f, AffineExpr::zero());
        assert!(zero.is_identity());
    }

    #[test]
    fn rotation_and_absorption() {
        let r0 = step("R", 2, 0);
        let r1 = step("R", 2, 1);
        let n = parse_affine("n").unwrap();
        let per = Path(vec![r0.clone(), r1.clone()]);
        // R1.[R0 R1]^n == [R1 R0]^n.R1
        let a = SymbolicPath::step(r1.clone()).then(&SymbolicPath::repeat(&per, n.clone()));
        let b = SymbolicPath::repeat(&Path(vec![r1.clone(), r0.clone()]), n.clone())
            .then(&SymbolicPath::step(r1.clone()));
        assert_eq!(a, b);
        // [R0 R1]^n.R0.R1 == [R0 R1]^{n+1}
        let c = SymbolicPath::repeat(&per, n.clone()).then(&SymbolicPath::from_path(&per));
        assert_eq!(c, SymbolicPath::repeat(&per, n + 1));
    }

    fn arb_path() -> impl Strategy<Value = Path> {
        prop::collection::vec((0usize..2, 0usize..2), 0..6).prop_map(|v| {
            Path(
                v.into_iter()
                    .map(|(f, c)| if f == 0 { Step::new("F", 1, 0) } else { Step::new("R", 2, c) })
                    .collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn power_composes(p in arb_path(), m in 0usize..4, n in 0usize..4) {
            prop_assert_eq!(p.power(m + n), p.power(m).compose(&p.power(n)));
        }

        #[test]
        fn clause_round_trip(p in arb_path()) {
            prop_assert_eq!(Path::from_clause(&p.to_clause()), Some(p));
        }

        #[test]
        fn symbolic_eval_matches_concrete(p in arb_path(), q in arb_path(), n in 0i64..4) {
            let e = parse_affine("n").unwrap();
            let s = SymbolicPath::from_path(&p).then(&SymbolicPath::repeat(&q, e)).then(&SymbolicPath::from_path(&q));
            let env = Env::new().with_scalar("n", n);
            let want = p.compose(&q.power(n as usize + 1));
            prop_assert_eq!(s.eval(&env), Some(want));
        }
    }
}
