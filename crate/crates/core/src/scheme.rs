//! Iterative expressions over axioms and their multi-index spaces.
//!
//! An expression such as `(a*.b)*.a*` denotes a family of axiom sequences.
//! A multi-index selects one member of the family; [`instantiate`] turns the
//! pair into a concrete sequence.

use std::fmt;

use crate::error::SchemeError;
use crate::term::{compose_clauses, Clause, Theory};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IterExpr {
    Axiom(String),
    Eps,
    Dot(Vec<IterExpr>),
    Star(Box<IterExpr>),
    Alt(Vec<IterExpr>),
}

impl IterExpr {
    pub fn axiom(name: impl Into<String>) -> IterExpr {
        IterExpr::Axiom(name.into())
    }

    pub fn star(e: IterExpr) -> IterExpr {
        match e {
            IterExpr::Eps => IterExpr::Eps,
            e => IterExpr::Star(Box::new(e)),
        }
    }

    /// Flattening, `eps`-dropping sequence constructor.
    pub fn dot(parts: impl IntoIterator<Item = IterExpr>) -> IterExpr {
        let mut out = Vec::new();
        for p in parts {
            match p {
                IterExpr::Eps => {}
                IterExpr::Dot(xs) => out.extend(xs),
                x => out.push(x),
            }
        }
        match out.len() {
            0 => IterExpr::Eps,
            1 => out.pop().unwrap_or(IterExpr::Eps),
            _ => IterExpr::Dot(out),
        }
    }

    /// Flattening alternative constructor; identical branches are merged.
    pub fn alt(parts: impl IntoIterator<Item = IterExpr>) -> IterExpr {
        let mut out: Vec<IterExpr> = Vec::new();
        for p in parts {
            let items = match p {
                IterExpr::Alt(xs) => xs,
                x => vec![x],
            };
            for x in items {
                if !out.contains(&x) {
                    out.push(x);
                }
            }
        }
        match out.len() {
            0 => IterExpr::Eps,
            1 => out.pop().unwrap_or(IterExpr::Eps),
            _ => IterExpr::Alt(out),
        }
    }

    /// Factors of a top-level sequence (a single factor otherwise).
    pub fn factors(&self) -> Vec<IterExpr> {
        match self {
            IterExpr::Dot(xs) => xs.clone(),
            IterExpr::Eps => Vec::new(),
            x => vec![x.clone()],
        }
    }

    pub fn axioms(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_axioms(&mut out);
        out
    }

    fn collect_axioms(&self, out: &mut Vec<String>) {
        match self {
            IterExpr::Axiom(a) => {
                if !out.contains(a) {
                    out.push(a.clone())
                }
            }
            IterExpr::Eps => {}
            IterExpr::Dot(xs) | IterExpr::Alt(xs) => xs.iter().for_each(|x| x.collect_axioms(out)),
            IterExpr::Star(b) => b.collect_axioms(out),
        }
    }

    /// Maximum nesting of `*`.
    pub fn star_depth(&self) -> usize {
        match self {
            IterExpr::Axiom(_) | IterExpr::Eps => 0,
            IterExpr::Dot(xs) | IterExpr::Alt(xs) => {
                xs.iter().map(IterExpr::star_depth).max().unwrap_or(0)
            }
            IterExpr::Star(b) => 1 + b.star_depth(),
        }
    }

    pub fn is_specific(&self) -> bool {
        match self {
            IterExpr::Axiom(_) | IterExpr::Eps => true,
            IterExpr::Dot(xs) => xs.iter().all(IterExpr::is_specific),
            _ => false,
        }
    }

    fn prec(&self) -> u8 {
        match self {
            IterExpr::Alt(_) => 0,
            IterExpr::Dot(_) => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for IterExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |f: &mut fmt::Formatter<'_>, e: &IterExpr, min: u8| {
            if e.prec() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            IterExpr::Axiom(a) => write!(f, "{a}"),
            IterExpr::Eps => write!(f, "eps"),
            IterExpr::Dot(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ".")?;
                    }
                    sub(f, x, 2)?;
                }
                Ok(())
            }
            IterExpr::Alt(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " | ")?;
                    }
                    sub(f, x, 1)?;
                }
                Ok(())
            }
            IterExpr::Star(b) => {
                if matches!(**b, IterExpr::Axiom(_) | IterExpr::Eps) {
                    write!(f, "{b}*")
                } else {
                    write!(f, "({b})*")
                }
            }
        }
    }
}

/// Parses `"(a*.b)*.a* | eps"`: `*` binds tightest, `|` loosest.
pub fn parse_scheme(s: &str) -> Result<IterExpr, SchemeError> {
    struct P<'a> {
        s: &'a [u8],
        pos: usize,
    }
    impl P<'_> {
        fn peek(&mut self) -> Option<u8> {
            while self.s.get(self.pos).is_some_and(u8::is_ascii_whitespace) {
                self.pos += 1;
            }
            self.s.get(self.pos).copied()
        }
        fn err(&self, msg: &str) -> SchemeError {
            SchemeError::Syntax {
                pos: self.pos + 1,
                msg: msg.into(),
            }
        }
        fn alt(&mut self) -> Result<IterExpr, SchemeError> {
            let mut parts = vec![self.dot()?];
            while self.peek() == Some(b'|') {
                self.pos += 1;
                parts.push(self.dot()?);
            }
            Ok(if parts.len() == 1 { parts.remove(0) } else { IterExpr::Alt(parts) })
        }
        fn dot(&mut self) -> Result<IterExpr, SchemeError> {
            let mut parts = vec![self.postfix()?];
            while self.peek() == Some(b'.') {
                self.pos += 1;
                parts.push(self.postfix()?);
            }
            Ok(IterExpr::dot(parts))
        }
        fn postfix(&mut self) -> Result<IterExpr, SchemeError> {
            let mut e = self.atom()?;
            while self.peek() == Some(b'*') {
                self.pos += 1;
                e = IterExpr::star(e);
            }
            Ok(e)
        }
        fn atom(&mut self) -> Result<IterExpr, SchemeError> {
            match self.peek() {
                Some(b'(') => {
                    self.pos += 1;
                    let e = self.alt()?;
                    if self.peek() != Some(b')') {
                        return Err(self.err("expected ')'"));
                    }
                    self.pos += 1;
                    Ok(e)
                }
                Some(c) if c.is_ascii_alphabetic() => {
                    let start = self.pos;
                    while self
                        .s
                        .get(self.pos)
                        .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
                    {
                        self.pos += 1;
                    }
                    let name = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
                    Ok(if name == "eps" { IterExpr::Eps } else { IterExpr::Axiom(name) })
                }
                _ => Err(self.err("expected axiom name, 'eps' or '('")),
            }
        }
    }
    let mut p = P { s: s.as_bytes(), pos: 0 };
    let e = p.alt()?;
    if p.peek().is_some() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

/// A natural number or a list of multi-indexes. `Unit` is the canonical
/// placeholder for positions that consume no index.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MultiIndex {
    Unit,
    Nat(u64),
    List(Vec<MultiIndex>),
}

impl MultiIndex {
    pub fn len(&self) -> u64 {
        match self {
            MultiIndex::Unit => 0,
            MultiIndex::Nat(n) => *n,
            MultiIndex::List(xs) => xs.len() as u64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// 1-based element access as in `m[i]`.
    pub fn get(&self, i: u64) -> Option<&MultiIndex> {
        match self {
            MultiIndex::List(xs) if i >= 1 => xs.get((i - 1) as usize),
            _ => None,
        }
    }

    /// A list of `n` placeholders.
    pub fn units(n: usize) -> MultiIndex {
        MultiIndex::List(vec![MultiIndex::Unit; n])
    }

    pub fn at_path(&self, path: &[usize]) -> Option<&MultiIndex> {
        let mut cur = self;
        for &i in path {
            match cur {
                MultiIndex::List(xs) => cur = xs.get(i)?,
                _ => return None,
            }
        }
        Some(cur)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MultiIndex::Unit => write!(f, "u"),
            MultiIndex::Nat(n) => write!(f, "{n}"),
            MultiIndex::List(xs) => {
                write!(f, "{{")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// Parses `{{2, 0, 1}, 3}`; `u` denotes a placeholder.
pub fn parse_multi_index(s: &str) -> Result<MultiIndex, SchemeError> {
    fn go(s: &[u8], pos: &mut usize) -> Result<MultiIndex, SchemeError> {
        let skip = |pos: &mut usize| {
            while s.get(*pos).is_some_and(u8::is_ascii_whitespace) {
                *pos += 1;
            }
        };
        let err = |pos: usize, msg: &str| SchemeError::Syntax {
            pos: pos + 1,
            msg: msg.into(),
        };
        skip(pos);
        match s.get(*pos) {
            Some(b'{') => {
                *pos += 1;
                let mut xs = Vec::new();
                skip(pos);
                if s.get(*pos) == Some(&b'}') {
                    *pos += 1;
                    return Ok(MultiIndex::List(xs));
                }
                loop {
                    xs.push(go(s, pos)?);
                    skip(pos);
                    match s.get(*pos) {
                        Some(b',') => *pos += 1,
                        Some(b'}') => {
                            *pos += 1;
                            return Ok(MultiIndex::List(xs));
                        }
                        _ => return Err(err(*pos, "expected ',' or '}'")),
                    }
                }
            }
            Some(b'u') => {
                *pos += 1;
                Ok(MultiIndex::Unit)
            }
            Some(c) if c.is_ascii_digit() => {
                let start = *pos;
                while s.get(*pos).is_some_and(u8::is_ascii_digit) {
                    *pos += 1;
                }
                let text = String::from_utf8_lossy(&s[start..*pos]);
                text.parse()
                    .map(MultiIndex::Nat)
                    .map_err(|_| err(start, "number out of range"))
            }
            _ => Err(err(*pos, "expected multi-index")),
        }
    }
    let bytes = s.as_bytes();
    let mut pos = 0;
    let m = go(bytes, &mut pos)?;
    while bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        pos += 1;
    }
    if pos != bytes.len() {
        return Err(SchemeError::Syntax {
            pos: pos + 1,
            msg: "trailing input".into(),
        });
    }
    Ok(m)
}

/// The structure of canonical indexes of an expression.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum IndexShape {
    Unit,
    ListOf(Box<IndexShape>),
    Tuple(Vec<IndexShape>),
    Choice(Vec<IndexShape>),
}

impl fmt::Display for IndexShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexShape::Unit => write!(f, "Unit"),
            IndexShape::ListOf(s) => write!(f, "ListOf({s})"),
            IndexShape::Tuple(xs) | IndexShape::Choice(xs) => {
                let name = if matches!(self, IndexShape::Tuple(_)) { "Tuple" } else { "Choice" };
                write!(f, "{name}(")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
        }
    }
}

pub fn shape_of(e: &IterExpr) -> IndexShape {
    match e {
        IterExpr::Axiom(_) | IterExpr::Eps => IndexShape::Unit,
        IterExpr::Star(b) => IndexShape::ListOf(Box::new(shape_of(b))),
        IterExpr::Alt(xs) => IndexShape::Choice(xs.iter().map(shape_of).collect()),
        IterExpr::Dot(xs) => {
            let mut parts: Vec<IndexShape> = xs
                .iter()
                .map(shape_of)
                .filter(|s| *s != IndexShape::Unit)
                .collect();
            match parts.len() {
                0 => IndexShape::Unit,
                1 => parts.remove(0),
                _ => IndexShape::Tuple(parts),
            }
        }
    }
}

/// Positions (0-based) of the index-consuming factors of a sequence.
pub fn consuming_factors(xs: &[IterExpr]) -> Vec<usize> {
    (0..xs.len())
        .filter(|&i| shape_of(&xs[i]) != IndexShape::Unit)
        .collect()
}

fn coerce_shape(s: &IndexShape, m: &MultiIndex, path: &mut String) -> Result<MultiIndex, SchemeError> {
    let fail = |path: &String, msg: String| SchemeError::Shape {
        path: if path.is_empty() { "root".into() } else { path.clone() },
        msg,
    };
    match s {
        IndexShape::Unit => Ok(MultiIndex::Unit),
        IndexShape::ListOf(el) => {
            let items: Vec<MultiIndex> = match m {
                MultiIndex::Unit => Vec::new(),
                MultiIndex::Nat(n) => vec![MultiIndex::Unit; *n as usize],
                MultiIndex::List(xs) => xs.clone(),
            };
            let mut out = Vec::with_capacity(items.len());
            for (i, x) in items.iter().enumerate() {
                let len = path.len();
                path.push_str(&format!("[{}]", i + 1));
                out.push(coerce_shape(el, x, path)?);
                path.truncate(len);
            }
            Ok(MultiIndex::List(out))
        }
        IndexShape::Tuple(parts) => {
            let items: Vec<MultiIndex> = match m {
                MultiIndex::Unit => vec![MultiIndex::Unit; parts.len()],
                MultiIndex::List(xs) if xs.len() == parts.len() => xs.clone(),
                other => {
                    return Err(fail(
                        path,
                        format!("expected a list of {} components, found {other}", parts.len()),
                    ))
                }
            };
            let mut out = Vec::with_capacity(parts.len());
            for (i, (p, x)) in parts.iter().zip(&items).enumerate() {
                let len = path.len();
                path.push_str(&format!("[{}]", i + 1));
                out.push(coerce_shape(p, x, path)?);
                path.truncate(len);
            }
            Ok(MultiIndex::List(out))
        }
        IndexShape::Choice(branches) => match m {
            MultiIndex::List(xs) if xs.len() == 2 => {
                let b = match xs[0] {
                    MultiIndex::Nat(b) if b >= 1 && (b as usize) <= branches.len() => b as usize,
                    ref other => {
                        return Err(fail(
                            path,
                            format!("branch selector must be in 1..{}, found {other}", branches.len()),
                        ))
                    }
                };
                let len = path.len();
                path.push_str("[2]");
                let sub = coerce_shape(&branches[b - 1], &xs[1], path)?;
                path.truncate(len);
                Ok(MultiIndex::List(vec![MultiIndex::Nat(b as u64), sub]))
            }
            other => Err(fail(
                path,
                format!("choice index must have length 2, found {other}"),
            )),
        },
    }
}

/// Brings `m` into the canonical form for `e`.
pub fn coerce_index(e: &IterExpr, m: &MultiIndex) -> Result<MultiIndex, SchemeError> {
    coerce_shape(&shape_of(e), m, &mut String::new())
}

fn inst(e: &IterExpr, m: &MultiIndex, out: &mut Vec<String>) {
    match e {
        IterExpr::Axiom(a) => out.push(a.clone()),
        IterExpr::Eps => {}
        IterExpr::Star(b) => {
            if let MultiIndex::List(xs) = m {
                for x in xs {
                    inst(b, x, out);
                }
            }
        }
        IterExpr::Alt(bs) => {
            if let MultiIndex::List(xs) = m {
                if let (Some(MultiIndex::Nat(b)), Some(sub)) = (xs.first(), xs.get(1)) {
                    inst(&bs[*b as usize - 1], sub, out);
                }
            }
        }
        IterExpr::Dot(xs) => {
            let cons = consuming_factors(xs);
            let mut next = 0;
            for (i, x) in xs.iter().enumerate() {
                if cons.len() == 1 && cons[0] == i {
                    inst(x, m, out);
                } else if cons.contains(&i) {
                    if let Some(sub) = m.get(next as u64 + 1) {
                        inst(x, sub, out);
                    }
                    next += 1;
                } else {
                    inst(x, &MultiIndex::Unit, out);
                }
            }
        }
    }
}

/// The specific expression selected by `m`, as a list of axiom names.
pub fn instantiate(e: &IterExpr, m: &MultiIndex) -> Result<Vec<String>, SchemeError> {
    let m = coerce_index(e, m)?;
    let mut out = Vec::new();
    inst(e, &m, &mut out);
    Ok(out)
}

/// Left fold of clause composition; the empty sequence is the identity.
pub fn reduce_specific(th: &Theory, seq: &[String]) -> Result<Clause, SchemeError> {
    let mut acc = Clause::identity();
    for name in seq {
        let c = th
            .axiom(name)
            .ok_or_else(|| SchemeError::UnknownAxiom(name.clone()))?;
        acc = compose_clauses(&acc, c).ok_or(SchemeError::NoCompose)?;
    }
    Ok(acc)
}

/// All canonical indexes with instantiated length at most `budget` paired
/// with that length. Star elements instantiating to nothing are skipped, so
/// the result is finite.
fn gen(e: &IterExpr, budget: usize) -> Vec<(MultiIndex, usize)> {
    match e {
        IterExpr::Axiom(_) => {
            if budget >= 1 {
                vec![(MultiIndex::Unit, 1)]
            } else {
                Vec::new()
            }
        }
        IterExpr::Eps => vec![(MultiIndex::Unit, 0)],
        IterExpr::Alt(bs) => {
            let mut out = Vec::new();
            for (i, b) in bs.iter().enumerate() {
                for (sub, len) in gen(b, budget) {
                    out.push((MultiIndex::List(vec![MultiIndex::Nat(i as u64 + 1), sub]), len));
                }
            }
            out
        }
        IterExpr::Star(b) => {
            let elems: Vec<(MultiIndex, usize)> =
                gen(b, budget).into_iter().filter(|(_, l)| *l >= 1).collect();
            let mut out = Vec::new();
            let mut cur = Vec::new();
            fn seqs(
                elems: &[(MultiIndex, usize)],
                left: usize,
                used: usize,
                cur: &mut Vec<MultiIndex>,
                out: &mut Vec<(MultiIndex, usize)>,
            ) {
                out.push((MultiIndex::List(cur.clone()), used));
                for (m, l) in elems {
                    if *l <= left {
                        cur.push(m.clone());
                        seqs(elems, left - l, used + l, cur, out);
                        cur.pop();
                    }
                }
            }
            seqs(&elems, budget, 0, &mut cur, &mut out);
            out
        }
        IterExpr::Dot(xs) => {
            let cons = consuming_factors(xs);
            let fixed: usize = xs
                .iter()
                .enumerate()
                .filter(|(i, _)| !cons.contains(i))
                .map(|(_, x)| unit_len(x))
                .sum();
            if fixed > budget {
                return Vec::new();
            }
            let mut partial: Vec<(Vec<MultiIndex>, usize)> = vec![(Vec::new(), fixed)];
            for &i in &cons {
                let mut next = Vec::new();
                for (parts, used) in &partial {
                    for (m, l) in gen(&xs[i], budget - used) {
                        let mut p = parts.clone();
                        p.push(m);
                        next.push((p, used + l));
                    }
                }
                partial = next;
            }
            partial
                .into_iter()
                .map(|(mut parts, l)| {
                    let m = if parts.len() == 1 {
                        parts.remove(0)
                    } else if parts.is_empty() {
                        MultiIndex::Unit
                    } else {
                        MultiIndex::List(parts)
                    };
                    (m, l)
                })
                .collect()
        }
    }
}

/// Instantiated length of an index-free expression.
fn unit_len(e: &IterExpr) -> usize {
    let mut out = Vec::new();
    inst(e, &MultiIndex::Unit, &mut out);
    out.len()
}

/// Canonical indexes whose instantiation has length at most `budget`,
/// ordered by instantiated length and then by index.
pub fn enumerate_indices(e: &IterExpr, budget: usize) -> Vec<MultiIndex> {
    let mut all = gen(e, budget);
    all.sort_by(|(a, la), (b, lb)| la.cmp(lb).then_with(|| a.cmp(b)));
    all.into_iter().map(|(m, _)| m).collect()
}

/// `a1*`, then `(alpha.a_n)*.alpha` for each further axiom.
pub fn build_scheme(axioms: &[String]) -> IterExpr {
    let mut it = axioms.iter();
    let Some(first) = it.next() else {
        return IterExpr::Eps;
    };
    let mut alpha = IterExpr::star(IterExpr::axiom(first.clone()));
    for a in it {
        alpha = extend_scheme(&alpha, a);
    }
    alpha
}

/// One construction step: `(alpha.a)*.alpha`.
pub fn extend_scheme(alpha: &IterExpr, a: &str) -> IterExpr {
    IterExpr::dot([
        IterExpr::star(IterExpr::dot([alpha.clone(), IterExpr::axiom(a)])),
        alpha.clone(),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_theory;
    use std::collections::BTreeSet;

    fn e(s: &str) -> IterExpr {
        parse_scheme(s).unwrap()
    }

    fn mi(s: &str) -> MultiIndex {
        parse_multi_index(s).unwrap()
    }

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parse_and_print() {
        for s in ["(a*.b)*.a*", "a | b", "a.b.a*.b", "((a*.b)*.a*.c)*.(a*.b)*.a*", "b*.a*.b | eps"] {
            assert_eq!(e(s).to_string(), s);
        }
        assert_eq!(e("((a*.b)*).a*"), e("(a*.b)*.a*"));
        assert!(parse_scheme("a.").is_err());
    }

    #[test]
    fn shapes() {
        assert_eq!(
            shape_of(&e("(a*.b)*.a*")).to_string(),
            "Tuple(ListOf(ListOf(Unit)), ListOf(Unit))"
        );
        assert_eq!(shape_of(&e("a")), IndexShape::Unit);
        assert_eq!(shape_of(&e("a | b")), IndexShape::Choice(vec![IndexShape::Unit; 2]));
    }

    #[test]
    fn worked_instantiation() {
        let x = e("(a*.b)*.a*");
        let m = mi("{{2,0,1},3}");
        assert_eq!(
            coerce_index(&x, &m).unwrap(),
            mi("{{{u,u},{},{u}},{u,u,u}}")
        );
        assert_eq!(
            instantiate(&x, &m).unwrap(),
            names(&["a", "a", "b", "b", "a", "b", "a", "a", "a"])
        );
        assert_eq!(instantiate(&e("a*"), &mi("0")).unwrap(), Vec::<String>::new());
        assert_eq!(
            instantiate(&e("a.b.a*.b"), &mi("2")).unwrap(),
            names(&["a", "b", "a", "a", "b"])
        );
    }

    #[test]
    fn coerce_errors_and_idempotence() {
        assert!(matches!(
            coerce_index(&e("a | b"), &mi("{5}")),
            Err(SchemeError::Shape { .. })
        ));
        assert_eq!(coerce_index(&e("a*"), &mi("0")).unwrap(), mi("{}"));
        let x = e("(a*.b)*.a*");
        let c = coerce_index(&x, &mi("{{2,0,1},3}")).unwrap();
        assert_eq!(coerce_index(&x, &c).unwrap(), c);
    }

    #[test]
    fn reduce_examples() {
        let th = parse_theory(include_str!("../theories/fg.tpc")).unwrap();
        let ba = reduce_specific(&th, &names(&["b", "a"])).unwrap();
        let ab = reduce_specific(&th, &names(&["a", "b"])).unwrap();
        assert_eq!(ba.to_string(), "b.a: P(x, y) -> P(F(F(F(x))), G(G(y)))");
        assert!(ab.same_relation(&ba));
        assert!(reduce_specific(&th, &[]).unwrap().is_identity());

        let th = parse_theory(include_str!("../theories/ancestor.tpc")).unwrap();
        let ll = reduce_specific(&th, &names(&["l1", "l1"])).unwrap();
        assert_eq!(ll.to_string(), "l1.l1: And(And(x, y), z) -> x");
    }

    #[test]
    fn enumeration_examples() {
        assert_eq!(
            enumerate_indices(&e("a*"), 2),
            vec![mi("{}"), mi("{u}"), mi("{u,u}")]
        );
        assert_eq!(enumerate_indices(&e("a | b"), 1), vec![mi("{1,u}"), mi("{2,u}")]);
        let x = e("(a*.b)*");
        let got: Vec<Vec<String>> = enumerate_indices(&x, 2)
            .iter()
            .map(|m| instantiate(&x, m).unwrap())
            .collect();
        assert_eq!(
            got,
            vec![vec![], names(&["b"]), names(&["b", "b"]), names(&["a", "b"])]
        );
    }

    #[test]
    fn build_scheme_steps() {
        assert_eq!(build_scheme(&names(&["a"])).to_string(), "a*");
        assert_eq!(build_scheme(&names(&["a", "b"])).to_string(), "(a*.b)*.a*");
        assert_eq!(
            build_scheme(&names(&["a", "b", "c"])).to_string(),
            "((a*.b)*.a*.c)*.(a*.b)*.a*"
        );
    }

    fn all_sequences(axioms: &[String], max: usize) -> BTreeSet<Vec<String>> {
        let mut out = BTreeSet::new();
        let mut layer = vec![Vec::new()];
        for _ in 0..=max {
            let mut next = Vec::new();
            for s in layer {
                out.insert(s.clone());
                for a in axioms {
                    let mut t: Vec<String> = s.clone();
                    t.push(a.clone());
                    next.push(t);
                }
            }
            layer = next.into_iter().filter(|s| s.len() <= max).collect();
        }
        out
    }

    #[test]
    fn build_scheme_covers_all_proofs() {
        for n in 1..=3 {
            let axioms: Vec<String> = ["a", "b", "c"][..n].iter().map(|s| s.to_string()).collect();
            let scheme = build_scheme(&axioms);
            for budget in 0..=5 {
                let idx = enumerate_indices(&scheme, budget);
                let got: Vec<Vec<String>> =
                    idx.iter().map(|m| instantiate(&scheme, m).unwrap()).collect();
                let set: BTreeSet<Vec<String>> = got.iter().cloned().collect();
                assert_eq!(set, all_sequences(&axioms, budget), "n={n} budget={budget}");
                assert_eq!(set.len(), got.len(), "duplicate instantiations");
            }
        }
    }
}
