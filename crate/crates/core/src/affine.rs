//! Affine integer expressions over index variables.
//!
//! A term is the length of an index variable or of one of its (possibly
//! nested) elements: `n`, `m[i]`, `m[1][i]`. Subscripts are themselves
//! affine expressions and are 1-based.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::scheme::MultiIndex;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexTerm {
    pub var: String,
    pub path: Vec<AffineExpr>,
}

impl IndexTerm {
    pub fn scalar(var: impl Into<String>) -> IndexTerm {
        IndexTerm {
            var: var.into(),
            path: Vec::new(),
        }
    }

    pub fn elem(var: impl Into<String>, path: Vec<AffineExpr>) -> IndexTerm {
        IndexTerm {
            var: var.into(),
            path,
        }
    }

    pub fn is_scalar(&self) -> bool {
        self.path.is_empty()
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        out.insert(self.var.clone());
        for p in &self.path {
            p.collect_vars(out);
        }
    }
}

impl fmt::Display for IndexTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.var)?;
        for p in &self.path {
            write!(f, "[{p}]")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AffineExpr {
    pub constant: i64,
    pub terms: BTreeMap<IndexTerm, i64>,
}

/// Values for evaluation: multi-index variables, whose terms evaluate to
/// lengths, and plain integer variables such as iteration counters.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Env {
    pub indices: HashMap<String, MultiIndex>,
    pub scalars: HashMap<String, i64>,
}

impl Env {
    pub fn new() -> Env {
        Env::default()
    }

    pub fn with_scalar(mut self, v: impl Into<String>, x: i64) -> Env {
        self.scalars.insert(v.into(), x);
        self
    }

    pub fn with_index(mut self, v: impl Into<String>, m: MultiIndex) -> Env {
        self.indices.insert(v.into(), m);
        self
    }

    /// The value of a term, or `None` when a variable is unbound or a
    /// subscript is out of range.
    pub fn term(&self, t: &IndexTerm) -> Option<i64> {
        if t.path.is_empty() {
            if let Some(x) = self.scalars.get(&t.var) {
                return Some(*x);
            }
        }
        let mut cur = self.indices.get(&t.var)?;
        for p in &t.path {
            let i = p.eval(self)?;
            if i < 1 {
                return None;
            }
            cur = cur.get(i as u64)?;
        }
        i64::try_from(cur.len()).ok()
    }
}

impl AffineExpr {
    pub fn constant(c: i64) -> AffineExpr {
        AffineExpr {
            constant: c,
            terms: BTreeMap::new(),
        }
    }

    pub fn zero() -> AffineExpr {
        AffineExpr::constant(0)
    }

    pub fn var(v: impl Into<String>) -> AffineExpr {
        AffineExpr::term(IndexTerm::scalar(v))
    }

    pub fn term(t: IndexTerm) -> AffineExpr {
        let mut terms = BTreeMap::new();
        terms.insert(t, 1);
        AffineExpr { constant: 0, terms }
    }

    /// `var[sub]` with a single subscript.
    pub fn elem(v: impl Into<String>, sub: AffineExpr) -> AffineExpr {
        AffineExpr::term(IndexTerm::elem(v, vec![sub]))
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<i64> {
        self.is_constant().then_some(self.constant)
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0 && self.terms.is_empty()
    }

    pub fn coeff(&self, t: &IndexTerm) -> i64 {
        self.terms.get(t).copied().unwrap_or(0)
    }

    pub fn add_term(&mut self, t: IndexTerm, c: i64) {
        if c == 0 {
            return;
        }
        let e = self.terms.entry(t.clone()).or_insert(0);
        *e += c;
        if *e == 0 {
            self.terms.remove(&t);
        }
    }

    pub fn scale(&self, k: i64) -> AffineExpr {
        if k == 0 {
            return AffineExpr::zero();
        }
        AffineExpr {
            constant: self.constant * k,
            terms: self.terms.iter().map(|(t, c)| (t.clone(), c * k)).collect(),
        }
    }

    /// Every variable name, including those inside subscripts.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        for t in self.terms.keys() {
            t.collect_vars(out);
        }
    }

    pub fn mentions(&self, v: &str) -> bool {
        self.vars().contains(v)
    }

    /// Rewrites every term (innermost subscripts first) through `f`; terms
    /// for which `f` returns `None` are kept.
    pub fn map_terms(&self, f: &impl Fn(&IndexTerm) -> Option<AffineExpr>) -> AffineExpr {
        let mut out = AffineExpr::constant(self.constant);
        for (t, c) in &self.terms {
            let t2 = IndexTerm {
                var: t.var.clone(),
                path: t.path.iter().map(|p| p.map_terms(f)).collect(),
            };
            match f(&t2) {
                Some(e) => out = out + e.scale(*c),
                None => out.add_term(t2, *c),
            }
        }
        out
    }

    /// Replaces the scalar variable `v` by `e`, also inside subscripts.
    pub fn subst(&self, v: &str, e: &AffineExpr) -> AffineExpr {
        self.map_terms(&|t| (t.is_scalar() && t.var == v).then(|| e.clone()))
    }

    pub fn subst_all(&self, map: &HashMap<String, AffineExpr>) -> AffineExpr {
        self.map_terms(&|t| {
            if t.is_scalar() {
                map.get(&t.var).cloned()
            } else {
                None
            }
        })
    }

    /// Renames variables (also inside subscripts).
    pub fn rename(&self, f: &impl Fn(&str) -> String) -> AffineExpr {
        let mut out = AffineExpr::constant(self.constant);
        for (t, c) in &self.terms {
            let t2 = IndexTerm {
                var: f(&t.var),
                path: t.path.iter().map(|p| p.rename(f)).collect(),
            };
            out.add_term(t2, *c);
        }
        out
    }

    pub fn eval(&self, env: &Env) -> Option<i64> {
        let mut acc = self.constant;
        for (t, c) in &self.terms {
            acc += c * env.term(t)?;
        }
        Some(acc)
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: AffineExpr) -> AffineExpr {
        self.constant += rhs.constant;
        for (t, c) in rhs.terms {
            self.add_term(t, c);
        }
        self
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: AffineExpr) -> AffineExpr {
        self + rhs.scale(-1)
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self.scale(-1)
    }
}

impl Add<i64> for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: i64) -> AffineExpr {
        self.constant += rhs;
        self
    }
}

impl Sub<i64> for AffineExpr {
    type Output = AffineExpr;
    fn sub(mut self, rhs: i64) -> AffineExpr {
        self.constant -= rhs;
        self
    }
}

impl Mul<i64> for AffineExpr {
    type Output = AffineExpr;
    fn mul(self, rhs: i64) -> AffineExpr {
        self.scale(rhs)
    }
}

impl From<i64> for AffineExpr {
    fn from(c: i64) -> AffineExpr {
        AffineExpr::constant(c)
    }
}

impl fmt::Display for AffineExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        // positive terms first, so that `m - i` reads naturally
        let ordered = self
            .terms
            .iter()
            .filter(|(_, c)| **c > 0)
            .chain(self.terms.iter().filter(|(_, c)| **c < 0));
        for (t, &c) in ordered {
            let (sign, mag) = if c < 0 { ("-", -c) } else { ("+", c) };
            if first {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if mag != 1 {
                write!(f, "{mag}")?;
            }
            write!(f, "{t}")?;
            first = false;
        }
        if first {
            write!(f, "{}", self.constant)
        } else if self.constant > 0 {
            write!(f, " + {}", self.constant)
        } else if self.constant < 0 {
            write!(f, " - {}", -self.constant)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

/// Parses expressions such as `2n + 4`, `m[1][i] - u[m[1] - 1]`, `3*k`,
/// `2(n + 1)` or `|m[1]|` (bars are optional length notation).
pub fn parse_affine(s: &str) -> Result<AffineExpr, ParseError> {
    let mut p = AffineParser { s: s.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip();
    if p.pos != p.s.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

pub(crate) struct AffineParser<'a> {
    pub(crate) s: &'a [u8],
    pub(crate) pos: usize,
}

impl AffineParser<'_> {
    pub(crate) fn skip(&mut self) {
        while self.s.get(self.pos).is_some_and(|c| *c == b' ' || *c == b'\t') {
            self.pos += 1;
        }
    }

    fn err(&self, msg: &str) -> ParseError {
        ParseError {
            pos: self.pos + 1,
            msg: msg.into(),
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip();
        self.s.get(self.pos).copied()
    }

    pub(crate) fn expr(&mut self) -> Result<AffineExpr, ParseError> {
        let mut acc = AffineExpr::zero();
        let mut sign = 1;
        if self.peek() == Some(b'-') {
            self.pos += 1;
            sign = -1;
        }
        loop {
            acc = acc + self.product()?.scale(sign);
            match self.peek() {
                Some(b'+') => sign = 1,
                Some(b'-') => sign = -1,
                _ => return Ok(acc),
            }
            self.pos += 1;
        }
    }

    fn number(&mut self) -> Option<i64> {
        self.skip();
        let start = self.pos;
        while self.s.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        std::str::from_utf8(&self.s[start..self.pos]).ok()?.parse().ok()
    }

    fn product(&mut self) -> Result<AffineExpr, ParseError> {
        let coeff = self.number();
        if self.peek() == Some(b'*') {
            self.pos += 1;
        }
        let starts_atom = matches!(self.peek(), Some(c) if c.is_ascii_alphabetic() || c == b'(' || c == b'|');
        match (coeff, starts_atom) {
            (Some(c), false) => Ok(AffineExpr::constant(c)),
            (c, true) => Ok(self.atom()?.scale(c.unwrap_or(1))),
            (None, false) => Err(self.err("expected number, variable or '('")),
        }
    }

    fn atom(&mut self) -> Result<AffineExpr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(b'|') => {
                self.pos += 1;
                let t = self.term()?;
                if self.peek() != Some(b'|') {
                    return Err(self.err("expected closing '|'"));
                }
                self.pos += 1;
                Ok(AffineExpr::term(t))
            }
            _ => Ok(AffineExpr::term(self.term()?)),
        }
    }

    pub(crate) fn ident(&mut self) -> Result<String, ParseError> {
        self.skip();
        let start = self.pos;
        if !self.s.get(self.pos).is_some_and(u8::is_ascii_alphabetic) {
            return Err(self.err("expected identifier"));
        }
        while self
            .s
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        Ok(String::from_utf8_lossy(&self.s[start..self.pos]).into_owned())
    }

    fn term(&mut self) -> Result<IndexTerm, ParseError> {
        let var = self.ident()?;
        let mut path = Vec::new();
        while self.s.get(self.pos) == Some(&b'[') {
            self.pos += 1;
            path.push(self.expr()?);
            if self.peek() != Some(b']') {
                return Err(self.err("expected ']'"));
            }
            self.pos += 1;
        }
        Ok(IndexTerm { var, path })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::parse_multi_index;
    use proptest::prelude::*;

    fn a(s: &str) -> AffineExpr {
        parse_affine(s).unwrap()
    }

    #[test]
    fn display() {
        assert_eq!(a("2n + 4").to_string(), "2n + 4");
        assert_eq!(a("n - i").to_string(), "n - i");
        assert_eq!(a("m[1][i]").to_string(), "m[1][i]");
        assert_eq!(a("n - n").to_string(), "0");
        assert_eq!(a("-3 + 2*k").to_string(), "2k - 3");
        assert_eq!(a("2(n+1) - |m[1]|").to_string(), "2n - m[1] + 2");
    }

    #[test]
    fn evaluation() {
        let env = Env::new()
            .with_index("m", parse_multi_index("{{4,1,2},{5,2,0,1}}").unwrap())
            .with_scalar("i", 2);
        assert_eq!(a("m").eval(&env), Some(2));
        assert_eq!(a("m[1]").eval(&env), Some(3));
        assert_eq!(a("m[2][i+2]").eval(&env), Some(1));
        assert_eq!(a("m[1][m[1]] + m[2][2]").eval(&env), Some(4));
        assert_eq!(a("m[3]").eval(&env), None);
        assert_eq!(a("k").eval(&env), None);
    }

    #[test]
    fn substitution() {
        let e = a("m[i] + i");
        assert_eq!(e.subst("i", &a("j + 1")), a("m[j+1] + j + 1"));
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(c in -50i64..50, x in -5i64..5, y in -5i64..5, z in -3i64..3) {
            let mut e = AffineExpr::constant(c);
            e.add_term(IndexTerm::scalar("n"), x);
            e.add_term(IndexTerm::scalar("k"), y);
            e.add_term(IndexTerm::elem("m", vec![AffineExpr::var("i") + 1]), z);
            prop_assert_eq!(parse_affine(&e.to_string()).unwrap(), e);
        }
    }
}
