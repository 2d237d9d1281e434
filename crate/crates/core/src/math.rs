//! Linear condition systems over naturals: existential elimination,
//! concrete solving and hierarchical multi-index solving.

use std::collections::BTreeMap;
use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

use crate::affine::{parse_affine, AffineExpr, Env, IndexTerm};
use crate::error::SolverError;
use crate::scheme::MultiIndex;

type Q = Ratio<i64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Parameter,
    Existential,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Scalar,
    MultiIndex,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub role: Role,
    pub kind: Kind,
}

/// `expr ≡ residue (mod modulus)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Congruence {
    pub expr: AffineExpr,
    pub residue: i64,
    pub modulus: i64,
}

impl Congruence {
    pub fn holds(&self, env: &Env) -> Option<bool> {
        Some((self.expr.eval(env)? - self.residue).rem_euclid(self.modulus) == 0)
    }
}

impl fmt::Display for Congruence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} (mod {})", self.expr, self.residue, self.modulus)
    }
}

/// `lhs = rhs` for every `var` in `lower..=upper`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Family {
    pub var: String,
    pub lower: AffineExpr,
    pub upper: AffineExpr,
    pub lhs: AffineExpr,
    pub rhs: AffineExpr,
}

impl Family {
    fn range(&self, env: &Env) -> Option<std::ops::RangeInclusive<i64>> {
        Some(self.lower.eval(env)?..=self.upper.eval(env)?)
    }
}

fn fmt_bound(e: &AffineExpr) -> String {
    if e.is_constant() || (e.constant == 0 && e.terms.len() == 1 && e.terms.values().all(|c| *c == 1)) {
        e.to_string()
    } else {
        format!("({e})")
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "for {} = {}..{}: {} = {}",
            self.var,
            fmt_bound(&self.lower),
            fmt_bound(&self.upper),
            self.lhs,
            self.rhs
        )
    }
}

/// Prints `e >= 0` with the constant moved to the right.
pub struct Ineq<'a>(pub &'a AffineExpr);

impl fmt::Display for Ineq<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = self.0;
        if e.terms.is_empty() {
            return write!(f, "{} >= 0", e.constant);
        }
        let lhs = AffineExpr {
            constant: 0,
            terms: e.terms.clone(),
        };
        write!(f, "{lhs} >= {}", -e.constant)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConditionSystem {
    pub vars: Vec<VarDecl>,
    pub equations: Vec<(AffineExpr, AffineExpr)>,
    /// Each entry is `e >= 0`.
    pub inequalities: Vec<AffineExpr>,
    pub congruences: Vec<Congruence>,
    pub families: Vec<Family>,
}

impl ConditionSystem {
    pub fn new() -> ConditionSystem {
        ConditionSystem::default()
    }

    pub fn declare(&mut self, name: impl Into<String>, role: Role, kind: Kind) -> &mut Self {
        let name = name.into();
        if self.decl(&name).is_none() {
            self.vars.push(VarDecl { name, role, kind });
        }
        self
    }

    pub fn param(mut self, name: &str) -> Self {
        self.declare(name, Role::Parameter, Kind::Scalar);
        self
    }

    pub fn exists(mut self, name: &str) -> Self {
        self.declare(name, Role::Existential, Kind::Scalar);
        self
    }

    pub fn eq(mut self, lhs: AffineExpr, rhs: AffineExpr) -> Self {
        self.equations.push((lhs, rhs));
        self
    }

    pub fn decl(&self, name: &str) -> Option<&VarDecl> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn role(&self, name: &str) -> Option<Role> {
        self.decl(name).map(|d| d.role)
    }

    pub fn params(&self) -> Vec<&str> {
        self.names(Role::Parameter)
    }

    pub fn existentials(&self) -> Vec<&str> {
        self.names(Role::Existential)
    }

    fn names(&self, role: Role) -> Vec<&str> {
        self.vars
            .iter()
            .filter(|v| v.role == role)
            .map(|v| v.name.as_str())
            .collect()
    }

    pub fn is_trivial(&self) -> bool {
        self.equations.is_empty()
            && self.inequalities.is_empty()
            && self.congruences.is_empty()
            && self.families.is_empty()
    }

    /// Checks that every variable occurring is declared exactly once.
    pub fn validate(&self) -> Result<(), SolverError> {
        for (i, v) in self.vars.iter().enumerate() {
            if self.vars[..i].iter().any(|w| w.name == v.name) {
                return Err(SolverError::Syntax(format!("variable {} declared twice", v.name)));
            }
        }
        let check = |e: &AffineExpr, bound: Option<&str>| -> Result<(), SolverError> {
            for v in e.vars() {
                if Some(v.as_str()) != bound && self.decl(&v).is_none() {
                    return Err(SolverError::Syntax(format!("undeclared variable {v}")));
                }
            }
            Ok(())
        };
        for (l, r) in &self.equations {
            check(l, None)?;
            check(r, None)?;
        }
        for e in &self.inequalities {
            check(e, None)?;
        }
        for c in &self.congruences {
            check(&c.expr, None)?;
            if c.modulus < 1 {
                return Err(SolverError::Syntax(format!("bad modulus in {c}")));
            }
        }
        for fam in &self.families {
            if self.decl(&fam.var).is_some() {
                return Err(SolverError::Syntax(format!("family variable {} shadows a declaration", fam.var)));
            }
            check(&fam.lower, None)?;
            check(&fam.upper, None)?;
            check(&fam.lhs, Some(&fam.var))?;
            check(&fam.rhs, Some(&fam.var))?;
        }
        Ok(())
    }

    /// Evaluates every condition; unbound variables or out-of-range
    /// subscripts make the system false.
    pub fn holds(&self, env: &Env) -> bool {
        let eq = |l: &AffineExpr, r: &AffineExpr, env: &Env| match (l.eval(env), r.eval(env)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        };
        self.equations.iter().all(|(l, r)| eq(l, r, env))
            && self.inequalities.iter().all(|e| e.eval(env).is_some_and(|x| x >= 0))
            && self.congruences.iter().all(|c| c.holds(env) == Some(true))
            && self.families.iter().all(|fam| {
                let Some(range) = fam.range(env) else { return false };
                range.into_iter().all(|i| {
                    let env = env.clone().with_scalar(fam.var.clone(), i);
                    eq(&fam.lhs, &fam.rhs, &env)
                })
            })
    }

    /// Parses the line format printed by `Display`.
    pub fn parse(text: &str) -> Result<ConditionSystem, SolverError> {
        let mut sys = ConditionSystem::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let line = line.replace('≥', ">=").replace('≤', "<=").replace('−', "-").replace('≡', "=");
            sys.parse_line(&line)
                .map_err(|m| SolverError::Syntax(format!("line {}: {m}", no + 1)))?;
        }
        sys.validate()?;
        Ok(sys)
    }

    fn parse_line(&mut self, line: &str) -> Result<(), String> {
        let words: Vec<&str> = line.split_whitespace().collect();
        let role = match words[0] {
            "param" => Some(Role::Parameter),
            "exists" => Some(Role::Existential),
            _ => None,
        };
        if let Some(role) = role {
            let (kind, rest) = match words.get(1) {
                Some(&"index") => (Kind::MultiIndex, &words[2..]),
                _ => (Kind::Scalar, &words[1..]),
            };
            let names = rest.join(" ");
            for n in names.split(',').map(str::trim).filter(|n| !n.is_empty()) {
                if self.decl(n).is_some() {
                    return Err(format!("variable {n} declared twice"));
                }
                self.declare(n, role, kind);
            }
            return Ok(());
        }
        let expr = |s: &str| parse_affine(s.trim()).map_err(|e| format!("{} at column {}", e.msg, e.pos));
        if let Some(rest) = line.strip_prefix("for ") {
            let (var, rest) = rest.split_once('=').ok_or("expected '=' after family variable")?;
            let (lower, rest) = rest.split_once("..").ok_or("expected '..' in family range")?;
            let (upper, body) = rest.split_once(':').ok_or("expected ':' after family range")?;
            let (l, r) = body.split_once('=').ok_or("family body must be an equation")?;
            self.families.push(Family {
                var: var.trim().to_string(),
                lower: expr(lower)?,
                upper: expr(upper)?,
                lhs: expr(l)?,
                rhs: expr(r)?,
            });
        } else if let Some((l, r)) = line.split_once(">=") {
            self.inequalities.push(expr(l)? - expr(r)?);
        } else if let Some((l, r)) = line.split_once("<=") {
            self.inequalities.push(expr(r)? - expr(l)?);
        } else if let Some((body, m)) = line.split_once("(mod") {
            let (l, r) = body.split_once('=').ok_or("congruence needs '='")?;
            let modulus: i64 = m
                .trim()
                .trim_end_matches(')')
                .trim()
                .parse()
                .map_err(|_| "bad modulus")?;
            let residue: i64 = r.trim().parse().map_err(|_| "congruence residue must be a number")?;
            self.congruences.push(Congruence {
                expr: expr(l)?,
                residue,
                modulus,
            });
        } else if let Some((l, r)) = line.split_once('=') {
            self.equations.push((expr(l)?, expr(r)?));
        } else {
            return Err(format!("unrecognized condition {line:?}"));
        }
        Ok(())
    }
}

impl fmt::Display for ConditionSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.vars {
            let role = match v.role {
                Role::Parameter => "param",
                Role::Existential => "exists",
            };
            let kind = if v.kind == Kind::MultiIndex { " index" } else { "" };
            writeln!(f, "{role}{kind} {}", v.name)?;
        }
        for (l, r) in &self.equations {
            writeln!(f, "{l} = {r}")?;
        }
        for e in &self.inequalities {
            writeln!(f, "{}", Ineq(e))?;
        }
        for c in &self.congruences {
            writeln!(f, "{c}")?;
        }
        for fam in &self.families {
            writeln!(f, "{fam}")?;
        }
        Ok(())
    }
}

/// Parameter values for which a system has a natural solution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Region {
    Universal,
    Unsat,
    Conj {
        inequalities: Vec<AffineExpr>,
        congruences: Vec<Congruence>,
    },
}

impl Region {
    fn from_parts(inequalities: Vec<AffineExpr>, congruences: Vec<Congruence>) -> Region {
        let Some(inequalities) = simplify_inequalities(inequalities) else {
            return Region::Unsat;
        };
        if inequalities.is_empty() && congruences.is_empty() {
            Region::Universal
        } else {
            Region::Conj {
                inequalities,
                congruences,
            }
        }
    }

    pub fn is_universal(&self) -> bool {
        matches!(self, Region::Universal)
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, Region::Unsat)
    }

    pub fn contains(&self, env: &Env) -> bool {
        match self {
            Region::Universal => true,
            Region::Unsat => false,
            Region::Conj {
                inequalities,
                congruences,
            } => {
                inequalities.iter().all(|e| e.eval(env).is_some_and(|x| x >= 0))
                    && congruences.iter().all(|c| c.holds(env) == Some(true))
            }
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Universal => write!(f, "all"),
            Region::Unsat => write!(f, "none"),
            Region::Conj {
                inequalities,
                congruences,
            } => {
                let parts: Vec<String> = inequalities
                    .iter()
                    .map(|e| Ineq(e).to_string())
                    .chain(congruences.iter().map(|c| c.to_string()))
                    .collect();
                write!(f, "{}", parts.join(", "))
            }
        }
    }
}

/// True when `e >= 0` follows from every term being a natural number.
fn trivially_nonneg(e: &AffineExpr) -> bool {
    e.constant >= 0 && e.terms.values().all(|c| *c > 0)
}

/// True when `e >= 0` follows from at most three of `facts` (each used
/// once) plus nonnegativity of terms.
pub fn implied(e: &AffineExpr, facts: &[AffineExpr]) -> bool {
    if trivially_nonneg(e) {
        return true;
    }
    let n = facts.len();
    for a in 0..n {
        let r1 = e.clone() - facts[a].clone();
        if trivially_nonneg(&r1) {
            return true;
        }
        for b in a + 1..n {
            let r2 = r1.clone() - facts[b].clone();
            if trivially_nonneg(&r2) {
                return true;
            }
            for c in b + 1..n {
                if trivially_nonneg(&(r2.clone() - facts[c].clone())) {
                    return true;
                }
            }
        }
    }
    false
}

fn normalize_ineq(e: AffineExpr) -> AffineExpr {
    let g = e.terms.values().fold(0i64, |g, c| g.gcd(c));
    if g <= 1 {
        return e;
    }
    AffineExpr {
        constant: Integer::div_floor(&e.constant, &g),
        terms: e.terms.into_iter().map(|(t, c)| (t, c / g)).collect(),
    }
}

/// Normalizes, drops trivial and subsumed inequalities; `None` when the
/// conjunction is visibly unsatisfiable.
fn simplify_inequalities(ineqs: Vec<AffineExpr>) -> Option<Vec<AffineExpr>> {
    let mut out: Vec<AffineExpr> = Vec::new();
    for e in ineqs.into_iter().map(normalize_ineq) {
        if e.terms.is_empty() {
            if e.constant < 0 {
                return None;
            }
            continue;
        }
        if e.terms.values().all(|c| *c < 0) && e.constant < 0 {
            return None;
        }
        if trivially_nonneg(&e) {
            continue;
        }
        if let Some(o) = out.iter_mut().find(|o| o.terms == e.terms) {
            o.constant = o.constant.min(e.constant);
            continue;
        }
        out.push(e);
    }
    // single-term bounds must not cross
    let mut bounds: BTreeMap<&IndexTerm, (i64, i64)> = BTreeMap::new();
    for e in &out {
        if e.terms.len() == 1 {
            let (t, c) = e.terms.iter().next().expect("one term");
            let b = bounds.entry(t).or_insert((0, i64::MAX));
            if *c > 0 {
                b.0 = b.0.max(Integer::div_ceil(&-e.constant, c));
            } else {
                b.1 = b.1.min(Integer::div_floor(&e.constant, &-c));
            }
        }
    }
    if bounds.values().any(|(lo, hi)| lo > hi) {
        return None;
    }
    let mut kept: Vec<AffineExpr> = Vec::new();
    for (i, e) in out.iter().enumerate() {
        let others: Vec<AffineExpr> = kept.iter().chain(&out[i + 1..]).cloned().collect();
        if e.terms.len() > 1 && implied(e, &others) {
            continue;
        }
        kept.push(e.clone());
    }
    Some(kept)
}

/// A rational affine row `Σ c·t + k`.
#[derive(Clone, Debug, PartialEq)]
struct Row {
    c: BTreeMap<IndexTerm, Q>,
    k: Q,
}

impl Row {
    fn from_affine(e: &AffineExpr) -> Row {
        Row {
            c: e.terms.iter().map(|(t, c)| (t.clone(), Q::from(*c))).collect(),
            k: Q::from(e.constant),
        }
    }

    fn coef(&self, t: &IndexTerm) -> Q {
        self.c.get(t).copied().unwrap_or_else(Q::zero)
    }

    fn scale(&mut self, q: Q) {
        for v in self.c.values_mut() {
            *v *= q;
        }
        self.k *= q;
    }

    fn add_scaled(&mut self, other: &Row, q: Q) {
        for (t, c) in &other.c {
            let e = self.c.entry(t.clone()).or_insert_with(Q::zero);
            *e += *c * q;
        }
        self.c.retain(|_, c| !c.is_zero());
        self.k += other.k * q;
    }

    /// Replaces the term `t` by `val`.
    fn subst(&mut self, t: &IndexTerm, val: &Row) {
        if let Some(a) = self.c.remove(t) {
            self.add_scaled(val, a);
        }
    }

    fn mentions(&self, t: &IndexTerm) -> bool {
        self.c.contains_key(t)
    }

    /// The row scaled by the least common denominator `d`, as an integer
    /// expression, together with `d`.
    fn to_int(&self) -> (AffineExpr, i64) {
        let d = self
            .c
            .values()
            .chain(std::iter::once(&self.k))
            .fold(1i64, |d, q| d.lcm(q.denom()));
        let int = |q: &Q| (q * Q::from(d)).to_integer();
        let mut e = AffineExpr::constant(int(&self.k));
        for (t, c) in &self.c {
            e.add_term(t.clone(), int(c));
        }
        (e, d)
    }

    fn eval(&self, env: &Env) -> Option<Q> {
        let mut acc = self.k;
        for (t, c) in &self.c {
            acc += *c * Q::from(env.term(t)?);
        }
        Some(acc)
    }
}

struct Reduced {
    solved: Vec<(String, Row)>,
    rest: Vec<Row>,
    free: Vec<String>,
}

/// Gaussian elimination of `cols` (scalar variables) in the given order,
/// pivoting on the first row with a nonzero coefficient.
fn gauss(mut rows: Vec<Row>, cols: &[&str]) -> Reduced {
    let mut solved: Vec<(String, Row)> = Vec::new();
    // unit pivots first keep solved values integral where possible
    for unit_only in [true, false] {
        for col in cols {
            if solved.iter().any(|(v, _)| v == col) {
                continue;
            }
            let t = IndexTerm::scalar(*col);
            let pivot = rows.iter().position(|r| {
                let a = r.coef(&t);
                if unit_only {
                    a.abs().is_one()
                } else {
                    !a.is_zero()
                }
            });
            let Some(idx) = pivot else { continue };
            let mut val = rows.remove(idx);
            let a = val.c.remove(&t).expect("pivot coefficient");
            val.scale(-a.recip());
            for r in rows.iter_mut() {
                r.subst(&t, &val);
            }
            for (_, s) in solved.iter_mut() {
                s.subst(&t, &val);
            }
            solved.push((col.to_string(), val));
        }
    }
    solved.sort_by_key(|(v, _)| cols.iter().position(|c| c == v));
    let free = cols
        .iter()
        .filter(|c| !solved.iter().any(|(v, _)| v == *c))
        .map(|c| c.to_string())
        .collect();
    Reduced { solved, rest: rows, free }
}

fn equation_rows(sys: &ConditionSystem) -> Vec<Row> {
    sys.equations
        .iter()
        .map(|(l, r)| Row::from_affine(&(l.clone() - r.clone())))
        .collect()
}

/// `L ≡ 0 (mod d)` in normal form: `Ok(None)` when always true, `Err(())`
/// when never.
fn divisibility(l: &AffineExpr, d: i64) -> Result<Option<Congruence>, ()> {
    let mut terms: BTreeMap<IndexTerm, i64> = BTreeMap::new();
    for (t, c) in &l.terms {
        let r = c.rem_euclid(d);
        if r != 0 {
            terms.insert(t.clone(), r);
        }
    }
    let k = l.constant.rem_euclid(d);
    if terms.is_empty() {
        return if k == 0 { Ok(None) } else { Err(()) };
    }
    let g = terms.values().fold(d, |g, c| g.gcd(c));
    if k % g != 0 {
        return Err(());
    }
    let m = d / g;
    if m == 1 {
        return Ok(None);
    }
    Ok(Some(Congruence {
        expr: AffineExpr {
            constant: 0,
            terms: terms.into_iter().map(|(t, c)| (t, c / g)).collect(),
        },
        residue: (-k / g).rem_euclid(m),
        modulus: m,
    }))
}

/// An existential expressed through parameters: `var = numer / denom`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solved {
    pub var: String,
    pub numer: AffineExpr,
    pub denom: i64,
}

impl fmt::Display for Solved {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom == 1 {
            write!(f, "{} = {}", self.var, self.numer)
        } else if self.numer.terms.len() + usize::from(self.numer.constant != 0) <= 1 {
            write!(f, "{} = {}/{}", self.var, self.numer, self.denom)
        } else {
            write!(f, "{} = ({})/{}", self.var, self.numer, self.denom)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Elimination {
    pub region: Region,
    pub solved: Vec<Solved>,
    /// Parameter inequalities before subsumption, e.g. `n >= -1`.
    pub raw_inequalities: Vec<AffineExpr>,
    pub raw_congruences: Vec<Congruence>,
}

fn check_scalar_existentials(sys: &ConditionSystem) -> Result<(), SolverError> {
    for v in &sys.vars {
        if v.role == Role::Existential && v.kind == Kind::MultiIndex {
            return Err(SolverError::Unsupported(format!(
                "existential multi-index {} needs hierarchical solving",
                v.name
            )));
        }
    }
    let nested = |e: &AffineExpr| {
        e.terms.keys().any(|t| {
            t.path
                .iter()
                .any(|p| p.vars().iter().any(|v| sys.role(v) == Some(Role::Existential)))
        })
    };
    if sys.equations.iter().any(|(l, r)| nested(l) || nested(r)) || sys.inequalities.iter().any(nested) {
        return Err(SolverError::Unsupported("existential inside a subscript".into()));
    }
    Ok(())
}

/// Eliminates the existential variables of `sys`. The region is exactly
/// the set of parameter values (naturals) for which natural existential
/// values exist.
pub fn eliminate(sys: &ConditionSystem) -> Result<Elimination, SolverError> {
    sys.validate()?;
    if !sys.families.is_empty() {
        return Err(SolverError::Unsupported("equation families in scalar elimination".into()));
    }
    check_scalar_existentials(sys)?;
    let exist = sys.existentials();
    let red = gauss(equation_rows(sys), &exist);

    let mut ineqs = Vec::new();
    let mut congs = Vec::new();
    let mut unsat = false;
    for r in &red.rest {
        let (e, _) = r.to_int();
        if e.terms.is_empty() {
            unsat |= e.constant != 0;
        } else {
            ineqs.push(e.clone());
            ineqs.push(-e);
        }
    }
    let free_terms: Vec<IndexTerm> = red.free.iter().map(IndexTerm::scalar).collect();
    let mut solved = Vec::new();
    let mut cons = Vec::new();
    for (var, row) in &red.solved {
        let (numer, denom) = row.to_int();
        let open = free_terms.iter().any(|t| row.mentions(t));
        if open && denom != 1 {
            return Err(SolverError::Unsupported(format!("{var} is fractional in an undetermined existential")));
        }
        cons.push(numer.clone());
        match divisibility(&numer, denom) {
            Ok(Some(c)) => congs.push(c),
            Ok(None) => {}
            Err(()) => unsat = true,
        }
        solved.push(Solved {
            var: var.clone(),
            numer,
            denom,
        });
    }
    for e in &sys.inequalities {
        let mut row = Row::from_affine(e);
        for (var, val) in &red.solved {
            row.subst(&IndexTerm::scalar(var.as_str()), val);
        }
        cons.push(row.to_int().0);
    }
    for t in &free_terms {
        cons = project_out(cons, t)?;
    }
    ineqs.extend(cons);
    for c in &sys.congruences {
        if c.expr.vars().iter().any(|v| sys.role(v) == Some(Role::Existential)) {
            return Err(SolverError::Unsupported(format!("congruence {c} over an existential")));
        }
        congs.push(c.clone());
    }
    let raw_inequalities: Vec<AffineExpr> = ineqs
        .iter()
        .filter(|e| !e.terms.is_empty())
        .cloned()
        .map(normalize_ineq)
        .collect();
    let region = if unsat {
        Region::Unsat
    } else {
        Region::from_parts(ineqs, congs.clone())
    };
    Ok(Elimination {
        region,
        solved,
        raw_inequalities,
        raw_congruences: congs,
    })
}

/// Removes the undetermined existential `t` from constraints `e >= 0`,
/// exactly over the naturals. Handles a variable that only helps or only
/// hurts, and unit coefficients.
fn project_out(cons: Vec<AffineExpr>, t: &IndexTerm) -> Result<Vec<AffineExpr>, SolverError> {
    let (with, mut out): (Vec<AffineExpr>, Vec<AffineExpr>) = cons.into_iter().partition(|e| e.coeff(t) != 0);
    let rest = |e: &AffineExpr| {
        let mut e = e.clone();
        e.terms.remove(t);
        e
    };
    if with.iter().all(|e| e.coeff(t) < 0) {
        out.extend(with.iter().map(rest));
    } else if with.iter().all(|e| e.coeff(t) > 0) {
        // large enough values satisfy them all
    } else if with.iter().all(|e| e.coeff(t).abs() == 1) {
        let uppers: Vec<AffineExpr> = with.iter().filter(|e| e.coeff(t) < 0).map(rest).collect();
        let mut lowers: Vec<AffineExpr> = with.iter().filter(|e| e.coeff(t) > 0).map(|e| -rest(e)).collect();
        lowers.push(AffineExpr::zero());
        for u in &uppers {
            for l in &lowers {
                out.push(u.clone() - l.clone());
            }
        }
    } else {
        return Err(SolverError::Unsupported(format!("cannot project out {t}")));
    }
    Ok(out)
}

const ENUMERATION_LIMIT: u64 = 1_000_000;

/// Solves a parameter-free system. Returns the unique natural solution,
/// or the lexicographically least one in declaration order, or `None`
/// when there is none.
pub fn solve_concrete(sys: &ConditionSystem) -> Result<Option<BTreeMap<String, i64>>, SolverError> {
    sys.validate()?;
    if let Some(p) = sys.vars.iter().find(|v| v.role == Role::Parameter || v.kind == Kind::MultiIndex) {
        return Err(SolverError::Unsupported(format!("{} is not a scalar unknown", p.name)));
    }
    if !sys.families.is_empty() {
        return Err(SolverError::Unsupported("equation families in a concrete system".into()));
    }
    let names = sys.existentials();
    let red = gauss(equation_rows(sys), &names);
    if red.rest.iter().any(|r| !r.k.is_zero()) {
        return Ok(None);
    }
    // constraints `row >= 0` restricting the free variables
    let mut lower: Vec<Row> = red.solved.iter().map(|(_, r)| r.clone()).collect();
    for e in &sys.inequalities {
        let mut row = Row::from_affine(e);
        for (var, val) in &red.solved {
            row.subst(&IndexTerm::scalar(var.as_str()), val);
        }
        lower.push(row);
    }
    let free: Vec<IndexTerm> = red.free.iter().map(IndexTerm::scalar).collect();
    let mut bounds = Vec::new();
    for f in &free {
        let mut best: Option<i64> = None;
        for row in &lower {
            let a = row.coef(f);
            let others_nonpos = free.iter().all(|g| g == f || !row.coef(g).is_positive());
            if a.is_negative() && others_nonpos {
                let b = (row.k / -a).floor().to_integer();
                best = Some(best.map_or(b, |x| x.min(b)));
            }
        }
        match best {
            Some(b) if b < 0 => return Ok(None),
            Some(b) => bounds.push(b),
            None => return Err(SolverError::Underdetermined(format!("{} is unbounded", f.var))),
        }
    }
    let total = bounds.iter().try_fold(1u64, |acc, b| acc.checked_mul(*b as u64 + 1));
    if total.is_none_or(|t| t > ENUMERATION_LIMIT) {
        return Err(SolverError::Unsupported("solution space too large to enumerate".into()));
    }
    let mut point = vec![0i64; free.len()];
    let mut best: Option<Vec<i64>> = None;
    loop {
        let mut env = Env::new();
        for (f, v) in red.free.iter().zip(&point) {
            env = env.with_scalar(f.clone(), *v);
        }
        let mut ok = true;
        for (var, row) in &red.solved {
            let q = row.eval(&env).expect("free variables bound");
            if !q.is_integer() || q.is_negative() {
                ok = false;
                break;
            }
            env = env.with_scalar(var.clone(), q.to_integer());
        }
        if ok && sys.holds(&env) {
            let tuple: Vec<i64> = names.iter().map(|n| env.scalars[*n]).collect();
            if best.as_ref().is_none_or(|b| tuple < *b) {
                best = Some(tuple);
            }
        }
        // odometer, last variable fastest
        let mut i = point.len();
        loop {
            if i == 0 {
                return Ok(best.map(|b| names.iter().map(|n| n.to_string()).zip(b).collect()));
            }
            i -= 1;
            if point[i] < bounds[i] {
                point[i] += 1;
                point[i + 1..].iter_mut().for_each(|x| *x = 0);
                break;
            }
        }
    }
}

/// One element-level definition of the target, possibly quantified.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ElementDef {
    /// Iteration variable and its inclusive bounds.
    pub family: Option<(String, AffineExpr, AffineExpr)>,
    pub subscript: AffineExpr,
    pub value: AffineExpr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiSolution {
    pub target: String,
    pub length: AffineExpr,
    pub elements: Vec<ElementDef>,
    pub region: Region,
    /// Extra conditions under which every subscript of a non-quantified
    /// element definition lies in `1..=length`.
    pub selector_conditions: Vec<AffineExpr>,
}

impl MultiSolution {
    /// Builds the target for parameter values in `env`, elements as
    /// naturals. `None` when a position is undefined or defined twice
    /// with different values.
    pub fn build(&self, env: &Env) -> Option<MultiIndex> {
        let len = usize::try_from(self.length.eval(env)?).ok()?;
        let mut slots: Vec<Option<i64>> = vec![None; len];
        let put = |sub: i64, val: i64, slots: &mut Vec<Option<i64>>| -> Option<()> {
            let slot = slots.get_mut(usize::try_from(sub - 1).ok()?)?;
            if val < 0 || slot.is_some_and(|v| v != val) {
                return None;
            }
            *slot = Some(val);
            Some(())
        };
        for def in &self.elements {
            match &def.family {
                None => put(def.subscript.eval(env)?, def.value.eval(env)?, &mut slots)?,
                Some((var, lo, hi)) => {
                    for i in lo.eval(env)?..=hi.eval(env)? {
                        let env = env.clone().with_scalar(var.clone(), i);
                        put(def.subscript.eval(&env)?, def.value.eval(&env)?, &mut slots)?;
                    }
                }
            }
        }
        let elems = slots
            .into_iter()
            .map(|v| v.map(|v| MultiIndex::Nat(v as u64)))
            .collect::<Option<Vec<_>>>()?;
        Some(MultiIndex::List(elems))
    }
}

impl fmt::Display for ElementDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] = {}", self.subscript, self.value)?;
        if let Some((v, lo, hi)) = &self.family {
            write!(f, ", for {v} = {}..{}", fmt_bound(lo), fmt_bound(hi))?;
        }
        Ok(())
    }
}

impl fmt::Display for MultiSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} = {}", self.target, self.length)?;
        for e in &self.elements {
            writeln!(f, "{}{e}", self.target)?;
        }
        write!(f, "region: {}", self.region)
    }
}

enum Occurrence {
    None,
    Length(i64),
    Element(AffineExpr, i64),
}

fn occurrence(e: &AffineExpr, target: &str) -> Result<Occurrence, SolverError> {
    let mut found = Occurrence::None;
    for (t, c) in &e.terms {
        if t.path.iter().any(|p| p.mentions(target)) {
            return Err(SolverError::Unsupported(format!("{target} inside a subscript of {t}")));
        }
        if t.var != target {
            continue;
        }
        let this = match t.path.as_slice() {
            [] => Occurrence::Length(*c),
            [s] => Occurrence::Element(s.clone(), *c),
            _ => return Err(SolverError::Unsupported(format!("nested element {t} of the target"))),
        };
        if !matches!(found, Occurrence::None) {
            return Err(SolverError::Unsupported(format!(
                "condition {e} = 0 mentions more than one entry of {target}"
            )));
        }
        found = this;
    }
    Ok(found)
}

/// Solves `sys` for the multi-index `target`, first its length, then each
/// element by isolation. Every other variable is a parameter.
pub fn solve_multiindex(sys: &ConditionSystem, target: &str) -> Result<MultiSolution, SolverError> {
    sys.validate()?;
    match sys.decl(target) {
        Some(d) if d.kind == Kind::MultiIndex => {}
        _ => return Err(SolverError::Syntax(format!("{target} is not a declared multi-index"))),
    }
    let mut conds: Vec<(Option<(String, AffineExpr, AffineExpr)>, AffineExpr)> = sys
        .equations
        .iter()
        .map(|(l, r)| (None, l.clone() - r.clone()))
        .collect();
    conds.extend(sys.families.iter().map(|f| {
        (
            Some((f.var.clone(), f.lower.clone(), f.upper.clone())),
            f.lhs.clone() - f.rhs.clone(),
        )
    }));

    // length level
    let mut length = None;
    for (fam, e) in &conds {
        if fam.is_some() {
            continue;
        }
        if let Occurrence::Length(a) = occurrence(e, target)? {
            let rest = e.clone() - AffineExpr::var(target).scale(a);
            let divisible = rest.constant % a == 0 && rest.terms.values().all(|c| c % a == 0);
            if !divisible {
                return Err(SolverError::Unsupported(format!("length of {target} needs division by {a}")));
            }
            length = Some(AffineExpr {
                constant: -rest.constant / a,
                terms: rest.terms.iter().map(|(t, c)| (t.clone(), -c / a)).collect(),
            });
            break;
        }
    }
    let length = length.ok_or_else(|| SolverError::Unsupported(format!("no length equation for {target}")))?;
    let subst_len = |e: &AffineExpr| e.map_terms(&|t| (t.var == target && t.path.is_empty()).then(|| length.clone()));

    let mut params: Vec<AffineExpr> = Vec::new();
    let mut elements = Vec::new();
    for (fam, e) in &conds {
        let e = subst_len(e);
        let fam = fam
            .as_ref()
            .map(|(v, lo, hi)| (v.clone(), subst_len(lo), subst_len(hi)));
        match occurrence(&e, target)? {
            Occurrence::Length(_) => unreachable!("length substituted"),
            Occurrence::None => {
                if fam.is_some() {
                    return Err(SolverError::Unsupported(format!("family {e} = 0 without the target")));
                }
                if !e.is_zero() {
                    params.push(e.clone());
                    params.push(-e);
                }
            }
            Occurrence::Element(sub, c) => {
                if c.abs() != 1 {
                    return Err(SolverError::Unsupported(format!("element coefficient {c} in {e} = 0")));
                }
                let term = AffineExpr::term(IndexTerm::elem(target, vec![sub.clone()]));
                let value = (e - term.scale(c)).scale(-c);
                elements.push(ElementDef {
                    family: fam,
                    subscript: sub,
                    value,
                });
            }
        }
    }
    for e in &sys.inequalities {
        let e = subst_len(e);
        if !matches!(occurrence(&e, target)?, Occurrence::None) {
            return Err(SolverError::Unsupported(format!("inequality {} on elements of {target}", Ineq(&e))));
        }
        params.push(e);
    }
    let mut congs = Vec::new();
    for c in &sys.congruences {
        if c.expr.mentions(target) {
            return Err(SolverError::Unsupported(format!("congruence {c} on {target}")));
        }
        congs.push(c.clone());
    }
    let mut nonneg = vec![length.clone()];
    for d in &elements {
        let quantified = d.family.as_ref().is_some_and(|(v, _, _)| d.value.mentions(v));
        if quantified && !trivially_nonneg(&d.value) {
            return Err(SolverError::Unsupported(format!("sign of {} varies with the family", d.value)));
        }
        nonneg.push(d.value.clone());
    }
    let region = Region::from_parts(params.iter().cloned().chain(nonneg).collect(), congs);

    let facts = match &region {
        Region::Conj { inequalities, .. } => inequalities.clone(),
        _ => Vec::new(),
    };
    let mut selector_conditions: Vec<AffineExpr> = Vec::new();
    for d in elements.iter().filter(|d| d.family.is_none()) {
        for c in [d.subscript.clone() - 1, length.clone() - d.subscript.clone()] {
            let c = normalize_ineq(c);
            if !implied(&c, &facts) && !selector_conditions.contains(&c) {
                selector_conditions.push(c);
            }
        }
    }
    Ok(MultiSolution {
        target: target.to_string(),
        length,
        elements,
        region,
        selector_conditions,
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::parse_multi_index;
    use proptest::prelude::*;

    const MERGE: &str = "\
param index m
exists index u
m[1] >= 1
m[2] >= 1
m[1] + m[2] - u - 2 = 0
for i = 1..(m[1] - 2): m[1][i] - u[i] = 0
m[1][m[1] - 1] + m[2][1] - u[m[1] - 1] = 0
m[1][m[1]] + m[2][2] - u[m[1]] = 0
for i = 1..(m[2] - 2): m[2][i + 2] - u[m[1] + i] = 0
";

    fn sys(text: &str) -> ConditionSystem {
        ConditionSystem::parse(text).unwrap()
    }

    #[test]
    fn text_round_trips() {
        for text in [
            MERGE,
            "param n\nexists k\n2n + 4 = 2k + 2\nn + 3 = k + 2\n",
            "param n\nn = 1 (mod 3)\nn >= 2\n",
        ] {
            let s = sys(text);
            assert_eq!(sys(&s.to_string()), s);
        }
        assert!(ConditionSystem::parse("param n\nn = k\n").is_err());
        assert!(ConditionSystem::parse("param n\nexists n\n").is_err());
    }

    #[test]
    fn forward_inclusion_is_universal() {
        let el = eliminate(&sys("param n\nexists k\n2n + 4 = 2k + 2\nn + 3 = k + 2\n")).unwrap();
        assert_eq!(el.region, Region::Universal);
        assert_eq!(el.solved[0].to_string(), "k = n + 1");
        let raw: Vec<String> = el.raw_inequalities.iter().map(|e| Ineq(e).to_string()).collect();
        assert!(raw.contains(&"n >= -1".to_string()), "{raw:?}");
    }

    #[test]
    fn reversed_inclusion_needs_k_at_least_one() {
        let el = eliminate(&sys("param k\nexists n\n2k + 2 = 2n + 4\nk + 2 = n + 3\n")).unwrap();
        assert_eq!(el.region.to_string(), "k >= 1");
        assert_eq!(el.solved[0].to_string(), "n = k - 1");
    }

    #[test]
    fn halving_gives_parity_condition() {
        let el = eliminate(&sys("param n\nexists k\nn = 2k\n")).unwrap();
        assert_eq!(el.region.to_string(), "n = 0 (mod 2)");
        assert_eq!(el.solved[0].to_string(), "k = n/2");
    }

    #[test]
    fn inconsistent_and_parameter_only_rows() {
        let el = eliminate(&sys("param n\nexists k\nn = k\nn = k + 1\n")).unwrap();
        assert!(el.region.is_unsat());
        let el = eliminate(&sys("param n, p\nexists k\nn = k\np = k + 2\n")).unwrap();
        assert_eq!(el.region.to_string(), "p - n >= 2, n - p >= -2");
    }

    #[test]
    fn undetermined_existentials_are_projected() {
        let el = eliminate(&sys("param n\nexists j, l\n2j + l = n + 1\n")).unwrap();
        assert_eq!(el.region, Region::Universal);
        let el = eliminate(&sys("param n, p\nexists j, l\nj + l = n\nl >= p\n")).unwrap();
        assert_eq!(el.region.to_string(), "n - p >= 0");
    }

    #[test]
    fn concrete_examples() {
        let s = sys("exists n, k\nn + 2k = 8\nn + k = 5\n");
        let sol = solve_concrete(&s).unwrap().unwrap();
        assert_eq!((sol["n"], sol["k"]), (2, 3));
        let sol = solve_concrete(&sys("exists j\nj = 3\n")).unwrap().unwrap();
        assert_eq!(sol["j"], 3);
        assert_eq!(solve_concrete(&sys("exists n, k\nn + k = 1\nn >= 0\nk >= 0\nn = k\n")).unwrap(), None);
    }

    #[test]
    fn concrete_free_variables() {
        let s = sys("exists n, k\nn = k\n");
        assert!(matches!(solve_concrete(&s), Err(SolverError::Underdetermined(_))));
        let sol = solve_concrete(&sys("exists n, k\nn + k = 4\nn >= 3\n")).unwrap().unwrap();
        assert_eq!((sol["n"], sol["k"]), (3, 1));
        assert_eq!(solve_concrete(&sys("exists n, k\nn + k = 4\nn >= 5\n")).unwrap(), None);
    }

    fn merge_env(m: &str, u: &str) -> Env {
        Env::new()
            .with_index("m", parse_multi_index(m).unwrap())
            .with_index("u", parse_multi_index(u).unwrap())
    }

    #[test]
    fn merge_point_satisfies_system() {
        let s = sys(MERGE);
        assert!(s.holds(&merge_env("{{4,1,2},{5,2,0,1}}", "{4,6,4,0,1}")));
        assert!(!s.holds(&merge_env("{{4,1,2},{5,2,0,1}}", "{4,6,4,0,2}")));
    }

    #[test]
    fn merge_solved_form() {
        let sol = solve_multiindex(&sys(MERGE), "u").unwrap();
        assert_eq!(sol.length.to_string(), "m[1] + m[2] - 2");
        let mut got: Vec<String> = sol.elements.iter().map(|e| format!("u{e}")).collect();
        got.sort();
        let mut want = vec![
            "u[i] = m[1][i], for i = 1..(m[1] - 2)",
            "u[m[1] - 1] = m[1][m[1] - 1] + m[2][1]",
            "u[m[1]] = m[1][m[1]] + m[2][2]",
            "u[i + m[1]] = m[2][i + 2], for i = 1..(m[2] - 2)",
        ];
        want.sort();
        assert_eq!(got, want);
        assert_eq!(sol.region.to_string(), "m[1] >= 1, m[2] >= 1");
        let sel: Vec<String> = sol.selector_conditions.iter().map(|e| Ineq(e).to_string()).collect();
        assert_eq!(sel, ["m[1] >= 2", "m[2] >= 2"]);
        let env = merge_env("{{4,1,2},{5,2,0,1}}", "{}");
        assert_eq!(sol.build(&env).unwrap(), parse_multi_index("{4,6,4,0,1}").unwrap());
    }

    #[test]
    fn empty_target() {
        let sol = solve_multiindex(&sys("exists index u\nu = 0\n"), "u").unwrap();
        assert_eq!(sol.region, Region::Universal);
        assert_eq!(sol.build(&Env::new()).unwrap(), MultiIndex::List(vec![]));
    }

    #[test]
    fn two_target_entries_are_unsupported() {
        let s = sys("param n\nexists index u\nu = n\nu[1] + u[2] = n\n");
        assert!(matches!(solve_multiindex(&s, "u"), Err(SolverError::Unsupported(_))));
    }

    fn nat_list(xs: &[u64]) -> MultiIndex {
        MultiIndex::List(xs.iter().map(|x| MultiIndex::Nat(*x)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn solved_multi_index_satisfies_system(
            a in prop::collection::vec(0u64..10, 2..7),
            b in prop::collection::vec(0u64..10, 2..7),
        ) {
            let s = sys(MERGE);
            let sol = solve_multiindex(&s, "u").unwrap();
            let env = Env::new().with_index("m", MultiIndex::List(vec![nat_list(&a), nat_list(&b)]));
            prop_assert!(sol.region.contains(&env));
            let u = sol.build(&env).unwrap();
            prop_assert!(s.holds(&env.with_index("u", u)));
        }
    }

    fn exists_within(s: &ConditionSystem, env: &Env, names: &[&str], bound: i64) -> bool {
        match names.split_first() {
            None => s.holds(env),
            Some((v, rest)) => (0..=bound).any(|x| exists_within(s, &env.clone().with_scalar(*v, x), rest, bound)),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn region_is_exact_at_small_scale(
            rows in prop::collection::vec((1i64..4, -1i64..2, -2i64..3, -2i64..3, -6i64..7), 1..3),
            n in 0i64..=10,
            p in 0i64..=10,
        ) {
            // a·k + e·j + b·n + c·p + d = 0 with k, j existential
            let mut s = ConditionSystem::new().param("n").param("p").exists("k").exists("j");
            for (a, e, b, c, d) in &rows {
                let lhs = AffineExpr::var("k").scale(*a) + AffineExpr::var("j").scale(*e)
                    + AffineExpr::var("n").scale(*b) + AffineExpr::var("p").scale(*c) + *d;
                s = s.eq(lhs, AffineExpr::zero());
            }
            let el = eliminate(&s);
            prop_assume!(el.is_ok());
            let env = Env::new().with_scalar("n", n).with_scalar("p", p);
            let inside = el.unwrap().region.contains(&env);
            prop_assert_eq!(inside, exists_within(&s, &env, &["k", "j"], 200));
        }

        #[test]
        fn concrete_solutions_satisfy_system(
            rows in prop::collection::vec((0i64..4, 0i64..4, 0i64..20), 1..3),
        ) {
            let mut s = ConditionSystem::new().exists("n").exists("k");
            for (a, b, c) in &rows {
                let lhs = AffineExpr::var("n").scale(*a) + AffineExpr::var("k").scale(*b);
                s = s.eq(lhs, AffineExpr::constant(*c));
            }
            s.inequalities.push(AffineExpr::constant(20) - AffineExpr::var("n"));
            s.inequalities.push(AffineExpr::constant(20) - AffineExpr::var("k"));
            let got = solve_concrete(&s).unwrap();
            let brute = exists_within(&s, &Env::new(), &["n", "k"], 20);
            prop_assert_eq!(got.is_some(), brute);
            if let Some(sol) = got {
                let env = Env::new().with_scalar("n", sol["n"]).with_scalar("k", sol["k"]);
                prop_assert!(s.holds(&env));
            }
        }
    }
}
