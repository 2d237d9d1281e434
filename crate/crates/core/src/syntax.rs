//! Concrete syntax of theory files.
//!
//! ```text
//! # comment
//! start: P(Z, Z)
//! a: P(x, y) -> P(F(F(x)), G(y))
//! goal: P(F(F(Z)), G(Z))
//! ```
//!
//! Identifiers starting with a lowercase letter are variables, all others
//! are functors or constants.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::TheoryError;
use crate::term::{Clause, Term, Theory};

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col0: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str, line: usize, col0: usize) -> Self {
        Cursor {
            src: src.as_bytes(),
            pos: 0,
            line,
            col0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> TheoryError {
        TheoryError::Syntax {
            line: self.line,
            col: self.col0 + self.pos + 1,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<&'a str, TheoryError> {
        self.skip_ws();
        let start = self.pos;
        match self.src.get(self.pos) {
            Some(c) if c.is_ascii_alphabetic() => self.pos += 1,
            Some(&c) => return Err(self.err(format!("expected identifier, found '{}'", c as char))),
            None => return Err(self.err("expected identifier, found end of input")),
        }
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        // identifiers are ASCII by construction
        Ok(std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default())
    }

    fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }

    /// Iterative so that very deep goal sentences do not exhaust the stack.
    fn term(&mut self) -> Result<Term, TheoryError> {
        let mut stack: Vec<(&'a str, Vec<Term>)> = Vec::new();
        loop {
            let name = self.ident()?;
            let mut done = if self.eat(b'(') {
                stack.push((name, Vec::new()));
                continue;
            } else if name.as_bytes()[0].is_ascii_lowercase() {
                Term::var(name)
            } else {
                Term::constant(name)
            };
            loop {
                let Some((f, args)) = stack.last_mut() else {
                    return Ok(done);
                };
                args.push(done);
                if self.eat(b',') {
                    break;
                }
                if !self.eat(b')') {
                    return Err(self.err("expected ',' or ')'"));
                }
                if f.as_bytes()[0].is_ascii_lowercase() {
                    return Err(self.err(format!("variable {f} cannot take arguments")));
                }
                let (f, args) = stack.pop().unwrap_or_default();
                done = Term::app(f, args);
            }
        }
    }
}

/// Parses a single term, e.g. a goal given on the command line.
pub fn parse_term(s: &str) -> Result<Term, TheoryError> {
    let mut c = Cursor::new(s, 1, 0);
    let t = c.term()?;
    if !c.at_end() {
        return Err(c.err("trailing input after term"));
    }
    let mut sig = BTreeMap::new();
    t.signature(&mut sig)?;
    Ok(t)
}

/// Parses a ground term.
pub fn parse_ground(s: &str) -> Result<Term, TheoryError> {
    let t = parse_term(s)?;
    if !t.is_ground() {
        return Err(TheoryError::Syntax {
            line: 1,
            col: 1,
            msg: format!("{t} contains variables"),
        });
    }
    Ok(t)
}

pub fn parse_theory(text: &str) -> Result<Theory, TheoryError> {
    let mut start = None;
    let mut goal = None;
    let mut axioms = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let mut c = Cursor::new(line, i + 1, 0);
        let name = c.ident()?;
        if !c.eat(b':') {
            return Err(c.err("expected ':'"));
        }
        let lhs = c.term()?;
        match name {
            "start" | "goal" => {
                if !c.at_end() {
                    return Err(c.err("trailing input after sentence"));
                }
                let slot = if name == "start" { &mut start } else { &mut goal };
                if slot.is_some() {
                    return Err(c.err(format!("second {name} declaration")));
                }
                *slot = Some(lhs);
            }
            _ => {
                if !(c.eat(b'-') && c.src.get(c.pos) == Some(&b'>')) {
                    return Err(c.err("expected '->'"));
                }
                c.pos += 1;
                let rhs = c.term()?;
                if !c.at_end() {
                    return Err(c.err("trailing input after clause"));
                }
                axioms.push(Clause::new(name, lhs, rhs)?);
            }
        }
    }
    Theory::new(start.ok_or(TheoryError::MissingStart)?, axioms, goal)
}

/// Canonical text form; `parse_theory(&print_theory(th)) == th`.
pub fn print_theory(th: &Theory) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "start: {}", th.start);
    for c in &th.axioms {
        let _ = writeln!(out, "{}: {} -> {}", c.name, c.lhs, c.rhs);
    }
    if let Some(g) = &th.goal {
        let _ = writeln!(out, "goal: {g}");
    }
    out
}
