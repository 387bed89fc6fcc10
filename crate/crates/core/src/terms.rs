//! Parametric regressors and the term mini-language.
//!
//! Grammar (whitespace-insensitive, terms separated by `+`):
//!
//! ```text
//! term   := "1" | name | name "^" int | "s(" name ["," name] ["," "k=" int] ")"
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::gam::SmoothSpec;

/// A parametric regressor built from one input column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermSpec {
    Intercept,
    Linear(String),
    Power(String, u32),
}

impl TermSpec {
    pub fn linear(col: &str) -> Self {
        TermSpec::Linear(col.to_string())
    }

    pub fn power(col: &str, exponent: u32) -> Self {
        match exponent {
            1 => TermSpec::Linear(col.to_string()),
            e => TermSpec::Power(col.to_string(), e),
        }
    }

    pub fn column(&self) -> Option<&str> {
        match self {
            TermSpec::Intercept => None,
            TermSpec::Linear(c) | TermSpec::Power(c, _) => Some(c),
        }
    }

    /// Linear in its column (exponent one).
    pub fn is_linear_in(&self, col: &str) -> bool {
        match self {
            TermSpec::Linear(c) => c == col,
            TermSpec::Power(c, 1) => c == col,
            _ => false,
        }
    }

    pub fn label(&self) -> String {
        match self {
            TermSpec::Intercept => "1".into(),
            TermSpec::Linear(c) => c.clone(),
            TermSpec::Power(c, e) => format!("{c}^{e}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TermSpec::Power(c, 0) => Err(Error::Config(format!("power term on `{c}` needs exponent >= 1"))),
            _ => Ok(()),
        }
    }

    fn value(&self, x: f64) -> f64 {
        match self {
            TermSpec::Intercept => 1.0,
            TermSpec::Linear(_) => x,
            TermSpec::Power(_, e) => x.powi(*e as i32),
        }
    }
}

/// Column index of each term in `design` (`None` for the intercept).
pub fn resolve(terms: &[TermSpec], design: &Design) -> Result<Vec<Option<usize>>> {
    terms
        .iter()
        .map(|t| {
            t.validate()?;
            t.column().map(|c| design.column_index(c)).transpose()
        })
        .collect()
}

pub fn model_matrix(terms: &[TermSpec], design: &Design) -> Result<DMatrix<f64>> {
    let idx = resolve(terms, design)?;
    let n = design.nrows();
    Ok(DMatrix::from_fn(n, terms.len(), |i, j| {
        let x = idx[j].map(|c| design.points[(i, c)]).unwrap_or(1.0);
        terms[j].value(x)
    }))
}

/// One parsed entry of a term list.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Parametric(TermSpec),
    Smooth(SmoothSpec),
}

pub fn split_terms(terms: &[Term]) -> (Vec<TermSpec>, Vec<SmoothSpec>) {
    let mut p = Vec::new();
    let mut s = Vec::new();
    for t in terms {
        match t {
            Term::Parametric(ts) => p.push(ts.clone()),
            Term::Smooth(ss) => s.push(ss.clone()),
        }
    }
    (p, s)
}

fn parse_error(pos: usize, msg: impl Into<String>) -> Error {
    Error::Config(format!("term parse error at position {pos}: {}", msg.into()))
}

struct Cursor<'a> {
    chars: Vec<(usize, char)>,
    at: usize,
    src: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            chars: src.char_indices().filter(|(_, c)| !c.is_whitespace()).collect(),
            at: 0,
            src,
        }
    }

    fn pos(&self) -> usize {
        self.chars.get(self.at).map(|&(p, _)| p + 1).unwrap_or(self.src.len() + 1)
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.at).map(|&(_, c)| c)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(parse_error(self.pos(), format!("expected `{c}`")))
        }
    }

    fn ident(&mut self) -> Result<String> {
        let start = self.pos();
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' || c == '.' {
                s.push(c);
                self.at += 1;
            } else {
                break;
            }
        }
        if s.is_empty() {
            return Err(parse_error(start, "expected a column name"));
        }
        Ok(s)
    }

    fn int(&mut self) -> Result<u32> {
        let start = self.pos();
        let mut s = String::new();
        while let Some(c) = self.peek().filter(char::is_ascii_digit) {
            s.push(c);
            self.at += 1;
        }
        s.parse().map_err(|_| parse_error(start, "expected an integer"))
    }
}

/// Parses a `+`-separated term list such as `1 + x1 + x2^2 + s(x1, k=10)`.
pub fn parse_terms(src: &str) -> Result<Vec<Term>> {
    let mut cur = Cursor::new(src);
    let mut out = Vec::new();
    if cur.peek().is_none() {
        return Err(parse_error(1, "empty term list"));
    }
    loop {
        out.push(parse_one(&mut cur)?);
        if cur.peek().is_none() {
            break;
        }
        cur.expect('+')?;
    }
    Ok(out)
}

fn parse_one(cur: &mut Cursor) -> Result<Term> {
    let start = cur.pos();
    let name = cur.ident()?;
    if name == "1" {
        return Ok(Term::Parametric(TermSpec::Intercept));
    }
    if name == "s" && cur.eat('(') {
        let mut columns = vec![cur.ident()?];
        let mut k = None;
        while cur.eat(',') {
            let at = cur.pos();
            let word = cur.ident()?;
            if cur.eat('=') {
                if word != "k" {
                    return Err(parse_error(at, format!("unknown smooth option `{word}`")));
                }
                k = Some(cur.int()? as usize);
            } else {
                columns.push(word);
            }
        }
        cur.expect(')')?;
        if columns.len() > 2 {
            return Err(parse_error(start, "smooths take one or two columns"));
        }
        return Ok(Term::Smooth(SmoothSpec { columns, k }));
    }
    if name.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        return Err(parse_error(start, format!("`{name}` is not a column name")));
    }
    if cur.eat('^') {
        let at = cur.pos();
        let e = cur.int()?;
        if e == 0 {
            return Err(parse_error(at, "exponent must be >= 1"));
        }
        return Ok(Term::Parametric(TermSpec::power(&name, e)));
    }
    Ok(Term::Parametric(TermSpec::Linear(name)))
}
