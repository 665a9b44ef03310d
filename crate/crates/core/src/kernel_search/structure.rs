//! Symbolic kernel associations: a tree of basic kernels joined by `+` and
//! `×`, its distributed (sum-of-products) form, canonical text and parser.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::BasicKernelKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelStructure {
    Basic(BasicKernelKind),
    Sum(Vec<KernelStructure>),
    Product(Vec<KernelStructure>),
}

/// One product of basic kernels, factors kept sorted.
pub type Monomial = Vec<BasicKernelKind>;

impl KernelStructure {
    /// Sum of the given monomials.
    pub fn from_monomials(monomials: &[Monomial]) -> Self {
        let terms: Vec<_> = monomials
            .iter()
            .map(|m| {
                if m.len() == 1 {
                    Self::Basic(m[0])
                } else {
                    Self::Product(m.iter().map(|&k| Self::Basic(k)).collect())
                }
            })
            .collect();
        if terms.len() == 1 {
            terms.into_iter().next().unwrap()
        } else {
            Self::Sum(terms)
        }
    }

    /// Fully distributed expansion, keeping repeated monomials.
    pub fn expand(&self) -> Vec<Monomial> {
        match self {
            Self::Basic(k) => vec![vec![*k]],
            Self::Sum(children) => children.iter().flat_map(|c| c.expand()).collect(),
            Self::Product(children) => {
                let mut acc: Vec<Monomial> = vec![Vec::new()];
                for c in children {
                    let parts = c.expand();
                    let mut next = Vec::with_capacity(acc.len() * parts.len());
                    for a in &acc {
                        for p in &parts {
                            let mut m = a.clone();
                            m.extend_from_slice(p);
                            next.push(m);
                        }
                    }
                    acc = next;
                }
                acc
            }
        }
        .into_iter()
        .map(|mut m| {
            m.sort();
            m
        })
        .collect()
    }

    /// Distinct monomials in order of first appearance.
    pub fn monomials(&self) -> Vec<Monomial> {
        let mut out: Vec<Monomial> = Vec::new();
        for m in self.expand() {
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out
    }

    /// Evaluates the tree given a value for every basic kernel kind.
    pub fn eval_with(&self, value: &dyn Fn(BasicKernelKind) -> f64) -> f64 {
        match self {
            Self::Basic(k) => value(*k),
            Self::Sum(c) => c.iter().map(|c| c.eval_with(value)).sum(),
            Self::Product(c) => c.iter().map(|c| c.eval_with(value)).product(),
        }
    }

    pub fn canonical(&self) -> String {
        canonical_text(&self.monomials())
    }

    pub fn depth(&self) -> usize {
        match self {
            Self::Basic(_) => 1,
            Self::Sum(c) | Self::Product(c) => 1 + c.iter().map(|c| c.depth()).max().unwrap_or(0),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Parser::new(text);
        let expr = p.expr()?;
        p.skip_ws();
        if let Some((pos, c)) = p.peek() {
            return Err(Error::KernelSyntax {
                position: pos + 1,
                message: format!("unexpected '{c}'"),
            });
        }
        Ok(expr)
    }
}

/// `SE + PER + SE*PER + PER^2`-style text for a monomial list.
pub fn canonical_text(monomials: &[Monomial]) -> String {
    monomials
        .iter()
        .map(|m| monomial_text(m))
        .collect::<Vec<_>>()
        .join(" + ")
}

pub fn monomial_text(m: &[BasicKernelKind]) -> String {
    let mut sorted = m.to_vec();
    sorted.sort();
    let mut parts = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let k = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == k {
            j += 1;
        }
        let power = j - i;
        if power == 1 {
            parts.push(k.name().to_string());
        } else {
            parts.push(format!("{}^{power}", k.name()));
        }
        i = j;
    }
    parts.join("*")
}

impl fmt::Display for KernelStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl FromStr for KernelStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

// expr   := term ('+' term)*
// term   := factor (('*' | '×') factor)*
// factor := NAME ('^' INT)? | '(' expr ')' ('^' INT)?
struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Self {
        Self {
            chars: text.chars().collect(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<(usize, char)> {
        self.chars.get(self.pos).map(|&c| (self.pos, c))
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::KernelSyntax {
            position: self.pos + 1,
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<KernelStructure> {
        let mut terms = vec![self.term()?];
        loop {
            self.skip_ws();
            match self.peek() {
                Some((_, '+')) => {
                    self.pos += 1;
                    terms.push(self.term()?);
                }
                _ => break,
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            KernelStructure::Sum(terms)
        })
    }

    fn term(&mut self) -> Result<KernelStructure> {
        let mut factors = vec![self.factor()?];
        loop {
            self.skip_ws();
            match self.peek() {
                Some((_, '*')) | Some((_, '×')) => {
                    self.pos += 1;
                    factors.push(self.factor()?);
                }
                _ => break,
            }
        }
        Ok(if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            KernelStructure::Product(factors)
        })
    }

    fn factor(&mut self) -> Result<KernelStructure> {
        self.skip_ws();
        let base = match self.peek() {
            Some((_, '(')) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.skip_ws();
                match self.peek() {
                    Some((_, ')')) => self.pos += 1,
                    _ => return Err(self.error("expected ')'")),
                }
                inner
            }
            Some((start, c)) if c.is_ascii_alphabetic() => {
                let mut end = start;
                while end < self.chars.len() && self.chars[end].is_ascii_alphanumeric() {
                    end += 1;
                }
                let name: String = self.chars[start..end].iter().collect();
                let kind = name.parse::<BasicKernelKind>().map_err(|_| Error::KernelSyntax {
                    position: start + 1,
                    message: format!("unknown kernel '{name}'"),
                })?;
                self.pos = end;
                KernelStructure::Basic(kind)
            }
            Some((_, c)) => return Err(self.error(format!("expected kernel name, found '{c}'"))),
            None => return Err(self.error("expected kernel name, found end of input")),
        };
        self.skip_ws();
        if let Some((_, '^')) = self.peek() {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let digits: String = self.chars[start..self.pos].iter().collect();
            let power: usize = match digits.parse() {
                Ok(p) if p >= 1 => p,
                _ => {
                    self.pos = start;
                    return Err(self.error("expected positive integer exponent"));
                }
            };
            if power == 1 {
                return Ok(base);
            }
            return Ok(KernelStructure::Product(vec![base; power]));
        }
        Ok(base)
    }
}
