//! Real polynomials in canonical coordinates `p_1..p_J, q_1..q_J`.
//!
//! A monomial is stored as its exponent vector `[a_1..a_J, b_1..b_J]` for
//! `p_1^{a_1}⋯p_J^{a_J} q_1^{b_1}⋯q_J^{b_J}`; phase points use the same
//! `[p.., q..]` layout.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Exponents = Vec<u32>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePolynomial {
    dof: usize,
    terms: BTreeMap<Exponents, f64>,
}

impl PhasePolynomial {
    pub fn zero(dof: usize) -> Self {
        Self {
            dof,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dof: usize, c: f64) -> Self {
        let mut out = Self::zero(dof);
        out.add_term(vec![0; 2 * dof], c);
        out
    }

    /// `p_j` with zero-based `j`.
    pub fn p(dof: usize, j: usize) -> Self {
        assert!(j < dof);
        let mut e = vec![0; 2 * dof];
        e[j] = 1;
        Self::monomial(dof, e, 1.0)
    }

    /// `q_j` with zero-based `j`.
    pub fn q(dof: usize, j: usize) -> Self {
        assert!(j < dof);
        let mut e = vec![0; 2 * dof];
        e[dof + j] = 1;
        Self::monomial(dof, e, 1.0)
    }

    pub fn monomial(dof: usize, exponents: Exponents, coeff: f64) -> Self {
        assert_eq!(exponents.len(), 2 * dof);
        let mut out = Self::zero(dof);
        out.add_term(exponents, coeff);
        out
    }

    pub fn from_terms(dof: usize, terms: impl IntoIterator<Item = (Exponents, f64)>) -> Self {
        let mut out = Self::zero(dof);
        for (e, c) in terms {
            assert_eq!(e.len(), 2 * dof);
            out.add_term(e, c);
        }
        out
    }

    fn add_term(&mut self, e: Exponents, c: f64) {
        if c == 0.0 {
            return;
        }
        let slot = self.terms.entry(e).or_insert(0.0);
        *slot += c;
        if *slot == 0.0 {
            let key: Vec<_> = self
                .terms
                .iter()
                .filter(|(_, v)| **v == 0.0)
                .map(|(k, _)| k.clone())
                .collect();
            for k in key {
                self.terms.remove(&k);
            }
        }
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn terms(&self) -> &BTreeMap<Exponents, f64> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Same polynomial in a larger phase space.
    pub fn with_dof(&self, dof: usize) -> Result<Self> {
        if dof < self.dof {
            return Err(Error::invalid(format!(
                "cannot shrink a polynomial in {} degrees of freedom to {dof}",
                self.dof
            )));
        }
        let mut out = Self::zero(dof);
        for (e, &c) in &self.terms {
            let mut lifted = vec![0; 2 * dof];
            lifted[..self.dof].copy_from_slice(&e[..self.dof]);
            lifted[dof..dof + self.dof].copy_from_slice(&e[self.dof..]);
            out.add_term(lifted, c);
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.dof);
        for (e, &c) in &self.terms {
            out.add_term(e.clone(), c * s);
        }
        out
    }

    fn derivative(&self, slot: usize) -> Self {
        let mut out = Self::zero(self.dof);
        for (e, &c) in &self.terms {
            if e[slot] > 0 {
                let mut d = e.clone();
                d[slot] -= 1;
                out.add_term(d, c * e[slot] as f64);
            }
        }
        out
    }

    /// `∂/∂p_j`, zero-based.
    pub fn d_dp(&self, j: usize) -> Self {
        self.derivative(j)
    }

    /// `∂/∂q_j`, zero-based.
    pub fn d_dq(&self, j: usize) -> Self {
        self.derivative(self.dof + j)
    }

    pub fn evaluate(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), 2 * self.dof, "phase point has the wrong length");
        self.terms
            .iter()
            .map(|(e, &c)| {
                e.iter()
                    .zip(point)
                    .fold(c, |acc, (&k, &x)| if k == 0 { acc } else { acc * x.powi(k as i32) })
            })
            .sum()
    }

    /// `[∂/∂p_1 .. ∂/∂p_J, ∂/∂q_1 .. ∂/∂q_J]` at `point`.
    pub fn gradient(&self, point: &[f64]) -> Vec<f64> {
        (0..2 * self.dof)
            .map(|s| self.derivative(s).evaluate(point))
            .collect()
    }

    /// Coefficient-wise comparison.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (self - other).max_abs_coeff() <= tol
    }

    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text).parse()
    }

    /// Parse and lift to at least `dof` degrees of freedom.
    pub fn parse_with_dof(text: &str, dof: usize) -> Result<Self> {
        let p = Self::parse(text)?;
        p.with_dof(dof.max(p.dof))
    }
}

fn unify(a: &PhasePolynomial, b: &PhasePolynomial) -> (PhasePolynomial, PhasePolynomial) {
    let dof = a.dof.max(b.dof);
    (a.with_dof(dof).unwrap(), b.with_dof(dof).unwrap())
}

impl Add for &PhasePolynomial {
    type Output = PhasePolynomial;

    fn add(self, rhs: &PhasePolynomial) -> PhasePolynomial {
        let (mut out, rhs) = unify(self, rhs);
        for (e, c) in rhs.terms {
            out.add_term(e, c);
        }
        out
    }
}

impl Sub for &PhasePolynomial {
    type Output = PhasePolynomial;

    fn sub(self, rhs: &PhasePolynomial) -> PhasePolynomial {
        self + &(-rhs)
    }
}

impl Neg for &PhasePolynomial {
    type Output = PhasePolynomial;

    fn neg(self) -> PhasePolynomial {
        self.scale(-1.0)
    }
}

impl Mul for &PhasePolynomial {
    type Output = PhasePolynomial;

    fn mul(self, rhs: &PhasePolynomial) -> PhasePolynomial {
        let (a, b) = unify(self, rhs);
        let mut out = PhasePolynomial::zero(a.dof);
        for (ea, &ca) in &a.terms {
            for (eb, &cb) in &b.terms {
                let e = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }
}

macro_rules! owned_ops {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr for PhasePolynomial {
            type Output = PhasePolynomial;
            fn $m(self, rhs: PhasePolynomial) -> PhasePolynomial {
                (&self).$m(&rhs)
            }
        }
    )*};
}
owned_ops!(Add add, Sub sub, Mul mul);

/// `{f, g} = Σ_j (∂f/∂q_j ∂g/∂p_j − ∂f/∂p_j ∂g/∂q_j)`, so `{q, p} = 1`.
pub fn poisson_bracket(f: &PhasePolynomial, g: &PhasePolynomial) -> PhasePolynomial {
    let (f, g) = unify(f, g);
    let mut out = PhasePolynomial::zero(f.dof);
    for j in 0..f.dof {
        out = &out + &(&(&f.d_dq(j) * &g.d_dp(j)) - &(&f.d_dp(j) * &g.d_dq(j)));
    }
    out
}

impl fmt::Display for PhasePolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // highest degree first, then by exponent order
        let mut terms: Vec<_> = self.terms.iter().collect();
        terms.sort_by(|a, b| {
            let da: u32 = a.0.iter().sum();
            let db: u32 = b.0.iter().sum();
            db.cmp(&da).then_with(|| b.0.cmp(a.0))
        });
        for (k, (e, &c)) in terms.into_iter().enumerate() {
            let sign = if c < 0.0 { "-" } else { "+" };
            if k == 0 {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            write!(f, "{}", c.abs())?;
            for (slot, &pow) in e.iter().enumerate() {
                if pow == 0 {
                    continue;
                }
                let (name, idx) = if slot < self.dof {
                    ('p', slot + 1)
                } else {
                    ('q', slot - self.dof + 1)
                };
                write!(f, "*{name}{idx}")?;
                if pow > 1 {
                    write!(f, "^{pow}")?;
                }
            }
        }
        Ok(())
    }
}

/// Recursive-descent parser for sums of products such as
/// `0.5*p1^2 + 0.5*q1^2 - 1.0*q1^4`. Bare `p`/`q` mean index 1.
struct Parser<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    text: &'a str,
}

/// Factors collected for one term: coefficient and `(is_q, index, power)`.
type Term = (f64, Vec<(bool, usize, u32)>);

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            chars: text.char_indices().collect(),
            pos: 0,
            text,
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let pos = self
            .chars
            .get(self.pos)
            .map(|c| c.0)
            .unwrap_or(self.text.len());
        Err(Error::Parse {
            pos,
            msg: msg.into(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn sign(&mut self) -> Option<f64> {
        self.skip_ws();
        match self.peek() {
            Some('+') => {
                self.pos += 1;
                Some(1.0)
            }
            Some('-') | Some('−') => {
                self.pos += 1;
                Some(-1.0)
            }
            _ => None,
        }
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let s: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => {
                self.pos = start;
                self.err(format!("bad number '{s}'"))
            }
        }
    }

    fn integer(&mut self) -> Option<u64> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        let s: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
        s.parse().ok()
    }

    fn factor(&mut self, term: &mut Term) -> Result<()> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' => {
                term.0 *= self.number()?;
            }
            Some(c @ ('p' | 'q')) => {
                self.pos += 1;
                let at = self.pos;
                let index = match self.integer() {
                    None => 1,
                    Some(0) => {
                        self.pos = at;
                        return self.err("variable indices start at 1");
                    }
                    Some(i) if i > 64 => {
                        self.pos = at;
                        return self.err("variable index too large");
                    }
                    Some(i) => i as usize,
                };
                self.skip_ws();
                let mut pow = 1u32;
                if self.peek() == Some('^') {
                    self.pos += 1;
                    self.skip_ws();
                    pow = match self.integer() {
                        Some(v) if v <= 64 => v as u32,
                        _ => return self.err("expected a small nonnegative integer exponent"),
                    };
                }
                term.1.push((c == 'q', index, pow));
            }
            Some(c) => return self.err(format!("unexpected '{c}'")),
            None => return self.err("unexpected end of input"),
        }
        Ok(())
    }

    fn term(&mut self, sign: f64) -> Result<Term> {
        let mut term = (sign, Vec::new());
        self.factor(&mut term)?;
        loop {
            self.skip_ws();
            if self.peek() == Some('*') {
                self.pos += 1;
                self.factor(&mut term)?;
            } else {
                return Ok(term);
            }
        }
    }

    fn parse(mut self) -> Result<PhasePolynomial> {
        let mut terms = Vec::new();
        let first_sign = self.sign().unwrap_or(1.0);
        terms.push(self.term(first_sign)?);
        loop {
            self.skip_ws();
            if self.peek().is_none() {
                break;
            }
            match self.sign() {
                Some(s) => terms.push(self.term(s)?),
                None => return self.err("expected '+' or '-' between terms"),
            }
        }
        let dof = terms
            .iter()
            .flat_map(|t| t.1.iter().map(|f| f.1))
            .max()
            .unwrap_or(1);
        let mut out = PhasePolynomial::zero(dof);
        for (c, factors) in terms {
            let mut e = vec![0u32; 2 * dof];
            for (is_q, idx, pow) in factors {
                let slot = if is_q { dof + idx - 1 } else { idx - 1 };
                e[slot] += pow;
            }
            out.add_term(e, c);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_example_and_round_trip() {
        let h = PhasePolynomial::parse("0.5*p1^2 + 0.5*q1^2 - 1.0*q1^4").unwrap();
        assert_eq!(h.dof(), 1);
        assert_eq!(h.terms().len(), 3);
        assert_eq!(h.terms()[&vec![0, 4]], -1.0);
        assert!((h.evaluate(&[2.0, 1.0]) - (2.0 + 0.5 - 1.0)).abs() < 1e-15);
        let again = PhasePolynomial::parse(&h.to_string()).unwrap();
        assert_eq!(again, h);
    }

    #[test]
    fn parse_variants() {
        let a = PhasePolynomial::parse("q2*p1 − 3*p2*q1 + 2").unwrap();
        assert_eq!(a.dof(), 2);
        assert!((a.evaluate(&[1.0, 2.0, 3.0, 4.0]) - (4.0 - 18.0 + 2.0)).abs() < 1e-15);
        let b = PhasePolynomial::parse("-p^2 + q").unwrap();
        assert_eq!(b, PhasePolynomial::parse("-1*p1^2 + 1*q1").unwrap());
        let c = PhasePolynomial::parse("p1*p1 - p1^2").unwrap();
        assert!(c.is_zero());
        assert_eq!(PhasePolynomial::parse("2.5e-1*q1").unwrap().terms()[&vec![0, 1]], 0.25);
        assert_eq!(PhasePolynomial::parse_with_dof("p1", 3).unwrap().dof(), 3);
    }

    #[test]
    fn parse_errors_carry_positions() {
        for (text, pos) in [("p1 +", 4), ("p0", 1), ("2*x", 2), ("p1 q1", 3), ("q1^a", 3)] {
            match PhasePolynomial::parse(text) {
                Err(Error::Parse { pos: got, .. }) => assert_eq!(got, pos, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn arithmetic_and_derivatives() {
        let x = PhasePolynomial::parse("p1 + q1").unwrap();
        let sq = &x * &x;
        assert_eq!(sq, PhasePolynomial::parse("p1^2 + 2*p1*q1 + q1^2").unwrap());
        assert_eq!(sq.d_dp(0), PhasePolynomial::parse("2*p1 + 2*q1").unwrap());
        assert_eq!(sq.degree(), 2);
        assert!((&sq - &sq).is_zero());
        assert_eq!(sq.gradient(&[1.0, 2.0]), vec![6.0, 6.0]);
        let lifted = x.with_dof(2).unwrap();
        assert_eq!(lifted, PhasePolynomial::parse("p1 + q1 + 0*q2").unwrap().with_dof(2).unwrap());
        assert!(lifted.with_dof(1).is_err());
    }

    #[test]
    fn canonical_brackets() {
        let p = PhasePolynomial::p(1, 0);
        let q = PhasePolynomial::q(1, 0);
        assert_eq!(poisson_bracket(&q, &p), PhasePolynomial::constant(1, 1.0));
        assert_eq!(poisson_bracket(&p, &q), PhasePolynomial::constant(1, -1.0));
    }
}
