//! Model formula mini-language.
//!
//! ```text
//! formula := IDENT "~" term ("+" term)*
//! term    := "1"
//!          | "offset" "(" "log" "(" IDENT ")" ")"
//!          | IDENT
//!          | IDENT ":" IDENT
//!          | IDENT "*" IDENT            (expands to a + b + a:b)
//! ```
//!
//! The intercept is always present. Factor names are resolved later, when the
//! formula is encoded against a dataset.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::FamilySpec;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Intercept,
    Main(String),
    Interaction(String, String),
    /// A raw numeric column supplied directly to a design matrix.
    Covariate(String),
}

impl Term {
    /// Order-insensitive identity: `a:b` and `b:a` are the same term.
    pub fn key(&self) -> Term {
        match self {
            Term::Interaction(a, b) if b < a => Term::Interaction(b.clone(), a.clone()),
            t => t.clone(),
        }
    }

    fn degree(&self) -> u8 {
        match self {
            Term::Intercept => 0,
            Term::Main(_) | Term::Covariate(_) => 1,
            Term::Interaction(..) => 2,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => f.write_str("1"),
            Term::Main(a) | Term::Covariate(a) => f.write_str(a),
            Term::Interaction(a, b) => write!(f, "{a}:{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFormula {
    pub response: String,
    /// Intercept first, then main effects, then interactions, each group in
    /// order of first appearance.
    pub terms: Vec<Term>,
    /// Column whose log enters the linear predictor with a fixed coefficient of 1.
    pub offset: Option<String>,
    pub family: FamilySpec,
}

impl ModelFormula {
    pub fn with_family(mut self, family: FamilySpec) -> Self {
        self.family = family;
        self
    }

    /// Factor names in order of first use.
    pub fn factors(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in &self.terms {
            let names: &[&String] = match t {
                Term::Main(a) => &[a],
                Term::Interaction(a, b) => &[a, b],
                _ => &[],
            };
            for n in names {
                if !out.contains(&n.as_str()) {
                    out.push(n);
                }
            }
        }
        out
    }
}

impl fmt::Display for ModelFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ~ ", self.response)?;
        let mut parts: Vec<String> = self
            .terms
            .iter()
            .filter(|t| **t != Term::Intercept)
            .map(Term::to_string)
            .collect();
        if let Some(col) = &self.offset {
            parts.push(format!("offset(log({col}))"));
        }
        if parts.is_empty() {
            parts.push("1".into());
        }
        f.write_str(&parts.join(" + "))
    }
}

impl FromStr for ModelFormula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_formula(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    One,
    Tilde,
    Plus,
    Colon,
    Star,
    LParen,
    RParen,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::One => f.write_str("'1'"),
            Tok::Tilde => f.write_str("'~'"),
            Tok::Plus => f.write_str("'+'"),
            Tok::Colon => f.write_str("':'"),
            Tok::Star => f.write_str("'*'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let single = match c {
            '~' => Some(Tok::Tilde),
            '+' => Some(Tok::Plus),
            ':' => Some(Tok::Colon),
            '*' => Some(Tok::Star),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            out.push((i, tok));
            i += 1;
        } else if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' || c == '.' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.')
            {
                i += 1;
            }
            out.push((start, Tok::Ident(chars[start..i].iter().collect())));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let lit: String = chars[start..i].iter().collect();
            if lit != "1" {
                return Err(Error::Syntax {
                    position: start,
                    message: format!("unexpected number '{lit}' (only '1' is allowed)"),
                });
            }
            out.push((start, Tok::One));
        } else {
            return Err(Error::Syntax {
                position: i,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    out.push((chars.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn next(&mut self) -> (usize, Tok) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T> {
        Err(Error::Syntax {
            position: self.pos(),
            message: format!("expected {expected}, found {}", self.peek()),
        })
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<()> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            self.fail(expected)
        }
    }

    fn ident(&mut self, expected: &str) -> Result<(usize, String)> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let pos = self.pos();
                self.next();
                Ok((pos, name))
            }
            _ => self.fail(expected),
        }
    }
}

enum Parsed {
    Terms(Vec<Term>),
    Offset(String),
}

fn parse_term(p: &mut Parser) -> Result<(usize, Parsed)> {
    let start = p.pos();
    if *p.peek() == Tok::One {
        p.next();
        return Ok((start, Parsed::Terms(vec![Term::Intercept])));
    }
    let (_, name) = p.ident("a factor name, '1' or offset(log(column))")?;
    if name == "offset" && *p.peek() == Tok::LParen {
        p.next();
        let (_, func) = p.ident("'log'")?;
        if func != "log" {
            return Err(Error::Syntax {
                position: p.toks[p.at - 1].0,
                message: format!("only offset(log(column)) is supported, found '{func}'"),
            });
        }
        p.expect(Tok::LParen, "'('")?;
        let (_, col) = p.ident("a column name")?;
        p.expect(Tok::RParen, "')'")?;
        p.expect(Tok::RParen, "')'")?;
        return Ok((start, Parsed::Offset(col)));
    }
    let op = p.peek().clone();
    if op != Tok::Colon && op != Tok::Star {
        return Ok((start, Parsed::Terms(vec![Term::Main(name)])));
    }
    p.next();
    let (second_pos, other) = p.ident("a factor name")?;
    if other == name {
        return Err(Error::Syntax {
            position: second_pos,
            message: format!("factor '{name}' interacted with itself"),
        });
    }
    if matches!(p.peek(), Tok::Colon | Tok::Star) {
        return Err(Error::Syntax {
            position: p.pos(),
            message: "only two-factor interactions are supported".into(),
        });
    }
    let inter = Term::Interaction(name.clone(), other.clone());
    let terms = if op == Tok::Star {
        vec![Term::Main(name), Term::Main(other), inter]
    } else {
        vec![inter]
    };
    Ok((start, Parsed::Terms(terms)))
}

/// Parses `response ~ term + term + ...`. Repeated terms collapse to one
/// (`a*b + a` is `a + b + a:b`); a second offset is an error.
pub fn parse_formula(text: &str) -> Result<ModelFormula> {
    let mut p = Parser {
        toks: tokenize(text)?,
        at: 0,
    };
    let (_, response) = p.ident("a response column name")?;
    p.expect(Tok::Tilde, "'~'")?;

    let mut raw: Vec<Term> = vec![Term::Intercept];
    let mut offset = None;
    loop {
        let (pos, parsed) = parse_term(&mut p)?;
        match parsed {
            Parsed::Terms(ts) => raw.extend(ts),
            Parsed::Offset(col) => {
                if offset.is_some() {
                    return Err(Error::Syntax {
                        position: pos,
                        message: "at most one offset is allowed".into(),
                    });
                }
                offset = Some(col);
            }
        }
        match p.peek() {
            Tok::Plus => {
                p.next();
            }
            Tok::End => break,
            _ => return p.fail("'+' or end of input"),
        }
    }

    let mut terms: Vec<Term> = Vec::new();
    for t in raw {
        if !terms.iter().any(|u| u.key() == t.key()) {
            terms.push(t);
        }
    }
    terms.sort_by_key(Term::degree);

    Ok(ModelFormula {
        response,
        terms,
        offset,
        family: FamilySpec::POISSON,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn main(s: &str) -> Term {
        Term::Main(s.into())
    }

    #[test]
    fn fit1_structure() {
        let f = parse_formula("claims ~ sex + region + type + job").unwrap();
        assert_eq!(f.response, "claims");
        assert_eq!(
            f.terms,
            vec![
                Term::Intercept,
                main("sex"),
                main("region"),
                main("type"),
                main("job")
            ]
        );
        assert_eq!(f.offset, None);
    }

    #[test]
    fn star_expands() {
        let f = parse_formula("claims ~ region * type").unwrap();
        assert_eq!(
            f.terms,
            vec![
                Term::Intercept,
                main("region"),
                main("type"),
                Term::Interaction("region".into(), "type".into())
            ]
        );
    }

    #[test]
    fn double_tilde_is_a_syntax_error() {
        match parse_formula("claims ~ ~ region") {
            Err(Error::Syntax { position, .. }) => assert_eq!(position, 9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn offset_and_intercept_only() {
        let f = parse_formula("claims ~ 1 + offset(log(exposure))").unwrap();
        assert_eq!(f.terms, vec![Term::Intercept]);
        assert_eq!(f.offset.as_deref(), Some("exposure"));

        let f = parse_formula("claims ~ region + offset( log( exposure ) )").unwrap();
        assert_eq!(f.offset.as_deref(), Some("exposure"));
    }

    #[test]
    fn duplicates_collapse_and_interactions_sort_last() {
        let f = parse_formula("claims ~ type:region + region + region * type + region").unwrap();
        assert_eq!(
            f.terms,
            vec![
                Term::Intercept,
                main("region"),
                main("type"),
                Term::Interaction("type".into(), "region".into())
            ]
        );
    }

    #[test]
    fn syntax_errors() {
        let pos = |s: &str| match parse_formula(s) {
            Err(Error::Syntax { position, .. }) => position,
            other => panic!("{s}: unexpected {other:?}"),
        };
        assert_eq!(pos(""), 0);
        assert_eq!(pos("claims"), 6);
        assert_eq!(pos("claims ~"), 8);
        assert_eq!(pos("claims ~ a +"), 12);
        assert_eq!(pos("claims ~ a b"), 11);
        assert_eq!(pos("claims ~ a:a"), 11);
        assert_eq!(pos("claims ~ a:b:c"), 12);
        assert_eq!(pos("claims ~ 2"), 9);
        assert_eq!(pos("claims ~ a - b"), 11);
        assert_eq!(pos("claims ~ offset(exp(x))"), 16);
        assert_eq!(pos("claims ~ offset(log(x)) + offset(log(y))"), 26);
        assert_eq!(pos("claims ~ offset(log(x)"), 22);
    }

    #[test]
    fn display_round_trips() {
        for text in [
            "claims ~ sex + region + type + job",
            "claims ~ region + type + region:type",
            "claims ~ 1",
            "claims ~ region + offset(log(exposure))",
        ] {
            let f = parse_formula(text).unwrap();
            assert_eq!(f.to_string(), text);
            assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
        }
    }

    #[test]
    fn factor_listing() {
        let f = parse_formula("claims ~ job + region:type").unwrap();
        assert_eq!(f.factors(), vec!["job", "region", "type"]);
    }
}
