use std::fmt;

use thiserror::Error;

/// A propositional formula over named atoms.
///
/// Equality is purely syntactic: `a & b` and `b & a` are different formulas.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Atom(String),
    Implies(Box<Formula>, Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {offset}: {message}")]
pub struct SyntaxError {
    pub offset: usize,
    pub message: String,
}

impl SyntaxError {
    fn new(offset: usize, message: impl Into<String>) -> Self {
        Self {
            offset,
            message: message.into(),
        }
    }
}

/// Top-level shape of a formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connective {
    Atom,
    Implies,
    And,
    Or,
}

impl Formula {
    pub fn atom(name: &str) -> Self {
        debug_assert!(is_atom_name(name), "bad atom name {name:?}");
        Formula::Atom(name.to_string())
    }

    pub fn implies(lhs: Formula, rhs: Formula) -> Self {
        Formula::Implies(Box::new(lhs), Box::new(rhs))
    }

    pub fn and(lhs: Formula, rhs: Formula) -> Self {
        Formula::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn or(lhs: Formula, rhs: Formula) -> Self {
        Formula::Or(Box::new(lhs), Box::new(rhs))
    }

    pub fn connective(&self) -> Connective {
        match self {
            Formula::Atom(_) => Connective::Atom,
            Formula::Implies(..) => Connective::Implies,
            Formula::And(..) => Connective::And,
            Formula::Or(..) => Connective::Or,
        }
    }

    /// Height of the syntax tree; atoms have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Formula::Atom(_) => 0,
            Formula::Implies(l, r) | Formula::And(l, r) | Formula::Or(l, r) => {
                1 + l.depth().max(r.depth())
            }
        }
    }

    /// Visits every node in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Formula)) {
        f(self);
        match self {
            Formula::Atom(_) => {}
            Formula::Implies(l, r) | Formula::And(l, r) | Formula::Or(l, r) => {
                l.walk(f);
                r.walk(f);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Implies(..) => 1,
            Formula::Or(..) => 2,
            Formula::And(..) => 3,
            Formula::Atom(_) => 4,
        }
    }

    fn write_prec(&self, out: &mut String, min_prec: u8) {
        let prec = self.precedence();
        let parens = prec < min_prec;
        if parens {
            out.push('(');
        }
        match self {
            Formula::Atom(name) => out.push_str(name),
            // `->` is right-associative, `&` and `|` left-associative.
            Formula::Implies(l, r) => {
                l.write_prec(out, 2);
                out.push_str(" -> ");
                r.write_prec(out, 1);
            }
            Formula::Or(l, r) => {
                l.write_prec(out, 2);
                out.push_str(" | ");
                r.write_prec(out, 3);
            }
            Formula::And(l, r) => {
                l.write_prec(out, 3);
                out.push_str(" & ");
                r.write_prec(out, 4);
            }
        }
        if parens {
            out.push(')');
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_formula(self))
    }
}

/// Canonical minimal-parenthesis rendering.
pub fn print_formula(f: &Formula) -> String {
    let mut out = String::new();
    f.write_prec(&mut out, 0);
    out
}

pub fn is_atom_name(name: &str) -> bool {
    let mut bytes = name.bytes();
    matches!(bytes.next(), Some(b'a'..=b'z'))
        && bytes.all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
}

/// Parses a formula. Precedence is `&` > `|` > `->`, with `->` associating
/// to the right and the other two to the left.
pub fn parse_formula(text: &str) -> Result<Formula, SyntaxError> {
    let mut parser = Parser::new(text);
    let f = parser.implication()?;
    parser.skip_ws();
    if parser.pos != parser.src.len() {
        return Err(SyntaxError::new(parser.pos, "unexpected trailing input"));
    }
    Ok(f)
}

pub(crate) struct Parser<'a> {
    src: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Parser<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        Self {
            src: text.as_bytes(),
            pos: 0,
        }
    }

    pub(crate) fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    pub(crate) fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token.as_bytes()) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    pub(crate) fn peek(&mut self, token: &str) -> bool {
        self.skip_ws();
        self.src[self.pos..].starts_with(token.as_bytes())
    }

    pub(crate) fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.src.len()
    }

    pub(crate) fn implication(&mut self) -> Result<Formula, SyntaxError> {
        let lhs = self.disjunction()?;
        if self.eat("->") {
            let rhs = self.implication()?;
            Ok(Formula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn disjunction(&mut self) -> Result<Formula, SyntaxError> {
        let mut lhs = self.conjunction()?;
        while !self.peek("|-") && self.eat("|") {
            let rhs = self.conjunction()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, SyntaxError> {
        let mut lhs = self.primary()?;
        while self.eat("&") {
            let rhs = self.primary()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> Result<Formula, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        match self.src.get(self.pos) {
            None => Err(SyntaxError::new(start, "unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.implication()?;
                if !self.eat(")") {
                    return Err(SyntaxError::new(self.pos, "expected ')'"));
                }
                Ok(inner)
            }
            Some(b'a'..=b'z') => {
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_lowercase()
                        || self.src[self.pos].is_ascii_digit())
                {
                    self.pos += 1;
                }
                // The slice is pure ASCII by construction.
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                Ok(Formula::Atom(name.to_string()))
            }
            Some(&c) => Err(SyntaxError::new(
                start,
                format!("unexpected character {:?}", c as char),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(n: &str) -> Formula {
        Formula::atom(n)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(
            parse_formula("a -> b & c").unwrap(),
            Formula::implies(a("a"), Formula::and(a("b"), a("c")))
        );
        assert_eq!(
            parse_formula("a -> b -> c").unwrap(),
            Formula::implies(a("a"), Formula::implies(a("b"), a("c")))
        );
        assert_eq!(
            parse_formula("(a | b) -> a").unwrap(),
            Formula::implies(Formula::or(a("a"), a("b")), a("a"))
        );
        assert_eq!(
            parse_formula("a | b | c").unwrap(),
            Formula::or(Formula::or(a("a"), a("b")), a("c"))
        );
        assert_eq!(
            parse_formula("a & b | c").unwrap(),
            Formula::or(Formula::and(a("a"), a("b")), a("c"))
        );
    }

    #[test]
    fn printing_is_minimal() {
        assert_eq!(print_formula(&Formula::and(a("a"), a("b"))), "a & b");
        assert_eq!(
            print_formula(&Formula::implies(Formula::or(a("a"), a("b")), a("a"))),
            "a | b -> a"
        );
        assert_eq!(print_formula(&a("p")), "p");
        assert_eq!(
            print_formula(&Formula::implies(Formula::implies(a("a"), a("b")), a("c"))),
            "(a -> b) -> c"
        );
        assert_eq!(
            print_formula(&Formula::and(a("a"), Formula::and(a("b"), a("c")))),
            "a & (b & c)"
        );
        assert_eq!(
            print_formula(&Formula::or(a("x1"), Formula::or(a("b"), a("c")))),
            "x1 | (b | c)"
        );
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        assert_eq!(parse_formula("a &").unwrap_err().offset, 3);
        assert_eq!(parse_formula("a b").unwrap_err().offset, 2);
        assert_eq!(parse_formula("(a -> b").unwrap_err().offset, 7);
        assert_eq!(parse_formula("A").unwrap_err().offset, 0);
        assert_eq!(parse_formula("").unwrap_err().offset, 0);
        assert_eq!(parse_formula("a -> ").unwrap_err().offset, 5);
    }

    #[test]
    fn atom_names() {
        assert!(is_atom_name("p"));
        assert!(is_atom_name("x10"));
        assert!(!is_atom_name("1x"));
        assert!(!is_atom_name("Ab"));
        assert!(!is_atom_name(""));
    }

    #[test]
    fn depth_counts_connectives() {
        assert_eq!(parse_formula("a").unwrap().depth(), 0);
        assert_eq!(parse_formula("a -> b & c").unwrap().depth(), 2);
    }
}
