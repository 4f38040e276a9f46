//! Recursive-descent parser for the infix equation grammar.
//!
//! Precedence, loosest first: `+ -`, `* /`, unary minus, `^` (right
//! associative). A minus directly in front of a numeric literal that is not
//! itself a power base folds into a signed constant.

use super::ast::{BinaryOp, Expression, Node, Slot, Term, UnaryOp};
use super::skeleton::Skeleton;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown identifier `{name}` at byte {position}")]
    UnknownIdentifier { position: usize, name: String },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { position, .. } | ParseError::UnknownIdentifier { position, .. } => {
                *position
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(f64),
    Ident(String),
    Sym(char),
    End,
}

#[derive(Debug, Clone)]
struct Lexeme {
    tok: Tok,
    pos: usize,
}

fn syntax(position: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        position,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Lexeme>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            // exponent only when digits follow, so `2e` stays an error
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lit = &text[start..i];
            let value: f64 = lit
                .parse()
                .map_err(|_| syntax(start, format!("malformed number `{lit}`")))?;
            if !value.is_finite() {
                return Err(syntax(start, format!("number `{lit}` out of range")));
            }
            out.push(Lexeme {
                tok: Tok::Number(value),
                pos: start,
            });
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Lexeme {
                tok: Tok::Ident(text[start..i].to_string()),
                pos: start,
            });
        } else if b"+-*/^()".contains(&c) {
            i += 1;
            out.push(Lexeme {
                tok: Tok::Sym(c as char),
                pos: start,
            });
        } else {
            let ch = text[start..].chars().next().unwrap_or('?');
            return Err(syntax(start, format!("unexpected character `{ch}`")));
        }
    }
    out.push(Lexeme {
        tok: Tok::End,
        pos: text.len(),
    });
    Ok(out)
}

fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<usize>().ok().map(|n| n - 1)
}

trait LeafGrammar: Sized {
    fn number(value: f64, pos: usize) -> Result<Self, ParseError>;
    fn variable(index: usize) -> Self;
    fn placeholder(ordinal: usize) -> Option<Self>;
    const FOLDS_SIGNED_LITERALS: bool;
}

impl LeafGrammar for Term {
    fn number(value: f64, _pos: usize) -> Result<Self, ParseError> {
        Ok(Term::Constant(value))
    }
    fn variable(index: usize) -> Self {
        Term::Variable(index)
    }
    fn placeholder(_ordinal: usize) -> Option<Self> {
        None
    }
    const FOLDS_SIGNED_LITERALS: bool = true;
}

impl LeafGrammar for Slot {
    fn number(_value: f64, pos: usize) -> Result<Self, ParseError> {
        Err(syntax(pos, "numeric literal in skeleton; constants must be `C`"))
    }
    fn variable(index: usize) -> Self {
        Slot::Variable(index)
    }
    fn placeholder(ordinal: usize) -> Option<Self> {
        Some(Slot::Placeholder(ordinal))
    }
    const FOLDS_SIGNED_LITERALS: bool = false;
}

struct Parser<L> {
    lexemes: Vec<Lexeme>,
    at: usize,
    placeholders: usize,
    _leaf: std::marker::PhantomData<L>,
}

impl<L: LeafGrammar> Parser<L> {
    fn new(text: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            lexemes: lex(text)?,
            at: 0,
            placeholders: 0,
            _leaf: std::marker::PhantomData,
        })
    }

    fn peek(&self) -> &Tok {
        &self.lexemes[self.at].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.at + offset).min(self.lexemes.len() - 1);
        &self.lexemes[i].tok
    }

    fn pos(&self) -> usize {
        self.lexemes[self.at].pos
    }

    fn bump(&mut self) -> Lexeme {
        let lx = self.lexemes[self.at].clone();
        if self.at + 1 < self.lexemes.len() {
            self.at += 1;
        }
        lx
    }

    fn expect(&mut self, sym: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Sym(sym) {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected `{sym}`, found {}", describe(self.peek()))))
        }
    }

    fn parse_all(mut self) -> Result<(Node<L>, usize), ParseError> {
        let node = self.expr()?;
        if *self.peek() != Tok::End {
            return Err(syntax(self.pos(), format!("unexpected {}", describe(self.peek()))));
        }
        Ok((node, self.placeholders))
    }

    fn expr(&mut self) -> Result<Node<L>, ParseError> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinaryOp::Add,
                Tok::Sym('-') => BinaryOp::Sub,
                _ => return Ok(left),
            };
            self.bump();
            let right = self.term()?;
            left = Node::binary(op, left, right);
        }
    }

    fn term(&mut self) -> Result<Node<L>, ParseError> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinaryOp::Mul,
                Tok::Sym('/') => BinaryOp::Div,
                _ => return Ok(left),
            };
            self.bump();
            let right = self.unary()?;
            left = Node::binary(op, left, right);
        }
    }

    fn unary(&mut self) -> Result<Node<L>, ParseError> {
        if *self.peek() != Tok::Sym('-') {
            return self.power();
        }
        self.bump();
        if L::FOLDS_SIGNED_LITERALS {
            if let Tok::Number(v) = *self.peek() {
                if *self.peek_at(1) != Tok::Sym('^') {
                    let pos = self.pos();
                    self.bump();
                    return Ok(Node::Leaf(L::number(-v, pos)?));
                }
            }
        }
        let child = self.unary()?;
        Ok(Node::unary(UnaryOp::Neg, child))
    }

    fn power(&mut self) -> Result<Node<L>, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Sym('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Node::binary(BinaryOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node<L>, ParseError> {
        let lx = self.bump();
        match lx.tok {
            Tok::Number(v) => Ok(Node::Leaf(L::number(v, lx.pos)?)),
            Tok::Sym('(') => {
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(op) = UnaryOp::from_function_name(&name) {
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(Node::unary(op, arg));
                }
                if let Some(index) = variable_index(&name) {
                    return Ok(Node::Leaf(L::variable(index)));
                }
                if name == "C" {
                    if let Some(leaf) = L::placeholder(self.placeholders) {
                        self.placeholders += 1;
                        return Ok(Node::Leaf(leaf));
                    }
                }
                Err(ParseError::UnknownIdentifier {
                    position: lx.pos,
                    name,
                })
            }
            other => Err(syntax(lx.pos, format!("expected operand, found {}", describe(&other)))),
        }
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Number(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Sym(c) => format!("`{c}`"),
        Tok::End => "end of input".to_string(),
    }
}

/// Parses an infix equation such as `3.2*sin(x1)+1.5`.
pub fn parse(text: &str) -> Result<Expression, ParseError> {
    Parser::<Term>::new(text)?.parse_all().map(|(node, _)| node)
}

/// Parses skeleton text where every constant is written `C`.
pub fn parse_skeleton(text: &str) -> Result<Skeleton, ParseError> {
    let (root, count) = Parser::<Slot>::new(text)?.parse_all()?;
    Ok(Skeleton::from_parts(root, count))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expression {
        Expression::variable(0)
    }
    fn c(v: f64) -> Expression {
        Expression::constant(v)
    }

    #[test]
    fn single_function() {
        assert_eq!(parse("sin(x1)").unwrap(), Node::unary(UnaryOp::Sin, x()));
    }

    #[test]
    fn sum_of_product() {
        let expected = Node::binary(
            BinaryOp::Add,
            Node::binary(BinaryOp::Mul, c(3.2), Node::unary(UnaryOp::Sin, x())),
            c(1.5),
        );
        assert_eq!(parse("3.2*sin(x1)+1.5").unwrap(), expected);
    }

    #[test]
    fn power_is_right_associative() {
        let expected = Node::binary(
            BinaryOp::Pow,
            x(),
            Node::binary(BinaryOp::Pow, c(2.0), c(3.0)),
        );
        assert_eq!(parse("x1^2^3").unwrap(), expected);
    }

    #[test]
    fn unary_minus_sits_between_power_and_product() {
        // -x1^2 negates the power
        assert_eq!(
            parse("-x1^2").unwrap(),
            Node::unary(UnaryOp::Neg, Node::binary(BinaryOp::Pow, x(), c(2.0)))
        );
        // -x1*2 multiplies the negation
        assert_eq!(
            parse("-x1*2").unwrap(),
            Node::binary(BinaryOp::Mul, Node::unary(UnaryOp::Neg, x()), c(2.0))
        );
        assert_eq!(
            parse("-2^2").unwrap(),
            Node::unary(UnaryOp::Neg, Node::binary(BinaryOp::Pow, c(2.0), c(2.0)))
        );
        assert_eq!(parse("-2").unwrap(), c(-2.0));
        assert_eq!(parse("-(2)").unwrap(), Node::unary(UnaryOp::Neg, c(2.0)));
    }

    #[test]
    fn whitespace_and_exponents() {
        assert_eq!(parse(" x1 + 1e-3 ").unwrap(), Node::binary(BinaryOp::Add, x(), c(1e-3)));
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse("x1+").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { position: 3, .. }), "{err:?}");
        let err = parse("sin(x1").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { position: 6, .. }), "{err:?}");
        let err = parse("x1 $ 2").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { position: 3, .. }), "{err:?}");
        let err = parse("2 x1").unwrap_err();
        assert_eq!(err.position(), 2);
    }

    #[test]
    fn unknown_identifiers() {
        let err = parse("tan(x1)").unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownIdentifier {
                position: 0,
                name: "tan".into()
            }
        );
        assert!(matches!(parse("y+1"), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(parse("C*x1"), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(parse("x0"), Err(ParseError::UnknownIdentifier { .. })));
    }

    #[test]
    fn skeleton_placeholders_numbered_left_to_right() {
        let sk = parse_skeleton("C*sin(x1)+C").unwrap();
        assert_eq!(sk.placeholder_count(), 2);
        let leaves: Vec<Slot> = sk.root().leaves().into_iter().copied().collect();
        assert_eq!(
            leaves,
            vec![Slot::Placeholder(0), Slot::Variable(0), Slot::Placeholder(1)]
        );
        assert!(parse_skeleton("2*x1").is_err());
    }
}
