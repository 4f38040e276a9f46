//! Canonical infix printing.
//!
//! Parentheses are emitted only where precedence or associativity would
//! otherwise change the parsed structure. A negative constant prints as a
//! signed literal and binds like unary minus; a negation of a non-negative
//! literal prints as `-(2.5)` so that it does not re-parse as a signed literal.

use super::ast::{BinaryOp, Node, Slot, Term, UnaryOp};

/// Significant digits used when printing constants.
pub const CONSTANT_SIGNIFICANT_DIGITS: usize = 6;

const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

pub(crate) trait LeafSyntax {
    fn write_leaf(&self, out: &mut String);
    /// Sign of a numeric literal leaf; `None` for non-numeric leaves.
    fn literal_sign_negative(&self) -> Option<bool>;
}

impl LeafSyntax for Term {
    fn write_leaf(&self, out: &mut String) {
        match self {
            Term::Constant(c) => out.push_str(&format_constant(*c)),
            Term::Variable(i) => write_variable(*i, out),
        }
    }

    fn literal_sign_negative(&self) -> Option<bool> {
        match self {
            Term::Constant(c) => Some(c.is_sign_negative()),
            Term::Variable(_) => None,
        }
    }
}

impl LeafSyntax for Slot {
    fn write_leaf(&self, out: &mut String) {
        match self {
            Slot::Placeholder(_) => out.push('C'),
            Slot::Variable(i) => write_variable(*i, out),
        }
    }

    fn literal_sign_negative(&self) -> Option<bool> {
        None
    }
}

fn write_variable(index: usize, out: &mut String) {
    out.push('x');
    out.push_str(&(index + 1).to_string());
}

/// Rounds to [`CONSTANT_SIGNIFICANT_DIGITS`] significant digits.
pub fn round_significant(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", CONSTANT_SIGNIFICANT_DIGITS - 1, v)
        .parse()
        .unwrap_or(v)
}

/// Shortest decimal text of `v` after rounding to six significant digits.
pub fn format_constant(v: f64) -> String {
    format!("{}", round_significant(v))
}

fn precedence<L: LeafSyntax>(node: &Node<L>) -> u8 {
    match node {
        Node::Leaf(l) => match l.literal_sign_negative() {
            Some(true) => PREC_NEG,
            _ => PREC_ATOM,
        },
        Node::Unary(UnaryOp::Neg, _) => PREC_NEG,
        Node::Unary(_, _) => PREC_ATOM,
        Node::Binary(op, _, _) => op.precedence(),
    }
}

fn is_nonnegative_literal<L: LeafSyntax>(node: &Node<L>) -> bool {
    matches!(node, Node::Leaf(l) if l.literal_sign_negative() == Some(false))
}

pub(crate) fn write_node<L: LeafSyntax>(node: &Node<L>, out: &mut String) {
    match node {
        Node::Leaf(l) => l.write_leaf(out),
        Node::Unary(UnaryOp::Neg, child) => {
            out.push('-');
            let wrap = precedence(child) < PREC_NEG || is_nonnegative_literal(child);
            write_maybe_wrapped(child, wrap, out);
        }
        Node::Unary(op, child) => {
            out.push_str(op.name());
            out.push('(');
            write_node(child, out);
            out.push(')');
        }
        Node::Binary(op, left, right) => {
            let p = op.precedence();
            let (wrap_left, wrap_right) = if *op == BinaryOp::Pow {
                (precedence(left) <= PREC_POW, precedence(right) < PREC_POW)
            } else {
                let rp = precedence(right);
                (precedence(left) < p, rp <= p || rp == PREC_NEG)
            };
            write_maybe_wrapped(left, wrap_left, out);
            out.push(op.symbol());
            write_maybe_wrapped(right, wrap_right, out);
        }
    }
}

fn write_maybe_wrapped<L: LeafSyntax>(node: &Node<L>, wrap: bool, out: &mut String) {
    if wrap {
        out.push('(');
        write_node(node, out);
        out.push(')');
    } else {
        write_node(node, out);
    }
}

/// Prints an expression in the canonical infix grammar.
pub fn print(expr: &Node<Term>) -> String {
    let mut out = String::new();
    write_node(expr, &mut out);
    out
}
