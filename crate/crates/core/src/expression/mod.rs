//! Equation trees, their infix grammar, evaluation, skeletons and the
//! prefix token vocabulary used by the skeleton model.

mod ast;
mod eval;
mod parse;
mod print;
mod skeleton;
mod token;

pub use ast::{
    BinaryOp, Expression, InvalidExpression, Node, NodeKind, Slot, Term, UnaryOp,
};
pub use eval::{evaluate, evaluate_skeleton, DomainFault};
pub use parse::{parse, parse_skeleton, ParseError};
pub use print::{format_constant, print, round_significant, CONSTANT_SIGNIFICANT_DIGITS};
pub use skeleton::{skeletonize, substitute, ArityMismatch, Skeleton};
pub use token::{Token, TokenError, TokenId, TokenVocabulary};
