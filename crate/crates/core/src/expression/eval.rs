use super::ast::{Expression, Node, NodeKind, Slot, Term};
use super::skeleton::Skeleton;

/// A subterm evaluated to a non-finite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum DomainFault {
    #[error("non-finite result at {0} node")]
    NonFinite(NodeKind),
    #[error("variable x{} not supplied (input has {supplied} value(s))", index + 1)]
    MissingVariable { index: usize, supplied: usize },
}

impl DomainFault {
    pub fn node_kind(&self) -> NodeKind {
        match self {
            DomainFault::NonFinite(kind) => *kind,
            DomainFault::MissingVariable { .. } => NodeKind::Variable,
        }
    }
}

/// Evaluates `expr` at the input vector `x`.
///
/// Every intermediate value must be finite; the first non-finite subterm is
/// reported with its node kind (log of a non-positive value, division by
/// zero, `0^negative`, overflow).
pub fn evaluate(expr: &Expression, x: &[f64]) -> Result<f64, DomainFault> {
    let value = match expr {
        Node::Leaf(Term::Constant(c)) => *c,
        Node::Leaf(Term::Variable(i)) => *x.get(*i).ok_or(DomainFault::MissingVariable {
            index: *i,
            supplied: x.len(),
        })?,
        Node::Unary(op, child) => op.apply(evaluate(child, x)?),
        Node::Binary(op, l, r) => {
            let a = evaluate(l, x)?;
            let b = evaluate(r, x)?;
            op.apply(a, b)
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(DomainFault::NonFinite(kind_of(expr)))
    }
}

/// Evaluates a skeleton with placeholder `i` bound to `constants[i]`,
/// without building the substituted tree.
pub fn evaluate_skeleton(
    skeleton: &Skeleton,
    constants: &[f64],
    x: &[f64],
) -> Result<f64, DomainFault> {
    debug_assert_eq!(constants.len(), skeleton.placeholder_count());
    eval_slots(skeleton.root(), constants, x)
}

fn eval_slots(node: &Node<Slot>, constants: &[f64], x: &[f64]) -> Result<f64, DomainFault> {
    let (value, kind) = match node {
        Node::Leaf(Slot::Placeholder(i)) => (constants[*i], NodeKind::Constant),
        Node::Leaf(Slot::Variable(i)) => (
            *x.get(*i).ok_or(DomainFault::MissingVariable {
                index: *i,
                supplied: x.len(),
            })?,
            NodeKind::Variable,
        ),
        Node::Unary(op, child) => (op.apply(eval_slots(child, constants, x)?), NodeKind::Unary(*op)),
        Node::Binary(op, l, r) => {
            let a = eval_slots(l, constants, x)?;
            let b = eval_slots(r, constants, x)?;
            (op.apply(a, b), NodeKind::Binary(*op))
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(DomainFault::NonFinite(kind))
    }
}

fn kind_of(expr: &Expression) -> NodeKind {
    match expr {
        Node::Leaf(Term::Constant(_)) => NodeKind::Constant,
        Node::Leaf(Term::Variable(_)) => NodeKind::Variable,
        Node::Unary(op, _) => NodeKind::Unary(*op),
        Node::Binary(op, _, _) => NodeKind::Binary(*op),
    }
}
