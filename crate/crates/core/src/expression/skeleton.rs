use std::fmt;

use super::ast::{Expression, Node, Slot, Term};
use super::print::write_node;

/// An expression with its constants abstracted to numbered placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Skeleton {
    root: Node<Slot>,
    placeholder_count: usize,
}

impl Eq for Node<Slot> {}

impl std::hash::Hash for Node<Slot> {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        match self {
            Node::Leaf(l) => {
                0u8.hash(state);
                l.hash(state);
            }
            Node::Unary(op, c) => {
                1u8.hash(state);
                op.hash(state);
                c.hash(state);
            }
            Node::Binary(op, l, r) => {
                2u8.hash(state);
                op.hash(state);
                l.hash(state);
                r.hash(state);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("skeleton has {expected} placeholder(s) but {actual} constant(s) were supplied")]
pub struct ArityMismatch {
    pub expected: usize,
    pub actual: usize,
}

impl Skeleton {
    /// Builds a skeleton, renumbering placeholders in depth-first order.
    pub fn new(root: Node<Slot>) -> Self {
        let mut next = 0;
        let root = root.map_leaves(&mut |slot| match slot {
            Slot::Placeholder(_) => {
                let ordinal = next;
                next += 1;
                Node::Leaf(Slot::Placeholder(ordinal))
            }
            Slot::Variable(i) => Node::Leaf(Slot::Variable(*i)),
        });
        Skeleton {
            root,
            placeholder_count: next,
        }
    }

    pub(crate) fn from_parts(root: Node<Slot>, placeholder_count: usize) -> Self {
        Skeleton {
            root,
            placeholder_count,
        }
    }

    pub fn root(&self) -> &Node<Slot> {
        &self.root
    }

    pub fn placeholder_count(&self) -> usize {
        self.placeholder_count
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }
}

impl fmt::Display for Skeleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_node(&self.root, &mut out);
        f.write_str(&out)
    }
}

/// Replaces every constant with a placeholder, returning the constants in
/// placeholder order.
pub fn skeletonize(expr: &Expression) -> (Skeleton, Vec<f64>) {
    let mut constants = Vec::new();
    let root = expr.map_leaves(&mut |term| match term {
        Term::Constant(c) => {
            let ordinal = constants.len();
            constants.push(*c);
            Node::Leaf(Slot::Placeholder(ordinal))
        }
        Term::Variable(i) => Node::Leaf(Slot::Variable(*i)),
    });
    let count = constants.len();
    (Skeleton::from_parts(root, count), constants)
}

/// Fills placeholder `i` with `constants[i]`.
pub fn substitute(skeleton: &Skeleton, constants: &[f64]) -> Result<Expression, ArityMismatch> {
    if constants.len() != skeleton.placeholder_count {
        return Err(ArityMismatch {
            expected: skeleton.placeholder_count,
            actual: constants.len(),
        });
    }
    Ok(skeleton.root.map_leaves(&mut |slot| match slot {
        Slot::Placeholder(i) => Expression::constant(constants[*i]),
        Slot::Variable(i) => Expression::variable(*i),
    }))
}
