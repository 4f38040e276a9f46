use std::fmt;

use serde::{Deserialize, Serialize};

/// Single-argument operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryOp {
    Sin,
    Cos,
    Log,
    Exp,
    Neg,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 5] = [
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Log,
        UnaryOp::Exp,
        UnaryOp::Neg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Log => "log",
            UnaryOp::Exp => "exp",
            UnaryOp::Neg => "neg",
        }
    }

    /// Function-call spelling in infix text; `None` for prefix minus.
    pub fn function_name(self) -> Option<&'static str> {
        match self {
            UnaryOp::Neg => None,
            other => Some(other.name()),
        }
    }

    pub fn from_function_name(name: &str) -> Option<UnaryOp> {
        match name {
            "sin" => Some(UnaryOp::Sin),
            "cos" => Some(UnaryOp::Cos),
            "log" => Some(UnaryOp::Log),
            "exp" => Some(UnaryOp::Exp),
            _ => None,
        }
    }

    pub fn apply(self, v: f64) -> f64 {
        match self {
            UnaryOp::Sin => v.sin(),
            UnaryOp::Cos => v.cos(),
            // ln of a negative is NaN, of zero is -inf; both are reported as faults
            UnaryOp::Log => v.ln(),
            UnaryOp::Exp => v.exp(),
            UnaryOp::Neg => -v,
        }
    }
}

/// Two-argument operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 5] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Pow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Pow => "pow",
        }
    }

    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => a.powf(b),
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
            BinaryOp::Pow => 4,
        }
    }
}

/// Generic equation tree. The leaf type distinguishes concrete expressions
/// (numeric constants) from skeletons (constant placeholders).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<L> {
    Leaf(L),
    Unary(UnaryOp, Box<Node<L>>),
    Binary(BinaryOp, Box<Node<L>>, Box<Node<L>>),
}

impl<L> Node<L> {
    pub fn unary(op: UnaryOp, child: Node<L>) -> Self {
        Node::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, left: Node<L>, right: Node<L>) -> Self {
        Node::Binary(op, Box::new(left), Box::new(right))
    }

    /// Depth counted in nodes; a lone leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf(_) => 1,
            Node::Unary(_, c) => 1 + c.depth(),
            Node::Binary(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Node::Leaf(_) => 1,
            Node::Unary(_, c) => 1 + c.node_count(),
            Node::Binary(_, l, r) => 1 + l.node_count() + r.node_count(),
        }
    }

    /// Leaves in left-to-right depth-first order.
    pub fn leaves(&self) -> Vec<&L> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a L>) {
        match self {
            Node::Leaf(l) => out.push(l),
            Node::Unary(_, c) => c.collect_leaves(out),
            Node::Binary(_, l, r) => {
                l.collect_leaves(out);
                r.collect_leaves(out);
            }
        }
    }

    /// Rebuilds the tree with every leaf mapped in depth-first order.
    pub fn map_leaves<M, F>(&self, f: &mut F) -> Node<M>
    where
        F: FnMut(&L) -> Node<M>,
    {
        match self {
            Node::Leaf(l) => f(l),
            Node::Unary(op, c) => Node::unary(*op, c.map_leaves(f)),
            Node::Binary(op, l, r) => {
                let left = l.map_leaves(f);
                let right = r.map_leaves(f);
                Node::binary(*op, left, right)
            }
        }
    }
}

/// Leaf of a concrete expression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Term {
    Constant(f64),
    /// Zero-based input variable; printed as `x1`, `x2`, ...
    Variable(usize),
}

/// Leaf of a skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    /// Constant placeholder, numbered in depth-first order.
    Placeholder(usize),
    Variable(usize),
}

/// An equation over input variables with numeric constants.
pub type Expression = Node<Term>;

/// Node kind reported by evaluation faults and validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Constant,
    Variable,
    Unary(UnaryOp),
    Binary(BinaryOp),
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Constant => f.write_str("constant"),
            NodeKind::Variable => f.write_str("variable"),
            NodeKind::Unary(op) => f.write_str(op.name()),
            NodeKind::Binary(op) => f.write_str(op.name()),
        }
    }
}

impl Expression {
    pub fn constant(v: f64) -> Self {
        Node::Leaf(Term::Constant(v))
    }

    pub fn variable(index: usize) -> Self {
        Node::Leaf(Term::Variable(index))
    }

    pub fn constants(&self) -> Vec<f64> {
        self.leaves()
            .into_iter()
            .filter_map(|t| match t {
                Term::Constant(c) => Some(*c),
                Term::Variable(_) => None,
            })
            .collect()
    }

    pub fn has_variable(&self) -> bool {
        self.leaves()
            .iter()
            .any(|t| matches!(t, Term::Variable(_)))
    }

    /// Largest variable index plus one; zero when the expression is constant.
    pub fn variable_arity(&self) -> usize {
        self.leaves()
            .iter()
            .filter_map(|t| match t {
                Term::Variable(i) => Some(i + 1),
                Term::Constant(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Checks the structural invariants against a variable count.
    pub fn validate(&self, variable_count: usize) -> Result<(), InvalidExpression> {
        for leaf in self.leaves() {
            match *leaf {
                Term::Variable(i) if i >= variable_count => {
                    return Err(InvalidExpression::VariableOutOfRange {
                        index: i,
                        variable_count,
                    })
                }
                Term::Constant(c) if !c.is_finite() => {
                    return Err(InvalidExpression::NonFiniteConstant(c))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InvalidExpression {
    #[error("variable x{} out of range for {variable_count} variable(s)", index + 1)]
    VariableOutOfRange { index: usize, variable_count: usize },
    #[error("non-finite constant {0}")]
    NonFiniteConstant(f64),
}
