//! Prefix-notation token stream shared with the skeleton language model.

use std::collections::HashMap;
use std::fmt;

use super::ast::{BinaryOp, Node, Slot, UnaryOp};
use super::skeleton::Skeleton;

pub type TokenId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Pad,
    Start,
    End,
    Unary(UnaryOp),
    Binary(BinaryOp),
    Placeholder,
    Variable(usize),
}

impl Token {
    /// Number of operands the token consumes in prefix order.
    pub fn arity(self) -> Option<usize> {
        match self {
            Token::Pad | Token::Start | Token::End => None,
            Token::Unary(_) => Some(1),
            Token::Binary(_) => Some(2),
            Token::Placeholder | Token::Variable(_) => Some(0),
        }
    }

    pub fn text(self) -> String {
        match self {
            Token::Pad => "<pad>".into(),
            Token::Start => "<s>".into(),
            Token::End => "</s>".into(),
            Token::Unary(op) => op.name().into(),
            Token::Binary(op) => op.name().into(),
            Token::Placeholder => "C".into(),
            Token::Variable(i) => format!("x{}", i + 1),
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("empty token sequence")]
    Empty,
    #[error("unknown token id {id} at position {position}")]
    UnknownId { id: TokenId, position: usize },
    #[error("marker token `{token}` at position {position} inside an expression")]
    Marker { token: String, position: usize },
    #[error("truncated sequence: {missing} operand(s) missing")]
    Truncated { missing: usize },
    #[error("trailing tokens from position {position}")]
    Trailing { position: usize },
    #[error("token `{0}` is not in the vocabulary")]
    NotInVocabulary(String),
}

/// Dense bijection between tokens and ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVocabulary {
    tokens: Vec<Token>,
    ids: HashMap<Token, TokenId>,
}

impl TokenVocabulary {
    /// Markers, operators, the placeholder, then `x1..x{variable_count}`.
    pub fn new(variable_count: usize) -> Self {
        let mut tokens = vec![Token::Pad, Token::Start, Token::End];
        tokens.extend(BinaryOp::ALL.iter().map(|&op| Token::Binary(op)));
        tokens.extend(UnaryOp::ALL.iter().map(|&op| Token::Unary(op)));
        tokens.push(Token::Placeholder);
        tokens.extend((0..variable_count).map(Token::Variable));
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<Token>) -> Self {
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, i as TokenId))
            .collect();
        TokenVocabulary { tokens, ids }
    }

    /// Rebuilds a vocabulary from its textual token list.
    pub fn from_strings<S: AsRef<str>>(names: &[S]) -> Result<Self, TokenError> {
        let mut tokens = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref();
            let token = match name {
                "<pad>" => Token::Pad,
                "<s>" => Token::Start,
                "</s>" => Token::End,
                "C" => Token::Placeholder,
                other => {
                    if let Some(op) = BinaryOp::ALL.iter().find(|op| op.name() == other) {
                        Token::Binary(*op)
                    } else if let Some(op) = UnaryOp::ALL.iter().find(|op| op.name() == other) {
                        Token::Unary(*op)
                    } else if let Some(i) = other
                        .strip_prefix('x')
                        .and_then(|d| d.parse::<usize>().ok())
                        .filter(|&n| n >= 1)
                    {
                        Token::Variable(i - 1)
                    } else {
                        return Err(TokenError::NotInVocabulary(other.to_string()));
                    }
                }
            };
            tokens.push(token);
        }
        Ok(Self::from_tokens(tokens))
    }

    pub fn strings(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.text()).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: Token) -> Option<TokenId> {
        self.ids.get(&token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<Token> {
        self.tokens.get(id as usize).copied()
    }

    fn required_id(&self, token: Token) -> TokenId {
        self.id(token).expect("marker tokens are always present")
    }

    pub fn pad_id(&self) -> TokenId {
        self.required_id(Token::Pad)
    }

    pub fn start_id(&self) -> TokenId {
        self.required_id(Token::Start)
    }

    pub fn end_id(&self) -> TokenId {
        self.required_id(Token::End)
    }

    /// Serializes a skeleton in prefix order, without markers.
    pub fn tokenize(&self, skeleton: &Skeleton) -> Result<Vec<TokenId>, TokenError> {
        let mut out = Vec::with_capacity(skeleton.root().node_count());
        self.emit(skeleton.root(), &mut out)?;
        Ok(out)
    }

    fn emit(&self, node: &Node<Slot>, out: &mut Vec<TokenId>) -> Result<(), TokenError> {
        let token = match node {
            Node::Leaf(Slot::Placeholder(_)) => Token::Placeholder,
            Node::Leaf(Slot::Variable(i)) => Token::Variable(*i),
            Node::Unary(op, _) => Token::Unary(*op),
            Node::Binary(op, _, _) => Token::Binary(*op),
        };
        out.push(
            self.id(token)
                .ok_or_else(|| TokenError::NotInVocabulary(token.text()))?,
        );
        match node {
            Node::Leaf(_) => Ok(()),
            Node::Unary(_, c) => self.emit(c, out),
            Node::Binary(_, l, r) => {
                self.emit(l, out)?;
                self.emit(r, out)
            }
        }
    }

    /// Inverse of [`tokenize`](Self::tokenize); rejects ill-formed prefixes.
    pub fn detokenize(&self, ids: &[TokenId]) -> Result<Skeleton, TokenError> {
        if ids.is_empty() {
            return Err(TokenError::Empty);
        }
        // arity counting first, so a malformed stream never recurses deeply
        let mut open = 1usize;
        for (position, &id) in ids.iter().enumerate() {
            if open == 0 {
                return Err(TokenError::Trailing { position });
            }
            let token = self.token(id).ok_or(TokenError::UnknownId { id, position })?;
            let arity = token.arity().ok_or_else(|| TokenError::Marker {
                token: token.text(),
                position,
            })?;
            open = open - 1 + arity;
        }
        if open > 0 {
            return Err(TokenError::Truncated { missing: open });
        }
        let mut cursor = 0;
        let root = self.build(ids, &mut cursor);
        Ok(Skeleton::new(root))
    }

    fn build(&self, ids: &[TokenId], cursor: &mut usize) -> Node<Slot> {
        let token = self.tokens[ids[*cursor] as usize];
        *cursor += 1;
        match token {
            Token::Placeholder => Node::Leaf(Slot::Placeholder(0)),
            Token::Variable(i) => Node::Leaf(Slot::Variable(i)),
            Token::Unary(op) => Node::unary(op, self.build(ids, cursor)),
            Token::Binary(op) => {
                let l = self.build(ids, cursor);
                let r = self.build(ids, cursor);
                Node::binary(op, l, r)
            }
            Token::Pad | Token::Start | Token::End => unreachable!("validated above"),
        }
    }
}
