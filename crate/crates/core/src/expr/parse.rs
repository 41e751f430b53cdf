//! Recursive-descent parser for the polynomial expression grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary ('*' unary)*
//! unary  := ('+' | '-') unary | factor
//! factor := base ('^' uint)?
//! base   := number | ident | '(' expr ')'
//! ```

use super::{ExprError, ExprNode};

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

#[derive(Clone, Debug)]
struct Spanned {
    token: Token,
    position: usize,
    text: String,
}

fn tokenize(src: &str) -> Result<Vec<Spanned>, ExprError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '+' => Some(Token::Plus),
            '-' => Some(Token::Minus),
            '*' => Some(Token::Star),
            '^' => Some(Token::Caret),
            '(' => Some(Token::LParen),
            ')' => Some(Token::RParen),
            _ => None,
        };
        if let Some(token) = single {
            tokens.push(Spanned {
                token,
                position: pos,
                text: c.to_string(),
            });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                i += 1;
            }
            // Optional exponent; only consumed when digits follow.
            if i < chars.len() && matches!(chars[i].1, 'e' | 'E') {
                let mut j = i + 1;
                if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].1.is_ascii_digit() {
                    while j < chars.len() && chars[j].1.is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let end = chars.get(i).map_or(src.len(), |&(p, _)| p);
            let text = &src[pos..end];
            let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                position: pos,
                message: format!("malformed number `{text}`"),
            })?;
            if !value.is_finite() {
                return Err(ExprError::Syntax {
                    position: pos,
                    message: format!("number `{text}` is not finite"),
                });
            }
            tokens.push(Spanned {
                token: Token::Number(value),
                position: pos,
                text: text.to_string(),
            });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = pos;
            while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            let end = chars.get(i).map_or(src.len(), |&(p, _)| p);
            let text = &src[start..end];
            tokens.push(Spanned {
                token: Token::Ident(text.to_string()),
                position: start,
                text: text.to_string(),
            });
            continue;
        }
        return Err(ExprError::Syntax {
            position: pos,
            message: format!("unexpected character `{c}`"),
        });
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Spanned>,
    cursor: usize,
    variables: &'a [String],
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Spanned> {
        self.tokens.get(self.cursor)
    }

    fn position(&self) -> usize {
        self.peek().map_or(self.end, |t| t.position)
    }

    fn bump(&mut self) -> Option<Spanned> {
        let t = self.tokens.get(self.cursor).cloned();
        self.cursor += 1;
        t
    }

    fn eat(&mut self, token: &Token) -> bool {
        if self.peek().map(|t| &t.token) == Some(token) {
            self.cursor += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<ExprNode, ExprError> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat(&Token::Plus) {
                terms.push(self.term()?);
            } else if self.eat(&Token::Minus) {
                terms.push(negate(self.term()?));
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            ExprNode::Sum(terms)
        })
    }

    fn term(&mut self) -> Result<ExprNode, ExprError> {
        let mut factors = vec![self.unary()?];
        while self.eat(&Token::Star) {
            factors.push(self.unary()?);
        }
        Ok(if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            ExprNode::Product(factors)
        })
    }

    fn unary(&mut self) -> Result<ExprNode, ExprError> {
        if self.eat(&Token::Minus) {
            return Ok(negate(self.unary()?));
        }
        if self.eat(&Token::Plus) {
            return self.unary();
        }
        self.factor()
    }

    fn factor(&mut self) -> Result<ExprNode, ExprError> {
        let base = self.base()?;
        if !self.eat(&Token::Caret) {
            return Ok(base);
        }
        let position = self.position();
        match self.bump() {
            Some(Spanned {
                token: Token::Number(v),
                text,
                ..
            }) => {
                if v.fract() != 0.0 || text.contains(['.', 'e', 'E']) || v > f64::from(u32::MAX) {
                    return Err(ExprError::InvalidExponent { position, text });
                }
                Ok(ExprNode::Power(Box::new(base), v as u32))
            }
            Some(Spanned {
                token: Token::Minus,
                ..
            }) => {
                let text = match self.peek() {
                    Some(t) => format!("-{}", t.text),
                    None => "-".to_string(),
                };
                Err(ExprError::InvalidExponent { position, text })
            }
            Some(other) => Err(ExprError::Syntax {
                position,
                message: format!("expected a non-negative integer exponent, found `{}`", other.text),
            }),
            None => Err(ExprError::Syntax {
                position,
                message: "expected exponent after `^`".into(),
            }),
        }
    }

    fn base(&mut self) -> Result<ExprNode, ExprError> {
        let position = self.position();
        match self.bump() {
            Some(Spanned {
                token: Token::Number(v),
                ..
            }) => Ok(ExprNode::Constant(v)),
            Some(Spanned {
                token: Token::Ident(name),
                ..
            }) => match self.variables.iter().position(|v| *v == name) {
                Some(index) => Ok(ExprNode::Variable(index)),
                None => Err(ExprError::UnknownVariable { name, position }),
            },
            Some(Spanned {
                token: Token::LParen,
                ..
            }) => {
                let inner = self.expr()?;
                if !self.eat(&Token::RParen) {
                    return Err(ExprError::Syntax {
                        position: self.position(),
                        message: "expected `)`".into(),
                    });
                }
                Ok(inner)
            }
            Some(other) => Err(ExprError::Syntax {
                position,
                message: format!("unexpected `{}`", other.text),
            }),
            None => Err(ExprError::Syntax {
                position,
                message: "unexpected end of input".into(),
            }),
        }
    }
}

fn negate(node: ExprNode) -> ExprNode {
    match node {
        ExprNode::Constant(c) => ExprNode::Constant(-c),
        other => ExprNode::Product(vec![ExprNode::Constant(-1.0), other]),
    }
}

/// Parses one expression over the given variable names.
pub fn parse_expr(src: &str, variables: &[String]) -> Result<ExprNode, ExprError> {
    let tokens = tokenize(src)?;
    let mut parser = Parser {
        tokens,
        cursor: 0,
        variables,
        end: src.len(),
    };
    let node = parser.expr()?;
    if let Some(t) = parser.peek() {
        return Err(ExprError::Syntax {
            position: t.position,
            message: format!("unexpected `{}` after expression", t.text),
        });
    }
    Ok(node)
}
