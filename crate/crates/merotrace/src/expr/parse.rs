//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := factor (('*' | '/') factor)*
//! factor  := '-' factor | power
//! power   := primary ('^' ['-'] digits)?
//! primary := number | variable | '(' expr ')' | 'exp' '(' expr ')'
//! number  := digits ['.' digits] [('e'|'E') ['+'|'-'] digits] ['i']
//! ```
//!
//! Errors carry the byte offset of the offending token.

use super::ExprNode;
use crate::C64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: &'static str },
    #[error("exponent at byte {offset} must be an integer literal")]
    ExponentNotInteger { offset: usize },
}

/// Parses an expression in the variable `u`.
pub fn parse(text: &str) -> Result<ExprNode, ParseError> {
    parse_with_var(text, "u")
}

/// Parses an expression in a caller-chosen variable name.
pub fn parse_with_var(text: &str, var: &str) -> Result<ExprNode, ParseError> {
    let mut p = Parser {
        bytes: text.as_bytes(),
        pos: 0,
        var,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(ParseError::Syntax {
            offset: p.pos,
            expected: "end of input or operator",
        });
    }
    Ok(e)
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    var: &'a str,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<ExprNode, ParseError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek() {
            match op {
                b'+' => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = ExprNode::Add(Box::new(lhs), Box::new(rhs));
                }
                b'-' => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = ExprNode::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<ExprNode, ParseError> {
        let mut lhs = self.factor()?;
        while let Some(op) = self.peek() {
            match op {
                b'*' => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = ExprNode::Mul(Box::new(lhs), Box::new(rhs));
                }
                b'/' => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = ExprNode::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<ExprNode, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.factor()?;
            // fold a negated literal into the constant so "-1" round-trips
            return Ok(match inner {
                ExprNode::Const(c) => ExprNode::Const(-c),
                other => ExprNode::Sub(Box::new(ExprNode::Const(C64::new(0.0, 0.0))), Box::new(other)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<ExprNode, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let n = self.integer_exponent()?;
            return Ok(ExprNode::Pow(Box::new(base), n));
        }
        Ok(base)
    }

    fn integer_exponent(&mut self) -> Result<i32, ParseError> {
        self.skip_ws();
        let offset = self.pos;
        let mut end = self.pos;
        if self.bytes.get(end) == Some(&b'-') || self.bytes.get(end) == Some(&b'+') {
            end += 1;
        }
        let digits_start = end;
        while end < self.bytes.len() && self.bytes[end].is_ascii_digit() {
            end += 1;
        }
        if end == digits_start {
            return Err(ParseError::ExponentNotInteger { offset });
        }
        // a fractional or imaginary continuation makes the exponent non-integral
        if matches!(self.bytes.get(end), Some(b'.') | Some(b'i')) {
            return Err(ParseError::ExponentNotInteger { offset });
        }
        let text = std::str::from_utf8(&self.bytes[self.pos..end]).expect("ascii digits");
        let n: i32 = text
            .parse()
            .map_err(|_| ParseError::ExponentNotInteger { offset })?;
        self.pos = end;
        Ok(n)
    }

    fn primary(&mut self) -> Result<ExprNode, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(ParseError::Syntax {
                        offset: self.pos,
                        expected: "closing parenthesis",
                    });
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            _ => Err(ParseError::Syntax {
                offset: self.pos,
                expected: "operand",
            }),
        }
    }

    fn identifier(&mut self) -> Result<ExprNode, ParseError> {
        let start = self.pos;
        let mut end = start;
        while end < self.bytes.len()
            && (self.bytes[end].is_ascii_alphanumeric() || self.bytes[end] == b'_')
        {
            end += 1;
        }
        let name = std::str::from_utf8(&self.bytes[start..end]).map_err(|_| ParseError::Syntax {
            offset: start,
            expected: "identifier",
        })?;
        if name == self.var {
            self.pos = end;
            return Ok(ExprNode::Var);
        }
        if name == "exp" {
            self.pos = end;
            if self.peek() != Some(b'(') {
                return Err(ParseError::Syntax {
                    offset: self.pos,
                    expected: "opening parenthesis after exp",
                });
            }
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(ParseError::Syntax {
                    offset: self.pos,
                    expected: "closing parenthesis",
                });
            }
            self.pos += 1;
            return Ok(ExprNode::Exp(Box::new(arg)));
        }
        Err(ParseError::Syntax {
            offset: start,
            expected: "the context variable or exp",
        })
    }

    fn number(&mut self) -> Result<ExprNode, ParseError> {
        let start = self.pos;
        let mut end = start;
        while end < self.bytes.len() && self.bytes[end].is_ascii_digit() {
            end += 1;
        }
        if self.bytes.get(end) == Some(&b'.') {
            end += 1;
            let frac_start = end;
            while end < self.bytes.len() && self.bytes[end].is_ascii_digit() {
                end += 1;
            }
            if end == frac_start {
                return Err(ParseError::Syntax {
                    offset: end,
                    expected: "digits after decimal point",
                });
            }
        }
        if matches!(self.bytes.get(end), Some(b'e') | Some(b'E')) {
            // only a well-formed exponent; otherwise the 'e' starts an identifier
            let mut probe = end + 1;
            if matches!(self.bytes.get(probe), Some(b'+') | Some(b'-')) {
                probe += 1;
            }
            let digs = probe;
            while probe < self.bytes.len() && self.bytes[probe].is_ascii_digit() {
                probe += 1;
            }
            if probe > digs {
                end = probe;
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..end]).expect("ascii number");
        let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
            offset: start,
            expected: "number",
        })?;
        self.pos = end;
        if self.bytes.get(self.pos) == Some(&b'i') {
            self.pos += 1;
            return Ok(ExprNode::Const(C64::new(0.0, value)));
        }
        Ok(ExprNode::Const(C64::new(value, 0.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_examples() {
        assert_eq!(
            parse("u^2+1").unwrap(),
            ExprNode::Add(
                Box::new(ExprNode::Pow(Box::new(ExprNode::Var), 2)),
                Box::new(ExprNode::Const(C64::new(1.0, 0.0))),
            )
        );
        assert_eq!(
            parse("1/u").unwrap(),
            ExprNode::Div(
                Box::new(ExprNode::Const(C64::new(1.0, 0.0))),
                Box::new(ExprNode::Var),
            )
        );
        assert_eq!(
            parse("u+"),
            Err(ParseError::Syntax {
                offset: 2,
                expected: "operand"
            })
        );
    }

    #[test]
    fn imaginary_and_scientific_literals() {
        assert_eq!(parse("2i").unwrap(), ExprNode::Const(C64::new(0.0, 2.0)));
        assert_eq!(
            parse("1.5e-3").unwrap(),
            ExprNode::Const(C64::new(1.5e-3, 0.0))
        );
        assert_eq!(parse("-2.5i").unwrap(), ExprNode::Const(C64::new(0.0, -2.5)));
    }

    #[test]
    fn exponent_must_be_integer() {
        assert_eq!(
            parse("u^2.5"),
            Err(ParseError::ExponentNotInteger { offset: 2 })
        );
        assert_eq!(
            parse("u^u"),
            Err(ParseError::ExponentNotInteger { offset: 2 })
        );
        assert!(parse("u^-2").is_ok());
    }

    #[test]
    fn reports_offsets() {
        assert_eq!(
            parse("(u+1"),
            Err(ParseError::Syntax {
                offset: 4,
                expected: "closing parenthesis"
            })
        );
        assert_eq!(
            parse("u)"),
            Err(ParseError::Syntax {
                offset: 1,
                expected: "end of input or operator"
            })
        );
        assert!(matches!(parse("v+1"), Err(ParseError::Syntax { offset: 0, .. })));
    }

    #[test]
    fn custom_variable_name() {
        assert!(parse_with_var("eta^2+eta", "eta").is_ok());
        assert!(parse_with_var("u", "eta").is_err());
    }

    // generator for trees inside the parser image: constants are pure real
    // or pure imaginary
    fn arb_expr() -> impl Strategy<Value = ExprNode> {
        let leaf = prop_oneof![
            (0.0..100.0f64).prop_map(|v| ExprNode::Const(C64::new(v, 0.0))),
            (0.0..100.0f64).prop_map(|v| ExprNode::Const(C64::new(0.0, v))),
            (-100.0..0.0f64).prop_map(|v| ExprNode::Const(C64::new(v, 0.0))),
            Just(ExprNode::Var),
        ];
        leaf.prop_recursive(4, 48, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ExprNode::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ExprNode::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ExprNode::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ExprNode::Div(Box::new(a), Box::new(b))),
                (inner.clone(), -6..7i32).prop_map(|(a, n)| ExprNode::Pow(Box::new(a), n)),
                inner.prop_map(|a| ExprNode::Exp(Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn render_round_trips(e in arb_expr()) {
            let text = e.render("u");
            let back = parse(&text).unwrap();
            prop_assert_eq!(back, e);
        }
    }
}
