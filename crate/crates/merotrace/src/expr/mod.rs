//! Closed-form complex expressions of one variable.
//!
//! The grammar covers rational operations plus `exp`; this is enough for
//! every metric in the supported warped-product class while keeping
//! evaluation single-valued. Fractional powers are multivalued and must
//! arise only through analytic continuation, never through expression
//! evaluation, so exponents are restricted to integers.
//!
//! Evaluation never produces an infinite complex value: divisions whose
//! denominator magnitude falls below the pole threshold signal [`Pole`]
//! instead, so downstream code branches explicitly.

mod jet;
mod parse;

pub use jet::Jet2;
pub use parse::{parse, parse_with_var, ParseError};

use crate::{C64, POLE_EPS};

/// Parsed expression tree. Immutable after parse; all operations are pure.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprNode {
    Const(C64),
    Var,
    Add(Box<ExprNode>, Box<ExprNode>),
    Sub(Box<ExprNode>, Box<ExprNode>),
    Mul(Box<ExprNode>, Box<ExprNode>),
    Div(Box<ExprNode>, Box<ExprNode>),
    /// Integer power of a subexpression.
    Pow(Box<ExprNode>, i32),
    Exp(Box<ExprNode>),
}

/// Signals that an evaluation point sits on (or within the pole threshold
/// of) a pole of the expression or of one of its derivatives.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("pole encountered at {at}")]
pub struct Pole {
    /// The evaluation point that triggered the signal.
    pub at: C64,
}

impl ExprNode {
    pub fn constant(c: impl Into<C64>) -> Self {
        ExprNode::Const(c.into())
    }

    /// True when the tree contains no `exp` node, i.e. the expression is a
    /// rational function of the variable.
    pub fn is_rational(&self) -> bool {
        match self {
            ExprNode::Const(_) | ExprNode::Var => true,
            ExprNode::Add(a, b) | ExprNode::Sub(a, b) | ExprNode::Mul(a, b) | ExprNode::Div(a, b) => {
                a.is_rational() && b.is_rational()
            }
            ExprNode::Pow(a, _) => a.is_rational(),
            ExprNode::Exp(_) => false,
        }
    }

    /// True when the tree contains no variable node.
    pub fn is_constant(&self) -> bool {
        match self {
            ExprNode::Const(_) => true,
            ExprNode::Var => false,
            ExprNode::Add(a, b) | ExprNode::Sub(a, b) | ExprNode::Mul(a, b) | ExprNode::Div(a, b) => {
                a.is_constant() && b.is_constant()
            }
            ExprNode::Pow(a, _) => a.is_constant(),
            ExprNode::Exp(a) => a.is_constant(),
        }
    }

    /// Renders the tree to text that parses back to a structurally equal
    /// tree. Constants with both real and imaginary part nonzero are outside
    /// the parser image and render as a parenthesized sum.
    pub fn render(&self, var: &str) -> String {
        let mut s = String::new();
        self.render_prec(var, 0, &mut s);
        s
    }

    fn render_prec(&self, var: &str, parent: u8, out: &mut String) {
        // precedence: add/sub 1, mul/div 2, pow 3, atoms 4
        let prec = match self {
            ExprNode::Add(..) | ExprNode::Sub(..) => 1,
            ExprNode::Mul(..) | ExprNode::Div(..) => 2,
            ExprNode::Pow(..) => 3,
            _ => 4,
        };
        let need_paren = prec < parent;
        if need_paren {
            out.push('(');
        }
        match self {
            ExprNode::Const(c) => render_const(*c, out),
            ExprNode::Var => out.push_str(var),
            ExprNode::Add(a, b) => {
                a.render_prec(var, 1, out);
                out.push('+');
                b.render_prec(var, 2, out);
            }
            ExprNode::Sub(a, b) => {
                a.render_prec(var, 1, out);
                out.push('-');
                b.render_prec(var, 2, out);
            }
            ExprNode::Mul(a, b) => {
                a.render_prec(var, 2, out);
                out.push('*');
                b.render_prec(var, 3, out);
            }
            ExprNode::Div(a, b) => {
                a.render_prec(var, 2, out);
                out.push('/');
                b.render_prec(var, 3, out);
            }
            ExprNode::Pow(a, n) => {
                // bases other than the variable or a plain nonnegative number
                // need parentheses so the exponent binds to the whole base
                let plain = matches!(a.as_ref(), ExprNode::Var)
                    || matches!(a.as_ref(), ExprNode::Const(c)
                        if (c.im == 0.0 && c.re >= 0.0) || (c.re == 0.0 && c.im >= 0.0));
                if plain {
                    a.render_prec(var, 4, out);
                } else {
                    out.push('(');
                    a.render_prec(var, 0, out);
                    out.push(')');
                }
                out.push('^');
                out.push_str(&n.to_string());
            }
            ExprNode::Exp(a) => {
                out.push_str("exp(");
                a.render_prec(var, 0, out);
                out.push(')');
            }
        }
        if need_paren {
            out.push(')');
        }
    }
}

fn render_const(c: C64, out: &mut String) {
    if c.im == 0.0 {
        out.push_str(&format!("{:?}", c.re));
    } else if c.re == 0.0 {
        out.push_str(&format!("{:?}i", c.im));
    } else {
        out.push('(');
        out.push_str(&format!("{:?}", c.re));
        if c.im >= 0.0 {
            out.push('+');
        }
        out.push_str(&format!("{:?}i", c.im));
        out.push(')');
    }
}

/// Evaluates `e` at `p` with the default pole threshold.
pub fn eval(e: &ExprNode, p: C64) -> Result<C64, Pole> {
    eval_with(e, p, POLE_EPS)
}

/// Evaluates `e` at `p`; a division signals [`Pole`] when the denominator
/// magnitude falls below `pole_eps` relative to the numerator scale.
pub fn eval_with(e: &ExprNode, p: C64, pole_eps: f64) -> Result<C64, Pole> {
    Ok(match e {
        ExprNode::Const(c) => *c,
        ExprNode::Var => p,
        ExprNode::Add(a, b) => eval_with(a, p, pole_eps)? + eval_with(b, p, pole_eps)?,
        ExprNode::Sub(a, b) => eval_with(a, p, pole_eps)? - eval_with(b, p, pole_eps)?,
        ExprNode::Mul(a, b) => eval_with(a, p, pole_eps)? * eval_with(b, p, pole_eps)?,
        ExprNode::Div(a, b) => {
            let num = eval_with(a, p, pole_eps)?;
            let den = eval_with(b, p, pole_eps)?;
            check_den(num.norm(), den, p, pole_eps)?;
            num / den
        }
        ExprNode::Pow(a, n) => {
            let base = eval_with(a, p, pole_eps)?;
            if *n < 0 {
                check_den(1.0, base, p, pole_eps)?;
            }
            base.powi(*n)
        }
        ExprNode::Exp(a) => eval_with(a, p, pole_eps)?.exp(),
    })
}

/// Evaluates value and first two derivatives of `e` at `p` by forward-mode
/// rules.
pub fn eval_jet(e: &ExprNode, p: C64) -> Result<Jet2, Pole> {
    eval_jet_with(e, p, POLE_EPS)
}

/// [`eval_jet`] with an explicit pole threshold.
pub fn eval_jet_with(e: &ExprNode, p: C64, pole_eps: f64) -> Result<Jet2, Pole> {
    Ok(match e {
        ExprNode::Const(c) => Jet2::constant(*c),
        ExprNode::Var => Jet2::variable(p),
        ExprNode::Add(a, b) => eval_jet_with(a, p, pole_eps)? + eval_jet_with(b, p, pole_eps)?,
        ExprNode::Sub(a, b) => eval_jet_with(a, p, pole_eps)? - eval_jet_with(b, p, pole_eps)?,
        ExprNode::Mul(a, b) => eval_jet_with(a, p, pole_eps)? * eval_jet_with(b, p, pole_eps)?,
        ExprNode::Div(a, b) => {
            let num = eval_jet_with(a, p, pole_eps)?;
            let den = eval_jet_with(b, p, pole_eps)?;
            check_den(num.value.norm(), den.value, p, pole_eps)?;
            num / den
        }
        ExprNode::Pow(a, n) => {
            let base = eval_jet_with(a, p, pole_eps)?;
            if *n < 0 {
                check_den(1.0, base.value, p, pole_eps)?;
            }
            base.powi(*n)
        }
        ExprNode::Exp(a) => eval_jet_with(a, p, pole_eps)?.exp(),
    })
}

// A division signals a pole when the denominator vanishes outright or is
// smaller than pole_eps relative to the numerator; a tiny denominator under
// a comparably tiny numerator is a well-conditioned ratio, not a pole.
fn check_den(num_scale: f64, den: C64, p: C64, pole_eps: f64) -> Result<(), Pole> {
    let d = den.norm();
    if d == 0.0 || d < pole_eps * num_scale {
        Err(Pole { at: p })
    } else {
        Ok(())
    }
}

/// Symbolic derivative of the expression, with light zero/one folding.
pub fn differentiate(e: &ExprNode) -> ExprNode {
    use ExprNode::*;
    match e {
        Const(_) => ExprNode::constant(0.0),
        Var => ExprNode::constant(1.0),
        Add(a, b) => smart_add(differentiate(a), differentiate(b)),
        Sub(a, b) => smart_sub(differentiate(a), differentiate(b)),
        Mul(a, b) => smart_add(
            smart_mul(differentiate(a), (**b).clone()),
            smart_mul((**a).clone(), differentiate(b)),
        ),
        Div(a, b) => {
            let num = smart_sub(
                smart_mul(differentiate(a), (**b).clone()),
                smart_mul((**a).clone(), differentiate(b)),
            );
            ExprNode::Div(Box::new(num), Box::new(Pow(b.clone(), 2)))
        }
        Pow(a, n) => {
            if *n == 0 {
                return ExprNode::constant(0.0);
            }
            let factor = smart_mul(
                ExprNode::constant(C64::new(*n as f64, 0.0)),
                Pow(a.clone(), n - 1),
            );
            smart_mul(factor, differentiate(a))
        }
        Exp(a) => smart_mul(Exp(a.clone()), differentiate(a)),
    }
}

fn is_const_val(e: &ExprNode, v: f64) -> bool {
    matches!(e, ExprNode::Const(c) if *c == C64::new(v, 0.0))
}

fn smart_add(a: ExprNode, b: ExprNode) -> ExprNode {
    if is_const_val(&a, 0.0) {
        return b;
    }
    if is_const_val(&b, 0.0) {
        return a;
    }
    ExprNode::Add(Box::new(a), Box::new(b))
}

fn smart_sub(a: ExprNode, b: ExprNode) -> ExprNode {
    if is_const_val(&b, 0.0) {
        return a;
    }
    ExprNode::Sub(Box::new(a), Box::new(b))
}

fn smart_mul(a: ExprNode, b: ExprNode) -> ExprNode {
    if is_const_val(&a, 0.0) || is_const_val(&b, 0.0) {
        return ExprNode::constant(0.0);
    }
    if is_const_val(&a, 1.0) {
        return b;
    }
    if is_const_val(&b, 1.0) {
        return a;
    }
    ExprNode::Mul(Box::new(a), Box::new(b))
}
