//! Scalar expressions over named coordinates: parsing, evaluation and exact
//! symbolic differentiation.
//!
//! An [`Expression`] is an immutable tree shared through `Arc`, so clones are
//! cheap and derived geometric objects (inverse metrics, Christoffel symbols,
//! operator coefficients) can share subtrees freely. No simplification beyond
//! constant folding is performed; downstream correctness checks are numeric
//! at sample points.
//!
//! Coordinates are referenced by index into a chart (a list of names held by
//! the caller); evaluation takes a positional binding slice.

mod parse;

pub use parse::parse;

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug)]
pub enum Node {
    Const(f64),
    Coord(usize),
    Add(Expression, Expression),
    Sub(Expression, Expression),
    Mul(Expression, Expression),
    Div(Expression, Expression),
    Pow(Expression, Expression),
    Neg(Expression),
    Sin(Expression),
    Cos(Expression),
    Exp(Expression),
    Log(Expression),
    Sqrt(Expression),
    Abs(Expression),
}

/// Immutable scalar expression over chart coordinates.
#[derive(Clone, Debug)]
pub struct Expression(Arc<Node>);

impl Expression {
    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(c: f64) -> Self {
        Expression(Arc::new(Node::Const(c)))
    }

    pub fn coord(i: usize) -> Self {
        Expression(Arc::new(Node::Coord(i)))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(*self.0, Node::Const(c) if c == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(*self.0, Node::Const(c) if c == 1.0)
    }

    pub fn add(&self, rhs: &Expression) -> Expression {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) if (a + b).is_finite() => Self::constant(a + b),
            (Some(a), _) if a == 0.0 => rhs.clone(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => Expression(Arc::new(Node::Add(self.clone(), rhs.clone()))),
        }
    }

    pub fn sub(&self, rhs: &Expression) -> Expression {
        if Arc::ptr_eq(&self.0, &rhs.0) {
            return Self::zero();
        }
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) if (a - b).is_finite() => Self::constant(a - b),
            (Some(a), _) if a == 0.0 => rhs.neg(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => Expression(Arc::new(Node::Sub(self.clone(), rhs.clone()))),
        }
    }

    pub fn mul(&self, rhs: &Expression) -> Expression {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) if (a * b).is_finite() => Self::constant(a * b),
            (Some(a), _) if a == 0.0 => Self::zero(),
            (_, Some(b)) if b == 0.0 => Self::zero(),
            (Some(a), _) if a == 1.0 => rhs.clone(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            _ => Expression(Arc::new(Node::Mul(self.clone(), rhs.clone()))),
        }
    }

    pub fn div(&self, rhs: &Expression) -> Expression {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) if b != 0.0 && (a / b).is_finite() => Self::constant(a / b),
            // a structurally zero numerator absorbs the quotient (derived
            // objects produce these from vanishing cofactors)
            (Some(a), None) if a == 0.0 => Self::zero(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            _ => Expression(Arc::new(Node::Div(self.clone(), rhs.clone()))),
        }
    }

    pub fn pow(&self, rhs: &Expression) -> Expression {
        if let Some(e) = rhs.as_const() {
            if e == 1.0 {
                return self.clone();
            }
            if e == 0.0 {
                return Self::one();
            }
            if let Some(b) = self.as_const() {
                if (b >= 0.0 || e.fract() == 0.0) && b.powf(e).is_finite() {
                    return Self::constant(b.powf(e));
                }
            }
        }
        Expression(Arc::new(Node::Pow(self.clone(), rhs.clone())))
    }

    pub fn powi(&self, e: i32) -> Expression {
        self.pow(&Self::constant(e as f64))
    }

    pub fn neg(&self) -> Expression {
        match &*self.0 {
            Node::Const(c) => Self::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expression(Arc::new(Node::Neg(self.clone()))),
        }
    }

    pub fn sin(&self) -> Expression {
        match self.as_const() {
            Some(c) => Self::constant(c.sin()),
            None => Expression(Arc::new(Node::Sin(self.clone()))),
        }
    }

    pub fn cos(&self) -> Expression {
        match self.as_const() {
            Some(c) => Self::constant(c.cos()),
            None => Expression(Arc::new(Node::Cos(self.clone()))),
        }
    }

    pub fn exp(&self) -> Expression {
        match self.as_const() {
            Some(c) if c.exp().is_finite() => Self::constant(c.exp()),
            _ => Expression(Arc::new(Node::Exp(self.clone()))),
        }
    }

    pub fn log(&self) -> Expression {
        match self.as_const() {
            Some(c) if c > 0.0 => Self::constant(c.ln()),
            _ => Expression(Arc::new(Node::Log(self.clone()))),
        }
    }

    pub fn sqrt(&self) -> Expression {
        match self.as_const() {
            Some(c) if c >= 0.0 => Self::constant(c.sqrt()),
            _ => Expression(Arc::new(Node::Sqrt(self.clone()))),
        }
    }

    pub fn abs(&self) -> Expression {
        match self.as_const() {
            Some(c) => Self::constant(c.abs()),
            None => Expression(Arc::new(Node::Abs(self.clone()))),
        }
    }

    /// IEEE-double value at a positional binding. Errors at analytic
    /// singularities and when the binding is shorter than a used index.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        let v = match &*self.0 {
            Node::Const(c) => *c,
            Node::Coord(i) => {
                if *i >= point.len() {
                    return Err(Error::BindingLength {
                        expected: *i + 1,
                        got: point.len(),
                    });
                }
                point[*i]
            }
            Node::Add(a, b) => a.eval(point)? + b.eval(point)?,
            Node::Sub(a, b) => a.eval(point)? - b.eval(point)?,
            Node::Mul(a, b) => a.eval(point)? * b.eval(point)?,
            Node::Div(a, b) => {
                let den = b.eval(point)?;
                if den == 0.0 {
                    return Err(Error::Domain("division by zero".into()));
                }
                a.eval(point)? / den
            }
            Node::Pow(a, b) => {
                let base = a.eval(point)?;
                let e = b.eval(point)?;
                if base < 0.0 && e.fract() != 0.0 {
                    return Err(Error::Domain(format!(
                        "power of negative base {base:e} with non-integer exponent {e:e}"
                    )));
                }
                if base == 0.0 && e < 0.0 {
                    return Err(Error::Domain("zero raised to a negative power".into()));
                }
                base.powf(e)
            }
            Node::Neg(a) => -a.eval(point)?,
            Node::Sin(a) => a.eval(point)?.sin(),
            Node::Cos(a) => a.eval(point)?.cos(),
            Node::Exp(a) => a.eval(point)?.exp(),
            Node::Log(a) => {
                let x = a.eval(point)?;
                if x <= 0.0 {
                    return Err(Error::Domain(format!("log of non-positive value {x:e}")));
                }
                x.ln()
            }
            Node::Sqrt(a) => {
                let x = a.eval(point)?;
                if x < 0.0 {
                    return Err(Error::Domain(format!("sqrt of negative value {x:e}")));
                }
                x.sqrt()
            }
            Node::Abs(a) => a.eval(point)?.abs(),
        };
        if !v.is_finite() {
            return Err(Error::Domain(
                "expression overflowed to a non-finite value".into(),
            ));
        }
        Ok(v)
    }

    /// Exact partial derivative with respect to coordinate `i`.
    pub fn partial(&self, i: usize) -> Expression {
        match &*self.0 {
            Node::Const(_) => Self::zero(),
            Node::Coord(j) => {
                if *j == i {
                    Self::one()
                } else {
                    Self::zero()
                }
            }
            Node::Add(a, b) => a.partial(i).add(&b.partial(i)),
            Node::Sub(a, b) => a.partial(i).sub(&b.partial(i)),
            Node::Mul(a, b) => a.partial(i).mul(b).add(&a.mul(&b.partial(i))),
            Node::Div(a, b) => {
                // (a'b - ab') / b^2
                let num = a.partial(i).mul(b).sub(&a.mul(&b.partial(i)));
                num.div(&b.mul(b))
            }
            Node::Pow(a, b) => {
                if let Some(e) = b.as_const() {
                    // e * a^(e-1) * a'
                    Self::constant(e)
                        .mul(&a.pow(&Self::constant(e - 1.0)))
                        .mul(&a.partial(i))
                } else {
                    // a^b * (b' log a + b a'/a)
                    let t1 = b.partial(i).mul(&a.log());
                    let t2 = b.mul(&a.partial(i)).div(a);
                    self.mul(&t1.add(&t2))
                }
            }
            Node::Neg(a) => a.partial(i).neg(),
            Node::Sin(a) => a.cos().mul(&a.partial(i)),
            Node::Cos(a) => a.sin().neg().mul(&a.partial(i)),
            Node::Exp(a) => self.mul(&a.partial(i)),
            Node::Log(a) => a.partial(i).div(a),
            Node::Sqrt(a) => a.partial(i).div(&Self::constant(2.0).mul(&a.sqrt())),
            // d|u| = u/|u| du; not differentiable at u = 0 (division errors there)
            Node::Abs(a) => a.div(&a.abs()).mul(&a.partial(i)),
        }
    }

    /// Replaces coordinate `i` by an expression.
    pub fn substitute(&self, i: usize, value: &Expression) -> Expression {
        match &*self.0 {
            Node::Const(_) => self.clone(),
            Node::Coord(j) => {
                if *j == i {
                    value.clone()
                } else {
                    self.clone()
                }
            }
            Node::Add(a, b) => a.substitute(i, value).add(&b.substitute(i, value)),
            Node::Sub(a, b) => a.substitute(i, value).sub(&b.substitute(i, value)),
            Node::Mul(a, b) => a.substitute(i, value).mul(&b.substitute(i, value)),
            Node::Div(a, b) => a.substitute(i, value).div(&b.substitute(i, value)),
            Node::Pow(a, b) => a.substitute(i, value).pow(&b.substitute(i, value)),
            Node::Neg(a) => a.substitute(i, value).neg(),
            Node::Sin(a) => a.substitute(i, value).sin(),
            Node::Cos(a) => a.substitute(i, value).cos(),
            Node::Exp(a) => a.substitute(i, value).exp(),
            Node::Log(a) => a.substitute(i, value).log(),
            Node::Sqrt(a) => a.substitute(i, value).sqrt(),
            Node::Abs(a) => a.substitute(i, value).abs(),
        }
    }

    /// Renumbers coordinate indices through `map`.
    pub fn remap_coords(&self, map: &dyn Fn(usize) -> usize) -> Expression {
        match &*self.0 {
            Node::Const(_) => self.clone(),
            Node::Coord(j) => Self::coord(map(*j)),
            Node::Add(a, b) => a.remap_coords(map).add(&b.remap_coords(map)),
            Node::Sub(a, b) => a.remap_coords(map).sub(&b.remap_coords(map)),
            Node::Mul(a, b) => a.remap_coords(map).mul(&b.remap_coords(map)),
            Node::Div(a, b) => a.remap_coords(map).div(&b.remap_coords(map)),
            Node::Pow(a, b) => a.remap_coords(map).pow(&b.remap_coords(map)),
            Node::Neg(a) => a.remap_coords(map).neg(),
            Node::Sin(a) => a.remap_coords(map).sin(),
            Node::Cos(a) => a.remap_coords(map).cos(),
            Node::Exp(a) => a.remap_coords(map).exp(),
            Node::Log(a) => a.remap_coords(map).log(),
            Node::Sqrt(a) => a.remap_coords(map).sqrt(),
            Node::Abs(a) => a.remap_coords(map).abs(),
        }
    }

    /// Indices of coordinates appearing in the tree.
    pub fn free_coords(&self) -> BTreeSet<usize> {
        let mut set = BTreeSet::new();
        self.collect_coords(&mut set);
        set
    }

    fn collect_coords(&self, set: &mut BTreeSet<usize>) {
        match &*self.0 {
            Node::Const(_) => {}
            Node::Coord(j) => {
                set.insert(*j);
            }
            Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Pow(a, b) => {
                a.collect_coords(set);
                b.collect_coords(set);
            }
            Node::Neg(a)
            | Node::Sin(a)
            | Node::Cos(a)
            | Node::Exp(a)
            | Node::Log(a)
            | Node::Sqrt(a)
            | Node::Abs(a) => a.collect_coords(set),
        }
    }

    /// Structural equality (same tree shape, bit-equal constants).
    pub fn structural_eq(&self, other: &Expression) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        match (&*self.0, &*other.0) {
            (Node::Const(a), Node::Const(b)) => a.to_bits() == b.to_bits(),
            (Node::Coord(a), Node::Coord(b)) => a == b,
            (Node::Add(a, b), Node::Add(c, d))
            | (Node::Sub(a, b), Node::Sub(c, d))
            | (Node::Mul(a, b), Node::Mul(c, d))
            | (Node::Div(a, b), Node::Div(c, d))
            | (Node::Pow(a, b), Node::Pow(c, d)) => a.structural_eq(c) && b.structural_eq(d),
            (Node::Neg(a), Node::Neg(b))
            | (Node::Sin(a), Node::Sin(b))
            | (Node::Cos(a), Node::Cos(b))
            | (Node::Exp(a), Node::Exp(b))
            | (Node::Log(a), Node::Log(b))
            | (Node::Sqrt(a), Node::Sqrt(b))
            | (Node::Abs(a), Node::Abs(b)) => a.structural_eq(b),
            _ => false,
        }
    }

    /// Renders the tree with structure-preserving parentheses so that
    /// reparsing rebuilds an identical tree.
    pub fn to_text(&self, names: &[String]) -> String {
        let mut out = String::new();
        self.write_text(names, &mut out);
        out
    }

    fn write_text(&self, names: &[String], out: &mut String) {
        fn atom(e: &Expression) -> bool {
            matches!(*e.0, Node::Const(c) if c >= 0.0) || matches!(*e.0, Node::Coord(_))
        }
        fn func(e: &Expression) -> bool {
            matches!(
                *e.0,
                Node::Sin(_)
                    | Node::Cos(_)
                    | Node::Exp(_)
                    | Node::Log(_)
                    | Node::Sqrt(_)
                    | Node::Abs(_)
            )
        }
        let wrap = |e: &Expression, out: &mut String, cond: bool| {
            if cond {
                out.push('(');
                e.write_text(names, out);
                out.push(')');
            } else {
                e.write_text(names, out);
            }
        };
        match &*self.0 {
            Node::Const(c) => out.push_str(&format!("{c}")),
            Node::Coord(i) => out.push_str(names.get(*i).map(|s| s.as_str()).unwrap_or("?")),
            Node::Add(a, b) => {
                wrap(a, out, matches!(*a.0, Node::Neg(_)));
                out.push_str(" + ");
                wrap(
                    b,
                    out,
                    matches!(*b.0, Node::Add(..) | Node::Sub(..) | Node::Neg(_)),
                );
            }
            Node::Sub(a, b) => {
                wrap(a, out, matches!(*a.0, Node::Neg(_)));
                out.push_str(" - ");
                wrap(
                    b,
                    out,
                    matches!(*b.0, Node::Add(..) | Node::Sub(..) | Node::Neg(_)),
                );
            }
            Node::Mul(a, b) => {
                wrap(
                    a,
                    out,
                    matches!(*a.0, Node::Add(..) | Node::Sub(..) | Node::Neg(_)),
                );
                out.push('*');
                wrap(
                    b,
                    out,
                    matches!(
                        *b.0,
                        Node::Add(..)
                            | Node::Sub(..)
                            | Node::Mul(..)
                            | Node::Div(..)
                            | Node::Neg(_)
                    ),
                );
            }
            Node::Div(a, b) => {
                wrap(
                    a,
                    out,
                    matches!(*a.0, Node::Add(..) | Node::Sub(..) | Node::Neg(_)),
                );
                out.push('/');
                wrap(b, out, !(atom(b) || func(b)));
            }
            Node::Pow(a, b) => {
                wrap(a, out, !(atom(a) || func(a)));
                out.push('^');
                wrap(b, out, !(atom(b) || func(b)));
            }
            Node::Neg(a) => {
                out.push('-');
                wrap(a, out, !(atom(a) || func(a)));
            }
            Node::Sin(a) => write_call("sin", a, names, out),
            Node::Cos(a) => write_call("cos", a, names, out),
            Node::Exp(a) => write_call("exp", a, names, out),
            Node::Log(a) => write_call("log", a, names, out),
            Node::Sqrt(a) => write_call("sqrt", a, names, out),
            Node::Abs(a) => write_call("abs", a, names, out),
        }
    }
}

fn write_call(name: &str, arg: &Expression, names: &[String], out: &mut String) {
    out.push_str(name);
    out.push('(');
    arg.write_text(names, out);
    out.push(')');
}
