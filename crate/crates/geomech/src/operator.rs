//! Linear differential operators with real expression coefficients and the
//! complex scale `(-i*hbar)^r` kept as integer metadata per term.
//!
//! A term is keyed by `(alpha, r)` where `alpha` is the derivative
//! multi-index and `r` the power of `(-i*hbar)` in front of it. Operators
//! produced by the quantization rule tag every term coming from a degree-`r`
//! tensor with that same `r`, including its lower-order connection
//! corrections, so one derivative slot can legitimately carry terms with
//! different prefactor powers.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::multi_index::MultiIndex;

/// Real/imaginary pair of expressions, the result of applying an operator to
/// a real function.
#[derive(Clone, Debug)]
pub struct ComplexExpr {
    pub re: Expression,
    pub im: Expression,
}

/// Iterated partial derivative `d^alpha f` (coordinates in ascending order).
pub fn partial_alpha(f: &Expression, alpha: &MultiIndex) -> Expression {
    let mut out = f.clone();
    for (i, &e) in alpha.0.iter().enumerate() {
        for _ in 0..e {
            out = out.partial(i);
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct DiffOperator {
    dim: usize,
    hbar: f64,
    terms: BTreeMap<(MultiIndex, u32), Expression>,
}

impl DiffOperator {
    pub fn new(dim: usize, hbar: f64) -> Self {
        DiffOperator {
            dim,
            hbar,
            terms: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn terms(&self) -> &BTreeMap<(MultiIndex, u32), Expression> {
        &self.terms
    }

    /// Highest derivative order present.
    pub fn order(&self) -> u32 {
        self.terms.keys().map(|(a, _)| a.order()).max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Adds `(-i*hbar)^ih_power * coeff * d^alpha`. Structural zeros are
    /// dropped; coefficients landing on an existing slot are summed.
    pub fn add_term(&mut self, alpha: MultiIndex, ih_power: u32, coeff: Expression) {
        if coeff.is_zero() {
            return;
        }
        let key = (alpha, ih_power);
        match self.terms.remove(&key) {
            Some(old) => {
                let merged = old.add(&coeff);
                if !merged.is_zero() {
                    self.terms.insert(key, merged);
                }
            }
            None => {
                self.terms.insert(key, coeff);
            }
        }
    }

    pub fn subtract(&mut self, other: &DiffOperator) {
        for ((alpha, r), coeff) in &other.terms {
            self.add_term(alpha.clone(), *r, coeff.neg());
        }
    }

    /// Operator with every coefficient multiplied by a real constant.
    pub fn scaled(&self, factor: f64) -> DiffOperator {
        let mut out = DiffOperator::new(self.dim, self.hbar);
        let f = Expression::constant(factor);
        for ((alpha, r), coeff) in &self.terms {
            out.add_term(alpha.clone(), *r, coeff.mul(&f));
        }
        out
    }

    /// Applies the operator to a real function, splitting the result into
    /// real and imaginary parts: `(-i)^r` cycles `1, -i, -1, i`.
    pub fn apply(&self, f: &Expression) -> ComplexExpr {
        let mut re = Expression::zero();
        let mut im = Expression::zero();
        for ((alpha, r), coeff) in &self.terms {
            let d = partial_alpha(f, alpha);
            let term = coeff
                .mul(&d)
                .mul(&Expression::constant(self.hbar.powi(*r as i32)));
            match r % 4 {
                0 => re = re.add(&term),
                1 => im = im.sub(&term),
                2 => re = re.sub(&term),
                _ => im = im.add(&term),
            }
        }
        ComplexExpr { re, im }
    }

    /// Real part of the application; errors if any term would contribute an
    /// imaginary component (odd prefactor power with a structurally nonzero
    /// coefficient).
    pub fn apply_real(&self, f: &Expression) -> Result<Expression> {
        for ((_, r), _) in &self.terms {
            if r % 2 == 1 {
                return Err(Error::Precondition(
                    "operator has odd (-i*hbar) powers; application is not real".into(),
                ));
            }
        }
        Ok(self.apply(f).re)
    }

    fn alpha_text(alpha: &MultiIndex, names: &[String]) -> String {
        if alpha.is_zero() {
            return "1".to_string();
        }
        let mut parts = Vec::new();
        for (i, &e) in alpha.0.iter().enumerate() {
            if e > 0 {
                parts.push(format!("d[{}]^{}", names[i], e));
            }
        }
        parts.join(" ")
    }

    /// Golden-file text form: one term per line,
    /// `(-i*hbar)^r * (<coeff>) * d[x]^a d[y]^b`, ordered by derivative
    /// order, then multi-index, then prefactor power.
    pub fn pretty(&self, names: &[String]) -> String {
        let mut out = String::new();
        if self.terms.is_empty() {
            out.push_str("0\n");
            return out;
        }
        for ((alpha, r), coeff) in &self.terms {
            out.push_str(&format!(
                "(-i*hbar)^{} * ({}) * {}\n",
                r,
                coeff.to_text(names),
                Self::alpha_text(alpha, names)
            ));
        }
        out
    }

    /// Parses the `pretty` format back into an operator.
    pub fn parse_pretty(text: &str, names: &[String], hbar: f64) -> Result<DiffOperator> {
        let dim = names.len();
        let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let mut op = DiffOperator::new(dim, hbar);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line == "0" {
                continue;
            }
            let bad = |msg: &str| Error::Schema {
                path: format!("operator line {}", lineno + 1),
                msg: msg.to_string(),
            };
            let rest = line
                .strip_prefix("(-i*hbar)^")
                .ok_or_else(|| bad("missing `(-i*hbar)^` prefix"))?;
            let star = rest
                .find(" * (")
                .ok_or_else(|| bad("missing ` * (` after prefactor"))?;
            let r: u32 = rest[..star]
                .parse()
                .map_err(|_| bad("malformed prefactor power"))?;
            let coeff_start = star + 4;
            let bytes = rest.as_bytes();
            let mut depth = 1usize;
            let mut end = None;
            for (i, &b) in bytes.iter().enumerate().skip(coeff_start) {
                match b {
                    b'(' => depth += 1,
                    b')' => {
                        depth -= 1;
                        if depth == 0 {
                            end = Some(i);
                            break;
                        }
                    }
                    _ => {}
                }
            }
            let end = end.ok_or_else(|| bad("unbalanced parentheses in coefficient"))?;
            let coeff = crate::expr::parse(&rest[coeff_start..end], &name_refs)?;
            let alpha_text = rest[end + 1..]
                .strip_prefix(" * ")
                .ok_or_else(|| bad("missing ` * ` before derivative factors"))?
                .trim();
            let mut alpha = MultiIndex::zero(dim);
            if alpha_text != "1" {
                for token in alpha_text.split_whitespace() {
                    let inner = token
                        .strip_prefix("d[")
                        .and_then(|t| t.split_once("]^"))
                        .ok_or_else(|| bad(&format!("malformed derivative factor `{token}`")))?;
                    let (name, exp) = inner;
                    let i = names
                        .iter()
                        .position(|n| n == name)
                        .ok_or_else(|| bad(&format!("unknown coordinate `{name}`")))?;
                    let e: u32 = exp.parse().map_err(|_| bad("malformed exponent"))?;
                    alpha.0[i] += e;
                }
            }
            op.add_term(alpha, r, coeff);
        }
        Ok(op)
    }
}
