//! Quantization of symmetric contravariant tensor fields into differential
//! operators through the Levi-Civita connection, and its inverse.
//!
//! The rule sends a homogeneous degree-`r` tensor `Phi` to the operator
//! `f -> (-i*hbar)^r <Phi, ∇^r_sym f>`; inhomogeneous tensors map degree by
//! degree. Dequantization peels the tensor off an operator order by order
//! from its leading symbols. The correspondence then continues to phase
//! functions (polynomials in momenta) by substituting momentum monomials for
//! tensor slots.

use std::collections::BTreeMap;

use crate::dynamics::{hertz_reduce, MechSystem};
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::geometry::MetricField;
use crate::multi_index::MultiIndex;
use crate::operator::DiffOperator;

/// Tensor degrees above this are rejected; keeps the symmetric-index
/// bookkeeping bounded while still exercising the nontrivial cubic case.
pub const ORDER_CAP: u32 = 3;

/// Inhomogeneous symmetric contravariant tensor field with per-degree
/// component maps over symmetric multi-indices.
#[derive(Clone, Debug, Default)]
pub struct SymTensorField {
    dim: usize,
    parts: BTreeMap<u32, BTreeMap<MultiIndex, Expression>>,
}

impl SymTensorField {
    pub fn new(dim: usize) -> Self {
        SymTensorField {
            dim,
            parts: BTreeMap::new(),
        }
    }

    pub fn scalar(dim: usize, value: Expression) -> Self {
        let mut t = Self::new(dim);
        t.set(MultiIndex::zero(dim), value);
        t
    }

    /// The contravariant form of the metric, `g^{rs} d_r ⊗ d_s`.
    pub fn metric_contravariant(g: &MetricField) -> Result<Self> {
        let n = g.dim();
        let inv = g.inverse()?;
        let mut t = Self::new(n);
        for j in 0..n {
            for k in j..n {
                t.set(MultiIndex::unit(n, j).plus_unit(k), inv[j][k].clone());
            }
        }
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sets the component for a symmetric slot; the degree is the order of
    /// the multi-index. Structural zeros clear the slot.
    pub fn set(&mut self, alpha: MultiIndex, value: Expression) {
        let r = alpha.order();
        let part = self.parts.entry(r).or_default();
        if value.is_zero() {
            part.remove(&alpha);
        } else {
            part.insert(alpha, value);
        }
        if self.parts.get(&r).is_some_and(|p| p.is_empty()) {
            self.parts.remove(&r);
        }
    }

    pub fn get(&self, alpha: &MultiIndex) -> Expression {
        self.parts
            .get(&alpha.order())
            .and_then(|p| p.get(alpha))
            .cloned()
            .unwrap_or_else(Expression::zero)
    }

    pub fn part(&self, r: u32) -> Option<&BTreeMap<MultiIndex, Expression>> {
        self.parts.get(&r)
    }

    pub fn degrees(&self) -> impl Iterator<Item = u32> + '_ {
        self.parts.keys().copied()
    }

    pub fn max_degree(&self) -> u32 {
        self.parts.keys().max().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// One line per component: `deg r | x^a y^b | (coeff)`.
    pub fn pretty(&self, names: &[String]) -> String {
        let mut out = String::new();
        if self.parts.is_empty() {
            out.push_str("0\n");
            return out;
        }
        for (r, part) in &self.parts {
            for (alpha, coeff) in part {
                let slot = if alpha.is_zero() {
                    "1".to_string()
                } else {
                    alpha
                        .0
                        .iter()
                        .enumerate()
                        .filter(|(_, &e)| e > 0)
                        .map(|(i, &e)| format!("{}^{}", names[i], e))
                        .collect::<Vec<_>>()
                        .join(" ")
                };
                out.push_str(&format!("deg {r} | {slot} | ({})\n", coeff.to_text(names)));
            }
        }
        out
    }
}

/// Polynomial in the momentum symbols with expression coefficients on the
/// configuration space.
#[derive(Clone, Debug)]
pub struct PhaseFunction {
    dim: usize,
    terms: BTreeMap<MultiIndex, Expression>,
}

impl PhaseFunction {
    pub fn from_tensor(t: &SymTensorField) -> Self {
        let mut terms: BTreeMap<MultiIndex, Expression> = BTreeMap::new();
        for r in t.degrees().collect::<Vec<_>>() {
            for (alpha, coeff) in t.part(r).unwrap() {
                let scaled = coeff.mul(&Expression::constant(alpha.multinomial()));
                match terms.remove(alpha) {
                    Some(old) => {
                        terms.insert(alpha.clone(), old.add(&scaled));
                    }
                    None => {
                        terms.insert(alpha.clone(), scaled);
                    }
                }
            }
        }
        PhaseFunction {
            dim: t.dim(),
            terms,
        }
    }

    pub fn terms(&self) -> &BTreeMap<MultiIndex, Expression> {
        &self.terms
    }

    pub fn eval(&self, x: &[f64], p: &[f64]) -> Result<f64> {
        if p.len() != self.dim {
            return Err(Error::BindingLength {
                expected: self.dim,
                got: p.len(),
            });
        }
        let mut value = 0.0;
        for (alpha, coeff) in &self.terms {
            let mut mono = 1.0;
            for (i, &e) in alpha.0.iter().enumerate() {
                mono *= p[i].powi(e as i32);
            }
            value += coeff.eval(x)? * mono;
        }
        Ok(value)
    }
}

/// Quantized operator of an inhomogeneous symmetric contravariant tensor.
pub fn quantize(phi: &SymTensorField, g: &MetricField, hbar: f64) -> Result<DiffOperator> {
    let n = g.dim();
    if phi.dim() != n {
        return Err(Error::Dimension {
            dim: phi.dim(),
            msg: format!("tensor dimension must be {n}"),
        });
    }
    if phi.max_degree() > ORDER_CAP {
        return Err(Error::OrderCap {
            order: phi.max_degree() as usize,
            cap: ORDER_CAP as usize,
        });
    }
    let mut op = DiffOperator::new(n, hbar);
    for r in phi.degrees().collect::<Vec<_>>() {
        let part = phi.part(r).unwrap();
        if r == 0 {
            for (alpha, coeff) in part {
                op.add_term(alpha.clone(), 0, coeff.clone());
            }
            continue;
        }
        let cov = g.covariant_diff_op(r)?;
        for (slot, coeff) in part {
            let weight = coeff.mul(&Expression::constant(slot.multinomial()));
            let ops = cov
                .comps
                .get(slot)
                .ok_or_else(|| Error::Precondition(format!("missing covariant slot {slot:?}")))?;
            for (beta, c) in ops {
                op.add_term(beta.clone(), r, weight.mul(c));
            }
        }
    }
    Ok(op)
}

/// Degree-`r` symbol of an operator, returned as the real tensor with the
/// `(-i*hbar)^r` factor removed: `sigma^r(quantize(Phi_r)) = Phi_r`.
///
/// Terms whose prefactor power differs from `r` by an even amount are folded
/// in with the exact real rescaling; odd-parity terms have no real tensor
/// representative and are ignored (operators in the image of `quantize`
/// carry none at leading order).
pub fn symbol(p: &DiffOperator, r: u32) -> Result<SymTensorField> {
    if r > ORDER_CAP {
        return Err(Error::OrderCap {
            order: r as usize,
            cap: ORDER_CAP as usize,
        });
    }
    let mut t = SymTensorField::new(p.dim());
    let mut comps: BTreeMap<MultiIndex, Expression> = BTreeMap::new();
    for ((alpha, rho), coeff) in p.terms() {
        if alpha.order() != r {
            continue;
        }
        let d = *rho as i32 - r as i32;
        if d % 2 != 0 {
            continue;
        }
        let factor = (-1.0f64).powi(d / 2) * p.hbar().powi(d);
        let scaled = coeff.mul(&Expression::constant(factor / alpha.multinomial()));
        match comps.remove(alpha) {
            Some(old) => {
                comps.insert(alpha.clone(), old.add(&scaled));
            }
            None => {
                comps.insert(alpha.clone(), scaled);
            }
        }
    }
    for (alpha, c) in comps {
        t.set(alpha, c);
    }
    Ok(t)
}

/// Recovers the inhomogeneous tensor of an operator by peeling leading
/// symbols: `Phi_r` from the top order, then `Phi_{r-k}` from the symbol of
/// `P - quantize(Phi_r) - ... - quantize(Phi_{r-k+1})`.
pub fn dequantize(p: &DiffOperator, g: &MetricField, hbar: f64) -> Result<SymTensorField> {
    let top = p.order();
    if top > ORDER_CAP {
        return Err(Error::OrderCap {
            order: top as usize,
            cap: ORDER_CAP as usize,
        });
    }
    if hbar != p.hbar() {
        return Err(Error::Precondition(format!(
            "hbar mismatch: operator carries {}, dequantization asked for {hbar}",
            p.hbar()
        )));
    }
    let mut work = p.clone();
    let mut result = SymTensorField::new(p.dim());
    for k in (0..=top).rev() {
        let phi_k = symbol(&work, k)?;
        if phi_k.is_empty() {
            continue;
        }
        work.subtract(&quantize(&phi_k, g, hbar)?);
        if let Some(part) = phi_k.part(k) {
            for (alpha, coeff) in part {
                result.set(alpha.clone(), coeff.clone());
            }
        }
    }
    Ok(result)
}

/// The phase-space Hamiltonian of an operator: substitute momentum monomials
/// for the slots of its dequantized tensor.
pub fn hamiltonian_of(p: &DiffOperator, g: &MetricField, hbar: f64) -> Result<PhaseFunction> {
    Ok(PhaseFunction::from_tensor(&dequantize(p, g, hbar)?))
}

/// `-(hbar^2/2) Δ + U` for a conservative system.
pub fn schrodinger_operator(sys: &MechSystem, hbar: f64) -> Result<DiffOperator> {
    if !sys.is_conservative() {
        return Err(Error::Precondition(
            "Schrodinger assembly requires a conservative system".into(),
        ));
    }
    let lap = sys.metric().laplacian()?;
    let mut op = DiffOperator::new(sys.dim(), hbar);
    let half = Expression::constant(0.5);
    for ((alpha, _), coeff) in lap.terms() {
        op.add_term(alpha.clone(), 2, half.mul(coeff));
    }
    if let Some(u) = sys.potential() {
        op.add_term(MultiIndex::zero(sys.dim()), 0, u.clone());
    }
    Ok(op)
}

/// The scalar correction of the time-constrained wave equation,
/// `kappa = -[Δt + grad(log sqrt|g00|)(t)] / 2`, on a metric adapted to the
/// distinguished coordinate. Also verifies the contraction identity
/// `g^{mu nu} Γ^0_{mu nu} = -Δt - grad(t)(log sqrt|g00|)` at the sample
/// points.
pub fn kappa(g: &MetricField, t_index: usize, samples: &[Vec<f64>]) -> Result<Expression> {
    let n = g.dim();
    if t_index >= n {
        return Err(Error::Precondition(format!(
            "time index {t_index} outside the chart"
        )));
    }
    for mu in 0..n {
        if mu != t_index && !g.g(t_index, mu).is_zero() {
            return Err(Error::NotAdapted(format!(
                "metric entry ({t_index},{mu}) must vanish exactly"
            )));
        }
    }
    let t_expr = Expression::coord(t_index);
    let lap_t = g.laplacian()?.apply_real(&t_expr)?;
    let inv = g.inverse()?;
    let w = g.g(t_index, t_index).abs().sqrt().log();
    let mut grad_t_w = Expression::zero();
    for j in 0..n {
        grad_t_w = grad_t_w.add(&inv[t_index][j].mul(&w.partial(j)));
    }
    // independent route: spatial contraction of the time Christoffel symbols
    let gamma = g.christoffel()?;
    let mut lhs = Expression::zero();
    for mu in 0..n {
        if mu == t_index {
            continue;
        }
        for nu in 0..n {
            if nu == t_index {
                continue;
            }
            lhs = lhs.add(&inv[mu][nu].mul(gamma.second(t_index, mu, nu)));
        }
    }
    let rhs = lap_t.add(&grad_t_w).neg();
    for p in samples {
        let l = lhs.eval(p)?;
        let r = rhs.eval(p)?;
        if (l - r).abs() > 1e-10 * (1.0 + l.abs()) {
            return Err(Error::Precondition(format!(
                "Christoffel contraction identity violated at {p:?}: {l} vs {r}"
            )));
        }
    }
    Ok(Expression::constant(-0.5).mul(&lap_t.add(&grad_t_w)))
}

/// Separation of variables for the wave equations of an extended geodesic
/// system restricted to `p0 = P0`: the wave function factors through
/// `exp(i P0 x^0 / hbar)` and a stationary state of the reduced operator.
#[derive(Debug)]
pub struct HertzSeparation {
    /// Coefficient `P0/hbar` of `i x^0` in the phase factor exponent.
    pub phase_coefficient: f64,
    pub reduced: MechSystem,
    pub reduced_op: DiffOperator,
    pub p0: f64,
    pub energy: f64,
    pub c: f64,
    /// Whether `P0 = -E/c`, the condition for the reduced pair to satisfy
    /// the time-dependent wave equation in `x^0/c`.
    pub p0_matches_energy: bool,
}

pub fn hertz_separation(
    ext: &MechSystem,
    time_index: usize,
    p0: f64,
    energy: f64,
    hbar: f64,
    c: f64,
    samples: &[Vec<f64>],
) -> Result<HertzSeparation> {
    let reduced = hertz_reduce(ext, time_index, p0, samples)?;
    let reduced_op = schrodinger_operator(&reduced, hbar)?;
    let target = -energy / c;
    let p0_matches_energy = (p0 - target).abs() <= 1e-12 * (1.0 + target.abs());
    Ok(HertzSeparation {
        phase_coefficient: p0 / hbar,
        reduced,
        reduced_op,
        p0,
        energy,
        c,
        p0_matches_energy,
    })
}
