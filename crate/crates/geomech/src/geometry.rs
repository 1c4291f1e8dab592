//! Metric-derived objects: inverse metric, Christoffel symbols, gradients,
//! symmetrized covariant iterated differentials, Laplace-Beltrami operator
//! coefficients and the second fundamental form of a tangent field.
//!
//! Everything is built symbolically from the metric coefficient expressions;
//! correctness is checked numerically at sample points. A single chart is
//! assumed, metrics may be pseudo-Riemannian, and the dimension is capped at
//! four so inverses stay closed-form (adjugate over determinant).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::multi_index::MultiIndex;
use crate::operator::{partial_alpha, DiffOperator};

pub const MAX_DIM: usize = 4;

/// Index into packed symmetric storage (upper triangle, row-major).
fn sym_idx(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * n - i + 1) / 2 + (j - i)
}

/// Symmetric matrix of expressions `g_ij` over a named chart.
#[derive(Clone, Debug)]
pub struct MetricField {
    names: Vec<String>,
    comps: Vec<Expression>,
}

impl MetricField {
    /// Builds from a full matrix, which must be structurally symmetric:
    /// `rows[i][j]` and `rows[j][i]` must be the same expression tree.
    pub fn new(names: Vec<String>, rows: Vec<Vec<Expression>>) -> Result<Self> {
        let n = names.len();
        if n == 0 || n > MAX_DIM {
            return Err(Error::Dimension {
                dim: n,
                msg: format!("metric dimension must be 1..={MAX_DIM}"),
            });
        }
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension {
                dim: n,
                msg: "metric matrix is not square over the chart".into(),
            });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if !rows[i][j].structural_eq(&rows[j][i]) {
                    return Err(Error::Precondition(format!(
                        "metric entries ({i},{j}) and ({j},{i}) differ structurally"
                    )));
                }
            }
        }
        let mut comps = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                comps.push(rows[i][j].clone());
            }
        }
        Ok(MetricField { names, comps })
    }

    pub fn from_diag(names: Vec<String>, diag: Vec<Expression>) -> Result<Self> {
        let n = names.len();
        let mut rows = vec![vec![Expression::zero(); n]; n];
        for (i, d) in diag.into_iter().enumerate() {
            rows[i][i] = d;
        }
        Self::new(names, rows)
    }

    /// Euclidean metric on the given chart.
    pub fn flat(names: Vec<String>) -> Result<Self> {
        let n = names.len();
        Self::from_diag(names, vec![Expression::one(); n])
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn g(&self, i: usize, j: usize) -> &Expression {
        &self.comps[sym_idx(self.dim(), i, j)]
    }

    pub fn rows(&self) -> Vec<Vec<Expression>> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.g(i, j).clone()).collect())
            .collect()
    }

    pub fn eval_matrix(&self, point: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = self.g(i, j).eval(point)?;
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        Ok(m)
    }

    pub fn inner_product_at(&self, point: &[f64], a: &[f64], b: &[f64]) -> Result<f64> {
        let m = self.eval_matrix(point)?;
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += m[i][j] * a[i] * b[j];
            }
        }
        Ok(s)
    }

    /// Determinant expression by cofactor expansion.
    pub fn det_expr(&self) -> Expression {
        det(&self.rows())
    }

    /// Verifies `det(g) != 0` at every declared sample point.
    pub fn check_regular(&self, samples: &[Vec<f64>], eps: f64) -> Result<()> {
        let d = self.det_expr();
        for p in samples {
            let v = d.eval(p)?;
            if v.abs() <= eps {
                return Err(Error::SingularMetric {
                    point: p.clone(),
                    det: v,
                });
            }
        }
        Ok(())
    }

    /// Closed-form inverse (adjugate over determinant), `n <= 4`.
    pub fn inverse(&self) -> Result<Vec<Vec<Expression>>> {
        let n = self.dim();
        let rows = self.rows();
        let d = det(&rows);
        if let Some(c) = d.as_const() {
            if c == 0.0 {
                return Err(Error::SingularMetric {
                    point: vec![],
                    det: 0.0,
                });
            }
        }
        let mut inv = vec![vec![Expression::zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                // adjugate: cofactor (j, i)
                let minor = det(&submatrix(&rows, j, i));
                let cof = if (i + j) % 2 == 0 { minor } else { minor.neg() };
                inv[i][j] = cof.div(&d);
            }
        }
        Ok(inv)
    }

    /// Levi-Civita symbols of both kinds.
    pub fn christoffel(&self) -> Result<Christoffel> {
        let n = self.dim();
        let inv = self.inverse()?;
        let half = Expression::constant(0.5);
        let mut first = vec![vec![Expression::zero(); n]; n * (n + 1) / 2];
        for k in 0..n {
            for l in k..n {
                for i in 0..n {
                    // Gamma_{kl,i} = (d_k g_il + d_l g_ik - d_i g_kl) / 2
                    let t = self
                        .g(i, l)
                        .partial(k)
                        .add(&self.g(i, k).partial(l))
                        .sub(&self.g(k, l).partial(i));
                    first[sym_idx(n, k, l)][i] = half.mul(&t);
                }
            }
        }
        let mut second = vec![vec![Expression::zero(); n]; n * (n + 1) / 2];
        for kl in 0..n * (n + 1) / 2 {
            for j in 0..n {
                let mut s = Expression::zero();
                for i in 0..n {
                    s = s.add(&inv[j][i].mul(&first[kl][i]));
                }
                second[kl][j] = s;
            }
        }
        Ok(Christoffel {
            dim: n,
            first,
            second,
        })
    }

    /// Contravariant gradient components `(grad f)^i = g^{ij} d_j f`.
    pub fn gradient(&self, f: &Expression) -> Result<Vec<Expression>> {
        let n = self.dim();
        let inv = self.inverse()?;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut s = Expression::zero();
            for j in 0..n {
                s = s.add(&inv[i][j].mul(&f.partial(j)));
            }
            out.push(s);
        }
        Ok(out)
    }

    /// The symmetrized `r`-th covariant iterated differential as a linear
    /// differential operator acting on functions.
    pub fn covariant_diff_op(&self, r: u32) -> Result<SymCovDiffOp> {
        if r == 0 {
            return Err(Error::Precondition(
                "covariant differential order must be >= 1".into(),
            ));
        }
        let n = self.dim();
        let gamma = self.christoffel()?;
        // full-tuple form, built by iterated covariant differentiation
        let mut full: BTreeMap<Vec<usize>, BTreeMap<MultiIndex, Expression>> = BTreeMap::new();
        let mut seed = BTreeMap::new();
        seed.insert(MultiIndex::zero(n), Expression::one());
        full.insert(vec![], seed);
        for _ in 0..r {
            let mut next: BTreeMap<Vec<usize>, BTreeMap<MultiIndex, Expression>> = BTreeMap::new();
            for (tuple, comp) in &full {
                for k in 0..n {
                    // (∇T)_{k,J} = d_k T_J - sum_s Γ^l_{k J_s} T_{J[s -> l]}
                    let mut out: BTreeMap<MultiIndex, Expression> = BTreeMap::new();
                    for (beta, coeff) in comp {
                        insert_add(&mut out, beta.plus_unit(k), coeff.clone());
                        let dc = coeff.partial(k);
                        insert_add(&mut out, beta.clone(), dc);
                    }
                    for (s, &js) in tuple.iter().enumerate() {
                        for l in 0..n {
                            let g_kjs_l = gamma.second(l, k, js);
                            if g_kjs_l.is_zero() {
                                continue;
                            }
                            let mut swapped = tuple.clone();
                            swapped[s] = l;
                            for (beta, coeff) in &full[&swapped] {
                                insert_add(&mut out, beta.clone(), g_kjs_l.mul(coeff).neg());
                            }
                        }
                    }
                    let mut new_tuple = Vec::with_capacity(tuple.len() + 1);
                    new_tuple.push(k);
                    new_tuple.extend_from_slice(tuple);
                    next.insert(new_tuple, out);
                }
            }
            full = next;
        }
        // full symmetrization: average over all permutations of each tuple
        let mut comps = BTreeMap::new();
        for alpha in MultiIndex::enumerate(n, r) {
            let tuple = alpha.tuple();
            let perms = permutations(&tuple);
            let weight = Expression::constant(1.0 / perms.len() as f64);
            let mut acc: BTreeMap<MultiIndex, Expression> = BTreeMap::new();
            for p in &perms {
                for (beta, coeff) in &full[p] {
                    insert_add(&mut acc, beta.clone(), coeff.clone());
                }
            }
            let averaged: BTreeMap<MultiIndex, Expression> = acc
                .into_iter()
                .map(|(b, c)| (b, c.mul(&weight)))
                .filter(|(_, c)| !c.is_zero())
                .collect();
            comps.insert(alpha, averaged);
        }
        Ok(SymCovDiffOp {
            dim: n,
            order: r,
            comps,
        })
    }

    /// `∇^r_sym f` applied to a concrete function.
    pub fn covariant_diff_sym(&self, f: &Expression, r: u32) -> Result<CovariantTensor> {
        let op = self.covariant_diff_op(r)?;
        Ok(op.apply(f))
    }

    /// Laplace-Beltrami operator `Δ = g^{jk} (d_jk - Γ^l_{jk} d_l)` with no
    /// `(-i*hbar)` prefactor (classical form).
    pub fn laplacian(&self) -> Result<DiffOperator> {
        let n = self.dim();
        let inv = self.inverse()?;
        let gamma = self.christoffel()?;
        let mut op = DiffOperator::new(n, 1.0);
        for j in 0..n {
            for k in j..n {
                let factor = if j == k { 1.0 } else { 2.0 };
                let coeff = Expression::constant(factor).mul(&inv[j][k]);
                op.add_term(MultiIndex::unit(n, j).plus_unit(k), 0, coeff);
            }
        }
        for l in 0..n {
            let mut s = Expression::zero();
            for j in 0..n {
                for k in 0..n {
                    s = s.add(&inv[j][k].mul(gamma.second(l, j, k)));
                }
            }
            op.add_term(MultiIndex::unit(n, l), 0, s.neg());
        }
        Ok(op)
    }

    /// Second fundamental form of the tangent field `u`:
    /// `II_u(X, Y) = [T2(∇_X u, Y) + T2(∇_Y u, X)] / 2`, returned as the
    /// symmetric component matrix over coordinate directions.
    pub fn second_fundamental_form(&self, u: &[Expression]) -> Result<Vec<Vec<Expression>>> {
        let n = self.dim();
        if u.len() != n {
            return Err(Error::Dimension {
                dim: u.len(),
                msg: format!("field must have {n} components"),
            });
        }
        let gamma = self.christoffel()?;
        // (∇_j u)^i = d_j u^i + Γ^i_{jl} u^l
        let mut nabla = vec![vec![Expression::zero(); n]; n];
        for j in 0..n {
            for i in 0..n {
                let mut s = u[i].partial(j);
                for l in 0..n {
                    s = s.add(&gamma.second(i, j, l).mul(&u[l]));
                }
                nabla[j][i] = s;
            }
        }
        let half = Expression::constant(0.5);
        let mut out = vec![vec![Expression::zero(); n]; n];
        for j in 0..n {
            for k in j..n {
                let mut s = Expression::zero();
                for i in 0..n {
                    s = s.add(&self.g(i, k).mul(&nabla[j][i]));
                    s = s.add(&self.g(i, j).mul(&nabla[k][i]));
                }
                let v = half.mul(&s);
                out[j][k] = v.clone();
                out[k][j] = v;
            }
        }
        Ok(out)
    }
}

fn insert_add(map: &mut BTreeMap<MultiIndex, Expression>, key: MultiIndex, value: Expression) {
    if value.is_zero() {
        return;
    }
    match map.remove(&key) {
        Some(old) => {
            let merged = old.add(&value);
            if !merged.is_zero() {
                map.insert(key, merged);
            }
        }
        None => {
            map.insert(key, value);
        }
    }
}

fn permutations(tuple: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut work = tuple.to_vec();
    heap_perm(&mut work, tuple.len(), &mut out);
    out
}

fn heap_perm(work: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(work.clone());
        return;
    }
    for i in 0..k {
        heap_perm(work, k - 1, out);
        if k % 2 == 0 {
            work.swap(i, k - 1);
        } else {
            work.swap(0, k - 1);
        }
    }
}

fn submatrix(rows: &[Vec<Expression>], drop_row: usize, drop_col: usize) -> Vec<Vec<Expression>> {
    rows.iter()
        .enumerate()
        .filter(|(i, _)| *i != drop_row)
        .map(|(_, r)| {
            r.iter()
                .enumerate()
                .filter(|(j, _)| *j != drop_col)
                .map(|(_, e)| e.clone())
                .collect()
        })
        .collect()
}

fn det(rows: &[Vec<Expression>]) -> Expression {
    let n = rows.len();
    match n {
        0 => Expression::one(),
        1 => rows[0][0].clone(),
        2 => rows[0][0]
            .mul(&rows[1][1])
            .sub(&rows[0][1].mul(&rows[1][0])),
        _ => {
            let mut s = Expression::zero();
            for j in 0..n {
                if rows[0][j].is_zero() {
                    continue;
                }
                let minor = det(&submatrix(rows, 0, j));
                let term = rows[0][j].mul(&minor);
                s = if j % 2 == 0 {
                    s.add(&term)
                } else {
                    s.sub(&term)
                };
            }
            s
        }
    }
}

/// Christoffel symbols, symmetric in the lower pair by packed storage.
#[derive(Clone, Debug)]
pub struct Christoffel {
    dim: usize,
    first: Vec<Vec<Expression>>,
    second: Vec<Vec<Expression>>,
}

impl Christoffel {
    /// First kind `Γ_{kl,i}`.
    pub fn first(&self, k: usize, l: usize, i: usize) -> &Expression {
        &self.first[sym_idx(self.dim, k, l)][i]
    }

    /// Second kind `Γ^j_{kl}`.
    pub fn second(&self, j: usize, k: usize, l: usize) -> &Expression {
        &self.second[sym_idx(self.dim, k, l)][j]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Fully symmetric covariant tensor with packed components.
#[derive(Clone, Debug)]
pub struct CovariantTensor {
    pub order: u32,
    pub comps: BTreeMap<MultiIndex, Expression>,
}

impl CovariantTensor {
    pub fn get(&self, alpha: &MultiIndex) -> Expression {
        self.comps
            .get(alpha)
            .cloned()
            .unwrap_or_else(Expression::zero)
    }
}

/// Operator form of `∇^r_sym`: for each symmetric component slot, the map
/// from derivative multi-indices to coefficient expressions.
#[derive(Clone, Debug)]
pub struct SymCovDiffOp {
    pub dim: usize,
    pub order: u32,
    pub comps: BTreeMap<MultiIndex, BTreeMap<MultiIndex, Expression>>,
}

impl SymCovDiffOp {
    pub fn apply(&self, f: &Expression) -> CovariantTensor {
        let mut comps = BTreeMap::new();
        for (alpha, ops) in &self.comps {
            let mut s = Expression::zero();
            for (beta, coeff) in ops {
                s = s.add(&coeff.mul(&partial_alpha(f, beta)));
            }
            comps.insert(alpha.clone(), s);
        }
        CovariantTensor {
            order: self.order,
            comps,
        }
    }
}
