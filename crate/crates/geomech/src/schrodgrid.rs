//! 1-D grid realization of assembled Schrodinger operators: second-order
//! central stencils on a Dirichlet interval, Sturm-bisection eigensolve with
//! inverse iteration, Crank-Nicolson unitary evolution, and the cycle phase
//! report comparing classical and quantum clocks.
//!
//! Grid points span `[-L/2, L/2]`; the two endpoint values are pinned to
//! zero and excluded from the linear algebra, so the Dirichlet box width is
//! exactly `L`.

use num_complex::Complex64;

use crate::dynamics::{MechSystem, State};
use crate::error::{Error, Result};
use crate::hamjac;
use crate::operator::DiffOperator;

#[derive(Clone, Copy, Debug)]
pub struct Grid1D {
    n: usize,
    length: f64,
}

impl Grid1D {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 16 {
            return Err(Error::Precondition("grid needs at least 16 points".into()));
        }
        if length <= 0.0 {
            return Err(Error::Precondition("grid length must be positive".into()));
        }
        Ok(Grid1D { n, length })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        -0.5 * self.length + i as f64 * self.spacing()
    }

    /// Number of interior (unknown) nodes.
    pub fn interior(&self) -> usize {
        self.n - 2
    }
}

/// Complex tridiagonal matrix over the interior nodes.
#[derive(Clone, Debug)]
pub struct TridiagMat {
    pub n: usize,
    pub sub: Vec<Complex64>,
    pub diag: Vec<Complex64>,
    pub sup: Vec<Complex64>,
}

impl TridiagMat {
    fn zeros(n: usize) -> Self {
        TridiagMat {
            n,
            sub: vec![Complex64::new(0.0, 0.0); n - 1],
            diag: vec![Complex64::new(0.0, 0.0); n],
            sup: vec![Complex64::new(0.0, 0.0); n - 1],
        }
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut s = self.diag[i] * v[i];
            if i > 0 {
                s += self.sub[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                s += self.sup[i] * v[i + 1];
            }
            out[i] = s;
        }
        out
    }

    pub fn scale(&self) -> f64 {
        self.diag
            .iter()
            .chain(&self.sub)
            .chain(&self.sup)
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.diag
            .iter()
            .chain(&self.sub)
            .chain(&self.sup)
            .map(|z| z.im.abs())
            .fold(0.0, f64::max)
    }

    /// Largest deviation from symmetry (transpose comparison).
    pub fn max_asymmetry(&self) -> f64 {
        self.sub
            .iter()
            .zip(&self.sup)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Thomas elimination; the Crank-Nicolson matrices are diagonally
    /// dominant so no pivoting is needed here.
    pub fn solve(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.n;
        let mut c = vec![Complex64::new(0.0, 0.0); n];
        let mut d = vec![Complex64::new(0.0, 0.0); n];
        let mut denom = self.diag[0];
        if denom.norm() == 0.0 {
            return Err(Error::Eigensolve(
                "singular pivot in tridiagonal solve".into(),
            ));
        }
        c[0] = self.sup.first().copied().unwrap_or_default() / denom;
        d[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.sub[i - 1] * c[i - 1];
            if denom.norm() == 0.0 {
                return Err(Error::Eigensolve(
                    "singular pivot in tridiagonal solve".into(),
                ));
            }
            if i + 1 < n {
                c[i] = self.sup[i] / denom;
            }
            d[i] = (rhs[i] - self.sub[i - 1] * d[i - 1]) / denom;
        }
        let mut x = d;
        for i in (0..n - 1).rev() {
            let next = x[i + 1];
            x[i] -= c[i] * next;
        }
        Ok(x)
    }
}

/// Central-stencil discretization of a one-coordinate operator of order at
/// most two over the interior nodes of the grid.
pub fn discretize(op: &DiffOperator, grid: &Grid1D) -> Result<TridiagMat> {
    if op.dim() != 1 {
        return Err(Error::Dimension {
            dim: op.dim(),
            msg: "grid discretization is one-dimensional".into(),
        });
    }
    if op.order() > 2 {
        return Err(Error::Precondition(
            "grid discretization supports operators of order <= 2".into(),
        ));
    }
    let m = grid.interior();
    let h = grid.spacing();
    let mut mat = TridiagMat::zeros(m);
    for ((alpha, rho), coeff) in op.terms() {
        let mut z = Complex64::new(1.0, 0.0);
        for _ in 0..*rho {
            z *= Complex64::new(0.0, -op.hbar());
        }
        for i in 0..m {
            let x = grid.point(i + 1);
            let c = coeff.eval(&[x]).map_err(|e| {
                Error::Domain(format!(
                    "operator coefficient singular at grid point x = {x}: {e}"
                ))
            })?;
            let zc = z * c;
            match alpha.order() {
                0 => mat.diag[i] += zc,
                1 => {
                    let w = zc / (2.0 * h);
                    if i + 1 < m {
                        mat.sup[i] += w;
                    }
                    if i > 0 {
                        mat.sub[i - 1] -= w;
                    }
                }
                2 => {
                    let w = zc / (h * h);
                    mat.diag[i] -= 2.0 * w;
                    if i + 1 < m {
                        mat.sup[i] += w;
                    }
                    if i > 0 {
                        mat.sub[i - 1] += w;
                    }
                }
                _ => unreachable!("order capped above"),
            }
        }
    }
    Ok(mat)
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: f64,
    /// Eigenvector over the full grid (endpoint values zero), normalized in
    /// the discrete l2 sense with a positive peak.
    pub vector: Vec<f64>,
}

/// Lowest `k` eigenpairs of a real symmetric tridiagonal matrix by Sturm
/// bisection and inverse iteration.
pub fn eigensolve(mat: &TridiagMat, k: usize, grid: &Grid1D) -> Result<Vec<EigenPair>> {
    let n = mat.n;
    if k == 0 || k > n {
        return Err(Error::Precondition(format!(
            "eigenpair count {k} out of range"
        )));
    }
    let scale = mat.scale().max(1.0);
    if mat.max_imag() > 1e-12 * scale {
        return Err(Error::Precondition("eigensolve needs a real matrix".into()));
    }
    if mat.max_asymmetry() > 1e-12 * scale {
        return Err(Error::Precondition(
            "eigensolve needs a symmetric matrix".into(),
        ));
    }
    let d: Vec<f64> = mat.diag.iter().map(|z| z.re).collect();
    let e: Vec<f64> = mat.sub.iter().map(|z| z.re).collect();
    // Gershgorin bounds
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r =
            (if i > 0 { e[i - 1].abs() } else { 0.0 }) + (if i < n - 1 { e[i].abs() } else { 0.0 });
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    // LDL^T pivot signs; an exactly zero pivot is perturbed to a negative
    // one and counted, as in the standard Sturm-count guard
    let pivmin = 1e-30 * scale;
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut p = 1.0;
        for i in 0..n {
            p = if i == 0 {
                d[0] - x
            } else {
                d[i] - x - e[i - 1] * e[i - 1] / p
            };
            if p.abs() < pivmin {
                p = -pivmin;
            }
            if p < 0.0 {
                count += 1;
            }
        }
        count
    };
    let mut pairs = Vec::with_capacity(k);
    let mut found: Vec<Vec<f64>> = Vec::new();
    for j in 0..k {
        let mut a = lo;
        let mut b = hi;
        for _ in 0..120 {
            let mid = 0.5 * (a + b);
            if count_below(mid) <= j {
                a = mid;
            } else {
                b = mid;
            }
            if b - a <= 1e-14 * scale {
                break;
            }
        }
        let lambda = 0.5 * (a + b);
        let vec = inverse_iteration(&d, &e, lambda, &found)?;
        // residual check against the original matrix
        let vz: Vec<Complex64> = vec.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mv = mat.mul_vec(&vz);
        let mut res2 = 0.0;
        for i in 0..n {
            res2 += (mv[i].re - lambda * vec[i]).powi(2);
        }
        if res2.sqrt() > 1e-8 {
            return Err(Error::Eigensolve(format!(
                "inverse iteration residual {:.3e} too large for eigenvalue {lambda}",
                res2.sqrt()
            )));
        }
        found.push(vec.clone());
        // embed into the full grid with zero endpoints
        let mut full = vec![0.0; grid.len()];
        full[1..=n].copy_from_slice(&vec);
        pairs.push(EigenPair {
            value: lambda,
            vector: full,
        });
    }
    Ok(pairs)
}

/// Inverse iteration with partial-pivot tridiagonal elimination, with
/// deflation against previously found vectors.
fn inverse_iteration(d: &[f64], e: &[f64], lambda: f64, deflate: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = d.len();
    // deterministic pseudo-random start vector
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let t = (i as f64 + 1.0) * 0.754877666;
            (t - t.floor()) - 0.5
        })
        .collect();
    normalize(&mut v);
    let shift = lambda + 1e-12 * (1.0 + lambda.abs());
    for _ in 0..12 {
        let mut w = solve_shifted(d, e, shift, &v)?;
        for prev in deflate {
            let dot: f64 = w.iter().zip(prev).map(|(a, b)| a * b).sum();
            for i in 0..n {
                w[i] -= dot * prev[i];
            }
        }
        normalize(&mut w);
        // convergence: residual of the shifted system direction
        let mut delta = 0.0;
        for i in 0..n {
            delta += (w[i].abs() - v[i].abs()).abs();
        }
        v = w;
        if delta < 1e-13 * n as f64 {
            break;
        }
    }
    // deterministic sign: positive at the largest-magnitude component
    let mut peak = 0;
    for i in 0..n {
        if v[i].abs() > v[peak].abs() {
            peak = i;
        }
    }
    if v[peak] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
    Ok(v)
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Solves `(T - shift I) x = rhs` with partial pivoting (the matrix is
/// nearly singular by construction).
fn solve_shifted(d: &[f64], e: &[f64], shift: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = d.len();
    // working bands: a = subdiag, b = diag, c = superdiag, f = second super
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut r = rhs.to_vec();
    for i in 0..n {
        b[i] = d[i] - shift;
        if i > 0 {
            a[i] = e[i - 1];
        }
        if i + 1 < n {
            c[i] = e[i];
        }
    }
    // banded LU with partial pivoting; rows hold columns (i, i+1, i+2) in
    // (b, c, f), with a the subdiagonal yet to eliminate
    for i in 0..n - 1 {
        if a[i + 1].abs() > b[i].abs() {
            // swap rows i and i+1
            let row_below = (a[i + 1], b[i + 1], c[i + 1]);
            let row_here = (b[i], c[i], f[i]);
            b[i] = row_below.0;
            c[i] = row_below.1;
            f[i] = row_below.2;
            a[i + 1] = row_here.0;
            b[i + 1] = row_here.1;
            c[i + 1] = row_here.2;
            r.swap(i, i + 1);
        }
        let pivot = if b[i].abs() < 1e-300 { 1e-300 } else { b[i] };
        let m = a[i + 1] / pivot;
        b[i + 1] -= m * c[i];
        if i + 2 < n {
            c[i + 1] -= m * f[i];
        }
        r[i + 1] -= m * r[i];
        a[i + 1] = 0.0;
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = r[i];
        if i + 1 < n {
            s -= c[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= f[i] * x[i + 2];
        }
        let pivot = if b[i].abs() < 1e-300 { 1e-300 } else { b[i] };
        x[i] = s / pivot;
    }
    Ok(x)
}

/// Complex values on the grid, endpoints included.
#[derive(Clone, Debug)]
pub struct WaveFunction {
    pub grid: Grid1D,
    pub values: Vec<Complex64>,
}

impl WaveFunction {
    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> Complex64) -> Self {
        let mut values: Vec<Complex64> = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        values[0] = Complex64::new(0.0, 0.0);
        let last = values.len() - 1;
        values[last] = Complex64::new(0.0, 0.0);
        WaveFunction { grid, values }
    }

    pub fn from_eigenvector(grid: Grid1D, pair: &EigenPair) -> Self {
        WaveFunction {
            grid,
            values: pair
                .vector
                .iter()
                .map(|&x| Complex64::new(x, 0.0))
                .collect(),
        }
    }

    fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.grid.len();
        let h = self.grid.spacing();
        (0..n).map(move |i| if i == 0 || i + 1 == n { 0.5 * h } else { h })
    }

    /// Trapezoid norm, `sqrt(∫ |psi|^2)`.
    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .zip(self.weights())
            .map(|(z, w)| w * z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            for z in self.values.iter_mut() {
                *z /= n;
            }
        }
        self
    }

    pub fn overlap(&self, other: &WaveFunction) -> Complex64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(self.weights())
            .map(|((a, b), w)| w * a.conj() * b)
            .sum()
    }

    pub fn position_mean(&self) -> f64 {
        let norm2: f64 = self
            .values
            .iter()
            .zip(self.weights())
            .map(|(z, w)| w * z.norm_sqr())
            .sum();
        let mut mean = 0.0;
        for (i, (z, w)) in self.values.iter().zip(self.weights()).enumerate() {
            mean += w * z.norm_sqr() * self.grid.point(i);
        }
        mean / norm2
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EvolveRecord {
    pub step: usize,
    pub time: f64,
    pub norm: f64,
    pub overlap: Complex64,
    pub x_mean: f64,
}

/// Crank-Nicolson evolution `(1 + i dt H / 2 hbar) psi' = (1 - i dt H / 2 hbar) psi`,
/// one record per step (step 0 records the initial state).
pub fn evolve_cn(
    hmat: &TridiagMat,
    psi0: &WaveFunction,
    dt: f64,
    steps: usize,
    hbar: f64,
) -> Result<(WaveFunction, Vec<EvolveRecord>)> {
    if dt <= 0.0 {
        return Err(Error::Precondition("time step must be positive".into()));
    }
    let m = hmat.n;
    if psi0.grid.interior() != m {
        return Err(Error::Dimension {
            dim: psi0.grid.interior(),
            msg: format!("grid interior must match the matrix size {m}"),
        });
    }
    let kappa = Complex64::new(0.0, dt / (2.0 * hbar));
    let mut a = hmat.clone();
    let mut b = hmat.clone();
    for i in 0..m {
        a.diag[i] = Complex64::new(1.0, 0.0) + kappa * hmat.diag[i];
        b.diag[i] = Complex64::new(1.0, 0.0) - kappa * hmat.diag[i];
    }
    for i in 0..m - 1 {
        a.sub[i] = kappa * hmat.sub[i];
        a.sup[i] = kappa * hmat.sup[i];
        b.sub[i] = -kappa * hmat.sub[i];
        b.sup[i] = -kappa * hmat.sup[i];
    }
    let mut psi = psi0.clone();
    let mut records = Vec::with_capacity(steps + 1);
    records.push(EvolveRecord {
        step: 0,
        time: 0.0,
        norm: psi.norm(),
        overlap: psi0.overlap(&psi),
        x_mean: psi.position_mean(),
    });
    let mut interior: Vec<Complex64> = psi.values[1..=m].to_vec();
    for step in 1..=steps {
        let rhs = b.mul_vec(&interior);
        interior = a.solve(&rhs)?;
        psi.values[1..=m].copy_from_slice(&interior);
        records.push(EvolveRecord {
            step,
            time: step as f64 * dt,
            norm: psi.norm(),
            overlap: psi0.overlap(&psi),
            x_mean: psi.position_mean(),
        });
    }
    Ok((psi, records))
}

/// CSV export `step,time,norm,re_overlap,im_overlap,<x>` with `%.12e`
/// floats.
pub fn write_evolution_csv<W: std::io::Write>(records: &[EvolveRecord], mut w: W) -> Result<()> {
    w.write_all(b"step,time,norm,re_overlap,im_overlap,<x>\n")?;
    for r in records {
        w.write_all(
            format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                r.step, r.time, r.norm, r.overlap.re, r.overlap.im, r.x_mean
            )
            .as_bytes(),
        )?;
    }
    Ok(())
}

/// Classical cycle clocks against the quantum phase advance over one period.
#[derive(Clone, Copy, Debug)]
pub struct PhaseReport {
    pub energy: f64,
    pub t_classical: f64,
    pub tau_cycle: f64,
    /// `tau - 2t` over the cycle.
    pub t0_cycle: f64,
    /// `E T / hbar` reduced modulo `2 pi`.
    pub quantum_phase_mod_2pi: f64,
}

pub fn phase_report(
    sys: &MechSystem,
    hbar: f64,
    energy: f64,
    s0: &State,
    max_span: f64,
) -> Result<PhaseReport> {
    let cycle = hamjac::cycle_action(sys, energy, s0, max_span)?;
    let tau = cycle
        .tau
        .ok_or_else(|| Error::Precondition("wave time undefined at zero energy".into()))?;
    let phase = (energy * cycle.period / hbar).rem_euclid(2.0 * std::f64::consts::PI);
    Ok(PhaseReport {
        energy,
        t_classical: cycle.period,
        tau_cycle: tau,
        t0_cycle: tau - 2.0 * cycle.period,
        quantum_phase_mod_2pi: phase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Expression};
    use crate::geometry::MetricField;
    use crate::multi_index::MultiIndex;
    use crate::quantize::schrodinger_operator;

    fn oscillator() -> MechSystem {
        let metric = MetricField::flat(vec!["x".into()]).unwrap();
        MechSystem::conservative(metric, parse("x^2/2", &["x"]).unwrap())
    }

    fn free_particle() -> MechSystem {
        MechSystem::geodesic(MetricField::flat(vec!["x".into()]).unwrap())
    }

    #[test]
    fn kinetic_stencil_matches_hand_values() {
        let grid = Grid1D::new(64, 8.0).unwrap();
        let h = grid.spacing();
        let op = schrodinger_operator(&free_particle(), 1.0).unwrap();
        let mat = discretize(&op, &grid).unwrap();
        assert!((mat.sup[3].re + 1.0 / (2.0 * h * h)).abs() < 1e-12);
        assert!((mat.diag[5].re - 1.0 / (h * h)).abs() < 1e-12);
        assert!(mat.max_imag() == 0.0);
    }

    #[test]
    fn potential_adds_to_the_diagonal() {
        let grid = Grid1D::new(64, 8.0).unwrap();
        let h = grid.spacing();
        let op = schrodinger_operator(&oscillator(), 1.0).unwrap();
        let mat = discretize(&op, &grid).unwrap();
        let x3 = grid.point(4);
        assert!((mat.diag[3].re - (1.0 / (h * h) + 0.5 * x3 * x3)).abs() < 1e-12);
    }

    #[test]
    fn real_operators_discretize_symmetrically() {
        let grid = Grid1D::new(128, 12.0).unwrap();
        let op = schrodinger_operator(&oscillator(), 1.0).unwrap();
        let mat = discretize(&op, &grid).unwrap();
        assert!(mat.max_asymmetry() <= 1e-14 * mat.scale());
    }

    #[test]
    fn singular_coefficient_is_reported() {
        let mut op = DiffOperator::new(1, 1.0);
        op.add_term(MultiIndex(vec![0]), 0, parse("1/x", &["x"]).unwrap());
        let grid = Grid1D::new(17, 2.0).unwrap();
        // x = 0 is a grid point for odd n
        assert!(matches!(discretize(&op, &grid), Err(Error::Domain(_))));
    }

    #[test]
    fn oscillator_spectrum() {
        let grid = Grid1D::new(1024, 20.0).unwrap();
        let op = schrodinger_operator(&oscillator(), 1.0).unwrap();
        let mat = discretize(&op, &grid).unwrap();
        let pairs = eigensolve(&mat, 2, &grid).unwrap();
        assert!(
            (pairs[0].value - 0.5).abs() / 0.5 <= 1e-3,
            "E0 = {}",
            pairs[0].value
        );
        assert!(
            (pairs[1].value - 1.5).abs() / 1.5 <= 1e-3,
            "E1 = {}",
            pairs[1].value
        );
    }

    #[test]
    fn eigenvalue_error_shrinks_second_order() {
        let op = schrodinger_operator(&oscillator(), 1.0).unwrap();
        let coarse = Grid1D::new(512, 20.0).unwrap();
        let fine = Grid1D::new(1024, 20.0).unwrap();
        let e_coarse = eigensolve(&discretize(&op, &coarse).unwrap(), 1, &coarse).unwrap()[0].value;
        let e_fine = eigensolve(&discretize(&op, &fine).unwrap(), 1, &fine).unwrap()[0].value;
        let ratio = (e_coarse - 0.5).abs() / (e_fine - 0.5).abs();
        assert!((3.0..5.5).contains(&ratio), "convergence ratio {ratio}");
    }

    #[test]
    fn particle_in_a_box_ground_state() {
        let l = 10.0;
        let grid = Grid1D::new(512, l).unwrap();
        let op = schrodinger_operator(&free_particle(), 1.0).unwrap();
        let mat = discretize(&op, &grid).unwrap();
        let pairs = eigensolve(&mat, 1, &grid).unwrap();
        let expect = std::f64::consts::PI.powi(2) / (2.0 * l * l);
        assert!(
            (pairs[0].value - expect).abs() / expect <= 1e-2,
            "E0 = {}",
            pairs[0].value
        );
    }

    #[test]
    fn crank_nicolson_preserves_the_norm() {
        let grid = Grid1D::new(256, 20.0).unwrap();
        let op = schrodinger_operator(&oscillator(), 1.0).unwrap();
        let mat = discretize(&op, &grid).unwrap();
        let psi0 = WaveFunction::from_fn(grid, |x| {
            Complex64::new((-0.5 * (x - 1.0) * (x - 1.0)).exp(), 0.0)
        })
        .normalized();
        let (_, records) = evolve_cn(&mat, &psi0, 1e-3, 10_000, 1.0).unwrap();
        for r in &records {
            assert!((r.norm - 1.0).abs() <= 1e-10, "norm drift {}", r.norm - 1.0);
        }
    }

    #[test]
    fn eigenstate_accumulates_the_expected_phase() {
        let grid = Grid1D::new(512, 20.0).unwrap();
        let op = schrodinger_operator(&oscillator(), 1.0).unwrap();
        let mat = discretize(&op, &grid).unwrap();
        let pair = &eigensolve(&mat, 1, &grid).unwrap()[0];
        let e0 = pair.value;
        let psi0 = WaveFunction::from_eigenvector(grid, pair).normalized();
        // ten periods of the phase e^{-i E0 t}
        let t_total = 10.0 * 2.0 * std::f64::consts::PI / e0;
        let steps = 20_000;
        let dt = t_total / steps as f64;
        let (_, records) = evolve_cn(&mat, &psi0, dt, steps, 1.0).unwrap();
        let last = records.last().unwrap();
        let phase = last.overlap.arg();
        let expect = (-e0 * t_total).rem_euclid(2.0 * std::f64::consts::PI);
        let mut diff = (phase.rem_euclid(2.0 * std::f64::consts::PI) - expect).abs();
        diff = diff.min(2.0 * std::f64::consts::PI - diff);
        assert!(diff <= 1e-3, "phase error {diff}");
    }

    #[test]
    fn coherent_state_center_tracks_the_classical_orbit() {
        use crate::dynamics::{integrate, IntegrateOptions};
        let grid = Grid1D::new(1024, 20.0).unwrap();
        let op = schrodinger_operator(&oscillator(), 1.0).unwrap();
        let mat = discretize(&op, &grid).unwrap();
        let x0 = 2.0;
        let psi0 = WaveFunction::from_fn(grid, |x| {
            Complex64::new((-0.5 * (x - x0) * (x - x0)).exp(), 0.0)
        })
        .normalized();
        let period = 2.0 * std::f64::consts::PI;
        let steps = 4000;
        let dt = period / steps as f64;
        let (_, records) = evolve_cn(&mat, &psi0, dt, steps, 1.0).unwrap();
        // classical oracle from the dynamics integrator
        let sys = oscillator();
        let field = sys.newton_field().unwrap();
        let opts = IntegrateOptions {
            track_time_length: false,
            ..IntegrateOptions::fixed(period, dt)
        };
        let classical = integrate(&sys, &field, &State::new(vec![x0], vec![0.0]), &opts).unwrap();
        assert_eq!(classical.len(), records.len());
        let mut max_err: f64 = 0.0;
        for (r, c) in records.iter().zip(&classical.samples) {
            max_err = max_err.max((r.x_mean - c.state.x[0]).abs());
        }
        assert!(max_err <= 1e-2, "center deviation {max_err}");
    }

    #[test]
    fn evolution_csv_header() {
        let records = vec![EvolveRecord {
            step: 0,
            time: 0.0,
            norm: 1.0,
            overlap: Complex64::new(1.0, 0.0),
            x_mean: 0.0,
        }];
        let mut buf = Vec::new();
        write_evolution_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,time,norm,re_overlap,im_overlap,<x>\n"));
    }

    #[test]
    fn phase_report_for_the_oscillator() {
        let sys = oscillator();
        let e = 0.5;
        let s0 = State::new(vec![0.0], vec![1.0]);
        let report = phase_report(&sys, 1.0, e, &s0, 20.0).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        assert!((report.t_classical - two_pi).abs() <= 1e-8);
        assert!((report.tau_cycle - two_pi).abs() <= 1e-6);
        assert!((report.t0_cycle + two_pi).abs() <= 1e-6);
        // E T / hbar = pi for the ground level
        assert!((report.quantum_phase_mod_2pi - std::f64::consts::PI).abs() <= 1e-8);
    }

    #[test]
    fn unbound_kepler_has_no_report() {
        let metric = MetricField::flat(vec!["x".into(), "y".into()]).unwrap();
        let sys =
            MechSystem::conservative(metric, parse("-1/sqrt(x^2 + y^2)", &["x", "y"]).unwrap());
        let e = -0.01; // period ~ 2 pi (−2E)^{-3/2} far beyond the span
        let r0 = 1.0;
        let v0 = (2.0_f64 * (e + 1.0)).sqrt();
        let s0 = State::new(vec![r0, 0.0], vec![0.0, v0]);
        assert!(phase_report(&sys, 1.0, e, &s0, 30.0).is_err());
    }

    #[test]
    fn expanding_barrier_rejects_bad_grids() {
        assert!(Grid1D::new(8, 10.0).is_err());
        assert!(Grid1D::new(32, -1.0).is_err());
    }
}
