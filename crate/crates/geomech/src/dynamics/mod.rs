//! Evolution fields of mechanical systems and their trajectories.
//!
//! A [`MechSystem`] is a metric plus a force law (none, a potential, or a
//! general horizontal force covector on the state space). From it we build
//! second-order fields: the Newton field, the geodesic field (force-free
//! case), time-constrained fields and Hertz reductions. Trajectories carry
//! the action / duration / length accumulators along the flow.

mod integrate;

pub use integrate::{integrate, resume, IntegrateOptions};

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::geometry::{Christoffel, MetricField};

pub const DEFAULT_EPS_REG: f64 = 1e-12;

/// Point of the position-velocity state space.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl State {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Self {
        assert_eq!(x.len(), v.len(), "position and velocity dimensions differ");
        State { x, v }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Flat buffer `[x..., v...]` for expressions over the extended chart.
    pub fn tm_point(&self) -> Vec<f64> {
        let mut p = self.x.clone();
        p.extend_from_slice(&self.v);
        p
    }
}

#[derive(Clone, Debug)]
enum ForceLaw {
    Free,
    /// Potential on the configuration space; the force form is its exact
    /// differential.
    Potential(Expression),
    /// Horizontal force covector; components may depend on positions and
    /// velocities (extended-chart expressions).
    Covector(Vec<Expression>),
}

#[derive(Clone, Debug)]
pub struct MechSystem {
    metric: MetricField,
    force: ForceLaw,
    pub eps_reg: f64,
}

impl MechSystem {
    pub fn geodesic(metric: MetricField) -> Self {
        MechSystem {
            metric,
            force: ForceLaw::Free,
            eps_reg: DEFAULT_EPS_REG,
        }
    }

    pub fn conservative(metric: MetricField, potential: Expression) -> Self {
        MechSystem {
            metric,
            force: ForceLaw::Potential(potential),
            eps_reg: DEFAULT_EPS_REG,
        }
    }

    pub fn forced(metric: MetricField, alpha: Vec<Expression>) -> Result<Self> {
        if alpha.len() != metric.dim() {
            return Err(Error::Dimension {
                dim: alpha.len(),
                msg: format!("force covector must have {} components", metric.dim()),
            });
        }
        Ok(MechSystem {
            metric,
            force: ForceLaw::Covector(alpha),
            eps_reg: DEFAULT_EPS_REG,
        })
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn names(&self) -> &[String] {
        self.metric.names()
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    /// Chart names for the state space: coordinates then `<name>dot`.
    pub fn tm_names(&self) -> Vec<String> {
        let mut out = self.names().to_vec();
        out.extend(self.names().iter().map(|n| format!("{n}dot")));
        out
    }

    pub fn potential(&self) -> Option<&Expression> {
        match &self.force {
            ForceLaw::Potential(u) => Some(u),
            _ => None,
        }
    }

    pub fn is_conservative(&self) -> bool {
        matches!(self.force, ForceLaw::Potential(_) | ForceLaw::Free)
    }

    /// Force covector components over the extended chart. For a potential
    /// this is the exact differential, generated on demand.
    pub fn alpha(&self) -> Vec<Expression> {
        match &self.force {
            ForceLaw::Free => vec![Expression::zero(); self.dim()],
            ForceLaw::Potential(u) => (0..self.dim()).map(|i| u.partial(i)).collect(),
            ForceLaw::Covector(a) => a.clone(),
        }
    }

    pub fn kinetic_energy(&self, state: &State) -> Result<f64> {
        Ok(0.5 * self.metric.inner_product_at(&state.x, &state.v, &state.v)?)
    }

    /// `2T`, the pairing of the Liouville form with the state's own velocity.
    pub fn theta_dot(&self, state: &State) -> Result<f64> {
        self.metric.inner_product_at(&state.x, &state.v, &state.v)
    }

    /// Hamiltonian `T + U`; kinetic energy alone when no potential exists.
    pub fn hamiltonian(&self, state: &State) -> Result<f64> {
        let t = self.kinetic_energy(state)?;
        match &self.force {
            ForceLaw::Potential(u) => Ok(t + u.eval(&state.x)?),
            _ => Ok(t),
        }
    }

    /// The Newton field: `xddot^j = -Γ^j_{kl} xdot^k xdot^l - α^j`.
    pub fn newton_field(&self) -> Result<NewtonField> {
        let n = self.dim();
        let gamma = self.metric.christoffel()?;
        let inv = self.metric.inverse()?;
        let alpha = self.alpha();
        let mut alpha_up = Vec::with_capacity(n);
        for j in 0..n {
            let mut s = Expression::zero();
            for i in 0..n {
                s = s.add(&inv[j][i].mul(&alpha[i]));
            }
            alpha_up.push(s);
        }
        Ok(NewtonField {
            dim: n,
            gamma,
            alpha_up,
        })
    }

    /// Covariant value of the field at a state: `-grad α`, the force per
    /// unit mass.
    pub fn covariant_value(&self, state: &State) -> Result<Vec<f64>> {
        let n = self.dim();
        let inv = self.metric.inverse()?;
        let alpha = self.alpha();
        let p = state.tm_point();
        let mut out = vec![0.0; n];
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                if alpha[i].is_zero() {
                    continue;
                }
                s += inv[j][i].eval(&state.x)? * alpha[i].eval(&p)?;
            }
            out[j] = -s;
        }
        Ok(out)
    }

    /// Modifies the evolution field so the pairing `taudot` is a first
    /// integral: `Dbar = D - (D taudot / ||tau||^2) Grad tau`.
    ///
    /// `tau` components are extended-chart expressions (a horizontal 1-form).
    pub fn time_constrained_field(&self, tau: &[Expression]) -> Result<TimeConstrainedField> {
        let n = self.dim();
        if tau.len() != n {
            return Err(Error::Dimension {
                dim: tau.len(),
                msg: format!("time form must have {n} components"),
            });
        }
        let base = self.newton_field()?;
        let inv = self.metric.inverse()?;
        // taudot = tau_m xdot^m on the extended chart
        let mut taudot = Expression::zero();
        for (m, t) in tau.iter().enumerate() {
            taudot = taudot.add(&t.mul(&Expression::coord(n + m)));
        }
        let dtaudot: Vec<Expression> = (0..2 * n).map(|k| taudot.partial(k)).collect();
        // (grad tau)^j = g^{jk} tau_k  and  ||tau||^2 = g^{jk} tau_j tau_k
        let mut grad_tau = Vec::with_capacity(n);
        let mut norm2 = Expression::zero();
        for j in 0..n {
            let mut s = Expression::zero();
            for k in 0..n {
                s = s.add(&inv[j][k].mul(&tau[k]));
            }
            norm2 = norm2.add(&s.mul(&tau[j]));
            grad_tau.push(s);
        }
        Ok(TimeConstrainedField {
            base,
            dtaudot,
            grad_tau,
            norm2,
            eps_reg: self.eps_reg,
        })
    }
}

/// A second-order differential equation: accelerations as functions of the
/// state.
pub trait SecondOrderField {
    fn dim(&self) -> usize;
    fn accel(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()>;
}

pub struct NewtonField {
    dim: usize,
    gamma: Christoffel,
    alpha_up: Vec<Expression>,
}

impl SecondOrderField for NewtonField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn accel(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.dim;
        let mut tm = [x, v].concat();
        tm.truncate(2 * n);
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                for l in k..n {
                    let g = self.gamma.second(j, k, l);
                    if g.is_zero() {
                        continue;
                    }
                    let factor = if k == l { 1.0 } else { 2.0 };
                    s += factor * g.eval(x)? * v[k] * v[l];
                }
            }
            if !self.alpha_up[j].is_zero() {
                s += self.alpha_up[j].eval(&tm)?;
            }
            out[j] = -s;
        }
        Ok(())
    }
}

pub struct TimeConstrainedField {
    base: NewtonField,
    /// partials of `taudot` over the extended chart
    dtaudot: Vec<Expression>,
    grad_tau: Vec<Expression>,
    norm2: Expression,
    eps_reg: f64,
}

impl SecondOrderField for TimeConstrainedField {
    fn dim(&self) -> usize {
        self.base.dim
    }

    fn accel(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.base.dim;
        self.base.accel(x, v, out)?;
        let tm = [x, v].concat();
        let norm2 = self.norm2.eval(&tm)?;
        if norm2.abs() < self.eps_reg {
            return Err(Error::RegularityFloor {
                quantity: "||tau||^2".into(),
                value: norm2,
                floor: self.eps_reg,
            });
        }
        // D taudot = sum_k d(taudot)/dx^k xdot^k + d(taudot)/dxdot^k a^k
        let mut dtau = 0.0;
        for k in 0..n {
            if !self.dtaudot[k].is_zero() {
                dtau += self.dtaudot[k].eval(&tm)? * v[k];
            }
            if !self.dtaudot[n + k].is_zero() {
                dtau += self.dtaudot[n + k].eval(&tm)? * out[k];
            }
        }
        let lambda = dtau / norm2;
        for j in 0..n {
            out[j] -= lambda * self.grad_tau[j].eval(&tm)?;
        }
        Ok(())
    }
}

/// Time-stamped state sequence with action/duration/length accumulators and
/// an energy monitor.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub names: Vec<String>,
    pub samples: Vec<Sample>,
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub lambda: f64,
    pub state: State,
    pub action: f64,
    pub duration: f64,
    pub length: f64,
    pub energy: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> &Sample {
        self.samples
            .last()
            .expect("trajectory has at least the seed sample")
    }

    /// CSV rows `lambda,<coords>,<coords>dot,S,t,ell,H`, floats as `%.12e`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("lambda");
        for n in &self.names {
            header.push(',');
            header.push_str(n);
        }
        for n in &self.names {
            header.push(',');
            header.push_str(n);
            header.push_str("dot");
        }
        header.push_str(",S,t,ell,H\n");
        w.write_all(header.as_bytes())?;
        for s in &self.samples {
            let mut row = format!("{:.12e}", s.lambda);
            for v in s.state.x.iter().chain(&s.state.v) {
                row.push_str(&format!(",{v:.12e}"));
            }
            row.push_str(&format!(
                ",{:.12e},{:.12e},{:.12e},{:.12e}\n",
                s.action, s.duration, s.length, s.energy
            ));
            w.write_all(row.as_bytes())?;
        }
        Ok(())
    }
}

/// Restriction of a trajectory to a subset of coordinates, with the duration
/// (and the other curve functionals) re-accumulated from the projected data.
///
/// The sub-metric entries are evaluated along the original curve, which
/// realizes the projected representative of the class of time; the energy
/// column holds the projected kinetic energy.
pub fn project_trajectory(
    sys: &MechSystem,
    traj: &Trajectory,
    keep: &[usize],
) -> Result<Trajectory> {
    let n = sys.dim();
    let kept: BTreeSet<usize> = keep.iter().copied().collect();
    if kept.is_empty() || kept.iter().any(|&i| i >= n) {
        return Err(Error::Precondition(
            "projection subset must be a nonempty subset of the chart".into(),
        ));
    }
    let keep: Vec<usize> = kept.into_iter().collect();
    let names = keep.iter().map(|&i| sys.names()[i].clone()).collect();
    // theta-dot of the projected curve at each sample
    let mut theta_dots = Vec::with_capacity(traj.len());
    for s in &traj.samples {
        let mut td = 0.0;
        for &i in &keep {
            for &j in &keep {
                td += sys.metric().g(i, j).eval(&s.state.x)? * s.state.v[i] * s.state.v[j];
            }
        }
        if td.abs() < sys.eps_reg {
            return Err(Error::ZeroSection { lambda: s.lambda });
        }
        theta_dots.push(td);
    }
    let mut samples = Vec::with_capacity(traj.len());
    let mut action = 0.0;
    let mut duration = 0.0;
    let mut length = 0.0;
    for (k, s) in traj.samples.iter().enumerate() {
        if k > 0 {
            let h = s.lambda - traj.samples[k - 1].lambda;
            let (td0, td1) = (theta_dots[k - 1], theta_dots[k]);
            action += 0.5 * h * (td0 + td1);
            // the curve tangent is the stored velocity, so the time form of
            // the projected curve is identically 1 wherever theta-dot
            // survived the zero-section guard above
            duration += h;
            length += 0.5 * h * (td0.abs().sqrt() + td1.abs().sqrt());
        }
        samples.push(Sample {
            lambda: s.lambda,
            state: State::new(
                keep.iter().map(|&i| s.state.x[i]).collect(),
                keep.iter().map(|&i| s.state.v[i]).collect(),
            ),
            action,
            duration,
            length,
            energy: 0.5 * theta_dots[k],
        });
    }
    Ok(Trajectory { names, samples })
}

/// Hertz reduction: restricts an extended geodesic system to a momentum
/// level `p0 = P0` of the distinguished coordinate and projects it to a
/// conservative system with `U = g^{00} P0^2 / 2`.
///
/// Every metric coefficient must be independent of the distinguished
/// coordinate; independence is checked structurally and, where a coefficient
/// still mentions the coordinate, numerically at the provided sample points.
pub fn hertz_reduce(
    ext: &MechSystem,
    time_index: usize,
    p0: f64,
    samples: &[Vec<f64>],
) -> Result<MechSystem> {
    let n = ext.dim();
    if n < 2 {
        return Err(Error::Dimension {
            dim: n,
            msg: "Hertz reduction needs an extended space".into(),
        });
    }
    if time_index >= n {
        return Err(Error::Precondition(format!(
            "time index {time_index} outside the chart"
        )));
    }
    let g = ext.metric();
    for mu in 0..n {
        if mu != time_index && !g.g(time_index, mu).is_zero() {
            return Err(Error::NotAdapted(format!(
                "metric entry ({time_index},{mu}) must vanish in adapted coordinates"
            )));
        }
    }
    for i in 0..n {
        for j in i..n {
            let coeff = g.g(i, j);
            let d = coeff.partial(time_index);
            if d.is_zero() {
                continue;
            }
            if samples.is_empty() {
                return Err(Error::Precondition(format!(
                    "metric entry ({i},{j}) mentions the distinguished coordinate; sample points are required to check independence"
                )));
            }
            for p in samples {
                let v = d.eval(p)?;
                if v.abs() > 1e-12 {
                    return Err(Error::TimeDependentCoefficient {
                        coeff: format!("g[{i}][{j}]"),
                        value: v,
                        point: p.clone(),
                    });
                }
            }
        }
    }
    let t_value = samples.first().map(|p| p[time_index]).unwrap_or(0.0);
    let freeze = Expression::constant(t_value);
    let narrow = |e: &Expression| -> Expression {
        e.substitute(time_index, &freeze)
            .remap_coords(&|i| if i > time_index { i - 1 } else { i })
    };
    let mut names = ext.names().to_vec();
    names.remove(time_index);
    let mut rows = vec![vec![Expression::zero(); n - 1]; n - 1];
    for i in 0..n {
        if i == time_index {
            continue;
        }
        let ri = if i > time_index { i - 1 } else { i };
        for j in i..n {
            if j == time_index {
                continue;
            }
            let rj = if j > time_index { j - 1 } else { j };
            let e = narrow(g.g(i, j));
            rows[ri][rj] = e.clone();
            rows[rj][ri] = e;
        }
    }
    let metric = MetricField::new(names, rows)?;
    // U = g^00 P0^2 / 2 with g^00 = 1/g00 in the adapted block metric
    let g00 = narrow(g.g(time_index, time_index));
    let u = Expression::constant(0.5 * p0 * p0).div(&g00);
    let mut reduced = MechSystem::conservative(metric, u);
    reduced.eps_reg = ext.eps_reg;
    Ok(reduced)
}

/// Lifts a reduced state to the extended space on the level `p0 = P0`:
/// `xdot^0 = g^{00} P0`.
pub fn extend_state(
    ext: &MechSystem,
    time_index: usize,
    p0: f64,
    reduced: &State,
    t0: f64,
) -> Result<State> {
    let n = ext.dim();
    let mut x = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        if i == time_index {
            x.push(t0);
            v.push(0.0);
        } else {
            x.push(reduced.x[k]);
            v.push(reduced.v[k]);
            k += 1;
        }
    }
    let g00 = ext.metric().g(time_index, time_index).eval(&x)?;
    if g00.abs() < ext.eps_reg {
        return Err(Error::RegularityFloor {
            quantity: "g00".into(),
            value: g00,
            floor: ext.eps_reg,
        });
    }
    v[time_index] = p0 / g00;
    Ok(State::new(x, v))
}

/// Conjugate momentum of the distinguished coordinate, `p0 = g_{00} xdot^0`
/// in adapted coordinates.
pub fn momentum_p0(ext: &MechSystem, time_index: usize, state: &State) -> Result<f64> {
    let mut p = 0.0;
    for j in 0..ext.dim() {
        p += ext.metric().g(time_index, j).eval(&state.x)? * state.v[j];
    }
    Ok(p)
}

/// Pointwise Euclidean norm of the 1-form `u ⌟ d(u ⌟ T2) + dH(u)`; the field
/// `u` is an intermediate integral of the evolution field exactly when this
/// vanishes identically.
pub fn intermediate_integral_residual(sys: &MechSystem, u: &[Expression]) -> Result<Expression> {
    let n = sys.dim();
    if u.len() != n {
        return Err(Error::Dimension {
            dim: u.len(),
            msg: format!("field must have {n} components"),
        });
    }
    let g = sys.metric();
    // beta_j = g_ij u^i
    let beta: Vec<Expression> = (0..n)
        .map(|j| {
            let mut s = Expression::zero();
            for i in 0..n {
                s = s.add(&g.g(i, j).mul(&u[i]));
            }
            s
        })
        .collect();
    // H(u) = T(u) + U
    let mut h_u = Expression::zero();
    for i in 0..n {
        for j in 0..n {
            h_u = h_u.add(&g.g(i, j).mul(&u[i]).mul(&u[j]));
        }
    }
    h_u = h_u.mul(&Expression::constant(0.5));
    if let Some(pot) = sys.potential() {
        h_u = h_u.add(pot);
    }
    let mut norm2 = Expression::zero();
    for j in 0..n {
        // rho_j = u^k (d_k beta_j - d_j beta_k) + d_j H(u)
        let mut rho = h_u.partial(j);
        for k in 0..n {
            let curl = beta[j].partial(k).sub(&beta[k].partial(j));
            rho = rho.add(&u[k].mul(&curl));
        }
        norm2 = norm2.add(&rho.mul(&rho));
    }
    Ok(norm2.sqrt())
}

/// Value of the Newton 1-form `D ⌟ ω2 + dT + α` on a test vector
/// `w = (w_x, w_v)` at the given state, for the second-order field with
/// acceleration `a`. Diagnostic for the constrained-field congruence.
pub fn newton_residual(
    sys: &MechSystem,
    state: &State,
    a: &[f64],
    w_x: &[f64],
    w_v: &[f64],
) -> Result<f64> {
    let n = sys.dim();
    let g = sys.metric();
    let tm = state.tm_point();
    // theta_j = g_ij xdot^i on the extended chart
    let theta: Vec<Expression> = (0..n)
        .map(|j| {
            let mut s = Expression::zero();
            for i in 0..n {
                s = s.add(&g.g(i, j).mul(&Expression::coord(n + i)));
            }
            s
        })
        .collect();
    let mut value = 0.0;
    // omega2(D, w) where D = (xdot, a)
    for j in 0..n {
        for k in 0..n {
            let dx = theta[j].partial(k).eval(&tm)?;
            value += dx * (state.v[k] * w_x[j] - w_x[k] * state.v[j]);
            let dv = theta[j].partial(n + k).eval(&tm)?;
            value += dv * (a[k] * w_x[j] - w_v[k] * state.v[j]);
        }
    }
    // dT(w)
    let mut t = Expression::zero();
    for i in 0..n {
        for j in 0..n {
            t = t.add(
                &g.g(i, j)
                    .mul(&Expression::coord(n + i))
                    .mul(&Expression::coord(n + j)),
            );
        }
    }
    t = t.mul(&Expression::constant(0.5));
    for k in 0..n {
        value += t.partial(k).eval(&tm)? * w_x[k];
        value += t.partial(n + k).eval(&tm)? * w_v[k];
    }
    // alpha(w)
    let alpha = sys.alpha();
    for j in 0..n {
        if !alpha[j].is_zero() {
            value += alpha[j].eval(&tm)? * w_x[j];
        }
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn flat2() -> MetricField {
        MetricField::flat(vec!["x".into(), "y".into()]).unwrap()
    }

    fn kepler() -> MechSystem {
        let refs = ["x", "y"];
        MechSystem::conservative(flat2(), parse("-1/sqrt(x^2 + y^2)", &refs).unwrap())
    }

    fn oscillator_1d(omega: f64) -> MechSystem {
        let metric = MetricField::flat(vec!["x".into()]).unwrap();
        let u = Expression::constant(0.5 * omega * omega)
            .mul(&Expression::coord(0))
            .mul(&Expression::coord(0));
        MechSystem::conservative(metric, u)
    }

    #[test]
    fn free_particle_endpoint_is_exact() {
        let sys = MechSystem::geodesic(MetricField::flat(vec!["x".into()]).unwrap());
        let field = sys.newton_field().unwrap();
        let traj = integrate(
            &sys,
            &field,
            &State::new(vec![0.0], vec![1.0]),
            &IntegrateOptions::fixed(2.0, 1e-2),
        )
        .unwrap();
        let last = traj.last();
        assert!((last.state.x[0] - 2.0).abs() <= 1e-12);
        assert!((last.duration - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn oscillator_period_returns_to_start() {
        let sys = oscillator_1d(1.0);
        let field = sys.newton_field().unwrap();
        let span = 2.0 * std::f64::consts::PI;
        // the seed sits on the zero section (turning point), so duration and
        // length are not requested; action still accumulates
        let opts = IntegrateOptions {
            track_time_length: false,
            ..IntegrateOptions::adaptive(span, 1e-10)
        };
        let traj = integrate(&sys, &field, &State::new(vec![1.0], vec![0.0]), &opts).unwrap();
        let last = traj.last();
        assert!(
            (last.state.x[0] - 1.0).abs() <= 1e-8,
            "x = {}",
            last.state.x[0]
        );
        assert!(last.state.v[0].abs() <= 1e-8);
    }

    #[test]
    fn flat_oscillator_field_matches_hand_rhs() {
        let omega = 1.7;
        let sys = oscillator_1d(omega);
        let field = sys.newton_field().unwrap();
        let mut out = [0.0];
        field.accel(&[0.4], &[0.9], &mut out).unwrap();
        assert!((out[0] + omega * omega * 0.4).abs() < 1e-14);
    }

    #[test]
    fn kepler_field_at_unit_distance() {
        let sys = kepler();
        let field = sys.newton_field().unwrap();
        let mut out = [0.0, 0.0];
        field.accel(&[1.0, 0.0], &[0.0, 1.0], &mut out).unwrap();
        assert!((out[0] + 1.0).abs() < 1e-12, "ax = {}", out[0]);
        assert!(out[1].abs() < 1e-12);
    }

    #[test]
    fn geodesic_theta_dot_is_constant_on_polar_metric() {
        let refs = ["r", "theta"];
        let metric = MetricField::from_diag(
            vec!["r".into(), "theta".into()],
            vec![Expression::one(), parse("r^2", &refs).unwrap()],
        )
        .unwrap();
        let sys = MechSystem::geodesic(metric);
        let field = sys.newton_field().unwrap();
        let s0 = State::new(vec![1.0, 0.0], vec![0.3, 0.8]);
        let td0 = sys.theta_dot(&s0).unwrap();
        let traj = integrate(&sys, &field, &s0, &IntegrateOptions::adaptive(10.0, 1e-10)).unwrap();
        for s in &traj.samples {
            let td = sys.theta_dot(&s.state).unwrap();
            assert!((td - td0).abs() <= 1e-9, "2T drift {}", td - td0);
        }
    }

    #[test]
    fn conservative_energy_is_conserved() {
        let sys = kepler();
        let field = sys.newton_field().unwrap();
        let s0 = State::new(vec![1.0, 0.0], vec![0.1, 1.1]);
        let h0 = sys.hamiltonian(&s0).unwrap();
        let traj = integrate(&sys, &field, &s0, &IntegrateOptions::adaptive(10.0, 1e-10)).unwrap();
        for s in &traj.samples {
            assert!((s.energy - h0).abs() <= 1e-8 * (1.0 + h0.abs()));
        }
    }

    #[test]
    fn functional_rates_along_trajectory() {
        // dS/dt = 2T, dl/dt = sqrt(2T), dS/dl = sqrt(2T); central differences
        // of the accumulators on a uniform fine grid against pointwise values
        let sys = kepler();
        let field = sys.newton_field().unwrap();
        let s0 = State::new(vec![1.0, 0.0], vec![0.0, 1.05]);
        let traj = integrate(&sys, &field, &s0, &IntegrateOptions::fixed(5.0, 1e-3)).unwrap();
        for k in (1..traj.len() - 1).step_by(37) {
            let (a, m, b) = (&traj.samples[k - 1], &traj.samples[k], &traj.samples[k + 1]);
            let dt = b.duration - a.duration;
            let ds = b.action - a.action;
            let dl = b.length - a.length;
            let td = sys.theta_dot(&m.state).unwrap();
            assert!(
                (ds / dt - td).abs() <= 1e-6 * (1.0 + td.abs()),
                "dS/dt {} vs 2T {}",
                ds / dt,
                td
            );
            assert!((dl / dt - td.sqrt()).abs() <= 1e-6 * (1.0 + td.sqrt()));
            assert!((ds / dl - td.sqrt()).abs() <= 1e-6 * (1.0 + td.sqrt()));
        }
    }

    #[test]
    fn covariant_value_examples() {
        // geodesic: zero force
        let sys = MechSystem::geodesic(flat2());
        let v = sys
            .covariant_value(&State::new(vec![0.3, 0.4], vec![1.0, 0.0]))
            .unwrap();
        assert!(v.iter().all(|c| c.abs() < 1e-14));

        // oscillator at x = 1: -omega^2
        let omega = 1.3;
        let sys = oscillator_1d(omega);
        let v = sys
            .covariant_value(&State::new(vec![1.0], vec![0.0]))
            .unwrap();
        assert!((v[0] + omega * omega).abs() < 1e-14);

        // Kepler at (1, 0): (-1, 0)
        let sys = kepler();
        let v = sys
            .covariant_value(&State::new(vec![1.0, 0.0], vec![0.0, 1.0]))
            .unwrap();
        assert!((v[0] + 1.0).abs() < 1e-12);
        assert!(v[1].abs() < 1e-12);
    }

    fn product_metric_with_potential() -> MechSystem {
        // M = R_t x R^2, g00 = -2U(x,y) with U > 0, spatial block flat
        let refs = ["t", "x", "y"];
        let g00 = parse("-(x^2 + 2*y^2 + 0.6)", &refs).unwrap();
        let metric = MetricField::from_diag(
            vec!["t".into(), "x".into(), "y".into()],
            vec![g00, Expression::one(), Expression::one()],
        )
        .unwrap();
        MechSystem::geodesic(metric)
    }

    #[test]
    fn time_constrained_field_annihilates_taudot() {
        let sys = product_metric_with_potential();
        let tau = vec![Expression::one(), Expression::zero(), Expression::zero()];
        let field = sys.time_constrained_field(&tau).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = vec![
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let v = vec![
                rng.gen_range(0.2..1.5),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let mut a = [0.0; 3];
            field.accel(&x, &v, &mut a).unwrap();
            // taudot = tdot here, so D-bar(taudot) is the time acceleration
            assert!(a[0].abs() <= 1e-10, "D-bar taudot = {}", a[0]);
        }
    }

    #[test]
    fn constrained_field_equals_base_when_already_tangent() {
        // free flat system: D taudot = 0 for tau = dx already
        let sys = MechSystem::geodesic(flat2());
        let tau = vec![Expression::one(), Expression::zero()];
        let base = sys.newton_field().unwrap();
        let constrained = sys.time_constrained_field(&tau).unwrap();
        let x = [0.3, -0.2];
        let v = [0.7, 0.4];
        let mut a0 = [0.0; 2];
        let mut a1 = [0.0; 2];
        base.accel(&x, &v, &mut a0).unwrap();
        constrained.accel(&x, &v, &mut a1).unwrap();
        assert_eq!(a0, a1);
    }

    #[test]
    fn constrained_field_matches_second_fundamental_form_route() {
        // For tau a 1-form on M the correction factor is
        // <tau, D-nabla> + II_{grad tau}(xdot, xdot).
        let refs = ["x", "y"];
        let metric = MetricField::new(
            vec!["x".into(), "y".into()],
            vec![
                vec![
                    parse("1 + x^2/4", &refs).unwrap(),
                    parse("x*y/10", &refs).unwrap(),
                ],
                vec![
                    parse("x*y/10", &refs).unwrap(),
                    parse("2 + y^2/3", &refs).unwrap(),
                ],
            ],
        )
        .unwrap();
        let u_pot = parse("x^2/2 + y^2/3 + x*y/5", &refs).unwrap();
        let sys = MechSystem::conservative(metric.clone(), u_pot);
        let tau = vec![
            parse("1 + y^2/7", &refs).unwrap(),
            parse("x/3", &refs).unwrap(),
        ];
        let constrained = sys.time_constrained_field(&tau).unwrap();
        let base = sys.newton_field().unwrap();
        let grad_tau_vec = {
            let inv = metric.inverse().unwrap();
            (0..2)
                .map(|j| {
                    let mut s = Expression::zero();
                    for k in 0..2 {
                        s = s.add(&inv[j][k].mul(&tau[k]));
                    }
                    s
                })
                .collect::<Vec<_>>()
        };
        let ii = metric.second_fundamental_form(&grad_tau_vec).unwrap();
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..100 {
            let x = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let v = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let state = State::new(x.clone(), v.clone());
            let mut a_eq14 = [0.0; 2];
            constrained.accel(&x, &v, &mut a_eq14).unwrap();
            let mut a_base = [0.0; 2];
            base.accel(&x, &v, &mut a_base).unwrap();
            // route through the second fundamental form
            let dnab = sys.covariant_value(&state).unwrap();
            let tau_v: Vec<f64> = tau.iter().map(|e| e.eval(&x).unwrap()).collect();
            let mut bracket = 0.0;
            for j in 0..2 {
                bracket += tau_v[j] * dnab[j];
                for k in 0..2 {
                    bracket += ii[j][k].eval(&x).unwrap() * v[j] * v[k];
                }
            }
            let inv = metric.inverse().unwrap();
            let mut norm2 = 0.0;
            let mut grad_tau_num = [0.0; 2];
            for j in 0..2 {
                for k in 0..2 {
                    grad_tau_num[j] += inv[j][k].eval(&x).unwrap() * tau_v[k];
                }
                norm2 += grad_tau_num[j] * tau_v[j];
            }
            for j in 0..2 {
                let a_eq15 = a_base[j] - bracket / norm2 * grad_tau_num[j];
                assert!(
                    (a_eq14[j] - a_eq15).abs() <= 1e-9 * (1.0 + a_eq15.abs()),
                    "component {j}: {} vs {}",
                    a_eq14[j],
                    a_eq15
                );
            }
        }
    }

    #[test]
    fn constrained_residual_form_is_parallel_to_tau() {
        let sys = product_metric_with_potential();
        let tau_exprs = vec![Expression::one(), Expression::zero(), Expression::zero()];
        let field = sys.time_constrained_field(&tau_exprs).unwrap();
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..100 {
            let x = vec![
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let v = vec![
                rng.gen_range(0.2..1.5),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let state = State::new(x.clone(), v.clone());
            let mut a = [0.0; 3];
            field.accel(&x, &v, &mut a).unwrap();
            // two independent horizontal test vectors
            let w1x = [1.0, 0.3, -0.2];
            let w2x = [0.1, 1.0, 0.5];
            let wv = [0.0; 3];
            let r1 = newton_residual(&sys, &state, &a, &w1x, &wv).unwrap();
            let r2 = newton_residual(&sys, &state, &a, &w2x, &wv).unwrap();
            // tau = dt: tau(w) is the first component
            let cross = r1 * w2x[0] - r2 * w1x[0];
            assert!(cross.abs() <= 1e-9, "cross ratio {cross}");
        }
    }

    #[test]
    fn hertz_reduction_recovers_kepler_and_oscillator() {
        // g^00 = -2/r with P0 = 1 gives U = -1/r
        let refs = ["t", "x", "y"];
        let g00 = parse("-sqrt(x^2 + y^2)/2", &refs).unwrap();
        let metric = MetricField::from_diag(
            vec!["t".into(), "x".into(), "y".into()],
            vec![g00, Expression::one(), Expression::one()],
        )
        .unwrap();
        let ext = MechSystem::geodesic(metric);
        let samples = vec![vec![0.0, 1.0, 0.5], vec![0.3, 0.5, -1.0]];
        let red = hertz_reduce(&ext, 0, 1.0, &samples).unwrap();
        let u = red.potential().unwrap();
        for p in [[1.0_f64, 0.0], [0.6, 0.8], [1.5, -2.0]] {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((u.eval(&p).unwrap() + 1.0 / r).abs() < 1e-14);
        }

        // g^00 = omega^2 x^2 / P0^2 gives the oscillator potential
        let refs1 = ["t", "x"];
        let p0 = 0.7;
        let omega = 1.3;
        let g00 = parse(&format!("{}/(x^2*{})", p0 * p0, omega * omega), &refs1).unwrap();
        let metric =
            MetricField::from_diag(vec!["t".into(), "x".into()], vec![g00, Expression::one()])
                .unwrap();
        let ext = MechSystem::geodesic(metric);
        let red = hertz_reduce(&ext, 0, p0, &[vec![0.0, 0.8]]).unwrap();
        let u = red.potential().unwrap();
        for x in [0.5, 1.0, 2.0] {
            assert!((u.eval(&[x]).unwrap() - 0.5 * omega * omega * x * x).abs() < 1e-12);
        }

        // constant g^00: constant potential, geodesic reduced field
        let g00 = Expression::constant(-4.0);
        let metric =
            MetricField::from_diag(vec!["t".into(), "x".into()], vec![g00, Expression::one()])
                .unwrap();
        let ext = MechSystem::geodesic(metric);
        let red = hertz_reduce(&ext, 0, 1.0, &[]).unwrap();
        let u = red.potential().unwrap();
        assert_eq!(u.as_const(), Some(-0.125));
        let field = red.newton_field().unwrap();
        let mut a = [0.0];
        field.accel(&[0.4], &[1.2], &mut a).unwrap();
        assert_eq!(a[0], 0.0);
    }

    #[test]
    fn hertz_reduction_rejects_time_dependent_metrics() {
        let refs = ["t", "x"];
        let g00 = parse("-(1 + t^2)", &refs).unwrap();
        let metric =
            MetricField::from_diag(vec!["t".into(), "x".into()], vec![g00, Expression::one()])
                .unwrap();
        let ext = MechSystem::geodesic(metric);
        let err = hertz_reduce(&ext, 0, 1.0, &[vec![0.5, 0.0]]).unwrap_err();
        match err {
            Error::TimeDependentCoefficient { coeff, .. } => assert_eq!(coeff, "g[0][0]"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn extended_momentum_is_conserved_and_projection_matches_reduction() {
        let refs = ["t", "x", "y"];
        let g00 = parse("-sqrt(x^2 + y^2)/2", &refs).unwrap();
        let metric = MetricField::from_diag(
            vec!["t".into(), "x".into(), "y".into()],
            vec![g00, Expression::one(), Expression::one()],
        )
        .unwrap();
        let ext = MechSystem::geodesic(metric);
        let p0 = 1.0;
        let red = hertz_reduce(&ext, 0, p0, &[vec![0.0, 1.0, 0.0]]).unwrap();
        let s_red = State::new(vec![1.0, 0.0], vec![0.0, 1.1]);
        let s_ext = extend_state(&ext, 0, p0, &s_red, 0.0).unwrap();
        assert!((momentum_p0(&ext, 0, &s_ext).unwrap() - p0).abs() < 1e-14);

        let ext_field = ext.newton_field().unwrap();
        let red_field = red.newton_field().unwrap();
        let opts = IntegrateOptions::fixed(10.0, 1e-3);
        let t_ext = integrate(&ext, &ext_field, &s_ext, &opts).unwrap();
        let t_red = integrate(&red, &red_field, &s_red, &opts).unwrap();
        assert_eq!(t_ext.len(), t_red.len());
        let mut max_p0_drift: f64 = 0.0;
        let mut max_pointwise: f64 = 0.0;
        for (a, b) in t_ext.samples.iter().zip(&t_red.samples) {
            let p = momentum_p0(&ext, 0, &a.state).unwrap();
            max_p0_drift = max_p0_drift.max((p - p0).abs());
            for k in 0..2 {
                max_pointwise = max_pointwise.max((a.state.x[k + 1] - b.state.x[k]).abs());
                max_pointwise = max_pointwise.max((a.state.v[k + 1] - b.state.v[k]).abs());
            }
        }
        assert!(max_p0_drift <= 1e-9, "p0 drift {max_p0_drift}");
        assert!(max_pointwise <= 1e-6, "projection mismatch {max_pointwise}");
    }

    #[test]
    fn projection_preserves_duration_for_free_motion() {
        let sys = MechSystem::geodesic(flat2());
        let field = sys.newton_field().unwrap();
        let traj = integrate(
            &sys,
            &field,
            &State::new(vec![0.0, 0.0], vec![1.0, 0.3]),
            &IntegrateOptions::adaptive(4.0, 1e-10),
        )
        .unwrap();
        let proj = project_trajectory(&sys, &traj, &[0]).unwrap();
        let d_src = traj.last().duration;
        let d_prj = proj.last().duration;
        assert!((d_src - d_prj).abs() <= 1e-10, "{d_src} vs {d_prj}");
    }

    #[test]
    fn projection_to_a_stopped_coordinate_fails() {
        let sys = MechSystem::geodesic(flat2());
        let field = sys.newton_field().unwrap();
        let traj = integrate(
            &sys,
            &field,
            &State::new(vec![0.0, 0.0], vec![1.0, 0.0]),
            &IntegrateOptions::fixed(1.0, 1e-2),
        )
        .unwrap();
        assert!(matches!(
            project_trajectory(&sys, &traj, &[1]),
            Err(Error::ZeroSection { .. })
        ));
    }

    #[test]
    fn projection_of_planar_oscillator_axis() {
        let refs = ["x", "y"];
        let sys = MechSystem::conservative(flat2(), parse("(x^2 + y^2)/2", &refs).unwrap());
        let field = sys.newton_field().unwrap();
        // start moving in +x with the turning point beyond the span
        let traj = integrate(
            &sys,
            &field,
            &State::new(vec![0.0, 0.2], vec![1.0, 0.4]),
            &IntegrateOptions::adaptive(1.2, 1e-10),
        )
        .unwrap();
        let proj = project_trajectory(&sys, &traj, &[0]).unwrap();
        assert!((proj.last().duration - traj.last().duration).abs() <= 1e-8);
    }

    #[test]
    fn intermediate_integral_residual_examples() {
        let sys = MechSystem::geodesic(flat2());
        let u = vec![Expression::constant(0.7), Expression::constant(-0.1)];
        let res = intermediate_integral_residual(&sys, &u).unwrap();
        assert!(res.is_zero() || res.eval(&[0.4, 0.2]).unwrap() < 1e-14);

        // u = grad S with S = a x + b y solves Hamilton-Jacobi for U = 0
        let u = vec![Expression::constant(0.6), Expression::constant(0.8)];
        let res = intermediate_integral_residual(&sys, &u).unwrap();
        assert!(res.is_zero() || res.eval(&[1.0, 2.0]).unwrap() <= 1e-8);

        // u = grad(x^2) is not an intermediate integral of the free system
        let refs = ["x", "y"];
        let f = parse("x^2", &refs).unwrap();
        let u: Vec<Expression> = (0..2).map(|i| f.partial(i)).collect();
        let res = intermediate_integral_residual(&sys, &u).unwrap();
        assert!(res.eval(&[1.0, 0.5]).unwrap() > 1e-3);
    }

    #[test]
    fn csv_export_shape() {
        let sys = kepler();
        let field = sys.newton_field().unwrap();
        let traj = integrate(
            &sys,
            &field,
            &State::new(vec![1.0, 0.0], vec![0.0, 1.0]),
            &IntegrateOptions::fixed(0.1, 0.02),
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "lambda,x,y,xdot,ydot,S,t,ell,H");
        assert_eq!(lines.count(), traj.len());
    }

    #[test]
    fn energy_level_orbits_are_geodesics_of_the_jacobi_metric() {
        // On H = E the trajectories differ from the geodesic field of the
        // metric 2(E-U) T2 by a vertical term parallel to the velocity.
        let refs = ["x", "y"];
        let e = -0.5;
        let sys = kepler();
        let u = parse("-1/sqrt(x^2 + y^2)", &refs).unwrap();
        let conformal = Expression::constant(2.0).mul(&Expression::constant(e).sub(&u));
        let jacobi = MetricField::from_diag(
            vec!["x".into(), "y".into()],
            vec![conformal.clone(), conformal],
        )
        .unwrap();
        let jacobi_field = MechSystem::geodesic(jacobi).newton_field().unwrap();
        let kepler_field = sys.newton_field().unwrap();
        let r0 = 1.2;
        let v0 = (2.0_f64 * (e + 1.0 / r0)).sqrt();
        let traj = integrate(
            &sys,
            &kepler_field,
            &State::new(vec![r0, 0.0], vec![0.0, v0]),
            &IntegrateOptions::adaptive(6.0, 1e-10),
        )
        .unwrap();
        for s in traj.samples.iter().step_by(7) {
            let st = &s.state;
            let mut a_sys = [0.0; 2];
            kepler_field.accel(&st.x, &st.v, &mut a_sys).unwrap();
            let mut a_jac = [0.0; 2];
            jacobi_field.accel(&st.x, &st.v, &mut a_jac).unwrap();
            let diff = [a_sys[0] - a_jac[0], a_sys[1] - a_jac[1]];
            // perpendicular part of the difference must vanish
            let v2 = st.v[0] * st.v[0] + st.v[1] * st.v[1];
            let along = (diff[0] * st.v[0] + diff[1] * st.v[1]) / v2;
            let perp = [diff[0] - along * st.v[0], diff[1] - along * st.v[1]];
            let scale = 1.0 + a_sys[0].hypot(a_sys[1]);
            assert!(
                perp[0].hypot(perp[1]) <= 1e-6 * scale,
                "perp residual {:?}",
                perp
            );
            // and the parallel factor is -(dU/dlambda)/(E-U)
            let udot = u.partial(0).eval(&st.x).unwrap() * st.v[0]
                + u.partial(1).eval(&st.x).unwrap() * st.v[1];
            let expect = -udot / (e - u.eval(&st.x).unwrap());
            assert!((along - expect).abs() <= 1e-8 * (1.0 + expect.abs()));
        }
    }
}
