//! Hamilton-Jacobi characteristics: conormal seeding at an energy level,
//! bundle propagation with the action/time functionals, wavefront
//! extraction, wave/particle speeds, cycle actions on closed orbits and the
//! energy derivative of the cycle action.

use crate::dynamics::{
    integrate, resume, IntegrateOptions, MechSystem, SecondOrderField, State, Trajectory,
};
use crate::error::{Error, Result};
use crate::expr::Expression;

/// Manifold of initial conditions: a point source, or a graph hypersurface
/// `x^o = xi(other coordinates)` over a parameter interval (two-dimensional
/// configuration spaces).
#[derive(Clone, Debug)]
pub enum InitialManifold {
    Point(Vec<f64>),
    Graph {
        /// Index of the coordinate expressed by the graph.
        ordinate: usize,
        xi: Expression,
        /// Parameter range for the free coordinate.
        domain: (f64, f64),
    },
}

/// States sampled on the conormal bundle of the initial manifold,
/// intersected with the energy level `H = E`; each comes with its seed
/// parameter (angle for point sources, free coordinate for graphs).
pub fn seed_conormal(
    manifold: &InitialManifold,
    sys: &MechSystem,
    energy: f64,
    count: usize,
) -> Result<Vec<(f64, State)>> {
    if count == 0 {
        return Err(Error::Precondition("seed count must be positive".into()));
    }
    let n = sys.dim();
    let mut seeds = Vec::with_capacity(count);
    match manifold {
        InitialManifold::Point(x0) => {
            if x0.len() != n {
                return Err(Error::Dimension {
                    dim: x0.len(),
                    msg: format!("source point must have {n} coordinates"),
                });
            }
            let u0 = match sys.potential() {
                Some(u) => u.eval(x0)?,
                None => 0.0,
            };
            let t = energy - u0;
            if t <= 0.0 {
                return Err(Error::Precondition(format!(
                    "energy level {energy} does not exceed the potential {u0} at the source: empty quadric"
                )));
            }
            let speed = (2.0 * t).sqrt();
            match n {
                1 => {
                    let m = sys.metric().eval_matrix(x0)?[0][0];
                    if m <= 0.0 {
                        return Err(Error::Precondition(
                            "point-source seeding needs a positive-definite metric".into(),
                        ));
                    }
                    let e0 = 1.0 / m.sqrt();
                    for k in 0..count.min(2) {
                        let sign = if k == 0 { 1.0 } else { -1.0 };
                        seeds.push((sign, State::new(x0.clone(), vec![sign * speed * e0])));
                    }
                }
                2 => {
                    let m = sys.metric().eval_matrix(x0)?;
                    // Gram-Schmidt orthonormal frame for the metric at x0
                    if m[0][0] <= 0.0 {
                        return Err(Error::Precondition(
                            "point-source seeding needs a positive-definite metric".into(),
                        ));
                    }
                    let e1 = [1.0 / m[0][0].sqrt(), 0.0];
                    let g12 = m[0][1] * e1[0];
                    let mut e2 = [-g12 * e1[0], 1.0];
                    let norm2 = m[0][0] * e2[0] * e2[0]
                        + 2.0 * m[0][1] * e2[0] * e2[1]
                        + m[1][1] * e2[1] * e2[1];
                    if norm2 <= 0.0 {
                        return Err(Error::Precondition(
                            "point-source seeding needs a positive-definite metric".into(),
                        ));
                    }
                    let s = 1.0 / norm2.sqrt();
                    e2[0] *= s;
                    e2[1] *= s;
                    for k in 0..count {
                        let phi = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                        let v = vec![
                            speed * (phi.cos() * e1[0] + phi.sin() * e2[0]),
                            speed * (phi.cos() * e1[1] + phi.sin() * e2[1]),
                        ];
                        seeds.push((phi, State::new(x0.clone(), v)));
                    }
                }
                _ => {
                    return Err(Error::Dimension {
                        dim: n,
                        msg: "point sources support 1 or 2 dimensions".into(),
                    })
                }
            }
        }
        InitialManifold::Graph {
            ordinate,
            xi,
            domain,
        } => {
            if n != 2 {
                return Err(Error::Dimension {
                    dim: n,
                    msg: "graph sources support 2 dimensions".into(),
                });
            }
            let o = *ordinate;
            if o >= n {
                return Err(Error::Precondition(format!(
                    "ordinate {o} outside the chart"
                )));
            }
            let free = 1 - o;
            let (lo, hi) = *domain;
            if !(hi > lo) {
                return Err(Error::Precondition(
                    "graph domain must be a nonempty interval".into(),
                ));
            }
            for k in 0..count {
                let s = if count == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * k as f64 / (count - 1) as f64
                };
                let mut x = vec![0.0; n];
                x[free] = s;
                x[o] = xi.eval(&x)?;
                let u0 = match sys.potential() {
                    Some(u) => u.eval(&x)?,
                    None => 0.0,
                };
                let t = energy - u0;
                if t <= 0.0 {
                    return Err(Error::Precondition(format!(
                        "energy level {energy} does not exceed the potential {u0} on the manifold: empty quadric"
                    )));
                }
                // conormal direction: p = p0 (dx^o - (dxi/dx^free) dx^free)
                let slope = xi.partial(free).eval(&x)?;
                let mut ncov = vec![0.0; n];
                ncov[o] = 1.0;
                ncov[free] = -slope;
                let inv = numeric_inverse_2x2(&sys.metric().eval_matrix(&x)?)?;
                let mut q = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        q += inv[i][j] * ncov[i] * ncov[j];
                    }
                }
                if q <= 0.0 {
                    return Err(Error::Precondition(
                        "conormal direction is not spacelike at a seed".into(),
                    ));
                }
                let p0 = (2.0 * t / q).sqrt();
                let p: Vec<f64> = ncov.iter().map(|c| p0 * c).collect();
                let mut v = vec![0.0; n];
                for i in 0..n {
                    for j in 0..n {
                        v[i] += inv[i][j] * p[j];
                    }
                }
                // conormality: the pairing with the tangent of the graph
                let tangent_pairing = p[free] + p[o] * slope;
                if tangent_pairing.abs() > 1e-10 {
                    return Err(Error::Precondition(format!(
                        "seed failed the conormality check: <p, TX> = {tangent_pairing:e}"
                    )));
                }
                seeds.push((s, State::new(x, v)));
            }
        }
    }
    for (_, s) in &seeds {
        let h = sys.hamiltonian(s)?;
        if (h - energy).abs() > 1e-10 * (1.0 + energy.abs()) {
            return Err(Error::Precondition(format!(
                "seed missed the energy level: H = {h}, E = {energy}"
            )));
        }
    }
    Ok(seeds)
}

fn numeric_inverse_2x2(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    match m.len() {
        1 => {
            if m[0][0] == 0.0 {
                return Err(Error::SingularMetric {
                    point: vec![],
                    det: 0.0,
                });
            }
            Ok(vec![vec![1.0 / m[0][0]]])
        }
        2 => {
            let d = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if d == 0.0 {
                return Err(Error::SingularMetric {
                    point: vec![],
                    det: 0.0,
                });
            }
            Ok(vec![
                vec![m[1][1] / d, -m[0][1] / d],
                vec![-m[1][0] / d, m[0][0] / d],
            ])
        }
        n => Err(Error::Dimension {
            dim: n,
            msg: "numeric inverse helper supports 1 or 2 dimensions".into(),
        }),
    }
}

/// Family of characteristics on a common energy level.
#[derive(Debug)]
pub struct CharacteristicBundle {
    pub energy: f64,
    pub members: Vec<Characteristic>,
    /// Seeds whose integration failed, with the error (the bundle survives).
    pub failures: Vec<(f64, Error)>,
}

#[derive(Debug)]
pub struct Characteristic {
    pub param: f64,
    pub traj: Trajectory,
    /// Largest `|H - E|` recorded along the characteristic.
    pub h_drift: f64,
}

impl CharacteristicBundle {
    /// Wave time `tau = S/E` at a recorded sample; requires `E != 0`.
    pub fn tau(&self, member: usize, sample: usize) -> Result<f64> {
        if self.energy == 0.0 {
            return Err(Error::Precondition(
                "wave time is undefined on the zero energy level".into(),
            ));
        }
        Ok(self.members[member].traj.samples[sample].action / self.energy)
    }
}

/// Integrates every seed, collecting per-characteristic errors instead of
/// aborting the bundle.
pub fn propagate(
    seeds: &[(f64, State)],
    sys: &MechSystem,
    span: f64,
    opts: Option<IntegrateOptions>,
) -> Result<CharacteristicBundle> {
    if seeds.is_empty() {
        return Err(Error::Precondition("empty seed list".into()));
    }
    let energy = sys.hamiltonian(&seeds[0].1)?;
    for (_, s) in seeds {
        let h = sys.hamiltonian(s)?;
        if (h - energy).abs() > 1e-8 * (1.0 + energy.abs()) {
            return Err(Error::Precondition(format!(
                "seeds are not on a common level: H = {h} vs {energy}"
            )));
        }
    }
    let field = sys.newton_field()?;
    let opts = opts.unwrap_or_else(|| IntegrateOptions::adaptive(span, 1e-10));
    let mut members = Vec::new();
    let mut failures = Vec::new();
    for (param, seed) in seeds {
        match integrate(sys, &field, seed, &opts) {
            Ok(traj) => {
                let h_drift = traj
                    .samples
                    .iter()
                    .map(|s| (s.energy - energy).abs())
                    .fold(0.0, f64::max);
                members.push(Characteristic {
                    param: *param,
                    traj,
                    h_drift,
                });
            }
            Err(e) => failures.push((*param, e)),
        }
    }
    Ok(CharacteristicBundle {
        energy,
        members,
        failures,
    })
}

/// Isochrone of the action: per-characteristic linear interpolation to
/// `S = s`, with the interpolated state velocity (the front normal
/// direction).
#[derive(Clone, Debug)]
pub struct Wavefront {
    pub energy: f64,
    pub action_value: f64,
    pub seed_params: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// Members whose sampled action range does not contain `s`.
    pub skipped: Vec<usize>,
}

pub fn wavefront(bundle: &CharacteristicBundle, s: f64) -> Result<Wavefront> {
    let mut front = Wavefront {
        energy: bundle.energy,
        action_value: s,
        seed_params: Vec::new(),
        points: Vec::new(),
        velocities: Vec::new(),
        skipped: Vec::new(),
    };
    for (idx, member) in bundle.members.iter().enumerate() {
        let samples = &member.traj.samples;
        let first = samples.first().map(|q| q.action).unwrap_or(0.0);
        let last = samples.last().map(|q| q.action).unwrap_or(0.0);
        if s < first || s > last {
            front.skipped.push(idx);
            continue;
        }
        let k = match samples.binary_search_by(|q| q.action.partial_cmp(&s).expect("finite action"))
        {
            Ok(k) => k.min(samples.len() - 1),
            Err(k) => k.saturating_sub(1),
        };
        let a = &samples[k];
        if a.action == s || k + 1 == samples.len() {
            front.points.push(a.state.x.clone());
            front.velocities.push(a.state.v.clone());
        } else {
            let b = &samples[k + 1];
            let w = (s - a.action) / (b.action - a.action);
            front.points.push(
                a.state
                    .x
                    .iter()
                    .zip(&b.state.x)
                    .map(|(p, q)| p + w * (q - p))
                    .collect(),
            );
            front.velocities.push(
                a.state
                    .v
                    .iter()
                    .zip(&b.state.v)
                    .map(|(p, q)| p + w * (q - p))
                    .collect(),
            );
        }
        front.seed_params.push(member.param);
    }
    Ok(front)
}

/// Wave speed `E / sqrt(2(E-U))` and particle speed `sqrt(2(E-U))` at a
/// potential value.
pub fn speeds(u_val: f64, energy: f64) -> Result<(f64, f64)> {
    let t = energy - u_val;
    if t <= 0.0 {
        return Err(Error::Precondition(format!(
            "energy {energy} does not exceed the potential {u_val}"
        )));
    }
    let particle = (2.0 * t).sqrt();
    Ok((energy / particle, particle))
}

/// Cycle functionals of a closed orbit.
#[derive(Clone, Copy, Debug)]
pub struct Cycle {
    /// Action around the cycle.
    pub action: f64,
    /// Period in the canonical parameter (the duration).
    pub period: f64,
    /// Wave time around the cycle, `S/E`; absent on the zero level.
    pub tau: Option<f64>,
}

const RETURN_TOL: f64 = 1e-6;

/// Detects the first return of the orbit through `s0` to its seed in phase
/// space and accumulates the cycle action. The return event is refined by
/// bisection on the derivative of the squared phase distance.
pub fn cycle_action(sys: &MechSystem, energy: f64, s0: &State, max_span: f64) -> Result<Cycle> {
    let h = sys.hamiltonian(s0)?;
    if (h - energy).abs() > 1e-9 * (1.0 + energy.abs()) {
        return Err(Error::Precondition(format!(
            "seed is not on the requested level: H = {h}, E = {energy}"
        )));
    }
    let field = sys.newton_field()?;
    let opts = IntegrateOptions {
        track_time_length: false,
        ..IntegrateOptions::adaptive(max_span, 1e-12)
    };
    let traj = integrate(sys, &field, s0, &opts)?;
    let n = sys.dim();
    let dist2 = |st: &State| -> f64 {
        let mut d = 0.0;
        for i in 0..n {
            d += (st.x[i] - s0.x[i]).powi(2) + (st.v[i] - s0.v[i]).powi(2);
        }
        d
    };
    let dist2_dot = |st: &State| -> Result<f64> {
        let mut a = vec![0.0; n];
        field.accel(&st.x, &st.v, &mut a)?;
        let mut d = 0.0;
        for i in 0..n {
            d += 2.0 * (st.x[i] - s0.x[i]) * st.v[i] + 2.0 * (st.v[i] - s0.v[i]) * a[i];
        }
        Ok(d)
    };
    let samples = &traj.samples;
    for k in 1..samples.len() - 1 {
        let gd0 = dist2_dot(&samples[k].state)?;
        let gd1 = dist2_dot(&samples[k + 1].state)?;
        if !(gd0 <= 0.0 && gd1 > 0.0) {
            continue;
        }
        // bisect the minimum of the squared distance inside this step
        let mut lo = 0.0;
        let mut hi = samples[k + 1].lambda - samples[k].lambda;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let probe = resume(sys, &field, &samples[k], mid, 32)?;
            if dist2_dot(&probe.state)? <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 * samples[k + 1].lambda.max(1.0) {
                break;
            }
        }
        let refined = resume(sys, &field, &samples[k], 0.5 * (lo + hi), 64)?;
        if dist2(&refined.state).sqrt() <= RETURN_TOL {
            let tau = if energy.abs() > 1e-300 {
                Some(refined.action / energy)
            } else {
                None
            };
            return Ok(Cycle {
                action: refined.action,
                period: refined.lambda,
                tau,
            });
        }
    }
    Err(Error::OrbitNotClosed {
        tol: RETURN_TOL,
        span: max_span,
    })
}

/// Central difference `[S(E+dE) - S(E-dE)] / (2 dE)` of the cycle action
/// together with the period at `E`. Orbits at the shifted levels reuse the
/// seed position with the speed rescaled onto the level.
pub fn dsde_estimate(
    sys: &MechSystem,
    energy: f64,
    delta_e: f64,
    s0: &State,
    max_span: f64,
) -> Result<(f64, f64)> {
    if delta_e <= 0.0 {
        return Err(Error::Precondition(
            "energy increment must be positive".into(),
        ));
    }
    let period = cycle_action(sys, energy, s0, max_span)?.period;
    let u0 = match sys.potential() {
        Some(u) => u.eval(&s0.x)?,
        None => 0.0,
    };
    let t0 = energy - u0;
    if t0 <= 0.0 {
        return Err(Error::Precondition(
            "seed kinetic energy must be positive".into(),
        ));
    }
    let seed_at = |e: f64| -> Result<State> {
        let t = e - u0;
        if t <= 0.0 {
            return Err(Error::Precondition(format!(
                "no kinetic energy left at level {e}"
            )));
        }
        let scale = (t / t0).sqrt();
        Ok(State::new(
            s0.x.clone(),
            s0.v.iter().map(|v| v * scale).collect(),
        ))
    };
    let s_plus = cycle_action(sys, energy + delta_e, &seed_at(energy + delta_e)?, max_span)?.action;
    let s_minus =
        cycle_action(sys, energy - delta_e, &seed_at(energy - delta_e)?, max_span)?.action;
    Ok(((s_plus - s_minus) / (2.0 * delta_e), period))
}

/// Relative error of the action-derivative estimate against the period.
pub fn dsde_check(
    sys: &MechSystem,
    energy: f64,
    delta_e: f64,
    s0: &State,
    max_span: f64,
) -> Result<f64> {
    let (estimate, period) = dsde_estimate(sys, energy, delta_e, s0, max_span)?;
    Ok((estimate - period).abs() / period.abs())
}
