//! Fixed-step RK4 and adaptive Dormand-Prince RK45 integration of
//! second-order fields, with per-step Simpson accumulation of the action,
//! duration and length functionals (midpoints from cubic Hermite
//! interpolation, matching the integrator order).

use super::{MechSystem, Sample, SecondOrderField, State, Trajectory};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct IntegrateOptions {
    pub span: f64,
    /// Fixed step size, or the initial step when adaptive.
    pub step: f64,
    pub adaptive: bool,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// When set, duration and length are accumulated and `|2T|` below the
    /// regularity floor aborts with a located error; action is always
    /// accumulated.
    pub track_time_length: bool,
    pub max_steps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            span: 10.0,
            step: 1e-2,
            adaptive: true,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            track_time_length: true,
            max_steps: 4_000_000,
        }
    }
}

impl IntegrateOptions {
    pub fn adaptive(span: f64, rel_tol: f64) -> Self {
        IntegrateOptions {
            span,
            rel_tol,
            abs_tol: rel_tol * 1e-2,
            ..Default::default()
        }
    }

    pub fn fixed(span: f64, step: f64) -> Self {
        IntegrateOptions {
            span,
            step,
            adaptive: false,
            ..Default::default()
        }
    }
}

struct Derivs<'a> {
    field: &'a dyn SecondOrderField,
    n: usize,
}

impl<'a> Derivs<'a> {
    fn eval(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.n;
        out[..n].copy_from_slice(&y[n..]);
        let (x, v) = y.split_at(n);
        let (_, acc) = out.split_at_mut(n);
        self.field.accel(x, v, acc)
    }
}

struct Accumulators<'a> {
    sys: &'a MechSystem,
    track: bool,
    action: f64,
    duration: f64,
    length: f64,
}

impl<'a> Accumulators<'a> {
    fn theta_dot(&self, y: &[f64]) -> Result<f64> {
        let n = self.sys.dim();
        self.sys
            .metric()
            .inner_product_at(&y[..n], &y[n..], &y[n..])
    }

    /// Simpson update over one accepted step; the midpoint state comes from
    /// cubic Hermite interpolation of the endpoint states and derivatives.
    fn step(
        &mut self,
        lambda: f64,
        h: f64,
        y0: &[f64],
        y1: &[f64],
        f0: &[f64],
        f1: &[f64],
    ) -> Result<()> {
        let ym: Vec<f64> = (0..y0.len())
            .map(|i| 0.5 * (y0[i] + y1[i]) + h / 8.0 * (f0[i] - f1[i]))
            .collect();
        let td0 = self.theta_dot(y0)?;
        let tdm = self.theta_dot(&ym)?;
        let td1 = self.theta_dot(y1)?;
        self.action += h / 6.0 * (td0 + 4.0 * tdm + td1);
        if self.track {
            for td in [td0, tdm, td1] {
                if td.abs() < self.sys.eps_reg {
                    return Err(Error::LightQuadric { lambda });
                }
            }
            // theta/theta-dot pulled onto a solution curve is identically 1
            // away from the light quadric, so its Simpson sum is the step
            self.duration += h;
            self.length += h / 6.0 * (td0.abs().sqrt() + 4.0 * tdm.abs().sqrt() + td1.abs().sqrt());
        } else {
            self.duration = f64::NAN;
            self.length = f64::NAN;
        }
        Ok(())
    }
}

fn split_state(n: usize, y: &[f64]) -> State {
    State::new(y[..n].to_vec(), y[n..].to_vec())
}

/// Integrates the field from `s0` over `opts.span`, recording one sample per
/// accepted step.
pub fn integrate(
    sys: &MechSystem,
    field: &dyn SecondOrderField,
    s0: &State,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    if opts.span <= 0.0 {
        return Err(Error::Precondition("span must be positive".into()));
    }
    let n = field.dim();
    let d = Derivs { field, n };
    let mut acc = Accumulators {
        sys,
        track: opts.track_time_length,
        action: 0.0,
        duration: 0.0,
        length: 0.0,
    };
    let mut y = s0.tm_point();
    let mut f0 = vec![0.0; 2 * n];
    d.eval(&y, &mut f0)?;
    let mut lambda = 0.0;
    let mut samples = vec![Sample {
        lambda,
        state: s0.clone(),
        action: 0.0,
        duration: if opts.track_time_length {
            0.0
        } else {
            f64::NAN
        },
        length: if opts.track_time_length {
            0.0
        } else {
            f64::NAN
        },
        energy: sys.hamiltonian(s0)?,
    }];
    // fixed mode lands exactly on the endpoint with a whole number of steps
    let fixed_steps = if opts.adaptive {
        0
    } else {
        ((opts.span / opts.step).round() as usize).max(1)
    };
    let fixed_h = opts.span / fixed_steps.max(1) as f64;
    let mut h = if opts.adaptive {
        opts.step.min(opts.span).max(1e-12)
    } else {
        fixed_h
    };
    let mut steps = 0usize;
    while if opts.adaptive {
        lambda < opts.span
    } else {
        steps < fixed_steps
    } {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Precondition(format!(
                "step budget {} exhausted",
                opts.max_steps
            )));
        }
        if opts.adaptive {
            let remaining = opts.span - lambda;
            if remaining <= 4.0 * f64::EPSILON * opts.span.max(1.0) {
                break;
            }
            h = h.min(remaining);
        }
        let (y1, f1, err) = if opts.adaptive {
            let (y1, f1, err) = dopri5_step(&d, &y, &f0, h)?;
            (y1, f1, Some(err))
        } else {
            let y1 = rk4_step(&d, &y, &f0, h)?;
            let mut f1 = vec![0.0; 2 * n];
            d.eval(&y1, &mut f1)?;
            (y1, f1, None)
        };
        if let Some(err) = err {
            let mut norm2 = 0.0;
            for i in 0..2 * n {
                let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y1[i].abs());
                let e = err[i] / scale;
                norm2 += e * e;
            }
            let err_norm = (norm2 / (2 * n) as f64).sqrt();
            if err_norm > 1.0 {
                h *= (0.9 * err_norm.powf(-0.2)).clamp(0.2, 1.0);
                if h < 1e-14 * opts.span.max(1.0) {
                    return Err(Error::Precondition("adaptive step size underflow".into()));
                }
                continue;
            }
            acc.step(lambda, h, &y, &y1, &f0, &f1)?;
            lambda += h;
            y = y1;
            f0 = f1;
            h *= (0.9 * err_norm.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        } else {
            acc.step(lambda, h, &y, &y1, &f0, &f1)?;
            lambda = steps as f64 * fixed_h;
            y = y1;
            f0 = f1;
        }
        let state = split_state(n, &y);
        samples.push(Sample {
            lambda,
            state: state.clone(),
            action: acc.action,
            duration: acc.duration,
            length: acc.length,
            energy: sys.hamiltonian(&state)?,
        });
    }
    Ok(Trajectory {
        names: sys.names().to_vec(),
        samples,
    })
}

/// Continues the flow from a recorded sample over `dlambda` with fixed RK4
/// substeps, carrying the accumulators. Used to refine event locations.
pub fn resume(
    sys: &MechSystem,
    field: &dyn SecondOrderField,
    from: &Sample,
    dlambda: f64,
    substeps: usize,
) -> Result<Sample> {
    if dlambda < 0.0 {
        return Err(Error::Precondition("resume only integrates forward".into()));
    }
    let n = field.dim();
    let d = Derivs { field, n };
    let mut acc = Accumulators {
        sys,
        track: !from.duration.is_nan(),
        action: from.action,
        duration: from.duration,
        length: from.length,
    };
    let mut y = from.state.tm_point();
    let mut lambda = from.lambda;
    if dlambda > 0.0 {
        let m = substeps.max(1);
        let h = dlambda / m as f64;
        let mut f0 = vec![0.0; 2 * n];
        let mut f1 = vec![0.0; 2 * n];
        d.eval(&y, &mut f0)?;
        for _ in 0..m {
            let y1 = rk4_step(&d, &y, &f0, h)?;
            d.eval(&y1, &mut f1)?;
            acc.step(lambda, h, &y, &y1, &f0, &f1)?;
            lambda += h;
            y = y1;
            std::mem::swap(&mut f0, &mut f1);
        }
    }
    let state = split_state(n, &y);
    let energy = sys.hamiltonian(&state)?;
    Ok(Sample {
        lambda,
        state,
        action: acc.action,
        duration: acc.duration,
        length: acc.length,
        energy,
    })
}

fn rk4_step(d: &Derivs, y: &[f64], f0: &[f64], h: f64) -> Result<Vec<f64>> {
    let m = y.len();
    let mut k2 = vec![0.0; m];
    let mut k3 = vec![0.0; m];
    let mut k4 = vec![0.0; m];
    let probe = |k: &[f64], c: f64| -> Vec<f64> { (0..m).map(|i| y[i] + c * h * k[i]).collect() };
    d.eval(&probe(f0, 0.5), &mut k2)?;
    d.eval(&probe(&k2, 0.5), &mut k3)?;
    d.eval(&probe(&k3, 1.0), &mut k4)?;
    Ok((0..m)
        .map(|i| y[i] + h / 6.0 * (f0[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// One Dormand-Prince 5(4) step; returns the 5th-order solution, its
/// derivative (FSAL) and the embedded error estimate.
#[allow(clippy::type_complexity)]
fn dopri5_step(
    d: &Derivs,
    y: &[f64],
    f0: &[f64],
    h: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let m = y.len();
    let mut k = vec![f0.to_vec()];
    for row in &A {
        let mut probe = y.to_vec();
        for (j, kj) in k.iter().enumerate() {
            if row[j] != 0.0 {
                for i in 0..m {
                    probe[i] += h * row[j] * kj[i];
                }
            }
        }
        let mut ki = vec![0.0; m];
        d.eval(&probe, &mut ki)?;
        k.push(ki);
    }
    // the 6th row of A is the 5th-order weight vector; k[6] is FSAL
    let y1: Vec<f64> = {
        let row = &A[5];
        (0..m)
            .map(|i| {
                let mut s = y[i];
                for j in 0..6 {
                    if row[j] != 0.0 {
                        s += h * row[j] * k[j][i];
                    }
                }
                s
            })
            .collect()
    };
    let f1 = k.pop().expect("seven stages");
    let mut err = vec![0.0; m];
    for i in 0..m {
        let mut y4 = y[i];
        for (j, kj) in k.iter().enumerate() {
            y4 += h * B4[j] * kj[i];
        }
        y4 += h * B4[6] * f1[i];
        err[i] = y1[i] - y4;
    }
    Ok((y1, f1, err))
}
