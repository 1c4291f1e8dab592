//! Named verification criteria covering the toolkit's quantitative claims:
//! the Kepler period/action laws, the action-energy derivative, projection
//! invariance of the duration, the time-constraint and Hertz reductions, the
//! quantization identities, the kappa correction and the grid-level quantum
//! checks. Each criterion pins its tolerances and reports one pass/fail
//! line; the `verify` subcommand and the acceptance test target both run
//! this list.

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::dynamics::{
    extend_state, hertz_reduce, integrate, momentum_p0, project_trajectory, IntegrateOptions,
    MechSystem, SecondOrderField, State,
};
use crate::error::Result;
use crate::expr::{parse, Expression};
use crate::geometry::MetricField;
use crate::hamjac::{self, seed_conormal, InitialManifold};
use crate::multi_index::MultiIndex;
use crate::quantize::{self, dequantize, quantize, schrodinger_operator, symbol, SymTensorField};
use crate::schrodgrid::{discretize, eigensolve, evolve_cn, Grid1D, WaveFunction};

#[derive(Clone, Debug)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type CriterionFn = fn() -> Result<String>;

pub const CRITERIA: [(usize, &str, CriterionFn); 11] = [
    (1, "kepler-period-law", kepler_period_law),
    (2, "kepler-action-law", kepler_action_law),
    (3, "action-energy-derivative", action_energy_derivative),
    (
        4,
        "oscillator-period-coincidence",
        oscillator_period_coincidence,
    ),
    (5, "projection-duration", projection_duration),
    (6, "time-constraint-projection", time_constraint_projection),
    (7, "hertz-reduction", hertz_reduction),
    (8, "quantization-identities", quantization_identities),
    (9, "kappa-identities", kappa_identities),
    (10, "grid-quantum-checks", grid_quantum_checks),
    (11, "de-broglie-split", de_broglie_split),
];

pub fn run_criterion(id: usize) -> Option<CriterionOutcome> {
    CRITERIA
        .iter()
        .find(|(cid, _, _)| *cid == id)
        .map(|(cid, name, f)| match f() {
            Ok(detail) => CriterionOutcome {
                id: *cid,
                name,
                passed: true,
                detail,
            },
            Err(e) => CriterionOutcome {
                id: *cid,
                name,
                passed: false,
                detail: e.to_string(),
            },
        })
}

pub fn run_all() -> Vec<CriterionOutcome> {
    CRITERIA
        .iter()
        .map(|(id, _, _)| run_criterion(*id).expect("criterion ids are fixed"))
        .collect()
}

fn check(cond: bool, msg: String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(crate::error::Error::Precondition(msg))
    }
}

fn flat2() -> MetricField {
    MetricField::flat(vec!["x".into(), "y".into()]).expect("flat plane")
}

fn kepler() -> MechSystem {
    MechSystem::conservative(
        flat2(),
        parse("-1/sqrt(x^2 + y^2)", &["x", "y"]).expect("kepler potential"),
    )
}

fn oscillator_1d() -> MechSystem {
    MechSystem::conservative(
        MetricField::flat(vec!["x".into()]).expect("line"),
        parse("x^2/2", &["x"]).expect("oscillator potential"),
    )
}

/// Elliptic seed on the level `H = e`: perihelion-side position with a
/// tangential velocity.
fn kepler_seed(e: f64) -> State {
    let a = -1.0 / (2.0 * e);
    let r0 = 0.8 * a;
    let v0 = (2.0 * (e + 1.0 / r0)).sqrt();
    State::new(vec![r0, 0.0], vec![0.0, v0])
}

fn kepler_span(e: f64) -> f64 {
    2.5 * 2.0 * std::f64::consts::PI * (-2.0 * e).powf(-1.5)
}

fn kepler_period_law() -> Result<String> {
    let sys = kepler();
    let energies = [-0.5, -0.25, -0.125];
    let mut periods = Vec::new();
    for &e in &energies {
        let cycle = hamjac::cycle_action(&sys, e, &kepler_seed(e), kepler_span(e))?;
        periods.push(cycle.period);
    }
    let consts: Vec<f64> = energies
        .iter()
        .zip(&periods)
        .map(|(e, t)| t * t * (-e).powi(3))
        .collect();
    let mean = consts.iter().sum::<f64>() / consts.len() as f64;
    for c in &consts {
        check(
            (c - mean).abs() / mean <= 1e-4,
            format!("T^2 (-E)^3 not constant: {consts:?}"),
        )?;
    }
    // least-squares slope of log T against log(-E)
    let xs: Vec<f64> = energies.iter().map(|e| (-e).ln()).collect();
    let ys: Vec<f64> = periods.iter().map(|t| t.ln()).collect();
    let xm = xs.iter().sum::<f64>() / 3.0;
    let ym = ys.iter().sum::<f64>() / 3.0;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xm) * (y - ym))
        .sum::<f64>()
        / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
    check(
        (slope + 1.5).abs() <= 1e-3,
        format!("log-log slope {slope} is not -3/2"),
    )?;
    Ok(format!(
        "T^2(-E)^3 = {mean:.6e} across {energies:?}; slope {slope:.6}"
    ))
}

fn kepler_action_law() -> Result<String> {
    let sys = kepler();
    let energies = [-0.5, -0.25, -0.125];
    let mut consts = Vec::new();
    let mut details = Vec::new();
    for &e in &energies {
        let cycle = hamjac::cycle_action(&sys, e, &kepler_seed(e), kepler_span(e))?;
        let s = cycle.action;
        let t = cycle.period;
        let tau = cycle.tau.expect("nonzero level");
        consts.push(s * (-e).sqrt());
        check(
            (tau + 2.0 * t).abs() <= 1e-3 * (2.0 * t),
            format!("S/E = {tau} is not -2T = {}", -2.0 * t),
        )?;
        let t0 = tau - 2.0 * t;
        check(
            (t0 + 4.0 * t).abs() <= 1e-3 * (4.0 * t),
            format!("tau - 2t = {t0} is not -4T = {}", -4.0 * t),
        )?;
        details.push(format!("E={e}: S sqrt(-E)={:.6}", s * (-e).sqrt()));
    }
    let mean = consts.iter().sum::<f64>() / consts.len() as f64;
    for c in &consts {
        check(
            (c - mean).abs() / mean <= 1e-3,
            format!("S sqrt(-E) not constant: {consts:?}"),
        )?;
    }
    Ok(details.join("; "))
}

fn action_energy_derivative() -> Result<String> {
    let sys = kepler();
    let e = -0.5;
    let rel = hamjac::dsde_check(&sys, e, 1e-3, &kepler_seed(e), kepler_span(e))?;
    check(
        rel <= 1e-3,
        format!("Kepler dS/dE misses the period by {rel:.3e} relative"),
    )?;

    let ho = oscillator_1d();
    let e0 = 0.5;
    let s0 = State::new(vec![0.0], vec![1.0]);
    let (estimate, _) = hamjac::dsde_estimate(&ho, e0, 1e-3, &s0, 20.0)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    check(
        (estimate - two_pi).abs() <= 1e-6,
        format!("oscillator dS/dE = {estimate} is not 2 pi within 1e-6"),
    )?;
    Ok(format!(
        "Kepler relative error {rel:.3e}; oscillator dS/dE = {estimate:.12}"
    ))
}

fn oscillator_period_coincidence() -> Result<String> {
    let sys = oscillator_1d();
    let mut details = Vec::new();
    for e in [0.5_f64, 2.0] {
        let s0 = State::new(vec![0.0], vec![(2.0 * e).sqrt()]);
        let cycle = hamjac::cycle_action(&sys, e, &s0, 20.0)?;
        let tau = cycle.tau.expect("nonzero level");
        check(
            (tau - cycle.period).abs() <= 1e-6 * cycle.period,
            format!("E={e}: tau = {tau} differs from T = {}", cycle.period),
        )?;
        details.push(format!(
            "E={e}: |tau - T| = {:.2e}",
            (tau - cycle.period).abs()
        ));
    }
    Ok(details.join("; "))
}

fn projection_duration() -> Result<String> {
    let free = MechSystem::geodesic(flat2());
    let field = free.newton_field()?;
    let traj = integrate(
        &free,
        &field,
        &State::new(vec![0.0, 0.0], vec![1.0, 0.3]),
        &IntegrateOptions::adaptive(4.0, 1e-10),
    )?;
    let proj = project_trajectory(&free, &traj, &[0])?;
    let d_free = (traj.last().duration - proj.last().duration).abs();
    check(
        d_free <= 1e-8,
        format!("free projection changed the duration by {d_free:.3e}"),
    )?;

    let ho = MechSystem::conservative(
        flat2(),
        parse("(x^2 + y^2)/2", &["x", "y"]).expect("potential"),
    );
    let field = ho.newton_field()?;
    // span short of the x turning point
    let traj = integrate(
        &ho,
        &field,
        &State::new(vec![0.0, 0.2], vec![1.0, 0.4]),
        &IntegrateOptions::adaptive(1.2, 1e-10),
    )?;
    let proj = project_trajectory(&ho, &traj, &[0])?;
    let d_ho = (traj.last().duration - proj.last().duration).abs();
    check(
        d_ho <= 1e-8,
        format!("oscillator projection changed the duration by {d_ho:.3e}"),
    )?;
    Ok(format!(
        "duration differences: free {d_free:.2e}, oscillator {d_ho:.2e}"
    ))
}

fn time_constraint_projection() -> Result<String> {
    // product metric with g00 = -2U over a flat plane
    let refs = ["t", "x", "y"];
    let u_text = "(x^2 + 2*y^2)/2 + 0.3";
    let g00 = parse(&format!("-2*({u_text})"), &refs).expect("g00");
    let ext = MechSystem::geodesic(
        MetricField::from_diag(
            vec!["t".into(), "x".into(), "y".into()],
            vec![g00, Expression::one(), Expression::one()],
        )
        .expect("product metric"),
    );
    let tau = vec![Expression::one(), Expression::zero(), Expression::zero()];
    let constrained = ext.time_constrained_field(&tau)?;
    let base =
        MechSystem::conservative(flat2(), parse(u_text, &["x", "y"]).expect("U")).newton_field()?;
    let mut rng = StdRng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let v = [1.0, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let mut a_ext = [0.0; 3];
        constrained.accel(&x, &v, &mut a_ext)?;
        let mut a_red = [0.0; 2];
        base.accel(&x[1..], &v[1..], &mut a_red)?;
        for k in 0..2 {
            worst = worst.max((a_ext[k + 1] - a_red[k]).abs());
        }
    }
    check(
        worst <= 1e-10,
        format!("constrained field deviates from the conservative one by {worst:.3e}"),
    )?;
    Ok(format!(
        "max spatial deviation over 100 states: {worst:.3e}"
    ))
}

fn hertz_reduction() -> Result<String> {
    let refs = ["t", "x", "y"];
    let g00 = parse("-sqrt(x^2 + y^2)/2", &refs).expect("g00");
    let ext = MechSystem::geodesic(
        MetricField::from_diag(
            vec!["t".into(), "x".into(), "y".into()],
            vec![g00, Expression::one(), Expression::one()],
        )
        .expect("extended metric"),
    );
    let p0 = 1.0;
    let samples = vec![vec![0.0, 1.0, 0.0]];
    let reduced = hertz_reduce(&ext, 0, p0, &samples)?;
    let s_red = State::new(vec![1.0, 0.0], vec![0.0, 1.1]);
    let s_ext = extend_state(&ext, 0, p0, &s_red, 0.0)?;
    let opts = IntegrateOptions::fixed(10.0, 1e-3);
    let t_ext = integrate(&ext, &ext.newton_field()?, &s_ext, &opts)?;
    let t_red = integrate(&reduced, &reduced.newton_field()?, &s_red, &opts)?;
    let mut drift: f64 = 0.0;
    let mut mismatch: f64 = 0.0;
    for (a, b) in t_ext.samples.iter().zip(&t_red.samples) {
        drift = drift.max((momentum_p0(&ext, 0, &a.state)? - p0).abs());
        for k in 0..2 {
            mismatch = mismatch.max((a.state.x[k + 1] - b.state.x[k]).abs());
            mismatch = mismatch.max((a.state.v[k + 1] - b.state.v[k]).abs());
        }
    }
    check(drift <= 1e-9, format!("p0 drifts by {drift:.3e}"))?;
    check(
        mismatch <= 1e-6,
        format!("projected flow deviates by {mismatch:.3e}"),
    )?;
    Ok(format!(
        "p0 drift {drift:.2e}; projected-vs-reduced deviation {mismatch:.2e}"
    ))
}

fn random_poly(rng: &mut StdRng, dim: usize) -> Expression {
    let mut e = Expression::constant(rng.gen_range(-1.0..1.0));
    for i in 0..dim {
        e = e.add(&Expression::constant(rng.gen_range(-1.0..1.0)).mul(&Expression::coord(i)));
        e = e.add(
            &Expression::constant(rng.gen_range(-0.5..0.5))
                .mul(&Expression::coord(i))
                .mul(&Expression::coord((i + 1) % dim)),
        );
    }
    e
}

fn quantization_identities() -> Result<String> {
    let hbar = 1.0;
    let polar = MetricField::from_diag(
        vec!["r".into(), "theta".into()],
        vec![
            Expression::one(),
            parse("r^2", &["r", "theta"]).expect("polar"),
        ],
    )
    .expect("polar metric");
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst_lap: f64 = 0.0;
    let mut worst_round: f64 = 0.0;
    let mut worst_symbol: f64 = 0.0;
    for g in [flat2(), polar] {
        let phi = SymTensorField::metric_contravariant(&g)?;
        let op = quantize(&phi, &g, hbar)?;
        let lap = g.laplacian()?;
        for _ in 0..20 {
            let f = random_poly(&mut rng, 2);
            let p = [rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0)];
            let a = op.apply(&f).re.eval(&p)?;
            let b = lap.apply(&f).re.eval(&p)?;
            worst_lap = worst_lap.max((a + hbar * hbar * b).abs());
        }
        // sigma^2 of -hbar^2 Delta recovers the contravariant metric
        let sym = symbol(&op, 2)?;
        let inv = g.inverse()?;
        for _ in 0..20 {
            let p = [rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0)];
            for alpha in MultiIndex::enumerate(2, 2) {
                let t = alpha.tuple();
                worst_symbol =
                    worst_symbol.max((sym.get(&alpha).eval(&p)? - inv[t[0]][t[1]].eval(&p)?).abs());
            }
        }
        // round trips on a random inhomogeneous tensor of orders 0..3
        let mut tensor = SymTensorField::new(2);
        for r in 0..=3u32 {
            for alpha in MultiIndex::enumerate(2, r) {
                tensor.set(alpha, random_poly(&mut rng, 2));
            }
        }
        let op_t = quantize(&tensor, &g, hbar)?;
        let back = dequantize(&op_t, &g, hbar)?;
        let op_round = quantize(&back, &g, hbar)?;
        let probe = parse("sin(r) + r^2*theta", &["r", "theta"]).expect("probe");
        for _ in 0..100 {
            let p = [rng.gen_range(0.6..2.0), rng.gen_range(-1.0..1.0)];
            for r in 0..=3u32 {
                for alpha in MultiIndex::enumerate(2, r) {
                    worst_round = worst_round
                        .max((tensor.get(&alpha).eval(&p)? - back.get(&alpha).eval(&p)?).abs());
                }
            }
            let u = op_t.apply(&probe);
            let v = op_round.apply(&probe);
            worst_round = worst_round.max((u.re.eval(&p)? - v.re.eval(&p)?).abs());
            worst_round = worst_round.max((u.im.eval(&p)? - v.im.eval(&p)?).abs());
        }
    }
    check(
        worst_lap <= 1e-10,
        format!("metric quantization deviates from the Laplacian by {worst_lap:.3e}"),
    )?;
    check(
        worst_round <= 1e-10,
        format!("round-trip identity off by {worst_round:.3e}"),
    )?;
    check(
        worst_symbol <= 1e-12,
        format!("leading symbol off by {worst_symbol:.3e}"),
    )?;
    Ok(format!(
        "laplacian match {worst_lap:.2e}; round trips {worst_round:.2e}; symbol {worst_symbol:.2e}"
    ))
}

fn kappa_identities() -> Result<String> {
    let refs = ["t", "x"];
    // static adapted metric
    let static_g = MetricField::from_diag(
        vec!["t".into(), "x".into()],
        vec![
            parse("-(1 + x^2)", &refs).expect("g00"),
            parse("2 + x^2/3", &refs).expect("gxx"),
        ],
    )
    .expect("static metric");
    let samples: Vec<Vec<f64>> = vec![vec![0.0, 0.4], vec![1.0, -0.7], vec![2.5, 1.2]];
    let k_static = quantize::kappa(&static_g, 0, &samples)?;
    let mut worst_static: f64 = 0.0;
    for p in &samples {
        worst_static = worst_static.max(k_static.eval(p)?.abs());
    }
    check(
        worst_static <= 1e-12,
        format!("static kappa reaches {worst_static:.3e}"),
    )?;

    // time-dependent spatial block: identity checked at 100 random points
    let expanding = MetricField::from_diag(
        vec!["t".into(), "x".into()],
        vec![
            Expression::constant(-1.0),
            parse("exp(t)", &refs).expect("gxx"),
        ],
    )
    .expect("expanding metric");
    let mut rng = StdRng::seed_from_u64(90);
    let random_samples: Vec<Vec<f64>> = (0..100)
        .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    // kappa() verifies the Christoffel-contraction identity at every point
    let _ = quantize::kappa(&expanding, 0, &random_samples)?;

    // non-commutation witness
    let mut t = SymTensorField::new(2);
    t.set(MultiIndex(vec![2, 0]), Expression::one());
    let p0sq = quantize(&t, &expanding, 1.0)?;
    let lap = quantize(
        &SymTensorField::metric_contravariant(&expanding)?,
        &expanding,
        1.0,
    )?;
    let f = parse("x^2*t + sin(x)", &refs).expect("probe");
    let comm = p0sq
        .apply(&lap.apply(&f).re)
        .re
        .sub(&lap.apply(&p0sq.apply(&f).re).re);
    let witness = comm.eval(&[0.4, 0.9])?;
    check(
        witness.abs() > 1e-6,
        format!("commutator witness too small: {witness:.3e}"),
    )?;
    Ok(format!(
        "static kappa {worst_static:.2e}; identity checked at 100 points; commutator witness {witness:.3e}"
    ))
}

fn grid_quantum_checks() -> Result<String> {
    let grid = Grid1D::new(1024, 20.0)?;
    let hbar = 1.0;
    let op = schrodinger_operator(&oscillator_1d(), hbar)?;
    let mat = discretize(&op, &grid)?;
    let pairs = eigensolve(&mat, 1, &grid)?;
    let e0 = pairs[0].value;
    check(
        (e0 - 0.5).abs() / 0.5 <= 1e-3,
        format!("ground level {e0} misses 0.5 by more than 0.1%"),
    )?;

    // Crank-Nicolson: norm drift and phase over t = 2 pi in 10^4 steps
    let psi0 = WaveFunction::from_eigenvector(grid, &pairs[0]).normalized();
    let steps = 10_000;
    let t_total = 2.0 * std::f64::consts::PI;
    let dt = t_total / steps as f64;
    let (_, records) = evolve_cn(&mat, &psi0, dt, steps, hbar)?;
    let mut drift: f64 = 0.0;
    for r in &records {
        drift = drift.max((r.norm - 1.0).abs());
    }
    check(drift <= 1e-10, format!("norm drifts by {drift:.3e}"))?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let phase = records
        .last()
        .expect("records")
        .overlap
        .arg()
        .rem_euclid(two_pi);
    let expected = (-two_pi * e0).rem_euclid(two_pi);
    let mut phase_err = (phase - expected).abs();
    phase_err = phase_err.min(two_pi - phase_err);
    check(
        phase_err <= 1e-3,
        format!("phase error {phase_err:.3e} after one period"),
    )?;

    // coherent state against the classical oracle
    let x0 = 2.0;
    let coherent = WaveFunction::from_fn(grid, |x| {
        Complex64::new((-0.5 * (x - x0) * (x - x0)).exp(), 0.0)
    })
    .normalized();
    let steps_c = 4000;
    let dt_c = two_pi / steps_c as f64;
    let (_, rec_c) = evolve_cn(&mat, &coherent, dt_c, steps_c, hbar)?;
    let sys = oscillator_1d();
    let field = sys.newton_field()?;
    let opts = IntegrateOptions {
        track_time_length: false,
        ..IntegrateOptions::fixed(two_pi, dt_c)
    };
    let classical = integrate(&sys, &field, &State::new(vec![x0], vec![0.0]), &opts)?;
    let mut center_err: f64 = 0.0;
    for (r, c) in rec_c.iter().zip(&classical.samples) {
        center_err = center_err.max((r.x_mean - c.state.x[0]).abs());
    }
    check(
        center_err <= 1e-2,
        format!("coherent center deviates by {center_err:.3e}"),
    )?;
    Ok(format!(
        "E0 = {e0:.6}; norm drift {drift:.2e}; phase error {phase_err:.2e}; center deviation {center_err:.2e}"
    ))
}

fn de_broglie_split() -> Result<String> {
    // group/phase velocity split at fixed potential
    let u_val = 0.7;
    let e = 1.9;
    let de = 1e-4;
    let wavenumber = |energy: f64| -> Result<f64> { Ok(energy / hamjac::speeds(u_val, energy)?.0) };
    let fd = 2.0 * de / (wavenumber(e + de)? - wavenumber(e - de)?);
    let particle = hamjac::speeds(u_val, e)?.1;
    let split_err = (fd - particle).abs();
    check(
        split_err <= 1e-6,
        format!("dE/d(E/v) = {fd} differs from u = {particle}"),
    )?;

    // free bundles: wave time advances twice as fast as particle time
    let free = MechSystem::geodesic(flat2());
    let energy = 0.8;
    let seeds = seed_conormal(&InitialManifold::Point(vec![0.0, 0.0]), &free, energy, 16)?;
    let bundle = hamjac::propagate(&seeds, &free, 2.0, None)?;
    check(
        bundle.failures.is_empty(),
        "bundle propagation had failures".to_string(),
    )?;
    let mut worst: f64 = 0.0;
    for m in &bundle.members {
        let last = m.traj.last();
        let rate = last.action / energy / last.duration;
        worst = worst.max((rate - 2.0).abs());
    }
    check(
        worst <= 1e-9,
        format!("d tau / dt deviates from 2 by {worst:.3e}"),
    )?;
    Ok(format!(
        "de Broglie split error {split_err:.2e}; d tau/dt deviation {worst:.2e}"
    ))
}
