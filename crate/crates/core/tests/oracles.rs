//! Independent reference computations checked against the library.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vnslab::asymptotics::hminus1_distance;
use vnslab::diagnostics::{interpolation_constant, moment_interpolation_audit, PhaseHistogram};
use vnslab::flowmap::{
    exit_time_forward, flow, phase_jacobian, AnalyticField, ExitOutcome, FlowSnapshotSeries,
    PhaseState, VectorField, ZeroField,
};
use vnslab::fluid::{FluidParams, FluidSolver};
use vnslab::geometry::{Domain, Point};
use vnslab::grid::{CellField, MacGrid};
use vnslab::kinetic::{absorb, push_particles, ParticleEnsemble};
use vnslab::transport::w1_empirical;

mod common;
use common::{brute_force_assignment, hungarian, random_integer_measure, w1_oracle};

// ---------------------------------------------------------------- W1

#[test]
fn hungarian_oracle_agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let n = rng.random_range(1..=7);
        let cost: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
            .collect();
        assert!((hungarian(&cost) - brute_force_assignment(&cost)).abs() < 1e-12);
    }
}

#[test]
fn w1_empirical_matches_lp_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..20 {
        let dim = if case % 2 == 0 { 2 } else { 3 };
        let m = rng.random_range(1..=20);
        let n = rng.random_range(1..=20);
        let total = 40;
        let mu = random_integer_measure(&mut rng, m, total, dim);
        let nu = random_integer_measure(&mut rng, n, total, dim);
        let as_weights = |s: &[(Point, u32)]| -> Vec<(Point, f64)> {
            s.iter()
                .map(|(p, k)| (*p, *k as f64 / total as f64))
                .collect()
        };
        let got = w1_empirical(&as_weights(&mu), &as_weights(&nu)).unwrap();
        let want = w1_oracle(&mu, &nu, total);
        assert!(
            (got.cost - want).abs() <= 1e-8,
            "case {case}: {} vs {want}",
            got.cost
        );
        assert!((got.dual_value - want).abs() <= 1e-8);
    }
}

// ---------------------------------------------------------------- H^-1

fn sin_sin_hminus1(n: usize) -> f64 {
    let domain = Domain::unit(2);
    let solver = FluidSolver::new(&domain, FluidParams::new(vec![n, n], 0.01)).unwrap();
    let g = *solver.grid();
    let a = CellField::from_fn(g, |x| (PI * x[0]).sin() * (PI * x[1]).sin());
    let b = CellField::zeros(g);
    hminus1_distance(&solver, &a, &b).unwrap()
}

#[test]
fn hminus1_sin_sin_converges_at_second_order() {
    // -Δφ = sin πx sin πy gives φ = g / 2π², ‖∇φ‖² = ∫ φ g = 1 / 8π².
    let exact = 1.0 / (2.0 * PI * 2f64.sqrt());
    let e32 = (sin_sin_hminus1(32) - exact).abs();
    let e64 = (sin_sin_hminus1(64) - exact).abs();
    assert!(e32 < 5e-3 * exact, "{e32}");
    let order = (e32 / e64).log2();
    assert!(order > 1.8, "observed order {order}");
}

// ---------------------------------------------------------------- particles

#[test]
fn free_flight_matches_closed_form_for_any_step() {
    let domain = Domain::unit(2);
    for &dt in &[1e-3, 7e-3, 0.05] {
        let x0 = [0.41, 0.52, 0.0];
        let v0 = [0.03, -0.02, 0.0];
        let mut ens = ParticleEnsemble::from_states(2, &[(x0, v0, 1.0)]);
        for k in 0..100 {
            push_particles(&mut ens, &ZeroField, k as f64 * dt, dt);
            absorb(&mut ens, &domain);
        }
        let s = 100.0 * dt;
        for a in 0..2 {
            let x = x0[a] + v0[a] * (1.0 - (-s).exp());
            let v = v0[a] * (-s).exp();
            assert!((ens.x[0][a] - x).abs() < 1e-12);
            assert!((ens.v[0][a] - v).abs() < 1e-12);
        }
    }
}

#[test]
fn free_exit_time_matches_closed_form() {
    // x(s) = x0 + v0 (1 - e^{-s}) reaches the wall x = 1 at s = -ln(1 - (1 - x0)/v0).
    let domain = Domain::unit(2);
    let series = FlowSnapshotSeries::zero(&domain, 5.0, 0.01).unwrap();
    let z = PhaseState::new([0.6, 0.5, 0.0], [0.9, 0.0, 0.0]);
    let want = -(1.0 - 0.4 / 0.9f64).ln();
    match exit_time_forward(&series, 0.0, &z, 5.0).unwrap() {
        ExitOutcome::Exit { tau, state, .. } => {
            assert!((tau - want).abs() < 1e-9, "{tau} vs {want}");
            assert!((state.x[0] - 1.0).abs() < 1e-9);
        }
        other => panic!("expected an exit, got {other:?}"),
    }
    // slower than the distance: never leaves
    let z = PhaseState::new([0.6, 0.5, 0.0], [0.39, 0.0, 0.0]);
    assert!(!exit_time_forward(&series, 0.0, &z, 5.0).unwrap().exited());
}

fn swirl_series(domain: &Domain, amp: f64, dt: f64, steps: usize) -> FlowSnapshotSeries {
    let d = domain.clone();
    FlowSnapshotSeries::sample(domain, 0.0, dt, steps, move |t| {
        let a = amp * (-0.5 * t).exp();
        let f: Arc<dyn VectorField> = Arc::new(AnalyticField::new(&d, move |x: &Point| {
            [
                a * (PI * x[0]).sin() * (2.0 * PI * x[1]).sin(),
                -a * (2.0 * PI * x[0]).sin() * (PI * x[1]).sin(),
                0.0,
            ]
        }));
        f
    })
    .unwrap()
}

#[test]
fn jacobian_determinant_follows_drag_contraction() {
    let domain = Domain::unit(2);
    let series = swirl_series(&domain, 0.4, 0.01, 100);
    let z = PhaseState::new([0.35, 0.6, 0.0], [0.05, -0.1, 0.0]);
    for &s in &[0.25, 0.5, 1.0] {
        let st = phase_jacobian(&series, 0.0, s, &z).unwrap();
        let want = (-2.0 * s).exp();
        assert!(
            (st.det - want).abs() <= 1e-6 * want,
            "s={s}: {} vs {want}",
            st.det
        );
    }
}

fn fd_jacobian(series: &FlowSnapshotSeries, s: f64, z: &PhaseState, h: f64) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(4, 4);
    for c in 0..4 {
        let shift = |sign: f64| {
            let mut w = *z;
            if c < 2 {
                w.x[c] += sign * h;
            } else {
                w.v[c - 2] += sign * h;
            }
            flow(series, 0.0, s, &w).unwrap()
        };
        let (p, m) = (shift(1.0), shift(-1.0));
        for r in 0..4 {
            let (a, b) = if r < 2 {
                (p.x[r], m.x[r])
            } else {
                (p.v[r - 2], m.v[r - 2])
            };
            jac[(r, c)] = (a - b) / (2.0 * h);
        }
    }
    jac
}

#[test]
fn jacobian_matches_finite_differences_of_the_flow() {
    let domain = Domain::unit(2);
    let z = PhaseState::new([0.35, 0.6, 0.0], [0.05, -0.1, 0.0]);
    let mut errs = Vec::new();
    for &dt in &[0.02, 0.01] {
        let series = swirl_series(&domain, 0.4, dt, (1.0 / dt).round() as usize);
        let st = phase_jacobian(&series, 0.0, 1.0, &z).unwrap();
        let fd = fd_jacobian(&series, 1.0, &z, 1e-6);
        errs.push((&st.jacobian - &fd).amax() / fd.amax());
    }
    assert!(errs[1] < 1e-2, "{errs:?}");
    assert!(errs[1] < errs[0], "{errs:?}");
}

/// Classical RK4 on `Ẋ = V, V̇ = u(X) − V` with a fine fixed step.
fn rk4_reference(u: &dyn Fn(&Point) -> Point, z: PhaseState, s: f64, steps: usize) -> PhaseState {
    let h = s / steps as f64;
    let rhs = |x: &Point, v: &Point| -> (Point, Point) {
        let f = u(x);
        ([v[0], v[1], 0.0], [f[0] - v[0], f[1] - v[1], 0.0])
    };
    let (mut x, mut v) = (z.x, z.v);
    let comb = |a: &Point, b: &Point, c: f64| [a[0] + c * b[0], a[1] + c * b[1], 0.0];
    for _ in 0..steps {
        let (k1x, k1v) = rhs(&x, &v);
        let (k2x, k2v) = rhs(&comb(&x, &k1x, 0.5 * h), &comb(&v, &k1v, 0.5 * h));
        let (k3x, k3v) = rhs(&comb(&x, &k2x, 0.5 * h), &comb(&v, &k2v, 0.5 * h));
        let (k4x, k4v) = rhs(&comb(&x, &k3x, h), &comb(&v, &k3v, h));
        for a in 0..2 {
            x[a] += h / 6.0 * (k1x[a] + 2.0 * k2x[a] + 2.0 * k3x[a] + k4x[a]);
            v[a] += h / 6.0 * (k1v[a] + 2.0 * k2v[a] + 2.0 * k3v[a] + k4v[a]);
        }
    }
    PhaseState::new(x, v)
}

#[test]
fn push_converges_at_second_order_in_a_steady_field() {
    let domain = Domain::unit(2);
    let u = |x: &Point| -> Point {
        [
            0.5 * (PI * x[0]).sin() * (2.0 * PI * x[1]).sin(),
            -0.5 * (2.0 * PI * x[0]).sin() * (PI * x[1]).sin(),
            0.0,
        ]
    };
    let field = AnalyticField::new(&domain, u);
    let z = PhaseState::new([0.3, 0.55, 0.0], [0.2, -0.1, 0.0]);
    let reference = rk4_reference(&u, z, 1.0, 20_000);
    let err = |n: usize| {
        let dt = 1.0 / n as f64;
        let mut ens = ParticleEnsemble::from_states(2, &[(z.x, z.v, 1.0)]);
        for k in 0..n {
            push_particles(&mut ens, &field, k as f64 * dt, dt);
        }
        (0..2)
            .map(|a| {
                (ens.x[0][a] - reference.x[a])
                    .abs()
                    .max((ens.v[0][a] - reference.v[a]).abs())
            })
            .fold(0.0, f64::max)
    };
    let (e1, e2, e3) = (err(20), err(40), err(80));
    let (o1, o2) = ((e1 / e2).log2(), (e2 / e3).log2());
    assert!(o1 > 1.8 && o2 > 1.8, "errors {e1:e} {e2:e} {e3:e}");
}

// ---------------------------------------------------------------- moments

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b))
}

#[test]
fn interpolation_constant_is_the_optimised_split_for_the_unit_ball() {
    // g = 1 on |v| < 1: m_α = ω (1/(α+d)), with ω the sphere area.
    for (dim, omega) in [(2usize, 2.0 * PI), (3, 4.0 * PI)] {
        let d = dim as f64;
        for (k, l) in [(2.0, 0.0), (4.0, 1.0), (6.0, 2.0), (3.0, 0.5)] {
            let mk = omega / (k + d);
            let split = |r: f64| omega * r.powf(l + d) / (l + d) + r.powf(l - k) * mk;
            let best = golden_min(split, 1e-3, 10.0);
            let c = interpolation_constant(dim, k, l);
            let bound = c * mk.powf((l + d) / (k + d));
            assert!(
                (bound - best).abs() <= 1e-9 * best,
                "d={dim} k={k} l={l}: {bound} vs {best}"
            );
            // the split bound dominates the true moment
            assert!(omega / (l + d) <= best);
        }
    }
}

#[test]
fn moment_audit_holds_for_a_sampled_ball() {
    let domain = Domain::unit(2);
    let grid = MacGrid::new(&domain, &[8, 8]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut states = Vec::new();
    while states.len() < 4000 {
        let v = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            0.0,
        ];
        if v[0] * v[0] + v[1] * v[1] < 1.0 {
            let x = [rng.random::<f64>(), rng.random::<f64>(), 0.0];
            states.push((x, v, 1.0 / 4000.0));
        }
    }
    let ens = ParticleEnsemble::from_states(2, &states);
    let hist = PhaseHistogram::build(&ens, &grid, 4, 16);
    for (k, l) in [(2.0, 0.0), (6.0, 1.0)] {
        let audit = moment_interpolation_audit(&hist, k, l).unwrap();
        assert!(audit.max_ratio > 0.0 && audit.max_ratio <= 1.0, "{audit:?}");
    }
}
