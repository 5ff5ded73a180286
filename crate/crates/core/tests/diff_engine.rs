mod common;

use common::{fd_gradient, flat_grad, max_rel, random_net, smooth_state};
use jaws_core::autodiff::{ParamGroup, ParamSizes, Shape, Tape};
use jaws_core::model::{HeadKind, ModelParams};
use jaws_core::objective::{
    composite_loss, hutchinson_row_energy, jaws_terms, Method, PhysicsContext, Probe, Window,
};
use jaws_core::solver::SpectralGrid;
use jaws_core::JawsError;
use proptest::prelude::*;

const N: usize = 16;

fn target(n: usize) -> Vec<f64> {
    smooth_state(n, 0.3).iter().map(|v| 0.97 * v + 0.01).collect()
}

fn method_loss(p: &ModelParams, method: Method, probe: &Probe) -> (f64, Vec<f64>) {
    let grid = SpectralGrid::new(N).unwrap();
    let u = smooth_state(N, 0.0);
    let t = target(N);
    let targets = [t.as_slice()];
    let physics = PhysicsContext {
        grid: &grid,
        nu: 0.01,
        dt: 0.01,
        beta: 0.1,
    };
    let mut tape = p.new_tape();
    let bound = p.bind(&mut tape).unwrap();
    let (_, nodes) = composite_loss(
        method,
        &mut tape,
        &bound,
        Window {
            input: &u,
            targets: &targets,
        },
        1.0,
        Some(probe),
        Some(&physics),
    )
    .unwrap();
    let g = tape.backward(nodes.total).unwrap();
    (tape.scalar(nodes.total), flat_grad(&g))
}

#[test]
fn first_order_gradients_match_central_differences() {
    let probe = Probe::rademacher(N, 5);
    for method in [Method::Baseline, Method::Pinn] {
        let p = random_net(N, 2, method.head(), 3);
        let (_, ad) = method_loss(&p, method, &probe);
        let fd = fd_gradient(&p, 1e-5, |q| method_loss(q, method, &probe).0);
        let n_theta = p.theta.len();
        let err = max_rel(&ad[..n_theta], &fd[..n_theta], 1e-6);
        assert!(err < 1e-5, "{method}: rel err {err:e}");
    }
}

#[test]
fn hutchinson_gradients_match_central_differences_global_head() {
    let probe = Probe::rademacher(N, 6);
    let p = random_net(N, 2, HeadKind::Global, 4);
    let (_, ad) = method_loss(&p, Method::JawsG, &probe);
    let fd = fd_gradient(&p, 1e-5, |q| method_loss(q, Method::JawsG, &probe).0);
    let err = max_rel(&ad, &fd, 1e-6);
    assert!(err < 1e-4, "rel err {err:e}");
}

/// JAWS-S loss with `s2` supplied as a constant, isolating the θ paths that remain
/// after feature detachment.
fn jaws_with_fixed_s2(p: &ModelParams, s2: &[f64], probe: &Probe) -> (f64, Vec<f64>) {
    let u = smooth_state(N, 0.0);
    let mut tape = p.new_tape();
    let (bound, out) = p.forward(&u, &mut tape).unwrap();
    let h = hutchinson_row_energy(&mut tape, &out, probe).unwrap();
    let t = tape.input(target(N), Shape::vector(N));
    let s2n = tape.input(s2.to_vec(), Shape::vector(N));
    let nodes = jaws_terms(&mut tape, out.prediction, t, bound.s1, s2n, h);
    let g = tape.backward(nodes.total).unwrap();
    (tape.scalar(nodes.total), flat_grad(&g))
}

#[test]
fn hutchinson_gradients_match_central_differences_spatial_head() {
    let probe = Probe::rademacher(N, 7);
    let p = random_net(N, 2, HeadKind::Spatial { channels: 2, kernel: 3 }, 5);
    let n_theta = p.theta.len();
    let (_, ad) = method_loss(&p, Method::JawsS, &probe);

    // phi and s1: the full loss is an ordinary function of them.
    let fd = fd_gradient(&p, 1e-5, |q| method_loss(q, Method::JawsS, &probe).0);
    let err = max_rel(&ad[n_theta..], &fd[n_theta..], 1e-6);
    assert!(err < 1e-4, "phi/s1 rel err {err:e}");

    // theta: s2 sees theta only through detached features, so hold s2 at its value.
    let s2 = p.s2_map(&smooth_state(N, 0.0)).unwrap().unwrap();
    let (_, ad_fixed) = jaws_with_fixed_s2(&p, &s2, &probe);
    assert_eq!(&ad[..n_theta], &ad_fixed[..n_theta]);
    let fd = fd_gradient(&p, 1e-5, |q| jaws_with_fixed_s2(q, &s2, &probe).0);
    let err = max_rel(&ad[..n_theta], &fd[..n_theta], 1e-6);
    assert!(err < 1e-4, "theta rel err {err:e}");
}

#[test]
fn quadratic_and_constant_losses() {
    let theta = vec![0.5, -1.5, 2.0];
    let mut tape = Tape::new(ParamSizes { theta: 3, phi: 0 });
    let w = tape.param(ParamGroup::Theta, 0, &theta, Shape::vector(3)).unwrap();
    let sq = tape.square(w);
    let loss = tape.sum(sq);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.d_theta, vec![1.0, -3.0, 4.0]);

    let c = tape.input(vec![3.0], Shape::scalar());
    let g = tape.backward(c).unwrap();
    assert!(g.is_zero());

    assert!(matches!(tape.backward(sq), Err(JawsError::Contract(_))));
}

/// Dense circulant matrix of the centred periodic cross-correlation with `w`.
fn circulant(w: &[f64], n: usize) -> Vec<Vec<f64>> {
    let half = w.len() / 2;
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (t, wt) in w.iter().enumerate() {
            row[(i + t + n - half) % n] += wt;
        }
    }
    a
}

fn matvec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

#[test]
fn tangent_of_linear_conv_is_dense_matvec_and_its_gradient_is_outer_product() {
    let n = 8;
    let w = [0.3, -1.2, 0.7];
    let v: Vec<f64> = (0..n).map(|i| ((i * 7 % 5) as f64) - 2.0).collect();
    let u: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
    let mut tape = Tape::new(ParamSizes { theta: 3, phi: 0 });
    let x = tape.input(u, Shape::vector(n));
    let wn = tape.param(ParamGroup::Theta, 0, &w, Shape::new(1, 3)).unwrap();
    let y = tape.conv(x, wn, None, 3);
    let jv = tape.jvp(x, y, &v).unwrap();
    let a = circulant(&w, n);
    let av = matvec(&a, &v);
    for (p, q) in tape.value(jv).iter().zip(&av) {
        assert!((p - q).abs() < 1e-14);
    }
    // d‖Av‖²/dA = 2 (Av) vᵀ, pulled back onto the three kernel taps.
    let sq = tape.square(jv);
    let s = tape.sum(sq);
    let g = tape.grad_of_tangent_scalar(s).unwrap();
    for t in 0..3 {
        let expect: f64 = (0..n).map(|i| 2.0 * av[i] * v[(i + t + n - 1) % n]).sum();
        assert!((g.d_theta[t] - expect).abs() < 1e-10, "tap {t}");
    }
}

#[test]
fn identity_model_tangent_is_probe() {
    let p = ModelParams::init(
        jaws_core::model::Architecture {
            grid: N,
            channels: 4,
            kernel: 3,
            depth: 3,
            head: HeadKind::None,
        },
        0,
    )
    .unwrap();
    let mut tape = p.new_tape();
    let (_, out) = p.forward(&smooth_state(N, 0.1), &mut tape).unwrap();
    let v = Probe::rademacher(N, 1);
    assert_eq!(tape.jvp_values(out.input, out.prediction, v.values()).unwrap(), v.values());
}

#[test]
fn tangent_matches_directional_difference() {
    let p = random_net(N, 2, HeadKind::None, 9);
    let u = smooth_state(N, 0.4);
    let v: Vec<f64> = (0..N).map(|i| ((i as f64) * 1.7).cos()).collect();
    let mut tape = p.new_tape();
    let (_, out) = p.forward(&u, &mut tape).unwrap();
    let jv = tape.jvp_values(out.input, out.prediction, &v).unwrap();
    let h = 1e-5;
    let up: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + h * b).collect();
    let dn: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - h * b).collect();
    let (a, b) = (p.predict(&up).unwrap(), p.predict(&dn).unwrap());
    let fd: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect();
    assert!(common::rel_err(&fd, &jv) < 1e-5);
    let recorded = tape.jvp(out.input, out.prediction, &v).unwrap();
    assert_eq!(tape.value(recorded), jv.as_slice());
}

#[test]
fn tangent_energy_gradient_matches_differences() {
    let p = random_net(N, 2, HeadKind::None, 10);
    let u = smooth_state(N, 0.2);
    let v = Probe::rademacher(N, 3);
    let energy = |q: &ModelParams| -> (f64, Vec<f64>) {
        let mut tape = q.new_tape();
        let (_, out) = q.forward(&u, &mut tape).unwrap();
        let jv = tape.jvp(out.input, out.prediction, v.values()).unwrap();
        let sq = tape.square(jv);
        let s = tape.sum(sq);
        (tape.scalar(s), flat_grad(&tape.grad_of_tangent_scalar(s).unwrap()))
    };
    let (_, ad) = energy(&p);
    let fd = fd_gradient(&p, 1e-5, |q| energy(q).0);
    assert!(max_rel(&ad, &fd, 1e-6) < 1e-4);
}

#[test]
fn detach_semantics() {
    let mut tape = Tape::new(ParamSizes { theta: 2, phi: 0 });
    let w = tape.param(ParamGroup::Theta, 0, &[0.4, -0.9], Shape::vector(2)).unwrap();
    let x = tape.exp(w);
    let d = tape.detach(x);
    assert_eq!(tape.value(d), tape.value(x));
    assert_eq!(tape.detach(d), d);
    assert!(!tape.requires_grad(d));

    let f = tape.square(d);
    let lf = tape.sum(f);
    assert!(tape.backward(lf).unwrap().is_zero());

    // g(x) + f(detach(x)) has the gradient of g alone.
    let g = tape.scale(x, 3.0);
    let lg = tape.sum(g);
    let both = tape.add(lg, lf);
    let only_g = tape.backward(lg).unwrap();
    assert_eq!(tape.backward(both).unwrap(), only_g);
    let tangent = tape.jvp(w, d, &[1.0, 1.0]).unwrap();
    assert_eq!(tape.value(tangent), &[0.0, 0.0]);
}

#[test]
fn gradients_are_deterministic() {
    let p = random_net(N, 2, HeadKind::Spatial { channels: 2, kernel: 3 }, 2);
    let probe = Probe::rademacher(N, 2);
    let a = method_loss(&p, Method::JawsS, &probe);
    let b = method_loss(&p, Method::JawsS, &probe);
    assert_eq!(a.0.to_bits(), b.0.to_bits());
    assert!(a.1.iter().zip(&b.1).all(|(x, y)| x.to_bits() == y.to_bits()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tangent_is_linear(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, seed in 0u64..1000) {
        let p = random_net(N, 3, HeadKind::None, seed);
        let mut tape = p.new_tape();
        let (_, out) = p.forward(&smooth_state(N, 0.0), &mut tape).unwrap();
        let v = Probe::rademacher(N, seed).values().to_vec();
        let w: Vec<f64> = (0..N).map(|i| ((i as f64) + seed as f64).sin()).collect();
        let combo: Vec<f64> = v.iter().zip(&w).map(|(a, b)| alpha * a + beta * b).collect();
        let jc = tape.jvp_values(out.input, out.prediction, &combo).unwrap();
        let jv = tape.jvp_values(out.input, out.prediction, &v).unwrap();
        let jw = tape.jvp_values(out.input, out.prediction, &w).unwrap();
        for i in 0..N {
            let expect = alpha * jv[i] + beta * jw[i];
            prop_assert!((jc[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }
}
