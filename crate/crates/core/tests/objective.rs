mod common;

use common::{jvp_jacobian, random_net, smooth_state};
use jaws_core::autodiff::{NodeId, ParamSizes, Shape, Tape};
use jaws_core::model::{HeadKind, ModelOutput};
use jaws_core::objective::{
    composite_loss, hutchinson_row_energy, jaws_loss, jaws_terms, pinn_residual, Method,
    PhysicsContext, Probe, Window,
};
use jaws_core::solver::{generate_dataset, DatasetConfig, SpectralGrid};

const SPATIAL: HeadKind = HeadKind::Spatial {
    channels: 2,
    kernel: 3,
};

fn probes(n: usize) -> impl Iterator<Item = Probe> {
    (0..1u32 << n).map(move |bits| {
        let v = (0..n)
            .map(|i| if bits >> i & 1 == 1 { -1.0 } else { 1.0 })
            .collect();
        Probe::from_signs(v, bits as u64).unwrap()
    })
}

#[test]
fn exhaustive_probe_average_equals_row_norms() {
    let n = 8;
    let p = random_net(n, 3, HeadKind::None, 21);
    let u = smooth_state(n, 0.5);
    let mut tape = p.new_tape();
    let (_, out) = p.forward(&u, &mut tape).unwrap();
    let mut avg = vec![0.0; n];
    for probe in probes(n) {
        let h = hutchinson_row_energy(&mut tape, &out, &probe).unwrap();
        for (a, v) in avg.iter_mut().zip(tape.value(h)) {
            *a += v;
        }
    }
    avg.iter_mut().for_each(|a| *a /= (1u32 << n) as f64);
    let rows: Vec<f64> = jvp_jacobian(&p, &u)
        .iter()
        .map(|r| r.iter().map(|x| x * x).sum())
        .collect();
    assert!(common::max_rel(&avg, &rows, 1e-12) < 1e-10);
}

/// Output node standing in for a linear model on `x`.
fn linear_output(x: NodeId, y: NodeId) -> ModelOutput {
    ModelOutput {
        input: x,
        prediction: y,
        features: x,
        s2: None,
    }
}

#[test]
fn diagonal_jacobian_is_exact_for_one_probe() {
    let d = vec![0.5, -2.0, 3.0, 0.1];
    let mut tape = Tape::new(ParamSizes::default());
    let x = tape.input(vec![1.0; 4], Shape::vector(4));
    let dn = tape.input(d.clone(), Shape::vector(4));
    let y = tape.mul(x, dn);
    let out = linear_output(x, y);
    for probe in probes(4) {
        let h = hutchinson_row_energy(&mut tape, &out, &probe).unwrap();
        let expect: Vec<f64> = d.iter().map(|v| v * v).collect();
        assert_eq!(tape.value(h), expect.as_slice());
    }
}

#[test]
fn upper_triangular_two_by_two() {
    // y = x + m ⊙ swap(x) with m = (1, 0): J = [[1, 1], [0, 1]].
    let mut tape = Tape::new(ParamSizes::default());
    let x = tape.input(vec![0.3, 0.7], Shape::vector(2));
    let w = tape.input(vec![0.0, 0.0, 1.0], Shape::new(1, 3));
    let swapped = tape.conv(x, w, None, 3);
    let m = tape.input(vec![1.0, 0.0], Shape::vector(2));
    let masked = tape.mul(m, swapped);
    let y = tape.add(x, masked);
    let out = linear_output(x, y);
    let mut h_of = |v: Vec<f64>| {
        let probe = Probe::from_signs(v, 0).unwrap();
        let h = hutchinson_row_energy(&mut tape, &out, &probe).unwrap();
        tape.value(h).to_vec()
    };
    assert_eq!(h_of(vec![1.0, 1.0]), vec![4.0, 1.0]);
    assert_eq!(h_of(vec![1.0, -1.0]), vec![0.0, 1.0]);
    let total = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]
        .iter()
        .map(|v| h_of(v.to_vec()))
        .fold(vec![0.0, 0.0], |acc, h| vec![acc[0] + h[0], acc[1] + h[1]]);
    assert_eq!(total, vec![8.0, 4.0]);
}

#[test]
fn identity_model_has_unit_row_energy() {
    let p = jaws_core::model::ModelParams::init(
        jaws_core::model::Architecture {
            grid: 16,
            channels: 3,
            kernel: 3,
            depth: 3,
            head: HeadKind::None,
        },
        0,
    )
    .unwrap();
    let mut tape = p.new_tape();
    let (_, out) = p.forward(&smooth_state(16, 0.0), &mut tape).unwrap();
    let h = hutchinson_row_energy(&mut tape, &out, &Probe::rademacher(16, 4)).unwrap();
    assert_eq!(tape.value(h), vec![1.0; 16].as_slice());
}

/// Minimizes `jaws_terms` over a scalar log-variance with gradient descent driven by
/// tape gradients; returns the minimizer.
fn minimize_scalar(loss: impl Fn(&mut Tape, NodeId) -> NodeId) -> f64 {
    let mut s = 0.0;
    for _ in 0..200 {
        let mut tape = Tape::new(ParamSizes::default());
        let sn = tape.variable(vec![s], Shape::scalar());
        let l = loss(&mut tape, sn);
        let adj = tape.adjoints(l).unwrap();
        let g = adj.get(sn).map(|g| g[0]).unwrap_or(0.0);
        s -= 1.5 * g;
    }
    s
}

#[test]
fn optimal_log_variances_are_logs_of_squared_quantities() {
    let (r2, h) = (0.3f64, 4.0f64);
    let s1 = minimize_scalar(|tape, s| {
        let p = tape.input(vec![0.0], Shape::vector(1));
        let t = tape.input(vec![r2.sqrt()], Shape::vector(1));
        let s2 = tape.input(vec![0.0], Shape::scalar());
        let hn = tape.input(vec![0.0], Shape::vector(1));
        jaws_terms(tape, p, t, s, s2, hn).total
    });
    assert!((s1 - r2.ln()).abs() < 1e-6, "s1 = {s1}");
    let s2 = minimize_scalar(|tape, s| {
        let p = tape.input(vec![0.0], Shape::vector(1));
        let s1 = tape.input(vec![0.0], Shape::scalar());
        let hn = tape.input(vec![h], Shape::vector(1));
        jaws_terms(tape, p, p, s1, s, hn).total
    });
    assert!((s2 - h.ln()).abs() < 1e-6, "s2 = {s2}");
}

#[test]
fn decomposition_and_global_spatial_coincidence() {
    let mut tape = Tape::new(ParamSizes::default());
    let p = tape.input(vec![0.1, 0.4, -0.3, 0.2], Shape::vector(4));
    let t = tape.input(vec![0.0, 0.5, -0.1, 0.2], Shape::vector(4));
    let s1 = tape.input(vec![-0.4], Shape::scalar());
    let h = tape.input(vec![0.9, 1.3, 0.2, 2.0], Shape::vector(4));
    let sg = tape.input(vec![0.7], Shape::scalar());
    let ss = tape.input(vec![0.7; 4], Shape::vector(4));
    let g = jaws_terms(&mut tape, p, t, s1, sg, h).breakdown(&tape);
    let s = jaws_terms(&mut tape, p, t, s1, ss, h).breakdown(&tape);
    assert!((g.total - s.total).abs() < 1e-15);
    assert_eq!(s.total, s.recon + s.jac + s.complexity + s.pushforward);
    let recon = 0.5 * (0.4f64).exp() * (0.01 + 0.01 + 0.04) / 4.0;
    assert!((s.recon - recon).abs() < 1e-15);
}

struct Setup {
    u: Vec<f64>,
    targets: Vec<Vec<f64>>,
}

fn setup(n: usize) -> Setup {
    let ds = generate_dataset(&DatasetConfig {
        n_trajectories: 1,
        grid: n,
        steps: 4,
        seed: 3,
        ..DatasetConfig::default()
    })
    .unwrap();
    let t = &ds.trajectories[0];
    Setup {
        u: t.states[0].values().to_vec(),
        targets: t.states[1..].iter().map(|s| s.values().to_vec()).collect(),
    }
}

#[test]
fn single_step_window_and_zero_lambda_reduce_to_the_jaws_loss() {
    let s = setup(16);
    let p = random_net(16, 3, SPATIAL, 6);
    let probe = Probe::rademacher(16, 9);
    let direct = {
        let mut tape = p.new_tape();
        let (bound, out) = p.forward(&s.u, &mut tape).unwrap();
        jaws_loss(&mut tape, &out, &s.targets[0], bound.s1, &probe)
            .unwrap()
            .breakdown(&tape)
    };
    for (k, lambda) in [(1, 1.0), (4, 0.0)] {
        let targets: Vec<&[f64]> = s.targets[..k].iter().map(|t| t.as_slice()).collect();
        let mut tape = p.new_tape();
        let bound = p.bind(&mut tape).unwrap();
        let (_, nodes) = composite_loss(
            Method::JawsS,
            &mut tape,
            &bound,
            Window {
                input: &s.u,
                targets: &targets,
            },
            lambda,
            Some(&probe),
            None,
        )
        .unwrap();
        assert_eq!(nodes.breakdown(&tape), direct, "K={k} λ={lambda}");
    }
}

#[test]
fn pushforward_gradient_reaches_only_the_backbone() {
    let s = setup(16);
    let p = random_net(16, 3, SPATIAL, 7);
    let probe = Probe::rademacher(16, 1);
    let targets: Vec<&[f64]> = s.targets.iter().map(|t| t.as_slice()).collect();
    let mut tape = p.new_tape();
    let bound = p.bind(&mut tape).unwrap();
    let (_, nodes) = composite_loss(
        Method::JawsS,
        &mut tape,
        &bound,
        Window {
            input: &s.u,
            targets: &targets,
        },
        1.0,
        Some(&probe),
        None,
    )
    .unwrap();
    let g = tape.backward(nodes.pushforward).unwrap();
    assert!(g.d_phi.iter().all(|v| *v == 0.0));
    assert_eq!(g.d_s1, 0.0);
    assert!(g.theta_norm() > 0.0);
}

#[test]
fn missing_inputs_are_config_errors() {
    let s = setup(16);
    let p = random_net(16, 2, SPATIAL, 1);
    let targets: Vec<&[f64]> = vec![&s.targets[0]];
    let w = Window {
        input: &s.u,
        targets: &targets,
    };
    let mut tape = p.new_tape();
    let bound = p.bind(&mut tape).unwrap();
    assert!(composite_loss(Method::JawsS, &mut tape, &bound, w, 1.0, None, None).is_err());
    assert!(composite_loss(Method::Pinn, &mut tape, &bound, w, 1.0, None, None).is_err());
    let empty = Window {
        input: &s.u,
        targets: &[],
    };
    let probe = Probe::rademacher(16, 0);
    assert!(composite_loss(Method::JawsS, &mut tape, &bound, empty, 1.0, Some(&probe), None).is_err());
}

/// Mean PINN residual over every transition pair of a solver dataset at step `dt`.
fn mean_pinn_residual(dt: f64, steps: usize) -> f64 {
    let ds = generate_dataset(&DatasetConfig {
        n_trajectories: 4,
        grid: 128,
        steps,
        dt,
        substeps: 10,
        seed: 12,
        ..DatasetConfig::default()
    })
    .unwrap();
    let grid = SpectralGrid::new(128).unwrap();
    let mut sum = 0.0;
    let mut count = 0;
    for t in &ds.trajectories {
        for pair in t.states.windows(2) {
            sum += pinn_residual(&grid, pair[0].values(), pair[1].values(), t.nu, t.dt);
            count += 1;
        }
    }
    sum / count as f64
}

#[test]
fn pinn_residual_is_small_on_solver_transitions() {
    let coarse = mean_pinn_residual(0.01, 50);
    assert!(coarse < 1e-2, "mean residual {coarse}");
    // forward-Euler residual is O(dt), so its square shrinks about fourfold
    let fine = mean_pinn_residual(0.005, 100);
    assert!((3.0..5.0).contains(&(coarse / fine)), "{coarse} / {fine}");

    let ds = generate_dataset(&DatasetConfig {
        n_trajectories: 1,
        grid: 128,
        steps: 1,
        seed: 12,
        ..DatasetConfig::default()
    })
    .unwrap();
    let grid = SpectralGrid::new(128).unwrap();
    // and the in-tape PINN loss reports the same penalty at prediction = target
    let tr = &ds.trajectories[0];
    let p = random_net(128, 2, HeadKind::None, 0);
    let mut tape = p.new_tape();
    let (_, out) = p.forward(tr.states[0].values(), &mut tape).unwrap();
    let pred = tape.value(out.prediction).to_vec();
    let physics = PhysicsContext {
        grid: &grid,
        nu: tr.nu,
        dt: tr.dt,
        beta: 0.1,
    };
    let nodes = jaws_core::objective::pinn_loss(&mut tape, &out, &pred, &physics).unwrap();
    let expect = 0.1 * pinn_residual(&grid, tr.states[0].values(), &pred, tr.nu, tr.dt);
    assert!((tape.scalar(nodes.recon) - expect).abs() < 1e-12 * expect.max(1.0));
}
