use moving_frame_core::analysis::{estimate_order, estimate_rate};
use moving_frame_core::coefficients::{Coefficients, Field, JumpField, LinearMap, LipschitzProfile, VectorField};
use moving_frame_core::frame::{solve_in_frame, FrameSde};
use moving_frame_core::noise::{
    aggregate, sample_path, JumpMeasureSpec, MarkDistribution, QWienerSpec, RngStream, StreamNamespace,
};
use moving_frame_core::problem::{InitialHistory, SpdeProblem};
use moving_frame_core::schemes::cubature::degree3_one_dimensional;
use moving_frame_core::schemes::euler::euler_path;
use moving_frame_core::schemes::weak::{cubature_weak_value, euler_weak_value, SchemeConfig, SchemeKind, TestFunction};
use moving_frame_core::spectral::build_cauchy_dilation;
use moving_frame_core::{DiagonalGenerator, GroupFrame, ModeVector, Sequential};
use proptest::prelude::*;

fn mv(x: &[f64]) -> ModeVector {
    ModeVector::new(x.to_vec()).unwrap()
}

/// `dr = (a r + c) dt + s dW` in `eigs.len()` modes with one Brownian mode.
fn ou(eigs: &[f64], c: &[f64], s: &[f64], r0: &[f64], horizon: f64, jumps: JumpMeasureSpec) -> SpdeProblem {
    let k = eigs.len();
    let jump = if jumps.is_active() {
        JumpField::AffineInMark {
            offset: VectorField::zero(k),
            slope: VectorField::Constant(ModeVector::from_fn(k, |_| 0.2)),
        }
    } else {
        JumpField::zero(k)
    };
    let coefficients = Coefficients {
        drift: Field::from(VectorField::Constant(mv(c))),
        diffusion: vec![Field::from(VectorField::Constant(mv(s)))],
        jump,
        lipschitz: LipschitzProfile::constant(0.0).unwrap(),
    };
    SpdeProblem::new(
        DiagonalGenerator::new(eigs.to_vec()).unwrap(),
        coefficients,
        QWienerSpec::standard(1),
        jumps,
        InitialHistory::constant(mv(r0)),
        0.0,
        horizon,
    )
    .unwrap()
}

fn max_diff(a: &ModeVector, b: &ModeVector) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn euler_monte_carlo_matches_discrete_ou_mean() {
    let (a, c, s, r0, t, steps) = (-1.5, 0.4, 0.7, 1.0, 1.0, 8);
    let p = ou(&[a], &[c], &[s], &[r0], t, JumpMeasureSpec::none());
    // Split step r⁺ = e^{aΔ}(r + cΔ + s ΔW): the mean obeys m⁺ = e^{aΔ}(m + cΔ).
    let dt = t / steps as f64;
    let mut mean = r0;
    let mut var = 0.0;
    for _ in 0..steps {
        mean = (a * dt).exp() * (mean + c * dt);
        var = (2.0 * a * dt).exp() * (var + s * s * dt);
    }
    let mut cfg = SchemeConfig::new(SchemeKind::EulerSplit, steps, TestFunction::Linear(mv(&[1.0])));
    cfg.mc_trajectories = 40_000;
    let stream = RngStream::namespaced(7, StreamNamespace::Euler, 0);
    let rep = euler_weak_value(&p, &cfg, stream, &Sequential).unwrap();
    let stderr = rep.stderr.unwrap();
    assert!((stderr - (var / 40_000.0).sqrt()).abs() < 0.05 * stderr, "stderr {stderr}");
    assert!((rep.estimate - mean).abs() < 4.0 * stderr, "{} vs {mean}", rep.estimate);
}

#[test]
fn direct_frame_reproduces_split_euler_pathwise() {
    let jumps = JumpMeasureSpec::new(
        2.0,
        MarkDistribution::Discrete {
            points: vec![0.5, -1.0],
            weights: vec![0.5, 0.5],
        },
    )
    .unwrap();
    let p = ou(&[-1.0, -4.0, -9.0], &[0.1, 0.0, -0.2], &[0.5, 0.3, 0.1], &[1.0, 0.5, -0.5], 1.0, jumps);
    let frame = GroupFrame::direct(p.generator.clone());
    let sde = FrameSde::new(&frame, &p).unwrap();
    for traj in 0..16 {
        let stream = RngStream::namespaced(3, StreamNamespace::Validation, 0).trajectory(traj);
        let noise = sample_path(stream, &p.wiener, &p.jumps, &p.uniform_steps(32)).unwrap();
        let plain = euler_path(&p, &noise).unwrap();
        let framed = solve_in_frame(&sde, &noise).unwrap();
        for (x, y) in plain.iter().zip(&framed.pushed) {
            assert!(max_diff(x, y) <= 1e-10);
        }
    }
}

#[test]
fn dilation_frame_tracks_split_euler() {
    let p = ou(&[-0.5, -2.0], &[0.0, 0.3], &[0.4, 0.2], &[1.0, -1.0], 1.0, JumpMeasureSpec::none());
    let frame = build_cauchy_dilation(&p.generator, 2001, 1.0).unwrap();
    let sde = FrameSde::new(&frame, &p).unwrap();
    let noise = sample_path(RngStream::new(11, 0), &p.wiener, &p.jumps, &p.uniform_steps(16)).unwrap();
    let plain = euler_path(&p, &noise).unwrap();
    let framed = solve_in_frame(&sde, &noise).unwrap();
    let worst = plain.iter().zip(&framed.pushed).map(|(x, y)| max_diff(x, y)).fold(0.0, f64::max);
    assert!(worst < 1e-3, "worst {worst}");
}

#[test]
fn cubature_mean_of_linear_functional_is_exact() {
    // Additive noise with linear drift: every path average of ⟨ζ, r_T⟩ is the
    // deterministic mean e^{aT} r0 + c (e^{aT} − 1)/a.
    let (a, c, t) = ([-1.0, -0.25], [0.5, -0.2], 1.0);
    let p = ou(&a, &c, &[0.6, 0.3], &[1.0, 2.0], t, JumpMeasureSpec::none());
    let formula = degree3_one_dimensional().unwrap().certify().unwrap().0;
    let zeta = [1.0, -0.5];
    let exact: f64 = (0..2)
        .map(|k| zeta[k] * ((a[k] * t).exp() * [1.0, 2.0][k] + c[k] * ((a[k] * t).exp() - 1.0) / a[k]))
        .sum();
    for steps in [1, 3] {
        let cfg = SchemeConfig::new(SchemeKind::Cubature, steps, TestFunction::Linear(mv(&zeta)));
        let rep = cubature_weak_value(&p, &formula, &cfg, RngStream::new(0, 0), &Sequential).unwrap();
        assert!((rep.estimate - exact).abs() < 1e-8, "{steps}: {} vs {exact}", rep.estimate);
    }
}

#[test]
fn cubature_second_moment_converges() {
    let (a, s, t) = (-1.0, 0.8, 1.0);
    let p = ou(&[a], &[0.0], &[s], &[1.0], t, JumpMeasureSpec::none());
    let formula = degree3_one_dimensional().unwrap().certify().unwrap().0;
    let exact = (2.0 * a * t).exp() + s * s * ((2.0 * a * t).exp() - 1.0) / (2.0 * a);
    let steps = [1usize, 2, 4, 8];
    let errors: Vec<f64> = steps
        .iter()
        .map(|n| {
            let cfg = SchemeConfig::new(SchemeKind::Cubature, *n, TestFunction::Quadratic);
            let rep = cubature_weak_value(&p, &formula, &cfg, RngStream::new(0, 0), &Sequential).unwrap();
            (rep.estimate - exact).abs()
        })
        .collect();
    let fit = estimate_order(&errors).unwrap();
    assert!(fit.monotone && fit.slope >= 1.0, "{errors:?}");
}

#[test]
fn rate_fit_recovers_exact_power_laws() {
    let steps: Vec<f64> = (0..6).map(|i| 10f64.powi(-i)).collect();
    for order in [0.5, 1.0, 2.0] {
        let errors: Vec<f64> = steps.iter().map(|h| 3.0 * h.powf(order)).collect();
        let fit = estimate_rate(&steps, &errors).unwrap();
        assert!((fit.slope - order).abs() < 1e-12);
        assert!(fit.contains(order) && fit.monotone);
    }
}

#[test]
fn linear_drift_euler_is_deterministic_without_noise() {
    // A 2×2 rotation drift, no noise, no generator: split Euler is explicit
    // Euler, whose iterate is (I + Δ B)^n r0.
    let b = LinearMap::new(2, vec![0.0, 1.0, -1.0, 0.0]).unwrap();
    let coefficients = Coefficients {
        drift: Field::from(VectorField::Linear(b)),
        diffusion: vec![Field::from(VectorField::zero(2))],
        jump: JumpField::zero(2),
        lipschitz: LipschitzProfile::constant(1.0).unwrap(),
    };
    let p = SpdeProblem::new(
        DiagonalGenerator::new(vec![0.0, 0.0]).unwrap(),
        coefficients,
        QWienerSpec::standard(1),
        JumpMeasureSpec::none(),
        InitialHistory::constant(mv(&[1.0, 0.0])),
        0.0,
        1.0,
    )
    .unwrap();
    let n = 10;
    let noise = sample_path(RngStream::new(1, 0), &p.wiener, &p.jumps, &p.uniform_steps(n)).unwrap();
    let end = euler_path(&p, &noise).unwrap().pop().unwrap();
    let h = 1.0 / n as f64;
    let (mut x, mut y) = (1.0, 0.0);
    for _ in 0..n {
        (x, y) = (x + h * y, y - h * x);
    }
    assert!(max_diff(&end, &mv(&[x, y])) < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_preserves_brownian_sums_and_jumps(seed in any::<u64>(), log_factor in 0u32..4) {
        let factor = 1usize << log_factor;
        let jumps = JumpMeasureSpec::new(3.0, MarkDistribution::Uniform { lo: -1.0, hi: 1.0 }).unwrap();
        let wiener = QWienerSpec::standard(2);
        let fine = sample_path(RngStream::new(seed, 0), &wiener, &jumps, &[0.125; 8]).unwrap();
        let coarse = aggregate(&fine, factor).unwrap();
        prop_assert_eq!(coarse.len(), 8 / factor);
        for (chunk, c) in fine.chunks(factor).zip(&coarse) {
            prop_assert!((c.dt - 0.125 * factor as f64).abs() < 1e-15);
            for j in 0..2 {
                let sum: f64 = chunk.iter().map(|i| i.brownian[j]).sum();
                prop_assert!((c.brownian[j] - sum).abs() < 1e-14);
            }
            let marks: Vec<f64> = chunk.iter().flat_map(|i| i.jumps.iter().map(|j| j.mark)).collect();
            let coarse_marks: Vec<f64> = c.jumps.iter().map(|j| j.mark).collect();
            prop_assert_eq!(marks, coarse_marks);
            prop_assert!(c.jumps.iter().all(|j| j.offset > 0.0 && j.offset <= c.dt + 1e-15));
        }
    }

    #[test]
    fn truncation_levels_thin_the_same_jumps(seed in any::<u64>(), n in 0usize..6) {
        let full = JumpMeasureSpec::new(4.0, MarkDistribution::Uniform { lo: 0.0, hi: 1.0 }).unwrap();
        let cut = full.clone().with_truncation(Some(n));
        let wiener = QWienerSpec::standard(1);
        let a = sample_path(RngStream::new(seed, 1), &wiener, &full, &[0.25; 4]).unwrap();
        let b = sample_path(RngStream::new(seed, 1), &wiener, &cut, &[0.25; 4]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.brownian, &y.brownian);
            prop_assert_eq!(&x.filter_jumps(|m| cut.in_truncation(m)), y);
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct(seed in any::<u64>(), i in 0u32..1000) {
        let wiener = QWienerSpec::standard(1);
        let s = RngStream::namespaced(seed, StreamNamespace::Euler, 0);
        let x = sample_path(s.trajectory(i), &wiener, &JumpMeasureSpec::none(), &[1.0; 3]).unwrap();
        let y = sample_path(s.trajectory(i), &wiener, &JumpMeasureSpec::none(), &[1.0; 3]).unwrap();
        let z = sample_path(s.trajectory(i + 1), &wiener, &JumpMeasureSpec::none(), &[1.0; 3]).unwrap();
        prop_assert_eq!(&x, &y);
        prop_assert_ne!(&x, &z);
    }
}
