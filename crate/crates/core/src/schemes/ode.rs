//! Integration of the Stratonovich ODE along piecewise-linear driving paths.
//!
//! Each straight segment of duration `τ` and increment `Δω` is integrated in
//! a pseudo-time `u ∈ [0, 1]`:
//! `dr/du = τ (A r + ᾱ(r)) + Σ_i σ̂_i(r) Δω_i`,
//! where `ᾱ` is the Stratonovich-corrected drift and `σ̂_i = √λ_i σ_i`. The
//! linear part is handled exactly by a Lawson (integrating factor) RK4, so
//! stiff modes never restrict the step.

use crate::coefficients::stratonovich_drift;
use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::problem::SpdeProblem;
use crate::spectral::{DiagonalGenerator, ModeVector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeSettings {
    /// Initial RK4 substeps per segment.
    pub substeps: usize,
    /// Substep count at which doubling gives up.
    pub max_substeps: usize,
    /// Local error allowance is `tolerance · Δ^{(m+1)/2}` per cubature step.
    pub tolerance: f64,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self {
            substeps: 8,
            max_substeps: 4096,
            tolerance: 1e-4,
        }
    }
}

/// One Lawson RK4 pass with `n` substeps over `u ∈ [0, 1]`; `g(u, r)` is the
/// nonlinear part of `dr/du` and the linear part is `τ A`.
pub fn lawson_rk4<G>(
    generator: &DiagonalGenerator,
    start: &ModeVector,
    tau: f64,
    n: usize,
    mut g: G,
) -> Result<ModeVector>
where
    G: FnMut(f64, &ModeVector) -> Result<ModeVector>,
{
    let h = 1.0 / n as f64;
    let full = tau * h;
    let half = 0.5 * full;
    let mut r = start.clone();
    for step in 0..n {
        let u = step as f64 * h;
        let k1 = g(u, &r)?;
        let mut y = r.clone();
        y.axpy(0.5 * h, &k1);
        let k2 = g(u + 0.5 * h, &generator.semigroup_apply_unchecked(half, &y))?;
        let mut y = generator.semigroup_apply_unchecked(half, &r);
        y.axpy(0.5 * h, &k2);
        let k3 = g(u + 0.5 * h, &y)?;
        let mut y = generator.semigroup_apply_unchecked(full, &r);
        y.axpy(h, &generator.semigroup_apply_unchecked(half, &k3));
        let k4 = g(u + h, &y)?;
        let mut next = generator.semigroup_apply_unchecked(full, &r);
        next.axpy(h / 6.0, &generator.semigroup_apply_unchecked(full, &k1));
        let mut mid = k2;
        mid += &k3;
        next.axpy(h / 3.0, &generator.semigroup_apply_unchecked(half, &mid));
        next.axpy(h / 6.0, &k4);
        r = next.ensure_finite("cubature ODE")?;
    }
    Ok(r)
}

/// Lawson RK4 with step doubling until two successive substep counts agree
/// within `budget`. Returns the finer solution and the substep count used.
pub fn integrate_with_budget<G>(
    generator: &DiagonalGenerator,
    start: &ModeVector,
    tau: f64,
    settings: &OdeSettings,
    budget: f64,
    mut g: G,
) -> Result<(ModeVector, usize)>
where
    G: FnMut(f64, &ModeVector) -> Result<ModeVector>,
{
    let mut n = settings.substeps.max(1);
    let mut coarse = lawson_rk4(generator, start, tau, n, &mut g)?;
    loop {
        let fine = lawson_rk4(generator, start, tau, 2 * n, &mut g)?;
        let estimate = (&fine - &coarse).norm();
        if estimate <= budget {
            return Ok((fine, 2 * n));
        }
        if 4 * n > settings.max_substeps {
            return Err(Error::OdeRejected {
                estimate,
                budget,
                substeps: 2 * n,
            });
        }
        n *= 2;
        coarse = fine;
    }
}

/// Solves `dr = (A r + ᾱ(r)) dt + Σ σ̂_i(r) dω^i` along one straight segment
/// starting at time `t`, with duration `tau` and path increment `d_omega`.
pub fn ode_along_segment(
    problem: &SpdeProblem,
    start: &ModeVector,
    t: f64,
    tau: f64,
    d_omega: &[f64],
    settings: &OdeSettings,
    budget: f64,
) -> Result<(ModeVector, usize)> {
    if tau == 0.0 && d_omega.iter().all(|w| *w == 0.0) {
        return Ok((start.clone(), 0));
    }
    let c = &problem.coefficients;
    let q = problem.wiener.eigenvalues();
    integrate_with_budget(&problem.generator, start, tau, settings, budget, |u, r| {
        let time = t + u * tau;
        let mut out = stratonovich_drift(c, q, time, r)?.scaled(tau);
        for ((col, l), dw) in c.diffusion.iter().zip(q).zip(d_omega) {
            if *dw != 0.0 {
                out.axpy(sqrt(*l) * dw, &col.eval_state(time, r)?);
            }
        }
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Coefficients, Field, JumpField, LipschitzProfile, VectorField};
    use crate::noise::{JumpMeasureSpec, QWienerSpec};
    use crate::problem::InitialHistory;
    use alloc::vec;

    fn mv(v: &[f64]) -> ModeVector {
        ModeVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn linear_driven_equation_matches_exponential() {
        // dr = −r dω with ω(s) = s on [0, Δ]
        let g = DiagonalGenerator::new(vec![0.0]).unwrap();
        let delta: f64 = 0.5;
        let start = mv(&[1.3]);
        let exact = 1.3 * (-delta).exp();
        let mut prev = f64::INFINITY;
        for n in [1, 2, 4, 8] {
            let r = lawson_rk4(&g, &start, 0.0, n, |_, r| Ok(r.scaled(-delta))).unwrap();
            let err = (r[0] - exact).abs();
            // RK4: error ≈ C (Δ/n)^5 per step, O((Δ/n)^4) overall
            assert!(err <= 1e-2 * (delta / n as f64).powi(4));
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn linear_part_is_exact() {
        let g = DiagonalGenerator::new(vec![-50.0, -1.0]).unwrap();
        let start = mv(&[1.0, 2.0]);
        let r = lawson_rk4(&g, &start, 0.3, 1, |_, r| Ok(ModeVector::zeros(r.dim()))).unwrap();
        assert_eq!(r, g.semigroup_apply(0.3, &start).unwrap());
    }

    fn problem(sigma: VectorField) -> SpdeProblem {
        SpdeProblem::new(
            DiagonalGenerator::new(vec![-1.0]).unwrap(),
            Coefficients {
                drift: VectorField::zero(1).into(),
                diffusion: vec![Field::from(sigma)],
                jump: JumpField::zero(1),
                lipschitz: LipschitzProfile::constant(1.0).unwrap(),
            },
            QWienerSpec::standard(1),
            JumpMeasureSpec::none(),
            InitialHistory::constant(mv(&[1.0])),
            0.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_fields_and_zero_segments() {
        let p = problem(VectorField::zero(1));
        let s = OdeSettings::default();
        let start = mv(&[0.7]);
        let (r, _) = ode_along_segment(&p, &start, 0.0, 0.25, &[0.4], &s, 1e-12).unwrap();
        assert!((r[0] - 0.7 * (-0.25f64).exp()).abs() < 1e-15);
        let (r, n) = ode_along_segment(&p, &start, 0.0, 0.0, &[0.0], &s, 1e-12).unwrap();
        assert_eq!((r, n), (start, 0));
    }

    #[test]
    fn additive_noise_segment_is_exact_convolution() {
        // dr = −r dt + 0.5 dω along ω(s) = c s: r(τ) = e^{−τ} r0 + 0.5 c (1 − e^{−τ})
        let p = problem(VectorField::Constant(mv(&[0.5])));
        let (tau, c) = (0.2, 1.7);
        let (r, _) =
            ode_along_segment(&p, &mv(&[1.0]), 0.0, tau, &[c * tau], &OdeSettings::default(), 1e-12).unwrap();
        let exact = (-tau).exp() + 0.5 * c * (1.0 - (-tau).exp());
        assert!((r[0] - exact).abs() < 1e-13);
    }

    #[test]
    fn impossible_budget_is_rejected() {
        let p = problem(VectorField::Linear(crate::coefficients::LinearMap::diagonal(&[3.0])));
        let settings = OdeSettings {
            substeps: 1,
            max_substeps: 4,
            tolerance: 1e-4,
        };
        let res = ode_along_segment(&p, &mv(&[1.0]), 0.0, 1.0, &[4.0], &settings, 1e-15);
        assert!(matches!(res, Err(Error::OdeRejected { .. })));
    }
}
