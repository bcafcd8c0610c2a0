//! Exponential Euler splitting: explicit in the coefficients, exact in the
//! linear part.

use alloc::vec::Vec;

use crate::coefficients::{compensator_drift, Coefficients, PathHistory, PointState};
use crate::error::{check_dim, Result};
use crate::noise::{JumpMeasureSpec, NoiseIncrement, QWienerSpec};
use crate::problem::{PathView, SpdeProblem};
use crate::spectral::{DiagonalGenerator, ModeVector};

/// `(α(r) − ∫_{B_n} γ(r, x) F(dx)) dt + Σ_i σ_i(r) √λ_i ΔW^i + Σ_jumps γ(r, x)`
/// evaluated at the pre-step path.
pub fn step_increment(
    c: &Coefficients,
    wiener: &QWienerSpec,
    jumps: &JumpMeasureSpec,
    path: &dyn PathHistory,
    inc: &NoiseIncrement,
) -> Result<ModeVector> {
    let t = path.time();
    let r = path.current();
    check_dim("brownian increment", wiener.dim(), inc.brownian.len())?;
    let mut out = c.drift.eval(path)?.scaled(inc.dt);
    if jumps.is_active() {
        out.axpy(-inc.dt, &compensator_drift(&c.jump, t, r, jumps)?);
    }
    for ((col, l), dw) in c.diffusion.iter().zip(wiener.eigenvalues()).zip(&inc.brownian) {
        if *dw != 0.0 {
            out.axpy(crate::math::sqrt(*l) * dw, &col.eval(path)?);
        }
    }
    for j in &inc.jumps {
        out += &c.jump.eval(t, r, j.mark, jumps)?;
    }
    Ok(out)
}

/// `r⁺ = S_dt [r + increment]` for Markovian coefficients.
pub fn euler_split_step(
    state: &ModeVector,
    generator: &DiagonalGenerator,
    c: &Coefficients,
    wiener: &QWienerSpec,
    jumps: &JumpMeasureSpec,
    t: f64,
    inc: &NoiseIncrement,
) -> Result<ModeVector> {
    let mut next = state.clone();
    next += &step_increment(c, wiener, jumps, &PointState { t, state }, inc)?;
    generator.semigroup_apply(inc.dt, &next)
}

/// Euler path on `[t0, T]` driven by `noise` (one increment per step).
/// Returns the states at `t0` and after every step.
pub fn euler_path(problem: &SpdeProblem, noise: &[NoiseIncrement]) -> Result<Vec<ModeVector>> {
    let mut times = Vec::with_capacity(noise.len() + 1);
    let mut values = Vec::with_capacity(noise.len() + 1);
    times.push(problem.t0);
    values.push(problem.start_value().clone());
    for inc in noise {
        let view = PathView {
            initial: &problem.initial,
            t0: problem.t0,
            times: &times,
            values: &values,
        };
        let mut next = view.current().clone();
        next += &step_increment(&problem.coefficients, &problem.wiener, &problem.jumps, &view, inc)?;
        let next = problem.generator.semigroup_apply(inc.dt, &next)?;
        let t = *times.last().unwrap() + inc.dt;
        times.push(t);
        values.push(next.ensure_finite("Euler step")?);
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Field, JumpField, LipschitzProfile, VectorField};
    use crate::noise::{Jump, MarkDistribution};
    use alloc::vec;

    fn mv(v: &[f64]) -> ModeVector {
        ModeVector::new(v.to_vec()).unwrap()
    }

    fn scalar(alpha: VectorField, sigma: VectorField, jump: JumpField) -> Coefficients {
        Coefficients {
            drift: alpha.into(),
            diffusion: vec![Field::from(sigma)],
            jump,
            lipschitz: LipschitzProfile::constant(1.0).unwrap(),
        }
    }

    #[test]
    fn zero_fields_apply_the_semigroup() {
        let g = DiagonalGenerator::new(vec![-1.0, -2.0]).unwrap();
        let c = Coefficients {
            drift: VectorField::zero(2).into(),
            diffusion: vec![VectorField::zero(2).into()],
            jump: JumpField::zero(2),
            lipschitz: LipschitzProfile::constant(0.0).unwrap(),
        };
        let r = mv(&[1.0, 1.0]);
        let inc = NoiseIncrement {
            dt: 0.3,
            brownian: vec![0.7],
            jumps: vec![],
        };
        let out = euler_split_step(&r, &g, &c, &QWienerSpec::standard(1), &JumpMeasureSpec::none(), 0.0, &inc)
            .unwrap();
        assert_eq!(out, g.semigroup_apply(0.3, &r).unwrap());
    }

    #[test]
    fn constant_drift_step() {
        let g = DiagonalGenerator::new(vec![-1.0]).unwrap();
        let c = scalar(VectorField::Constant(mv(&[1.0])), VectorField::zero(1), JumpField::zero(1));
        let inc = NoiseIncrement::zero(0.1, 1);
        let out = euler_split_step(&mv(&[0.0]), &g, &c, &QWienerSpec::standard(1), &JumpMeasureSpec::none(), 0.0, &inc)
            .unwrap();
        assert!((out[0] - 0.1 * (-0.1f64).exp()).abs() < 1e-16);
        assert!((out[0] - 0.09048374).abs() < 1e-8);
    }

    #[test]
    fn single_jump_step() {
        let g = DiagonalGenerator::new(vec![0.0]).unwrap();
        let spec = JumpMeasureSpec::new(
            1.5,
            MarkDistribution::Discrete {
                points: vec![2.0],
                weights: vec![1.0],
            },
        )
        .unwrap();
        let c = scalar(VectorField::zero(1), VectorField::zero(1), JumpField::mark_times(mv(&[1.0])));
        let inc = NoiseIncrement {
            dt: 0.2,
            brownian: vec![0.0],
            jumps: vec![Jump { offset: 0.1, mark: 2.0 }],
        };
        let r = mv(&[0.5]);
        let out = euler_split_step(&r, &g, &c, &QWienerSpec::standard(1), &spec, 0.0, &inc).unwrap();
        // compensator ∫ γ F(dx) = 1.5 * 2
        assert!((out[0] - (0.5 + 2.0 - 3.0 * 0.2)).abs() < 1e-15);
    }
}
