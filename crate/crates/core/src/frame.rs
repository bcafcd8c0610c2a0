//! The moving frame: lift the SPDE to an SDE on the dilation space with
//! coefficients `U^{t0}_{−t} ℓ F(π U^{t0}_t R)` and push solutions back by
//! `r_t = π U^{t0}_t R_t`.

use alloc::vec::Vec;

use crate::coefficients::{compensator_drift, LipschitzProfile, PointState};
use crate::error::{check_dim, Error, Result};
use crate::math::exp;
use crate::noise::NoiseIncrement;
use crate::problem::{PathView, SpdeProblem};
use crate::schemes::step_increment;
use crate::spectral::{FrameKind, FrameVector, GroupFrame, ModeVector};

/// Time argument of the clamped group `U^{t0}_t`: `U_{t−t0}` for `t ≥ t0`,
/// the identity for `|t| < t0`, `U_{t0+t}` for `t ≤ −t0`.
pub fn clamp_time(t: f64, t0: f64) -> f64 {
    if t >= t0 {
        t - t0
    } else if t <= -t0 {
        t0 + t
    } else {
        0.0
    }
}

/// The SPDE seen in the moving frame of `frame`.
pub struct FrameSde<'a> {
    pub frame: &'a GroupFrame,
    pub problem: &'a SpdeProblem,
}

impl<'a> FrameSde<'a> {
    pub fn new(frame: &'a GroupFrame, problem: &'a SpdeProblem) -> Result<Self> {
        check_dim("frame modes", problem.dim(), frame.dim())?;
        if frame.generator().eigenvalues() != problem.generator.eigenvalues() {
            return Err(Error::contract("frame was built for a different generator"));
        }
        if frame.kind() == FrameKind::CauchyDilation
            && frame.horizon() < problem.horizon - problem.t0 - 1e-12
        {
            return Err(Error::contract(
                "dilation horizon is shorter than the simulation interval",
            ));
        }
        Ok(Self { frame, problem })
    }

    pub fn t0(&self) -> f64 {
        self.problem.t0
    }

    /// `U^{t0}_t R`
    pub fn group(&self, t: f64, r: &FrameVector) -> Result<FrameVector> {
        self.frame.group_apply(clamp_time(t, self.t0()), r)
    }

    /// `π U^{t0}_t R`
    pub fn pull(&self, t: f64, r: &FrameVector) -> Result<ModeVector> {
        self.frame.project(&self.group(t, r)?)
    }

    /// `U^{t0}_{−t} ℓ v`
    pub fn lift(&self, t: f64, v: &ModeVector) -> Result<FrameVector> {
        let mut out = self.frame.embed(v)?;
        self.frame.group_apply_in_place(clamp_time(-t, self.t0()), &mut out)?;
        Ok(out)
    }

    /// `R_{t0} = ℓ h_{t0}`
    pub fn initial_state(&self) -> Result<FrameVector> {
        self.frame.embed(self.problem.start_value())
    }

    /// Lifted drift `α̃(t, R)`.
    pub fn lifted_drift(&self, t: f64, r: &FrameVector) -> Result<FrameVector> {
        let state = self.pull(t, r)?;
        let v = self.problem.coefficients.drift.eval(&PointState { t, state: &state })?;
        self.lift(t, &v)
    }

    /// Lifted diffusion column `σ̃_i(t, R)`.
    pub fn lifted_diffusion(&self, t: f64, r: &FrameVector, i: usize) -> Result<FrameVector> {
        let col = self
            .problem
            .coefficients
            .diffusion
            .get(i)
            .ok_or_else(|| Error::contract("diffusion column out of range"))?;
        let state = self.pull(t, r)?;
        self.lift(t, &col.eval(&PointState { t, state: &state })?)
    }

    /// Lifted jump coefficient `γ̃(t, R, x)`.
    pub fn lifted_jump(&self, t: f64, r: &FrameVector, x: f64) -> Result<FrameVector> {
        let state = self.pull(t, r)?;
        let v = self.problem.coefficients.jump.eval(t, &state, x, &self.problem.jumps)?;
        self.lift(t, &v)
    }

    /// Lifted compensator `∫_{B_n} γ̃(t, R, x) F(dx)`.
    pub fn lifted_compensator(&self, t: f64, r: &FrameVector) -> Result<FrameVector> {
        let state = self.pull(t, r)?;
        let v = compensator_drift(&self.problem.coefficients.jump, t, &state, &self.problem.jumps)?;
        self.lift(t, &v)
    }
}

/// `r_t = π U^{t0}_t R_t` on a grid.
pub fn push_solution(sde: &FrameSde<'_>, times: &[f64], path: &[FrameVector]) -> Result<Vec<ModeVector>> {
    check_dim("pushed path", times.len(), path.len())?;
    times.iter().zip(path).map(|(t, r)| sde.pull(*t, r)).collect()
}

/// Frame Euler path with its pushed counterpart.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePath {
    pub times: Vec<f64>,
    pub frame_states: Vec<FrameVector>,
    pub pushed: Vec<ModeVector>,
}

/// Euler scheme for the lifted SDE:
/// `R⁺ = R + α̃ dt − ∫γ̃ F dt + Σ σ̃_i √λ_i ΔW^i + Σ γ̃(·, x)`.
///
/// Every lifted coefficient is `U^{t0}_{−t} ℓ` applied to the corresponding
/// SPDE coefficient at `r = π U^{t0}_t R`, so the whole increment is lifted at
/// once. Delayed coefficients read the pushed path.
pub fn solve_in_frame(sde: &FrameSde<'_>, noise: &[NoiseIncrement]) -> Result<FramePath> {
    let p = sde.problem;
    let mut times = Vec::with_capacity(noise.len() + 1);
    let mut frame_states = Vec::with_capacity(noise.len() + 1);
    let mut pushed = Vec::with_capacity(noise.len() + 1);
    times.push(p.t0);
    frame_states.push(sde.initial_state()?);
    pushed.push(sde.pull(p.t0, &frame_states[0])?);
    for inc in noise {
        let t = *times.last().unwrap();
        let view = PathView {
            initial: &p.initial,
            t0: p.t0,
            times: &times,
            values: &pushed,
        };
        let delta = step_increment(&p.coefficients, &p.wiener, &p.jumps, &view, inc)?;
        let mut next = frame_states.last().unwrap().clone();
        next.axpy(1.0, &sde.lift(t, &delta)?);
        if !next.is_finite() {
            return Err(Error::NonFinite("frame Euler step"));
        }
        let t_next = t + inc.dt;
        pushed.push(sde.pull(t_next, &next)?);
        frame_states.push(next);
        times.push(t_next);
    }
    Ok(FramePath {
        times,
        frame_states,
        pushed,
    })
}

/// `‖ℓ‖ (1_{[0,t0)}(t) + M² e^{2ω(t−t0)} 1_{[t0,∞)}(t)) ‖π‖`
pub fn frame_lipschitz_factor(frame: &GroupFrame, t0: f64, t: f64) -> f64 {
    let (m, omega) = frame.growth_constants();
    let inner = if t < t0 {
        1.0
    } else {
        m * m * exp(2.0 * omega * (t - t0))
    };
    frame.embedding_norm() * inner * frame.projection_norm()
}

/// Lipschitz profile of the lifted coefficients.
///
/// The factor is applied on the profile's breakpoints, on `t0`, and (when it
/// grows, `ω > 0`) on `pieces` equal cells of `[t0, horizon]`; each cell takes
/// the value at its right end so the result bounds the exact transform on
/// `[0, horizon]`.
pub fn transform_lipschitz(
    profile: &LipschitzProfile,
    frame: &GroupFrame,
    t0: f64,
    horizon: f64,
    pieces: usize,
) -> Result<LipschitzProfile> {
    if !(horizon > t0) || pieces == 0 {
        return Err(Error::contract("transform needs horizon > t0 and at least one piece"));
    }
    let (_, omega) = frame.growth_constants();
    let mut breaks: Vec<f64> = profile.breaks().to_vec();
    if t0 > 0.0 {
        breaks.push(t0);
    }
    if omega > 0.0 {
        let h = (horizon - t0) / pieces as f64;
        breaks.extend((1..pieces).map(|k| t0 + k as f64 * h));
        breaks.push(horizon);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let values = breaks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let right = breaks.get(i + 1).copied().unwrap_or(*b);
            let sample = if omega > 0.0 { right } else { *b };
            // L is constant on the cell, the factor is monotone on it
            profile.eval(*b) * frame_lipschitz_factor(frame, t0, sample)
        })
        .collect();
    let out = LipschitzProfile::new(breaks, values)?;
    Ok(match profile.radius() {
        Some(r) => out.with_radius(r),
        None => out,
    })
}
