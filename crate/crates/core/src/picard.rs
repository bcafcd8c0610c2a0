//! Picard iteration on contraction intervals (the reference solver) and the
//! first variation process along a frozen path.

use alloc::vec::Vec;

use crate::coefficients::LipschitzProfile;
use crate::error::{check_dim, Error, Result};
use crate::exec::Executor;
use crate::frame::FrameSde;
use crate::math::sqrt;
use crate::noise::NoiseIncrement;
use crate::problem::{grid_times, InitialHistory, PathView, SpdeProblem};
use crate::schemes::step_increment;
use crate::spectral::{FrameVector, GroupFrame, ModeVector};

/// Ensemble of paths on a common time grid starting at `t0`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCurve {
    pub times: Vec<f64>,
    /// `paths[j][i]` is trajectory `j` at `times[i]`.
    pub paths: Vec<Vec<ModeVector>>,
}

impl GridCurve {
    pub fn new(times: Vec<f64>, paths: Vec<Vec<ModeVector>>) -> Result<Self> {
        if times.is_empty() || paths.is_empty() {
            return Err(Error::contract("grid curve needs times and at least one path"));
        }
        for p in &paths {
            check_dim("grid curve path length", times.len(), p.len())?;
        }
        Ok(Self { times, paths })
    }

    pub fn ensemble_size(&self) -> usize {
        self.paths.len()
    }

    /// `E‖r_{t_i}‖²` over the ensemble.
    pub fn mean_square_at(&self, i: usize) -> f64 {
        self.paths.iter().map(|p| p[i].norm_sq()).sum::<f64>() / self.paths.len() as f64
    }

    /// `max_i √(E‖r_{t_i}‖²)`
    pub fn sup_norm(&self) -> f64 {
        (0..self.times.len())
            .map(|i| sqrt(self.mean_square_at(i)))
            .fold(0.0, f64::max)
    }

    /// `max_i √(E‖r_{t_i} − r'_{t_i}‖²)` on a shared grid.
    pub fn gap(&self, other: &GridCurve) -> Result<f64> {
        check_dim("grid curve times", self.times.len(), other.times.len())?;
        check_dim("grid curve ensemble", self.paths.len(), other.paths.len())?;
        Ok(sup_gap(&self.paths, &other.paths, 0..self.times.len()))
    }
}

fn sup_gap(a: &[Vec<ModeVector>], b: &[Vec<ModeVector>], range: core::ops::Range<usize>) -> f64 {
    let n = a.len() as f64;
    range
        .map(|i| {
            let ms = a
                .iter()
                .zip(b)
                .map(|(x, y)| (&x[i] - &y[i]).norm_sq())
                .sum::<f64>()
                / n;
            sqrt(ms)
        })
        .fold(0.0, f64::max)
}

/// `f(t) = 12 (t + 2)`
pub fn contraction_f(t: f64) -> f64 {
    12.0 * (t + 2.0)
}

/// Breakpoints `t0 = T_0 < T_1 < … = T` with
/// `f(T_{n+1} − T_n) (g(T_{n+1}) − g(T_n)) ≤ ε²` and `g(T_{n+1}) − g(T_n) ≤ ε`,
/// `g(t) = ∫_0^t L²`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionPartition {
    pub breakpoints: Vec<f64>,
    pub epsilon: f64,
}

impl ContractionPartition {
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.breakpoints.windows(2).map(|w| (w[0], w[1]))
    }

    /// Whether both conditions hold on every interval.
    pub fn satisfies(&self, profile: &LipschitzProfile) -> bool {
        self.intervals().all(|(a, b)| {
            let dg = profile.energy(b) - profile.energy(a);
            contraction_f(b - a) * dg <= self.epsilon * self.epsilon * (1.0 + 1e-12) && dg <= self.epsilon
        })
    }
}

/// Greedy left-to-right placement: each interval is the longest one (found by
/// bisection on the monotone constraint) that satisfies both conditions.
pub fn build_partition(
    profile: &LipschitzProfile,
    t0: f64,
    horizon: f64,
    epsilon: f64,
) -> Result<ContractionPartition> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::contract("contraction target must lie in (0, 1)"));
    }
    if !(horizon > t0) {
        return Err(Error::contract("partition needs T > t0"));
    }
    let ok = |a: f64, b: f64| {
        let dg = profile.energy(b) - profile.energy(a);
        contraction_f(b - a) * dg <= epsilon * epsilon && dg <= epsilon
    };
    let mut breakpoints = alloc::vec![t0];
    let mut a = t0;
    while a < horizon {
        let b = if ok(a, horizon) {
            horizon
        } else {
            let (mut lo, mut hi) = (a, horizon);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if ok(a, mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if lo <= a {
                return Err(Error::contract("Lipschitz profile too large to partition"));
            }
            lo
        };
        breakpoints.push(b);
        a = b;
    }
    Ok(ContractionPartition {
        breakpoints,
        epsilon,
    })
}

/// Where the Picard map is evaluated.
#[derive(Clone, Copy, Debug)]
pub enum PicardSpace<'a> {
    /// Mild form on mode space: `Λ_{n+1} = S_Δ(Λ_n + increment(r_n))`.
    Modes,
    /// Lifted form: `R_{n+1} = R_n + U^{t0}_{−t_n} ℓ increment(r_n)`, `Λ_n = π U^{t0}_{t_n} R_n`.
    Frame(&'a GroupFrame),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardSettings {
    pub max_iters: usize,
    /// Stop when the sup-grid root-mean-square change is at most this.
    pub tol: f64,
}

impl Default for PicardSettings {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalReport {
    pub start: f64,
    pub end: f64,
    pub iterations: usize,
    /// Largest ratio of successive iterate gaps (only ratios whose previous
    /// gap is well above the stopping tolerance are counted).
    pub contraction: f64,
    pub final_gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PicardSolution {
    pub curve: GridCurve,
    pub intervals: Vec<IntervalReport>,
}

/// One application of `Λ_h` to trajectory `path` on grid points
/// `first+1 ..= last`, leaving earlier points untouched.
#[allow(clippy::too_many_arguments)]
fn apply_lambda(
    problem: &SpdeProblem,
    space: PicardSpace<'_>,
    times: &[f64],
    noise: &[NoiseIncrement],
    path: &[ModeVector],
    first: usize,
    last: usize,
    frame_start: Option<&FrameVector>,
) -> Result<(Vec<ModeVector>, Option<FrameVector>)> {
    let mut out = path.to_vec();
    match space {
        PicardSpace::Modes => {
            let mut acc = path[first].clone();
            for n in first..last {
                let view = PathView {
                    initial: &problem.initial,
                    t0: problem.t0,
                    times: &times[..=n],
                    values: &path[..=n],
                };
                acc += &step_increment(&problem.coefficients, &problem.wiener, &problem.jumps, &view, &noise[n])?;
                acc = problem.generator.semigroup_apply(noise[n].dt, &acc)?;
                out[n + 1] = acc.clone();
            }
            Ok((out, None))
        }
        PicardSpace::Frame(frame) => {
            let sde = FrameSde::new(frame, problem)?;
            let mut r = frame_start
                .cloned()
                .ok_or_else(|| Error::contract("frame Picard needs the frame state at the interval start"))?;
            for n in first..last {
                let view = PathView {
                    initial: &problem.initial,
                    t0: problem.t0,
                    times: &times[..=n],
                    values: &path[..=n],
                };
                let inc = step_increment(&problem.coefficients, &problem.wiener, &problem.jumps, &view, &noise[n])?;
                r.axpy(1.0, &sde.lift(times[n], &inc)?);
                out[n + 1] = sde.pull(times[n + 1], &r)?;
            }
            Ok((out, Some(r)))
        }
    }
}

/// Picard iteration `r ← Λ_h(r)` interval by interval on the grid defined by
/// `noise[j]` (identical step lengths for every trajectory). Noise is frozen
/// across iterations.
///
/// Interval ends are snapped down to grid points (at least one step each).
pub fn picard_solve<E: Executor>(
    problem: &SpdeProblem,
    space: PicardSpace<'_>,
    partition: &ContractionPartition,
    noise: &[Vec<NoiseIncrement>],
    settings: &PicardSettings,
    exec: &E,
) -> Result<PicardSolution> {
    if noise.is_empty() || noise[0].is_empty() {
        return Err(Error::contract("Picard needs at least one trajectory and one step"));
    }
    let dts: Vec<f64> = noise[0].iter().map(|i| i.dt).collect();
    for n in noise {
        check_dim("noise steps", dts.len(), n.len())?;
        if n.iter().zip(&dts).any(|(i, dt)| i.dt != *dt) {
            return Err(Error::contract("all trajectories must share one grid"));
        }
    }
    let times = grid_times(problem.t0, &dts);
    let steps = dts.len();
    let start = problem.start_value().clone();
    let mut paths: Vec<Vec<ModeVector>> = noise.iter().map(|_| alloc::vec![start.clone(); steps + 1]).collect();
    let mut frame_states = match space {
        PicardSpace::Frame(frame) => {
            let r0 = frame.embed(&start)?;
            Some(alloc::vec![r0; noise.len()])
        }
        PicardSpace::Modes => None,
    };
    let mut intervals = Vec::new();
    let mut first = 0;
    let ends: Vec<f64> = partition.breakpoints.iter().skip(1).copied().collect();
    for (k, end) in ends.iter().enumerate() {
        if first >= steps {
            break;
        }
        let mut last = times.partition_point(|t| *t <= end + 1e-12 * (1.0 + end.abs())) - 1;
        if k + 1 == ends.len() {
            last = steps;
        }
        let last = last.max(first + 1).min(steps);
        // initial guess: constant continuation of the interval start
        for p in paths.iter_mut() {
            let v = p[first].clone();
            for x in &mut p[first + 1..=last] {
                *x = v.clone();
            }
        }
        let mut report = IntervalReport {
            start: times[first],
            end: times[last],
            iterations: 0,
            contraction: 0.0,
            final_gap: f64::INFINITY,
        };
        let mut prev_gap: Option<f64> = None;
        let mut next_frames = None;
        loop {
            if report.iterations >= settings.max_iters {
                return Err(Error::PicardNotConverged {
                    iterations: report.iterations,
                    start: report.start,
                    end: report.end,
                    gap: report.final_gap,
                });
            }
            let results = exec.map_indexed(paths.len(), |j| {
                apply_lambda(
                    problem,
                    space,
                    &times,
                    &noise[j],
                    &paths[j],
                    first,
                    last,
                    frame_states.as_ref().map(|f| &f[j]),
                )
            });
            let mut new_paths = Vec::with_capacity(paths.len());
            let mut frames = Vec::new();
            for r in results {
                let (p, f) = r?;
                new_paths.push(p);
                if let Some(f) = f {
                    frames.push(f);
                }
            }
            let gap = sup_gap(&new_paths, &paths, first + 1..last + 1);
            report.iterations += 1;
            if let Some(prev) = prev_gap {
                if prev > 100.0 * settings.tol && prev > 0.0 {
                    report.contraction = report.contraction.max(gap / prev);
                }
            }
            prev_gap = Some(gap);
            report.final_gap = gap;
            paths = new_paths;
            if !frames.is_empty() {
                next_frames = Some(frames);
            }
            if gap <= settings.tol {
                break;
            }
        }
        if let Some(f) = next_frames {
            frame_states = Some(f);
        }
        intervals.push(report);
        first = last;
    }
    Ok(PicardSolution {
        curve: GridCurve::new(times, paths)?,
        intervals,
    })
}

/// `J_t • w` along a frozen base path: the discrete derivative of the Euler
/// splitting with respect to the initial value,
/// `J⁺ = S_Δ [J + Dα J Δ − D(∫γ F) J Δ + Σ_i √λ_i Dσ_i J ΔW^i + Σ_jumps Dγ(·, x) J]`.
///
/// `base.paths[j]` must be the Euler path driven by `noise[j]`.
pub fn first_variation_solve<E: Executor>(
    problem: &SpdeProblem,
    base: &GridCurve,
    noise: &[Vec<NoiseIncrement>],
    direction: &InitialHistory,
    exec: &E,
) -> Result<GridCurve> {
    if problem.coefficients.is_delayed() {
        return Err(Error::Unsupported("first variation with delayed coefficients".into()));
    }
    check_dim("variation ensemble", base.ensemble_size(), noise.len())?;
    check_dim("variation direction", problem.dim(), direction.dim())?;
    let w0 = direction.value_at(problem.t0).clone();
    let c = &problem.coefficients;
    let q = problem.wiener.eigenvalues();
    let results = exec.map_indexed(noise.len(), |j| -> Result<Vec<ModeVector>> {
        let path = &base.paths[j];
        check_dim("variation base path", noise[j].len() + 1, path.len())?;
        let mut out = Vec::with_capacity(path.len());
        let mut v = w0.clone();
        out.push(v.clone());
        for (n, inc) in noise[j].iter().enumerate() {
            let t = base.times[n];
            let r = &path[n];
            let mut next = v.clone();
            next.axpy(inc.dt, &c.drift.directional_derivative(t, r, &v)?);
            if problem.jumps.is_active() {
                let dcomp = problem
                    .jumps
                    .integrate_truncated(r.dim(), |x| c.jump.directional_derivative(t, r, x, &v))?;
                next.axpy(-inc.dt, &dcomp);
            }
            for ((col, l), dw) in c.diffusion.iter().zip(q).zip(&inc.brownian) {
                if *dw != 0.0 {
                    next.axpy(sqrt(*l) * dw, &col.directional_derivative(t, r, &v)?);
                }
            }
            for jump in &inc.jumps {
                next += &c.jump.directional_derivative(t, r, jump.mark, &v)?;
            }
            v = problem.generator.semigroup_apply(inc.dt, &next)?;
            out.push(v.clone().ensure_finite("first variation")?);
        }
        Ok(out)
    });
    let paths = results.into_iter().collect::<Result<Vec<_>>>()?;
    GridCurve::new(base.times.clone(), paths)
}

/// Euler paths for an ensemble of frozen noise, as a [`GridCurve`].
pub fn euler_curve<E: Executor>(
    problem: &SpdeProblem,
    noise: &[Vec<NoiseIncrement>],
    exec: &E,
) -> Result<GridCurve> {
    if noise.is_empty() {
        return Err(Error::contract("need at least one trajectory"));
    }
    let dts: Vec<f64> = noise[0].iter().map(|i| i.dt).collect();
    let paths = exec
        .map_indexed(noise.len(), |j| crate::schemes::euler_path(problem, &noise[j]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    GridCurve::new(grid_times(problem.t0, &dts), paths)
}

/// Picard residual `‖Λ_h(r) − r‖` of a curve, on the whole grid.
pub fn fixed_point_residual<E: Executor>(
    problem: &SpdeProblem,
    curve: &GridCurve,
    noise: &[Vec<NoiseIncrement>],
    exec: &E,
) -> Result<f64> {
    let steps = curve.times.len() - 1;
    let images = exec
        .map_indexed(noise.len(), |j| {
            apply_lambda(problem, PicardSpace::Modes, &curve.times, &noise[j], &curve.paths[j], 0, steps, None)
                .map(|x| x.0)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(sup_gap(&images, &curve.paths, 0..curve.times.len()))
}
