//! Exact oracles, convergence-order estimation, a backward Kolmogorov
//! reference solver for scalar problems, residuals of the mild and weak
//! formulations, and the jump-truncation stability experiment.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::coefficients::{compensator_drift, jump_tail_energy, VectorField};
use crate::error::{check_dim, Error, Result};
use crate::exec::Executor;
use crate::math::{exp, log2, phi1, sqrt, student_t975};
use crate::noise::{aggregate, mean_and_stderr, sample_path, MarkDistribution, NoiseIncrement, RngStream};
use crate::picard::GridCurve;
use crate::problem::{PathView, SpdeProblem};
use crate::schemes::{euler_path, step_increment, TestFunction};
use crate::spectral::{DiagonalGenerator, ModeVector};

/// Linear problem `dr = (A r + c) dt + s dW + ∫ γ (μ − F)` with state-free
/// `s` and `γ`, whose law is Gaussian plus an independent compensated jump part.
#[derive(Clone, Debug, PartialEq)]
pub struct OuOracle {
    pub generator: DiagonalGenerator,
    pub drift: ModeVector,
    /// `diffusion[k][i] = s_{k,i}`
    pub diffusion: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    /// `jump_covariance[k][l] = ∫_{B_n} γ_k γ_l F(dx)`; zero without jumps.
    pub jump_covariance: Vec<Vec<f64>>,
    pub r0: ModeVector,
    pub horizon: f64,
}

impl OuOracle {
    pub fn new(
        generator: DiagonalGenerator,
        drift: ModeVector,
        diffusion: Vec<Vec<f64>>,
        q: Vec<f64>,
        r0: ModeVector,
        horizon: f64,
    ) -> Result<Self> {
        let k = generator.dim();
        check_dim("oracle drift", k, drift.dim())?;
        check_dim("oracle start", k, r0.dim())?;
        check_dim("oracle diffusion rows", k, diffusion.len())?;
        for row in &diffusion {
            check_dim("oracle diffusion columns", q.len(), row.len())?;
        }
        Ok(Self {
            generator,
            drift,
            diffusion,
            q,
            jump_covariance: vec![vec![0.0; k]; k],
            r0,
            horizon,
        })
    }

    /// The oracle of a problem with constant drift, constant diffusion columns
    /// and (optionally) a jump field that does not depend on the state.
    pub fn from_problem(p: &SpdeProblem) -> Result<Self> {
        let unsupported = || Error::Unsupported("exact moments need constant coefficients".into());
        let constant = |f: &VectorField| -> Option<ModeVector> {
            match f {
                VectorField::Constant(c) => Some(c.clone()),
                VectorField::Linear(m) if m.frobenius() == 0.0 => Some(ModeVector::zeros(p.dim())),
                _ => None,
            }
        };
        let k = p.dim();
        let c = &p.coefficients;
        let drift = c.drift.markov().and_then(constant).ok_or_else(unsupported)?;
        let mut diffusion = vec![vec![0.0; c.diffusion.len()]; k];
        for (i, col) in c.diffusion.iter().enumerate() {
            let v = col.markov().and_then(constant).ok_or_else(unsupported)?;
            for (row, x) in diffusion.iter_mut().zip(v.as_slice()) {
                row[i] = *x;
            }
        }
        let mut o = Self::new(
            p.generator.clone(),
            drift,
            diffusion,
            p.wiener.eigenvalues().to_vec(),
            p.start_value().clone(),
            p.horizon - p.t0,
        )?;
        if p.jumps.is_active() && !c.jump.is_zero() {
            let (offset, slope) = match &c.jump {
                crate::coefficients::JumpField::AffineInMark { offset, slope } => {
                    (constant(offset).ok_or_else(unsupported)?, constant(slope).ok_or_else(unsupported)?)
                }
                _ => return Err(unsupported()),
            };
            let f = p.jumps.effective_intensity();
            let (m1, m2) = p.jumps.truncated_mark_moments();
            for a in 0..k {
                for b in 0..k {
                    let (oa, sa, ob, sb) = (offset[a], slope[a], offset[b], slope[b]);
                    o.jump_covariance[a][b] = f * (oa * ob + (oa * sb + sa * ob) * m1 + sa * sb * m2);
                }
            }
        }
        Ok(o)
    }

    fn noise_rate(&self, a: usize, b: usize) -> f64 {
        let brownian: f64 = self
            .q
            .iter()
            .enumerate()
            .map(|(i, l)| l * self.diffusion[a][i] * self.diffusion[b][i])
            .sum();
        brownian + self.jump_covariance[a][b]
    }

    /// Covariance matrix of `r_t` (row-major, `K × K`).
    pub fn covariance(&self, t: f64) -> Vec<f64> {
        let k = self.generator.dim();
        let a = self.generator.eigenvalues();
        let mut out = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                out[i * k + j] = self.noise_rate(i, j) * phi1(a[i] + a[j], t);
            }
        }
        out
    }
}

/// Mean and per-mode variance of the solution at time `t` (measured from `t0`).
pub fn ou_exact_moments(o: &OuOracle, t: f64) -> (ModeVector, Vec<f64>) {
    let a = o.generator.eigenvalues();
    let mean = ModeVector::from_fn(a.len(), |k| exp(a[k] * t) * o.r0[k] + o.drift[k] * phi1(a[k], t));
    let var = (0..a.len()).map(|k| o.noise_rate(k, k) * phi1(2.0 * a[k], t)).collect();
    (mean, var)
}

/// Mean and per-mode variance of the Euler splitting scheme with `steps`
/// equal steps on `[0, horizon]`, applied to the same linear problem.
pub fn euler_ou_moments(o: &OuOracle, steps: usize) -> (ModeVector, Vec<f64>) {
    let a = o.generator.eigenvalues();
    let dt = o.horizon / steps as f64;
    let mut mean = o.r0.clone();
    let mut var = vec![0.0; a.len()];
    for _ in 0..steps {
        for k in 0..a.len() {
            let e = exp(a[k] * dt);
            mean[k] = e * (mean[k] + o.drift[k] * dt);
            var[k] = e * e * (var[k] + o.noise_rate(k, k) * dt);
        }
    }
    (mean, var)
}

/// Exact Gaussian draw of `r_t` (no jumps; the jump part is not Gaussian).
pub fn sample_ou_exact<R: Rng + ?Sized>(o: &OuOracle, t: f64, rng: &mut R) -> Result<ModeVector> {
    if o.jump_covariance.iter().flatten().any(|x| *x != 0.0) {
        return Err(Error::Unsupported("exact sampling with jumps".into()));
    }
    let k = o.generator.dim();
    let chol = cholesky(&o.covariance(t), k);
    let z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
    let (mut out, _) = ou_exact_moments(o, t);
    for i in 0..k {
        out[i] += (0..=i).map(|j| chol[i * k + j] * z[j]).sum::<f64>();
    }
    Ok(out)
}

/// Lower Cholesky factor; rank-deficient directions get zero columns.
fn cholesky(m: &[f64], k: usize) -> Vec<f64> {
    let mut l = vec![0.0; k * k];
    let scale = (0..k).map(|i| m[i * k + i]).fold(0.0, f64::max);
    for j in 0..k {
        let d = m[j * k + j] - (0..j).map(|p| l[j * k + p] * l[j * k + p]).sum::<f64>();
        if d <= 1e-14 * scale {
            continue;
        }
        let d = sqrt(d);
        l[j * k + j] = d;
        for i in j + 1..k {
            let s = m[i * k + j] - (0..j).map(|p| l[i * k + p] * l[j * k + p]).sum::<f64>();
            l[i * k + j] = s / d;
        }
    }
    l
}

/// Least-squares fit of `log₂ error` against `log₂ step`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderEstimate {
    pub slope: f64,
    pub intercept: f64,
    /// 95% interval for the slope from the fit residuals (Student t).
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `false` when some refinement did not reduce the error.
    pub monotone: bool,
}

impl OrderEstimate {
    pub fn contains(&self, order: f64) -> bool {
        self.ci_lo <= order && order <= self.ci_hi
    }
}

/// `errors[i]` belongs to step size `Δ_0 / 2^i`; the slope is the order in `Δ`.
pub fn estimate_order(errors: &[f64]) -> Result<OrderEstimate> {
    let steps: Vec<f64> = (0..errors.len()).map(|i| libm::ldexp(1.0, -(i as i32))).collect();
    estimate_rate(&steps, errors)
}

/// Least-squares slope of `log error` against `log step`, for arbitrary
/// step sequences (e.g. decades of a perturbation size).
pub fn estimate_rate(steps: &[f64], errors: &[f64]) -> Result<OrderEstimate> {
    check_dim("rate fit", steps.len(), errors.len())?;
    if errors.len() < 3 {
        return Err(Error::contract("order estimation needs at least three levels"));
    }
    if errors.iter().chain(steps).any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::contract("errors and steps must be positive and finite"));
    }
    let n = errors.len() as f64;
    let xs: Vec<f64> = steps.iter().map(|h| log2(*h)).collect();
    let ys: Vec<f64> = errors.iter().map(|e| log2(*e)).collect();
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    if sxx == 0.0 {
        return Err(Error::contract("steps must not all coincide"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let half = student_t975(errors.len() - 2) * sqrt(rss / (n - 2.0) / sxx);
    // refinement order: decreasing step
    let mut order: Vec<usize> = (0..steps.len()).collect();
    order.sort_by(|a, b| steps[*b].total_cmp(&steps[*a]));
    Ok(OrderEstimate {
        slope,
        intercept,
        ci_lo: slope - half,
        ci_hi: slope + half,
        monotone: order.windows(2).all(|w| errors[w[1]] < errors[w[0]]),
    })
}

/// Grid for [`kolmogorov_reference`]: `nodes` points (odd) centred on the
/// start value spanning `± half_width`, `time_steps` Crank–Nicolson steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KolmogorovGrid {
    pub half_width: f64,
    pub nodes: usize,
    pub time_steps: usize,
}

impl Default for KolmogorovGrid {
    fn default() -> Self {
        Self {
            half_width: 8.0,
            nodes: 4001,
            time_steps: 2000,
        }
    }
}

/// `E g(r_T)` for a one-mode Markov problem from the backward equation
/// `∂_t u + (a r + α − ∫γF) ∂_r u + ½ Σ λ_i σ_i² ∂²_r u + ∫ (u(r + γ) − u(r)) F = 0`.
///
/// Local terms are Crank–Nicolson; the jump term is explicit second-order
/// Adams–Bashforth with linear interpolation. Boundaries use `∂²_r u = 0`.
/// Jump marks must be discrete.
pub fn kolmogorov_reference(problem: &SpdeProblem, g: &TestFunction, grid: &KolmogorovGrid) -> Result<f64> {
    if problem.dim() != 1 {
        return Err(Error::Unsupported("the Kolmogorov reference is scalar only".into()));
    }
    if problem.coefficients.is_delayed() {
        return Err(Error::Unsupported("Kolmogorov reference with delayed coefficients".into()));
    }
    if grid.nodes < 5 || grid.nodes.is_multiple_of(2) || grid.time_steps == 0 || !(grid.half_width > 0.0) {
        return Err(Error::contract("Kolmogorov grid needs an odd node count ≥ 5 and positive width"));
    }
    let jumps = &problem.jumps;
    let atoms: Vec<(f64, f64)> = if jumps.is_active() && !problem.coefficients.jump.is_zero() {
        match jumps.marks() {
            MarkDistribution::Discrete { points, weights } => {
                let n = jumps.truncation_level().unwrap_or(points.len()).min(points.len());
                points
                    .iter()
                    .zip(weights)
                    .take(n)
                    .map(|(p, w)| (*p, jumps.total_intensity() * w))
                    .collect()
            }
            MarkDistribution::Uniform { .. } => {
                return Err(Error::Unsupported("Kolmogorov reference with continuous marks".into()))
            }
        }
    } else {
        Vec::new()
    };
    let c = &problem.coefficients;
    let a = problem.generator.eigenvalues()[0];
    let q = problem.wiener.eigenvalues();
    let n = grid.nodes;
    let h = 2.0 * grid.half_width / (n - 1) as f64;
    let x0 = problem.start_value()[0] - grid.half_width;
    let xs: Vec<f64> = (0..n).map(|i| x0 + i as f64 * h).collect();
    let state = |x: f64| ModeVector::from_fn(1, |_| x);
    let dt = (problem.horizon - problem.t0) / grid.time_steps as f64;

    // (drift, diffusion) of the local operator at every node
    let local = |t: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut b = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for x in &xs {
            let s = state(*x);
            let mut drift = a * x + c.drift.eval_state(t, &s)?[0];
            if !atoms.is_empty() {
                drift -= compensator_drift(&c.jump, t, &s, jumps)?[0];
            }
            let mut diff = 0.0;
            for (col, l) in c.diffusion.iter().zip(q) {
                let v = col.eval_state(t, &s)?[0];
                diff += 0.5 * l * v * v;
            }
            b.push(drift);
            d.push(diff);
        }
        Ok((b, d))
    };
    // shifted positions r + γ(r, x) per atom
    let shifts = |t: f64| -> Result<Vec<Vec<f64>>> {
        atoms
            .iter()
            .map(|(m, _)| {
                xs.iter()
                    .map(|x| Ok(x + c.jump.eval_unchecked(t, &state(*x), *m)?[0]))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect()
    };
    let interp = |u: &[f64], y: f64| -> f64 {
        let p = (y - x0) / h;
        let i = (p.floor() as isize).clamp(0, n as isize - 2) as usize;
        let w = p - i as f64;
        (1.0 - w) * u[i] + w * u[i + 1]
    };
    let jump_term = |u: &[f64], shift: &[Vec<f64>]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for ((_, f), ys) in atoms.iter().zip(shift) {
            for i in 0..n {
                out[i] += f * (interp(u, ys[i]) - u[i]);
            }
        }
        out
    };

    let mut u: Vec<f64> = xs.iter().map(|x| g.eval(&state(*x))).collect::<Result<_>>()?;
    let mut prev_jump: Option<Vec<f64>> = None;
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for m in (0..grid.time_steps).rev() {
        let t_hi = problem.t0 + (m + 1) as f64 * dt;
        let t_mid = t_hi - 0.5 * dt;
        let (b, d) = local(t_mid)?;
        let jump_now = if atoms.is_empty() {
            None
        } else {
            Some(jump_term(&u, &shifts(t_hi)?))
        };
        for i in 1..n - 1 {
            let lo = d[i] / (h * h) - b[i] / (2.0 * h);
            let up = d[i] / (h * h) + b[i] / (2.0 * h);
            let di = -2.0 * d[i] / (h * h);
            let explicit = u[i] + 0.5 * dt * (lo * u[i - 1] + di * u[i] + up * u[i + 1]);
            let jump = match (&jump_now, &prev_jump) {
                (Some(j), Some(p)) => 1.5 * j[i] - 0.5 * p[i],
                (Some(j), None) => j[i],
                _ => 0.0,
            };
            rhs[i] = explicit + dt * jump;
            lower[i] = -0.5 * dt * lo;
            diag[i] = 1.0 - 0.5 * dt * di;
            upper[i] = -0.5 * dt * up;
        }
        // eliminate u_0 = 2u_1 − u_2 and u_{n−1} = 2u_{n−2} − u_{n−3}
        diag[1] += 2.0 * lower[1];
        upper[1] -= lower[1];
        diag[n - 2] += 2.0 * upper[n - 2];
        lower[n - 2] -= upper[n - 2];
        let interior = solve_tridiagonal(&lower[1..n - 1], &diag[1..n - 1], &upper[1..n - 1], &rhs[1..n - 1])?;
        u[1..n - 1].copy_from_slice(&interior);
        u[0] = 2.0 * u[1] - u[2];
        u[n - 1] = 2.0 * u[n - 2] - u[n - 3];
        prev_jump = jump_now;
    }
    let v = u[(n - 1) / 2];
    if !v.is_finite() {
        return Err(Error::NonFinite("Kolmogorov reference"));
    }
    Ok(v)
}

/// Thomas algorithm; `lower[0]` and `upper[last]` are ignored.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::contract("singular tridiagonal system"));
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom == 0.0 {
            return Err(Error::contract("singular tridiagonal system"));
        }
        c[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Monte-Carlo estimate (mean, stderr) of `E[g(r^p_T) − g(r^q_T)]` where both
/// Euler paths are driven by the same noise. The noise is sampled with the
/// specification of `p`; `q` sees it filtered to its own truncation set.
#[allow(clippy::too_many_arguments)]
pub fn paired_weak_difference<E: Executor>(
    p: &SpdeProblem,
    q: &SpdeProblem,
    g: &TestFunction,
    steps: usize,
    trajectories: usize,
    antithetic: bool,
    stream: RngStream,
    exec: &E,
) -> Result<(f64, f64)> {
    check_dim("paired Wiener dimension", p.wiener.dim(), q.wiener.dim())?;
    if trajectories < 2 || steps == 0 {
        return Err(Error::contract("paired estimate needs steps and two trajectories"));
    }
    let dts = p.uniform_steps(steps);
    let samples = exec
        .map_indexed(trajectories, |i| -> Result<f64> {
            let noise = sample_path(stream.trajectory(i as u32), &p.wiener, &p.jumps, &dts)?;
            let diff = |n: &[NoiseIncrement]| -> Result<f64> {
                let filtered: Vec<NoiseIncrement> =
                    n.iter().map(|inc| inc.filter_jumps(|x| q.jumps.in_truncation(x))).collect();
                let a = g.eval(euler_path(p, n)?.last().unwrap())?;
                let b = g.eval(euler_path(q, &filtered)?.last().unwrap())?;
                Ok(a - b)
            };
            if antithetic {
                let mirror: Vec<NoiseIncrement> = noise
                    .iter()
                    .map(|inc| NoiseIncrement {
                        dt: inc.dt,
                        brownian: inc.brownian.iter().map(|b| -b).collect(),
                        jumps: inc.jumps.clone(),
                    })
                    .collect();
                Ok(0.5 * (diff(&noise)? + diff(&mirror)?))
            } else {
                diff(&noise)
            }
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_and_stderr(&samples))
}

/// Every `factor`-th grid point of a curve.
pub fn subsample(curve: &GridCurve, factor: usize) -> Result<GridCurve> {
    if factor == 0 || !(curve.times.len() - 1).is_multiple_of(factor) {
        return Err(Error::contract("subsampling factor must divide the step count"));
    }
    let times = curve.times.iter().step_by(factor).copied().collect();
    let paths = curve.paths.iter().map(|p| p.iter().step_by(factor).cloned().collect()).collect();
    GridCurve::new(times, paths)
}

/// Residuals of the defining identities, evaluated for a coarse Euler path.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualReport {
    pub coarse_steps: usize,
    /// `max_n √E‖r_{t_n} − S_{t_n−t0} h − ∫ S_{t_n−s} (…)‖²`
    pub mild: f64,
    /// `max_n max_ζ √E⟨ζ, r_{t_n} − h − ∫ (A r + …)⟩²`
    pub weak: f64,
}

/// Solves with Euler on `noise_fine` aggregated by `factor`, holds the coarse
/// path constant between its grid points, and evaluates both identities with
/// the integrals discretized on the fine grid.
pub fn formulation_residuals<E: Executor>(
    problem: &SpdeProblem,
    noise_fine: &[Vec<NoiseIncrement>],
    factor: usize,
    zetas: &[ModeVector],
    exec: &E,
) -> Result<ResidualReport> {
    if noise_fine.is_empty() || zetas.is_empty() {
        return Err(Error::contract("residuals need trajectories and test vectors"));
    }
    for z in zetas {
        check_dim("test vector", problem.dim(), z.dim())?;
    }
    let fine_steps = noise_fine[0].len();
    if factor == 0 || !fine_steps.is_multiple_of(factor) {
        return Err(Error::contract("aggregation factor must divide the fine step count"));
    }
    let coarse_steps = fine_steps / factor;
    let a = problem.generator.eigenvalues();
    let per_path = exec
        .map_indexed(noise_fine.len(), |j| -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
            let coarse = aggregate(&noise_fine[j], factor)?;
            let path = euler_path(problem, &coarse)?;
            let times = crate::problem::grid_times(problem.t0, &coarse.iter().map(|i| i.dt).collect::<Vec<_>>());
            let mut mild = problem.start_value().clone();
            let mut weak = problem.start_value().clone();
            let mut mild_sq = vec![0.0; coarse_steps + 1];
            let mut weak_sq = vec![vec![0.0; zetas.len()]; coarse_steps + 1];
            for n in 0..coarse_steps {
                let view = PathView {
                    initial: &problem.initial,
                    t0: problem.t0,
                    times: &times[..=n],
                    values: &path[..=n],
                };
                for inc in &noise_fine[j][n * factor..(n + 1) * factor] {
                    let step = step_increment(&problem.coefficients, &problem.wiener, &problem.jumps, &view, inc)?;
                    mild += &step;
                    mild = problem.generator.semigroup_apply(inc.dt, &mild)?;
                    weak += &step;
                    weak.axpy(inc.dt, &ModeVector::from_fn(a.len(), |k| a[k] * path[n][k]));
                }
                mild_sq[n + 1] = (&path[n + 1] - &mild).norm_sq();
                let d = &path[n + 1] - &weak;
                for (z, slot) in zetas.iter().zip(weak_sq[n + 1].iter_mut()) {
                    let v = z.dot(&d);
                    *slot = v * v;
                }
            }
            Ok((mild_sq, weak_sq))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let m = per_path.len() as f64;
    let mut mild = 0.0f64;
    let mut weak = 0.0f64;
    for n in 0..=coarse_steps {
        mild = mild.max(sqrt(per_path.iter().map(|p| p.0[n]).sum::<f64>() / m));
        for z in 0..zetas.len() {
            weak = weak.max(sqrt(per_path.iter().map(|p| p.1[n][z]).sum::<f64>() / m));
        }
    }
    Ok(ResidualReport {
        coarse_steps,
        mild,
        weak,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityLevel {
    /// Truncation level `n`; `None` is `B_n = E`.
    pub level: Option<usize>,
    /// `C_n² = E ∫ ∫_{E∖B_n} ‖γ(r_s, x)‖² F(dx) ds` along the full solution.
    pub c_n_sq: f64,
    /// `max_t E‖r_t − r^n_t‖²` on the grid.
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub levels: Vec<StabilityLevel>,
    /// Smallest `K` with `error ≤ K C_n²` on every level where `C_n > 0`.
    pub k: f64,
    pub steps: usize,
    pub trajectories: usize,
}

impl StabilityReport {
    /// `max/min` of `error / C_n²` over levels with `C_n > 0`.
    pub fn ratio_spread(&self) -> f64 {
        let ratios: Vec<f64> = self
            .levels
            .iter()
            .filter(|l| l.c_n_sq > 0.0)
            .map(|l| l.error / l.c_n_sq)
            .collect();
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        if ratios.is_empty() || lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// `error ≤ K C_n²` everywhere, with equality-zero where `C_n = 0`.
    pub fn bound_holds(&self) -> bool {
        self.levels.iter().all(|l| {
            if l.c_n_sq == 0.0 {
                l.error == 0.0
            } else {
                l.error <= self.k * l.c_n_sq * (1.0 + 1e-12)
            }
        })
    }

    pub fn errors_nonincreasing(&self) -> bool {
        self.levels.windows(2).all(|w| w[1].error <= w[0].error)
    }
}

/// Euler solutions of the full problem and of its truncations to `B_n`,
/// coupled through shared noise (jumps outside `B_n` are dropped).
/// `C_n²` uses the full numerical solution in place of the exact one.
pub fn stability_experiment<E: Executor>(
    problem: &SpdeProblem,
    levels: &[Option<usize>],
    steps: usize,
    trajectories: usize,
    stream: RngStream,
    exec: &E,
) -> Result<StabilityReport> {
    if levels.is_empty() || steps == 0 || trajectories == 0 {
        return Err(Error::contract("stability experiment needs levels, steps and trajectories"));
    }
    let full = problem.with_jumps(problem.jumps.clone().with_truncation(None));
    let truncated: Vec<SpdeProblem> = levels
        .iter()
        .map(|l| full.with_jumps(full.jumps.clone().with_truncation(*l)))
        .collect();
    let dts = full.uniform_steps(steps);
    let times = crate::problem::grid_times(full.t0, &dts);
    // per trajectory: per level (max over grid of ‖r − r^n‖², …) and C_n² samples
    let per_path = exec
        .map_indexed(trajectories, |i| -> Result<Vec<(Vec<f64>, f64)>> {
            let noise = sample_path(stream.trajectory(i as u32), &full.wiener, &full.jumps, &dts)?;
            let reference = euler_path(&full, &noise)?;
            truncated
                .iter()
                .map(|p| {
                    let filtered: Vec<NoiseIncrement> =
                        noise.iter().map(|inc| inc.filter_jumps(|x| p.jumps.in_truncation(x))).collect();
                    let path = euler_path(p, &filtered)?;
                    let gaps = reference.iter().zip(&path).map(|(a, b)| (a - b).norm_sq()).collect();
                    let mut c = 0.0;
                    for (n, dt) in dts.iter().enumerate() {
                        c += dt * jump_tail_energy(&p.coefficients.jump, times[n], &reference[n], &p.jumps)?;
                    }
                    Ok((gaps, c))
                })
                .collect()
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let m = trajectories as f64;
    let mut out = Vec::with_capacity(levels.len());
    for (li, level) in levels.iter().enumerate() {
        let error = (0..times.len())
            .map(|n| per_path.iter().map(|p| p[li].0[n]).sum::<f64>() / m)
            .fold(0.0, f64::max);
        let c_n_sq = per_path.iter().map(|p| p[li].1).sum::<f64>() / m;
        out.push(StabilityLevel {
            level: *level,
            c_n_sq,
            error,
        });
    }
    let k = out
        .iter()
        .filter(|l| l.c_n_sq > 0.0)
        .map(|l| l.error / l.c_n_sq)
        .fold(0.0, f64::max);
    Ok(StabilityReport {
        levels: out,
        k,
        steps,
        trajectories,
    })
}
