//! Driving noise: truncated Q-Wiener processes, finite-activity Poisson
//! random measures, seeded counter-based streams, and Monte-Carlo checks of
//! the Itô isometries and of the stochastic Fubini identity.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::exec::Executor;
use crate::math::{abs, cos, exp, sin, sqrt};
use crate::spectral::ModeVector;

/// Purpose tags folded into stream indices so that different experiments on
/// one master seed never share random numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamNamespace {
    Euler = 1,
    CubatureBranches = 2,
    Picard = 3,
    Validation = 4,
    Oracle = 5,
    Stability = 6,
}

/// Counter-based random stream: `(master_seed, stream_index)` selects a
/// ChaCha8 key/stream pair, so draws do not depend on scheduling.
///
/// Layout of `stream_index`: 8 bits namespace, 24 bits experiment slot,
/// 32 bits trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    pub fn namespaced(master_seed: u64, namespace: StreamNamespace, slot: u32) -> Self {
        let slot = u64::from(slot) & 0x00ff_ffff;
        Self::new(
            master_seed,
            (u64::from(namespace as u8) << 56) | (slot << 32),
        )
    }

    /// Stream of trajectory `i` under this stream's namespace and slot.
    pub fn trajectory(&self, i: u32) -> Self {
        Self::new(
            self.master_seed,
            (self.stream_index & !0xffff_ffff) | u64::from(i),
        )
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Retained Brownian modes of `W = Σ_j √λ_j β^j e_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct QWienerSpec {
    q_eigenvalues: Vec<f64>,
}

impl QWienerSpec {
    pub fn new(q_eigenvalues: Vec<f64>) -> Result<Self> {
        if q_eigenvalues.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::contract("Q eigenvalues must be positive and finite"));
        }
        Ok(Self { q_eigenvalues })
    }

    /// `d` standard Brownian motions with unit variance.
    pub fn standard(d: usize) -> Self {
        Self {
            q_eigenvalues: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.q_eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.q_eigenvalues
    }

    pub fn trace(&self) -> f64 {
        self.q_eigenvalues.iter().sum()
    }
}

/// Law of the marks on `E`, normalized to a probability.
#[derive(Clone, Debug, PartialEq)]
pub enum MarkDistribution {
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Atoms `points[i]` with probabilities `weights[i]`.
    Discrete { points: Vec<f64>, weights: Vec<f64> },
}

/// `dt ⊗ F(dx)` with `F = total_intensity · law`, optionally truncated to a
/// nested set `B_n`.
///
/// Truncation sets: for discrete marks `B_n` keeps the first `n` atoms; for
/// uniform marks `B_n = [lo, lo + (hi − lo)·n/(n + 1)]`. `None` means `B_n = E`.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpMeasureSpec {
    total_intensity: f64,
    marks: MarkDistribution,
    truncation_level: Option<usize>,
    quadrature: Option<GaussLegendre>,
}

const MARK_QUADRATURE_POINTS: usize = 64;

impl JumpMeasureSpec {
    pub fn new(total_intensity: f64, marks: MarkDistribution) -> Result<Self> {
        if !(total_intensity >= 0.0) || !total_intensity.is_finite() {
            return Err(Error::contract("jump intensity must be finite and nonnegative"));
        }
        let marks = match marks {
            MarkDistribution::Uniform { lo, hi } => {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::contract("uniform marks need lo < hi"));
                }
                MarkDistribution::Uniform { lo, hi }
            }
            MarkDistribution::Discrete { points, weights } => {
                if points.is_empty() || points.len() != weights.len() {
                    return Err(Error::contract("discrete marks need matching points and weights"));
                }
                if weights.iter().any(|w| !(*w > 0.0)) || points.iter().any(|p| !p.is_finite()) {
                    return Err(Error::contract("discrete mark weights must be positive"));
                }
                let total: f64 = weights.iter().sum();
                MarkDistribution::Discrete {
                    points,
                    weights: weights.iter().map(|w| w / total).collect(),
                }
            }
        };
        let quadrature = match marks {
            MarkDistribution::Uniform { .. } => Some(GaussLegendre::new(MARK_QUADRATURE_POINTS)),
            MarkDistribution::Discrete { .. } => None,
        };
        Ok(Self {
            total_intensity,
            marks,
            truncation_level: None,
            quadrature,
        })
    }

    /// No jumps at all.
    pub fn none() -> Self {
        Self {
            total_intensity: 0.0,
            marks: MarkDistribution::Discrete {
                points: vec![0.0],
                weights: vec![1.0],
            },
            truncation_level: None,
            quadrature: None,
        }
    }

    pub fn with_truncation(mut self, level: Option<usize>) -> Self {
        self.truncation_level = level;
        self
    }

    pub fn total_intensity(&self) -> f64 {
        self.total_intensity
    }

    pub fn marks(&self) -> &MarkDistribution {
        &self.marks
    }

    pub fn truncation_level(&self) -> Option<usize> {
        self.truncation_level
    }

    pub fn is_active(&self) -> bool {
        self.total_intensity > 0.0
    }

    /// `x ∈ E`
    pub fn contains(&self, x: f64) -> bool {
        match &self.marks {
            MarkDistribution::Uniform { lo, hi } => *lo <= x && x <= *hi,
            MarkDistribution::Discrete { points, .. } => points.contains(&x),
        }
    }

    /// `x ∈ B_n` for the configured level.
    pub fn in_truncation(&self, x: f64) -> bool {
        self.in_level(self.truncation_level, x)
    }

    fn in_level(&self, level: Option<usize>, x: f64) -> bool {
        let Some(n) = level else {
            return self.contains(x);
        };
        match &self.marks {
            MarkDistribution::Uniform { lo, .. } => *lo <= x && x <= self.uniform_cut(n),
            MarkDistribution::Discrete { points, .. } => points.iter().take(n).any(|p| *p == x),
        }
    }

    fn uniform_cut(&self, n: usize) -> f64 {
        match &self.marks {
            MarkDistribution::Uniform { lo, hi } => lo + (hi - lo) * n as f64 / (n as f64 + 1.0),
            MarkDistribution::Discrete { .. } => unreachable!(),
        }
    }

    /// Probability mass of `B_n` under the mark law.
    pub fn truncated_mass(&self) -> f64 {
        let Some(n) = self.truncation_level else {
            return 1.0;
        };
        match &self.marks {
            MarkDistribution::Uniform { .. } => n as f64 / (n as f64 + 1.0),
            MarkDistribution::Discrete { weights, .. } => weights.iter().take(n).sum(),
        }
    }

    /// `F(B_n)`
    pub fn effective_intensity(&self) -> f64 {
        self.total_intensity * self.truncated_mass()
    }

    /// First two moments of the mark law restricted (and renormalized) to `B_n`.
    pub fn truncated_mark_moments(&self) -> (f64, f64) {
        let mass = self.truncated_mass();
        if mass == 0.0 {
            return (0.0, 0.0);
        }
        match &self.marks {
            MarkDistribution::Uniform { lo, hi } => {
                let b = match self.truncation_level {
                    Some(n) => self.uniform_cut(n),
                    None => *hi,
                };
                let m1 = 0.5 * (lo + b);
                let m2 = (b * b + b * lo + lo * lo) / 3.0;
                (m1, m2)
            }
            MarkDistribution::Discrete { points, weights } => {
                let n = self.truncation_level.unwrap_or(points.len());
                let (mut m1, mut m2) = (0.0, 0.0);
                for (p, w) in points.iter().zip(weights).take(n) {
                    m1 += w * p;
                    m2 += w * p * p;
                }
                (m1 / mass, m2 / mass)
            }
        }
    }

    /// Draw a mark from the full law on `E`.
    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.marks {
            MarkDistribution::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            MarkDistribution::Discrete { points, weights } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (p, w) in points.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *p;
                    }
                }
                *points.last().unwrap()
            }
        }
    }

    /// `∫_{B_n} f(x) F(dx)`. Exact for discrete marks; 64-point Gauss-Legendre
    /// with a 32-point error estimate for uniform marks.
    pub fn integrate_truncated<F>(&self, dim: usize, f: F) -> Result<ModeVector>
    where
        F: FnMut(f64) -> Result<ModeVector>,
    {
        self.integrate_region(dim, Region::Truncated, f)
    }

    /// `∫_{E∖B_n} f(x) F(dx)`.
    pub fn integrate_complement<F>(&self, dim: usize, f: F) -> Result<ModeVector>
    where
        F: FnMut(f64) -> Result<ModeVector>,
    {
        self.integrate_region(dim, Region::Complement, f)
    }

    fn integrate_region<F>(&self, dim: usize, region: Region, mut f: F) -> Result<ModeVector>
    where
        F: FnMut(f64) -> Result<ModeVector>,
    {
        let mut out = ModeVector::zeros(dim);
        if self.total_intensity == 0.0 {
            return Ok(out);
        }
        match &self.marks {
            MarkDistribution::Discrete { points, weights } => {
                let n = self.truncation_level.unwrap_or(points.len()).min(points.len());
                let range = match region {
                    Region::Truncated => 0..n,
                    Region::Complement => n..points.len(),
                };
                for i in range {
                    let v = f(points[i])?;
                    check_dim("mark integral", dim, v.dim())?;
                    out.axpy(self.total_intensity * weights[i], &v);
                }
            }
            MarkDistribution::Uniform { lo, hi } => {
                let cut = match self.truncation_level {
                    Some(n) => self.uniform_cut(n),
                    None => *hi,
                };
                let (a, b) = match region {
                    Region::Truncated => (*lo, cut),
                    Region::Complement => (cut, *hi),
                };
                if b <= a {
                    return Ok(out);
                }
                let density = self.total_intensity / (hi - lo);
                let rule = self.quadrature.as_ref().expect("uniform marks carry a rule");
                let (fine, coarse) = rule.integrate_with_estimate(a, b, dim, &mut f)?;
                let achieved = (&fine - &coarse).norm() * density;
                let tolerance = 1e-9 * (1.0 + fine.norm() * density);
                if achieved > tolerance {
                    return Err(Error::Quadrature {
                        achieved,
                        tolerance,
                    });
                }
                out.axpy(density, &fine);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy)]
enum Region {
    Truncated,
    Complement,
}

/// Gauss-Legendre rule on `[-1, 1]`, with its half-size companion kept for
/// error estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    coarse_nodes: Vec<f64>,
    coarse_weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre_nodes(n);
        let (coarse_nodes, coarse_weights) = gauss_legendre_nodes((n / 2).max(1));
        Self {
            nodes,
            weights,
            coarse_nodes,
            coarse_weights,
        }
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.nodes, &self.weights)
    }

    fn integrate_with_estimate<F>(
        &self,
        a: f64,
        b: f64,
        dim: usize,
        f: &mut F,
    ) -> Result<(ModeVector, ModeVector)>
    where
        F: FnMut(f64) -> Result<ModeVector>,
    {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut run = |nodes: &[f64], weights: &[f64]| -> Result<ModeVector> {
            let mut acc = ModeVector::zeros(dim);
            for (x, w) in nodes.iter().zip(weights) {
                let v = f(mid + half * x)?;
                check_dim("mark integral", dim, v.dim())?;
                acc.axpy(w * half, &v);
            }
            Ok(acc)
        };
        let fine = run(&self.nodes, &self.weights)?;
        let coarse = run(&self.coarse_nodes, &self.coarse_weights)?;
        Ok((fine, coarse))
    }
}

fn gauss_legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if abs(dx) < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// One jump of the Poisson random measure inside a step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jump {
    /// Time offset in `(0, dt]` from the start of the step.
    pub offset: f64,
    pub mark: f64,
}

/// Noise over one step of length `dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseIncrement {
    pub dt: f64,
    /// Increments of the standard Brownian motions `β^j`, each `N(0, dt)`.
    pub brownian: Vec<f64>,
    /// Jumps in increasing time order.
    pub jumps: Vec<Jump>,
}

impl NoiseIncrement {
    pub fn zero(dt: f64, d: usize) -> Self {
        Self {
            dt,
            brownian: vec![0.0; d],
            jumps: Vec::new(),
        }
    }

    /// Copy keeping only the jumps whose marks satisfy `keep`.
    pub fn filter_jumps(&self, mut keep: impl FnMut(f64) -> bool) -> Self {
        Self {
            dt: self.dt,
            brownian: self.brownian.clone(),
            jumps: self.jumps.iter().copied().filter(|j| keep(j.mark)).collect(),
        }
    }
}

/// Draws one increment: `d` Brownian increments, then the jumps of `μ`
/// (Poisson count, uniform order statistics for the times, i.i.d. marks).
/// Jumps whose marks fall outside `B_n` are discarded, which thins the full
/// measure to the truncated one and keeps different truncation levels coupled.
pub fn sample_increment<R: Rng + ?Sized>(
    rng: &mut R,
    wiener: &QWienerSpec,
    jumps: &JumpMeasureSpec,
    dt: f64,
) -> Result<NoiseIncrement> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::contract("noise step must be positive"));
    }
    let sd = sqrt(dt);
    let brownian = (0..wiener.dim())
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect();
    let mut list = Vec::new();
    let rate = jumps.total_intensity * dt;
    if rate > 0.0 {
        let poisson = Poisson::new(rate).map_err(|_| Error::contract("invalid Poisson rate"))?;
        let count = poisson.sample(rng) as usize;
        for _ in 0..count {
            // (0, dt]
            let offset = dt * (1.0 - rng.random::<f64>());
            let mark = jumps.sample_mark(rng);
            list.push(Jump { offset, mark });
        }
        list.sort_by(|a, b| a.offset.total_cmp(&b.offset));
        list.retain(|j| jumps.in_truncation(j.mark));
    }
    Ok(NoiseIncrement {
        dt,
        brownian,
        jumps: list,
    })
}

/// Noise for one trajectory over consecutive steps `dts`.
pub fn sample_path(
    stream: RngStream,
    wiener: &QWienerSpec,
    jumps: &JumpMeasureSpec,
    dts: &[f64],
) -> Result<Vec<NoiseIncrement>> {
    let mut rng = stream.rng();
    dts.iter()
        .map(|dt| sample_increment(&mut rng, wiener, jumps, *dt))
        .collect()
}

/// Merges consecutive groups of `factor` increments into one (sums Brownian
/// increments, shifts jump offsets). Used to drive coarse grids with exactly
/// the noise of a fine grid.
pub fn aggregate(increments: &[NoiseIncrement], factor: usize) -> Result<Vec<NoiseIncrement>> {
    if factor == 0 || !increments.len().is_multiple_of(factor) {
        return Err(Error::contract("aggregation factor must divide the step count"));
    }
    Ok(increments
        .chunks(factor)
        .map(|chunk| {
            let d = chunk[0].brownian.len();
            let mut out = NoiseIncrement::zero(0.0, d);
            for inc in chunk {
                for (acc, b) in out.brownian.iter_mut().zip(&inc.brownian) {
                    *acc += b;
                }
                let shift = out.dt;
                out.jumps.extend(inc.jumps.iter().map(|j| Jump {
                    offset: shift + j.offset,
                    mark: j.mark,
                }));
                out.dt += inc.dt;
            }
            out
        })
        .collect())
}

/// Deterministic step integrand on a time grid `0 = τ_0 < … < τ_m = T`.
#[derive(Clone, Debug, PartialEq)]
pub enum StepIntegrand {
    /// `Φ` on cell `c` maps the `j`-th Brownian direction to `columns[c][j]`.
    Wiener {
        spec: QWienerSpec,
        grid: Vec<f64>,
        columns: Vec<Vec<ModeVector>>,
    },
    /// `γ(t, x) = base[c] + x · slope[c]` on cell `c`.
    Poisson {
        spec: JumpMeasureSpec,
        grid: Vec<f64>,
        base: Vec<ModeVector>,
        slope: Vec<ModeVector>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsometryReport {
    /// Monte-Carlo estimate of `E‖∫Φ‖²`.
    pub lhs: f64,
    /// Exact `∫‖Φ‖²` against the noise covariance.
    pub rhs: f64,
    pub stderr: f64,
    pub n_mc: usize,
}

impl IsometryReport {
    pub fn gap(&self) -> f64 {
        abs(self.lhs - self.rhs)
    }

    /// `|lhs − rhs| ≤ k · stderr` (exact agreement counts when both vanish).
    pub fn within(&self, k: f64) -> bool {
        self.gap() <= k * self.stderr || self.gap() == 0.0
    }
}

fn validate_grid(grid: &[f64], cells: usize) -> Result<()> {
    if grid.len() != cells + 1 || grid.len() < 2 {
        return Err(Error::contract("step integrand grid must have one more point than cells"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::contract("step integrand grid must increase"));
    }
    Ok(())
}

/// Checks `E‖∫Φ dW‖² = ∫‖Φ Q^{1/2}‖²_HS dt` (or the compensated-Poisson
/// analogue `E‖∫∫γ d(μ − F dt)‖² = ∫∫‖γ‖² F(dx) dt`) by Monte Carlo.
pub fn ito_isometry_check<E: Executor>(
    stream: RngStream,
    integrand: &StepIntegrand,
    n_mc: usize,
    exec: &E,
) -> Result<IsometryReport> {
    if n_mc < 100 {
        return Err(Error::contract("isometry checks need at least 100 trajectories"));
    }
    let (rhs, samples) = match integrand {
        StepIntegrand::Wiener {
            spec,
            grid,
            columns,
        } => {
            validate_grid(grid, columns.len())?;
            let dim = columns.first().and_then(|c| c.first()).map_or(1, |v| v.dim());
            for cell in columns {
                check_dim("Wiener integrand columns", spec.dim(), cell.len())?;
            }
            let mut rhs = 0.0;
            for (c, cell) in columns.iter().enumerate() {
                let dt = grid[c + 1] - grid[c];
                for (col, l) in cell.iter().zip(spec.eigenvalues()) {
                    rhs += dt * l * col.norm_sq();
                }
            }
            let none = JumpMeasureSpec::none();
            let samples = exec.map_indexed(n_mc, |i| -> Result<f64> {
                let mut rng = stream.trajectory(i as u32).rng();
                let mut acc = ModeVector::zeros(dim);
                for (c, cell) in columns.iter().enumerate() {
                    let inc = sample_increment(&mut rng, spec, &none, grid[c + 1] - grid[c])?;
                    for ((col, l), db) in cell.iter().zip(spec.eigenvalues()).zip(&inc.brownian) {
                        acc.axpy(sqrt(*l) * db, col);
                    }
                }
                Ok(acc.norm_sq())
            });
            (rhs, samples)
        }
        StepIntegrand::Poisson {
            spec,
            grid,
            base,
            slope,
        } => {
            validate_grid(grid, base.len())?;
            check_dim("Poisson integrand", base.len(), slope.len())?;
            let dim = base.first().map_or(1, |v| v.dim());
            let intensity = spec.effective_intensity();
            let (m1, m2) = spec.truncated_mark_moments();
            let mut rhs = 0.0;
            for c in 0..base.len() {
                let dt = grid[c + 1] - grid[c];
                rhs += dt
                    * intensity
                    * (base[c].norm_sq() + 2.0 * m1 * base[c].dot(&slope[c]) + m2 * slope[c].norm_sq());
            }
            let none = QWienerSpec::standard(0);
            let samples = exec.map_indexed(n_mc, |i| -> Result<f64> {
                let mut rng = stream.trajectory(i as u32).rng();
                let mut acc = ModeVector::zeros(dim);
                for c in 0..base.len() {
                    let dt = grid[c + 1] - grid[c];
                    let inc = sample_increment(&mut rng, &none, spec, dt)?;
                    for j in &inc.jumps {
                        acc.axpy(1.0, &base[c]);
                        acc.axpy(j.mark, &slope[c]);
                    }
                    // compensator
                    acc.axpy(-intensity * dt, &base[c]);
                    acc.axpy(-intensity * dt * m1, &slope[c]);
                }
                Ok(acc.norm_sq())
            });
            (rhs, samples)
        }
    };
    let samples = samples.into_iter().collect::<Result<Vec<f64>>>()?;
    let (mean, stderr) = mean_and_stderr(&samples);
    Ok(IsometryReport {
        lhs: mean,
        rhs,
        stderr,
        n_mc,
    })
}

pub(crate) fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, sqrt(var / n))
}

/// Smooth factor `f(s)` of a separable integrand, with exact antiderivative.
#[derive(Clone, Debug, PartialEq)]
pub enum SFunction {
    /// `Σ_k c_k s^k`
    Polynomial(Vec<f64>),
    /// `sin(freq · s + phase)`
    Sine { freq: f64, phase: f64 },
    /// `e^{rate · s}`
    Exponential { rate: f64 },
    /// `values[i]` on `[grid[i], grid[i+1])`
    PiecewiseConstant { grid: Vec<f64>, values: Vec<f64> },
}

impl SFunction {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            SFunction::Polynomial(c) => c.iter().rev().fold(0.0, |acc, ck| acc * s + ck),
            SFunction::Sine { freq, phase } => sin(freq * s + phase),
            SFunction::Exponential { rate } => exp(rate * s),
            SFunction::PiecewiseConstant { grid, values } => {
                match grid.windows(2).position(|w| w[0] <= s && s < w[1]) {
                    Some(i) => values[i],
                    None if s == *grid.last().unwrap() => *values.last().unwrap(),
                    None => 0.0,
                }
            }
        }
    }

    /// `∫_a^b f(s) ds` in closed form.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            SFunction::Polynomial(c) => {
                let anti = |s: f64| {
                    c.iter()
                        .enumerate()
                        .rev()
                        .fold(0.0, |acc, (k, ck)| acc * s + ck / (k as f64 + 1.0))
                        * s
                };
                anti(b) - anti(a)
            }
            SFunction::Sine { freq, phase } => {
                if *freq == 0.0 {
                    sin(*phase) * (b - a)
                } else {
                    (cos(freq * a + phase) - cos(freq * b + phase)) / freq
                }
            }
            SFunction::Exponential { rate } => {
                if *rate == 0.0 {
                    b - a
                } else {
                    (exp(rate * b) - exp(rate * a)) / rate
                }
            }
            SFunction::PiecewiseConstant { grid, values } => grid
                .windows(2)
                .zip(values)
                .map(|(w, v)| {
                    let lo = w[0].max(a);
                    let hi = w[1].min(b);
                    if hi > lo {
                        v * (hi - lo)
                    } else {
                        0.0
                    }
                })
                .sum(),
        }
    }

    /// Bound on the composite midpoint error over `[0, T]` with `m` cells,
    /// per unit coefficient.
    fn midpoint_error_bound(&self, horizon: f64, m: usize) -> f64 {
        let h = horizon / m as f64;
        let curvature = match self {
            SFunction::Polynomial(c) => {
                // sup |f''| on [0, T] bounded termwise
                c.iter()
                    .enumerate()
                    .skip(2)
                    .map(|(k, ck)| abs(*ck) * (k * (k - 1)) as f64 * libm::pow(horizon.max(1.0), (k - 2) as f64))
                    .sum::<f64>()
            }
            SFunction::Sine { freq, .. } => freq * freq,
            SFunction::Exponential { rate } => rate * rate * exp(abs(*rate) * horizon),
            SFunction::PiecewiseConstant { grid, values } => {
                let aligned = grid.iter().all(|g| {
                    let q = g / h;
                    abs(q - libm::round(q)) < 1e-9
                });
                if aligned {
                    return 0.0;
                }
                let jumps: f64 = values.windows(2).map(|w| abs(w[1] - w[0])).sum::<f64>()
                    + abs(values[0])
                    + abs(*values.last().unwrap());
                return jumps * h;
            }
        };
        horizon * h * h / 24.0 * curvature
    }
}

/// `K(t, x) = base[c] + x · slope[c]` on time cell `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkStepFunction {
    pub grid: Vec<f64>,
    pub base: Vec<f64>,
    pub slope: Vec<f64>,
}

impl MarkStepFunction {
    /// `1_{[0, T] × E}`
    pub fn indicator(horizon: f64) -> Self {
        Self {
            grid: vec![0.0, horizon],
            base: vec![1.0],
            slope: vec![0.0],
        }
    }

    fn cell(&self, t: f64) -> Option<usize> {
        if t <= self.grid[0] || t > *self.grid.last().unwrap() {
            return None;
        }
        // (τ_c, τ_{c+1}] matches the (0, dt] jump convention
        self.grid.windows(2).position(|w| w[0] < t && t <= w[1])
    }

    fn eval(&self, t: f64, x: f64) -> f64 {
        self.cell(t).map_or(0.0, |c| self.base[c] + x * self.slope[c])
    }

    /// `∫∫ K(t, x) F(dx) dt` over the measure restricted to `B_n`.
    fn compensator(&self, spec: &JumpMeasureSpec) -> f64 {
        let intensity = spec.effective_intensity();
        let (m1, _) = spec.truncated_mark_moments();
        self.grid
            .windows(2)
            .enumerate()
            .map(|(c, w)| (w[1] - w[0]) * intensity * (self.base[c] + m1 * self.slope[c]))
            .sum()
    }
}

/// `Φ(t, x, s) = Σ_i c_i K_i(t, x) f_i(s)`: the dense class on which the
/// stochastic Fubini identity is checked.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableIntegrand {
    pub horizon: f64,
    pub terms: Vec<(f64, MarkStepFunction, SFunction)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FubiniReport {
    pub max_pathwise_gap: f64,
    /// Worst a-priori midpoint-rule bound over the sampled paths.
    pub quadrature_bound: f64,
    pub paths: usize,
}

/// Pathwise check of
/// `∫_0^T ∫∫ Φ(t,x,s) (μ − F)(dt,dx) ds = ∫∫ (∫_0^T Φ(t,x,s) ds) (μ − F)(dt,dx)`.
///
/// The left side integrates the compensated integral over `s` by the midpoint
/// rule with `s_nodes` cells; the right side uses the closed-form `s`
/// integral. Both sides see the same jump realization, so the gap measures
/// only the `s`-quadrature error.
pub fn fubini_check<E: Executor>(
    stream: RngStream,
    spec: &JumpMeasureSpec,
    phi: &SeparableIntegrand,
    s_nodes: usize,
    n_paths: usize,
    exec: &E,
) -> Result<FubiniReport> {
    if s_nodes == 0 || n_paths == 0 {
        return Err(Error::contract("Fubini check needs quadrature nodes and paths"));
    }
    for (_, k, _) in &phi.terms {
        validate_grid(&k.grid, k.base.len())?;
        check_dim("mark step function", k.base.len(), k.slope.len())?;
    }
    let horizon = phi.horizon;
    let h = horizon / s_nodes as f64;
    let wiener = QWienerSpec::standard(0);
    let results = exec.map_indexed(n_paths, |i| -> Result<(f64, f64)> {
        let mut rng = stream.trajectory(i as u32).rng();
        let inc = sample_increment(&mut rng, &wiener, spec, horizon)?;
        let compensated = |k: &MarkStepFunction| {
            inc.jumps.iter().map(|j| k.eval(j.offset, j.mark)).sum::<f64>() - k.compensator(spec)
        };
        // left: s-outer midpoint quadrature of the s-indexed compensated integrals
        let per_term: Vec<f64> = phi.terms.iter().map(|(_, k, _)| compensated(k)).collect();
        let mut lhs = 0.0;
        for q in 0..s_nodes {
            let s = (q as f64 + 0.5) * h;
            let phi_s: f64 = phi
                .terms
                .iter()
                .zip(&per_term)
                .map(|((c, _, f), j)| c * f.eval(s) * j)
                .sum();
            lhs += h * phi_s;
        }
        // right: integrate in s first, then against μ − F
        let weights: Vec<f64> = phi
            .terms
            .iter()
            .map(|(c, _, f)| c * f.integral(0.0, horizon))
            .collect();
        let jump_part: f64 = inc
            .jumps
            .iter()
            .map(|j| {
                phi.terms
                    .iter()
                    .zip(&weights)
                    .map(|((_, k, _), w)| w * k.eval(j.offset, j.mark))
                    .sum::<f64>()
            })
            .sum();
        let comp_part: f64 = phi
            .terms
            .iter()
            .zip(&weights)
            .map(|((_, k, _), w)| w * k.compensator(spec))
            .sum();
        let rhs = jump_part - comp_part;
        let bound: f64 = phi
            .terms
            .iter()
            .zip(&per_term)
            .map(|((c, _, f), j)| abs(c * j) * f.midpoint_error_bound(horizon, s_nodes))
            .sum();
        Ok((abs(lhs - rhs), bound))
    });
    let mut report = FubiniReport {
        max_pathwise_gap: 0.0,
        quadrature_bound: 0.0,
        paths: n_paths,
    };
    for r in results {
        let (gap, bound) = r?;
        report.max_pathwise_gap = report.max_pathwise_gap.max(gap);
        report.quadrature_bound = report.quadrature_bound.max(bound);
    }
    Ok(report)
}

/// Random cell grid on `[0, T]`: `cells` cells with lengths drawn uniformly
/// and normalized.
fn random_grid<R: Rng + ?Sized>(rng: &mut R, horizon: f64, cells: usize) -> Vec<f64> {
    let lengths: Vec<f64> = (0..cells).map(|_| 0.2 + rng.random::<f64>()).collect();
    let total: f64 = lengths.iter().sum();
    let mut grid = Vec::with_capacity(cells + 1);
    let mut t = 0.0;
    grid.push(0.0);
    for l in &lengths[..cells - 1] {
        t += horizon * l / total;
        grid.push(t);
    }
    grid.push(horizon);
    grid
}

fn random_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> ModeVector {
    ModeVector::from_fn(dim, |_| 2.0 * rng.random::<f64>() - 1.0)
}

/// Step integrand against `W` with random grid and random `[-1, 1]` entries.
pub fn random_wiener_integrand<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &QWienerSpec,
    dim: usize,
    cells: usize,
    horizon: f64,
) -> Result<StepIntegrand> {
    if cells == 0 || dim == 0 || !(horizon > 0.0) {
        return Err(Error::contract("random integrand needs cells, modes and a positive horizon"));
    }
    let grid = random_grid(rng, horizon, cells);
    let columns = (0..cells)
        .map(|_| (0..spec.dim()).map(|_| random_vector(rng, dim)).collect())
        .collect();
    Ok(StepIntegrand::Wiener {
        spec: spec.clone(),
        grid,
        columns,
    })
}

/// Step integrand against `μ − F` with random grid, base and slope.
pub fn random_poisson_integrand<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &JumpMeasureSpec,
    dim: usize,
    cells: usize,
    horizon: f64,
) -> Result<StepIntegrand> {
    if cells == 0 || dim == 0 || !(horizon > 0.0) {
        return Err(Error::contract("random integrand needs cells, modes and a positive horizon"));
    }
    let grid = random_grid(rng, horizon, cells);
    let base = (0..cells).map(|_| random_vector(rng, dim)).collect();
    let slope = (0..cells).map(|_| random_vector(rng, dim)).collect();
    Ok(StepIntegrand::Poisson {
        spec: spec.clone(),
        grid,
        base,
        slope,
    })
}

/// Separable integrand with `terms` random smooth `s`-factors (polynomial,
/// sine, exponential in turn) and random mark step functions.
pub fn random_separable_integrand<R: Rng + ?Sized>(rng: &mut R, horizon: f64, terms: usize) -> SeparableIntegrand {
    let terms = (0..terms)
        .map(|i| {
            let cells = 1 + (rng.random::<f64>() * 4.0) as usize;
            let k = MarkStepFunction {
                grid: random_grid(rng, horizon, cells),
                base: (0..cells).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect(),
                slope: (0..cells).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect(),
            };
            let f = match i % 3 {
                0 => SFunction::Polynomial((0..3).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()),
                1 => SFunction::Sine {
                    freq: 1.0 + 4.0 * rng.random::<f64>(),
                    phase: 6.0 * rng.random::<f64>(),
                },
                _ => SFunction::Exponential {
                    rate: 2.0 * rng.random::<f64>() - 1.0,
                },
            };
            (0.5 + rng.random::<f64>(), k, f)
        })
        .collect();
    SeparableIntegrand { horizon, terms }
}
