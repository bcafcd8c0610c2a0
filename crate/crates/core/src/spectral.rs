//! Truncated state space, the diagonal semigroup `S_t = e^{tA}` and its group
//! extensions `(U_t, ℓ, π)` with `π U_t ℓ = S_t` for `t ≥ 0`.
//!
//! Two frames are available:
//!
//! * [`FrameKind::DirectInverse`]: the truncated semigroup is already a group,
//!   `U_t = diag(e^{a_k t})` for every real `t`, `ℓ = π = Id`. Exact, but
//!   `e^{-a_k t}` explodes for stiff modes, so the group action refuses
//!   exponents beyond an overflow budget.
//! * [`FrameKind::CauchyDilation`]: for `a_k ≤ 0`, `e^{a_k |t|}` is the
//!   characteristic function of a Cauchy law of scale `|a_k|`. Replacing that
//!   law by a discrete measure `η_k = Σ_j w_j δ_{x_j}` gives the unitary
//!   multiplication group `(U_t f)(x) = e^{itx} f(x)` on `L²(η_k)`, the
//!   constant-function embedding `ℓ` and the averaging projection `π`.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{check_dim, Error, Result};
use crate::math::{abs, cabs, cis, exp, sqrt, PI};

/// State vector: coefficients against the generator eigenbasis `{e_k}`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ModeVector {
    coords: Vec<f64>,
}

impl ModeVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::contract("mode vector needs at least one mode"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("ModeVector::new"));
        }
        Ok(Self { coords })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            coords: vec![0.0; dim],
        }
    }

    /// The basis vector `e_k` (zero-based).
    pub fn unit(dim: usize, k: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.coords[k] = 1.0;
        v
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> f64) -> Self {
        Self {
            coords: (0..dim).map(f).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }

    pub fn norm_sq(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        sqrt(self.norm_sq())
    }

    pub fn dot(&self, other: &ModeVector) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &ModeVector) {
        debug_assert_eq!(self.dim(), x.dim());
        for (s, v) in self.coords.iter_mut().zip(&x.coords) {
            *s += a * v;
        }
    }

    pub fn scaled(&self, a: f64) -> ModeVector {
        ModeVector {
            coords: self.coords.iter().map(|c| a * c).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }

    pub(crate) fn ensure_finite(self, context: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(context))
        }
    }
}

impl Index<usize> for ModeVector {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.coords[k]
    }
}

impl IndexMut<usize> for ModeVector {
    fn index_mut(&mut self, k: usize) -> &mut f64 {
        &mut self.coords[k]
    }
}

impl AddAssign<&ModeVector> for ModeVector {
    fn add_assign(&mut self, rhs: &ModeVector) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&ModeVector> for ModeVector {
    fn sub_assign(&mut self, rhs: &ModeVector) {
        self.axpy(-1.0, rhs);
    }
}

impl Add<&ModeVector> for &ModeVector {
    type Output = ModeVector;
    fn add(self, rhs: &ModeVector) -> ModeVector {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub<&ModeVector> for &ModeVector {
    type Output = ModeVector;
    fn sub(self, rhs: &ModeVector) -> ModeVector {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl Mul<f64> for &ModeVector {
    type Output = ModeVector;
    fn mul(self, rhs: f64) -> ModeVector {
        self.scaled(rhs)
    }
}

impl Neg for &ModeVector {
    type Output = ModeVector;
    fn neg(self) -> ModeVector {
        self.scaled(-1.0)
    }
}

/// Diagonal generator `A e_k = a_k e_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalGenerator {
    eigenvalues: Vec<f64>,
    omega: f64,
}

impl DiagonalGenerator {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::contract("generator needs at least one eigenvalue"));
        }
        if eigenvalues.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("DiagonalGenerator::new"));
        }
        let omega = eigenvalues.iter().copied().fold(0.0, f64::max);
        Ok(Self { eigenvalues, omega })
    }

    /// Dirichlet Laplacian on `[0, 1]` scaled by `diffusivity`: `a_k = −ν (π k)²`.
    pub fn heat_dirichlet(modes: usize, diffusivity: f64) -> Result<Self> {
        Self::new(
            (1..=modes)
                .map(|k| -diffusivity * (PI * k as f64) * (PI * k as f64))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Pseudo-contractivity bound: `‖S_t‖ ≤ e^{ω t}` with `ω = max(0, max_k a_k)`.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Generator with every eigenvalue lowered by `shift`; pair it with an
    /// extra linear drift `shift · Id` to describe the same equation.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        Self::new(self.eigenvalues.iter().map(|a| a - shift).collect())
    }

    pub fn semigroup_apply(&self, t: f64, v: &ModeVector) -> Result<ModeVector> {
        if !(t >= 0.0) {
            return Err(Error::contract("semigroup time must be nonnegative"));
        }
        check_dim("semigroup_apply", self.dim(), v.dim())?;
        Ok(self.semigroup_apply_unchecked(t, v))
    }

    pub(crate) fn semigroup_apply_unchecked(&self, t: f64, v: &ModeVector) -> ModeVector {
        ModeVector::from_fn(v.dim(), |k| exp(self.eigenvalues[k] * t) * v[k])
    }
}

/// Element of the dilation space.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FrameVector {
    coords: Vec<Complex64>,
}

impl FrameVector {
    pub fn new(coords: Vec<Complex64>) -> Result<Self> {
        if coords.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("FrameVector::new"));
        }
        Ok(Self { coords })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            coords: vec![Complex64::new(0.0, 0.0); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.coords
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.coords
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &FrameVector) {
        debug_assert_eq!(self.dim(), x.dim());
        for (s, v) in self.coords.iter_mut().zip(&x.coords) {
            *s += v * a;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coords
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

impl Sub<&FrameVector> for &FrameVector {
    type Output = FrameVector;
    fn sub(self, rhs: &FrameVector) -> FrameVector {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameKind {
    DirectInverse,
    CauchyDilation,
}

/// Tolerances and guards attached to a frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameSettings {
    /// Largest admissible `|a_k t|` in the direct group action.
    pub overflow_budget: f64,
    /// Accepted `|π U_t ℓ − S_t|` per mode on `[0, horizon]`.
    pub dilation_tol: f64,
    /// Largest imaginary residual the projection silently discards.
    pub proj_imag_tol: f64,
}

impl Default for FrameSettings {
    fn default() -> Self {
        Self {
            overflow_budget: 60.0,
            dilation_tol: 1e-3,
            proj_imag_tol: 1e-8,
        }
    }
}

/// Realization of `(U_t)_{t∈ℝ}`, `ℓ` and `π`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupFrame {
    kind: FrameKind,
    generator: DiagonalGenerator,
    // CauchyDilation only: mode k owns nodes offsets[k]..offsets[k+1].
    nodes: Vec<f64>,
    weights: Vec<f64>,
    offsets: Vec<usize>,
    horizon: f64,
    settings: FrameSettings,
}

impl GroupFrame {
    pub fn direct(generator: DiagonalGenerator) -> Self {
        Self::direct_with(generator, FrameSettings::default())
    }

    pub fn direct_with(generator: DiagonalGenerator, settings: FrameSettings) -> Self {
        Self {
            kind: FrameKind::DirectInverse,
            generator,
            nodes: Vec::new(),
            weights: Vec::new(),
            offsets: Vec::new(),
            horizon: f64::INFINITY,
            settings,
        }
    }

    pub fn kind(&self) -> FrameKind {
        self.kind
    }

    pub fn generator(&self) -> &DiagonalGenerator {
        &self.generator
    }

    pub fn settings(&self) -> &FrameSettings {
        &self.settings
    }

    /// Certified horizon of a dilation (infinite for direct frames).
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn dilation_dim(&self) -> usize {
        match self.kind {
            FrameKind::DirectInverse => self.generator.dim(),
            FrameKind::CauchyDilation => self.nodes.len(),
        }
    }

    /// Nodes and weights of mode `k` (empty for direct frames).
    pub fn dilation_nodes(&self, k: usize) -> (&[f64], &[f64]) {
        match self.kind {
            FrameKind::DirectInverse => (&[], &[]),
            FrameKind::CauchyDilation => {
                let r = self.offsets[k]..self.offsets[k + 1];
                (&self.nodes[r.clone()], &self.weights[r])
            }
        }
    }

    /// `(M, ω)` with `‖U_t‖ ≤ M e^{ω|t|}`.
    pub fn growth_constants(&self) -> (f64, f64) {
        match self.kind {
            FrameKind::DirectInverse => {
                let w = self
                    .generator
                    .eigenvalues()
                    .iter()
                    .fold(0.0f64, |m, a| m.max(abs(*a)));
                (1.0, w)
            }
            FrameKind::CauchyDilation => (1.0, 0.0),
        }
    }

    /// Operator norm of `ℓ`; both frames embed isometrically.
    pub fn embedding_norm(&self) -> f64 {
        1.0
    }

    /// Operator norm of `π`; both frames project orthogonally.
    pub fn projection_norm(&self) -> f64 {
        1.0
    }

    /// Norm of the dilation space (`L²(η)` for Cauchy frames).
    pub fn norm(&self, r: &FrameVector) -> f64 {
        match self.kind {
            FrameKind::DirectInverse => sqrt(r.coords.iter().map(|c| c.norm_sqr()).sum()),
            FrameKind::CauchyDilation => sqrt(
                r.coords
                    .iter()
                    .zip(&self.weights)
                    .map(|(c, w)| w * c.norm_sqr())
                    .sum(),
            ),
        }
    }

    pub fn group_apply(&self, t: f64, r: &FrameVector) -> Result<FrameVector> {
        let mut out = r.clone();
        self.group_apply_in_place(t, &mut out)?;
        Ok(out)
    }

    pub fn group_apply_in_place(&self, t: f64, r: &mut FrameVector) -> Result<()> {
        check_dim("group_apply", self.dilation_dim(), r.dim())?;
        if t == 0.0 {
            return Ok(());
        }
        match self.kind {
            FrameKind::DirectInverse => {
                let factors = self.direct_factors(t)?;
                for (c, f) in r.coords.iter_mut().zip(factors) {
                    *c *= f;
                }
            }
            FrameKind::CauchyDilation => {
                for (c, x) in r.coords.iter_mut().zip(&self.nodes) {
                    *c *= cis(x * t);
                }
            }
        }
        Ok(())
    }

    fn direct_factors(&self, t: f64) -> Result<Vec<f64>> {
        let budget = self.settings.overflow_budget;
        self.generator
            .eigenvalues()
            .iter()
            .map(|a| {
                let exponent = a * t;
                if abs(exponent) > budget {
                    Err(Error::OverflowGuard {
                        exponent: abs(exponent),
                        budget,
                    })
                } else {
                    Ok(exp(exponent))
                }
            })
            .collect()
    }

    /// `ℓ v`
    pub fn embed(&self, v: &ModeVector) -> Result<FrameVector> {
        check_dim("embed", self.dim(), v.dim())?;
        let coords = match self.kind {
            FrameKind::DirectInverse => v
                .as_slice()
                .iter()
                .map(|c| Complex64::new(*c, 0.0))
                .collect(),
            FrameKind::CauchyDilation => {
                let mut coords = Vec::with_capacity(self.nodes.len());
                for k in 0..self.dim() {
                    let n = self.offsets[k + 1] - self.offsets[k];
                    coords.extend(core::iter::repeat_n(Complex64::new(v[k], 0.0), n));
                }
                coords
            }
        };
        Ok(FrameVector { coords })
    }

    /// `π R`; fails when the discarded imaginary part exceeds `proj_imag_tol`.
    pub fn project(&self, r: &FrameVector) -> Result<ModeVector> {
        check_dim("project", self.dilation_dim(), r.dim())?;
        let tol = self.settings.proj_imag_tol;
        let mut out = ModeVector::zeros(self.dim());
        let mut worst = 0.0f64;
        match self.kind {
            FrameKind::DirectInverse => {
                for (k, c) in r.coords.iter().enumerate() {
                    out[k] = c.re;
                    worst = worst.max(abs(c.im));
                }
            }
            FrameKind::CauchyDilation => {
                for k in 0..self.dim() {
                    let range = self.offsets[k]..self.offsets[k + 1];
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (c, w) in r.coords[range.clone()].iter().zip(&self.weights[range]) {
                        acc += c * w;
                    }
                    out[k] = acc.re;
                    worst = worst.max(abs(acc.im));
                }
            }
        }
        if worst > tol {
            return Err(Error::DilationBreakdown {
                residual: worst,
                tolerance: tol,
            });
        }
        out.ensure_finite("project")
    }

    /// Per-mode value of `π U_t ℓ`: `Σ_j w_j e^{i x_j t}` (or `e^{a_k t}`).
    pub fn compressed_symbol(&self, k: usize, t: f64) -> Complex64 {
        match self.kind {
            FrameKind::DirectInverse => Complex64::new(exp(self.generator.eigenvalues()[k] * t), 0.0),
            FrameKind::CauchyDilation => {
                let (nodes, weights) = self.dilation_nodes(k);
                nodes
                    .iter()
                    .zip(weights)
                    .map(|(x, w)| cis(x * t) * w)
                    .sum()
            }
        }
    }
}

/// Builds a Cauchy dilation of `g` certified on `|t| ≤ horizon`.
///
/// Mode `k` with `a_k < 0` gets the discrete measure whose characteristic
/// function is the Fourier series of the `2·horizon`-periodic extension of
/// `e^{a_k |t|}`. The coefficients
///
/// ```text
/// c_n = (2/P) |a| (1 − (−1)^n e^{−|a| P/2}) / (a² + (2πn/P)²),   P = 2·horizon
/// ```
///
/// are positive and sum to one, so the atoms `2πn/P` with weights `c_n` form a
/// probability measure reproducing `e^{a_k |t|}` exactly on the horizon. The
/// first 70% of the atom budget keeps individual lattice atoms; the rest merges
/// the `1/n²` tail into log-spaced blocks placed at their mean frequency.
/// Modes with `a_k = 0` get the single atom `x = 0`.
pub fn build_cauchy_dilation(
    g: &DiagonalGenerator,
    nodes_per_mode: usize,
    horizon: f64,
) -> Result<GroupFrame> {
    build_cauchy_dilation_with(g, nodes_per_mode, horizon, FrameSettings::default())
}

pub fn build_cauchy_dilation_with(
    g: &DiagonalGenerator,
    nodes_per_mode: usize,
    horizon: f64,
    settings: FrameSettings,
) -> Result<GroupFrame> {
    if g.eigenvalues().iter().any(|a| *a > 0.0) {
        return Err(Error::Unsupported(
            "Cauchy dilations need a_k <= 0; shift the generator and add the shift to the drift".into(),
        ));
    }
    if nodes_per_mode == 0 || nodes_per_mode.is_multiple_of(2) {
        return Err(Error::contract("nodes_per_mode must be odd"));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::contract("dilation horizon must be positive and finite"));
    }

    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut offsets = vec![0];
    for &a in g.eigenvalues() {
        if a == 0.0 {
            nodes.push(0.0);
            weights.push(1.0);
        } else {
            let (x, w) = lattice_measure(-a, horizon, nodes_per_mode);
            nodes.extend(x);
            weights.extend(w);
        }
        offsets.push(nodes.len());
    }

    let frame = GroupFrame {
        kind: FrameKind::CauchyDilation,
        generator: g.clone(),
        nodes,
        weights,
        offsets,
        horizon,
        settings,
    };
    frame.certify_dilation()?;
    Ok(frame)
}

const CERTIFY_POINTS: usize = 1000;

impl GroupFrame {
    /// Largest per-mode `|π U_t ℓ − e^{a_k t}|` over an even grid on
    /// `[0, horizon]`, with the mode and time where it occurs.
    pub fn dilation_error(&self) -> (usize, f64, f64) {
        let mut worst = (0, 0.0, 0.0);
        if self.kind == FrameKind::DirectInverse {
            return worst;
        }
        for (k, &a) in self.generator.eigenvalues().iter().enumerate() {
            for i in 0..=CERTIFY_POINTS {
                let t = self.horizon * i as f64 / CERTIFY_POINTS as f64;
                let err = cabs(self.compressed_symbol(k, t) - Complex64::new(exp(a * t), 0.0));
                if err > worst.2 {
                    worst = (k, t, err);
                }
            }
        }
        worst
    }

    fn certify_dilation(&self) -> Result<()> {
        let (mode, worst_t, achieved) = self.dilation_error();
        if achieved > self.settings.dilation_tol {
            return Err(Error::DilationAccuracy {
                mode,
                worst_t,
                achieved,
                tolerance: self.settings.dilation_tol,
            });
        }
        Ok(())
    }
}

fn lattice_coefficient(scale: f64, period: f64, n: u64) -> f64 {
    let freq = 2.0 * PI * n as f64 / period;
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    (2.0 / period) * scale * (1.0 - sign * exp(-scale * period / 2.0)) / (scale * scale + freq * freq)
}

/// Symmetric atoms, ordered `0, +x_1, −x_1, +x_2, −x_2, …`.
fn lattice_measure(scale: f64, horizon: f64, count: usize) -> (Vec<f64>, Vec<f64>) {
    let period = 2.0 * horizon;
    let half = (count - 1) / 2;
    let core = (7 * half).div_ceil(10);
    let blocks = half - core;

    // One-sided atoms (frequency, weight), n ≥ 1.
    let mut side: Vec<(f64, f64)> = Vec::with_capacity(half);
    for n in 1..=core as u64 {
        side.push((2.0 * PI * n as f64 / period, lattice_coefficient(scale, period, n)));
    }
    if blocks > 0 {
        let first = core as u64 + 1;
        let last = (100 * half as u64).max(first + blocks as u64) + 1;
        let ratio = libm::pow(last as f64 / first as f64, 1.0 / blocks as f64);
        let mut lo = first;
        for b in 1..=blocks {
            let remaining = (blocks - b) as u64;
            let target = libm::round(first as f64 * libm::pow(ratio, b as f64)) as u64;
            let hi = if b == blocks {
                last
            } else {
                target.max(lo + 1).min(last - remaining)
            };
            let (mut mass, mut moment) = (0.0, 0.0);
            for n in lo..hi {
                let c = lattice_coefficient(scale, period, n);
                mass += c;
                moment += c * 2.0 * PI * n as f64 / period;
            }
            side.push((moment / mass, mass));
            lo = hi;
        }
    }

    let center = lattice_coefficient(scale, period, 0);
    let total = center + 2.0 * side.iter().map(|(_, w)| w).sum::<f64>();
    let mut nodes = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    nodes.push(0.0);
    weights.push(0.0);
    for (x, w) in &side {
        nodes.push(*x);
        weights.push(w / total);
        nodes.push(-x);
        weights.push(w / total);
    }
    weights[0] = 1.0 - weights[1..].iter().sum::<f64>();
    (nodes, weights)
}
