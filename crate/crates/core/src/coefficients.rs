//! Coefficients `α`, `σ_i`, `γ` of the SPDE, their directional derivatives,
//! the Stratonovich-corrected drift, smooth Lipschitz truncation, and
//! finite-delay (path-dependent) coefficients.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{check_dim, Error, Result};
use crate::math::{abs, smoothstep5, smoothstep5_derivative, sqrt, tanh};
use crate::noise::JumpMeasureSpec;
use crate::spectral::ModeVector;

/// Read access to a solution path up to the current time.
pub trait PathHistory {
    /// Current time `t`.
    fn time(&self) -> f64;
    /// Current state `r_t`.
    fn current(&self) -> &ModeVector;
    /// `r_s` for `s ≤ t`, left-constant between stored points.
    fn value_at(&self, s: f64) -> ModeVector;
}

/// A single state with no stored past: every lookup returns the state itself.
pub struct PointState<'a> {
    pub t: f64,
    pub state: &'a ModeVector,
}

impl PathHistory for PointState<'_> {
    fn time(&self) -> f64 {
        self.t
    }

    fn current(&self) -> &ModeVector {
        self.state
    }

    fn value_at(&self, _s: f64) -> ModeVector {
        self.state.clone()
    }
}

/// Dense linear map on mode space, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    dim: usize,
    entries: Vec<f64>,
}

impl LinearMap {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        check_dim("linear map entries", dim * dim, entries.len())?;
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("linear map entries"));
        }
        Ok(Self { dim, entries })
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut entries = alloc::vec![0.0; dim * dim];
        for (k, d) in diag.iter().enumerate() {
            entries[k * dim + k] = *d;
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim + col]
    }

    pub fn apply(&self, v: &ModeVector) -> Result<ModeVector> {
        check_dim("linear map", self.dim, v.dim())?;
        Ok(ModeVector::from_fn(self.dim, |i| {
            let row = &self.entries[i * self.dim..(i + 1) * self.dim];
            row.iter().zip(v.as_slice()).map(|(a, x)| a * x).sum()
        }))
    }

    /// Frobenius norm, an upper bound for the operator norm.
    pub fn frobenius(&self) -> f64 {
        sqrt(self.entries.iter().map(|e| e * e).sum())
    }
}

/// Smooth scalar profile used inside functional-form fields.
#[derive(Clone, Debug, PartialEq)]
pub enum ScalarMap {
    /// `amplitude · tanh(scale · u)`
    Tanh { amplitude: f64, scale: f64 },
    /// `p(u) · ψ(|u| − cutoff)`: the polynomial `Σ c_k u^k` tapered to zero
    /// by the quintic bump between `cutoff` and `cutoff + 1`.
    Polynomial { coeffs: Vec<f64>, cutoff: f64 },
}

impl ScalarMap {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            ScalarMap::Tanh { amplitude, scale } => amplitude * tanh(scale * u),
            ScalarMap::Polynomial { coeffs, cutoff } => {
                poly(coeffs, u) * (1.0 - smoothstep5(abs(u) - cutoff))
            }
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match self {
            ScalarMap::Tanh { amplitude, scale } => {
                let th = tanh(scale * u);
                amplitude * scale * (1.0 - th * th)
            }
            ScalarMap::Polynomial { coeffs, cutoff } => {
                let bump = 1.0 - smoothstep5(abs(u) - cutoff);
                let dbump = -smoothstep5_derivative(abs(u) - cutoff) * u.signum();
                poly_derivative(coeffs, u) * bump + poly(coeffs, u) * dbump
            }
        }
    }

    /// Upper bound on `sup |φ'|`.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            ScalarMap::Tanh { amplitude, scale } => abs(amplitude * scale),
            ScalarMap::Polynomial { coeffs, cutoff } => {
                let r = cutoff + 1.0;
                let sup_p: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| abs(*c) * libm::pow(r, k as f64))
                    .sum();
                let sup_dp: f64 = coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, c)| abs(*c) * k as f64 * libm::pow(r, (k - 1) as f64))
                    .sum();
                // max of the smoothstep slope is 15/8
                sup_dp + sup_p * 15.0 / 8.0
            }
        }
    }
}

fn poly(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, ck| acc * u + ck)
}

fn poly_derivative(c: &[f64], u: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, ck)| acc * u + k as f64 * ck)
}

/// One term `φ(⟨ξ, h⟩) · v` of a functional-form field.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalTerm {
    pub functional: ModeVector,
    pub profile: ScalarMap,
    pub direction: ModeVector,
}

/// `(t, h) ↦ F(t, h)`
pub type FieldFn = dyn Fn(f64, &ModeVector) -> ModeVector + Send + Sync;
/// `(t, [h(t − τ_0), …]) ↦ F`
pub type DelayedFn = dyn Fn(f64, &[ModeVector]) -> ModeVector + Send + Sync;
/// `(t, h, x) ↦ γ(t, h, x)`
pub type JumpFn = dyn Fn(f64, &ModeVector, f64) -> ModeVector + Send + Sync;

/// Time-dependent closure field `(t, h) ↦ F(t, h)`.
#[derive(Clone)]
pub struct CustomField {
    pub name: String,
    pub map: Arc<FieldFn>,
    /// Declared Lipschitz constant, if known.
    pub lipschitz: Option<f64>,
}

impl fmt::Debug for CustomField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomField").field("name", &self.name).finish()
    }
}

/// State-dependent vector field on mode space.
#[derive(Clone, Debug)]
pub enum VectorField {
    Constant(ModeVector),
    Linear(LinearMap),
    /// `h ↦ Σ_j φ_j(⟨ξ_j, h⟩) v_j`
    FunctionalForm(Vec<FunctionalTerm>),
    Sum(Vec<VectorField>),
    /// `h ↦ ψ(‖h‖) F(h)` with `ψ ≡ 1` on `[0, C1]`, `ψ ≡ 0` beyond `C1 + 1`.
    Truncated { field: Box<VectorField>, radius: f64 },
    Custom(CustomField),
}

/// Quintic taper: 1 on `[0, C1]`, 0 on `[C1 + 1, ∞)`.
pub fn bump(norm: f64, radius: f64) -> f64 {
    1.0 - smoothstep5(norm - radius)
}

fn bump_derivative(norm: f64, radius: f64) -> f64 {
    -smoothstep5_derivative(norm - radius)
}

/// Central-difference step for directional derivatives.
fn fd_step(h: &ModeVector, v: &ModeVector) -> f64 {
    libm::cbrt(f64::EPSILON) * (1.0 + h.norm()) / v.norm()
}

/// `(F(h + s v) − F(h − s v)) / 2s` with `s = cbrt(eps)(1 + ‖h‖)/‖v‖`.
pub fn finite_difference<F>(h: &ModeVector, v: &ModeVector, mut f: F) -> Result<ModeVector>
where
    F: FnMut(&ModeVector) -> Result<ModeVector>,
{
    let vn = v.norm();
    if vn == 0.0 {
        return Ok(ModeVector::zeros(f(h)?.dim()));
    }
    let s = fd_step(h, v);
    let mut plus = h.clone();
    plus.axpy(s, v);
    let mut minus = h.clone();
    minus.axpy(-s, v);
    let mut out = f(&plus)?;
    out.axpy(-1.0, &f(&minus)?);
    Ok(out.scaled(0.5 / s))
}

impl VectorField {
    pub fn zero(dim: usize) -> Self {
        VectorField::Constant(ModeVector::zeros(dim))
    }

    pub fn truncated(self, radius: f64) -> Result<Self> {
        truncate_lipschitz(self, radius)
    }

    /// `F(t, h)`
    pub fn eval(&self, t: f64, h: &ModeVector) -> Result<ModeVector> {
        let out = match self {
            VectorField::Constant(c) => {
                check_dim("constant field", c.dim(), h.dim())?;
                c.clone()
            }
            VectorField::Linear(b) => b.apply(h)?,
            VectorField::FunctionalForm(terms) => {
                let mut out = ModeVector::zeros(h.dim());
                for term in terms {
                    check_dim("functional", h.dim(), term.functional.dim())?;
                    check_dim("functional direction", h.dim(), term.direction.dim())?;
                    out.axpy(term.profile.eval(term.functional.dot(h)), &term.direction);
                }
                out
            }
            VectorField::Sum(parts) => {
                let mut out = ModeVector::zeros(h.dim());
                for p in parts {
                    out += &p.eval(t, h)?;
                }
                out
            }
            VectorField::Truncated { field, radius } => {
                let psi = bump(h.norm(), *radius);
                if psi == 0.0 {
                    ModeVector::zeros(h.dim())
                } else {
                    field.eval(t, h)?.scaled(psi)
                }
            }
            VectorField::Custom(c) => {
                let v = (c.map)(t, h);
                check_dim("custom field", h.dim(), v.dim())?;
                v
            }
        };
        out.ensure_finite("vector field")
    }

    /// `DF(h) · v`; analytic where the kind allows it, central differences
    /// for closure fields.
    pub fn directional_derivative(&self, t: f64, h: &ModeVector, v: &ModeVector) -> Result<ModeVector> {
        check_dim("derivative direction", h.dim(), v.dim())?;
        match self {
            VectorField::Constant(_) => Ok(ModeVector::zeros(h.dim())),
            VectorField::Linear(b) => b.apply(v),
            VectorField::FunctionalForm(terms) => {
                let mut out = ModeVector::zeros(h.dim());
                for term in terms {
                    let slope = term.profile.derivative(term.functional.dot(h));
                    out.axpy(slope * term.functional.dot(v), &term.direction);
                }
                Ok(out)
            }
            VectorField::Sum(parts) => {
                let mut out = ModeVector::zeros(h.dim());
                for p in parts {
                    out += &p.directional_derivative(t, h, v)?;
                }
                Ok(out)
            }
            VectorField::Truncated { field, radius } => {
                let n = h.norm();
                let psi = bump(n, *radius);
                let dpsi = bump_derivative(n, *radius);
                let mut out = if psi == 0.0 {
                    ModeVector::zeros(h.dim())
                } else {
                    field.directional_derivative(t, h, v)?.scaled(psi)
                };
                if dpsi != 0.0 && n > 0.0 {
                    out.axpy(dpsi * h.dot(v) / n, &field.eval(t, h)?);
                }
                Ok(out)
            }
            VectorField::Custom(_) => finite_difference(h, v, |x| self.eval(t, x)),
        }
    }

    /// Global Lipschitz bound when one can be read off the representation.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        match self {
            VectorField::Constant(_) => Some(0.0),
            VectorField::Linear(b) => Some(b.frobenius()),
            VectorField::FunctionalForm(terms) => Some(
                terms
                    .iter()
                    .map(|t| t.profile.lipschitz_bound() * t.functional.norm() * t.direction.norm())
                    .sum(),
            ),
            VectorField::Sum(parts) => parts.iter().map(|p| p.lipschitz_bound()).sum(),
            VectorField::Truncated { field, radius } => {
                let inner = field.lipschitz_bound()?;
                let at_zero = field.eval(0.0, &ModeVector::zeros(field.dim_hint()?)).ok()?.norm();
                let sup = at_zero + inner * (radius + 1.0);
                Some(inner + sup * 15.0 / 8.0)
            }
            VectorField::Custom(c) => c.lipschitz,
        }
    }

    fn dim_hint(&self) -> Option<usize> {
        match self {
            VectorField::Constant(c) => Some(c.dim()),
            VectorField::Linear(b) => Some(b.dim()),
            VectorField::FunctionalForm(terms) => terms.first().map(|t| t.direction.dim()),
            VectorField::Sum(parts) => parts.iter().find_map(|p| p.dim_hint()),
            VectorField::Truncated { field, .. } => field.dim_hint(),
            VectorField::Custom(_) => None,
        }
    }
}

/// `h ↦ ψ(‖h‖) F(h)`: agrees with `F` on the ball of radius `C1`, vanishes
/// outside radius `C1 + 1`, and is globally Lipschitz. The quintic taper is
/// C², which the schemes here need; smoother tapers are not offered.
pub fn truncate_lipschitz(field: VectorField, radius: f64) -> Result<VectorField> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::contract("truncation radius must be positive"));
    }
    Ok(VectorField::Truncated {
        field: Box::new(field),
        radius,
    })
}

/// Delay times `0 ≤ δ_1 < … < δ_K ≤ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DelaySpec {
    delays: Vec<f64>,
}

impl DelaySpec {
    pub fn new(delays: Vec<f64>) -> Result<Self> {
        if delays.is_empty() {
            return Err(Error::contract("delay list must not be empty"));
        }
        if delays.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return Err(Error::contract("delays must lie in [0, 1]"));
        }
        if delays.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::contract("delays must increase strictly"));
        }
        Ok(Self { delays })
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    /// `(r_{δ_1 t}, …, r_{δ_K t})`
    pub fn gather(&self, path: &dyn PathHistory) -> Vec<ModeVector> {
        let t = path.time();
        self.delays
            .iter()
            .map(|d| {
                if *d == 1.0 {
                    path.current().clone()
                } else {
                    path.value_at(d * t)
                }
            })
            .collect()
    }
}

/// Coefficient depending on the path through finitely many delayed values.
#[derive(Clone)]
pub struct DelayedField {
    pub delays: DelaySpec,
    pub map: Arc<DelayedFn>,
    pub lipschitz: Option<f64>,
}

impl fmt::Debug for DelayedField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DelayedField")
            .field("delays", &self.delays)
            .finish()
    }
}

/// Drift or diffusion column: Markovian or finite-delay.
#[derive(Clone, Debug)]
pub enum Field {
    Markov(VectorField),
    Delayed(DelayedField),
}

impl From<VectorField> for Field {
    fn from(f: VectorField) -> Self {
        Field::Markov(f)
    }
}

impl Field {
    pub fn eval(&self, path: &dyn PathHistory) -> Result<ModeVector> {
        match self {
            Field::Markov(f) => f.eval(path.time(), path.current()),
            Field::Delayed(d) => {
                let args = d.delays.gather(path);
                let v = (d.map)(path.time(), &args);
                check_dim("delayed field", path.current().dim(), v.dim())?;
                v.ensure_finite("delayed field")
            }
        }
    }

    /// Evaluation at a bare state; delayed fields see a constant path.
    pub fn eval_state(&self, t: f64, h: &ModeVector) -> Result<ModeVector> {
        self.eval(&PointState { t, state: h })
    }

    pub fn is_delayed(&self) -> bool {
        matches!(self, Field::Delayed(_))
    }

    pub fn markov(&self) -> Option<&VectorField> {
        match self {
            Field::Markov(f) => Some(f),
            Field::Delayed(_) => None,
        }
    }

    /// Directional derivative in the current state. Delayed fields are
    /// differentiated along a constant path by central differences.
    pub fn directional_derivative(&self, t: f64, h: &ModeVector, v: &ModeVector) -> Result<ModeVector> {
        match self {
            Field::Markov(f) => f.directional_derivative(t, h, v),
            Field::Delayed(_) => finite_difference(h, v, |x| self.eval_state(t, x)),
        }
    }

    pub fn lipschitz_bound(&self) -> Option<f64> {
        match self {
            Field::Markov(f) => f.lipschitz_bound(),
            Field::Delayed(d) => d.lipschitz,
        }
    }
}

/// Jump coefficient `γ(h, x)`.
#[derive(Clone)]
pub enum JumpField {
    /// `γ(h, x) = F_0(h) + x · F_1(h)`
    AffineInMark { offset: VectorField, slope: VectorField },
    Custom {
        name: String,
        map: Arc<JumpFn>,
        lipschitz: Option<f64>,
    },
}

impl fmt::Debug for JumpField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpField::AffineInMark { offset, slope } => f
                .debug_struct("AffineInMark")
                .field("offset", offset)
                .field("slope", slope)
                .finish(),
            JumpField::Custom { name, .. } => f.debug_struct("Custom").field("name", name).finish(),
        }
    }
}

impl JumpField {
    pub fn zero(dim: usize) -> Self {
        JumpField::AffineInMark {
            offset: VectorField::zero(dim),
            slope: VectorField::zero(dim),
        }
    }

    /// `γ(h, x) = x · c`
    pub fn mark_times(c: ModeVector) -> Self {
        let dim = c.dim();
        JumpField::AffineInMark {
            offset: VectorField::zero(dim),
            slope: VectorField::Constant(c),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            JumpField::AffineInMark { offset, slope } => {
                let zero = |f: &VectorField| matches!(f, VectorField::Constant(c) if c.norm_sq() == 0.0);
                zero(offset) && zero(slope)
            }
            JumpField::Custom { .. } => false,
        }
    }

    /// `γ(h, x)` without checking `x ∈ E`.
    pub fn eval_unchecked(&self, t: f64, h: &ModeVector, x: f64) -> Result<ModeVector> {
        match self {
            JumpField::AffineInMark { offset, slope } => {
                let mut out = offset.eval(t, h)?;
                if x != 0.0 {
                    out.axpy(x, &slope.eval(t, h)?);
                }
                Ok(out)
            }
            JumpField::Custom { map, .. } => {
                let v = map(t, h, x);
                check_dim("jump field", h.dim(), v.dim())?;
                v.ensure_finite("jump field")
            }
        }
    }

    /// `γ(h, x)`; marks outside `E` are rejected.
    pub fn eval(&self, t: f64, h: &ModeVector, x: f64, spec: &JumpMeasureSpec) -> Result<ModeVector> {
        if !spec.contains(x) {
            return Err(Error::MarkOutsideSpace(x));
        }
        self.eval_unchecked(t, h, x)
    }

    /// `Dγ(h, x) · v`
    pub fn directional_derivative(&self, t: f64, h: &ModeVector, x: f64, v: &ModeVector) -> Result<ModeVector> {
        match self {
            JumpField::AffineInMark { offset, slope } => {
                let mut out = offset.directional_derivative(t, h, v)?;
                if x != 0.0 {
                    out.axpy(x, &slope.directional_derivative(t, h, v)?);
                }
                Ok(out)
            }
            JumpField::Custom { .. } => finite_difference(h, v, |y| self.eval_unchecked(t, y, x)),
        }
    }

    pub fn lipschitz_bound(&self, spec: &JumpMeasureSpec) -> Option<f64> {
        match self {
            JumpField::AffineInMark { offset, slope } => {
                // (∫ ‖γ(h1,x) − γ(h2,x)‖² F(dx))^{1/2} ≤ L0 √F(B) + L1 √(F(B) E[x²])
                let (_, m2) = spec.truncated_mark_moments();
                let f = spec.effective_intensity();
                Some(offset.lipschitz_bound()? * sqrt(f) + slope.lipschitz_bound()? * sqrt(f * m2))
            }
            JumpField::Custom { lipschitz, .. } => *lipschitz,
        }
    }
}

/// `∫_{B_n} γ(h, x) F(dx)`: exact finite sum for discrete marks,
/// Gauss-Legendre with error estimate for interval marks.
pub fn compensator_drift(
    jump: &JumpField,
    t: f64,
    h: &ModeVector,
    spec: &JumpMeasureSpec,
) -> Result<ModeVector> {
    if !spec.is_active() || jump.is_zero() {
        return Ok(ModeVector::zeros(h.dim()));
    }
    if let JumpField::AffineInMark { offset, slope } = jump {
        // linear in the mark: only the first mark moment is needed
        let f = spec.effective_intensity();
        if f == 0.0 {
            return Ok(ModeVector::zeros(h.dim()));
        }
        if let crate::noise::MarkDistribution::Uniform { .. } = spec.marks() {
            let (m1, _) = spec.truncated_mark_moments();
            let mut out = offset.eval(t, h)?.scaled(f);
            out.axpy(f * m1, &slope.eval(t, h)?);
            return Ok(out);
        }
    }
    spec.integrate_truncated(h.dim(), |x| jump.eval_unchecked(t, h, x))
}

/// Same integral over the discarded marks `E ∖ B_n`.
pub fn compensator_complement(
    jump: &JumpField,
    t: f64,
    h: &ModeVector,
    spec: &JumpMeasureSpec,
) -> Result<ModeVector> {
    spec.integrate_complement(h.dim(), |x| jump.eval_unchecked(t, h, x))
}

/// `∫_{E∖B_n} ‖γ(h, x)‖² F(dx)`
pub fn jump_tail_energy(jump: &JumpField, t: f64, h: &ModeVector, spec: &JumpMeasureSpec) -> Result<f64> {
    let v = spec.integrate_complement(1, |x| {
        let g = jump.eval_unchecked(t, h, x)?;
        Ok(ModeVector::from_fn(1, |_| g.norm_sq()))
    })?;
    Ok(v[0])
}

/// Piecewise-constant `L(t)` (value `values[i]` on `[breaks[i], breaks[i+1])`,
/// the last value continues to infinity) and the truncation radius `C1`.
#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzProfile {
    breaks: Vec<f64>,
    values: Vec<f64>,
    radius: Option<f64>,
}

impl LipschitzProfile {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.is_empty() || breaks.len() != values.len() {
            return Err(Error::contract("Lipschitz profile needs one value per breakpoint"));
        }
        if breaks[0] != 0.0 || breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::contract("Lipschitz breakpoints must start at 0 and increase"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::contract("Lipschitz values must be finite and nonnegative"));
        }
        Ok(Self {
            breaks,
            values,
            radius: None,
        })
    }

    pub fn constant(l: f64) -> Result<Self> {
        Self::new(alloc::vec![0.0], alloc::vec![l])
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = Some(radius);
        self
    }

    pub fn radius(&self) -> Option<f64> {
        self.radius
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.breaks.partition_point(|b| *b <= t);
        self.values[i.saturating_sub(1)]
    }

    /// `g(t) = ∫_0^t L(s)² ds`, exact for the step profile.
    pub fn energy(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let lo = self.breaks[i];
            if lo >= t {
                break;
            }
            let hi = self.breaks.get(i + 1).copied().unwrap_or(f64::INFINITY).min(t);
            acc += v * v * (hi - lo);
        }
        acc
    }
}

/// Coefficient bundle of the SPDE.
#[derive(Clone, Debug)]
pub struct Coefficients {
    pub drift: Field,
    /// One column `σ_i` per retained Brownian mode.
    pub diffusion: Vec<Field>,
    pub jump: JumpField,
    pub lipschitz: LipschitzProfile,
}

impl Coefficients {
    pub fn is_delayed(&self) -> bool {
        self.drift.is_delayed() || self.diffusion.iter().any(Field::is_delayed)
    }

    /// Largest Lipschitz bound readable from the fields, with the diffusion
    /// columns weighted by `√λ_i` and the jump part measured in `L²(F)`.
    pub fn lipschitz_estimate(&self, q: &[f64], spec: &JumpMeasureSpec) -> Option<f64> {
        let a = self.drift.lipschitz_bound()?;
        let mut s2 = 0.0;
        for (col, l) in self.diffusion.iter().zip(q) {
            let b = col.lipschitz_bound()?;
            s2 += l * b * b;
        }
        let g = if spec.is_active() {
            self.jump.lipschitz_bound(spec)?
        } else {
            0.0
        };
        Some(a.max(sqrt(s2)).max(g))
    }
}

/// `α(h) − ½ Σ_i λ_i Dσ_i(h) · σ_i(h)`: the drift of the equivalent
/// Stratonovich equation driven by standard Brownian motions through the
/// columns `√λ_i σ_i`.
pub fn stratonovich_drift(c: &Coefficients, q: &[f64], t: f64, h: &ModeVector) -> Result<ModeVector> {
    check_dim("diffusion columns", q.len(), c.diffusion.len())?;
    let mut out = c.drift.eval_state(t, h)?;
    for (col, l) in c.diffusion.iter().zip(q) {
        let s = col.eval_state(t, h)?;
        if s.norm_sq() == 0.0 {
            continue;
        }
        let ds = col.directional_derivative(t, h, &s)?;
        out.axpy(-0.5 * l, &ds);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::MarkDistribution;
    use alloc::vec;
    use proptest::prelude::*;

    fn mv(v: &[f64]) -> ModeVector {
        ModeVector::new(v.to_vec()).unwrap()
    }

    fn tanh_field(dim: usize) -> VectorField {
        VectorField::FunctionalForm(vec![FunctionalTerm {
            functional: ModeVector::unit(dim, 0),
            profile: ScalarMap::Tanh {
                amplitude: 1.0,
                scale: 1.0,
            },
            direction: ModeVector::from_fn(dim, |k| 1.0 / (k as f64 + 1.0)),
        }])
    }

    fn coeffs(drift: VectorField, diffusion: Vec<VectorField>) -> Coefficients {
        Coefficients {
            drift: drift.into(),
            diffusion: diffusion.into_iter().map(Field::from).collect(),
            jump: JumpField::zero(1),
            lipschitz: LipschitzProfile::constant(1.0).unwrap(),
        }
    }

    #[test]
    fn constant_and_linear_fields() {
        let c = VectorField::Constant(mv(&[1.0, -2.0]));
        assert_eq!(c.eval(0.0, &mv(&[5.0, 5.0])).unwrap(), mv(&[1.0, -2.0]));
        let b = VectorField::Linear(LinearMap::diagonal(&[0.5, 0.5]));
        assert_eq!(b.eval(0.0, &ModeVector::unit(2, 0)).unwrap(), mv(&[0.5, 0.0]));
    }

    #[test]
    fn tanh_functional_form() {
        let f = tanh_field(3);
        let out = f.eval(0.0, &mv(&[2.0, 0.0, 0.0])).unwrap();
        let th = 2.0f64.tanh();
        for k in 0..3 {
            assert!((out[k] - th / (k as f64 + 1.0)).abs() < 1e-15);
        }
        let d = f.directional_derivative(0.0, &ModeVector::zeros(3), &mv(&[0.7, 1.0, 1.0])).unwrap();
        for k in 0..3 {
            assert!((d[k] - 0.7 / (k as f64 + 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn stratonovich_correction() {
        let c = coeffs(VectorField::Constant(mv(&[0.3])), vec![VectorField::Constant(mv(&[0.5]))]);
        assert_eq!(stratonovich_drift(&c, &[1.0], 0.0, &mv(&[2.0])).unwrap(), mv(&[0.3]));
        let c = coeffs(VectorField::Constant(mv(&[0.3])), vec![VectorField::Linear(LinearMap::diagonal(&[1.0]))]);
        let v = stratonovich_drift(&c, &[1.0], 0.0, &mv(&[2.0])).unwrap();
        assert!((v[0] - (0.3 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn analytic_and_fd_jacobians_agree() {
        let f = VectorField::Sum(vec![
            tanh_field(3),
            VectorField::FunctionalForm(vec![FunctionalTerm {
                functional: mv(&[0.2, -0.4, 0.1]),
                profile: ScalarMap::Polynomial {
                    coeffs: vec![0.1, -0.3, 0.5, 0.2],
                    cutoff: 2.0,
                },
                direction: mv(&[1.0, 0.5, -1.0]),
            }]),
        ]);
        let h = mv(&[0.4, -1.3, 2.2]);
        let v = mv(&[0.3, 0.9, -0.2]);
        let analytic = f.directional_derivative(0.0, &h, &v).unwrap();
        let fd = finite_difference(&h, &v, |x| f.eval(0.0, x)).unwrap();
        assert!((&analytic - &fd).norm() <= 1e-6 * analytic.norm().max(1e-12));
    }

    #[test]
    fn truncation() {
        let f = VectorField::Linear(LinearMap::diagonal(&[1.0, 1.0]));
        let t = f.clone().truncated(2.0).unwrap();
        let inside = mv(&[1.0, 0.0]);
        assert_eq!(t.eval(0.0, &inside).unwrap(), f.eval(0.0, &inside).unwrap());
        assert_eq!(t.eval(0.0, &mv(&[4.0, 0.0])).unwrap(), ModeVector::zeros(2));
        let mid = mv(&[2.5, 0.0]);
        // smoothstep(0.5) = 0.5
        assert!((t.eval(0.0, &mid).unwrap()[0] - 2.5 * 0.5).abs() < 1e-15);
        assert!(truncate_lipschitz(f, 0.0).is_err());
    }

    #[test]
    fn truncated_derivative_matches_fd() {
        let t = tanh_field(2).truncated(0.5).unwrap();
        let h = mv(&[0.7, 0.4]);
        let v = mv(&[1.0, -2.0]);
        let a = t.directional_derivative(0.0, &h, &v).unwrap();
        let fd = finite_difference(&h, &v, |x| t.eval(0.0, x)).unwrap();
        assert!((&a - &fd).norm() <= 1e-6 * a.norm());
    }

    #[test]
    fn compensator_examples() {
        let spec = JumpMeasureSpec::new(
            2.0,
            MarkDistribution::Discrete {
                points: vec![1.0],
                weights: vec![1.0],
            },
        )
        .unwrap();
        let h = mv(&[0.0, 0.0]);
        let zero = JumpField::zero(2);
        assert_eq!(compensator_drift(&zero, 0.0, &h, &spec).unwrap(), ModeVector::zeros(2));
        let g = JumpField::mark_times(ModeVector::unit(2, 0));
        assert_eq!(compensator_drift(&g, 0.0, &h, &spec).unwrap(), mv(&[2.0, 0.0]));
        let none = spec.clone().with_truncation(Some(0));
        assert_eq!(compensator_drift(&g, 0.0, &h, &none).unwrap(), ModeVector::zeros(2));
        assert!(matches!(g.eval(0.0, &h, 3.0, &spec), Err(Error::MarkOutsideSpace(_))));
    }

    #[test]
    fn compensator_uniform_marks_closed_form_vs_quadrature() {
        let spec = JumpMeasureSpec::new(1.5, MarkDistribution::Uniform { lo: -1.0, hi: 3.0 })
            .unwrap()
            .with_truncation(Some(3));
        let h = mv(&[0.4]);
        let affine = JumpField::mark_times(mv(&[2.0]));
        let custom = JumpField::Custom {
            name: "x*2".into(),
            map: Arc::new(|_, h: &ModeVector, x| ModeVector::from_fn(h.dim(), |_| 2.0 * x)),
            lipschitz: Some(0.0),
        };
        let a = compensator_drift(&affine, 0.0, &h, &spec).unwrap();
        let b = compensator_drift(&custom, 0.0, &h, &spec).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-12);
    }

    #[test]
    fn tail_energy_of_constant_jump() {
        let spec = JumpMeasureSpec::new(
            4.0,
            MarkDistribution::Discrete {
                points: vec![1.0, -1.0],
                weights: vec![0.5, 0.5],
            },
        )
        .unwrap()
        .with_truncation(Some(1));
        let g = JumpField::AffineInMark {
            offset: VectorField::Constant(mv(&[3.0])),
            slope: VectorField::zero(1),
        };
        let e = jump_tail_energy(&g, 0.0, &mv(&[0.0]), &spec).unwrap();
        assert!((e - 4.0 * 0.5 * 9.0).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_profile_energy() {
        let l = LipschitzProfile::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(l.eval(0.5), 1.0);
        assert_eq!(l.eval(1.0), 2.0);
        assert!((l.energy(2.0) - (1.0 + 4.0)).abs() < 1e-15);
        assert!((l.energy(0.5) - 0.5).abs() < 1e-15);
    }

    struct Steps {
        t: f64,
        times: Vec<f64>,
        values: Vec<ModeVector>,
    }

    impl PathHistory for Steps {
        fn time(&self) -> f64 {
            self.t
        }
        fn current(&self) -> &ModeVector {
            self.values.last().unwrap()
        }
        fn value_at(&self, s: f64) -> ModeVector {
            assert!(s <= self.t, "looked into the future");
            let i = self.times.partition_point(|x| *x <= s);
            self.values[i - 1].clone()
        }
    }

    #[test]
    fn delayed_field_reads_the_past() {
        let f = Field::Delayed(DelayedField {
            delays: DelaySpec::new(vec![0.5, 1.0]).unwrap(),
            map: Arc::new(|_, args: &[ModeVector]| &args[0] - &args[1]),
            lipschitz: Some(2.0),
        });
        let path = Steps {
            t: 1.0,
            times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            values: [0.0, 1.0, 2.0, 3.0, 4.0].iter().map(|v| mv(&[*v])).collect(),
        };
        assert_eq!(f.eval(&path).unwrap(), mv(&[-2.0]));
        assert!(DelaySpec::new(vec![0.5, 0.5]).is_err());
        assert!(DelaySpec::new(vec![1.5]).is_err());
    }

    proptest! {
        #[test]
        fn tanh_field_is_lipschitz(
            a in prop::collection::vec(-3.0f64..3.0, 3),
            b in prop::collection::vec(-3.0f64..3.0, 3),
        ) {
            let f = VectorField::Sum(vec![
                tanh_field(3),
                VectorField::Linear(LinearMap::diagonal(&[0.5, -0.2, 0.1])),
            ]);
            let l = f.lipschitz_bound().unwrap();
            let h1 = mv(&a);
            let h2 = mv(&b);
            let gap = (&f.eval(0.0, &h1).unwrap() - &f.eval(0.0, &h2).unwrap()).norm();
            prop_assert!(gap <= l * (&h1 - &h2).norm() * (1.0 + 1e-9));
        }

        #[test]
        fn truncated_field_is_lipschitz_and_bounded(
            a in prop::collection::vec(-6.0f64..6.0, 2),
            b in prop::collection::vec(-6.0f64..6.0, 2),
        ) {
            let f = VectorField::Linear(LinearMap::diagonal(&[1.0, 2.0])).truncated(1.5).unwrap();
            let l = f.lipschitz_bound().unwrap();
            let h1 = mv(&a);
            let h2 = mv(&b);
            let v1 = f.eval(0.0, &h1).unwrap();
            let gap = (&v1 - &f.eval(0.0, &h2).unwrap()).norm();
            prop_assert!(gap <= l * (&h1 - &h2).norm() * (1.0 + 1e-9));
            // sup over the ball of radius C1 + 1 of ‖B h‖ is 2 · 2.5
            prop_assert!(v1.norm() <= 5.0 + 1e-12);
        }

        #[test]
        fn derivative_is_linear_in_direction(
            h in prop::collection::vec(-2.0f64..2.0, 3),
            v in prop::collection::vec(-2.0f64..2.0, 3),
            w in prop::collection::vec(-2.0f64..2.0, 3),
            s in -3.0f64..3.0,
        ) {
            let f = tanh_field(3).truncated(1.0).unwrap();
            let (h, v, w) = (mv(&h), mv(&v), mv(&w));
            let mut comb = v.scaled(s);
            comb += &w;
            let lhs = f.directional_derivative(0.0, &h, &comb).unwrap();
            let mut rhs = f.directional_derivative(0.0, &h, &v).unwrap().scaled(s);
            rhs += &f.directional_derivative(0.0, &h, &w).unwrap();
            prop_assert!((&lhs - &rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        }
    }
}
