//! Run configuration: a strict TOML schema and its translation into core
//! types.

use std::path::{Path, PathBuf};

use moving_frame_core::coefficients::{
    Coefficients, Field, FunctionalTerm, JumpField, LinearMap, LipschitzProfile, ScalarMap, VectorField,
};
use moving_frame_core::noise::{JumpMeasureSpec, MarkDistribution, QWienerSpec};
use moving_frame_core::problem::{InitialHistory, SpdeProblem};
use moving_frame_core::schemes::{BranchPolicy, OdeSettings, SchemeConfig, SchemeKind, TestFunction};
use moving_frame_core::spectral::{build_cauchy_dilation, DiagonalGenerator, GroupFrame, ModeVector};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    pub output: Option<PathBuf>,
    /// Write a gnuplot script next to every CSV.
    #[serde(default)]
    pub plots: bool,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub scheme: SchemeSpec,
    pub experiment: ExperimentSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    /// Eigenvalues `a_k` of the generator.
    pub eigenvalues: Option<Vec<f64>>,
    /// Dirichlet heat operator on `(0, 1)` instead of explicit eigenvalues.
    pub heat: Option<HeatSpec>,
    pub r0: Vec<f64>,
    #[serde(default)]
    pub t0: f64,
    pub horizon: f64,
    /// Eigenvalues of `Q`; one Wiener direction each.
    pub q: Vec<f64>,
    pub lipschitz: LipschitzSpec,
    /// Truncation radius `C1` for locally Lipschitz fields.
    pub truncation_radius: Option<f64>,
    #[serde(default)]
    pub drift: FieldSpec,
    /// One field per Wiener direction.
    #[serde(default)]
    pub diffusion: Vec<FieldSpec>,
    pub jumps: Option<JumpSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatSpec {
    pub modes: usize,
    pub diffusivity: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum LipschitzSpec {
    Constant(f64),
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
}

/// Sum of the parts that are present; all absent means the zero field.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub constant: Option<Vec<f64>>,
    pub diagonal: Option<Vec<f64>>,
    /// Row-major matrix.
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub tanh: Vec<TanhTerm>,
    #[serde(default)]
    pub polynomial: Vec<PolynomialTerm>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TanhTerm {
    pub functional: Vec<f64>,
    pub direction: Vec<f64>,
    pub amplitude: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialTerm {
    pub functional: Vec<f64>,
    pub direction: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub cutoff: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    pub intensity: f64,
    pub points: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
    pub uniform: Option<[f64; 2]>,
    /// Keep the first `n` atoms (or `n/(n+1)` of the uniform range).
    pub truncation: Option<usize>,
    /// `γ(h, x) = offset(h) + x · slope(h)`
    #[serde(default)]
    pub offset: FieldSpec,
    #[serde(default)]
    pub slope: FieldSpec,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKindSpec {
    #[default]
    Euler,
    Cubature,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum BranchSpec {
    #[default]
    FullTree,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum FrameSpec {
    /// Euler splitting directly on mode space.
    #[default]
    None,
    Direct,
    Cauchy,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFunctionSpec {
    Quadratic,
    Constant(f64),
    Linear(Vec<f64>),
    Tanh { functional: Vec<f64>, scale: f64 },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    #[serde(default)]
    pub kind: SchemeKindSpec,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default)]
    pub antithetic: bool,
    #[serde(default = "default_test_function")]
    pub test_function: TestFunctionSpec,
    /// Cubature formula file, relative to the config file.
    pub formula: Option<PathBuf>,
    #[serde(default)]
    pub branches: BranchSpec,
    #[serde(default = "default_branch_budget")]
    pub branch_budget: u64,
    #[serde(default = "default_branch_samples")]
    pub branch_samples: usize,
    pub ode_tolerance: Option<f64>,
    pub ode_substeps: Option<usize>,
    pub ode_max_substeps: Option<usize>,
    #[serde(default)]
    pub frame: FrameSpec,
    #[serde(default = "default_dilation_nodes")]
    pub dilation_nodes: usize,
}

impl Default for SchemeSpec {
    fn default() -> Self {
        toml::from_str("").expect("scheme defaults")
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceSpec {
    /// Closed-form moments of the constant-coefficient problem.
    #[default]
    OuExact,
    /// Crank–Nicolson solution of the backward equation (one mode).
    Kolmogorov,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentSpec {
    Simulate {
        #[serde(default = "default_save_paths")]
        save_paths: usize,
    },
    Converge {
        #[serde(default = "default_levels")]
        levels: usize,
        #[serde(default)]
        reference: ReferenceSpec,
        /// Subtract the constant-coefficient part of the problem, simulated
        /// on the same noise, and add back its exact discrete expectation.
        #[serde(default)]
        control_variate: bool,
        #[serde(default = "default_kolmogorov_nodes")]
        kolmogorov_nodes: usize,
        #[serde(default = "default_kolmogorov_steps")]
        kolmogorov_steps: usize,
        #[serde(default = "default_kolmogorov_width")]
        kolmogorov_half_width: f64,
    },
    CubatureVerify {
        /// Overrides `scheme.formula`.
        formula: Option<PathBuf>,
        #[serde(default = "one")]
        time: f64,
    },
    Stability {
        /// Truncation levels `n`; the untruncated problem is always added last.
        levels: Vec<usize>,
        #[serde(default = "default_stability_steps")]
        steps: usize,
        #[serde(default = "default_stability_trajectories")]
        trajectories: usize,
    },
    PicardValidate {
        #[serde(default = "default_fine_steps")]
        fine_steps: usize,
        #[serde(default = "default_coarse_steps")]
        coarse_steps: Vec<usize>,
        #[serde(default = "default_ensemble")]
        ensemble: usize,
        #[serde(default = "half")]
        epsilon: f64,
        #[serde(default = "default_picard_tol")]
        tol: f64,
        #[serde(default = "default_max_iters")]
        max_iters: usize,
    },
    VariationCheck {
        direction: Vec<f64>,
        #[serde(default = "default_epsilons")]
        epsilons: Vec<f64>,
        #[serde(default = "default_variation_ensemble")]
        ensemble: usize,
    },
    NoiseValidate {
        #[serde(default = "default_integrands")]
        integrands: usize,
        #[serde(default = "default_isometry_trajectories")]
        trajectories: usize,
        #[serde(default = "default_cells")]
        cells: usize,
        #[serde(default = "default_fubini_nodes")]
        fubini_nodes: usize,
        #[serde(default = "default_fubini_paths")]
        fubini_paths: usize,
        #[serde(default = "default_fubini_terms")]
        fubini_terms: usize,
    },
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn default_steps() -> usize {
    32
}
fn default_trajectories() -> usize {
    10_000
}
fn default_test_function() -> TestFunctionSpec {
    TestFunctionSpec::Quadratic
}
fn default_branch_budget() -> u64 {
    1 << 22
}
fn default_branch_samples() -> usize {
    4096
}
fn default_dilation_nodes() -> usize {
    2001
}
fn default_save_paths() -> usize {
    4
}
fn default_levels() -> usize {
    4
}
fn default_kolmogorov_nodes() -> usize {
    2001
}
fn default_kolmogorov_steps() -> usize {
    1000
}
fn default_kolmogorov_width() -> f64 {
    8.0
}
fn default_stability_steps() -> usize {
    128
}
fn default_stability_trajectories() -> usize {
    2000
}
fn default_fine_steps() -> usize {
    1024
}
fn default_coarse_steps() -> Vec<usize> {
    vec![16, 32, 64, 128]
}
fn default_ensemble() -> usize {
    512
}
fn default_picard_tol() -> f64 {
    1e-12
}
fn default_max_iters() -> usize {
    200
}
fn default_epsilons() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}
fn default_variation_ensemble() -> usize {
    64
}
fn default_integrands() -> usize {
    3
}
fn default_isometry_trajectories() -> usize {
    100_000
}
fn default_cells() -> usize {
    5
}
fn default_fubini_nodes() -> usize {
    10_000
}
fn default_fubini_paths() -> usize {
    1000
}
fn default_fubini_terms() -> usize {
    3
}

/// Parses `text`, applying `key.path=value` overrides first. Values are read
/// as TOML (`3`, `1e-3`, `[1, 2]`, `"euler"`) and fall back to bare strings.
/// Numeric path segments index into arrays (`problem.drift.tanh.0.amplitude`).
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut root: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Validation(format!("config: {e}")))?;
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let cfg: RunConfig = toml::Value::Table(root)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Validation(format!("config: {e}")))?;
    Ok(cfg)
}

fn apply_override(root: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override `{spec}` is not key=value")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Validation(format!("override key `{key}` is malformed")));
    }
    let bad = |p: &str| CliError::Validation(format!("override key `{key}`: cannot descend into `{p}`"));
    let mut node = root
        .entry(parts[0].to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    for p in &parts[1..] {
        node = match node {
            toml::Value::Table(t) => t
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new())),
            toml::Value::Array(a) => {
                let i: usize = p.parse().map_err(|_| bad(p))?;
                a.get_mut(i).ok_or_else(|| bad(p))?
            }
            _ => return Err(bad(p)),
        };
    }
    *node = value;
    Ok(())
}

fn mode_vector(v: &[f64], dim: usize, what: &str) -> Result<ModeVector, CliError> {
    if v.len() != dim {
        return Err(CliError::Validation(format!("{what}: expected {dim} entries, found {}", v.len())));
    }
    Ok(ModeVector::new(v.to_vec())?)
}

impl FieldSpec {
    pub fn is_zero(&self) -> bool {
        self.constant.is_none()
            && self.diagonal.is_none()
            && self.matrix.is_none()
            && self.tanh.is_empty()
            && self.polynomial.is_empty()
    }

    /// Only the constant part.
    pub fn constant_part(&self) -> FieldSpec {
        FieldSpec {
            constant: self.constant.clone(),
            ..FieldSpec::default()
        }
    }

    /// Whether the field does not depend on the state.
    pub fn is_constant(&self) -> bool {
        self.diagonal.is_none() && self.matrix.is_none() && self.tanh.is_empty() && self.polynomial.is_empty()
    }

    pub fn build(&self, dim: usize, what: &str) -> Result<VectorField, CliError> {
        let mut parts = Vec::new();
        if let Some(c) = &self.constant {
            parts.push(VectorField::Constant(mode_vector(c, dim, what)?));
        }
        if let Some(d) = &self.diagonal {
            mode_vector(d, dim, what)?;
            parts.push(VectorField::Linear(LinearMap::diagonal(d)));
        }
        if let Some(m) = &self.matrix {
            if m.len() != dim || m.iter().any(|r| r.len() != dim) {
                return Err(CliError::Validation(format!("{what}: matrix must be {dim}×{dim}")));
            }
            parts.push(VectorField::Linear(LinearMap::new(dim, m.concat())?));
        }
        let mut terms = Vec::new();
        for t in &self.tanh {
            terms.push(FunctionalTerm {
                functional: mode_vector(&t.functional, dim, what)?,
                profile: ScalarMap::Tanh {
                    amplitude: t.amplitude,
                    scale: t.scale,
                },
                direction: mode_vector(&t.direction, dim, what)?,
            });
        }
        for t in &self.polynomial {
            terms.push(FunctionalTerm {
                functional: mode_vector(&t.functional, dim, what)?,
                profile: ScalarMap::Polynomial {
                    coeffs: t.coeffs.clone(),
                    cutoff: t.cutoff,
                },
                direction: mode_vector(&t.direction, dim, what)?,
            });
        }
        if !terms.is_empty() {
            parts.push(VectorField::FunctionalForm(terms));
        }
        Ok(match parts.len() {
            0 => VectorField::zero(dim),
            1 => parts.pop().unwrap(),
            _ => VectorField::Sum(parts),
        })
    }
}

impl ProblemSpec {
    pub fn generator(&self) -> Result<DiagonalGenerator, CliError> {
        match (&self.eigenvalues, &self.heat) {
            (Some(e), None) => Ok(DiagonalGenerator::new(e.clone())?),
            (None, Some(h)) => Ok(DiagonalGenerator::heat_dirichlet(h.modes, h.diffusivity)?),
            _ => Err(CliError::Validation(
                "problem: give exactly one of `eigenvalues` and `heat`".into(),
            )),
        }
    }

    fn jump_measure(&self) -> Result<JumpMeasureSpec, CliError> {
        let Some(j) = &self.jumps else {
            return Ok(JumpMeasureSpec::none());
        };
        let marks = match (&j.points, &j.weights, &j.uniform) {
            (Some(p), Some(w), None) => MarkDistribution::Discrete {
                points: p.clone(),
                weights: w.clone(),
            },
            (None, None, Some([lo, hi])) => MarkDistribution::Uniform { lo: *lo, hi: *hi },
            _ => {
                return Err(CliError::Validation(
                    "problem.jumps: give `points` and `weights`, or `uniform`".into(),
                ))
            }
        };
        Ok(JumpMeasureSpec::new(j.intensity, marks)?.with_truncation(j.truncation))
    }

    /// Builds the problem; `drift`/`diffusion`/`jump` may be replaced by the
    /// caller (used for control variates).
    pub fn build_with(&self, drift: &FieldSpec, diffusion: &[FieldSpec], jump: Option<(&FieldSpec, &FieldSpec)>) -> Result<SpdeProblem, CliError> {
        let generator = self.generator()?;
        let dim = generator.dim();
        if diffusion.len() != self.q.len() {
            return Err(CliError::Validation(format!(
                "problem: {} diffusion fields for {} Wiener directions",
                diffusion.len(),
                self.q.len()
            )));
        }
        let radius = self.truncation_radius;
        let field = |f: &FieldSpec, what: &str| -> Result<VectorField, CliError> {
            let v = f.build(dim, what)?;
            Ok(match radius {
                Some(r) => v.truncated(r)?,
                None => v,
            })
        };
        let lipschitz = match &self.lipschitz {
            LipschitzSpec::Constant(l) => LipschitzProfile::constant(*l)?,
            LipschitzSpec::Piecewise { breaks, values } => LipschitzProfile::new(breaks.clone(), values.clone())?,
        };
        let lipschitz = match radius {
            Some(r) => lipschitz.with_radius(r),
            None => lipschitz,
        };
        let jump = match jump {
            Some((offset, slope)) => JumpField::AffineInMark {
                offset: field(offset, "problem.jumps.offset")?,
                slope: field(slope, "problem.jumps.slope")?,
            },
            None => JumpField::zero(dim),
        };
        let coefficients = Coefficients {
            drift: Field::from(field(drift, "problem.drift")?),
            diffusion: diffusion
                .iter()
                .map(|d| field(d, "problem.diffusion").map(Field::from))
                .collect::<Result<_, _>>()?,
            jump,
            lipschitz,
        };
        let problem = SpdeProblem::new(
            generator,
            coefficients,
            QWienerSpec::new(self.q.clone())?,
            self.jump_measure()?,
            InitialHistory::constant(mode_vector(&self.r0, dim, "problem.r0")?),
            self.t0,
            self.horizon,
        )?;
        Ok(problem)
    }

    pub fn build(&self) -> Result<SpdeProblem, CliError> {
        let jump = self.jumps.as_ref().map(|j| (&j.offset, &j.slope));
        self.build_with(&self.drift, &self.diffusion, jump)
    }

    /// The problem with every state-dependent part of the coefficients
    /// removed, if its diffusion and jump fields are already state-free.
    pub fn constant_part(&self) -> Option<Result<SpdeProblem, CliError>> {
        if !self.diffusion.iter().all(FieldSpec::is_constant) {
            return None;
        }
        if let Some(j) = &self.jumps {
            if !j.offset.is_constant() || !j.slope.is_constant() {
                return None;
            }
        }
        let jump = self.jumps.as_ref().map(|j| (&j.offset, &j.slope));
        Some(self.build_with(&self.drift.constant_part(), &self.diffusion, jump))
    }
}

impl TestFunctionSpec {
    pub fn build(&self, dim: usize) -> Result<TestFunction, CliError> {
        Ok(match self {
            TestFunctionSpec::Quadratic => TestFunction::Quadratic,
            TestFunctionSpec::Constant(c) => TestFunction::Constant(*c),
            TestFunctionSpec::Linear(z) => TestFunction::Linear(mode_vector(z, dim, "scheme.test_function")?),
            TestFunctionSpec::Tanh { functional, scale } => TestFunction::TanhLinear {
                functional: mode_vector(functional, dim, "scheme.test_function")?,
                scale: *scale,
            },
        })
    }
}

impl SchemeSpec {
    pub fn build(&self, dim: usize) -> Result<SchemeConfig, CliError> {
        let kind = match self.kind {
            SchemeKindSpec::Euler => SchemeKind::EulerSplit,
            SchemeKindSpec::Cubature => SchemeKind::Cubature,
        };
        let mut cfg = SchemeConfig::new(kind, self.steps, self.test_function.build(dim)?);
        cfg.mc_trajectories = self.trajectories;
        cfg.antithetic = self.antithetic;
        cfg.branch_policy = match self.branches {
            BranchSpec::FullTree => BranchPolicy::FullTree {
                budget: self.branch_budget,
            },
            BranchSpec::MonteCarlo => BranchPolicy::MonteCarlo {
                count: self.branch_samples,
            },
        };
        let d = OdeSettings::default();
        cfg.ode = OdeSettings {
            substeps: self.ode_substeps.unwrap_or(d.substeps),
            max_substeps: self.ode_max_substeps.unwrap_or(d.max_substeps),
            tolerance: self.ode_tolerance.unwrap_or(d.tolerance),
        };
        Ok(cfg)
    }

    pub fn frame(&self, problem: &SpdeProblem) -> Result<Option<GroupFrame>, CliError> {
        Ok(match self.frame {
            FrameSpec::None => None,
            FrameSpec::Direct => Some(GroupFrame::direct(problem.generator.clone())),
            FrameSpec::Cauchy => Some(build_cauchy_dilation(
                &problem.generator,
                self.dilation_nodes,
                problem.horizon - problem.t0,
            )?),
        })
    }
}

/// Resolves `p` against the directory of the config file.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
