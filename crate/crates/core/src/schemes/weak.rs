//! Weak approximations of `E g(r_T)`: Monte-Carlo Euler and cubature on
//! Wiener space (full branch tree or sampled branches).

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::exec::Executor;
use crate::math::{pow, tanh};
use crate::noise::{mean_and_stderr, sample_path, NoiseIncrement, RngStream};
use crate::problem::SpdeProblem;
use crate::spectral::ModeVector;

use super::cubature::CubatureFormula;
use super::euler::euler_path;
use super::ode::{ode_along_segment, OdeSettings};

/// Smooth functionals of the terminal state with known OU expectations.
#[derive(Clone, Debug, PartialEq)]
pub enum TestFunction {
    Constant(f64),
    /// `⟨ζ, r⟩`
    Linear(ModeVector),
    /// `‖r‖²`
    Quadratic,
    /// `tanh(scale · ⟨ζ, r⟩)`
    TanhLinear { functional: ModeVector, scale: f64 },
}

impl TestFunction {
    pub fn eval(&self, r: &ModeVector) -> Result<f64> {
        match self {
            TestFunction::Constant(c) => Ok(*c),
            TestFunction::Linear(z) => {
                check_dim("test functional", z.dim(), r.dim())?;
                Ok(z.dot(r))
            }
            TestFunction::Quadratic => Ok(r.norm_sq()),
            TestFunction::TanhLinear { functional, scale } => {
                check_dim("test functional", functional.dim(), r.dim())?;
                Ok(tanh(scale * functional.dot(r)))
            }
        }
    }
}

/// How cubature branches are evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BranchPolicy {
    /// Every word `(l_1, …, l_p)`; refused when `N^p` exceeds `budget`.
    FullTree { budget: u64 },
    /// `count` words drawn i.i.d. from the product of the weights.
    MonteCarlo { count: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    EulerSplit,
    Cubature,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    /// Number of equal steps on `[t0, T]`.
    pub steps: usize,
    /// Trajectories for Euler Monte Carlo.
    pub mc_trajectories: usize,
    /// Pair each Euler trajectory with its Brownian mirror image.
    pub antithetic: bool,
    pub branch_policy: BranchPolicy,
    pub ode: OdeSettings,
    pub test_function: TestFunction,
}

impl SchemeConfig {
    pub fn new(scheme: SchemeKind, steps: usize, test_function: TestFunction) -> Self {
        Self {
            scheme,
            steps,
            mc_trajectories: 10_000,
            antithetic: false,
            branch_policy: BranchPolicy::FullTree { budget: 1 << 22 },
            ode: OdeSettings::default(),
            test_function,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakReport {
    pub estimate: f64,
    /// Monte-Carlo standard error; `None` for deterministic evaluation.
    pub stderr: Option<f64>,
    /// Number of branches or trajectories evaluated.
    pub samples: f64,
}

/// Dispatches on `cfg.scheme`.
pub fn weak_value<E: Executor>(
    problem: &SpdeProblem,
    formula: Option<&CubatureFormula>,
    cfg: &SchemeConfig,
    stream: RngStream,
    exec: &E,
) -> Result<WeakReport> {
    match cfg.scheme {
        SchemeKind::EulerSplit => euler_weak_value(problem, cfg, stream, exec),
        SchemeKind::Cubature => {
            let f = formula.ok_or_else(|| Error::contract("cubature scheme needs a formula"))?;
            cubature_weak_value(problem, f, cfg, stream, exec)
        }
    }
}

fn negated(noise: &[NoiseIncrement]) -> Vec<NoiseIncrement> {
    noise
        .iter()
        .map(|inc| NoiseIncrement {
            dt: inc.dt,
            brownian: inc.brownian.iter().map(|b| -b).collect(),
            jumps: inc.jumps.clone(),
        })
        .collect()
}

/// Monte-Carlo Euler estimate of `E g(r_T)`. With `antithetic`, each sample
/// is the average over a trajectory and its mirror image.
pub fn euler_weak_value<E: Executor>(
    problem: &SpdeProblem,
    cfg: &SchemeConfig,
    stream: RngStream,
    exec: &E,
) -> Result<WeakReport> {
    if cfg.steps == 0 || cfg.mc_trajectories < 2 {
        return Err(Error::contract("Euler weak value needs steps and at least two trajectories"));
    }
    let dts = problem.uniform_steps(cfg.steps);
    let samples = exec.map_indexed(cfg.mc_trajectories, |i| -> Result<f64> {
        let noise = sample_path(stream.trajectory(i as u32), &problem.wiener, &problem.jumps, &dts)?;
        let g = |n: &[NoiseIncrement]| -> Result<f64> {
            let path = euler_path(problem, n)?;
            cfg.test_function.eval(path.last().unwrap())
        };
        if cfg.antithetic {
            Ok(0.5 * (g(&noise)? + g(&negated(&noise))?))
        } else {
            g(&noise)
        }
    });
    let samples = samples.into_iter().collect::<Result<Vec<f64>>>()?;
    let (estimate, stderr) = mean_and_stderr(&samples);
    Ok(WeakReport {
        estimate,
        stderr: Some(stderr),
        samples: samples.len() as f64,
    })
}

fn check_cubature_problem(problem: &SpdeProblem, formula: &CubatureFormula) -> Result<()> {
    if !formula.is_certified() {
        return Err(Error::NotCertified);
    }
    check_dim("cubature driving dimension", problem.wiener.dim(), formula.dim())?;
    if problem.jumps.is_active() && problem.jumps.effective_intensity() > 0.0 {
        return Err(Error::Unsupported(
            "cubature on Wiener space with jumps (set the jump intensity to zero)".into(),
        ));
    }
    if problem.coefficients.is_delayed() {
        return Err(Error::Unsupported("cubature with delayed coefficients".into()));
    }
    Ok(())
}

/// Shared state of one cubature evaluation.
struct Cubature<'a> {
    problem: &'a SpdeProblem,
    formula: &'a CubatureFormula,
    /// Segments of each path rescaled to one step: `(duration, increment)`.
    segments: Vec<Vec<(f64, Vec<f64>)>>,
    step: f64,
    budget: f64,
    ode: OdeSettings,
}

impl<'a> Cubature<'a> {
    fn new(problem: &'a SpdeProblem, formula: &'a CubatureFormula, steps: usize, ode: OdeSettings) -> Self {
        let step = (problem.horizon - problem.t0) / steps as f64;
        let segments = formula
            .paths()
            .iter()
            .map(|p| p.rescaled(step).segments().collect())
            .collect();
        let budget = ode.tolerance * pow(step, (formula.degree() as f64 + 1.0) / 2.0);
        Self {
            problem,
            formula,
            segments,
            step,
            budget,
            ode,
        }
    }

    /// State after following path `l` for one step from time `t`.
    fn advance(&self, state: &ModeVector, t: f64, l: usize) -> Result<ModeVector> {
        let mut r = state.clone();
        let mut s = t;
        for (tau, inc) in &self.segments[l] {
            r = ode_along_segment(self.problem, &r, s, *tau, inc, &self.ode, self.budget)?.0;
            s += tau;
        }
        Ok(r)
    }

    fn time(&self, step: usize) -> f64 {
        self.problem.t0 + step as f64 * self.step
    }

    /// `Σ_words λ_word g(r_T)` over the subtree below `state` at `step`,
    /// children summed in index order.
    fn subtree(&self, state: &ModeVector, step: usize, steps: usize, g: &TestFunction) -> Result<f64> {
        if step == steps {
            return g.eval(state);
        }
        let mut acc = 0.0;
        for (l, w) in self.formula.weights().iter().enumerate() {
            let next = self.advance(state, self.time(step), l)?;
            acc += w * self.subtree(&next, step + 1, steps, g)?;
        }
        Ok(acc)
    }
}

/// Cubature estimate of `E g(r_T)` on `cfg.steps` equal steps.
///
/// Full-tree evaluation visits the words depth first, sharing prefixes; the
/// top of the tree is split into independent subtrees whose results are added
/// in index order, so the value does not depend on the executor.
pub fn cubature_weak_value<E: Executor>(
    problem: &SpdeProblem,
    formula: &CubatureFormula,
    cfg: &SchemeConfig,
    stream: RngStream,
    exec: &E,
) -> Result<WeakReport> {
    check_cubature_problem(problem, formula)?;
    if cfg.steps == 0 {
        return Err(Error::contract("cubature needs at least one step"));
    }
    let p = cfg.steps;
    let n = formula.len();
    let cub = Cubature::new(problem, formula, p, cfg.ode);
    let start = problem.start_value().clone();
    match cfg.branch_policy {
        BranchPolicy::FullTree { budget } => {
            let branches = pow(n as f64, p as f64);
            if branches > budget as f64 {
                return Err(Error::BranchBudget { branches, budget });
            }
            // split depth: enough independent subtrees to keep workers busy
            let mut depth = 0;
            while depth < p && pow(n as f64, depth as f64) < 64.0 {
                depth += 1;
            }
            let prefixes = n.pow(depth as u32);
            let parts = exec.map_indexed(prefixes, |idx| -> Result<f64> {
                let mut word = Vec::with_capacity(depth);
                let mut rest = idx;
                for _ in 0..depth {
                    word.push(rest % n);
                    rest /= n;
                }
                word.reverse();
                let mut state = start.clone();
                let mut weight = 1.0;
                for (step, l) in word.iter().enumerate() {
                    state = cub.advance(&state, cub.time(step), *l)?;
                    weight *= formula.weights()[*l];
                }
                Ok(weight * cub.subtree(&state, depth, p, &cfg.test_function)?)
            });
            let mut estimate = 0.0;
            for part in parts {
                estimate += part?;
            }
            Ok(WeakReport {
                estimate,
                stderr: None,
                samples: branches,
            })
        }
        BranchPolicy::MonteCarlo { count } => {
            if count < 2 {
                return Err(Error::contract("branch sampling needs at least two branches"));
            }
            let samples = exec.map_indexed(count, |i| -> Result<f64> {
                let mut rng = stream.trajectory(i as u32).rng();
                let mut state = start.clone();
                for step in 0..p {
                    let l = sample_index(&mut rng, formula.weights());
                    state = cub.advance(&state, cub.time(step), l)?;
                }
                cfg.test_function.eval(&state)
            });
            let samples = samples.into_iter().collect::<Result<Vec<f64>>>()?;
            let (estimate, stderr) = mean_and_stderr(&samples);
            Ok(WeakReport {
                estimate,
                stderr: Some(stderr),
                samples: count as f64,
            })
        }
    }
}

fn sample_index<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// `Σ_words Π λ` over the full tree of depth `p`, summed in the same order as
/// the tree evaluation.
pub fn full_tree_weight_sum(formula: &CubatureFormula, p: usize) -> f64 {
    if p == 0 {
        return 1.0;
    }
    formula
        .weights()
        .iter()
        .map(|w| w * full_tree_weight_sum(formula, p - 1))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Coefficients, Field, FunctionalTerm, JumpField, LipschitzProfile, ScalarMap, VectorField};
    use crate::exec::Sequential;
    use crate::noise::{JumpMeasureSpec, MarkDistribution, QWienerSpec};
    use crate::problem::InitialHistory;
    use crate::schemes::cubature::{degree3_one_dimensional, degree3_straight};
    use crate::spectral::DiagonalGenerator;
    use alloc::vec;

    fn mv(v: &[f64]) -> ModeVector {
        ModeVector::new(v.to_vec()).unwrap()
    }

    fn scalar_ou(kappa: f64) -> SpdeProblem {
        let drift = if kappa == 0.0 {
            VectorField::zero(1)
        } else {
            VectorField::FunctionalForm(vec![FunctionalTerm {
                functional: mv(&[1.0]),
                profile: ScalarMap::Tanh {
                    amplitude: kappa,
                    scale: 1.0,
                },
                direction: mv(&[1.0]),
            }])
        };
        SpdeProblem::new(
            DiagonalGenerator::new(vec![-1.0]).unwrap(),
            Coefficients {
                drift: drift.into(),
                diffusion: vec![Field::from(VectorField::Constant(mv(&[0.5])))],
                jump: JumpField::zero(1),
                lipschitz: LipschitzProfile::constant(kappa.abs()).unwrap(),
            },
            QWienerSpec::standard(1),
            JumpMeasureSpec::none(),
            InitialHistory::constant(mv(&[1.0])),
            0.0,
            1.0,
        )
        .unwrap()
    }

    fn certified_d1() -> CubatureFormula {
        degree3_one_dimensional().unwrap().certify().unwrap().0
    }

    #[test]
    fn constant_test_function_gives_one() {
        let p = scalar_ou(0.25);
        let f = certified_d1();
        let cfg = SchemeConfig::new(SchemeKind::Cubature, 6, TestFunction::Constant(1.0));
        let r = cubature_weak_value(&p, &f, &cfg, RngStream::new(0, 0), &Sequential).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert_eq!(r.samples, 64.0);
    }

    #[test]
    fn linear_ou_mean_is_exact() {
        let p = scalar_ou(0.0);
        let f = certified_d1();
        let cfg = SchemeConfig::new(SchemeKind::Cubature, 5, TestFunction::Linear(mv(&[1.0])));
        let r = cubature_weak_value(&p, &f, &cfg, RngStream::new(0, 0), &Sequential).unwrap();
        assert!((r.estimate - (-1.0f64).exp()).abs() < 1e-10, "{}", r.estimate);
    }

    #[test]
    fn full_tree_is_deterministic_and_budgeted() {
        let p = scalar_ou(0.25);
        let f = certified_d1();
        let mut cfg = SchemeConfig::new(SchemeKind::Cubature, 7, TestFunction::Quadratic);
        let a = cubature_weak_value(&p, &f, &cfg, RngStream::new(0, 0), &Sequential).unwrap();
        let b = cubature_weak_value(&p, &f, &cfg, RngStream::new(5, 5), &Sequential).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        cfg.steps = 64;
        assert!(matches!(
            cubature_weak_value(&p, &f, &cfg, RngStream::new(0, 0), &Sequential),
            Err(Error::BranchBudget { .. })
        ));
    }

    #[test]
    fn monte_carlo_branches_agree_with_full_tree() {
        let p = scalar_ou(0.25);
        let f = certified_d1();
        let mut cfg = SchemeConfig::new(SchemeKind::Cubature, 6, TestFunction::Quadratic);
        let full = cubature_weak_value(&p, &f, &cfg, RngStream::new(0, 0), &Sequential).unwrap();
        cfg.branch_policy = BranchPolicy::MonteCarlo { count: 4000 };
        let mc = cubature_weak_value(&p, &f, &cfg, RngStream::new(1, 2), &Sequential).unwrap();
        let se = mc.stderr.unwrap();
        assert!((mc.estimate - full.estimate).abs() <= 4.0 * se, "{mc:?} vs {full:?}");
    }

    #[test]
    fn rejections() {
        let p = scalar_ou(0.0);
        let cfg = SchemeConfig::new(SchemeKind::Cubature, 2, TestFunction::Quadratic);
        let raw = degree3_one_dimensional().unwrap();
        assert!(matches!(
            cubature_weak_value(&p, &raw, &cfg, RngStream::new(0, 0), &Sequential),
            Err(Error::NotCertified)
        ));
        let two = degree3_straight(2).unwrap().certify().unwrap().0;
        assert!(cubature_weak_value(&p, &two, &cfg, RngStream::new(0, 0), &Sequential).is_err());
        let jumps = JumpMeasureSpec::new(1.0, MarkDistribution::Uniform { lo: 0.0, hi: 1.0 }).unwrap();
        let pj = p.with_jumps(jumps);
        assert!(matches!(
            cubature_weak_value(&pj, &certified_d1(), &cfg, RngStream::new(0, 0), &Sequential),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn weights_sum_to_one_over_the_tree() {
        let f = certified_d1();
        let g = degree3_straight(3).unwrap();
        for p in [1, 3, 8] {
            assert!((full_tree_weight_sum(&f, p) - 1.0).abs() < 1e-12);
            assert!((full_tree_weight_sum(&g, p) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_weak_value_linear_mean() {
        let p = scalar_ou(0.0);
        let mut cfg = SchemeConfig::new(SchemeKind::EulerSplit, 16, TestFunction::Linear(mv(&[1.0])));
        cfg.mc_trajectories = 2000;
        cfg.antithetic = true;
        let r = euler_weak_value(&p, &cfg, RngStream::new(4, 0), &Sequential).unwrap();
        // antithetic pairs cancel the noise exactly for additive OU
        assert!((r.estimate - (-1.0f64).exp()).abs() < 1e-12);
    }
}
