//! One function per experiment kind. Each returns its artifacts in memory;
//! nothing touches the filesystem until the whole run has succeeded.

use std::path::Path;

use moving_frame_core::analysis::{
    estimate_order, estimate_rate, euler_ou_moments, formulation_residuals, kolmogorov_reference,
    ou_exact_moments, paired_weak_difference, stability_experiment, subsample, KolmogorovGrid, OuOracle,
};
use moving_frame_core::frame::{solve_in_frame, transform_lipschitz, FrameSde};
use moving_frame_core::noise::{
    aggregate, fubini_check, ito_isometry_check, random_poisson_integrand, random_separable_integrand,
    random_wiener_integrand, sample_path, NoiseIncrement, RngStream, StreamNamespace,
};
use moving_frame_core::picard::{
    build_partition, euler_curve, first_variation_solve, picard_solve, GridCurve, PicardSettings, PicardSpace,
};
use moving_frame_core::problem::{grid_times, InitialHistory, SpdeProblem};
use moving_frame_core::schemes::{
    brownian_stratonovich_moment, euler_path, iterated_bv_integral, multi_indices_up_to, verify_cubature_at,
    weak_value, CubatureFormula, SchemeKind, TestFunction,
};
use moving_frame_core::spectral::ModeVector;
use moving_frame_core::{Error, Executor};

use crate::config::{resolve, ExperimentSpec, ReferenceSpec, RunConfig};
use crate::formula_io::parse_formula;
use crate::output::{num, Artifact, Plot, Table};
use crate::CliError;

/// Artifacts plus human-readable summary lines for stdout.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: Vec<String>,
}

pub fn run_experiment<E: Executor>(cfg: &RunConfig, base: &Path, exec: &E) -> Result<Outcome, CliError> {
    let problem = cfg.problem.build()?;
    match &cfg.experiment {
        ExperimentSpec::Simulate { save_paths } => simulate(cfg, &problem, *save_paths, exec),
        ExperimentSpec::Converge {
            levels,
            reference,
            control_variate,
            kolmogorov_nodes,
            kolmogorov_steps,
            kolmogorov_half_width,
        } => {
            let grid = KolmogorovGrid {
                half_width: *kolmogorov_half_width,
                nodes: *kolmogorov_nodes,
                time_steps: *kolmogorov_steps,
            };
            converge(cfg, base, &problem, *levels, *reference, *control_variate, &grid, exec)
        }
        ExperimentSpec::CubatureVerify { formula, time } => {
            let path = formula
                .as_ref()
                .or(cfg.scheme.formula.as_ref())
                .ok_or_else(|| CliError::Validation("cubature-verify needs a formula file".into()))?;
            cubature_verify(&load_formula(base, path)?, *time)
        }
        ExperimentSpec::Stability {
            levels,
            steps,
            trajectories,
        } => stability(cfg, &problem, levels, *steps, *trajectories, exec),
        ExperimentSpec::PicardValidate {
            fine_steps,
            coarse_steps,
            ensemble,
            epsilon,
            tol,
            max_iters,
        } => picard_validate(
            cfg,
            &problem,
            *fine_steps,
            coarse_steps,
            *ensemble,
            *epsilon,
            &PicardSettings {
                max_iters: *max_iters,
                tol: *tol,
            },
            exec,
        ),
        ExperimentSpec::VariationCheck {
            direction,
            epsilons,
            ensemble,
        } => variation_check(cfg, &problem, direction, epsilons, *ensemble, exec),
        ExperimentSpec::NoiseValidate {
            integrands,
            trajectories,
            cells,
            fubini_nodes,
            fubini_paths,
            fubini_terms,
        } => noise_validate(
            cfg,
            &problem,
            *integrands,
            *trajectories,
            *cells,
            *fubini_nodes,
            *fubini_paths,
            *fubini_terms,
            exec,
        ),
    }
}

pub fn load_formula(base: &Path, path: &Path) -> Result<CubatureFormula, CliError> {
    let full = resolve(base, path);
    let text = std::fs::read_to_string(&full)
        .map_err(|e| CliError::Validation(format!("cannot read cubature file {}: {e}", full.display())))?;
    parse_formula(&text)
}

fn ensemble_noise(
    problem: &SpdeProblem,
    stream: RngStream,
    n: usize,
    steps: usize,
    exec: &impl Executor,
) -> Result<Vec<Vec<NoiseIncrement>>, CliError> {
    let dts = problem.uniform_steps(steps);
    Ok(exec
        .map_indexed(n, |i| sample_path(stream.trajectory(i as u32), &problem.wiener, &problem.jumps, &dts))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?)
}

fn simulate<E: Executor>(cfg: &RunConfig, problem: &SpdeProblem, save_paths: usize, exec: &E) -> Result<Outcome, CliError> {
    let steps = cfg.scheme.steps;
    let n = cfg.scheme.trajectories;
    if steps == 0 || n == 0 {
        return Err(CliError::Validation("simulate needs steps and trajectories".into()));
    }
    let frame = cfg.scheme.frame(problem)?;
    let sde = frame.as_ref().map(|f| FrameSde::new(f, problem)).transpose()?;
    let stream = RngStream::namespaced(cfg.seed, StreamNamespace::Euler, 0);
    let dts = problem.uniform_steps(steps);
    let times = grid_times(problem.t0, &dts);
    let paths = exec
        .map_indexed(n, |i| -> Result<Vec<ModeVector>, Error> {
            let noise = sample_path(stream.trajectory(i as u32), &problem.wiener, &problem.jumps, &dts)?;
            match &sde {
                Some(s) => Ok(solve_in_frame(s, &noise)?.pushed),
                None => euler_path(problem, &noise),
            }
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let dim = problem.dim();
    let mut moments = Table::new(&["time", "mode", "mean", "variance"]);
    for (ti, t) in times.iter().enumerate() {
        for k in 0..dim {
            let mean = paths.iter().map(|p| p[ti][k]).sum::<f64>() / n as f64;
            let var = if n > 1 {
                paths.iter().map(|p| (p[ti][k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            moments.row(vec![num(*t), k.to_string(), num(mean), num(var)]);
        }
    }
    let mut sample = Table::new(&["trajectory", "time", "mode", "value"]);
    for (j, p) in paths.iter().take(save_paths).enumerate() {
        for (t, r) in times.iter().zip(p) {
            for (k, v) in r.as_slice().iter().enumerate() {
                sample.row(vec![j.to_string(), num(*t), k.to_string(), num(*v)]);
            }
        }
    }
    let last = times.len() - 1;
    let mean0 = paths.iter().map(|p| p[last][0]).sum::<f64>() / n as f64;
    Ok(Outcome {
        artifacts: vec![
            moments.artifact("moments.csv", Some(Plot::lines("time", &["mean", "variance"]).filter_mode())),
            sample.artifact("paths.csv", None),
        ],
        summary: vec![format!("simulated {n} trajectories, {steps} steps; mean of mode 0 at T = {mean0:.6}")],
    })
}

fn expected_from_moments(g: &TestFunction, mean: &ModeVector, var: &[f64]) -> Result<f64, CliError> {
    Ok(match g {
        TestFunction::Constant(c) => *c,
        TestFunction::Linear(z) => z.dot(mean),
        TestFunction::Quadratic => mean.norm_sq() + var.iter().sum::<f64>(),
        TestFunction::TanhLinear { .. } => {
            return Err(CliError::Validation(
                "exact moments give E g only for constant, linear and quadratic g".into(),
            ))
        }
    })
}

#[allow(clippy::too_many_arguments)]
fn converge<E: Executor>(
    cfg: &RunConfig,
    base: &Path,
    problem: &SpdeProblem,
    levels: usize,
    reference: ReferenceSpec,
    control_variate: bool,
    grid: &KolmogorovGrid,
    exec: &E,
) -> Result<Outcome, CliError> {
    if levels < 3 {
        return Err(CliError::Validation("converge needs at least three levels".into()));
    }
    let scheme = cfg.scheme.build(problem.dim())?;
    let g = scheme.test_function.clone();
    let exact = match reference {
        ReferenceSpec::OuExact => {
            let o = OuOracle::from_problem(problem)?;
            let (m, v) = ou_exact_moments(&o, o.horizon);
            expected_from_moments(&g, &m, &v)?
        }
        ReferenceSpec::Kolmogorov => kolmogorov_reference(problem, &g, grid)?,
    };
    let formula = match scheme.scheme {
        SchemeKind::Cubature => {
            let path = cfg
                .scheme
                .formula
                .as_ref()
                .ok_or_else(|| CliError::Validation("cubature scheme needs scheme.formula".into()))?;
            let (f, report) = load_formula(base, path)?.certify()?;
            if !report.certified {
                return Err(Error::NotCertified.into());
            }
            Some(f)
        }
        SchemeKind::EulerSplit => None,
    };
    let control = if control_variate {
        if scheme.scheme != SchemeKind::EulerSplit {
            return Err(CliError::Validation("control variates apply to the Euler scheme only".into()));
        }
        let c = cfg.problem.constant_part().ok_or_else(|| {
            CliError::Validation("control variate needs state-free diffusion and jump fields".into())
        })??;
        let o = OuOracle::from_problem(&c)?;
        Some((c, o))
    } else {
        None
    };
    let mut table = Table::new(&["level", "dt", "abs_error", "stderr"]);
    let mut errors = Vec::with_capacity(levels);
    for level in 0..levels {
        let steps = scheme.steps << level;
        let mut s = scheme.clone();
        s.steps = steps;
        let stream = RngStream::namespaced(cfg.seed, StreamNamespace::Euler, level as u32);
        let (estimate, stderr) = match &control {
            Some((c, o)) => {
                let (d, se) = paired_weak_difference(problem, c, &g, steps, s.mc_trajectories, s.antithetic, stream, exec)?;
                let (m, v) = euler_ou_moments(o, steps);
                (d + expected_from_moments(&g, &m, &v)?, Some(se))
            }
            None => {
                let r = weak_value(problem, formula.as_ref(), &s, stream, exec)?;
                (r.estimate, r.stderr)
            }
        };
        let err = (estimate - exact).abs();
        errors.push(err);
        let dt = (problem.horizon - problem.t0) / steps as f64;
        table.row(vec![level.to_string(), num(dt), num(err), num(stderr.unwrap_or(0.0))]);
    }
    let fit = estimate_order(&errors)?;
    let mut summary = Table::new(&["slope", "ci_lo", "ci_hi", "monotone", "reference"]);
    summary.row(vec![num(fit.slope), num(fit.ci_lo), num(fit.ci_hi), fit.monotone.to_string(), num(exact)]);
    let mut lines = vec![format!(
        "weak order slope {:.4} (95% CI [{:.4}, {:.4}]), reference {:.10}",
        fit.slope, fit.ci_lo, fit.ci_hi, exact
    )];
    if !fit.monotone {
        lines.push("warning: errors are not monotone across levels".into());
    }
    Ok(Outcome {
        artifacts: vec![
            table.artifact("converge.csv", Some(Plot::loglog("dt", &["abs_error"]))),
            summary.artifact("converge_summary.csv", None),
        ],
        summary: lines,
    })
}

fn cubature_verify(formula: &CubatureFormula, time: f64) -> Result<Outcome, CliError> {
    let report = verify_cubature_at(formula, time)?;
    let mut table = Table::new(&["multi_index", "deg", "expected", "computed", "residual"]);
    let paths: Vec<_> = formula.paths().iter().map(|p| p.rescaled(time)).collect();
    for w in multi_indices_up_to(formula.dim(), formula.degree()) {
        let expected = brownian_stratonovich_moment(&w, time)?;
        let mut computed = 0.0;
        for (p, l) in paths.iter().zip(formula.weights()) {
            computed += l * iterated_bv_integral(&w, p)?;
        }
        table.row(vec![
            w.to_string(),
            w.deg().to_string(),
            num(expected),
            num(computed),
            num((computed - expected).abs()),
        ]);
    }
    let worst = report.worst_index.as_ref().map(|w| w.to_string()).unwrap_or_default();
    Ok(Outcome {
        artifacts: vec![table.artifact("cubature_verify.csv", None)],
        summary: vec![format!(
            "certified={} worst_residual={:e} worst_index={} checked={}",
            report.certified, report.worst_residual, worst, report.checked
        )],
    })
}

fn stability<E: Executor>(
    cfg: &RunConfig,
    problem: &SpdeProblem,
    levels: &[usize],
    steps: usize,
    trajectories: usize,
    exec: &E,
) -> Result<Outcome, CliError> {
    if !problem.jumps.is_active() {
        return Err(CliError::Validation("stability needs problem.jumps".into()));
    }
    let mut all: Vec<Option<usize>> = levels.iter().map(|l| Some(*l)).collect();
    all.push(None);
    let stream = RngStream::namespaced(cfg.seed, StreamNamespace::Stability, 0);
    let report = stability_experiment(problem, &all, steps, trajectories, stream, exec)?;
    let mut table = Table::new(&["level", "c_n_sq", "error", "ratio"]);
    for l in &report.levels {
        let ratio = if l.c_n_sq > 0.0 { num(l.error / l.c_n_sq) } else { String::new() };
        let level = l.level.map_or_else(|| "full".to_string(), |n| n.to_string());
        table.row(vec![level, num(l.c_n_sq), num(l.error), ratio]);
    }
    let mut summary = Table::new(&["k", "ratio_spread", "bound_holds", "errors_nonincreasing"]);
    summary.row(vec![
        num(report.k),
        num(report.ratio_spread()),
        report.bound_holds().to_string(),
        report.errors_nonincreasing().to_string(),
    ]);
    Ok(Outcome {
        artifacts: vec![
            table.artifact("stability.csv", None),
            summary.artifact("stability_summary.csv", None),
        ],
        summary: vec![format!(
            "K = {:.6e}, ratio spread {:.3}, bound holds: {}, errors nonincreasing: {}",
            report.k,
            report.ratio_spread(),
            report.bound_holds(),
            report.errors_nonincreasing()
        )],
    })
}

#[allow(clippy::too_many_arguments)]
fn picard_validate<E: Executor>(
    cfg: &RunConfig,
    problem: &SpdeProblem,
    fine_steps: usize,
    coarse_steps: &[usize],
    ensemble: usize,
    epsilon: f64,
    settings: &PicardSettings,
    exec: &E,
) -> Result<Outcome, CliError> {
    if coarse_steps.len() < 3 || ensemble == 0 {
        return Err(CliError::Validation("picard-validate needs three coarse levels and an ensemble".into()));
    }
    if coarse_steps.iter().any(|c| *c == 0 || !fine_steps.is_multiple_of(*c)) {
        return Err(CliError::Validation("coarse step counts must divide fine_steps".into()));
    }
    let frame = cfg.scheme.frame(problem)?;
    let (space, profile) = match &frame {
        Some(f) => (
            PicardSpace::Frame(f),
            transform_lipschitz(&problem.coefficients.lipschitz, f, problem.t0, problem.horizon, 64)?,
        ),
        None => (PicardSpace::Modes, problem.coefficients.lipschitz.clone()),
    };
    let partition = build_partition(&profile, problem.t0, problem.horizon, epsilon)?;
    let stream = RngStream::namespaced(cfg.seed, StreamNamespace::Picard, 0);
    let noise = ensemble_noise(problem, stream, ensemble, fine_steps, exec)?;
    let solution = picard_solve(problem, space, &partition, &noise, settings, exec)?;

    let mut intervals = Table::new(&["interval", "start", "end", "iterations", "contraction", "final_gap"]);
    let mut worst = 0.0f64;
    for (i, r) in solution.intervals.iter().enumerate() {
        worst = worst.max(r.contraction);
        intervals.row(vec![
            i.to_string(),
            num(r.start),
            num(r.end),
            r.iterations.to_string(),
            num(r.contraction),
            num(r.final_gap),
        ]);
    }
    let zetas: Vec<ModeVector> = (0..problem.dim()).map(|k| ModeVector::unit(problem.dim(), k)).collect();
    let mut gaps = Table::new(&["level", "dt", "gap", "mild_residual", "weak_residual"]);
    let (mut dts, mut gap_v, mut mild_v, mut weak_v) = (vec![], vec![], vec![], vec![]);
    for (level, c) in coarse_steps.iter().enumerate() {
        let factor = fine_steps / c;
        let coarse_noise = noise
            .iter()
            .map(|n| aggregate(n, factor))
            .collect::<Result<Vec<_>, _>>()?;
        let coarse = euler_curve(problem, &coarse_noise, exec)?;
        let gap = subsample(&solution.curve, factor)?.gap(&coarse)?;
        let res = formulation_residuals(problem, &noise, factor, &zetas, exec)?;
        let dt = (problem.horizon - problem.t0) / *c as f64;
        gaps.row(vec![level.to_string(), num(dt), num(gap), num(res.mild), num(res.weak)]);
        dts.push(dt);
        gap_v.push(gap);
        mild_v.push(res.mild);
        weak_v.push(res.weak);
    }
    let mut summary = Table::new(&["quantity", "slope", "ci_lo", "ci_hi", "monotone"]);
    let mut lines = vec![format!(
        "{} contraction intervals (epsilon {epsilon}), largest observed factor {worst:.4}",
        solution.intervals.len()
    )];
    for (name, v) in [("gap", &gap_v), ("mild_residual", &mild_v), ("weak_residual", &weak_v)] {
        let fit = estimate_rate(&dts, v)?;
        summary.row(vec![
            name.to_string(),
            num(fit.slope),
            num(fit.ci_lo),
            num(fit.ci_hi),
            fit.monotone.to_string(),
        ]);
        lines.push(format!("{name}: slope {:.4} (95% CI [{:.4}, {:.4}])", fit.slope, fit.ci_lo, fit.ci_hi));
    }
    summary.row(vec!["max_contraction".into(), num(worst), String::new(), String::new(), String::new()]);
    Ok(Outcome {
        artifacts: vec![
            intervals.artifact("picard_intervals.csv", None),
            gaps.artifact(
                "picard_gap.csv",
                Some(Plot::loglog("dt", &["gap", "mild_residual", "weak_residual"])),
            ),
            summary.artifact("picard_summary.csv", None),
        ],
        summary: lines,
    })
}

fn variation_check<E: Executor>(
    cfg: &RunConfig,
    problem: &SpdeProblem,
    direction: &[f64],
    epsilons: &[f64],
    ensemble: usize,
    exec: &E,
) -> Result<Outcome, CliError> {
    if epsilons.len() < 3 || ensemble == 0 {
        return Err(CliError::Validation("variation-check needs three epsilons and an ensemble".into()));
    }
    if direction.len() != problem.dim() {
        return Err(CliError::Validation("variation direction has the wrong dimension".into()));
    }
    let w = InitialHistory::constant(ModeVector::new(direction.to_vec())?);
    let stream = RngStream::namespaced(cfg.seed, StreamNamespace::Validation, 1);
    let noise = ensemble_noise(problem, stream, ensemble, cfg.scheme.steps, exec)?;
    let base = euler_curve(problem, &noise, exec)?;
    let j = first_variation_solve(problem, &base, &noise, &w, exec)?;
    let mut table = Table::new(&["epsilon", "fd_error"]);
    let mut errors = Vec::with_capacity(epsilons.len());
    for eps in epsilons {
        let perturbed = problem.with_initial(problem.initial.perturbed(*eps, &w)?)?;
        let shifted = euler_curve(&perturbed, &noise, exec)?;
        let quotient = GridCurve::new(
            base.times.clone(),
            shifted
                .paths
                .iter()
                .zip(&base.paths)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).scaled(1.0 / eps)).collect())
                .collect(),
        )?;
        let err = quotient.gap(&j)?;
        errors.push(err);
        table.row(vec![num(*eps), num(err)]);
    }
    let fit = estimate_rate(epsilons, &errors)?;
    let mut summary = Table::new(&["slope", "ci_lo", "ci_hi", "monotone", "variation_norm"]);
    summary.row(vec![num(fit.slope), num(fit.ci_lo), num(fit.ci_hi), fit.monotone.to_string(), num(j.sup_norm())]);
    Ok(Outcome {
        artifacts: vec![
            table.artifact("variation.csv", Some(Plot::loglog("epsilon", &["fd_error"]))),
            summary.artifact("variation_summary.csv", None),
        ],
        summary: vec![format!(
            "finite-difference error slope {:.4} in epsilon (95% CI [{:.4}, {:.4}])",
            fit.slope, fit.ci_lo, fit.ci_hi
        )],
    })
}

#[allow(clippy::too_many_arguments)]
fn noise_validate<E: Executor>(
    cfg: &RunConfig,
    problem: &SpdeProblem,
    integrands: usize,
    trajectories: usize,
    cells: usize,
    fubini_nodes: usize,
    fubini_paths: usize,
    fubini_terms: usize,
    exec: &E,
) -> Result<Outcome, CliError> {
    let horizon = problem.horizon - problem.t0;
    let mut rng = RngStream::namespaced(cfg.seed, StreamNamespace::Validation, 0).rng();
    let mut table = Table::new(&["check", "index", "lhs", "rhs", "stderr", "gap_over_stderr", "pass"]);
    let mut lines = Vec::new();
    let mut slot = 1u32 << 8;
    let mut run = |name: &str, i: usize, integrand, table: &mut Table, lines: &mut Vec<String>| -> Result<(), CliError> {
        slot += 1;
        let stream = RngStream::namespaced(cfg.seed, StreamNamespace::Validation, slot);
        let r = ito_isometry_check(stream, &integrand, trajectories, exec)?;
        let ratio = if r.stderr > 0.0 { r.gap() / r.stderr } else { 0.0 };
        table.row(vec![
            name.to_string(),
            i.to_string(),
            num(r.lhs),
            num(r.rhs),
            num(r.stderr),
            num(ratio),
            r.within(3.0).to_string(),
        ]);
        lines.push(format!("{name} isometry #{i}: lhs {:.6} rhs {:.6} ({ratio:.2} stderr)", r.lhs, r.rhs));
        Ok(())
    };
    for i in 0..integrands {
        let integrand = random_wiener_integrand(&mut rng, &problem.wiener, problem.dim(), cells, horizon)?;
        run("wiener", i, integrand, &mut table, &mut lines)?;
    }
    if problem.jumps.is_active() {
        for i in 0..integrands {
            let integrand = random_poisson_integrand(&mut rng, &problem.jumps, problem.dim(), cells, horizon)?;
            run("poisson", i, integrand, &mut table, &mut lines)?;
        }
        let phi = random_separable_integrand(&mut rng, horizon, fubini_terms);
        let stream = RngStream::namespaced(cfg.seed, StreamNamespace::Validation, 2);
        let r = fubini_check(stream, &problem.jumps, &phi, fubini_nodes, fubini_paths, exec)?;
        table.row(vec![
            "fubini".into(),
            "0".into(),
            num(r.max_pathwise_gap),
            num(r.quadrature_bound),
            String::new(),
            String::new(),
            (r.max_pathwise_gap <= 1e-6).to_string(),
        ]);
        lines.push(format!(
            "stochastic Fubini: max pathwise gap {:e} over {} paths (quadrature bound {:e})",
            r.max_pathwise_gap, r.paths, r.quadrature_bound
        ));
    } else {
        lines.push("no jump measure configured: Poisson and Fubini checks skipped".into());
    }
    Ok(Outcome {
        artifacts: vec![table.artifact("noise_validate.csv", None)],
        summary: lines,
    })
}
