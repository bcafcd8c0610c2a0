//! Cubature formulas on Wiener space and their certification.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{abs, sqrt};

use super::signature::{
    brownian_stratonovich_moment, iterated_bv_integral, multi_indices_up_to, MultiIndex,
    PiecewiseLinearPath, MAX_MOMENT_DEGREE,
};

/// Residual bound for certification.
pub const CERTIFY_TOLERANCE: f64 = 1e-10;

/// Weighted bounded-variation paths on `[0, 1]` claimed to match Brownian
/// iterated-integral expectations up to degree `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct CubatureFormula {
    degree: usize,
    d: usize,
    paths: Vec<PiecewiseLinearPath>,
    weights: Vec<f64>,
    certified: bool,
}

/// Outcome of [`verify_cubature`].
#[derive(Clone, Debug, PartialEq)]
pub struct CertificationReport {
    pub certified: bool,
    pub checked: usize,
    pub worst_residual: f64,
    pub worst_index: Option<MultiIndex>,
}

impl CubatureFormula {
    /// Uncertified formula; run [`verify_cubature`] or [`CubatureFormula::certify`].
    pub fn new(degree: usize, paths: Vec<PiecewiseLinearPath>, weights: Vec<f64>) -> Result<Self> {
        if degree < 2 {
            return Err(Error::contract("cubature degree must be at least 2"));
        }
        if paths.is_empty() || paths.len() != weights.len() {
            return Err(Error::contract("one weight per cubature path"));
        }
        let d = paths[0].dim();
        if paths.iter().any(|p| p.dim() != d) {
            return Err(Error::contract("cubature paths must share the driving dimension"));
        }
        if paths.iter().any(|p| abs(p.duration() - 1.0) > 1e-12) {
            return Err(Error::contract("cubature paths live on [0, 1]"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::contract("cubature weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if abs(total - 1.0) > 1e-12 {
            return Err(Error::contract("cubature weights must sum to 1"));
        }
        Ok(Self {
            degree,
            d,
            paths,
            weights,
            certified: false,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[PiecewiseLinearPath] {
        &self.paths
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }

    /// Runs the verifier; the formula is marked certified only if it passes.
    pub fn certify(mut self) -> Result<(Self, CertificationReport)> {
        let report = verify_cubature(&self)?;
        self.certified = report.certified;
        Ok((self, report))
    }

    /// Same paths and weights claimed at another degree (uncertified).
    pub fn with_degree(&self, degree: usize) -> Result<Self> {
        Self::new(degree, self.paths.clone(), self.weights.clone())
    }
}

/// Compares `Σ_l λ_l J_w(ω_l)` with `E J_w(B)` at `t = 1` for every word with
/// `deg ≤ m`; certifies iff all residuals are within [`CERTIFY_TOLERANCE`].
pub fn verify_cubature(f: &CubatureFormula) -> Result<CertificationReport> {
    verify_cubature_at(f, 1.0)
}

/// Verification on `[0, t]` using the rescaled paths `√t ω̃(s/t)`.
pub fn verify_cubature_at(f: &CubatureFormula, t: f64) -> Result<CertificationReport> {
    if f.degree > MAX_MOMENT_DEGREE {
        return Err(Error::Unsupported(alloc::format!(
            "certifying degree {} needs moments above degree {MAX_MOMENT_DEGREE}",
            f.degree
        )));
    }
    let paths: Vec<PiecewiseLinearPath> = f.paths.iter().map(|p| p.rescaled(t)).collect();
    let words = multi_indices_up_to(f.d, f.degree);
    let mut report = CertificationReport {
        certified: true,
        checked: words.len(),
        worst_residual: 0.0,
        worst_index: None,
    };
    for w in words {
        let expected = brownian_stratonovich_moment(&w, t)?;
        let mut got = 0.0;
        for (p, lambda) in paths.iter().zip(&f.weights) {
            got += lambda * iterated_bv_integral(&w, p)?;
        }
        let residual = abs(got - expected);
        if residual > report.worst_residual || report.worst_index.is_none() {
            report.worst_residual = residual;
            report.worst_index = Some(w);
        }
    }
    report.certified = report.worst_residual <= CERTIFY_TOLERANCE;
    Ok(report)
}

/// Degree-3 formula in one dimension: `ω(s) = ±s`, weights ½.
pub fn degree3_one_dimensional() -> Result<CubatureFormula> {
    CubatureFormula::new(
        3,
        alloc::vec![
            PiecewiseLinearPath::straight(alloc::vec![-1.0])?,
            PiecewiseLinearPath::straight(alloc::vec![1.0])?,
        ],
        alloc::vec![0.5, 0.5],
    )
}

/// Degree-3 formula in `d` dimensions: straight paths to `±√d e_i`,
/// weights `1/(2d)`.
pub fn degree3_straight(d: usize) -> Result<CubatureFormula> {
    if d == 0 {
        return Err(Error::contract("driving dimension must be positive"));
    }
    let r = sqrt(d as f64);
    let mut paths = Vec::with_capacity(2 * d);
    for i in 0..d {
        for sign in [-1.0, 1.0] {
            let mut end = alloc::vec![0.0; d];
            end[i] = sign * r;
            paths.push(PiecewiseLinearPath::straight(end)?);
        }
    }
    CubatureFormula::new(3, paths, alloc::vec![1.0 / (2 * d) as f64; 2 * d])
}
