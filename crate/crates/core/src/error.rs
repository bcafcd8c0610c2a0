use alloc::string::String;

/// Errors raised by the numerical core.
///
/// Variants split into two families: contract/validation failures (bad input,
/// unsupported configuration) and numerical guards (overflow, accuracy
/// checks that did not meet their budget). [`Error::is_numerical`] tells them
/// apart so front ends can map them to distinct exit codes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("overflow guard: |a_k t| = {exponent:.3} exceeds the budget {budget}")]
    OverflowGuard { exponent: f64, budget: f64 },

    #[error(
        "dilation accuracy {achieved:.3e} at t = {worst_t:.6} exceeds {tolerance:.1e} \
         (mode {mode}); increase nodes per mode"
    )]
    DilationAccuracy {
        mode: usize,
        worst_t: f64,
        achieved: f64,
        tolerance: f64,
    },

    #[error("numerical dilation breakdown: imaginary residual {residual:.3e} exceeds {tolerance:.1e}")]
    DilationBreakdown { residual: f64, tolerance: f64 },

    #[error("mark {0} lies outside the mark space")]
    MarkOutsideSpace(f64),

    #[error("mark quadrature error estimate {achieved:.3e} exceeds {tolerance:.1e}")]
    Quadrature { achieved: f64, tolerance: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("cubature formula is not certified")]
    NotCertified,

    #[error(
        "full cubature tree needs {branches} branches, above the budget {budget}; \
         switch to Monte-Carlo branch sampling"
    )]
    BranchBudget { branches: f64, budget: u64 },

    #[error("ODE step rejected: error estimate {estimate:.3e} above budget {budget:.3e} at {substeps} substeps")]
    OdeRejected {
        estimate: f64,
        budget: f64,
        substeps: usize,
    },

    #[error(
        "Picard iteration stalled after {iterations} iterations on [{start}, {end}] \
         (last gap {gap:.3e}); the declared Lipschitz profile is probably too small"
    )]
    PicardNotConverged {
        iterations: usize,
        start: f64,
        end: f64,
        gap: f64,
    },
}

impl Error {
    /// `true` for guard failures raised while computing, `false` for invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::OverflowGuard { .. }
                | Error::DilationAccuracy { .. }
                | Error::DilationBreakdown { .. }
                | Error::Quadrature { .. }
                | Error::OdeRejected { .. }
                | Error::PicardNotConverged { .. }
        )
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            found,
        })
    }
}
