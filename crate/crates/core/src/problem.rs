//! Problem description and stored solution paths.

use alloc::vec;
use alloc::vec::Vec;

use crate::coefficients::{Coefficients, PathHistory};
use crate::error::{check_dim, Error, Result};
use crate::noise::{JumpMeasureSpec, QWienerSpec};
use crate::spectral::{DiagonalGenerator, ModeVector};

/// Initial path `h` on `[0, t0]`, left-constant between stored points.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialHistory {
    times: Vec<f64>,
    values: Vec<ModeVector>,
}

impl InitialHistory {
    pub fn new(times: Vec<f64>, values: Vec<ModeVector>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::contract("initial history needs one value per time"));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::contract("initial history times must start at 0 and increase"));
        }
        let dim = values[0].dim();
        for v in &values {
            check_dim("initial history", dim, v.dim())?;
        }
        Ok(Self { times, values })
    }

    /// The constant path `h` (the only history when `t0 = 0`).
    pub fn constant(h: ModeVector) -> Self {
        Self {
            times: vec![0.0],
            values: vec![h],
        }
    }

    pub fn dim(&self) -> usize {
        self.values[0].dim()
    }

    pub fn value_at(&self, s: f64) -> &ModeVector {
        let i = self.times.partition_point(|t| *t <= s);
        &self.values[i.saturating_sub(1)]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[ModeVector] {
        &self.values
    }

    /// Same history shifted by `eps · direction` (used by sensitivity runs).
    pub fn perturbed(&self, eps: f64, direction: &InitialHistory) -> Result<Self> {
        let values = self
            .times
            .iter()
            .zip(&self.values)
            .map(|(t, v)| {
                let mut out = v.clone();
                out.axpy(eps, direction.value_at(*t));
                out
            })
            .collect();
        Self::new(self.times.clone(), values)
    }
}

/// `dr = (A r + α(r)) dt + σ(r) dW + ∫ γ(r_-, x) (μ − F)(dt, dx)` on `[t0, T]`
/// with history `h` on `[0, t0]`.
#[derive(Clone, Debug)]
pub struct SpdeProblem {
    pub generator: DiagonalGenerator,
    pub coefficients: Coefficients,
    pub wiener: QWienerSpec,
    pub jumps: JumpMeasureSpec,
    pub initial: InitialHistory,
    pub t0: f64,
    pub horizon: f64,
}

impl SpdeProblem {
    pub fn new(
        generator: DiagonalGenerator,
        coefficients: Coefficients,
        wiener: QWienerSpec,
        jumps: JumpMeasureSpec,
        initial: InitialHistory,
        t0: f64,
        horizon: f64,
    ) -> Result<Self> {
        if !(t0 >= 0.0) || !(horizon > t0) || !horizon.is_finite() {
            return Err(Error::contract("need 0 <= t0 < T"));
        }
        check_dim("initial state", generator.dim(), initial.dim())?;
        check_dim("diffusion columns", wiener.dim(), coefficients.diffusion.len())?;
        Ok(Self {
            generator,
            coefficients,
            wiener,
            jumps,
            initial,
            t0,
            horizon,
        })
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    /// `h_{t0}`
    pub fn start_value(&self) -> &ModeVector {
        self.initial.value_at(self.t0)
    }

    /// `steps` equal steps covering `[t0, T]`.
    pub fn uniform_steps(&self, steps: usize) -> Vec<f64> {
        let dt = (self.horizon - self.t0) / steps as f64;
        vec![dt; steps]
    }

    pub fn with_initial(&self, initial: InitialHistory) -> Result<Self> {
        check_dim("initial state", self.dim(), initial.dim())?;
        let mut out = self.clone();
        out.initial = initial;
        Ok(out)
    }

    pub fn with_jumps(&self, jumps: JumpMeasureSpec) -> Self {
        let mut out = self.clone();
        out.jumps = jumps;
        out
    }
}

/// Times `t0, t0 + dt_1, …` from step lengths.
pub fn grid_times(t0: f64, dts: &[f64]) -> Vec<f64> {
    let mut times = Vec::with_capacity(dts.len() + 1);
    let mut t = t0;
    times.push(t);
    for dt in dts {
        t += dt;
        times.push(t);
    }
    times
}

/// Solution path so far, seen by path-dependent coefficients.
pub struct PathView<'a> {
    pub initial: &'a InitialHistory,
    pub t0: f64,
    /// Grid times from `t0` up to the current time (inclusive).
    pub times: &'a [f64],
    pub values: &'a [ModeVector],
}

impl PathHistory for PathView<'_> {
    fn time(&self) -> f64 {
        *self.times.last().expect("path view holds the current point")
    }

    fn current(&self) -> &ModeVector {
        self.values.last().expect("path view holds the current point")
    }

    fn value_at(&self, s: f64) -> ModeVector {
        if s < self.t0 {
            return self.initial.value_at(s).clone();
        }
        let i = self.times.partition_point(|t| *t <= s);
        self.values[i.saturating_sub(1)].clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_lookup_is_left_constant() {
        let h = InitialHistory::new(
            vec![0.0, 0.5],
            vec![ModeVector::new(vec![1.0]).unwrap(), ModeVector::new(vec![2.0]).unwrap()],
        )
        .unwrap();
        assert_eq!(h.value_at(0.25)[0], 1.0);
        assert_eq!(h.value_at(0.5)[0], 2.0);
        assert_eq!(h.value_at(7.0)[0], 2.0);
        assert!(InitialHistory::new(vec![0.1], vec![ModeVector::zeros(1)]).is_err());
    }

    #[test]
    fn path_view_switches_to_history_before_t0() {
        let h = InitialHistory::constant(ModeVector::new(vec![-1.0]).unwrap());
        let times = [1.0, 1.5, 2.0];
        let values: Vec<ModeVector> = [3.0, 4.0, 5.0]
            .iter()
            .map(|v| ModeVector::new(vec![*v]).unwrap())
            .collect();
        let view = PathView {
            initial: &h,
            t0: 1.0,
            times: &times,
            values: &values,
        };
        assert_eq!(view.value_at(0.5)[0], -1.0);
        assert_eq!(view.value_at(1.7)[0], 4.0);
        assert_eq!(view.current()[0], 5.0);
        assert_eq!(grid_times(1.0, &[0.5, 0.5]), vec![1.0, 1.5, 2.0]);
    }
}
