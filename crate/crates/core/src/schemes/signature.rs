//! Multi-indices, iterated integrals of piecewise-linear paths, and the
//! expectations of iterated Stratonovich integrals of Brownian motion.
//!
//! Letter `0` always stands for time, `ω⁰(s) = s`; letters `1..=d` are the
//! path coordinates.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;

/// Word `(i_1, …, i_k)` over `{0, 1, …, d}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<u8>);

impl MultiIndex {
    pub fn new(entries: Vec<u8>, d: usize) -> Result<Self> {
        if entries.iter().any(|e| *e as usize > d) {
            return Err(Error::contract("multi-index letter above the driving dimension"));
        }
        Ok(Self(entries))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `k + #{j : i_j = 0}`: time letters count twice.
    pub fn deg(&self) -> usize {
        self.0.len() + self.0.iter().filter(|e| **e == 0).count()
    }
}

impl core::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str(")")
    }
}

/// All nonempty words over `{0..=d}` with `deg ≤ max_deg`, shortest first.
pub fn multi_indices_up_to(d: usize, max_deg: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<u8>> = alloc::vec![Vec::new()];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for w in &frontier {
            for letter in 0..=d as u8 {
                let mut v = w.clone();
                v.push(letter);
                let mi = MultiIndex(v);
                if mi.deg() <= max_deg {
                    next.push(mi.0.clone());
                    out.push(mi);
                }
            }
        }
        frontier = next;
    }
    out
}

/// Piecewise-linear path in `ℝ^d` given by breakpoints `(s_j, x_j)`,
/// starting at `s_0 = 0`, `x_0 = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinearPath {
    d: usize,
    times: Vec<f64>,
    points: Vec<Vec<f64>>,
}

impl PiecewiseLinearPath {
    pub fn new(times: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() < 2 || times.len() != points.len() {
            return Err(Error::contract("a path needs at least two breakpoints"));
        }
        let d = points[0].len();
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(Error::contract("breakpoints must share one positive dimension"));
        }
        if times[0] != 0.0 || points[0].iter().any(|x| *x != 0.0) {
            return Err(Error::contract("paths start at the origin at time 0"));
        }
        if times.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::contract("breakpoint times must not decrease"));
        }
        if times.iter().chain(points.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("path breakpoints"));
        }
        Ok(Self { d, times, points })
    }

    /// Straight line from the origin to `end` over `[0, 1]`.
    pub fn straight(end: Vec<f64>) -> Result<Self> {
        let d = end.len();
        Self::new(alloc::vec![0.0, 1.0], alloc::vec![alloc::vec![0.0; d], end])
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Segments as `(duration, increment)`.
    pub fn segments(&self) -> impl Iterator<Item = (f64, Vec<f64>)> + '_ {
        (1..self.times.len()).map(move |j| {
            let inc = self.points[j]
                .iter()
                .zip(&self.points[j - 1])
                .map(|(b, a)| b - a)
                .collect();
            (self.times[j] - self.times[j - 1], inc)
        })
    }

    /// `ω_t(s) = √t · ω̃(s / t)` for a path `ω̃` on `[0, 1]`.
    pub fn rescaled(&self, t: f64) -> Self {
        let c = sqrt(t) / sqrt(self.duration());
        let scale = t / self.duration();
        Self {
            d: self.d,
            times: self.times.iter().map(|s| s * scale).collect(),
            points: self
                .points
                .iter()
                .map(|p| p.iter().map(|x| c * x).collect())
                .collect(),
        }
    }
}

/// `∫_{0<t_1<…<t_k<T} dω^{i_1}(t_1) ⋯ dω^{i_k}(t_k)` over the whole path,
/// with `ω⁰(s) = s`.
///
/// Each straight segment with increment `Δ` has iterated integrals
/// `Δ_{i_1}⋯Δ_{i_k}/k!`; segments are joined by Chen's identity, so the
/// result is exact up to rounding.
pub fn iterated_bv_integral(mi: &MultiIndex, path: &PiecewiseLinearPath) -> Result<f64> {
    if mi.0.iter().any(|e| *e as usize > path.dim()) {
        return Err(Error::contract("multi-index letter above the path dimension"));
    }
    let k = mi.len();
    // v[j] = iterated integral of the first j letters over the path so far
    let mut v = alloc::vec![0.0; k + 1];
    v[0] = 1.0;
    let mut letter_inc = alloc::vec![0.0; k];
    for (dt, inc) in path.segments() {
        for (slot, e) in letter_inc.iter_mut().zip(&mi.0) {
            *slot = if *e == 0 { dt } else { inc[*e as usize - 1] };
        }
        for j in (1..=k).rev() {
            // Σ_l v[l] · Δ_{l+1}⋯Δ_j / (j − l)!
            let mut acc = 0.0;
            let mut prod = 1.0;
            for l in (0..j).rev() {
                prod *= letter_inc[l] / (j - l) as f64;
                acc += v[l] * prod;
            }
            v[j] += acc;
        }
    }
    Ok(v[k])
}

/// Largest degree with expectations implemented.
pub const MAX_MOMENT_DEGREE: usize = 7;

/// `E[∫_{0<t_1<…<t_k<t} ∘dB^{i_1} ⋯ ∘dB^{i_k}]` with `B⁰(s) = s`.
///
/// The expectation scales as `c_w t^{deg/2}` and the constants obey
/// `n c_w = c_{w∖0} + ½ c_{w∖jj}` (`n = deg/2`; `w∖0` drops a trailing time
/// letter, `w∖jj` a trailing repeated Brownian pair), which is the generator
/// identity for Stratonovich integrals. Odd degrees vanish.
pub fn brownian_stratonovich_moment(mi: &MultiIndex, t: f64) -> Result<f64> {
    let deg = mi.deg();
    if deg > MAX_MOMENT_DEGREE {
        return Err(Error::Unsupported(alloc::format!(
            "Stratonovich moments of degree {deg} (at most {MAX_MOMENT_DEGREE})"
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::contract("moment time must be nonnegative"));
    }
    if deg % 2 == 1 {
        return Ok(0.0);
    }
    Ok(moment_constant(&mi.0) * libm::pow(t, (deg / 2) as f64))
}

fn moment_constant(w: &[u8]) -> f64 {
    if w.is_empty() {
        return 1.0;
    }
    let deg = w.len() + w.iter().filter(|e| **e == 0).count();
    if deg % 2 == 1 {
        return 0.0;
    }
    let n = (deg / 2) as f64;
    let k = w.len();
    let mut acc = 0.0;
    if w[k - 1] == 0 {
        acc += moment_constant(&w[..k - 1]);
    }
    if k >= 2 && w[k - 1] != 0 && w[k - 1] == w[k - 2] {
        acc += 0.5 * moment_constant(&w[..k - 2]);
    }
    acc / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn mi(v: &[u8]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    #[test]
    fn degrees() {
        assert_eq!(mi(&[1]).deg(), 1);
        assert_eq!(mi(&[0]).deg(), 2);
        assert_eq!(mi(&[0, 1, 0]).deg(), 5);
        assert!(MultiIndex::new(vec![3], 2).is_err());
    }

    #[test]
    fn enumeration_counts() {
        // d = 1, deg ≤ 3: (1),(0),(1,1),(0,1),(1,0),(1,1,1)
        assert_eq!(multi_indices_up_to(1, 3).len(), 6);
        assert!(multi_indices_up_to(2, 5).iter().all(|m| m.deg() <= 5));
    }

    #[test]
    fn iterated_integral_examples() {
        let down = PiecewiseLinearPath::straight(vec![-1.0]).unwrap();
        assert_eq!(iterated_bv_integral(&mi(&[0]), &down).unwrap(), 1.0);
        assert_eq!(iterated_bv_integral(&mi(&[1]), &down).unwrap(), -1.0);
        let t = 0.37;
        let line = PiecewiseLinearPath::new(vec![0.0, t], vec![vec![0.0], vec![t / t.sqrt()]]).unwrap();
        let v = iterated_bv_integral(&mi(&[1, 1]), &line).unwrap();
        assert!((v - t / 2.0).abs() < 1e-15);
    }

    #[test]
    fn chen_matches_direct_two_segment_formula() {
        // path (0,0) -> (1, a) -> (2, a + b): ∫∫ dω dω = (a + b)² / 2,
        // ∫∫ ds dω = a/2 + (a + b/2) ... computed by hand below
        let (a, b) = (0.7, -1.3);
        let p = PiecewiseLinearPath::new(vec![0.0, 1.0, 2.0], vec![vec![0.0], vec![a], vec![a + b]]).unwrap();
        let w11 = iterated_bv_integral(&mi(&[1, 1]), &p).unwrap();
        assert!((w11 - (a + b) * (a + b) / 2.0).abs() < 1e-15);
        // ∫_0^2 s dω(s) = ∫_0^1 s a ds + ∫_1^2 s b ds = a/2 + 3b/2
        let w01 = iterated_bv_integral(&mi(&[0, 1]), &p).unwrap();
        assert!((w01 - (a / 2.0 + 1.5 * b)).abs() < 1e-15);
    }

    #[test]
    fn moment_examples() {
        assert_eq!(brownian_stratonovich_moment(&mi(&[1]), 1.0).unwrap(), 0.0);
        assert_eq!(brownian_stratonovich_moment(&mi(&[1, 1]), 1.0).unwrap(), 0.5);
        assert_eq!(brownian_stratonovich_moment(&mi(&[0, 0]), 1.0).unwrap(), 0.5);
        assert_eq!(brownian_stratonovich_moment(&mi(&[1, 2]), 1.0).unwrap(), 0.0);
        // E[B⁴/24] = 3t²/24
        let t = 1.7;
        let m = brownian_stratonovich_moment(&mi(&[1, 1, 1, 1]), t).unwrap();
        assert!((m - t * t / 8.0).abs() < 1e-15);
        assert!(matches!(
            brownian_stratonovich_moment(&mi(&[1, 1, 1, 1, 1, 1, 1, 1]), 1.0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn moments_against_gaussian_shuffle_identities() {
        // (0,1,1) + (1,0,1) + (1,1,0) = (0) ⧢ (1,1) has mean t · t/2
        let t = 0.8;
        let s: f64 = [[0, 1, 1], [1, 0, 1], [1, 1, 0]]
            .iter()
            .map(|w| brownian_stratonovich_moment(&mi(w), t).unwrap())
            .sum();
        assert!((s - t * t / 2.0).abs() < 1e-15);
        // (1,1) ⧢ (2,2) = E[B1²/2 · B2²/2] = t²/4; the six shuffles are
        // (1,1,2,2),(1,2,1,2),(1,2,2,1),(2,1,1,2),(2,1,2,1),(2,2,1,1)
        let words: [[u8; 4]; 6] = [[1, 1, 2, 2], [1, 2, 1, 2], [1, 2, 2, 1], [2, 1, 1, 2], [2, 1, 2, 1], [2, 2, 1, 1]];
        let s: f64 = words
            .iter()
            .map(|w| brownian_stratonovich_moment(&mi(w), t).unwrap())
            .sum();
        assert!((s - t * t / 4.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn shuffle_identity_for_paths(
            pts in prop::collection::vec(-2.0f64..2.0, 4),
            durations in prop::collection::vec(0.01f64..1.0, 4),
        ) {
            // J_(1) J_(0) = J_(1,0) + J_(0,1) for every BV path
            let mut times = vec![0.0];
            let mut points = vec![vec![0.0]];
            for (x, dt) in pts.iter().zip(&durations) {
                times.push(times.last().unwrap() + dt);
                points.push(vec![*x]);
            }
            let p = PiecewiseLinearPath::new(times, points).unwrap();
            let j1 = iterated_bv_integral(&mi(&[1]), &p).unwrap();
            let j0 = iterated_bv_integral(&mi(&[0]), &p).unwrap();
            let j10 = iterated_bv_integral(&mi(&[1, 0]), &p).unwrap();
            let j01 = iterated_bv_integral(&mi(&[0, 1]), &p).unwrap();
            prop_assert!((j1 * j0 - j10 - j01).abs() < 1e-12);
            let j111 = iterated_bv_integral(&mi(&[1, 1, 1]), &p).unwrap();
            prop_assert!((j111 - j1.powi(3) / 6.0).abs() < 1e-12);
        }

        #[test]
        fn rescaling_multiplies_by_power_of_t(t in 0.1f64..3.0, x in -2.0f64..2.0) {
            let p = PiecewiseLinearPath::straight(vec![x]).unwrap();
            let q = p.rescaled(t);
            for w in multi_indices_up_to(1, 5) {
                let a = iterated_bv_integral(&w, &p).unwrap();
                let b = iterated_bv_integral(&w, &q).unwrap();
                let want = a * t.powf(w.deg() as f64 / 2.0);
                prop_assert!((b - want).abs() < 1e-12 * (1.0 + want.abs()));
            }
        }
    }
}
