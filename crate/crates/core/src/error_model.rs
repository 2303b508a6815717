//! Inference error as a function of the age of information.
//!
//! The source is a Gaussian autoregressive process `X_t` observed through a
//! noisy target `Y_t = X_t + N_t`. Predicting `Y_t` from the stale sample
//! `X_{t-δ}` with the linear MMSE estimator gives the error curve `h(δ)` that
//! the scheduler optimizes against.
//!
//! Models with a single unit root at `z = 1` are accepted as well. Their
//! level has no stationary variance, but the increments do, and the LMMSE
//! error converges to the variogram `E[(X_t - X_{t-δ})²] + σ_N²` as the
//! stationarity margin shrinks to zero.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::io::{self, Write};
use thiserror::Error;

/// Reciprocal roots closer to the unit circle than this count as non-stationary.
const ROOT_MARGIN: f64 = 1e-9;
/// `|1 - Σ a_k|` below this is treated as an exact unit root at `z = 1`.
const UNIT_ROOT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ErrorModelError {
    #[error("noise variance must be positive and finite, got {0}")]
    NoiseVariance(f64),
    #[error("observation noise variance must be non-negative and finite, got {0}")]
    ObservationNoise(f64),
    #[error("coefficient a_{index} is not finite")]
    NonFiniteCoefficient { index: usize },
    #[error("AR model is not stationary: largest reciprocal root modulus {max_modulus:.12}")]
    NonStationary { max_modulus: f64 },
    #[error("Yule-Walker system is singular")]
    SingularYuleWalker,
    #[error("degenerate source: zero variance")]
    DegenerateSource,
    #[error("error curve needs at least one value")]
    EmptyCurve,
    #[error("error curve value h({delta}) = {value} is not finite")]
    NonFiniteValue { delta: usize, value: f64 },
    #[error("{0} must be at least 1")]
    ZeroLength(&'static str),
}

/// How the AR polynomial relates to the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integration {
    /// All roots strictly outside the unit circle.
    Stationary,
    /// One root exactly at `z = 1`, the rest strictly outside.
    UnitRoot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    coefficients: Vec<f64>,
    noise_var: f64,
    obs_noise_var: f64,
    integration: Integration,
}

impl ArModel {
    /// Validates and classifies an AR(p) model `X_t = Σ a_k X_{t-k} + W_t`.
    ///
    /// `coefficients[k - 1]` is `a_k`.
    pub fn new(
        coefficients: Vec<f64>,
        noise_var: f64,
        obs_noise_var: f64,
    ) -> Result<Self, ErrorModelError> {
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(ErrorModelError::NoiseVariance(noise_var));
        }
        if !(obs_noise_var.is_finite() && obs_noise_var >= 0.0) {
            return Err(ErrorModelError::ObservationNoise(obs_noise_var));
        }
        if let Some(i) = coefficients.iter().position(|a| !a.is_finite()) {
            return Err(ErrorModelError::NonFiniteCoefficient { index: i + 1 });
        }
        let modulus = max_reciprocal_root(&coefficients);
        let integration = if modulus < 1.0 - ROOT_MARGIN {
            Integration::Stationary
        } else {
            let sum: f64 = coefficients.iter().sum();
            let increments = difference_coefficients(&coefficients);
            if (1.0 - sum).abs() <= UNIT_ROOT_TOL
                && max_reciprocal_root(&increments) < 1.0 - ROOT_MARGIN
            {
                Integration::UnitRoot
            } else {
                return Err(ErrorModelError::NonStationary {
                    max_modulus: modulus,
                });
            }
        };
        Ok(Self {
            coefficients,
            noise_var,
            obs_noise_var,
            integration,
        })
    }

    /// White noise with variance `noise_var`.
    pub fn white_noise(noise_var: f64, obs_noise_var: f64) -> Result<Self, ErrorModelError> {
        Self::new(Vec::new(), noise_var, obs_noise_var)
    }

    /// The AR(63) source used for the reference experiment: a bell-shaped
    /// coefficient bump on lags 51..=63 peaking at lag 57.
    pub fn reference_ar63() -> Self {
        let mut a = vec![0.0; 63];
        for (lag, value) in [
            (51, 0.015),
            (52, 0.015),
            (53, 0.03),
            (54, 0.065),
            (55, 0.145),
            (56, 0.15),
            (57, 0.16),
            (58, 0.15),
            (59, 0.145),
            (60, 0.065),
            (61, 0.03),
            (62, 0.015),
            (63, 0.015),
        ] {
            a[lag - 1] = value;
        }
        Self::new(a, 0.01, 0.001).expect("reference model is valid")
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn obs_noise_var(&self) -> f64 {
        self.obs_noise_var
    }

    pub fn integration(&self) -> Integration {
        self.integration
    }

    /// The stationary AR(p-1) model of the increments `X_t - X_{t-1}` of a
    /// unit-root model.
    pub fn increment_model(&self) -> Option<ArModel> {
        match self.integration {
            Integration::Stationary => None,
            Integration::UnitRoot => Some(ArModel {
                coefficients: difference_coefficients(&self.coefficients),
                noise_var: self.noise_var,
                obs_noise_var: 0.0,
                integration: Integration::Stationary,
            }),
        }
    }
}

/// Coefficients of `B(z) = (1 - A(z)) / (1 - z)` written as an AR polynomial:
/// the increments follow `D_t = -Σ_j β_j D_{t-j} + W_t` with
/// `β_j = 1 - Σ_{k≤j} a_k`.
fn difference_coefficients(a: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len().saturating_sub(1));
    let mut cumulative = 0.0;
    for &ak in a.iter().take(a.len().saturating_sub(1)) {
        cumulative += ak;
        out.push(-(1.0 - cumulative));
    }
    out
}

/// Largest modulus among the eigenvalues of the AR companion matrix, i.e.
/// the reciprocals of the characteristic polynomial's roots.
fn max_reciprocal_root(a: &[f64]) -> f64 {
    let p = a.len();
    if p == 0 {
        return 0.0;
    }
    let mut companion = DMatrix::<f64>::zeros(p, p);
    for (j, &aj) in a.iter().enumerate() {
        companion[(0, j)] = aj;
    }
    for i in 1..p {
        companion[(i, i - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Stationary autocovariance `r(0..=max_lag)`.
///
/// Solves the Yule-Walker equations for lags `0..=p` as a dense system and
/// extends with `r(k) = Σ_j a_j r(k-j)`.
pub fn ar_autocovariance(model: &ArModel, max_lag: usize) -> Result<Vec<f64>, ErrorModelError> {
    if model.integration != Integration::Stationary {
        return Err(ErrorModelError::NonStationary { max_modulus: 1.0 });
    }
    let a = &model.coefficients;
    let p = a.len();
    let n = p + 1;
    let mut system = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        system[(k, k)] += 1.0;
        for (j, &aj) in a.iter().enumerate() {
            let lag = (k as isize - (j as isize + 1)).unsigned_abs();
            system[(k, lag)] -= aj;
        }
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[0] = model.noise_var;
    let solution = system
        .lu()
        .solve(&rhs)
        .ok_or(ErrorModelError::SingularYuleWalker)?;
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(ErrorModelError::SingularYuleWalker);
    }

    let mut r: Vec<f64> = solution.iter().copied().collect();
    for k in n..=max_lag {
        let next = a
            .iter()
            .enumerate()
            .map(|(j, aj)| aj * r[k - j - 1])
            .sum();
        r.push(next);
    }
    r.truncate(max_lag + 1);
    Ok(r)
}

/// Tabulated `h(1..=δ_max)`, held at `h(δ_max)` beyond the table.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    values: Vec<f64>,
    // prefix[d] = h(1) + ... + h(d)
    prefix: Vec<f64>,
    min: f64,
    max: f64,
    bound: f64,
}

impl ErrorCurve {
    pub fn from_values(values: Vec<f64>) -> Result<Self, ErrorModelError> {
        if values.is_empty() {
            return Err(ErrorModelError::EmptyCurve);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ErrorModelError::NonFiniteValue {
                delta: i + 1,
                value: values[i],
            });
        }
        let mut prefix = Vec::with_capacity(values.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for v in &values {
            acc += v;
            prefix.push(acc);
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bound = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        Ok(Self {
            values,
            prefix,
            min,
            max,
            bound,
        })
    }

    pub fn constant(value: f64, delta_max: usize) -> Result<Self, ErrorModelError> {
        if delta_max == 0 {
            return Err(ErrorModelError::ZeroLength("delta_max"));
        }
        Self::from_values(vec![value; delta_max])
    }

    pub fn delta_max(&self) -> usize {
        self.values.len()
    }

    /// `h(δ)` for `δ ≥ 1`.
    #[inline]
    pub fn get(&self, delta: usize) -> f64 {
        debug_assert!(delta >= 1, "AoI is at least one slot");
        let i = delta.clamp(1, self.values.len()) - 1;
        self.values[i]
    }

    #[inline]
    pub fn is_extended(&self, delta: usize) -> bool {
        delta > self.values.len()
    }

    /// The held value `h(δ_max)`.
    pub fn tail(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `Σ_{k=0}^{len-1} h(start + k)`.
    #[inline]
    pub fn segment_sum(&self, start: usize, len: usize) -> f64 {
        if len == 0 {
            return 0.0;
        }
        let dmax = self.values.len();
        let end = start + len - 1;
        if start > dmax {
            return self.tail() * len as f64;
        }
        if end <= dmax {
            self.prefix[end] - self.prefix[start - 1]
        } else {
            self.prefix[dmax] - self.prefix[start - 1] + self.tail() * (end - dmax) as f64
        }
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// Recorded bound `M` with `|h(δ)| ≤ M` for every δ, extension included.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }

    /// Writes `delta,h` rows for `δ ∈ [1, rows]`, extending past the table if asked.
    pub fn write_csv<W: Write>(&self, out: &mut W, rows: usize) -> io::Result<()> {
        writeln!(out, "delta,h")?;
        for d in 1..=rows {
            writeln!(out, "{},{}", d, self.get(d))?;
        }
        Ok(())
    }
}

/// Quadratic-loss LMMSE error of predicting `Y_t` from `X_{t-δ}` for `δ ∈ [1, δ_max]`.
pub fn inference_error_curve(
    model: &ArModel,
    delta_max: usize,
) -> Result<ErrorCurve, ErrorModelError> {
    if delta_max == 0 {
        return Err(ErrorModelError::ZeroLength("delta_max"));
    }
    let values = match model.integration {
        Integration::Stationary => {
            let r = ar_autocovariance(model, delta_max)?;
            let r0 = r[0];
            if r0 <= 0.0 {
                return Err(ErrorModelError::DegenerateSource);
            }
            (1..=delta_max)
                .map(|d| r0 + model.obs_noise_var - r[d] * r[d] / r0)
                .collect()
        }
        Integration::UnitRoot => {
            let increments = model.increment_model().expect("unit-root model");
            let r = ar_autocovariance(&increments, delta_max)?;
            // V(δ+1) = V(δ) + r(0) + 2 Σ_{k=1}^{δ} r(k)
            let mut values = Vec::with_capacity(delta_max);
            let mut variogram = 0.0;
            let mut cross = 0.0;
            for d in 0..delta_max {
                if d > 0 {
                    cross += r[d];
                }
                variogram += r[0] + 2.0 * cross;
                values.push(variogram + model.obs_noise_var);
            }
            values
        }
    };
    ErrorCurve::from_values(values)
}

#[derive(Debug, Clone)]
pub struct EmpiricalCurve {
    pub curve: ErrorCurve,
    /// Delete-one-batch jackknife standard error of each MSE estimate.
    pub std_errors: Vec<f64>,
    pub n_samples: usize,
}

const EMPIRICAL_BATCHES: usize = 50;

/// Simulates the source and fits a scalar least-squares predictor of `Y_t`
/// from `X_{t-δ}` (slope and intercept) at every lag, in one streaming pass
/// over `n_samples` targets.
///
/// For a unit-root source the fitted slope only approaches 1 as the sample
/// grows, and the in-sample MSE sits below the analytic limit by `O(1/n)`.
pub fn empirical_error_curve(
    model: &ArModel,
    delta_max: usize,
    n_samples: usize,
    seed: u64,
) -> Result<EmpiricalCurve, ErrorModelError> {
    if delta_max == 0 {
        return Err(ErrorModelError::ZeroLength("delta_max"));
    }
    if n_samples < EMPIRICAL_BATCHES * 2 {
        return Err(ErrorModelError::ZeroLength("n_samples / 100"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Normal::new(0.0, model.noise_var.sqrt()).expect("positive variance");
    let obs = Normal::new(0.0, model.obs_noise_var.sqrt()).expect("non-negative variance");

    let p = model.order();
    let taps: Vec<(usize, f64)> = model
        .coefficients
        .iter()
        .enumerate()
        .filter(|(_, a)| **a != 0.0)
        .map(|(j, a)| (j + 1, *a))
        .collect();
    let burn_in = 20 * p + 10_000;
    let start = burn_in + delta_max;
    let batch_len = n_samples / EMPIRICAL_BATCHES;

    // Every value is written twice so the last `hist` values are contiguous.
    let hist = delta_max.max(p) + 1;
    let mut ring = vec![0.0; 2 * hist];
    // Per batch: Σy, Σy², count; per batch and lag: Σx, Σx², Σxy.
    let mut y_sums = vec![[0.0; 3]; EMPIRICAL_BATCHES];
    let mut x_sums = vec![[0.0; 3]; EMPIRICAL_BATCHES * delta_max];

    for t in 0..start + n_samples {
        let idx = t % hist;
        let mut v = w.sample(&mut rng);
        for &(lag, a) in &taps {
            v += a * ring[idx + hist - lag];
        }
        ring[idx] = v;
        ring[idx + hist] = v;
        if t < start {
            continue;
        }
        let y = v + obs.sample(&mut rng);
        let b = ((t - start) / batch_len).min(EMPIRICAL_BATCHES - 1);
        let ys = &mut y_sums[b];
        ys[0] += y;
        ys[1] += y * y;
        ys[2] += 1.0;
        let lagged = &ring[idx + hist - delta_max..idx + hist];
        let row = &mut x_sums[b * delta_max..(b + 1) * delta_max];
        // lagged[k] is X_{t-(delta_max-k)}
        for (s, &x) in row.iter_mut().rev().zip(lagged) {
            s[0] += x;
            s[1] += x * x;
            s[2] += x * y;
        }
    }

    let y_total = y_sums.iter().fold([0.0; 3], |acc, s| add3(acc, *s));
    let mut values = Vec::with_capacity(delta_max);
    let mut std_errors = Vec::with_capacity(delta_max);
    for d in 0..delta_max {
        let x_total = (0..EMPIRICAL_BATCHES)
            .fold([0.0; 3], |acc, b| add3(acc, x_sums[b * delta_max + d]));
        values.push(regression_mse(x_total, y_total));
        // Delete-one-batch jackknife, so the spread of the fitted slope and
        // intercept is part of the error.
        let leave_out: Vec<f64> = (0..EMPIRICAL_BATCHES)
            .map(|b| {
                regression_mse(
                    sub3(x_total, x_sums[b * delta_max + d]),
                    sub3(y_total, y_sums[b]),
                )
            })
            .collect();
        let k = EMPIRICAL_BATCHES as f64;
        let mean = leave_out.iter().sum::<f64>() / k;
        let ss: f64 = leave_out.iter().map(|v| (v - mean).powi(2)).sum();
        std_errors.push(((k - 1.0) / k * ss).sqrt());
    }
    Ok(EmpiricalCurve {
        curve: ErrorCurve::from_values(values)?,
        std_errors,
        n_samples,
    })
}

fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Mean squared residual of the least-squares line through the data with
/// sums `x = (Σx, Σx², Σxy)` and `y = (Σy, Σy², n)`.
fn regression_mse(x: [f64; 3], y: [f64; 3]) -> f64 {
    let [sx, sxx, sxy] = x;
    let [sy, syy, n] = y;
    let cxx = sxx - sx * sx / n;
    let cxy = sxy - sx * sy / n;
    let cyy = syy - sy * sy / n;
    let explained = if cxx > 0.0 { cxy * cxy / cxx } else { 0.0 };
    (cyy - explained).max(0.0) / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_noise_autocovariance() {
        let m = ArModel::white_noise(0.01, 0.0).unwrap();
        let r = ar_autocovariance(&m, 4).unwrap();
        assert_eq!(r, vec![0.01, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ar1_autocovariance_matches_closed_form() {
        let m = ArModel::new(vec![0.5], 0.75, 0.0).unwrap();
        let r = ar_autocovariance(&m, 6).unwrap();
        for (k, rk) in r.iter().enumerate() {
            let closed = 0.5f64.powi(k as i32) * 0.75 / (1.0 - 0.25);
            assert!((rk - closed).abs() < 1e-12, "lag {k}: {rk} vs {closed}");
        }
        assert!((r[0] - 1.0).abs() < 1e-12);
        assert!((r[1] - 0.5).abs() < 1e-12);
        assert!((r[2] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn ar2_matches_recursive_closed_form() {
        // AR(2) with a1=0.5, a2=-0.3: ρ1 = a1/(1-a2), ρ2 = a1 ρ1 + a2,
        // r0 = σ² / (1 - a1 ρ1 - a2 ρ2).
        let (a1, a2, s2) = (0.5, -0.3, 2.0);
        let m = ArModel::new(vec![a1, a2], s2, 0.0).unwrap();
        let r = ar_autocovariance(&m, 3).unwrap();
        let rho1 = a1 / (1.0 - a2);
        let rho2 = a1 * rho1 + a2;
        let r0 = s2 / (1.0 - a1 * rho1 - a2 * rho2);
        assert!((r[0] - r0).abs() < 1e-12);
        assert!((r[1] - rho1 * r0).abs() < 1e-12);
        assert!((r[2] - rho2 * r0).abs() < 1e-12);
        assert!((r[3] - (a1 * rho2 + a2 * rho1) * r0).abs() < 1e-12);
    }

    #[test]
    fn rejects_explosive_and_invalid_models() {
        assert!(matches!(
            ArModel::new(vec![1.2], 1.0, 0.0),
            Err(ErrorModelError::NonStationary { .. })
        ));
        // Root at z = -1 is not the accepted unit root.
        assert!(matches!(
            ArModel::new(vec![-1.0], 1.0, 0.0),
            Err(ErrorModelError::NonStationary { .. })
        ));
        // Double unit root: increments are themselves integrated.
        assert!(matches!(
            ArModel::new(vec![2.0, -1.0], 1.0, 0.0),
            Err(ErrorModelError::NonStationary { .. })
        ));
        assert!(ArModel::new(vec![0.5], 0.0, 0.0).is_err());
        assert!(ArModel::new(vec![0.5], 1.0, -1.0).is_err());
        assert!(ArModel::new(vec![f64::NAN], 1.0, 0.0).is_err());
    }

    #[test]
    fn random_walk_is_unit_root_with_linear_variogram() {
        let m = ArModel::new(vec![1.0], 0.5, 0.1).unwrap();
        assert_eq!(m.integration(), Integration::UnitRoot);
        assert!(ar_autocovariance(&m, 3).is_err());
        let h = inference_error_curve(&m, 5).unwrap();
        for d in 1..=5 {
            assert!((h.get(d) - (0.5 * d as f64 + 0.1)).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_model_is_unit_root_with_dip() {
        let m = ArModel::reference_ar63();
        assert_eq!(m.integration(), Integration::UnitRoot);
        let h = inference_error_curve(&m, 99).unwrap();
        let argmin = (1..=99)
            .min_by(|a, b| h.get(*a).partial_cmp(&h.get(*b)).unwrap())
            .unwrap();
        assert_eq!(argmin, 57);
        assert!(h.get(30) > h.get(1));
        assert!(h.get(57) < h.get(30));
        assert!(!h.is_nondecreasing());
    }

    #[test]
    fn lmmse_hand_cases() {
        let wn = ArModel::white_noise(0.01, 0.001).unwrap();
        let h = inference_error_curve(&wn, 10).unwrap();
        for d in 1..=10 {
            assert!((h.get(d) - 0.011).abs() < 1e-12);
        }
        let ar1 = ArModel::new(vec![0.5], 0.75, 0.001).unwrap();
        let h = inference_error_curve(&ar1, 3).unwrap();
        assert!((h.get(1) - 0.751).abs() < 1e-12);
        assert!((h.get(2) - 0.9385).abs() < 1e-12);
    }

    #[test]
    fn curve_extension_and_segments() {
        let h = ErrorCurve::from_values(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(h.get(7), 3.0);
        assert!(h.is_extended(4));
        assert!(!h.is_extended(3));
        assert_eq!(h.segment_sum(2, 4), 2.0 + 3.0 + 3.0 + 3.0);
        assert_eq!(h.segment_sum(5, 2), 6.0);
        assert_eq!(h.segment_sum(1, 0), 0.0);
        assert_eq!(h.bound(), 3.0);
        assert!(ErrorCurve::from_values(vec![]).is_err());
        assert!(ErrorCurve::from_values(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn csv_output() {
        let h = ErrorCurve::constant(0.5, 2).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf, 3).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "delta,h\n1,0.5\n2,0.5\n3,0.5\n");
    }

    #[test]
    fn empirical_white_noise_and_ar1() {
        let m = ArModel::white_noise(1.0, 0.5).unwrap();
        let e = empirical_error_curve(&m, 3, 200_000, 9).unwrap();
        for d in 1..=3 {
            assert!((e.curve.get(d) - 1.5).abs() < 4.0 * e.std_errors[d - 1] + 1e-3);
        }
        let m = ArModel::new(vec![0.5], 0.75, 0.001).unwrap();
        let h = inference_error_curve(&m, 4).unwrap();
        let e = empirical_error_curve(&m, 4, 200_000, 10).unwrap();
        for d in 1..=4 {
            assert!((e.curve.get(d) - h.get(d)).abs() < 4.0 * e.std_errors[d - 1]);
        }
        assert_eq!(e.n_samples, 200_000);
        assert!(empirical_error_curve(&m, 0, 1000, 0).is_err());
        assert!(empirical_error_curve(&m, 3, 10, 0).is_err());
    }
}
