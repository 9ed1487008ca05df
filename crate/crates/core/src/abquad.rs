//! Product quadrature for the Atangana-Baleanu (AB) fractional integral and
//! the AB derivative in Caputo sense on uniform grids.
//!
//! The AB integral of order α blends the identity with the Riemann-Liouville
//! (RL) integral:
//!
//! ```text
//! I^α f(t) = (1−α)/B(α) · f(t) + α/(B(α) Γ(α)) ∫₀ᵗ (t−s)^{α−1} f(s) ds
//! B(α)     = 1 − α + α/Γ(α)
//! ```
//!
//! The RL part is integrated exactly against a piecewise-constant
//! approximation of `f` on each step. With `t_k = kτ` the kernel moment of
//! step `[t_j, t_{j+1}]` seen from `t_k` is
//!
//! ```text
//! ∫ (t_k − s)^{α−1} ds = τ^α/α · b_{k−1−j},   b_m = (m+1)^α − m^α
//! ```
//!
//! so every scheme here is a discrete convolution of per-step values with the
//! jump weights `b`. The local error is O(τ), i.e. `|R_k| ≤ K t_k^α τ`.

use crate::specfun::{self, MLParams, SpecialFnError};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("fractional order must lie strictly inside (0, 1), got {0}")]
    InvalidOrder(f64),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("signal has {got} samples but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("signal sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("at least 2 Gauss points per step are required, got {0}")]
    QuadPoints(usize),
    #[error("convergence estimate needs at least 2 positive errors: {0}")]
    InvalidErrors(String),
    #[error("error sequence contains an exact zero; the scheme is exact for this data")]
    ExactScheme,
    #[error(transparent)]
    Special(#[from] SpecialFnError),
}

/// Fractional order α, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(alpha: f64) -> Result<Self, QuadError> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(QuadError::InvalidOrder(alpha))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// λ = −α/(1−α), the rate inside the Mittag-Leffler kernel.
    pub fn lambda(self) -> f64 {
        -self.0 / (1.0 - self.0)
    }
}

/// Equispaced nodes `t_k = k·τ`, `k = 0..=n`, with `τ = T/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformTimeGrid {
    horizon: f64,
    steps: usize,
}

impl UniformTimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self, QuadError> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(QuadError::InvalidGrid(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(QuadError::InvalidGrid(
                "step count must be at least 1".into(),
            ));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.tau()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |k| self.node(k))
    }
}

/// Samples `f(t_k)` on every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    grid: UniformTimeGrid,
    values: Vec<f64>,
}

impl SampledSignal {
    pub fn new(grid: UniformTimeGrid, values: Vec<f64>) -> Result<Self, QuadError> {
        let expected = grid.steps() + 1;
        if values.len() != expected {
            return Err(QuadError::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(QuadError::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: UniformTimeGrid, f: impl Fn(f64) -> f64) -> Result<Self, QuadError> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    pub fn grid(&self) -> &UniformTimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `a·self + b·other` on the same grid.
    pub fn combine(&self, a: f64, other: &SampledSignal, b: f64) -> Result<Self, QuadError> {
        if other.grid != self.grid {
            return Err(QuadError::InvalidGrid(
                "signals live on different grids".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self::new(self.grid, values)
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            grid: self.grid,
            values,
        }
    }
}

/// Normalization B(α) = 1 − α + α/Γ(α).
pub fn normalization(alpha: FracOrder) -> f64 {
    let a = alpha.value();
    1.0 - a + a / specfun::gamma(a)
}

/// Jump weights `b_j = (j+1)^α − j^α` with the constants shared by every
/// AB scheme of order α.
#[derive(Debug, Clone, PartialEq)]
pub struct ABWeights {
    alpha: FracOrder,
    b: Vec<f64>,
    normalization: f64,
}

impl ABWeights {
    pub fn alpha(&self) -> FracOrder {
        self.alpha
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// B(α).
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn lambda(&self) -> f64 {
        self.alpha.lambda()
    }

    /// Weight of the local term, (1−α)/B(α).
    pub fn local_coefficient(&self) -> f64 {
        (1.0 - self.alpha.value()) / self.normalization
    }

    /// Memory coefficient c_α = α τ^α / (B(α) Γ(α+1)) for step size `tau`.
    pub fn c_alpha(&self, tau: f64) -> f64 {
        let a = self.alpha.value();
        a * tau.powf(a) / (self.normalization * specfun::gamma(a + 1.0))
    }
}

/// Builds `b_0, ..., b_{n−1}`.
pub fn jump_weights(alpha: FracOrder, n: usize) -> ABWeights {
    let a = alpha.value();
    let mut b = Vec::with_capacity(n);
    let mut prev = 0.0f64;
    for j in 0..n {
        let next = ((j + 1) as f64).powf(a);
        b.push(next - prev);
        prev = next;
    }
    ABWeights {
        alpha,
        b,
        normalization: normalization(alpha),
    }
}

/// `out[k] = Σ_{j<k} step[j] · b[k−1−j]`, with `step[j]` the value used on
/// `[t_j, t_{j+1}]`.
fn memory_convolution(step: &[f64], b: &[f64]) -> Vec<f64> {
    let n = step.len();
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = step[..k]
            .iter()
            .zip(b[..k].iter().rev())
            .map(|(s, w)| s * w)
            .sum();
    }
    out
}

fn trapezoid_steps(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Riemann-Liouville integral of order α by product integration of the
/// kernel against per-step averages of `f`.
pub fn rl_integral_trapezoid(f: &SampledSignal, alpha: FracOrder) -> SampledSignal {
    let a = alpha.value();
    let weights = jump_weights(alpha, f.grid.steps());
    let scale = f.grid.tau().powf(a) / specfun::gamma(a + 1.0);
    let mut out = memory_convolution(&trapezoid_steps(&f.values), weights.b());
    out.iter_mut().for_each(|v| *v *= scale);
    f.with_values(out)
}

fn ab_combine(f: &SampledSignal, alpha: FracOrder, step: &[f64]) -> SampledSignal {
    let weights = jump_weights(alpha, f.grid.steps());
    let local = weights.local_coefficient();
    let c = weights.c_alpha(f.grid.tau());
    let memory = memory_convolution(step, weights.b());
    let out = f
        .values
        .iter()
        .zip(memory)
        .map(|(fk, m)| local * fk + c * m)
        .collect();
    f.with_values(out)
}

/// AB integral with trapezoid averages on each step.
///
/// `out[0]` holds only the local term (1−α)/B(α)·f_0 since the memory sum is
/// empty there.
pub fn ab_integral_trapezoid(f: &SampledSignal, alpha: FracOrder) -> SampledSignal {
    ab_combine(f, alpha, &trapezoid_steps(&f.values))
}

/// AB integral using the right-endpoint value `f_{j+1}` on each step.
pub fn ab_integral_rectangle(f: &SampledSignal, alpha: FracOrder) -> SampledSignal {
    ab_combine(f, alpha, &f.values[1..])
}

/// Gauss-Legendre nodes and weights on [−1, 1].
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P_{n−1}(x).
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

const KERNEL_TOL: f64 = 1e-14;

/// `w[m−1] = ∫_{(m−1)τ}^{mτ} E_α(λ u^α) du` for m = 1..=n, by `quad_pts`-point
/// Gauss-Legendre on each step.
fn kernel_moments(
    alpha: FracOrder,
    grid: &UniformTimeGrid,
    quad_pts: usize,
) -> Result<Vec<f64>, QuadError> {
    let a = alpha.value();
    let lambda = alpha.lambda();
    let ml = MLParams::new(a, 1.0)?;
    let (nodes, weights) = gauss_legendre(quad_pts);
    let tau = grid.tau();
    let half = 0.5 * tau;
    (1..=grid.steps())
        .map(|m| {
            let mid = (m as f64 - 0.5) * tau;
            nodes.iter().zip(&weights).try_fold(0.0, |acc, (x, w)| {
                let u = mid + half * x;
                let e = specfun::mittag_leffler(ml, lambda * u.powf(a), KERNEL_TOL)?;
                Ok(acc + half * w * e)
            })
        })
        .collect()
}

/// AB derivative in Caputo sense,
/// `B(α)/(1−α) ∫₀ᵗ f'(s) E_α(λ (t−s)^α) ds`, with `f'` replaced by forward
/// differences on each step and the Mittag-Leffler kernel integrated by
/// Gauss-Legendre quadrature.
pub fn abc_derivative(
    f: &SampledSignal,
    alpha: FracOrder,
    quad_pts: usize,
) -> Result<SampledSignal, QuadError> {
    if quad_pts < 2 {
        return Err(QuadError::QuadPoints(quad_pts));
    }
    let tau = f.grid.tau();
    let moments = kernel_moments(alpha, &f.grid, quad_pts)?;
    let slopes: Vec<f64> = f.values.windows(2).map(|w| (w[1] - w[0]) / tau).collect();
    let scale = normalization(alpha) / (1.0 - alpha.value());
    let mut out = memory_convolution(&slopes, &moments);
    out.iter_mut().for_each(|v| *v *= scale);
    Ok(f.with_values(out))
}

/// Least-squares slope of ln(error) against ln(step).
pub fn least_squares_order(steps: &[f64], errors: &[f64]) -> Result<f64, QuadError> {
    if steps.len() != errors.len() || errors.len() < 2 {
        return Err(QuadError::InvalidErrors(format!(
            "{} steps vs {} errors",
            steps.len(),
            errors.len()
        )));
    }
    if errors.contains(&0.0) {
        return Err(QuadError::ExactScheme);
    }
    if errors
        .iter()
        .chain(steps)
        .any(|&e| !(e > 0.0) || !e.is_finite())
    {
        return Err(QuadError::InvalidErrors(
            "errors and steps must be positive and finite".into(),
        ));
    }
    let xs: Vec<f64> = steps.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Experimental order of convergence for errors measured at step sizes
/// τ, τ/2, τ/4, ...
pub fn estimate_convergence_order(errors: &[f64]) -> Result<f64, QuadError> {
    let steps: Vec<f64> = (0..errors.len()).map(|i| 0.5f64.powi(i as i32)).collect();
    least_squares_order(&steps, errors)
}
