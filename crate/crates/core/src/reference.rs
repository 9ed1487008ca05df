//! Laplace-domain solution of the linear aquifer problem and a Gaver-Stehfest
//! inversion used to check the time-domain solver.
//!
//! Taking the Laplace transform of `φ − φ(0) = I^α g(φ)` with zero initial
//! head turns the flow equation into `φ̃'' + φ̃'/r − q φ̃ = 0` with
//!
//! ```text
//! q(p) = B(α)·β²·p^α / ((1−α)·p^α + α) + ϖ⁻²
//! ```
//!
//! whose bounded-at-infinity solution is a multiple of `K0(r√q)`.

use crate::abquad::{self, FracOrder, UniformTimeGrid};
use crate::aquifer::{
    self, AquiferError, AquiferParams, BoundaryConditions, SolverOptions, SpatialGrid,
};
use crate::specfun::{bessel_j0, bessel_k0, SpecialFnError};
use log::warn;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("Laplace variable must be positive and finite, got {0}")]
    InvalidLaplaceVariable(f64),
    #[error("radius must lie in (0, 1], got {0}")]
    InvalidRadius(f64),
    #[error("K0 branch is singular at r*sqrt(q) = 0")]
    SingularBranch,
    #[error("evaluation time must be positive and finite, got {0}")]
    InvalidTime(f64),
    #[error("Stehfest term count must be even and within 8..=18, got {0}")]
    InvalidTerms(usize),
    #[error("transform returned a non-finite value at p = {0}")]
    NonFiniteTransform(f64),
    #[error(transparent)]
    Special(#[from] SpecialFnError),
    #[error(transparent)]
    Aquifer(#[from] AquiferError),
}

/// Laplace variable together with the model it is evaluated for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceParams {
    p: f64,
    alpha: FracOrder,
    params: AquiferParams,
}

impl LaplaceParams {
    pub fn new(p: f64, alpha: FracOrder, params: AquiferParams) -> Result<Self, ReferenceError> {
        if !(p > 0.0) || !p.is_finite() {
            return Err(ReferenceError::InvalidLaplaceVariable(p));
        }
        Ok(Self { p, alpha, params })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn alpha(&self) -> FracOrder {
        self.alpha
    }

    pub fn params(&self) -> &AquiferParams {
        &self.params
    }
}

pub fn laplace_q(lp: &LaplaceParams) -> f64 {
    let a = lp.alpha.value();
    let pa = lp.p.powf(a);
    let w = lp.params.varpi();
    abquad::normalization(lp.alpha) * lp.params.beta_sq() * pa / ((1.0 - a) * pa + a)
        + 1.0 / (w * w)
}

/// `a·J0(r√q) + b·K0(r√q)`.
pub fn laplace_head(r: f64, lp: &LaplaceParams, a: f64, b: f64) -> Result<f64, ReferenceError> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(ReferenceError::InvalidRadius(r));
    }
    let x = r * laplace_q(lp).sqrt();
    let mut value = a * bessel_j0(x);
    if b != 0.0 {
        if !(x > 0.0) {
            return Err(ReferenceError::SingularBranch);
        }
        value += b * bessel_k0(x)?;
    }
    Ok(value)
}

pub const DEFAULT_STEHFEST_TERMS: usize = 14;

/// Relative disagreement between `terms` and `terms − 2` above which a
/// result is flagged unstable.
pub const STEHFEST_DISAGREEMENT: f64 = 0.01;

fn check_terms(terms: usize) -> Result<(), ReferenceError> {
    if !terms.is_multiple_of(2) || !(8..=18).contains(&terms) {
        return Err(ReferenceError::InvalidTerms(terms));
    }
    Ok(())
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Gaver-Stehfest weights `V_1..V_N`.
pub fn stehfest_coefficients(terms: usize) -> Result<Vec<f64>, ReferenceError> {
    check_terms(terms)?;
    let half = terms / 2;
    let v = (1..=terms)
        .map(|k| {
            let sum: f64 = (k.div_ceil(2)..=k.min(half))
                .map(|j| {
                    let jf = j as f64;
                    jf.powi(half as i32) * factorial(2 * j)
                        / (factorial(half - j)
                            * factorial(j)
                            * factorial(j - 1)
                            * factorial(k - j)
                            * factorial(2 * j - k))
                })
                .sum();
            if (k + half).is_multiple_of(2) {
                sum
            } else {
                -sum
            }
        })
        .collect();
    Ok(v)
}

/// Inverts the transform `f` at time `t` with `terms` Stehfest terms.
pub fn stehfest_invert<F>(f: F, t: f64, terms: usize) -> Result<f64, ReferenceError>
where
    F: Fn(f64) -> f64,
{
    if !(t > 0.0) || !t.is_finite() {
        return Err(ReferenceError::InvalidTime(t));
    }
    let v = stehfest_coefficients(terms)?;
    let h = std::f64::consts::LN_2 / t;
    let mut sum = 0.0;
    for (k, vk) in v.iter().enumerate() {
        let p = (k + 1) as f64 * h;
        let fp = f(p);
        if !fp.is_finite() {
            return Err(ReferenceError::NonFiniteTransform(p));
        }
        sum += vk * fp;
    }
    Ok(h * sum)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StehfestEstimate {
    pub value: f64,
    /// Result with two fewer terms.
    pub coarser: f64,
    pub unstable: bool,
}

/// [`stehfest_invert`] plus a stability check against `terms − 2` terms.
/// Unstable results are logged, not rejected.
pub fn stehfest_invert_checked<F>(
    f: F,
    t: f64,
    terms: usize,
) -> Result<StehfestEstimate, ReferenceError>
where
    F: Fn(f64) -> f64,
{
    check_terms(terms)?;
    let value = stehfest_invert(&f, t, terms)?;
    let coarser_terms = if terms > 8 { terms - 2 } else { terms + 2 };
    let coarser = stehfest_invert(&f, t, coarser_terms)?;
    let scale = value.abs().max(coarser.abs());
    let unstable = scale > 0.0 && (value - coarser).abs() > STEHFEST_DISAGREEMENT * scale;
    if unstable {
        warn!(
            "Stehfest inversion at t = {t} unstable: {value} ({terms} terms) vs {coarser} ({coarser_terms} terms)"
        );
    }
    Ok(StehfestEstimate {
        value,
        coarser,
        unstable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BesselBranch {
    J0,
    #[default]
    K0,
}

impl std::str::FromStr for BesselBranch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "j0" => Ok(Self::J0),
            "k0" => Ok(Self::K0),
            _ => Err(format!("unknown Bessel branch '{s}' (expected j0 or k0)")),
        }
    }
}

impl std::fmt::Display for BesselBranch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::J0 => "j0",
            Self::K0 => "k0",
        })
    }
}

/// Transformed head for a step from zero to `head` at the well face `rc`,
/// with the branch coefficient fitted from that boundary at each `p`.
pub fn step_response_transform(
    r: f64,
    rc: f64,
    head: f64,
    lp: &LaplaceParams,
    branch: BesselBranch,
) -> Result<f64, ReferenceError> {
    let target = head / lp.p();
    match branch {
        BesselBranch::K0 => {
            let at_well = laplace_head(rc, lp, 0.0, 1.0)?;
            laplace_head(r, lp, 0.0, target / at_well)
        }
        BesselBranch::J0 => {
            let at_well = laplace_head(rc, lp, 1.0, 0.0)?;
            laplace_head(r, lp, target / at_well, 0.0)
        }
    }
}

/// Near-classical constant-head problem comparing the time-domain solver to
/// the inverted Laplace solution at one interior radius.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalLimitCase {
    pub alpha: f64,
    pub params: AquiferParams,
    pub m: usize,
    pub well_node: usize,
    pub probe_node: usize,
    pub steps: usize,
    pub horizon: f64,
    pub head: f64,
    pub terms: usize,
    pub branch: BesselBranch,
}

impl Default for ClassicalLimitCase {
    fn default() -> Self {
        // ϖ = 0.1 makes K0(r/ϖ) negligible at r = 1, so the finite outer
        // boundary barely disturbs the infinite-domain solution.
        Self {
            alpha: 0.999,
            params: AquiferParams::new(1.0, 1.0, 1.0, 0.1).expect("valid constants"),
            m: 200,
            well_node: 20,
            probe_node: 30,
            steps: 200,
            horizon: 0.05,
            head: 1.0,
            terms: DEFAULT_STEHFEST_TERMS,
            branch: BesselBranch::K0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossCheck {
    pub radius: f64,
    pub time: f64,
    pub solver: f64,
    pub laplace: f64,
    pub branch: BesselBranch,
    pub relative_error: f64,
    pub unstable: bool,
}

pub fn classical_limit_check(case: &ClassicalLimitCase) -> Result<CrossCheck, ReferenceError> {
    let alpha = FracOrder::new(case.alpha).map_err(AquiferError::from)?;
    let grid = SpatialGrid::with_well_node(case.m, case.well_node)?;
    let time = UniformTimeGrid::new(case.horizon, case.steps).map_err(AquiferError::from)?;
    let mut initial = vec![0.0; grid.node_count()];
    initial[0] = case.head;
    let bc = BoundaryConditions::new(case.head, 0.0, initial);
    let field = aquifer::simulate(
        &case.params,
        &grid,
        &bc,
        alpha,
        time,
        SolverOptions::default(),
    )?;
    let solver = field.at(case.steps, case.probe_node);

    let r = grid.radius(case.probe_node);
    let rc = grid.radius(case.well_node);
    let transform = |p: f64| {
        LaplaceParams::new(p, alpha, case.params)
            .and_then(|lp| step_response_transform(r, rc, case.head, &lp, case.branch))
            .unwrap_or(f64::NAN)
    };
    let est = stehfest_invert_checked(transform, case.horizon, case.terms)?;
    let relative_error = (solver - est.value).abs() / est.value.abs();
    Ok(CrossCheck {
        radius: r,
        time: case.horizon,
        solver,
        laplace: est.value,
        branch: case.branch,
        relative_error,
        unstable: est.unstable,
    })
}
