//! Implicit finite-difference solver for radial flow in a leaky aquifer with
//! an AB time-fractional derivative,
//!
//! ```text
//! β² D_t^α φ = φ_rr + φ_r / r − φ / ϖ²,   ϖ = K·D·c,  β² = S·c / ϖ²
//! ```
//!
//! The equation is rewritten as `φ(t) − φ(0) = I^α g(φ)(t)` with
//! `g = β⁻²(φ_rr + φ_r/r − φ/ϖ²)` and the AB integral discretized by the
//! product trapezoid rule of [`crate::abquad`]. The newest step's average
//! involves `g(φ^{k+1})`, which is folded into the implicit tridiagonal
//! matrix; all older levels form the right-hand side.
//!
//! Space is the radial interval (0, 1] with nodes `r_i = i·ξ`, `ξ = 1/M`. The
//! well face sits on node `well_node` (node 1 by default) and the outer
//! boundary on node `M`; both carry constant Dirichlet data. Fields store one
//! column per node from the well face outwards.

mod tridiag;

pub use tridiag::{thomas_solve, TridiagonalSystem, MIN_PIVOT};

use crate::abquad::{self, ABWeights, FracOrder, QuadError, UniformTimeGrid};
use log::warn;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AquiferError {
    #[error("invalid aquifer parameters: {0}")]
    InvalidParams(String),
    #[error("invalid spatial grid: {0}")]
    InvalidGrid(String),
    #[error("invalid boundary data: {0}")]
    InvalidBoundary(String),
    #[error("invalid tridiagonal system: {0}")]
    InvalidSystem(String),
    #[error(
        "assembly of level {level} needs history rows 0..={needed}, only {available} available"
    )]
    MissingHistory {
        level: usize,
        needed: usize,
        available: usize,
    },
    #[error("tridiagonal solver breakdown at row {row} (pivot {pivot:e}){}", step_suffix(*.step))]
    Breakdown {
        step: Option<usize>,
        row: usize,
        pivot: f64,
    },
    #[error("non-finite head detected at time step {step}")]
    NonFinite { step: usize },
    #[error("self-convergence study needs a base step count of at least 32, got {0}")]
    BaseStepsTooSmall(usize),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

fn step_suffix(step: Option<usize>) -> String {
    step.map(|s| format!(" at time step {s}"))
        .unwrap_or_default()
}

/// Physical coefficients of the leaky aquifer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AquiferParams {
    storage: f64,
    conductivity: f64,
    thickness: f64,
    leakage: f64,
}

impl AquiferParams {
    /// `storage` S, hydraulic `conductivity` K, aquifer `thickness` D and
    /// `leakage` parameter c, all strictly positive.
    pub fn new(
        storage: f64,
        conductivity: f64,
        thickness: f64,
        leakage: f64,
    ) -> Result<Self, AquiferError> {
        for (name, v) in [
            ("S", storage),
            ("K", conductivity),
            ("D", thickness),
            ("c", leakage),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(AquiferError::InvalidParams(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        let p = Self {
            storage,
            conductivity,
            thickness,
            leakage,
        };
        if !(p.beta_sq() > 0.0) || !p.beta_sq().is_finite() {
            return Err(AquiferError::InvalidParams(format!(
                "derived beta^2 = {} is not positive and finite",
                p.beta_sq()
            )));
        }
        Ok(p)
    }

    pub fn storage(&self) -> f64 {
        self.storage
    }

    pub fn conductivity(&self) -> f64 {
        self.conductivity
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    /// ϖ = K·D·c.
    pub fn varpi(&self) -> f64 {
        self.conductivity * self.thickness * self.leakage
    }

    /// β² = S·c/ϖ².
    pub fn beta_sq(&self) -> f64 {
        let w = self.varpi();
        self.storage * self.leakage / (w * w)
    }
}

impl Default for AquiferParams {
    fn default() -> Self {
        Self {
            storage: 1.0,
            conductivity: 1.0,
            thickness: 1.0,
            leakage: 1.0,
        }
    }
}

/// Radial nodes `r_i = i/M`; the well face is node `well_node`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpatialGrid {
    m: usize,
    well_node: usize,
}

impl SpatialGrid {
    pub fn new(m: usize) -> Result<Self, AquiferError> {
        Self::with_well_node(m, 1)
    }

    /// Places the well face at `r_c = well_node/M`. Keeping `r_c` fixed while
    /// refining `M` gives a sequence of grids for the same physical problem.
    pub fn with_well_node(m: usize, well_node: usize) -> Result<Self, AquiferError> {
        if m < 3 {
            return Err(AquiferError::InvalidGrid(format!(
                "need M >= 3 nodes, got {m}"
            )));
        }
        if well_node == 0 || well_node + 2 > m {
            return Err(AquiferError::InvalidGrid(format!(
                "well node must lie in 1..={}, got {well_node}",
                m - 2
            )));
        }
        Ok(Self { m, well_node })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn well_node(&self) -> usize {
        self.well_node
    }

    pub fn xi(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn radius(&self, node: usize) -> f64 {
        node as f64 / self.m as f64
    }

    /// Number of stored columns, well face to outer boundary inclusive.
    pub fn node_count(&self) -> usize {
        self.m - self.well_node + 1
    }

    pub fn nodes(&self) -> std::ops::RangeInclusive<usize> {
        self.well_node..=self.m
    }

    pub fn radii(&self) -> Vec<f64> {
        self.nodes().map(|i| self.radius(i)).collect()
    }

    fn column(&self, node: usize) -> usize {
        node - self.well_node
    }
}

/// Initial head profile and the constant Dirichlet values at the well face
/// (`phi_c`) and at r = 1 (`outer`).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConditions {
    pub phi_c: f64,
    pub outer: f64,
    pub initial: Vec<f64>,
}

impl BoundaryConditions {
    pub fn new(phi_c: f64, outer: f64, initial: Vec<f64>) -> Self {
        Self {
            phi_c,
            outer,
            initial,
        }
    }

    /// Straight-line drawdown from `phi_c` at the well to `outer` at r = 1.
    pub fn linear(grid: &SpatialGrid, phi_c: f64, outer: f64) -> Self {
        let rc = grid.radius(grid.well_node());
        let initial = grid
            .radii()
            .iter()
            .map(|r| phi_c + (outer - phi_c) * (r - rc) / (1.0 - rc))
            .collect();
        Self::new(phi_c, outer, initial)
    }

    pub fn constant(grid: &SpatialGrid, value: f64) -> Self {
        Self::new(value, value, vec![value; grid.node_count()])
    }

    /// Boundary values taken from the ends of `initial`.
    pub fn from_profile(initial: Vec<f64>) -> Result<Self, AquiferError> {
        match (initial.first(), initial.last()) {
            (Some(&a), Some(&b)) => Ok(Self::new(a, b, initial)),
            _ => Err(AquiferError::InvalidBoundary(
                "empty initial profile".into(),
            )),
        }
    }

    /// `a·self + b·other`.
    pub fn superpose(&self, a: f64, other: &Self, b: f64) -> Self {
        Self {
            phi_c: a * self.phi_c + b * other.phi_c,
            outer: a * self.outer + b * other.outer,
            initial: self
                .initial
                .iter()
                .zip(&other.initial)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.superpose(a, self, 0.0)
    }

    /// Largest magnitude among the initial and boundary values.
    pub fn magnitude(&self) -> f64 {
        self.initial
            .iter()
            .chain([&self.phi_c, &self.outer])
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    fn validate(&self, grid: &SpatialGrid) -> Result<(), AquiferError> {
        if self.initial.len() != grid.node_count() {
            return Err(AquiferError::InvalidBoundary(format!(
                "initial profile has {} values, grid has {} nodes",
                self.initial.len(),
                grid.node_count()
            )));
        }
        if !self.phi_c.is_finite() || !self.outer.is_finite() {
            return Err(AquiferError::InvalidBoundary(
                "boundary values must be finite".into(),
            ));
        }
        if let Some(i) = self.initial.iter().position(|v| !v.is_finite()) {
            return Err(AquiferError::InvalidBoundary(format!(
                "initial value {i} is not finite"
            )));
        }
        Ok(())
    }

    /// Initial row with the boundary entries set to the Dirichlet data.
    fn initial_row(&self) -> Vec<f64> {
        const MISMATCH_TOL: f64 = 1e-12;
        let mut row = self.initial.clone();
        let last = row.len() - 1;
        if (row[0] - self.phi_c).abs() > MISMATCH_TOL {
            warn!(
                "initial head {} at the well face differs from phi_c = {}; using phi_c",
                row[0], self.phi_c
            );
        }
        if (row[last] - self.outer).abs() > MISMATCH_TOL {
            warn!(
                "initial head {} at r = 1 differs from the outer value {}; using the outer value",
                row[last], self.outer
            );
        }
        row[0] = self.phi_c;
        row[last] = self.outer;
        row
    }
}

/// Head values φ_i^k, one row per time level.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadField {
    time: UniformTimeGrid,
    space: SpatialGrid,
    values: Vec<f64>,
}

impl HeadField {
    fn with_initial(time: UniformTimeGrid, space: SpatialGrid, row0: Vec<f64>) -> Self {
        let mut values = Vec::with_capacity((time.steps() + 1) * space.node_count());
        values.extend(row0);
        Self {
            time,
            space,
            values,
        }
    }

    /// Builds a (possibly partial) field from explicit rows, e.g. to drive
    /// [`assemble_step`] directly.
    pub fn from_rows(
        time: UniformTimeGrid,
        space: SpatialGrid,
        rows: &[Vec<f64>],
    ) -> Result<Self, AquiferError> {
        if rows.is_empty() || rows.len() > time.steps() + 1 {
            return Err(AquiferError::InvalidBoundary(format!(
                "expected 1..={} rows, got {}",
                time.steps() + 1,
                rows.len()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != space.node_count()) {
            return Err(AquiferError::InvalidBoundary(format!(
                "row of length {} on a grid with {} nodes",
                r.len(),
                space.node_count()
            )));
        }
        Ok(Self {
            time,
            space,
            values: rows.concat(),
        })
    }

    pub fn time_grid(&self) -> &UniformTimeGrid {
        &self.time
    }

    pub fn spatial_grid(&self) -> &SpatialGrid {
        &self.space
    }

    /// Number of populated time levels.
    pub fn levels(&self) -> usize {
        self.values.len() / self.space.node_count()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.space.node_count();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.space.node_count())
    }

    /// Head at time level `k` and radial node `node`.
    pub fn at(&self, k: usize, node: usize) -> f64 {
        self.row(k)[self.space.column(node)]
    }

    pub fn radii(&self) -> Vec<f64> {
        self.space.radii()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn push_row(&mut self, row: &[f64]) {
        self.values.extend_from_slice(row);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverOptions {
    /// Use the known level k at both ends of the newest step instead of the
    /// unknown level k + 1, leaving only the local term implicit.
    pub history_lag: bool,
}

/// Three-point stencil of `g` at one node: `g_i = upper·φ_{i+1} −
/// center·φ_i + lower·φ_{i−1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Stencil {
    lower: f64,
    center: f64,
    upper: f64,
}

impl Stencil {
    fn at(node: usize, params: &AquiferParams, grid: &SpatialGrid) -> Self {
        let xi = grid.xi();
        let w = params.varpi();
        let scale = 1.0 / (params.beta_sq() * xi * xi);
        let half_inv = 0.5 / node as f64;
        Self {
            lower: scale * (1.0 - half_inv),
            center: scale * (2.0 + xi * xi / (w * w)),
            upper: scale * (1.0 + half_inv),
        }
    }
}

/// Discrete `g = β⁻²(φ_rr + φ_r/r − φ/ϖ²)` at radial node `node`, where
/// `row` holds one value per grid column (well face first).
///
/// Panics unless both neighbours of `node` are on the grid.
pub fn spatial_operator(
    row: &[f64],
    node: usize,
    params: &AquiferParams,
    grid: &SpatialGrid,
) -> f64 {
    assert!(
        node > grid.well_node() && node < grid.m(),
        "node {node} has no neighbours on the grid"
    );
    let s = Stencil::at(node, params, grid);
    let c = grid.column(node);
    s.upper * row[c + 1] - s.center * row[c] + s.lower * row[c - 1]
}

/// `g` on every interior node; boundary entries are zero.
fn apply_operator(row: &[f64], stencils: &[Stencil]) -> Vec<f64> {
    let mut out = vec![0.0; row.len()];
    for (c, s) in stencils.iter().enumerate().map(|(j, s)| (j + 1, s)) {
        out[c] = s.upper * row[c + 1] - s.center * row[c] + s.lower * row[c - 1];
    }
    out
}

fn interior_stencils(params: &AquiferParams, grid: &SpatialGrid) -> Vec<Stencil> {
    (grid.well_node() + 1..grid.m())
        .map(|i| Stencil::at(i, params, grid))
        .collect()
}

/// Everything [`assemble_from_operator`] needs besides the history.
struct StepContext<'a> {
    stencils: &'a [Stencil],
    weights: &'a ABWeights,
    local: f64,
    c_alpha: f64,
    options: SolverOptions,
}

/// System for level `k + 1` from `g` evaluated on levels `0..=k`.
fn assemble_from_operator(
    k: usize,
    g_rows: &[Vec<f64>],
    initial: &[f64],
    bc: &BoundaryConditions,
    ctx: &StepContext<'_>,
) -> TridiagonalSystem {
    let b = ctx.weights.b();
    let n = initial.len();

    // Level m collects b_{k−m} from step [t_m, t_{m+1}] and b_{k+1−m} from
    // step [t_{m−1}, t_m].
    let mut memory = vec![0.0; n];
    for (m, g) in g_rows.iter().enumerate().take(k + 1) {
        let mut coef = b[k - m];
        if m >= 1 {
            coef += b[k + 1 - m];
        }
        if ctx.options.history_lag && m == k {
            coef += b[0];
        }
        for (acc, v) in memory.iter_mut().zip(g) {
            *acc += coef * v;
        }
    }

    let implicit = if ctx.options.history_lag {
        ctx.local
    } else {
        ctx.local + 0.5 * ctx.c_alpha * b[0]
    };

    let mut lower = vec![0.0; n - 1];
    let mut diag = vec![1.0; n];
    let mut upper = vec![0.0; n - 1];
    let mut rhs: Vec<f64> = initial
        .iter()
        .zip(&memory)
        .map(|(h, m)| h + 0.5 * ctx.c_alpha * m)
        .collect();
    for (j, s) in ctx.stencils.iter().enumerate() {
        let c = j + 1;
        diag[c] = 1.0 + implicit * s.center;
        lower[c - 1] = -implicit * s.lower;
        upper[c] = -implicit * s.upper;
    }
    rhs[0] = bc.phi_c;
    rhs[n - 1] = bc.outer;
    TridiagonalSystem {
        lower,
        diag,
        upper,
        rhs,
    }
}

/// Assembles the implicit system for time level `k + 1` from rows `0..=k` of
/// `history`.
///
/// Interior rows encode
/// `φ^{k+1} − φ^0 = A·g(φ^{k+1}) + (c_α/2) Σ_{j=0}^{k} b_j [g(φ^{k−j}) + g(φ^{k+1−j})]`
/// with `A = (1−α)/B(α)`; the `g(φ^{k+1})` parts are moved to the matrix.
/// Boundary rows pin the Dirichlet values.
pub fn assemble_step(
    k: usize,
    history: &HeadField,
    params: &AquiferParams,
    weights: &ABWeights,
    bc: &BoundaryConditions,
    options: SolverOptions,
) -> Result<TridiagonalSystem, AquiferError> {
    let grid = history.spatial_grid();
    if history.levels() < k + 1 {
        return Err(AquiferError::MissingHistory {
            level: k + 1,
            needed: k,
            available: history.levels(),
        });
    }
    if weights.len() < k + 1 {
        return Err(AquiferError::InvalidSystem(format!(
            "level {} needs {} jump weights, got {}",
            k + 1,
            k + 1,
            weights.len()
        )));
    }
    let stencils = interior_stencils(params, grid);
    let g_rows: Vec<Vec<f64>> = (0..=k)
        .map(|m| apply_operator(history.row(m), &stencils))
        .collect();
    let ctx = StepContext {
        stencils: &stencils,
        weights,
        local: weights.local_coefficient(),
        c_alpha: weights.c_alpha(history.time_grid().tau()),
        options,
    };
    Ok(assemble_from_operator(k, &g_rows, history.row(0), bc, &ctx))
}

/// Marches the fractional flow equation over `time`.
pub fn simulate(
    params: &AquiferParams,
    grid: &SpatialGrid,
    bc: &BoundaryConditions,
    alpha: FracOrder,
    time: UniformTimeGrid,
    options: SolverOptions,
) -> Result<HeadField, AquiferError> {
    bc.validate(grid)?;
    let row0 = bc.initial_row();
    let stencils = interior_stencils(params, grid);
    let weights = abquad::jump_weights(alpha, time.steps());
    let ctx = StepContext {
        stencils: &stencils,
        weights: &weights,
        local: weights.local_coefficient(),
        c_alpha: weights.c_alpha(time.tau()),
        options,
    };

    let mut g_rows = vec![apply_operator(&row0, &stencils)];
    let mut field = HeadField::with_initial(time, *grid, row0);
    for k in 0..time.steps() {
        let sys = assemble_from_operator(k, &g_rows, field.row(0), bc, &ctx);
        debug_assert!(sys.dominance_margin() >= 1.0 - 1e-9);
        let mut next = thomas_solve(&sys).map_err(|e| match e {
            AquiferError::Breakdown { row, pivot, .. } => AquiferError::Breakdown {
                step: Some(k + 1),
                row,
                pivot,
            },
            other => other,
        })?;
        let last = next.len() - 1;
        next[0] = bc.phi_c;
        next[last] = bc.outer;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(AquiferError::NonFinite { step: k + 1 });
        }
        g_rows.push(apply_operator(&next, &stencils));
        field.push_row(&next);
    }
    Ok(field)
}

/// Time-independent profile with `g(φ) = 0` on every interior node of
/// `grid` and the given Dirichlet values.
pub fn steady_state(
    params: &AquiferParams,
    grid: &SpatialGrid,
    phi_c: f64,
    outer: f64,
) -> Result<Vec<f64>, AquiferError> {
    let n = grid.node_count();
    let mut lower = vec![0.0; n - 1];
    let mut diag = vec![1.0; n];
    let mut upper = vec![0.0; n - 1];
    let mut rhs = vec![0.0; n];
    for (j, s) in interior_stencils(params, grid).iter().enumerate() {
        let c = j + 1;
        // −g = 0 keeps the diagonal positive.
        diag[c] = s.center;
        lower[c - 1] = -s.lower;
        upper[c] = -s.upper;
    }
    rhs[0] = phi_c;
    rhs[n - 1] = outer;
    thomas_solve(&TridiagonalSystem::new(lower, diag, upper, rhs)?)
}

/// Successive differences below this are treated as zero.
pub const EXACT_DIFFERENCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SelfConvergence {
    pub steps: [usize; 3],
    /// max-norm of final-time differences between N, 2N and 2N, 4N runs.
    pub differences: [f64; 2],
    /// Temporal order, `None` when both differences vanish (exact scheme).
    pub order: Option<f64>,
}

/// Temporal self-convergence at fixed `grid`: runs `N`, `2N`, `4N` steps on
/// `[0, horizon]` and estimates the order from the final-time differences.
#[allow(clippy::too_many_arguments)]
pub fn self_convergence(
    params: &AquiferParams,
    grid: &SpatialGrid,
    bc: &BoundaryConditions,
    alpha: FracOrder,
    horizon: f64,
    base_steps: usize,
    options: SolverOptions,
) -> Result<SelfConvergence, AquiferError> {
    if base_steps < 32 {
        return Err(AquiferError::BaseStepsTooSmall(base_steps));
    }
    let steps = [base_steps, 2 * base_steps, 4 * base_steps];
    let finals = steps
        .iter()
        .map(|&n| {
            let time = UniformTimeGrid::new(horizon, n)?;
            let field = simulate(params, grid, bc, alpha, time, options)?;
            Ok(field.row(n).to_vec())
        })
        .collect::<Result<Vec<_>, AquiferError>>()?;
    let diff = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let differences = [diff(&finals[0], &finals[1]), diff(&finals[1], &finals[2])];
    let order = if differences.iter().all(|&d| d <= EXACT_DIFFERENCE) {
        None
    } else {
        Some(abquad::estimate_convergence_order(&differences)?)
    };
    Ok(SelfConvergence {
        steps,
        differences,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abquad::normalization;
    use crate::specfun::gamma;

    fn unit_params() -> AquiferParams {
        AquiferParams::default()
    }

    fn order(a: f64) -> FracOrder {
        FracOrder::new(a).unwrap()
    }

    #[test]
    fn params_validation_and_derived_values() {
        assert!(AquiferParams::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(AquiferParams::new(1.0, -1.0, 1.0, 1.0).is_err());
        let p = AquiferParams::new(0.1, 2.0, 3.0, 0.5).unwrap();
        assert!((p.varpi() - 3.0).abs() < 1e-15);
        assert!((p.beta_sq() - 0.05 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn grid_validation() {
        assert!(SpatialGrid::new(2).is_err());
        assert!(SpatialGrid::with_well_node(10, 0).is_err());
        assert!(SpatialGrid::with_well_node(10, 9).is_err());
        let g = SpatialGrid::new(4).unwrap();
        assert_eq!(g.radii(), vec![0.25, 0.5, 0.75, 1.0]);
        assert!((g.xi() * g.m() as f64 - 1.0).abs() < 1e-15);
        assert!(g.radius(g.well_node()) > 0.0);
    }

    #[test]
    fn operator_on_zero_and_constant() {
        let p = AquiferParams::new(2.0, 1.0, 1.0, 1.0).unwrap();
        let g = SpatialGrid::new(20).unwrap();
        let zeros = vec![0.0; g.node_count()];
        let ones = vec![1.0; g.node_count()];
        for i in 2..20 {
            assert_eq!(spatial_operator(&zeros, i, &p, &g), 0.0);
            let v = spatial_operator(&ones, i, &p, &g);
            let expected = -1.0 / (p.beta_sq() * p.varpi() * p.varpi());
            assert!((v - expected).abs() < 1e-9 * expected.abs(), "i = {i}: {v}");
        }
    }

    #[test]
    fn operator_on_quadratic_matches_continuum() {
        // φ = r²: φ_rr + φ_r/r − φ/ϖ² = 4 − r²/ϖ², exact for the centred stencil
        let p = AquiferParams::new(1.0, 0.5, 1.0, 1.0).unwrap();
        for &m in &[50, 100, 200] {
            let g = SpatialGrid::new(m).unwrap();
            let row: Vec<f64> = g.radii().iter().map(|r| r * r).collect();
            let i = m / 2;
            let r = g.radius(i);
            let w = p.varpi();
            let expected = (4.0 - r * r / (w * w)) / p.beta_sq();
            let got = spatial_operator(&row, i, &p, &g);
            assert!(
                (got - expected).abs() <= 1e-6 * expected.abs().max(1.0),
                "m = {m}"
            );
        }
    }

    #[test]
    #[should_panic]
    fn operator_requires_neighbours() {
        let g = SpatialGrid::new(10).unwrap();
        spatial_operator(&[0.0; 10], 1, &unit_params(), &g);
    }

    fn first_step_system(alpha: f64, m: usize, n: usize) -> (TridiagonalSystem, f64, Vec<Stencil>) {
        let p = AquiferParams::new(0.5, 1.0, 2.0, 1.0).unwrap();
        let g = SpatialGrid::new(m).unwrap();
        let time = UniformTimeGrid::new(1.0, n).unwrap();
        let a = order(alpha);
        let w = abquad::jump_weights(a, n);
        let bc = BoundaryConditions::linear(&g, 0.0, 1.0);
        let hist = HeadField::from_rows(time, g, std::slice::from_ref(&bc.initial)).unwrap();
        let sys = assemble_step(0, &hist, &p, &w, &bc, SolverOptions::default()).unwrap();
        let b = normalization(a);
        let c = alpha * time.tau().powf(alpha) / (b * gamma(alpha + 1.0));
        let theta = (1.0 - alpha) / b + c / 2.0;
        (sys, theta, interior_stencils(&p, &g))
    }

    #[test]
    fn assembled_coefficients() {
        let (sys, theta, stencils) = first_step_system(0.5, 12, 10);
        let p = AquiferParams::new(0.5, 1.0, 2.0, 1.0).unwrap();
        let g = SpatialGrid::new(12).unwrap();
        let xi = g.xi();
        let scale = 1.0 / (p.beta_sq() * xi * xi);
        for (j, _) in stencils.iter().enumerate() {
            let c = j + 1;
            let i = (c + 1) as f64;
            let w = p.varpi();
            let diag = 1.0 + theta * scale * (2.0 + xi * xi / (w * w));
            assert!((sys.diag[c] - diag).abs() < 1e-9 * diag);
            let up = -theta * scale * (1.0 + 0.5 / i);
            let lo = -theta * scale * (1.0 - 0.5 / i);
            assert!((sys.upper[c] - up).abs() < 1e-9 * up.abs());
            assert!((sys.lower[c - 1] - lo).abs() < 1e-9 * lo.abs());
        }
        assert_eq!(sys.diag[0], 1.0);
        assert_eq!(sys.upper[0], 0.0);
        assert!(sys.dominance_margin() >= 1.0);
    }

    #[test]
    fn first_step_residual_reproduces_scheme() {
        // Substitute the solved level back into the unassembled relation.
        let alpha = 0.5;
        let p = AquiferParams::new(0.5, 1.0, 2.0, 1.0).unwrap();
        let g = SpatialGrid::new(12).unwrap();
        let time = UniformTimeGrid::new(1.0, 10).unwrap();
        let a = order(alpha);
        let bc = BoundaryConditions::linear(&g, 0.0, 1.0);
        let field = simulate(&p, &g, &bc, a, time, SolverOptions::default()).unwrap();
        let b = normalization(a);
        let local = (1.0 - alpha) / b;
        let c = alpha * time.tau().powf(alpha) / (b * gamma(alpha + 1.0));
        let w = abquad::jump_weights(a, 10);
        let k = 3;
        for i in 2..12 {
            let gk = |lvl: usize| spatial_operator(field.row(lvl), i, &p, &g);
            let mut mem = 0.0;
            for j in 0..=k {
                mem += w.b()[j] * (gk(k - j) + gk(k + 1 - j));
            }
            let rhs = local * gk(k + 1) + 0.5 * c * mem;
            let lhs = field.at(k + 1, i) - field.at(0, i);
            assert!((lhs - rhs).abs() < 1e-9, "node {i}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn zero_data_gives_zero_system_and_field() {
        let p = unit_params();
        let g = SpatialGrid::new(10).unwrap();
        let time = UniformTimeGrid::new(1.0, 8).unwrap();
        let bc = BoundaryConditions::constant(&g, 0.0);
        let hist = HeadField::from_rows(time, g, std::slice::from_ref(&bc.initial)).unwrap();
        let w = abquad::jump_weights(order(0.5), 8);
        let sys = assemble_step(0, &hist, &p, &w, &bc, SolverOptions::default()).unwrap();
        assert!(sys.rhs.iter().all(|&v| v == 0.0));
        assert!(thomas_solve(&sys).unwrap().iter().all(|&v| v == 0.0));
        let field = simulate(&p, &g, &bc, order(0.5), time, SolverOptions::default()).unwrap();
        assert!(field.rows().all(|r| r.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn missing_history_is_an_error() {
        let g = SpatialGrid::new(10).unwrap();
        let time = UniformTimeGrid::new(1.0, 8).unwrap();
        let bc = BoundaryConditions::constant(&g, 1.0);
        let hist = HeadField::from_rows(time, g, std::slice::from_ref(&bc.initial)).unwrap();
        let w = abquad::jump_weights(order(0.5), 8);
        let err = assemble_step(3, &hist, &unit_params(), &w, &bc, SolverOptions::default());
        assert!(matches!(
            err,
            Err(AquiferError::MissingHistory { level: 4, .. })
        ));
    }

    #[test]
    fn dirichlet_columns_are_exact() {
        let p = unit_params();
        let g = SpatialGrid::new(40).unwrap();
        let bc = BoundaryConditions::linear(&g, 0.3, 1.7);
        let time = UniformTimeGrid::new(1.0, 30).unwrap();
        let field = simulate(&p, &g, &bc, order(0.5), time, SolverOptions::default()).unwrap();
        for row in field.rows() {
            assert_eq!(row[0], 0.3);
            assert_eq!(row[row.len() - 1], 1.7);
        }
        assert_eq!(field.levels(), 31);
    }

    #[test]
    fn inconsistent_initial_boundary_is_overwritten() {
        let g = SpatialGrid::new(10).unwrap();
        let mut bc = BoundaryConditions::linear(&g, 0.0, 1.0);
        bc.initial[0] = 0.5;
        let time = UniformTimeGrid::new(1.0, 4).unwrap();
        let field = simulate(
            &unit_params(),
            &g,
            &bc,
            order(0.5),
            time,
            SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(field.at(0, 1), 0.0);
    }

    #[test]
    fn wrong_profile_length_rejected() {
        let g = SpatialGrid::new(10).unwrap();
        let bc = BoundaryConditions::new(0.0, 1.0, vec![0.0; 4]);
        let time = UniformTimeGrid::new(1.0, 4).unwrap();
        let err = simulate(
            &unit_params(),
            &g,
            &bc,
            order(0.5),
            time,
            SolverOptions::default(),
        );
        assert!(matches!(err, Err(AquiferError::InvalidBoundary(_))));
    }

    #[test]
    fn steady_state_is_preserved() {
        let p = unit_params();
        let g = SpatialGrid::new(60).unwrap();
        let h = steady_state(&p, &g, 0.0, 1.0).unwrap();
        let bc = BoundaryConditions::from_profile(h.clone()).unwrap();
        let sc =
            self_convergence(&p, &g, &bc, order(0.5), 1.0, 32, SolverOptions::default()).unwrap();
        assert!(sc.order.is_none(), "{:?}", sc.differences);
    }

    #[test]
    fn self_convergence_rejects_small_base() {
        let g = SpatialGrid::new(10).unwrap();
        let bc = BoundaryConditions::linear(&g, 0.0, 1.0);
        let err = self_convergence(
            &unit_params(),
            &g,
            &bc,
            order(0.5),
            1.0,
            16,
            SolverOptions::default(),
        );
        assert_eq!(err, Err(AquiferError::BaseStepsTooSmall(16)));
    }

    #[test]
    fn temporal_order_is_about_one() {
        let g = SpatialGrid::new(60).unwrap();
        let bc = BoundaryConditions::linear(&g, 0.0, 1.0);
        for &a in &[0.5, 0.9] {
            let sc = self_convergence(
                &unit_params(),
                &g,
                &bc,
                order(a),
                1.0,
                32,
                SolverOptions::default(),
            )
            .unwrap();
            let eoc = sc.order.unwrap();
            assert!((0.7..=1.5).contains(&eoc), "alpha {a}: eoc {eoc}");
        }
    }

    #[test]
    fn lagged_history_converges_to_same_solution() {
        let g = SpatialGrid::new(40).unwrap();
        let bc = BoundaryConditions::linear(&g, 0.0, 1.0);
        let run = |n: usize, lag: bool| {
            let time = UniformTimeGrid::new(1.0, n).unwrap();
            let f = simulate(
                &unit_params(),
                &g,
                &bc,
                order(0.5),
                time,
                SolverOptions { history_lag: lag },
            )
            .unwrap();
            f.row(n).to_vec()
        };
        let gap = |n: usize| {
            run(n, true)
                .iter()
                .zip(run(n, false))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let (g1, g2) = (gap(50), gap(200));
        assert!(g2 < g1, "{g1} {g2}");
    }
}
