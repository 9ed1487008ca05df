//! Quadrature convergence study against closed-form AB integrals.

use super::config::{ensure, FileConfig, OneOrMany, TestFunction};
use super::svg::{palette, LinePlot, Series};
use super::{fmt_float, CliError, ConvergeArgs};
use crate::abquad::{self, FracOrder, SampledSignal, UniformTimeGrid};
use crate::specfun::{gamma, mittag_leffler, MLParams};
use serde::Serialize;

/// Final-time errors at or below this (relative to max(1, |exact|)) count as
/// exact.
pub const EXACT_ERROR: f64 = 1e-12;

pub const DEFAULT_STEPS: [usize; 5] = [64, 128, 256, 512, 1024];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergeConfig {
    pub function: TestFunction,
    pub alpha: OneOrMany<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n: Vec<usize>,
}

impl ConvergeConfig {
    pub fn resolve(args: &ConvergeArgs, file: &FileConfig) -> Result<Self, CliError> {
        let alphas = if !args.alpha.is_empty() {
            args.alpha.clone()
        } else {
            file.alpha
                .as_ref()
                .map(|a| a.to_vec())
                .unwrap_or_else(|| vec![0.5])
        };
        let n = if !args.n.is_empty() {
            args.n.clone()
        } else {
            match &file.n {
                Some(OneOrMany::One(n0)) => (0..5).map(|i| n0 << i).collect(),
                Some(OneOrMany::Many(v)) => v.clone(),
                None => DEFAULT_STEPS.to_vec(),
            }
        };
        let cfg = Self {
            function: args
                .function
                .or(file.function)
                .unwrap_or(TestFunction::Quadratic),
            alpha: OneOrMany::Many(alphas),
            horizon: args.horizon.or(file.horizon).unwrap_or(1.0),
            n,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let alphas = self.alpha.to_vec();
        ensure(
            !alphas.is_empty(),
            "alpha",
            "at least one order is required",
        )?;
        for a in &alphas {
            FracOrder::new(*a).map_err(|e| CliError::Config(format!("field `alpha`: {e}")))?;
        }
        ensure(
            self.horizon > 0.0 && self.horizon.is_finite(),
            "T",
            format!("must be positive and finite, got {}", self.horizon),
        )?;
        ensure(self.n.len() >= 2, "n", "need at least two step counts")?;
        ensure(self.n[0] >= 1, "n", "step counts must be positive")?;
        ensure(
            self.n.windows(2).all(|w| w[1] > w[0]),
            "n",
            "step counts must be strictly increasing",
        )?;
        for a in alphas {
            closed_form(
                self.function,
                FracOrder::new(a).expect("validated"),
                self.horizon,
            )?;
        }
        Ok(())
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.alpha.to_vec()
    }
}

impl TestFunction {
    pub fn name(self) -> &'static str {
        match self {
            Self::Const => "const",
            Self::Linear => "linear",
            Self::Quadratic => "quadratic",
            Self::Exp => "exp",
        }
    }

    pub fn eval(self, t: f64) -> f64 {
        match self {
            Self::Const => 1.0,
            Self::Linear => t,
            Self::Quadratic => t * t,
            Self::Exp => t.exp(),
        }
    }
}

/// Exact AB integral of `f` at time `t`.
pub fn closed_form(f: TestFunction, alpha: FracOrder, t: f64) -> Result<f64, CliError> {
    let a = alpha.value();
    let b = abquad::normalization(alpha);
    let rl = match f {
        TestFunction::Const => t.powf(a) / gamma(a + 1.0),
        TestFunction::Linear => t.powf(a + 1.0) / gamma(a + 2.0),
        TestFunction::Quadratic => 2.0 * t.powf(a + 2.0) / gamma(a + 3.0),
        TestFunction::Exp => {
            let p = MLParams::new(1.0, 1.0 + a).map_err(|e| CliError::Domain(e.to_string()))?;
            let e = mittag_leffler(p, t, 1e-15)
                .map_err(|e| CliError::NoClosedForm(format!("exp at T = {t}, alpha = {a}: {e}")))?;
            t.powf(a) * e
        }
    };
    Ok((1.0 - a) / b * f.eval(t) + a / b * rl)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub tau: f64,
    pub abs_error_at_t: f64,
    pub eoc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Summary {
    Exact,
    Order(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub function: TestFunction,
    pub alpha: f64,
    pub exact: f64,
    pub rows: Vec<ConvergenceRow>,
    pub summary: Summary,
}

pub fn study(
    f: TestFunction,
    alpha: FracOrder,
    horizon: f64,
    steps: &[usize],
) -> Result<ConvergenceStudy, CliError> {
    let exact = closed_form(f, alpha, horizon)?;
    let limit = EXACT_ERROR * exact.abs().max(1.0);
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(steps.len());
    for &n in steps {
        let grid = UniformTimeGrid::new(horizon, n).map_err(|e| CliError::Config(e.to_string()))?;
        let signal = SampledSignal::from_fn(grid, |t| f.eval(t))
            .map_err(|e| CliError::Domain(e.to_string()))?;
        let approx = abquad::ab_integral_trapezoid(&signal, alpha).last();
        let err = (approx - exact).abs();
        let eoc = rows.last().and_then(|prev| {
            // round-off level errors carry no rate information
            let ok = prev.abs_error_at_t > limit && err > limit;
            ok.then(|| (prev.abs_error_at_t / err).ln() / (prev.tau / grid.tau()).ln())
        });
        rows.push(ConvergenceRow {
            n,
            tau: grid.tau(),
            abs_error_at_t: err,
            eoc,
        });
    }
    let summary = if rows.iter().all(|r| r.abs_error_at_t <= limit) {
        Summary::Exact
    } else {
        let taus: Vec<f64> = rows.iter().map(|r| r.tau).collect();
        let errs: Vec<f64> = rows.iter().map(|r| r.abs_error_at_t).collect();
        match abquad::least_squares_order(&taus, &errs) {
            Ok(p) => Summary::Order(p),
            Err(abquad::QuadError::ExactScheme) => Summary::Exact,
            Err(e) => return Err(CliError::Domain(e.to_string())),
        }
    };
    Ok(ConvergenceStudy {
        function: f,
        alpha: alpha.value(),
        exact,
        rows,
        summary,
    })
}

pub fn to_csv(s: &ConvergenceStudy) -> String {
    let mut out = String::from("n,tau,abs_error_at_T,eoc\n");
    for r in &s.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.n,
            fmt_float(r.tau),
            fmt_float(r.abs_error_at_t),
            r.eoc.map(fmt_float).unwrap_or_default()
        ));
    }
    let summary = match s.summary {
        Summary::Exact => "exact".to_string(),
        Summary::Order(p) => fmt_float(p),
    };
    out.push_str(&format!("summary,,,{summary}\n"));
    out
}

pub fn plot(studies: &[ConvergenceStudy]) -> String {
    let f = studies.first().map(|s| s.function.name()).unwrap_or("");
    LinePlot {
        title: format!("AB trapezoid error at T, f = {f}"),
        x_label: "log10 n".into(),
        y_label: "log10 |error|".into(),
        series: studies
            .iter()
            .enumerate()
            .map(|(i, s)| Series {
                label: format!("alpha = {}", s.alpha),
                color: palette(i),
                points: s
                    .rows
                    .iter()
                    .map(|r| ((r.n as f64).log10(), r.abs_error_at_t.log10()))
                    .collect(),
            })
            .collect(),
    }
    .render()
}

/// Output file name for one study; `convergence.csv` when only one order is
/// run.
pub fn csv_name(alpha: f64, single: bool) -> String {
    if single {
        "convergence.csv".into()
    } else {
        format!("convergence_alpha{alpha}.csv")
    }
}
