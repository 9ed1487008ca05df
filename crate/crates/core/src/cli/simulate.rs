//! Aquifer simulation runs, head profile CSV and figure layouts.

use super::config::{ensure, FileConfig, InitialKind, InitialSpec};
use super::svg::{palette, LinePlot, Series};
use super::{fmt_float, CliError, SimulateArgs};
use crate::abquad::{FracOrder, UniformTimeGrid};
use crate::aquifer::{
    self, AquiferError, AquiferParams, BoundaryConditions, HeadField, SolverOptions, SpatialGrid,
};
use serde::Serialize;

pub const DEFAULT_SNAPSHOTS: [usize; 3] = [0, 20, 50];

/// Effective simulation settings; serializes with the config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateConfig {
    pub alpha: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub steps: usize,
    #[serde(rename = "S")]
    pub storage: f64,
    #[serde(rename = "K")]
    pub conductivity: f64,
    #[serde(rename = "D")]
    pub thickness: f64,
    pub c: f64,
    pub phi_c: f64,
    pub outer: f64,
    pub initial: InitialSpec,
    pub snapshots: Vec<usize>,
    pub history_lag: bool,
}

impl SimulateConfig {
    pub fn resolve(args: &SimulateArgs, file: &FileConfig) -> Result<Self, CliError> {
        let steps = args.n.or(file.steps).unwrap_or(350);
        let initial = match args.initial {
            Some(kind) => InitialSpec {
                kind,
                values: args.initial_value.map(|v| vec![v]).unwrap_or_default(),
            },
            None => file.initial.clone().unwrap_or(InitialSpec {
                kind: InitialKind::Linear,
                values: Vec::new(),
            }),
        };
        let snapshots = if !args.snapshots.is_empty() {
            args.snapshots.clone()
        } else if let Some(s) = &file.snapshots {
            s.clone()
        } else {
            DEFAULT_SNAPSHOTS
                .iter()
                .copied()
                .filter(|&k| k <= steps)
                .collect()
        };
        let cfg = Self {
            alpha: if args.alpha.is_empty() {
                file.alpha
                    .as_ref()
                    .map(|a| a.to_vec())
                    .unwrap_or_else(|| vec![0.5])
            } else {
                args.alpha.clone()
            },
            horizon: args.horizon.or(file.horizon).unwrap_or(1.0),
            m: args.m.or(file.m).unwrap_or(350),
            steps,
            storage: args.storage.or(file.storage).unwrap_or(1.0),
            conductivity: args.conductivity.or(file.conductivity).unwrap_or(1.0),
            thickness: args.thickness.or(file.thickness).unwrap_or(1.0),
            c: args.leakage.or(file.c).unwrap_or(1.0),
            phi_c: args.phi_c.or(file.phi_c).unwrap_or(0.0),
            outer: args.outer.or(file.outer).unwrap_or(1.0),
            initial,
            snapshots,
            history_lag: args.history_lag || file.history_lag.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        ensure(
            !self.alpha.is_empty(),
            "alpha",
            "at least one order is required",
        )?;
        for &a in &self.alpha {
            FracOrder::new(a).map_err(|e| CliError::Config(format!("field `alpha`: {e}")))?;
        }
        ensure(
            self.horizon > 0.0 && self.horizon.is_finite(),
            "T",
            format!("must be positive and finite, got {}", self.horizon),
        )?;
        ensure(self.m >= 3, "M", format!("need at least 3, got {}", self.m))?;
        ensure(self.steps >= 1, "N", "need at least one time step")?;
        self.params()?;
        ensure(self.phi_c.is_finite(), "phi_c", "must be finite")?;
        ensure(self.outer.is_finite(), "outer", "must be finite")?;
        ensure(
            !self.snapshots.is_empty(),
            "snapshots",
            "at least one step is required",
        )?;
        if let Some(k) = self.snapshots.iter().find(|&&k| k > self.steps) {
            return Err(CliError::Config(format!(
                "field `snapshots`: step {k} exceeds N = {}",
                self.steps
            )));
        }
        let n = self.m;
        match self.initial.kind {
            InitialKind::Linear => ensure(
                self.initial.values.is_empty(),
                "initial.values",
                "not used with kind \"linear\"",
            )?,
            InitialKind::Constant => ensure(
                self.initial.values.len() <= 1,
                "initial.values",
                "kind \"constant\" takes at most one value",
            )?,
            InitialKind::Custom => ensure(
                self.initial.values.len() == n,
                "initial.values",
                format!(
                    "kind \"custom\" needs M = {n} values (r = 1/M .. 1), got {}",
                    self.initial.values.len()
                ),
            )?,
        }
        ensure(
            self.initial.values.iter().all(|v| v.is_finite()),
            "initial.values",
            "must be finite",
        )?;
        Ok(())
    }

    pub fn params(&self) -> Result<AquiferParams, CliError> {
        AquiferParams::new(self.storage, self.conductivity, self.thickness, self.c)
            .map_err(|e| CliError::Config(format!("fields `S`, `K`, `D`, `c`: {e}")))
    }

    pub fn grid(&self) -> SpatialGrid {
        SpatialGrid::new(self.m).expect("validated grid")
    }

    pub fn boundary(&self) -> BoundaryConditions {
        let grid = self.grid();
        match self.initial.kind {
            InitialKind::Linear => BoundaryConditions::linear(&grid, self.phi_c, self.outer),
            InitialKind::Constant => {
                let v = self.initial.values.first().copied().unwrap_or(self.phi_c);
                BoundaryConditions::new(self.phi_c, self.outer, vec![v; grid.node_count()])
            }
            InitialKind::Custom => {
                BoundaryConditions::new(self.phi_c, self.outer, self.initial.values.clone())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub alpha: f64,
    pub field: HeadField,
}

fn solver_error(alpha: f64, e: AquiferError) -> CliError {
    match e {
        AquiferError::Breakdown { .. } | AquiferError::NonFinite { .. } => {
            CliError::Solver(format!("alpha = {alpha}: {e}"))
        }
        other => CliError::Config(other.to_string()),
    }
}

/// Runs every configured order; independent orders run on separate threads.
pub fn run(cfg: &SimulateConfig) -> Result<Vec<SimulationRun>, CliError> {
    let params = cfg.params()?;
    let grid = cfg.grid();
    let bc = cfg.boundary();
    let time = UniformTimeGrid::new(cfg.horizon, cfg.steps)
        .map_err(|e| CliError::Config(format!("fields `T`, `N`: {e}")))?;
    let options = SolverOptions {
        history_lag: cfg.history_lag,
    };
    std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .alpha
            .iter()
            .map(|&a| {
                let (bc, params) = (&bc, &params);
                scope.spawn(move || {
                    let alpha = FracOrder::new(a).expect("validated order");
                    aquifer::simulate(params, &grid, bc, alpha, time, options)
                        .map(|field| SimulationRun { alpha: a, field })
                        .map_err(|e| solver_error(a, e))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

fn column_name(alpha: f64, k: usize, single: bool) -> String {
    if single {
        format!("k{k}")
    } else {
        format!("alpha{alpha}_k{k}")
    }
}

/// `r` followed by one column per (order, snapshot).
pub fn profiles_csv(cfg: &SimulateConfig, runs: &[SimulationRun]) -> String {
    let single = runs.len() == 1;
    let mut header = vec!["r".to_string()];
    for run in runs {
        header.extend(
            cfg.snapshots
                .iter()
                .map(|&k| column_name(run.alpha, k, single)),
        );
    }
    let mut out = header.join(",");
    out.push('\n');
    let grid = cfg.grid();
    for node in grid.nodes() {
        let mut line = vec![fmt_float(grid.radius(node))];
        for run in runs {
            line.extend(
                cfg.snapshots
                    .iter()
                    .map(|&k| fmt_float(run.field.at(k, node))),
            );
        }
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn profile(run: &SimulationRun, k: usize) -> Vec<(f64, f64)> {
    run.field
        .radii()
        .into_iter()
        .zip(run.field.row(k).iter().copied())
        .collect()
}

/// Three figure layouts: snapshots at one order, orders at one snapshot, and
/// the last two snapshots at the last order.
pub fn figures(cfg: &SimulateConfig, runs: &[SimulationRun]) -> Vec<(String, String)> {
    let first = &runs[0];
    let last_run = &runs[runs.len() - 1];
    let k_last = *cfg.snapshots.last().expect("validated snapshots");
    let late: Vec<usize> = cfg.snapshots.iter().rev().take(2).rev().copied().collect();
    let head = |title: String, series: Vec<Series>| LinePlot {
        title,
        x_label: "r".into(),
        y_label: "head".into(),
        series,
    };

    let fig_a = head(
        format!("Head profiles, alpha = {}", first.alpha),
        cfg.snapshots
            .iter()
            .enumerate()
            .map(|(i, &k)| Series {
                label: format!("k = {k}"),
                color: palette(i),
                points: profile(first, k),
            })
            .collect(),
    );
    let fig_b = head(
        format!("Head profiles, k = {k_last}"),
        runs.iter()
            .enumerate()
            .map(|(i, run)| Series {
                label: format!("alpha = {}", run.alpha),
                color: palette(i),
                points: profile(run, k_last),
            })
            .collect(),
    );
    let fig_c = head(
        format!("Head profiles, alpha = {}", last_run.alpha),
        late.iter()
            .enumerate()
            .map(|(i, &k)| Series {
                label: format!("k = {k}"),
                color: palette(i),
                points: profile(last_run, k),
            })
            .collect(),
    );
    vec![
        ("fig_a.svg".into(), fig_a.render()),
        ("fig_b.svg".into(), fig_b.render()),
        ("fig_c.svg".into(), fig_c.render()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(alpha: Vec<f64>) -> SimulateConfig {
        SimulateConfig {
            alpha,
            horizon: 1.0,
            m: 20,
            steps: 30,
            storage: 1.0,
            conductivity: 1.0,
            thickness: 1.0,
            c: 1.0,
            phi_c: 0.0,
            outer: 1.0,
            initial: InitialSpec {
                kind: InitialKind::Linear,
                values: vec![],
            },
            snapshots: vec![0, 10, 30],
            history_lag: false,
        }
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let cfg = small(vec![0.5]);
        let runs = run(&cfg).unwrap();
        let csv = profiles_csv(&cfg, &runs);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "r,k0,k10,k30");
        assert_eq!(lines.len(), 1 + cfg.m);
        assert!(lines[1].starts_with("0.05,0.0,"));
        assert!(lines[cfg.m].starts_with("1.0,1.0,1.0,1.0"));
    }

    #[test]
    fn multi_order_columns_are_prefixed() {
        let cfg = small(vec![0.5, 0.9]);
        let runs = run(&cfg).unwrap();
        let header = profiles_csv(&cfg, &runs)
            .lines()
            .next()
            .unwrap()
            .to_string();
        assert!(header.starts_with("r,alpha0.5_k0,") && header.ends_with("alpha0.9_k30"));
        let interior = cfg.m / 2;
        assert!(runs[0].field.at(30, interior) != runs[1].field.at(30, interior));
    }

    #[test]
    fn custom_profile_length_checked() {
        let mut cfg = small(vec![0.5]);
        cfg.initial = InitialSpec {
            kind: InitialKind::Custom,
            values: vec![0.0; 5],
        };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("initial.values"), "{msg}");
    }

    #[test]
    fn snapshot_past_horizon_rejected() {
        let mut cfg = small(vec![0.5]);
        cfg.snapshots = vec![0, 31];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn figures_use_expected_series() {
        let cfg = small(vec![0.5, 0.9]);
        let runs = run(&cfg).unwrap();
        let figs = figures(&cfg, &runs);
        let count = |name: &str| {
            figs.iter()
                .find(|(n, _)| n == name)
                .map(|(_, s)| s.matches("<polyline").count())
                .unwrap()
        };
        assert_eq!(
            (count("fig_a.svg"), count("fig_b.svg"), count("fig_c.svg")),
            (3, 2, 2)
        );
    }
}
