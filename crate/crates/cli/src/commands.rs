//! Subcommands and the pipelines behind them. Each pipeline returns its
//! files in memory; writing them is left to a single collector.

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use csd_core::fenichel::{self, FenichelConfig, FenichelMatcher};
use csd_core::integrate::IntegratorConfig;
use csd_core::io::csv_table;
use csd_core::manifold::{eigen_vs_c_csv, Branch, CriticalManifold, Equilibrium};
use csd_core::param_manifold::{
    invariance_error_csv, sweep_csv, MatchConfig, ParamMatcher, DEFAULT_ORDER, DEFAULT_THRESHOLD,
};
use csd_core::pde::{
    estimate_speed, simulate, InitialState, Injection, NetworkConfig, NetworkModel, NetworkTrajectory,
    DEFAULT_INJECTION_RATE, DEFAULT_THRESHOLD as VOLTAGE_THRESHOLD,
};
use csd_core::singular::SingularShooter;
use csd_core::ParameterSet;

use crate::config::{fill, parse_list, parse_pair, RunConfig};

/// Files produced by a pipeline, as (relative path, contents), plus the
/// key results for the manifest.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<(String, String)>,
    pub results: Value,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Ten-variable neuron-astrocyte network.
    SimulateFull(SimulateArgs),
    /// Three-variable (V_N, V_A, [K⁺]_e) network.
    SimulateReduced(SimulateArgs),
    /// [K⁺]_e-only network with voltages slaved to the critical manifold.
    SimulateInstant(SimulateArgs),
    /// Critical manifold, folds, equilibria and eigenvalue tables.
    ManifoldDissect(DissectArgs),
    /// Wave speed c₀ of the singular heteroclinic.
    SingularSpeed(SingularArgs),
    /// Wave speed from the parameterized stable manifold.
    ParamSpeed(ParamArgs),
    /// Wave speed from the slow-manifold expansion.
    FenichelSpeed(FenichelArgs),
    /// Network speed for several array sizes.
    SpeedTable(TableArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SimulateFull(_) => "simulate-full",
            Command::SimulateReduced(_) => "simulate-reduced",
            Command::SimulateInstant(_) => "simulate-instant",
            Command::ManifoldDissect(_) => "manifold-dissect",
            Command::SingularSpeed(_) => "singular-speed",
            Command::ParamSpeed(_) => "param-speed",
            Command::FenichelSpeed(_) => "fenichel-speed",
            Command::SpeedTable(_) => "speed-table",
        }
    }

    /// Fills every setting not given as a flag from the config, then from
    /// the defaults, so the command serializes with all values explicit.
    pub fn resolve(&mut self, cfg: &RunConfig, p: &ParameterSet) -> Result<()> {
        match self {
            Command::SimulateFull(a) | Command::SimulateReduced(a) | Command::SimulateInstant(a) => a.resolve(cfg, p),
            Command::ManifoldDissect(a) => a.resolve(cfg),
            Command::SingularSpeed(a) => a.resolve(cfg),
            Command::ParamSpeed(a) => a.resolve(cfg),
            Command::FenichelSpeed(a) => a.resolve(cfg),
            Command::SpeedTable(a) => a.resolve(cfg),
        }
    }

    /// Runs a resolved command.
    pub fn execute(&self, p: &ParameterSet) -> Result<Outcome> {
        match self {
            Command::SimulateFull(a) => a.execute(NetworkModel::Full10, p),
            Command::SimulateReduced(a) => a.execute(NetworkModel::Reduced3, p),
            Command::SimulateInstant(a) => a.execute(NetworkModel::Instantaneous1, p),
            Command::ManifoldDissect(a) => a.execute(p),
            Command::SingularSpeed(a) => a.execute(p),
            Command::ParamSpeed(a) => a.execute(p),
            Command::FenichelSpeed(a) => a.execute(p),
            Command::SpeedTable(a) => a.execute(p),
        }
    }
}

fn critical_manifold(p: &ParameterSet) -> Result<CriticalManifold> {
    CriticalManifold::new(p).context("manifold::find_folds")
}

/// End time scaled so the front reaches the boundary of an n-cell array.
pub fn default_t_end(n: usize) -> f64 {
    (800.0 * n as f64).max(30_000.0)
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Number of cells.
    #[arg(long)]
    pub cells: Option<usize>,
    /// Simulated time (ms).
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Output sampling interval (ms).
    #[arg(long)]
    pub sample_dt: Option<f64>,
    /// K⁺ injection into the middle four cells (mM/ms).
    #[arg(long)]
    pub injection_rate: Option<f64>,
    /// Boundary [K⁺]_e (mM).
    #[arg(long)]
    pub boundary: Option<f64>,
    /// `rest` or an initial [K⁺]_e in mM.
    #[arg(long)]
    pub initial: Option<String>,
    /// Relative tolerance of the time integration.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Cells used for the speed estimate.
    #[arg(long, value_parser = parse_pair::<usize>)]
    pub pair: Option<(usize, usize)>,
    /// Voltage threshold for injection stop and crossing times (mV).
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
}

impl SimulateArgs {
    fn resolve(&mut self, cfg: &RunConfig, p: &ParameterSet) -> Result<()> {
        fill(&mut self.cells, cfg.get("cells")?, || 50);
        let n = self.cells.unwrap();
        fill(&mut self.t_end, cfg.get("t_end")?, || default_t_end(n));
        fill(&mut self.sample_dt, cfg.get("sample_dt")?, || 5.0);
        fill(&mut self.injection_rate, cfg.get("injection_rate")?, || DEFAULT_INJECTION_RATE);
        fill(&mut self.boundary, cfg.get("boundary")?, || p.k_e_rest);
        fill(&mut self.initial, cfg.get("initial")?, || p.k_e_rest.to_string());
        fill(&mut self.tol, cfg.get("tol")?, || IntegratorConfig::pde().rel_tol);
        let pair = cfg.get::<String>("pair")?.map(|s| parse_pair(&s)).transpose().map_err(anyhow::Error::msg)?;
        fill(&mut self.pair, pair, || (10, 20));
        fill(&mut self.threshold, cfg.get("threshold")?, || VOLTAGE_THRESHOLD);
        Ok(())
    }

    pub fn network_config(&self, model: NetworkModel, p: &ParameterSet) -> Result<NetworkConfig> {
        let n = self.cells.context("unresolved settings")?;
        let mut cfg = NetworkConfig::new(n, model, p);
        cfg.t_end = self.t_end.unwrap();
        cfg.sample_dt = self.sample_dt.unwrap();
        cfg.k_e_boundary = self.boundary.unwrap();
        let threshold = self.threshold.unwrap();
        cfg.injection = Injection { stop_voltage: threshold, ..Injection::middle(n, self.injection_rate.unwrap()) };
        cfg.initial = match self.initial.as_deref().unwrap().trim() {
            "rest" => InitialState::Rest,
            v => InitialState::Clamped(v.parse().with_context(|| format!("initial state `{v}`"))?),
        };
        cfg.validate().context("pde_sim::validate")?;
        Ok(cfg)
    }

    fn execute(&self, model: NetworkModel, p: &ParameterSet) -> Result<Outcome> {
        let cfg = self.network_config(model, p)?;
        let icfg = IntegratorConfig { rel_tol: self.tol.unwrap(), abs_tol: 1e-2 * self.tol.unwrap(), ..IntegratorConfig::pde() };
        let traj = simulate(&cfg, p, &icfg).context("pde_sim::simulate")?;
        let threshold = self.threshold.unwrap();
        let (a, b) = self.pair.unwrap();
        let speed = estimate_speed(&traj, a, b, threshold).ok();
        let mut files: Vec<(String, String)> =
            traj.var_names.iter().enumerate().map(|(i, v)| (format!("{v}.csv"), traj.field_csv(i))).collect();
        files.push(("crossing_times.csv".into(), crossing_csv(&traj, threshold)));
        let sidecar = json!({
            "model": model.to_string(),
            "variables": traj.var_names,
            "units": traj.var_names.iter().map(|v| if v.starts_with("V_") { "mV" } else { "mM" }).collect::<Vec<_>>(),
            "layout": "rows are sample times (first column t in ms), columns are cells 1..N",
            "network": cfg,
            "samples": traj.t.len(),
            "injection_stop_ms": traj.injection_stop,
        });
        files.push(("trajectory.json".into(), serde_json::to_string_pretty(&sidecar)?));
        Ok(Outcome {
            files,
            results: json!({
                "speed_mm_per_min": speed,
                "speed_pair": [a, b],
                "depolarized_cells": traj.depolarized_cells(threshold),
                "n_cells": cfg.n_cells,
            }),
        })
    }
}

fn crossing_csv(traj: &NetworkTrajectory, threshold: f64) -> String {
    let rows = (1..=traj.config.n_cells).map(|c| [c as f64, traj.crossing_time(c, threshold).unwrap_or(f64::NAN)]);
    csv_table(&["cell", "t_cross_ms"], rows)
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct DissectArgs {
    /// Grid size for branch and eigenvalue tables.
    #[arg(long)]
    pub z_points: Option<usize>,
    /// Wave speed used for eigenvalue tables and classification.
    #[arg(long)]
    pub c: Option<f64>,
}

impl DissectArgs {
    fn resolve(&mut self, cfg: &RunConfig) -> Result<()> {
        fill(&mut self.z_points, cfg.get("z_points")?, || 400);
        fill(&mut self.c, cfg.get("c")?, || 0.0731);
        Ok(())
    }

    fn execute(&self, p: &ParameterSet) -> Result<Outcome> {
        let cm = critical_manifold(p)?;
        let eqs = cm.find_equilibria().context("manifold::find_equilibria")?;
        let c = self.c.unwrap();
        let n = self.z_points.unwrap().max(2);
        let (_, zmax) = cm.domain(Branch::R);
        // the voltage branches lose their roots just below the K⁺ depletion limit
        let zs: Vec<f64> = (0..n).map(|i| 0.99 * zmax * (i as f64 + 0.5) / n as f64).collect();
        let mut files = vec![
            ("equilibria.csv".to_string(), equilibria_csv(&eqs)),
            ("h_star.csv".to_string(), cm.h_star_csv(&zs)),
            ("eigen_vs_z.csv".to_string(), cm.eigen_vs_z_csv(&zs, c)),
        ];
        let cs: Vec<f64> = (0..=40).map(|i| 0.2 * i as f64 / 40.0).collect();
        files.push(("eigen_vs_c.csv".into(), eigen_vs_c_csv(&eqs, &cs)));
        for b in [Branch::L, Branch::M, Branch::R] {
            let t = cm.branch_table(b, &zs).with_context(|| format!("manifold::branch_table({b})"))?;
            files.push((format!("branch_{b}.csv"), t.to_csv()));
        }
        let eq_json: Vec<Value> = eqs
            .iter()
            .map(|e| {
                json!({
                    "label": e.label,
                    "branch": e.branch,
                    "x": e.x, "y": e.y, "z": e.z,
                    "residual": e.residual,
                    "stability": e.classify(c),
                    "fast_eigenvalues": e.fast_eigenvalues(c),
                })
            })
            .collect();
        Ok(Outcome { files, results: json!({ "equilibria": eq_json, "folds": cm.folds, "c": c }) })
    }
}

fn equilibria_csv(eqs: &[Equilibrium]) -> String {
    let mut s = String::from("label,branch,x,y,z,dh_dz,f_x,g_y,residual\n");
    for e in eqs {
        s.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            e.label, e.branch, e.x, e.y, e.z, e.dh_dz, e.f_x, e.g_y, e.residual
        ));
    }
    s
}

fn bracket_from(cfg: &RunConfig) -> Result<Option<(f64, f64)>> {
    cfg.get::<String>("c_bracket")?.map(|s| parse_pair(&s)).transpose().map_err(anyhow::Error::msg)
}

/// c-grid across a bracket; empty when `n` is 0.
fn grid(bracket: (f64, f64), n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (bracket.0 + bracket.1)],
        _ => (0..n).map(|i| bracket.0 + (bracket.1 - bracket.0) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn history_csv(h: &[(f64, f64)]) -> String {
    csv_table(&["c", "residual"], h.iter().map(|&(c, r)| [c, r]))
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct SingularArgs {
    /// Search interval for c, as lo,hi.
    #[arg(long, value_parser = parse_pair::<f64>)]
    pub c_bracket: Option<(f64, f64)>,
    /// Shots across the bracket before the secant refinement.
    #[arg(long)]
    pub samples: Option<usize>,
}

impl SingularArgs {
    fn resolve(&mut self, cfg: &RunConfig) -> Result<()> {
        fill(&mut self.c_bracket, bracket_from(cfg)?, || (0.04, 0.09));
        fill(&mut self.samples, cfg.get("samples")?, || 11);
        Ok(())
    }

    fn execute(&self, p: &ParameterSet) -> Result<Outcome> {
        let cm = critical_manifold(p)?;
        let shooter = SingularShooter::new(&cm).context("singular_shoot::setup")?;
        let (lo, hi) = self.c_bracket.unwrap();
        let r = shooter.find_c0(lo, hi, self.samples.unwrap()).context("singular_shoot::find_c0")?;
        Ok(Outcome {
            files: vec![
                ("distance.csv".into(), r.distance_csv()),
                ("orbit.csv".into(), r.result.orbit_csv()),
                ("secant.csv".into(), history_csv(&r.history)),
            ],
            results: json!({
                "c0": r.c0,
                "velocity_mm_per_min": p.velocity_mm_per_min(r.c0),
                "distance": r.d,
                "fold_z": cm.folds.right.z,
            }),
        })
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamArgs {
    /// Secant starting points for c, as lo,hi.
    #[arg(long, value_parser = parse_pair::<f64>)]
    pub c_bracket: Option<(f64, f64)>,
    /// Truncation order K of the manifold parameterization.
    #[arg(long)]
    pub order: Option<usize>,
    /// Invariance-error bound used to pick the parameter s*.
    #[arg(long)]
    pub error_threshold: Option<f64>,
    /// Relative tolerance of the manifold integrations.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Points of the section-hit sweep across the bracket (0 to skip).
    #[arg(long)]
    pub sweep: Option<usize>,
}

impl ParamArgs {
    fn resolve(&mut self, cfg: &RunConfig) -> Result<()> {
        fill(&mut self.c_bracket, bracket_from(cfg)?, || (0.06, 0.1));
        fill(&mut self.order, cfg.get("order")?, || DEFAULT_ORDER);
        fill(&mut self.error_threshold, cfg.get("error_threshold")?, || DEFAULT_THRESHOLD);
        fill(&mut self.tol, cfg.get("tol")?, || MatchConfig::default().rel_tol);
        fill(&mut self.sweep, cfg.get("sweep")?, || 7);
        Ok(())
    }

    pub fn match_config(&self) -> MatchConfig {
        let tol = self.tol.unwrap();
        MatchConfig {
            order: self.order.unwrap(),
            threshold: self.error_threshold.unwrap(),
            rel_tol: tol,
            abs_tol: 1e-2 * tol,
            ..MatchConfig::default()
        }
    }

    fn execute(&self, p: &ParameterSet) -> Result<Outcome> {
        let cm = critical_manifold(p)?;
        let m = ParamMatcher::new(&cm, self.match_config()).context("param_manifold::setup")?;
        let (lo, hi) = self.c_bracket.unwrap();
        let fit = m.find_c_hat(lo, hi).context("param_manifold::find_c_hat")?;
        let pm = m.parameterization(fit.c).context("param_manifold::compute_coefficients")?;
        let sweep = m.sweep(&grid((lo, hi), self.sweep.unwrap()));
        Ok(Outcome {
            files: vec![
                ("section_hits.csv".into(), sweep_csv(&sweep)),
                ("invariance_error.csv".into(), invariance_error_csv(&pm, p)),
                ("orbit.csv".into(), fit.matched.orbit_csv()),
                ("secant.csv".into(), history_csv(&fit.history)),
            ],
            results: json!({
                "c_hat": fit.c,
                "velocity_mm_per_min": fit.velocity_mm_per_min,
                "s_star": fit.matched.s_star,
                "mismatch": fit.matched.mismatch,
                "lambda": pm.lambda,
            }),
        })
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct FenichelArgs {
    /// Secant starting points for c, as lo,hi.
    #[arg(long, value_parser = parse_pair::<f64>)]
    pub c_bracket: Option<(f64, f64)>,
    /// Relative tolerance of the restricted-flow integration.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Points of the section-distance sweep across the bracket (0 to skip).
    #[arg(long)]
    pub sweep: Option<usize>,
}

impl FenichelArgs {
    fn resolve(&mut self, cfg: &RunConfig) -> Result<()> {
        fill(&mut self.c_bracket, bracket_from(cfg)?, || (0.06, 0.1));
        fill(&mut self.tol, cfg.get("tol")?, || FenichelConfig::default().rel_tol);
        fill(&mut self.sweep, cfg.get("sweep")?, || 7);
        Ok(())
    }

    pub fn fenichel_config(&self) -> FenichelConfig {
        let tol = self.tol.unwrap();
        FenichelConfig { rel_tol: tol, abs_tol: 1e-2 * tol, ..FenichelConfig::default() }
    }

    fn execute(&self, p: &ParameterSet) -> Result<Outcome> {
        let cm = critical_manifold(p)?;
        let m = FenichelMatcher::new(&cm, self.fenichel_config()).context("fenichel_reduction::setup")?;
        let (lo, hi) = self.c_bracket.unwrap();
        let fit = m.find_c_tilde(lo, hi).context("fenichel_reduction::find_c_tilde")?;
        let sweep = m.sweep(&grid((lo, hi), self.sweep.unwrap()));
        Ok(Outcome {
            files: vec![
                ("distance.csv".into(), fenichel::distance_csv(&sweep)),
                ("orbit.csv".into(), fit.matched.orbit_csv()),
                ("secant.csv".into(), history_csv(&fit.history)),
            ],
            results: json!({
                "c_tilde": fit.c,
                "velocity_mm_per_min": fit.velocity_mm_per_min,
                "mismatch": fit.matched.mismatch,
            }),
        })
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct TableArgs {
    /// Array sizes, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// full10, reduced3 or instantaneous1.
    #[arg(long)]
    pub model: Option<NetworkModel>,
    /// Cells used for the speed estimate.
    #[arg(long, value_parser = parse_pair::<usize>)]
    pub pair: Option<(usize, usize)>,
    /// Relative tolerance of the time integration.
    #[arg(long)]
    pub tol: Option<f64>,
}

impl TableArgs {
    fn resolve(&mut self, cfg: &RunConfig) -> Result<()> {
        let sizes = cfg.get::<String>("sizes")?.map(|s| parse_list(&s)).transpose().map_err(anyhow::Error::msg)?;
        fill(&mut self.sizes, sizes, || vec![50, 100]);
        fill(&mut self.model, cfg.get("model")?, || NetworkModel::Reduced3);
        let pair = cfg.get::<String>("pair")?.map(|s| parse_pair(&s)).transpose().map_err(anyhow::Error::msg)?;
        fill(&mut self.pair, pair, || (10, 20));
        fill(&mut self.tol, cfg.get("tol")?, || IntegratorConfig::pde().rel_tol);
        Ok(())
    }

    fn execute(&self, p: &ParameterSet) -> Result<Outcome> {
        let model = self.model.unwrap();
        let (a, b) = self.pair.unwrap();
        let tol = self.tol.unwrap();
        let icfg = IntegratorConfig { rel_tol: tol, abs_tol: 1e-2 * tol, ..IntegratorConfig::pde() };
        let rows: Vec<(usize, f64, f64)> = self
            .sizes
            .as_ref()
            .unwrap()
            .par_iter()
            .map(|&n| -> Result<(usize, f64, f64)> {
                let mut cfg = NetworkConfig::new(n, model, p);
                cfg.t_end = default_t_end(n);
                cfg.validate().context("pde_sim::validate")?;
                let traj = simulate(&cfg, p, &icfg).with_context(|| format!("pde_sim::simulate(N = {n})"))?;
                let v = estimate_speed(&traj, a, b, VOLTAGE_THRESHOLD)
                    .with_context(|| format!("pde_sim::estimate_speed(N = {n})"))?;
                Ok((n, v, cfg.t_end))
            })
            .collect::<Result<_>>()?;
        let csv = csv_table(&["n_cells", "speed_mm_per_min", "t_end_ms"], rows.iter().map(|&(n, v, t)| [n as f64, v, t]));
        let speeds: Vec<Value> = rows.iter().map(|&(n, v, _)| json!({ "n_cells": n, "speed_mm_per_min": v })).collect();
        Ok(Outcome { files: vec![("speed_table.csv".into(), csv)], results: json!({ "model": model, "speeds": speeds }) })
    }
}
