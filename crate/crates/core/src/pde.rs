//! Method-of-lines network of neuron-astrocyte pairs on a 1D array with
//! Dirichlet boundaries, K⁺ injection, and front-speed estimation.

use std::cell::RefCell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{IntegratorConfig, Jacobian, OdeSystem, Stepper};
use crate::io::csv_table;
use crate::linalg::BandMatrix;
use crate::manifold::{equilibrium_newton, f_roots, y_solve};
use crate::model::{
    f_partials, f_tilde, first_partials, full, full_model_rhs, g_partials, g_tilde, gating_inf, h, k_i_of_z, Gate,
};
use crate::ParameterSet;

pub const DEFAULT_THRESHOLD: f64 = -30.0;
pub const DEFAULT_INJECTION_RATE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkModel {
    /// All ten variables per pair, with K⁺ and Na⁺ diffusion.
    Full10,
    /// (V_N, V_A, [K⁺]_e) per pair.
    Reduced3,
    /// [K⁺]_e only; the voltages sit on the critical manifold.
    Instantaneous1,
}

impl NetworkModel {
    /// Number of integrated variables per cell.
    pub fn state_vars(self) -> usize {
        match self {
            NetworkModel::Full10 => 10,
            NetworkModel::Reduced3 => 3,
            NetworkModel::Instantaneous1 => 1,
        }
    }

    /// Names of the recorded variables per cell.
    pub fn recorded(self) -> &'static [&'static str] {
        match self {
            NetworkModel::Full10 => &full::NAMES,
            _ => &["V_N", "V_A", "K_e"],
        }
    }
}

impl fmt::Display for NetworkModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetworkModel::Full10 => "full10",
            NetworkModel::Reduced3 => "reduced3",
            NetworkModel::Instantaneous1 => "instantaneous1",
        })
    }
}

impl FromStr for NetworkModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full10" => Ok(NetworkModel::Full10),
            "reduced3" => Ok(NetworkModel::Reduced3),
            "instantaneous1" => Ok(NetworkModel::Instantaneous1),
            _ => Err(Error::Config(format!("unknown network model '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    /// 1-based cell indices.
    pub cells: Vec<usize>,
    /// mM/ms added to d[K⁺]_e/dt.
    pub rate: f64,
    /// Injection into a cell stops for good once its V_N reaches this (mV).
    pub stop_voltage: f64,
}

impl Injection {
    /// The middle four cells of an n-cell array.
    pub fn middle(n: usize, rate: f64) -> Self {
        let first = n / 2 - 1;
        Injection { cells: (first..first + 4).collect(), rate, stop_voltage: DEFAULT_THRESHOLD }
    }
}

/// Interior K⁺ level the network starts from. The reduced reaction terms
/// vanish only at p_l1 ([K⁺]_e ≈ 11); simulations of healthy tissue start
/// from the nominal 3.5 mM with the voltages on their rest branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// Equilibrium of the reaction terms.
    Rest,
    /// [K⁺]_e at the given value with the voltages relaxed onto it.
    Clamped(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_cells: usize,
    /// Cell spacing (mm).
    pub dx: f64,
    pub model: NetworkModel,
    pub k_e_boundary: f64,
    pub na_e_boundary: f64,
    pub injection: Injection,
    pub initial: InitialState,
    /// ms.
    pub t_end: f64,
    /// Output sampling interval (ms).
    pub sample_dt: f64,
}

impl NetworkConfig {
    pub fn new(n_cells: usize, model: NetworkModel, p: &ParameterSet) -> Self {
        NetworkConfig {
            n_cells,
            dx: p.dx,
            model,
            k_e_boundary: p.k_e_rest,
            na_e_boundary: p.na_e,
            injection: Injection::middle(n_cells.max(4), DEFAULT_INJECTION_RATE),
            initial: InitialState::Clamped(p.k_e_rest),
            t_end: 30_000.0,
            sample_dt: 5.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells < 3 {
            return Err(Error::Config(format!("network needs at least 3 cells, got {}", self.n_cells)));
        }
        if !(self.dx > 0.0) {
            return Err(Error::Config(format!("cell spacing must be positive, got {}", self.dx)));
        }
        if let Some(&c) = self.injection.cells.iter().find(|&&c| c < 1 || c > self.n_cells) {
            return Err(Error::Config(format!("injection cell {c} outside 1..={}", self.n_cells)));
        }
        if !(self.t_end > 0.0 && self.sample_dt > 0.0) {
            return Err(Error::Config("simulation time and sampling interval must be positive".into()));
        }
        if !(self.k_e_boundary > 0.0 && self.na_e_boundary > 0.0) {
            return Err(Error::Config("boundary concentrations must be positive".into()));
        }
        Ok(())
    }
}

/// Second difference with Dirichlet values standing in for the missing
/// neighbors at both ends.
pub fn laplacian_term(u: &[f64], boundary: f64, dx: f64) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    laplacian_strided(u, 0, 1, boundary, dx * dx, |i, v| out[i] = v);
    out
}

fn laplacian_strided(u: &[f64], offset: usize, stride: usize, boundary: f64, dx2: f64, mut put: impl FnMut(usize, f64)) {
    let n = u.len() / stride;
    let at = |i: usize| u[i * stride + offset];
    for i in 0..n {
        let left = if i == 0 { boundary } else { at(i - 1) };
        let right = if i + 1 == n { boundary } else { at(i + 1) };
        put(i, (right - 2.0 * at(i) + left) / dx2);
    }
}

/// Stable root of f̃(·, z) nearest `seed`: Newton first, full root scan
/// when Newton wanders onto the middle branch or fails.
fn stable_x(z: f64, seed: f64, p: &ParameterSet) -> Result<f64> {
    let mut x = seed;
    for _ in 0..30 {
        let (fx, _) = f_partials(x, z, p)?;
        let step = f_tilde(&x, &z, p)? / fx;
        x -= step;
        if step.abs() < 1e-11 * x.abs().max(1.0) {
            if f_partials(x, z, p)?.0 < 0.0 && (x - seed).abs() < 5.0 {
                return Ok(x);
            }
            break;
        }
    }
    let mut best: Option<f64> = None;
    for r in f_roots(z, p)? {
        if f_partials(r, z, p)?.0 < 0.0 && best.is_none_or(|b| (r - seed).abs() < (b - seed).abs()) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| Error::domain("stable_x", format!("no stable voltage at [K+]_e = {z}")))
}

fn stable_y(z: f64, seed: f64, p: &ParameterSet) -> Result<f64> {
    let mut y = seed;
    for _ in 0..30 {
        let step = g_tilde(&y, &z, p)? / g_partials(y, z, p)?.0;
        y -= step;
        if step.abs() < 1e-11 * y.abs().max(1.0) {
            return Ok(y);
        }
    }
    y_solve(z, p)
}

/// Per-cell state at rest for the chosen model.
pub fn rest_state(model: NetworkModel, initial: InitialState, p: &ParameterSet) -> Result<Vec<f64>> {
    let (x, y, z) = match initial {
        InitialState::Rest => {
            let [x, y, z] = equilibrium_newton(&[-67.0, -63.0, 11.0], p)?;
            (x, y, z)
        }
        InitialState::Clamped(z) => {
            let x = stable_x(z, -70.0, p)?;
            (x, y_solve(z, p)?, z)
        }
    };
    Ok(match model {
        NetworkModel::Reduced3 => vec![x, y, z],
        NetworkModel::Instantaneous1 => vec![z],
        NetworkModel::Full10 => full_rest(x, y, z, initial, p)?,
    })
}

/// Full-model rest: [K⁺]_e, [Na⁺]_e and [K⁺]_i^A held, the other seven
/// variables solved from their own equations. The astrocyte voltage
/// equation is a combination of its two ion equations, so the held [K⁺]_i^A
/// equation and, by conservation, the extracellular ones vanish too.
fn full_rest(x: f64, y: f64, z: f64, initial: InitialState, p: &ParameterSet) -> Result<Vec<f64>> {
    use full::*;
    let z = if initial == InitialState::Rest { p.k_e_rest } else { z };
    let mut u = [0.0; 10];
    u[V_N] = x;
    u[V_A] = y;
    u[N] = gating_inf(&x, Gate::N, p);
    u[HP] = gating_inf(&x, Gate::Hp, p);
    u[NA_I] = p.na_i;
    u[NA_I_A] = p.na_i_a;
    u[K_I] = k_i_of_z(&z, p);
    u[K_I_A] = p.k_i_a;
    u[NA_E] = p.na_e;
    u[K_E] = z;
    let free = [V_N, V_A, N, HP, NA_I, NA_I_A, K_I];
    for _ in 0..50 {
        let f0 = full_model_rhs(&u, p)?;
        let r: Vec<f64> = free.iter().map(|&i| f0[i]).collect();
        if r.iter().all(|v| v.abs() < 1e-13) {
            return Ok(u.to_vec());
        }
        let mut jac = nalgebra::DMatrix::zeros(free.len(), free.len());
        for (col, &j) in free.iter().enumerate() {
            let d = 1e-7 * u[j].abs().max(1e-3);
            let mut up = u;
            up[j] += d;
            let fp = full_model_rhs(&up, p)?;
            for (row, &i) in free.iter().enumerate() {
                jac[(row, col)] = (fp[i] - f0[i]) / d;
            }
        }
        let step = crate::linalg::dense_solve(&jac, &r, "full rest state")?;
        for (k, &j) in free.iter().enumerate() {
            u[j] -= step[k];
        }
        if step.iter().zip(&free).all(|(s, &j)| s.abs() < 1e-12 * u[j].abs().max(1.0)) {
            return Ok(u.to_vec());
        }
    }
    Err(Error::NoConvergence { op: "full_rest", iterations: 50, residual: f64::NAN, best: u.to_vec() })
}

struct Network<'a> {
    p: &'a ParameterSet,
    model: NetworkModel,
    n: usize,
    dx2: f64,
    k_b: f64,
    na_b: f64,
    /// Current injection rate per cell (0-based).
    inject: RefCell<Vec<f64>>,
    /// Voltage seeds for the instantaneous model.
    seeds: RefCell<Vec<(f64, f64)>>,
}

impl Network<'_> {
    fn vars(&self) -> usize {
        self.model.state_vars()
    }

    fn k_index(&self) -> usize {
        match self.model {
            NetworkModel::Full10 => full::K_E,
            NetworkModel::Reduced3 => 2,
            NetworkModel::Instantaneous1 => 0,
        }
    }

    /// Voltages of the instantaneous model on the stable branches.
    fn voltages(&self, z: f64, cell: usize) -> Result<(f64, f64)> {
        let (sx, sy) = self.seeds.borrow()[cell];
        Ok((stable_x(z, sx, self.p)?, stable_y(z, sy, self.p)?))
    }

    fn update_seeds(&self, y: &[f64]) -> Result<()> {
        if self.model == NetworkModel::Instantaneous1 {
            for i in 0..self.n {
                let v = self.voltages(y[i], i)?;
                self.seeds.borrow_mut()[i] = v;
            }
        }
        Ok(())
    }

    fn v_n(&self, y: &[f64], cell: usize) -> Result<f64> {
        Ok(match self.model {
            NetworkModel::Instantaneous1 => self.voltages(y[cell], cell)?.0,
            _ => y[cell * self.vars()],
        })
    }

    /// Recorded variables of one cell.
    fn record(&self, y: &[f64], cell: usize) -> Result<Vec<f64>> {
        let m = self.vars();
        Ok(match self.model {
            NetworkModel::Instantaneous1 => {
                let (a, b) = self.voltages(y[cell], cell)?;
                vec![a, b, y[cell]]
            }
            _ => y[cell * m..(cell + 1) * m].to_vec(),
        })
    }
}

impl OdeSystem for Network<'_> {
    fn dim(&self) -> usize {
        self.n * self.vars()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let m = self.vars();
        let p = self.p;
        for i in 0..self.n {
            let u = &y[i * m..(i + 1) * m];
            let d = &mut dy[i * m..(i + 1) * m];
            match self.model {
                NetworkModel::Full10 => {
                    let uu: &[f64; 10] = u.try_into().expect("10 variables per cell");
                    d.copy_from_slice(&full_model_rhs(uu, p)?);
                }
                NetworkModel::Reduced3 => {
                    d[0] = f_tilde(&u[0], &u[2], p)?;
                    d[1] = g_tilde(&u[1], &u[2], p)?;
                    d[2] = h(&u[0], &u[1], &u[2], p)?;
                }
                NetworkModel::Instantaneous1 => {
                    let (a, b) = self.voltages(u[0], i)?;
                    d[0] = h(&a, &b, &u[0], p)?;
                }
            }
        }
        let ki = self.k_index();
        let dk = p.d_k_mm2_per_ms();
        laplacian_strided(y, ki, m, self.k_b, self.dx2, |i, v| dy[i * m + ki] += dk * v);
        if self.model == NetworkModel::Full10 {
            let dna = p.d_na_mm2_per_ms();
            laplacian_strided(y, full::NA_E, m, self.na_b, self.dx2, |i, v| dy[i * m + full::NA_E] += dna * v);
        }
        for (i, r) in self.inject.borrow().iter().enumerate() {
            dy[i * m + ki] += r;
        }
        Ok(())
    }

    fn jacobian(&self, _t: f64, y: &[f64]) -> Option<Result<Jacobian>> {
        let m = self.vars();
        let dk = self.p.d_k_mm2_per_ms() / self.dx2;
        let build = || -> Result<Jacobian> {
            let mut jac = BandMatrix::zeros(self.n * m, m, m);
            for i in 0..self.n {
                let b = i * m;
                match self.model {
                    NetworkModel::Reduced3 => {
                        let d = first_partials(y[b], y[b + 1], y[b + 2], self.p)?;
                        jac.set(b, b, d.f_x);
                        jac.set(b, b + 2, d.f_z);
                        jac.set(b + 1, b + 1, d.g_y);
                        jac.set(b + 1, b + 2, d.g_z);
                        jac.set(b + 2, b, d.h_x);
                        jac.set(b + 2, b + 1, d.h_y);
                        jac.set(b + 2, b + 2, d.h_z);
                    }
                    NetworkModel::Instantaneous1 => {
                        let (x, yv) = self.voltages(y[i], i)?;
                        let d = first_partials(x, yv, y[i], self.p)?;
                        let dh = d.h_x * (-d.f_z / d.f_x) + d.h_y * (-d.g_z / d.g_y) + d.h_z;
                        jac.set(i, i, dh);
                    }
                    NetworkModel::Full10 => unreachable!("full model uses the banded finite-difference Jacobian"),
                }
                let k = b + m - 1;
                jac.add(k, k, -2.0 * dk);
                if i > 0 {
                    jac.add(k, k - m, dk);
                }
                if i + 1 < self.n {
                    jac.add(k, k + m, dk);
                }
            }
            Ok(Jacobian::Banded(jac))
        };
        match self.model {
            NetworkModel::Full10 => None,
            _ => Some(build()),
        }
    }

    fn bandwidth(&self) -> Option<(usize, usize)> {
        Some((self.vars(), self.vars()))
    }
}

/// Sampled network run.
#[derive(Debug, Clone, Serialize)]
pub struct NetworkTrajectory {
    pub config: NetworkConfig,
    pub t: Vec<f64>,
    /// `states[k][cell][var]` at time `t[k]`.
    pub states: Vec<Vec<Vec<f64>>>,
    pub var_names: Vec<String>,
    /// Time at which injection stopped, per injected cell.
    pub injection_stop: Vec<(usize, Option<f64>)>,
}

impl NetworkTrajectory {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_names.iter().position(|v| v == name)
    }

    /// Space-time matrix of one variable: rows are samples, columns cells.
    pub fn field(&self, var: usize) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.iter().map(|c| c[var]).collect()).collect()
    }

    /// CSV with a time column and one column per cell (1-based labels).
    pub fn field_csv(&self, var: usize) -> String {
        let n = self.config.n_cells;
        let labels: Vec<String> = std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("cell{i}"))).collect();
        let header: Vec<&str> = labels.iter().map(String::as_str).collect();
        let rows = self.t.iter().zip(&self.states).map(|(t, s)| std::iter::once(*t).chain(s.iter().map(|c| c[var])).collect::<Vec<_>>());
        csv_table(&header, rows)
    }

    /// First upward crossing of V_N through `threshold` in a 1-based cell,
    /// linearly interpolated between samples.
    pub fn crossing_time(&self, cell: usize, threshold: f64) -> Option<f64> {
        let c = cell.checked_sub(1)?;
        let v = self.var_index("V_N")?;
        self.t.windows(2).zip(self.states.windows(2)).find_map(|(t, s)| {
            let (a, b) = (s[0].get(c)?[v], s[1].get(c)?[v]);
            (a < threshold && b >= threshold).then(|| t[0] + (threshold - a) / (b - a) * (t[1] - t[0]))
        })
    }

    /// Number of cells whose V_N crossed `threshold`.
    pub fn depolarized_cells(&self, threshold: f64) -> usize {
        (1..=self.config.n_cells).filter(|&c| self.crossing_time(c, threshold).is_some()).count()
    }
}

/// Front speed (mm/min) from the V_N crossing times of two cells.
pub fn estimate_speed(traj: &NetworkTrajectory, cell_a: usize, cell_b: usize, threshold: f64) -> Result<f64> {
    let time = |c| traj.crossing_time(c, threshold).ok_or(Error::NoWave { cell: c, threshold });
    let (ta, tb) = (time(cell_a)?, time(cell_b)?);
    if ta == tb {
        return Err(Error::domain("estimate_speed", format!("cells {cell_a} and {cell_b} cross simultaneously")));
    }
    let dist = cell_a.abs_diff(cell_b) as f64 * traj.config.dx;
    Ok(dist / (tb - ta).abs() * 60_000.0)
}

/// Integrates the network. Injection is latched off per cell at the first
/// time its V_N reaches the stop voltage; the integrator restarts there.
pub fn simulate(cfg: &NetworkConfig, p: &ParameterSet, icfg: &IntegratorConfig) -> Result<NetworkTrajectory> {
    cfg.validate()?;
    let n = cfg.n_cells;
    let cell0 = rest_state(cfg.model, cfg.initial, p)?;
    let y0: Vec<f64> = (0..n).flat_map(|_| cell0.iter().copied()).collect();
    let mut inject = vec![0.0; n];
    for &c in &cfg.injection.cells {
        inject[c - 1] = cfg.injection.rate;
    }
    let seed = match cfg.model {
        NetworkModel::Instantaneous1 => {
            let z = cell0[0];
            let x = stable_x(z, -70.0, p)?;
            (x, y_solve(z, p)?)
        }
        _ => (0.0, 0.0),
    };
    let net = Network {
        p,
        model: cfg.model,
        n,
        dx2: cfg.dx * cfg.dx,
        k_b: cfg.k_e_boundary,
        na_b: cfg.na_e_boundary,
        inject: RefCell::new(inject),
        seeds: RefCell::new(vec![seed; n]),
    };
    let icfg = IntegratorConfig { stiff: true, ..icfg.clone() };
    let mut st = Stepper::new(&net, 0.0, &y0, cfg.t_end, &icfg)?;
    let mut out = NetworkTrajectory {
        config: cfg.clone(),
        t: vec![],
        states: vec![],
        var_names: cfg.model.recorded().iter().map(|s| s.to_string()).collect(),
        injection_stop: cfg.injection.cells.iter().map(|&c| (c, None)).collect(),
    };
    let record = |out: &mut NetworkTrajectory, t: f64, y: &[f64]| -> Result<()> {
        let cells = (0..n).map(|i| net.record(y, i)).collect::<Result<Vec<_>>>()?;
        out.t.push(t);
        out.states.push(cells);
        Ok(())
    };
    record(&mut out, 0.0, &y0)?;
    let mut next_sample = cfg.sample_dt;
    let sim_err = |t: f64, e: Error| match e {
        e @ (Error::StepUnderflow { .. } | Error::StepBudget { .. }) => e,
        other => Error::Simulation { t, detail: other.to_string() },
    };
    while !st.done() {
        let t_prev = st.t();
        st.step().map_err(|e| sim_err(t_prev, e))?;
        let seg = st.segment().expect("accepted step has an interpolant").clone();
        // earliest injection cutoff inside this step
        let mut cut: Option<f64> = None;
        for (k, &c) in cfg.injection.cells.iter().enumerate() {
            if out.injection_stop[k].1.is_some() || net.inject.borrow()[c - 1] == 0.0 {
                continue;
            }
            let v_at = |t: f64| net.v_n(&seg.eval(t), c - 1);
            if v_at(seg.t1)? >= cfg.injection.stop_voltage {
                let (mut lo, mut hi) = (seg.t0, seg.t1);
                if v_at(lo)? >= cfg.injection.stop_voltage {
                    hi = lo;
                }
                while hi - lo > 1e-9 * hi.abs().max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if v_at(mid)? >= cfg.injection.stop_voltage {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                cut = Some(cut.map_or(hi, |t: f64| t.min(hi)));
            }
        }
        let t_upto = cut.unwrap_or(seg.t1);
        while next_sample <= t_upto + 1e-9 {
            let ts = next_sample.min(seg.t1);
            record(&mut out, ts, &seg.eval(ts))?;
            next_sample += cfg.sample_dt;
        }
        if let Some(tc) = cut {
            let yc = seg.eval(tc);
            for (k, &c) in cfg.injection.cells.iter().enumerate() {
                if out.injection_stop[k].1.is_none() && net.v_n(&yc, c - 1)? >= cfg.injection.stop_voltage - 1e-6 {
                    out.injection_stop[k].1 = Some(tc);
                    net.inject.borrow_mut()[c - 1] = 0.0;
                }
            }
            net.update_seeds(&yc)?;
            st.reset(tc, &yc).map_err(|e| sim_err(tc, e))?;
        } else {
            net.update_seeds(st.y()).map_err(|e| sim_err(st.t(), e))?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_oracles() {
        let dx = 0.044;
        assert!(laplacian_term(&[3.5; 7], 3.5, dx).iter().all(|v| *v == 0.0));
        // affine ramp whose boundary value matches the extrapolation at one end
        let u: Vec<f64> = (1..=6).map(|i| 2.0 + 0.5 * i as f64).collect();
        let l = laplacian_term(&u, 2.0, dx);
        assert!(l[..5].iter().all(|v| v.abs() < 1e-9));
        let q: Vec<f64> = (1..=8).map(|i| (i as f64 * dx).powi(2)).collect();
        let l = laplacian_term(&q, 0.0, dx);
        for v in &l[1..7] {
            assert!((v - 2.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn config_validation() {
        let p = ParameterSet::default();
        let mut cfg = NetworkConfig::new(50, NetworkModel::Reduced3, &p);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.injection.cells, vec![24, 25, 26, 27]);
        cfg.injection.cells.push(51);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg = NetworkConfig::new(2, NetworkModel::Reduced3, &p);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rest_states_are_stationary() {
        let p = ParameterSet::default();
        for model in [NetworkModel::Full10, NetworkModel::Reduced3] {
            let u = rest_state(model, InitialState::Rest, &p).unwrap();
            let d: Vec<f64> = match model {
                NetworkModel::Full10 => full_model_rhs(&u.clone().try_into().unwrap(), &p).unwrap().to_vec(),
                _ => vec![
                    f_tilde(&u[0], &u[2], &p).unwrap(),
                    g_tilde(&u[1], &u[2], &p).unwrap(),
                    h(&u[0], &u[1], &u[2], &p).unwrap(),
                ],
            };
            assert!(d.iter().all(|v| v.abs() < 1e-6), "{model}: {d:?}");
        }
    }

    #[test]
    fn synthetic_translation_speed() {
        let p = ParameterSet::default();
        let cfg = NetworkConfig::new(12, NetworkModel::Reduced3, &p);
        let dt = 10.0;
        let k = 7;
        // cell c rises at sample k·c
        let t: Vec<f64> = (0..120).map(|i| i as f64 * dt).collect();
        let states = (0..120)
            .map(|s| (1..=12).map(|c| vec![if s >= k * c { 0.0 } else { -70.0 }, 0.0, 0.0]).collect())
            .collect();
        let traj = NetworkTrajectory {
            config: cfg,
            t,
            states,
            var_names: vec!["V_N".into(), "V_A".into(), "K_e".into()],
            injection_stop: vec![],
        };
        let v = estimate_speed(&traj, 3, 8, DEFAULT_THRESHOLD).unwrap();
        let expected = 5.0 * p.dx / (5.0 * k as f64 * dt) * 60_000.0;
        assert!((v - expected).abs() < 1e-12 * expected, "{v} vs {expected}");
        assert!(matches!(estimate_speed(&traj, 3, 13, -30.0), Err(Error::NoWave { .. })));
    }
}
