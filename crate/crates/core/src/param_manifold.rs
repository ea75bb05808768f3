//! Parameterization method for the slow stable direction of p_r in the 4D
//! wave ODE, its globalization by backward integration, and the match with
//! the unstable manifold of p_l1 on the section {z = 22}.

use nalgebra::{DMatrix, Matrix4, Vector4};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrate::{
    integrate, secant_root, Crossing, IntegratorConfig, Jacobian, OdeSystem, SectionEvent, StiffScheme, Trajectory,
};
use crate::io::csv_table;
use crate::jet::Jet;
use crate::linalg::{condition_number, dense_solve};
use crate::manifold::{Branch, CriticalManifold, Equilibrium};
use crate::model::{f_partials, field_jet, g_partials, wave_field, wave_jacobian};
use crate::params::ParameterSet;

pub const SECTION_Z: f64 = 22.0;
pub const DEFAULT_ORDER: usize = 55;
pub const DEFAULT_THRESHOLD: f64 = 1e-10;
pub const DEFAULT_DELTA: f64 = 1e-6;
const SPAN: f64 = 1e6;

/// The 4D traveling-wave ODE at a fixed speed.
pub struct WaveSystem<'a> {
    pub c: f64,
    pub p: &'a ParameterSet,
}

impl OdeSystem for WaveSystem<'_> {
    fn dim(&self) -> usize {
        4
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let f = wave_field(&[y[0], y[1], y[2], y[3]], self.c, self.p)?;
        dy.copy_from_slice(&f);
        Ok(())
    }
    fn jacobian(&self, _t: f64, y: &[f64]) -> Option<Result<Jacobian>> {
        Some(wave_jacobian(&[y[0], y[1], y[2], y[3]], self.c, self.p).map(|m| {
            Jacobian::Dense(DMatrix::from_fn(4, 4, |i, j| m[(i, j)]))
        }))
    }
}

/// Eigenvalues of a 4×4 matrix, all required real, ascending.
fn real_spectrum(a: &Matrix4<f64>, what: &str) -> Result<Vec<f64>> {
    let ev = a.complex_eigenvalues();
    let scale = a.amax().max(1.0);
    let mut out = Vec::with_capacity(4);
    for l in ev.iter() {
        if l.im.abs() > 1e-10 * scale {
            return Err(Error::Spectrum(format!("complex eigenvalue {l} of DF at {what}")));
        }
        out.push(l.re);
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Unit null vector of A − λI (right singular vector of the smallest
/// singular value), sharpened by two inverse-iteration steps.
fn eigenvector(a: &Matrix4<f64>, lambda: f64) -> Vector4<f64> {
    let m = a - Matrix4::identity() * lambda;
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let k = svd.singular_values.imin();
    let mut v: Vector4<f64> = vt.row(k).transpose();
    let shifted = a - Matrix4::identity() * (lambda * (1.0 + 1e-13) + 1e-15);
    for _ in 0..2 {
        if let Some(x) = shifted.lu().solve(&v) {
            if x.iter().all(|e| e.is_finite()) && x.norm() > 0.0 {
                v = x.normalize();
            }
        }
    }
    v.normalize()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eigenpair {
    pub lambda: f64,
    pub v: [f64; 4],
    pub spectrum: Vec<f64>,
    /// ‖DF v − λ v‖_∞.
    pub residual: f64,
}

fn point(eq: &Equilibrium) -> [f64; 4] {
    [eq.x, eq.y, eq.z, 0.0]
}

/// Slowest stable eigenpair of DF(p_r), with v pointing toward decreasing z.
pub fn slow_eigenpair(c: f64, p_r: &Equilibrium, p: &ParameterSet) -> Result<Eigenpair> {
    let a = wave_jacobian(&point(p_r), c, p)?;
    let spec = real_spectrum(&a, "p_r")?;
    let pos = spec.iter().filter(|&&l| l > 0.0).count();
    if pos != 1 {
        return Err(Error::Spectrum(format!("{pos} positive eigenvalues at p_r, expected 1: {spec:?}")));
    }
    let mut neg: Vec<f64> = spec.iter().copied().filter(|&l| l < 0.0).collect();
    neg.sort_by(|a, b| b.total_cmp(a));
    let lambda = neg[0];
    if neg.len() > 1 && lambda.abs() / neg[1].abs() > 0.9 {
        return Err(Error::Spectrum(format!("slow eigenvalue {lambda} not separated from {}", neg[1])));
    }
    let mut v = eigenvector(&a, lambda);
    if v[2] > 0.0 {
        v = -v;
    }
    let residual = (a * v - v * lambda).amax();
    Ok(Eigenpair { lambda, v: [v[0], v[1], v[2], v[3]], spectrum: spec, residual })
}

/// Unstable eigenpair of DF(p_l1), with v pointing toward increasing z.
pub fn unstable_eigenpair(c: f64, p_l1: &Equilibrium, p: &ParameterSet) -> Result<Eigenpair> {
    let a = wave_jacobian(&point(p_l1), c, p)?;
    let spec = real_spectrum(&a, "p_l1")?;
    let positive: Vec<f64> = spec.iter().copied().filter(|&l| l > 0.0).collect();
    if positive.len() != 1 {
        return Err(Error::Spectrum(format!("{} positive eigenvalues at p_l1: {spec:?}", positive.len())));
    }
    let lambda = positive[0];
    let mut v = eigenvector(&a, lambda);
    if v[2] < 0.0 {
        v = -v;
    }
    let residual = (a * v - v * lambda).amax();
    Ok(Eigenpair { lambda, v: [v[0], v[1], v[2], v[3]], spectrum: spec, residual })
}

/// W(s) = Σ W_k s^k with internal dynamics s' = λ s.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifoldParameterization {
    pub c: f64,
    pub lambda: f64,
    pub order: usize,
    /// coeffs[k] = W_k.
    pub coeffs: Vec<[f64; 4]>,
}

impl ManifoldParameterization {
    pub fn eval(&self, s: f64) -> [f64; 4] {
        let mut out = [0.0; 4];
        for k in (0..=self.order).rev() {
            for i in 0..4 {
                out[i] = out[i] * s + self.coeffs[k][i];
            }
        }
        out
    }

    /// dW/ds.
    pub fn eval_derivative(&self, s: f64) -> [f64; 4] {
        let mut out = [0.0; 4];
        for k in (1..=self.order).rev() {
            for i in 0..4 {
                out[i] = out[i] * s + k as f64 * self.coeffs[k][i];
            }
        }
        out
    }
}

/// Solves the invariance equation order by order up to `order`.
pub fn compute_coefficients(c: f64, order: usize, p_r: &Equilibrium, p: &ParameterSet) -> Result<ManifoldParameterization> {
    let ep = slow_eigenpair(c, p_r, p)?;
    compute_with_eigenpair(c, order, p_r, &ep, p)
}

fn compute_with_eigenpair(
    c: f64,
    order: usize,
    p_r: &Equilibrium,
    ep: &Eigenpair,
    p: &ParameterSet,
) -> Result<ManifoldParameterization> {
    let a = wave_jacobian(&point(p_r), c, p)?;
    let coeffs = solve_invariance(&a, point(p_r), ep.v, ep.lambda, order, |w| field_jet(w, c, p))?;
    Ok(ManifoldParameterization { c, lambda: ep.lambda, order, coeffs })
}

/// Order-by-order solve of (A − kλI) W_k = −[F(W_{<k})]_k for k = 2..=order,
/// where A = DF(W_0) and W_1 is an eigenvector for λ.
pub fn solve_invariance(
    a: &Matrix4<f64>,
    w0: [f64; 4],
    w1: [f64; 4],
    lambda: f64,
    order: usize,
    field: impl Fn(&[Jet; 4]) -> Result<[Jet; 4]>,
) -> Result<Vec<[f64; 4]>> {
    let mut coeffs = vec![w0, w1];
    for k in 2..=order {
        // W_k is still zero in the jets, so [F(W)]_k is the known part
        let jets: [Jet; 4] =
            std::array::from_fn(|i| Jet::from_coeffs((0..=k).map(|j| coeffs.get(j).map_or(0.0, |w| w[i])).collect()));
        let f = field(&jets)?;
        let m = DMatrix::from_fn(4, 4, |i, j| a[(i, j)] - if i == j { k as f64 * lambda } else { 0.0 });
        let cond = condition_number(&m);
        if !(cond < 1e12) {
            return Err(Error::Resonance { order: k, cond });
        }
        let rhs: Vec<f64> = f.iter().map(|j| -j.coeff(k)).collect();
        let w = dense_solve(&m, &rhs, "order-k invariance solve")?;
        coeffs.push([w[0], w[1], w[2], w[3]]);
    }
    Ok(coeffs)
}

/// ‖F(W(s)) − λ s W'(s)‖_∞.
pub fn invariance_error(pm: &ManifoldParameterization, s: f64, p: &ParameterSet) -> Result<f64> {
    let w = pm.eval(s);
    let dw = pm.eval_derivative(s);
    let f = wave_field(&w, pm.c, p)?;
    Ok((0..4).map(|i| (f[i] - pm.lambda * s * dw[i]).abs()).fold(0.0, f64::max))
}

/// 200 log-spaced s on [1e-6, 1e2].
pub fn s_grid() -> Vec<f64> {
    (0..200).map(|i| 10f64.powf(-6.0 + 8.0 * i as f64 / 199.0)).collect()
}

/// Largest grid s with E(s) below `threshold`, scanning upward until the
/// first failure.
pub fn select_s(pm: &ManifoldParameterization, threshold: f64, p: &ParameterSet) -> Result<f64> {
    let mut best = None;
    let mut min_error = f64::INFINITY;
    for s in s_grid() {
        let e = invariance_error(pm, s, p).unwrap_or(f64::INFINITY);
        min_error = min_error.min(e);
        if e < threshold {
            best = Some(s);
        } else {
            break;
        }
    }
    best.ok_or(Error::OrderTooLow { threshold, min_error })
}

/// (s, E(s)) over the scan grid.
pub fn invariance_error_csv(pm: &ManifoldParameterization, p: &ParameterSet) -> String {
    let rows = s_grid().into_iter().map(|s| [s, invariance_error(pm, s, p).unwrap_or(f64::NAN)]);
    csv_table(&["s", "E"], rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchConfig {
    pub order: usize,
    pub threshold: f64,
    pub delta: f64,
    pub section_z: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// The backward Γ^s run keeps h·|λ_fast| at least this large for the
    /// slowest fast eigenvalue on the section.
    pub damping: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            order: DEFAULT_ORDER,
            threshold: DEFAULT_THRESHOLD,
            delta: DEFAULT_DELTA,
            section_z: SECTION_Z,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            damping: 2.0,
        }
    }
}

impl MatchConfig {
    fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig { rel_tol: self.rel_tol, abs_tol: self.abs_tol, max_steps: 2_000_000, ..IntegratorConfig::stiff() }
    }

    /// Backward run across the expanding fast directions: second-order
    /// Rosenbrock with γ = 1 + 1/√2, error control on (z, w) only, and a
    /// step floor that keeps both fast modes in the damped regime.
    pub fn backward_integrator(&self, min_step: f64) -> IntegratorConfig {
        IntegratorConfig {
            rel_tol: self.rel_tol.max(1e-8),
            abs_tol: self.abs_tol.max(1e-10),
            min_step,
            initial_step: Some(min_step),
            scheme: StiffScheme::Ros2,
            controlled: Some(vec![2, 3]),
            max_steps: 2_000_000,
            ..IntegratorConfig::stiff()
        }
    }
}

/// Step floor for the backward Γ^s run: `damping` over the smaller fast
/// rate |f̃_x|/c, |g̃_y|/c on the upper branch at the section.
pub fn backward_step_floor(c: f64, cfg: &MatchConfig, cm: &CriticalManifold) -> Result<f64> {
    let z = cfg.section_z;
    let x = cm.x_star(z, Branch::R)?;
    let y = cm.y(z)?;
    let fx = f_partials(x, z, &cm.params)?.0;
    let gy = g_partials(y, z, &cm.params)?.0;
    let rate = fx.abs().min(gy.abs()) / c;
    Ok(cfg.damping / rate)
}

/// Γ^u and Γ^s states on the section and their difference.
#[derive(Debug, Clone, Serialize)]
pub struct SectionMatch {
    pub c: f64,
    pub unstable_hit: [f64; 4],
    pub stable_hit: [f64; 4],
    /// (Δx, Δy, Δw) = Γ^u − Γ^s.
    pub mismatch: [f64; 3],
    pub s_star: f64,
    #[serde(skip)]
    pub unstable: Trajectory,
    #[serde(skip)]
    pub stable: Trajectory,
}

impl SectionMatch {
    pub fn dw(&self) -> f64 {
        self.mismatch[2]
    }

    /// Mismatch scaled componentwise by the hit magnitudes.
    pub fn scaled_mismatch(&self) -> f64 {
        (0..3)
            .map(|k| {
                let i = [0, 1, 3][k];
                let scale = self.unstable_hit[i].abs().max(self.stable_hit[i].abs()).max(1e-12);
                (self.mismatch[k] / scale).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Joined orbit (ξ, x, y, z, w): Γ^u forward, then Γ^s from the section
    /// toward p_r, shifted to be continuous in ξ.
    pub fn orbit_csv(&self) -> String {
        let mut rows: Vec<[f64; 5]> =
            self.unstable.t.iter().zip(&self.unstable.y).map(|(t, y)| [*t, y[0], y[1], y[2], y[3]]).collect();
        let t_join = *self.unstable.t.last().unwrap_or(&0.0);
        let s_end = *self.stable.t.last().unwrap_or(&0.0);
        for (t, y) in self.stable.t.iter().zip(&self.stable.y).rev().skip(1) {
            rows.push([t_join + (t - s_end), y[0], y[1], y[2], y[3]]);
        }
        csv_table(&["xi", "x", "y", "z", "w"], rows)
    }
}

/// Γ^u from p_l1 + δ v to the section, forward in ξ.
pub fn unstable_branch(c: f64, p_l1: &Equilibrium, cfg: &MatchConfig, p: &ParameterSet) -> Result<Trajectory> {
    let ep = unstable_eigenpair(c, p_l1, p)?;
    let y0: Vec<f64> = (0..4).map(|i| point(p_l1)[i] + cfg.delta * ep.v[i]).collect();
    let sys = WaveSystem { c, p };
    let ev = [SectionEvent::new(2, cfg.section_z, Crossing::Increasing), SectionEvent::new(3, 0.0, Crossing::Decreasing)];
    let tr = integrate(&sys, &y0, (0.0, SPAN), &cfg.integrator(), &ev)?;
    match &tr.hit {
        Some(h) if h.event == 0 => Ok(tr),
        _ => Err(Error::NoHit { c, reason: "unstable manifold of p_l1 turned back".into(), turn_sign: -1.0 }),
    }
}

/// Γ^s backward from W(s*) to the section.
pub fn stable_branch(
    pm: &ManifoldParameterization,
    s_star: f64,
    cfg: &MatchConfig,
    min_step: f64,
    p: &ParameterSet,
) -> Result<Trajectory> {
    let c = pm.c;
    let y0 = pm.eval(s_star).to_vec();
    let sys = WaveSystem { c, p };
    let ev = [SectionEvent::new(2, cfg.section_z, Crossing::Decreasing)];
    let tr = integrate(&sys, &y0, (0.0, -SPAN), &cfg.backward_integrator(min_step), &ev).map_err(|e| match e {
        Error::Domain { .. } | Error::StepUnderflow { .. } | Error::StepBudget { .. } => {
            let state = match &e {
                Error::StepUnderflow { state, .. } | Error::StepBudget { state, .. } => state.clone(),
                _ => vec![],
            };
            Error::ManifoldEscape { c, state }
        }
        other => other,
    })?;
    if tr.hit.is_none() {
        return Err(Error::ManifoldEscape { c, state: tr.last().to_vec() });
    }
    Ok(tr)
}

/// Parameterization-based matcher.
pub struct ParamMatcher<'a> {
    pub cm: &'a CriticalManifold,
    pub p: &'a ParameterSet,
    pub p_l1: Equilibrium,
    pub p_r: Equilibrium,
    pub cfg: MatchConfig,
}

impl<'a> ParamMatcher<'a> {
    pub fn new(cm: &'a CriticalManifold, cfg: MatchConfig) -> Result<Self> {
        let eqs = cm.find_equilibria()?;
        let get = |l: &str| {
            eqs.iter()
                .find(|e| e.label == l)
                .cloned()
                .ok_or_else(|| Error::domain("param_manifold", format!("equilibrium {l} not found")))
        };
        Ok(ParamMatcher { cm, p: &cm.params, p_l1: get("p_l1")?, p_r: get("p_r")?, cfg })
    }

    pub fn parameterization(&self, c: f64) -> Result<ManifoldParameterization> {
        compute_coefficients(c, self.cfg.order, &self.p_r, self.p)
    }

    pub fn match_at(&self, c: f64) -> Result<SectionMatch> {
        let pm = self.parameterization(c)?;
        let s_star = select_s(&pm, self.cfg.threshold, self.p)?;
        let floor = backward_step_floor(c, &self.cfg, self.cm)?;
        let (u, s) = rayon::join(
            || unstable_branch(c, &self.p_l1, &self.cfg, self.p),
            || stable_branch(&pm, s_star, &self.cfg, floor, self.p),
        );
        let (unstable, stable) = (u?, s?);
        let hu = unstable.hit.as_ref().expect("hit checked").y.clone();
        let hs = stable.hit.as_ref().expect("hit checked").y.clone();
        Ok(SectionMatch {
            c,
            unstable_hit: [hu[0], hu[1], hu[2], hu[3]],
            stable_hit: [hs[0], hs[1], hs[2], hs[3]],
            mismatch: [hu[0] - hs[0], hu[1] - hs[1], hu[3] - hs[3]],
            s_star,
            unstable,
            stable,
        })
    }

    /// Section hits over a c-grid, in parallel.
    pub fn sweep(&self, cs: &[f64]) -> Vec<(f64, Result<SectionMatch>)> {
        cs.par_iter().map(|&c| (c, self.match_at(c))).collect()
    }

    /// Secant on Δw.
    pub fn find_c_hat(&self, lo: f64, hi: f64) -> Result<HeteroclinicFit> {
        find_root_on_dw(self.p, lo, hi, |c| self.match_at(c))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HeteroclinicFit {
    pub c: f64,
    pub velocity_mm_per_min: f64,
    pub history: Vec<(f64, f64)>,
    pub matched: SectionMatch,
}

pub(crate) fn find_root_on_dw(
    p: &ParameterSet,
    lo: f64,
    hi: f64,
    run: impl Fn(f64) -> Result<SectionMatch>,
) -> Result<HeteroclinicFit> {
    let root = secant_root(|c| Ok(run(c)?.dw()), lo, hi, 1e-13, 60)?;
    let matched = run(root.root)?;
    Ok(HeteroclinicFit {
        c: root.root,
        velocity_mm_per_min: p.velocity_mm_per_min(root.root),
        history: root.history,
        matched,
    })
}

/// Section-hit curves (Γ^u and Γ^s components on Σ and their distance).
pub fn sweep_csv(rows: &[(f64, Result<SectionMatch>)]) -> String {
    let data = rows.iter().map(|(c, r)| match r {
        Ok(m) => [
            *c,
            m.unstable_hit[0],
            m.unstable_hit[1],
            m.unstable_hit[3],
            m.stable_hit[0],
            m.stable_hit[1],
            m.stable_hit[3],
            m.mismatch[2],
        ],
        Err(_) => {
            let mut v = [f64::NAN; 8];
            v[0] = *c;
            v
        }
    });
    csv_table(&["c", "x_u", "y_u", "w_u", "x_s", "y_s", "w_s", "dw"], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn setup() -> &'static (CriticalManifold, Equilibrium, Equilibrium) {
        static S: OnceLock<(CriticalManifold, Equilibrium, Equilibrium)> = OnceLock::new();
        S.get_or_init(|| {
            let cm = CriticalManifold::new(&ParameterSet::default()).unwrap();
            let eqs = cm.find_equilibria().unwrap();
            let l1 = eqs.iter().find(|e| e.label == "p_l1").unwrap().clone();
            let r = eqs.iter().find(|e| e.label == "p_r").unwrap().clone();
            (cm, l1, r)
        })
    }

    #[test]
    fn eigenpair_at_p_r() {
        let (cm, _, pr) = setup();
        let ep = slow_eigenpair(0.0731, pr, &cm.params).unwrap();
        assert!(ep.lambda < 0.0);
        assert_eq!(ep.spectrum.iter().filter(|&&l| l > 0.0).count(), 1);
        assert!(ep.residual < 1e-10, "{}", ep.residual);
        assert!(ep.v[2] < 0.0);
    }

    #[test]
    fn order_one_and_coefficient_solves() {
        let (cm, _, pr) = setup();
        let p = &cm.params;
        let pm = compute_coefficients(0.073, 55, pr, p).unwrap();
        assert_eq!(pm.coeffs.len(), 56);
        // order-1 invariance: DF W1 = λ W1
        let a = wave_jacobian(&pm.coeffs[0], 0.073, p).unwrap();
        let w1 = Vector4::from(pm.coeffs[1]);
        assert!((a * w1 - w1 * pm.lambda).amax() < 1e-12);
        assert!(invariance_error(&pm, 0.0, p).unwrap() < 1e-12);
        // each order-k solve leaves the k-th coefficient of the invariance equation at zero
        let jets: [Jet; 4] = std::array::from_fn(|i| Jet::from_coeffs((0..=10).map(|k| pm.coeffs[k][i]).collect()));
        let f = field_jet(&jets, 0.073, p).unwrap();
        for k in 2..=10 {
            for i in 0..4 {
                let lhs = f[i].coeff(k);
                let rhs = k as f64 * pm.lambda * pm.coeffs[k][i];
                assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()), "k={k} i={i}: {lhs} {rhs}");
            }
        }
    }

    #[test]
    fn linear_field_has_linear_manifold() {
        let a = Matrix4::new(
            -1.3, 0.3, 0.0, 0.0,
            0.0, -2.3, 0.1, 0.0,
            0.0, 0.0, -0.5, 0.0,
            0.2, 0.0, 0.0, 3.0,
        );
        let v = eigenvector(&a, -0.5);
        let field = |w: &[Jet; 4]| -> Result<[Jet; 4]> {
            Ok(std::array::from_fn(|i| {
                (0..4).fold(w[0].scale(0.0), |acc, j| acc + w[j].scale(a[(i, j)]))
            }))
        };
        let coeffs = solve_invariance(&a, [0.0; 4], [v[0], v[1], v[2], v[3]], -0.5, 12, field).unwrap();
        for w in &coeffs[2..] {
            assert!(w.iter().all(|&x| x == 0.0));
        }
        // 2λ = −1.3 hits an eigenvalue
        let r = solve_invariance(&a, [0.0; 4], [1.0, 0.0, 0.0, 0.0], -0.65, 3, |w: &[Jet; 4]| {
            let mut f = field(w)?;
            f[1] = f[1].clone() + w[0].clone() * w[0].clone();
            Ok(f)
        });
        assert!(matches!(r, Err(Error::Resonance { order: 2, .. })));
    }

    #[test]
    fn select_s_finds_usable_radius() {
        let (cm, _, pr) = setup();
        let p = &cm.params;
        let pm = compute_coefficients(0.0731, 55, pr, p).unwrap();
        let s = select_s(&pm, 1e-10, p).unwrap();
        assert!(invariance_error(&pm, s, p).unwrap() < 1e-10);
        assert!(invariance_error(&pm, 2.0 * s, p).unwrap_or(f64::INFINITY) > invariance_error(&pm, s, p).unwrap());
    }
}
