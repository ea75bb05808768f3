//! Second-order ε-expansion of the slow manifold over the upper branch,
//! the planar flow restricted to it, and the heteroclinic match built on
//! that flow instead of the parameterization.
//!
//! All formulas are written in f̃, g̃ with the bookkeeping ε set to 1: the
//! composite ε^k m_k does not depend on it.

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrate::{integrate, Crossing, IntegratorConfig, OdeSystem, SectionEvent, Trajectory};
use crate::io::csv_table;
use crate::manifold::{Branch, CriticalManifold, Equilibrium};
use crate::model::{f_higher, f_partials, f_tilde, g_higher, g_partials, g_tilde, h, h_partials, HigherPartials};
use crate::param_manifold::{find_root_on_dw, unstable_branch, HeteroclinicFit, MatchConfig, SectionMatch};
use crate::singular::BranchEval;
use crate::ParameterSet;

pub const DEFAULT_SEED: f64 = 1e-6;
const SPAN: f64 = 1e7;
const SINGULAR_BOUND: f64 = 1e-8;

/// One fast coordinate u = u₀ + u₁ + u₂ of the expansion with the partials
/// used by the restricted Jacobian.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FastTerms {
    pub u0: f64,
    pub u1: f64,
    pub u2: f64,
    /// du₀/dz along the branch.
    pub u0_z: f64,
    /// d²u₀/dz².
    pub u0_zz: f64,
    pub u1_z: f64,
    pub u1_zz: f64,
    pub u1_w: f64,
    pub u2_z: f64,
    pub u2_w: f64,
}

impl FastTerms {
    /// Truncation up to `order` (0, 1 or 2) and its (z, w) partials.
    pub fn truncated(&self, order: usize) -> (f64, f64, f64) {
        let mut u = self.u0;
        let mut uz = self.u0_z;
        let mut uw = 0.0;
        if order >= 1 {
            u += self.u1;
            uz += self.u1_z;
            uw += self.u1_w;
        }
        if order >= 2 {
            u += self.u2;
            uz += self.u2_z;
            uw += self.u2_w;
        }
        (u, uz, uw)
    }
}

/// Expansion terms at (z, w): x = m₀ + m₁ + m₂, y = n₀ + n₁ + n₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionTerms {
    pub z: f64,
    pub w: f64,
    pub c: f64,
    pub m: FastTerms,
    pub n: FastTerms,
    /// h on the critical manifold and its total z-derivative.
    pub h0: f64,
    pub h0_z: f64,
}

/// Terms for one fast variable. `a`, `b` are the first partials of the
/// defining function in (u, z) on the branch, `d` the higher ones.
fn fast_terms(u0: f64, a: f64, b: f64, d: &HigherPartials, c: f64, w: f64, h0: f64, h0_z: f64) -> FastTerms {
    let cw = c * w;
    let u0_z = -b / a;
    // total z-derivatives of f_u, f_z, f_uu along the branch
    let fa = d.uu * u0_z + d.uz;
    let fb = d.uz * u0_z + d.zz;
    let u0_zz = -(fb * a - b * fa) / (a * a);
    let fc = d.uuu * u0_z + d.uuz;
    let fa_z = d.uuu * u0_z * u0_z + 2.0 * d.uuz * u0_z + d.uzz + d.uu * u0_zz;
    let fb_z = d.uuz * u0_z * u0_z + 2.0 * d.uzz * u0_z + d.zzz + d.uz * u0_zz;

    let a2 = a * a;
    let a3 = a2 * a;
    let a4 = a3 * a;
    let num = fb * a - 2.0 * b * fa;
    let num_z = fb_z * a - fb * fa - 2.0 * b * fa_z;

    let u1 = -cw * b / a2;
    let u1_w = -c * b / a2;
    let u1_z = -cw * num / a3;
    let u1_zz = -cw * (num_z * a - 3.0 * num * fa) / a4;

    let drift = cw - h0;
    let u2 = -0.5 * d.uu / a * u1 * u1 + cw / a * u1_z - c * c * drift * b / a3;
    let u2_z = -0.5 * ((fc * a - d.uu * fa) / a2 * u1 * u1 + d.uu / a * 2.0 * u1 * u1_z)
        + (-cw * fa / a2 * u1_z + cw / a * u1_zz)
        - c * c * (-h0_z * b / a3 + drift * (fb * a - 3.0 * b * fa) / a4);
    let u2_w = -d.uu / a * u1 * u1_w + 2.0 * c / a * u1_z - c * c * c * b / a3;

    FastTerms { u0, u1, u2, u0_z, u0_zz, u1_z, u1_zz, u1_w, u2_z, u2_w }
}

fn check_rate(which: &'static str, v: f64) -> Result<()> {
    if v.abs() <= SINGULAR_BOUND {
        return Err(Error::NearSingular { op: "expansion_terms", which, value: v.abs() });
    }
    Ok(())
}

/// Expansion over the upper branch for a fixed speed c.
pub struct SlowManifoldExpansion<'a> {
    pub c: f64,
    cm: &'a CriticalManifold,
    branch: BranchEval<'a>,
}

impl<'a> SlowManifoldExpansion<'a> {
    pub fn new(cm: &'a CriticalManifold, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::domain("expansion_terms", format!("speed must be positive, got {c}")));
        }
        Ok(SlowManifoldExpansion { c, cm, branch: BranchEval::new(cm, Branch::R) })
    }

    pub fn params(&self) -> &ParameterSet {
        &self.cm.params
    }

    pub fn terms(&self, z: f64, w: f64) -> Result<ExpansionTerms> {
        let (lo, hi) = self.cm.domain(Branch::R);
        if !(z >= lo && z <= hi) {
            return Err(Error::domain("expansion_terms", format!("z = {z} outside the upper branch [{lo}, {hi}]")));
        }
        let p = self.params();
        let (x0, y0) = self.branch.point(z)?;
        let (fx, fz) = f_partials(x0, z, p)?;
        let (gy, gz) = g_partials(y0, z, p)?;
        check_rate("f_x", fx)?;
        check_rate("g_y", gy)?;
        let (hx, hy, hz) = h_partials(x0, y0, z, p)?;
        let h0 = h(&x0, &y0, &z, p)?;
        let h0_z = hx * (-fz / fx) + hy * (-gz / gy) + hz;
        let m = fast_terms(x0, fx, fz, &f_higher(x0, z, p)?, self.c, w, h0, h0_z);
        let n = fast_terms(y0, gy, gz, &g_higher(y0, z, p)?, self.c, w, h0, h0_z);
        Ok(ExpansionTerms { z, w, c: self.c, m, n, h0, h0_z })
    }

    /// (x, y) on the order-`order` manifold.
    pub fn embed(&self, z: f64, w: f64, order: usize) -> Result<(f64, f64)> {
        let t = self.terms(z, w)?;
        Ok((t.m.truncated(order).0, t.n.truncated(order).0))
    }

    /// (z', w') of the flow restricted to the order-2 manifold.
    pub fn restricted_rhs(&self, z: f64, w: f64) -> Result<(f64, f64)> {
        let (x, y) = self.embed(z, w, 2)?;
        Ok((w, self.c * w - h(&x, &y, &z, self.params())?))
    }

    pub fn restricted_jacobian(&self, z: f64, w: f64) -> Result<Matrix2<f64>> {
        let t = self.terms(z, w)?;
        let (x, x_z, x_w) = t.m.truncated(2);
        let (y, y_z, y_w) = t.n.truncated(2);
        let (hx, hy, hz) = h_partials(x, y, z, self.params())?;
        Ok(Matrix2::new(0.0, 1.0, -(hx * x_z + hy * y_z + hz), self.c - (hx * x_w + hy * y_w)))
    }

    /// Residual (R_x, R_y) of the invariance equations of the 4D wave field
    /// for the order-`order` truncation.
    pub fn invariance_residual(&self, z: f64, w: f64, order: usize) -> Result<[f64; 2]> {
        let t = self.terms(z, w)?;
        let p = self.params();
        let c = self.c;
        let (x, x_z, x_w) = t.m.truncated(order);
        let (y, y_z, y_w) = t.n.truncated(order);
        let dw = c * w - h(&x, &y, &z, p)?;
        Ok([
            f_tilde(&x, &z, p)? - c * w * x_z - c * dw * x_w,
            g_tilde(&y, &z, p)? - c * w * y_z - c * dw * y_w,
        ])
    }
}

/// Free-function form of [`SlowManifoldExpansion::terms`].
pub fn expansion_terms(cm: &CriticalManifold, z: f64, w: f64, c: f64) -> Result<ExpansionTerms> {
    SlowManifoldExpansion::new(cm, c)?.terms(z, w)
}

impl OdeSystem for SlowManifoldExpansion<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let (a, b) = self.restricted_rhs(y[0], y[1])?;
        dy[0] = a;
        dy[1] = b;
        Ok(())
    }
}

/// Stable eigenvalue and unit eigenvector (v_z > 0) of the restricted flow
/// at the equilibrium (z^r, 0).
pub fn stable_direction(ex: &SlowManifoldExpansion, z_r: f64) -> Result<(f64, [f64; 2])> {
    let j = ex.restricted_jacobian(z_r, 0.0)?;
    let (q, r) = (j[(1, 0)], j[(1, 1)]);
    let disc = r * r + 4.0 * q;
    if !(disc > 0.0 && q > 0.0) {
        return Err(Error::Spectrum(format!("restricted equilibrium is not a saddle (trace {r}, det {})", -q)));
    }
    // λ² − rλ − q = 0; stable root written to avoid cancellation
    let lambda = -2.0 * q / (r + disc.sqrt());
    let norm = (1.0 + lambda * lambda).sqrt();
    Ok((lambda, [1.0 / norm, lambda / norm]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FenichelConfig {
    pub seed: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub matching: MatchConfig,
}

impl Default for FenichelConfig {
    fn default() -> Self {
        FenichelConfig { seed: DEFAULT_SEED, rel_tol: 1e-11, abs_tol: 1e-13, matching: MatchConfig::default() }
    }
}

impl FenichelConfig {
    fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig { rel_tol: self.rel_tol, abs_tol: self.abs_tol, max_steps: 2_000_000, ..Default::default() }
    }
}

/// Γ̃^s from (z^r, 0) − seed·v backward to the section, embedded in 4D as
/// (x, y, z, w).
pub fn restricted_stable_branch(ex: &SlowManifoldExpansion, p_r: &Equilibrium, cfg: &FenichelConfig) -> Result<Trajectory> {
    let c = ex.c;
    let (_, v) = stable_direction(ex, p_r.z)?;
    let y0 = [p_r.z - cfg.seed * v[0], -cfg.seed * v[1]];
    let ev = [SectionEvent::new(0, cfg.matching.section_z, Crossing::Decreasing)];
    let tr = integrate(ex, &y0, (0.0, -SPAN), &cfg.integrator(), &ev).map_err(|e| match e {
        Error::StepUnderflow { state, .. } | Error::StepBudget { state, .. } => Error::ManifoldEscape { c, state },
        other => other,
    })?;
    let Some(hit) = &tr.hit else {
        return Err(Error::ManifoldEscape { c, state: tr.last().to_vec() });
    };
    let lift = |s: &[f64]| -> Result<Vec<f64>> {
        let (x, y) = ex.embed(s[0], s[1], 2)?;
        Ok(vec![x, y, s[0], s[1]])
    };
    let y = tr.y.iter().map(|s| lift(s)).collect::<Result<Vec<_>>>()?;
    let mut hit = hit.clone();
    hit.y = lift(&hit.y)?;
    Ok(Trajectory { t: tr.t, y, hit: Some(hit), stats: tr.stats })
}

/// Matcher pairing Γ^u of p_l1 with the embedded Γ̃^s.
pub struct FenichelMatcher<'a> {
    pub cm: &'a CriticalManifold,
    pub p_l1: Equilibrium,
    pub p_r: Equilibrium,
    pub cfg: FenichelConfig,
}

impl<'a> FenichelMatcher<'a> {
    pub fn new(cm: &'a CriticalManifold, cfg: FenichelConfig) -> Result<Self> {
        let eqs = cm.find_equilibria()?;
        let get = |l: &str| {
            eqs.iter()
                .find(|e| e.label == l)
                .cloned()
                .ok_or_else(|| Error::domain("fenichel_match", format!("equilibrium {l} not found")))
        };
        Ok(FenichelMatcher { cm, p_l1: get("p_l1")?, p_r: get("p_r")?, cfg })
    }

    pub fn match_at(&self, c: f64) -> Result<SectionMatch> {
        let p = &self.cm.params;
        let (u, s) = rayon::join(
            || unstable_branch(c, &self.p_l1, &self.cfg.matching, p),
            || {
                let ex = SlowManifoldExpansion::new(self.cm, c)?;
                restricted_stable_branch(&ex, &self.p_r, &self.cfg)
            },
        );
        let (unstable, stable) = (u?, s?);
        let hu = unstable.hit.as_ref().expect("hit checked").y.clone();
        let hs = stable.hit.as_ref().expect("hit checked").y.clone();
        Ok(SectionMatch {
            c,
            unstable_hit: [hu[0], hu[1], hu[2], hu[3]],
            stable_hit: [hs[0], hs[1], hs[2], hs[3]],
            mismatch: [hu[0] - hs[0], hu[1] - hs[1], hu[3] - hs[3]],
            s_star: self.cfg.seed,
            unstable,
            stable,
        })
    }

    pub fn sweep(&self, cs: &[f64]) -> Vec<(f64, Result<SectionMatch>)> {
        cs.par_iter().map(|&c| (c, self.match_at(c))).collect()
    }

    /// Secant on Δw.
    pub fn find_c_tilde(&self, lo: f64, hi: f64) -> Result<HeteroclinicFit> {
        find_root_on_dw(&self.cm.params, lo, hi, |c| self.match_at(c))
    }
}

/// Euclidean and componentwise section distances over a c-grid.
pub fn distance_csv(rows: &[(f64, Result<SectionMatch>)]) -> String {
    let data = rows.iter().map(|(c, r)| match r {
        Ok(m) => {
            let [dx, dy, dw] = m.mismatch;
            [*c, (dx * dx + dy * dy + dw * dw).sqrt(), dx, dy, dw]
        }
        Err(_) => [*c, f64::NAN, f64::NAN, f64::NAN, f64::NAN],
    });
    csv_table(&["c", "distance", "dx", "dy", "dw"], data)
}
