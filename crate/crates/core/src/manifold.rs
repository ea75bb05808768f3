//! The critical manifold {f̃ = 0, g̃ = 0}: its three x-branches X^l, X^m,
//! X^r over z, the astrocytic branch Y(z), the two folds, the reduced
//! functions H*(z) = h(X*(z), Y(z), z) and the equilibria of the wave ODE.

use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrate::{bracketed_newton, newton_solve};
use crate::io::csv_table;
use crate::model::{f_higher, f_partials, f_tilde, first_partials, g_partials, g_tilde, h, reduced_jacobian, reduced_rhs};
use crate::params::ParameterSet;

/// Voltage window scanned for roots of f̃(·, z) and g̃(·, z).
const X_MIN: f64 = -150.0;
const X_MAX: f64 = 150.0;
const X_GRID: usize = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    L,
    M,
    R,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::L => "l",
            Branch::M => "m",
            Branch::R => "r",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fold {
    pub z: f64,
    pub x: f64,
}

/// The lower fold (z^L, where the r and m branches meet) and the upper
/// fold (z^R, where l and m meet).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Folds {
    pub left: Fold,
    pub right: Fold,
}

/// Largest z with a positive intracellular K⁺.
pub fn z_upper_limit(p: &ParameterSet) -> f64 {
    (p.k_tot - p.omega_a * p.k_i_a) / p.omega_e
}

/// All roots of f̃(·, z) in the scanned voltage window, ascending. The
/// window is split at the critical points of f̃(·, z), so each piece is
/// monotone and holds at most one root.
pub fn f_roots(z: f64, p: &ParameterSet) -> Result<Vec<f64>> {
    let fx = |x: f64| f_partials(x, z, p).map(|d| d.0);
    let dx = (X_MAX - X_MIN) / X_GRID as f64;
    let mut knots = vec![X_MIN];
    let mut prev = fx(X_MIN)?;
    for i in 1..=X_GRID {
        let b = X_MIN + i as f64 * dx;
        let cur = fx(b)?;
        if (prev > 0.0) != (cur > 0.0) {
            // critical point: bisect f̃_x
            let (mut lo, mut hi) = (b - dx, b);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if (fx(mid)? > 0.0) == (prev > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            knots.push(0.5 * (lo + hi));
        }
        prev = cur;
    }
    knots.push(X_MAX);
    let fval = |x: f64| f_tilde(&x, &z, p);
    let mut roots = Vec::new();
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (fval(a)?, fval(b)?);
        if (fa > 0.0) != (fb > 0.0) || fb == 0.0 {
            let r = bracketed_newton(|x| Ok((fval(x)?, f_partials(x, z, p)?.0)), a, b, 1e-13, 1e-11)?;
            if roots.last().is_none_or(|&q: &f64| (r - q).abs() > 1e-9) {
                roots.push(r);
            }
        }
    }
    Ok(roots)
}

/// Y(z): the unique root of g̃(·, z).
pub fn y_solve(z: f64, p: &ParameterSet) -> Result<f64> {
    let g = |y: f64| -> Result<(f64, f64)> { Ok((g_tilde(&y, &z, p)?, g_partials(y, z, p)?.0)) };
    let (mut a, mut b) = (-200.0, 200.0);
    // g̃ decreases in y; widen if needed
    for _ in 0..5 {
        if g(a)?.0 > 0.0 && g(b)?.0 < 0.0 {
            break;
        }
        a *= 2.0;
        b *= 2.0;
    }
    bracketed_newton(g, a, b, 1e-13, 1e-11)
}

fn fold_residual(v: &[f64], p: &ParameterSet) -> Result<Vec<f64>> {
    Ok(vec![f_tilde(&v[0], &v[1], p)?, f_partials(v[0], v[1], p)?.0])
}

fn fold_jacobian(v: &[f64], p: &ParameterSet) -> Result<DMatrix<f64>> {
    let (fx, fz) = f_partials(v[0], v[1], p)?;
    let hp = f_higher(v[0], v[1], p)?;
    Ok(DMatrix::from_row_slice(2, 2, &[fx, fz, hp.uu, hp.uz]))
}

/// 2D Newton on (f̃, f̃_x) = 0 from a seed (x, z).
pub fn fold_newton(x: f64, z: f64, p: &ParameterSet) -> Result<Fold> {
    let r = newton_solve(|v| fold_residual(v, p), |v| fold_jacobian(v, p), &[x, z], 1e-11, 50)?;
    Ok(Fold { x: r.x[0], z: r.x[1] })
}

/// Locates both folds: the number of roots of f̃(·, z) changes from one to
/// three at z^L and back to one at z^R; each transition is bisected in z
/// and then polished by 2D Newton.
pub fn find_folds(p: &ParameterSet) -> Result<Folds> {
    let z_hi = z_upper_limit(p) * 0.999;
    let n = 400;
    let zs: Vec<f64> = (0..=n).map(|i| 0.5 + (z_hi - 0.5) * i as f64 / n as f64).collect();
    let mut counts = Vec::with_capacity(zs.len());
    for &z in &zs {
        counts.push(f_roots(z, p)?.len());
    }
    let mut folds = Vec::new();
    for i in 1..zs.len() {
        // the r-branch root leaves the scanned window as z nears its limit
        if counts[i] != counts[i - 1] && counts[i].min(counts[i - 1]) > 0 {
            let (mut lo, mut hi) = (zs[i - 1], zs[i]);
            let clo = counts[i - 1];
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if f_roots(mid, p)?.len() == clo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            // the two roots that merge: pick the closest pair on the 3-root side
            let z3 = if clo == 3 { lo } else { hi };
            let roots = f_roots(z3, p)?;
            if roots.len() < 2 {
                return Err(Error::NoConvergence { op: "find_folds", iterations: 50, residual: f64::NAN, best: vec![z3] });
            }
            let (mut bi, mut bd) = (0, f64::INFINITY);
            for k in 1..roots.len() {
                let d = roots[k] - roots[k - 1];
                if d < bd {
                    bd = d;
                    bi = k;
                }
            }
            let xm = 0.5 * (roots[bi] + roots[bi - 1]);
            folds.push(fold_newton(xm, z3, p)?);
        }
    }
    if folds.len() != 2 {
        return Err(Error::Domain {
            op: "find_folds",
            detail: format!("expected two folds, found {}", folds.len()),
        });
    }
    folds.sort_by(|a, b| a.z.total_cmp(&b.z));
    Ok(Folds { left: folds[0], right: folds[1] })
}

/// Precomputed folds plus branch evaluation.
#[derive(Debug, Clone)]
pub struct CriticalManifold {
    pub params: ParameterSet,
    pub folds: Folds,
}

impl CriticalManifold {
    pub fn new(p: &ParameterSet) -> Result<Self> {
        Ok(CriticalManifold { params: p.clone(), folds: find_folds(p)? })
    }

    /// Open z-interval on which a branch exists.
    pub fn domain(&self, b: Branch) -> (f64, f64) {
        let zmax = z_upper_limit(&self.params);
        match b {
            Branch::L => (0.0, self.folds.right.z),
            Branch::M => (self.folds.left.z, self.folds.right.z),
            Branch::R => (self.folds.left.z, zmax),
        }
    }

    fn check_domain(&self, z: f64, b: Branch, op: &'static str) -> Result<()> {
        let (lo, hi) = self.domain(b);
        if !(z > lo && z < hi) {
            return Err(Error::domain(op, format!("z = {z} outside the {b}-branch domain ({lo}, {hi})")));
        }
        Ok(())
    }

    /// X*(z) on the requested branch.
    pub fn x_star(&self, z: f64, b: Branch) -> Result<f64> {
        self.check_domain(z, b, "branch_solve")?;
        let roots = f_roots(z, &self.params)?;
        let pick = match (roots.len(), b) {
            (3, Branch::L) => roots[0],
            (3, Branch::M) => roots[1],
            (3, Branch::R) => roots[2],
            (1, Branch::L) if z < self.folds.left.z => roots[0],
            (1, Branch::R) if z > self.folds.right.z => roots[0],
            // within rounding of a fold: the two merging roots are one
            (2, Branch::L) => roots[0],
            (2, Branch::R) => roots[1],
            (2, Branch::M) => {
                if z - self.folds.left.z < self.folds.right.z - z {
                    roots[1]
                } else {
                    roots[0]
                }
            }
            (n, _) => {
                return Err(Error::domain("branch_solve", format!("{n} roots of f at z = {z} for branch {b}")));
            }
        };
        Ok(pick)
    }

    /// Warm-started X*(z): Newton from `guess`, accepted only if it stays on
    /// the branch (sign of f̃_x) and converges; otherwise a full solve.
    pub fn x_star_near(&self, z: f64, b: Branch, guess: f64) -> Result<f64> {
        self.check_domain(z, b, "branch_solve")?;
        let p = &self.params;
        let mut x = guess;
        for _ in 0..30 {
            let f = f_tilde(&x, &z, p)?;
            let (fx, _) = f_partials(x, z, p)?;
            let on_branch = match b {
                Branch::M => fx > 0.0,
                _ => fx < 0.0,
            };
            if !on_branch {
                break;
            }
            if f.abs() < 1e-11 {
                return Ok(x);
            }
            let dx = -f / fx;
            if dx.abs() > 5.0 {
                break;
            }
            x += dx;
        }
        self.x_star(z, b)
    }

    pub fn y(&self, z: f64) -> Result<f64> {
        y_solve(z, &self.params)
    }

    pub fn h_star(&self, z: f64, b: Branch) -> Result<f64> {
        let x = self.x_star(z, b)?;
        let y = self.y(z)?;
        h(&x, &y, &z, &self.params)
    }

    /// dH*/dz by the chain rule, given the branch point.
    pub fn dh_star_at(&self, x: f64, y: f64, z: f64) -> Result<f64> {
        let d = first_partials(x, y, z, &self.params)?;
        if d.f_x.abs() < 1e-8 {
            return Err(Error::NearSingular { op: "dh_star", which: "f_x", value: d.f_x.abs() });
        }
        if d.g_y.abs() < 1e-8 {
            return Err(Error::NearSingular { op: "dh_star", which: "g_y", value: d.g_y.abs() });
        }
        Ok(d.h_x * (-d.f_z / d.f_x) + d.h_y * (-d.g_z / d.g_y) + d.h_z)
    }

    pub fn dh_star(&self, z: f64, b: Branch) -> Result<f64> {
        let x = self.x_star(z, b)?;
        let y = self.y(z)?;
        self.dh_star_at(x, y, z)
    }

    /// Samples a branch on `zs` (points outside its domain are skipped).
    pub fn branch_table(&self, b: Branch, zs: &[f64]) -> Result<BranchTable> {
        let (lo, hi) = self.domain(b);
        let mut t = BranchTable { branch: b, z: vec![], x: vec![], y: vec![], domain: (lo, hi) };
        let mut guess = None;
        for &z in zs.iter().filter(|&&z| z > lo && z < hi) {
            let x = match guess {
                Some(g) => self.x_star_near(z, b, g)?,
                None => self.x_star(z, b)?,
            };
            guess = Some(x);
            t.z.push(z);
            t.x.push(x);
            t.y.push(self.y(z)?);
        }
        Ok(t)
    }

    /// Equilibria of the wave ODE: zeros of H^l and H^r located on a z-grid
    /// and polished by Newton on (f̃, g̃, h) = 0.
    pub fn find_equilibria(&self) -> Result<Vec<Equilibrium>> {
        let mut found = Vec::new();
        for b in [Branch::L, Branch::M, Branch::R] {
            let (lo, hi) = self.domain(b);
            let (lo, hi) = (lo.max(0.2) + 1e-6, hi - 1e-6);
            let n = 800;
            let zs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
            let mut prev: Option<(f64, f64)> = None;
            for &z in &zs {
                let hv = match self.h_star(z, b) {
                    Ok(v) => v,
                    Err(_) => {
                        prev = None;
                        continue;
                    }
                };
                if let Some((zp, hp)) = prev {
                    if (hp > 0.0) != (hv > 0.0) {
                        let zr = bracketed_newton(
                            |zz| {
                                let x = self.x_star(zz, b)?;
                                let y = self.y(zz)?;
                                Ok((h(&x, &y, &zz, &self.params)?, self.dh_star_at(x, y, zz)?))
                            },
                            zp,
                            z,
                            1e-13,
                            1e-16,
                        )?;
                        let seed = [self.x_star(zr, b)?, self.y(zr)?, zr];
                        let pt = equilibrium_newton(&seed, &self.params)?;
                        found.push((b, pt));
                    }
                }
                prev = Some((z, hv));
            }
        }
        let mut l: Vec<_> = found.iter().filter(|(b, _)| *b == Branch::L).collect();
        l.sort_by(|a, b| a.1[2].total_cmp(&b.1[2]));
        let mut out = Vec::new();
        let labels = ["p_l1", "p_l2"];
        for (i, (b, pt)) in l.iter().enumerate() {
            let label = labels.get(i).copied().unwrap_or("p_l");
            out.push(self.equilibrium(label, *b, *pt)?);
        }
        for (b, pt) in found.iter().filter(|(b, _)| *b != Branch::L) {
            let label = if *b == Branch::R { "p_r" } else { "p_m" };
            out.push(self.equilibrium(label, *b, *pt)?);
        }
        Ok(out)
    }

    fn equilibrium(&self, label: &'static str, b: Branch, pt: [f64; 3]) -> Result<Equilibrium> {
        let d = first_partials(pt[0], pt[1], pt[2], &self.params)?;
        let r = reduced_rhs(pt[0], pt[1], pt[2], &self.params)?;
        Ok(Equilibrium {
            label,
            branch: b,
            x: pt[0],
            y: pt[1],
            z: pt[2],
            w: 0.0,
            dh_dz: self.dh_star_at(pt[0], pt[1], pt[2])?,
            f_x: d.f_x,
            g_y: d.g_y,
            residual: r.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        })
    }

    /// H*(z) on each branch over `zs`, NaN outside the branch domain.
    pub fn h_star_csv(&self, zs: &[f64]) -> String {
        let rows = zs.iter().map(|&z| {
            let mut row = vec![z];
            for b in [Branch::L, Branch::M, Branch::R] {
                row.push(self.h_star(z, b).unwrap_or(f64::NAN));
            }
            row
        });
        csv_table(&["z", "H_l", "H_m", "H_r"], rows)
    }

    /// Fast eigenvalues f̃_x/c, g̃_y/c along every branch for a given c.
    pub fn eigen_vs_z_csv(&self, zs: &[f64], c: f64) -> String {
        let rows = zs.iter().map(|&z| {
            let mut row = vec![z];
            let y = self.y(z).unwrap_or(f64::NAN);
            for b in [Branch::L, Branch::M, Branch::R] {
                let v = self
                    .x_star(z, b)
                    .and_then(|x| f_partials(x, z, &self.params))
                    .map(|d| d.0 / c)
                    .unwrap_or(f64::NAN);
                row.push(v);
            }
            row.push(g_partials(y, z, &self.params).map(|d| d.0 / c).unwrap_or(f64::NAN));
            row
        });
        csv_table(&["z", "lambda1_l", "lambda1_m", "lambda1_r", "lambda2"], rows)
    }
}

/// Newton on (f̃, g̃, h) = 0.
pub fn equilibrium_newton(seed: &[f64; 3], p: &ParameterSet) -> Result<[f64; 3]> {
    let r = newton_solve(
        |v| Ok(reduced_rhs(v[0], v[1], v[2], p)?.to_vec()),
        |v| {
            let j = reduced_jacobian(v[0], v[1], v[2], p)?;
            Ok(DMatrix::from_fn(3, 3, |i, k| j[i][k]))
        },
        seed,
        1e-13,
        100,
    )?;
    Ok([r.x[0], r.x[1], r.x[2]])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchTable {
    pub branch: Branch,
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub domain: (f64, f64),
}

impl BranchTable {
    pub fn to_csv(&self) -> String {
        csv_table(&["z", "x", "y"], (0..self.z.len()).map(|i| [self.z[i], self.x[i], self.y[i]]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Saddle,
    UnstableNode,
    UnstableFocus,
    StableNode,
    StableFocus,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub label: &'static str,
    pub branch: Branch,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
    pub dh_dz: f64,
    pub f_x: f64,
    pub g_y: f64,
    /// Max-norm of (f̃, g̃, h) at the point.
    pub residual: f64,
}

/// Eigenvalues (re, im) of the slow Jacobian [[0, 1], [−dH/dz, c]].
pub fn slow_eigenvalues(dh_dz: f64, c: f64) -> [(f64, f64); 2] {
    let disc = c * c - 4.0 * dh_dz;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [((c - s) / 2.0, 0.0), ((c + s) / 2.0, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [(c / 2.0, -s / 2.0), (c / 2.0, s / 2.0)]
    }
}

impl Equilibrium {
    pub fn slow_eigenvalues(&self, c: f64) -> [(f64, f64); 2] {
        slow_eigenvalues(self.dh_dz, c)
    }

    /// (λ₁*, λ₂) = (f̃_x/c, g̃_y/c).
    pub fn fast_eigenvalues(&self, c: f64) -> (f64, f64) {
        (self.f_x / c, self.g_y / c)
    }

    pub fn classify(&self, c: f64) -> Stability {
        let det = self.dh_dz;
        let [(a, ai), (b, _)] = self.slow_eigenvalues(c);
        if det < 0.0 {
            Stability::Saddle
        } else if det == 0.0 {
            Stability::Degenerate
        } else if ai != 0.0 {
            if c > 0.0 {
                Stability::UnstableFocus
            } else {
                Stability::StableFocus
            }
        } else if a > 0.0 && b > 0.0 {
            Stability::UnstableNode
        } else {
            Stability::StableNode
        }
    }
}

/// Slow eigenvalues of each equilibrium over a c-grid.
pub fn eigen_vs_c_csv(eqs: &[Equilibrium], cs: &[f64]) -> String {
    let mut header = vec!["c".to_string()];
    for e in eqs {
        for part in ["minus_re", "minus_im", "plus_re", "plus_im"] {
            header.push(format!("{}_{part}", e.label));
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = cs.iter().map(|&c| {
        let mut row = vec![c];
        for e in eqs {
            let [m, pl] = e.slow_eigenvalues(c);
            row.extend([m.0, m.1, pl.0, pl.1]);
        }
        row
    });
    csv_table(&header, rows)
}
