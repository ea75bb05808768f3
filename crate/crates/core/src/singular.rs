//! Singular-limit front: the planar slow flow z' = w, w' = c w − H*(z) on
//! the lower and upper branches, glued on the fold section Σ = {z = z^R}.

use std::cell::Cell;

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrate::{integrate, secant_root, Crossing, IntegratorConfig, OdeSystem, SectionEvent, Trajectory};
use crate::io::csv_table;
use crate::manifold::{Branch, CriticalManifold, Equilibrium};
use crate::model::{g_partials, g_tilde, h};

pub const DEFAULT_SEED: f64 = 1e-6;
const SPAN: f64 = 1e7;

/// dz/dξ and dw/dξ of the slow flow on a branch.
pub fn slow_rhs(cm: &CriticalManifold, z: f64, w: f64, c: f64, b: Branch) -> Result<(f64, f64)> {
    Ok((w, c * w - cm.h_star(z, b)?))
}

/// H* on one branch with warm-started branch solves. On the lower branch
/// the value at and beyond the fold is frozen at the fold value, so steps
/// that overshoot Σ stay evaluable; the section event stops the orbit there.
pub(crate) struct BranchEval<'a> {
    cm: &'a CriticalManifold,
    branch: Branch,
    x_guess: Cell<Option<f64>>,
    y_guess: Cell<Option<f64>>,
}

impl<'a> BranchEval<'a> {
    pub fn new(cm: &'a CriticalManifold, branch: Branch) -> Self {
        BranchEval { cm, branch, x_guess: Cell::new(None), y_guess: Cell::new(None) }
    }

    fn y(&self, z: f64) -> Result<f64> {
        let p = &self.cm.params;
        if let Some(mut y) = self.y_guess.get() {
            for _ in 0..20 {
                let g = g_tilde(&y, &z, p)?;
                if g.abs() < 1e-12 {
                    self.y_guess.set(Some(y));
                    return Ok(y);
                }
                y -= g / g_partials(y, z, p)?.0;
            }
        }
        let y = self.cm.y(z)?;
        self.y_guess.set(Some(y));
        Ok(y)
    }

    /// (X*(z), Y(z)).
    pub fn point(&self, z: f64) -> Result<(f64, f64)> {
        let fold = self.cm.folds.right;
        let x = if self.branch == Branch::L && z >= fold.z - 1e-10 {
            fold.x
        } else {
            let x = match self.x_guess.get() {
                Some(g) => self.cm.x_star_near(z, self.branch, g)?,
                None => self.cm.x_star(z, self.branch)?,
            };
            self.x_guess.set(Some(x));
            x
        };
        let zy = if self.branch == Branch::L { z.min(fold.z) } else { z };
        Ok((x, self.y(zy)?))
    }

    pub fn h_star(&self, z: f64) -> Result<f64> {
        let (x, y) = self.point(z)?;
        let zz = if self.branch == Branch::L { z.min(self.cm.folds.right.z) } else { z };
        h(&x, &y, &zz, &self.cm.params)
    }
}

struct SlowSystem<'a> {
    eval: BranchEval<'a>,
    c: f64,
}

impl OdeSystem for SlowSystem<'_> {
    fn dim(&self) -> usize {
        2
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy[0] = y[1];
        dy[1] = self.c * y[1] - self.eval.h_star(y[0])?;
        Ok(())
    }
}

/// Saddle seed on the slow flow: the equilibrium shifted by s along the unit
/// eigenvector (unstable at p_l1, stable at p_r), oriented toward Σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaddleSeed {
    pub z: f64,
    pub w: f64,
    pub lambda: f64,
    pub v: [f64; 2],
}

pub fn manifold_seed(eq: &Equilibrium, c: f64, s: f64, toward_increasing_z: bool) -> Result<SaddleSeed> {
    if !(c > 0.0) {
        return Err(Error::Config(format!("wave speed must be positive, got {c}")));
    }
    let [(lm, im), (lp, _)] = eq.slow_eigenvalues(c);
    if im != 0.0 || !(lm < 0.0 && lp > 0.0) {
        return Err(Error::Spectrum(format!("{} is not a saddle at c = {c}", eq.label)));
    }
    // p_l1 leaves along the unstable direction, p_r is reached along the stable one
    let lambda = if eq.branch == Branch::L { lp } else { lm };
    let norm = (1.0 + lambda * lambda).sqrt();
    let mut v = [1.0 / norm, lambda / norm];
    if (v[0] > 0.0) != toward_increasing_z {
        v = [-v[0], -v[1]];
    }
    Ok(SaddleSeed { z: eq.z + s * v[0], w: s * v[1], lambda, v })
}

/// Residual ‖(A − λI)v‖ of the slow linearization at an equilibrium.
pub fn eigen_residual(eq: &Equilibrium, c: f64, seed: &SaddleSeed) -> f64 {
    let a = Matrix2::new(0.0, 1.0, -eq.dh_dz, c);
    let v = nalgebra::Vector2::new(seed.v[0], seed.v[1]);
    (a * v - v * seed.lambda).amax()
}

#[derive(Debug, Clone, Serialize)]
pub struct ShootingResult {
    pub c: f64,
    pub w_u: f64,
    pub w_s: f64,
    pub d: f64,
    /// Hits on Σ as (z, w).
    pub hit_u: [f64; 2],
    pub hit_s: [f64; 2],
    #[serde(skip)]
    pub unstable: Trajectory,
    #[serde(skip)]
    pub stable: Trajectory,
}

impl ShootingResult {
    /// The glued orbit as (ξ, z, w): Γ^u forward, then Γ^s from Σ toward p_r,
    /// with ξ shifted so the two pieces meet at the section hit of Γ^u.
    pub fn orbit_csv(&self) -> String {
        let mut rows: Vec<[f64; 3]> = self.unstable.t.iter().zip(&self.unstable.y).map(|(t, y)| [*t, y[0], y[1]]).collect();
        let t_join = *self.unstable.t.last().unwrap_or(&0.0);
        let s_end = *self.stable.t.last().unwrap_or(&0.0);
        for (t, y) in self.stable.t.iter().zip(&self.stable.y).rev().skip(1) {
            rows.push([t_join + (t - s_end), y[0], y[1]]);
        }
        csv_table(&["xi", "z", "w"], rows)
    }
}

/// Slow-flow shooting context.
pub struct SingularShooter<'a> {
    pub cm: &'a CriticalManifold,
    pub p_l1: Equilibrium,
    pub p_r: Equilibrium,
    pub seed: f64,
    pub cfg: IntegratorConfig,
}

impl<'a> SingularShooter<'a> {
    pub fn new(cm: &'a CriticalManifold) -> Result<Self> {
        let eqs = cm.find_equilibria()?;
        let get = |l: &str| {
            eqs.iter()
                .find(|e| e.label == l)
                .cloned()
                .ok_or_else(|| Error::domain("singular_shoot", format!("equilibrium {l} not found")))
        };
        Ok(SingularShooter {
            cm,
            p_l1: get("p_l1")?,
            p_r: get("p_r")?,
            seed: DEFAULT_SEED,
            cfg: IntegratorConfig { rel_tol: 1e-11, abs_tol: 1e-13, max_steps: 200_000, ..Default::default() },
        })
    }

    fn run(&self, c: f64, eq: &Equilibrium, backward: bool) -> Result<Trajectory> {
        let zr = self.cm.folds.right.z;
        let seed = manifold_seed(eq, c, self.seed, !backward)?;
        let sys = SlowSystem { eval: BranchEval::new(self.cm, eq.branch), c };
        let dir = if backward { Crossing::Decreasing } else { Crossing::Increasing };
        let events = [
            SectionEvent::new(0, zr, dir),
            // the orbit turns back in z before reaching Σ
            SectionEvent::new(1, 0.0, Crossing::Decreasing),
        ];
        let span = if backward { (0.0, -SPAN) } else { (0.0, SPAN) };
        let tr = integrate(&sys, &[seed.z, seed.w], span, &self.cfg, &events)?;
        match &tr.hit {
            Some(hit) if hit.event == 0 => Ok(tr),
            Some(hit) => Err(Error::NoHit {
                c,
                reason: format!("w changed sign at z = {:.6} on the {} branch", hit.y[0], eq.branch),
                turn_sign: if backward { 1.0 } else { -1.0 },
            }),
            None => Err(Error::NoHit { c, reason: "integration span exhausted".into(), turn_sign: 0.0 }),
        }
    }

    pub fn shoot(&self, c: f64) -> Result<ShootingResult> {
        let unstable = self.run(c, &self.p_l1, false)?;
        let stable = self.run(c, &self.p_r, true)?;
        let hu = unstable.hit.as_ref().expect("checked in run").y.clone();
        let hs = stable.hit.as_ref().expect("checked in run").y.clone();
        Ok(ShootingResult {
            c,
            w_u: hu[1],
            w_s: hs[1],
            d: hu[1] - hs[1],
            hit_u: [hu[0], hu[1]],
            hit_s: [hs[0], hs[1]],
            unstable,
            stable,
        })
    }

    /// d(c), with a failed Γ^u (turned back before Σ) reported as its sign.
    pub fn signed_distance(&self, c: f64) -> Result<SignedDistance> {
        match self.shoot(c) {
            Ok(r) => Ok(SignedDistance::Value(r.d)),
            Err(Error::NoHit { turn_sign, .. }) if turn_sign != 0.0 => Ok(SignedDistance::Turned(turn_sign)),
            Err(e) => Err(e),
        }
    }

    /// d(c) over a grid, evaluated in parallel.
    pub fn sweep(&self, cs: &[f64]) -> Vec<(f64, Result<SignedDistance>)>
    where
        Self: Sync,
    {
        cs.par_iter().map(|&c| (c, self.signed_distance(c))).collect()
    }

    /// c₀ with d(c₀) = 0 inside [lo, hi]: sample the bracket, isolate a sign
    /// change between two successful shots, then secant.
    pub fn find_c0(&self, lo: f64, hi: f64, samples: usize) -> Result<C0Result> {
        let n = samples.max(2);
        let cs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let sweep: Vec<(f64, SignedDistance)> =
            self.sweep(&cs).into_iter().map(|(c, r)| r.map(|d| (c, d))).collect::<Result<_>>()?;
        let sign = |d: &SignedDistance| d.sign();
        let k = (1..sweep.len())
            .find(|&i| sign(&sweep[i - 1].1) != sign(&sweep[i].1))
            .ok_or(Error::Bracket {
                lo,
                hi,
                f_lo: sweep[0].1.as_f64(),
                f_hi: sweep[sweep.len() - 1].1.as_f64(),
            })?;
        let (mut a, mut da) = sweep[k - 1];
        let (mut b, mut db) = sweep[k];
        // a turned-back endpoint carries no value; bisect toward a real one
        for _ in 0..60 {
            if matches!(da, SignedDistance::Value(_)) && matches!(db, SignedDistance::Value(_)) {
                break;
            }
            let m = 0.5 * (a + b);
            let dm = self.signed_distance(m)?;
            if dm.sign() == da.sign() {
                a = m;
                da = dm;
            } else {
                b = m;
                db = dm;
            }
        }
        let root = secant_root(
            |c| match self.signed_distance(c)? {
                SignedDistance::Value(d) => Ok(d),
                SignedDistance::Turned(s) => Ok(s * 1e3),
            },
            a,
            b,
            1e-12,
            100,
        )?;
        let result = self.shoot(root.root)?;
        Ok(C0Result { c0: root.root, d: result.d, sweep, history: root.history, result })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SignedDistance {
    Value(f64),
    /// Γ^u turned back before Σ; the sign the distance would have.
    Turned(f64),
}

impl SignedDistance {
    pub fn sign(&self) -> bool {
        self.as_f64() > 0.0
    }
    pub fn as_f64(&self) -> f64 {
        match *self {
            SignedDistance::Value(d) => d,
            SignedDistance::Turned(s) => s * f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct C0Result {
    pub c0: f64,
    pub d: f64,
    pub sweep: Vec<(f64, SignedDistance)>,
    pub history: Vec<(f64, f64)>,
    pub result: ShootingResult,
}

impl C0Result {
    pub fn distance_csv(&self) -> String {
        let rows = self.sweep.iter().map(|(c, d)| {
            let (v, turned) = match d {
                SignedDistance::Value(v) => (*v, 0.0),
                SignedDistance::Turned(s) => (f64::NAN, *s),
            };
            [*c, v, turned]
        });
        csv_table(&["c", "d", "turned"], rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParameterSet;
    use std::sync::OnceLock;

    fn cm() -> &'static CriticalManifold {
        static CM: OnceLock<CriticalManifold> = OnceLock::new();
        CM.get_or_init(|| CriticalManifold::new(&ParameterSet::default()).unwrap())
    }

    #[test]
    fn slow_rhs_values() {
        let m = cm();
        let sh = SingularShooter::new(m).unwrap();
        let (dz, dw) = slow_rhs(m, sh.p_l1.z, 0.0, 0.05, Branch::L).unwrap();
        assert_eq!(dz, 0.0);
        assert!(dw.abs() < 1e-10);
        let (_, dw) = slow_rhs(m, sh.p_r.z, 0.0, 0.05, Branch::R).unwrap();
        assert!(dw.abs() < 1e-10);
        let (_, dw) = slow_rhs(m, 12.0, 0.1, 0.05, Branch::L).unwrap();
        assert!((dw - (0.005 - m.h_star(12.0, Branch::L).unwrap())).abs() < 1e-15);
        assert!(slow_rhs(m, 19.0, 0.0, 0.05, Branch::L).is_err());
    }

    #[test]
    fn seeds_are_saddle_directions() {
        let sh = SingularShooter::new(cm()).unwrap();
        for eq in [&sh.p_l1, &sh.p_r] {
            let [(lm, _), (lp, _)] = eq.slow_eigenvalues(0.05);
            assert!(lm < 0.0 && lp > 0.0);
            let a = manifold_seed(eq, 0.05, 1e-6, true).unwrap();
            let b = manifold_seed(eq, 0.05, -1e-6, true).unwrap();
            assert!((a.z + b.z - 2.0 * eq.z).abs() < 1e-14 && (a.w + b.w).abs() < 1e-20);
            assert!(eigen_residual(eq, 0.05, &a) < 1e-12);
        }
    }

    #[test]
    fn distance_changes_sign_over_bracket() {
        let sh = SingularShooter::new(cm()).unwrap();
        let a = sh.signed_distance(0.04).unwrap();
        let b = sh.signed_distance(0.09).unwrap();
        assert_ne!(a.sign(), b.sign(), "{a:?} {b:?}");
    }

    #[test]
    fn hits_lie_on_section_and_orbit_is_monotone() {
        let sh = SingularShooter::new(cm()).unwrap();
        let r = sh.shoot(0.075).unwrap();
        let zr = cm().folds.right.z;
        assert!((r.hit_u[0] - zr).abs() < 1e-10);
        assert!((r.hit_s[0] - zr).abs() < 1e-10);
        for tr in [&r.unstable, &r.stable] {
            for y in &tr.y {
                assert!(y[1] > 0.0);
            }
        }
    }
}
