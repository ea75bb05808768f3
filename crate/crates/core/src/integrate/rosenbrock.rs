use nalgebra::{DMatrix, DVector};

use super::{error_norm, fd_jacobian, Attempt, IntegratorConfig, Jacobian, Method, OdeSystem, Stats};
use crate::error::{Error, Result};
use crate::linalg::BandLu;

enum Factor {
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Banded(BandLu),
}

impl Factor {
    fn solve(&self, b: &mut [f64]) -> Result<()> {
        match self {
            Factor::Dense(lu) => {
                let x = lu
                    .solve(&DVector::from_column_slice(b))
                    .ok_or(Error::Singular("Rosenbrock iteration matrix"))?;
                b.copy_from_slice(x.as_slice());
            }
            Factor::Banded(lu) => lu.solve_in_place(b),
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("Rosenbrock iteration matrix"));
        }
        Ok(())
    }
}

fn factor(jac: &Jacobian, hg: f64, n: usize) -> Result<Factor> {
    Ok(match jac {
        Jacobian::Dense(j) => Factor::Dense((DMatrix::identity(n, n) - j * hg).lu()),
        Jacobian::Banded(j) => Factor::Banded(j.scaled_plus_identity(-hg, 1.0).lu()?),
    })
}

fn ensure_jacobian<S: OdeSystem + ?Sized>(
    jac: &mut Option<Jacobian>,
    sys: &S,
    t: f64,
    y: &[f64],
    f0: &[f64],
    stats: &mut Stats,
) -> Result<()> {
    if jac.is_none() {
        stats.jac_evals += 1;
        let j = match sys.jacobian(t, y) {
            Some(j) => j?,
            None => {
                stats.rhs_evals += y.len();
                fd_jacobian(sys, t, y, f0)?
            }
        };
        *jac = Some(j);
    }
    Ok(())
}

/// Two-stage L-stable Rosenbrock method of order 2 with an embedded
/// third-order error estimate (the pair used by MATLAB's ode23s).
pub(crate) struct Rosenbrock23 {
    jac: Option<Jacobian>,
}

impl Rosenbrock23 {
    pub fn new(_n: usize) -> Self {
        Rosenbrock23 { jac: None }
    }
}

const D: f64 = 0.292_893_218_813_452_47; // 1/(2 + √2)
const E32: f64 = 7.414_213_562_373_095; // 6 + √2

impl Method for Rosenbrock23 {
    fn error_exponent(&self) -> f64 {
        3.0
    }

    fn new_point(&mut self) {
        self.jac = None;
    }

    fn attempt<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        cfg: &IntegratorConfig,
        t: f64,
        y: &[f64],
        f0: &[f64],
        h: f64,
        stats: &mut Stats,
    ) -> Result<Attempt> {
        let n = y.len();
        ensure_jacobian(&mut self.jac, sys, t, y, f0, stats)?;
        let w = factor(self.jac.as_ref().unwrap(), h * D, n)?;
        let mut k1 = f0.to_vec();
        w.solve(&mut k1)?;
        let ymid: Vec<f64> = (0..n).map(|i| y[i] + 0.5 * h * k1[i]).collect();
        let mut f1 = vec![0.0; n];
        stats.rhs_evals += 1;
        sys.rhs(t + 0.5 * h, &ymid, &mut f1)?;
        let mut k2: Vec<f64> = (0..n).map(|i| f1[i] - k1[i]).collect();
        w.solve(&mut k2)?;
        for i in 0..n {
            k2[i] += k1[i];
        }
        let y_new: Vec<f64> = (0..n).map(|i| y[i] + h * k2[i]).collect();
        let mut f2 = vec![0.0; n];
        stats.rhs_evals += 1;
        sys.rhs(t + h, &y_new, &mut f2)?;
        let mut k3: Vec<f64> =
            (0..n).map(|i| f2[i] - E32 * (k2[i] - f1[i]) - 2.0 * (k1[i] - f0[i])).collect();
        w.solve(&mut k3)?;
        let err: Vec<f64> = (0..n).map(|i| h / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i])).collect();
        let e = error_norm(&err, y, &y_new, cfg);
        Ok(Attempt { y: y_new, f: f2, err: e })
    }
}

/// Second-order L-stable Rosenbrock method with γ = 1 + 1/√2, with a
/// linearly implicit Euler solution as the embedded estimate. Its stability
/// function stays below one on the positive real axis once hλ ≳ 1.6, so
/// with large steps it damps modes that grow in the integration direction.
pub(crate) struct Ros2 {
    jac: Option<Jacobian>,
}

impl Ros2 {
    pub fn new(_n: usize) -> Self {
        Ros2 { jac: None }
    }
}

const GAMMA2: f64 = 1.707_106_781_186_547_5; // 1 + 1/√2

impl Method for Ros2 {
    fn error_exponent(&self) -> f64 {
        2.0
    }

    fn new_point(&mut self) {
        self.jac = None;
    }

    fn attempt<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        cfg: &IntegratorConfig,
        t: f64,
        y: &[f64],
        f0: &[f64],
        h: f64,
        stats: &mut Stats,
    ) -> Result<Attempt> {
        let n = y.len();
        ensure_jacobian(&mut self.jac, sys, t, y, f0, stats)?;
        let w = factor(self.jac.as_ref().unwrap(), h * GAMMA2, n)?;
        let mut k1 = f0.to_vec();
        w.solve(&mut k1)?;
        let y1: Vec<f64> = (0..n).map(|i| y[i] + h * k1[i]).collect();
        let mut f1 = vec![0.0; n];
        stats.rhs_evals += 1;
        sys.rhs(t + h, &y1, &mut f1)?;
        let mut k2: Vec<f64> = (0..n).map(|i| f1[i] - 2.0 * k1[i]).collect();
        w.solve(&mut k2)?;
        let y_new: Vec<f64> = (0..n).map(|i| y[i] + h * (1.5 * k1[i] + 0.5 * k2[i])).collect();
        let mut f2 = vec![0.0; n];
        stats.rhs_evals += 1;
        sys.rhs(t + h, &y_new, &mut f2)?;
        let err: Vec<f64> = (0..n).map(|i| 0.5 * h * (k1[i] + k2[i])).collect();
        let e = error_norm(&err, y, &y_new, cfg);
        Ok(Attempt { y: y_new, f: f2, err: e })
    }
}
