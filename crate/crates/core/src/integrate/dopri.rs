use super::{error_norm, Attempt, IntegratorConfig, Method, OdeSystem, Stats};
use crate::error::Result;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// difference between the 5th- and 4th-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dormand–Prince 5(4) with first-same-as-last.
pub(crate) struct Dopri5 {
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl Dopri5 {
    pub fn new(n: usize) -> Self {
        Dopri5 { k: vec![vec![0.0; n]; 7], tmp: vec![0.0; n] }
    }
}

impl Method for Dopri5 {
    fn error_exponent(&self) -> f64 {
        5.0
    }

    fn attempt<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        cfg: &IntegratorConfig,
        t: f64,
        y: &[f64],
        f: &[f64],
        h: f64,
        stats: &mut Stats,
    ) -> Result<Attempt> {
        let n = y.len();
        self.k[0].copy_from_slice(f);
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * self.k[j][i];
                }
                self.tmp[i] = y[i] + h * acc;
            }
            stats.rhs_evals += 1;
            sys.rhs(t + C[s] * h, &self.tmp, &mut self.k[s])?;
        }
        // stage 7 was evaluated at the new solution (FSAL)
        let y_new = self.tmp.clone();
        let mut err = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for s in 0..7 {
                acc += E[s] * self.k[s][i];
            }
            err[i] = h * acc;
        }
        let e = error_norm(&err, y, &y_new, cfg);
        Ok(Attempt { y: y_new, f: self.k[6].clone(), err: e })
    }
}
