//! Adaptive ODE integration: an explicit Dormand–Prince 5(4) pair, an
//! L-stable Rosenbrock 2(3) method for stiff problems, cubic Hermite dense
//! output, section events, plus Newton and secant root finders.

mod dopri;
mod rosenbrock;
mod solve;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::BandMatrix;

pub use solve::{bracketed_newton, newton_solve, secant_root, NewtonResult, SecantResult};

/// Which linearly implicit method `stiff` selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum StiffScheme {
    /// Order 2 with an order-3 error estimate.
    #[default]
    Rosenbrock23,
    /// Order 2 with γ = 1 + 1/√2; damps expanding fast modes at moderate hλ.
    Ros2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Steps never shrink below this; a step at the floor is accepted
    /// whatever its error estimate.
    pub min_step: f64,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
    pub stiff: bool,
    pub scheme: StiffScheme,
    /// Components that enter the local error estimate; all when `None`.
    /// Leaving out fast components lets an L-stable method step over modes
    /// that expand in the integration direction, damping them instead of
    /// resolving their growth.
    pub controlled: Option<Vec<usize>>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            max_step: f64::INFINITY,
            min_step: 0.0,
            initial_step: None,
            max_steps: 1_000_000,
            stiff: false,
            scheme: StiffScheme::Rosenbrock23,
            controlled: None,
        }
    }
}

impl IntegratorConfig {
    pub fn stiff() -> Self {
        IntegratorConfig { stiff: true, ..Self::default() }
    }

    /// Defaults used for network simulations.
    pub fn pde() -> Self {
        IntegratorConfig { rel_tol: 1e-6, abs_tol: 1e-8, stiff: true, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if let Some(c) = &self.controlled {
            if c.is_empty() {
                return Err(Error::Config("controlled component list is empty".into()));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        if !(self.min_step >= 0.0 && self.min_step <= self.max_step) {
            return Err(Error::Config("min_step must lie in [0, max_step]".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::Config("max_step must be positive".into()));
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config("initial_step must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Jacobian in the storage the stiff solver should use.
#[derive(Debug, Clone)]
pub enum Jacobian {
    Dense(DMatrix<f64>),
    Banded(BandMatrix),
}

/// An autonomous or time-dependent first-order system y' = F(t, y).
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Analytic Jacobian, if available.
    fn jacobian(&self, _t: f64, _y: &[f64]) -> Option<Result<Jacobian>> {
        None
    }

    /// Band structure used for the finite-difference Jacobian fallback.
    fn bandwidth(&self) -> Option<(usize, usize)> {
        None
    }
}

/// System built from closures.
pub struct FnSystem<F, J = fn(f64, &[f64]) -> Result<DMatrix<f64>>> {
    dim: usize,
    f: F,
    jac: Option<J>,
}

impl<F> FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnSystem { dim, f, jac: None }
    }
}

impl<F, J> FnSystem<F, J>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
    J: Fn(f64, &[f64]) -> Result<DMatrix<f64>>,
{
    pub fn with_jacobian(dim: usize, f: F, jac: J) -> Self {
        FnSystem { dim, f, jac: Some(jac) }
    }
}

impl<F, J> OdeSystem for FnSystem<F, J>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
    J: Fn(f64, &[f64]) -> Result<DMatrix<f64>>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        (self.f)(t, y, dy)
    }
    fn jacobian(&self, t: f64, y: &[f64]) -> Option<Result<Jacobian>> {
        self.jac.as_ref().map(|j| j(t, y).map(Jacobian::Dense))
    }
}

/// Finite-difference Jacobian, dense or banded with column grouping.
pub fn fd_jacobian<S: OdeSystem + ?Sized>(sys: &S, t: f64, y: &[f64], f0: &[f64]) -> Result<Jacobian> {
    let n = y.len();
    let mut yp = y.to_vec();
    let mut fp = vec![0.0; n];
    let delta = |v: f64| f64::EPSILON.sqrt() * v.abs().max(1e-3);
    match sys.bandwidth() {
        Some((kl, ku)) => {
            let mut jac = BandMatrix::zeros(n, kl, ku);
            let stride = kl + ku + 1;
            for g in 0..stride.min(n) {
                let cols: Vec<usize> = (g..n).step_by(stride).collect();
                let mut steps = Vec::with_capacity(cols.len());
                for &j in &cols {
                    let d = delta(y[j]);
                    yp[j] = y[j] + d;
                    steps.push(yp[j] - y[j]);
                }
                sys.rhs(t, &yp, &mut fp)?;
                for (&j, &d) in cols.iter().zip(&steps) {
                    yp[j] = y[j];
                    for i in j.saturating_sub(ku)..=(j + kl).min(n - 1) {
                        jac.set(i, j, (fp[i] - f0[i]) / d);
                    }
                }
            }
            Ok(Jacobian::Banded(jac))
        }
        None => {
            let mut jac = DMatrix::zeros(n, n);
            for j in 0..n {
                let d = delta(y[j]);
                yp[j] = y[j] + d;
                let d = yp[j] - y[j];
                sys.rhs(t, &yp, &mut fp)?;
                yp[j] = y[j];
                for i in 0..n {
                    jac[(i, j)] = (fp[i] - f0[i]) / d;
                }
            }
            Ok(Jacobian::Dense(jac))
        }
    }
}

/// Cubic Hermite interpolant over one accepted step.
#[derive(Debug, Clone)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
}

impl Segment {
    pub fn eval_component(&self, t: f64, i: usize) -> f64 {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y0[i] + h10 * h * self.f0[i] + h01 * self.y1[i] + h11 * h * self.f1[i]
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        (0..self.y0.len()).map(|i| self.eval_component(t, i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Crossing {
    Increasing,
    Decreasing,
    Any,
}

/// Terminal event: coordinate `index` reaches `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectionEvent {
    pub index: usize,
    pub target: f64,
    pub direction: Crossing,
}

impl SectionEvent {
    pub fn new(index: usize, target: f64, direction: Crossing) -> Self {
        SectionEvent { index, target, direction }
    }

    fn crosses(&self, a: f64, b: f64) -> bool {
        let (ga, gb) = (a - self.target, b - self.target);
        match self.direction {
            Crossing::Increasing => ga < 0.0 && gb >= 0.0,
            Crossing::Decreasing => ga > 0.0 && gb <= 0.0,
            Crossing::Any => (ga < 0.0 && gb >= 0.0) || (ga > 0.0 && gb <= 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventHit {
    /// Index into the event list that fired.
    pub event: usize,
    pub t: f64,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub jac_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub hit: Option<EventHit>,
    pub stats: Stats,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.y.last().expect("trajectory holds at least the initial state")
    }

    /// CSV with a `t` column and one column per state component.
    pub fn to_csv(&self, names: &[&str]) -> String {
        let mut s = String::from("t");
        for (i, _) in self.y[0].iter().enumerate() {
            match names.get(i) {
                Some(n) => s.push_str(&format!(",{n}")),
                None => s.push_str(&format!(",y{i}")),
            }
        }
        s.push('\n');
        for (t, y) in self.t.iter().zip(&self.y) {
            let _ = write!(s, "{t:.16e}");
            for v in y {
                let _ = write!(s, ",{v:.16e}");
            }
            s.push('\n');
        }
        s
    }
}

pub(crate) struct Attempt {
    pub y: Vec<f64>,
    pub f: Vec<f64>,
    pub err: f64,
}

/// One-step method used by [`Stepper`].
pub(crate) trait Method {
    /// Error-estimate order + 1 used in the step-size exponent.
    fn error_exponent(&self) -> f64;
    /// Called once before retrying steps from a new accepted point.
    fn new_point(&mut self) {}
    fn attempt<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        cfg: &IntegratorConfig,
        t: f64,
        y: &[f64],
        f: &[f64],
        h: f64,
        stats: &mut Stats,
    ) -> Result<Attempt>;
}

pub(crate) fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], cfg: &IntegratorConfig) -> f64 {
    let mut m = 0.0f64;
    for i in 0..err.len() {
        if let Some(c) = &cfg.controlled {
            if !c.contains(&i) {
                continue;
            }
        }
        let sc = cfg.abs_tol + cfg.rel_tol * y0[i].abs().max(y1[i].abs());
        m = m.max((err[i] / sc).abs());
    }
    if m.is_nan() {
        f64::INFINITY
    } else {
        m
    }
}

enum AnyMethod {
    Dopri(dopri::Dopri5),
    Rosenbrock(rosenbrock::Rosenbrock23),
    Ros2(rosenbrock::Ros2),
}

/// Low-level adaptive stepper. Each call to [`Stepper::step`] advances one
/// accepted step (never past `t_end`) and exposes the step's interpolant.
pub struct Stepper<'a, S: OdeSystem + ?Sized> {
    sys: &'a S,
    cfg: IntegratorConfig,
    method: AnyMethod,
    t: f64,
    y: Vec<f64>,
    f: Vec<f64>,
    h: f64,
    dir: f64,
    t_end: f64,
    err_old: f64,
    stats: Stats,
    segment: Option<Segment>,
}

impl<'a, S: OdeSystem + ?Sized> Stepper<'a, S> {
    pub fn new(sys: &'a S, t0: f64, y0: &[f64], t_end: f64, cfg: &IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        if t0 == t_end {
            return Err(Error::Config("empty integration span".into()));
        }
        if y0.len() != sys.dim() {
            return Err(Error::Config(format!("state has {} components, system expects {}", y0.len(), sys.dim())));
        }
        let mut f = vec![0.0; y0.len()];
        sys.rhs(t0, y0, &mut f)?;
        let method = if cfg.stiff {
            match cfg.scheme {
                StiffScheme::Rosenbrock23 => AnyMethod::Rosenbrock(rosenbrock::Rosenbrock23::new(y0.len())),
                StiffScheme::Ros2 => AnyMethod::Ros2(rosenbrock::Ros2::new(y0.len())),
            }
        } else {
            AnyMethod::Dopri(dopri::Dopri5::new(y0.len()))
        };
        let dir = (t_end - t0).signum();
        let mut st = Stepper {
            sys,
            cfg: cfg.clone(),
            method,
            t: t0,
            y: y0.to_vec(),
            f,
            h: 0.0,
            dir,
            t_end,
            err_old: 1e-4,
            stats: Stats { rhs_evals: 1, ..Stats::default() },
            segment: None,
        };
        st.h = match cfg.initial_step {
            Some(h) => h.min(cfg.max_step) * dir,
            None => st.initial_step()?,
        };
        Ok(st)
    }

    fn order(&self) -> f64 {
        match &self.method {
            AnyMethod::Dopri(m) => m.error_exponent(),
            AnyMethod::Rosenbrock(m) => m.error_exponent(),
            AnyMethod::Ros2(m) => m.error_exponent(),
        }
    }

    /// Hairer's starting-step heuristic.
    fn initial_step(&mut self) -> Result<f64> {
        let n = self.y.len();
        let sc: Vec<f64> = self.y.iter().map(|v| self.cfg.abs_tol + self.cfg.rel_tol * v.abs()).collect();
        let rms = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let d0 = rms(&self.y);
        let d1 = rms(&self.f);
        let span = (self.t_end - self.t).abs();
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(span).min(self.cfg.max_step);
        let y1: Vec<f64> = self.y.iter().zip(&self.f).map(|(y, f)| y + self.dir * h0 * f).collect();
        let mut f1 = vec![0.0; n];
        let d2 = match self.sys.rhs(self.t + self.dir * h0, &y1, &mut f1) {
            Ok(()) => {
                self.stats.rhs_evals += 1;
                let diff: Vec<f64> = f1.iter().zip(&self.f).map(|(a, b)| a - b).collect();
                rms(&diff) / h0
            }
            Err(_) => return Ok(self.dir * h0 * 1e-3),
        };
        let p = self.order();
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / p)
        };
        Ok(self.dir * (100.0 * h0).min(h1).min(span).min(self.cfg.max_step))
    }

    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn dydt(&self) -> &[f64] {
        &self.f
    }
    pub fn stats(&self) -> &Stats {
        &self.stats
    }
    pub fn done(&self) -> bool {
        self.t == self.t_end
    }
    /// Interpolant of the most recent accepted step.
    pub fn segment(&self) -> Option<&Segment> {
        self.segment.as_ref()
    }

    /// Replaces the current state (e.g. after a discontinuous change of the
    /// right-hand side) and re-evaluates the derivative.
    pub fn reset(&mut self, t: f64, y: &[f64]) -> Result<()> {
        self.t = t;
        self.y.copy_from_slice(y);
        self.sys.rhs(t, y, &mut self.f)?;
        self.stats.rhs_evals += 1;
        self.segment = None;
        self.err_old = 1e-4;
        match &mut self.method {
            AnyMethod::Rosenbrock(m) => m.new_point(),
            AnyMethod::Ros2(m) => m.new_point(),
            AnyMethod::Dopri(_) => {}
        }
        Ok(())
    }

    fn underflow(&self, h: f64) -> bool {
        h.abs() < 16.0 * f64::EPSILON * self.t.abs().max(1e-300) || h.abs() < 1e-300
    }

    /// Advances one accepted step.
    pub fn step(&mut self) -> Result<()> {
        if self.done() {
            return Err(Error::Config("integration already reached its end".into()));
        }
        let expo = 1.0 / self.order();
        let safe = 0.9;
        let mut rejected_since_accept = false;
        match &mut self.method {
            AnyMethod::Rosenbrock(m) => m.new_point(),
            AnyMethod::Ros2(m) => m.new_point(),
            AnyMethod::Dopri(_) => {}
        }
        loop {
            if self.stats.accepted + self.stats.rejected >= self.cfg.max_steps {
                return Err(Error::StepBudget { t: self.t, max_steps: self.cfg.max_steps, state: self.y.clone() });
            }
            let mut h = self.h.abs().min(self.cfg.max_step).max(self.cfg.min_step) * self.dir;
            let remaining = self.t_end - self.t;
            let last = h.abs() >= remaining.abs();
            if last {
                h = remaining;
            }
            if self.underflow(h) && !last {
                return Err(Error::StepUnderflow { t: self.t, h, state: self.y.clone() });
            }
            let res = match &mut self.method {
                AnyMethod::Dopri(m) => m.attempt(self.sys, &self.cfg, self.t, &self.y, &self.f, h, &mut self.stats),
                AnyMethod::Rosenbrock(m) => m.attempt(self.sys, &self.cfg, self.t, &self.y, &self.f, h, &mut self.stats),
                AnyMethod::Ros2(m) => m.attempt(self.sys, &self.cfg, self.t, &self.y, &self.f, h, &mut self.stats),
            };
            let att = match res {
                Ok(a) => a,
                // a stage left the domain of the right-hand side: shrink
                Err(e @ (Error::Domain { .. } | Error::Singular(_))) => {
                    if h.abs() <= self.cfg.min_step {
                        return Err(e);
                    }
                    self.stats.rejected += 1;
                    self.h = h * 0.25;
                    rejected_since_accept = true;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let err = att.err;
            let floor = self.cfg.min_step > 0.0 && h.abs() <= self.cfg.min_step;
            if err <= 1.0 || (floor && err.is_finite()) {
                let t_new = if last { self.t_end } else { self.t + h };
                let mut fac = err.max(1e-10).powf(expo);
                if matches!(self.method, AnyMethod::Dopri(_)) {
                    // PI control
                    let beta = 0.04;
                    fac = err.max(1e-10).powf(expo - 0.75 * beta) / self.err_old.powf(beta);
                }
                let mut grow = (safe / fac).clamp(0.2, 5.0);
                if rejected_since_accept {
                    grow = grow.min(1.0);
                }
                self.err_old = err.max(1e-4);
                self.segment = Some(Segment {
                    t0: self.t,
                    t1: t_new,
                    y0: std::mem::take(&mut self.y),
                    y1: att.y.clone(),
                    f0: std::mem::take(&mut self.f),
                    f1: att.f.clone(),
                });
                self.t = t_new;
                self.y = att.y;
                self.f = att.f;
                if !last || grow > 1.0 {
                    self.h = h * grow;
                }
                self.stats.accepted += 1;
                return Ok(());
            }
            self.stats.rejected += 1;
            rejected_since_accept = true;
            let shrink = if err.is_finite() { (safe * err.powf(-expo)).clamp(0.1, 0.9) } else { 0.1 };
            self.h = h * shrink;
        }
    }

    /// Takes one step of exactly `h` from the current point without error
    /// control or state change; used to polish event locations.
    pub fn probe(&mut self, h: f64) -> Result<Vec<f64>> {
        let res = match &mut self.method {
            AnyMethod::Dopri(m) => m.attempt(self.sys, &self.cfg, self.t, &self.y, &self.f, h, &mut self.stats),
            AnyMethod::Rosenbrock(m) => {
                m.new_point();
                m.attempt(self.sys, &self.cfg, self.t, &self.y, &self.f, h, &mut self.stats)
            }
            AnyMethod::Ros2(m) => {
                m.new_point();
                m.attempt(self.sys, &self.cfg, self.t, &self.y, &self.f, h, &mut self.stats)
            }
        };
        Ok(res?.y)
    }
}

/// Locates the first crossing of any event on `seg`, refined on the
/// interpolant until |coordinate − target| < 1e-12 (or the time bracket
/// collapses).
pub fn locate_event(seg: &Segment, events: &[SectionEvent]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, ev) in events.iter().enumerate() {
        if !ev.crosses(seg.y0[ev.index], seg.y1[ev.index]) {
            continue;
        }
        let g = |t: f64| seg.eval_component(t, ev.index) - ev.target;
        let (mut a, mut b) = (seg.t0, seg.t1);
        let (mut ga, mut gb) = (g(a), g(b));
        let mut side = 0i32;
        let mut tc = b;
        for _ in 0..200 {
            // Illinois variant of regula falsi
            tc = if gb != ga { b - gb * (b - a) / (gb - ga) } else { 0.5 * (a + b) };
            if !(tc > a.min(b) && tc < a.max(b)) {
                tc = 0.5 * (a + b);
            }
            let gc = g(tc);
            if gc.abs() < 1e-13 * (1.0 + ev.target.abs()) || (b - a).abs() < 1e-15 * (1.0 + tc.abs()) {
                break;
            }
            if (gc > 0.0) == (gb > 0.0) {
                b = tc;
                gb = gc;
                if side == -1 {
                    ga *= 0.5;
                }
                side = -1;
            } else {
                a = tc;
                ga = gc;
                if side == 1 {
                    gb *= 0.5;
                }
                side = 1;
            }
        }
        let earlier = match best {
            None => true,
            Some((_, tb)) => (tc - seg.t0).abs() < (tb - seg.t0).abs(),
        };
        if earlier {
            best = Some((k, tc));
        }
    }
    best
}

/// Integrates from `span.0` to `span.1` (backward if span.1 < span.0),
/// stopping at the first event crossing. The hit state is obtained by an
/// exact step of the method onto the crossing time, corrected by Newton in
/// time so the event coordinate matches its target.
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    span: (f64, f64),
    cfg: &IntegratorConfig,
    events: &[SectionEvent],
) -> Result<Trajectory> {
    let mut st = Stepper::new(sys, span.0, y0, span.1, cfg)?;
    let mut t = vec![span.0];
    let mut y = vec![y0.to_vec()];
    let mut hit = None;
    while !st.done() {
        st.step()?;
        let seg = st.segment().expect("accepted step has a segment").clone();
        if let Some((k, te)) = locate_event(&seg, events) {
            let ev = events[k];
            let ye = polish_event(&mut st, &seg, &ev, te)?;
            t.push(ye.0);
            y.push(ye.1.clone());
            hit = Some(EventHit { event: k, t: ye.0, y: ye.1 });
            break;
        }
        t.push(st.t());
        y.push(st.y().to_vec());
    }
    Ok(Trajectory { t, y, hit, stats: st.stats().clone() })
}

fn polish_event<S: OdeSystem + ?Sized>(
    st: &mut Stepper<S>,
    seg: &Segment,
    ev: &SectionEvent,
    te: f64,
) -> Result<(f64, Vec<f64>)> {
    if matches!(st.method, AnyMethod::Ros2(_)) {
        // A short probe step could put hλ near the stability function's pole
        // for expanding modes, so keep the interpolated state. Components
        // outside the error control are interpolated linearly: their stored
        // derivatives amplify tiny offsets by the fast rates.
        let mut y = seg.eval(te);
        if let Some(ctrl) = &st.cfg.controlled {
            let th = (te - seg.t0) / (seg.t1 - seg.t0);
            for (i, v) in y.iter_mut().enumerate() {
                if !ctrl.contains(&i) {
                    *v = seg.y0[i] + th * (seg.y1[i] - seg.y0[i]);
                }
            }
        }
        return Ok((te, y));
    }
    // restart from the segment's left end
    let (t_now, y_now) = (st.t, st.y.clone());
    st.reset(seg.t0, &seg.y0)?;
    let mut tc = te;
    let mut best = (te, seg.eval(te));
    let mut best_g = (best.1[ev.index] - ev.target).abs();
    let mut f = vec![0.0; seg.y0.len()];
    for _ in 0..8 {
        let h = tc - seg.t0;
        if h == 0.0 {
            break;
        }
        let yc = match st.probe(h) {
            Ok(v) => v,
            Err(_) => break,
        };
        let g = yc[ev.index] - ev.target;
        if g.abs() <= best_g {
            best_g = g.abs();
            best = (tc, yc.clone());
        }
        if g.abs() < 1e-13 * (1.0 + ev.target.abs()) {
            break;
        }
        if st.sys.rhs(tc, &yc, &mut f).is_err() || f[ev.index] == 0.0 {
            break;
        }
        let tn = tc - g / f[ev.index];
        if !(tn.is_finite()) || (tn - seg.t0) * (seg.t1 - seg.t0) < 0.0 {
            break;
        }
        tc = tn;
    }
    st.reset(t_now, &y_now)?;
    Ok(best)
}
